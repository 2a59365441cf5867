use avgm_core::avgm::AvgmLearner;
use avgm_core::env::{EnvDims, Environment, MatrixGame, PayoffTensor};
use avgm_core::harness::replay::{Episode, EpisodeBatch};
use avgm_core::harness::rollout;
use avgm_core::harness::Learner;
use avgm_core::nn::NetConfig;
use avgm_core::rng::Rng;
use std::time::Instant;

fn main() {
    let net = NetConfig {
        rnn_hidden: 16, mixing_hidden: 8, encoder_hidden: 16, head_hidden: 16, z_categories: 32,
        ..NetConfig::default()
    };
    let mut game = MatrixGame::new(PayoffTensor::three_action(1.0, 2.0));
    let dims = EnvDims::of(&game);
    let mut init = Rng::new(1);
    let mut learner = AvgmLearner::new(dims, net, &mut init).unwrap();
    let mut rng = Rng::new(2);
    let mut eps: Vec<Episode> = Vec::new();
    for i in 0..100 {
        let (e, _) = rollout(&learner, &mut game, i, 1.0, &mut rng, None).unwrap();
        eps.push(e);
    }
    let batch = EpisodeBatch::new(eps, 3);

    let t0 = Instant::now(); let mut x = 0.0;
    for _ in 0..200 { x += learner.update(&batch, 0.99).unwrap().td_loss; }
    println!("update: {:.3} ms each (x={x:.3})", t0.elapsed().as_secs_f64() * 1000.0 / 200.0);

    let t0 = Instant::now();
    for i in 0..2000 { let _ = rollout(&learner, &mut game, i, 0.5, &mut rng, None).unwrap(); }
    println!("rollout: {:.4} ms each", t0.elapsed().as_secs_f64() * 1000.0 / 2000.0);

    let t0 = Instant::now();
    for _ in 0..200 { let _ = learner.td_loss(&batch, 0.99); }
    println!("td_loss only: {:.3} ms", t0.elapsed().as_secs_f64() * 1000.0 / 200.0);
    let t0 = Instant::now();
    for _ in 0..200 { let _ = learner.policy_loss(&batch); }
    println!("policy_loss only: {:.3} ms", t0.elapsed().as_secs_f64() * 1000.0 / 200.0);
    let t0 = Instant::now();
    for _ in 0..200 { let _ = learner.encoder_loss(&batch); }
    println!("encoder_loss only: {:.3} ms", t0.elapsed().as_secs_f64() * 1000.0 / 200.0);
}
