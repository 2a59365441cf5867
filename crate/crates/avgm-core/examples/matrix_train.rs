use avgm_core::avgm::{AvgmLearner, MarginalMode};
use avgm_core::baselines::{BaselineKind, BaselineLearner};
use avgm_core::env::{EnvDims, MatrixGame, PayoffTensor};
use avgm_core::harness::{train, HarnessConfig, Learner, MemoryObserver, RunSeed};
use avgm_core::nn::NetConfig;
use avgm_core::rng::{streams, Rng};
use std::time::Instant;

fn cfg() -> (NetConfig, HarnessConfig) {
    let net = NetConfig {
        rnn_hidden: 12,
        mixing_hidden: 8,
        encoder_hidden: 12,
        head_hidden: 12,
        z_categories: 16,
        ..NetConfig::default()
    };
    let harness = HarnessConfig {
        total_steps: 40_000,
        eps_anneal_steps: 20_000,
        eval_interval: 10_000,
        ..HarnessConfig::default()
    };
    (net, harness)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = args.get(1).map(|s| s.as_str()).unwrap_or("avgm");
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    for seed in 1..=seeds {
        let t0 = Instant::now();
        let mut game = MatrixGame::new(PayoffTensor::three_action(1.0, 2.0));
        let dims = EnvDims::of(&game);
        let (net, harness) = cfg();
        let mut run_seed = RunSeed::new(seed);
        let mut init = Rng::derive(seed, streams::INIT);
        let mut learner: Box<dyn Learner> = match method {
            "avgm" => Box::new(AvgmLearner::new(dims, net, &mut init).unwrap()),
            "avgm-z1" => {
                let net = NetConfig { z_categories: 1, ..net };
                Box::new(AvgmLearner::new(dims, net, &mut init).unwrap())
            }
            "avgm-actual" => {
                let mut l = AvgmLearner::new(dims, net, &mut init).unwrap();
                l.marginal_mode = MarginalMode::Actual;
                Box::new(l)
            }
            "avgm-none" => {
                let mut l = AvgmLearner::new(dims, net, &mut init).unwrap();
                l.marginal_mode = MarginalMode::None;
                Box::new(l)
            }
            other => Box::new(
                BaselineLearner::new(BaselineKind::parse(other).unwrap(), dims, net, &mut init)
                    .unwrap(),
            ),
        };
        let mut obs = MemoryObserver::default();
        let summary = train(learner.as_mut(), &mut game, &harness, &mut run_seed, &mut obs).unwrap();
        let evals: Vec<f64> = obs.evals.iter().map(|e| e.mean_return_per_agent * 2.0).collect();
        println!(
            "{method} seed {seed}: evals {:?} final {:.3} ({} eps, {:.1}s)",
            evals,
            summary.final_eval.mean_return_per_agent * 2.0,
            summary.episodes,
            t0.elapsed().as_secs_f32()
        );
    }
}
