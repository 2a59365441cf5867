//! Constructing environments and learners from a run configuration.

use avgm_core::avgm::AvgmLearner;
use avgm_core::baselines::{BaselineKind, BaselineLearner};
use avgm_core::env::{EnvDims, Environment, GridWorld, MatrixGame, PayoffTensor};
use avgm_core::harness::Learner;
use avgm_core::rng::{streams, Rng};

use crate::config::{MatrixPayoff, RunConfig, ScenarioConfig};
use crate::error::Result;

pub fn build_env(cfg: &RunConfig) -> Result<Box<dyn Environment>> {
    build_env_with_agents(cfg, None)
}

/// Builds the environment, optionally overriding the agent count (used by
/// the scalability evaluation; networks consume variable-length visible
/// lists, so the learner does not change).
pub fn build_env_with_agents(
    cfg: &RunConfig,
    agents_override: Option<usize>,
) -> Result<Box<dyn Environment>> {
    match &cfg.scenario {
        ScenarioConfig::Grid(sc) => {
            let mut sc = sc.clone();
            if let Some(n) = agents_override {
                sc.n_agents = n;
            }
            Ok(Box::new(GridWorld::new(sc).map_err(crate::error::LabError::from)?))
        }
        ScenarioConfig::Matrix {
            payoff,
            reward,
            penalty,
        } => {
            let tensor = match payoff {
                MatrixPayoff::Lifting => PayoffTensor::lifting(*reward, *penalty),
                MatrixPayoff::ThreeAction => PayoffTensor::three_action(*reward, *penalty),
            };
            Ok(Box::new(MatrixGame::new(tensor)))
        }
    }
}

pub fn build_learner(cfg: &RunConfig, dims: EnvDims) -> Result<Box<dyn Learner>> {
    let mut init = Rng::derive(cfg.seed, streams::INIT);
    let learner: Box<dyn Learner> = match cfg.method.as_str() {
        "avgm" => {
            let mut l = AvgmLearner::new(dims, cfg.net.clone(), &mut init)?;
            l.marginal_mode = cfg.marginal;
            l.drop_visible = cfg.drop_visible;
            l.set_drop_rng(Rng::derive(cfg.seed, 0xD409));
            Box::new(l)
        }
        name => {
            let kind = BaselineKind::parse(name)?;
            Box::new(BaselineLearner::new(kind, dims, cfg.net.clone(), &mut init)?)
        }
    };
    Ok(learner)
}

/// Builds the AVGM learner concretely (reports need its critic surface).
pub fn build_avgm(cfg: &RunConfig, dims: EnvDims) -> Result<AvgmLearner> {
    let mut init = Rng::derive(cfg.seed, streams::INIT);
    let mut l = AvgmLearner::new(dims, cfg.net.clone(), &mut init)?;
    l.marginal_mode = cfg.marginal;
    l.drop_visible = cfg.drop_visible;
    Ok(l)
}
