//! Flat key-value run configuration with section prefixes.
//!
//! The format is one `section.key = value` pair per line; `#` starts a
//! comment. It is deliberately diffable and hand-editable, and the exact
//! canonical serialisation is hashed into every CSV the tools emit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use avgm_core::avgm::MarginalMode;
use avgm_core::env::{GridScenario, ScenarioKind};
use avgm_core::harness::HarnessConfig;
use avgm_core::nn::NetConfig;

use crate::error::{LabError, Result};

/// Which payoff a matrix-game scenario uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixPayoff {
    /// Two actions {C, L}: (C,C) -> +R, one C -> -P, none -> 0.
    Lifting,
    /// Three actions {C, L1, L2} with the same event structure.
    ThreeAction,
}

impl MatrixPayoff {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "lifting" => Ok(MatrixPayoff::Lifting),
            "three_action" => Ok(MatrixPayoff::ThreeAction),
            other => Err(LabError::usage(format!(
                "unknown payoff '{other}' (expected lifting or three_action)"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            MatrixPayoff::Lifting => "lifting",
            MatrixPayoff::ThreeAction => "three_action",
        }
    }
}

/// Environment selection: one of the gridworld tasks or a matrix game.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    Grid(GridScenario),
    Matrix {
        payoff: MatrixPayoff,
        reward: f64,
        penalty: f64,
    },
}

impl ScenarioConfig {
    pub fn name(&self) -> String {
        match self {
            ScenarioConfig::Grid(sc) => sc.kind.name().to_string(),
            ScenarioConfig::Matrix { .. } => "matrix".to_string(),
        }
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub net: NetConfig,
    pub harness: HarnessConfig,
    pub method: String,
    pub seed: u64,
    pub marginal: MarginalMode,
    pub drop_visible: bool,
}

pub const METHODS: [&str; 4] = ["avgm", "iql", "vdn", "qmix"];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioConfig::Grid(GridScenario::preset(ScenarioKind::Lift)),
            net: NetConfig::default(),
            harness: HarnessConfig::default(),
            method: "avgm".into(),
            seed: 1,
            marginal: MarginalMode::Greedy,
            drop_visible: false,
        }
    }
}

const KEYS: [&str; 32] = [
    "scenario.kind",
    "scenario.payoff",
    "scenario.map_size",
    "scenario.n_agents",
    "scenario.n_targets",
    "scenario.reward",
    "scenario.penalty",
    "scenario.k_coop",
    "scenario.hp_max",
    "scenario.hp_regen",
    "scenario.episode_limit",
    "net.rnn_hidden",
    "net.mixing_hidden",
    "net.encoder_hidden",
    "net.head_hidden",
    "net.z",
    "net.learning_rate",
    "net.rms_decay",
    "net.rms_eps",
    "train.gamma",
    "train.total_steps",
    "train.batch_size",
    "train.replay_capacity",
    "train.updates_per_episode",
    "train.update_every_steps",
    "train.target_sync_episodes",
    "train.eps_anneal_steps",
    "train.eps_final",
    "train.eval_interval",
    "train.eval_episodes",
    "train.checkpoint_interval",
    "run.method",
];

// run.seed / run.marginal / run.drop_visible are also accepted; KEYS above
// feeds the error message for unknown keys.
const EXTRA_KEYS: [&str; 3] = ["run.seed", "run.marginal", "run.drop_visible"];

/// Short aliases accepted by `--set`.
fn canonical_key(key: &str) -> String {
    match key.to_ascii_lowercase().as_str() {
        "z" => "net.z".into(),
        "seed" => "run.seed".into(),
        "method" => "run.method".into(),
        "penalty" | "p" => "scenario.penalty".into(),
        "r" | "reward" => "scenario.reward".into(),
        other => other.into(),
    }
}

impl RunConfig {
    /// Parses the flat key-value text.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(LabError::usage(format!(
                    "config line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            pairs.insert(canonical_key(k.trim()), v.trim().to_string());
        }
        Self::from_pairs(&pairs)
    }

    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        let mut pairs = self.to_pairs();
        for (k, v) in overrides {
            pairs.insert(canonical_key(k), v.clone());
        }
        *self = Self::from_pairs(&pairs)?;
        Ok(())
    }

    fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<RunConfig> {
        for key in pairs.keys() {
            if !KEYS.contains(&key.as_str()) && !EXTRA_KEYS.contains(&key.as_str()) {
                return Err(LabError::usage(format!(
                    "unknown config key '{key}'; valid keys: {}",
                    KEYS.iter()
                        .chain(EXTRA_KEYS.iter())
                        .cloned()
                        .collect::<Vec<_>>()
                        .join(", ")
                )));
            }
        }
        let get = |k: &str| pairs.get(k).map(|s| s.as_str());
        let parse_u = |k: &str, d: u64| -> Result<u64> {
            match get(k) {
                None => Ok(d),
                Some(v) => v
                    .parse()
                    .map_err(|_| LabError::usage(format!("{k}: '{v}' is not an integer"))),
            }
        };
        let parse_f = |k: &str, d: f64| -> Result<f64> {
            match get(k) {
                None => Ok(d),
                Some(v) => v
                    .parse()
                    .map_err(|_| LabError::usage(format!("{k}: '{v}' is not a number"))),
            }
        };
        let parse_b = |k: &str, d: bool| -> Result<bool> {
            match get(k) {
                None => Ok(d),
                Some("true") => Ok(true),
                Some("false") => Ok(false),
                Some(v) => Err(LabError::usage(format!("{k}: '{v}' is not true/false"))),
            }
        };

        let kind = get("scenario.kind").unwrap_or("lift");
        let scenario = if kind == "matrix" {
            let payoff = MatrixPayoff::parse(get("scenario.payoff").unwrap_or("three_action"))?;
            ScenarioConfig::Matrix {
                payoff,
                reward: parse_f("scenario.reward", 1.0)?,
                penalty: parse_f("scenario.penalty", 2.0)?,
            }
        } else {
            let preset = GridScenario::preset(ScenarioKind::parse(kind).map_err(LabError::from)?);
            let sc = GridScenario {
                map_size: parse_u("scenario.map_size", preset.map_size as u64)? as usize,
                n_agents: parse_u("scenario.n_agents", preset.n_agents as u64)? as usize,
                n_targets: parse_u("scenario.n_targets", preset.n_targets as u64)? as usize,
                coop_reward: parse_f("scenario.reward", preset.coop_reward)?,
                penalty: parse_f("scenario.penalty", preset.penalty)?,
                k_coop: parse_u("scenario.k_coop", preset.k_coop as u64)? as usize,
                hp_max: parse_u("scenario.hp_max", preset.hp_max as u64)? as i32,
                hp_regen: parse_u("scenario.hp_regen", preset.hp_regen as u64)? as i32,
                episode_limit: parse_u("scenario.episode_limit", preset.episode_limit as u64)?
                    as usize,
                ..preset
            };
            sc.validate().map_err(LabError::from)?;
            ScenarioConfig::Grid(sc)
        };

        let defaults = NetConfig::default();
        let net = NetConfig {
            rnn_hidden: parse_u("net.rnn_hidden", defaults.rnn_hidden as u64)? as usize,
            mixing_hidden: parse_u("net.mixing_hidden", defaults.mixing_hidden as u64)? as usize,
            encoder_hidden: parse_u("net.encoder_hidden", defaults.encoder_hidden as u64)? as usize,
            head_hidden: parse_u("net.head_hidden", defaults.head_hidden as u64)? as usize,
            z_categories: parse_u("net.z", defaults.z_categories as u64)? as usize,
            learning_rate: parse_f("net.learning_rate", defaults.learning_rate)?,
            rms_decay: parse_f("net.rms_decay", defaults.rms_decay)?,
            rms_eps: parse_f("net.rms_eps", defaults.rms_eps)?,
        };
        net.validate().map_err(LabError::from)?;

        let dh = HarnessConfig::default();
        let harness = HarnessConfig {
            gamma: parse_f("train.gamma", dh.gamma)?,
            total_steps: parse_u("train.total_steps", dh.total_steps)?,
            batch_size: parse_u("train.batch_size", dh.batch_size as u64)? as usize,
            replay_capacity: parse_u("train.replay_capacity", dh.replay_capacity as u64)? as usize,
            updates_per_episode: parse_u("train.updates_per_episode", dh.updates_per_episode as u64)?
                as u32,
            update_every_steps: parse_u("train.update_every_steps", dh.update_every_steps)?,
            target_sync_episodes: parse_u("train.target_sync_episodes", dh.target_sync_episodes)?,
            eps_anneal_steps: parse_u("train.eps_anneal_steps", dh.eps_anneal_steps)?,
            eps_final: parse_f("train.eps_final", dh.eps_final)?,
            eval_interval: parse_u("train.eval_interval", dh.eval_interval)?,
            eval_episodes: parse_u("train.eval_episodes", dh.eval_episodes as u64)? as usize,
            checkpoint_interval: parse_u("train.checkpoint_interval", dh.checkpoint_interval)?,
        };
        harness.validate().map_err(LabError::from)?;

        let method = get("run.method").unwrap_or("avgm").to_string();
        if !METHODS.contains(&method.as_str()) {
            return Err(LabError::usage(format!(
                "unknown method '{method}'; valid methods: {{{}}}",
                METHODS.join(", ")
            )));
        }
        let marginal =
            MarginalMode::parse(get("run.marginal").unwrap_or("greedy")).map_err(LabError::from)?;
        Ok(RunConfig {
            scenario,
            net,
            harness,
            method,
            seed: parse_u("run.seed", 1)?,
            marginal,
            drop_visible: parse_b("run.drop_visible", false)?,
        })
    }

    fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.scenario {
            ScenarioConfig::Grid(sc) => {
                put("scenario.kind", sc.kind.name().into());
                put("scenario.map_size", sc.map_size.to_string());
                put("scenario.n_agents", sc.n_agents.to_string());
                put("scenario.n_targets", sc.n_targets.to_string());
                put("scenario.reward", sc.coop_reward.to_string());
                put("scenario.penalty", sc.penalty.to_string());
                put("scenario.k_coop", sc.k_coop.to_string());
                put("scenario.hp_max", sc.hp_max.to_string());
                put("scenario.hp_regen", sc.hp_regen.to_string());
                put("scenario.episode_limit", sc.episode_limit.to_string());
            }
            ScenarioConfig::Matrix {
                payoff,
                reward,
                penalty,
            } => {
                put("scenario.kind", "matrix".into());
                put("scenario.payoff", payoff.name().into());
                put("scenario.reward", reward.to_string());
                put("scenario.penalty", penalty.to_string());
            }
        }
        put("net.rnn_hidden", self.net.rnn_hidden.to_string());
        put("net.mixing_hidden", self.net.mixing_hidden.to_string());
        put("net.encoder_hidden", self.net.encoder_hidden.to_string());
        put("net.head_hidden", self.net.head_hidden.to_string());
        put("net.z", self.net.z_categories.to_string());
        put("net.learning_rate", self.net.learning_rate.to_string());
        put("net.rms_decay", self.net.rms_decay.to_string());
        put("net.rms_eps", self.net.rms_eps.to_string());
        put("train.gamma", self.harness.gamma.to_string());
        put("train.total_steps", self.harness.total_steps.to_string());
        put("train.batch_size", self.harness.batch_size.to_string());
        put("train.replay_capacity", self.harness.replay_capacity.to_string());
        put(
            "train.updates_per_episode",
            self.harness.updates_per_episode.to_string(),
        );
        put(
            "train.update_every_steps",
            self.harness.update_every_steps.to_string(),
        );
        put(
            "train.target_sync_episodes",
            self.harness.target_sync_episodes.to_string(),
        );
        put("train.eps_anneal_steps", self.harness.eps_anneal_steps.to_string());
        put("train.eps_final", self.harness.eps_final.to_string());
        put("train.eval_interval", self.harness.eval_interval.to_string());
        put("train.eval_episodes", self.harness.eval_episodes.to_string());
        put(
            "train.checkpoint_interval",
            self.harness.checkpoint_interval.to_string(),
        );
        put("run.method", self.method.clone());
        put("run.seed", self.seed.to_string());
        put("run.marginal", self.marginal.name().into());
        put("run.drop_visible", self.drop_visible.to_string());
        m
    }

    /// Canonical serialisation: sorted keys, one pair per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// FNV-1a of the canonical serialisation, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.serialize().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        format!("{h:016x}")
    }

    /// Deterministic run-directory name.
    pub fn run_name(&self) -> String {
        format!("{}_{}_s{}", self.method, self.scenario.name(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_parse_serialize() {
        let cfg = RunConfig::default();
        let text = cfg.serialize();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::parse("bogus.key = 1").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("unknown config key"));
        assert!(msg.contains("net.z"));
    }

    #[test]
    fn unknown_method_lists_methods() {
        let err = RunConfig::parse("run.method = sarsa").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("avgm") && msg.contains("iql") && msg.contains("vdn") && msg.contains("qmix"));
    }

    #[test]
    fn set_alias_z_reflects_in_snapshot() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[("Z".into(), "16".into())]).unwrap();
        assert_eq!(cfg.net.z_categories, 16);
        assert!(cfg.serialize().contains("net.z = 16"));
    }

    #[test]
    fn matrix_scenario_parses() {
        let cfg = RunConfig::parse(
            "scenario.kind = matrix\nscenario.payoff = three_action\nscenario.reward = 1\nscenario.penalty = 2\n",
        )
        .unwrap();
        match cfg.scenario {
            ScenarioConfig::Matrix { payoff, reward, penalty } => {
                assert_eq!(payoff, MatrixPayoff::ThreeAction);
                assert_eq!((reward, penalty), (1.0, 2.0));
            }
            other => panic!("expected matrix, got {other:?}"),
        }
    }
}
