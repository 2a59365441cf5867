//! Run-directory layout and deterministic CSV writers.
//!
//! Every CSV starts with a metadata comment line carrying the tool version
//! and the config hash, then a header row. Reruns with identical seeds
//! produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use avgm_core::harness::rollout::TraceStep;
use avgm_core::harness::{EvalRow, Learner, LogRow, TrainObserver};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Root for run directories: the flag wins, then AVGM_RUN_ROOT, then ./runs.
pub fn run_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(v) = std::env::var("AVGM_RUN_ROOT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    PathBuf::from("runs")
}

pub fn meta_line(hash: &str) -> String {
    format!("# avgm-lab {TOOL_VERSION} config={hash}")
}

/// FNV-1a over arbitrary text, for hashing command parameters into the
/// metadata line of CSVs that have no run config.
pub fn text_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{h:016x}")
}

pub struct CsvDoc {
    text: String,
}

impl CsvDoc {
    pub fn new(cfg: &RunConfig, header: &str) -> Self {
        Self::with_hash(&cfg.hash(), header)
    }

    pub fn with_hash(hash: &str, header: &str) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "{}", meta_line(hash));
        let _ = writeln!(text, "{header}");
        CsvDoc { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.text.as_bytes())?;
        Ok(())
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Observer that materialises the run directory: config snapshot, seed
/// record, training-log CSV, eval CSV and checkpoints.
pub struct RunDirObserver {
    pub dir: PathBuf,
    cfg: RunConfig,
    log: CsvDoc,
    eval: CsvDoc,
    warnings: Vec<String>,
    pub checkpoints: Vec<PathBuf>,
}

impl RunDirObserver {
    pub fn create(root: &Path, cfg: &RunConfig) -> Result<Self> {
        let dir = root.join(cfg.run_name());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.cfg"), cfg.serialize())?;
        fs::write(dir.join("seed.txt"), format!("{}\n", cfg.seed))?;
        let log = CsvDoc::new(
            cfg,
            "env_steps,episodes,td_loss,policy_loss,encoder_loss,eval_mean_return_per_agent,epsilon,method",
        );
        let eval = CsvDoc::new(
            cfg,
            "env_steps,mean_return_per_agent,std_return_per_agent,mean_coop_events,mean_failed_interacts,mean_len",
        );
        Ok(RunDirObserver {
            dir,
            cfg: cfg.clone(),
            log,
            eval,
            warnings: Vec::new(),
            checkpoints: Vec::new(),
        })
    }

    /// Writes the accumulated CSVs; called once when training finishes.
    pub fn finish(&self) -> Result<()> {
        self.log.write(&self.dir.join("train_log.csv"))?;
        self.eval.write(&self.dir.join("eval.csv"))?;
        if !self.warnings.is_empty() {
            fs::write(self.dir.join("warnings.txt"), self.warnings.join("\n"))?;
        }
        Ok(())
    }
}

impl TrainObserver for RunDirObserver {
    fn on_log(&mut self, row: &LogRow) {
        self.log.row(&[
            row.env_steps.to_string(),
            row.episodes.to_string(),
            fmt_f64(row.td_loss),
            fmt_f64(row.policy_loss),
            fmt_f64(row.encoder_loss),
            fmt_f64(row.eval_return_per_agent),
            fmt_f64(row.epsilon),
            self.cfg.method.clone(),
        ]);
    }

    fn on_eval(&mut self, row: &EvalRow) {
        self.eval.row(&[
            row.env_steps.to_string(),
            fmt_f64(row.mean_return_per_agent),
            fmt_f64(row.std_return_per_agent),
            fmt_f64(row.mean_coop_events),
            fmt_f64(row.mean_failed_interacts),
            fmt_f64(row.mean_len),
        ]);
    }

    fn on_checkpoint(&mut self, env_steps: u64, learner: &dyn Learner) {
        let path = self.dir.join(format!("checkpoint_{env_steps:09}.ckpt"));
        if checkpoint::save(&path, &self.cfg, learner).is_ok() {
            self.checkpoints.push(path);
        }
    }

    fn on_warning(&mut self, msg: &str) {
        self.warnings.push(msg.to_string());
    }
}

/// Episode trace export: one row per step.
pub fn trace_csv(cfg: &RunConfig, n_agents: usize, steps: &[TraceStep]) -> CsvDoc {
    let mut header = String::from("step");
    for a in 0..n_agents {
        let _ = write!(header, ",action_{a}");
    }
    header.push_str(",global_reward,coop_events,failed_interacts");
    let mut doc = CsvDoc::new(cfg, &header);
    for s in steps {
        let mut fields = vec![s.step.to_string()];
        for &a in &s.actions {
            fields.push(a.to_string());
        }
        fields.push(fmt_f64(s.reward));
        fields.push(s.coop_events.to_string());
        fields.push(s.failed_interacts.to_string());
        doc.row(&fields);
    }
    doc
}
