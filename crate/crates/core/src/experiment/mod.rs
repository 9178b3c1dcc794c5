//! Named experiments, their configuration and their output files.
//!
//! [`run`] resolves the solver and coupling source, runs the registered
//! experiment on a worker pool of the configured size and writes each
//! result table as `<out>/<name>.csv`, prefixed by the resolved
//! configuration as `#` comment lines.

mod config;
mod output;
mod runs;

use std::path::PathBuf;
use std::sync::Arc;

pub use config::{parse_override, resolve, RunConfig};
pub use output::{cell, split_header, write_atomic, write_table, Table};

use crate::disorder::{ConstantField, CouplingSource, DisorderModel};
use crate::error::{Error, Result};
use crate::solver::{solver_by_name, GroundStateSolver};

pub struct Context {
    pub solver: Arc<dyn GroundStateSolver>,
    pub source: Arc<dyn CouplingSource>,
}

/// What an experiment produced.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Extra files (per-sample JSON lines, table exports) by file name.
    pub attachments: Vec<(String, Vec<u8>)>,
    /// Invariant violations; the run still writes its outputs.
    pub violations: Vec<String>,
    /// Short human-readable lines for the terminal.
    pub summary: Vec<String>,
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, cfg: &RunConfig, ctx: &Context) -> Result<Report>;
}

pub const EXPERIMENT_REGISTRY: &[&dyn Experiment] = &[
    &runs::GroundStates,
    &runs::Excite,
    &runs::ScanEdge,
    &runs::Fluct,
    &runs::Martingale,
    &runs::Variance,
    &runs::Mgf,
    &runs::Weights,
    &runs::Check,
];

pub fn experiment_by_name(name: &str) -> Result<&'static dyn Experiment> {
    EXPERIMENT_REGISTRY
        .iter()
        .copied()
        .find(|e| e.name() == name)
        .ok_or_else(|| {
            let known: Vec<_> = EXPERIMENT_REGISTRY.iter().map(|e| e.name()).collect();
            Error::Config(format!(
                "unknown experiment `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

/// `const:v` gives a constant field, anything else a coupling law.
pub fn source_from_spec(spec: &str) -> Result<Arc<dyn CouplingSource>> {
    if let Some(v) = spec.strip_prefix("const:") {
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Model(format!("bad constant in `{spec}`")))?;
        return Ok(Arc::new(ConstantField(v)));
    }
    Ok(Arc::new(DisorderModel::parse(spec)?))
}

#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: Report,
}

impl Outcome {
    /// Process exit status: 0, or 3 when an invariant was violated.
    pub fn exit_code(&self) -> i32 {
        if self.report.violations.is_empty() {
            0
        } else {
            3
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let experiment = experiment_by_name(&cfg.experiment)?;
    let ctx = Context {
        solver: solver_by_name(&cfg.solver)?,
        source: source_from_spec(&cfg.model)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let report = pool.install(|| experiment.run(cfg, &ctx))?;

    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", cfg.out.display())))?;
    let header = format!("run_id: {}\n{}", cfg.run_id(), cfg.to_toml());
    let mut files = Vec::new();
    for t in &report.tables {
        files.push(write_table(&cfg.out, &header, t)?);
    }
    for (name, bytes) in &report.attachments {
        let path = cfg.out.join(name);
        write_atomic(&path, bytes)?;
        files.push(path);
    }
    Ok(Outcome { files, report })
}
