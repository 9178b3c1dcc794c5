use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::TiePolicy;

/// Every run parameter. Read from a flat TOML file, then overridden by
/// `--set key=value` pairs and command-line flags. Unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// Coupling law (`normal:1`, `uniform:2`, `laplace`) or `const:v`.
    pub model: String,
    pub solver: String,
    pub tie: TiePolicy,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,

    pub dimension: usize,
    /// Torus side (`L`, or `M` for the fluctuation experiments).
    pub size: usize,
    /// Number of disorder instances for `gs`, `excite` and `scan-edge`.
    pub instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub couplings_file: Option<PathBuf>,

    pub window: usize,
    pub window_corner: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seam_axis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seam_offset: Option<usize>,

    /// Block side for `martingale`.
    pub block: usize,
    /// Block shape and position for `excite` and `scan-edge`.
    pub block_extent: [usize; 2],
    pub block_corner: [usize; 2],

    pub samples: usize,
    pub n_outer: usize,
    pub n_inner: usize,
    pub window_sizes: Vec<usize>,
    pub torus_factor: usize,
    pub sizes: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub bootstrap: usize,
    /// Inner redraws for the conditional mean in `mgf`; 0 uses `G` itself.
    pub mgf_inner: usize,

    /// `[row, col, axis]`: the edge leaving site `(row, col)` along `axis`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<[usize; 3]>,
    pub interval: [f64; 2],
    pub resolution: usize,
    pub epsilons: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_edge: Option<[usize; 3]>,

    pub dump_samples: bool,
    pub check_instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: String::new(),
            model: "normal:1".into(),
            solver: "auto".into(),
            tie: TiePolicy::Strict,
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            dimension: 2,
            size: 8,
            instances: 1,
            couplings_file: None,
            window: 4,
            window_corner: [0, 0],
            seam_axis: None,
            seam_offset: None,
            block: 2,
            block_extent: [1, 2],
            block_corner: [0, 0],
            samples: 100,
            n_outer: 200,
            n_inner: 50,
            window_sizes: vec![2, 3, 4, 5, 6],
            torus_factor: 2,
            sizes: vec![6, 8, 10],
            t_grid: vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
            bootstrap: 1000,
            mgf_inner: 0,
            edge: None,
            interval: [-3.0, 3.0],
            resolution: 60,
            epsilons: vec![],
            probe_edge: None,
            dump_samples: false,
            check_instances: 200,
        }
    }
}

/// Parses `key=value`, reading the value as a TOML literal and falling back
/// to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Layers: defaults, then the config file, then `overrides` in order.
pub fn resolve(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=2).contains(&self.dimension) {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.instances == 0 || self.samples == 0 {
            return bad("instances and samples must be positive".into());
        }
        if self.resolution == 0
            || self.interval[0] >= self.interval[1]
            || self.interval.iter().any(|v| v.is_nan())
        {
            return bad(format!(
                "scan interval {:?} / resolution {} invalid",
                self.interval, self.resolution
            ));
        }
        if self.torus_factor == 0 {
            return bad("torus_factor must be positive".into());
        }
        if self.t_grid.iter().any(|t| !t.is_finite())
            || self.epsilons.iter().any(|e| !e.is_finite())
        {
            return bad("t_grid and epsilons must be finite".into());
        }
        crate::solver::solver_by_name(&self.solver)?;
        Ok(())
    }

    /// Resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that determines the results; worker count and
    /// output location are excluded.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.out = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
