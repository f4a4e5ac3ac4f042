//! Run configuration: a TOML file with five flat sections.
//!
//! ```toml
//! [grid]
//! dim = 2
//! points = [64, 64]
//! half_lengths = [0.5, 0.5]
//!
//! [model]
//! epsilon = 0.1
//! gamma11 = 20.0
//! gamma12 = 5.0
//! gamma22 = 20.0
//! omega1 = 0.3
//! omega2 = 0.3
//! penalty_m = 100.0
//!
//! [stepping]
//! scheme = "multiplier"        # multiplier | penalty | minimizing_movement
//! tau = 0.001
//! horizon = 0.1
//! project_each_step = true
//! inner_tol_grad = 1e-9
//! inner_tol_constraint = 1e-11
//! inner_max_iters = 10000
//! inner_start = "previous"     # previous | predictor
//! beta_min = 1e-8
//!
//! [init]
//! kind = "random_uniform"      # random_uniform | lamellar | spots | constant_symmetric
//! seed = 7
//! amplitude = 0.05
//! base1 = 0.3333333333333333
//! base2 = 0.3333333333333333
//! stripes = 2
//! spot_count = 6
//! spot_radius = 0.08
//!
//! [output]
//! log = "run.csv"
//! snapshot_dir = "snapshots"
//! snapshot_every = 0           # 0 disables snapshots
//! precision = 17               # significant digits in the CSV log
//! ```
//!
//! Every key is optional; missing keys take the values above (the standard
//! scenario). Unknown keys are errors. Relative output paths are resolved
//! against the output directory (see [`OUTPUT_DIR_ENV`]).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{ModelError, ModelParams};
use crate::constraint::MultiplierGuard;
use crate::dynamics::{InnerStart, Scheme, StepConfig};
use crate::grid::{GridError, PeriodicGrid};
use crate::init::{InitKind, InitSpec};

/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "ACON_OUTPUT_DIR";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    /// 1-based line of the offending key, when it can be located.
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub points: Vec<usize>,
    pub half_lengths: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dim: 2,
            points: vec![64, 64],
            half_lengths: vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub epsilon: f64,
    pub gamma11: f64,
    pub gamma12: f64,
    pub gamma22: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub penalty_m: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            gamma11: 20.0,
            gamma12: 5.0,
            gamma22: 20.0,
            omega1: 0.3,
            omega2: 0.3,
            penalty_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteppingSection {
    pub scheme: String,
    pub tau: f64,
    pub horizon: f64,
    pub project_each_step: bool,
    pub inner_tol_grad: f64,
    pub inner_tol_constraint: f64,
    pub inner_max_iters: usize,
    pub inner_start: String,
    pub beta_min: f64,
}

impl Default for SteppingSection {
    fn default() -> Self {
        let cfg = StepConfig::new(Scheme::Multiplier, 1e-3);
        Self {
            scheme: cfg.scheme.as_str().into(),
            tau: cfg.tau,
            horizon: 0.1,
            project_each_step: cfg.project_each_step,
            inner_tol_grad: cfg.inner_tol_grad,
            inner_tol_constraint: cfg.inner_tol_constraint,
            inner_max_iters: cfg.inner_max_iters,
            inner_start: "previous".into(),
            beta_min: cfg.guard.beta_min(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub kind: String,
    pub seed: u64,
    pub amplitude: f64,
    pub base1: f64,
    pub base2: f64,
    pub stripes: usize,
    pub spot_count: usize,
    pub spot_radius: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        let spec = InitSpec {
            seed: 7,
            ..InitSpec::default()
        };
        Self {
            kind: spec.kind.as_str().into(),
            seed: spec.seed,
            amplitude: spec.amplitude,
            base1: spec.base_levels[0],
            base2: spec.base_levels[1],
            stripes: spec.stripes,
            spot_count: spec.spot_count,
            spot_radius: spec.spot_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub log: String,
    pub snapshot_dir: String,
    pub snapshot_every: usize,
    pub precision: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            log: "run.csv".into(),
            snapshot_dir: "snapshots".into(),
            snapshot_every: 0,
            precision: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub stepping: SteppingSection,
    pub init: InitSection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses and validates a configuration.
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|span| line_of_offset(src, span.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|(section, key, message)| ConfigError {
            line: line_of_key(src, section, key),
            message: format!("[{section}] {key}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config sections serialize to TOML")
    }

    /// Checks every section; errors name the section and key at fault.
    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        self.grid().map_err(|e| {
            let key = match e {
                GridError::Dimension(_) => "dim",
                GridError::HalfLength { .. } => "half_lengths",
                GridError::AxisCount { .. } if self.grid.points.len() != self.grid.dim => "points",
                GridError::AxisCount { .. } => "half_lengths",
                _ => "points",
            };
            ("grid", key, e.to_string())
        })?;
        self.params().map_err(|e| {
            let key = match e {
                ModelError::Epsilon(_) => "epsilon",
                ModelError::GammaAsymmetric { .. } => "gamma12",
                ModelError::GammaNotPositiveDefinite { .. } => "gamma12",
                ModelError::OmegaExcluded { index: 1, .. } => "omega1",
                ModelError::OmegaExcluded { .. } => "omega2",
                ModelError::Penalty(_) => "penalty_m",
            };
            ("model", key, e.to_string())
        })?;
        let s = &self.stepping;
        parse_scheme(&s.scheme).map_err(|m| ("stepping", "scheme", m))?;
        parse_inner_start(&s.inner_start).map_err(|m| ("stepping", "inner_start", m))?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(s.tau) {
            return Err(("stepping", "tau", format!("must be positive and finite, got {}", s.tau)));
        }
        if !(s.horizon >= 0.0 && s.horizon.is_finite()) {
            return Err(("stepping", "horizon", format!("must be non-negative, got {}", s.horizon)));
        }
        if !positive(s.inner_tol_grad) {
            return Err(("stepping", "inner_tol_grad", "must be positive".into()));
        }
        if !positive(s.inner_tol_constraint) {
            return Err(("stepping", "inner_tol_constraint", "must be positive".into()));
        }
        if s.inner_max_iters == 0 {
            return Err(("stepping", "inner_max_iters", "must be at least 1".into()));
        }
        if !positive(s.beta_min) {
            return Err(("stepping", "beta_min", "must be positive".into()));
        }
        let kind = parse_init_kind(&self.init.kind).map_err(|m| ("init", "kind", m))?;
        let spec = self.init_spec_with(kind);
        spec.validate().map_err(|e| {
            let key = if !(spec.amplitude >= 0.0) {
                "amplitude"
            } else if !(spec.base_levels[0] > 0.0 && spec.base_levels[0] < 1.0) {
                "base1"
            } else if !(spec.base_levels[1] > 0.0 && spec.base_levels[1] < 1.0) {
                "base2"
            } else if kind == InitKind::Lamellar && spec.stripes == 0 {
                "stripes"
            } else {
                "spot_radius"
            };
            ("init", key, e.to_string())
        })?;
        if !(1..=17).contains(&self.output.precision) {
            return Err((
                "output",
                "precision",
                format!("must lie in 1..=17, got {}", self.output.precision),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PeriodicGrid, GridError> {
        let g = &self.grid;
        if g.dim != 2 && g.dim != 3 {
            return Err(GridError::Dimension(g.dim));
        }
        for list in [g.points.len(), g.half_lengths.len()] {
            if list != g.dim {
                return Err(GridError::AxisCount {
                    expected: g.dim,
                    got: list,
                });
            }
        }
        PeriodicGrid::new(&g.points, &g.half_lengths)
    }

    pub fn params(&self) -> Result<ModelParams, ModelError> {
        let m = &self.model;
        ModelParams::new(
            m.epsilon,
            [[m.gamma11, m.gamma12], [m.gamma12, m.gamma22]],
            [m.omega1, m.omega2],
            m.penalty_m,
        )
    }

    /// Stepper settings; assumes a validated config.
    pub fn step_config(&self) -> StepConfig {
        let s = &self.stepping;
        let mut cfg = StepConfig::new(parse_scheme(&s.scheme).expect("validated scheme"), s.tau);
        cfg.project_each_step = s.project_each_step;
        cfg.inner_tol_grad = s.inner_tol_grad;
        cfg.inner_tol_constraint = s.inner_tol_constraint;
        cfg.inner_max_iters = s.inner_max_iters;
        cfg.inner_start = parse_inner_start(&s.inner_start).expect("validated inner_start");
        cfg.guard = MultiplierGuard::new(s.beta_min);
        cfg
    }

    /// Initial-condition settings; assumes a validated config.
    pub fn init_spec(&self) -> InitSpec {
        self.init_spec_with(parse_init_kind(&self.init.kind).expect("validated init kind"))
    }

    fn init_spec_with(&self, kind: InitKind) -> InitSpec {
        let i = &self.init;
        InitSpec {
            kind,
            seed: i.seed,
            amplitude: i.amplitude,
            base_levels: [i.base1, i.base2],
            stripes: i.stripes,
            spot_count: i.spot_count,
            spot_radius: i.spot_radius,
        }
    }

    /// Output directory: `$ACON_OUTPUT_DIR` if set, else `base`.
    pub fn output_dir(base: &Path) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => base.to_path_buf(),
        }
    }

    pub fn log_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(&self.output.log)
    }

    pub fn snapshot_dir(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(&self.output.snapshot_dir)
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn parse_inner_start(s: &str) -> Result<InnerStart, String> {
    match s {
        "previous" => Ok(InnerStart::Previous),
        "predictor" => Ok(InnerStart::Predictor),
        other => Err(format!("unknown inner_start '{other}' (expected previous or predictor)")),
    }
}

fn parse_init_kind(s: &str) -> Result<InitKind, String> {
    s.parse()
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, falling back to the section header.
fn line_of_key(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = false;
    let mut header = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_section = line.trim_start_matches('[').trim_end_matches(']').trim() == section;
            if in_section {
                header = Some(n + 1);
            }
            continue;
        }
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_standard_scenario() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid().unwrap().points(), &[64, 64]);
        assert_eq!(cfg.step_config().scheme, Scheme::Multiplier);
    }

    #[test]
    fn round_trip() {
        let src = "[grid]\ndim = 3\npoints = [8, 8, 16]\nhalf_lengths = [0.5, 0.25, 1.0]\n\
                   [stepping]\nscheme = \"minimizing_movement\"\ntau = 3.3e-4\n\
                   [init]\nkind = \"spots\"\nbase1 = 0.1\n";
        let cfg = RunConfig::from_toml_str(src).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(RunConfig::from_toml_str(&RunConfig::default().to_toml_string()).unwrap(), RunConfig::default());
    }

    #[test]
    fn gamma_error_names_invariant_and_line() {
        let src = "[model]\nepsilon = 0.1\ngamma11 = 1.0\ngamma12 = 2.0\ngamma22 = 1.0\n";
        let err = RunConfig::from_toml_str(src).unwrap_err();
        assert_eq!(err.line, Some(4));
        assert!(err.to_string().contains("positive definite"), "{err}");
    }

    #[test]
    fn syntax_and_unknown_keys_have_lines() {
        let err = RunConfig::from_toml_str("[grid]\ndim = 2\npoints = [8, \n").unwrap_err();
        assert!(err.line.is_some());
        let err = RunConfig::from_toml_str("[model]\n\nepsilom = 0.1\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
        let err = RunConfig::from_toml_str("[stepping]\ntau = -1.0\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = RunConfig::from_toml_str("[init]\nkind = \"blobs\"\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn axis_count_mismatch() {
        let err = RunConfig::from_toml_str("[grid]\ndim = 3\npoints = [8, 8]\n").unwrap_err();
        assert_eq!(err.line, Some(3));
    }
}
