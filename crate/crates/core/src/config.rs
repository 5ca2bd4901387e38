//! JSON run configuration.
//!
//! Every section and key is optional; missing values take the defaults below.
//! Unknown keys are rejected, and every error names the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::forward::{DetectorGeometry, TimeGrid};
use crate::image::ImageGrid;
use crate::solver::{Fidelity, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 128,
            half_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub count: usize,
    pub radius: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            count: 64,
            radius: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub samples: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { samples: 357 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Transducer response used to simulate band-limited data.
    pub system: FilterSpec,
    pub gauss: FilterSpec,
    pub bandpass: FilterSpec,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            system: FilterSpec::Gauss {
                f_center: 0.20,
                f_sigma: 0.08,
            },
            gauss: FilterSpec::Gauss {
                f_center: 0.20,
                f_sigma: 0.05,
            },
            bandpass: FilterSpec::Bandpass {
                f_lo: 0.08,
                f_hi: 0.35,
            },
        }
    }
}

/// How the noise level is derived from the clean data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    /// `factor · mean(|y|)`.
    Abs,
    /// `factor · |mean(y)|`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub factor: f64,
    pub mean_mode: MeanMode,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 1;

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            factor: 2.0,
            mean_mode: MeanMode::Abs,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub iterations: usize,
    pub alpha: f64,
    pub theta: f64,
    pub norm_power_iters: usize,
    pub norm_tol: f64,
    pub trace_every: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            iterations: d.iterations,
            alpha: d.alpha,
            theta: d.theta,
            norm_power_iters: d.norm_power_iters,
            norm_tol: d.norm_tol,
            trace_every: d.trace_every,
        }
    }
}

/// Names accepted in `fidelities`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityName {
    L2,
    Delta,
    Gauss,
    Bandpass,
}

impl FidelityName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FidelityName::L2 => "l2",
            FidelityName::Delta => "delta",
            FidelityName::Gauss => "gauss",
            FidelityName::Bandpass => "bandpass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(FidelityName::L2),
            "delta" => Some(FidelityName::Delta),
            "gauss" => Some(FidelityName::Gauss),
            "bandpass" => Some(FidelityName::Bandpass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub detectors: DetectorSection,
    pub time: TimeSection,
    pub speed_c: f64,
    pub filters: FilterSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub fidelities: Vec<FidelityName>,
    pub out_dir: PathBuf,
    /// When false, wall times are reported as 0 so outputs are byte-stable.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            detectors: DetectorSection::default(),
            time: TimeSection::default(),
            speed_c: 1.0,
            filters: FilterSection::default(),
            noise: NoiseSection::default(),
            solver: SolverSection::default(),
            fidelities: vec![FidelityName::L2, FidelityName::Gauss, FidelityName::Bandpass],
            out_dir: PathBuf::from("out"),
            record_timing: true,
        }
    }
}

fn config_err(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

/// Re-labels a validation error with the config key it came from.
fn at(key: &'static str, r: Result<()>) -> Result<()> {
    r.map_err(|e| config_err(key, e))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<root>".to_string() } else { path };
            config_err(&key, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.image_grid().map_err(|e| config_err("grid", e))?;
        if grid.n() < 2 {
            return Err(config_err("grid.n", "must be >= 2"));
        }
        let geometry = self.geometry().map_err(|e| config_err("detectors", e))?;
        at("detectors.radius", geometry.check_encloses(&grid))?;
        if self.time.samples < 3 {
            return Err(config_err("time.samples", "must be >= 3"));
        }
        if !(self.speed_c > 0.0 && self.speed_c.is_finite()) {
            return Err(config_err("speed_c", "must be positive"));
        }
        at("filters.system", self.filters.system.validate())?;
        at("filters.gauss", self.filters.gauss.validate())?;
        at("filters.bandpass", self.filters.bandpass.validate())?;
        if !(self.noise.factor >= 0.0 && self.noise.factor.is_finite()) {
            return Err(config_err("noise.factor", "must be finite and >= 0"));
        }
        self.solver_config()
            .validate()
            .map_err(|e| match e {
                Error::InvalidParameter { name, reason } => config_err(name, reason),
                e => config_err("solver", e),
            })?;
        if self.fidelities.is_empty() {
            return Err(config_err("fidelities", "at least one fidelity is required"));
        }
        Ok(())
    }

    pub fn image_grid(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.grid.n, self.grid.half_width)
    }

    pub fn geometry(&self) -> Result<DetectorGeometry> {
        DetectorGeometry::new(self.detectors.count, self.detectors.radius)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::covering(
            self.time.samples,
            &self.image_grid()?,
            &self.geometry()?,
            self.speed_c,
        )
    }

    /// Solver settings; the power-iteration seed follows the noise seed.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            iterations: self.solver.iterations,
            alpha: self.solver.alpha,
            theta: self.solver.theta,
            norm_power_iters: self.solver.norm_power_iters,
            norm_tol: self.solver.norm_tol,
            norm_seed: self.noise.seed,
            trace_every: self.solver.trace_every,
        }
    }

    pub fn fidelity(&self, name: FidelityName) -> Fidelity {
        match name {
            FidelityName::L2 => Fidelity::L2,
            FidelityName::Delta => Fidelity::Filtered(FilterSpec::Delta),
            FidelityName::Gauss => Fidelity::Filtered(self.filters.gauss),
            FidelityName::Bandpass => Fidelity::Filtered(self.filters.bandpass),
        }
    }

    /// Reduced geometry used for quick checks: n = 64, 32 detectors, 128
    /// samples, 1000 iterations.
    pub fn reduced() -> Self {
        let mut cfg = Self::default();
        cfg.grid.n = 64;
        cfg.detectors.count = 32;
        cfg.time.samples = 128;
        cfg.solver.iterations = 1000;
        cfg
    }
}
