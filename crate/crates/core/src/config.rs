//! Run configuration shared by the command-line front end and library users.
//!
//! Precedence is flags > config file > defaults; the file is flat
//! `key = value` text with `#` comments. Recognized keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `example` | `ex1` | `ex1`, `ex2` or `custom` |
//! | `level` | `1` | angular refinement level |
//! | `spatial_n` | 2^level + 1 | vertices per axis |
//! | `dt` | 1/(spatial_n − 1) | time step |
//! | `final_time` | `1.0` | T |
//! | `sigma_t`, `sigma_s` | `2.0`, `0.5` | cross sections |
//! | `eta` | `0.5` | Henyey–Greenstein anisotropy |
//! | `stabilization` | `min` | `min`, `proportional` or `off` |
//! | `delta0` | `0.25` | stabilization constant |
//! | `tol` | `1e-10` | Step-2 relative residual |
//! | `parallelism` | `0` | worker threads, 0 = all cores |
//! | `cache_factorizations` | `true` | keep per-direction systems |
//! | `phase` | `isotropic` | custom only: `isotropic`, `linear`, `hg` |
//! | `source`, `initial` | `0`, `1` | custom only: constant f and u₀ |
//! | `diagnostics`, `field`, `csv` | unset | output paths |

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::scattering::{CrossSections, PhaseFunction};
use crate::solver::{ModelProblem, SolverOptions};
use crate::spatial_mesh::SpatialMesh;
use crate::transport_assembly::StabilizationPolicy;
use crate::verification::ManufacturedCase;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleKind {
    Ex1,
    Ex2,
    Custom,
}

impl FromStr for ExampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(Self::Ex1),
            "ex2" => Ok(Self::Ex2),
            "custom" | "custom-file" => Ok(Self::Custom),
            _ => Err(Error::Config(format!("unknown example '{s}' (expected ex1, ex2 or custom)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub example: ExampleKind,
    pub level: usize,
    pub spatial_n: Option<usize>,
    pub dt: Option<f64>,
    pub final_time: f64,
    pub sigma_t: f64,
    pub sigma_s: f64,
    pub eta: f64,
    pub stabilization: String,
    pub delta0: f64,
    pub tol: f64,
    pub parallelism: usize,
    pub cache_factorizations: bool,
    pub phase: String,
    pub source: f64,
    pub initial: f64,
    pub diagnostics: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: ExampleKind::Ex1,
            level: 1,
            spatial_n: None,
            dt: None,
            final_time: 1.0,
            sigma_t: 2.0,
            sigma_s: 0.5,
            eta: 0.5,
            stabilization: "min".into(),
            delta0: 0.25,
            tol: crate::linalg::DEFAULT_TOL,
            parallelism: 0,
            cache_factorizations: true,
            phase: "isotropic".into(),
            source: 0.0,
            initial: 1.0,
            diagnostics: None,
            field: None,
            csv: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "example" => self.example = value.parse()?,
            "level" => self.level = parse(key, value)?,
            "spatial_n" => self.spatial_n = Some(parse(key, value)?),
            "dt" => self.dt = Some(parse(key, value)?),
            "final_time" => self.final_time = parse(key, value)?,
            "sigma_t" => self.sigma_t = parse(key, value)?,
            "sigma_s" => self.sigma_s = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "stabilization" => self.stabilization = value.to_string(),
            "delta0" => self.delta0 = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "parallelism" => self.parallelism = parse(key, value)?,
            "cache_factorizations" => self.cache_factorizations = parse(key, value)?,
            "phase" => self.phase = value.to_string(),
            "source" => self.source = parse(key, value)?,
            "initial" => self.initial = parse(key, value)?,
            "diagnostics" => self.diagnostics = Some(value.into()),
            "field" => self.field = Some(value.into()),
            "csv" => self.csv = Some(value.into()),
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every setting of a `key = value` document on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn spatial_n(&self) -> usize {
        self.spatial_n.unwrap_or((1 << self.level) + 1)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / (self.spatial_n().max(2) - 1) as f64)
    }

    pub fn policy(&self) -> Result<StabilizationPolicy> {
        match self.stabilization.as_str() {
            "min" => Ok(StabilizationPolicy::MinRule { delta0: self.delta0 }),
            "proportional" => Ok(StabilizationPolicy::Proportional { delta0: self.delta0 }),
            "off" => Ok(StabilizationPolicy::Off),
            other => Err(Error::Config(format!(
                "unknown stabilization '{other}' (expected min, proportional or off)"
            ))),
        }
    }

    pub fn cross_sections(&self) -> Result<CrossSections> {
        CrossSections::new(self.sigma_t, self.sigma_s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            cache_factorizations: self.cache_factorizations,
        }
    }

    /// The manufactured case for `ex1`/`ex2`.
    pub fn case(&self) -> Result<Option<ManufacturedCase>> {
        let cs = self.cross_sections()?;
        Ok(match self.example {
            ExampleKind::Ex1 => Some(ManufacturedCase::example1(cs)),
            ExampleKind::Ex2 => Some(ManufacturedCase::example2(cs, self.eta).map_err(|e| Error::Config(e.to_string()))?),
            ExampleKind::Custom => None,
        })
    }

    /// Runs every parameter check without assembling any operator.
    pub fn validate(&self) -> Result<()> {
        if self.example == ExampleKind::Ex2 || self.phase == "hg" {
            PhaseFunction::henyey_greenstein(self.eta).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.cross_sections()?;
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("solver tolerance {} must lie in (0, 1)", self.tol)));
        }
        if self.level > crate::angular_mesh::MAX_LEVEL {
            return Err(Error::Config(format!(
                "angular level {} exceeds the limit {}",
                self.level,
                crate::angular_mesh::MAX_LEVEL
            )));
        }
        let problem = self.problem()?;
        problem.validate()?;
        let mesh = SpatialMesh::build(problem.spatial_n).map_err(|e| Error::Config(e.to_string()))?;
        problem.policy.validate(&mesh, problem.dt)?;
        Ok(())
    }

    /// Builds the solver input. Does not validate time-step bounds.
    pub fn problem(&self) -> Result<ModelProblem> {
        let policy = self.policy()?;
        let (n, dt) = (self.spatial_n(), self.dt());
        if let Some(case) = self.case()? {
            return Ok(case.problem_with(self.level, n, dt, self.final_time, policy));
        }
        let phase = match self.phase.as_str() {
            "isotropic" => PhaseFunction::Isotropic,
            "linear" => PhaseFunction::LinearAnisotropic { b: 1.0 },
            "hg" => PhaseFunction::henyey_greenstein(self.eta).map_err(|e| Error::Config(e.to_string()))?,
            other => return Err(Error::Config(format!("unknown phase '{other}'"))),
        };
        let (f, u0) = (self.source, self.initial);
        Ok(ModelProblem {
            angular_level: self.level,
            spatial_n: n,
            cross_sections: self.cross_sections()?,
            phase,
            source: Arc::new(move |_, _, _| f),
            initial: Arc::new(move |_, _| u0),
            final_time: self.final_time,
            dt,
            policy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.spatial_n(), 3);
        assert_eq!(c.dt(), 0.5);
        assert_eq!((c.sigma_t, c.sigma_s, c.eta, c.final_time), (2.0, 0.5, 0.5, 1.0));
        c.validate().unwrap();
    }

    #[test]
    fn file_text_overrides_defaults() {
        let mut c = RunConfig::default();
        c.merge_text("# comment\nexample = ex2\nlevel=2 # trailing\n\neta = -0.3\n").unwrap();
        assert_eq!(c.example, ExampleKind::Ex2);
        assert_eq!(c.level, 2);
        assert_eq!(c.eta, -0.3);
        assert!(c.merge_text("bogus = 1").is_err());
        assert!(c.merge_text("level").is_err());
    }

    #[test]
    fn rejects_large_time_step() {
        let c = RunConfig {
            dt: Some(0.6),
            final_time: 1.2,
            ..Default::default()
        };
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("Δt ≤ 1/2"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn rejects_eta_outside_open_interval() {
        let c = RunConfig {
            example: ExampleKind::Ex2,
            eta: 1.2,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("η ∈ (−1,1)"));
    }

    #[test]
    fn rejects_oversized_supg_parameter() {
        let c = RunConfig {
            stabilization: "proportional".into(),
            delta0: 0.5,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("δ_K ≤ Δt/4"));
    }

    #[test]
    fn custom_problem_builds() {
        let mut c = RunConfig::default();
        c.merge_text("example = custom\nphase = hg\nsource = 2\ninitial = 0.5").unwrap();
        c.validate().unwrap();
        let p = c.problem().unwrap();
        assert_eq!((p.source)([0.1; 3], [0.0, 0.0, 1.0], 0.0), 2.0);
        assert!(matches!(p.phase, PhaseFunction::HenyeyGreenstein { .. }));
    }
}
