//! Experiment configuration, stored as versioned JSON.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian_filters::{Construction, FilterKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Sampling distribution of a scalar. `Normal` takes a variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Fixed { value: f64 },
    Normal { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
}

impl Dist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Dist::Fixed { value } => Ok(value),
            Dist::Normal { mean, variance } => {
                let n = Normal::new(mean, variance.max(0.0).sqrt())
                    .map_err(|e| Error::Config(format!("normal({mean}, {variance}): {e}")))?;
                Ok(n.sample(rng))
            }
            Dist::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::Config(format!("uniform bounds {low} > {high}")));
                }
                Ok(Uniform::new_inclusive(low, high).sample(rng))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Fixed { value } => value,
            Dist::Normal { mean, .. } => mean,
            Dist::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Dist::Fixed { value } => value.is_finite(),
            Dist::Normal { mean, variance } => mean.is_finite() && variance >= 0.0,
            Dist::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution for {what}: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(Error::Config(format!("unknown preset '{other}', expected paper or desk"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub filter: FilterKind,
    #[serde(default)]
    pub construction: Construction,
    pub members: usize,
    pub n_assim: usize,
    /// Skip every analysis; only forecasts are recorded.
    #[serde(default)]
    pub free_run: bool,
    pub testbed: Testbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Testbed {
    Adv1d(Adv1dConfig),
    Vortex2d(Vortex2dConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adv1dConfig {
    pub truth: Truth1d,
    pub sampling: Sampling1d,
    /// Particles per member on `[0, 2 pi)`.
    pub particles: usize,
    /// Smoothing length over particle spacing.
    pub eps_over_dp: f64,
    /// Nodes of the finite-difference grid used by Grid-EnKF.
    pub grid_nodes: usize,
    /// Largest model time step; windows are split into equal stable steps.
    pub dt: f64,
    /// Particle creation threshold, in field units.
    pub eps_cut: f64,
    /// Observation locations; `None` means `j 2 pi / observation_count`.
    #[serde(default)]
    pub observation_points: Option<Vec<f64>>,
    pub observation_count: usize,
    pub noise_variance: f64,
    /// Final time; `None` means one period of the true advection, `2 pi / v`.
    #[serde(default)]
    pub final_time: Option<f64>,
    /// Calibrate `v` and `D` with the same correction as the state.
    pub calibrate: bool,
    /// Smallest diffusion coefficient handed to the models.
    pub diffusion_floor: f64,
    /// Uniform quadrature points for the state error.
    pub quadrature_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth1d {
    pub x0: f64,
    pub sigma0_sq: f64,
    pub v: f64,
    pub d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling1d {
    pub x0: Dist,
    pub sigma0: Dist,
    pub v: Dist,
    pub d: Dist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vortex2dConfig {
    pub truth: Truth2d,
    pub sampling: Sampling2d,
    /// Solver cells per axis for the members; particles have `dp = pi / (2 cells)`.
    pub cells: usize,
    /// Resolution factor of the reference run.
    pub truth_refinement: usize,
    pub dt: f64,
    pub window: f64,
    pub eps_omega: f64,
    pub remesh_per_window: usize,
    /// Observation grid is `obs_per_axis^2` points at `(j + 1/2) pi / obs_per_axis`.
    pub obs_per_axis: usize,
    pub noise_std: f64,
    pub viscosity_floor: f64,
    /// Cells per axis of the vorticity error quadrature grid.
    pub quadrature_cells: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth2d {
    pub center: [f64; 2],
    pub alpha: f64,
    pub radius: f64,
    pub u: f64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling2d {
    pub radius: Dist,
    pub alpha: Dist,
    pub center_x: Dist,
    pub center_y: Dist,
    pub u: Dist,
    pub nu: Dist,
}

impl Adv1dConfig {
    pub fn paper() -> Self {
        Self {
            truth: Truth1d {
                x0: 0.02,
                sigma0_sq: 0.5,
                v: 1.0,
                d: 0.05,
            },
            sampling: Sampling1d {
                x0: Dist::Normal {
                    mean: PI / 2.0 + 0.6,
                    variance: 0.5,
                },
                sigma0: Dist::Uniform { low: 0.8, high: 1.2 },
                v: Dist::Normal {
                    mean: 0.9,
                    variance: 1.2,
                },
                d: Dist::Uniform { low: 0.02, high: 0.08 },
            },
            particles: 100,
            eps_over_dp: 1.3,
            grid_nodes: 100,
            dt: 0.01,
            eps_cut: 0.0,
            observation_points: None,
            observation_count: 6,
            noise_variance: 0.05,
            final_time: None,
            calibrate: true,
            diffusion_floor: 1e-4,
            quadrature_points: 1000,
        }
    }

    pub fn final_time(&self) -> f64 {
        self.final_time.unwrap_or(2.0 * PI / self.truth.v)
    }

    pub fn observation_locations(&self) -> Vec<f64> {
        match &self.observation_points {
            Some(p) => p.clone(),
            None => (0..self.observation_count)
                .map(|j| j as f64 * 2.0 * PI / self.observation_count as f64)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        for (d, name) in [(s.x0, "x0"), (s.sigma0, "sigma0"), (s.v, "v"), (s.d, "d")] {
            d.validate(name)?;
        }
        let positive = [
            (self.truth.sigma0_sq, "truth.sigma0_sq"),
            (self.truth.d, "truth.d"),
            (self.eps_over_dp, "eps_over_dp"),
            (self.dt, "dt"),
            (self.noise_variance, "noise_variance"),
            (self.diffusion_floor, "diffusion_floor"),
            (self.final_time(), "final_time"),
        ];
        for (v, name) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.particles < 4 || !self.particles.is_multiple_of(2) {
            return Err(Error::Config(format!("particles must be even and >= 4, got {}", self.particles)));
        }
        if self.grid_nodes < 4 {
            return Err(Error::Config(format!("grid_nodes must be >= 4, got {}", self.grid_nodes)));
        }
        if !(self.eps_cut >= 0.0) {
            return Err(Error::Config(format!("eps_cut must be >= 0, got {}", self.eps_cut)));
        }
        if self.observation_locations().is_empty() {
            return Err(Error::Config("no observation points".into()));
        }
        if self.quadrature_points < 10 {
            return Err(Error::Config("quadrature_points must be >= 10".into()));
        }
        Ok(())
    }
}

impl Vortex2dConfig {
    pub fn paper() -> Self {
        Self {
            truth: Truth2d {
                center: [PI / 2.0, PI / 2.0],
                alpha: 7.0 * PI / 8.0,
                radius: 0.5,
                u: 0.25,
                nu: 0.0015,
            },
            sampling: Sampling2d {
                radius: Dist::Normal {
                    mean: 0.5,
                    variance: 0.05 * 0.05,
                },
                alpha: Dist::Uniform {
                    low: PI / 2.0,
                    high: PI,
                },
                center_x: Dist::Normal {
                    mean: PI / 2.0,
                    variance: 0.01,
                },
                center_y: Dist::Normal {
                    mean: PI / 2.0,
                    variance: 0.01,
                },
                u: Dist::Uniform { low: 0.25, high: 0.5 },
                nu: Dist::Normal {
                    mean: 0.0015,
                    variance: 0.0005 * 0.0005,
                },
            },
            cells: 128,
            truth_refinement: 2,
            dt: 0.005,
            window: 1.0,
            eps_omega: 1e-4,
            remesh_per_window: 2,
            obs_per_axis: 12,
            noise_std: 0.05,
            viscosity_floor: 1e-5,
            quadrature_cells: 256,
        }
    }

    pub fn desk() -> Self {
        Self {
            cells: 64,
            obs_per_axis: 8,
            quadrature_cells: 128,
            ..Self::paper()
        }
    }

    fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        for (d, name) in [
            (s.radius, "radius"),
            (s.alpha, "alpha"),
            (s.center_x, "center_x"),
            (s.center_y, "center_y"),
            (s.u, "u"),
            (s.nu, "nu"),
        ] {
            d.validate(name)?;
        }
        for (v, name) in [
            (self.dt, "dt"),
            (self.window, "window"),
            (self.noise_std, "noise_std"),
            (self.viscosity_floor, "viscosity_floor"),
            (self.truth.nu, "truth.nu"),
            (self.truth.radius, "truth.radius"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps_omega >= 0.0) {
            return Err(Error::Config(format!("eps_omega must be >= 0, got {}", self.eps_omega)));
        }
        if self.truth_refinement == 0 || self.obs_per_axis == 0 || self.quadrature_cells < 2 {
            return Err(Error::Config("truth_refinement, obs_per_axis and quadrature_cells must be positive".into()));
        }
        let steps = self.window / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(Error::Config(format!("window {} is not a multiple of dt {}", self.window, self.dt)));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn adv1d(preset: Preset) -> Self {
        let (members, n_assim) = match preset {
            Preset::Paper => (25, 30),
            Preset::Desk => (10, 15),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 2024,
            filter: FilterKind::Remesh,
            construction: Construction::Direct,
            members,
            n_assim,
            free_run: false,
            testbed: Testbed::Adv1d(Adv1dConfig::paper()),
        }
    }

    pub fn vortex2d(preset: Preset) -> Self {
        let (members, n_assim, tb) = match preset {
            Preset::Paper => (32, 10, Vortex2dConfig::paper()),
            Preset::Desk => (8, 5, Vortex2dConfig::desk()),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 2024,
            filter: FilterKind::Remesh,
            construction: Construction::Direct,
            members,
            n_assim,
            free_run: false,
            testbed: Testbed::Vortex2d(tb),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.members < 2 {
            return Err(Error::Config(format!("members must be >= 2, got {}", self.members)));
        }
        if self.n_assim < 1 {
            return Err(Error::Config("n_assim must be >= 1".into()));
        }
        match &self.testbed {
            Testbed::Adv1d(c) => c.validate(),
            Testbed::Vortex2d(c) => {
                if self.filter == FilterKind::Grid {
                    return Err(Error::Config("the grid filter is only available for the 1D testbed".into()));
                }
                c.validate()
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
