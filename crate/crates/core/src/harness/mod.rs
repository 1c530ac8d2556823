//! Twin experiments: a known reference run is observed with noise and the
//! filters try to recover it.
//!
//! Each run produces one [`MetricsRecord`] per assimilation index, starting
//! with the initial ensemble at index 0, and final snapshots of every member.

mod config;
mod metrics;
mod output;
mod run1d;
mod run2d;

pub use config::{
    Adv1dConfig, Dist, ExperimentConfig, Preset, Sampling1d, Sampling2d, Testbed, Truth1d, Truth2d, Vortex2dConfig,
    SCHEMA_VERSION,
};
pub use metrics::{compute_rrmse, rrmse_param, MetricsRecord};
pub use output::write_outputs;
pub use run1d::{draw_member_1d, generate_ensemble_1d, run_1d, Draw1D, Ensemble1D, Member1D};
pub use run2d::{draw_member_2d, generate_ensemble_2d, run_2d, run_2d_with_truth, truth_2d, TruthRun2D};

use crate::error::{Error, Result};
use crate::remeshing::UniformGrid;
use crate::ParticleSet;

/// Final state of one member, or of the reference run.
#[derive(Clone, Debug)]
pub enum Snapshot {
    Particles1D(ParticleSet<1>),
    Grid1D(UniformGrid<1>),
    Particles2D(ParticleSet<2>),
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    /// Names of the per-member parameters, in the order stored in each record.
    pub param_names: Vec<&'static str>,
    pub members: Vec<Snapshot>,
    pub truth: Snapshot,
}

impl RunOutput {
    pub fn first(&self) -> &MetricsRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &MetricsRecord {
        &self.records[self.records.len() - 1]
    }
}

/// Run whichever testbed `cfg` describes.
pub fn run_twin_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match &cfg.testbed {
        Testbed::Adv1d(_) => run_1d(cfg),
        Testbed::Vortex2d(_) => run_2d(cfg),
    }
}

fn adv1d(cfg: &ExperimentConfig) -> Result<&Adv1dConfig> {
    match &cfg.testbed {
        Testbed::Adv1d(c) => Ok(c),
        Testbed::Vortex2d(_) => Err(Error::Config("expected an adv1d testbed".into())),
    }
}

fn vortex2d(cfg: &ExperimentConfig) -> Result<&Vortex2dConfig> {
    match &cfg.testbed {
        Testbed::Vortex2d(c) => Ok(c),
        Testbed::Adv1d(_) => Err(Error::Config("expected a vortex2d testbed".into())),
    }
}
