use crate::error::{Error, Result};

/// Errors of one assimilation index. Index 0 describes the initial ensemble
/// and has equal forecast and analysis values, as do free runs.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub time: f64,
    /// State error before the analysis: rRMSE in 1D, `e_omega` in 2D.
    pub state_forecast: f64,
    pub state_analysis: f64,
    /// Parameter rRMSE before and after the analysis, one entry per parameter.
    pub param_forecast: Vec<f64>,
    pub param_analysis: Vec<f64>,
    /// Per-member state errors after the analysis.
    pub member_errors: Vec<f64>,
    pub particle_counts: Vec<usize>,
    /// Per-member parameter values after the analysis, `params[member][k]`.
    pub params: Vec<Vec<f64>>,
}

impl MetricsRecord {
    pub fn mean_particles(&self) -> f64 {
        if self.particle_counts.is_empty() {
            return 0.0;
        }
        self.particle_counts.iter().sum::<usize>() as f64 / self.particle_counts.len() as f64
    }
}

/// `||u_gt||^-1 [N^-1 sum_i ||u_i - u_gt||^2]^1/2` from samples on a uniform
/// periodic grid of spacing `dx` (rectangle rule).
pub fn compute_rrmse(members: &[Vec<f64>], truth: &[f64], dx: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("no members".into()));
    }
    if let Some(i) = members.iter().position(|m| m.len() != truth.len()) {
        return Err(Error::Shape(format!(
            "member {i} has {} samples, truth has {}",
            members[i].len(),
            truth.len()
        )));
    }
    let norm_sq = dx * truth.iter().map(|t| t * t).sum::<f64>();
    if !(norm_sq > 0.0) {
        return Err(Error::InvalidArgument("truth has zero L2 norm".into()));
    }
    let mean_sq = members
        .iter()
        .map(|m| dx * m.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / members.len() as f64;
    Ok((mean_sq / norm_sq).sqrt())
}

/// `|theta_gt|^-1 [N^-1 sum_i (theta_i - theta_gt)^2]^1/2`.
pub fn rrmse_param(values: &[f64], truth: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no members".into()));
    }
    if truth == 0.0 {
        return Err(Error::InvalidArgument("true parameter is zero".into()));
    }
    let ms = values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / values.len() as f64;
    Ok(ms.sqrt() / truth.abs())
}
