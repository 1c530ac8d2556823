//! Assimilation steps for particle ensembles.
//!
//! Every step has two halves: building the correction matrix `F` from the
//! members' predicted observations, and applying `F` to the members. The
//! `*_update` functions take `F` directly, the `*_step` functions do both.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::enkf::{apply_correction_vectors, correction_from_predictions, CorrectionMatrix, ObservationSpec};
use crate::error::{Error, Result};
use crate::particle_field::{ParticleSet, RidgePenalty, BEALE_MAX_ITERS, BEALE_TOL};
use crate::remeshing::{Remesher, UniformGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Remesh,
    Part,
    Grid,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remesh" => Ok(Self::Remesh),
            "part" => Ok(Self::Part),
            "grid" => Ok(Self::Grid),
            other => Err(Error::InvalidArgument(format!(
                "unknown filter '{other}', expected remesh, part or grid"
            ))),
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Remesh => "remesh",
            Self::Part => "part",
            Self::Grid => "grid",
        })
    }
}

/// How Part-EnKF turns analyzed field samples into intensities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    /// `U_p = u^a(x_p) V_p`.
    #[default]
    Direct,
    /// Beale's iteration seeded at the forecast intensities.
    Beale { max_iters: usize, tol: f64 },
    /// Ridge-regularized least squares; `None` picks the default penalty.
    Ridge { lambda: Option<f64> },
}

impl Construction {
    pub fn beale() -> Self {
        Self::Beale {
            max_iters: BEALE_MAX_ITERS,
            tol: BEALE_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterConfig<const D: usize> {
    pub kind: FilterKind,
    pub construction: Construction,
    /// Particle creation threshold for Remesh-EnKF, in field units.
    pub eps_cut: f64,
    /// Common grid and lattice used by Remesh-EnKF.
    pub remesher: Remesher<D>,
}

impl<const D: usize> FilterConfig<D> {
    pub fn new(kind: FilterKind, remesher: Remesher<D>) -> Self {
        Self {
            kind,
            construction: Construction::Direct,
            eps_cut: 0.0,
            remesher,
        }
    }

    pub fn with_construction(mut self, c: Construction) -> Self {
        self.construction = c;
        self
    }

    pub fn with_eps_cut(mut self, eps_cut: f64) -> Self {
        self.eps_cut = eps_cut;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps_cut >= 0.0) {
            return Err(Error::InvalidArgument(format!("eps_cut must be >= 0, got {}", self.eps_cut)));
        }
        Ok(())
    }
}

/// Maps a member's particle representation to predicted observations.
pub trait ObservationOperator<const D: usize>: Sync {
    fn observe(&self, member: &ParticleSet<D>) -> Result<Vec<f64>>;
}

/// Field values at fixed points.
#[derive(Clone, Debug)]
pub struct PointEvaluation<const D: usize> {
    pub points: Vec<Point<D>>,
}

impl<const D: usize> ObservationOperator<D> for PointEvaluation<D> {
    fn observe(&self, member: &ParticleSet<D>) -> Result<Vec<f64>> {
        Ok(member.eval_many(&self.points))
    }
}

/// Particle members plus optional per-member parameter vectors.
#[derive(Clone, Debug)]
pub struct LagrangianEnsemble<const D: usize> {
    members: Vec<ParticleSet<D>>,
    params: Vec<Vec<f64>>,
}

impl<const D: usize> LagrangianEnsemble<D> {
    /// `params` is either empty or holds one equally long vector per member.
    pub fn new(members: Vec<ParticleSet<D>>, params: Vec<Vec<f64>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let eps = members[0].kernel().eps();
        let family = std::mem::discriminant(&members[0].kernel().family());
        for (i, m) in members.iter().enumerate() {
            if (m.kernel().eps() - eps).abs() > 1e-14 * eps
                || std::mem::discriminant(&m.kernel().family()) != family
            {
                return Err(Error::InvalidArgument(format!("member {i} uses a different smoothing kernel")));
            }
        }
        let params = if params.is_empty() { vec![Vec::new(); members.len()] } else { params };
        if params.len() != members.len() {
            return Err(Error::Shape(format!(
                "{} parameter records for {} members",
                params.len(),
                members.len()
            )));
        }
        if params.iter().any(|p| p.len() != params[0].len()) {
            return Err(Error::Shape("parameter records differ in length".into()));
        }
        Ok(Self { members, params })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[ParticleSet<D>] {
        &self.members
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn into_parts(self) -> (Vec<ParticleSet<D>>, Vec<Vec<f64>>) {
        (self.members, self.params)
    }

    /// Predicted observations of every member, computed in parallel.
    pub fn predict(&self, op: &dyn ObservationOperator<D>) -> Result<Vec<Vec<f64>>> {
        self.members
            .par_iter()
            .enumerate()
            .map(|(i, m)| op.observe(m).map_err(|e| e.in_member(i)))
            .collect()
    }
}

/// Result of one assimilation step.
#[derive(Clone, Debug)]
pub struct StepOutcome<T> {
    pub analysis: T,
    pub correction: CorrectionMatrix,
    pub predictions: Vec<Vec<f64>>,
}

/// Member `i`'s analyzed field at `points`:
/// `u_i^f(x) + sum_j F_ji u_j^f(x)`.
pub fn analyzed_field_at<const D: usize>(
    members: &[ParticleSet<D>],
    f: &CorrectionMatrix,
    i: usize,
    points: &[Point<D>],
) -> Vec<f64> {
    let mut out = members[i].eval_many(points);
    let m = f.matrix();
    for (j, member) in members.iter().enumerate() {
        let c = m[(j, i)];
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(member.eval_many(points)) {
                *o += c * v;
            }
        }
    }
    out
}

fn check_members(n: usize, f: &CorrectionMatrix) -> Result<()> {
    if f.members() != n {
        return Err(Error::Shape(format!("F is {0}x{0} for {n} members", f.members())));
    }
    Ok(())
}

fn updated_params(params: &[Vec<f64>], f: &CorrectionMatrix) -> Result<Vec<Vec<f64>>> {
    if params.iter().all(Vec::is_empty) {
        return Ok(params.to_vec());
    }
    apply_correction_vectors(params, f)
}

/// Replace an empty member by a single zero-intensity particle at the domain
/// center, so that later steps always see a well-formed particle set.
pub fn reseed_if_empty<const D: usize>(ps: ParticleSet<D>, volume: f64) -> Result<ParticleSet<D>> {
    if !ps.is_empty() {
        return Ok(ps);
    }
    let center = ps.domain().center();
    ParticleSet::new(vec![center], vec![0.0], vec![volume], *ps.kernel(), *ps.domain())
}

/// Remesh-EnKF with a given `F`: project every member to the common grid,
/// combine nodal values, regenerate lattices.
pub fn remesh_enkf_update<const D: usize>(
    ens: &LagrangianEnsemble<D>,
    f: &CorrectionMatrix,
    cfg: &FilterConfig<D>,
) -> Result<LagrangianEnsemble<D>> {
    cfg.validate()?;
    let n = ens.len();
    check_members(n, f)?;
    let rm = &cfg.remesher;
    let grids: Vec<UniformGrid<D>> = ens
        .members
        .par_iter()
        .enumerate()
        .map(|(i, m)| rm.project(m).map_err(|e| e.in_member(i)))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = grids.iter().map(|g| g.values().to_vec()).collect();
    let analyzed = apply_correction_vectors(&values, f)?;
    let vol = rm.dp().powi(D as i32);
    let members = analyzed
        .into_par_iter()
        .enumerate()
        .map(|(i, v)| {
            let g = rm.grid().with_values(v)?;
            reseed_if_empty(rm.regenerate(&g, cfg.eps_cut)?, vol).map_err(|e| e.in_member(i))
        })
        .collect::<Result<Vec<_>>>()?;
    LagrangianEnsemble::new(members, updated_params(&ens.params, f)?)
}

/// Part-EnKF with a given `F`: keep every member's particles, rebuild the
/// intensities from the analyzed field sampled at them.
pub fn part_enkf_update<const D: usize>(
    ens: &LagrangianEnsemble<D>,
    f: &CorrectionMatrix,
    construction: Construction,
) -> Result<LagrangianEnsemble<D>> {
    let n = ens.len();
    check_members(n, f)?;
    let members = (0..n)
        .into_par_iter()
        .map(|i| {
            let m = &ens.members[i];
            let targets = analyzed_field_at(&ens.members, f, i, m.positions());
            construct(m, &targets, construction).map_err(|e| e.in_member(i))
        })
        .collect::<Result<Vec<_>>>()?;
    LagrangianEnsemble::new(members, updated_params(&ens.params, f)?)
}

fn construct<const D: usize>(m: &ParticleSet<D>, targets: &[f64], c: Construction) -> Result<ParticleSet<D>> {
    match c {
        Construction::Direct => {
            let us = targets.iter().zip(m.volumes()).map(|(t, v)| t * v).collect();
            m.with_intensities(us)
        }
        Construction::Beale { max_iters, tol } => Ok(m.beale_correct(targets, max_iters, tol)?.set),
        Construction::Ridge { lambda } => {
            let penalty = lambda.map_or(RidgePenalty::Auto, RidgePenalty::Fixed);
            m.ridge_fit(targets, penalty)
        }
    }
}

fn correction_for<const D: usize>(
    ens: &LagrangianEnsemble<D>,
    op: &dyn ObservationOperator<D>,
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
) -> Result<(CorrectionMatrix, Vec<Vec<f64>>)> {
    let predictions = ens.predict(op)?;
    let f = correction_from_predictions(&predictions, obs, perturbed)?;
    Ok((f, predictions))
}

/// Full Remesh-EnKF step. Predicted observations come from the particle
/// representation before projection.
pub fn remesh_enkf_step<const D: usize>(
    ens: &LagrangianEnsemble<D>,
    op: &dyn ObservationOperator<D>,
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
    cfg: &FilterConfig<D>,
) -> Result<StepOutcome<LagrangianEnsemble<D>>> {
    let (correction, predictions) = correction_for(ens, op, obs, perturbed)?;
    let analysis = remesh_enkf_update(ens, &correction, cfg)?;
    Ok(StepOutcome {
        analysis,
        correction,
        predictions,
    })
}

/// Full Part-EnKF step.
pub fn part_enkf_step<const D: usize>(
    ens: &LagrangianEnsemble<D>,
    op: &dyn ObservationOperator<D>,
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
    cfg: &FilterConfig<D>,
) -> Result<StepOutcome<LagrangianEnsemble<D>>> {
    let (correction, predictions) = correction_for(ens, op, obs, perturbed)?;
    let analysis = part_enkf_update(ens, &correction, cfg.construction)?;
    Ok(StepOutcome {
        analysis,
        correction,
        predictions,
    })
}

/// Grid-EnKF with a given `F` on nodal values; also returns updated parameters.
pub fn grid_enkf_update<const D: usize>(
    grids: &[UniformGrid<D>],
    params: &[Vec<f64>],
    f: &CorrectionMatrix,
) -> Result<(Vec<UniformGrid<D>>, Vec<Vec<f64>>)> {
    check_members(grids.len(), f)?;
    if let Some(i) = grids.iter().position(|g| !g.same_geometry(&grids[0])) {
        return Err(Error::Shape(format!("member {i} grid geometry differs from member 0")));
    }
    let values: Vec<Vec<f64>> = grids.iter().map(|g| g.values().to_vec()).collect();
    let analyzed = apply_correction_vectors(&values, f)?;
    let out = grids
        .iter()
        .zip(analyzed)
        .map(|(g, v)| g.with_values(v))
        .collect::<Result<Vec<_>>>()?;
    let params = if params.is_empty() { Vec::new() } else { updated_params(params, f)? };
    Ok((out, params))
}

/// Full Grid-EnKF step with externally computed predictions.
pub fn grid_enkf_step<const D: usize>(
    grids: &[UniformGrid<D>],
    params: &[Vec<f64>],
    predictions: Vec<Vec<f64>>,
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
) -> Result<StepOutcome<(Vec<UniformGrid<D>>, Vec<Vec<f64>>)>> {
    let correction = correction_from_predictions(&predictions, obs, perturbed)?;
    let analysis = grid_enkf_update(grids, params, &correction)?;
    Ok(StepOutcome {
        analysis,
        correction,
        predictions,
    })
}
