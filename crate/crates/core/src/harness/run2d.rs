use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Vortex2dConfig};
use super::metrics::{rrmse_param, MetricsRecord};
use super::{vortex2d, RunOutput, Snapshot};
use crate::enkf::{perturb_observations, ObservationSpec};
use crate::error::{Error, Result};
use crate::lagrangian_filters::{part_enkf_step, remesh_enkf_step, FilterConfig, FilterKind, LagrangianEnsemble};
use crate::particle_field::ParticleSet;
use crate::remeshing::UniformGrid;
use crate::rng::{stream, Purpose};
use crate::vortex_2d::{
    member_errors_omega, observation_points, observe_velocity, quadrature_grid, vorticity_on, DipoleParams,
    Vortex2DModel, VelocityObservation,
};

/// Reference trajectory sampled at every assimilation time.
///
/// It depends only on the truth and numerical settings, so one run can serve
/// every filter, seed and noise level of the same configuration.
#[derive(Clone, Debug)]
pub struct TruthRun2D {
    key: TruthKey,
    /// Particle states at `t = k window`, `k = 0..=n_assim`.
    pub states: Vec<ParticleSet<2>>,
    /// Vorticity on the error quadrature grid at the same times.
    pub vorticity: Vec<UniformGrid<2>>,
    /// Noise-free velocity observations at the same times.
    pub velocities: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
struct TruthKey {
    truth: [f64; 6],
    cells: usize,
    dt: f64,
    window: f64,
    eps_omega: f64,
    remesh_per_window: usize,
    obs_per_axis: usize,
    quadrature_cells: usize,
}

impl TruthKey {
    fn of(c: &Vortex2dConfig) -> Self {
        let t = &c.truth;
        Self {
            truth: [t.center[0], t.center[1], t.alpha, t.radius, t.u, t.nu],
            cells: c.cells * c.truth_refinement,
            dt: c.dt,
            window: c.window,
            eps_omega: c.eps_omega,
            remesh_per_window: c.remesh_per_window,
            obs_per_axis: c.obs_per_axis,
            quadrature_cells: c.quadrature_cells,
        }
    }
}

/// Run the reference dipole at `truth_refinement` times the member resolution.
pub fn truth_2d(cfg: &ExperimentConfig) -> Result<TruthRun2D> {
    cfg.validate()?;
    let c = vortex2d(cfg)?;
    let key = TruthKey::of(c);
    let model = Vortex2DModel::new(key.cells, c.dt, c.eps_omega, c.remesh_per_window)?;
    let t = &c.truth;
    let p = DipoleParams {
        u: t.u,
        radius: t.radius,
        alpha: t.alpha,
        center: t.center,
    };
    let points = observation_points(c.obs_per_axis);
    let quad = quadrature_grid(c.quadrature_cells)?;
    let mut cur = model.dipole(&p)?;
    let mut states = Vec::with_capacity(cfg.n_assim + 1);
    let mut vorticity = Vec::with_capacity(cfg.n_assim + 1);
    let mut velocities = Vec::with_capacity(cfg.n_assim + 1);
    for k in 0..=cfg.n_assim {
        if k > 0 {
            cur = model.forecast(&cur, t.nu, c.window).map_err(|e| e.at_step(k))?;
        }
        vorticity.push(vorticity_on(&cur, &quad)?);
        velocities.push(observe_velocity(&cur, model.vic(), &points)?);
        states.push(cur.clone());
    }
    Ok(TruthRun2D {
        key,
        states,
        vorticity,
        velocities,
    })
}

/// Sampled dipole and viscosity of member `i`, in a fixed draw order.
pub fn draw_member_2d(cfg: &ExperimentConfig, i: usize) -> Result<(DipoleParams, f64)> {
    let c = vortex2d(cfg)?;
    let s = &c.sampling;
    let mut rng = stream(cfg.seed, Purpose::Ensemble, 0, i);
    let radius = s.radius.sample(&mut rng)?;
    let alpha = s.alpha.sample(&mut rng)?;
    let cx = s.center_x.sample(&mut rng)?;
    let cy = s.center_y.sample(&mut rng)?;
    let u = s.u.sample(&mut rng)?;
    let nu = s.nu.sample(&mut rng)?.max(c.viscosity_floor);
    let p = DipoleParams {
        u,
        radius,
        alpha,
        center: [cx, cy],
    };
    p.validate().map_err(|e| e.in_member(i))?;
    Ok((p, nu))
}

/// Sampled dipoles on the member lattice, and their viscosities.
pub fn generate_ensemble_2d(cfg: &ExperimentConfig, model: &Vortex2DModel) -> Result<(Vec<ParticleSet<2>>, Vec<f64>)> {
    let draws = (0..cfg.members).map(|i| draw_member_2d(cfg, i)).collect::<Result<Vec<_>>>()?;
    let members = draws
        .par_iter()
        .enumerate()
        .map(|(i, (p, _))| model.dipole(p).map_err(|e| e.in_member(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((members, draws.into_iter().map(|(_, nu)| nu).collect()))
}

/// Twin experiment on the wall-bounded dipole; runs its own reference.
pub fn run_2d(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let truth = truth_2d(cfg)?;
    run_2d_with_truth(cfg, &truth)
}

fn evaluate(members: &[ParticleSet<2>], truth: &UniformGrid<2>, nus: &[f64], nu_true: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let errs = member_errors_omega(members, truth)?;
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((mean, vec![rrmse_param(nus, nu_true)?], errs))
}

/// Twin experiment against a precomputed reference.
pub fn run_2d_with_truth(cfg: &ExperimentConfig, truth: &TruthRun2D) -> Result<RunOutput> {
    cfg.validate()?;
    let c = vortex2d(cfg)?;
    if truth.key != TruthKey::of(c) || truth.states.len() < cfg.n_assim + 1 {
        return Err(Error::Config("reference run does not match this configuration".into()));
    }
    let model = Vortex2DModel::new(c.cells, c.dt, c.eps_omega, c.remesh_per_window)?;
    let op = VelocityObservation {
        vic: model.vic().clone(),
        points: observation_points(c.obs_per_axis),
    };
    let fcfg = FilterConfig::new(cfg.filter, model.remesher().clone())
        .with_eps_cut(c.eps_omega)
        .with_construction(cfg.construction);
    let (mut members, nus) = generate_ensemble_2d(cfg, &model)?;
    let params: Vec<Vec<f64>> = nus.iter().map(|&nu| vec![nu]).collect();
    let counts = |m: &[ParticleSet<2>]| m.iter().map(ParticleSet::len).collect::<Vec<_>>();

    let (e0, p0, m0) = evaluate(&members, &truth.vorticity[0], &nus, c.truth.nu)?;
    let mut records = vec![MetricsRecord {
        step: 0,
        time: 0.0,
        state_forecast: e0,
        state_analysis: e0,
        param_forecast: p0.clone(),
        param_analysis: p0,
        member_errors: m0,
        particle_counts: counts(&members),
        params: params.clone(),
    }];

    for k in 1..=cfg.n_assim {
        let time = k as f64 * c.window;
        members = members
            .par_iter()
            .zip(&nus)
            .enumerate()
            .map(|(i, (m, &nu))| model.forecast(m, nu, c.window).map_err(|e| e.in_member(i)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_step(k))?;
        let (ef, pf, mf) = evaluate(&members, &truth.vorticity[k], &nus, c.truth.nu)?;
        let (ea, pa, ma) = if cfg.free_run {
            (ef, pf.clone(), mf)
        } else {
            let obs = observe(cfg, c, &truth.velocities[k], k)?;
            let perturbed = perturb_observations(&obs, cfg.members, |i| stream(cfg.seed, Purpose::Perturbation, k, i));
            let ens = LagrangianEnsemble::new(members, Vec::new())?;
            let out = match cfg.filter {
                FilterKind::Remesh => remesh_enkf_step(&ens, &op, &obs, &perturbed, &fcfg),
                FilterKind::Part => part_enkf_step(&ens, &op, &obs, &perturbed, &fcfg),
                FilterKind::Grid => Err(Error::Config("the grid filter is only available for the 1D testbed".into())),
            }
            .map_err(|e| e.at_step(k))?;
            members = out.analysis.into_parts().0;
            evaluate(&members, &truth.vorticity[k], &nus, c.truth.nu)?
        };
        records.push(MetricsRecord {
            step: k,
            time,
            state_forecast: ef,
            state_analysis: ea,
            param_forecast: pf,
            param_analysis: pa,
            member_errors: ma,
            particle_counts: counts(&members),
            params: params.clone(),
        });
    }

    Ok(RunOutput {
        config: cfg.clone(),
        records,
        param_names: vec!["nu"],
        members: members.into_iter().map(Snapshot::Particles2D).collect(),
        truth: Snapshot::Particles2D(truth.states[cfg.n_assim].clone()),
    })
}

fn observe(cfg: &ExperimentConfig, c: &Vortex2dConfig, clean: &[f64], step: usize) -> Result<ObservationSpec> {
    let mut rng = stream(cfg.seed, Purpose::Observation, step, 0);
    let y: Vec<f64> = clean
        .iter()
        .map(|v| v + c.noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ObservationSpec::isotropic(DVector::from_vec(y), c.noise_std)
}
