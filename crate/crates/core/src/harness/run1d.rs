use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{Adv1dConfig, ExperimentConfig};
use super::metrics::{compute_rrmse, rrmse_param, MetricsRecord};
use super::{adv1d, RunOutput, Snapshot};
use crate::advection_diffusion_1d::{
    eulerian_advance, fd_grid, ground_truth_1d, lagrangian_advance_1d, observe_points_1d, particle_lattice, periodic_heat_kernel, substeps,
    Model1DParams, State1D, PERIOD,
};
use crate::domain::{Domain, Point};
use crate::enkf::{apply_correction_vectors, correction_from_predictions, perturb_observations, ObservationSpec};
use crate::error::{Error, Result};
use crate::kernels::{RedistributionKernel, SmoothingKernel, DEFAULT_IMAGES};
use crate::lagrangian_filters::{
    grid_enkf_update, part_enkf_update, remesh_enkf_update, FilterConfig, FilterKind, LagrangianEnsemble,
};
use crate::particle_field::ParticleSet;
use crate::remeshing::{Boundary, Remesher, UniformGrid};
use crate::rng::{stream, Purpose};

/// State of one 1D member.
#[derive(Clone, Debug)]
pub enum Member1D {
    Particles(ParticleSet<1>),
    Grid(UniformGrid<1>),
}

impl Member1D {
    fn state(&self) -> State1D<'_> {
        match self {
            Member1D::Particles(ps) => State1D::Particles(ps),
            Member1D::Grid(g) => State1D::Grid(g),
        }
    }

    fn particle_count(&self) -> usize {
        match self {
            Member1D::Particles(ps) => ps.len(),
            Member1D::Grid(g) => g.len(),
        }
    }
}

/// Members with their model parameters `[v, D]`.
#[derive(Clone, Debug)]
pub struct Ensemble1D {
    pub members: Vec<Member1D>,
    pub params: Vec<Vec<f64>>,
}

fn particle_spacing(c: &Adv1dConfig) -> f64 {
    PERIOD / c.particles as f64
}

fn particle_kernel(c: &Adv1dConfig) -> Result<SmoothingKernel> {
    SmoothingKernel::periodic_gaussian(c.eps_over_dp * particle_spacing(c), PERIOD, DEFAULT_IMAGES)
}

/// Sampled initial condition and parameters of one member.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw1D {
    pub x0: f64,
    pub sigma0: f64,
    pub v: f64,
    pub d: f64,
}

/// Draws of member `i`, taken from its own stream in a fixed order.
pub fn draw_member_1d(cfg: &ExperimentConfig, i: usize) -> Result<Draw1D> {
    let s = &adv1d(cfg)?.sampling;
    let mut rng = stream(cfg.seed, Purpose::Ensemble, 0, i);
    let x0 = s.x0.sample(&mut rng)?;
    let sigma0 = s.sigma0.sample(&mut rng)?;
    let v = s.v.sample(&mut rng)?;
    let d = s.d.sample(&mut rng)?;
    if !(sigma0 > 0.0) {
        return Err(Error::Config(format!("member {i}: sampled sigma0 = {sigma0} is not positive")));
    }
    Ok(Draw1D { x0, sigma0, v, d })
}

/// Initial states `K(x - x0, sigma0^2 / 2)` and parameters of every member.
pub fn generate_ensemble_1d(cfg: &ExperimentConfig) -> Result<Ensemble1D> {
    let c = adv1d(cfg)?;
    let kernel = particle_kernel(c)?;
    let dp = particle_spacing(c);
    let lattice = particle_lattice(c.particles);
    let volumes = vec![dp; c.particles];
    let mut members = Vec::with_capacity(cfg.members);
    let mut params = Vec::with_capacity(cfg.members);
    for i in 0..cfg.members {
        let Draw1D { x0, sigma0, v, d } = draw_member_1d(cfg, i)?;
        let t0 = 0.5 * sigma0 * sigma0;
        let f = |x: &Point<1>| periodic_heat_kernel(x[0] - x0, t0).unwrap_or(f64::NAN);
        let m = match cfg.filter {
            FilterKind::Grid => {
                let g = fd_grid(c.grid_nodes)?;
                let vals = g.node_positions().iter().map(f).collect();
                Member1D::Grid(g.with_values(vals)?)
            }
            _ => Member1D::Particles(ParticleSet::init_from_function(
                f,
                &lattice,
                &volumes,
                kernel,
                Domain::Periodic { period: PERIOD },
                c.eps_cut,
            )?),
        };
        members.push(m);
        params.push(vec![v, d]);
    }
    Ok(Ensemble1D { members, params })
}

fn forecast_member(c: &Adv1dConfig, m: &Member1D, v: f64, d: f64, window: f64) -> Result<Member1D> {
    let d = d.max(c.diffusion_floor);
    match m {
        Member1D::Particles(ps) => {
            let dp = particle_spacing(c);
            let eps = c.eps_over_dp * dp;
            let n = substeps(window, c.dt, v, d, eps, f64::INFINITY);
            let prm = Model1DParams {
                v,
                d,
                dt: window / n as f64,
                dp,
                eps,
            };
            prm.validate()?;
            Ok(Member1D::Particles(lagrangian_advance_1d(ps, &prm, n)?))
        }
        Member1D::Grid(g) => {
            let h = g.spacing();
            let n = substeps(window, c.dt, v, d, f64::INFINITY, h);
            let prm = Model1DParams::new(v, d, window / n as f64, h)?;
            prm.check_fd(h)?;
            Ok(Member1D::Grid(eulerian_advance(g, &prm, n)?))
        }
    }
}

struct Quadrature {
    points: Vec<Point<1>>,
    dx: f64,
}

impl Quadrature {
    fn new(n: usize) -> Self {
        let dx = PERIOD / n as f64;
        Self {
            points: (0..n).map(|i| [i as f64 * dx]).collect(),
            dx,
        }
    }

    fn sample(&self, m: &Member1D) -> Result<Vec<f64>> {
        observe_points_1d(m.state(), &self.points)
    }
}

#[derive(Clone)]
struct Evaluation {
    state: f64,
    params: Vec<f64>,
    members: Vec<f64>,
}

fn evaluate(c: &Adv1dConfig, q: &Quadrature, ens: &Ensemble1D, t: f64) -> Result<Evaluation> {
    let tr = &c.truth;
    let sigma0 = tr.sigma0_sq.sqrt();
    let truth = q
        .points
        .iter()
        .map(|x| ground_truth_1d(x[0], t, tr.x0, sigma0, tr.v, tr.d))
        .collect::<Result<Vec<_>>>()?;
    let samples = ens.members.par_iter().map(|m| q.sample(m)).collect::<Result<Vec<_>>>()?;
    let state = compute_rrmse(&samples, &truth, q.dx)?;
    let members = samples
        .iter()
        .map(|s| compute_rrmse(std::slice::from_ref(s), &truth, q.dx))
        .collect::<Result<Vec<_>>>()?;
    let vs: Vec<f64> = ens.params.iter().map(|p| p[0]).collect();
    let ds: Vec<f64> = ens.params.iter().map(|p| p[1]).collect();
    Ok(Evaluation {
        state,
        params: vec![rrmse_param(&vs, tr.v)?, rrmse_param(&ds, tr.d)?],
        members,
    })
}

fn record(step: usize, time: f64, before: &Evaluation, after: &Evaluation, ens: &Ensemble1D) -> MetricsRecord {
    MetricsRecord {
        step,
        time,
        state_forecast: before.state,
        state_analysis: after.state,
        param_forecast: before.params.clone(),
        param_analysis: after.params.clone(),
        member_errors: after.members.clone(),
        particle_counts: ens.members.iter().map(Member1D::particle_count).collect(),
        params: ens.params.clone(),
    }
}

/// Noisy observations of the analytic solution at time `t`.
fn observe_truth(cfg: &ExperimentConfig, c: &Adv1dConfig, locations: &[f64], step: usize, t: f64) -> Result<ObservationSpec> {
    let tr = &c.truth;
    let sigma = c.noise_variance.sqrt();
    let mut rng = stream(cfg.seed, Purpose::Observation, step, 0);
    let y = locations
        .iter()
        .map(|&x| Ok(ground_truth_1d(x, t, tr.x0, tr.sigma0_sq.sqrt(), tr.v, tr.d)? + sigma * rng.sample::<f64, _>(StandardNormal)))
        .collect::<Result<Vec<_>>>()?;
    ObservationSpec::isotropic(DVector::from_vec(y), sigma)
}

fn analyze(
    cfg: &ExperimentConfig,
    c: &Adv1dConfig,
    ens: Ensemble1D,
    locations: &[Point<1>],
    obs: &ObservationSpec,
    step: usize,
) -> Result<Ensemble1D> {
    let predictions = ens
        .members
        .par_iter()
        .enumerate()
        .map(|(i, m)| observe_points_1d(m.state(), locations).map_err(|e| e.in_member(i)))
        .collect::<Result<Vec<_>>>()?;
    let perturbed = perturb_observations(obs, cfg.members, |i| stream(cfg.seed, Purpose::Perturbation, step, i));
    let f = correction_from_predictions(&predictions, obs, &perturbed)?;
    let params = if c.calibrate {
        apply_correction_vectors(&ens.params, &f)?
    } else {
        ens.params.clone()
    };
    let members = match cfg.filter {
        FilterKind::Grid => {
            let grids: Vec<UniformGrid<1>> = ens
                .members
                .into_iter()
                .map(|m| match m {
                    Member1D::Grid(g) => Ok(g),
                    Member1D::Particles(_) => Err(Error::Config("grid filter with particle members".into())),
                })
                .collect::<Result<_>>()?;
            let (grids, _) = grid_enkf_update(&grids, &[], &f)?;
            grids.into_iter().map(Member1D::Grid).collect()
        }
        kind => {
            let sets: Vec<ParticleSet<1>> = ens
                .members
                .into_iter()
                .map(|m| match m {
                    Member1D::Particles(p) => Ok(p),
                    Member1D::Grid(_) => Err(Error::Config("particle filter with grid members".into())),
                })
                .collect::<Result<_>>()?;
            let lens = LagrangianEnsemble::new(sets, Vec::new())?;
            let out = if kind == FilterKind::Remesh {
                remesh_enkf_update(&lens, &f, &remesh_config(c)?)?
            } else {
                part_enkf_update(&lens, &f, cfg.construction)?
            };
            out.into_parts().0.into_iter().map(Member1D::Particles).collect()
        }
    };
    Ok(Ensemble1D { members, params })
}

fn remesh_config(c: &Adv1dConfig) -> Result<FilterConfig<1>> {
    let dp = particle_spacing(c);
    let cells = c.particles / 2;
    let grid = UniformGrid::zeros([0.0], 2.0 * dp, [cells], Boundary::Periodic)?;
    let rm = Remesher::new(grid, RedistributionKernel::M4Prime, dp, particle_kernel(c)?)?;
    Ok(FilterConfig::new(FilterKind::Remesh, rm).with_eps_cut(c.eps_cut))
}

/// Twin experiment on the periodic advection-diffusion problem.
pub fn run_1d(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let c = adv1d(cfg)?;
    let window = c.final_time() / cfg.n_assim as f64;
    let obs_x = c.observation_locations();
    let obs_points: Vec<Point<1>> = obs_x.iter().map(|&x| [x]).collect();
    let q = Quadrature::new(c.quadrature_points);

    let mut ens = generate_ensemble_1d(cfg)?;
    let initial = evaluate(c, &q, &ens, 0.0)?;
    let mut records = vec![record(0, 0.0, &initial, &initial, &ens)];

    for k in 1..=cfg.n_assim {
        let t = k as f64 * window;
        let members = ens
            .members
            .par_iter()
            .zip(&ens.params)
            .enumerate()
            .map(|(i, (m, p))| forecast_member(c, m, p[0], p[1], window).map_err(|e| e.in_member(i)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_step(k))?;
        ens = Ensemble1D {
            members,
            params: ens.params,
        };
        let before = evaluate(c, &q, &ens, t)?;
        let after = if cfg.free_run {
            before.clone()
        } else {
            let obs = observe_truth(cfg, c, &obs_x, k, t)?;
            ens = analyze(cfg, c, ens, &obs_points, &obs, k).map_err(|e| e.at_step(k))?;
            evaluate(c, &q, &ens, t)?
        };
        records.push(record(k, t, &before, &after, &ens));
    }

    let t_final = cfg.n_assim as f64 * window;
    let tr = &c.truth;
    let truth_grid = fd_grid(c.quadrature_points)?;
    let truth_vals = truth_grid
        .node_positions()
        .iter()
        .map(|x| ground_truth_1d(x[0], t_final, tr.x0, tr.sigma0_sq.sqrt(), tr.v, tr.d))
        .collect::<Result<Vec<_>>>()?;
    let members = ens
        .members
        .into_iter()
        .map(|m| match m {
            Member1D::Particles(p) => Snapshot::Particles1D(p),
            Member1D::Grid(g) => Snapshot::Grid1D(g),
        })
        .collect();
    Ok(RunOutput {
        config: cfg.clone(),
        records,
        param_names: vec!["v", "d"],
        members,
        truth: Snapshot::Grid1D(truth_grid.with_values(truth_vals)?),
    })
}
