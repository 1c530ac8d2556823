//! Two-dimensional vortex flow in the box `[0, pi]^2`.
//!
//! Particles carry circulations `Gamma_p = omega(x_p) V_p`. A forecast step
//! advects them with the vortex-in-cell velocity (third-order Runge–Kutta),
//! diffuses circulation by particle strength exchange, and periodically
//! remeshes onto the solver grid, discarding particles where `|omega|` falls
//! below a threshold.

mod bessel;
mod poisson;
mod vic;

use std::f64::consts::PI;

use rayon::prelude::*;

pub use bessel::{j0, j1, J1_FIRST_ZERO};
pub use poisson::PoissonSolver;
pub use vic::{interleave, VelocityField, VicSolver, MIN_NODES};

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, PseKernel, RedistributionKernel, SmoothingKernel};
use crate::lagrangian_filters::{reseed_if_empty, ObservationOperator};
use crate::particle_field::ParticleSet;
use crate::remeshing::{project_to_grid, Boundary, Remesher, UniformGrid};

pub const SIDE: f64 = PI;

/// Smoothing length in units of the particle spacing.
pub const EPS_OVER_DP: f64 = 2.0;

/// Kernel truncation radius in units of the smoothing length; the dropped
/// Gaussian tail mass is `exp(-12.5)`, about 4e-6.
pub const KERNEL_CUTOFF: f64 = 5.0;

pub fn box_domain() -> Domain<2> {
    Domain::Box {
        lo: [0.0, 0.0],
        hi: [SIDE, SIDE],
    }
}

/// Truncated Gaussian blob of width `eps`.
pub fn blob_kernel(eps: f64) -> Result<SmoothingKernel> {
    SmoothingKernel::gaussian(eps)?.with_cutoff(KERNEL_CUTOFF)
}

/// Particle state plus viscosity.
#[derive(Clone, Debug)]
pub struct VortexState {
    pub particles: ParticleSet<2>,
    pub nu: f64,
}

impl VortexState {
    pub fn new(particles: ParticleSet<2>, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity must be > 0, got {nu}")));
        }
        if !matches!(particles.domain(), Domain::Box { .. }) {
            return Err(Error::InvalidArgument("vortex particles must live in a box domain".into()));
        }
        Ok(Self { particles, nu })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleParams {
    /// Translation speed.
    pub u: f64,
    pub radius: f64,
    /// Direction of travel, radians.
    pub alpha: f64,
    pub center: Point<2>,
}

impl DipoleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("dipole radius must be > 0, got {}", self.radius)));
        }
        let c = self.center;
        let wall = c[0].min(c[1]).min(SIDE - c[0]).min(SIDE - c[1]);
        if !(wall > self.radius) {
            return Err(Error::InvalidArgument(format!(
                "dipole of radius {} at {c:?} touches the walls",
                self.radius
            )));
        }
        Ok(())
    }

    /// `k` with `k R` the first positive zero of `J1`.
    pub fn wavenumber(&self) -> f64 {
        J1_FIRST_ZERO / self.radius
    }

    /// `omega = -2 k U J1(k r) / J0(k R) sin(theta - alpha)` inside `r < R`,
    /// with `theta` the polar angle about the center.
    pub fn vorticity(&self, x: &Point<2>) -> f64 {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let r = dx.hypot(dy);
        if r >= self.radius {
            return 0.0;
        }
        let k = self.wavenumber();
        let theta = dy.atan2(dx);
        -2.0 * k * self.u * j1(k * r) / j0(J1_FIRST_ZERO) * (theta - self.alpha).sin()
    }
}

/// Particles at `(m + 1/2) dp` covering the box.
pub fn particle_lattice(dp: f64) -> Result<Vec<Point<2>>> {
    let n = (SIDE / dp).round() as usize;
    if n == 0 || ((n as f64) * dp - SIDE).abs() > 1e-9 * SIDE {
        return Err(Error::InvalidArgument(format!("dp = {dp} does not divide the box side")));
    }
    Ok((0..n * n)
        .map(|c| [((c % n) as f64 + 0.5) * dp, ((c / n) as f64 + 0.5) * dp])
        .collect())
}

/// Dipole sampled on the particle lattice; particles with
/// `|omega| <= eps_omega` are dropped.
pub fn lamb_chaplygin_init(p: &DipoleParams, dp: f64, eps_omega: f64, kernel: SmoothingKernel) -> Result<ParticleSet<2>> {
    p.validate()?;
    let xs = particle_lattice(dp)?;
    let vs = vec![dp * dp; xs.len()];
    ParticleSet::init_from_function(|x| p.vorticity(x), &xs, &vs, kernel, box_domain(), eps_omega)
}

/// Velocity at the particles of a state.
pub trait VelocitySource: Sync {
    fn velocities(&self, ps: &ParticleSet<2>) -> Result<Vec<[f64; 2]>>;
}

impl VelocitySource for VicSolver {
    fn velocities(&self, ps: &ParticleSet<2>) -> Result<Vec<[f64; 2]>> {
        self.velocity_field(ps)?.sample_many(ps.positions())
    }
}

/// A prescribed velocity field that ignores the circulations.
pub struct FrozenVelocity<F>(pub F);

impl<F: Fn(&Point<2>) -> [f64; 2] + Sync> VelocitySource for FrozenVelocity<F> {
    fn velocities(&self, ps: &ParticleSet<2>) -> Result<Vec<[f64; 2]>> {
        Ok(ps.positions().iter().map(|x| (self.0)(x)).collect())
    }
}

fn shifted(x: &[Point<2>], terms: &[(f64, &[[f64; 2]])]) -> Vec<Point<2>> {
    x.iter()
        .enumerate()
        .map(|(p, xp)| {
            let mut y = *xp;
            for (c, k) in terms {
                y[0] += c * k[p][0];
                y[1] += c * k[p][1];
            }
            y
        })
        .collect()
}

/// One step of Kutta's third-order scheme; the velocity is re-evaluated at
/// every stage and positions are clamped to the box.
pub fn rk3_advect(ps: &ParticleSet<2>, dt: f64, src: &dyn VelocitySource) -> Result<ParticleSet<2>> {
    let x = ps.positions();
    let k1 = src.velocities(ps)?;
    let s2 = ps.with_positions(shifted(x, &[(0.5 * dt, &k1)]))?;
    let k2 = src.velocities(&s2)?;
    let s3 = ps.with_positions(shifted(x, &[(-dt, &k1), (2.0 * dt, &k2)]))?;
    let k3 = src.velocities(&s3)?;
    ps.with_positions(shifted(x, &[(dt / 6.0, &k1), (4.0 * dt / 6.0, &k2), (dt / 6.0, &k3)]))
}

/// One explicit Euler step of particle strength exchange:
/// `dGamma_p/dt = nu eps^-2 sum_q (V_p Gamma_q - V_q Gamma_p) eta_eps(x_p - x_q)`.
///
/// With a truncated kernel each pair within the cutoff is visited once and
/// its flux applied with opposite signs, so circulation is conserved up to
/// round-off whatever the volumes.
pub fn pse_2d(ps: &ParticleSet<2>, nu: f64, dt: f64) -> Result<ParticleSet<2>> {
    if ps.is_empty() {
        return Ok(ps.clone());
    }
    let pse = PseKernel::matching(ps.kernel());
    let eps = pse.eps();
    let xs = ps.positions();
    let gs = ps.intensities();
    let vs = ps.volumes();
    let n = xs.len();
    let mut rate = vec![0.0; n];
    let gaussian_box = matches!(ps.kernel().family(), KernelFamily::Gaussian)
        && !matches!(ps.domain(), Domain::Periodic { .. });
    match pse.cutoff_distance() {
        Some(r) if gaussian_box => {
            let norm = PseKernel::NORMALIZATION / (2.0 * PI * eps * eps);
            gaussian_pair_rates(xs, gs, vs, r, -0.5 / (eps * eps), norm, &mut rate);
        }
        _ => {
            let dom = ps.domain();
            for p in 0..n {
                for q in p + 1..n {
                    let d = dom.displacement(&xs[p], &xs[q]);
                    let flux = (vs[p] * gs[q] - vs[q] * gs[p]) * pse.eval(&d);
                    rate[p] += flux;
                    rate[q] -= flux;
                }
            }
        }
    }
    let c = nu * dt / (eps * eps);
    ps.with_intensities(gs.iter().zip(rate).map(|(g, r)| g + c * r).collect())
}

/// PSE rates for a Gaussian truncated at `r`. Particles are copied into
/// contiguous bins of side `r / REACH` and every unordered pair within `r` is
/// visited once, in an order fixed by the positions alone.
fn gaussian_pair_rates(xs: &[Point<2>], gs: &[f64], vs: &[f64], r: f64, a: f64, norm: f64, rate: &mut [f64]) {
    const REACH: usize = 2;
    let side = r / REACH as f64;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for x in xs {
        for k in 0..2 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let dims = [0, 1].map(|k| ((hi[k] - lo[k]) / side) as usize + 1);
    let bin_of = |x: &Point<2>| {
        let b = [0, 1].map(|k| (((x[k] - lo[k]) / side) as usize).min(dims[k] - 1));
        b[1] * dims[0] + b[0]
    };
    let nbins = dims[0] * dims[1];
    let bins: Vec<usize> = xs.iter().map(bin_of).collect();
    let mut starts = vec![0usize; nbins + 1];
    for &b in &bins {
        starts[b + 1] += 1;
    }
    for b in 0..nbins {
        starts[b + 1] += starts[b];
    }
    let mut fill = starts.clone();
    let mut order = vec![0usize; xs.len()];
    for (p, &b) in bins.iter().enumerate() {
        order[fill[b]] = p;
        fill[b] += 1;
    }
    let px: Vec<f64> = order.iter().map(|&p| xs[p][0]).collect();
    let py: Vec<f64> = order.iter().map(|&p| xs[p][1]).collect();
    let pg: Vec<f64> = order.iter().map(|&p| gs[p]).collect();
    let pv: Vec<f64> = order.iter().map(|&p| vs[p]).collect();
    let mut acc = vec![0.0; xs.len()];
    let r2 = r * r;
    let reach = REACH as i64;
    for by in 0..dims[1] {
        for bx in 0..dims[0] {
            let b = by * dims[0] + bx;
            let (s0, s1) = (starts[b], starts[b + 1]);
            // rows of bins at or above this one; on this row only bins to the right
            for oy in 0..=reach {
                let ny = by as i64 + oy;
                if ny >= dims[1] as i64 {
                    break;
                }
                let x_lo = if oy == 0 { bx as i64 } else { (bx as i64 - reach).max(0) };
                let x_hi = (bx as i64 + reach).min(dims[0] as i64 - 1);
                let row = ny as usize * dims[0];
                let (q0, q1) = (starts[row + x_lo as usize], starts[row + x_hi as usize + 1]);
                for i in s0..s1 {
                    let (xi, yi, gi, vi) = (px[i], py[i], pg[i], pv[i]);
                    let mut sum = 0.0;
                    let from = if oy == 0 { i + 1 } else { q0 };
                    for j in from..q1 {
                        let (dx, dy) = (xi - px[j], yi - py[j]);
                        let d2 = dx * dx + dy * dy;
                        if d2 <= r2 {
                            let flux = (vi * pg[j] - pv[j] * gi) * norm * (a * d2).exp();
                            sum += flux;
                            acc[j] -= flux;
                        }
                    }
                    acc[i] += sum;
                }
            }
        }
    }
    for (k, &p) in order.iter().enumerate() {
        rate[p] += acc[k];
    }
}

/// Project to the grid and regenerate the lattice, dropping particles with
/// `|omega| <= eps_omega`. An empty result is re-seeded with one zero particle.
pub fn forecast_remesh(ps: &ParticleSet<2>, remesher: &Remesher<2>, eps_omega: f64) -> Result<ParticleSet<2>> {
    let out = remesher.remesh(ps, eps_omega)?;
    reseed_if_empty(out, remesher.dp() * remesher.dp())
}

/// Discretization of the vortex model shared by all members at one resolution.
#[derive(Clone, Debug)]
pub struct Vortex2DModel {
    vic: VicSolver,
    remesher: Remesher<2>,
    dt: f64,
    eps_omega: f64,
    n_remesh: usize,
}

impl Vortex2DModel {
    /// `cells` solver cells per axis; particles of size `dp = h / 2` with
    /// smoothing length `2 dp`.
    pub fn new(cells: usize, dt: f64, eps_omega: f64, n_remesh: usize) -> Result<Self> {
        if !(dt > 0.0) || !(eps_omega >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid dt = {dt} or eps_omega = {eps_omega}")));
        }
        let vic = VicSolver::new(cells)?;
        let dp = 0.5 * vic.spacing();
        let kernel = blob_kernel(EPS_OVER_DP * dp)?;
        let remesher = Remesher::new(vic.grid().clone(), RedistributionKernel::M4Prime, dp, kernel)?;
        Ok(Self {
            vic,
            remesher,
            dt,
            eps_omega,
            n_remesh,
        })
    }

    pub fn vic(&self) -> &VicSolver {
        &self.vic
    }

    pub fn remesher(&self) -> &Remesher<2> {
        &self.remesher
    }

    pub fn kernel(&self) -> SmoothingKernel {
        *self.remesher.kernel()
    }

    pub fn dp(&self) -> f64 {
        self.remesher.dp()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps_omega(&self) -> f64 {
        self.eps_omega
    }

    pub fn dipole(&self, p: &DipoleParams) -> Result<ParticleSet<2>> {
        lamb_chaplygin_init(p, self.dp(), self.eps_omega, self.kernel())
    }

    /// Advection then diffusion over one time step.
    pub fn step(&self, ps: &ParticleSet<2>, nu: f64) -> Result<ParticleSet<2>> {
        let moved = rk3_advect(ps, self.dt, &self.vic)?;
        pse_2d(&moved, nu, self.dt)
    }

    /// Steps covering `window`, with `n_remesh` remeshing events evenly
    /// spaced so that the last one closes the window.
    pub fn forecast(&self, ps: &ParticleSet<2>, nu: f64, window: f64) -> Result<ParticleSet<2>> {
        let steps = (window / self.dt).round() as usize;
        let events: Vec<usize> = (1..=self.n_remesh).map(|e| e * steps / self.n_remesh).collect();
        let mut cur = ps.clone();
        for s in 1..=steps {
            cur = self.step(&cur, nu).map_err(|e| e.at_step(s))?;
            if events.contains(&s) {
                cur = forecast_remesh(&cur, &self.remesher, self.eps_omega)?;
            }
        }
        Ok(cur)
    }

    /// Largest particle speed of the current state.
    pub fn max_speed(&self, ps: &ParticleSet<2>) -> Result<f64> {
        Ok(vic::max_speed(&self.vic.velocities(ps)?))
    }
}

/// VIC velocity at `points`, interleaved `(u_x, u_y)` per point.
pub fn observe_velocity(ps: &ParticleSet<2>, vic: &VicSolver, points: &[Point<2>]) -> Result<Vec<f64>> {
    Ok(interleave(&vic.velocity_field(ps)?.sample_many(points)?))
}

/// `n^2` points at `(j + 1/2) pi / n`.
pub fn observation_points(n: usize) -> Vec<Point<2>> {
    let h = SIDE / n as f64;
    (0..n * n)
        .map(|c| [((c % n) as f64 + 0.5) * h, ((c / n) as f64 + 0.5) * h])
        .collect()
}

/// Velocity observations as an ensemble observation operator.
#[derive(Clone, Debug)]
pub struct VelocityObservation {
    pub vic: VicSolver,
    pub points: Vec<Point<2>>,
}

impl ObservationOperator<2> for VelocityObservation {
    fn observe(&self, member: &ParticleSet<2>) -> Result<Vec<f64>> {
        observe_velocity(member, &self.vic, &self.points)
    }
}

/// Node grid for vorticity error quadrature: `cells + 1` nodes per axis.
pub fn quadrature_grid(cells: usize) -> Result<UniformGrid<2>> {
    UniformGrid::zeros([0.0, 0.0], SIDE / cells as f64, [cells + 1, cells + 1], Boundary::Clamped)
}

/// Vorticity of a particle set projected onto a quadrature grid.
pub fn vorticity_on(ps: &ParticleSet<2>, grid: &UniformGrid<2>) -> Result<UniformGrid<2>> {
    project_to_grid(ps, grid, RedistributionKernel::M4Prime)
}

/// Trapezoid approximation of `int (a - b)^2`.
pub fn l2_sq_distance(a: &UniformGrid<2>, b: &UniformGrid<2>) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::Shape("quadrature grids differ".into()));
    }
    let [nx, ny] = a.counts();
    let h = a.spacing();
    let w = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            s += w(i, nx) * w(j, ny) * (a.values()[c] - b.values()[c]).powi(2);
        }
    }
    Ok(s * h * h)
}

/// `e_omega = N^-1 sum_i int (omega_i - omega_truth)^2` from nodal fields.
pub fn ensemble_error_omega(members: &[UniformGrid<2>], truth: &UniformGrid<2>) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("no members".into()));
    }
    let mut s = 0.0;
    for m in members {
        s += l2_sq_distance(m, truth)?;
    }
    Ok(s / members.len() as f64)
}

/// Per-member squared errors of particle members against a truth field.
pub fn member_errors_omega(members: &[ParticleSet<2>], truth: &UniformGrid<2>) -> Result<Vec<f64>> {
    members
        .par_iter()
        .map(|m| l2_sq_distance(&vorticity_on(m, truth)?, truth))
        .collect()
}
