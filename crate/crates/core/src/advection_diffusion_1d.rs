//! Periodic advection–diffusion on `[0, 2 pi)`: exact solution, particle model
//! and the finite-difference model used by Grid-EnKF.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::domain::{minimum_image, Point};
use crate::error::{Error, Result};
use crate::kernels::{PseKernel, RedistributionKernel};
use crate::particle_field::ParticleSet;
use crate::remeshing::{Boundary, UniformGrid};

pub const PERIOD: f64 = 2.0 * PI;

/// Smoothing length in units of the particle spacing.
pub const EPS_OVER_DP: f64 = 1.3;

/// Explicit Euler stability margins used when choosing sub-steps.
pub const STABILITY_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model1DParams {
    pub v: f64,
    pub d: f64,
    pub dt: f64,
    pub dp: f64,
    pub eps: f64,
}

impl Model1DParams {
    /// `eps = 1.3 dp`.
    pub fn new(v: f64, d: f64, dt: f64, dp: f64) -> Result<Self> {
        let p = Self {
            v,
            d,
            dt,
            dp,
            eps: EPS_OVER_DP * dp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) {
            return Err(Error::InvalidArgument(format!("diffusion must be > 0, got {}", self.d)));
        }
        if !(self.dt > 0.0) || !(self.dp > 0.0) || !(self.eps > 0.0) || !self.v.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid model parameters {self:?}")));
        }
        if self.dt * self.d > 0.5 * self.eps * self.eps {
            return Err(Error::Stability(format!(
                "PSE step dt = {} exceeds eps^2 / (2 D) = {}",
                self.dt,
                0.5 * self.eps * self.eps / self.d
            )));
        }
        Ok(())
    }

    /// Checks `|v| dt / h <= 1` and `2 D dt / h^2 <= 1`.
    pub fn check_fd(&self, h: f64) -> Result<()> {
        let courant = self.v.abs() * self.dt / h;
        let diff = 2.0 * self.d * self.dt / (h * h);
        if courant > 1.0 || diff > 1.0 || courant + diff > 1.0 {
            return Err(Error::Stability(format!(
                "finite-difference step violates CFL: |v| dt / h = {courant}, 2 D dt / h^2 = {diff}"
            )));
        }
        Ok(())
    }
}

/// Number of equal sub-steps covering `window` with steps no longer than
/// `dt_max` and stable for both the particle and the grid model.
pub fn substeps(window: f64, dt_max: f64, v: f64, d: f64, eps: f64, h: f64) -> usize {
    let mut dt = dt_max;
    if d > 0.0 {
        dt = dt.min(STABILITY_SAFETY * 0.5 * eps * eps / d);
    }
    let rate = v.abs() / h + 2.0 * d / (h * h);
    if rate > 0.0 {
        dt = dt.min(STABILITY_SAFETY / rate);
    }
    ((window / dt).ceil() as usize).max(1)
}

/// `K(x, t) = sum_k (4 pi t)^-1/2 exp(-(x - 2 pi k)^2 / (4 t))`.
///
/// The image count grows with `t` so that the dropped terms stay below 1e-17
/// relative; at least 5 images on each side are always used.
pub fn periodic_heat_kernel(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("heat kernel time must be > 0, got {t}")));
    }
    let x = minimum_image(x, PERIOD);
    let k_max = heat_kernel_images(t);
    let norm = 1.0 / (4.0 * PI * t).sqrt();
    let mut sum = 0.0;
    for k in -k_max..=k_max {
        let d = x - PERIOD * k as f64;
        sum += (-d * d / (4.0 * t)).exp();
    }
    Ok(norm * sum)
}

fn heat_kernel_images(t: f64) -> i64 {
    // exp(-(2 pi k - pi)^2 / 4t) < 1e-17 once 2 pi k - pi > sqrt(4 t * 40)
    let needed = ((4.0 * t * 40.0).sqrt() + PI) / PERIOD;
    (needed.ceil() as i64).max(5)
}

/// `u(x, t) = K(x - v t - x0, D t + sigma0^2 / 2)`.
pub fn ground_truth_1d(x: f64, t: f64, x0: f64, sigma0: f64, v: f64, d: f64) -> Result<f64> {
    periodic_heat_kernel(x - v * t - x0, d * t + 0.5 * sigma0 * sigma0)
}

/// One step: explicit Euler PSE on the intensities, then `x += v dt`.
pub fn lagrangian_step_1d(ps: &ParticleSet<1>, prm: &Model1DParams) -> Result<ParticleSet<1>> {
    let exchange = PseExchange::new(ps)?;
    let us = exchange.apply(ps.intensities(), ps.volumes(), prm.d, prm.dt);
    let xs = ps.positions().iter().map(|x| [x[0] + prm.v * prm.dt]).collect();
    ps.with_intensities(us)?.with_positions(xs)
}

/// Advance `steps` steps, reusing the exchange matrix: under uniform advection
/// the relative particle positions never change.
pub fn lagrangian_advance_1d(ps: &ParticleSet<1>, prm: &Model1DParams, steps: usize) -> Result<ParticleSet<1>> {
    if steps == 0 {
        return Ok(ps.clone());
    }
    let exchange = PseExchange::new(ps)?;
    let mut us = ps.intensities().to_vec();
    let mut xs = ps.positions().to_vec();
    for _ in 0..steps {
        us = exchange.apply(&us, ps.volumes(), prm.d, prm.dt);
        for x in &mut xs {
            x[0] += prm.v * prm.dt;
        }
    }
    ps.with_intensities(us)?.with_positions(xs)
}

/// `eta_eps(x_p - x_q) / eps^2` for all particle pairs.
struct PseExchange {
    w: DMatrix<f64>,
}

impl PseExchange {
    fn new(ps: &ParticleSet<1>) -> Result<Self> {
        let pse = PseKernel::matching(ps.kernel());
        let inv_eps2 = 1.0 / (pse.eps() * pse.eps());
        let n = ps.len();
        let xs = ps.positions();
        let dom = ps.domain();
        let mut w = DMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..p {
                let d = dom.displacement(&xs[p], &xs[q]);
                let e = pse.eval(&d) * inv_eps2;
                w[(p, q)] = e;
                w[(q, p)] = e;
            }
        }
        Ok(Self { w })
    }

    fn apply(&self, us: &[f64], vs: &[f64], d: f64, dt: f64) -> Vec<f64> {
        let n = us.len();
        let mut out = us.to_vec();
        for p in 0..n {
            let mut acc = 0.0;
            for q in 0..n {
                acc += (vs[p] * us[q] - vs[q] * us[p]) * self.w[(p, q)];
            }
            out[p] += dt * d * acc;
        }
        out
    }
}

/// Periodic grid with `n` nodes at `i * 2 pi / n`.
pub fn fd_grid(n: usize) -> Result<UniformGrid<1>> {
    UniformGrid::zeros([0.0], PERIOD / n as f64, [n], Boundary::Periodic)
}

/// One explicit Euler step: first-order upwind advection, central diffusion.
pub fn eulerian_fd_step(grid: &UniformGrid<1>, prm: &Model1DParams) -> Result<UniformGrid<1>> {
    if grid.boundary() != Boundary::Periodic {
        return Err(Error::InvalidArgument("the finite-difference model needs a periodic grid".into()));
    }
    let h = grid.spacing();
    prm.check_fd(h)?;
    let u = grid.values();
    let n = u.len();
    let a = prm.v * prm.dt / h;
    let b = prm.d * prm.dt / (h * h);
    let out = (0..n)
        .map(|i| {
            let (l, r) = (u[(i + n - 1) % n], u[(i + 1) % n]);
            let adv = if prm.v >= 0.0 { a * (u[i] - l) } else { a * (r - u[i]) };
            u[i] - adv + b * (l - 2.0 * u[i] + r)
        })
        .collect();
    grid.with_values(out)
}

pub fn eulerian_advance(grid: &UniformGrid<1>, prm: &Model1DParams, steps: usize) -> Result<UniformGrid<1>> {
    let mut g = grid.clone();
    for _ in 0..steps {
        g = eulerian_fd_step(&g, prm)?;
    }
    Ok(g)
}

/// A 1D member state as seen by the observation operator.
pub enum State1D<'a> {
    Particles(&'a ParticleSet<1>),
    Grid(&'a UniformGrid<1>),
}

/// Field values at `locations`: blob evaluation for particles, M4'
/// interpolation for grids.
pub fn observe_points_1d(state: State1D<'_>, locations: &[Point<1>]) -> Result<Vec<f64>> {
    match state {
        State1D::Particles(ps) => Ok(ps.eval_many(locations)),
        State1D::Grid(g) => g.interpolate_many(RedistributionKernel::M4Prime, locations),
    }
}

/// `n` evenly spaced points `j 2 pi / n`.
pub fn observation_points(n: usize) -> Vec<Point<1>> {
    (0..n).map(|j| [j as f64 * PERIOD / n as f64]).collect()
}

/// Lattice of `n` particles at `(m + 1/2) 2 pi / n`.
pub fn particle_lattice(n: usize) -> Vec<Point<1>> {
    (0..n).map(|m| [(m as f64 + 0.5) * PERIOD / n as f64]).collect()
}
