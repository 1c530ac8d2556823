//! Quick numerical self-checks, runnable from the command line.
//!
//! Each check compares a library routine with an independent reference
//! (closed form, dense algebra, or an analytic solution) and takes well under
//! a second.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advection_diffusion_1d::{
    ground_truth_1d, lagrangian_advance_1d, particle_lattice, periodic_heat_kernel, Model1DParams, PERIOD,
};
use crate::domain::Domain;
use crate::enkf::{analysis_update, anomalies, correction_matrix, EnsembleBatch, ObservationSpec};
use crate::kernels::{RedistributionKernel, SmoothingKernel, DEFAULT_IMAGES};
use crate::particle_field::ParticleSet;
use crate::remeshing::{project_to_grid, regenerate_particles, Boundary, UniformGrid};
use crate::vortex_2d::{j1, PoissonSolver, J1_FIRST_ZERO};

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64, what: &str) -> Check {
    Check {
        name,
        passed: value.is_finite() && value <= limit,
        detail: format!("{what} = {value:.3e} (limit {limit:.1e})"),
    }
}

fn check_at_least(name: &'static str, value: f64, limit: f64, what: &str) -> Check {
    Check {
        name,
        passed: value.is_finite() && value >= limit,
        detail: format!("{what} = {value:.3} (needs >= {limit})"),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        enkf_forms(),
        remesh_moments(),
        m4_quadratics(),
        heat_kernel_mass(),
        bessel_zero(),
        poisson_manufactured(),
        pse_1d_order(),
    ]
}

/// Member-space update against `Z + A Y^T (Y Y^T + R)^-1 (D - Y_pred)`.
pub fn enkf_forms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, m, members) = (5, 4, 6);
    let z = DMatrix::from_fn(n, members, |_, _| rng.gen_range(-1.0..1.0));
    let pred = DMatrix::from_fn(m, members, |_, _| rng.gen_range(-1.0..1.0));
    let d = DMatrix::from_fn(m, members, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.5..0.5));
    let r = &b * b.transpose() + DMatrix::identity(m, m) * 0.3;
    let worst = (|| -> crate::Result<f64> {
        let obs = ObservationSpec::new(DVector::zeros(m), r.clone())?;
        let (a, y) = anomalies(&EnsembleBatch::new(z.clone(), pred.clone())?)?;
        let f = correction_matrix(&y, &obs, &d, &pred)?;
        let za = analysis_update(&z, &f)?;
        let c = &y * y.transpose() + &r;
        let gain = &a * y.transpose() * c.lu().solve(&(&d - &pred)).unwrap_or_else(|| DMatrix::zeros(m, members));
        let oracle = &z + gain;
        Ok((za - &oracle).amax() / (1.0 + oracle.amax()))
    })()
    .unwrap_or(f64::NAN);
    check("enkf: member-space vs gain form", worst, 1e-10, "relative difference")
}

fn moments(ps: &ParticleSet<1>) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (x, u) in ps.positions().iter().zip(ps.intensities()) {
        m[0] += u;
        m[1] += u * x[0];
        m[2] += u * x[0] * x[0];
    }
    m
}

/// Project then regenerate a smooth blob on a periodic grid.
pub fn remesh_moments() -> Check {
    let worst = (|| -> crate::Result<f64> {
        let cells = 50;
        let l = PERIOD / cells as f64;
        let dp = l / 2.0;
        let k = SmoothingKernel::periodic_gaussian(1.3 * dp, PERIOD, DEFAULT_IMAGES)?;
        let g = UniformGrid::zeros([0.0], l, [cells], Boundary::Periodic)?;
        let xs: Vec<[f64; 1]> = (0..150).map(|i| [2.0 + 2.0 * (i as f64 + 0.37) / 150.0]).collect();
        let us = xs.iter().map(|x| (-(x[0] - 3.0).powi(2) / 0.1).exp() * 0.01).collect();
        let ps = ParticleSet::new(xs, us, vec![0.01; 150], k, Domain::Periodic { period: PERIOD })?;
        let w = RedistributionKernel::M4Prime;
        let back = regenerate_particles(&project_to_grid(&ps, &g, w)?, w, dp, 0.0, k)?;
        let (a, b) = (moments(&ps), moments(&back));
        Ok((0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
    })()
    .unwrap_or(f64::NAN);
    check("remeshing: moments 0-2", worst, 1e-10, "max moment change")
}

/// M4' interpolation of nodal `x^2` at off-node points.
pub fn m4_quadratics() -> Check {
    let worst = (|| -> crate::Result<f64> {
        let g = UniformGrid::zeros([0.0], 0.1, [41], Boundary::Clamped)?;
        let g = g.with_values(g.node_positions().iter().map(|x| x[0] * x[0] - 0.3 * x[0]).collect())?;
        let mut e: f64 = 0.0;
        for i in 0..50 {
            let x = 0.5 + 3.0 * i as f64 / 50.0 + 0.013;
            let v = g.interpolate(RedistributionKernel::M4Prime, &[x])?;
            e = e.max((v - (x * x - 0.3 * x)).abs());
        }
        Ok(e)
    })()
    .unwrap_or(f64::NAN);
    check("remeshing: M4' reproduces quadratics", worst, 1e-10, "max error")
}

/// The periodic heat kernel integrates to one over a period.
pub fn heat_kernel_mass() -> Check {
    let n = 2000;
    let dx = PERIOD / n as f64;
    let worst = [0.05, 1.0, 100.0]
        .iter()
        .map(|&t| {
            let s: f64 = (0..n).map(|i| periodic_heat_kernel(i as f64 * dx, t).unwrap_or(f64::NAN)).sum();
            (s * dx - 1.0).abs()
        })
        .fold(0.0, f64::max);
    check("1d: heat kernel mass", worst, 1e-10, "max |mass - 1|")
}

pub fn bessel_zero() -> Check {
    check("2d: J1 first zero", j1(J1_FIRST_ZERO).abs(), 1e-12, "|J1(j11)|")
}

/// The sine-transform solver inverts the discrete Laplacian.
pub fn poisson_manufactured() -> Check {
    let worst = (|| -> crate::Result<f64> {
        let cells = 32;
        let h = PI / cells as f64;
        let s = PoissonSolver::new(cells, h)?;
        let n = cells + 1;
        let mut target = vec![0.0; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                target[j * n + i] = (x * y * (PI - x) * (PI - y)).sin();
            }
        }
        let omega: Vec<f64> = s.laplacian(&target).iter().map(|v| -v).collect();
        let psi = s.solve(&omega)?;
        Ok(psi.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    })()
    .unwrap_or(f64::NAN);
    check("2d: Poisson manufactured solution", worst, 1e-10, "max error")
}

/// Observed order of the particle diffusion solver between 50 and 100 particles.
pub fn pse_1d_order() -> Check {
    let err = |n: usize| -> crate::Result<f64> {
        let (x0, s0, d, t) = (PI, 1.0, 0.05, 0.5);
        let dp = PERIOD / n as f64;
        let k = SmoothingKernel::periodic_gaussian(1.3 * dp, PERIOD, DEFAULT_IMAGES)?;
        let xs = particle_lattice(n);
        let ps = ParticleSet::init_from_function(
            |x| ground_truth_1d(x[0], 0.0, x0, s0, 0.0, d).unwrap_or(f64::NAN),
            &xs,
            &vec![dp; n],
            k,
            Domain::Periodic { period: PERIOD },
            0.0,
        )?;
        let steps = 400 * n / 50;
        let prm = Model1DParams::new(0.0, d, t / steps as f64, dp)?;
        let out = lagrangian_advance_1d(&ps, &prm, steps)?;
        let pts: Vec<f64> = (0..200).map(|i| i as f64 * PERIOD / 200.0).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for &x in &pts {
            let exact = ground_truth_1d(x, t, x0, s0, 0.0, d)?;
            num += (out.eval_field(&[x]) - exact).powi(2);
            den += exact * exact;
        }
        Ok((num / den).sqrt())
    };
    let ratio = match (err(50), err(100)) {
        (Ok(a), Ok(b)) => a / b,
        _ => f64::NAN,
    };
    check_at_least("1d: particle solver error ratio 50 -> 100", ratio, 3.0, "error ratio")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
