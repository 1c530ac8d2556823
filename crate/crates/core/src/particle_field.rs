//! Particle sets and the fields they carry.
//!
//! A particle set discretizes a scalar field as `u(x) = sum_p U_p phi_eps(x - x_p)`.
//! Three constructions of the intensities `U_p` are provided: the direct
//! quadrature `U_p = u(x_p) V_p`, Beale's fixed-point correction, and a ridge
//! least-squares fit.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, SmoothingKernel};
use crate::neighbors::CellList;

/// Default iteration cap for [`ParticleSet::beale_correct`].
pub const BEALE_MAX_ITERS: usize = 20;
/// Default max-residual tolerance for [`ParticleSet::beale_correct`].
pub const BEALE_TOL: f64 = 1e-10;

/// Below this many query points field evaluation stays on the calling thread.
const PAR_THRESHOLD: usize = 256;

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Positions, intensities and volumes of a set of particles sharing one kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet<const D: usize> {
    positions: Vec<Point<D>>,
    intensities: Vec<f64>,
    volumes: Vec<f64>,
    kernel: SmoothingKernel,
    domain: Domain<D>,
}

impl<const D: usize> ParticleSet<D> {
    pub fn new(
        positions: Vec<Point<D>>,
        intensities: Vec<f64>,
        volumes: Vec<f64>,
        kernel: SmoothingKernel,
        domain: Domain<D>,
    ) -> Result<Self> {
        if positions.len() != intensities.len() || positions.len() != volumes.len() {
            return Err(Error::Shape(format!(
                "positions ({}), intensities ({}) and volumes ({}) differ in length",
                positions.len(),
                intensities.len(),
                volumes.len()
            )));
        }
        if let Some(i) = volumes.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "particle {i} has non-positive volume {}",
                volumes[i]
            )));
        }
        check_compatible(&kernel, &domain)?;
        let positions = positions.iter().map(|x| domain.wrap(x)).collect();
        Ok(Self {
            positions,
            intensities,
            volumes,
            kernel,
            domain,
        })
    }

    pub fn empty(kernel: SmoothingKernel, domain: Domain<D>) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), Vec::new(), kernel, domain)
    }

    /// Sample `f` at the given positions: `U_p = f(x_p) V_p`.
    ///
    /// Particles with `|f(x_p)| <= eps_cut` are not created.
    pub fn init_from_function(
        f: impl Fn(&Point<D>) -> f64,
        positions: &[Point<D>],
        volumes: &[f64],
        kernel: SmoothingKernel,
        domain: Domain<D>,
        eps_cut: f64,
    ) -> Result<Self> {
        if positions.len() != volumes.len() {
            return Err(Error::Shape(format!(
                "{} positions but {} volumes",
                positions.len(),
                volumes.len()
            )));
        }
        if !(eps_cut >= 0.0) {
            return Err(Error::InvalidArgument(format!("eps_cut must be >= 0, got {eps_cut}")));
        }
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for (x, &v) in positions.iter().zip(volumes) {
            let value = f(x);
            if value.abs() > eps_cut {
                xs.push(*x);
                us.push(value * v);
                vs.push(v);
            }
        }
        Self::new(xs, us, vs, kernel, domain)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point<D>] {
        &self.positions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn kernel(&self) -> &SmoothingKernel {
        &self.kernel
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.domain
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// Same positions and volumes, new intensities.
    pub fn with_intensities(&self, intensities: Vec<f64>) -> Result<Self> {
        if intensities.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} intensities, got {}",
                self.len(),
                intensities.len()
            )));
        }
        Ok(Self {
            intensities,
            ..self.clone()
        })
    }

    /// Same intensities and volumes, new positions (wrapped into the domain).
    pub fn with_positions(&self, positions: Vec<Point<D>>) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} positions, got {}",
                self.len(),
                positions.len()
            )));
        }
        let positions = positions.iter().map(|x| self.domain.wrap(x)).collect();
        Ok(Self {
            positions,
            ..self.clone()
        })
    }

    /// `u(x) = sum_p U_p phi_eps(x - x_p)`.
    pub fn eval_field(&self, x: &Point<D>) -> f64 {
        let mut s = 0.0;
        for (xp, &u) in self.positions.iter().zip(&self.intensities) {
            s += u * self.kernel.eval(&self.domain.displacement(x, xp));
        }
        s
    }

    /// Evaluate the field at many points.
    ///
    /// Truncated kernels use a cell list; otherwise every particle contributes.
    /// Each point is summed in a fixed order, so the result does not depend on
    /// the number of threads.
    pub fn eval_many(&self, points: &[Point<D>]) -> Vec<f64> {
        match self.neighbor_radius() {
            Some(radius) => {
                let cells = CellList::new(&self.positions, radius);
                let one = |x: &Point<D>| {
                    let mut s = 0.0;
                    cells.for_each_candidate(x, |q| {
                        let d = self.domain.displacement(x, &self.positions[q]);
                        s += self.intensities[q] * self.kernel.eval(&d);
                    });
                    s
                };
                map_points(points, one)
            }
            None => map_points(points, |x| self.eval_field(x)),
        }
    }

    /// Cell size for neighbor searches when the kernel is truncated.
    pub(crate) fn neighbor_radius(&self) -> Option<f64> {
        match self.domain {
            Domain::Periodic { .. } => None,
            _ => self.kernel.cutoff_distance(),
        }
    }

    /// Beale's iteration `U <- U + (t - Phi U) V`, starting from the current
    /// intensities.
    ///
    /// Stops after `max_iters` updates or once the max residual is `<= tol`.
    /// Non-convergence is reported through [`BealeOutcome::converged`], not as
    /// an error.
    pub fn beale_correct(&self, targets: &[f64], max_iters: usize, tol: f64) -> Result<BealeOutcome<D>> {
        if targets.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} targets, got {}",
                self.len(),
                targets.len()
            )));
        }
        let mut current = self.clone();
        let mut history = Vec::with_capacity(max_iters + 1);
        let mut iterations = 0;
        loop {
            let fitted = current.eval_many(&current.positions);
            let residual: Vec<f64> = targets.iter().zip(&fitted).map(|(t, f)| t - f).collect();
            let max_res = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            history.push(max_res);
            if max_res <= tol || iterations == max_iters {
                return Ok(BealeOutcome {
                    converged: max_res <= tol,
                    iterations,
                    residual: max_res,
                    history,
                    set: current,
                });
            }
            for ((u, r), v) in current.intensities.iter_mut().zip(&residual).zip(&self.volumes) {
                *u += r * v;
            }
            iterations += 1;
        }
    }

    /// Ridge fit of the intensities to `targets` sampled at the particle positions:
    /// minimizes `|t - Phi U|^2 + lambda |U|^2`.
    pub fn ridge_fit(&self, targets: &[f64], penalty: RidgePenalty) -> Result<Self> {
        let n = self.len();
        if targets.len() != n {
            return Err(Error::Shape(format!("expected {n} targets, got {}", targets.len())));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("ridge fit needs at least one particle".into()));
        }
        let phi = self.kernel_matrix();
        let lambda = match penalty {
            RidgePenalty::Auto => 1e-8 * phi.trace() / n as f64,
            RidgePenalty::Fixed(l) if l >= 0.0 => l,
            RidgePenalty::Fixed(l) => {
                return Err(Error::InvalidArgument(format!("ridge lambda must be >= 0, got {l}")))
            }
        };
        let t = DVector::from_column_slice(targets);
        let mut normal = phi.transpose() * &phi;
        for i in 0..n {
            normal[(i, i)] += lambda;
        }
        let rhs = phi.transpose() * t;
        let chol = match normal.cholesky() {
            Some(c) => c,
            None if lambda == 0.0 => return Err(Error::SingularRidge),
            None => {
                return Err(Error::NotPositiveDefinite(format!(
                    "ridge normal matrix with lambda = {lambda}"
                )))
            }
        };
        if lambda == 0.0 {
            let diag = chol.l_dirty().diagonal();
            let max = diag.amax();
            let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if !(min > 1e-7 * max) {
                return Err(Error::SingularRidge);
            }
        }
        let u = chol.solve(&rhs);
        self.with_intensities(u.as_slice().to_vec())
    }

    /// `Phi_ij = phi_eps(x_i - x_j)`.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.kernel
                .eval(&self.domain.displacement(&self.positions[i], &self.positions[j]))
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = AXIS_NAMES[..D].to_vec();
        header.extend(["U", "V"]);
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.positions[i].iter().map(|v| v.to_string()).collect();
            row.push(self.intensities[i].to_string());
            row.push(self.volumes[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, kernel: SmoothingKernel, domain: Domain<D>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != D + 2 {
                return Err(Error::Shape(format!("expected {} columns, got {}", D + 2, rec.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
            };
            let mut x = [0.0; D];
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = parse(&rec[k])?;
            }
            xs.push(x);
            us.push(parse(&rec[D])?);
            vs.push(parse(&rec[D + 1])?);
        }
        Self::new(xs, us, vs, kernel, domain)
    }
}

pub(crate) fn map_points<const D: usize>(
    points: &[Point<D>],
    f: impl Fn(&Point<D>) -> f64 + Sync + Send,
) -> Vec<f64> {
    if points.len() < PAR_THRESHOLD {
        points.iter().map(f).collect()
    } else {
        points.par_iter().map(f).collect()
    }
}

fn check_compatible<const D: usize>(kernel: &SmoothingKernel, domain: &Domain<D>) -> Result<()> {
    match (kernel.family(), domain) {
        (KernelFamily::PeriodicGaussian { period: kp, .. }, Domain::Periodic { period }) => {
            if (kp - period).abs() > 1e-12 * period {
                return Err(Error::InvalidArgument(format!(
                    "kernel period {kp} does not match domain period {period}"
                )));
            }
            Ok(())
        }
        (KernelFamily::PeriodicGaussian { .. }, _) => Err(Error::InvalidArgument(
            "periodic kernel on a non-periodic domain".into(),
        )),
        (_, Domain::Periodic { .. }) => Err(Error::InvalidArgument(
            "periodic domain needs a periodic kernel".into(),
        )),
        _ => Ok(()),
    }
}

/// Result of [`ParticleSet::beale_correct`].
#[derive(Clone, Debug)]
pub struct BealeOutcome<const D: usize> {
    pub set: ParticleSet<D>,
    pub converged: bool,
    pub iterations: usize,
    /// Max residual after the last update.
    pub residual: f64,
    /// Max residual before each update, followed by the final residual.
    pub history: Vec<f64>,
}

/// Ridge penalty selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RidgePenalty {
    /// `1e-8 * trace(Phi) / N_p`.
    Auto,
    Fixed(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DEFAULT_IMAGES;
    use std::f64::consts::PI;

    fn free1(eps: f64) -> SmoothingKernel {
        SmoothingKernel::gaussian(eps).unwrap()
    }

    fn regular(n: usize, dp: f64) -> Vec<[f64; 1]> {
        (0..n).map(|i| [(i as f64 + 0.5) * dp]).collect()
    }

    #[test]
    fn single_particle_field() {
        let ps = ParticleSet::new(vec![[0.7]], vec![1.0], vec![1.0], free1(1.0), Domain::Free).unwrap();
        assert!((ps.eval_field(&[0.7]) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn empty_field_is_zero() {
        let ps = ParticleSet::<1>::empty(free1(1.0), Domain::Free).unwrap();
        assert_eq!(ps.eval_field(&[3.0]), 0.0);
        assert_eq!(ps.eval_many(&[[1.0], [2.0]]), vec![0.0, 0.0]);
    }

    #[test]
    fn antisymmetric_pair_cancels() {
        let ps = ParticleSet::new(vec![[0.6], [1.4]], vec![1.0, -1.0], vec![1.0, 1.0], free1(0.3), Domain::Free)
            .unwrap();
        assert!(ps.eval_field(&[1.0]).abs() < 1e-14);
    }

    #[test]
    fn shape_and_volume_validation() {
        assert!(ParticleSet::new(vec![[0.0]], vec![], vec![1.0], free1(1.0), Domain::Free).is_err());
        assert!(ParticleSet::new(vec![[0.0]], vec![1.0], vec![0.0], free1(1.0), Domain::Free).is_err());
        assert!(ParticleSet::new(vec![[0.0]], vec![1.0], vec![1.0], free1(1.0), Domain::Periodic { period: 1.0 })
            .is_err());
    }

    #[test]
    fn periodic_positions_wrapped() {
        let k = SmoothingKernel::periodic_gaussian(0.1, 2.0, DEFAULT_IMAGES).unwrap();
        let ps = ParticleSet::new(vec![[2.5], [-0.5]], vec![1.0, 1.0], vec![1.0, 1.0], k, Domain::Periodic {
            period: 2.0,
        })
        .unwrap();
        assert!((ps.positions()[0][0] - 0.5).abs() < 1e-15);
        assert!((ps.positions()[1][0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn init_constant_and_cut() {
        let dp = 0.1;
        let pos = regular(10, dp);
        let vol = vec![dp; 10];
        let ps = ParticleSet::init_from_function(|_| 3.0, &pos, &vol, free1(0.13), Domain::Free, 0.0).unwrap();
        assert!(ps.intensities().iter().all(|&u| (u - 0.3).abs() < 1e-15));
        let none =
            ParticleSet::init_from_function(|_| 3.0, &pos, &vol, free1(0.13), Domain::Free, f64::INFINITY).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn beale_fixed_point_and_single_step() {
        let dp = 0.1;
        let pos = regular(20, dp);
        let ps = ParticleSet::init_from_function(|x| (x[0]).sin(), &pos, &[dp; 20], free1(0.13), Domain::Free, 0.0)
            .unwrap();
        let targets = ps.eval_many(ps.positions());
        let out = ps.beale_correct(&targets, 20, 0.0).unwrap();
        assert_eq!(out.set.intensities(), ps.intensities());
        assert_eq!(out.iterations, 0);

        let single = ParticleSet::new(vec![[0.0]], vec![0.0], vec![0.25], free1(1.0), Domain::Free).unwrap();
        let out = single.beale_correct(&[2.0], 1, 0.0).unwrap();
        assert!((out.set.intensities()[0] - 0.5).abs() < 1e-15);
        assert!(!out.converged);
    }

    #[test]
    fn beale_residual_decreases() {
        let dp = 0.1;
        let pos = regular(20, dp);
        let f = |x: &[f64; 1]| (-(x[0] - 1.0).powi(2) / 0.2).exp();
        let ps = ParticleSet::init_from_function(f, &pos, &[dp; 20], free1(1.3 * dp), Domain::Free, 0.0).unwrap();
        let targets: Vec<f64> = pos.iter().map(f).collect();
        let out = ps.beale_correct(&targets, 10, 0.0).unwrap();
        let h = &out.history;
        assert_eq!(h.len(), 11);
        for w in h.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{h:?}");
        }
        assert!(h[10] < h[1]);
    }

    #[test]
    fn ridge_scalar_cases() {
        let k = free1(0.5);
        let phi0 = k.eval(&[0.0]);
        let ps = ParticleSet::new(vec![[1.0]], vec![0.0], vec![1.0], k, Domain::Free).unwrap();
        let u = ps.ridge_fit(&[2.0], RidgePenalty::Fixed(0.0)).unwrap();
        assert!((u.intensities()[0] - 2.0 / phi0).abs() < 1e-12);
        let lam = 0.3;
        let u = ps.ridge_fit(&[2.0], RidgePenalty::Fixed(lam)).unwrap();
        assert!((u.intensities()[0] - phi0 * 2.0 / (phi0 * phi0 + lam)).abs() < 1e-12);
        let u = ps.ridge_fit(&[2.0], RidgePenalty::Fixed(1e12)).unwrap();
        assert!(u.intensities()[0].abs() < 1e-11);
        assert!(ps.ridge_fit(&[2.0], RidgePenalty::Fixed(-1.0)).is_err());
    }

    #[test]
    fn ridge_reproduces_targets_on_separated_set() {
        let dp = 0.5;
        let pos = regular(12, dp);
        let ps = ParticleSet::new(pos.clone(), vec![0.0; 12], vec![dp; 12], free1(0.2), Domain::Free).unwrap();
        let targets: Vec<f64> = pos.iter().map(|x| (2.0 * x[0]).cos()).collect();
        let fit = ps.ridge_fit(&targets, RidgePenalty::Fixed(0.0)).unwrap();
        let back = fit.eval_many(fit.positions());
        for (a, b) in back.iter().zip(&targets) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_singular_without_penalty() {
        // two coincident particles give a rank-one kernel matrix
        let ps = ParticleSet::new(vec![[0.0], [0.0]], vec![0.0; 2], vec![1.0; 2], free1(1.0), Domain::Free).unwrap();
        assert!(matches!(ps.ridge_fit(&[1.0, 1.0], RidgePenalty::Fixed(0.0)), Err(Error::SingularRidge)));
        assert!(ps.ridge_fit(&[1.0, 1.0], RidgePenalty::Fixed(1e-3)).is_ok());
    }

    #[test]
    fn cell_list_matches_brute_force() {
        let k = SmoothingKernel::gaussian(0.05).unwrap().with_cutoff(6.0).unwrap();
        let dp = PI / 40.0;
        let mut pos = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                pos.push([(i as f64 + 0.5) * dp, (j as f64 + 0.5) * dp]);
            }
        }
        let vols = vec![dp * dp; pos.len()];
        let ps = ParticleSet::init_from_function(
            |x| (x[0]).sin() * (2.0 * x[1]).cos(),
            &pos,
            &vols,
            k,
            Domain::Box { lo: [0.0; 2], hi: [PI; 2] },
            0.0,
        )
        .unwrap();
        let pts: Vec<[f64; 2]> = (0..300).map(|i| [0.01 * i as f64, 3.0 - 0.01 * i as f64]).collect();
        let fast = ps.eval_many(&pts);
        for (x, f) in pts.iter().zip(&fast) {
            assert!((ps.eval_field(x) - f).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let k = SmoothingKernel::gaussian(0.2).unwrap();
        let ps = ParticleSet::new(vec![[0.1, 0.2], [0.3, -0.4]], vec![1.5, -2.0], vec![0.01, 0.02], k, Domain::Free)
            .unwrap();
        let mut buf = Vec::new();
        ps.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,U,V"));
        let back = ParticleSet::<2>::read_csv(&buf[..], k, Domain::Free).unwrap();
        assert_eq!(back, ps);
    }
}
