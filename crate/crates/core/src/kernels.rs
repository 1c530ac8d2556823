//! Smoothing, diffusion and redistribution kernels.
//!
//! All kernels are tensor products of one-dimensional profiles. The smoothing
//! profile is the standard normal density, so `phi_eps(x) = eps^-d phi(x / eps)`
//! has unit mass and unit variance per axis before scaling.

use std::f64::consts::PI;

use crate::domain::{minimum_image, norm_sq, Point};
use crate::error::{Error, Result};

/// Past this value of `z^2 / 2`, `exp(-z^2 / 2)` underflows to zero.
const UNDERFLOW_HALF_SQ: f64 = 746.0;

/// Default number of periodic images on each side.
pub const DEFAULT_IMAGES: usize = 3;

#[inline]
fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

/// Standard normal density.
#[inline]
pub fn gaussian_profile(z: f64) -> f64 {
    (-0.5 * z * z).exp() * inv_sqrt_2pi()
}

/// Shape of a smoothing kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    Gaussian,
    /// Gaussian summed over `images` periodic copies on each side.
    PeriodicGaussian { period: f64, images: usize },
}

/// The blob function `phi_eps` used to reconstruct fields from particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingKernel {
    eps: f64,
    family: KernelFamily,
    cutoff: Option<f64>,
}

impl SmoothingKernel {
    pub fn gaussian(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            eps,
            family: KernelFamily::Gaussian,
            cutoff: None,
        })
    }

    pub fn periodic_gaussian(eps: f64, period: f64, images: usize) -> Result<Self> {
        check_eps(eps)?;
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!("period must be > 0, got {period}")));
        }
        if images == 0 {
            return Err(Error::InvalidArgument("periodic kernel needs at least one image".into()));
        }
        Ok(Self {
            eps,
            family: KernelFamily::PeriodicGaussian { period, images },
            cutoff: None,
        })
    }

    /// Truncate the kernel to zero beyond `radius * eps`.
    ///
    /// Truncation enables cell-list summation. Only free-space kernels accept it.
    pub fn with_cutoff(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff must be > 0, got {radius}")));
        }
        if !matches!(self.family, KernelFamily::Gaussian) {
            return Err(Error::InvalidArgument("cutoff is only supported for free-space kernels".into()));
        }
        self.cutoff = Some(radius);
        Ok(self)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Absolute cutoff distance, if the kernel is truncated.
    pub fn cutoff_distance(&self) -> Option<f64> {
        self.cutoff.map(|c| c * self.eps)
    }

    /// Evaluate `phi_eps(x)`.
    #[inline]
    pub fn eval<const D: usize>(&self, x: &Point<D>) -> f64 {
        eval_profile(self.eps, self.family, self.cutoff, x)
    }
}

/// Diffusion kernel for particle strength exchange.
///
/// `eta = 2 phi`, which makes `int x_k^2 eta(x) dx = 2` per axis so that
/// `eps^-2 int (u(y) - u(x)) eta_eps(y - x) dy` approximates the Laplacian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PseKernel {
    inner: SmoothingKernel,
}

impl PseKernel {
    pub const NORMALIZATION: f64 = 2.0;

    /// PSE kernel with the same width, periodicity and cutoff as `smoothing`.
    pub fn matching(smoothing: &SmoothingKernel) -> Self {
        Self { inner: *smoothing }
    }

    pub fn gaussian(eps: f64) -> Result<Self> {
        Ok(Self {
            inner: SmoothingKernel::gaussian(eps)?,
        })
    }

    pub fn eps(&self) -> f64 {
        self.inner.eps
    }

    pub fn cutoff_distance(&self) -> Option<f64> {
        self.inner.cutoff_distance()
    }

    #[inline]
    pub fn eval<const D: usize>(&self, x: &Point<D>) -> f64 {
        Self::NORMALIZATION * self.inner.eval(x)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("smoothing length must be > 0, got {eps}")))
    }
}

#[inline]
fn eval_profile<const D: usize>(
    eps: f64,
    family: KernelFamily,
    cutoff: Option<f64>,
    x: &Point<D>,
) -> f64 {
    match family {
        KernelFamily::Gaussian => {
            let r2 = norm_sq(x) / (eps * eps);
            if let Some(c) = cutoff {
                if r2 > c * c {
                    return 0.0;
                }
            }
            if 0.5 * r2 > UNDERFLOW_HALF_SQ {
                return 0.0;
            }
            let norm = (inv_sqrt_2pi() / eps).powi(D as i32);
            norm * (-0.5 * r2).exp()
        }
        KernelFamily::PeriodicGaussian { period, images } => {
            let mut value = 1.0;
            for &xk in x.iter() {
                value *= periodic_axis(xk, eps, period, images);
                if value == 0.0 {
                    break;
                }
            }
            value
        }
    }
}

#[inline]
fn periodic_axis(x: f64, eps: f64, period: f64, images: usize) -> f64 {
    let x = minimum_image(x, period);
    let n = images as i64;
    let mut sum = 0.0;
    for k in -n..=n {
        let z = (x - k as f64 * period) / eps;
        let h = 0.5 * z * z;
        if h <= UNDERFLOW_HALF_SQ {
            sum += (-h).exp();
        }
    }
    sum * inv_sqrt_2pi() / eps
}

/// Redistribution shape functions used by remeshing and grid interpolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RedistributionKernel {
    /// Monaghan's M4' kernel: C1, support 2, exact for quadratics.
    M4Prime,
    /// Piecewise linear hat: support 1, exact for linears.
    LinearHat,
}

impl RedistributionKernel {
    /// Support radius in cell units.
    pub fn support(&self) -> usize {
        match self {
            RedistributionKernel::M4Prime => 2,
            RedistributionKernel::LinearHat => 1,
        }
    }

    /// One-dimensional profile `W(r)`, `r` in cell units.
    #[inline]
    pub fn eval1(&self, r: f64) -> f64 {
        let a = r.abs();
        match self {
            RedistributionKernel::M4Prime => {
                if a <= 1.0 {
                    1.0 - 2.5 * a * a + 1.5 * a * a * a
                } else if a < 2.0 {
                    0.5 * (2.0 - a) * (2.0 - a) * (1.0 - a)
                } else {
                    0.0
                }
            }
            RedistributionKernel::LinearHat => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
        }
    }

    /// Tensor-product kernel `W_d(r) = prod_k W(r_k)`.
    #[inline]
    pub fn eval<const D: usize>(&self, r: &Point<D>) -> f64 {
        r.iter().map(|&v| self.eval1(v)).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn gaussian_values_at_origin() {
        let k1 = SmoothingKernel::gaussian(1.0).unwrap();
        assert!((k1.eval(&[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let k05 = SmoothingKernel::gaussian(0.5).unwrap();
        assert!((k05.eval(&[0.0]) - 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn scaling_law() {
        let eps = 0.37;
        let k = SmoothingKernel::gaussian(eps).unwrap();
        for &x in &[0.0, 0.1, -0.5, 1.3] {
            let expected = gaussian_profile(x / eps) / eps;
            assert!((k.eval(&[x]) - expected).abs() < 1e-14);
        }
        let expected2 = gaussian_profile(0.2 / eps) * gaussian_profile(-0.1 / eps) / (eps * eps);
        assert!((k.eval(&[0.2, -0.1]) - expected2).abs() < 1e-13);
    }

    #[test]
    fn unit_mass_free_and_periodic() {
        let k = SmoothingKernel::gaussian(0.3).unwrap();
        let m = trapezoid(|x| k.eval(&[x]), -10.0, 10.0, 4000);
        assert!((m - 1.0).abs() < 1e-8, "{m}");

        let l = 2.0 * PI;
        let kp = SmoothingKernel::periodic_gaussian(0.1, l, DEFAULT_IMAGES).unwrap();
        let mp = trapezoid(|x| kp.eval(&[x]), 0.0, l, 2000);
        assert!((mp - 1.0).abs() < 1e-8, "{mp}");

        // 2D free kernel, product quadrature
        let k2 = SmoothingKernel::gaussian(0.2).unwrap();
        let n = 400;
        let h = 4.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let x = -2.0 + i as f64 * h;
                let y = -2.0 + j as f64 * h;
                s += k2.eval(&[x, y]);
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-8);
    }

    #[test]
    fn periodic_image_truncation() {
        let l = 2.0 * PI;
        let eps = l / 8.0;
        let k3 = SmoothingKernel::periodic_gaussian(eps, l, 3).unwrap();
        let k6 = SmoothingKernel::periodic_gaussian(eps, l, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-10.0..10.0);
            assert!((k3.eval(&[x]) - k6.eval(&[x])).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_kernel_is_periodic() {
        let l = 2.0 * PI;
        let k = SmoothingKernel::periodic_gaussian(0.5, l, 3).unwrap();
        for &x in &[0.0, 0.3, 2.9, -1.0] {
            assert!((k.eval(&[x]) - k.eval(&[x + l])).abs() < 1e-14);
        }
    }

    #[test]
    fn cutoff_zeroes_tail() {
        let k = SmoothingKernel::gaussian(0.1).unwrap().with_cutoff(6.0).unwrap();
        assert_eq!(k.eval(&[0.61, 0.0]), 0.0);
        assert!(k.eval(&[0.59, 0.0]) > 0.0);
        assert!(SmoothingKernel::periodic_gaussian(0.1, 1.0, 3).unwrap().with_cutoff(6.0).is_err());
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(SmoothingKernel::gaussian(0.0).is_err());
        assert!(SmoothingKernel::gaussian(f64::NAN).is_err());
        assert!(SmoothingKernel::periodic_gaussian(0.1, -1.0, 3).is_err());
        assert!(SmoothingKernel::periodic_gaussian(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn pse_second_moment() {
        let p = PseKernel::gaussian(1.0).unwrap();
        let m2 = trapezoid(|x| x * x * p.eval(&[x]), -12.0, 12.0, 6000);
        assert!((m2 - 2.0).abs() < 1e-6, "{m2}");

        // 2D at eps = 0.2: eps^-2 int x1^2 eta_eps = 2
        let eps = 0.2;
        let p2 = PseKernel::gaussian(eps).unwrap();
        let n = 500;
        let a = 2.5;
        let h = 2.0 * a / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let x = -a + i as f64 * h;
                let y = -a + j as f64 * h;
                s += x * x * p2.eval(&[x, y]);
            }
        }
        let m = s * h * h / (eps * eps);
        assert!((m - 2.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn pse_symmetric() {
        let p = PseKernel::gaussian(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            assert_eq!(p.eval(&[x]), p.eval(&[-x]));
        }
    }

    #[test]
    fn m4_prime_values() {
        let w = RedistributionKernel::M4Prime;
        assert_eq!(w.eval1(0.0), 1.0);
        assert!((w.eval1(0.5) - 0.5625).abs() < 1e-15);
        assert!((w.eval1(1.5) + 0.0625).abs() < 1e-15);
        assert_eq!(w.eval1(1.0), 0.0);
        assert_eq!(w.eval1(2.0), 0.0);
        assert_eq!(w.eval1(-2.5), 0.0);
        let sum = w.eval1(0.5) + w.eval1(-0.5) + w.eval1(1.5) + w.eval1(-1.5);
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_and_quadratic_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for w in [RedistributionKernel::M4Prime, RedistributionKernel::LinearHat] {
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(-5.0..5.0);
                let s: f64 = (-10..=10).map(|i| w.eval1(x - i as f64)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let w = RedistributionKernel::M4Prime;
        let (a, b, c) = (0.3, -1.2, 0.7);
        let f = |x: f64| a + b * x + c * x * x;
        let ell = 0.25;
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let s: f64 = (-20..=20)
                .map(|i| {
                    let xi = i as f64 * ell;
                    f(xi) * w.eval1((x - xi) / ell)
                })
                .sum();
            assert!((s - f(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn compact_support() {
        for w in [RedistributionKernel::M4Prime, RedistributionKernel::LinearHat] {
            let r = w.support() as f64;
            for d in [0.0, 1e-9, 0.5, 3.0] {
                assert_eq!(w.eval1(r + d), 0.0);
                assert_eq!(w.eval1(-r - d), 0.0);
            }
        }
        let w = RedistributionKernel::M4Prime;
        assert!((w.eval(&[0.5, 1.5]) - 0.5625 * -0.0625).abs() < 1e-15);
    }
}
