//! `Laplacian_h psi = -omega` on a square with `psi = 0` on the walls.
//!
//! The five-point Laplacian is diagonalized by the type-I sine transform, which
//! is computed through an FFT of the odd extension.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Solver for a grid of `cells + 1` nodes per axis and spacing `h`. Plans
/// are shared and scratch is per call, so one solver can serve many threads.
#[derive(Clone)]
pub struct PoissonSolver {
    cells: usize,
    h: f64,
    fft: Arc<dyn Fft<f64>>,
    /// `(2 cos(k pi / cells) - 2) / h^2` for `k = 1..cells-1`.
    eigen: Vec<f64>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver").field("cells", &self.cells).field("h", &self.h).finish()
    }
}

impl PoissonSolver {
    pub fn new(cells: usize, h: f64) -> Result<Self> {
        if cells < 2 || !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("Poisson grid needs >= 2 cells and h > 0, got {cells}, {h}")));
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * cells);
        let eigen = (1..cells)
            .map(|k| (2.0 * (k as f64 * std::f64::consts::PI / cells as f64).cos() - 2.0) / (h * h))
            .collect();
        Ok(Self { cells, h, fft, eigen })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `S_k = sum_j x_j sin(pi j k / cells)` over interior indices, in place.
    fn dst(&self, x: &mut [f64], buf: &mut [Complex<f64>], scratch: &mut [Complex<f64>]) {
        let n = self.cells;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for j in 1..n {
            buf[j].re = x[j - 1];
            buf[2 * n - j].re = -x[j - 1];
        }
        self.fft.process_with_scratch(buf, scratch);
        for k in 1..n {
            x[k - 1] = -0.5 * buf[k].im;
        }
    }

    /// Two-dimensional sine transform of an `(cells-1)^2` interior array,
    /// axis 0 fastest.
    fn dst2(&self, a: &mut [f64]) {
        let m = self.cells - 1;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * self.cells];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut line = vec![0.0; m];
        for j in 0..m {
            self.dst(&mut a[j * m..(j + 1) * m], &mut buf, &mut scratch);
        }
        for i in 0..m {
            for j in 0..m {
                line[j] = a[j * m + i];
            }
            self.dst(&mut line, &mut buf, &mut scratch);
            for j in 0..m {
                a[j * m + i] = line[j];
            }
        }
    }

    /// Solve for `psi` on all `(cells+1)^2` nodes (axis 0 fastest) given
    /// `omega` on the same nodes. Wall values of `omega` are ignored.
    pub fn solve(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let n = self.cells + 1;
        if omega.len() != n * n {
            return Err(Error::Shape(format!("expected {} nodal values, got {}", n * n, omega.len())));
        }
        let m = self.cells - 1;
        let mut a = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                a[j * m + i] = omega[(j + 1) * n + i + 1];
            }
        }
        self.dst2(&mut a);
        let scale = (2.0 / self.cells as f64).powi(2);
        for l in 0..m {
            for k in 0..m {
                a[l * m + k] *= -scale / (self.eigen[k] + self.eigen[l]);
            }
        }
        self.dst2(&mut a);
        let mut psi = vec![0.0; n * n];
        for j in 0..m {
            for i in 0..m {
                psi[(j + 1) * n + i + 1] = a[j * m + i];
            }
        }
        Ok(psi)
    }

    /// Five-point Laplacian at interior nodes, zero on the walls.
    pub fn laplacian(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.cells + 1;
        let inv = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let c = j * n + i;
                out[c] = (psi[c - 1] + psi[c + 1] + psi[c - n] + psi[c + n] - 4.0 * psi[c]) * inv;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn discrete_manufactured_solution_is_exact() {
        let cells = 64;
        let h = PI / cells as f64;
        let s = PoissonSolver::new(cells, h).unwrap();
        let n = cells + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut target = vec![0.0; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                target[j * n + i] = (x * y * (PI - x) * (PI - y)).powi(2) + 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
        let omega: Vec<f64> = s.laplacian(&target).iter().map(|v| -v).collect();
        let psi = s.solve(&omega).unwrap();
        let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = psi.iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10 * scale, "{err}");
        let res = s.laplacian(&psi);
        let wscale = omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, w) in res.iter().zip(&omega) {
            assert!((r + w).abs() <= 1e-10 * wscale);
        }
    }

    #[test]
    fn zero_in_zero_out_and_linear() {
        let s = PoissonSolver::new(16, PI / 16.0).unwrap();
        assert!(s.solve(&vec![0.0; 17 * 17]).unwrap().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..289).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..289).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let (pa, pb, pab) = (s.solve(&a).unwrap(), s.solve(&b).unwrap(), s.solve(&ab).unwrap());
        for i in 0..289 {
            assert!((pab[i] - (2.0 * pa[i] - 3.0 * pb[i])).abs() < 1e-10);
        }
        assert!(s.solve(&[0.0; 10]).is_err());
    }

    #[test]
    fn continuous_solution_converges() {
        let err = |cells: usize| {
            let h = PI / cells as f64;
            let s = PoissonSolver::new(cells, h).unwrap();
            let n = cells + 1;
            let omega: Vec<f64> = (0..n * n)
                .map(|c| 2.0 * ((c % n) as f64 * h).sin() * ((c / n) as f64 * h).sin())
                .collect();
            let psi = s.solve(&omega).unwrap();
            (0..n * n).fold(0.0f64, |m, c| {
                let exact = ((c % n) as f64 * h).sin() * ((c / n) as f64 * h).sin();
                m.max((psi[c] - exact).abs())
            })
        };
        let (a, b) = (err(16), err(32));
        assert!(a / b >= 3.5, "{a} {b}");
    }
}
