//! Vortex-in-cell velocity evaluation.

use std::f64::consts::PI;

use crate::domain::Point;
use crate::error::{Error, Result};
use crate::kernels::RedistributionKernel;
use crate::particle_field::ParticleSet;
use crate::remeshing::{project_to_grid, Boundary, UniformGrid};

use super::poisson::PoissonSolver;

/// Smallest accepted number of nodes per axis.
pub const MIN_NODES: usize = 16;

const GHOSTS: usize = 2;
const W: RedistributionKernel = RedistributionKernel::M4Prime;

/// Grid, Poisson solver and interpolation for the box `[0, side]^2`.
#[derive(Clone, Debug)]
pub struct VicSolver {
    grid: UniformGrid<2>,
    poisson: PoissonSolver,
}

/// Nodal stream function and velocity, with mirror ghost layers for
/// interpolation near the walls.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub omega: UniformGrid<2>,
    pub psi: UniformGrid<2>,
    pub ux: UniformGrid<2>,
    pub uy: UniformGrid<2>,
    ext_ux: UniformGrid<2>,
    ext_uy: UniformGrid<2>,
}

impl VicSolver {
    /// `cells` cells per axis on `[0, pi]^2`.
    pub fn new(cells: usize) -> Result<Self> {
        Self::with_side(cells, PI)
    }

    pub fn with_side(cells: usize, side: f64) -> Result<Self> {
        if cells + 1 < MIN_NODES {
            return Err(Error::InvalidArgument(format!(
                "vortex-in-cell grid needs at least {MIN_NODES} nodes per axis, got {}",
                cells + 1
            )));
        }
        let h = side / cells as f64;
        let grid = UniformGrid::zeros([0.0, 0.0], h, [cells + 1, cells + 1], Boundary::Clamped)?;
        Ok(Self {
            grid,
            poisson: PoissonSolver::new(cells, h)?,
        })
    }

    pub fn grid(&self) -> &UniformGrid<2> {
        &self.grid
    }

    pub fn cells(&self) -> usize {
        self.poisson.cells()
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    /// Nodal vorticity `omega_i = h^-2 sum_p Gamma_p W(...)`.
    pub fn vorticity(&self, ps: &ParticleSet<2>) -> Result<UniformGrid<2>> {
        project_to_grid(ps, &self.grid, W)
    }

    pub fn velocity_field(&self, ps: &ParticleSet<2>) -> Result<VelocityField> {
        self.solve_nodes(&self.vorticity(ps)?)
    }

    /// Velocity from nodal vorticity on this solver's grid.
    pub fn solve_nodes(&self, omega: &UniformGrid<2>) -> Result<VelocityField> {
        if !omega.same_geometry(&self.grid) {
            return Err(Error::Shape("vorticity grid does not match the solver grid".into()));
        }
        let psi = self.poisson.solve(omega.values())?;
        let n = self.cells() + 1;
        let h = self.spacing();
        let d = |f: &[f64], i: usize, j: usize, axis: usize| -> f64 {
            let at = |k: usize| if axis == 0 { f[j * n + k] } else { f[k * n + i] };
            let k = if axis == 0 { i } else { j };
            if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * h)
            }
        };
        let mut ux = vec![0.0; n * n];
        let mut uy = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                ux[j * n + i] = d(&psi, i, j, 1);
                uy[j * n + i] = -d(&psi, i, j, 0);
            }
        }
        let ext_ux = self.extend(&ux, [-1.0, 1.0])?;
        let ext_uy = self.extend(&uy, [1.0, -1.0])?;
        Ok(VelocityField {
            omega: omega.clone(),
            psi: self.grid.with_values(psi)?,
            ux: self.grid.with_values(ux)?,
            uy: self.grid.with_values(uy)?,
            ext_ux,
            ext_uy,
        })
    }

    /// Mirror `values` across the walls; `parity[k]` is the sign picked up by
    /// reflection across a wall normal to axis `k`.
    fn extend(&self, values: &[f64], parity: [f64; 2]) -> Result<UniformGrid<2>> {
        let n = self.cells() + 1;
        let m = n + 2 * GHOSTS;
        let h = self.spacing();
        let fold = |i: i64| -> (usize, bool) {
            let last = (n - 1) as i64;
            if i < 0 {
                ((-i) as usize, true)
            } else if i > last {
                ((2 * last - i) as usize, true)
            } else {
                (i as usize, false)
            }
        };
        let mut out = vec![0.0; m * m];
        for jj in 0..m {
            let (j, fj) = fold(jj as i64 - GHOSTS as i64);
            for ii in 0..m {
                let (i, fi) = fold(ii as i64 - GHOSTS as i64);
                let mut s = 1.0;
                if fi {
                    s *= parity[0];
                }
                if fj {
                    s *= parity[1];
                }
                out[jj * m + ii] = s * values[j * n + i];
            }
        }
        let g = GHOSTS as f64 * h;
        UniformGrid::zeros([-g, -g], h, [m, m], Boundary::Clamped)?.with_values(out)
    }
}

impl VelocityField {
    /// Velocity at a point inside the box.
    pub fn sample(&self, x: &Point<2>) -> Result<[f64; 2]> {
        Ok([self.ext_ux.interpolate(W, x)?, self.ext_uy.interpolate(W, x)?])
    }

    pub fn sample_many(&self, points: &[Point<2>]) -> Result<Vec<[f64; 2]>> {
        let ux = self.ext_ux.interpolate_many(W, points)?;
        let uy = self.ext_uy.interpolate_many(W, points)?;
        Ok(ux.into_iter().zip(uy).map(|(a, b)| [a, b]).collect())
    }
}

/// Both velocity components at `points`, interleaved `(u_x, u_y)` per point.
pub fn interleave(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|p| [p[0], p[1]]).collect()
}

pub(crate) fn max_speed(v: &[[f64; 2]]) -> f64 {
    v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::kernels::SmoothingKernel;

    fn manufactured_error(cells: usize) -> f64 {
        let vic = VicSolver::new(cells).unwrap();
        let g = vic.grid();
        let omega = g.with_values(g.node_positions().iter().map(|x| 2.0 * x[0].sin() * x[1].sin()).collect()).unwrap();
        let f = vic.solve_nodes(&omega).unwrap();
        let mut err = 0.0f64;
        for (i, x) in g.node_positions().iter().enumerate() {
            let ex = [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin()];
            err = err.max((f.ux.values()[i] - ex[0]).abs()).max((f.uy.values()[i] - ex[1]).abs());
        }
        err
    }

    #[test]
    fn manufactured_velocity_converges() {
        let (a, b) = (manufactured_error(32), manufactured_error(64));
        assert!(a < 5e-3 && a / b >= 3.5, "{a} {b}");
    }

    #[test]
    fn walls_have_no_normal_flow() {
        let vic = VicSolver::new(32).unwrap();
        let k = SmoothingKernel::gaussian(0.1).unwrap();
        let dom = Domain::Box { lo: [0.0, 0.0], hi: [PI, PI] };
        let ps = ParticleSet::new(vec![[0.3, 0.4], [1.0, 2.9], [2.0, 2.0]], vec![1.0, -0.5, 0.7], vec![0.01; 3], k, dom).unwrap();
        let f = vic.velocity_field(&ps).unwrap();
        let n = 33;
        for k in 0..n {
            assert_eq!(f.ux.values()[k * n], 0.0);
            assert_eq!(f.ux.values()[k * n + n - 1], 0.0);
            assert_eq!(f.uy.values()[k], 0.0);
            assert_eq!(f.uy.values()[(n - 1) * n + k], 0.0);
        }
        for t in [0.0, 0.7, 1.9, PI] {
            assert!(f.sample(&[0.0, t]).unwrap()[0].abs() < 1e-15);
            assert!(f.sample(&[t, PI]).unwrap()[1].abs() < 1e-15);
        }
    }

    #[test]
    fn zero_and_linear() {
        let vic = VicSolver::new(16).unwrap();
        let k = SmoothingKernel::gaussian(0.1).unwrap();
        let dom = Domain::Box { lo: [0.0, 0.0], hi: [PI, PI] };
        let xs = vec![[0.3, 0.4], [1.0, 2.9], [2.0, 2.0], [3.1, 0.05]];
        let a = ParticleSet::new(xs.clone(), vec![1.0, -0.5, 0.7, 0.2], vec![0.01; 4], k, dom).unwrap();
        let b = a.with_intensities(vec![-0.3, 0.1, 0.4, 1.0]).unwrap();
        let ab = a.with_intensities(vec![2.0 - 0.9, -1.0 + 0.3, 1.4 + 1.2, 0.4 + 3.0]).unwrap();
        let pts = vec![[0.5, 0.5], [0.01, 3.0], [2.2, 1.1]];
        let s = |p: &ParticleSet<2>| vic.velocity_field(p).unwrap().sample_many(&pts).unwrap();
        let (va, vb, vab) = (s(&a), s(&b), s(&ab));
        for i in 0..3 {
            for c in 0..2 {
                assert!((vab[i][c] - (2.0 * va[i][c] + 3.0 * vb[i][c])).abs() < 1e-10);
            }
        }
        let zero = a.with_intensities(vec![0.0; 4]).unwrap();
        assert!(s(&zero).iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        assert!(VicSolver::new(14).is_err());
    }
}
