//! Particle-to-grid projection, grid interpolation and particle regeneration.
//!
//! Remeshing is done in two steps. Intensities are first assigned to the nodes
//! of a uniform grid of spacing `l = 2 dp` with a redistribution kernel `W`,
//! then a fresh lattice of particles (two per cell and per axis, at 1/4 and 3/4
//! of the cell) samples the grid interpolant. With `W = M4'` the round trip
//! conserves the moments of order 0, 1 and 2.

use std::io::Write;

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::kernels::{RedistributionKernel, SmoothingKernel};
use crate::particle_field::{map_points, ParticleSet};

const MAX_STENCIL: usize = 4;

/// How node indices beyond the grid are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Indices wrap; the grid covers `[0, n l)` along each axis.
    Periodic,
    /// Indices are clamped to the first/last node: mass assigned past the
    /// boundary folds back onto it.
    Clamped,
}

/// Nodal values on a uniform grid. Axis 0 varies fastest in `values`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformGrid<const D: usize> {
    origin: Point<D>,
    spacing: f64,
    counts: [usize; D],
    boundary: Boundary,
    values: Vec<f64>,
}

impl<const D: usize> UniformGrid<D> {
    pub fn zeros(origin: Point<D>, spacing: f64, counts: [usize; D], boundary: Boundary) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing must be > 0, got {spacing}")));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("grid needs at least one node per axis".into()));
        }
        if boundary == Boundary::Periodic && origin.iter().any(|&o| o != 0.0) {
            return Err(Error::InvalidArgument("periodic grids must start at the origin".into()));
        }
        if boundary == Boundary::Periodic && counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::InvalidArgument("periodic grids must have equal node counts".into()));
        }
        let n = counts.iter().product();
        Ok(Self {
            origin,
            spacing,
            counts,
            boundary,
            values: vec![0.0; n],
        })
    }

    /// Same geometry, given values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "grid has {} nodes, got {} values",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self { values, ..self.clone() })
    }

    pub fn origin(&self) -> Point<D> {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn counts(&self) -> [usize; D] {
        self.counts
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node_volume(&self) -> f64 {
        self.spacing.powi(D as i32)
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.spacing == other.spacing
            && self.counts == other.counts
            && self.boundary == other.boundary
    }

    /// Linear index of a node.
    pub fn index(&self, node: [usize; D]) -> usize {
        let mut idx = 0;
        for k in (0..D).rev() {
            idx = idx * self.counts[k] + node[k];
        }
        idx
    }

    pub fn node_index(&self, mut linear: usize) -> [usize; D] {
        let mut node = [0; D];
        for k in 0..D {
            node[k] = linear % self.counts[k];
            linear /= self.counts[k];
        }
        node
    }

    pub fn node_position(&self, node: [usize; D]) -> Point<D> {
        let mut x = [0.0; D];
        for k in 0..D {
            x[k] = self.origin[k] + node[k] as f64 * self.spacing;
        }
        x
    }

    pub fn node_positions(&self) -> Vec<Point<D>> {
        (0..self.len()).map(|i| self.node_position(self.node_index(i))).collect()
    }

    /// Domain spanned by the grid.
    pub fn domain(&self) -> Domain<D> {
        match self.boundary {
            Boundary::Periodic => Domain::Periodic {
                period: self.counts[0] as f64 * self.spacing,
            },
            Boundary::Clamped => {
                let mut hi = self.origin;
                for k in 0..D {
                    hi[k] += (self.counts[k] - 1) as f64 * self.spacing;
                }
                Domain::Box { lo: self.origin, hi }
            }
        }
    }

    /// Number of cells along each axis.
    pub fn cells(&self) -> [usize; D] {
        let mut c = self.counts;
        if self.boundary == Boundary::Clamped {
            for v in c.iter_mut() {
                *v -= 1;
            }
        }
        c
    }

    /// Per-axis node indices and weights of the redistribution stencil at `x`.
    fn stencil(&self, x: &Point<D>, w: RedistributionKernel) -> ([[(usize, f64); MAX_STENCIL]; D], usize) {
        let width = 2 * w.support();
        let mut out = [[(0usize, 0.0); MAX_STENCIL]; D];
        for k in 0..D {
            let s = (x[k] - self.origin[k]) / self.spacing;
            let base = s.floor() as i64;
            let first = base - w.support() as i64 + 1;
            for m in 0..width {
                let j = first + m as i64;
                let weight = w.eval1(s - j as f64);
                let n = self.counts[k] as i64;
                let idx = match self.boundary {
                    Boundary::Periodic => j.rem_euclid(n),
                    Boundary::Clamped => j.clamp(0, n - 1),
                } as usize;
                out[k][m] = (idx, weight);
            }
        }
        (out, width)
    }

    /// Visit `(linear node index, tensor weight)` for every stencil node at `x`.
    #[inline]
    fn for_each_weight(&self, x: &Point<D>, w: RedistributionKernel, mut f: impl FnMut(usize, f64)) {
        let (st, width) = self.stencil(x, w);
        let mut cur = [0usize; D];
        loop {
            let mut weight = 1.0;
            let mut node = [0usize; D];
            for k in 0..D {
                let (i, wk) = st[k][cur[k]];
                weight *= wk;
                node[k] = i;
            }
            if weight != 0.0 {
                f(self.index(node), weight);
            }
            let mut k = 0;
            loop {
                if k == D {
                    return;
                }
                cur[k] += 1;
                if cur[k] < width {
                    break;
                }
                cur[k] = 0;
                k += 1;
            }
        }
    }

    fn check_inside(&self, x: &Point<D>) -> Result<Point<D>> {
        match self.boundary {
            Boundary::Periodic => Ok(self.domain().wrap(x)),
            Boundary::Clamped => {
                let tol = 1e-12 * self.spacing;
                for k in 0..D {
                    let hi = self.origin[k] + (self.counts[k] - 1) as f64 * self.spacing;
                    if x[k] < self.origin[k] - tol || x[k] > hi + tol {
                        return Err(Error::PointOutsideGrid(x.to_vec()));
                    }
                }
                Ok(*x)
            }
        }
    }

    /// Grid interpolant `u(x) = sum_i u_i W((x - x_i) / l)`.
    pub fn interpolate(&self, w: RedistributionKernel, x: &Point<D>) -> Result<f64> {
        let x = self.check_inside(x)?;
        let mut s = 0.0;
        self.for_each_weight(&x, w, |i, wt| s += self.values[i] * wt);
        Ok(s)
    }

    /// Interpolate at many points.
    pub fn interpolate_many(&self, w: RedistributionKernel, points: &[Point<D>]) -> Result<Vec<f64>> {
        let inside = points
            .iter()
            .map(|x| self.check_inside(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(map_points(&inside, |x| {
            let mut s = 0.0;
            self.for_each_weight(x, w, |i, wt| s += self.values[i] * wt);
            s
        }))
    }

    /// Lattice of regenerated particle positions: `origin + (m + 1/2) l / 2`
    /// along each axis, axis 0 fastest.
    pub fn candidate_positions(&self) -> Vec<Point<D>> {
        let cells = self.cells();
        let per_axis: Vec<usize> = cells.iter().map(|c| 2 * c).collect();
        let total: usize = per_axis.iter().product();
        let dp = 0.5 * self.spacing;
        (0..total)
            .map(|mut lin| {
                let mut x = [0.0; D];
                for k in 0..D {
                    let m = lin % per_axis[k];
                    lin /= per_axis[k];
                    x[k] = self.origin[k] + (m as f64 + 0.5) * dp;
                }
                x
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = ["x", "y", "z"][..D].to_vec();
        header.push("value");
        w.write_record(&header)?;
        for i in 0..self.len() {
            let x = self.node_position(self.node_index(i));
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(self.values[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assign particle intensities to grid nodes:
/// `u_i = V_i^-1 sum_p U_p W((x_i - x_p) / l)`.
///
/// On clamped grids particles may sit up to the kernel support past the last
/// node; anything farther is an error.
pub fn project_to_grid<const D: usize>(
    ps: &ParticleSet<D>,
    grid: &UniformGrid<D>,
    w: RedistributionKernel,
) -> Result<UniformGrid<D>> {
    let mut out = grid.with_values(vec![0.0; grid.len()])?;
    let halo = w.support() as f64 * grid.spacing;
    let inv_vol = 1.0 / grid.node_volume();
    for (p, (x, &u)) in ps.positions().iter().zip(ps.intensities()).enumerate() {
        let x = match grid.boundary {
            Boundary::Periodic => grid.domain().wrap(x),
            Boundary::Clamped => {
                for k in 0..D {
                    let hi = grid.origin[k] + (grid.counts[k] - 1) as f64 * grid.spacing;
                    if x[k] < grid.origin[k] - halo || x[k] > hi + halo {
                        return Err(Error::OutsideGrid {
                            index: p,
                            position: x.to_vec(),
                        });
                    }
                }
                *x
            }
        };
        let values = &mut out.values;
        grid.for_each_weight(&x, w, |i, wt| values[i] += u * wt * inv_vol);
    }
    Ok(out)
}

/// `u^g(x)`; errors when `x` is outside a clamped grid.
pub fn grid_interp_field<const D: usize>(
    grid: &UniformGrid<D>,
    w: RedistributionKernel,
    x: &Point<D>,
) -> Result<f64> {
    grid.interpolate(w, x)
}

/// Build a fresh particle lattice of spacing `dp = l / 2` sampling the grid
/// interpolant: `U_p = u^g(x_p) dp^D`. Candidates with `|u^g(x_p)| <= eps_cut`
/// are not created.
pub fn regenerate_particles<const D: usize>(
    grid: &UniformGrid<D>,
    w: RedistributionKernel,
    dp: f64,
    eps_cut: f64,
    kernel: SmoothingKernel,
) -> Result<ParticleSet<D>> {
    check_ratio(grid.spacing, dp)?;
    if !(eps_cut >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps_cut must be >= 0, got {eps_cut}")));
    }
    let candidates = grid.candidate_positions();
    let values = grid.interpolate_many(w, &candidates)?;
    let vol = dp.powi(D as i32);
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (x, v) in candidates.into_iter().zip(values) {
        if v.abs() > eps_cut {
            xs.push(x);
            us.push(v * vol);
        }
    }
    let n = xs.len();
    ParticleSet::new(xs, us, vec![vol; n], kernel, grid.domain())
}

fn check_ratio(spacing: f64, dp: f64) -> Result<()> {
    if (spacing - 2.0 * dp).abs() > 1e-12 * spacing {
        return Err(Error::InvalidArgument(format!(
            "remeshing grid spacing {spacing} must equal 2 dp = {}",
            2.0 * dp
        )));
    }
    Ok(())
}

/// A configured two-step remeshing: grid geometry, kernel and particle size.
#[derive(Clone, Debug)]
pub struct Remesher<const D: usize> {
    grid: UniformGrid<D>,
    w: RedistributionKernel,
    dp: f64,
    kernel: SmoothingKernel,
}

impl<const D: usize> Remesher<D> {
    /// Fails unless the grid spacing is exactly `2 dp`.
    pub fn new(grid: UniformGrid<D>, w: RedistributionKernel, dp: f64, kernel: SmoothingKernel) -> Result<Self> {
        check_ratio(grid.spacing, dp)?;
        Ok(Self { grid, w, dp, kernel })
    }

    pub fn grid(&self) -> &UniformGrid<D> {
        &self.grid
    }

    pub fn redistribution(&self) -> RedistributionKernel {
        self.w
    }

    pub fn dp(&self) -> f64 {
        self.dp
    }

    pub fn kernel(&self) -> &SmoothingKernel {
        &self.kernel
    }

    pub fn project(&self, ps: &ParticleSet<D>) -> Result<UniformGrid<D>> {
        project_to_grid(ps, &self.grid, self.w)
    }

    pub fn regenerate(&self, grid: &UniformGrid<D>, eps_cut: f64) -> Result<ParticleSet<D>> {
        regenerate_particles(grid, self.w, self.dp, eps_cut, self.kernel)
    }

    /// Project then regenerate.
    pub fn remesh(&self, ps: &ParticleSet<D>, eps_cut: f64) -> Result<ParticleSet<D>> {
        self.regenerate(&self.project(ps)?, eps_cut)
    }
}
