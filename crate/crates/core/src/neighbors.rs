//! Uniform-bin cell list for truncated kernels.
//!
//! Items in each bin keep their original index order and bins are visited in a
//! fixed order, so neighbor sums are reproducible.

use crate::domain::Point;

pub(crate) struct CellList<const D: usize> {
    origin: Point<D>,
    size: f64,
    dims: [usize; D],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<const D: usize> CellList<D> {
    pub(crate) fn new(points: &[Point<D>], size: f64) -> Self {
        assert!(size > 0.0);
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in points {
            for k in 0..D {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if points.is_empty() {
            lo = [0.0; D];
            hi = [0.0; D];
        }
        let mut dims = [1usize; D];
        for k in 0..D {
            dims[k] = ((hi[k] - lo[k]) / size).floor() as usize + 1;
        }
        let nbins: usize = dims.iter().product();
        let mut counts = vec![0usize; nbins + 1];
        let bins: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut c = [0usize; D];
                for k in 0..D {
                    c[k] = (((p[k] - lo[k]) / size).floor() as usize).min(dims[k] - 1);
                }
                linear(&c, &dims)
            })
            .collect();
        for &b in &bins {
            counts[b + 1] += 1;
        }
        for i in 0..nbins {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; points.len()];
        for (i, &b) in bins.iter().enumerate() {
            items[fill[b]] = i;
            fill[b] += 1;
        }
        Self {
            origin: lo,
            size,
            dims,
            starts,
            items,
        }
    }

    /// Visit every item in the bins adjacent to the bin containing `x`.
    #[inline]
    pub(crate) fn for_each_candidate(&self, x: &Point<D>, mut f: impl FnMut(usize)) {
        let mut lo = [0usize; D];
        let mut hi = [0usize; D];
        for k in 0..D {
            let c = ((x[k] - self.origin[k]) / self.size).floor();
            let last = (self.dims[k] - 1) as f64;
            if c < -1.0 || c > last + 1.0 {
                return;
            }
            lo[k] = (c - 1.0).max(0.0) as usize;
            hi[k] = (c + 1.0).min(last) as usize;
        }
        let mut cur = lo;
        loop {
            let b = linear(&cur, &self.dims);
            for &i in &self.items[self.starts[b]..self.starts[b + 1]] {
                f(i);
            }
            // odometer increment, axis 0 fastest
            let mut k = 0;
            loop {
                if k == D {
                    return;
                }
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
                k += 1;
            }
        }
    }
}

#[inline]
fn linear<const D: usize>(c: &[usize; D], dims: &[usize; D]) -> usize {
    let mut idx = 0;
    for k in (0..D).rev() {
        idx = idx * dims[k] + c[k];
    }
    idx
}
