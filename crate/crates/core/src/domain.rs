//! Points and the spatial domains particle sets live on.

/// A point (or displacement) in `D` dimensions.
pub type Point<const D: usize> = [f64; D];

/// Spatial domain of a particle set.
///
/// Periodic domains are `[0, period)` along every axis. Box domains are closed
/// and positions are clamped into them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain<const D: usize> {
    Free,
    Periodic { period: f64 },
    Box { lo: Point<D>, hi: Point<D> },
}

impl<const D: usize> Domain<D> {
    /// Displacement `a - b`, using the minimum-image convention on periodic domains.
    #[inline]
    pub fn displacement(&self, a: &Point<D>, b: &Point<D>) -> Point<D> {
        let mut d = [0.0; D];
        for k in 0..D {
            d[k] = a[k] - b[k];
        }
        if let Domain::Periodic { period } = *self {
            for v in d.iter_mut() {
                *v = minimum_image(*v, period);
            }
        }
        d
    }

    /// Map a position into the canonical representation of the domain.
    #[inline]
    pub fn wrap(&self, x: &Point<D>) -> Point<D> {
        let mut y = *x;
        match *self {
            Domain::Free => {}
            Domain::Periodic { period } => {
                for v in y.iter_mut() {
                    *v = v.rem_euclid(period);
                    // rem_euclid can round up to exactly `period`
                    if *v >= period {
                        *v = 0.0;
                    }
                }
            }
            Domain::Box { lo, hi } => {
                for k in 0..D {
                    y[k] = y[k].clamp(lo[k], hi[k]);
                }
            }
        }
        y
    }

    /// Geometric center (origin for free domains).
    pub fn center(&self) -> Point<D> {
        match *self {
            Domain::Free => [0.0; D],
            Domain::Periodic { period } => [0.5 * period; D],
            Domain::Box { lo, hi } => {
                let mut c = [0.0; D];
                for k in 0..D {
                    c[k] = 0.5 * (lo[k] + hi[k]);
                }
                c
            }
        }
    }

    pub fn contains(&self, x: &Point<D>) -> bool {
        match *self {
            Domain::Free => true,
            Domain::Periodic { period } => x.iter().all(|&v| (0.0..period).contains(&v)),
            Domain::Box { lo, hi } => (0..D).all(|k| x[k] >= lo[k] && x[k] <= hi[k]),
        }
    }
}

/// Reduce `d` into `[-period/2, period/2)`.
#[inline]
pub(crate) fn minimum_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

#[inline]
pub(crate) fn norm_sq<const D: usize>(x: &Point<D>) -> f64 {
    x.iter().map(|v| v * v).sum()
}
