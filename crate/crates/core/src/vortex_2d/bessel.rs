//! Bessel functions of the first kind, orders 0 and 1.

use std::f64::consts::PI;

/// First positive zero of `J1`.
pub const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512_3;

const SERIES_LIMIT: f64 = 12.0;

pub fn j0(x: f64) -> f64 {
    jn(0, x.abs())
}

pub fn j1(x: f64) -> f64 {
    x.signum() * jn(1, x.abs())
}

fn jn(n: u32, x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(n, x)
    } else {
        asymptotic(n, x)
    }
}

/// `sum_m (-1)^m (x/2)^(2m+n) / (m! (m+n)!)`.
fn series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = if n == 0 { 1.0 } else { h };
    let mut sum = term;
    let q = -h * h;
    for m in 1..200 {
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && m > 5 {
            break;
        }
    }
    sum
}

/// Hankel expansion, summed while the terms keep shrinking.
fn asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * z);
        if a.abs() >= last || a.abs() < 1e-18 {
            break;
        }
        last = a.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
    }
    let chi = x - (n as f64) * 0.5 * PI - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
