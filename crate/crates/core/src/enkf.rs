//! Stochastic (perturbed-observation) ensemble Kalman filter algebra.
//!
//! The analysis is written in member space: `Z_a = Z_f + Z_f F` where the
//! `N x N` correction matrix
//!
//! ```text
//! F = (N-1)^-1/2 (I + Y^T R^-1 Y)^-1 Y^T R^-1 (D - Y_pred)
//! ```
//!
//! depends only on the predicted observations, the perturbed observations and
//! the noise covariance. Any member-indexed quantity (field values, nodal
//! values, model parameters) can be corrected with the same `F`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Forecast states and predicted observations, one column per member.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleBatch {
    states: DMatrix<f64>,
    predictions: DMatrix<f64>,
}

impl EnsembleBatch {
    pub fn new(states: DMatrix<f64>, predictions: DMatrix<f64>) -> Result<Self> {
        if states.ncols() != predictions.ncols() {
            return Err(Error::Shape(format!(
                "{} state columns but {} prediction columns",
                states.ncols(),
                predictions.ncols()
            )));
        }
        if states.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an ensemble needs at least 2 members, got {}",
                states.ncols()
            )));
        }
        Ok(Self { states, predictions })
    }

    pub fn members(&self) -> usize {
        self.states.ncols()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn predictions(&self) -> &DMatrix<f64> {
        &self.predictions
    }
}

/// Observation vector and its noise covariance.
#[derive(Clone, Debug)]
pub struct ObservationSpec {
    y: DVector<f64>,
    r: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    diagonal: Option<DVector<f64>>,
}

impl ObservationSpec {
    pub fn new(y: DVector<f64>, r: DMatrix<f64>) -> Result<Self> {
        let m = y.len();
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::Shape(format!(
                "noise covariance is {}x{}, expected {m}x{m}",
                r.nrows(),
                r.ncols()
            )));
        }
        let scale = r.amax().max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite("noise covariance is not symmetric".into()));
                }
            }
        }
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("noise covariance".into()))?;
        let is_diag = (0..m).all(|i| (0..m).all(|j| i == j || r[(i, j)] == 0.0));
        let diagonal = is_diag.then(|| r.diagonal());
        Ok(Self { y, r, chol, diagonal })
    }

    /// `R = sigma^2 I`.
    pub fn isotropic(y: DVector<f64>, sigma: f64) -> Result<Self> {
        let m = y.len();
        Self::new(y, DMatrix::from_diagonal_element(m, m, sigma * sigma))
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// Lower Cholesky factor of `R`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `R^-1 B`, using the diagonal fast path when `R` is diagonal.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.diagonal {
            Some(d) => {
                let mut out = b.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            None => self.chol.solve(b),
        }
    }

    /// General Cholesky path of [`ObservationSpec::solve`].
    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// The `N x N` member-combination coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionMatrix(DMatrix<f64>);

impl CorrectionMatrix {
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        if f.nrows() != f.ncols() {
            return Err(Error::Shape(format!("F must be square, got {}x{}", f.nrows(), f.ncols())));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("F has non-finite entries".into()));
        }
        Ok(Self(f))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn members(&self) -> usize {
        self.0.nrows()
    }

    /// Combination weights for member `i`: `w_j = F_ji`.
    pub fn weights_for(&self, i: usize) -> Vec<f64> {
        self.0.column(i).iter().copied().collect()
    }
}

fn centered_scaled(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let mean = m.column_mean();
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let mut a = m.clone();
    for mut col in a.column_iter_mut() {
        col -= &mean;
        col *= scale;
    }
    a
}

/// Normalized anomalies `A = (Z - z_bar 1^T) / sqrt(N-1)` and the same for the
/// predicted observations.
pub fn anomalies(batch: &EnsembleBatch) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((centered_scaled(&batch.states), centered_scaled(&batch.predictions)))
}

/// Observation anomalies only.
pub fn observation_anomalies(predictions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if predictions.ncols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs at least 2 members, got {}",
            predictions.ncols()
        )));
    }
    Ok(centered_scaled(predictions))
}

/// Perturbed observations `D_i = y + L xi_i` with `L L^T = R` and `xi_i`
/// standard normal drawn from `stream(i)`.
pub fn perturb_observations<G: Rng>(
    obs: &ObservationSpec,
    members: usize,
    mut stream: impl FnMut(usize) -> G,
) -> DMatrix<f64> {
    let m = obs.dim();
    let l = obs.cholesky_factor();
    let mut d = DMatrix::zeros(m, members);
    for i in 0..members {
        let mut rng = stream(i);
        let xi = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let col = obs.y() + &l * xi;
        d.set_column(i, &col);
    }
    d
}

/// Cholesky with one retry after adding `1e-12 trace / n` to the diagonal.
pub(crate) fn spd_cholesky(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = a.clone().cholesky() {
        return Ok(c);
    }
    let n = a.nrows();
    let jitter = 1e-12 * a.trace().abs() / n.max(1) as f64;
    let mut b = a;
    for i in 0..n {
        b[(i, i)] += jitter;
    }
    b.cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `F = (N-1)^-1/2 (I + Y^T R^-1 Y)^-1 Y^T R^-1 (D - Y_pred)`, evaluated
/// entirely in the `N x N` member space.
pub fn correction_matrix(
    obs_anomalies: &DMatrix<f64>,
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
    predictions: &DMatrix<f64>,
) -> Result<CorrectionMatrix> {
    let (m, n) = obs_anomalies.shape();
    if m != obs.dim() || perturbed.shape() != (m, n) || predictions.shape() != (m, n) {
        return Err(Error::Shape(format!(
            "Y is {m}x{n}, D is {:?}, predictions {:?}, observations {}",
            perturbed.shape(),
            predictions.shape(),
            obs.dim()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("correction needs at least 2 members".into()));
    }
    let rinv_y = obs.solve(obs_anomalies);
    let innovation = perturbed - predictions;
    let rinv_innov = obs.solve(&innovation);
    let mut s = obs_anomalies.transpose() * &rinv_y;
    for i in 0..n {
        s[(i, i)] += 1.0;
    }
    let rhs = obs_anomalies.transpose() * rinv_innov;
    let chol = spd_cholesky(s, "I + Y^T R^-1 Y")?;
    let f = chol.solve(&rhs) / ((n - 1) as f64).sqrt();
    CorrectionMatrix::new(f)
}

/// `Z_a = Z + Z F`.
pub fn analysis_update(states: &DMatrix<f64>, f: &CorrectionMatrix) -> Result<DMatrix<f64>> {
    if states.ncols() != f.members() {
        return Err(Error::Shape(format!(
            "{} members in states but F is {}x{}",
            states.ncols(),
            f.members(),
            f.members()
        )));
    }
    Ok(states + states * f.matrix())
}

/// `theta_i^a = theta_i + sum_j F_ji theta_j` for scalar per-member values.
pub fn apply_correction_rows(values: &[f64], f: &CorrectionMatrix) -> Result<Vec<f64>> {
    let n = f.members();
    if values.len() != n {
        return Err(Error::Shape(format!("expected {n} member values, got {}", values.len())));
    }
    let m = f.matrix();
    Ok((0..n)
        .map(|i| values[i] + (0..n).map(|j| m[(j, i)] * values[j]).sum::<f64>())
        .collect())
}

/// Vector-valued variant of [`apply_correction_rows`]: each member carries a
/// vector of equal length.
pub fn apply_correction_vectors(values: &[Vec<f64>], f: &CorrectionMatrix) -> Result<Vec<Vec<f64>>> {
    let n = f.members();
    if values.len() != n {
        return Err(Error::Shape(format!("expected {n} members, got {}", values.len())));
    }
    let len = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != len) {
        return Err(Error::Shape("member vectors differ in length".into()));
    }
    let m = f.matrix();
    Ok((0..n)
        .map(|i| {
            let mut out = values[i].clone();
            for j in 0..n {
                let c = m[(j, i)];
                if c != 0.0 {
                    for (o, v) in out.iter_mut().zip(&values[j]) {
                        *o += c * v;
                    }
                }
            }
            out
        })
        .collect())
}

/// Build `F` from per-member predicted observation vectors.
pub fn correction_from_predictions(
    predictions: &[Vec<f64>],
    obs: &ObservationSpec,
    perturbed: &DMatrix<f64>,
) -> Result<CorrectionMatrix> {
    let n = predictions.len();
    let m = obs.dim();
    if let Some(i) = predictions.iter().position(|p| p.len() != m) {
        return Err(Error::Shape(format!(
            "member {i} predicts {} observations, expected {m}",
            predictions[i].len()
        )));
    }
    let pred = DMatrix::from_fn(m, n, |r, c| predictions[c][r]);
    let y = observation_anomalies(&pred)?;
    correction_matrix(&y, obs, perturbed, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn anomalies_examples() {
        let z = DMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        let b = EnsembleBatch::new(z, DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        let (a, y) = anomalies(&b).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]));
        assert_eq!(y, DMatrix::zeros(1, 2));

        let same = EnsembleBatch::new(DMatrix::from_element(3, 4, 1.5), DMatrix::from_element(2, 4, -0.5)).unwrap();
        let (a, y) = anomalies(&same).unwrap();
        assert!(a.iter().all(|&v| v == 0.0) && y.iter().all(|&v| v == 0.0));

        assert!(EnsembleBatch::new(DMatrix::zeros(2, 1), DMatrix::zeros(1, 1)).is_err());
        assert!(EnsembleBatch::new(DMatrix::zeros(2, 3), DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn anomaly_rows_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = DMatrix::from_fn(6, 5, |_, _| rng.gen_range(-3.0..3.0));
        let p = DMatrix::from_fn(3, 5, |_, _| rng.gen_range(-3.0..3.0));
        let (a, y) = anomalies(&EnsembleBatch::new(z, p).unwrap()).unwrap();
        for row in a.row_iter().chain(y.row_iter()) {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_noise_perturbations() {
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let obs = ObservationSpec::isotropic(y.clone(), 1e-30).unwrap();
        let d = perturb_observations(&obs, 4, |i| ChaCha8Rng::seed_from_u64(i as u64));
        for col in d.column_iter() {
            assert!((col - &y).amax() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_covariance() {
        let y = DVector::from_vec(vec![0.0, 0.0]);
        assert!(ObservationSpec::new(y.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(ObservationSpec::new(y.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(ObservationSpec::new(y, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn zero_spread_or_zero_innovation_gives_zero_f() {
        let obs = ObservationSpec::isotropic(DVector::from_vec(vec![0.3, 0.1]), 0.2).unwrap();
        let pred = DMatrix::from_fn(2, 3, |r, _| r as f64);
        let y = observation_anomalies(&pred).unwrap();
        let d = DMatrix::from_fn(2, 3, |r, c| r as f64 + c as f64);
        let f = correction_matrix(&y, &obs, &d, &pred).unwrap();
        assert!(f.matrix().iter().all(|&v| v == 0.0));

        let pred = DMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        let y = observation_anomalies(&pred).unwrap();
        let f = correction_matrix(&y, &obs, &pred, &pred).unwrap();
        assert!(f.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_fast_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = DMatrix::from_diagonal(&DVector::from_fn(4, |_, _| rng.gen_range(0.1..2.0)));
        let obs = ObservationSpec::new(DVector::zeros(4), r).unwrap();
        let b = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let fast = obs.solve(&b);
        let dense = obs.solve_dense(&b);
        assert!((fast - dense).amax() < 1e-12);
    }

    #[test]
    fn correction_rows_linearity() {
        let f = CorrectionMatrix::new(DMatrix::from_row_slice(3, 3, &[0.1, -0.2, 0.0, 0.3, 0.1, -0.4, 0.0, 0.2, 0.5]))
            .unwrap();
        let theta = apply_correction_rows(&[2.0; 3], &f).unwrap();
        for i in 0..3 {
            let s: f64 = f.matrix().column(i).sum();
            assert!((theta[i] - 2.0 * (1.0 + s)).abs() < 1e-14);
        }
        let zero = apply_correction_rows(&[1.0, 2.0, 3.0], &CorrectionMatrix::zeros(3)).unwrap();
        assert_eq!(zero, vec![1.0, 2.0, 3.0]);
        assert!(apply_correction_rows(&[1.0], &f).is_err());
    }

    #[test]
    fn vector_corrections_match_analysis_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 4;
        let f = CorrectionMatrix::new(DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5))).unwrap();
        let vals: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let z = DMatrix::from_fn(5, n, |r, c| vals[c][r]);
        let za = analysis_update(&z, &f).unwrap();
        let vv = apply_correction_vectors(&vals, &f).unwrap();
        for c in 0..n {
            for r in 0..5 {
                assert!((za[(r, c)] - vv[c][r]).abs() < 1e-12);
            }
        }
    }

    /// `(N-1)^-1/2 Y^T (Y Y^T + R)^-1 (D - Y_pred)` by LU in observation space.
    fn unreduced_f(y: &DMatrix<f64>, r: &DMatrix<f64>, d: &DMatrix<f64>, pred: &DMatrix<f64>) -> DMatrix<f64> {
        let n = y.ncols();
        let c = y * y.transpose() + r;
        let sol = c.lu().solve(&(d - pred)).unwrap();
        y.transpose() * sol / ((n - 1) as f64).sqrt()
    }

    fn spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(m, m) * 0.1
    }

    struct Instance {
        z: DMatrix<f64>,
        pred: DMatrix<f64>,
        d: DMatrix<f64>,
        obs: ObservationSpec,
    }

    fn instance(n: usize, m: usize, members: usize, seed: u64, diag: bool) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, members, |_, _| rng.gen_range(-2.0..2.0));
        let pred = DMatrix::from_fn(m, members, |_, _| rng.gen_range(-2.0..2.0));
        let r = if diag {
            DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.gen_range(0.05..1.0)))
        } else {
            spd(m, &mut rng)
        };
        let y = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let obs = ObservationSpec::new(y, r).unwrap();
        let d = perturb_observations(&obs, members, |i| ChaCha8Rng::seed_from_u64(seed * 1000 + i as u64));
        Instance { z, pred, d, obs }
    }

    #[test]
    fn reduced_form_matches_unreduced_oracle() {
        let inst = instance(5, 3, 4, 1, false);
        let y = observation_anomalies(&inst.pred).unwrap();
        let f = correction_matrix(&y, &inst.obs, &inst.d, &inst.pred).unwrap();
        let oracle = unreduced_f(&y, inst.obs.covariance(), &inst.d, &inst.pred);
        assert!((f.matrix() - oracle).amax() < 1e-10);
    }

    #[test]
    fn scalar_kalman_update() {
        // n = m = 1, H = I, N = 2
        let (z1, z2, d1, d2, r) = (0.3_f64, 1.1_f64, 0.9_f64, 0.4_f64, 0.25_f64);
        let mean = 0.5 * (z1 + z2);
        let p = (z1 - mean).powi(2) + (z2 - mean).powi(2);
        let k = p / (p + r);
        let expect = [z1 + k * (d1 - z1), z2 + k * (d2 - z2)];

        let z = DMatrix::from_row_slice(1, 2, &[z1, z2]);
        let obs = ObservationSpec::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, r)).unwrap();
        let d = DMatrix::from_row_slice(1, 2, &[d1, d2]);
        let f = correction_matrix(&observation_anomalies(&z).unwrap(), &obs, &d, &z).unwrap();
        let za = analysis_update(&z, &f).unwrap();
        assert!((za[(0, 0)] - expect[0]).abs() < 1e-12);
        assert!((za[(0, 1)] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn stacked_parameters_match_row_correction() {
        let inst = instance(4, 3, 5, 9, true);
        let y = observation_anomalies(&inst.pred).unwrap();
        let f = correction_matrix(&y, &inst.obs, &inst.d, &inst.pred).unwrap();
        let theta = [0.9, 1.2, 0.7, 1.05, 0.95];
        let mut stacked = inst.z.clone().insert_row(4, 0.0);
        for (i, t) in theta.iter().enumerate() {
            stacked[(4, i)] = *t;
        }
        let za = analysis_update(&stacked, &f).unwrap();
        let rows = apply_correction_rows(&theta, &f).unwrap();
        for i in 0..5 {
            assert!((za[(4, i)] - rows[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_sample_mean() {
        let y = DVector::from_vec(vec![0.5, -1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let obs = ObservationSpec::new(y.clone(), r.clone()).unwrap();
        let n = 100_000;
        let d = perturb_observations(&obs, n, |i| ChaCha8Rng::seed_from_u64(i as u64));
        let mean = d.column_mean();
        for k in 0..2 {
            let sigma = r[(k, k)].sqrt();
            assert!((mean[k] - y[k]).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn perturbations_independent_of_thread_count() {
        use rayon::prelude::*;
        let obs = ObservationSpec::isotropic(DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.3).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    (0..4)
                        .into_par_iter()
                        .map(|_| perturb_observations(&obs, 16, |i| ChaCha8Rng::seed_from_u64(77 + i as u64)))
                        .collect::<Vec<_>>()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn huge_noise_shrinks_f_monotonically() {
        let inst = instance(3, 4, 6, 5, true);
        let y = observation_anomalies(&inst.pred).unwrap();
        let mut last = f64::INFINITY;
        for decade in [6, 7, 8, 9] {
            let scale = 10f64.powi(decade);
            let obs = ObservationSpec::new(inst.obs.y().clone(), inst.obs.covariance() * scale).unwrap();
            let d = inst.pred.clone() + (&inst.d - &inst.pred);
            let f = correction_matrix(&y, &obs, &d, &inst.pred).unwrap();
            let norm = f.matrix().norm();
            assert!(norm < last);
            last = norm;
        }
        assert!(last < 1e-6);
    }

    mod props {
        use super::*;
        use rand::Rng;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn f_form_matches_gain_form(seed in 0u64..1_000_000, n in 1usize..7, m in 1usize..6, members in 2usize..8, diag: bool) {
                let inst = instance(n, m, members, seed, diag);
                let (a, y) = anomalies(&EnsembleBatch::new(inst.z.clone(), inst.pred.clone()).unwrap()).unwrap();
                let f = correction_matrix(&y, &inst.obs, &inst.d, &inst.pred).unwrap();
                let za = analysis_update(&inst.z, &f).unwrap();
                let c = &y * y.transpose() + inst.obs.covariance();
                let gain = &a * y.transpose() * c.lu().solve(&(&inst.d - &inst.pred)).unwrap();
                let oracle = &inst.z + gain;
                let scale = 1.0 + oracle.amax();
                prop_assert!((za - oracle).amax() < 1e-10 * scale);
            }

            #[test]
            fn smw_identity(seed in 0u64..1_000_000, m in 1usize..7, members in 2usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = DMatrix::from_fn(m, members, |_, _| rng.gen_range(-1.5..1.5));
                let r = spd(m, &mut rng);
                let lhs = y.transpose() * (&y * y.transpose() + &r).try_inverse().unwrap();
                let rinv = r.clone().try_inverse().unwrap();
                let s = DMatrix::identity(members, members) + y.transpose() * &rinv * &y;
                let rhs = s.try_inverse().unwrap() * y.transpose() * rinv;
                prop_assert!((&lhs - &rhs).amax() < 1e-10 * (1.0 + lhs.amax()));
            }

            #[test]
            fn diagonal_path_equals_general_path(seed in 0u64..1_000_000, m in 1usize..6, members in 2usize..7) {
                let inst = instance(3, m, members, seed, true);
                let y = observation_anomalies(&inst.pred).unwrap();
                let f = correction_matrix(&y, &inst.obs, &inst.d, &inst.pred).unwrap();
                let rinv_y = inst.obs.solve_dense(&y);
                let mut s = y.transpose() * &rinv_y;
                for i in 0..members {
                    s[(i, i)] += 1.0;
                }
                let rhs = y.transpose() * inst.obs.solve_dense(&(&inst.d - &inst.pred));
                let dense = s.cholesky().unwrap().solve(&rhs) / ((members - 1) as f64).sqrt();
                prop_assert!((f.matrix() - &dense).amax() < 1e-12 * (1.0 + dense.amax()));
            }

            #[test]
            fn mean_shift_is_mean_of_corrections(seed in 0u64..1_000_000, members in 2usize..8) {
                let inst = instance(4, 3, members, seed, true);
                let y = observation_anomalies(&inst.pred).unwrap();
                let f = correction_matrix(&y, &inst.obs, &inst.d, &inst.pred).unwrap();
                let za = analysis_update(&inst.z, &f).unwrap();
                let corrections = &inst.z * f.matrix();
                let shift = za.column_mean() - inst.z.column_mean();
                prop_assert!((shift - corrections.column_mean()).amax() < 1e-12);
            }
        }
    }
}
