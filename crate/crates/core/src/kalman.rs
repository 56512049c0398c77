//! Discrete Kalman refinement of learned-operator predictions under partial
//! observation of node states.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calibration::{devectorize, vectorize, LearnedOperator, SnapshotSeries};
use crate::error::{dimension, invalid, Error, Result};
use crate::harness::metrics::relative_error;
use crate::state::StateMatrix;

/// Observation noise placed on observed coordinates by default.
pub const DEFAULT_OBSERVATION_NOISE: f64 = 1e-6;

/// Which nodes are observed, plus diagonal noise covariances over the PT
/// vectorized coordinates (coordinate `j·P + i` is node `i`, topic `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    observed: Vec<bool>,
    topics: usize,
    r: DVector<f64>,
    q: DVector<f64>,
}

impl ObservationModel {
    pub fn new(observed: Vec<bool>, topics: usize, r: DVector<f64>, q: DVector<f64>) -> Result<Self> {
        let n = observed.len() * topics;
        if topics == 0 {
            return invalid("topics must be >= 1");
        }
        if r.len() != n || q.len() != n {
            return dimension(format!(
                "noise diagonals have lengths {} and {}, expected {n}",
                r.len(),
                q.len()
            ));
        }
        if r.iter().chain(q.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("noise covariances must be finite and >= 0");
        }
        Ok(Self {
            observed,
            topics,
            r,
            q,
        })
    }

    /// `Q` from the learning residual variances, `R = 1e-6` on observed
    /// coordinates.
    pub fn with_defaults(observed: Vec<bool>, op: &LearnedOperator) -> Result<Self> {
        if observed.len() != op.nodes() {
            return dimension(format!(
                "mask covers {} nodes, operator has {}",
                observed.len(),
                op.nodes()
            ));
        }
        let p = observed.len();
        let r = DVector::from_fn(op.dim(), |k, _| {
            if observed[k % p] {
                DEFAULT_OBSERVATION_NOISE
            } else {
                0.0
            }
        });
        Self::new(observed, op.topics(), r, op.residual_variance())
    }

    pub fn nodes(&self) -> usize {
        self.observed.len()
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn dim(&self) -> usize {
        self.observed.len() * self.topics
    }

    pub fn observed_nodes(&self) -> &[bool] {
        &self.observed
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Diagonal of `𝓗 = I_T ⊗ H`.
    pub fn indicator(&self) -> DVector<f64> {
        let p = self.nodes();
        DVector::from_fn(self.dim(), |k, _| if self.observed[k % p] { 1.0 } else { 0.0 })
    }

    pub fn observed_coords(&self) -> Vec<usize> {
        let p = self.nodes();
        (0..self.dim()).filter(|k| self.observed[k % p]).collect()
    }
}

/// Uniformly random observed-node mask of `round(fraction · nodes)` nodes.
/// Masks from one seed are nested: a larger fraction keeps every node of a
/// smaller one.
pub fn sample_mask(nodes: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&fraction) {
        return invalid(format!("fraction must lie in [0, 1], got {fraction}"));
    }
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let count = (fraction * nodes as f64).round() as usize;
    let mut mask = vec![false; nodes];
    for &i in &order[..count.min(nodes)] {
        mask[i] = true;
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Predicted,
    Updated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x_hat: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub phase: Phase,
}

impl KalmanState {
    /// A prior estimate awaiting its first update.
    pub fn new(x_hat: DVector<f64>, pi: DMatrix<f64>) -> Result<Self> {
        let n = x_hat.len();
        if pi.shape() != (n, n) {
            return dimension(format!("covariance is {:?}, estimate has length {n}", pi.shape()));
        }
        Ok(Self {
            x_hat,
            pi,
            phase: Phase::Predicted,
        })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn pseudo_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = s.clone().cholesky() {
        return Ok(ch.inverse());
    }
    let scale = s.amax().max(f64::MIN_POSITIVE);
    s.clone()
        .pseudo_inverse(1e-12 * scale)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))
}

/// Measurement update: blends the prior with the observed coordinates of `y`.
///
/// `y` has length PT; unobserved coordinates are ignored. Only the observed
/// block of `R_e = R + 𝓗Π𝓗ᵀ` enters the gain, which equals the
/// pseudo-inverse form of the full expression.
pub fn kalman_update(state: &KalmanState, y: &DVector<f64>, model: &ObservationModel) -> Result<KalmanState> {
    if state.phase != Phase::Predicted {
        return invalid("update expects a predicted state");
    }
    let n = model.dim();
    if state.x_hat.len() != n || y.len() != n {
        return dimension(format!(
            "estimate length {}, observation length {}, model dimension {n}",
            state.x_hat.len(),
            y.len()
        ));
    }
    let obs = model.observed_coords();
    if obs.iter().any(|&k| !y[k].is_finite()) {
        return invalid("observation has non-finite entries");
    }
    let mut next = state.clone();
    next.phase = Phase::Updated;
    if obs.is_empty() {
        return Ok(next);
    }
    let m = obs.len();
    let pi = &state.pi;
    let s = DMatrix::from_fn(m, m, |a, b| {
        pi[(obs[a], obs[b])] + if a == b { model.r[obs[a]] } else { 0.0 }
    });
    let s_inv = pseudo_inverse(&s)?;
    let pi_cols = DMatrix::from_fn(n, m, |i, b| pi[(i, obs[b])]);
    let gain = &pi_cols * s_inv;
    let innovation = DVector::from_fn(m, |a, _| y[obs[a]] - state.x_hat[obs[a]]);
    next.x_hat += &gain * innovation;
    next.pi -= &gain * pi_cols.transpose();
    symmetrize(&mut next.pi);
    Ok(next)
}

/// Time update with `F̂ = I + Λ̂`: `x̂ ← F̂x̂`, `Π ← F̂ΠF̂ᵀ + Q`.
pub fn kalman_predict(state: &KalmanState, op: &LearnedOperator, model: &ObservationModel) -> Result<KalmanState> {
    if state.phase != Phase::Updated {
        return invalid("predict expects an updated state");
    }
    if op.dim() != state.x_hat.len() || model.dim() != op.dim() {
        return dimension(format!(
            "operator dimension {}, estimate length {}, model dimension {}",
            op.dim(),
            state.x_hat.len(),
            model.dim()
        ));
    }
    let mut f = op.lambda_hat().clone();
    for i in 0..f.nrows() {
        f[(i, i)] += 1.0;
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("transition matrix is not finite".into()));
    }
    let x_hat = &f * &state.x_hat;
    let mut pi = &f * &state.pi * f.transpose();
    for i in 0..pi.nrows() {
        pi[(i, i)] += model.q[i];
    }
    symmetrize(&mut pi);
    Ok(KalmanState {
        x_hat,
        pi,
        phase: Phase::Predicted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub step: usize,
    pub error_all: f64,
    pub error_observed: f64,
    pub error_hidden: f64,
    pub trace_pi: f64,
}

#[derive(Debug, Clone)]
pub struct FilterTrace {
    /// Prior estimates `x̂_{k|k-1}` for every test snapshot after the first.
    pub predictions: Vec<StateMatrix>,
    pub steps: Vec<FilterStep>,
}

impl FilterTrace {
    pub fn mean_error(&self) -> f64 {
        self.steps.iter().map(|s| s.error_all).sum::<f64>() / self.steps.len().max(1) as f64
    }
}

fn rows_error(pred: &DMatrix<f64>, truth: &DMatrix<f64>, keep: impl Fn(usize) -> bool) -> f64 {
    let rows: Vec<usize> = (0..truth.nrows()).filter(|&i| keep(i)).collect();
    if rows.is_empty() {
        return f64::NAN;
    }
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)]);
    relative_error(&pick(pred), &pick(truth)).unwrap_or(f64::NAN)
}

/// Runs update/predict over the test range of `series`.
///
/// The filter starts at the last training snapshot with `x̂ = vec(X)` and
/// covariance `pi0`. At each test snapshot it absorbs the observed
/// coordinates, then predicts the next snapshot; the reported errors compare
/// that prediction with the true next state.
pub fn run_filter(
    series: &SnapshotSeries,
    op: &LearnedOperator,
    model: &ObservationModel,
    pi0: &DMatrix<f64>,
) -> Result<FilterTrace> {
    let (p, t) = (series.nodes(), series.topics());
    if model.nodes() != p || model.topics() != t {
        return dimension(format!(
            "model is {}x{}, series is {p}x{t}",
            model.nodes(),
            model.topics()
        ));
    }
    let start = series.train_len().saturating_sub(1);
    let test = &series.snapshots()[start..];
    if test.len() < 2 {
        return invalid("test range needs at least two snapshots");
    }
    let mut state = KalmanState::new(vectorize(test[0].values()), pi0.clone())?;
    let mut predictions = Vec::with_capacity(test.len() - 1);
    let mut steps = Vec::with_capacity(test.len() - 1);
    let observed = model.observed_nodes();
    for (k, pair) in test.windows(2).enumerate() {
        let updated = kalman_update(&state, &vectorize(pair[0].values()), model)?;
        state = kalman_predict(&updated, op, model)?;
        let pred = devectorize(&state.x_hat, p, t)?;
        let truth = pair[1].values();
        steps.push(FilterStep {
            step: k + 1,
            error_all: relative_error(&pred, truth)?,
            error_observed: rows_error(&pred, truth, |i| observed[i]),
            error_hidden: rows_error(&pred, truth, |i| !observed[i]),
            trace_pi: state.pi.trace(),
        });
        predictions.push(StateMatrix::new(pred, pair[1].time())?);
    }
    Ok(FilterTrace { predictions, steps })
}

/// Empirical variance of every entry of the training snapshots.
pub fn state_variance(series: &SnapshotSeries) -> f64 {
    let vals: Vec<f64> = series
        .training()
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .collect();
    let n = vals.len() as f64;
    if n < 2.0 {
        return 1.0;
    }
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Initial covariance for a filter seeded with an exactly known snapshot:
/// the one-step process noise `diag(Q)`. [`run_filter`] starts this way.
pub fn seeded_pi0(model: &ObservationModel) -> DMatrix<f64> {
    DMatrix::from_diagonal(&model.q)
}

/// Uninformed initial covariance: identity scaled by [`state_variance`].
pub fn default_pi0(series: &SnapshotSeries) -> DMatrix<f64> {
    let n = series.nodes() * series.topics();
    let v = state_variance(series);
    DMatrix::identity(n, n) * if v > 0.0 { v } else { 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn scalar_model(r: f64, q: f64, observed: bool) -> ObservationModel {
        ObservationModel::new(vec![observed], 1, dvector![r], dvector![q]).unwrap()
    }

    #[test]
    fn scalar_step_by_hand() {
        let s = KalmanState::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let u = kalman_update(&s, &dvector![2.0], &scalar_model(1.0, 0.0, true)).unwrap();
        // gain 0.5
        assert!((u.x_hat[0] - 1.0).abs() < 1e-15);
        assert!((u.pi[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn full_noiseless_observation_pins_estimate() {
        let n = 4;
        let model = ObservationModel::new(vec![true; 2], 2, DVector::zeros(n), DVector::zeros(n)).unwrap();
        let s = KalmanState::new(DVector::zeros(n), DMatrix::identity(n, n) * 3.0).unwrap();
        let y = dvector![1.0, -2.0, 0.5, 4.0];
        let u = kalman_update(&s, &y, &model).unwrap();
        assert!((u.x_hat - y).amax() < 1e-12);
    }

    #[test]
    fn no_observation_changes_nothing() {
        let n = 3;
        let model = ObservationModel::new(vec![false; 3], 1, DVector::zeros(n), DVector::zeros(n)).unwrap();
        let s = KalmanState::new(dvector![1.0, 2.0, 3.0], DMatrix::identity(n, n)).unwrap();
        let u = kalman_update(&s, &dvector![9.0, 9.0, 9.0], &model).unwrap();
        assert_eq!(u.x_hat, s.x_hat);
        assert_eq!(u.pi, s.pi);
    }

    #[test]
    fn phases_enforced() {
        let s = KalmanState::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let op = LearnedOperator::from_matrix(dmatrix![0.0], 1, 1).unwrap();
        let m = scalar_model(1.0, 0.0, true);
        assert!(kalman_predict(&s, &op, &m).is_err());
        let u = kalman_update(&s, &dvector![1.0], &m).unwrap();
        assert!(kalman_update(&u, &dvector![1.0], &m).is_err());
        assert!(kalman_update(&s, &dvector![f64::NAN], &m).is_err());
    }

    #[test]
    fn identity_dynamics_and_process_noise() {
        let op = LearnedOperator::from_matrix(DMatrix::zeros(2, 2), 2, 1).unwrap();
        let m = ObservationModel::new(vec![false, false], 1, DVector::zeros(2), dvector![0.25, 0.25]).unwrap();
        let mut s = KalmanState::new(dvector![1.0, 2.0], dmatrix![1.0, 0.1; 0.1, 2.0]).unwrap();
        s.phase = Phase::Updated;
        let p = kalman_predict(&s, &op, &m).unwrap();
        assert_eq!(p.x_hat, s.x_hat);
        assert!((&p.pi - &s.pi - DMatrix::identity(2, 2) * 0.25).amax() < 1e-15);
    }

    #[test]
    fn masks_are_nested_and_sized() {
        let a = sample_mask(100, 0.10, 7).unwrap();
        let b = sample_mask(100, 0.25, 7).unwrap();
        assert_eq!(a.iter().filter(|x| **x).count(), 10);
        assert_eq!(b.iter().filter(|x| **x).count(), 25);
        assert!(a.iter().zip(&b).all(|(x, y)| !*x || *y));
        assert!(sample_mask(10, 1.5, 0).is_err());
    }
}
