//! Fitting diffusion constants and noise scales to snapshot histories, and
//! learning a general linear operator by rank-1 corrections.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::diffusion::NoiseModel;
use crate::error::{dimension, invalid, Error, Result};
use crate::expm::{expm_action, matrix_exponential, SYMMETRY_TOL};
use crate::network::{
    assemble_supra_laplacian, symmetry_defect, DiffusionConstants, InterconnectedNetwork,
    LayerId, SupraLaplacian,
};
use crate::state::StateMatrix;

/// Largest PT accepted by [`learn_supra_operator`].
pub const MAX_LEARN_DIM: usize = 4000;

/// Time-ordered snapshots with a train/test split.
///
/// The first `train_len` snapshots form the learning range. Test steps
/// predict snapshot `k` from snapshot `k-1` for every `k >= train_len`, so
/// the first test step starts from the last training snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    snapshots: Vec<StateMatrix>,
    train_len: usize,
}

impl SnapshotSeries {
    /// All snapshots form the training range.
    pub fn new(snapshots: Vec<StateMatrix>) -> Result<Self> {
        let n = snapshots.len();
        Self::with_split(snapshots, n)
    }

    pub fn with_split(snapshots: Vec<StateMatrix>, train_len: usize) -> Result<Self> {
        if snapshots.is_empty() {
            return invalid("snapshot series is empty");
        }
        if train_len > snapshots.len() {
            return invalid(format!(
                "train_len {train_len} exceeds {} snapshots",
                snapshots.len()
            ));
        }
        let shape = snapshots[0].values().shape();
        for w in snapshots.windows(2) {
            if w[1].time() <= w[0].time() {
                return invalid(format!(
                    "timestamps must increase strictly: {} then {}",
                    w[0].time(),
                    w[1].time()
                ));
            }
            if w[1].values().shape() != shape {
                return dimension(format!(
                    "snapshot shape {:?} differs from {:?}",
                    w[1].values().shape(),
                    shape
                ));
            }
        }
        Ok(Self {
            snapshots,
            train_len,
        })
    }

    pub fn snapshots(&self) -> &[StateMatrix] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn nodes(&self) -> usize {
        self.snapshots[0].nodes()
    }

    pub fn topics(&self) -> usize {
        self.snapshots[0].topics()
    }

    pub fn training(&self) -> &[StateMatrix] {
        &self.snapshots[..self.train_len]
    }

    pub fn train_pairs(&self) -> impl Iterator<Item = (&StateMatrix, &StateMatrix)> {
        self.snapshots[..self.train_len]
            .windows(2)
            .map(|w| (&w[0], &w[1]))
    }

    /// Pairs (k-1, k) for k in the test range.
    pub fn test_pairs(&self) -> impl Iterator<Item = (&StateMatrix, &StateMatrix)> {
        let start = self.train_len.saturating_sub(1);
        self.snapshots[start..].windows(2).map(|w| (&w[0], &w[1]))
    }

    /// Same snapshots restricted to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let snaps = self
            .snapshots
            .iter()
            .map(|s| {
                let v = s.values();
                StateMatrix::new(
                    DMatrix::from_fn(rows.len(), v.ncols(), |r, c| v[(rows[r], c)]),
                    s.time(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_split(snaps, self.train_len)
    }
}

/// Column-stacking of a matrix.
pub fn vectorize(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return dimension(format!("vector of length {} is not {rows}x{cols}", v.len()));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// `I_t ⊗ m`.
pub fn kron_identity(t: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(r * t, c * t);
    for k in 0..t {
        out.view_mut((k * r, k * c), (r, c)).copy_from(m);
    }
    out
}

/// One free diffusion constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parameter {
    Intra(LayerId),
    Inter(LayerId, LayerId),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Upper end of each golden-section bracket.
    pub d_max: f64,
    pub min_sweeps: usize,
    pub max_sweeps: usize,
    /// Stop once a sweep improves the objective by less than this fraction.
    pub rel_tol: f64,
    /// Bracket width at which golden-section search stops.
    pub line_tol: f64,
    /// Starting constants; every parameter defaults to 1.
    pub init: Option<DiffusionConstants>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            d_max: 10.0,
            min_sweeps: 2,
            max_sweeps: 200,
            rel_tol: 1e-12,
            line_tol: 1e-11,
            init: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaSummary {
    pub frobenius: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl SigmaSummary {
    pub fn of(sigma: &DMatrix<f64>) -> Self {
        let n = sigma.len().max(1) as f64;
        Self {
            frobenius: sigma.norm(),
            mean: sigma.sum() / n,
            min: sigma.iter().copied().fold(f64::INFINITY, f64::min),
            max: sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub constants: DiffusionConstants,
    pub noise: NoiseModel,
    pub parameters: Vec<(Parameter, f64)>,
    /// Objective at the start and after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// False when the objective does not respond to any constant.
    pub identifiable: bool,
}

impl FitReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace never empty")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut intra = serde_json::Map::new();
        let mut inter = serde_json::Map::new();
        for (p, v) in &self.parameters {
            match p {
                Parameter::Intra(l) => {
                    intra.insert(l.to_string(), (*v).into());
                }
                Parameter::Inter(a, b) => {
                    inter.insert(format!("{a},{b}"), (*v).into());
                }
            }
        }
        serde_json::json!({
            "constants": { "intra": intra, "inter": inter, "symmetric": self.constants.is_symmetric() },
            "sigma_summary": SigmaSummary::of(self.noise.sigma()),
            "objective_trace": self.objective_trace,
            "iterations": self.sweeps,
            "converged": self.converged,
            "identifiable": self.identifiable,
        })
    }
}

fn free_parameters(network: &InterconnectedNetwork, symmetric: bool) -> Vec<Parameter> {
    let mut params: Vec<Parameter> = network
        .layers()
        .iter()
        .map(|l| Parameter::Intra(l.id()))
        .collect();
    for c in network.couplings() {
        let (a, b) = (c.from(), c.to());
        if symmetric && params.contains(&Parameter::Inter(b, a)) {
            continue;
        }
        params.push(Parameter::Inter(a, b));
    }
    params
}

fn constants_from(params: &[Parameter], values: &[f64], symmetric: bool) -> Result<DiffusionConstants> {
    let mut c = DiffusionConstants::new(symmetric);
    for (p, v) in params.iter().zip(values) {
        match *p {
            Parameter::Intra(l) => c.set_intra(l, *v)?,
            Parameter::Inter(a, b) => c.set_inter(a, b, *v)?,
        }
    }
    Ok(c)
}

/// Evaluates the one-step prediction objective for candidate constants.
struct Objective<'a> {
    network: &'a InterconnectedNetwork,
    pairs: Vec<(&'a StateMatrix, &'a StateMatrix)>,
    params: &'a [Parameter],
    symmetric: bool,
}

impl Objective<'_> {
    fn propagators(&self, values: &[f64]) -> Result<HashMap<u64, DMatrix<f64>>> {
        let c = constants_from(self.params, values, self.symmetric)?;
        let l = assemble_supra_laplacian(self.network, &c)?;
        let mut out = HashMap::new();
        let eig = if symmetry_defect(l.matrix()) < SYMMETRY_TOL {
            Some(SymmetricEigen::new(l.matrix().clone()))
        } else {
            None
        };
        for (a, b) in &self.pairs {
            let dt = b.time() - a.time();
            let key = dt.to_bits();
            if out.contains_key(&key) {
                continue;
            }
            let e = match &eig {
                Some(eig) => {
                    let v = &eig.eigenvectors;
                    let mut s = v.clone();
                    for (j, lam) in eig.eigenvalues.iter().enumerate() {
                        s.column_mut(j).scale_mut((-lam * dt).exp());
                    }
                    s * v.transpose()
                }
                None => matrix_exponential(&(l.matrix() * -dt))?,
            };
            out.insert(key, e);
        }
        Ok(out)
    }

    fn residuals(&self, values: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let props = self.propagators(values)?;
        Ok(self
            .pairs
            .iter()
            .map(|(a, b)| {
                let e = &props[&(b.time() - a.time()).to_bits()];
                b.values() - e * a.values()
            })
            .collect())
    }

    fn value(&self, values: &[f64]) -> Result<f64> {
        let f: f64 = self
            .residuals(values)?
            .iter()
            .map(|r| r.norm_squared())
            .sum();
        if !f.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is {f} at constants {values:?}"
            )));
        }
        Ok(f)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `f` on `[lo, hi]`; returns the best point
/// seen and the spread of values encountered.
fn golden_section(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    let mut seen_min = f64::INFINITY;
    let mut seen_max = f64::NEG_INFINITY;
    let mut record = |x: f64, v: f64, best: &mut (f64, f64)| {
        seen_min = seen_min.min(v);
        seen_max = seen_max.max(v);
        if v < best.1 {
            *best = (x, v);
        }
    };
    for x in [lo, hi] {
        let v = f(x)?;
        record(x, v, &mut best);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    record(x1, f1, &mut best);
    record(x2, f2, &mut best);
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
            record(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
            record(x2, f2, &mut best);
        }
    }
    Ok((best.0, best.1, seen_max - seen_min))
}

/// Fits diffusion constants by minimizing the summed squared one-step error
/// `Σ ‖X(t_{i+1}) − e^{−L(D)Δt_i} X(t_i)‖²_F` over the training pairs, then
/// estimates Σ from the residuals of the fitted model.
///
/// The optimizer is coordinate descent with golden-section line searches on
/// `[0, d_max]`. After each sweep a line search along the sweep's net
/// displacement is attempted; it is accepted only if it lowers the objective,
/// so the objective never increases from one sweep to the next.
pub fn fit_diffusion_constants(
    series: &SnapshotSeries,
    network: &InterconnectedNetwork,
    options: &FitOptions,
) -> Result<FitReport> {
    if series.train_len() < 2 {
        return invalid("need at least 2 training snapshots");
    }
    if series.nodes() != network.node_count() {
        return dimension(format!(
            "series has {} rows, network has {} nodes",
            series.nodes(),
            network.node_count()
        ));
    }
    if !(options.d_max > 0.0) {
        return invalid("d_max must be positive");
    }
    let symmetric = options
        .init
        .as_ref()
        .map_or_else(|| network.is_undirected(), |c| c.is_symmetric());
    let params = free_parameters(network, symmetric);
    let init: Vec<f64> = match &options.init {
        Some(c) => params
            .iter()
            .map(|p| match *p {
                Parameter::Intra(l) => c.intra(l),
                Parameter::Inter(a, b) => c.inter(a, b),
            }
            .ok_or_else(|| Error::MissingConstant(format!("{p:?} in initial constants"))))
            .collect::<Result<_>>()?,
        None => vec![1.0; params.len()],
    };
    let objective = Objective {
        network,
        pairs: series.train_pairs().collect(),
        params: &params,
        symmetric,
    };
    let scale: f64 = objective
        .pairs
        .iter()
        .map(|(_, b)| b.values().norm_squared())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);

    let mut values = init.clone();
    let mut current = objective.value(&values)?;
    let mut trace = vec![current];
    let mut responsive = vec![false; params.len()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        let start_values = values.clone();
        let start = current;
        for k in 0..params.len() {
            let mut trial = values.clone();
            let (x, v, spread) = golden_section(
                |x| {
                    trial[k] = x;
                    objective.value(&trial)
                },
                0.0,
                options.d_max,
                options.line_tol,
            )?;
            if spread > 1e-14 * scale {
                responsive[k] = true;
            }
            if v < current {
                values[k] = x;
                current = v;
            }
        }
        // extrapolate along the sweep displacement
        let dir: Vec<f64> = values.iter().zip(&start_values).map(|(a, b)| a - b).collect();
        let max_step = dir
            .iter()
            .zip(&values)
            .filter(|(d, _)| d.abs() > 0.0)
            .map(|(d, v)| if *d > 0.0 { (options.d_max - v) / d } else { -v / d })
            .fold(f64::INFINITY, f64::min);
        if max_step.is_finite() && max_step > 0.0 {
            let base = values.clone();
            let mut trial = values.clone();
            let (a, v, _) = golden_section(
                |a| {
                    for i in 0..trial.len() {
                        trial[i] = (base[i] + a * dir[i]).clamp(0.0, options.d_max);
                    }
                    objective.value(&trial)
                },
                0.0,
                max_step.min(16.0),
                options.line_tol,
            )?;
            if v < current {
                for i in 0..values.len() {
                    values[i] = (base[i] + a * dir[i]).clamp(0.0, options.d_max);
                }
                current = v;
            }
        }
        sweeps += 1;
        trace.push(current);
        if !responsive.iter().any(|r| *r) {
            break;
        }
        let improvement = start - current;
        if sweeps >= options.min_sweeps
            && (improvement <= options.rel_tol * start || current <= 1e-30 * scale)
        {
            converged = true;
            break;
        }
    }

    let identifiable = responsive.iter().any(|r| *r);
    if !identifiable {
        log::warn!("objective is flat in every diffusion constant; returning the initialization");
        values = init;
        converged = true;
    }
    let constants = constants_from(&params, &values, symmetric)?;
    let sigma = estimate_sigma(&objective, &values)?;
    Ok(FitReport {
        constants,
        noise: NoiseModel::new(sigma, options.seed)?,
        parameters: params.iter().copied().zip(values).collect(),
        objective_trace: trace,
        sweeps,
        converged,
        identifiable,
    })
}

/// `σ̂_pj` = sample standard deviation over pairs of `residual_pj / √Δt`.
fn estimate_sigma(objective: &Objective<'_>, values: &[f64]) -> Result<DMatrix<f64>> {
    let residuals = objective.residuals(values)?;
    let scaled: Vec<DMatrix<f64>> = residuals
        .into_iter()
        .zip(&objective.pairs)
        .map(|(r, (a, b))| r / (b.time() - a.time()).sqrt())
        .collect();
    let n = scaled.len();
    let (p, t) = scaled[0].shape();
    if n < 2 {
        return Ok(scaled[0].abs());
    }
    let mut mean = DMatrix::zeros(p, t);
    for s in &scaled {
        mean += s;
    }
    mean /= n as f64;
    let mut var = DMatrix::zeros(p, t);
    for s in &scaled {
        let d = s - &mean;
        var += d.component_mul(&d);
    }
    Ok((var / (n - 1) as f64).map(f64::sqrt))
}

/// Learning-phase settings. Unset values use data-driven defaults:
/// `γ = 1e-3 / mean ‖x̄‖²`, `η = 1e-3 · mean ‖x̄‖`.
#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub gain: Option<f64>,
    pub threshold: Option<f64>,
    pub max_iters: usize,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            gain: None,
            threshold: None,
            max_iters: 500,
        }
    }
}

/// A learned PT×PT generator Λ̂ for unit-time steps of vectorized states.
#[derive(Debug, Clone)]
pub struct LearnedOperator {
    lambda_hat: DMatrix<f64>,
    gain: f64,
    threshold: f64,
    nodes: usize,
    topics: usize,
    /// Root of the summed squared training error, before any update and
    /// after each pass over the training pairs.
    pub iteration_log: Vec<f64>,
    /// Final per-pair residuals `x̄(t+1) − e^{Λ̂} x̄(t)`.
    pub residuals: Vec<DVector<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl LearnedOperator {
    /// Operator with no training history, e.g. `I_T ⊗ (−L)`.
    pub fn from_matrix(lambda_hat: DMatrix<f64>, nodes: usize, topics: usize) -> Result<Self> {
        if lambda_hat.shape() != (nodes * topics, nodes * topics) {
            return dimension(format!(
                "operator is {:?}, expected {n}x{n}",
                lambda_hat.shape(),
                n = nodes * topics
            ));
        }
        if lambda_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("operator has non-finite entries".into()));
        }
        Ok(Self {
            lambda_hat,
            gain: 0.0,
            threshold: 0.0,
            nodes,
            topics,
            iteration_log: Vec::new(),
            residuals: Vec::new(),
            iterations: 0,
            converged: false,
        })
    }

    pub fn lambda_hat(&self) -> &DMatrix<f64> {
        &self.lambda_hat
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn dim(&self) -> usize {
        self.nodes * self.topics
    }

    /// Per-coordinate variance of the final training residuals.
    pub fn residual_variance(&self) -> DVector<f64> {
        let n = self.residuals.len();
        let mut out = DVector::zeros(self.dim());
        if n < 2 {
            return out;
        }
        let mut mean = DVector::zeros(self.dim());
        for r in &self.residuals {
            mean += r;
        }
        mean /= n as f64;
        for r in &self.residuals {
            let d = r - &mean;
            out += d.component_mul(&d);
        }
        out / (n - 1) as f64
    }
}

/// Learns Λ̂ from consecutive training snapshots, treating each pair as one
/// unit time step.
///
/// Starting from `Λ̂₀ = I_T ⊗ (−L)`, each pass visits the training pairs in
/// order and applies `Λ̂ ← Λ̂ + γ (x̄(t+1) − e^{Λ̂} x̄(t)) x̄(t)ᵀ`. Learning
/// stops once every pair's error is below `η` or after `max_iters` passes.
pub fn learn_supra_operator(
    series: &SnapshotSeries,
    init: &SupraLaplacian,
    options: &LearnOptions,
) -> Result<LearnedOperator> {
    let (p, t) = (series.nodes(), series.topics());
    if init.dim() != p {
        return dimension(format!("operator is {0}x{0}, series has {p} rows", init.dim()));
    }
    if p * t > MAX_LEARN_DIM {
        return Err(Error::TooLarge(format!(
            "PT = {} exceeds {MAX_LEARN_DIM}",
            p * t
        )));
    }
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = series
        .train_pairs()
        .map(|(a, b)| (vectorize(a.values()), vectorize(b.values())))
        .collect();
    if pairs.is_empty() {
        return invalid("training range has no snapshot pairs");
    }
    let mean_sq = pairs.iter().map(|(x, _)| x.norm_squared()).sum::<f64>() / pairs.len() as f64;
    let mean_norm = pairs.iter().map(|(x, _)| x.norm()).sum::<f64>() / pairs.len() as f64;
    let gain = options
        .gain
        .unwrap_or(if mean_sq > 0.0 { 1e-3 / mean_sq } else { 1e-3 });
    let threshold = options.threshold.unwrap_or(1e-3 * mean_norm);
    if !(gain >= 0.0) || !gain.is_finite() {
        return invalid(format!("gain must be finite and >= 0, got {gain}"));
    }
    if !(threshold > 0.0) {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }

    let mut lambda = kron_identity(t, &(-init.matrix()));
    let evaluate = |lambda: &DMatrix<f64>| -> Result<(Vec<DVector<f64>>, f64)> {
        let res: Vec<DVector<f64>> = pairs
            .iter()
            .map(|(x, y)| Ok(y - expm_action(lambda, x)?))
            .collect::<Result<_>>()?;
        let total = res.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        Ok((res, total))
    };

    let mut log = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let residuals = loop {
        let (res, total) = evaluate(&lambda).map_err(|e| match e {
            Error::Numerical(detail) => Error::Divergence {
                iteration: iterations,
                detail,
            },
            other => other,
        })?;
        log.push(total);
        if res.iter().all(|r| r.norm() < threshold) {
            converged = true;
            break res;
        }
        if iterations == options.max_iters {
            break res;
        }
        for (x, y) in &pairs {
            let eps = y - expm_action(&lambda, x).map_err(|e| Error::Divergence {
                iteration: iterations,
                detail: e.to_string(),
            })?;
            lambda.ger(gain, &eps, x, 1.0);
            if lambda.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    iteration: iterations,
                    detail: "operator became non-finite; reduce the gain".into(),
                });
            }
        }
        iterations += 1;
    };

    Ok(LearnedOperator {
        lambda_hat: lambda,
        gain,
        threshold,
        nodes: p,
        topics: t,
        iteration_log: log,
        residuals,
        iterations,
        converged,
    })
}

/// `devec(e^{Λ̂} vec(X))`, stamped one time unit later.
pub fn one_step_predict_learned(op: &LearnedOperator, x: &StateMatrix) -> Result<StateMatrix> {
    if x.nodes() != op.nodes || x.topics() != op.topics {
        return dimension(format!(
            "state is {}x{}, operator expects {}x{}",
            x.nodes(),
            x.topics(),
            op.nodes,
            op.topics
        ));
    }
    let y = expm_action(&op.lambda_hat, &vectorize(x.values()))?;
    StateMatrix::new(devectorize(&y, op.nodes, op.topics)?, x.time() + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::propagate_closed;
    use crate::network::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn vectorize_column_major() {
        let x = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(vectorize(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(devectorize(&vectorize(&x), 2, 2).unwrap(), x);
        assert_eq!(vectorize(&DMatrix::zeros(5, 3)).len(), 15);
        assert!(devectorize(&vectorize(&x), 3, 2).is_err());
    }

    #[test]
    fn kronecker_consistency() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let l = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let big = kron_identity(3, &(-&l));
        let lhs = devectorize(&(big * vectorize(&x)), 5, 3).unwrap();
        assert!((lhs + &l * &x).amax() < 1e-12);
    }

    #[test]
    fn series_validation() {
        let a = StateMatrix::new(dmatrix![1.0], 0.0).unwrap();
        let b = StateMatrix::new(dmatrix![1.0], 0.0).unwrap();
        assert!(SnapshotSeries::new(vec![a.clone(), b]).is_err());
        let c = StateMatrix::new(dmatrix![1.0, 2.0], 1.0).unwrap();
        assert!(SnapshotSeries::new(vec![a.clone(), c]).is_err());
        let d = StateMatrix::new(dmatrix![2.0], 1.0).unwrap();
        let e = StateMatrix::new(dmatrix![3.0], 2.0).unwrap();
        let s = SnapshotSeries::with_split(vec![a, d, e], 2).unwrap();
        assert_eq!(s.train_pairs().count(), 1);
        let tests: Vec<_> = s.test_pairs().collect();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].0.time(), 1.0);
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (x, v, spread) =
            golden_section(|x| Ok((x - 2.5).powi(2)), 0.0, 10.0, 1e-12).unwrap();
        assert!((x - 2.5).abs() < 1e-6);
        assert!(v < 1e-12);
        assert!(spread > 1.0);
    }

    fn two_layer() -> InterconnectedNetwork {
        let a = LayerGraph::with_prefix(1, LayerKind::Agent, "a", dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0]).unwrap();
        let d = LayerGraph::with_prefix(2, LayerKind::Information, "d", dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let w = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 0.0];
        let c1 = InterLayerCoupling::new(1, 2, w).unwrap();
        let c2 = c1.transposed();
        InterconnectedNetwork::new(vec![a, d], vec![c1, c2]).unwrap()
    }

    #[test]
    fn fit_recovers_planted_constants() {
        let net = two_layer();
        let mut truth = DiffusionConstants::new(true);
        truth.set_intra(1, 0.8).unwrap();
        truth.set_intra(2, 0.3).unwrap();
        truth.set_inter(1, 2, 0.5).unwrap();
        let l = assemble_supra_laplacian(&net, &truth).unwrap();
        let mut x = StateMatrix::new(
            dmatrix![1.0, 0.0; 0.0, 1.0; 0.5, 0.2; -1.0, 0.3; 0.7, 0.9],
            0.0,
        )
        .unwrap();
        let mut snaps = vec![x.clone()];
        for _ in 0..4 {
            x = propagate_closed(&x, &l, 0.4).unwrap();
            snaps.push(x.clone());
        }
        let series = SnapshotSeries::new(snaps).unwrap();
        let rep = fit_diffusion_constants(&series, &net, &FitOptions::default()).unwrap();
        assert!(rep.objective() < 1e-8, "objective {}", rep.objective());
        assert!((rep.constants.intra(1).unwrap() - 0.8).abs() < 0.008);
        assert!((rep.constants.intra(2).unwrap() - 0.3).abs() < 0.003);
        assert!((rep.constants.inter(2, 1).unwrap() - 0.5).abs() < 0.005);
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(rep.identifiable);
    }

    #[test]
    fn consensus_series_is_not_identifiable() {
        let net = two_layer();
        let x = DMatrix::from_fn(5, 2, |_, j| j as f64 + 0.5);
        let snaps = (0..3)
            .map(|k| StateMatrix::new(x.clone(), k as f64).unwrap())
            .collect();
        let series = SnapshotSeries::new(snaps).unwrap();
        let rep = fit_diffusion_constants(&series, &net, &FitOptions::default()).unwrap();
        assert!(!rep.identifiable);
        assert!(rep.objective() < 1e-20);
        for (_, v) in &rep.parameters {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn fit_needs_two_snapshots() {
        let series = SnapshotSeries::new(vec![StateMatrix::new(DMatrix::zeros(5, 1), 0.0).unwrap()]).unwrap();
        assert!(fit_diffusion_constants(&series, &two_layer(), &FitOptions::default()).is_err());
    }

    fn line_series(l: &SupraLaplacian, steps: usize) -> SnapshotSeries {
        let mut x = StateMatrix::new(dmatrix![1.0, 0.0; 0.0, 2.0; -1.0, 1.0], 0.0).unwrap();
        let mut v = vec![x.clone()];
        for _ in 0..steps {
            x = propagate_closed(&x, l, 1.0).unwrap();
            v.push(x.clone());
        }
        SnapshotSeries::new(v).unwrap()
    }

    fn path3() -> SupraLaplacian {
        let w = dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        SupraLaplacian::from_matrix(build_laplacian(&w).unwrap() * 0.3).unwrap()
    }

    #[test]
    fn zero_gain_keeps_initial_operator() {
        let l = path3();
        let other = l.scale_inter_layer(1.0).unwrap();
        let series = line_series(&SupraLaplacian::from_matrix(other.matrix() * 2.0).unwrap(), 3);
        let op = learn_supra_operator(
            &series,
            &l,
            &LearnOptions { gain: Some(0.0), threshold: Some(1e-9), max_iters: 5 },
        )
        .unwrap();
        assert_eq!(op.lambda_hat(), &kron_identity(2, &(-l.matrix())));
        assert_eq!(op.iterations, 5);
    }

    #[test]
    fn self_generated_data_converges_immediately() {
        let l = path3();
        let series = line_series(&l, 4);
        let op = learn_supra_operator(&series, &l, &LearnOptions::default()).unwrap();
        assert!(op.converged);
        assert_eq!(op.iterations, 0);
        assert_eq!(op.iteration_log.len(), 1);
    }

    #[test]
    fn single_update_is_rank_one_rule() {
        let l = path3();
        let truth = SupraLaplacian::from_matrix(l.matrix() * 1.7).unwrap();
        let series = line_series(&truth, 1);
        let gain = 0.01;
        let op = learn_supra_operator(
            &series,
            &l,
            &LearnOptions { gain: Some(gain), threshold: Some(1e-12), max_iters: 1 },
        )
        .unwrap();
        let l0 = kron_identity(2, &(-l.matrix()));
        let x = vectorize(series.snapshots()[0].values());
        let y = vectorize(series.snapshots()[1].values());
        let xhat = matrix_exponential(&l0).unwrap() * &x;
        let expect = (&y - xhat) * x.transpose() * gain;
        assert!((op.lambda_hat() - &l0 - expect).amax() < 1e-13);
    }

    #[test]
    fn kronecker_operator_predicts_like_closed_system() {
        let l = path3();
        let x = StateMatrix::new(dmatrix![1.0, 0.0; 0.0, 2.0; -1.0, 1.0], 0.0).unwrap();
        let op = LearnedOperator::from_matrix(kron_identity(2, &(-l.matrix())), 3, 2).unwrap();
        let a = one_step_predict_learned(&op, &x).unwrap();
        let b = propagate_closed(&x, &l, 1.0).unwrap();
        assert!((a.values() - b.values()).amax() < 1e-9);
        let zero = LearnedOperator::from_matrix(DMatrix::zeros(6, 6), 3, 2).unwrap();
        assert_eq!(one_step_predict_learned(&zero, &x).unwrap().values(), x.values());
    }

    #[test]
    fn oversized_and_divergent_learning_rejected() {
        let l = path3();
        let series = line_series(&SupraLaplacian::from_matrix(l.matrix() * 3.0).unwrap(), 3);
        let r = learn_supra_operator(
            &series,
            &l,
            &LearnOptions { gain: Some(1e6), threshold: Some(1e-12), max_iters: 50 },
        );
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }
}
