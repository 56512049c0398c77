//! Closed-system propagation and open-system (Brownian-driven) simulation.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{dimension, invalid, Result};
use crate::expm::matrix_exponential;
use crate::network::SupraLaplacian;
use crate::state::StateMatrix;

/// Per-node, per-topic Brownian scale Σ and the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma: DMatrix<f64>,
    seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: DMatrix<f64>, seed: u64) -> Result<Self> {
        if sigma.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("noise scales must be finite and >= 0");
        }
        Ok(Self { sigma, seed })
    }

    pub fn zero(nodes: usize, topics: usize) -> Self {
        Self {
            sigma: DMatrix::zeros(nodes, topics),
            seed: 0,
        }
    }

    pub fn uniform(nodes: usize, topics: usize, sigma: f64, seed: u64) -> Result<Self> {
        Self::new(DMatrix::from_element(nodes, topics, sigma), seed)
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            sigma: self.sigma.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub ensemble_size: usize,
}

impl SimulationConfig {
    pub fn new(dt: f64, horizon: f64, ensemble_size: usize) -> Result<Self> {
        let c = Self {
            dt,
            horizon,
            ensemble_size,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.ensemble_size == 0 {
            return invalid("ensemble_size must be >= 1");
        }
        Ok(())
    }

    /// Step sizes covering the horizon; the last one may be shorter.
    pub fn steps(&self) -> Vec<f64> {
        let n = ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize;
        let mut v = vec![self.dt; n];
        v[n - 1] = self.horizon - self.dt * (n - 1) as f64;
        v
    }
}

/// `min(0.01, 0.1 / ‖L‖∞)`.
pub fn default_dt(supra: &SupraLaplacian) -> f64 {
    let norm = inf_norm(supra.matrix());
    if norm > 0.0 {
        (0.1 / norm).min(0.01)
    } else {
        0.01
    }
}

pub(crate) fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_shapes(x: &StateMatrix, supra: &SupraLaplacian) -> Result<()> {
    if x.nodes() != supra.dim() {
        return dimension(format!(
            "state has {} rows, operator is {}x{}",
            x.nodes(),
            supra.dim(),
            supra.dim()
        ));
    }
    Ok(())
}

/// `e^{−L Δt} X0`, stamped at `X0.time() + Δt`.
pub fn propagate_closed(x0: &StateMatrix, supra: &SupraLaplacian, delta_t: f64) -> Result<StateMatrix> {
    if !delta_t.is_finite() || delta_t < 0.0 {
        return invalid(format!("delta_t must be >= 0, got {delta_t}"));
    }
    check_shapes(x0, supra)?;
    if delta_t == 0.0 {
        return Ok(x0.clone());
    }
    let e = matrix_exponential(&(supra.matrix() * -delta_t))?;
    StateMatrix::new(e * x0.values(), x0.time() + delta_t)
}

/// Point predictor: the expectation of the open-system state, which is the
/// closed-system propagation since the Brownian integral has zero mean.
pub fn predict_mean(x0: &StateMatrix, supra: &SupraLaplacian, delta_t: f64) -> Result<StateMatrix> {
    propagate_closed(x0, supra, delta_t)
}

/// Deterministic sub-seed for ensemble member `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_noise(x0: &StateMatrix, noise: &NoiseModel) -> Result<()> {
    if noise.sigma.shape() != x0.values().shape() {
        return dimension(format!(
            "noise is {:?}, state is {:?}",
            noise.sigma.shape(),
            x0.values().shape()
        ));
    }
    Ok(())
}

fn warn_if_stiff(supra: &SupraLaplacian, dt: f64) {
    let norm = inf_norm(supra.matrix());
    if norm * dt >= 1.0 {
        log::warn!("‖L‖·dt = {:.3} >= 1; Euler–Maruyama may be unstable", norm * dt);
    }
}

fn euler_maruyama(
    x0: &StateMatrix,
    supra: &SupraLaplacian,
    sigma: &DMatrix<f64>,
    seed: u64,
    steps: &[f64],
    mut visit: impl FnMut(usize, f64, &DMatrix<f64>),
) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = supra.matrix();
    let (p, t) = x0.values().shape();
    let noisy = sigma.iter().any(|s| *s != 0.0);
    let mut x = x0.values().clone();
    let mut time = x0.time();
    visit(0, time, &x);
    for (n, &h) in steps.iter().enumerate() {
        let drift = l * &x;
        x -= drift * h;
        if noisy {
            let sq = h.sqrt();
            // column-major draw order
            for j in 0..t {
                for i in 0..p {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    x[(i, j)] += sigma[(i, j)] * g * sq;
                }
            }
        }
        time += h;
        visit(n + 1, time, &x);
    }
    x
}

/// One Euler–Maruyama path `X_{n+1} = X_n − L X_n dt + Σ ⊙ G_n √dt`,
/// including the initial state. Uses `noise.seed()` directly.
pub fn simulate_open(
    x0: &StateMatrix,
    supra: &SupraLaplacian,
    noise: &NoiseModel,
    config: &SimulationConfig,
) -> Result<Vec<StateMatrix>> {
    config.validate()?;
    check_shapes(x0, supra)?;
    check_noise(x0, noise)?;
    warn_if_stiff(supra, config.dt);
    let steps = config.steps();
    let mut path = Vec::with_capacity(steps.len() + 1);
    euler_maruyama(x0, supra, &noise.sigma, noise.seed, &steps, |_, time, x| {
        path.push((time, x.clone()));
    });
    path.into_iter()
        .map(|(time, x)| StateMatrix::new(x, time))
        .collect()
}

/// Terminal states of `config.ensemble_size` independent paths. Path `i`
/// uses seed `derive_seed(noise.seed(), i)`, so the result does not depend
/// on how the work is scheduled.
pub fn simulate_ensemble_terminal(
    x0: &StateMatrix,
    supra: &SupraLaplacian,
    noise: &NoiseModel,
    config: &SimulationConfig,
) -> Result<Vec<DMatrix<f64>>> {
    config.validate()?;
    check_shapes(x0, supra)?;
    check_noise(x0, noise)?;
    warn_if_stiff(supra, config.dt);
    let steps = config.steps();
    let out = (0..config.ensemble_size as u64)
        .into_par_iter()
        .map(|i| {
            euler_maruyama(
                x0,
                supra,
                &noise.sigma,
                derive_seed(noise.seed, i),
                &steps,
                |_, _, _| {},
            )
        })
        .collect();
    Ok(out)
}

/// Full paths for an ensemble, seeded as in [`simulate_ensemble_terminal`].
pub fn simulate_ensemble(
    x0: &StateMatrix,
    supra: &SupraLaplacian,
    noise: &NoiseModel,
    config: &SimulationConfig,
) -> Result<Vec<Vec<StateMatrix>>> {
    config.validate()?;
    (0..config.ensemble_size as u64)
        .into_par_iter()
        .map(|i| {
            let member = noise.with_seed(derive_seed(noise.seed, i));
            simulate_open(x0, supra, &member, config)
        })
        .collect()
}

/// Entrywise sample mean and unbiased sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStatistics {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
}

impl EnsembleStatistics {
    /// Sum of entrywise variances.
    pub fn total_variance(&self) -> f64 {
        self.variance.sum()
    }
}

pub fn ensemble_statistics(paths: &[DMatrix<f64>]) -> Result<EnsembleStatistics> {
    if paths.len() < 2 {
        return invalid(format!("need at least 2 paths, got {}", paths.len()));
    }
    let shape = paths[0].shape();
    if let Some(p) = paths.iter().find(|p| p.shape() != shape) {
        return dimension(format!("path shape {:?} differs from {:?}", p.shape(), shape));
    }
    let n = paths.len() as f64;
    let mut mean = DMatrix::zeros(shape.0, shape.1);
    for p in paths {
        mean += p;
    }
    mean /= n;
    let mut variance = DMatrix::zeros(shape.0, shape.1);
    for p in paths {
        let d = p - &mean;
        variance += d.component_mul(&d);
    }
    variance /= n - 1.0;
    Ok(EnsembleStatistics { mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::*;
    use nalgebra::dmatrix;

    fn two_node() -> SupraLaplacian {
        SupraLaplacian::from_matrix(build_laplacian(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let x = StateMatrix::new(dmatrix![1.0, 2.0; 3.0, 4.0], 5.0).unwrap();
        assert_eq!(propagate_closed(&x, &two_node(), 0.0).unwrap(), x);
        assert!(propagate_closed(&x, &two_node(), -1.0).is_err());
    }

    #[test]
    fn two_node_analytic() {
        let x = StateMatrix::new(dmatrix![1.0; 0.0], 0.0).unwrap();
        for t in [0.1, 0.5, 2.0] {
            let y = propagate_closed(&x, &two_node(), t).unwrap();
            let e = (-2.0 * t).exp();
            assert!((y.values()[(0, 0)] - (1.0 + e) / 2.0).abs() < 1e-14);
            assert!((y.values()[(1, 0)] - (1.0 - e) / 2.0).abs() < 1e-14);
            assert_eq!(y.time(), t);
        }
    }

    #[test]
    fn uniform_state_is_fixed() {
        let x = StateMatrix::new(dmatrix![0.3, -1.0; 0.3, -1.0], 0.0).unwrap();
        let y = predict_mean(&x, &two_node(), 3.0).unwrap();
        assert!((y.values() - x.values()).amax() < 1e-14);
    }

    #[test]
    fn steps_cover_horizon() {
        let c = SimulationConfig::new(0.3, 1.0, 1).unwrap();
        let s = c.steps();
        assert_eq!(s.len(), 4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(SimulationConfig::new(0.25, 1.0, 1).unwrap().steps().len(), 4);
        assert!(SimulationConfig::new(0.0, 1.0, 1).is_err());
        assert!(SimulationConfig::new(0.1, -1.0, 1).is_err());
    }

    #[test]
    fn same_seed_same_path() {
        let x = StateMatrix::new(dmatrix![1.0, 0.0; 0.0, 1.0], 0.0).unwrap();
        let noise = NoiseModel::uniform(2, 2, 0.3, 17).unwrap();
        let c = SimulationConfig::new(0.01, 0.5, 1).unwrap();
        let a = simulate_open(&x, &two_node(), &noise, &c).unwrap();
        let b = simulate_open(&x, &two_node(), &noise, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
        let other = simulate_open(&x, &two_node(), &noise.with_seed(18), &c).unwrap();
        assert_ne!(a.last(), other.last());
    }

    #[test]
    fn ensemble_parallel_matches_sequential() {
        let x = StateMatrix::new(dmatrix![1.0; 0.0], 0.0).unwrap();
        let noise = NoiseModel::uniform(2, 1, 0.2, 3).unwrap();
        let c = SimulationConfig::new(0.05, 1.0, 8).unwrap();
        let par = simulate_ensemble_terminal(&x, &two_node(), &noise, &c).unwrap();
        for (i, term) in par.iter().enumerate() {
            let single = simulate_open(&x, &two_node(), &noise.with_seed(derive_seed(3, i as u64)), &c)
                .unwrap();
            assert_eq!(single.last().unwrap().values(), term);
        }
        let paths = simulate_ensemble(&x, &two_node(), &noise, &c).unwrap();
        assert_eq!(paths[5].last().unwrap().values(), &par[5]);
    }

    #[test]
    fn statistics_basics() {
        let v = dmatrix![1.0, -2.0];
        let s = ensemble_statistics(&[v.clone(), v.clone()]).unwrap();
        assert_eq!(s.variance, DMatrix::zeros(1, 2));
        let s = ensemble_statistics(&[v.clone(), -v.clone()]).unwrap();
        assert_eq!(s.mean, DMatrix::zeros(1, 2));
        assert!(ensemble_statistics(&[v.clone()]).is_err());
        assert!(ensemble_statistics(&[v, DMatrix::zeros(2, 2)]).is_err());
    }

    #[test]
    fn noise_shape_checked() {
        let x = StateMatrix::new(dmatrix![1.0; 0.0], 0.0).unwrap();
        let c = SimulationConfig::new(0.1, 1.0, 1).unwrap();
        let bad = NoiseModel::zero(3, 1);
        assert!(simulate_open(&x, &two_node(), &bad, &c).is_err());
        assert!(NoiseModel::new(dmatrix![-1.0], 0).is_err());
    }
}
