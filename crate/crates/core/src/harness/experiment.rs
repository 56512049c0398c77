//! Experiment driver: fits each configured method on the training range,
//! predicts every test snapshot from the true previous one, and reports
//! per-step errors on one target layer.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    fit_diffusion_constants, learn_supra_operator, one_step_predict_learned, FitOptions, FitReport,
    LearnOptions, LearnedOperator, SnapshotSeries,
};
use crate::diffusion::{derive_seed, propagate_closed, simulate_ensemble_terminal, NoiseModel, SimulationConfig};
use crate::error::{invalid, Error, Result};
use crate::harness::metrics::{mean, relative_error};
use crate::harness::plot::chart_from_csv;
use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};
use crate::io::{load_network, load_series, node_labels, table_csv, write_atomic};
use crate::kalman::{run_filter, sample_mask, seeded_pi0, FilterTrace, ObservationModel};
use crate::network::{assemble_supra_laplacian, InterconnectedNetwork, LayerId, LayerKind, SupraLaplacian};
use crate::state::StateMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleLayer,
    Multilayer,
    LearnedOperator,
    /// Kalman refinement of the learned operator with this fraction of
    /// nodes observed.
    Kalman(f64),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::SingleLayer => "single_layer".into(),
            Method::Multilayer => "multilayer".into(),
            Method::LearnedOperator => "learned_operator".into(),
            Method::Kalman(f) => format!("kalman_{f}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        network: PathBuf,
        states: PathBuf,
        #[serde(default)]
        train_len: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub data: DataSource,
    pub methods: Vec<Method>,
    /// Layer whose rows are scored; defaults to the first agent layer.
    #[serde(default)]
    pub target_layer: Option<LayerId>,
    #[serde(default)]
    pub seed: u64,
    /// Learning gain as a multiple of `1 / mean ‖x̄‖²`.
    #[serde(default)]
    pub learn_gain_scale: Option<f64>,
    #[serde(default = "default_iters")]
    pub learn_max_iters: usize,
    /// When non-empty, also scores the multilayer predictor with its
    /// inter-layer part scaled by each ε.
    #[serde(default)]
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_iters() -> usize {
    500
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return invalid("experiment needs at least one method");
        }
        for m in &self.methods {
            if let Method::Kalman(f) = m {
                if !(*f > 0.0 && *f <= 1.0) {
                    return invalid(format!("kalman fraction {f} outside (0, 1]"));
                }
            }
        }
        let mut labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return invalid("methods are listed more than once");
        }
        if let Some(g) = self.learn_gain_scale {
            if !(g >= 0.0) || !g.is_finite() {
                return invalid(format!("learn_gain_scale must be finite and >= 0, got {g}"));
            }
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return invalid(format!("epsilon grid values must be >= 0, got {e}"));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Loads or generates the network and snapshot series.
pub fn load_data(config: &ExperimentConfig) -> Result<(InterconnectedNetwork, SnapshotSeries)> {
    match &config.data {
        DataSource::Synthetic(spec) => {
            let d = generate_synthetic(spec, config.seed).map_err(|e| e.in_stage("generate"))?;
            Ok((d.network, d.series))
        }
        DataSource::Files {
            network,
            states,
            train_len,
        } => {
            let (net, _) = load_network(network).map_err(|e| e.in_stage("load network"))?;
            let series = load_series(states, &node_labels(&net), *train_len).map_err(|e| e.in_stage("load states"))?;
            Ok((net, series))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub multilayer_error: f64,
    pub single_layer_error: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub target_layer: LayerId,
    /// Time of each predicted snapshot.
    pub times: Vec<f64>,
    pub upper_bound: Vec<f64>,
    /// Per-step errors, in the configured method order.
    pub curves: Vec<(String, Vec<f64>)>,
    pub fits: Vec<(String, FitReport)>,
    pub learned: Option<LearnedOperator>,
    pub kalman: Vec<(f64, FilterTrace)>,
    pub epsilon_sweep: Vec<EpsilonRow>,
}

fn pick_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

fn scored(pred: &DMatrix<f64>, truth: &DMatrix<f64>, rows: &[usize]) -> Result<f64> {
    relative_error(&pick_rows(pred, rows), &pick_rows(truth, rows))
}

fn closed_errors(series: &SnapshotSeries, supra: &SupraLaplacian, rows: &[usize]) -> Result<Vec<f64>> {
    series
        .test_pairs()
        .map(|(prev, next)| {
            let pred = propagate_closed(prev, supra, next.time() - prev.time())?;
            scored(pred.values(), next.values(), rows)
        })
        .collect()
}

fn uniform_spacing(series: &SnapshotSeries) -> Result<f64> {
    let s = series.snapshots();
    let dt = s[1].time() - s[0].time();
    for w in s.windows(2) {
        let d = w[1].time() - w[0].time();
        if (d - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return invalid("operator learning needs evenly spaced snapshots");
        }
    }
    Ok(dt)
}

fn default_target(network: &InterconnectedNetwork) -> LayerId {
    network
        .layers()
        .iter()
        .find(|l| l.kind() == LayerKind::Agent)
        .unwrap_or(&network.layers()[0])
        .id()
}

fn fit_and_score(
    network: &InterconnectedNetwork,
    series: &SnapshotSeries,
    rows: &[usize],
    seed: u64,
) -> Result<(FitReport, SupraLaplacian, Vec<f64>)> {
    let options = FitOptions {
        seed,
        ..FitOptions::default()
    };
    let report = fit_diffusion_constants(series, network, &options)?;
    let supra = assemble_supra_laplacian(network, &report.constants)?;
    let errors = closed_errors(series, &supra, rows)?;
    Ok((report, supra, errors))
}

/// Loads the data named by `config` and runs every method on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let (network, series) = load_data(config)?;
    run_on(config, &network, &series)
}

/// Runs the configured methods on an already loaded dataset.
pub fn run_on(
    config: &ExperimentConfig,
    network: &InterconnectedNetwork,
    series: &SnapshotSeries,
) -> Result<ExperimentResult> {
    config.validate()?;
    if series.nodes() != network.node_count() {
        return invalid(format!(
            "series has {} rows, network has {} nodes",
            series.nodes(),
            network.node_count()
        ));
    }
    if series.train_len() < 2 || series.len() <= series.train_len() {
        return invalid("need at least two training snapshots and one test snapshot");
    }
    let target = config.target_layer.unwrap_or_else(|| default_target(network));
    let rows: Vec<usize> = network
        .index()
        .layer_range(target)
        .ok_or_else(|| Error::UnknownId(format!("target layer {target}")))?
        .collect();

    let times: Vec<f64> = series.test_pairs().map(|(_, next)| next.time()).collect();
    let upper_bound = series
        .test_pairs()
        .map(|(prev, next)| scored(prev.values(), next.values(), &rows))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("upper bound"))?;

    let has = |m: Method| config.methods.contains(&m);
    let kalman_fractions: Vec<f64> = config
        .methods
        .iter()
        .filter_map(|m| if let Method::Kalman(f) = m { Some(*f) } else { None })
        .collect();
    let want_single = has(Method::SingleLayer) || !config.epsilon_grid.is_empty();
    let want_multi = has(Method::Multilayer)
        || has(Method::LearnedOperator)
        || !kalman_fractions.is_empty()
        || !config.epsilon_grid.is_empty();

    let (single, multi) = rayon::join(
        || -> Result<Option<_>> {
            if !want_single {
                return Ok(None);
            }
            let sub = network.restricted(&[target])?;
            let sub_series = series.select_rows(&rows)?;
            let all: Vec<usize> = (0..rows.len()).collect();
            fit_and_score(&sub, &sub_series, &all, config.seed).map(Some)
        },
        || -> Result<Option<_>> {
            if !want_multi {
                return Ok(None);
            }
            fit_and_score(network, series, &rows, config.seed).map(Some)
        },
    );
    let single = single.map_err(|e| e.in_stage("single_layer"))?;
    let multi = multi.map_err(|e| e.in_stage("multilayer"))?;

    let learned = if has(Method::LearnedOperator) || !kalman_fractions.is_empty() {
        let (_, supra, _) = multi.as_ref().expect("multilayer fit runs before learning");
        let learn = || -> Result<LearnedOperator> {
            let dt = uniform_spacing(series)?;
            let init = SupraLaplacian::from_matrix(supra.matrix() * dt)?;
            let mean_sq = series
                .train_pairs()
                .map(|(x, _)| x.values().norm_squared())
                .sum::<f64>()
                / (series.train_len() - 1) as f64;
            let options = LearnOptions {
                gain: config
                    .learn_gain_scale
                    .map(|g| if mean_sq > 0.0 { g / mean_sq } else { g }),
                threshold: None,
                max_iters: config.learn_max_iters,
            };
            learn_supra_operator(series, &init, &options)
        };
        Some(learn().map_err(|e| e.in_stage("learned_operator"))?)
    } else {
        None
    };

    let mask_seed = derive_seed(config.seed, 1);
    let kalman: Vec<(f64, FilterTrace)> = kalman_fractions
        .par_iter()
        .map(|&f| {
            let op = learned.as_ref().expect("learned operator exists for kalman");
            let run = || -> Result<FilterTrace> {
                let mask = sample_mask(series.nodes(), f, mask_seed)?;
                let model = ObservationModel::with_defaults(mask, op)?;
                run_filter(series, op, &model, &seeded_pi0(&model))
            };
            run().map(|t| (f, t)).map_err(|e| e.in_stage(Method::Kalman(f).label()))
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    for m in &config.methods {
        let errors = match m {
            Method::SingleLayer => single.as_ref().expect("fitted").2.clone(),
            Method::Multilayer => multi.as_ref().expect("fitted").2.clone(),
            Method::LearnedOperator => {
                let op = learned.as_ref().expect("learned");
                series
                    .test_pairs()
                    .map(|(prev, next)| {
                        let pred = one_step_predict_learned(op, prev)?;
                        scored(pred.values(), next.values(), &rows)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.in_stage("learned_operator prediction"))?
            }
            Method::Kalman(f) => {
                let (_, trace) = kalman.iter().find(|(g, _)| g == f).expect("ran");
                let truth = series.snapshots()[series.train_len()..].iter();
                trace
                    .predictions
                    .iter()
                    .zip(truth)
                    .map(|(p, t)| scored(p.values(), t.values(), &rows))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        curves.push((m.label(), errors));
    }

    let epsilon_sweep = if config.epsilon_grid.is_empty() {
        Vec::new()
    } else {
        let (_, supra, _) = multi.as_ref().expect("fitted");
        let single_mean = mean(&single.as_ref().expect("fitted").2);
        config
            .epsilon_grid
            .par_iter()
            .map(|&epsilon| {
                let scaled = supra.scale_inter_layer(epsilon)?;
                Ok(EpsilonRow {
                    epsilon,
                    multilayer_error: mean(&closed_errors(series, &scaled, &rows)?),
                    single_layer_error: single_mean,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("epsilon sweep"))?
    };

    let mut fits = Vec::new();
    if let Some((r, _, _)) = single {
        fits.push(("single_layer".to_string(), r));
    }
    if let Some((r, _, _)) = multi {
        fits.push(("multilayer".to_string(), r));
    }
    Ok(ExperimentResult {
        name: config.name.clone(),
        target_layer: target,
        times,
        upper_bound,
        curves,
        fits,
        learned,
        kalman,
        epsilon_sweep,
    })
}

impl ExperimentResult {
    pub fn curve(&self, label: &str) -> Option<&[f64]> {
        self.curves
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, c)| c.as_slice())
    }

    /// Time-averaged error of one method.
    pub fn mean_error(&self, label: &str) -> Option<f64> {
        self.curve(label).map(mean)
    }

    pub fn errors_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["t", "upper_bound"];
        header.extend(self.curves.iter().map(|(l, _)| l.as_str()));
        let rows: Vec<Vec<f64>> = (0..self.times.len())
            .map(|k| {
                let mut r = vec![self.times[k], self.upper_bound[k]];
                r.extend(self.curves.iter().map(|(_, c)| c[k]));
                r
            })
            .collect();
        table_csv(&header, &rows)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let ub = mean(&self.upper_bound);
        let single = self.mean_error("single_layer");
        let mut means = serde_json::Map::new();
        let mut vs_ub = serde_json::Map::new();
        let mut vs_single = serde_json::Map::new();
        means.insert("upper_bound".into(), ub.into());
        for (label, c) in &self.curves {
            let m = mean(c);
            means.insert(label.clone(), m.into());
            vs_ub.insert(label.clone(), ((ub - m) / ub).into());
            if let Some(s) = single {
                vs_single.insert(label.clone(), ((s - m) / s).into());
            }
        }
        let fits: serde_json::Map<_, _> = self.fits.iter().map(|(l, r)| (l.clone(), r.to_json())).collect();
        let learning = self.learned.as_ref().map(|op| {
            serde_json::json!({
                "iterations": op.iterations,
                "converged": op.converged,
                "gain": op.gain(),
                "threshold": op.threshold(),
            })
        });
        serde_json::json!({
            "name": self.name,
            "target_layer": self.target_layer,
            "mean_error": means,
            "improvement_over_upper_bound": vs_ub,
            "improvement_over_single_layer": vs_single,
            "fits": fits,
            "learning": learning,
        })
    }

    /// Writes CSV tables, SVG charts and `summary.json` into `dir`. Every
    /// chart is drawn from the CSV text that was just written.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let errors = self.errors_csv()?;
        write_atomic(&dir.join("errors.csv"), &errors)?;
        let svg = chart_from_csv(
            std::str::from_utf8(&errors).expect("csv is utf-8"),
            &format!("{}: prediction error", self.name),
            "relative error",
            false,
        )?;
        write_atomic(&dir.join("errors.svg"), svg.as_bytes())?;
        if let Some(op) = &self.learned {
            let rows: Vec<Vec<f64>> = op
                .iteration_log
                .iter()
                .enumerate()
                .map(|(i, e)| vec![i as f64, *e])
                .collect();
            write_atomic(&dir.join("learn_log.csv"), &table_csv(&["iteration", "error"], &rows)?)?;
        }
        for (f, trace) in &self.kalman {
            let rows: Vec<Vec<f64>> = trace
                .steps
                .iter()
                .map(|s| vec![s.step as f64, s.error_all, s.error_observed, s.error_hidden, s.trace_pi])
                .collect();
            let csv = table_csv(&["step", "error_all", "error_observed", "error_hidden", "trace_Pi"], &rows)?;
            write_atomic(&dir.join(format!("kalman_{f}.csv")), &csv)?;
        }
        if !self.epsilon_sweep.is_empty() {
            let rows: Vec<Vec<f64>> = self
                .epsilon_sweep
                .iter()
                .map(|r| vec![r.epsilon, r.multilayer_error, r.single_layer_error])
                .collect();
            let csv = table_csv(&["epsilon", "multilayer_error", "single_layer_error"], &rows)?;
            write_atomic(&dir.join("epsilon_sweep.csv"), &csv)?;
            let svg = chart_from_csv(
                std::str::from_utf8(&csv).expect("csv is utf-8"),
                "error vs inter-layer scale",
                "mean relative error",
                false,
            )?;
            write_atomic(&dir.join("epsilon_sweep.svg"), svg.as_bytes())?;
        }
        write_atomic(&dir.join("summary.json"), &serde_json::to_vec_pretty(&self.summary_json())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfluenceRow {
    pub nodes: usize,
    pub planted_ratio: f64,
    pub fitted_ratio: f64,
}

/// Generates one dataset per spec and reports the fitted noise scale
/// relative to the initial state, `‖Σ̂‖_F / ‖X₀‖_F`.
pub fn external_influence_sweep(specs: &[SyntheticSpec], seed: u64) -> Result<Vec<InfluenceRow>> {
    if specs.len() < 2 {
        return invalid("influence sweep needs at least two sizes");
    }
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let run = || -> Result<InfluenceRow> {
                let d = generate_synthetic(spec, seed)?;
                let x0 = d.series.snapshots()[0].values().norm();
                let report = fit_diffusion_constants(&d.series, &d.network, &FitOptions::default())?;
                Ok(InfluenceRow {
                    nodes: d.network.node_count(),
                    planted_ratio: d.noise.sigma().norm() / x0,
                    fitted_ratio: report.noise.sigma().norm() / x0,
                })
            };
            run().map_err(|e| e.in_stage(format!("influence spec {i}")))
        })
        .collect()
}

pub fn influence_csv(rows: &[InfluenceRow]) -> Result<Vec<u8>> {
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.nodes as f64, r.planted_ratio, r.fitted_ratio])
        .collect();
    table_csv(&["nodes", "planted_ratio", "fitted_ratio"], &table)
}

pub fn write_influence(dir: &Path, rows: &[InfluenceRow]) -> Result<()> {
    let csv = influence_csv(rows)?;
    write_atomic(&dir.join("influence.csv"), &csv)?;
    let svg = chart_from_csv(
        std::str::from_utf8(&csv).expect("csv is utf-8"),
        "external influence vs network size",
        "||Sigma||_F / ||X0||_F",
        false,
    )?;
    write_atomic(&dir.join("influence.svg"), svg.as_bytes())
}

/// Total terminal ensemble variance for each noise ratio
/// `‖Σ‖_F / ‖X₀‖_F`, with Σ spread uniformly over all entries.
pub fn terminal_spread(
    x0: &StateMatrix,
    supra: &SupraLaplacian,
    ratios: &[f64],
    config: &SimulationConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let (p, t) = x0.values().shape();
    let scale = x0.values().norm() / ((p * t) as f64).sqrt();
    ratios
        .iter()
        .map(|&r| {
            let noise = NoiseModel::uniform(p, t, r * scale, seed)?;
            let terminal = simulate_ensemble_terminal(x0, supra, &noise, config)?;
            Ok(crate::diffusion::ensemble_statistics(&terminal)?.total_variance())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::upper_bound_series;
    use crate::harness::synthetic::*;
    use crate::network::*;
    use nalgebra::dmatrix;

    fn planted() -> SyntheticSpec {
        SyntheticSpec {
            layers: vec![
                LayerSpec {
                    id: 1,
                    kind: LayerKind::Agent,
                    nodes: 10,
                    graph: GraphModel::ErdosRenyi { p: 0.3, directed: false },
                    diffusion: 0.1,
                },
                LayerSpec {
                    id: 2,
                    kind: LayerKind::Information,
                    nodes: 15,
                    graph: GraphModel::Knn { k: 3 },
                    diffusion: 0.3,
                },
            ],
            couplings: vec![CouplingSpec {
                from: 1,
                to: 2,
                model: CouplingModel::Authorship,
                diffusion: 0.5,
                directed: false,
            }],
            topics: 3,
            noise: NoiseSpec::Ratio { ratio: 0.0 },
            snapshots: 8,
            spacing: 0.5,
            train_len: Some(5),
            dt: None,
            hidden_edge_prob: 0.0,
            require_connected: true,
            max_retries: 20,
        }
    }

    fn config(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            data: DataSource::Synthetic(planted()),
            methods,
            target_layer: None,
            seed: 5,
            learn_gain_scale: None,
            learn_max_iters: 20,
            epsilon_grid: vec![],
            output_dir: None,
        }
    }

    #[test]
    fn config_validation() {
        assert!(config(vec![]).validate().is_err());
        assert!(config(vec![Method::Kalman(0.0)]).validate().is_err());
        assert!(config(vec![Method::Kalman(1.5)]).validate().is_err());
        assert!(config(vec![Method::Multilayer, Method::Multilayer]).validate().is_err());
        assert!(config(vec![Method::Kalman(1.0)]).validate().is_ok());
        let json = r#"{"data": {"synthetic": {"layers": [{"id": 1, "kind": "agent", "nodes": 4,
            "graph": {"model": "erdos_renyi", "p": 1.0}, "diffusion": 0.1}], "topics": 2,
            "noise": {"kind": "ratio", "ratio": 0.0}, "snapshots": 4, "spacing": 1.0}},
            "methods": ["single_layer", {"kalman": 0.25}]}"#;
        let c = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(c.methods, vec![Method::SingleLayer, Method::Kalman(0.25)]);
        assert!(ExperimentConfig::from_json(&json.replace("\"methods\"", "\"bogus\": 1, \"methods\"")).is_err());
    }

    #[test]
    fn static_series_matches_upper_bound() {
        // consensus rows do not move under any Laplacian
        let w = dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        let net = InterconnectedNetwork::new(vec![LayerGraph::with_prefix(1, LayerKind::Agent, "a", w).unwrap()], vec![])
            .unwrap();
        let x = DMatrix::from_fn(3, 2, |_, j| 0.3 + j as f64);
        let snaps: Vec<_> = (0..5).map(|k| StateMatrix::new(x.clone(), k as f64).unwrap()).collect();
        let series = SnapshotSeries::with_split(snaps, 3).unwrap();
        let r = run_on(&config(vec![Method::SingleLayer]), &net, &series).unwrap();
        let ub = upper_bound_series(&series).unwrap();
        assert_eq!(r.upper_bound, ub[2..].to_vec());
        for (a, b) in r.curve("single_layer").unwrap().iter().zip(&r.upper_bound) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_methods_run_and_write() {
        let mut c = config(vec![
            Method::SingleLayer,
            Method::Multilayer,
            Method::LearnedOperator,
            Method::Kalman(0.2),
        ]);
        c.epsilon_grid = vec![0.0, 0.5, 1.0];
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.curves.len(), 4);
        assert!(r.curves.iter().all(|(_, e)| e.len() == r.times.len()));
        // exact planted model
        assert!(r.mean_error("multilayer").unwrap() < 1e-4);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        for f in ["errors.csv", "errors.svg", "summary.json", "learn_log.csv", "kalman_0.2.csv", "epsilon_sweep.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("errors.svg")).unwrap();
        assert_eq!(chart_from_csv(&text, "t: prediction error", "relative error", false).unwrap(), svg);
    }

    #[test]
    fn missing_target_layer_is_reported() {
        let mut c = config(vec![Method::Multilayer]);
        c.target_layer = Some(9);
        assert!(matches!(run_experiment(&c), Err(Error::UnknownId(_))));
    }

    #[test]
    fn influence_sweep_needs_two_sizes() {
        assert!(external_influence_sweep(&[planted()], 0).is_err());
    }
}
