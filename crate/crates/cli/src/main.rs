use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use supradiff::calibration::{fit_diffusion_constants, learn_supra_operator, FitOptions, LearnOptions};
use supradiff::diffusion::{default_dt, ensemble_statistics, predict_mean, simulate_ensemble, NoiseModel, SimulationConfig};
use supradiff::harness::experiment::{external_influence_sweep, run_experiment, write_influence, ExperimentConfig};
use supradiff::harness::plot::chart_from_csv;
use supradiff::harness::synthetic::{generate_synthetic, SyntheticSpec};
use supradiff::io::{self, write_atomic};
use supradiff::kalman::{run_filter, sample_mask, seeded_pi0, ObservationModel};
use supradiff::network::{assemble_supra_laplacian, DiffusionConstants, InterconnectedNetwork, SupraLaplacian};
use supradiff::spectral::{connectivity_sweep, spectrum};
use supradiff::{Error, SnapshotSeries};

#[derive(Parser)]
#[command(name = "supradiff", version, about = "Topic diffusion over interconnected multilayer networks")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON configuration (experiment config or synthetic spec).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Network JSON.
    #[arg(long)]
    network: PathBuf,
    /// Long-format state CSV.
    #[arg(long)]
    states: PathBuf,
    /// Number of leading snapshots used for training.
    #[arg(long)]
    train_len: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the supra-Laplacian and write it with its intra/inter parts.
    Build {
        #[arg(long)]
        network: PathBuf,
    },
    /// Simulate noisy diffusion from the first snapshot.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        /// Noise scale as ‖Σ‖_F / ‖X₀‖_F, spread uniformly.
        #[arg(long, default_value_t = 0.0)]
        sigma_ratio: f64,
    },
    /// Closed-system prediction from the last snapshot.
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        delta_t: f64,
    },
    /// Fit diffusion constants and noise scales on the training range.
    Fit {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 10.0)]
        d_max: f64,
    },
    /// Learn a supra operator from the training range.
    Learn {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        gain_scale: Option<f64>,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
    },
    /// Kalman refinement with a random fraction of observed nodes.
    Kalman {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        gain_scale: Option<f64>,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
    },
    /// Spectrum and inter-layer connectivity sweep.
    Spectral {
        #[arg(long)]
        network: PathBuf,
        /// Comma-separated ε values.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.001,0.0001")]
        epsilon: Vec<f64>,
    },
    /// Run an experiment (or an external-influence sweep) from --config.
    Experiment,
    /// Write a synthetic dataset from --config or a preset.
    Generate {
        #[arg(long, value_parser = ["professors", "twitter"])]
        preset: Option<String>,
        /// Twitter preset size.
        #[arg(long, default_value_t = 1000)]
        users: usize,
    },
}

/// Experiment configs are either a single experiment or a list of synthetic
/// specs for the noise-versus-size sweep.
#[derive(serde::Deserialize)]
#[serde(untagged)]
enum ExperimentFile {
    Influence {
        influence: Vec<SyntheticSpec>,
        #[serde(default)]
        seed: u64,
    },
    Single(Box<ExperimentConfig>),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numerical() => 3,
        Some(Error::Io(_)) => 1,
        _ if err.chain().any(|e| e.is::<std::io::Error>()) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(inputs: &Inputs) -> anyhow::Result<(InterconnectedNetwork, Option<DiffusionConstants>, SnapshotSeries, Vec<String>)> {
    let (net, constants) = io::load_network(&inputs.network)
        .with_context(|| format!("reading {}", inputs.network.display()))?;
    let labels = io::node_labels(&net);
    let series = io::load_series(&inputs.states, &labels, inputs.train_len)
        .with_context(|| format!("reading {}", inputs.states.display()))?;
    Ok((net, constants, series, labels))
}

fn require_constants(c: Option<DiffusionConstants>) -> anyhow::Result<DiffusionConstants> {
    c.ok_or_else(|| Error::InvalidInput("network file has no \"constants\" section".into()).into())
}

fn put(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic(&dir.join(name), bytes)?;
    log::info!("wrote {}", dir.join(name).display());
    Ok(())
}

fn read_config(cli: &Cli) -> anyhow::Result<String> {
    let path = cli.config.as_ref().context("--config is required")?;
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn learn(
    net: &InterconnectedNetwork,
    constants: Option<DiffusionConstants>,
    series: &SnapshotSeries,
    seed: u64,
    gain_scale: Option<f64>,
    max_iters: usize,
) -> anyhow::Result<supradiff::LearnedOperator> {
    let constants = match constants {
        Some(c) => c,
        None => {
            let options = FitOptions {
                seed,
                ..FitOptions::default()
            };
            fit_diffusion_constants(series, net, &options)?.constants
        }
    };
    let s = series.snapshots();
    if s.len() < 2 {
        bail!(Error::InvalidInput("learning needs at least two snapshots".into()));
    }
    let spacing = s[1].time() - s[0].time();
    let init = SupraLaplacian::from_matrix(assemble_supra_laplacian(net, &constants)?.matrix() * spacing)?;
    let mean_sq = series
        .train_pairs()
        .map(|(x, _)| x.values().norm_squared())
        .sum::<f64>()
        / series.train_len().saturating_sub(1).max(1) as f64;
    let options = LearnOptions {
        gain: gain_scale.map(|g| g / mean_sq.max(f64::MIN_POSITIVE)),
        threshold: None,
        max_iters,
    };
    Ok(learn_supra_operator(series, &init, &options)?)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let out = &cli.out;
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Build { network } => {
            let (net, c) = io::load_network(network).with_context(|| format!("reading {}", network.display()))?;
            let supra = assemble_supra_laplacian(&net, &require_constants(c)?)?;
            put(out, "supra_laplacian.csv", &io::matrix_csv(supra.matrix()))?;
            put(out, "intra_part.csv", &io::matrix_csv(supra.intra_part()))?;
            put(out, "inter_part.csv", &io::matrix_csv(supra.inter_part()))?;
        }
        Command::Simulate {
            inputs,
            horizon,
            dt,
            paths,
            sigma_ratio,
        } => {
            let (net, c, series, labels) = load(inputs)?;
            let supra = assemble_supra_laplacian(&net, &require_constants(c)?)?;
            let x0 = &series.snapshots()[0];
            let (p, t) = x0.values().shape();
            let sigma = sigma_ratio * x0.values().norm() / ((p * t) as f64).sqrt();
            let noise = NoiseModel::uniform(p, t, sigma, seed)?;
            let config = SimulationConfig::new(dt.unwrap_or_else(|| default_dt(&supra)), *horizon, *paths)?;
            let runs = simulate_ensemble(x0, &supra, &noise, &config)?;
            put(out, "simulation.csv", &io::simulation_csv(&labels, &runs)?)?;
            if runs.len() >= 2 {
                let terminal: Vec<_> = runs
                    .iter()
                    .map(|r| r.last().expect("path").values().clone())
                    .collect();
                let stats = ensemble_statistics(&terminal)?;
                put(out, "ensemble_summary.csv", &io::ensemble_summary_csv(&labels, &stats.mean, &stats.variance)?)?;
            }
        }
        Command::Predict { inputs, delta_t } => {
            let (net, c, series, labels) = load(inputs)?;
            let supra = assemble_supra_laplacian(&net, &require_constants(c)?)?;
            let last = series.snapshots().last().expect("non-empty series");
            let pred = predict_mean(last, &supra, *delta_t)?;
            put(out, "prediction.csv", &io::states_csv(&labels, &[pred])?)?;
        }
        Command::Fit { inputs, d_max } => {
            let (net, _, series, _) = load(inputs)?;
            let options = FitOptions {
                d_max: *d_max,
                seed,
                ..FitOptions::default()
            };
            let report = fit_diffusion_constants(&series, &net, &options)?;
            put(out, "fit.json", &serde_json::to_vec_pretty(&report.to_json())?)?;
            put(out, "sigma.csv", &io::matrix_csv(report.noise.sigma()))?;
        }
        Command::Learn {
            inputs,
            gain_scale,
            max_iters,
        } => {
            let (net, c, series, _) = load(inputs)?;
            let op = learn(&net, c, &series, seed, *gain_scale, *max_iters)?;
            put(out, "operator.csv", &io::matrix_csv(op.lambda_hat()))?;
            let rows: Vec<Vec<f64>> = op
                .iteration_log
                .iter()
                .enumerate()
                .map(|(i, e)| vec![i as f64, *e])
                .collect();
            put(out, "learn_log.csv", &io::table_csv(&["iteration", "error"], &rows)?)?;
        }
        Command::Kalman {
            inputs,
            fraction,
            gain_scale,
            max_iters,
        } => {
            let (net, c, series, labels) = load(inputs)?;
            let op = learn(&net, c, &series, seed, *gain_scale, *max_iters)?;
            let mask = sample_mask(series.nodes(), *fraction, seed)?;
            let model = ObservationModel::with_defaults(mask.clone(), &op)?;
            let trace = run_filter(&series, &op, &model, &seeded_pi0(&model))?;
            let rows: Vec<Vec<f64>> = trace
                .steps
                .iter()
                .map(|s| vec![s.step as f64, s.error_all, s.error_observed, s.error_hidden, s.trace_pi])
                .collect();
            put(
                out,
                "filter_trace.csv",
                &io::table_csv(&["step", "error_all", "error_observed", "error_hidden", "trace_Pi"], &rows)?,
            )?;
            put(out, "mask.csv", &io::mask_csv(&labels, &mask)?)?;
            put(out, "predictions.csv", &io::states_csv(&labels, &trace.predictions)?)?;
        }
        Command::Spectral { network, epsilon } => {
            let (net, c) = io::load_network(network).with_context(|| format!("reading {}", network.display()))?;
            let c = require_constants(c)?;
            let summary = spectrum(&assemble_supra_laplacian(&net, &c)?)?;
            let json = serde_json::json!({
                "eigenvalues": summary.eigenvalues,
                "lambda2": summary.lambda2,
                "kernel_dim": summary.kernel_dim,
                "intra_kernel_dim": summary.null_basis.ncols(),
            });
            put(out, "spectrum.json", &serde_json::to_vec_pretty(&json)?)?;
            let rows: Vec<Vec<f64>> = connectivity_sweep(&net, &c, epsilon)?
                .into_iter()
                .map(|r| vec![r.epsilon, r.lambda2_actual, r.lambda2_estimate, r.rel_error])
                .collect();
            let csv = io::table_csv(&["epsilon", "lambda2_actual", "lambda2_estimate", "rel_error"], &rows)?;
            put(out, "sweep.csv", &csv)?;
            let svg = chart_from_csv(std::str::from_utf8(&csv)?, "algebraic connectivity", "lambda2", true)?;
            put(out, "sweep.svg", svg.as_bytes())?;
        }
        Command::Experiment => {
            let text = read_config(cli)?;
            match serde_json::from_str::<ExperimentFile>(&text).map_err(Error::from)? {
                ExperimentFile::Influence { influence, seed: s } => {
                    let rows = external_influence_sweep(&influence, cli.seed.unwrap_or(s))?;
                    std::fs::create_dir_all(out)?;
                    write_influence(out, &rows)?;
                }
                ExperimentFile::Single(config) => {
                    let mut config = *config;
                    config.validate()?;
                    if let Some(s) = cli.seed {
                        config.seed = s;
                    }
                    let result = run_experiment(&config)?;
                    let dir = if out.as_os_str() == "out" {
                        config.output_dir.clone().unwrap_or_else(|| out.clone())
                    } else {
                        out.clone()
                    };
                    result.write(&dir)?;
                    println!("{}", serde_json::to_string_pretty(&result.summary_json()["mean_error"])?);
                }
            }
        }
        Command::Generate { preset, users } => {
            let spec = match (preset.as_deref(), &cli.config) {
                (Some("professors"), _) => SyntheticSpec::professors(),
                (Some(_), _) => SyntheticSpec::twitter(*users),
                (None, Some(_)) => serde_json::from_str(&read_config(cli)?).map_err(Error::from)?,
                (None, None) => bail!(Error::InvalidInput("generate needs --preset or --config".into())),
            };
            generate_synthetic(&spec, seed)?.write(out)?;
        }
    }
    Ok(())
}
