//! Diffusion of topic states over interconnected multilayer networks.
//!
//! The crate assembles supra-Laplacians from layered graphs, propagates
//! agent/document topic states through closed and noisy dynamics, calibrates
//! diffusion constants and a data-driven operator from snapshots, refines
//! predictions from partial observations with a Kalman filter, and studies
//! how algebraic connectivity responds to inter-layer coupling.

pub mod calibration;
pub mod diffusion;
pub mod error;
pub mod expm;
pub mod harness;
pub mod io;
pub mod kalman;
pub mod network;
pub mod similarity;
pub mod spectral;
pub mod state;

pub use calibration::{
    fit_diffusion_constants, learn_supra_operator, one_step_predict_learned, FitOptions, FitReport,
    LearnOptions, LearnedOperator, SnapshotSeries,
};
pub use diffusion::{
    ensemble_statistics, predict_mean, propagate_closed, simulate_ensemble, simulate_open,
    NoiseModel, SimulationConfig,
};
pub use error::{Error, Result};
pub use expm::matrix_exponential;
pub use kalman::{kalman_predict, kalman_update, run_filter, KalmanState, ObservationModel};
pub use network::{
    assemble_supra_laplacian, build_laplacian, DiffusionConstants, InterLayerCoupling,
    InterconnectedNetwork, LayerGraph, LayerId, LayerKind, SupraLaplacian,
};
pub use spectral::{connectivity_sweep, lambda2_perturbation_estimate, spectrum, SweepRow};
pub use state::{init_agent_states, DocumentAssignment, StateMatrix, TopicVector};
