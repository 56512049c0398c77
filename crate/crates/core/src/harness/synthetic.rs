//! Seeded synthetic multilayer datasets with planted diffusion constants.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::calibration::SnapshotSeries;
use crate::diffusion::{default_dt, derive_seed, propagate_closed, simulate_open, NoiseModel, SimulationConfig};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::network::{
    assemble_supra_laplacian, DiffusionConstants, InterLayerCoupling, InterconnectedNetwork, LayerGraph,
    LayerId, LayerKind, SupraLaplacian,
};
use crate::similarity::{knn_similarity, DEFAULT_MAX_WEIGHT};
use crate::state::{init_agent_states, DocumentAssignment, StateMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GraphModel {
    /// Each pair (or ordered pair when `directed`) is linked with probability `p`.
    ErdosRenyi {
        p: f64,
        #[serde(default)]
        directed: bool,
    },
    /// Unweighted symmetric k-nearest-neighbor graph on the initial topic vectors.
    Knn { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: LayerId,
    pub kind: LayerKind,
    pub nodes: usize,
    pub graph: GraphModel,
    /// Planted intra-layer constant.
    pub diffusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CouplingModel {
    /// One-to-one links; both layers must have the same size.
    Identity,
    /// Every document gets one author, spread evenly over the agents. The
    /// agents' initial states are the mean of their documents.
    Authorship,
    Random { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub from: LayerId,
    pub to: LayerId,
    pub model: CouplingModel,
    /// Planted inter-layer constant.
    pub diffusion: f64,
    /// Only `from -> to` is created when set.
    #[serde(default)]
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Uniform Σ with `‖Σ‖_F / ‖X₀‖_F = ratio`.
    Ratio { ratio: f64 },
    /// Σ = `sigma` on the first `nodes` rows of the first layer, zero elsewhere.
    Boundary { nodes: usize, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub couplings: Vec<CouplingSpec>,
    pub topics: usize,
    pub noise: NoiseSpec,
    pub snapshots: usize,
    pub spacing: f64,
    /// Training prefix length; defaults to two thirds of the snapshots.
    #[serde(default)]
    pub train_len: Option<usize>,
    /// Euler–Maruyama step for noisy data; defaults to [`default_dt`].
    #[serde(default)]
    pub dt: Option<f64>,
    /// Probability of extra agent-layer edges that act in the true dynamics
    /// but are left out of the returned network.
    #[serde(default)]
    pub hidden_edge_prob: f64,
    #[serde(default = "default_true")]
    pub require_connected: bool,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_true() -> bool {
    true
}

fn default_retries() -> usize {
    20
}

/// Generated data plus everything that was planted.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// The network an analyst would see.
    pub network: InterconnectedNetwork,
    pub constants: DiffusionConstants,
    /// Operator that generated the snapshots, hidden edges included.
    pub truth: SupraLaplacian,
    pub hidden_edges: usize,
    pub noise: NoiseModel,
    pub series: SnapshotSeries,
    pub assignment: Option<DocumentAssignment>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return invalid("spec has no layers");
        }
        if self.topics == 0 || self.snapshots < 2 {
            return invalid("need topics >= 1 and snapshots >= 2");
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return invalid(format!("spacing must be positive, got {}", self.spacing));
        }
        if let Some(t) = self.train_len {
            if t < 2 || t > self.snapshots {
                return invalid(format!("train_len {t} outside [2, {}]", self.snapshots));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return invalid(format!("dt must be positive, got {dt}"));
            }
        }
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                invalid(format!("{what}: probability {p} outside [0, 1]"))
            }
        };
        prob(self.hidden_edge_prob, "hidden edges")?;
        for l in &self.layers {
            if l.nodes == 0 {
                return invalid(format!("layer {} has no nodes", l.id));
            }
            if !(l.diffusion >= 0.0) {
                return invalid(format!("layer {}: diffusion must be >= 0", l.id));
            }
            match l.graph {
                GraphModel::ErdosRenyi { p, .. } => prob(p, &format!("layer {}", l.id))?,
                GraphModel::Knn { k } => {
                    if k == 0 || k >= l.nodes {
                        return invalid(format!("layer {}: k must lie in [1, {})", l.id, l.nodes));
                    }
                }
            }
        }
        for c in &self.couplings {
            if !(c.diffusion >= 0.0) {
                return invalid(format!("coupling {}->{}: diffusion must be >= 0", c.from, c.to));
            }
            if let CouplingModel::Random { p } = c.model {
                prob(p, &format!("coupling {}->{}", c.from, c.to))?;
            }
        }
        match self.noise {
            NoiseSpec::Ratio { ratio } if !(ratio >= 0.0) => invalid("noise ratio must be >= 0"),
            NoiseSpec::Boundary { nodes, sigma } if nodes > self.layers[0].nodes || !(sigma >= 0.0) => {
                invalid("boundary noise needs nodes <= first layer size and sigma >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Two agent layers of 79 sharing their members, 1000 documents, T = 10.
    pub fn professors() -> Self {
        let agent = |id| LayerSpec {
            id,
            kind: LayerKind::Agent,
            nodes: 79,
            graph: GraphModel::ErdosRenyi { p: 0.06, directed: false },
            diffusion: 0.02,
        };
        let link = |from, to, model| CouplingSpec {
            from,
            to,
            model,
            diffusion: 0.05,
            directed: false,
        };
        Self {
            layers: vec![
                agent(1),
                agent(2),
                LayerSpec {
                    id: 3,
                    kind: LayerKind::Information,
                    nodes: 1000,
                    graph: GraphModel::Knn { k: 5 },
                    diffusion: 0.02,
                },
            ],
            couplings: vec![
                link(1, 2, CouplingModel::Identity),
                link(1, 3, CouplingModel::Authorship),
                link(2, 3, CouplingModel::Authorship),
            ],
            topics: 10,
            noise: NoiseSpec::Ratio { ratio: 0.0 },
            snapshots: 6,
            spacing: 1.0,
            train_len: Some(4),
            dt: None,
            hidden_edge_prob: 0.0,
            require_connected: true,
            max_retries: 20,
        }
    }

    /// A directed follower layer of `users` and eight hashtags.
    pub fn twitter(users: usize) -> Self {
        Self {
            layers: vec![
                LayerSpec {
                    id: 1,
                    kind: LayerKind::Agent,
                    nodes: users,
                    graph: GraphModel::ErdosRenyi {
                        p: (8.0 / users as f64).min(1.0),
                        directed: true,
                    },
                    diffusion: 0.05,
                },
                LayerSpec {
                    id: 2,
                    kind: LayerKind::Information,
                    nodes: 8,
                    graph: GraphModel::Knn { k: 2 },
                    diffusion: 0.05,
                },
            ],
            couplings: vec![CouplingSpec {
                from: 1,
                to: 2,
                model: CouplingModel::Random { p: 0.25 },
                diffusion: 0.02,
                directed: false,
            }],
            topics: 8,
            noise: NoiseSpec::Ratio { ratio: 0.0 },
            snapshots: 6,
            spacing: 1.0,
            train_len: Some(4),
            dt: None,
            hidden_edge_prob: 0.0,
            require_connected: true,
            max_retries: 20,
        }
    }
}

fn simplex_rows(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(Exp1));
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn erdos_renyi(rng: &mut ChaCha8Rng, n: usize, p: f64, directed: bool) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            if rng.random::<f64>() < p {
                w[(i, j)] = 1.0;
                if !directed {
                    w[(j, i)] = 1.0;
                }
            }
        }
    }
    w
}

/// Weak connectivity of a square block structure given as a neighbor test.
fn connected(n: usize, linked: impl Fn(usize, usize) -> bool) -> bool {
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && (linked(i, j) || linked(j, i)) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

struct Attempt {
    network: InterconnectedNetwork,
    truth_network: InterconnectedNetwork,
    hidden_edges: usize,
    x0: DMatrix<f64>,
    assignment: Option<DocumentAssignment>,
}

fn prefix(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Agent => "a",
        LayerKind::Information => "d",
    }
}

fn build_attempt(spec: &SyntheticSpec, seed: u64) -> Result<Attempt> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = spec.topics;
    let mut states: BTreeMap<LayerId, DMatrix<f64>> = BTreeMap::new();

    // documents first, then authorship, then agents
    for l in spec.layers.iter().filter(|l| l.kind == LayerKind::Information) {
        states.insert(l.id, simplex_rows(&mut rng, l.nodes, t));
    }
    let layer_spec = |id: LayerId| {
        spec.layers
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| Error::UnknownId(format!("layer {id} in coupling spec")))
    };
    let mut authorship: BTreeMap<LayerId, Vec<usize>> = BTreeMap::new();
    let mut assignment = None;
    for c in spec.couplings.iter().filter(|c| c.model == CouplingModel::Authorship) {
        let (agents, docs) = (layer_spec(c.from)?, layer_spec(c.to)?);
        if agents.kind != LayerKind::Agent || docs.kind != LayerKind::Information {
            return invalid(format!("authorship {}->{} must go from agents to documents", c.from, c.to));
        }
        if let Some(author) = authorship.get(&docs.id) {
            if author.iter().any(|&a| a >= agents.nodes) {
                return invalid(format!("agent layers authoring layer {} differ in size", docs.id));
            }
            continue;
        }
        let mut order: Vec<usize> = (0..docs.nodes).collect();
        order.shuffle(&mut rng);
        let mut author = vec![0; docs.nodes];
        for (k, &d) in order.iter().enumerate() {
            author[d] = k % agents.nodes;
        }
        authorship.insert(docs.id, author);
    }
    for l in spec.layers.iter().filter(|l| l.kind == LayerKind::Agent) {
        let source = spec.couplings.iter().find(|c| c.from == l.id && c.model == CouplingModel::Authorship);
        let x = match source {
            Some(c) => {
                let author = &authorship[&c.to];
                let mut a = DocumentAssignment::new();
                for (d, &g) in author.iter().enumerate() {
                    a.assign(format!("a{g}"), format!("d{d}"));
                }
                let agent_ids: Vec<String> = (0..l.nodes).map(|i| format!("a{i}")).collect();
                let doc_ids: Vec<String> = (0..author.len()).map(|i| format!("d{i}")).collect();
                let init = init_agent_states(&a, &agent_ids, &doc_ids, &states[&c.to])?;
                let mut x = init.states;
                for name in &init.without_documents {
                    let i: usize = name[1..].parse().expect("generated id");
                    x.set_row(i, &simplex_rows(&mut rng, 1, t).row(0));
                }
                assignment.get_or_insert(a);
                x
            }
            None => simplex_rows(&mut rng, l.nodes, t),
        };
        states.insert(l.id, x);
    }

    let mut layers = Vec::new();
    let mut truth_layers = Vec::new();
    let mut hidden_edges = 0;
    for l in &spec.layers {
        let w = match l.graph {
            GraphModel::ErdosRenyi { p, directed } => erdos_renyi(&mut rng, l.nodes, p, directed),
            GraphModel::Knn { k } => {
                knn_similarity(&states[&l.id], k, DEFAULT_MAX_WEIGHT)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
            }
        };
        if spec.require_connected && !connected(l.nodes, |i, j| w[(i, j)] != 0.0) {
            return Err(Error::InvalidInput(format!("layer {} is disconnected", l.id)));
        }
        let mut truth_w = w.clone();
        if l.kind == LayerKind::Agent && spec.hidden_edge_prob > 0.0 {
            let extra = erdos_renyi(&mut rng, l.nodes, spec.hidden_edge_prob, !is_symmetric(&w));
            for (a, e) in truth_w.iter_mut().zip(extra.iter()) {
                if *e != 0.0 && *a == 0.0 {
                    *a = 1.0;
                    hidden_edges += 1;
                }
            }
        }
        layers.push(LayerGraph::with_prefix(l.id, l.kind, prefix(l.kind), w)?);
        truth_layers.push(LayerGraph::with_prefix(l.id, l.kind, prefix(l.kind), truth_w)?);
    }

    let mut couplings = Vec::new();
    for c in &spec.couplings {
        let (a, b) = (layer_spec(c.from)?, layer_spec(c.to)?);
        let m = match c.model {
            CouplingModel::Identity => {
                if a.nodes != b.nodes {
                    return invalid(format!("identity coupling {}->{} needs equal sizes", c.from, c.to));
                }
                DMatrix::identity(a.nodes, b.nodes)
            }
            CouplingModel::Authorship => {
                let author = &authorship[&c.to];
                let mut m = DMatrix::zeros(a.nodes, b.nodes);
                for (d, &g) in author.iter().enumerate() {
                    m[(g, d)] = 1.0;
                }
                m
            }
            CouplingModel::Random { p } => {
                DMatrix::from_fn(a.nodes, b.nodes, |_, _| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            }
        };
        let coupling = InterLayerCoupling::new(c.from, c.to, m)?;
        if !c.directed {
            couplings.push(coupling.transposed());
        }
        couplings.push(coupling);
    }

    let network = InterconnectedNetwork::new(layers, couplings.clone())?;
    let truth_network = InterconnectedNetwork::new(truth_layers, couplings)?;
    if spec.require_connected {
        let probe = DiffusionConstants::uniform(&network, 1.0, 1.0)?;
        let l = assemble_supra_laplacian(&network, &probe)?;
        if !connected(network.node_count(), |i, j| l.matrix()[(i, j)] != 0.0) {
            return invalid("planted network is disconnected");
        }
    }
    let x0 = {
        let rows: Vec<&DMatrix<f64>> = spec.layers.iter().map(|l| &states[&l.id]).collect();
        let p = rows.iter().map(|m| m.nrows()).sum();
        let mut x = DMatrix::zeros(p, t);
        let mut r = 0;
        for m in rows {
            x.rows_mut(r, m.nrows()).copy_from(m);
            r += m.nrows();
        }
        x
    };
    Ok(Attempt {
        network,
        truth_network,
        hidden_edges,
        x0,
        assignment,
    })
}

fn is_symmetric(w: &DMatrix<f64>) -> bool {
    *w == w.transpose()
}

fn planted_constants(spec: &SyntheticSpec) -> Result<DiffusionConstants> {
    let symmetric = spec.couplings.iter().all(|c| !c.directed);
    let mut c = DiffusionConstants::new(symmetric);
    for l in &spec.layers {
        c.set_intra(l.id, l.diffusion)?;
    }
    for cs in &spec.couplings {
        c.set_inter(cs.from, cs.to, cs.diffusion)?;
        if !cs.directed {
            c.set_inter(cs.to, cs.from, cs.diffusion)?;
        }
    }
    Ok(c)
}

/// Builds a network, plants constants and noise, and generates snapshots.
/// Everything is a function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut attempt = None;
    let mut last_err = None;
    for k in 0..=spec.max_retries as u64 {
        match build_attempt(spec, derive_seed(seed, k)) {
            Ok(a) => {
                attempt = Some(a);
                break;
            }
            Err(e @ Error::InvalidInput(_)) if spec.require_connected && e.to_string().contains("disconnected") => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    let Some(a) = attempt else {
        let reason = last_err.map(|e| e.to_string()).unwrap_or_default();
        return invalid(format!("no connected network after {} retries: {reason}", spec.max_retries));
    };

    let constants = planted_constants(spec)?;
    let truth = assemble_supra_laplacian(&a.truth_network, &constants)?;
    let (p, t) = a.x0.shape();
    let sigma = match spec.noise {
        NoiseSpec::Ratio { ratio } => DMatrix::from_element(p, t, ratio * a.x0.norm() / ((p * t) as f64).sqrt()),
        NoiseSpec::Boundary { nodes, sigma } => DMatrix::from_fn(p, t, |i, _| if i < nodes { sigma } else { 0.0 }),
    };
    let noise = NoiseModel::new(sigma, derive_seed(seed, u64::MAX))?;

    let mut snaps = vec![StateMatrix::new(a.x0.clone(), 0.0)?];
    let noisy = noise.sigma().iter().any(|s| *s > 0.0);
    let dt = spec.dt.unwrap_or_else(|| default_dt(&truth)).min(spec.spacing);
    for k in 1..spec.snapshots {
        let prev = snaps.last().expect("non-empty");
        let mut next = if noisy {
            let config = SimulationConfig::new(dt, spec.spacing, 1)?;
            let member = noise.with_seed(derive_seed(noise.seed(), k as u64));
            simulate_open(prev, &truth, &member, &config)?
                .pop()
                .expect("path holds the initial state")
        } else {
            propagate_closed(prev, &truth, spec.spacing)?
        };
        // pin times to the grid so accumulated rounding cannot drift
        next = StateMatrix::new(next.into_values(), k as f64 * spec.spacing)?;
        snaps.push(next);
    }
    let train_len = spec
        .train_len
        .unwrap_or_else(|| ((2 * spec.snapshots) / 3).max(2));
    let series = SnapshotSeries::with_split(snaps, train_len)?;
    Ok(SyntheticDataset {
        network: a.network,
        constants,
        truth,
        hidden_edges: a.hidden_edges,
        noise,
        series,
        assignment: a.assignment,
    })
}

impl SyntheticDataset {
    /// Row indices of one layer.
    pub fn rows_of(&self, layer: LayerId) -> Result<Vec<usize>> {
        self.network
            .index()
            .layer_range(layer)
            .map(|r| r.collect())
            .ok_or_else(|| Error::UnknownId(format!("layer {layer}")))
    }

    /// Writes `network.json`, `states.csv`, `truth.json` and, when documents
    /// have authors, `assignment.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::save_network(&dir.join("network.json"), &self.network, Some(&self.constants))?;
        let labels = io::node_labels(&self.network);
        io::save_states(&dir.join("states.csv"), &labels, self.series.snapshots())?;
        if let Some(a) = &self.assignment {
            io::save_assignment(&dir.join("assignment.csv"), a)?;
        }
        let truth = serde_json::json!({
            "constants": io::ConstantsJson::from_constants(&self.constants),
            "sigma_frobenius": self.noise.sigma().norm(),
            "hidden_edges": self.hidden_edges,
            "train_len": self.series.train_len(),
        });
        io::write_atomic(&dir.join("truth.json"), &serde_json::to_vec_pretty(&truth)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            layers: vec![
                LayerSpec {
                    id: 1,
                    kind: LayerKind::Agent,
                    nodes: 12,
                    graph: GraphModel::ErdosRenyi { p: 0.3, directed: false },
                    diffusion: 0.3,
                },
                LayerSpec {
                    id: 2,
                    kind: LayerKind::Information,
                    nodes: 20,
                    graph: GraphModel::Knn { k: 3 },
                    diffusion: 0.2,
                },
            ],
            couplings: vec![CouplingSpec {
                from: 1,
                to: 2,
                model: CouplingModel::Authorship,
                diffusion: 0.4,
                directed: false,
            }],
            topics: 3,
            noise: NoiseSpec::Ratio { ratio: 0.0 },
            snapshots: 5,
            spacing: 0.5,
            train_len: None,
            dt: None,
            hidden_edge_prob: 0.0,
            require_connected: true,
            max_retries: 20,
        }
    }

    #[test]
    fn closed_data_obeys_semigroup() {
        let d = generate_synthetic(&small_spec(), 4).unwrap();
        let s = d.series.snapshots();
        for k in 2..s.len() {
            let direct = propagate_closed(&s[k - 2], &d.truth, 1.0).unwrap();
            assert!((direct.values() - s[k].values()).amax() < 1e-10);
        }
        assert_eq!(d.series.train_len(), 3);
    }

    #[test]
    fn agents_start_at_document_means() {
        let d = generate_synthetic(&small_spec(), 9).unwrap();
        let x0 = d.series.snapshots()[0].values();
        let a = d.assignment.as_ref().unwrap();
        for agent in 0..12 {
            let docs = a.documents_of(&format!("a{agent}")).unwrap();
            let mut mean = nalgebra::RowDVector::zeros(3);
            for doc in docs {
                let r = 12 + doc[1..].parse::<usize>().unwrap();
                mean += x0.row(r);
            }
            mean /= docs.len() as f64;
            assert!((mean - x0.row(agent)).amax() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_files() {
        let spec = SyntheticSpec {
            noise: NoiseSpec::Ratio { ratio: 0.1 },
            ..small_spec()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic(&spec, 7).unwrap().write(a.path()).unwrap();
        generate_synthetic(&spec, 7).unwrap().write(b.path()).unwrap();
        for f in ["network.json", "states.csv", "assignment.csv", "truth.json"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let other = generate_synthetic(&spec, 8).unwrap();
        let first = generate_synthetic(&spec, 7).unwrap();
        assert_ne!(other.series.snapshots()[1], first.series.snapshots()[1]);
    }

    #[test]
    fn noise_ratio_is_planted() {
        let spec = SyntheticSpec {
            noise: NoiseSpec::Ratio { ratio: 0.42 },
            ..small_spec()
        };
        let d = generate_synthetic(&spec, 1).unwrap();
        let x0 = d.series.snapshots()[0].values();
        assert!((d.noise.sigma().norm() / x0.norm() - 0.42).abs() < 1e-12);
    }

    #[test]
    fn impossible_connectivity_errors() {
        let mut spec = small_spec();
        spec.layers[0].graph = GraphModel::ErdosRenyi { p: 0.0, directed: false };
        spec.max_retries = 3;
        let err = generate_synthetic(&spec, 1).unwrap_err();
        assert!(err.to_string().contains("retries"));
        spec.require_connected = false;
        assert!(generate_synthetic(&spec, 1).is_ok());
    }

    #[test]
    fn hidden_edges_only_in_truth() {
        let spec = SyntheticSpec {
            hidden_edge_prob: 0.2,
            ..small_spec()
        };
        let d = generate_synthetic(&spec, 3).unwrap();
        assert!(d.hidden_edges > 0);
        let observed = assemble_supra_laplacian(&d.network, &d.constants).unwrap();
        assert!((observed.matrix() - d.truth.matrix()).amax() > 0.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec();
        spec.layers[0].graph = GraphModel::ErdosRenyi { p: 1.5, directed: false };
        assert!(generate_synthetic(&spec, 0).is_err());
        let mut spec = small_spec();
        spec.layers[1].nodes = 0;
        assert!(generate_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn presets_have_expected_shapes() {
        let tw = SyntheticSpec::twitter(40);
        let d = generate_synthetic(&tw, 2).unwrap();
        assert_eq!(d.series.nodes(), 48);
        assert_eq!(d.series.topics(), 8);
        assert!(!d.network.is_undirected());
        let prof = SyntheticSpec::professors();
        assert_eq!(prof.layers.iter().map(|l| l.nodes).collect::<Vec<_>>(), vec![79, 79, 1000]);
        assert_eq!(prof.topics, 10);
    }
}
