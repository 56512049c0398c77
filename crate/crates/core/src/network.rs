//! Interconnected multilayer networks and supra-Laplacian assembly.
//!
//! Nodes are ordered layer-major: every node of the first declared layer,
//! then every node of the second, and so on. All matrices produced here and
//! all state matrices elsewhere in the crate share that ordering.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, invalid, Error, Result};

pub type LayerId = usize;

/// Largest total node count accepted by the dense routines.
pub const MAX_NODES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Agent,
    Information,
}

/// One layer of the network: its nodes and the intra-layer weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    id: LayerId,
    kind: LayerKind,
    node_ids: Vec<String>,
    adjacency: DMatrix<f64>,
}

impl LayerGraph {
    pub fn new(
        id: LayerId,
        kind: LayerKind,
        node_ids: Vec<String>,
        adjacency: DMatrix<f64>,
    ) -> Result<Self> {
        check_adjacency(&adjacency)?;
        if adjacency.nrows() != node_ids.len() {
            return dimension(format!(
                "layer {id}: {} node ids but adjacency is {}x{}",
                node_ids.len(),
                adjacency.nrows(),
                adjacency.ncols()
            ));
        }
        let mut seen = HashSet::with_capacity(node_ids.len());
        for n in &node_ids {
            if !seen.insert(n.as_str()) {
                return invalid(format!("layer {id}: duplicate node id {n:?}"));
            }
        }
        Ok(Self {
            id,
            kind,
            node_ids,
            adjacency,
        })
    }

    /// Layer with generated node ids `"{prefix}{i}"`.
    pub fn with_prefix(
        id: LayerId,
        kind: LayerKind,
        prefix: &str,
        adjacency: DMatrix<f64>,
    ) -> Result<Self> {
        let ids = (0..adjacency.nrows()).map(|i| format!("{prefix}{i}")).collect();
        Self::new(id, kind, ids, adjacency)
    }

    pub fn id(&self) -> LayerId {
        self.id
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn is_undirected(&self) -> bool {
        self.adjacency == self.adjacency.transpose()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian_unchecked(&self.adjacency)
    }
}

/// Directed coupling from the nodes of one layer to the nodes of another.
/// Rows index `from` nodes, columns index `to` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InterLayerCoupling {
    from: LayerId,
    to: LayerId,
    matrix: DMatrix<f64>,
}

impl InterLayerCoupling {
    pub fn new(from: LayerId, to: LayerId, matrix: DMatrix<f64>) -> Result<Self> {
        if from == to {
            return invalid(format!("coupling from layer {from} to itself"));
        }
        if let Some(v) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return invalid(format!("coupling {from}->{to} has entry {v}"));
        }
        Ok(Self { from, to, matrix })
    }

    /// One-to-one coupling between two replicas of the same node set.
    pub fn identity(from: LayerId, to: LayerId, n: usize) -> Result<Self> {
        Self::new(from, to, DMatrix::identity(n, n))
    }

    pub fn from(&self) -> LayerId {
        self.from
    }

    pub fn to(&self) -> LayerId {
        self.to
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn transposed(&self) -> Self {
        Self {
            from: self.to,
            to: self.from,
            matrix: self.matrix.transpose(),
        }
    }
}

/// Maps (layer, local node) pairs onto global rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIndex {
    // (layer id, offset, len) in declaration order
    spans: Vec<(LayerId, usize, usize)>,
    total: usize,
}

impl NodeIndex {
    fn from_layers(layers: &[LayerGraph]) -> Self {
        let mut offset = 0;
        let spans = layers
            .iter()
            .map(|l| {
                let span = (l.id, offset, l.len());
                offset += l.len();
                span
            })
            .collect();
        Self {
            spans,
            total: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn layer_count(&self) -> usize {
        self.spans.len()
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.spans.iter().map(|s| s.0)
    }

    pub fn layer_range(&self, layer: LayerId) -> Option<Range<usize>> {
        self.spans
            .iter()
            .find(|s| s.0 == layer)
            .map(|&(_, off, len)| off..off + len)
    }

    pub fn row(&self, layer: LayerId, local: usize) -> Option<usize> {
        self.layer_range(layer)
            .filter(|r| local < r.len())
            .map(|r| r.start + local)
    }

    pub fn locate(&self, row: usize) -> Option<(LayerId, usize)> {
        self.spans
            .iter()
            .find(|&&(_, off, len)| row >= off && row < off + len)
            .map(|&(id, off, _)| (id, row - off))
    }
}

/// Layers plus the couplings between them.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectedNetwork {
    layers: Vec<LayerGraph>,
    couplings: Vec<InterLayerCoupling>,
    index: NodeIndex,
}

impl InterconnectedNetwork {
    pub fn new(layers: Vec<LayerGraph>, couplings: Vec<InterLayerCoupling>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("network has no layers");
        }
        let mut ids = HashSet::new();
        for l in &layers {
            if !ids.insert(l.id) {
                return invalid(format!("duplicate layer id {}", l.id));
            }
        }
        let total: usize = layers.iter().map(LayerGraph::len).sum();
        if total > MAX_NODES {
            return Err(Error::TooLarge(format!(
                "{total} nodes exceeds the dense limit of {MAX_NODES}"
            )));
        }
        let mut pairs = HashSet::new();
        for c in &couplings {
            let from = layers.iter().find(|l| l.id == c.from);
            let to = layers.iter().find(|l| l.id == c.to);
            let (Some(from), Some(to)) = (from, to) else {
                return Err(Error::UnknownId(format!(
                    "coupling {}->{} references a missing layer",
                    c.from, c.to
                )));
            };
            if c.matrix.nrows() != from.len() || c.matrix.ncols() != to.len() {
                return dimension(format!(
                    "coupling {}->{} is {}x{}, layers have {} and {} nodes",
                    c.from,
                    c.to,
                    c.matrix.nrows(),
                    c.matrix.ncols(),
                    from.len(),
                    to.len()
                ));
            }
            if !pairs.insert((c.from, c.to)) {
                return invalid(format!("duplicate coupling {}->{}", c.from, c.to));
            }
        }
        let index = NodeIndex::from_layers(&layers);
        Ok(Self {
            layers,
            couplings,
            index,
        })
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    pub fn couplings(&self) -> &[InterLayerCoupling] {
        &self.couplings
    }

    pub fn index(&self) -> &NodeIndex {
        &self.index
    }

    pub fn layer(&self, id: LayerId) -> Option<&LayerGraph> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn coupling(&self, from: LayerId, to: LayerId) -> Option<&InterLayerCoupling> {
        self.couplings
            .iter()
            .find(|c| c.from == from && c.to == to)
    }

    /// Total node count P.
    pub fn node_count(&self) -> usize {
        self.index.total
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn agent_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Agent)
            .count()
    }

    pub fn information_layer_count(&self) -> usize {
        self.layers.len() - self.agent_layer_count()
    }

    /// True when every layer is undirected and every coupling has a
    /// transposed partner (or the pair is uncoupled in both directions).
    pub fn is_undirected(&self) -> bool {
        self.layers.iter().all(LayerGraph::is_undirected)
            && self.couplings.iter().all(|c| {
                self.coupling(c.to, c.from)
                    .is_some_and(|r| r.matrix == c.matrix.transpose())
            })
    }

    /// Sub-network made of the listed layers and the couplings among them.
    pub fn restricted(&self, layer_ids: &[LayerId]) -> Result<Self> {
        let mut layers = Vec::with_capacity(layer_ids.len());
        for &id in layer_ids {
            let l = self
                .layer(id)
                .ok_or_else(|| Error::UnknownId(format!("layer {id}")))?;
            layers.push(l.clone());
        }
        let couplings = self
            .couplings
            .iter()
            .filter(|c| layer_ids.contains(&c.from) && layer_ids.contains(&c.to))
            .cloned()
            .collect();
        Self::new(layers, couplings)
    }

    /// Global row of the node `node_id` in layer `layer`.
    pub fn row_of(&self, layer: LayerId, node_id: &str) -> Option<usize> {
        let l = self.layer(layer)?;
        let local = l.node_ids.iter().position(|n| n == node_id)?;
        self.index.row(layer, local)
    }

    /// All (layer, node id) labels in row order.
    pub fn row_labels(&self) -> Vec<(LayerId, &str)> {
        self.layers
            .iter()
            .flat_map(|l| l.node_ids.iter().map(move |n| (l.id, n.as_str())))
            .collect()
    }
}

/// Diffusion constants for intra-layer flow and for each ordered layer pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffusionConstants {
    intra: BTreeMap<LayerId, f64>,
    inter: BTreeMap<(LayerId, LayerId), f64>,
    symmetric: bool,
}

impl DiffusionConstants {
    pub fn new(symmetric: bool) -> Self {
        Self {
            symmetric,
            ..Self::default()
        }
    }

    /// Same intra constant on every layer and same inter constant on every
    /// declared coupling.
    pub fn uniform(network: &InterconnectedNetwork, intra: f64, inter: f64) -> Result<Self> {
        let mut c = Self::new(true);
        for l in network.layers() {
            c.set_intra(l.id(), intra)?;
        }
        for cp in network.couplings() {
            c.set_inter(cp.from(), cp.to(), inter)?;
        }
        Ok(c)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn set_intra(&mut self, layer: LayerId, value: f64) -> Result<()> {
        check_constant(value, || format!("intra constant of layer {layer}"))?;
        self.intra.insert(layer, value);
        Ok(())
    }

    /// Sets D^(from,to). In symmetric mode the reverse direction is set too.
    pub fn set_inter(&mut self, from: LayerId, to: LayerId, value: f64) -> Result<()> {
        check_constant(value, || format!("inter constant {from}->{to}"))?;
        if from == to {
            return invalid(format!("inter constant on layer {from} with itself"));
        }
        self.inter.insert((from, to), value);
        if self.symmetric {
            self.inter.insert((to, from), value);
        }
        Ok(())
    }

    pub fn intra(&self, layer: LayerId) -> Option<f64> {
        self.intra.get(&layer).copied()
    }

    pub fn inter(&self, from: LayerId, to: LayerId) -> Option<f64> {
        self.inter.get(&(from, to)).copied().or_else(|| {
            if self.symmetric {
                self.inter.get(&(to, from)).copied()
            } else {
                None
            }
        })
    }

    pub fn intra_entries(&self) -> impl Iterator<Item = (LayerId, f64)> + '_ {
        self.intra.iter().map(|(k, v)| (*k, *v))
    }

    pub fn inter_entries(&self) -> impl Iterator<Item = ((LayerId, LayerId), f64)> + '_ {
        self.inter.iter().map(|(k, v)| (*k, *v))
    }

    /// Checks the symmetric-mode invariant D^(a,b) = D^(b,a).
    pub fn validate(&self) -> Result<()> {
        for (&layer, &v) in &self.intra {
            check_constant(v, || format!("intra constant of layer {layer}"))?;
        }
        for (&(a, b), &v) in &self.inter {
            check_constant(v, || format!("inter constant {a}->{b}"))?;
            if self.symmetric {
                if let Some(&r) = self.inter.get(&(b, a)) {
                    if r != v {
                        return invalid(format!(
                            "symmetric constants disagree: D({a},{b})={v}, D({b},{a})={r}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_constant(value: f64, what: impl FnOnce() -> String) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return invalid(format!("{} must be finite and >= 0, got {value}", what()));
    }
    Ok(())
}

/// Assembled P×P diffusion operator with its intra/inter decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SupraLaplacian {
    matrix: DMatrix<f64>,
    intra_part: DMatrix<f64>,
    inter_part: DMatrix<f64>,
    index: NodeIndex,
}

impl SupraLaplacian {
    /// Wraps a bare single-block operator (no inter-layer part).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return dimension(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let n = matrix.nrows();
        Ok(Self {
            inter_part: DMatrix::zeros(n, n),
            intra_part: matrix.clone(),
            matrix,
            index: NodeIndex {
                spans: vec![(0, 0, n)],
                total: n,
            },
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn intra_part(&self) -> &DMatrix<f64> {
        &self.intra_part
    }

    pub fn inter_part(&self) -> &DMatrix<f64> {
        &self.inter_part
    }

    pub fn index(&self) -> &NodeIndex {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        symmetry_defect(&self.matrix) < tol
    }

    /// Operator with the inter-layer part scaled by `epsilon`.
    pub fn scale_inter_layer(&self, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return invalid(format!("epsilon must be finite and >= 0, got {epsilon}"));
        }
        let inter_part = &self.inter_part * epsilon;
        Ok(Self {
            matrix: &self.intra_part + &inter_part,
            intra_part: self.intra_part.clone(),
            inter_part,
            index: self.index.clone(),
        })
    }
}

/// Infinity norm of `a - aᵀ`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| (a[(i, j)] - a[(j, i)]).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_adjacency(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return dimension(format!(
            "adjacency must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        ));
    }
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let v = w[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("adjacency entry ({i},{j}) = {v}"));
            }
            if i == j && v != 0.0 {
                return invalid(format!("adjacency diagonal ({i},{i}) = {v}"));
            }
        }
    }
    Ok(())
}

fn laplacian_unchecked(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -w.clone();
    for i in 0..w.nrows() {
        l[(i, i)] = w.row(i).sum();
    }
    l
}

/// Out-degree graph Laplacian `K - W`.
pub fn build_laplacian(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_adjacency(adjacency)?;
    Ok(laplacian_unchecked(adjacency))
}

/// Assembles the supra-Laplacian of `network` weighted by `constants`.
///
/// The intra part is the block-diagonal direct sum of `D^(a) L^(a)`. Each
/// coupling `a -> b` with weights `W` contributes `-D^(a,b) W` to block
/// `(a, b)` of the inter part and `D^(a,b) diag(W 1)` to block `(a, a)`.
pub fn assemble_supra_laplacian(
    network: &InterconnectedNetwork,
    constants: &DiffusionConstants,
) -> Result<SupraLaplacian> {
    constants.validate()?;
    let p = network.node_count();
    let index = network.index().clone();
    let mut intra = DMatrix::zeros(p, p);
    for layer in network.layers() {
        let d = constants
            .intra(layer.id())
            .ok_or_else(|| Error::MissingConstant(format!("layer {}", layer.id())))?;
        let r = index.layer_range(layer.id()).expect("layer indexed");
        let block = layer.laplacian() * d;
        intra
            .view_mut((r.start, r.start), (r.len(), r.len()))
            .copy_from(&block);
    }

    let mut inter = DMatrix::zeros(p, p);
    for c in network.couplings() {
        let d = constants.inter(c.from(), c.to()).ok_or_else(|| {
            Error::MissingConstant(format!("coupling {}->{}", c.from(), c.to()))
        })?;
        let rf = index.layer_range(c.from()).expect("layer indexed");
        let rt = index.layer_range(c.to()).expect("layer indexed");
        let w = c.matrix();
        for i in 0..rf.len() {
            let row = rf.start + i;
            let mut degree = 0.0;
            for j in 0..rt.len() {
                let v = d * w[(i, j)];
                inter[(row, rt.start + j)] -= v;
                degree += v;
            }
            inter[(row, row)] += degree;
        }
    }

    Ok(SupraLaplacian {
        matrix: &intra + &inter,
        intra_part: intra,
        inter_part: inter,
        index,
    })
}
