//! File formats: network JSON, long-format state CSV, assignment CSV and
//! dense matrix CSV.
//!
//! # Network JSON
//!
//! ```json
//! {
//!   "layers": [
//!     { "id": 1, "kind": "agent", "nodes": ["a0", "a1"],
//!       "adjacency": [[0, 1], [1, 0]] },
//!     { "id": 2, "kind": "information", "nodes": ["d0", "d1", "d2"],
//!       "adjacency": { "triplets": [[0, 1, 0.5], [1, 2, 2.0]] },
//!       "directed": false }
//!   ],
//!   "couplings": [
//!     { "from": 1, "to": 2, "matrix": [[0, 0, 1.0], [1, 2, 1.0]] }
//!   ],
//!   "constants": {
//!     "intra": { "1": 1.0, "2": 0.5 },
//!     "inter": { "1,2": 0.2 },
//!     "symmetric": true
//!   }
//! }
//! ```
//!
//! Dense adjacency is taken verbatim. Triplets `[row, col, weight]` use local
//! node indices; on undirected layers (`"directed": false`, the default)
//! each listed edge is mirrored. A coupling is undirected unless it says
//! `"directed": true`, in which case only `from -> to` is created; an
//! undirected coupling also creates the transposed `to -> from` coupling.
//! Constant keys for pairs are `"from,to"`. `constants` is optional.
//!
//! # State CSV
//!
//! Header `node_id,t,x_1,...,x_T`; one row per node per snapshot. `node_id`
//! is `"{layer}:{node}"`. Rows may appear in any order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calibration::SnapshotSeries;
use crate::error::{invalid, Error, Result};
use crate::network::{
    DiffusionConstants, InterLayerCoupling, InterconnectedNetwork, LayerGraph, LayerId, LayerKind,
};
use crate::state::{DocumentAssignment, StateMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdjacencyJson {
    Dense(Vec<Vec<f64>>),
    Sparse { triplets: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerJson {
    pub id: LayerId,
    pub kind: LayerKind,
    pub nodes: Vec<String>,
    pub adjacency: AdjacencyJson,
    #[serde(default)]
    pub directed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingJson {
    pub from: LayerId,
    pub to: LayerId,
    pub matrix: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub directed: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstantsJson {
    #[serde(default)]
    pub intra: BTreeMap<String, f64>,
    #[serde(default)]
    pub inter: BTreeMap<String, f64>,
    #[serde(default = "yes")]
    pub symmetric: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub layers: Vec<LayerJson>,
    #[serde(default)]
    pub couplings: Vec<CouplingJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsJson>,
}

fn triplets_to_dense(
    n_rows: usize,
    n_cols: usize,
    triplets: &[(usize, usize, f64)],
    mirror: bool,
    what: &str,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n_rows, n_cols);
    for &(i, j, w) in triplets {
        if i >= n_rows || j >= n_cols {
            return invalid(format!("{what}: triplet ({i},{j}) outside {n_rows}x{n_cols}"));
        }
        m[(i, j)] = w;
        if mirror {
            m[(j, i)] = w;
        }
    }
    Ok(m)
}

fn parse_pair(key: &str) -> Result<(LayerId, LayerId)> {
    let mut it = key.split(',').map(|s| s.trim().parse::<LayerId>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => invalid(format!("constant key {key:?} is not \"from,to\"")),
    }
}

impl ConstantsJson {
    pub fn to_constants(&self) -> Result<DiffusionConstants> {
        let mut c = DiffusionConstants::new(self.symmetric);
        for (k, v) in &self.intra {
            let id = k
                .trim()
                .parse::<LayerId>()
                .map_err(|_| Error::InvalidInput(format!("layer key {k:?}")))?;
            c.set_intra(id, *v)?;
        }
        for (k, v) in &self.inter {
            let (a, b) = parse_pair(k)?;
            if self.symmetric {
                if let Some(prev) = self.inter.get(&format!("{b},{a}")) {
                    if prev != v {
                        return invalid(format!("symmetric constants disagree for {a},{b}"));
                    }
                }
            }
            c.set_inter(a, b, *v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_constants(c: &DiffusionConstants) -> Self {
        let intra = c.intra_entries().map(|(l, v)| (l.to_string(), v)).collect();
        let inter = c
            .inter_entries()
            .filter(|((a, b), _)| !c.is_symmetric() || a < b)
            .map(|((a, b), v)| (format!("{a},{b}"), v))
            .collect();
        Self {
            intra,
            inter,
            symmetric: c.is_symmetric(),
        }
    }
}

impl NetworkFile {
    pub fn to_network(&self) -> Result<(InterconnectedNetwork, Option<DiffusionConstants>)> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let n = l.nodes.len();
            let adjacency = match &l.adjacency {
                AdjacencyJson::Dense(rows) => {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Dimension(format!(
                            "layer {}: dense adjacency is not {n}x{n}",
                            l.id
                        )));
                    }
                    DMatrix::from_fn(n, n, |i, j| rows[i][j])
                }
                AdjacencyJson::Sparse { triplets } => {
                    triplets_to_dense(n, n, triplets, !l.directed, &format!("layer {}", l.id))?
                }
            };
            layers.push(LayerGraph::new(l.id, l.kind, l.nodes.clone(), adjacency)?);
        }
        let size = |id: LayerId| {
            layers
                .iter()
                .find(|l| l.id() == id)
                .map(LayerGraph::len)
                .ok_or_else(|| Error::UnknownId(format!("layer {id} in coupling")))
        };
        let mut couplings = Vec::new();
        for c in &self.couplings {
            let m = triplets_to_dense(
                size(c.from)?,
                size(c.to)?,
                &c.matrix,
                false,
                &format!("coupling {}->{}", c.from, c.to),
            )?;
            let coupling = InterLayerCoupling::new(c.from, c.to, m)?;
            if !c.directed {
                couplings.push(coupling.transposed());
            }
            couplings.push(coupling);
        }
        let net = InterconnectedNetwork::new(layers, couplings)?;
        let constants = self.constants.as_ref().map(|c| c.to_constants()).transpose()?;
        Ok((net, constants))
    }

    pub fn from_network(net: &InterconnectedNetwork, constants: Option<&DiffusionConstants>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                let directed = !l.is_undirected();
                let w = l.adjacency();
                let mut triplets = Vec::new();
                for i in 0..w.nrows() {
                    for j in 0..w.ncols() {
                        if w[(i, j)] != 0.0 && (directed || i < j) {
                            triplets.push((i, j, w[(i, j)]));
                        }
                    }
                }
                LayerJson {
                    id: l.id(),
                    kind: l.kind(),
                    nodes: l.node_ids().to_vec(),
                    adjacency: AdjacencyJson::Sparse { triplets },
                    directed,
                }
            })
            .collect();
        let mut couplings = Vec::new();
        for c in net.couplings() {
            let reverse = net
                .coupling(c.to(), c.from())
                .filter(|r| *r.matrix() == c.matrix().transpose());
            if reverse.is_some() && c.from() > c.to() {
                continue;
            }
            let m = c.matrix();
            let mut triplets = Vec::new();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if m[(i, j)] != 0.0 {
                        triplets.push((i, j, m[(i, j)]));
                    }
                }
            }
            couplings.push(CouplingJson {
                from: c.from(),
                to: c.to(),
                matrix: triplets,
                directed: reverse.is_none(),
            });
        }
        Self {
            layers,
            couplings,
            constants: constants.map(ConstantsJson::from_constants),
        }
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<(InterconnectedNetwork, Option<DiffusionConstants>)> {
    let file: NetworkFile = serde_json::from_slice(&fs::read(path)?)?;
    file.to_network()
}

pub fn save_network(
    path: &Path,
    net: &InterconnectedNetwork,
    constants: Option<&DiffusionConstants>,
) -> Result<()> {
    let json = serde_json::to_vec_pretty(&NetworkFile::from_network(net, constants))?;
    write_atomic(path, &json)
}

/// `"{layer}:{node}"` labels in row order.
pub fn node_labels(net: &InterconnectedNetwork) -> Vec<String> {
    net.row_labels()
        .into_iter()
        .map(|(l, n)| format!("{l}:{n}"))
        .collect()
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn topic_header(prefix: &[&str], topics: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((1..=topics).map(|j| format!("x_{j}")))
        .collect()
}

/// Long-format state CSV for a whole series.
pub fn states_csv(labels: &[String], snapshots: &[StateMatrix]) -> Result<Vec<u8>> {
    let topics = snapshots.first().map_or(1, StateMatrix::topics);
    let rows = snapshots.iter().flat_map(|s| {
        labels.iter().enumerate().map(move |(i, label)| {
            let mut r = vec![label.clone(), s.time().to_string()];
            r.extend(s.values().row(i).iter().map(|v| v.to_string()));
            r
        })
    });
    csv_bytes(&topic_header(&["node_id", "t"], topics), rows)
}

pub fn save_states(path: &Path, labels: &[String], snapshots: &[StateMatrix]) -> Result<()> {
    write_atomic(path, &states_csv(labels, snapshots)?)
}

/// Reads a long-format state CSV into snapshots ordered by time, with rows
/// placed according to `labels`.
pub fn load_states(path: &Path, labels: &[String]) -> Result<Vec<StateMatrix>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "node_id" || &headers[1] != "t" {
        return invalid("state CSV header must start with node_id,t,x_1");
    }
    let topics = headers.len() - 2;
    let row_of: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut by_time: BTreeMap<u64, (f64, DMatrix<f64>, Vec<bool>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = *row_of
            .get(&rec[0])
            .ok_or_else(|| Error::UnknownId(format!("node {:?} in state CSV", &rec[0])))?;
        let t: f64 = rec[1]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad time {:?}", &rec[1])))?;
        // order-preserving key for finite floats
        let bits = t.to_bits();
        let key = if t.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let entry = by_time
            .entry(key)
            .or_insert_with(|| (t, DMatrix::zeros(labels.len(), topics), vec![false; labels.len()]));
        if entry.2[row] {
            return invalid(format!("node {:?} repeated at t={t}", &rec[0]));
        }
        entry.2[row] = true;
        for j in 0..topics {
            entry.1[(row, j)] = rec[j + 2]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad value {:?}", &rec[j + 2])))?;
        }
    }
    by_time
        .into_values()
        .map(|(t, m, seen)| {
            if let Some(i) = seen.iter().position(|s| !s) {
                return invalid(format!("node {:?} missing at t={t}", labels[i]));
            }
            StateMatrix::new(m, t)
        })
        .collect()
}

pub fn load_series(path: &Path, labels: &[String], train_len: Option<usize>) -> Result<SnapshotSeries> {
    let snaps = load_states(path, labels)?;
    let n = snaps.len();
    SnapshotSeries::with_split(snaps, train_len.unwrap_or(n))
}

pub fn save_assignment(path: &Path, a: &DocumentAssignment) -> Result<()> {
    let rows = a.pairs().map(|(x, y)| vec![x.to_string(), y.to_string()]);
    write_atomic(path, &csv_bytes(&["agent_id".into(), "document_id".into()], rows)?)
}

pub fn load_assignment(path: &Path) -> Result<DocumentAssignment> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut a = DocumentAssignment::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return invalid("assignment rows must be agent_id,document_id");
        }
        a.assign(&rec[0], &rec[1]);
    }
    Ok(a)
}

/// Dense matrix CSV: a `rows,cols` shape line, then one line per row.
pub fn matrix_csv(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let shape = lines.next().ok_or_else(|| Error::InvalidInput("empty matrix file".into()))?;
    let dims: Vec<usize> = shape
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("bad shape line {shape:?}")))?;
    let [r, c] = dims[..] else {
        return invalid(format!("bad shape line {shape:?}"));
    };
    let mut m = DMatrix::zeros(r, c);
    for i in 0..r {
        let line = lines
            .next()
            .ok_or_else(|| Error::Dimension(format!("matrix file has fewer than {r} rows")))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidInput(format!("bad matrix row {i}")))?;
        if vals.len() != c {
            return Err(Error::Dimension(format!("row {i} has {} values, expected {c}", vals.len())));
        }
        for (j, v) in vals.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Generic CSV table writer used by the experiment outputs.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    csv_bytes(
        &header.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()),
    )
}

/// Reads a numeric table written by [`table_csv`].
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header, rows))
}

/// Long-format simulation output `path_id,step,t,node_id,x_1..x_T`.
pub fn simulation_csv(labels: &[String], paths: &[Vec<StateMatrix>]) -> Result<Vec<u8>> {
    let topics = paths
        .first()
        .and_then(|p| p.first())
        .map_or(1, StateMatrix::topics);
    let rows = paths.iter().enumerate().flat_map(|(pid, path)| {
        path.iter().enumerate().flat_map(move |(step, s)| {
            labels.iter().enumerate().map(move |(i, label)| {
                let mut r = vec![pid.to_string(), step.to_string(), s.time().to_string(), label.clone()];
                r.extend(s.values().row(i).iter().map(|v| v.to_string()));
                r
            })
        })
    });
    csv_bytes(&topic_header(&["path_id", "step", "t", "node_id"], topics), rows)
}

/// Ensemble summary `node_id,stat,x_1..x_T` with `stat` in {mean, variance}.
pub fn ensemble_summary_csv(
    labels: &[String],
    mean: &DMatrix<f64>,
    variance: &DMatrix<f64>,
) -> Result<Vec<u8>> {
    let rows = [("mean", mean), ("variance", variance)]
        .into_iter()
        .flat_map(|(stat, m)| {
            labels.iter().enumerate().map(move |(i, label)| {
                let mut r = vec![label.clone(), stat.to_string()];
                r.extend(m.row(i).iter().map(|v| v.to_string()));
                r
            })
        });
    csv_bytes(&topic_header(&["node_id", "stat"], mean.ncols()), rows)
}

pub fn mask_csv(labels: &[String], mask: &[bool]) -> Result<Vec<u8>> {
    let rows = labels
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| vec![l.clone()]);
    csv_bytes(&["node_id".to_string()], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    const SAMPLE: &str = r#"{
      "layers": [
        { "id": 1, "kind": "agent", "nodes": ["a0", "a1"], "adjacency": [[0, 1], [1, 0]] },
        { "id": 2, "kind": "information", "nodes": ["d0", "d1", "d2"],
          "adjacency": { "triplets": [[0, 1, 0.5], [1, 2, 2.0]] } }
      ],
      "couplings": [ { "from": 1, "to": 2, "matrix": [[0, 0, 1.0], [1, 2, 1.0]] } ],
      "constants": { "intra": { "1": 1.0, "2": 0.5 }, "inter": { "1,2": 0.2 } }
    }"#;

    #[test]
    fn parse_sample_network() {
        let file: NetworkFile = serde_json::from_str(SAMPLE).unwrap();
        let (net, c) = file.to_network().unwrap();
        assert_eq!(net.node_count(), 5);
        assert_eq!(net.layer(2).unwrap().adjacency()[(2, 1)], 2.0);
        assert_eq!(net.couplings().len(), 2);
        assert!(net.is_undirected());
        let c = c.unwrap();
        assert_eq!(c.inter(2, 1), Some(0.2));
        // write and re-read
        let back = NetworkFile::from_network(&net, Some(&c));
        let (net2, c2) = back.to_network().unwrap();
        assert_eq!(net, net2);
        assert_eq!(c2.unwrap(), c);
    }

    #[test]
    fn bad_triplet_rejected() {
        let bad = SAMPLE.replace("[1, 2, 2.0]", "[1, 7, 2.0]");
        let file: NetworkFile = serde_json::from_str(&bad).unwrap();
        assert!(file.to_network().is_err());
        let neg = SAMPLE.replace("[0, 1, 0.5]", "[0, 1, -0.5]");
        let file: NetworkFile = serde_json::from_str(&neg).unwrap();
        assert!(file.to_network().is_err());
    }

    #[test]
    fn states_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<String> = vec!["1:a".into(), "1:b".into()];
        let snaps = vec![
            StateMatrix::new(dmatrix![0.1, 0.2; 0.3, 1.0 / 3.0], 0.0).unwrap(),
            StateMatrix::new(dmatrix![1e-17, -2.5; 7.0, 8.0], 0.5).unwrap(),
        ];
        let p = dir.path().join("s.csv");
        save_states(&p, &labels, &snaps).unwrap();
        assert_eq!(load_states(&p, &labels).unwrap(), snaps);
        let missing = load_states(&p, &labels[..1]);
        assert!(missing.is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let m = dmatrix![1.0, -0.1; 1e300, 0.0; 3.25, f64::MIN_POSITIVE];
        let back = parse_matrix_csv(std::str::from_utf8(&matrix_csv(&m)).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(parse_matrix_csv("2,2\n1,2\n").is_err());
    }

    #[test]
    fn assignment_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = DocumentAssignment::new();
        a.assign("a0", "d1");
        a.assign("a0", "d2");
        a.assign("a1", "d0");
        let p = dir.path().join("a.csv");
        save_assignment(&p, &a).unwrap();
        assert_eq!(load_assignment(&p).unwrap(), a);
    }
}
