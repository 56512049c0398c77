//! Topic-state matrices and agent initialization from documents.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::{dimension, invalid, Error, Result};

/// A length-T real feature vector attached to one node.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVector(DVector<f64>);

impl TopicVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("topic vector must have at least one entry");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("topic vector has non-finite entries");
        }
        Ok(Self(values))
    }

    pub fn topics(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// P×T matrix of node states at one time point. Rows follow the network's
/// layer-major node ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    values: DMatrix<f64>,
    time: f64,
}

impl StateMatrix {
    pub fn new(values: DMatrix<f64>, time: f64) -> Result<Self> {
        if values.ncols() == 0 {
            return invalid("state matrix needs at least one topic column");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("state matrix has non-finite entries");
        }
        if !time.is_finite() {
            return invalid(format!("state timestamp {time} is not finite"));
        }
        Ok(Self { values, time })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn topics(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, node: usize) -> TopicVector {
        TopicVector(self.values.row(node).transpose())
    }

    pub fn expect_nodes(&self, p: usize) -> Result<()> {
        if self.nodes() != p {
            return dimension(format!("state has {} rows, expected {p}", self.nodes()));
        }
        Ok(())
    }
}

/// Which documents each agent produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentAssignment {
    docs: BTreeMap<String, BTreeSet<String>>,
}

impl DocumentAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, agent: impl Into<String>, document: impl Into<String>) {
        self.docs
            .entry(agent.into())
            .or_default()
            .insert(document.into());
    }

    pub fn documents_of(&self, agent: &str) -> Option<&BTreeSet<String>> {
        self.docs.get(agent)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.docs
            .iter()
            .flat_map(|(a, ds)| ds.iter().map(move |d| (a.as_str(), d.as_str())))
    }
}

/// Agent rows produced by [`init_agent_states`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStates {
    pub states: DMatrix<f64>,
    /// Agents without documents; their rows are zero.
    pub without_documents: Vec<String>,
}

/// Each agent's state is the mean of its documents' rows.
///
/// `doc_ids[r]` labels row `r` of `doc_states`. Agents with no documents
/// get the zero vector and are listed in [`AgentStates::without_documents`].
pub fn init_agent_states(
    assignment: &DocumentAssignment,
    agent_ids: &[String],
    doc_ids: &[String],
    doc_states: &DMatrix<f64>,
) -> Result<AgentStates> {
    if doc_ids.len() != doc_states.nrows() {
        return dimension(format!(
            "{} document ids for {} document rows",
            doc_ids.len(),
            doc_states.nrows()
        ));
    }
    let rows: HashMap<&str, usize> = doc_ids
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let t = doc_states.ncols();
    let mut states = DMatrix::zeros(agent_ids.len(), t);
    let mut without_documents = Vec::new();
    for (i, agent) in agent_ids.iter().enumerate() {
        let docs = match assignment.documents_of(agent) {
            Some(d) if !d.is_empty() => d,
            _ => {
                without_documents.push(agent.clone());
                continue;
            }
        };
        let mut acc = nalgebra::RowDVector::zeros(t);
        for d in docs {
            let r = rows
                .get(d.as_str())
                .ok_or_else(|| Error::UnknownId(format!("document {d:?} of agent {agent:?}")))?;
            acc += doc_states.row(*r);
        }
        states.set_row(i, &(acc / docs.len() as f64));
    }
    Ok(AgentStates {
        states,
        without_documents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn two_point_mean() {
        let mut a = DocumentAssignment::new();
        a.assign("a0", "d0");
        a.assign("a0", "d1");
        let docs = dmatrix![1.0, 0.0; 0.0, 1.0];
        let out = init_agent_states(&a, &ids("a", 1), &ids("d", 2), &docs).unwrap();
        assert_eq!(out.states, dmatrix![0.5, 0.5]);
        assert!(out.without_documents.is_empty());
    }

    #[test]
    fn single_doc_is_identity_and_empty_is_zero() {
        let mut a = DocumentAssignment::new();
        a.assign("a0", "d1");
        let docs = dmatrix![1.0, 2.0, 3.0; 0.25, -4.0, 7.5];
        let out = init_agent_states(&a, &ids("a", 2), &ids("d", 2), &docs).unwrap();
        assert_eq!(out.states.row(0), docs.row(1));
        assert_eq!(out.states.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(out.without_documents, vec!["a1".to_string()]);
    }

    #[test]
    fn unknown_document_is_an_error() {
        let mut a = DocumentAssignment::new();
        a.assign("a0", "nope");
        let r = init_agent_states(&a, &ids("a", 1), &ids("d", 1), &dmatrix![1.0]);
        assert!(matches!(r, Err(Error::UnknownId(_))));
    }

    #[test]
    fn state_matrix_rejects_nan() {
        assert!(StateMatrix::new(dmatrix![f64::NAN], 0.0).is_err());
        assert!(TopicVector::new(DVector::zeros(0)).is_err());
    }

    proptest! {
        #[test]
        fn averaging_matches_loop_and_is_permutation_invariant(
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n_agents, n_docs, t) = (5, 20, 3);
            let docs = DMatrix::from_fn(n_docs, t, |_, _| rng.random::<f64>());
            let mut a = DocumentAssignment::new();
            let mut owner = vec![Vec::new(); n_agents];
            for d in 0..n_docs {
                let ag = rng.random_range(0..n_agents);
                a.assign(format!("a{ag}"), format!("d{d}"));
                owner[ag].push(d);
            }
            let doc_ids = ids("d", n_docs);
            let out = init_agent_states(&a, &ids("a", n_agents), &doc_ids, &docs).unwrap();
            for ag in 0..n_agents {
                for j in 0..t {
                    let expect = if owner[ag].is_empty() {
                        0.0
                    } else {
                        owner[ag].iter().map(|&d| docs[(d, j)]).sum::<f64>() / owner[ag].len() as f64
                    };
                    prop_assert!((out.states[(ag, j)] - expect).abs() < 1e-12);
                }
            }
            // permute document rows together with their ids
            let mut perm: Vec<usize> = (0..n_docs).collect();
            perm.shuffle(&mut rng);
            let pdocs = DMatrix::from_fn(n_docs, t, |r, c| docs[(perm[r], c)]);
            let pids: Vec<String> = perm.iter().map(|&r| doc_ids[r].clone()).collect();
            let out2 = init_agent_states(&a, &ids("a", n_agents), &pids, &pdocs).unwrap();
            prop_assert!((out.states - out2.states).amax() < 1e-12);
        }
    }
}
