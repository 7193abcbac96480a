//! General boolean CPT networks and their translation into AND-OR-NOT form.
//!
//! A node with parents A1..An and table entry theta_b per parent assignment
//! b becomes an OR node fed by one probability-1 AND node per nonzero row;
//! the AND reaches ordinary links to the parents set in b and inhibitory
//! links to the rest, and its link into the OR carries a fresh symbol worth
//! theta_b. Zero rows contribute nothing: an OR node is false when none of
//! its parents fire.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::Atom;
use crate::network::{Label, Link, Network, NodeSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptNode {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    /// `table[r]` is P(node true | parents), where bit i of the row index r
    /// holds the value of `parents[i]` (parents[0] is the least significant
    /// bit). Roots have a single entry, their prior.
    pub table: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptNetwork {
    pub nodes: Vec<CptNode>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CptError {
    #[error("node {id}: table has {got} entries, needs 2^{parents} = {expected}")]
    BadTableLength {
        id: String,
        parents: usize,
        expected: usize,
        got: usize,
    },
    #[error("node {id}: table entry {row} is {value}, outside [0,1]")]
    EntryOutOfRange { id: String, row: usize, value: f64 },
    #[error("duplicate node id {id}")]
    DuplicateId { id: String },
    #[error("node {id} lists unknown parent {parent}")]
    UnknownParent { id: String, parent: String },
    #[error("cycle through {ids:?}")]
    Cycle { ids: Vec<String> },
}

impl CptNetwork {
    pub fn validate(&self) -> Vec<CptError> {
        let mut out = Vec::new();
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(&n.id) {
                out.push(CptError::DuplicateId { id: n.id.clone() });
            }
        }
        for n in &self.nodes {
            for p in &n.parents {
                if !ids.contains(p.as_str()) {
                    out.push(CptError::UnknownParent {
                        id: n.id.clone(),
                        parent: p.clone(),
                    });
                }
            }
            let expected = 1usize << n.parents.len();
            if n.table.len() != expected {
                out.push(CptError::BadTableLength {
                    id: n.id.clone(),
                    parents: n.parents.len(),
                    expected,
                    got: n.table.len(),
                });
            }
            for (row, &value) in n.table.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    out.push(CptError::EntryOutOfRange {
                        id: n.id.clone(),
                        row,
                        value,
                    });
                }
            }
        }
        if let Some(ids) = self.cycle() {
            out.push(CptError::Cycle { ids });
        }
        out
    }

    fn cycle(&self) -> Option<Vec<String>> {
        let mut remaining: BTreeMap<&str, BTreeSet<&str>> = self
            .nodes
            .iter()
            .map(|n| (n.id.as_str(), n.parents.iter().map(String::as_str).collect()))
            .collect();
        loop {
            let ready: Vec<&str> = remaining
                .iter()
                .filter(|(_, ps)| ps.iter().all(|p| !remaining.contains_key(*p)))
                .map(|(id, _)| *id)
                .collect();
            if ready.is_empty() {
                break;
            }
            for id in ready {
                remaining.remove(id);
            }
        }
        if remaining.is_empty() {
            None
        } else {
            Some(remaining.keys().map(|s| s.to_string()).collect())
        }
    }

    /// Node ids with parents first; validated networks never fail this.
    pub fn topo(&self) -> Vec<String> {
        let mut placed: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        while order.len() < self.nodes.len() {
            let next = self
                .nodes
                .iter()
                .find(|n| {
                    !placed.contains(n.id.as_str())
                        && n.parents.iter().all(|p| placed.contains(p.as_str()))
                })
                .expect("acyclic");
            placed.insert(&next.id);
            order.push(next.id.clone());
        }
        order
    }

    pub fn node(&self, id: &str) -> Option<&CptNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

fn theta_name(id: &str, bits: Option<&str>) -> String {
    match bits {
        Some(bits) => format!("theta_{id}_{bits}"),
        None => format!("theta_{id}"),
    }
}

fn row_bits(row: usize, parents: usize) -> String {
    (0..parents)
        .map(|i| if row >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Converts a CPT network into an AND-OR-NOT network plus the table of
/// fresh symbols and their numeric values. Deterministic rows (0 or 1)
/// introduce no symbols.
pub fn from_cpt(cpt: &CptNetwork) -> Result<(Network, BTreeMap<Atom, f64>), CptError> {
    if let Some(first) = cpt.validate().into_iter().next() {
        return Err(first);
    }
    let mut symbols: BTreeMap<Atom, f64> = BTreeMap::new();
    let mut nodes: Vec<NodeSpec> = Vec::new();
    let mut priors: BTreeMap<String, Label> = BTreeMap::new();
    for n in &cpt.nodes {
        let arity = n.parents.len();
        // A node whose every row is zero can never be true; model it as a
        // root carrying a zero-valued prior symbol.
        if arity == 0 || n.table.iter().all(|&t| t == 0.0) {
            let theta = if arity == 0 { n.table[0] } else { 0.0 };
            nodes.push(NodeSpec::root(&n.id));
            if theta < 1.0 {
                let atom = Atom::new(&theta_name(&n.id, None));
                symbols.insert(atom.clone(), theta);
                priors.insert(n.id.clone(), Label::Sym(atom));
            }
            continue;
        }
        let mut links = Vec::new();
        for (row, &theta) in n.table.iter().enumerate() {
            if theta == 0.0 {
                continue;
            }
            let bits = row_bits(row, arity);
            let label = if theta == 1.0 {
                Label::One
            } else {
                let atom = Atom::new(&theta_name(&n.id, Some(&bits)));
                symbols.insert(atom.clone(), theta);
                Label::Sym(atom)
            };
            if arity == 1 {
                links.push(Link {
                    from: n.parents[0].clone(),
                    label,
                    inhibitory: row == 0,
                });
            } else {
                let and_id = format!("__and_{}_{}", n.id, bits);
                let parents = n
                    .parents
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.as_str(), row >> i & 1 == 0));
                nodes.push(NodeSpec::and(&and_id, Label::One, parents));
                links.push(Link {
                    from: and_id,
                    label,
                    inhibitory: false,
                });
            }
        }
        nodes.push(NodeSpec::or(&n.id, links));
    }
    let net = Network::from_nodes(nodes).expect("conversion emits valid shapes");
    let net = net.normalize_roots(&priors).expect("priors name roots");
    Ok((net, symbols))
}
