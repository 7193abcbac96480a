//! Ground truth by brute force: the probability of an event is the sum,
//! over all outcomes of the elementary label events, of the outcome weight
//! times the deterministic network evaluation. Everything else in the crate
//! is checked against this.

use std::collections::BTreeMap;

use num_rational::BigRational;
use thiserror::Error;

use crate::atom::{Atom, Scalar, Valuation};
use crate::cpt::CptNetwork;
use crate::infer::Literal;
use crate::network::{Label, Network, NodeKind};

pub const DEFAULT_ATOM_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OracleError {
    #[error("{count} atoms exceed the enumeration cap of {cap}")]
    TooManyAtoms { count: usize, cap: usize },
    #[error("valuation does not cover {atom}")]
    MissingAtom { atom: Atom },
    #[error("no node named {id}")]
    UnknownNode { id: String },
}

struct PreparedLink {
    parent: usize,
    label: Option<usize>,
    inhibitory: bool,
}

struct PreparedNode {
    kind: NodeKind,
    joint: Option<usize>,
    links: Vec<PreparedLink>,
}

/// Network with atoms and parents resolved to indices, so the inner loop
/// is all array lookups.
struct Prepared {
    atoms: Vec<Atom>,
    order: Vec<PreparedNode>,
    slot: BTreeMap<String, usize>,
}

impl Prepared {
    fn build(net: &Network, cap: usize) -> Result<Prepared, OracleError> {
        let atoms: Vec<Atom> = net.atoms().into_iter().collect();
        if atoms.len() > cap {
            return Err(OracleError::TooManyAtoms {
                count: atoms.len(),
                cap,
            });
        }
        let atom_slot: BTreeMap<&Atom, usize> =
            atoms.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let slot: BTreeMap<String, usize> = net
            .topo()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let resolve = |label: &Label| label.atom().map(|a| atom_slot[a]);
        let order = net
            .topo()
            .iter()
            .map(|id| {
                let n = net.node(id).expect("topo ids resolve");
                PreparedNode {
                    kind: n.kind,
                    joint: n.joint_label.as_ref().and_then(&resolve),
                    links: n
                        .links
                        .iter()
                        .map(|l| PreparedLink {
                            parent: slot[&l.from],
                            label: resolve(&l.label),
                            inhibitory: l.inhibitory,
                        })
                        .collect(),
                }
            })
            .collect();
        Ok(Prepared { atoms, order, slot })
    }

    /// Deterministic truth values for every node, given which label events
    /// succeeded. Roots are true; a link fires when its label succeeded and
    /// its parent has the demanded value; AND further needs its joint label.
    fn evaluate(&self, succeeded: u64, values: &mut Vec<bool>) {
        values.clear();
        for node in &self.order {
            let success = |slot: Option<usize>| slot.map_or(true, |i| succeeded >> i & 1 == 1);
            let fires = |l: &PreparedLink| {
                success(l.label) && (values[l.parent] != l.inhibitory)
            };
            let value = match node.kind {
                NodeKind::Root => true,
                NodeKind::And => success(node.joint) && node.links.iter().all(fires),
                NodeKind::Or => node.links.iter().any(fires),
                NodeKind::Not => success(node.joint) && node.links.iter().all(fires),
            };
            values.push(value);
        }
    }
}

fn enumerate_with<S: Scalar>(
    net: &Network,
    lits: &[Literal],
    v: &BTreeMap<Atom, S>,
    cap: usize,
) -> Result<S, OracleError> {
    let prepared = Prepared::build(net, cap)?;
    let mut wanted = Vec::with_capacity(lits.len());
    for lit in lits {
        match prepared.slot.get(&lit.node) {
            Some(&i) => wanted.push((i, lit.positive)),
            None => {
                return Err(OracleError::UnknownNode {
                    id: lit.node.clone(),
                })
            }
        }
    }
    let mut on = Vec::with_capacity(prepared.atoms.len());
    let mut off = Vec::with_capacity(prepared.atoms.len());
    for a in &prepared.atoms {
        match v.get(a) {
            Some(p) => {
                on.push(p.clone());
                off.push(S::one().sub(p));
            }
            None => return Err(OracleError::MissingAtom { atom: a.clone() }),
        }
    }
    let m = prepared.atoms.len();
    let mut total = S::zero();
    let mut values = Vec::with_capacity(prepared.order.len());
    for succeeded in 0u64..1 << m {
        prepared.evaluate(succeeded, &mut values);
        if !wanted.iter().all(|&(i, pos)| values[i] == pos) {
            continue;
        }
        let mut weight = S::one();
        for i in 0..m {
            let p = if succeeded >> i & 1 == 1 {
                &on[i]
            } else {
                &off[i]
            };
            weight = weight.mul(p);
        }
        total = total.add(&weight);
    }
    Ok(total)
}

pub fn enumerate_probability(
    net: &Network,
    lits: &[Literal],
    v: &Valuation,
) -> Result<f64, OracleError> {
    let map: BTreeMap<Atom, f64> = v.iter().map(|(a, p)| (a.clone(), p)).collect();
    enumerate_with(net, lits, &map, DEFAULT_ATOM_CAP)
}

/// Exact enumeration; valuations read off floats are dyadic rationals, so
/// golden values come out as literal fractions.
pub fn enumerate_probability_exact(
    net: &Network,
    lits: &[Literal],
    v: &BTreeMap<Atom, BigRational>,
) -> Result<BigRational, OracleError> {
    enumerate_with(net, lits, v, DEFAULT_ATOM_CAP)
}

fn chain_rule_with<S: Scalar>(
    cpt: &CptNetwork,
    lits: &[Literal],
    entry: impl Fn(f64) -> S,
    cap: usize,
) -> Result<S, OracleError> {
    let n = cpt.nodes.len();
    if n > cap {
        return Err(OracleError::TooManyAtoms { count: n, cap });
    }
    let slot: BTreeMap<&str, usize> = cpt
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| (node.id.as_str(), i))
        .collect();
    let mut wanted = Vec::with_capacity(lits.len());
    for lit in lits {
        match slot.get(lit.node.as_str()) {
            Some(&i) => wanted.push((i, lit.positive)),
            None => {
                return Err(OracleError::UnknownNode {
                    id: lit.node.clone(),
                })
            }
        }
    }
    let tables: Vec<(Vec<usize>, Vec<S>)> = cpt
        .nodes
        .iter()
        .map(|node| {
            let parents = node.parents.iter().map(|p| slot[p.as_str()]).collect();
            let rows = node.table.iter().map(|&t| entry(t)).collect();
            (parents, rows)
        })
        .collect();
    let mut total = S::zero();
    for assignment in 0u64..1 << n {
        if !wanted
            .iter()
            .all(|&(i, pos)| (assignment >> i & 1 == 1) == pos)
        {
            continue;
        }
        let mut weight = S::one();
        for (i, (parents, rows)) in tables.iter().enumerate() {
            let row = parents
                .iter()
                .enumerate()
                .fold(0usize, |acc, (bit, &p)| {
                    acc | ((assignment >> p & 1) as usize) << bit
                });
            let theta = &rows[row];
            if assignment >> i & 1 == 1 {
                weight = weight.mul(theta);
            } else {
                weight = weight.mul(&S::one().sub(theta));
            }
        }
        total = total.add(&weight);
    }
    Ok(total)
}

/// Independent ground truth for CPT networks: the plain chain-rule sum over
/// all joint assignments, straight off the tables.
pub fn chain_rule_probability(cpt: &CptNetwork, lits: &[Literal]) -> Result<f64, OracleError> {
    chain_rule_with(cpt, lits, |t| t, DEFAULT_ATOM_CAP)
}

pub fn chain_rule_probability_exact(
    cpt: &CptNetwork,
    lits: &[Literal],
) -> Result<BigRational, OracleError> {
    chain_rule_with(
        cpt,
        lits,
        |t| BigRational::from_float(t).expect("table entries are finite"),
        DEFAULT_ATOM_CAP,
    )
}
