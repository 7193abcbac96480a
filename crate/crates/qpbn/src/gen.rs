//! Random instances for property tests: expressions, networks, valuations,
//! formulas, tables. Generators promise validity, not any particular
//! distribution.

use rand::seq::index;
use rand::Rng;

use crate::atom::{Atom, Valuation};
use crate::cpt::{CptNetwork, CptNode};
use crate::expr::{Qp, Sign};
use crate::infer::Literal;
use crate::network::{Label, Link, Network, NodeKind, NodeSpec};
use crate::sat::{Clause, CnfFormula, Lit};

/// Free-form signed expression tree. Useful for exercising rewrite and
/// expansion plumbing, but the outputs range over a strictly larger class
/// than the gate algebra: a sum like a+b squares to a+2ab+b, so the product
/// laws (idempotency, annihilation, decoupling) do not apply to everything
/// this returns. Draw from [`random_nc_qp`] when a law needs them.
pub fn random_qp(rng: &mut impl Rng, depth: usize, atoms: &[Atom]) -> Qp {
    assert!(!atoms.is_empty());
    if depth == 0 {
        if rng.random_bool(0.05) {
            return if rng.random_bool(0.5) {
                Qp::one()
            } else {
                Qp::zero()
            };
        }
        let k = rng.random_range(1..=2.min(atoms.len()));
        return Qp::monomial(
            index::sample(rng, atoms.len(), k)
                .into_iter()
                .map(|i| atoms[i].clone()),
        );
    }
    match rng.random_range(0..8) {
        0 | 1 => Qp::one_minus(random_qp(rng, depth - 1, atoms)),
        2..=4 => {
            let k = rng.random_range(2..=3);
            Qp::weak(
                (0..k)
                    .map(|_| random_qp(rng, depth - 1, atoms))
                    .collect::<Vec<_>>(),
            )
        }
        5 | 6 => {
            let k = rng.random_range(2..=3);
            Qp::sum(
                (0..k)
                    .map(|_| {
                        let sign = if rng.random_bool(0.6) {
                            Sign::Pos
                        } else {
                            Sign::Neg
                        };
                        (sign, random_qp(rng, depth - 1, atoms))
                    })
                    .collect::<Vec<_>>(),
            )
        }
        _ => random_qp(rng, 0, atoms),
    }
}

/// Random expression in negation-conjunction form: monomials, complements,
/// and weak products, no free-form sums. Event and marginal expressions
/// always have this shape, and it is exactly the class the product laws
/// quantify over. Its signature mark: the expansion evaluates to 0 or 1
/// once every atom is set to 1.
pub fn random_nc_qp(rng: &mut impl Rng, depth: usize, atoms: &[Atom]) -> Qp {
    assert!(!atoms.is_empty());
    if depth == 0 {
        if rng.random_bool(0.05) {
            return if rng.random_bool(0.5) {
                Qp::one()
            } else {
                Qp::zero()
            };
        }
        let k = rng.random_range(1..=2.min(atoms.len()));
        return Qp::monomial(
            index::sample(rng, atoms.len(), k)
                .into_iter()
                .map(|i| atoms[i].clone()),
        );
    }
    match rng.random_range(0..8) {
        0..=2 => Qp::one_minus(random_nc_qp(rng, depth - 1, atoms)),
        3..=6 => {
            let k = rng.random_range(2..=3);
            Qp::weak(
                (0..k)
                    .map(|_| random_nc_qp(rng, depth - 1, atoms))
                    .collect::<Vec<_>>(),
            )
        }
        _ => random_nc_qp(rng, 0, atoms),
    }
}

#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub max_nodes: usize,
    pub max_atoms: usize,
    pub max_parents: usize,
    /// Forbid NOT nodes and inhibitory links.
    pub ordinary_only: bool,
}

impl Default for NetworkParams {
    fn default() -> NetworkParams {
        NetworkParams {
            max_nodes: 10,
            max_atoms: 12,
            max_parents: 3,
            ordinary_only: false,
        }
    }
}

/// Fresh label symbols a0, a1, ... until the cap, then unit labels.
struct Labels {
    next: usize,
    cap: usize,
}

impl Labels {
    fn fresh(&mut self) -> Label {
        if self.next == self.cap {
            return Label::One;
        }
        self.next += 1;
        Label::sym(&format!("a{}", self.next - 1))
    }
}

pub fn random_network(rng: &mut impl Rng, params: &NetworkParams) -> Network {
    assert!(params.max_parents >= 2);
    let n = rng.random_range(2..=params.max_nodes.max(2));
    let mut labels = Labels {
        next: 0,
        cap: params.max_atoms,
    };
    let mut nodes = vec![NodeSpec::root("n0")];
    for i in 1..n {
        let id = format!("n{i}");
        let kind = match rng.random_range(0..20) {
            0..=2 => NodeKind::Root,
            3..=10 => NodeKind::Or,
            11..=16 if i >= 2 => NodeKind::And,
            17..=19 if !params.ordinary_only => NodeKind::Not,
            _ => NodeKind::Or,
        };
        let node = match kind {
            NodeKind::Root => NodeSpec::root(&id),
            NodeKind::Or => {
                let k = rng.random_range(1..=params.max_parents.min(i));
                let links: Vec<Link> = index::sample(rng, i, k)
                    .into_iter()
                    .map(|p| {
                        let from = format!("n{p}");
                        let label = if rng.random_bool(0.15) {
                            Label::One
                        } else {
                            labels.fresh()
                        };
                        if !params.ordinary_only && rng.random_bool(0.2) {
                            Link::inhibitory(&from, label)
                        } else {
                            Link::ordinary(&from, label)
                        }
                    })
                    .collect();
                NodeSpec::or(&id, links)
            }
            NodeKind::And => {
                let k = rng.random_range(2..=params.max_parents.min(i));
                let joint = if rng.random_bool(0.25) {
                    Label::One
                } else {
                    labels.fresh()
                };
                let parents: Vec<(String, bool)> = index::sample(rng, i, k)
                    .into_iter()
                    .map(|p| {
                        (
                            format!("n{p}"),
                            !params.ordinary_only && rng.random_bool(0.2),
                        )
                    })
                    .collect();
                NodeSpec::and(&id, joint, parents.iter().map(|(p, inh)| (p.as_str(), *inh)))
            }
            NodeKind::Not => {
                let from = format!("n{}", rng.random_range(0..i));
                let label = if rng.random_bool(0.15) {
                    Label::One
                } else {
                    labels.fresh()
                };
                NodeSpec::not(&id, &from, label)
            }
        };
        nodes.push(node);
    }
    Network::from_nodes(nodes).expect("generated nodes satisfy the structural rules")
}

/// Values stay inside [0.05, 0.95] so conditioning stays away from zero
/// evidence.
pub fn random_valuation(rng: &mut impl Rng, atoms: impl IntoIterator<Item = Atom>) -> Valuation {
    Valuation::new(
        atoms
            .into_iter()
            .map(|a| (a, rng.random_range(0.05..=0.95))),
    )
    .expect("generated values are in range")
}

pub fn random_literals(rng: &mut impl Rng, net: &Network, max: usize) -> Vec<Literal> {
    let ids: Vec<&str> = net.nodes().iter().map(|n| n.id.as_str()).collect();
    let k = rng.random_range(1..=max.min(ids.len()));
    index::sample(rng, ids.len(), k)
        .into_iter()
        .map(|i| {
            if rng.random_bool(0.7) {
                Literal::pos(ids[i])
            } else {
                Literal::neg(ids[i])
            }
        })
        .collect()
}

pub fn random_cnf(rng: &mut impl Rng, vars: usize, max_clauses: usize) -> CnfFormula {
    assert!(vars >= 1);
    let variables: Vec<String> = (1..=vars).map(|i| format!("v{i}")).collect();
    let m = rng.random_range(1..=max_clauses.max(1));
    let clauses = (0..m)
        .map(|_| {
            let width = rng.random_range(1..=3.min(vars));
            let picked = index::sample(rng, vars, width);
            Clause::new(picked.into_iter().map(|i| Lit {
                var: variables[i].clone(),
                positive: rng.random_bool(0.5),
            }))
        })
        .collect();
    CnfFormula::new(variables, clauses).expect("generated clauses use declared variables")
}

pub fn random_cpt(rng: &mut impl Rng, max_nodes: usize, max_parents: usize) -> CptNetwork {
    let n = rng.random_range(1..=max_nodes.max(1));
    let nodes = (0..n)
        .map(|i| {
            let k = rng.random_range(0..=max_parents.min(i));
            let parents: Vec<String> = index::sample(rng, i.max(1), k)
                .into_iter()
                .map(|p| format!("x{p}"))
                .collect();
            let table = (0..1usize << k)
                .map(|_| match rng.random_range(0..10) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random_range(0.0..1.0),
                })
                .collect();
            CptNode {
                id: format!("x{i}"),
                parents,
                table,
            }
        })
        .collect();
    CptNetwork { nodes }
}
