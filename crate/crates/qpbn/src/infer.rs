//! From networks to quasi-probabilities: the P* recursion, joint and signed
//! events, conditionals, and the probe-based boost for small parameters.
//!
//! The recursion assigns every node a QP built from its parents' QPs with
//! weak products, so shared ancestors are shared subtrees, and idempotency
//! does the double-counting bookkeeping that ordinary algebra would get
//! wrong. Conditionals divide two eliminated event QPs, after cancelling
//! evidence factors that touch no other part of either side.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::atom::{Atom, Valuation};
use crate::expand::expand_capped;
use crate::expr::{EvalError, Qp};
use crate::network::{Label, Network, NodeKind};
use crate::rewrite::{eliminate_star, Budget, BudgetExceeded};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Literal {
    pub node: String,
    pub positive: bool,
}

impl Literal {
    pub fn pos(node: &str) -> Literal {
        Literal {
            node: node.into(),
            positive: true,
        }
    }

    pub fn neg(node: &str) -> Literal {
        Literal {
            node: node.into(),
            positive: false,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            write!(f, "!")?;
        }
        f.write_str(&self.node)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    targets: Vec<Literal>,
    evidence: Vec<Literal>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum InferError {
    #[error("no node named {id}")]
    UnknownNode { id: String },
    #[error("invalid query: {message}")]
    InvalidQuery { message: String },
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error("valuation does not cover {atom}")]
    MissingAtom { atom: Atom },
    #[error("boost denominator vanishes at the target parameter value")]
    DegenerateDenominator,
    #[error(transparent)]
    Budget(#[from] BudgetExceeded),
}

fn eval_error(e: EvalError) -> InferError {
    match e {
        EvalError::MissingAtom { atom } => InferError::MissingAtom {
            atom: Atom::new(atom),
        },
        EvalError::NotDecomposed { .. } => {
            unreachable!("eliminated expressions evaluate without weak products")
        }
    }
}

impl Query {
    /// Targets must be nonempty and no node may repeat within a side; the
    /// same node may appear on both sides (conditioning on a target is
    /// legal and resolves by idempotency).
    pub fn new(targets: Vec<Literal>, evidence: Vec<Literal>) -> Result<Query, InferError> {
        if targets.is_empty() {
            return Err(InferError::InvalidQuery {
                message: "no targets".into(),
            });
        }
        for (side, lits) in [("target", &targets), ("evidence", &evidence)] {
            let mut seen = BTreeSet::new();
            for lit in lits {
                if !seen.insert(&lit.node) {
                    return Err(InferError::InvalidQuery {
                        message: format!("{side} lists node {} twice", lit.node),
                    });
                }
            }
        }
        Ok(Query { targets, evidence })
    }

    pub fn event(targets: Vec<Literal>) -> Result<Query, InferError> {
        Query::new(targets, Vec::new())
    }

    /// Text form: `B | F, !G` conditions targets (left) on evidence
    /// (right); without `|` the query is an unconditional event.
    pub fn parse(text: &str) -> Result<Query, InferError> {
        let mut sides = text.split('|');
        let targets = sides.next().unwrap_or("");
        let evidence = sides.next();
        if sides.next().is_some() {
            return Err(InferError::InvalidQuery {
                message: "more than one |".into(),
            });
        }
        let parse_side = |side: &str| -> Result<Vec<Literal>, InferError> {
            side.split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    let (positive, name) = match tok.strip_prefix('!') {
                        Some(rest) => (false, rest.trim_start()),
                        None => (true, tok),
                    };
                    if name.is_empty() {
                        return Err(InferError::InvalidQuery {
                            message: "empty node name".into(),
                        });
                    }
                    Ok(Literal {
                        node: name.into(),
                        positive,
                    })
                })
                .collect()
        };
        let targets = parse_side(targets)?;
        let evidence = match evidence {
            Some(side) => parse_side(side)?,
            None => Vec::new(),
        };
        Query::new(targets, evidence)
    }

    pub fn targets(&self) -> &[Literal] {
        &self.targets
    }

    pub fn evidence(&self) -> &[Literal] {
        &self.evidence
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |lits: &[Literal]| {
            lits.iter()
                .map(Literal::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(f, "{}", join(&self.targets))?;
        if !self.evidence.is_empty() {
            write!(f, " | {}", join(&self.evidence))?;
        }
        Ok(())
    }
}

fn label_qp(label: &Label) -> Qp {
    match label {
        Label::One => Qp::one(),
        Label::Sym(a) => Qp::monomial([a.clone()]),
    }
}

/// The quasi-probability that `node` is true: Root is sure; AND multiplies
/// its joint label into the weak product of its parents' QPs; OR complements
/// the weak product of per-link misses; NOT prices the complement of its
/// parent. Inhibitory links contribute the complement of the parent's QP.
/// Sub-results are computed once per node and shared structurally.
pub fn marginal_qp(net: &Network, node: &str) -> Result<Qp, InferError> {
    if !net.contains(node) {
        return Err(InferError::UnknownNode { id: node.into() });
    }
    let mut memo: HashMap<&str, Qp> = HashMap::with_capacity(net.len());
    for id in net.topo() {
        let spec = net.node(id).expect("topo ids resolve");
        let parent = |from: &str, inhibitory: bool| {
            let qp = memo[from].clone();
            if inhibitory {
                Qp::one_minus(qp)
            } else {
                qp
            }
        };
        let qp = match spec.kind {
            NodeKind::Root => Qp::one(),
            NodeKind::And => {
                let joint = spec.joint_label.as_ref().expect("validated and node");
                let mut factors = vec![label_qp(joint)];
                factors.extend(spec.links.iter().map(|l| parent(&l.from, l.inhibitory)));
                Qp::weak(factors)
            }
            NodeKind::Or => {
                let misses = spec.links.iter().map(|l| {
                    Qp::one_minus(Qp::weak([
                        label_qp(&l.label),
                        parent(&l.from, l.inhibitory),
                    ]))
                });
                Qp::one_minus(Qp::weak(misses.collect::<Vec<_>>()))
            }
            NodeKind::Not => {
                let link = &spec.links[0];
                let mut factors = vec![label_qp(&link.label), parent(&link.from, true)];
                if let Some(joint) = &spec.joint_label {
                    factors.insert(0, label_qp(joint));
                }
                Qp::weak(factors)
            }
        };
        memo.insert(spec.id.as_str(), qp);
    }
    Ok(memo[node].clone())
}

/// Joint signed event: the weak product of each positive literal's marginal
/// and each negative literal's complement.
pub fn event_qp(net: &Network, lits: &[Literal]) -> Result<Qp, InferError> {
    if lits.is_empty() {
        return Err(InferError::InvalidQuery {
            message: "empty event".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for lit in lits {
        if !seen.insert(&lit.node) {
            return Err(InferError::InvalidQuery {
                message: format!("event lists node {} twice", lit.node),
            });
        }
    }
    let factors = lits
        .iter()
        .map(|lit| {
            let qp = marginal_qp(net, &lit.node)?;
            Ok(if lit.positive { qp } else { Qp::one_minus(qp) })
        })
        .collect::<Result<Vec<_>, InferError>>()?;
    Ok(Qp::weak(factors))
}

/// A conditional with its symbolic pieces: `value` is numerator over
/// denominator, both decomposed; `cancelled` lists evidence components that
/// were divided out of both sides before elimination.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditional {
    pub value: f64,
    pub numerator: Qp,
    pub denominator: Qp,
    pub cancelled: Vec<Qp>,
}

/// Numerator and denominator of the conditioning ratio, eliminated, plus
/// the evidence components cancelled symbolically from both.
struct Ratio {
    numerator: Qp,
    denominator: Qp,
    cancelled: Vec<Qp>,
}

fn build_ratio(net: &Network, q: &Query, budget: &Budget) -> Result<Ratio, InferError> {
    // Merge evidence into the targets; a node conditioned on itself appears
    // once (idempotency), opposite polarities make the joint impossible.
    let mut joint: Vec<(Literal, bool)> = q
        .targets()
        .iter()
        .map(|lit| (lit.clone(), false))
        .collect();
    let mut impossible = false;
    for lit in q.evidence() {
        match joint.iter().find(|(l, _)| l.node == lit.node) {
            Some((l, _)) => impossible |= l.positive != lit.positive,
            None => joint.push((lit.clone(), true)),
        }
    }

    let factor = |lit: &Literal| -> Result<Qp, InferError> {
        let qp = marginal_qp(net, &lit.node)?;
        Ok(if lit.positive { qp } else { Qp::one_minus(qp) })
    };
    let numerator_factors = joint
        .iter()
        .map(|(lit, _)| factor(lit))
        .collect::<Result<Vec<_>, _>>()?;
    let evidence_factors = q
        .evidence()
        .iter()
        .map(factor)
        .collect::<Result<Vec<_>, _>>()?;

    // Cancellation: group the numerator's factors by shared atoms; any
    // group made purely of evidence factors divides out of both sides.
    let mut groups: Vec<(BTreeSet<Atom>, Vec<usize>)> = Vec::new();
    for (i, f) in numerator_factors.iter().enumerate() {
        let atoms = f.atoms();
        let mut home: Option<usize> = None;
        let mut g = 0;
        while g < groups.len() {
            if groups[g].0.is_disjoint(&atoms) {
                g += 1;
                continue;
            }
            match home {
                None => {
                    groups[g].0.extend(atoms.iter().cloned());
                    groups[g].1.push(i);
                    home = Some(g);
                    g += 1;
                }
                Some(h) => {
                    let (a, is) = groups.remove(g);
                    groups[h].0.extend(a);
                    groups[h].1.extend(is);
                }
            }
        }
        if home.is_none() {
            groups.push((atoms, vec![i]));
        }
    }
    let mut kept_joint: Vec<Qp> = Vec::new();
    let mut cancelled_indices: BTreeSet<usize> = BTreeSet::new();
    let mut cancelled: Vec<Qp> = Vec::new();
    for (_, indices) in groups {
        if indices.iter().all(|&i| joint[i].1) {
            cancelled_indices.extend(indices.iter().copied());
            let fs: Vec<Qp> = indices.iter().map(|&i| numerator_factors[i].clone()).collect();
            cancelled.push(eliminate_star(&Qp::weak(fs), budget)?);
        } else {
            kept_joint.extend(indices.iter().map(|&i| numerator_factors[i].clone()));
        }
    }
    let kept_evidence: Vec<Qp> = q
        .evidence()
        .iter()
        .zip(evidence_factors)
        .filter(|(lit, _)| {
            let at = joint
                .iter()
                .position(|(l, _)| l.node == lit.node)
                .expect("evidence merged into joint");
            !cancelled_indices.contains(&at)
        })
        .map(|(_, f)| f)
        .collect();

    let numerator = if impossible {
        Qp::zero()
    } else {
        eliminate_star(&Qp::weak(kept_joint), budget)?
    };
    let denominator = eliminate_star(&Qp::weak(kept_evidence), budget)?;
    Ok(Ratio {
        numerator,
        denominator,
        cancelled,
    })
}

/// Conditional probability of the query's targets given its evidence.
/// Evidence factors unrelated to everything else cancel symbolically;
/// the rest is eliminated and evaluated numerically.
pub fn conditional_probability(
    net: &Network,
    q: &Query,
    v: &Valuation,
    budget: &Budget,
) -> Result<Conditional, InferError> {
    let ratio = build_ratio(net, q, budget)?;
    let mut evidence_value = ratio.denominator.evaluate(v).map_err(eval_error)?;
    for part in &ratio.cancelled {
        evidence_value *= part.evaluate(v).map_err(eval_error)?;
    }
    if evidence_value == 0.0 {
        return Err(InferError::ZeroEvidence);
    }
    let num = ratio.numerator.evaluate(v).map_err(eval_error)?;
    let den = ratio.denominator.evaluate(v).map_err(eval_error)?;
    Ok(Conditional {
        value: num / den,
        numerator: ratio.numerator,
        denominator: ratio.denominator,
        cancelled: ratio.cancelled,
    })
}

/// Numerator and denominator linear coefficients of the conditional as a
/// function of one atom's value: (c1 + c2 p) / (c3 + c4 p).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl BoostCoefficients {
    pub fn at(&self, p: f64) -> Option<f64> {
        let den = self.c3 + self.c4 * p;
        (den != 0.0).then(|| (self.c1 + self.c2 * p) / den)
    }
}

#[derive(Clone, Debug)]
pub struct Boosted {
    pub value: f64,
    pub coefficients: BoostCoefficients,
}

pub const DEFAULT_PROBES: (f64, f64) = (0.5, 1.0);

/// Evaluates the conditioning ratio at two comfortable probe values of one
/// atom, fits the (always linear) numerator and denominator, and reads the
/// ratio off at the atom's true value. This sidesteps cancellation loss
/// when the true value is very small.
pub fn boosted_conditional(
    net: &Network,
    q: &Query,
    v: &Valuation,
    boosted: &Atom,
    budget: &Budget,
) -> Result<Boosted, InferError> {
    boosted_conditional_with(net, q, v, boosted, DEFAULT_PROBES, budget)
}

pub fn boosted_conditional_with(
    net: &Network,
    q: &Query,
    v: &Valuation,
    boosted: &Atom,
    probes: (f64, f64),
    budget: &Budget,
) -> Result<Boosted, InferError> {
    let p0 = v.get(boosted).ok_or_else(|| InferError::MissingAtom {
        atom: boosted.clone(),
    })?;
    let (pa, pb) = probes;
    assert!(pa != pb, "probe values must differ");
    let ratio = build_ratio(net, q, budget)?;
    let eval = |e: &Qp, p: f64| -> Result<f64, InferError> {
        let mut probed = v.clone();
        probed.set(boosted.clone(), p).expect("probe in range");
        e.evaluate(&probed).map_err(eval_error)
    };
    // The cancelled evidence components divide out of the ratio at every
    // parameter value, so only a zero check is needed for them.
    let mut cancelled_at_p0 = 1.0;
    for part in &ratio.cancelled {
        cancelled_at_p0 *= eval(part, p0)?;
    }
    let (na, nb) = (eval(&ratio.numerator, pa)?, eval(&ratio.numerator, pb)?);
    let (da, db) = (eval(&ratio.denominator, pa)?, eval(&ratio.denominator, pb)?);
    let c2 = (nb - na) / (pb - pa);
    let c4 = (db - da) / (pb - pa);
    let coefficients = BoostCoefficients {
        c1: na - c2 * pa,
        c2,
        c3: da - c4 * pa,
        c4,
    };
    if cancelled_at_p0 * (coefficients.c3 + coefficients.c4 * p0) == 0.0 {
        return Err(InferError::DegenerateDenominator);
    }
    let value = coefficients.at(p0).expect("checked nonzero");
    Ok(Boosted {
        value,
        coefficients,
    })
}

/// Raw, decomposed, and (when it fits) expanded renderings of one node's
/// marginal QP; what the symbolic display surfaces print.
pub struct MarginalViews {
    pub raw: Qp,
    pub decomposed: Qp,
    pub expanded: Option<String>,
}

pub fn marginal_views(
    net: &Network,
    node: &str,
    budget: &Budget,
) -> Result<MarginalViews, InferError> {
    let raw = marginal_qp(net, node)?;
    let decomposed = eliminate_star(&raw, budget)?;
    let expanded = expand_capped(&raw, budget.term_cap)
        .ok()
        .map(|form| form.to_string());
    Ok(MarginalViews {
        raw,
        decomposed,
        expanded,
    })
}
