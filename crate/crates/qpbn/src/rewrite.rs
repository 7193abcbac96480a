//! `*`-elimination: rewriting weak products into evaluable form.
//!
//! Three expansion-preserving rules do the work:
//!
//! 1. book-keeping: a weak product whose factors share no atoms is an
//!    ordinary product, so split it into a strong product;
//! 2. resolution: a weak product with a factor `m` (or `1-m`) for a monomial
//!    `m` pins `m` to 1 (or 0) inside every other factor;
//! 3. decoupling: factors `(1-rho*rho_i)` sharing the monomial `rho` merge
//!    into `1 - rho*(1 - prod_i (1-rho_i))`.
//!
//! [`eliminate_star`] drives them to a fixpoint, distributing a weak product
//! over the sum with the fewest expanded terms when no rule applies, and
//! falling back to full multilinear expansion when the step budget runs out.
//! Every output is expansion-equal to its input; a successful run returns a
//! decomposed expression in which no atom occurs in two factors of any
//! remaining weak product, so ordinary arithmetic can evaluate it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::atom::Atom;
use crate::expand::{expand_capped, DEFAULT_TERM_CAP};
use crate::expr::{Qp, QpNode, Sign};

/// Resource limits for [`eliminate_star`]. `step_limit` bounds rewrite-loop
/// iterations (mostly relevant when distribution starts splitting sums);
/// `term_cap` bounds the multilinear fallback.
#[derive(Clone, Debug)]
pub struct Budget {
    pub step_limit: usize,
    pub term_cap: usize,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            step_limit: 4096,
            term_cap: DEFAULT_TERM_CAP,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("no weak product has the pivot or its complement as a factor")]
    PivotNotFound,
    #[error("factor {factor} does not have the shape 1-rho*rest")]
    ShapeMismatch { factor: String },
}

/// The elimination budget ran out. `partial` is the best rewrite reached;
/// it is still expansion-equal to the input, but the atoms listed in
/// `shared_atoms` still occur in more than one factor of some weak product.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("elimination budget exhausted; still-shared atoms: {shared_atoms:?}")]
pub struct BudgetExceeded {
    pub partial: Qp,
    pub shared_atoms: Vec<Atom>,
}

/// Splits every weak product of mutually unrelated factor groups into a
/// strong product of those groups.
pub fn rule_bookkeeping(e: &Qp) -> Qp {
    match e.node() {
        QpNode::Const(_) | QpNode::Monomial(_) => e.clone(),
        QpNode::OneMinus(x) => Qp::one_minus(rule_bookkeeping(x)),
        QpNode::Sum(ts) => Qp::sum(ts.iter().map(|(s, t)| (*s, rule_bookkeeping(t)))),
        QpNode::StrongProd(fs) => Qp::strong(fs.iter().map(rule_bookkeeping)),
        QpNode::WeakProd(fs) => {
            let rebuilt: Vec<Qp> = fs.iter().map(rule_bookkeeping).collect();
            let groups = components(&rebuilt);
            if groups.len() == 1 {
                Qp::weak(rebuilt)
            } else {
                Qp::strong(groups.into_iter().map(Qp::weak))
            }
        }
    }
}

/// Applies the resolution rule at every weak product that has the pivot (or
/// its complement) as a factor: the pivot is replaced by 1 (or 0) inside the
/// sibling factors. For a monomial pivot the substitution is atom-aware;
/// for anything else it replaces structurally equal subexpressions.
pub fn rule_resolution(e: &Qp, pivot: &Qp) -> Result<Qp, RuleError> {
    let complement = Qp::one_minus(pivot.clone());
    let mut applied = false;
    let out = resolve(e, pivot, &complement, &mut applied);
    if applied {
        Ok(out)
    } else {
        Err(RuleError::PivotNotFound)
    }
}

fn resolve(e: &Qp, pivot: &Qp, complement: &Qp, applied: &mut bool) -> Qp {
    match e.node() {
        QpNode::Const(_) | QpNode::Monomial(_) => e.clone(),
        QpNode::OneMinus(x) => Qp::one_minus(resolve(x, pivot, complement, applied)),
        QpNode::Sum(ts) => Qp::sum(
            ts.iter()
                .map(|(s, t)| (*s, resolve(t, pivot, complement, applied))),
        ),
        QpNode::StrongProd(fs) => {
            Qp::strong(fs.iter().map(|f| resolve(f, pivot, complement, applied)))
        }
        QpNode::WeakProd(fs) => {
            let positive = fs.iter().position(|f| f == pivot);
            let negative = fs.iter().position(|f| f == complement);
            let (at, as_one) = match (positive, negative) {
                (Some(i), _) => (Some(i), true),
                (None, Some(i)) => (Some(i), false),
                (None, None) => (None, false),
            };
            match at {
                None => Qp::weak(fs.iter().map(|f| resolve(f, pivot, complement, applied))),
                Some(i) => {
                    *applied = true;
                    let rewritten = fs.iter().enumerate().map(|(j, f)| {
                        if j == i {
                            f.clone()
                        } else {
                            pin_pivot(f, pivot, as_one)
                        }
                    });
                    Qp::weak(rewritten.collect::<Vec<_>>())
                }
            }
        }
    }
}

fn pin_pivot(f: &Qp, pivot: &Qp, as_one: bool) -> Qp {
    if let QpNode::Monomial(m) = pivot.node() {
        f.subst_monomial(m, as_one).unwrap_or_else(|| f.clone())
    } else {
        let replacement = Qp::constant(as_one);
        replace_equal(f, pivot, &replacement)
    }
}

fn replace_equal(e: &Qp, target: &Qp, replacement: &Qp) -> Qp {
    if e == target {
        return replacement.clone();
    }
    match e.node() {
        QpNode::Const(_) | QpNode::Monomial(_) => e.clone(),
        QpNode::OneMinus(x) => Qp::one_minus(replace_equal(x, target, replacement)),
        QpNode::Sum(ts) => Qp::sum(
            ts.iter()
                .map(|(s, t)| (*s, replace_equal(t, target, replacement))),
        ),
        QpNode::WeakProd(fs) => Qp::weak(
            fs.iter()
                .map(|f| replace_equal(f, target, replacement))
                .collect::<Vec<_>>(),
        ),
        QpNode::StrongProd(fs) => Qp::strong(
            fs.iter()
                .map(|f| replace_equal(f, target, replacement))
                .collect::<Vec<_>>(),
        ),
    }
}

/// Merges factors `1 - rho*rho_i` over the shared part `rho` into
/// `1 - rho*(1 - prod_i (1 - rho_i))`, one weak coupling instead of many.
pub fn rule_decoupling(factors: &[Qp], rho: &Qp) -> Result<Qp, RuleError> {
    let mut stripped = Vec::with_capacity(factors.len());
    for f in factors {
        let inner = match f.node() {
            QpNode::OneMinus(inner) => inner,
            _ => {
                return Err(RuleError::ShapeMismatch { factor: f.text() });
            }
        };
        match strip_factor(inner, rho) {
            Some(rest) => stripped.push(rest),
            None => return Err(RuleError::ShapeMismatch { factor: f.text() }),
        }
    }
    Ok(decoupled(rho.clone(), stripped))
}

fn decoupled(rho: Qp, stripped: Vec<Qp>) -> Qp {
    let product = Qp::weak(stripped.into_iter().map(Qp::one_minus).collect::<Vec<_>>());
    Qp::one_minus(Qp::weak([rho, Qp::one_minus(product)]))
}

/// Writes `inner` as `rho * rest` and returns `rest`, or `None` when `rho`
/// is not a factor. Monomial `rho`s may be buried in a larger monomial.
fn strip_factor(inner: &Qp, rho: &Qp) -> Option<Qp> {
    if inner == rho {
        return Some(Qp::one());
    }
    if let QpNode::Monomial(r) = rho.node() {
        return strip_monomial(inner, r);
    }
    if let QpNode::WeakProd(fs) = inner.node() {
        if let Some(i) = fs.iter().position(|f| f == rho) {
            let rest: Vec<Qp> = fs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, f)| f.clone())
                .collect();
            return Some(Qp::weak(rest));
        }
    }
    None
}

fn strip_monomial(inner: &Qp, rho: &BTreeSet<Atom>) -> Option<Qp> {
    match inner.node() {
        QpNode::Monomial(m) => {
            if rho.is_subset(m) {
                let rest: BTreeSet<Atom> = m.difference(rho).cloned().collect();
                Some(if rest.is_empty() {
                    Qp::one()
                } else {
                    Qp::monomial(rest)
                })
            } else {
                None
            }
        }
        QpNode::WeakProd(fs) | QpNode::StrongProd(fs) => {
            let covered: BTreeSet<Atom> = fs
                .iter()
                .filter_map(|f| match f.node() {
                    QpNode::Monomial(m) => Some(m.iter().cloned()),
                    _ => None,
                })
                .flatten()
                .collect();
            if !rho.is_subset(&covered) {
                return None;
            }
            let weak = matches!(inner.node(), QpNode::WeakProd(_));
            let rest: Vec<Qp> = fs
                .iter()
                .filter_map(|f| match f.node() {
                    QpNode::Monomial(m) => {
                        let kept: BTreeSet<Atom> = m.difference(rho).cloned().collect();
                        if kept.is_empty() {
                            None
                        } else {
                            Some(Qp::monomial(kept))
                        }
                    }
                    _ => Some(f.clone()),
                })
                .collect();
            Some(if weak { Qp::weak(rest) } else { Qp::strong(rest) })
        }
        _ => None,
    }
}

pub fn eliminate_star(e: &Qp, budget: &Budget) -> Result<Qp, BudgetExceeded> {
    let mut ctx = Elim {
        term_cap: budget.term_cap,
        steps_left: budget.step_limit,
        exhausted: false,
    };
    let out = ctx.eliminate(e);
    if ctx.exhausted {
        Err(BudgetExceeded {
            shared_atoms: out.shared_weak_atoms().into_iter().collect(),
            partial: out,
        })
    } else {
        debug_assert!(out.is_decomposed());
        Ok(out)
    }
}

/// [`eliminate_star`] with the default budget.
pub fn eliminate(e: &Qp) -> Result<Qp, BudgetExceeded> {
    eliminate_star(e, &Budget::default())
}

struct Elim {
    term_cap: usize,
    steps_left: usize,
    exhausted: bool,
}

impl Elim {
    fn eliminate(&mut self, e: &Qp) -> Qp {
        match e.node() {
            QpNode::Const(_) | QpNode::Monomial(_) => e.clone(),
            QpNode::OneMinus(x) => Qp::one_minus(self.eliminate(x)),
            QpNode::Sum(ts) => Qp::sum(
                ts.iter()
                    .map(|(s, t)| (*s, self.eliminate(t)))
                    .collect::<Vec<_>>(),
            ),
            QpNode::StrongProd(fs) => {
                Qp::strong(fs.iter().map(|f| self.eliminate(f)).collect::<Vec<_>>())
            }
            QpNode::WeakProd(fs) => {
                let factors: Vec<Qp> = fs.iter().map(|f| self.eliminate(f)).collect();
                self.reduce_weak(factors)
            }
        }
    }

    /// Reduces a weak product whose factors are each already decomposed.
    fn reduce_weak(&mut self, mut factors: Vec<Qp>) -> Qp {
        loop {
            factors = match normalize(factors) {
                None => return Qp::zero(),
                Some(fs) => fs,
            };
            if factors.len() <= 1 {
                return Qp::weak(factors);
            }
            let groups = components(&factors);
            if groups.len() > 1 {
                let parts: Vec<Qp> = groups
                    .into_iter()
                    .map(|g| self.reduce_weak(g))
                    .collect();
                return Qp::strong(parts);
            }
            if self.steps_left == 0 {
                return self.give_up(factors);
            }
            self.steps_left -= 1;
            if let Some(next) = resolution_step(&factors) {
                factors = next;
                continue;
            }
            if let Some(next) = self.decoupling_step(&factors) {
                factors = next;
                continue;
            }
            return self.distribute(factors);
        }
    }

    /// Decoupling on the atom shared by the most complement factors; the
    /// extracted `rho` is the largest monomial common to that group.
    fn decoupling_step(&mut self, factors: &[Qp]) -> Option<Vec<Qp>> {
        let parts: Vec<Option<BTreeSet<Atom>>> = factors
            .iter()
            .map(|f| match f.node() {
                QpNode::OneMinus(inner) => {
                    let part = monomial_part(inner);
                    (!part.is_empty()).then_some(part)
                }
                _ => None,
            })
            .collect();
        let mut by_atom: BTreeMap<&Atom, Vec<usize>> = BTreeMap::new();
        for (i, part) in parts.iter().enumerate() {
            if let Some(part) = part {
                for a in part {
                    by_atom.entry(a).or_default().push(i);
                }
            }
        }
        let (_, group) = by_atom
            .into_iter()
            .filter(|(_, is)| is.len() >= 2)
            .max_by_key(|(a, is)| (is.len(), std::cmp::Reverse(*a)))?;
        let mut rho: BTreeSet<Atom> = parts[group[0]].clone().unwrap();
        for &i in &group[1..] {
            rho = rho
                .intersection(parts[i].as_ref().unwrap())
                .cloned()
                .collect();
        }
        let rho_qp = Qp::monomial(rho);
        let grouped: Vec<Qp> = group.iter().map(|&i| factors[i].clone()).collect();
        let merged = rule_decoupling(&grouped, &rho_qp).expect("group factors have rho");
        let merged = self.eliminate(&merged);
        let mut next: Vec<Qp> = factors
            .iter()
            .enumerate()
            .filter(|(i, _)| !group.contains(i))
            .map(|(_, f)| f.clone())
            .collect();
        next.push(merged);
        Some(next)
    }

    /// Last resort: distribute the weak product over the factor with the
    /// fewest expanded terms and reduce each branch.
    fn distribute(&mut self, factors: Vec<Qp>) -> Qp {
        let probe_cap = 1 << 12;
        let chosen = factors
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f.node(), QpNode::OneMinus(_) | QpNode::Sum(_)))
            .min_by_key(|(_, f)| {
                expand_capped(f, probe_cap)
                    .map(|form| form.len())
                    .unwrap_or(usize::MAX)
            });
        let (at, f) = match chosen {
            Some((at, f)) => (at, f.clone()),
            None => return self.give_up(factors),
        };
        let rest: Vec<Qp> = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != at)
            .map(|(_, f)| f.clone())
            .collect();
        let terms: Vec<(Sign, Qp)> = match f.node() {
            QpNode::OneMinus(x) => vec![(Sign::Pos, Qp::one()), (Sign::Neg, x.clone())],
            QpNode::Sum(ts) => ts.clone(),
            _ => unreachable!("distribution picks complements or sums"),
        };
        let branches: Vec<(Sign, Qp)> = terms
            .into_iter()
            .map(|(sign, t)| {
                let mut branch = rest.clone();
                branch.push(t);
                (sign, self.reduce_weak(branch))
            })
            .collect();
        Qp::sum(branches)
    }

    /// Budget gone: expand outright if the term cap allows, otherwise flag
    /// exhaustion and hand back the still-coupled product.
    fn give_up(&mut self, factors: Vec<Qp>) -> Qp {
        let product = Qp::weak(factors);
        match expand_capped(&product, self.term_cap) {
            Ok(form) => form.to_qp(),
            Err(_) => {
                self.exhausted = true;
                product
            }
        }
    }
}

/// Drops unit factors, flattens nested weak and strong products, and merges
/// all monomial factors into one. `None` means the product is zero.
fn normalize(factors: Vec<Qp>) -> Option<Vec<Qp>> {
    let mut queue: Vec<Qp> = factors;
    queue.reverse();
    let mut monomial: BTreeSet<Atom> = BTreeSet::new();
    let mut rest: Vec<Qp> = Vec::new();
    while let Some(f) = queue.pop() {
        match f.node() {
            QpNode::Const(false) => return None,
            QpNode::Const(true) => {}
            QpNode::Monomial(m) => monomial.extend(m.iter().cloned()),
            QpNode::WeakProd(fs) | QpNode::StrongProd(fs) => {
                queue.extend(fs.iter().rev().cloned());
            }
            _ => rest.push(f),
        }
    }
    if !monomial.is_empty() {
        rest.insert(0, Qp::monomial(monomial));
    }
    Some(rest)
}

/// One round of resolution: the first monomial or complement-of-monomial
/// factor whose substitution changes a sibling wins.
fn resolution_step(factors: &[Qp]) -> Option<Vec<Qp>> {
    for (i, f) in factors.iter().enumerate() {
        let (pivot, as_one) = match f.node() {
            QpNode::Monomial(m) => (m.clone(), true),
            QpNode::OneMinus(x) => match x.node() {
                QpNode::Monomial(m) => (m.clone(), false),
                _ => continue,
            },
            _ => continue,
        };
        let mut changed = false;
        let next: Vec<Qp> = factors
            .iter()
            .enumerate()
            .map(|(j, g)| {
                if j == i {
                    g.clone()
                } else {
                    match g.subst_monomial(&pivot, as_one) {
                        Some(ng) => {
                            changed = true;
                            ng
                        }
                        None => g.clone(),
                    }
                }
            })
            .collect();
        if changed {
            return Some(next);
        }
    }
    None
}

/// Union of the atoms of all monomial factors directly inside `inner`.
fn monomial_part(inner: &Qp) -> BTreeSet<Atom> {
    match inner.node() {
        QpNode::Monomial(m) => m.clone(),
        QpNode::WeakProd(fs) | QpNode::StrongProd(fs) => fs
            .iter()
            .filter_map(|f| match f.node() {
                QpNode::Monomial(m) => Some(m.iter().cloned()),
                _ => None,
            })
            .flatten()
            .collect(),
        _ => BTreeSet::new(),
    }
}

/// Connected components of the factor list under atom sharing; order of
/// first occurrence is kept.
fn components(factors: &[Qp]) -> Vec<Vec<Qp>> {
    let mut groups: Vec<(BTreeSet<Atom>, Vec<Qp>)> = Vec::new();
    for f in factors {
        let atoms = f.atoms();
        let mut merged: Option<usize> = None;
        let mut i = 0;
        while i < groups.len() {
            if !groups[i].0.is_disjoint(&atoms) {
                match merged {
                    None => {
                        groups[i].0.extend(atoms.iter().cloned());
                        groups[i].1.push(f.clone());
                        merged = Some(i);
                        i += 1;
                    }
                    Some(k) => {
                        let (a, fs) = groups.remove(i);
                        groups[k].0.extend(a);
                        groups[k].1.extend(fs);
                    }
                }
            } else {
                i += 1;
            }
        }
        if merged.is_none() {
            groups.push((atoms, vec![f.clone()]));
        }
    }
    groups.into_iter().map(|(_, fs)| fs).collect()
}
