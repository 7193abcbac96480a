//! Quasi-probability expressions.
//!
//! The grammar has constants 0 and 1, monomials over distinct atoms, the
//! complement `1 - t`, signed sums, and two products: the weak product `*`,
//! which is idempotent and never forms powers, and the strong (ordinary)
//! product, which is only ever formed between factors with disjoint atom
//! sets. Strong products are an output form of `*`-elimination; everything
//! the network recursion builds uses weak products.
//!
//! Expressions are immutable and shared through `Arc`, so recursive network
//! constructions reuse sub-results structurally instead of copying them.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use thiserror::Error;

use crate::atom::{Atom, Scalar, Valuation};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }

    pub fn combine(self, other: Sign) -> Sign {
        if self == other {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

/// One node of a quasi-probability expression. Use the constructors on
/// [`Qp`]; they maintain the structural invariants (flattened products,
/// folded constants, deduplicated monomials).
#[derive(PartialEq, Eq, Hash, Debug)]
pub enum QpNode {
    /// `false` is 0, `true` is 1.
    Const(bool),
    /// A product of distinct atoms. Never empty.
    Monomial(BTreeSet<Atom>),
    OneMinus(Qp),
    /// Weak product, at least two factors, none of them constants.
    WeakProd(Vec<Qp>),
    /// Signed terms. Normally at least two; a lone negated term can be left
    /// behind when a rewrite cancels everything else, and is kept as-is.
    Sum(Vec<(Sign, Qp)>),
    /// Ordinary product of pairwise atom-disjoint factors. Output-only.
    StrongProd(Vec<Qp>),
}

#[derive(Clone, Eq, Hash)]
pub struct Qp(Arc<QpNode>);

impl PartialEq for Qp {
    fn eq(&self, other: &Qp) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("expression is not decomposed: atom {atom} occurs in two factors of a weak product")]
    NotDecomposed { atom: String },
    #[error("no value for atom {atom}")]
    MissingAtom { atom: String },
}

impl Qp {
    pub fn node(&self) -> &QpNode {
        &self.0
    }

    pub fn ptr_eq(&self, other: &Qp) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Node address, stable while the expression is alive. Used as a memo
    /// key to expand shared subtrees once.
    pub(crate) fn as_ptr(&self) -> *const QpNode {
        Arc::as_ptr(&self.0)
    }

    fn wrap(node: QpNode) -> Qp {
        Qp(Arc::new(node))
    }

    pub fn zero() -> Qp {
        Qp::wrap(QpNode::Const(false))
    }

    pub fn one() -> Qp {
        Qp::wrap(QpNode::Const(true))
    }

    pub fn constant(value: bool) -> Qp {
        Qp::wrap(QpNode::Const(value))
    }

    pub fn atom(atom: impl Into<Atom>) -> Qp {
        Qp::wrap(QpNode::Monomial([atom.into()].into()))
    }

    pub fn monomial(atoms: impl IntoIterator<Item = Atom>) -> Qp {
        let set: BTreeSet<Atom> = atoms.into_iter().collect();
        assert!(!set.is_empty(), "monomial needs at least one atom");
        Qp::wrap(QpNode::Monomial(set))
    }

    pub fn one_minus(x: Qp) -> Qp {
        match x.node() {
            QpNode::Const(b) => Qp::constant(!b),
            QpNode::OneMinus(inner) => inner.clone(),
            _ => Qp::wrap(QpNode::OneMinus(x)),
        }
    }

    /// Weak product of the given factors. Flattens nested weak products and
    /// folds constants but deliberately keeps monomial factors separate, so
    /// the raw shape of a network recursion stays visible. [`Qp::weak_mul`]
    /// is the simplifying variant.
    pub fn weak(factors: impl IntoIterator<Item = Qp>) -> Qp {
        let mut flat = Vec::new();
        for f in factors {
            match f.node() {
                QpNode::Const(false) => return Qp::zero(),
                QpNode::Const(true) => {}
                QpNode::WeakProd(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(f),
            }
        }
        match flat.len() {
            0 => Qp::one(),
            1 => flat.pop().unwrap(),
            _ => Qp::wrap(QpNode::WeakProd(flat)),
        }
    }

    /// Weak product with local simplification: monomial factors merge into a
    /// single monomial (the product reduction `p*p = p`, `pq*qr = pqr`).
    pub fn weak_mul(a: Qp, b: Qp) -> Qp {
        Qp::weak_merged([a, b])
    }

    /// Like [`Qp::weak`], but all monomial factors are merged by atom-set
    /// union first.
    pub fn weak_merged(factors: impl IntoIterator<Item = Qp>) -> Qp {
        let mut flat = Vec::new();
        for f in factors {
            match f.node() {
                QpNode::Const(false) => return Qp::zero(),
                QpNode::Const(true) => {}
                QpNode::WeakProd(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(f),
            }
        }
        let mut merged: BTreeSet<Atom> = BTreeSet::new();
        let mut rest = Vec::new();
        for f in flat {
            match f.node() {
                QpNode::Monomial(set) => merged.extend(set.iter().cloned()),
                _ => rest.push(f),
            }
        }
        if !merged.is_empty() {
            rest.insert(0, Qp::wrap(QpNode::Monomial(merged)));
        }
        match rest.len() {
            0 => Qp::one(),
            1 => rest.pop().unwrap(),
            _ => Qp::wrap(QpNode::WeakProd(rest)),
        }
    }

    /// Ordinary product of atom-disjoint factors. Monomial factors merge
    /// (their product is just the larger monomial); nested strong products
    /// flatten. Disjointness is the caller's obligation and is checked in
    /// debug builds.
    pub fn strong(factors: impl IntoIterator<Item = Qp>) -> Qp {
        let mut flat = Vec::new();
        for f in factors {
            match f.node() {
                QpNode::Const(false) => return Qp::zero(),
                QpNode::Const(true) => {}
                QpNode::StrongProd(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(f),
            }
        }
        let mut merged: BTreeSet<Atom> = BTreeSet::new();
        let mut rest = Vec::new();
        for f in flat {
            match f.node() {
                QpNode::Monomial(set) => merged.extend(set.iter().cloned()),
                _ => rest.push(f),
            }
        }
        if !merged.is_empty() {
            rest.insert(0, Qp::wrap(QpNode::Monomial(merged)));
        }
        debug_assert!(
            {
                let mut seen: BTreeSet<Atom> = BTreeSet::new();
                rest.iter().all(|f| {
                    f.atoms().into_iter().all(|a| seen.insert(a))
                })
            },
            "strong product factors must be atom-disjoint"
        );
        match rest.len() {
            0 => Qp::one(),
            1 => rest.pop().unwrap(),
            _ => Qp::wrap(QpNode::StrongProd(rest)),
        }
    }

    /// Signed sum. Flattens nested sums, drops zero terms, cancels pairs of
    /// structurally equal terms with opposite signs, and folds `1 - t` back
    /// into a complement node.
    pub fn sum(terms: impl IntoIterator<Item = (Sign, Qp)>) -> Qp {
        let mut flat: Vec<(Sign, Qp)> = Vec::new();
        for (sign, t) in terms {
            match t.node() {
                QpNode::Const(false) => {}
                QpNode::Sum(inner) => {
                    flat.extend(inner.iter().map(|(s, q)| (sign.combine(*s), q.clone())));
                }
                _ => flat.push((sign, t)),
            }
        }
        // Cancel s*t + (-s)*t pairs.
        let mut kept: Vec<(Sign, Qp)> = Vec::new();
        'outer: for (sign, t) in flat {
            for i in 0..kept.len() {
                if kept[i].0 == sign.flip() && kept[i].1 == t {
                    kept.remove(i);
                    continue 'outer;
                }
            }
            kept.push((sign, t));
        }
        match kept.len() {
            0 => Qp::zero(),
            1 if kept[0].0 == Sign::Pos => kept.pop().unwrap().1,
            2 => {
                let one_at = kept
                    .iter()
                    .position(|(s, q)| *s == Sign::Pos && matches!(q.node(), QpNode::Const(true)));
                match one_at {
                    Some(i) if kept[1 - i].0 == Sign::Neg => {
                        Qp::one_minus(kept.swap_remove(1 - i).1)
                    }
                    _ => Qp::wrap(QpNode::Sum(kept)),
                }
            }
            _ => Qp::wrap(QpNode::Sum(kept)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.node(), QpNode::Const(false))
    }

    pub fn is_one(&self) -> bool {
        matches!(self.node(), QpNode::Const(true))
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut set = BTreeSet::new();
        // shared subtrees are visited once, so DAG-shaped expressions stay
        // cheap to scan
        let mut seen = HashSet::new();
        self.collect_atoms(&mut set, &mut seen);
        set
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>, seen: &mut HashSet<*const QpNode>) {
        if !seen.insert(Arc::as_ptr(&self.0)) {
            return;
        }
        match self.node() {
            QpNode::Const(_) => {}
            QpNode::Monomial(set) => out.extend(set.iter().cloned()),
            QpNode::OneMinus(x) => x.collect_atoms(out, seen),
            QpNode::WeakProd(fs) | QpNode::StrongProd(fs) => {
                for f in fs {
                    f.collect_atoms(out, seen);
                }
            }
            QpNode::Sum(ts) => {
                for (_, t) in ts {
                    t.collect_atoms(out, seen);
                }
            }
        }
    }

    /// Atoms that occur in more than one factor of some weak product. Empty
    /// exactly when the expression is decomposed and hence evaluable.
    pub fn shared_weak_atoms(&self) -> BTreeSet<Atom> {
        let mut shared = BTreeSet::new();
        self.collect_shared(&mut shared);
        shared
    }

    fn collect_shared(&self, out: &mut BTreeSet<Atom>) {
        match self.node() {
            QpNode::Const(_) | QpNode::Monomial(_) => {}
            QpNode::OneMinus(x) => x.collect_shared(out),
            QpNode::Sum(ts) => {
                for (_, t) in ts {
                    t.collect_shared(out);
                }
            }
            QpNode::StrongProd(fs) => {
                for f in fs {
                    f.collect_shared(out);
                }
            }
            QpNode::WeakProd(fs) => {
                let mut seen: BTreeSet<Atom> = BTreeSet::new();
                for f in fs {
                    for a in f.atoms() {
                        if !seen.insert(a.clone()) {
                            out.insert(a);
                        }
                    }
                    f.collect_shared(out);
                }
            }
        }
    }

    pub fn is_decomposed(&self) -> bool {
        self.shared_weak_atoms().is_empty()
    }

    /// Substitutes a monomial pivot: with `positive`, every monomial loses
    /// the pivot's atoms (they are forced to 1); otherwise every monomial
    /// containing the whole pivot collapses to 0. Returns `None` when
    /// nothing changed.
    pub fn subst_monomial(&self, pivot: &BTreeSet<Atom>, positive: bool) -> Option<Qp> {
        match self.node() {
            QpNode::Const(_) => None,
            QpNode::Monomial(set) => {
                if positive {
                    if set.is_disjoint(pivot) {
                        None
                    } else {
                        let rest: BTreeSet<Atom> = set.difference(pivot).cloned().collect();
                        Some(if rest.is_empty() {
                            Qp::one()
                        } else {
                            Qp::wrap(QpNode::Monomial(rest))
                        })
                    }
                } else if pivot.is_subset(set) {
                    Some(Qp::zero())
                } else {
                    None
                }
            }
            QpNode::OneMinus(x) => x
                .subst_monomial(pivot, positive)
                .map(Qp::one_minus),
            QpNode::WeakProd(fs) => {
                subst_list(fs, pivot, positive).map(Qp::weak)
            }
            QpNode::StrongProd(fs) => {
                subst_list(fs, pivot, positive).map(Qp::strong)
            }
            QpNode::Sum(ts) => {
                let mut changed = false;
                let mut new_terms = Vec::with_capacity(ts.len());
                for (s, t) in ts {
                    match t.subst_monomial(pivot, positive) {
                        Some(nt) => {
                            changed = true;
                            new_terms.push((*s, nt));
                        }
                        None => new_terms.push((*s, t.clone())),
                    }
                }
                changed.then(|| Qp::sum(new_terms))
            }
        }
    }

    pub fn evaluate(&self, v: &Valuation) -> Result<f64, EvalError> {
        self.evaluate_with(&|a| v.get(a))
    }

    pub fn evaluate_exact(
        &self,
        v: &BTreeMap<Atom, BigRational>,
    ) -> Result<BigRational, EvalError> {
        self.evaluate_with(&|a| v.get(a).cloned())
    }

    /// Arithmetic evaluation of a decomposed expression. Weak products whose
    /// factors still share atoms are not plain products and are rejected.
    pub fn evaluate_with<S: Scalar>(
        &self,
        lookup: &impl Fn(&Atom) -> Option<S>,
    ) -> Result<S, EvalError> {
        match self.node() {
            QpNode::Const(b) => Ok(if *b { S::one() } else { S::zero() }),
            QpNode::Monomial(set) => {
                let mut acc = S::one();
                for a in set {
                    let v = lookup(a).ok_or_else(|| EvalError::MissingAtom {
                        atom: a.name().to_string(),
                    })?;
                    acc = acc.mul(&v);
                }
                Ok(acc)
            }
            QpNode::OneMinus(x) => Ok(S::one().sub(&x.evaluate_with(lookup)?)),
            QpNode::Sum(ts) => {
                let mut acc = S::zero();
                for (sign, t) in ts {
                    let v = t.evaluate_with(lookup)?;
                    acc = match sign {
                        Sign::Pos => acc.add(&v),
                        Sign::Neg => acc.sub(&v),
                    };
                }
                Ok(acc)
            }
            QpNode::StrongProd(fs) => {
                let mut acc = S::one();
                for f in fs {
                    acc = acc.mul(&f.evaluate_with(lookup)?);
                }
                Ok(acc)
            }
            QpNode::WeakProd(fs) => {
                let mut seen: BTreeSet<Atom> = BTreeSet::new();
                for f in fs {
                    for a in f.atoms() {
                        if !seen.insert(a.clone()) {
                            return Err(EvalError::NotDecomposed {
                                atom: a.name().to_string(),
                            });
                        }
                    }
                }
                let mut acc = S::one();
                for f in fs {
                    acc = acc.mul(&f.evaluate_with(lookup)?);
                }
                Ok(acc)
            }
        }
    }
}

fn subst_list(fs: &[Qp], pivot: &BTreeSet<Atom>, positive: bool) -> Option<Vec<Qp>> {
    let mut changed = false;
    let mut out = Vec::with_capacity(fs.len());
    for f in fs {
        match f.subst_monomial(pivot, positive) {
            Some(nf) => {
                changed = true;
                out.push(nf);
            }
            None => out.push(f.clone()),
        }
    }
    changed.then_some(out)
}

// ---------------------------------------------------------------------------
// Canonical text rendering.
//
// Monomials print their atoms in name order, concatenated when every name is
// a single character ("pqrs") and `*`-joined otherwise. Weak products join
// factors with `*`; strong products juxtapose them, wrapping complements of
// monomials in parentheses and anything larger in square brackets, which is
// the usual way to write these reductions by hand: `q[1-(1-prs)(1-tu)]`.
// Factor order within a product is sorted (monomials first, then by printed
// text), so the output is independent of construction order.

impl fmt::Display for Qp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl fmt::Debug for Qp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "qp({})", self.text())
    }
}

pub(crate) fn monomial_text(set: &BTreeSet<Atom>) -> String {
    if set.iter().all(|a| a.name().chars().count() == 1) {
        set.iter().map(|a| a.name()).collect()
    } else {
        set.iter()
            .map(|a| a.name())
            .collect::<Vec<_>>()
            .join("*")
    }
}

fn sort_rank(q: &Qp) -> u8 {
    match q.node() {
        QpNode::Const(_) | QpNode::Monomial(_) => 0,
        QpNode::StrongProd(_) | QpNode::WeakProd(_) => 1,
        QpNode::OneMinus(_) | QpNode::Sum(_) => 2,
    }
}

fn sorted_texts(fs: &[Qp], render: impl Fn(&Qp) -> String) -> Vec<String> {
    let mut parts: Vec<(u8, String)> = fs.iter().map(|f| (sort_rank(f), render(f))).collect();
    parts.sort();
    parts.into_iter().map(|(_, s)| s).collect()
}

impl Qp {
    /// Canonical text form; inverse of [`crate::parse::parse_qp`] up to the
    /// local simplifications the constructors apply.
    pub fn text(&self) -> String {
        match self.node() {
            QpNode::Const(false) => "0".into(),
            QpNode::Const(true) => "1".into(),
            QpNode::Monomial(set) => monomial_text(set),
            QpNode::OneMinus(x) => {
                let inner = match x.node() {
                    QpNode::Sum(_) | QpNode::OneMinus(_) => format!("({})", x.text()),
                    _ => x.text(),
                };
                format!("1-{inner}")
            }
            QpNode::WeakProd(fs) => sorted_texts(fs, Qp::weak_factor_text).join("*"),
            QpNode::StrongProd(fs) => sorted_texts(fs, Qp::strong_factor_text).concat(),
            QpNode::Sum(ts) => {
                let mut out = String::new();
                for (i, (sign, t)) in ts.iter().enumerate() {
                    match (i, sign) {
                        (0, Sign::Pos) => {}
                        (0, Sign::Neg) => out.push('-'),
                        (_, Sign::Pos) => out.push('+'),
                        (_, Sign::Neg) => out.push('-'),
                    }
                    match t.node() {
                        QpNode::Sum(_) | QpNode::OneMinus(_) => {
                            out.push('(');
                            out.push_str(&t.text());
                            out.push(')');
                        }
                        _ => out.push_str(&t.text()),
                    }
                }
                out
            }
        }
    }

    fn weak_factor_text(&self) -> String {
        match self.node() {
            QpNode::OneMinus(_) | QpNode::Sum(_) => format!("({})", self.text()),
            _ => self.text(),
        }
    }

    fn strong_factor_text(&self) -> String {
        match self.node() {
            QpNode::OneMinus(x) => match x.node() {
                QpNode::Monomial(_) | QpNode::Const(_) => format!("({})", self.text()),
                _ => format!("[{}]", self.text()),
            },
            QpNode::Sum(_) => format!("[{}]", self.text()),
            QpNode::WeakProd(_) => format!("({})", self.text()),
            _ => self.text(),
        }
    }
}
