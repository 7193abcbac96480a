//! Multilinear expansion: the semantic normal form of a quasi-probability.
//!
//! Expanding replaces every weak product by the union of its operands'
//! monomials (no atom ever acquires a power) and collects like terms with
//! exact integer coefficients. Two expressions denote the same function of
//! their atoms exactly when their expansions are equal, so this is also the
//! equivalence test. Expansion is worst-case exponential; a term cap turns
//! runaway cases into an error instead of an OOM.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use smallvec::{smallvec, SmallVec};
use thiserror::Error;

use crate::atom::{Atom, Scalar, Valuation};
use crate::expr::{monomial_text, EvalError, Qp, QpNode, Sign};

/// Default limit on the number of distinct monomials an expansion may hold
/// at any point.
pub const DEFAULT_TERM_CAP: usize = 1 << 18;

#[derive(Clone, Debug, Error, PartialEq)]
#[error("expansion exceeded the {cap}-term cap")]
pub struct TermLimit {
    pub cap: usize,
}

/// A signed integer combination of monomials over distinct atoms, with like
/// terms collected and zero coefficients pruned. The canonical, order-free
/// form of an expanded quasi-probability.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MultilinearForm {
    terms: BTreeMap<BTreeSet<Atom>, BigInt>,
}

impl MultilinearForm {
    pub fn from_terms<C: Into<BigInt>>(
        terms: impl IntoIterator<Item = (BTreeSet<Atom>, C)>,
    ) -> MultilinearForm {
        let mut map: BTreeMap<BTreeSet<Atom>, BigInt> = BTreeMap::new();
        for (m, c) in terms {
            let entry = map.entry(m).or_insert_with(BigInt::zero);
            *entry += c.into();
        }
        map.retain(|_, c| !c.is_zero());
        MultilinearForm { terms: map }
    }

    pub fn zero() -> MultilinearForm {
        MultilinearForm::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BTreeSet<Atom>, &BigInt)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, monomial: &BTreeSet<Atom>) -> BigInt {
        self.terms.get(monomial).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.terms.keys().flatten().cloned().collect()
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

    pub fn evaluate_with<S: Scalar>(
        &self,
        lookup: &impl Fn(&Atom) -> Option<S>,
    ) -> Result<S, EvalError> {
        let mut acc = S::zero();
        for (m, c) in &self.terms {
            let mut term = S::from_bigint(c);
            for a in m {
                let v = lookup(a).ok_or_else(|| EvalError::MissingAtom {
                    atom: a.name().to_string(),
                })?;
                term = term.mul(&v);
            }
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// The expansion as an expression again: a signed sum of monomials,
    /// which is trivially decomposed.
    pub fn to_qp(&self) -> Qp {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            let sign = if c.is_negative() { Sign::Neg } else { Sign::Pos };
            let base = if m.is_empty() {
                Qp::one()
            } else {
                Qp::monomial(m.iter().cloned())
            };
            let mag = c.abs();
            let copies = usize::try_from(&mag).unwrap_or(usize::MAX);
            for _ in 0..copies {
                terms.push((sign, base.clone()));
            }
        }
        Qp::sum(terms)
    }
}

impl std::fmt::Display for MultilinearForm {
    /// Positive terms first, then negative, lexicographic within each group:
    /// `pqrs+qtu-pqrstu`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let group = |neg: bool| {
            self.terms
                .iter()
                .filter(move |(_, c)| c.is_negative() == neg)
        };
        let mut first = true;
        for (m, c) in group(false).chain(group(true)) {
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    f.write_str("-")?;
                }
                first = false;
            } else if c.is_negative() {
                f.write_str("-")?;
            } else {
                f.write_str("+")?;
            }
            let mono = monomial_text(m);
            if mag.is_one() {
                if mono.is_empty() {
                    f.write_str("1")?;
                } else {
                    f.write_str(&mono)?;
                }
            } else if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mono.contains('*') {
                write!(f, "{mag}*{mono}")?;
            } else {
                write!(f, "{mag}{mono}")?;
            }
        }
        Ok(())
    }
}

pub fn expand(e: &Qp) -> Result<MultilinearForm, TermLimit> {
    expand_capped(e, DEFAULT_TERM_CAP)
}

pub fn expand_capped(e: &Qp, cap: usize) -> Result<MultilinearForm, TermLimit> {
    let universe: Vec<Atom> = e.atoms().into_iter().collect();
    let index: HashMap<&Atom, usize> = universe.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let words = universe.len().div_ceil(64).max(1);
    let mut ctx = Ctx {
        index,
        words,
        cap,
        memo: HashMap::new(),
    };
    let masked = ctx.expand(e)?;
    let mut terms = BTreeMap::new();
    for (mask, coeff) in masked.iter() {
        let monomial: BTreeSet<Atom> = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask[i / 64] >> (i % 64) & 1 == 1)
            .map(|(_, a)| a.clone())
            .collect();
        terms.insert(monomial, coeff.clone());
    }
    Ok(MultilinearForm { terms })
}

/// Equality of expansions: the defining equivalence of the algebra.
pub fn equivalent(a: &Qp, b: &Qp) -> Result<bool, TermLimit> {
    equivalent_capped(a, b, DEFAULT_TERM_CAP)
}

pub fn equivalent_capped(a: &Qp, b: &Qp, cap: usize) -> Result<bool, TermLimit> {
    Ok(expand_capped(a, cap)? == expand_capped(b, cap)?)
}

// Internal representation during expansion: monomials as bit masks over the
// expression's atom universe, so collecting like terms is a hash on one or
// two machine words instead of a set comparison.

type Mask = SmallVec<[u64; 2]>;
type MaskForm = HashMap<Mask, BigInt>;

struct Ctx<'a> {
    index: HashMap<&'a Atom, usize>,
    words: usize,
    cap: usize,
    // Shared subtrees expand once; keyed by node address, which is stable
    // while the borrowed root is alive.
    memo: HashMap<*const QpNode, Rc<MaskForm>>,
}

impl<'a> Ctx<'a> {
    fn empty_mask(&self) -> Mask {
        smallvec![0u64; self.words]
    }

    fn expand(&mut self, e: &Qp) -> Result<Rc<MaskForm>, TermLimit> {
        let key = e.as_ptr();
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let form = match e.node() {
            QpNode::Const(false) => MaskForm::new(),
            QpNode::Const(true) => {
                let mut m = MaskForm::new();
                m.insert(self.empty_mask(), BigInt::one());
                m
            }
            QpNode::Monomial(set) => {
                let mut mask = self.empty_mask();
                for a in set {
                    let i = self.index[a];
                    mask[i / 64] |= 1 << (i % 64);
                }
                let mut m = MaskForm::new();
                m.insert(mask, BigInt::one());
                m
            }
            QpNode::OneMinus(x) => {
                let inner = self.expand(x)?;
                let mut m = MaskForm::new();
                m.insert(self.empty_mask(), BigInt::one());
                self.add_scaled(&mut m, &inner, Sign::Neg)?;
                m
            }
            QpNode::Sum(ts) => {
                let mut m = MaskForm::new();
                for (sign, t) in ts {
                    let part = self.expand(t)?;
                    self.add_scaled(&mut m, &part, *sign)?;
                }
                m
            }
            QpNode::WeakProd(fs) | QpNode::StrongProd(fs) => {
                let mut acc: Option<MaskForm> = None;
                for f in fs {
                    let part = self.expand(f)?;
                    acc = Some(match acc {
                        None => (*part).clone(),
                        Some(prev) => self.mul(&prev, &part)?,
                    });
                }
                acc.expect("products have at least two factors")
            }
        };
        let rc = Rc::new(form);
        self.memo.insert(key, rc.clone());
        Ok(rc)
    }

    fn add_scaled(
        &self,
        dst: &mut MaskForm,
        src: &MaskForm,
        sign: Sign,
    ) -> Result<(), TermLimit> {
        for (mask, coeff) in src {
            let entry = dst.entry(mask.clone()).or_insert_with(BigInt::zero);
            match sign {
                Sign::Pos => *entry += coeff,
                Sign::Neg => *entry -= coeff,
            }
            if entry.is_zero() {
                dst.remove(mask);
            } else if dst.len() > self.cap {
                return Err(TermLimit { cap: self.cap });
            }
        }
        Ok(())
    }

    fn mul(&self, a: &MaskForm, b: &MaskForm) -> Result<MaskForm, TermLimit> {
        let mut out = MaskForm::with_capacity(a.len().max(b.len()));
        for (ma, ca) in a {
            for (mb, cb) in b {
                let mask: Mask = ma.iter().zip(mb.iter()).map(|(x, y)| x | y).collect();
                let entry = out.entry(mask.clone()).or_insert_with(BigInt::zero);
                *entry += ca * cb;
                if entry.is_zero() {
                    out.remove(&mask);
                } else if out.len() > self.cap {
                    return Err(TermLimit { cap: self.cap });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(n: &str) -> Qp {
        Qp::atom(n)
    }

    fn set(names: &[&str]) -> BTreeSet<Atom> {
        names.iter().map(|n| Atom::new(n)).collect()
    }

    fn two_route_net() -> Qp {
        Qp::one_minus(Qp::weak([
            Qp::one_minus(Qp::weak([a("s"), a("r"), a("p"), a("q")])),
            Qp::one_minus(Qp::weak([a("u"), a("t"), a("q")])),
        ]))
    }

    #[test]
    fn weak_products_never_form_powers() {
        let e = Qp::weak([a("p"), a("p")]);
        let form = expand(&e).unwrap();
        assert_eq!(form, MultilinearForm::from_terms([(set(&["p"]), 1)]));
    }

    #[test]
    fn disjunction_expansion() {
        let form = expand(&two_route_net()).unwrap();
        let expected = MultilinearForm::from_terms([
            (set(&["p", "q", "r", "s"]), 1),
            (set(&["q", "t", "u"]), 1),
            (set(&["p", "q", "r", "s", "t", "u"]), -1),
        ]);
        assert_eq!(form, expected);
        assert_eq!(form.to_string(), "pqrs+qtu-pqrstu");
    }

    #[test]
    fn absorption_collapses_to_complement() {
        // (1-p)*(1-pq) has the pq term absorbed: p + pq - p∪pq leaves 1-p.
        let e = Qp::weak([
            Qp::one_minus(a("p")),
            Qp::one_minus(Qp::monomial(["p".into(), "q".into()])),
        ]);
        let form = expand(&e).unwrap();
        assert_eq!(
            form,
            MultilinearForm::from_terms([(set(&[]), 1), (set(&["p"]), -1)])
        );
        assert_eq!(form.to_string(), "1-p");
    }

    #[test]
    fn annihilation_is_exact() {
        let e = Qp::weak([a("p"), Qp::one_minus(a("p"))]);
        assert!(expand(&e).unwrap().is_zero());
        assert_eq!(expand(&e).unwrap().to_string(), "0");
    }

    #[test]
    fn evaluation_of_the_expanded_marginal() {
        let form = expand(&two_route_net()).unwrap();
        let atoms: Vec<Atom> = ["p", "q", "r", "s", "t", "u"]
            .iter()
            .map(Atom::new)
            .collect();
        let v = Valuation::uniform(atoms, 0.5);
        assert_eq!(form.evaluate(&v).unwrap(), 11.0 / 64.0);

        let exact = form.evaluate_exact(&v.to_exact()).unwrap();
        assert_eq!(exact, BigRational::new(11.into(), 64.into()));
    }

    #[test]
    fn missing_atom_is_an_error() {
        let form = expand(&a("p")).unwrap();
        let v = Valuation::uniform([Atom::new("q")], 0.5);
        assert_eq!(
            form.evaluate(&v),
            Err(EvalError::MissingAtom { atom: "p".into() })
        );
    }

    #[test]
    fn term_cap_is_enforced() {
        // Product of n complements over disjoint atoms has 2^n terms.
        let factors: Vec<Qp> = (0..8)
            .map(|i| Qp::one_minus(Qp::atom(format!("x{i}").as_str())))
            .collect();
        let e = Qp::weak(factors);
        assert_eq!(expand_capped(&e, 100), Err(TermLimit { cap: 100 }));
        assert_eq!(expand_capped(&e, 256).unwrap().len(), 256);
    }

    #[test]
    fn equivalence_is_expansion_equality() {
        let lhs = Qp::weak([a("p"), a("q"), a("p")]);
        let rhs = Qp::monomial(["p".into(), "q".into()]);
        assert!(equivalent(&lhs, &rhs).unwrap());
        assert!(!equivalent(&lhs, &a("p")).unwrap());
    }

    #[test]
    fn shared_subtrees_expand_once() {
        // Each level references the previous one twice, so walking the
        // expression as a tree would visit 2^60 nodes; the address memo
        // visits each node once. The complement wrappers keep the weak
        // constructor from flattening the sharing away.
        let mut e = a("x");
        for i in 0..60 {
            let name = format!("y{i}");
            let blocked = Qp::one_minus(e);
            e = Qp::weak([blocked.clone(), Qp::atom(name.as_str()), blocked]);
        }
        // (1 - f)^2 * y stays (1 - f) * y because every level is idempotent
        let form = expand(&e).unwrap();
        assert_eq!(form.len(), 61);
    }

    #[test]
    fn wide_universes_use_multiword_masks() {
        let atoms: Vec<Qp> = (0..130).map(|i| Qp::atom(format!("a{i:03}").as_str())).collect();
        let e = Qp::weak(atoms);
        let form = expand(&e).unwrap();
        assert_eq!(form.len(), 1);
        let (m, c) = form.terms().next().unwrap();
        assert_eq!(m.len(), 130);
        assert!(c.is_one());
    }
}
