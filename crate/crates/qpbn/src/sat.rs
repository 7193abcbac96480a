//! Satisfiability through the algebra: a CNF formula becomes the weak
//! product of its clause quasi-probabilities, and the formula is
//! satisfiable exactly when that product is not identically zero. The
//! decomposed product doubles as a description of the satisfying
//! assignments, and its value at the all-half point counts models.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::atom::Atom;
use crate::expand::{expand_capped, MultilinearForm, TermLimit, DEFAULT_TERM_CAP};
use crate::expr::{Qp, QpNode};
use crate::rewrite::{eliminate_star, Budget};

pub const DEFAULT_VAR_CAP: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lit {
    pub var: String,
    pub positive: bool,
}

impl Lit {
    pub fn pos(var: &str) -> Lit {
        Lit {
            var: var.into(),
            positive: true,
        }
    }

    pub fn neg(var: &str) -> Lit {
        Lit {
            var: var.into(),
            positive: false,
        }
    }
}

/// Disjunction of literals. Duplicate literals merge; a variable appearing
/// with both polarities marks the clause a tautology.
#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    lits: Vec<Lit>,
    tautology: bool,
}

impl Clause {
    pub fn new(lits: impl IntoIterator<Item = Lit>) -> Clause {
        let mut kept: Vec<Lit> = Vec::new();
        let mut tautology = false;
        for lit in lits {
            match kept.iter().find(|k| k.var == lit.var) {
                Some(k) => tautology |= k.positive != lit.positive,
                None => kept.push(lit),
            }
        }
        Clause {
            lits: kept,
            tautology,
        }
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn is_tautology(&self) -> bool {
        self.tautology
    }

    pub fn width(&self) -> usize {
        self.lits.len()
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header announces {expected} clauses, found {got}")]
    HeaderMismatch { expected: usize, got: usize },
    #[error("duplicate variable {var}")]
    DuplicateVariable { var: String },
    #[error("clause uses unknown variable {var}")]
    UnknownVariable { var: String },
    #[error("{count} variables exceed the model-counting cap of {cap}")]
    TooManyVariables { count: usize, cap: usize },
    #[error(transparent)]
    TermLimit(#[from] TermLimit),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnfFormula {
    variables: Vec<String>,
    clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(variables: Vec<String>, clauses: Vec<Clause>) -> Result<CnfFormula, SatError> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for v in &variables {
            if !seen.insert(v) {
                return Err(SatError::DuplicateVariable { var: v.clone() });
            }
        }
        for c in &clauses {
            for lit in c.lits() {
                if !seen.contains(lit.var.as_str()) {
                    return Err(SatError::UnknownVariable {
                        var: lit.var.clone(),
                    });
                }
            }
        }
        Ok(CnfFormula { variables, clauses })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn has_empty_clause(&self) -> bool {
        self.clauses.iter().any(Clause::is_empty)
    }

    /// Direct clause-by-clause check; variables missing from the
    /// assignment count as false.
    pub fn satisfied_by(&self, assignment: &BTreeMap<String, bool>) -> bool {
        self.clauses.iter().all(|c| {
            c.is_tautology()
                || c.lits().iter().any(|lit| {
                    assignment.get(&lit.var).copied().unwrap_or(false) == lit.positive
                })
        })
    }
}

/// DIMACS CNF: comment lines start with c, one `p cnf <vars> <clauses>`
/// header, then whitespace-separated signed literals with 0 closing each
/// clause. Variables are named v1..vn.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, SatError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut last_line = 0;
    for (at, raw) in text.lines().enumerate() {
        let line = at + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('p') {
            if header.is_some() {
                return Err(SatError::Parse {
                    line,
                    message: "second header".into(),
                });
            }
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                ["cnf", n, m] => n.parse::<usize>().ok().zip(m.parse::<usize>().ok()),
                _ => None,
            };
            header = Some(parsed.ok_or_else(|| SatError::Parse {
                line,
                message: format!("malformed header {trimmed:?}"),
            })?);
            continue;
        }
        let (vars, _) = header.ok_or_else(|| SatError::Parse {
            line,
            message: "clause before header".into(),
        })?;
        for tok in trimmed.split_whitespace() {
            let signed: i64 = tok.parse().map_err(|_| SatError::Parse {
                line,
                message: format!("bad literal {tok:?}"),
            })?;
            if signed == 0 {
                clauses.push(Clause::new(current.drain(..)));
                continue;
            }
            let var = signed.unsigned_abs() as usize;
            if var > vars {
                return Err(SatError::Parse {
                    line,
                    message: format!("literal {signed} outside the declared {vars} variables"),
                });
            }
            current.push(Lit {
                var: format!("v{var}"),
                positive: signed > 0,
            });
        }
    }
    let (vars, expected) = header.ok_or(SatError::Parse {
        line: last_line,
        message: "no header".into(),
    })?;
    if !current.is_empty() {
        return Err(SatError::Parse {
            line: last_line,
            message: "unterminated clause".into(),
        });
    }
    if clauses.len() != expected {
        return Err(SatError::HeaderMismatch {
            expected,
            got: clauses.len(),
        });
    }
    let variables = (1..=vars).map(|i| format!("v{i}")).collect();
    CnfFormula::new(variables, clauses)
}

fn clause_qp(c: &Clause) -> Qp {
    if c.is_tautology() {
        return Qp::one();
    }
    // The clause misses exactly when every literal misses; a positive
    // literal misses with (1 - v), a negative one with v.
    let misses = c.lits().iter().map(|lit| {
        let atom = Qp::atom(Atom::new(&lit.var));
        if lit.positive {
            Qp::one_minus(atom)
        } else {
            atom
        }
    });
    Qp::one_minus(Qp::weak(misses.collect::<Vec<_>>()))
}

/// The formula's quasi-probability of truth: the weak product of its clause
/// QPs, narrow clauses first so unit factors hand the elimination its
/// one-literal-rule pivots early.
pub fn cnf_to_qp(f: &CnfFormula) -> Qp {
    let mut ordered: Vec<&Clause> = f.clauses().iter().collect();
    ordered.sort_by_key(|c| c.width());
    Qp::weak(ordered.into_iter().map(clause_qp).collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq)]
pub enum SatOutcome {
    Sat {
        /// One satisfying assignment covering every variable.
        model: BTreeMap<String, bool>,
        /// Variables the residual never mentions; defaulted false in the
        /// model.
        free: Vec<String>,
        /// The decomposed formula QP the model was read from.
        residual: Qp,
    },
    Unsat,
    Unknown {
        reason: String,
    },
}

/// Multilinear form with one variable pinned to a truth value.
fn assign(form: &MultilinearForm, atom: &Atom, value: bool) -> MultilinearForm {
    MultilinearForm::from_terms(form.terms().filter_map(|(m, c)| {
        if !m.contains(atom) {
            return Some((m.clone(), c.clone()));
        }
        if !value {
            return None;
        }
        let mut rest = m.clone();
        rest.remove(atom);
        Some((rest, c.clone()))
    }))
}

/// 2^scale times the form's value at the all-half point, as an exact
/// integer: sum of c * 2^(scale - |monomial|). With scale = variable count
/// this is the number of satisfying assignments.
fn half_weight(form: &MultilinearForm, scale: usize) -> BigInt {
    form.terms()
        .map(|(m, c)| c.clone() << (scale - m.len()))
        .sum()
}

/// Reads a model straight off a decomposed product whose factors are all
/// monomials (those atoms are true) or single-atom complements (false).
fn direct_model(residual: &Qp) -> Option<BTreeMap<String, bool>> {
    let factors: &[Qp] = match residual.node() {
        QpNode::StrongProd(fs) | QpNode::WeakProd(fs) => fs,
        QpNode::Const(true) => &[],
        _ => std::slice::from_ref(residual),
    };
    let mut model = BTreeMap::new();
    for f in factors {
        match f.node() {
            QpNode::Monomial(m) => {
                for a in m {
                    model.insert(a.name().to_string(), true);
                }
            }
            QpNode::OneMinus(x) => match x.node() {
                QpNode::Monomial(m) if m.len() == 1 => {
                    let a = m.iter().next().unwrap();
                    model.insert(a.name().to_string(), false);
                }
                _ => return None,
            },
            _ => return None,
        }
    }
    Some(model)
}

pub fn decide_sat(f: &CnfFormula, budget: &Budget) -> SatOutcome {
    if f.has_empty_clause() {
        return SatOutcome::Unsat;
    }
    let qp = cnf_to_qp(f);
    let residual = match eliminate_star(&qp, budget) {
        Ok(e) => e,
        Err(_) => {
            return SatOutcome::Unknown {
                reason: "elimination budget exceeded".into(),
            }
        }
    };
    // Zero test at the all-half point is exact: the value there is the
    // model count over 2^n.
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let half_each: BTreeMap<Atom, BigRational> = f
        .variables()
        .iter()
        .map(|v| (Atom::new(v), half.clone()))
        .collect();
    let at_half = residual
        .evaluate_exact(&half_each)
        .expect("decomposed formula QP evaluates");
    if at_half.is_zero() {
        return SatOutcome::Unsat;
    }
    let mut model = match direct_model(&residual) {
        Some(model) => model,
        None => {
            // Greedy per-variable fixing on the expansion. Each step keeps
            // the remaining model count positive, so no backtracking: if
            // fixing false kills every model, fixing true cannot.
            let mut form = match expand_capped(&residual, budget.term_cap) {
                Ok(form) => form,
                Err(_) => {
                    return SatOutcome::Unknown {
                        reason: "model extraction exceeded the term budget".into(),
                    }
                }
            };
            let atoms = form.atoms();
            let mut model = BTreeMap::new();
            for var in f.variables() {
                let atom = Atom::new(var);
                if !atoms.contains(&atom) {
                    continue;
                }
                let scale = f.variables().len();
                let off = assign(&form, &atom, false);
                if half_weight(&off, scale).is_zero() {
                    form = assign(&form, &atom, true);
                    debug_assert!(!half_weight(&form, scale).is_zero());
                    model.insert(var.clone(), true);
                } else {
                    form = off;
                    model.insert(var.clone(), false);
                }
            }
            model
        }
    };
    let free: Vec<String> = f
        .variables()
        .iter()
        .filter(|v| !model.contains_key(*v))
        .cloned()
        .collect();
    for v in &free {
        model.insert(v.clone(), false);
    }
    debug_assert!(f.satisfied_by(&model));
    SatOutcome::Sat {
        model,
        free,
        residual,
    }
}

/// Exact model count: 2^n times the expanded formula QP at all-half.
pub fn count_models(f: &CnfFormula) -> Result<u64, SatError> {
    let n = f.variables().len();
    if n > DEFAULT_VAR_CAP {
        return Err(SatError::TooManyVariables {
            count: n,
            cap: DEFAULT_VAR_CAP,
        });
    }
    let form = expand_capped(&cnf_to_qp(f), DEFAULT_TERM_CAP)?;
    Ok(half_weight(&form, n)
        .to_u64()
        .expect("model counts are small nonnegative integers"))
}
