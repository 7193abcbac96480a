//! Elementary probability symbols and their numeric bindings.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

/// An elementary probability symbol. Two atoms are the same event exactly
/// when their names are equal; names are nonempty and unique per network.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(name: impl AsRef<str>) -> Atom {
        let name = name.as_ref();
        assert!(!name.is_empty(), "atom name must be nonempty");
        Atom(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Atom({})", self.0)
    }
}

impl From<&str> for Atom {
    fn from(name: &str) -> Atom {
        Atom::new(name)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("value {value} for atom {atom} is outside [0, 1]")]
    OutOfRange { atom: String, value: f64 },
}

/// Assigns a probability in `[0, 1]` to every atom it knows about.
/// Out-of-range values are rejected at construction, never clamped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Valuation {
    values: BTreeMap<Atom, f64>,
}

impl Valuation {
    pub fn new(values: impl IntoIterator<Item = (Atom, f64)>) -> Result<Valuation, ValuationError> {
        let mut map = BTreeMap::new();
        for (atom, value) in values {
            if !(0.0..=1.0).contains(&value) {
                return Err(ValuationError::OutOfRange {
                    atom: atom.name().to_string(),
                    value,
                });
            }
            map.insert(atom, value);
        }
        Ok(Valuation { values: map })
    }

    /// All listed atoms at the same probability. Handy for the worked examples,
    /// which sit at 1/2 everywhere.
    pub fn uniform(atoms: impl IntoIterator<Item = Atom>, value: f64) -> Valuation {
        Valuation::new(atoms.into_iter().map(|a| (a, value))).expect("uniform value out of range")
    }

    pub fn get(&self, atom: &Atom) -> Option<f64> {
        self.values.get(atom).copied()
    }

    pub fn set(&mut self, atom: Atom, value: f64) -> Result<(), ValuationError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ValuationError::OutOfRange {
                atom: atom.name().to_string(),
                value,
            });
        }
        self.values.insert(atom, value);
        Ok(())
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.values.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.values.iter().map(|(a, v)| (a, *v))
    }

    /// The same assignment as exact rationals. Every finite `f64` is a dyadic
    /// rational, so this conversion is lossless.
    pub fn to_exact(&self) -> BTreeMap<Atom, BigRational> {
        self.values
            .iter()
            .map(|(a, v)| {
                let r = BigRational::from_float(*v).expect("valuation values are finite");
                (a.clone(), r)
            })
            .collect()
    }
}

/// The arithmetic shared by the evaluator and the oracle: plain floats for
/// speed, big rationals when a test wants exact equality.
pub trait Scalar: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn from_bigint(i: &BigInt) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_bigint(i: &BigInt) -> Self {
        use num_traits::ToPrimitive;
        i.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        num_traits::Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn from_bigint(i: &BigInt) -> Self {
        BigRational::from_integer(i.clone())
    }
}
