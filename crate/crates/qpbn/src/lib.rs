//! Symbolic probabilistic inference for noisy AND-OR-NOT Bayesian networks.
//!
//! Network probabilities are represented as *quasi-probabilities*: algebraic
//! expressions over elementary probability symbols built from `+`, `1-`, and
//! an idempotent weak product `*` that never forms powers. Marginal and
//! conditional queries reduce to building the quasi-probability of an event,
//! eliminating weak products between related factors, and evaluating the
//! decomposed result. The same machinery doubles as a SAT decision procedure
//! and model counter, and a stochastic pulse-train backend trades exactness
//! for bit-parallel estimation.
//!
//! The crate is organized around:
//!
//! * [`expr`] / [`expand`] / [`rewrite`] / [`parse`]: the quasi-probability
//!   algebra, its multilinear normal form, and the `*`-elimination rules;
//! * [`network`] / [`cpt`]: the network model, validation, and conversion
//!   from conditional probability tables;
//! * [`infer`]: event construction, conditional queries, boosting;
//! * [`oracle`]: brute-force enumeration used as ground truth;
//! * [`sat`]: CNF reasoning on top of the algebra;
//! * [`pulse`]: the pulse-train estimator;
//! * [`cli`]: the `qpbn` command-line front end.

pub mod atom;
pub mod cli;
pub mod cpt;
pub mod expand;
pub mod expr;
pub mod gen;
pub mod infer;
pub mod network;
pub mod oracle;
pub mod parse;
pub mod pulse;
pub mod rewrite;
pub mod sat;

pub use atom::{Atom, Valuation};
pub use expand::{expand, equivalent, MultilinearForm};
pub use expr::Qp;
pub use network::Network;
