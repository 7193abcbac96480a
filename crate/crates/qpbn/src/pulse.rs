//! Stochastic inference with square-wave pulse trains. Each probability
//! symbol becomes a periodic bit train whose duty cycle is the probability;
//! weak products turn into bitwise AND, complements into bitwise NOT. One
//! train per symbol makes idempotency physical: a train ANDed with itself
//! is itself, so shared subexpressions correlate exactly as the algebra
//! demands.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::atom::{Atom, Valuation};
use crate::infer::{Literal, Query};
use crate::network::{Label, Link, Network, NodeKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PulseConfig {
    /// Slots per period; one pulse of width round(p * R) per period.
    pub slots_per_period: usize,
    pub periods: usize,
    pub seed: u64,
}

impl PulseConfig {
    pub fn new(slots_per_period: usize, periods: usize, seed: u64) -> PulseConfig {
        assert!(slots_per_period >= 2, "need at least two slots per period");
        assert!(periods >= 1, "need at least one period");
        PulseConfig {
            slots_per_period,
            periods,
            seed,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots_per_period * self.periods
    }

    /// Independent RNG substream per train. FNV-1a over the stream name
    /// keeps the assignment stable across platforms and worker splits.
    fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&h.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PulseError {
    #[error("pulse trains built under different configs")]
    ConfigMismatch,
    #[error("evidence pulse train has zero area")]
    ZeroEvidenceArea,
    #[error("no value for probability symbol {atom}")]
    MissingAtom { atom: Atom },
    #[error("query mentions unknown node {id}")]
    UnknownNode { id: String },
}

/// Bit train of length periods * R, packed into 64-bit words. Unused bits
/// of the final word stay zero so population counts need no masking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PulseTrain {
    words: Vec<u64>,
    config: PulseConfig,
}

/// Sets bits [start, start + len) word by word.
fn set_run(words: &mut [u64], start: usize, len: usize) {
    let mut at = start;
    let end = start + len;
    while at < end {
        let bit = at % 64;
        let take = (64 - bit).min(end - at);
        let mask = if take == 64 {
            !0
        } else {
            ((1u64 << take) - 1) << bit
        };
        words[at / 64] |= mask;
        at += take;
    }
}

impl PulseTrain {
    fn blank(config: &PulseConfig) -> PulseTrain {
        PulseTrain {
            words: vec![0; config.slots().div_ceil(64)],
            config: config.clone(),
        }
    }

    pub fn all_zero(config: &PulseConfig) -> PulseTrain {
        PulseTrain::blank(config)
    }

    pub fn all_one(config: &PulseConfig) -> PulseTrain {
        PulseTrain::blank(config).pt_complement()
    }

    pub fn config(&self) -> &PulseConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.slots()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn area(&self) -> f64 {
        self.count_ones() as f64 / self.len() as f64
    }

    pub fn bit(&self, slot: usize) -> bool {
        self.words[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn pt_product(&self, other: &PulseTrain) -> Result<PulseTrain, PulseError> {
        if self.config != other.config {
            return Err(PulseError::ConfigMismatch);
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a & b)
            .collect();
        Ok(PulseTrain {
            words,
            config: self.config.clone(),
        })
    }

    pub fn pt_complement(&self) -> PulseTrain {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.len() % 64;
        if tail != 0 {
            *words.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        PulseTrain {
            words,
            config: self.config.clone(),
        }
    }
}

/// One pulse per period, width round(p * R), at an independent uniform
/// offset per period with wrap-around inside the period.
pub fn make_train(p: f64, config: &PulseConfig, stream: &str) -> PulseTrain {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    let r = config.slots_per_period;
    let w = ((p * r as f64).round() as usize).min(r);
    let mut train = PulseTrain::blank(config);
    if w == 0 {
        return train;
    }
    let mut rng = config.stream(stream);
    for k in 0..config.periods {
        let base = k * r;
        let offset = rng.random_range(0..r);
        let head = (r - offset).min(w);
        set_run(&mut train.words, base + offset, head);
        // wrapped remainder lands at the start of the same period
        set_run(&mut train.words, base, w - head);
    }
    train
}

/// One train per symbol, shared across every lookup under one config.
pub struct TrainCache {
    config: PulseConfig,
    trains: BTreeMap<Atom, PulseTrain>,
}

impl TrainCache {
    pub fn new(config: PulseConfig) -> TrainCache {
        TrainCache {
            config,
            trains: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &PulseConfig {
        &self.config
    }

    pub fn train(&mut self, atom: &Atom, p: f64) -> &PulseTrain {
        self.trains
            .entry(atom.clone())
            .or_insert_with(|| make_train(p, &self.config, atom.name()))
    }
}

fn label_train(cache: &mut TrainCache, label: &Label, v: &Valuation) -> Result<PulseTrain, PulseError> {
    match label {
        Label::One => Ok(PulseTrain::all_one(cache.config())),
        Label::Sym(a) => {
            let p = v.get(a).ok_or_else(|| PulseError::MissingAtom { atom: a.clone() })?;
            Ok(cache.train(a, p).clone())
        }
    }
}

fn product(trains: impl IntoIterator<Item = PulseTrain>) -> Result<Option<PulseTrain>, PulseError> {
    let mut acc: Option<PulseTrain> = None;
    for t in trains {
        acc = Some(match acc {
            None => t,
            Some(a) => a.pt_product(&t)?,
        });
    }
    Ok(acc)
}

/// Root-to-leaf sweep assigning every node its marginal train. Shared
/// parents contribute one train to all their children, so products across
/// children stay consistent with the weak-product algebra.
fn sweep(
    net: &Network,
    v: &Valuation,
    cache: &mut TrainCache,
) -> Result<BTreeMap<String, PulseTrain>, PulseError> {
    let mut trains: BTreeMap<String, PulseTrain> = BTreeMap::new();
    for id in net.topo() {
        let spec = net.node(id).expect("topo order lists known nodes");
        let fire = |trains: &BTreeMap<String, PulseTrain>, cache: &mut TrainCache, l: &Link| {
            let parent = &trains[&l.from];
            let parent = if l.inhibitory {
                parent.pt_complement()
            } else {
                parent.clone()
            };
            label_train(cache, &l.label, v)?.pt_product(&parent)
        };
        let train = match spec.kind {
            NodeKind::Root => PulseTrain::all_one(cache.config()),
            NodeKind::And | NodeKind::Not => {
                let mut parts = Vec::new();
                if let Some(joint) = &spec.joint_label {
                    parts.push(label_train(cache, joint, v)?);
                }
                for l in &spec.links {
                    parts.push(fire(&trains, cache, l)?);
                }
                product(parts)?.expect("and/not nodes have links")
            }
            NodeKind::Or => {
                let mut misses = Vec::new();
                for l in &spec.links {
                    misses.push(fire(&trains, cache, l)?.pt_complement());
                }
                product(misses)?
                    .expect("or nodes have links")
                    .pt_complement()
            }
        };
        trains.insert(id.clone(), train);
    }
    Ok(trains)
}

fn literal_train(
    trains: &BTreeMap<String, PulseTrain>,
    lits: &[Literal],
    config: &PulseConfig,
) -> Result<PulseTrain, PulseError> {
    let mut parts = Vec::new();
    for lit in lits {
        let t = trains
            .get(&lit.node)
            .ok_or_else(|| PulseError::UnknownNode {
                id: lit.node.clone(),
            })?;
        parts.push(if lit.positive {
            t.clone()
        } else {
            t.pt_complement()
        });
    }
    Ok(product(parts)?.unwrap_or_else(|| PulseTrain::all_one(config)))
}

pub fn estimate_event(
    net: &Network,
    lits: &[Literal],
    v: &Valuation,
    config: &PulseConfig,
) -> Result<f64, PulseError> {
    let mut cache = TrainCache::new(config.clone());
    let trains = sweep(net, v, &mut cache)?;
    Ok(literal_train(&trains, lits, config)?.area())
}

/// Both sides of the conditional come from one sweep, so the target and
/// evidence trains stay correlated exactly as their QPs prescribe.
pub fn estimate_conditional(
    net: &Network,
    q: &Query,
    v: &Valuation,
    config: &PulseConfig,
) -> Result<f64, PulseError> {
    let mut cache = TrainCache::new(config.clone());
    let trains = sweep(net, v, &mut cache)?;
    let evidence = literal_train(&trains, q.evidence(), config)?;
    let hits = evidence.count_ones();
    if hits == 0 {
        return Err(PulseError::ZeroEvidenceArea);
    }
    let targets = literal_train(&trains, q.targets(), config)?;
    let joint = targets.pt_product(&evidence)?;
    Ok(joint.count_ones() as f64 / hits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NodeSpec;

    fn cfg(periods: usize, seed: u64) -> PulseConfig {
        PulseConfig::new(64, periods, seed)
    }

    fn two_route_net() -> Network {
        Network::from_nodes(vec![
            NodeSpec::root("__prior_B"),
            NodeSpec::root("__prior_C"),
            NodeSpec::or("B", [Link::ordinary("__prior_B", Label::sym("p"))]),
            NodeSpec::or("C", [Link::ordinary("__prior_C", Label::sym("q"))]),
            NodeSpec::and("D", Label::sym("r"), [("B", false), ("C", false)]),
            NodeSpec::or("E", [Link::ordinary("C", Label::sym("t"))]),
            NodeSpec::or(
                "F",
                [
                    Link::ordinary("D", Label::sym("s")),
                    Link::ordinary("E", Label::sym("u")),
                ],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn trains_have_one_wrapped_pulse_per_period() {
        let config = PulseConfig::new(4, 200, 7);
        let t = make_train(0.5, &config, "p");
        for k in 0..config.periods {
            let bits: Vec<bool> = (0..4).map(|i| t.bit(k * 4 + i)).collect();
            assert_eq!(bits.iter().filter(|b| **b).count(), 2, "period {k}");
            // exactly one falling edge in cyclic order means one run
            let falls = (0..4)
                .filter(|&i| bits[i] && !bits[(i + 1) % 4])
                .count();
            assert_eq!(falls, 1, "period {k}: {bits:?}");
        }

        assert_eq!(make_train(0.0, &config, "p").count_ones(), 0);
        assert_eq!(make_train(1.0, &config, "p").count_ones(), config.slots());
    }

    #[test]
    fn idempotency_and_annihilation_are_bit_exact() {
        let config = cfg(500, 1);
        let t = make_train(0.37, &config, "p");
        assert_eq!(t.pt_product(&t).unwrap(), t);
        assert_eq!(
            t.pt_product(&t.pt_complement()).unwrap(),
            PulseTrain::all_zero(&config)
        );
        assert_eq!(t.pt_product(&PulseTrain::all_one(&config)).unwrap(), t);
        assert_eq!(t.pt_complement().pt_complement(), t);
        assert_eq!(t.count_ones() + t.pt_complement().count_ones(), t.len());

        let other = PulseTrain::all_one(&cfg(501, 1));
        assert_eq!(t.pt_product(&other), Err(PulseError::ConfigMismatch));
    }

    #[test]
    fn independent_trains_multiply_areas() {
        let config = cfg(10_000, 42);
        let a = make_train(0.5, &config, "a");
        let b = make_train(0.5, &config, "b");
        let overlap = a.pt_product(&b).unwrap().area();
        assert!((overlap - 0.25).abs() <= 0.01, "overlap {overlap}");
    }

    #[test]
    fn trains_are_deterministic_per_seed_and_stream() {
        let config = cfg(100, 3);
        assert_eq!(make_train(0.3, &config, "p"), make_train(0.3, &config, "p"));
        assert_ne!(make_train(0.3, &config, "p"), make_train(0.3, &config, "q"));
        let reseeded = cfg(100, 4);
        assert_ne!(
            make_train(0.3, &config, "p"),
            make_train(0.3, &reseeded, "p")
        );
    }

    #[test]
    fn sweep_estimates_the_disjunction_marginal() {
        let net = two_route_net();
        let v = Valuation::uniform(net.atoms(), 0.5);
        let est = estimate_event(&net, &[Literal::pos("F")], &v, &cfg(20_000, 9)).unwrap();
        assert!((est - 11.0 / 64.0).abs() <= 0.02, "estimate {est}");
    }

    #[test]
    fn deterministic_networks_estimate_exactly() {
        let net = Network::from_nodes(vec![
            NodeSpec::root("A"),
            NodeSpec::or("B", [Link::ordinary("A", Label::One)]),
            NodeSpec::not("C", "B", Label::One),
        ])
        .unwrap();
        let v = Valuation::uniform([], 0.5);
        assert_eq!(
            estimate_event(&net, &[Literal::pos("B")], &v, &cfg(50, 2)).unwrap(),
            1.0
        );
        assert_eq!(
            estimate_event(&net, &[Literal::pos("C")], &v, &cfg(50, 2)).unwrap(),
            0.0
        );
    }

    #[test]
    fn conditionals_share_the_sweep() {
        let net = two_route_net();
        let v = Valuation::uniform(net.atoms(), 0.5);
        let q = Query::parse("B | F").unwrap();
        let est = estimate_conditional(&net, &q, &v, &cfg(20_000, 17)).unwrap();
        assert!((est - 7.0 / 11.0).abs() <= 0.03, "estimate {est}");

        let same = Query::parse("B | B").unwrap();
        assert_eq!(
            estimate_conditional(&net, &same, &v, &cfg(100, 1)).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_area_evidence_is_an_error() {
        let net = two_route_net();
        let mut v = Valuation::uniform(net.atoms(), 0.5);
        v.set(Atom::new("q"), 0.0).unwrap();
        let q = Query::parse("B | D").unwrap();
        assert_eq!(
            estimate_conditional(&net, &q, &v, &cfg(100, 1)),
            Err(PulseError::ZeroEvidenceArea)
        );
    }
}
