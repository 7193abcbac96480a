//! AND-OR-NOT networks: nodes, links, validation, and the rewrites that
//! push a network into the form the inference recursion wants (unit-prior
//! roots, inhibition only through NOT nodes).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atom::Atom;

/// A link or joint label: either the constant 1 (a sure event) or an
/// elementary probability symbol. Each symbol may appear on at most one
/// label in a network.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Label {
    One,
    Sym(Atom),
}

impl Label {
    pub fn sym(name: &str) -> Label {
        Label::Sym(Atom::new(name))
    }

    pub fn atom(&self) -> Option<&Atom> {
        match self {
            Label::One => None,
            Label::Sym(a) => Some(a),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::One => write!(f, "1"),
            Label::Sym(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::One => serializer.serialize_u64(1),
            Label::Sym(a) => serializer.serialize_str(a.name()),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Label, D::Error> {
        struct LabelVisitor;

        impl Visitor<'_> for LabelVisitor {
            type Value = Label;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a symbol string or the literal 1")
            }

            fn visit_u64<E: de::Error>(self, n: u64) -> Result<Label, E> {
                if n == 1 {
                    Ok(Label::One)
                } else {
                    Err(E::custom("the only numeric label is 1"))
                }
            }

            fn visit_i64<E: de::Error>(self, n: i64) -> Result<Label, E> {
                self.visit_u64(n.try_into().map_err(|_| E::custom("negative label"))?)
            }

            fn visit_f64<E: de::Error>(self, n: f64) -> Result<Label, E> {
                if n == 1.0 {
                    Ok(Label::One)
                } else {
                    Err(E::custom("the only numeric label is 1"))
                }
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Label, E> {
                if s.is_empty() {
                    Err(E::custom("empty label symbol"))
                } else {
                    Ok(Label::Sym(Atom::new(s)))
                }
            }
        }

        deserializer.deserialize_any(LabelVisitor)
    }
}

fn label_one() -> Label {
    Label::One
}

fn is_one(label: &Label) -> bool {
    *label == Label::One
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    #[serde(default = "label_one", skip_serializing_if = "is_one")]
    pub label: Label,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inhibitory: bool,
}

impl Link {
    pub fn ordinary(from: &str, label: Label) -> Link {
        Link {
            from: from.into(),
            label,
            inhibitory: false,
        }
    }

    pub fn inhibitory(from: &str, label: Label) -> Link {
        Link {
            from: from.into(),
            label,
            inhibitory: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Root,
    And,
    Or,
    Not,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeKind::Root => "root",
            NodeKind::And => "and",
            NodeKind::Or => "or",
            NodeKind::Not => "not",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<Link>,
}

impl NodeSpec {
    pub fn root(id: &str) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::Root,
            joint_label: None,
            links: Vec::new(),
        }
    }

    /// AND node: the joint label prices the whole conjunction, the links
    /// themselves are unlabelled.
    pub fn and<'a>(
        id: &str,
        joint: Label,
        parents: impl IntoIterator<Item = (&'a str, bool)>,
    ) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::And,
            joint_label: Some(joint),
            links: parents
                .into_iter()
                .map(|(from, inhibitory)| Link {
                    from: from.into(),
                    label: Label::One,
                    inhibitory,
                })
                .collect(),
        }
    }

    pub fn or(id: &str, links: impl IntoIterator<Item = Link>) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::Or,
            joint_label: None,
            links: links.into_iter().collect(),
        }
    }

    pub fn not(id: &str, from: &str, label: Label) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            kind: NodeKind::Not,
            joint_label: None,
            links: vec![Link::inhibitory(from, label)],
        }
    }

    /// All probability symbols this node introduces (link labels plus the
    /// joint label).
    pub fn label_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.links
            .iter()
            .filter_map(|l| l.label.atom())
            .chain(self.joint_label.iter().filter_map(Label::atom))
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum Violation {
    #[error("duplicate node id {id}")]
    DuplicateId { id: String },
    #[error("node {id} links to unknown node {from}")]
    DanglingLink { id: String, from: String },
    #[error("root {id} must not have incoming links")]
    RootWithLinks { id: String },
    #[error("and node {id} needs at least 2 parents, has {n}")]
    AndArity { id: String, n: usize },
    #[error("and node {id} has no joint label")]
    AndMissingJoint { id: String },
    #[error("and node {id} carries a label on a link; only the joint label prices an and")]
    AndLinkLabel { id: String },
    #[error("or node {id} needs at least 1 parent")]
    OrNoParents { id: String },
    #[error("or node {id} must reach its parents through ordinary labelled links")]
    OrShape { id: String },
    #[error("not node {id} needs exactly one inhibitory link")]
    NotShape { id: String },
    #[error("node {id} of kind {kind} cannot carry a joint label")]
    StrayJointLabel { id: String, kind: NodeKind },
    #[error("label symbol {atom} appears more than once")]
    DuplicateLabel { atom: Atom },
    #[error("cycle through {ids:?}")]
    Cycle { ids: Vec<String> },
}

/// Checks the structural rules; an empty list means the nodes form a valid
/// network. Violations are data so callers can report several at once.
pub fn validate(nodes: &[NodeSpec]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for n in nodes {
        if !ids.insert(&n.id) {
            out.push(Violation::DuplicateId { id: n.id.clone() });
        }
    }
    let mut seen_labels: BTreeSet<&Atom> = BTreeSet::new();
    for n in nodes {
        for l in &n.links {
            if !ids.contains(l.from.as_str()) {
                out.push(Violation::DanglingLink {
                    id: n.id.clone(),
                    from: l.from.clone(),
                });
            }
        }
        match n.kind {
            NodeKind::Root => {
                if !n.links.is_empty() {
                    out.push(Violation::RootWithLinks { id: n.id.clone() });
                }
            }
            NodeKind::And => {
                if n.links.len() < 2 {
                    out.push(Violation::AndArity {
                        id: n.id.clone(),
                        n: n.links.len(),
                    });
                }
                if n.joint_label.is_none() {
                    out.push(Violation::AndMissingJoint { id: n.id.clone() });
                }
                if n.links.iter().any(|l| l.label != Label::One) {
                    out.push(Violation::AndLinkLabel { id: n.id.clone() });
                }
            }
            NodeKind::Or => {
                if n.links.is_empty() {
                    out.push(Violation::OrNoParents { id: n.id.clone() });
                }
            }
            NodeKind::Not => {
                if n.links.len() != 1 || !n.links[0].inhibitory {
                    out.push(Violation::NotShape { id: n.id.clone() });
                }
            }
        }
        if n.joint_label.is_some() && matches!(n.kind, NodeKind::Root | NodeKind::Or) {
            out.push(Violation::StrayJointLabel {
                id: n.id.clone(),
                kind: n.kind,
            });
        }
        for atom in n.label_atoms() {
            if !seen_labels.insert(atom) {
                out.push(Violation::DuplicateLabel { atom: atom.clone() });
            }
        }
    }
    if let Err(stuck) = topo_order(nodes) {
        out.push(Violation::Cycle { ids: stuck });
    }
    out
}

/// Declaration-order Kahn sweep; `Err` carries the nodes left on a cycle.
/// Quadratic in node count, which the intended network sizes never notice.
fn topo_order(nodes: &[NodeSpec]) -> Result<Vec<String>, Vec<String>> {
    let index: BTreeMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut indegree: Vec<usize> = nodes
        .iter()
        .map(|n| {
            n.links
                .iter()
                .filter(|l| index.contains_key(l.from.as_str()))
                .count()
        })
        .collect();
    let mut placed = vec![false; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    loop {
        let next = (0..nodes.len()).find(|&i| !placed[i] && indegree[i] == 0);
        let i = match next {
            Some(i) => i,
            None => break,
        };
        placed[i] = true;
        order.push(nodes[i].id.clone());
        for (j, n) in nodes.iter().enumerate() {
            if placed[j] {
                continue;
            }
            for l in &n.links {
                if l.from == nodes[i].id {
                    // duplicate ids decrement once per duplicate while the
                    // count above saw one source; saturate rather than
                    // panic, validation reports the duplicates themselves
                    indegree[j] = indegree[j].saturating_sub(1);
                }
            }
        }
    }
    if order.len() == nodes.len() {
        Ok(order)
    } else {
        Err(nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !placed[*i])
            .map(|(_, n)| n.id.clone())
            .collect())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid network: {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct InvalidNetwork {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("node {id} is not a root")]
    NotARoot { id: String },
    #[error("no node named {id}")]
    UnknownNode { id: String },
}

/// A validated network with its topological order cached. Immutable after
/// construction; the rewrites below return fresh networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct Network {
    nodes: Vec<NodeSpec>,
    by_id: BTreeMap<String, usize>,
    topo: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    nodes: Vec<NodeSpec>,
}

impl TryFrom<NetworkFile> for Network {
    type Error = InvalidNetwork;

    fn try_from(f: NetworkFile) -> Result<Network, InvalidNetwork> {
        Network::from_nodes(f.nodes)
    }
}

impl From<Network> for NetworkFile {
    fn from(net: Network) -> NetworkFile {
        NetworkFile { nodes: net.nodes }
    }
}

impl Network {
    pub fn from_nodes(nodes: Vec<NodeSpec>) -> Result<Network, InvalidNetwork> {
        let violations = validate(&nodes);
        if !violations.is_empty() {
            return Err(InvalidNetwork { violations });
        }
        let topo = topo_order(&nodes).expect("validated networks are acyclic");
        let by_id = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        Ok(Network { nodes, by_id, topo })
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.by_id.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// Node ids, parents before children.
    pub fn topo(&self) -> &[String] {
        &self.topo
    }

    /// Every probability symbol in the network.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        self.nodes
            .iter()
            .flat_map(|n| n.label_atoms().cloned())
            .collect()
    }

    /// Rewrites each named root R with a nonunit prior p into the pair
    /// R' (unit root) -> R (OR via a link labelled p), so that afterwards
    /// every root is a sure event. Re-running with the same priors is a
    /// no-op: already-rewritten nodes are recognized and skipped.
    pub fn normalize_roots(
        &self,
        priors: &BTreeMap<String, Label>,
    ) -> Result<Network, NormalizeError> {
        let mut nodes = self.nodes.clone();
        let mut fresh = Vec::new();
        for (id, prior) in priors {
            let sym = match prior {
                Label::One => continue,
                Label::Sym(a) => a.clone(),
            };
            let i = match self.by_id.get(id) {
                Some(&i) => i,
                None => return Err(NormalizeError::UnknownNode { id: id.clone() }),
            };
            let fresh_id = format!("__prior_{id}");
            match nodes[i].kind {
                NodeKind::Root => {
                    nodes[i] = NodeSpec::or(id, [Link::ordinary(&fresh_id, Label::Sym(sym))]);
                    fresh.push(NodeSpec::root(&fresh_id));
                }
                NodeKind::Or
                    if nodes[i].links.len() == 1
                        && nodes[i].links[0].from == fresh_id
                        && nodes[i].links[0].label == Label::Sym(sym.clone())
                        && !nodes[i].links[0].inhibitory
                        && self.node(&fresh_id).map(|n| n.kind) == Some(NodeKind::Root) => {}
                _ => return Err(NormalizeError::NotARoot { id: id.clone() }),
            }
        }
        fresh.extend(nodes);
        Ok(Network::from_nodes(fresh).expect("prior rewrite keeps the network valid"))
    }

    /// Reroutes inhibitory links into AND and OR nodes through shared
    /// deterministic NOT nodes, leaving inhibition only where it belongs.
    /// Event probabilities are untouched: a label-1 NOT of A is true exactly
    /// when A is false.
    pub fn eliminate_inhibitory(&self) -> Network {
        let mut nots: BTreeMap<String, String> = BTreeMap::new();
        let mut nodes = self.nodes.clone();
        for n in &mut nodes {
            if n.kind == NodeKind::Not {
                continue;
            }
            for l in &mut n.links {
                if !l.inhibitory {
                    continue;
                }
                let not_id = nots
                    .entry(l.from.clone())
                    .or_insert_with(|| format!("__not_{}", l.from));
                l.from = not_id.clone();
                l.inhibitory = false;
            }
        }
        let mut fresh: Vec<NodeSpec> = nots
            .into_iter()
            .map(|(parent, id)| NodeSpec::not(&id, &parent, Label::One))
            .collect();
        fresh.extend(nodes);
        Network::from_nodes(fresh).expect("rerouting inhibition keeps the network valid")
    }
}
