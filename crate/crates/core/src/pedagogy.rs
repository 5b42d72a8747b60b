//! Student-centred learning paths.
//!
//! Course content is a two-level dependency DAG: topics, each optionally
//! holding its own DAG of components. A student may take any item whose
//! prerequisites are complete, in any order. A topic with components is
//! complete once all of its components are.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest graph [`TopicGraph::valid_orderings`] will enumerate.
pub const MAX_ENUMERATION_NODES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PedagogyError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("dependency would create a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("{node:?} is locked; missing prerequisites: {}", .missing.join(", "))]
    Locked { node: String, missing: Vec<String> },
    #[error("inconsistent progress: {0}")]
    Inconsistent(String),
    #[error("graph has {0} nodes; enumeration is limited to {MAX_ENUMERATION_NODES}")]
    TooLarge(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicNode {
    pub title: String,
    pub components: Option<TopicGraph>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct TopicGraph {
    nodes: BTreeMap<String, TopicNode>,
    /// `(before, after)` pairs.
    edges: BTreeSet<(String, String)>,
}

impl TopicGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped course: one examination topic whose three tests can be
    /// taken in any order.
    pub fn oculomotor_default() -> Self {
        let mut tests = TopicGraph::new();
        for (id, title) in [
            ("saccade-latency", "Test 1: saccade latency"),
            ("smooth-pursuit", "Test 2: smooth pursuit precision"),
            ("vor", "Test 3: vestibulo-ocular reflex"),
        ] {
            tests.add_node(id, title).expect("distinct ids");
        }
        let mut g = TopicGraph::new();
        g.add_topic("oculomotor-examination", "Oculomotor examination", Some(tests))
            .expect("fresh graph");
        g
    }

    pub fn add_node(&mut self, id: &str, title: &str) -> Result<(), PedagogyError> {
        self.add_topic(id, title, None)
    }

    pub fn add_topic(&mut self, id: &str, title: &str, components: Option<TopicGraph>) -> Result<(), PedagogyError> {
        if id.is_empty() || id.contains('/') {
            return Err(PedagogyError::Invalid(format!("node id {id:?} must be non-empty and contain no '/'")));
        }
        if self.nodes.contains_key(id) {
            return Err(PedagogyError::DuplicateNode(id.to_string()));
        }
        if let Some(c) = &components {
            if c.nodes.values().any(|n| n.components.is_some()) {
                return Err(PedagogyError::Invalid(format!(
                    "components of {id:?} may not have components of their own"
                )));
            }
        }
        self.nodes.insert(id.to_string(), TopicNode { title: title.to_string(), components });
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Option<&TopicNode> {
        self.nodes.get(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn prerequisites<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(_, b)| b == id).map(|(a, _)| a.as_str())
    }

    fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(a, _)| a == id).map(|(_, b)| b.as_str())
    }

    /// Shortest path `from ⇝ to` along existing edges.
    fn path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(n) = queue.pop_front() {
            if n == to {
                let mut path = vec![to.to_string()];
                let mut cur = to;
                while let Some(p) = prev.get(cur) {
                    path.push(p.to_string());
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for s in self.successors(n) {
                if seen.insert(s) {
                    prev.insert(s, n);
                    queue.push_back(s);
                }
            }
        }
        None
    }

    /// Adds "`from` must precede `to`". Rejected, leaving the graph unchanged,
    /// if either node is unknown or the edge would close a cycle.
    pub fn add_dependency(&mut self, from: &str, to: &str) -> Result<(), PedagogyError> {
        for id in [from, to] {
            if !self.contains(id) {
                return Err(PedagogyError::UnknownNode(id.to_string()));
            }
        }
        if from == to {
            return Err(PedagogyError::Cycle(vec![from.to_string(), to.to_string()]));
        }
        if let Some(mut back) = self.path(to, from) {
            back.insert(0, from.to_string());
            return Err(PedagogyError::Cycle(back));
        }
        self.edges.insert((from.to_string(), to.to_string()));
        Ok(())
    }

    /// Dependency between two components of the same topic.
    pub fn add_component_dependency(&mut self, topic: &str, from: &str, to: &str) -> Result<(), PedagogyError> {
        let node = self.nodes.get_mut(topic).ok_or_else(|| PedagogyError::UnknownNode(topic.to_string()))?;
        let comps = node
            .components
            .as_mut()
            .ok_or_else(|| PedagogyError::Invalid(format!("topic {topic:?} has no components")))?;
        comps.add_dependency(from, to)
    }

    pub fn roots(&self) -> BTreeSet<String> {
        self.nodes
            .keys()
            .filter(|id| self.prerequisites(id).next().is_none())
            .cloned()
            .collect()
    }

    fn check_completed(&self, completed: &BTreeSet<String>) -> Result<(), PedagogyError> {
        for id in completed {
            if !self.contains(id) {
                return Err(PedagogyError::Inconsistent(format!("completed node {id:?} is not in the graph")));
            }
            if let Some(p) = self.prerequisites(id).find(|p| !completed.contains(*p)) {
                return Err(PedagogyError::Inconsistent(format!(
                    "{id:?} is completed but its prerequisite {p:?} is not"
                )));
            }
        }
        Ok(())
    }

    /// Nodes not yet completed whose prerequisites all are.
    pub fn frontier(&self, completed: &BTreeSet<String>) -> Result<BTreeSet<String>, PedagogyError> {
        self.check_completed(completed)?;
        Ok(self
            .nodes
            .keys()
            .filter(|id| !completed.contains(*id))
            .filter(|id| self.prerequisites(id).all(|p| completed.contains(p)))
            .cloned()
            .collect())
    }

    /// Every topological order, by filtering all permutations.
    pub fn valid_orderings(&self) -> Result<Vec<Vec<String>>, PedagogyError> {
        let n = self.nodes.len();
        if n > MAX_ENUMERATION_NODES {
            return Err(PedagogyError::TooLarge(n));
        }
        let ids: Vec<&String> = self.nodes.keys().collect();
        let mut out = Vec::new();
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let pos: BTreeMap<&str, usize> = p.iter().enumerate().map(|(i, &k)| (ids[k].as_str(), i)).collect();
            if self.edges.iter().all(|(a, b)| pos[a.as_str()] < pos[b.as_str()]) {
                out.push(p.iter().map(|&k| ids[k].clone()).collect());
            }
        });
        out.sort();
        Ok(out)
    }

    fn validate(&self, depth: usize) -> Result<(), PedagogyError> {
        for (a, b) in &self.edges {
            for id in [a, b] {
                if !self.contains(id) {
                    return Err(PedagogyError::Invalid(format!("edge references unknown node {id:?}")));
                }
            }
        }
        // Kahn's algorithm: a DAG drains completely.
        let mut indeg: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b.as_str()).expect("checked above") += 1;
        }
        let mut ready: Vec<&str> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut drained = 0;
        while let Some(n) = ready.pop() {
            drained += 1;
            for s in self.successors(n) {
                let d = indeg.get_mut(s).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.push(s);
                }
            }
        }
        if drained != self.nodes.len() {
            return Err(PedagogyError::Invalid("dependency graph contains a cycle".into()));
        }
        for (id, node) in &self.nodes {
            if let Some(c) = &node.components {
                if depth > 0 {
                    return Err(PedagogyError::Invalid(format!("{id:?}: nesting is limited to two levels")));
                }
                c.validate(depth + 1)?;
            }
        }
        Ok(())
    }
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeFile {
    id: String,
    title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    components: Option<GraphFile>,
}

/// On-disk graph shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    nodes: Vec<NodeFile>,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

impl TryFrom<GraphFile> for TopicGraph {
    type Error = PedagogyError;

    fn try_from(f: GraphFile) -> Result<Self, Self::Error> {
        fn build(f: GraphFile) -> Result<TopicGraph, PedagogyError> {
            let mut g = TopicGraph::new();
            for n in f.nodes {
                let comps = n.components.map(build).transpose()?;
                if g.nodes.insert(n.id.clone(), TopicNode { title: n.title, components: comps }).is_some() {
                    return Err(PedagogyError::DuplicateNode(n.id));
                }
            }
            g.edges = f.edges.into_iter().collect();
            Ok(g)
        }
        let g = build(f)?;
        g.validate(0)?;
        Ok(g)
    }
}

impl From<TopicGraph> for GraphFile {
    fn from(g: TopicGraph) -> Self {
        GraphFile {
            nodes: g
                .nodes
                .into_iter()
                .map(|(id, n)| NodeFile { id, title: n.title, components: n.components.map(GraphFile::from) })
                .collect(),
            edges: g.edges.into_iter().collect(),
        }
    }
}

/// Address of a topic (`"topic"`) or one of its components (`"topic/component"`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeRef {
    pub topic: String,
    pub component: Option<String>,
}

impl std::str::FromStr for NodeRef {
    type Err = PedagogyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('/');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(t), None, None) if !t.is_empty() => Ok(NodeRef { topic: t.into(), component: None }),
            (Some(t), Some(c), None) if !t.is_empty() && !c.is_empty() => {
                Ok(NodeRef { topic: t.into(), component: Some(c.into()) })
            }
            _ => Err(PedagogyError::Invalid(format!("bad node reference {s:?}"))),
        }
    }
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.component {
            Some(c) => write!(f, "{}/{}", self.topic, c),
            None => f.write_str(&self.topic),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProgress {
    pub student_id: String,
    /// Completed topics.
    pub completed: BTreeSet<String>,
    /// Completed components, per topic.
    #[serde(default)]
    pub components: BTreeMap<String, BTreeSet<String>>,
}

impl StudentProgress {
    pub fn new(student_id: &str) -> Self {
        Self { student_id: student_id.to_string(), ..Self::default() }
    }

    pub fn is_complete(&self, node: &NodeRef) -> bool {
        match &node.component {
            None => self.completed.contains(&node.topic),
            Some(c) => self.components.get(&node.topic).is_some_and(|s| s.contains(c)),
        }
    }
}

/// Everything a student may work on next.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frontier {
    pub topics: BTreeSet<String>,
    /// For each available topic that has components, its available components.
    pub components: BTreeMap<String, BTreeSet<String>>,
}

impl Frontier {
    pub fn refs(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.topics {
            match self.components.get(t) {
                Some(cs) => out.extend(cs.iter().map(|c| format!("{t}/{c}"))),
                None => out.push(t.clone()),
            }
        }
        out
    }
}

pub fn student_frontier(graph: &TopicGraph, progress: &StudentProgress) -> Result<Frontier, PedagogyError> {
    let topics = graph.frontier(&progress.completed)?;
    let mut components = BTreeMap::new();
    for t in &topics {
        if let Some(c) = graph.node(t).and_then(|n| n.components.as_ref()) {
            let done = progress.components.get(t).cloned().unwrap_or_default();
            components.insert(t.clone(), c.frontier(&done)?);
        }
    }
    Ok(Frontier { topics, components })
}

/// Records `node` as complete. Re-completing is a no-op; a node whose
/// prerequisites are unmet is rejected with the missing ones listed.
pub fn mark_complete(
    progress: &StudentProgress,
    graph: &TopicGraph,
    node: &NodeRef,
) -> Result<StudentProgress, PedagogyError> {
    let topic = graph.node(&node.topic).ok_or_else(|| PedagogyError::UnknownNode(node.topic.clone()))?;
    graph.check_completed(&progress.completed)?;
    let mut next = progress.clone();
    if progress.is_complete(node) {
        return Ok(next);
    }
    let missing_topics: Vec<String> = graph
        .prerequisites(&node.topic)
        .filter(|p| !progress.completed.contains(*p))
        .map(str::to_string)
        .collect();
    match (&node.component, &topic.components) {
        (None, None) => {
            if !missing_topics.is_empty() {
                return Err(PedagogyError::Locked { node: node.to_string(), missing: missing_topics });
            }
            next.completed.insert(node.topic.clone());
        }
        (None, Some(comps)) => {
            let done = progress.components.get(&node.topic).cloned().unwrap_or_default();
            let mut missing = missing_topics;
            missing.extend(comps.node_ids().filter(|c| !done.contains(*c)).map(|c| format!("{}/{c}", node.topic)));
            return Err(PedagogyError::Locked { node: node.to_string(), missing });
        }
        (Some(c), None) => return Err(PedagogyError::UnknownNode(format!("{}/{c}", node.topic))),
        (Some(c), Some(comps)) => {
            if !comps.contains(c) {
                return Err(PedagogyError::UnknownNode(node.to_string()));
            }
            let done = next.components.entry(node.topic.clone()).or_default();
            comps.check_completed(done)?;
            let mut missing = missing_topics;
            missing.extend(comps.prerequisites(c).filter(|p| !done.contains(*p)).map(|p| format!("{}/{p}", node.topic)));
            if !missing.is_empty() {
                return Err(PedagogyError::Locked { node: node.to_string(), missing });
            }
            done.insert(c.clone());
            if comps.node_ids().all(|id| done.contains(id)) {
                next.completed.insert(node.topic.clone());
            }
        }
    }
    Ok(next)
}
