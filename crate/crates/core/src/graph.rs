//! The course knowledge graph.
//!
//! Nodes are deduplicated by `(canonical label, kind)`; edges by
//! `(src, dst, relation label, kind)`. Ids are `n<k>` / `e<k>` in first
//! insertion order and survive save/load unchanged. A built graph is never
//! mutated.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::diag::{self, Diagnostic};
use crate::provider::{RawNode, RawRelation};
use crate::taxonomy::{canonical_label, EdgeKind, GeneralKind, NodeKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Fill colors used by overlays.
pub mod colors {
    pub const MASTERED: &str = "#ffd700";
    pub const LAGGING: &str = "#2ca02c";
    pub const COURSE: &str = "#d62728";
}

macro_rules! prefixed_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .filter(|digits| {
                        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
                    })
                    .and_then(|digits| digits.parse().ok())
                    .map($name)
                    .ok_or_else(|| {
                        format!(concat!("invalid id {:?}, expected ", $prefix, "<k>"), s)
                    })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

prefixed_id!(NodeId, "n");
prefixed_id!(EdgeId, "e");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeNode {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    pub aliases: BTreeSet<String>,
    pub provenance: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeEdge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub relation_label: String,
    pub kind: EdgeKind,
    pub provenance: BTreeSet<String>,
}

impl KnowledgeEdge {
    pub fn endpoints(&self) -> [NodeId; 2] {
        [self.src, self.dst]
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported schema_version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("malformed graph file: {0}")]
    Malformed(String),
    #[error("graph failed validation: {}", diag::join(.0))]
    Validation(Vec<Diagnostic>),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

/// Size signature used to check that reports come from the same graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStamp {
    pub node_count: usize,
    pub edge_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, KnowledgeNode>,
    edges: BTreeMap<EdgeId, KnowledgeEdge>,
    adjacency: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    schema_version: u32,
}

fn adjacency_of(
    nodes: &BTreeMap<NodeId, KnowledgeNode>,
    edges: &BTreeMap<EdgeId, KnowledgeEdge>,
) -> BTreeMap<NodeId, BTreeSet<EdgeId>> {
    let mut adjacency: BTreeMap<NodeId, BTreeSet<EdgeId>> =
        nodes.keys().map(|id| (*id, BTreeSet::new())).collect();
    for edge in edges.values() {
        for end in edge.endpoints() {
            if let Some(incident) = adjacency.get_mut(&end) {
                incident.insert(edge.id);
            }
        }
    }
    adjacency
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        KnowledgeGraph {
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            schema_version: SCHEMA_VERSION,
        }
    }
}

impl KnowledgeGraph {
    /// Assembles a graph from parts and rejects it unless it validates.
    pub fn from_parts(
        nodes: Vec<KnowledgeNode>,
        edges: Vec<KnowledgeEdge>,
    ) -> Result<Self, GraphError> {
        let mut diagnostics = Vec::new();
        let mut node_map = BTreeMap::new();
        for node in nodes {
            let id = node.id;
            if node_map.insert(id, node).is_some() {
                diagnostics.push(Diagnostic::new(
                    "duplicate id",
                    format!("node id {id} appears twice"),
                ));
            }
        }
        let mut edge_map = BTreeMap::new();
        for edge in edges {
            let id = edge.id;
            if edge_map.insert(id, edge).is_some() {
                diagnostics.push(Diagnostic::new(
                    "duplicate id",
                    format!("edge id {id} appears twice"),
                ));
            }
        }
        let adjacency = adjacency_of(&node_map, &edge_map);
        let graph = KnowledgeGraph::from_parts_unchecked(node_map, edge_map, adjacency);
        diagnostics.extend(graph.validate());
        if diagnostics.is_empty() {
            Ok(graph)
        } else {
            Err(GraphError::Validation(diagnostics))
        }
    }

    /// Assembles a graph without any checks; call [`KnowledgeGraph::validate`].
    pub fn from_parts_unchecked(
        nodes: BTreeMap<NodeId, KnowledgeNode>,
        edges: BTreeMap<EdgeId, KnowledgeEdge>,
        adjacency: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    ) -> Self {
        KnowledgeGraph {
            nodes,
            edges,
            adjacency,
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn stamp(&self) -> GraphStamp {
        GraphStamp {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KnowledgeNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &KnowledgeEdge> {
        self.edges.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&KnowledgeNode> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&KnowledgeEdge> {
        self.edges.get(&id)
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn contains_edge(&self, id: EdgeId) -> bool {
        self.edges.contains_key(&id)
    }

    /// Incident edges of `id` with the node at the other end.
    pub fn neighbors(&self, id: NodeId) -> Result<BTreeSet<(EdgeId, NodeId)>, GraphError> {
        let incident = self.adjacency.get(&id).ok_or(GraphError::UnknownNode(id))?;
        Ok(incident
            .iter()
            .filter_map(|edge_id| {
                let edge = self.edges.get(edge_id)?;
                let other = if edge.src == id { edge.dst } else { edge.src };
                Some((*edge_id, other))
            })
            .collect())
    }

    /// Union of the endpoints of `edges`; unknown edge ids are ignored.
    pub fn endpoint_closure<'a>(
        &self,
        edges: impl IntoIterator<Item = &'a EdgeId>,
    ) -> BTreeSet<NodeId> {
        edges
            .into_iter()
            .filter_map(|id| self.edges.get(id))
            .flat_map(|edge| edge.endpoints())
            .collect()
    }

    /// Re-checks every structural invariant. Empty iff well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut node_keys = BTreeSet::new();
        for (key, node) in &self.nodes {
            if *key != node.id {
                out.push(Diagnostic::new(
                    "id mismatch",
                    format!("node stored under {key} has id {}", node.id),
                ));
            }
            if node.label.is_empty() || canonical_label(&node.label) != node.label {
                out.push(Diagnostic::new(
                    "label not canonical",
                    format!("node {} label {:?}", node.id, node.label),
                ));
            }
            if !node.aliases.contains(&node.label) {
                out.push(Diagnostic::new(
                    "alias",
                    format!(
                        "node {} aliases do not include its canonical label",
                        node.id
                    ),
                ));
            }
            if !node_keys.insert((node.label.clone(), node.kind)) {
                out.push(Diagnostic::new(
                    "duplicate node",
                    format!("node {} repeats ({:?}, {})", node.id, node.label, node.kind),
                ));
            }
        }

        let mut edge_keys = BTreeSet::new();
        for (key, edge) in &self.edges {
            if *key != edge.id {
                out.push(Diagnostic::new(
                    "id mismatch",
                    format!("edge stored under {key} has id {}", edge.id),
                ));
            }
            let src = self.nodes.get(&edge.src);
            let dst = self.nodes.get(&edge.dst);
            if src.is_none() || dst.is_none() {
                let missing = if src.is_none() { edge.src } else { edge.dst };
                out.push(Diagnostic::new(
                    "dangling edge",
                    format!("edge {} references missing node {missing}", edge.id),
                ));
            }
            if edge.src == edge.dst {
                out.push(Diagnostic::new(
                    "self-loop",
                    format!("edge {} loops on {}", edge.id, edge.src),
                ));
            }
            if edge.relation_label.is_empty()
                || canonical_label(&edge.relation_label) != edge.relation_label
            {
                out.push(Diagnostic::new(
                    "label not canonical",
                    format!("edge {} relation {:?}", edge.id, edge.relation_label),
                ));
            }
            if !edge_keys.insert((edge.src, edge.dst, edge.relation_label.clone(), edge.kind)) {
                out.push(Diagnostic::new(
                    "duplicate edge",
                    format!("edge {} repeats an existing edge", edge.id),
                ));
            }
            if let (Some(src), Some(dst)) = (src, dst) {
                if edge.kind.requires_event() && !src.kind.is_event() && !dst.kind.is_event() {
                    out.push(Diagnostic::new(
                        "taxonomy",
                        format!("{} edge {} joins two general nodes", edge.kind, edge.id),
                    ));
                }
            }
        }

        let expected = adjacency_of(&self.nodes, &self.edges);
        let all: BTreeSet<&NodeId> = expected.keys().chain(self.adjacency.keys()).collect();
        for id in all {
            if expected.get(id) != self.adjacency.get(id) {
                out.push(Diagnostic::new(
                    "adjacency mismatch",
                    format!("incident edges of {id} disagree with the edge set"),
                ));
            }
        }
        out
    }

    /// Re-expresses the graph as raw extraction records.
    pub fn to_raw_records(&self) -> (Vec<RawNode>, Vec<RawRelation>) {
        let nodes = self
            .nodes
            .values()
            .map(|n| RawNode {
                label: n.label.clone(),
                kind: n.kind,
                source_stmt_ids: n.provenance.iter().cloned().collect(),
            })
            .collect();
        let relations = self
            .edges
            .values()
            .map(|e| RawRelation {
                src_label: self.nodes[&e.src].label.clone(),
                dst_label: self.nodes[&e.dst].label.clone(),
                relation_label: e.relation_label.clone(),
                kind: e.kind,
                source_stmt_ids: e.provenance.iter().cloned().collect(),
            })
            .collect();
        (nodes, relations)
    }
}

struct Builder {
    graph: KnowledgeGraph,
    by_key: HashMap<(String, NodeKind), NodeId>,
    by_label: HashMap<String, BTreeSet<NodeId>>,
    by_edge: HashMap<(NodeId, NodeId, String, EdgeKind), EdgeId>,
    diagnostics: Vec<Diagnostic>,
}

impl Builder {
    fn add_node(&mut self, raw: &RawNode) {
        let label = canonical_label(&raw.label);
        if label.is_empty() {
            self.diagnostics.push(Diagnostic::new(
                "empty label",
                format!("raw node {:?} has no label", raw.label),
            ));
            return;
        }
        let key = (label.clone(), raw.kind);
        let id = match self.by_key.get(&key) {
            Some(id) => *id,
            None => {
                let id = NodeId(self.graph.nodes.len() as u32 + 1);
                self.graph.nodes.insert(
                    id,
                    KnowledgeNode {
                        id,
                        label: label.clone(),
                        kind: raw.kind,
                        aliases: BTreeSet::from([label.clone()]),
                        provenance: BTreeSet::new(),
                    },
                );
                self.graph.adjacency.insert(id, BTreeSet::new());
                self.by_key.insert(key, id);
                self.by_label.entry(label).or_default().insert(id);
                id
            }
        };
        let node = self.graph.nodes.get_mut(&id).expect("node just resolved");
        node.aliases
            .insert(crate::ingest::normalize_text(&raw.label));
        node.provenance.extend(raw.source_stmt_ids.iter().cloned());
    }

    /// Picks the node a relation endpoint refers to. Event nodes win for
    /// causal/sequential relations, general nodes otherwise, then lowest id.
    fn resolve(&self, label: &str, kind: EdgeKind) -> Option<NodeId> {
        let candidates = self.by_label.get(&canonical_label(label))?;
        let prefer_event = kind.requires_event();
        candidates
            .iter()
            .min_by_key(|id| {
                let is_event = self.graph.nodes[id].kind.is_event();
                (is_event != prefer_event, **id)
            })
            .copied()
    }

    fn add_relation(&mut self, raw: &RawRelation) {
        let describe = || {
            format!(
                "{:?} -{}-> {:?}",
                raw.src_label, raw.relation_label, raw.dst_label
            )
        };
        let (Some(src), Some(dst)) = (
            self.resolve(&raw.src_label, raw.kind),
            self.resolve(&raw.dst_label, raw.kind),
        ) else {
            self.diagnostics.push(Diagnostic::new(
                "unresolved endpoint",
                format!("relation {} dropped", describe()),
            ));
            return;
        };
        if src == dst {
            self.diagnostics.push(Diagnostic::new(
                "self-loop",
                format!("relation {} dropped", describe()),
            ));
            return;
        }
        let relation_label = canonical_label(&raw.relation_label);
        if relation_label.is_empty() {
            self.diagnostics.push(Diagnostic::new(
                "empty label",
                format!("relation {} dropped", describe()),
            ));
            return;
        }
        if raw.kind.requires_event()
            && !self.graph.nodes[&src].kind.is_event()
            && !self.graph.nodes[&dst].kind.is_event()
        {
            self.diagnostics.push(Diagnostic::new(
                "taxonomy",
                format!("{} relation {} has no event endpoint", raw.kind, describe()),
            ));
            return;
        }
        let key = (src, dst, relation_label.clone(), raw.kind);
        let id = match self.by_edge.get(&key) {
            Some(id) => *id,
            None => {
                let id = EdgeId(self.graph.edges.len() as u32 + 1);
                self.graph.edges.insert(
                    id,
                    KnowledgeEdge {
                        id,
                        src,
                        dst,
                        relation_label,
                        kind: raw.kind,
                        provenance: BTreeSet::new(),
                    },
                );
                for end in [src, dst] {
                    self.graph.adjacency.entry(end).or_default().insert(id);
                }
                self.by_edge.insert(key, id);
                id
            }
        };
        let edge = self.graph.edges.get_mut(&id).expect("edge just resolved");
        edge.provenance.extend(raw.source_stmt_ids.iter().cloned());
    }
}

/// Builds a graph from raw extraction output. Rejected records become
/// diagnostics; nothing here is fatal.
pub fn build_graph(
    raw_nodes: &[RawNode],
    raw_relations: &[RawRelation],
) -> (KnowledgeGraph, Vec<Diagnostic>) {
    let mut builder = Builder {
        graph: KnowledgeGraph::default(),
        by_key: HashMap::new(),
        by_label: HashMap::new(),
        by_edge: HashMap::new(),
        diagnostics: Vec::new(),
    };
    for node in raw_nodes {
        builder.add_node(node);
    }
    for relation in raw_relations {
        builder.add_relation(relation);
    }
    (builder.graph, builder.diagnostics)
}

// Persistence

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: NodeId,
    label: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subkind: Option<GeneralKind>,
    aliases: Vec<String>,
    provenance: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: EdgeId,
    src: NodeId,
    dst: NodeId,
    relation_label: String,
    kind: EdgeKind,
    provenance: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema_version: u32,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

impl NodeRecord {
    fn into_node(self) -> Result<KnowledgeNode, GraphError> {
        let kind = match (self.kind.as_str(), self.subkind) {
            ("event", None) => NodeKind::Event,
            ("general", Some(sub)) => NodeKind::General(sub),
            (kind, sub) => {
                return Err(GraphError::Malformed(format!(
                    "node {} has kind {kind:?} with subkind {sub:?}",
                    self.id
                )))
            }
        };
        Ok(KnowledgeNode {
            id: self.id,
            label: self.label,
            kind,
            aliases: self.aliases.into_iter().collect(),
            provenance: self.provenance.into_iter().collect(),
        })
    }
}

/// Serializes the graph to its byte-stable JSON form.
pub fn to_json(graph: &KnowledgeGraph) -> String {
    let file = GraphFile {
        schema_version: graph.schema_version,
        nodes: graph
            .nodes
            .values()
            .map(|n| NodeRecord {
                id: n.id,
                label: n.label.clone(),
                kind: if n.kind.is_event() {
                    "event"
                } else {
                    "general"
                }
                .to_string(),
                subkind: n.kind.subkind(),
                aliases: n.aliases.iter().cloned().collect(),
                provenance: n.provenance.iter().cloned().collect(),
            })
            .collect(),
        edges: graph
            .edges
            .values()
            .map(|e| EdgeRecord {
                id: e.id,
                src: e.src,
                dst: e.dst,
                relation_label: e.relation_label.clone(),
                kind: e.kind,
                provenance: e.provenance.iter().cloned().collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("graph serializes");
    text.push('\n');
    text
}

/// Parses and validates graph JSON.
pub fn from_json(text: &str) -> Result<KnowledgeGraph, GraphError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| GraphError::Malformed("missing integer schema_version".to_string()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(GraphError::Version {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let file: GraphFile =
        serde_json::from_value(value).map_err(|e| GraphError::Malformed(e.to_string()))?;
    let nodes = file
        .nodes
        .into_iter()
        .map(NodeRecord::into_node)
        .collect::<Result<Vec<_>, _>>()?;
    let edges = file
        .edges
        .into_iter()
        .map(|e| KnowledgeEdge {
            id: e.id,
            src: e.src,
            dst: e.dst,
            relation_label: e.relation_label,
            kind: e.kind,
            provenance: e.provenance.into_iter().collect(),
        })
        .collect();
    KnowledgeGraph::from_parts(nodes, edges)
}

pub fn save(graph: &KnowledgeGraph, path: &Path) -> Result<(), GraphError> {
    fs::write(path, to_json(graph)).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<KnowledgeGraph, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}

// DOT export

fn dot_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn edge_style(kind: EdgeKind) -> &'static str {
    match kind {
        EdgeKind::Semantic => "solid",
        EdgeKind::Causal => "dashed",
        EdgeKind::Sequential => "dotted",
    }
}

/// Renders the graph as a Graphviz digraph.
///
/// With an overlay every node is filled: overlay entries use their color and
/// all other nodes get the course color.
pub fn export_dot(
    graph: &KnowledgeGraph,
    overlay: Option<&BTreeMap<NodeId, String>>,
) -> Result<String, GraphError> {
    if let Some(overlay) = overlay {
        if let Some(unknown) = overlay.keys().find(|id| !graph.contains_node(**id)) {
            return Err(GraphError::UnknownNode(*unknown));
        }
    }
    let mut out = String::from("digraph G {\n");
    for node in graph.nodes() {
        let shape = if node.kind.is_event() {
            "box"
        } else {
            "ellipse"
        };
        write!(
            out,
            "  {} [label=\"{}\", shape={shape}",
            node.id,
            dot_escape(&node.label)
        )
        .unwrap();
        if let Some(overlay) = overlay {
            let color = overlay
                .get(&node.id)
                .map(String::as_str)
                .unwrap_or(colors::COURSE);
            write!(out, ", style=filled, fillcolor=\"{}\"", dot_escape(color)).unwrap();
        }
        out.push_str("];\n");
    }
    for edge in graph.edges() {
        writeln!(
            out,
            "  {} -> {} [label=\"{}\", style={}];",
            edge.src,
            edge.dst,
            dot_escape(&edge.relation_label),
            edge_style(edge.kind)
        )
        .unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}
