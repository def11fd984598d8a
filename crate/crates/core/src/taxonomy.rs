//! Hierarchical error taxonomies: category → error type → subcategory.
//!
//! A taxonomy is loaded from a small TOML document holding one `[[node]]`
//! record per node. Depth-1 and depth-2 nodes make up the lightweight
//! annotation layer; depth-3 nodes make up the diagnostic layer. A node of
//! depth < 3 without children is a terminal and is annotatable on both layers.
//!
//! ```toml
//! name = "LQM"
//! version = "1.0"
//! levels = ["sociolinguistics", "pragmatics"]
//!
//! [[node]]
//! id = "graphetics"
//! label = "Graphetics"
//! depth = 1
//! definition = "Technical realization of the text code."
//!
//! [[node]]
//! id = "character-encoding"
//! label = "character encoding"
//! depth = 2
//! parent = "graphetics"
//! definition = "Characters garbled due to incorrect encoding."
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DEPTH: u8 = 3;

const LQM_SOURCE: &str = include_str!("../taxonomies/lqm.taxonomy");
const MQM_SOURCE: &str = include_str!("../taxonomies/mqm.taxonomy");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("taxonomy file does not parse: {0}")]
    Parse(String),
    #[error("node id must not be empty (record {index})")]
    EmptyId { index: usize },
    #[error("duplicate node id `{id}`")]
    DuplicateId { id: String },
    #[error("node `{id}` is part of a parent cycle")]
    Cycle { id: String },
    #[error("node `{id}` is orphaned: {reason}")]
    Orphan { id: String, reason: String },
    #[error("node `{id}` has depth {depth}; depth must be between 1 and {MAX_DEPTH}")]
    DepthOutOfRange { id: String, depth: u8 },
    #[error("node `{id}` has depth {depth} but its parent `{parent}` has depth {parent_depth}")]
    DepthMismatch {
        id: String,
        depth: u8,
        parent: String,
        parent_depth: u8,
    },
}

impl TaxonomyError {
    /// The node the error is about, if any.
    pub fn node_id(&self) -> Option<&str> {
        match self {
            TaxonomyError::Parse(_) | TaxonomyError::EmptyId { .. } => None,
            TaxonomyError::DuplicateId { id }
            | TaxonomyError::Cycle { id }
            | TaxonomyError::Orphan { id, .. }
            | TaxonomyError::DepthOutOfRange { id, .. }
            | TaxonomyError::DepthMismatch { id, .. } => Some(id),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("unknown taxonomy id `{id}`")]
    UnknownId { id: String },
    #[error("`{child}` is not a child of `{parent}`")]
    BrokenChain { parent: String, child: String },
    #[error("`{id}` is a depth-{actual} node, expected depth {expected}")]
    WrongDepth { id: String, expected: u8, actual: u8 },
    #[error("subcategory `{subcategory}` given without an error type")]
    MissingErrorType { subcategory: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Lightweight,
    Diagnostic,
}

impl Layer {
    pub fn of_depth(depth: u8) -> Layer {
        if depth >= MAX_DEPTH {
            Layer::Diagnostic
        } else {
            Layer::Lightweight
        }
    }
}

impl std::str::FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lightweight" => Ok(Layer::Lightweight),
            "diagnostic" => Ok(Layer::Diagnostic),
            other => Err(format!("unknown layer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyNode {
    pub id: String,
    pub label: String,
    pub definition: String,
    pub depth: u8,
    parent: Option<usize>,
    children: Vec<usize>,
}

impl TaxonomyNode {
    pub fn layer(&self) -> Layer {
        Layer::of_depth(self.depth)
    }

    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// A validated, immutable taxonomy. Nodes are stored in document order
/// (pre-order, siblings in file order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomySchema {
    pub name: String,
    pub version: String,
    pub levels: Vec<String>,
    nodes: Vec<TaxonomyNode>,
    roots: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyDoc {
    name: String,
    #[serde(default)]
    version: String,
    #[serde(default)]
    levels: Vec<String>,
    #[serde(default, rename = "node")]
    nodes: Vec<NodeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    label: String,
    depth: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default)]
    definition: String,
}

/// Parse and validate a taxonomy document.
pub fn load_taxonomy(source: &str) -> Result<TaxonomySchema, TaxonomyError> {
    let doc: TaxonomyDoc =
        toml::from_str(source).map_err(|e| TaxonomyError::Parse(e.message().to_string()))?;
    TaxonomySchema::from_records(doc)
}

impl TaxonomySchema {
    pub fn lqm() -> TaxonomySchema {
        load_taxonomy(LQM_SOURCE).expect("built-in LQM taxonomy is valid")
    }

    pub fn mqm() -> TaxonomySchema {
        load_taxonomy(MQM_SOURCE).expect("built-in MQM taxonomy is valid")
    }

    /// Built-in schema by case-insensitive name (`lqm` or `mqm`).
    pub fn builtin(name: &str) -> Option<TaxonomySchema> {
        match name.to_ascii_lowercase().as_str() {
            "lqm" => Some(Self::lqm()),
            "mqm" => Some(Self::mqm()),
            _ => None,
        }
    }

    pub fn builtin_source(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "lqm" => Some(LQM_SOURCE),
            "mqm" => Some(MQM_SOURCE),
            _ => None,
        }
    }

    fn from_records(doc: TaxonomyDoc) -> Result<TaxonomySchema, TaxonomyError> {
        let records = doc.nodes;
        let mut position: HashMap<String, usize> = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec.id.is_empty() {
                return Err(TaxonomyError::EmptyId { index: i });
            }
            if position.insert(rec.id.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateId { id: rec.id.clone() });
            }
        }

        // Cycles first: a node that is its own ancestor has no meaningful depth.
        for rec in &records {
            let mut seen = HashSet::new();
            let mut cursor = Some(rec.id.as_str());
            while let Some(id) = cursor {
                if !seen.insert(id) {
                    return Err(TaxonomyError::Cycle { id: rec.id.clone() });
                }
                cursor = position
                    .get(id)
                    .and_then(|&i| records[i].parent.as_deref());
            }
        }

        for rec in &records {
            if rec.depth == 0 || rec.depth > MAX_DEPTH {
                return Err(TaxonomyError::DepthOutOfRange {
                    id: rec.id.clone(),
                    depth: rec.depth,
                });
            }
            match (&rec.parent, rec.depth) {
                (None, 1) => {}
                (None, _) => {
                    return Err(TaxonomyError::Orphan {
                        id: rec.id.clone(),
                        reason: format!("depth-{} node has no parent", rec.depth),
                    })
                }
                (Some(parent), depth) => {
                    let Some(&p) = position.get(parent.as_str()) else {
                        return Err(TaxonomyError::Orphan {
                            id: rec.id.clone(),
                            reason: format!("parent `{parent}` does not exist"),
                        });
                    };
                    let parent_depth = records[p].depth;
                    if depth != parent_depth + 1 {
                        return Err(TaxonomyError::DepthMismatch {
                            id: rec.id.clone(),
                            depth,
                            parent: parent.clone(),
                            parent_depth,
                        });
                    }
                }
            }
        }

        // Children in file order, then lay the arena out in pre-order.
        let mut children_of: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
        let mut file_roots = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            match &rec.parent {
                Some(p) => children_of[position[p.as_str()]].push(i),
                None => file_roots.push(i),
            }
        }
        let mut order = Vec::with_capacity(records.len());
        let mut stack: Vec<usize> = file_roots.iter().rev().copied().collect();
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children_of[i].iter().rev());
        }
        debug_assert_eq!(order.len(), records.len());

        let mut new_index = vec![0usize; records.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut slots: Vec<Option<NodeRecord>> = records.into_iter().map(Some).collect();
        let nodes: Vec<TaxonomyNode> = order
            .iter()
            .map(|&old| {
                let rec = slots[old].take().expect("each record placed once");
                TaxonomyNode {
                    parent: rec.parent.as_deref().map(|p| new_index[position[p]]),
                    children: children_of[old].iter().map(|&c| new_index[c]).collect(),
                    id: rec.id,
                    label: rec.label,
                    definition: rec.definition,
                    depth: rec.depth,
                }
            })
            .collect();
        let roots = file_roots.iter().map(|&r| new_index[r]).collect();
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();

        Ok(TaxonomySchema {
            name: doc.name,
            version: doc.version,
            levels: doc.levels,
            nodes,
            roots,
            index,
        })
    }

    /// All nodes in document order.
    pub fn nodes(&self) -> &[TaxonomyNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&TaxonomyNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn roots(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.roots.iter().map(|&i| &self.nodes[i])
    }

    pub fn children<'a>(&'a self, node: &'a TaxonomyNode) -> impl Iterator<Item = &'a TaxonomyNode> {
        node.children.iter().map(|&i| &self.nodes[i])
    }

    pub fn parent(&self, node: &TaxonomyNode) -> Option<&TaxonomyNode> {
        node.parent.map(|i| &self.nodes[i])
    }

    pub fn max_depth(&self) -> u8 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Document-order position of a node, used for deterministic tie-breaks.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Check that the ids exist and form a parent→child chain, and report
    /// which layers the path is complete for.
    pub fn validate_path(&self, path: &TaxonomyPath) -> Result<PathCheck, PathError> {
        let category = self.expect_node(&path.category, 1)?;
        let mut deepest = category;
        if let Some(et) = &path.error_type {
            let node = self.expect_node(et, 2)?;
            self.expect_child(category, node)?;
            deepest = node;
        }
        match (&path.error_type, &path.subcategory) {
            (None, Some(sub)) => {
                return Err(PathError::MissingErrorType {
                    subcategory: sub.clone(),
                })
            }
            (Some(_), Some(sub)) => {
                let node = self.expect_node(sub, 3)?;
                self.expect_child(deepest, node)?;
                deepest = node;
            }
            _ => {}
        }
        let terminal = deepest.is_terminal();
        Ok(PathCheck {
            depth: deepest.depth,
            lightweight_complete: path.error_type.is_some() || terminal,
            diagnostic_complete: terminal,
        })
    }

    fn expect_node(&self, id: &str, depth: u8) -> Result<&TaxonomyNode, PathError> {
        let node = self
            .node(id)
            .ok_or_else(|| PathError::UnknownId { id: id.to_string() })?;
        if node.depth != depth {
            return Err(PathError::WrongDepth {
                id: id.to_string(),
                expected: depth,
                actual: node.depth,
            });
        }
        Ok(node)
    }

    fn expect_child(&self, parent: &TaxonomyNode, child: &TaxonomyNode) -> Result<(), PathError> {
        if self.parent(child).map(|p| p.id.as_str()) == Some(parent.id.as_str()) {
            Ok(())
        } else {
            Err(PathError::BrokenChain {
                parent: parent.id.clone(),
                child: child.id.clone(),
            })
        }
    }

    /// Annotatable paths for a layer, in document order.
    ///
    /// Lightweight: every error type, plus categories without children.
    /// Diagnostic: every subcategory, plus shallower nodes without children.
    pub fn enumerate_leaves(&self, layer: Layer) -> Vec<TaxonomyPath> {
        self.nodes
            .iter()
            .filter(|n| match layer {
                Layer::Lightweight => n.depth == 2 || (n.depth == 1 && n.is_terminal()),
                Layer::Diagnostic => n.is_terminal(),
            })
            .map(|n| self.path_to(n))
            .collect()
    }

    /// The path from the root down to `node`.
    pub fn path_to(&self, node: &TaxonomyNode) -> TaxonomyPath {
        let mut chain = vec![node.id.clone()];
        let mut cursor = self.parent(node);
        while let Some(p) = cursor {
            chain.push(p.id.clone());
            cursor = self.parent(p);
        }
        chain.reverse();
        let mut it = chain.into_iter();
        TaxonomyPath {
            category: it.next().expect("chain has a root"),
            error_type: it.next(),
            subcategory: it.next(),
        }
    }

    /// Human label for a path, with the deepest label last.
    pub fn path_labels(&self, path: &TaxonomyPath) -> Vec<&str> {
        path.ids()
            .filter_map(|id| self.node(id).map(|n| n.label.as_str()))
            .collect()
    }

    /// Serialize back to the taxonomy file format.
    pub fn to_taxonomy_string(&self) -> String {
        let doc = TaxonomyDoc {
            name: self.name.clone(),
            version: self.version.clone(),
            levels: self.levels.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    label: n.label.clone(),
                    depth: n.depth,
                    parent: self.parent(n).map(|p| p.id.clone()),
                    definition: n.definition.clone(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("taxonomy document serializes")
    }

    /// Nested tree view, the shape served over HTTP.
    pub fn tree(&self) -> TaxonomyTree {
        fn view(schema: &TaxonomySchema, node: &TaxonomyNode) -> NodeView {
            NodeView {
                id: node.id.clone(),
                label: node.label.clone(),
                definition: node.definition.clone(),
                depth: node.depth,
                layer: node.layer(),
                children: schema.children(node).map(|c| view(schema, c)).collect(),
            }
        }
        TaxonomyTree {
            name: self.name.clone(),
            version: self.version.clone(),
            levels: self.levels.clone(),
            nodes: self.roots().map(|r| view(self, r)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyTree {
    pub name: String,
    pub version: String,
    pub levels: Vec<String>,
    pub nodes: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: String,
    pub label: String,
    pub definition: String,
    pub depth: u8,
    pub layer: Layer,
    pub children: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaxonomyPath {
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<String>,
}

impl TaxonomyPath {
    pub fn new(category: &str, error_type: Option<&str>, subcategory: Option<&str>) -> Self {
        TaxonomyPath {
            category: category.to_string(),
            error_type: error_type.map(str::to_string),
            subcategory: subcategory.map(str::to_string),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.category.as_str())
            .chain(self.error_type.as_deref())
            .chain(self.subcategory.as_deref())
    }

    /// The deepest id set on the path.
    pub fn leaf(&self) -> &str {
        self.subcategory
            .as_deref()
            .or(self.error_type.as_deref())
            .unwrap_or(&self.category)
    }

    /// Truncate to at most `depth` levels.
    pub fn truncate(&self, depth: u8) -> TaxonomyPath {
        TaxonomyPath {
            category: self.category.clone(),
            error_type: self.error_type.clone().filter(|_| depth >= 2),
            subcategory: self.subcategory.clone().filter(|_| depth >= 3),
        }
    }
}

impl fmt::Display for TaxonomyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<&str> = self.ids().collect();
        f.write_str(&ids.join("/"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathCheck {
    pub depth: u8,
    pub lightweight_complete: bool,
    pub diagnostic_complete: bool,
}

impl PathCheck {
    pub fn complete_for(&self, layer: Layer) -> bool {
        match layer {
            Layer::Lightweight => self.lightweight_complete,
            Layer::Diagnostic => self.diagnostic_complete,
        }
    }

    pub fn annotatable(&self) -> bool {
        self.lightweight_complete || self.diagnostic_complete
    }
}
