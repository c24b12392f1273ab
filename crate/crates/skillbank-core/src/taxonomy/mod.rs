//! The four-layer skill tree: verb classes, verb instances, skill
//! descriptions, and slice leaves, with top-down insertion that expands the
//! tree on a miss.

mod store;

pub use store::{load_repo, save_repo, StoreError, FORMAT_VERSION};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::annotate::AnnotatedSlice;
use crate::modelgw::{Embedder, EmbeddingVector, GatewayError};
use crate::skillparse::{SignatureTemplate, VerbLexicon};

/// Default cosine-similarity threshold for reusing a description node.
pub const DEFAULT_THETA: f64 = 0.8;

/// Synthetic level-0 anchor id; never serialized as a node.
pub const ROOT_ID: &str = "n0:root";

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("slice {0:?} is already in the repository")]
    DuplicateSlice(String),
    #[error("similarity threshold must be in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("embedder dimension {got} does not match repository dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("tree invariant violated: {0}")]
    BrokenInvariant(String),
}

/// Payload stored at each level of the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum NodePayload {
    /// Level 1: a verb class, provisional when synthesized for an unknown lemma.
    VerbClass { class_id: String, provisional: bool },
    /// Level 2: a verb lemma within its class.
    VerbInstance { lemma: String },
    /// Level 3: an object-centric interaction template plus the embedding of
    /// the description that created it.
    SkillDescription {
        template: SignatureTemplate,
        embedding: EmbeddingVector,
    },
    /// Level 4: one annotated demonstration slice.
    SliceLeaf {
        slice_id: String,
        scene_embedding: EmbeddingVector,
    },
}

impl NodePayload {
    fn expected_level(&self) -> u8 {
        match self {
            NodePayload::VerbClass { .. } => 1,
            NodePayload::VerbInstance { .. } => 2,
            NodePayload::SkillDescription { .. } => 3,
            NodePayload::SliceLeaf { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub level: u8,
    /// `None` only for level-1 nodes, which hang off the synthetic root.
    pub parent: Option<String>,
    pub payload: NodePayload,
}

/// Per-level node counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct RepoStats {
    pub class_count: usize,
    pub verb_instance_count: usize,
    pub description_count: usize,
    pub slice_count: usize,
}

/// The skill tree. Node ids are deterministic so a fixed insertion order
/// yields an identical tree across runs.
#[derive(Debug, Clone)]
pub struct SkillTree {
    nodes: BTreeMap<String, Node>,
    children: BTreeMap<String, BTreeSet<String>>,
    embedding_dim: usize,
}

impl SkillTree {
    pub fn new(embedding_dim: usize) -> Self {
        Self {
            nodes: BTreeMap::new(),
            children: BTreeMap::new(),
            embedding_dim,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Children of `id` in ascending id order. Use [`ROOT_ID`] for level 1.
    pub fn children(&self, id: &str) -> impl Iterator<Item = &Node> {
        self.children
            .get(id)
            .into_iter()
            .flatten()
            .filter_map(|cid| self.nodes.get(cid))
    }

    /// The level-1 node for a class id, if present.
    pub fn find_class(&self, class_id: &str) -> Option<&Node> {
        self.node(&class_node_id(class_id))
    }

    pub fn stats(&self) -> RepoStats {
        let mut stats = RepoStats::default();
        for node in self.nodes.values() {
            match node.level {
                1 => stats.class_count += 1,
                2 => stats.verb_instance_count += 1,
                3 => stats.description_count += 1,
                4 => stats.slice_count += 1,
                _ => {}
            }
        }
        stats
    }

    /// Node ids from `id` up to (and excluding) the synthetic root.
    pub fn path_to_root(&self, id: &str) -> Vec<String> {
        let mut path = Vec::new();
        let mut cursor = self.nodes.get(id);
        while let Some(node) = cursor {
            path.push(node.id.clone());
            cursor = node.parent.as_deref().and_then(|p| self.nodes.get(p));
        }
        path
    }

    pub(crate) fn add_node(&mut self, node: Node) -> Result<(), TaxonomyError> {
        if node.payload.expected_level() != node.level {
            return Err(TaxonomyError::BrokenInvariant(format!(
                "payload of {} does not match level {}",
                node.id, node.level
            )));
        }
        let parent_key = match (&node.parent, node.level) {
            (None, 1) => ROOT_ID.to_string(),
            (Some(p), level) if level > 1 => {
                let parent = self.nodes.get(p).ok_or_else(|| {
                    TaxonomyError::BrokenInvariant(format!("missing parent {p} for {}", node.id))
                })?;
                if parent.level + 1 != node.level {
                    return Err(TaxonomyError::BrokenInvariant(format!(
                        "parent {p} is level {}, cannot hold level {}",
                        parent.level, node.level
                    )));
                }
                p.clone()
            }
            _ => {
                return Err(TaxonomyError::BrokenInvariant(format!(
                    "node {} has inconsistent parent/level",
                    node.id
                )))
            }
        };
        if self.nodes.contains_key(&node.id) {
            return Err(TaxonomyError::BrokenInvariant(format!(
                "node id {} already exists",
                node.id
            )));
        }
        self.children
            .entry(parent_key)
            .or_default()
            .insert(node.id.clone());
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Checks the structural invariants: payload/level agreement, parent
    /// levels, and root-to-leaf path length 4.
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        for node in self.nodes.values() {
            if node.payload.expected_level() != node.level {
                return Err(TaxonomyError::BrokenInvariant(format!(
                    "{}: payload does not match level",
                    node.id
                )));
            }
            match (&node.parent, node.level) {
                (None, 1) => {}
                (Some(p), l) => {
                    let parent = self.nodes.get(p).ok_or_else(|| {
                        TaxonomyError::BrokenInvariant(format!("{}: dangling parent {p}", node.id))
                    })?;
                    if parent.level + 1 != l {
                        return Err(TaxonomyError::BrokenInvariant(format!(
                            "{}: parent level {} != {}",
                            node.id,
                            parent.level,
                            l - 1
                        )));
                    }
                }
                (None, _) => {
                    return Err(TaxonomyError::BrokenInvariant(format!(
                        "{}: non-class node without parent",
                        node.id
                    )))
                }
            }
            if node.level == 4 {
                let path = self.path_to_root(&node.id);
                if path.len() != 4 {
                    return Err(TaxonomyError::BrokenInvariant(format!(
                        "{}: leaf path length {} != 4",
                        node.id,
                        path.len()
                    )));
                }
            }
            if let NodePayload::SkillDescription { embedding, .. } = &node.payload {
                if embedding.dim() != self.embedding_dim {
                    return Err(TaxonomyError::BrokenInvariant(format!(
                        "{}: embedding dim {}",
                        node.id,
                        embedding.dim()
                    )));
                }
            }
            if let NodePayload::SliceLeaf {
                scene_embedding, ..
            } = &node.payload
            {
                if scene_embedding.dim() != self.embedding_dim {
                    return Err(TaxonomyError::BrokenInvariant(format!(
                        "{}: embedding dim {}",
                        node.id,
                        scene_embedding.dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn class_node_id(class_id: &str) -> String {
    format!("n1:{class_id}")
}

pub(crate) fn verb_node_id(class_id: &str, lemma: &str) -> String {
    format!("n2:{class_id}/{lemma}")
}

pub(crate) fn description_node_id(class_id: &str, lemma: &str, seq: usize) -> String {
    format!("n3:{class_id}/{lemma}/{seq:03}")
}

pub(crate) fn leaf_node_id(slice_id: &str) -> String {
    format!("n4:{slice_id}")
}

/// Root-to-leaf path returned by a successful insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertedPath {
    /// `[class, verb, description, leaf]` node ids.
    pub path: [String; 4],
}

impl InsertedPath {
    pub fn leaf_id(&self) -> &str {
        &self.path[3]
    }
}

/// Best description child of `verb_node` for `query`: cosine argmax with
/// ties broken by ascending node id.
pub fn best_description_match<'t>(
    tree: &'t SkillTree,
    verb_node_id: &str,
    query: &EmbeddingVector,
) -> Option<(&'t Node, f64)> {
    let mut best: Option<(&Node, f64)> = None;
    for child in tree.children(verb_node_id) {
        if let NodePayload::SkillDescription { embedding, .. } = &child.payload {
            let score = query.cosine(embedding);
            match best {
                Some((_, s)) if score <= s => {}
                _ => best = Some((child, score)),
            }
        }
    }
    best
}

/// A skill repository: the tree plus the slice records backing its leaves.
#[derive(Debug, Clone)]
pub struct Repository {
    pub tree: SkillTree,
    pub slices: BTreeMap<String, AnnotatedSlice>,
    /// Raw slice-file bytes kept from a load so an unmodified slice
    /// re-serializes verbatim (quaternion extraction is not bit-stable
    /// across a matrix round trip).
    pub(crate) slice_bytes: BTreeMap<String, Vec<u8>>,
}

impl Repository {
    pub fn new(embedding_dim: usize) -> Self {
        Self {
            tree: SkillTree::new(embedding_dim),
            slices: BTreeMap::new(),
            slice_bytes: BTreeMap::new(),
        }
    }

    pub fn stats(&self) -> RepoStats {
        self.tree.stats()
    }

    pub fn slice(&self, slice_id: &str) -> Option<&AnnotatedSlice> {
        self.slices.get(slice_id)
    }

    /// Top-down insertion. Level 1 matches by lexicon class, level 2 by
    /// exact lemma, level 3 by cosine similarity against `theta`; any miss
    /// creates the missing node, and a fresh leaf is always created.
    pub fn insert_slice(
        &mut self,
        slice: AnnotatedSlice,
        lexicon: &VerbLexicon,
        embedder: &dyn Embedder,
        theta: f64,
    ) -> Result<InsertedPath, TaxonomyError> {
        if !theta.is_finite() || theta <= 0.0 || theta >= 1.0 {
            return Err(TaxonomyError::InvalidTheta(theta));
        }
        if embedder.dim() != self.tree.embedding_dim {
            return Err(TaxonomyError::DimensionMismatch {
                expected: self.tree.embedding_dim,
                got: embedder.dim(),
            });
        }
        if self.slices.contains_key(&slice.slice_id) {
            return Err(TaxonomyError::DuplicateSlice(slice.slice_id));
        }

        let lemma = slice.signature.lemma().to_string();
        let lookup = lexicon.lookup(&lemma);

        let class_id = class_node_id(&lookup.class_id);
        if self.tree.node(&class_id).is_none() {
            self.tree.add_node(Node {
                id: class_id.clone(),
                level: 1,
                parent: None,
                payload: NodePayload::VerbClass {
                    class_id: lookup.class_id.clone(),
                    provisional: lookup.provisional,
                },
            })?;
        }

        let verb_id = verb_node_id(&lookup.class_id, &lemma);
        if self.tree.node(&verb_id).is_none() {
            self.tree.add_node(Node {
                id: verb_id.clone(),
                level: 2,
                parent: Some(class_id.clone()),
                payload: NodePayload::VerbInstance {
                    lemma: lemma.clone(),
                },
            })?;
        }

        let description_embedding = embedder.embed_text(&slice.description)?;
        let matched = best_description_match(&self.tree, &verb_id, &description_embedding)
            .filter(|(_, score)| *score >= theta)
            .map(|(node, _)| node.id.clone());
        let desc_id = match matched {
            Some(id) => id,
            None => {
                let seq = self
                    .tree
                    .children(&verb_id)
                    .filter(|n| n.level == 3)
                    .count();
                let id = description_node_id(&lookup.class_id, &lemma, seq);
                self.tree.add_node(Node {
                    id: id.clone(),
                    level: 3,
                    parent: Some(verb_id.clone()),
                    payload: NodePayload::SkillDescription {
                        template: slice.signature.to_template(),
                        embedding: description_embedding,
                    },
                })?;
                id
            }
        };

        let scene_embedding = embedder.embed_image(&slice.initial_frame)?;
        let leaf_id = leaf_node_id(&slice.slice_id);
        self.tree.add_node(Node {
            id: leaf_id.clone(),
            level: 4,
            parent: Some(desc_id.clone()),
            payload: NodePayload::SliceLeaf {
                slice_id: slice.slice_id.clone(),
                scene_embedding,
            },
        })?;
        self.slices.insert(slice.slice_id.clone(), slice);

        Ok(InsertedPath {
            path: [class_id, verb_id, desc_id, leaf_id],
        })
    }
}
