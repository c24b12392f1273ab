//! Hierarchical retrieval: lexicon entry point, level-wise descent, leaf
//! scoring against the deployment scene, and trajectory-quality filtering.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::annotate::AnnotatedSlice;
use crate::geometry::project_point;
use crate::modelgw::{Embedder, EmbeddingVector, GatewayError};
use crate::skillparse::{SkillSignature, VerbLexicon};
use crate::taxonomy::{best_description_match, Node, NodePayload, Repository, SkillTree};

/// Default minimum inter-sample displacement counted as motion, meters.
pub const DEFAULT_EPS_MOTION: f64 = 0.005;
/// Default fraction of total duration above which a stationary run flags a
/// candidate inactive.
pub const DEFAULT_INACTIVE_FRAC: f64 = 0.5;
/// Default number of candidates returned by [`retrieve`].
pub const DEFAULT_TOP_K: usize = 3;

/// Where a retrieval found nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissLevel {
    /// No level-1 node for the signature's verb class.
    Class,
    /// No level-2 node for the lemma.
    Verb,
    /// No description node met the similarity threshold.
    Description,
    /// Candidates existed but all were filtered.
    Filtered,
}

impl MissLevel {
    /// Taxonomy level number for diagnostics; `Filtered` reports level 4.
    pub fn level(self) -> u8 {
        match self {
            MissLevel::Class => 1,
            MissLevel::Verb => 2,
            MissLevel::Description => 3,
            MissLevel::Filtered => 4,
        }
    }
}

impl std::fmt::Display for MissLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MissLevel::Class => write!(f, "level 1 (verb class)"),
            MissLevel::Verb => write!(f, "level 2 (verb instance)"),
            MissLevel::Description => write!(f, "level 3 (skill description)"),
            MissLevel::Filtered => write!(f, "level 4 (all candidates filtered)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("no match at {level}")]
    NoMatch { level: MissLevel },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid retrieval parameter: {0}")]
    InvalidParams(String),
}

/// A retrieval request: the skill being asked for plus the embedding of the
/// deployment scene image.
#[derive(Debug, Clone)]
pub struct RetrievalQuery {
    pub signature: SkillSignature,
    pub scene_embedding: EmbeddingVector,
}

/// A scored leaf with its quality flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub slice_id: String,
    pub score: f64,
    pub out_of_view: bool,
    pub inactive: bool,
}

impl Candidate {
    pub fn flagged(&self) -> bool {
        self.out_of_view || self.inactive
    }
}

/// Thresholds for descent and filtering.
#[derive(Debug, Clone, Copy)]
pub struct RetrievalParams {
    pub theta: f64,
    pub eps_motion: f64,
    pub inactive_frac: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            theta: crate::taxonomy::DEFAULT_THETA,
            eps_motion: DEFAULT_EPS_MOTION,
            inactive_frac: DEFAULT_INACTIVE_FRAC,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !self.theta.is_finite() || self.theta <= 0.0 || self.theta >= 1.0 {
            return Err(RetrieveError::InvalidParams(format!(
                "theta must be in (0, 1), got {}",
                self.theta
            )));
        }
        if !self.eps_motion.is_finite() || self.eps_motion <= 0.0 {
            return Err(RetrieveError::InvalidParams(format!(
                "eps_motion must be positive, got {}",
                self.eps_motion
            )));
        }
        if !self.inactive_frac.is_finite() || self.inactive_frac <= 0.0 {
            return Err(RetrieveError::InvalidParams(format!(
                "inactive_frac must be positive, got {}",
                self.inactive_frac
            )));
        }
        Ok(())
    }
}

/// Resolves the signature's lemma to its level-1 node, if the tree has one
/// for the (known or provisional) class.
pub fn find_entry<'t>(
    tree: &'t SkillTree,
    signature: &SkillSignature,
    lexicon: &VerbLexicon,
) -> Option<&'t Node> {
    let lookup = lexicon.lookup(signature.lemma());
    tree.find_class(&lookup.class_id)
}

/// Outcome of descending from an entry node.
#[derive(Debug)]
pub enum Descent<'t> {
    Found { node: &'t Node, score: f64 },
    Miss(MissLevel),
}

/// Walks from a level-1 entry to the best level-3 description node: exact
/// lemma at level 2, then cosine argmax of the query signature's canonical
/// text against child description embeddings, accepted iff `>= theta`.
pub fn descend<'t>(
    tree: &'t SkillTree,
    entry: &Node,
    signature: &SkillSignature,
    embedder: &dyn Embedder,
    theta: f64,
) -> Result<Descent<'t>, RetrieveError> {
    debug_assert_eq!(entry.level, 1);
    let verb = tree.children(&entry.id).find(
        |n| matches!(&n.payload, NodePayload::VerbInstance { lemma } if lemma == signature.lemma()),
    );
    let Some(verb) = verb else {
        return Ok(Descent::Miss(MissLevel::Verb));
    };
    let query = embedder.embed_text(&signature.canonical())?;
    match best_description_match(tree, &verb.id, &query) {
        Some((node, score)) if score >= theta => Ok(Descent::Found { node, score }),
        _ => Ok(Descent::Miss(MissLevel::Description)),
    }
}

/// Scores every leaf under a description node against the scene embedding.
/// Sorted by descending score, ties broken by ascending slice id.
pub fn score_leaves(
    tree: &SkillTree,
    description_node: &Node,
    scene_embedding: &EmbeddingVector,
) -> Vec<Candidate> {
    debug_assert_eq!(description_node.level, 3);
    let mut candidates: Vec<Candidate> = tree
        .children(&description_node.id)
        .filter_map(|leaf| match &leaf.payload {
            NodePayload::SliceLeaf {
                slice_id,
                scene_embedding: leaf_embedding,
            } => Some(Candidate {
                slice_id: slice_id.clone(),
                score: scene_embedding.cosine(leaf_embedding),
                out_of_view: false,
                inactive: false,
            }),
            _ => None,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.slice_id.cmp(&b.slice_id))
    });
    candidates
}

/// True when any trajectory pose projects outside the slice's own image
/// bounds (a pose behind the camera also counts as out of view).
pub fn trajectory_out_of_view(slice: &AnnotatedSlice) -> bool {
    let w = slice.camera.width as f64;
    let h = slice.camera.height as f64;
    slice
        .trajectory
        .poses()
        .iter()
        .any(|pose| match project_point(&slice.camera, pose.position) {
            Ok((u, v)) => u < 0.0 || u >= w || v < 0.0 || v >= h,
            Err(_) => true,
        })
}

/// True when the longest run of consecutive samples moving less than
/// `eps_motion` spans more than `inactive_frac` of the total duration.
pub fn trajectory_inactive(slice: &AnnotatedSlice, eps_motion: f64, inactive_frac: f64) -> bool {
    let poses = slice.trajectory.poses();
    let ts = slice.trajectory.timestamps();
    if poses.len() < 2 {
        return false;
    }
    let total = ts[ts.len() - 1] - ts[0];
    let mut longest = 0.0f64;
    let mut run_start: Option<usize> = None;
    for i in 0..poses.len() - 1 {
        let step = (poses[i + 1].position - poses[i].position).norm();
        if step < eps_motion {
            if run_start.is_none() {
                run_start = Some(i);
            }
            let start = run_start.unwrap();
            longest = longest.max(ts[i + 1] - ts[start]);
        } else {
            run_start = None;
        }
    }
    longest > inactive_frac * total
}

/// Removals performed by [`filter_candidates`], flags set on each entry.
#[derive(Debug, Clone, Default)]
pub struct FilterReport {
    pub removed: Vec<Candidate>,
}

/// Computes quality flags for each candidate from its slice trajectory and
/// splits the list into kept and removed.
pub fn filter_candidates(
    candidates: Vec<Candidate>,
    slices: &BTreeMap<String, AnnotatedSlice>,
    eps_motion: f64,
    inactive_frac: f64,
) -> (Vec<Candidate>, FilterReport) {
    let mut kept = Vec::new();
    let mut report = FilterReport::default();
    for mut candidate in candidates {
        if let Some(slice) = slices.get(&candidate.slice_id) {
            candidate.out_of_view = trajectory_out_of_view(slice);
            candidate.inactive = trajectory_inactive(slice, eps_motion, inactive_frac);
        }
        if candidate.flagged() {
            report.removed.push(candidate);
        } else {
            kept.push(candidate);
        }
    }
    (kept, report)
}

/// Result of a successful retrieval.
#[derive(Debug, Clone)]
pub struct Retrieval {
    /// Survivors in score order, truncated to the requested k.
    pub hits: Vec<Candidate>,
    /// Score of the matched description node.
    pub description_score: f64,
    /// Matched description node id.
    pub description_node: String,
    /// Candidates removed by the quality filter.
    pub removed: Vec<Candidate>,
}

/// Full hierarchical retrieval: entry point, descent, leaf scoring, quality
/// filtering, top-k truncation.
pub fn retrieve(
    repo: &Repository,
    query: &RetrievalQuery,
    lexicon: &VerbLexicon,
    embedder: &dyn Embedder,
    params: &RetrievalParams,
    k: usize,
) -> Result<Retrieval, RetrieveError> {
    params.validate()?;
    if k == 0 {
        return Err(RetrieveError::InvalidParams("k must be at least 1".into()));
    }
    let entry = find_entry(&repo.tree, &query.signature, lexicon);
    // The lexicon only routes to a class id; the tree decides existence.
    let Some(entry) = entry else {
        return Err(RetrieveError::NoMatch {
            level: MissLevel::Class,
        });
    };
    let description = match descend(&repo.tree, entry, &query.signature, embedder, params.theta)? {
        Descent::Found { node, score } => (node, score),
        Descent::Miss(level) => return Err(RetrieveError::NoMatch { level }),
    };
    let scored = score_leaves(&repo.tree, description.0, &query.scene_embedding);
    let (mut kept, report) = filter_candidates(
        scored,
        &repo.slices,
        params.eps_motion,
        params.inactive_frac,
    );
    if kept.is_empty() {
        return Err(RetrieveError::NoMatch {
            level: MissLevel::Filtered,
        });
    }
    kept.truncate(k);
    Ok(Retrieval {
        hits: kept,
        description_score: description.1,
        description_node: description.0.id.clone(),
        removed: report.removed,
    })
}
