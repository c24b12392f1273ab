//! On-disk repository layout:
//!
//! ```text
//! repo/
//!   manifest.json          version, counts, embedding dim, file checksums
//!   taxonomy.json          node array, sorted by id
//!   slices/<slice_id>.json one record per slice
//!   embeddings/<slice_id>.f32  little-endian scene embedding, length D
//! ```
//!
//! Saves are byte-deterministic: maps are sorted, floats use the shortest
//! round-trip representation, and serialized quaternions are snapped to a
//! fixed grid so save -> load -> save is a fixed point.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{
    rows_to_trajectory, trajectory_to_rows, AlignedInterval, AnnotatedSlice, CameraDto,
};
use crate::geometry::Rotation;
use crate::modelgw::{EmbeddingSource, EmbeddingVector, ImageRef};
use crate::skillparse::{parse_signature, parse_template};

use super::{leaf_node_id, Node, NodePayload, RepoStats, Repository};

/// Version written to and required from `manifest.json`.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("repository format version {found}, this build reads version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::StoreCorrupt(msg.into())
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    embedding_dim: usize,
    counts: RepoStats,
    /// Relative path -> SHA-256 hex digest.
    files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    level: u8,
    parent: Option<String>,
    payload: PayloadRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PayloadRecord {
    VerbClass {
        class_id: String,
        provisional: bool,
    },
    VerbInstance {
        lemma: String,
    },
    SkillDescription {
        template: String,
        embedding: Vec<f32>,
    },
    SliceLeaf {
        slice_id: String,
    },
}

#[derive(Serialize, Deserialize, PartialEq)]
struct IntervalDto {
    start_idx: usize,
    end_idx: usize,
    start_t: f64,
    end_t: f64,
}

#[derive(Serialize, Deserialize)]
struct SliceFile {
    slice_id: String,
    video_id: String,
    signature: String,
    description: String,
    interval: IntervalDto,
    camera: CameraDto,
    trajectory: Vec<[f64; 8]>,
    initial_frame: String,
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// A slice id doubles as a relative path; refuse anything that could walk
/// outside the repository.
fn safe_relative(rel: &str) -> Result<PathBuf, StoreError> {
    let path = PathBuf::from(rel);
    for component in path.components() {
        match component {
            Component::Normal(_) => {}
            _ => return Err(corrupt(format!("unsafe relative path {rel:?}"))),
        }
    }
    Ok(path)
}

fn embedding_to_bytes(embedding: &EmbeddingVector) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(embedding.dim() * 4);
    for v in embedding.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn embedding_from_bytes(
    bytes: &[u8],
    dim: usize,
    source: EmbeddingSource,
    what: &str,
) -> Result<EmbeddingVector, StoreError> {
    if bytes.len() != dim * 4 {
        return Err(corrupt(format!(
            "embedding for {what} has {} bytes, expected {}",
            bytes.len(),
            dim * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingVector::new(values, source).map_err(|e| corrupt(format!("embedding for {what}: {e}")))
}

fn slice_to_file(slice: &AnnotatedSlice) -> SliceFile {
    SliceFile {
        slice_id: slice.slice_id.clone(),
        video_id: slice.video_id.clone(),
        signature: slice.signature.canonical(),
        description: slice.description.clone(),
        interval: IntervalDto {
            start_idx: slice.interval.start_idx,
            end_idx: slice.interval.end_idx,
            start_t: slice.interval.start_t,
            end_t: slice.interval.end_t,
        },
        camera: CameraDto::from_camera(&slice.camera),
        trajectory: trajectory_to_rows(&slice.trajectory),
        initial_frame: slice.initial_frame.as_str().to_string(),
    }
}

fn slice_from_file(file: SliceFile) -> Result<AnnotatedSlice, StoreError> {
    let signature = parse_signature(&file.signature)
        .map_err(|e| corrupt(format!("slice {}: {e}", file.slice_id)))?;
    let trajectory = rows_to_trajectory(&file.trajectory)
        .map_err(|e| corrupt(format!("slice {}: {e}", file.slice_id)))?;
    let camera = file
        .camera
        .into_camera()
        .map_err(|e| corrupt(format!("slice {}: {e}", file.slice_id)))?;
    Ok(AnnotatedSlice {
        slice_id: file.slice_id,
        video_id: file.video_id,
        signature,
        description: file.description,
        interval: AlignedInterval {
            start_idx: file.interval.start_idx,
            end_idx: file.interval.end_idx,
            start_t: file.interval.start_t,
            end_t: file.interval.end_t,
        },
        trajectory,
        camera,
        initial_frame: ImageRef::new(file.initial_frame),
    })
}

/// True when `bytes` is a slice file equivalent to the in-memory slice:
/// identifiers, camera, interval, timestamps, and positions must match
/// exactly; rotations within the serialization tolerance.
fn cached_bytes_match(bytes: &[u8], slice: &AnnotatedSlice) -> bool {
    let Ok(file) = serde_json::from_slice::<SliceFile>(bytes) else {
        return false;
    };
    let fresh = slice_to_file(slice);
    if file.slice_id != fresh.slice_id
        || file.video_id != fresh.video_id
        || file.signature != fresh.signature
        || file.description != fresh.description
        || file.interval != fresh.interval
        || file.camera != fresh.camera
        || file.initial_frame != fresh.initial_frame
        || file.trajectory.len() != fresh.trajectory.len()
    {
        return false;
    }
    for (cached, current) in file.trajectory.iter().zip(&fresh.trajectory) {
        if cached[..4] != current[..4] {
            return false;
        }
        let (Ok(ra), Ok(rb)) = (
            Rotation::from_quaternion(cached[4], cached[5], cached[6], cached[7]),
            Rotation::from_quaternion(current[4], current[5], current[6], current[7]),
        ) else {
            return false;
        };
        let (a, b) = (ra.rows(), rb.rows());
        for i in 0..3 {
            for j in 0..3 {
                if (a[i][j] - b[i][j]).abs() > 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}

/// Writes the repository under `path`, replacing any previous contents of
/// `taxonomy.json`, `slices/`, and `embeddings/`.
pub fn save_repo(repo: &Repository, path: &Path) -> Result<(), StoreError> {
    repo.tree
        .validate()
        .map_err(|e| corrupt(format!("refusing to save invalid tree: {e}")))?;
    fs::create_dir_all(path)?;
    for sub in ["slices", "embeddings"] {
        let dir = path.join(sub);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
    }

    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut write_file = |rel: &str, bytes: &[u8]| -> Result<(), StoreError> {
        let target = path.join(safe_relative(rel)?);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, bytes)?;
        files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    };

    let records: Vec<NodeRecord> = repo
        .tree
        .nodes()
        .map(|node| NodeRecord {
            id: node.id.clone(),
            level: node.level,
            parent: node.parent.clone(),
            payload: match &node.payload {
                NodePayload::VerbClass {
                    class_id,
                    provisional,
                } => PayloadRecord::VerbClass {
                    class_id: class_id.clone(),
                    provisional: *provisional,
                },
                NodePayload::VerbInstance { lemma } => PayloadRecord::VerbInstance {
                    lemma: lemma.clone(),
                },
                NodePayload::SkillDescription {
                    template,
                    embedding,
                } => PayloadRecord::SkillDescription {
                    template: template.to_string(),
                    embedding: embedding.values().to_vec(),
                },
                NodePayload::SliceLeaf { slice_id, .. } => PayloadRecord::SliceLeaf {
                    slice_id: slice_id.clone(),
                },
            },
        })
        .collect();
    write_file("taxonomy.json", &to_json_bytes(&records))?;

    for (slice_id, slice) in &repo.slices {
        let bytes = match repo.slice_bytes.get(slice_id) {
            Some(cached) if cached_bytes_match(cached, slice) => cached.clone(),
            _ => to_json_bytes(&slice_to_file(slice)),
        };
        write_file(&format!("slices/{slice_id}.json"), &bytes)?;
    }
    for node in repo.tree.nodes() {
        if let NodePayload::SliceLeaf {
            slice_id,
            scene_embedding,
        } = &node.payload
        {
            write_file(
                &format!("embeddings/{slice_id}.f32"),
                &embedding_to_bytes(scene_embedding),
            )?;
        }
    }

    let manifest = ManifestFile {
        version: FORMAT_VERSION,
        embedding_dim: repo.tree.embedding_dim(),
        counts: repo.stats(),
        files,
    };
    let target = path.join("manifest.json");
    fs::write(target, to_json_bytes(&manifest))?;
    Ok(())
}

/// Loads a repository, verifying the format version and every file
/// checksum before reconstructing the tree.
pub fn load_repo(path: &Path) -> Result<Repository, StoreError> {
    let manifest_text = fs::read_to_string(path.join("manifest.json"))?;
    let raw: serde_json::Value =
        serde_json::from_str(&manifest_text).map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    let found = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("manifest.json has no version field"))? as u32;
    if found != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: ManifestFile =
        serde_json::from_value(raw).map_err(|e| corrupt(format!("manifest.json: {e}")))?;

    let mut contents: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (rel, expected) in &manifest.files {
        let target = path.join(safe_relative(rel)?);
        let bytes = fs::read(&target).map_err(|e| corrupt(format!("cannot read {rel}: {e}")))?;
        let actual = sha256_hex(&bytes);
        if actual != *expected {
            return Err(corrupt(format!("checksum mismatch for {rel}")));
        }
        contents.insert(rel.clone(), bytes);
    }

    let taxonomy_bytes = contents
        .get("taxonomy.json")
        .ok_or_else(|| corrupt("manifest does not list taxonomy.json"))?;
    let records: Vec<NodeRecord> = serde_json::from_slice(taxonomy_bytes)
        .map_err(|e| corrupt(format!("taxonomy.json: {e}")))?;

    let mut repo = Repository::new(manifest.embedding_dim);
    // Records are sorted by id, which orders parents (n1: < n2: < ...)
    // before children.
    for record in records {
        let payload = match record.payload {
            PayloadRecord::VerbClass {
                class_id,
                provisional,
            } => NodePayload::VerbClass {
                class_id,
                provisional,
            },
            PayloadRecord::VerbInstance { lemma } => NodePayload::VerbInstance { lemma },
            PayloadRecord::SkillDescription {
                template,
                embedding,
            } => NodePayload::SkillDescription {
                template: parse_template(&template)
                    .map_err(|e| corrupt(format!("node {}: {e}", record.id)))?,
                embedding: EmbeddingVector::new(embedding, EmbeddingSource::Text)
                    .map_err(|e| corrupt(format!("node {}: {e}", record.id)))?,
            },
            PayloadRecord::SliceLeaf { slice_id } => {
                let rel = format!("embeddings/{slice_id}.f32");
                let bytes = contents.get(&rel).ok_or_else(|| {
                    corrupt(format!("missing embedding file for slice {slice_id}"))
                })?;
                let scene_embedding = embedding_from_bytes(
                    bytes,
                    manifest.embedding_dim,
                    EmbeddingSource::Image,
                    &format!("slice {slice_id}"),
                )?;
                NodePayload::SliceLeaf {
                    slice_id,
                    scene_embedding,
                }
            }
        };
        repo.tree
            .add_node(Node {
                id: record.id,
                level: record.level,
                parent: record.parent,
                payload,
            })
            .map_err(|e| corrupt(e.to_string()))?;
    }

    for (rel, bytes) in &contents {
        let Some(rest) = rel.strip_prefix("slices/") else {
            continue;
        };
        let Some(slice_id) = rest.strip_suffix(".json") else {
            continue;
        };
        let file: SliceFile =
            serde_json::from_slice(bytes).map_err(|e| corrupt(format!("slice file {rel}: {e}")))?;
        if file.slice_id != slice_id {
            return Err(corrupt(format!(
                "slice file {rel} declares id {:?}",
                file.slice_id
            )));
        }
        let slice = slice_from_file(file)?;
        repo.slice_bytes
            .insert(slice.slice_id.clone(), bytes.clone());
        repo.slices.insert(slice.slice_id.clone(), slice);
    }

    repo.tree.validate().map_err(|e| corrupt(e.to_string()))?;
    if repo.stats() != manifest.counts {
        return Err(corrupt("node counts do not match the manifest"));
    }
    for node in repo.tree.nodes() {
        if let NodePayload::SliceLeaf { slice_id, .. } = &node.payload {
            if !repo.slices.contains_key(slice_id) {
                return Err(corrupt(format!("leaf without slice record: {slice_id}")));
            }
        }
    }
    for slice_id in repo.slices.keys() {
        if repo.tree.node(&leaf_node_id(slice_id)).is_none() {
            return Err(corrupt(format!("slice record without leaf: {slice_id}")));
        }
    }
    Ok(repo)
}
