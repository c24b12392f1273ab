//! Automatic skill annotation for demonstration videos: procedure
//! extraction, skill description, temporal alignment, and slice cutting.
//!
//! A [`VideoRecord`] arrives with keyframes already chosen upstream (for
//! example at gripper open/close events); this module turns it into
//! [`AnnotatedSlice`] records ready for taxonomy insertion.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, GeometryError, Pose6D, Rotation, TrajectorySE3, Vec3};
use crate::modelgw::{GatewayError, ImageRef, ModelGateway, ModelRequest, PromptSet, Role};
use crate::plan::SkillLibrary;
use crate::skillparse::{parse_signature, SkillParseError, SkillSignature};

/// Slices spanning less than this many seconds are dropped at ingestion.
pub const MIN_SLICE_DURATION: f64 = 0.2;
/// Slices with fewer trajectory samples than this are dropped at ingestion.
pub const MIN_SLICE_SAMPLES: usize = 2;

/// Upper bound on keyframes supported by 3-digit sequence labels.
pub const MAX_KEYFRAMES: usize = 1000;

static NUMBERED_LINE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)[.)]\s*(.*\S)\s*$").unwrap());
static INTERVAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{3})\s*-\s*(\d{3})\b").unwrap());

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("step {step}: {source}")]
    MalformedSignature {
        step: usize,
        source: SkillParseError,
    },
    #[error("video has {0} keyframes; sequence labels support at most 1000")]
    TooManyKeyframes(usize),
    #[error("keyframe label {label} out of range for {count} keyframes")]
    IndexOutOfRange { label: usize, count: usize },
    #[error("no trajectory samples inside interval [{start_t}, {end_t}]")]
    EmptySlice { start_t: f64, end_t: f64 },
    #[error("invalid video manifest: {0}")]
    InvalidManifest(String),
}

/// A keyframe: an image handle plus its timestamp in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub image: ImageRef,
    pub t: f64,
}

/// A demonstration video with its end-effector trajectory and camera.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub video_id: String,
    pub keyframes: Vec<Keyframe>,
    pub trajectory: TrajectorySE3,
    pub camera: CameraModel,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !id_is_safe(&self.video_id) {
            return Err(AnnotateError::InvalidManifest(format!(
                "video id {:?} must match [A-Za-z0-9_-]+",
                self.video_id
            )));
        }
        if self.keyframes.len() < 2 {
            return Err(AnnotateError::InvalidManifest(
                "video needs at least 2 keyframes".into(),
            ));
        }
        let (t0, t1) = (self.trajectory.start_time(), self.trajectory.end_time());
        for kf in &self.keyframes {
            if !kf.t.is_finite() || kf.t < t0 || kf.t > t1 {
                return Err(AnnotateError::InvalidManifest(format!(
                    "keyframe at t={} outside trajectory range [{t0}, {t1}]",
                    kf.t
                )));
            }
        }
        for w in self.keyframes.windows(2) {
            if w[1].t <= w[0].t {
                return Err(AnnotateError::InvalidManifest(
                    "keyframe timestamps must be strictly increasing".into(),
                ));
            }
        }
        self.camera.validate()?;
        Ok(())
    }
}

fn id_is_safe(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Step-by-step procedure extracted from a video.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcedurePlan {
    pub steps: Vec<String>,
}

/// A skill assigned to procedure steps.
#[derive(Debug, Clone)]
pub struct SkillAnnotation {
    pub signature: SkillSignature,
    pub description: String,
    pub source_step_indices: Vec<usize>,
}

/// Keyframe interval selected for one skill annotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedInterval {
    pub start_idx: usize,
    pub end_idx: usize,
    pub start_t: f64,
    pub end_t: f64,
}

/// One annotated demonstration segment: the unit stored at taxonomy leaves.
#[derive(Debug, Clone)]
pub struct AnnotatedSlice {
    pub slice_id: String,
    pub video_id: String,
    pub signature: SkillSignature,
    pub description: String,
    pub interval: AlignedInterval,
    pub trajectory: TrajectorySE3,
    pub camera: CameraModel,
    pub initial_frame: ImageRef,
}

/// Why a cut slice was rejected at ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    TooFewSamples { samples: usize },
    TooShort { millis: u64 },
    EmptyInterval,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DropReason::TooFewSamples { samples } => {
                write!(
                    f,
                    "only {samples} trajectory sample(s), need {MIN_SLICE_SAMPLES}"
                )
            }
            DropReason::TooShort { millis } => write!(
                f,
                "interval spans {}.{:03} s, need at least {MIN_SLICE_DURATION} s",
                millis / 1000,
                millis % 1000
            ),
            DropReason::EmptyInterval => write!(f, "no trajectory samples inside the interval"),
        }
    }
}

/// Record of a slice dropped by quality filtering.
#[derive(Debug, Clone)]
pub struct DroppedSlice {
    pub slice_id: String,
    pub reason: DropReason,
}

/// Output of annotating one video.
#[derive(Debug, Clone)]
pub struct VideoAnnotation {
    pub slices: Vec<AnnotatedSlice>,
    pub dropped: Vec<DroppedSlice>,
}

/// Zero-padded 3-digit sequence labels for each keyframe, in order.
pub fn number_keyframes(video: &VideoRecord) -> Result<Vec<(String, ImageRef)>, AnnotateError> {
    if video.keyframes.is_empty() {
        return Err(AnnotateError::InvalidManifest("no keyframes".into()));
    }
    if video.keyframes.len() > MAX_KEYFRAMES {
        return Err(AnnotateError::TooManyKeyframes(video.keyframes.len()));
    }
    Ok(video
        .keyframes
        .iter()
        .enumerate()
        .map(|(i, kf)| (format!("{i:03}"), kf.image.clone()))
        .collect())
}

fn parse_numbered_list(text: &str) -> Result<Vec<String>, AnnotateError> {
    let mut steps = Vec::new();
    for line in text.lines() {
        if let Some(caps) = NUMBERED_LINE_RE.captures(line) {
            steps.push(caps[2].to_string());
        }
    }
    if steps.is_empty() {
        return Err(AnnotateError::MalformedResponse(format!(
            "no numbered steps in {text:?}"
        )));
    }
    Ok(steps)
}

/// Builds `"video_id/stepN"` from an annotation's first source step.
fn align_scenario_key(video: &VideoRecord, annotation: &SkillAnnotation) -> String {
    let step = annotation.source_step_indices.first().copied().unwrap_or(0);
    format!("{}/step{step}", video.video_id)
}

/// Cuts the annotated interval out of the video.
pub fn cut_slice(
    video: &VideoRecord,
    annotation: &SkillAnnotation,
    interval: &AlignedInterval,
) -> Result<AnnotatedSlice, AnnotateError> {
    let trajectory = video
        .trajectory
        .window(interval.start_t, interval.end_t)
        .ok_or(AnnotateError::EmptySlice {
            start_t: interval.start_t,
            end_t: interval.end_t,
        })?;
    let slice_id = format!(
        "{}/{}-{}/{}",
        video.video_id,
        interval.start_idx,
        interval.end_idx,
        annotation.signature.lemma()
    );
    Ok(AnnotatedSlice {
        slice_id,
        video_id: video.video_id.clone(),
        signature: annotation.signature.clone(),
        description: annotation.description.clone(),
        interval: *interval,
        trajectory,
        camera: video.camera.clone(),
        initial_frame: video.keyframes[interval.start_idx].image.clone(),
    })
}

/// The three-stage annotation pipeline bound to a gateway and base library.
pub struct Annotator<'a> {
    gateway: &'a dyn ModelGateway,
    prompts: &'a PromptSet,
    base_library: &'a SkillLibrary,
    extractor_templates: Vec<String>,
}

impl<'a> Annotator<'a> {
    pub fn new(
        gateway: &'a dyn ModelGateway,
        prompts: &'a PromptSet,
        base_library: &'a SkillLibrary,
    ) -> Self {
        Self {
            gateway,
            prompts,
            base_library,
            extractor_templates: prompts.extractor_templates(),
        }
    }

    pub fn with_templates(mut self, templates: Vec<String>) -> Self {
        assert!(
            !templates.is_empty(),
            "need at least one extractor template"
        );
        self.extractor_templates = templates;
        self
    }

    /// Stage 1: one extractor call per instruction template, then one
    /// consolidation call that merges the candidate plans.
    pub fn extract_procedure(&self, video: &VideoRecord) -> Result<ProcedurePlan, AnnotateError> {
        let keyframe_images: Vec<ImageRef> =
            video.keyframes.iter().map(|kf| kf.image.clone()).collect();
        let mut candidates = Vec::new();
        for (i, template) in self.extractor_templates.iter().enumerate() {
            let req = ModelRequest::new(Role::Extractor, format!("{}/extract/{i}", video.video_id))
                .with_text(template.clone())
                .with_images(keyframe_images.iter().cloned());
            let resp = self.gateway.complete(&req)?;
            // Each candidate must itself be a numbered list.
            parse_numbered_list(&resp.text)?;
            candidates.push(resp.text);
        }
        let consolidation = self.prompts.render(
            "consolidate",
            &[("candidates", candidates.join("\n---\n").as_str())],
        );
        let req = ModelRequest::new(Role::Extractor, format!("{}/consolidate", video.video_id))
            .with_text(consolidation)
            .with_images(keyframe_images);
        let resp = self.gateway.complete(&req)?;
        Ok(ProcedurePlan {
            steps: parse_numbered_list(&resp.text)?,
        })
    }

    /// Stage 2: maps each procedure step to a base-library or new skill
    /// signature. Response lines are `N. signature [:: description]`; the
    /// description defaults to the step text.
    pub fn describe_skills(
        &self,
        video: &VideoRecord,
        plan: &ProcedurePlan,
    ) -> Result<Vec<SkillAnnotation>, AnnotateError> {
        let steps_text = plan
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let text = self.prompts.render(
            "descriptor",
            &[
                ("library", self.base_library.api_text().as_str()),
                ("steps", steps_text.as_str()),
            ],
        );
        let req = ModelRequest::new(Role::Descriptor, format!("{}/describe", video.video_id))
            .with_text(text)
            .with_image(video.keyframes[0].image.clone());
        let resp = self.gateway.complete(&req)?;

        let mut annotations = Vec::new();
        for line in resp.text.lines() {
            let line_trim = line.trim();
            if line_trim.is_empty() {
                continue;
            }
            let caps = NUMBERED_LINE_RE.captures(line).ok_or_else(|| {
                AnnotateError::MalformedResponse(format!("descriptor line {line_trim:?}"))
            })?;
            let step_no: usize = caps[1].parse().map_err(|_| {
                AnnotateError::MalformedResponse(format!("bad step number in {line_trim:?}"))
            })?;
            if step_no == 0 || step_no > plan.steps.len() {
                return Err(AnnotateError::MalformedResponse(format!(
                    "step {step_no} out of range 1..={}",
                    plan.steps.len()
                )));
            }
            let rest = &caps[2];
            let (sig_text, description) = match rest.split_once("::") {
                Some((head, tail)) => (head.trim(), tail.trim().to_string()),
                None => (rest.trim(), plan.steps[step_no - 1].clone()),
            };
            let signature =
                parse_signature(sig_text).map_err(|source| AnnotateError::MalformedSignature {
                    step: step_no,
                    source,
                })?;
            annotations.push(SkillAnnotation {
                signature,
                description,
                source_step_indices: vec![step_no - 1],
            });
        }
        if annotations.is_empty() {
            return Err(AnnotateError::MalformedResponse(
                "descriptor produced no annotations".into(),
            ));
        }
        Ok(annotations)
    }

    /// Stage 3: asks the aligner for the `NNN-NNN` keyframe interval of one
    /// annotation. A reversed interval is swapped rather than rejected.
    pub fn align_interval(
        &self,
        video: &VideoRecord,
        annotation: &SkillAnnotation,
    ) -> Result<AlignedInterval, AnnotateError> {
        let labels = number_keyframes(video)?;
        let text = self.prompts.render(
            "aligner",
            &[
                ("first_label", labels[0].0.as_str()),
                ("last_label", labels[labels.len() - 1].0.as_str()),
                ("description", annotation.description.as_str()),
            ],
        );
        let req = ModelRequest::new(Role::Aligner, align_scenario_key(video, annotation))
            .with_text(text)
            .with_images(labels.iter().map(|(_, img)| img.clone()));
        let resp = self.gateway.complete(&req)?;

        let caps = INTERVAL_RE.captures(&resp.text).ok_or_else(|| {
            AnnotateError::MalformedResponse(format!("no NNN-NNN interval in {:?}", resp.text))
        })?;
        let mut start: usize = caps[1].parse().unwrap();
        let mut end: usize = caps[2].parse().unwrap();
        if start > end {
            std::mem::swap(&mut start, &mut end);
        }
        let count = video.keyframes.len();
        if end >= count {
            return Err(AnnotateError::IndexOutOfRange { label: end, count });
        }
        Ok(AlignedInterval {
            start_idx: start,
            end_idx: end,
            start_t: video.keyframes[start].t,
            end_t: video.keyframes[end].t,
        })
    }

    /// Runs the full pipeline on one video, applying the slice-quality
    /// filter. Degenerate intervals become drop records instead of errors.
    pub fn annotate_video(&self, video: &VideoRecord) -> Result<VideoAnnotation, AnnotateError> {
        video.validate()?;
        let plan = self.extract_procedure(video)?;
        let annotations = self.describe_skills(video, &plan)?;
        let mut slices = Vec::new();
        let mut dropped = Vec::new();
        for annotation in &annotations {
            let interval = self.align_interval(video, annotation)?;
            match cut_slice(video, annotation, &interval) {
                Ok(slice) => {
                    if slice.trajectory.len() < MIN_SLICE_SAMPLES {
                        dropped.push(DroppedSlice {
                            slice_id: slice.slice_id,
                            reason: DropReason::TooFewSamples {
                                samples: slice.trajectory.len(),
                            },
                        });
                    } else if interval.end_t - interval.start_t < MIN_SLICE_DURATION {
                        dropped.push(DroppedSlice {
                            slice_id: slice.slice_id,
                            reason: DropReason::TooShort {
                                millis: ((interval.end_t - interval.start_t) * 1000.0).round()
                                    as u64,
                            },
                        });
                    } else {
                        slices.push(slice);
                    }
                }
                Err(AnnotateError::EmptySlice { .. }) => {
                    let slice_id = format!(
                        "{}/{}-{}/{}",
                        video.video_id,
                        interval.start_idx,
                        interval.end_idx,
                        annotation.signature.lemma()
                    );
                    dropped.push(DroppedSlice {
                        slice_id,
                        reason: DropReason::EmptyInterval,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(VideoAnnotation { slices, dropped })
    }
}

// ---------------------------------------------------------------------------
// Video manifest wire format
// ---------------------------------------------------------------------------

/// Camera block shared by video manifests and slice files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDto {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 4x4 camera-from-world transform, 16 values.
    pub extrinsic: Vec<f64>,
}

impl CameraDto {
    pub fn from_camera(camera: &CameraModel) -> Self {
        Self {
            fx: camera.fx,
            fy: camera.fy,
            cx: camera.cx,
            cy: camera.cy,
            width: camera.width,
            height: camera.height,
            extrinsic: camera.extrinsic.iter().flatten().copied().collect(),
        }
    }

    pub fn into_camera(self) -> Result<CameraModel, AnnotateError> {
        if self.extrinsic.len() != 16 {
            return Err(AnnotateError::InvalidManifest(format!(
                "extrinsic has {} values, expected 16",
                self.extrinsic.len()
            )));
        }
        let mut extrinsic = [[0.0; 4]; 4];
        for (i, v) in self.extrinsic.iter().enumerate() {
            extrinsic[i / 4][i % 4] = *v;
        }
        let camera = CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            extrinsic,
        };
        camera.validate()?;
        Ok(camera)
    }
}

/// Converts trajectory poses to `[t, x, y, z, qw, qx, qy, qz]` rows with
/// grid-snapped, sign-canonical quaternions (see `canonical_quaternion`).
pub fn trajectory_to_rows(trajectory: &TrajectorySE3) -> Vec<[f64; 8]> {
    trajectory
        .poses()
        .iter()
        .zip(trajectory.timestamps())
        .map(|(pose, &t)| {
            let q = canonical_quaternion(&pose.orientation);
            [
                t,
                pose.position.x,
                pose.position.y,
                pose.position.z,
                q[0],
                q[1],
                q[2],
                q[3],
            ]
        })
        .collect()
}

/// Parses `[t, x, y, z, qw, qx, qy, qz]` rows into a trajectory.
pub fn rows_to_trajectory(rows: &[[f64; 8]]) -> Result<TrajectorySE3, AnnotateError> {
    let mut poses = Vec::with_capacity(rows.len());
    let mut timestamps = Vec::with_capacity(rows.len());
    for row in rows {
        let orientation = Rotation::from_quaternion(row[4], row[5], row[6], row[7])?;
        poses.push(Pose6D {
            position: Vec3::new(row[1], row[2], row[3]),
            orientation,
        });
        timestamps.push(row[0]);
    }
    Ok(TrajectorySE3::new(poses, timestamps)?)
}

/// Quantization grid for serialized quaternion components.
const QUAT_GRID: f64 = 1e12;

/// Unit quaternion for `rotation`, rounded to a 1e-12 grid with the sign
/// canonicalized on the first nonzero rounded component. Rounding after
/// conversion makes save -> load -> save a byte-level fixed point: the
/// reconstruction error (~1e-15) is far below half the grid spacing.
pub fn canonical_quaternion(rotation: &Rotation) -> [f64; 4] {
    let q = rotation.to_quaternion();
    let mut snapped = [0.0f64; 4];
    for (out, v) in snapped.iter_mut().zip(q) {
        let r = (v * QUAT_GRID).round() / QUAT_GRID;
        // Avoid negative zero, which serializes as "-0.0".
        *out = if r == 0.0 { 0.0 } else { r };
    }
    let flip = snapped
        .iter()
        .find(|v| **v != 0.0)
        .is_some_and(|v| *v < 0.0);
    if flip {
        for v in &mut snapped {
            if *v != 0.0 {
                *v = -*v;
            }
        }
    }
    snapped
}

/// Video manifest file: one JSON object per demonstration video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    pub keyframes: Vec<KeyframeEntry>,
    /// Rows of `[t, x, y, z, qw, qx, qy, qz]`.
    pub trajectory: Vec<[f64; 8]>,
    pub camera: CameraDto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyframeEntry {
    pub image: String,
    pub t: f64,
}

impl VideoManifest {
    pub fn from_json_str(json: &str) -> Result<Self, AnnotateError> {
        serde_json::from_str(json).map_err(|e| AnnotateError::InvalidManifest(e.to_string()))
    }

    pub fn into_video(self) -> Result<VideoRecord, AnnotateError> {
        let video = VideoRecord {
            video_id: self.video_id,
            keyframes: self
                .keyframes
                .into_iter()
                .map(|k| Keyframe {
                    image: ImageRef::new(k.image),
                    t: k.t,
                })
                .collect(),
            trajectory: rows_to_trajectory(&self.trajectory)?,
            camera: self.camera.into_camera()?,
        };
        video.validate()?;
        Ok(video)
    }

    pub fn from_video(video: &VideoRecord) -> Self {
        Self {
            video_id: video.video_id.clone(),
            keyframes: video
                .keyframes
                .iter()
                .map(|k| KeyframeEntry {
                    image: k.image.as_str().to_string(),
                    t: k.t,
                })
                .collect(),
            trajectory: trajectory_to_rows(&video.trajectory),
            camera: CameraDto::from_camera(&video.camera),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgw::FixtureBackend;
    use crate::plan::SkillLibrary;

    fn base_library() -> SkillLibrary {
        SkillLibrary::from_json_str(
            r#"[
                {"name": "pick", "signature": "pick(object=*)", "doc": "Pick up an object."},
                {"name": "place", "signature": "place(object=*, target=*)", "doc": "Place an object."}
            ]"#,
        )
        .unwrap()
    }

    fn test_video(n_keyframes: usize) -> VideoRecord {
        let n = 10 * (n_keyframes - 1) + 1;
        let poses: Vec<Pose6D> = (0..n)
            .map(|i| Pose6D {
                position: Vec3::new(0.01 * i as f64, 0.0, 0.1),
                orientation: Rotation::about_z(0.01 * i as f64),
            })
            .collect();
        let ts: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        VideoRecord {
            video_id: "video_007".into(),
            keyframes: (0..n_keyframes)
                .map(|i| Keyframe {
                    image: ImageRef::new(format!("frames/{i:03}.png")),
                    t: i as f64,
                })
                .collect(),
            trajectory: TrajectorySE3::new(poses, ts).unwrap(),
            camera: CameraModel::with_identity_extrinsic(100.0, 100.0, 50.0, 50.0, 100, 100),
        }
    }

    #[test]
    fn numbering_zero_pads() {
        let labels = number_keyframes(&test_video(3)).unwrap();
        let names: Vec<&str> = labels.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(names, ["000", "001", "002"]);
        let labels = number_keyframes(&test_video(12)).unwrap();
        assert_eq!(labels.last().unwrap().0, "011");
    }

    #[test]
    fn numbering_rejects_too_many() {
        let mut video = test_video(2);
        video.keyframes = (0..1001)
            .map(|i| Keyframe {
                image: ImageRef::new(format!("f{i}")),
                t: i as f64 * 0.001,
            })
            .collect();
        assert!(matches!(
            number_keyframes(&video),
            Err(AnnotateError::TooManyKeyframes(1001))
        ));
    }

    #[test]
    fn extract_procedure_consolidates_candidates() {
        let video = test_video(3);
        let backend = FixtureBackend::new(8)
            .with_entry(
                Role::Extractor,
                "video_007/extract/0",
                "1. pick sponge\n2. wipe desk",
            )
            .with_entry(
                Role::Extractor,
                "video_007/extract/1",
                "1. grab sponge\n2. clean surface",
            )
            .with_entry(
                Role::Extractor,
                "video_007/consolidate",
                "1. pick sponge\n2. wipe desk",
            );
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib)
            .with_templates(vec!["list the steps".into(), "describe the actions".into()]);
        let plan = annotator.extract_procedure(&video).unwrap();
        assert_eq!(
            plan.steps,
            vec!["pick sponge".to_string(), "wipe desk".to_string()]
        );
    }

    #[test]
    fn extract_procedure_single_template() {
        let video = test_video(3);
        let backend = FixtureBackend::new(8)
            .with_entry(
                Role::Extractor,
                "video_007/extract/0",
                "1. close the drawer",
            )
            .with_entry(
                Role::Extractor,
                "video_007/consolidate",
                "1. close the drawer",
            );
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator =
            Annotator::new(&backend, &prompts, &lib).with_templates(vec!["steps?".into()]);
        let plan = annotator.extract_procedure(&video).unwrap();
        assert_eq!(plan.steps, vec!["close the drawer".to_string()]);
    }

    #[test]
    fn extract_procedure_rejects_unnumbered_response() {
        let video = test_video(3);
        let backend = FixtureBackend::new(8).with_entry(
            Role::Extractor,
            "video_007/extract/0",
            "the robot does things",
        );
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator =
            Annotator::new(&backend, &prompts, &lib).with_templates(vec!["steps?".into()]);
        assert!(matches!(
            annotator.extract_procedure(&video),
            Err(AnnotateError::MalformedResponse(_))
        ));
    }

    #[test]
    fn describe_skills_splits_base_and_new() {
        let video = test_video(3);
        let backend = FixtureBackend::new(8).with_entry(
            Role::Descriptor,
            "video_007/describe",
            "1. pick(object=sponge)\n2. wipe(target=desk, tool=sponge) :: wipe the desk surface",
        );
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib);
        let plan = ProcedurePlan {
            steps: vec!["pick sponge".into(), "wipe desk".into()],
        };
        let annotations = annotator.describe_skills(&video, &plan).unwrap();
        assert_eq!(annotations.len(), 2);
        assert!(lib.contains_lemma(annotations[0].signature.lemma()));
        assert!(!lib.contains_lemma(annotations[1].signature.lemma()));
        // Default description falls back to the step text.
        assert_eq!(annotations[0].description, "pick sponge");
        assert_eq!(annotations[1].description, "wipe the desk surface");
        assert_eq!(annotations[1].source_step_indices, vec![1]);
    }

    #[test]
    fn describe_skills_rejects_non_canonical_line() {
        let video = test_video(3);
        let backend = FixtureBackend::new(8).with_entry(
            Role::Descriptor,
            "video_007/describe",
            "1. wipe desk",
        );
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib);
        let plan = ProcedurePlan {
            steps: vec!["wipe desk".into()],
        };
        match annotator.describe_skills(&video, &plan) {
            Err(AnnotateError::MalformedSignature { step: 1, .. }) => {}
            other => panic!("expected MalformedSignature step 1, got {other:?}"),
        }
    }

    fn wipe_annotation() -> SkillAnnotation {
        SkillAnnotation {
            signature: parse_signature("wipe(target=desk, tool=sponge)").unwrap(),
            description: "wipe the desk".into(),
            source_step_indices: vec![2],
        }
    }

    #[test]
    fn align_interval_parses_and_looks_up_times() {
        let video = test_video(12);
        let backend =
            FixtureBackend::new(8).with_entry(Role::Aligner, "video_007/step2", "004-009");
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib);
        let interval = annotator
            .align_interval(&video, &wipe_annotation())
            .unwrap();
        assert_eq!((interval.start_idx, interval.end_idx), (4, 9));
        assert!((interval.start_t - 4.0).abs() < 1e-12);
        assert!((interval.end_t - 9.0).abs() < 1e-12);
    }

    #[test]
    fn align_interval_single_keyframe_and_swap() {
        let video = test_video(12);
        let prompts = PromptSet::defaults();
        let lib = base_library();

        let backend =
            FixtureBackend::new(8).with_entry(Role::Aligner, "video_007/step2", "007-007");
        let annotator = Annotator::new(&backend, &prompts, &lib);
        let interval = annotator
            .align_interval(&video, &wipe_annotation())
            .unwrap();
        assert_eq!((interval.start_idx, interval.end_idx), (7, 7));

        let backend =
            FixtureBackend::new(8).with_entry(Role::Aligner, "video_007/step2", "009-004");
        let annotator = Annotator::new(&backend, &prompts, &lib);
        let interval = annotator
            .align_interval(&video, &wipe_annotation())
            .unwrap();
        assert_eq!((interval.start_idx, interval.end_idx), (4, 9));
    }

    #[test]
    fn align_interval_rejects_out_of_range_label() {
        let video = test_video(12);
        let backend =
            FixtureBackend::new(8).with_entry(Role::Aligner, "video_007/step2", "900-905");
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib);
        assert!(matches!(
            annotator.align_interval(&video, &wipe_annotation()),
            Err(AnnotateError::IndexOutOfRange {
                label: 905,
                count: 12
            })
        ));
    }

    #[test]
    fn align_interval_rejects_missing_pattern() {
        let video = test_video(12);
        let backend =
            FixtureBackend::new(8).with_entry(Role::Aligner, "video_007/step2", "frames 4 to 9");
        let prompts = PromptSet::defaults();
        let lib = base_library();
        let annotator = Annotator::new(&backend, &prompts, &lib);
        assert!(matches!(
            annotator.align_interval(&video, &wipe_annotation()),
            Err(AnnotateError::MalformedResponse(_))
        ));
    }

    #[test]
    fn cut_slice_crops_and_names() {
        let video = test_video(12);
        let annotation = wipe_annotation();
        let interval = AlignedInterval {
            start_idx: 4,
            end_idx: 9,
            start_t: 4.0,
            end_t: 9.0,
        };
        let slice = cut_slice(&video, &annotation, &interval).unwrap();
        assert_eq!(slice.slice_id, "video_007/4-9/wipe");
        assert!(slice.trajectory.start_time() >= 4.0);
        assert!(slice.trajectory.end_time() <= 9.0);
        assert_eq!(slice.initial_frame.as_str(), "frames/004.png");

        let full = AlignedInterval {
            start_idx: 0,
            end_idx: 11,
            start_t: 0.0,
            end_t: 11.0,
        };
        let slice = cut_slice(&video, &annotation, &full).unwrap();
        assert_eq!(slice.trajectory.len(), video.trajectory.len());
    }

    #[test]
    fn cut_slice_empty_interval_errors() {
        let video = test_video(12);
        let annotation = wipe_annotation();
        let interval = AlignedInterval {
            start_idx: 4,
            end_idx: 4,
            start_t: 4.001,
            end_t: 4.009,
        };
        assert!(matches!(
            cut_slice(&video, &annotation, &interval),
            Err(AnnotateError::EmptySlice { .. })
        ));
    }

    #[test]
    fn slice_trajectory_is_contiguous_subsequence() {
        let video = test_video(12);
        let annotation = wipe_annotation();
        let interval = AlignedInterval {
            start_idx: 2,
            end_idx: 7,
            start_t: 2.0,
            end_t: 7.0,
        };
        let slice = cut_slice(&video, &annotation, &interval).unwrap();
        let all = video.trajectory.timestamps();
        let offset = all
            .iter()
            .position(|&t| t == slice.trajectory.timestamps()[0])
            .unwrap();
        for (i, t) in slice.trajectory.timestamps().iter().enumerate() {
            assert_eq!(*t, all[offset + i]);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let video = test_video(4);
        let manifest = VideoManifest::from_video(&video);
        let json = serde_json::to_string_pretty(&manifest).unwrap();
        let back = VideoManifest::from_json_str(&json)
            .unwrap()
            .into_video()
            .unwrap();
        assert_eq!(back.video_id, video.video_id);
        assert_eq!(back.keyframes.len(), video.keyframes.len());
        assert_eq!(back.trajectory.len(), video.trajectory.len());
        // Quaternion snapping keeps rotations within the serialization grid.
        for (a, b) in back.trajectory.poses().iter().zip(video.trajectory.poses()) {
            let d = a.orientation.mul(&b.orientation.transpose());
            assert!(d.orthogonality_error() < 1e-9);
        }
    }

    #[test]
    fn manifest_rejects_bad_video() {
        let mut video = test_video(4);
        video.video_id = "../evil".into();
        assert!(video.validate().is_err());

        let mut video = test_video(4);
        video.keyframes.truncate(1);
        assert!(video.validate().is_err());

        let mut video = test_video(4);
        video.keyframes[3].t = 99.0; // outside trajectory range
        assert!(video.validate().is_err());
    }

    #[test]
    fn canonical_quaternion_is_idempotent_under_round_trip() {
        for r in [
            Rotation::about_z(0.3),
            Rotation::about_x(2.9),
            Rotation::about_y(-1.1).mul(&Rotation::about_z(0.5)),
            Rotation::about_z(std::f64::consts::PI), // qw ~ 0 edge
        ] {
            let q1 = canonical_quaternion(&r);
            let back = Rotation::from_quaternion(q1[0], q1[1], q1[2], q1[3]).unwrap();
            let q2 = canonical_quaternion(&back);
            assert_eq!(q1, q2, "snapped quaternion must be a fixed point");
        }
    }
}
