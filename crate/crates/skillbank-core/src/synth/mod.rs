//! Few-shot skill implementation: render the retrieved demonstration as a
//! visual reference, extract its semantic constraints, select 2D
//! contact/waypoints over a labeled grid, lift them with scene depth, and
//! attach orientations transferred from the demonstration.

pub mod viz;

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use image::RgbaImage;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotatedSlice, CameraDto};
use crate::geometry::{
    attach_orientations, lift_pixel, project_point, CameraModel, GeometryError, Pose6D, Vec3,
    FALLBACK_REF, WORLD_UP,
};
use crate::modelgw::{
    Embedder, GatewayError, ImageRef, ModelGateway, ModelRequest, PromptSet, Role,
};
use crate::retrieve::{retrieve, Retrieval, RetrievalParams, RetrievalQuery, RetrieveError};
use crate::skillparse::{SkillSignature, VerbLexicon};
use crate::taxonomy::Repository;

/// Default scene grid size.
pub const DEFAULT_GRID_ROWS: u32 = 5;
pub const DEFAULT_GRID_COLS: u32 = 5;

/// Marker radius for rendered waypoints, pixels.
const MARKER_RADIUS: i64 = 4;

static GRID_LABEL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Z]+)([0-9]+)$").unwrap());

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("unknown grid label {0:?}")]
    UnknownGridLabel(String),
    #[error("point ({u:.1}, {v:.1}) is outside the image bounds")]
    OutOfBoundsPoint { u: f64, v: f64 },
    #[error("missing or invalid depth at pixel ({u}, {v})")]
    MissingDepth { u: i64, v: i64 },
    #[error("every trajectory point is behind the camera")]
    AllPointsBehindCamera,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Scene specification
// ---------------------------------------------------------------------------

/// Per-pixel depth in meters; zero or non-finite entries are holes.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, SynthError> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(SynthError::InvalidScene(format!(
                "depth map has {} values for {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn set(&mut self, x: u32, y: u32, value: f32) {
        let idx = (y as usize) * (self.width as usize) + x as usize;
        self.data[idx] = value;
    }

    /// Nearest-pixel depth sample; `None` marks a hole (<= 0 or non-finite).
    pub fn sample(&self, u: f64, v: f64) -> Option<f32> {
        let x = (u.round() as i64).clamp(0, self.width as i64 - 1) as usize;
        let y = (v.round() as i64).clamp(0, self.height as i64 - 1) as usize;
        let value = self.data[y * self.width as usize + x];
        (value.is_finite() && value > 0.0).then_some(value)
    }
}

/// A named 2D box annotating one skill parameter in the scene image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedBox {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

/// The target deployment scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub image: ImageRef,
    pub depth: DepthMap,
    pub camera: CameraModel,
    pub object_boxes: Vec<NamedBox>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.camera
            .validate()
            .map_err(|e| SynthError::InvalidScene(e.to_string()))?;
        if self.depth.width != self.camera.width || self.depth.height != self.camera.height {
            return Err(SynthError::InvalidScene(format!(
                "depth {}x{} does not match camera {}x{}",
                self.depth.width, self.depth.height, self.camera.width, self.camera.height
            )));
        }
        let (w, h) = (self.camera.width as f64, self.camera.height as f64);
        for b in &self.object_boxes {
            if b.x < 0.0 || b.y < 0.0 || b.x + b.width > w || b.y + b.height > h {
                return Err(SynthError::InvalidScene(format!(
                    "box {:?} exceeds image bounds",
                    b.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DepthSourceDto {
    Constant {
        value: f32,
    },
    Inline {
        width: u32,
        height: u32,
        data: Vec<f32>,
    },
    File {
        path: String,
        width: u32,
        height: u32,
    },
}

/// Scene file schema: image path, camera, depth source, parameter boxes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    image: String,
    camera: CameraDto,
    depth: DepthSourceDto,
    #[serde(default)]
    object_boxes: Vec<NamedBox>,
}

/// Loads a scene JSON file; relative depth paths resolve against the scene
/// file's directory.
pub fn load_scene(path: &Path) -> Result<SceneSpec, SynthError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SynthError::InvalidScene(format!("{}: {e}", path.display())))?;
    let file: SceneFile = serde_json::from_str(&text)
        .map_err(|e| SynthError::InvalidScene(format!("{}: {e}", path.display())))?;
    let camera = file
        .camera
        .into_camera()
        .map_err(|e| SynthError::InvalidScene(e.to_string()))?;
    let depth = match file.depth {
        DepthSourceDto::Constant { value } => {
            DepthMap::constant(camera.width, camera.height, value)
        }
        DepthSourceDto::Inline {
            width,
            height,
            data,
        } => DepthMap::new(width, height, data)?,
        DepthSourceDto::File {
            path: rel,
            width,
            height,
        } => {
            let depth_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let bytes = std::fs::read(&depth_path)
                .map_err(|e| SynthError::InvalidScene(format!("{}: {e}", depth_path.display())))?;
            if bytes.len() % 4 != 0 {
                return Err(SynthError::InvalidScene(format!(
                    "{}: not a packed f32 raster",
                    depth_path.display()
                )));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            DepthMap::new(width, height, data)?
        }
    };
    let scene = SceneSpec {
        image: ImageRef::new(file.image),
        depth,
        camera,
        object_boxes: file.object_boxes,
    };
    scene.validate()?;
    Ok(scene)
}

// ---------------------------------------------------------------------------
// Reference rendering and constraints
// ---------------------------------------------------------------------------

/// A retrieved demonstration rendered for visual prompting.
#[derive(Debug, Clone)]
pub struct ReferenceRender {
    pub example_image: ImageRef,
    /// Projections of the slice trajectory positions, in order.
    pub trace_2d: Vec<(f64, f64)>,
    /// Initial frame (or a blank canvas) with green numbered waypoints.
    pub overlay: RgbaImage,
    /// Trajectory points skipped because they were behind the camera.
    pub behind_camera: usize,
}

/// Projects the slice trajectory onto its initial frame and draws the
/// waypoint markers. Points behind the camera are skipped and counted.
pub fn render_reference(slice: &AnnotatedSlice) -> Result<ReferenceRender, SynthError> {
    let mut trace = Vec::new();
    let mut behind = 0usize;
    for pose in slice.trajectory.poses() {
        match project_point(&slice.camera, pose.position) {
            Ok(uv) => trace.push(uv),
            Err(GeometryError::BehindCamera(_)) => behind += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if trace.is_empty() {
        return Err(SynthError::AllPointsBehindCamera);
    }
    let mut overlay = match image::open(slice.initial_frame.path()) {
        Ok(img) => img.to_rgba8(),
        Err(_) => RgbaImage::new(slice.camera.width, slice.camera.height),
    };
    for (i, &(u, v)) in trace.iter().enumerate() {
        let (x, y) = (u.round() as i64, v.round() as i64);
        viz::draw_disc(&mut overlay, x, y, MARKER_RADIUS, viz::GREEN);
        viz::draw_number(
            &mut overlay,
            x + MARKER_RADIUS + 2,
            y - MARKER_RADIUS - 2,
            i,
            viz::GREEN,
        );
    }
    Ok(ReferenceRender {
        example_image: slice.initial_frame.clone(),
        trace_2d: trace,
        overlay,
        behind_camera: behind,
    })
}

/// Transferable guidance extracted from a demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub contact_constraint: String,
    pub waypoint_constraint: String,
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Row-major labeled grid over the scene image ("A1" top-left; letters are
/// rows, numbers are 1-based columns).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    width: u32,
    height: u32,
}

fn row_letters(mut row: u32) -> String {
    let mut out = String::new();
    loop {
        out.insert(0, (b'A' + (row % 26) as u8) as char);
        row /= 26;
        if row == 0 {
            break;
        }
        row -= 1;
    }
    out
}

impl GridSpec {
    pub fn center(&self, row: u32, col: u32) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.width as f64 / self.cols as f64,
            (row as f64 + 0.5) * self.height as f64 / self.rows as f64,
        )
    }

    pub fn label(&self, row: u32, col: u32) -> String {
        format!("{}{}", row_letters(row), col + 1)
    }

    /// All `(label, center)` cells in row-major order.
    pub fn cells(&self) -> Vec<(String, (f64, f64))> {
        let mut out = Vec::with_capacity((self.rows * self.cols) as usize);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push((self.label(r, c), self.center(r, c)));
            }
        }
        out
    }

    /// Cell center for a label like "B3", if the cell exists.
    pub fn resolve(&self, label: &str) -> Option<(f64, f64)> {
        let caps = GRID_LABEL_RE.captures(label)?;
        let mut row: u64 = 0;
        for ch in caps[1].bytes() {
            row = row * 26 + (ch - b'A') as u64 + 1;
        }
        let row = row.checked_sub(1)?;
        let col: u64 = caps[2].parse::<u64>().ok()?.checked_sub(1)?;
        if row >= self.rows as u64 || col >= self.cols as u64 {
            return None;
        }
        Some(self.center(row as u32, col as u32))
    }

    /// `label: (x, y)` lines for the prompt text.
    pub fn text(&self) -> String {
        self.cells()
            .iter()
            .map(|(label, (x, y))| format!("{label}: ({x:.1}, {y:.1})"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Discretizes the scene image into `rows x cols` labeled cells.
pub fn build_grid(scene: &SceneSpec, rows: u32, cols: u32) -> GridSpec {
    assert!(rows >= 2 && cols >= 2, "grid must be at least 2x2");
    GridSpec {
        rows,
        cols,
        width: scene.camera.width,
        height: scene.camera.height,
    }
}

// ---------------------------------------------------------------------------
// Waypoint selection and synthesis
// ---------------------------------------------------------------------------

/// Selected 2D plan: contact point plus N waypoints, all within image bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    pub contact_2d: (f64, f64),
    pub waypoints_2d: Vec<(f64, f64)>,
}

/// Executable output: contact pose first, then the waypoint poses.
#[derive(Debug, Clone)]
pub struct PoseSequence {
    pub poses: Vec<Pose6D>,
    pub source_slice_id: String,
}

/// Everything produced by one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub sequence: PoseSequence,
    pub constraints: ConstraintSet,
    pub waypoint_plan: WaypointPlan,
    pub retrieval: Retrieval,
}

/// Few-shot synthesis driver bound to a gateway, embedder, and parameters.
pub struct Synthesizer<'a> {
    gateway: &'a dyn ModelGateway,
    embedder: &'a dyn Embedder,
    prompts: &'a PromptSet,
    pub retrieval_params: RetrievalParams,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub top_k: usize,
    /// When set, prompt images (overlay, annotated scene) are written here.
    pub artifacts_dir: Option<PathBuf>,
    /// Optional prior-failure note appended to the selection prompt.
    pub prior_failure: Option<String>,
}

impl<'a> Synthesizer<'a> {
    pub fn new(
        gateway: &'a dyn ModelGateway,
        embedder: &'a dyn Embedder,
        prompts: &'a PromptSet,
    ) -> Self {
        Self {
            gateway,
            embedder,
            prompts,
            retrieval_params: RetrievalParams::default(),
            grid_rows: DEFAULT_GRID_ROWS,
            grid_cols: DEFAULT_GRID_COLS,
            top_k: crate::retrieve::DEFAULT_TOP_K,
            artifacts_dir: None,
            prior_failure: None,
        }
    }

    /// One constraint-extractor call; the response must carry `CONTACT:` and
    /// `WAYPOINTS:` lines.
    pub fn extract_constraints(
        &self,
        slice: &AnnotatedSlice,
        reference: &ReferenceRender,
    ) -> Result<ConstraintSet, SynthError> {
        let text = self.prompts.render(
            "constraint_extractor",
            &[("signature", slice.signature.canonical().as_str())],
        );
        let req = ModelRequest::new(Role::ConstraintExtractor, slice.slice_id.clone())
            .with_text(text)
            .with_image(reference.example_image.clone());
        let resp = self.gateway.complete(&req)?;
        let contact = labeled_line(&resp.text, "CONTACT:");
        let waypoints = labeled_line(&resp.text, "WAYPOINTS:");
        match (contact, waypoints) {
            (Some(c), Some(w)) if !c.is_empty() && !w.is_empty() => Ok(ConstraintSet {
                contact_constraint: c,
                waypoint_constraint: w,
            }),
            _ => Err(SynthError::MalformedResponse(format!(
                "constraint response must carry CONTACT: and WAYPOINTS: lines, got {:?}",
                resp.text
            ))),
        }
    }

    /// Builds the visual prompt package and asks the waypoint selector for
    /// the contact point and waypoints.
    #[allow(clippy::too_many_arguments)]
    pub fn select_waypoints(
        &self,
        reference: &ReferenceRender,
        constraints: &ConstraintSet,
        scene: &SceneSpec,
        signature: &SkillSignature,
        grid: &GridSpec,
    ) -> Result<WaypointPlan, SynthError> {
        let boxes_text = if scene.object_boxes.is_empty() {
            "(none)".to_string()
        } else {
            scene
                .object_boxes
                .iter()
                .map(|b| {
                    format!(
                        "{}: x={:.1}, y={:.1}, w={:.1}, h={:.1}",
                        b.name, b.x, b.y, b.width, b.height
                    )
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        let trace_text = reference
            .trace_2d
            .iter()
            .map(|(u, v)| format!("({u:.1}, {v:.1})"))
            .collect::<Vec<_>>()
            .join("; ");
        let mut text = self.prompts.render(
            "waypoint_selector",
            &[
                ("signature", signature.canonical().as_str()),
                ("trace", trace_text.as_str()),
                (
                    "contact_constraint",
                    constraints.contact_constraint.as_str(),
                ),
                (
                    "waypoint_constraint",
                    constraints.waypoint_constraint.as_str(),
                ),
                ("boxes", boxes_text.as_str()),
                ("grid", grid.text().as_str()),
            ],
        );
        if let Some(failure) = &self.prior_failure {
            text.push_str("\nA previous attempt failed: ");
            text.push_str(failure);
            text.push('\n');
        }

        let (overlay_ref, scene_ref) = self.write_artifacts(reference, scene, grid)?;
        let req = ModelRequest::new(Role::WaypointSelector, signature.canonical())
            .with_text(text)
            .with_image(overlay_ref)
            .with_image(scene_ref);
        let resp = self.gateway.complete(&req)?;

        let contact_text = labeled_line(&resp.text, "CONTACT:").ok_or_else(|| {
            SynthError::MalformedResponse(format!("no CONTACT: line in {:?}", resp.text))
        })?;
        let waypoints_text = labeled_line(&resp.text, "WAYPOINTS:").ok_or_else(|| {
            SynthError::MalformedResponse(format!("no WAYPOINTS: line in {:?}", resp.text))
        })?;
        let contact_2d = parse_point(&contact_text, grid, scene)?;
        let mut waypoints_2d = Vec::new();
        for item in waypoints_text.split(';') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            waypoints_2d.push(parse_point(item, grid, scene)?);
        }
        if waypoints_2d.is_empty() {
            return Err(SynthError::MalformedResponse(
                "waypoint list is empty".into(),
            ));
        }
        Ok(WaypointPlan {
            contact_2d,
            waypoints_2d,
        })
    }

    /// Writes the overlay and the grid/box-annotated scene image when an
    /// artifacts directory is configured; otherwise passes the raw handles.
    fn write_artifacts(
        &self,
        reference: &ReferenceRender,
        scene: &SceneSpec,
        grid: &GridSpec,
    ) -> Result<(ImageRef, ImageRef), SynthError> {
        let Some(dir) = &self.artifacts_dir else {
            return Ok((reference.example_image.clone(), scene.image.clone()));
        };
        std::fs::create_dir_all(dir)?;
        let overlay_path = dir.join("reference_overlay.png");
        reference
            .overlay
            .save(&overlay_path)
            .map_err(|e| SynthError::InvalidScene(format!("overlay save: {e}")))?;

        let mut annotated = match image::open(scene.image.path()) {
            Ok(img) => img.to_rgba8(),
            Err(_) => RgbaImage::new(scene.camera.width, scene.camera.height),
        };
        for c in 1..grid.cols {
            let x = (c as f64 * scene.camera.width as f64 / grid.cols as f64) as i64;
            viz::draw_line(
                &mut annotated,
                x,
                0,
                x,
                scene.camera.height as i64 - 1,
                viz::GRID_GRAY,
            );
        }
        for r in 1..grid.rows {
            let y = (r as f64 * scene.camera.height as f64 / grid.rows as f64) as i64;
            viz::draw_line(
                &mut annotated,
                0,
                y,
                scene.camera.width as i64 - 1,
                y,
                viz::GRID_GRAY,
            );
        }
        for b in &scene.object_boxes {
            viz::draw_rect(
                &mut annotated,
                b.x as i64,
                b.y as i64,
                b.width as i64,
                b.height as i64,
                viz::RED,
            );
        }
        let scene_path = dir.join("scene_annotated.png");
        annotated
            .save(&scene_path)
            .map_err(|e| SynthError::InvalidScene(format!("scene save: {e}")))?;
        Ok((
            ImageRef::new(overlay_path.to_string_lossy().into_owned()),
            ImageRef::new(scene_path.to_string_lossy().into_owned()),
        ))
    }

    /// Full pipeline: retrieve the best slice, build the prompt package,
    /// select 2D points, lift them with scene depth, attach orientations.
    pub fn synthesize(
        &self,
        signature: &SkillSignature,
        scene: &SceneSpec,
        repo: &Repository,
        lexicon: &VerbLexicon,
    ) -> Result<SynthOutput, SynthError> {
        scene.validate()?;
        let scene_embedding = self.embedder.embed_image(&scene.image)?;
        let query = RetrievalQuery {
            signature: signature.clone(),
            scene_embedding,
        };
        let retrieval = retrieve(
            repo,
            &query,
            lexicon,
            self.embedder,
            &self.retrieval_params,
            self.top_k,
        )?;
        let top = &retrieval.hits[0];
        let slice = repo
            .slice(&top.slice_id)
            .expect("retrieval hit must reference a stored slice");

        let reference = render_reference(slice)?;
        let constraints = self.extract_constraints(slice, &reference)?;
        let grid = build_grid(scene, self.grid_rows, self.grid_cols);
        let plan = self.select_waypoints(&reference, &constraints, scene, signature, &grid)?;

        let mut points_2d = Vec::with_capacity(1 + plan.waypoints_2d.len());
        points_2d.push(plan.contact_2d);
        points_2d.extend(plan.waypoints_2d.iter().copied());
        let mut points_3d = Vec::with_capacity(points_2d.len());
        for &(u, v) in &points_2d {
            let depth = scene.depth.sample(u, v).ok_or(SynthError::MissingDepth {
                u: u.round() as i64,
                v: v.round() as i64,
            })?;
            points_3d.push(lift_pixel(&scene.camera, (u, v), depth as f64)?);
        }
        let poses = attach_orientations_dedup(&points_3d, &slice.trajectory)?;
        Ok(SynthOutput {
            sequence: PoseSequence {
                poses,
                source_slice_id: top.slice_id.clone(),
            },
            constraints,
            waypoint_plan: plan,
            retrieval,
        })
    }
}

/// Consecutive-duplicate removal with an original-index -> unique-index map.
fn dedup_consecutive(points: &[Vec3]) -> (Vec<Vec3>, Vec<usize>) {
    let mut unique: Vec<Vec3> = Vec::with_capacity(points.len());
    let mut map = Vec::with_capacity(points.len());
    for &p in points {
        match unique.last() {
            Some(&last) if (p - last).norm() < 1e-9 => {}
            _ => unique.push(p),
        }
        map.push(unique.len() - 1);
    }
    (unique, map)
}

/// Like [`attach_orientations`], but tolerant of coincident consecutive
/// waypoints: local frames are built over the deduplicated point lists
/// (selected points often repeat, e.g. contact == first waypoint), while
/// source sampling and the output length follow the original counts.
fn attach_orientations_dedup(
    waypoints3d: &[Vec3],
    source: &crate::geometry::TrajectorySE3,
) -> Result<Vec<Pose6D>, SynthError> {
    let (unique_tgt, tgt_map) = dedup_consecutive(waypoints3d);
    let src_positions: Vec<Vec3> = source.positions();
    let (unique_src, src_map) = dedup_consecutive(&src_positions);
    if unique_tgt.len() == waypoints3d.len() && unique_src.len() == src_positions.len() {
        return Ok(attach_orientations(
            waypoints3d,
            source,
            WORLD_UP,
            FALLBACK_REF,
        )?);
    }
    let indices = crate::geometry::sample_orientation_indices(source.len(), waypoints3d.len());
    let mut poses = Vec::with_capacity(waypoints3d.len());
    for (j, &position) in waypoints3d.iter().enumerate() {
        let si = indices[j];
        let frame_src =
            crate::geometry::build_local_frame(&unique_src, src_map[si], WORLD_UP, FALLBACK_REF)?;
        let frame_tgt =
            crate::geometry::build_local_frame(&unique_tgt, tgt_map[j], WORLD_UP, FALLBACK_REF)?;
        let orientation = crate::geometry::transfer_orientation(
            &source.poses()[si].orientation,
            &frame_src,
            &frame_tgt,
        );
        poses.push(Pose6D {
            position,
            orientation,
        });
    }
    Ok(poses)
}

fn labeled_line(text: &str, label: &str) -> Option<String> {
    text.lines()
        .filter_map(|line| line.trim().strip_prefix(label))
        .map(|rest| rest.trim().to_string())
        .next()
}

fn parse_point(item: &str, grid: &GridSpec, scene: &SceneSpec) -> Result<(f64, f64), SynthError> {
    let item = item.trim();
    if GRID_LABEL_RE.is_match(item) {
        return grid
            .resolve(item)
            .ok_or_else(|| SynthError::UnknownGridLabel(item.to_string()));
    }
    if let Some((xs, ys)) = item.split_once(',') {
        let u: f64 = xs
            .trim()
            .parse()
            .map_err(|_| SynthError::MalformedResponse(format!("bad pixel pair {item:?}")))?;
        let v: f64 = ys
            .trim()
            .parse()
            .map_err(|_| SynthError::MalformedResponse(format!("bad pixel pair {item:?}")))?;
        let (w, h) = (scene.camera.width as f64, scene.camera.height as f64);
        if !(u.is_finite() && v.is_finite()) || u < 0.0 || u >= w || v < 0.0 || v >= h {
            return Err(SynthError::OutOfBoundsPoint { u, v });
        }
        return Ok((u, v));
    }
    Err(SynthError::MalformedResponse(format!(
        "point {item:?} is neither a grid label nor x,y"
    )))
}

// ---------------------------------------------------------------------------
// Output file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PoseDto {
    position: [f64; 3],
    /// Row-major 3x3 rotation, 9 values.
    rotation: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct ProvenanceDto {
    slice_id: String,
    constraints: ConstraintSet,
    waypoint_plan: WaypointPlanDto,
}

#[derive(Serialize, Deserialize)]
struct WaypointPlanDto {
    contact_2d: [f64; 2],
    waypoints_2d: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct PoseSequenceFile {
    poses: Vec<PoseDto>,
    provenance: ProvenanceDto,
}

/// Serializes a synthesis result to the pose-sequence JSON format: a pose
/// array plus a provenance block.
pub fn output_to_json(output: &SynthOutput) -> String {
    let file = PoseSequenceFile {
        poses: output
            .sequence
            .poses
            .iter()
            .map(|p| {
                let m = p.orientation.rows();
                PoseDto {
                    position: [p.position.x, p.position.y, p.position.z],
                    rotation: [
                        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1],
                        m[2][2],
                    ],
                }
            })
            .collect(),
        provenance: ProvenanceDto {
            slice_id: output.sequence.source_slice_id.clone(),
            constraints: output.constraints.clone(),
            waypoint_plan: WaypointPlanDto {
                contact_2d: [
                    output.waypoint_plan.contact_2d.0,
                    output.waypoint_plan.contact_2d.1,
                ],
                waypoints_2d: output
                    .waypoint_plan
                    .waypoints_2d
                    .iter()
                    .map(|&(u, v)| [u, v])
                    .collect(),
            },
        },
    };
    let mut text = serde_json::to_string_pretty(&file).expect("serializable");
    text.push('\n');
    text
}
