//! Deterministic sample data: a 50-slice corpus for retrieval and taxonomy
//! testing, and a small on-disk demo workspace (video manifests, fixtures,
//! base library, scenes) that exercises the full pipeline offline.
//!
//! All timestamps are multiples of 0.125 s so boundary comparisons are
//! binary-exact, and every generated artifact is a pure function of its
//! parameters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::annotate::{AlignedInterval, AnnotatedSlice, Keyframe, VideoManifest, VideoRecord};
use crate::geometry::{CameraModel, Pose6D, Rotation, TrajectorySE3, Vec3};
use crate::modelgw::{FixtureBackend, ImageRef, Role};
use crate::skillparse::parse_signature;
use crate::taxonomy::RepoStats;

/// Sample spacing used by every generated trajectory (exactly 1/8 s).
pub const SAMPLE_DT: f64 = 0.125;

/// Camera used by all synthetic data: 1.5 m above the origin, looking
/// straight down, 320x240.
pub fn down_camera() -> CameraModel {
    CameraModel {
        fx: 200.0,
        fy: 200.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
        extrinsic: [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 1.5],
            [0.0, 0.0, 0.0, 1.0],
        ],
    }
}

fn trajectory_from_positions(
    positions: &[Vec3],
    orientation: impl Fn(usize) -> Rotation,
) -> TrajectorySE3 {
    let poses: Vec<Pose6D> = positions
        .iter()
        .enumerate()
        .map(|(j, &p)| Pose6D {
            position: p,
            orientation: orientation(j),
        })
        .collect();
    let ts: Vec<f64> = (0..positions.len()).map(|j| j as f64 * SAMPLE_DT).collect();
    TrajectorySE3::new(poses, ts).expect("generated trajectory is valid")
}

// ---------------------------------------------------------------------------
// 50-slice corpus
// ---------------------------------------------------------------------------

/// The bundled synthetic corpus: slices in canonical insertion order plus
/// the planned node counts and quality flags.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub slices: Vec<AnnotatedSlice>,
    pub expected_stats: RepoStats,
    /// The ten distinct description strings (canonical signatures).
    pub descriptions: Vec<String>,
    pub expected_out_of_view: Vec<String>,
    pub expected_inactive: Vec<String>,
}

/// Description table: (canonical signature, lemma). Two lemmas share the
/// wipe class and two share the shake class, giving 5 classes, 7 verb
/// instances, 10 descriptions.
const CORPUS_DESCRIPTIONS: [&str; 10] = [
    "wipe(target=desk, tool=sponge)",
    "wipe(target=window, tool=cloth)",
    "sweep(target=floor, tool=broom)",
    "pick(object=red_block)",
    "pick(object=mug)",
    "place(object=mug, target=shelf)",
    "stir(container=bowl, tool=spoon)",
    "shake(object=bottle)",
    "rotate(target=valve, angle=quarter)",
    "rotate(target=knob, angle=half)",
];

pub const CORPUS_SLICES_PER_DESCRIPTION: usize = 5;

fn corpus_positions(d: usize, i: usize) -> Vec<Vec3> {
    let n = 12 + (d * 5 + i) % 9;
    let x0 = -0.45 + 0.09 * d as f64;
    let y0 = -0.30 + 0.06 * i as f64;
    let z = 0.05 + 0.02 * (d % 3) as f64;
    let heading = 0.5 * d as f64 + 0.3 * i as f64;
    let step = 0.012 + 0.002 * (i % 3) as f64;
    let mut positions: Vec<Vec3> = (0..n)
        .map(|j| {
            let a = heading + 0.05 * j as f64;
            Vec3::new(
                x0 + j as f64 * step * a.cos(),
                y0 + j as f64 * step * a.sin(),
                z,
            )
        })
        .collect();

    // Planted quality defects. The retrieval filter must flag exactly these.
    match (d, i) {
        // One waypoint far outside the image.
        (0, 4) => positions[n / 2] = Vec3::new(-5.0, 0.0, z),
        // One waypoint behind the camera (above its optical center).
        (6, 2) => positions[n / 2] = Vec3::new(0.0, 0.0, 2.0),
        // Long stationary runs: copies of one point for > half the duration.
        (3, 3) | (8, 4) => {
            let hold = positions[2];
            let end = (2 + n * 3 / 5).min(n - 2);
            for p in positions.iter_mut().take(end + 1).skip(2) {
                *p = hold;
            }
        }
        _ => {}
    }
    positions
}

fn corpus_frame_handle(d: usize, i: usize) -> String {
    // Two pairs share a frame handle so their scene embeddings tie exactly.
    match (d, i) {
        (0, 0) | (0, 1) => "scenes/shared_00.png".into(),
        (4, 1) | (4, 2) => "scenes/shared_04.png".into(),
        _ => format!("scenes/{d:02}_{i}.png"),
    }
}

/// Builds the 50-slice corpus (10 descriptions x 5 slices, 5 classes).
pub fn corpus_50() -> SyntheticCorpus {
    let camera = down_camera();
    let mut slices = Vec::with_capacity(50);
    let mut out_of_view = Vec::new();
    let mut inactive = Vec::new();
    for (d, canon) in CORPUS_DESCRIPTIONS.iter().enumerate() {
        let signature = parse_signature(canon).expect("corpus signature parses");
        for i in 0..CORPUS_SLICES_PER_DESCRIPTION {
            let positions = corpus_positions(d, i);
            let trajectory = trajectory_from_positions(&positions, |j| {
                Rotation::about_z(0.2 * d as f64 + 0.15 * j as f64)
                    .mul(&Rotation::about_y(0.1 * (j as f64).sin()))
            });
            let end_t = trajectory.end_time();
            let slice_id = format!("syn_{d:02}_{i}/0-3/{}", signature.lemma());
            match (d, i) {
                (0, 4) | (6, 2) => out_of_view.push(slice_id.clone()),
                (3, 3) | (8, 4) => inactive.push(slice_id.clone()),
                _ => {}
            }
            slices.push(AnnotatedSlice {
                slice_id,
                video_id: format!("syn_{d:02}_{i}"),
                signature: signature.clone(),
                description: (*canon).to_string(),
                interval: AlignedInterval {
                    start_idx: 0,
                    end_idx: 3,
                    start_t: 0.0,
                    end_t,
                },
                trajectory,
                camera: camera.clone(),
                initial_frame: ImageRef::new(corpus_frame_handle(d, i)),
            });
        }
    }
    SyntheticCorpus {
        slices,
        expected_stats: RepoStats {
            class_count: 5,
            verb_instance_count: 7,
            description_count: 10,
            slice_count: 50,
        },
        descriptions: CORPUS_DESCRIPTIONS.iter().map(|s| s.to_string()).collect(),
        expected_out_of_view: out_of_view,
        expected_inactive: inactive,
    }
}

// ---------------------------------------------------------------------------
// Demo workspace (video manifests + fixtures + scenes)
// ---------------------------------------------------------------------------

struct DemoVideoSpec {
    video_id: &'static str,
    /// Keyframe timestamps (multiples of SAMPLE_DT).
    keyframe_times: &'static [f64],
    /// Consolidated procedure steps.
    steps: &'static [&'static str],
    /// Descriptor response lines.
    descriptor: &'static str,
    /// Aligner interval per step index.
    intervals: &'static [&'static str],
    /// Position curve id.
    curve: usize,
}

const DEMO_VIDEOS: [DemoVideoSpec; 5] = [
    DemoVideoSpec {
        video_id: "vid_desk_a",
        keyframe_times: &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        steps: &[
            "pick up the sponge",
            "wipe the desk",
            "place the sponge on the tray",
        ],
        descriptor: "1. pick(object=sponge) :: pick(object=sponge)\n\
                     2. wipe(target=desk, tool=sponge) :: wipe(target=desk, tool=sponge)\n\
                     3. place(object=sponge, target=tray) :: place(object=sponge, target=tray)",
        intervals: &["000-002", "002-005", "005-008"],
        curve: 0,
    },
    DemoVideoSpec {
        video_id: "vid_desk_b",
        keyframe_times: &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        steps: &["pick up the sponge", "wipe the desk again"],
        descriptor: "1. pick(object=sponge) :: pick(object=sponge)\n\
                     2. wipe(target=desk, tool=sponge) :: wipe(target=desk, tool=sponge)",
        intervals: &["000-002", "002-006"],
        curve: 1,
    },
    DemoVideoSpec {
        video_id: "vid_drawer",
        keyframe_times: &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        steps: &["push the drawer shut", "press the button"],
        descriptor: "1. close_drawer(target=drawer) :: close_drawer(target=drawer)\n\
                     2. press(target=button) :: press(target=button)",
        // The second interval covers a single keyframe: one trajectory
        // sample, dropped as too sparse.
        intervals: &["001-005", "006-006"],
        curve: 2,
    },
    DemoVideoSpec {
        video_id: "vid_pour",
        keyframe_times: &[0.0, 1.0, 2.0, 3.0, 4.0, 4.125, 5.0],
        steps: &[
            "pour water from the cup into the plant",
            "shake the cup dry",
        ],
        descriptor: "1. pour(source=cup, target=plant) :: pour(source=cup, target=plant)\n\
                     2. shake(object=cup) :: shake(object=cup)",
        // 0.125 s between keyframes 4 and 5: two samples, dropped as short.
        intervals: &["000-004", "004-005"],
        curve: 3,
    },
    DemoVideoSpec {
        video_id: "vid_stack",
        keyframe_times: &[0.0, 1.0, 2.0, 3.0, 3.125, 4.0, 5.0],
        steps: &["stack the block on the tower", "press the tower top"],
        descriptor: "1. stack(object=block, target=tower) :: stack(object=block, target=tower)\n\
                     2. press(target=tower) :: press(target=tower)",
        intervals: &["000-003", "003-004"],
        curve: 4,
    },
];

fn demo_position(curve: usize, t: f64) -> Vec3 {
    match curve {
        0 => Vec3::new(-0.3 + 0.07 * t, 0.25 * (0.5 * t).sin(), 0.06),
        1 => Vec3::new(0.3 - 0.06 * t, -0.2 + 0.05 * t, 0.05),
        2 => Vec3::new(-0.1 + 0.05 * t, 0.1, 0.08 + 0.01 * (0.9 * t).sin()),
        3 => Vec3::new(
            0.1 * (0.8 * t).cos() - 0.2,
            0.1 * (0.8 * t).sin() + 0.1,
            0.07,
        ),
        _ => Vec3::new(
            -0.05 + 0.055 * t,
            -0.15 + 0.04 * t,
            0.05 + 0.02 * (1.1 * t).sin(),
        ),
    }
}

fn demo_video(spec: &DemoVideoSpec) -> VideoRecord {
    let end = *spec.keyframe_times.last().unwrap();
    let n = (end / SAMPLE_DT).round() as usize + 1;
    let positions: Vec<Vec3> = (0..n)
        .map(|j| demo_position(spec.curve, j as f64 * SAMPLE_DT))
        .collect();
    let trajectory = trajectory_from_positions(&positions, |j| {
        let t = j as f64 * SAMPLE_DT;
        Rotation::about_z(0.15 * t).mul(&Rotation::about_x(0.1 * (0.7 * t).sin()))
    });
    VideoRecord {
        video_id: spec.video_id.to_string(),
        keyframes: spec
            .keyframe_times
            .iter()
            .enumerate()
            .map(|(i, &t)| Keyframe {
                image: ImageRef::new(format!("frames/{}/{i:03}.png", spec.video_id)),
                t,
            })
            .collect(),
        trajectory,
        camera: down_camera(),
    }
}

/// All fixture entries needed to run the demo workspace offline: the
/// annotation pipeline for the five videos, the clean-the-desk planning
/// episode, a covered planning episode, and the close-drawer synthesis.
pub fn demo_fixtures() -> BTreeMap<String, String> {
    let mut fixtures = BTreeMap::new();
    let mut put = |role: Role, key: &str, value: String| {
        fixtures.insert(FixtureBackend::fixture_key(role, key), value);
    };

    for spec in &DEMO_VIDEOS {
        let canonical = spec
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let reworded = spec
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}) the robot must {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        put(
            Role::Extractor,
            &format!("{}/extract/0", spec.video_id),
            canonical.clone(),
        );
        put(
            Role::Extractor,
            &format!("{}/extract/1", spec.video_id),
            reworded,
        );
        put(
            Role::Extractor,
            &format!("{}/extract/2", spec.video_id),
            canonical.clone(),
        );
        put(
            Role::Extractor,
            &format!("{}/consolidate", spec.video_id),
            canonical,
        );
        put(
            Role::Descriptor,
            &format!("{}/describe", spec.video_id),
            spec.descriptor.to_string(),
        );
        for (step, interval) in spec.intervals.iter().enumerate() {
            put(
                Role::Aligner,
                &format!("{}/step{step}", spec.video_id),
                (*interval).to_string(),
            );
        }
    }

    put(
        Role::Discriminator,
        "clean the desk",
        "SUFFICIENT: no\nMISSING: wipe(target=*, tool=*) :: surfaces need a wiping motion".into(),
    );
    put(
        Role::Generator,
        "clean the desk",
        "SKILL: wipe(target=*, tool=*) :: Wipe a surface with a handheld tool.".into(),
    );
    put(
        Role::Planner,
        "clean the desk",
        "pick(object=sponge)\nwipe(target=desk, tool=sponge)\nplace(object=sponge, target=tray)"
            .into(),
    );
    put(
        Role::Discriminator,
        "pick up the red block",
        "SUFFICIENT: yes".into(),
    );
    put(
        Role::Planner,
        "pick up the red block",
        "pick(object=red_block)".into(),
    );

    put(
        Role::ConstraintExtractor,
        "vid_drawer/1-5/close_drawer",
        "CONTACT: grasp the drawer front edge\nWAYPOINTS: push inward along the drawer normal until flush"
            .into(),
    );
    put(
        Role::WaypointSelector,
        "close_drawer(target=drawer)",
        "CONTACT: C3\nWAYPOINTS: C3; C4; B4".into(),
    );

    fixtures
}

/// Paths and expectations of a written demo workspace.
#[derive(Debug, Clone)]
pub struct DemoLayout {
    pub manifest_dir: PathBuf,
    pub fixtures_path: PathBuf,
    pub base_library_path: PathBuf,
    pub scene_path: PathBuf,
    pub scene_hole_path: PathBuf,
    pub config_path: PathBuf,
    /// Stats after ingesting all five videos.
    pub expected_stats: RepoStats,
    /// Slice ids dropped by the quality filter, in ingestion order.
    pub expected_dropped: Vec<String>,
    pub plan_instruction: String,
    pub covered_instruction: String,
    pub synth_signature: String,
    /// 1 contact + 3 waypoints.
    pub expected_pose_count: usize,
}

pub const DEMO_BASE_LIBRARY: &str = r#"[
  { "name": "pick", "signature": "pick(object=*)", "doc": "Grasp the named object with the gripper." },
  { "name": "place", "signature": "place(object=*, target=*)", "doc": "Put the held object down on the target." }
]
"#;

/// Writes video manifests, fixtures, base library, scenes, and a CLI config
/// under `dir`.
pub fn write_demo_workspace(dir: &Path) -> std::io::Result<DemoLayout> {
    let manifest_dir = dir.join("videos");
    std::fs::create_dir_all(&manifest_dir)?;
    for spec in &DEMO_VIDEOS {
        let manifest = VideoManifest::from_video(&demo_video(spec));
        let mut json = serde_json::to_string_pretty(&manifest).expect("serializable");
        json.push('\n');
        std::fs::write(manifest_dir.join(format!("{}.json", spec.video_id)), json)?;
    }

    let fixtures_path = dir.join("fixtures.json");
    let mut fixtures_json = serde_json::to_string_pretty(&demo_fixtures()).expect("serializable");
    fixtures_json.push('\n');
    std::fs::write(&fixtures_path, fixtures_json)?;

    let base_library_path = dir.join("base_library.json");
    std::fs::write(&base_library_path, DEMO_BASE_LIBRARY)?;

    let camera = down_camera();
    let scene_camera = serde_json::json!({
        "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        "width": camera.width, "height": camera.height,
        "extrinsic": camera.extrinsic.iter().flatten().copied().collect::<Vec<f64>>(),
    });
    let boxes = serde_json::json!([
        { "name": "drawer", "x": 120.0, "y": 90.0, "width": 80.0, "height": 60.0 }
    ]);

    let scene_path = dir.join("scene.json");
    let scene = serde_json::json!({
        "image": "demo_scene.png",
        "camera": scene_camera,
        "depth": { "kind": "constant", "value": 1.2 },
        "object_boxes": boxes,
    });
    let mut scene_text = serde_json::to_string_pretty(&scene).expect("serializable");
    scene_text.push('\n');
    std::fs::write(&scene_path, scene_text)?;

    // Same scene with a depth hole exactly at the fixture's contact pixel
    // (grid cell C3 of a 5x5 grid over 320x240 is pixel (160, 120)).
    let depth_rel = "depth_hole.f32";
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut depth = vec![1.2f32; w * h];
    depth[120 * w + 160] = 0.0;
    let mut bytes = Vec::with_capacity(depth.len() * 4);
    for v in &depth {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(depth_rel), bytes)?;
    let scene_hole_path = dir.join("scene_hole.json");
    let scene_hole = serde_json::json!({
        "image": "demo_scene.png",
        "camera": scene_camera,
        "depth": { "kind": "file", "path": depth_rel, "width": camera.width, "height": camera.height },
        "object_boxes": boxes,
    });
    let mut scene_hole_text = serde_json::to_string_pretty(&scene_hole).expect("serializable");
    scene_hole_text.push('\n');
    std::fs::write(&scene_hole_path, scene_hole_text)?;

    let config_path = dir.join("config.json");
    let config = serde_json::json!({
        "backend": { "kind": "fixture", "fixtures": "fixtures.json" },
        "embedding_dim": 512,
        "theta": 0.8,
        "eps_motion": 0.005,
        "inactive_frac": 0.5,
        "grid_rows": 5,
        "grid_cols": 5
    });
    let mut config_text = serde_json::to_string_pretty(&config).expect("serializable");
    config_text.push('\n');
    std::fs::write(&config_path, config_text)?;

    Ok(DemoLayout {
        manifest_dir,
        fixtures_path,
        base_library_path,
        scene_path,
        scene_hole_path,
        config_path,
        expected_stats: RepoStats {
            class_count: 6,
            verb_instance_count: 6,
            description_count: 6,
            slice_count: 8,
        },
        expected_dropped: vec![
            "vid_drawer/6-6/press".into(),
            "vid_pour/4-5/shake".into(),
            "vid_stack/3-4/press".into(),
        ],
        plan_instruction: "clean the desk".into(),
        covered_instruction: "pick up the red block".into(),
        synth_signature: "close_drawer(target=drawer)".into(),
        expected_pose_count: 4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgw::Embedder;
    use crate::retrieve::{trajectory_inactive, trajectory_out_of_view};
    use crate::skillparse::VerbLexicon;
    use crate::taxonomy::Repository;

    #[test]
    fn corpus_shape_and_flags() {
        let corpus = corpus_50();
        assert_eq!(corpus.slices.len(), 50);
        assert_eq!(corpus.descriptions.len(), 10);
        let mut ids = std::collections::BTreeSet::new();
        for slice in &corpus.slices {
            assert!(
                ids.insert(slice.slice_id.clone()),
                "duplicate {}",
                slice.slice_id
            );
        }
        // Quality flags recomputed from the trajectories match the plan.
        for slice in &corpus.slices {
            let oov = trajectory_out_of_view(slice);
            let inactive = trajectory_inactive(slice, 0.005, 0.5);
            assert_eq!(
                oov,
                corpus.expected_out_of_view.contains(&slice.slice_id),
                "out-of-view mismatch for {}",
                slice.slice_id
            );
            assert_eq!(
                inactive,
                corpus.expected_inactive.contains(&slice.slice_id),
                "inactive mismatch for {}",
                slice.slice_id
            );
        }
        assert_eq!(corpus.expected_out_of_view.len(), 2);
        assert_eq!(corpus.expected_inactive.len(), 2);
    }

    #[test]
    fn corpus_ingests_to_planned_counts() {
        let corpus = corpus_50();
        let embedder = FixtureBackend::new(64);
        let mut repo = Repository::new(embedder.dim());
        for slice in corpus.slices.iter().cloned() {
            repo.insert_slice(slice, VerbLexicon::bundled(), &embedder, 0.8)
                .unwrap();
        }
        assert_eq!(repo.stats(), corpus.expected_stats);
        repo.tree.validate().unwrap();
    }

    #[test]
    fn demo_workspace_writes_parseable_files() {
        let dir = tempfile::tempdir().unwrap();
        let layout = write_demo_workspace(dir.path()).unwrap();
        assert_eq!(layout.expected_stats.slice_count, 8);
        // Manifests parse back into valid videos.
        for entry in std::fs::read_dir(&layout.manifest_dir).unwrap() {
            let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
            VideoManifest::from_json_str(&text)
                .unwrap()
                .into_video()
                .unwrap();
        }
        let fixtures = FixtureBackend::from_path(&layout.fixtures_path, 512).unwrap();
        assert!(fixtures.len() > 20);
        crate::synth::load_scene(&layout.scene_path).unwrap();
        let hole = crate::synth::load_scene(&layout.scene_hole_path).unwrap();
        assert_eq!(hole.depth.sample(160.0, 120.0), None);
    }

    #[test]
    fn demo_videos_have_clean_kept_slices() {
        // The slices that survive filtering must themselves be active and in
        // view, otherwise retrieval after ingest would find nothing.
        let corpus = corpus_50();
        for slice in corpus
            .slices
            .iter()
            .filter(|s| !corpus.expected_out_of_view.contains(&s.slice_id))
            .filter(|s| !corpus.expected_inactive.contains(&s.slice_id))
        {
            assert!(!trajectory_out_of_view(slice));
            assert!(!trajectory_inactive(slice, 0.005, 0.5));
        }
    }
}
