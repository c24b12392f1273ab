//! End-to-end tests running the actual binary against the demo workspace.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use skillbank_core::synthetic::{write_demo_workspace, DemoLayout};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_skillbank"));
    cmd.env_remove("SKILLBANK_REPO");
    cmd.env_remove("MODELGW_URL");
    cmd.env_remove("MODELGW_TOKEN");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawn skillbank");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output()
        .expect("spawn skillbank")
        .status
        .code()
        .unwrap_or(-1)
}

fn dir_snapshot(path: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(path, path, &mut out);
    out
}

struct Workspace {
    dir: tempfile::TempDir,
    layout: DemoLayout,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let layout = write_demo_workspace(dir.path()).unwrap();
        Self { dir, layout }
    }

    fn path(&self, rel: &str) -> String {
        self.dir.path().join(rel).to_string_lossy().into_owned()
    }

    fn ingest(&self, repo: &str, jobs: usize) -> Output {
        run_ok(
            bin()
                .arg("--config")
                .arg(&self.layout.config_path)
                .arg("ingest")
                .arg("--manifests")
                .arg(&self.layout.manifest_dir)
                .arg("--out")
                .arg(self.path(repo))
                .arg("--library")
                .arg(&self.layout.base_library_path)
                .arg("--jobs")
                .arg(jobs.to_string()),
        )
    }
}

#[test]
fn ingest_reports_stats_and_drops() {
    let ws = Workspace::new();
    let output = ws.ingest("repo", 1);
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("8 slices"), "unexpected report:\n{text}");
    for dropped in &ws.layout.expected_dropped {
        assert!(
            text.contains(dropped.as_str()),
            "missing drop {dropped}:\n{text}"
        );
    }

    // stats --json reports the planned counts.
    let stats = run_ok(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("--repo")
            .arg(ws.path("repo"))
            .arg("--json")
            .arg("stats")
            .arg("--verbose"),
    );
    let parsed: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(parsed["class_count"], 6);
    assert_eq!(parsed["verb_instance_count"], 6);
    assert_eq!(parsed["description_count"], 6);
    assert_eq!(parsed["slice_count"], 8);
    let classes = parsed["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 6);
    let histogram_total: u64 = classes.iter().map(|c| c["slices"].as_u64().unwrap()).sum();
    assert_eq!(histogram_total, 8);
}

#[test]
fn ingest_is_deterministic_and_job_count_invariant() {
    let ws = Workspace::new();
    ws.ingest("repo_a", 1);
    ws.ingest("repo_b", 1);
    ws.ingest("repo_jobs", 4);
    let a = dir_snapshot(&ws.dir.path().join("repo_a"));
    assert_eq!(a, dir_snapshot(&ws.dir.path().join("repo_b")));
    assert_eq!(a, dir_snapshot(&ws.dir.path().join("repo_jobs")));
}

#[test]
fn query_returns_ranked_table_and_json() {
    let ws = Workspace::new();
    ws.ingest("repo", 1);
    let output = run_ok(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("--repo")
            .arg(ws.path("repo"))
            .arg("--json")
            .arg("query")
            .arg("wipe(target=desk, tool=sponge)")
            .arg("--scene")
            .arg("demo_scene.png")
            .arg("-k")
            .arg("3"),
    );
    let parsed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let hits = parsed["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 2, "two wipe slices in the demo repo");
    let scores: Vec<f64> = hits.iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(scores[0] >= scores[1], "hits must be sorted by score");
    for hit in hits {
        assert_eq!(hit["out_of_view"], false);
        assert_eq!(hit["inactive"], false);
    }

    // Unknown lemma: exit code 2 with a level diagnostic.
    let output = bin()
        .arg("--config")
        .arg(&ws.layout.config_path)
        .arg("--repo")
        .arg(ws.path("repo"))
        .arg("query")
        .arg("zorble(target=thing)")
        .arg("--scene")
        .arg("demo_scene.png")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("level 1"));
}

#[test]
fn plan_writes_dsl_and_sidecar() {
    let ws = Workspace::new();
    let out_dir = ws.path("plans");
    run_ok(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("plan")
            .arg(&ws.layout.plan_instruction)
            .arg("--library")
            .arg(&ws.layout.base_library_path)
            .arg("--out-dir")
            .arg(&out_dir),
    );
    let dsl = std::fs::read_to_string(Path::new(&out_dir).join("plan.txt")).unwrap();
    assert_eq!(
        dsl,
        "pick(object=sponge)\nwipe(target=desk, tool=sponge)\nplace(object=sponge, target=tray)\n"
    );
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(&out_dir).join("plan.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["sufficient"], false);
    assert_eq!(sidecar["extended"][0], "wipe");
    assert_eq!(sidecar["calls"][1]["kind"], "extended");
    assert_eq!(sidecar["calls"][0]["kind"], "base");

    // Covered instruction: no extension, one call.
    let covered_dir = ws.path("plans_covered");
    let output = run_ok(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("plan")
            .arg(&ws.layout.covered_instruction)
            .arg("--library")
            .arg(&ws.layout.base_library_path)
            .arg("--out-dir")
            .arg(&covered_dir),
    );
    assert!(String::from_utf8_lossy(&output.stdout).contains("library sufficient"));
    let dsl = std::fs::read_to_string(Path::new(&covered_dir).join("plan.txt")).unwrap();
    assert_eq!(dsl, "pick(object=red_block)\n");

    // Malformed library file: usage error.
    let bad = ws.path("bad_library.json");
    std::fs::write(&bad, "{not json").unwrap();
    let code = exit_code(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("plan")
            .arg("clean the desk")
            .arg("--library")
            .arg(&bad)
            .arg("--out-dir")
            .arg(ws.path("plans_bad")),
    );
    assert_eq!(code, 1);
}

#[test]
fn synth_writes_pose_file_deterministically() {
    let ws = Workspace::new();
    ws.ingest("repo", 1);
    let out_a = ws.path("poses_a.json");
    let out_b = ws.path("poses_b.json");
    for out in [&out_a, &out_b] {
        run_ok(
            bin()
                .arg("--config")
                .arg(&ws.layout.config_path)
                .arg("--repo")
                .arg(ws.path("repo"))
                .arg("synth")
                .arg(&ws.layout.synth_signature)
                .arg("--scene")
                .arg(&ws.layout.scene_path)
                .arg("--out")
                .arg(out),
        );
    }
    let bytes_a = std::fs::read(&out_a).unwrap();
    assert_eq!(
        bytes_a,
        std::fs::read(&out_b).unwrap(),
        "synth output not deterministic"
    );

    let parsed: serde_json::Value = serde_json::from_slice(&bytes_a).unwrap();
    let poses = parsed["poses"].as_array().unwrap();
    assert_eq!(poses.len(), ws.layout.expected_pose_count);
    assert_eq!(poses[0]["rotation"].as_array().unwrap().len(), 9);
    assert_eq!(
        parsed["provenance"]["slice_id"],
        "vid_drawer/1-5/close_drawer"
    );
    assert!(parsed["provenance"]["constraints"]["contact_constraint"]
        .as_str()
        .unwrap()
        .contains("drawer"));

    // Depth hole at the selected contact pixel: data error, exit 3.
    let code = exit_code(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("--repo")
            .arg(ws.path("repo"))
            .arg("synth")
            .arg(&ws.layout.synth_signature)
            .arg("--scene")
            .arg(&ws.layout.scene_hole_path)
            .arg("--out")
            .arg(ws.path("poses_hole.json")),
    );
    assert_eq!(code, 3);
}

#[test]
fn synth_artifacts_render_prompt_images() {
    let ws = Workspace::new();
    ws.ingest("repo", 1);
    let artifacts = ws.path("artifacts");
    run_ok(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("--repo")
            .arg(ws.path("repo"))
            .arg("synth")
            .arg(&ws.layout.synth_signature)
            .arg("--scene")
            .arg(&ws.layout.scene_path)
            .arg("--out")
            .arg(ws.path("poses.json"))
            .arg("--artifacts")
            .arg(&artifacts),
    );
    let overlay = Path::new(&artifacts).join("reference_overlay.png");
    let annotated = Path::new(&artifacts).join("scene_annotated.png");
    assert!(overlay.is_file() && annotated.is_file());
    let img = image::open(&overlay).unwrap().to_rgba8();
    let green = img.pixels().filter(|p| p.0 == [0, 200, 0, 255]).count();
    assert!(green > 50, "overlay has no waypoint markers");
}

#[test]
fn ingest_survives_one_corrupt_manifest() {
    let ws = Workspace::new();
    std::fs::write(ws.dir.path().join("videos/zz_corrupt.json"), "{broken").unwrap();
    let output = ws.ingest("repo", 1);
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("zz_corrupt.json: FAILED"), "{text}");
    assert!(text.contains("8 slices"), "{text}");
}

#[test]
fn missing_inputs_are_usage_errors() {
    let ws = Workspace::new();
    let empty = ws.path("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let code = exit_code(
        bin()
            .arg("--config")
            .arg(&ws.layout.config_path)
            .arg("ingest")
            .arg("--manifests")
            .arg(&empty)
            .arg("--out")
            .arg(ws.path("repo")),
    );
    assert_eq!(code, 1);

    let code = exit_code(bin().arg("stats"));
    assert_eq!(code, 1, "stats without a repo is a usage error");
}
