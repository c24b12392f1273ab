//! The five subcommands: ingest, query, synth, plan, stats.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use skillbank_core::annotate::{Annotator, VideoManifest};
use skillbank_core::modelgw::ImageRef;
use skillbank_core::plan::{Instruction, PlanningPipeline, SkillKind, SkillLibrary};
use skillbank_core::retrieve::{retrieve, Candidate, RetrievalQuery};
use skillbank_core::skillparse::{parse_signature, SkillSignature, VerbLexicon};
use skillbank_core::synth::{load_scene, output_to_json, Synthesizer};
use skillbank_core::taxonomy::{load_repo, save_repo, NodePayload, RepoStats, Repository};

use crate::config::Settings;
use crate::errors::CliError;

/// Base skills assumed when `ingest` is not given a library file.
const BUILTIN_BASE_LIBRARY: &str = r#"[
  { "name": "pick", "signature": "pick(object=*)", "doc": "Grasp the named object with the gripper." },
  { "name": "place", "signature": "place(object=*, target=*)", "doc": "Put the held object down on the target." }
]"#;

fn parse_signature_arg(text: &str) -> Result<SkillSignature, CliError> {
    parse_signature(text).map_err(|e| CliError::usage(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable")
    );
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DropEntry {
    slice_id: String,
    reason: String,
}

#[derive(Serialize)]
struct VideoReport {
    manifest: String,
    video_id: Option<String>,
    slices: usize,
    dropped: Vec<DropEntry>,
    error: Option<String>,
}

#[derive(Serialize)]
struct IngestReport {
    videos: Vec<VideoReport>,
    stats: RepoStats,
    repo: String,
}

pub fn cmd_ingest(
    settings: &Settings,
    manifests: &Path,
    out: Option<&Path>,
    library: Option<&Path>,
    jobs: usize,
    json: bool,
) -> Result<(), CliError> {
    let out = match out {
        Some(path) => path.to_path_buf(),
        None => settings.repo_path()?.to_path_buf(),
    };
    let backend = settings.backend()?;
    let base_library = match library {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("library {}: {e}", path.display())))?;
            SkillLibrary::from_json_str(&text).map_err(CliError::from)?
        }
        None => SkillLibrary::from_json_str(BUILTIN_BASE_LIBRARY).expect("builtin parses"),
    };

    let mut paths: Vec<PathBuf> = std::fs::read_dir(manifests)
        .map_err(|e| CliError::usage(format!("{}: {e}", manifests.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!(
            "no videos found in {}",
            manifests.display()
        )));
    }

    let annotator = Annotator::new(backend.gateway(), &settings.prompts, &base_library);
    let annotate_one = |path: &PathBuf| -> (String, Result<_, CliError>) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let result = (|| {
            let text = std::fs::read_to_string(path).map_err(CliError::from)?;
            let video = VideoManifest::from_json_str(&text)
                .map_err(CliError::from)?
                .into_video()
                .map_err(CliError::from)?;
            let annotation = annotator.annotate_video(&video).map_err(CliError::from)?;
            Ok((video.video_id.clone(), annotation))
        })();
        (name, result)
    };

    // Annotation fans out; insertion stays sequential in manifest order so
    // the resulting tree is identical for any job count.
    let annotated: Vec<(String, Result<_, CliError>)> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::data(e.to_string()))?;
        pool.install(|| paths.par_iter().map(annotate_one).collect())
    } else {
        paths.iter().map(annotate_one).collect()
    };

    let lexicon = VerbLexicon::bundled();
    let mut repo = Repository::new(settings.embedding_dim);
    let mut reports = Vec::new();
    let mut failures = 0usize;
    for (manifest, outcome) in annotated {
        match outcome {
            Ok((video_id, annotation)) => {
                let dropped: Vec<DropEntry> = annotation
                    .dropped
                    .iter()
                    .map(|d| DropEntry {
                        slice_id: d.slice_id.clone(),
                        reason: d.reason.to_string(),
                    })
                    .collect();
                let mut inserted = 0usize;
                let mut error = None;
                for slice in annotation.slices {
                    match repo.insert_slice(
                        slice,
                        lexicon,
                        backend.embedder(),
                        settings.retrieval.theta,
                    ) {
                        Ok(_) => inserted += 1,
                        Err(e) => {
                            error = Some(e.to_string());
                            break;
                        }
                    }
                }
                if error.is_some() {
                    failures += 1;
                }
                reports.push(VideoReport {
                    manifest,
                    video_id: Some(video_id),
                    slices: inserted,
                    dropped,
                    error,
                });
            }
            Err(e) => {
                failures += 1;
                reports.push(VideoReport {
                    manifest,
                    video_id: None,
                    slices: 0,
                    dropped: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if failures == reports.len() {
        return Err(CliError::data(format!(
            "all {failures} videos failed; nothing ingested"
        )));
    }
    save_repo(&repo, &out)?;

    let report = IngestReport {
        videos: reports,
        stats: repo.stats(),
        repo: out.display().to_string(),
    };
    if json {
        print_json(&report);
    } else {
        for video in &report.videos {
            match &video.error {
                Some(error) => println!("{}: FAILED: {error}", video.manifest),
                None => println!(
                    "{}: {} slice(s) ingested, {} dropped",
                    video.manifest,
                    video.slices,
                    video.dropped.len()
                ),
            }
            for drop in &video.dropped {
                println!("  dropped {}: {}", drop.slice_id, drop.reason);
            }
        }
        let s = &report.stats;
        println!(
            "repository {}: {} classes, {} verbs, {} descriptions, {} slices",
            report.repo, s.class_count, s.verb_instance_count, s.description_count, s.slice_count
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CandidateEntry {
    slice_id: String,
    score: f64,
    out_of_view: bool,
    inactive: bool,
}

impl From<&Candidate> for CandidateEntry {
    fn from(c: &Candidate) -> Self {
        Self {
            slice_id: c.slice_id.clone(),
            score: c.score,
            out_of_view: c.out_of_view,
            inactive: c.inactive,
        }
    }
}

#[derive(Serialize)]
struct QueryReport {
    description_node: String,
    description_score: f64,
    hits: Vec<CandidateEntry>,
    removed: Vec<CandidateEntry>,
}

fn flag_text(c: &Candidate) -> &'static str {
    match (c.out_of_view, c.inactive) {
        (true, true) => "out_of_view,inactive",
        (true, false) => "out_of_view",
        (false, true) => "inactive",
        (false, false) => "-",
    }
}

pub fn cmd_query(
    settings: &Settings,
    signature: &str,
    scene: &str,
    k: usize,
    json: bool,
) -> Result<(), CliError> {
    let signature = parse_signature_arg(signature)?;
    let repo = load_repo(settings.repo_path()?)?;
    let backend = settings.backend()?;
    let scene_embedding = backend.embedder().embed_image(&ImageRef::new(scene))?;
    let query = RetrievalQuery {
        signature,
        scene_embedding,
    };
    let result = retrieve(
        &repo,
        &query,
        VerbLexicon::bundled(),
        backend.embedder(),
        &settings.retrieval,
        k,
    )?;
    let report = QueryReport {
        description_node: result.description_node.clone(),
        description_score: result.description_score,
        hits: result.hits.iter().map(CandidateEntry::from).collect(),
        removed: result.removed.iter().map(CandidateEntry::from).collect(),
    };
    if json {
        print_json(&report);
    } else {
        println!(
            "matched {} (similarity {:.4})",
            report.description_node, report.description_score
        );
        println!("{:<40} {:>10} flags", "slice", "score");
        for c in &result.hits {
            println!("{:<40} {:>10.4} {}", c.slice_id, c.score, flag_text(c));
        }
        for c in &result.removed {
            println!(
                "{:<40} {:>10.4} {} (removed)",
                c.slice_id,
                c.score,
                flag_text(c)
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(
    settings: &Settings,
    signature: &str,
    scene_path: &Path,
    out: &Path,
    artifacts: Option<&Path>,
    json: bool,
) -> Result<(), CliError> {
    let signature = parse_signature_arg(signature)?;
    let repo = load_repo(settings.repo_path()?)?;
    let scene = load_scene(scene_path)?;
    let backend = settings.backend()?;
    let mut synthesizer =
        Synthesizer::new(backend.gateway(), backend.embedder(), &settings.prompts);
    synthesizer.retrieval_params = settings.retrieval;
    synthesizer.grid_rows = settings.grid_rows;
    synthesizer.grid_cols = settings.grid_cols;
    synthesizer.artifacts_dir = artifacts.map(Path::to_path_buf);

    let output = synthesizer.synthesize(&signature, &scene, &repo, VerbLexicon::bundled())?;
    let text = output_to_json(&output);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, &text)?;

    if json {
        print_json(&serde_json::json!({
            "out": out.display().to_string(),
            "poses": output.sequence.poses.len(),
            "source_slice": output.sequence.source_slice_id,
        }));
    } else {
        println!(
            "wrote {} poses to {} (reference slice {})",
            output.sequence.poses.len(),
            out.display(),
            output.sequence.source_slice_id
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PlanCallEntry {
    signature: String,
    kind: SkillKind,
}

#[derive(Serialize)]
struct PlanSidecar {
    instruction: String,
    sufficient: bool,
    extended: Vec<String>,
    calls: Vec<PlanCallEntry>,
}

pub fn cmd_plan(
    settings: &Settings,
    instruction: &str,
    library_path: &Path,
    scene: Option<&str>,
    out_dir: &Path,
    json: bool,
) -> Result<(), CliError> {
    if instruction.trim().is_empty() {
        return Err(CliError::usage("instruction must be non-empty"));
    }
    let text = std::fs::read_to_string(library_path)
        .map_err(|e| CliError::usage(format!("library {}: {e}", library_path.display())))?;
    let base_library = SkillLibrary::from_json_str(&text)?;
    let backend = settings.backend()?;
    let pipeline = PlanningPipeline::new(backend.gateway(), &settings.prompts);
    let mut request = Instruction::new(instruction);
    if let Some(scene) = scene {
        request = request.with_scene(ImageRef::new(scene));
    }
    let episode = pipeline.run_episode(&request, &base_library)?;

    std::fs::create_dir_all(out_dir)?;
    let dsl_path = out_dir.join("plan.txt");
    std::fs::write(&dsl_path, episode.plan.to_dsl())?;
    let sidecar = PlanSidecar {
        instruction: instruction.to_string(),
        sufficient: episode.verdict.sufficient,
        extended: episode.library.extended_names(),
        calls: episode
            .plan
            .calls
            .iter()
            .map(|call| PlanCallEntry {
                signature: call.signature.canonical(),
                kind: call.resolved_kind,
            })
            .collect(),
    };
    let mut sidecar_text = serde_json::to_string_pretty(&sidecar).expect("serializable");
    sidecar_text.push('\n');
    std::fs::write(out_dir.join("plan.json"), sidecar_text)?;

    if json {
        print_json(&sidecar);
    } else {
        if sidecar.extended.is_empty() {
            println!("library sufficient; no skills extended");
        } else {
            println!("extended skills: {}", sidecar.extended.join(", "));
        }
        println!(
            "wrote {} call(s) to {}",
            sidecar.calls.len(),
            dsl_path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClassEntry {
    class_id: String,
    provisional: bool,
    slices: usize,
}

#[derive(Serialize)]
struct StatsReport {
    #[serde(flatten)]
    stats: RepoStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<ClassEntry>>,
}

fn class_histogram(repo: &Repository) -> Vec<ClassEntry> {
    let mut entries = Vec::new();
    for class in repo.tree.nodes().filter(|n| n.level == 1) {
        let NodePayload::VerbClass {
            class_id,
            provisional,
        } = &class.payload
        else {
            continue;
        };
        let mut slices = 0usize;
        for verb in repo.tree.children(&class.id) {
            for desc in repo.tree.children(&verb.id) {
                slices += repo.tree.children(&desc.id).count();
            }
        }
        entries.push(ClassEntry {
            class_id: class_id.clone(),
            provisional: *provisional,
            slices,
        });
    }
    entries
}

pub fn cmd_stats(settings: &Settings, verbose: bool, json: bool) -> Result<(), CliError> {
    let repo = load_repo(settings.repo_path()?)?;
    let report = StatsReport {
        stats: repo.stats(),
        classes: verbose.then(|| class_histogram(&repo)),
    };
    if json {
        print_json(&report);
    } else {
        let s = &report.stats;
        println!("classes:       {}", s.class_count);
        println!("verbs:         {}", s.verb_instance_count);
        println!("descriptions:  {}", s.description_count);
        println!("slices:        {}", s.slice_count);
        if let Some(classes) = &report.classes {
            println!("per-class slice counts:");
            for entry in classes {
                let marker = if entry.provisional {
                    " (provisional)"
                } else {
                    ""
                };
                println!("  {:<32} {}{marker}", entry.class_id, entry.slices);
            }
        }
    }
    Ok(())
}
