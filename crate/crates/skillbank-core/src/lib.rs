//! Skill repository engine: annotate demonstration videos into skill
//! slices, organize them in a four-layer verb taxonomy, retrieve examples
//! for requested skills, and synthesize executable 6-DoF pose sequences
//! from the retrieved references.
//!
//! All vision-language-model and embedding calls go through the
//! [`modelgw`] seam, so every pipeline runs deterministically against the
//! fixture backend and switches to a live HTTP backend via configuration.

pub mod annotate;
pub mod geometry;
pub mod modelgw;
pub mod plan;
pub mod retrieve;
pub mod skillparse;
pub mod synth;
pub mod synthetic;
pub mod taxonomy;

pub use annotate::{AnnotatedSlice, Annotator, VideoManifest, VideoRecord};
pub use geometry::{CameraModel, Pose6D, Rotation, TrajectorySE3, Vec3};
pub use modelgw::{
    Embedder, EmbeddingVector, FixtureBackend, HttpBackend, ImageRef, ModelGateway, PromptSet,
};
pub use plan::{Instruction, PlanningPipeline, PolicyPlan, SkillLibrary};
pub use retrieve::{retrieve, Candidate, RetrievalParams, RetrievalQuery};
pub use skillparse::{parse_signature, SkillSignature, VerbLexicon};
pub use synth::{load_scene, PoseSequence, SceneSpec, Synthesizer};
pub use taxonomy::{load_repo, save_repo, RepoStats, Repository, SkillTree};
