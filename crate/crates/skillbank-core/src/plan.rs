//! Skill-aware planning: a sufficiency check over the basic skill library,
//! on-demand generation of extended skill descriptions, and a planner whose
//! output is a flat sequence of parameterized skill calls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelgw::{ImageRef, ModelGateway, ModelRequest, PromptSet, Role};
use crate::skillparse::{
    parse_signature, parse_template, SignatureTemplate, SkillParseError, SkillSignature,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Gateway(#[from] crate::modelgw::GatewayError),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("line {line}: {source}")]
    MalformedSignature {
        line: usize,
        source: SkillParseError,
    },
    #[error("skill name collision: {0:?} already exists in the library")]
    NameCollision(String),
    #[error("call {index}: unknown skill {lemma:?}")]
    UnknownSkill { index: usize, lemma: String },
    #[error("call {index}: role {role:?} is not declared by {lemma:?}")]
    UnknownRole {
        index: usize,
        lemma: String,
        role: String,
    },
    #[error("invalid skill library: {0}")]
    InvalidLibrary(String),
}

/// Whether a library entry is one of the predefined basic skills or was
/// generated on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Base,
    Extended,
}

#[derive(Debug, Clone)]
pub struct SkillEntry {
    pub name: String,
    pub template: SignatureTemplate,
    pub doc: String,
    pub kind: SkillKind,
}

/// The hybrid skill set: base entries plus any extended ones.
#[derive(Debug, Clone, Default)]
pub struct SkillLibrary {
    entries: Vec<SkillEntry>,
}

#[derive(Deserialize, Serialize)]
struct LibraryFileEntry {
    name: String,
    signature: String,
    #[serde(default)]
    doc: String,
}

impl SkillLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads the base-library file: a JSON list of `{name, signature, doc}`.
    pub fn from_json_str(json: &str) -> Result<Self, PlanError> {
        let raw: Vec<LibraryFileEntry> =
            serde_json::from_str(json).map_err(|e| PlanError::InvalidLibrary(e.to_string()))?;
        let mut lib = Self::new();
        for entry in raw {
            let template = parse_template(&entry.signature)
                .map_err(|e| PlanError::InvalidLibrary(e.to_string()))?;
            if entry.name != template.lemma() {
                return Err(PlanError::InvalidLibrary(format!(
                    "entry name {:?} does not match signature lemma {:?}",
                    entry.name,
                    template.lemma()
                )));
            }
            lib.add(entry.name, template, entry.doc, SkillKind::Base)?;
        }
        Ok(lib)
    }

    pub fn add(
        &mut self,
        name: String,
        template: SignatureTemplate,
        doc: String,
        kind: SkillKind,
    ) -> Result<(), PlanError> {
        if self.get(&name).is_some() {
            return Err(PlanError::NameCollision(name));
        }
        self.entries.push(SkillEntry {
            name,
            template,
            doc,
            kind,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[SkillEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&SkillEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains_lemma(&self, lemma: &str) -> bool {
        self.get(lemma).is_some()
    }

    pub fn base_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == SkillKind::Base)
            .count()
    }

    pub fn extended_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.kind == SkillKind::Extended)
            .map(|e| e.name.clone())
            .collect()
    }

    /// One-line-per-skill rendering used inside prompts.
    pub fn api_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("- {} : {}", e.template, e.doc))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A task request: free-form instruction plus an optional scene image that
/// is attached to every planning call.
#[derive(Debug, Clone)]
pub struct Instruction {
    pub text: String,
    pub scene_image: Option<ImageRef>,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        assert!(
            !text.trim().is_empty(),
            "instruction text must be non-empty"
        );
        Self {
            text,
            scene_image: None,
        }
    }

    pub fn with_scene(mut self, image: ImageRef) -> Self {
        self.scene_image = Some(image);
        self
    }
}

/// A skill the discriminator reported as missing.
#[derive(Debug, Clone)]
pub struct MissingSkill {
    pub template: SignatureTemplate,
    pub rationale: String,
}

/// Discriminator output. `sufficient` implies `missing` is empty.
#[derive(Debug, Clone)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    pub missing: Vec<MissingSkill>,
}

/// One call of a validated plan.
#[derive(Debug, Clone)]
pub struct PlanCall {
    pub signature: SkillSignature,
    pub resolved_kind: SkillKind,
}

/// A validated policy plan: an ordered list of parameterized skill calls.
#[derive(Debug, Clone)]
pub struct PolicyPlan {
    pub calls: Vec<PlanCall>,
}

impl PolicyPlan {
    /// Canonical DSL rendering, one call per line.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        for call in &self.calls {
            out.push_str(&call.signature.canonical());
            out.push('\n');
        }
        out
    }
}

/// A parsed but not yet validated plan.
#[derive(Debug, Clone)]
pub struct DraftPlan {
    pub calls: Vec<SkillSignature>,
}

/// Parses plan DSL text: one signature per non-empty line; `#` comments and
/// blank lines are skipped.
pub fn parse_plan(text: &str) -> Result<DraftPlan, PlanError> {
    let mut calls = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sig = parse_signature(line).map_err(|source| PlanError::MalformedSignature {
            line: i + 1,
            source,
        })?;
        calls.push(sig);
    }
    Ok(DraftPlan { calls })
}

/// Validates every call against the library: the lemma must name an entry
/// and every role must be declared by that entry's template.
pub fn validate_plan(draft: DraftPlan, library: &SkillLibrary) -> Result<PolicyPlan, PlanError> {
    let mut calls = Vec::with_capacity(draft.calls.len());
    for (index, signature) in draft.calls.into_iter().enumerate() {
        let entry = library
            .get(signature.lemma())
            .ok_or_else(|| PlanError::UnknownSkill {
                index,
                lemma: signature.lemma().to_string(),
            })?;
        for (role, _) in signature.params() {
            if !entry.template.has_role(role) {
                return Err(PlanError::UnknownRole {
                    index,
                    lemma: signature.lemma().to_string(),
                    role: role.clone(),
                });
            }
        }
        calls.push(PlanCall {
            signature,
            resolved_kind: entry.kind,
        });
    }
    Ok(PolicyPlan { calls })
}

/// Complete result of one planning episode.
#[derive(Debug, Clone)]
pub struct PlanningEpisode {
    pub verdict: SufficiencyVerdict,
    pub library: SkillLibrary,
    pub plan: PolicyPlan,
}

/// Driver for the discriminator / generator / planner stages. Scenario keys
/// are the instruction text, so fixtures address calls per instruction.
pub struct PlanningPipeline<'a> {
    gateway: &'a dyn ModelGateway,
    prompts: &'a PromptSet,
}

impl<'a> PlanningPipeline<'a> {
    pub fn new(gateway: &'a dyn ModelGateway, prompts: &'a PromptSet) -> Self {
        Self { gateway, prompts }
    }

    fn request(&self, role: Role, instruction: &Instruction, text: String) -> ModelRequest {
        let mut req = ModelRequest::new(role, instruction.text.clone()).with_text(text);
        if let Some(image) = &instruction.scene_image {
            req = req.with_image(image.clone());
        }
        req
    }

    /// Asks the discriminator whether `library` suffices for the instruction.
    pub fn assess_sufficiency(
        &self,
        instruction: &Instruction,
        library: &SkillLibrary,
    ) -> Result<SufficiencyVerdict, PlanError> {
        assert!(library.base_count() >= 1, "library must have a base entry");
        let text = self.prompts.render(
            "discriminator",
            &[
                ("instruction", instruction.text.as_str()),
                ("library", &library.api_text()),
            ],
        );
        let resp = self
            .gateway
            .complete(&self.request(Role::Discriminator, instruction, text))?;
        parse_sufficiency(&resp.text)
    }

    /// Asks the generator to define the skills the verdict reported missing
    /// and returns the extended library. The caller must only invoke this on
    /// an insufficient verdict.
    pub fn generate_skills(
        &self,
        instruction: &Instruction,
        library: &SkillLibrary,
        verdict: &SufficiencyVerdict,
    ) -> Result<SkillLibrary, PlanError> {
        assert!(
            !verdict.sufficient,
            "generate_skills requires an insufficient verdict"
        );
        let missing_text = verdict
            .missing
            .iter()
            .map(|m| format!("- {} : {}", m.template, m.rationale))
            .collect::<Vec<_>>()
            .join("\n");
        let text = self.prompts.render(
            "generator",
            &[
                ("instruction", instruction.text.as_str()),
                ("library", &library.api_text()),
                ("missing", &missing_text),
            ],
        );
        let resp = self
            .gateway
            .complete(&self.request(Role::Generator, instruction, text))?;

        let mut extended = library.clone();
        let mut generated = 0usize;
        for (i, line) in resp.text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rest = line.strip_prefix("SKILL:").ok_or_else(|| {
                PlanError::MalformedResponse(format!("generator line {} lacks SKILL:", i + 1))
            })?;
            let (sig_text, doc) = split_double_colon(rest);
            let template =
                parse_template(sig_text).map_err(|source| PlanError::MalformedSignature {
                    line: i + 1,
                    source,
                })?;
            let name = template.lemma().to_string();
            extended.add(name, template, doc, SkillKind::Extended)?;
            generated += 1;
        }
        if generated == 0 {
            return Err(PlanError::MalformedResponse(
                "generator produced no SKILL lines".into(),
            ));
        }
        Ok(extended)
    }

    /// Asks the planner for policy code and validates it against `library`.
    pub fn make_plan(
        &self,
        instruction: &Instruction,
        library: &SkillLibrary,
    ) -> Result<PolicyPlan, PlanError> {
        let text = self.prompts.render(
            "planner",
            &[
                ("instruction", instruction.text.as_str()),
                ("library", &library.api_text()),
            ],
        );
        let resp = self
            .gateway
            .complete(&self.request(Role::Planner, instruction, text))?;
        let draft = parse_plan(&resp.text)?;
        if draft.calls.is_empty() {
            return Err(PlanError::MalformedResponse(
                "planner produced no calls".into(),
            ));
        }
        validate_plan(draft, library)
    }

    /// Runs assess -> (generate when insufficient) -> plan.
    pub fn run_episode(
        &self,
        instruction: &Instruction,
        base_library: &SkillLibrary,
    ) -> Result<PlanningEpisode, PlanError> {
        let verdict = self.assess_sufficiency(instruction, base_library)?;
        let library = if verdict.sufficient {
            base_library.clone()
        } else {
            self.generate_skills(instruction, base_library, &verdict)?
        };
        let plan = self.make_plan(instruction, &library)?;
        Ok(PlanningEpisode {
            verdict,
            library,
            plan,
        })
    }
}

fn split_double_colon(text: &str) -> (&str, String) {
    match text.split_once("::") {
        Some((head, tail)) => (head.trim(), tail.trim().to_string()),
        None => (text.trim(), String::new()),
    }
}

fn parse_sufficiency(text: &str) -> Result<SufficiencyVerdict, PlanError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines
        .next()
        .ok_or_else(|| PlanError::MalformedResponse("empty discriminator response".into()))?;
    let value = first.strip_prefix("SUFFICIENT:").ok_or_else(|| {
        PlanError::MalformedResponse(format!("expected SUFFICIENT: line, got {first:?}"))
    })?;
    let sufficient = match value.trim().to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        other => {
            return Err(PlanError::MalformedResponse(format!(
                "SUFFICIENT must be yes or no, got {other:?}"
            )))
        }
    };
    let mut missing = Vec::new();
    for (i, line) in lines.enumerate() {
        let rest = line.strip_prefix("MISSING:").ok_or_else(|| {
            PlanError::MalformedResponse(format!("unexpected discriminator line {line:?}"))
        })?;
        let (sig_text, rationale) = split_double_colon(rest);
        let template =
            parse_template(sig_text).map_err(|source| PlanError::MalformedSignature {
                line: i + 2,
                source,
            })?;
        missing.push(MissingSkill {
            template,
            rationale,
        });
    }
    // Enforce the verdict invariant in both directions.
    if sufficient && !missing.is_empty() {
        return Err(PlanError::MalformedResponse(
            "sufficient verdict must not list missing skills".into(),
        ));
    }
    if !sufficient && missing.is_empty() {
        return Err(PlanError::MalformedResponse(
            "insufficient verdict must list missing skills".into(),
        ));
    }
    Ok(SufficiencyVerdict {
        sufficient,
        missing,
    })
}
