//! Canonical skill signatures (`lemma(role=value, ...)`), signature
//! templates with wildcard values, and the verb-class lexicon.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

static LEMMA_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[a-z][a-z0-9_]*$").unwrap());
static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9_]+$").unwrap());
static CLASS_ID_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[a-z_]+(-[a-z_]+)*-[0-9.]+$").unwrap());

#[derive(Debug, Error)]
pub enum SkillParseError {
    #[error("malformed signature {input:?}: {reason}")]
    MalformedSignature { input: String, reason: String },
    #[error("lexicon line {line}: {reason}")]
    InvalidLexicon { line: usize, reason: String },
}

fn malformed(input: &str, reason: impl Into<String>) -> SkillParseError {
    SkillParseError::MalformedSignature {
        input: input.to_string(),
        reason: reason.into(),
    }
}

/// A parsed skill call: verb lemma plus ordered role=value parameters.
///
/// Equality ignores the `raw` source text, so a signature equals its
/// re-parsed canonical form.
#[derive(Debug, Clone)]
pub struct SkillSignature {
    lemma: String,
    params: Vec<(String, String)>,
    raw: String,
}

impl PartialEq for SkillSignature {
    fn eq(&self, other: &Self) -> bool {
        self.lemma == other.lemma && self.params == other.params
    }
}

impl Eq for SkillSignature {}

impl SkillSignature {
    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn params(&self) -> &[(String, String)] {
        &self.params
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn param(&self, role: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, v)| v.as_str())
    }

    /// Canonical text form: `lemma(role=value, role=value)`.
    pub fn canonical(&self) -> String {
        format_signature(self)
    }

    /// Template with this signature's roles and wildcard values.
    pub fn to_template(&self) -> SignatureTemplate {
        SignatureTemplate {
            lemma: self.lemma.clone(),
            roles: self.params.iter().map(|(r, _)| r.clone()).collect(),
        }
    }
}

impl fmt::Display for SkillSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn split_call(text: &str) -> Result<(String, Option<&str>), SkillParseError> {
    let trimmed = text.trim();
    let open = trimmed
        .find('(')
        .ok_or_else(|| malformed(text, "missing '('"))?;
    if !trimmed.ends_with(')') {
        return Err(malformed(text, "missing trailing ')'"));
    }
    let lemma = trimmed[..open].trim().to_lowercase();
    if !LEMMA_RE.is_match(&lemma) {
        return Err(malformed(text, format!("invalid lemma {lemma:?}")));
    }
    let inner = &trimmed[open + 1..trimmed.len() - 1];
    if inner.contains('(') || inner.contains(')') {
        return Err(malformed(text, "nested or unbalanced parentheses"));
    }
    let inner = inner.trim();
    Ok((lemma, if inner.is_empty() { None } else { Some(inner) }))
}

fn parse_pairs<'a>(text: &str, inner: &'a str) -> Result<Vec<(&'a str, &'a str)>, SkillParseError> {
    let mut pairs = Vec::new();
    for part in inner.split(',') {
        let mut halves = part.splitn(2, '=');
        let role = halves.next().unwrap_or("").trim();
        let value = halves
            .next()
            .ok_or_else(|| malformed(text, format!("parameter {part:?} is not role=value")))?
            .trim();
        if !TOKEN_RE.is_match(role) {
            return Err(malformed(text, format!("invalid role token {role:?}")));
        }
        if pairs.iter().any(|(r, _)| *r == role) {
            return Err(malformed(text, format!("duplicate role {role:?}")));
        }
        pairs.push((role, value));
    }
    Ok(pairs)
}

/// Parses `lemma(role=value, ...)`. The lemma is lowercased; whitespace
/// around tokens is insignificant; role names must be unique.
pub fn parse_signature(text: &str) -> Result<SkillSignature, SkillParseError> {
    let (lemma, inner) = split_call(text)?;
    let mut params = Vec::new();
    if let Some(inner) = inner {
        for (role, value) in parse_pairs(text, inner)? {
            if !TOKEN_RE.is_match(value) {
                return Err(malformed(text, format!("invalid value token {value:?}")));
            }
            params.push((role.to_string(), value.to_string()));
        }
    }
    Ok(SkillSignature {
        lemma,
        params,
        raw: text.to_string(),
    })
}

/// Canonical text form: lowercase lemma, `role=value` pairs in original
/// order, a single space after each comma.
pub fn format_signature(sig: &SkillSignature) -> String {
    let params = sig
        .params
        .iter()
        .map(|(r, v)| format!("{r}={v}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!("{}({params})", sig.lemma)
}

/// A signature shape: lemma plus role names, values unspecified.
/// Rendered as `lemma(role=*, ...)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureTemplate {
    lemma: String,
    roles: Vec<String>,
}

impl SignatureTemplate {
    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }
}

impl fmt::Display for SignatureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params = self
            .roles
            .iter()
            .map(|r| format!("{r}=*"))
            .collect::<Vec<_>>()
            .join(", ");
        write!(f, "{}({params})", self.lemma)
    }
}

/// Parses a template; values may be `*` or any concrete token and are
/// discarded, only the role names matter.
pub fn parse_template(text: &str) -> Result<SignatureTemplate, SkillParseError> {
    let (lemma, inner) = split_call(text)?;
    let mut roles = Vec::new();
    if let Some(inner) = inner {
        for (role, value) in parse_pairs(text, inner)? {
            if value != "*" && !TOKEN_RE.is_match(value) {
                return Err(malformed(text, format!("invalid value token {value:?}")));
            }
            roles.push(role.to_string());
        }
    }
    Ok(SignatureTemplate { lemma, roles })
}

/// Result of a lexicon lookup: the class id, and whether it came from the
/// lexicon or was synthesized for an unknown lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassLookup {
    pub class_id: String,
    pub provisional: bool,
}

/// Lemma -> verb-class-id table. Lookups never fail: unknown lemmas map to
/// a provisional `<lemma>-unclassified-0.0` class so the taxonomy can grow.
#[derive(Debug, Clone)]
pub struct VerbLexicon {
    entries: BTreeMap<String, String>,
    source_version: String,
}

static BUNDLED_LEXICON: LazyLock<VerbLexicon> = LazyLock::new(|| {
    VerbLexicon::parse(include_str!("../assets/verb_lexicon.tsv"), "bundled-1")
        .expect("bundled lexicon must parse")
});

impl VerbLexicon {
    /// Parses the `lemma<TAB>class-id` format; `#` starts a comment line.
    pub fn parse(text: &str, source_version: &str) -> Result<Self, SkillParseError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let lemma = fields.next().unwrap_or("").trim();
            let class_id = fields.next().unwrap_or("").trim();
            if class_id.is_empty() || fields.next().is_some() {
                return Err(SkillParseError::InvalidLexicon {
                    line: line_no,
                    reason: "expected exactly 'lemma<TAB>class-id'".into(),
                });
            }
            if !LEMMA_RE.is_match(lemma) {
                return Err(SkillParseError::InvalidLexicon {
                    line: line_no,
                    reason: format!("invalid lemma {lemma:?}"),
                });
            }
            if !CLASS_ID_RE.is_match(class_id) {
                return Err(SkillParseError::InvalidLexicon {
                    line: line_no,
                    reason: format!("invalid class id {class_id:?}"),
                });
            }
            if entries
                .insert(lemma.to_string(), class_id.to_string())
                .is_some()
            {
                return Err(SkillParseError::InvalidLexicon {
                    line: line_no,
                    reason: format!("duplicate lemma {lemma:?}"),
                });
            }
        }
        Ok(Self {
            entries,
            source_version: source_version.to_string(),
        })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> &'static VerbLexicon {
        &BUNDLED_LEXICON
    }

    pub fn source_version(&self) -> &str {
        &self.source_version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Total lookup: known lemmas resolve from the table, unknown lemmas get
    /// a provisional class.
    pub fn lookup(&self, lemma: &str) -> ClassLookup {
        match self.entries.get(lemma) {
            Some(class_id) => ClassLookup {
                class_id: class_id.clone(),
                provisional: false,
            },
            None => ClassLookup {
                class_id: format!("{lemma}-unclassified-0.0"),
                provisional: true,
            },
        }
    }
}
