//! Configuration resolution: command-line flags override environment
//! variables, which override the config file, which overrides defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use skillbank_core::modelgw::{
    Embedder, FixtureBackend, HttpBackend, HttpBackendConfig, ModelGateway, PromptSet,
    DEFAULT_EMBEDDING_DIM, ENV_TOKEN, ENV_URL,
};
use skillbank_core::retrieve::{RetrievalParams, DEFAULT_EPS_MOTION, DEFAULT_INACTIVE_FRAC};
use skillbank_core::synth::{DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS};
use skillbank_core::taxonomy::DEFAULT_THETA;

use crate::errors::CliError;

/// Environment variable naming the default repository directory.
pub const ENV_REPO: &str = "SKILLBANK_REPO";

#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    repo: Option<String>,
    backend: Option<BackendFileConfig>,
    embedding_dim: Option<usize>,
    theta: Option<f64>,
    eps_motion: Option<f64>,
    inactive_frac: Option<f64>,
    grid_rows: Option<u32>,
    grid_cols: Option<u32>,
    timeout_secs: Option<u64>,
    prompt_dir: Option<String>,
    model: Option<String>,
    embeddings_url: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BackendFileConfig {
    Fixture { fixtures: String },
    Http { url: Option<String> },
}

/// Fully resolved settings for one invocation.
pub struct Settings {
    pub repo: Option<PathBuf>,
    pub embedding_dim: usize,
    pub retrieval: RetrievalParams,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub prompts: PromptSet,
    backend_choice: BackendChoice,
    timeout: Duration,
    model: Option<String>,
    embeddings_url: Option<String>,
}

enum BackendChoice {
    Fixture(PathBuf),
    Http(String),
    None,
}

/// A constructed backend serving both gateway and embedder roles.
pub enum Backend {
    Fixture(FixtureBackend),
    Http(HttpBackend),
}

impl Backend {
    pub fn gateway(&self) -> &dyn ModelGateway {
        match self {
            Backend::Fixture(b) => b,
            Backend::Http(b) => b,
        }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        match self {
            Backend::Fixture(b) => b,
            Backend::Http(b) => b,
        }
    }
}

impl Settings {
    /// Builds settings from the optional config file plus flag overrides.
    pub fn resolve(
        config_path: Option<&Path>,
        repo_flag: Option<&Path>,
        fixtures_flag: Option<&Path>,
    ) -> Result<Settings, CliError> {
        let (file, config_dir): (FileConfig, PathBuf) = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                let parsed = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                (parsed, dir)
            }
            None => (FileConfig::default(), PathBuf::from(".")),
        };

        let repo = repo_flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var(ENV_REPO).ok().map(PathBuf::from))
            .or_else(|| file.repo.as_ref().map(|r| config_dir.join(r)));

        let backend_choice = if let Some(fixtures) = fixtures_flag {
            BackendChoice::Fixture(fixtures.to_path_buf())
        } else if let Ok(url) = std::env::var(ENV_URL) {
            BackendChoice::Http(url)
        } else {
            match &file.backend {
                Some(BackendFileConfig::Fixture { fixtures }) => {
                    BackendChoice::Fixture(config_dir.join(fixtures))
                }
                Some(BackendFileConfig::Http { url }) => match url {
                    Some(url) => BackendChoice::Http(url.clone()),
                    None => {
                        return Err(CliError::usage(format!(
                            "http backend configured without a url (set {ENV_URL} or backend.url)"
                        )))
                    }
                },
                None => BackendChoice::None,
            }
        };

        let retrieval = RetrievalParams {
            theta: file.theta.unwrap_or(DEFAULT_THETA),
            eps_motion: file.eps_motion.unwrap_or(DEFAULT_EPS_MOTION),
            inactive_frac: file.inactive_frac.unwrap_or(DEFAULT_INACTIVE_FRAC),
        };
        retrieval
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;

        let grid_rows = file.grid_rows.unwrap_or(DEFAULT_GRID_ROWS);
        let grid_cols = file.grid_cols.unwrap_or(DEFAULT_GRID_COLS);
        if grid_rows < 2 || grid_cols < 2 {
            return Err(CliError::usage("grid must be at least 2x2"));
        }

        let mut prompts = PromptSet::defaults();
        if let Some(dir) = &file.prompt_dir {
            prompts
                .load_overrides(&config_dir.join(dir))
                .map_err(|e| CliError::usage(format!("prompt overrides: {e}")))?;
        }

        Ok(Settings {
            repo,
            embedding_dim: file.embedding_dim.unwrap_or(DEFAULT_EMBEDDING_DIM),
            retrieval,
            grid_rows,
            grid_cols,
            prompts,
            backend_choice,
            timeout: Duration::from_secs(file.timeout_secs.unwrap_or(60)),
            model: file.model,
            embeddings_url: file.embeddings_url,
        })
    }

    pub fn repo_path(&self) -> Result<&Path, CliError> {
        self.repo.as_deref().ok_or_else(|| {
            CliError::usage(format!(
                "no repository given (use --repo, {ENV_REPO}, or the config file)"
            ))
        })
    }

    /// Constructs the configured backend; errors when none is configured.
    pub fn backend(&self) -> Result<Backend, CliError> {
        match &self.backend_choice {
            BackendChoice::Fixture(path) => Ok(Backend::Fixture(
                FixtureBackend::from_path(path, self.embedding_dim)
                    .map_err(|e| CliError::usage(e.to_string()))?,
            )),
            BackendChoice::Http(url) => {
                let mut cfg = HttpBackendConfig::new(url.clone());
                cfg.token = std::env::var(ENV_TOKEN).ok();
                cfg.timeout = self.timeout;
                cfg.embedding_dim = self.embedding_dim;
                cfg.embeddings_url = self.embeddings_url.clone();
                if let Some(model) = &self.model {
                    cfg.model = model.clone();
                }
                Ok(Backend::Http(
                    HttpBackend::new(cfg).map_err(|e| CliError::data(e.to_string()))?,
                ))
            }
            BackendChoice::None => Err(CliError::usage(format!(
                "no model backend configured (use --fixtures, {ENV_URL}, or the config file)"
            ))),
        }
    }
}
