//! Versioned JSON design files.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use glmm_design::criteria::{InfoEvaluator, QuadratureChoice};
use glmm_design::optim::{DesignSearchResult, Target};
use glmm_design::{Design, Method, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DESIGN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodInfo {
    pub name: Method,
    pub rho: Option<f64>,
    pub mc_samples: Option<usize>,
    pub quadrature: QuadratureChoice,
    pub bundle: Option<String>,
}

impl MethodInfo {
    pub fn from_evaluator(ev: &InfoEvaluator, bundle: Option<String>) -> Self {
        Self {
            name: ev.method,
            rho: ev.rho,
            mc_samples: (ev.method == Method::MonteCarlo).then_some(ev.mc_samples),
            quadrature: ev.quadrature,
            bundle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchInfo {
    pub n_starts: usize,
    pub best_start: usize,
    pub evaluations: usize,
    /// `null` marks a start that found no feasible design.
    pub start_objectives: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub format_version: u32,
    pub model_hash: String,
    pub model: ModelSpec,
    pub method: MethodInfo,
    pub seed: u64,
    pub target: Target,
    pub design: Design,
    pub objective: f64,
    pub search: SearchInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

/// SHA-256 of the model's canonical JSON form.
pub fn model_hash(spec: &ModelSpec) -> String {
    let text = serde_json::to_string(spec).expect("model serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl DesignFile {
    pub fn from_search(
        spec: &ModelSpec,
        method: MethodInfo,
        seed: u64,
        target: Target,
        result: &DesignSearchResult,
        timestamps: bool,
    ) -> Self {
        let created = timestamps.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Self {
            format_version: DESIGN_FORMAT_VERSION,
            model_hash: model_hash(spec),
            model: spec.clone(),
            method,
            seed,
            target,
            design: result.design.clone(),
            objective: result.objective,
            search: SearchInfo {
                n_starts: result.start_objectives.len(),
                best_start: result.best_start,
                evaluations: result.evaluations,
                start_objectives: result.start_objectives.iter().map(|&v| v.is_finite().then_some(v)).collect(),
            },
            created_unix_secs: created,
            wall_time_secs: timestamps.then_some(result.wall_time_secs),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("design file serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(path, self.to_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let file: DesignFile =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: malformed design file: {e}", path.display())))?;
        file.validate().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Ok(file)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.format_version != DESIGN_FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported design format version {} (expected {DESIGN_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.model.validate()?;
        if model_hash(&self.model) != self.model_hash {
            return Err(CliError::Validation("model hash does not match the stored model".into()));
        }
        self.design.validate(&self.model)?;
        self.target.validate(&self.model)?;
        Ok(())
    }

    /// Errors unless the file was produced for `spec`.
    pub fn check_model(&self, spec: &ModelSpec) -> CliResult<()> {
        let h = model_hash(spec);
        if h != self.model_hash {
            return Err(CliError::Validation(format!("model hash mismatch: design file has {}, config gives {h}", self.model_hash)));
        }
        Ok(())
    }

    /// Same file with the run-dependent time fields removed.
    pub fn without_times(&self) -> Self {
        Self { created_unix_secs: None, wall_time_secs: None, ..self.clone() }
    }
}
