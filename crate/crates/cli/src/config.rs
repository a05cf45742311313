//! TOML run configuration. Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glmm_design::criteria::{InfoEvaluator, QuadratureChoice};
use glmm_design::model::PriorSpec;
use glmm_design::optim::{OptimizerConfig, Target};
use glmm_design::surrogate::SurrogateBundle;
use glmm_design::{Link, Method, ModelSpec, ParameterPoint, Term};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Random streams derived from the single config seed.
pub const PRIOR_STREAM: u64 = 1;
pub const MC_SEED_OFFSET: u64 = 0x5EED_0000_0000_0001;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub parameters: Option<ParametersSection>,
    pub method: Option<MethodSection>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
    pub eval: Option<EvalSection>,
    pub compare: Option<CompareSection>,
    pub surrogate: Option<SurrogateSection>,
    pub profile: Option<ProfileSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub link: Link,
    /// `"1"`, `"x1"`, `"x1*x2"`, ...
    pub terms: Vec<String>,
    /// Number of variables; inferred from the terms when absent.
    pub q: Option<usize>,
    pub m: usize,
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametersSection {
    pub beta: Option<Vec<f64>>,
    pub beta_att: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub prior: Option<PriorSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub beta_bounds: Option<Vec<[f64; 2]>>,
    pub sigma2: Option<f64>,
    pub n_points: Option<usize>,
    pub points: Option<Vec<PointSection>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: String,
    pub rho: Option<f64>,
    pub mc_samples: Option<usize>,
    /// Surrogate bundle for the interpolated method.
    pub bundle: Option<String>,
    /// `"adaptive"` (default), `"composite"`, or set `quadrature_order`.
    pub quadrature: Option<String>,
    pub quadrature_order: Option<usize>,
    pub gamma: Option<f64>,
}

/// A method given either by name or as a full table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Name(String),
    Full(MethodSection),
}

impl MethodEntry {
    pub fn section(&self) -> MethodSection {
        match self {
            MethodEntry::Name(n) => MethodSection::named(n),
            MethodEntry::Full(s) => s.clone(),
        }
    }
}

impl MethodSection {
    pub fn named(name: &str) -> Self {
        Self { name: name.to_string(), rho: None, mc_samples: None, bundle: None, quadrature: None, quadrature_order: None, gamma: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub n_starts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub fd_step: Option<f64>,
    pub tolerance: Option<f64>,
    pub support_cap: Option<usize>,
    pub prune_threshold: Option<f64>,
    pub merge_tolerance: Option<f64>,
    pub polish: Option<bool>,
    pub nm_restarts: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_design_path")]
    pub design: String,
    /// Record creation time and wall time in design files.
    #[serde(default = "default_true")]
    pub timestamps: bool,
    #[serde(default = "default_true")]
    pub summary: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { design: default_design_path(), timestamps: true, summary: true }
    }
}

fn default_design_path() -> String {
    "design.json".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    /// Design file to compute efficiencies against.
    pub reference: Option<String>,
    /// Number of blocks for the relative estimation error table.
    pub n_blocks: Option<f64>,
    pub output: Option<String>,
    pub errors_output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Scenarios on the marginal scale.
    pub beta_att: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub methods: Vec<String>,
    /// Working correlations tried for GEE-type methods.
    pub rho_grid: Option<Vec<f64>>,
    pub reference: Option<String>,
    /// Starts per cell; 20 unless `full_scale` is set.
    pub n_starts: Option<usize>,
    #[serde(default)]
    pub full_scale: bool,
    pub output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSection {
    pub sigma2: f64,
    pub n_train: usize,
    /// `"kriging"` (default) or `"grid"` (blocks of two only).
    pub kind: Option<String>,
    pub eta_bound: Option<f64>,
    pub bounds: Option<Vec<[f64; 2]>>,
    pub range: Option<f64>,
    pub nugget: Option<f64>,
    pub resolution: Option<usize>,
    pub quadrature_order: Option<usize>,
    pub output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub mc_samples: Option<usize>,
    /// Odd window length for a centred moving average of the log-determinant.
    pub smoothing_window: Option<usize>,
    pub output: Option<String>,
}

pub const DEFAULT_COMPARE_STARTS: usize = 20;
pub const FULL_LOCAL_STARTS: usize = 100;
pub const FULL_BAYES_STARTS: usize = 1000;

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string().trim_end().to_string()))
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn spec(&self) -> CliResult<ModelSpec> {
        let m = &self.model;
        let terms = m
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| t.parse::<Term>().map_err(|e| CliError::field(&format!("model.terms[{i}]"), e)))
            .collect::<CliResult<Vec<_>>>()?;
        let inferred = terms
            .iter()
            .map(|t| match *t {
                Term::Intercept => 0,
                Term::Linear(i) => i + 1,
                Term::Interaction(i, k) => i.max(k) + 1,
            })
            .max()
            .unwrap_or(0);
        let q = m.q.unwrap_or(inferred);
        let bounds = match &m.bounds {
            Some(b) => b.iter().map(|&[lo, hi]| (lo, hi)).collect(),
            None => vec![(-1.0, 1.0); q],
        };
        ModelSpec::new(m.link, terms, q, m.m, bounds).map_err(|e| CliError::field("model", e))
    }

    fn parameters(&self) -> CliResult<&ParametersSection> {
        self.parameters.as_ref().ok_or_else(|| CliError::field("parameters", "section is required"))
    }

    /// The local parameter point, if the parameters section names one.
    pub fn local_point(&self, spec: &ModelSpec) -> CliResult<ParameterPoint> {
        let p = self.parameters()?;
        if p.prior.is_some() {
            return Err(CliError::field("parameters.prior", "this command needs a single parameter point"));
        }
        let sigma2 = p.sigma2.ok_or_else(|| CliError::field("parameters.sigma2", "is required"))?;
        let point = match (&p.beta, &p.beta_att) {
            (Some(b), None) => {
                check_len("parameters.beta", b.len(), spec.p())?;
                ParameterPoint::new(b.clone(), sigma2)
            }
            (None, Some(b)) => {
                check_len("parameters.beta_att", b.len(), spec.p())?;
                ParameterPoint::from_attenuated(b, sigma2)
            }
            (Some(_), Some(_)) => return Err(CliError::field("parameters", "give exactly one of beta and beta_att")),
            (None, None) => return Err(CliError::field("parameters.beta", "one of beta, beta_att or prior is required")),
        };
        point.map_err(|e| CliError::field("parameters", e))
    }

    pub fn target(&self, spec: &ModelSpec) -> CliResult<Target> {
        let p = self.parameters()?;
        let Some(prior) = &p.prior else {
            return Ok(Target::Local(self.local_point(spec)?));
        };
        if p.beta.is_some() || p.beta_att.is_some() || p.sigma2.is_some() {
            return Err(CliError::field("parameters", "give either a prior or a parameter point, not both"));
        }
        let spec_prior = match (&prior.beta_bounds, &prior.points) {
            (Some(bounds), None) => {
                let sigma2 = prior.sigma2.ok_or_else(|| CliError::field("parameters.prior.sigma2", "is required"))?;
                PriorSpec::Uniform { beta_bounds: bounds.iter().map(|&[a, b]| (a, b)).collect(), sigma2 }
            }
            (None, Some(points)) => {
                if prior.sigma2.is_some() || prior.n_points.is_some() {
                    return Err(CliError::field("parameters.prior", "sigma2 and n_points apply only to beta_bounds"));
                }
                PriorSpec::Points(
                    points
                        .iter()
                        .enumerate()
                        .map(|(i, pt)| {
                            ParameterPoint::new(pt.beta.clone(), pt.sigma2).map_err(|e| CliError::field(&format!("parameters.prior.points[{i}]"), e))
                        })
                        .collect::<CliResult<_>>()?,
                )
            }
            _ => return Err(CliError::field("parameters.prior", "give exactly one of beta_bounds and points")),
        };
        spec_prior.validate(spec.p()).map_err(|e| CliError::field("parameters.prior", e))?;
        let n = prior.n_points.unwrap_or(50);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(PRIOR_STREAM);
        let points = spec_prior.sample(n, &mut rng).map_err(|e| CliError::field("parameters.prior.n_points", e))?;
        Ok(Target::Bayes(points))
    }

    pub fn method_section(&self) -> CliResult<&MethodSection> {
        self.method.as_ref().ok_or_else(|| CliError::field("method", "section is required"))
    }

    pub fn evaluator(&self, spec: &ModelSpec, section: &MethodSection, path: &str) -> CliResult<InfoEvaluator> {
        let method: Method = section.name.parse().map_err(|e| CliError::field(&format!("{path}.name"), e))?;
        let mut ev = InfoEvaluator::new(method).with_mc(section.mc_samples.unwrap_or(glmm_design::criteria::DEFAULT_MC_SAMPLES), self.seed ^ MC_SEED_OFFSET);
        if let Some(rho) = section.rho {
            if !method.uses_rho() {
                return Err(CliError::field(&format!("{path}.rho"), format!("method {method} takes no rho")));
            }
            ev = ev.with_rho(rho);
        } else if method.uses_rho() {
            return Err(CliError::field(&format!("{path}.rho"), format!("is required for method {method}")));
        }
        ev = ev.with_quadrature(match (section.quadrature.as_deref(), section.quadrature_order) {
            (None | Some("adaptive"), None) => QuadratureChoice::Adaptive,
            (None | Some("fixed"), Some(n)) => QuadratureChoice::Fixed(n),
            (Some("composite"), None) => QuadratureChoice::Composite,
            (Some(other), _) => {
                return Err(CliError::field(&format!("{path}.quadrature"), format!("unknown rule `{other}` (adaptive, composite)")))
            }
        });
        if let Some(g) = section.gamma {
            if !(g > 0.0) {
                return Err(CliError::field(&format!("{path}.gamma"), "must be positive"));
            }
            ev = ev.with_gamma(g);
        }
        match (&section.bundle, method) {
            (Some(b), Method::Interpolated) => {
                let bundle = SurrogateBundle::load(&self.resolve(b)).map_err(|e| match CliError::from(e) {
                    CliError::Io(m) => CliError::Io(format!("{path}.bundle: {m}")),
                    other => CliError::field(&format!("{path}.bundle"), other),
                })?;
                ev = ev.with_bundle(Arc::new(bundle));
            }
            (None, Method::Interpolated) => return Err(CliError::field(&format!("{path}.bundle"), "is required for method interpolated")),
            (Some(_), _) => return Err(CliError::field(&format!("{path}.bundle"), format!("method {method} takes no bundle"))),
            _ => {}
        }
        ev.validate(spec).map_err(|e| CliError::field(path, e))?;
        Ok(ev)
    }

    pub fn optimizer(&self, bayes: bool) -> OptimizerConfig {
        let o = &self.optimizer;
        let d = OptimizerConfig::default();
        OptimizerConfig {
            n_starts: o.n_starts.unwrap_or(if bayes { FULL_BAYES_STARTS } else { FULL_LOCAL_STARTS }),
            max_iterations: o.max_iterations.unwrap_or(d.max_iterations),
            fd_step: o.fd_step.unwrap_or(d.fd_step),
            tolerance: o.tolerance.unwrap_or(d.tolerance),
            seed: self.seed,
            support_cap: o.support_cap,
            prune_threshold: o.prune_threshold.unwrap_or(d.prune_threshold),
            merge_tolerance: o.merge_tolerance.unwrap_or(d.merge_tolerance),
            polish: o.polish.unwrap_or(d.polish),
            nm_restarts: o.nm_restarts.unwrap_or(d.nm_restarts),
        }
    }

    pub fn checked_optimizer(&self, spec: &ModelSpec, bayes: bool) -> CliResult<OptimizerConfig> {
        let cfg = self.optimizer(bayes);
        cfg.validate(spec).map_err(|e| CliError::field("optimizer", e))?;
        Ok(cfg)
    }
}

fn check_len(path: &str, got: usize, p: usize) -> CliResult<()> {
    if got != p {
        return Err(CliError::field(path, format!("has {got} entries, model has p = {p}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        seed = 3
        [model]
        link = "logit"
        terms = ["1", "x1", "x2"]
        m = 4
        [parameters]
        beta_att = [0.0, 1.0, 1.0]
        sigma2 = 5.0
        [method]
        name = "adj_mql"
    "#;

    #[test]
    fn parses_a_local_config() {
        let cfg = RunConfig::parse(BASE).unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!((spec.q, spec.m, spec.p()), (2, 4, 3));
        let t = cfg.local_point(&spec).unwrap();
        assert!((t.attenuated().beta[1] - 1.0).abs() < 1e-14);
        let ev = cfg.evaluator(&spec, cfg.method_section().unwrap(), "method").unwrap();
        assert_eq!(ev.method, Method::AdjMql);
        assert_eq!(cfg.optimizer(false).n_starts, 100);
        assert_eq!(cfg.optimizer(true).n_starts, 1000);
        assert_eq!(cfg.optimizer(false).seed, 3);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = RunConfig::parse(&format!("{BASE}\n[output]\ndesgin = \"x.json\"\n")).unwrap_err();
        assert!(matches!(err, CliError::Validation(ref m) if m.contains("desgin")), "{err}");
    }

    #[test]
    fn missing_sigma2_names_the_field() {
        let cfg = RunConfig::parse(&BASE.replace("sigma2 = 5.0", "")).unwrap();
        let spec = cfg.spec().unwrap();
        let err = cfg.local_point(&spec).unwrap_err();
        assert!(err.to_string().contains("parameters.sigma2"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn beta_and_beta_att_are_exclusive() {
        let cfg = RunConfig::parse(&BASE.replace("sigma2 = 5.0", "sigma2 = 5.0\nbeta = [0.0, 1.0, 1.0]")).unwrap();
        assert!(cfg.local_point(&cfg.spec().unwrap()).is_err());
    }

    #[test]
    fn gee_needs_rho() {
        let cfg = RunConfig::parse(&BASE.replace("adj_mql", "adj_gee")).unwrap();
        let spec = cfg.spec().unwrap();
        let err = cfg.evaluator(&spec, cfg.method_section().unwrap(), "method").unwrap_err();
        assert!(err.to_string().contains("method.rho"), "{err}");
    }

    #[test]
    fn prior_sampling_is_seeded() {
        let text = BASE.replace(
            "beta_att = [0.0, 1.0, 1.0]\n        sigma2 = 5.0",
            "[parameters.prior]\nbeta_bounds = [[-0.5, 0.5], [3.0, 5.0], [0.0, 10.0]]\nsigma2 = 5.0\nn_points = 7",
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let spec = cfg.spec().unwrap();
        let a = cfg.target(&spec).unwrap();
        let b = cfg.target(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points().len(), 7);
        assert!(a.points().iter().all(|t| (3.0..=5.0).contains(&t.beta[1]) && t.sigma2 == 5.0));
    }
}
