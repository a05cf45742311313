//! The five batch commands. Each returns its data and a printable summary;
//! files named in the config are written as a side effect.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use glmm_design::criteria::{efficiency_local, logdet_psd, relative_estimation_error, InfoEvaluator};
use glmm_design::enumeration::info_mc;
use glmm_design::optim::{optimize_design, OptimizerConfig, Target};
use glmm_design::quadrature::{gauss_hermite, QuadratureRule};
use glmm_design::surrogate::{build_training_set, fit, grid_interp_2d, SurrogateBundle, DEFAULT_ETA_BOUND, DEFAULT_NUGGET, DEFAULT_RANGE};
use glmm_design::{Block, Design, Link, Method, ModelSpec, ParameterPoint};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{MethodSection, RunConfig, DEFAULT_COMPARE_STARTS, MC_SEED_OFFSET, FULL_LOCAL_STARTS};
use crate::design_file::{DesignFile, MethodInfo};
use crate::error::{CliError, CliResult};

pub struct FindOutcome {
    pub file: DesignFile,
    pub path: PathBuf,
    pub summary: String,
}

pub fn cmd_find(config_path: &Path) -> CliResult<FindOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.spec()?;
    let target = cfg.target(&spec)?;
    let section = cfg.method_section()?;
    let ev = cfg.evaluator(&spec, section, "method")?;
    let opt = cfg.checked_optimizer(&spec, matches!(target, Target::Bayes(_)))?;
    let result = optimize_design(&spec, &target, &ev, &opt)?;
    let method = MethodInfo::from_evaluator(&ev, section.bundle.clone());
    let file = DesignFile::from_search(&spec, method, cfg.seed, target, &result, cfg.output.timestamps);
    let path = cfg.resolve(&cfg.output.design);
    file.write(&path)?;
    let mut summary = design_summary(&spec, &file);
    let _ = writeln!(summary, "wrote {}", path.display());
    Ok(FindOutcome { file, path, summary })
}

/// Text table of the support blocks, one line per unit.
pub fn design_summary(spec: &ModelSpec, file: &DesignFile) -> String {
    let mut s = String::new();
    let rho = file.method.rho.map(|r| format!(" (rho = {r})")).unwrap_or_default();
    let _ = writeln!(s, "method {}{rho}, objective {:.10}", file.method.name, file.objective);
    let _ = writeln!(
        s,
        "{} support block(s), best of {} starts (start {})",
        file.design.len(),
        file.search.n_starts,
        file.search.best_start
    );
    for (k, (block, w)) in file.design.blocks.iter().zip(&file.design.weights).enumerate() {
        let _ = writeln!(s, "block {}  weight {:.6}", k + 1, w);
        for (j, t) in block.treatments.iter().enumerate() {
            let coords: Vec<String> = t.iter().map(|x| format!("{x:>9.5}")).collect();
            let _ = writeln!(s, "  unit {}  x = ({})", j + 1, coords.join(", "));
        }
    }
    let _ = spec;
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub method: String,
    pub rho: Option<f64>,
    pub objective: f64,
    pub reference_objective: Option<f64>,
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub coefficient: String,
    pub beta: f64,
    pub relative_error: f64,
}

pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    pub errors: Option<Vec<ErrorRow>>,
    /// `|stored − recomputed|` objective under the file's own method and target.
    pub stored_objective_error: f64,
    pub summary: String,
}

fn evaluator_from_file(cfg: &RunConfig, spec: &ModelSpec, file: &DesignFile) -> CliResult<InfoEvaluator> {
    let section = MethodSection {
        name: file.method.name.name().to_string(),
        rho: file.method.rho,
        mc_samples: file.method.mc_samples,
        bundle: file.method.bundle.clone(),
        quadrature: None,
        quadrature_order: None,
        gamma: None,
    };
    let seeded = RunConfig { seed: file.seed, ..cfg.clone() };
    Ok(seeded.evaluator(spec, &section, "design.method")?.with_quadrature(file.method.quadrature))
}

fn objective(spec: &ModelSpec, design: &Design, target: &Target, ev: &InfoEvaluator) -> CliResult<f64> {
    Ok(target.objective(spec, design, ev)?)
}

pub fn cmd_eval(design_path: &Path, config_path: &Path) -> CliResult<EvalOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.spec()?;
    let file = DesignFile::read(design_path)?;
    file.check_model(&spec)?;
    let target = if cfg.parameters.is_some() { cfg.target(&spec)? } else { file.target.clone() };
    let eval = cfg.eval.clone().unwrap_or_default();

    let own = evaluator_from_file(&cfg, &spec, &file)?;
    let recomputed = objective(&spec, &file.design, &file.target, &own)?;
    let stored_objective_error = (recomputed - file.objective).abs();

    let sections: Vec<MethodSection> = if !eval.methods.is_empty() {
        eval.methods.iter().map(|m| m.section()).collect()
    } else if let Some(m) = &cfg.method {
        vec![m.clone()]
    } else {
        Vec::new()
    };
    let mut evaluators = Vec::with_capacity(sections.len().max(1));
    for (i, s) in sections.iter().enumerate() {
        evaluators.push(cfg.evaluator(&spec, s, &format!("eval.methods[{i}]"))?);
    }
    if evaluators.is_empty() {
        evaluators.push(own);
    }
    let reference = match &eval.reference {
        Some(p) => {
            let r = DesignFile::read(&cfg.resolve(p))?;
            r.check_model(&spec)?;
            Some(r.design)
        }
        None => None,
    };

    let p = spec.p() as f64;
    let mut rows = Vec::with_capacity(evaluators.len());
    for ev in &evaluators {
        let obj = objective(&spec, &file.design, &target, ev)?;
        let (reference_objective, efficiency) = match &reference {
            Some(r) => {
                let ro = objective(&spec, r, &target, ev)?;
                if !ro.is_finite() {
                    return Err(CliError::Infeasible(format!("reference design is singular under method {}", ev.method)));
                }
                (Some(ro), Some(((obj - ro) / p).exp()))
            }
            None => (None, None),
        };
        rows.push(EvalRow { method: ev.method.name().into(), rho: ev.rho, objective: obj, reference_objective, efficiency });
    }

    let errors = match eval.n_blocks {
        Some(n) => {
            let Target::Local(theta) = &target else {
                return Err(CliError::field("eval.n_blocks", "relative estimation errors need a single parameter point"));
            };
            let rel = relative_estimation_error(&spec, &file.design, theta, n, &evaluators[0])?;
            Some(
                rel.iter()
                    .enumerate()
                    .map(|(i, &e)| ErrorRow { coefficient: format!("beta{i}"), beta: theta.beta[i], relative_error: e })
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };

    if let Some(out) = &eval.output {
        write_csv(&cfg.resolve(out), &rows)?;
    }
    if let (Some(out), Some(errs)) = (&eval.errors_output, &errors) {
        write_csv(&cfg.resolve(out), errs)?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "stored objective reproduced to {stored_objective_error:.3e}");
    for r in &rows {
        let rho = r.rho.map(|x| format!(" (rho = {x})")).unwrap_or_default();
        let eff = r.efficiency.map(|e| format!(", efficiency {:.2}%", 100.0 * e)).unwrap_or_default();
        let _ = writeln!(summary, "{}{rho}: objective {:.10}{eff}", r.method, r.objective);
    }
    if let Some(errs) = &errors {
        for e in errs {
            let _ = writeln!(summary, "{}: relative error {:.6}", e.coefficient, e.relative_error);
        }
    }
    Ok(EvalOutcome { rows, errors, stored_objective_error, summary })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub beta_att: String,
    pub sigma2: f64,
    pub method: String,
    pub rho: Option<f64>,
    pub efficiency: Option<f64>,
    pub objective: Option<f64>,
    pub n_blocks: Option<usize>,
    pub wall_time_secs: f64,
    pub status: String,
}

pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub path: PathBuf,
    pub summary: String,
}

fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

pub fn cmd_compare(config_path: &Path) -> CliResult<CompareOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.spec()?;
    let sec = cfg.compare.clone().ok_or_else(|| CliError::field("compare", "section is required"))?;
    if sec.beta_att.is_empty() || sec.sigma2.is_empty() || sec.methods.is_empty() {
        return Err(CliError::field("compare", "beta_att, sigma2 and methods must be nonempty"));
    }
    for (i, b) in sec.beta_att.iter().enumerate() {
        if b.len() != spec.p() {
            return Err(CliError::field(&format!("compare.beta_att[{i}]"), format!("has {} entries, model has p = {}", b.len(), spec.p())));
        }
    }
    let n_starts = sec.n_starts.unwrap_or(if sec.full_scale { FULL_LOCAL_STARTS } else { DEFAULT_COMPARE_STARTS });
    let base_opt = OptimizerConfig { n_starts, ..cfg.optimizer(false) };
    base_opt.validate(&spec).map_err(|e| CliError::field("optimizer", e))?;
    let judge = cfg.evaluator(&spec, &MethodSection::named(sec.reference.as_deref().unwrap_or("naive")), "compare.reference")?;

    // Expand methods into cells, one per ρ for GEE-type methods.
    let mut method_cells: Vec<InfoEvaluator> = Vec::new();
    for (i, name) in sec.methods.iter().enumerate() {
        let path = format!("compare.methods[{i}]");
        let method: Method = name.parse().map_err(|e| CliError::field(&path, e))?;
        if method.uses_rho() {
            let grid = sec.rho_grid.as_ref().ok_or_else(|| CliError::field("compare.rho_grid", format!("is required for method {method}")))?;
            for &rho in grid {
                method_cells.push(cfg.evaluator(&spec, &MethodSection { rho: Some(rho), ..MethodSection::named(name) }, &path)?);
            }
        } else {
            method_cells.push(cfg.evaluator(&spec, &MethodSection::named(name), &path)?);
        }
    }

    let scenarios: Vec<(Vec<f64>, f64)> = sec.beta_att.iter().flat_map(|b| sec.sigma2.iter().map(move |&s| (b.clone(), s))).collect();
    for (b, s) in &scenarios {
        ParameterPoint::from_attenuated(b, *s).map_err(|e| CliError::field("compare.sigma2", e))?;
    }
    let references: Vec<(Option<Design>, CompareRow)> = scenarios
        .par_iter()
        .enumerate()
        .map(|(si, (b, s2))| {
            let theta = ParameterPoint::from_attenuated(b, *s2).expect("checked above");
            let opt = OptimizerConfig { seed: cell_seed(cfg.seed, si), ..base_opt.clone() };
            let clock = Instant::now();
            let res = optimize_design(&spec, &Target::Local(theta), &judge, &opt);
            let wall = clock.elapsed().as_secs_f64();
            let mut row = CompareRow {
                beta_att: format_vec(b),
                sigma2: *s2,
                method: format!("{} (reference)", judge.method),
                rho: None,
                efficiency: None,
                objective: None,
                n_blocks: None,
                wall_time_secs: wall,
                status: "ok".into(),
            };
            match res {
                Ok(r) => {
                    row.efficiency = Some(1.0);
                    row.objective = Some(r.objective);
                    row.n_blocks = Some(r.design.len());
                    (Some(r.design), row)
                }
                Err(e) => {
                    row.status = e.to_string();
                    (None, row)
                }
            }
        })
        .collect();

    let cells: Vec<(usize, usize)> = (0..scenarios.len()).flat_map(|s| (0..method_cells.len()).map(move |m| (s, m))).collect();
    let method_rows: Vec<CompareRow> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, &(si, mi))| {
            let (b, s2) = &scenarios[si];
            let ev = &method_cells[mi];
            let theta = ParameterPoint::from_attenuated(b, *s2).expect("checked above");
            let opt = OptimizerConfig { seed: cell_seed(cfg.seed, scenarios.len() + ci), ..base_opt.clone() };
            let clock = Instant::now();
            let res = optimize_design(&spec, &Target::Local(theta.clone()), ev, &opt);
            let wall = clock.elapsed().as_secs_f64();
            let mut row = CompareRow {
                beta_att: format_vec(b),
                sigma2: *s2,
                method: ev.method.name().into(),
                rho: ev.rho,
                efficiency: None,
                objective: None,
                n_blocks: None,
                wall_time_secs: wall,
                status: "ok".into(),
            };
            let outcome = res.and_then(|r| {
                let reference = references[si].0.as_ref().ok_or(glmm_design::DesignError::NoFeasibleDesign)?;
                let eff = efficiency_local(&spec, &r.design, &theta, reference, &judge)?;
                Ok((r, eff))
            });
            match outcome {
                Ok((r, eff)) => {
                    row.efficiency = Some(eff);
                    row.objective = Some(r.objective);
                    row.n_blocks = Some(r.design.len());
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect();

    let mut rows = Vec::with_capacity(references.len() + method_rows.len());
    for (si, (_, r)) in references.into_iter().enumerate() {
        rows.push(r);
        rows.extend(method_rows.iter().skip(si * method_cells.len()).take(method_cells.len()).cloned());
    }
    let path = cfg.resolve(sec.output.as_deref().unwrap_or("compare.csv"));
    write_csv(&path, &rows)?;
    let summary = compare_summary(&sec.beta_att, &sec.sigma2, &rows, &path);
    Ok(CompareOutcome { rows, path, summary })
}

/// Table-1 layout: per scenario, method rows and σ² columns, GEE-type
/// methods shown as a range over ρ.
fn compare_summary(betas: &[Vec<f64>], sigma2: &[f64], rows: &[CompareRow], path: &Path) -> String {
    let mut s = String::new();
    let mut header = format!("{:<16}{:<22}", "beta_att", "method");
    for x in sigma2 {
        let _ = write!(header, "{:>16}", format!("s2={x}"));
    }
    let _ = writeln!(s, "{header}");
    for b in betas {
        let label = format_vec(b);
        let mut methods: Vec<&str> = Vec::new();
        for r in rows.iter().filter(|r| r.beta_att == label) {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for m in methods {
            let mut line = format!("{label:<16}{m:<22}");
            for &x in sigma2 {
                let effs: Vec<f64> =
                    rows.iter().filter(|r| r.beta_att == label && r.method == m && r.sigma2 == x).filter_map(|r| r.efficiency).collect();
                let cell = match effs.len() {
                    0 => "fail".to_string(),
                    1 => format!("{:.1}", 100.0 * effs[0]),
                    _ => {
                        let lo = effs.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = effs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        format!("{:.1}-{:.1}", 100.0 * lo, 100.0 * hi)
                    }
                };
                let _ = write!(line, "{cell:>16}");
            }
            let _ = writeln!(s, "{line}");
        }
    }
    let _ = writeln!(s, "wrote {}", path.display());
    s
}

pub struct TrainOutcome {
    pub path: PathBuf,
    /// Held-out RMSE per upper-triangle entry of `Q` (empty for grids).
    pub holdout_rmse: Vec<f64>,
    pub holdout_range: Vec<f64>,
    pub summary: String,
}

pub fn cmd_train_surrogate(config_path: &Path) -> CliResult<TrainOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.spec()?;
    let sec = cfg.surrogate.clone().ok_or_else(|| CliError::field("surrogate", "section is required"))?;
    if spec.link != Link::Logit {
        return Err(CliError::field("model.link", "surrogates are trained for the logit link"));
    }
    if !(sec.sigma2 >= 0.0) {
        return Err(CliError::field("surrogate.sigma2", "must be >= 0"));
    }
    let bounds: Vec<(f64, f64)> = match (&sec.bounds, sec.eta_bound) {
        (Some(b), None) => b.iter().map(|&[lo, hi]| (lo, hi)).collect(),
        (None, e) => vec![(-e.unwrap_or(DEFAULT_ETA_BOUND), e.unwrap_or(DEFAULT_ETA_BOUND)); spec.m],
        (Some(_), Some(_)) => return Err(CliError::field("surrogate", "give either bounds or eta_bound")),
    };
    let rule: Arc<QuadratureRule> = match sec.quadrature_order {
        Some(n) => Arc::new(gauss_hermite(n).map_err(|e| CliError::field("surrogate.quadrature_order", e))?),
        None => QuadratureRule::adaptive(sec.sigma2),
    };
    let clock = Instant::now();
    let bundle = match sec.kind.as_deref().unwrap_or("kriging") {
        "kriging" => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let ts = build_training_set(&spec, sec.sigma2, &bounds, sec.n_train, &mut rng, &rule)
                .map_err(|e| CliError::field("surrogate", e))?;
            fit(&ts, sec.range.unwrap_or(DEFAULT_RANGE), sec.nugget.unwrap_or(DEFAULT_NUGGET))?
        }
        "grid" => {
            let res = sec.resolution.ok_or_else(|| CliError::field("surrogate.resolution", "is required for kind = \"grid\""))?;
            grid_interp_2d(&spec, sec.sigma2, &bounds, res, &rule).map_err(|e| CliError::field("surrogate", e))?
        }
        other => return Err(CliError::field("surrogate.kind", format!("unknown kind `{other}` (kriging, grid)"))),
    };
    let elapsed = clock.elapsed().as_secs_f64();
    let path = cfg.resolve(sec.output.as_deref().unwrap_or("surrogate.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    bundle.save(&path).map_err(CliError::from)?;
    let (holdout_rmse, holdout_range) = match &bundle {
        SurrogateBundle::Kriging(k) => (k.holdout_rmse.clone(), k.holdout_range.clone()),
        SurrogateBundle::Grid(_) => (Vec::new(), Vec::new()),
    };
    let mut summary = format!("trained {} surrogate for m = {}, sigma2 = {} in {elapsed:.2}s\n", kind_name(&bundle), spec.m, sec.sigma2);
    let m = spec.m;
    let mut e = 0;
    for a in 0..m {
        for b in a..m {
            if let (Some(r), Some(g)) = (holdout_rmse.get(e), holdout_range.get(e)) {
                let _ = writeln!(summary, "  Q[{a},{b}] held-out RMSE {r:.3e} ({:.2}% of range)", 100.0 * r / g.max(f64::MIN_POSITIVE));
            }
            e += 1;
        }
    }
    let _ = writeln!(summary, "wrote {}", path.display());
    Ok(TrainOutcome { path, holdout_rmse, holdout_range, summary })
}

fn kind_name(b: &SurrogateBundle) -> &'static str {
    match b {
        SurrogateBundle::Kriging(_) => "kriging",
        SurrogateBundle::Grid(_) => "grid",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub t: f64,
    pub log_det: f64,
    pub std_error: f64,
    pub efficiency: f64,
    pub smoothed_log_det: Option<f64>,
    pub quasi_log_det: f64,
}

pub struct ProfileOutcome {
    pub rows: Vec<ProfileRow>,
    /// Maximizer of the direct quasi-likelihood objective over `t ∈ [-1, 1]`.
    pub quasi_optimum: f64,
    pub path: PathBuf,
    pub summary: String,
}

/// The Poisson block `((1, 1), (−1, 1), (1, t))`.
pub fn profile_block(t: f64) -> Block {
    Block::new(vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, t]])
}

/// Delta-method standard error of `log|M|` from entrywise standard errors,
/// treating the upper-triangle entries as independent.
fn logdet_std_error(m: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    let Some(inv) = m.clone().try_inverse() else { return f64::NAN };
    let p = m.nrows();
    let mut var = 0.0;
    for a in 0..p {
        for b in a..p {
            // ∂ log|M| / ∂M_ab for a symmetric perturbation of both (a,b) and (b,a).
            let g = if a == b { inv[(a, a)] } else { 2.0 * inv[(a, b)] };
            var += (g * se[(a, b)]).powi(2);
        }
    }
    var.sqrt()
}

pub fn cmd_profile(config_path: &Path) -> CliResult<ProfileOutcome> {
    let cfg = RunConfig::load(config_path)?;
    let spec = cfg.spec()?;
    let sec = cfg.profile.clone().ok_or_else(|| CliError::field("profile", "section is required"))?;
    if spec.link != Link::Log || spec.q != 2 || spec.m != 3 || spec.p() != 3 {
        return Err(CliError::field("model", "the profile family needs a log-link main-effects model with q = 2 and m = 3"));
    }
    let theta = cfg.local_point(&spec)?;
    if !(sec.t_step > 0.0) || !(sec.t_max >= sec.t_min) {
        return Err(CliError::field("profile", "need t_step > 0 and t_max >= t_min"));
    }
    let n_t = ((sec.t_max - sec.t_min) / sec.t_step + 1e-9).floor() as usize + 1;
    let samples = sec.mc_samples.unwrap_or(glmm_design::criteria::DEFAULT_MC_SAMPLES);
    if samples < 2 {
        return Err(CliError::field("profile.mc_samples", "must be at least 2"));
    }
    if let Some(w) = sec.smoothing_window {
        if w % 2 == 0 {
            return Err(CliError::field("profile.smoothing_window", "must be odd"));
        }
    }
    let rule = QuadratureRule::adaptive(theta.sigma2);
    let quasi = InfoEvaluator::new(Method::QuasiDirect);
    let ts: Vec<f64> = (0..n_t).map(|i| sec.t_min + i as f64 * sec.t_step).collect();
    // Common random numbers: every t uses the same Monte Carlo stream.
    let mc: Vec<CliResult<(f64, f64, f64)>> = ts
        .par_iter()
        .map(|&t| {
            let block = profile_block(t);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ MC_SEED_OFFSET);
            let info = info_mc(&spec, &block, &theta, samples, &rule, &mut rng)?;
            let ld = logdet_psd(&info.matrix);
            let se = info.meta.std_errors.as_ref().map(|s| logdet_std_error(&info.matrix, s)).unwrap_or(f64::NAN);
            let q = logdet_psd(&quasi.block_info(&spec, &block, &theta)?.matrix);
            Ok((ld, se, q))
        })
        .collect();
    let mc = mc.into_iter().collect::<CliResult<Vec<_>>>()?;
    let max_ld = mc.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    if !max_ld.is_finite() {
        return Err(CliError::Infeasible("every profile point has singular information".into()));
    }
    let p = spec.p() as f64;
    let smoothed: Vec<Option<f64>> = match sec.smoothing_window {
        Some(w) if w > 1 => {
            let h = w / 2;
            (0..n_t)
                .map(|i| {
                    let lo = i.saturating_sub(h);
                    let hi = (i + h).min(n_t - 1);
                    Some(mc[lo..=hi].iter().map(|r| r.0).sum::<f64>() / (hi - lo + 1) as f64)
                })
                .collect()
        }
        _ => vec![None; n_t],
    };
    let rows: Vec<ProfileRow> = ts
        .iter()
        .zip(&mc)
        .zip(&smoothed)
        .map(|((&t, &(ld, se, q)), &sm)| ProfileRow {
            t,
            log_det: ld,
            std_error: se,
            efficiency: ((ld - max_ld) / p).exp(),
            smoothed_log_det: sm,
            quasi_log_det: q,
        })
        .collect();
    let quasi_optimum = maximize_1d(|t| quasi_profile(&spec, &theta, &quasi, t), -1.0, 1.0);
    let path = cfg.resolve(sec.output.as_deref().unwrap_or("profile.csv"));
    write_csv(&path, &rows)?;
    let best = rows.iter().fold(&rows[0], |b, r| if r.log_det > b.log_det { r } else { b });
    let summary = format!(
        "profile over {} values of t with {samples} samples each\nMonte Carlo argmax t = {}\nquasi-likelihood optimum t = {quasi_optimum:.5}\nwrote {}\n",
        rows.len(),
        best.t,
        path.display()
    );
    Ok(ProfileOutcome { rows, quasi_optimum, path, summary })
}

fn quasi_profile(spec: &ModelSpec, theta: &ParameterPoint, ev: &InfoEvaluator, t: f64) -> f64 {
    ev.block_info(spec, &profile_block(t), theta).map(|i| logdet_psd(&i.matrix)).unwrap_or(f64::NEG_INFINITY)
}

/// Grid scan followed by golden-section refinement around the best node.
fn maximize_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const N: usize = 200;
    let h = (hi - lo) / N as f64;
    let best = (0..=N).map(|i| lo + i as f64 * h).fold((lo, f64::NEG_INFINITY), |(bx, bf), x| {
        let v = f(x);
        if v > bf { (x, v) } else { (bx, bf) }
    });
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
