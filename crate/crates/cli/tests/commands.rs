use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use glmm_design_cli::commands::{cmd_compare, cmd_eval, cmd_find, cmd_profile, cmd_train_surrogate};
use glmm_design_cli::design_file::DesignFile;
use glmm_design_cli::CliError;

const MODEL: &str = "[model]\nlink = \"logit\"\nterms = [\"1\", \"x1\", \"x2\"]\nm = 2\n";

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn find_config(extra: &str) -> String {
    format!(
        "seed = 3\n{MODEL}[parameters]\nbeta_att = [0.0, 1.0, 1.0]\nsigma2 = 2.0\n\
         [method]\nname = \"adj_mql\"\n[optimizer]\nn_starts = 4\n{extra}"
    )
}

#[test]
fn find_writes_a_readable_design_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &find_config("[output]\ndesign = \"out/d.json\"\n"));
    let out = cmd_find(&cfg).unwrap();
    assert_eq!(out.path, dir.path().join("out/d.json"));
    let back = DesignFile::read(&out.path).unwrap();
    assert_eq!(back, out.file);
    assert!(back.created_unix_secs.is_some());
    assert!(back.design.len() <= 7);
    assert_eq!(back.search.n_starts, 4);
    assert!(out.summary.contains("support block"));
}

#[test]
fn eval_of_a_design_against_itself_is_fully_efficient() {
    let dir = tempfile::tempdir().unwrap();
    let body = find_config(
        "[output]\ndesign = \"d.json\"\n[eval]\nmethods = [\"naive\", \"adj_mql\", { name = \"gee\", rho = 0.3 }]\n\
         reference = \"d.json\"\nn_blocks = 50\noutput = \"eval.csv\"\nerrors_output = \"errors.csv\"\n",
    );
    let cfg = write(dir.path(), "run.toml", &body);
    let found = cmd_find(&cfg).unwrap();
    let ev = cmd_eval(&found.path, &cfg).unwrap();
    assert!(ev.stored_objective_error < 1e-10, "{}", ev.stored_objective_error);
    assert_eq!(ev.rows.len(), 3);
    for r in &ev.rows {
        assert!((r.efficiency.unwrap() - 1.0).abs() < 1e-12);
    }
    assert_eq!(ev.rows[1].objective, found.file.objective);
    let errors = ev.errors.unwrap();
    assert_eq!(errors.len(), 3);
    assert!(errors.iter().all(|e| e.relative_error > 0.0 && e.relative_error.is_finite()));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let csv = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn eval_rejects_a_design_for_another_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &find_config(""));
    let found = cmd_find(&cfg).unwrap();
    let other = write(dir.path(), "other.toml", &find_config("").replace("m = 2", "m = 3"));
    let err = cmd_eval(&found.path, &other).err().unwrap();
    assert!(matches!(err, CliError::Validation(ref m) if m.contains("model hash")), "{err}");
}

#[test]
fn compare_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 1\n{MODEL}[compare]\nbeta_att = [[0.0, 1.0, 1.0]]\nsigma2 = [1.0, 5.0]\n\
         methods = [\"adj_mql\", \"gee\"]\nrho_grid = [0.3, 0.5]\nn_starts = 3\noutput = \"cmp.csv\"\n"
    );
    let cfg = write(dir.path(), "cmp.toml", &body);
    let out = cmd_compare(&cfg).unwrap();
    // Per scenario: the reference row, adj_mql, and gee at two values of ρ.
    assert_eq!(out.rows.len(), 8);
    assert!(out.rows.iter().all(|r| r.status == "ok"));
    assert!(out.rows.iter().all(|r| r.efficiency.unwrap() <= 1.0 + 1e-6));
    let csv = fs::read_to_string(&out.path).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("beta_att,sigma2,method,rho,efficiency"));
    let again = cmd_compare(&cfg).unwrap();
    let effs = |o: &glmm_design_cli::commands::CompareOutcome| o.rows.iter().map(|r| r.efficiency).collect::<Vec<_>>();
    assert_eq!(effs(&out), effs(&again));
}

#[test]
fn compare_needs_a_rho_grid_for_gee() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL}[compare]\nbeta_att = [[0.0, 1.0, 1.0]]\nsigma2 = [1.0]\nmethods = [\"gee\"]\n");
    let err = cmd_compare(&write(dir.path(), "c.toml", &body)).err().unwrap();
    assert!(err.to_string().contains("compare.rho_grid"), "{err}");
}

#[test]
fn train_surrogate_reports_holdout_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("seed = 4\n{MODEL}[surrogate]\nsigma2 = 2.0\nn_train = 400\noutput = \"s.json\"\n");
    let out = cmd_train_surrogate(&write(dir.path(), "s.toml", &body)).unwrap();
    assert_eq!(out.holdout_rmse.len(), 3);
    assert!(out.path.exists());
    for (r, g) in out.holdout_rmse.iter().zip(&out.holdout_range) {
        assert!(r / g < 0.1, "{r} of {g}");
    }

    // The bundle drives the interpolated method through `find`.
    let find = format!(
        "{MODEL}[parameters]\nbeta_att = [0.0, 1.0, 1.0]\nsigma2 = 2.0\n\
         [method]\nname = \"interpolated\"\nbundle = \"s.json\"\n[optimizer]\nn_starts = 2\n"
    );
    let found = cmd_find(&write(dir.path(), "f.toml", &find)).unwrap();
    assert_eq!(found.file.method.bundle.as_deref(), Some("s.json"));
}

#[test]
fn grid_surrogate_for_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL}[surrogate]\nsigma2 = 1.0\nn_train = 0\nkind = \"grid\"\nresolution = 21\neta_bound = 8.0\n");
    let out = cmd_train_surrogate(&write(dir.path(), "g.toml", &body)).unwrap();
    assert!(out.holdout_rmse.is_empty());
    assert!(dir.path().join("surrogate.json").exists());
}

#[test]
fn profile_rows_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[model]\nlink = \"log\"\nterms = [\"1\", \"x1\", \"x2\"]\nm = 3\n\
                [parameters]\nbeta = [3.0, 1.0, 2.0]\nsigma2 = 0.05\n\
                [profile]\nt_min = -0.2\nt_max = 0.0\nt_step = 0.05\nmc_samples = 500\nsmoothing_window = 3\n";
    let out = cmd_profile(&write(dir.path(), "p.toml", body)).unwrap();
    assert_eq!(out.rows.len(), 5);
    assert!(out.rows.iter().all(|r| r.efficiency <= 1.0 && r.std_error > 0.0 && r.smoothed_log_det.is_some()));
    assert!((out.quasi_optimum + 0.095).abs() < 0.005, "{}", out.quasi_optimum);
    assert_eq!(fs::read_to_string(&out.path).unwrap().lines().count(), 6);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glmm-design"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", &find_config("[output]\nsummary = false\n"));
    let st = binary().arg("find").arg(&ok).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(st.stdout.is_empty());

    let bad = write(dir.path(), "bad.toml", &find_config("[optimizer.extra]\nx = 1\n"));
    let st = binary().arg("find").arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("error"));

    let st = binary().arg("find").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(st.status.code(), Some(3));

    let st = binary().arg("eval").arg(dir.path().join("design.json")).arg(&ok).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn bayes_find_with_prior_points() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 5\n{MODEL}[parameters.prior]\nbeta_bounds = [[-0.5, 0.5], [0.5, 1.5], [0.5, 1.5]]\nsigma2 = 1.0\nn_points = 4\n\
         [method]\nname = \"adj_mql\"\n[optimizer]\nn_starts = 3\n"
    );
    let out = cmd_find(&write(dir.path(), "b.toml", &body)).unwrap();
    match &out.file.target {
        glmm_design::optim::Target::Bayes(pts) => assert_eq!(pts.len(), 4),
        other => panic!("expected a Bayesian target, got {other:?}"),
    }
}
