use std::fs;

use kdv_galerkin::analytic::ExactSolution;
use kdv_galerkin::diagnostics::{error_percent, l2_difference};
use kdv_galerkin::experiments::{
    emit_outputs, read_manifest, read_table, run_experiment, self_convergence_oracle,
    ExperimentConfig, ExperimentName, OracleStatus, RunManifest,
};

fn small_one_soliton() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(ExperimentName::OneSoliton);
    cfg.m_list = vec![16, 32];
    cfg.t_final = 0.2;
    cfg.profile_times = vec![0.1, 0.2];
    cfg
}

#[test]
fn manifest_round_trips() {
    let cfg = small_one_soliton();
    let art = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&art, dir.path()).unwrap();
    let back = read_manifest(dir.path()).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back, RunManifest::new(&art));
    assert!(dir.path().join("steps.csv").exists());
    assert_eq!(fs::read_dir(dir.path().join("profiles")).unwrap().count(), 2);
    let rows = read_table(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].rate.is_none() && rows[1].rate.is_some());
}

#[test]
fn outputs_are_deterministic() {
    let cfg = small_one_soliton();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_outputs(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    emit_outputs(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    for file in ["table.csv", "steps.csv", "run.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn empty_and_single_resolution_tables() {
    let mut cfg = small_one_soliton();
    cfg.m_list.clear();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(read_table(dir.path()).unwrap().is_empty());

    cfg.m_list = vec![16];
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let rows = read_table(dir.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].e_percent.is_some() && rows[0].rate.is_none());
}

#[test]
fn oracle_is_close_to_closed_form() {
    let mut cfg = small_one_soliton();
    cfg.m_list = vec![32];
    let oracle = self_convergence_oracle(&cfg, 128).unwrap();
    assert_eq!(l2_difference(&oracle, &oracle), 0.0);
    let exact = |x: f64| cfg.initial.eval(x, cfg.t_end()).unwrap();
    let e = error_percent(exact, &oracle).unwrap();
    assert!(e <= 1.0, "{e}");
    assert!(self_convergence_oracle(&cfg, 64).is_err());
}

#[test]
fn rough_oracle_error_decreases() {
    let mut cfg = ExperimentConfig::preset(ExperimentName::RoughL2);
    cfg.m_list = vec![32, 64, 128];
    cfg.t_final = 0.05;
    cfg.profile_times = vec![0.05];
    cfg.oracle_m = Some(512);
    let art = run_experiment(&cfg).unwrap();
    assert!(matches!(art.oracle, OracleStatus::Available { m_nodes: 512 }));
    assert!(!matches!(cfg.initial, ExactSolution::OneSoliton));
    let e: Vec<f64> = art.table.iter().map(|r| r.e_percent).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}
