use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kdv-galerkin"))
}

#[test]
fn bad_experiment_name_is_a_config_error() {
    let out = bin().args(["sweep", "--experiment", "three_soliton"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "name = one_soliton\nbogus = 3\n").unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn run_then_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "# short run\nname = one_soliton\nm_list = 16, 32\nt_final = 0.1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = bin().arg("run").arg(&cfg).arg("--output-dir").arg(&out_dir).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["table.csv", "steps.csv", "run.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let table = bin().arg("table").arg(&out_dir).output().unwrap();
    assert!(table.status.success());
    let text = String::from_utf8_lossy(&table.stdout);
    assert!(text.contains("16") && text.contains("32"), "{text}");
}

#[test]
fn verify_passes() {
    let out = bin().args(["verify", "--seed", "5"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
