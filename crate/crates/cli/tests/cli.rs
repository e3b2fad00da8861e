use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mkolmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkolmo")).args(args).env_remove("MKOLMO_SEED").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"
id = "small"
kind = "flat_identity"

[model]
name = "ou_bounded"

[study]
pairs = 3
functionals = ["linear", "tanh_of_linear"]
"#;

#[test]
fn list_presets_names_builtins() {
    let o = mkolmo(&["list-presets"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["ou_bounded", "linear_gauss", "tanh_of_second_moment", "tanh_of_linear", "mix8", "x2"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn version_prints_package_version() {
    let o = mkolmo(&["version"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_model_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("ou_bounded", "no_such_model"));
    let o = mkolmo(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_model"), "{}", stderr(&o));
}

#[test]
fn parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "id = \"x\"\nkind = \"flat_identity\"\n[model]\nname = \n");
    let o = mkolmo(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:4:"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[mc]\nreplicaz = 3\n"));
    let o = mkolmo(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicaz"), "{}", stderr(&o));
}

#[test]
fn overrides_and_environment_set_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let o =
        mkolmo(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "--study.pairs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["seed"], 7);
    assert_eq!(s["results"]["pairs"], 2);
    assert!(s["config"].as_str().unwrap().contains("seed = 7"));

    let out2 = dir.path().join("o2");
    let o = Command::new(env!("CARGO_BIN_EXE_mkolmo"))
        .args(["run", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()])
        .env("MKOLMO_SEED", "11")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(summary(&out2)["seed"], 11);
}

#[test]
fn failed_assertion_exits_one_and_names_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[assertions]\ncriterion = \"1\"\ntol = -1.0\n"));
    let o = mkolmo(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("criterion 1") && err.contains("flat_identity[linear]"), "{err}");
    assert_eq!(summary(&dir.path().join("o"))["passed"], false);
}

#[test]
fn json_flag_prints_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = mkolmo(&["run", cfg.to_str().unwrap(), "--json", "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "flat_identity");
    assert_eq!(v["passed"], true);
}

#[test]
fn seeded_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("examples/pde_residual.toml");
    let mut files = Vec::new();
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        let o = Command::new(env!("CARGO_BIN_EXE_mkolmo"))
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "--mc.replicas", "8"])
            .env("RAYON_NUM_THREADS", threads)
            .env_remove("MKOLMO_SEED")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        files
            .push((std::fs::read(out.join("replicas.csv")).unwrap(), std::fs::read(out.join("summary.json")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn example_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries: Vec<_> =
        std::fs::read_dir(configs().join("examples")).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    assert!(entries.len() >= 8);
    for p in entries {
        let out = dir.path().join(p.file_stem().unwrap());
        let o = mkolmo(&["run", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}{}", p.display(), String::from_utf8_lossy(&o.stdout), stderr(&o));
        assert!(
            out.join("summary.json").exists() && out.join("replicas.csv").exists() && out.join("timing.json").exists()
        );
    }
}

#[test]
fn oracle_crosscheck_writes_a_grid_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = configs().join("examples/oracle_crosscheck.toml");
    let o = mkolmo(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--study.paths", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = std::fs::read_to_string(out.join("snapshots/path0_terminal.csv")).unwrap();
    assert!(snap.lines().count() > 100);
}
