use std::fs;
use std::path::Path;
use std::process::Command;

use symrm_cli::config::{ExperimentConfig, Pipeline};
use symrm_cli::output::RunManifest;

fn symrm(root: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_symrm"));
    c.env("SYMRM_OUTPUT_ROOT", root);
    c
}

fn write_config(dir: &Path, c: &ExperimentConfig) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, c.to_toml()).unwrap();
    p
}

fn small(pipeline: Pipeline) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(pipeline);
    match pipeline {
        Pipeline::DesignCheck => c.ensemble.n_e = 64,
        Pipeline::Purity => c.ensemble.n_e = 64,
        Pipeline::Shadows => c.ensemble.n_s = Some(1024),
        Pipeline::Eht => c.ensemble.n_e = 8,
        Pipeline::GapScan => {
            c.ensemble.n_e = 6;
            c.repetitions = 2;
            c.eht.epsilons = vec![0.1, 0.5];
            c.eht.starts = 2;
            c.eht.max_evals = 300;
        }
    }
    c
}

#[test]
fn every_pipeline_runs_and_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    for p in [Pipeline::DesignCheck, Pipeline::Purity, Pipeline::Shadows, Pipeline::Eht, Pipeline::GapScan] {
        let mut c = small(p);
        c.output_dir = Some(p.name().into());
        let cfg = write_config(tmp.path(), &c);
        let st = symrm(tmp.path()).args([p.name(), "--config"]).arg(&cfg).status().unwrap();
        assert!(st.success(), "{p:?}");
        let dir = tmp.path().join(p.name());
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.config_hash, c.hash());
        assert!(m.files.len() >= 3);
        for f in &m.files {
            assert_eq!(fs::metadata(dir.join(&f.path)).unwrap().len(), f.bytes);
        }
        let partial = fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().to_string_lossy().ends_with(".partial"));
        assert_eq!(partial.count(), 0);
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small(Pipeline::Purity);
    let cfg = write_config(tmp.path(), &c);
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let st = symrm(tmp.path()).args(["purity", "--config"]).arg(&cfg).args(["-o", out, "--threads", threads]).status().unwrap();
        assert!(st.success());
    }
    for f in ["purities.csv", "entropy.csv", "decomposition.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let st = symrm(tmp.path()).args(["purity", "--n-e", "16", "-o", "p"]).status().unwrap();
    assert!(st.success());
    let text = fs::read_to_string(tmp.path().join("p/purities.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "repetition,sector,d_s,k,estimate,exact");
    let text = fs::read_to_string(tmp.path().join("p/entropy.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "repetition,sector,p_s,p_s_exact,s_vn,s_vn_err,s_vn_exact");
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "pipeline = \"purity\"\nmaster_seed = \"x\"\n").unwrap();
    let st = symrm(tmp.path()).args(["purity", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
    // Valid syntax, invalid content.
    let st = symrm(tmp.path()).args(["purity", "--shots", "2"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    // Pipeline mismatch.
    let cfg = write_config(tmp.path(), &small(Pipeline::Eht));
    let st = symrm(tmp.path()).args(["purity", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn resource_cap_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(Pipeline::Purity);
    c.limits.max_block_dim = 4;
    let cfg = write_config(tmp.path(), &c);
    let st = symrm(tmp.path()).args(["purity", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn validate_reports_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(Pipeline::DesignCheck);
    c.ensemble.layers = Some(4);
    let cfg = write_config(tmp.path(), &c);
    let out = symrm(tmp.path()).args(["validate"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"level\":\"warning\"") && text.contains("ensemble.layers"), "{text}");

    let mut c = small(Pipeline::Purity);
    c.ensemble.shots = Some(2);
    let cfg = write_config(tmp.path(), &c);
    let out = symrm(tmp.path()).args(["validate"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().contains("ensemble.shots"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small(Pipeline::Purity));
    let out = symrm(tmp.path())
        .args(["purity", "--config"])
        .arg(&cfg)
        .args(["--seed", "99", "--n-e", "7", "--shots", "100", "--print-config"])
        .output()
        .unwrap();
    let c = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((c.master_seed, c.ensemble.n_e, c.ensemble.shots), (99, 7, Some(100)));
}

#[test]
fn default_output_directory_lives_under_the_root() {
    let tmp = tempfile::tempdir().unwrap();
    let st = symrm(tmp.path()).args(["shadows", "--n-s", "64"]).status().unwrap();
    assert!(st.success());
    let dirs: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].starts_with("shadows-"), "{dirs:?}");
}
