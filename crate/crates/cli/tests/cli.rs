use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_state.txt")
}

fn finite_config(extra: &str) -> String {
    format!(
        "model = finite\nmodel.path = {}\nscheme = MCR\nn = 2\nparticles = 200\nseed = 11\n{extra}",
        fixture().display()
    )
}

fn ou_config(extra: &str) -> String {
    format!("model = ou\nscheme = W\nn = 3\nparticles = 20\nseed = 12\nobservations.seed = 5\n{extra}")
}

/// Writes `config` into a fresh directory and runs `args` against it.
fn invoke(config: &str, args: &[&str], threads: &str) -> (TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.cfg");
    fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_coupled-smc"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out.csv"))
        .env("COUPLED_SMC_THREADS", threads)
        .output()
        .unwrap();
    (dir, out)
}

fn read(dir: &TempDir, name: &str) -> String {
    fs::read_to_string(dir.path().join(name)).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_emits_one_fourteen_column_row() {
    let (dir, out) = invoke(&finite_config(""), &["run"], "1");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = read(&dir, "out.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "scheme,model,l,n,N,replicate,seed,pred_diff,filt_diff,mean_sq_dist,decouple_frac,ess_f,ess_c,wall_ms"
    );
    assert_eq!(lines[1].split(',').count(), 14);
    assert!(lines[1].starts_with("MCR,finite,0,2,200,0,"));
    assert!(!csv.contains('\r'));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let cfg = finite_config("replicates = 8\n");
    let (a, _) = invoke(&cfg, &["run"], "1");
    let (b, _) = invoke(&cfg, &["run"], "3");
    let (c, _) = invoke(&cfg, &["--threads", "2", "run"], "1");
    assert_eq!(read(&a, "out.csv"), read(&b, "out.csv"));
    assert_eq!(read(&a, "out.csv"), read(&c, "out.csv"));
}

#[test]
fn level_sweep_row_accounting() {
    let (dir, out) = invoke(
        &ou_config("replicates = 100\nsweep.levels = 1,2,3,4,5\n"),
        &["sweep"],
        "2",
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(read(&dir, "out.replicates.csv").lines().count(), 1 + 500);
    let summary = read(&dir, "out.csv");
    assert_eq!(summary.lines().filter(|l| l.starts_with("point,")).count(), 5);
    assert_eq!(summary.lines().filter(|l| l.starts_with("slope,")).count(), 1);
}

#[test]
fn horizon_sweep_on_a_finite_model() {
    let (dir, out) = invoke(
        &finite_config("replicates = 10\nsweep.horizons = 1,2,3\n"),
        &["sweep"],
        "1",
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        read(&dir, "out.csv")
            .lines()
            .filter(|l| l.starts_with("point,"))
            .count(),
        3
    );
}

#[test]
fn manifest_records_the_observation_hash() {
    let (dir, out) = invoke(&ou_config(""), &["run"], "1");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir, "out.manifest.json")).unwrap();
    let obs = &manifest["observations"];
    assert_eq!(obs["source"], "synthesized");
    assert_eq!(obs["seed"], 5);
    assert_eq!(obs["count"], 4);
    let written = read(&dir, "out.observations.txt");
    let digest: String = Sha256::digest(written.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(obs["sha256"], digest);

    // Replaying from the written file reproduces the run.
    let replay = ou_config("").replace("observations.seed = 5", "observations.file = replay.txt");
    let dir2 = tempfile::tempdir().unwrap();
    fs::write(dir2.path().join("replay.txt"), &written).unwrap();
    fs::write(dir2.path().join("exp.cfg"), replay).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_coupled-smc"))
        .args(["run", "--config"])
        .arg(dir2.path().join("exp.cfg"))
        .arg("--out")
        .arg(dir2.path().join("out.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(&dir, "out.csv"), read(&dir2, "out.csv"));
    let manifest2: serde_json::Value = serde_json::from_str(&read(&dir2, "out.manifest.json")).unwrap();
    assert_eq!(manifest2["observations"]["sha256"], digest);
}

#[test]
fn mlmc_reports_every_level() {
    let (dir, out) = invoke(&ou_config("mlmc.epsilon = 0.25\n"), &["mlmc"], "1");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = read(&dir, "out.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "row,l,N_l,value,cost");
    assert_eq!(lines.iter().filter(|l| l.starts_with("term,")).count(), 3);
    let estimate: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(estimate[0], "estimate");
    let terms: f64 = lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((terms - estimate[3].parse::<f64>().unwrap()).abs() < 1e-12);
}

#[test]
fn clt_check_passes_and_can_fail() {
    let cfg = finite_config("replicates = 300\n").replace("particles = 200", "particles = 2000");
    let (dir, out) = invoke(&cfg, &["clt-check"], "1");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = read(&dir, "out.csv");
    assert_eq!(csv.lines().filter(|l| l.starts_with("error,")).count(), 300);
    assert_eq!(csv.lines().filter(|l| l.starts_with("summary,")).count(), 1);

    let (_, out) = invoke(&format!("{cfg}clt.tolerance = 1e-9\n"), &["clt-check"], "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("assertion failed"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let (_, out) = invoke(&finite_config("particle = 3\n"), &["run"], "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 7"), "{}", stderr(&out));

    let (_, out) = invoke(
        "model = diffusion\ndiffusion.dim = 2\nscheme = W\nn = 1\nparticles = 5\nseed = 1\n",
        &["run"],
        "1",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid scheme"), "{}", stderr(&out));

    let (_, out) = invoke(
        &ou_config("observations.count = 4\n").replace("n = 3", "n = 9"),
        &["run"],
        "1",
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("observations"), "{}", stderr(&out));

    let (_, out) = invoke(&ou_config(""), &["clt-check"], "1");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn multidimensional_diffusion_runs_coupled_index_resampling() {
    let cfg = "model = diffusion\ndiffusion.dim = 2\ndiffusion.sigma = 0.5\nscheme = MCR\nlevel = 3\nn = 2\nparticles = 50\nreplicates = 2\nseed = 4\n";
    let (dir, out) = invoke(cfg, &["run"], "1");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(read(&dir, "out.csv").lines().count(), 3);
}
