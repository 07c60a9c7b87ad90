use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const PAIR: &str = "[target]\nkind = \"symmetric_pair\"\ncenter = 2.0\nvariance = 0.25\n";

fn scoregen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scoregen")).current_dir(dir).args(args).output().expect("binary runs")
}

/// Writes `config.toml` into a fresh directory and runs `command` with it.
fn run(command: &str, config: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    let mut args = vec![command, "--config", "config.toml", "--out", "out"];
    args.extend_from_slice(extra);
    let out = scoregen(dir.path(), &args);
    (dir, out)
}

fn csv_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn rows(dir: &Path, name: &str) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("out").join(name)).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const SMOKE: &[(&str, &str)] = &[
    ("rates", "[rates]\nn = [64, 128]\nsigma = [0.5]\n"),
    ("sample", "[sample]\nn_paths = 500\nsteps = 50\n"),
    ("build-net", "[build_net]\nbuilder = \"square\"\n"),
    ("train", "[train]\nn_samples = 64\nhidden = [8]\niterations = 50\neval_every = 25\n"),
    ("sweep-kl", "[sweep_kl]\nn = [64, 128]\npoints = 401\n"),
    ("sweep-truncation", "[sweep_truncation]\nsigma = [0.1, 0.2]\npoints = 801\n"),
    ("girsanov-check", "[girsanov]\nbias = [0.1]\nn_paths = 500\nsteps = 50\n"),
];

#[test]
fn every_command_runs_and_repeats_byte_for_byte() {
    for (command, section) in SMOKE {
        let config = format!("seeds = [0, 1]\n{PAIR}\n{section}");
        let (a, out) = run(command, &config, &[]);
        assert_ok(&out);
        let record: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("out/run.json")).unwrap()).unwrap();
        assert_eq!(record["command"], *command);
        assert!(a.path().join("out/resolved_config.toml").exists());
        let first = csv_files(a.path());
        assert!(!first.is_empty(), "{command} wrote no tables");
        let (b, out) = run(command, &config, &[]);
        assert_ok(&out);
        assert_eq!(first, csv_files(b.path()), "{command} is not reproducible");
    }
}

#[test]
fn seed_offset_changes_results_and_is_recorded() {
    let config = format!("{PAIR}\n[sweep_kl]\nn = [64, 128]\npoints = 401\n");
    let (a, _) = run("sweep-kl", &config, &[]);
    let (b, out) = run("sweep-kl", &config, &["--seed-offset", "7"]);
    assert_ok(&out);
    assert_ne!(csv_files(a.path()), csv_files(b.path()));
    let record: serde_json::Value = serde_json::from_slice(&std::fs::read(b.path().join("out/run.json")).unwrap()).unwrap();
    assert_eq!(record["seed_offset"], 7);
}

#[test]
fn thread_count_does_not_change_results() {
    let config = format!("seeds = [0, 1, 2]\n{PAIR}\n[rates]\nn = [64, 128]\nsigma = [0.5]\n");
    let (a, _) = run("rates", &config, &["--threads", "1"]);
    let (b, out) = run("rates", &config, &["--threads", "3"]);
    assert_ok(&out);
    assert_eq!(csv_files(a.path()), csv_files(b.path()));
}

#[test]
fn a_single_rates_cell_has_no_summary() {
    let (dir, out) = run("rates", &format!("{PAIR}\n[rates]\nn = [64]\nsigma = [0.5]\n"), &[]);
    assert_ok(&out);
    let rows = rows(dir.path(), "rates.csv");
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "cell");
}

#[test]
fn invalid_configuration_exits_2_listing_every_problem() {
    let (_, out) = run("rates", "seeds = []\nthreads = 0\n[rates]\nn = []\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["seeds", "threads", "rates.n"] {
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn missing_configuration_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = scoregen(dir.path(), &["rates", "--config", "absent.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn empty_sample_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("samples.csv"), "x0\r\n").unwrap();
    let config = "[build_net]\nbuilder = \"kde\"\nsamples_file = \"samples.csv\"\n";
    std::fs::write(dir.path().join("config.toml"), config).unwrap();
    let out = scoregen(dir.path(), &["build-net", "--config", "config.toml", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn parameter_cap_is_enforced() {
    let (_, out) = run("build-net", "[build_net]\nbuilder = \"square\"\nwidth = 8\ndepth = 4\n", &["--param-cap", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_net_accepts_its_certificate_and_rejects_a_tighter_tolerance() {
    let (dir, out) = run("build-net", "[build_net]\nbuilder = \"square\"\nwidth = 4\ndepth = 3\n", &[]);
    assert_ok(&out);
    let verify = |tol: f64| {
        let config = format!(
            "[verify_net]\nnetwork = \"out/network.json\"\ntolerance = {tol}\n[verify_net.reference]\nbuilder = \"square\"\nwidth = 4\ndepth = 3\n"
        );
        std::fs::write(dir.path().join("verify.toml"), config).unwrap();
        scoregen(dir.path(), &["verify-net", "--config", "verify.toml", "--out", "verify"])
    };
    assert_ok(&verify(0.015625));
    assert_eq!(verify(1e-9).status.code(), Some(4));
}
