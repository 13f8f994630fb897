//! End-to-end tests of the installed binary: exit codes, output files,
//! and manifest-based reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dpbeamsim")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpbeamsim-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("config.txt");
    fs::write(&path, text).unwrap();
    path
}

const SMALL_CHANNEL: &str = "NumPackets = 600\nNumSubcarriers = 8\nNumPaths = 3\n\n[adversary]\nWindow = 128\nFftLen = 128\nHop = 64\n";

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown subcommand"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tmp_dir("badcfg");
    let cfg = write_cfg(&dir, "NumTx = not-a-number\n");
    let out = run(&["ber", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NumTx"));

    let cfg = write_cfg(&dir, "NoSuchKey = 1\n");
    let out = run(&["ber", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoSuchKey"));
}

#[test]
fn budget_writes_table_and_manifest() {
    let dir = tmp_dir("budget");
    let out_dir = dir.join("out");
    let out = run(&["budget", "--out", out_dir.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = fs::read_to_string(out_dir.join("budget.csv")).unwrap();
    assert!(csv.starts_with("k,eps_max,sqrt_term,linear_term,eps_total\n"));
    assert_eq!(csv.lines().count(), 6);
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# subcommand = budget"));
    assert!(manifest.contains("Seed = 9"));
}

#[test]
fn attack_run_is_reproducible_from_manifest() {
    let dir = tmp_dir("attack");
    let cfg = write_cfg(&dir, SMALL_CHANNEL);
    let out1 = dir.join("o1");
    let out2 = dir.join("o2");
    let st = run(&[
        "attack",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(0), "{st:?}");
    let st = run(&[
        "attack",
        "--config",
        out1.join("manifest.txt").to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(0));
    let a = fs::read(out1.join("attack.csv")).unwrap();
    let b = fs::read(out2.join("attack.csv")).unwrap();
    assert_eq!(a, b, "manifest rerun must be byte-identical");
    let ma = fs::read(out1.join("manifest.txt")).unwrap();
    let mb = fs::read(out2.join("manifest.txt")).unwrap();
    assert_eq!(ma, mb);

    let csv = String::from_utf8(a).unwrap();
    assert!(csv.starts_with("scheme,t,f_d_hz,v_mps,v_true_mps\n"));
    for label in ["none", "det", "dpsq"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{label},"))));
    }
}

#[test]
fn serial_and_parallel_runs_agree() {
    let dir = tmp_dir("threads");
    let cfg = write_cfg(&dir, SMALL_CHANNEL);
    let out1 = dir.join("par");
    let out2 = dir.join("ser");
    assert_eq!(
        run(&[
            "attack",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out1.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        run(&[
            "attack",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
            "--threads",
            "1",
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        fs::read(out1.join("attack.csv")).unwrap(),
        fs::read(out2.join("attack.csv")).unwrap()
    );
}

#[test]
fn spectrogram_has_axis_headers() {
    let dir = tmp_dir("spec");
    let cfg = write_cfg(&dir, SMALL_CHANNEL);
    let out_dir = dir.join("out");
    let st = run(&[
        "spectrogram",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(0), "{st:?}");
    let csv = fs::read_to_string(out_dir.join("spectrogram.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("time_s\\freq_hz,"));
    let n_cols = header.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), n_cols);
    }
}

#[test]
fn reduced_validate_passes_and_reports() {
    let dir = tmp_dir("validate");
    let cfg = write_cfg(
        &dir,
        "[validate]\nMseDraws = 200000\nRatioPairs = 5\nRatioDraws = 20000\nDistortionChannels = 400\nLsTrials = 20000\n",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    assert!(stdout.contains("all 23 checks passed"), "stdout: {stdout}");
    let csv = fs::read_to_string(out_dir.join("validate.csv")).unwrap();
    assert!(csv.starts_with("check,measured,bound,pass,detail\n"));
}

#[test]
fn ber_and_gain_and_constellation_write_results() {
    let dir = tmp_dir("linkcmds");
    let cfg = write_cfg(
        &dir,
        "[link]\nBitsPerPoint = 20000\nSnrDbList = 10\nConstellationSymbols = 256\n\n[gain]\nRealizations = 200\nShapes = 2x1\n",
    );
    let out_dir = dir.join("out");
    for sub in ["ber", "gain", "constellation"] {
        let st = run(&[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.join(sub).to_str().unwrap(),
        ]);
        assert_eq!(st.status.code(), Some(0), "{sub}: {st:?}");
    }
    let ber = fs::read_to_string(out_dir.join("ber/ber.csv")).unwrap();
    assert!(ber.starts_with("scheme,snr_db,ber,stderr,n_bits,n_errors\n"));
    assert_eq!(ber.lines().count(), 4);
    let gain = fs::read_to_string(out_dir.join("gain/gain.csv")).unwrap();
    assert_eq!(gain.lines().count(), 3);
    let con = fs::read_to_string(out_dir.join("constellation/constellation.csv")).unwrap();
    assert_eq!(con.lines().count(), 1 + 3 * 256);
}
