//! Subcommand implementations: each runs one experiment, writes CSV
//! results plus a manifest into the output directory, and reports
//! failures upward.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dpbeamsim_core::adversary::{run_attack, spectrogram, AttackContext};
use dpbeamsim_core::link::{constellation_dump, gain_samples, median, simulate_ber, Scheme};
use dpbeamsim_core::validate;

use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Scheme label used in attack outputs, where the unquantized baseline is
/// conventionally called `none`.
fn attack_label(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::PerfectSvd => "none",
        other => other.label(),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_manifest(
    dir: &Path,
    subcommand: &str,
    cfg: &ExperimentConfig,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    let _ = writeln!(out, "# dpbeamsim {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# subcommand = {subcommand}");
    let _ = writeln!(out, "# seed = {}", cfg.seed());
    let _ = writeln!(
        out,
        "# reproduce: dpbeamsim {subcommand} --config manifest.txt --out <dir>"
    );
    out.push_str(&cfg.render());
    write_file(dir, "manifest.txt", &out)
}

pub fn run_ber(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let table = simulate_ber(&cfg.link_config(), &cfg.channel)?;
    let mut csv = String::from("scheme,snr_db,ber,stderr,n_bits,n_errors\n");
    for p in &table {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            p.scheme.label(),
            p.snr_db,
            p.ber,
            p.stderr,
            p.bits,
            p.errors
        );
    }
    write_file(out_dir, "ber.csv", &csv)?;
    write_manifest(out_dir, "ber", cfg)
}

pub fn run_constellation(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let dump = constellation_dump(
        &cfg.link_config(),
        &cfg.channel,
        cfg.constellation_snr_db,
        cfg.constellation_symbols,
    )?;
    let mut csv = String::from("re,im,scheme\n");
    for (scheme, points) in &dump {
        for p in points {
            let _ = writeln!(csv, "{},{},{}", p.re, p.im, scheme.label());
        }
    }
    write_file(out_dir, "constellation.csv", &csv)?;
    write_manifest(out_dir, "constellation", cfg)
}

pub fn run_gain(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let mut csv = String::from("n_tx,n_rx,scheme,mean,median,p05,min,max\n");
    for &(n_tx, n_rx) in &cfg.gain_shapes {
        let (det, dp) = gain_samples(&cfg.gain_config(n_tx, n_rx), &cfg.channel)?;
        for (scheme, samples) in [(Scheme::Deterministic, &det), (Scheme::DpSq, &dp)] {
            let mut sorted = samples.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            let p05 = sorted[(sorted.len() as f64 * 0.05) as usize];
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                n_tx,
                n_rx,
                scheme.label(),
                mean,
                median(samples),
                p05,
                sorted[0],
                sorted[sorted.len() - 1]
            );
        }
    }
    write_file(out_dir, "gain.csv", &csv)?;
    write_manifest(out_dir, "gain", cfg)
}

pub fn run_attack_cmd(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let outcome = run_attack(&cfg.attack_config())?;
    let mut csv = String::from("scheme,t,f_d_hz,v_mps,v_true_mps\n");
    for (scheme, track) in &outcome.tracks {
        for i in 0..track.times.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                attack_label(*scheme),
                track.times[i],
                track.doppler_hz[i],
                track.speed_mps[i].abs(),
                outcome.true_speed_mps[i]
            );
        }
    }
    write_file(out_dir, "attack.csv", &csv)?;
    let mut summary = String::from("scheme,mean_rel_error\n");
    for (scheme, _) in &outcome.tracks {
        if let Some(err) = outcome.mean_rel_error(*scheme) {
            let _ = writeln!(summary, "{},{}", attack_label(*scheme), err);
        }
    }
    write_file(out_dir, "attack_summary.csv", &summary)?;
    write_manifest(out_dir, "attack", cfg)
}

pub fn run_spectrogram(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let attack = cfg.attack_config();
    let ctx = AttackContext::prepare(&attack)?;
    let series = ctx.effective_series(&attack, Scheme::PerfectSvd)?;
    let spec = spectrogram(
        &series,
        cfg.fft_len,
        cfg.hop,
        cfg.channel.interval_s,
    )?;
    let mut csv = String::from("time_s\\freq_hz");
    for f in &spec.freqs_hz {
        let _ = write!(csv, ",{f}");
    }
    csv.push('\n');
    for (t, row) in spec.times.iter().zip(&spec.magnitude) {
        let _ = write!(csv, "{t}");
        for m in row {
            let _ = write!(csv, ",{m}");
        }
        csv.push('\n');
    }
    write_file(out_dir, "spectrogram.csv", &csv)?;
    write_manifest(out_dir, "spectrogram", cfg)
}

pub fn run_budget(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let budget = cfg.budget();
    let mut csv = String::from("k,eps_max,sqrt_term,linear_term,eps_total\n");
    for &k in &cfg.budget_k_list {
        let (s, l) = budget.composed_eps_terms(k)?;
        let _ = writeln!(csv, "{},{},{},{},{}", k, budget.max_eps(), s, l, s + l);
    }
    write_file(out_dir, "budget.csv", &csv)?;
    write_manifest(out_dir, "budget", cfg)
}

/// Runs every analytic-versus-Monte-Carlo check; returns `Err(Validation)`
/// if any fails, after writing the itemized report.
pub fn run_validate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), HarnessError> {
    let reports = validate::run_all(&cfg.validate)?;
    let mut csv = String::from("check,measured,bound,pass,detail\n");
    let mut failures = 0usize;
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},\"{}\"",
            r.name, r.measured, r.bound, r.pass, r.detail
        );
        println!(
            "{} {}: measured {:.6e} vs bound {:.6e} ({})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.bound,
            r.detail
        );
        if !r.pass {
            failures += 1;
        }
    }
    write_file(out_dir, "validate.csv", &csv)?;
    write_manifest(out_dir, "validate", cfg)?;
    if failures > 0 {
        return Err(HarnessError::Validation(format!(
            "{failures} of {} checks failed",
            reports.len()
        )));
    }
    println!("all {} checks passed", reports.len());
    Ok(())
}
