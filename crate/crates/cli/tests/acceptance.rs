//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nfad_core::attack::{
    estimate_click_curve, gated_blinding_run, jitter_experiment, threshold_map, ClickCurveConfig, GatedBlindingPlan,
    JitterConfig, ThresholdConfig,
};
use nfad_core::calibration::{calibrate_responsivity, table_blinding_power, TABLE_CURRENTS};
use nfad_core::detector::threshold_energy;
use nfad_core::monitor::{
    bias_voltage_trace, fast_blinding_detector, mean_current_monitor, score_alarms, MonitorConfig,
};
use nfad_core::rng::seeded;
use nfad_core::stats::{isotonic_regression, wilson_interval};
use nfad_core::{
    attack_feasibility, click_probability, count_rate_curve, min_blinding_power, run_bb84_attack,
    solve_operating_point, Bb84AttackConfig, Mode, NfadParams, Preset, Verdict, PHOTON_ENERGY,
};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within_time(start: Instant, limit: Duration) -> Outcome {
    let t = start.elapsed();
    check!(t <= limit, "took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs());
    Ok(format!("{:.1} s", t.as_secs_f64()))
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn deadtime_plateau() -> Outcome {
    let start = Instant::now();
    let p = Preset::D2.params();
    let rates = logspace(1e4, 1e9, 11);
    let pts = count_rate_curve(&rates, &p, 1.0, 11).map_err(|e| e.to_string())?;
    let cap = 1.0 / p.tau_d;
    let top = pts.last().unwrap().rate_out;
    check!((top / cap - 1.0).abs() < 0.05, "plateau {top:.0} Hz vs 1/tau_d {cap:.0} Hz");
    check!(pts.windows(2).all(|w| w[1].rate_out >= w[0].rate_out), "count rate not rising towards the plateau");
    Ok(format!(
        "plateau {:.1} kHz vs {:.1} kHz, {}",
        top / 1e3,
        cap / 1e3,
        within_time(start, Duration::from_secs(60))?
    ))
}

fn blinding_onset() -> Outcome {
    let p = Preset::D2.params();
    let p_min = min_blinding_power(&p).map_err(|e| e.to_string())?;
    let rates = [1e8, 1e9, 1e10, 3e10, 1e11];
    let pts = count_rate_curve(&rates, &p, 1.0, 12).map_err(|e| e.to_string())?;
    let base = pts[0].mean_current;
    let mut blinded = 0;
    for pt in &pts {
        if pt.rate_in * PHOTON_ENERGY > p_min {
            blinded += 1;
            check!(
                pt.rate_out == 0.0,
                "{:e} /s is above the blinding threshold but counts {} Hz",
                pt.rate_in,
                pt.rate_out
            );
            check!(pt.mean_current >= 10.0 * base, "current {:e} A < 10x {base:e} A", pt.mean_current);
        } else {
            check!(pt.rate_out > 0.0, "{:e} /s is below the blinding threshold but silent", pt.rate_in);
        }
    }
    check!(blinded > 0, "no sweep point above the blinding threshold");
    check!(
        pts.windows(2).all(|w| w[1].mean_current > w[0].mean_current),
        "mean current not increasing along the sweep"
    );
    let last = pts.last().unwrap();
    Ok(format!("zero counts above {p_min:.2e} W, current x{:.0} over the 1e8 /s point", last.mean_current / base))
}

fn table_currents() -> Outcome {
    let start = Instant::now();
    let d2 = Preset::D2;
    // calibrate from an uncalibrated 1 A/W against the 10 % / 40 kHz cell
    let (eff0, rate0, target) = TABLE_CURRENTS[0];
    let mut start_params = d2.params_at(eff0).map_err(|e| e.to_string())?;
    start_params.responsivity = 1.0;
    let s =
        calibrate_responsivity(&start_params, table_blinding_power(eff0), rate0, target).map_err(|e| e.to_string())?;
    let mut cells = Vec::new();
    for (i, &(eff, rate, reference)) in TABLE_CURRENTS.iter().enumerate() {
        let mut p = d2.params_at(eff).map_err(|e| e.to_string())?;
        p.responsivity = s;
        let plan =
            GatedBlindingPlan::periodic(rate, rate as usize, 1e-14, d2.pulse_fwhm(), table_blinding_power(eff), false);
        let run = gated_blinding_run(&plan, &p, 100 + i as u64).map_err(|e| e.to_string())?;
        let current = run.mean_current();
        check!((current / reference - 1.0).abs() <= 0.3, "{eff} / {rate} Hz: {current:e} A vs {reference:e} A");
        cells.push(current);
    }
    for k in [0, 3] {
        check!(cells[k] > cells[k + 1] && cells[k + 1] > cells[k + 2], "current not falling with trigger rate");
    }
    for k in 0..3 {
        check!(cells[k + 3] > cells[k], "current not rising with efficiency");
    }
    let worst = cells.iter().zip(TABLE_CURRENTS).map(|(c, r)| (c / r.2 - 1.0).abs()).fold(0.0, f64::max);
    Ok(format!("S = {s:.4} A/W, worst cell {:.0} %, {}", worst * 100.0, within_time(start, Duration::from_secs(120))?))
}

fn transition_monotonicity() -> Outcome {
    let configs: [(Preset, f64); 5] =
        [(Preset::D1, 0.1), (Preset::D1, 0.2), (Preset::D2, 0.1), (Preset::D3, 0.1), (Preset::D4, 0.1)];
    let z = 3.29;
    let mut worst: f64 = 0.0;
    for (ci, (preset, eff)) in configs.into_iter().enumerate() {
        let p = preset.params_at(eff).map_err(|e| e.to_string())?;
        let p_min = min_blinding_power(&p).map_err(|e| e.to_string())?;
        let cfg = ClickCurveConfig { pulse_fwhm: preset.pulse_fwhm(), ..Default::default() };
        for (pi, &pb) in logspace(1.5 * p_min, 300.0 * p_min, 5).iter().enumerate() {
            let op = solve_operating_point(pb, &p, false).map_err(|e| e.to_string())?;
            let e0 = threshold_energy(op.gain, &p);
            let energies: Vec<f64> = (0..15).map(|i| e0 * (0.7 + 0.04 * i as f64)).collect();
            let curve =
                estimate_click_curve(pb, &energies, &cfg, &p, (ci * 10 + pi) as u64).map_err(|e| e.to_string())?;
            let p_hat: Vec<f64> = curve.iter().map(|c| c.p_hat).collect();
            let fit = isotonic_regression(&p_hat, &vec![1.0; p_hat.len()]);
            check!(
                p_hat.first() < Some(&0.05) && p_hat.last() > Some(&0.95),
                "{preset}@{eff} {pb:e} W: curve does not span 0..1"
            );
            for (c, f) in curve.iter().zip(&fit) {
                let (lo, hi) = wilson_interval(c.clicks, c.trials, z);
                check!(
                    (lo..=hi).contains(f),
                    "{preset}@{eff} {pb:e} W, E = {:e} J: isotonic {f} outside [{lo}, {hi}]",
                    c.energy
                );
                worst = worst.max((f - c.p_hat).abs());
            }
        }
    }
    Ok(format!("25 curves x 15 energies at 1e4 trials, largest isotonic residual {worst:.4}"))
}

fn threshold_trends() -> Outcome {
    let cfg = ThresholdConfig::default();
    let mut entries = 0;
    for preset in [Preset::D1, Preset::D2] {
        let low = preset.params_at(0.1).map_err(|e| e.to_string())?;
        let high = preset.params_at(0.2).map_err(|e| e.to_string())?;
        let (pl, ph) = (
            min_blinding_power(&low).map_err(|e| e.to_string())?,
            min_blinding_power(&high).map_err(|e| e.to_string())?,
        );
        check!(ph > pl, "{preset}: higher bias does not need more blinding power ({ph:e} vs {pl:e} W)");
        for (k, p) in [low, high].iter().enumerate() {
            let p_min = min_blinding_power(p).map_err(|e| e.to_string())?;
            let powers = logspace(10.0 * p_min, 1000.0 * p_min, 5);
            let map = threshold_map(&powers, p, &cfg, 40 + k as u64).map_err(|e| e.to_string())?;
            for w in map.entries.windows(2) {
                check!(
                    w[1].e_never > w[0].e_never && w[1].e_always > w[0].e_always,
                    "{preset}: thresholds not rising at {:e} W",
                    w[1].p_blinding
                );
            }
            for e in &map.entries {
                check!(e.e_never <= e.e_always, "{preset}: e_never > e_always at {:e} W", e.p_blinding);
            }
            entries += map.entries.len();
        }
    }
    Ok(format!("{entries} map entries rising with power, bias ordering holds"))
}

fn jitter_contrast() -> Outcome {
    // D3 pulse width chosen so the faked-state FWHM, with 20 ps electronics, is 100.6 ps
    let d3_pulse = (100.6e-12f64.powi(2) - 20e-12f64.powi(2)).sqrt();
    let cases = [
        (Preset::D2, "faked", 33.4e-12, Preset::D2.pulse_fwhm()),
        (Preset::D2, "photon", 104.9e-12, Preset::D2.pulse_fwhm()),
        (Preset::D3, "faked", 100.6e-12, d3_pulse),
        (Preset::D3, "photon", 271.8e-12, d3_pulse),
    ];
    let mut out = Vec::new();
    for (i, (preset, kind, expect, pulse)) in cases.into_iter().enumerate() {
        let p = preset.params();
        let (p_blinding, e_pulse) = if kind == "faked" {
            let pb = 10.0 * min_blinding_power(&p).map_err(|e| e.to_string())?;
            let op = solve_operating_point(pb, &p, false).map_err(|e| e.to_string())?;
            (pb, 3.0 * threshold_energy(op.gain, &p))
        } else {
            (0.0, 10.0 * PHOTON_ENERGY / p.efficiency)
        };
        let cfg = JitterConfig {
            p_blinding,
            e_pulse,
            pulse_fwhm: pulse,
            n_pulses: 100_000,
            trigger_rate: 0.5 / p.tau_d,
            bin_width: expect / 20.0,
        };
        let r = jitter_experiment(&cfg, &p, 60 + i as u64).map_err(|e| e.to_string())?;
        let fwhm = r.fwhm();
        check!(r.clicks >= 99_000, "{preset} {kind}: only {} events", r.clicks);
        check!(
            (fwhm / expect - 1.0).abs() < 0.1,
            "{preset} {kind}: FWHM {:.1} ps vs {:.1} ps",
            fwhm * 1e12,
            expect * 1e12
        );
        out.push(format!("{preset} {kind} {:.1} ps", fwhm * 1e12));
    }
    Ok(out.join(", "))
}

fn bb84_window() -> Outcome {
    let p = Preset::D1.params();
    let pb = 1e-6;
    let map = threshold_map(&[pb], &p, &ThresholdConfig::default(), 70).map_err(|e| e.to_string())?;
    let entry = map.entries[0];
    let feas = attack_feasibility(&map).map_err(|e| e.to_string())?[0];
    let Some((a, b)) = feas.window else {
        return Err(format!("no window: e_always {:e} J, 2 e_never {:e} J", entry.e_always, 2.0 * entry.e_never));
    };
    let e_pulse = (a * b).sqrt();
    let cfg = Bb84AttackConfig {
        e_pulse,
        trigger_rate: 40e3,
        n_rounds: 100_000,
        thresholds: (entry.e_never, entry.e_always),
        rng_seed: 71,
    };
    let s = run_bb84_attack(&cfg, &p, pb).map_err(|e| e.to_string())?;
    check!(s.qber_contribution < 0.01, "QBER {}", s.qber_contribution);
    check!(s.bob_click_rate > 0.49, "click rate {}", s.bob_click_rate);
    Ok(format!(
        "E = {e_pulse:.3e} J in [{a:.3e}, {b:.3e}]: QBER {:.4}, click rate {:.4}",
        s.qber_contribution, s.bob_click_rate
    ))
}

fn countermeasures() -> Outcome {
    let p = Preset::D2.params();
    let rate = 1.0 / (p.tau_d + 0.5e-6);
    let n = rate.ceil() as usize;
    let mcfg = MonitorConfig::default();
    let mut out = Vec::new();
    for gated in [false, true] {
        let plan = GatedBlindingPlan::periodic(rate, n, 1e-14, Preset::D2.pulse_fwhm(), 20e-9, gated);
        let run = gated_blinding_run(&plan, &p, 80).map_err(|e| e.to_string())?;
        let slow = mean_current_monitor(&run, 100e-9, &mcfg).map_err(|e| e.to_string())?;
        let i = run.mean_current();
        let label = if gated { "gated" } else { "continuous" };
        if gated {
            check!(i < 100e-9 && slow.verdict == Verdict::Clean, "gated plan: {i:e} A, {:?}", slow.verdict);
        } else {
            check!(
                i >= 150e-9 && slow.verdict == Verdict::BlindingSuspected,
                "continuous plan: {i:e} A, {:?}",
                slow.verdict
            );
        }
        let trace = bias_voltage_trace(&run, &mcfg).map_err(|e| e.to_string())?;
        let fast = fast_blinding_detector(&trace, 1e-3, 100e-9).map_err(|e| e.to_string())?;
        let score = score_alarms(&fast, &run.blinded_windows(), 100e-9);
        check!(score.eligible_windows > 0, "{label}: no blinding windows to detect");
        check!(
            score.recall == 1.0 && score.false_positive_rate == 0.0,
            "{label}: recall {}, false-positive rate {}",
            score.recall,
            score.false_positive_rate
        );
        out.push(format!(
            "{label} {:.0} nA {:?}, fast recall 1 / FP 0 over {}",
            i * 1e9,
            slow.verdict,
            score.eligible_windows
        ));
    }
    Ok(out.join("; "))
}

/// Self-consistency residual written out directly from the circuit law.
fn residual(v: f64, v_eff: f64, p: &NfadParams, power: f64) -> f64 {
    let m = 1.0 / (1.0 - (v / p.v_br).powf(p.gain_exponent));
    v - v_eff + p.responsivity * m * power * p.r_series()
}

fn oracle_equivalence() -> Outcome {
    const GRID: usize = 1_000_000;
    let mut rng = seeded(99);
    let mut roots = 0;
    for draw in 0..100 {
        let mut p = Preset::D2.params();
        p.v_br = rng.random_range(30.0..100.0);
        p.v_excess = rng.random_range(0.5..8.0);
        p.gain_exponent = rng.random_range(2.0..40.0);
        p.responsivity = rng.random_range(0.3..1.2);
        p.max_linear_gain = 10f64.powf(rng.random_range(2.0..4.0));
        let quenched = rng.random_bool(0.3);
        let power = 10f64.powf(rng.random_range(-10.0..-5.5));
        let op = solve_operating_point(power, &p, quenched).map_err(|e| e.to_string())?;
        let v_eff = p.v_bias() - if quenched { p.v_quench } else { 0.0 };
        let upper = if v_eff < p.v_br { v_eff } else { p.linear_edge() };
        let h = upper / GRID as f64;
        let f = |v: f64| residual(v, v_eff, &p, power);
        if f(upper) < 0.0 {
            let idle = if quenched { Mode::Quenched } else { Mode::Geiger };
            check!(op.mode == idle && op.i_apd == 0.0, "draw {draw}: expected idle {idle:?}, got {:?}", op.mode);
            continue;
        }
        if f(0.0) >= 0.0 {
            check!(op.v_apd == 0.0, "draw {draw}: expected full saturation");
            continue;
        }
        let cell = (0..GRID).find(|&k| f(k as f64 * h) < 0.0 && f((k + 1) as f64 * h) >= 0.0).unwrap();
        let (a, b) = (cell as f64 * h, (cell + 1) as f64 * h);
        check!(op.v_apd >= a - h && op.v_apd <= b + h, "draw {draw}: root {} outside grid cell [{a}, {b}]", op.v_apd);
        roots += 1;
    }
    check!(roots > 30, "only {roots} draws reached the root search");

    let mut points = 0;
    for (i, preset) in Preset::ALL.into_iter().enumerate() {
        let p = preset.params();
        let pb = 10.0 * min_blinding_power(&p).map_err(|e| e.to_string())?;
        let op = solve_operating_point(pb, &p, false).map_err(|e| e.to_string())?;
        let e0 = threshold_energy(op.gain, &p);
        let energies: Vec<f64> = (0..15).map(|k| e0 * (0.7 + 0.04 * k as f64)).collect();
        let cfg = ClickCurveConfig { pulse_fwhm: preset.pulse_fwhm(), ..Default::default() };
        for pt in estimate_click_curve(pb, &energies, &cfg, &p, 90 + i as u64).map_err(|e| e.to_string())? {
            let model = click_probability(pt.energy, &op, &p).map_err(|e| e.to_string())?;
            let width = (pt.ci_high - pt.ci_low).max(1.0 / pt.trials as f64);
            check!(
                (pt.p_hat - model).abs() <= 3.0 * width,
                "{preset} E = {:e} J: {} vs model {model}",
                pt.energy,
                pt.p_hat
            );
            points += 1;
        }
    }
    Ok(format!("{roots} grid-scanned roots of 100 draws, {points} click fractions on the model"))
}

fn nfad(args: &[&str], out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_nfad"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    check!(o.status.success(), "nfad {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    Ok(())
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        ("click_curve", "n_trials = 2000"),
        ("threshold_map", "n_trials = 1500"),
        ("jitter", "n_pulses = 20000"),
        ("count_rate_sweep", "duration = 0.01"),
        ("table_currents", "duration = 0.05"),
        ("gated_blinding", ""),
        ("bb84", "n_rounds = 20000\nn_trials = 1500"),
        ("fast_monitor", ""),
    ];
    let mut compared = 0;
    for (name, settings) in configs {
        let cfg = tmp.path().join(format!("{name}.ini"));
        fs::write(&cfg, format!("experiment = {name}\nseed = 5\n[experiment]\n{settings}\n"))
            .map_err(|e| e.to_string())?;
        let (first, second) = (tmp.path().join(format!("{name}-1")), tmp.path().join(format!("{name}-2")));
        nfad(&["--config", cfg.to_str().unwrap()], &first)?;
        nfad(&["--config", first.join("manifest.ini").to_str().unwrap()], &second)?;
        let (a, b) = (csv_files(&first)?, csv_files(&second)?);
        check!(!a.is_empty(), "{name}: no CSV written");
        check!(a == b, "{name}: rerun from manifest differs");
        compared += a.len();
    }
    Ok(format!("8 experiments, {compared} CSV files byte-identical on rerun"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("deadtime plateau", deadtime_plateau),
        ("blinding onset", blinding_onset),
        ("current table", table_currents),
        ("transition monotonicity", transition_monotonicity),
        ("threshold trends", threshold_trends),
        ("jitter contrast", jitter_contrast),
        ("BB84 window", bb84_window),
        ("countermeasure discrimination", countermeasures),
        ("oracle equivalence", oracle_equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
