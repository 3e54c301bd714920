//! Experiment dispatch, CSV output and manifests.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nfad_core::attack::{
    estimate_click_curve, gated_blinding_run, jitter_experiment, threshold_map, ClickCurveConfig, GatedBlindingPlan,
    JitterConfig, ThresholdConfig,
};
use nfad_core::calibration::TABLE_CURRENTS;
use nfad_core::detector::threshold_energy;
use nfad_core::monitor::{
    annotate_clicks, bias_voltage_trace, fast_blinding_detector, mean_current_monitor, score_alarms, MonitorConfig,
};
use nfad_core::{
    attack_feasibility, count_rate_curve, export, min_blinding_power, run_bb84_attack, solve_operating_point,
    Bb84AttackConfig, NfadParams, Preset,
};

use crate::config::{format_list, parse_f64, parse_list, Document};
use crate::error::CliError;
use crate::experiment::{DetectorChoice, ExperimentConfig, ExperimentKind};
use crate::params;

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

/// Resolved `[experiment]` settings with typed access.
struct Settings(BTreeMap<String, String>);

impl Settings {
    fn f64(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, &self.0[key])
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        parse_list(key, &self.0[key])
    }

    fn count(&self, key: &str) -> Result<usize, CliError> {
        let x = self.f64(key)?;
        if !(x >= 1.0 && x.fract() == 0.0 && x < 1e12) {
            return Err(CliError::Config(format!("`{key}`: expected a positive integer, got {x}")));
        }
        Ok(x as usize)
    }

    fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.0[key].trim() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Config(format!("`{key}`: expected true or false, got `{other}`"))),
        }
    }
}

fn default_blinding(choice: DetectorChoice, p: &NfadParams) -> Result<f64, CliError> {
    Ok(match choice.preset() {
        Some(Preset::D1) => 250e-9,
        Some(Preset::D2) => 7e-9,
        Some(Preset::D3) => 3.3e-9,
        Some(Preset::D4) => 70e-9,
        None => 10.0 * min_blinding_power(p)?,
    })
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn pulse_fwhm(choice: DetectorChoice) -> f64 {
    choice.preset().map_or(33e-12, Preset::pulse_fwhm)
}

fn defaults(cfg: &ExperimentConfig, p: &NfadParams) -> Result<BTreeMap<String, String>, CliError> {
    let mut d: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        d.insert(k.to_string(), v);
    };
    let fwhm = pulse_fwhm(cfg.detector).to_string();
    let gated_rate = 1.0 / (p.tau_d + 0.5e-6);
    match cfg.experiment {
        ExperimentKind::ClickCurve => {
            let pb = match cfg.settings.get("p_blinding") {
                Some(v) => parse_f64("p_blinding", v)?,
                None => default_blinding(cfg.detector, p)?,
            };
            let op = solve_operating_point(pb, p, false)?;
            let e0 = threshold_energy(op.gain, p);
            let energies: Vec<f64> = (0..25).map(|i| e0 * (0.7 + 0.025 * i as f64)).collect();
            put("p_blinding", pb.to_string());
            put("energies", format_list(&energies));
            put("n_trials", "10000".into());
            put("trigger_rate", "40000".into());
            put("pulse_fwhm", fwhm);
        }
        ExperimentKind::ThresholdMap => {
            let pmin = min_blinding_power(p)?;
            put("powers", format_list(&logspace(1.5 * pmin, 1000.0 * pmin, 8)));
            put("epsilon", "0.005".into());
            put("n_trials", "4000".into());
            put("trigger_rate", "40000".into());
            put("pulse_fwhm", fwhm);
        }
        ExperimentKind::Jitter => {
            let pb = default_blinding(cfg.detector, p)?;
            let op = solve_operating_point(pb, p, false)?;
            put("p_blinding", pb.to_string());
            put("e_pulse", (3.0 * threshold_energy(op.gain, p)).to_string());
            put("pulse_fwhm", fwhm);
            put("n_pulses", "100000".into());
            put("trigger_rate", "40000".into());
            put("bin_width", "2e-12".into());
        }
        ExperimentKind::CountRateSweep => {
            put("rates", format_list(&[1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 3e10, 1e11]));
            put("duration", "1".into());
        }
        ExperimentKind::TableCurrents => {
            put("efficiencies", "0.1, 0.2".into());
            put("rates", "40000, 50000, 55000".into());
            put("p_blinding", format_list(&[20e-9, 70e-9]));
            put("e_pulse", "1e-14".into());
            put("duration", "1".into());
        }
        ExperimentKind::GatedBlinding => {
            put("p_blinding", "2e-8".into());
            put("trigger_rate", gated_rate.to_string());
            put("duration", "1".into());
            put("e_pulse", "1e-14".into());
            put("on_lead", "5e-7".into());
            put("laser_off_margin", "1e-9".into());
            put("threshold", "1e-7".into());
            put("pulse_fwhm", fwhm);
        }
        ExperimentKind::Bb84 => {
            put("p_blinding", default_blinding(cfg.detector, p)?.to_string());
            put("e_pulse", "auto".into());
            put("n_rounds", "100000".into());
            put("trigger_rate", "40000".into());
            put("epsilon", "0.005".into());
            put("n_trials", "4000".into());
            put("pulse_fwhm", fwhm);
        }
        ExperimentKind::FastMonitor => {
            let m = MonitorConfig::default();
            put("p_blinding", "2e-8".into());
            put("trigger_rate", gated_rate.to_string());
            put("duration", "0.002".into());
            put("e_pulse", "1e-14".into());
            put("gated", "true".into());
            put("on_lead", "5e-7".into());
            put("drop_threshold", "0.001".into());
            put("min_duration", "1e-7".into());
            put("z_out", m.z_out.to_string());
            put("filter_tau", m.filter_tau.to_string());
            put("transient_amplitude", m.transient_amplitude.to_string());
            put("pulse_fwhm", fwhm);
        }
    }
    Ok(d)
}

fn resolve_settings(cfg: &ExperimentConfig, p: &NfadParams) -> Result<Settings, CliError> {
    let mut resolved = defaults(cfg, p)?;
    for (k, v) in &cfg.settings {
        match resolved.get_mut(k) {
            Some(slot) => *slot = v.clone(),
            None => {
                return Err(CliError::Config(format!("`{k}` is not a setting of {}", cfg.experiment)));
            }
        }
    }
    Ok(Settings(resolved))
}

/// Manifest document: the config with every default resolved.
pub fn manifest(cfg: &ExperimentConfig, p: &NfadParams, settings: &BTreeMap<String, String>) -> Document {
    let mut doc = Document::default();
    let root = doc.sections.entry(String::new()).or_default();
    root.insert("experiment".into(), cfg.experiment.name().into());
    root.insert("seed".into(), cfg.seed.to_string());
    let det = doc.sections.entry("detector".into()).or_default();
    det.insert("preset".into(), cfg.detector.name().into());
    for f in params::FIELDS {
        det.insert(f.to_string(), params::get(p, f).expect("known field").to_string());
    }
    doc.sections.insert("experiment".into(), settings.clone());
    doc
}

fn create(out_dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>, CliError> {
    let path = out_dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    files.push(path);
    Ok(BufWriter::new(f))
}

/// Run one experiment, writing its CSV files and `manifest.ini` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let p = cfg.params()?;
    let settings = resolve_settings(cfg, &p)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;
    let mut s = RunSummary::default();
    let seed = cfg.seed;
    let st = &settings;

    match cfg.experiment {
        ExperimentKind::ClickCurve => {
            let pb = st.f64("p_blinding")?;
            let ccfg = ClickCurveConfig {
                n_trials: st.count("n_trials")?,
                trigger_rate: st.f64("trigger_rate")?,
                pulse_fwhm: st.f64("pulse_fwhm")?,
                ..Default::default()
            };
            let pts = estimate_click_curve(pb, &st.list("energies")?, &ccfg, &p, seed)?;
            export::write_click_curve(create(out_dir, "click_curve.csv", &mut s.files)?, pb, &pts)?;
            s.lines.push(format!("{} energies at P_blinding = {pb:e} W", pts.len()));
        }
        ExperimentKind::ThresholdMap => {
            let tcfg = ThresholdConfig {
                epsilon: st.f64("epsilon")?,
                n_trials: st.count("n_trials")?,
                trigger_rate: st.f64("trigger_rate")?,
                pulse_fwhm: st.f64("pulse_fwhm")?,
                ..Default::default()
            };
            let map = threshold_map(&st.list("powers")?, &p, &tcfg, seed)?;
            export::write_threshold_map(create(out_dir, "threshold_map.csv", &mut s.files)?, &map)?;
            let feas = attack_feasibility(&map)?;
            export::write_feasibility(create(out_dir, "feasibility.csv", &mut s.files)?, &feas)?;
            for e in &map.entries {
                s.lines.push(format!(
                    "P = {:e} W: E_never = {:e} J, E_always = {:e} J",
                    e.p_blinding, e.e_never, e.e_always
                ));
            }
        }
        ExperimentKind::Jitter => {
            let jcfg = JitterConfig {
                p_blinding: st.f64("p_blinding")?,
                e_pulse: st.f64("e_pulse")?,
                pulse_fwhm: st.f64("pulse_fwhm")?,
                n_pulses: st.count("n_pulses")?,
                trigger_rate: st.f64("trigger_rate")?,
                bin_width: st.f64("bin_width")?,
            };
            let r = jitter_experiment(&jcfg, &p, seed)?;
            export::write_histogram(create(out_dir, "jitter.csv", &mut s.files)?, &r)?;
            s.lines.push(format!("{} clicks, fitted FWHM {:.2} ps", r.clicks, r.fwhm() * 1e12));
        }
        ExperimentKind::CountRateSweep => {
            let pts = count_rate_curve(&st.list("rates")?, &p, st.f64("duration")?, seed)?;
            export::write_count_rate(create(out_dir, "count_rate.csv", &mut s.files)?, &pts)?;
            for pt in &pts {
                s.lines.push(format!("{:e} /s -> {:.1} Hz, {:.4e} A", pt.rate_in, pt.rate_out, pt.mean_current));
            }
        }
        ExperimentKind::TableCurrents => {
            let preset = cfg
                .detector
                .preset()
                .ok_or_else(|| CliError::Config("table_currents needs a preset with a bias table".into()))?;
            let effs = st.list("efficiencies")?;
            let powers = st.list("p_blinding")?;
            if effs.len() != powers.len() {
                return Err(CliError::Config("`p_blinding` needs one power per efficiency".into()));
            }
            let duration = st.f64("duration")?;
            let mut rows = Vec::new();
            for (i, (&eff, &pb)) in effs.iter().zip(&powers).enumerate() {
                let row = preset.params_at(eff).map_err(CliError::Invalid)?;
                let mut q = p.clone();
                q.efficiency = row.efficiency;
                q.v_excess = row.v_excess;
                for (j, &rate) in st.list("rates")?.iter().enumerate() {
                    let n = (rate * duration).round() as usize;
                    let plan = GatedBlindingPlan::periodic(rate, n, st.f64("e_pulse")?, preset.pulse_fwhm(), pb, false);
                    let run = gated_blinding_run(&plan, &q, nfad_core::rng::derive_seed(seed, (i * 64 + j) as u64))?;
                    let reference = (preset == Preset::D2)
                        .then(|| TABLE_CURRENTS.iter().find(|r| (r.0 - eff).abs() < 1e-9 && (r.1 - rate).abs() < 1e-6))
                        .flatten()
                        .map(|r| r.2);
                    rows.push(TableRow {
                        efficiency: eff,
                        rate,
                        p_blinding: pb,
                        current: run.mean_current(),
                        reference,
                        clicks: run.clicks.len(),
                    });
                }
            }
            let mut w = create(out_dir, "table_currents.csv", &mut s.files)?;
            write_table(&mut w, &rows)?;
            for r in &rows {
                s.lines.push(format!("{:>4.0} % {:>6.0} Hz: {:.3} uA", r.efficiency * 100.0, r.rate, r.current * 1e6));
            }
        }
        ExperimentKind::GatedBlinding => {
            let rate = st.f64("trigger_rate")?;
            let duration = st.f64("duration")?;
            let n = (rate * duration).ceil() as usize;
            let threshold = st.f64("threshold")?;
            let mcfg = MonitorConfig::default();
            let mut rows = Vec::new();
            for gated in [false, true] {
                let mut plan = GatedBlindingPlan::periodic(
                    rate,
                    n,
                    st.f64("e_pulse")?,
                    st.f64("pulse_fwhm")?,
                    st.f64("p_blinding")?,
                    gated,
                );
                plan.on_lead = st.f64("on_lead")?;
                plan.laser_off_margin = st.f64("laser_off_margin")?;
                let run = gated_blinding_run(&plan, &p, seed)?;
                let report = mean_current_monitor(&run, threshold, &mcfg)?;
                s.lines.push(format!(
                    "{}: mean current {:.1} nA, slow monitor {:?}",
                    if gated { "gated" } else { "continuous" },
                    run.mean_current() * 1e9,
                    report.verdict
                ));
                rows.push((gated, run.clicks.len(), run.mean_current(), report));
            }
            let mut w = create(out_dir, "gated_blinding.csv", &mut s.files)?;
            write_gated(&mut w, rate, &rows)?;
        }
        ExperimentKind::Bb84 => {
            let pb = st.f64("p_blinding")?;
            let tcfg = ThresholdConfig {
                epsilon: st.f64("epsilon")?,
                n_trials: st.count("n_trials")?,
                pulse_fwhm: st.f64("pulse_fwhm")?,
                trigger_rate: st.f64("trigger_rate")?,
                ..Default::default()
            };
            let map = threshold_map(&[pb], &p, &tcfg, seed)?;
            let entry = map.entries[0];
            let feas = attack_feasibility(&map)?[0];
            let e_pulse = match st.0["e_pulse"].trim() {
                "auto" => match feas.window {
                    Some((a, b)) => (a * b).sqrt(),
                    None => {
                        return Err(CliError::Config(format!(
                            "no admissible pulse energy at {pb:e} W (E_always {:e} J >= 2 E_never {:e} J)",
                            entry.e_always,
                            2.0 * entry.e_never
                        )))
                    }
                },
                _ => st.f64("e_pulse")?,
            };
            let bcfg = Bb84AttackConfig {
                e_pulse,
                trigger_rate: st.f64("trigger_rate")?,
                n_rounds: st.count("n_rounds")? as u64,
                thresholds: (entry.e_never, entry.e_always),
                rng_seed: nfad_core::rng::derive_seed(seed, 1),
            };
            let stats = run_bb84_attack(&bcfg, &p, pb)?;
            export::write_threshold_map(create(out_dir, "bb84_thresholds.csv", &mut s.files)?, &map)?;
            export::write_bb84(create(out_dir, "bb84.csv", &mut s.files)?, &[(pb, e_pulse, stats)])?;
            s.lines.push(format!(
                "E_pulse {e_pulse:e} J: click rate {:.4}, QBER {:.4}, double clicks {:.4}",
                stats.bob_click_rate, stats.qber_contribution, stats.double_click_rate
            ));
        }
        ExperimentKind::FastMonitor => {
            let rate = st.f64("trigger_rate")?;
            let duration = st.f64("duration")?;
            let n = (rate * duration).ceil() as usize;
            let mut plan = GatedBlindingPlan::periodic(
                rate,
                n,
                st.f64("e_pulse")?,
                st.f64("pulse_fwhm")?,
                st.f64("p_blinding")?,
                st.bool("gated")?,
            );
            plan.on_lead = st.f64("on_lead")?;
            let run = gated_blinding_run(&plan, &p, seed)?;
            let mcfg = MonitorConfig {
                z_out: st.f64("z_out")?,
                filter_tau: st.f64("filter_tau")?,
                transient_amplitude: st.f64("transient_amplitude")?,
                ..Default::default()
            };
            let trace = bias_voltage_trace(&run, &mcfg)?;
            let min_duration = st.f64("min_duration")?;
            let mut report = fast_blinding_detector(&trace, st.f64("drop_threshold")?, min_duration)?;
            annotate_clicks(&mut report, &run);
            let score = score_alarms(&report, &run.blinded_windows(), min_duration);
            export::write_monitor_trace(create(out_dir, "bias_trace.csv", &mut s.files)?, &trace)?;
            export::write_alarms(create(out_dir, "alarms.csv", &mut s.files)?, &report)?;
            s.lines.push(report.to_string().trim_end().to_string());
            s.lines.push(format!(
                "recall {:.3}, false-positive rate {:.3} over {} blinding windows",
                score.recall, score.false_positive_rate, score.eligible_windows
            ));
        }
    }

    let doc = manifest(cfg, &p, &settings.0);
    let path = out_dir.join("manifest.ini");
    fs::write(&path, doc.render()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    s.files.push(path);
    Ok(s)
}

struct TableRow {
    efficiency: f64,
    rate: f64,
    p_blinding: f64,
    current: f64,
    reference: Option<f64>,
    clicks: usize,
}

fn write_table(w: &mut impl std::io::Write, rows: &[TableRow]) -> Result<(), CliError> {
    let wr = |e: std::io::Error| CliError::io("writing table_currents.csv", e);
    writeln!(w, "efficiency,trigger_rate_Hz,p_blinding_W,current_A,reference_current_A,clicks").map_err(wr)?;
    for r in rows {
        let reference = r.reference.map_or(String::new(), |x| x.to_string());
        writeln!(w, "{},{},{},{},{reference},{}", r.efficiency, r.rate, r.p_blinding, r.current, r.clicks)
            .map_err(wr)?;
    }
    w.flush().map_err(wr)
}

fn write_gated(
    w: &mut impl std::io::Write,
    rate: f64,
    rows: &[(bool, usize, f64, nfad_core::AlarmReport)],
) -> Result<(), CliError> {
    let wr = |e: std::io::Error| CliError::io("writing gated_blinding.csv", e);
    writeln!(w, "plan,trigger_rate_Hz,clicks,mean_current_A,slow_monitor_verdict").map_err(wr)?;
    for (gated, clicks, i, report) in rows {
        let plan = if *gated { "gated" } else { "continuous" };
        let verdict = match report.verdict {
            nfad_core::Verdict::Clean => "clean",
            nfad_core::Verdict::BlindingSuspected => "blinding_suspected",
        };
        writeln!(w, "{plan},{rate},{clicks},{i},{verdict}").map_err(wr)?;
    }
    w.flush().map_err(wr)
}
