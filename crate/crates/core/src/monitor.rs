//! Receiver-side countermeasures.
//!
//! The slow monitor mirrors a fraction of the APD current, averages it over
//! one-second windows and digitises it with a high-resolution ADC. The fast
//! probe watches the bias source output, where the photocurrent develops a
//! voltage drop across the source impedance.

use std::fmt;

use crate::detector::DetectorRun;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitorKind {
    MeanCurrent,
    BiasVoltage,
}

impl MonitorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MonitorKind::MeanCurrent => "mean_current",
            MonitorKind::BiasVoltage => "bias_voltage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// Averaging window of the slow monitor (s).
    pub sample_period: f64,
    pub mirror_ratio: f64,
    pub adc_bits: u32,
    /// ADC input range on the mirrored current (A).
    pub adc_full_scale: f64,
    /// Bias source output impedance (Ω).
    pub z_out: f64,
    /// Time constant of the probe low-pass and of the quench transients (s).
    pub filter_tau: f64,
    /// Peak height of each quench transient (V).
    pub transient_amplitude: f64,
    /// Sample spacing while the probe signal is still moving (s).
    pub sample_dt: f64,
    /// Deviation below which the probe signal counts as settled (V).
    pub settle_tol: f64,
    /// Guard window after each quench edge, in filter time constants.
    pub guard_taus: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            sample_period: 1.0,
            mirror_ratio: 0.20,
            adc_bits: 24,
            adc_full_scale: 10e-6,
            z_out: 1e3,
            filter_tau: 100e-9,
            transient_amplitude: 5e-3,
            sample_dt: 25e-9,
            settle_tol: 10e-6,
            guard_taus: 3.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be > 0, got {x}")))
            }
        };
        pos("sample_period", self.sample_period)?;
        pos("mirror_ratio", self.mirror_ratio)?;
        pos("adc_full_scale", self.adc_full_scale)?;
        pos("z_out", self.z_out)?;
        pos("filter_tau", self.filter_tau)?;
        pos("sample_dt", self.sample_dt)?;
        pos("settle_tol", self.settle_tol)?;
        if !(1..=32).contains(&self.adc_bits) {
            return Err(invalid("adc_bits", "must lie in 1..=32"));
        }
        if !(self.transient_amplitude >= 0.0 && self.guard_taus >= 0.0) {
            return Err(invalid("transient_amplitude", "amplitude and guard must be >= 0"));
        }
        Ok(())
    }

    pub fn guard(&self) -> f64 {
        self.guard_taus * self.filter_tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTrace {
    pub kind: MonitorKind,
    /// `(t, value)`; amperes for the current monitor, volts for the probe.
    pub samples: Vec<(f64, f64)>,
    pub config: MonitorConfig,
    /// Deadtime start and end instants, where quench transients sit.
    pub quench_marks: Vec<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    BlindingSuspected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alarm {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: MonitorKind,
    /// Largest excursion beyond the threshold (A or V).
    pub peak_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmReport {
    pub alarms: Vec<Alarm>,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Indices of clicks whose preceding live interval overlaps an alarm.
    pub compromised_clicks: Vec<usize>,
}

impl AlarmReport {
    fn new(alarms: Vec<Alarm>, threshold: f64) -> Self {
        let verdict = if alarms.is_empty() { Verdict::Clean } else { Verdict::BlindingSuspected };
        Self { alarms, threshold, verdict, compromised_clicks: Vec::new() }
    }
}

impl fmt::Display for AlarmReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Clean => "clean",
            Verdict::BlindingSuspected => "blinding suspected",
        };
        writeln!(f, "verdict: {verdict} (threshold {:e}, {} alarms)", self.threshold, self.alarms.len())?;
        for a in self.alarms.iter().take(10) {
            writeln!(
                f,
                "  {} alarm [{:.9}, {:.9}) s, peak deviation {:e}",
                a.kind.as_str(),
                a.t_start,
                a.t_end,
                a.peak_deviation
            )?;
        }
        if self.alarms.len() > 10 {
            writeln!(f, "  ... {} more", self.alarms.len() - 10)?;
        }
        if !self.compromised_clicks.is_empty() {
            writeln!(f, "  {} clicks flagged as possibly compromised", self.compromised_clicks.len())?;
        }
        Ok(())
    }
}

/// Reconstructed APD current after the mirror and the ADC.
fn digitise(i_apd: f64, config: &MonitorConfig) -> f64 {
    let lsb = config.adc_full_scale / (1u64 << config.adc_bits) as f64;
    let code = (config.mirror_ratio * i_apd / lsb).round().clamp(0.0, ((1u64 << config.adc_bits) - 1) as f64);
    code * lsb / config.mirror_ratio
}

/// One sample per full averaging window, stamped at the window end.
pub fn mean_current_trace(run: &DetectorRun, config: &MonitorConfig) -> Result<MonitorTrace> {
    config.validate()?;
    let duration = run.duration();
    let windows = (duration / config.sample_period * (1.0 + 1e-12)).floor() as usize;
    if windows == 0 {
        return Err(Error::RunTooShort { duration, window: config.sample_period });
    }
    let samples = (0..windows)
        .map(|k| {
            let a = k as f64 * config.sample_period;
            let b = a + config.sample_period;
            let mean = run.current_trace.integral(a, b.min(duration)) / config.sample_period;
            (b, digitise(mean, config))
        })
        .collect();
    Ok(MonitorTrace { kind: MonitorKind::MeanCurrent, samples, config: *config, quench_marks: Vec::new(), duration })
}

/// Flag every averaging window whose reconstructed current exceeds `threshold` (A).
pub fn mean_current_monitor(run: &DetectorRun, threshold: f64, config: &MonitorConfig) -> Result<AlarmReport> {
    if !(threshold > 0.0) {
        return Err(invalid("threshold", "must be > 0"));
    }
    let trace = mean_current_trace(run, config)?;
    let alarms = trace
        .samples
        .iter()
        .filter(|(_, i)| *i > threshold)
        .map(|&(t, i)| Alarm {
            t_start: t - config.sample_period,
            t_end: t,
            kind: MonitorKind::MeanCurrent,
            peak_deviation: i - threshold,
        })
        .collect();
    Ok(AlarmReport::new(alarms, threshold))
}

/// Bias-source voltage deviation seen by a fast probe.
///
/// The supply current drops `I·Z_out` across the source, seen through a
/// first-order low-pass; each deadtime adds a positive transient at its start
/// and a negative one at its end. Both decay with `filter_tau`, so between
/// current steps the signal relaxes as a single exponential and is sampled
/// densely only until it settles.
pub fn bias_voltage_trace(run: &DetectorRun, config: &MonitorConfig) -> Result<MonitorTrace> {
    config.validate()?;
    let duration = run.duration();
    let tau_d = run.params.tau_d;
    let mut marks: Vec<(f64, f64)> = Vec::with_capacity(2 * run.clicks.len());
    for c in &run.clicks {
        marks.push((c.t, config.transient_amplitude));
        if c.t + tau_d < duration {
            marks.push((c.t + tau_d, -config.transient_amplitude));
        }
    }
    marks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let segments = &run.current_trace.segments;
    let mut cuts: Vec<f64> = segments.iter().map(|s| s.t_start).chain(marks.iter().map(|m| m.0)).collect();
    cuts.push(duration);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut v = 0.0_f64;
    let (mut si, mut mi) = (0usize, 0usize);
    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        while si + 1 < segments.len() && segments[si].t_end <= t0 {
            si += 1;
        }
        while mi < marks.len() && marks[mi].0 <= t0 {
            v += marks[mi].1;
            mi += 1;
        }
        let target = -segments.get(si).map_or(0.0, |s| s.current) * config.z_out;
        let dev = v - target;
        let span = t1 - t0;
        let steps = if dev.abs() > config.settle_tol {
            (config.filter_tau / config.sample_dt * (dev.abs() / config.settle_tol).ln()).ceil() as usize + 1
        } else {
            0
        };
        samples.push((t0, v));
        for k in 1..=steps {
            let t = t0 + k as f64 * config.sample_dt;
            if t >= t1 {
                break;
            }
            samples.push((t, target + dev * (-(t - t0) / config.filter_tau).exp()));
        }
        v = target + dev * (-span / config.filter_tau).exp();
    }
    samples.push((duration, v));
    Ok(MonitorTrace {
        kind: MonitorKind::BiasVoltage,
        samples,
        config: *config,
        quench_marks: marks.into_iter().map(|m| m.0).collect(),
        duration,
    })
}

/// Flag sustained drops below `−drop_threshold` lasting at least `min_duration`.
///
/// Each sample holds until the next one. Samples inside the guard window after
/// a quench edge are ignored and break any run in progress.
pub fn fast_blinding_detector(trace: &MonitorTrace, drop_threshold: f64, min_duration: f64) -> Result<AlarmReport> {
    if trace.kind != MonitorKind::BiasVoltage {
        return Err(Error::TraceKind { expected: "bias_voltage" });
    }
    if !(drop_threshold > 0.0 && min_duration >= 0.0) {
        return Err(invalid("drop_threshold", "must be > 0 with min_duration >= 0"));
    }
    let guard = trace.config.guard();
    let marks = &trace.quench_marks;
    let masked = |t: f64| {
        let i = marks.partition_point(|&m| m <= t);
        i > 0 && t < marks[i - 1] + guard
    };
    let mut alarms = Vec::new();
    let mut open: Option<(f64, f64)> = None; // (start, most negative value)
    let n = trace.samples.len();
    for (i, &(t, v)) in trace.samples.iter().enumerate() {
        let hold_end = if i + 1 < n { trace.samples[i + 1].0 } else { trace.duration };
        let low = !masked(t) && v < -drop_threshold;
        match (&mut open, low) {
            (Some((_, peak)), true) => *peak = peak.min(v),
            (None, true) => open = Some((t, v)),
            (Some((start, peak)), false) => {
                if t - *start >= min_duration {
                    alarms.push(Alarm {
                        t_start: *start,
                        t_end: t,
                        kind: MonitorKind::BiasVoltage,
                        peak_deviation: -drop_threshold - *peak,
                    });
                }
                open = None;
            }
            (None, false) => {}
        }
        if i + 1 == n {
            if let Some((start, peak)) = open.take() {
                if hold_end - start >= min_duration {
                    alarms.push(Alarm {
                        t_start: start,
                        t_end: hold_end,
                        kind: MonitorKind::BiasVoltage,
                        peak_deviation: -drop_threshold - peak,
                    });
                }
            }
        }
    }
    Ok(AlarmReport::new(alarms, drop_threshold))
}

/// Mark the clicks whose preceding live interval overlaps an alarm.
pub fn annotate_clicks(report: &mut AlarmReport, run: &DetectorRun) {
    let tau_d = run.params.tau_d;
    let mut flagged = Vec::new();
    let mut live_from = 0.0;
    let mut ai = 0usize;
    for (k, c) in run.clicks.iter().enumerate() {
        while ai < report.alarms.len() && report.alarms[ai].t_end < live_from {
            ai += 1;
        }
        if report.alarms[ai..].iter().take_while(|a| a.t_start <= c.t).any(|a| a.t_end >= live_from) {
            flagged.push(k);
        }
        live_from = c.t + tau_d;
    }
    report.compromised_clicks = flagged;
}

/// Recall and false-positive rate of alarms against ground-truth windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    /// Fraction of eligible truth windows overlapped by an alarm.
    pub recall: f64,
    /// Fraction of alarms overlapping no truth window.
    pub false_positive_rate: f64,
    pub eligible_windows: usize,
    pub alarms: usize,
}

/// Score `report` against `truth`; windows shorter than `min_duration` are not required.
pub fn score_alarms(report: &AlarmReport, truth: &[(f64, f64)], min_duration: f64) -> DetectionScore {
    let overlaps = |a: &Alarm, w: &(f64, f64)| a.t_start < w.1 && a.t_end > w.0;
    let eligible: Vec<&(f64, f64)> = truth.iter().filter(|w| w.1 - w.0 >= min_duration).collect();
    let hit = eligible.iter().filter(|w| report.alarms.iter().any(|a| overlaps(a, w))).count();
    let false_alarms = report.alarms.iter().filter(|a| !truth.iter().any(|w| overlaps(a, w))).count();
    DetectionScore {
        recall: if eligible.is_empty() { 1.0 } else { hit as f64 / eligible.len() as f64 },
        false_positive_rate: if report.alarms.is_empty() {
            0.0
        } else {
            false_alarms as f64 / report.alarms.len() as f64
        },
        eligible_windows: eligible.len(),
        alarms: report.alarms.len(),
    }
}
