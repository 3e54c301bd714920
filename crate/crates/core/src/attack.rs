//! Eavesdropper procedures: click-curve scans, never/always threshold
//! estimation, jitter measurement and deadtime-gated blinding.

use rayon::prelude::*;

use crate::circuit::{min_blinding_power, solve_operating_point, Mode, NfadParams};
use crate::detector::{simulate, threshold_energy, Cause, DetectorRun};
use crate::error::{invalid, Error, Result};
use crate::optics::{CwSegment, OpticalScenario, TriggerPulse};
use crate::rng::derive_seed;
use crate::stats::{fit_gaussian, wilson_interval, GaussianFit, Histogram, Z_99};

/// Default trigger rate of the forced-detection scans (Hz).
pub const DEFAULT_TRIGGER_RATE: f64 = 40e3;

fn ensure_blinded(p_blinding: f64, params: &NfadParams) -> Result<()> {
    let op = solve_operating_point(p_blinding, params, false)?;
    if op.mode != Mode::Linear {
        return Err(Error::NotBlinded { p_blinding, p_min: min_blinding_power(params)? });
    }
    Ok(())
}

fn check_trigger_rate(rate: f64, params: &NfadParams) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0 / params.tau_d) {
        return Err(invalid(
            "trigger_rate",
            format!("{rate} Hz must be positive and below 1/tau_d = {} Hz", 1.0 / params.tau_d),
        ));
    }
    Ok(())
}

/// Fire `n` identical pulses under CW blinding and count the clicks.
fn count_clicks(
    p_blinding: f64,
    energy: f64,
    fwhm: f64,
    trigger_rate: f64,
    n: usize,
    params: &NfadParams,
    seed: u64,
) -> Result<u64> {
    let scenario = OpticalScenario::blinded_pulse_train(p_blinding, energy, fwhm, trigger_rate, n, seed)?;
    let run = simulate(&scenario, params, derive_seed(seed, 7))?;
    Ok(run.count(Cause::FakedState) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickCurveConfig {
    pub n_trials: usize,
    pub trigger_rate: f64,
    pub pulse_fwhm: f64,
    /// Two-sided z of the reported Wilson interval.
    pub z: f64,
}

impl Default for ClickCurveConfig {
    fn default() -> Self {
        Self { n_trials: 10_000, trigger_rate: DEFAULT_TRIGGER_RATE, pulse_fwhm: 33e-12, z: Z_99 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickCurvePoint {
    pub energy: f64,
    pub clicks: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Forced-click fraction at each pulse energy under CW blinding `p_blinding`.
pub fn estimate_click_curve(
    p_blinding: f64,
    energies: &[f64],
    config: &ClickCurveConfig,
    params: &NfadParams,
    seed: u64,
) -> Result<Vec<ClickCurvePoint>> {
    params.validate()?;
    check_trigger_rate(config.trigger_rate, params)?;
    ensure_blinded(p_blinding, params)?;
    if config.n_trials == 0 {
        return Err(invalid("n_trials", "must be > 0"));
    }
    energies
        .par_iter()
        .enumerate()
        .map(|(i, &energy)| {
            let clicks = count_clicks(
                p_blinding,
                energy,
                config.pulse_fwhm,
                config.trigger_rate,
                config.n_trials,
                params,
                derive_seed(seed, i as u64),
            )?;
            let n = config.n_trials as u64;
            let (ci_low, ci_high) = wilson_interval(clicks, n, config.z);
            Ok(ClickCurvePoint { energy, clicks, trials: n, p_hat: clicks as f64 / n as f64, ci_low, ci_high })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub epsilon: f64,
    pub n_trials: usize,
    pub z: f64,
    /// Relative bracket width at which bisection stops.
    pub rel_width: f64,
    pub trigger_rate: f64,
    pub pulse_fwhm: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.005,
            n_trials: 4000,
            z: Z_99,
            rel_width: 0.01,
            trigger_rate: DEFAULT_TRIGGER_RATE,
            pulse_fwhm: 33e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEntry {
    pub p_blinding: f64,
    pub e_never: f64,
    pub e_always: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    /// Sorted by blinding power.
    pub entries: Vec<ThresholdEntry>,
    pub params: NfadParams,
    pub config: ThresholdConfig,
}

/// Estimate `(e_never, e_always)` at blinding power `p_blinding`.
///
/// `e_never` is the largest energy whose click probability is bounded above by
/// `epsilon`, `e_always` the smallest whose probability is bounded below by
/// `1 − epsilon`, both from Wilson bounds and refined by bisection in log-energy.
pub fn estimate_thresholds(
    p_blinding: f64,
    params: &NfadParams,
    config: &ThresholdConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    params.validate()?;
    check_trigger_rate(config.trigger_rate, params)?;
    if !(config.epsilon > 0.0 && config.epsilon < 0.5) {
        return Err(invalid("epsilon", format!("must lie in (0, 0.5), got {}", config.epsilon)));
    }
    if config.n_trials == 0 {
        return Err(invalid("n_trials", "must be > 0"));
    }
    // Zero clicks must be able to certify epsilon, or the search cannot terminate.
    let zero_bound = wilson_interval(0, config.n_trials as u64, config.z).1;
    if zero_bound > config.epsilon {
        return Err(invalid(
            "n_trials",
            format!(
                "{} trials cannot bound a click probability below {} (need about {:.0})",
                config.n_trials,
                config.epsilon,
                config.z * config.z / config.epsilon
            ),
        ));
    }
    ensure_blinded(p_blinding, params)?;
    let op = solve_operating_point(p_blinding, params, false)?;
    let nominal = threshold_energy(op.gain, params);
    let n = config.n_trials as u64;
    let mut probes = 0u64;
    let mut probe = |energy: f64| -> Result<(f64, f64)> {
        probes += 1;
        let k = count_clicks(
            p_blinding,
            energy,
            config.pulse_fwhm,
            config.trigger_rate,
            config.n_trials,
            params,
            derive_seed(seed, probes),
        )?;
        Ok(wilson_interval(k, n, config.z))
    };
    let never = |b: (f64, f64)| b.1 <= config.epsilon;
    let always = |b: (f64, f64)| b.0 >= 1.0 - config.epsilon;

    // e_never: bracket [lo satisfies, hi fails]
    let (mut lo, mut hi) = (nominal, nominal);
    if never(probe(nominal)?) {
        loop {
            hi *= 2.0;
            if !never(probe(hi)?) {
                break;
            }
            lo = hi;
            if hi > nominal * 1e9 {
                return Err(Error::Calibration("detector never clicks".into()));
            }
        }
    } else {
        loop {
            lo /= 2.0;
            if never(probe(lo)?) {
                break;
            }
            hi = lo;
            if lo < nominal * 1e-9 {
                return Err(Error::Calibration("no energy found that never clicks".into()));
            }
        }
    }
    while hi / lo > 1.0 + config.rel_width {
        let mid = (lo * hi).sqrt();
        if never(probe(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e_never = lo;

    // e_always: bracket [lo fails, hi satisfies]
    let (mut lo, mut hi) = (nominal, nominal);
    if always(probe(nominal)?) {
        loop {
            lo /= 2.0;
            if !always(probe(lo)?) {
                break;
            }
            hi = lo;
            if lo < nominal * 1e-9 {
                return Err(Error::Calibration("detector always clicks".into()));
            }
        }
    } else {
        loop {
            hi *= 2.0;
            if always(probe(hi)?) {
                break;
            }
            lo = hi;
            if hi > nominal * 1e9 {
                return Err(Error::Calibration("no energy found that always clicks".into()));
            }
        }
    }
    while hi / lo > 1.0 + config.rel_width {
        let mid = (lo * hi).sqrt();
        if always(probe(mid)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let e_always = hi;
    Ok((e_never.min(e_always), e_always))
}

/// Threshold estimates over a set of blinding powers, computed in parallel.
pub fn threshold_map(powers: &[f64], params: &NfadParams, config: &ThresholdConfig, seed: u64) -> Result<ThresholdMap> {
    let mut entries = powers
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let (e_never, e_always) = estimate_thresholds(p, params, config, derive_seed(seed, i as u64))?;
            Ok(ThresholdEntry { p_blinding: p, e_never, e_always })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.p_blinding.total_cmp(&b.p_blinding));
    Ok(ThresholdMap { entries, params: params.clone(), config: *config })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    /// CW blinding power; 0 runs the detector in Geiger mode.
    pub p_blinding: f64,
    pub e_pulse: f64,
    pub pulse_fwhm: f64,
    pub n_pulses: usize,
    pub trigger_rate: f64,
    pub bin_width: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            p_blinding: 7e-9,
            e_pulse: 2e-15,
            pulse_fwhm: 33e-12,
            n_pulses: 100_000,
            trigger_rate: DEFAULT_TRIGGER_RATE,
            bin_width: 2e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterResult {
    pub histogram: Histogram,
    pub fit: GaussianFit,
    pub clicks: usize,
}

impl JitterResult {
    pub fn fwhm(&self) -> f64 {
        self.fit.fwhm()
    }
}

/// Minimum number of clicks needed for a histogram fit.
pub const MIN_JITTER_CLICKS: usize = 100;

/// Histogram of click time minus the nearest pulse peak, with a Gaussian fit.
pub fn jitter_experiment(config: &JitterConfig, params: &NfadParams, seed: u64) -> Result<JitterResult> {
    params.validate()?;
    check_trigger_rate(config.trigger_rate, params)?;
    let scenario = OpticalScenario::blinded_pulse_train(
        config.p_blinding,
        config.e_pulse,
        config.pulse_fwhm,
        config.trigger_rate,
        config.n_pulses,
        seed,
    )?;
    let run = simulate(&scenario, params, derive_seed(seed, 3))?;
    let peaks: Vec<f64> = scenario.pulses().iter().map(|p| p.t_peak).collect();
    let delays: Vec<f64> = run
        .clicks
        .iter()
        .filter(|c| c.cause != Cause::Dark)
        .map(|c| {
            let i = peaks.partition_point(|&t| t < c.t);
            let before = i.checked_sub(1).map(|j| c.t - peaks[j]);
            let after = peaks.get(i).map(|&t| c.t - t);
            match (before, after) {
                (Some(b), Some(a)) => {
                    if b.abs() <= a.abs() {
                        b
                    } else {
                        a
                    }
                }
                (Some(b), None) => b,
                (None, Some(a)) => a,
                (None, None) => unreachable!("run has pulses"),
            }
        })
        .collect();
    if delays.len() < MIN_JITTER_CLICKS {
        return Err(Error::TooFewClicks { found: delays.len(), required: MIN_JITTER_CLICKS });
    }
    let histogram = Histogram::from_samples(&delays, config.bin_width);
    let fit =
        fit_gaussian(&histogram).ok_or(Error::TooFewClicks { found: delays.len(), required: MIN_JITTER_CLICKS })?;
    Ok(JitterResult { histogram, fit, clicks: delays.len() })
}

/// Forced-click schedule with optional deadtime-gated blinding.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedBlindingPlan {
    /// Peak times of the trigger pulses (s), increasing.
    pub trigger_times: Vec<f64>,
    pub e_pulse: f64,
    pub pulse_fwhm: f64,
    pub p_blinding: f64,
    /// `false` keeps the blinding laser on for the whole run.
    pub gated: bool,
    /// How long the laser stays on after each trigger (s).
    pub laser_off_margin: f64,
    /// How long before the end of the deadtime the laser comes back on (s).
    pub on_lead: f64,
    pub duration: f64,
}

/// Default re-illumination lead before the end of the deadtime (s).
pub const DEFAULT_ON_LEAD: f64 = 0.5e-6;
/// Default time the laser stays on past each trigger peak (s).
pub const DEFAULT_OFF_MARGIN: f64 = 1e-9;

impl GatedBlindingPlan {
    /// Periodic triggers at `rate`, the first half a period into the run.
    pub fn periodic(rate: f64, n: usize, e_pulse: f64, pulse_fwhm: f64, p_blinding: f64, gated: bool) -> Self {
        let period = 1.0 / rate;
        Self {
            trigger_times: (0..n).map(|i| (i as f64 + 0.5) * period).collect(),
            e_pulse,
            pulse_fwhm,
            p_blinding,
            gated,
            laser_off_margin: DEFAULT_OFF_MARGIN,
            on_lead: DEFAULT_ON_LEAD,
            duration: n as f64 * period,
        }
    }

    pub fn validate(&self, params: &NfadParams) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if !(self.duration > 0.0) {
            return bad("duration must be > 0".into());
        }
        if !(self.on_lead >= 0.0 && self.laser_off_margin >= 0.0) {
            return bad("on_lead and laser_off_margin must be >= 0".into());
        }
        if self.gated && self.laser_off_margin <= 0.0 {
            return bad("gated plan needs laser_off_margin > 0 so the trigger lands on a blinded diode".into());
        }
        if self.on_lead > params.tau_d {
            return bad(format!("on_lead {} s exceeds the deadtime", self.on_lead));
        }
        if self.laser_off_margin >= params.tau_d - self.on_lead {
            return bad("laser_off_margin leaves no dark interval inside the deadtime".into());
        }
        if self.trigger_times.iter().any(|&t| !(0.0..=self.duration).contains(&t)) {
            return bad("trigger outside the run".into());
        }
        if let Some(w) = self.trigger_times.windows(2).find(|w| w[1] - w[0] <= params.tau_d) {
            return bad(format!("triggers at {} s and {} s are closer than the deadtime", w[0], w[1]));
        }
        Ok(())
    }

    /// Laser-on intervals of the blinding laser.
    pub fn illumination(&self, params: &NfadParams) -> Vec<CwSegment> {
        if self.p_blinding <= 0.0 {
            return Vec::new();
        }
        if !self.gated {
            return vec![CwSegment { t_start: 0.0, t_end: self.duration, power: self.p_blinding }];
        }
        let mut out: Vec<CwSegment> = Vec::with_capacity(self.trigger_times.len());
        let mut start = self.trigger_times.first().map_or(0.0, |&t| (t - self.on_lead).max(0.0));
        for &t in &self.trigger_times {
            let end = (t + self.laser_off_margin).min(self.duration);
            if end > start {
                out.push(CwSegment { t_start: start, t_end: end, power: self.p_blinding });
            }
            start = (t + params.tau_d - self.on_lead).max(end);
        }
        out
    }

    pub fn scenario(&self, params: &NfadParams, seed: u64) -> Result<OpticalScenario> {
        let pulses = self
            .trigger_times
            .iter()
            .map(|&t| TriggerPulse { t_peak: t, energy: self.e_pulse, fwhm: self.pulse_fwhm })
            .collect();
        OpticalScenario::new(self.illumination(params), pulses, 0.0, self.duration, seed)
    }
}

/// Simulate a forced-click schedule with continuous or gated blinding.
pub fn gated_blinding_run(plan: &GatedBlindingPlan, params: &NfadParams, seed: u64) -> Result<DetectorRun> {
    params.validate()?;
    plan.validate(params)?;
    let scenario = plan.scenario(params, seed)?;
    simulate(&scenario, params, derive_seed(seed, 11))
}
