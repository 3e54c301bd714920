//! Event-driven detector state machine.
//!
//! Photons, dark counts and trigger pulses are merged in time order. Whether
//! an event can click depends on the armed operating point at that instant:
//! in Geiger mode single photons fire with the detection efficiency, in linear
//! mode only bright pulses whose comparator amplitude beats the noisy
//! threshold do. Every click holds the diode quenched for `tau_d`, and pulses
//! arriving in that window are suppressed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::circuit::{solve_operating_point, Mode, NfadParams, OperatingPoint};
use crate::error::{Error, Result};
use crate::optics::{OpticalScenario, PhotonStream};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::stats::normal_cdf;
use crate::{ELEMENTARY_CHARGE, FWHM_PER_SIGMA, PHOTON_ENERGY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    Photon,
    FakedState,
    Dark,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Photon => "photon",
            Cause::FakedState => "faked",
            Cause::Dark => "dark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    /// Registered time after jitter (s).
    pub t: f64,
    pub cause: Cause,
    /// Comparator-input amplitude that produced the click (V).
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSegment {
    pub t_start: f64,
    pub t_end: f64,
    /// APD supply current (A).
    pub current: f64,
    pub mode: Mode,
}

/// Piecewise-constant supply current tiling `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentTrace {
    pub segments: Vec<CurrentSegment>,
}

impl CurrentTrace {
    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// Charge delivered over `[a, b)` (C).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let first = self.segments.partition_point(|s| s.t_end <= a);
        self.segments[first..]
            .iter()
            .take_while(|s| s.t_start < b)
            .map(|s| (s.t_end.min(b) - s.t_start.max(a)).max(0.0) * s.current)
            .sum()
    }

    /// Time-averaged current over the whole trace (A).
    pub fn mean(&self) -> f64 {
        let d = self.duration();
        if d > 0.0 {
            self.integral(0.0, d) / d
        } else {
            0.0
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        self.segments.get(idx).map_or(0.0, |s| s.current)
    }
}

#[derive(Debug, Clone)]
pub struct DetectorRun {
    pub clicks: Vec<ClickEvent>,
    pub current_trace: CurrentTrace,
    pub params: NfadParams,
    pub scenario: OpticalScenario,
    pub rng_seed: u64,
}

impl DetectorRun {
    pub fn duration(&self) -> f64 {
        self.scenario.duration()
    }

    pub fn click_rate(&self) -> f64 {
        self.clicks.len() as f64 / self.duration()
    }

    pub fn mean_current(&self) -> f64 {
        self.current_trace.mean()
    }

    pub fn count(&self, cause: Cause) -> usize {
        self.clicks.iter().filter(|c| c.cause == cause).count()
    }

    /// Intervals where the armed diode sat in linear mode, i.e. was blinded.
    pub fn blinded_windows(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for s in self.current_trace.segments.iter().filter(|s| s.mode == Mode::Linear) {
            match out.last_mut() {
                Some(last) if last.1 >= s.t_start => last.1 = s.t_end,
                _ => out.push((s.t_start, s.t_end)),
            }
        }
        out
    }
}

/// Comparator-input amplitude of a pulse of energy `e_pulse` at multiplication `gain` (V).
pub fn pulse_amplitude(e_pulse: f64, gain: f64, params: &NfadParams) -> f64 {
    params.amp_transimpedance * (e_pulse / PHOTON_ENERGY) * ELEMENTARY_CHARGE * gain
}

/// Pulse energy whose noiseless amplitude equals the comparator threshold (J).
pub fn threshold_energy(gain: f64, params: &NfadParams) -> f64 {
    params.v_th / pulse_amplitude(1.0, gain, params)
}

/// Probability that a pulse of energy `e_pulse` beats the noisy comparator.
pub fn click_probability(e_pulse: f64, op: &OperatingPoint, params: &NfadParams) -> Result<f64> {
    if op.mode == Mode::Geiger {
        return Err(Error::GeigerMode);
    }
    if !(e_pulse.is_finite() && e_pulse >= 0.0) {
        return Err(crate::error::invalid("e_pulse", format!("must be >= 0, got {e_pulse}")));
    }
    let a = pulse_amplitude(e_pulse, op.gain, params);
    Ok(normal_cdf((a - params.v_th) / params.noise_sigma))
}

/// Memoised operating points keyed by exact power and quench state.
#[derive(Default)]
pub(crate) struct OpCache {
    entries: Vec<(u64, bool, OperatingPoint)>,
}

impl OpCache {
    pub(crate) fn get(&mut self, power: f64, quenched: bool, params: &NfadParams) -> Result<OperatingPoint> {
        let key = power.to_bits();
        if let Some((_, _, op)) = self.entries.iter().find(|(k, q, _)| *k == key && *q == quenched) {
            return Ok(*op);
        }
        let op = solve_operating_point(power, params, quenched)?;
        self.entries.push((key, quenched, op));
        Ok(op)
    }
}

enum Source {
    Photon,
    Dark,
    Pulse(usize),
}

/// Run the detector against `scenario`. Photon arrivals come from the
/// scenario seed; click decisions, dark counts and jitter from `seed`.
pub fn simulate(scenario: &OpticalScenario, params: &NfadParams, seed: u64) -> Result<DetectorRun> {
    params.validate()?;
    let duration = scenario.duration();
    let flux = scenario.photon_flux_power();
    let mut cache = OpCache::default();

    // Photons and dark counts only matter if the armed diode can be in Geiger mode.
    let geiger_possible = {
        let mut levels: Vec<f64> = scenario.cw().iter().map(|s| flux + s.power).collect();
        if !covers(scenario) {
            levels.push(flux);
        }
        let mut any = false;
        for p in levels {
            any |= cache.get(p, false, params)?.mode == Mode::Geiger;
        }
        any
    };
    let mut photons = if geiger_possible { Some(scenario.photon_stream().peekable()) } else { None };
    let mut darks = if geiger_possible {
        Some(PhotonStream::new(params.dark_count_rate, duration, derive_seed(seed, 1)).peekable())
    } else {
        None
    };
    let pulses = scenario.pulses();
    let mut next_pulse = 0usize;
    let mut rng: SimRng = seeded(derive_seed(seed, 0));

    let sp_sigma = params.sp_jitter_fwhm / FWHM_PER_SIGMA;
    let mut clicks: Vec<ClickEvent> = Vec::new();
    let mut dead_until = f64::NEG_INFINITY;

    loop {
        let tp = photons.as_mut().and_then(|s| s.peek().copied()).unwrap_or(f64::INFINITY);
        let td = darks.as_mut().and_then(|s| s.peek().copied()).unwrap_or(f64::INFINITY);
        let tu = pulses.get(next_pulse).map_or(f64::INFINITY, |p| p.t_peak);
        let (t, source) = if tu <= tp && tu <= td {
            if tu.is_infinite() {
                break;
            }
            next_pulse += 1;
            (tu, Source::Pulse(next_pulse - 1))
        } else if tp <= td {
            photons.as_mut().unwrap().next();
            (tp, Source::Photon)
        } else {
            darks.as_mut().unwrap().next();
            (td, Source::Dark)
        };
        if t < dead_until {
            continue;
        }
        let op = cache.get(scenario.cw_power_unchecked(t) + flux, false, params)?;
        let decision = match (source, op.mode) {
            (Source::Photon, Mode::Geiger) => (rng.random::<f64>() < params.efficiency).then_some((
                Cause::Photon,
                params.avalanche_amplitude,
                sp_sigma,
            )),
            (Source::Dark, Mode::Geiger) => Some((Cause::Dark, params.avalanche_amplitude, sp_sigma)),
            (Source::Pulse(i), Mode::Geiger) => {
                let mean_photons = params.efficiency * pulses[i].energy / PHOTON_ENERGY;
                let p_click = -(-mean_photons).exp_m1();
                (rng.random::<f64>() < p_click).then_some((Cause::Photon, params.avalanche_amplitude, sp_sigma))
            }
            (Source::Pulse(i), _) => {
                let pulse = &pulses[i];
                let noise: f64 = StandardNormal.sample(&mut rng);
                let a = pulse_amplitude(pulse.energy, op.gain, params) + params.noise_sigma * noise;
                let fwhm = pulse.fwhm.hypot(params.electronics_jitter_fwhm);
                (a > params.v_th).then_some((Cause::FakedState, a, fwhm / FWHM_PER_SIGMA))
            }
            _ => None,
        };
        if let Some((cause, amplitude, sigma)) = decision {
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let t_reg = (t + sigma * jitter).clamp(0.0, duration);
            if t_reg < dead_until {
                continue;
            }
            clicks.push(ClickEvent { t: t_reg, cause, amplitude });
            dead_until = t_reg + params.tau_d;
        }
    }

    let current_trace = build_trace(scenario, params, &clicks, &mut cache)?;
    Ok(DetectorRun { clicks, current_trace, params: params.clone(), scenario: scenario.clone(), rng_seed: seed })
}

fn covers(scenario: &OpticalScenario) -> bool {
    let mut reach = 0.0;
    for s in scenario.cw() {
        if s.t_start > reach {
            return false;
        }
        reach = s.t_end;
    }
    reach >= scenario.duration()
}

fn build_trace(
    scenario: &OpticalScenario,
    params: &NfadParams,
    clicks: &[ClickEvent],
    cache: &mut OpCache,
) -> Result<CurrentTrace> {
    let duration = scenario.duration();
    let flux = scenario.photon_flux_power();
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * clicks.len() + 2 * scenario.cw().len() + 2);
    cuts.push(0.0);
    cuts.push(duration);
    for s in scenario.cw() {
        cuts.push(s.t_start);
        cuts.push(s.t_end);
    }
    for c in clicks {
        cuts.push(c.t);
        cuts.push((c.t + params.tau_d).min(duration));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut segments: Vec<CurrentSegment> = Vec::with_capacity(cuts.len());
    let mut ci = 0usize;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        while ci < clicks.len() && clicks[ci].t + params.tau_d <= mid {
            ci += 1;
        }
        let quenched = ci < clicks.len() && clicks[ci].t <= mid;
        let op = cache.get(scenario.cw_power_unchecked(mid) + flux, quenched, params)?;
        let current = if op.mode == Mode::Geiger { 0.0 } else { op.i_apd };
        match segments.last_mut() {
            Some(last) if last.current == current && last.mode == op.mode => last.t_end = b,
            _ => segments.push(CurrentSegment { t_start: a, t_end: b, current, mode: op.mode }),
        }
    }
    Ok(CurrentTrace { segments })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRatePoint {
    /// Incident photon rate (1/s).
    pub rate_in: f64,
    /// Measured click rate (1/s).
    pub rate_out: f64,
    /// Time-averaged supply current (A).
    pub mean_current: f64,
    /// Simulated duration used for this point (s).
    pub duration: f64,
}

/// Upper bound on photons drawn per sweep point.
pub const MAX_PHOTONS_PER_POINT: f64 = 2e7;

/// Sweep the incident photon rate and record click rate and mean current.
///
/// Each point runs for `duration`, shortened at high rates to keep the photon
/// count near [`MAX_PHOTONS_PER_POINT`] but never below 100 deadtimes.
pub fn count_rate_curve(
    photon_rates: &[f64],
    params: &NfadParams,
    duration: f64,
    seed: u64,
) -> Result<Vec<CountRatePoint>> {
    if let Some(r) = photon_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(crate::error::invalid("photon_rate", format!("must be >= 0, got {r}")));
    }
    photon_rates
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| {
            let d = if rate > 0.0 {
                duration.min((MAX_PHOTONS_PER_POINT / rate).max(100.0 * params.tau_d))
            } else {
                duration
            };
            let scenario = OpticalScenario::new(vec![], vec![], rate, d, derive_seed(seed, 2 * i as u64))?;
            let run = simulate(&scenario, params, derive_seed(seed, 2 * i as u64 + 1))?;
            Ok(CountRatePoint {
                rate_in: rate,
                rate_out: run.click_rate(),
                mean_current: run.mean_current(),
                duration: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::min_blinding_power;
    use crate::optics::{CwSegment, TriggerPulse};
    use crate::presets::Preset;

    fn d2() -> NfadParams {
        Preset::D2.params()
    }

    #[test]
    fn probability_is_half_at_threshold() {
        let p = d2();
        let op = solve_operating_point(10e-9, &p, false).unwrap();
        let e = threshold_energy(op.gain, &p);
        assert!((click_probability(e, &op, &p).unwrap() - 0.5).abs() < 1e-12);
        let dark = click_probability(0.0, &op, &p).unwrap();
        assert!(dark < 1e-15);
    }

    #[test]
    fn probability_rejects_geiger() {
        let p = d2();
        let op = solve_operating_point(0.0, &p, false).unwrap();
        assert!(matches!(click_probability(1e-15, &op, &p), Err(Error::GeigerMode)));
    }

    #[test]
    fn d1_transition_near_ten_femtojoules() {
        let p = Preset::D1.params();
        let op = solve_operating_point(250e-9, &p, false).unwrap();
        let pr = |e: f64| click_probability(e, &op, &p).unwrap();
        assert!(pr(7e-15) < 0.01);
        assert!((pr(10e-15) - 0.5).abs() < 0.02);
        assert!(pr(13e-15) > 0.99);
    }

    #[test]
    fn dark_scenario_is_silent() {
        let s = OpticalScenario::new(vec![], vec![], 0.0, 0.01, 0).unwrap();
        let run = simulate(&s, &d2(), 1).unwrap();
        assert!(run.clicks.is_empty());
        assert!(run.current_trace.segments.iter().all(|s| s.current == 0.0));
        assert_eq!(run.current_trace.segments.len(), 1);
    }

    #[test]
    fn saturated_plateau() {
        let p = d2();
        let s = OpticalScenario::new(vec![], vec![], 1e7, 0.05, 3).unwrap();
        let run = simulate(&s, &p, 4).unwrap();
        let expect = 1.0 / (p.tau_d + 1.0 / (p.efficiency * 1e7));
        assert!((run.click_rate() / expect - 1.0).abs() < 0.03, "{}", run.click_rate());
        assert!(run.click_rate() <= 1.0 / p.tau_d);
        assert!(run.clicks.windows(2).all(|w| w[1].t - w[0].t >= p.tau_d));
    }

    #[test]
    fn one_faked_click_per_bright_pulse() {
        let p = d2();
        let n = 400;
        let s = OpticalScenario::blinded_pulse_train(10e-9, 5e-15, 33e-12, 40e3, n, 5).unwrap();
        let run = simulate(&s, &p, 6).unwrap();
        assert_eq!(run.clicks.len(), n);
        assert!(run.clicks.iter().all(|c| c.cause == Cause::FakedState && c.amplitude > p.v_th));
    }

    #[test]
    fn blinded_detector_ignores_photons() {
        let p = d2();
        let pmin = min_blinding_power(&p).unwrap();
        let s = OpticalScenario::new(
            vec![CwSegment { t_start: 0.0, t_end: 0.01, power: 2.0 * pmin }],
            vec![],
            1e7,
            0.01,
            9,
        )
        .unwrap();
        let run = simulate(&s, &p, 1).unwrap();
        assert!(run.clicks.is_empty());
        assert!(run.mean_current() > 0.0);
        assert_eq!(run.blinded_windows(), vec![(0.0, 0.01)]);
    }

    #[test]
    fn pulses_in_deadtime_are_suppressed() {
        let p = d2();
        let pulses = vec![
            TriggerPulse { t_peak: 1e-6, energy: 1e-14, fwhm: 33e-12 },
            TriggerPulse { t_peak: 10e-6, energy: 1e-14, fwhm: 33e-12 },
            TriggerPulse { t_peak: 30e-6, energy: 1e-14, fwhm: 33e-12 },
        ];
        let s =
            OpticalScenario::new(vec![CwSegment { t_start: 0.0, t_end: 40e-6, power: 10e-9 }], pulses, 0.0, 40e-6, 0)
                .unwrap();
        let run = simulate(&s, &p, 0).unwrap();
        assert_eq!(run.clicks.len(), 2);
        // quenched in [t1, t1 + tau_d), linear elsewhere
        let q = run.current_trace.segments.iter().filter(|s| s.mode == Mode::Quenched).count();
        assert_eq!(q, 2);
    }

    #[test]
    fn trace_tiles_the_run() {
        let p = d2();
        let s = OpticalScenario::new(vec![], vec![], 5e5, 0.01, 2).unwrap();
        let run = simulate(&s, &p, 2).unwrap();
        let segs = &run.current_trace.segments;
        assert_eq!(segs[0].t_start, 0.0);
        assert_eq!(segs.last().unwrap().t_end, 0.01);
        assert!(segs.windows(2).all(|w| w[0].t_end == w[1].t_start));
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = d2();
        let s = OpticalScenario::new(vec![], vec![], 1e6, 0.005, 8).unwrap();
        let a = simulate(&s, &p, 1).unwrap();
        let b = simulate(&s, &p, 1).unwrap();
        assert_eq!(a.clicks, b.clicks);
        assert_eq!(a.current_trace, b.current_trace);
    }

    #[test]
    fn zero_rate_point() {
        let mut p = d2();
        p.dark_count_rate = 1e3;
        let pts = count_rate_curve(&[0.0], &p, 0.2, 4).unwrap();
        assert!((pts[0].rate_out - 1e3).abs() < 5.0 * (1e3f64 / 0.2).sqrt() / 0.2 + 50.0);
        assert!(pts[0].mean_current < 1e-12);
    }
}
