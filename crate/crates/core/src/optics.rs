//! Optical timelines: CW blinding segments, bright trigger pulses and a
//! Poissonian single-photon flux, combined additively as seen by the APD.

use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};
use crate::FWHM_PER_SIGMA;

/// CW power held over the half-open interval `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub power: f64,
}

/// Bright Gaussian pulse of total `energy` centred on `t_peak`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerPulse {
    pub t_peak: f64,
    pub energy: f64,
    pub fwhm: f64,
}

impl TriggerPulse {
    /// Envelope power at `t`; integrates to `energy`.
    pub fn power_at(&self, t: f64) -> f64 {
        let sigma = self.fwhm / FWHM_PER_SIGMA;
        let z = (t - self.t_peak) / sigma;
        self.energy / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalScenario {
    cw: Vec<CwSegment>,
    pulses: Vec<TriggerPulse>,
    photon_rate: f64,
    duration: f64,
    rng_seed: u64,
}

impl OpticalScenario {
    /// Build and validate a scenario. Segments and pulses are sorted by time.
    pub fn new(
        mut cw: Vec<CwSegment>,
        mut pulses: Vec<TriggerPulse>,
        photon_rate: f64,
        duration: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidScenario(format!("duration must be > 0, got {duration}")));
        }
        if !(photon_rate.is_finite() && photon_rate >= 0.0) {
            return Err(Error::InvalidScenario(format!("photon rate must be >= 0, got {photon_rate}")));
        }
        cw.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        for s in &cw {
            if !(s.t_start < s.t_end) || s.t_start < 0.0 || s.t_end > duration {
                return Err(Error::InvalidScenario(format!(
                    "CW segment [{}, {}) outside [0, {duration}] or empty",
                    s.t_start, s.t_end
                )));
            }
            if !(s.power.is_finite() && s.power >= 0.0) {
                return Err(Error::InvalidScenario(format!("negative CW power {}", s.power)));
            }
        }
        if let Some(w) = cw.windows(2).find(|w| w[1].t_start < w[0].t_end) {
            return Err(Error::InvalidScenario(format!("CW segments overlap at t = {} s", w[1].t_start)));
        }
        pulses.sort_by(|a, b| a.t_peak.total_cmp(&b.t_peak));
        for p in &pulses {
            if !(0.0..=duration).contains(&p.t_peak) {
                return Err(Error::InvalidScenario(format!("pulse at {} s outside the run", p.t_peak)));
            }
            if !(p.energy.is_finite() && p.energy >= 0.0) || !(p.fwhm > 0.0) {
                return Err(Error::InvalidScenario("pulse energy must be >= 0 and fwhm > 0".into()));
            }
        }
        Ok(Self { cw, pulses, photon_rate, duration, rng_seed })
    }

    /// Constant CW blinding over the whole run plus periodic identical pulses.
    pub fn blinded_pulse_train(
        p_blinding: f64,
        energy: f64,
        fwhm: f64,
        trigger_rate: f64,
        n_pulses: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(trigger_rate > 0.0) {
            return Err(Error::InvalidScenario("trigger rate must be > 0".into()));
        }
        let period = 1.0 / trigger_rate;
        let duration = period * n_pulses.max(1) as f64;
        let pulses = (0..n_pulses).map(|i| TriggerPulse { t_peak: (i as f64 + 0.5) * period, energy, fwhm }).collect();
        let cw = if p_blinding > 0.0 {
            vec![CwSegment { t_start: 0.0, t_end: duration, power: p_blinding }]
        } else {
            Vec::new()
        };
        Self::new(cw, pulses, 0.0, duration, rng_seed)
    }

    pub fn cw(&self) -> &[CwSegment] {
        &self.cw
    }

    pub fn pulses(&self) -> &[TriggerPulse] {
        &self.pulses
    }

    pub fn photon_rate(&self) -> f64 {
        self.photon_rate
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// CW power at `t` without range checking.
    pub(crate) fn cw_power_unchecked(&self, t: f64) -> f64 {
        let idx = self.cw.partition_point(|s| s.t_start <= t);
        match idx.checked_sub(1).map(|i| &self.cw[i]) {
            Some(s) if t < s.t_end => s.power,
            _ => 0.0,
        }
    }

    /// Mean optical power of the Poissonian photon flux (W).
    pub fn photon_flux_power(&self) -> f64 {
        self.photon_rate * crate::PHOTON_ENERGY
    }

    /// CW plus photon flux plus pulse envelopes at `t`.
    pub fn instantaneous_power(&self, t: f64) -> f64 {
        let pulses: f64 =
            self.pulses.iter().filter(|p| (t - p.t_peak).abs() < 10.0 * p.fwhm).map(|p| p.power_at(t)).sum();
        self.cw_power_unchecked(t) + self.photon_flux_power() + pulses
    }

    /// Lazily realised photon arrivals, reproducible from the scenario seed.
    pub fn photon_stream(&self) -> PhotonStream {
        PhotonStream::new(self.photon_rate, self.duration, self.rng_seed)
    }
}

/// Power of the CW segment covering `t` (half-open), or zero.
pub fn cw_power_at(scenario: &OpticalScenario, t: f64) -> Result<f64> {
    if !(0.0..=scenario.duration).contains(&t) {
        return Err(Error::TimeOutOfRange { t, duration: scenario.duration });
    }
    Ok(scenario.cw_power_unchecked(t))
}

/// Realised homogeneous Poisson arrival times over `[0, duration]`.
pub fn sample_photon_arrivals(scenario: &OpticalScenario) -> Vec<f64> {
    scenario.photon_stream().collect()
}

/// Iterator over photon arrival times, drawing exponential gaps on demand.
pub struct PhotonStream {
    rng: SimRng,
    gap: Option<Exp<f64>>,
    t: f64,
    duration: f64,
}

impl PhotonStream {
    pub fn new(rate: f64, duration: f64, seed: u64) -> Self {
        let gap = (rate > 0.0).then(|| Exp::new(rate).expect("rate > 0"));
        Self { rng: seeded(seed), gap, t: 0.0, duration }
    }
}

impl Iterator for PhotonStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let gap = self.gap.as_ref()?;
        self.t += gap.sample(&mut self.rng);
        if self.t > self.duration {
            self.gap = None;
            return None;
        }
        Some(self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(power: f64) -> OpticalScenario {
        OpticalScenario::new(vec![CwSegment { t_start: 0.0, t_end: 1.0, power }], vec![], 0.0, 1.0, 1).unwrap()
    }

    #[test]
    fn empty_cw_is_dark() {
        let s = OpticalScenario::new(vec![], vec![], 0.0, 2.0, 0).unwrap();
        assert_eq!(cw_power_at(&s, 0.3).unwrap(), 0.0);
        assert_eq!(cw_power_at(&s, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn covering_segment_power() {
        assert_eq!(cw_power_at(&single(7e-9), 0.5).unwrap(), 7e-9);
    }

    #[test]
    fn segments_are_half_open() {
        let s = OpticalScenario::new(vec![CwSegment { t_start: 0.2, t_end: 0.5, power: 1e-9 }], vec![], 0.0, 1.0, 0)
            .unwrap();
        assert_eq!(cw_power_at(&s, 0.2).unwrap(), 1e-9);
        assert_eq!(cw_power_at(&s, 0.5).unwrap(), 0.0);
        assert_eq!(cw_power_at(&s, 0.1999).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_time_rejected() {
        assert!(matches!(cw_power_at(&single(1e-9), 1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(cw_power_at(&single(1e-9), -0.1).is_err());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let seg = |a, b| CwSegment { t_start: a, t_end: b, power: 1e-9 };
        assert!(OpticalScenario::new(vec![], vec![], 0.0, 0.0, 0).is_err());
        assert!(OpticalScenario::new(vec![seg(0.0, 0.6), seg(0.5, 0.9)], vec![], 0.0, 1.0, 0).is_err());
        assert!(OpticalScenario::new(vec![seg(0.5, 0.5)], vec![], 0.0, 1.0, 0).is_err());
        let p = TriggerPulse { t_peak: 2.0, energy: 1e-15, fwhm: 33e-12 };
        assert!(OpticalScenario::new(vec![], vec![p], 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_rate_has_no_photons() {
        let s = OpticalScenario::new(vec![], vec![], 0.0, 1.0, 3).unwrap();
        assert!(sample_photon_arrivals(&s).is_empty());
    }

    #[test]
    fn poisson_count_mean() {
        // 100 seeds of a 1e6 Hz, 1 s flux: sample mean within 4σ of the mean
        // (σ of one count is 1e3, of the mean 1e2).
        let total: usize = (0..100)
            .map(|seed| {
                let s = OpticalScenario::new(vec![], vec![], 1e6, 1.0, seed).unwrap();
                s.photon_stream().count()
            })
            .sum();
        let mean = total as f64 / 100.0;
        assert!((mean - 1e6).abs() < 4.0 * 1e2, "mean {mean}");
    }

    #[test]
    fn arrivals_are_sorted_and_in_range() {
        let s = OpticalScenario::new(vec![], vec![], 5e4, 0.1, 11).unwrap();
        let t = sample_photon_arrivals(&s);
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert!(t.iter().all(|&x| (0.0..=0.1).contains(&x)));
    }

    #[test]
    fn pulse_envelope_integrates_to_energy() {
        let p = TriggerPulse { t_peak: 1e-9, energy: 12.8e-15, fwhm: 33e-12 };
        let dt = 0.1e-12;
        let integral: f64 = (0..20_000).map(|i| p.power_at(i as f64 * dt) * dt).sum();
        assert!((integral / p.energy - 1.0).abs() < 1e-6);
        // half maximum at ±FWHM/2
        let peak = p.power_at(p.t_peak);
        assert!((p.power_at(p.t_peak + p.fwhm / 2.0) / peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn powers_add() {
        let pulse = TriggerPulse { t_peak: 0.5, energy: 1e-15, fwhm: 1e-9 };
        let s =
            OpticalScenario::new(vec![CwSegment { t_start: 0.0, t_end: 1.0, power: 2e-9 }], vec![pulse], 1e9, 1.0, 0)
                .unwrap();
        let expect = 2e-9 + 1e9 * crate::PHOTON_ENERGY + pulse.power_at(0.5 + 2e-10);
        assert!((s.instantaneous_power(0.5 + 2e-10) - expect).abs() < 1e-18);
    }
}
