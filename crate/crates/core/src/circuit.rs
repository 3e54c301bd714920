//! DC operating point of the APD inside its bias network.
//!
//! The diode sits in series with the integrated resistor `R` and the external
//! resistors `R1`, `R2`. Under steady illumination `P` the photocurrent
//! `S·M(v)·P` develops a drop across the series resistance, so the diode
//! voltage satisfies
//!
//! ```text
//! v = V_eff − S · M(v) · P · (R + R1 + R2)
//! ```
//!
//! with `V_eff = V_bias` when armed and `V_bias − V_quench` during the deadtime.
//! `M(v) = 1 / (1 − (v / V_br)^n)` is the empirical multiplication law.
//!
//! An armed diode is only held in linear mode while the steady gain stays at or
//! below [`NfadParams::max_linear_gain`]; above that the multiplied current can
//! no longer hold the diode off and it keeps firing as a Geiger-mode detector.

use crate::error::{invalid, Error, Result};

/// Electrical and optical parameters of one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct NfadParams {
    /// Breakdown voltage (V).
    pub v_br: f64,
    /// Excess bias above breakdown (V).
    pub v_excess: f64,
    /// Resistor integrated into the NFAD (Ω).
    pub r_integrated: f64,
    /// External series resistor on the amplifier side (Ω).
    pub r1: f64,
    /// External series resistor to ground (Ω).
    pub r2: f64,
    /// Anode voltage applied during the deadtime (V).
    pub v_quench: f64,
    /// Comparator threshold at the amplifier output (V).
    pub v_th: f64,
    /// Deadtime (s).
    pub tau_d: f64,
    /// Unity-gain photoresponse at 1550 nm (A/W).
    pub responsivity: f64,
    /// Exponent of the multiplication law.
    pub gain_exponent: f64,
    /// Largest multiplication an armed diode holds steadily in linear mode.
    pub max_linear_gain: f64,
    /// Avalanche charge to comparator-input amplitude conversion (V/C).
    pub amp_transimpedance: f64,
    /// Gaussian amplitude noise at the comparator input (V).
    pub noise_sigma: f64,
    /// Comparator-input amplitude of a Geiger-mode avalanche (V).
    pub avalanche_amplitude: f64,
    /// Single-photon timing jitter, FWHM (s).
    pub sp_jitter_fwhm: f64,
    /// Residual electronic jitter added to faked-state clicks, FWHM (s).
    pub electronics_jitter_fwhm: f64,
    /// Single-photon detection efficiency at this bias.
    pub efficiency: f64,
    /// Dark count rate (Hz).
    pub dark_count_rate: f64,
    /// Active area diameter (m).
    pub active_diameter: f64,
}

impl NfadParams {
    pub fn v_bias(&self) -> f64 {
        self.v_br + self.v_excess
    }

    /// Total series resistance `R + R1 + R2`.
    pub fn r_series(&self) -> f64 {
        self.r_integrated + self.r1 + self.r2
    }

    /// Highest armed-diode voltage compatible with a steady linear-mode solution.
    pub fn linear_edge(&self) -> f64 {
        self.v_br * (1.0 - 1.0 / self.max_linear_gain).powf(1.0 / self.gain_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, x: f64) -> Result<()> {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {x}")))
            }
        }
        positive("v_br", self.v_br)?;
        positive("v_excess", self.v_excess)?;
        positive("r_integrated", self.r_integrated)?;
        positive("r1", self.r1)?;
        positive("r2", self.r2)?;
        positive("v_th", self.v_th)?;
        positive("tau_d", self.tau_d)?;
        positive("responsivity", self.responsivity)?;
        positive("gain_exponent", self.gain_exponent)?;
        positive("amp_transimpedance", self.amp_transimpedance)?;
        positive("noise_sigma", self.noise_sigma)?;
        positive("avalanche_amplitude", self.avalanche_amplitude)?;
        positive("sp_jitter_fwhm", self.sp_jitter_fwhm)?;
        positive("active_diameter", self.active_diameter)?;
        if !(self.max_linear_gain.is_finite() && self.max_linear_gain > 1.0) {
            return Err(invalid("max_linear_gain", format!("must be > 1, got {}", self.max_linear_gain)));
        }
        if !(self.electronics_jitter_fwhm.is_finite() && self.electronics_jitter_fwhm >= 0.0) {
            return Err(invalid("electronics_jitter_fwhm", "must be >= 0"));
        }
        if !(self.dark_count_rate.is_finite() && self.dark_count_rate >= 0.0) {
            return Err(invalid("dark_count_rate", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(invalid("efficiency", format!("must lie in [0, 1], got {}", self.efficiency)));
        }
        if !(self.v_quench.is_finite() && self.v_quench >= 0.0) {
            return Err(invalid("v_quench", "must be >= 0"));
        }
        if self.v_quench >= self.v_bias() {
            return Err(invalid("v_quench", format!("{} V would reverse the {} V bias", self.v_quench, self.v_bias())));
        }
        if self.avalanche_amplitude <= self.v_th {
            return Err(invalid("avalanche_amplitude", "must exceed the comparator threshold"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Geiger,
    Linear,
    Quenched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Steady-state voltage across the APD (V).
    pub v_apd: f64,
    /// Steady-state APD current (A).
    pub i_apd: f64,
    /// Multiplication at `v_apd`; 1 when not defined (Geiger mode).
    pub gain: f64,
    pub mode: Mode,
}

/// Empirical multiplication `M(v) = 1 / (1 − (v / V_br)^n)` for `0 ≤ v < V_br`.
pub fn gain(v_apd: f64, params: &NfadParams) -> Result<f64> {
    if !(v_apd >= 0.0 && v_apd < params.v_br) {
        return Err(Error::GainDomain { v_apd, v_br: params.v_br });
    }
    Ok(gain_unchecked(v_apd, params.v_br, params.gain_exponent))
}

#[inline]
fn gain_unchecked(v: f64, v_br: f64, n: f64) -> f64 {
    // 1 - x^n = -expm1(n ln x) keeps precision right below breakdown.
    let x = v / v_br;
    if x <= 0.0 {
        return 1.0;
    }
    -1.0 / (n * x.ln()).exp_m1()
}

/// Self-consistency residual `v − V_eff + S·M(v)·P·R_s`; increasing in `v`.
pub(crate) fn self_consistency(v: f64, v_eff: f64, p_optical: f64, params: &NfadParams) -> f64 {
    let m = gain_unchecked(v, params.v_br, params.gain_exponent);
    v - v_eff + params.responsivity * m * p_optical * params.r_series()
}

const MAX_BISECTIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-6;
/// Voltages within this distance of breakdown classify as linear.
pub const MODE_TIE_TOL: f64 = 1e-6;

/// Solve the steady operating point under CW illumination `p_optical` (W).
pub fn solve_operating_point(p_optical: f64, params: &NfadParams, quenched: bool) -> Result<OperatingPoint> {
    if !(p_optical.is_finite() && p_optical >= 0.0) {
        return Err(invalid("p_optical", format!("must be finite and >= 0, got {p_optical}")));
    }
    let v_eff = if quenched { params.v_bias() - params.v_quench } else { params.v_bias() };
    if v_eff < 0.0 {
        return Err(Error::NegativeBias(v_eff));
    }
    let r_s = params.r_series();
    let idle_mode = if quenched { Mode::Quenched } else { Mode::Geiger };
    let lit_mode = if quenched { Mode::Quenched } else { Mode::Linear };

    // Above breakdown the armed diode only stays linear up to the gain cap.
    let upper = if v_eff < params.v_br { v_eff } else { params.linear_edge() };

    if p_optical == 0.0 {
        if v_eff < params.v_br {
            return Ok(OperatingPoint {
                v_apd: v_eff,
                i_apd: 0.0,
                gain: gain_unchecked(v_eff, params.v_br, params.gain_exponent),
                mode: lit_mode,
            });
        }
        return Ok(OperatingPoint { v_apd: v_eff, i_apd: 0.0, gain: 1.0, mode: idle_mode });
    }

    if self_consistency(upper, v_eff, p_optical, params) < 0.0 {
        // Too little light to hold the diode below breakdown.
        return Ok(OperatingPoint { v_apd: v_eff, i_apd: 0.0, gain: 1.0, mode: idle_mode });
    }
    if self_consistency(0.0, v_eff, p_optical, params) >= 0.0 {
        // Photocurrent exceeds what the supply can drive through R_s.
        return Ok(OperatingPoint { v_apd: 0.0, i_apd: v_eff / r_s, gain: 1.0, mode: lit_mode });
    }

    let (mut lo, mut hi) = (0.0_f64, upper);
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if self_consistency(mid, v_eff, p_optical, params) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let r_lo = self_consistency(lo, v_eff, p_optical, params).abs();
    let r_hi = self_consistency(hi, v_eff, p_optical, params).abs();
    let (v, residual) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if residual > RESIDUAL_TOL {
        return Err(Error::NonConvergence { iterations, residual });
    }
    let mode = if quenched {
        Mode::Quenched
    } else if v <= params.v_br + MODE_TIE_TOL {
        Mode::Linear
    } else {
        Mode::Geiger
    };
    Ok(OperatingPoint {
        v_apd: v,
        i_apd: (v_eff - v) / r_s,
        gain: gain_unchecked(v, params.v_br, params.gain_exponent),
        mode,
    })
}

/// Smallest CW power that drives the armed diode into linear mode (W).
///
/// Bisection over power to a relative width of 1e-3.
pub fn min_blinding_power(params: &NfadParams) -> Result<f64> {
    params.validate()?;
    let blinded = |p: f64| -> Result<bool> { Ok(solve_operating_point(p, params, false)?.mode == Mode::Linear) };
    let mut hi = 1e-12;
    while !blinded(hi)? {
        hi *= 4.0;
        if hi > 1.0 {
            return Err(Error::Calibration("detector not blinded below 1 W".into()));
        }
    }
    let mut lo = hi / 4.0;
    while blinded(lo)? {
        hi = lo;
        lo /= 4.0;
        if lo < 1e-30 {
            return Ok(0.0);
        }
    }
    while (hi - lo) > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if blinded(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
