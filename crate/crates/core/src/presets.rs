//! Detector presets D1–D4.
//!
//! Published values: integrated resistor, external resistors, quench voltages,
//! deadtimes, active diameters, D1 excess bias at 10 %/20 % efficiency, D3/D4
//! excess bias and the jitter FWHMs. Everything else is a calibrated default
//! (marked `calibrated` below); see [`crate::calibration`] for how those were
//! obtained.

use std::fmt;
use std::str::FromStr;

use crate::circuit::NfadParams;
use crate::error::{invalid, Result};

/// Breakdown voltage shared by all presets (calibrated).
pub const V_BR: f64 = 70.0;
/// Multiplication law exponent (calibrated against the 10 % / 40 kHz current).
pub const GAIN_EXPONENT: f64 = 3.0;
/// Unity-gain responsivity at 1550 nm (calibrated against the 10 % / 40 kHz current).
pub const RESPONSIVITY: f64 = 0.6723;
/// Charge to comparator amplitude conversion (calibrated so D1 at 10 % and
/// 250 nW blinding crosses threshold at 10 fJ).
pub const AMP_TRANSIMPEDANCE: f64 = 5.195e11;

/// Integrated NFAD resistor (published).
pub const R_INTEGRATED: f64 = 1.1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    D1,
    D2,
    D3,
    D4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::D1, Preset::D2, Preset::D3, Preset::D4];

    pub fn name(self) -> &'static str {
        match self {
            Preset::D1 => "d1",
            Preset::D2 => "d2",
            Preset::D3 => "d3",
            Preset::D4 => "d4",
        }
    }

    /// Efficiency settings with their excess bias, `(efficiency, v_excess)`.
    pub fn bias_table(self) -> &'static [(f64, f64)] {
        match self {
            // published: 1.3 V and 4.1 V
            Preset::D1 => &[(0.10, 1.3), (0.20, 4.1)],
            // calibrated: the D2 bias is not published
            Preset::D2 => &[(0.10, 2.9), (0.20, 4.5)],
            // published excess 2 V / 5 V; efficiencies calibrated
            Preset::D3 | Preset::D4 => &[(0.10, 2.0), (0.25, 5.0)],
        }
    }

    /// Parameters at the preset's default (first) bias setting.
    pub fn params(self) -> NfadParams {
        let (eff, v_excess) = self.bias_table()[0];
        self.base(eff, v_excess)
    }

    /// Parameters at one of the tabulated efficiency settings.
    pub fn params_at(self, efficiency: f64) -> Result<NfadParams> {
        self.bias_table()
            .iter()
            .find(|(e, _)| (e - efficiency).abs() < 1e-9)
            .map(|&(e, v)| self.base(e, v))
            .ok_or_else(|| invalid("efficiency", format!("preset {} has no {efficiency} setting", self.name())))
    }

    fn base(self, efficiency: f64, v_excess: f64) -> NfadParams {
        let id220 = matches!(self, Preset::D1 | Preset::D2);
        NfadParams {
            v_br: V_BR,
            v_excess,
            r_integrated: R_INTEGRATED,
            r1: 1e3,
            r2: if id220 { 50.0 } else { 100.0 },
            v_quench: if id220 { 5.0 } else { 4.0 },
            // calibrated: higher threshold and noise on the inductive readout
            v_th: if id220 { 0.10 } else { 0.25 },
            noise_sigma: if id220 { 0.0058 } else { 0.015 },
            tau_d: if id220 { 18e-6 } else { 20e-6 },
            responsivity: RESPONSIVITY,
            gain_exponent: GAIN_EXPONENT,
            // calibrated: minimum blinding 1, 3, 0.5 and 7 nW at the default bias
            max_linear_gain: match self {
                Preset::D1 => 1774.0,
                Preset::D2 => 1314.0,
                Preset::D3 => 5415.0,
                Preset::D4 => 397.3,
            },
            amp_transimpedance: AMP_TRANSIMPEDANCE,
            avalanche_amplitude: 1.0,
            // published single-photon FWHMs (D1 and D4 borrow their sibling's)
            sp_jitter_fwhm: if id220 { 104.9e-12 } else { 271.8e-12 },
            // 33 ps pulses ⊕ 5.15 ps gives the 33.4 ps faked-state FWHM
            electronics_jitter_fwhm: if id220 { 5.15e-12 } else { 20e-12 },
            efficiency,
            dark_count_rate: 0.0,
            active_diameter: match self {
                Preset::D1 | Preset::D3 => 22e-6,
                Preset::D2 | Preset::D4 => 32e-6,
            },
        }
    }

    /// FWHM of the bright trigger pulses used with this device (published).
    pub fn pulse_fwhm(self) -> f64 {
        match self {
            Preset::D1 | Preset::D2 => 33e-12,
            Preset::D3 | Preset::D4 => 161e-12,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d1" => Ok(Preset::D1),
            "d2" => Ok(Preset::D2),
            "d3" => Ok(Preset::D3),
            "d4" => Ok(Preset::D4),
            other => Err(invalid("preset", format!("unknown preset `{other}`"))),
        }
    }
}
