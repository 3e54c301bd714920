//! Discrete-event simulation of negative-feedback avalanche diode (NFAD)
//! single-photon detectors under bright-light blinding and control.
//!
//! The crate is organised bottom-up:
//!
//! * [`circuit`] solves the DC operating point of the APD in its bias network.
//! * [`optics`] describes optical timelines (CW blinding, trigger pulses, photons).
//! * [`detector`] runs the event-driven detector state machine.
//! * [`attack`] implements the eavesdropper's procedures.
//! * [`monitor`] implements the receiver's current and bias-voltage countermeasures.
//! * [`qkd`] accounts for a BB84 faked-state attack.
//!
//! [`presets`] carries the four device parameter sets and [`calibration`]
//! the routines used to pin the unpublished constants.

pub mod attack;
pub mod calibration;
pub mod circuit;
pub mod detector;
mod error;
pub mod export;
pub mod monitor;
pub mod optics;
pub mod presets;
pub mod qkd;
pub mod rng;
pub mod stats;

pub use attack::{
    estimate_click_curve, estimate_thresholds, gated_blinding_run, jitter_experiment, threshold_map, ClickCurveConfig,
    ClickCurvePoint, GatedBlindingPlan, JitterConfig, JitterResult, ThresholdConfig, ThresholdEntry, ThresholdMap,
};
pub use circuit::{gain, min_blinding_power, solve_operating_point, Mode, NfadParams, OperatingPoint};
pub use detector::{
    click_probability, count_rate_curve, simulate, Cause, ClickEvent, CountRatePoint, CurrentSegment, CurrentTrace,
    DetectorRun,
};
pub use error::{Error, Result};
pub use monitor::{
    bias_voltage_trace, fast_blinding_detector, mean_current_monitor, AlarmReport, MonitorConfig, MonitorKind,
    MonitorTrace, Verdict,
};
pub use optics::{cw_power_at, sample_photon_arrivals, CwSegment, OpticalScenario, TriggerPulse};
pub use presets::Preset;
pub use qkd::{attack_feasibility, run_bb84_attack, Bb84AttackConfig, Bb84Stats, Feasibility};

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Operating wavelength of both lasers and the detectors (m).
pub const WAVELENGTH: f64 = 1550e-9;
/// Energy of one 1550 nm photon (J).
pub const PHOTON_ENERGY: f64 = PLANCK * SPEED_OF_LIGHT / WAVELENGTH;

/// Ratio between the full width at half maximum and the standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
