//! Name-based access to detector parameters for config overrides and manifests.

use nfad_core::NfadParams;

macro_rules! fields {
    ($($name:ident),* $(,)?) => {
        /// Parameter names in manifest order.
        pub const FIELDS: &[&str] = &[$(stringify!($name)),*];

        pub fn get(p: &NfadParams, name: &str) -> Option<f64> {
            match name {
                $(stringify!($name) => Some(p.$name),)*
                _ => None,
            }
        }

        /// Set a field by name; `false` if the name is unknown.
        pub fn set(p: &mut NfadParams, name: &str, value: f64) -> bool {
            match name {
                $(stringify!($name) => { p.$name = value; true })*
                _ => false,
            }
        }
    };
}

fields!(
    v_br,
    v_excess,
    r_integrated,
    r1,
    r2,
    v_quench,
    v_th,
    tau_d,
    responsivity,
    gain_exponent,
    max_linear_gain,
    amp_transimpedance,
    noise_sigma,
    avalanche_amplitude,
    sp_jitter_fwhm,
    electronics_jitter_fwhm,
    efficiency,
    dark_count_rate,
    active_diameter,
);
