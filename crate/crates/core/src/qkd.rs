//! BB84 intercept-resend accounting for a faked-state attack on two blinded
//! detectors.
//!
//! Eve measures each of Alice's qubits in a random basis and resends a bright
//! pulse encoding her result. When Bob's basis matches Eve's, the full pulse
//! reaches the detector for Eve's bit; otherwise each detector receives half
//! of it. Only Alice/Bob basis-matched rounds survive sifting.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::attack::ThresholdMap;
use crate::circuit::{solve_operating_point, Mode, NfadParams};
use crate::detector::pulse_amplitude;
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, seeded, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bb84AttackConfig {
    pub e_pulse: f64,
    pub trigger_rate: f64,
    pub n_rounds: u64,
    /// `(e_never, e_always)` of the map entry the attack is planned from.
    pub thresholds: (f64, f64),
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bb84Stats {
    /// Fraction of rounds with at least one click at Bob.
    pub bob_click_rate: f64,
    /// Error fraction among sifted rounds with a click.
    pub qber_contribution: f64,
    /// Fraction of rounds where both detectors clicked.
    pub double_click_rate: f64,
    /// Fraction of rounds where Eve's and Bob's bases agreed.
    pub basis_match_fraction: f64,
    pub sifted_clicks: u64,
    pub rounds: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    clicks: u64,
    doubles: u64,
    eve_bob_match: u64,
    sifted: u64,
    errors: u64,
}

impl Tally {
    fn add(self, o: Tally) -> Tally {
        Tally {
            clicks: self.clicks + o.clicks,
            doubles: self.doubles + o.doubles,
            eve_bob_match: self.eve_bob_match + o.eve_bob_match,
            sifted: self.sifted + o.sifted,
            errors: self.errors + o.errors,
        }
    }
}

const CHUNK: u64 = 16_384;

/// Simulate `config.n_rounds` attacked rounds against two identical detectors
/// blinded at `p_blinding`.
pub fn run_bb84_attack(config: &Bb84AttackConfig, params: &NfadParams, p_blinding: f64) -> Result<Bb84Stats> {
    params.validate()?;
    if config.n_rounds == 0 {
        return Err(invalid("n_rounds", "must be > 0"));
    }
    if !(config.trigger_rate > 0.0 && config.trigger_rate < 1.0 / params.tau_d) {
        return Err(invalid("trigger_rate", "must be positive and below 1/tau_d"));
    }
    if !(config.e_pulse.is_finite() && config.e_pulse >= 0.0) {
        return Err(invalid("e_pulse", "must be >= 0"));
    }
    let op = solve_operating_point(p_blinding, params, false)?;
    if op.mode != Mode::Linear {
        return Err(Error::NotBlinded { p_blinding, p_min: crate::circuit::min_blinding_power(params)? });
    }
    let full = pulse_amplitude(config.e_pulse, op.gain, params);
    let half = 0.5 * full;
    let (v_th, sigma) = (params.v_th, params.noise_sigma);

    let chunks = config.n_rounds.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeded(derive_seed(config.rng_seed, c));
            let rounds = CHUNK.min(config.n_rounds - c * CHUNK);
            let mut t = Tally::default();
            let fires = |a: f64, rng: &mut SimRng| {
                let n: f64 = StandardNormal.sample(rng);
                a + sigma * n > v_th
            };
            for _ in 0..rounds {
                let alice_basis: bool = rng.random();
                let alice_bit: bool = rng.random();
                let eve_basis: bool = rng.random();
                let bob_basis: bool = rng.random();
                let eve_bit = if eve_basis == alice_basis { alice_bit } else { rng.random() };
                let (a0, a1) = if eve_basis == bob_basis {
                    if eve_bit {
                        (0.0, full)
                    } else {
                        (full, 0.0)
                    }
                } else {
                    (half, half)
                };
                let (c0, c1) = (fires(a0, &mut rng), fires(a1, &mut rng));
                if eve_basis == bob_basis {
                    t.eve_bob_match += 1;
                }
                if !(c0 || c1) {
                    continue;
                }
                t.clicks += 1;
                let bob_bit = match (c0, c1) {
                    (true, true) => {
                        t.doubles += 1;
                        rng.random()
                    }
                    (_, c1) => c1,
                };
                if alice_basis == bob_basis {
                    t.sifted += 1;
                    if bob_bit != alice_bit {
                        t.errors += 1;
                    }
                }
            }
            t
        })
        .reduce(Tally::default, Tally::add);

    let n = config.n_rounds as f64;
    Ok(Bb84Stats {
        bob_click_rate: tally.clicks as f64 / n,
        qber_contribution: if tally.sifted > 0 { tally.errors as f64 / tally.sifted as f64 } else { 0.0 },
        double_click_rate: tally.doubles as f64 / n,
        basis_match_fraction: tally.eve_bob_match as f64 / n,
        sifted_clicks: tally.sifted,
        rounds: config.n_rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub p_blinding: f64,
    pub feasible: bool,
    /// Admissible pulse energies `(e_always, 2·e_never)` when nonempty.
    pub window: Option<(f64, f64)>,
}

/// An entry is attackable when a pulse can always click on a basis match
/// while its half never clicks on a mismatch: `e_always < 2·e_never`.
pub fn attack_feasibility(map: &ThresholdMap) -> Result<Vec<Feasibility>> {
    if map.entries.is_empty() {
        return Err(Error::EmptyMap);
    }
    Ok(map
        .entries
        .iter()
        .map(|e| {
            let hi = 2.0 * e.e_never;
            let feasible = e.e_always < hi;
            Feasibility { p_blinding: e.p_blinding, feasible, window: feasible.then_some((e.e_always, hi)) }
        })
        .collect())
}
