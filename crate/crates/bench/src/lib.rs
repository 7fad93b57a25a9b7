//! Shared fixtures for the benchmarks.

use nvraman_core::dynamics::mhz_to_angular;
use nvraman_core::pulses::{make_rabi_pair, make_stirap_pair, EnvelopeShape};
use nvraman_core::{LambdaParams, PulseSequence};

/// Ramped delayed pulse pair in the STIRAP regime.
pub fn stirap_sequence(t_rise: f64, delay: f64) -> PulseSequence {
    make_stirap_pair(mhz_to_angular(48.0), 1.5, t_rise, delay, EnvelopeShape::Trapezoid).expect("valid geometry")
}

/// Square Raman pair in the Rabi regime.
pub fn rabi_sequence(duration: f64) -> PulseSequence {
    make_rabi_pair(mhz_to_angular(46.0), duration).expect("valid duration")
}

/// `n` members spread over a 1 MHz two-photon window.
pub fn two_photon_members(delta_avg_mhz: f64, n: usize) -> Vec<LambdaParams> {
    (0..n)
        .map(|k| LambdaParams::nv_defaults(delta_avg_mhz, (k as f64 - 0.5 * n as f64) / n as f64))
        .collect()
}
