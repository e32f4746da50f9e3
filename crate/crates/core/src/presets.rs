//! Canonical parameter sets used across analyses, tests and the CLI, pinned
//! in one place so sweeps and acceptance runs cannot drift.

use crate::emitter::{EmitterParams, NoiseParams};

/// Collection efficiency of the measured-dot setup.
pub const MEASURED_DOT_ALPHA: f64 = 0.088;

/// Textbook cascade: unit yields, unit collection, 4:1 lifetime ratio.
pub fn ideal() -> EmitterParams {
    EmitterParams::new(1.0, 1.0, 1.0, 0.25, 4.0, 1.0).unwrap()
}

/// Nanocone-enhanced dot used for rate projections: high yields, short
/// lifetimes, realistic collection.
pub fn model_system() -> EmitterParams {
    EmitterParams::new(0.61, 0.7, 1.6, 0.5, 4.0, 0.72).unwrap()
}

/// Same yields as [`model_system`] but with the biexciton lifetime derived
/// from the yields through the beta relation instead of taken from the
/// lifetime measurement. The gated-filter trade-off figures for this system
/// follow this convention; the two variants differ because the measured
/// lifetime pair is not exactly beta-consistent.
pub fn model_system_beta_scaled() -> EmitterParams {
    let m = model_system();
    EmitterParams::from_quantum_yields(m.qy_x, m.qy_bx, m.tau_x_ns, m.beta, m.alpha).unwrap()
}

/// Room-temperature nanocrystal dot from the reference measurement. Only the
/// yield ratio is fixed by that measurement; the exciton lifetime is a
/// representative 30 ns and the biexciton lifetime follows from beta scaling.
pub fn measured_dot() -> EmitterParams {
    EmitterParams::from_quantum_yields(0.1729, 0.0465, 30.0, 4.0, MEASURED_DOT_ALPHA).unwrap()
}

/// Noise rates of the measured-dot setup, expressed at the emitter level.
pub fn measured_dot_noise() -> NoiseParams {
    NoiseParams {
        eta_cn: 1.4e-3 / MEASURED_DOT_ALPHA,
        tau_cn_ns: 0.3,
        eta_un: 4.4e-4 / MEASURED_DOT_ALPHA,
    }
}
