//! Simulation and analysis toolkit for heralded single-photon sources built on
//! the biexciton-exciton emission cascade of a quantum dot.
//!
//! The crate has three layers:
//!
//! - [`emitter`]: closed-form efficiency, purity and determinicity formulas for
//!   the cascade model and the purification schemes (TGF, beam-splitter
//!   heralding, TIMED, ASH).
//! - [`sim`] and [`timetag`]: a seeded Monte Carlo generator of time-tagged
//!   detector events, plus stream I/O, pulse grouping and histogramming.
//! - [`herald`], [`estimation`] and [`budget`]: offline emulation of the
//!   purification schemes over recorded streams, parameter extraction
//!   (lifetime fits, quantum yields, noise rates) and hardware response-time
//!   budgeting with single-photon rate projections.
//!
//! All times are nanoseconds in the analytic layer and picoseconds in the
//! time-tag layer. Probabilities are plain `f64` values; functions return
//! `Option<f64>` where a quantity can be undefined (no signal, no triggers).

pub mod budget;
pub mod emitter;
pub mod error;
pub mod estimation;
pub mod herald;
pub mod presets;
pub mod sim;
pub mod timetag;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
