//! Simulation and equalization toolkit for dual-polarization WDM transmission
//! over dispersion-managed (DM) fiber links.
//!
//! The crate is organised along the processing chain:
//!
//! * [`signal`]: complex envelopes, DFT helpers, resampling and link/dispersion-map
//!   descriptions shared by every other stage.
//! * [`tx`]: Gray-mapped square QAM, root-raised-cosine shaping and WDM multiplexing.
//! * [`channel`]: symmetric split-step Fourier propagation with loss, CD, PMD,
//!   Kerr nonlinearity, EDFA noise and laser phase noise.
//! * [`rx`]: channel selection, static CD compensation, CMA/RDE MIMO, carrier phase
//!   estimation and the SNR/BER/Q metrics.
//! * [`dbp`]: dispersion-map aware digital back-propagation with fractional steps
//!   per span, in frequency and time domain.
//! * [`ldbp`]: learned DBP, a convolutional network initialised from a DBP plan and
//!   trained with Adam.
//! * [`complexity`]: real multiplications per symbol for FD/TD implementations.
//! * [`experiment`]: setups, sweeps, result files and reports.
//!
//! Data-parallel loops (launch-power sweeps, batch gradients, dataset windowing, grid
//! searches) go through [`exec`], which uses rayon when the `parallel` feature is
//! enabled and falls back to plain iterators otherwise.

pub mod channel;
pub mod complexity;
pub mod dbp;
mod error;
pub mod exec;
pub mod experiment;
pub mod ldbp;
pub mod rng;
pub mod rx;
pub mod signal;
pub mod tx;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Physical constants and fixed reference values.
pub mod consts {
    /// Speed of light in vacuum, m/s.
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    /// Planck constant, J s.
    pub const PLANCK: f64 = 6.626_070_15e-34;
    /// Carrier wavelength used for every D <-> beta2 conversion, m.
    pub const LAMBDA_C: f64 = 1550e-9;
    /// Carrier frequency matching [`LAMBDA_C`], Hz.
    pub const NU_C: f64 = SPEED_OF_LIGHT / LAMBDA_C;
    /// Manakov averaging factor of the Kerr term.
    pub const MANAKOV: f64 = 8.0 / 9.0;
}
