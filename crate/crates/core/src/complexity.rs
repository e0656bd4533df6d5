//! Real multiplications per detected symbol (RMpS) of frequency- and time-domain
//! DBP/LDBP with overlap-save block processing.

use serde::{Deserialize, Serialize};

use crate::dbp::{tabulated_half_length, StepsPerSpan};
use crate::{Error, Result};

/// Real multiplications of one Kerr activation (CORDIC-based phase rotation).
pub const ACTIVATION_RMS: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInput {
    /// Number of nonlinear steps `N_d`.
    pub n_steps: usize,
    /// Overlap-save block size `N`.
    pub block_size: usize,
    pub samples_per_symbol: usize,
    /// Full-link CD filter length `N_CDC,L`.
    pub n_cdc_link: usize,
    /// TD kernel half-width `F`.
    pub fir_half_length: usize,
}

impl ComplexityInput {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.samples_per_symbol == 0 || self.n_cdc_link == 0 {
            return Err(Error::invalid("block size, oversampling and CD filter length must be positive"));
        }
        if self.block_size + 1 <= self.n_cdc_link {
            return Err(Error::invalid(format!(
                "block size {} leaves no new samples for a {}-tap CD filter",
                self.block_size, self.n_cdc_link
            )));
        }
        Ok(())
    }

    /// New output samples per block, `N - N_CDC,L + 1`.
    pub fn useful_samples(&self) -> f64 {
        (self.block_size - self.n_cdc_link + 1) as f64
    }

    fn activation_cost(&self) -> f64 {
        ACTIVATION_RMS / 2.0 * (self.n_steps * self.samples_per_symbol) as f64
    }
}

/// `(N_d+1) 4 N (log2 N + 1) n_s / (N - N_CDC + 1) + 9/2 N_d n_s`.
pub fn rmps_fd(inp: &ComplexityInput) -> Result<f64> {
    inp.validate()?;
    let n = inp.block_size as f64;
    let per_step = 4.0 * n * (n.log2() + 1.0) * inp.samples_per_symbol as f64 / inp.useful_samples();
    Ok((inp.n_steps + 1) as f64 * per_step + inp.activation_cost())
}

/// `(N_d+1) 4 (2F+1) N n_s / (N - N_CDC + 1) + 9/2 N_d n_s`.
pub fn rmps_td(inp: &ComplexityInput) -> Result<f64> {
    inp.validate()?;
    let n = inp.block_size as f64;
    let taps = (2 * inp.fir_half_length + 1) as f64;
    let per_step = 4.0 * taps * n * inp.samples_per_symbol as f64 / inp.useful_samples();
    Ok((inp.n_steps + 1) as f64 * per_step + inp.activation_cost())
}

/// Smallest power of two `N` with `N - n_cdc + 1 >= min_efficiency * N`.
pub fn overlap_block_size(n_cdc_link: usize, min_efficiency: f64) -> usize {
    let mut n = 2usize;
    while ((n + 1).saturating_sub(n_cdc_link) as f64) < min_efficiency * n as f64 {
        n *= 2;
    }
    n
}

/// Block geometry of the learned model: 1024-sample blocks of which 852 are new,
/// i.e. `N_CDC,L = 173`.
pub const LDBP_BLOCK: usize = 1024;
pub const LDBP_N_CDC: usize = 173;

/// The configuration behind the published figures: 28 spans, 2 samples/symbol,
/// 1024-sample blocks with 852 new samples, `F` from the tap-count table.
pub fn paper_configuration(stps: StepsPerSpan) -> Result<ComplexityInput> {
    let f = tabulated_half_length(stps.value())
        .ok_or_else(|| Error::invalid(format!("no tabulated F for {stps} steps per span")))?;
    Ok(ComplexityInput {
        n_steps: stps.total_steps(28)?,
        block_size: LDBP_BLOCK,
        samples_per_symbol: 2,
        n_cdc_link: LDBP_N_CDC,
        fir_half_length: f,
    })
}
