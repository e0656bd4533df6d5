//! Receiver DSP: channel selection, static CD compensation, CMA/RDE MIMO, carrier
//! phase estimation and performance metrics.

mod cpe;
mod metrics;
mod mimo;

pub use cpe::{bps_cpe, bps_phases, genie_cpe, CpeConfig};
pub use metrics::{
    align_to_reference, ber_from_q, count_bit_errors, evaluate, q_factor_db, snr_eff_db,
    read_results, wilson_interval, Aligned, Evaluation, MetricsReport, ResultsWriter,
    RESULTS_HEADER,
};
pub use mimo::{MimoConfig, MimoMode, MimoState};

use serde::{Deserialize, Serialize};

use crate::signal::{
    angular_frequencies, beta2_from_dispersion, fft_in_place, ifft_in_place, resample, DualPolBlock,
};
use crate::tx::{channel_offsets, rrc_spectrum, Constellation, TxConfig};
use crate::{Error, Result, C64};

/// Parameters of the coherent front end shared by every equalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub baud_rate: f64,
    pub rolloff: f64,
    pub n_channels: usize,
    pub channel_spacing_hz: f64,
}

impl FrontEnd {
    pub fn from_tx(cfg: &TxConfig) -> Self {
        Self {
            baud_rate: cfg.baud_rate,
            rolloff: cfg.rolloff,
            n_channels: cfg.n_channels,
            channel_spacing_hz: cfg.channel_spacing_hz,
        }
    }

    /// Index of the offset-0 channel.
    pub fn center_index(&self) -> usize {
        self.n_channels / 2
    }
}

/// Downconvert channel `index` (ordering of [`channel_offsets`]), apply the RRC
/// matched filter and resample to 2 samples per symbol. The spectral shift uses
/// the same DFT-grid snap as the multiplexer, so it is exact.
pub fn channel_select(block: &DualPolBlock, fe: &FrontEnd, index: usize) -> Result<DualPolBlock> {
    block.require_power_of_two()?;
    if index >= fe.n_channels {
        return Err(Error::invalid(format!(
            "channel index {index} out of range for {} channels",
            fe.n_channels
        )));
    }
    let (n, fs) = (block.len(), block.sample_rate());
    let sps = fs / fe.baud_rate;
    let sps_int = sps.round() as usize;
    if (sps - sps_int as f64).abs() > 1e-9 || sps_int < 2 {
        return Err(Error::invalid(format!("sample rate must be an integer multiple >= 2 of the baud rate, got {sps}")));
    }
    let shift = if fe.n_channels > 1 {
        let bins = (fe.channel_spacing_hz / (fs / n as f64)).round() as isize;
        -channel_offsets(fe.n_channels)[index] * bins
    } else {
        0
    };
    let freqs: Vec<f64> = angular_frequencies(n, fs)
        .iter()
        .map(|w| w / (2.0 * std::f64::consts::PI))
        .collect();
    let mf: Vec<f64> = freqs
        .iter()
        .map(|f| rrc_spectrum(f / fe.baud_rate, fe.rolloff))
        .collect();
    let mut out = block.clone();
    for p in out.pols_mut() {
        fft_in_place(p)?;
        // the multiplexer placed this channel `shift` bins away from DC
        p.rotate_left(shift.rem_euclid(n as isize) as usize);
        p.iter_mut().zip(&mf).for_each(|(v, h)| *v *= h);
        ifft_in_place(p)?;
    }
    resample(&out, 2, sps_int)
}

/// Static CD compensation `exp(-j beta2 L w^2 / 2)`; `beta2` in s^2/m, `length_m` in m.
pub fn cdc(block: &DualPolBlock, beta2: f64, length_m: f64) -> Result<DualPolBlock> {
    block.require_power_of_two()?;
    if beta2 * length_m == 0.0 {
        return Ok(block.clone());
    }
    let w = angular_frequencies(block.len(), block.sample_rate());
    let h: Vec<C64> = w
        .iter()
        .map(|wk| C64::from_polar(1.0, -beta2 * length_m * wk * wk / 2.0))
        .collect();
    let mut out = block.clone();
    for p in out.pols_mut() {
        fft_in_place(p)?;
        p.iter_mut().zip(&h).for_each(|(v, hk)| *v *= hk);
        ifft_in_place(p)?;
    }
    Ok(out)
}

/// CDC for an accumulated dispersion in ps/nm (for example the residual of a DM link).
pub fn cdc_for_dispersion(block: &DualPolBlock, d_acc_ps_nm: f64) -> Result<DualPolBlock> {
    // beta2 per km of a fiber with D = d_acc over 1 km
    cdc(block, beta2_from_dispersion(d_acc_ps_nm), 1e3)
}

/// Scale both polarizations to unit mean power.
pub fn normalize_power(block: &mut DualPolBlock) {
    let p = block.mean_power() / 2.0;
    if p > 0.0 {
        block.scale(1.0 / p.sqrt());
    }
}

/// Blind DSP after the (nonlinear) equalizer: power normalisation, MIMO and CPE.
/// Input at 2 samples/symbol, output at 1 sample/symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DspChain {
    pub mimo: MimoConfig,
    pub cpe: CpeConfig,
}

impl Default for DspChain {
    fn default() -> Self {
        Self {
            mimo: MimoConfig::default(),
            cpe: CpeConfig::default(),
        }
    }
}

impl DspChain {
    pub fn run(&self, block: &DualPolBlock, constellation: &Constellation) -> Result<DualPolBlock> {
        let mut b = block.clone();
        normalize_power(&mut b);
        let mut state = MimoState::new(self.mimo, constellation);
        let sym = state.equalize(&b)?;
        bps_cpe(&sym, constellation, &self.cpe)
    }
}
