//! Transmitter: random bits, Gray-mapped QAM symbols, RRC pulse shaping per
//! polarization and WDM multiplexing.

mod pulse;
mod qam;

pub use pulse::{raised_cosine_spectrum, rrc_impulse, rrc_spectrum, rrc_taps};
pub use qam::{map_bits, Constellation};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, SimRng};
use crate::signal::{dbm_to_watt, fft_in_place, ifft_in_place, DualPolBlock};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxConfig {
    pub modulation_order: usize,
    /// Symbols per second.
    pub baud_rate: f64,
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    pub n_symbols: usize,
    pub n_channels: usize,
    pub channel_spacing_hz: f64,
    /// Launch power per channel (both polarizations).
    pub launch_power_dbm: f64,
    pub rrc_span_symbols: usize,
    pub rng_seed: u64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            modulation_order: 16,
            baud_rate: 32e9,
            rolloff: 0.06,
            samples_per_symbol: 16,
            n_symbols: 1 << 12,
            n_channels: 1,
            channel_spacing_hz: 37.5e9,
            launch_power_dbm: 0.0,
            rrc_span_symbols: 64,
            rng_seed: 1,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        Constellation::qam(self.modulation_order)?;
        if !(self.baud_rate > 0.0) || !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::invalid("baud rate must be positive and rolloff in [0, 1]"));
        }
        if self.samples_per_symbol < 2 || self.n_symbols == 0 || self.n_channels == 0 {
            return Err(Error::invalid("need >= 2 samples/symbol, >= 1 symbol and >= 1 channel"));
        }
        if !(self.n_symbols * self.samples_per_symbol).is_power_of_two() {
            return Err(Error::NotPowerOfTwo(self.n_symbols * self.samples_per_symbol));
        }
        if self.n_channels > 1 && self.channel_spacing_hz < (1.0 + self.rolloff) * self.baud_rate {
            return Err(Error::invalid(format!(
                "channel spacing {} Hz is below the signal bandwidth {} Hz",
                self.channel_spacing_hz,
                (1.0 + self.rolloff) * self.baud_rate
            )));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.baud_rate * self.samples_per_symbol as f64
    }

    pub fn block_len(&self) -> usize {
        self.n_symbols * self.samples_per_symbol
    }

    /// Occupied bandwidth of one channel, (1 + rolloff) B.
    pub fn signal_bandwidth(&self) -> f64 {
        (1.0 + self.rolloff) * self.baud_rate
    }
}

/// Symbols and source bits of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub sx: Vec<C64>,
    pub sy: Vec<C64>,
    pub bits_x: Vec<u8>,
    pub bits_y: Vec<u8>,
}

impl SymbolFrame {
    pub fn random(n_symbols: usize, constellation: &Constellation, rng: &mut SimRng) -> Self {
        let nb = n_symbols * constellation.bits_per_symbol();
        let mut draw = || (0..nb).map(|_| rng.random::<bool>() as u8).collect::<Vec<u8>>();
        let bits_x = draw();
        let bits_y = draw();
        let sx = constellation.map(&bits_x).expect("whole symbols");
        let sy = constellation.map(&bits_y).expect("whole symbols");
        Self {
            sx,
            sy,
            bits_x,
            bits_y,
        }
    }

    pub fn len(&self) -> usize {
        self.sx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sx.is_empty()
    }
}

/// Circular pulse shaping of a symbol sequence: `sum_i s_i p(t - i Ts)` over a
/// periodic block of `symbols.len() * sps` samples.
pub fn pulse_shape(symbols: &[C64], taps: &[f64], sps: usize) -> Result<Vec<C64>> {
    let n = symbols.len() * sps;
    let mut train = vec![C64::default(); n];
    for (i, s) in symbols.iter().enumerate() {
        train[i * sps] = *s;
    }
    let mut kernel = vec![C64::default(); n];
    let center = (taps.len() / 2) as isize;
    for (k, t) in taps.iter().enumerate() {
        let idx = (k as isize - center).rem_euclid(n as isize) as usize;
        kernel[idx] += *t;
    }
    fft_in_place(&mut train)?;
    fft_in_place(&mut kernel)?;
    train.iter_mut().zip(&kernel).for_each(|(a, b)| *a *= b);
    ifft_in_place(&mut train)?;
    Ok(train)
}

/// RRC-shaped dual-polarization waveform of one channel; unit mean power per
/// polarization for unit-energy constellations.
pub fn shape_waveform(frame: &SymbolFrame, cfg: &TxConfig) -> Result<DualPolBlock> {
    let taps = rrc_taps(cfg.rolloff, cfg.samples_per_symbol, cfg.rrc_span_symbols);
    let x = pulse_shape(&frame.sx, &taps, cfg.samples_per_symbol)?;
    let y = pulse_shape(&frame.sy, &taps, cfg.samples_per_symbol)?;
    DualPolBlock::new(x, y, cfg.sample_rate())
}

/// Scale a unit-power-per-polarization waveform to `dbm` over both polarizations.
pub fn set_launch_power(block: &mut DualPolBlock, dbm: f64) {
    block.scale((dbm_to_watt(dbm) / 2.0).sqrt());
}

/// Frequency offsets (in units of the channel spacing) of `n` channels; the
/// center channel has offset 0.
pub fn channel_offsets(n: usize) -> Vec<isize> {
    (0..n as isize).map(|i| i - (n / 2) as isize).collect()
}

/// Sum channels after shifting channel `n` by `exp(-j n dw t)`. `channels[i]` is
/// placed at offset `channel_offsets(len)[i]`. The shift is snapped to the DFT
/// grid so the multiplexed block stays periodic.
pub fn wdm_mux(channels: &[DualPolBlock], spacing_hz: f64) -> Result<DualPolBlock> {
    let first = channels
        .first()
        .ok_or_else(|| Error::invalid("wdm_mux needs at least one channel"))?;
    let (n, fs) = (first.len(), first.sample_rate());
    if channels.iter().any(|c| c.len() != n || c.sample_rate() != fs) {
        return Err(Error::ShapeMismatch("all WDM channels must share length and rate".into()));
    }
    if channels.len() == 1 {
        return Ok(first.clone());
    }
    let offsets = channel_offsets(channels.len());
    let max_off = offsets.iter().map(|o| o.unsigned_abs()).max().unwrap_or(0) as f64;
    if (max_off + 0.5) * spacing_hz > fs / 2.0 {
        return Err(Error::invalid(format!(
            "{} channels at {} Hz spacing exceed the Nyquist band of {} Hz",
            channels.len(),
            spacing_hz,
            fs / 2.0
        )));
    }
    let bin = fs / n as f64;
    let shift_bins = (spacing_hz / bin).round();
    let mut out = DualPolBlock::zeros(n, fs)?;
    for (ch, &off) in channels.iter().zip(&offsets) {
        let k = -(off as f64) * shift_bins;
        for (dst, src) in out.pols_mut().into_iter().zip(ch.pols()) {
            for (i, (d, s)) in dst.iter_mut().zip(src).enumerate() {
                let ph = 2.0 * PI * k * i as f64 / n as f64;
                *d += s * C64::from_polar(1.0, ph);
            }
        }
    }
    Ok(out)
}

/// Jones rotation `[[e^{j phi/2} cos t, e^{-j phi/2} sin t], [-e^{j phi/2} sin t, e^{-j phi/2} cos t]]`.
pub fn rotate_polarization(block: &mut DualPolBlock, theta: f64, phi: f64) {
    let a = C64::from_polar(1.0, phi / 2.0);
    let b = C64::from_polar(1.0, -phi / 2.0);
    let (c, s) = (theta.cos(), theta.sin());
    let n = block.len();
    let (x, y) = (block.x().to_vec(), block.y().to_vec());
    let [xo, yo] = block.pols_mut();
    for i in 0..n {
        xo[i] = a * c * x[i] + b * s * y[i];
        yo[i] = -a * s * x[i] + b * c * y[i];
    }
}

/// Circular fractional delay (seconds) applied as a linear spectral phase.
pub fn delay(block: &mut DualPolBlock, seconds: f64) -> Result<()> {
    let w = crate::signal::angular_frequencies(block.len(), block.sample_rate());
    for p in block.pols_mut() {
        fft_in_place(p)?;
        p.iter_mut()
            .zip(&w)
            .for_each(|(v, wk)| *v *= C64::from_polar(1.0, -wk * seconds));
        ifft_in_place(p)?;
    }
    Ok(())
}

/// Everything the transmitter produced for one block.
#[derive(Debug, Clone)]
pub struct TxOutput {
    /// Multiplexed WDM field at the launch power.
    pub block: DualPolBlock,
    /// Frames in the order of [`channel_offsets`].
    pub frames: Vec<SymbolFrame>,
    /// Index of the center (offset 0) channel in `frames`.
    pub center: usize,
}

impl TxOutput {
    pub fn center_frame(&self) -> &SymbolFrame {
        &self.frames[self.center]
    }
}

/// Generate the launched WDM block. Every channel but the center one gets an
/// independent random delay in [0, Ts), polarization rotation and carrier phase so
/// the channels are unsynchronized.
pub fn transmit(cfg: &TxConfig) -> Result<TxOutput> {
    cfg.validate()?;
    let constellation = Constellation::qam(cfg.modulation_order)?;
    let offsets = channel_offsets(cfg.n_channels);
    let center = offsets.iter().position(|&o| o == 0).expect("center channel");
    let per_channel: Vec<Result<(SymbolFrame, DualPolBlock)>> =
        crate::exec::map_range(cfg.n_channels, |i| {
            let mut rng = rng::stream(cfg.rng_seed, 0x7458_0000 + i as u64);
            let frame = SymbolFrame::random(cfg.n_symbols, &constellation, &mut rng);
            let mut wave = shape_waveform(&frame, cfg)?;
            if i != center {
                let ts = 1.0 / cfg.baud_rate;
                delay(&mut wave, rng.random::<f64>() * ts)?;
                rotate_polarization(
                    &mut wave,
                    rng.random::<f64>() * 2.0 * PI,
                    rng.random::<f64>() * 2.0 * PI,
                );
                let ph = C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI);
                for p in wave.pols_mut() {
                    p.iter_mut().for_each(|v| *v *= ph);
                }
            }
            set_launch_power(&mut wave, cfg.launch_power_dbm);
            Ok((frame, wave))
        });
    let mut frames = Vec::with_capacity(cfg.n_channels);
    let mut waves = Vec::with_capacity(cfg.n_channels);
    for r in per_channel {
        let (f, w) = r?;
        frames.push(f);
        waves.push(w);
    }
    let block = wdm_mux(&waves, cfg.channel_spacing_hz)?;
    Ok(TxOutput {
        block,
        frames,
        center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::watt_to_dbm;

    fn small_cfg() -> TxConfig {
        TxConfig {
            n_symbols: 1024,
            samples_per_symbol: 8,
            ..TxConfig::default()
        }
    }

    #[test]
    fn single_symbol_is_the_pulse() {
        let sps = 8;
        let taps = rrc_taps(0.06, sps, 16);
        let mut sym = vec![C64::default(); 64];
        sym[0] = C64::new(1.0, 0.0);
        let w = pulse_shape(&sym, &taps, sps).unwrap();
        let n = w.len() as isize;
        for (k, t) in taps.iter().enumerate() {
            let idx = (k as isize - (taps.len() / 2) as isize).rem_euclid(n) as usize;
            assert!((w[idx] - C64::new(*t, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn launch_power_matches_configuration() {
        for dbm in [-6.0, 0.0, 3.0] {
            let cfg = TxConfig {
                launch_power_dbm: dbm,
                n_symbols: 8192,
                samples_per_symbol: 4,
                ..TxConfig::default()
            };
            let out = transmit(&cfg).unwrap();
            let p = watt_to_dbm(out.block.mean_power());
            assert!((p - dbm).abs() < 0.05, "{p} vs {dbm}");
        }
    }

    #[test]
    fn single_channel_mux_is_identity() {
        let out = transmit(&small_cfg()).unwrap();
        let again = wdm_mux(std::slice::from_ref(&out.block), 37.5e9).unwrap();
        assert_eq!(again, out.block);
    }

    #[test]
    fn mux_power_is_sum_of_channels() {
        let cfg = TxConfig {
            n_channels: 5,
            samples_per_symbol: 16,
            n_symbols: 2048,
            launch_power_dbm: -1.0,
            ..TxConfig::default()
        };
        let out = transmit(&cfg).unwrap();
        let total = watt_to_dbm(out.block.mean_power());
        let expect = -1.0 + 10.0 * 5f64.log10();
        assert!((total - expect).abs() < 0.1, "{total} vs {expect}");
    }

    #[test]
    fn mux_rejects_excess_bandwidth() {
        let a = DualPolBlock::zeros(64, 100e9).unwrap();
        assert!(wdm_mux(&[a.clone(), a.clone(), a], 37.5e9).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        c.n_channels = 3;
        c.channel_spacing_hz = 30e9;
        assert!(c.validate().is_err());
        c.channel_spacing_hz = 37.5e9;
        assert!(c.validate().is_ok());
        c.n_symbols = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rotation_is_unitary_and_swaps_at_quarter_turn() {
        let out = transmit(&small_cfg()).unwrap();
        let mut b = out.block.clone();
        rotate_polarization(&mut b, 1.1, 2.3);
        assert!((b.energy() - out.block.energy()).abs() < 1e-12 * out.block.energy());
        let mut s = out.block.clone();
        rotate_polarization(&mut s, PI / 2.0, 0.0);
        for (a, c) in s.x().iter().zip(out.block.y()) {
            assert!((a - c).norm() < 1e-12);
        }
    }
}
