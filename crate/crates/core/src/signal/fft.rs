use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::ComplexEnvelope;
use crate::{Error, Result, C64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn is_power_of_two(n: usize) -> bool {
    n.is_power_of_two()
}

/// Unnormalized forward DFT, `X[k] = sum_n x[n] exp(-j 2 pi k n / N)`.
pub fn fft_in_place(buf: &mut [C64]) -> Result<()> {
    if !is_power_of_two(buf.len()) {
        return Err(Error::NotPowerOfTwo(buf.len()));
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
    Ok(())
}

/// Inverse DFT including the 1/N factor.
pub fn ifft_in_place(buf: &mut [C64]) -> Result<()> {
    if !is_power_of_two(buf.len()) {
        return Err(Error::NotPowerOfTwo(buf.len()));
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let inv = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= inv);
    Ok(())
}

/// Spectrum of an envelope. The returned envelope holds DFT bins, not time samples.
pub fn dft(block: &ComplexEnvelope) -> Result<ComplexEnvelope> {
    let mut out = block.clone();
    fft_in_place(&mut out.samples)?;
    Ok(out)
}

pub fn idft(spectrum: &ComplexEnvelope) -> Result<ComplexEnvelope> {
    let mut out = spectrum.clone();
    ifft_in_place(&mut out.samples)?;
    Ok(out)
}

/// Angular frequency (rad/s) of every DFT bin in FFT order. Bins at and above N/2
/// map to negative frequencies.
pub fn angular_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * kk * df
        })
        .collect()
}
