use super::{fft_in_place, ifft_in_place, DualPolBlock};
use crate::{Error, Result, C64};

/// Rational rate change by `p / q` for periodic power-of-two blocks.
///
/// Works in the DFT domain: upsampling zero-pads the spectrum, downsampling keeps only
/// the bins inside the new Nyquist band (ideal anti-alias filter). The output length
/// `len * p / q` must be an integer power of two.
pub fn resample(block: &DualPolBlock, p: usize, q: usize) -> Result<DualPolBlock> {
    if p == 0 || q == 0 {
        return Err(Error::invalid("resampling factors must be >= 1"));
    }
    if p == q {
        return Ok(block.clone());
    }
    block.require_power_of_two()?;
    let n = block.len();
    if (n * p) % q != 0 {
        return Err(Error::invalid(format!("{n} samples cannot be resampled by {p}/{q}")));
    }
    let m = n * p / q;
    if !m.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(m));
    }
    let resample_one = |src: &[C64]| -> Result<Vec<C64>> {
        let mut spec = src.to_vec();
        fft_in_place(&mut spec)?;
        let mut out = vec![C64::default(); m];
        let scale = m as f64 / n as f64;
        if m > n {
            let half = n / 2;
            for k in 0..half {
                out[k] = spec[k] * scale;
                out[m - half + k] = spec[half + k] * scale;
            }
            if n >= 2 {
                // split the old Nyquist bin between +/- fs/2 to keep the signal real-symmetric
                let nyq = spec[half] * (0.5 * scale);
                out[m - half] = nyq;
                out[half] = nyq;
            }
        } else {
            let half = m / 2;
            for k in 0..half {
                out[k] = spec[k] * scale;
                out[m - half + k] = spec[n - half + k] * scale;
            }
            if m == 1 {
                out[0] = spec[0] * scale;
            }
        }
        ifft_in_place(&mut out)?;
        Ok(out)
    };
    let x = resample_one(block.x())?;
    let y = resample_one(block.y())?;
    let rate = block.sample_rate() * p as f64 / q as f64;
    Ok(DualPolBlock::new(x, y, rate)?.with_center_shift(block.center_shift()))
}
