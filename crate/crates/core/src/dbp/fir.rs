//! Symmetric FIR approximation of a chromatic-dispersion all-pass response.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consts::{LAMBDA_C, SPEED_OF_LIGHT};
use crate::signal::beta2_from_dispersion;
use crate::{Error, Result, C64};

/// Out-of-band weight of the least-squares fit.
const STOPBAND_WEIGHT: f64 = 0.01;

/// Spread of group delay over the band, s: `(lambda^2 / c) |D_acc| df`, `D_acc` in ps/nm.
pub fn cd_memory_s(d_acc_ps_nm: f64, bandwidth_hz: f64) -> f64 {
    // ps/nm -> s/m
    LAMBDA_C * LAMBDA_C / SPEED_OF_LIGHT * (d_acc_ps_nm.abs() * 1e-3) * bandwidth_hz
}

/// Minimum FIR length `ceil(tau_CD / Ts * n_s)`, at least 1.
pub fn min_cdc_taps(d_acc_ps_nm: f64, bandwidth_hz: f64, symbol_period_s: f64, sps: usize) -> usize {
    let n = (cd_memory_s(d_acc_ps_nm, bandwidth_hz) / symbol_period_s * sps as f64 - 1e-9).ceil();
    (n.max(0.0) as usize).max(1)
}

/// `F` (taps `2F+1`) used for a steps-per-span value; the grid searched values for
/// 1, 1/2, 1/4, 1/7 and 1/14, otherwise `None`.
pub fn tabulated_half_length(steps_per_span: f64) -> Option<usize> {
    [(1.0, 16), (0.5, 16), (0.25, 24), (1.0 / 7.0, 30), (1.0 / 14.0, 36)]
        .iter()
        .find(|(s, _)| (s - steps_per_span).abs() < 1e-9)
        .map(|&(_, f)| f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirDesign {
    /// `2F+1` taps, index `F` is the center; `h[F+i] == h[F-i]`.
    pub taps: Vec<C64>,
    /// Largest in-band magnitude of `H_fir - H_cd`.
    pub max_deviation: f64,
    /// Fewer taps than the dispersion memory requires.
    pub below_minimum: bool,
}

impl FirDesign {
    pub fn half_length(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn response(&self, w_norm: f64) -> C64 {
        let f = self.half_length();
        let mut h = self.taps[f];
        for i in 1..=f {
            h += self.taps[f + i] * 2.0 * (w_norm * i as f64).cos();
        }
        h
    }
}

/// Weighted least-squares fit of `exp(-j beta2 L w^2 / 2)` by a symmetric FIR of
/// `2F+1` taps at `sample_rate`. In-band (`|f| <= bandwidth/2`) weight is 1; the
/// rest of the Nyquist band is weighted by 0.01 toward the same all-pass target.
pub fn design_cdc_fir(
    d_acc_ps_nm: f64,
    half_length: usize,
    sample_rate: f64,
    bandwidth_hz: f64,
    baud_rate: f64,
) -> Result<FirDesign> {
    if !(sample_rate > 0.0 && bandwidth_hz > 0.0 && bandwidth_hz <= sample_rate) {
        return Err(Error::invalid("FIR design needs 0 < bandwidth <= sample rate"));
    }
    let sps = (sample_rate / baud_rate).round() as usize;
    let min = min_cdc_taps(d_acc_ps_nm, bandwidth_hz, 1.0 / baud_rate, sps);
    let n_taps = 2 * half_length + 1;
    let below_minimum = n_taps < min;
    if below_minimum {
        log::warn!("CD FIR with {n_taps} taps is shorter than the {min} taps the dispersion memory needs");
    }
    // beta2 * L in s^2 for an accumulated dispersion over a notional 1 km
    let b2l = beta2_from_dispersion(d_acc_ps_nm) * 1e3;
    if half_length == 0 || b2l == 0.0 {
        let mut taps = vec![C64::default(); n_taps];
        taps[half_length] = C64::new(1.0, 0.0);
        let d = FirDesign { taps, max_deviation: 0.0, below_minimum };
        let dev = in_band_deviation(&d, b2l, sample_rate, bandwidth_hz);
        return Ok(FirDesign { max_deviation: dev, ..d });
    }
    let n_grid = (64 * n_taps).max(1024);
    let cols = half_length + 1;
    let mut a = DMatrix::<f64>::zeros(n_grid, cols);
    let mut br = DVector::<f64>::zeros(n_grid);
    let mut bi = DVector::<f64>::zeros(n_grid);
    for g in 0..n_grid {
        // w_norm in [0, pi], symmetric response so half the band suffices
        let wn = std::f64::consts::PI * (g as f64 + 0.5) / n_grid as f64;
        let f_hz = wn / (2.0 * std::f64::consts::PI) * sample_rate;
        let weight: f64 = if f_hz <= bandwidth_hz / 2.0 { 1.0 } else { STOPBAND_WEIGHT };
        let sw = weight.sqrt();
        let w = 2.0 * std::f64::consts::PI * f_hz;
        let target = C64::from_polar(1.0, -b2l * w * w / 2.0);
        a[(g, 0)] = sw;
        for i in 1..cols {
            a[(g, i)] = sw * 2.0 * (wn * i as f64).cos();
        }
        br[g] = sw * target.re;
        bi[g] = sw * target.im;
    }
    let svd = a.svd(true, true);
    let cr = svd.solve(&br, 1e-12).map_err(|e| Error::Format(e.to_string()))?;
    let ci = svd.solve(&bi, 1e-12).map_err(|e| Error::Format(e.to_string()))?;
    let mut taps = vec![C64::default(); n_taps];
    for i in 0..cols {
        let c = C64::new(cr[i], ci[i]);
        taps[half_length + i] = c;
        taps[half_length - i] = c;
    }
    let d = FirDesign { taps, max_deviation: 0.0, below_minimum };
    let dev = in_band_deviation(&d, b2l, sample_rate, bandwidth_hz);
    Ok(FirDesign { max_deviation: dev, ..d })
}

fn in_band_deviation(d: &FirDesign, b2l: f64, sample_rate: f64, bandwidth_hz: f64) -> f64 {
    let n = 512;
    (0..=n)
        .map(|g| {
            let f_hz = bandwidth_hz / 2.0 * g as f64 / n as f64;
            let w = 2.0 * std::f64::consts::PI * f_hz;
            let target = C64::from_polar(1.0, -b2l * w * w / 2.0);
            (d.response(w / sample_rate) - target).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAND: f64 = 1.06 * 32e9;

    #[test]
    fn memory_and_minimum_length() {
        let ts = 1.0 / 32e9;
        let tau = cd_memory_s(183.6, 33.92e9);
        assert!((tau * 1e12 - 49.9).abs() < 0.1, "{}", tau * 1e12);
        assert_eq!(min_cdc_taps(183.6, 33.92e9, ts, 2), 4);
        let tau = cd_memory_s(5140.8, 33.92e9);
        assert!((tau * 1e12 - 1397.0).abs() < 1.0, "{}", tau * 1e12);
        assert_eq!(min_cdc_taps(5140.8, 33.92e9, ts, 2), 90);
        assert_eq!(min_cdc_taps(0.0, 33.92e9, ts, 2), 1);
    }

    #[test]
    fn zero_dispersion_is_unit_impulse() {
        let d = design_cdc_fir(0.0, 8, 64e9, BAND, 32e9).unwrap();
        assert_eq!(d.taps[8], C64::new(1.0, 0.0));
        assert_eq!(d.taps.iter().filter(|t| t.norm() > 0.0).count(), 1);
        assert_eq!(d.max_deviation, 0.0);
    }

    #[test]
    fn taps_are_symmetric_and_fit_improves_with_length() {
        let mut prev = f64::INFINITY;
        for f in [4, 8, 16, 24] {
            let d = design_cdc_fir(183.6, f, 64e9, BAND, 32e9).unwrap();
            for i in 0..=f {
                assert_eq!(d.taps[f + i], d.taps[f - i]);
            }
            assert!(d.max_deviation <= prev + 1e-12, "F={f}: {} > {prev}", d.max_deviation);
            prev = d.max_deviation;
        }
        assert!(prev < 1e-2, "{prev}");
    }

    #[test]
    fn short_filter_is_flagged() {
        let d = design_cdc_fir(5140.8, 8, 64e9, BAND, 32e9).unwrap();
        assert!(d.below_minimum);
        assert!(!design_cdc_fir(183.6, 16, 64e9, BAND, 32e9).unwrap().below_minimum);
    }

    #[test]
    fn table_lookup() {
        assert_eq!(tabulated_half_length(1.0), Some(16));
        assert_eq!(tabulated_half_length(1.0 / 14.0), Some(36));
        assert_eq!(tabulated_half_length(0.3), None);
    }
}
