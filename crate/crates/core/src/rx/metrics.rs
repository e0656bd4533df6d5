//! Reference alignment and the SNR_eff / BER / Q metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::signal::{fft_in_place, ifft_in_place, DualPolBlock};
use crate::tx::{Constellation, SymbolFrame};
use crate::{Error, Result, C64};

/// Equalized symbols matched to the transmitted ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    /// Circular delay (symbols) removed from each output polarization.
    pub delay: [usize; 2],
    /// Outputs were swapped relative to the reference.
    pub swapped: bool,
    /// Least-squares complex gain applied per output.
    pub gain: [C64; 2],
}

/// `c[l] = sum_k r[k] conj(e[k + l])`, circular.
fn xcorr(r: &[C64], e: &[C64]) -> Result<Vec<C64>> {
    let mut a = r.to_vec();
    let mut b = e.to_vec();
    fft_in_place(&mut a)?;
    fft_in_place(&mut b)?;
    // sum_k r[k] conj(e[k+l]) = IDFT(conj(B) A)[-l]
    let mut c: Vec<C64> = a.iter().zip(&b).map(|(p, q)| q * p.conj()).collect();
    ifft_in_place(&mut c)?;
    Ok(c.into_iter().map(|v| v.conj()).collect())
}

fn peak(c: &[C64]) -> (usize, f64) {
    c.iter()
        .enumerate()
        .map(|(i, v)| (i, v.norm()))
        .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
}

/// Resolve delay, polarization swap and complex gain (phase and quadrant) of blind
/// DSP output against the transmitted symbols.
pub fn align_to_reference(eq: &DualPolBlock, reference: [&[C64]; 2]) -> Result<Aligned> {
    let n = eq.len();
    if reference.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch(format!(
            "equalized block has {n} symbols, reference has {}",
            reference[0].len()
        )));
    }
    let [ex, ey] = eq.pols();
    let pxx = peak(&xcorr(reference[0], ex)?);
    let pyy = peak(&xcorr(reference[1], ey)?);
    let pxy = peak(&xcorr(reference[0], ey)?);
    let pyx = peak(&xcorr(reference[1], ex)?);
    let swapped = pxy.1 + pyx.1 > pxx.1 + pyy.1;
    let (src, lags) = if swapped {
        ([ey, ex], [pxy.0, pyx.0])
    } else {
        ([ex, ey], [pxx.0, pyy.0])
    };
    let mut outs = [Vec::new(), Vec::new()];
    let mut gain = [C64::default(); 2];
    for p in 0..2 {
        let shifted: Vec<C64> = (0..n).map(|k| src[p][(k + lags[p]) % n]).collect();
        let num: C64 = reference[p].iter().zip(&shifted).map(|(r, e)| r * e.conj()).sum();
        let den: f64 = shifted.iter().map(|e| e.norm_sqr()).sum();
        let g = if den > 0.0 { num / den } else { C64::default() };
        gain[p] = g;
        outs[p] = shifted.into_iter().map(|e| e * g).collect();
    }
    let [x, y] = outs;
    Ok(Aligned {
        x,
        y,
        delay: lags,
        swapped,
        gain,
    })
}

/// `10 log10((|sx^|^2 + |sy^|^2) / (|sx - sx^|^2 + |sy - sy^|^2))`; `+inf` when the
/// error vanishes.
pub fn snr_eff_db(est_x: &[C64], est_y: &[C64], sx: &[C64], sy: &[C64]) -> f64 {
    let sig: f64 = est_x.iter().chain(est_y).map(|v| v.norm_sqr()).sum();
    let err: f64 = est_x
        .iter()
        .zip(sx)
        .chain(est_y.iter().zip(sy))
        .map(|(e, s)| (s - e).norm_sqr())
        .sum();
    if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / err).log10()
    }
}

/// `20 log10(sqrt(2) erfc^-1(2 BER))`, defined for `0 < BER < 0.5`.
pub fn q_factor_db(ber: f64) -> Result<f64> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::OutOfRange {
            name: "ber",
            value: ber,
            range: "(0, 0.5)",
        });
    }
    Ok(20.0 * (2f64.sqrt() * erfc_inv(2.0 * ber)).log10())
}

/// Inverse of [`q_factor_db`].
pub fn ber_from_q(q_db: f64) -> f64 {
    let q = 10f64.powf(q_db / 20.0);
    0.5 * erfc(q / 2f64.sqrt())
}

pub fn count_bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(p, q)| p != q).count() + a.len().abs_diff(b.len())
}

/// Wilson score interval for `errors` out of `total` at normal quantile `z`.
pub fn wilson_interval(errors: usize, total: usize, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub snr_eff_db: f64,
    pub ber: f64,
    /// `+inf` when no bit errors were counted.
    pub q_db: f64,
    pub bit_errors: usize,
    pub bits: usize,
    /// 95% Wilson interval of the BER.
    pub ber_ci: (f64, f64),
    /// A windowed phase error beyond pi/4 against the reference.
    pub cycle_slip: bool,
    pub aligned: Aligned,
}

fn detect_cycle_slip(est: &[C64], reference: &[C64]) -> bool {
    let w = 256.min(est.len());
    est.chunks(w).zip(reference.chunks(w)).any(|(e, r)| {
        let c: C64 = r.iter().zip(e).map(|(a, b)| a * b.conj()).sum();
        c.arg().abs() > std::f64::consts::FRAC_PI_4
    })
}

/// Align blind-DSP output to the frame and compute SNR_eff, BER over all bits of
/// both polarizations, and Q.
pub fn evaluate(eq: &DualPolBlock, frame: &SymbolFrame, constellation: &Constellation) -> Result<Evaluation> {
    let aligned = align_to_reference(eq, [&frame.sx, &frame.sy])?;
    let snr = snr_eff_db(&aligned.x, &aligned.y, &frame.sx, &frame.sy);
    let bits_x = constellation.demap(&aligned.x);
    let bits_y = constellation.demap(&aligned.y);
    let errors = count_bit_errors(&bits_x, &frame.bits_x) + count_bit_errors(&bits_y, &frame.bits_y);
    let bits = frame.bits_x.len() + frame.bits_y.len();
    let ber = errors as f64 / bits as f64;
    let q_db = if errors == 0 {
        f64::INFINITY
    } else {
        q_factor_db(ber.min(0.5 - 1e-12))?
    };
    let cycle_slip = detect_cycle_slip(&aligned.x, &frame.sx) || detect_cycle_slip(&aligned.y, &frame.sy);
    Ok(Evaluation {
        snr_eff_db: snr,
        ber,
        q_db,
        bit_errors: errors,
        bits,
        ber_ci: wilson_interval(errors, bits, 1.96),
        cycle_slip,
        aligned,
    })
}

/// Column order of `results.csv`.
pub const RESULTS_HEADER: [&str; 9] = [
    "setup",
    "equalizer",
    "stps",
    "power_dbm",
    "snr_eff_db",
    "ber",
    "q_db",
    "rmps",
    "seed",
];

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub setup: String,
    pub equalizer: String,
    /// Steps (layers) per span as a fraction, `-` when not applicable.
    pub stps: String,
    pub power_dbm: f64,
    pub snr_eff_db: f64,
    pub ber: f64,
    pub q_db: f64,
    /// Real multiplications per symbol; NaN when not applicable.
    pub rmps: f64,
    pub seed: u64,
}

/// Serialized CSV writer for [`MetricsReport`] rows.
pub struct ResultsWriter {
    inner: csv::Writer<std::fs::File>,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let inner = csv::WriterBuilder::new()
            .has_headers(true)
            .from_path(path)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsReport) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Read back every row of a `results.csv`.
pub fn read_results(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn snr_arithmetic() {
        let est_x = vec![C64::new(1.0, 0.0)];
        let est_y = vec![C64::new(0.0, 1.0)];
        let sx = vec![C64::new(1.1, 0.0)];
        let sy = vec![C64::new(0.0, 0.9)];
        assert!((snr_eff_db(&est_x, &est_y, &sx, &sy) - 20.0).abs() < 1e-9);
        assert_eq!(snr_eff_db(&sx, &sy, &sx, &sy), f64::INFINITY);
    }

    #[test]
    fn q_factor_oracles() {
        // high-precision values of erfc(1/sqrt 2)/2 and erfc(1)/2
        assert!(q_factor_db(0.158_655_253_931_457_05).unwrap().abs() < 1e-9);
        let q = q_factor_db(0.078_649_603_525_143_18).unwrap();
        assert!((q - 3.010_299_956_639_812).abs() < 1e-9, "{q}");
        for bad in [0.0, 0.5, -0.1, 0.7, f64::NAN] {
            assert!(q_factor_db(bad).is_err());
        }
    }

    proptest! {
        #[test]
        fn q_round_trip(q in -5.0f64..17.0) {
            let back = q_factor_db(ber_from_q(q)).unwrap();
            prop_assert!((back - q).abs() < 1e-9);
        }

        #[test]
        fn q_strictly_decreasing(a in 1e-12f64..0.49, d in 1e-6f64..0.01) {
            let b = (a + d).min(0.4999);
            prop_assume!(b > a);
            prop_assert!(q_factor_db(a).unwrap() > q_factor_db(b).unwrap());
        }
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(10, 10_000, 1.96);
        assert!(lo < 1e-3 && 1e-3 < hi);
        assert!((lo - 5.43e-4).abs() < 1e-5 && (hi - 1.84e-3).abs() < 1e-5, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 100, 1.96).0, 0.0);
    }

    #[test]
    fn alignment_undoes_delay_swap_and_phase() {
        let c = Constellation::qam(16).unwrap();
        let mut r = rng::stream(1, 2);
        let f = SymbolFrame::random(1024, &c, &mut r);
        let rot = C64::from_polar(0.8, 2.0);
        let shift = |s: &[C64], d: usize| -> Vec<C64> { (0..s.len()).map(|k| s[(k + 1024 - d) % 1024] * rot).collect() };
        let eq = DualPolBlock::new(shift(&f.sy, 17), shift(&f.sx, 5), 32e9).unwrap();
        let ev = evaluate(&eq, &f, &c).unwrap();
        assert!(ev.aligned.swapped);
        assert_eq!(ev.aligned.delay, [5, 17]);
        assert_eq!(ev.bit_errors, 0);
        assert!(ev.snr_eff_db > 250.0);
        assert_eq!(ev.q_db, f64::INFINITY);
        assert!(!ev.cycle_slip);
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let row = MetricsReport {
            setup: "A".into(),
            equalizer: "LE".into(),
            stps: "-".into(),
            power_dbm: -4.0,
            snr_eff_db: 16.25,
            ber: 1.5e-3,
            q_db: 9.4,
            rmps: f64::NAN,
            seed: 7,
        };
        let mut w = ResultsWriter::create(&p).unwrap();
        w.write(&row).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
        let back = read_results(&p).unwrap();
        assert_eq!(back[0].snr_eff_db, 16.25);
        assert!(back[0].rmps.is_nan());
    }
}
