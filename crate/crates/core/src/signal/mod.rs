//! Shared numeric substrate: complex envelopes, DFT utilities, resampling and the
//! link / dispersion-map description.

mod fft;
pub mod io;
pub mod link;
mod resample;

pub use fft::{angular_frequencies, dft, fft_in_place, idft, ifft_in_place, is_power_of_two};
pub use link::{
    beta2_from_dispersion, dispersion_from_beta2, AmplifierSpec, DcfDesign, DispersionMap,
    FiberKind, FiberSegmentSpec, LinkElement, LinkSpec, Span,
};
pub use resample::resample;

use crate::{Error, Result, C64};

/// Sampled complex envelope of one polarization, amplitude in sqrt(W).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEnvelope {
    pub samples: Vec<C64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Offset of this envelope's zero frequency from the optical carrier, Hz.
    pub center_shift: f64,
}

impl ComplexEnvelope {
    pub fn new(samples: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("complex envelope must hold at least one sample"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "sample_rate",
                value: sample_rate,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            center_shift: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }
}

/// Both polarizations of a sampled field, sharing one sample rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolBlock {
    x: Vec<C64>,
    y: Vec<C64>,
    sample_rate: f64,
    center_shift: f64,
}

impl DualPolBlock {
    pub fn new(x: Vec<C64>, y: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "x has {} samples, y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("dual-pol block must hold at least one sample"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "sample_rate",
                value: sample_rate,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            x,
            y,
            sample_rate,
            center_shift: 0.0,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![C64::default(); len], vec![C64::default(); len], sample_rate)
    }

    pub fn from_envelopes(x: ComplexEnvelope, y: ComplexEnvelope) -> Result<Self> {
        if x.sample_rate != y.sample_rate {
            return Err(Error::ShapeMismatch(format!(
                "sample rates differ: {} vs {}",
                x.sample_rate, y.sample_rate
            )));
        }
        let shift = x.center_shift;
        let mut b = Self::new(x.samples, y.samples, x.sample_rate)?;
        b.center_shift = shift;
        Ok(b)
    }

    pub fn into_envelopes(self) -> (ComplexEnvelope, ComplexEnvelope) {
        let mk = |samples| ComplexEnvelope {
            samples,
            sample_rate: self.sample_rate,
            center_shift: self.center_shift,
        };
        (mk(self.x), mk(self.y))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn center_shift(&self) -> f64 {
        self.center_shift
    }

    pub fn with_center_shift(mut self, shift_hz: f64) -> Self {
        self.center_shift = shift_hz;
        self
    }

    pub fn x(&self) -> &[C64] {
        &self.x
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [C64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [C64] {
        &mut self.y
    }

    pub fn pols(&self) -> [&[C64]; 2] {
        [&self.x, &self.y]
    }

    pub fn pols_mut(&mut self) -> [&mut [C64]; 2] {
        [&mut self.x, &mut self.y]
    }

    pub fn into_parts(self) -> (Vec<C64>, Vec<C64>, f64) {
        (self.x, self.y, self.sample_rate)
    }

    /// Total energy of both polarizations (sum of |q|^2 over samples).
    pub fn energy(&self) -> f64 {
        energy(&self.x) + energy(&self.y)
    }

    /// Mean power of both polarizations together, W.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.pols_mut() {
            p.iter_mut().for_each(|s| *s *= factor);
        }
    }

    pub(crate) fn require_power_of_two(&self) -> Result<()> {
        if is_power_of_two(self.len()) {
            Ok(())
        } else {
            Err(Error::NotPowerOfTwo(self.len()))
        }
    }
}

pub fn energy(samples: &[C64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_rejects_mismatched_lengths() {
        let r = DualPolBlock::new(vec![C64::default(); 4], vec![C64::default(); 3], 1.0);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn envelope_rejects_bad_rate_and_empty() {
        assert!(ComplexEnvelope::new(vec![], 1.0).is_err());
        assert!(ComplexEnvelope::new(vec![C64::default()], 0.0).is_err());
        assert!(ComplexEnvelope::new(vec![C64::default()], f64::NAN).is_err());
    }

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_watt(0.0) - 1e-3).abs() < 1e-18);
        assert!((watt_to_dbm(dbm_to_watt(-3.7)) + 3.7).abs() < 1e-12);
    }
}
