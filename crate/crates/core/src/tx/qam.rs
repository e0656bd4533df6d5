//! Gray-coded square QAM.
//!
//! Labels are split in two halves: the leading `log2(M)/2` bits select the in-phase
//! level, the trailing half the quadrature level, each through a reflected binary
//! (Gray) code. Points are scaled to unit average energy.

use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_axis: usize,
    scale: f64,
    /// `points[label]`
    points: Vec<C64>,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64 | 256) {
            return Err(Error::invalid(format!("unsupported QAM order {order}")));
        }
        let bits = order.trailing_zeros() as usize;
        let bits_per_axis = bits / 2;
        let levels = 1usize << bits_per_axis;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
        let level = |g: usize| (2.0 * gray_to_binary(g) as f64 - (levels as f64 - 1.0)) * scale;
        let points = (0..order)
            .map(|label| {
                let gi = label >> bits_per_axis;
                let gq = label & (levels - 1);
                C64::new(level(gi), level(gq))
            })
            .collect();
        Ok(Self {
            order,
            bits_per_axis,
            scale,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    /// Distance between neighbouring levels on one axis.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    /// Distinct squared radii of the constellation, ascending.
    pub fn ring_radii_sq(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.points.iter().map(|p| p.norm_sqr()).collect();
        r.sort_by(f64::total_cmp);
        r.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        r
    }

    /// CMA dispersion constant E|s|^4 / E|s|^2.
    pub fn cma_radius(&self) -> f64 {
        let e2: f64 = self.points.iter().map(|p| p.norm_sqr()).sum();
        let e4: f64 = self.points.iter().map(|p| p.norm_sqr().powi(2)).sum();
        e4 / e2
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(Error::invalid(format!(
                "{} bits do not fill whole {}-bit symbols",
                bits.len(),
                k
            )));
        }
        Ok(bits
            .chunks_exact(k)
            .map(|c| {
                let label = c.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.points[label]
            })
            .collect())
    }

    fn axis_index(&self, v: f64) -> usize {
        let levels = (1usize << self.bits_per_axis) as f64;
        let idx = ((v / self.scale + levels - 1.0) / 2.0).round();
        idx.clamp(0.0, levels - 1.0) as usize
    }

    /// Label of the nearest constellation point.
    pub fn decide_label(&self, s: C64) -> usize {
        let bi = self.axis_index(s.re);
        let bq = self.axis_index(s.im);
        let gi = bi ^ (bi >> 1);
        let gq = bq ^ (bq >> 1);
        (gi << self.bits_per_axis) | gq
    }

    pub fn decide(&self, s: C64) -> C64 {
        self.points[self.decide_label(s)]
    }

    pub fn demap(&self, symbols: &[C64]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * k);
        for &s in symbols {
            let label = self.decide_label(s);
            out.extend((0..k).rev().map(|i| ((label >> i) & 1) as u8));
        }
        out
    }
}

/// Convenience wrapper for [`Constellation::map`].
pub fn map_bits(bits: &[u8], order: usize) -> Result<Vec<C64>> {
    Constellation::qam(order)?.map(bits)
}
