//! Carrier phase estimation: blind phase search with ML refinement, and a genie
//! estimator that uses the transmitted symbols.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::signal::DualPolBlock;
use crate::tx::Constellation;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpeConfig {
    pub test_phases: usize,
    /// Sliding window length in symbols.
    pub window: usize,
    /// Decision-directed ML refinement after the phase search.
    pub refine: bool,
}

impl Default for CpeConfig {
    fn default() -> Self {
        Self {
            test_phases: 64,
            window: 64,
            refine: true,
        }
    }
}

/// Circular moving sum of `v` over `[k - w/2, k - w/2 + w)`.
fn moving_sum<T>(v: &[T], w: usize) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    let n = v.len();
    let w = w.clamp(1, n);
    let half = w / 2;
    let mut acc = T::default();
    for j in 0..w {
        acc = acc + v[(j + n - half) % n];
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(acc);
        // slide: drop k - half, add k - half + w
        acc = acc - v[(k + n - half) % n] + v[(k + n - half + w) % n];
    }
    out
}

fn unwrap_quadrant(phases: &mut [f64]) {
    for k in 1..phases.len() {
        let d = phases[k - 1] - phases[k];
        phases[k] += FRAC_PI_2 * (d / FRAC_PI_2).round();
    }
}

fn rotate(block: &DualPolBlock, phases: &[Vec<f64>; 2]) -> Result<DualPolBlock> {
    let mut out = block.clone();
    for (p, ph) in out.pols_mut().into_iter().zip(phases) {
        p.iter_mut()
            .zip(ph)
            .for_each(|(v, a)| *v *= C64::from_polar(1.0, *a));
    }
    Ok(out)
}

fn bps_single(p: &[C64], constellation: &Constellation, cfg: &CpeConfig) -> Vec<f64> {
    let n = p.len();
    let power = p.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    let scale = (1.0 / power.max(f64::MIN_POSITIVE)).sqrt();
    let b = cfg.test_phases;
    let mut best = vec![(f64::INFINITY, 0.0); n];
    for i in 0..b {
        let phi = i as f64 / b as f64 * FRAC_PI_2 - FRAC_PI_2 / 2.0;
        let rot = C64::from_polar(scale, phi);
        let dist: Vec<f64> = p
            .iter()
            .map(|v| {
                let a = v * rot;
                (a - constellation.decide(a)).norm_sqr()
            })
            .collect();
        for (k, d) in moving_sum(&dist, cfg.window).into_iter().enumerate() {
            if d < best[k].0 {
                best[k] = (d, phi);
            }
        }
    }
    let mut phases: Vec<f64> = best.into_iter().map(|(_, p)| p).collect();
    unwrap_quadrant(&mut phases);
    if cfg.refine {
        let corr: Vec<C64> = p
            .iter()
            .zip(&phases)
            .map(|(v, ph)| {
                let a = v * C64::from_polar(scale, *ph);
                constellation.decide(a) * a.conj()
            })
            .collect();
        for (ph, c) in phases.iter_mut().zip(moving_sum(&corr, cfg.window)) {
            if c.norm() > 0.0 {
                *ph += c.arg();
            }
        }
    }
    phases
}

/// Per-symbol phase correction of each polarization. The polarizations are
/// estimated separately: the MIMO stage leaves each output with its own phase.
pub fn bps_phases(block: &DualPolBlock, constellation: &Constellation, cfg: &CpeConfig) -> Result<[Vec<f64>; 2]> {
    if cfg.test_phases == 0 || cfg.window == 0 {
        return Err(Error::invalid("CPE needs at least one test phase and a non-empty window"));
    }
    let [x, y] = block.pols();
    Ok([bps_single(x, constellation, cfg), bps_single(y, constellation, cfg)])
}

/// Blind phase search; the output keeps the input power.
pub fn bps_cpe(block: &DualPolBlock, constellation: &Constellation, cfg: &CpeConfig) -> Result<DualPolBlock> {
    let phases = bps_phases(block, constellation, cfg)?;
    rotate(block, &phases)
}

/// Phase from a sliding correlation with the (aligned) transmitted symbols, per
/// polarization.
pub fn genie_cpe(block: &DualPolBlock, reference: [&[C64]; 2], window: usize) -> Result<DualPolBlock> {
    let n = block.len();
    if reference.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("genie CPE reference length differs from the block".into()));
    }
    let phases = [0, 1].map(|i| {
        let p = block.pols()[i];
        let corr: Vec<C64> = (0..n).map(|k| reference[i][k] * p[k].conj()).collect();
        moving_sum(&corr, window).iter().map(|c| c.arg()).collect::<Vec<f64>>()
    });
    rotate(block, &phases)
}
