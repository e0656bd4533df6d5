//! Fractionally spaced 2x2 butterfly equalizer with CMA warm-up and RDE tracking.

use serde::{Deserialize, Serialize};

use crate::signal::DualPolBlock;
use crate::tx::Constellation;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MimoMode {
    Cma,
    Rde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimoConfig {
    /// Taps per filter at T/2 spacing, odd.
    pub taps: usize,
    pub step_size: f64,
    /// CMA updates before switching to RDE.
    pub cma_symbols: usize,
    /// RDE updates before the output pass.
    pub rde_symbols: usize,
    /// Squared tap norm above which the equalizer is declared diverged.
    pub divergence_threshold: f64,
}

impl Default for MimoConfig {
    fn default() -> Self {
        Self {
            taps: 15,
            step_size: 1e-3,
            cma_symbols: 10_000,
            rde_symbols: 10_000,
            divergence_threshold: 1e4,
        }
    }
}

/// Taps `h_xx, h_xy, h_yx, h_yy`; output `y_x[k] = sum_j h_xx[j] u_x[2k - c + j] + h_xy[j] u_y[2k - c + j]`
/// with `c` the center tap, so a centered unit tap adds no delay.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoState {
    pub h_xx: Vec<C64>,
    pub h_xy: Vec<C64>,
    pub h_yx: Vec<C64>,
    pub h_yy: Vec<C64>,
    pub step_size: f64,
    pub mode: MimoMode,
    config: MimoConfig,
    cma_r2: f64,
    rings: Vec<f64>,
    updates: usize,
}

impl MimoState {
    /// Identity init: unit center tap on the direct filters.
    pub fn new(config: MimoConfig, constellation: &Constellation) -> Self {
        let taps = config.taps.max(1) | 1;
        let mut h_xx = vec![C64::default(); taps];
        let mut h_yy = vec![C64::default(); taps];
        h_xx[taps / 2] = C64::new(1.0, 0.0);
        h_yy[taps / 2] = C64::new(1.0, 0.0);
        Self {
            h_xx,
            h_xy: vec![C64::default(); taps],
            h_yx: vec![C64::default(); taps],
            h_yy,
            step_size: config.step_size,
            mode: MimoMode::Cma,
            config,
            cma_r2: constellation.cma_radius(),
            rings: constellation.ring_radii_sq(),
            updates: 0,
        }
    }

    pub fn tap_norm_sq(&self) -> f64 {
        [&self.h_xx, &self.h_xy, &self.h_yx, &self.h_yy]
            .iter()
            .flat_map(|h| h.iter())
            .map(|v| v.norm_sqr())
            .sum()
    }

    fn window(u: &[C64], k: usize, taps: usize, out: &mut [C64]) {
        let n = u.len() as isize;
        let c = (taps / 2) as isize;
        let start = 2 * k as isize - c;
        for (j, o) in out.iter_mut().enumerate() {
            *o = u[(start + j as isize).rem_euclid(n) as usize];
        }
    }

    fn apply(h1: &[C64], h2: &[C64], w1: &[C64], w2: &[C64]) -> C64 {
        h1.iter().zip(w1).map(|(h, u)| h * u).sum::<C64>()
            + h2.iter().zip(w2).map(|(h, u)| h * u).sum::<C64>()
    }

    fn target(&self, y: C64) -> f64 {
        match self.mode {
            MimoMode::Cma => self.cma_r2,
            MimoMode::Rde => {
                let p = y.norm_sqr();
                *self
                    .rings
                    .iter()
                    .min_by(|a, b| (*a - p).abs().total_cmp(&(*b - p).abs()))
                    .expect("constellation has rings")
            }
        }
    }

    /// One output symbol pair at symbol index `k`, updating the taps when `adapt`.
    fn step(&mut self, ux: &[C64], uy: &[C64], k: usize, adapt: bool, wx: &mut [C64], wy: &mut [C64]) -> (C64, C64) {
        let t = self.h_xx.len();
        Self::window(ux, k, t, wx);
        Self::window(uy, k, t, wy);
        let yx = Self::apply(&self.h_xx, &self.h_xy, wx, wy);
        let yy = Self::apply(&self.h_yx, &self.h_yy, wx, wy);
        if adapt && self.step_size != 0.0 {
            let ex = yx * (yx.norm_sqr() - self.target(yx)) * self.step_size;
            let ey = yy * (yy.norm_sqr() - self.target(yy)) * self.step_size;
            for j in 0..t {
                let (cx, cy) = (wx[j].conj(), wy[j].conj());
                self.h_xx[j] -= ex * cx;
                self.h_xy[j] -= ex * cy;
                self.h_yx[j] -= ey * cx;
                self.h_yy[j] -= ey * cy;
            }
            self.updates += 1;
        }
        (yx, yy)
    }

    fn check(&self) -> Result<()> {
        let norm = self.tap_norm_sq();
        if !norm.is_finite() || norm > self.config.divergence_threshold {
            return Err(Error::Diverged {
                symbols: self.updates,
                tap_norm: norm,
            });
        }
        Ok(())
    }

    /// Adapt for `count` symbols, cycling over the periodic block.
    fn adapt_for(&mut self, ux: &[C64], uy: &[C64], count: usize) -> Result<()> {
        let n_sym = ux.len() / 2;
        let t = self.h_xx.len();
        let (mut wx, mut wy) = (vec![C64::default(); t], vec![C64::default(); t]);
        for i in 0..count {
            self.step(ux, uy, i % n_sym, true, &mut wx, &mut wy);
            if i % 1024 == 1023 {
                self.check()?;
            }
        }
        self.check()
    }

    /// Both outputs locked onto the same input: rebuild the y filters orthogonal
    /// to the x filters.
    fn is_singular(&self, ux: &[C64], uy: &[C64]) -> bool {
        let out = self.run_frozen(ux, uy);
        let (a, b) = (&out[0], &out[1]);
        let c: C64 = a.iter().zip(b).map(|(p, q)| p * q.conj()).sum();
        let ea: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        let eb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        c.norm() > 0.5 * (ea * eb).sqrt()
    }

    fn orthogonalize(&mut self) {
        let rev = |h: &[C64]| -> Vec<C64> { h.iter().rev().map(|v| v.conj()).collect() };
        self.h_yy = rev(&self.h_xx);
        self.h_yx = rev(&self.h_xy).into_iter().map(|v| -v).collect();
    }

    fn run_frozen(&self, ux: &[C64], uy: &[C64]) -> [Vec<C64>; 2] {
        let t = self.h_xx.len();
        let (mut wx, mut wy) = (vec![C64::default(); t], vec![C64::default(); t]);
        let n_sym = ux.len() / 2;
        let mut ox = Vec::with_capacity(n_sym);
        let mut oy = Vec::with_capacity(n_sym);
        for k in 0..n_sym {
            Self::window(ux, k, t, &mut wx);
            Self::window(uy, k, t, &mut wy);
            ox.push(Self::apply(&self.h_xx, &self.h_xy, &wx, &wy));
            oy.push(Self::apply(&self.h_yx, &self.h_yy, &wx, &wy));
        }
        [ox, oy]
    }

    /// Warm up (CMA, then RDE for multi-ring constellations) and equalize the block
    /// in a final tracking pass. Input at 2 samples/symbol, unit power; output at
    /// 1 sample/symbol.
    pub fn equalize(&mut self, block: &DualPolBlock) -> Result<DualPolBlock> {
        if block.len() % 2 != 0 {
            return Err(Error::invalid("MIMO input must hold an even number of samples"));
        }
        let (ux, uy) = (block.x(), block.y());
        self.mode = MimoMode::Cma;
        self.adapt_for(ux, uy, self.config.cma_symbols)?;
        if self.config.cma_symbols > 0 && self.is_singular(ux, uy) {
            self.orthogonalize();
            self.adapt_for(ux, uy, self.config.cma_symbols)?;
        }
        if self.rings.len() > 1 {
            self.mode = MimoMode::Rde;
            self.adapt_for(ux, uy, self.config.rde_symbols)?;
        }
        let n_sym = ux.len() / 2;
        let t = self.h_xx.len();
        let (mut wx, mut wy) = (vec![C64::default(); t], vec![C64::default(); t]);
        let mut ox = Vec::with_capacity(n_sym);
        let mut oy = Vec::with_capacity(n_sym);
        for k in 0..n_sym {
            let (a, b) = self.step(ux, uy, k, true, &mut wx, &mut wy);
            ox.push(a);
            oy.push(b);
        }
        self.check()?;
        DualPolBlock::new(ox, oy, block.sample_rate() / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tx::{rotate_polarization, SymbolFrame};

    fn two_sps(frame: &SymbolFrame) -> DualPolBlock {
        // symbols on even samples, midpoints by linear interpolation
        let up = |s: &[C64]| -> Vec<C64> {
            let n = s.len();
            (0..2 * n)
                .map(|i| if i % 2 == 0 { s[i / 2] } else { (s[i / 2] + s[(i / 2 + 1) % n]) / 2.0 })
                .collect()
        };
        DualPolBlock::new(up(&frame.sx), up(&frame.sy), 64e9).unwrap()
    }

    fn frame(n: usize, seed: u64) -> (SymbolFrame, Constellation) {
        let c = Constellation::qam(16).unwrap();
        let mut r = rng::stream(seed, 0);
        (SymbolFrame::random(n, &c, &mut r), c)
    }

    #[test]
    fn zero_step_identity_is_fixed_point() {
        let (f, c) = frame(512, 1);
        let cfg = MimoConfig { step_size: 0.0, ..MimoConfig::default() };
        let mut st = MimoState::new(cfg, &c);
        let init = st.clone();
        let out = st.equalize(&two_sps(&f)).unwrap();
        assert_eq!(st.h_xx, init.h_xx);
        assert_eq!(st.h_xy, init.h_xy);
        assert_eq!(st.h_yy, init.h_yy);
        for (a, b) in out.x().iter().zip(&f.sx) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn recovers_polarization_swap_without_errors() {
        let (f, c) = frame(4096, 2);
        let mut b = two_sps(&f);
        rotate_polarization(&mut b, std::f64::consts::FRAC_PI_2, 0.0);
        let mut st = MimoState::new(MimoConfig::default(), &c);
        let out = st.equalize(&b).unwrap();
        // x output carries -sx or sx on the y branch; decide after removing a common phase
        let best = |o: &[C64], s: &[C64]| -> usize {
            let g: C64 = s.iter().zip(o).map(|(a, b)| a * b.conj()).sum::<C64>()
                / o.iter().map(|v| v.norm_sqr()).sum::<f64>();
            o.iter().zip(s).filter(|(a, b)| c.decide(**a * g) != **b).count()
        };
        let (ex, ey) = (best(out.x(), &f.sx), best(out.y(), &f.sy));
        let (sx, sy) = (best(out.x(), &f.sy), best(out.y(), &f.sx));
        assert!(ex + ey == 0 || sx + sy == 0, "{ex} {ey} {sx} {sy}");
    }

    #[test]
    fn random_unitary_channel_converges() {
        let (f, c) = frame(4096, 3);
        let mut b = two_sps(&f);
        rotate_polarization(&mut b, 0.7, 1.9);
        let mut st = MimoState::new(MimoConfig::default(), &c);
        let out = st.equalize(&b).unwrap();
        let evm = |o: &[C64]| -> f64 {
            // compare against whichever reference the branch locked onto
            [&f.sx, &f.sy]
                .iter()
                .map(|s| {
                    let g: C64 = s.iter().zip(o).map(|(a, b)| a * b.conj()).sum::<C64>()
                        / o.iter().map(|v| v.norm_sqr()).sum::<f64>();
                    let e: f64 = o.iter().zip(s.iter()).map(|(a, b)| (a * g - b).norm_sqr()).sum();
                    (e / s.len() as f64).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        };
        assert!(evm(out.x()) < 0.02, "{}", evm(out.x()));
        assert!(evm(out.y()) < 0.02, "{}", evm(out.y()));
    }

    #[test]
    fn divergence_is_reported() {
        let (f, c) = frame(256, 4);
        let mut b = two_sps(&f);
        b.scale(30.0);
        let mut st = MimoState::new(MimoConfig { step_size: 0.5, ..MimoConfig::default() }, &c);
        assert!(matches!(st.equalize(&b), Err(Error::Diverged { .. })));
    }
}
