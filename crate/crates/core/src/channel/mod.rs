//! Forward propagation through the dispersion-managed link: symmetric split-step
//! Fourier method with loss, chromatic dispersion, PMD, Kerr nonlinearity, lumped
//! EDFA noise and laser phase noise.
//!
//! One SSFM segment of length `d` is
//! `L(d/2) -> N(d) -> L(d/2) -> J_i`, with `L` the loss/CD step, `N` the coupled
//! Kerr step and `J_i` the Jones matrix of the segment's PMD section. Between
//! segments the field stays in the frequency domain, so each segment costs one
//! FFT/IFFT pair per polarization.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, SimRng};
use crate::signal::link::LinkElement;
use crate::signal::{
    angular_frequencies, fft_in_place, ifft_in_place, AmplifierSpec, DualPolBlock, FiberSegmentSpec,
    LinkSpec,
};
use crate::{Error, Result, C64};

/// Rotation and DGD of one PMD section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmdSection {
    pub theta: f64,
    pub phi: f64,
    /// Differential group delay, s.
    pub tau: f64,
}

/// Random PMD sections for every SSFM segment of every fiber, in link order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmdRealization {
    pub fibers: Vec<Vec<PmdSection>>,
    pub rng_seed: u64,
}

impl PmdRealization {
    pub fn draw(link: &LinkSpec, rng_seed: u64) -> Self {
        let mut rng = rng::stream(rng_seed, 0x504D_4400);
        let fibers = link
            .fibers()
            .map(|f| {
                let std = f.dgd_std_s();
                (0..f.n_segments())
                    .map(|_| {
                        let theta = rng.random::<f64>() * 2.0 * PI;
                        let phi = rng.random::<f64>() * 2.0 * PI;
                        let z: f64 = StandardNormal.sample(&mut rng);
                        PmdSection {
                            theta,
                            phi,
                            tau: std * z,
                        }
                    })
                    .collect()
            })
            .collect();
        Self { fibers, rng_seed }
    }

    fn check(&self, link: &LinkSpec) -> Result<()> {
        let expect: Vec<usize> = link.fibers().map(|f| f.n_segments()).collect();
        let got: Vec<usize> = self.fibers.iter().map(Vec::len).collect();
        if expect != got {
            return Err(Error::ShapeMismatch(
                "PMD realization does not match the link's segment layout".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserSpec {
    /// Combined linewidth of transmitter and local oscillator, Hz.
    pub linewidth_hz: f64,
    pub rng_seed: u64,
}

/// Switches for [`propagate_link`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOptions {
    pub ase_noise: bool,
    pub noise_seed: u64,
}

impl ChannelOptions {
    pub fn noiseless() -> Self {
        Self {
            ase_noise: false,
            noise_seed: 0,
        }
    }
}

/// `exp(-alpha len / 2 + j beta2 w^2 len / 2)` for every bin.
pub fn linear_response(w: &[f64], beta2: f64, alpha: f64, len_m: f64) -> Vec<C64> {
    w.iter()
        .map(|wk| C64::from_polar((-alpha * len_m / 2.0).exp(), beta2 * wk * wk * len_m / 2.0))
        .collect()
}

/// Loss and chromatic dispersion over `delta_m` metres, applied in the frequency domain.
pub fn linear_step(block: &mut DualPolBlock, beta2: f64, alpha: f64, delta_m: f64) -> Result<()> {
    block.require_power_of_two()?;
    let w = angular_frequencies(block.len(), block.sample_rate());
    let h = linear_response(&w, beta2, alpha, delta_m);
    for p in block.pols_mut() {
        fft_in_place(p)?;
        p.iter_mut().zip(&h).for_each(|(v, hk)| *v *= hk);
        ifft_in_place(p)?;
    }
    Ok(())
}

/// Apply `J(w) = R D(w)` (or its inverse) to spectra `xs`, `ys`.
pub(crate) fn jones_spectral(xs: &mut [C64], ys: &mut [C64], w: &[f64], s: &PmdSection, inverse: bool) {
    let a = C64::from_polar(1.0, s.phi / 2.0);
    let b = C64::from_polar(1.0, -s.phi / 2.0);
    let (c, sn) = (s.theta.cos(), s.theta.sin());
    // R = [[a c, b s], [-a s, b c]]
    let r = [[a * c, b * sn], [-a * sn, b * c]];
    for k in 0..xs.len() {
        let dx = C64::from_polar(1.0, -w[k] * s.tau / 2.0);
        let (x, y) = (xs[k], ys[k]);
        if inverse {
            // D^-1 R^H
            let u = r[0][0].conj() * x + r[1][0].conj() * y;
            let v = r[0][1].conj() * x + r[1][1].conj() * y;
            xs[k] = u * dx.conj();
            ys[k] = v * dx;
        } else {
            let (u, v) = (x * dx, y * dx.conj());
            xs[k] = r[0][0] * u + r[0][1] * v;
            ys[k] = r[1][0] * u + r[1][1] * v;
        }
    }
}

/// PMD section applied in the frequency domain. Unitary at every frequency.
pub fn pmd_step(block: &mut DualPolBlock, section: PmdSection) -> Result<()> {
    block.require_power_of_two()?;
    let w = angular_frequencies(block.len(), block.sample_rate());
    let [x, y] = block.pols_mut();
    fft_in_place(x)?;
    fft_in_place(y)?;
    jones_spectral(x, y, &w, &section, false);
    ifft_in_place(x)?;
    ifft_in_place(y)?;
    Ok(())
}

/// Coupled Kerr rotation `x -> x exp(j g (|x|^2 + 2/3 |y|^2))`, symmetric for y.
/// `g` is gamma times step length (1/W); a negative `g` undoes the step.
pub(crate) fn kerr_coupled(x: &mut [C64], y: &mut [C64], g: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (px, py) = (a.norm_sqr(), b.norm_sqr());
        *a *= C64::from_polar(1.0, g * (px + 2.0 / 3.0 * py));
        *b *= C64::from_polar(1.0, g * (py + 2.0 / 3.0 * px));
    }
}

pub fn nonlinear_step(block: &mut DualPolBlock, gamma_per_w_m: f64, delta_m: f64) {
    let [x, y] = block.pols_mut();
    kerr_coupled(x, y, gamma_per_w_m * delta_m);
}

/// Lumped EDFA: field gain sqrt(G) plus circularly-symmetric Gaussian ASE with
/// variance `sigma0^2(bandwidth_hz)` per polarization and sample. Pass the
/// simulation bandwidth (the sample rate) to get the physical noise density.
pub fn amplify(block: &mut DualPolBlock, amp: &AmplifierSpec, bandwidth_hz: f64, rng: &mut SimRng) {
    let g = amp.gain().sqrt();
    let var = amp.ase_variance(bandwidth_hz);
    let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite variance");
    for p in block.pols_mut() {
        for v in p.iter_mut() {
            *v *= g;
            if var > 0.0 {
                *v += C64::new(normal.sample(rng), normal.sample(rng));
            }
        }
    }
}

/// Propagate through one fiber section by section; `pmd` holds one section per
/// segment or is `None` for a PMD-free fiber.
fn propagate_fiber(
    block: &mut DualPolBlock,
    fiber: &FiberSegmentSpec,
    pmd: Option<&[PmdSection]>,
    w: &[f64],
) -> Result<()> {
    let step = fiber.step_m();
    let h_half = linear_response(w, fiber.beta2(), fiber.alpha_per_m(), step / 2.0);
    let g = fiber.gamma_per_w_m() * step;
    let [x, y] = block.pols_mut();
    fft_in_place(x)?;
    fft_in_place(y)?;
    for seg in 0..fiber.n_segments() {
        for p in [&mut *x, &mut *y] {
            p.iter_mut().zip(&h_half).for_each(|(v, h)| *v *= h);
            ifft_in_place(p)?;
        }
        if g != 0.0 {
            kerr_coupled(x, y, g);
        }
        for p in [&mut *x, &mut *y] {
            fft_in_place(p)?;
            p.iter_mut().zip(&h_half).for_each(|(v, h)| *v *= h);
        }
        if let Some(sections) = pmd {
            jones_spectral(x, y, w, &sections[seg], false);
        }
    }
    ifft_in_place(x)?;
    ifft_in_place(y)?;
    Ok(())
}

/// Forward propagation over the whole link: per span SMF, first EDFA, DCF, second
/// EDFA. Deterministic given the PMD and noise seeds.
pub fn propagate_link(
    block: &DualPolBlock,
    link: &LinkSpec,
    pmd: Option<&PmdRealization>,
    opts: ChannelOptions,
) -> Result<DualPolBlock> {
    block.require_power_of_two()?;
    if let Some(p) = pmd {
        p.check(link)?;
    }
    let w = angular_frequencies(block.len(), block.sample_rate());
    let mut out = block.clone();
    let mut noise_rng = rng::stream(opts.noise_seed, 0x4153_4500);
    let mut fiber_idx = 0;
    for el in link.elements() {
        match el {
            LinkElement::Fiber(f) => {
                let sections = pmd.map(|p| p.fibers[fiber_idx].as_slice());
                propagate_fiber(&mut out, f, sections, &w)?;
                fiber_idx += 1;
            }
            LinkElement::Amplifier(a) => {
                if opts.ase_noise {
                    amplify(&mut out, a, block.sample_rate(), &mut noise_rng);
                } else {
                    out.scale(a.gain().sqrt());
                }
            }
        }
    }
    Ok(out)
}

/// Wiener phase noise common to both polarizations, increments of variance
/// `2 pi linewidth / sample_rate`.
pub fn apply_laser_phase_noise(block: &mut DualPolBlock, laser: &LaserSpec) {
    if laser.linewidth_hz <= 0.0 {
        return;
    }
    let phases = wiener_phase(block.len(), block.sample_rate(), laser);
    for p in block.pols_mut() {
        p.iter_mut()
            .zip(&phases)
            .for_each(|(v, ph)| *v *= C64::from_polar(1.0, *ph));
    }
}

/// The phase trajectory used by [`apply_laser_phase_noise`], starting at 0.
pub fn wiener_phase(n: usize, sample_rate: f64, laser: &LaserSpec) -> Vec<f64> {
    let std = (2.0 * PI * laser.linewidth_hz / sample_rate).sqrt();
    let mut rng = rng::stream(laser.rng_seed, 0x4C41_5345);
    let mut acc = 0.0;
    (0..n)
        .map(|i| {
            if i > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += std * z;
            }
            acc
        })
        .collect()
}
