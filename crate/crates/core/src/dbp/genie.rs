//! PMD-aware back-propagation that exactly reverses the forward SSFM, used as an
//! upper-bound oracle.

use crate::channel::{jones_spectral, kerr_coupled, linear_response, PmdRealization};
use crate::signal::{angular_frequencies, fft_in_place, ifft_in_place, DualPolBlock, LinkElement, LinkSpec};
use crate::{Error, Result, C64};

/// Undo `propagate_link` segment by segment at the forward step size: inverse
/// Jones matrices, inverse half-step linear operators, negated coupled Kerr phase
/// and removal of every amplifier gain. Noise is of course not undone.
pub fn genie_dbp(block: &DualPolBlock, link: &LinkSpec, pmd: Option<&PmdRealization>) -> Result<DualPolBlock> {
    block.require_power_of_two()?;
    let n_fibers = link.fibers().count();
    if let Some(p) = pmd {
        if p.fibers.len() != n_fibers {
            return Err(Error::ShapeMismatch("PMD realization does not match the link".into()));
        }
    }
    let w = angular_frequencies(block.len(), block.sample_rate());
    let mut out = block.clone();
    let elements: Vec<LinkElement<'_>> = link.elements().collect();
    let mut fiber_idx = n_fibers;
    for el in elements.iter().rev() {
        match el {
            LinkElement::Amplifier(a) => out.scale(1.0 / a.gain().sqrt()),
            LinkElement::Fiber(f) => {
                fiber_idx -= 1;
                let sections = pmd.map(|p| p.fibers[fiber_idx].as_slice());
                if let Some(s) = sections {
                    if s.len() != f.n_segments() {
                        return Err(Error::ShapeMismatch("PMD sections do not match the fiber".into()));
                    }
                }
                let step = f.step_m();
                let inv: Vec<C64> = linear_response(&w, f.beta2(), f.alpha_per_m(), step / 2.0)
                    .iter()
                    .map(|h| h.inv())
                    .collect();
                let g = f.gamma_per_w_m() * step;
                let [x, y] = out.pols_mut();
                fft_in_place(x)?;
                fft_in_place(y)?;
                for seg in (0..f.n_segments()).rev() {
                    if let Some(s) = sections {
                        jones_spectral(x, y, &w, &s[seg], true);
                    }
                    for p in [&mut *x, &mut *y] {
                        p.iter_mut().zip(&inv).for_each(|(v, h)| *v *= h);
                        ifft_in_place(p)?;
                    }
                    if g != 0.0 {
                        kerr_coupled(x, y, -g);
                    }
                    for p in [&mut *x, &mut *y] {
                        fft_in_place(p)?;
                        p.iter_mut().zip(&inv).for_each(|(v, h)| *v *= h);
                    }
                }
                ifft_in_place(x)?;
                ifft_in_place(y)?;
            }
        }
    }
    Ok(out)
}
