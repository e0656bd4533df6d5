//! Root-raised-cosine pulse, time-domain (truncated) and frequency-domain forms.

use std::f64::consts::PI;

/// RRC impulse response at `t` symbol periods, normalised to unit energy per symbol
/// (`integral h(t)^2 dt = 1` with `t` in symbols).
pub fn rrc_impulse(t: f64, rolloff: f64) -> f64 {
    let r = rolloff;
    if t.abs() < 1e-12 {
        return 1.0 - r + 4.0 * r / PI;
    }
    if r > 0.0 && ((4.0 * r * t).abs() - 1.0).abs() < 1e-9 {
        let a = PI / (4.0 * r);
        return r / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - r)).sin() + 4.0 * r * t * (PI * t * (1.0 + r)).cos();
    let den = PI * t * (1.0 - (4.0 * r * t).powi(2));
    num / den
}

/// Raised-cosine spectrum at normalised frequency `nu = f Ts`, peak 1.
pub fn raised_cosine_spectrum(nu: f64, rolloff: f64) -> f64 {
    let a = nu.abs();
    let lo = (1.0 - rolloff) / 2.0;
    let hi = (1.0 + rolloff) / 2.0;
    if a <= lo {
        1.0
    } else if a > hi {
        0.0
    } else {
        0.5 * (1.0 + (PI / rolloff * (a - lo)).cos())
    }
}

/// Root-raised-cosine frequency response (matched filter), peak 1.
pub fn rrc_spectrum(nu: f64, rolloff: f64) -> f64 {
    raised_cosine_spectrum(nu, rolloff).sqrt()
}

/// Taps of an RRC pulse sampled at `sps` samples per symbol and truncated to
/// `span` symbols. Returned with the peak at index `span * sps / 2`.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as isize;
    (-half..=half)
        .map(|n| rrc_impulse(n as f64 / sps as f64, rolloff))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_energy() {
        let sps = 32;
        let taps = rrc_taps(0.06, sps, 512);
        let e: f64 = taps.iter().map(|t| t * t).sum::<f64>() / sps as f64;
        assert!((e - 1.0).abs() < 2e-3, "{e}");
    }

    #[test]
    fn singular_points_are_continuous() {
        let r = 0.25;
        let t0 = 1.0 / (4.0 * r);
        let a = rrc_impulse(t0, r);
        let b = rrc_impulse(t0 + 1e-6, r);
        assert!((a - b).abs() < 1e-4);
        assert!((rrc_impulse(1e-7, r) - rrc_impulse(0.0, r)).abs() < 1e-6);
    }

    #[test]
    fn spectrum_edges() {
        assert_eq!(raised_cosine_spectrum(0.0, 0.06), 1.0);
        assert!((raised_cosine_spectrum(0.5, 0.06) - 0.5).abs() < 1e-12);
        assert_eq!(raised_cosine_spectrum(0.531, 0.06), 0.0);
    }
}
