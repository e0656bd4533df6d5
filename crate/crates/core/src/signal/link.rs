use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::db_to_linear;
use crate::consts::{LAMBDA_C, NU_C, PLANCK, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// beta2 in s^2/m from D in ps/(nm km), at the fixed 1550 nm carrier.
pub fn beta2_from_dispersion(d_ps_nm_km: f64) -> f64 {
    let d_si = d_ps_nm_km * 1e-6; // s/m^2
    -d_si * LAMBDA_C * LAMBDA_C / (2.0 * PI * SPEED_OF_LIGHT)
}

/// Inverse of [`beta2_from_dispersion`]; also maps accumulated beta2*L (s^2) to ps/nm
/// when the result is divided by 1e3.
pub fn dispersion_from_beta2(beta2: f64) -> f64 {
    -beta2 * 2.0 * PI * SPEED_OF_LIGHT / (LAMBDA_C * LAMBDA_C) / 1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberKind {
    Smf,
    Dcf,
}

/// One homogeneous fiber section. Boundary units; SI accessors below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSegmentSpec {
    pub kind: FiberKind,
    pub length_km: f64,
    pub alpha_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub pmd_ps_per_sqrt_km: f64,
    /// PMD correlation length, which is also the SSFM step.
    pub correlation_length_km: f64,
}

impl FiberSegmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::OutOfRange {
                name: "length_km",
                value: self.length_km,
                range: "(0, inf)",
            });
        }
        if !(self.correlation_length_km > 0.0) {
            return Err(Error::OutOfRange {
                name: "correlation_length_km",
                value: self.correlation_length_km,
                range: "(0, inf)",
            });
        }
        let ratio = self.length_km / self.correlation_length_km;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "correlation length {} km does not divide fiber length {} km",
                self.correlation_length_km, self.length_km
            )));
        }
        if self.alpha_db_per_km < 0.0 || self.pmd_ps_per_sqrt_km < 0.0 {
            return Err(Error::invalid("loss and PMD coefficients must be non-negative"));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        (self.length_km / self.correlation_length_km).round() as usize
    }

    pub fn length_m(&self) -> f64 {
        self.length_km * 1e3
    }

    pub fn step_m(&self) -> f64 {
        self.correlation_length_km * 1e3
    }

    /// Power attenuation coefficient, 1/m.
    pub fn alpha_per_m(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    pub fn beta2(&self) -> f64 {
        beta2_from_dispersion(self.dispersion_ps_nm_km)
    }

    /// Kerr coefficient, 1/(W m).
    pub fn gamma_per_w_m(&self) -> f64 {
        self.gamma_per_w_km / 1e3
    }

    pub fn loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.length_km
    }

    /// Accumulated dispersion of the whole section, ps/nm.
    pub fn accumulated_dispersion(&self) -> f64 {
        self.dispersion_ps_nm_km * self.length_km
    }

    /// Standard deviation of the per-segment DGD, s.
    pub fn dgd_std_s(&self) -> f64 {
        self.pmd_ps_per_sqrt_km * self.correlation_length_km.sqrt() * 1e-12
    }

    /// Standard single-mode fiber with the given coefficients and a 1 km step.
    pub fn smf(length_km: f64, alpha_db_per_km: f64, d: f64, gamma: f64, pmd: f64) -> Self {
        Self {
            kind: FiberKind::Smf,
            length_km,
            alpha_db_per_km,
            dispersion_ps_nm_km: d,
            gamma_per_w_km: gamma,
            pmd_ps_per_sqrt_km: pmd,
            correlation_length_km: 1.0,
        }
    }
}

/// Lumped EDFA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierSpec {
    pub gain_db: f64,
    pub noise_figure_db: f64,
    pub carrier_freq_hz: f64,
}

impl AmplifierSpec {
    pub fn new(gain_db: f64, noise_figure_db: f64) -> Self {
        Self {
            gain_db,
            noise_figure_db,
            carrier_freq_hz: NU_C,
        }
    }

    pub fn gain(&self) -> f64 {
        db_to_linear(self.gain_db)
    }

    /// Per-polarization ASE noise power over bandwidth `bandwidth_hz`, W:
    /// `0.5 (G - 1) B h nu0 NF`.
    pub fn ase_variance(&self, bandwidth_hz: f64) -> f64 {
        0.5 * (self.gain() - 1.0)
            * bandwidth_hz
            * PLANCK
            * self.carrier_freq_hz
            * db_to_linear(self.noise_figure_db)
    }
}

/// SMF, first EDFA stage, then (for DM links) the DCF and the second EDFA stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub smf: FiberSegmentSpec,
    pub pre_amp: AmplifierSpec,
    pub dcf: Option<FiberSegmentSpec>,
    pub post_amp: Option<AmplifierSpec>,
}

/// One element of the link in propagation order.
#[derive(Debug, Clone, Copy)]
pub enum LinkElement<'a> {
    Fiber(&'a FiberSegmentSpec),
    Amplifier(&'a AmplifierSpec),
}

impl Span {
    pub fn elements(&self) -> Vec<LinkElement<'_>> {
        let mut v = vec![LinkElement::Fiber(&self.smf), LinkElement::Amplifier(&self.pre_amp)];
        if let (Some(dcf), Some(amp)) = (&self.dcf, &self.post_amp) {
            v.push(LinkElement::Fiber(dcf));
            v.push(LinkElement::Amplifier(amp));
        }
        v
    }

    pub fn length_km(&self) -> f64 {
        self.smf.length_km + self.dcf.as_ref().map_or(0.0, |d| d.length_km)
    }

    fn validate(&self) -> Result<()> {
        self.smf.validate()?;
        match (&self.dcf, &self.post_amp) {
            (Some(d), Some(_)) => d.validate()?,
            (None, None) => {}
            _ => return Err(Error::invalid("a DCF stage needs both the fiber and its amplifier")),
        }
        let gain = self.pre_amp.gain_db + self.post_amp.as_ref().map_or(0.0, |a| a.gain_db);
        let loss = self.smf.loss_db() + self.dcf.as_ref().map_or(0.0, |d| d.loss_db());
        if (gain - loss).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "span is not power balanced: gain {gain} dB vs loss {loss} dB"
            )));
        }
        for a in std::iter::once(&self.pre_amp).chain(self.post_amp.iter()) {
            if a.gain_db < 0.0 {
                return Err(Error::invalid("amplifier gain must be >= 0 dB"));
            }
        }
        Ok(())
    }
}

/// Ordered list of spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub spans: Vec<Span>,
}

/// Parameters of the DCF stage appended to each SMF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcfDesign {
    pub length_km: f64,
    /// Fraction of the SMF dispersion compensated by the DCF.
    pub compensation: f64,
    pub alpha_db_per_km: f64,
    pub gamma_per_w_km: f64,
}

impl Default for DcfDesign {
    fn default() -> Self {
        Self {
            length_km: 13.0,
            compensation: 0.85,
            alpha_db_per_km: 0.5,
            gamma_per_w_km: 5.0,
        }
    }
}

impl LinkSpec {
    pub fn new(spans: Vec<Span>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::invalid("link needs at least one span"));
        }
        for s in &spans {
            s.validate()?;
        }
        Ok(Self { spans })
    }

    /// Periodic DM link: every span is SMF, EDFA restoring the DCF loss, DCF
    /// compensating `dcf.compensation` of the SMF dispersion, EDFA restoring the
    /// SMF loss. The DCF shares the SMF's PMD coefficient and step length.
    pub fn dispersion_managed(
        n_spans: usize,
        smf: FiberSegmentSpec,
        dcf: &DcfDesign,
        noise_figure_db: f64,
    ) -> Result<Self> {
        let dcf_fiber = FiberSegmentSpec {
            kind: FiberKind::Dcf,
            length_km: dcf.length_km,
            alpha_db_per_km: dcf.alpha_db_per_km,
            dispersion_ps_nm_km: -dcf.compensation * smf.accumulated_dispersion() / dcf.length_km,
            gamma_per_w_km: dcf.gamma_per_w_km,
            pmd_ps_per_sqrt_km: smf.pmd_ps_per_sqrt_km,
            correlation_length_km: smf.correlation_length_km,
        };
        let span = Span {
            pre_amp: AmplifierSpec::new(dcf_fiber.loss_db(), noise_figure_db),
            post_amp: Some(AmplifierSpec::new(smf.loss_db(), noise_figure_db)),
            dcf: Some(dcf_fiber),
            smf,
        };
        Self::new(vec![span; n_spans])
    }

    /// Link without in-line compensation; one EDFA per span.
    pub fn uncompensated(n_spans: usize, smf: FiberSegmentSpec, noise_figure_db: f64) -> Result<Self> {
        let span = Span {
            pre_amp: AmplifierSpec::new(smf.loss_db(), noise_figure_db),
            dcf: None,
            post_amp: None,
            smf,
        };
        Self::new(vec![span; n_spans])
    }

    pub fn n_spans(&self) -> usize {
        self.spans.len()
    }

    pub fn length_km(&self) -> f64 {
        self.spans.iter().map(Span::length_km).sum()
    }

    pub fn elements(&self) -> impl Iterator<Item = LinkElement<'_>> {
        self.spans.iter().flat_map(|s| s.elements())
    }

    pub fn fibers(&self) -> impl Iterator<Item = &FiberSegmentSpec> {
        self.elements().filter_map(|e| match e {
            LinkElement::Fiber(f) => Some(f),
            LinkElement::Amplifier(_) => None,
        })
    }

    /// Kerr coefficient of the first SMF, used by DBP for every step.
    pub fn smf_gamma_per_w_m(&self) -> f64 {
        self.spans[0].smf.gamma_per_w_m()
    }

    pub fn dispersion_map(&self) -> DispersionMap {
        let mut pts = vec![(0.0, 0.0)];
        let (mut z, mut d) = (0.0, 0.0);
        for f in self.fibers() {
            z += f.length_km;
            d += f.accumulated_dispersion();
            pts.push((z, d));
        }
        DispersionMap { breakpoints: pts }
    }

    /// Nonlinear effective length, km, of the SMF sections lying inside the forward
    /// interval `[z_a, z_b]` (km from the transmitter). Each SMF contributes
    /// `integral exp(-alpha s) ds` with `s` measured from that SMF's input, so the
    /// result is referenced to the launch power.
    pub fn smf_effective_length_km(&self, z_a: f64, z_b: f64) -> f64 {
        let mut start = 0.0;
        let mut total = 0.0;
        for span in &self.spans {
            let smf = &span.smf;
            let (s0, s1) = (start, start + smf.length_km);
            let a = z_a.max(s0);
            let b = z_b.min(s1);
            if b > a {
                let alpha = smf.alpha_db_per_km * std::f64::consts::LN_10 / 10.0;
                let (ra, rb) = (a - s0, b - s0);
                total += if alpha > 0.0 {
                    ((-alpha * ra).exp() - (-alpha * rb).exp()) / alpha
                } else {
                    rb - ra
                };
            }
            start += span.length_km();
        }
        total
    }
}

/// Piecewise-linear accumulated dispersion D_c(z), z in km, D_c in ps/nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionMap {
    pub breakpoints: Vec<(f64, f64)>,
}

impl DispersionMap {
    pub fn length_km(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |p| p.0)
    }

    pub fn total(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |p| p.1)
    }

    pub fn accumulated_dispersion(&self, z_km: f64) -> Result<f64> {
        let len = self.length_km();
        let tol = 1e-9 * len.max(1.0);
        if !(z_km >= -tol && z_km <= len + tol) {
            return Err(Error::OutOfRange {
                name: "z_km",
                value: z_km,
                range: "[0, link length]",
            });
        }
        let z = z_km.clamp(0.0, len);
        let idx = self
            .breakpoints
            .partition_point(|p| p.0 < z)
            .clamp(1, self.breakpoints.len() - 1);
        let (z0, d0) = self.breakpoints[idx - 1];
        let (z1, d1) = self.breakpoints[idx];
        if z1 <= z0 {
            return Ok(d1);
        }
        Ok(d0 + (d1 - d0) * (z - z0) / (z1 - z0))
    }
}
