//! The LDBP network: complex FIR layers (stored as real and imaginary tap vectors)
//! interleaved with Manakov phase activations, and its reverse-mode gradient.

use serde::{Deserialize, Serialize};

use crate::consts::MANAKOV;
use crate::dbp::{DbpPlan, Domain};
use crate::signal::{angular_frequencies, ifft_in_place, DualPolBlock};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdbpLayer {
    /// Omega_R.
    pub real: Vec<f64>,
    /// Omega_I.
    pub imag: Vec<f64>,
    /// Initialised from a half step.
    pub half_step: bool,
}

impl LdbpLayer {
    pub fn from_taps(taps: &[C64], half_step: bool) -> Self {
        Self {
            real: taps.iter().map(|t| t.re).collect(),
            imag: taps.iter().map(|t| t.im).collect(),
            half_step,
        }
    }

    pub fn taps(&self) -> Vec<C64> {
        self.real.iter().zip(&self.imag).map(|(r, i)| C64::new(*r, *i)).collect()
    }

    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }
}

/// `N_d + 1` linear layers and `N_d` activations. Inputs are expected at unit
/// power per polarization; `power_ref_w` converts back to the physical power the
/// Kerr phase depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdbpModel {
    pub layers: Vec<LdbpLayer>,
    pub gamma_per_w_km: f64,
    pub epsilon: f64,
    /// Effective length of each activation, km.
    pub delta_eff_km: Vec<f64>,
    /// Physical power per polarization of a unit-power input sample, W.
    pub power_ref_w: f64,
    /// Samples dropped per side of the output.
    pub trim: usize,
}

/// Gradients in the layout of the model's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// d loss / d h for every layer, as `dL/dRe + j dL/dIm`.
    pub layers: Vec<Vec<C64>>,
    pub epsilon: f64,
}

impl Gradients {
    pub fn zeros_like(model: &LdbpModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| vec![C64::default(); l.len()]).collect(),
            epsilon: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.iter_mut().zip(b).for_each(|(p, q)| *p += q);
        }
        self.epsilon += other.epsilon;
    }
}

/// One dual-polarization window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

/// Circular "same" convolution: `y[n] = sum_i h_i u[n - (i - F)]`.
fn conv(u: &[C64], h: &[C64]) -> Vec<C64> {
    let n = u.len();
    let f = h.len() / 2;
    let mut out = vec![C64::default(); n];
    for (i, hi) in h.iter().enumerate() {
        if *hi == C64::default() {
            continue;
        }
        // u index = m - i + f (mod n)
        let shift = (f + n * (1 + h.len() / n.max(1)) - i) % n;
        for (m, o) in out.iter_mut().enumerate() {
            let k = m + shift;
            *o += hi * u[if k >= n { k - n } else { k }];
        }
    }
    out
}

/// Adjoint of [`conv`] with respect to the input: `g_u[m] = sum_i conj(h_i) g[m + (i - F)]`.
fn conv_adjoint_input(g: &[C64], h: &[C64]) -> Vec<C64> {
    let n = g.len();
    let f = h.len() / 2;
    let mut out = vec![C64::default(); n];
    for (i, hi) in h.iter().enumerate() {
        let hc = hi.conj();
        let shift = (i + n * (1 + h.len() / n.max(1)) - f) % n;
        for (m, o) in out.iter_mut().enumerate() {
            let k = m + shift;
            *o += hc * g[if k >= n { k - n } else { k }];
        }
    }
    out
}

/// Tap gradient of [`conv`]: `g_h[i] = sum_n g[n] conj(u[n - (i - F)])`.
fn conv_tap_gradient(g: &[C64], u: &[C64], n_taps: usize) -> Vec<C64> {
    let n = u.len();
    let f = n_taps / 2;
    (0..n_taps)
        .map(|i| {
            let shift = (f + n * (1 + n_taps / n.max(1)) - i) % n;
            g.iter()
                .enumerate()
                .map(|(m, gm)| {
                    let k = m + shift;
                    gm * u[if k >= n { k - n } else { k }].conj()
                })
                .sum()
        })
        .collect()
}

/// Intermediate values kept by the forward pass.
struct Trace {
    /// Input to every linear layer.
    inputs: Vec<Window>,
    /// Phase applied by every activation.
    phases: Vec<Vec<f64>>,
    /// Per-sample `|x|^2 + |y|^2` seen by every activation.
    powers: Vec<Vec<f64>>,
    /// Untrimmed output.
    output: Window,
}

impl LdbpModel {
    pub fn n_activations(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    /// Output length for a window of `n` samples.
    pub fn output_len(&self, n: usize) -> usize {
        n.saturating_sub(2 * self.trim)
    }

    /// Kerr coefficient of activation `k` in units of the normalized input.
    pub fn kerr(&self, k: usize) -> f64 {
        MANAKOV * self.gamma_per_w_km * self.epsilon * self.delta_eff_km[k] * self.power_ref_w
    }

    /// Model mirroring a DBP plan. A frequency-domain plan is converted by sampling
    /// each step's response on a 4096-point grid at `sample_rate`, inverse
    /// transforming and keeping the central `2F+1` taps.
    pub fn from_plan(plan: &DbpPlan, power_ref_w: f64, trim: usize, fd_fallback: Option<(usize, f64)>) -> Result<Self> {
        let layers = plan
            .linear
            .iter()
            .enumerate()
            .map(|(k, step)| {
                let half = k == 0 || k == plan.n_steps;
                let taps = match (&step.fir, plan.domain) {
                    (Some(fir), Domain::Td) => fir.taps.clone(),
                    _ => {
                        let (f, fs) = fd_fallback.ok_or_else(|| {
                            Error::invalid("frequency-domain plan needs a tap count and sample rate to build LDBP")
                        })?;
                        windowed_impulse_response(step, f, fs)?
                    }
                };
                Ok(LdbpLayer::from_taps(&taps, half))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            gamma_per_w_km: plan.gamma_per_w_km,
            epsilon: plan.epsilon,
            delta_eff_km: plan.nonlinear.iter().map(|n| n.delta_eff_km).collect(),
            power_ref_w,
            trim,
        })
    }

    fn check_window(&self, w: &Window) -> Result<()> {
        if w.x.len() != w.y.len() {
            return Err(Error::ShapeMismatch("window polarizations differ in length".into()));
        }
        if w.x.len() < 2 * self.trim + 1 {
            return Err(Error::invalid(format!(
                "window of {} samples is shorter than 2M+1 = {}",
                w.x.len(),
                2 * self.trim + 1
            )));
        }
        Ok(())
    }

    fn trace(&self, input: &Window) -> Result<Trace> {
        self.check_window(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut phases = Vec::with_capacity(self.n_activations());
        let mut powers = Vec::with_capacity(self.n_activations());
        let mut cur = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let h = layer.taps();
            let mut z = Window { x: conv(&cur.x, &h), y: conv(&cur.y, &h) };
            inputs.push(cur);
            if k < self.n_activations() {
                let c = self.kerr(k);
                let s: Vec<f64> = z.x.iter().zip(&z.y).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
                let ph: Vec<f64> = s.iter().map(|v| -c * v).collect();
                for (i, p) in ph.iter().enumerate() {
                    let r = C64::from_polar(1.0, *p);
                    z.x[i] *= r;
                    z.y[i] *= r;
                }
                phases.push(ph);
                powers.push(s);
            }
            cur = z;
        }
        Ok(Trace { inputs, phases, powers, output: cur })
    }

    /// Trimmed output of one window.
    pub fn forward(&self, input: &Window) -> Result<Window> {
        let t = self.trace(input)?;
        let n = input.x.len();
        let r = self.trim..n - self.trim;
        Ok(Window { x: t.output.x[r.clone()].to_vec(), y: t.output.y[r].to_vec() })
    }

    /// Untrimmed output (circular over the window).
    pub fn forward_full(&self, input: &Window) -> Result<Window> {
        Ok(self.trace(input)?.output)
    }

    /// Sum of squared errors on the trimmed output divided by `count`, and its
    /// gradient. Summing these over a batch with a shared `count` gives the batch MSE.
    pub fn loss_and_gradients(&self, input: &Window, target: &Window, count: f64) -> Result<(f64, Gradients)> {
        let t = self.trace(input)?;
        let n = input.x.len();
        let out_len = self.output_len(n);
        if target.x.len() != out_len || target.y.len() != out_len {
            return Err(Error::ShapeMismatch(format!(
                "target has {} samples, trimmed output has {out_len}",
                target.x.len()
            )));
        }
        let mut loss = 0.0;
        let mut gx = vec![C64::default(); n];
        let mut gy = vec![C64::default(); n];
        for i in 0..out_len {
            let (ex, ey) = (t.output.x[i + self.trim] - target.x[i], t.output.y[i + self.trim] - target.y[i]);
            loss += ex.norm_sqr() + ey.norm_sqr();
            gx[i + self.trim] = ex * (2.0 / count);
            gy[i + self.trim] = ey * (2.0 / count);
        }
        loss /= count;
        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            if k < self.n_activations() {
                // activation k: x' = x e^{j phi}, phi = -c (|x|^2 + |y|^2)
                let c = self.kerr(k);
                let ph = &t.phases[k];
                let mut d_eps = 0.0;
                let unit = self.kerr_per_epsilon(k);
                for i in 0..n {
                    let r = C64::from_polar(1.0, ph[i]);
                    // pre-activation values
                    let xo = self.pre_activation(&t, k, i);
                    let (x_post, y_post) = (xo.0 * r, xo.1 * r);
                    let dphi = (gx[i].conj() * C64::i() * x_post).re + (gy[i].conj() * C64::i() * y_post).re;
                    d_eps += -unit * t.powers[k][i] * dphi;
                    gx[i] = r.conj() * gx[i] - xo.0 * (2.0 * c * dphi);
                    gy[i] = r.conj() * gy[i] - xo.1 * (2.0 * c * dphi);
                }
                grads.epsilon += d_eps;
            }
            let h = self.layers[k].taps();
            let u = &t.inputs[k];
            let gh_x = conv_tap_gradient(&gx, &u.x, h.len());
            let gh_y = conv_tap_gradient(&gy, &u.y, h.len());
            for (g, (a, b)) in grads.layers[k].iter_mut().zip(gh_x.iter().zip(&gh_y)) {
                *g = a + b;
            }
            if k > 0 {
                gx = conv_adjoint_input(&gx, &h);
                gy = conv_adjoint_input(&gy, &h);
            }
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }
        Ok((loss, grads))
    }

    fn kerr_per_epsilon(&self, k: usize) -> f64 {
        MANAKOV * self.gamma_per_w_km * self.delta_eff_km[k] * self.power_ref_w
    }

    /// Pre-activation sample `i` of activation `k` (the next layer's input with the
    /// phase removed).
    fn pre_activation(&self, t: &Trace, k: usize, i: usize) -> (C64, C64) {
        let r = C64::from_polar(1.0, -t.phases[k][i]);
        let next = &t.inputs[k + 1];
        (next.x[i] * r, next.y[i] * r)
    }

    /// Flattened trainable parameters: per layer the real taps then the imaginary
    /// taps, followed by epsilon when `with_epsilon`.
    pub fn parameters(&self, with_epsilon: bool) -> Vec<f64> {
        let mut p: Vec<f64> = self.layers.iter().flat_map(|l| l.real.iter().chain(&l.imag).copied()).collect();
        if with_epsilon {
            p.push(self.epsilon);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64], with_epsilon: bool) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for v in l.real.iter_mut().chain(l.imag.iter_mut()) {
                *v = it.next().expect("parameter vector too short");
            }
        }
        if with_epsilon {
            self.epsilon = it.next().expect("parameter vector too short");
        }
    }

    /// Flattened gradient in the order of [`LdbpModel::parameters`].
    pub fn flatten_gradients(g: &Gradients, with_epsilon: bool) -> Vec<f64> {
        let mut out: Vec<f64> = g
            .layers
            .iter()
            .flat_map(|l| l.iter().map(|c| c.re).chain(l.iter().map(|c| c.im)))
            .collect();
        if with_epsilon {
            out.push(g.epsilon);
        }
        out
    }

    /// Equalize a whole periodic block (unit power per polarization) by circular
    /// tiling: window `j` starts at `j * stride - trim` and contributes its
    /// `stride = N - 2M` interior samples.
    pub fn apply_block(&self, block: &DualPolBlock, window: usize) -> Result<DualPolBlock> {
        let stride = self.output_len(window);
        if stride == 0 {
            return Err(Error::invalid("window leaves no output after trimming"));
        }
        let n = block.len();
        let n_win = n.div_ceil(stride);
        let starts: Vec<usize> = (0..n_win).collect();
        let outs = crate::exec::map(&starts, |&j| {
            let start = (j * stride + n * window - self.trim) % n;
            let take = |p: &[C64]| -> Vec<C64> { (0..window).map(|i| p[(start + i) % n]).collect() };
            self.forward(&Window { x: take(block.x()), y: take(block.y()) })
        });
        let mut x = vec![C64::default(); n];
        let mut y = vec![C64::default(); n];
        for (j, o) in outs.into_iter().enumerate() {
            let o = o?;
            for i in 0..stride {
                let idx = j * stride + i;
                if idx < n {
                    x[idx] = o.x[i];
                    y[idx] = o.y[i];
                }
            }
        }
        DualPolBlock::new(x, y, block.sample_rate())
    }
}

/// Impulse response of a frequency-domain linear step, central `2F+1` taps.
fn windowed_impulse_response(step: &crate::dbp::LinearStep, f: usize, sample_rate: f64) -> Result<Vec<C64>> {
    let n = 4096.max((2 * f + 1).next_power_of_two());
    let w = angular_frequencies(n, sample_rate);
    let mut h = step.response(&w);
    ifft_in_place(&mut h)?;
    let taps: Vec<C64> = (0..=2 * f).map(|i| h[(i + n - f) % n]).collect();
    Ok(taps)
}
