//! Digital back-propagation adapted to dispersion-managed links.
//!
//! A plan splits the link (taken backwards from the receiver) into `N_d` steps of
//! length `delta_d`. There are `N_d + 1` linear steps: half steps at both ends and
//! full steps in between, each using the average dispersion of the map over the
//! stretch it covers. The `N_d` nonlinear steps sit at `(k - 1/2) delta_d` and
//! apply the Manakov phase with the SMF effective length of the step's region.

mod fir;
mod genie;

pub use fir::{cd_memory_s, design_cdc_fir, min_cdc_taps, tabulated_half_length, FirDesign};
pub use genie::genie_dbp;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consts::MANAKOV;
use crate::signal::{angular_frequencies, beta2_from_dispersion, fft_in_place, ifft_in_place, DualPolBlock, LinkSpec};
use crate::{Error, Result, C64};

/// Positive rational number of steps (or layers) per span, e.g. `1/7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StepsPerSpan {
    num: u32,
    den: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl StepsPerSpan {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::invalid("steps per span must be a positive fraction"));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Total step count over `n_spans`; rejects non-integer results.
    pub fn total_steps(&self, n_spans: usize) -> Result<usize> {
        let t = n_spans as u64 * self.num as u64;
        if t % self.den as u64 != 0 {
            return Err(Error::invalid(format!(
                "{self} steps per span over {n_spans} spans is not a whole number of steps"
            )));
        }
        Ok((t / self.den as u64) as usize)
    }

    /// The five schedules studied: 1, 1/2, 1/4, 1/7, 1/14.
    pub fn studied() -> [StepsPerSpan; 5] {
        [(1, 1), (1, 2), (1, 4), (1, 7), (1, 14)].map(|(n, d)| StepsPerSpan { num: n, den: d })
    }
}

impl fmt::Display for StepsPerSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for StepsPerSpan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse steps per span from {s:?}"));
        let s = s.trim();
        match s.split_once('/') {
            Some((a, b)) => Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => Self::new(s.parse().map_err(|_| bad())?, 1),
        }
    }
}

impl TryFrom<String> for StepsPerSpan {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepsPerSpan> for String {
    fn from(s: StepsPerSpan) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Linear steps as spectral multiplications.
    Fd,
    /// Linear steps as circular convolutions with `2F+1` tap FIRs.
    Td,
}

/// How the nonlinear step length is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectiveLength {
    /// SMF effective lengths of the step's region, referenced to the launch power.
    SmfInStep,
    /// `(1 - exp(-alpha delta_d)) / alpha` with the SMF attenuation.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStep {
    /// Receiver-relative start and end, km.
    pub start_km: f64,
    pub end_km: f64,
    /// Average dispersion over the step, ps/nm/km.
    pub d_bar: f64,
    pub fir: Option<FirDesign>,
}

impl LinearStep {
    pub fn length_km(&self) -> f64 {
        self.end_km - self.start_km
    }

    /// Accumulated dispersion the step removes, ps/nm.
    pub fn dispersion_ps_nm(&self) -> f64 {
        self.d_bar * self.length_km()
    }

    /// Spectral response `exp(-j beta2_bar len w^2 / 2)`.
    pub fn response(&self, w: &[f64]) -> Vec<C64> {
        let b2l = beta2_from_dispersion(self.d_bar) * self.length_km() * 1e3;
        w.iter().map(|wk| C64::from_polar(1.0, -b2l * wk * wk / 2.0)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearStep {
    /// Receiver-relative position, km.
    pub position_km: f64,
    pub delta_eff_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbpPlan {
    pub n_spans: usize,
    pub steps_per_span: StepsPerSpan,
    pub n_steps: usize,
    pub step_km: f64,
    pub epsilon: f64,
    pub gamma_per_w_km: f64,
    pub effective_length: EffectiveLength,
    pub domain: Domain,
    /// `F`; TD plans only.
    pub fir_half_length: Option<usize>,
    /// Rate the FIRs were designed for; TD plans only.
    pub sample_rate: Option<f64>,
    pub total_dispersion_ps_nm: f64,
    pub linear: Vec<LinearStep>,
    pub nonlinear: Vec<NonlinearStep>,
}

/// Frequency-domain plan for `link` at `stps` steps per span.
pub fn plan_steps(link: &LinkSpec, stps: StepsPerSpan, epsilon: f64, rule: EffectiveLength) -> Result<DbpPlan> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::OutOfRange { name: "epsilon", value: epsilon, range: "[0, 1]" });
    }
    let n_steps = stps.total_steps(link.n_spans())?;
    if n_steps == 0 {
        return Err(Error::invalid("a DBP plan needs at least one step"));
    }
    let map = link.dispersion_map();
    let total_len = map.length_km();
    let step = total_len / n_steps as f64;
    let d_at = |r_km: f64| -> Result<f64> { map.accumulated_dispersion((total_len - r_km).clamp(0.0, total_len)) };
    let mut bounds = vec![0.0];
    for k in 1..=n_steps {
        bounds.push((k as f64 - 0.5) * step);
    }
    bounds.push(total_len);
    let mut linear = Vec::with_capacity(n_steps + 1);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d_bar = if b > a { (d_at(a)? - d_at(b)?) / (b - a) } else { 0.0 };
        linear.push(LinearStep { start_km: a, end_km: b, d_bar, fir: None });
    }
    let smf = &link.spans[0].smf;
    let alpha = smf.alpha_db_per_km * std::f64::consts::LN_10 / 10.0;
    let nonlinear = (1..=n_steps)
        .map(|k| {
            let (r0, r1) = ((k - 1) as f64 * step, k as f64 * step);
            let delta_eff_km = match rule {
                EffectiveLength::SmfInStep => {
                    link.smf_effective_length_km((total_len - r1).max(0.0), total_len - r0)
                }
                EffectiveLength::Literal if alpha > 0.0 => (1.0 - (-alpha * step).exp()) / alpha,
                EffectiveLength::Literal => step,
            };
            NonlinearStep { position_km: (k as f64 - 0.5) * step, delta_eff_km }
        })
        .collect();
    Ok(DbpPlan {
        n_spans: link.n_spans(),
        steps_per_span: stps,
        n_steps,
        step_km: step,
        epsilon,
        gamma_per_w_km: link.smf_gamma_per_w_m() * 1e3,
        effective_length: rule,
        domain: Domain::Fd,
        fir_half_length: None,
        sample_rate: None,
        total_dispersion_ps_nm: map.total(),
        linear,
        nonlinear,
    })
}

impl DbpPlan {
    /// Same plan with every linear step replaced by a `2F+1` tap FIR designed at
    /// `sample_rate` over `bandwidth_hz`.
    pub fn to_time_domain(&self, half_length: usize, sample_rate: f64, bandwidth_hz: f64, baud_rate: f64) -> Result<Self> {
        let mut p = self.clone();
        for s in &mut p.linear {
            s.fir = Some(design_cdc_fir(s.dispersion_ps_nm(), half_length, sample_rate, bandwidth_hz, baud_rate)?);
        }
        p.domain = Domain::Td;
        p.fir_half_length = Some(half_length);
        p.sample_rate = Some(sample_rate);
        Ok(p)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::OutOfRange { name: "epsilon", value: epsilon, range: "[0, 1]" });
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    /// Sum of the per-step dispersions, ps/nm; equals the map total.
    pub fn aggregate_dispersion(&self) -> f64 {
        self.linear.iter().map(LinearStep::dispersion_ps_nm).sum()
    }

    /// Kerr coefficient (1/W) of nonlinear step `k`: `(8/9) gamma eps delta_eff`.
    pub fn kerr_coefficient(&self, k: usize) -> f64 {
        MANAKOV * self.gamma_per_w_km * self.epsilon * self.nonlinear[k].delta_eff_km
    }

    fn check_block(&self, block: &DualPolBlock) -> Result<()> {
        block.require_power_of_two()?;
        if let Some(fs) = self.sample_rate {
            if (fs - block.sample_rate()).abs() > 1e-6 * fs {
                return Err(Error::invalid(format!(
                    "plan designed for {fs} Sa/s, block is at {} Sa/s",
                    block.sample_rate()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(toml::from_str(&text)?)
    }
}

/// Manakov phase rotation `exp(-j c (|x|^2 + |y|^2))`.
pub(crate) fn manakov_rotate(x: &mut [C64], y: &mut [C64], c: f64) {
    if c == 0.0 {
        return;
    }
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let r = C64::from_polar(1.0, -c * (a.norm_sqr() + b.norm_sqr()));
        *a *= r;
        *b *= r;
    }
}

/// Circular convolution with a centered odd-length FIR.
pub(crate) fn circular_fir(u: &[C64], taps: &[C64]) -> Vec<C64> {
    let n = u.len() as isize;
    let f = (taps.len() / 2) as isize;
    (0..n)
        .map(|m| {
            taps.iter()
                .enumerate()
                .map(|(i, h)| h * u[(m - (i as isize - f)).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

fn linear_fd(block: &mut DualPolBlock, step: &LinearStep) -> Result<()> {
    let w = angular_frequencies(block.len(), block.sample_rate());
    let h = step.response(&w);
    for p in block.pols_mut() {
        fft_in_place(p)?;
        p.iter_mut().zip(&h).for_each(|(v, hk)| *v *= hk);
        ifft_in_place(p)?;
    }
    Ok(())
}

fn linear_td(block: &mut DualPolBlock, step: &LinearStep) -> Result<()> {
    let fir = step
        .fir
        .as_ref()
        .ok_or_else(|| Error::invalid("time-domain step without FIR taps"))?;
    for p in block.pols_mut() {
        let out = circular_fir(p, &fir.taps);
        p.copy_from_slice(&out);
    }
    Ok(())
}

/// Linear step `k` in the frequency domain followed by nonlinear step `k`.
pub fn fd_dbp_step(block: &mut DualPolBlock, plan: &DbpPlan, k: usize) -> Result<()> {
    plan.check_block(block)?;
    linear_fd(block, &plan.linear[k])?;
    if k < plan.n_steps {
        let [x, y] = block.pols_mut();
        manakov_rotate(x, y, plan.kerr_coefficient(k));
    }
    Ok(())
}

/// Linear step `k` as an FIR followed by nonlinear step `k`.
pub fn td_dbp_step(block: &mut DualPolBlock, plan: &DbpPlan, k: usize) -> Result<()> {
    plan.check_block(block)?;
    linear_td(block, &plan.linear[k])?;
    if k < plan.n_steps {
        let [x, y] = block.pols_mut();
        manakov_rotate(x, y, plan.kerr_coefficient(k));
    }
    Ok(())
}

/// Back-propagate a block: `N_d + 1` linear steps with `N_d` nonlinear steps
/// interleaved.
pub fn run_dbp(block: &DualPolBlock, plan: &DbpPlan) -> Result<DualPolBlock> {
    plan.check_block(block)?;
    let mut out = block.clone();
    match plan.domain {
        Domain::Td => {
            for k in 0..=plan.n_steps {
                td_dbp_step(&mut out, plan, k)?;
            }
        }
        Domain::Fd => {
            let w = angular_frequencies(block.len(), block.sample_rate());
            let [x, y] = out.pols_mut();
            fft_in_place(x)?;
            fft_in_place(y)?;
            for k in 0..=plan.n_steps {
                let h = plan.linear[k].response(&w);
                for p in [&mut *x, &mut *y] {
                    p.iter_mut().zip(&h).for_each(|(v, hk)| *v *= hk);
                }
                let c = if k < plan.n_steps { plan.kerr_coefficient(k) } else { 0.0 };
                if c != 0.0 {
                    ifft_in_place(x)?;
                    ifft_in_place(y)?;
                    manakov_rotate(x, y, c);
                    fft_in_place(x)?;
                    fft_in_place(y)?;
                }
            }
            ifft_in_place(x)?;
            ifft_in_place(y)?;
        }
    }
    Ok(out)
}

/// Evenly spaced epsilon values in [0, 1].
pub fn epsilon_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Grid search of the epsilon maximising `score` (typically a Q-factor); grid
/// points are evaluated in parallel, ties resolve to the smaller epsilon.
pub fn optimize_epsilon<F>(grid: &[f64], score: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return Err(Error::invalid("empty epsilon grid"));
    }
    let scores = crate::exec::map(&sorted, |&e| score(e));
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for (e, s) in sorted.iter().zip(scores) {
        let s = s?;
        if s > best.1 {
            best = (*e, s);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::rx::{cdc_for_dispersion, snr_eff_db};
    use crate::signal::{DcfDesign, FiberSegmentSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn paper_link(n: usize) -> LinkSpec {
        LinkSpec::dispersion_managed(n, FiberSegmentSpec::smf(72.0, 0.2, 17.0, 1.4, 0.05), &DcfDesign::default(), 5.0)
            .unwrap()
    }

    fn random_block(n: usize, seed: u64, amp: f64) -> DualPolBlock {
        let mut r = rng::stream(seed, 3);
        let mut v = || -> Vec<C64> {
            (0..n).map(|_| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5) * amp).collect()
        };
        let x = v();
        let y = v();
        DualPolBlock::new(x, y, 64e9).unwrap()
    }

    #[test]
    fn parse_and_display_fractions() {
        assert_eq!("1/7".parse::<StepsPerSpan>().unwrap().to_string(), "1/7");
        assert_eq!("2/4".parse::<StepsPerSpan>().unwrap().to_string(), "1/2");
        assert_eq!("3".parse::<StepsPerSpan>().unwrap().value(), 3.0);
        assert!("0".parse::<StepsPerSpan>().is_err());
        assert!("1/x".parse::<StepsPerSpan>().is_err());
        assert!("1/4".parse::<StepsPerSpan>().unwrap().total_steps(7).is_err());
        assert_eq!("1/7".parse::<StepsPerSpan>().unwrap().total_steps(28).unwrap(), 4);
    }

    #[test]
    fn single_full_span_step_average() {
        // one step over one span: boundaries are two half steps of 42.5 km
        let link = paper_link(1);
        let p = plan_steps(&link, StepsPerSpan::new(1, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        assert_eq!(p.linear.len(), 2);
        assert!((p.aggregate_dispersion() - 183.6).abs() < 1e-9);
        assert!((p.aggregate_dispersion() / 85.0 - 2.16).abs() < 1e-3);
        // half step at the receiver end covers 13 km DCF and 29.5 km SMF
        let dcf_d = -0.85 * 17.0 * 72.0 / 13.0;
        let expect = (13.0 * dcf_d + 29.5 * 17.0) / 42.5;
        assert!((p.linear[0].d_bar - expect).abs() < 1e-9);
    }

    #[test]
    fn full_compensation_and_uncompensated_maps() {
        let full = LinkSpec::dispersion_managed(
            2,
            FiberSegmentSpec::smf(72.0, 0.2, 17.0, 1.4, 0.05),
            &DcfDesign { compensation: 1.0, ..DcfDesign::default() },
            5.0,
        )
        .unwrap();
        let p = plan_steps(&full, StepsPerSpan::new(1, 2).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        // one step spanning whole spans, offset by half a step: the total vanishes
        assert!(p.aggregate_dispersion().abs() < 1e-9);
        let ndm = LinkSpec::uncompensated(3, FiberSegmentSpec::smf(80.0, 0.2, 17.0, 1.3, 0.0), 5.0).unwrap();
        let p = plan_steps(&ndm, StepsPerSpan::new(4, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        for s in &p.linear {
            assert!((s.d_bar - 17.0).abs() < 1e-9);
        }
    }

    #[test]
    fn boundaries_cover_the_link() {
        for stps in StepsPerSpan::studied() {
            let link = paper_link(28);
            let p = plan_steps(&link, stps, 1.0, EffectiveLength::SmfInStep).unwrap();
            assert_eq!(p.linear.len(), p.n_steps + 1);
            assert_eq!(p.linear[0].start_km, 0.0);
            assert!((p.linear.last().unwrap().end_km - 2380.0).abs() < 1e-9);
            assert!((p.linear[0].length_km() - p.step_km / 2.0).abs() < 1e-9);
            for w in p.linear.windows(2) {
                assert_eq!(w[0].end_km, w[1].start_km);
            }
            for (k, nl) in p.nonlinear.iter().enumerate() {
                assert!((nl.position_km - (k as f64 + 0.5) * p.step_km).abs() < 1e-9);
            }
            assert!((p.aggregate_dispersion() - 5140.8).abs() < 1e-6);
            // effective lengths add up to that of every SMF
            let total: f64 = p.nonlinear.iter().map(|n| n.delta_eff_km).sum();
            let one = (1.0 - (-0.2f64 * std::f64::consts::LN_10 / 10.0 * 72.0).exp()) / (0.2 * std::f64::consts::LN_10 / 10.0);
            assert!((total - 28.0 * one).abs() < 1e-6);
        }
    }

    #[test]
    fn epsilon_zero_is_linear_equalization() {
        let link = paper_link(7);
        let b = random_block(1024, 1, 0.05);
        let le = cdc_for_dispersion(&b, link.dispersion_map().total()).unwrap();
        for stps in ["1", "1/7"] {
            let p = plan_steps(&link, stps.parse().unwrap(), 0.0, EffectiveLength::SmfInStep).unwrap();
            let out = run_dbp(&b, &p).unwrap();
            let num: f64 = out.x().iter().zip(le.x()).map(|(a, c)| (a - c).norm_sqr()).sum();
            assert!((num / le.energy()).sqrt() < 1e-10);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let link = paper_link(2);
        let p = plan_steps(&link, StepsPerSpan::new(1, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        let z = DualPolBlock::zeros(256, 64e9).unwrap();
        assert_eq!(run_dbp(&z, &p).unwrap().energy(), 0.0);
        let td = p.to_time_domain(16, 64e9, 33.92e9, 32e9).unwrap();
        assert_eq!(run_dbp(&z, &td).unwrap().energy(), 0.0);
    }

    #[test]
    fn fused_matches_stepwise() {
        let link = paper_link(2);
        let p = plan_steps(&link, StepsPerSpan::new(2, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        let b = random_block(512, 2, 1.0);
        let fused = run_dbp(&b, &p).unwrap();
        let mut s = b.clone();
        for k in 0..=p.n_steps {
            fd_dbp_step(&mut s, &p, k).unwrap();
        }
        for (a, c) in fused.x().iter().zip(s.x()) {
            assert!((a - c).norm() < 1e-12);
        }
    }

    #[test]
    fn td_matches_fd_with_paper_f() {
        let link = paper_link(7);
        let p = plan_steps(&link, StepsPerSpan::new(1, 1).unwrap(), 1.0, EffectiveLength::SmfInStep).unwrap();
        let td = p.to_time_domain(16, 64e9, 33.92e9, 32e9).unwrap();
        // band-limited input: low-pass a random block
        let mut b = random_block(2048, 3, 0.05);
        for q in b.pols_mut() {
            fft_in_place(q).unwrap();
            let n = q.len();
            for (i, v) in q.iter_mut().enumerate() {
                let f = if i < n / 2 { i } else { n - i } as f64 / n as f64 * 64e9;
                if f > 16.96e9 {
                    *v = C64::default();
                }
            }
            ifft_in_place(q).unwrap();
        }
        let a = run_dbp(&b, &p).unwrap();
        let c = run_dbp(&b, &td).unwrap();
        let snr = snr_eff_db(c.x(), c.y(), a.x(), a.y());
        assert!(snr > 30.0, "{snr}");
        assert!(run_dbp(&DualPolBlock::zeros(2048, 32e9).unwrap(), &td).is_err());
    }

    #[test]
    fn unit_fir_leaves_linear_part_unchanged() {
        let b = random_block(64, 4, 1.0);
        let mut taps = vec![C64::default(); 9];
        taps[4] = C64::new(1.0, 0.0);
        assert_eq!(circular_fir(b.x(), &taps), b.x().to_vec());
    }

    #[test]
    fn plan_round_trips_through_text() {
        let link = paper_link(7);
        let p = plan_steps(&link, StepsPerSpan::new(1, 1).unwrap(), 0.85, EffectiveLength::SmfInStep)
            .unwrap()
            .to_time_domain(16, 64e9, 33.92e9, 32e9)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.txt");
        p.save(&path).unwrap();
        assert_eq!(DbpPlan::load(&path).unwrap(), p);
    }

    #[test]
    fn epsilon_search_prefers_smaller_on_ties() {
        let grid = epsilon_grid(0.1);
        assert_eq!(grid.len(), 11);
        let (e, s) = optimize_epsilon(&grid, |e| Ok(-((e - 0.65) * 10.0).abs().floor())).unwrap();
        assert_eq!(s, 0.0);
        assert!((e - 0.6).abs() < 1e-12);
        assert!(optimize_epsilon(&[], |_| Ok(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_dispersion_matches_map(n in 1usize..12, num in 1u32..4, den in 1u32..8, comp in 0.5f64..1.0) {
            let stps = StepsPerSpan::new(num, den).unwrap();
            prop_assume!(stps.total_steps(n).is_ok());
            let link = LinkSpec::dispersion_managed(
                n,
                FiberSegmentSpec::smf(72.0, 0.2, 17.0, 1.4, 0.05),
                &DcfDesign { compensation: comp, ..DcfDesign::default() },
                5.0,
            ).unwrap();
            let p = plan_steps(&link, stps, 1.0, EffectiveLength::SmfInStep).unwrap();
            let total = link.dispersion_map().total();
            prop_assert!((p.aggregate_dispersion() - total).abs() < 1e-9 * (1.0 + total.abs()));
        }

        #[test]
        fn manakov_rotation_preserves_power(c in -5.0f64..5.0, seed in 0u64..100) {
            let b = random_block(64, seed, 1.0);
            let (mut x, mut y) = (b.x().to_vec(), b.y().to_vec());
            manakov_rotate(&mut x, &mut y, c);
            for i in 0..64 {
                prop_assert!((x[i].norm() - b.x()[i].norm()).abs() < 1e-14);
                prop_assert!((y[i].norm() - b.y()[i].norm()).abs() < 1e-14);
            }
        }
    }
}
