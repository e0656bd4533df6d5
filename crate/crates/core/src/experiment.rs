//! Setups A-D, launch-power sweeps over a list of equalizers, result files and the
//! summary report.
//!
//! A run writes into its output directory:
//!
//! * `results.csv`: one [`MetricsReport`] per (launch power, equalizer);
//! * `manifest.json`: config hash, seeds, versions and run status;
//! * `plans/*.txt`: every DBP plan used (TOML);
//! * `models/*.ckpt`: every trained LDBP checkpoint (JSON).
//!
//! Each launch power is an independent job: it simulates a test block (with PMD
//! when enabled) and a PMD-free training block with different symbols and noise,
//! then runs every equalizer on the received center channel.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{apply_laser_phase_noise, propagate_link, ChannelOptions, LaserSpec, PmdRealization};
use crate::complexity::{rmps_fd, rmps_td, ComplexityInput, LDBP_BLOCK, LDBP_N_CDC};
use crate::dbp::{
    epsilon_grid, genie_dbp, optimize_epsilon, plan_steps, run_dbp, tabulated_half_length, DbpPlan, EffectiveLength,
    StepsPerSpan,
};
use crate::ldbp::{self, Checkpoint, LdbpModel, TrainerConfig, TrainingHistory};
use crate::rng::derive_seed;
use crate::rx::{
    cdc_for_dispersion, channel_select, evaluate, wilson_interval, DspChain, Evaluation, FrontEnd, MetricsReport,
    ResultsWriter,
};
use crate::signal::{DcfDesign, DualPolBlock, FiberSegmentSpec, LinkSpec};
use crate::tx::{transmit, Constellation, SymbolFrame, TxConfig};
use crate::{Error, Result};

// seed tags
const TAG_TEST_TX: u64 = 0x7465_7374;
const TAG_TRAIN_TX: u64 = 0x7472_6e00;
const TAG_PMD: u64 = 0x504d_4400;
const TAG_TEST_NOISE: u64 = 0x4e54_0000;
const TAG_TRAIN_NOISE: u64 = 0x4e52_0000;
const TAG_LASER: u64 = 0x4c41_5300;
const TAG_TRAINER: u64 = 0x5452_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 7 spans, 8 samples/symbol, 2^13 symbols, 1 or 3 channels.
    Desk,
    /// 28 spans, 16 samples/symbol, 2^15 symbols, 1 or 5 channels.
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::invalid(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    A,
    B,
    C,
    D,
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Setup::A),
            "B" => Ok(Setup::B),
            "C" => Ok(Setup::C),
            "D" => Ok(Setup::D),
            _ => Err(Error::invalid(format!("unknown setup {s:?} (expected A, B, C or D)"))),
        }
    }
}

impl Setup {
    pub fn label(&self) -> &'static str {
        match self {
            Setup::A => "A",
            Setup::B => "B",
            Setup::C => "C",
            Setup::D => "D",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub n_spans: usize,
    pub smf_length_km: f64,
    pub alpha_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub pmd_ps_per_sqrt_km: f64,
    /// SSFM step and PMD section length.
    pub step_km: f64,
    /// In-line DCF; `None` gives an uncompensated link.
    pub dcf: Option<DcfDesign>,
    pub noise_figure_db: f64,
}

impl LinkConfig {
    pub fn build(&self) -> Result<LinkSpec> {
        let smf = FiberSegmentSpec {
            correlation_length_km: self.step_km,
            ..FiberSegmentSpec::smf(
                self.smf_length_km,
                self.alpha_db_per_km,
                self.dispersion_ps_nm_km,
                self.gamma_per_w_km,
                self.pmd_ps_per_sqrt_km,
            )
        };
        match &self.dcf {
            Some(dcf) => LinkSpec::dispersion_managed(self.n_spans, smf, dcf, self.noise_figure_db),
            None => LinkSpec::uncompensated(self.n_spans, smf, self.noise_figure_db),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub modulation_order: usize,
    pub baud_rate: f64,
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    pub n_symbols: usize,
    pub n_channels: usize,
    pub channel_spacing_hz: f64,
    pub rrc_span_symbols: usize,
}

impl SignalConfig {
    fn tx(&self, power_dbm: f64, seed: u64) -> TxConfig {
        TxConfig {
            modulation_order: self.modulation_order,
            baud_rate: self.baud_rate,
            rolloff: self.rolloff,
            samples_per_symbol: self.samples_per_symbol,
            n_symbols: self.n_symbols,
            n_channels: self.n_channels,
            channel_spacing_hz: self.channel_spacing_hz,
            launch_power_dbm: power_dbm,
            rrc_span_symbols: self.rrc_span_symbols,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainChoice {
    Fd,
    Td,
}

/// One equalizer of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EqualizerSpec {
    /// CD compensation of the whole link.
    Le,
    Dbp { stps: StepsPerSpan, domain: DomainChoice },
    Ldbp { lps: StepsPerSpan },
    /// PMD-aware back-propagation at the forward step size.
    Genie,
}

impl EqualizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EqualizerSpec::Le => "LE",
            EqualizerSpec::Dbp { domain: DomainChoice::Fd, .. } => "DBP-FD",
            EqualizerSpec::Dbp { domain: DomainChoice::Td, .. } => "DBP-TD",
            EqualizerSpec::Ldbp { .. } => "LDBP",
            EqualizerSpec::Genie => "genie",
        }
    }

    pub fn stps(&self) -> Option<StepsPerSpan> {
        match self {
            EqualizerSpec::Dbp { stps, .. } => Some(*stps),
            EqualizerSpec::Ldbp { lps } => Some(*lps),
            _ => None,
        }
    }

    fn stps_label(&self) -> String {
        self.stps().map_or_else(|| "-".to_string(), |s| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbpConfig {
    /// Fixed epsilon per steps-per-span (keys like "1", "1/2"); missing entries
    /// are optimized on the training block.
    pub epsilon: BTreeMap<String, f64>,
    pub epsilon_grid_step: f64,
    pub effective_length: EffectiveLength,
    /// TD half-width override; the tabulated value per StpS otherwise.
    pub fir_half_length: Option<usize>,
}

impl DbpConfig {
    fn fixed_epsilon(&self, stps: StepsPerSpan) -> Result<Option<f64>> {
        for (k, v) in &self.epsilon {
            if k.parse::<StepsPerSpan>()? == stps {
                return Ok(Some(*v));
            }
        }
        Ok(None)
    }

    fn half_length(&self, stps: StepsPerSpan) -> Result<usize> {
        self.fir_half_length
            .or_else(|| tabulated_half_length(stps.value()))
            .ok_or_else(|| Error::invalid(format!("no FIR half-length for {stps} steps per span; set dbp.fir_half_length")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdbpConfig {
    pub window: usize,
    pub trim: usize,
    /// Sliding factor `L` of the training windows, symbols.
    pub stride_symbols: usize,
    pub trainer: TrainerConfig,
    /// Keep the laser phase noise in the training block.
    pub train_with_phase_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "A".."D" or any custom label.
    pub setup: String,
    pub preset: Preset,
    pub seed: u64,
    pub launch_powers_dbm: Vec<f64>,
    pub laser_linewidth_hz: f64,
    pub ase_noise: bool,
    /// Apply the link's PMD to the test block (training blocks are always PMD-free).
    pub pmd: bool,
    pub link: LinkConfig,
    pub signal: SignalConfig,
    pub equalizers: Vec<EqualizerSpec>,
    pub dbp: DbpConfig,
    pub ldbp: LdbpConfig,
    pub dsp: DspChain,
}

impl ExperimentConfig {
    /// Paper setup at the chosen scale.
    pub fn preset(setup: Setup, preset: Preset) -> Self {
        let wdm = setup != Setup::A;
        let (n_spans, sps, n_symbols, n_channels) = match preset {
            Preset::Desk => (7, 8, 1 << 13, if wdm { 3 } else { 1 }),
            Preset::Full => (28, 16, 1 << 15, if wdm { 5 } else { 1 }),
        };
        let (alpha, pmd) = if setup == Setup::D { (0.24, 0.3) } else { (0.2, 0.05) };
        let modulation_order = if setup == Setup::C { 64 } else { 16 };
        let launch_powers_dbm = match (preset, wdm) {
            (Preset::Desk, false) => vec![-4.0, -2.0, 0.0, 2.0, 4.0],
            (Preset::Desk, true) => vec![-8.0, -6.0, -4.0, -2.0, 0.0],
            (Preset::Full, false) => (-8..=4).step_by(2).map(f64::from).collect(),
            (Preset::Full, true) => (-7..=1).map(f64::from).collect(),
        };
        let schedules: Vec<StepsPerSpan> = match preset {
            Preset::Desk => vec![StepsPerSpan::new(1, 1).unwrap(), StepsPerSpan::new(1, 7).unwrap()],
            Preset::Full => StepsPerSpan::studied().to_vec(),
        };
        let mut equalizers = vec![EqualizerSpec::Le];
        for &s in &schedules {
            equalizers.push(EqualizerSpec::Dbp { stps: s, domain: DomainChoice::Fd });
            equalizers.push(EqualizerSpec::Dbp { stps: s, domain: DomainChoice::Td });
        }
        equalizers.extend(schedules.iter().map(|&lps| EqualizerSpec::Ldbp { lps }));
        equalizers.push(EqualizerSpec::Genie);
        let epsilon = match (preset, wdm) {
            (Preset::Desk, _) => BTreeMap::new(),
            (Preset::Full, false) => schedules.iter().map(|s| (s.to_string(), 1.0)).collect(),
            (Preset::Full, true) => [("1", 0.85), ("1/2", 0.75), ("1/4", 0.64)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        };
        Self {
            setup: setup.label().to_string(),
            preset,
            seed: 1,
            launch_powers_dbm,
            laser_linewidth_hz: if wdm { 50e3 } else { 0.0 },
            ase_noise: true,
            pmd: true,
            link: LinkConfig {
                n_spans,
                smf_length_km: 72.0,
                alpha_db_per_km: alpha,
                dispersion_ps_nm_km: 17.0,
                gamma_per_w_km: 1.4,
                pmd_ps_per_sqrt_km: pmd,
                step_km: 1.0,
                dcf: Some(DcfDesign::default()),
                noise_figure_db: 5.0,
            },
            signal: SignalConfig {
                modulation_order,
                baud_rate: 32e9,
                rolloff: 0.06,
                samples_per_symbol: sps,
                n_symbols,
                n_channels,
                channel_spacing_hz: 37.5e9,
                rrc_span_symbols: 64,
            },
            equalizers,
            dbp: DbpConfig {
                epsilon,
                epsilon_grid_step: match preset {
                    Preset::Desk => 0.1,
                    Preset::Full => 0.05,
                },
                effective_length: EffectiveLength::SmfInStep,
                fir_half_length: None,
            },
            ldbp: LdbpConfig {
                window: ldbp::DEFAULT_WINDOW,
                trim: ldbp::DEFAULT_TRIM,
                stride_symbols: 8,
                trainer: TrainerConfig::default(),
                train_with_phase_noise: false,
            },
            dsp: DspChain::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical TOML serialization, hex.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let link = self.link.build()?;
        self.signal.tx(0.0, 0).validate()?;
        if self.launch_powers_dbm.is_empty() || self.equalizers.is_empty() {
            return Err(Error::invalid("need at least one launch power and one equalizer"));
        }
        if self.launch_powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("launch powers must be finite"));
        }
        if !(self.dbp.epsilon_grid_step > 0.0 && self.dbp.epsilon_grid_step <= 1.0) {
            return Err(Error::invalid("epsilon grid step must lie in (0, 1]"));
        }
        for (k, v) in &self.dbp.epsilon {
            k.parse::<StepsPerSpan>()?;
            if !(0.0..=1.0).contains(v) {
                return Err(Error::OutOfRange { name: "epsilon", value: *v, range: "[0, 1]" });
            }
        }
        self.ldbp.trainer.validate()?;
        let rx_len = 2 * self.signal.n_symbols;
        if self.ldbp.window <= 2 * self.ldbp.trim || self.ldbp.window > rx_len || self.ldbp.stride_symbols == 0 {
            return Err(Error::invalid(format!(
                "LDBP window {} with trim {} does not fit a {rx_len}-sample block",
                self.ldbp.window, self.ldbp.trim
            )));
        }
        for eq in &self.equalizers {
            if let Some(s) = eq.stps() {
                if s.total_steps(link.n_spans())? == 0 {
                    return Err(Error::invalid(format!("{s} steps per span gives no step")));
                }
                if matches!(eq, EqualizerSpec::Ldbp { .. } | EqualizerSpec::Dbp { domain: DomainChoice::Td, .. }) {
                    self.dbp.half_length(s)?;
                }
            }
        }
        Ok(())
    }

    fn front_end(&self) -> FrontEnd {
        FrontEnd {
            baud_rate: self.signal.baud_rate,
            rolloff: self.signal.rolloff,
            n_channels: self.signal.n_channels,
            channel_spacing_hz: self.signal.channel_spacing_hz,
        }
    }

    fn bits_per_point(&self) -> usize {
        2 * self.signal.n_symbols * self.signal.modulation_order.trailing_zeros() as usize
    }
}

/// A simulated block as seen by the equalizers.
struct Received {
    frame: SymbolFrame,
    /// Full received field at the forward rate.
    field: DualPolBlock,
    /// Center channel at 2 samples/symbol.
    center: DualPolBlock,
    /// Transmitted center channel through the same front end.
    clean: DualPolBlock,
}

fn simulate(
    cfg: &ExperimentConfig,
    link: &LinkSpec,
    power_dbm: f64,
    tx_seed: u64,
    pmd: Option<&PmdRealization>,
    noise_seed: u64,
    phase_noise: bool,
) -> Result<Received> {
    let tx = transmit(&cfg.signal.tx(power_dbm, tx_seed))?;
    let opts = ChannelOptions { ase_noise: cfg.ase_noise, noise_seed };
    let mut field = propagate_link(&tx.block, link, pmd, opts)?;
    if phase_noise {
        let laser = LaserSpec { linewidth_hz: cfg.laser_linewidth_hz, rng_seed: derive_seed(cfg.seed, TAG_LASER) };
        apply_laser_phase_noise(&mut field, &laser);
    }
    let fe = cfg.front_end();
    let center = channel_select(&field, &fe, fe.center_index())?;
    let clean = channel_select(&tx.block, &fe, fe.center_index())?;
    Ok(Received { frame: tx.center_frame().clone(), field, center, clean })
}

/// Blind DSP and metrics; `None` if the MIMO stage diverged.
fn assess(cfg: &ExperimentConfig, block: &DualPolBlock, frame: &SymbolFrame, c: &Constellation) -> Result<Option<Evaluation>> {
    match cfg.dsp.run(block, c) {
        Ok(sym) => evaluate(&sym, frame, c).map(Some),
        Err(Error::Diverged { symbols, tap_norm }) => {
            log::warn!("MIMO diverged after {symbols} symbols (tap norm {tap_norm:.3e})");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn complexity_input(n_steps: usize, f: usize) -> ComplexityInput {
    ComplexityInput {
        n_steps,
        block_size: LDBP_BLOCK,
        samples_per_symbol: 2,
        n_cdc_link: LDBP_N_CDC,
        fir_half_length: f,
    }
}

/// Output of one launch power.
struct PointOutcome {
    rows: Vec<MetricsReport>,
    plans: Vec<(String, DbpPlan)>,
    models: Vec<(String, Checkpoint)>,
}

fn file_stem(eq: &EqualizerSpec, power_dbm: f64) -> String {
    format!("{}_{}_{:.1}dBm", eq.name().to_ascii_lowercase(), eq.stps_label().replace('/', "-"), power_dbm)
}

fn run_point(cfg: &ExperimentConfig, link: &LinkSpec, pmd: &PmdRealization, idx: usize) -> Result<PointOutcome> {
    let power = cfg.launch_powers_dbm[idx];
    let constellation = Constellation::qam(cfg.signal.modulation_order)?;
    let test = simulate(
        cfg,
        link,
        power,
        derive_seed(cfg.seed, TAG_TEST_TX),
        cfg.pmd.then_some(pmd),
        derive_seed(cfg.seed, TAG_TEST_NOISE + idx as u64),
        true,
    )?;
    let needs_training = cfg.equalizers.iter().any(|e| match e {
        EqualizerSpec::Ldbp { .. } => true,
        EqualizerSpec::Dbp { stps, .. } => cfg.dbp.fixed_epsilon(*stps).ok().flatten().is_none(),
        _ => false,
    });
    let train = if needs_training {
        Some(simulate(
            cfg,
            link,
            power,
            derive_seed(cfg.seed, TAG_TRAIN_TX),
            None,
            derive_seed(cfg.seed, TAG_TRAIN_NOISE + idx as u64),
            cfg.ldbp.train_with_phase_noise,
        )?)
    } else {
        None
    };

    let fs2 = 2.0 * cfg.signal.baud_rate;
    let bandwidth = (1.0 + cfg.signal.rolloff) * cfg.signal.baud_rate;
    let mut epsilons: Vec<(StepsPerSpan, f64)> = Vec::new();
    let mut epsilon_for = |stps: StepsPerSpan| -> Result<f64> {
        if let Some(e) = cfg.dbp.fixed_epsilon(stps)? {
            return Ok(e);
        }
        if let Some((_, e)) = epsilons.iter().find(|(s, _)| *s == stps) {
            return Ok(*e);
        }
        let tr = train.as_ref().expect("training block simulated");
        let base = plan_steps(link, stps, 0.0, cfg.dbp.effective_length)?;
        let (eps, score) = optimize_epsilon(&epsilon_grid(cfg.dbp.epsilon_grid_step), |e| {
            let out = run_dbp(&tr.center, &base.with_epsilon(e)?)?;
            Ok(assess(cfg, &out, &tr.frame, &constellation)?.map_or(f64::NEG_INFINITY, |ev| ev.snr_eff_db))
        })?;
        log::info!("{power} dBm, {stps} StpS: epsilon {eps} (training SNR_eff {score:.2} dB)");
        epsilons.push((stps, eps));
        Ok(eps)
    };

    let mut out = PointOutcome { rows: Vec::new(), plans: Vec::new(), models: Vec::new() };
    for eq in &cfg.equalizers {
        let (block, rmps) = match eq {
            EqualizerSpec::Le => (
                cdc_for_dispersion(&test.center, link.dispersion_map().total())?,
                rmps_fd(&complexity_input(0, 0))?,
            ),
            EqualizerSpec::Dbp { stps, domain } => {
                let eps = epsilon_for(*stps)?;
                let fd = plan_steps(link, *stps, eps, cfg.dbp.effective_length)?;
                let (plan, rmps) = match domain {
                    DomainChoice::Fd => {
                        let r = rmps_fd(&complexity_input(fd.n_steps, 0))?;
                        (fd, r)
                    }
                    DomainChoice::Td => {
                        let f = cfg.dbp.half_length(*stps)?;
                        let r = rmps_td(&complexity_input(fd.n_steps, f))?;
                        (fd.to_time_domain(f, fs2, bandwidth, cfg.signal.baud_rate)?, r)
                    }
                };
                let block = run_dbp(&test.center, &plan)?;
                out.plans.push((file_stem(eq, power), plan));
                (block, rmps)
            }
            EqualizerSpec::Ldbp { lps } => {
                let eps = epsilon_for(*lps)?;
                let f = cfg.dbp.half_length(*lps)?;
                let plan = plan_steps(link, *lps, eps, cfg.dbp.effective_length)?
                    .to_time_domain(f, fs2, bandwidth, cfg.signal.baud_rate)?;
                let tr = train.as_ref().expect("training block simulated");
                let (model, history) = train_ldbp(cfg, &plan, tr, idx)?;
                let (test_in, _) = ldbp::unit_power(&test.center);
                let block = model.apply_block(&test_in, cfg.ldbp.window)?;
                let mut meta = BTreeMap::new();
                meta.insert("setup".into(), cfg.setup.clone());
                meta.insert("lps".into(), lps.to_string());
                meta.insert("power_dbm".into(), format!("{power}"));
                meta.insert("seed".into(), cfg.seed.to_string());
                out.models.push((file_stem(eq, power), Checkpoint::new(model, Some(history), meta)));
                (block, rmps_td(&complexity_input(plan.n_steps, f))?)
            }
            EqualizerSpec::Genie => {
                let back = genie_dbp(&test.field, link, cfg.pmd.then_some(pmd))?;
                let fe = cfg.front_end();
                (channel_select(&back, &fe, fe.center_index())?, f64::NAN)
            }
        };
        let ev = assess(cfg, &block, &test.frame, &constellation)?;
        let (snr, ber, q) = ev.map_or((f64::NAN, f64::NAN, f64::NAN), |e| (e.snr_eff_db, e.ber, e.q_db));
        log::info!("{} {} at {power} dBm: SNR_eff {snr:.2} dB, BER {ber:.3e}", eq.name(), eq.stps_label());
        out.rows.push(MetricsReport {
            setup: cfg.setup.clone(),
            equalizer: eq.name().to_string(),
            stps: eq.stps_label(),
            power_dbm: power,
            snr_eff_db: snr,
            ber,
            q_db: q,
            rmps,
            seed: cfg.seed,
        });
    }
    Ok(out)
}

fn train_ldbp(cfg: &ExperimentConfig, plan: &DbpPlan, tr: &Received, idx: usize) -> Result<(LdbpModel, TrainingHistory)> {
    let (input, p_ref) = ldbp::unit_power(&tr.center);
    let (target, _) = ldbp::unit_power(&tr.clean);
    let data = ldbp::make_dataset(&input, &target, cfg.ldbp.window, cfg.ldbp.trim, cfg.ldbp.stride_symbols, 2)?;
    let model = LdbpModel::from_plan(plan, p_ref, cfg.ldbp.trim, None)?;
    let trainer = TrainerConfig {
        rng_seed: derive_seed(cfg.seed, TAG_TRAINER + (idx as u64) * 64 + plan.n_steps as u64),
        ..cfg.ldbp.trainer
    };
    let (model, hist) = ldbp::train(&model, &data, &trainer)?;
    log::info!(
        "LDBP {} layers: validation MSE {:.4e} -> {:.4e} (epoch {})",
        model.layers.len(),
        hist.initial_val_loss,
        hist.best_val_loss,
        hist.best_epoch
    );
    Ok((model, hist))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub setup: String,
    pub preset: Preset,
    pub config_sha256: String,
    pub seed: u64,
    /// Derived stream seeds by name.
    pub seeds: BTreeMap<String, u64>,
    pub crate_version: String,
    pub status: String,
    pub errors: Vec<String>,
    pub bits_per_point: usize,
    pub rows: usize,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<MetricsReport>,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Run the sweep and write `results.csv`, `manifest.json`, `plans/` and
/// `models/` under `out_dir`. Launch powers run in parallel; rows are written in
/// (power, equalizer) order. If a launch power fails, the rows of the others are
/// still written, the manifest is marked failed and the first error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let link = cfg.link.build()?;
    let pmd = PmdRealization::draw(&link, derive_seed(cfg.seed, TAG_PMD));
    create_dir(out_dir)?;
    create_dir(&out_dir.join("plans"))?;
    create_dir(&out_dir.join("models"))?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(out_dir, e))?;

    let outcomes = crate::exec::map_range(cfg.launch_powers_dbm.len(), |i| run_point(cfg, &link, &pmd, i));

    let mut writer = ResultsWriter::create(&out_dir.join("results.csv"))?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut first_err = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(point) => {
                for r in &point.rows {
                    writer.write(r)?;
                }
                for (stem, plan) in &point.plans {
                    plan.save(&out_dir.join("plans").join(format!("{stem}.txt")))?;
                }
                for (stem, ckpt) in &point.models {
                    ckpt.save(&out_dir.join("models").join(format!("{stem}.ckpt")))?;
                }
                rows.extend(point.rows);
            }
            Err(e) => {
                errors.push(format!("{} dBm: {e}", cfg.launch_powers_dbm[i]));
                first_err.get_or_insert(e);
            }
        }
    }
    writer.finish()?;

    let seeds = [
        ("test_tx", TAG_TEST_TX),
        ("train_tx", TAG_TRAIN_TX),
        ("pmd", TAG_PMD),
        ("laser", TAG_LASER),
    ]
    .into_iter()
    .map(|(k, t)| (k.to_string(), derive_seed(cfg.seed, t)))
    .collect();
    let manifest = Manifest {
        setup: cfg.setup.clone(),
        preset: cfg.preset,
        config_sha256: cfg.hash()?,
        seed: cfg.seed,
        seeds,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        status: if errors.is_empty() { "complete".into() } else { "failed".into() },
        errors,
        bits_per_point: cfg.bits_per_point(),
        rows: rows.len(),
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(RunOutcome { rows, manifest, out_dir: out_dir.to_path_buf() }),
    }
}

/// Best launch power of one equalizer under one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub value_db: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub setup: String,
    pub equalizer: String,
    pub stps: String,
    pub peak_snr_eff_db: f64,
    pub snr_opt_power_dbm: f64,
    pub snr_gain_over_le_db: Option<f64>,
    pub peak_q_db: f64,
    pub q_opt_power_dbm: f64,
    pub q_gain_over_le_db: Option<f64>,
    /// BER at the Q-optimal power.
    pub ber: f64,
    pub ber_ci_low: Option<f64>,
    pub ber_ci_high: Option<f64>,
    pub rmps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<ReportRow>,
    bits_per_point: Option<usize>,
}

fn peak(points: &[&MetricsReport], metric: impl Fn(&MetricsReport) -> f64) -> Peak {
    let mut best = Peak { value_db: f64::NAN, power_dbm: f64::NAN };
    for r in points {
        let v = metric(r);
        if !v.is_nan() && (best.value_db.is_nan() || v > best.value_db) {
            best = Peak { value_db: v, power_dbm: r.power_dbm };
        }
    }
    best
}

fn gain(a: f64, b: f64) -> Option<f64> {
    let g = a - b;
    g.is_finite().then_some(g)
}

/// Peak metric, optimal power and gain over LE per (setup, equalizer, StpS), in
/// order of first appearance. With `bits_per_point`, BER confidence intervals
/// (Wilson, 95%) are attached.
pub fn sweep_report(results: &[MetricsReport], bits_per_point: Option<usize>) -> Result<SweepReport> {
    if results.is_empty() {
        return Err(Error::invalid("no results to report"));
    }
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in results {
        let k = (r.setup.clone(), r.equalizer.clone(), r.stps.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let group = |k: &(String, String, String)| -> Vec<&MetricsReport> {
        results
            .iter()
            .filter(|r| r.setup == k.0 && r.equalizer == k.1 && r.stps == k.2)
            .collect()
    };
    let mut rows = Vec::with_capacity(keys.len());
    for k in &keys {
        let pts = group(k);
        let snr = peak(&pts, |r| r.snr_eff_db);
        let q = peak(&pts, |r| r.q_db);
        let le = keys
            .iter()
            .find(|o| o.0 == k.0 && o.1 == "LE")
            .map(|o| {
                let le_pts = group(o);
                (peak(&le_pts, |r| r.snr_eff_db), peak(&le_pts, |r| r.q_db))
            });
        let at_q = pts.iter().find(|r| r.power_dbm == q.power_dbm);
        let ber = at_q.map_or(f64::NAN, |r| r.ber);
        let ci = bits_per_point.filter(|_| ber.is_finite()).map(|bits| {
            let errors = (ber * bits as f64).round() as usize;
            wilson_interval(errors, bits, 1.96)
        });
        rows.push(ReportRow {
            setup: k.0.clone(),
            equalizer: k.1.clone(),
            stps: k.2.clone(),
            peak_snr_eff_db: snr.value_db,
            snr_opt_power_dbm: snr.power_dbm,
            snr_gain_over_le_db: le.and_then(|(s, _)| gain(snr.value_db, s.value_db)),
            peak_q_db: q.value_db,
            q_opt_power_dbm: q.power_dbm,
            q_gain_over_le_db: le.and_then(|(_, lq)| gain(q.value_db, lq.value_db)),
            ber,
            ber_ci_low: ci.map(|c| c.0),
            ber_ci_high: ci.map(|c| c.1),
            rmps: pts.first().map_or(f64::NAN, |r| r.rmps),
        });
    }
    Ok(SweepReport { rows, bits_per_point })
}

impl SweepReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fixed-width table. BER is shown as a confidence interval when fewer than
    /// 100 errors back it.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |g| format!("{g:+.2}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:<8} {:<6} {:>10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>24} {:>9}",
            "setup", "eq", "stps", "SNReff dB", "@dBm", "gain", "Q dB", "@dBm", "gain", "BER", "RMpS"
        );
        for r in &self.rows {
            let errors = self.bits_per_point.map(|b| (r.ber * b as f64).round());
            let ber = match (r.ber_ci_low, r.ber_ci_high, errors) {
                (Some(lo), Some(hi), Some(e)) if e < 100.0 => format!("[{lo:.2e}, {hi:.2e}]"),
                _ => format!("{:.3e}", r.ber),
            };
            let _ = writeln!(
                s,
                "{:<6} {:<8} {:<6} {:>10.2} {:>8.1} {:>8} {:>8.2} {:>8.1} {:>8} {:>24} {:>9.0}",
                r.setup,
                r.equalizer,
                r.stps,
                r.peak_snr_eff_db,
                r.snr_opt_power_dbm,
                opt(r.snr_gain_over_le_db),
                r.peak_q_db,
                r.q_opt_power_dbm,
                opt(r.q_gain_over_le_db),
                ber,
                r.rmps
            );
        }
        s
    }
}
