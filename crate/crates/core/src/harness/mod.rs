//! Seeded Monte-Carlo orchestration: sweep specifications, per-drop
//! evaluation of every scheme, deterministic aggregation and CSV output.

mod config;
pub mod experiments;
pub mod presets;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{run_baseline, Baseline};
use crate::channel::{derive_seed, generate_drop, validate_config, ChannelDrop, NetworkConfig};
use crate::error::{Error, Result};
use crate::feedback::{
    build_grassmannian_codebook_with, build_random_codebook, quantize_direction, reconstruct_precoder, Codebook,
    CodebookKind, GrassmannianOptions, QuantizedFeedback, ReconstructionExponent,
};
use crate::matlin::CMat;
use crate::metrics::{compute_rates, mean_sem, ServedStream};
use crate::odia::{all_decisions, effective_channel_matrix, schedule_from_decisions, zf_precoder, UserDecision};
use crate::seodia::{eta_d_log_snr, eta_d_log_users, eta_i_inverse_snr, se_odia_select, OutagePolicy, SeOdiaParams};

pub use config::{parse_key_values, CONFIG_KEYS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Attempts at redrawing a drop whose effective channel is singular.
const MAX_RESAMPLES: u64 = 8;
const CODEBOOK_STREAM: u64 = 0xC0DE_B00C;
const SELECTION_STREAM: u64 = 0x5E0D_1A00;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Odia,
    OdiaLf,
    SeOdia,
    MaxSnr,
    MinInr,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Odia, Scheme::OdiaLf, Scheme::SeOdia, Scheme::MaxSnr, Scheme::MinInr];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Odia => "odia",
            Scheme::OdiaLf => "odia_lf",
            Scheme::SeOdia => "se_odia",
            Scheme::MaxSnr => "max_snr",
            Scheme::MinInr => "min_inr",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.to_string() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    SnrDb,
    NUsers,
    NF,
    EtaD,
    EtaI,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SnrDb => "snr_db",
            Axis::NUsers => "n_users",
            Axis::NF => "n_f",
            Axis::EtaD => "eta_d",
            Axis::EtaI => "eta_i",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "snr_db" => Ok(Axis::SnrDb),
            "n_users" | "n" => Ok(Axis::NUsers),
            "n_f" => Ok(Axis::NF),
            "eta_d" => Ok(Axis::EtaD),
            "eta_i" => Ok(Axis::EtaI),
            other => Err(Error::Config(format!("unknown axis '{other}'"))),
        }
    }
}

/// How a configured threshold turns into the value used at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThresholdScaling {
    /// Use the number as is.
    #[default]
    Fixed,
    /// `η_I = ε / SNR`.
    InverseSnr,
    /// `η_D = ε · ln SNR`.
    LogSnr,
    /// `η_D = ε · ln N`.
    LogUsers,
}

impl fmt::Display for ThresholdScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdScaling::Fixed => "fixed",
            ThresholdScaling::InverseSnr => "inverse_snr",
            ThresholdScaling::LogSnr => "log_snr",
            ThresholdScaling::LogUsers => "log_n",
        })
    }
}

impl FromStr for ThresholdScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed" => Ok(ThresholdScaling::Fixed),
            "inverse_snr" => Ok(ThresholdScaling::InverseSnr),
            "log_snr" => Ok(ThresholdScaling::LogSnr),
            "log_n" => Ok(ThresholdScaling::LogUsers),
            other => Err(Error::Config(format!("unknown threshold scaling '{other}'"))),
        }
    }
}

/// One curve: a scheme evaluated along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: NetworkConfig,
    pub scheme: Scheme,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub drops: usize,
    pub n_f: u32,
    pub codebook: CodebookKind,
    pub grassmannian_iterations: usize,
    pub grassmannian_training: usize,
    /// Unset thresholds come from the nearest tabulated preset.
    pub eta_i: Option<f64>,
    pub eta_d: Option<f64>,
    pub alpha: Option<f64>,
    pub eta_i_scaling: ThresholdScaling,
    pub eta_d_scaling: ThresholdScaling,
    pub outage_policy: OutagePolicy,
    pub reconstruction_exponent: ReconstructionExponent,
    /// `N = SNR^τ` along an SNR axis.
    pub users_exponent: Option<f64>,
    /// `n_f = ⌈log₂ SNR⌉` along an SNR axis.
    pub couple_feedback_bits: bool,
    pub threads: Option<usize>,
    pub out: Option<std::path::PathBuf>,
}

impl SweepSpec {
    pub fn new(base: NetworkConfig, scheme: Scheme) -> Self {
        let snr = base.snr_db;
        SweepSpec {
            base,
            scheme,
            axis: Axis::SnrDb,
            values: vec![snr],
            drops: 1000,
            n_f: 4,
            codebook: CodebookKind::Random,
            grassmannian_iterations: 10,
            grassmannian_training: 20_000,
            eta_i: None,
            eta_d: None,
            alpha: None,
            eta_i_scaling: ThresholdScaling::Fixed,
            eta_d_scaling: ThresholdScaling::Fixed,
            outage_policy: OutagePolicy::Partial,
            reconstruction_exponent: ReconstructionExponent::Norm,
            users_exponent: None,
            couple_feedback_bits: false,
            threads: None,
            out: None,
        }
    }

    pub fn along(mut self, axis: Axis, values: &[f64]) -> Self {
        self.axis = axis;
        self.values = values.to_vec();
        self
    }

    pub fn with_drops(mut self, drops: usize) -> Self {
        self.drops = drops;
        self
    }

    pub fn with_codebook(mut self, kind: CodebookKind, n_f: u32) -> Self {
        self.codebook = kind;
        self.n_f = n_f;
        self
    }

    pub fn with_thresholds(mut self, eta_i: f64, eta_d: f64, alpha: f64) -> Self {
        self.eta_i = Some(eta_i);
        self.eta_d = Some(eta_d);
        self.alpha = Some(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one axis value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("axis values must be strictly increasing".into()));
        }
        if self.drops == 0 {
            return Err(Error::Config("drops must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        for p in self.points()? {
            validate_config_strict(&p.cfg)?;
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; also what the config hash covers.
    pub fn to_config_string(&self) -> String {
        let b = &self.base;
        let opt = |v: Option<f64>| v.map_or_else(|| "preset".to_string(), |x| x.to_string());
        let values: Vec<String> = self.values.iter().map(f64::to_string).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("k", b.k.to_string());
        kv("n", b.n.to_string());
        kv("m", b.m.to_string());
        kv("l", b.l.to_string());
        kv("s", b.s.to_string());
        kv("snr_db", b.snr_db.to_string());
        kv("seed", b.seed.to_string());
        kv("fixed_reference_bases", b.fixed_reference_bases.to_string());
        kv("scheme", self.scheme.to_string());
        kv("axis", self.axis.to_string());
        kv("values", values.join(", "));
        kv("drops", self.drops.to_string());
        kv("n_f", self.n_f.to_string());
        kv("codebook", self.codebook.to_string());
        kv("grassmannian_iterations", self.grassmannian_iterations.to_string());
        kv("grassmannian_training", self.grassmannian_training.to_string());
        kv("eta_i", opt(self.eta_i));
        kv("eta_d", opt(self.eta_d));
        kv("alpha", opt(self.alpha));
        kv("eta_i_scaling", self.eta_i_scaling.to_string());
        kv("eta_d_scaling", self.eta_d_scaling.to_string());
        kv(
            "outage_policy",
            match self.outage_policy {
                OutagePolicy::Partial => "partial",
                OutagePolicy::SkipCell => "skip_cell",
            }
            .into(),
        );
        kv(
            "reconstruction_exponent",
            match self.reconstruction_exponent {
                ReconstructionExponent::Norm => "1",
                ReconstructionExponent::SquaredNorm => "2",
            }
            .into(),
        );
        kv("users_exponent", self.users_exponent.map_or_else(|| "none".into(), |t| t.to_string()));
        kv("couple_feedback_bits", self.couple_feedback_bits.to_string());
        s
    }

    /// The concrete operating points along the axis.
    pub fn points(&self) -> Result<Vec<PointSpec>> {
        self.values.iter().map(|&v| self.point(v)).collect()
    }

    fn point(&self, v: f64) -> Result<PointSpec> {
        let mut cfg = self.base.clone();
        let mut n_f = self.n_f;
        let (mut eta_i, mut eta_d) = (self.eta_i, self.eta_d);
        let int_value = |what: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{what} axis needs nonnegative integers, got {v}")))
            }
        };
        match self.axis {
            Axis::SnrDb => {
                cfg.snr_db = v;
                if let Some(tau) = self.users_exponent {
                    cfg.n = (cfg.snr().powf(tau).round() as usize).max(cfg.s);
                }
                if self.couple_feedback_bits {
                    n_f = (cfg.snr().log2().ceil() as u32).max(1);
                }
            }
            Axis::NUsers => cfg.n = int_value("n_users")?,
            Axis::NF => n_f = int_value("n_f")? as u32,
            Axis::EtaD => eta_d = Some(v),
            Axis::EtaI => eta_i = Some(v),
        }
        let preset = SeOdiaParams::<f64>::nearest_preset(cfg.snr_db, cfg.n);
        let mut eta_i = eta_i.unwrap_or(preset.eta_i);
        let mut eta_d = eta_d.unwrap_or(preset.eta_d);
        let alpha = self.alpha.unwrap_or(preset.alpha);
        eta_i = scale_threshold(eta_i, self.eta_i_scaling, &cfg);
        eta_d = scale_threshold(eta_d, self.eta_d_scaling, &cfg);
        Ok(PointSpec {
            axis_value: v,
            scheme: self.scheme,
            se: SeOdiaParams::new(eta_i, eta_d, alpha)?,
            cfg,
            n_f,
            codebook: self.codebook,
            grassmannian: GrassmannianOptions::new(self.grassmannian_iterations, 0).with_training(self.grassmannian_training),
            outage_policy: self.outage_policy,
            exponent: self.reconstruction_exponent,
        })
    }
}

fn scale_threshold(v: f64, scaling: ThresholdScaling, cfg: &NetworkConfig) -> f64 {
    match scaling {
        ThresholdScaling::Fixed => v,
        ThresholdScaling::InverseSnr => eta_i_inverse_snr(v, cfg.snr()),
        ThresholdScaling::LogSnr => eta_d_log_snr(v, cfg.snr()),
        ThresholdScaling::LogUsers => eta_d_log_users(v, cfg.n),
    }
}

fn validate_config_strict(cfg: &NetworkConfig) -> Result<()> {
    let issues = validate_config(cfg);
    for w in issues.iter().filter(|i| i.severity == crate::channel::Severity::Warning) {
        log::warn!("{w}");
    }
    let errs: Vec<String> = issues
        .iter()
        .filter(|i| i.severity == crate::channel::Severity::Violation)
        .map(|i| i.to_string())
        .collect();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs.join("; ")))
    }
}

/// Everything needed to simulate one axis point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSpec {
    pub axis_value: f64,
    pub scheme: Scheme,
    pub cfg: NetworkConfig,
    pub n_f: u32,
    pub codebook: CodebookKind,
    pub grassmannian: GrassmannianOptions,
    pub se: SeOdiaParams<f64>,
    pub outage_policy: OutagePolicy,
    pub exponent: ReconstructionExponent,
}

impl PointSpec {
    /// The shared codebook for limited-feedback points.
    pub fn build_codebook(&self) -> Result<Option<Codebook<f64>>> {
        if self.scheme != Scheme::OdiaLf {
            return Ok(None);
        }
        let seed = derive_seed(self.cfg.seed, CODEBOOK_STREAM ^ u64::from(self.n_f));
        let cb = match self.codebook {
            CodebookKind::Random => build_random_codebook(self.cfg.s, self.n_f, seed)?,
            CodebookKind::Grassmannian => {
                let mut opts = self.grassmannian.clone();
                opts.seed = seed;
                build_grassmannian_codebook_with(self.cfg.s, self.n_f, &opts)?
            }
        };
        Ok(Some(cb))
    }
}

/// Outcome of one drop.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DropResult {
    pub sum_rate: f64,
    pub sum_interference: f64,
    /// Mean over served streams of intra-cell power relative to desired power.
    pub residual_intra: f64,
    pub outage_cells: usize,
    pub served: usize,
    pub resampled: u64,
}

/// Rates for one drop given each cell's transmit matrix and served streams.
fn account(drop: &ChannelDrop<f64>, cfg: &NetworkConfig, transmit: &[CMat<f64>], served: &[ServedStream<f64>], outage_cells: usize) -> Result<DropResult> {
    let refs: Vec<&CMat<f64>> = transmit.iter().collect();
    let r = compute_rates(drop, &refs, served, cfg.s, cfg.snr())?;
    let residual_intra = if served.is_empty() {
        0.0
    } else {
        r.residual_intra.iter().zip(&r.desired).map(|(a, b)| a / b).sum::<f64>() / served.len() as f64
    };
    Ok(DropResult {
        sum_rate: r.sum_rate,
        sum_interference: r.sum_interference,
        residual_intra,
        outage_cells,
        served: served.len(),
        resampled: 0,
    })
}

/// Per-cell selection seed for SE-ODIA, distinct per grid cell.
pub fn selection_seed(seed: u64, drop_index: u64, grid_cell: u64) -> u64 {
    derive_seed(derive_seed(seed, drop_index), SELECTION_STREAM ^ grid_cell)
}

/// SE-ODIA on precomputed decisions.
pub fn se_odia_drop(
    drop: &ChannelDrop<f64>,
    cfg: &NetworkConfig,
    decisions: &[Vec<UserDecision<f64>>],
    params: &SeOdiaParams<f64>,
    policy: OutagePolicy,
    rng_seed: u64,
) -> Result<DropResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut transmit = Vec::with_capacity(cfg.k);
    let mut served = Vec::new();
    let mut outage_cells = 0;
    for (i, cell) in decisions.iter().enumerate() {
        let out = se_odia_select(cell, cfg.s, params, &mut rng)?;
        let silent = out.outage && policy == OutagePolicy::SkipCell;
        if out.outage {
            outage_cells += 1;
        }
        let picks: &[usize] = if silent { &[] } else { &out.selected };
        let fs: Vec<&[Complex<f64>]> = picks.iter().map(|&j| cell[j].f.as_slice()).collect();
        let pc = zf_precoder(&effective_channel_matrix(&fs)?, drop.reference_basis(i), i)?;
        for (pos, &j) in picks.iter().enumerate() {
            served.push(ServedStream {
                cell: i,
                user: j,
                stream: pos,
                u: cell[j].u.clone(),
            });
        }
        transmit.push(pc.w);
    }
    account(drop, cfg, &transmit, &served, outage_cells)
}

fn odia_drop(drop: &ChannelDrop<f64>, cfg: &NetworkConfig, codebook: Option<(&Codebook<f64>, ReconstructionExponent)>) -> Result<DropResult> {
    let decisions = all_decisions(drop)?;
    let (out, pre) = schedule_from_decisions(drop, &decisions, cfg.s)?;
    // Positions in each cell's selection that get a stream. With limited
    // feedback, users reporting an already-claimed codeword are dropped:
    // their reconstructed channels coincide and cannot be zero-forced apart.
    let mut kept: Vec<Vec<usize>> = out.selected.iter().map(|sel| (0..sel.len()).collect()).collect();
    let transmit = match codebook {
        None => pre.into_iter().map(|p| p.w).collect(),
        Some((cb, exponent)) => out
            .decisions
            .iter()
            .enumerate()
            .map(|(i, decs)| {
                let mut reports = Vec::with_capacity(decs.len());
                kept[i].clear();
                for (pos, d) in decs.iter().enumerate() {
                    let q = quantize_direction(&d.f, cb)?;
                    if reports.iter().all(|r: &QuantizedFeedback<f64>| r.index != q.index) {
                        reports.push(q);
                        kept[i].push(pos);
                    }
                }
                Ok(reconstruct_precoder(&reports, cb, drop.reference_basis(i), exponent, i)?.w)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let served: Vec<ServedStream<f64>> = kept
        .iter()
        .enumerate()
        .flat_map(|(i, pos)| pos.iter().enumerate().map(move |(stream, &p)| (i, stream, p)))
        .map(|(i, stream, p)| ServedStream {
            cell: i,
            user: out.selected[i][p],
            stream,
            u: out.decisions[i][p].u.clone(),
        })
        .collect();
    account(drop, cfg, &transmit, &served, 0)
}

fn baseline_drop(drop: &ChannelDrop<f64>, cfg: &NetworkConfig, baseline: Baseline) -> Result<DropResult> {
    let sched = run_baseline(drop, baseline)?;
    let mut served = Vec::new();
    for i in 0..cfg.k {
        for (m, &j) in sched.assignment[i].iter().enumerate() {
            served.push(ServedStream {
                cell: i,
                user: j,
                stream: m,
                u: sched.receivers[i][m].clone(),
            });
        }
    }
    let transmit: Vec<CMat<f64>> = sched.precoders.into_iter().map(|p| p.w).collect();
    account(drop, cfg, &transmit, &served, 0)
}

fn evaluate(point: &PointSpec, codebook: Option<&Codebook<f64>>, drop: &ChannelDrop<f64>, drop_index: u64) -> Result<DropResult> {
    let cfg = &point.cfg;
    match point.scheme {
        Scheme::Odia => odia_drop(drop, cfg, None),
        Scheme::OdiaLf => {
            let cb = codebook.ok_or_else(|| Error::Config("limited feedback needs a codebook".into()))?;
            odia_drop(drop, cfg, Some((cb, point.exponent)))
        }
        Scheme::SeOdia => {
            let decisions = all_decisions(drop)?;
            se_odia_drop(drop, cfg, &decisions, &point.se, point.outage_policy, selection_seed(cfg.seed, drop_index, 0))
        }
        Scheme::MaxSnr => baseline_drop(drop, cfg, Baseline::MaxSnr),
        Scheme::MinInr => baseline_drop(drop, cfg, Baseline::MinInr),
    }
}

/// Drop index used for the `attempt`-th redraw of drop `drop_index`.
pub fn resample_index(drop_index: u64, attempt: u64) -> u64 {
    derive_seed(drop_index, attempt) | (1 << 63)
}

/// Runs `f` on drop `drop_index`, redrawing the drop when `f` reports a
/// degenerate (singular) channel.
pub fn with_resampling<R>(cfg: &NetworkConfig, drop_index: u64, mut f: impl FnMut(&ChannelDrop<f64>, u64) -> Result<R>) -> Result<(R, u64)> {
    let mut index = drop_index;
    for attempt in 0..=MAX_RESAMPLES {
        let drop = generate_drop::<f64>(cfg, index)?;
        match f(&drop, index) {
            Ok(r) => return Ok((r, attempt)),
            Err(Error::Degenerate(msg)) => {
                log::debug!("drop {drop_index} degenerate ({msg}), redrawing");
                index = resample_index(drop_index, attempt + 1);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!("drop {drop_index} stayed degenerate after {MAX_RESAMPLES} redraws")))
}

/// Simulates drop `drop_index` at one point.
pub fn run_drop(point: &PointSpec, codebook: Option<&Codebook<f64>>, drop_index: u64) -> Result<DropResult> {
    let (mut r, resampled) = with_resampling(&point.cfg, drop_index, |drop, idx| evaluate(point, codebook, drop, idx))?;
    r.resampled = resampled;
    Ok(r)
}

/// Aggregates of one axis point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub cfg: NetworkConfig,
    pub axis_value: f64,
    pub n_f: Option<u32>,
    pub se: Option<SeOdiaParams<f64>>,
    pub drops: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_sem: f64,
    pub sum_interference_mean: f64,
    pub residual_intra_mean: f64,
    /// Fraction of (drop, cell) pairs in scheduling outage.
    pub outage_rate: f64,
    pub resampled: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    pub config_hash: String,
}

pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Runs `f(0..drops)` on a pool of the requested size (or the global pool)
/// and returns results in drop order.
pub fn parallel_drops<R: Send>(threads: Option<usize>, drops: usize, f: impl Fn(u64) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let go = || (0..drops as u64).into_par_iter().map(&f).collect::<Result<Vec<R>>>();
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Aggregates per-drop results in index order.
pub fn aggregate(point: &PointSpec, results: &[DropResult]) -> SweepRow {
    let rates: Vec<f64> = results.iter().map(|r| r.sum_rate).collect();
    let (mean, sem) = mean_sem(&rates);
    let n = results.len() as f64;
    SweepRow {
        scheme: point.scheme,
        cfg: point.cfg.clone(),
        axis_value: point.axis_value,
        n_f: (point.scheme == Scheme::OdiaLf).then_some(point.n_f),
        se: (point.scheme == Scheme::SeOdia).then_some(point.se),
        drops: results.len(),
        sum_rate_mean: mean,
        sum_rate_sem: sem,
        sum_interference_mean: results.iter().map(|r| r.sum_interference).sum::<f64>() / n,
        residual_intra_mean: results.iter().map(|r| r.residual_intra).sum::<f64>() / n,
        outage_rate: results.iter().map(|r| r.outage_cells).sum::<usize>() as f64 / (n * point.cfg.k as f64),
        resampled: results.iter().map(|r| r.resampled).sum(),
    }
}

/// Runs every axis point; identical for any thread count.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for point in spec.points()? {
        let cb = point.build_codebook()?;
        let results = parallel_drops(spec.threads, spec.drops, |d| run_drop(&point, cb.as_ref(), d))?;
        let row = aggregate(&point, &results);
        log::info!(
            "{} {}={} sum-rate {:.4} ± {:.4}",
            row.scheme,
            spec.axis,
            row.axis_value,
            row.sum_rate_mean,
            row.sum_rate_sem
        );
        rows.push(row);
    }
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        config_hash: config_hash(&spec.to_config_string()),
    })
}

pub const CSV_HEADER: &str = "scheme,K,M,L,S,N,snr_db,n_f,eta_i,eta_d,alpha,drops,sum_rate_mean,sum_rate_sem,sum_interference_mean,residual_intra_mean,outage_rate,resampled";

pub fn csv_row(row: &SweepRow) -> String {
    let c = &row.cfg;
    let n_f = row.n_f.map_or_else(String::new, |b| b.to_string());
    let (ei, ed, al) = row.se.map_or_else(
        || (String::new(), String::new(), String::new()),
        |p| (p.eta_i.to_string(), p.eta_d.to_string(), p.alpha.to_string()),
    );
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.scheme,
        c.k,
        c.m,
        c.l,
        c.s,
        c.n,
        c.snr_db,
        n_f,
        ei,
        ed,
        al,
        row.drops,
        row.sum_rate_mean,
        row.sum_rate_sem,
        row.sum_interference_mean,
        row.residual_intra_mean,
        row.outage_rate,
        row.resampled
    )
}

/// Writes results as one CSV with a provenance comment header. The hash
/// covers the canonical configuration of every sweep in order.
pub fn write_csv<W: Write>(w: W, results: &[SweepResult], seed: u64) -> Result<()> {
    let joined: String = results.iter().map(|r| r.spec.to_config_string()).collect::<Vec<_>>().join("---\n");
    let rows: Vec<&SweepRow> = results.iter().flat_map(|r| &r.rows).collect();
    write_csv_rows(w, &rows, &joined, seed)
}

/// Writes rows under a header whose hash covers `config_text`.
pub fn write_csv_rows<W: Write>(mut w: W, rows: &[&SweepRow], config_text: &str, seed: u64) -> Result<()> {
    writeln!(w, "# odia {VERSION}")?;
    writeln!(w, "# config_hash = {}", config_hash(config_text))?;
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", csv_row(row))?;
    }
    Ok(())
}

pub fn csv_string(results: &[SweepResult], seed: u64) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, results, seed).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme) -> SweepSpec {
        SweepSpec::new(NetworkConfig::new(3, 6, 4, 2, 2, 10.0, 11), scheme)
            .along(Axis::SnrDb, &[0.0, 10.0])
            .with_drops(40)
    }

    #[test]
    fn every_scheme_runs() {
        for scheme in Scheme::ALL {
            let r = run_sweep(&small(scheme)).unwrap();
            assert_eq!(r.rows.len(), 2);
            for row in &r.rows {
                assert_eq!(row.drops, 40);
                assert!(row.sum_rate_mean.is_finite() && row.sum_rate_mean > 0.0, "{scheme}");
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut a = small(Scheme::SeOdia);
        a.threads = Some(1);
        let mut b = a.clone();
        b.threads = Some(3);
        let ra = csv_string(&[run_sweep(&a).unwrap()], 11);
        let rb = csv_string(&[run_sweep(&b).unwrap()], 11);
        assert_eq!(ra, rb);
    }

    #[test]
    fn csv_layout() {
        let r = run_sweep(&small(Scheme::OdiaLf)).unwrap();
        let text = csv_string(&[r], 11);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# odia "));
        assert!(lines[1].starts_with("# config_hash = "));
        assert_eq!(lines[2], "# seed = 11");
        assert_eq!(lines[3], CSV_HEADER);
        assert_eq!(lines.len(), 6);
        let fields: Vec<&str> = lines[4].split(',').collect();
        assert_eq!(fields.len(), 18);
        assert_eq!(fields[0], "odia_lf");
        assert_eq!(fields[7], "4");
        assert_eq!(fields[8], "");
    }

    #[test]
    fn coupled_snr_axis() {
        let mut spec = SweepSpec::new(NetworkConfig::new(2, 2, 3, 2, 2, 10.0, 1), Scheme::OdiaLf).along(Axis::SnrDb, &[0.0, 20.0, 30.0]);
        spec.users_exponent = Some(1.0);
        spec.couple_feedback_bits = true;
        let pts = spec.points().unwrap();
        assert_eq!(pts.iter().map(|p| p.cfg.n).collect::<Vec<_>>(), vec![2, 100, 1000]);
        assert_eq!(pts.iter().map(|p| p.n_f).collect::<Vec<_>>(), vec![1, 7, 10]);
    }

    #[test]
    fn threshold_scalings() {
        let mut spec = SweepSpec::new(NetworkConfig::new(3, 20, 4, 2, 2, 20.0, 1), Scheme::SeOdia).with_thresholds(2.0, 0.5, 0.8);
        spec.eta_i_scaling = ThresholdScaling::InverseSnr;
        spec.eta_d_scaling = ThresholdScaling::LogUsers;
        let p = &spec.points().unwrap()[0];
        assert!((p.se.eta_i - 0.02).abs() < 1e-12);
        assert!((p.se.eta_d - 0.5 * 20f64.ln()).abs() < 1e-12);
        spec.eta_d_scaling = ThresholdScaling::LogSnr;
        let p = &spec.points().unwrap()[0];
        assert!((p.se.eta_d - 0.5 * 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unset_thresholds_use_nearest_preset() {
        let spec = SweepSpec::new(NetworkConfig::new(3, 50, 4, 2, 2, 3.0, 1), Scheme::SeOdia);
        let p = &spec.points().unwrap()[0];
        assert_eq!((p.se.eta_i, p.se.eta_d, p.se.alpha), (2.0, 2.5, 0.8));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(run_sweep(&small(Scheme::Odia).along(Axis::SnrDb, &[])).is_err());
        assert!(run_sweep(&small(Scheme::Odia).along(Axis::SnrDb, &[10.0, 0.0])).is_err());
        assert!(run_sweep(&small(Scheme::Odia).with_drops(0)).is_err());
        let bad = SweepSpec::new(NetworkConfig::new(3, 6, 2, 2, 3, 10.0, 1), Scheme::Odia);
        assert!(matches!(run_sweep(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn resample_index_is_distinct() {
        assert_ne!(resample_index(5, 1), 5);
        assert_ne!(resample_index(5, 1), resample_index(5, 2));
    }
}
