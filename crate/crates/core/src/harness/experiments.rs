//! Stand-alone experiments: leakage CDF tail, interference decay with `N`,
//! the SE-ODIA threshold grid search and a quick invariant suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{parallel_drops, se_odia_drop, selection_seed, with_resampling, Scheme, SweepRow};
use crate::baselines::{run_baseline, Baseline};
use crate::channel::{generate_drop, ChannelDrop, NetworkConfig};
use crate::error::{Error, Result};
use crate::matlin::{inner, norm_sq, random_unit_vector};
use crate::metrics::{cdf_tail_slope, compute_rates, fit_loglog_slope, mean_sem, ServedStream, SlopeEstimate};
use crate::odia::{all_decisions, interference_matrix, run_odia_cell_selection, CellPrecoder};
use crate::seodia::{OutagePolicy, SeOdiaParams};

/// Leakage metrics of unselected users: every user of every cell in
/// `ceil(samples / (K·S))` drops of a network with `N = S`.
pub fn sample_eta(cfg: &NetworkConfig, samples: usize, threads: Option<usize>) -> Result<Vec<f64>> {
    let mut cfg = cfg.clone();
    cfg.n = cfg.s;
    let per_drop = cfg.k * cfg.n;
    let drops = samples.div_ceil(per_drop);
    let chunks = parallel_drops(threads, drops, |d| {
        let drop = generate_drop::<f64>(&cfg, d)?;
        Ok(all_decisions(&drop)?.into_iter().flatten().map(|x| x.eta).collect::<Vec<f64>>())
    })?;
    let mut out: Vec<f64> = chunks.into_iter().flatten().collect();
    out.truncate(samples);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaCdfReport {
    pub samples: usize,
    pub expected_exponent: i64,
    pub fit: SlopeEstimate,
}

/// Log-log slope of the empirical leakage CDF over quantiles `1e-4..1e-2`.
pub fn eta_cdf_experiment(cfg: &NetworkConfig, samples: usize, threads: Option<usize>) -> Result<EtaCdfReport> {
    let eta = sample_eta(cfg, samples, threads)?;
    let fit = cdf_tail_slope(&eta, 1e-4, 1e-2, 9)?;
    Ok(EtaCdfReport {
        samples: eta.len(),
        expected_exponent: cfg.tail_exponent(),
        fit,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub scheme: Scheme,
    /// `(N, mean of 1/η_min)`.
    pub points: Vec<(f64, f64)>,
    pub fit: SlopeEstimate,
}

/// Mean over drops and cells of `1/η_min`, where `η_min` is the smallest
/// scheduling metric among a cell's served users, for each `N`; then the
/// log-log slope against `N`. Only ODIA and min-INR are meaningful here.
pub fn decay_experiment(cfg: &NetworkConfig, scheme: Scheme, ns: &[usize], drops: usize, threads: Option<usize>) -> Result<DecayReport> {
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let c = cfg.clone().with_users(n);
        let per_drop = parallel_drops(threads, drops, |d| {
            let drop = generate_drop::<f64>(&c, d)?;
            let mins: Vec<f64> = match scheme {
                Scheme::Odia => all_decisions(&drop)?
                    .iter()
                    .map(|cell| cell.iter().map(|x| x.eta).fold(f64::INFINITY, f64::min))
                    .collect(),
                Scheme::MinInr => run_baseline(&drop, Baseline::MinInr)?
                    .metrics
                    .iter()
                    .map(|m| m.iter().copied().fold(f64::INFINITY, f64::min))
                    .collect(),
                other => return Err(Error::Config(format!("decay is defined for odia and min_inr, not {other}"))),
            };
            Ok(mins.iter().map(|m| 1.0 / m).sum::<f64>())
        })?;
        let mean = per_drop.iter().sum::<f64>() / (drops * cfg.k) as f64;
        log::info!("{scheme} N={n}: E[1/eta_min] = {mean:.4}");
        points.push((n as f64, mean));
    }
    let fit = fit_loglog_slope(&points)?;
    Ok(DecayReport { scheme, points, fit })
}

pub const GRID_ETA_I: [f64; 7] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0];
pub const GRID_ETA_D: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const GRID_ALPHA: [f64; 3] = [0.6, 0.8, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub params: SeOdiaParams<f64>,
    pub sum_rate_mean: f64,
    pub sum_rate_sem: f64,
    pub sum_interference_mean: f64,
    pub residual_intra_mean: f64,
    pub outage_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub cfg: NetworkConfig,
    pub drops: usize,
    pub cells: Vec<GridCell>,
    pub best: usize,
    pub resampled: u64,
}

impl GridReport {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .map(|c| SweepRow {
                scheme: Scheme::SeOdia,
                cfg: self.cfg.clone(),
                axis_value: self.cfg.snr_db,
                n_f: None,
                se: Some(c.params),
                drops: self.drops,
                sum_rate_mean: c.sum_rate_mean,
                sum_rate_sem: c.sum_rate_sem,
                sum_interference_mean: c.sum_interference_mean,
                residual_intra_mean: c.residual_intra_mean,
                outage_rate: c.outage_rate,
                resampled: self.resampled,
            })
            .collect()
    }

    /// Canonical description of the search, for the provenance hash.
    pub fn config_text(&self) -> String {
        let c = &self.cfg;
        format!(
            "grid k={} n={} m={} l={} s={} snr_db={} seed={} drops={} eta_i={:?} eta_d={:?} alpha={:?}\n",
            c.k, c.n, c.m, c.l, c.s, c.snr_db, c.seed, self.drops, GRID_ETA_I, GRID_ETA_D, GRID_ALPHA
        )
    }
}

pub fn grid_params() -> Vec<SeOdiaParams<f64>> {
    let mut v = Vec::new();
    for &a in &GRID_ALPHA {
        for &i in &GRID_ETA_I {
            for &d in &GRID_ETA_D {
                v.push(SeOdiaParams::new(i, d, a).expect("grid values are valid"));
            }
        }
    }
    v
}

/// Evaluates every grid cell on the same drops and receive decisions and
/// reports the cell with the largest mean sum-rate.
pub fn run_tab1_grid(cfg: &NetworkConfig, drops: usize, policy: OutagePolicy, threads: Option<usize>) -> Result<GridReport> {
    let params = grid_params();
    let per_drop = parallel_drops(threads, drops, |d| {
        with_resampling(cfg, d, |drop, _| {
            let decisions = all_decisions(drop)?;
            params
                .iter()
                .enumerate()
                .map(|(c, p)| se_odia_drop(drop, cfg, &decisions, p, policy, selection_seed(cfg.seed, d, c as u64 + 1)))
                .collect::<Result<Vec<_>>>()
        })
    })?;
    let resampled = per_drop.iter().map(|(_, r)| r).sum();
    let cells: Vec<GridCell> = params
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let rates: Vec<f64> = per_drop.iter().map(|(r, _)| r[c].sum_rate).collect();
            let (mean, sem) = mean_sem(&rates);
            let n = drops as f64;
            GridCell {
                params: *p,
                sum_rate_mean: mean,
                sum_rate_sem: sem,
                sum_interference_mean: per_drop.iter().map(|(r, _)| r[c].sum_interference).sum::<f64>() / n,
                residual_intra_mean: per_drop.iter().map(|(r, _)| r[c].residual_intra).sum::<f64>() / n,
                outage_rate: per_drop.iter().map(|(r, _)| r[c].outage_cells).sum::<usize>() as f64 / (n * cfg.k as f64),
            }
        })
        .collect();
    let best = (0..cells.len())
        .max_by(|&a, &b| cells[a].sum_rate_mean.total_cmp(&cells[b].sum_rate_mean).then(b.cmp(&a)))
        .expect("nonempty grid");
    Ok(GridReport {
        cfg: cfg.clone(),
        drops,
        cells,
        best,
        resampled,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// A fast pass over the core invariants on a `K=3, M=4, L=2, S=2` network.
pub fn validate_suite(seed: u64, drops: usize) -> Result<Vec<Check>> {
    let cfg = NetworkConfig::new(3, 10, 4, 2, 2, 20.0, seed);
    let mut checks = Vec::new();

    let mut worst_intra = 0.0f64;
    let mut worst_sinr = 0.0f64;
    for d in 0..drops as u64 {
        let drop = generate_drop::<f64>(&cfg, d)?;
        let (out, pre) = run_odia_cell_selection(&drop, &cfg)?;
        let served: Vec<ServedStream<f64>> = (0..cfg.k)
            .flat_map(|i| (0..cfg.s).map(move |p| (i, p)))
            .map(|(i, p)| ServedStream {
                cell: i,
                user: out.selected[i][p],
                stream: p,
                u: out.decisions[i][p].u.clone(),
            })
            .collect();
        let w: Vec<_> = pre.iter().map(|p| &p.w).collect();
        let r = compute_rates(&drop, &w, &served, cfg.s, cfg.snr())?;
        worst_intra = worst_intra.max(r.max_relative_intra());
        for (idx, st) in served.iter().enumerate() {
            let clean = pre[st.cell].gamma[st.stream] / cfg.s as f64 / (cfg.noise_power() + inter_power(&drop, &pre, st)?);
            worst_sinr = worst_sinr.max((clean - r.sinr[idx]).abs() / r.sinr[idx]);
        }
    }
    checks.push(Check {
        name: "zero-forcing removes intra-cell interference",
        passed: worst_intra < 1e-15,
        detail: format!("max intra/desired {worst_intra:.3e}"),
    });
    checks.push(Check {
        name: "SINR matches the interference-limited closed form",
        passed: worst_sinr < 1e-10,
        detail: format!("max relative error {worst_sinr:.3e}"),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap = f64::NEG_INFINITY;
    for d in 0..drops.min(50) as u64 {
        let drop = generate_drop::<f64>(&cfg, d)?;
        let dec = all_decisions(&drop)?;
        let g = interference_matrix(&drop, 0, 0)?;
        for _ in 0..200 {
            let u = random_unit_vector(cfg.l, &mut rng);
            worst_gap = worst_gap.max(dec[0][0].eta - norm_sq(&g.mul_vec(&u)?));
        }
    }
    checks.push(Check {
        name: "receive beamformer minimizes leakage",
        passed: worst_gap <= 1e-9,
        detail: format!("largest advantage of a random beamformer {worst_gap:.3e}"),
    });

    let eta = sample_eta(&cfg.clone().with_users(2), 20_000, None)?;
    checks.push(Check {
        name: "leakage metrics are finite and nonnegative",
        passed: eta.iter().all(|x| x.is_finite() && *x >= 0.0),
        detail: format!("{} samples", eta.len()),
    });
    Ok(checks)
}

/// Inter-cell power `(1/S) Σ_{k≠i} Σ_s |uᴴ H_k w_{k,s}|²` at a served user.
fn inter_power(drop: &ChannelDrop<f64>, pre: &[CellPrecoder<f64>], st: &ServedStream<f64>) -> Result<f64> {
    let s = pre[st.cell].w.cols() as f64;
    let mut acc = 0.0;
    for (k, p) in pre.iter().enumerate() {
        if k == st.cell {
            continue;
        }
        for col in 0..p.w.cols() {
            let x = drop.h(k, st.cell, st.user).mul_vec(&p.w.column(col))?;
            acc += inner(&st.u, &x).norm_sqr();
        }
    }
    Ok(acc / s)
}
