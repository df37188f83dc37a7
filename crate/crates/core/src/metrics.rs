//! Rate and interference accounting, slope estimators and goodness-of-fit
//! tests.

use num_complex::Complex;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::channel::ChannelDrop;
use crate::error::{Error, Result};
use crate::matlin::{norm_sq, CMat};
use crate::odia::UserDecision;
use crate::scalar::Scalar;

/// A scheduled user and the stream it receives.
#[derive(Clone, Debug, PartialEq)]
pub struct ServedStream<T> {
    pub cell: usize,
    pub user: usize,
    /// Column of the cell's transmit matrix carrying this user's data.
    pub stream: usize,
    pub u: Vec<Complex<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport<T> {
    /// Linear SINR of each served stream, in input order.
    pub sinr: Vec<T>,
    /// `log₂(1 + SINR)`.
    pub rate: Vec<T>,
    /// Unscaled desired power `|uᴴ H_i W_i[:, j]|²`.
    pub desired: Vec<T>,
    /// Unscaled intra-cell power `Σ_{s≠j} |uᴴ H_i W_i[:, s]|²`.
    pub residual_intra: Vec<T>,
    pub cell_sum_rate: Vec<T>,
    pub sum_rate: T,
    /// `Σ S·SNR·Σ_{k≠i} ‖uᴴ H_k P_k‖²` over served users.
    pub sum_interference: T,
}

impl<T: Scalar> RateReport<T> {
    /// Largest residual intra-cell power relative to the desired power.
    pub fn max_relative_intra(&self) -> T {
        self.residual_intra
            .iter()
            .zip(&self.desired)
            .map(|(r, d)| *r / *d)
            .fold(T::zero(), T::max)
    }
}

/// SINR and rate of every served stream. Each stream is sent with power
/// `1/S`, noise power is `1/SNR`, and every other stream of every cell counts
/// as interference.
pub fn compute_rates<T: Scalar>(
    drop: &ChannelDrop<T>,
    transmit: &[&CMat<T>],
    served: &[ServedStream<T>],
    s: usize,
    snr: T,
) -> Result<RateReport<T>> {
    let k = drop.cells();
    if transmit.len() != k {
        return Err(Error::Dimension(format!("{} transmit matrices for {k} cells", transmit.len())));
    }
    if s == 0 || !(snr > T::zero()) {
        return Err(Error::Domain(format!("need S >= 1 and SNR > 0 (S={s}, SNR={snr})")));
    }
    let per_stream = T::one() / T::of(s as f64);
    let noise = T::one() / snr;
    let n = served.len();
    let mut report = RateReport {
        sinr: Vec::with_capacity(n),
        rate: Vec::with_capacity(n),
        desired: Vec::with_capacity(n),
        residual_intra: Vec::with_capacity(n),
        cell_sum_rate: vec![T::zero(); k],
        sum_rate: T::zero(),
        sum_interference: T::zero(),
    };
    for st in served {
        if st.cell >= k || st.stream >= transmit[st.cell].cols() {
            return Err(Error::Dimension(format!(
                "stream {} of cell {} is not transmitted",
                st.stream, st.cell
            )));
        }
        let mut desired = T::zero();
        let mut intra = T::zero();
        let mut inter = T::zero();
        let mut leak = T::zero();
        for (c, w) in transmit.iter().enumerate() {
            let row = drop.h(c, st.cell, st.user).left_mul_adjoint(&st.u)?;
            let rx = CMat::from_vec(1, row.len(), row)?.matmul(w)?;
            for col in 0..w.cols() {
                let p = rx[(0, col)].norm_sqr();
                if c != st.cell {
                    inter += p;
                } else if col == st.stream {
                    desired = p;
                } else {
                    intra += p;
                }
            }
            if c != st.cell {
                leak += norm_sq(&drop.hp(c, st.cell, st.user).left_mul_adjoint(&st.u)?);
            }
        }
        let sinr = per_stream * desired / (noise + per_stream * (intra + inter));
        let rate = (T::one() + sinr).log2();
        report.cell_sum_rate[st.cell] += rate;
        report.sum_rate += rate;
        report.sum_interference += T::of(s as f64) * snr * leak;
        report.sinr.push(sinr);
        report.rate.push(rate);
        report.desired.push(desired);
        report.residual_intra.push(intra);
    }
    Ok(report)
}

/// `S · SNR · Σ η` over the selected users.
pub fn sum_interference<T: Scalar>(decisions: &[&UserDecision<T>], s: usize, snr: T) -> T {
    T::of(s as f64) * snr * decisions.iter().map(|d| d.eta).sum::<T>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Abscissae the line was fitted on (after any transform).
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SlopeEstimate {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<SlopeEstimate> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} abscissae, {} ordinates", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeEstimate {
        slope,
        intercept,
        r_squared,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

/// Least-squares slope of `ln y` against `ln x`; needs at least three
/// positive points.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeEstimate> {
    if points.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: points.len() });
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive values, got {p:?}")));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    fit_linear(&x, &y)
}

/// Slope of mean sum-rate against `log₂ SNR` between the two highest SNR
/// points (`snr_db` ascending).
pub fn dof_slope(snr_db: &[f64], rate: &[f64]) -> Result<f64> {
    if snr_db.len() != rate.len() || snr_db.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: snr_db.len().min(rate.len()) });
    }
    let n = snr_db.len();
    let log2 = |db: f64| db / 10.0 * 10f64.log2();
    Ok((rate[n - 1] - rate[n - 2]) / (log2(snr_db[n - 1]) - log2(snr_db[n - 2])))
}

/// Empirical slope of `ln F(x)` against `ln x` in the lower tail, from the
/// sample quantiles at `q ∈ [q_lo, q_hi]` (log-spaced).
pub fn cdf_tail_slope(samples: &[f64], q_lo: f64, q_hi: f64, points: usize) -> Result<SlopeEstimate> {
    if !(q_lo > 0.0 && q_lo < q_hi && q_hi < 1.0) || points < 3 {
        return Err(Error::Domain(format!("bad quantile range [{q_lo}, {q_hi}] x {points}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let needed = (10.0 / q_lo).ceil() as usize;
    if n < needed {
        return Err(Error::TooFewSamples { needed, got: n });
    }
    let pts: Vec<(f64, f64)> = (0..points)
        .map(|t| {
            let q = q_lo * (q_hi / q_lo).powf(t as f64 / (points - 1) as f64);
            let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
            (sorted[idx], (idx + 1) as f64 / n as f64)
        })
        .collect();
    fit_loglog_slope(&pts)
}

/// Two-sided KS statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value of statistic `d` with `n` samples
/// (Stephens' small-sample correction of the argument).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// KS test of `samples` against `χ²(dof)`; returns the p-value.
pub fn ks_test_chi_square(samples: &[f64], dof: u32) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples { needed: 100, got: samples.len() });
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let d = ks_statistic(samples, |x| dist.cdf(x));
    Ok(ks_p_value(d, samples.len()))
}

/// Mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, NetworkConfig};
    use crate::matlin::{inner, random_unit_vector, OrthonormalBasis};
    use crate::odia::run_odia_cell_selection;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared as ChiSq, Distribution};

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    fn served_odia(drop: &ChannelDrop<f64>, cfg: &NetworkConfig) -> (Vec<CMat<f64>>, Vec<ServedStream<f64>>, Vec<UserDecision<f64>>) {
        let (out, pre) = run_odia_cell_selection(drop, cfg).unwrap();
        let mut served = Vec::new();
        let mut decs = Vec::new();
        for i in 0..drop.cells() {
            for (pos, &j) in out.selected[i].iter().enumerate() {
                served.push(ServedStream {
                    cell: i,
                    user: j,
                    stream: pos,
                    u: out.decisions[i][pos].u.clone(),
                });
                decs.push(out.decisions[i][pos].clone());
            }
        }
        (pre.into_iter().map(|p| p.w).collect(), served, decs)
    }

    #[test]
    fn interference_free_link() {
        // two cells whose cross links are zero
        let e = |m: usize| OrthonormalBasis::new(CMat::from_fn(m, 1, |r, _| c(if r == 0 { 1.0 } else { 0.0 })), 0).unwrap();
        let own = CMat::from_rows(&[vec![c(1.0), c(0.0)]]).unwrap();
        let zero = CMat::zeros(1, 2);
        let h = vec![vec![vec![own.clone(), zero.clone()]], vec![vec![zero, own]]];
        let drop = ChannelDrop::from_parts(h, vec![e(2), e(2)], 0).unwrap();
        let w = e(2).matrix().clone();
        let served = vec![ServedStream { cell: 0, user: 0, stream: 0, u: vec![c(1.0)] }];
        let r = compute_rates(&drop, &[&w, &w], &served, 1, 10.0).unwrap();
        assert!((r.rate[0] - 11f64.log2()).abs() < 1e-12);
        assert_eq!(r.sum_interference, 0.0);
    }

    #[test]
    fn zero_forcing_reduces_to_clean_sinr() {
        let cfg = NetworkConfig::new(3, 10, 4, 2, 2, 20.0, 2);
        for d in 0..200 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let (w, served, decs) = served_odia(&drop, &cfg);
            let wr: Vec<&CMat<f64>> = w.iter().collect();
            let r = compute_rates(&drop, &wr, &served, 2, cfg.snr()).unwrap();
            assert!(r.max_relative_intra() < 1e-15);
            let refs: Vec<&UserDecision<f64>> = decs.iter().collect();
            let si = sum_interference(&refs, 2, cfg.snr());
            assert!((si - r.sum_interference).abs() < 1e-9 * si.max(1.0));
            let total: f64 = r.cell_sum_rate.iter().sum();
            assert!((total - r.sum_rate).abs() < 1e-9);
            for (x, y) in r.sinr.iter().zip(&r.rate) {
                assert!(((1.0 + x).log2() - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinr_matches_term_enumeration() {
        let cfg = NetworkConfig::new(3, 3, 4, 2, 2, 10.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 0..1000 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let w: Vec<CMat<f64>> = (0..3).map(|k| drop.reference_basis(k).matrix().clone()).collect();
            let served: Vec<ServedStream<f64>> = (0..3)
                .flat_map(|i| (0..2).map(move |m| (i, m)))
                .map(|(i, m)| ServedStream { cell: i, user: m, stream: m, u: random_unit_vector(2, &mut rng) })
                .collect();
            let wr: Vec<&CMat<f64>> = w.iter().collect();
            let r = compute_rates(&drop, &wr, &served, 2, cfg.snr()).unwrap();
            for (idx, st) in served.iter().enumerate() {
                let mut sig = 0.0;
                let mut interf = 0.0;
                for k in 0..3 {
                    let h = drop.h(k, st.cell, st.user);
                    for col in 0..2 {
                        let x = h.mul_vec(&w[k].column(col)).unwrap();
                        let p = inner(&st.u, &x).norm_sqr() / 2.0;
                        if k == st.cell && col == st.stream {
                            sig = p;
                        } else {
                            interf += p;
                        }
                    }
                }
                let want = sig / (1.0 / cfg.snr() + interf);
                assert!((r.sinr[idx] - want).abs() < 1e-10 * want);
            }
        }
    }

    #[test]
    fn sum_interference_arithmetic() {
        let dec = |eta: f64| UserDecision { u: vec![c(1.0)], eta, eta_per_cell: vec![eta], f: vec![c(1.0)], f_gain: 1.0 };
        let (a, b) = (dec(0.01), dec(0.01));
        assert!((sum_interference(&[&a, &b], 1, 100.0) - 2.0).abs() < 1e-12);
        let z = dec(0.0);
        assert_eq!(sum_interference(&[&z], 2, 100.0), 0.0);
    }

    #[test]
    fn slopes_of_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 10.0].iter().map(|&x: &f64| (x, x.powi(3))).collect();
        assert!((fit_loglog_slope(&pts).unwrap().slope - 3.0).abs() < 1e-9);
        let flat: Vec<(f64, f64)> = [1.0, 2.0, 5.0].iter().map(|&x| (x, 5.0)).collect();
        assert!(fit_loglog_slope(&flat).unwrap().slope.abs() < 1e-12);
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(Error::Domain(_))));
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn dof_of_ideal_rates() {
        let db = [20.0, 30.0, 40.0];
        let rate: Vec<f64> = db.iter().map(|d| 4.0 * (d / 10.0 * 10f64.log2()) + 1.0).collect();
        assert!((dof_slope(&db, &rate).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chi4 = ChiSq::new(4.0).unwrap();
        let mut pass = 0;
        for _ in 0..100 {
            let xs: Vec<f64> = (0..10_000).map(|_| chi4.sample(&mut rng)).collect();
            if ks_test_chi_square(&xs, 4).unwrap() > 0.01 {
                pass += 1;
            }
        }
        assert!(pass >= 97, "{pass}/100");
        let chi2 = ChiSq::new(2.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| chi2.sample(&mut rng)).collect();
        assert!(ks_test_chi_square(&xs, 4).unwrap() < 0.01);
        assert!(matches!(ks_test_chi_square(&xs[..50], 4), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov distribution: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((ks_p_value(1.3581 / 1e4, 100_000_000) - 0.05).abs() < 1e-3);
        assert!((ks_p_value(1.6276 / 1e4, 100_000_000) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn tail_slope_of_power_law_samples() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // F(x) = x³ on [0, 1]
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>().powf(1.0 / 3.0)).collect();
        let fit = cdf_tail_slope(&xs, 1e-4, 1e-2, 9).unwrap();
        assert!((fit.slope - 3.0).abs() < 0.15, "{}", fit.slope);
    }

    #[test]
    fn mean_and_sem() {
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
