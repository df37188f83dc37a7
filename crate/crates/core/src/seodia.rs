//! Spectrally efficient ODIA: threshold-gated semiorthogonal user selection.
//!
//! At step `s` a user is a candidate when its leakage is at most `η_I` and the
//! part of its effective channel orthogonal to the already selected
//! directions has energy at least `η_D`. One candidate is drawn uniformly at
//! random; the next pool keeps only users that are nearly orthogonal (within
//! `α`) to the new direction.

use std::str::FromStr;

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matlin::{inner, norm_sq};
use crate::odia::UserDecision;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeOdiaParams<T> {
    pub eta_i: T,
    pub eta_d: T,
    pub alpha: T,
}

impl<T: Scalar> SeOdiaParams<T> {
    pub fn new(eta_i: T, eta_d: T, alpha: T) -> Result<Self> {
        if eta_i.is_nan() || eta_i < T::zero() || eta_d.is_nan() || eta_d < T::zero() {
            return Err(Error::Domain(format!(
                "thresholds must be nonnegative (eta_i={eta_i}, eta_d={eta_d})"
            )));
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(SeOdiaParams { eta_i, eta_d, alpha })
    }

    /// The named parameter sets optimized for `K=3, M=4, L=2, S=2`.
    pub fn preset(name: &str) -> Result<Self> {
        let (i, d, a) = match name {
            "tab1_snr3_n20" => (2.5, 2.5, 0.8),
            "tab1_snr3_n50" => (2.0, 2.5, 0.8),
            "tab1_snr21_n20" => (1.5, 2.0, 0.8),
            "tab1_snr21_n50" => (1.0, 2.0, 0.8),
            other => return Err(Error::Config(format!("unknown SE-ODIA preset '{other}'"))),
        };
        Self::new(T::of(i), T::of(d), T::of(a))
    }

    /// Preset for the nearest tabulated operating point (SNR 3 or 21 dB,
    /// N 20 or 50).
    pub fn nearest_preset(snr_db: f64, n: usize) -> Self {
        let snr = if (snr_db - 3.0).abs() <= (snr_db - 21.0).abs() { 3 } else { 21 };
        let n = if n.abs_diff(20) <= n.abs_diff(50) { 20 } else { 50 };
        Self::preset(&format!("tab1_snr{snr}_n{n}")).expect("tabulated preset")
    }
}

pub const PRESET_NAMES: [&str; 4] = ["tab1_snr3_n20", "tab1_snr3_n50", "tab1_snr21_n20", "tab1_snr21_n50"];

/// `η_I = ε_I / SNR` (linear SNR).
pub fn eta_i_inverse_snr(eps_i: f64, snr: f64) -> f64 {
    eps_i / snr
}

/// `η_D = ε_D · ln SNR` (linear SNR).
pub fn eta_d_log_snr(eps_d: f64, snr: f64) -> f64 {
    eps_d * snr.ln()
}

/// `η_D = ε_D · ln N`.
pub fn eta_d_log_users(eps_d: f64, n: usize) -> f64 {
    eps_d * (n as f64).ln()
}

/// What a cell transmits after a scheduling outage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutagePolicy {
    /// Serve the users selected before the outage.
    #[default]
    Partial,
    /// Keep the whole cell silent.
    SkipCell,
}

impl FromStr for OutagePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "partial" => Ok(OutagePolicy::Partial),
            "skip_cell" => Ok(OutagePolicy::SkipCell),
            other => Err(Error::Config(format!("unknown outage_policy '{other}'"))),
        }
    }
}

/// Anything that carries an effective channel and a leakage metric.
pub trait Candidate<T> {
    fn effective_channel(&self) -> &[Complex<T>];
    fn leakage(&self) -> T;
}

impl<T: Scalar> Candidate<T> for UserDecision<T> {
    fn effective_channel(&self) -> &[Complex<T>] {
        &self.f
    }

    fn leakage(&self) -> T {
        self.eta
    }
}

impl<T: Scalar> Candidate<T> for (Vec<Complex<T>>, T) {
    fn effective_channel(&self) -> &[Complex<T>] {
        &self.0
    }

    fn leakage(&self) -> T {
        self.1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeOdiaOutcome<T> {
    /// `π(1), π(2), …` in selection order; shorter than `S` on outage.
    pub selected: Vec<usize>,
    /// `b_s` of each selected user.
    pub projections: Vec<Vec<Complex<T>>>,
    /// `|N_s|` for every step that was attempted.
    pub pool_sizes: Vec<usize>,
    pub outage: bool,
}

/// `f − Σ (bᴴf / ‖b‖²) b` over the given basis.
///
/// The basis is expected to be mutually orthogonal, as the `b_s` of a
/// selection are.
pub fn orthogonal_projection_residual<T: Scalar>(f: &[Complex<T>], basis: &[Vec<Complex<T>>]) -> Result<Vec<Complex<T>>> {
    let mut out = f.to_vec();
    for b in basis {
        if b.len() != f.len() {
            return Err(Error::Dimension(format!("basis vector of length {} for f of length {}", b.len(), f.len())));
        }
        let nb = norm_sq(b);
        if !(nb > T::zero()) {
            return Err(Error::Degenerate("zero projection basis vector".into()));
        }
        let coef = inner(b, f) / nb;
        for (o, bv) in out.iter_mut().zip(b) {
            *o -= bv * coef;
        }
    }
    Ok(out)
}

/// Steps 1–4 for one cell with `s` streams.
pub fn se_odia_select<T, C, R>(users: &[C], s: usize, params: &SeOdiaParams<T>, rng: &mut R) -> Result<SeOdiaOutcome<T>>
where
    T: Scalar,
    C: Candidate<T>,
    R: Rng + ?Sized,
{
    if users.len() < s {
        return Err(Error::Config(format!("cannot select {s} users out of {}", users.len())));
    }
    let mut pool: Vec<usize> = (0..users.len()).collect();
    let mut out = SeOdiaOutcome {
        selected: Vec::with_capacity(s),
        projections: Vec::with_capacity(s),
        pool_sizes: Vec::with_capacity(s),
        outage: false,
    };
    for step in 0..s {
        out.pool_sizes.push(pool.len());
        let mut candidates = Vec::new();
        let mut residuals = Vec::new();
        for &j in &pool {
            let u = &users[j];
            if u.leakage() > params.eta_i {
                continue;
            }
            let r = orthogonal_projection_residual(u.effective_channel(), &out.projections)?;
            if norm_sq(&r) >= params.eta_d {
                candidates.push(j);
                residuals.push(r);
            }
        }
        if candidates.is_empty() {
            out.outage = true;
            break;
        }
        let pick = rng.random_range(0..candidates.len());
        let chosen = candidates[pick];
        let b = residuals.swap_remove(pick);
        out.selected.push(chosen);

        if step + 1 < s {
            let nb = norm_sq(&b).sqrt();
            pool.retain(|&j| {
                if j == chosen {
                    return false;
                }
                let f = users[j].effective_channel();
                let nf = norm_sq(f).sqrt();
                nf > T::zero() && inner(f, &b).norm() < params.alpha * nf * nb
            });
        }
        out.projections.push(b);
    }
    Ok(out)
}

/// `‖b‖² / (1 + (S−1)⁴α² / (1 − (S−1)α²))`, the guaranteed effective gain of
/// a stream after zero-forcing on an `α`-semiorthogonal selection.
pub fn effective_gain_lower_bound<T: Scalar>(b_norm_sq: T, s: usize, alpha: T) -> Result<T> {
    let sm1 = T::of((s.max(1) - 1) as f64);
    let a2 = alpha * alpha;
    let denom = T::one() - sm1 * a2;
    if denom <= T::zero() {
        return Err(Error::Domain(format!(
            "(S-1)·alpha² = {} leaves no guaranteed gain",
            sm1 * a2
        )));
    }
    Ok(b_norm_sq / (T::one() + sm1.powi(4) * a2 / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, NetworkConfig};
    use crate::matlin::complex_normal;
    use crate::odia::{all_decisions, effective_channel_matrix, zf_precoder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn residual_cases() {
        let f = vec![c(1.0, 2.0), c(-0.5, 0.3)];
        assert_eq!(orthogonal_projection_residual(&f, &[]).unwrap(), f);

        let b = vec![vec![c(0.0, 0.0), c(0.0, 0.0), c(2.0, 1.0)]];
        let g = vec![c(1.0, -1.0), c(0.4, 0.0), c(0.0, 0.0)];
        let r = orthogonal_projection_residual(&g, &b).unwrap();
        for (a, e) in r.iter().zip(&g) {
            assert!((a - e).norm() < 1e-12);
        }

        let basis = vec![vec![c(1.0, 0.0), c(1.0, 1.0)]];
        let inside: Vec<_> = basis[0].iter().map(|z| z * c(0.3, -2.0)).collect();
        let r = orthogonal_projection_residual(&inside, &basis).unwrap();
        assert!(norm_sq(&r).sqrt() < 1e-10 * norm_sq(&inside).sqrt());

        let zero = vec![vec![c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(matches!(orthogonal_projection_residual(&f, &zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn residual_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v1: Vec<Complex<f64>> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let v2: Vec<Complex<f64>> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let b2 = orthogonal_projection_residual(&v2, &[v1.clone()]).unwrap();
            let basis = vec![v1, b2];
            let f: Vec<Complex<f64>> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let r = orthogonal_projection_residual(&f, &basis).unwrap();
            for b in &basis {
                assert!(inner(b, &r).norm() < 1e-10 * norm_sq(&f).sqrt() * norm_sq(b).sqrt());
            }
        }
    }

    #[test]
    fn gain_bound_arithmetic() {
        assert_eq!(effective_gain_lower_bound(2.0, 1, 0.9).unwrap(), 2.0);
        assert_eq!(effective_gain_lower_bound(3.0, 2, 0.0).unwrap(), 3.0);
        assert!((effective_gain_lower_bound(1.0f64, 2, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(effective_gain_lower_bound(1.0, 2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(effective_gain_lower_bound(1.0, 3, 0.8), Err(Error::Domain(_))));
    }

    #[test]
    fn params_are_checked() {
        assert!(SeOdiaParams::new(1.0, 1.0, 0.0).is_err());
        assert!(SeOdiaParams::new(-1.0, 1.0, 0.5).is_err());
        assert!(SeOdiaParams::new(1.0, 1.0, 1.0).is_ok());
        let p = SeOdiaParams::<f64>::preset("tab1_snr21_n50").unwrap();
        assert_eq!((p.eta_i, p.eta_d, p.alpha), (1.0, 2.0, 0.8));
        assert_eq!(SeOdiaParams::<f64>::nearest_preset(20.0, 20), SeOdiaParams::preset("tab1_snr21_n20").unwrap());
        assert!(SeOdiaParams::<f64>::preset("nope").is_err());
    }

    #[test]
    fn first_step_matches_odia_pick() {
        let cfg = NetworkConfig::new(3, 12, 4, 2, 2, 20.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 0..50 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let dec = all_decisions(&drop).unwrap();
            for cell in &dec {
                let (best, min_eta) = cell
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (j, x)| if x.eta < acc.1 { (j, x.eta) } else { acc });
                let params = SeOdiaParams::new(min_eta, 0.0, 1.0).unwrap();
                let out = se_odia_select(cell, 2, &params, &mut rng).unwrap();
                assert_eq!(out.selected[0], best);
            }
        }
    }

    #[test]
    fn infinite_gain_floor_is_outage() {
        let users = vec![(vec![c(1.0, 0.0), c(0.0, 1.0)], 0.0); 4];
        let params = SeOdiaParams::new(f64::INFINITY, f64::INFINITY, 0.8).unwrap();
        let out = se_odia_select(&users, 2, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.outage);
        assert!(out.selected.is_empty());
        assert_eq!(out.pool_sizes, vec![4]);
    }

    #[test]
    fn too_few_users_is_a_config_error() {
        let users = vec![(vec![c(1.0, 0.0)], 0.0)];
        let params = SeOdiaParams::new(1.0, 0.0, 0.8).unwrap();
        assert!(se_odia_select(&users, 2, &params, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn selections_are_semiorthogonal_and_keep_their_gain() {
        let cfg = NetworkConfig::new(3, 20, 4, 2, 2, 20.0, 9);
        let params = SeOdiaParams::new(f64::INFINITY, 0.0, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        for d in 0..1000 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let dec = all_decisions(&drop).unwrap();
            for (i, cell) in dec.iter().enumerate() {
                let out = se_odia_select(cell, 2, &params, &mut rng).unwrap();
                assert!(out.pool_sizes.windows(2).all(|w| w[1] + 1 <= w[0]));
                if out.outage {
                    continue;
                }
                for (s, &j) in out.selected.iter().enumerate() {
                    let f = &cell[j].f;
                    for b in &out.projections[..s] {
                        let cos = inner(f, b).norm() / (norm_sq(f) * norm_sq(b)).sqrt();
                        assert!(cos < 0.6);
                    }
                }
                let fs: Vec<&[Complex<f64>]> = out.selected.iter().map(|&j| cell[j].f.as_slice()).collect();
                let pc = zf_precoder(&effective_channel_matrix(&fs).unwrap(), drop.reference_basis(i), i).unwrap();
                for (s, b) in out.projections.iter().enumerate() {
                    let bound = effective_gain_lower_bound(norm_sq(b), 2, 0.6).unwrap();
                    assert!(pc.gamma[s] > bound, "gamma {} bound {}", pc.gamma[s], bound);
                }
                checked += 1;
            }
        }
        assert!(checked > 2500);
    }
}
