//! Opportunistic downlink interference alignment.
//!
//! Each user picks the receive beamformer that minimizes the interference
//! it sees from the other cells' reference subspaces, reports that leakage
//! as its scheduling metric together with its effective desired channel, and
//! each base station serves the `S` users with the smallest leakage through
//! a zero-forcing precoder built on top of its reference basis.

use num_complex::Complex;

use crate::channel::{ChannelDrop, NetworkConfig};
use crate::error::{Error, Result};
use crate::matlin::{invert_square, norm_sq, smallest_singular_pair, CMat, OrthonormalBasis};
use crate::scalar::Scalar;

/// What a user reports after receive beamforming.
#[derive(Clone, Debug, PartialEq)]
pub struct UserDecision<T> {
    /// Unit-norm receive beamformer (length `L`).
    pub u: Vec<Complex<T>>,
    /// Total leakage `Σ_k eta_per_cell[k]`.
    pub eta: T,
    /// Leakage from each other cell, in increasing cell order with the home
    /// cell skipped (`K−1` entries).
    pub eta_per_cell: Vec<T>,
    /// Effective desired channel `(uᴴ H_i P_i)ᴴ` (length `S`).
    pub f: Vec<Complex<T>>,
    /// `‖f‖²`.
    pub f_gain: T,
}

/// A cell's user-specific precoder and its composite transmit matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPrecoder<T> {
    /// `S×n` user-specific precoder (`n` served streams, `n = S` unless a
    /// scheduler ran out of candidates).
    pub v: CMat<T>,
    /// Per-stream effective gains.
    pub gamma: Vec<T>,
    /// `M×n` composite transmit matrix `P·V`; every column has unit norm.
    pub w: CMat<T>,
    pub cell: usize,
}

impl<T: Scalar> CellPrecoder<T> {
    pub fn streams(&self) -> usize {
        self.w.cols()
    }
}

/// Users picked in every cell, in selection order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleOutcome<T> {
    pub selected: Vec<Vec<usize>>,
    /// `decisions[i][p]` belongs to user `selected[i][p]`.
    pub decisions: Vec<Vec<UserDecision<T>>>,
    pub outage: bool,
}

/// The augmented interference matrix of user `(i, j)`: `(H_k P_k)ᴴ` stacked
/// over `k ≠ i`, shape `(K−1)S × L`.
pub fn interference_matrix<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize) -> Result<CMat<T>> {
    let blocks: Vec<CMat<T>> = (0..drop.cells())
        .filter(|&k| k != i)
        .map(|k| drop.hp(k, i, j).adjoint())
        .collect();
    CMat::vstack(&blocks)
}

/// Leakage-minimizing receive beamformer of user `j` in cell `i`.
pub fn receive_beamformer<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize) -> Result<UserDecision<T>> {
    if i >= drop.cells() || j >= drop.users_per_cell() {
        return Err(Error::Dimension(format!("no user ({i}, {j}) in this drop")));
    }
    let g = interference_matrix(drop, i, j)?;
    let u = smallest_singular_pair(&g)?.q;

    // eta is evaluated as ‖G u‖² through its per-cell parts, which equals
    // σ_min² to rounding and keeps the decomposition exact.
    let eta_per_cell: Vec<T> = (0..drop.cells())
        .filter(|&k| k != i)
        .map(|k| drop.hp(k, i, j).left_mul_adjoint(&u).map(|r| norm_sq(&r)))
        .collect::<Result<_>>()?;
    let eta = eta_per_cell.iter().copied().sum();

    let f: Vec<Complex<T>> = drop
        .hp(i, i, j)
        .left_mul_adjoint(&u)?
        .into_iter()
        .map(|z| z.conj())
        .collect();
    let f_gain = norm_sq(&f);
    Ok(UserDecision {
        u,
        eta,
        eta_per_cell,
        f,
        f_gain,
    })
}

/// Decisions of every user, indexed `[cell][user]`.
pub fn all_decisions<T: Scalar>(drop: &ChannelDrop<T>) -> Result<Vec<Vec<UserDecision<T>>>> {
    (0..drop.cells())
        .map(|i| {
            (0..drop.users_per_cell())
                .map(|j| receive_beamformer(drop, i, j))
                .collect()
        })
        .collect()
}

/// Indices of the `s` smallest metrics, ascending by metric, ties to the
/// lower index.
pub fn select_users_odia<T: Scalar>(metrics: &[T], s: usize) -> Result<Vec<usize>> {
    if metrics.len() < s {
        return Err(Error::Config(format!(
            "cannot select {s} users out of {}",
            metrics.len()
        )));
    }
    let mut idx: Vec<usize> = (0..metrics.len()).collect();
    idx.sort_by(|&a, &b| {
        metrics[a]
            .partial_cmp(&metrics[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(s);
    Ok(idx)
}

/// Stacks effective channels as rows `fᴴ`.
pub fn effective_channel_matrix<T: Scalar>(fs: &[&[Complex<T>]]) -> Result<CMat<T>> {
    let rows: Vec<Vec<Complex<T>>> = fs.iter().map(|f| f.iter().map(|z| z.conj()).collect()).collect();
    CMat::from_rows(&rows)
}

/// Zero-forcing precoder for the effective channel `F` (rows `fᴴ`, `n×S`
/// with `n ≤ S`) on top of reference basis `P`.
///
/// With `W₀ = F⁻¹` (right pseudo-inverse when `n < S`) and columns `w_j`,
/// `γ_j = 1/‖P w_j‖²` and `v_j = √γ_j · w_j`, so `F·V = diag(√γ)` and
/// every stream is sent with unit power.
pub fn zf_precoder<T: Scalar>(f: &CMat<T>, p: &OrthonormalBasis<T>, cell: usize) -> Result<CellPrecoder<T>> {
    let s = p.dim();
    if f.rows() > s || (f.rows() > 0 && f.cols() != s) {
        return Err(Error::Dimension(format!(
            "effective channel is {}x{} for S={s}",
            f.rows(),
            f.cols()
        )));
    }
    let degenerate = |e: Error| match e {
        Error::Singular { cond } => Error::Degenerate(format!("singular effective channel (cond {cond:.3e})")),
        other => other,
    };
    let w0 = if f.rows() == s {
        invert_square(f).map_err(degenerate)?
    } else if f.rows() == 0 {
        CMat::zeros(s, 0)
    } else {
        let fh = f.adjoint();
        let inner = f.matmul(&fh)?;
        fh.matmul(&invert_square(&inner).map_err(degenerate)?)?
    };
    let pw = p.matrix().matmul(&w0)?;
    let gamma: Vec<T> = (0..w0.cols())
        .map(|j| T::one() / norm_sq(&pw.column(j)))
        .collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Degenerate("zero-norm precoder column".into()));
    }
    let scale: Vec<T> = gamma.iter().map(|g| g.sqrt()).collect();
    Ok(CellPrecoder {
        v: w0.scale_columns(&scale),
        gamma,
        w: pw.scale_columns(&scale),
        cell,
    })
}

/// Selection and precoding from precomputed decisions (`[cell][user]`).
pub fn schedule_from_decisions<T: Scalar>(
    drop: &ChannelDrop<T>,
    decisions: &[Vec<UserDecision<T>>],
    s: usize,
) -> Result<(ScheduleOutcome<T>, Vec<CellPrecoder<T>>)> {
    let mut selected = Vec::with_capacity(decisions.len());
    let mut chosen = Vec::with_capacity(decisions.len());
    let mut precoders = Vec::with_capacity(decisions.len());
    for (i, cell) in decisions.iter().enumerate() {
        let etas: Vec<T> = cell.iter().map(|d| d.eta).collect();
        let picks = select_users_odia(&etas, s)?;
        let fs: Vec<&[Complex<T>]> = picks.iter().map(|&j| cell[j].f.as_slice()).collect();
        let f = effective_channel_matrix(&fs)?;
        precoders.push(zf_precoder(&f, drop.reference_basis(i), i)?);
        chosen.push(picks.iter().map(|&j| cell[j].clone()).collect());
        selected.push(picks);
    }
    Ok((
        ScheduleOutcome {
            selected,
            decisions: chosen,
            outage: false,
        },
        precoders,
    ))
}

/// Full ODIA scheduling round for one drop: receive beamforming at every
/// user, selection of the `S` least-leaking users per cell and ZF precoding.
pub fn run_odia_cell_selection<T: Scalar>(
    drop: &ChannelDrop<T>,
    cfg: &NetworkConfig,
) -> Result<(ScheduleOutcome<T>, Vec<CellPrecoder<T>>)> {
    let decisions = all_decisions(drop)?;
    schedule_from_decisions(drop, &decisions, cfg.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_drop;
    use crate::matlin::{complex_normal, inner, random_orthonormal_basis, random_unit_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: usize, n: usize, m: usize, l: usize, s: usize) -> NetworkConfig {
        NetworkConfig::new(k, n, m, l, s, 20.0, 31)
    }

    #[test]
    fn perfect_nulling_when_antennas_suffice() {
        let c = cfg(2, 4, 3, 2, 1);
        for d in 0..20 {
            let drop = generate_drop::<f64>(&c, d).unwrap();
            for i in 0..2 {
                for j in 0..4 {
                    let dec = receive_beamformer(&drop, i, j).unwrap();
                    assert!(dec.eta < 1e-20, "eta {}", dec.eta);
                    let leak = drop.hp(1 - i, i, j).left_mul_adjoint(&dec.u).unwrap();
                    assert!(norm_sq(&leak).sqrt() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn decision_invariants() {
        let c = cfg(3, 5, 4, 2, 2);
        let drop = generate_drop::<f64>(&c, 3).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let d = receive_beamformer(&drop, i, j).unwrap();
                assert!((norm_sq(&d.u) - 1.0).abs() < 1e-12);
                assert_eq!(d.eta_per_cell.len(), 2);
                assert!((d.eta - d.eta_per_cell.iter().sum::<f64>()).abs() < 1e-10);
                let sp = smallest_singular_pair(&interference_matrix(&drop, i, j).unwrap()).unwrap();
                assert!((d.eta - sp.sigma_min.powi(2)).abs() < 1e-10);
                let expect: Vec<_> = drop.hp(i, i, j).adjoint().mul_vec(&d.u).unwrap();
                for (a, b) in expect.iter().zip(&d.f) {
                    assert!((a - b).norm() < 1e-14);
                }
                assert!((d.f_gain - norm_sq(&d.f)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn beamformer_is_minimal_against_random_directions() {
        let c = cfg(3, 3, 4, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in 0..10 {
            let drop = generate_drop::<f64>(&c, d).unwrap();
            let g = interference_matrix(&drop, 1, 2).unwrap();
            let dec = receive_beamformer(&drop, 1, 2).unwrap();
            for _ in 0..1000 {
                let u = random_unit_vector(2, &mut rng);
                assert!(dec.eta <= norm_sq(&g.mul_vec(&u).unwrap()) + 1e-9);
            }
        }
    }

    #[test]
    fn out_of_range_user_is_an_error() {
        let drop = generate_drop::<f64>(&cfg(2, 2, 2, 1, 1), 0).unwrap();
        assert!(receive_beamformer(&drop, 0, 5).is_err());
    }

    #[test]
    fn selection_order_statistics() {
        assert_eq!(select_users_odia(&[0.3, 0.1, 0.2], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_users_odia(&[0.5, 0.5, 0.5], 2).unwrap(), vec![0, 1]);
        assert!(matches!(select_users_odia(&[0.1], 2), Err(Error::Config(_))));
    }

    #[test]
    fn selection_matches_full_sort() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let n = rng.random_range(2..12);
            let s = rng.random_range(1..=n);
            let metrics: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let picks = select_users_odia(&metrics, s).unwrap();
            let mut sorted = metrics.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got: Vec<f64> = picks.iter().map(|&j| metrics[j]).collect();
            assert_eq!(got, sorted[..s].to_vec());
        }
    }

    #[test]
    fn scalar_zf_precoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: OrthonormalBasis<f64> = random_orthonormal_basis(3, 1, &mut rng).unwrap();
        let f = CMat::from_rows(&[vec![Complex::new(2.0, 0.0)]]).unwrap();
        let pc = zf_precoder(&f, &p, 0).unwrap();
        assert!((pc.gamma[0] - 4.0).abs() < 1e-12);
        assert!((pc.v[(0, 0)] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        let fv = f.matmul(&pc.v).unwrap();
        assert!((fv[(0, 0)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_gives_identity_precoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: OrthonormalBasis<f64> = random_orthonormal_basis(4, 2, &mut rng).unwrap();
        let pc = zf_precoder(&CMat::identity(2), &p, 0).unwrap();
        assert!(pc.v.max_abs_diff(&CMat::identity(2)) < 1e-12);
        assert!((pc.gamma[0] - 1.0).abs() < 1e-12 && (pc.gamma[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_zf_diagonalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let p: OrthonormalBasis<f64> = random_orthonormal_basis(4, 2, &mut rng).unwrap();
            let f = CMat::from_fn(2, 2, |_, _| complex_normal(&mut rng));
            let pc = zf_precoder(&f, &p, 0).unwrap();
            let fv = f.matmul(&pc.v).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    if a == b {
                        assert!((fv[(a, a)] - Complex::new(pc.gamma[a].sqrt(), 0.0)).norm() < 1e-9);
                    } else {
                        assert!(fv[(a, b)].norm() < 1e-10);
                    }
                }
                assert!((norm_sq(&pc.w.column(a)) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn partial_rank_precoder_uses_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p: OrthonormalBasis<f64> = random_orthonormal_basis(4, 3, &mut rng).unwrap();
        let f = CMat::from_fn(2, 3, |_, _| complex_normal(&mut rng));
        let pc = zf_precoder(&f, &p, 0).unwrap();
        assert_eq!(pc.streams(), 2);
        let fv = f.matmul(&pc.v).unwrap();
        assert!(fv[(0, 1)].norm() < 1e-10 && fv[(1, 0)].norm() < 1e-10);
        assert!((fv[(1, 1)].re - pc.gamma[1].sqrt()).abs() < 1e-9);
    }

    #[test]
    fn singular_channel_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: OrthonormalBasis<f64> = random_orthonormal_basis(3, 2, &mut rng).unwrap();
        let row = vec![Complex::new(1.0, 0.5), Complex::new(-0.3, 0.2)];
        let f = CMat::from_rows(&[row.clone(), row]).unwrap();
        assert!(matches!(zf_precoder(&f, &p, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_user_cells_select_it() {
        let c = cfg(2, 1, 2, 1, 1);
        let drop = generate_drop::<f64>(&c, 0).unwrap();
        let (out, pre) = run_odia_cell_selection(&drop, &c).unwrap();
        assert_eq!(out.selected, vec![vec![0], vec![0]]);
        assert_eq!(pre.len(), 2);
        assert!(!out.outage);
    }

    #[test]
    fn zero_forcing_removes_intra_cell_interference() {
        let c = cfg(3, 10, 4, 2, 2);
        for d in 0..50 {
            let drop = generate_drop::<f64>(&c, d).unwrap();
            let (out, pre) = run_odia_cell_selection(&drop, &c).unwrap();
            for i in 0..3 {
                let mut sorted = out.selected[i].clone();
                sorted.dedup();
                assert_eq!(sorted.len(), 2);
                for (pos, dec) in out.decisions[i].iter().enumerate() {
                    let desired = inner(&dec.f, &pre[i].v.column(pos)).norm_sqr();
                    assert!((desired - pre[i].gamma[pos]).abs() < 1e-9 * desired);
                    let intra: f64 = (0..2)
                        .filter(|&s| s != pos)
                        .map(|s| inner(&dec.f, &pre[i].v.column(s)).norm_sqr())
                        .sum();
                    assert!(intra < 1e-18 * pre[i].gamma[pos]);
                }
            }
        }
    }

    #[test]
    fn more_users_means_less_leakage() {
        let base = NetworkConfig::new(3, 10, 4, 2, 2, 20.0, 8);
        let mean_eta = |n: usize| {
            let c = base.clone().with_users(n);
            let mut acc = 0.0;
            let drops = 1000;
            for d in 0..drops {
                let drop = generate_drop::<f64>(&c, d).unwrap();
                let (out, _) = run_odia_cell_selection(&drop, &c).unwrap();
                acc += out.decisions.iter().flatten().map(|x| x.eta).sum::<f64>();
            }
            acc / drops as f64
        };
        assert!(mean_eta(100) < mean_eta(10));
    }
}
