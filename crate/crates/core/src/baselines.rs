//! Reference schedulers under multi-cell random beamforming.
//!
//! Each base station sends one stream per column of its reference basis
//! (`V = I`). Users compute one metric per stream and the base station
//! assigns streams greedily, one user per stream:
//!
//! * max-SNR: matched-filter receiver, metric `‖H_i p_m‖²`, largest wins;
//! * min-INR: receiver nulling the other streams of the home cell and all
//!   streams of the other cells, metric = residual leakage, smallest wins.

use std::str::FromStr;

use num_complex::Complex;

use crate::channel::ChannelDrop;
use crate::error::{Error, Result};
use crate::matlin::{norm_sq, smallest_singular_pair, CMat, OrthonormalBasis};
use crate::odia::CellPrecoder;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    MaxSnr,
    MinInr,
}

impl Baseline {
    pub fn mode(self) -> SelectionMode {
        match self {
            Baseline::MaxSnr => SelectionMode::Max,
            Baseline::MinInr => SelectionMode::Min,
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_snr" => Ok(Baseline::MaxSnr),
            "min_inr" => Ok(Baseline::MinInr),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }
}

/// Receive beamformer and metric of one (user, stream) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamDecision<T> {
    pub u: Vec<Complex<T>>,
    pub metric: T,
}

/// Per-stream matched filters of user `j` in cell `i`.
pub fn max_snr_decision<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize) -> Result<Vec<StreamDecision<T>>> {
    check_user(drop, i, j)?;
    let hp = drop.hp(i, i, j);
    (0..hp.cols())
        .map(|m| {
            let h = hp.column(m);
            let metric = norm_sq(&h);
            if !(metric > T::zero()) {
                return Err(Error::Degenerate(format!("zero desired channel for stream {m}")));
            }
            let n = metric.sqrt();
            Ok(StreamDecision {
                u: h.iter().map(|z| z / n).collect(),
                metric,
            })
        })
        .collect()
}

/// Stack of everything user `(i, j)` must null to receive stream `m`:
/// `(H_i P̃_{i,m})ᴴ` over `(H_k P_k)ᴴ` for `k ≠ i`.
pub fn min_inr_interference_matrix<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize, m: usize) -> Result<CMat<T>> {
    check_user(drop, i, j)?;
    let own = drop.hp(i, i, j);
    if m >= own.cols() {
        return Err(Error::Dimension(format!("stream {m} with S={}", own.cols())));
    }
    let mut blocks = vec![own.without_column(m).adjoint()];
    blocks.extend((0..drop.cells()).filter(|&k| k != i).map(|k| drop.hp(k, i, j).adjoint()));
    CMat::vstack(&blocks)
}

pub fn min_inr_decision<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize, m: usize) -> Result<StreamDecision<T>> {
    let g = min_inr_interference_matrix(drop, i, j, m)?;
    let u = smallest_singular_pair(&g)?.q;
    let metric = norm_sq(&g.mul_vec(&u)?);
    Ok(StreamDecision { u, metric })
}

fn check_user<T: Scalar>(drop: &ChannelDrop<T>, i: usize, j: usize) -> Result<()> {
    if i >= drop.cells() || j >= drop.users_per_cell() {
        return Err(Error::Dimension(format!("no user ({i}, {j}) in this drop")));
    }
    Ok(())
}

/// Every user's per-stream metrics and receivers, indexed
/// `[cell][user][stream]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamMetricTable<T> {
    pub metrics: Vec<Vec<Vec<T>>>,
    pub receivers: Vec<Vec<Vec<Vec<Complex<T>>>>>,
}

impl<T: Scalar> StreamMetricTable<T> {
    pub fn build(drop: &ChannelDrop<T>, baseline: Baseline) -> Result<Self> {
        let s = drop.reference_basis(0).dim();
        let mut metrics = Vec::with_capacity(drop.cells());
        let mut receivers = Vec::with_capacity(drop.cells());
        for i in 0..drop.cells() {
            let mut cm = Vec::with_capacity(drop.users_per_cell());
            let mut cr = Vec::with_capacity(drop.users_per_cell());
            for j in 0..drop.users_per_cell() {
                let row = match baseline {
                    Baseline::MaxSnr => max_snr_decision(drop, i, j)?,
                    Baseline::MinInr => (0..s).map(|m| min_inr_decision(drop, i, j, m)).collect::<Result<_>>()?,
                };
                cm.push(row.iter().map(|d| d.metric).collect());
                cr.push(row.into_iter().map(|d| d.u).collect());
            }
            metrics.push(cm);
            receivers.push(cr);
        }
        Ok(StreamMetricTable { metrics, receivers })
    }
}

/// Greedy stream assignment without replacement over an `N×S` metric table
/// (`table[user][stream]`). Returns the user serving each stream.
pub fn select_users_per_stream<T: Scalar>(table: &[Vec<T>], mode: SelectionMode) -> Result<Vec<usize>> {
    let s = table.first().map_or(0, Vec::len);
    if table.len() < s || s == 0 {
        return Err(Error::Config(format!("cannot assign {s} streams to {} users", table.len())));
    }
    let better = |a: T, b: T| match mode {
        SelectionMode::Min => a < b,
        SelectionMode::Max => a > b,
    };
    let mut taken = vec![false; table.len()];
    let mut out = Vec::with_capacity(s);
    for m in 0..s {
        let mut best: Option<usize> = None;
        for (j, row) in table.iter().enumerate() {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|b| better(row[m], table[b][m])) {
                best = Some(j);
            }
        }
        let j = best.expect("at least one free user");
        taken[j] = true;
        out.push(j);
    }
    Ok(out)
}

/// Pure random beamforming: `V = I`, `W = P`.
pub fn random_beamforming_precoder<T: Scalar>(p: &OrthonormalBasis<T>, cell: usize) -> CellPrecoder<T> {
    let s = p.dim();
    CellPrecoder {
        v: CMat::identity(s),
        gamma: vec![T::one(); s],
        w: p.matrix().clone(),
        cell,
    }
}

/// A baseline's decisions for one drop.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSchedule<T> {
    /// `assignment[i][m]` is the user served on stream `m` of cell `i`.
    pub assignment: Vec<Vec<usize>>,
    /// Receive beamformer of each assigned user for its stream.
    pub receivers: Vec<Vec<Vec<Complex<T>>>>,
    /// Metric of each assigned user for its stream.
    pub metrics: Vec<Vec<T>>,
    pub precoders: Vec<CellPrecoder<T>>,
}

pub fn run_baseline<T: Scalar>(drop: &ChannelDrop<T>, baseline: Baseline) -> Result<BaselineSchedule<T>> {
    let table = StreamMetricTable::build(drop, baseline)?;
    let mut assignment = Vec::with_capacity(drop.cells());
    let mut receivers = Vec::with_capacity(drop.cells());
    let mut metrics = Vec::with_capacity(drop.cells());
    for i in 0..drop.cells() {
        let picks = select_users_per_stream(&table.metrics[i], baseline.mode())?;
        receivers.push(picks.iter().enumerate().map(|(m, &j)| table.receivers[i][j][m].clone()).collect());
        metrics.push(picks.iter().enumerate().map(|(m, &j)| table.metrics[i][j][m]).collect());
        assignment.push(picks);
    }
    let precoders = (0..drop.cells())
        .map(|i| random_beamforming_precoder(drop.reference_basis(i), i))
        .collect();
    Ok(BaselineSchedule {
        assignment,
        receivers,
        metrics,
        precoders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_drop, NetworkConfig};
    use crate::matlin::{inner, random_orthonormal_basis, random_unit_vector};
    use crate::odia::receive_beamformer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_user_drop(h: CMat<f64>, m: usize) -> ChannelDrop<f64> {
        // K=2 so the drop is well formed; the second cell's links are zero
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = h.cols();
        let l = h.rows();
        let eye = OrthonormalBasis::new(
            CMat::from_fn(m, s, |r, c| Complex::new(if r == c { 1.0 } else { 0.0 }, 0.0)),
            0,
        )
        .unwrap();
        let other = random_orthonormal_basis(m, s, &mut rng).unwrap();
        let mut hh = vec![vec![vec![CMat::zeros(l, m); 2]; 1]; 2];
        hh[0][0][0] = CMat::from_fn(l, m, |r, c| if c < s { h[(r, c)] } else { Complex::new(0.0, 0.0) });
        hh[1][0][1] = CMat::from_fn(l, m, |r, c| Complex::new((r + c) as f64 + 1.0, 0.0));
        ChannelDrop::from_parts(hh, vec![eye, other], 0).unwrap()
    }

    #[test]
    fn axis_aligned_matched_filter() {
        let h = CMat::from_rows(&[vec![Complex::new(3.0, 0.0)], vec![Complex::new(0.0, 0.0)]]).unwrap();
        let drop = single_user_drop(h, 2);
        let d = max_snr_decision(&drop, 0, 0).unwrap();
        assert!((d[0].metric - 9.0).abs() < 1e-12);
        assert!((d[0].u[0] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        assert!(d[0].u[1].norm() < 1e-12);
    }

    #[test]
    fn scalar_receiver() {
        let h = CMat::from_rows(&[vec![Complex::new(1.0, -2.0)]]).unwrap();
        let drop = single_user_drop(h, 2);
        let d = max_snr_decision(&drop, 0, 0).unwrap();
        assert!((d[0].u[0].norm() - 1.0).abs() < 1e-12);
        assert!((d[0].metric - 5.0).abs() < 1e-12);
    }

    #[test]
    fn matched_filter_beats_random_receivers() {
        let cfg = NetworkConfig::new(3, 4, 4, 2, 2, 20.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 0..20 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let dec = max_snr_decision(&drop, 1, 2).unwrap();
            for (m, sd) in dec.iter().enumerate() {
                let h = drop.hp(1, 1, 2).column(m);
                assert!((sd.metric - norm_sq(&h)).abs() < 1e-12);
                assert!((inner(&sd.u, &h).norm_sqr() - sd.metric).abs() < 1e-12 * sd.metric);
                for _ in 0..100 {
                    let u = random_unit_vector(2, &mut rng);
                    assert!(inner(&u, &h).norm_sqr() <= sd.metric + 1e-12);
                }
            }
        }
    }

    #[test]
    fn min_inr_with_one_stream_is_odia() {
        let cfg = NetworkConfig::new(2, 3, 3, 2, 1, 20.0, 4);
        for d in 0..10 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            let a = min_inr_decision(&drop, 0, 1, 0).unwrap();
            let b = receive_beamformer(&drop, 0, 1).unwrap();
            assert!((a.metric - b.eta).abs() < 1e-12);
        }
    }

    #[test]
    fn min_inr_is_minimal() {
        let cfg = NetworkConfig::new(3, 3, 4, 2, 2, 20.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 0..10 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            for m in 0..2 {
                let g = min_inr_interference_matrix(&drop, 2, 0, m).unwrap();
                assert_eq!((g.rows(), g.cols()), (5, 2));
                let dec = min_inr_decision(&drop, 2, 0, m).unwrap();
                assert!((norm_sq(&dec.u) - 1.0).abs() < 1e-12);
                for _ in 0..1000 {
                    let u = random_unit_vector(2, &mut rng);
                    assert!(dec.metric <= norm_sq(&g.mul_vec(&u).unwrap()) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn min_inr_leaks_more_than_odia() {
        let cfg = NetworkConfig::new(3, 2, 4, 2, 2, 20.0, 6);
        let (mut a, mut b) = (0.0, 0.0);
        for d in 0..1000 {
            let drop = generate_drop::<f64>(&cfg, d).unwrap();
            a += min_inr_decision(&drop, 0, 0, 0).unwrap().metric;
            b += receive_beamformer(&drop, 0, 0).unwrap().eta;
        }
        assert!(a >= b);
    }

    #[test]
    fn greedy_assignment_examples() {
        let t = vec![vec![0.1, 0.9], vec![0.5, 0.2]];
        assert_eq!(select_users_per_stream(&t, SelectionMode::Min).unwrap(), vec![0, 1]);
        let t = vec![vec![0.1, 0.1], vec![0.5, 0.2], vec![0.7, 0.6]];
        assert_eq!(select_users_per_stream(&t, SelectionMode::Min).unwrap(), vec![0, 1]);
        assert_eq!(select_users_per_stream(&t, SelectionMode::Max).unwrap(), vec![2, 1]);
        assert!(matches!(
            select_users_per_stream(&[vec![0.1, 0.2]], SelectionMode::Min),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn greedy_matches_lexicographic_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let t: Vec<Vec<f64>> = (0..6).map(|_| (0..2).map(|_| rng.random::<f64>()).collect()).collect();
            for mode in [SelectionMode::Min, SelectionMode::Max] {
                let sign = if mode == SelectionMode::Min { 1.0 } else { -1.0 };
                let mut best = (f64::INFINITY, f64::INFINITY, 0, 0);
                for a in 0..6 {
                    for b in 0..6 {
                        if a == b {
                            continue;
                        }
                        let key = (sign * t[a][0], sign * t[b][1], a, b);
                        if key < best {
                            best = key;
                        }
                    }
                }
                assert_eq!(select_users_per_stream(&t, mode).unwrap(), vec![best.2, best.3]);
            }
        }
    }

    #[test]
    fn baseline_schedule_shapes() {
        let cfg = NetworkConfig::new(3, 6, 4, 2, 2, 20.0, 10);
        let drop = generate_drop::<f64>(&cfg, 0).unwrap();
        for b in [Baseline::MaxSnr, Baseline::MinInr] {
            let out = run_baseline(&drop, b).unwrap();
            assert_eq!(out.assignment.len(), 3);
            for i in 0..3 {
                assert_ne!(out.assignment[i][0], out.assignment[i][1]);
                assert!(out.precoders[i].w.max_abs_diff(drop.reference_basis(i).matrix()) == 0.0);
            }
        }
    }
}
