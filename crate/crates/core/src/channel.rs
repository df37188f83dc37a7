//! Network configuration and i.i.d. Rayleigh channel drops.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matlin::{complex_normal, random_orthonormal_basis, CMat, OrthonormalBasis};
use crate::scalar::Scalar;

/// One simulated K-cell network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// Cells (and base stations).
    pub k: usize,
    /// Users per cell.
    pub n: usize,
    /// Base-station antennas.
    pub m: usize,
    /// User antennas.
    pub l: usize,
    /// Streams (scheduled users) per cell.
    pub s: usize,
    pub snr_db: f64,
    pub seed: u64,
    /// Keep the reference bases fixed across drops instead of redrawing them.
    pub fixed_reference_bases: bool,
}

impl NetworkConfig {
    pub fn new(k: usize, n: usize, m: usize, l: usize, s: usize, snr_db: f64, seed: u64) -> Self {
        NetworkConfig {
            k,
            n,
            m,
            l,
            s,
            snr_db,
            seed,
            fixed_reference_bases: false,
        }
    }

    /// Linear SNR.
    pub fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Noise variance `1/SNR`.
    pub fn noise_power(&self) -> f64 {
        1.0 / self.snr()
    }

    /// Exponent `(K−1)S − L + 1` of the leakage-metric CDF near zero.
    pub fn tail_exponent(&self) -> i64 {
        (self.k as i64 - 1) * self.s as i64 - self.l as i64 + 1
    }

    pub fn with_users(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Violation,
    Warning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Violation => "violation",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Lists every violated invariant of `cfg`. Empty iff the config is fully
/// valid; the `L < (K−1)S + 1` condition only produces a warning.
pub fn validate_config(cfg: &NetworkConfig) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let mut violation = |msg: String| {
        out.push(ConfigIssue {
            severity: Severity::Violation,
            message: msg,
        })
    };
    if cfg.k < 2 {
        violation(format!("K >= 2 (got K={})", cfg.k));
    }
    if cfg.m < 1 {
        violation("M >= 1".into());
    }
    if cfg.l < 1 {
        violation("L >= 1".into());
    }
    if cfg.s < 1 {
        violation("S >= 1".into());
    }
    if cfg.s > cfg.m {
        violation(format!("S <= M (got S={}, M={})", cfg.s, cfg.m));
    }
    if cfg.n < cfg.s {
        violation(format!("N >= S (got N={}, S={})", cfg.n, cfg.s));
    }
    if !cfg.snr_db.is_finite() {
        violation("snr_db must be finite".into());
    }
    if cfg.k >= 1 && cfg.l > (cfg.k - 1) * cfg.s {
        out.push(ConfigIssue {
            severity: Severity::Warning,
            message: "L >= (K-1)S+1: all interference cancellable at receivers".into(),
        });
    }
    out
}

fn ensure_valid(cfg: &NetworkConfig) -> Result<()> {
    let errs: Vec<String> = validate_config(cfg)
        .into_iter()
        .filter(|i| i.severity == Severity::Violation)
        .map(|i| i.message)
        .collect();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs.join("; ")))
    }
}

/// SplitMix64 finalizer; mixes a base seed with a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream index reserved for fixed reference bases.
const FIXED_BASES_STREAM: u64 = u64::MAX;

/// All channel matrices and reference bases for one coherence block.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDrop<T> {
    k: usize,
    n: usize,
    /// Indexed `((i·N + j)·K + k)`: link from BS `k` to user `j` of cell `i`.
    h: Vec<CMat<T>>,
    /// Per-link products `H·P_k`, cached because every scheduler uses them.
    hp: Vec<CMat<T>>,
    p: Vec<OrthonormalBasis<T>>,
    pub drop_id: u64,
}

impl<T: Scalar> ChannelDrop<T> {
    /// Assembles a drop from explicit matrices; `h` is indexed as `h[i][j][k]`.
    pub fn from_parts(
        h: Vec<Vec<Vec<CMat<T>>>>,
        p: Vec<OrthonormalBasis<T>>,
        drop_id: u64,
    ) -> Result<Self> {
        let k = p.len();
        let n = h.first().map_or(0, Vec::len);
        if h.len() != k || h.iter().any(|cell| cell.len() != n) {
            return Err(Error::Dimension("channel tensor shape does not match K, N".into()));
        }
        let mut flat = Vec::with_capacity(k * k * n);
        let mut hp = Vec::with_capacity(k * k * n);
        for cell in h {
            for user in cell {
                if user.len() != k {
                    return Err(Error::Dimension("need one channel per base station".into()));
                }
                for (src, mat) in user.into_iter().enumerate() {
                    mat.check_finite()?;
                    hp.push(mat.matmul(p[src].matrix())?);
                    flat.push(mat);
                }
            }
        }
        Ok(ChannelDrop {
            k,
            n,
            h: flat,
            hp,
            p,
            drop_id,
        })
    }

    #[inline]
    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        assert!(k < self.k && i < self.k && j < self.n, "index out of range");
        (i * self.n + j) * self.k + k
    }

    /// `H_k^{[i,j]}`: `L×M` channel from BS `k` to user `j` in cell `i`.
    #[inline]
    pub fn h(&self, k: usize, i: usize, j: usize) -> &CMat<T> {
        &self.h[self.idx(k, i, j)]
    }

    /// `H_k^{[i,j]}·P_k` (`L×S`).
    #[inline]
    pub fn hp(&self, k: usize, i: usize, j: usize) -> &CMat<T> {
        &self.hp[self.idx(k, i, j)]
    }

    #[inline]
    pub fn reference_basis(&self, k: usize) -> &OrthonormalBasis<T> {
        &self.p[k]
    }

    pub fn cells(&self) -> usize {
        self.k
    }

    pub fn users_per_cell(&self) -> usize {
        self.n
    }
}

fn draw_bases<T: Scalar>(cfg: &NetworkConfig, stream_seed: u64) -> Result<Vec<OrthonormalBasis<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    (0..cfg.k)
        .map(|_| {
            let mut p = random_orthonormal_basis(cfg.m, cfg.s, &mut rng)?;
            p.source_seed = stream_seed;
            Ok(p)
        })
        .collect()
}

/// Draws drop `drop_index` of the network. The result depends only on
/// `(cfg, drop_index)`.
pub fn generate_drop<T: Scalar>(cfg: &NetworkConfig, drop_index: u64) -> Result<ChannelDrop<T>> {
    ensure_valid(cfg)?;
    let stream = derive_seed(cfg.seed, drop_index);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);

    let p: Vec<OrthonormalBasis<T>> = if cfg.fixed_reference_bases {
        draw_bases(cfg, derive_seed(cfg.seed, FIXED_BASES_STREAM))?
    } else {
        (0..cfg.k)
            .map(|_| {
                let mut b = random_orthonormal_basis(cfg.m, cfg.s, &mut rng)?;
                b.source_seed = stream;
                Ok(b)
            })
            .collect::<Result<_>>()?
    };

    let links = cfg.k * cfg.k * cfg.n;
    let mut h = Vec::with_capacity(links);
    let mut hp = Vec::with_capacity(links);
    for _i in 0..cfg.k {
        for _j in 0..cfg.n {
            for basis in &p {
                let mat = CMat::from_fn(cfg.l, cfg.m, |_, _| complex_normal(&mut rng));
                hp.push(mat.matmul(basis.matrix())?);
                h.push(mat);
            }
        }
    }
    Ok(ChannelDrop {
        k: cfg.k,
        n: cfg.n,
        h,
        hp,
        p,
        drop_id: drop_index,
    })
}
