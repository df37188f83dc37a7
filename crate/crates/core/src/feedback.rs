//! Limited feedback of effective channel directions.
//!
//! Users quantize the direction of their effective channel `f` against a
//! shared codebook of unit vectors in `C^S` and report the codeword index
//! together with the exact gain `‖f‖²`. The base station rebuilds the
//! effective channel from that report and zero-forces on the reconstruction.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::derive_seed;
use crate::error::{Error, Result};
use crate::matlin::{hermitian_eigen, inner, norm_sq, random_unit_vector, CMat, OrthonormalBasis};
use crate::odia::{effective_channel_matrix, zf_precoder, CellPrecoder};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodebookKind {
    Random,
    Grassmannian,
}

impl fmt::Display for CodebookKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookKind::Random => "random",
            CodebookKind::Grassmannian => "grassmannian",
        })
    }
}

impl FromStr for CodebookKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(CodebookKind::Random),
            "grassmannian" => Ok(CodebookKind::Grassmannian),
            other => Err(Error::Config(format!("unknown codebook kind '{other}'"))),
        }
    }
}

/// `2^n_f` unit vectors in `C^S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook<T> {
    dim: usize,
    bits: u32,
    codewords: Vec<Vec<Complex<T>>>,
    kind: CodebookKind,
    min_chordal_sq: T,
}

/// Squared chordal distance `1 − |aᴴb|²` between unit vectors.
#[inline]
pub fn chordal_sq<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    (T::one() - inner(a, b).norm_sqr()).max(T::zero())
}

fn min_pairwise_chordal_sq<T: Scalar>(words: &[Vec<Complex<T>>]) -> T {
    (0..words.len())
        .into_par_iter()
        .map(|a| {
            ((a + 1)..words.len())
                .map(|b| chordal_sq(&words[a], &words[b]))
                .fold(T::infinity(), T::min)
        })
        .reduce(T::infinity, T::min)
}

impl<T: Scalar> Codebook<T> {
    pub fn new(dim: usize, bits: u32, codewords: Vec<Vec<Complex<T>>>, kind: CodebookKind) -> Result<Self> {
        if dim == 0 || bits == 0 || bits > 24 {
            return Err(Error::Config(format!("unsupported codebook S={dim}, n_f={bits}")));
        }
        if codewords.len() != 1usize << bits {
            return Err(Error::Dimension(format!(
                "{} codewords for n_f={bits}",
                codewords.len()
            )));
        }
        let tol = T::epsilon() * T::of(4096.0);
        for (k, c) in codewords.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Dimension(format!("codeword {k} has length {}", c.len())));
            }
            if (norm_sq(c).sqrt() - T::one()).abs() > tol {
                return Err(Error::Domain(format!("codeword {k} is not unit norm")));
            }
        }
        let min_chordal_sq = min_pairwise_chordal_sq(&codewords);
        Ok(Codebook {
            dim,
            bits,
            codewords,
            kind,
            min_chordal_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn codewords(&self) -> &[Vec<Complex<T>>] {
        &self.codewords
    }

    pub fn codeword(&self, index: usize) -> &[Complex<T>] {
        &self.codewords[index]
    }

    /// Minimum squared chordal distance over all codeword pairs.
    pub fn min_chordal_sq(&self) -> T {
        self.min_chordal_sq
    }

    /// Whether the minimum distance sits under [`packing_bound`].
    pub fn within_packing_bound(&self) -> bool {
        self.min_chordal_sq.as_f64() <= packing_bound(self.dim, self.size()) + 1e-12
    }

    /// Writes the plain-text codebook format: a header line
    /// `S n_f kind min_chordal_sq`, then one line per codeword holding `2S`
    /// reals with real and imaginary parts interleaved.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {} {:e}",
            self.dim,
            self.bits,
            self.kind,
            self.min_chordal_sq.as_f64()
        )?;
        for c in &self.codewords {
            let line: Vec<String> = c
                .iter()
                .flat_map(|z| [format!("{:e}", z.re.as_f64()), format!("{:e}", z.im.as_f64())])
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Codebook::write_to`], re-checking the
    /// unit norms and the cached minimum distance.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#')));
        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty codebook file".into(),
        })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 4 {
            return Err(bad(ln, "header must be 'S n_f kind min_chordal_sq'"));
        }
        let dim: usize = fields[0].parse().map_err(|_| bad(ln, "bad S"))?;
        let bits: u32 = fields[1].parse().map_err(|_| bad(ln, "bad n_f"))?;
        let kind: CodebookKind = fields[2].parse()?;
        let stated: f64 = fields[3].parse().map_err(|_| bad(ln, "bad min_chordal_sq"))?;

        let mut words = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(ln, "non-numeric codeword entry"))?;
            if vals.len() != 2 * dim {
                return Err(bad(ln, &format!("expected {} reals", 2 * dim)));
            }
            words.push(
                vals.chunks(2)
                    .map(|p| Complex::new(T::of(p[0]), T::of(p[1])))
                    .collect(),
            );
        }
        let cb = Codebook::new(dim, bits, words, kind)?;
        if (cb.min_chordal_sq.as_f64() - stated).abs() > 1e-12_f64.max(T::epsilon().as_f64() * 64.0) {
            return Err(Error::Parse {
                line: 1,
                msg: format!(
                    "header min_chordal_sq {stated:e} disagrees with codewords ({:e})",
                    cb.min_chordal_sq.as_f64()
                ),
            });
        }
        Ok(cb)
    }
}

/// `min{1/2, (S−1)N_f / (2S(N_f−1)), N_f^{−1/(S−1)}}`, the composite
/// Rankin / Gilbert–Varshamov / Hamming expression quoted for the squared
/// chordal distance of a line packing. Zero for `S = 1`.
///
/// Note this is not a true upper bound on the best achievable minimum
/// distance: two orthogonal codewords in `C²` reach `d² = 1`.
pub fn packing_bound(s: usize, n_f: usize) -> f64 {
    if s <= 1 || n_f < 2 {
        return 0.0;
    }
    let (s, n) = (s as f64, n_f as f64);
    let rankin = (s - 1.0) * n / (2.0 * s * (n - 1.0));
    let hamming = (1.0 / n).powf(1.0 / (s - 1.0));
    0.5f64.min(rankin).min(hamming)
}

/// CDF of the quantization error `d²` with a random codebook:
/// `1 − (1 − z^{S−1})^{N_f}`.
pub fn random_codebook_error_cdf(z: f64, s: usize, n_f: usize) -> f64 {
    if z <= 0.0 {
        return if s == 1 { 1.0 } else { 0.0 };
    }
    if z >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - z.powi(s as i32 - 1)).powi(n_f as i32)
}

/// Mean of the distribution above, `∫₀¹ (1 − z^{S−1})^{N_f} dz`, by
/// composite Simpson quadrature.
pub fn random_codebook_mean_error(s: usize, n_f: usize) -> f64 {
    if s == 1 {
        return 0.0;
    }
    let steps = 20_000;
    let h = 1.0 / steps as f64;
    let f = |z: f64| 1.0 - random_codebook_error_cdf(z, s, n_f);
    let mut acc = f(0.0) + f(1.0);
    for k in 1..steps {
        acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `2^n_f` i.i.d. codewords uniform on the unit sphere of `C^S`.
pub fn build_random_codebook<T: Scalar>(s: usize, n_f: u32, seed: u64) -> Result<Codebook<T>> {
    if s == 0 || n_f == 0 || n_f > 24 {
        return Err(Error::Config(format!("unsupported codebook S={s}, n_f={n_f}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = (0..1usize << n_f).map(|_| random_unit_vector(s, &mut rng)).collect();
    Codebook::new(s, n_f, words, CodebookKind::Random)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannianOptions {
    pub iterations: usize,
    /// Training directions used by each assignment pass.
    pub training: usize,
    pub seed: u64,
}

impl GrassmannianOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        GrassmannianOptions {
            iterations,
            training: 1_000_000,
            seed,
        }
    }

    pub fn with_training(mut self, training: usize) -> Self {
        self.training = training;
        self
    }
}

/// Lloyd-type line packing with the default training set size.
pub fn build_grassmannian_codebook<T: Scalar>(s: usize, n_f: u32, iterations: usize, seed: u64) -> Result<Codebook<T>> {
    build_grassmannian_codebook_with(s, n_f, &GrassmannianOptions::new(iterations, seed))
}

/// Lloyd iteration on the Grassmannian of lines in `C^S`.
///
/// Starting from the random codebook with the same seed, each pass assigns
/// every training direction to its nearest codeword in chordal distance and
/// replaces each codeword with the principal eigenvector of its cluster's
/// outer-product sum. The iterate with the largest minimum distance is kept,
/// the starting point included. For `S = 1` every line is the same, so the
/// codewords are uniform phases. For `S = 2` the start is the better of the
/// random codebook and a spherical Fibonacci lattice mapped from the Bloch
/// sphere, which stays well spread at sizes where random starts collide.
pub fn build_grassmannian_codebook_with<T: Scalar>(s: usize, n_f: u32, opts: &GrassmannianOptions) -> Result<Codebook<T>> {
    if s == 0 || n_f == 0 || n_f > 24 {
        return Err(Error::Config(format!("unsupported codebook S={s}, n_f={n_f}")));
    }
    let size = 1usize << n_f;
    if s == 1 {
        let words = (0..size)
            .map(|k| {
                let ang = T::of(2.0 * std::f64::consts::PI * k as f64 / size as f64);
                vec![Complex::new(ang.cos(), ang.sin())]
            })
            .collect();
        return Codebook::new(1, n_f, words, CodebookKind::Grassmannian);
    }

    let start = build_random_codebook::<T>(s, n_f, opts.seed)?;
    let mut best_words = start.codewords;
    let mut best_min = start.min_chordal_sq;
    if s == 2 {
        let fib = fibonacci_lines::<T>(size);
        let m = min_pairwise_chordal_sq(&fib);
        if m > best_min {
            best_min = m;
            best_words = fib;
        }
    }
    let mut words = best_words.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x6772_6173));
    let training: Vec<Vec<Complex<T>>> = (0..opts.training.max(size))
        .map(|_| random_unit_vector(s, &mut rng))
        .collect();

    for _ in 0..opts.iterations {
        let assign: Vec<usize> = training
            .par_iter()
            .map(|x| nearest_codeword(&words, x).0)
            .collect();
        let mut acc = vec![CMat::<T>::zeros(s, s); size];
        let mut counts = vec![0usize; size];
        for (x, &k) in training.iter().zip(&assign) {
            counts[k] += 1;
            let r = &mut acc[k];
            for a in 0..s {
                for b in 0..s {
                    r[(a, b)] += x[a] * x[b].conj();
                }
            }
        }
        for k in 0..size {
            if counts[k] == 0 {
                continue;
            }
            let (_, vecs) = hermitian_eigen(&acc[k])?;
            let mut c = vecs.column(s - 1);
            let nrm = norm_sq(&c).sqrt();
            c.iter_mut().for_each(|z| *z /= nrm);
            words[k] = c;
        }
        let m = min_pairwise_chordal_sq(&words);
        if m > best_min {
            best_min = m;
            best_words = words.clone();
        }
    }
    Codebook::new(s, n_f, best_words, CodebookKind::Grassmannian)
}

/// `n` lines in C² from the spherical Fibonacci lattice: Bloch point
/// `(θ, φ)` maps to `(cos θ/2, e^{iφ} sin θ/2)`.
fn fibonacci_lines<T: Scalar>(n: usize) -> Vec<Vec<Complex<T>>> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / n as f64;
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            let (c, s) = (((1.0 + z) / 2.0).sqrt(), ((1.0 - z) / 2.0).sqrt());
            vec![
                Complex::new(T::of(c), T::zero()),
                Complex::new(T::of(s * phi.cos()), T::of(s * phi.sin())),
            ]
        })
        .collect()
}

/// Index of the codeword maximizing `|xᴴc|²` (ties to the lower index) and
/// that maximum.
fn nearest_codeword<T: Scalar>(words: &[Vec<Complex<T>>], x: &[Complex<T>]) -> (usize, T) {
    let mut best = (0, -T::one());
    for (k, c) in words.iter().enumerate() {
        let v = inner(x, c).norm_sqr();
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// One user's limited-feedback report.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedFeedback<T> {
    /// Codeword index maximizing `|fᴴc|²`.
    pub index: usize,
    /// `‖f‖²`, fed back exactly.
    pub gain: T,
    /// Realized quantization error `1 − |fᴴc|²/‖f‖²`.
    pub d_sq: T,
}

pub fn quantize_direction<T: Scalar>(f: &[Complex<T>], cb: &Codebook<T>) -> Result<QuantizedFeedback<T>> {
    if f.len() != cb.dim {
        return Err(Error::Dimension(format!(
            "vector of length {} against a codebook in dimension {}",
            f.len(),
            cb.dim
        )));
    }
    let gain = norm_sq(f);
    if !(gain > T::zero()) {
        return Err(Error::Degenerate("cannot quantize a zero vector".into()));
    }
    let (index, best) = nearest_codeword(&cb.codewords, f);
    let d_sq = (T::one() - best / gain).max(T::zero()).min(T::one());
    Ok(QuantizedFeedback { index, gain, d_sq })
}

/// How the reconstructed effective channel is scaled from the fed-back gain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReconstructionExponent {
    /// `f̂ = ‖f‖·c`, which tends to `f` as the quantization error vanishes.
    #[default]
    Norm,
    /// `f̂ = ‖f‖²·c`.
    SquaredNorm,
}

impl FromStr for ReconstructionExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(ReconstructionExponent::Norm),
            "2" => Ok(ReconstructionExponent::SquaredNorm),
            other => Err(Error::Config(format!("reconstruction_exponent must be 1 or 2, got '{other}'"))),
        }
    }
}

/// Rebuilds the effective channels of a cell's selected users from their
/// reports and zero-forces on the reconstruction. Per-stream powers are
/// normalized on the reconstructed inverse, so `P·V̂` has unit-norm columns.
pub fn reconstruct_precoder<T: Scalar>(
    reports: &[QuantizedFeedback<T>],
    cb: &Codebook<T>,
    p: &OrthonormalBasis<T>,
    exponent: ReconstructionExponent,
    cell: usize,
) -> Result<CellPrecoder<T>> {
    if reports.len() > p.dim() || cb.dim != p.dim() {
        return Err(Error::Dimension(format!(
            "{} reports, codebook dimension {}, S={}",
            reports.len(),
            cb.dim,
            p.dim()
        )));
    }
    let rebuilt: Vec<Vec<Complex<T>>> = reports
        .iter()
        .map(|q| {
            let scale = match exponent {
                ReconstructionExponent::Norm => q.gain.sqrt(),
                ReconstructionExponent::SquaredNorm => q.gain,
            };
            cb.codewords[q.index].iter().map(|z| z * scale).collect()
        })
        .collect();
    let refs: Vec<&[Complex<T>]> = rebuilt.iter().map(Vec::as_slice).collect();
    zf_precoder(&effective_channel_matrix(&refs)?, p, cell)
}
