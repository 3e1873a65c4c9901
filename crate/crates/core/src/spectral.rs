//! Fixed-rank Nyström approximation of PSD matrices and the expected-error
//! certificates for the eigenvalues it produces.
//!
//! The sketch follows the numerically stable construction: with an
//! orthonormal Gaussian test matrix `Q` (n × M),
//!
//! ```text
//! Y  = A Q,   ν = ε ‖Y‖,   Y_ν = Y + ν Q
//! B  = Qᵀ Y_ν = C Cᵀ,      E = Y_ν C⁻ᵀ = U Σ Vᵀ
//! Â  = U diag(max(σ² − ν, 0)) Uᵀ, truncated to rank K
//! ```
//!
//! `Â ⪯ A` in exact arithmetic, so the estimated eigenvalues never exceed
//! the true ones beyond rounding.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampling::gaussian_matrix;
use crate::spd::{sym_eig, SpdMatrix};

const CHOLESKY_ATTEMPTS: usize = 3;

/// Sketch size, target rank and RNG seed. Requires `M ≥ K + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    num_random_vectors: usize,
    rank: usize,
    seed: u64,
}

impl SketchConfig {
    pub fn new(num_random_vectors: usize, rank: usize, seed: u64) -> Result<Self> {
        check_sketch(rank, num_random_vectors)?;
        Ok(Self { num_random_vectors, rank, seed })
    }

    /// `M = 2K + 10`.
    pub fn with_default_oversampling(rank: usize, seed: u64) -> Self {
        Self { num_random_vectors: 2 * rank + 10, rank, seed }
    }

    pub fn num_random_vectors(&self) -> usize {
        self.num_random_vectors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn check_sketch(k: usize, m: usize) -> Result<()> {
    if m < k + 2 {
        return Err(Error::InvalidSketchSize { k, m });
    }
    Ok(())
}

/// Rank-`K` PSD approximation `Â = F Fᵀ` stored through its eigenpairs.
#[derive(Debug, Clone)]
pub struct LowRankPsd {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    shift_used: f64,
}

impl LowRankPsd {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Descending, nonnegative.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Stabilization shift `ν` that made the core factorization succeed.
    pub fn shift_used(&self) -> f64 {
        self.shift_used
    }

    /// `F = U diag(λ)^{1/2}` with `Â = F Fᵀ`.
    pub fn factors(&self) -> DMatrix<f64> {
        let mut f = self.eigenvectors.clone();
        for (j, l) in self.eigenvalues.iter().enumerate() {
            f.column_mut(j).scale_mut(l.sqrt());
        }
        f
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let f = self.factors();
        &f * f.transpose()
    }
}

/// Randomized fixed-rank Nyström approximation of `a`.
///
/// Deterministic in `cfg.seed`. When `M ≥ n` the sketch spans the whole
/// space and the result is the exact rank-`K` truncation up to rounding.
pub fn nystrom_fixed_rank(a: &SpdMatrix, cfg: &SketchConfig) -> Result<LowRankPsd> {
    let n = a.dim();
    let k = cfg.rank;
    if k > n {
        return Err(Error::IndexOutOfRange { index: k, len: n });
    }
    let m = cfg.num_random_vectors.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q = gaussian_matrix(n, cfg.num_random_vectors, &mut rng).columns(0, m).qr().q();
    let y = a.matrix() * &q;
    let mut shift = f64::EPSILON * y.norm().max(f64::MIN_POSITIVE);

    for _ in 0..=CHOLESKY_ATTEMPTS {
        let y_shift = &y + &q * shift;
        let core = q.transpose() * &y_shift;
        let core = (&core + core.transpose()) * 0.5;
        let Some(chol) = core.cholesky() else {
            shift *= 2.0;
            continue;
        };
        // E = Y_ν C⁻ᵀ, i.e. C Eᵀ = Y_νᵀ.
        let e_t = chol
            .l()
            .solve_lower_triangular(&y_shift.transpose())
            .ok_or(Error::CholeskyFailure { attempts: CHOLESKY_ATTEMPTS })?;
        let svd = e_t.transpose().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let keep = &order[..k.min(order.len())];
        let eigenvalues =
            DVector::from_iterator(keep.len(), keep.iter().map(|&i| (svd.singular_values[i].powi(2) - shift).max(0.0)));
        let eigenvectors = DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])]);
        return Ok(LowRankPsd { eigenvalues, eigenvectors, shift_used: shift });
    }
    Err(Error::CholeskyFailure { attempts: CHOLESKY_ATTEMPTS })
}

/// How to obtain leading eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Exact,
    Nystrom(SketchConfig),
}

/// The `k` leading eigenvalues of `a`, descending.
pub fn top_k_spectrum(a: &SpdMatrix, k: usize, method: &SpectrumMethod) -> Result<Vec<f64>> {
    if k > a.dim() {
        return Err(Error::IndexOutOfRange { index: k, len: a.dim() });
    }
    match method {
        SpectrumMethod::Exact => Ok(a.spectrum().eigenvalues().iter().take(k).copied().collect()),
        SpectrumMethod::Nystrom(cfg) => {
            let cfg = SketchConfig { rank: k, ..*cfg };
            check_sketch(k, cfg.num_random_vectors)?;
            Ok(nystrom_fixed_rank(a, &cfg)?.eigenvalues.iter().copied().collect())
        }
    }
}

fn tail_bracket(tail: &[f64], k: usize, m: usize) -> f64 {
    let sum_sq: f64 = tail.iter().map(|l| l * l).sum();
    let sum: f64 = tail.iter().sum();
    sum_sq.sqrt() + k as f64 / (m - k - 1) as f64 * sum
}

/// Expected weighted eigenvalue error certificate,
/// `(Σ_{i≤K} 1/ω_i)·[(Σ_{i>K} λ_i²)^{1/2} + K/(M−K−1)·Σ_{i>K} λ_i]`.
///
/// `omega` holds the strictly positive weight eigenvalues; only the first
/// `K` enter.
pub fn eigenvalue_error_bound(tail: &[f64], k: usize, m: usize, omega: &[f64]) -> Result<f64> {
    check_sketch(k, m)?;
    if omega.len() < k {
        return Err(Error::IndexOutOfRange { index: k, len: omega.len() });
    }
    if let Some(bad) = omega[..k].iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeight(format!("weights must be positive, got {bad}")));
    }
    let inv_sum: f64 = omega[..k].iter().map(|w| 1.0 / w).sum();
    Ok(inv_sum * tail_bracket(tail, k, m))
}

/// Expected GLES error certificate,
/// `1.5/(λ_K + δ) · 1/(ω_K + ρ) · (Σ_{i>K} (ω_i + ρ)⁻² · bracket)^{1/2}` where
/// `bracket` is the tail term of [`eigenvalue_error_bound`].
#[allow(clippy::too_many_arguments)]
pub fn gles_error_bound(
    lambda_k: f64,
    delta: f64,
    omega_k: f64,
    rho: f64,
    tail: &[f64],
    weights_tail: &[f64],
    k: usize,
    m: usize,
) -> Result<f64> {
    check_sketch(k, m)?;
    let shifted = lambda_k + delta;
    if !(shifted > 0.0) {
        return Err(Error::NonPositiveShiftedEigenvalue { index: k, value: shifted });
    }
    let weight_k = omega_k + rho;
    if !(weight_k > 0.0) {
        return Err(Error::InvalidWeight(format!("omega_K + rho must be positive, got {weight_k}")));
    }
    let mut inv_sq = 0.0;
    for w in weights_tail {
        let s = w + rho;
        if !(s > 0.0) {
            return Err(Error::InvalidWeight(format!("omega_i + rho must be positive, got {s}")));
        }
        inv_sq += 1.0 / (s * s);
    }
    let alpha = (inv_sq * tail_bracket(tail, k, m)).sqrt();
    Ok(1.5 / shifted / weight_k * alpha)
}

/// Eigenvalues of `a` past the first `k`.
pub fn spectral_tail(a: &SpdMatrix, k: usize) -> Result<Vec<f64>> {
    let eig = sym_eig(a.matrix())?;
    if k > eig.len() {
        return Err(Error::IndexOutOfRange { index: k, len: eig.len() });
    }
    Ok(eig.eigenvalues().iter().skip(k).map(|l| l.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_low_rank_psd, random_orthogonal, spd_from_factors};

    fn geometric(n: usize, ratio: f64) -> Vec<f64> {
        (0..n).map(|i| ratio.powi(i as i32)).collect()
    }

    #[test]
    fn sketch_size_validation() {
        assert_eq!(SketchConfig::new(11, 10, 0), Err(Error::InvalidSketchSize { k: 10, m: 11 }));
        assert!(SketchConfig::new(12, 10, 0).is_ok());
    }

    #[test]
    fn recovers_exact_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_low_rank_psd(30, 4, &mut rng);
        let cfg = SketchConfig::new(10, 6, 7).unwrap();
        let approx = nystrom_fixed_rank(&a, &cfg).unwrap();
        let err = (approx.to_dense() - a.matrix()).norm();
        assert!(err <= 1e-8 * a.matrix().norm(), "{err}");
    }

    #[test]
    fn identity_with_full_sketch() {
        let a = SpdMatrix::identity(8);
        let cfg = SketchConfig::new(10, 8, 3).unwrap();
        let approx = nystrom_fixed_rank(&a, &cfg).unwrap();
        assert!(approx.eigenvalues().iter().all(|l| (l - 1.0).abs() < 1e-8));
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_orthogonal(40, &mut rng);
        let a = spd_from_factors(&q, &geometric(40, 0.7));
        let cfg = SketchConfig::new(15, 5, 99).unwrap();
        let first = nystrom_fixed_rank(&a, &cfg).unwrap();
        let second = nystrom_fixed_rank(&a, &cfg).unwrap();
        assert_eq!(first.eigenvalues(), second.eigenvalues());
    }

    #[test]
    fn never_overestimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..10 {
            let q = random_orthogonal(30, &mut rng);
            let exact = geometric(30, 0.8);
            let a = spd_from_factors(&q, &exact);
            let cfg = SketchConfig::new(12, 6, seed).unwrap();
            let approx = nystrom_fixed_rank(&a, &cfg).unwrap();
            for (est, truth) in approx.eigenvalues().iter().zip(&exact) {
                assert!(*est <= truth + 1e-8);
            }
        }
    }

    #[test]
    fn top_k_exact_and_nystrom() {
        let a = SpdMatrix::diagonal(&[5.0, 3.0, 1.0]).unwrap();
        assert_eq!(top_k_spectrum(&a, 2, &SpectrumMethod::Exact).unwrap(), vec![5.0, 3.0]);
        assert_eq!(
            top_k_spectrum(&a, 4, &SpectrumMethod::Exact).unwrap_err(),
            Error::IndexOutOfRange { index: 4, len: 3 }
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let low = random_low_rank_psd(20, 3, &mut rng);
        let exact = top_k_spectrum(&low, 3, &SpectrumMethod::Exact).unwrap();
        let method = SpectrumMethod::Nystrom(SketchConfig::new(8, 3, 1).unwrap());
        let sketched = top_k_spectrum(&low, 3, &method).unwrap();
        for (a, b) in exact.iter().zip(&sketched) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenvalue_bound_examples() {
        assert_eq!(eigenvalue_error_bound(&[], 1, 4, &[1.0]).unwrap(), 0.0);
        assert!((eigenvalue_error_bound(&[1.0], 1, 4, &[1.0]).unwrap() - 1.5).abs() < 1e-15);
        let tail = [0.3, 0.1, 0.05];
        let one = eigenvalue_error_bound(&tail, 2, 6, &[1.0, 2.0]).unwrap();
        let two = eigenvalue_error_bound(&tail, 2, 6, &[2.0, 4.0]).unwrap();
        assert!((two - one / 2.0).abs() < 1e-15);
        assert!(eigenvalue_error_bound(&tail, 2, 3, &[1.0, 1.0]).is_err());
        assert!(eigenvalue_error_bound(&tail, 2, 6, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn gles_bound_examples() {
        assert_eq!(gles_error_bound(1.0, 0.5, 1.0, 0.0, &[], &[], 1, 4).unwrap(), 0.0);
        // tail (1), K = 1, M = 4 gives bracket 1.5; ω_tail + ρ = sqrt(1.5) gives α = 1
        let w = 1.5f64.sqrt();
        let b = gles_error_bound(1.0, 0.5, 0.5, 0.5, &[1.0], &[w - 0.5], 1, 4).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let tail = [0.2, 0.1];
        let wt = [0.5, 0.5];
        let at = |rho: f64, delta: f64| gles_error_bound(0.5, delta, 0.5, rho, &tail, &wt, 3, 8).unwrap();
        assert!(at(2.0, 0.1) < at(1.0, 0.1));
        assert!(at(1.0, 0.2) < at(1.0, 0.1));
        assert!(at(1e8, 0.1) < 1e-12);
    }
}
