//! Random matrix generators shared by tests, benchmarks and oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::spd::{symmetrize, SpdMatrix, Spectrum};

/// `rows × cols` matrix of independent standard normal entries.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(λ) Qᵀ` for a Haar `Q` and the given eigenvalues.
pub fn with_eigenvalues(q: &DMatrix<f64>, eigenvalues: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    symmetrize(&(q * d * q.transpose()))
}

/// Random SPD matrix with eigenvalues drawn uniformly from `[0.2, 3]`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> SpdMatrix {
    let dist = Uniform::new(0.2, 3.0).expect("valid range");
    let eigenvalues: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    let q = random_orthogonal(n, rng);
    spd_from_factors(&q, &eigenvalues)
}

/// SPD matrix with the exact spectrum `eigenvalues` in the basis `q`.
pub fn spd_from_factors(q: &DMatrix<f64>, eigenvalues: &[f64]) -> SpdMatrix {
    let spectrum = Spectrum::from_eigenpairs(DVector::from_column_slice(eigenvalues), q.clone());
    SpdMatrix::from_spectrum(spectrum).expect("nonnegative eigenvalues")
}

/// Random PSD matrix of exact rank `rank`.
pub fn random_low_rank_psd(n: usize, rank: usize, rng: &mut impl Rng) -> SpdMatrix {
    let dist = Uniform::new(0.5, 2.0).expect("valid range");
    let mut eigenvalues = vec![0.0; n];
    for v in eigenvalues.iter_mut().take(rank) {
        *v = dist.sample(rng);
    }
    spd_from_factors(&random_orthogonal(n, rng), &eigenvalues)
}
