//! Distances of the alpha-Procrustes family.
//!
//! Every finite-dimensional distance here is evaluated in closed form from
//! three trace terms,
//!
//! ```text
//! d² = (1/α²) [ tr(M⁻¹X^{2α}) + tr(M⁻¹Y^{2α}) − 2 tr(X^α M⁻¹ Y^{2α} M⁻¹ X^α)^{1/2} ]
//! ```
//!
//! which is the minimum over `O ∈ O(n)` of `‖(X^α − Y^α O)/α‖²_{M⁻¹}`. The
//! minimizer is the orthogonal polar factor of `Y^α M⁻¹ X^α`, so the cross
//! term is the nuclear norm of that matrix. `α = 1/2` gives twice the
//! generalized Bures-Wasserstein distance and `α → 0` gives the generalized
//! Log-Euclidean distance.
//!
//! Spectral distances between extended operators ([`generalized_log_hs`],
//! [`gles_distance`]) pair eigenvalues by descending rank.

mod procrustes_search;
mod robust;

pub use procrustes_search::alpha_procrustes_numeric;
pub use robust::{
    project_to_omega_set, robust_gbw, robust_gbw_gradient, robust_gbw_objective, AscentOptions,
    OmegaConstraintSet, RobustGbwSolution,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{self, spd_log, spd_power, sym_eig, trace_sqrt_psd, weighted_trace, MetricWeight, SpdMatrix};
use crate::spd::ExtendedOperator;

/// Shift used by the Log-Euclidean Signature baseline, `δ = γ = 1e-8`.
pub const LES_SHIFT: f64 = 1e-8;

/// Trace terms behind a distance value:
/// `value² = mean_term + trace_x + trace_y − 2 cross_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBreakdown {
    pub trace_x: f64,
    pub trace_y: f64,
    pub cross_term: f64,
    /// Squared mean displacement; zero for covariance-only distances.
    pub mean_term: f64,
}

impl TraceBreakdown {
    fn new(trace_x: f64, trace_y: f64, cross_term: f64) -> Self {
        Self { trace_x, trace_y, cross_term, mean_term: 0.0 }
    }

    /// `mean_term + trace_x + trace_y − 2 cross_term`, clamped at zero.
    pub fn squared_distance(&self) -> f64 {
        (self.mean_term + self.trace_x + self.trace_y - 2.0 * self.cross_term).max(0.0)
    }

    fn scaled(self, factor: f64) -> Self {
        Self {
            trace_x: self.trace_x * factor,
            trace_y: self.trace_y * factor,
            cross_term: self.cross_term * factor,
            mean_term: self.mean_term * factor,
        }
    }
}

/// A nonnegative distance and, when available, the terms it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    pub breakdown: Option<TraceBreakdown>,
}

impl DistanceResult {
    pub fn squared(&self) -> f64 {
        self.value * self.value
    }
}

fn check_same_dim(x: &SpdMatrix, y: &SpdMatrix) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    Ok(())
}

/// `(M + ρI)⁻¹` for the pair `(X, Y)`.
///
/// A diagonal weight has no basis of its own: `ω_i` is paired with the i-th
/// eigenvector of `(X + Y)/2`, sorted descending.
fn resolve_inverse(x: &SpdMatrix, y: &SpdMatrix, weight: &MetricWeight) -> Result<DMatrix<f64>> {
    if weight.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: weight.dim() });
    }
    match weight.form() {
        spd::WeightForm::Full(_) => weight.inverse_matrix(),
        spd::WeightForm::Diagonal(_) => {
            let mid = (x.matrix() + y.matrix()) * 0.5;
            let basis = sym_eig(&spd::symmetrize(&mid))?;
            weight.in_basis(basis.eigenvectors())?.inverse_matrix()
        }
    }
}

/// `tr(W X)` for symmetric `W`, `X`.
fn trace_product(w: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    w.component_mul(x).sum()
}

/// `min_O ‖A − B O‖_W` for symmetric `A`, `B`, with `a_sq = A²`, `b_sq = B²`.
///
/// The breakdown holds the trace expansion. The value itself is the norm of
/// the residual at the optimal `O`, the polar factor of `B W A`, which avoids
/// the cancellation of the expansion when `A ≈ B`.
fn procrustes_distance(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    a_sq: &DMatrix<f64>,
    b_sq: &DMatrix<f64>,
    inverse: &DMatrix<f64>,
) -> Result<DistanceResult> {
    let trace_x = trace_product(inverse, a_sq);
    let trace_y = trace_product(inverse, b_sq);
    let inner = a * inverse * b_sq * inverse * a;
    let cross = trace_sqrt_psd(&inner)?;

    let svd = (a * inverse * b).svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rotation = v_t.transpose() * u.transpose();
    let residual = a - b * rotation;
    let value = weighted_trace(&residual, inverse).max(0.0).sqrt();
    Ok(DistanceResult { value, breakdown: Some(TraceBreakdown::new(trace_x, trace_y, cross)) })
}

/// Bures-Wasserstein distance
/// `[tr X + tr Y − 2 tr(X^{1/2} Y X^{1/2})^{1/2}]^{1/2}`.
pub fn bures_wasserstein(x: &SpdMatrix, y: &SpdMatrix) -> Result<DistanceResult> {
    check_same_dim(x, y)?;
    gbw_with_inverse(x, y, &DMatrix::identity(x.dim(), x.dim()))
}

/// Generalized Bures-Wasserstein distance under the weight `(M + ρI)⁻¹`.
pub fn generalized_bw(x: &SpdMatrix, y: &SpdMatrix, weight: &MetricWeight) -> Result<DistanceResult> {
    check_same_dim(x, y)?;
    let inverse = resolve_inverse(x, y, weight)?;
    gbw_with_inverse(x, y, &inverse)
}

/// GBW with the inverse weight supplied directly; it may be singular.
pub(crate) fn gbw_with_inverse(x: &SpdMatrix, y: &SpdMatrix, inverse: &DMatrix<f64>) -> Result<DistanceResult> {
    let x_half = spd_power(x, 0.5)?;
    let y_half = spd_power(y, 0.5)?;
    procrustes_distance(x_half.matrix(), y_half.matrix(), x.matrix(), y.matrix(), inverse)
}

/// Generalized alpha-Procrustes distance in closed form,
/// `min_O ‖(X^α − Y^α O)/α‖_{M⁻¹}`.
pub fn alpha_procrustes_closed(
    x: &SpdMatrix,
    y: &SpdMatrix,
    alpha: f64,
    weight: &MetricWeight,
) -> Result<DistanceResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    check_same_dim(x, y)?;
    let inverse = resolve_inverse(x, y, weight)?;
    let x_alpha = spd_power(x, alpha)?;
    let y_alpha = spd_power(y, alpha)?;
    let x_two_alpha = spd_power(x, 2.0 * alpha)?;
    let y_two_alpha = spd_power(y, 2.0 * alpha)?;
    let d = procrustes_distance(
        x_alpha.matrix(),
        y_alpha.matrix(),
        x_two_alpha.matrix(),
        y_two_alpha.matrix(),
        &inverse,
    )?;
    Ok(DistanceResult {
        value: d.value / alpha,
        breakdown: d.breakdown.map(|b| b.scaled(1.0 / (alpha * alpha))),
    })
}

/// Generalized Log-Euclidean distance `‖log X − log Y‖_{M⁻¹}`.
pub fn generalized_log_euclidean(
    x: &SpdMatrix,
    y: &SpdMatrix,
    weight: &MetricWeight,
) -> Result<DistanceResult> {
    check_same_dim(x, y)?;
    let inverse = resolve_inverse(x, y, weight)?;
    let log_x = spd_log(x)?;
    let log_y = spd_log(y)?;
    let trace_x = weighted_trace(&log_x, &inverse);
    let trace_y = weighted_trace(&log_y, &inverse);
    let cross = trace_product(&(&inverse * &log_y), &log_x.transpose());
    let diff = &log_x - &log_y;
    let value = weighted_trace(&diff, &inverse).max(0.0).sqrt();
    Ok(DistanceResult { value, breakdown: Some(TraceBreakdown::new(trace_x, trace_y, cross)) })
}

fn diagonal_factors(weight: &MetricWeight, k: usize) -> Result<Vec<f64>> {
    let factors = weight
        .shifted_diagonal()
        .ok_or_else(|| Error::InvalidWeight("spectral distances need a diagonal weight".into()))?;
    if factors.len() < k {
        return Err(Error::IndexOutOfRange { index: k, len: factors.len() });
    }
    Ok(factors)
}

fn log_shifted(values: &[f64], shift: f64, k: usize) -> Result<Vec<f64>> {
    if values.len() < k {
        return Err(Error::IndexOutOfRange { index: k, len: values.len() });
    }
    values[..k]
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let v = l + shift;
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::NonPositiveShiftedEigenvalue { index, value: v })
            }
        })
        .collect()
}

/// Generalized Log-Hilbert-Schmidt distance
/// `‖log(X + δI) − log(Y + γI)‖_{M⁻¹}` between truncated extended operators,
/// i.e. `sqrt(Σ_i [log(λ_i^X + δ) − log(λ_i^Y + γ)]² / (ω_i + ρ))`.
pub fn generalized_log_hs(
    tx: &ExtendedOperator,
    ty: &ExtendedOperator,
    weight: &MetricWeight,
) -> Result<DistanceResult> {
    let k = tx.truncation();
    if ty.truncation() != k {
        return Err(Error::DimensionMismatch { expected: k, found: ty.truncation() });
    }
    let factors = diagonal_factors(weight, k)?;
    let lx = log_shifted(tx.eigenvalues(), tx.shift(), k)?;
    let ly = log_shifted(ty.eigenvalues(), ty.shift(), k)?;
    let (mut trace_x, mut trace_y, mut cross, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        let f = factors[i];
        trace_x += lx[i] * lx[i] / f;
        trace_y += ly[i] * ly[i] / f;
        cross += lx[i] * ly[i] / f;
        sq += (lx[i] - ly[i]).powi(2) / f;
    }
    Ok(DistanceResult { value: sq.sqrt(), breakdown: Some(TraceBreakdown::new(trace_x, trace_y, cross)) })
}

/// Truncated generalized Log-Euclidean Signature distance,
/// `d² = Σ_{i<K} [log(λ_i^X + δ) − log(λ_i^Y + γ)]² / (ω_i + ρ)²`.
pub fn gles_distance(
    spec_x: &[f64],
    delta: f64,
    spec_y: &[f64],
    gamma: f64,
    weight: &MetricWeight,
    k: usize,
) -> Result<DistanceResult> {
    let factors = diagonal_factors(weight, k)?;
    let lx = log_shifted(spec_x, delta, k)?;
    let ly = log_shifted(spec_y, gamma, k)?;
    let (mut trace_x, mut trace_y, mut cross, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        let f = factors[i] * factors[i];
        trace_x += lx[i] * lx[i] / f;
        trace_y += ly[i] * ly[i] / f;
        cross += lx[i] * ly[i] / f;
        sq += (lx[i] - ly[i]).powi(2) / f;
    }
    Ok(DistanceResult { value: sq.sqrt(), breakdown: Some(TraceBreakdown::new(trace_x, trace_y, cross)) })
}

/// Log-Euclidean Signature baseline: [`gles_distance`] with `ω = 0`, `ρ = 1`
/// and `δ = γ = 1e-8`.
pub fn les_distance(spec_x: &[f64], spec_y: &[f64], k: usize) -> Result<DistanceResult> {
    let weight = MetricWeight::diagonal(vec![0.0; k], 1.0)?;
    gles_distance(spec_x, LES_SHIFT, spec_y, LES_SHIFT, &weight, k)
}

/// 2-Wasserstein distance between `N(m1, X)` and `N(m2, Y)` under the
/// ground cost `‖x − y‖_{M⁻¹}`.
pub fn gaussian_w2_generalized(
    m1: &DVector<f64>,
    x: &SpdMatrix,
    m2: &DVector<f64>,
    y: &SpdMatrix,
    weight: &MetricWeight,
) -> Result<DistanceResult> {
    check_same_dim(x, y)?;
    for m in [m1, m2] {
        if m.len() != x.dim() {
            return Err(Error::DimensionMismatch { expected: x.dim(), found: m.len() });
        }
    }
    let inverse = resolve_inverse(x, y, weight)?;
    let shift = m1 - m2;
    let mean_term = shift.dot(&(&inverse * &shift)).max(0.0);
    let covariance = gbw_with_inverse(x, y, &inverse)?;
    let breakdown = covariance.breakdown.map(|b| TraceBreakdown { mean_term, ..b });
    Ok(DistanceResult { value: (mean_term + covariance.squared()).sqrt(), breakdown })
}
