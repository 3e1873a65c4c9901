//! Symmetric eigendecomposition, SPD matrix functions and Mahalanobis norms.
//!
//! Every distance in this crate is assembled from a [`Spectrum`]: the matrix is
//! diagonalized once, scalar functions are applied to the eigenvalues, and the
//! result is rotated back, `f(A) = V diag(f(λ)) Vᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative tolerance below which eigenvalues are treated as zero.
pub const DEFAULT_PSD_TOLERANCE: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const EIGEN_MAX_ITERATIONS: usize = 100_000;

/// Eigenvalues sorted descending with the matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    /// Builds a spectrum from unsorted eigenpairs, sorting them descending and
    /// fixing the sign of each eigenvector so its largest-magnitude entry is
    /// nonnegative.
    pub fn from_eigenpairs(eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));

        let rows = eigenvectors.nrows();
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eigenvalues[i]));
        let mut vectors = DMatrix::zeros(rows, order.len());
        for (dst, &src) in order.iter().enumerate() {
            let mut column = eigenvectors.column(src).clone_owned();
            let pivot = column
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
            if rows > 0 && column[pivot.0] < 0.0 {
                column.neg_mut();
            }
            vectors.set_column(dst, &column);
        }
        Self { eigenvalues: values, eigenvectors: vectors }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Number of retained eigenpairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Ambient dimension (rows of the eigenvector matrix).
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `V diag(f(λ)) Vᵀ`, symmetrized to remove rounding asymmetry.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f(*lambda));
        }
        symmetrize(&(scaled * self.eigenvectors.transpose()))
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply(|v| v)
    }

    /// Maps the eigenvalues through `f` and re-sorts, keeping eigenvectors.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Spectrum {
        let values = self.eigenvalues.map(f);
        Spectrum::from_eigenpairs(values, self.eigenvectors.clone())
    }

    /// Keeps the `k` leading eigenpairs.
    pub fn truncate(&self, k: usize) -> Result<Spectrum> {
        if k > self.len() {
            return Err(Error::IndexOutOfRange { index: k, len: self.len() });
        }
        Ok(Spectrum {
            eigenvalues: self.eigenvalues.rows(0, k).clone_owned(),
            eigenvectors: self.eigenvectors.columns(0, k).clone_owned(),
        })
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Checks `|a_ij - a_ji| <= 1e-12 * max(1, |a_ij|)` for every entry.
pub fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if !(gap <= SYMMETRY_TOLERANCE * a[(i, j)].abs().max(1.0)) {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

/// Symmetric eigendecomposition with descending eigenvalues and
/// sign-normalized eigenvectors.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<Spectrum> {
    check_symmetric(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence);
    }
    let eig = SymmetricEigen::try_new(symmetrize(a), f64::EPSILON, EIGEN_MAX_ITERATIONS)
        .ok_or(Error::NoConvergence)?;
    Ok(Spectrum::from_eigenpairs(eig.eigenvalues, eig.eigenvectors))
}

/// Dense symmetric positive semidefinite matrix together with its spectrum.
///
/// Eigenvalues down to `-psd_tolerance * ‖A‖₂` are accepted and clipped to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    spectrum: Spectrum,
    psd_tolerance: f64,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(matrix, DEFAULT_PSD_TOLERANCE)
    }

    pub fn with_tolerance(matrix: DMatrix<f64>, psd_tolerance: f64) -> Result<Self> {
        let spectrum = sym_eig(&matrix)?;
        Self::assemble(symmetrize(&matrix), spectrum, psd_tolerance)
    }

    /// Builds the matrix `V diag(λ) Vᵀ` from an existing decomposition.
    pub fn from_spectrum(spectrum: Spectrum) -> Result<Self> {
        let matrix = spectrum.reconstruct();
        Self::assemble(matrix, spectrum, DEFAULT_PSD_TOLERANCE)
    }

    /// Like [`SpdMatrix::from_spectrum`] but clips every negative eigenvalue to
    /// zero first, whatever its magnitude.
    pub fn from_spectrum_clipped(spectrum: Spectrum) -> Result<Self> {
        Self::from_spectrum(spectrum.map(|v| v.max(0.0)))
    }

    pub fn identity(n: usize) -> Self {
        let spectrum = Spectrum::from_eigenpairs(DVector::from_element(n, 1.0), DMatrix::identity(n, n));
        Self { matrix: DMatrix::identity(n, n), spectrum, psd_tolerance: DEFAULT_PSD_TOLERANCE }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    fn assemble(matrix: DMatrix<f64>, spectrum: Spectrum, psd_tolerance: f64) -> Result<Self> {
        if !(psd_tolerance >= 0.0) {
            return Err(Error::InvalidWeight(format!("psd tolerance must be nonnegative, got {psd_tolerance}")));
        }
        let floor = -psd_tolerance * spectrum.max_abs_eigenvalue();
        let min = spectrum.min_eigenvalue();
        if min < floor {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        let spectrum = if min < 0.0 { spectrum.map(|v| v.max(0.0)) } else { spectrum };
        Ok(Self { matrix, spectrum, psd_tolerance })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn psd_tolerance(&self) -> f64 {
        self.psd_tolerance
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.spectrum.max_abs_eigenvalue()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum.min_eigenvalue()
    }

    /// True when the smallest eigenvalue exceeds `psd_tolerance * ‖A‖₂`.
    pub fn is_positive_definite(&self) -> bool {
        self.dim() == 0 || self.min_eigenvalue() > self.psd_tolerance * self.spectral_norm()
    }

    fn require_positive_definite(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::SingularMatrix { min_eigenvalue: self.min_eigenvalue() })
        }
    }
}

/// `A^α = V diag(λ^α) Vᵀ`.
pub fn spd_power(a: &SpdMatrix, alpha: f64) -> Result<SpdMatrix> {
    if !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    if alpha == 0.0 {
        return Ok(SpdMatrix::identity(a.dim()));
    }
    if alpha < 0.0 {
        a.require_positive_definite()?;
    }
    let spectrum = a.spectrum().map(|v| if v <= 0.0 { 0.0 } else { v.powf(alpha) });
    let matrix = spectrum.reconstruct();
    Ok(SpdMatrix { matrix, spectrum, psd_tolerance: a.psd_tolerance })
}

/// Principal matrix logarithm of a positive definite matrix.
pub fn spd_log(a: &SpdMatrix) -> Result<DMatrix<f64>> {
    a.require_positive_definite()?;
    Ok(a.spectrum().apply(f64::ln))
}

/// Orthogonal factor `U` of the polar decomposition `Q = U P`, computed as
/// `U = W Zᵀ` from the SVD `Q = W Σ Zᵀ`.
pub fn orthogonal_polar_factor(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch { expected: q.nrows(), found: q.ncols() });
    }
    if q.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = q.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(ratio > 1e-12) {
        return Err(Error::RankDeficient { ratio });
    }
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::NoConvergence);
    };
    Ok(u * v_t)
}

/// Shape of a Mahalanobis weight.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightForm {
    /// Full SPD matrix `M`.
    Full(SpdMatrix),
    /// Eigenvalues `ω` of `M`, paired with operator spectra by descending rank.
    Diagonal(Vec<f64>),
}

/// Mahalanobis weight `(M + ρI)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricWeight {
    form: WeightForm,
    rho: f64,
}

impl MetricWeight {
    /// `M = I`, `ρ = 0`: the Frobenius norm.
    pub fn identity(n: usize) -> Self {
        Self { form: WeightForm::Full(SpdMatrix::identity(n)), rho: 0.0 }
    }

    pub fn full(m: SpdMatrix, rho: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidWeight(format!("rho must be finite and nonnegative, got {rho}")));
        }
        if rho == 0.0 && !m.is_positive_definite() {
            return Err(Error::SingularMatrix { min_eigenvalue: m.min_eigenvalue() });
        }
        Ok(Self { form: WeightForm::Full(m), rho })
    }

    pub fn diagonal(omega: Vec<f64>, rho: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidWeight(format!("rho must be finite and nonnegative, got {rho}")));
        }
        if let Some((i, w)) = omega.iter().enumerate().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeight(format!("omega[{i}] = {w} must be finite and nonnegative")));
        }
        if let Some(i) = omega.iter().position(|w| !(w + rho > 0.0)) {
            return Err(Error::InvalidWeight(format!("omega[{i}] + rho must be positive")));
        }
        Ok(Self { form: WeightForm::Diagonal(omega), rho })
    }

    pub fn form(&self) -> &WeightForm {
        &self.form
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Dimension of a full weight, or the length of `ω`.
    pub fn dim(&self) -> usize {
        match &self.form {
            WeightForm::Full(m) => m.dim(),
            WeightForm::Diagonal(omega) => omega.len(),
        }
    }

    /// `ω_i + ρ` for a diagonal weight.
    pub fn shifted_diagonal(&self) -> Option<Vec<f64>> {
        match &self.form {
            WeightForm::Diagonal(omega) => Some(omega.iter().map(|w| w + self.rho).collect()),
            WeightForm::Full(_) => None,
        }
    }

    /// `(M + ρI)⁻¹` as a dense matrix. A diagonal weight is taken in the
    /// standard basis.
    pub fn inverse_matrix(&self) -> Result<DMatrix<f64>> {
        match &self.form {
            WeightForm::Full(m) => {
                let spectrum = m.spectrum();
                let min = spectrum.min_eigenvalue() + self.rho;
                if !(min > m.psd_tolerance() * (spectrum.max_abs_eigenvalue() + self.rho)) {
                    return Err(Error::SingularMatrix { min_eigenvalue: min });
                }
                Ok(spectrum.apply(|v| 1.0 / (v + self.rho)))
            }
            WeightForm::Diagonal(omega) => {
                let inv = DVector::from_iterator(omega.len(), omega.iter().map(|w| 1.0 / (w + self.rho)));
                Ok(DMatrix::from_diagonal(&inv))
            }
        }
    }

    /// Same weight expressed as a full matrix `V diag(ω) Vᵀ` in the basis given
    /// by the columns of `basis`. Column `i` is paired with `ω_i`.
    pub fn in_basis(&self, basis: &DMatrix<f64>) -> Result<MetricWeight> {
        match &self.form {
            WeightForm::Full(_) => Ok(self.clone()),
            WeightForm::Diagonal(omega) => {
                if basis.ncols() != omega.len() {
                    return Err(Error::DimensionMismatch { expected: basis.ncols(), found: omega.len() });
                }
                let spectrum = Spectrum::from_eigenpairs(DVector::from_column_slice(omega), basis.clone());
                let m = SpdMatrix::from_spectrum(spectrum)?;
                Ok(MetricWeight { form: WeightForm::Full(m), rho: self.rho })
            }
        }
    }
}

/// `‖X‖_{M⁻¹} = sqrt(tr(Xᵀ (M + ρI)⁻¹ X))`.
pub fn mahalanobis_norm(x: &DMatrix<f64>, weight: &MetricWeight) -> Result<f64> {
    if x.nrows() != weight.dim() {
        return Err(Error::DimensionMismatch { expected: weight.dim(), found: x.nrows() });
    }
    let inverse = weight.inverse_matrix()?;
    Ok(weighted_trace(x, &inverse).max(0.0).sqrt())
}

/// `tr(Xᵀ W X)` for a symmetric weight `W`.
pub(crate) fn weighted_trace(x: &DMatrix<f64>, inverse: &DMatrix<f64>) -> f64 {
    x.component_mul(&(inverse * x)).sum()
}

/// Marker for the dimension of the space an [`ExtendedOperator`] acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientDim {
    Finite(usize),
    Unbounded,
}

/// Truncated spectrum of `X` together with a scalar shift, standing in for
/// the extended operator `X + δI`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedOperator {
    eigenvalues: Vec<f64>,
    shift: f64,
    ambient: AmbientDim,
}

impl ExtendedOperator {
    /// `eigenvalues` must be sorted descending and satisfy `λ_i + δ > 0`.
    pub fn new(eigenvalues: Vec<f64>, shift: f64, ambient: AmbientDim) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParams(format!("shift must be finite and nonnegative, got {shift}")));
        }
        if let AmbientDim::Finite(n) = ambient {
            if eigenvalues.len() > n {
                return Err(Error::DimensionMismatch { expected: n, found: eigenvalues.len() });
            }
        }
        if let Some(i) = eigenvalues.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::InvalidParams(format!("eigenvalues not sorted descending at index {}", i + 1)));
        }
        if let Some((index, value)) = eigenvalues
            .iter()
            .map(|l| l + shift)
            .enumerate()
            .find(|(_, v)| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveShiftedEigenvalue { index, value });
        }
        Ok(Self { eigenvalues, shift, ambient })
    }

    /// The `k` leading eigenvalues of `a`, shifted by `shift`.
    pub fn from_spd(a: &SpdMatrix, k: usize, shift: f64) -> Result<Self> {
        let spectrum = a.spectrum().truncate(k)?;
        Self::new(spectrum.eigenvalues().iter().copied().collect(), shift, AmbientDim::Finite(a.dim()))
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn ambient(&self) -> AmbientDim {
        self.ambient
    }

    /// Truncation length `K`.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_i + δ`.
    pub fn shifted_eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().map(move |l| l + self.shift)
    }
}

/// `sqrt(Σ_{i≤K} (λ_i + δ)² / (ω_i + ρ))`, with spectra paired by rank.
pub fn extended_mahalanobis_norm(op: &ExtendedOperator, weight: &MetricWeight) -> Result<f64> {
    let factors = weight
        .shifted_diagonal()
        .ok_or_else(|| Error::InvalidWeight("extended norm needs a diagonal weight".into()))?;
    if factors.len() < op.truncation() {
        return Err(Error::DimensionMismatch { expected: op.truncation(), found: factors.len() });
    }
    let sum: f64 = op.shifted_eigenvalues().zip(&factors).map(|(v, f)| v * v / f).sum();
    Ok(sum.sqrt())
}

/// `tr((S)^{1/2})` for a PSD matrix given up to rounding: the input is
/// symmetrized and negative eigenvalues are clipped before the root.
pub(crate) fn trace_sqrt_psd(s: &DMatrix<f64>) -> Result<f64> {
    let spectrum = sym_eig(&symmetrize(s))?;
    Ok(spectrum.eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum())
}
