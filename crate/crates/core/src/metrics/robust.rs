//! Robust GBW: the largest GBW distance over weights `Ω = (M + ρI)⁻¹` in
//! `{Ω : 0 ⪯ Ω ⪯ I, tr Ω = k}`, the convex hull of rank-`k` projections.
//!
//! The objective `f(Ω) = tr(Ω(X + Y)) − 2 tr(X^{1/2} Ω Y Ω X^{1/2})^{1/2}` is
//! concave but not smooth where the inner matrix loses rank, and plain
//! projected ascent stalls at those kinks. The solver therefore ascends the
//! smoothed surrogate
//!
//! ```text
//! f_μ(Ω) = tr(Ω(X + Y)) − 2 Σ_i sqrt(σ_i + μ²),   σ = eig(X^{1/2} Ω Y Ω X^{1/2})
//! ```
//!
//! for a decreasing sequence of `μ`. Each `f_μ` is concave, `f_μ ≤ f` and
//! `f_μ` grows as `μ` shrinks, so the recorded trace is nondecreasing across
//! stages as well as within them.

use nalgebra::{DMatrix, DVector};

use super::bures_wasserstein;
use crate::error::{Error, Result};
use crate::spd::{spd_power, sym_eig, symmetrize, SpdMatrix, Spectrum};

const BISECTION_STEPS: usize = 200;
const SMOOTHING_START: f64 = 1e-1;
const SMOOTHING_END: f64 = 1e-9;
const SMOOTHING_DECAY: f64 = 10.0;
const MIN_STEP: f64 = 1e-14;

/// `{Ω : 0 ⪯ Ω ⪯ I, tr Ω = budget}` in dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OmegaConstraintSet {
    dim: usize,
    budget: usize,
}

impl OmegaConstraintSet {
    pub fn new(dim: usize, budget: usize) -> Result<Self> {
        if budget == 0 || budget > dim {
            return Err(Error::InfeasibleBudget { budget, dim });
        }
        Ok(Self { dim, budget })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// The barycenter `(k/n) I`.
    pub fn center(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (self.budget as f64 / self.dim as f64)
    }
}

/// Projects `v` onto `{u ∈ [0, 1]ⁿ : Σu = k}` as `u = clip(v − τ, 0, 1)`.
fn project_capped_simplex(v: &DVector<f64>, k: f64) -> DVector<f64> {
    let clipped_sum = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).sum::<f64>();
    // The sum is nonincreasing in τ: n at `lo`, 0 at `hi`.
    let mut lo = v.min() - 1.0;
    let mut hi = v.max();
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clipped_sum(mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.map(|x| (x - tau).clamp(0.0, 1.0))
}

/// Frobenius projection of a symmetric `s` onto `set`.
pub fn project_to_omega_set(s: &DMatrix<f64>, set: &OmegaConstraintSet) -> Result<SpdMatrix> {
    if s.nrows() != set.dim || s.ncols() != set.dim {
        return Err(Error::DimensionMismatch { expected: set.dim, found: s.nrows() });
    }
    let spectrum = sym_eig(&symmetrize(s))?;
    let projected = project_capped_simplex(spectrum.eigenvalues(), set.budget as f64);
    SpdMatrix::from_spectrum_clipped(Spectrum::from_eigenpairs(
        projected,
        spectrum.eigenvectors().clone(),
    ))
}

/// Precomputed pieces shared by objective and gradient evaluations.
struct Problem {
    sum: DMatrix<f64>,
    y: DMatrix<f64>,
    x_half: DMatrix<f64>,
}

impl Problem {
    fn new(x: &SpdMatrix, y: &SpdMatrix) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
        }
        Ok(Self {
            sum: x.matrix() + y.matrix(),
            y: y.matrix().clone(),
            x_half: spd_power(x, 0.5)?.into_matrix(),
        })
    }

    fn inner(&self, omega: &DMatrix<f64>) -> Result<Spectrum> {
        let t = &self.x_half * omega * &self.y * omega * &self.x_half;
        sym_eig(&symmetrize(&t))
    }

    fn linear(&self, omega: &DMatrix<f64>) -> f64 {
        self.sum.component_mul(omega).sum()
    }

    fn value(&self, omega: &DMatrix<f64>, mu: f64) -> Result<f64> {
        let inner = self.inner(omega)?;
        let roots: f64 = inner.eigenvalues().iter().map(|s| (s.max(0.0) + mu * mu).sqrt()).sum();
        Ok(self.linear(omega) - 2.0 * roots)
    }

    /// `X + Y − (A + Aᵀ)` with `A = Y Ω X^{1/2} (T + μ²I)^{-1/2} X^{1/2}`.
    /// At `μ = 0` the inverse root is taken on the range of `T`.
    fn gradient(&self, omega: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
        let inner = self.inner(omega)?;
        let top = inner.max_abs_eigenvalue();
        let inv_root = inner.apply(|s| {
            let s = s.max(0.0);
            if mu > 0.0 {
                1.0 / (s + mu * mu).sqrt()
            } else if s > 1e-14 * top {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        });
        let a = &self.y * omega * &self.x_half * inv_root * &self.x_half;
        Ok(&self.sum - (&a + a.transpose()))
    }
}

/// `d²_GBW(X, Y)` with the inverse weight `Ω` supplied directly.
pub fn robust_gbw_objective(x: &SpdMatrix, y: &SpdMatrix, omega: &DMatrix<f64>) -> Result<f64> {
    let problem = Problem::new(x, y)?;
    check_square(omega, x.dim())?;
    problem.value(omega, 0.0)
}

/// Gradient of [`robust_gbw_objective`] with respect to `Ω`; exact where
/// `X^{1/2} Ω Y Ω X^{1/2}` is nonsingular.
pub fn robust_gbw_gradient(x: &SpdMatrix, y: &SpdMatrix, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let problem = Problem::new(x, y)?;
    check_square(omega, x.dim())?;
    problem.gradient(omega, 0.0)
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
    }
    Ok(())
}

/// Projected-ascent settings. `max_iter` bounds each smoothing stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub initial_step: f64,
    pub backtrack: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { initial_step: 1.0, backtrack: 0.5, max_iter: 500, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct RobustGbwSolution {
    /// Unsmoothed objective at `omega_star`.
    pub distance_sq: f64,
    pub omega_star: SpdMatrix,
    /// Accepted ascent steps over all smoothing stages.
    pub iterations: usize,
    /// Smoothed objective after every accepted step and stage change.
    pub ascent_trace: Vec<f64>,
}

/// Robust GBW by projected gradient ascent with backtracking, started from
/// the barycenter `(k/n) I`.
pub fn robust_gbw(
    x: &SpdMatrix,
    y: &SpdMatrix,
    set: &OmegaConstraintSet,
    options: &AscentOptions,
) -> Result<RobustGbwSolution> {
    let n = x.dim();
    if set.dim != n {
        return Err(Error::DimensionMismatch { expected: n, found: set.dim });
    }
    for m in [x, y] {
        if !m.is_positive_definite() {
            return Err(Error::SingularMatrix { min_eigenvalue: m.min_eigenvalue() });
        }
    }
    if set.budget == n {
        let bw = bures_wasserstein(x, y)?.squared();
        return Ok(RobustGbwSolution {
            distance_sq: bw,
            omega_star: SpdMatrix::identity(n),
            iterations: 0,
            ascent_trace: vec![bw],
        });
    }

    let problem = Problem::new(x, y)?;
    let scale = problem.sum.trace() / n as f64;
    let mut mu = SMOOTHING_START * scale;
    let mut omega = set.center();
    let mut current = problem.value(&omega, mu)?;
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut first_step = true;

    loop {
        let mut step = options.initial_step;
        for _ in 0..options.max_iter {
            let grad = problem.gradient(&omega, mu)?;
            let mut t = 2.0 * step;
            let mut accepted = None;
            while t >= MIN_STEP {
                let candidate = project_to_omega_set(&(&omega + &grad * t), set)?.into_matrix();
                let value = problem.value(&candidate, mu)?;
                if value >= current {
                    accepted = Some((candidate, value));
                    break;
                }
                t *= options.backtrack;
            }
            let Some((candidate, value)) = accepted else {
                if first_step && !is_stationary(&omega, &grad, set)? {
                    return Err(Error::NoAscent);
                }
                break;
            };
            first_step = false;
            iterations += 1;
            step = t;
            let gain = value - current;
            omega = candidate;
            current = value;
            trace.push(current);
            if gain < options.tol * current.abs().max(1.0) {
                break;
            }
        }
        if mu <= SMOOTHING_END * scale {
            break;
        }
        mu /= SMOOTHING_DECAY;
        current = problem.value(&omega, mu)?;
        trace.push(current);
    }

    let distance_sq = problem.value(&omega, 0.0)?.max(0.0);
    Ok(RobustGbwSolution {
        distance_sq,
        omega_star: SpdMatrix::from_spectrum_clipped(sym_eig(&symmetrize(&omega))?)?,
        iterations,
        ascent_trace: trace,
    })
}

/// Whether the projected-gradient map leaves `omega` (numerically) in place.
fn is_stationary(omega: &DMatrix<f64>, grad: &DMatrix<f64>, set: &OmegaConstraintSet) -> Result<bool> {
    let moved = project_to_omega_set(&(omega + grad), set)?.into_matrix() - omega;
    Ok(moved.norm() <= 1e-6 * omega.norm().max(1.0))
}
