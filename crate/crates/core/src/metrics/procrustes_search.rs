//! Brute-force minimization over the orthogonal group, used as an oracle for
//! the closed-form alpha-Procrustes distance in small dimensions.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{resolve_inverse, DistanceResult};
use crate::error::{Error, Result};
use crate::sampling::random_orthogonal;
use crate::spd::{spd_power, weighted_trace, MetricWeight, SpdMatrix};

const SEARCH_SEED: u64 = 0x5eed_0a11;
const GOLDEN: f64 = 0.618_033_988_749_894_9;
const REFINE_SWEEPS: usize = 200;

/// `‖(A − B O)/α‖²_W` evaluated directly.
struct Objective {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    inverse: DMatrix<f64>,
    scale: f64,
}

impl Objective {
    fn eval(&self, o: &DMatrix<f64>) -> f64 {
        let diff = &self.a - &self.b * o;
        weighted_trace(&diff, &self.inverse) * self.scale
    }
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-12 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn planar(theta: f64, reflect: bool) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    if reflect {
        DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
    } else {
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }
}

fn search_plane(obj: &Objective, budget: usize) -> f64 {
    let points = budget.max(16);
    let spacing = std::f64::consts::TAU / points as f64;
    let mut best = f64::INFINITY;
    for reflect in [false, true] {
        let (mut best_theta, mut best_val) = (0.0, f64::INFINITY);
        for i in 0..points {
            let theta = i as f64 * spacing;
            let v = obj.eval(&planar(theta, reflect));
            if v < best_val {
                best_val = v;
                best_theta = theta;
            }
        }
        let (_, refined) = golden_section(best_theta - spacing, best_theta + spacing, |t| {
            obj.eval(&planar(t, reflect))
        });
        best = best.min(refined).min(best_val);
    }
    best
}

/// Right-multiplies `o` by the rotation of angle `t` in the `(i, j)` plane.
fn rotate_columns(o: &DMatrix<f64>, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let (s, c) = t.sin_cos();
    let mut out = o.clone();
    for r in 0..o.nrows() {
        let (oi, oj) = (o[(r, i)], o[(r, j)]);
        out[(r, i)] = c * oi + s * oj;
        out[(r, j)] = -s * oi + c * oj;
    }
    out
}

/// Cyclic golden-section descent over plane rotations. Along each plane the
/// objective is `a + b cos t + c sin t`, so `[−π/2, π/2]` brackets the
/// minimum once the iterate is near-optimal.
fn refine(obj: &Objective, mut o: DMatrix<f64>) -> f64 {
    let n = o.nrows();
    let mut value = obj.eval(&o);
    for _ in 0..REFINE_SWEEPS {
        let before = value;
        for i in 0..n {
            for j in (i + 1)..n {
                let half = std::f64::consts::FRAC_PI_2;
                let (t, v) = golden_section(-half, half, |t| obj.eval(&rotate_columns(&o, i, j, t)));
                if v < value {
                    o = rotate_columns(&o, i, j, t);
                    value = v;
                }
            }
        }
        if before - value <= 1e-15 * before.abs().max(1e-300) {
            break;
        }
    }
    value
}

fn search_sampled(obj: &Objective, n: usize, budget: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED);
    // Best sample per determinant class; plane rotations never change it.
    let mut best: [Option<(f64, DMatrix<f64>)>; 2] = [None, None];
    for _ in 0..budget.max(1) {
        let o = random_orthogonal(n, &mut rng);
        let v = obj.eval(&o);
        let class = usize::from(o.determinant() < 0.0);
        if best[class].as_ref().is_none_or(|(bv, _)| v < *bv) {
            best[class] = Some((v, o));
        }
    }
    best.into_iter()
        .flatten()
        .map(|(_, o)| refine(obj, o))
        .fold(f64::INFINITY, f64::min)
}

/// `min_{O ∈ O(n)} ‖(X^α − Y^α O)/α‖_{M⁻¹}` by direct search.
///
/// `n = 1` enumerates `O = ±1`. `n = 2` scans `search_budget` angles in both
/// components of O(2) and refines the best with golden section. `n = 3, 4`
/// draws `search_budget` Haar samples and refines the best of each
/// component by plane rotations. The returned value is attained by an actual
/// orthogonal matrix, so it never undercuts the true minimum.
pub fn alpha_procrustes_numeric(
    x: &SpdMatrix,
    y: &SpdMatrix,
    alpha: f64,
    weight: &MetricWeight,
    search_budget: usize,
) -> Result<DistanceResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let n = x.dim();
    if n > 4 {
        return Err(Error::DimensionTooLarge(n));
    }
    if y.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.dim() });
    }
    let inverse = resolve_inverse(x, y, weight)?;
    let obj = Objective {
        a: spd_power(x, alpha)?.into_matrix(),
        b: spd_power(y, alpha)?.into_matrix(),
        inverse,
        scale: 1.0 / (alpha * alpha),
    };
    let sq = match n {
        0 => 0.0,
        1 => {
            let plus = obj.eval(&DMatrix::from_element(1, 1, 1.0));
            let minus = obj.eval(&DMatrix::from_element(1, 1, -1.0));
            plus.min(minus)
        }
        2 => search_plane(&obj, search_budget),
        _ => search_sampled(&obj, n, search_budget),
    };
    Ok(DistanceResult { value: sq.max(0.0).sqrt(), breakdown: None })
}
