//! Tori point clouds and their diffusion operators.
//!
//! A 2-torus with radii `(R, r)` lives in R³,
//! `((R + r cos v) cos u, (R + r cos v) sin u, r sin v)`. The 3-torus with
//! radii `(R, r₁, r₂)` revolves the tube of that surface once more into a
//! fourth coordinate: the tube radius becomes `r₁ + r₂ cos w` and
//! `x₄ = r₂ sin w`, so `r₂ → 0` collapses it onto the 2-torus.
//!
//! Angles are drawn uniformly in parameter space, not by surface area.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::spd::{sym_eig, symmetrize, SpdMatrix};

/// Intrinsic dimension, major radius and base minor radii of a torus, plus
/// the factor `c ∈ (0, 1]` applied to every minor radius.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusParams {
    major: f64,
    minor: Vec<f64>,
    minor_scale: f64,
}

impl TorusParams {
    /// `radii = (R, r)` for a 2-torus or `(R, r₁, r₂)` for a 3-torus.
    /// Requires `R > Σ r` and, for the 3-torus, `r₂ < r₁`, so the embedding
    /// does not self-intersect.
    pub fn new(radii: &[f64]) -> Result<Self> {
        let (&major, minor) = radii
            .split_first()
            .ok_or_else(|| Error::InvalidParams("no radii given".into()))?;
        if !(1..=2).contains(&minor.len()) {
            return Err(Error::InvalidParams(format!(
                "expected 2 or 3 radii, got {}",
                radii.len()
            )));
        }
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParams(format!("radii must be positive, got {radii:?}")));
        }
        if major <= minor.iter().sum::<f64>() {
            return Err(Error::InvalidParams("major radius must exceed the summed minor radii".into()));
        }
        if minor.len() == 2 && minor[1] >= minor[0] {
            return Err(Error::InvalidParams("inner tube radius must be below the outer one".into()));
        }
        Ok(Self { major, minor: minor.to_vec(), minor_scale: 1.0 })
    }

    /// Default 2-torus, `(R, r) = (2, 0.8)`.
    pub fn default_t2() -> Self {
        Self::new(&[2.0, 0.8]).expect("valid defaults")
    }

    /// Default 3-torus, `(R, r₁, r₂) = (2, 0.8, 0.4)`.
    pub fn default_t3() -> Self {
        Self::new(&[2.0, 0.8, 0.4]).expect("valid defaults")
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.minor.len() + 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.minor.len() + 2
    }

    pub fn major_radius(&self) -> f64 {
        self.major
    }

    pub fn minor_scale(&self) -> f64 {
        self.minor_scale
    }

    /// Minor radii after scaling by `c`.
    pub fn minor_radii(&self) -> Vec<f64> {
        self.minor.iter().map(|r| r * self.minor_scale).collect()
    }

    /// Distance from the implicit surface, zero for points on the torus.
    pub fn surface_residual(&self, point: &[f64]) -> f64 {
        let radii = self.minor_radii();
        let s = point[0].hypot(point[1]) - self.major;
        match radii.as_slice() {
            [r] => (s.hypot(point[2]) - r).abs(),
            [r1, r2] => {
                let t = s.hypot(point[2]) - r1;
                (t.hypot(point[3]) - r2).abs()
            }
            _ => unreachable!("validated in new"),
        }
    }
}

/// Multiplies every minor radius by `c ∈ (0, 1]`; scales compose.
pub fn scale_minor_radius(params: &TorusParams, c: f64) -> Result<TorusParams> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidScale(c));
    }
    Ok(TorusParams { minor_scale: params.minor_scale * c, ..params.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CloudSource {
    Torus(TorusParams),
    External,
}

/// `N × d` points, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    source: CloudSource,
    seed: u64,
}

impl PointCloud {
    pub fn external(points: DMatrix<f64>, seed: u64) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::DegenerateCloud(format!("need at least 2 points, got {}", points.nrows())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCloud("non-finite coordinate".into()));
        }
        Ok(Self { points, source: CloudSource::External, seed })
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn source(&self) -> &CloudSource {
        &self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    /// Text form: a `#` header line, then one space-separated point per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match &self.source {
            CloudSource::Torus(p) => {
                let radii: Vec<String> = p.minor_radii().iter().map(|r| format!("{r}")).collect();
                let _ = writeln!(
                    out,
                    "# torus d={} R={} r={} seed={}",
                    p.intrinsic_dim(),
                    p.major,
                    radii.join(","),
                    self.seed
                );
            }
            CloudSource::External => {
                let _ = writeln!(out, "# external seed={}", self.seed);
            }
        }
        for row in self.points.row_iter() {
            let coords: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&coords.join(" "));
            out.push('\n');
        }
        out
    }
}

impl FromStr for PointCloud {
    type Err = Error;

    /// Parses [`PointCloud::to_text`] output. A torus header restores the
    /// scaled radii with `c = 1`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::DegenerateCloud(msg);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing '#' header".into()))?
            .split_whitespace()
            .collect();
        let value = |key: &str| {
            fields
                .iter()
                .find_map(|f| f.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
                .ok_or_else(|| bad(format!("header lacks {key}=")))
        };
        let seed: u64 = value("seed")?.parse().map_err(|e| bad(format!("seed: {e}")))?;
        let source = match fields.first() {
            Some(&"torus") => {
                let major: f64 = value("R")?.parse().map_err(|e| bad(format!("R: {e}")))?;
                let mut radii = vec![major];
                for r in value("r")?.split(',') {
                    radii.push(r.parse().map_err(|e| bad(format!("r: {e}")))?);
                }
                let params = TorusParams::new(&radii)?;
                let d: usize = value("d")?.parse().map_err(|e| bad(format!("d: {e}")))?;
                if d != params.intrinsic_dim() {
                    return Err(bad(format!("d={d} disagrees with {} minor radii", radii.len() - 1)));
                }
                CloudSource::Torus(params)
            }
            Some(&"external") => CloudSource::External,
            other => return Err(bad(format!("unknown cloud kind {other:?}"))),
        };

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if rows.first().is_some_and(|first| first.len() != row.len()) {
                return Err(bad(format!("line {} has {} coordinates", i + 2, row.len())));
            }
            rows.push(row);
        }
        let cols = rows.first().map_or(0, Vec::len);
        let points = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]);
        let mut cloud = PointCloud::external(points, seed)?;
        if let CloudSource::Torus(p) = &source {
            if cols != p.ambient_dim() {
                return Err(bad(format!("expected {} coordinates, got {cols}", p.ambient_dim())));
            }
        }
        cloud.source = source;
        Ok(cloud)
    }
}

/// `n` points on the torus with angles uniform on `[0, 2π)`, deterministic
/// in `seed`.
pub fn sample_torus(params: &TorusParams, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
    let radii = params.minor_radii();
    let big = params.major;
    let mut points = DMatrix::zeros(n, params.ambient_dim());
    for i in 0..n {
        let u: f64 = angle.sample(&mut rng);
        let v: f64 = angle.sample(&mut rng);
        let (tube, x4) = match radii.as_slice() {
            [r] => (*r, None),
            [r1, r2] => {
                let w: f64 = angle.sample(&mut rng);
                (r1 + r2 * w.cos(), Some(r2 * w.sin()))
            }
            _ => unreachable!("validated in TorusParams::new"),
        };
        let ring = big + tube * v.cos();
        points[(i, 0)] = ring * u.cos();
        points[(i, 1)] = ring * u.sin();
        points[(i, 2)] = tube * v.sin();
        if let Some(x4) = x4 {
            points[(i, 3)] = x4;
        }
    }
    Ok(PointCloud { points, source: CloudSource::Torus(params.clone()), seed })
}

fn squared_distances(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (points.row(i) - points.row(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Median of the pairwise squared distances (mean of the two middle values
/// when their count is even).
pub fn median_bandwidth(cloud: &PointCloud) -> Result<f64> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::DegenerateCloud("need at least 2 points".into()));
    }
    let p = cloud.points();
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            values.push((p.row(i) - p.row(j)).norm_squared());
        }
    }
    let count = values.len();
    let mid = count / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if count % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    };
    if median <= 0.0 {
        return Err(Error::DegenerateCloud("median pairwise distance is zero".into()));
    }
    Ok(median)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `D^{-1/2} W D^{-1/2}`.
    Symmetric,
}

/// Symmetrically normalized Gaussian kernel of a point cloud.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    matrix: SpdMatrix,
    bandwidth: f64,
    normalization: Normalization,
}

impl DiffusionOperator {
    pub fn matrix(&self) -> &SpdMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SpdMatrix {
        self.matrix
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
}

/// `S = D^{-1/2} W D^{-1/2}` with `W_ij = exp(−‖x_i − x_j‖²/ε)` and
/// `D = diag(W 1)`.
///
/// With `k_affinity = Some(k)` each row keeps its `k` nearest neighbours
/// (itself included) and the kernel is symmetrized by `max(W, Wᵀ)`.
/// Eigenvalues of the result are clipped at zero.
pub fn diffusion_operator(
    cloud: &PointCloud,
    epsilon: f64,
    k_affinity: Option<usize>,
) -> Result<DiffusionOperator> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidBandwidth(epsilon));
    }
    let n = cloud.len();
    if n < 2 {
        return Err(Error::DegenerateCloud("need at least 2 points".into()));
    }
    let sq = squared_distances(cloud.points());
    let mut w = sq.map(|d| (-d / epsilon).exp());
    if let Some(k) = k_affinity {
        let k = k.clamp(1, n);
        let mut sparse = DMatrix::zeros(n, n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..n {
            order.sort_by(|&a, &b| sq[(i, a)].total_cmp(&sq[(i, b)]).then(a.cmp(&b)));
            for &j in &order[..k] {
                sparse[(i, j)] = w[(i, j)];
            }
        }
        w = sparse.zip_map(&sparse.transpose(), f64::max);
    }
    let inv_sqrt_degree: Vec<f64> = w.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * inv_sqrt_degree[i] * inv_sqrt_degree[j]);
    let matrix = SpdMatrix::from_spectrum_clipped(sym_eig(&symmetrize(&s))?)?;
    Ok(DiffusionOperator { matrix, bandwidth: epsilon, normalization: Normalization::Symmetric })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(TorusParams::new(&[2.0]).is_err());
        assert!(TorusParams::new(&[1.0, 2.0]).is_err());
        assert!(TorusParams::new(&[2.0, 0.3, 0.5]).is_err());
        assert!(TorusParams::new(&[2.0, -0.3]).is_err());
        let t3 = TorusParams::default_t3();
        assert_eq!((t3.intrinsic_dim(), t3.ambient_dim()), (3, 4));
    }

    #[test]
    fn scaling_is_multiplicative() {
        let t = TorusParams::new(&[2.0, 0.5]).unwrap();
        assert_eq!(scale_minor_radius(&t, 1.0).unwrap(), t);
        let s = scale_minor_radius(&t, 0.4).unwrap();
        assert!((s.minor_radii()[0] - 0.2).abs() < 1e-15);
        assert_eq!(s.major_radius(), 2.0);
        let twice = scale_minor_radius(&scale_minor_radius(&t, 0.5).unwrap(), 0.6).unwrap();
        let once = scale_minor_radius(&t, 0.3).unwrap();
        assert!((twice.minor_radii()[0] - once.minor_radii()[0]).abs() < 1e-15);
        assert_eq!(scale_minor_radius(&t, 0.0), Err(Error::InvalidScale(0.0)));
        assert_eq!(scale_minor_radius(&t, 1.5), Err(Error::InvalidScale(1.5)));
    }

    #[test]
    fn samples_lie_on_surface() {
        for params in [TorusParams::new(&[2.0, 0.5]).unwrap(), TorusParams::default_t3()] {
            let cloud = sample_torus(&params, 1000, 4).unwrap();
            for row in cloud.points().row_iter() {
                let p: Vec<f64> = row.iter().copied().collect();
                assert!(params.surface_residual(&p) < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = TorusParams::default_t2();
        assert_eq!(sample_torus(&t, 50, 9).unwrap(), sample_torus(&t, 50, 9).unwrap());
        assert_ne!(sample_torus(&t, 50, 9).unwrap(), sample_torus(&t, 50, 10).unwrap());
        assert!(sample_torus(&t, 1, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = scale_minor_radius(&TorusParams::default_t3(), 0.6).unwrap();
        let cloud = sample_torus(&t, 20, 77).unwrap();
        let text = cloud.to_text();
        assert!(text.starts_with("# torus d=3 R=2 r="));
        assert!(text.lines().next().unwrap().ends_with(" seed=77"));
        let back: PointCloud = text.parse().unwrap();
        assert_eq!(back.points(), cloud.points());
        assert_eq!(back.seed(), 77);
        match back.source() {
            CloudSource::Torus(p) => assert_eq!(p.minor_radii(), t.minor_radii()),
            CloudSource::External => panic!("lost torus header"),
        }
    }

    #[test]
    fn malformed_text_rejected() {
        assert!("".parse::<PointCloud>().is_err());
        assert!("1 2 3\n".parse::<PointCloud>().is_err());
        assert!("# torus d=2 R=2 r=0.5 seed=1\n1 2\n3 4\n".parse::<PointCloud>().is_err());
        assert!("# external seed=1\n1 2\n3\n".parse::<PointCloud>().is_err());
    }

    #[test]
    fn median_examples() {
        let two = PointCloud::external(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]), 0).unwrap();
        assert_eq!(median_bandwidth(&two).unwrap(), 1.0);
        let scaled = PointCloud::external(two.points() * 3.0, 0).unwrap();
        assert!((median_bandwidth(&scaled).unwrap() - 9.0).abs() < 1e-12);
        let same = PointCloud::external(DMatrix::from_element(4, 2, 1.5), 0).unwrap();
        assert!(matches!(median_bandwidth(&same), Err(Error::DegenerateCloud(_))));
    }

    #[test]
    fn identical_points_give_rank_one_operator() {
        let cloud = PointCloud::external(DMatrix::from_element(5, 3, 0.2), 0).unwrap();
        let op = diffusion_operator(&cloud, 1.0, None).unwrap();
        let eig = op.matrix().spectrum().eigenvalues();
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!(eig.iter().skip(1).all(|l| l.abs() < 1e-12));
        assert!((op.matrix().matrix()[(0, 1)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn far_points_give_identity() {
        let cloud = PointCloud::external(DMatrix::from_row_slice(2, 1, &[0.0, 100.0]), 0).unwrap();
        let op = diffusion_operator(&cloud, 1.0, None).unwrap();
        assert!((op.matrix().matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn bandwidth_validation() {
        let cloud = sample_torus(&TorusParams::default_t2(), 10, 0).unwrap();
        assert_eq!(diffusion_operator(&cloud, 0.0, None).unwrap_err(), Error::InvalidBandwidth(0.0));
        assert!(diffusion_operator(&cloud, f64::NAN, None).is_err());
    }

    #[test]
    fn knn_kernel_is_symmetric_and_bounded() {
        let cloud = sample_torus(&TorusParams::default_t2(), 60, 1).unwrap();
        let eps = median_bandwidth(&cloud).unwrap();
        let op = diffusion_operator(&cloud, eps, Some(8)).unwrap();
        let m = op.matrix().matrix();
        assert!((m - m.transpose()).amax() < 1e-12);
        let top = op.matrix().spectrum().eigenvalues()[0];
        assert!(top <= 1.0 + 1e-10);
    }
}
