//! Checks against independent reference computations written out here.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use procrustes_core::geodata::{
    diffusion_operator, median_bandwidth, sample_torus, PointCloud, TorusParams,
};
use procrustes_core::metrics::{
    alpha_procrustes_closed, alpha_procrustes_numeric, bures_wasserstein, generalized_bw,
    project_to_omega_set, robust_gbw, AscentOptions, OmegaConstraintSet,
};
use procrustes_core::sampling::{gaussian_matrix, random_orthogonal, random_spd, spd_from_factors};
use procrustes_core::spd::{sym_eig, symmetrize};
use procrustes_core::spectral::{eigenvalue_error_bound, nystrom_fixed_rank, top_k_spectrum, SketchConfig, SpectrumMethod};
use procrustes_core::{MetricWeight, SpdMatrix};

fn rotation(theta: f64, reflect: bool) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let flip = if reflect { -1.0 } else { 1.0 };
    DMatrix::from_row_slice(2, 2, &[c, -s * flip, s, c * flip])
}

#[test]
fn bw_commuting_pair_against_plane_grid() {
    let x_half = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
    let y_half = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
    let mut best = f64::INFINITY;
    let steps = 100_000;
    for reflect in [false, true] {
        for i in 0..steps {
            let theta = std::f64::consts::TAU * i as f64 / steps as f64;
            best = best.min((&x_half - &y_half * rotation(theta, reflect)).norm());
        }
    }
    let closed = bures_wasserstein(
        &SpdMatrix::diagonal(&[4.0, 1.0]).unwrap(),
        &SpdMatrix::diagonal(&[1.0, 4.0]).unwrap(),
    )
    .unwrap()
    .value;
    assert!((closed - 2f64.sqrt()).abs() < 1e-12);
    assert!((best - closed).abs() < 1e-6);
}

#[test]
fn half_alpha_search_is_twice_gbw_in_three_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_spd(3, &mut rng);
    let y = random_spd(3, &mut rng);
    let w = MetricWeight::full(random_spd(3, &mut rng), 0.0).unwrap();
    let search = alpha_procrustes_numeric(&x, &y, 0.5, &w, 200_000).unwrap().value;
    let gbw = generalized_bw(&x, &y, &w).unwrap().value;
    assert!((search - 2.0 * gbw).abs() <= 1e-4, "{search} vs {}", 2.0 * gbw);
}

#[test]
fn closed_form_agrees_with_search_across_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for alpha in [0.25, 0.75, 1.5] {
        let x = random_spd(2, &mut rng);
        let y = random_spd(2, &mut rng);
        let w = MetricWeight::full(random_spd(2, &mut rng), 0.3).unwrap();
        let closed = alpha_procrustes_closed(&x, &y, alpha, &w).unwrap().value;
        let search = alpha_procrustes_numeric(&x, &y, alpha, &w, 50_000).unwrap().value;
        assert!(search >= closed - 1e-10);
        assert!((search - closed) <= 1e-6 * (1.0 + closed));
    }
}

/// Projection of `v` onto `{u ∈ [0,1]ⁿ, Σu = k}` by enumerating which
/// coordinates sit at 0, at 1 or strictly inside.
fn capped_simplex_by_enumeration(v: &[f64], k: f64) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let upper = state.iter().filter(|&&s| s == 2).count() as f64;
        let u: Vec<f64> = if free.is_empty() {
            if (upper - k).abs() > 1e-12 {
                continue;
            }
            state.iter().map(|&s| if s == 2 { 1.0 } else { 0.0 }).collect()
        } else {
            let tau = (free.iter().map(|&i| v[i]).sum::<f64>() - (k - upper)) / free.len() as f64;
            state
                .iter()
                .enumerate()
                .map(|(i, &s)| match s {
                    0 => 0.0,
                    2 => 1.0,
                    _ => v[i] - tau,
                })
                .collect()
        };
        if u.iter().any(|x| *x < -1e-12 || *x > 1.0 + 1e-12) {
            continue;
        }
        let dist: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, u));
        }
    }
    best.expect("feasible set is nonempty").1
}

#[test]
fn projection_matches_enumerated_quadratic_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let set = OmegaConstraintSet::new(4, 2).unwrap();
    for _ in 0..20 {
        let s = symmetrize(&(gaussian_matrix(4, 4, &mut rng) * 1.5));
        let eig = sym_eig(&s).unwrap();
        let v: Vec<f64> = eig.eigenvalues().iter().copied().collect();
        let oracle = capped_simplex_by_enumeration(&v, 2.0);
        let expected = eig.eigenvectors()
            * DMatrix::from_diagonal(&DVector::from_vec(oracle))
            * eig.eigenvectors().transpose();
        let p = project_to_omega_set(&s, &set).unwrap();
        assert!((p.matrix() - expected).amax() <= 1e-6);
    }
}

/// `max_{‖w‖=1} (√(wᵀXw) − √(wᵀYw))²`, the robust objective on rank-one
/// projections, by sphere sampling and coordinate refinement.
fn sphere_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, samples: usize, seed: u64) -> f64 {
    let f = |theta: f64, phi: f64| {
        let w = DVector::from_vec(vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
        ((w.dot(&(x * &w))).sqrt() - (w.dot(&(y * &w))).sqrt()).powi(2)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(-1.0, 1.0).unwrap();
    let angle = Uniform::new(0.0, std::f64::consts::TAU).unwrap();
    let (mut bt, mut bp, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    for _ in 0..samples {
        let theta = f64::acos(unit.sample(&mut rng));
        let phi = angle.sample(&mut rng);
        let v = f(theta, phi);
        if v > best {
            (bt, bp, best) = (theta, phi, v);
        }
    }
    let mut h = 0.05;
    while h > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let v = f(bt + dt, bp + dp);
            if v > best {
                (bt, bp, best) = (bt + dt, bp + dp, v);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    best
}

#[test]
fn robust_rank_one_budget_matches_sphere_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let set = OmegaConstraintSet::new(3, 1).unwrap();
    for i in 0..3 {
        let x = random_spd(3, &mut rng);
        let y = random_spd(3, &mut rng);
        let solved = robust_gbw(&x, &y, &set, &AscentOptions::default()).unwrap();
        let oracle = sphere_oracle(x.matrix(), y.matrix(), 100_000, i);
        assert!((solved.distance_sq - oracle).abs() <= 1e-3 * oracle, "{} vs {oracle}", solved.distance_sq);
    }
}

#[test]
fn full_budget_reduces_to_bw() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_spd(4, &mut rng);
    let y = random_spd(4, &mut rng);
    let set = OmegaConstraintSet::new(4, 4).unwrap();
    let solved = robust_gbw(&x, &y, &set, &AscentOptions::default()).unwrap();
    assert_eq!(solved.distance_sq, bures_wasserstein(&x, &y).unwrap().squared());
}

#[test]
fn nystrom_mean_error_within_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, k, m) = (50, 10, 20);
    let exact: Vec<f64> = (0..n).map(|i| 0.85f64.powi(i)).collect();
    let a = spd_from_factors(&random_orthogonal(n as usize, &mut rng), &exact);
    let omega: Vec<f64> = (0..k).map(|i| 0.5 + 0.1 * i as f64).collect();
    let seeds = 50;
    let mean: f64 = (0..seeds)
        .map(|seed| {
            let approx = nystrom_fixed_rank(&a, &SketchConfig::new(m, k, seed).unwrap()).unwrap();
            approx.eigenvalues().iter().zip(&exact).zip(&omega).map(|((e, t), w)| (t - e).abs() / w).sum::<f64>()
        })
        .sum::<f64>()
        / seeds as f64;
    let bound = eigenvalue_error_bound(&exact[k..], k, m, &omega).unwrap();
    assert!(mean <= bound, "{mean} > {bound}");
}

#[test]
fn nystrom_tracks_exact_top_of_diffusion_spectrum() {
    let cloud = sample_torus(&TorusParams::default_t2(), 100, 12).unwrap();
    let op = diffusion_operator(&cloud, median_bandwidth(&cloud).unwrap(), None).unwrap();
    let exact = top_k_spectrum(op.matrix(), 20, &SpectrumMethod::Exact).unwrap();
    let sketch = SketchConfig::with_default_oversampling(20, 5);
    let approx = top_k_spectrum(op.matrix(), 20, &SpectrumMethod::Nystrom(sketch)).unwrap();
    for i in 0..10 {
        assert!((approx[i] - exact[i]).abs() <= 0.05 * exact[i], "{i}: {} vs {}", approx[i], exact[i]);
    }
}

#[test]
fn median_bandwidth_matches_sorted_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let points = DMatrix::from_fn(100, 2, |_, _| u.sample(&mut rng));
    let cloud = PointCloud::external(points.clone(), 0).unwrap();
    let mut all = Vec::new();
    for i in 0..100 {
        for j in (i + 1)..100 {
            all.push((points.row(i) - points.row(j)).norm_squared());
        }
    }
    all.sort_by(f64::total_cmp);
    let mid = all.len() / 2;
    let expected = if all.len() % 2 == 0 { 0.5 * (all[mid - 1] + all[mid]) } else { all[mid] };
    assert_eq!(median_bandwidth(&cloud).unwrap(), expected);
}

#[test]
fn circle_operator_has_unit_top_eigenvalue() {
    let points = DMatrix::from_fn(50, 2, |i, j| {
        let t = std::f64::consts::TAU * i as f64 / 50.0;
        if j == 0 {
            t.cos()
        } else {
            t.sin()
        }
    });
    let cloud = PointCloud::external(points, 0).unwrap();
    let op = diffusion_operator(&cloud, median_bandwidth(&cloud).unwrap(), None).unwrap();
    let eig = op.matrix().spectrum().eigenvalues();
    assert!((eig[0] - 1.0).abs() <= 1e-10);
    assert!(eig.iter().all(|l| (-1e-10..=1.0 + 1e-10).contains(l)));
}

/// Largest gap between the empirical CDF of `samples` and U[0, 2π).
fn ks_statistic(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cdf = s / std::f64::consts::TAU;
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn torus_angles_are_uniform() {
    let params = TorusParams::default_t2();
    let cloud = sample_torus(&params, 10_000, 13).unwrap();
    let p = cloud.points();
    let tau = std::f64::consts::TAU;
    let wrap = |a: f64| a.rem_euclid(tau);
    let u: Vec<f64> = p.row_iter().map(|r| wrap(r[1].atan2(r[0]))).collect();
    let v: Vec<f64> = p
        .row_iter()
        .map(|r| wrap(r[2].atan2(r[0].hypot(r[1]) - params.major_radius())))
        .collect();
    // 1% critical value for large samples: 1.628 / √n.
    let critical = 1.628 / 100.0;
    assert!(ks_statistic(u) < critical);
    assert!(ks_statistic(v) < critical);
}

#[test]
fn thin_three_torus_hugs_the_two_torus() {
    let t2 = TorusParams::new(&[2.0, 0.8]).unwrap();
    for r2 in [0.4, 0.04, 0.004] {
        let params = TorusParams::new(&[2.0, 0.8, r2]).unwrap();
        let cloud = sample_torus(&params, 2000, 14).unwrap();
        let worst = cloud
            .points()
            .row_iter()
            .map(|r| t2.surface_residual(&[r[0], r[1], r[2]]).hypot(r[3]))
            .fold(0.0, f64::max);
        assert!(worst <= r2 + 1e-12, "{worst} > {r2}");
    }
}
