//! Tori benchmark, learned-weight benchmark and GBW convergence suite.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use procrustes_core::geodata::{
    diffusion_operator, median_bandwidth, sample_torus, scale_minor_radius, PointCloud, TorusParams,
};
use procrustes_core::learn::{learn_from, LabeledSpectrum, LearnConfig, LearnOutcome, WeightParams};
use procrustes_core::metrics::{bures_wasserstein, generalized_bw, gles_distance, les_distance};
use procrustes_core::sampling::random_spd;
use procrustes_core::spectral::{top_k_spectrum, SketchConfig, SpectrumMethod};
use procrustes_core::{MetricWeight, SpdMatrix};

use crate::config::{BenchmarkConfig, Method};
use crate::seeds::{self, child_seed};
use crate::BenchError;

/// Share of failed trials above which a run counts as failed.
pub const MAX_FAILURE_RATIO: f64 = 0.1;

/// The four compared cloud pairs, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pair {
    T2T2Scaled,
    T3T3Scaled,
    T3T2Scaled,
    T2T3Scaled,
}

impl Pair {
    pub const ALL: [Pair; 4] = [Pair::T2T2Scaled, Pair::T3T3Scaled, Pair::T3T2Scaled, Pair::T2T3Scaled];

    pub fn label(self) -> &'static str {
        match self {
            Pair::T2T2Scaled => "T2-T2Sc",
            Pair::T3T3Scaled => "T3-T3Sc",
            Pair::T3T2Scaled => "T3-T2Sc",
            Pair::T2T3Scaled => "T2-T3Sc",
        }
    }

    /// Indices into a trial's `[T2, T2Sc, T3, T3Sc]` spectra.
    fn members(self) -> (usize, usize) {
        match self {
            Pair::T2T2Scaled => (0, 1),
            Pair::T3T3Scaled => (2, 3),
            Pair::T3T2Scaled => (2, 1),
            Pair::T2T3Scaled => (0, 3),
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pair::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown pair '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub c: f64,
    pub rho: f64,
    pub pair: Pair,
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub distance: f64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    /// Sorted by trial, then `c_grid` order, `rho_grid` order and pair.
    pub rows: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub trials: usize,
}

impl BenchReport {
    pub fn failure_ratio(&self) -> f64 {
        self.failures.len() as f64 / self.trials.max(1) as f64
    }

    /// Errors out when more than [`MAX_FAILURE_RATIO`] of trials failed.
    pub fn check_failures(&self) -> Result<(), BenchError> {
        if self.failure_ratio() > MAX_FAILURE_RATIO {
            return Err(BenchError::TooManyFailures { failed: self.failures.len(), total: self.trials });
        }
        Ok(())
    }

    /// Mean distance over trials for one `(c, rho, pair)` cell.
    pub fn mean(&self, c: f64, rho: f64, pair: Pair) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.c == c && r.rho == rho && r.pair == pair)
            .map(|r| r.distance)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Top-`K` diffusion spectra of `[T2, T2Sc, T3, T3Sc]` for one trial and scale.
#[derive(Debug, Clone)]
pub struct ScaleSpectra {
    pub c: f64,
    pub spectra: [Vec<f64>; 4],
    pub elapsed_ms: u64,
}

/// The four clouds of one trial at scale index `scale`.
pub fn trial_clouds(cfg: &BenchmarkConfig, trial: usize, scale: usize) -> Result<[PointCloud; 4], BenchError> {
    let (t2, t3) = cfg.torus_params()?;
    let c = cfg.c_grid[scale];
    let datasets: [(u64, TorusParams); 4] = [
        (seeds::T2, t2.clone()),
        (seeds::T2_SCALED, scale_minor_radius(&t2, c)?),
        (seeds::T3, t3.clone()),
        (seeds::T3_SCALED, scale_minor_radius(&t3, c)?),
    ];
    let mut clouds = Vec::with_capacity(4);
    for (dataset, params) in datasets {
        let seed = child_seed(cfg.seed, trial as u64, dataset, scale as u64);
        clouds.push(sample_torus(&params, cfg.n, seed)?);
    }
    Ok(clouds.try_into().expect("four clouds"))
}

fn cloud_spectrum(
    cfg: &BenchmarkConfig,
    cloud: &PointCloud,
    trial: usize,
    dataset: u64,
    scale: usize,
) -> Result<Vec<f64>, BenchError> {
    let epsilon = match cfg.bandwidth {
        Some(b) => b,
        None => median_bandwidth(cloud)?,
    };
    let op = diffusion_operator(cloud, epsilon, cfg.k_affinity)?;
    let method = if cfg.uses_nystrom() {
        let seed = child_seed(cfg.seed, trial as u64, seeds::SKETCH_OFFSET + dataset, scale as u64);
        SpectrumMethod::Nystrom(SketchConfig::new(cfg.sketch_size(), cfg.k, seed)?)
    } else {
        SpectrumMethod::Exact
    };
    Ok(top_k_spectrum(op.matrix(), cfg.k, &method)?)
}

/// Spectra of one trial for every scale in `c_grid`.
pub fn trial_spectra(cfg: &BenchmarkConfig, trial: usize) -> Result<Vec<ScaleSpectra>, BenchError> {
    (0..cfg.c_grid.len())
        .map(|scale| {
            let start = Instant::now();
            let clouds = trial_clouds(cfg, trial, scale)?;
            let mut spectra: Vec<Vec<f64>> = Vec::with_capacity(4);
            for (dataset, cloud) in clouds.iter().enumerate() {
                spectra.push(cloud_spectrum(cfg, cloud, trial, dataset as u64, scale)?);
            }
            Ok(ScaleSpectra {
                c: cfg.c_grid[scale],
                spectra: spectra.try_into().expect("four spectra"),
                elapsed_ms: start.elapsed().as_millis() as u64,
            })
        })
        .collect()
}

/// Spectra for every trial, computed in parallel and returned in trial order.
fn all_spectra(cfg: &BenchmarkConfig) -> Vec<Result<Vec<ScaleSpectra>, BenchError>> {
    (0..cfg.trials).into_par_iter().map(|t| trial_spectra(cfg, t)).collect()
}

fn pair_distance(
    cfg: &BenchmarkConfig,
    spectra: &[Vec<f64>; 4],
    pair: Pair,
    weight: Option<&MetricWeight>,
) -> Result<f64, BenchError> {
    let (a, b) = pair.members();
    let d = match weight {
        None => les_distance(&spectra[a], &spectra[b], cfg.k)?,
        Some(w) => gles_distance(&spectra[a], cfg.delta, &spectra[b], cfg.gamma, w, cfg.k)?,
    };
    Ok(d.value)
}

/// Rows for one trial. LES ignores `rho_grid` and reports `rho = 1`, the
/// constant weight it is evaluated with.
fn trial_rows(
    cfg: &BenchmarkConfig,
    trial: usize,
    per_scale: &[ScaleSpectra],
    method: Method,
    weights: Option<&WeightParams>,
    rho_grid: &[f64],
) -> Result<Vec<TrialResult>, BenchError> {
    let mut rows = Vec::new();
    for scale in per_scale {
        let start = Instant::now();
        let rhos: &[f64] = if weights.is_some() { rho_grid } else { &[1.0] };
        for &rho in rhos {
            let weight = weights.map(|w| w.metric_weight(rho)).transpose()?;
            for pair in Pair::ALL {
                let distance = pair_distance(cfg, &scale.spectra, pair, weight.as_ref())?;
                rows.push(TrialResult {
                    trial,
                    c: scale.c,
                    rho,
                    pair,
                    method,
                    n: cfg.n,
                    k: cfg.k,
                    distance,
                    wall_time_ms: scale.elapsed_ms + start.elapsed().as_millis() as u64,
                });
            }
        }
    }
    Ok(rows)
}

/// Random GLES weights `ω = exp(U(−1, 1))` for one trial.
pub fn trial_weights(cfg: &BenchmarkConfig, trial: usize) -> WeightParams {
    WeightParams::random(cfg.k, child_seed(cfg.seed, trial as u64, seeds::WEIGHTS, 0))
}

/// Runs `cfg.method` (LES or GLES with per-trial random weights) over every
/// trial, scale, `ρ` and pair. Failing trials are recorded and skipped.
pub fn run_tori_benchmark(cfg: &BenchmarkConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    if cfg.method == Method::GlesLearned {
        return Err(BenchError::Config("gles_learned runs through the learn command".into()));
    }
    let mut report = BenchReport { trials: cfg.trials, ..Default::default() };
    for (trial, spectra) in all_spectra(cfg).into_iter().enumerate() {
        let rows = spectra.and_then(|s| {
            let weights = (cfg.method == Method::Gles).then(|| trial_weights(cfg, trial));
            trial_rows(cfg, trial, &s, cfg.method, weights.as_ref(), &cfg.rho_grid)
        });
        match rows {
            Ok(rows) => report.rows.extend(rows),
            Err(e) => report.failures.push(TrialFailure { trial, error: e.to_string() }),
        }
    }
    Ok(report)
}

/// Group tags for learning at the smallest scale: the 2-torus and the
/// scaled 3-torus should coincide; everything else should separate.
const GROUPS: [usize; 4] = [0, 1, 2, 0];

#[derive(Debug, Clone)]
pub struct LearnedReport {
    /// Evaluation trials under the learned weights.
    pub learned: BenchReport,
    /// Evaluation trials under the initial random weights.
    pub initial: BenchReport,
    pub initial_weights: WeightParams,
    pub outcome: LearnOutcome,
    pub learn: LearnConfig,
    pub train_trials: Vec<usize>,
    pub eval_trials: Vec<usize>,
}

impl LearnedReport {
    /// `mean d(T2, T2Sc) − mean d(T2, T3Sc)` at scale `c`.
    pub fn separation_gap(report: &BenchReport, c: f64, rho: f64) -> Option<f64> {
        Some(report.mean(c, rho, Pair::T2T2Scaled)? - report.mean(c, rho, Pair::T2T3Scaled)?)
    }
}

/// Learns GLES weights on even-indexed trials at the smallest `c`, then
/// evaluates learned and initial weights on odd-indexed trials over the
/// whole `c_grid`.
pub fn run_learned_benchmark(cfg: &BenchmarkConfig, learn: &LearnConfig) -> Result<LearnedReport, BenchError> {
    cfg.validate()?;
    learn.validate()?;
    if learn.k != cfg.k {
        return Err(BenchError::Config(format!("learn K = {} differs from K = {}", learn.k, cfg.k)));
    }
    let smallest = (0..cfg.c_grid.len())
        .min_by(|&a, &b| cfg.c_grid[a].total_cmp(&cfg.c_grid[b]))
        .expect("validated nonempty");

    let spectra = all_spectra(cfg);
    let mut train_trials = Vec::new();
    let mut eval_trials = Vec::new();
    let mut labeled = Vec::new();
    let mut failures = Vec::new();
    for (trial, result) in spectra.iter().enumerate() {
        match result {
            Err(e) => failures.push(TrialFailure { trial, error: e.to_string() }),
            Ok(per_scale) if trial % 2 == 0 => {
                train_trials.push(trial);
                for (spectrum, group) in per_scale[smallest].spectra.iter().zip(GROUPS) {
                    labeled.push(LabeledSpectrum { eigenvalues: spectrum.clone(), shift: cfg.delta, group });
                }
            }
            Ok(_) => eval_trials.push(trial),
        }
    }
    if train_trials.is_empty() || eval_trials.is_empty() {
        return Err(BenchError::Config("learning needs at least one train and one eval trial".into()));
    }

    let initial_weights = WeightParams::random(learn.k, learn.seed);
    let outcome = learn_from(learn, &labeled, initial_weights.clone())?;

    let evaluate = |weights: &WeightParams| -> Result<BenchReport, BenchError> {
        let mut report = BenchReport { trials: cfg.trials, failures: failures.clone(), ..Default::default() };
        for &trial in &eval_trials {
            let per_scale = spectra[trial].as_ref().expect("eval trials succeeded");
            report.rows.extend(trial_rows(cfg, trial, per_scale, Method::GlesLearned, Some(weights), &[learn.rho])?);
        }
        Ok(report)
    };
    Ok(LearnedReport {
        learned: evaluate(&outcome.weights)?,
        initial: evaluate(&initial_weights)?,
        initial_weights,
        outcome,
        learn: *learn,
        train_trials,
        eval_trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub gbw: f64,
    pub bw: f64,
}

/// `d_GBW(C + P/n, C)` and `d_BW(C + P/n, C)` over `n_grid` for random SPD
/// `C`, `P`, `M` drawn from `seed`.
pub fn run_convergence_suite(dim: usize, n_grid: &[u64], seed: u64) -> Result<Vec<ConvergenceRow>, BenchError> {
    if dim < 2 {
        return Err(BenchError::Config(format!("convergence suite needs dim >= 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_spd(dim, &mut rng);
    let p = random_spd(dim, &mut rng);
    let m = random_spd(dim, &mut rng);
    convergence_rows(&c, p.matrix(), &MetricWeight::full(m, 0.0)?, n_grid)
}

/// The convergence rows for explicit `C`, perturbation `P` and weight.
pub fn convergence_rows(
    c: &SpdMatrix,
    p: &nalgebra::DMatrix<f64>,
    weight: &MetricWeight,
    n_grid: &[u64],
) -> Result<Vec<ConvergenceRow>, BenchError> {
    n_grid
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(BenchError::Config("n_grid entries must be positive".into()));
            }
            let cn = SpdMatrix::new(c.matrix() + p / n as f64)?;
            Ok(ConvergenceRow {
                n,
                gbw: generalized_bw(&cn, c, weight)?.value,
                bw: bures_wasserstein(&cn, c)?.value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkConfig {
        BenchmarkConfig {
            n: 40,
            k: 8,
            c_grid: vec![1.0, 0.3],
            rho_grid: vec![1.0, 100.0],
            trials: 3,
            ..Default::default()
        }
    }

    #[test]
    fn pair_labels_round_trip() {
        for p in Pair::ALL {
            assert_eq!(p.label().parse::<Pair>().unwrap(), p);
        }
    }

    #[test]
    fn rows_are_complete_and_ordered() {
        let cfg = small();
        let report = run_tori_benchmark(&cfg).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.rows.len(), 3 * 2 * 2 * 4);
        let keys: Vec<(usize, usize)> = report
            .rows
            .iter()
            .map(|r| (r.trial, cfg.c_grid.iter().position(|c| *c == r.c).unwrap()))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
        assert!(report.rows.iter().all(|r| r.distance >= 0.0));
    }

    #[test]
    fn les_reports_unit_rho() {
        let cfg = BenchmarkConfig { method: Method::Les, ..small() };
        let report = run_tori_benchmark(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3 * 2 * 4);
        assert!(report.rows.iter().all(|r| r.rho == 1.0 && r.method == Method::Les));
    }

    #[test]
    fn gles_below_les_when_weights_exceed_one() {
        // ω + ρ ≥ 1 elementwise shrinks every term of the sum.
        let les = run_tori_benchmark(&BenchmarkConfig { method: Method::Les, ..small() }).unwrap();
        let gles = run_tori_benchmark(&small()).unwrap();
        for g in &gles.rows {
            let l = les
                .rows
                .iter()
                .find(|l| l.trial == g.trial && l.c == g.c && l.pair == g.pair)
                .unwrap();
            assert!(g.distance <= l.distance + 1e-12);
        }
    }

    #[test]
    fn unit_scale_matches_self_distance_level() {
        let cfg = BenchmarkConfig { method: Method::Les, c_grid: vec![1.0], trials: 6, ..small() };
        let report = run_tori_benchmark(&cfg).unwrap();
        // At c = 1 both clouds come from the same distribution, so the pair
        // distance should look like a fresh-sample self distance.
        let scaled = report.mean(1.0, 1.0, Pair::T2T2Scaled).unwrap();
        let mut self_distances = Vec::new();
        for trial in 0..cfg.trials {
            let a = trial_spectra(&cfg, trial).unwrap();
            let b = trial_spectra(&BenchmarkConfig { seed: 1000 + trial as u64, ..cfg.clone() }, trial).unwrap();
            self_distances.push(les_distance(&a[0].spectra[0], &b[0].spectra[0], cfg.k).unwrap().value);
        }
        let fresh = self_distances.iter().sum::<f64>() / self_distances.len() as f64;
        assert!((scaled - fresh).abs() <= 0.5 * fresh.max(scaled), "{scaled} vs {fresh}");
    }

    #[test]
    fn learned_benchmark_splits_by_parity() {
        let cfg = BenchmarkConfig { trials: 4, ..small() };
        let learn = LearnConfig { max_epochs: 5, ..cfg.learn_config() };
        let report = run_learned_benchmark(&cfg, &learn).unwrap();
        assert_eq!(report.train_trials, vec![0, 2]);
        assert_eq!(report.eval_trials, vec![1, 3]);
        assert!(report.learned.rows.iter().all(|r| r.trial % 2 == 1 && r.rho == learn.rho));
        let trace = &report.outcome.loss_trace;
        assert!(trace.last() <= trace.first());
    }

    #[test]
    fn convergence_rows_shrink() {
        let rows = run_convergence_suite(4, &[1, 10, 100], 3).unwrap();
        assert!(rows.windows(2).all(|w| w[1].gbw < w[0].gbw && w[1].bw < w[0].bw));
        assert!(run_convergence_suite(1, &[1], 0).is_err());
    }

    #[test]
    fn zero_perturbation_gives_zero() {
        let c = SpdMatrix::identity(3);
        let rows = convergence_rows(&c, &nalgebra::DMatrix::zeros(3, 3), &MetricWeight::identity(3), &[1, 5]).unwrap();
        assert!(rows.iter().all(|r| r.gbw == 0.0 && r.bw == 0.0));
    }
}
