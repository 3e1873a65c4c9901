//! Learning diagonal GLES weights with a pairwise margin loss.
//!
//! Spectra carry a group tag. Pairs within a group should stay close and
//! pairs across groups should separate, so for every (same, cross)
//! combination the loss pays `max(0, margin + d²_same − d²_cross)`, averaged
//! over all combinations. `d²` is the GLES distance under
//! `ω_i = exp(raw_i)`; the exponential keeps every weight positive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::metrics::gles_distance;
use crate::spd::MetricWeight;

const MAX_HALVINGS: usize = 60;
const STEP_GROWTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub k: usize,
    pub rho: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub margin: f64,
    pub seed: u64,
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.k == 0 {
            return bad("learning needs K >= 1");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Unconstrained parameters; the weights are `ω_i = exp(raw_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightParams {
    raw: Vec<f64>,
}

impl WeightParams {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        Self { raw }
    }

    pub fn from_omega(omega: &[f64]) -> Result<Self> {
        if let Some(bad) = omega.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeight(format!("weights must be positive, got {bad}")));
        }
        Ok(Self { raw: omega.iter().map(|w| w.ln()).collect() })
    }

    /// `raw_i ~ U(−1, 1)`.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-1.0, 1.0).expect("valid range");
        Self { raw: (0..k).map(|_| dist.sample(&mut rng)).collect() }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn omega(&self) -> Vec<f64> {
        self.raw.iter().map(|r| r.exp()).collect()
    }

    pub fn metric_weight(&self, rho: f64) -> Result<MetricWeight> {
        MetricWeight::diagonal(self.omega(), rho)
    }
}

/// Leading eigenvalues, their shift and a group tag.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSpectrum {
    pub eigenvalues: Vec<f64>,
    pub shift: f64,
    pub group: usize,
}

/// Per-pair squared log differences, precomputed once.
struct PairTable {
    same: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
}

impl PairTable {
    fn new(spectra: &[LabeledSpectrum], k: usize) -> Result<Self> {
        let logs: Vec<Vec<f64>> = spectra
            .iter()
            .map(|s| {
                if s.eigenvalues.len() < k {
                    return Err(Error::IndexOutOfRange { index: k, len: s.eigenvalues.len() });
                }
                s.eigenvalues[..k]
                    .iter()
                    .enumerate()
                    .map(|(index, l)| {
                        let v = l + s.shift;
                        if v > 0.0 {
                            Ok(v.ln())
                        } else {
                            Err(Error::NonPositiveShiftedEigenvalue { index, value: v })
                        }
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let (mut same, mut cross) = (Vec::new(), Vec::new());
        for i in 0..spectra.len() {
            for j in (i + 1)..spectra.len() {
                let diff: Vec<f64> = logs[i].iter().zip(&logs[j]).map(|(a, b)| (a - b).powi(2)).collect();
                if spectra[i].group == spectra[j].group {
                    same.push(diff);
                } else {
                    cross.push(diff);
                }
            }
        }
        if same.is_empty() || cross.is_empty() {
            return Err(Error::InsufficientPairs);
        }
        Ok(Self { same, cross })
    }

    fn distances(&self, factors: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d2 = |diff: &Vec<f64>| diff.iter().zip(factors).map(|(d, f)| d / (f * f)).sum::<f64>();
        (self.same.iter().map(d2).collect(), self.cross.iter().map(d2).collect())
    }

    /// Loss and, if requested, its gradient with respect to `raw`.
    fn evaluate(&self, weights: &WeightParams, rho: f64, margin: f64, with_grad: bool) -> (f64, Vec<f64>) {
        let omega = weights.omega();
        let factors: Vec<f64> = omega.iter().map(|w| w + rho).collect();
        let (same, cross) = self.distances(&factors);
        let combos = (same.len() * cross.len()) as f64;

        // Sort cross distances so each same pair finds its active partners
        // (those with d²_cross < margin + d²_same) by binary search.
        let mut order: Vec<usize> = (0..cross.len()).collect();
        order.sort_by(|&a, &b| cross[a].total_cmp(&cross[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| cross[i]).collect();
        let mut prefix = vec![0.0; sorted.len() + 1];
        for (i, v) in sorted.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }

        let mut loss = 0.0;
        let mut same_coef = vec![0.0; same.len()];
        let mut active_per_sorted = vec![0.0; sorted.len() + 1];
        for (s, &ds) in same.iter().enumerate() {
            let bound = margin + ds;
            let active = sorted.partition_point(|&dc| dc < bound);
            loss += active as f64 * bound - prefix[active];
            same_coef[s] = active as f64;
            active_per_sorted[active] += 1.0;
        }
        loss /= combos;
        if !with_grad {
            return (loss, Vec::new());
        }

        // Cross pair at sorted position p is active for every same pair whose
        // cutoff index exceeds p.
        let mut cross_coef = vec![0.0; cross.len()];
        let mut running = 0.0;
        for p in (0..sorted.len()).rev() {
            running += active_per_sorted[p + 1];
            cross_coef[order[p]] = running;
        }

        let k = factors.len();
        let mut grad = vec![0.0; k];
        let pairs = self.same.iter().zip(&same_coef).chain(self.cross.iter().zip(cross_coef.iter()));
        for (idx, (diff, &coef)) in pairs.enumerate() {
            if coef == 0.0 {
                continue;
            }
            let sign = if idx < self.same.len() { 1.0 } else { -1.0 };
            for i in 0..k {
                // ∂d²/∂raw_i = −2 Δ_i² ω_i / (ω_i + ρ)³
                grad[i] -= sign * coef * 2.0 * diff[i] * omega[i] / factors[i].powi(3);
            }
        }
        for g in &mut grad {
            *g /= combos;
        }
        (loss, grad)
    }
}

/// Mean hinge `max(0, margin + d²_same − d²_cross)` over all
/// (same-group pair, cross-group pair) combinations.
pub fn separation_loss(weights: &WeightParams, rho: f64, spectra: &[LabeledSpectrum], margin: f64) -> Result<f64> {
    let table = PairTable::new(spectra, weights.len())?;
    Ok(table.evaluate(weights, rho, margin, false).0)
}

/// Gradient of [`separation_loss`] with respect to the raw parameters.
pub fn separation_loss_gradient(
    weights: &WeightParams,
    rho: f64,
    spectra: &[LabeledSpectrum],
    margin: f64,
) -> Result<Vec<f64>> {
    let table = PairTable::new(spectra, weights.len())?;
    Ok(table.evaluate(weights, rho, margin, true).1)
}

/// GLES distance between two labeled spectra under `weights`.
pub fn pair_distance(a: &LabeledSpectrum, b: &LabeledSpectrum, weights: &WeightParams, rho: f64) -> Result<f64> {
    let w = weights.metric_weight(rho)?;
    Ok(gles_distance(&a.eigenvalues, a.shift, &b.eigenvalues, b.shift, &w, weights.len())?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub weights: WeightParams,
    /// Loss before the first epoch, then after every accepted epoch.
    pub loss_trace: Vec<f64>,
}

/// [`learn_from`] starting at `raw ~ U(−1, 1)` drawn from `cfg.seed`.
pub fn learn_weights(cfg: &LearnConfig, spectra: &[LabeledSpectrum]) -> Result<LearnOutcome> {
    learn_from(cfg, spectra, WeightParams::random(cfg.k, cfg.seed))
}

/// Full-batch gradient descent on the raw parameters. A step that raises the
/// loss is retried at half the rate; an accepted step lets the rate grow
/// again. Stops at `max_epochs`, at a zero gradient, or when no halving
/// lowers the loss.
pub fn learn_from(cfg: &LearnConfig, spectra: &[LabeledSpectrum], init: WeightParams) -> Result<LearnOutcome> {
    cfg.validate()?;
    if init.len() != cfg.k {
        return Err(Error::DimensionMismatch { expected: cfg.k, found: init.len() });
    }
    let table = PairTable::new(spectra, cfg.k)?;
    let mut weights = init;
    let (mut loss, mut grad) = table.evaluate(&weights, cfg.rho, cfg.margin, true);
    if !loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: 0 });
    }
    let mut trace = vec![loss];
    let mut rate = cfg.learning_rate;

    for epoch in 1..=cfg.max_epochs {
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let raw: Vec<f64> = weights.raw.iter().zip(&grad).map(|(r, g)| r - rate * g).collect();
            let candidate = WeightParams::from_raw(raw);
            let (next, next_grad) = table.evaluate(&candidate, cfg.rho, cfg.margin, true);
            if !next.is_finite() || candidate.raw.iter().any(|r| !r.is_finite()) {
                return Err(Error::DivergedLoss { epoch });
            }
            if next <= loss {
                accepted = Some((candidate, next, next_grad));
                break;
            }
            rate *= 0.5;
        }
        let Some((candidate, next, next_grad)) = accepted else {
            break;
        };
        weights = candidate;
        loss = next;
        grad = next_grad;
        trace.push(loss);
        rate *= STEP_GROWTH;
    }
    Ok(LearnOutcome { weights, loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(values: &[f64], group: usize) -> LabeledSpectrum {
        LabeledSpectrum { eigenvalues: values.to_vec(), shift: 0.0, group }
    }

    fn e(x: f64) -> f64 {
        x.exp()
    }

    #[test]
    fn identical_spectra_cost_the_margin() {
        let s = [labeled(&[1.0, 0.5], 0), labeled(&[1.0, 0.5], 0), labeled(&[1.0, 0.5], 1)];
        let w = WeightParams::random(2, 3);
        assert!((separation_loss(&w, 1.0, &s, 0.7).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn needs_both_kinds_of_pairs() {
        let w = WeightParams::random(1, 0);
        let one_group = [labeled(&[1.0], 0), labeled(&[2.0], 0)];
        assert_eq!(separation_loss(&w, 1.0, &one_group, 1.0), Err(Error::InsufficientPairs));
        let singletons = [labeled(&[1.0], 0), labeled(&[2.0], 1)];
        assert_eq!(separation_loss(&w, 1.0, &singletons, 1.0), Err(Error::InsufficientPairs));
    }

    #[test]
    fn hand_computed_hinge() {
        // Logs: a = 0, b = 1 (group 0), c = 3 (group 1); ω = 1, ρ = 1, so
        // d² = Δ²/4: same (a,b) 0.25; cross (a,c) 2.25, (b,c) 1.0.
        let s = [labeled(&[1.0], 0), labeled(&[e(1.0)], 0), labeled(&[e(3.0)], 1)];
        let w = WeightParams::from_omega(&[1.0]).unwrap();
        let margin = 1.5;
        let expected = ((margin + 0.25 - 2.25f64).max(0.0) + (margin + 0.25 - 1.0f64).max(0.0)) / 2.0;
        assert!((separation_loss(&w, 1.0, &s, margin).unwrap() - expected).abs() < 1e-12);
        assert_eq!(separation_loss(&w, 1.0, &s, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Uniform::new(0.01, 1.0).unwrap();
        let spectra: Vec<LabeledSpectrum> = (0..9)
            .map(|i| {
                let mut v: Vec<f64> = (0..10).map(|_| u.sample(&mut rng)).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                LabeledSpectrum { eigenvalues: v, shift: 1e-3, group: i % 3 }
            })
            .collect();
        let w = WeightParams::random(10, 5);
        let (rho, margin) = (0.5, 3.0);
        let grad = separation_loss_gradient(&w, rho, &spectra, margin).unwrap();
        let h = 1e-6;
        for i in 0..10 {
            let mut up = w.raw().to_vec();
            up[i] += h;
            let mut down = w.raw().to_vec();
            down[i] -= h;
            let fd = (separation_loss(&WeightParams::from_raw(up), rho, &spectra, margin).unwrap()
                - separation_loss(&WeightParams::from_raw(down), rho, &spectra, margin).unwrap())
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-8), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn satisfied_margin_leaves_weights_alone() {
        let s = [labeled(&[1.0], 0), labeled(&[1.0], 0), labeled(&[e(5.0)], 1)];
        let cfg = LearnConfig { k: 1, rho: 1.0, learning_rate: 0.1, max_epochs: 10, margin: 0.1, seed: 2 };
        let init = WeightParams::random(1, 2);
        let out = learn_from(&cfg, &s, init.clone()).unwrap();
        assert_eq!(out.weights, init);
        assert_eq!(out.loss_trace, vec![0.0]);
    }

    #[test]
    fn weight_grows_on_a_noisy_coordinate() {
        // Coordinate 0 separates the same-group pair more than the cross
        // pair, so shrinking its influence (raising ω₀) lowers the loss.
        let s = [
            labeled(&[e(2.0), 1.0], 0),
            labeled(&[1.0, 1.0], 0),
            labeled(&[e(1.5), e(1.0)], 1),
        ];
        let cfg = LearnConfig { k: 2, rho: 1.0, learning_rate: 0.5, max_epochs: 20, margin: 10.0, seed: 0 };
        let init = WeightParams::from_omega(&[1.0, 1.0]).unwrap();
        let out = learn_from(&cfg, &s, init).unwrap();
        assert!(out.weights.omega()[0] > 1.0);
        assert!(out.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(out.loss_trace.last() < out.loss_trace.first());
    }

    #[test]
    fn config_validation() {
        let ok = LearnConfig { k: 3, rho: 1.0, learning_rate: 0.1, max_epochs: 5, margin: 1.0, seed: 0 };
        assert!(ok.validate().is_ok());
        assert!(LearnConfig { rho: 0.0, ..ok }.validate().is_err());
        assert!(LearnConfig { margin: 0.0, ..ok }.validate().is_err());
        assert!(LearnConfig { learning_rate: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn exp_mapping_round_trips() {
        let w = WeightParams::from_omega(&[0.5, 2.0, 7.0]).unwrap();
        let back = w.omega();
        for (a, b) in back.iter().zip([0.5, 2.0, 7.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(WeightParams::from_raw(vec![-800.0, 800.0]).omega().iter().all(|w| *w >= 0.0));
    }
}
