//! Benchmark configuration, read from TOML.
//!
//! Keys mirror the benchmark fields: `N`, `K`, `c_grid`, `rho_grid`, `delta`,
//! `gamma`, `trials`, `seed`, `method`, plus optional `[nystrom]` and
//! `[learn]` tables. Anything left out takes the desk-scale default.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use procrustes_core::geodata::TorusParams;
use procrustes_core::learn::LearnConfig;
use procrustes_core::metrics::LES_SHIFT;

use crate::BenchError;

/// Largest `N` solved with the dense eigensolver unless a sketch is forced.
pub const EXACT_SOLVER_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Les,
    Gles,
    GlesLearned,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Les => "les",
            Method::Gles => "gles",
            Method::GlesLearned => "gles_learned",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "les" => Ok(Method::Les),
            "gles" => Ok(Method::Gles),
            "gles_learned" => Ok(Method::GlesLearned),
            other => Err(format!("unknown method '{other}' (expected les, gles or gles_learned)")),
        }
    }
}

/// Presence forces the Nyström path; `num_random_vectors` defaults to
/// `2K + 10`. Sketch seeds are derived per cloud from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NystromSettings {
    pub num_random_vectors: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSettings {
    /// Defaults to the first entry of `rho_grid`.
    pub rho: Option<f64>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub margin: f64,
    /// Defaults to a value derived from the master seed.
    pub seed: Option<u64>,
}

impl Default for LearnSettings {
    fn default() -> Self {
        Self { rho: None, learning_rate: 1.0, max_epochs: 200, margin: 1.0, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub c_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub delta: f64,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    pub method: Method,
    pub nystrom: Option<NystromSettings>,
    /// `(R, r)` of the base 2-torus.
    pub t2_radii: Vec<f64>,
    /// `(R, r₁, r₂)` of the base 3-torus.
    pub t3_radii: Vec<f64>,
    /// Fixed kernel bandwidth; the per-cloud median heuristic when absent.
    pub bandwidth: Option<f64>,
    pub k_affinity: Option<usize>,
    pub learn: LearnSettings,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n: 200,
            k: 50,
            c_grid: vec![1.0, 0.8, 0.6, 0.4, 0.2],
            rho_grid: vec![1e1, 1e2, 1e3, 1e4],
            delta: LES_SHIFT,
            gamma: LES_SHIFT,
            trials: 10,
            seed: 0,
            method: Method::Gles,
            nystrom: None,
            t2_radii: vec![2.0, 0.8],
            t3_radii: vec![2.0, 0.8, 0.4],
            bandwidth: None,
            k_affinity: None,
            learn: LearnSettings::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.n < 2 {
            return fail(format!("N must be at least 2, got {}", self.n));
        }
        if self.k == 0 || self.k > self.n {
            return fail(format!("K must lie in [1, N], got K = {} with N = {}", self.k, self.n));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return fail(format!("c_grid values must lie in (0, 1], got {:?}", self.c_grid));
        }
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return fail(format!("rho_grid values must be positive, got {:?}", self.rho_grid));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        for (name, shift) in [("delta", self.delta), ("gamma", self.gamma)] {
            if !(shift >= 0.0 && shift.is_finite()) {
                return fail(format!("{name} must be nonnegative, got {shift}"));
            }
        }
        if let Some(m) = self.nystrom.and_then(|s| s.num_random_vectors) {
            if m < self.k + 2 {
                return fail(format!("nystrom.num_random_vectors must be at least K + 2, got {m}"));
            }
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return fail(format!("bandwidth must be positive, got {b}"));
            }
        }
        self.torus_params()?;
        self.learn_config().validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(())
    }

    /// Base 2-torus and 3-torus.
    pub fn torus_params(&self) -> Result<(TorusParams, TorusParams), BenchError> {
        let t2 = TorusParams::new(&self.t2_radii).map_err(|e| BenchError::Config(format!("t2_radii: {e}")))?;
        let t3 = TorusParams::new(&self.t3_radii).map_err(|e| BenchError::Config(format!("t3_radii: {e}")))?;
        if t2.intrinsic_dim() != 2 || t3.intrinsic_dim() != 3 {
            return Err(BenchError::Config("t2_radii needs 2 entries and t3_radii 3".into()));
        }
        Ok((t2, t3))
    }

    pub fn uses_nystrom(&self) -> bool {
        self.nystrom.is_some() || self.n > EXACT_SOLVER_LIMIT
    }

    pub fn sketch_size(&self) -> usize {
        self.nystrom
            .and_then(|s| s.num_random_vectors)
            .unwrap_or(2 * self.k + 10)
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            k: self.k,
            rho: self.learn.rho.unwrap_or_else(|| self.rho_grid.first().copied().unwrap_or(1.0)),
            learning_rate: self.learn.learning_rate,
            max_epochs: self.learn.max_epochs,
            margin: self.learn.margin,
            seed: self.learn.seed.unwrap_or_else(|| crate::seeds::child_seed(self.seed, u64::MAX, 0, 0)),
        }
    }
}
