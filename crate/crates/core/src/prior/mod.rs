//! Finite Bayesian GMM prior: configuration, synthetic dataset sampling and
//! the preprocessing steps applied to every training dataset.
//!
//! Generative chain for one dataset:
//!
//! ```text
//! n ~ U[n_lo, n_hi], d ~ U[d_lo, d_hi], k ~ U{1..K}
//! pi ~ Dir(alpha, ..., alpha)                      (k entries)
//! Lambda_j ~ Wishart(W, v), Sigma_j = Lambda_j^-1   (Bartlett construction)
//! mu_j ~ N(m, Sigma_j / beta)
//! z_i ~ Cat(pi), x_i ~ N(mu_{z_i}, Sigma_{z_i})
//! ```
//!
//! followed by zero-one scaling, canonical relabeling, optional missingness
//! masking and zero padding.

mod io;
mod sample;
mod transform;

pub use io::{read_dataset, write_dataset};
pub use sample::{
    dataset_rng, sample_component, sample_dataset, sample_dataset_seeded, sample_dirichlet,
    Component,
};
pub use transform::{apply_missingness, canonical_relabel, pad_features, scale_01};

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location `m` of the Normal-Inverse-Wishart mean prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Zero,
    Fixed(Vec<f64>),
}

/// Wishart scale matrix `W`, row-major when fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMatrix {
    Identity,
    Fixed(Vec<f64>),
}

/// Wishart degrees of freedom `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dof {
    /// `v = d` for whatever dimensionality is drawn.
    MatchDim,
    Fixed(f64),
}

/// Named prior settings used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[serde(rename = "2d-easy")]
    Easy2d,
    #[serde(rename = "2d-hard")]
    Hard2d,
    #[serde(rename = "5d-easy")]
    Easy5d,
    #[serde(rename = "5d-hard")]
    Hard5d,
    #[serde(rename = "5d-easy-miss")]
    Easy5dMissing,
    #[serde(rename = "5d-hard-miss")]
    Hard5dMissing,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Easy2d,
        Preset::Hard2d,
        Preset::Easy5d,
        Preset::Hard5d,
        Preset::Easy5dMissing,
        Preset::Hard5dMissing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Easy2d => "2d-easy",
            Preset::Hard2d => "2d-hard",
            Preset::Easy5d => "5d-easy",
            Preset::Hard5d => "5d-hard",
            Preset::Easy5dMissing => "5d-easy-miss",
            Preset::Hard5dMissing => "5d-hard-miss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown prior preset '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Symmetric Dirichlet concentration.
    pub alpha: f64,
    /// Mean-precision scaling; small values spread component means apart.
    pub beta: f64,
    pub mean: Location,
    pub scale: ScaleMatrix,
    pub dof: Dof,
    pub k_max: usize,
    pub n_range: (usize, usize),
    pub d_range: (usize, usize),
    /// Padded feature width, 0 disables padding.
    pub d_pad: usize,
    /// Range of the missing-entry fraction, `None` disables masking.
    pub miss_range: Option<(f64, f64)>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::preset(Preset::Easy2d)
    }
}

impl PriorConfig {
    pub fn preset(preset: Preset) -> Self {
        let (beta, d_range, d_pad, miss_range) = match preset {
            Preset::Easy2d => (0.01, (2, 2), 0, None),
            Preset::Hard2d => (0.1, (2, 2), 0, None),
            Preset::Easy5d => (0.01, (2, 5), 5, None),
            Preset::Hard5d => (0.1, (2, 5), 5, None),
            Preset::Easy5dMissing => (0.01, (5, 5), 5, Some((0.0, 0.8))),
            Preset::Hard5dMissing => (0.1, (5, 5), 5, Some((0.0, 0.8))),
        };
        PriorConfig {
            alpha: 0.1,
            beta,
            mean: Location::Zero,
            scale: ScaleMatrix::Identity,
            dof: Dof::MatchDim,
            k_max: 10,
            n_range: (100, 500),
            d_range,
            d_pad,
            miss_range,
        }
    }

    /// Width of the matrices handed to the model.
    pub fn model_width(&self) -> usize {
        if self.d_pad > 0 {
            self.d_pad
        } else {
            self.d_range.1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        let (n_lo, n_hi) = self.n_range;
        if n_lo == 0 || n_lo > n_hi {
            return Err(Error::Config(format!("invalid n_range [{n_lo}, {n_hi}]")));
        }
        let (d_lo, d_hi) = self.d_range;
        if d_lo == 0 || d_lo > d_hi {
            return Err(Error::Config(format!("invalid d_range [{d_lo}, {d_hi}]")));
        }
        if self.d_pad != 0 && self.d_pad < d_hi {
            return Err(Error::Config(format!(
                "d_pad {} smaller than largest sampled dimension {d_hi}",
                self.d_pad
            )));
        }
        if let Some((lo, hi)) = self.miss_range {
            if !(0.0 <= lo && lo <= hi && hi <= 0.8) {
                return Err(Error::Config(format!(
                    "missingness range [{lo}, {hi}] must lie within [0, 0.8]"
                )));
            }
            let worst = (d_lo - 1) as f64 / d_lo as f64;
            if hi > worst + 1e-12 {
                return Err(Error::Config(format!(
                    "missingness {hi} infeasible for d = {d_lo} while keeping one observed entry per row"
                )));
            }
        }
        let fixed = matches!(self.mean, Location::Fixed(_))
            || matches!(self.scale, ScaleMatrix::Fixed(_));
        if fixed && d_lo != d_hi {
            return Err(Error::Config(
                "fixed m/W require a single dimensionality (d_range lo == hi)".into(),
            ));
        }
        for d in d_lo..=d_hi {
            self.resolve(d)?;
        }
        Ok(())
    }

    /// NIW hyperparameters for a concrete dimensionality.
    pub fn resolve(&self, d: usize) -> Result<NiwParams> {
        let m = match &self.mean {
            Location::Zero => DVector::zeros(d),
            Location::Fixed(v) if v.len() == d => DVector::from_column_slice(v),
            Location::Fixed(v) => {
                return Err(Error::Config(format!("m has length {}, expected {d}", v.len())))
            }
        };
        let w = match &self.scale {
            ScaleMatrix::Identity => DMatrix::identity(d, d),
            ScaleMatrix::Fixed(v) if v.len() == d * d => DMatrix::from_row_slice(d, d, v),
            ScaleMatrix::Fixed(v) => {
                return Err(Error::Config(format!("W has {} entries, expected {}", v.len(), d * d)))
            }
        };
        if (&w - w.transpose()).abs().max() > 1e-12 {
            return Err(Error::Config("W must be symmetric".into()));
        }
        let w_chol = nalgebra::Cholesky::new(w.clone())
            .ok_or_else(|| Error::Config("W must be positive definite".into()))?
            .l();
        let v = match self.dof {
            Dof::MatchDim => d as f64,
            Dof::Fixed(v) => v,
        };
        if !(v >= d as f64) {
            return Err(Error::Config(format!("Wishart dof v = {v} must be >= d = {d}")));
        }
        Ok(NiwParams {
            alpha: self.alpha,
            beta: self.beta,
            m,
            w,
            w_chol,
            v,
        })
    }
}

/// Prior hyperparameters resolved for a fixed dimensionality.
#[derive(Debug, Clone)]
pub struct NiwParams {
    pub alpha: f64,
    pub beta: f64,
    pub m: DVector<f64>,
    pub w: DMatrix<f64>,
    /// Lower Cholesky factor of `w`.
    pub w_chol: DMatrix<f64>,
    pub v: f64,
}

impl NiwParams {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// One synthetic clustering task drawn from the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// `n x d` features; observed entries lie in `[0, 1]`.
    pub x: Array2<f64>,
    /// Canonical labels in `0..k_true`.
    pub z: Vec<usize>,
    pub k_true: usize,
    /// `true` marks an observed entry.
    pub mask: Array2<bool>,
    pub d_native: usize,
    /// Number of components drawn before assignment (may exceed `k_true`).
    pub k_sampled: usize,
    pub seed: Option<u64>,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    pub fn missing_fraction(&self) -> f64 {
        let total = self.mask.len();
        if total == 0 {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| !m).count() as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_defaults_are_accepted() {
        for p in Preset::ALL {
            PriorConfig::preset(p).validate().unwrap();
        }
        let cfg = PriorConfig::preset(Preset::Easy2d);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.mean, Location::Zero);
        assert_eq!(cfg.scale, ScaleMatrix::Identity);
        assert_eq!(cfg.dof, Dof::MatchDim);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = PriorConfig::preset(Preset::Easy2d);
        cfg.scale = ScaleMatrix::Fixed(vec![1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = PriorConfig::preset(Preset::Easy2d);
        cfg.dof = Dof::Fixed(1.5);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = PriorConfig::preset(Preset::Easy2d);
        cfg.miss_range = Some((0.0, 0.9));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = PriorConfig::preset(Preset::Easy2d);
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()).unwrap(), p);
        }
        assert!(Preset::parse("3d-easy").is_err());
    }
}
