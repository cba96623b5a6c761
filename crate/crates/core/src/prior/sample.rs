use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use super::{apply_missingness, canonical_relabel, pad_features, scale_01};
use super::{NiwParams, PriorConfig, SyntheticDataset};
use crate::error::{Error, Result};

/// Precision matrices with a condition number beyond this are redrawn.
const MAX_CONDITION: f64 = 1e12;
const MAX_COMPONENT_RETRIES: usize = 16;

/// Deterministic generator for the `index`-th dataset of a run.
pub fn dataset_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Symmetric Dirichlet draw on the `k`-simplex.
///
/// Gamma variates are drawn in log space (`Gamma(a) = Gamma(a + 1) * U^(1/a)`)
/// so that small concentrations do not underflow to exact zeros.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Argument("Dirichlet dimension must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("Dirichlet concentration must be > 0, got {alpha}")));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let boosted = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::Argument(e.to_string()))?;
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = boosted.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs
        .iter()
        .map(|l| (l - max).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Mean and covariance of one mixture component.
#[derive(Debug, Clone)]
pub struct Component {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Precision matrix the covariance was derived from.
    pub precision: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`.
    pub cov_chol: DMatrix<f64>,
}

/// Draws `(mu, Sigma)` from the Normal-Inverse-Wishart prior.
///
/// `Lambda = L A A^T L^T` with `L = chol(W)` and Bartlett factor `A`
/// (`A_ii = sqrt(chi2(v - i))` for zero-based `i`, standard normal below the
/// diagonal); `Sigma = Lambda^-1` and `mu ~ N(m, Sigma / beta)`.
pub fn sample_component<R: Rng + ?Sized>(niw: &NiwParams, rng: &mut R) -> Result<Component> {
    let d = niw.dim();
    for _ in 0..MAX_COMPONENT_RETRIES {
        let mut a = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(niw.v - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = &niw.w_chol * a;
        let mut precision = &la * la.transpose();
        symmetrize(&mut precision);
        let eig = precision.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            continue;
        }
        let Some(mut cov) = precision.clone().try_inverse() else {
            continue;
        };
        symmetrize(&mut cov);
        let Some(chol) = nalgebra::Cholesky::new(cov.clone()) else {
            continue;
        };
        let cov_chol = chol.l();
        let eps = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let mean = &niw.m + (&cov_chol * eps) / niw.beta.sqrt();
        return Ok(Component {
            mean,
            cov,
            precision,
            cov_chol,
        });
    }
    Err(Error::Numerical(format!(
        "Wishart draw ill-conditioned after {MAX_COMPONENT_RETRIES} attempts"
    )))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.len() - 1
}

/// Draws one dataset from the prior using `rng`.
pub fn sample_dataset<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let n = rng.random_range(cfg.n_range.0..=cfg.n_range.1);
    let d = rng.random_range(cfg.d_range.0..=cfg.d_range.1);
    let niw = cfg.resolve(d)?;
    let k = rng.random_range(1..=cfg.k_max);

    let weights = sample_dirichlet(cfg.alpha, k, rng)?;
    let components = (0..k)
        .map(|_| sample_component(&niw, rng))
        .collect::<Result<Vec<_>>>()?;

    let mut x = Array2::<f64>::zeros((n, d));
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let j = sample_categorical(&weights, rng);
        let c = &components[j];
        let eps = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let xi = &c.mean + &c.cov_chol * eps;
        for (col, v) in xi.iter().enumerate() {
            x[(i, col)] = *v;
        }
        z.push(j);
    }

    let full = Array2::from_elem((n, d), true);
    let x = scale_01(&x, &full)?;
    let z = canonical_relabel(&x, &z);
    let k_true = z.iter().copied().max().map_or(0, |m| m + 1);

    let mask = match cfg.miss_range {
        Some((lo, hi)) => {
            let rate = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            apply_missingness((n, d), rate, rng, None)?
        }
        None => full,
    };
    let (x, mask) = if cfg.d_pad > 0 {
        pad_features(&x, &mask, cfg.d_pad)?
    } else {
        (x, mask)
    };

    Ok(SyntheticDataset {
        x,
        z,
        k_true,
        mask,
        d_native: d,
        k_sampled: k,
        seed: None,
    })
}

/// Draws one dataset as a pure function of `(cfg, seed)`.
pub fn sample_dataset_seeded(cfg: &PriorConfig, seed: u64) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = sample_dataset(cfg, &mut rng)?;
    ds.seed = Some(seed);
    Ok(ds)
}
