use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeanspp;
use super::stream_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub n_init: usize,
    /// Relative log-likelihood change that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge strength. Each covariance update becomes `(S_k + reg * I) / n_k`
    /// (`S_k` the weighted scatter), the maximizer under a fixed
    /// `-reg / 2 * tr(Sigma_k^-1)` log-prior, so EM ascends the penalized
    /// log-likelihood exactly.
    pub reg: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { n_init: 10, tol: 1e-6, max_iter: 300, reg: 1e-6 }
    }
}

/// Maximum-likelihood mixture with full covariances.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Unpenalized log-likelihood of the final parameters.
    pub log_likelihood: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Objective at each E-step: log-likelihood plus the ridge log-prior
    /// (plain log-likelihood when `reg = 0`).
    pub trace: Vec<f64>,
}

struct Component {
    mean: Vec<f64>,
    /// Lower Cholesky factor of the covariance, row-major `d x d`.
    chol: Vec<f64>,
    inv_diag: Vec<f64>,
    log_norm: f64,
}

impl Component {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<Self> {
        let d = mean.len();
        let l = Cholesky::new(cov.clone())?.l();
        let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        if !log_det.is_finite() {
            return None;
        }
        let chol = (0..d * d).map(|ij| l[(ij / d, ij % d)]).collect();
        Some(Component {
            mean: mean.iter().copied().collect(),
            chol,
            inv_diag: (0..d).map(|i| 1.0 / l[(i, i)]).collect(),
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    fn log_pdf(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = buf.len();
        // forward substitution L y = x - mean
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s = x[i] - self.mean[i] - row.iter().zip(&buf[..i]).map(|(a, b)| a * b).sum::<f64>();
            buf[i] = s * self.inv_diag[i];
            q += buf[i] * buf[i];
        }
        self.log_norm - 0.5 * q
    }
}

/// Log-likelihood and responsibilities of `x` under a mixture.
fn e_step(x: &Array2<f64>, log_w: &[f64], comps: &[Component], resp: &mut Array2<f64>) -> f64 {
    let d = x.ncols();
    let k = comps.len();
    let xs = x.as_slice().expect("standard layout");
    let rs = resp.as_slice_mut().expect("standard layout");
    let mut buf = vec![0.0; d];
    let mut ll = 0.0;
    for (xi, row) in xs.chunks_exact(d).zip(rs.chunks_exact_mut(k)) {
        for c in 0..k {
            row[c] = log_w[c] + comps[c].log_pdf(xi, &mut buf);
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        ll += m + total.ln();
        row.iter_mut().for_each(|v| *v /= total);
    }
    ll
}

/// Weighted means and covariances from responsibilities.
fn m_step(x: &Array2<f64>, resp: &Array2<f64>, ridge: f64) -> Option<(Vec<f64>, Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    let (n, d) = x.dim();
    let k = resp.ncols();
    let xs = x.as_slice().expect("standard layout");
    let rs = resp.as_slice().expect("standard layout");
    let mut nk = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (xi, row) in xs.chunks_exact(d).zip(rs.chunks_exact(k)) {
        for c in 0..k {
            nk[c] += row[c];
            for j in 0..d {
                sums[c * d + j] += row[c] * xi[j];
            }
        }
    }
    if nk.iter().any(|&v| !(v > 1e-10)) {
        return None;
    }
    let means: Vec<DVector<f64>> = (0..k).map(|c| DVector::from_iterator(d, (0..d).map(|j| sums[c * d + j] / nk[c]))).collect();
    let mut acc = vec![0.0; k * d * d];
    let mut diff = vec![0.0; d];
    for (xi, row) in xs.chunks_exact(d).zip(rs.chunks_exact(k)) {
        for c in 0..k {
            let r = row[c];
            for j in 0..d {
                diff[j] = xi[j] - means[c][j];
            }
            let block = &mut acc[c * d * d..(c + 1) * d * d];
            for a in 0..d {
                let ra = r * diff[a];
                for b in 0..=a {
                    block[a * d + b] += ra * diff[b];
                }
            }
        }
    }
    let covs = (0..k)
        .map(|c| {
            let block = &acc[c * d * d..(c + 1) * d * d];
            DMatrix::from_fn(d, d, |a, b| (block[a.max(b) * d + a.min(b)] + if a == b { ridge } else { 0.0 }) / nk[c])
        })
        .collect();
    let weights = nk.iter().map(|v| v / n as f64).collect();
    Some((weights, means, covs))
}

fn components(means: &[DVector<f64>], covs: &[DMatrix<f64>]) -> Option<Vec<Component>> {
    means.iter().zip(covs).map(|(m, c)| Component::new(m, c)).collect()
}

/// `-ridge / 2 * sum_k tr(Sigma_k^-1)`.
fn log_prior(covs: &[DMatrix<f64>], ridge: f64) -> Option<f64> {
    if ridge == 0.0 {
        return Some(0.0);
    }
    let mut t = 0.0;
    for c in covs {
        t += Cholesky::new(c.clone())?.inverse().trace();
    }
    Some(-0.5 * ridge * t)
}

fn run_once(x: &Array2<f64>, mut resp: Array2<f64>, opts: &EmOptions) -> Option<EmFit> {
    let ridge = opts.reg;
    let (mut weights, mut means, mut covs) = m_step(x, &resp, ridge)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    loop {
        let comps = components(&means, &covs)?;
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let ll = e_step(x, &log_w, &comps, &mut resp);
        let obj = ll + log_prior(&covs, ridge)?;
        if !obj.is_finite() {
            return None;
        }
        if let Some(&prev) = trace.last() {
            if (obj - prev).abs() <= opts.tol * prev.abs() {
                converged = true;
            }
        }
        trace.push(obj);
        if converged || n_iter == opts.max_iter {
            return Some(EmFit { weights, means, covariances: covs, log_likelihood: ll, n_iter, converged, trace });
        }
        n_iter += 1;
        (weights, means, covs) = m_step(x, &resp, ridge)?;
    }
}

/// Best-of-`n_init` EM, each start initialized from K-means++ hard labels.
pub fn em_fit(x: &Array2<f64>, k: usize, opts: &EmOptions, seed: u64) -> Result<EmFit> {
    let x = &x.as_standard_layout().into_owned();
    let n = x.nrows();
    if k == 0 || n <= k {
        return Err(Error::Argument(format!("EM needs n > k (n = {n}, k = {k})")));
    }
    let mut best: Option<EmFit> = None;
    for init in 0..opts.n_init.max(1) {
        let mut rng = stream_rng(seed, init as u64);
        let km = kmeanspp(x, k, &mut rng)?;
        let mut resp = Array2::zeros((n, k));
        for (i, &l) in km.labels.iter().enumerate() {
            resp[(i, l)] = 1.0;
        }
        if let Some(fit) = run_once(x, resp, opts) {
            if best.as_ref().is_none_or(|b| fit.trace.last() > b.trace.last()) {
                best = Some(fit);
            }
        }
    }
    best.ok_or_else(|| Error::Fit(format!("all {} EM initializations failed for k = {k}", opts.n_init)))
}

impl EmFit {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn responsibilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let comps = components(&self.means, &self.covariances)
            .ok_or_else(|| Error::Numerical("covariance lost positive definiteness".into()))?;
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let x = &x.as_standard_layout().into_owned();
        let mut resp = Array2::zeros((x.nrows(), self.k()));
        e_step(x, &log_w, &comps, &mut resp);
        Ok(resp)
    }

    /// Most responsible component per point (ties to the lower index).
    pub fn hard_labels(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.responsibilities(x)?))
    }
}

pub fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0
        })
        .collect()
}

/// Free parameters of a full-covariance mixture.
pub fn n_params(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

pub fn aic(loglik: f64, p: usize) -> f64 {
    2.0 * p as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, p: usize, n: usize) -> f64 {
    p as f64 * (n as f64).ln() - 2.0 * loglik
}
