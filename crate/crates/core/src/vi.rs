//! Mean-field variational inference for the Bayesian Gaussian mixture with
//! a symmetric Dirichlet prior on the weights and a Normal-Wishart prior on
//! each component's mean and precision.
//!
//! The factorization is `q(z) q(pi) prod_k q(mu_k, Lambda_k)` and the
//! coordinate updates are the standard conjugate ones. With the statistics
//!
//! ```text
//! N_k   = sum_n r_nk
//! xbar_k = sum_n r_nk x_n / N_k
//! S_k   = sum_n r_nk (x_n - xbar_k)(x_n - xbar_k)^T / N_k
//! ```
//!
//! the posterior factors are
//!
//! ```text
//! alpha_k = alpha_0 + N_k
//! beta_k  = beta_0 + N_k
//! m_k     = (beta_0 m_0 + N_k xbar_k) / beta_k
//! W_k^-1  = W_0^-1 + N_k S_k + beta_0 N_k / (beta_0 + N_k) (xbar_k - m_0)(xbar_k - m_0)^T
//! nu_k    = nu_0 + N_k
//! ```
//!
//! and the responsibilities follow from
//!
//! ```text
//! E[ln pi_k]      = digamma(alpha_k) - digamma(sum_j alpha_j)
//! E[ln |Lambda_k|] = sum_{i=1..d} digamma((nu_k + 1 - i) / 2) + d ln 2 + ln |W_k|
//! E[(x - mu_k)^T Lambda_k (x - mu_k)] = d / beta_k + nu_k (x - m_k)^T W_k (x - m_k)
//! ln rho_nk = E[ln pi_k] + E[ln |Lambda_k|] / 2 - d/2 ln(2 pi) - E[...] / 2
//! ```
//!
//! The evidence lower bound is the sum of the seven expectation terms
//! `E[ln p(X|Z,mu,Lambda)] + E[ln p(Z|pi)] + E[ln p(pi)] + E[ln p(mu,Lambda)]
//! - E[ln q(Z)] - E[ln q(pi)] - E[ln q(mu,Lambda)]`.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::baselines::{argmax_rows, kmeanspp, pick_best, Candidate, FitReport};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::prior::NiwParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViOptions {
    pub n_init: usize,
    pub max_iter: usize,
    /// Relative ELBO change that stops the iteration.
    pub tol: f64,
    /// Ridge added to `W_k^-1` before inversion.
    pub reg: f64,
    /// Uniform mass mixed into the initial one-hot responsibilities.
    pub init_smoothing: f64,
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions { n_init: 10, max_iter: 500, tol: 1e-6, reg: 1e-9, init_smoothing: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct ViState {
    /// `n x k` responsibilities.
    pub resp: Array2<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub w: Vec<DMatrix<f64>>,
    pub nu: Vec<f64>,
    pub nk: Vec<f64>,
    pub xbar: Vec<DVector<f64>>,
    /// `N_k S_k`, the weighted scatter around `xbar_k`.
    pub scatter: Vec<DMatrix<f64>>,
    /// ELBO after every update of the parameter factors.
    pub elbo_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
}

/// Prior in the form used by the updates.
#[derive(Debug, Clone)]
pub struct ViPrior {
    pub alpha0: f64,
    pub beta0: f64,
    pub m0: DVector<f64>,
    pub w0_inv: DMatrix<f64>,
    pub nu0: f64,
    ln_b0: f64,
}

impl ViPrior {
    pub fn new(niw: &NiwParams) -> Result<Self> {
        let d = niw.dim();
        let w0_inv = niw
            .w
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Config("prior scale matrix is singular".into()))?;
        let ln_det_w0 = 2.0 * (0..d).map(|i| niw.w_chol[(i, i)].ln()).sum::<f64>();
        Ok(ViPrior {
            alpha0: niw.alpha,
            beta0: niw.beta,
            m0: niw.m.clone(),
            w0_inv,
            nu0: niw.v,
            ln_b0: ln_wishart_norm(ln_det_w0, niw.v, d),
        })
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }
}

/// `ln B(W, nu)`, the log normalizer of the Wishart density.
fn ln_wishart_norm(ln_det_w: f64, nu: f64, d: usize) -> f64 {
    let df = d as f64;
    let lg: f64 = (1..=d).map(|i| ln_gamma((nu + 1.0 - i as f64) / 2.0)).sum();
    -0.5 * nu * ln_det_w - (0.5 * nu * df * LN_2 + 0.25 * df * (df - 1.0) * PI.ln() + lg)
}

fn ln_dirichlet_norm(alpha: &[f64]) -> f64 {
    ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

/// Per-component expectations needed by both the E-step and the ELBO.
struct Expect {
    ln_pi: Vec<f64>,
    ln_lambda: Vec<f64>,
    ln_det_w: Vec<f64>,
}

fn chol_ln_det(m: &DMatrix<f64>) -> Option<f64> {
    let l = Cholesky::new(m.clone())?.l();
    let v = 2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    v.is_finite().then_some(v)
}

impl ViState {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    fn expectations(&self) -> Option<Expect> {
        let d = self.means[0].len();
        let total: f64 = self.alpha.iter().sum();
        let ln_pi = self.alpha.iter().map(|&a| digamma(a) - digamma(total)).collect();
        let mut ln_lambda = Vec::with_capacity(self.k());
        let mut ln_det_w = Vec::with_capacity(self.k());
        for j in 0..self.k() {
            let ldw = chol_ln_det(&self.w[j])?;
            let psi: f64 = (1..=d).map(|i| digamma((self.nu[j] + 1.0 - i as f64) / 2.0)).sum();
            ln_lambda.push(psi + d as f64 * LN_2 + ldw);
            ln_det_w.push(ldw);
        }
        Some(Expect { ln_pi, ln_lambda, ln_det_w })
    }

    /// Statistics and posterior factors from the current responsibilities.
    fn update_parameters(&mut self, x: &Array2<f64>, prior: &ViPrior, reg: f64) -> Option<()> {
        let (n, d) = x.dim();
        for j in 0..self.k() {
            let nk: f64 = self.resp.column(j).sum();
            let mut xbar = DVector::zeros(d);
            for i in 0..n {
                for a in 0..d {
                    xbar[a] += self.resp[(i, j)] * x[(i, a)];
                }
            }
            if nk > 0.0 {
                xbar /= nk;
            }
            let mut sc = DMatrix::zeros(d, d);
            for i in 0..n {
                let r = self.resp[(i, j)];
                for a in 0..d {
                    let da = x[(i, a)] - xbar[a];
                    for b in 0..=a {
                        sc[(a, b)] += r * da * (x[(i, b)] - xbar[b]);
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    sc[(b, a)] = sc[(a, b)];
                }
            }
            let beta = prior.beta0 + nk;
            let mean = (&prior.m0 * prior.beta0 + &xbar * nk) / beta;
            let dm = &xbar - &prior.m0;
            let mut w_inv = &prior.w0_inv + &sc + (&dm * dm.transpose()) * (prior.beta0 * nk / beta);
            for a in 0..d {
                w_inv[(a, a)] += reg;
            }
            let w = Cholesky::new(w_inv)?.inverse();
            self.nk[j] = nk;
            self.alpha[j] = prior.alpha0 + nk;
            self.beta[j] = beta;
            self.means[j] = mean;
            self.w[j] = (&w + w.transpose()) * 0.5;
            self.nu[j] = prior.nu0 + nk;
            self.xbar[j] = xbar;
            self.scatter[j] = sc;
        }
        Some(())
    }

    fn update_responsibilities(&mut self, x: &Array2<f64>, e: &Expect) {
        let (n, d) = x.dim();
        let k = self.k();
        let base = -0.5 * d as f64 * (2.0 * PI).ln();
        let mut row = vec![0.0; k];
        let mut diff = DVector::zeros(d);
        for i in 0..n {
            for j in 0..k {
                for a in 0..d {
                    diff[a] = x[(i, a)] - self.means[j][a];
                }
                let maha = (self.w[j].clone() * &diff).dot(&diff);
                row[j] = e.ln_pi[j] + 0.5 * e.ln_lambda[j] + base
                    - 0.5 * (d as f64 / self.beta[j] + self.nu[j] * maha);
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            for j in 0..k {
                self.resp[(i, j)] = (row[j] - m).exp() / z;
            }
        }
    }

    /// Evidence lower bound of the current state.
    pub fn elbo(&self, prior: &ViPrior) -> Result<f64> {
        let e = self
            .expectations()
            .ok_or_else(|| Error::Numerical("posterior scale matrix is not positive definite".into()))?;
        Ok(self.elbo_with(prior, &e))
    }

    fn elbo_with(&self, prior: &ViPrior, e: &Expect) -> f64 {
        let d = prior.dim();
        let df = d as f64;
        let k = self.k();
        let ln_2pi = (2.0 * PI).ln();
        let (mut lik, mut p_z, mut p_mu_lambda, mut q_mu_lambda) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..k {
            let w = &self.w[j];
            let nk = self.nk[j];
            let dx = &self.xbar[j] - &self.means[j];
            let trace_sw = (&self.scatter[j] * w).trace();
            lik += 0.5
                * (nk * (e.ln_lambda[j] - df / self.beta[j] - df * ln_2pi)
                    - self.nu[j] * trace_sw
                    - nk * self.nu[j] * (w * &dx).dot(&dx));
            p_z += nk * e.ln_pi[j];
            let dm = &self.means[j] - &prior.m0;
            p_mu_lambda += 0.5
                * (df * (prior.beta0 / (2.0 * PI)).ln() + e.ln_lambda[j]
                    - df * prior.beta0 / self.beta[j]
                    - prior.beta0 * self.nu[j] * (w * &dm).dot(&dm))
                + prior.ln_b0
                + 0.5 * (prior.nu0 - df - 1.0) * e.ln_lambda[j]
                - 0.5 * self.nu[j] * (&prior.w0_inv * w).trace();
            let ln_b = ln_wishart_norm(e.ln_det_w[j], self.nu[j], d);
            let entropy = -ln_b - 0.5 * (self.nu[j] - df - 1.0) * e.ln_lambda[j] + 0.5 * self.nu[j] * df;
            q_mu_lambda += 0.5 * e.ln_lambda[j] + 0.5 * df * (self.beta[j] / (2.0 * PI)).ln() - 0.5 * df - entropy;
        }
        let ln_pi_sum: f64 = e.ln_pi.iter().sum();
        let p_pi = ln_dirichlet_norm(&vec![prior.alpha0; k]) + (prior.alpha0 - 1.0) * ln_pi_sum;
        let q_pi = self.alpha.iter().zip(&e.ln_pi).map(|(a, l)| (a - 1.0) * l).sum::<f64>()
            + ln_dirichlet_norm(&self.alpha);
        let q_z: f64 = self.resp.iter().filter(|&&r| r > 0.0).map(|&r| r * r.ln()).sum();
        lik + p_z + p_pi + p_mu_lambda - q_z - q_pi - q_mu_lambda
    }

    /// Most responsible component per point.
    pub fn hard_labels(&self) -> Vec<usize> {
        argmax_rows(&self.resp)
    }

    /// Number of components that own at least one point under hard labels.
    pub fn occupied(&self) -> usize {
        let mut seen = vec![false; self.k()];
        self.hard_labels().into_iter().for_each(|l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    }

    /// Reorders components by `perm` (new index j takes old `perm[j]`).
    pub fn permuted(&self, perm: &[usize]) -> ViState {
        let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let mut resp = self.resp.clone();
        for (j, &p) in perm.iter().enumerate() {
            resp.column_mut(j).assign(&self.resp.column(p));
        }
        ViState {
            resp,
            alpha: pick(&self.alpha),
            beta: pick(&self.beta),
            means: perm.iter().map(|&p| self.means[p].clone()).collect(),
            w: perm.iter().map(|&p| self.w[p].clone()).collect(),
            nu: pick(&self.nu),
            nk: pick(&self.nk),
            xbar: perm.iter().map(|&p| self.xbar[p].clone()).collect(),
            scatter: perm.iter().map(|&p| self.scatter[p].clone()).collect(),
            elbo_trace: self.elbo_trace.clone(),
            n_iter: self.n_iter,
            converged: self.converged,
        }
    }
}

fn empty_state(resp: Array2<f64>, d: usize) -> ViState {
    let k = resp.ncols();
    ViState {
        resp,
        alpha: vec![0.0; k],
        beta: vec![0.0; k],
        means: vec![DVector::zeros(d); k],
        w: vec![DMatrix::zeros(d, d); k],
        nu: vec![0.0; k],
        nk: vec![0.0; k],
        xbar: vec![DVector::zeros(d); k],
        scatter: vec![DMatrix::zeros(d, d); k],
        elbo_trace: Vec::new(),
        n_iter: 0,
        converged: false,
    }
}

/// Coordinate ascent from the given responsibilities.
pub fn cavi_from(x: &Array2<f64>, resp: Array2<f64>, prior: &ViPrior, opts: &ViOptions) -> Option<ViState> {
    let mut st = empty_state(resp, x.ncols());
    loop {
        st.update_parameters(x, prior, opts.reg)?;
        let e = st.expectations()?;
        let elbo = st.elbo_with(prior, &e);
        if !elbo.is_finite() {
            return None;
        }
        if let Some(&prev) = st.elbo_trace.last() {
            if (elbo - prev).abs() <= opts.tol * prev.abs() {
                st.converged = true;
            }
        }
        st.elbo_trace.push(elbo);
        if st.converged || st.n_iter == opts.max_iter {
            return Some(st);
        }
        st.update_responsibilities(x, &e);
        st.n_iter += 1;
    }
}

/// Best-ELBO CAVI fit over `n_init` K-means++ starts.
pub fn cavi_fit(x: &Array2<f64>, k: usize, prior: &ViPrior, opts: &ViOptions, seed: u64) -> Result<ViState> {
    let (n, d) = x.dim();
    if d != prior.dim() {
        return Err(Error::Argument(format!("data has {d} features, prior {}", prior.dim())));
    }
    if k == 0 || k > n {
        return Err(Error::Argument(format!("cannot fit {k} components to {n} points")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("VI needs complete, finite data".into()));
    }
    let mut best: Option<ViState> = None;
    for init in 0..opts.n_init.max(1) {
        let mut rng = crate::baselines::stream_rng(seed, init as u64);
        let km = kmeanspp(x, k, &mut rng)?;
        let s = opts.init_smoothing;
        let mut resp = Array2::from_elem((n, k), s / k as f64);
        for (i, &l) in km.labels.iter().enumerate() {
            resp[(i, l)] += 1.0 - s;
        }
        if let Some(fit) = cavi_from(x, resp, prior, opts) {
            let score = *fit.elbo_trace.last().unwrap();
            if best.as_ref().is_none_or(|b| score > *b.elbo_trace.last().unwrap()) {
                best = Some(fit);
            }
        }
    }
    best.ok_or_else(|| Error::Fit(format!("all {} VI initializations failed for k = {k}", opts.n_init)))
}

/// Outcome of the penalized ELBO sweep.
#[derive(Debug, Clone)]
pub struct ViSelection {
    /// Occupied components of the best-scoring fit.
    pub k_star: usize,
    /// Candidate k with the highest `ELBO + ln k!`.
    pub k_best: usize,
    pub best: ViState,
    pub report: FitReport,
}

/// Fits every candidate k and scores it by `ELBO(k) + ln(k!)`.
///
/// The ELBO of a mixture approximates a single one of the `k!` equivalent
/// label permutations of the posterior, hence the bonus. The returned count
/// is the number of occupied components of the winning fit: with a small
/// Dirichlet concentration, surplus components empty out and the bonus would
/// otherwise reward them.
pub fn select_k(
    x: &Array2<f64>,
    prior: &ViPrior,
    k_max: usize,
    include_one: bool,
    opts: &ViOptions,
    seed: u64,
    exec: Exec,
) -> Result<ViSelection> {
    if k_max < 2 {
        return Err(Error::Argument("k_max must be >= 2".into()));
    }
    let start = Instant::now();
    let lo = if include_one { 1 } else { 2 };
    let ks: Vec<usize> = (lo..=k_max.min(x.nrows())).collect();
    let fits = exec.map_slice(&ks, |&k| {
        let t = Instant::now();
        let fit = cavi_fit(x, k, prior, opts, seed.wrapping_add(k as u64));
        (k, fit, t.elapsed().as_secs_f64())
    });
    let mut candidates = Vec::with_capacity(fits.len());
    let mut states = Vec::with_capacity(fits.len());
    for (k, fit, seconds) in fits {
        let penalty = ln_gamma(k as f64 + 1.0);
        match fit {
            Ok(st) => {
                let elbo = *st.elbo_trace.last().unwrap();
                candidates.push(Candidate {
                    k,
                    objective: elbo,
                    penalty,
                    score: elbo + penalty,
                    iterations: st.n_iter,
                    seconds,
                    failed: None,
                });
                states.push(Some(st));
            }
            Err(e) => {
                candidates.push(Candidate {
                    k,
                    objective: f64::NAN,
                    penalty,
                    score: f64::NAN,
                    iterations: 0,
                    seconds,
                    failed: Some(e.to_string()),
                });
                states.push(None);
            }
        }
    }
    let k_best = pick_best(&candidates).ok_or_else(|| Error::Selection("every VI candidate failed".into()))?;
    let best = states[k_best - lo].take().expect("winning candidate has a state");
    let k_star = best.occupied();
    let report = FitReport { method: "vi".into(), k_star, candidates, seconds: start.elapsed().as_secs_f64() };
    Ok(ViSelection { k_star, k_best, best, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{PriorConfig, Preset};

    fn prior(d: usize) -> ViPrior {
        let mut cfg = PriorConfig::preset(Preset::Easy2d);
        cfg.d_range = (d, d);
        ViPrior::new(&cfg.resolve(d).unwrap()).unwrap()
    }

    #[test]
    fn single_component_has_unit_responsibilities() {
        let x = ndarray::array![[0.1, 0.2], [0.4, 0.1], [0.9, 0.8], [0.3, 0.3]];
        let st = cavi_fit(&x, 1, &prior(2), &ViOptions::default(), 0).unwrap();
        assert!(st.resp.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn elbo_is_symmetric_in_component_order() {
        let x = ndarray::array![[0.1, 0.2], [0.15, 0.22], [0.9, 0.8], [0.85, 0.9], [0.5, 0.1]];
        let p = prior(2);
        let st = cavi_fit(&x, 3, &p, &ViOptions::default(), 1).unwrap();
        let a = st.elbo(&p).unwrap();
        let b = st.permuted(&[2, 0, 1]).elbo(&p).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}
