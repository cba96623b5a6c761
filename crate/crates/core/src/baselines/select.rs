use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::em::{aic, bic, em_fit, n_params, EmFit, EmOptions};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Mean silhouette coefficient with Euclidean distances.
///
/// Points in singleton clusters contribute 0.
pub fn silhouette(x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::Argument(format!("{} labels for {n} points", labels.len())));
    }
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    let k = ids.len();
    if k < 2 {
        return Err(Error::Selection("silhouette is undefined for a single cluster".into()));
    }
    let lab: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut size = vec![0usize; k];
    lab.iter().for_each(|&l| size[l] += 1);
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                let dist: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sums[lab[j]] += dist;
            }
        }
        let own = lab[i];
        if size[own] == 1 {
            continue;
        }
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Sil,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Aic, Criterion::Bic, Criterion::Sil];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
            Criterion::Sil => "sil",
        }
    }
}

/// One candidate of a model-selection sweep, shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub k: usize,
    /// ELBO or log-likelihood of the fit.
    pub objective: f64,
    /// Term added to the objective (negative for penalties).
    pub penalty: f64,
    /// Selection score, higher is better.
    pub score: f64,
    pub iterations: usize,
    pub seconds: f64,
    /// Why the candidate was skipped, if it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

/// Machine-readable result of a selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub method: String,
    pub k_star: usize,
    pub candidates: Vec<Candidate>,
    pub seconds: f64,
}

/// Highest score wins, ties go to the smaller k.
pub fn pick_best(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<&Candidate> = None;
    for c in candidates.iter().filter(|c| c.failed.is_none() && c.score.is_finite()) {
        if best.is_none_or(|b| c.score > b.score || (c.score == b.score && c.k < b.k)) {
            best = Some(c);
        }
    }
    best.map(|c| c.k)
}

/// EM fits for k = 2..=k_max with their wall times.
pub fn em_sweep(x: &Array2<f64>, k_max: usize, opts: &EmOptions, seed: u64, exec: Exec) -> Vec<(usize, Result<EmFit>, f64)> {
    let ks: Vec<usize> = (2..=k_max).filter(|&k| k < x.nrows()).collect();
    exec.map_slice(&ks, |&k| {
        let t = Instant::now();
        let fit = em_fit(x, k, opts, seed.wrapping_add(k as u64));
        (k, fit, t.elapsed().as_secs_f64())
    })
}

fn candidate(x: &Array2<f64>, criterion: Criterion, k: usize, fit: &Result<EmFit>, seconds: f64) -> Candidate {
    let (n, d) = x.dim();
    let mut c = Candidate { k, objective: f64::NAN, penalty: 0.0, score: f64::NAN, iterations: 0, seconds, failed: None };
    let fit = match fit {
        Ok(f) => f,
        Err(e) => {
            c.failed = Some(e.to_string());
            return c;
        }
    };
    c.objective = fit.log_likelihood;
    c.iterations = fit.n_iter;
    let p = n_params(k, d);
    match criterion {
        // scores are negated so that higher is better throughout
        Criterion::Aic => {
            c.penalty = -(p as f64);
            c.score = -aic(fit.log_likelihood, p);
        }
        Criterion::Bic => {
            c.penalty = -(p as f64) * (n as f64).ln() / 2.0;
            c.score = -bic(fit.log_likelihood, p, n);
        }
        Criterion::Sil => match fit.hard_labels(x).and_then(|l| silhouette(x, &l)) {
            Ok(s) => c.score = s,
            Err(e) => c.failed = Some(e.to_string()),
        },
    }
    c
}

/// Reports for every criterion from one shared EM sweep.
pub fn select_all(x: &Array2<f64>, k_max: usize, opts: &EmOptions, seed: u64, exec: Exec) -> Result<Vec<FitReport>> {
    if k_max < 2 {
        return Err(Error::Argument("k_max must be >= 2".into()));
    }
    let start = Instant::now();
    let sweep = em_sweep(x, k_max, opts, seed, exec);
    let seconds = start.elapsed().as_secs_f64();
    Criterion::ALL
        .iter()
        .map(|&crit| {
            let candidates: Vec<Candidate> = sweep.iter().map(|(k, fit, s)| candidate(x, crit, *k, fit, *s)).collect();
            let k_star = pick_best(&candidates)
                .ok_or_else(|| Error::Selection(format!("every candidate failed under {}", crit.name())))?;
            Ok(FitReport { method: crit.name().to_string(), k_star, candidates, seconds })
        })
        .collect()
}

/// Cluster count chosen by one criterion over k = 2..=k_max.
pub fn select_k_criterion(x: &Array2<f64>, criterion: Criterion, k_max: usize, opts: &EmOptions, seed: u64) -> Result<FitReport> {
    let all = select_all(x, k_max, opts, seed, Exec::Sequential)?;
    Ok(all.into_iter().find(|r| r.method == criterion.name()).expect("all criteria reported"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn silhouette_four_points_by_hand() {
        let x = array![[0.0], [1.0], [4.0], [6.0]];
        // a_0 = 1, b_0 = 5 -> 0.8; a_1 = 1, b_1 = 4 -> 0.75
        // a_2 = 2, b_2 = 3.5 -> 3/7; a_3 = 2, b_3 = 5.5 -> 7/11
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        let want = (0.8 + 0.75 + 1.5 / 3.5 + 3.5 / 5.5) / 4.0;
        assert!((s - want).abs() < 1e-12);
        assert!(matches!(silhouette(&x, &[2, 2, 2, 2]), Err(Error::Selection(_))));
    }

    #[test]
    fn ties_go_to_smaller_k() {
        let mk = |k, score| Candidate { k, objective: 0.0, penalty: 0.0, score, iterations: 0, seconds: 0.0, failed: None };
        assert_eq!(pick_best(&[mk(2, 1.0), mk(3, 1.0)]), Some(2));
        assert_eq!(pick_best(&[mk(3, 1.0), mk(2, 1.0)]), Some(2));
        assert_eq!(pick_best(&[mk(2, 1.0), mk(3, 1.5)]), Some(3));
    }
}
