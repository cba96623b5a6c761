//! Inference with a trained network: the count posterior, conditioned
//! responsibilities and hard labels.
//!
//! With `k = 0` responsibilities take two passes. The first pass reads the
//! count head; the second conditions on the chosen count and only its object
//! outputs are kept.

use std::io::Write;

use ndarray::Array2;

use crate::baselines::argmax_rows;
use crate::error::{Error, Result};
use crate::model::{EncodedInput, Network, Real};
use crate::prior::pad_features;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPosterior {
    /// Probabilities of 1..=k_max clusters.
    pub count_probs: Vec<f64>,
    /// `n x k_max` per-point cluster probabilities.
    pub responsibilities: Array2<f64>,
    /// Count the responsibilities were conditioned on; 0 when none was.
    pub k_used: usize,
}

/// How the conditioning count is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountPick {
    Fixed(usize),
    /// Most probable count, ties to the smaller one.
    Argmax,
    /// The `r`-th most probable count (0 is the argmax).
    Rank(usize),
}

fn softmax<F: Real>(logits: &[F]) -> Vec<f64> {
    let v: Vec<f64> = logits.iter().map(|l| l.to_f64().unwrap()).collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Counts ordered by decreasing probability, ties to the smaller count.
pub fn ranked_counts(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.into_iter().map(|i| i + 1).collect()
}

fn encode<F: Real>(net: &Network<F>, x: &Array2<f64>, mask: &Array2<bool>) -> Result<EncodedInput<F>> {
    if x.nrows() == 0 {
        return Err(Error::Argument("empty dataset".into()));
    }
    if x.ncols() < net.cfg.d_in {
        let (xp, mp) = pad_features(x, mask, net.cfg.d_in)?;
        net.encode(&xp, &mp)
    } else {
        net.encode(x, mask)
    }
}

fn responsibilities<F: Real>(out_logits: &[F], n: usize, k_max: usize) -> Array2<f64> {
    let mut r = Array2::zeros((n, k_max));
    for i in 0..n {
        let p = softmax(&out_logits[i * k_max..(i + 1) * k_max]);
        r.row_mut(i).iter_mut().zip(p).for_each(|(a, b)| *a = b);
    }
    r
}

/// Posterior over the number of clusters (unconditioned pass).
///
/// Inputs with fewer columns than the model expects are zero-padded.
pub fn predict_count<F: Real>(net: &Network<F>, x: &Array2<f64>, mask: &Array2<bool>) -> Result<Vec<f64>> {
    let input = encode(net, x, mask)?;
    Ok(softmax(&net.forward(&input, 0)?.count_logits))
}

/// Responsibilities conditioned on `k`, or on the most probable count when
/// `k = 0`.
///
/// With `k > 0` there is a single pass and `count_probs` is the count head
/// read from that conditioned pass.
pub fn predict_responsibilities<F: Real>(net: &Network<F>, x: &Array2<f64>, mask: &Array2<bool>, k: usize) -> Result<ClusterPosterior> {
    let pick = if k == 0 { CountPick::Argmax } else { CountPick::Fixed(k) };
    predict_with(net, x, mask, pick)
}

pub fn predict_with<F: Real>(net: &Network<F>, x: &Array2<f64>, mask: &Array2<bool>, pick: CountPick) -> Result<ClusterPosterior> {
    let k_max = net.cfg.k_max;
    let input = encode(net, x, mask)?;
    let n = input.n;
    let (count_probs, k_used) = match pick {
        CountPick::Fixed(k) if k == 0 || k > k_max => {
            return Err(Error::Argument(format!("k = {k} outside 1..={k_max}")));
        }
        CountPick::Fixed(k) => {
            let out = net.forward(&input, k)?;
            let r = responsibilities(&out.assign_logits, n, k_max);
            return Ok(ClusterPosterior { count_probs: softmax(&out.count_logits), responsibilities: r, k_used: k });
        }
        CountPick::Argmax | CountPick::Rank(_) => {
            let rank = if let CountPick::Rank(r) = pick { r } else { 0 };
            if rank >= k_max {
                return Err(Error::Argument(format!("count rank {rank} outside 0..{k_max}")));
            }
            let probs = softmax(&net.forward(&input, 0)?.count_logits);
            let k = ranked_counts(&probs)[rank];
            (probs, k)
        }
    };
    let out = net.forward(&input, k_used)?;
    Ok(ClusterPosterior { count_probs, responsibilities: responsibilities(&out.assign_logits, n, k_max), k_used })
}

/// Most probable cluster per point, ties to the lowest index.
pub fn hard_labels(cp: &ClusterPosterior) -> Vec<usize> {
    argmax_rows(&cp.responsibilities)
}

/// Writes a prediction table: a `#` line with `k_used` and the count
/// probabilities, a column header, then one row per point.
pub fn write_prediction<W: Write>(cp: &ClusterPosterior, out: &mut W) -> std::io::Result<()> {
    let probs: Vec<String> = cp.count_probs.iter().map(|p| p.to_string()).collect();
    writeln!(out, "# k_used={} count_probs={}", cp.k_used, probs.join(";"))?;
    let k = cp.responsibilities.ncols();
    let cols: Vec<String> = (1..=k).map(|j| format!("r{j}")).collect();
    writeln!(out, "{},label", cols.join(","))?;
    for (row, label) in cp.responsibilities.rows().into_iter().zip(hard_labels(cp)) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{label}", vals.join(","))?;
    }
    Ok(())
}
