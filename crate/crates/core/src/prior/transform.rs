use std::collections::BTreeMap;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Per-feature min-max scaling over observed entries.
///
/// Constant features map to 0.5. Entries marked missing are copied through
/// untouched.
pub fn scale_01(x: &Array2<f64>, mask: &Array2<bool>) -> Result<Array2<f64>> {
    if x.dim() != mask.dim() {
        return Err(Error::Argument(format!(
            "matrix {:?} and mask {:?} differ in shape",
            x.dim(),
            mask.dim()
        )));
    }
    let mut out = x.clone();
    for col in 0..x.ncols() {
        let observed = x
            .column(col)
            .iter()
            .zip(mask.column(col).iter())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect::<Vec<_>>();
        if observed.is_empty() {
            return Err(Error::Data(format!("feature {col} has no observed entries")));
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("feature {col} contains non-finite values")));
        }
        let lo = observed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (v, &m) in out.column_mut(col).iter_mut().zip(mask.column(col).iter()) {
            if m {
                *v = if range > 0.0 { ((*v - lo) / range).clamp(0.0, 1.0) } else { 0.5 };
            }
        }
    }
    Ok(out)
}

/// Relabels clusters by proximity to the origin.
///
/// The cluster holding the point nearest to the origin becomes 0; the others
/// follow in order of their nearest member's distance (ties resolved by the
/// lower point index). Only the names of the clusters change.
pub fn canonical_relabel(x: &Array2<f64>, z: &[usize]) -> Vec<usize> {
    // label -> (min squared distance, index of the point achieving it)
    let mut nearest: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, &label) in z.iter().enumerate() {
        let dist: f64 = x.row(i).iter().map(|v| v * v).sum();
        nearest
            .entry(label)
            .and_modify(|best| {
                if dist < best.0 {
                    *best = (dist, i);
                }
            })
            .or_insert((dist, i));
    }
    let mut order: Vec<(usize, (f64, usize))> = nearest.into_iter().collect();
    order.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let rename: BTreeMap<usize, usize> = order
        .iter()
        .enumerate()
        .map(|(new, (old, _))| (*old, new))
        .collect();
    z.iter().map(|l| rename[l]).collect()
}

/// Appends zero columns (marked observed) up to width `d_pad`.
pub fn pad_features(
    x: &Array2<f64>,
    mask: &Array2<bool>,
    d_pad: usize,
) -> Result<(Array2<f64>, Array2<bool>)> {
    let (n, d) = x.dim();
    if d > d_pad {
        return Err(Error::Argument(format!("cannot pad {d} features down to {d_pad}")));
    }
    let mut xp = Array2::<f64>::zeros((n, d_pad));
    let mut mp = Array2::from_elem((n, d_pad), true);
    xp.slice_mut(s![.., ..d]).assign(x);
    mp.slice_mut(s![.., ..d]).assign(mask);
    Ok((xp, mp))
}

/// Hides `round(rate * n * d)` entries uniformly at random while keeping at
/// least one observed entry per row.
///
/// With `base` the result only adds missing entries to it, so masks built
/// for increasing rates are nested.
pub fn apply_missingness<R: Rng + ?Sized>(
    shape: (usize, usize),
    rate: f64,
    rng: &mut R,
    base: Option<&Array2<bool>>,
) -> Result<Array2<bool>> {
    let (n, d) = shape;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Argument(format!("missing rate {rate} outside [0, 1]")));
    }
    let mut mask = match base {
        Some(b) if b.dim() != shape => {
            return Err(Error::Argument(format!(
                "base mask {:?} does not match shape {shape:?}",
                b.dim()
            )))
        }
        Some(b) => b.clone(),
        None => Array2::from_elem(shape, true),
    };
    let target = (rate * (n * d) as f64).round() as usize;
    if target > n * d.saturating_sub(1) {
        return Err(Error::Argument(format!(
            "missing rate {rate} leaves a fully-missing row ({target} of {} entries, max {})",
            n * d,
            n * d.saturating_sub(1)
        )));
    }
    let already = mask.iter().filter(|&&m| !m).count();
    if already > target {
        return Err(Error::Argument(format!(
            "base mask already hides {already} entries, more than the {target} requested"
        )));
    }
    let mut row_observed: Vec<usize> = mask
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&m| m).count())
        .collect();
    if row_observed.iter().any(|&c| c == 0) {
        return Err(Error::Argument("base mask has a fully-missing row".into()));
    }
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| mask[(i, j)])
        .collect();
    candidates.shuffle(rng);
    let mut remaining = target - already;
    for (i, j) in candidates {
        if remaining == 0 {
            break;
        }
        if row_observed[i] > 1 {
            mask[(i, j)] = false;
            row_observed[i] -= 1;
            remaining -= 1;
        }
    }
    debug_assert_eq!(remaining, 0);
    Ok(mask)
}
