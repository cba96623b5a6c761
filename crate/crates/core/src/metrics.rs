//! External clustering metrics and the permutation-minimized NLL.

use std::collections::BTreeMap;

use ndarray::Array2;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Contingency table of two labelings with dense row/column indices.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    pub n: u64,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl Contingency {
    pub fn new(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Argument(format!(
                "label vectors differ in length ({} vs {})",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::Argument("empty labelings".into()));
        }
        let (t, kt) = dense(y_true);
        let (p, kp) = dense(y_pred);
        let mut table = vec![vec![0u64; kp]; kt];
        for (&a, &b) in t.iter().zip(&p) {
            table[a][b] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..kp).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Contingency { table, rows, cols, n: y_true.len() as u64 })
    }
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand index.
pub fn ari(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let c = Contingency::new(y_true, y_pred)?;
    let total = pairs(c.n);
    let same_both: u128 = c.table.iter().flatten().map(|&v| pairs(v)).sum();
    let same_true: u128 = c.rows.iter().map(|&v| pairs(v)).sum();
    let same_pred: u128 = c.cols.iter().map(|&v| pairs(v)).sum();
    let tp = same_both as f64;
    let fn_ = (same_true - same_both) as f64;
    let fp = (same_pred - same_both) as f64;
    let tn = (total + same_both - same_true - same_pred) as f64;
    if fn_ == 0.0 && fp == 0.0 {
        return Ok(1.0);
    }
    Ok(2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn)))
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mutual information (nats) of a contingency table.
pub fn mutual_info(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information of two random labelings with the table's
/// marginals (hypergeometric model).
pub fn expected_mutual_info(c: &Contingency) -> f64 {
    let n = c.n;
    let nf = n as f64;
    let lg_n = ln_gamma(nf + 1.0);
    let mut emi = 0.0;
    for &a in &c.rows {
        for &b in &c.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            if lo > hi {
                continue;
            }
            let (af, bf) = (a as f64, b as f64);
            let fixed = ln_gamma(af + 1.0) + ln_gamma(bf + 1.0) + ln_gamma(nf - af + 1.0) + ln_gamma(nf - bf + 1.0)
                - lg_n;
            for nij in lo..=hi {
                let k = nij as f64;
                let log_p = fixed
                    - ln_gamma(k + 1.0)
                    - ln_gamma(af - k + 1.0)
                    - ln_gamma(bf - k + 1.0)
                    - ln_gamma(nf - af - bf + k + 1.0);
                emi += k / nf * (nf * k / (af * bf)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, normalized by the larger of the two
/// entropies.
pub fn ami(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let c = Contingency::new(y_true, y_pred)?;
    // Identical partitions score 1, including the all-singleton case where
    // MI, EMI and both entropies coincide and the ratio is 0/0.
    let one_cell = |line: &mut dyn Iterator<Item = u64>| line.filter(|&v| v > 0).count() == 1;
    if c.table.iter().all(|r| one_cell(&mut r.iter().copied()))
        && (0..c.cols.len()).all(|j| one_cell(&mut c.table.iter().map(|r| r[j])))
    {
        return Ok(1.0);
    }
    let mi = mutual_info(&c);
    let emi = expected_mutual_info(&c);
    let norm = entropy(&c.rows, c.n).max(entropy(&c.cols, c.n));
    let mut denom = norm - emi;
    if denom.abs() < f64::EPSILON {
        denom = f64::EPSILON.copysign(denom);
    }
    Ok((mi - emi) / denom)
}

/// Fraction of points belonging to the majority true class of their
/// predicted cluster.
pub fn purity(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let c = Contingency::new(y_true, y_pred)?;
    let hits: u64 = (0..c.cols.len())
        .map(|j| c.table.iter().map(|r| r[j]).max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / c.n as f64)
}

/// Strategy for the label-permutation search in [`min_perm_nll_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermSearch {
    /// Hungarian assignment from 8 columns up, enumeration below.
    Auto,
    Exhaustive,
    Hungarian,
}

/// Mean NLL of `y_true` under `probs`, minimized over injective mappings of
/// true classes onto probability columns. Infinite when every mapping hits
/// a zero probability or there are more classes than columns.
pub fn min_perm_nll(y_true: &[usize], probs: &Array2<f64>) -> Result<f64> {
    min_perm_nll_with(y_true, probs, PermSearch::Auto)
}

pub fn min_perm_nll_with(y_true: &[usize], probs: &Array2<f64>, search: PermSearch) -> Result<f64> {
    let (n, k) = probs.dim();
    if n != y_true.len() || n == 0 {
        return Err(Error::Argument(format!("{} labels for a {n}x{k} probability matrix", y_true.len())));
    }
    for (i, row) in probs.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!("row {i} is not a probability vector (sum {sum})")));
        }
    }
    let (classes, kt) = dense(y_true);
    if kt > k {
        return Ok(f64::INFINITY);
    }
    // cost[a][c]: NLL summed over points of class a when a maps to column c
    let mut cost = vec![vec![0.0f64; k]; kt];
    for (i, &a) in classes.iter().enumerate() {
        for c in 0..k {
            cost[a][c] -= probs[(i, c)].ln();
        }
    }
    let use_hungarian = match search {
        PermSearch::Auto => k >= 8,
        PermSearch::Exhaustive => false,
        PermSearch::Hungarian => true,
    };
    let assignment = if use_hungarian { hungarian(&cost) } else { enumerate(&cost) };
    Ok(assignment_cost(&cost, &assignment) / n as f64)
}

/// Sum of the chosen costs in row order; every search strategy reports its
/// optimum through this function.
fn assignment_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    cost.iter().zip(assignment).fold(0.0, |s, (row, &c)| s + row[c])
}

fn enumerate(cost: &[Vec<f64>]) -> Vec<usize> {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], partial: f64, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if row == cost.len() {
            if partial < best.0 || best.1.is_empty() {
                *best = (partial, cur.clone());
            }
            return;
        }
        for c in 0..used.len() {
            if used[c] {
                continue;
            }
            let s = partial + cost[row][c];
            if s > best.0 {
                continue;
            }
            used[c] = true;
            cur.push(c);
            go(cost, row + 1, used, s, cur, best);
            cur.pop();
            used[c] = false;
        }
    }
    let k = cost.first().map_or(0, |r| r.len());
    let mut best = (f64::INFINITY, Vec::new());
    go(cost, 0, &mut vec![false; k], 0.0, &mut Vec::new(), &mut best);
    if best.1.is_empty() {
        // every mapping is infinite
        best.1 = (0..cost.len()).collect();
    }
    best.1
}

/// Minimum-cost assignment of every row to a distinct column
/// (rows <= columns), O(rows^2 * columns).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Infinite entries are replaced by a cost larger than any finite
    // assignment so the search still returns a permutation.
    let finite_max = cost.iter().flatten().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b.abs()));
    let big = (finite_max + 1.0) * (n as f64 + 1.0) * 4.0;
    let c = |i: usize, j: usize| if cost[i][j].is_finite() { cost[i][j] } else { big };
    // 1-based potentials as in the classic formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_cases() {
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        assert_eq!(purity(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.75);
        assert_eq!(purity(&[0, 0, 1, 1, 2], &[0, 1, 2, 3, 4]).unwrap(), 1.0);
        assert!((ami(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(ami(&[0, 0, 1, 1, 2, 2], &[3; 6]).unwrap().abs() < 1e-12);
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn perm_nll_basics() {
        let p = array![[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        assert_eq!(min_perm_nll(&[1, 0, 0], &p).unwrap(), 0.0);
        let u = Array2::from_elem((4, 3), 1.0 / 3.0);
        assert!((min_perm_nll(&[0, 1, 2, 0], &u).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert_eq!(min_perm_nll(&[0, 1, 2], &array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]).unwrap(), f64::INFINITY);
        let hard = array![[1.0, 0.0], [1.0, 0.0]];
        assert_eq!(min_perm_nll(&[0, 1], &hard).unwrap(), f64::INFINITY);
        assert!(matches!(min_perm_nll(&[0], &array![[0.7, 0.7]]), Err(Error::Data(_))));
    }

    #[test]
    fn hungarian_handles_rectangular_and_infinite_costs() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]];
        assert_eq!(hungarian(&cost), vec![1, 0]);
        let cost = vec![vec![f64::INFINITY, 1.0], vec![2.0, f64::INFINITY]];
        assert_eq!(hungarian(&cost), vec![1, 0]);
    }
}
