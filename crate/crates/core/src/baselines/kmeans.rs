use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};

pub const LLOYD_MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// `k x d` cluster centers.
    pub centers: Array2<f64>,
    pub inertia: f64,
    pub n_iter: usize,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// D^2-weighted seeding: the first center is uniform, each further one is a
/// point drawn with probability proportional to its squared distance to the
/// nearest center chosen so far.
pub fn seed_centers<R: Rng + ?Sized>(x: &Array2<f64>, k: usize, rng: &mut R) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("cannot seed {k} centers from {n} points")));
    }
    let mut centers = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if u < acc && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            while dist[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    Ok(centers)
}

fn assign(x: &Array2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let (best, dist) = (0..centers.nrows())
            .map(|c| (c, sq_dist(x.row(i), centers.row(c))))
            .fold((0, f64::INFINITY), |b, cur| if cur.1 < b.1 { cur } else { b });
        *label = best;
        inertia += dist;
    }
    inertia
}

/// K-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing (at most 300 iterations). Empty clusters keep their center.
pub fn kmeanspp<R: Rng + ?Sized>(x: &Array2<f64>, k: usize, rng: &mut R) -> Result<KMeansFit> {
    let mut centers = seed_centers(x, k, rng)?;
    let (n, d) = x.dim();
    let mut labels = vec![usize::MAX; n];
    let mut prev = labels.clone();
    let mut trace = Vec::new();
    let mut n_iter = 0;
    loop {
        let inertia = assign(x, &centers, &mut labels);
        trace.push(inertia);
        if labels == prev || n_iter == LLOYD_MAX_ITER {
            return Ok(KMeansFit { labels, centers, inertia, n_iter, inertia_trace: trace });
        }
        n_iter += 1;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += &x.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&mean);
            }
        }
        prev.clone_from(&labels);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let x = ndarray::array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]];
        let fit = kmeanspp(&x, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut l = fit.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let x = Array2::from_elem((5, 2), 0.3);
        let fit = kmeanspp(&x, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert!(kmeanspp(&x, 6, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }
}
