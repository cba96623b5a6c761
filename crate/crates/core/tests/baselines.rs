use cpfn::baselines::{aic, bic, em_fit, kmeanspp, select_all, silhouette, EmOptions};
use cpfn::metrics::ari;
use cpfn::par::Exec;
use cpfn::prior::{sample_dataset_seeded, PriorConfig, Preset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blobs(seed: u64, centers: &[[f64; 2]], sd: f64, per: usize) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((centers.len() * per, 2));
    let mut z = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per {
            for j in 0..2 {
                x[(c * per + i, j)] = center[j] + sd * rng.sample::<f64, _>(StandardNormal);
            }
            z.push(c);
        }
    }
    (x, z)
}

#[test]
fn em_loglik_never_decreases() {
    let cfg = PriorConfig::preset(Preset::Hard2d);
    let opts = EmOptions { n_init: 1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for s in 0..50 {
        let ds = sample_dataset_seeded(&cfg, 300 + s).unwrap();
        let k = rng.random_range(1..=6);
        let fit = em_fit(&ds.x, k, &opts, s).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "fit {s}, k {k}: {} -> {}", w[0], w[1]);
        }
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in &fit.covariances {
            assert!(c.clone().cholesky().is_some());
        }
    }
}

#[test]
fn lloyd_inertia_never_increases() {
    let cfg = PriorConfig::preset(Preset::Easy2d);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in 0..50 {
        let ds = sample_dataset_seeded(&cfg, 700 + s).unwrap();
        let k = rng.random_range(1..=8);
        let fit = kmeanspp(&ds.x, k, &mut rng).unwrap();
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8 * w[0].abs(), "fit {s}, k {k}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn separated_pairs_are_recovered() {
    for s in 0..10 {
        let (x, z) = blobs(s, &[[0.1, 0.1], [0.9, 0.9]], 0.02, 30);
        let em = em_fit(&x, 2, &EmOptions::default(), s).unwrap();
        assert_eq!(ari(&z, &em.hard_labels(&x).unwrap()).unwrap(), 1.0);
        let km = kmeanspp(&x, 2, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(ari(&z, &km.labels).unwrap(), 1.0);
    }
}

#[test]
fn single_component_is_the_sample_mle() {
    let (x, _) = blobs(3, &[[0.4, 0.6]], 0.1, 50);
    let fit = em_fit(&x, 1, &EmOptions { reg: 0.0, ..Default::default() }, 0).unwrap();
    let n = x.nrows() as f64;
    let mean: Vec<f64> = (0..2).map(|j| x.column(j).sum() / n).collect();
    for a in 0..2 {
        assert!((fit.means[0][a] - mean[a]).abs() < 1e-8);
        for b in 0..2 {
            let cov = x.rows().into_iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n;
            assert!((fit.covariances[0][(a, b)] - cov).abs() < 1e-8);
        }
    }
    assert_eq!(fit.weights, vec![1.0]);
}

// AIC is only checked not to under-fit: its 2p penalty is too light to stop
// extra components from chasing noise inside a blob.
#[test]
fn criteria_pick_three_on_separated_blobs() {
    for s in 0..5 {
        let (x, _) = blobs(s, &[[0.2, 0.2], [0.8, 0.25], [0.45, 0.8]], 0.03, 40);
        let reports = select_all(&x, 8, &EmOptions { n_init: 3, ..Default::default() }, s, Exec::default()).unwrap();
        for r in reports {
            if r.method == "aic" {
                assert!(r.k_star >= 3, "aic picked {} on trial {s}", r.k_star);
            } else {
                assert_eq!(r.k_star, 3, "{} picked {} on trial {s}", r.method, r.k_star);
            }
        }
    }
}

#[test]
fn criteria_match_hand_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let ll: f64 = rng.random_range(-1e4..1e3);
        let p: usize = rng.random_range(1..200);
        let n: usize = rng.random_range(1..5000);
        assert_eq!(aic(ll, p), 2.0 * p as f64 - 2.0 * ll);
        assert_eq!(bic(ll, p, n), p as f64 * (n as f64).ln() - 2.0 * ll);
        if (n as f64).ln() > 2.0 {
            assert!(bic(ll, p, n) > aic(ll, p));
        }
    }
}

/// Direct transcription of the definition over all ordered point pairs.
fn silhouette_oracle(x: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = x.nrows();
    let dist = |i: usize, j: usize| ((x[(i, 0)] - x[(j, 0)]).powi(2) + (x[(i, 1)] - x[(j, 1)]).powi(2)).sqrt();
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort();
    clusters.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(i, j)).sum::<f64>() / own.len() as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| {
                let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                other.iter().map(|&j| dist(i, j)).sum::<f64>() / other.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Restricted-growth strings enumerate each set partition exactly once.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            cur.push(l);
            grow(cur, n, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut vec![0], n, &mut out);
    out
}

#[test]
fn silhouette_matches_pairwise_oracle_on_every_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let parts = partitions(6);
    assert_eq!(parts.len(), 203);
    for _ in 0..3 {
        let x = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>());
        for p in parts.iter().filter(|p| p.iter().any(|&l| l > 0)) {
            let got = silhouette(&x, p).unwrap();
            assert!((got - silhouette_oracle(&x, p)).abs() < 1e-12, "{p:?}");
            assert!((-1.0..=1.0).contains(&got));
        }
    }
    let (x, z) = blobs(9, &[[0.0, 0.0], [10.0, 10.0]], 0.1, 5);
    assert!(silhouette(&x, &z).unwrap() >= 0.9);
}
