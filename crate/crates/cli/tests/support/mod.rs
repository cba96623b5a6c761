//! Brute-force oracles and fixtures for the acceptance run. Nothing here
//! calls the library routine it is used to check.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

/// Random label vector with values below `k`.
pub fn labels<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// ARI from the four pair counts, every pair visited once.
pub fn ari_pairs(t: &[usize], p: &[usize]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            match (t[i] == t[j], p[i] == p[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    if b == 0.0 && c == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / ((a + b) * (b + d) + (a + c) * (c + d))
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn counts(l: &[usize]) -> Vec<u64> {
    let mut m: BTreeMap<usize, u64> = BTreeMap::new();
    for &v in l {
        *m.entry(v).or_default() += 1;
    }
    m.into_values().collect()
}

fn entropy(c: &[u64], n: f64) -> f64 {
    c.iter().map(|&v| v as f64 / n).map(|p| -p * p.ln()).sum()
}

/// AMI with the max-entropy normalizer; the expected MI is summed over the
/// exact hypergeometric law with integer binomials.
pub fn ami_brute(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len() as u64;
    let nf = n as f64;
    let (ct, cp) = (counts(t), counts(p));
    // same partition up to names
    let mut names = BTreeMap::new();
    if t.iter().zip(p).all(|(a, b)| *names.entry(a).or_insert(b) == b) && ct.len() == cp.len() {
        return 1.0;
    }
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *joint.entry((a, b)).or_default() += 1;
    }
    let mt = {
        let mut m = BTreeMap::new();
        t.iter().for_each(|&v| *m.entry(v).or_insert(0u64) += 1);
        m
    };
    let mp = {
        let mut m = BTreeMap::new();
        p.iter().for_each(|&v| *m.entry(v).or_insert(0u64) += 1);
        m
    };
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &nij)| {
            let nij = nij as f64;
            nij / nf * (nf * nij / (mt[&a] as f64 * mp[&b] as f64)).ln()
        })
        .sum();
    let mut emi = 0.0;
    for &a in &ct {
        for &b in &cp {
            let total = binom(n, b) as f64;
            for nij in 1..=a.min(b) {
                let ways = binom(a, nij) * binom(n - a, b - nij);
                if ways == 0 {
                    continue;
                }
                let k = nij as f64;
                emi += k / nf * (nf * k / (a as f64 * b as f64)).ln() * (ways as f64 / total);
            }
        }
    }
    let h = entropy(&ct, nf).max(entropy(&cp, nf));
    (mi - emi) / (h - emi)
}

/// Purity by counting, one predicted cluster at a time.
pub fn purity_count(t: &[usize], p: &[usize]) -> f64 {
    let mut hits = 0;
    let mut seen: Vec<usize> = p.to_vec();
    seen.sort_unstable();
    seen.dedup();
    for c in seen {
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        for (&a, &b) in t.iter().zip(p) {
            if b == c {
                *tally.entry(a).or_default() += 1;
            }
        }
        hits += tally.values().max().unwrap();
    }
    hits as f64 / t.len() as f64
}

/// Minimum mean NLL over every injective map of true classes to columns,
/// evaluated point by point for each complete map.
pub fn perm_nll_exhaustive(y: &[usize], probs: &Array2<f64>) -> f64 {
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = probs.ncols();
    let mut best = f64::INFINITY;
    let mut map = vec![usize::MAX; classes.len()];
    fn rec(i: usize, map: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if i == map.len() {
            f(map);
            return;
        }
        for c in 0..k {
            if !map[..i].contains(&c) {
                map[i] = c;
                rec(i + 1, map, k, f);
            }
        }
    }
    rec(0, &mut map, k, &mut |m: &[usize]| {
        let nll: f64 = y
            .iter()
            .enumerate()
            .map(|(i, l)| -probs[(i, m[classes.binary_search(l).unwrap()])].ln())
            .sum::<f64>()
            / y.len() as f64;
        best = best.min(nll);
    });
    best
}

/// Canonical names by scanning points in order of distance to the origin:
/// a cluster's new name is the order in which it is first met.
pub fn relabel_oracle(x: &Array2<f64>, z: &[usize]) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..z.len()).map(|i| (x.row(i).dot(&x.row(i)), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut names: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, i) in order {
        let next = names.len();
        names.entry(z[i]).or_insert(next);
    }
    z.iter().map(|l| names[l]).collect()
}

/// All permutations of `0..k`.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Population mean and its standard error.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Three isotropic 2-D blobs with unit-scale sd and centres `sep` sds apart.
pub fn three_blobs<R: Rng>(rng: &mut R, per: usize, sd: f64, sep: f64) -> (Array2<f64>, Vec<usize>) {
    let s = sep * sd;
    let centers = [[0.0, 0.0], [s, 0.0], [s / 2.0, s * 0.866]];
    let mut x = Array2::zeros((3 * per, 2));
    let mut z = Vec::with_capacity(3 * per);
    for (c, ctr) in centers.iter().enumerate() {
        for i in 0..per {
            for j in 0..2 {
                x[(c * per + i, j)] = ctr[j] + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            z.push(c);
        }
    }
    (x, z)
}

/// Files under `dir` keyed by relative path, timing files left out.
pub fn report_bodies(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            if p.file_name().unwrap().to_string_lossy().starts_with("timing") {
                continue;
            }
            out.insert(name, std::fs::read(&p).unwrap());
        }
    }
    out
}
