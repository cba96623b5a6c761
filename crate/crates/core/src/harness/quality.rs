use std::time::Instant;

use ndarray::Array2;
use serde_json::{json, Map, Value};

use super::{baseline_view, mean_se, num, ExperimentSpec, Report, Table, Timing};
use crate::baselines::{em_fit, kmeanspp, stream_rng};
use crate::error::{Error, Result};
use crate::metrics::{ami, ari, min_perm_nll, purity};
use crate::model::Network;
use crate::par::Exec;
use crate::posterior::{hard_labels, predict_responsibilities};
use crate::vi::{cavi_fit, select_k, ViPrior};

const METRICS: [&str; 4] = ["ari", "ami", "purity", "nll"];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scores {
    ari: f64,
    ami: f64,
    purity: f64,
    nll: f64,
}

impl Scores {
    fn of(z: &[usize], labels: &[usize], probs: &Array2<f64>) -> Result<Self> {
        Ok(Scores { ari: ari(z, labels)?, ami: ami(z, labels)?, purity: purity(z, labels)?, nll: min_perm_nll(z, probs)? })
    }

    fn get(&self, metric: &str) -> f64 {
        match metric {
            "ari" => self.ari,
            "ami" => self.ami,
            "purity" => self.purity,
            _ => self.nll,
        }
    }
}

/// Exact comparison after rounding to 1e-12; +1 when `a` is better.
fn compare(metric: &str, a: f64, b: f64) -> i8 {
    let r = |v: f64| if v.is_finite() { (v * 1e12).round() } else { v };
    let (ra, rb) = (r(a), r(b));
    if ra == rb {
        return 0;
    }
    let a_better = if metric == "nll" { ra < rb } else { ra > rb };
    if a_better { 1 } else { -1 }
}

fn require(model: Option<&Network<f32>>) -> Result<&Network<f32>> {
    model.ok_or_else(|| Error::Argument("this suite needs a trained checkpoint (--checkpoint)".into()))
}

fn labels_of(probs: &Array2<f64>) -> Vec<usize> {
    crate::baselines::argmax_rows(probs)
}

/// External metrics and NLL of the network and VI, once with the count
/// chosen by each method and once with the true count given.
pub fn run_quality(spec: &ExperimentSpec, model: Option<&Network<f32>>) -> Result<Report> {
    spec.validate()?;
    let net = require(model)?;
    let k_max = spec.prior.k_max;
    type Out = (usize, usize, Vec<(&'static str, &'static str, usize, Scores, f64)>);
    let per: Vec<Result<Out>> = spec.exec.map(spec.n_datasets, |i| {
        let ds = spec.dataset(i)?;
        let seed = spec.fit_seed(i);
        let x = baseline_view(&ds)?;
        let prior = ViPrior::new(&spec.prior.resolve(ds.d_native)?)?;
        let mut out = Vec::new();

        let t = Instant::now();
        let cp = predict_responsibilities(net, &ds.x, &ds.mask, 0)?;
        let secs = t.elapsed().as_secs_f64();
        out.push(("select", "pfn", cp.k_used, Scores::of(&ds.z, &hard_labels(&cp), &cp.responsibilities)?, secs));

        let t = Instant::now();
        let sel = select_k(&x, &prior, k_max, true, &spec.vi, seed, Exec::Sequential)?;
        let secs = t.elapsed().as_secs_f64();
        out.push(("select", "vi", sel.k_star, Scores::of(&ds.z, &sel.best.hard_labels(), &sel.best.resp)?, secs));

        let t = Instant::now();
        let cp = predict_responsibilities(net, &ds.x, &ds.mask, ds.k_true)?;
        let secs = t.elapsed().as_secs_f64();
        out.push(("true_k", "pfn", ds.k_true, Scores::of(&ds.z, &hard_labels(&cp), &cp.responsibilities)?, secs));

        let t = Instant::now();
        let st = cavi_fit(&x, ds.k_true, &prior, &spec.vi, seed)?;
        let secs = t.elapsed().as_secs_f64();
        out.push(("true_k", "vi", ds.k_true, Scores::of(&ds.z, &st.hard_labels(), &st.resp)?, secs));
        Ok((ds.n(), ds.k_true, out))
    });

    let mut rows = Table::new(&["dataset", "n", "k_true", "mode", "method", "k_used", "ari", "ami", "purity", "nll"]);
    let mut timings = Vec::new();
    // (mode, metric) -> [pfn wins, ties, vi wins]
    let mut wins: Vec<((&str, &str), [usize; 3])> = Vec::new();
    let mut values: Vec<((&str, &str, &str), Vec<f64>)> = Vec::new();
    for (i, r) in per.into_iter().enumerate() {
        let (n, k_true, out) = r?;
        for &(mode, method, k_used, s, secs) in &out {
            rows.push(vec![
                i.to_string(),
                n.to_string(),
                k_true.to_string(),
                mode.into(),
                method.into(),
                k_used.to_string(),
                s.ari.to_string(),
                s.ami.to_string(),
                s.purity.to_string(),
                s.nll.to_string(),
            ]);
            timings.push(Timing { dataset: i, method: format!("{method}_{mode}"), n, seconds: secs });
            for m in METRICS {
                let key = (mode, method, m);
                match values.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.push(s.get(m)),
                    None => values.push((key, vec![s.get(m)])),
                }
            }
        }
        for mode in ["select", "true_k"] {
            let pfn = out.iter().find(|o| o.0 == mode && o.1 == "pfn").unwrap().3;
            let vi = out.iter().find(|o| o.0 == mode && o.1 == "vi").unwrap().3;
            for m in METRICS {
                let slot = match wins.iter().position(|(k, _)| *k == (mode, m)) {
                    Some(p) => p,
                    None => {
                        wins.push(((mode, m), [0; 3]));
                        wins.len() - 1
                    }
                };
                wins[slot].1[(1 - compare(m, pfn.get(m), vi.get(m))) as usize] += 1;
            }
        }
    }

    let mut report = Report::new("quality", rows);
    let mut metrics = Map::new();
    for ((mode, method, m), v) in &values {
        let finite: Vec<f64> = v.iter().cloned().filter(|x| x.is_finite()).collect();
        let (mean, se) = mean_se(&finite);
        let mut e = json!({ "mean": num(mean), "se": num(se), "n": finite.len() });
        if *m == "nll" {
            e["n_infinite"] = json!(v.len() - finite.len());
        }
        let by_mode = metrics.entry(mode.to_string()).or_insert_with(|| json!({}));
        let by_method = by_mode.as_object_mut().unwrap().entry(method.to_string()).or_insert_with(|| json!({}));
        by_method[m.to_string()] = e;
    }
    let mut table = Table::new(&["mode", "metric", "pfn_wins", "ties", "vi_wins"]);
    for ((mode, m), w) in &wins {
        table.push(vec![mode.to_string(), m.to_string(), w[0].to_string(), w[1].to_string(), w[2].to_string()]);
    }
    report.summary.insert("preset".into(), json!(spec.preset.map(|p| p.name())));
    report.summary.insert("n_datasets".into(), json!(spec.n_datasets));
    report.summary.insert("metrics".into(), Value::Object(metrics));
    report.tables.push(("winrates".into(), table));
    report.timings = timings;
    Ok(report)
}

const RANK_METHODS: [&str; 3] = ["pfn", "gmm", "kmeans"];

/// Ranks 1..=3 per metric, best first. Exact ties are broken against the
/// network: the later a method appears in [`RANK_METHODS`], the better it
/// ranks among equals.
fn ranks(metric: &str, vals: [f64; 3]) -> [usize; 3] {
    let mut order = [2usize, 1, 0];
    order.sort_by(|&a, &b| match compare(metric, vals[a], vals[b]) {
        1 => std::cmp::Ordering::Less,
        -1 => std::cmp::Ordering::Greater,
        _ => std::cmp::Ordering::Equal,
    });
    let mut r = [0; 3];
    for (pos, &m) in order.iter().enumerate() {
        r[m] = pos + 1;
    }
    r
}

/// Mean ranks of the network, EM-GMM and K-means++ with the true count
/// given to all three.
pub fn run_ranks(spec: &ExperimentSpec, model: Option<&Network<f32>>) -> Result<Report> {
    spec.validate()?;
    let net = require(model)?;
    let per: Vec<Result<(usize, usize, [[f64; 3]; 3])>> = spec.exec.map(spec.n_datasets, |i| {
        let ds = spec.dataset(i)?;
        let seed = spec.fit_seed(i);
        let x = baseline_view(&ds)?;
        let k = ds.k_true;
        let pfn = hard_labels(&predict_responsibilities(net, &ds.x, &ds.mask, k)?);
        let gmm = if x.nrows() > k { labels_of(&em_fit(&x, k, &spec.em, seed)?.responsibilities(&x)?) } else { (0..x.nrows()).collect() };
        let km = kmeanspp(&x, k, &mut stream_rng(seed, u64::MAX))?.labels;
        let mut vals = [[0.0; 3]; 3];
        for (j, l) in [pfn, gmm, km].iter().enumerate() {
            vals[j] = [ari(&ds.z, l)?, ami(&ds.z, l)?, purity(&ds.z, l)?];
        }
        Ok((ds.n(), k, vals))
    });
    let mut rows = Table::new(&["dataset", "n", "k_true", "method", "ari", "ami", "purity", "rank_ari", "rank_ami", "rank_purity"]);
    let mut sums = [[0usize; 3]; 3];
    for (i, r) in per.into_iter().enumerate() {
        let (n, k, vals) = r?;
        let rk: Vec<[usize; 3]> =
            ["ari", "ami", "purity"].iter().enumerate().map(|(mi, m)| ranks(m, [vals[0][mi], vals[1][mi], vals[2][mi]])).collect();
        for (j, name) in RANK_METHODS.iter().enumerate() {
            let mut row = vec![i.to_string(), n.to_string(), k.to_string(), name.to_string()];
            row.extend(vals[j].iter().map(|v| v.to_string()));
            row.extend(rk.iter().map(|r| r[j].to_string()));
            for mi in 0..3 {
                sums[mi][j] += rk[mi][j];
            }
            rows.push(row);
        }
    }
    let mut report = Report::new("ranks", rows);
    let mut table = Table::new(&["method", "mean_rank_ari", "mean_rank_ami", "mean_rank_purity"]);
    let mut mean = Map::new();
    for (j, name) in RANK_METHODS.iter().enumerate() {
        let m: Vec<f64> = (0..3).map(|mi| sums[mi][j] as f64 / spec.n_datasets as f64).collect();
        table.push(vec![name.to_string(), m[0].to_string(), m[1].to_string(), m[2].to_string()]);
        mean.insert(name.to_string(), json!({ "ari": m[0], "ami": m[1], "purity": m[2] }));
    }
    report.summary.insert("preset".into(), json!(spec.preset.map(|p| p.name())));
    report.summary.insert("n_datasets".into(), json!(spec.n_datasets));
    report.summary.insert("mean_rank".into(), Value::Object(mean));
    report.tables.push(("ranks_table".into(), table));
    Ok(report)
}
