use std::time::Instant;

use serde_json::{json, Value};

use super::{accuracy_entry, baseline_view, ExperimentSpec, Report, Table, Timing};
use crate::baselines::select_all;
use crate::error::Result;
use crate::model::Network;
use crate::par::Exec;
use crate::posterior::{predict_count, ranked_counts};
use crate::vi::{select_k, ViOptions, ViPrior};

struct Pick {
    method: String,
    k: Option<usize>,
    seconds: f64,
    failed: Option<String>,
}

/// Cluster-count accuracy of the network against AIC, BIC, silhouette and
/// VI with each configured restart count.
///
/// Baselines choose among k = 2..=K; the network among 1..=K.
pub fn run_counts(spec: &ExperimentSpec, model: Option<&Network<f32>>) -> Result<Report> {
    spec.validate()?;
    let k_max = spec.prior.k_max;
    let per: Vec<Result<(usize, usize, usize, Vec<Pick>)>> = spec.exec.map(spec.n_datasets, |i| {
        let ds = spec.dataset(i)?;
        let seed = spec.fit_seed(i);
        let mut picks = Vec::new();
        if let Some(net) = model {
            let t = Instant::now();
            let probs = predict_count(net, &ds.x, &ds.mask)?;
            let k = ranked_counts(&probs)[0];
            picks.push(Pick { method: "pfn".into(), k: Some(k), seconds: t.elapsed().as_secs_f64(), failed: None });
        }
        let x = baseline_view(&ds)?;
        let t = Instant::now();
        let em = select_all(&x, k_max, &spec.em, seed, Exec::Sequential);
        let em_secs = t.elapsed().as_secs_f64();
        match em {
            Ok(reports) => {
                for r in reports {
                    picks.push(Pick { method: r.method.clone(), k: Some(r.k_star), seconds: em_secs, failed: None });
                }
            }
            Err(e) => {
                for m in ["aic", "bic", "sil"] {
                    picks.push(Pick { method: m.into(), k: None, seconds: em_secs, failed: Some(e.to_string()) });
                }
            }
        }
        let prior = ViPrior::new(&spec.prior.resolve(ds.d_native)?)?;
        for &inits in &spec.vi_inits {
            let opts = ViOptions { n_init: inits, ..spec.vi };
            let t = Instant::now();
            let sel = select_k(&x, &prior, k_max, false, &opts, seed, Exec::Sequential);
            let seconds = t.elapsed().as_secs_f64();
            let method = format!("vi{inits}");
            picks.push(match sel {
                Ok(s) => Pick { method, k: Some(s.k_star), seconds, failed: None },
                Err(e) => Pick { method, k: None, seconds, failed: Some(e.to_string()) },
            });
        }
        Ok((ds.n(), ds.d_native, ds.k_true, picks))
    });

    let mut rows = Table::new(&["dataset", "n", "d", "k_true", "method", "k_pred", "correct", "failed"]);
    let mut report_timings = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut hits: Vec<Vec<bool>> = Vec::new();
    for (i, r) in per.into_iter().enumerate() {
        let (n, d, k_true, picks) = r?;
        for p in picks {
            let correct = p.k == Some(k_true);
            let slot = match methods.iter().position(|m| *m == p.method) {
                Some(s) => s,
                None => {
                    methods.push(p.method.clone());
                    hits.push(Vec::new());
                    methods.len() - 1
                }
            };
            hits[slot].push(correct);
            rows.push(vec![
                i.to_string(),
                n.to_string(),
                d.to_string(),
                k_true.to_string(),
                p.method.clone(),
                p.k.map(|k| k.to_string()).unwrap_or_default(),
                (correct as u8).to_string(),
                p.failed.unwrap_or_default(),
            ]);
            report_timings.push(Timing { dataset: i, method: p.method, n, seconds: p.seconds });
        }
    }
    let mut report = Report::new("counts", rows);
    let mut table = Table::new(&["method", "accuracy_pct", "se_pct", "n_datasets"]);
    let mut acc = serde_json::Map::new();
    for (m, h) in methods.iter().zip(&hits) {
        let e = accuracy_entry(h);
        let a = e["accuracy"].as_f64().unwrap_or(f64::NAN);
        let se = e["se"].as_f64().unwrap_or(f64::NAN);
        table.push(vec![m.clone(), (100.0 * a).to_string(), (100.0 * se).to_string(), h.len().to_string()]);
        acc.insert(m.clone(), e);
    }
    report.summary.insert("preset".into(), json!(spec.preset.map(|p| p.name())));
    report.summary.insert("n_datasets".into(), json!(spec.n_datasets));
    report.summary.insert("count_accuracy".into(), Value::Object(acc));
    report.tables.push(("counts_table".into(), table));
    report.timings = report_timings;
    Ok(report)
}
