use std::time::Instant;

use serde_json::json;

use super::{baseline_view, ExperimentSpec, Report, Table, Timing};
use crate::baselines::select_all;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::par::Exec;
use crate::posterior::{predict_count, predict_responsibilities};
use crate::vi::{cavi_fit, select_k, ViOptions, ViPrior};

/// Wall time of inference and baseline fits on datasets of fixed sizes.
///
/// Everything runs sequentially on the calling thread, one dataset at a
/// time. Methods: one network pass (`pfn_count`), the two-pass protocol
/// (`pfn_two_pass`), VI at the true count (`vi<i>_fit`), the VI selection
/// sweep (`vi<i>_select`) and the EM sweep behind AIC/BIC/silhouette
/// (`em_select`).
pub fn run_timing(spec: &ExperimentSpec, model: Option<&Network<f32>>, sizes: &[usize]) -> Result<Report> {
    spec.validate()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Argument("timing sizes must be non-empty and positive".into()));
    }
    let k_max = spec.prior.k_max;
    let mut rows = Table::new(&["size", "dataset", "k_true", "method"]);
    let mut timings = Vec::new();
    let mut methods = Vec::new();
    for (si, &n) in sizes.iter().enumerate() {
        let mut sized = spec.clone();
        sized.n_points = Some(n);
        for j in 0..spec.n_datasets {
            let idx = si * spec.n_datasets + j;
            let ds = sized.dataset(idx)?;
            let seed = spec.fit_seed(idx);
            let x = baseline_view(&ds)?;
            let prior = ViPrior::new(&spec.prior.resolve(ds.d_native)?)?;
            let mut record = |method: String, secs: f64| {
                rows.push(vec![n.to_string(), idx.to_string(), ds.k_true.to_string(), method.clone()]);
                if !methods.contains(&method) {
                    methods.push(method.clone());
                }
                timings.push(Timing { dataset: idx, method, n, seconds: secs });
            };
            if let Some(net) = model {
                let t = Instant::now();
                predict_count(net, &ds.x, &ds.mask)?;
                record("pfn_count".into(), t.elapsed().as_secs_f64());
                let t = Instant::now();
                predict_responsibilities(net, &ds.x, &ds.mask, 0)?;
                record("pfn_two_pass".into(), t.elapsed().as_secs_f64());
            }
            for &inits in &spec.vi_inits {
                let opts = ViOptions { n_init: inits, ..spec.vi };
                let t = Instant::now();
                let _ = cavi_fit(&x, ds.k_true, &prior, &opts, seed);
                record(format!("vi{inits}_fit"), t.elapsed().as_secs_f64());
                let t = Instant::now();
                let _ = select_k(&x, &prior, k_max, false, &opts, seed, Exec::Sequential);
                record(format!("vi{inits}_select"), t.elapsed().as_secs_f64());
            }
            let t = Instant::now();
            let _ = select_all(&x, k_max, &spec.em, seed, Exec::Sequential);
            record("em_select".into(), t.elapsed().as_secs_f64());
        }
    }
    let mut report = Report::new("timing", rows);
    report.summary.insert("preset".into(), json!(spec.preset.map(|p| p.name())));
    report.summary.insert("sizes".into(), json!(sizes));
    report.summary.insert("repeats".into(), json!(spec.n_datasets));
    report.summary.insert("methods".into(), json!(methods));
    report.timings = timings;
    Ok(report)
}
