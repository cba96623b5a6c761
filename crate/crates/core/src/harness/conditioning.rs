use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{accuracy_entry, ExperimentSpec, Report, Table};
use crate::baselines::stream_rng;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::posterior::{hard_labels, predict_count, predict_responsibilities, ranked_counts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CondMode {
    /// Condition on a count drawn uniformly from 1..=K.
    Random,
    /// Condition on the unconditioned argmax moved by one, reflected at 1 and K.
    Perturb,
}

impl CondMode {
    pub fn name(self) -> &'static str {
        match self {
            CondMode::Random => "random",
            CondMode::Perturb => "perturb",
        }
    }
}

/// Moves `k` by `+1` or `-1`, reflecting off the ends of `1..=k_max`.
pub fn perturb(k: usize, up: bool, k_max: usize) -> usize {
    match (k, up) {
        (1, _) => 2.min(k_max),
        (k, true) if k == k_max => k_max - 1,
        (k, true) => k + 1,
        (k, false) => k - 1,
    }
}

pub const THRESHOLDS: [usize; 3] = [0, 1, 2];

/// How closely the number of distinct hard labels follows the conditioned
/// count, at deviation thresholds 0, 1 and 2.
pub fn run_conditioning(spec: &ExperimentSpec, model: Option<&Network<f32>>, mode: CondMode) -> Result<Report> {
    spec.validate()?;
    let net = model.ok_or_else(|| Error::Argument("the conditioning suite needs a trained checkpoint (--checkpoint)".into()))?;
    let k_max = net.cfg.k_max;
    if k_max < 2 {
        return Err(Error::Argument("conditioning needs k_max >= 2".into()));
    }
    let per: Vec<Result<(usize, Option<usize>, usize, usize)>> = spec.exec.map(spec.n_datasets, |i| {
        let ds = spec.dataset(i)?;
        let mut rng = stream_rng(spec.fit_seed(i), 0xc0d);
        let (base, k_cond) = match mode {
            CondMode::Random => (None, rng.random_range(1..=k_max)),
            CondMode::Perturb => {
                let k0 = ranked_counts(&predict_count(net, &ds.x, &ds.mask)?)[0];
                (Some(k0), perturb(k0, rng.random::<bool>(), k_max))
            }
        };
        let mut labels = hard_labels(&predict_responsibilities(net, &ds.x, &ds.mask, k_cond)?);
        labels.sort_unstable();
        labels.dedup();
        Ok((ds.k_true, base, k_cond, labels.len()))
    });
    let mut rows = Table::new(&["dataset", "k_true", "k_base", "k_cond", "k_distinct", "deviation"]);
    let mut hits = vec![Vec::new(); THRESHOLDS.len()];
    for (i, r) in per.into_iter().enumerate() {
        let (k_true, base, k_cond, distinct) = r?;
        let dev = k_cond.abs_diff(distinct);
        for (t, h) in THRESHOLDS.iter().zip(hits.iter_mut()) {
            h.push(dev <= *t);
        }
        rows.push(vec![
            i.to_string(),
            k_true.to_string(),
            base.map(|b| b.to_string()).unwrap_or_default(),
            k_cond.to_string(),
            distinct.to_string(),
            dev.to_string(),
        ]);
    }
    let mut report = Report::new("conditioning", rows);
    let mut table = Table::new(&["mode", "threshold", "accuracy", "se"]);
    let mut acc = Map::new();
    for (t, h) in THRESHOLDS.iter().zip(&hits) {
        let e = accuracy_entry(h);
        table.push(vec![mode.name().into(), t.to_string(), e["accuracy"].to_string(), e["se"].to_string()]);
        acc.insert(t.to_string(), e);
    }
    report.summary.insert("preset".into(), json!(spec.preset.map(|p| p.name())));
    report.summary.insert("mode".into(), json!(mode.name()));
    report.summary.insert("n_datasets".into(), json!(spec.n_datasets));
    report.summary.insert("threshold_accuracy".into(), Value::Object(acc));
    report.tables.push(("thresholds".into(), table));
    Ok(report)
}
