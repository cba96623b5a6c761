use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{mean_se, num, Report, Table};
use crate::baselines::{em_fit, select_all, EmOptions};
use crate::error::{Error, Result};
use crate::metrics::{ami, ari, purity};
use crate::model::Network;
use crate::par::Exec;
use crate::posterior::{hard_labels, predict_responsibilities};
use crate::prior::{apply_missingness, dataset_rng, scale_01, PriorConfig, Preset};
use crate::vi::{select_k, ViOptions, ViPrior};

const MISS_STREAM_SALT: u64 = 0x6d69_7373_5f76_3031;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imputer {
    Mean,
    Median,
}

impl Imputer {
    pub fn name(self) -> &'static str {
        match self {
            Imputer::Mean => "mean",
            Imputer::Median => "median",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Imputer::Mean),
            "median" => Ok(Imputer::Median),
            _ => Err(Error::Argument(format!("unknown imputer '{s}' (mean|median)"))),
        }
    }
}

/// Replaces missing entries by the column mean or median of the observed
/// entries. `mask` marks observed entries with `true`.
pub fn impute(x: &Array2<f64>, mask: &Array2<bool>, method: Imputer) -> Result<Array2<f64>> {
    if x.dim() != mask.dim() {
        return Err(Error::Argument("mask shape differs from data".into()));
    }
    let mut out = x.clone();
    for j in 0..x.ncols() {
        if mask.column(j).iter().all(|&m| m) {
            continue;
        }
        let mut obs: Vec<f64> = x.column(j).iter().zip(mask.column(j)).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
        if obs.is_empty() {
            return Err(Error::Data(format!("column {j} has no observed entries")));
        }
        let fill = match method {
            Imputer::Mean => obs.iter().sum::<f64>() / obs.len() as f64,
            Imputer::Median => {
                obs.sort_by(f64::total_cmp);
                let h = obs.len() / 2;
                if obs.len() % 2 == 1 {
                    obs[h]
                } else {
                    0.5 * (obs[h - 1] + obs[h])
                }
            }
        };
        for (v, &m) in out.column_mut(j).iter_mut().zip(mask.column(j)) {
            if !m {
                *v = fill;
            }
        }
    }
    Ok(out)
}

/// One mask per level, each hiding a superset of the entries hidden by the
/// previous one. Levels must be non-decreasing.
pub fn nested_masks<R: Rng + ?Sized>(shape: (usize, usize), levels: &[f64], rng: &mut R) -> Result<Vec<Array2<bool>>> {
    let mut out: Vec<Array2<bool>> = Vec::with_capacity(levels.len());
    for (i, &rate) in levels.iter().enumerate() {
        if i > 0 && rate < levels[i - 1] {
            return Err(Error::Argument("missingness levels must be non-decreasing".into()));
        }
        let m = apply_missingness(shape, rate, rng, out.last())?;
        out.push(m);
    }
    Ok(out)
}

/// Features with a ground-truth label column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: Array2<f64>,
    /// `true` marks an observed entry.
    pub mask: Array2<bool>,
    /// Labels renumbered to `0..k` in increasing order of the raw values.
    pub labels: Vec<usize>,
    pub columns: Vec<String>,
}

/// Reads a headered CSV with numeric features and one integer label column.
/// Empty feature fields are missing entries.
pub fn read_labeled_csv(path: &Path, label_col: &str) -> Result<LabeledData> {
    read_features_csv(path, Some(label_col))
}

/// Like [`read_labeled_csv`], with the label column optional. Without one,
/// `labels` is empty.
pub fn read_features_csv(path: &Path, label_col: Option<&str>) -> Result<LabeledData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let li = match label_col {
        Some(c) => Some(
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::Argument(format!("label column '{c}' not in header {header:?}")))?,
        ),
        None => None,
    };
    let columns: Vec<String> = header.iter().enumerate().filter(|(i, _)| Some(*i) != li).map(|(_, h)| h.clone()).collect();
    let d = columns.len();
    if d == 0 {
        return Err(Error::Data("no feature columns".into()));
    }
    let (mut vals, mut obs, mut raw) = (Vec::new(), Vec::new(), Vec::new());
    let mut n = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        for (i, field) in rec.iter().enumerate() {
            if Some(i) == li {
                let l: i64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: label '{field}' is not an integer")))?;
                raw.push(l);
            } else if field.is_empty() {
                vals.push(0.0);
                obs.push(false);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: feature '{}' value '{field}' is not numeric", header[i])))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!("line {line}: non-finite value in '{}'", header[i])));
                }
                vals.push(v);
                obs.push(true);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    let ids: BTreeMap<i64, usize> = raw.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().zip(0..).collect();
    Ok(LabeledData {
        x: Array2::from_shape_vec((n, d), vals).unwrap(),
        mask: Array2::from_shape_vec((n, d), obs).unwrap(),
        labels: raw.iter().map(|l| ids[l]).collect(),
        columns,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingnessSpec {
    pub levels: Vec<f64>,
    pub imputers: Vec<Imputer>,
    pub n_sims: usize,
    pub seed: u64,
    pub k_max: usize,
    pub em: EmOptions,
    pub vi: ViOptions,
    /// Prior handed to VI, applied to the zero-one scaled data.
    pub vi_prior: PriorConfig,
    /// Skip the VI baseline.
    pub skip_vi: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl MissingnessSpec {
    pub fn new(levels: Vec<f64>, n_sims: usize, seed: u64) -> Self {
        MissingnessSpec {
            levels,
            imputers: vec![Imputer::Mean, Imputer::Median],
            n_sims,
            seed,
            k_max: 10,
            em: EmOptions::default(),
            vi: ViOptions::default(),
            vi_prior: PriorConfig::preset(Preset::Hard2d),
            skip_vi: false,
            exec: Exec::default(),
        }
    }
}

struct Outcome {
    level: usize,
    method: String,
    imputer: &'static str,
    k: usize,
    scores: [f64; 3],
}

fn scores(z: &[usize], l: &[usize]) -> Result<[f64; 3]> {
    Ok([ari(z, l)?, ami(z, l)?, purity(z, l)?])
}

/// Clusters a labelled dataset under nested random masks.
///
/// At each level the data are zero-one scaled on the observed entries.
/// Baselines (EM with AIC/BIC/silhouette, VI) see the imputed matrix; the
/// network, when given, sees the masked matrix.
pub fn run_missingness(data: &LabeledData, spec: &MissingnessSpec, model: Option<&Network<f32>>) -> Result<Report> {
    if spec.n_sims == 0 || spec.levels.is_empty() || spec.imputers.is_empty() {
        return Err(Error::Argument("need n_sims >= 1, at least one level and one imputer".into()));
    }
    let (n, d) = data.x.dim();
    if let Some(net) = model {
        if net.cfg.d_in < d {
            return Err(Error::Argument(format!("model takes {} features, data has {d}", net.cfg.d_in)));
        }
    }
    if data.mask.iter().any(|&m| !m) {
        return Err(Error::Data("input already has missing entries; the sweep needs a complete matrix".into()));
    }
    let vi_prior = if spec.skip_vi { None } else { Some(ViPrior::new(&spec.vi_prior.resolve(d)?)?) };
    let z = &data.labels;
    let per: Vec<Result<Vec<Outcome>>> = spec.exec.map(spec.n_sims, |s| {
        let mut rng = dataset_rng(spec.seed ^ MISS_STREAM_SALT, s as u64);
        let masks = nested_masks((n, d), &spec.levels, &mut rng)?;
        let seed = spec.seed.wrapping_add(s as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::new();
        for (li, mask) in masks.iter().enumerate() {
            let xs = scale_01(&data.x, mask)?;
            if let Some(net) = model {
                let cp = predict_responsibilities(net, &xs, mask, 0)?;
                out.push(Outcome { level: li, method: "pfn".into(), imputer: "none", k: cp.k_used, scores: scores(z, &hard_labels(&cp))? });
            }
            for &imp in &spec.imputers {
                let xi = impute(&xs, mask, imp)?;
                for r in select_all(&xi, spec.k_max, &spec.em, seed, Exec::Sequential)? {
                    let fit = em_fit(&xi, r.k_star, &spec.em, seed.wrapping_add(r.k_star as u64))?;
                    let l = fit.hard_labels(&xi)?;
                    out.push(Outcome { level: li, method: r.method.clone(), imputer: imp.name(), k: r.k_star, scores: scores(z, &l)? });
                }
                if let Some(p) = &vi_prior {
                    let sel = select_k(&xi, p, spec.k_max, false, &spec.vi, seed, Exec::Sequential)?;
                    let l = sel.best.hard_labels();
                    out.push(Outcome { level: li, method: "vi".into(), imputer: imp.name(), k: sel.k_star, scores: scores(z, &l)? });
                }
            }
        }
        Ok(out)
    });

    let mut rows = Table::new(&["sim", "level", "method", "imputer", "k", "ari", "ami", "purity"]);
    let mut groups: Vec<((usize, String, &'static str), Vec<[f64; 3]>)> = Vec::new();
    for (s, r) in per.into_iter().enumerate() {
        for o in r? {
            rows.push(vec![
                s.to_string(),
                spec.levels[o.level].to_string(),
                o.method.clone(),
                o.imputer.into(),
                o.k.to_string(),
                o.scores[0].to_string(),
                o.scores[1].to_string(),
                o.scores[2].to_string(),
            ]);
            let key = (o.level, o.method, o.imputer);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(o.scores),
                None => groups.push((key, vec![o.scores])),
            }
        }
    }
    let mut report = Report::new("missingness", rows);
    let mut table = Table::new(&["level", "method", "imputer", "metric", "mean", "se", "n_sims"]);
    let mut summary = Vec::new();
    for ((li, method, imp), v) in &groups {
        let mut entry = Map::new();
        entry.insert("level".into(), json!(spec.levels[*li]));
        entry.insert("method".into(), json!(method));
        entry.insert("imputer".into(), json!(imp));
        entry.insert("n_sims".into(), json!(v.len()));
        for (mi, m) in ["ari", "ami", "purity"].iter().enumerate() {
            let vals: Vec<f64> = v.iter().map(|s| s[mi]).collect();
            let (mean, se) = mean_se(&vals);
            table.push(vec![
                spec.levels[*li].to_string(),
                method.clone(),
                imp.to_string(),
                m.to_string(),
                mean.to_string(),
                se.to_string(),
                v.len().to_string(),
            ]);
            entry.insert(m.to_string(), json!({ "mean": num(mean), "se": num(se) }));
        }
        summary.push(Value::Object(entry));
    }
    report.summary.insert("n".into(), json!(n));
    report.summary.insert("d".into(), json!(d));
    report.summary.insert("n_sims".into(), json!(spec.n_sims));
    report.summary.insert("groups".into(), Value::Array(summary));
    report.tables.push(("missingness_table".into(), table));
    Ok(report)
}
