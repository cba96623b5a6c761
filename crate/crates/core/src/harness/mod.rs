//! Experiment suites behind `cpfn bench` and `cpfn missingness`.
//!
//! Every suite returns a [`Report`]. Its rows and summary depend only on the
//! experiment spec and seeds, so reruns write byte-identical `report.csv`,
//! `summary.json` and `meta.json`. Wall-clock measurements are kept apart in
//! `timings.csv`.

mod conditioning;
mod counts;
mod missingness;
mod quality;
mod timing;

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::baselines::EmOptions;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::prior::{dataset_rng, sample_dataset, PriorConfig, Preset, SyntheticDataset};
use crate::vi::ViOptions;

pub use conditioning::{run_conditioning, CondMode};
pub use counts::run_counts;
pub use missingness::{impute, nested_masks, read_features_csv, read_labeled_csv, run_missingness, Imputer, LabeledData, MissingnessSpec};
pub use quality::{run_quality, run_ranks};
pub use timing::run_timing;

/// Keeps benchmark draws disjoint from a training stream with the same seed.
const BENCH_STREAM_SALT: u64 = 0x6265_6e63_685f_7631;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub suite: String,
    pub preset: Option<Preset>,
    pub prior: PriorConfig,
    pub n_datasets: usize,
    pub seed: u64,
    /// VI restart counts to compare (count and timing suites).
    pub vi_inits: Vec<usize>,
    pub em: EmOptions,
    pub vi: ViOptions,
    /// Fixed dataset size, overriding the prior's range.
    pub n_points: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl ExperimentSpec {
    pub fn new(suite: &str, preset: Preset, n_datasets: usize, seed: u64) -> Self {
        ExperimentSpec {
            suite: suite.to_string(),
            preset: Some(preset),
            prior: PriorConfig::preset(preset),
            n_datasets,
            seed,
            vi_inits: vec![1, 10],
            em: EmOptions::default(),
            vi: ViOptions::default(),
            n_points: None,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(Error::Argument("n_datasets must be >= 1".into()));
        }
        if self.vi_inits.contains(&0) {
            return Err(Error::Argument("VI init counts must be >= 1".into()));
        }
        self.prior.validate()
    }

    fn prior_for_draws(&self) -> PriorConfig {
        let mut p = self.prior.clone();
        if let Some(n) = self.n_points {
            p.n_range = (n, n);
        }
        p
    }

    /// The `i`-th benchmark dataset.
    pub fn dataset(&self, i: usize) -> Result<SyntheticDataset> {
        let mut rng = dataset_rng(self.seed ^ BENCH_STREAM_SALT, i as u64);
        let mut ds = sample_dataset(&self.prior_for_draws(), &mut rng)?;
        ds.seed = Some(i as u64);
        Ok(ds)
    }

    /// Seed for the fits run on dataset `i`.
    pub fn fit_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

/// Native columns of a prior draw with missing entries mean-imputed, as fed
/// to the baselines.
pub fn baseline_view(ds: &SyntheticDataset) -> Result<Array2<f64>> {
    let x = ds.x.slice(s![.., ..ds.d_native]).to_owned();
    let m = ds.mask.slice(s![.., ..ds.d_native]).to_owned();
    impute(&x, &m, Imputer::Mean)
}

/// Mean and standard error (sample std / sqrt(n)).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// JSON number, with non-finite values spelled out as strings.
pub(crate) fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

/// A plain CSV table with a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }
}

/// One wall-clock measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub dataset: usize,
    pub method: String,
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: String,
    /// Per-dataset rows.
    pub rows: Table,
    pub summary: Map<String, Value>,
    /// Further deterministic tables, written as `<name>.csv`.
    pub tables: Vec<(String, Table)>,
    pub timings: Vec<Timing>,
}

impl Report {
    pub fn new(suite: &str, rows: Table) -> Self {
        Report { suite: suite.to_string(), rows, summary: Map::new(), tables: Vec::new(), timings: Vec::new() }
    }

    /// Mean seconds per method, in first-appearance order.
    pub fn timing_summary(&self) -> Table {
        let mut order: Vec<&str> = Vec::new();
        for t in &self.timings {
            if !order.contains(&t.method.as_str()) {
                order.push(&t.method);
            }
        }
        let mut table = Table::new(&["method", "count", "mean_seconds", "se_seconds"]);
        for m in order {
            let secs: Vec<f64> = self.timings.iter().filter(|t| t.method == m).map(|t| t.seconds).collect();
            let (mean, se) = mean_se(&secs);
            table.push(vec![m.to_string(), secs.len().to_string(), mean.to_string(), se.to_string()]);
        }
        table
    }

    /// Writes `report.csv`, `summary.json`, `meta.json`, the extra tables
    /// and, when there are any, `timings.csv` and `timing_summary.csv`.
    pub fn write_dir(&self, dir: &Path, meta: &Value) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        put("report.csv", &self.rows.to_bytes()?)?;
        let mut summary = serde_json::to_vec_pretty(&Value::Object(self.summary.clone()))?;
        summary.push(b'\n');
        put("summary.json", &summary)?;
        let mut m = serde_json::to_vec_pretty(meta)?;
        m.push(b'\n');
        put("meta.json", &m)?;
        for (name, t) in &self.tables {
            put(&format!("{name}.csv"), &t.to_bytes()?)?;
        }
        if !self.timings.is_empty() {
            let mut t = Table::new(&["dataset", "method", "n", "seconds"]);
            for r in &self.timings {
                t.push(vec![r.dataset.to_string(), r.method.clone(), r.n.to_string(), r.seconds.to_string()]);
            }
            put("timings.csv", &t.to_bytes()?)?;
            put("timing_summary.csv", &self.timing_summary().to_bytes()?)?;
        }
        Ok(())
    }
}

/// `meta.json` contents: the spec, seeds and crate version.
pub fn meta(spec: &impl Serialize, extra: Value) -> Result<Value> {
    let mut m = Map::new();
    m.insert("spec".into(), serde_json::to_value(spec)?);
    m.insert("crate_version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("extra".into(), extra);
    Ok(Value::Object(m))
}

/// Accuracy summary entry for a list of hit indicators.
pub(crate) fn accuracy_entry(hits: &[bool]) -> Value {
    let v: Vec<f64> = hits.iter().map(|&h| h as u8 as f64).collect();
    let (mean, se) = mean_se(&v);
    json!({ "n": hits.len(), "accuracy": num(mean), "se": num(se) })
}
