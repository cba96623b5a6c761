use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use cpfn::harness::read_features_csv;
use cpfn::metrics::{ami, ari};
use cpfn::posterior::{hard_labels, predict_count, predict_with, write_prediction, ClusterPosterior, CountPick};
use cpfn::prior::scale_01;
use cpfn::{Error, Result};

use crate::{load_model, Cli};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Headered CSV of numeric features; empty fields are missing.
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding ground-truth labels, excluded from the features and
    /// used only to score the prediction.
    #[arg(long)]
    pub label: Option<String>,
    /// Count to condition on; 0 picks it from the count posterior (two
    /// passes).
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    /// With `--k 0`, condition on the count at this position of the ranking
    /// by probability (0 is the most probable, 1 the runner-up).
    #[arg(long, default_value_t = 0)]
    pub rank: usize,
    /// Only report the count posterior (single pass).
    #[arg(long)]
    pub count_only: bool,
    /// Skip zero-one scaling; the input must already lie in [0, 1].
    #[arg(long)]
    pub prescaled: bool,
}

pub fn run(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let net = load_model(cli)?;
    let data = read_features_csv(&args.input, args.label.as_deref())?;
    let x = if args.prescaled { data.x.clone() } else { scale_01(&data.x, &data.mask)? };
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let path = cli.out.join("prediction.csv");
    let cp = if args.count_only {
        let probs = predict_count(&net, &x, &data.mask)?;
        ClusterPosterior { responsibilities: ndarray::Array2::zeros((0, probs.len())), count_probs: probs, k_used: 0 }
    } else {
        let pick = match (args.k, args.rank) {
            (0, 0) => CountPick::Argmax,
            (0, r) => CountPick::Rank(r),
            (k, _) => CountPick::Fixed(k),
        };
        predict_with(&net, &x, &data.mask, pick)?
    };
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_prediction(&cp, &mut BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
    let mut summary = serde_json::json!({
        "n": x.nrows(),
        "k_used": cp.k_used,
        "count_argmax": cpfn::posterior::ranked_counts(&cp.count_probs)[0],
        "count_probs": cp.count_probs,
        "output": path.display().to_string(),
    });
    if !args.count_only && !data.labels.is_empty() {
        let l = hard_labels(&cp);
        summary["ari"] = serde_json::json!(ari(&data.labels, &l)?);
        summary["ami"] = serde_json::json!(ami(&data.labels, &l)?);
    }
    println!("{summary}");
    Ok(())
}
