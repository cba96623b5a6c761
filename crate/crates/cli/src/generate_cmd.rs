use std::fs;
use std::io::BufWriter;

use clap::Args;
use cpfn::prior::{dataset_rng, sample_dataset, write_dataset, PriorConfig, Preset, SyntheticDataset};
use cpfn::{Error, Result};

use crate::config::ConfigFile;
use crate::Cli;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "2d-easy")]
    pub preset: String,
    /// Number of datasets.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Also write each dataset as a plain labelled CSV (native columns,
    /// empty fields for missing entries, label column `label`).
    #[arg(long)]
    pub csv: bool,
}

fn write_plain(ds: &SyntheticDataset, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.d_native).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = (0..ds.d_native)
            .map(|j| if ds.mask[(i, j)] { ds.x[(i, j)].to_string() } else { String::new() })
            .collect();
        rec.push(ds.z[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Draws datasets `0..n` of the stream for `--seed`, the same stream a
/// training run with that seed consumes.
pub fn run(cli: &Cli, file: &ConfigFile, args: &GenerateArgs) -> Result<()> {
    let prior = file.overlay("prior", PriorConfig::preset(Preset::parse(&args.preset)?))?;
    prior.validate()?;
    let dir = cli.out.join("datasets");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut index = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let mut ds = sample_dataset(&prior, &mut dataset_rng(cli.seed, i as u64))?;
        ds.seed = Some(i as u64);
        let path = dir.join(format!("ds_{i:05}.txt"));
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_dataset(&ds, &mut BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
        if args.csv {
            write_plain(&ds, &dir.join(format!("ds_{i:05}.csv")))?;
        }
        index.push(serde_json::json!({ "index": i, "n": ds.n(), "d": ds.d_native, "k_true": ds.k_true,
            "missing_fraction": ds.missing_fraction() }));
    }
    let meta = serde_json::json!({ "preset": args.preset, "seed": cli.seed, "prior": prior, "datasets": index });
    let path = cli.out.join("meta.json");
    fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    println!("{}", serde_json::json!({ "written": args.n, "dir": dir.display().to_string() }));
    Ok(())
}
