//! Plain-text dataset exchange format.
//!
//! ```text
//! d_native,k_true,seed
//! 2,3,42
//! x0,x1,label,m0,m1
//! 0.125,0.5,0,1,1
//! ...
//! ```
//!
//! `seed` is empty when the dataset was not drawn from a recorded seed.
//! Floats are written in shortest round-trip form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use super::SyntheticDataset;
use crate::error::{Error, Result};

pub fn write_dataset<W: Write>(ds: &SyntheticDataset, out: &mut W) -> std::io::Result<()> {
    let d = ds.width();
    writeln!(out, "d_native,k_true,seed")?;
    let seed = ds.seed.map(|s| s.to_string()).unwrap_or_default();
    writeln!(out, "{},{},{}", ds.d_native, ds.k_true, seed)?;
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    header.extend((0..d).map(|j| format!("m{j}")));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ds.n() {
        let mut fields: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(ds.z[i].to_string());
        fields.extend(ds.mask.row(i).iter().map(|&m| if m { "1" } else { "0" }.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<SyntheticDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Data(format!("dataset file ended before {what}")))?
            .map_err(|e| Error::io(path, e))
    };
    let meta_header = next("metadata header")?;
    if meta_header.trim() != "d_native,k_true,seed" {
        return Err(Error::Data(format!("unexpected metadata header '{meta_header}'")));
    }
    let meta = next("metadata")?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Data(format!("malformed metadata row '{meta}'")));
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Data(format!("bad {what} '{s}'")))
    };
    let d_native = parse_usize(parts[0], "d_native")?;
    let k_true = parse_usize(parts[1], "k_true")?;
    let seed = if parts[2].is_empty() {
        None
    } else {
        Some(parts[2].parse::<u64>().map_err(|_| Error::Data(format!("bad seed '{}'", parts[2])))?)
    };
    let columns = next("column header")?;
    let ncol = columns.trim().split(',').count();
    if ncol < 3 || (ncol - 1) % 2 != 0 {
        return Err(Error::Data(format!("malformed column header '{columns}'")));
    }
    let d = (ncol - 1) / 2;

    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut z = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != ncol {
            return Err(Error::Data(format!("row has {} fields, expected {ncol}", fields.len())));
        }
        for f in &fields[..d] {
            values.push(f.parse::<f64>().map_err(|_| Error::Data(format!("bad value '{f}'")))?);
        }
        z.push(parse_usize(fields[d], "label")?);
        for f in &fields[d + 1..] {
            mask.push(match *f {
                "1" => true,
                "0" => false,
                other => return Err(Error::Data(format!("bad mask bit '{other}'"))),
            });
        }
    }
    let n = z.len();
    let x = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Data(e.to_string()))?;
    let mask = Array2::from_shape_vec((n, d), mask).map_err(|e| Error::Data(e.to_string()))?;
    Ok(SyntheticDataset {
        x,
        z,
        k_true,
        mask,
        d_native,
        k_sampled: k_true,
        seed,
    })
}
