//! On-disk formats.
//!
//! * Dataset: `name.csv` with header `t,u,y,r` plus a `name.json` sidecar.
//! * Meta-dataset: a directory of `entry_XX.csv` / `entry_XX.json` training
//!   records, `entry_XX_cl.csv` closed-loop responses and `meta_index.json`.
//! * Everything else is plain JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::meta::MetaEntry;
use crate::motor::{Dataset, MotorConfig, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub label: String,
    pub sample_time: f64,
    pub seed: Option<u64>,
    pub motor: Option<MotorConfig>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `path` (CSV) and its JSON sidecar.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "u", "y", "r"])?;
    for k in 0..ds.len() {
        let r = ds.r.as_ref().map_or(String::new(), |r| r[k].to_string());
        w.write_record([
            (k as f64 * ds.sample_time).to_string(),
            ds.u[k].to_string(),
            ds.y[k].to_string(),
            r,
        ])?;
    }
    w.flush()?;
    let side = DatasetSidecar {
        label: ds.label.clone(),
        sample_time: ds.sample_time,
        seed: ds.provenance.as_ref().map(|p| p.seed),
        motor: ds.provenance.as_ref().and_then(|p| p.motor.clone()),
    };
    write_json(&sidecar_path(path), &side)
}

fn parse(field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("row {row}: cannot parse '{field}' as a number")))
}

/// Reads a dataset CSV. Without a sidecar the sample time is taken from the
/// `t` column and the label from the file stem.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ti, ui, yi) = match (col("t"), col("u"), col("y")) {
        (Some(t), Some(u), Some(y)) => (t, u, y),
        _ => return Err(Error::config(format!("{}: header must contain t,u,y", path.display()))),
    };
    let ri = col("r");
    let (mut t, mut u, mut y, mut r) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut has_r = ri.is_some();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        t.push(parse(&rec[ti], row)?);
        u.push(parse(&rec[ui], row)?);
        y.push(parse(&rec[yi], row)?);
        if let Some(ri) = ri {
            match rec.get(ri).map(str::trim) {
                Some(f) if !f.is_empty() => r.push(parse(f, row)?),
                _ => has_r = false,
            }
        }
    }
    let side = sidecar_path(path);
    let (label, ts, provenance) = if side.exists() {
        let s: DatasetSidecar = read_json(&side)?;
        let prov = s.seed.map(|seed| Provenance { seed, motor: s.motor });
        (s.label, s.sample_time, prov)
    } else {
        if t.len() < 2 {
            return Err(Error::config("cannot infer the sample time from fewer than two rows"));
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (stem, t[1] - t[0], None)
    };
    let mut ds = Dataset::new(u, y, has_r.then_some(r), ts, label)?;
    ds.provenance = provenance;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaIndexEntry {
    pub system_label: String,
    pub dataset: String,
    pub closed_loop: String,
    pub controller: ControllerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaIndex {
    pub entries: Vec<MetaIndexEntry>,
}

pub fn write_meta_dir(dir: &Path, meta: &[MetaEntry]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(meta.len());
    for (i, e) in meta.iter().enumerate() {
        let data_name = format!("entry_{i:02}.csv");
        let cl_name = format!("entry_{i:02}_cl.csv");
        write_dataset(&dir.join(&data_name), &e.dataset)?;
        if e.closed_loop_reference.len() != e.closed_loop_response.len() {
            return Err(Error::dim("closed-loop reference and response differ in length"));
        }
        let mut w = csv::Writer::from_path(dir.join(&cl_name))?;
        w.write_record(["t", "r", "y"])?;
        for (k, (r, y)) in e.closed_loop_reference.iter().zip(&e.closed_loop_response).enumerate() {
            w.write_record([
                (k as f64 * e.dataset.sample_time).to_string(),
                r.to_string(),
                y.to_string(),
            ])?;
        }
        w.flush()?;
        entries.push(MetaIndexEntry {
            system_label: e.system_label.clone(),
            dataset: data_name,
            closed_loop: cl_name,
            controller: e.controller.clone(),
        });
    }
    write_json(&dir.join("meta_index.json"), &MetaIndex { entries })
}

pub fn read_meta_dir(dir: &Path) -> Result<Vec<MetaEntry>> {
    let index: MetaIndex = read_json(&dir.join("meta_index.json"))?;
    index
        .entries
        .into_iter()
        .map(|ie| {
            let dataset = read_dataset(&dir.join(&ie.dataset))?;
            let mut rdr = csv::Reader::from_path(dir.join(&ie.closed_loop))?;
            let (mut r, mut y) = (Vec::new(), Vec::new());
            for (row, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.len() < 3 {
                    return Err(Error::config(format!("{}: expected t,r,y", ie.closed_loop)));
                }
                r.push(parse(&rec[1], row)?);
                y.push(parse(&rec[2], row)?);
            }
            Ok(MetaEntry {
                dataset,
                controller: ie.controller,
                closed_loop_response: y,
                closed_loop_reference: r,
                system_label: ie.system_label,
            })
        })
        .collect()
}
