//! Result files of one run: `summary.json`, `timing.json`, `replicas.csv` and grid snapshots.

use crate::config::LoadedConfig;
use crate::experiments::Outcome;
use serde_json::json;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Everything in `summary.json`. It is a pure function of the effective configuration, so two
/// runs with the same seed produce identical bytes whatever the number of worker threads.
pub fn summary(loaded: &LoadedConfig, outcome: &Outcome) -> serde_json::Value {
    let cfg = &loaded.config;
    json!({
        "id": cfg.id,
        "kind": cfg.kind,
        "criterion": cfg.assertions.criterion,
        "seed": cfg.mc.seed,
        "config_sha256": loaded.sha256,
        "config": loaded.canonical,
        "results": outcome.results,
        "checks": outcome.checks,
        "passed": outcome.passed(),
    })
}

pub fn default_dir(loaded: &LoadedConfig) -> PathBuf {
    loaded.config.output.dir.clone().unwrap_or_else(|| Path::new("results").join(&loaded.config.id))
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_all(dir: &Path, loaded: &LoadedConfig, outcome: &Outcome, seconds: f64) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(&summary(loaded, outcome)).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    let timing =
        json!({ "id": loaded.config.id, "wall_clock_seconds": seconds, "threads": rayon::current_num_threads() });
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing).map_err(io::Error::other)? + "\n")?;

    let mut w = csv::Writer::from_path(dir.join("replicas.csv")).map_err(csv_error)?;
    w.write_record(["series", "replica", "value"]).map_err(csv_error)?;
    for s in &outcome.series {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([s.name.as_str(), &i.to_string(), &v.to_string()]).map_err(csv_error)?;
        }
    }
    w.flush()?;

    if !outcome.snapshots.is_empty() {
        let snap = dir.join("snapshots");
        fs::create_dir_all(&snap)?;
        for (name, grid) in &outcome.snapshots {
            grid.save_csv(&snap.join(format!("{name}.csv"))).map_err(io::Error::other)?;
        }
    }
    Ok(())
}
