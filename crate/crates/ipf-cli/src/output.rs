//! CSV and run-manifest writing. Numbers are formatted with a fixed scheme so
//! identical runs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use anyhow::{Context, Result};

/// Fixed-format float for CSV cells: six significant decimals, `inf` spelled
/// out.
pub fn fmt(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.6}")
}

pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut text = String::with_capacity(rows.len() * 48 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Key-value manifest recording how a run was produced.
pub fn write_manifest(
    dir: &Path,
    experiment: &str,
    seed: u64,
    params: &[(String, String)],
    elapsed: Duration,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("run_manifest.txt");
    let mut text = String::new();
    text.push_str(&format!("experiment = {experiment}\n"));
    text.push_str(&format!("seed = {seed}\n"));
    for (k, v) in params {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&format!("build = {}\n", git_describe()));
    text.push_str(&format!("wall_time_s = {:.3}\n", elapsed.as_secs_f64()));
    fs::write(&path, text)?;
    Ok(path)
}
