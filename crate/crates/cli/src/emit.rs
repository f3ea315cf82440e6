//! CSV emission with versioned schemas.
//!
//! Every file starts with a `# lowpass-lab <schema> v<N>` comment line
//! followed by a header row; readers validate the schema tag, so round-trip
//! parsing doubles as a format check.

use std::fs;
use std::path::Path;

use lowpass_core::collapse::TrajectoryRecord;
use lowpass_core::{CoreError, Result};

pub const TRAJECTORY_SCHEMA: &str = "trajectory v1";
pub const RADIAL_SCHEMA: &str = "radial-spectrum v1";
pub const ALIAS_SCHEMA: &str = "alias-demo v1";
pub const CONDITIONS_SCHEMA: &str = "condition-table v1";
pub const TRAINING_SCHEMA: &str = "training-checks v1";

pub fn write_csv(
    path: &Path,
    schema: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# lowpass-lab {schema}\n"));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parses a schema-tagged CSV back into (schema, header, rows).
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let schema_line = lines
        .next()
        .ok_or_else(|| CoreError::InvalidArgument("empty csv".into()))?;
    let schema = schema_line
        .strip_prefix("# lowpass-lab ")
        .ok_or_else(|| CoreError::InvalidArgument(format!("missing schema tag: {schema_line}")))?
        .to_string();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CoreError::InvalidArgument("missing header".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CoreError::InvalidArgument(format!("csv parse: {e}")))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((schema, header, rows))
}

pub fn write_trajectory_csv(path: &Path, t: &TrajectoryRecord) -> Result<()> {
    let banded = !t.low_dist.is_empty();
    let rows: Vec<Vec<String>> = (0..t.input_dist.len())
        .map(|k| {
            vec![
                k.to_string(),
                format!("{:.17e}", t.input_dist[k]),
                format!("{:.17e}", t.feat_dist[k]),
                if banded { format!("{:.17e}", t.low_dist[k]) } else { String::new() },
                if banded { format!("{:.17e}", t.high_dist[k]) } else { String::new() },
            ]
        })
        .collect();
    write_csv(
        path,
        TRAJECTORY_SCHEMA,
        &["step", "input_dist", "feat_dist", "low_dist", "high_dist"],
        &rows,
    )
}

pub fn write_radial_csv(path: &Path, bins: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = bins
        .iter()
        .enumerate()
        .map(|(b, p)| vec![b.to_string(), format!("{p:.17e}")])
        .collect();
    write_csv(path, RADIAL_SCHEMA, &["bin", "power"], &rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}
