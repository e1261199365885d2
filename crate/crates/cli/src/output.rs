//! Writes experiment results as CSV tables, a JSON summary and SVG plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bosonic_dnm::experiments::{ExperimentResult, PlotSpec, Table};
use serde_json::{json, Value};

use crate::config::{echo, Format, RunConfig};
use crate::svg::{heatmap, line_plot, Series};

/// Name of the failure manifest written when any point failed.
pub const FAILURE_MANIFEST: &str = "failures.json";

/// 17 significant digits; missing values become empty cells.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn header_label(name: &str, unit: &str) -> String {
    format!("{name} [{unit}]")
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(table.columns.iter().map(|c| header_label(&c.name, &c.unit)))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]: headers and rows, empty cells as `NaN`.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        rows.push(row);
    }
    Ok((headers, rows))
}

fn axis_label(table: &Table, name: &str) -> String {
    table
        .columns
        .iter()
        .find(|c| c.name == name)
        .map_or_else(|| name.to_string(), |c| header_label(&c.name, &c.unit))
}

/// Renders one plot; `None` when the table or a column is absent.
pub fn render_plot(result: &ExperimentResult, plot: &PlotSpec) -> Option<(String, String)> {
    match plot {
        PlotSpec::Heatmap { name, table, x, y, z } => {
            let t = result.table(table)?;
            let (xi, yi, zi) = (t.column_index(x)?, t.column_index(y)?, t.column_index(z)?);
            let sorted_unique = |i: usize| {
                let mut v: Vec<f64> = t.rows.iter().map(|r| r[i]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            };
            let (xs, ys) = (sorted_unique(xi), sorted_unique(yi));
            let mut grid = vec![vec![f64::NAN; xs.len()]; ys.len()];
            for r in &t.rows {
                let c = xs.binary_search_by(|v| v.total_cmp(&r[xi])).ok()?;
                let k = ys.binary_search_by(|v| v.total_cmp(&r[yi])).ok()?;
                grid[k][c] = r[zi];
            }
            let title = format!("{} {z}", result.tag);
            let svg = heatmap(&title, &axis_label(t, x), &axis_label(t, y), &axis_label(t, z), &xs, &ys, &grid);
            Some((name.clone(), svg))
        }
        PlotSpec::Lines {
            name,
            table,
            x,
            ys,
            group_by,
            log_log,
        } => {
            let t = result.table(table)?;
            let xi = t.column_index(x)?;
            let yis: Vec<usize> = ys.iter().map(|y| t.column_index(y)).collect::<Option<_>>()?;
            let gi = match group_by {
                Some(g) => Some(t.column_index(g)?),
                None => None,
            };
            let mut groups: Vec<(Option<f64>, Vec<&Vec<f64>>)> = Vec::new();
            for r in &t.rows {
                let key = gi.map(|i| r[i]);
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.1.push(r),
                    None => groups.push((key, vec![r])),
                }
            }
            let mut series = Vec::new();
            for (key, rows) in &groups {
                for (y, &yi) in ys.iter().zip(&yis) {
                    let label = match (key, group_by) {
                        (Some(k), Some(g)) if ys.len() > 1 => format!("{y}, {g}={k}"),
                        (Some(k), Some(g)) => format!("{g}={k}"),
                        _ => y.clone(),
                    };
                    series.push(Series {
                        label,
                        points: rows.iter().map(|r| (r[xi], r[yi])).collect(),
                    });
                }
            }
            let y_label = if ys.len() == 1 {
                axis_label(t, &ys[0])
            } else {
                ys.join(", ")
            };
            let title = format!("{} {name}", result.tag);
            Some((name.clone(), line_plot(&title, &axis_label(t, x), &y_label, &series, *log_log)))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes every requested artifact plus the config echo; returns the paths.
pub fn emit_results(result: &ExperimentResult, config: &RunConfig, timestamp: &str) -> Result<Vec<PathBuf>> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = |suffix: &str| dir.join(format!("{}-{suffix}", result.tag));
    let mut written = Vec::new();

    let echoed = echo(config);
    let config_path = stem("config.toml");
    write(&config_path, &echoed)?;
    written.push(config_path);

    let formats = &config.output.formats;
    let mut table_files = BTreeMap::new();
    if formats.contains(&Format::Csv) {
        for t in &result.tables {
            let p = stem(&format!("{}.csv", t.name));
            write_csv(t, &p)?;
            table_files.insert(t.name.clone(), p.clone());
            written.push(p);
        }
    }
    if formats.contains(&Format::Svg) {
        for plot in &result.plots {
            if let Some((name, svg)) = render_plot(result, plot) {
                let p = stem(&format!("{name}.svg"));
                write(&p, &svg)?;
                written.push(p);
            }
        }
    }
    if formats.contains(&Format::Json) {
        let config_value: toml::Table = echoed.parse().expect("echo is valid TOML");
        let tables: Vec<Value> = result
            .tables
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "columns": t.columns,
                    "rows": t.rows.len(),
                    "file": table_files.get(&t.name).and_then(|p| p.file_name()).map(|f| f.to_string_lossy()),
                })
            })
            .collect();
        let doc = json!({
            "experiment": config.experiment.name(),
            "tag": result.tag,
            "timestamp": timestamp,
            "code_version": result.provenance.code_version,
            "config": config_value,
            "axes": result.axes,
            "summary": result.summary,
            "warnings": result.warnings,
            "failures": result.failures,
            "tables": tables,
        });
        let p = stem("summary.json");
        write(&p, &serde_json::to_string_pretty(&doc)?)?;
        written.push(p);
    }
    let manifest = dir.join(FAILURE_MANIFEST);
    if !result.failures.is_empty() {
        let doc = json!({
            "experiment": config.experiment.name(),
            "tag": result.tag,
            "timestamp": timestamp,
            "failed_points": result.failures.len(),
            "failures": result.failures,
        });
        write(&manifest, &serde_json::to_string_pretty(&doc)?)?;
        written.push(manifest);
    } else if manifest.exists() {
        fs::remove_file(&manifest).with_context(|| format!("removing stale {}", manifest.display()))?;
    }
    Ok(written)
}
