//! Panel CSV input and JSON/CSV result output.
//!
//! Floating-point output is rounded to 10 significant digits.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::inference::{ConfidenceSet, PValuePoint};
use crate::model::PanelData;
use crate::montecarlo::{PowerRow, PowerTable};
use crate::stats::TestOutcome;

/// Header of power-table CSV files.
pub const POWER_TABLE_HEADER: [&str; 4] =
    ["sweep_value", "test_label", "rejection_frequency", "mc_se"];

/// `x` rounded to 10 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Shortest text that reads back as `round_sig(x)`.
pub fn fmt_num(x: f64) -> String {
    format!("{:?}", round_sig(x))
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a panel: one individual per row, `T` comma-separated numbers. A
/// first row without any numeric cell is taken as a header and skipped.
pub fn parse_panel_csv<R: Read>(reader: R) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(idx + 1);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(f64::from_str).collect();
        if idx == 0 && parsed.iter().all(|p| p.is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (col, (cell, p)) in record.iter().zip(parsed).enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        column: col + 1,
                        message: format!("'{cell}' is not a finite number"),
                    })
                }
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Dimension(format!(
                    "row {line} has {} values, expected {w}",
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        n += 1;
    }
    let t = width.ok_or_else(|| Error::Dimension("the panel file contains no data rows".into()))?;
    PanelData::from_row_major(values, n, t)
}

fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_panel_csv(path: impl AsRef<Path>) -> Result<PanelData> {
    let path = path.as_ref();
    parse_panel_csv(File::open(path).map_err(|e| with_path(path, e))?)
}

/// Writes a panel with a `y1,…,yT` header.
pub fn write_panel_csv<W: Write>(panel: &PanelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=panel.n_periods()).map(|t| format!("y{t}")).collect();
    w.write_record(&header).map_err(csv_error)?;
    for row in panel.rows() {
        w.write_record(row.iter().map(|v| fmt_num(*v)))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn outcome_json(o: &TestOutcome) -> Value {
    json!({
        "kind": o.kind.label(),
        "moments": o.moments.as_str(),
        "theta_star": round_sig(o.theta_star),
        "statistic": round_sig(o.statistic),
        "dof": o.dof,
        "p_value": round_sig(o.p_value),
        "alpha": round_sig(o.alpha),
        "reject": o.reject,
    })
}

pub fn confidence_set_json(cs: &ConfidenceSet) -> Value {
    let intervals: Vec<Value> = cs
        .intervals
        .iter()
        .map(|&(lo, hi)| json!([round_sig(lo), round_sig(hi)]))
        .collect();
    json!({
        "alpha": round_sig(cs.alpha),
        "shape": cs.shape.as_str(),
        "intervals": intervals,
        "grid": {
            "lo": round_sig(cs.grid.lo),
            "hi": round_sig(cs.grid.hi),
            "step": round_sig(cs.grid.step),
        },
    })
}

pub fn power_table_json(table: &PowerTable) -> Value {
    Value::Array(
        table
            .rows
            .iter()
            .map(|r| {
                json!({
                    "sweep_value": round_sig(r.sweep_value),
                    "test_label": r.test_label,
                    "rejection_frequency": round_sig(r.rejection_frequency),
                    "mc_se": round_sig(r.mc_se),
                })
            })
            .collect(),
    )
}

pub fn write_json<W: Write>(value: &Value, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(writer)?;
    writer.flush()?;
    Ok(())
}

pub fn write_power_table_csv<W: Write>(table: &PowerTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POWER_TABLE_HEADER).map_err(csv_error)?;
    for r in &table.rows {
        w.write_record([
            fmt_num(r.sweep_value),
            r.test_label.clone(),
            fmt_num(r.rejection_frequency),
            fmt_num(r.mc_se),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_power_table_csv<R: Read>(reader: R) -> Result<PowerTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != POWER_TABLE_HEADER {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!("expected header {}", POWER_TABLE_HEADER.join(",")),
        });
    }
    let mut table = PowerTable::default();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |col: usize| -> Result<f64> {
            record
                .get(col)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: col + 1,
                    message: "expected a number".into(),
                })
        };
        table.rows.push(PowerRow {
            sweep_value: num(0)?,
            test_label: record.get(1).unwrap_or_default().to_string(),
            rejection_frequency: num(2)?,
            mc_se: num(3)?,
            failures: 0,
        });
    }
    Ok(table)
}

/// One-minus-p-value curves, one block per labelled curve.
pub fn write_pvalue_curves_csv<W: Write>(
    curves: &[(String, Vec<PValuePoint>)],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["curve", "theta", "one_minus_p"])
        .map_err(csv_error)?;
    for (label, points) in curves {
        for p in points {
            w.write_record([label.clone(), fmt_num(p.theta), fmt_num(p.one_minus_p)])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Anything the command line can emit.
#[derive(Debug, Clone, Copy)]
pub enum Results<'a> {
    Outcome(&'a TestOutcome),
    ConfidenceSet(&'a ConfidenceSet),
    PowerTable(&'a PowerTable),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!(
                "unknown format '{s}' (expected json or csv)"
            ))),
        }
    }
}

/// Opens `path` for writing; `-` means standard output.
pub fn open_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(io::stdout().lock()))
    } else {
        let file = File::create(path).map_err(|e| with_path(Path::new(path), e))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

pub fn write_results_to<W: Write>(results: Results<'_>, format: Format, mut w: W) -> Result<()> {
    match (results, format) {
        (Results::Outcome(o), Format::Json) => write_json(&outcome_json(o), w),
        (Results::ConfidenceSet(cs), Format::Json) => write_json(&confidence_set_json(cs), w),
        (Results::PowerTable(t), Format::Json) => write_json(&power_table_json(t), w),
        (Results::PowerTable(t), Format::Csv) => write_power_table_csv(t, w),
        (Results::Outcome(o), Format::Csv) => {
            let mut c = csv::Writer::from_writer(&mut w);
            c.write_record([
                "kind",
                "moments",
                "theta_star",
                "statistic",
                "dof",
                "p_value",
                "alpha",
                "reject",
            ])
            .map_err(csv_error)?;
            c.write_record([
                o.kind.label().to_string(),
                o.moments.as_str().to_string(),
                fmt_num(o.theta_star),
                fmt_num(o.statistic),
                o.dof.to_string(),
                fmt_num(o.p_value),
                fmt_num(o.alpha),
                o.reject.to_string(),
            ])
            .map_err(csv_error)?;
            c.flush()?;
            Ok(())
        }
        (Results::ConfidenceSet(cs), Format::Csv) => {
            let mut c = csv::Writer::from_writer(&mut w);
            c.write_record(["lo", "hi", "shape"]).map_err(csv_error)?;
            for &(lo, hi) in &cs.intervals {
                c.write_record([fmt_num(lo), fmt_num(hi), cs.shape.to_string()])
                    .map_err(csv_error)?;
            }
            c.flush()?;
            Ok(())
        }
    }
}

pub fn write_results(results: Results<'_>, format: Format, path: &str) -> Result<()> {
    write_results_to(results, format, open_output(path)?)
}
