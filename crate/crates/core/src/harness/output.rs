//! CSV and JSON rendering of sweep results. Floats carry 17 significant
//! digits so files round-trip exactly; undefined values are left empty in
//! CSV and `null` in JSON.

use std::io::{self, Write};

use serde_json::{Map, Value};

use super::config::OutputFormat;
use super::sweep::ResultRow;

pub const COLUMNS: [&str; 20] = [
    "G_A",
    "G_B",
    "Pz_A",
    "Pz_B",
    "p_l",
    "p_dc",
    "f",
    "N",
    "trials",
    "accepted",
    "discarded",
    "false_positive",
    "acceptance_rate",
    "acceptance_stderr",
    "mean_fidelity",
    "fidelity_stderr",
    "analytic_F",
    "analytic_success",
    "analytic_total_factor",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Float(Option<f64>),
    Int(u64),
}

fn cells(row: &ResultRow) -> [Cell; 20] {
    use Cell::{Float, Int};
    let x = |v: f64| Float(Some(v));
    [
        x(row.g_a),
        x(row.g_b),
        x(row.pz_a),
        x(row.pz_b),
        x(row.p_l),
        x(row.p_dc),
        x(row.f),
        Int(row.n as u64),
        Int(row.trials),
        Int(row.accepted),
        Int(row.discarded),
        Int(row.false_positive),
        x(row.acceptance_rate),
        Float(row.acceptance_stderr),
        Float(row.mean_fidelity),
        Float(row.fidelity_stderr),
        x(row.analytic_f),
        Float(row.analytic_success),
        Float(row.analytic_total_factor),
        Int(row.seed),
    ]
}

/// `{:.16e}`, with non-finite values treated as absent.
pub fn format_float(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        _ => String::new(),
    }
}

pub fn write_csv<W: Write + ?Sized>(out: &mut W, rows: &[ResultRow]) -> io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for row in rows {
        let line: Vec<String> = cells(row)
            .iter()
            .map(|c| match c {
                Cell::Float(v) => format_float(*v),
                Cell::Int(i) => i.to_string(),
            })
            .collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn json_rows(rows: &[ResultRow]) -> Value {
    let objects = rows
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            for (name, cell) in COLUMNS.iter().zip(cells(row)) {
                let value = match cell {
                    // serde_json writes the shortest round-tripping form
                    Cell::Float(Some(x)) if x.is_finite() => Value::from(x),
                    Cell::Float(_) => Value::Null,
                    Cell::Int(i) => Value::from(i),
                };
                obj.insert((*name).to_string(), value);
            }
            Value::Object(obj)
        })
        .collect();
    Value::Array(objects)
}

pub fn write_json<W: Write + ?Sized>(out: &mut W, rows: &[ResultRow]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, &json_rows(rows))?;
    writeln!(out)
}

pub fn write_rows<W: Write + ?Sized>(
    out: &mut W,
    rows: &[ResultRow],
    format: OutputFormat,
) -> io::Result<()> {
    match format {
        OutputFormat::Csv => write_csv(out, rows),
        OutputFormat::Json => write_json(out, rows),
    }
}
