//! Report rows and their CSV/JSON encodings.

use std::io::{self, Write};

use serde::Serialize;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "quantity,analytic,mc_mean,mc_stderr,target_ref,pass";

/// Formats `x` with 12 significant digits in the shortest of fixed or
/// exponent notation, trailing zeros removed, independent of locale.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One compared quantity: an exact value, a simulated estimate, or both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    pub analytic: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_stderr: Option<f64>,
    /// Which exact result the row checks, e.g. `walk.height_moments`.
    pub target_ref: String,
    pub pass: Option<bool>,
}

impl ReportRow {
    pub fn analytic(quantity: impl Into<String>, value: f64, target_ref: impl Into<String>) -> Self {
        Self {
            quantity: quantity.into(),
            analytic: Some(value),
            mc_mean: None,
            mc_stderr: None,
            target_ref: target_ref.into(),
            pass: None,
        }
    }

    pub fn with_mc(mut self, mean: f64, stderr: f64) -> Self {
        self.mc_mean = Some(mean);
        self.mc_stderr = Some(stderr);
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv<W: Write>(rows: &[ReportRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            csv_field(&r.quantity),
            opt(r.analytic),
            opt(r.mc_mean),
            opt(r.mc_stderr),
            csv_field(&r.target_ref),
            r.pass.map(|p| p.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    quantity: &'a str,
    analytic: Option<String>,
    mc_mean: Option<String>,
    mc_stderr: Option<String>,
    target_ref: &'a str,
    pass: Option<bool>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema: u32,
    command: &'a str,
    rows: Vec<JsonRow<'a>>,
}

/// JSON mirror of the CSV. Numbers are carried as the same 12-digit strings
/// so both files agree digit for digit.
pub fn write_json<W: Write>(command: &str, rows: &[ReportRow], mut w: W) -> io::Result<()> {
    let report = JsonReport {
        schema: SCHEMA_VERSION,
        command,
        rows: rows
            .iter()
            .map(|r| JsonRow {
                quantity: &r.quantity,
                analytic: r.analytic.map(fmt_num),
                mc_mean: r.mc_mean.map(fmt_num),
                mc_stderr: r.mc_stderr.map(fmt_num),
                target_ref: &r.target_ref,
                pass: r.pass,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)
}

/// Exit status for a set of rows: success unless some row failed.
pub fn all_pass(rows: &[ReportRow]) -> bool {
    rows.iter().all(|r| r.pass != Some(false))
}
