//! Tabular output: CSV with 17 significant digits and a JSON table form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curve::BricklayerTrace;
use crate::error::{invalid, Result};
use crate::scaling::LocalTimeProfile;
use crate::walk::DiscreteBrickTrace;

/// Formats `x` like C's `%.17g`: 17 significant digits, trailing zeros
/// dropped, exponent notation outside `[1e-4, 1e17)`. Parsing the result
/// gives back `x` bit for bit.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-4..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let frac = if tail.is_empty() { String::new() } else { format!(".{tail}") };
        let esign = if exp < 0 { '-' } else { '+' };
        return format!("{sign}{head}{frac}e{esign}{:02}", exp.abs());
    }
    let (int_part, frac_part) = if exp >= 0 {
        let cut = exp as usize + 1;
        (digits[..cut].to_string(), digits[cut..].to_string())
    } else {
        ("0".to_string(), "0".repeat((-exp - 1) as usize) + &digits)
    };
    let frac_part = frac_part.trim_end_matches('0');
    if frac_part.is_empty() {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl Cell {
    fn to_csv(self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => fmt_g17(f),
        }
    }

    fn parse(token: &str) -> Result<Self> {
        if let Ok(i) = token.parse::<i64>() {
            return Ok(Cell::Int(i));
        }
        token
            .parse::<f64>()
            .map(Cell::Float)
            .map_err(|_| invalid(format!("`{token}` is not a number")))
    }
}

/// Named columns of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.to_csv()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| invalid("empty csv"))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let rows = lines
            .map(|line| {
                let row = line.split(',').map(Cell::parse).collect::<Result<Vec<_>>>()?;
                if row.len() != columns.len() {
                    return Err(invalid(format!("row `{line}` has {} fields, expected {}", row.len(), columns.len())));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns, rows })
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Rows `(k, site, height)` of the discrete wall in laying order.
pub fn brick_table(trace: &DiscreteBrickTrace) -> Table {
    Table {
        columns: columns(&["k", "site", "height"]),
        rows: trace
            .entries
            .iter()
            .map(|b| vec![Cell::Int(b.step as i64), Cell::Int(b.site), Cell::Int(b.height as i64)])
            .collect(),
    }
}

/// Rows `(t, x, h)` of a curve trace.
pub fn curve_table(trace: &BricklayerTrace) -> Table {
    Table {
        columns: columns(&["t", "x", "h"]),
        rows: trace
            .points
            .iter()
            .map(|p| vec![Cell::Float(p.t), Cell::Float(p.x), Cell::Float(p.h)])
            .collect(),
    }
}

/// Rows `(y, local_time)` of a profile.
pub fn profile_table(profile: &LocalTimeProfile) -> Table {
    Table {
        columns: columns(&["y", "local_time"]),
        rows: profile
            .levels
            .iter()
            .zip(&profile.values)
            .map(|(y, v)| vec![Cell::Float(*y), Cell::Float(*v)])
            .collect(),
    }
}
