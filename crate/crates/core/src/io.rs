//! File formats: call quotes, measures, marginal systems, tables.
//!
//! Numbers are written with 12 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envelope::GridFunction;
use crate::error::{Error, Result};
use crate::measures::{CallCurve, DiscreteMeasure};
use crate::mot::{Coupling, SweepTable};

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text of `x` rounded to 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                let r = round12(x);
                *v = if r.fract() == 0.0 && r.abs() < 1e15 {
                    serde_json::Value::from(r as i64)
                } else {
                    serde_json::Number::from_f64(r).map_or(serde_json::Value::Null, serde_json::Value::Number)
                };
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_value),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    maturity_index: usize,
    strike: f64,
    price: f64,
}

#[derive(Debug, Deserialize)]
struct QuoteRecord {
    i: usize,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "C")]
    c: f64,
}

fn group_quotes(rows: impl IntoIterator<Item = (usize, f64, f64)>) -> Result<Vec<CallCurve>> {
    let mut by_date: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, k, c) in rows {
        by_date.entry(i).or_default().push((k, c));
    }
    by_date.into_iter().map(|(i, q)| CallCurve::new(i, q)).collect()
}

/// Call quotes as CSV with header `maturity_index,strike,price`, one curve
/// per maturity index in increasing order.
pub fn parse_quotes_csv(text: &str) -> Result<Vec<CallCurve>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let rows = reader
        .deserialize::<QuoteRow>()
        .map(|r| r.map(|r| (r.maturity_index, r.strike, r.price)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    group_quotes(rows)
}

/// Call quotes as a JSON array of `{"i", "K", "C"}`.
pub fn parse_quotes_json(text: &str) -> Result<Vec<CallCurve>> {
    let rows: Vec<QuoteRecord> = serde_json::from_str(text)?;
    group_quotes(rows.into_iter().map(|r| (r.i, r.k, r.c)))
}

/// Reads quotes, choosing the format by file extension.
pub fn read_quotes(path: &Path) -> Result<Vec<CallCurve>> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_quotes_json(&text),
        Some("csv") => parse_quotes_csv(&text),
        _ => Err(Error::Parse(format!("{}: expected a .csv or .json quotes file", path.display()))),
    }
}

/// JSON shape of a marginals file: either one measure or a list of them.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MarginalsFile {
    Many(Vec<DiscreteMeasure>),
    Wrapped { marginals: Vec<DiscreteMeasure> },
    One(DiscreteMeasure),
}

pub fn parse_marginals(text: &str) -> Result<Vec<DiscreteMeasure>> {
    let file: MarginalsFile = serde_json::from_str(text)?;
    Ok(match file {
        MarginalsFile::Many(v) | MarginalsFile::Wrapped { marginals: v } => v,
        MarginalsFile::One(m) => vec![m],
    })
}

pub fn read_marginals(paths: &[impl AsRef<Path>]) -> Result<Vec<DiscreteMeasure>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(parse_marginals(&std::fs::read_to_string(p)?)?);
    }
    Ok(out)
}

/// CSV `K,lower,upper`; failed bounds are left empty.
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("K,lower,upper\n");
    for r in &table.rows {
        let cell = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", fmt_num(r.strike), cell(r.lower), cell(r.upper));
    }
    out
}

/// CSV with one column per date and a `mass` column.
pub fn coupling_csv(coupling: &Coupling) -> String {
    let n = coupling.grids().len();
    let mut out: String = (1..=n).map(|i| format!("s{i},")).collect::<String>() + "mass\n";
    for (point, q) in coupling.cells() {
        for x in point {
            out.push_str(&fmt_num(x));
            out.push(',');
        }
        out.push_str(&fmt_num(q));
        out.push('\n');
    }
    out
}

/// CSV `s1,s2,psi,phi,phi_minus_psi`.
pub fn surface_csv(rows: &[[f64; 5]]) -> String {
    let mut out = String::from("s1,s2,psi,phi,phi_minus_psi\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct U2Row {
    s2: f64,
    u2: f64,
}

/// CSV `s2,u2`.
pub fn u2_csv(u2: &GridFunction) -> String {
    let mut out = String::from("s2,u2\n");
    for (s, u) in u2.points.iter().zip(&u2.values) {
        let _ = writeln!(out, "{},{}", fmt_num(*s), fmt_num(*u));
    }
    out
}

pub fn parse_u2_csv(text: &str) -> Result<GridFunction> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let rows = reader.deserialize::<U2Row>().collect::<std::result::Result<Vec<_>, _>>()?;
    GridFunction::new(rows.iter().map(|r| r.s2).collect(), rows.iter().map(|r| r.u2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(7.0 / 6.0), "1.16666666667");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1e-20), "0.00000000000000000001");
    }

    #[test]
    fn quotes_formats_agree() {
        let csv = "maturity_index,strike,price\n1,0,1\n1,1,0.5\n1,2,0\n2,2,0.1\n2,0,1.2\n";
        let json = r#"[{"i":1,"K":0,"C":1},{"i":1,"K":1,"C":0.5},{"i":1,"K":2,"C":0},
                       {"i":2,"K":2,"C":0.1},{"i":2,"K":0,"C":1.2}]"#;
        let a = parse_quotes_csv(csv).unwrap();
        let b = parse_quotes_json(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].quotes()[0], (0.0, 1.2));
    }

    #[test]
    fn marginals_shapes() {
        let one = r#"{"points":[0,2],"weights":[0.5,0.5]}"#;
        assert_eq!(parse_marginals(one).unwrap().len(), 1);
        let many = format!("[{one},{one}]");
        assert_eq!(parse_marginals(&many).unwrap().len(), 2);
        let wrapped = format!(r#"{{"marginals":[{one}]}}"#);
        assert_eq!(parse_marginals(&wrapped).unwrap().len(), 1);
    }

    #[test]
    fn json_is_rounded() {
        let text = to_json(&vec![1.0 / 3.0, 2.0]).unwrap();
        assert!(text.contains("0.333333333333") && !text.contains("0.3333333333333"));
        assert!(text.contains("2\n") || text.contains("2,"));
    }

    #[test]
    fn u2_round_trip() {
        let u = GridFunction::new(vec![-1.0, 0.5], vec![0.25, -3.0]).unwrap();
        assert_eq!(parse_u2_csv(&u2_csv(&u)).unwrap(), u);
    }
}
