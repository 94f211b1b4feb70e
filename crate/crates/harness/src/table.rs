//! Long-format result tables and their CSV form.

use std::io::{Read, Write};

use crate::error::{HarnessError, Result};

pub const HEADER: [&str; 9] = ["experiment", "n", "s", "l", "tau", "method", "metric", "value", "se"];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub l: Option<f64>,
    pub tau: Option<f64>,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

/// Factor levels shared by a group of rows.
#[derive(Debug, Clone, Default)]
pub struct Cell {
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub l: Option<f64>,
    pub tau: Option<f64>,
}

impl ResultTable {
    pub fn push(&mut self, experiment: &str, cell: &Cell, method: &str, metric: &str, value: f64, se: Option<f64>) {
        self.rows.push(Row {
            experiment: experiment.to_string(),
            n: cell.n,
            s: cell.s,
            l: cell.l,
            tau: cell.tau,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
            se,
        });
    }

    /// First row matching method and metric whose factors satisfy `pred`.
    pub fn find(&self, method: &str, metric: &str, pred: impl Fn(&Row) -> bool) -> Option<&Row> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric && pred(r))
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(fmt_g6).unwrap_or_default();
            w.write_record([
                r.experiment.clone(),
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                opt(r.s),
                opt(r.l),
                opt(r.tau),
                r.method.clone(),
                r.metric.clone(),
                fmt_g6(r.value),
                opt(r.se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(HEADER) {
            return Err(HarnessError::Ingestion {
                row: 1,
                column: "header".into(),
                message: format!("expected `{}`", HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let num = |j: usize| -> Result<Option<f64>> {
                let v = field(j);
                if v.is_empty() {
                    return Ok(None);
                }
                parse_float(v).map(Some).ok_or_else(|| HarnessError::Ingestion {
                    row,
                    column: HEADER[j].into(),
                    message: format!("`{v}` is not a number"),
                })
            };
            let n = match field(1) {
                "" => None,
                v => Some(v.parse().map_err(|_| HarnessError::Ingestion {
                    row,
                    column: "n".into(),
                    message: format!("`{v}` is not a count"),
                })?),
            };
            rows.push(Row {
                experiment: field(0).to_string(),
                n,
                s: num(2)?,
                l: num(3)?,
                tau: num(4)?,
                method: field(5).to_string(),
                metric: field(6).to_string(),
                value: num(7)?.ok_or_else(|| HarnessError::Ingestion {
                    row,
                    column: "value".into(),
                    message: "missing value".into(),
                })?,
                se: num(8)?,
            });
        }
        Ok(Self { rows })
    }

    /// The table as it reads back after a CSV round trip.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| parse_float(&fmt_g6(v)).expect("formatter output parses");
        Self {
            rows: self
                .rows
                .iter()
                .map(|row| Row {
                    s: row.s.map(r),
                    l: row.l.map(r),
                    tau: row.tau.map(r),
                    value: r(row.value),
                    se: row.se.map(r),
                    ..row.clone()
                })
                .collect(),
        }
    }
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// C's `%g` with six significant digits.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.5, "0.5"),
            (1.0, "1"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5e-10, "-2.5e-10"),
            (0.54213987, "0.54214"),
            (999999.5, "1e+06"),
            (9.9999996, "10"),
            (100.0, "100"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g6(x), want, "{x}");
        }
    }

    #[test]
    fn empty_optionals_round_trip() {
        let mut t = ResultTable::default();
        t.push("wilks", &Cell { n: Some(200), ..Cell::default() }, "ETEL", "ks_p", 0.123456789, None);
        let back = ResultTable::read_csv(t.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, t.rounded());
        assert!(t.to_csv_string().contains("wilks,200,,,,ETEL,ks_p,0.123457,\n"));
    }

    #[test]
    fn bad_cell_reports_coordinates() {
        let text = "experiment,n,s,l,tau,method,metric,value,se\nkl,2,,,,ETEL,ekl,abc,\n";
        match ResultTable::read_csv(text.as_bytes()) {
            Err(HarnessError::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "value");
            }
            other => panic!("{other:?}"),
        }
    }
}
