//! Results CSV: `experiment_id,model,n,m,beta,trial,metric,value,std_error,seed`.
//!
//! Per-trial rows leave `std_error` empty; per-cell aggregates use
//! `trial = -1`. Floats are written with 17 significant digits so that a
//! write/read/write cycle reproduces the file byte for byte.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const HEADER: [&str; 10] = [
    "experiment_id",
    "model",
    "n",
    "m",
    "beta",
    "trial",
    "metric",
    "value",
    "std_error",
    "seed",
];

pub const AGGREGATE_TRIAL: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub trial: i64,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub seed: u64,
}

impl ResultRow {
    pub fn is_aggregate(&self) -> bool {
        self.trial == AGGREGATE_TRIAL
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        if !row.value.is_finite() {
            return Err(Error::Degenerate(format!(
                "non-finite value for metric {} at n = {}",
                row.metric, row.n
            )));
        }
        w.write_record([
            row.experiment_id.clone(),
            row.model.clone(),
            row.n.to_string(),
            row.m.to_string(),
            format_float(row.beta),
            row.trial.to_string(),
            row.metric.clone(),
            format_float(row.value),
            row.std_error.map(format_float).unwrap_or_default(),
            row.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_to_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::Parse(format!("unexpected results header {headers:?}")));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            let field = |k: usize| &rec[k];
            fn num<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
                s.parse()
                    .map_err(|_| Error::Parse(format!("line {line}: bad {name} `{s}`")))
            }
            Ok(ResultRow {
                experiment_id: field(0).to_string(),
                model: field(1).to_string(),
                n: num(field(2), line, "n")?,
                m: num(field(3), line, "m")?,
                beta: num(field(4), line, "beta")?,
                trial: num(field(5), line, "trial")?,
                metric: field(6).to_string(),
                value: num(field(7), line, "value")?,
                std_error: match field(8) {
                    "" => None,
                    s => Some(num(s, line, "std_error")?),
                },
                seed: num(field(9), line, "seed")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(value: f64, std_error: Option<f64>) -> ResultRow {
        ResultRow {
            experiment_id: "iid2-0000000000000007".into(),
            model: "iid2".into(),
            n: 8,
            m: 12,
            beta: 1.2,
            trial: if std_error.is_some() { -1 } else { 3 },
            metric: "mi".into(),
            value,
            std_error,
            seed: u64::MAX,
        }
    }

    #[test]
    fn header_and_layout() {
        let text = rows_to_string(&[row(0.1, None), row(0.25, Some(0.01))]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), HEADER.join(","));
        let first = lines.next().unwrap();
        assert!(first.ends_with(",,18446744073709551615"), "{first}");
        assert!(lines.next().unwrap().contains(",-1,mi,"));
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(rows_to_string(&[row(f64::NAN, None)]).is_err());
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn write_read_write_is_idempotent(
            values in prop::collection::vec((-1e300f64..1e300, prop::option::of(0.0f64..1e10)), 1..20)
        ) {
            let rows: Vec<ResultRow> = values.iter().map(|&(v, se)| row(v, se)).collect();
            let first = rows_to_string(&rows).unwrap();
            let parsed = read_rows(first.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &rows);
            prop_assert_eq!(rows_to_string(&parsed).unwrap(), first);
        }
    }
}
