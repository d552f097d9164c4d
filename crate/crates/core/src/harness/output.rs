//! CSV and JSON renderings. Every CSV starts with `# schema=1`.

use serde::Serialize;

use super::run::{ComponentRow, DimRow, Failure, ProbeRecord, RunRecord, TraceRow, SCHEMA_VERSION};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn table<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut out = format!("# schema={SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

pub fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn kind(f: &Option<Failure>) -> &str {
    f.as_ref().map_or("ok", |f| f.kind.as_str())
}

#[derive(Serialize)]
struct TraceCsv<'a> {
    k: u64,
    exact_re: Option<f64>,
    exact_im: Option<f64>,
    predicted_re: Option<f64>,
    predicted_im: Option<f64>,
    ratio_modulus: Option<f64>,
    residual: Option<f64>,
    status: &'a str,
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<String> {
    table(rows.iter().map(|r| TraceCsv {
        k: r.k,
        exact_re: r.exact.map(|c| c.re),
        exact_im: r.exact.map(|c| c.im),
        predicted_re: r.predicted.map(|c| c.re),
        predicted_im: r.predicted.map(|c| c.im),
        ratio_modulus: r.ratio_modulus,
        residual: r.residual,
        status: kind(&r.failure),
    }))
}

#[derive(Serialize)]
struct DimCsv<'a> {
    k: u64,
    dim: Option<String>,
    status: &'a str,
}

pub fn dim_csv(rows: &[DimRow]) -> Result<String> {
    table(rows.iter().map(|r| DimCsv {
        k: r.k,
        dim: r.dim.map(|d| d.to_string()),
        status: kind(&r.failure),
    }))
}

#[derive(Serialize)]
struct ComponentCsv {
    l: usize,
    support: String,
    d_l: usize,
    c_l: usize,
    kappa_count: usize,
    /// `re:im` pairs separated by `;`.
    c_det: String,
    locus_re: f64,
    locus_im: f64,
}

pub fn component_csv(rows: &[ComponentRow]) -> Result<String> {
    table(rows.iter().map(|r| ComponentCsv {
        l: r.l,
        support: r.support.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";"),
        d_l: r.d_l,
        c_l: r.c_l,
        kappa_count: r.kappa_count,
        c_det: r
            .c_det
            .iter()
            .map(|c| format!("{}:{}", c.re, c.im))
            .collect::<Vec<_>>()
            .join(";"),
        locus_re: r.locus_integral.re,
        locus_im: r.locus_integral.im,
    }))
}

#[derive(Serialize)]
struct ProbeCsv<'a> {
    report: &'a str,
    series: &'a str,
    k: u64,
    value: f64,
}

/// Long format: one line per report, series and `k`.
pub fn probe_csv(record: &ProbeRecord) -> Result<String> {
    let mut rows = Vec::new();
    for (name, r) in &record.reports {
        let mut push = |series: &'static str, values: &[f64]| {
            for (k, v) in r.k_values.iter().zip(values) {
                rows.push((name.as_str(), series, *k, *v));
            }
        };
        push("observed", &r.observed);
        push("predicted", &r.predicted);
        for (key, values) in &r.diagnostics {
            for (k, v) in r.k_values.iter().zip(values) {
                rows.push((name.as_str(), key.as_str(), *k, *v));
            }
        }
    }
    table(rows.into_iter().map(|(report, series, k, value)| ProbeCsv {
        report,
        series,
        k,
        value,
    }))
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    key: &'a str,
    value: String,
}

/// Fit, period and conventions of a run as key/value lines.
pub fn summary_csv(record: &RunRecord) -> Result<String> {
    let mut rows = vec![
        ("config_hash", record.config_hash.clone()),
        ("setup_hash", record.setup_hash.clone()),
        ("character_convention", format!("{:?}", record.conventions.character)),
        ("normal_map", format!("{:?}", record.conventions.normal_map)),
        ("kappa_multiplicity", format!("{:?}", record.conventions.kappa_multiplicity)),
        ("period", record.period.to_string()),
    ];
    match (&record.fit, &record.fit_failure) {
        (Some(f), _) => rows.extend([
            ("fitted_exponent", f.fitted_exponent.to_string()),
            ("fitted_coefficient_re", f.fitted_coefficient.re.to_string()),
            ("fitted_coefficient_im", f.fitted_coefficient.im.to_string()),
            ("r_squared", f.r_squared.to_string()),
            ("residual_slope", f.residual_slope.to_string()),
        ]),
        (None, Some(fail)) => rows.push(("fit", fail.kind.clone())),
        (None, None) => {}
    }
    table(rows.into_iter().map(|(key, value)| SummaryCsv { key, value }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    #[test]
    fn trace_table_layout() {
        let rows = vec![
            TraceRow {
                k: 3,
                exact: Some(Complex64::new(3.0, 0.0)),
                predicted: Some(Complex64::new(0.75, 0.0)),
                ratio_modulus: Some(4.0),
                residual: Some(2.25),
                failure: None,
            },
            TraceRow {
                k: 4,
                exact: None,
                predicted: None,
                ratio_modulus: None,
                residual: None,
                failure: Some(Failure {
                    kind: "budget_exceeded".into(),
                    message: "x".into(),
                }),
            },
        ];
        let text = trace_csv(&rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema=1");
        assert_eq!(
            lines[1],
            "k,exact_re,exact_im,predicted_re,predicted_im,ratio_modulus,residual,status"
        );
        assert_eq!(lines[2], "3,3.0,0.0,0.75,0.0,4.0,2.25,ok");
        assert_eq!(lines[3], "4,,,,,,,budget_exceeded");
    }

    #[test]
    fn large_dimensions_are_exact() {
        let rows = vec![DimRow {
            k: 1,
            dim: Some(u128::MAX),
            failure: None,
        }];
        assert!(dim_csv(&rows).unwrap().contains(&u128::MAX.to_string()));
    }
}
