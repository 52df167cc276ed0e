//! Market data input and result output.
//!
//! Input formats:
//! * OR-Library portfolio files: `n`, then `n` lines `mean std`, then
//!   `i j corr` triples with 1-based indices. Whitespace and line breaks are
//!   not significant.
//! * A covariance CSV (`n` on the first line, then `n` rows of `n` values)
//!   together with a returns file holding one mean return per line.
//!
//! Results are written as CSV or JSON rows, one per solve.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::SolveReport;
use crate::portfolio::PortfolioProblem;

const CORRELATION_SLACK: f64 = 1e-9;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Mean returns and covariance of a set of assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDataset {
    pub name: String,
    pub mean_returns: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Present for OR-Library input.
    pub std_devs: Option<DVector<f64>>,
    /// Present for OR-Library input; symmetric with unit diagonal.
    pub correlations: Option<DMatrix<f64>>,
}

impl MarketDataset {
    pub fn n(&self) -> usize {
        self.mean_returns.len()
    }

    pub fn to_problem(&self, rho: f64, alpha: usize) -> Result<PortfolioProblem> {
        PortfolioProblem::new(self.covariance.clone(), self.mean_returns.clone(), rho, alpha)
    }

    /// Renders the dataset back in OR-Library form (upper triangle of the
    /// correlation matrix, shortest round-trip float formatting).
    pub fn to_orlibrary_string(&self) -> Option<String> {
        let std_devs = self.std_devs.as_ref()?;
        let corr = self.correlations.as_ref()?;
        let n = self.n();
        let mut out = format!("{n}\n");
        for i in 0..n {
            out.push_str(&format!("{} {}\n", self.mean_returns[i], std_devs[i]));
        }
        for i in 0..n {
            for j in i..n {
                out.push_str(&format!("{} {} {}\n", i + 1, j + 1, corr[(i, j)]));
            }
        }
        Some(out)
    }
}

/// The six-asset example instance.
pub fn embedded_simple_case() -> MarketDataset {
    #[rustfmt::skip]
    let q = DMatrix::from_row_slice(6, 6, &[
        0.038, 0.020, 0.017, 0.014, 0.019, 0.017,
        0.020, 0.043, 0.015, 0.013, 0.021, 0.014,
        0.017, 0.015, 0.034, 0.011, 0.014, 0.014,
        0.014, 0.013, 0.011, 0.044, 0.014, 0.011,
        0.019, 0.021, 0.014, 0.014, 0.040, 0.014,
        0.017, 0.014, 0.014, 0.011, 0.014, 0.046,
    ]);
    MarketDataset {
        name: "simple".into(),
        mean_returns: DVector::from_vec(vec![0.021, 0.04, -0.034, -0.028, -0.005, 0.006]),
        covariance: q,
        std_devs: None,
        correlations: None,
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let mut rest = line;
        let mut offset = 0;
        while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
            let after = &rest[start..];
            let len = after.find(char::is_whitespace).unwrap_or(after.len());
            tokens.push(Token {
                text: &after[..len],
                line: line_idx + 1,
                column: offset + start + 1,
            });
            offset += start + len;
            rest = &after[len..];
        }
    }
    tokens
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn number(token: &Token<'_>) -> Result<f64> {
    let value: f64 = token.text.parse().map_err(|_| {
        parse_error(
            token.line,
            token.column,
            format!("expected a number, found '{}'", token.text),
        )
    })?;
    if !value.is_finite() {
        return Err(parse_error(
            token.line,
            token.column,
            format!("non-finite value '{}'", token.text),
        ));
    }
    Ok(value)
}

fn index(token: &Token<'_>, n: usize) -> Result<usize> {
    let value: usize = token.text.parse().map_err(|_| {
        parse_error(
            token.line,
            token.column,
            format!("expected an asset index, found '{}'", token.text),
        )
    })?;
    if value == 0 || value > n {
        return Err(parse_error(
            token.line,
            token.column,
            format!("asset index {value} out of range 1..={n}"),
        ));
    }
    Ok(value - 1)
}

/// Parses an OR-Library portfolio file.
pub fn parse_orlibrary(bytes: &[u8]) -> Result<MarketDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let prefix = &bytes[..e.valid_up_to()];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        let column = prefix.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        parse_error(line, column, "input is not valid UTF-8")
    })?;
    let tokens = tokenize(text);
    let first = tokens.first().ok_or_else(|| parse_error(1, 1, "empty input"))?;
    let n: usize = first.text.parse().map_err(|_| {
        parse_error(
            first.line,
            first.column,
            format!("expected the asset count, found '{}'", first.text),
        )
    })?;
    if n == 0 {
        return Err(parse_error(first.line, first.column, "asset count must be positive"));
    }
    let body = &tokens[1..];
    let header_len = 2 * n;
    if body.len() < header_len {
        let (line, column) = body.last().map_or((first.line, first.column), |t| (t.line, t.column));
        return Err(parse_error(
            line,
            column,
            format!("expected {n} (mean, std) pairs, found {} tokens", body.len()),
        ));
    }

    let mut means = DVector::zeros(n);
    let mut stds = DVector::zeros(n);
    for i in 0..n {
        means[i] = number(&body[2 * i])?;
        let s = &body[2 * i + 1];
        stds[i] = number(s)?;
        if stds[i] < 0.0 {
            return Err(parse_error(
                s.line,
                s.column,
                format!("negative standard deviation {}", stds[i]),
            ));
        }
    }

    let triples = &body[header_len..];
    if !triples.len().is_multiple_of(3) {
        let t = &triples[triples.len() - triples.len() % 3];
        return Err(parse_error(
            t.line,
            t.column,
            "incomplete correlation triple (i j corr)",
        ));
    }
    let mut corr = DMatrix::zeros(n, n);
    let mut diagonal_seen = vec![false; n];
    for chunk in triples.chunks(3) {
        let i = index(&chunk[0], n)?;
        let j = index(&chunk[1], n)?;
        let c = number(&chunk[2])?;
        if c.abs() > 1.0 + CORRELATION_SLACK {
            return Err(parse_error(
                chunk[0].line,
                chunk[0].column,
                format!(
                    "correlation {} {} {} exceeds 1 in magnitude",
                    i + 1,
                    j + 1,
                    chunk[2].text
                ),
            ));
        }
        if i == j {
            if (c - 1.0).abs() > CORRELATION_SLACK {
                return Err(parse_error(
                    chunk[0].line,
                    chunk[0].column,
                    format!("diagonal correlation {} {} {} is not 1", i + 1, j + 1, chunk[2].text),
                ));
            }
            diagonal_seen[i] = true;
        }
        corr[(i, j)] = c;
        corr[(j, i)] = c;
    }
    if let Some(missing) = diagonal_seen.iter().position(|seen| !seen) {
        let last = tokens.last().expect("nonempty");
        return Err(parse_error(
            last.line,
            last.column,
            format!("missing diagonal correlation for asset {}", missing + 1),
        ));
    }

    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let value = corr[(i, j)] * stds[i] * stds[j];
            cov[(i, j)] = value;
            cov[(j, i)] = value;
        }
    }

    Ok(MarketDataset {
        name: String::new(),
        mean_returns: means,
        covariance: cov,
        std_devs: Some(stds),
        correlations: Some(corr),
    })
}

/// Parses a covariance CSV and a returns column into a dataset.
pub fn parse_covariance_csv(covariance: &[u8], returns: &[u8]) -> Result<MarketDataset> {
    let cov_text =
        std::str::from_utf8(covariance).map_err(|_| parse_error(1, 1, "covariance file is not valid UTF-8"))?;
    let ret_text = std::str::from_utf8(returns).map_err(|_| parse_error(1, 1, "returns file is not valid UTF-8"))?;

    let mut rows = cov_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header) = rows.next().ok_or_else(|| parse_error(1, 1, "empty covariance file"))?;
    let n: usize = header.trim().trim_end_matches(',').trim().parse().map_err(|_| {
        parse_error(
            header_line + 1,
            1,
            format!("expected the asset count, found '{}'", header.trim()),
        )
    })?;
    if n == 0 {
        return Err(parse_error(header_line + 1, 1, "asset count must be positive"));
    }

    let mut q = DMatrix::zeros(n, n);
    let mut count = 0;
    for (line_idx, line) in rows {
        if count == n {
            return Err(parse_error(line_idx + 1, 1, format!("more than {n} covariance rows")));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(parse_error(
                line_idx + 1,
                1,
                format!("expected {n} values, found {}", cells.len()),
            ));
        }
        let mut column = 1;
        for (j, cell) in cells.iter().enumerate() {
            let token = Token {
                text: cell.trim(),
                line: line_idx + 1,
                column,
            };
            q[(count, j)] = number(&token)?;
            column += cell.len() + 1;
        }
        count += 1;
    }
    if count != n {
        return Err(parse_error(
            cov_text.lines().count().max(1),
            1,
            format!("expected {n} covariance rows, found {count}"),
        ));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (q[(i, j)] - q[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::InvalidProblem(format!(
                    "covariance not symmetric at ({}, {}): {} vs {}",
                    i + 1,
                    j + 1,
                    q[(i, j)],
                    q[(j, i)]
                )));
            }
        }
    }

    let tokens = tokenize(ret_text);
    if tokens.len() != n {
        let (line, column) = tokens.last().map_or((1, 1), |t| (t.line, t.column));
        return Err(parse_error(
            line,
            column,
            format!("expected {n} mean returns, found {}", tokens.len()),
        ));
    }
    let mut v = DVector::zeros(n);
    for (i, t) in tokens.iter().enumerate() {
        v[i] = number(t)?;
    }

    Ok(MarketDataset {
        name: String::new(),
        mean_returns: v,
        covariance: q,
        std_devs: None,
        correlations: None,
    })
}

/// Column names of the CSV report, in order.
pub const CSV_HEADER: &str = "alpha,return,risk,card,iter,iter_spg,time_s,tau,fcnt,rho";

/// One line of results. Solution fields are `None` when the solve did not
/// converge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub alpha: usize,
    #[serde(rename = "return")]
    pub expected_return: Option<f64>,
    pub risk: Option<f64>,
    pub card: Option<usize>,
    pub iter: Option<usize>,
    pub iter_spg: Option<usize>,
    pub time_s: Option<f64>,
    pub tau: Option<f64>,
    pub fcnt: Option<usize>,
    pub rho: f64,
    pub converged: bool,
}

impl ReportRow {
    pub fn from_report(alpha: usize, rho: f64, report: &SolveReport) -> Self {
        let solved = |v| if report.converged { Some(v) } else { None };
        Self {
            alpha,
            expected_return: solved(report.expected_return),
            risk: solved(report.risk),
            card: report.converged.then_some(report.cardinality),
            iter: Some(report.outer_iterations),
            iter_spg: Some(report.spg_iterations),
            time_s: Some(report.wall_time_seconds),
            tau: solved(report.final_tau),
            fcnt: Some(report.function_evaluations),
            rho,
            converged: report.converged,
        }
    }

    /// Row for a solve that produced no report at all.
    pub fn failed(alpha: usize, rho: f64) -> Self {
        Self {
            alpha,
            expected_return: None,
            risk: None,
            card: None,
            iter: None,
            iter_spg: None,
            time_s: None,
            tau: None,
            fcnt: None,
            rho,
            converged: false,
        }
    }

    pub fn without_timing(mut self) -> Self {
        if self.time_s.is_some() {
            self.time_s = Some(0.0);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Formats `x` with `digits` significant digits, trailing zeros trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exponent) {
        let s = format!("{:.*e}", digits - 1, x);
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_float(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format_significant(v, 6))
}

fn csv_int(x: Option<usize>) -> String {
    x.map_or_else(|| "NA".into(), |v| v.to_string())
}

/// Writes rows as CSV (fixed header, LF line endings) or as a JSON array.
pub fn write_report<W: Write>(rows: &[ReportRow], format: OutputFormat, mut sink: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidProblem("no report rows to write".into()));
    }
    match format {
        OutputFormat::Csv => {
            writeln!(sink, "{CSV_HEADER}")?;
            for r in rows {
                writeln!(
                    sink,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.alpha,
                    csv_float(r.expected_return),
                    csv_float(r.risk),
                    csv_int(r.card),
                    csv_int(r.iter),
                    csv_int(r.iter_spg),
                    csv_float(r.time_s),
                    csv_float(r.tau),
                    csv_int(r.fcnt),
                    format_significant(r.rho, 6),
                )?;
            }
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, rows)?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn two_asset_file() {
        let d = parse_orlibrary(b"2\n0.01 0.1\n0.02 0.2\n1 1 1.0\n2 2 1.0\n1 2 0.5\n").unwrap();
        assert_eq!(d.n(), 2);
        let expected = dmatrix![0.01, 0.01; 0.01, 0.04];
        assert!((&d.covariance - expected).amax() < 1e-17);
        assert_eq!(d.covariance[(0, 1)].to_bits(), d.covariance[(1, 0)].to_bits());
    }

    #[test]
    fn riskless_single_asset() {
        let d = parse_orlibrary(b"1\n0.05 0.0\n1 1 1.0\n").unwrap();
        assert_eq!(d.covariance, dmatrix![0.0]);
        assert_eq!(d.mean_returns[0], 0.05);
    }

    #[test]
    fn unlisted_pairs_default_to_zero() {
        let d = parse_orlibrary(b"3 0 1 0 1 0 1 1 1 1 2 2 1 3 3 1 1 3 -0.25").unwrap();
        assert_eq!(d.covariance[(0, 1)], 0.0);
        assert_eq!(d.covariance[(2, 0)], -0.25);
    }

    #[test]
    fn scientific_notation_is_accepted() {
        let d = parse_orlibrary(b"1\n5.64e-4 1E-2\n1 1 1.0E0\n").unwrap();
        assert_eq!(d.mean_returns[0], 5.64e-4);
    }

    fn parse_err(input: &[u8]) -> (usize, usize, String) {
        match parse_orlibrary(input) {
            Err(Error::Parse { line, column, message }) => (line, column, message),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_correlation_names_the_triple() {
        let (line, column, message) = parse_err(b"2\n0.01 0.1\n0.02 0.2\n1 1 1.0\n2 2 1.0\n1 2 1.5\n");
        assert_eq!((line, column), (6, 1));
        assert!(message.contains("1 2 1.5"), "{message}");
    }

    #[test]
    fn malformed_inputs() {
        parse_err(b"");
        parse_err(b"x");
        parse_err(b"0");
        parse_err(b"2\n0.01 0.1\n0.02");
        parse_err(b"1\n0.01 0.1\n1 1");
        parse_err(b"1\n0.01 0.1\n1 2 1.0");
        parse_err(b"1\n0.01 abc\n1 1 1.0");
        parse_err(b"1\n0.01 -0.1\n1 1 1.0");
        parse_err(b"2\n0.01 0.1\n0.02 0.2\n1 1 1.0\n");
        parse_err(b"1\n0.01 0.1\n1 1 0.5");
        parse_err(b"1\n\xff\xfe");
        let (line, column, _) = parse_err(b"1\n0.01 0.1\n1 1 nan");
        assert_eq!((line, column), (3, 5));
    }

    #[test]
    fn covariance_csv() {
        let d = parse_covariance_csv(b"2\n0.04,0.01\n0.01,0.09\n", b"0.02\n-0.01\n").unwrap();
        assert_eq!(d.covariance, dmatrix![0.04, 0.01; 0.01, 0.09]);
        assert!(parse_covariance_csv(b"2\n0.04,0.01\n0.02,0.09\n", b"0.02\n-0.01\n").is_err());
        assert!(parse_covariance_csv(b"2\n0.04,0.01\n0.01,0.09\n", b"0.02\n").is_err());
        assert!(parse_covariance_csv(b"2\n0.04,0.01\n", b"0.02\n0.01\n").is_err());
        assert!(parse_covariance_csv(b"2\n0.04\n0.01,0.09\n", b"0.02\n0.01\n").is_err());
    }

    #[test]
    fn simple_case_data() {
        let d = embedded_simple_case();
        assert_eq!(d.mean_returns[1], 0.04);
        assert_eq!(d.mean_returns[2], -0.034);
        assert_eq!(d.covariance[(0, 0)], 0.038);
        assert_eq!(d.covariance[(0, 1)], 0.020);
        assert_eq!(d.covariance[(1, 0)], 0.020);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0003, 6), "0.0003");
        assert_eq!(format_significant(0.139412345, 6), "0.139412");
        assert_eq!(format_significant(-0.0238, 6), "-0.0238");
        assert_eq!(format_significant(12.0, 6), "12");
        assert_eq!(format_significant(1.23456789e-9, 6), "1.23457e-9");
        assert_eq!(format_significant(0.0, 6), "0");
    }

    fn row(converged: bool) -> ReportRow {
        ReportRow {
            alpha: 6,
            expected_return: converged.then_some(0.000300001),
            risk: converged.then_some(0.13941),
            card: converged.then_some(6),
            iter: Some(2),
            iter_spg: Some(7),
            time_s: Some(0.01),
            tau: converged.then_some(0.117556),
            fcnt: Some(9),
            rho: 0.0003,
            converged,
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_report(&[row(true), row(false)], OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "6,0.000300001,0.13941,6,2,7,0.01,0.117556,9,0.0003");
        assert_eq!(lines[2], "6,NA,NA,NA,2,7,0.01,NA,9,0.0003");
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn json_nulls_and_round_trip() {
        let rows = vec![row(true), row(false)];
        let mut buf = Vec::new();
        write_report(&rows, OutputFormat::Json, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"risk\": null"));
        let back: Vec<ReportRow> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(write_report(&[], OutputFormat::Csv, Vec::new()).is_err());
    }
}
