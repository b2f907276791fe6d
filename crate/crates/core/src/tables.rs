//! Fixed CSV schemas for analytic curves, scans, fits and comparisons.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! every value round-trips exactly. Missing values are empty fields.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::fitting::ProbitFit;
use crate::harness::{PhasePoint, QZeroStats};
use crate::linalg::{cholesky, CovMatrix};

pub const ANALYTIC_HEADER: [&str; 8] = [
    "measure",
    "phi",
    "alpha_var",
    "alpha_es",
    "r_c",
    "r",
    "q0sq",
    "q0sq_variance_benchmark",
];
pub const SCAN_HEADER: [&str; 8] = ["N", "T", "r", "phi", "K", "L", "p_hat", "binomial_stderr"];
pub const FIT_HEADER: [&str; 9] = [
    "N",
    "phi",
    "mu_fit",
    "sigma_fit",
    "log_likelihood",
    "n_points",
    "se_mu",
    "se_sigma",
    "status",
];
pub const INTERSECTION_HEADER: [&str; 5] = ["phi", "n_a", "n_b", "r_star", "r_c"];
pub const CONTOUR_HEADER: [&str; 4] = ["N", "phi", "p_target", "r"];
pub const QZERO_HEADER: [&str; 10] = [
    "N",
    "T",
    "r",
    "phi",
    "K",
    "n_feasible",
    "mean_q0sq",
    "var_q0sq",
    "theory_q0sq",
    "z_score",
];
pub const COMPARE_HEADER: [&str; 7] = [
    "phi",
    "alpha",
    "r_measured",
    "r_c_analytic",
    "delta",
    "r_external",
    "parametric_minus_external",
];
pub const EXTERNAL_HEADER: [&str; 2] = ["alpha", "r_c"];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes a header and rows.
pub fn write_table<W: Write>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRow {
    pub measure: String,
    pub phi: f64,
    pub alpha_var: Option<f64>,
    pub alpha_es: Option<f64>,
    pub r_c: f64,
    pub r: Option<f64>,
    pub q0sq: Option<f64>,
    pub q0sq_variance_benchmark: Option<f64>,
}

pub fn write_analytic<W: Write>(out: W, rows: &[AnalyticRow]) -> io::Result<()> {
    write_table(
        out,
        &ANALYTIC_HEADER,
        rows.iter().map(|r| {
            vec![
                r.measure.clone(),
                fmt_f64(r.phi),
                fmt_opt(r.alpha_var),
                fmt_opt(r.alpha_es),
                fmt_f64(r.r_c),
                fmt_opt(r.r),
                fmt_opt(r.q0sq),
                fmt_opt(r.q0sq_variance_benchmark),
            ]
        }),
    )
}

pub fn write_scan<W: Write>(out: W, points: &[PhasePoint]) -> io::Result<()> {
    write_table(
        out,
        &SCAN_HEADER,
        points.iter().map(|p| {
            vec![
                p.n_assets.to_string(),
                p.n_obs.to_string(),
                fmt_f64(p.r()),
                fmt_f64(p.phi),
                p.trials.to_string(),
                p.successes.to_string(),
                fmt_f64(p.p_hat),
                fmt_f64(p.binomial_stderr()),
            ]
        }),
    )
}

/// A fit result for one `(N, φ)` series.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub n_assets: usize,
    pub phi: f64,
    pub fit: std::result::Result<ProbitFit, String>,
}

pub fn write_fits<W: Write>(out: W, rows: &[FitRow]) -> io::Result<()> {
    write_table(
        out,
        &FIT_HEADER,
        rows.iter().map(|r| {
            let mut row = vec![r.n_assets.to_string(), fmt_f64(r.phi)];
            match &r.fit {
                Ok(f) => row.extend([
                    fmt_f64(f.mu_fit),
                    fmt_f64(f.sigma_fit),
                    fmt_f64(f.log_likelihood),
                    f.n_points.to_string(),
                    fmt_f64(f.se_mu),
                    fmt_f64(f.se_sigma),
                    "ok".to_string(),
                ]),
                Err(msg) => {
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(msg.clone());
                }
            }
            row
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionRow {
    pub phi: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub r_star: Option<f64>,
    pub r_c: f64,
}

pub fn write_intersections<W: Write>(out: W, rows: &[IntersectionRow]) -> io::Result<()> {
    write_table(
        out,
        &INTERSECTION_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.phi),
                r.n_a.to_string(),
                r.n_b.to_string(),
                fmt_opt(r.r_star),
                fmt_f64(r.r_c),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourRow {
    pub n_assets: usize,
    pub phi: f64,
    pub p_target: f64,
    pub r: f64,
}

pub fn write_contours<W: Write>(out: W, rows: &[ContourRow]) -> io::Result<()> {
    write_table(
        out,
        &CONTOUR_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n_assets.to_string(),
                fmt_f64(r.phi),
                fmt_f64(r.p_target),
                fmt_f64(r.r),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct QZeroRow {
    pub n_assets: usize,
    pub n_obs: usize,
    pub phi: f64,
    pub trials: usize,
    /// `None` when no trial was feasible.
    pub stats: Option<QZeroStats>,
    /// `None` at or beyond the phase boundary.
    pub theory: Option<f64>,
}

impl QZeroRow {
    /// `(mean − theory) / standard error`.
    pub fn z_score(&self) -> Option<f64> {
        let stats = self.stats.as_ref()?;
        let theory = self.theory?;
        let se = stats.std_error();
        (se > 0.0).then(|| (stats.mean_q0_squared - theory) / se)
    }
}

pub fn write_qzero<W: Write>(out: W, rows: &[QZeroRow]) -> io::Result<()> {
    write_table(
        out,
        &QZERO_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n_assets.to_string(),
                r.n_obs.to_string(),
                fmt_f64(r.n_assets as f64 / r.n_obs as f64),
                fmt_f64(r.phi),
                r.trials.to_string(),
                r.stats.as_ref().map_or(0, |s| s.n_feasible).to_string(),
                fmt_opt(r.stats.as_ref().map(|s| s.mean_q0_squared)),
                fmt_opt(r.stats.as_ref().map(|s| s.variance_q0_squared)),
                fmt_opt(r.theory),
                fmt_opt(r.z_score()),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub phi: f64,
    pub alpha: Option<f64>,
    pub r_measured: Option<f64>,
    pub r_c_analytic: f64,
    pub r_external: Option<f64>,
}

impl CompareRow {
    pub fn delta(&self) -> Option<f64> {
        self.r_measured.map(|m| m - self.r_c_analytic)
    }

    pub fn parametric_minus_external(&self) -> Option<f64> {
        self.r_external.map(|e| self.r_c_analytic - e)
    }
}

pub fn write_compare<W: Write>(out: W, rows: &[CompareRow]) -> io::Result<()> {
    write_table(
        out,
        &COMPARE_HEADER,
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.phi),
                fmt_opt(r.alpha),
                fmt_opt(r.r_measured),
                fmt_f64(r.r_c_analytic),
                fmt_opt(r.delta()),
                fmt_opt(r.r_external),
                fmt_opt(r.parametric_minus_external()),
            ]
        }),
    )
}

/// A parsed CSV file with line numbers kept for diagnostics.
#[derive(Debug, Clone)]
pub struct CsvTable {
    file: String,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl CsvTable {
    pub fn parse<R: Read>(reader: R, file: &str, has_headers: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_headers)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let parse_err = |e: csv::Error| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                file: file.to_string(),
                line,
                message: e.to_string(),
            }
        };
        let headers = if has_headers {
            rdr.headers()
                .map_err(parse_err)?
                .iter()
                .map(str::to_string)
                .collect()
        } else {
            Vec::new()
        };
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(parse_err)?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            rows.push((line, record.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            file: file.to_string(),
            headers,
            rows,
        })
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| self.error(1, format!("missing column '{name}'")))
    }

    pub fn line(&self, row: usize) -> usize {
        self.rows[row].0
    }

    pub fn field(&self, row: usize, col: usize) -> &str {
        &self.rows[row].1[col]
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        self.opt_f64_at(row, col)?
            .ok_or_else(|| self.error(self.line(row), format!("empty value in column {}", col + 1)))
    }

    pub fn opt_f64_at(&self, row: usize, col: usize) -> Result<Option<f64>> {
        let s = self.field(row, col);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| {
            self.error(
                self.line(row),
                format!("column {}: '{s}' is not a number", col + 1),
            )
        })
    }

    pub fn usize_at(&self, row: usize, col: usize) -> Result<usize> {
        let s = self.field(row, col);
        s.parse::<usize>().map_err(|_| {
            self.error(
                self.line(row),
                format!("column {}: '{s}' is not a nonnegative integer", col + 1),
            )
        })
    }
}

/// Reads a scan table. The master seed is not part of the schema and is
/// set to zero.
pub fn read_scan<R: Read>(reader: R, file: &str) -> Result<Vec<PhasePoint>> {
    let t = CsvTable::parse(reader, file, true)?;
    let [n, obs, phi, k, l] = ["N", "T", "phi", "K", "L"].map(|c| t.column(c));
    let (n, obs, phi, k, l) = (n?, obs?, phi?, k?, l?);
    (0..t.len())
        .map(|i| {
            PhasePoint::new(
                t.usize_at(i, n)?,
                t.usize_at(i, obs)?,
                t.f64_at(i, phi)?,
                t.usize_at(i, k)?,
                t.usize_at(i, l)?,
                0,
            )
            .map_err(|e| t.error(t.line(i), e.to_string()))
        })
        .collect()
}

/// Reads `(phi, r_star)` pairs from an intersection table, skipping rows
/// without an intersection.
pub fn read_intersections<R: Read>(reader: R, file: &str) -> Result<Vec<IntersectionRow>> {
    let t = CsvTable::parse(reader, file, true)?;
    let [phi, na, nb, rs, rc] = INTERSECTION_HEADER.map(|c| t.column(c));
    let (phi, na, nb, rs, rc) = (phi?, na?, nb?, rs?, rc?);
    (0..t.len())
        .map(|i| {
            Ok(IntersectionRow {
                phi: t.f64_at(i, phi)?,
                n_a: t.usize_at(i, na)?,
                n_b: t.usize_at(i, nb)?,
                r_star: t.opt_f64_at(i, rs)?,
                r_c: t.f64_at(i, rc)?,
            })
        })
        .collect()
}

/// Reads an externally supplied boundary curve with columns `alpha,r_c`,
/// sorted by `alpha`.
pub fn read_external_boundary<R: Read>(reader: R, file: &str) -> Result<Vec<(f64, f64)>> {
    let t = CsvTable::parse(reader, file, true)?;
    let (a, r) = (t.column("alpha")?, t.column("r_c")?);
    let mut curve = (0..t.len())
        .map(|i| Ok((t.f64_at(i, a)?, t.f64_at(i, r)?)))
        .collect::<Result<Vec<_>>>()?;
    curve.sort_by(|x, y| x.0.total_cmp(&y.0));
    if curve.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(t.error(1, "duplicate alpha values"));
    }
    Ok(curve)
}

/// Reads a square headerless CSV of floats and checks it is positive
/// definite.
pub fn read_covariance<R: Read>(reader: R, file: &str) -> Result<CovMatrix> {
    let t = CsvTable::parse(reader, file, false)?;
    let dim = t.len();
    if dim == 0 {
        return Err(t.error(1, "covariance file is empty"));
    }
    let mut data = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        if t.rows[i].1.len() != dim {
            return Err(t.error(
                t.line(i),
                format!("expected {dim} columns, got {}", t.rows[i].1.len()),
            ));
        }
        for j in 0..dim {
            data.push(t.f64_at(i, j)?);
        }
    }
    let m = CovMatrix::from_row_major(dim, data).map_err(|e| t.error(1, e.to_string()))?;
    cholesky(&m).map_err(|e| t.error(1, e.to_string()))?;
    Ok(m)
}

/// Writes a covariance matrix in the format read by [`read_covariance`].
pub fn write_covariance<W: Write>(out: W, m: &CovMatrix) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    for i in 0..m.dim() {
        w.write_record((0..m.dim()).map(|j| fmt_f64(m.get(i, j))))?;
    }
    w.flush()
}

/// Linear interpolation on a sorted curve; `None` outside its range.
pub fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = curve.first()?;
    let last = curve.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(first.1);
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}
