use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use phasefolio::tables::{
    self, AnalyticRow, CompareRow, ContourRow, FitRow, IntersectionRow, QZeroRow,
};
use phasefolio::{
    alpha_of_phi, contour_r, critical_point_intersection, expected_q0_squared, fit_probit,
    measure_q0, phase_boundary_rc, scan_phase_grid, variance_benchmark_q0_squared, Error, GridCell,
    PhasePoint, Probability, RiskKind, TruthKind,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    code_version: &'a str,
    config: &'a RunConfig,
    outputs: Vec<String>,
    started_unix_s: f64,
    wall_clock_s: f64,
}

/// Tracks outputs and writes the JSON sidecar when the run finishes.
pub struct Run {
    command: &'static str,
    config: RunConfig,
    out_dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
    started_unix_s: f64,
}

impl Run {
    pub fn new(command: &'static str, config: RunConfig) -> CliResult<Self> {
        let out_dir = config.out_dir();
        fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        Ok(Self {
            command,
            config,
            out_dir,
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn write(
        &mut self,
        name: &str,
        emit: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> CliResult<()> {
        let path = self.out_dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        emit(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<Vec<PathBuf>> {
        let sidecar = Sidecar {
            command: self.command,
            code_version: CODE_VERSION,
            config: &self.config,
            outputs: self.outputs.clone(),
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let name = format!("{}.json", self.command);
        self.write(&name, |w| writeln!(w, "{json}"))?;
        Ok(self.outputs.iter().map(|o| self.out_dir.join(o)).collect())
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn truth(cfg: &RunConfig) -> CliResult<TruthKind> {
    match &cfg.cov {
        None => Ok(TruthKind::Iid),
        Some(path) => {
            let sigma = tables::read_covariance(open(path)?, &path.display().to_string())?;
            if let Some(&n) = cfg.n.iter().find(|&&n| n != sigma.dim()) {
                return Err(CliError::Usage(format!(
                    "covariance in {} is {}x{} but --n {n} was requested",
                    path.display(),
                    sigma.dim(),
                    sigma.dim()
                )));
            }
            Ok(TruthKind::Correlated(sigma))
        }
    }
}

pub fn analytic(run: &mut Run) -> CliResult<()> {
    let cfg = run.config().clone();
    let specs = cfg.specs()?;
    let ratios: Vec<Option<f64>> = if cfg.r.is_empty() {
        vec![None]
    } else {
        cfg.r.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for spec in &specs {
        let phi = spec.phi();
        let r_c = phase_boundary_rc(phi)?;
        let alpha_var = alpha_of_phi(RiskKind::VaR, phi)?.value();
        let alpha_es = alpha_of_phi(RiskKind::ES, phi)?.value();
        for &r in &ratios {
            let (q0sq, bench) = match r {
                None => (None, None),
                Some(r) => {
                    if r < 0.0 {
                        return Err(CliError::Usage(format!("--r must be nonnegative, got {r}")));
                    }
                    (
                        expected_q0_squared(phi, r).ok(),
                        variance_benchmark_q0_squared(r).ok(),
                    )
                }
            };
            rows.push(AnalyticRow {
                measure: spec.kind().to_string(),
                phi,
                alpha_var: Some(alpha_var),
                alpha_es: Some(alpha_es),
                r_c,
                r,
                q0sq,
                q0sq_variance_benchmark: bench,
            });
        }
    }
    run.write("analytic.csv", |w| tables::write_analytic(w, &rows))
}

pub fn scan(run: &mut Run) -> CliResult<()> {
    let cfg = run.config().clone();
    let specs = cfg.specs()?;
    let truth = truth(&cfg)?;
    let mut grid = Vec::new();
    for &n in cfg.sizes()? {
        let lengths = cfg.sample_lengths(n)?;
        for spec in &specs {
            for &t in &lengths {
                grid.push(GridCell {
                    n_assets: n,
                    n_obs: t,
                    phi: spec.phi(),
                });
            }
        }
    }
    let points = scan_phase_grid(&grid, cfg.trials()?, cfg.seed(), &truth, cfg.workers())?;
    run.write("scan.csv", |w| tables::write_scan(w, &points))
}

/// Points grouped by `(φ, N)`, ordered by φ then N.
fn series(points: Vec<PhasePoint>) -> BTreeMap<(u64, usize), Vec<PhasePoint>> {
    let mut map: BTreeMap<(u64, usize), Vec<PhasePoint>> = BTreeMap::new();
    for p in points {
        // Positive floats order like their bit patterns.
        map.entry((p.phi.to_bits(), p.n_assets))
            .or_default()
            .push(p);
    }
    map
}

pub fn fit(run: &mut Run) -> CliResult<()> {
    let cfg = run.config().clone();
    if cfg.scan.is_empty() {
        return Err(CliError::Usage("fit needs at least one scan CSV".into()));
    }
    let levels = cfg
        .contour
        .iter()
        .map(|&p| Probability::open(p).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    let mut points = Vec::new();
    for path in &cfg.scan {
        points.extend(tables::read_scan(open(path)?, &path.display().to_string())?);
    }
    let mut fits = Vec::new();
    let mut convergence = Vec::new();
    for ((phi_bits, n), pts) in series(points) {
        let phi = f64::from_bits(phi_bits);
        let fit = fit_probit(&pts).map_err(|e| {
            if matches!(e, Error::Convergence { .. }) {
                convergence.push(format!("N = {n}, phi = {phi}: {e}"));
            }
            e.to_string()
        });
        if let Err(msg) = &fit {
            eprintln!("warning: fit N = {n}, phi = {phi}: {msg}");
        }
        fits.push(FitRow {
            n_assets: n,
            phi,
            fit,
        });
    }
    let mut crossings = Vec::new();
    for (i, a) in fits.iter().enumerate() {
        for b in &fits[i + 1..] {
            if a.phi != b.phi {
                continue;
            }
            if let (Ok(fa), Ok(fb)) = (&a.fit, &b.fit) {
                crossings.push(IntersectionRow {
                    phi: a.phi,
                    n_a: a.n_assets,
                    n_b: b.n_assets,
                    r_star: critical_point_intersection(fa, fb).ok(),
                    r_c: phase_boundary_rc(a.phi)?,
                });
            }
        }
    }
    let mut contours = Vec::new();
    for row in &fits {
        if let Ok(f) = &row.fit {
            for &p in &levels {
                contours.push(ContourRow {
                    n_assets: row.n_assets,
                    phi: row.phi,
                    p_target: p.value(),
                    r: contour_r(f, p)?,
                });
            }
        }
    }
    run.write("fit.csv", |w| tables::write_fits(w, &fits))?;
    run.write("intersections.csv", |w| {
        tables::write_intersections(w, &crossings)
    })?;
    if !levels.is_empty() {
        run.write("contours.csv", |w| tables::write_contours(w, &contours))?;
    }
    if convergence.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence(convergence.join("; ")))
    }
}

pub fn qzero(run: &mut Run) -> CliResult<()> {
    let cfg = run.config().clone();
    let specs = cfg.specs()?;
    let truth = truth(&cfg)?;
    let trials = cfg.trials()?;
    let mut rows = Vec::new();
    for &n in cfg.sizes()? {
        let moments = truth.moments(n)?;
        for spec in &specs {
            for t in cfg.sample_lengths(n)? {
                let r = n as f64 / t as f64;
                let theory = expected_q0_squared(spec.phi(), r).ok();
                if theory.is_none() {
                    eprintln!(
                        "warning: N = {n}, T = {t}: r = {r:.4} is at or beyond r_c = {:.4}",
                        phase_boundary_rc(spec.phi())?
                    );
                }
                let stats =
                    match measure_q0(n, t, spec, trials, cfg.seed(), &moments, cfg.workers()) {
                        Ok(s) => Some(s),
                        Err(Error::EmptyStatistics { .. }) => None,
                        Err(e) => return Err(e.into()),
                    };
                rows.push(QZeroRow {
                    n_assets: n,
                    n_obs: t,
                    phi: spec.phi(),
                    trials,
                    stats,
                    theory,
                });
            }
        }
    }
    run.write("qzero.csv", |w| tables::write_qzero(w, &rows))
}

pub fn compare(run: &mut Run) -> CliResult<()> {
    let cfg = run.config().clone();
    // φ bits → (α, measured values)
    let mut merged: BTreeMap<u64, (Option<f64>, Vec<f64>)> = BTreeMap::new();
    let has_grid = !(cfg.phi.is_empty() && cfg.alpha.is_empty() && cfg.phi_grid.is_none())
        || cfg.measure == Some(RiskKind::Semivariance);
    if has_grid {
        for spec in cfg.specs()? {
            merged.entry(spec.phi().to_bits()).or_default().0 = spec.alpha().map(|a| a.value());
        }
    }
    if let Some(path) = &cfg.intersections {
        for row in tables::read_intersections(open(path)?, &path.display().to_string())? {
            let entry = merged.entry(row.phi.to_bits()).or_default();
            entry.1.extend(row.r_star);
        }
    }
    if merged.is_empty() {
        return Err(CliError::Usage(
            "compare needs --intersections FILE and/or a --phi/--alpha grid".into(),
        ));
    }
    let alpha_kind = match cfg.measure {
        Some(k @ (RiskKind::VaR | RiskKind::ES)) => Some(k),
        _ => None,
    };
    let external = match &cfg.external {
        None => None,
        Some(path) => {
            if alpha_kind.is_none() {
                return Err(CliError::Usage(
                    "an external boundary is indexed by alpha; give --measure var or es".into(),
                ));
            }
            Some(tables::read_external_boundary(
                open(path)?,
                &path.display().to_string(),
            )?)
        }
    };
    let mut rows = Vec::new();
    for (bits, (alpha, measured)) in merged {
        let phi = f64::from_bits(bits);
        let alpha = match (alpha, alpha_kind) {
            (Some(a), _) => Some(a),
            (None, Some(kind)) => Some(alpha_of_phi(kind, phi)?.value()),
            (None, None) => None,
        };
        let r_measured =
            (!measured.is_empty()).then(|| measured.iter().sum::<f64>() / measured.len() as f64);
        let r_external = match (&external, alpha) {
            (Some(curve), Some(a)) => tables::interpolate(curve, a),
            _ => None,
        };
        rows.push(CompareRow {
            phi,
            alpha,
            r_measured,
            r_c_analytic: phase_boundary_rc(phi)?,
            r_external,
        });
    }
    if let Some(curve) = &external {
        if rows.iter().all(|r| r.r_external.is_none()) {
            let (lo, hi) = (curve[0].0, curve[curve.len() - 1].0);
            let asked: Vec<String> = rows
                .iter()
                .filter_map(|r| r.alpha.map(|a| format!("{a:.6}")))
                .collect();
            return Err(CliError::Usage(format!(
                "external boundary covers alpha in [{lo}, {hi}] but the comparison grid asks for [{}]",
                asked.join(", ")
            )));
        }
        for r in &rows {
            if let Some(d) = r.parametric_minus_external() {
                if d < 0.0 {
                    eprintln!(
                        "note: at alpha = {:?} the external boundary lies above the parametric one by {:.4}",
                        r.alpha, -d
                    );
                }
            }
        }
    }
    run.write("compare.csv", |w| tables::write_compare(w, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_are_ordered_by_phi_then_size() {
        let p = |n, phi| PhasePoint::new(n, 2 * n, phi, 10, 5, 0).unwrap();
        let keys: Vec<_> = series(vec![p(128, 2.0), p(64, 2.0), p(64, 0.5), p(64, 2.0)])
            .into_iter()
            .map(|((b, n), v)| (f64::from_bits(b), n, v.len()))
            .collect();
        assert_eq!(keys, vec![(0.5, 64, 1), (2.0, 64, 2), (2.0, 128, 1)]);
    }
}
