//! Run configuration: TOML file merged with command-line flags (flags win).

use std::path::{Path, PathBuf};

use clap::Args;
use phasefolio::{GridCell, RiskKind, RiskSpec, Workers};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_R_GRID: &str = "0.5:1.1:0.025";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Risk measure: var, es, semivariance or phi.
    #[arg(long)]
    pub measure: Option<RiskKind>,
    /// Confidence level for var/es (repeatable).
    #[arg(long)]
    pub alpha: Vec<f64>,
    /// Tail factor (repeatable).
    #[arg(long)]
    pub phi: Vec<f64>,
    /// Tail-factor grid `min:max:step`.
    #[arg(long, value_name = "MIN:MAX:STEP")]
    pub phi_grid: Option<String>,
    /// Portfolio size (repeatable).
    #[arg(long = "n", value_name = "N")]
    pub n: Vec<usize>,
    /// Aspect-ratio grid `min:max:step`; T = round(N/r).
    #[arg(long, value_name = "MIN:MAX:STEP")]
    pub r_grid: Option<String>,
    /// Sample length (repeatable); overrides the r grid.
    #[arg(long = "t", value_name = "T")]
    pub t: Vec<usize>,
    /// Aspect ratio (repeatable); overrides the r grid.
    #[arg(long = "r", value_name = "R")]
    pub r: Vec<f64>,
    /// Monte Carlo trials per grid point.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Square CSV covariance for a correlated zero-mean truth.
    #[arg(long, value_name = "FILE")]
    pub cov: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Everything a run depends on. Serialized into each output sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub measure: Option<RiskKind>,
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_grid: Option<String>,
    pub n: Vec<usize>,
    pub r_grid: Option<String>,
    pub t: Vec<usize>,
    pub r: Vec<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub cov: Option<PathBuf>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Scan tables read by `fit`.
    pub scan: Vec<PathBuf>,
    /// Contour levels for `fit`.
    pub contour: Vec<f64>,
    /// Intersection table read by `compare`.
    pub intersections: Option<PathBuf>,
    /// External boundary curve (`alpha,r_c`) read by `compare`.
    pub external: Option<PathBuf>,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn pick_vec<T>(flag: Vec<T>, file: Vec<T>) -> Vec<T> {
    if flag.is_empty() {
        file
    } else {
        flag
    }
}

impl RunConfig {
    pub fn from_common(c: CommonArgs) -> Self {
        Self {
            measure: c.measure,
            alpha: c.alpha,
            phi: c.phi,
            phi_grid: c.phi_grid,
            n: c.n,
            r_grid: c.r_grid,
            t: c.t,
            r: c.r,
            trials: c.trials,
            seed: c.seed,
            cov: c.cov,
            workers: c.workers,
            out: c.out,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Fields set on `self` (the flags) win over `file`.
    pub fn over(self, file: RunConfig) -> Self {
        Self {
            measure: pick(self.measure, file.measure),
            alpha: pick_vec(self.alpha, file.alpha),
            phi: pick_vec(self.phi, file.phi),
            phi_grid: pick(self.phi_grid, file.phi_grid),
            n: pick_vec(self.n, file.n),
            r_grid: pick(self.r_grid, file.r_grid),
            t: pick_vec(self.t, file.t),
            r: pick_vec(self.r, file.r),
            trials: pick(self.trials, file.trials),
            seed: pick(self.seed, file.seed),
            cov: pick(self.cov, file.cov),
            workers: pick(self.workers, file.workers),
            out: pick(self.out, file.out),
            scan: pick_vec(self.scan, file.scan),
            contour: pick_vec(self.contour, file.contour),
            intersections: pick(self.intersections, file.intersections),
            external: pick(self.external, file.external),
        }
    }

    /// Fills the defaults that affect results so the sidecar is complete.
    pub fn with_defaults(mut self, trials: usize) -> Self {
        self.trials.get_or_insert(trials);
        self.seed.get_or_insert(1);
        self.workers.get_or_insert(0);
        self.out.get_or_insert_with(|| PathBuf::from("."));
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn workers(&self) -> Workers {
        Workers::from_count(self.workers.unwrap_or(0))
    }

    pub fn trials(&self) -> CliResult<usize> {
        match self.trials {
            Some(0) => Err(CliError::Usage("--trials must be at least 1".into())),
            Some(k) => Ok(k),
            None => Err(CliError::Internal("trials default not filled".into())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    /// Risk measures requested by `--measure` with `--alpha`/`--phi`.
    pub fn specs(&self) -> CliResult<Vec<RiskSpec>> {
        let mut phis = self.phi.clone();
        if let Some(g) = &self.phi_grid {
            phis.extend(parse_grid(g, "--phi-grid")?);
        }
        let kind = match self.measure {
            Some(k) => k,
            None if !self.alpha.is_empty() => {
                return Err(CliError::Usage("--alpha needs --measure var or es".into()))
            }
            None => RiskKind::RawPhi,
        };
        let specs: Vec<RiskSpec> = match kind {
            RiskKind::Semivariance => {
                if !phis.is_empty() || !self.alpha.is_empty() {
                    return Err(CliError::Usage(
                        "semivariance has a fixed phi; drop --phi/--alpha".into(),
                    ));
                }
                vec![RiskSpec::semivariance()]
            }
            RiskKind::VaR | RiskKind::ES => {
                if !phis.is_empty() {
                    return Err(CliError::Usage(format!(
                        "--measure {kind} takes --alpha, not --phi"
                    )));
                }
                self.alpha
                    .iter()
                    .map(|&a| RiskSpec::from_parts(kind, Some(a), None).map_err(CliError::from))
                    .collect::<CliResult<_>>()?
            }
            RiskKind::RawPhi => {
                if !self.alpha.is_empty() {
                    return Err(CliError::Usage(
                        "--measure phi takes --phi, not --alpha".into(),
                    ));
                }
                phis.iter()
                    .map(|&p| RiskSpec::raw_phi(p).map_err(CliError::from))
                    .collect::<CliResult<_>>()?
            }
        };
        if specs.is_empty() {
            return Err(CliError::Usage(format!(
                "no risk measure grid: give --phi/--phi-grid, or --alpha with --measure {kind}"
            )));
        }
        Ok(specs)
    }

    pub fn sizes(&self) -> CliResult<&[usize]> {
        if self.n.is_empty() {
            return Err(CliError::Usage("give at least one --n".into()));
        }
        if let Some(&bad) = self.n.iter().find(|&&n| n == 0) {
            return Err(CliError::Usage(format!("--n must be positive, got {bad}")));
        }
        Ok(&self.n)
    }

    /// Sample lengths for size `n`: `--t`, else `--r`, else the r grid.
    /// Repeated T values from rounding are dropped.
    pub fn sample_lengths(&self, n: usize) -> CliResult<Vec<usize>> {
        if !self.t.is_empty() {
            if let Some(&bad) = self.t.iter().find(|&&t| t < 2) {
                return Err(CliError::Usage(format!(
                    "--t must be at least 2, got {bad}"
                )));
            }
            return Ok(self.t.clone());
        }
        let ratios = if !self.r.is_empty() {
            self.r.clone()
        } else {
            parse_grid(self.r_grid.as_deref().unwrap_or(DEFAULT_R_GRID), "--r-grid")?
        };
        let mut out: Vec<usize> = Vec::new();
        for r in ratios {
            let cell = GridCell::from_ratio(n, r, 1.0)?;
            if out.last() != Some(&cell.n_obs) {
                out.push(cell.n_obs);
            }
        }
        Ok(out)
    }
}

/// Parses `min:max:step` into `min, min + step, …` up to `max`.
pub fn parse_grid(text: &str, flag: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Usage(format!("{flag} '{text}': {why}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected min:max:step"));
    }
    let mut v = [0.0_f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|_| bad("not a number"))?;
    }
    let [min, max, step] = v;
    if !(min.is_finite() && max.is_finite() && step > 0.0 && step.is_finite()) {
        return Err(bad("step must be positive and bounds finite"));
    }
    if max < min {
        return Err(bad("max is below min"));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(bad("grid has more than 100000 points"));
    }
    Ok((0..count).map(|i| min + step * i as f64).collect())
}
