//! Monte-Carlo solver comparison on synthetic problems.
//!
//! Every solver gets the same problem and the same initial rotation in each
//! trial. Runtimes are measured around the solver call only (`runtime`) and
//! around precompute plus solve (`runtime_total`); generation, certification
//! of plain solvers, and I/O are excluded. The `scf*` entry times SCF
//! followed by certification.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::{ConstraintForm, StandardForm};
use crate::error::{invalid, Error, Result};
use crate::model::Precomputed;
use crate::quat::UnitQuaternion;
use crate::scf::ScfInit;
use crate::solver::{solve, Solver, SolverConfig};

use super::metrics::{position_error, rotation_error, shape_error, within_5deg5cm};
use super::{generate, SynthConfig};

/// A benchmark column: a solver, optionally followed by certification
/// inside the timed region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BenchSolver {
    pub solver: Solver,
    pub certify: bool,
}

impl BenchSolver {
    pub const SCF: Self = Self::plain(Solver::Scf);
    pub const SCF_STAR: Self = Self {
        solver: Solver::Scf,
        certify: true,
    };
    pub const GN: Self = Self::plain(Solver::Gn);
    pub const LM: Self = Self::plain(Solver::Lm);

    pub const fn plain(solver: Solver) -> Self {
        Self { solver, certify: false }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::SCF, Self::SCF_STAR, Self::GN, Self::LM]
    }
}

impl fmt::Display for BenchSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.solver, if self.certify { "*" } else { "" })
    }
}

impl FromStr for BenchSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_suffix('*') {
            Some(base) => Ok(Self {
                solver: base.parse()?,
                certify: true,
            }),
            None => Ok(Self::plain(s.parse()?)),
        }
    }
}

/// Parses a comma-separated solver list such as `scf,scf*,gn,lm`.
pub fn parse_solvers(list: &str) -> Result<Vec<BenchSolver>> {
    let solvers: Vec<BenchSolver> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if solvers.is_empty() {
        return Err(invalid("empty solver list"));
    }
    Ok(solvers)
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub synth: SynthConfig,
    pub solvers: Vec<BenchSolver>,
    /// Discarded trials run before measurement to warm caches.
    pub warmup: usize,
    pub parallel: bool,
    /// Initial guess shared by all solvers.
    pub init: UnitQuaternion<f64>,
    pub psd_tol: f64,
    pub constraints: ConstraintForm,
    pub solver: SolverConfig<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            solvers: BenchSolver::all(),
            warmup: 10,
            parallel: false,
            init: UnitQuaternion::identity(),
            psd_tol: crate::cert::DEFAULT_PSD_TOL,
            constraints: ConstraintForm::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub solver: String,
    pub sigma_m: f64,
    pub rotation_error: f64,
    pub position_error: f64,
    pub shape_error: f64,
    pub objective: f64,
    /// Solver-only wall time (s).
    pub runtime: f64,
    /// Precompute plus solver wall time (s).
    pub runtime_total: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certified: bool,
    pub min_eig_s: f64,
    pub init_w: f64,
    pub init_x: f64,
    pub init_y: f64,
    pub init_z: f64,
}

impl TrialResult {
    /// The row without wall-clock columns, for determinism checks.
    pub fn accuracy_only(&self) -> Self {
        Self {
            runtime: 0.0,
            runtime_total: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    pub trials: usize,
    pub mean_runtime: f64,
    pub p90_runtime: f64,
    pub mean_runtime_total: f64,
    pub p90_runtime_total: f64,
    pub rotation_error_mean: f64,
    pub rotation_error_p10: f64,
    pub rotation_error_median: f64,
    pub rotation_error_p90: f64,
    pub rotation_error_max: f64,
    pub position_error_median: f64,
    pub within_5deg5cm_rate: f64,
    pub certification_rate: f64,
    pub converged_rate: f64,
    pub mean_iterations: f64,
    pub median_iterations: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub synth: SynthConfig,
    pub rows: Vec<TrialResult>,
    pub summaries: Vec<SolverSummary>,
}

/// Linear-interpolation quantile of unsorted data; `NaN` when empty.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn mean(data: &[f64]) -> f64 {
    if data.is_empty() {
        f64::NAN
    } else {
        data.iter().sum::<f64>() / data.len() as f64
    }
}

fn run_trial(cfg: &BenchConfig, trial: u64) -> Result<Vec<TrialResult>> {
    let (problem, gt) = generate::<f64>(&cfg.synth, trial)?;
    let mut solver_cfg = cfg.solver.clone();
    solver_cfg.scf.init = ScfInit::Quaternion(cfg.init);

    let t0 = Instant::now();
    let pre = Precomputed::new(&problem)?;
    let t_pre = t0.elapsed().as_secs_f64();

    let mut rows = Vec::with_capacity(cfg.solvers.len());
    for entry in &cfg.solvers {
        let start = Instant::now();
        let est = solve(&pre, entry.solver, &solver_cfg)?;
        let timed_cert = if entry.certify {
            Some(StandardForm::with_form(&pre, cfg.constraints).certify(est.r.matrix(), cfg.psd_tol)?)
        } else {
            None
        };
        let runtime = start.elapsed().as_secs_f64();
        let cert = match timed_cert {
            Some(c) => c,
            None => StandardForm::with_form(&pre, cfg.constraints).certify(est.r.matrix(), cfg.psd_tol)?,
        };
        let rot = rotation_error(est.r.matrix(), &gt.r);
        let init = cfg.init.coords();
        rows.push(TrialResult {
            trial,
            solver: entry.to_string(),
            sigma_m: cfg.synth.sigma_m,
            rotation_error: rot,
            position_error: position_error(&est.p, &gt.p),
            shape_error: shape_error(&est.c, &gt.c),
            objective: est.objective,
            runtime,
            runtime_total: runtime + t_pre,
            iterations: est.iterations,
            converged: est.converged,
            certified: cert.is_certified(),
            min_eig_s: cert.min_eig_s,
            init_w: init[0],
            init_x: init[1],
            init_y: init[2],
            init_z: init[3],
        });
    }
    Ok(rows)
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.synth.validate()?;
    if cfg.solvers.is_empty() {
        return Err(invalid("benchmark needs at least one solver"));
    }
    let trials = cfg.synth.trials as u64;
    // warm-up problems live on streams after the measured ones
    for t in 0..cfg.warmup as u64 {
        run_trial(cfg, trials + t)?;
    }
    let per_trial: Vec<Vec<TrialResult>> = if cfg.parallel {
        (0..trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<_>>()?
    } else {
        (0..trials).map(|t| run_trial(cfg, t)).collect::<Result<_>>()?
    };
    let rows: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let summaries = cfg
        .solvers
        .iter()
        .map(|s| summarize(&s.to_string(), &rows))
        .collect();
    Ok(BenchReport {
        synth: cfg.synth.clone(),
        rows,
        summaries,
    })
}

fn summarize(name: &str, rows: &[TrialResult]) -> SolverSummary {
    let mine: Vec<&TrialResult> = rows.iter().filter(|r| r.solver == name).collect();
    let col = |f: fn(&TrialResult) -> f64| mine.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let rate = |f: fn(&TrialResult) -> bool| {
        mine.iter().filter(|r| f(r)).count() as f64 / mine.len().max(1) as f64
    };
    let runtime = col(|r| r.runtime);
    let total = col(|r| r.runtime_total);
    let rot = col(|r| r.rotation_error);
    let iters = col(|r| r.iterations as f64);
    SolverSummary {
        solver: name.to_owned(),
        trials: mine.len(),
        mean_runtime: mean(&runtime),
        p90_runtime: quantile(&runtime, 0.9),
        mean_runtime_total: mean(&total),
        p90_runtime_total: quantile(&total, 0.9),
        rotation_error_mean: mean(&rot),
        rotation_error_p10: quantile(&rot, 0.1),
        rotation_error_median: quantile(&rot, 0.5),
        rotation_error_p90: quantile(&rot, 0.9),
        rotation_error_max: rot.iter().copied().fold(f64::NAN, f64::max),
        position_error_median: quantile(&col(|r| r.position_error), 0.5),
        within_5deg5cm_rate: rate(|r| within_5deg5cm(r.rotation_error, r.position_error)),
        certification_rate: rate(|r| r.certified),
        converged_rate: rate(|r| r.converged),
        mean_iterations: mean(&iters),
        median_iterations: quantile(&iters, 0.5),
    }
}

impl BenchReport {
    pub fn summary(&self, solver: &str) -> Option<&SolverSummary> {
        self.summaries.iter().find(|s| s.solver == solver)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.synth,
            "solvers": self.summaries,
        })
    }
}
