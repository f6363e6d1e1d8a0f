//! `shapepose` command-line front end.

mod args;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::Parser;
use nalgebra::{Matrix3, Vector4};
use serde_json::json;

use args::{BasinArgs, BenchArgs, CertifyArgs, Cli, Command, GenerateArgs, IterArgs, Preset, SolveArgs, SynthArgs};
use shapepose::io::{self, CertificateJson, EstimateJson, GncJson, ProblemFile, ResultFile};
use shapepose::scf::{random_quaternion, scf_iterate};
use shapepose::synth::{parse_solvers, run_basin, run_benchmark, BasinConfig, BenchConfig};
use shapepose::{
    certify_with, generate, gnc_solve_masked, solve, GncConfig, Precomputed, RotationMatrix, ScfInit, ShapeProblem,
    Solver, SolverConfig, SynthConfig, UnitQuaternion,
};

/// Successful run whose numerical outcome is negative (not converged or not
/// certified).
const EXIT_NEGATIVE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::FAILURE,
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Bench(a) => cmd_bench(&a).map(|()| true),
        Command::Basin(a) => cmd_basin(&a).map(|()| true),
        Command::Generate(a) => cmd_generate(&a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NEGATIVE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_problem(path: &Path) -> Result<ShapeProblem<f64>> {
    io::parse_problem(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").context("cannot write to stdout")
        }
    }
}

fn parse_init(spec: &str, seed: u64) -> Result<ScfInit<f64>> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "identity" => Ok(ScfInit::Identity),
        "random" => Ok(ScfInit::Quaternion(random_quaternion(seed, 0))),
        other => {
            let v: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("--init expects identity, random, or w,x,y,z; got '{spec}'"))?;
            if v.len() != 4 {
                bail!("--init quaternion needs 4 components, got {}", v.len());
            }
            Ok(ScfInit::Quaternion(UnitQuaternion::new(Vector4::from_column_slice(&v))?))
        }
    }
}

fn solver_config(iter: &IterArgs, multi_start: usize) -> Result<SolverConfig<f64>> {
    let mut cfg = SolverConfig::default();
    cfg.scf.init = parse_init(&iter.init, iter.seed)?;
    cfg.scf.seed = iter.seed;
    cfg.scf.multi_start = multi_start;
    if let Some(tol) = iter.tol {
        cfg.scf.tol = tol;
        cfg.gn.step_tol = tol;
        cfg.lm.step_tol = tol;
    }
    if let Some(n) = iter.max_iters {
        cfg.scf.max_iters = n;
        cfg.gn.max_iters = n;
        cfg.lm.max_iters = n;
    }
    cfg.scf.validate()?;
    cfg.gn.validate()?;
    cfg.lm.validate()?;
    Ok(cfg)
}

fn synth_config(a: &SynthArgs, seed: u64, trials: usize) -> Result<SynthConfig> {
    let base = match a.preset {
        Preset::Default => SynthConfig::default(),
        Preset::HighK => SynthConfig::high_k(),
    };
    let cfg = SynthConfig {
        n: a.n.unwrap_or(base.n),
        k: a.k.unwrap_or(base.k),
        r: a.r.unwrap_or(base.r),
        sigma_m: a.sigma_m,
        lambda: a.lambda.unwrap_or(base.lambda),
        seed,
        trials,
        noise_weights: a.noise_weights,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_mask(path: &Path, n: usize) -> Result<Vec<bool>> {
    let mask: Vec<bool> = io::from_json(&read(path)?).with_context(|| format!("in mask {}", path.display()))?;
    if mask.len() != n {
        bail!("mask has {} entries but the problem has {n} keypoints", mask.len());
    }
    Ok(mask)
}

fn write_trace(path: &Path, pre: &Precomputed<f64>, cfg: &SolverConfig<f64>) -> Result<()> {
    let trace = scf_iterate(pre, cfg.scf.starts()[0], cfg.scf.tol, cfg.scf.max_iters);
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["iteration", "w", "x", "y", "z", "mu", "objective"])?;
    for (t, it) in trace.iterates.iter().enumerate() {
        let q = it.q.coords();
        w.write_record(
            [t as f64 + 1.0, q[0], q[1], q[2], q[3], it.mu, it.objective]
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 { format!("{}", *v as usize) } else { v.to_string() }),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<bool> {
    if a.multi_start > 1 && a.solver != Solver::Scf {
        bail!("--multi-start applies to --solver scf only");
    }
    if a.trace.is_some() && (a.solver != Solver::Scf || a.multi_start > 1) {
        bail!("--trace requires --solver scf with a single start");
    }
    let problem = read_problem(&a.problem)?;
    let cfg = solver_config(&a.iter, a.multi_start)?;

    let (mut est, pre, gnc) = if a.gnc {
        let cbar2 = a.cbar2.ok_or_else(|| anyhow!("--gnc requires --cbar2"))?;
        let gcfg = GncConfig {
            cbar2,
            mu_update: a.mu_update,
            max_iters: a.gnc_max_iters,
            weight_tol: 1e-3,
            inner: a.solver,
            solver: cfg,
        };
        let mask = a.mask.as_deref().map(|p| read_mask(p, problem.n())).transpose()?;
        let res = gnc_solve_masked(&problem, &gcfg, mask.as_deref())?;
        let pre = Precomputed::with_weight_factors(&problem, &res.weights)?;
        (res.estimate.clone(), pre, Some(res))
    } else {
        let pre = Precomputed::new(&problem)?;
        if let Some(path) = &a.trace {
            write_trace(path, &pre, &cfg)?;
        }
        (solve(&pre, a.solver, &cfg)?, pre, None)
    };

    let certificate = if a.certify {
        let cert = certify_with(&pre, est.r.matrix(), a.cert.psd_tol, a.cert.constraints)?;
        est.certified = Some(cert.is_certified());
        Some(CertificateJson::from(&cert))
    } else {
        None
    };
    let converged = est.converged && gnc.as_ref().is_none_or(|g| g.converged);
    let file = ResultFile {
        solver: a.solver.to_string(),
        estimate: EstimateJson::from(&est),
        certificate,
        gnc: gnc.as_ref().map(GncJson::from),
    };
    write_output(a.output.as_deref(), &io::to_json(&file))?;
    if !converged {
        eprintln!("warning: solver did not converge after {} iterations", est.iterations);
    }
    Ok(converged)
}

/// Reads the candidate rotation from a result file, a bare estimate, or an
/// object with just `r` (row-major) or `q` (scalar first).
fn candidate_rotation(text: &str) -> Result<Matrix3<f64>> {
    let v: serde_json::Value = io::from_json(text)?;
    let obj = v.get("estimate").unwrap_or(&v);
    if let Some(r) = obj.get("r") {
        let r: [f64; 9] = serde_json::from_value(r.clone()).context("\"r\" must be 9 numbers")?;
        return Ok(RotationMatrix::new(Matrix3::from_row_slice(&r))?.into_inner());
    }
    if let Some(q) = obj.get("q") {
        let q: [f64; 4] = serde_json::from_value(q.clone()).context("\"q\" must be 4 numbers")?;
        return Ok(UnitQuaternion::new(Vector4::from(q))?.to_rotation_matrix().into_inner());
    }
    bail!("candidate has neither \"r\" nor \"q\"")
}

fn cmd_certify(a: &CertifyArgs) -> Result<bool> {
    let problem = read_problem(&a.problem)?;
    let r = candidate_rotation(&read(&a.result)?).with_context(|| format!("in {}", a.result.display()))?;
    let pre = Precomputed::new(&problem)?;
    let cert = certify_with(&pre, &r, a.cert.psd_tol, a.cert.constraints)?;
    write_output(a.output.as_deref(), &io::to_json(&CertificateJson::from(&cert)))?;
    Ok(cert.is_certified())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let synth = synth_config(&a.synth, a.iter.seed, a.trials)?;
    let solver = solver_config(&a.iter, 1)?;
    let init = solver.scf.starts()[0];
    let cfg = BenchConfig {
        synth,
        solvers: parse_solvers(&a.solver)?,
        warmup: a.warmup,
        parallel: a.parallel,
        init,
        psd_tol: a.cert.psd_tol,
        constraints: a.cert.constraints,
        solver,
    };
    let report = run_benchmark(&cfg)?;

    fs::create_dir_all(&a.output).with_context(|| format!("cannot create {}", a.output.display()))?;
    let csv_path = a.output.join("results.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let summary = serde_json::to_string_pretty(&report.summary_json())?;
    write_output(Some(&a.output.join("summary.json")), &summary)?;

    println!(
        "{:<6} {:>14} {:>14} {:>10} {:>14}",
        "solver", "mean (ms)", "p90 (ms)", "certified", "median rot (°)"
    );
    for s in &report.summaries {
        println!(
            "{:<6} {:>14.4} {:>14.4} {:>9.1}% {:>14.4}",
            s.solver,
            s.mean_runtime * 1e3,
            s.p90_runtime * 1e3,
            s.certification_rate * 100.0,
            s.rotation_error_median
        );
    }
    Ok(())
}

fn cmd_basin(a: &BasinArgs) -> Result<()> {
    let problem = match &a.problem {
        Some(path) => read_problem(path)?,
        None => generate::<f64>(&synth_config(&a.synth, a.seed, 1)?, a.trial)?.0,
    };
    let pre = Precomputed::new(&problem)?;
    let cfg = BasinConfig {
        samples: a.samples,
        seed: a.seed,
        tol: a.tol,
        max_iters: a.max_iters,
        cluster_deg: a.cluster_deg,
    };
    let map = run_basin(&pre, &cfg)?;
    match &a.output {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
            map.write_csv(std::io::BufWriter::new(file))?
        }
        None => map.write_csv(std::io::stdout().lock())?,
    }
    if let Some(path) = &a.minima {
        let minima: Vec<_> = map
            .minima
            .iter()
            .enumerate()
            .map(|(label, m)| {
                let q = m.q.coords();
                json!({"label": label, "q": [q[0], q[1], q[2], q[3]], "objective": m.objective, "count": m.count})
            })
            .collect();
        write_output(Some(path), &serde_json::to_string_pretty(&minima)?)?;
    }
    let stalled = map.points.iter().filter(|p| !p.converged).count();
    eprintln!("{} distinct minima from {} starts ({stalled} hit max_iters)", map.labels(), a.samples);
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = synth_config(&a.synth, a.seed, 1)?;
    let (problem, gt) = generate::<f64>(&cfg, a.trial)?;
    write_output(a.output.as_deref(), &io::to_json(&ProblemFile::from_problem(&problem)))?;
    if let Some(path) = &a.truth {
        let r = RotationMatrix::new(gt.r)?;
        let q = r.to_quaternion();
        let q = q.coords();
        let m = r.matrix();
        let truth = json!({
            "q": [q[0], q[1], q[2], q[3]],
            "r": (0..9).map(|i| m[(i / 3, i % 3)]).collect::<Vec<_>>(),
            "p": [gt.p.x, gt.p.y, gt.p.z],
            "c": gt.c.as_slice(),
        });
        write_output(Some(path), &serde_json::to_string_pretty(&truth)?)?;
    }
    Ok(())
}
