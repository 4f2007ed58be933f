//! The `run`, `sweep` and `inspect` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, ExperimentConfig};
use crate::error::{invalid, Error, Result};
use crate::operator::{
    densify, hs_norm, natural_grid, read_operator, spreading_to_symbol, support_box, symbol_sup_norm,
    symbol_to_spreading, write_operator, OperatorRep, SpreadingGrid, SUPPORT_THRESHOLD,
};
use crate::pipeline::{build_theorem1, build_theorem2, verify_obstruction, BudgetSplit, Construction, TheoremSetup};
use crate::signal::SampledSignal;
use crate::synth::{energy_report, synthesize, write_coefficients, EnergyReport, SynthesisConfig};

/// Exit codes: converged, error, not converged.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// What a single run produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub converged: bool,
    pub residual: f64,
    pub achieved_error: f64,
    pub energy_ratio: f64,
    pub hs_norm: f64,
    pub symbol_sup: f64,
    pub epsilon: f64,
    pub status: String,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} converged={} achieved_error={:.6e} epsilon={:.6e} residual={:.6e} energy_ratio={:.6e} hs_norm={:.6e} symbol_sup={:.6e} status=\"{}\"",
            self.experiment,
            self.converged,
            self.achieved_error,
            self.epsilon,
            self.residual,
            self.energy_ratio,
            self.hs_norm,
            self.symbol_sup,
            self.status
        )
    }
}

fn write_signal(dir: &Path, name: &str, s: &SampledSignal) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    s.write_columnar(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Absolute epsilon for a target.
fn epsilon_for(cfg: &ExperimentConfig, y: &SampledSignal) -> f64 {
    if cfg.epsilon_relative {
        cfg.epsilon * y.l2_norm()
    } else {
        cfg.epsilon
    }
}

fn setup_for(cfg: &ExperimentConfig, y: &SampledSignal) -> Result<TheoremSetup> {
    let synthesis = SynthesisConfig {
        alpha: cfg.alpha,
        b: 1.0,
        extent_factor: cfg.extent_factor,
        lambda: cfg.lambda[0],
        oversample: cfg.oversample,
        solver: cfg.solver,
    };
    let budget = BudgetSplit::new(epsilon_for(cfg, y), cfg.c)?;
    let mut setup = TheoremSetup::new(cfg.alpha, cfg.width(), budget, synthesis);
    setup.lambda_schedule = cfg.lambda.clone();
    setup.fixed_b = cfg.fixed_b;
    setup.fixed_delta = cfg.fixed_delta;
    Ok(setup)
}

/// Runs the configured experiment and writes its artefacts into
/// `cfg.output_dir`.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunSummary> {
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = cfg.output_dir.as_path();
    let grid = cfg.grid.build()?;
    match cfg.experiment {
        Experiment::T1 | Experiment::T2 => {
            let y = cfg.target.as_ref().expect("checked by config").build(&grid)?;
            let setup = setup_for(cfg, &y)?;
            let mut c: Construction =
                if cfg.experiment == Experiment::T1 { build_theorem1(&y, &setup)? } else { build_theorem2(&y, &setup)? };
            c.report.seed = Some(cfg.seed);
            write_json(&dir.join("report.json"), &c.report)?;
            write_signal(dir, "input.txt", &c.input)?;
            write_signal(dir, "output.txt", &c.output)?;
            write_signal(dir, "target.txt", &c.target)?;
            write_signal(dir, if cfg.experiment == Experiment::T1 { "m.txt" } else { "h_hat.txt" }, &c.multiplier)?;
            write_signal(dir, "smoothing.txt", &c.smoothing)?;
            write_operator(&c.op, dir, "operator")?;
            let r = &c.report;
            Ok(RunSummary {
                experiment: cfg.experiment.name().into(),
                converged: r.converged,
                residual: r.residual,
                achieved_error: r.achieved_error,
                energy_ratio: r.energy_ratio,
                hs_norm: r.hs_norm,
                symbol_sup: r.symbol_sup,
                epsilon: r.budget.epsilon,
                status: r.status.clone(),
            })
        }
        Experiment::Obstruction => {
            let n = cfg.shift.expect("checked by config");
            let r = verify_obstruction(cfg.alpha, n, &grid, cfg.seed, &[])?;
            write_json(&dir.join("obstruction.json"), &r)?;
            let tol = 1e-6;
            let holds = r.holds(tol, 1e-8);
            Ok(RunSummary {
                experiment: "obstruction".into(),
                converged: holds,
                residual: f64::NAN,
                achieved_error: r.min_error,
                energy_ratio: f64::NAN,
                hs_norm: f64::NAN,
                symbol_sup: f64::NAN,
                epsilon: 1.0 - tol,
                status: format!(
                    "min_error={:.12} max_outside_fraction={:.3e} trials={}",
                    r.min_error,
                    r.max_outside_fraction,
                    r.trials.len()
                ),
            })
        }
        Experiment::Synth => {
            let y = cfg.target.as_ref().expect("checked by config").build(&grid)?;
            let b = cfg.fixed_b.expect("checked by config");
            let eps = epsilon_for(cfg, &y);
            let mut last = None;
            for &lambda in &cfg.lambda {
                let sc = SynthesisConfig {
                    alpha: cfg.alpha,
                    b,
                    extent_factor: cfg.extent_factor,
                    lambda,
                    oversample: cfg.oversample,
                    solver: cfg.solver,
                };
                let r = synthesize(&y, &sc)?;
                let done = r.residual < eps;
                last = Some(r);
                if done {
                    break;
                }
            }
            let r = last.expect("lambda list is non-empty");
            #[derive(Serialize)]
            struct SynthReport {
                alpha: f64,
                #[serde(rename = "B")]
                b: f64,
                lambda: f64,
                residual: f64,
                leakage: f64,
                epsilon: f64,
                energy: EnergyReport,
                seed: u64,
            }
            let energy = energy_report(&r);
            write_json(
                &dir.join("synthesis.json"),
                &SynthReport { alpha: cfg.alpha, b, lambda: r.lambda, residual: r.residual, leakage: r.leakage, epsilon: eps, energy, seed: cfg.seed },
            )?;
            write_signal(dir, "m.txt", &r.m)?;
            write_signal(dir, "target.txt", &y)?;
            let mut w = BufWriter::new(File::create(dir.join("coefficients.txt"))?);
            write_coefficients(&r.basis, &r.coefficients, &mut w)?;
            w.flush()?;
            let converged = r.residual < eps;
            Ok(RunSummary {
                experiment: "synth".into(),
                converged,
                residual: r.residual,
                achieved_error: r.residual,
                energy_ratio: r.energy_ratio,
                hs_norm: f64::NAN,
                symbol_sup: r.m.sup_norm(),
                epsilon: eps,
                status: if converged { "converged".into() } else { "residual above epsilon".into() },
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    B,
    Lambda,
    Alpha,
    Delta,
    Epsilon,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "B" | "b" => SweepParam::B,
            "lambda" => SweepParam::Lambda,
            "alpha" => SweepParam::Alpha,
            "delta" => SweepParam::Delta,
            "epsilon" => SweepParam::Epsilon,
            _ => return invalid(format!("sweep parameter must be one of B, lambda, alpha, delta, epsilon; got {s:?}")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::B => "B",
            SweepParam::Lambda => "lambda",
            SweepParam::Alpha => "alpha",
            SweepParam::Delta => "delta",
            SweepParam::Epsilon => "epsilon",
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig, v: f64) {
        match self {
            SweepParam::B => cfg.fixed_b = Some(v),
            SweepParam::Lambda => cfg.lambda = vec![v],
            SweepParam::Alpha => cfg.alpha = v,
            SweepParam::Delta => cfg.fixed_delta = Some(v),
            SweepParam::Epsilon => cfg.epsilon = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub residual: f64,
    pub achieved_error: f64,
    pub energy_ratio: f64,
    pub hs_norm: f64,
    pub symbol_sup: f64,
    pub converged: bool,
    pub status: String,
}

/// Runs one pipeline per value (in parallel, each into its own
/// subdirectory) and writes `sweep_<param>.csv` in value order. Failed runs
/// become rows with `NaN` measurements and the error in `status`.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<(Vec<SweepRow>, PathBuf)> {
    if values.is_empty() {
        return invalid("sweep needs at least one value");
    }
    if cfg.experiment == Experiment::Obstruction {
        return invalid("the obstruction experiment has no sweep parameters");
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = cfg.clone();
            param.apply(&mut c, v);
            c.output_dir = cfg.output_dir.join(format!("sweep_{}", param.name())).join(format!("{i:03}"));
            match run_config(&c) {
                Ok(s) => SweepRow {
                    value: v,
                    residual: s.residual,
                    achieved_error: s.achieved_error,
                    energy_ratio: s.energy_ratio,
                    hs_norm: s.hs_norm,
                    symbol_sup: s.symbol_sup,
                    converged: s.converged,
                    status: s.status,
                },
                Err(e) => SweepRow {
                    value: v,
                    residual: f64::NAN,
                    achieved_error: f64::NAN,
                    energy_ratio: f64::NAN,
                    hs_norm: f64::NAN,
                    symbol_sup: f64::NAN,
                    converged: false,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect();
    let path = cfg.output_dir.join(format!("sweep_{}.csv", param.name()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    for r in &rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok((rows, path))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InspectFlags {
    pub symbol: bool,
    pub spreading: bool,
    pub hs_norm: bool,
    pub check_involution: bool,
}

/// The spreading grid of an operator: the stored grid for dense operators,
/// the smallest covering grid otherwise.
pub fn spreading_of(op: &OperatorRep) -> Result<SpreadingGrid> {
    match op {
        OperatorRep::Dense(eta) => Ok(eta.clone()),
        _ => densify(op, &natural_grid(op)?),
    }
}

/// Prints the requested quantities for a stored operator, writing grids next
/// to it as `<stem>.symbol.txt` / `<stem>.spreading.txt`. Returns the lines
/// printed.
pub fn inspect(path: &Path, flags: InspectFlags) -> Result<Vec<String>> {
    let op = read_operator(path)?;
    let mut out = vec![format!("kind={}", op.kind())];
    let stem = path.with_extension("");
    if flags.hs_norm {
        out.push(format!("hs_norm={:.17e}", hs_norm(&op)?));
    }
    let any = flags.symbol || flags.spreading || flags.check_involution || flags.hs_norm;
    if !any {
        match hs_norm(&op) {
            Ok(v) => out.push(format!("hs_norm={v:.17e}")),
            Err(e) => out.push(format!("hs_norm=undefined ({e})")),
        }
        out.push(format!("symbol_sup={:.17e}", symbol_sup_norm(&op)));
        match support_box(&op, SUPPORT_THRESHOLD)? {
            Some(b) => out.push(format!("support_box=[{}, {}] x [{}, {}]", b.t_min, b.t_max, b.v_min, b.v_max)),
            None => out.push("support_box=empty".into()),
        }
    }
    if flags.spreading || flags.symbol || flags.check_involution {
        let eta = spreading_of(&op)?;
        if flags.spreading {
            let p = PathBuf::from(format!("{}.spreading.txt", stem.display()));
            let mut w = BufWriter::new(File::create(&p)?);
            eta.write_text(&mut w)?;
            w.flush()?;
            out.push(format!("spreading={}", p.display()));
        }
        let sigma = spreading_to_symbol(&eta);
        if flags.symbol {
            let p = PathBuf::from(format!("{}.symbol.txt", stem.display()));
            let mut w = BufWriter::new(File::create(&p)?);
            sigma.write_text(&mut w)?;
            w.flush()?;
            out.push(format!("symbol={}", p.display()));
        }
        if flags.check_involution {
            let back = symbol_to_spreading(&sigma);
            let norm = eta.l2_norm();
            let err = if norm == 0.0 { back.l2_norm() } else { back.sub(&eta)?.l2_norm() / norm };
            out.push(format!("involution_error={err:.3e}"));
        }
    }
    Ok(out)
}
