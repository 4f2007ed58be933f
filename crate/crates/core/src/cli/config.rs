//! Experiment configuration: flat `key = value` lines with dotted sections.
//!
//! ```text
//! # theorem-1 desk run
//! experiment = t1
//! grid.half_width = 16
//! grid.n = 4096
//! target.kind = sinusoid
//! target.beta = 1.5
//! target.window = 2
//! box.alpha = 1
//! box.gamma = 1
//! budget.epsilon = 0.1
//! synth.lambda = 1e-6, 1e-8, 1e-10
//! ```
//!
//! `#` starts a comment. Unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::default_schedule;
use crate::signal::{make_grid, Grid1D, SampledSignal, SignalKind};
use crate::synth::SolveMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Box input.
    T1,
    /// Sinc input.
    T2,
    Obstruction,
    /// Synthesis only, no operator.
    Synth,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::T1 => "t1",
            Experiment::T2 => "t2",
            Experiment::Obstruction => "obstruction",
            Experiment::Synth => "synth",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub center: f64,
    pub half_width: f64,
    pub n: usize,
    /// Move every node by half a step, so that integer multiples of `dx`
    /// fall on cell edges.
    pub half_shift: bool,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        let g = make_grid(self.center, self.half_width, self.n)?;
        if self.half_shift {
            Grid1D::new(g.x0() + 0.5 * g.dx(), g.dx(), g.n())
        } else {
            Ok(g)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetSource {
    Kind(SignalKind),
    /// Inverse transform of the band indicator on the dual grid: exactly
    /// bandlimited on the grid, unlike point samples of a sinc.
    DiscreteSinc(f64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub source: TargetSource,
    /// Zero the target outside `[-window, window]`.
    pub window: Option<f64>,
}

impl TargetSpec {
    pub fn build(&self, grid: &Grid1D) -> Result<SampledSignal> {
        let s = match &self.source {
            TargetSource::Kind(k) => crate::signal::sample(k, grid)?,
            TargetSource::DiscreteSinc(b) => crate::signal::discrete_sinc(*b, grid)?,
            TargetSource::File(p) => {
                let s = SampledSignal::read_columnar(std::io::BufReader::new(fs::File::open(p)?))?;
                if !s.grid().same_nodes(grid) {
                    return Err(Error::GridMismatch(format!("target file {} is not on the configured grid", p.display())));
                }
                s
            }
        };
        Ok(match self.window {
            Some(w) => s.restrict(w),
            None => s,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub grid: GridSpec,
    pub target: Option<TargetSpec>,
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    /// Translation `N` for the obstruction check.
    pub shift: Option<f64>,
    pub epsilon: f64,
    /// `epsilon` is a fraction of `||y||` rather than an absolute value.
    pub epsilon_relative: bool,
    pub c: f64,
    pub extent_factor: f64,
    pub lambda: Vec<f64>,
    pub oversample: usize,
    pub solver: SolveMethod,
    pub fixed_b: Option<f64>,
    pub fixed_delta: Option<f64>,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "grid.center",
    "grid.half_width",
    "grid.n",
    "grid.half_shift",
    "target.kind",
    "target.b",
    "target.beta",
    "target.phase",
    "target.width",
    "target.file",
    "target.window",
    "box.alpha",
    "box.gamma",
    "box.beta",
    "obstruction.shift",
    "budget.epsilon",
    "budget.relative",
    "budget.c",
    "synth.extent_factor",
    "synth.lambda",
    "synth.oversample",
    "synth.solver",
    "synth.b",
    "mollifier.delta",
    "output.dir",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parse { line, msg: format!("{key}: cannot parse {v:?}") }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.num(key)?.ok_or_else(|| Error::Parse { line: 0, msg: format!("missing required key {key}") })
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some((_, "true" | "yes" | "1")) => Ok(Some(true)),
            Some((_, "false" | "no" | "0")) => Ok(Some(false)),
            Some((line, v)) => Err(Error::Parse { line, msg: format!("{key}: expected true/false, got {v:?}") }),
        }
    }
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: format!("expected `key = value`, got {body:?}") })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Parse { line, msg: format!("unknown key {k:?}") });
        }
        if v.is_empty() {
            return Err(Error::Parse { line, msg: format!("{k}: empty value") });
        }
        if let Some((first, _)) = map.insert(k.to_string(), (line, v.to_string())) {
            return Err(Error::Parse { line, msg: format!("{k} already set on line {first}") });
        }
    }
    Ok(Entries { map })
}

pub fn parse_list(key: &str, line: usize, v: &str) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| s.parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err(Error::Parse { line, msg: format!("{key}: empty list") }),
        Err(_) => Err(Error::Parse { line, msg: format!("{key}: cannot parse {v:?}") }),
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = parse_entries(text)?;
        let experiment = match e.raw("experiment") {
            Some((_, "t1")) => Experiment::T1,
            Some((_, "t2")) => Experiment::T2,
            Some((_, "obstruction")) => Experiment::Obstruction,
            Some((_, "synth")) => Experiment::Synth,
            Some((line, v)) => {
                return Err(Error::Parse { line, msg: format!("experiment must be t1, t2, obstruction or synth, got {v:?}") })
            }
            None => return Err(Error::Parse { line: 0, msg: "missing required key experiment".into() }),
        };
        let grid = GridSpec {
            center: e.num("grid.center")?.unwrap_or(0.0),
            half_width: e.require("grid.half_width")?,
            n: e.require("grid.n")?,
            half_shift: e.flag("grid.half_shift")?.unwrap_or(false),
        };
        let target = match e.raw("target.kind") {
            None => None,
            Some((line, kind)) => {
                let need = |k: &str| -> Result<f64> {
                    e.num(k)?.ok_or_else(|| Error::Parse { line, msg: format!("target.kind = {kind} needs {k}") })
                };
                let source = match kind {
                    "indicator" => TargetSource::Kind(SignalKind::Indicator(need("target.b")?)),
                    "sinc" => TargetSource::Kind(SignalKind::Sinc(need("target.b")?)),
                    "discrete_sinc" => TargetSource::DiscreteSinc(need("target.b")?),
                    "gaussian" => TargetSource::Kind(SignalKind::Gaussian(e.num("target.width")?.unwrap_or(1.0))),
                    "sinusoid" => TargetSource::Kind(SignalKind::Sinusoid {
                        freq: need("target.beta")?,
                        phase: e.num("target.phase")?.unwrap_or(0.0),
                    }),
                    "file" => {
                        let (_, p) = e.raw("target.file").ok_or_else(|| Error::Parse {
                            line,
                            msg: "target.kind = file needs target.file".into(),
                        })?;
                        TargetSource::File(base.join(p))
                    }
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("target.kind must be indicator, sinc, discrete_sinc, gaussian, sinusoid or file, got {other:?}"),
                        })
                    }
                };
                Some(TargetSpec { source, window: e.num("target.window")? })
            }
        };
        let lambda = match e.raw("synth.lambda") {
            Some((line, v)) => parse_list("synth.lambda", line, v)?,
            None => default_schedule(1e-6),
        };
        let solver = match e.raw("synth.solver") {
            None | Some((_, "svd")) => SolveMethod::Svd,
            Some((_, "normal")) => SolveMethod::NormalEquations,
            Some((line, v)) => return Err(Error::Parse { line, msg: format!("synth.solver must be svd or normal, got {v:?}") }),
        };
        let cfg = ExperimentConfig {
            experiment,
            seed: e.num("seed")?.unwrap_or(0),
            grid,
            target,
            alpha: e.require("box.alpha")?,
            gamma: e.num("box.gamma")?,
            beta: e.num("box.beta")?,
            shift: e.num("obstruction.shift")?,
            epsilon: e.num("budget.epsilon")?.unwrap_or(0.1),
            epsilon_relative: e.flag("budget.relative")?.unwrap_or(true),
            c: e.num("budget.c")?.unwrap_or(0.5),
            extent_factor: e.num("synth.extent_factor")?.unwrap_or(3.0),
            lambda,
            oversample: e.num("synth.oversample")?.unwrap_or(8),
            solver,
            fixed_b: e.num("synth.b")?,
            fixed_delta: e.num("mollifier.delta")?,
            output_dir: base.join(e.raw("output.dir").map_or("out", |(_, v)| v)),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    fn check(&self) -> Result<()> {
        let missing = |k: &str| Err(Error::Parse { line: 0, msg: format!("experiment {} needs {k}", self.experiment.name()) });
        match self.experiment {
            Experiment::T1 if self.gamma.is_none() => return missing("box.gamma"),
            Experiment::T2 if self.beta.is_none() => return missing("box.beta"),
            Experiment::Obstruction if self.shift.is_none() => return missing("obstruction.shift"),
            Experiment::Synth if self.fixed_b.is_none() => return missing("synth.b"),
            _ => {}
        }
        if self.experiment != Experiment::Obstruction && self.target.is_none() {
            return missing("target.kind");
        }
        self.grid.build()?;
        Ok(())
    }

    /// `gamma` or `beta`, whichever the experiment uses.
    pub fn width(&self) -> f64 {
        match self.experiment {
            Experiment::T2 => self.beta.unwrap_or(0.0),
            _ => self.gamma.unwrap_or(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: &str = "\
experiment = t1   # box input
grid.half_width = 16
grid.n = 4096
target.kind = sinusoid
target.beta = 1.5
target.window = 2
box.alpha = 1
box.gamma = 1
budget.epsilon = 0.1
synth.lambda = 1e-6, 1e-8
";

    #[test]
    fn parses_t1() {
        let c = ExperimentConfig::parse(T1, Path::new("/tmp")).unwrap();
        assert_eq!(c.experiment, Experiment::T1);
        assert_eq!(c.grid.n, 4096);
        assert_eq!(c.lambda, vec![1e-6, 1e-8]);
        assert_eq!(c.target.as_ref().unwrap().window, Some(2.0));
        assert_eq!(c.output_dir, PathBuf::from("/tmp/out"));
        assert!(c.epsilon_relative);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let err = |text: &str| ExperimentConfig::parse(text, Path::new(".")).unwrap_err();
        assert!(matches!(err(&format!("{T1}box.delta = 1\n")), Error::Parse { line: 11, .. }));
        assert!(matches!(err(&format!("{T1}grid.n = 12\n")), Error::Parse { line: 11, .. }));
        assert!(matches!(err(&format!("{T1}not a pair\n")), Error::Parse { line: 11, .. }));
        assert!(matches!(err(&T1.replace("grid.n = 4096", "grid.n = many")), Error::Parse { line: 3, .. }));
        assert!(matches!(err(&T1.replace("box.gamma = 1\n", "")), Error::Parse { .. }));
        assert!(matches!(err(&T1.replace("synth.lambda = 1e-6, 1e-8", "synth.lambda = ,")), Error::Parse { .. }));
        assert!(matches!(err(&T1.replace("experiment = t1", "experiment = t9")), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn half_shift_moves_nodes() {
        let text = T1.replace("grid.n = 4096", "grid.n = 4096\ngrid.half_shift = true");
        let c = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
        let g = c.grid.build().unwrap();
        assert!((g.x0() - (-16.0 + 0.5 * g.dx())).abs() < 1e-15);
    }
}
