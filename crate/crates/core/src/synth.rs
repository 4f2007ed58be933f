//! Bandlimited synthesis: find `m` with spectrum in `[-alpha, alpha]` that
//! matches a target on `[-B, B]` in L2.
//!
//! The search space is spanned by Nyquist-spaced sinc translates
//! `b_k(x) = 2 alpha sinc(2 alpha (x - c_k))`, periodised on the signal window
//! so that their discrete spectra vanish identically outside the band. The
//! coefficients solve a Tikhonov-regularised weighted least-squares problem on
//! collocation nodes inside `[-B, B]`. When the target oscillates faster than
//! `alpha`, the fit is a superoscillation and its energy outside `[-B, B]`
//! explodes; the diagnostics in [`SynthesisResult`] quantify that.

use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{cis_turns, parse_header, parse_num, read_pairs, Grid1D, SampledSignal, C64, NODE_TOL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Filter factors `s/(s^2 + lambda)` on the SVD of the weighted design.
    #[default]
    Svd,
    /// Cholesky on `A^H A + lambda I`, eigen pseudo-inverse if that fails.
    NormalEquations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub alpha: f64,
    pub b: f64,
    pub extent_factor: f64,
    pub lambda: f64,
    pub oversample: usize,
    #[serde(default)]
    pub solver: SolveMethod,
}

impl SynthesisConfig {
    pub fn new(alpha: f64, b: f64) -> Self {
        Self { alpha, b, extent_factor: 3.0, lambda: 1e-10, oversample: 8, solver: SolveMethod::Svd }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return invalid(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return invalid(format!("B must be positive, got {}", self.b));
        }
        if !(self.extent_factor >= 1.0) {
            return invalid(format!("extent_factor must be >= 1, got {}", self.extent_factor));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return invalid(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.oversample < 2 {
            return invalid(format!("collocation oversample must be >= 2, got {}", self.oversample));
        }
        Ok(())
    }
}

/// Sinc translates at spacing `1/(2 alpha)`, symmetric about zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SincBasis {
    alpha: f64,
    centers: Vec<f64>,
}

impl SincBasis {
    pub fn new(alpha: f64, b: f64, extent_factor: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(b > 0.0) || !(extent_factor >= 1.0) {
            return invalid("basis needs alpha > 0, B > 0, extent_factor >= 1");
        }
        let step = 0.5 / alpha;
        let kmax = (extent_factor * b / step + NODE_TOL).floor() as i64;
        let centers = (-kmax..=kmax).map(|k| k as f64 * step).collect();
        Ok(Self { alpha, centers })
    }

    pub fn from_centers(alpha: f64, centers: Vec<f64>) -> Self {
        Self { alpha, centers }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Spectral weight: 1 inside the band, 1/2 on a node sitting exactly on
    /// the band edge, 0 outside.
    fn band_weight(&self, xi: f64, dxi: f64) -> f64 {
        let a = xi.abs();
        let tol = NODE_TOL * dxi;
        if a < self.alpha - tol {
            1.0
        } else if a <= self.alpha + tol {
            0.5
        } else {
            0.0
        }
    }

    /// Transform of the expansion, sampled on `grid.dual()`.
    pub fn spectrum(&self, coeffs: &[C64], grid: &Grid1D) -> SampledSignal {
        let dual = grid.dual();
        SampledSignal::from_fn(dual, |xi| {
            let w = self.band_weight(xi, dual.dx());
            if w == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let s: C64 = self.centers.iter().zip(coeffs).map(|(&c, &a)| a * cis_turns(-c * xi)).sum();
            s * w
        })
    }

    pub fn expand(&self, coeffs: &[C64], grid: &Grid1D) -> SampledSignal {
        self.spectrum(coeffs, grid).idft()
    }

    pub fn element(&self, k: usize, grid: &Grid1D) -> SampledSignal {
        let mut e = vec![C64::new(0.0, 0.0); self.len()];
        e[k] = C64::new(1.0, 0.0);
        self.expand(&e, grid)
    }

    /// Centres plus two Nyquist steps must stay inside the window.
    pub fn check_fits(&self, grid: &Grid1D) -> Result<()> {
        let reach = self.centers.iter().fold(0.0f64, |a, c| a.max(c.abs())) + 1.0 / self.alpha;
        if grid.x0() > -reach || grid.end() < reach {
            return invalid(format!(
                "window [{}, {}] does not contain the basis span [-{reach}, {reach}]",
                grid.x0(),
                grid.end()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub m: SampledSignal,
    pub coefficients: Vec<C64>,
    pub basis: SincBasis,
    pub b: f64,
    pub lambda: f64,
    /// `||m - y||` on `[-B, B]`.
    pub residual: f64,
    pub total_energy: f64,
    pub interval_energy: f64,
    pub energy_ratio: f64,
    /// Fraction of the spectral energy of `m` outside `[-alpha, alpha]`.
    pub leakage: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total_energy: f64,
    pub interval_energy: f64,
    pub energy_ratio: f64,
    pub sup_norm: f64,
}

/// Collocation node indices inside `[-B, B]` with trapezoid weights.
pub fn collocation(grid: &Grid1D, b: f64, alpha: f64, oversample: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let inside: Vec<usize> = (0..grid.n()).filter(|&j| !grid.outside(grid.node(j), b)).collect();
    let (&lo, &hi) = match (inside.first(), inside.last()) {
        (Some(lo), Some(hi)) if hi > lo => (lo, hi),
        _ => return invalid(format!("fewer than two grid nodes inside [-{b}, {b}]")),
    };
    let spacing = 0.5 / (alpha * oversample as f64);
    let stride = ((spacing / grid.dx()) + NODE_TOL).floor().max(1.0) as usize;
    let mut idx: Vec<usize> = (lo..=hi).step_by(stride).collect();
    if *idx.last().unwrap() != hi {
        idx.push(hi);
    }
    let mut w = vec![0.0; idx.len()];
    for k in 0..idx.len() - 1 {
        let h = (idx[k + 1] - idx[k]) as f64 * grid.dx();
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    Ok((idx, w))
}

/// Minimises `sum_j w_j |(G c)_j - y_j|^2 + lambda ||c||^2`.
pub fn solve_tikhonov(
    design: &DMatrix<C64>,
    weights: &[f64],
    rhs: &[C64],
    lambda: f64,
    method: SolveMethod,
) -> Result<DVector<C64>> {
    let (rows, cols) = design.shape();
    if weights.len() != rows || rhs.len() != rows {
        return invalid("design, weights and rhs disagree in length");
    }
    let mut a = design.clone();
    for (i, &w) in weights.iter().enumerate() {
        let s = w.sqrt();
        a.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let b = DVector::from_iterator(rows, rhs.iter().zip(weights).map(|(&y, &w)| y * w.sqrt()));
    let c = match method {
        SolveMethod::Svd => {
            let svd = a.svd(true, true);
            let (u, vt) = match (svd.u, svd.v_t) {
                (Some(u), Some(vt)) => (u, vt),
                _ => return Err(Error::NumericalFailure("SVD did not converge".into())),
            };
            let mut proj = u.adjoint() * &b;
            for (p, &s) in proj.iter_mut().zip(svd.singular_values.iter()) {
                let denom = s * s + lambda;
                *p = if denom > 0.0 { *p * (s / denom) } else { C64::new(0.0, 0.0) };
            }
            vt.adjoint() * proj
        }
        SolveMethod::NormalEquations => {
            let ah = a.adjoint();
            let mut normal = &ah * &a;
            for k in 0..cols {
                normal[(k, k)] += C64::new(lambda, 0.0);
            }
            let atb = &ah * &b;
            let top = (0..cols).fold(0.0f64, |a, k| a.max(normal[(k, k)].re));
            let factor = Cholesky::new(normal.clone()).filter(|ch| {
                let l = ch.l_dirty();
                (0..cols).all(|k| l[(k, k)].norm_sqr() > 1e-14 * top)
            });
            match factor {
                Some(ch) => ch.solve(&atb),
                None => pseudo_inverse_solve(normal, &atb),
            }
        }
    };
    if c.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NumericalFailure("non-finite coefficients".into()));
    }
    Ok(c)
}

fn pseudo_inverse_solve(normal: DMatrix<C64>, rhs: &DVector<C64>) -> DVector<C64> {
    let eig = SymmetricEigen::new(normal);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    let floor = top * 1e-14;
    let q = &eig.eigenvectors;
    let mut proj = q.adjoint() * rhs;
    for (p, &e) in proj.iter_mut().zip(eig.eigenvalues.iter()) {
        *p = if e > floor { *p / e } else { C64::new(0.0, 0.0) };
    }
    q * proj
}

pub fn synthesize(target: &SampledSignal, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let grid = *target.grid();
    let basis = SincBasis::new(cfg.alpha, cfg.b, cfg.extent_factor)?;
    basis.check_fits(&grid)?;
    let (idx, weights) = collocation(&grid, cfg.b, cfg.alpha, cfg.oversample)?;

    if target.restrict(cfg.b).is_zero() {
        let m = SampledSignal::zeros(grid);
        return Ok(SynthesisResult {
            m,
            coefficients: vec![C64::new(0.0, 0.0); basis.len()],
            basis,
            b: cfg.b,
            lambda: cfg.lambda,
            residual: 0.0,
            total_energy: 0.0,
            interval_energy: 0.0,
            energy_ratio: 1.0,
            leakage: 0.0,
        });
    }

    let mut design = DMatrix::<C64>::zeros(idx.len(), basis.len());
    for k in 0..basis.len() {
        let col = basis.element(k, &grid);
        for (r, &j) in idx.iter().enumerate() {
            design[(r, k)] = col.samples()[j];
        }
    }
    let rhs: Vec<C64> = idx.iter().map(|&j| target.samples()[j]).collect();
    let coeffs = solve_tikhonov(&design, &weights, &rhs, cfg.lambda, cfg.solver)?;
    let coefficients: Vec<C64> = coeffs.iter().copied().collect();
    let m = basis.expand(&coefficients, &grid);
    if m.samples().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NumericalFailure("expansion produced non-finite samples".into()));
    }

    let residual = residual_on_interval(&m, target, cfg.b)?;
    let total_energy = m.norm_sqr();
    let interval_energy = m.interval_energy(cfg.b);
    let energy_ratio = ratio(total_energy, interval_energy);
    let leakage = if m.is_zero() { 0.0 } else { bandlimit_leakage(&m, cfg.alpha)? };
    Ok(SynthesisResult {
        m,
        coefficients,
        basis,
        b: cfg.b,
        lambda: cfg.lambda,
        residual,
        total_energy,
        interval_energy,
        energy_ratio,
        leakage,
    })
}

fn ratio(total: f64, interval: f64) -> f64 {
    if total == 0.0 {
        1.0
    } else if interval == 0.0 {
        f64::INFINITY
    } else {
        (total / interval).max(1.0)
    }
}

/// `||m - y||` restricted to `[-B, B]`.
pub fn residual_on_interval(m: &SampledSignal, y: &SampledSignal, b: f64) -> Result<f64> {
    Ok(m.sub(y)?.interval_energy(b).sqrt())
}

/// Share of `||m^||^2` lying outside `[-alpha, alpha]`.
pub fn bandlimit_leakage(m: &SampledSignal, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    let spec = m.dft();
    let total = spec.norm_sqr();
    if total == 0.0 {
        return Err(Error::UndefinedRatio("leakage of the zero signal".into()));
    }
    Ok(spec.tail_energy(alpha) / total)
}

pub fn energy_report(result: &SynthesisResult) -> EnergyReport {
    EnergyReport {
        total_energy: result.total_energy,
        interval_energy: result.interval_energy,
        energy_ratio: result.energy_ratio,
        sup_norm: result.m.sup_norm(),
    }
}

/// Coefficients in columnar form: the centres are encoded as a grid header,
/// followed by a `# centers alpha=<a>` line.
pub fn write_coefficients<W: Write>(basis: &SincBasis, coeffs: &[C64], mut w: W) -> Result<()> {
    let c = basis.centers();
    let step = 0.5 / basis.alpha();
    writeln!(w, "# x0={:.17e} dx={:.17e} n={}", c.first().copied().unwrap_or(0.0), step, c.len())?;
    writeln!(w, "# centers alpha={:.17e}", basis.alpha())?;
    for v in coeffs {
        writeln!(w, "{:.17e} {:.17e}", v.re, v.im)?;
    }
    Ok(())
}

pub fn read_coefficients<R: BufRead>(r: R) -> Result<(SincBasis, Vec<C64>)> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse { line: 1, msg: "empty coefficient file".into() }),
    };
    let fields = parse_header(&header, 1)?;
    let get = |k: &str, line: usize, fields: &[(String, String)]| {
        fields
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .ok_or(Error::Parse { line, msg: format!("missing field {k}") })
    };
    let x0: f64 = parse_num(&get("x0", 1, &fields)?, 1)?;
    let step: f64 = parse_num(&get("dx", 1, &fields)?, 1)?;
    let n: usize = parse_num(&get("n", 1, &fields)?, 1)?;
    let ext = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse { line: 2, msg: "missing `# centers` line".into() }),
    };
    let rest = ext
        .trim()
        .strip_prefix("# centers")
        .ok_or(Error::Parse { line: 2, msg: "expected `# centers alpha=...`".into() })?;
    let fields2 = parse_header(&format!("#{rest}"), 2)?;
    let alpha: f64 = parse_num(&get("alpha", 2, &fields2)?, 2)?;
    let coeffs = read_pairs(lines, n)?;
    let centers = (0..n).map(|k| x0 + k as f64 * step).collect();
    Ok((SincBasis::from_centers(alpha, centers), coeffs))
}
