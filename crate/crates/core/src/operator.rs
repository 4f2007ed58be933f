//! Operators represented by their spreading function
//! `Hf(x) = \iint eta(t, nu) e^{2 pi i x nu} f(x - t) dt dnu`
//! or by the Kohn-Nirenberg symbol `sigma`, the symplectic Fourier transform of
//! `eta`.
//!
//! Dense spreading grids are applied by plain double quadrature; that path is
//! slow on purpose and serves as the reference for the structured fast paths.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{cis_turns, parse_header, parse_num, read_pairs, Grid1D, SampledSignal, C64, NODE_TOL};

/// Default per-axis cap for dense application.
pub const DENSE_CAP: usize = 256;
/// Environment variable overriding [`DENSE_CAP`].
pub const DENSE_CAP_ENV: &str = "OPWLAB_DENSE_CAP";
/// Relative threshold used for support boxes unless told otherwise.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
/// Factor samples below this fraction of their maximum are dropped when a
/// structured operator is materialised on a cropped grid.
const CROP_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    /// Time (or `x`) axis; rows of the value array.
    pub t: Grid1D,
    /// Frequency (or `xi`) axis; columns of the value array.
    pub v: Grid1D,
}

impl Grid2D {
    pub fn new(t: Grid1D, v: Grid1D) -> Self {
        Self { t, v }
    }

    pub fn cell(&self) -> f64 {
        self.t.dx() * self.v.dx()
    }

    pub fn len(&self) -> usize {
        self.t.n() * self.v.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples of a function on a [`Grid2D`], stored row-major (`t` major).
#[derive(Clone, Debug, PartialEq)]
pub struct SpreadingGrid {
    grid: Grid2D,
    values: Vec<C64>,
}

impl SpreadingGrid {
    pub fn new(grid: Grid2D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("expected {} values for a {}x{} grid, got {}", grid.len(), grid.t.n(), grid.v.n(), values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("spreading grid contains non-finite values");
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for t in grid.t.nodes() {
            for v in grid.v.nodes() {
                values.push(f(t, v));
            }
        }
        Self { grid, values }
    }

    /// `1/(dt dnu)` at the node `(t0, nu0)`, zero elsewhere.
    pub fn delta(grid: Grid2D, t0: f64, nu0: f64) -> Result<Self> {
        let (i, l) = match (grid.t.index_of(t0), grid.v.index_of(nu0)) {
            (Some(i), Some(l)) => (i, l),
            _ => return invalid(format!("({t0}, {nu0}) is not a grid node")),
        };
        let mut s = Self::zeros(grid);
        s.values[i * grid.v.n() + l] = C64::new(1.0 / grid.cell(), 0.0);
        Ok(s)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, l: usize) -> C64 {
        self.values[i * self.grid.v.n() + l]
    }

    pub fn row(&self, i: usize) -> &[C64] {
        let nv = self.grid.v.n();
        &self.values[i * nv..(i + 1) * nv]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.cell() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm_sqr() == 0.0)
    }

    pub fn sub(&self, other: &SpreadingGrid) -> Result<SpreadingGrid> {
        if !self.grid.t.same_nodes(&other.grid.t) || !self.grid.v.same_nodes(&other.grid.v) {
            return Err(Error::GridMismatch("spreading grids differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(SpreadingGrid { grid: self.grid, values })
    }

    /// Text format: `# t0= dt= nt= v0= dv= nv=` then `re im` per line,
    /// row-major.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let (t, v) = (self.grid.t, self.grid.v);
        writeln!(
            w,
            "# t0={:.17e} dt={:.17e} nt={} v0={:.17e} dv={:.17e} nv={}",
            t.x0(),
            t.dx(),
            t.n(),
            v.x0(),
            v.dx(),
            v.n()
        )?;
        for z in &self.values {
            writeln!(w, "{:.17e} {:.17e}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<SpreadingGrid> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Parse { line: 1, msg: "empty spreading file".into() }),
        };
        let fields = parse_header(&header, 1)?;
        let get = |k: &str| {
            fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .ok_or(Error::Parse { line: 1, msg: format!("missing header field {k}") })
        };
        let t = Grid1D::new(parse_num(&get("t0")?, 1)?, parse_num(&get("dt")?, 1)?, parse_num(&get("nt")?, 1)?)?;
        let v = Grid1D::new(parse_num(&get("v0")?, 1)?, parse_num(&get("dv")?, 1)?, parse_num(&get("nv")?, 1)?)?;
        let grid = Grid2D::new(t, v);
        let values = read_pairs(lines, grid.len())?;
        SpreadingGrid::new(grid, values)
    }
}

/// Symplectic Fourier transform
/// `sigma(x, xi) = \iint eta(t, nu) e^{-2 pi i (t xi - x nu)} dt dnu`.
///
/// The first output axis (`x`) is the partner of the input's second axis and
/// vice versa, so applying the transform twice returns the original grid.
pub fn symplectic_fourier(s: &SpreadingGrid) -> SpreadingGrid {
    let (tg, vg) = (s.grid.t, s.grid.v);
    let (nt, nv) = (tg.n(), vg.n());
    // Inverse transform along each row: nu -> x.
    let rows: Vec<Vec<C64>> = (0..nt)
        .into_par_iter()
        .map(|i| SampledSignal::new(vg, s.row(i).to_vec()).expect("row length").idft().into_samples())
        .collect();
    let xg = vg.dual();
    let xig = tg.dual();
    // Forward transform along each column: t -> xi; column p becomes output row p.
    let out_rows: Vec<Vec<C64>> = (0..nv)
        .into_par_iter()
        .map(|p| {
            let col: Vec<C64> = rows.iter().map(|r| r[p]).collect();
            SampledSignal::new(tg, col).expect("column length").dft().into_samples()
        })
        .collect();
    SpreadingGrid { grid: Grid2D::new(xg, xig), values: out_rows.concat() }
}

pub fn spreading_to_symbol(eta: &SpreadingGrid) -> SpreadingGrid {
    symplectic_fourier(eta)
}

/// Same transform as [`spreading_to_symbol`]; the symplectic transform is its
/// own inverse.
pub fn symbol_to_spreading(sigma: &SpreadingGrid) -> SpreadingGrid {
    symplectic_fourier(sigma)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorRep {
    /// `Hf = m f`; `sigma(x, xi) = m(x)`.
    Multiplication(SampledSignal),
    /// `Hf = h * f`; `sigma(x, xi) = h^(xi)`. `h` lives on a lag grid.
    Convolution(SampledSignal),
    /// `eta(t, nu) = u(t) m^(nu)`, so `Hf = m (u * f)`.
    Separable { u: SampledSignal, m: SampledSignal },
    /// `eta(t, nu) = h(t) w(nu)`, so `Hf = W (h * f)` with `W` the inverse
    /// transform of `w`.
    SeparableFreq { h: SampledSignal, w: SampledSignal },
    Dense(SpreadingGrid),
}

impl OperatorRep {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorRep::Multiplication(_) => "multiplication",
            OperatorRep::Convolution(_) => "convolution",
            OperatorRep::Separable { .. } => "separable",
            OperatorRep::SeparableFreq { .. } => "separable_freq",
            OperatorRep::Dense(_) => "dense",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            OperatorRep::Multiplication(m) => m.is_zero(),
            OperatorRep::Convolution(h) => h.is_zero(),
            OperatorRep::Separable { u, m } => u.is_zero() || m.is_zero(),
            OperatorRep::SeparableFreq { h, w } => h.is_zero() || w.is_zero(),
            OperatorRep::Dense(eta) => eta.is_zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub t_min: f64,
    pub t_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl SupportBox {
    pub fn symmetric(a: f64, b: f64) -> Self {
        Self { t_min: -a, t_max: a, v_min: -b, v_max: b }
    }

    /// `self` lies inside `outer`, with a relative slack of `NODE_TOL`.
    pub fn within(&self, outer: &SupportBox) -> bool {
        let slack = NODE_TOL * (1.0 + outer.t_max.abs().max(outer.v_max.abs()));
        self.t_min >= outer.t_min - slack
            && self.t_max <= outer.t_max + slack
            && self.v_min >= outer.v_min - slack
            && self.v_max <= outer.v_max + slack
    }

    /// `max(|t_min|, |t_max|)`.
    pub fn t_reach(&self) -> f64 {
        self.t_min.abs().max(self.t_max.abs())
    }

    fn union(self, o: SupportBox) -> SupportBox {
        SupportBox {
            t_min: self.t_min.min(o.t_min),
            t_max: self.t_max.max(o.t_max),
            v_min: self.v_min.min(o.v_min),
            v_max: self.v_max.max(o.v_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApplyOptions {
    /// Largest allowed length of either axis of a dense spreading grid.
    pub dense_cap: usize,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        Self { dense_cap: DENSE_CAP }
    }
}

impl ApplyOptions {
    /// Default options with the cap taken from `OPWLAB_DENSE_CAP` if set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(DENSE_CAP_ENV) {
            Ok(s) => {
                let cap: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{DENSE_CAP_ENV}={s:?} is not a positive integer")))?;
                if cap == 0 {
                    return invalid(format!("{DENSE_CAP_ENV} must be positive"));
                }
                Ok(Self { dense_cap: cap })
            }
            Err(_) => Ok(Self::default()),
        }
    }
}

/// [`apply_with`] using options from the environment.
pub fn apply(op: &OperatorRep, f: &SampledSignal) -> Result<SampledSignal> {
    apply_with(op, f, &ApplyOptions::from_env()?)
}

pub fn apply_with(op: &OperatorRep, f: &SampledSignal, opts: &ApplyOptions) -> Result<SampledSignal> {
    match op {
        OperatorRep::Multiplication(m) => m.mul(f),
        OperatorRep::Convolution(h) => crate::signal::convolve(h, f),
        OperatorRep::Separable { u, m } => m.mul(&crate::signal::convolve(u, f)?),
        OperatorRep::SeparableFreq { h, w } => {
            let big_w = inverse_transform_on(w, f.grid());
            big_w.mul(&crate::signal::convolve(h, f)?)
        }
        OperatorRep::Dense(eta) => apply_dense(eta, f, opts.dense_cap, false),
    }
}

/// Adjoint with respect to the grid inner product `dx sum f conj(g)`.
pub fn apply_adjoint(op: &OperatorRep, g: &SampledSignal, opts: &ApplyOptions) -> Result<SampledSignal> {
    let conj = |s: &SampledSignal| s.map(|_, v| v.conj());
    match op {
        OperatorRep::Multiplication(m) => conj(m).mul(g),
        OperatorRep::Convolution(h) => crate::signal::convolve(&reflect(h)?, g),
        OperatorRep::Separable { u, m } => crate::signal::convolve(&reflect(u)?, &conj(m).mul(g)?),
        OperatorRep::SeparableFreq { h, w } => {
            let big_w = inverse_transform_on(w, g.grid());
            crate::signal::convolve(&reflect(h)?, &conj(&big_w).mul(g)?)
        }
        OperatorRep::Dense(eta) => apply_dense(eta, g, opts.dense_cap, true),
    }
}

/// `conj(k(-t))` on the mirrored lag grid.
fn reflect(k: &SampledSignal) -> Result<SampledSignal> {
    let g = k.grid();
    let mirrored = Grid1D::new(-g.end(), g.dx(), g.n())?;
    let samples = k.samples().iter().rev().map(|v| v.conj()).collect();
    SampledSignal::new(mirrored, samples)
}

/// `W(x) = sum_l w_l e^{2 pi i x nu_l} dnu` on the nodes of `grid`, summing
/// only the nonzero `w_l`.
pub fn inverse_transform_on(w: &SampledSignal, grid: &Grid1D) -> SampledSignal {
    let wg = w.grid();
    let active: Vec<(f64, C64)> =
        wg.nodes().zip(w.samples()).filter(|(_, v)| v.norm_sqr() > 0.0).map(|(nu, &v)| (nu, v * wg.dx())).collect();
    SampledSignal::from_fn(*grid, |x| active.iter().map(|&(nu, a)| a * cis_turns(x * nu)).sum())
}

/// Double quadrature over the spreading grid, zero extension outside `f`'s
/// window. The `t` axis must share `f`'s spacing with nodes at multiples of
/// `dx`.
fn apply_dense(eta: &SpreadingGrid, f: &SampledSignal, cap: usize, adjoint: bool) -> Result<SampledSignal> {
    let (tg, vg) = (eta.grid.t, eta.grid.v);
    if tg.n() > cap || vg.n() > cap {
        return Err(Error::SizeCap { rows: tg.n(), cols: vg.n(), cap });
    }
    let fg = *f.grid();
    if (tg.dx() - fg.dx()).abs() > 1e-12 * fg.dx() {
        return Err(Error::GridMismatch(format!("spreading dt {} differs from signal dx {}", tg.dx(), fg.dx())));
    }
    let k0 = tg
        .lag_offset()
        .ok_or_else(|| Error::GridMismatch(format!("spreading t-origin {} is not a multiple of dx", tg.x0())))?;
    let (nt, nv) = (tg.n(), vg.n());
    let n = fg.n() as i64;
    let cell = eta.grid.cell();
    let fs = f.samples();
    let active_rows: Vec<usize> = (0..nt).filter(|&i| eta.row(i).iter().any(|v| v.norm_sqr() > 0.0)).collect();
    let out: Vec<C64> = (0..fg.n())
        .into_par_iter()
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            for &i in &active_rows {
                let shift = k0 + i as i64;
                // forward: reads f(x_j - t_i); adjoint: reads g(x_j + t_i)
                let src = if adjoint { j as i64 + shift } else { j as i64 - shift };
                if !(0..n).contains(&src) {
                    continue;
                }
                let x = if adjoint { fg.node(src as usize) } else { fg.node(j) };
                let row = eta.row(i);
                let mut s = C64::new(0.0, 0.0);
                for l in 0..nv {
                    let e = row[l];
                    if e.norm_sqr() == 0.0 {
                        continue;
                    }
                    let ph = cis_turns(x * vg.node(l));
                    s += if adjoint { (e * ph).conj() } else { e * ph };
                }
                acc += s * fs[src as usize];
            }
            acc * cell
        })
        .collect();
    SampledSignal::new(fg, out)
}

/// `||eta||_{L2}`; refuses operators whose spreading is a line measure.
pub fn hs_norm(op: &OperatorRep) -> Result<f64> {
    match op {
        OperatorRep::Multiplication(_) => {
            Err(Error::NotHilbertSchmidt("multiplication operators have spreading on the line t = 0".into()))
        }
        OperatorRep::Convolution(_) => {
            Err(Error::NotHilbertSchmidt("convolution operators have spreading on the line nu = 0".into()))
        }
        OperatorRep::Separable { u, m } => Ok(u.l2_norm() * m.l2_norm()),
        OperatorRep::SeparableFreq { h, w } => Ok(h.l2_norm() * w.l2_norm()),
        OperatorRep::Dense(eta) => Ok(eta.l2_norm()),
    }
}

/// `sup |sigma|`. Factorised operators use the product of factor sup norms,
/// which is exact for separable symbols.
pub fn symbol_sup_norm(op: &OperatorRep) -> f64 {
    match op {
        OperatorRep::Multiplication(m) => m.sup_norm(),
        OperatorRep::Convolution(h) => h.dft().sup_norm(),
        OperatorRep::Separable { u, m } => m.sup_norm() * u.dft().sup_norm(),
        OperatorRep::SeparableFreq { h, w } => h.dft().sup_norm() * w.idft().sup_norm(),
        OperatorRep::Dense(eta) => spreading_to_symbol(eta).sup_norm(),
    }
}

/// Smallest box holding every node with `|value| > threshold * max|value|`.
fn nonzero_range(g: &Grid1D, vals: &[C64], threshold: f64) -> Option<(f64, f64)> {
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    if top == 0.0 {
        return None;
    }
    let cut = threshold * top;
    let lo = vals.iter().position(|v| v.norm() > cut)?;
    let hi = vals.iter().rposition(|v| v.norm() > cut)?;
    Some((g.node(lo), g.node(hi)))
}

fn factor_box(a: (&Grid1D, &[C64]), b: (&Grid1D, &[C64]), threshold: f64) -> Option<SupportBox> {
    let (t_min, t_max) = nonzero_range(a.0, a.1, threshold)?;
    let (v_min, v_max) = nonzero_range(b.0, b.1, threshold)?;
    Some(SupportBox { t_min, t_max, v_min, v_max })
}

/// Support of the spreading function at a relative threshold; `None` for the
/// zero operator.
pub fn support_box(op: &OperatorRep, threshold: f64) -> Result<Option<SupportBox>> {
    if !(threshold >= 0.0) {
        return invalid(format!("threshold must be >= 0, got {threshold}"));
    }
    let point = [C64::new(1.0, 0.0)];
    let origin = Grid1D::new(0.0, 1.0, 2)?;
    Ok(match op {
        OperatorRep::Multiplication(m) => {
            let mh = m.dft();
            factor_box((&origin, &point), (mh.grid(), mh.samples()), threshold)
        }
        OperatorRep::Convolution(h) => factor_box((h.grid(), h.samples()), (&origin, &point), threshold),
        OperatorRep::Separable { u, m } => {
            let mh = m.dft();
            factor_box((u.grid(), u.samples()), (mh.grid(), mh.samples()), threshold)
        }
        OperatorRep::SeparableFreq { h, w } => factor_box((h.grid(), h.samples()), (w.grid(), w.samples()), threshold),
        OperatorRep::Dense(eta) => {
            let top = eta.sup_norm();
            if top == 0.0 {
                None
            } else {
                let cut = threshold * top;
                let (tg, vg) = (eta.grid.t, eta.grid.v);
                let mut bx: Option<SupportBox> = None;
                for i in 0..tg.n() {
                    for l in 0..vg.n() {
                        if eta.get(i, l).norm() > cut {
                            let (t, v) = (tg.node(i), vg.node(l));
                            let here = SupportBox { t_min: t, t_max: t, v_min: v, v_max: v };
                            bx = Some(bx.map_or(here, |b| b.union(here)));
                        }
                    }
                }
                bx
            }
        }
    })
}

/// The normalised boxcar `(1/(2 delta)) chi_{[-delta, delta]}` on the lag grid
/// of `grid`.
pub fn mollifier(delta: f64, grid: &Grid1D) -> Result<SampledSignal> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("mollifier width must be positive, got {delta}"));
    }
    if delta < 2.0 * grid.dx() * (1.0 - NODE_TOL) {
        return Err(Error::Resolution(format!("delta = {delta} is below two grid steps ({})", 2.0 * grid.dx())));
    }
    let lag = grid.lag_grid();
    let h = 1.0 / (2.0 * delta);
    Ok(SampledSignal::from_fn(lag, |t| if lag.outside(t, delta) { C64::new(0.0, 0.0) } else { C64::new(h, 0.0) }))
}

/// `(u * chi_{[-B, B]})(x)` for the normalised boxcar `u` of half-width
/// `delta`: a trapezoid with ramps of width `2 delta` centred on `+-B`.
pub fn boxcar_smoothed_indicator(b: f64, delta: f64, grid: &Grid1D) -> Result<SampledSignal> {
    if !(delta > 0.0) || !(b > 0.0) {
        return invalid(format!("need B > 0 and delta > 0, got B = {b}, delta = {delta}"));
    }
    if delta >= b {
        return invalid(format!("delta = {delta} must be smaller than B = {b}"));
    }
    SampledSignal::from_real(*grid, &grid.nodes().map(|x| trapezoid(x, b, delta)).collect::<Vec<_>>())
}

fn trapezoid(x: f64, b: f64, d: f64) -> f64 {
    if x <= -b - d || x >= b + d {
        0.0
    } else if x <= -b + d {
        (x + b + d) / (2.0 * d)
    } else if x < b - d {
        1.0
    } else {
        -(x - b - d) / (2.0 * d)
    }
}

/// Values of `s` at each node of `target`; every sample of `s` above the crop
/// threshold must land on a node of `target`.
fn resample_factor(s: &SampledSignal, target: &Grid1D) -> Result<Vec<C64>> {
    let top = s.sup_norm();
    for (x, v) in s.grid().nodes().zip(s.samples()) {
        if v.norm() > CROP_THRESHOLD * top && target.index_of(x).is_none() {
            return invalid(format!("grid does not cover factor support at {x}"));
        }
    }
    Ok(target.nodes().map(|x| s.at(x)).collect())
}

fn delta_factor(target: &Grid1D) -> Result<Vec<C64>> {
    let k = target.index_of(0.0).ok_or_else(|| Error::InvalidArgument("grid has no node at 0".into()))?;
    let mut v = vec![C64::new(0.0, 0.0); target.n()];
    v[k] = C64::new(1.0 / target.dx(), 0.0);
    Ok(v)
}

/// Materialise the spreading function of `op` on `grid`.
pub fn densify(op: &OperatorRep, grid: &Grid2D) -> Result<SpreadingGrid> {
    let (a, b) = match op {
        OperatorRep::Multiplication(m) => (delta_factor(&grid.t)?, resample_factor(&m.dft(), &grid.v)?),
        OperatorRep::Convolution(h) => (resample_factor(h, &grid.t)?, delta_factor(&grid.v)?),
        OperatorRep::Separable { u, m } => (resample_factor(u, &grid.t)?, resample_factor(&m.dft(), &grid.v)?),
        OperatorRep::SeparableFreq { h, w } => (resample_factor(h, &grid.t)?, resample_factor(w, &grid.v)?),
        OperatorRep::Dense(eta) => {
            let (tg, vg) = (eta.grid.t, eta.grid.v);
            let mut out = SpreadingGrid::zeros(*grid);
            let top = eta.sup_norm();
            for i in 0..tg.n() {
                for l in 0..vg.n() {
                    let v = eta.get(i, l);
                    if v.norm() <= CROP_THRESHOLD * top {
                        continue;
                    }
                    match (grid.t.index_of(tg.node(i)), grid.v.index_of(vg.node(l))) {
                        (Some(p), Some(q)) => out.values[p * grid.v.n() + q] = v,
                        _ => return invalid("grid does not cover the spreading support"),
                    }
                }
            }
            return Ok(out);
        }
    };
    let mut values = Vec::with_capacity(grid.len());
    for &x in &a {
        for &y in &b {
            values.push(x * y);
        }
    }
    SpreadingGrid::new(*grid, values)
}

/// Sub-grid of `g` covering the samples above the crop threshold, padded by
/// one node each side; a three-node grid around zero for a delta line.
fn crop(s: &SampledSignal) -> Result<Grid1D> {
    let g = s.grid();
    let top = s.sup_norm();
    let cut = CROP_THRESHOLD * top;
    let lo = s.samples().iter().position(|v| v.norm() > cut).unwrap_or(0).saturating_sub(1);
    let hi = (s.samples().iter().rposition(|v| v.norm() > cut).unwrap_or(0) + 1).min(g.n() - 1);
    let n = (hi - lo + 1).max(2);
    Grid1D::new(g.node(lo), g.dx(), n)
}

fn delta_axis(dx: f64) -> Result<Grid1D> {
    Grid1D::new(-dx, dx, 3)
}

/// Smallest grid on which [`densify`] captures a structured operator.
pub fn natural_grid(op: &OperatorRep) -> Result<Grid2D> {
    Ok(match op {
        OperatorRep::Multiplication(m) => {
            let mh = m.dft();
            Grid2D::new(delta_axis(m.grid().dx())?, crop(&mh)?)
        }
        OperatorRep::Convolution(h) => Grid2D::new(crop(h)?, delta_axis(h.grid().dual().dx())?),
        OperatorRep::Separable { u, m } => Grid2D::new(crop(u)?, crop(&m.dft())?),
        OperatorRep::SeparableFreq { h, w } => Grid2D::new(crop(h)?, crop(w)?),
        OperatorRep::Dense(eta) => eta.grid,
    })
}

/// Power iteration on `H^* H` over `grid`. Reported alongside the symbol sup
/// norm, never asserted against it.
pub fn operator_norm_estimate(op: &OperatorRep, grid: &Grid1D, iterations: usize, opts: &ApplyOptions) -> Result<f64> {
    let mut v = SampledSignal::from_fn(*grid, |x| C64::new((-x * x / 8.0).exp(), 0.1 * x.sin()));
    let mut est = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = v.l2_norm();
        if nv == 0.0 {
            return Ok(0.0);
        }
        v = v.scale(C64::new(1.0 / nv, 0.0));
        let w = apply_adjoint(op, &apply_with(op, &v, opts)?, opts)?;
        est = w.l2_norm().sqrt();
        v = w;
    }
    Ok(est)
}

/// On-disk description of an operator; factor signals live in sibling files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorRecord {
    Multiplication { m: PathBuf },
    Convolution { h: PathBuf },
    Separable { u: PathBuf, m: PathBuf },
    SeparableFreq { h: PathBuf, w: PathBuf },
    Dense { eta: PathBuf },
}

fn write_signal(s: &SampledSignal, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    s.write_columnar(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_signal(path: &Path) -> Result<SampledSignal> {
    SampledSignal::read_columnar(BufReader::new(File::open(path)?))
}

/// Writes `<stem>.json` plus one text file per factor into `dir`.
pub fn write_operator(op: &OperatorRep, dir: &Path, stem: &str) -> Result<PathBuf> {
    let file = |suffix: &str| PathBuf::from(format!("{stem}.{suffix}.txt"));
    let record = match op {
        OperatorRep::Multiplication(m) => {
            write_signal(m, &dir.join(file("m")))?;
            OperatorRecord::Multiplication { m: file("m") }
        }
        OperatorRep::Convolution(h) => {
            write_signal(h, &dir.join(file("h")))?;
            OperatorRecord::Convolution { h: file("h") }
        }
        OperatorRep::Separable { u, m } => {
            write_signal(u, &dir.join(file("u")))?;
            write_signal(m, &dir.join(file("m")))?;
            OperatorRecord::Separable { u: file("u"), m: file("m") }
        }
        OperatorRep::SeparableFreq { h, w } => {
            write_signal(h, &dir.join(file("h")))?;
            write_signal(w, &dir.join(file("w")))?;
            OperatorRecord::SeparableFreq { h: file("h"), w: file("w") }
        }
        OperatorRep::Dense(eta) => {
            let mut w = BufWriter::new(File::create(dir.join(file("eta")))?);
            eta.write_text(&mut w)?;
            w.flush()?;
            OperatorRecord::Dense { eta: file("eta") }
        }
    };
    let path = dir.join(format!("{stem}.json"));
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &record)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

/// Reads an operator record; relative factor paths resolve against the
/// record's directory.
pub fn read_operator(path: &Path) -> Result<OperatorRep> {
    let record: OperatorRecord = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let p = |q: &PathBuf| base.join(q);
    Ok(match record {
        OperatorRecord::Multiplication { m } => OperatorRep::Multiplication(read_signal(&p(&m))?),
        OperatorRecord::Convolution { h } => OperatorRep::Convolution(read_signal(&p(&h))?),
        OperatorRecord::Separable { u, m } => OperatorRep::Separable { u: read_signal(&p(&u))?, m: read_signal(&p(&m))? },
        OperatorRecord::SeparableFreq { h, w } => {
            OperatorRep::SeparableFreq { h: read_signal(&p(&h))?, w: read_signal(&p(&w))? }
        }
        OperatorRecord::Dense { eta } => {
            OperatorRep::Dense(SpreadingGrid::read_text(BufReader::new(File::open(p(&eta))?))?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{make_grid, sample, sinc, SignalKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_grid(rng: &mut ChaCha8Rng, nt: usize, nv: usize) -> SpreadingGrid {
        let t = Grid1D::new(rng.gen_range(-2.0..0.0), rng.gen_range(0.01..0.2), nt).unwrap();
        let v = Grid1D::new(rng.gen_range(-2.0..0.0), rng.gen_range(0.01..0.2), nv).unwrap();
        let g = Grid2D::new(t, v);
        SpreadingGrid::from_fn(g, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn rel(a: &SampledSignal, b: &SampledSignal) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm()
    }

    /// Direct O(n^4) symplectic transform.
    fn direct_symplectic(s: &SpreadingGrid) -> SpreadingGrid {
        let (tg, vg) = (s.grid().t, s.grid().v);
        let out = Grid2D::new(vg.dual(), tg.dual());
        SpreadingGrid::from_fn(out, |x, xi| {
            let mut acc = C64::new(0.0, 0.0);
            for (i, t) in tg.nodes().enumerate() {
                for (l, nu) in vg.nodes().enumerate() {
                    acc += s.get(i, l) * C64::from_polar(1.0, -2.0 * PI * (t * xi - x * nu));
                }
            }
            acc * s.grid().cell()
        })
    }

    #[test]
    fn symplectic_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_grid(&mut rng, 12, 10);
        let fast = symplectic_fourier(&s);
        let slow = direct_symplectic(&s);
        let err = fast.sub(&slow).unwrap().l2_norm() / slow.l2_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn delta_symbol_gives_plane_wave() {
        let t = Grid1D::new(-1.0, 0.125, 16).unwrap();
        let v = Grid1D::new(-2.0, 0.25, 16).unwrap();
        let g = Grid2D::new(t, v);
        let d = SpreadingGrid::delta(g, 0.25, 0.5).unwrap();
        let s = symbol_to_spreading(&d);
        let slow = direct_symplectic(&d);
        assert!(s.sub(&slow).unwrap().l2_norm() < 1e-12 * slow.l2_norm());
        let m0 = s.values()[0].norm();
        assert!(s.values().iter().all(|v| (v.norm() - m0).abs() < 1e-12 * m0));
        let z = SpreadingGrid::zeros(g);
        assert!(symplectic_fourier(&z).is_zero());
    }

    #[test]
    fn multiplication_and_convolution_symbols() {
        let x = make_grid(0.0, 4.0, 64).unwrap();
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap();
        let op = OperatorRep::Multiplication(m.clone());
        let eta = densify(&op, &Grid2D::new(x.lag_grid(), x.dual())).unwrap();
        let sigma = spreading_to_symbol(&eta);
        // sigma(x, xi) = m(x) on every column
        for (p, xv) in sigma.grid().t.nodes().enumerate() {
            for q in 0..sigma.grid().v.n() {
                assert!((sigma.get(p, q) - m.at(xv)).norm() < 1e-8, "({p},{q})");
            }
        }
        let lag = x.lag_grid();
        let h = sample(&SignalKind::Gaussian(0.5), &lag).unwrap();
        let op = OperatorRep::Convolution(h.clone());
        let eta = densify(&op, &Grid2D::new(lag, lag.dual())).unwrap();
        let sigma = spreading_to_symbol(&eta);
        let hh = h.dft();
        for p in 0..sigma.grid().t.n() {
            for (q, xi) in sigma.grid().v.nodes().enumerate() {
                assert!((sigma.get(p, q) - hh.at(xi)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn separable_symbol_is_m_times_sinc() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let delta = 8.5 * x.dx();
        let u = mollifier(delta, &x).unwrap();
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap();
        let op = OperatorRep::Separable { u, m: m.clone() };
        let eta = densify(&op, &Grid2D::new(x.lag_grid(), x.dual())).unwrap();
        let sigma = spreading_to_symbol(&eta);
        let d = x.dx();
        // discrete boxcar of 17 unit samples: Dirichlet kernel, close to sinc(2 delta xi)
        for (p, xv) in sigma.grid().t.nodes().enumerate() {
            for (q, xi) in sigma.grid().v.nodes().enumerate() {
                let den = (PI * d * xi).sin();
                let dir = if den.abs() < 1e-15 { 1.0 } else { d * (PI * 17.0 * d * xi).sin() / den / (2.0 * delta) };
                assert!((sigma.get(p, q) - m.at(xv) * dir).norm() < 1e-8);
                if xi.abs() < 2.0 {
                    assert!((dir - sinc(2.0 * delta * xi)).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn delta_spreading_is_identity_and_shift() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let f = sample(&SignalKind::Gaussian(0.8), &x).unwrap().modulate(0.3);
        let g = Grid2D::new(Grid1D::new(-8.0 * x.dx(), x.dx(), 17).unwrap(), Grid1D::new(-1.0, 0.25, 9).unwrap());
        let id = OperatorRep::Dense(SpreadingGrid::delta(g, 0.0, 0.0).unwrap());
        assert!(rel(&apply(&id, &f).unwrap(), &f) < 1e-12);
        let t0 = 3.0 * x.dx();
        let op = OperatorRep::Dense(SpreadingGrid::delta(g, t0, 0.75).unwrap());
        let want = f.translate(t0).modulate(0.75);
        assert!(rel(&apply(&op, &f).unwrap(), &want) < 1e-12);
    }

    #[test]
    fn dense_rejects_incompatible_grids_and_size() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let f = SampledSignal::zeros(x);
        let bad_dt = Grid2D::new(Grid1D::new(0.0, 2.0 * x.dx(), 4).unwrap(), Grid1D::new(0.0, 1.0, 2).unwrap());
        assert!(apply(&OperatorRep::Dense(SpreadingGrid::zeros(bad_dt)), &f).is_err());
        let off = Grid2D::new(Grid1D::new(0.3 * x.dx(), x.dx(), 4).unwrap(), Grid1D::new(0.0, 1.0, 2).unwrap());
        assert!(apply(&OperatorRep::Dense(SpreadingGrid::zeros(off)), &f).is_err());
        let big = Grid2D::new(Grid1D::new(0.0, x.dx(), 8).unwrap(), Grid1D::new(0.0, 1.0, 8).unwrap());
        let r = apply_with(&OperatorRep::Dense(SpreadingGrid::zeros(big)), &f, &ApplyOptions { dense_cap: 4 });
        assert!(matches!(r, Err(Error::SizeCap { rows: 8, cols: 8, cap: 4 })));
    }

    #[test]
    fn separable_apply_matches_trapezoid() {
        // half-shifted grid: B and delta fall on cell edges, so the discrete
        // convolution reproduces the continuous trapezoid at every node
        let dx = 1.0 / 30.0;
        let x = Grid1D::new(-128.0 * dx + 0.5 * dx, dx, 256).unwrap();
        let (b, delta) = (1.0, 0.25);
        let chi = sample(&SignalKind::Indicator(b), &x).unwrap();
        let u = mollifier(delta, &x).unwrap();
        let m = sample(&SignalKind::Gaussian(1.5), &x).unwrap();
        let op = OperatorRep::Separable { u, m: m.clone() };
        let want = m.mul(&boxcar_smoothed_indicator(b, delta, &x).unwrap()).unwrap();
        assert!(rel(&apply(&op, &chi).unwrap(), &want) < 1e-12);
    }

    #[test]
    fn trapezoid_point_values() {
        let g = Grid1D::new(-2.0, 0.25, 17).unwrap();
        let s = boxcar_smoothed_indicator(1.0, 0.5, &g).unwrap();
        for (x, v) in [(-1.5, 0.0), (-1.0, 0.5), (0.0, 1.0), (1.25, 0.25), (1.5, 0.0)] {
            assert!((s.at(x).re - v).abs() < 1e-12, "x = {x}");
        }
        assert!(boxcar_smoothed_indicator(1.0, 1.0, &g).is_err());
        // small delta: equals the indicator away from the corners
        let s = boxcar_smoothed_indicator(1.0, 0.01, &g).unwrap();
        let chi = sample(&SignalKind::Indicator(1.0), &g).unwrap();
        for x in g.nodes().filter(|x| (x.abs() - 1.0).abs() > 0.1) {
            assert_eq!(s.at(x), chi.at(x));
        }
    }

    #[test]
    fn mollifier_examples() {
        let g = make_grid(0.0, 8.0, 256).unwrap();
        let u = mollifier(0.5, &g).unwrap();
        assert!((u.at(0.0).re - 1.0).abs() < 1e-15);
        assert_eq!(u.at(0.5 + g.dx()).re, 0.0);
        let mass: f64 = u.samples().iter().map(|v| v.re).sum::<f64>() * g.dx();
        assert!((mass - 1.0).abs() <= g.dx());
        let u2 = mollifier(2.0 * g.dx(), &g).unwrap();
        let nz = u2.samples().iter().filter(|v| v.re != 0.0).count();
        assert!((3..=5).contains(&nz));
        assert!(matches!(mollifier(1.5 * g.dx(), &g), Err(Error::Resolution(_))));
        // a half-offset width puts exactly 2 delta / dx samples inside, unit mass
        let d = 8.5 * g.dx();
        let spec = mollifier(d, &g).unwrap().dft();
        for xi in [0.0, 0.25, 0.5, 1.0] {
            assert!((spec.at(xi).re - sinc(2.0 * d * xi)).abs() < 0.02, "{xi}");
        }
        assert!((spec.at(0.0).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hs_norm_identities() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let delta = 0.5;
        let u = mollifier(delta, &x).unwrap();
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap();
        let op = OperatorRep::Separable { u: u.clone(), m: m.clone() };
        let hs = hs_norm(&op).unwrap();
        assert!((hs - u.l2_norm() * m.l2_norm()).abs() == 0.0);
        // ||u||^2 = (#nodes) dx / (4 delta^2), which is 1/(2 delta) up to one node
        let closed = (1.0 / (2.0 * delta)).sqrt() * m.l2_norm();
        assert!((hs - closed).abs() / closed < x.dx());
        let dense = densify(&op, &natural_grid(&op).unwrap()).unwrap();
        assert!((dense.l2_norm() - hs).abs() < 1e-10 * hs);
        assert_eq!(hs_norm(&OperatorRep::Dense(SpreadingGrid::zeros(*dense.grid()))).unwrap(), 0.0);
        assert!(matches!(hs_norm(&OperatorRep::Multiplication(m.clone())), Err(Error::NotHilbertSchmidt(_))));
        assert!(matches!(hs_norm(&OperatorRep::Convolution(u)), Err(Error::NotHilbertSchmidt(_))));
    }

    #[test]
    fn symbol_sup_norms() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap().scale(c(3.0));
        let u = mollifier(16.5 * x.dx(), &x).unwrap();
        let op = OperatorRep::Separable { u, m: m.clone() };
        assert!((symbol_sup_norm(&op) - m.sup_norm()).abs() < 1e-12);
        assert_eq!(symbol_sup_norm(&OperatorRep::Multiplication(m.clone())), m.sup_norm());
        let dense = OperatorRep::Dense(densify(&op, &Grid2D::new(x.lag_grid(), x.dual())).unwrap());
        assert!((symbol_sup_norm(&dense) - m.sup_norm()).abs() < 1e-9);
        assert_eq!(symbol_sup_norm(&OperatorRep::Multiplication(SampledSignal::zeros(x))), 0.0);
    }

    #[test]
    fn support_boxes() {
        let x = make_grid(0.0, 8.0, 256).unwrap();
        let delta = 0.5;
        let u = mollifier(delta, &x).unwrap();
        let basis = crate::synth::SincBasis::new(1.0, 1.0, 2.0).unwrap();
        let m = basis.expand(&vec![c(1.0); basis.len()], &x);
        let bx = support_box(&OperatorRep::Separable { u: u.clone(), m }, SUPPORT_THRESHOLD).unwrap().unwrap();
        assert!(bx.within(&SupportBox::symmetric(delta, 1.0)), "{bx:?}");
        let w = mollifier(0.25, &x.dual()).unwrap();
        let h = sample(&SignalKind::Indicator(0.75), &x.lag_grid()).unwrap();
        let bx = support_box(&OperatorRep::SeparableFreq { h, w }, SUPPORT_THRESHOLD).unwrap().unwrap();
        assert!(bx.within(&SupportBox::symmetric(0.75, 0.25)), "{bx:?}");
        let g = Grid2D::new(Grid1D::new(-1.0, 0.5, 5).unwrap(), Grid1D::new(-1.0, 0.5, 5).unwrap());
        let bx = support_box(&OperatorRep::Dense(SpreadingGrid::delta(g, 0.0, 0.0).unwrap()), 0.0).unwrap().unwrap();
        assert_eq!(bx, SupportBox::symmetric(0.0, 0.0));
        assert!(support_box(&OperatorRep::Dense(SpreadingGrid::zeros(g)), 0.0).unwrap().is_none());
    }

    #[test]
    fn structured_and_dense_agree() {
        let x = make_grid(0.0, 4.0, 128).unwrap();
        let f = sample(&SignalKind::Gaussian(0.7), &x).unwrap().modulate(0.4);
        let lag = x.lag_grid();
        let u = mollifier(0.25, &x).unwrap();
        let m = sample(&SignalKind::Gaussian(1.3), &x).unwrap();
        let h = sample(&SignalKind::Gaussian(0.3), &lag).unwrap();
        let w = mollifier(0.5, &x.dual()).unwrap();
        let ops = [
            OperatorRep::Multiplication(m.clone()),
            OperatorRep::Convolution(h.clone()),
            OperatorRep::Separable { u, m },
            OperatorRep::SeparableFreq { h, w },
        ];
        for op in &ops {
            let dense = OperatorRep::Dense(densify(op, &natural_grid(op).unwrap()).unwrap());
            let a = apply(op, &f).unwrap();
            let b = apply(&dense, &f).unwrap();
            assert!(rel(&b, &a) < 1e-6, "{}: {}", op.kind(), rel(&b, &a));
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = make_grid(0.0, 2.0, 64).unwrap();
        let rnd = |rng: &mut ChaCha8Rng| {
            SampledSignal::from_fn(x, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        };
        let f = rnd(&mut rng);
        let g = rnd(&mut rng);
        let t = Grid1D::new(-4.0 * x.dx(), x.dx(), 9).unwrap();
        let v = Grid1D::new(-1.0, 0.5, 5).unwrap();
        let eta = SpreadingGrid::from_fn(Grid2D::new(t, v), |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let u = SampledSignal::from_fn(x.lag_grid(), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = rnd(&mut rng);
        let opts = ApplyOptions::default();
        for op in [
            OperatorRep::Dense(eta),
            OperatorRep::Separable { u: u.clone(), m: m.clone() },
            OperatorRep::SeparableFreq { h: u.clone(), w: mollifier(0.5, &x.dual()).unwrap() },
            OperatorRep::Multiplication(m),
            OperatorRep::Convolution(u),
        ] {
            let lhs = apply_with(&op, &f, &opts).unwrap().inner(&g).unwrap();
            let rhs = f.inner(&apply_adjoint(&op, &g, &opts).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{}", op.kind());
        }
    }

    #[test]
    fn norm_estimate_of_multiplication_is_sup() {
        let x = make_grid(0.0, 4.0, 256).unwrap();
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap().scale(c(2.0));
        let est = operator_norm_estimate(&OperatorRep::Multiplication(m), &x, 200, &ApplyOptions::default()).unwrap();
        assert!((est - 2.0).abs() < 1e-2, "{est}");
    }

    #[test]
    fn support_confinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = make_grid(0.0, 4.0, 256).unwrap();
        let (b, a) = (0.5, 0.25);
        let f = sample(&SignalKind::Indicator(b), &x).unwrap();
        let k = (a / x.dx()).floor() as i64;
        let t = Grid1D::new(-(k as f64) * x.dx(), x.dx(), (2 * k + 1) as usize).unwrap();
        let v = Grid1D::new(-a, a / 8.0, 17).unwrap();
        for _ in 0..4 {
            let eta = SpreadingGrid::from_fn(Grid2D::new(t, v), |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let out = apply(&OperatorRep::Dense(eta), &f).unwrap();
            assert!(out.tail_energy(b + a) <= 1e-8 * out.norm_sqr());
        }
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let x = make_grid(0.0, 2.0, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eta = random_grid(&mut rng, 4, 6);
        let mut buf = Vec::new();
        eta.write_text(&mut buf).unwrap();
        assert_eq!(SpreadingGrid::read_text(&buf[..]).unwrap().values(), eta.values());
        let m = sample(&SignalKind::Gaussian(1.0), &x).unwrap();
        let u = mollifier(0.25, &x).unwrap();
        for op in [OperatorRep::Separable { u, m: m.clone() }, OperatorRep::Multiplication(m), OperatorRep::Dense(eta)] {
            let path = write_operator(&op, dir.path(), op.kind()).unwrap();
            let back = read_operator(&path).unwrap();
            assert_eq!(back.kind(), op.kind());
            match (&op, &back) {
                (OperatorRep::Dense(a), OperatorRep::Dense(b)) => assert_eq!(a.values(), b.values()),
                (OperatorRep::Multiplication(a), OperatorRep::Multiplication(b)) => assert_eq!(a.samples(), b.samples()),
                (OperatorRep::Separable { u: a, .. }, OperatorRep::Separable { u: b, .. }) => {
                    assert_eq!(a.samples(), b.samples())
                }
                _ => unreachable!(),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn involution_and_parseval(seed in any::<u64>(), nt in 2usize..40, nv in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_grid(&mut rng, nt, nv);
            let sigma = spreading_to_symbol(&s);
            let back = symbol_to_spreading(&sigma);
            prop_assert!(back.grid().t.same_nodes(&s.grid().t) && back.grid().v.same_nodes(&s.grid().v));
            prop_assert!(back.sub(&s).unwrap().l2_norm() <= 1e-10 * s.l2_norm());
            prop_assert!((sigma.l2_norm() - s.l2_norm()).abs() <= 1e-9 * s.l2_norm());
        }
    }
}
