//! Uniform-grid signals on the real line.
//!
//! A [`Grid1D`] is a finite window `x_j = x0 + j*dx`, `j = 0..n`. Its Fourier
//! partner is the grid with spacing `1/(n*dx)`; by default that partner is
//! centred at zero, so it covers `[-1/(2dx), 1/(2dx))`. Every grid remembers
//! the origin of its partner (`dual_x0`), which makes [`SampledSignal::dft`]
//! and [`SampledSignal::idft`] exact inverses even for off-centre windows.
//!
//! The transform is normalised to the continuous convention
//! `f^(xi) = \int f(x) e^{-2 pi i x xi} dx`, i.e. the raw FFT is scaled by
//! `dx` and phase-corrected for the grid origins.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Fraction of a sample spacing within which two abscissae count as equal.
pub const NODE_TOL: f64 = 1e-9;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

/// `e^{2 pi i turns}` with the integer part of `turns` removed first.
pub(crate) fn cis_turns(turns: f64) -> C64 {
    let r = turns - turns.round();
    C64::from_polar(1.0, TAU * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x0: f64,
    dx: f64,
    n: usize,
    dual_x0: f64,
}

impl Grid1D {
    pub fn new(x0: f64, dx: f64, n: usize) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return invalid(format!("grid spacing must be positive, got {dx}"));
        }
        if !x0.is_finite() {
            return invalid("grid origin must be finite");
        }
        if n < 2 {
            return invalid(format!("grid needs at least 2 samples, got {n}"));
        }
        Ok(Self { x0, dx, n, dual_x0: centered_origin(n, 1.0 / (n as f64 * dx)) })
    }

    /// Same nodes, with the Fourier partner anchored at `dual_x0`.
    pub fn with_dual_origin(mut self, dual_x0: f64) -> Self {
        self.dual_x0 = dual_x0;
        self
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dual_x0(&self) -> f64 {
        self.dual_x0
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }

    /// Last node.
    pub fn end(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// The Fourier partner: spacing `1/(n dx)`, origin `dual_x0`, and whose own
    /// partner is `self` again.
    pub fn dual(&self) -> Grid1D {
        Grid1D { x0: self.dual_x0, dx: 1.0 / (self.n as f64 * self.dx), n: self.n, dual_x0: self.x0 }
    }

    pub fn same_nodes(&self, other: &Grid1D) -> bool {
        self.n == other.n
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
            && (self.x0 - other.x0).abs() <= NODE_TOL * self.dx
    }

    /// Index of the node equal to `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = (x - self.x0) / self.dx;
        let k = r.round();
        if (r - k).abs() <= NODE_TOL && k >= 0.0 && (k as usize) < self.n {
            Some(k as usize)
        } else {
            None
        }
    }

    /// `x0 / dx` when it is an integer, i.e. every node is a multiple of `dx`.
    pub fn lag_offset(&self) -> Option<i64> {
        let r = self.x0 / self.dx;
        let k = r.round();
        ((r - k).abs() <= NODE_TOL).then_some(k as i64)
    }

    /// The grid with the same spacing and length whose nodes are multiples of
    /// `dx`, centred on zero. Convolution kernels and mollifiers live here.
    pub fn lag_grid(&self) -> Grid1D {
        let k0 = -((self.n / 2) as f64);
        Grid1D { x0: k0 * self.dx, dx: self.dx, n: self.n, dual_x0: centered_origin(self.n, 1.0 / self.extent()) }
    }

    pub(crate) fn outside(&self, x: f64, b: f64) -> bool {
        x.abs() > b + NODE_TOL * self.dx
    }
}

fn centered_origin(n: usize, d: f64) -> f64 {
    -((n / 2) as f64) * d
}

/// Grid on `[center - half_width, center + half_width)` with `n` nodes.
pub fn make_grid(center: f64, half_width: f64, n: usize) -> Result<Grid1D> {
    if !(half_width > 0.0) {
        return invalid(format!("half_width must be positive, got {half_width}"));
    }
    if n < 2 {
        return invalid(format!("n must be at least 2, got {n}"));
    }
    Grid1D::new(center - half_width, 2.0 * half_width / n as f64, n)
}

/// Standard test signals. Parameters are in signal units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SignalKind {
    /// Characteristic function of `[-b, b]`, value 1 at the endpoints.
    Indicator(f64),
    /// `sin(2 pi b x)/(pi x)`, whose transform is the indicator of `[-b, b]`.
    Sinc(f64),
    /// `sin(2 pi freq x + phase)`.
    Sinusoid { freq: f64, phase: f64 },
    /// `exp(-pi (x/width)^2)`.
    Gaussian(f64),
    Table(Vec<C64>),
}

impl SignalKind {
    pub fn eval(&self, x: f64) -> C64 {
        let v = match self {
            SignalKind::Indicator(b) => {
                if x.abs() <= *b {
                    1.0
                } else {
                    0.0
                }
            }
            SignalKind::Sinc(b) => sinc_b(*b, x),
            SignalKind::Sinusoid { freq, phase } => (TAU * freq * x + phase).sin(),
            SignalKind::Gaussian(w) => (-PI * (x / w).powi(2)).exp(),
            SignalKind::Table(_) => f64::NAN,
        };
        C64::new(v, 0.0)
    }
}

fn sinc_b(b: f64, x: f64) -> f64 {
    if x == 0.0 {
        2.0 * b
    } else {
        (TAU * b * x).sin() / (PI * x)
    }
}

/// Periodic sinc on `grid`: the inverse transform of `chi_{[-b, b]}` sampled
/// on the dual grid. Its grid transform is exactly the indicator.
pub fn discrete_sinc(b: f64, grid: &Grid1D) -> Result<SampledSignal> {
    let spec = sample(&SignalKind::Indicator(b), &grid.dual())?;
    SampledSignal::new(*grid, spec.idft().into_samples())
}

/// Normalised sinc, `sin(pi u)/(pi u)`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

pub fn sample(kind: &SignalKind, grid: &Grid1D) -> Result<SampledSignal> {
    match kind {
        SignalKind::Table(values) => SampledSignal::new(*grid, values.clone()),
        SignalKind::Indicator(b) | SignalKind::Sinc(b) if !(*b > 0.0) => {
            invalid(format!("signal half-width must be positive, got {b}"))
        }
        SignalKind::Gaussian(w) if !(*w > 0.0) => invalid(format!("gaussian width must be positive, got {w}")),
        SignalKind::Indicator(b) => {
            let b = *b;
            Ok(SampledSignal::from_fn(*grid, |x| {
                if grid.outside(x, b) {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(1.0, 0.0)
                }
            }))
        }
        _ => Ok(SampledSignal::from_fn(*grid, |x| kind.eval(x))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    grid: Grid1D,
    samples: Vec<C64>,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// Continuous-normalised transform onto `grid.dual()`.
fn fourier(samples: &[C64], grid: &Grid1D, dir: Direction) -> Vec<C64> {
    let n = grid.n;
    let d = grid.dx;
    let out = grid.dual();
    let s = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let dy0 = d * out.x0;
    let mut buf: Vec<C64> =
        samples.iter().enumerate().map(|(j, &f)| f * cis_turns(s * j as f64 * dy0)).collect();
    plan(n, matches!(dir, Direction::Forward)).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= cis_turns(s * grid.x0 * out.node(k)) * d;
    }
    buf
}

impl SampledSignal {
    pub fn new(grid: Grid1D, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.n {
            return invalid(format!("expected {} samples, got {}", grid.n, samples.len()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self { grid, samples: vec![C64::new(0.0, 0.0); grid.n] }
    }

    pub fn from_fn(grid: Grid1D, mut f: impl FnMut(f64) -> C64) -> Self {
        let samples = grid.nodes().map(&mut f).collect();
        Self { grid, samples }
    }

    pub fn from_real(grid: Grid1D, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Value at node `x`, or zero when `x` is not a node of this grid.
    pub fn at(&self, x: f64) -> C64 {
        self.grid.index_of(x).map_or(C64::new(0.0, 0.0), |j| self.samples[j])
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| v.norm_sqr() == 0.0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.dx * self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `dx * sum f_j conj(g_j)`.
    pub fn inner(&self, other: &SampledSignal) -> Result<C64> {
        self.check_same_grid(other)?;
        let s: C64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.dx)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn check_same_grid(&self, other: &SampledSignal) -> Result<()> {
        if self.grid.same_nodes(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64, C64) -> C64) -> SampledSignal {
        let samples = self.grid.nodes().zip(&self.samples).map(|(x, &v)| f(x, v)).collect();
        SampledSignal { grid: self.grid, samples }
    }

    pub fn zip_with(&self, other: &SampledSignal, f: impl Fn(C64, C64) -> C64) -> Result<SampledSignal> {
        self.check_same_grid(other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        Ok(SampledSignal { grid: self.grid, samples })
    }

    pub fn sub(&self, other: &SampledSignal) -> Result<SampledSignal> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &SampledSignal) -> Result<SampledSignal> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &SampledSignal) -> Result<SampledSignal> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> SampledSignal {
        self.map(|_, v| v * s)
    }

    /// Zero outside `[-b, b]`.
    pub fn restrict(&self, b: f64) -> SampledSignal {
        let g = self.grid;
        self.map(|x, v| if g.outside(x, b) { C64::new(0.0, 0.0) } else { v })
    }

    /// Continuous Fourier transform sampled on `grid().dual()`.
    pub fn dft(&self) -> SampledSignal {
        SampledSignal { grid: self.grid.dual(), samples: fourier(&self.samples, &self.grid, Direction::Forward) }
    }

    /// Inverse of [`dft`](Self::dft): `f(x) = \int F(xi) e^{2 pi i x xi} dxi`.
    pub fn idft(&self) -> SampledSignal {
        SampledSignal { grid: self.grid.dual(), samples: fourier(&self.samples, &self.grid, Direction::Inverse) }
    }

    /// `M_nu f(x) = e^{2 pi i nu x} f(x)`, exact pointwise.
    pub fn modulate(&self, nu: f64) -> SampledSignal {
        self.map(|x, v| v * cis_turns(nu * x))
    }

    /// `T_t f(x) = f(x - t)`.
    ///
    /// Shifts by a multiple of `dx` move samples and fill with zeros. Other
    /// shifts go through a phase ramp in frequency and are periodic on the
    /// window.
    pub fn translate(&self, t: f64) -> SampledSignal {
        let r = t / self.grid.dx;
        let k = r.round();
        if (r - k).abs() <= NODE_TOL {
            let k = k as i64;
            let n = self.grid.n as i64;
            let mut out = vec![C64::new(0.0, 0.0); self.grid.n];
            for (j, o) in out.iter_mut().enumerate() {
                let src = j as i64 - k;
                if (0..n).contains(&src) {
                    *o = self.samples[src as usize];
                }
            }
            return SampledSignal { grid: self.grid, samples: out };
        }
        let spec = self.dft().map(|xi, v| v * cis_turns(-t * xi));
        spec.idft()
    }

    /// `\int_{|x| > b} |f|^2` by grid quadrature.
    pub fn tail_energy(&self, b: f64) -> f64 {
        let g = self.grid;
        g.dx * g.nodes().zip(&self.samples).filter(|(x, _)| g.outside(*x, b)).map(|(_, v)| v.norm_sqr()).sum::<f64>()
    }

    /// `\int_{|x| <= b} |f|^2` by grid quadrature.
    pub fn interval_energy(&self, b: f64) -> f64 {
        let g = self.grid;
        g.dx * g.nodes().zip(&self.samples).filter(|(x, _)| !g.outside(*x, b)).map(|(_, v)| v.norm_sqr()).sum::<f64>()
    }

    /// Smallest node magnitude `B > 0` with `tail_energy(B) < budget`.
    ///
    /// Candidates are the distinct values of `|x_j|` strictly inside the
    /// window, so that at least one node on each side lies beyond `B`.
    pub fn choose_b(&self, budget: f64) -> Result<f64> {
        if !(budget > 0.0) {
            return invalid(format!("tail budget must be positive, got {budget}"));
        }
        if self.is_zero() {
            return invalid("choose_b needs a nonzero signal");
        }
        let g = self.grid;
        let limit = (-g.x0).min(g.end());
        let tol = NODE_TOL * g.dx;
        let mut by_radius: Vec<(f64, f64)> =
            g.nodes().zip(&self.samples).map(|(x, v)| (x.abs(), v.norm_sqr() * g.dx)).collect();
        by_radius.sort_by(|a, b| b.0.total_cmp(&a.0));
        // Walk inwards from the edge accumulating the tail beyond each radius.
        let mut tail = 0.0;
        let mut best = None;
        let mut i = 0;
        while i < by_radius.len() {
            let r = by_radius[i].0;
            let mut group = 0.0;
            while i < by_radius.len() && (by_radius[i].0 - r).abs() <= tol {
                group += by_radius[i].1;
                i += 1;
            }
            if r > tol && r < limit - tol {
                if tail < budget {
                    best = Some(r);
                } else {
                    break;
                }
            }
            tail += group;
        }
        best.ok_or_else(|| {
            Error::GridTooSmall(format!("no B inside the window leaves a tail below {budget:e}"))
        })
    }

    pub fn write_columnar<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# x0={:.17e} dx={:.17e} n={}", self.grid.x0, self.grid.dx, self.grid.n)?;
        for v in &self.samples {
            writeln!(w, "{:.17e} {:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_columnar<R: BufRead>(r: R) -> Result<SampledSignal> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty signal file".into() })?;
        let header = header?;
        let fields = parse_header(&header, 1)?;
        let get = |k: &str| {
            fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .ok_or(Error::Parse { line: 1, msg: format!("missing header field {k}") })
        };
        let x0 = parse_num::<f64>(&get("x0")?, 1)?;
        let dx = parse_num::<f64>(&get("dx")?, 1)?;
        let n = parse_num::<usize>(&get("n")?, 1)?;
        let grid = Grid1D::new(x0, dx, n)?;
        let samples = read_pairs(lines.map(|(i, l)| (i + 1, l)), n)?;
        SampledSignal::new(grid, samples)
    }
}

/// Splits `# a=1 b=2` into key/value pairs.
pub(crate) fn parse_header(line: &str, lineno: usize) -> Result<Vec<(String, String)>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or(Error::Parse { line: lineno, msg: "header must start with '#'".into() })?;
    body.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or(Error::Parse { line: lineno, msg: format!("expected key=value, got {tok:?}") })
        })
        .collect()
}

pub(crate) fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| Error::Parse { line, msg: format!("bad number {s:?}") })
}

/// Reads `count` lines of `re im`, skipping blank and `#` lines.
pub(crate) fn read_pairs<I>(lines: I, count: usize) -> Result<Vec<C64>>
where
    I: Iterator<Item = (usize, std::io::Result<String>)>,
{
    let mut out = Vec::with_capacity(count);
    let mut last = 1;
    for (lineno, line) in lines {
        let line = line?;
        last = lineno;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if out.len() == count {
            return Err(Error::Parse { line: lineno, msg: format!("more than {count} samples") });
        }
        let mut it = t.split_whitespace();
        let (re, im) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (parse_num::<f64>(a, lineno)?, parse_num::<f64>(b, lineno)?),
            _ => return Err(Error::Parse { line: lineno, msg: "expected `re im`".into() }),
        };
        out.push(C64::new(re, im));
    }
    if out.len() != count {
        return Err(Error::Parse { line: last, msg: format!("expected {count} samples, got {}", out.len()) });
    }
    Ok(out)
}

/// Circular convolution `dx * sum_i k(t_i) f(x - t_i)` on `f`'s window.
///
/// The kernel must share `f`'s spacing and its nodes must be multiples of
/// `dx`; it may be shorter than `f`.
pub fn convolve(kernel: &SampledSignal, f: &SampledSignal) -> Result<SampledSignal> {
    let kg = kernel.grid();
    let fg = f.grid();
    if (kg.dx - fg.dx).abs() > 1e-12 * fg.dx {
        return Err(Error::GridMismatch(format!("kernel spacing {} vs signal spacing {}", kg.dx, fg.dx)));
    }
    if kg.n > fg.n {
        return Err(Error::GridMismatch(format!("kernel has {} samples, signal {}", kg.n, fg.n)));
    }
    let k0 = kg
        .lag_offset()
        .ok_or_else(|| Error::GridMismatch(format!("kernel origin {} is not a multiple of dx", kg.x0)))?;
    let n = fg.n;
    let mut a = vec![C64::new(0.0, 0.0); n];
    a[..kg.n].copy_from_slice(kernel.samples());
    let mut b = f.samples().to_vec();
    let fwd = plan(n, true);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    plan(n, false).process(&mut a);
    let scale = fg.dx / n as f64;
    let ni = n as i64;
    let samples =
        (0..n).map(|j| a[((j as i64 - k0).rem_euclid(ni)) as usize] * scale).collect();
    SampledSignal::new(*fg, samples)
}
