//! Minimum-time function: the reach-time bound `U/H`, closed-loop reach
//! times, and a grid oracle for `T` on a box.
//!
//! The grid solver iterates on the Kružkov transform `v = 1 - exp(-T)`, which
//! stays in `[0, 1]` and turns the dynamic programming map into a contraction
//! with factor `exp(-dt)`. The target is the closed ball `|x| <= rho`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::domain::BoxDomain;
use crate::dynamics::{self, Direction, IntegrateOptions};
use crate::error::{Error, Result};
use crate::sysmodel::{Hamiltonian, PolyMatrixField};
use crate::{dynamics::fmt_num, norm};

/// `U(x) / H(x, grad U(x))`, an upper bound for the time the feedback needs
/// to reach the origin when `V` is nondecreasing along it.
pub fn analytic_bound(candidate: &Candidate, field: &PolyMatrixField, ham: &Hamiltonian, x: &[f64]) -> Result<f64> {
    let s = candidate.value_v(field, ham, x)?;
    if s.singular {
        return Err(Error::SingularPoint { h: s.h, tol: ham.tol_h });
    }
    Ok(s.u / s.h)
}

/// Time at which the closed loop from `x` enters `|x| <= rho`; `None` when it
/// is captured, leaves `opts.bounds`, fails or runs out of horizon first.
pub fn feedback_reach_time(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x: &[f64],
    rho: f64,
    opts: &IntegrateOptions,
) -> Option<f64> {
    let io = IntegrateOptions {
        target_radius: rho,
        seed_offset: None,
        ..opts.clone()
    };
    dynamics::integrate(candidate, field, ham, x, Direction::Forward, &io)
        .ok()
        .and_then(|tr| dynamics::hit_time(&tr))
}

/// Grid parameters; `shape` counts nodes per axis, boundary included.
/// The default is `[-1.5, 1.5]^2` with 151 nodes per axis, `rho = 0.1`,
/// `dt = 0.005` and the per-dimension default control count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    #[serde(rename = "box")]
    pub bx: BoxDomain,
    pub shape: Vec<usize>,
    pub rho: f64,
    /// Number of sampled control directions; `None` uses the per-dimension default.
    pub controls: Option<usize>,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(BoxDomain::cube(2, 1.5), vec![151, 151])
    }
}

impl GridSpec {
    pub fn new(bx: BoxDomain, shape: Vec<usize>) -> Self {
        Self {
            bx,
            shape,
            rho: 0.1,
            controls: None,
            dt: 0.005,
            tol: 1e-9,
            max_iter: 100_000,
        }
    }

    pub fn control_directions(&self) -> Vec<Vec<f64>> {
        let dim = self.bx.dim();
        let count = self.controls.unwrap_or_else(|| crate::controls::default_count(dim));
        crate::controls::sphere_directions(dim, count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinTimeGrid {
    #[serde(rename = "box")]
    pub bx: BoxDomain,
    pub shape: Vec<usize>,
    pub h: Vec<f64>,
    /// Kružkov values, first axis slowest.
    #[serde(skip)]
    pub values: Vec<f64>,
    pub rho: f64,
    #[serde(skip)]
    pub controls: Vec<Vec<f64>>,
    pub dt: f64,
    pub iterations: usize,
    pub sup_change: f64,
}

/// Sidecar written next to the grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMetadata<'a> {
    pub shape: &'a [usize],
    #[serde(rename = "box")]
    pub bx: &'a BoxDomain,
    pub h: &'a [f64],
    pub rho: f64,
    pub dt: f64,
    pub controls: usize,
    pub iterations: usize,
    pub sup_change: f64,
}

/// `T = -ln(1 - v)`, infinite at `v = 1`.
pub fn kruzkov_inverse(v: f64) -> f64 {
    if v >= 1.0 {
        f64::INFINITY
    } else {
        -(-v).ln_1p()
    }
}

/// Target membership `|x| <= rho`, widened by a relative `1e-12` so that nodes
/// lying on the sphere up to rounding count as target on both sides of a
/// symmetric box.
pub fn in_target(x: &[f64], rho: f64) -> bool {
    norm(x) <= rho * (1.0 + 1e-12)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Multilinear lookup data: flat index of the lower cell corner and the
/// `2^n` corner weights.
struct Cell {
    base: usize,
    weights: Vec<f64>,
}

struct Layout {
    bx: BoxDomain,
    shape: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
    corner_offsets: Vec<usize>,
}

impl Layout {
    fn new(bx: &BoxDomain, shape: &[usize]) -> Result<Self> {
        Error::check_dim("grid shape", bx.dim(), shape.len())?;
        if shape.iter().any(|&s| s < 2) {
            return Err(Error::InvalidParameter("grid needs at least 2 nodes per axis".into()));
        }
        let n = shape.len();
        let h = (0..n).map(|k| (bx.hi[k] - bx.lo[k]) / (shape[k] - 1) as f64).collect();
        let strides = strides(shape);
        let corner_offsets = (0..1usize << n)
            .map(|c| (0..n).filter(|k| c >> k & 1 == 1).map(|k| strides[k]).sum())
            .collect();
        Ok(Self {
            bx: bx.clone(),
            shape: shape.to_vec(),
            h,
            strides,
            corner_offsets,
        })
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn coords(&self, mut idx: usize) -> Vec<f64> {
        (0..self.shape.len())
            .map(|k| {
                let i = idx / self.strides[k];
                idx %= self.strides[k];
                // count from the nearer face so mirrored nodes are exact negatives
                let last = self.shape[k] - 1;
                if 2 * i <= last {
                    self.bx.lo[k] + i as f64 * self.h[k]
                } else {
                    self.bx.hi[k] - (last - i) as f64 * self.h[k]
                }
            })
            .collect()
    }

    fn cell(&self, y: &[f64]) -> Option<Cell> {
        if !self.bx.contains(y) {
            return None;
        }
        let n = y.len();
        let mut base = 0;
        let mut frac = vec![0.0; n];
        for k in 0..n {
            let r = (y[k] - self.bx.lo[k]) / self.h[k];
            let c = (r.floor().max(0.0) as usize).min(self.shape[k] - 2);
            frac[k] = (r - c as f64).clamp(0.0, 1.0);
            base += c * self.strides[k];
        }
        let weights = (0..1usize << n)
            .map(|c| {
                (0..n)
                    .map(|k| if c >> k & 1 == 1 { frac[k] } else { 1.0 - frac[k] })
                    .product()
            })
            .collect();
        Some(Cell { base, weights })
    }

    fn interp(&self, values: &[f64], cell: &Cell) -> f64 {
        self.corner_offsets
            .iter()
            .zip(&cell.weights)
            .map(|(o, w)| w * values[cell.base + o])
            .sum()
    }
}

const OUTSIDE: u32 = u32::MAX;
const TARGET: u32 = u32::MAX - 1;

/// Per-node, per-control foot-point stencils of the semi-Lagrangian update.
struct Stencils {
    ncontrols: usize,
    corners: usize,
    /// Per node: `TARGET` for target nodes, else unused.
    node_kind: Vec<u32>,
    /// Per (node, control): base index or `OUTSIDE`.
    base: Vec<u32>,
    weights: Vec<f64>,
}

impl Stencils {
    fn build(layout: &Layout, field: &PolyMatrixField, controls: &[Vec<f64>], dt: f64, rho: f64) -> Result<Self> {
        let total = layout.len();
        if total >= TARGET as usize {
            return Err(Error::InvalidParameter("grid too large".into()));
        }
        let nc = controls.len();
        let corners = layout.corner_offsets.len();
        let per_node = (0..total)
            .into_par_iter()
            .map(|i| {
                let x = layout.coords(i);
                if in_target(&x, rho) {
                    return Ok((TARGET, Vec::new(), Vec::new()));
                }
                let s = field.sigma(&x)?;
                let mut bases = Vec::with_capacity(nc);
                let mut ws = Vec::with_capacity(nc * corners);
                for a in controls {
                    let y: Vec<f64> = (0..x.len())
                        .map(|r| x[r] + dt * (0..a.len()).map(|j| s[(r, j)] * a[j]).sum::<f64>())
                        .collect();
                    match layout.cell(&y) {
                        Some(c) => {
                            bases.push(c.base as u32);
                            ws.extend(c.weights);
                        }
                        None => {
                            bases.push(OUTSIDE);
                            ws.extend(std::iter::repeat_n(0.0, corners));
                        }
                    }
                }
                Ok((0, bases, ws))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut st = Stencils {
            ncontrols: nc,
            corners,
            node_kind: Vec::with_capacity(total),
            base: Vec::with_capacity(total * nc),
            weights: Vec::with_capacity(total * nc * corners),
        };
        for (kind, b, w) in per_node {
            st.node_kind.push(kind);
            if kind == TARGET {
                st.base.extend(std::iter::repeat_n(OUTSIDE, nc));
                st.weights.extend(std::iter::repeat_n(0.0, nc * corners));
            } else {
                st.base.extend(b);
                st.weights.extend(w);
            }
        }
        Ok(st)
    }

    fn update(&self, layout: &Layout, v: &[f64], i: usize, decay: f64) -> f64 {
        if self.node_kind[i] == TARGET {
            return 0.0;
        }
        let mut best = 1.0f64;
        let nc = self.ncontrols;
        for j in 0..nc {
            let b = self.base[i * nc + j];
            if b == OUTSIDE {
                continue;
            }
            let w = &self.weights[(i * nc + j) * self.corners..(i * nc + j + 1) * self.corners];
            let mut acc = 0.0;
            for (o, wk) in layout.corner_offsets.iter().zip(w) {
                acc += wk * v[b as usize + o];
            }
            best = best.min(acc);
        }
        1.0 - decay + decay * best
    }

    /// One Jacobi sweep; returns `sup |out - v|`.
    fn sweep(&self, layout: &Layout, v: &[f64], out: &mut [f64], decay: f64) -> f64 {
        let chunk = 1024;
        out.par_chunks_mut(chunk)
            .enumerate()
            .map(|(c, block)| {
                let mut change: f64 = 0.0;
                for (k, o) in block.iter_mut().enumerate() {
                    let i = c * chunk + k;
                    *o = self.update(layout, v, i, decay);
                    change = change.max((*o - v[i]).abs());
                }
                change
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Largest `|sigma(x) a|` over grid nodes and the given controls.
pub fn max_speed(field: &PolyMatrixField, bx: &BoxDomain, shape: &[usize], controls: &[Vec<f64>]) -> Result<f64> {
    let layout = Layout::new(bx, shape)?;
    (0..layout.len())
        .into_par_iter()
        .map(|i| {
            let x = layout.coords(i);
            let mut best: f64 = 0.0;
            for a in controls {
                best = best.max(norm(&field.apply(&x, a)?));
            }
            Ok(best)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Kružkov value iteration
/// `v <- min_a {1 - e^-dt + e^-dt Interp[v](x + dt sigma(x) a)}` from `v = 1`,
/// with `v = 0` on the target and `v = 1` for foot points outside the box.
/// Sweeps are Jacobi sweeps, so the result does not depend on the thread count.
pub fn solve_grid(field: &PolyMatrixField, spec: &GridSpec) -> Result<MinTimeGrid> {
    let controls = spec.control_directions();
    solve_grid_with(field, spec, &controls)
}

/// [`solve_grid`] with explicit control directions (`spec.controls` ignored).
pub fn solve_grid_with(field: &PolyMatrixField, spec: &GridSpec, controls: &[Vec<f64>]) -> Result<MinTimeGrid> {
    Error::check_dim("grid box", field.n(), spec.bx.dim())?;
    if !(spec.dt > 0.0) || !(spec.rho >= 0.0) || controls.is_empty() {
        return Err(Error::InvalidParameter("grid needs dt > 0, rho >= 0 and controls".into()));
    }
    for a in controls {
        Error::check_dim("control", field.m(), a.len())?;
    }
    let layout = Layout::new(&spec.bx, &spec.shape)?;
    let speed = max_speed(field, &spec.bx, &spec.shape, controls)?;
    let hmin = layout.h.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = if speed > 0.0 { hmin / speed } else { f64::INFINITY };
    if spec.dt > limit {
        return Err(Error::CflViolation { dt: spec.dt, limit });
    }
    let st = Stencils::build(&layout, field, controls, spec.dt, spec.rho)?;
    let decay = (-spec.dt).exp();
    let mut v = vec![1.0; layout.len()];
    for (i, k) in st.node_kind.iter().enumerate() {
        if *k == TARGET {
            v[i] = 0.0;
        }
    }
    let mut next = v.clone();
    let mut iterations = 0;
    let mut sup_change = f64::INFINITY;
    while iterations < spec.max_iter {
        sup_change = st.sweep(&layout, &v, &mut next, decay);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if sup_change < spec.tol {
            break;
        }
    }
    if sup_change >= spec.tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: sup_change,
        });
    }
    Ok(MinTimeGrid {
        bx: spec.bx.clone(),
        shape: spec.shape.clone(),
        h: layout.h,
        values: v,
        rho: spec.rho,
        controls: controls.to_vec(),
        dt: spec.dt,
        iterations,
        sup_change,
    })
}

impl MinTimeGrid {
    fn layout(&self) -> Layout {
        Layout::new(&self.bx, &self.shape).expect("grid layout was validated on construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.layout().coords(idx)
    }

    /// Flat index of the node with multi-index `ij`.
    pub fn index(&self, ij: &[usize]) -> usize {
        strides(&self.shape).iter().zip(ij).map(|(s, i)| s * i).sum()
    }

    pub fn node_time(&self, idx: usize) -> f64 {
        kruzkov_inverse(self.values[idx])
    }

    /// Interpolated Kružkov value at `x`.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim("point", self.shape.len(), x.len())?;
        let layout = self.layout();
        let cell = layout.cell(x).ok_or_else(|| Error::EvalOutsideDomain { x: x.to_vec() })?;
        Ok(layout.interp(&self.values, &cell))
    }

    /// `T(x)` from the interpolated Kružkov value.
    pub fn time_at(&self, x: &[f64]) -> Result<f64> {
        Ok(kruzkov_inverse(self.value_at(x)?))
    }

    /// `sup |S[v] - v|` for one more Jacobi sweep of the stored values.
    pub fn residual_sweep(&self, field: &PolyMatrixField) -> Result<f64> {
        let layout = self.layout();
        let st = Stencils::build(&layout, field, &self.controls, self.dt, self.rho)?;
        let mut out = vec![0.0; self.values.len()];
        Ok(st.sweep(&layout, &self.values, &mut out, (-self.dt).exp()))
    }

    pub fn metadata(&self) -> GridMetadata<'_> {
        GridMetadata {
            shape: &self.shape,
            bx: &self.bx,
            h: &self.h,
            rho: self.rho,
            dt: self.dt,
            controls: self.controls.len(),
            iterations: self.iterations,
            sup_change: self.sup_change,
        }
    }

    /// Rows `x1..xn,v,T`; unreachable nodes have `T = inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.shape.len();
        let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).chain(["v".into(), "T".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        let layout = self.layout();
        for (i, v) in self.values.iter().enumerate() {
            let x = layout.coords(i);
            let t = kruzkov_inverse(*v);
            let mut row: Vec<String> = x.iter().map(|c| fmt_num(*c)).collect();
            row.push(fmt_num(*v));
            row.push(if t.is_finite() { fmt_num(t) } else { "inf".into() });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCompareReport {
    pub eps_grid: f64,
    /// Regular, non-target nodes compared.
    pub probes: usize,
    pub violations: usize,
    /// `max (T_grid - bound)` over the probes.
    pub max_excess: f64,
    pub worst_node: Option<Vec<f64>>,
    pub pass: bool,
}

/// Checks `T_grid(x) <= U(x)/H(x, grad U(x)) + eps_grid` at every grid node
/// outside the target where the candidate is defined and regular.
pub fn bound_compare(
    grid: &MinTimeGrid,
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    eps_grid: f64,
) -> BoundCompareReport {
    let rows: Vec<(usize, f64)> = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let x = grid.node(i);
            if in_target(&x, grid.rho) {
                return None;
            }
            let bound = analytic_bound(candidate, field, ham, &x).ok()?;
            Some((i, grid.node_time(i) - bound))
        })
        .collect();
    let mut worst: Option<(usize, f64)> = None;
    for &(i, e) in &rows {
        if worst.is_none_or(|w| e > w.1) {
            worst = Some((i, e));
        }
    }
    let violations = rows.iter().filter(|r| r.1 > eps_grid).count();
    BoundCompareReport {
        eps_grid,
        probes: rows.len(),
        violations,
        max_excess: worst.map_or(f64::NEG_INFINITY, |w| w.1),
        worst_node: worst.map(|w| grid.node(w.0)),
        pass: violations == 0 && !rows.is_empty(),
    }
}

/// Largest probe discrepancy `|T_small - T_large|` between a grid and the
/// same problem re-solved on a box enlarged about its center by roughly
/// `factor`, padded by whole cells so that both node sets align. Both solves
/// use the smaller of `spec.dt` and the CFL limit of the enlarged box.
pub fn box_sensitivity(field: &PolyMatrixField, spec: &GridSpec, factor: f64, probes: &[Vec<f64>]) -> Result<f64> {
    let layout = Layout::new(&spec.bx, &spec.shape)?;
    let n = spec.shape.len();
    let pad: Vec<usize> = (0..n)
        .map(|k| ((factor - 1.0) * 0.5 * (spec.shape[k] - 1) as f64).round().max(0.0) as usize)
        .collect();
    let bx = BoxDomain::new(
        (0..n).map(|k| spec.bx.lo[k] - pad[k] as f64 * layout.h[k]).collect(),
        (0..n).map(|k| spec.bx.hi[k] + pad[k] as f64 * layout.h[k]).collect(),
    )?;
    let shape: Vec<usize> = (0..n).map(|k| spec.shape[k] + 2 * pad[k]).collect();
    let controls = spec.control_directions();
    let speed = max_speed(field, &bx, &shape, &controls)?;
    let hmin = layout.h.iter().copied().fold(f64::INFINITY, f64::min);
    let dt = if speed > 0.0 { spec.dt.min(hmin / speed) } else { spec.dt };
    let small = solve_grid(field, &GridSpec { dt, ..spec.clone() })?;
    let large = solve_grid(field, &GridSpec { bx, shape, dt, ..spec.clone() })?;
    let mut worst: f64 = 0.0;
    for p in probes {
        worst = worst.max((small.time_at(p)? - large.time_at(p)?).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcondWitness {
    pub x: Vec<f64>,
    pub ratio: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcondReport {
    pub eps: f64,
    pub delta: f64,
    pub samples: usize,
    pub qualifying: usize,
    /// `max U(x)/|x|` over qualifying samples.
    pub c_hat: f64,
    /// Qualifying samples with the largest ratios, descending.
    pub witnesses: Vec<ExcondWitness>,
}

/// `count` points uniform in the ball `|x| < delta`, by rejection from the cube.
pub fn ball_samples(n: usize, delta: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-delta..delta)).collect();
        let r = norm(&x);
        if r < delta && r > 0.0 {
            out.push(x);
        }
    }
    out
}

/// Scan of the excess-decay condition: over sampled `x` with `|x| < delta`
/// and `H(x, grad U(x)) >= eps`, the largest `U(x)/|x|`.
pub fn excond_scan(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    eps: f64,
    delta: f64,
    samples: &[Vec<f64>],
) -> Result<ExcondReport> {
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and delta > 0, got {eps}, {delta}")));
    }
    let mut rows: Vec<ExcondWitness> = samples
        .iter()
        .filter_map(|x| {
            let d = norm(x);
            if !(d < delta && d > 0.0) {
                return None;
            }
            let s = candidate.value_v(field, ham, x).ok()?;
            (s.h >= eps).then(|| ExcondWitness {
                x: x.clone(),
                ratio: s.u / d,
                h: s.h,
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyRegion);
    }
    rows.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    let qualifying = rows.len();
    rows.truncate(5);
    Ok(ExcondReport {
        eps,
        delta,
        samples: samples.len(),
        qualifying,
        c_hat: rows[0].ratio,
        witnesses: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
}

impl LineSpec {
    /// `count` geometrically spaced radii from `s0` to `s1`.
    pub fn geometric(base: Vec<f64>, direction: Vec<f64>, s0: f64, s1: f64, count: usize) -> Self {
        let radii = (0..count)
            .map(|k| s0 * (s1 / s0).powf(k as f64 / (count.max(2) - 1) as f64))
            .collect();
        Self { base, direction, radii }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusReport {
    pub line: LineSpec,
    /// Line parameter where the line leaves the target ball; 0 for bases
    /// outside the target.
    pub target_exit: f64,
    pub fitted_exponent: f64,
    pub fit_r2: f64,
    /// `(|dx|, |dT|)` pairs used in the fit.
    pub pairs: Vec<(f64, f64)>,
}

/// Least-squares slope of `log|T(base + s d) - T(base)|` against `log|dx|`,
/// `d` the normalized direction.
///
/// `T` vanishes on the whole target ball, so for a base inside it the
/// increment is measured from the point where the line leaves the ball:
/// `|dx| = s - s_exit`. Otherwise `|dx| = s`. Radii with `|dx| <= 0` or
/// `|dT| = 0` carry no information on a log scale and are dropped; at least 3
/// pairs must remain.
pub fn modulus_estimate(grid: &MinTimeGrid, line: &LineSpec) -> Result<ModulusReport> {
    Error::check_dim("line base", grid.shape.len(), line.base.len())?;
    Error::check_dim("line direction", grid.shape.len(), line.direction.len())?;
    let dn = norm(&line.direction);
    if !(dn > 0.0) {
        return Err(Error::InvalidParameter("line direction must be nonzero".into()));
    }
    let d: Vec<f64> = line.direction.iter().map(|v| v / dn).collect();
    let s_exit = if in_target(&line.base, grid.rho) {
        let bd = crate::dot(&line.base, &d);
        let bb = crate::dot(&line.base, &line.base);
        -bd + (bd * bd - bb + grid.rho * grid.rho).max(0.0).sqrt()
    } else {
        0.0
    };
    let t0 = grid.time_at(&line.base)?;
    let mut pairs = Vec::new();
    for &s in &line.radii {
        let p: Vec<f64> = line.base.iter().zip(&d).map(|(b, dk)| b + s * dk).collect();
        let dt = (grid.time_at(&p)? - t0).abs();
        let dx = s - s_exit;
        if dx > 0.0 && dt > 0.0 && dt.is_finite() {
            pairs.push((dx, dt));
        }
    }
    if pairs.len() < 3 {
        return Err(Error::InsufficientPoints { got: pairs.len(), need: 3 });
    }
    let (slope, r2) = log_log_fit(&pairs);
    Ok(ModulusReport {
        line: line.clone(),
        target_exit: s_exit,
        fitted_exponent: slope,
        fit_r2: r2,
        pairs,
    })
}

fn log_log_fit(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Sampled Lipschitz constant of the closed-loop field `-H_p(x, grad U(x))`
/// on `bx`: largest central-difference Jacobian column-combination norm over
/// lattice nodes and sampled directions.
pub fn closed_loop_lipschitz(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    bx: &BoxDomain,
    per_axis: usize,
) -> Result<f64> {
    let n = field.n();
    let f = |x: &[f64]| -> Result<Vec<f64>> {
        let (_, g) = candidate.value_grad(x)?;
        ham.gradient_p(field, x, &g)
    };
    let dirs = crate::controls::sphere_directions(n, crate::controls::default_count(n));
    let eps = 1e-6;
    let mut best: f64 = 0.0;
    for x in bx.lattice(per_axis) {
        for d in &dirs {
            let xp: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + eps * b).collect();
            let xm: Vec<f64> = x.iter().zip(d).map(|(a, b)| a - eps * b).collect();
            let (fp, fm) = (f(&xp)?, f(&xm)?);
            let jd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            best = best.max(norm(&jd));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::SystemCatalogEntry;
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn grushin1() -> SystemCatalogEntry {
        SystemCatalogEntry::grushin(1).unwrap()
    }

    fn hormander2() -> SystemCatalogEntry {
        SystemCatalogEntry::hormander(2, SystemCatalogEntry::standard_symplectic(2)).unwrap()
    }

    /// Coarse Grushin grid on `[-1.5, 1.5]^2`, spacing 0.05.
    fn coarse() -> &'static MinTimeGrid {
        static G: OnceLock<MinTimeGrid> = OnceLock::new();
        G.get_or_init(|| {
            let spec = GridSpec {
                dt: 0.02,
                ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![61, 61])
            };
            solve_grid(grushin1().field(), &spec).unwrap()
        })
    }

    #[test]
    fn analytic_bound_examples() {
        let ham = Hamiltonian::degree1();
        let g = Candidate::gauge(1).unwrap();
        assert_relative_eq!(analytic_bound(&g, grushin1().field(), &ham, &[1.0, 0.5]).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        let g2 = Candidate::gauge(2).unwrap();
        let h = hormander2();
        assert_relative_eq!(analytic_bound(&g2, h.field(), &ham, &[1.0, 0.0, 1.0]).unwrap(), 5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(analytic_bound(&g2, h.field(), &ham, &[1.0, 0.0, 0.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(
            analytic_bound(&g, grushin1().field(), &ham, &[0.0, 0.5]),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn feedback_reach_time_examples() {
        let ham = Hamiltonian::degree1();
        let opts = IntegrateOptions::default();
        let g2 = Candidate::gauge(2).unwrap();
        let t = feedback_reach_time(&g2, hormander2().field(), &ham, &[1.0, 0.0, 0.0], 1e-3, &opts).unwrap();
        assert!((t - 1.0).abs() <= 5e-3, "{t}");
        let g = Candidate::gauge(1).unwrap();
        let t = feedback_reach_time(&g, grushin1().field(), &ham, &[1.0, 0.0], 1e-3, &opts).unwrap();
        assert!((t - 1.0).abs() <= 5e-3, "{t}");
        assert_eq!(feedback_reach_time(&g, grushin1().field(), &ham, &[1e-4, 0.0], 1e-3, &opts), Some(0.0));
        assert_eq!(feedback_reach_time(&g, grushin1().field(), &ham, &[0.0, 0.5], 1e-3, &opts), None);
    }

    #[test]
    fn kruzkov_inverse_edges() {
        assert_eq!(kruzkov_inverse(0.0), 0.0);
        assert_eq!(kruzkov_inverse(1.0), f64::INFINITY);
        assert_relative_eq!(kruzkov_inverse(1.0 - (-2.0f64).exp()), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cfl_guard() {
        let spec = GridSpec {
            dt: 0.1,
            ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![31, 31])
        };
        match solve_grid(grushin1().field(), &spec) {
            Err(Error::CflViolation { dt, limit }) => {
                assert_eq!(dt, 0.1);
                assert_relative_eq!(limit, 0.1 / 1.5, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let spec = GridSpec {
            dt: 0.02,
            max_iter: 3,
            ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![31, 31])
        };
        match solve_grid(grushin1().field(), &spec) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_invariants() {
        let g = coarse();
        assert!(g.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..g.len() {
            if in_target(&g.node(i), g.rho) {
                assert_eq!(g.values[i], 0.0);
            }
        }
        assert!(g.sup_change < 1e-9);
        assert!(g.residual_sweep(grushin1().field()).unwrap() < 1e-9);
    }

    #[test]
    fn grid_symmetry() {
        let g = coarse();
        let n = g.shape[0];
        for i in 0..n {
            for j in 0..n {
                let v = g.values[g.index(&[i, j])];
                assert!((v - g.values[g.index(&[n - 1 - i, j])]).abs() <= 1e-9);
                assert!((v - g.values[g.index(&[i, n - 1 - j])]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sweeps_are_monotone() {
        let spec = GridSpec {
            dt: 0.02,
            ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![31, 31])
        };
        let field = grushin1();
        let controls = spec.control_directions();
        let layout = Layout::new(&spec.bx, &spec.shape).unwrap();
        let st = Stencils::build(&layout, field.field(), &controls, spec.dt, spec.rho).unwrap();
        let mut v: Vec<f64> = st.node_kind.iter().map(|k| if *k == TARGET { 0.0 } else { 1.0 }).collect();
        let mut next = v.clone();
        for _ in 0..200 {
            st.sweep(&layout, &v, &mut next, (-spec.dt).exp());
            assert!(next.iter().zip(&v).all(|(a, b)| a <= b));
            std::mem::swap(&mut v, &mut next);
        }
    }

    #[test]
    fn grushin_axis_time() {
        // unit-speed run along x_h: T(1, 0) = 1 - rho in the continuum
        let t = coarse().time_at(&[1.0, 0.0]).unwrap();
        assert!((t - 0.9).abs() <= 0.05, "{t}");
        assert_eq!(coarse().time_at(&[0.05, 0.0]).unwrap(), 0.0);
        assert!(coarse().time_at(&[2.0, 0.0]).is_err());
    }

    #[test]
    fn isotropic_eikonal() {
        let spec = GridSpec {
            dt: 0.04,
            ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![61, 61])
        };
        let g = solve_grid(SystemCatalogEntry::isotropic(2).unwrap().field(), &spec).unwrap();
        let cell = g.h[0];
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.node(i);
            worst = worst.max((g.node_time(i) - (norm(&x) - g.rho).max(0.0)).abs());
        }
        assert!(worst <= 2.0 * cell, "{worst}");
    }

    #[test]
    fn bound_dominance_and_feedback_on_coarse_grid() {
        let g = coarse();
        let u = Candidate::gauge(1).unwrap();
        let field = grushin1();
        let ham = Hamiltonian::degree1();
        let r = bound_compare(g, &u, field.field(), &ham, 0.15);
        assert!(r.pass, "{r:?}");
        let opts = IntegrateOptions::default();
        for x in [[1.0, 0.5], [-0.7, 0.3], [0.5, -0.8]] {
            let fb = feedback_reach_time(&u, field.field(), &ham, &x, g.rho, &opts).unwrap();
            assert!(fb >= g.time_at(&x).unwrap() - 0.15, "{x:?}");
        }
    }

    #[test]
    fn box_enlargement_leaves_probes_unchanged() {
        let spec = GridSpec {
            dt: 0.04,
            ..GridSpec::new(BoxDomain::cube(2, 1.5), vec![31, 31])
        };
        let d = box_sensitivity(grushin1().field(), &spec, 1.5, &[vec![0.5, 0.0], vec![0.0, 0.3], vec![0.4, 0.2]]).unwrap();
        assert!(d <= 1e-2, "{d}");
    }

    #[test]
    fn excond_examples() {
        let ham = Hamiltonian::degree1();
        let g = Candidate::gauge(1).unwrap();
        let pts = ball_samples(2, 0.5, 2000, 0);
        let r = excond_scan(&g, grushin1().field(), &ham, 0.5, 0.5, &pts).unwrap();
        assert!(r.c_hat <= 2.0 + 1e-9 && r.qualifying > 0);
        let g2 = Candidate::gauge(2).unwrap();
        let pts3 = ball_samples(3, 0.5, 2000, 1);
        let r = excond_scan(&g2, hormander2().field(), &ham, 0.25, 0.5, &pts3).unwrap();
        assert!(r.c_hat <= 4.0 + 1e-9);
        assert_eq!(excond_scan(&g, grushin1().field(), &ham, 1.5, 0.5, &pts), Err(Error::EmptyRegion));
    }

    #[test]
    fn modulus_needs_points() {
        let line = LineSpec {
            base: vec![0.0, 0.0],
            direction: vec![1.0, 0.0],
            radii: vec![0.02, 0.05, 0.5],
        };
        assert!(matches!(
            modulus_estimate(coarse(), &line),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn log_log_fit_recovers_power() {
        let pairs: Vec<(f64, f64)> = [0.1f64, 0.2, 0.4, 0.8].iter().map(|s| (*s, 3.0 * s.powf(0.5))).collect();
        let (k, r2) = log_log_fit(&pairs);
        assert_relative_eq!(k, 0.5, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gronwall_between_closed_loop_runs() {
        let u = Candidate::gauge(1).unwrap();
        let field = grushin1();
        let ham = Hamiltonian::degree1();
        let bx = BoxDomain::new(vec![0.6, 0.2], vec![1.4, 0.9]).unwrap();
        let lip = closed_loop_lipschitz(&u, field.field(), &ham, &bx, 9).unwrap();
        let opts = IntegrateOptions::default().with_horizon(0.2).with_bounds(bx);
        let x1 = [1.0, 0.5];
        let x2 = [1.01, 0.51];
        let a = dynamics::integrate(&u, field.field(), &ham, &x1, Direction::Forward, &opts).unwrap();
        let b = dynamics::integrate(&u, field.field(), &ham, &x2, Direction::Forward, &opts).unwrap();
        let t2 = a.last().t.min(b.last().t);
        let d0 = norm(&[x1[0] - x2[0], x1[1] - x2[1]]);
        let bound = d0 * (lip * t2).exp() * (1.0 + 1e-3);
        // compare at shared sample times of the first run, interpolating the second
        for s in a.samples.iter().filter(|s| s.t <= t2) {
            let k = b.samples.partition_point(|q| q.t < s.t).min(b.samples.len() - 1).max(1);
            let (p, q) = (&b.samples[k - 1], &b.samples[k]);
            let w = if q.t > p.t { (s.t - p.t) / (q.t - p.t) } else { 0.0 };
            let xb: Vec<f64> = p.x.iter().zip(&q.x).map(|(l, r)| l + w * (r - l)).collect();
            let d = norm(&[s.x[0] - xb[0], s.x[1] - xb[1]]);
            assert!(d <= bound, "t {} d {d} bound {bound}", s.t);
        }
    }
}
