//! Closed-loop Hamiltonian dynamics `x' = -H_p(x, grad U(x))` with event
//! detection and branch seeding.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::norm;
use crate::ode::{Dopri5, RhsFailure};
use crate::sysmodel::{Hamiltonian, PolyMatrixField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateOptions {
    pub horizon: f64,
    /// Target is the closed ball `|x| <= target_radius`; 0 disables it.
    pub target_radius: f64,
    pub bounds: Option<BoxDomain>,
    /// Added to the start point at `t = 0` only.
    pub seed_offset: Option<Vec<f64>>,
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            target_radius: 1e-3,
            bounds: None,
            seed_offset: None,
            rtol: 1e-9,
            atol: 1e-12,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

impl IntegrateOptions {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_target_radius(mut self, rho: f64) -> Self {
        self.target_radius = rho;
        self
    }

    pub fn with_bounds(mut self, bounds: BoxDomain) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_seed(mut self, seed: Vec<f64>) -> Self {
        self.seed_offset = Some(seed);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub v: f64,
    /// Unit feedback control; `None` at singular points.
    pub a: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "t", rename_all = "snake_case")]
pub enum Event {
    TargetHit(f64),
    DomainExit(f64),
    SingularCapture(f64),
    Horizon(f64),
    StepFailure(f64),
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::TargetHit(t)
            | Event::DomainExit(t)
            | Event::SingularCapture(t)
            | Event::Horizon(t)
            | Event::StepFailure(t) => t,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Event::TargetHit(_) => "target_hit",
            Event::DomainExit(_) => "domain_exit",
            Event::SingularCapture(_) => "singular_capture",
            Event::Horizon(_) => "horizon",
            Event::StepFailure(_) => "step_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub direction: Direction,
    pub branch_seed: Vec<f64>,
    pub samples: Vec<Sample>,
    pub event: Event,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Sampled `V` in physical time order (`t` increasing).
    pub fn v_in_time_order(&self) -> Vec<(f64, f64)> {
        let mut tv: Vec<(f64, f64)> = self.samples.iter().map(|s| (s.t, s.v)).collect();
        if self.direction == Direction::Backward {
            tv.reverse();
        }
        tv
    }

    /// CSV with columns `t, x1..xn, U, V, a1..am, event`; the event label is
    /// written on the final row only.
    pub fn write_csv<W: Write>(&self, mut w: W, control_dim: usize) -> io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("U".into());
        header.push("V".into());
        header.extend((1..=control_dim).map(|i| format!("a{i}")));
        header.push("event".into());
        writeln!(w, "{}", header.join(","))?;
        let last = self.samples.len().saturating_sub(1);
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = vec![fmt_num(s.t)];
            row.extend(s.x.iter().map(|v| fmt_num(*v)));
            row.push(fmt_num(s.u));
            row.push(fmt_num(s.v));
            match &s.a {
                Some(a) => row.extend(a.iter().map(|v| fmt_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), control_dim)),
            }
            row.push(if k == last { self.event.label().into() } else { String::new() });
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Event time for a target hit, `None` otherwise.
pub fn hit_time(traj: &Trajectory) -> Option<f64> {
    match traj.event {
        Event::TargetHit(t) => Some(t),
        _ => None,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Hit {
    Target,
    Exit,
    Singular,
}

struct ClosedLoop<'a> {
    candidate: &'a Candidate,
    field: &'a PolyMatrixField,
    ham: &'a Hamiltonian,
    sign: f64,
}

impl ClosedLoop<'_> {
    fn rhs(&self, x: &[f64], out: &mut [f64]) -> std::result::Result<(), RhsFailure> {
        let (_, g) = self.candidate.value_grad(x).map_err(|_| RhsFailure)?;
        let hp = self.ham.gradient_p(self.field, x, &g).map_err(|_| RhsFailure)?;
        for (o, v) in out.iter_mut().zip(hp) {
            *o = -self.sign * v;
        }
        Ok(())
    }

    fn sample(&self, t: f64, x: &[f64]) -> Sample {
        match self.candidate.value_grad(x) {
            Ok((u, g)) => {
                let v = self.ham.magnitude(self.field, x, &g).unwrap_or(f64::NAN);
                let a = self.ham.feedback(self.field, x, &g).ok();
                Sample { t, x: x.to_vec(), u, v, a }
            }
            Err(_) => Sample {
                t,
                x: x.to_vec(),
                u: f64::NAN,
                v: f64::NAN,
                a: None,
            },
        }
    }
}

const STALL_RATIO: f64 = 1e-4;
const STALL_STEPS: usize = 1000;

/// Integrate the closed loop from `x0 + seed_offset` until the first event.
///
/// The step controller is the Dormand–Prince 5(4) pair with safety factor 0.9
/// and maximum step `horizon / 100`. Event times are located by bisection on
/// the length of the final step. A run whose accepted steps stay below
/// `1e-4 * horizon / 100` for 1000 consecutive steps is stalled (typically
/// chattering across a set where the field is not Lipschitz) and ends with
/// [`Event::StepFailure`].
pub fn integrate(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x0: &[f64],
    direction: Direction,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = field.n();
    Error::check_dim("start point", n, x0.len())?;
    Error::check_dim("candidate dimension", n, candidate.dim())?;
    if !(opts.horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {}", opts.horizon)));
    }
    let seed = match &opts.seed_offset {
        Some(s) => {
            Error::check_dim("seed offset", n, s.len())?;
            s.clone()
        }
        None => vec![0.0; n],
    };
    let mut y: Vec<f64> = x0.iter().zip(&seed).map(|(a, b)| a + b).collect();
    let sys = ClosedLoop {
        candidate,
        field,
        ham,
        sign: direction.sign(),
    };
    let sign = direction.sign();
    let finish = |samples: Vec<Sample>, event: Event| Trajectory {
        direction,
        branch_seed: seed.clone(),
        samples,
        event,
    };

    let check = |x: &[f64]| -> Option<Hit> {
        if opts.target_radius > 0.0 && norm(x) <= opts.target_radius {
            return Some(Hit::Target);
        }
        if let Some(b) = &opts.bounds {
            if !b.contains(x) {
                return Some(Hit::Exit);
            }
        }
        match candidate.value_grad(x) {
            Ok((_, g)) => match ham.magnitude(field, x, &g) {
                Ok(h) if h > ham.tol_h => None,
                _ => Some(Hit::Singular),
            },
            Err(_) => Some(Hit::Singular),
        }
    };
    let to_event = |hit: Hit, t: f64| match hit {
        Hit::Target => Event::TargetHit(t),
        Hit::Exit => Event::DomainExit(t),
        Hit::Singular => Event::SingularCapture(t),
    };

    let first = sys.sample(0.0, &y);
    match check(&y) {
        Some(Hit::Singular) => {
            let (_, g) = candidate.value_grad(&y)?;
            let h = ham.magnitude(field, &y, &g)?;
            return Err(Error::SingularPoint { h, tol: ham.tol_h });
        }
        Some(hit) => return Ok(finish(vec![first], to_event(hit, 0.0))),
        None => {}
    }

    let mut k1 = vec![0.0; n];
    if sys.rhs(&y, &mut k1).is_err() {
        return Err(Error::EvalOutsideDomain { x: y });
    }
    // on the boundary with an outward velocity component: immediate exit
    if let Some(b) = &opts.bounds {
        if b.boundary_faces(&y).iter().any(|(k, s)| k1[*k] * s > 0.0) {
            return Ok(finish(vec![first], Event::DomainExit(0.0)));
        }
    }

    let ig = Dopri5 {
        rtol: opts.rtol,
        atol: opts.atol,
        h_min: opts.h_min,
        h_max: opts.horizon / 100.0,
        ..Default::default()
    };
    let mut samples = vec![first];
    let mut s = 0.0;
    if opts.horizon == 0.0 {
        return Ok(finish(samples, Event::Horizon(0.0)));
    }
    let rhs = |x: &[f64], out: &mut [f64]| sys.rhs(x, out);
    let mut h = ig.initial_step(&y, &k1);
    let mut steps = 0usize;
    let mut short_run = 0usize;
    loop {
        let remaining = opts.horizon - s;
        let last_step = h >= remaining;
        let h_try = if last_step { remaining } else { h };
        steps += 1;
        if steps > opts.max_steps {
            return Ok(finish(samples, Event::StepFailure(sign * s)));
        }
        let trial = match ig.step(&rhs, &y, &k1, h_try) {
            Ok(st) => st,
            Err(RhsFailure) => {
                h = h_try * 0.5;
                if h < ig.h_min {
                    return Ok(finish(samples, Event::StepFailure(sign * s)));
                }
                continue;
            }
        };
        if !(trial.err <= 1.0) {
            h = h_try * ig.factor(trial.err);
            if !(trial.err.is_finite()) {
                h = h_try * ig.fac_min;
            }
            if h < ig.h_min {
                return Ok(finish(samples, Event::StepFailure(sign * s)));
            }
            continue;
        }

        if let Some(hit) = check(&trial.y) {
            // bisection on the step length for the first crossing
            let (mut lo, mut hi) = (0.0, h_try);
            let mut y_hi = trial.y.clone();
            for _ in 0..200 {
                if hi - lo <= 1e-15 * (1.0 + s) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                match ig.step(&rhs, &y, &k1, mid) {
                    Ok(st) if check(&st.y).is_none() => lo = mid,
                    Ok(st) => {
                        hi = mid;
                        y_hi = st.y;
                    }
                    Err(_) => hi = mid,
                }
            }
            let hit = check(&y_hi).unwrap_or(hit);
            let t = sign * (s + hi);
            samples.push(sys.sample(t, &y_hi));
            return Ok(finish(samples, to_event(hit, t)));
        }

        s = if last_step { opts.horizon } else { s + h_try };
        short_run = if h_try < STALL_RATIO * ig.h_max { short_run + 1 } else { 0 };
        y = trial.y;
        k1 = trial.f_new;
        samples.push(sys.sample(sign * s, &y));
        if last_step {
            return Ok(finish(samples, Event::Horizon(sign * s)));
        }
        if short_run >= STALL_STEPS {
            return Ok(finish(samples, Event::StepFailure(sign * s)));
        }
        h = (h_try * ig.factor(trial.err)).min(ig.h_max);
    }
}
