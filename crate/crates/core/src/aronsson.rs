//! Tests of candidate solutions of the Aronsson equation
//! `-grad(H(x, grad U)) . H_p(x, grad U) = 0`.
//!
//! All residuals are computed for the squared Hamiltonian `c |p sigma|^2`.
//! Every verdict produced here is empirical: monotonicity is judged on sampled
//! trajectories and absolute minimality on a fixed family of competitors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::domain::BoxDomain;
use crate::dynamics::{self, Direction, Event, IntegrateOptions, Trajectory};
use crate::error::{Error, Result};
use crate::sysmodel::{Hamiltonian, HamiltonianMode, PolyMatrixField};
use crate::{dot, norm};

/// `S`, its symmetric part and the Aronsson residual at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrixReport {
    pub x: Vec<f64>,
    pub s: DMatrix<f64>,
    pub s_star: DMatrix<f64>,
    /// `w = (grad U sigma)^T`.
    pub w: Vec<f64>,
    /// `-4 c^2 w^T S* w`, the residual of the equation for `c |p sigma|^2`.
    /// With the default scale `c = 1` this is exactly `-4 w^T S* w`.
    /// Nonnegative values are the supersolution inequality.
    pub residual: f64,
    /// Eigenvalues of `S*`, ascending.
    pub eig_s_star: Vec<f64>,
    /// Degree-one magnitude `sqrt(c) |w|`.
    pub h: f64,
}

impl SMatrixReport {
    /// Residual of the degree-one equation, `residual / (4 H^2)`, since
    /// `grad(H^2) . (H^2)_p = 4 H^2 grad(H) . H_p`.
    pub fn degree1_residual(&self, tol_h: f64) -> Option<f64> {
        (self.h > tol_h).then(|| self.residual / (4.0 * self.h * self.h))
    }

    /// `S*` negative semidefinite (sigma-concavity), up to `tol`.
    pub fn sigma_concave(&self, tol: f64) -> bool {
        self.eig_s_star.last().is_none_or(|l| *l <= tol)
    }
}

/// `S = sigma^T D^2U sigma + (D sigma_j sigma_i . grad U)_{ij}` at `x`.
pub fn smatrix(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x: &[f64],
) -> Result<SMatrixReport> {
    let (n, m) = (field.n(), field.m());
    Error::check_dim("candidate dimension", n, candidate.dim())?;
    let hess = candidate.hessian(x)?;
    let (_, grad) = candidate.value_grad(x)?;
    let sigma = field.sigma(x)?;
    let partials = field.sigma_partials(x)?;

    let mut s = sigma.transpose() * &hess * &sigma;
    for i in 0..m {
        for j in 0..m {
            // (D sigma_j sigma_i)_r = sum_k d_k sigma_{rj} sigma_{ki}
            let mut acc = 0.0;
            for (r, gr) in grad.iter().enumerate() {
                let col: f64 = (0..n).map(|k| partials[k][(r, j)] * sigma[(k, i)]).sum();
                acc += gr * col;
            }
            s[(i, j)] += acc;
        }
    }
    let s_star = (&s + s.transpose()) * 0.5;
    let w = field.pullback(x, &grad)?;
    let quad: f64 = (0..m)
        .map(|i| (0..m).map(|j| w[i] * s_star[(i, j)] * w[j]).sum::<f64>())
        .sum();
    let residual = -4.0 * ham.scale * ham.scale * quad;
    let mut eig: Vec<f64> = s_star.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(SMatrixReport {
        x: x.to_vec(),
        s,
        s_star,
        h: ham.scale.sqrt() * norm(&w),
        w,
        residual,
        eig_s_star: eig,
    })
}

fn squared(ham: &Hamiltonian) -> Hamiltonian {
    Hamiltonian {
        mode: HamiltonianMode::Squared,
        ..*ham
    }
}

/// Central-difference approximation of `-grad(H^2(., grad U(.))) . G` with
/// `G = (H^2)_p(x, grad U(x))`; an independent route to
/// [`SMatrixReport::residual`] with `O(h^2)` error at C^2 points.
pub fn residual_fd(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    let sq = squared(ham);
    let (_, grad) = candidate.value_grad(x)?;
    let dir = sq.gradient_p(field, x, &grad)?;
    let g = |y: &[f64]| -> Result<f64> {
        let (_, gy) = candidate.value_grad(y)?;
        sq.value(field, y, &gy)
    };
    let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
    let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
    Ok(-(g(&xp)? - g(&xm)?) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Constant,
    Nonmonotone,
}

impl Monotonicity {
    pub fn is_nondecreasing(self) -> bool {
        matches!(self, Monotonicity::Nondecreasing | Monotonicity::Constant)
    }

    pub fn is_nonincreasing(self) -> bool {
        matches!(self, Monotonicity::Nonincreasing | Monotonicity::Constant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateOptions {
    /// Seeding offsets applied to the non-Lipschitz coordinates of the start.
    pub offsets: Vec<f64>,
    /// Slack per accepted step is `(1 + |V(0)|) (tol_mono_rate |dt| + tol_mono_floor)`.
    pub tol_mono_rate: f64,
    pub tol_mono_floor: f64,
    pub integrate: IntegrateOptions,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            offsets: vec![0.0, 1e-8, -1e-8, 1e-6, -1e-6],
            tol_mono_rate: 1e-6,
            tol_mono_floor: 1e-9,
            integrate: IntegrateOptions::default().with_horizon(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub id: usize,
    pub direction: Direction,
    pub seed: Vec<f64>,
    /// `None` when the branch produced fewer than two samples or failed.
    pub classification: Option<Monotonicity>,
    pub max_violation: f64,
    pub samples: usize,
    pub v_start: f64,
    pub v_end: f64,
    pub event: Option<Event>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCertificate {
    pub start: Vec<f64>,
    pub branches: Vec<BranchReport>,
    /// Some forward branch has `V` nondecreasing.
    pub verdict_supersolution: bool,
    /// Some forward branch has `V` nonincreasing.
    pub verdict_subsolution: bool,
    pub empirical: bool,
}

/// Classify a `(t, V)` sequence given in increasing `t`.
///
/// Returns the classification and its largest step violation (for
/// `Nonmonotone`, the smaller of the two directional violations).
pub fn classify(tv: &[(f64, f64)], rate: f64, floor: f64) -> (Monotonicity, f64) {
    let v0 = tv.first().map_or(0.0, |p| p.1);
    let mut down: f64 = 0.0;
    let mut up: f64 = 0.0;
    for w in tv.windows(2) {
        let slack = (1.0 + v0.abs()) * (rate * (w[1].0 - w[0].0).abs() + floor);
        let dv = w[1].1 - w[0].1;
        down = down.max(-dv - slack);
        up = up.max(dv - slack);
    }
    match (down <= 0.0, up <= 0.0) {
        (true, true) => (Monotonicity::Constant, 0.0),
        (true, false) => (Monotonicity::Nondecreasing, 0.0),
        (false, true) => (Monotonicity::Nonincreasing, 0.0),
        (false, false) => (Monotonicity::Nonmonotone, down.min(up)),
    }
}

/// Seed offsets: each offset applied to every non-Lipschitz coordinate of `x0`;
/// duplicates collapse, so Lipschitz starts get a single unseeded branch.
pub fn branch_seeds(candidate: &Candidate, x0: &[f64], offsets: &[f64]) -> Vec<Vec<f64>> {
    let coords = candidate.non_lipschitz_coords(x0);
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for eta in offsets {
        let mut s = vec![0.0; x0.len()];
        for &k in &coords {
            s[k] = *eta;
        }
        if !seeds.contains(&s) {
            seeds.push(s);
        }
    }
    if seeds.is_empty() {
        seeds.push(vec![0.0; x0.len()]);
    }
    seeds
}

pub fn monotonicity_certificate(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x0: &[f64],
    opts: &CertificateOptions,
) -> Result<MonotonicityCertificate> {
    let start = candidate.value_v(field, ham, x0)?;
    if start.singular {
        return Err(Error::SingularPoint { h: start.h, tol: ham.tol_h });
    }
    let seeds = branch_seeds(candidate, x0, &opts.offsets);
    let jobs: Vec<(Direction, Vec<f64>)> = [Direction::Forward, Direction::Backward]
        .into_iter()
        .flat_map(|d| seeds.iter().map(move |s| (d, s.clone())))
        .collect();
    let branches: Vec<BranchReport> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(id, (direction, seed))| {
            let io = IntegrateOptions {
                seed_offset: Some(seed.clone()),
                ..opts.integrate.clone()
            };
            match dynamics::integrate(candidate, field, ham, x0, direction, &io) {
                Ok(tr) => {
                    let tv = tr.v_in_time_order();
                    let (classification, max_violation) = if tv.len() >= 2 {
                        let (c, v) = classify(&tv, opts.tol_mono_rate, opts.tol_mono_floor);
                        (Some(c), v)
                    } else {
                        (None, 0.0)
                    };
                    BranchReport {
                        id,
                        direction,
                        seed,
                        classification,
                        max_violation,
                        samples: tr.samples.len(),
                        v_start: tr.samples[0].v,
                        v_end: tr.last().v,
                        event: Some(tr.event),
                        error: None,
                        trajectory: Some(tr),
                    }
                }
                Err(e) => BranchReport {
                    id,
                    direction,
                    seed,
                    classification: None,
                    max_violation: 0.0,
                    samples: 0,
                    v_start: f64::NAN,
                    v_end: f64::NAN,
                    event: None,
                    error: Some(e.to_string()),
                    trajectory: None,
                },
            }
        })
        .collect();
    let forward = |pred: fn(Monotonicity) -> bool| {
        branches
            .iter()
            .any(|b| b.direction == Direction::Forward && b.classification.is_some_and(pred))
    };
    Ok(MonotonicityCertificate {
        start: x0.to_vec(),
        verdict_supersolution: forward(Monotonicity::is_nondecreasing),
        verdict_subsolution: forward(Monotonicity::is_nonincreasing),
        branches,
        empirical: true,
    })
}

/// One-dimensional bump profile on `[0, 1]`, zero at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BumpProfile {
    /// `4 s (1 - s)`: vanishes on the boundary, gradient does not.
    Parabolic,
    /// `16 s^2 (1 - s)^2`: vanishes together with its gradient.
    Quartic,
}

impl BumpProfile {
    fn eval(self, s: f64) -> (f64, f64) {
        match self {
            BumpProfile::Parabolic => (4.0 * s * (1.0 - s), 4.0 - 8.0 * s),
            BumpProfile::Quartic => {
                let q = s * (1.0 - s);
                (16.0 * q * q, 32.0 * q * (1.0 - 2.0 * s))
            }
        }
    }
}

/// Tensor-product bump on `bx` and its gradient.
pub fn bump(profile: BumpProfile, bx: &BoxDomain, x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let parts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let w = bx.hi[k] - bx.lo[k];
            let (b, db) = profile.eval((x[k] - bx.lo[k]) / w);
            (b, db / w)
        })
        .collect();
    let value = parts.iter().map(|p| p.0).product();
    let grad = (0..n)
        .map(|k| {
            parts
                .iter()
                .enumerate()
                .map(|(j, p)| if j == k { p.1 } else { p.0 })
                .product()
        })
        .collect();
    (value, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmfOptions {
    pub trials: usize,
    pub amplitude: f64,
    pub tol_amf: f64,
    /// Subintervals per axis of the interior sample lattice.
    pub per_axis: usize,
    pub seed: u64,
    pub profile: BumpProfile,
}

impl Default for AmfOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            amplitude: 0.2,
            tol_amf: 1e-3,
            per_axis: 100,
            seed: 0,
            profile: BumpProfile::Parabolic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmfTrial {
    pub index: usize,
    pub beta: f64,
    /// Sampled `sup H(x, grad W(x))`.
    pub sup_h: f64,
    /// `sup_h < k_star - tol_amf`.
    pub refutes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmfReport {
    pub k_star: f64,
    pub sample_points: usize,
    pub trials: Vec<AmfTrial>,
    pub pass: bool,
    /// The competitor with the smallest sampled sup, if it refutes.
    pub competitor: Option<AmfTrial>,
    pub empirical: bool,
}

/// Necessary-condition sampler for absolute minimality: competitors
/// `W = U + beta * bump` share the boundary values of `U` on `bx`; the test
/// fails when some `W` has a sampled `sup H(x, grad W)` below
/// `k* = sup H(x, grad U)` by more than `tol_amf`.
///
/// Both sups are taken over the same strictly interior lattice.
pub fn amf_necessary_test(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    bx: &BoxDomain,
    opts: &AmfOptions,
) -> Result<AmfReport> {
    Error::check_dim("box", field.n(), bx.dim())?;
    Error::check_dim("candidate dimension", field.n(), candidate.dim())?;
    if opts.per_axis < 2 {
        return Err(Error::InvalidParameter("amf lattice needs per_axis >= 2".into()));
    }
    let pts = bx.interior_lattice(opts.per_axis);
    let c = ham.scale.sqrt();
    // H(x, grad W) = sqrt(c) |w_u + beta w_b|, linear in beta
    let pulled = pts
        .par_iter()
        .map(|x| {
            let (_, gu) = candidate.value_grad(x)?;
            let (_, gb) = bump(opts.profile, bx, x);
            Ok((field.pullback(x, &gu)?, field.pullback(x, &gb)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_at = |beta: f64| {
        pulled
            .iter()
            .map(|(wu, wb)| {
                let s: f64 = wu.iter().zip(wb).map(|(a, b)| (a + beta * b).powi(2)).sum();
                c * s.sqrt()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let k_star = sup_at(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let betas: Vec<f64> = (0..opts.trials)
        .map(|_| {
            if opts.amplitude > 0.0 {
                rng.random_range(-opts.amplitude..=opts.amplitude)
            } else {
                0.0
            }
        })
        .collect();
    let trials: Vec<AmfTrial> = betas
        .par_iter()
        .enumerate()
        .map(|(index, &beta)| {
            let sup_h = sup_at(beta);
            AmfTrial {
                index,
                beta,
                sup_h,
                refutes: sup_h < k_star - opts.tol_amf,
            }
        })
        .collect();
    let competitor = trials
        .iter()
        .filter(|t| t.refutes)
        .min_by(|a, b| a.sup_h.total_cmp(&b.sup_h).then(a.index.cmp(&b.index)))
        .copied();
    Ok(AmfReport {
        k_star,
        sample_points: pts.len(),
        pass: competitor.is_none(),
        trials,
        competitor,
        empirical: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentationReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Backward exit time, `<= 0`.
    pub t1: f64,
    /// Forward exit time, `>= 0`.
    pub t2: f64,
    pub x_t1: Vec<f64>,
    pub x_t2: Vec<f64>,
}

/// Compare `U(x0)` with `t2/(t2-t1) U(x_t1) - t1/(t2-t1) U(x_t2)` where
/// `t1 < 0 < t2` are the backward and forward exit times from `bx`.
pub fn representation_check(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    bx: &BoxDomain,
    x0: &[f64],
    opts: &IntegrateOptions,
) -> Result<RepresentationReport> {
    let io = IntegrateOptions {
        bounds: Some(bx.clone()),
        target_radius: 0.0,
        seed_offset: None,
        ..opts.clone()
    };
    let exit = |direction: Direction| -> Result<(f64, Vec<f64>)> {
        let tr = dynamics::integrate(candidate, field, ham, x0, direction, &io)?;
        match tr.event {
            Event::DomainExit(t) => Ok((t, tr.last().x.clone())),
            _ => Err(Error::NoExit {
                direction: direction.as_str(),
            }),
        }
    };
    let (t2, x_t2) = exit(Direction::Forward)?;
    let (t1, x_t1) = exit(Direction::Backward)?;
    let lhs = candidate.value(x0)?;
    let span = t2 - t1;
    let rhs = if span == 0.0 {
        lhs
    } else {
        t2 / span * candidate.value(&x_t1)? - t1 / span * candidate.value(&x_t2)?
    };
    Ok(RepresentationReport {
        lhs,
        rhs,
        t1,
        t2,
        x_t1,
        x_t2,
    })
}

/// `(residual, fd residual)` at `x`.
pub fn residual_pair(
    candidate: &Candidate,
    field: &PolyMatrixField,
    ham: &Hamiltonian,
    x: &[f64],
    h: f64,
) -> Result<(f64, f64)> {
    let s = smatrix(candidate, field, ham, x)?;
    Ok((s.residual, residual_fd(candidate, field, ham, x, h)?))
}

#[allow(dead_code)]
fn quad_form(s: &DMatrix<f64>, w: &[f64]) -> f64 {
    let sw: Vec<f64> = (0..w.len()).map(|i| (0..w.len()).map(|j| s[(i, j)] * w[j]).sum()).collect();
    dot(w, &sw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::SystemCatalogEntry;
    use proptest::prelude::*;

    fn grushin1() -> SystemCatalogEntry {
        SystemCatalogEntry::grushin(1).unwrap()
    }

    fn hormander2() -> SystemCatalogEntry {
        SystemCatalogEntry::hormander(2, SystemCatalogEntry::standard_symplectic(2)).unwrap()
    }

    #[test]
    fn gauge_residuals_vanish() {
        let ham = Hamiltonian::degree1();
        let r = smatrix(&Candidate::gauge(1).unwrap(), grushin1().field(), &ham, &[1.0, 2.0]).unwrap();
        assert!(r.residual.abs() <= 1e-8, "{}", r.residual);
        let r = smatrix(&Candidate::gauge(2).unwrap(), hormander2().field(), &ham, &[1.0, 0.0, 1.0]).unwrap();
        assert!(r.residual.abs() <= 1e-8, "{}", r.residual);
        let fd = residual_fd(&Candidate::gauge(1).unwrap(), grushin1().field(), &ham, &[1.0, 2.0], 1e-4).unwrap();
        assert!(fd.abs() <= 1e-6, "{fd}");
    }

    #[test]
    fn quadratic_on_isotropic() {
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let q = Candidate::quadratic(DMatrix::identity(2, 2)).unwrap();
        let ham = Hamiltonian::degree1();
        let r = smatrix(&q, iso.field(), &ham, &[1.0, 0.0]).unwrap();
        assert_eq!(r.s, DMatrix::identity(2, 2));
        assert_eq!(r.w, vec![1.0, 0.0]);
        assert_eq!(r.residual, -4.0);
        assert!(!r.sigma_concave(0.0));
        let fd = residual_fd(&q, iso.field(), &ham, &[1.0, 0.0], 1e-3).unwrap();
        assert!((fd + 4.0).abs() <= 1e-6, "{fd}");
        let r = smatrix(&q, iso.field(), &ham, &[0.3, -1.2]).unwrap();
        assert!((r.residual + 4.0 * (0.09 + 1.44)).abs() < 1e-12);
    }

    #[test]
    fn counterexample_off_axis_agrees_with_fd() {
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let c = Candidate::infinity_laplace_counterexample();
        let ham = Hamiltonian::squared().with_scale(0.5);
        let x = [1.0, 0.5];
        let exact = smatrix(&c, iso.field(), &ham, &x).unwrap().residual;
        let e1 = (residual_fd(&c, iso.field(), &ham, &x, 1e-2).unwrap() - exact).abs();
        let e2 = (residual_fd(&c, iso.field(), &ham, &x, 1e-3).unwrap() - exact).abs();
        assert!(exact.abs() < 1e-12, "{exact}");
        assert!(e2 <= 1e-5 && e2 <= e1, "{e1} {e2}");
        assert!(matches!(
            smatrix(&c, iso.field(), &ham, &[1.0, 0.0]),
            Err(Error::HessianUnavailable { .. })
        ));
    }

    #[test]
    fn degree1_residual_matches_fd_of_degree1_equation() {
        // -grad(H(., grad U)) . H_p by central differences along H_p
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let q = Candidate::quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let ham = Hamiltonian::degree1();
        let x = [0.7, -0.4];
        let r = smatrix(&q, iso.field(), &ham, &x).unwrap();
        let (_, g) = q.value_grad(&x).unwrap();
        let hp = ham.gradient_p(iso.field(), &x, &g).unwrap();
        let hv = |y: &[f64]| ham.value(iso.field(), y, &q.value_grad(y).unwrap().1).unwrap();
        let h = 1e-5;
        let xp: Vec<f64> = x.iter().zip(&hp).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(&hp).map(|(a, d)| a - h * d).collect();
        let fd = -(hv(&xp) - hv(&xm)) / (2.0 * h);
        let d1 = r.degree1_residual(1e-12).unwrap();
        assert!((d1 - fd).abs() <= 1e-7 * (1.0 + fd.abs()), "{d1} vs {fd}");
    }

    #[test]
    fn classification_rules() {
        let up: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.1, 1.0 + k as f64 * 0.01)).collect();
        assert_eq!(classify(&up, 1e-6, 0.0).0, Monotonicity::Nondecreasing);
        let down: Vec<(f64, f64)> = up.iter().map(|(t, v)| (*t, 2.0 - v)).collect();
        assert_eq!(classify(&down, 1e-6, 0.0).0, Monotonicity::Nonincreasing);
        let flat: Vec<(f64, f64)> = up.iter().map(|(t, _)| (*t, 1.0 + 1e-9 * t)).collect();
        assert_eq!(classify(&flat, 1e-6, 0.0).0, Monotonicity::Constant);
        let zig = vec![(0.0, 1.0), (0.1, 1.1), (0.2, 0.9)];
        let (c, v) = classify(&zig, 1e-6, 0.0);
        assert_eq!(c, Monotonicity::Nonmonotone);
        assert!(v > 0.09);
    }

    #[test]
    fn seeds_collapse_for_lipschitz_starts() {
        let g = Candidate::gauge(1).unwrap();
        assert_eq!(branch_seeds(&g, &[1.0, 0.5], &[0.0, 1e-8, -1e-8]).len(), 1);
        let c = Candidate::infinity_laplace_counterexample();
        let s = branch_seeds(&c, &[1.0, 0.0], &CertificateOptions::default().offsets);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn certificate_for_counterexample() {
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let c = Candidate::infinity_laplace_counterexample();
        let ham = Hamiltonian::squared().with_scale(0.5);
        let cert = monotonicity_certificate(&c, iso.field(), &ham, &[1.0, 0.0], &CertificateOptions::default())
            .unwrap();
        let fwd: Vec<&BranchReport> = cert.branches.iter().filter(|b| b.direction == Direction::Forward).collect();
        assert_eq!(fwd.len(), 5);
        assert_eq!(fwd[0].classification, Some(Monotonicity::Nonincreasing));
        for b in &fwd[1..] {
            assert_eq!(b.classification, Some(Monotonicity::Constant), "{b:?}");
        }
        assert!(cert.verdict_supersolution);

        let cert = monotonicity_certificate(&c, iso.field(), &ham, &[0.0, 1.0], &CertificateOptions::default())
            .unwrap();
        let on_axis = &cert.branches[0];
        assert_eq!(on_axis.seed, vec![0.0, 0.0]);
        assert_eq!(on_axis.classification, Some(Monotonicity::Nondecreasing));
    }

    #[test]
    fn certificate_for_gauge_and_its_negation() {
        let g = grushin1();
        let u = Candidate::gauge(1).unwrap();
        let ham = Hamiltonian::degree1();
        let opts = CertificateOptions::default();
        let cert = monotonicity_certificate(&u, g.field(), &ham, &[1.0, 0.5], &opts).unwrap();
        assert_eq!(cert.branches.len(), 2);
        for b in &cert.branches {
            assert_eq!(b.classification, Some(Monotonicity::Constant));
            assert!((b.v_end - b.v_start).abs() <= 1e-6);
        }
        assert!(cert.verdict_supersolution && cert.verdict_subsolution);

        let neg = u.clone().negated();
        let ncert = monotonicity_certificate(&neg, g.field(), &ham, &[1.0, 0.5], &opts).unwrap();
        assert!(ncert.verdict_supersolution && ncert.verdict_subsolution);
        // forward branch of -U retraces the backward branch of U
        let f_neg = ncert.branches[0].trajectory.as_ref().unwrap();
        let b_pos = cert.branches[1].trajectory.as_ref().unwrap();
        assert_eq!(f_neg.samples.len(), b_pos.samples.len());
        for (a, b) in f_neg.samples.iter().zip(&b_pos.samples) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.t, -b.t);
        }
    }

    #[test]
    fn amf_zero_amplitude_is_trivial() {
        let g = grushin1();
        let bx = BoxDomain::new(vec![0.5, -0.5], vec![1.5, 0.5]).unwrap();
        let opts = AmfOptions { amplitude: 0.0, trials: 5, per_axis: 20, ..Default::default() };
        let r = amf_necessary_test(&Candidate::gauge(1).unwrap(), g.field(), &Hamiltonian::degree1(), &bx, &opts)
            .unwrap();
        assert!(r.pass);
        assert!(r.trials.iter().all(|t| t.sup_h == r.k_star));
    }

    #[test]
    fn amf_quartic_profile_cannot_beat_boundary_sup() {
        // quartic bumps leave grad U untouched on the box faces
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let q = Candidate::quadratic(DMatrix::identity(2, 2)).unwrap();
        let bx = BoxDomain::new(vec![0.5, 0.5], vec![1.5, 1.5]).unwrap();
        let opts = AmfOptions { profile: BumpProfile::Quartic, trials: 50, ..Default::default() };
        let r = amf_necessary_test(&q, iso.field(), &Hamiltonian::degree1(), &bx, &opts).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn bump_vanishes_on_boundary() {
        let bx = BoxDomain::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        for p in [BumpProfile::Parabolic, BumpProfile::Quartic] {
            assert_eq!(bump(p, &bx, &[0.0, 0.3]).0, 0.0);
            assert_eq!(bump(p, &bx, &[1.0, 1.0]).0, 0.0);
            assert_eq!(bump(p, &bx, &[1.0, 0.0]).0, 1.0);
        }
        assert_eq!(bump(BumpProfile::Quartic, &bx, &[0.0, 0.3]).1, vec![0.0, 0.0]);
    }

    #[test]
    fn representation_on_degenerate_excursion() {
        let g = grushin1();
        let u = Candidate::gauge(1).unwrap();
        let bx = BoxDomain::new(vec![0.25, -1.0], vec![1.75, 1.0]).unwrap();
        let r = representation_check(&u, g.field(), &Hamiltonian::degree1(), &bx, &[0.25, 0.3], &IntegrateOptions::default())
            .unwrap();
        assert_eq!(r.t2, 0.0);
        assert!(r.t1 < 0.0);
        assert_eq!(r.rhs, r.lhs);
        assert_eq!(r.lhs, u.value(&[0.25, 0.3]).unwrap());
    }

    #[test]
    fn representation_no_exit() {
        let g = grushin1();
        let u = Candidate::gauge(1).unwrap();
        let bx = BoxDomain::cube(2, 100.0);
        let opts = IntegrateOptions::default().with_horizon(0.1);
        let err = representation_check(&u, g.field(), &Hamiltonian::degree1(), &bx, &[1.0, 0.3], &opts).unwrap_err();
        assert!(matches!(err, Error::NoExit { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fd_residual_is_second_order(
            x in 0.3f64..1.5, y in -1.0f64..1.0, a in 0.5f64..3.0, b in -1.0f64..1.0,
        ) {
            let g = grushin1();
            let q = Candidate::quadratic(DMatrix::from_row_slice(2, 2, &[a, b, b, 2.0])).unwrap();
            let ham = Hamiltonian::degree1();
            let exact = smatrix(&q, g.field(), &ham, &[x, y]).unwrap().residual;
            let e1 = (residual_fd(&q, g.field(), &ham, &[x, y], 1e-2).unwrap() - exact).abs();
            let e2 = (residual_fd(&q, g.field(), &ham, &[x, y], 1e-3).unwrap() - exact).abs();
            let scale = 1.0 + exact.abs();
            prop_assert!(e2 <= 1e-2 * scale, "e1 {} e2 {}", e1, e2);
            prop_assert!(e2 <= 0.02 * e1 + 1e-8 * scale, "e1 {} e2 {}", e1, e2);
        }

        #[test]
        fn negative_semidefinite_s_star_gives_nonnegative_residual(
            w in prop::collection::vec(-2.0f64..2.0, 2),
            d in prop::collection::vec(0.0f64..3.0, 2),
            th in 0.0f64..std::f64::consts::PI,
        ) {
            // S* = -R diag(d) R^T is negative semidefinite
            let (c, s) = (th.cos(), th.sin());
            let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            let sstar = -(&r * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * r.transpose());
            prop_assert!(-4.0 * quad_form(&sstar, &w) >= -1e-12);
        }
    }
}
