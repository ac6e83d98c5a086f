//! Closed-form candidate functions `U` with exact gradients and, where they
//! exist, exact hessians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::sysmodel::{Hamiltonian, PolyMatrixField};

#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    /// `U(x) = (|x_h|^4 + 4 x_v^2)^(1/4)` on `R^(m+1)`; C-infinity off the origin.
    Gauge { m: usize },
    /// `U(x) = sum_i s_i |x_i|^alpha_i`, `alpha_i > 1`, `s_i = +-1`.
    AbsPower { exponents: Vec<f64>, signs: Vec<f64> },
    /// `U(x) = x^T Q x / 2` with `Q` symmetric.
    Quadratic { q: DMatrix<f64> },
    Polynomial(Polynomial),
    Negated(Box<Candidate>),
}

/// `U`, `grad U` and (when available) `D^2 U` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEval {
    pub u: f64,
    pub grad: Vec<f64>,
    pub hess: Option<DMatrix<f64>>,
}

/// `V(x) = H(x, grad U(x))` bundled with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueAlongGradient {
    pub x: Vec<f64>,
    pub u: f64,
    pub grad: Vec<f64>,
    /// Degree-one magnitude of the Hamiltonian at `(x, grad U(x))`.
    pub h: f64,
    pub singular: bool,
}

impl Candidate {
    pub fn gauge(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("gauge needs m >= 1".into()));
        }
        Ok(Candidate::Gauge { m })
    }

    pub fn abspower(exponents: Vec<f64>, signs: Vec<f64>) -> Result<Self> {
        Error::check_dim("abspower signs", exponents.len(), signs.len())?;
        if exponents.is_empty() {
            return Err(Error::InvalidParameter("abspower needs at least one term".into()));
        }
        if let Some(a) = exponents.iter().find(|a| !(**a > 1.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!("abspower exponent {a} must exceed 1")));
        }
        if let Some(s) = signs.iter().find(|s| s.abs() != 1.0) {
            return Err(Error::InvalidParameter(format!("abspower sign {s} must be +1 or -1")));
        }
        Ok(Candidate::AbsPower { exponents, signs })
    }

    /// `|x|^(4/3) - |y|^(4/3)`: a viscosity solution of the infinity-Laplace
    /// equation that is C^1 but not C^2 on the axes.
    pub fn infinity_laplace_counterexample() -> Self {
        Candidate::AbsPower {
            exponents: vec![4.0 / 3.0, 4.0 / 3.0],
            signs: vec![1.0, -1.0],
        }
    }

    pub fn quadratic(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::InvalidParameter("quadratic Q must be square and nonempty".into()));
        }
        if (&q - q.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidParameter("quadratic Q must be symmetric".into()));
        }
        Ok(Candidate::Quadratic { q })
    }

    pub fn negated(self) -> Self {
        match self {
            Candidate::Negated(inner) => *inner,
            other => Candidate::Negated(Box::new(other)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Candidate::Gauge { m } => m + 1,
            Candidate::AbsPower { exponents, .. } => exponents.len(),
            Candidate::Quadratic { q } => q.nrows(),
            Candidate::Polynomial(p) => p.nvars(),
            Candidate::Negated(c) => c.dim(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Candidate::Gauge { m } => format!("gauge(m={m})"),
            Candidate::AbsPower { exponents, signs } => format!("abspower({exponents:?}, {signs:?})"),
            Candidate::Quadratic { .. } => "quadratic".into(),
            Candidate::Polynomial(_) => "polynomial".into(),
            Candidate::Negated(c) => format!("-{}", c.name()),
        }
    }

    /// `(U(x), grad U(x))`.
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Error::check_dim("candidate point", self.dim(), x.len())?;
        match self {
            Candidate::Gauge { m } => {
                let u = gauge_u(*m, x);
                if u <= 0.0 {
                    return Err(Error::EvalOutsideDomain { x: x.to_vec() });
                }
                let du = gauge_du(*m, x);
                let c = 0.25 * u.powf(-0.75);
                Ok((u.powf(0.25), du.into_iter().map(|d| c * d).collect()))
            }
            Candidate::AbsPower { exponents, signs } => {
                let mut u = 0.0;
                let mut g = Vec::with_capacity(x.len());
                for ((xi, a), s) in x.iter().zip(exponents).zip(signs) {
                    let r = xi.abs();
                    u += s * r.powf(*a);
                    g.push(if r == 0.0 { 0.0 } else { s * a * xi.signum() * r.powf(a - 1.0) });
                }
                Ok((u, g))
            }
            Candidate::Quadratic { q } => {
                let g: Vec<f64> = (0..q.nrows())
                    .map(|i| (0..q.ncols()).map(|j| q[(i, j)] * x[j]).sum())
                    .collect();
                let u = 0.5 * crate::dot(x, &g);
                Ok((u, g))
            }
            Candidate::Polynomial(p) => Ok((p.eval(x), p.gradient().iter().map(|d| d.eval(x)).collect())),
            Candidate::Negated(c) => {
                let (u, g) = c.value_grad(x)?;
                Ok((-u, g.into_iter().map(|v| -v).collect()))
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }

    /// Exact `D^2 U(x)`; [`Error::HessianUnavailable`] where `U` is not C^2.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim("candidate point", self.dim(), x.len())?;
        let n = x.len();
        match self {
            Candidate::Gauge { m } => {
                let u = gauge_u(*m, x);
                if u <= 0.0 {
                    return Err(Error::EvalOutsideDomain { x: x.to_vec() });
                }
                let du = gauge_du(*m, x);
                let r2: f64 = x[..*m].iter().map(|v| v * v).sum();
                let mut d2u = DMatrix::zeros(n, n);
                for i in 0..*m {
                    for j in 0..*m {
                        d2u[(i, j)] = 8.0 * x[i] * x[j] + if i == j { 4.0 * r2 } else { 0.0 };
                    }
                }
                d2u[(*m, *m)] = 8.0;
                let c1 = 0.25 * u.powf(-0.75);
                let c2 = -3.0 / 16.0 * u.powf(-1.75);
                Ok(DMatrix::from_fn(n, n, |i, j| c1 * d2u[(i, j)] + c2 * du[i] * du[j]))
            }
            Candidate::AbsPower { exponents, signs } => {
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    let (a, r) = (exponents[i], x[i].abs());
                    if r == 0.0 && a < 2.0 {
                        return Err(Error::HessianUnavailable { x: x.to_vec() });
                    }
                    h[(i, i)] = if a == 2.0 {
                        2.0 * signs[i]
                    } else {
                        signs[i] * a * (a - 1.0) * r.powf(a - 2.0)
                    };
                }
                Ok(h)
            }
            Candidate::Quadratic { q } => Ok(q.clone()),
            Candidate::Polynomial(p) => {
                let g = p.gradient();
                Ok(DMatrix::from_fn(n, n, |i, j| g[i].derivative(j).eval(x)))
            }
            Candidate::Negated(c) => Ok(-c.hessian(x)?),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<CandidateEval> {
        let (u, grad) = self.value_grad(x)?;
        let hess = match self.hessian(x) {
            Ok(h) => Some(h),
            Err(Error::HessianUnavailable { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(CandidateEval { u, grad, hess })
    }

    /// Coordinates along which the closed-loop field fails to be Lipschitz at
    /// `x` (the hessian-unavailable set); these are the coordinates that branch
    /// seeding perturbs.
    pub fn non_lipschitz_coords(&self, x: &[f64]) -> Vec<usize> {
        match self {
            Candidate::AbsPower { exponents, .. } => x
                .iter()
                .zip(exponents)
                .enumerate()
                .filter(|(_, (xi, a))| **xi == 0.0 && **a < 2.0)
                .map(|(i, _)| i)
                .collect(),
            Candidate::Negated(c) => c.non_lipschitz_coords(x),
            _ => Vec::new(),
        }
    }

    /// `V(x) = H(x, grad U(x))` with singular classification.
    pub fn value_v(&self, field: &PolyMatrixField, ham: &Hamiltonian, x: &[f64]) -> Result<ValueAlongGradient> {
        let (u, grad) = self.value_grad(x)?;
        let h = ham.magnitude(field, x, &grad)?;
        Ok(ValueAlongGradient {
            x: x.to_vec(),
            u,
            grad,
            h,
            singular: h <= ham.tol_h,
        })
    }
}

fn gauge_u(m: usize, x: &[f64]) -> f64 {
    let r2: f64 = x[..m].iter().map(|v| v * v).sum();
    r2 * r2 + 4.0 * x[m] * x[m]
}

fn gauge_du(m: usize, x: &[f64]) -> Vec<f64> {
    let r2: f64 = x[..m].iter().map(|v| v * v).sum();
    let mut d: Vec<f64> = x[..m].iter().map(|v| 4.0 * r2 * v).collect();
    d.push(8.0 * x[m]);
    d
}
