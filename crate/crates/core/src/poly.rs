//! Dense-in-terms multivariate polynomials with exact differentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single term `coeff * x_1^e_1 * ... * x_n^e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Self { coeff, exponents }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&e, &xi)| match e {
                0 => acc,
                1 => acc * xi,
                _ => acc * xi.powi(e as i32),
            })
    }
}

/// A polynomial in `nvars` variables stored as a list of monomials.
///
/// Terms are not merged or sorted; evaluation cost is linear in the number of
/// stored terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(nvars: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            Error::check_dim("monomial exponent vector", nvars, t.exponents.len())?;
            if !t.coeff.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite polynomial coefficient {}",
                    t.coeff
                )));
            }
        }
        Ok(Self { nvars, terms })
    }

    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(nvars);
        }
        Self {
            nvars,
            terms: vec![Monomial::new(c, vec![0; nvars])],
        }
    }

    /// `c * x_i`.
    pub fn linear(nvars: usize, i: usize, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(nvars);
        }
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self {
            nvars,
            terms: vec![Monomial::new(c, e)],
        }
    }

    /// Build from `(coeff, exponents)` pairs as they appear in config tables.
    pub fn from_table(nvars: usize, table: &[(f64, Vec<u32>)]) -> Result<Self> {
        Self::new(
            nvars,
            table
                .iter()
                .map(|(c, e)| Monomial::new(*c, e.clone()))
                .collect(),
        )
    }

    pub fn to_table(&self) -> Vec<(f64, Vec<u32>)> {
        self.terms
            .iter()
            .map(|t| (t.coeff, t.exponents.clone()))
            .collect()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|t| t.coeff != 0.0)
            .map(|t| t.exponents.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// Evaluate at `x`; `x.len()` must equal `nvars`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Self {
        assert!(var < self.nvars, "variable index out of range");
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exponents[var] > 0 && t.coeff != 0.0)
            .map(|t| {
                let mut e = t.exponents.clone();
                let k = e[var];
                e[var] -= 1;
                Monomial::new(t.coeff * k as f64, e)
            })
            .collect();
        Self {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.nvars).map(|k| self.derivative(k)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|t| Monomial::new(t.coeff * c, t.exponents.clone()))
                .collect(),
        }
    }
}
