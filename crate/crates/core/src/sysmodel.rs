//! Symmetric control systems `f(x, a) = sigma(x) a` with `a` in the closed unit
//! ball of `R^m`, and the Hamiltonian-level quantities built on them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::{dot, norm};

/// Default threshold below which `H(x, p)` counts as zero.
pub const DEFAULT_TOL_H: f64 = 1e-12;

/// `sigma(x)` as an `n x m` matrix of polynomials in `x_1..x_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrixField {
    n: usize,
    m: usize,
    /// Row-major entries.
    entries: Vec<Polynomial>,
    /// `partials[k]` holds the entries of `d sigma / d x_k`, row-major.
    partials: Vec<Vec<Polynomial>>,
    lipschitz_bound: f64,
}

impl PolyMatrixField {
    /// `entries` is row-major (`n` rows of `m` polynomials).
    pub fn new(n: usize, m: usize, entries: Vec<Polynomial>, lipschitz_bound: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("sigma must have n, m >= 1".into()));
        }
        Error::check_dim("sigma entries", n * m, entries.len())?;
        for p in &entries {
            Error::check_dim("sigma entry variables", n, p.nvars())?;
        }
        if !(lipschitz_bound >= 0.0) || !lipschitz_bound.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lipschitz bound must be a finite real >= 0, got {lipschitz_bound}"
            )));
        }
        let partials = (0..n)
            .map(|k| entries.iter().map(|p| p.derivative(k)).collect())
            .collect();
        Ok(Self {
            n,
            m,
            entries,
            partials,
            lipschitz_bound,
        })
    }

    /// Build with the Lipschitz bound estimated on `bx` (see [`Self::estimate_lipschitz`]).
    pub fn with_lipschitz_on_box(
        n: usize,
        m: usize,
        entries: Vec<Polynomial>,
        bx: &BoxDomain,
        per_axis: usize,
    ) -> Result<Self> {
        let mut field = Self::new(n, m, entries, 0.0)?;
        field.lipschitz_bound = field.estimate_lipschitz(bx, per_axis)?;
        Ok(field)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn entry(&self, row: usize, col: usize) -> &Polynomial {
        &self.entries[row * self.m + col]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        Error::check_dim("state", self.n, x.len())
    }

    pub fn sigma(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(DMatrix::from_row_iterator(
            self.n,
            self.m,
            self.entries.iter().map(|p| p.eval(x)),
        ))
    }

    /// `[d sigma / d x_k (x)]_k`, each `n x m`, by exact differentiation.
    pub fn sigma_partials(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(x)?;
        Ok(self
            .partials
            .iter()
            .map(|ps| DMatrix::from_row_iterator(self.n, self.m, ps.iter().map(|p| p.eval(x))))
            .collect())
    }

    /// `f(x, a) = sigma(x) a`.
    pub fn apply(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("control", self.m, a.len())?;
        let s = self.sigma(x)?;
        Ok((0..self.n)
            .map(|r| (0..self.m).map(|j| s[(r, j)] * a[j]).sum())
            .collect())
    }

    /// `w = sigma(x)^T p^T`, i.e. the row vector `p sigma(x)` transposed.
    pub fn pullback(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("covector", self.n, p.len())?;
        let s = self.sigma(x)?;
        Ok((0..self.m)
            .map(|j| (0..self.n).map(|r| s[(r, j)] * p[r]).sum())
            .collect())
    }

    /// Sampled Lipschitz constant of `sigma` on `bx`: the largest operator norm
    /// of the directional derivative `sum_k v_k d_k sigma` over lattice nodes
    /// (`per_axis` per axis) and sampled unit directions `v`.
    /// Returns 0 for constant fields.
    pub fn estimate_lipschitz(&self, bx: &BoxDomain, per_axis: usize) -> Result<f64> {
        Error::check_dim("box", self.n, bx.dim())?;
        if self.partials.iter().all(|ps| ps.iter().all(Polynomial::is_zero)) {
            return Ok(0.0);
        }
        let dirs = crate::controls::sphere_directions(self.n, crate::controls::default_count(self.n));
        let mut best: f64 = 0.0;
        for x in bx.lattice(per_axis.max(2)) {
            let parts = self.sigma_partials(&x)?;
            for v in &dirs {
                let mut d = DMatrix::zeros(self.n, self.m);
                for (vk, pk) in v.iter().zip(&parts) {
                    d += pk * *vk;
                }
                best = best.max(d.svd(false, false).singular_values.max());
            }
        }
        Ok(best)
    }

    /// Sampled check of the Lipschitz invariant on `bx`: for all lattice pairs,
    /// `|sigma(x) - sigma(y)|_2 <= L |x - y|` up to relative slack `1e-9`.
    pub fn lipschitz_holds_on(&self, bx: &BoxDomain, per_axis: usize) -> Result<bool> {
        let pts = bx.lattice(per_axis.max(2));
        let mats = pts
            .iter()
            .map(|x| self.sigma(x))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let dx: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| a - b).collect();
                let d = norm(&dx);
                let op = (&mats[i] - &mats[j]).svd(false, false).singular_values.max();
                if op > self.lipschitz_bound * d * (1.0 + 1e-9) + 1e-15 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Which built-in system a [`SystemCatalogEntry`] was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemKind {
    /// `sigma = I_n`.
    Isotropic { n: usize },
    /// `sigma = [I_m ; (B x_h)^T]`, `n = m + 1`.
    Hormander { m: usize, b: Vec<Vec<f64>> },
    /// `sigma = [[I_m, 0_m], [0, x_h^T]]`, `n = m + 1`, `2m` controls.
    Grushin { m: usize },
    Custom,
}

/// A named system together with its derived sigma-field.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemCatalogEntry {
    pub kind: SystemKind,
    field: PolyMatrixField,
}

impl SystemCatalogEntry {
    pub fn isotropic(n: usize) -> Result<Self> {
        let entries = (0..n)
            .flat_map(|r| (0..n).map(move |j| (r, j)))
            .map(|(r, j)| Polynomial::constant(n, if r == j { 1.0 } else { 0.0 }))
            .collect();
        Ok(Self {
            kind: SystemKind::Isotropic { n },
            field: PolyMatrixField::new(n, n, entries, 0.0)?,
        })
    }

    /// The canonical skew matrix `B = diag([[0, -1], [1, 0]], ...)`.
    pub fn standard_symplectic(m: usize) -> Vec<Vec<f64>> {
        let mut b = vec![vec![0.0; m]; m];
        for k in (0..m.saturating_sub(1)).step_by(2) {
            b[k][k + 1] = -1.0;
            b[k + 1][k] = 1.0;
        }
        b
    }

    /// Hormander-type fields. Requires `m` even and `B^T = -B = B^{-1}` to 1e-12.
    pub fn hormander(m: usize, b: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 || !m.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "hormander system needs an even m >= 2, got {m}"
            )));
        }
        Error::check_dim("B rows", m, b.len())?;
        for row in &b {
            Error::check_dim("B columns", m, row.len())?;
        }
        let bm = DMatrix::from_fn(m, m, |i, j| b[i][j]);
        let skew = (&bm + bm.transpose()).abs().max();
        let inv = (&bm * &bm + DMatrix::identity(m, m)).abs().max();
        if skew > 1e-12 || inv > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "B must satisfy B^T = -B = B^-1 (skew defect {skew:e}, inverse defect {inv:e})"
            )));
        }
        let n = m + 1;
        let mut entries = Vec::with_capacity(n * m);
        for r in 0..m {
            for j in 0..m {
                entries.push(Polynomial::constant(n, if r == j { 1.0 } else { 0.0 }));
            }
        }
        // last row: (B x_h)_j = sum_k B[j][k] x_k
        for row in &b {
            let terms = row
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .flat_map(|(k, c)| Polynomial::linear(n, k, *c).terms().to_vec())
                .collect();
            entries.push(Polynomial::new(n, terms)?);
        }
        // |sigma(x)a - sigma(y)a| = |<B(x_h - y_h), a>| <= |x_h - y_h|
        Ok(Self {
            kind: SystemKind::Hormander { m, b },
            field: PolyMatrixField::new(n, m, entries, 1.0)?,
        })
    }

    pub fn grushin(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("grushin system needs m >= 1".into()));
        }
        let n = m + 1;
        let cols = 2 * m;
        let mut entries = Vec::with_capacity(n * cols);
        for r in 0..m {
            for j in 0..cols {
                entries.push(Polynomial::constant(n, if r == j { 1.0 } else { 0.0 }));
            }
        }
        for j in 0..cols {
            entries.push(if j < m {
                Polynomial::zero(n)
            } else {
                Polynomial::linear(n, j - m, 1.0)
            });
        }
        Ok(Self {
            kind: SystemKind::Grushin { m },
            field: PolyMatrixField::new(n, cols, entries, 1.0)?,
        })
    }

    pub fn custom(field: PolyMatrixField) -> Self {
        Self {
            kind: SystemKind::Custom,
            field,
        }
    }

    pub fn field(&self) -> &PolyMatrixField {
        &self.field
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SystemKind::Isotropic { .. } => "isotropic",
            SystemKind::Hormander { .. } => "hormander",
            SystemKind::Grushin { .. } => "grushin",
            SystemKind::Custom => "custom",
        }
    }

    /// Number of leading "horizontal" coordinates `x_h`; the singular manifold
    /// of the built-ins is `{x_h = 0}`. Isotropic and custom systems use all
    /// but the last coordinate.
    pub fn horizontal_dim(&self) -> usize {
        match self.kind {
            SystemKind::Hormander { m, .. } | SystemKind::Grushin { m } => m,
            _ => self.field.n().saturating_sub(1).max(1),
        }
    }

    /// Largest `|x_h|`-component of `f(x, a)` over the sampled unit directions.
    /// Positive values mean the vectogram is not tangent to `{x_h = 0}` at `x`.
    pub fn evasion_check(&self, x: &[f64], controls: &[Vec<f64>]) -> Result<f64> {
        let mh = self.horizontal_dim();
        Error::check_dim("state", self.field.n(), x.len())?;
        if norm(&x[..mh]) > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "evasion check expects x_h = 0, got {:?}",
                &x[..mh]
            )));
        }
        let s = self.field.sigma(x)?;
        let mut best: f64 = 0.0;
        for a in controls {
            Error::check_dim("control", self.field.m(), a.len())?;
            let h: f64 = (0..mh)
                .map(|r| {
                    let v: f64 = (0..self.field.m()).map(|j| s[(r, j)] * a[j]).sum();
                    v * v
                })
                .sum();
            best = best.max(h.sqrt());
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianMode {
    /// `H = |p sigma|`, homogeneity `r = 1`.
    Degree1,
    /// `H^2 = |p sigma|^2`, homogeneity `r = 2`.
    Squared,
}

/// Hamiltonian convention: mode, a scale `c` applied to `H^2` (so the degree-one
/// value is `sqrt(c) |p sigma|`), and the singular threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hamiltonian {
    pub mode: HamiltonianMode,
    pub scale: f64,
    pub tol_h: f64,
}

impl Default for Hamiltonian {
    fn default() -> Self {
        Self {
            mode: HamiltonianMode::Degree1,
            scale: 1.0,
            tol_h: DEFAULT_TOL_H,
        }
    }
}

/// Outcome of [`Hamiltonian::singular_indicator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    Regular(f64),
    Singular,
}

impl Hamiltonian {
    pub fn degree1() -> Self {
        Self::default()
    }

    pub fn squared() -> Self {
        Self {
            mode: HamiltonianMode::Squared,
            ..Self::default()
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_tol(mut self, tol_h: f64) -> Self {
        self.tol_h = tol_h;
        self
    }

    /// Homogeneity degree `r`.
    pub fn degree(&self) -> u32 {
        match self.mode {
            HamiltonianMode::Degree1 => 1,
            HamiltonianMode::Squared => 2,
        }
    }

    /// Degree-one magnitude `sqrt(c) |p sigma(x)|`, whatever the mode.
    pub fn magnitude(&self, field: &PolyMatrixField, x: &[f64], p: &[f64]) -> Result<f64> {
        Ok(self.scale.sqrt() * norm(&field.pullback(x, p)?))
    }

    /// `H(x, p)` in degree-one mode, `H^2(x, p)` in squared mode.
    pub fn value(&self, field: &PolyMatrixField, x: &[f64], p: &[f64]) -> Result<f64> {
        let w = field.pullback(x, p)?;
        Ok(match self.mode {
            HamiltonianMode::Degree1 => self.scale.sqrt() * norm(&w),
            HamiltonianMode::Squared => self.scale * dot(&w, &w),
        })
    }

    /// `H_p` (degree one) or `(H^2)_p` (squared).
    pub fn gradient_p(&self, field: &PolyMatrixField, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let s = field.sigma(x)?;
        Error::check_dim("covector", field.n(), p.len())?;
        let w: Vec<f64> = (0..field.m())
            .map(|j| (0..field.n()).map(|r| s[(r, j)] * p[r]).sum())
            .collect();
        let factor = match self.mode {
            HamiltonianMode::Degree1 => {
                let h = self.scale.sqrt() * norm(&w);
                if h <= self.tol_h {
                    return Err(Error::SingularPoint { h, tol: self.tol_h });
                }
                self.scale / h
            }
            HamiltonianMode::Squared => 2.0 * self.scale,
        };
        Ok((0..field.n())
            .map(|r| factor * (0..field.m()).map(|j| s[(r, j)] * w[j]).sum::<f64>())
            .collect())
    }

    /// Unit feedback control `a_x = -sigma^T grad / |sigma^T grad|`.
    pub fn feedback(&self, field: &PolyMatrixField, x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        let w = field.pullback(x, grad)?;
        let r = norm(&w);
        let h = self.scale.sqrt() * r;
        if h <= self.tol_h {
            return Err(Error::SingularPoint { h, tol: self.tol_h });
        }
        Ok(w.into_iter().map(|v| -v / r).collect())
    }

    pub fn singular_indicator(
        &self,
        field: &PolyMatrixField,
        x: &[f64],
        grad: &[f64],
    ) -> Result<Regularity> {
        let h = self.magnitude(field, x, grad)?;
        Ok(if h <= self.tol_h {
            Regularity::Singular
        } else {
            Regularity::Regular(h)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hormander2() -> SystemCatalogEntry {
        SystemCatalogEntry::hormander(2, SystemCatalogEntry::standard_symplectic(2)).unwrap()
    }

    #[test]
    fn grushin_h_squared_at_sample_point() {
        let g = SystemCatalogEntry::grushin(1).unwrap();
        let h2 = Hamiltonian::squared().value(g.field(), &[1.0, 2.0], &[4.0, 16.0]).unwrap();
        assert_relative_eq!(h2, 272.0, max_relative = 1e-15);
    }

    #[test]
    fn hormander_h_at_sample_point() {
        let s = hormander2();
        let h = Hamiltonian::degree1().value(s.field(), &[1.0, 0.0, 1.0], &[4.0, 0.0, 8.0]).unwrap();
        assert_relative_eq!(h, 80f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(h, 8.944272, epsilon = 1e-6);
    }

    #[test]
    fn zero_covector_gives_zero() {
        let s = hormander2();
        assert_eq!(Hamiltonian::degree1().value(s.field(), &[0.3, -1.0, 2.0], &[0.0; 3]).unwrap(), 0.0);
        let err = Hamiltonian::degree1().gradient_p(s.field(), &[0.3, -1.0, 2.0], &[0.0; 3]);
        assert!(matches!(err, Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = hormander2();
        let err = Hamiltonian::degree1().value(s.field(), &[1.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn squared_gradient_with_half_scale_is_identity() {
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        let ham = Hamiltonian::squared().with_scale(0.5);
        let g = ham.gradient_p(iso.field(), &[1.0, 0.0], &[4.0 / 3.0, 0.0]).unwrap();
        assert_relative_eq!(g[0], 4.0 / 3.0, max_relative = 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn feedback_examples() {
        let s = hormander2();
        let c = 5f64.powf(-0.75);
        let a = Hamiltonian::degree1()
            .feedback(s.field(), &[1.0, 0.0, 1.0], &[c, 0.0, 2.0 * c])
            .unwrap();
        assert_relative_eq!(a[0], -1.0 / 5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(a[1], -2.0 / 5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(a[0], -0.447214, epsilon = 1e-6);

        let g = SystemCatalogEntry::grushin(1).unwrap();
        let a = Hamiltonian::degree1().feedback(g.field(), &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(a, vec![-1.0, -0.0]);
    }

    #[test]
    fn grushin_feedback_consistency_at_gauge_gradient() {
        let g = SystemCatalogEntry::grushin(1).unwrap();
        let ham = Hamiltonian::degree1();
        let c = 17f64.powf(-0.75);
        let (x, p) = ([1.0, 2.0], [c, 4.0 * c]);
        let hp = ham.gradient_p(g.field(), &x, &p).unwrap();
        let a = ham.feedback(g.field(), &x, &p).unwrap();
        let f = g.field().apply(&x, &a).unwrap();
        for k in 0..2 {
            assert!((f[k] + hp[k]).abs() < 1e-12);
        }
        assert!((norm(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_indicator_on_axis() {
        let s = hormander2();
        // any gradient of the form (0, 0, g_v) is annihilated at x_h = 0
        let r = Hamiltonian::degree1()
            .singular_indicator(s.field(), &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.5])
            .unwrap();
        assert_eq!(r, Regularity::Singular);
    }

    #[test]
    fn catalog_validation() {
        assert!(SystemCatalogEntry::hormander(3, vec![vec![0.0; 3]; 3]).is_err());
        assert!(SystemCatalogEntry::hormander(2, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(SystemCatalogEntry::grushin(0).is_err());
        let g2 = SystemCatalogEntry::grushin(2).unwrap();
        assert_eq!((g2.field().n(), g2.field().m()), (3, 4));
        let h4 = SystemCatalogEntry::hormander(4, SystemCatalogEntry::standard_symplectic(4)).unwrap();
        assert_eq!((h4.field().n(), h4.field().m()), (5, 4));
    }

    #[test]
    fn evasion_examples() {
        let c2 = crate::controls::sphere_directions(2, 64);
        let g = SystemCatalogEntry::grushin(1).unwrap();
        assert_relative_eq!(g.evasion_check(&[0.0, 1.0], &c2).unwrap(), 1.0, epsilon = 1e-12);
        let h = hormander2();
        assert_relative_eq!(h.evasion_check(&[0.0, 0.0, 1.0], &c2).unwrap(), 1.0, epsilon = 1e-12);
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        assert_relative_eq!(iso.evasion_check(&[0.0, -3.0], &c2).unwrap(), 1.0, epsilon = 1e-12);
        assert!(g.evasion_check(&[0.5, 1.0], &c2).is_err());
    }

    #[test]
    fn lipschitz_bounds_hold_on_box() {
        let bx = BoxDomain::cube(3, 1.5);
        let h = hormander2();
        assert!(h.field().lipschitz_holds_on(&bx, 4).unwrap());
        assert!(h.field().estimate_lipschitz(&bx, 4).unwrap() <= 1.0 + 1e-12);
        let g = SystemCatalogEntry::grushin(1).unwrap();
        assert!(g.field().lipschitz_holds_on(&BoxDomain::cube(2, 1.5), 6).unwrap());
        let iso = SystemCatalogEntry::isotropic(2).unwrap();
        assert_eq!(iso.field().estimate_lipschitz(&BoxDomain::cube(2, 1.0), 3).unwrap(), 0.0);
    }

    fn systems() -> Vec<SystemCatalogEntry> {
        vec![
            SystemCatalogEntry::isotropic(2).unwrap(),
            hormander2(),
            SystemCatalogEntry::grushin(1).unwrap(),
            SystemCatalogEntry::grushin(2).unwrap(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(250))]

        #[test]
        fn symmetric_homogeneous_nonnegative(
            which in 0usize..4,
            raw in prop::collection::vec(-2.0f64..2.0, 6),
            lambda in 1e-3f64..10.0,
        ) {
            let sys = &systems()[which];
            let n = sys.field().n();
            let (x, p) = (&raw[..n], &raw[3..3 + n]);
            let neg: Vec<f64> = p.iter().map(|v| -v).collect();
            let scaled: Vec<f64> = p.iter().map(|v| lambda * v).collect();
            for ham in [Hamiltonian::degree1(), Hamiltonian::squared()] {
                let h = ham.value(sys.field(), x, p).unwrap();
                prop_assert!(h >= 0.0);
                prop_assert_eq!(h, ham.value(sys.field(), x, &neg).unwrap());
                let hl = ham.value(sys.field(), x, &scaled).unwrap();
                let expect = lambda.powi(ham.degree() as i32) * h;
                prop_assert!((hl - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
            }
        }

        #[test]
        fn euler_identity_and_feedback_consistency(
            which in 0usize..4,
            raw in prop::collection::vec(-2.0f64..2.0, 6),
        ) {
            let sys = &systems()[which];
            let n = sys.field().n();
            let (x, p) = (&raw[..n], &raw[3..3 + n]);
            let ham = Hamiltonian::degree1();
            let h = ham.value(sys.field(), x, p).unwrap();
            prop_assume!(h > 1e-6);
            let hp = ham.gradient_p(sys.field(), x, p).unwrap();
            prop_assert!((dot(p, &hp) - h).abs() <= 1e-10 * (1.0 + h));
            let sq = Hamiltonian::squared();
            let h2p = sq.gradient_p(sys.field(), x, p).unwrap();
            prop_assert!((dot(p, &h2p) - 2.0 * h * h).abs() <= 1e-10 * (1.0 + h * h));
            let a = ham.feedback(sys.field(), x, p).unwrap();
            prop_assert!((norm(&a) - 1.0).abs() <= 1e-10);
            let f = sys.field().apply(x, &a).unwrap();
            for k in 0..n {
                prop_assert!((f[k] + hp[k]).abs() <= 1e-10);
            }
        }
    }
}
