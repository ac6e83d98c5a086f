use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aronsson::{AmfOptions, CertificateOptions};
use crate::candidates::Candidate;
use crate::domain::BoxDomain;
use crate::dynamics::{Direction, IntegrateOptions};
use crate::error::{Error, Result};
use crate::mintime::{GridSpec, LineSpec};
use crate::poly::Polynomial;
use crate::sysmodel::{Hamiltonian, PolyMatrixField, SystemCatalogEntry};

/// A term list `[[coeff, [e_1, ..., e_n]], ...]`.
pub type TermTable = Vec<(f64, Vec<u32>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Isotropic {
        n: usize,
    },
    Hormander {
        m: usize,
        /// Defaults to the standard symplectic matrix.
        #[serde(default)]
        b: Option<Vec<Vec<f64>>>,
    },
    Grushin {
        m: usize,
    },
    Custom {
        n: usize,
        m: usize,
        /// Row-major `n x m` entries of sigma.
        entries: Vec<TermTable>,
        /// Either given, or estimated on `lipschitz_box`.
        #[serde(default)]
        lipschitz_bound: Option<f64>,
        #[serde(default)]
        lipschitz_box: Option<BoxDomain>,
    },
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemCatalogEntry> {
        match self {
            SystemConfig::Isotropic { n } => SystemCatalogEntry::isotropic(*n),
            SystemConfig::Hormander { m, b } => SystemCatalogEntry::hormander(
                *m,
                b.clone().unwrap_or_else(|| SystemCatalogEntry::standard_symplectic(*m)),
            ),
            SystemConfig::Grushin { m } => SystemCatalogEntry::grushin(*m),
            SystemConfig::Custom {
                n,
                m,
                entries,
                lipschitz_bound,
                lipschitz_box,
            } => {
                let polys = entries
                    .iter()
                    .map(|t| Polynomial::from_table(*n, t))
                    .collect::<Result<Vec<_>>>()?;
                let field = match (lipschitz_bound, lipschitz_box) {
                    (Some(l), _) => PolyMatrixField::new(*n, *m, polys, *l)?,
                    (None, Some(bx)) => PolyMatrixField::with_lipschitz_on_box(*n, *m, polys, &bx.clone().validated()?, 11)?,
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "custom system needs lipschitz_bound or lipschitz_box".into(),
                        ))
                    }
                };
                Ok(SystemCatalogEntry::custom(field))
            }
        }
    }

    fn resolved(&self) -> Self {
        match self {
            SystemConfig::Hormander { m, b: None } => SystemConfig::Hormander {
                m: *m,
                b: Some(SystemCatalogEntry::standard_symplectic(*m)),
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CandidateConfig {
    Gauge { m: usize },
    Abspower { exponents: Vec<f64>, signs: Vec<f64> },
    InfinityLaplaceCounterexample,
    Quadratic { q: Vec<Vec<f64>> },
    Polynomial { nvars: usize, terms: TermTable },
    Negated { of: Box<CandidateConfig> },
}

impl CandidateConfig {
    pub fn build(&self) -> Result<Candidate> {
        match self {
            CandidateConfig::Gauge { m } => Candidate::gauge(*m),
            CandidateConfig::Abspower { exponents, signs } => Candidate::abspower(exponents.clone(), signs.clone()),
            CandidateConfig::InfinityLaplaceCounterexample => Ok(Candidate::infinity_laplace_counterexample()),
            CandidateConfig::Quadratic { q } => {
                let n = q.len();
                if q.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidParameter("quadratic q must be square".into()));
                }
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                Candidate::quadratic(DMatrix::from_row_slice(n, n, &flat))
            }
            CandidateConfig::Polynomial { nvars, terms } => {
                Ok(Candidate::Polynomial(Polynomial::from_table(*nvars, terms)?))
            }
            CandidateConfig::Negated { of } => Ok(of.build()?.negated()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CheckAronsson,
    Certify,
    Simulate,
    AmfTest,
    Representation,
    MintimeGrid,
    BoundCompare,
    Modulus,
    Excond,
    Counterexample,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CheckAronsson => "check-aronsson",
            ExperimentKind::Certify => "certify",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::AmfTest => "amf-test",
            ExperimentKind::Representation => "representation",
            ExperimentKind::MintimeGrid => "mintime-grid",
            ExperimentKind::BoundCompare => "bound-compare",
            ExperimentKind::Modulus => "modulus",
            ExperimentKind::Excond => "excond",
            ExperimentKind::Counterexample => "counterexample",
        }
    }

    /// The result each experiment reproduces, stated by content.
    pub fn anchor(self) -> &'static str {
        match self {
            ExperimentKind::CheckAronsson => "Aronsson equation -grad(H^2(x, grad U)) . (H^2)_p = 0 via the S-matrix",
            ExperimentKind::Certify => "C1 super/subsolutions: monotonicity of H(x_t, grad U(x_t)) along Hamiltonian trajectories",
            ExperimentKind::Simulate => "Hamiltonian dynamics x' = -H_p(x, grad U(x)) and the reach-time estimate T <= U/H",
            ExperimentKind::AmfTest => "absolute minimality of C1 solutions for sup H(x, grad W)",
            ExperimentKind::Representation => "implicit representation formula for U along Hamiltonian trajectories",
            ExperimentKind::MintimeGrid => "minimum time function T(x) = inf_a t_x(a)",
            ExperimentKind::BoundCompare => "reach-time estimate T <= U/H",
            ExperimentKind::Modulus => "local Lipschitz continuity of T off the singular set, 1/2-Hoelder near it",
            ExperimentKind::Excond => "excess-decay condition U(x) <= c d(x) on {H >= eps} near the target",
            ExperimentKind::Counterexample => "infinity-Laplace counterexample U = |x|^(4/3) - |y|^(4/3)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentSpec {
    One(ExperimentKind),
    Many(Vec<ExperimentKind>),
}

impl ExperimentSpec {
    pub fn kinds(&self) -> Vec<ExperimentKind> {
        match self {
            ExperimentSpec::One(k) => vec![*k],
            ExperimentSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateExpectation {
    Solution,
    Supersolution,
    Subsolution,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmfExpectation {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusProbe {
    pub line: LineSpec,
    /// Accepted exponent range `[lo, hi]`.
    pub band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcondParams {
    pub eps: f64,
    pub delta: f64,
    pub samples: usize,
    /// Defaults to `1 / eps`.
    pub bound: Option<f64>,
}

impl Default for ExcondParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            delta: 0.5,
            samples: 2000,
            bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub seed: u64,
    /// Explicit evaluation points for check-aronsson; random otherwise.
    pub points: Option<Vec<Vec<f64>>>,
    pub sample_count: usize,
    /// Sampling box for random points and starts; defaults to `[-1.5, 1.5]^n`.
    pub sample_box: Option<BoxDomain>,
    /// Random points and starts need `H(x, grad U(x)) >= sample_min_h`.
    pub sample_min_h: f64,
    /// Random points and starts also need `|x| >= sample_min_norm`.
    pub sample_min_norm: f64,
    pub fd_step: f64,
    pub tol_residual: f64,
    pub tol_fd: f64,
    pub expect_solution: bool,
    pub starts: Vec<Vec<f64>>,
    /// Random regular starts added to `starts`.
    pub start_count: usize,
    pub directions: Vec<Direction>,
    pub integrate: IntegrateOptions,
    pub reach_bound_slack: f64,
    pub require_hit: bool,
    /// Also check `|hit - U/H| <= slack + rho (1 + 1/H)`.
    pub expect_constant_v: bool,
    pub certificate: CertificateOptions,
    pub expect_certificate: CertificateExpectation,
    pub amf_box: Option<BoxDomain>,
    pub amf: AmfOptions,
    pub expect_amf: AmfExpectation,
    pub representation_box: Option<BoxDomain>,
    pub tol_representation: f64,
    pub grid: GridSpec,
    pub eps_grid: f64,
    pub modulus: Vec<ModulusProbe>,
    pub excond: ExcondParams,
}

impl Default for Params {
    fn default() -> Self {
        let probe = |base: [f64; 2], dir: [f64; 2], s0: f64, s1: f64, band: [f64; 2]| ModulusProbe {
            line: LineSpec::geometric(base.to_vec(), dir.to_vec(), s0, s1, 10),
            band,
        };
        Self {
            seed: 0,
            points: None,
            sample_count: 200,
            sample_box: None,
            sample_min_h: 1e-3,
            sample_min_norm: 0.5,
            fd_step: 1e-4,
            tol_residual: 1e-8,
            tol_fd: 1e-6,
            expect_solution: true,
            starts: Vec::new(),
            start_count: 0,
            directions: vec![Direction::Forward],
            integrate: IntegrateOptions::default(),
            reach_bound_slack: 5e-3,
            require_hit: false,
            expect_constant_v: false,
            certificate: CertificateOptions::default(),
            expect_certificate: CertificateExpectation::Solution,
            amf_box: None,
            amf: AmfOptions::default(),
            expect_amf: AmfExpectation::Pass,
            representation_box: None,
            tol_representation: 1e-4,
            grid: GridSpec::default(),
            eps_grid: 0.15,
            modulus: vec![
                probe([0.0, 0.0], [0.0, 1.0], 0.1, 0.8, [0.35, 0.65]),
                probe([0.0, 0.0], [1.0, 0.0], 0.1, 0.8, [0.85, 1.15]),
                probe([0.8, 0.2], [1.0, 0.0], 0.07, 0.7, [0.85, 1.15]),
            ],
            excond: ExcondParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub candidate: CandidateConfig,
    #[serde(default)]
    pub hamiltonian: Hamiltonian,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("aronsson-out")
}

/// Everything an experiment needs, built and cross-checked from a config.
pub struct Scenario {
    pub system: SystemCatalogEntry,
    pub candidate: Candidate,
    pub ham: Hamiltonian,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The config with every default written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.system = self.system.resolved();
        out.experiment = ExperimentSpec::Many(self.experiment.kinds());
        let n = self.system.build().map(|s| s.field().n()).unwrap_or(0);
        let p = &mut out.params;
        if p.sample_box.is_none() && n > 0 {
            p.sample_box = Some(BoxDomain::cube(n, 1.5));
        }
        if p.amf_box.is_none() {
            p.amf_box = p.sample_box.clone();
        }
        if p.representation_box.is_none() {
            p.representation_box = p.sample_box.clone();
        }
        if p.excond.bound.is_none() {
            p.excond.bound = Some(1.0 / p.excond.eps);
        }
        out
    }

    /// Builds the system and candidate and checks all dimensions.
    pub fn scenario(&self) -> Result<Scenario> {
        let r = self.resolved();
        let system = r.system.build()?;
        let candidate = r.candidate.build()?;
        let n = system.field().n();
        Error::check_dim("candidate dimension", n, candidate.dim())?;
        if !(r.hamiltonian.scale > 0.0) || !(r.hamiltonian.tol_h >= 0.0) {
            return Err(Error::InvalidParameter("hamiltonian needs scale > 0 and tol_h >= 0".into()));
        }
        let p = &r.params;
        for x in p.points.iter().flatten().chain(&p.starts) {
            Error::check_dim("point", n, x.len())?;
        }
        for bx in [&p.sample_box, &p.amf_box, &p.representation_box].into_iter().flatten() {
            Error::check_dim("box", n, bx.dim())?;
            bx.clone().validated()?;
        }
        if let Some(bx) = &p.integrate.bounds {
            Error::check_dim("integration bounds", n, bx.dim())?;
        }
        let kinds = r.experiment.kinds();
        if kinds.is_empty() {
            return Err(Error::InvalidParameter("experiment list is empty".into()));
        }
        let gridded = kinds.iter().any(|k| {
            matches!(k, ExperimentKind::MintimeGrid | ExperimentKind::BoundCompare | ExperimentKind::Modulus)
        });
        if gridded {
            Error::check_dim("grid box", n, p.grid.bx.dim())?;
            p.grid.bx.clone().validated()?;
        }
        if kinds.contains(&ExperimentKind::Modulus) {
            for probe in &p.modulus {
                Error::check_dim("modulus base", n, probe.line.base.len())?;
                Error::check_dim("modulus direction", n, probe.line.direction.len())?;
            }
        }
        Ok(Scenario {
            system,
            candidate,
            ham: r.hamiltonian,
            params: r.params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_and_resolves() {
        let c = ExperimentConfig::from_json(
            r#"{"system": {"kind": "hormander", "m": 2}, "candidate": {"kind": "gauge", "m": 2}, "experiment": "excond"}"#,
        )
        .unwrap();
        let r = c.resolved();
        assert_eq!(r.experiment, ExperimentSpec::Many(vec![ExperimentKind::Excond]));
        assert!(matches!(r.system, SystemConfig::Hormander { b: Some(_), .. }));
        assert_eq!(r.params.sample_box, Some(BoxDomain::cube(3, 1.5)));
        assert_eq!(r.params.excond.bound, Some(2.0));
        // the resolved form is itself a valid config with the same meaning
        let again = ExperimentConfig::from_json(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(again.resolved(), r);
        assert!(c.scenario().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "excond", "bogus": 1}"#,
            r#"{"system": {"kind": "grushin", "m": 1, "extra": 2}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "excond"}"#,
            r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "excond", "params": {"sead": 3}}"#,
            r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "nonsense"}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
        let err = ExperimentConfig::from_json(
            r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "excond", "params": {"sead": 3}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let c = ExperimentConfig::from_json(
            r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 2}, "experiment": "excond"}"#,
        )
        .unwrap();
        assert!(matches!(c.scenario(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn candidates_build() {
        let c: CandidateConfig =
            serde_json::from_str(r#"{"kind": "negated", "of": {"kind": "quadratic", "q": [[1, 0], [0, 2]]}}"#).unwrap();
        let u = c.build().unwrap();
        assert_eq!(u.value(&[1.0, 1.0]).unwrap(), -1.5);
        let c: CandidateConfig = serde_json::from_str(r#"{"kind": "infinity-laplace-counterexample"}"#).unwrap();
        assert_eq!(c.build().unwrap(), Candidate::infinity_laplace_counterexample());
    }

    #[test]
    fn custom_system_builds() {
        // Grushin written out by hand
        let s: SystemConfig = serde_json::from_str(
            r#"{"kind": "custom", "n": 2, "m": 2, "lipschitz_bound": 1.0,
                "entries": [[[1.0, [0, 0]]], [], [], [[1.0, [1, 0]]]]}"#,
        )
        .unwrap();
        let e = s.build().unwrap();
        assert_eq!(e.field().apply(&[2.0, 5.0], &[0.5, 1.0]).unwrap(), vec![0.5, 2.0]);
    }
}
