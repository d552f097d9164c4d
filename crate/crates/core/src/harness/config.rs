use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::quadrature::QuadratureOptions;
use crate::toeplitz_trace::{Observable, Term};
use crate::torus_action::{Conventions, RationalPhaseAutomorphism, WeightRay, WeightedModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub g: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub varpi: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub p: Vec<i64>,
    pub q: u64,
}

/// Coefficients are exact rationals written as strings, `"3"` or `"-2/5"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub sigma: Vec<u64>,
    pub tau: Vec<u64>,
    pub re: String,
    #[serde(default = "zero_string")]
    pub im: String,
}

fn zero_string() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KSchedule {
    List(Vec<u64>),
    /// `count` values `round(start (stop/start)^{i/(count-1)})`, duplicates removed.
    Geometric { start: u64, stop: u64, count: usize },
}

impl KSchedule {
    pub fn values(&self) -> Vec<u64> {
        match self {
            KSchedule::List(v) => v.clone(),
            KSchedule::Geometric { start, stop, count } => {
                if *count <= 1 {
                    return vec![*start];
                }
                let (a, b) = (*start as f64, *stop as f64);
                let mut out: Vec<u64> = (0..*count)
                    .map(|i| (a * (b / a).powf(i as f64 / (*count - 1) as f64)).round() as u64)
                    .collect();
                out.dedup();
                out
            }
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_c() -> f64 {
    1.0
}
fn default_samples() -> usize {
    20_000
}
fn default_pairs() -> usize {
    50
}
fn default_max_tries() -> usize {
    100_000
}
fn default_probe_k() -> Vec<u64> {
    vec![25, 50, 100, 200, 400]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_c", rename = "C")]
    pub c: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_max_tries")]
    pub max_tries: usize,
    #[serde(default = "default_probe_k")]
    pub k_values: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evaluations: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        let o = QuadratureOptions::default();
        Self {
            rel_tol: o.rel_tol,
            abs_tol: o.abs_tol,
            max_evaluations: o.max_evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_stem")]
    pub stem: String,
}

fn default_stem() -> String {
    "run".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            stem: default_stem(),
        }
    }
}

/// One experiment: model, ray, twist, observable and `k` schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub ray: RaySpec,
    /// Identity when absent.
    #[serde(default)]
    pub gamma: Option<GammaSpec>,
    /// The constant 1 when absent.
    #[serde(default)]
    pub observable: Option<ObservableSpec>,
    pub k_schedule: KSchedule,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub conventions: Conventions,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn parse_rational(s: &str) -> Result<BigRational> {
    BigRational::from_str(s.trim()).map_err(|_| Error::Config(format!("not a rational number: {s:?}")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let model = self.model().map_err(|e| Error::Config(e.to_string()))?;
        self.ray()?.check_model(&model).map_err(|e| Error::Config(e.to_string()))?;
        let n = model.n();
        if let Some(g) = &self.gamma {
            if g.p.len() != n {
                return cfg(format!("gamma.p has length {}, expected {n}", g.p.len()));
            }
            if g.q == 0 {
                return cfg("gamma.q must be positive".into());
            }
        }
        if let Some(o) = &self.observable {
            for t in &o.terms {
                if t.sigma.len() != n || t.tau.len() != n {
                    return cfg(format!("observable term exponents must have length {n}"));
                }
                parse_rational(&t.re)?;
                parse_rational(&t.im)?;
            }
        }
        if let KSchedule::Geometric { start, stop, count } = &self.k_schedule {
            if *start == 0 || stop < start || *count == 0 {
                return cfg("geometric schedule needs 0 < start <= stop and count > 0".into());
            }
        }
        let ks = self.k_schedule.values();
        if ks.is_empty() {
            return cfg("k_schedule is empty".into());
        }
        if ks.windows(2).any(|w| w[1] <= w[0]) {
            return cfg("k_schedule must be strictly increasing".into());
        }
        if let Some(p) = &self.probe {
            if !(p.epsilon > 0.0 && p.epsilon < 0.5) {
                return cfg("probe.epsilon must lie in (0, 1/2)".into());
            }
            if !(p.c > 0.0) || p.samples == 0 || p.pairs == 0 {
                return cfg("probe.C, probe.samples and probe.pairs must be positive".into());
            }
            if p.k_values.is_empty() || p.k_values.windows(2).any(|w| w[1] <= w[0]) || p.k_values[0] == 0 {
                return cfg("probe.k_values must be positive and strictly increasing".into());
            }
        }
        let q = &self.quadrature;
        if !(q.rel_tol > 0.0) || !(q.abs_tol >= 0.0) || q.max_evaluations == 0 {
            return cfg("quadrature tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<WeightedModel> {
        WeightedModel::new(self.model.d, self.model.g, self.model.w.clone())
    }

    pub fn ray(&self) -> Result<WeightRay> {
        WeightRay::new(self.ray.varpi.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn gamma(&self) -> Result<RationalPhaseAutomorphism> {
        match &self.gamma {
            Some(g) => RationalPhaseAutomorphism::new(g.p.clone(), g.q),
            None => Ok(RationalPhaseAutomorphism::identity(self.model.d + 1)),
        }
    }

    pub fn observable(&self) -> Result<Observable> {
        match &self.observable {
            None => Ok(Observable::one(self.model.d + 1)),
            Some(o) => Observable::new(
                o.terms
                    .iter()
                    .map(|t| {
                        Ok(Term {
                            sigma: t.sigma.clone(),
                            tau: t.tau.clone(),
                            coeff: Complex::new(parse_rational(&t.re)?, parse_rational(&t.im)?),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }

    pub fn k_values(&self) -> Vec<u64> {
        self.k_schedule.values()
    }

    pub fn quadrature_options(&self) -> QuadratureOptions {
        QuadratureOptions {
            rel_tol: self.quadrature.rel_tol,
            abs_tol: self.quadrature.abs_tol,
            max_evaluations: self.quadrature.max_evaluations,
        }
    }

    /// SHA-256 of the canonical JSON form, output paths excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs = OutputSpec::default();
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
