use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::asymptotic_law::{fit, FitReport, Predictor};
use crate::hardy::dimension;
use crate::kernel_probe::{
    full_slice, gaussian_profile_probe, rapid_decay_probe, tube_localization_check, Displacement, PairSampler,
    ProbeReport,
};
use crate::toeplitz_trace::{describe_setup, exact_trace, TraceSeries};
use crate::torus_action::{fixed_components_with, validate_model, Conventions, ValidationReport};
use crate::{Complex64, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Typed marker for a step that failed without aborting the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DegenerateModel(_) => "degenerate_model",
        Error::InvalidInput(_) => "invalid_input",
        Error::InfiniteStabilizer { .. } => "infinite_stabilizer",
        Error::BudgetExceeded { .. } => "budget_exceeded",
        Error::UnresolvedComponent { .. } => "unresolved_component",
        Error::NonTransverseComponent { .. } => "non_transverse_component",
        Error::SingularGram(_) => "singular_gram",
        Error::DegeneratePhase => "degenerate_phase",
        Error::QuadratureFailure { .. } => "quadrature_failure",
        Error::ChartOverflow(_) => "chart_overflow",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

impl From<&Error> for Failure {
    fn from(e: &Error) -> Self {
        Self {
            kind: error_kind(e).into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimRow {
    pub k: u64,
    pub dim: Option<u128>,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub exact: Option<Complex64>,
    pub predicted: Option<Complex64>,
    /// `|exact| / |predicted|`.
    pub ratio_modulus: Option<f64>,
    /// `|exact - predicted|`.
    pub residual: Option<f64>,
    pub failure: Option<Failure>,
}

impl TraceRow {
    fn new(k: u64, exact: Option<Complex64>, predicted: Option<Complex64>, failure: Option<Failure>) -> Self {
        let (ratio_modulus, residual) = match (exact, predicted) {
            (Some(e), Some(p)) => ((p.norm() > 0.0).then(|| e.norm() / p.norm()), Some((e - p).norm())),
            _ => (None, None),
        };
        Self {
            k,
            exact,
            predicted,
            ratio_modulus,
            residual,
            failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub l: usize,
    pub support: Vec<usize>,
    pub d_l: usize,
    pub c_l: usize,
    pub kappa_count: usize,
    pub c_det: Vec<Complex64>,
    pub locus_integral: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub config_hash: String,
    pub setup_hash: String,
    pub conventions: Conventions,
    pub validation: ValidationReport,
    /// Period in `k` of the leading term, used to block-average before fitting.
    pub period: u64,
    pub components: Vec<ComponentRow>,
    pub rows: Vec<TraceRow>,
    pub fit: Option<FitReport>,
    pub fit_failure: Option<Failure>,
}

/// Model checks; a model that fails them is a configuration error.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let report = validate_model(&cfg.model()?, &cfg.ray()?)?;
    if !report.zero_excluded {
        return Err(Error::DegenerateModel("zero lies in the convex hull of the weights".into()));
    }
    if report.transversality_sampled == Some(false) {
        return Err(Error::InvalidInput("the ray is not transverse to the moment image".into()));
    }
    Ok(report)
}

pub fn dimension_rows(cfg: &ExperimentConfig) -> Result<Vec<DimRow>> {
    let (model, ray) = (cfg.model()?, cfg.ray()?);
    Ok(cfg
        .k_values()
        .par_iter()
        .map(|&k| match dimension(&model, &ray, k) {
            Ok(d) => DimRow {
                k,
                dim: Some(d),
                failure: None,
            },
            Err(e) => DimRow {
                k,
                dim: None,
                failure: Some((&e).into()),
            },
        })
        .collect())
}

pub fn components(cfg: &ExperimentConfig) -> Result<(Predictor, Vec<ComponentRow>)> {
    let (model, ray, gamma, f) = (cfg.model()?, cfg.ray()?, cfg.gamma()?, cfg.observable()?);
    let comps = fixed_components_with(&model, &ray, &gamma, cfg.conventions)?;
    let predictor =
        Predictor::from_components(&model, &ray, &comps, &f, cfg.conventions, cfg.quadrature_options())?;
    let rows = comps
        .iter()
        .zip(&predictor.components)
        .enumerate()
        .map(|(l, (c, p))| ComponentRow {
            l,
            support: c.support.clone(),
            d_l: c.dim_l,
            c_l: c.codim_l,
            kappa_count: c.kappa_set.len(),
            c_det: c.c_det.clone(),
            locus_integral: p.locus_integral,
        })
        .collect();
    Ok((predictor, rows))
}

fn exact_rows(cfg: &ExperimentConfig, predictor: Option<&Predictor>) -> Result<Vec<TraceRow>> {
    let (model, ray, gamma, f) = (cfg.model()?, cfg.ray()?, cfg.gamma()?, cfg.observable()?);
    Ok(cfg
        .k_values()
        .par_iter()
        .map(|&k| {
            let predicted = predictor.map(|p| p.at(k).total);
            match exact_trace(&model, &ray, k, &gamma, &f) {
                Ok(t) => TraceRow::new(k, Some(t.value()), predicted, None),
                Err(e) => TraceRow::new(k, None, predicted, Some((&e).into())),
            }
        })
        .collect())
}

pub fn trace_rows(cfg: &ExperimentConfig) -> Result<Vec<TraceRow>> {
    exact_rows(cfg, None)
}

pub fn prediction_rows(cfg: &ExperimentConfig) -> Result<Vec<TraceRow>> {
    let (predictor, _) = components(cfg)?;
    Ok(cfg
        .k_values()
        .iter()
        .map(|&k| TraceRow::new(k, None, Some(predictor.at(k).total), None))
        .collect())
}

/// Validation, components, exact traces, predictions and the fit.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let validation = validate(cfg)?;
    let (predictor, comps) = components(cfg)?;
    let rows = exact_rows(cfg, Some(&predictor))?;
    let (model, ray, gamma, f) = (cfg.model()?, cfg.ray()?, cfg.gamma()?, cfg.observable()?);
    let setup_hash = describe_setup(&model, &ray, &gamma, &f);
    let series = TraceSeries {
        entries: rows.iter().filter_map(|r| r.exact.map(|e| (r.k, e))).collect(),
        hash: setup_hash.clone(),
    };
    let predicted: BTreeMap<u64, Complex64> = rows.iter().filter_map(|r| r.predicted.map(|p| (r.k, p))).collect();
    let period = predictor.period();
    let (fit_report, fit_failure) = match fit(&series, &predicted, period) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some((&e).into())),
    };
    Ok(RunRecord {
        schema: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        setup_hash,
        conventions: cfg.conventions,
        validation,
        period,
        components: comps,
        rows,
        fit: fit_report,
        fit_failure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub reports: BTreeMap<String, ProbeReport>,
    pub failures: BTreeMap<String, Failure>,
}

impl ProbeRecord {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.reports.values().all(|r| r.passed)
    }
}

/// Off-locus decay, tube localization, and the on-diagonal profile at the
/// barycentre of the ray slice. Requires a seed.
pub fn run_probes(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<ProbeRecord> {
    let probe = cfg.probe.clone().unwrap_or_else(|| {
        serde_json::from_str("{}").expect("probe defaults deserialize")
    });
    let seed = seed
        .or(probe.seed)
        .ok_or_else(|| Error::Config("a seed is required for Monte-Carlo probes".into()))?;
    let (model, ray, gamma, f) = (cfg.model()?, cfg.ray()?, cfg.gamma()?, cfg.observable()?);
    let ks = &probe.k_values;
    let mut reports = BTreeMap::new();
    let mut failures = BTreeMap::new();
    let mut record = |name: &str, r: Result<ProbeReport>| match r {
        Ok(r) => {
            reports.insert(name.to_string(), r);
        }
        Err(e) => {
            failures.insert(name.to_string(), Failure::from(&e));
        }
    };
    let sampler = PairSampler {
        pairs: probe.pairs,
        seed,
        max_tries: probe.max_tries,
    };
    let twist = (!gamma.is_identity()).then_some(&gamma);
    record(
        "rapid_decay",
        rapid_decay_probe(&model, &ray, twist, &sampler, ks, probe.epsilon, probe.c),
    );
    record(
        "tube",
        tube_localization_check(&model, &ray, &gamma, &f, ks, probe.epsilon, probe.c, probe.samples, seed),
    );
    let slice = full_slice(&model, &ray);
    if !slice.is_empty() {
        let n = model.n();
        let x: Vec<Complex64> = (0..n)
            .map(|j| {
                let s = slice.iter().map(|v| v[j]).sum::<f64>() / slice.len() as f64;
                Complex::new(s.sqrt(), 0.0)
            })
            .collect();
        let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let x: Vec<Complex64> = x.into_iter().map(|c| c / norm).collect();
        let z = Displacement::zero(&model);
        record("profile", gaussian_profile_probe(&model, &ray, &x, &z, &z, ks));
    }
    Ok(ProbeRecord {
        schema: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        seed,
        reports,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    const EX1: &str = r#"{
        "model": {"d": 2, "g": 1, "W": [[1, 2, 3]]},
        "ray": {"varpi": [1]},
        "k_schedule": {"geometric": {"start": 100, "stop": 2000, "count": 12}}
    }"#;

    #[test]
    fn example_one_run() {
        let r = run(&cfg(EX1)).unwrap();
        assert_eq!(r.schema, 1);
        assert_eq!(r.components.len(), 1);
        assert_eq!(r.rows.len(), 12);
        assert!(r.rows.iter().all(|row| row.failure.is_none()));
        let fit = r.fit.unwrap();
        assert!((fit.fitted_exponent - 2.0).abs() < 0.02);
        assert!((fit.fitted_coefficient.re - 1.0 / 12.0).abs() < 2e-3);
        let last = r.rows.last().unwrap();
        assert!((last.ratio_modulus.unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn empty_ray_run_is_trivial() {
        let text = r#"{
            "model": {"d": 2, "g": 1, "W": [[1, 2, 3]]},
            "ray": {"varpi": [-1]},
            "k_schedule": {"list": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]}
        }"#;
        let r = run(&cfg(text)).unwrap();
        assert!(r.components.is_empty());
        assert!(r.rows.iter().all(|row| row.exact == Some(Complex64::new(0.0, 0.0))));
        assert!(r.rows.iter().all(|row| row.predicted == Some(Complex64::new(0.0, 0.0))));
        let fit = r.fit.unwrap();
        assert_eq!(fit.fitted_exponent, f64::NEG_INFINITY);
        assert_eq!(fit.residual_slope, f64::NEG_INFINITY);
        assert!(dimension_rows(&cfg(text)).unwrap().iter().all(|d| d.dim == Some(0)));
    }

    #[test]
    fn run_is_idempotent() {
        let text = EX1.replace("\"count\": 12", "\"count\": 9").replace("2000", "300");
        let a = run(&cfg(&text)).unwrap();
        let b = run(&cfg(&text)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_k_failures_are_marked() {
        let text = r#"{
            "model": {"d": 2, "g": 1, "W": [[1, 2, 3]]},
            "ray": {"varpi": [1]},
            "k_schedule": {"list": [5, 10, 100000000]}
        }"#;
        let r = run(&cfg(text)).unwrap();
        assert!(r.rows[0].failure.is_none());
        let fail = r.rows[2].failure.as_ref().unwrap();
        assert_eq!(fail.kind, "budget_exceeded");
        assert!(r.rows[2].exact.is_none());
        assert!(r.rows[2].predicted.is_some());
        assert_eq!(r.fit_failure.as_ref().unwrap().kind, "insufficient_data");
    }

    #[test]
    fn degenerate_model_is_rejected() {
        let text = r#"{
            "model": {"d": 1, "g": 1, "W": [[1, -1]]},
            "ray": {"varpi": [1]},
            "k_schedule": {"list": [1]}
        }"#;
        assert!(matches!(validate(&cfg(text)), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn probes_need_a_seed() {
        let c = cfg(EX1);
        assert!(matches!(run_probes(&c, None), Err(Error::Config(_))));
    }
}
