//! Leading term of the trace asymptotics: Gaussian closed forms, integrals
//! over fixed loci, per-component contributions and regression fits.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{frac, integer_kernel, int_matrix, determinant_f64};
use crate::quadrature::{integrate_simplices, triangulate_slice, QuadratureOptions};
use crate::scalar::rational_to;
use crate::toeplitz_trace::{Observable, Term, TraceSeries};
use crate::torus_action::{
    fixed_components_with, moment_map, orthonormal_complement, stabilizer_orders_on_ray,
    CharacterConvention, Conventions, FixedComponent, RationalPhaseAutomorphism, WeightRay,
    WeightedModel,
};
use crate::{Complex64, Error, Result};

/// Terms of `f` surviving the torus average (`W sigma = W tau`).
pub fn average_observable(model: &WeightedModel, f: &Observable) -> Observable {
    Observable {
        terms: f
            .terms
            .iter()
            .filter(|t| model.apply(&t.sigma) == model.apply(&t.tau))
            .cloned()
            .collect::<Vec<Term>>(),
    }
}

/// `f-bar` at a sphere point.
pub fn average_f(model: &WeightedModel, f: &Observable, z: &[Complex64]) -> Complex64 {
    average_observable(model, f).eval_sphere(z)
}

/// `pi^c / prod_j (1 - conj(lambda_j))`.
pub fn gaussian_normal_integral(eigenphases: &[Complex64]) -> Result<Complex64> {
    let mut denom = Complex64::new(1.0, 0.0);
    for l in eigenphases {
        if (l - 1.0).norm() < 1e-12 {
            return Err(Error::DegeneratePhase);
        }
        denom *= 1.0 - l.conj();
    }
    Ok(PI.powi(eigenphases.len() as i32) / denom)
}

/// The normal integral with amplitudes rescaled by `sqrt(lambda)`:
/// `int exp(lambda sum (conj(l_j) - 1)|a_j|^2)`.
pub fn gaussian_normal_integral_scaled(eigenphases: &[Complex64], lambda: f64) -> Result<Complex64> {
    let base = gaussian_normal_integral(eigenphases)?;
    let scaled = base / lambda.powi(eigenphases.len() as i32);
    debug_assert!((scaled * lambda.powi(eigenphases.len() as i32) - base).norm() <= 1e-12 * base.norm());
    Ok(scaled)
}

/// `(pi / (2 lambda))^{(g-1)/2}`.
pub fn gaussian_tangent_integral(lambda_varpi: f64, g: usize) -> f64 {
    (PI / (2.0 * lambda_varpi)).powf((g as f64 - 1.0) / 2.0)
}

fn orthonormalize(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in rows {
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-10 {
            out.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Density of `dV_F` against Hausdorff measure on the slice polytope of
/// `component`, including the `|H|` factor.
pub fn locus_density(model: &WeightedModel, ray: &WeightRay, component: &FixedComponent, h_order: u64) -> f64 {
    let support = &component.support;
    let m = support.len();
    let w_i: Vec<Vec<f64>> = model
        .rows()
        .iter()
        .map(|r| support.iter().map(|&j| r[j] as f64).collect())
        .collect();
    // V_I = {y : W_I y in R varpi}
    let constraints: Vec<Vec<f64>> = orthonormal_complement(ray)
        .iter()
        .map(|p| {
            (0..m)
                .map(|c| p.iter().zip(&w_i).map(|(a, row)| a * row[c]).sum())
                .collect()
        })
        .collect();
    let basis = orthonormalize(constraints);
    let project = |v: Vec<f64>| -> Vec<f64> {
        let mut v = v;
        for u in &basis {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        v
    };
    let h_s = 1.0 / norm(&project(vec![1.0; m]));
    let wt_varpi: Vec<f64> = (0..m)
        .map(|c| {
            w_i.iter()
                .zip(ray.varpi())
                .map(|(row, &v)| row[c] * v as f64)
                .sum()
        })
        .collect();
    let h_p = ray.norm_sq() as f64 / norm(&project(wt_varpi));
    let int_rows: Vec<Vec<i64>> = model
        .rows()
        .iter()
        .map(|r| support.iter().map(|&j| r[j]).collect())
        .collect();
    let kernel = integer_kernel(&int_matrix(&int_rows), model.g(), m);
    let covol = if kernel.is_empty() {
        1.0
    } else {
        let b: Vec<Vec<f64>> = kernel
            .iter()
            .map(|v| v.iter().map(|x| x.to_f64().unwrap()).collect())
            .collect();
        let gram: Vec<Vec<f64>> = b
            .iter()
            .map(|u| b.iter().map(|v| u.iter().zip(v).map(|(a, c)| a * c).sum()).collect())
            .collect();
        determinant_f64(gram).sqrt()
    };
    h_order as f64 * PI.powi(component.dim_l as i32) * ray.norm() * (h_s / h_p)
        / (component.component_order as f64 * covol)
}

/// `(1/|H|) int_F |Phi|^{-power} f-bar dV_F`. Phases along the locus average
/// out every term with `sigma != tau`.
pub fn locus_integral(
    model: &WeightedModel,
    ray: &WeightRay,
    component: &FixedComponent,
    power: i32,
    f: &Observable,
    opts: QuadratureOptions,
) -> Result<Complex64> {
    let h_order = stabilizer_orders_on_ray(model, ray)?.h_generic_order;
    locus_integral_with(model, ray, component, power, f, opts, h_order)
}

fn locus_integral_with(
    model: &WeightedModel,
    ray: &WeightRay,
    component: &FixedComponent,
    power: i32,
    f: &Observable,
    opts: QuadratureOptions,
    h_order: u64,
) -> Result<Complex64> {
    let density = locus_density(model, ray, component, h_order);
    let simplices: Vec<Vec<Vec<f64>>> = triangulate_slice(&component.slice.vertices)
        .iter()
        .map(|s| {
            s.iter()
                .map(|v| v.iter().map(rational_to::<f64>).collect())
                .collect()
        })
        .collect();
    let fbar = average_observable(model, f);
    let res = integrate_simplices(
        &simplices,
        |x| {
            let phi = moment_map(model, x);
            fbar.eval_simplex_diagonal(x) * norm(&phi).powi(-power)
        },
        opts,
    )?;
    Ok(res.value * density / h_order as f64)
}

/// Leading contribution of one fixed component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentContribution {
    pub index: usize,
    pub support: Vec<usize>,
    /// `d + 1 - g - c_l`.
    pub exponent: i64,
    pub codim: usize,
    /// `<varpi, theta>` per kappa, in turns.
    pub character_turns: Vec<(i64, u64)>,
    pub c_det: Vec<Complex64>,
    pub locus_integral: Complex64,
    /// `|varpi| / pi`; the term scales as `(constant k)^exponent`.
    pub constant: f64,
    pub character: CharacterConvention,
}

impl ComponentContribution {
    /// `sum_kappa chi(kappa)^k / c_det(kappa)` under the character convention.
    pub fn char_sum(&self, k: u64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (&(num, den), c) in self.character_turns.iter().zip(&self.c_det) {
            let r = frac(&BigRational::new(
                BigInt::from(num) * BigInt::from(k),
                BigInt::from(den),
            ));
            s += Complex64::from_polar(1.0, TAU * r.to_f64().unwrap()) / c;
        }
        match self.character {
            CharacterConvention::Forward => s,
            CharacterConvention::Conjugate => s.conj(),
        }
    }

    pub fn value(&self, k: u64) -> Complex64 {
        self.char_sum(k) * self.locus_integral * (self.constant * k as f64).powi(self.exponent as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub total: Complex64,
    pub per_component: Vec<(usize, Complex64)>,
}

/// Components and locus integrals computed once, evaluated at any `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub conventions: Conventions,
    pub components: Vec<ComponentContribution>,
}

impl Predictor {
    pub fn new(
        model: &WeightedModel,
        ray: &WeightRay,
        gamma: &RationalPhaseAutomorphism,
        f: &Observable,
        conventions: Conventions,
        opts: QuadratureOptions,
    ) -> Result<Self> {
        let comps = fixed_components_with(model, ray, gamma, conventions)?;
        Self::from_components(model, ray, &comps, f, conventions, opts)
    }

    pub fn from_components(
        model: &WeightedModel,
        ray: &WeightRay,
        comps: &[FixedComponent],
        f: &Observable,
        conventions: Conventions,
        opts: QuadratureOptions,
    ) -> Result<Self> {
        if comps.is_empty() {
            return Ok(Self {
                conventions,
                components: Vec::new(),
            });
        }
        let h_order = stabilizer_orders_on_ray(model, ray)?.h_generic_order;
        let d = model.d() as i64;
        let g = model.g() as i64;
        let components = comps
            .par_iter()
            .enumerate()
            .map(|(index, c)| {
                let exponent = d + 1 - g - c.codim_l as i64;
                assert_eq!(exponent, c.dim_l as i64, "exponent must equal the locus dimension");
                if c.c_det.iter().any(|z| z.norm() < 1e-12) {
                    return Err(Error::DegeneratePhase);
                }
                let power = (d + 2 - g - c.codim_l as i64) as i32;
                let locus = locus_integral_with(model, ray, c, power, f, opts, h_order)?;
                let character_turns = c
                    .kappa_set
                    .iter()
                    .map(|theta| {
                        let r = ray.character(theta);
                        (r.numer().to_i64().unwrap(), r.denom().to_u64().unwrap())
                    })
                    .collect();
                Ok(ComponentContribution {
                    index,
                    support: c.support.clone(),
                    exponent,
                    codim: c.codim_l,
                    character_turns,
                    c_det: c.c_det.clone(),
                    locus_integral: locus,
                    constant: ray.norm() / PI,
                    character: conventions.character,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            conventions,
            components,
        })
    }

    /// Least common period in `k` of every character sum.
    pub fn period(&self) -> u64 {
        self.components
            .iter()
            .flat_map(|c| c.character_turns.iter().map(|t| t.1))
            .fold(1, num_integer::lcm)
    }

    pub fn at(&self, k: u64) -> Prediction {
        let per_component: Vec<(usize, Complex64)> =
            self.components.iter().map(|c| (c.index, c.value(k))).collect();
        Prediction {
            total: per_component.iter().map(|(_, v)| v).sum(),
            per_component,
        }
    }
}

pub fn predict(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
    k: u64,
) -> Result<Prediction> {
    Ok(Predictor::new(model, ray, gamma, f, Conventions::default(), QuadratureOptions::default())?.at(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(with = "nonfinite")]
    pub fitted_exponent: f64,
    pub fitted_coefficient: Complex64,
    pub r_squared: f64,
    /// Log-log slope of `|exact - predicted|`; `-inf` when they agree.
    #[serde(with = "nonfinite")]
    pub residual_slope: f64,
}

/// Infinities as the strings `"inf"` and `"-inf"`, which JSON numbers cannot hold.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Least squares slope, intercept and `R^2`.
fn regress(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let r2 = if syy <= 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, my - slope * mx, r2)
}

/// Log-log points of block-averaged moduli, blocks of `period` consecutive
/// entries; blocks averaging to zero are dropped.
fn block_points(values: &[(u64, f64)], period: usize) -> Vec<(f64, f64)> {
    values
        .chunks_exact(period.max(1))
        .filter_map(|b| {
            let k = b.iter().map(|p| p.0 as f64).sum::<f64>() / b.len() as f64;
            let m = b.iter().map(|p| p.1).sum::<f64>() / b.len() as f64;
            (m > 0.0).then(|| (k.ln(), m.ln()))
        })
        .collect()
}

/// Regression of the exact series, with moduli averaged over `period`
/// consecutive `k` to remove oscillating characters.
pub fn fit(series: &TraceSeries, predicted: &BTreeMap<u64, Complex64>, period: u64) -> Result<FitReport> {
    let entries: Vec<(u64, Complex64)> = series
        .entries
        .iter()
        .filter(|(k, _)| **k > 0)
        .map(|(&k, &v)| (k, v))
        .collect();
    if entries.len() < 8 {
        return Err(Error::InsufficientData(format!("{} values, at least 8 needed", entries.len())));
    }
    let period = period.max(1) as usize;
    let moduli: Vec<(u64, f64)> = entries.iter().map(|&(k, v)| (k, v.norm())).collect();
    let pts = block_points(&moduli, period);
    let (fitted_exponent, r_squared) = if pts.len() >= 2 {
        let (s, _, r2) = regress(&pts);
        (s, r2)
    } else {
        (f64::NEG_INFINITY, 1.0)
    };
    let fitted_coefficient = if fitted_exponent.is_finite() {
        let p = fitted_exponent.round() as i32;
        let (num, den) = entries.iter().fold((Complex64::new(0.0, 0.0), 0.0), |(n, d), &(k, v)| {
            let kp = (k as f64).powi(p);
            (n + v * kp, d + kp * kp)
        });
        num / den
    } else {
        Complex64::new(0.0, 0.0)
    };
    let mut any = false;
    let residuals: Vec<(u64, f64)> = entries
        .iter()
        .map(|&(k, v)| {
            let pred = predicted.get(&k).copied().unwrap_or_default();
            let r = (v - pred).norm();
            if r > 1e-9 * v.norm().max(1.0) {
                any = true;
                (k, r)
            } else {
                (k, 0.0)
            }
        })
        .collect();
    let residual_slope = if any {
        let rp = block_points(&residuals, period);
        if rp.len() >= 2 {
            regress(&rp).0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        f64::NEG_INFINITY
    };
    Ok(FitReport {
        fitted_exponent,
        fitted_coefficient,
        r_squared,
        residual_slope,
    })
}
