//! Weighted torus actions on P^d: models, moment map, stabilizers and fixed
//! point data of diagonal automorphisms.

mod fixed;
mod gram;
mod stabilizer;
mod validate;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, frac, IntMatrix};
use crate::{Error, Result, Scalar};

pub use fixed::{
    fixed_components, fixed_components_with, CharacterConvention, Conventions, FixedComponent,
    KappaMultiplicity, NormalMap,
};
pub use gram::{gram_d, gram_d_with_basis, orthonormal_complement};
pub use stabilizer::{
    generic_stabilizer, point_stabilizer, stabilizer_orders_on_ray, subgroup_component_count, FiniteAbelianGroup,
    RayStabilizer,
};
pub use validate::{ray_slice, validate_model, RaySlice, ValidationReport};

/// Torus `T^g` acting on `P^d` by `z_j -> t^{w_j} z_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedModel {
    d: usize,
    g: usize,
    /// `g` rows of length `d + 1`.
    w: Vec<Vec<i64>>,
}

impl WeightedModel {
    pub fn new(d: usize, g: usize, w: Vec<Vec<i64>>) -> Result<Self> {
        if g == 0 {
            return Err(Error::InvalidInput("torus rank must be positive".into()));
        }
        if w.len() != g || w.iter().any(|r| r.len() != d + 1) {
            return Err(Error::InvalidInput(format!(
                "weight matrix must be {g} x {}",
                d + 1
            )));
        }
        Ok(Self { d, g, w })
    }

    /// Circle action with weights `w`.
    pub fn circle(w: &[i64]) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("no weights".into()));
        }
        Self::new(w.len() - 1, 1, vec![w.to_vec()])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn g(&self) -> usize {
        self.g
    }

    /// Number of homogeneous coordinates, `d + 1`.
    pub fn n(&self) -> usize {
        self.d + 1
    }

    /// Quotient dimension `e = d - g + 1` (may be negative for degenerate data).
    pub fn e(&self) -> i64 {
        self.d as i64 - self.g as i64 + 1
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.w
    }

    /// Column `j`, the weight of `z_j`.
    pub fn weight(&self, j: usize) -> Vec<i64> {
        self.w.iter().map(|r| r[j]).collect()
    }

    pub fn weight_matrix(&self) -> IntMatrix {
        linalg::int_matrix(&self.w)
    }

    /// `W alpha`.
    pub fn apply(&self, alpha: &[u64]) -> Vec<i64> {
        self.w
            .iter()
            .map(|r| r.iter().zip(alpha).map(|(&w, &a)| w * a as i64).sum())
            .collect()
    }

    /// Same model with coordinates relabelled: new coordinate `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let w = self
            .w
            .iter()
            .map(|r| perm.iter().map(|&j| r[j]).collect())
            .collect();
        Self { d: self.d, g: self.g, w }
    }
}

/// Ray `R_+ varpi` in weight space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRay {
    varpi: Vec<i64>,
    norm: f64,
}

impl WeightRay {
    pub fn new(varpi: Vec<i64>) -> Result<Self> {
        if varpi.iter().all(|&v| v == 0) {
            return Err(Error::InvalidInput("varpi must be nonzero".into()));
        }
        let norm = varpi.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        Ok(Self { varpi, norm })
    }

    pub fn varpi(&self) -> &[i64] {
        &self.varpi
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn norm_sq(&self) -> i64 {
        self.varpi.iter().map(|v| v * v).sum()
    }

    pub fn dim(&self) -> usize {
        self.varpi.len()
    }

    pub fn check_model(&self, model: &WeightedModel) -> Result<()> {
        if self.varpi.len() != model.g() {
            return Err(Error::InvalidInput(format!(
                "varpi has length {}, torus rank is {}",
                self.varpi.len(),
                model.g()
            )));
        }
        Ok(())
    }

    /// `<varpi, theta>` reduced mod 1, the character `chi_varpi` in turns.
    pub fn character(&self, theta: &[BigRational]) -> BigRational {
        frac(
            &self
                .varpi
                .iter()
                .zip(theta)
                .map(|(&v, t)| t * BigInt::from(v))
                .sum(),
        )
    }
}

/// `lambda_varpi = |varpi| / |Phi|`.
pub fn lambda_varpi(ray: &WeightRay, phi: &[f64]) -> f64 {
    ray.norm() / phi.iter().map(|p| p * p).sum::<f64>().sqrt()
}

/// Diagonal automorphism `diag(exp(2 pi i p_j / q))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalPhaseAutomorphism {
    p: Vec<i64>,
    q: u64,
}

impl RationalPhaseAutomorphism {
    pub fn new(p: Vec<i64>, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("q must be positive".into()));
        }
        let p = p.into_iter().map(|x| x.rem_euclid(q as i64)).collect();
        Ok(Self { p, q })
    }

    pub fn identity(n: usize) -> Self {
        Self { p: vec![0; n], q: 1 }
    }

    pub fn p(&self) -> &[i64] {
        &self.p
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.p.iter().all(|&x| x == 0)
    }

    /// Phase of coordinate `j` in turns.
    pub fn phase(&self, j: usize) -> BigRational {
        BigRational::new(self.p[j].into(), (self.q as i64).into())
    }

    /// `<p, alpha> mod q`.
    pub fn residue(&self, alpha: &[u64]) -> u64 {
        let q = self.q as u128;
        (self
            .p
            .iter()
            .zip(alpha)
            .map(|(&p, &a)| (p as u128 * (a as u128 % q)) % q)
            .sum::<u128>()
            % q) as u64
    }

    /// `gamma o mu_s`: phases shifted by the torus characters of `s`.
    pub fn twisted_by(&self, model: &WeightedModel, s: &[BigRational]) -> Self {
        let shifted: Vec<BigRational> = (0..model.n())
            .map(|j| {
                let w = model.weight(j);
                frac(
                    &(self.phase(j)
                        + w.iter()
                            .zip(s)
                            .map(|(&wj, t)| t * BigInt::from(wj))
                            .sum::<BigRational>()),
                )
            })
            .collect();
        let q = shifted
            .iter()
            .fold(BigInt::from(1), |acc, x| acc.lcm(x.denom()));
        let p = shifted
            .iter()
            .map(|x| (x * BigRational::from_integer(q.clone())).to_integer().to_i64().unwrap())
            .collect();
        Self {
            p,
            q: q.to_u64().expect("denominator fits in u64"),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            p: perm.iter().map(|&j| self.p[j]).collect(),
            q: self.q,
        }
    }
}

/// `Phi(x) = sum_j x_j w_j` on simplex coordinates `x_j = |z_j|^2 / |z|^2`.
pub fn moment_map<S: Scalar>(model: &WeightedModel, x: &[S]) -> Vec<S> {
    assert_eq!(x.len(), model.n(), "simplex point has wrong length");
    model
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .fold(S::zero(), |acc, (&w, xj)| acc + S::from_integer(w) * xj.clone())
        })
        .collect()
}

/// `|z_j|^2` of a sphere point.
pub fn simplex_point(z: &[crate::Complex64]) -> Vec<f64> {
    z.iter().map(|c| c.norm_sqr()).collect()
}
