//! Toeplitz matrix entries, exact traces of `gamma~ o T_f` on isotypes,
//! equivariant Szego kernels and Monte-Carlo trace integrals.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hardy::{enumerate_basis, log_norm_v1, rising, IsotypeBasis, LogFactorials};
use crate::linalg::frac;
use crate::scalar::rational_to;
use crate::torus_action::{RationalPhaseAutomorphism, WeightRay, WeightedModel};
use crate::{Complex64, Error, ExactComplex, Real, Result};

/// One monomial `coeff z^sigma conj(z)^tau / |z|^{|sigma|+|tau|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub sigma: Vec<u64>,
    pub tau: Vec<u64>,
    pub coeff: ExactComplex,
}

/// A finite sum of monomial terms on the sphere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observable {
    pub terms: Vec<Term>,
}

fn rational_complex(re: BigRational, im: BigRational) -> ExactComplex {
    Complex::new(re, im)
}

pub fn exact_one() -> ExactComplex {
    rational_complex(BigRational::one(), BigRational::zero())
}

impl Observable {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if let Some(n) = terms.first().map(|t| t.sigma.len()) {
            if terms.iter().any(|t| t.sigma.len() != n || t.tau.len() != n) {
                return Err(Error::InvalidInput("observable terms have mixed lengths".into()));
            }
        }
        Ok(Self { terms })
    }

    pub fn constant(n: usize, c: ExactComplex) -> Self {
        Self {
            terms: vec![Term {
                sigma: vec![0; n],
                tau: vec![0; n],
                coeff: c,
            }],
        }
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, exact_one())
    }

    /// `x_j = |z_j|^2 / |z|^2`.
    pub fn coordinate(n: usize, j: usize) -> Self {
        let mut e = vec![0; n];
        e[j] = 1;
        Self {
            terms: vec![Term {
                sigma: e.clone(),
                tau: e,
                coeff: exact_one(),
            }],
        }
    }

    pub fn scaled(&self, c: &ExactComplex) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: &t.coeff * c,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    sigma: perm.iter().map(|&j| t.sigma[j]).collect(),
                    tau: perm.iter().map(|&j| t.tau[j]).collect(),
                    coeff: t.coeff.clone(),
                })
                .collect(),
        }
    }

    /// Every term has `sigma = tau`.
    pub fn is_torus_invariant(&self) -> bool {
        self.terms.iter().all(|t| t.sigma == t.tau)
    }

    /// Closed under `(sigma, tau, c) <-> (tau, sigma, conj c)`.
    pub fn is_real(&self) -> bool {
        let mut fwd: BTreeMap<(Vec<u64>, Vec<u64>), ExactComplex> = BTreeMap::new();
        for t in &self.terms {
            let e = fwd
                .entry((t.sigma.clone(), t.tau.clone()))
                .or_insert_with(|| rational_complex(BigRational::zero(), BigRational::zero()));
            *e = &*e + &t.coeff;
        }
        fwd.iter().all(|((s, t), c)| {
            let other = fwd
                .get(&(t.clone(), s.clone()))
                .cloned()
                .unwrap_or_else(|| rational_complex(BigRational::zero(), BigRational::zero()));
            other == c.conj()
        })
    }

    /// Value at a unit sphere point.
    pub fn eval_sphere<T: Real>(&self, z: &[Complex<T>]) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for t in &self.terms {
            let mut v = Complex::new(
                rational_to::<T>(&t.coeff.re),
                rational_to::<T>(&t.coeff.im),
            );
            for (j, zj) in z.iter().enumerate() {
                if t.sigma[j] > 0 {
                    v *= zj.powu(t.sigma[j] as u32);
                }
                if t.tau[j] > 0 {
                    v *= zj.conj().powu(t.tau[j] as u32);
                }
            }
            acc += v;
        }
        acc
    }

    /// Value of the diagonal (`sigma = tau`) part at a simplex point.
    pub fn eval_simplex_diagonal<T: Real>(&self, x: &[T]) -> Complex<T> {
        let mut acc = Complex::new(T::zero(), T::zero());
        for t in self.terms.iter().filter(|t| t.sigma == t.tau) {
            let mut v = T::one();
            for (j, &xj) in x.iter().enumerate() {
                if t.sigma[j] > 0 {
                    v *= xj.powi(t.sigma[j] as i32);
                }
            }
            acc += Complex::new(
                rational_to::<T>(&t.coeff.re),
                rational_to::<T>(&t.coeff.im),
            ) * v;
        }
        acc
    }

    /// Real part bounds of a torus invariant real observable on the simplex
    /// (each monomial lies in `[0, 1]`).
    pub fn simplex_bounds(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for t in &self.terms {
            let c = rational_to::<f64>(&t.coeff.re);
            let constant = t.sigma.iter().all(|&s| s == 0);
            if constant {
                lo += c;
                hi += c;
            } else if c > 0.0 {
                hi += c;
            } else {
                lo += c;
            }
        }
        (lo, hi)
    }

    pub fn describe(&self) -> String {
        self.terms
            .iter()
            .map(|t| format!("{:?}|{:?}|{}+{}i", t.sigma, t.tau, t.coeff.re, t.coeff.im))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// `value * sqrt(radicand)`, exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEntry {
    pub value: ExactComplex,
    pub radicand: BigRational,
}

impl ExactEntry {
    pub fn to_complex64(&self) -> Complex64 {
        let s = rational_to::<f64>(&self.radicand).sqrt();
        Complex64::new(
            rational_to::<f64>(&self.value.re) * s,
            rational_to::<f64>(&self.value.im) * s,
        )
    }

    /// The entry as an exact complex rational when the radicand is a square.
    pub fn as_rational(&self) -> Option<ExactComplex> {
        let n = exact_sqrt(self.radicand.numer())?;
        let d = exact_sqrt(self.radicand.denom())?;
        let r = BigRational::new(n, d);
        Some(rational_complex(&self.value.re * &r, &self.value.im * &r))
    }

    pub fn is_zero(&self) -> bool {
        self.value.re.is_zero() && self.value.im.is_zero()
    }
}

fn exact_sqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let s = n.sqrt();
    (&s * &s == *n).then_some(s)
}

/// `<M_f e_alpha, e_alpha'>` in the normalised monomial basis (fibre
/// normalised volume).
pub fn toeplitz_entry(alpha: &[u64], alpha_prime: &[u64], f: &Observable, d: usize) -> ExactEntry {
    let d = d as u64;
    let m_a: u64 = alpha.iter().sum();
    let m_b: u64 = alpha_prime.iter().sum();
    let (lo, hi) = (m_a.min(m_b), m_a.max(m_b));
    // sqrt((d+|a|)!(d+|a'|)!/(a! a'!)) = S * sqrt(R), S = (d+lo)!/prod min_j!
    let mut s_num = crate::hardy::factorial(d + lo);
    let mut s_den = BigInt::one();
    let mut r_num = rising(d + lo + 1, hi - lo);
    let mut r_den = BigInt::one();
    for (&a, &b) in alpha.iter().zip(alpha_prime) {
        let (mn, mx) = (a.min(b), a.max(b));
        s_den *= crate::hardy::factorial(mn);
        r_den *= rising(mn + 1, mx - mn);
    }
    let gcd = num_integer::Integer::gcd(&s_num, &s_den);
    s_num /= &gcd;
    s_den /= &gcd;
    let gcd = num_integer::Integer::gcd(&r_num, &r_den);
    r_num /= &gcd;
    r_den /= &gcd;

    let mut acc = rational_complex(BigRational::zero(), BigRational::zero());
    for t in &f.terms {
        let lhs: Vec<u64> = alpha.iter().zip(&t.sigma).map(|(a, s)| a + s).collect();
        let matches = alpha_prime
            .iter()
            .zip(&t.tau)
            .zip(&lhs)
            .all(|((b, t), l)| b + t == *l);
        if !matches {
            continue;
        }
        // (alpha + sigma)! / (d + |alpha + sigma|)!
        let top: u64 = lhs.iter().sum();
        let num: BigInt = lhs.iter().map(|&x| crate::hardy::factorial(x)).product();
        let w = BigRational::new(num, crate::hardy::factorial(d + top));
        acc = &acc + &t.coeff * &w;
    }
    let scale = BigRational::new(s_num, s_den);
    ExactEntry {
        value: rational_complex(&acc.re * &scale, &acc.im * &scale),
        radicand: BigRational::new(r_num, r_den),
    }
}

/// Exact trace, grouped by the phase (in turns) of `gamma~` on each monomial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExactTrace {
    pub classes: BTreeMap<BigRational, ExactComplex>,
}

impl ExactTrace {
    /// `sum_r S_r exp(-2 pi i r)` rendered with compensated summation.
    pub fn value(&self) -> Complex64 {
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        for (r, s) in &self.classes {
            let rot = Complex64::from_polar(1.0, -TAU * r.to_f64().unwrap());
            let v = Complex64::new(rational_to::<f64>(&s.re), rational_to::<f64>(&s.im)) * rot;
            re.add(v.re);
            im.add(v.im);
        }
        Complex64::new(re.sum(), im.sum())
    }

    /// Exact value when only the trivial phase occurs.
    pub fn as_rational(&self) -> Option<ExactComplex> {
        match self.classes.len() {
            0 => Some(rational_complex(BigRational::zero(), BigRational::zero())),
            1 => self
                .classes
                .get(&BigRational::zero())
                .cloned(),
            _ => None,
        }
    }

    /// Multiply by `exp(-2 pi i shift)` exactly.
    pub fn rotated(&self, shift: &BigRational) -> Self {
        let mut classes = BTreeMap::new();
        for (r, s) in &self.classes {
            classes.insert(frac(&(r + shift)), s.clone());
        }
        Self { classes }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn exact_trace(
    model: &WeightedModel,
    ray: &WeightRay,
    k: u64,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
) -> Result<ExactTrace> {
    let basis = enumerate_basis(model, ray, k)?;
    exact_trace_on(&basis, model.d(), gamma, f)
}

/// Trace on a precomputed isotype basis.
pub fn exact_trace_on(
    basis: &IsotypeBasis,
    d: usize,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
) -> Result<ExactTrace> {
    let n = d + 1;
    if gamma.len() != n || f.terms.iter().any(|t| t.sigma.len() != n) {
        return Err(Error::InvalidInput("dimension mismatch in trace data".into()));
    }
    // diagonal contributions, accumulated as
    //   sum over (class, |alpha|, term) of integer numerators prod rising(alpha_j+1, beta_j)
    // divided once by rising(d+|alpha|+1, |beta|)
    let mut groups: BTreeMap<(u64, u64, usize), BigInt> = BTreeMap::new();
    for alpha in &basis.points {
        let n_alpha: u64 = alpha.iter().sum();
        for (ti, t) in f.terms.iter().enumerate() {
            // alpha' with alpha + sigma = alpha' + tau
            let mut image = Vec::with_capacity(n);
            let mut valid = true;
            for j in 0..n {
                let v = alpha[j] as i128 + t.sigma[j] as i128 - t.tau[j] as i128;
                if v < 0 {
                    valid = false;
                    break;
                }
                image.push(v as u64);
            }
            if !valid || basis.points.binary_search(&image).is_err() {
                continue;
            }
            // <gamma~ e_alpha', e_alpha> vanishes unless alpha' = alpha
            if image != *alpha {
                continue;
            }
            let class = gamma.residue(&image);
            let num: BigInt = alpha
                .iter()
                .zip(&t.sigma)
                .map(|(&a, &s)| rising(a + 1, s))
                .product();
            *groups.entry((class, n_alpha, ti)).or_insert_with(BigInt::zero) += num;
        }
    }
    let mut classes: BTreeMap<BigRational, ExactComplex> = BTreeMap::new();
    for ((class, n_alpha, ti), num) in groups {
        let t = &f.terms[ti];
        let beta: u64 = t.sigma.iter().sum();
        let w = BigRational::new(num, rising(d as u64 + n_alpha + 1, beta));
        let key = BigRational::new(class.into(), gamma.q().into());
        let e = classes
            .entry(key)
            .or_insert_with(|| rational_complex(BigRational::zero(), BigRational::zero()));
        *e = &*e + &t.coeff * &w;
    }
    classes.retain(|_, v| !(v.re.is_zero() && v.im.is_zero()));
    Ok(ExactTrace { classes })
}

/// Exact traces indexed by `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub entries: BTreeMap<u64, Complex64>,
    pub hash: String,
}

pub fn describe_setup(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
) -> String {
    let text = format!(
        "W={:?};varpi={:?};p={:?};q={};f={}",
        model.rows(),
        ray.varpi(),
        gamma.p(),
        gamma.q(),
        f.describe()
    );
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn trace_series(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
    ks: &[u64],
) -> Result<TraceSeries> {
    let values: Vec<Result<(u64, Complex64)>> = ks
        .par_iter()
        .map(|&k| exact_trace(model, ray, k, gamma, f).map(|t| (k, t.value())))
        .collect();
    let mut entries = BTreeMap::new();
    for v in values {
        let (k, t) = v?;
        entries.insert(k, t);
    }
    Ok(TraceSeries {
        entries,
        hash: describe_setup(model, ray, gamma, f),
    })
}

/// The equivariant Szego kernel `Pi_{k varpi}` on a fixed isotype.
#[derive(Debug, Clone)]
pub struct Kernel {
    d: usize,
    points: Vec<Vec<u64>>,
    log_norms: Vec<f64>,
}

impl Kernel {
    pub fn new(model: &WeightedModel, ray: &WeightRay, k: u64) -> Result<Self> {
        let basis = enumerate_basis(model, ray, k)?;
        Ok(Self::from_basis(&basis, model.d()))
    }

    pub fn from_basis(basis: &IsotypeBasis, d: usize) -> Self {
        let top = basis
            .points
            .iter()
            .map(|a| a.iter().sum::<u64>())
            .max()
            .unwrap_or(0);
        let lf = LogFactorials::new((top + d as u64 + 1) as usize);
        let log_norms = basis.points.iter().map(|a| log_norm_v1(&lf, d, a)).collect();
        Self {
            d,
            points: basis.points.clone(),
            log_norms,
        }
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<u64>] {
        &self.points
    }

    /// `|e_alpha(x)|^2` summed, computed term by term.
    pub fn diagonal_terms<T: Real>(&self, x: &[Complex<T>]) -> Vec<T> {
        self.points
            .iter()
            .zip(&self.log_norms)
            .map(|(a, &ln)| {
                let mut l = -ln;
                for (j, &aj) in a.iter().enumerate() {
                    if aj > 0 {
                        let m = x[j].norm().to_f64_lossy();
                        if m == 0.0 {
                            return T::zero();
                        }
                        l += 2.0 * aj as f64 * m.ln();
                    }
                }
                <T as Real>::from_f64(l.exp())
            })
            .collect()
    }

    pub fn eval<T: Real>(&self, x: &[Complex<T>], y: &[Complex<T>]) -> Result<Complex<T>> {
        let tol = (T::epsilon().to_f64_lossy() * 1e4).max(1e-12);
        for p in [x, y] {
            if p.len() != self.d + 1 {
                return Err(Error::InvalidInput("sphere point has wrong length".into()));
            }
            let n2: f64 = p.iter().map(|c| c.norm_sqr().to_f64_lossy()).sum();
            if (n2.sqrt() - 1.0).abs() > tol {
                return Err(Error::InvalidInput("point is not on the unit sphere".into()));
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked<T: Real>(&self, x: &[Complex<T>], y: &[Complex<T>]) -> Complex<T> {
        let n = self.d + 1;
        let mut logm = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for j in 0..n {
            let p = x[j] * y[j].conj();
            let m = p.norm().to_f64_lossy();
            logm.push(if m > 0.0 { m.ln() } else { f64::NEG_INFINITY });
            arg.push(p.arg().to_f64_lossy());
        }
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        for (a, &ln) in self.points.iter().zip(&self.log_norms) {
            let mut l = -ln;
            let mut phase = 0.0;
            let mut zero = false;
            for j in 0..n {
                if a[j] > 0 {
                    if logm[j] == f64::NEG_INFINITY {
                        zero = true;
                        break;
                    }
                    l += a[j] as f64 * logm[j];
                    phase += a[j] as f64 * arg[j];
                }
            }
            if zero {
                continue;
            }
            let mag = l.exp();
            re.add(mag * phase.cos());
            im.add(mag * phase.sin());
        }
        Complex::new(<T as Real>::from_f64(re.sum()), <T as Real>::from_f64(im.sum()))
    }
}

pub fn kernel_eval<T: Real>(
    model: &WeightedModel,
    ray: &WeightRay,
    k: u64,
    x: &[Complex<T>],
    y: &[Complex<T>],
) -> Result<Complex<T>> {
    Kernel::new(model, ray, k)?.eval(x, y)
}

/// Total mass `pi^d / d!` of `X` under the fibre normalised volume.
pub fn sphere_mass(d: usize) -> f64 {
    PI.powi(d as i32) / (1..=d).map(|i| i as f64).product::<f64>()
}

/// Uniform point on the unit sphere in `C^n`.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: Complex64,
    /// `sqrt(se_re^2 + se_im^2)`.
    pub std_error: f64,
}

impl McEstimate {
    /// `|estimate - target| <= n sigma`.
    pub fn within(&self, target: Complex64, n_sigma: f64) -> bool {
        (self.estimate - target).norm() <= n_sigma * self.std_error
    }
}

const SHARD: usize = 4096;

/// Sharded Monte-Carlo mean of `h` over the sphere times the mass of `X`.
/// Shard `i` draws from ChaCha stream `i` of the master seed, and shards are
/// reduced in index order, so results do not depend on the thread count.
pub fn sphere_mc<F>(d: usize, samples: usize, seed: u64, h: F) -> McEstimate
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let shards = samples.div_ceil(SHARD);
    let partial: Vec<[f64; 4]> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let count = SHARD.min(samples - s * SHARD);
            let mut acc = [0.0f64; 4];
            for _ in 0..count {
                let y = sample_sphere(&mut rng, d + 1);
                let v = h(&y);
                acc[0] += v.re;
                acc[1] += v.im;
                acc[2] += v.re * v.re;
                acc[3] += v.im * v.im;
            }
            acc
        })
        .collect();
    let mut tot = [Neumaier::default(); 4];
    for p in &partial {
        for i in 0..4 {
            tot[i].add(p[i]);
        }
    }
    let n = samples as f64;
    let mass = sphere_mass(d);
    let (mr, mi) = (tot[0].sum() / n, tot[1].sum() / n);
    let vr = (tot[2].sum() / n - mr * mr).max(0.0);
    let vi = (tot[3].sum() / n - mi * mi).max(0.0);
    McEstimate {
        estimate: Complex64::new(mr, mi) * mass,
        std_error: mass * ((vr + vi) / n).sqrt(),
    }
}

/// Apply `gamma^{-1}` to a sphere point.
pub fn apply_gamma_inverse(gamma: &RationalPhaseAutomorphism, y: &[Complex64]) -> Vec<Complex64> {
    y.iter()
        .enumerate()
        .map(|(j, c)| c * Complex64::from_polar(1.0, -TAU * gamma.p()[j] as f64 / gamma.q() as f64))
        .collect()
}

/// Monte-Carlo estimate of `int_X Pi(gamma^{-1} y, y) f(y) dV_X(y)`.
pub fn trace_via_kernel_mc(
    model: &WeightedModel,
    ray: &WeightRay,
    k: u64,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidInput("at least 10^3 samples required".into()));
    }
    let kernel = Kernel::new(model, ray, k)?;
    if kernel.dim() == 0 {
        return Ok(McEstimate {
            estimate: Complex64::new(0.0, 0.0),
            std_error: 0.0,
        });
    }
    Ok(sphere_mc(model.d(), samples, seed, |y| {
        let gy = apply_gamma_inverse(gamma, y);
        kernel.eval_unchecked(&gy, y) * f.eval_sphere(y)
    }))
}

/// Monte-Carlo estimate of `int_X Pi(x, y) Pi(y, z) dV_X(y)`.
pub fn reproducing_mc(
    kernel: &Kernel,
    d: usize,
    x: &[Complex64],
    z: &[Complex64],
    samples: usize,
    seed: u64,
) -> McEstimate {
    sphere_mc(d, samples, seed, |y| {
        kernel.eval_unchecked(x, y) * kernel.eval_unchecked(y, z)
    })
}

/// `exp(2 pi i theta)` acting by the torus on a sphere point.
pub fn torus_rotate(model: &WeightedModel, theta: &[f64], y: &[Complex64]) -> Vec<Complex64> {
    y.iter()
        .enumerate()
        .map(|(j, c)| {
            let a: f64 = model
                .weight(j)
                .iter()
                .zip(theta)
                .map(|(&w, t)| w as f64 * t)
                .sum();
            c * Complex64::from_polar(1.0, TAU * a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::dimension;
    use crate::linalg::rat;
    use proptest::prelude::*;

    fn ex1() -> (WeightedModel, WeightRay) {
        (
            WeightedModel::circle(&[1, 2, 3]).unwrap(),
            WeightRay::new(vec![1]).unwrap(),
        )
    }

    fn c(re: i64, den: i64) -> ExactComplex {
        rational_complex(rat(re, den), BigRational::zero())
    }

    #[test]
    fn entry_examples() {
        let x0 = Observable::coordinate(3, 0);
        let e = toeplitz_entry(&[0, 0, 0], &[0, 0, 0], &x0, 2);
        assert_eq!(e.as_rational(), Some(c(1, 3)));
        let e = toeplitz_entry(&[1, 0, 0], &[1, 0, 0], &x0, 2);
        assert_eq!(e.as_rational(), Some(c(1, 2)));
        let off = Observable::new(vec![Term {
            sigma: vec![1, 0, 0],
            tau: vec![0, 1, 0],
            coeff: exact_one(),
        }])
        .unwrap();
        let e = toeplitz_entry(&[0, 1, 0], &[1, 0, 0], &off, 2);
        assert_eq!(e.as_rational(), Some(c(1, 4)));
        assert!(toeplitz_entry(&[1, 0, 0], &[0, 1, 0], &off, 2).is_zero());
    }

    // Dirichlet moments: E[x^beta] under |e_alpha|^2 dV is a Dir(alpha + 1) moment
    #[test]
    fn diagonal_formula_matches_dirichlet() {
        let alpha = [2u64, 1, 0];
        let beta = [1u64, 0, 2];
        let f = Observable::new(vec![Term {
            sigma: beta.to_vec(),
            tau: beta.to_vec(),
            coeff: exact_one(),
        }])
        .unwrap();
        let e = toeplitz_entry(&alpha, &alpha, &f, 2).as_rational().unwrap();
        // E[x0 x2^2] for Dir(3,2,1): 3*1*2/(6*7*8)
        assert_eq!(e, c(6, 336));
    }

    // Monte-Carlo on S^5 for an off-diagonal entry with a surd value
    #[test]
    fn off_diagonal_entry_monte_carlo() {
        let f = Observable::new(vec![Term {
            sigma: vec![1, 0, 0],
            tau: vec![0, 1, 0],
            coeff: exact_one(),
        }])
        .unwrap();
        let a = [0u64, 2, 0];
        let b = [1u64, 1, 0];
        let exact = toeplitz_entry(&a, &b, &f, 2);
        assert!(exact.as_rational().is_none());
        let lf = LogFactorials::new(10);
        let na = log_norm_v1(&lf, 2, &a).exp();
        let nb = log_norm_v1(&lf, 2, &b).exp();
        let est = sphere_mc(2, 400_000, 3, |z| {
            let fa = z[1] * z[1] / na.sqrt();
            let fb = z[0] * z[1] / nb.sqrt();
            f.eval_sphere(z) * fa * fb.conj()
        });
        assert!(est.within(exact.to_complex64(), 3.0), "{est:?} vs {exact:?}");
    }

    #[test]
    fn trace_examples() {
        let (m, r) = ex1();
        let id = RationalPhaseAutomorphism::identity(3);
        let one = Observable::one(3);
        let t = exact_trace(&m, &r, 6, &id, &one).unwrap();
        assert_eq!(t.as_rational(), Some(c(7, 1)));
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 5).unwrap();
        let t = exact_trace(&m, &r, 1, &gamma, &one).unwrap().value();
        let expect = Complex64::from_polar(1.0, -TAU / 5.0);
        assert!((t - expect).norm() < 1e-15);
        let empty = WeightRay::new(vec![-1]).unwrap();
        let t = exact_trace(&m, &empty, 5, &gamma, &one).unwrap();
        assert!(t.classes.is_empty());
        assert_eq!(t.value(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn trace_equals_dimension() {
        let (m, r) = ex1();
        let id = RationalPhaseAutomorphism::identity(3);
        let one = Observable::one(3);
        for k in 0..=200 {
            let t = exact_trace(&m, &r, k, &id, &one).unwrap().as_rational().unwrap();
            let dim = dimension(&m, &r, k).unwrap();
            assert_eq!(t, c(dim as i64, 1), "k={k}");
        }
    }

    #[test]
    fn positivity_bounds() {
        let (m, r) = ex1();
        let id = RationalPhaseAutomorphism::identity(3);
        let f = Observable::new(vec![
            Term { sigma: vec![1, 0, 0], tau: vec![1, 0, 0], coeff: c(2, 1) },
            Term { sigma: vec![0, 1, 1], tau: vec![0, 1, 1], coeff: c(-1, 1) },
            Term { sigma: vec![0, 0, 0], tau: vec![0, 0, 0], coeff: c(1, 2) },
        ])
        .unwrap();
        assert!(f.is_real() && f.is_torus_invariant());
        let (lo, hi) = f.simplex_bounds();
        for k in [5, 17, 40] {
            let t = exact_trace(&m, &r, k, &id, &f).unwrap();
            let v = t.as_rational().unwrap();
            assert!(v.im.is_zero());
            let dim = dimension(&m, &r, k).unwrap() as f64;
            let re = rational_to::<f64>(&v.re);
            assert!(re >= lo * dim - 1e-9 && re <= hi * dim + 1e-9);
        }
    }

    #[test]
    fn off_diagonal_terms_do_not_contribute() {
        let (m, r) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 3, 2], 7).unwrap();
        // W sigma = W tau so alpha' stays in the isotype
        let f = Observable::new(vec![Term {
            sigma: vec![1, 1, 0],
            tau: vec![0, 0, 1],
            coeff: rational_complex(rat(3, 1), rat(1, 2)),
        }])
        .unwrap();
        for k in 1..30 {
            assert!(exact_trace(&m, &r, k, &gamma, &f).unwrap().classes.is_empty());
        }
    }

    #[test]
    fn phase_covariance_is_exact() {
        let (m, r) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 5).unwrap();
        let f = Observable::coordinate(3, 1);
        let t = vec![rat(2, 7)];
        let twisted = gamma.twisted_by(&m, &t);
        for k in 1..25u64 {
            let a = exact_trace(&m, &r, k, &gamma, &f).unwrap();
            let b = exact_trace(&m, &r, k, &twisted, &f).unwrap();
            let shift = frac(&(rat(2, 7) * BigInt::from(k)));
            assert_eq!(b, a.rotated(&shift), "k={k}");
        }
    }

    #[test]
    fn kernel_on_diagonal_at_coordinate_point() {
        let (m, r) = ex1();
        let x = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        for k in [1u64, 10, 100, 400] {
            let v = kernel_eval(&m, &r, k, &x, &x).unwrap();
            let expect = ((k + 1) * (k + 2)) as f64 / (PI * PI);
            assert!((v.re - expect).abs() < 1e-10 * expect && v.im.abs() < 1e-10 * expect);
        }
        let xf = [Complex::new(1.0f32, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)];
        let v: Complex<f32> = kernel_eval(&m, &r, 10, &xf, &xf).unwrap();
        assert!((v.re - 132.0 / (PI * PI) as f32).abs() < 1e-3);
    }

    #[test]
    fn kernel_identities() {
        let (m, r) = ex1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = Kernel::new(&m, &r, 12).unwrap();
        for _ in 0..20 {
            let x = sample_sphere(&mut rng, 3);
            let y = sample_sphere(&mut rng, 3);
            let a = kernel.eval(&x, &y).unwrap();
            let b = kernel.eval(&y, &x).unwrap();
            assert!((a - b.conj()).norm() < 1e-12 * a.norm().max(1.0));
            let diag: f64 = kernel.diagonal_terms(&x).iter().sum();
            let kx = kernel.eval(&x, &x).unwrap();
            assert!((diag - kx.re).abs() < 1e-10 * kx.re.max(1.0));
            // equivariance under rational torus elements
            for (num, den) in [(1, 3), (2, 7), (5, 11)] {
                let th = num as f64 / den as f64;
                let ty = torus_rotate(&m, &[th], &y);
                let lhs = kernel.eval(&x, &ty).unwrap();
                let rhs = Complex64::from_polar(1.0, -TAU * 12.0 * th) * a;
                assert!((lhs - rhs).norm() < 1e-12 * a.norm().max(1.0));
            }
        }
        assert!(kernel.eval(&[Complex64::new(2.0, 0.0); 3], &[Complex64::new(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn monte_carlo_trace_matches_dimension() {
        let (m, r) = ex1();
        let id = RationalPhaseAutomorphism::identity(3);
        let est = trace_via_kernel_mc(&m, &r, 10, &id, &Observable::one(3), 100_000, 1).unwrap();
        let dim = dimension(&m, &r, 10).unwrap() as f64;
        assert_eq!(dim, 14.0);
        assert!(est.within(Complex64::new(dim, 0.0), 3.0), "{est:?}");
        let f = Observable::coordinate(3, 0);
        let exact = exact_trace(&m, &r, 10, &id, &f).unwrap().value();
        let est = trace_via_kernel_mc(&m, &r, 10, &id, &f, 100_000, 2).unwrap();
        assert!(est.within(exact, 3.0));
        let empty = WeightRay::new(vec![-1]).unwrap();
        let est = trace_via_kernel_mc(&m, &empty, 10, &id, &f, 1000, 2).unwrap();
        assert_eq!(est.estimate, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let (m, r) = ex1();
        let id = RationalPhaseAutomorphism::identity(3);
        let f = Observable::one(3);
        let a = trace_via_kernel_mc(&m, &r, 6, &id, &f, 20_000, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| trace_via_kernel_mc(&m, &r, 6, &id, &f, 20_000, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn reproducing_property() {
        let (m, r) = ex1();
        let kernel = Kernel::new(&m, &r, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..5 {
            let x = sample_sphere(&mut rng, 3);
            let z = sample_sphere(&mut rng, 3);
            let est = reproducing_mc(&kernel, 2, &x, &z, 100_000, 40 + i);
            assert!(est.within(kernel.eval(&x, &z).unwrap(), 3.0), "{est:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn trace_is_linear(num in -5i64..6, den in 1i64..5, k in 1u64..30) {
            let (m, r) = ex1();
            let gamma = RationalPhaseAutomorphism::new(vec![1, 2, 4], 5).unwrap();
            let f = Observable::coordinate(3, 2);
            let s = c(num, den);
            let a = exact_trace(&m, &r, k, &gamma, &f).unwrap();
            let b = exact_trace(&m, &r, k, &gamma, &f.scaled(&s)).unwrap();
            let mut scaled = a.classes.clone();
            for v in scaled.values_mut() {
                *v = &*v * &s;
            }
            scaled.retain(|_, v| !(v.re.is_zero() && v.im.is_zero()));
            prop_assert_eq!(scaled, b.classes);
        }
    }
}
