//! Probes of the equivariant Szego kernel: off-locus decay, near-diagonal
//! Gaussian profiles in adapted coordinates, and localization of the trace
//! integrand near fixed loci.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2, TAU};

use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::toeplitz_trace::{apply_gamma_inverse, sample_sphere, sphere_mass, Kernel, Observable};
use crate::torus_action::{
    fixed_components, gram_d, moment_map, orthonormal_complement, point_stabilizer, ray_slice,
    RationalPhaseAutomorphism, WeightRay, WeightedModel,
};
use crate::{Complex64, Error, Result};

/// Chart validity bound on `|disp| / sqrt(k)`.
pub const CHART_LIMIT: f64 = 0.3;

/// Heisenberg-type displacement at a point of `X_varpi`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Displacement {
    pub theta: f64,
    /// Coefficients along `J xi_M`, one per orthonormal `h in varpi^perp`.
    pub v_t: Vec<f64>,
    /// Coefficients along `xi_M`.
    pub v_v: Vec<f64>,
    /// Coordinates in an orthonormal basis of the horizontal space.
    pub v_h: Vec<Complex64>,
}

impl Displacement {
    pub fn zero(model: &WeightedModel) -> Self {
        let g = model.g();
        Self {
            theta: 0.0,
            v_t: vec![0.0; g - 1],
            v_v: vec![0.0; g - 1],
            v_h: vec![Complex64::new(0.0, 0.0); model.d() + 1 - g],
        }
    }

    pub fn norm(&self) -> f64 {
        (self.theta * self.theta
            + self.v_t.iter().map(|a| a * a).sum::<f64>()
            + self.v_v.iter().map(|a| a * a).sum::<f64>()
            + self.v_h.iter().map(|a| a.norm_sqr()).sum::<f64>())
        .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.norm() == 0.0
    }
}

fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    // sum u_j conj(v_j)
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

fn vnorm(u: &[Complex64]) -> f64 {
    u.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(acc: &mut [Complex64], c: Complex64, v: &[Complex64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
}

/// `omega(u, v) = Im sum conj(u_j) v_j`.
pub fn omega(u: &[Complex64], v: &[Complex64]) -> f64 {
    dot(v, u).im
}

/// `psi_2(u, w) = sum u_j conj(w_j) - (|u|^2 + |w|^2) / 2`.
pub fn psi2(u: &[Complex64], w: &[Complex64]) -> Complex64 {
    dot(u, w) - 0.5 * (vnorm(u).powi(2) + vnorm(w).powi(2))
}

/// Adapted frame at a sphere point over `M_varpi`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub x: Vec<Complex64>,
    pub simplex: Vec<f64>,
    /// Orbit directions `xi_M`, one per orthonormal `h in varpi^perp`.
    pub xi: Vec<Vec<Complex64>>,
    /// `J xi_M`.
    pub jxi: Vec<Vec<Complex64>>,
    /// Orthonormal basis of the horizontal complement.
    pub horizontal: Vec<Vec<Complex64>>,
    /// Horizontal part of the field of `varpi / |varpi|`.
    pub xi_varpi: Vec<Complex64>,
    pub phi_norm: f64,
    pub lambda: f64,
    pub d_m: f64,
}

pub fn frame(model: &WeightedModel, ray: &WeightRay, x: &[Complex64]) -> Result<Frame> {
    ray.check_model(model)?;
    let n = model.n();
    if x.len() != n || (vnorm(x) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("base point must be a unit vector in C^{d+1}".into()));
    }
    let simplex: Vec<f64> = x.iter().map(|c| c.norm_sqr()).collect();
    let phi = moment_map(model, &simplex);
    let phi_norm = phi.iter().map(|a| a * a).sum::<f64>().sqrt();
    let along: f64 = phi.iter().zip(ray.varpi()).map(|(p, &v)| p * v as f64).sum::<f64>() / ray.norm();
    if along <= 0.0 || (phi_norm - along).abs() > 1e-9 * phi_norm.max(1.0) {
        return Err(Error::InvalidInput("base point is not over the ray".into()));
    }
    let h = orthonormal_complement(ray);
    let hw = |hv: &[f64], j: usize| -> f64 {
        model.weight(j).iter().zip(hv).map(|(&w, a)| w as f64 * a).sum()
    };
    let i = Complex64::new(0.0, 1.0);
    let xi: Vec<Vec<Complex64>> = h
        .iter()
        .map(|hv| (0..n).map(|j| i * hw(hv, j) * x[j]).collect())
        .collect();
    let jxi: Vec<Vec<Complex64>> = xi.iter().map(|v| v.iter().map(|c| i * c).collect()).collect();
    let unit: Vec<f64> = ray.varpi().iter().map(|&v| v as f64 / ray.norm()).collect();
    let xi_varpi: Vec<Complex64> = (0..n).map(|j| i * (hw(&unit, j) - phi_norm) * x[j]).collect();

    // complex Gram-Schmidt of x, xi_a, then coordinate vectors
    let mut ortho: Vec<Vec<Complex64>> = Vec::new();
    let push = |v: Vec<Complex64>, ortho: &mut Vec<Vec<Complex64>>| -> bool {
        let mut v = v;
        for u in ortho.iter() {
            let c = dot(&v, u);
            axpy(&mut v, -c, u);
        }
        let nv = vnorm(&v);
        if nv > 1e-8 {
            ortho.push(v.into_iter().map(|c| c / nv).collect());
            true
        } else {
            false
        }
    };
    push(x.to_vec(), &mut ortho);
    for v in &xi {
        if !push(v.clone(), &mut ortho) {
            return Err(Error::SingularGram(0.0));
        }
    }
    let fixed = ortho.len();
    for j in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        push(e, &mut ortho);
    }
    let horizontal = ortho.split_off(fixed);
    debug_assert_eq!(horizontal.len(), model.d() + 1 - model.g());
    Ok(Frame {
        x: x.to_vec(),
        d_m: gram_d(model, ray, &simplex)?,
        simplex,
        xi,
        jxi,
        horizontal,
        xi_varpi,
        phi_norm,
        lambda: ray.norm() / phi_norm,
    })
}

impl Frame {
    /// Real Gram matrix of `J xi_a`, `xi_a`, and `e, i e` for horizontal `e`.
    pub fn real_gram(&self) -> Vec<Vec<f64>> {
        let i = Complex64::new(0.0, 1.0);
        let mut dirs: Vec<Vec<Complex64>> = self.jxi.clone();
        dirs.extend(self.xi.iter().cloned());
        for e in &self.horizontal {
            dirs.push(e.clone());
            dirs.push(e.iter().map(|c| i * c).collect());
        }
        dirs.iter()
            .map(|u| dirs.iter().map(|v| dot(u, v).re).collect())
            .collect()
    }

    fn check(&self, disp: &Displacement) -> Result<()> {
        if disp.v_t.len() != self.jxi.len()
            || disp.v_v.len() != self.xi.len()
            || disp.v_h.len() != self.horizontal.len()
        {
            return Err(Error::InvalidInput("displacement has wrong shape".into()));
        }
        Ok(())
    }

    fn tangent(&self, disp: &Displacement) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.x.len()];
        for (a, u) in disp.v_t.iter().zip(&self.jxi) {
            axpy(&mut v, Complex64::new(*a, 0.0), u);
        }
        v
    }

    fn orbit(&self, disp: &Displacement) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.x.len()];
        for (a, u) in disp.v_v.iter().zip(&self.xi) {
            axpy(&mut v, Complex64::new(*a, 0.0), u);
        }
        v
    }

    fn horizontal_part(&self, disp: &Displacement) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.x.len()];
        for (a, u) in disp.v_h.iter().zip(&self.horizontal) {
            axpy(&mut v, *a, u);
        }
        v
    }

    /// Ambient tangent vector of a displacement (without `theta`).
    pub fn ambient(&self, disp: &Displacement) -> Vec<Complex64> {
        let mut v = self.tangent(disp);
        for (a, b) in v.iter_mut().zip(self.orbit(disp)) {
            *a += b;
        }
        for (a, b) in v.iter_mut().zip(self.horizontal_part(disp)) {
            *a += b;
        }
        v
    }

    fn project_horizontal(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for e in &self.horizontal {
            axpy(&mut out, dot(v, e), e);
        }
        out
    }
}

fn chart_check(disp: &Displacement, k: u64) -> Result<()> {
    let r = disp.norm() / (k as f64).sqrt();
    if !(r < CHART_LIMIT) {
        return Err(Error::ChartOverflow(r));
    }
    Ok(())
}

fn renormalized(frame: &Frame, disp: &Displacement, k: u64) -> Vec<Complex64> {
    let s = (k as f64).sqrt();
    let v = frame.ambient(disp);
    let y: Vec<Complex64> = frame.x.iter().zip(&v).map(|(a, b)| a + b / s).collect();
    let n = vnorm(&y);
    y.into_iter().map(|c| c / n).collect()
}

/// `x + v / sqrt(k)` renormalized, then the fibre phase `exp(i theta / sqrt(k))`.
pub fn displace(frame: &Frame, disp: &Displacement, k: u64) -> Result<Vec<Complex64>> {
    frame.check(disp)?;
    chart_check(disp, k)?;
    if disp.is_zero() {
        return Ok(frame.x.clone());
    }
    let phase = Complex64::from_polar(1.0, disp.theta / (k as f64).sqrt());
    Ok(renormalized(frame, disp, k).into_iter().map(|c| c * phase).collect())
}

/// Equivariant variant: the angle acts through the torus element
/// `exp(theta / sqrt(k) varpi / |varpi|)`.
pub fn displace_equivariant(
    model: &WeightedModel,
    ray: &WeightRay,
    frame: &Frame,
    disp: &Displacement,
    k: u64,
) -> Result<Vec<Complex64>> {
    frame.check(disp)?;
    chart_check(disp, k)?;
    let y = if disp.theta == 0.0 && disp.is_zero() {
        frame.x.clone()
    } else {
        renormalized(frame, disp, k)
    };
    let angle = disp.theta / (k as f64).sqrt();
    Ok(y.iter()
        .enumerate()
        .map(|(j, c)| {
            let a: f64 = model
                .weight(j)
                .iter()
                .zip(ray.varpi())
                .map(|(&w, &v)| (w * v) as f64)
                .sum::<f64>()
                / ray.norm();
            c * Complex64::from_polar(1.0, angle * a)
        })
        .collect())
}

/// `sum_{t in G_x} chi_varpi(t)^k` over the stabilizer of the base point.
pub fn stabilizer_character_sum(model: &WeightedModel, ray: &WeightRay, simplex: &[f64], k: u64) -> Result<Complex64> {
    let support: Vec<usize> = (0..simplex.len()).filter(|&j| simplex[j] > 1e-14).collect();
    Ok(point_stabilizer(model, &support)?
        .iter()
        .map(|theta| {
            let r = ray.character(theta) * num_bigint::BigInt::from(k);
            let r = crate::linalg::frac(&r);
            Complex64::from_polar(1.0, TAU * r.to_f64().unwrap())
        })
        .sum())
}

/// Exponent of the Gaussian profile.
pub fn profile_exponent(frame: &Frame, d1: &Displacement, d2: &Displacement) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let a: Vec<Complex64> = frame
        .xi_varpi
        .iter()
        .map(|c| c * ((d1.theta - d2.theta) / frame.phi_norm))
        .collect();
    let a_h = frame.project_horizontal(&a);
    let v1h = frame.horizontal_part(d1);
    let v2h = frame.horizontal_part(d2);
    let (v1t, v2t) = (frame.tangent(d1), frame.tangent(d2));
    let (v1v, v2v) = (frame.orbit(d1), frame.orbit(d2));
    let shifted: Vec<Complex64> = v1h.iter().zip(&a_h).map(|(p, q)| p - q).collect();
    i * omega(&a, &v1h) + psi2(&shifted, &v2h) - vnorm(&v1t).powi(2) - vnorm(&v2t).powi(2)
        + i * omega(&v1v, &v1t)
        - i * omega(&v2v, &v2t)
}

/// Leading scaling asymptotics of `Pi(displace(x, d1), displace(x, d2))`.
pub fn profile_prediction(
    model: &WeightedModel,
    ray: &WeightRay,
    frame: &Frame,
    d1: &Displacement,
    d2: &Displacement,
    k: u64,
) -> Result<Complex64> {
    let d = model.d() as f64;
    let g = model.g() as f64;
    let kf = k as f64;
    let expo = d + (1.0 - g) / 2.0;
    let pref = (ray.norm() * kf / PI).powf(expo) * frame.phi_norm.powf(-(expo + 1.0))
        / ((SQRT_2 * PI).powf(g - 1.0) * frame.d_m);
    let phase = Complex64::from_polar(1.0, kf.sqrt() * frame.lambda * (d1.theta - d2.theta));
    let gauss = (profile_exponent(frame, d1, d2) * frame.lambda).exp();
    Ok(stabilizer_character_sum(model, ray, &frame.simplex, k)? * pref * phase * gauss)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    pub k_values: Vec<u64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub diagnostics: BTreeMap<String, Vec<f64>>,
    pub passed: bool,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// `|Pi / prediction - 1|` per `k`.
pub fn gaussian_profile_probe(
    model: &WeightedModel,
    ray: &WeightRay,
    x: &[Complex64],
    d1: &Displacement,
    d2: &Displacement,
    k_list: &[u64],
) -> Result<ProbeReport> {
    let fr = frame(model, ray, x)?;
    let rows: Vec<Result<(Complex64, Complex64)>> = k_list
        .par_iter()
        .map(|&k| {
            let y1 = displace(&fr, d1, k)?;
            let y2 = displace(&fr, d2, k)?;
            let kernel = Kernel::new(model, ray, k)?;
            let obs = kernel.eval(&y1, &y2)?;
            Ok((obs, profile_prediction(model, ray, &fr, d1, d2, k)?))
        })
        .collect();
    let mut report = ProbeReport {
        k_values: k_list.to_vec(),
        ..Default::default()
    };
    let mut diag: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let (obs, pred) = r?;
        let ratio = obs / pred;
        report.observed.push((ratio - 1.0).norm());
        report.predicted.push(0.0);
        for (key, v) in [
            ("kernel_re", obs.re),
            ("kernel_im", obs.im),
            ("predicted_re", pred.re),
            ("predicted_im", pred.im),
            ("ratio_re", ratio.re),
            ("ratio_im", ratio.im),
        ] {
            diag.entry(key.to_string()).or_default().push(v);
        }
    }
    report.diagnostics = diag;
    report.passed = report.observed.last().is_some_and(|&e| e < 0.05);
    Ok(report)
}

/// `arccos max_{s in S} sum_j |x_j| sqrt(s_j)`, the sphere distance from `x`
/// to the preimage of the polytope `S = conv(vertices)` (Frank-Wolfe).
pub fn distance_to_slice(x: &[Complex64], vertices: &[Vec<f64>]) -> f64 {
    if vertices.is_empty() {
        return f64::INFINITY;
    }
    let a: Vec<f64> = x.iter().map(|c| c.norm()).collect();
    let value = |s: &[f64]| -> f64 { a.iter().zip(s).map(|(p, q)| p * q.max(0.0).sqrt()).sum() };
    let n = a.len();
    let mut s: Vec<f64> = (0..n)
        .map(|j| vertices.iter().map(|v| v[j]).sum::<f64>() / vertices.len() as f64)
        .collect();
    let mut best = value(&s);
    for _ in 0..2000 {
        let grad: Vec<f64> = (0..n)
            .map(|j| {
                if s[j] > 1e-300 {
                    a[j] / (2.0 * s[j].sqrt())
                } else if a[j] > 0.0 {
                    1e150
                } else {
                    0.0
                }
            })
            .collect();
        let score = |v: &Vec<f64>| -> f64 { v.iter().zip(&grad).map(|(p, q)| p * q).sum() };
        let target = vertices
            .iter()
            .max_by(|u, v| score(u).total_cmp(&score(v)))
            .unwrap();
        let gap: f64 = target.iter().zip(&s).zip(&grad).map(|((t, c), q)| (t - c) * q).sum();
        if gap <= 1e-14 {
            break;
        }
        let at = |t: f64| -> Vec<f64> { s.iter().zip(target).map(|(c, v)| c + t * (v - c)).collect() };
        let t = golden_max(|t| value(&at(t)), 0.0, 1.0, 1e-12);
        let next = at(t);
        let nv = value(&next);
        if nv <= best + 1e-16 {
            break;
        }
        s = next;
        best = nv;
    }
    best.min(1.0).acos()
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

fn rotate(model: &WeightedModel, theta: &[f64], y: &[Complex64]) -> Vec<Complex64> {
    crate::toeplitz_trace::torus_rotate(model, theta, y)
}

/// `min_t arccos Re <x, t y>` over the torus: a `64^g` grid, then cyclic
/// golden-section refinement per angle.
pub fn orbit_distance(model: &WeightedModel, x: &[Complex64], y: &[Complex64]) -> f64 {
    let g = model.g();
    let grid = 64usize;
    let score = |t: &[f64]| -> f64 { dot(x, &rotate(model, t, y)).re };
    let mut best_t = vec![0.0; g];
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; g];
    loop {
        let t: Vec<f64> = idx.iter().map(|&i| i as f64 / grid as f64).collect();
        let v = score(&t);
        if v > best {
            best = v;
            best_t = t;
        }
        let mut c = 0;
        while c < g {
            idx[c] += 1;
            if idx[c] < grid {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
        if c == g {
            break;
        }
    }
    let h = 1.0 / grid as f64;
    for _ in 0..4 {
        let before = best;
        for c in 0..g {
            let base = best_t.clone();
            let line = |s: f64| {
                let mut t = base.clone();
                t[c] = s;
                score(&t)
            };
            let s = golden_max(line, base[c] - h, base[c] + h, 1e-10);
            let v = line(s);
            if v > best {
                best = v;
                best_t[c] = s;
            }
        }
        if best - before < 1e-13 {
            break;
        }
    }
    best.clamp(-1.0, 1.0).acos()
}

/// `max(dist(x, X_varpi), dist(T x, T y))`.
pub fn separation(model: &WeightedModel, slice: &[Vec<f64>], x: &[Complex64], y: &[Complex64]) -> f64 {
    distance_to_slice(x, slice).max(orbit_distance(model, x, y))
}

/// `C k^{epsilon - 1/2}`.
pub fn separation_radius(epsilon: f64, c: f64, k: u64) -> f64 {
    c * (k as f64).powf(epsilon - 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSampler {
    pub pairs: usize,
    pub seed: u64,
    pub max_tries: usize,
}

impl Default for PairSampler {
    fn default() -> Self {
        Self {
            pairs: 100,
            seed: 0,
            max_tries: 100_000,
        }
    }
}

pub type SpherePair = (Vec<Complex64>, Vec<Complex64>);

pub(crate) fn full_slice(model: &WeightedModel, ray: &WeightRay) -> Vec<Vec<f64>> {
    let all: Vec<usize> = (0..model.n()).collect();
    ray_slice(model, ray, &all).map_or_else(Vec::new, |s| s.vertices_f64())
}

/// Uniform pairs with separation at least `min_sep`.
pub fn sample_separated_pairs(
    model: &WeightedModel,
    ray: &WeightRay,
    sampler: &PairSampler,
    min_sep: f64,
) -> Result<Vec<SpherePair>> {
    let slice = full_slice(model, ray);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut out = Vec::with_capacity(sampler.pairs);
    let mut tries = 0;
    while out.len() < sampler.pairs {
        if tries >= sampler.max_tries {
            return Err(Error::BudgetExceeded {
                bound: min_sep,
                cap: sampler.max_tries as u64,
            });
        }
        tries += 1;
        let x = sample_sphere(&mut rng, model.n());
        let y = sample_sphere(&mut rng, model.n());
        if separation(model, &slice, &x, &y) >= min_sep {
            out.push((x, y));
        }
    }
    Ok(out)
}

/// `max |Pi(gamma^{-1} x, y)|` over fixed pairs, with `k^P` rescalings.
pub fn rapid_decay_on_pairs(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: Option<&RationalPhaseAutomorphism>,
    pairs: &[SpherePair],
    k_list: &[u64],
) -> Result<ProbeReport> {
    let maxima: Vec<Result<f64>> = k_list
        .par_iter()
        .map(|&k| {
            let kernel = Kernel::new(model, ray, k)?;
            Ok(pairs
                .iter()
                .map(|(x, y)| {
                    let gx = gamma.map_or_else(|| x.clone(), |g| apply_gamma_inverse(g, x));
                    kernel.eval(&gx, y).map(|v| v.norm())
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max))
        })
        .collect();
    let observed = maxima.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut diagnostics = BTreeMap::new();
    let mut passed = true;
    for p in [2, 4, 6] {
        let series: Vec<f64> = observed
            .iter()
            .zip(k_list)
            .map(|(m, &k)| m * (k as f64).powi(p))
            .collect();
        passed &= strictly_decreasing(&series) || series.iter().all(|&v| v == 0.0);
        diagnostics.insert(format!("k{p}_max"), series);
    }
    Ok(ProbeReport {
        k_values: k_list.to_vec(),
        predicted: vec![0.0; observed.len()],
        observed,
        diagnostics,
        passed,
    })
}

/// Pairs at separation `C k_min^{epsilon - 1/2}`, the largest radius on the grid.
pub fn rapid_decay_probe(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: Option<&RationalPhaseAutomorphism>,
    sampler: &PairSampler,
    k_list: &[u64],
    epsilon: f64,
    c: f64,
) -> Result<ProbeReport> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidInput("epsilon must lie in (0, 1/2)".into()));
    }
    let k_min = k_list.iter().copied().min().unwrap_or(1).max(1);
    let pairs = sample_separated_pairs(model, ray, sampler, separation_radius(epsilon, c, k_min))?;
    rapid_decay_on_pairs(model, ray, gamma, &pairs, k_list)
}

const SHARD: usize = 4096;

/// Monte-Carlo split of the trace integrand into the tube of radius
/// `C k^{epsilon - 1/2}` around the fixed loci and its complement. Observed
/// is the outside absolute mass relative to the inside one.
#[allow(clippy::too_many_arguments)]
pub fn tube_localization_check(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
    f: &Observable,
    k_list: &[u64],
    epsilon: f64,
    c: f64,
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let comps = fixed_components(model, ray, gamma)?;
    let slices: Vec<Vec<Vec<f64>>> = comps.iter().map(|c| c.slice.vertices_f64()).collect();
    let shards = samples.div_ceil(SHARD);
    // samples and their distances to the loci, shared by every k
    let points: Vec<(Vec<Complex64>, f64)> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let count = SHARD.min(samples - s * SHARD);
            (0..count)
                .map(|_| {
                    let y = sample_sphere(&mut rng, model.n());
                    let dist = slices
                        .iter()
                        .map(|v| distance_to_slice(&y, v))
                        .fold(f64::INFINITY, f64::min);
                    (y, dist)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mass = sphere_mass(model.d()) / samples as f64;
    let mut report = ProbeReport {
        k_values: k_list.to_vec(),
        ..Default::default()
    };
    let mut diag: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &k in k_list {
        let kernel = Kernel::new(model, ray, k)?;
        let radius = separation_radius(epsilon, c, k);
        let (inside, outside) = if kernel.dim() == 0 {
            (0.0, 0.0)
        } else {
            let parts: Vec<(f64, f64)> = points
                .par_chunks(SHARD)
                .map(|chunk| {
                    chunk.iter().fold((0.0, 0.0), |(i, o), (y, dist)| {
                        let gy = apply_gamma_inverse(gamma, y);
                        let h = (kernel.eval_unchecked(&gy, y) * f.eval_sphere(y)).norm();
                        if *dist <= radius {
                            (i + h, o)
                        } else {
                            (i, o + h)
                        }
                    })
                })
                .collect();
            parts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 * mass, b + p.1 * mass))
        };
        let rel = if outside == 0.0 {
            0.0
        } else if inside == 0.0 {
            f64::INFINITY
        } else {
            outside / inside
        };
        report.observed.push(rel);
        report.predicted.push(0.0);
        diag.entry("inside".into()).or_default().push(inside);
        diag.entry("outside".into()).or_default().push(outside);
        diag.entry("radius".into()).or_default().push(radius);
    }
    report.diagnostics = diag;
    report.passed = report.observed.last().is_some_and(|&r| r < 1e-2);
    Ok(report)
}
