use num_traits::ToPrimitive;

use super::{moment_map, validate::perp_basis, WeightRay, WeightedModel};
use crate::linalg::determinant_f64;
use crate::{Error, Result};

/// Orthonormal basis of `varpi^perp` (Gram-Schmidt on an integer basis).
pub fn orthonormal_complement(ray: &WeightRay) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for b in perp_basis(ray) {
        let mut v: Vec<f64> = b.iter().map(|x| x.to_f64().unwrap()).collect();
        for u in &out {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push(v.into_iter().map(|a| a / n).collect());
    }
    out
}

/// `D(m)`: volume distortion between the Lie algebra metric on `ker Phi(m)`
/// and the Fubini-Study metric on the corresponding orbit directions.
pub fn gram_d(model: &WeightedModel, ray: &WeightRay, x: &[f64]) -> Result<f64> {
    ray.check_model(model)?;
    let basis = orthonormal_complement(ray);
    gram_d_with_basis(model, ray, x, &basis)
}

/// As [`gram_d`] with a caller supplied basis, which must be orthonormal and
/// orthogonal to `varpi`.
pub fn gram_d_with_basis(
    model: &WeightedModel,
    ray: &WeightRay,
    x: &[f64],
    basis: &[Vec<f64>],
) -> Result<f64> {
    let g = model.g();
    if x.len() != model.n() || x.iter().any(|&v| v < -1e-12) {
        return Err(Error::InvalidInput("not a simplex point".into()));
    }
    if (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("simplex point does not sum to 1".into()));
    }
    let phi = moment_map(model, x);
    let phi_norm = phi.iter().map(|p| p * p).sum::<f64>().sqrt();
    let along: f64 = phi
        .iter()
        .zip(ray.varpi())
        .map(|(p, &v)| p * v as f64)
        .sum::<f64>()
        / ray.norm();
    if along <= 0.0 || (phi_norm - along).abs() > 1e-9 * phi_norm.max(1.0) {
        return Err(Error::InvalidInput("moment map is not on the ray".into()));
    }
    if basis.len() != g - 1 || basis.iter().any(|b| b.len() != g) {
        return Err(Error::InvalidInput(format!(
            "need {} vectors of length {g}",
            g - 1
        )));
    }
    for (a, u) in basis.iter().enumerate() {
        let on_ray: f64 = u.iter().zip(ray.varpi()).map(|(x, &v)| x * v as f64).sum();
        if on_ray.abs() > 1e-10 {
            return Err(Error::InvalidInput("basis is not orthogonal to varpi".into()));
        }
        for (b, v) in basis.iter().enumerate() {
            let ip: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            if (ip - expect).abs() > 1e-10 {
                return Err(Error::InvalidInput("basis is not orthonormal".into()));
            }
        }
    }
    if g == 1 {
        return Ok(1.0);
    }
    // h_{aj} = <w_j, xi_a>; on the ray <Phi, xi_a> = 0
    let h: Vec<Vec<f64>> = basis
        .iter()
        .map(|xi| {
            (0..model.n())
                .map(|j| {
                    model
                        .weight(j)
                        .iter()
                        .zip(xi)
                        .map(|(&w, c)| w as f64 * c)
                        .sum()
                })
                .collect()
        })
        .collect();
    let mean: Vec<f64> = h
        .iter()
        .map(|ha| ha.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let gram: Vec<Vec<f64>> = (0..g - 1)
        .map(|a| {
            (0..g - 1)
                .map(|b| {
                    (0..model.n())
                        .map(|j| x[j] * h[a][j] * h[b][j])
                        .sum::<f64>()
                        - mean[a] * mean[b]
                })
                .collect()
        })
        .collect();
    let det = determinant_f64(gram);
    if det <= 1e-14 {
        return Err(Error::SingularGram(det));
    }
    Ok(det.sqrt())
}
