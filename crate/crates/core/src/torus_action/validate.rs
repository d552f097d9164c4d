use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{gram::orthonormal_complement, WeightRay, WeightedModel};
use crate::linalg::{self, lp_maximize, solve_unique, LpOutcome, RatMatrix};
use crate::{Error, Result};

const TRANSVERSALITY_SAMPLES: usize = 200;
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub zero_excluded: bool,
    pub ray_meets_image: bool,
    /// `None` when there is nothing to sample (the ray misses the image).
    pub transversality_sampled: Option<bool>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.zero_excluded && self.transversality_sampled != Some(false)
    }
}

pub fn validate_model(model: &WeightedModel, ray: &WeightRay) -> Result<ValidationReport> {
    ray.check_model(model)?;
    if let Some(j) = (0..model.n()).find(|&j| model.weight(j).iter().all(|&w| w == 0)) {
        return Err(Error::DegenerateModel(format!("weight column {j} is zero")));
    }
    let n = model.n();
    let one = BigRational::one;
    let zero = BigRational::zero;

    // x >= 0, sum x = 1, W x = 0
    let mut a: RatMatrix = vec![(0..n).map(|_| one()).collect()];
    a.extend(
        model
            .rows()
            .iter()
            .map(|r| r.iter().map(|&w| BigRational::from_integer(w.into())).collect()),
    );
    let mut b = vec![one()];
    b.extend((0..model.g()).map(|_| zero()));
    let zero_excluded = matches!(
        lp_maximize(&a, &b, &vec![zero(); n]),
        LpOutcome::Infeasible
    );

    // maximise s subject to W x - s varpi = 0
    let mut a_ray = a.clone();
    a_ray[0].push(zero());
    for (row, &v) in a_ray.iter_mut().skip(1).zip(ray.varpi()) {
        row.push(BigRational::from_integer((-v).into()));
    }
    let mut c = vec![zero(); n];
    c.push(one());
    let ray_meets_image = matches!(
        lp_maximize(&a_ray, &b, &c),
        LpOutcome::Optimal { value, .. } if value.is_positive()
    );

    let transversality_sampled = if ray_meets_image {
        let all: Vec<usize> = (0..n).collect();
        ray_slice(model, ray, &all).map(|slice| sampled_transversality(model, ray, &slice))
    } else {
        None
    };
    Ok(ValidationReport {
        zero_excluded,
        ray_meets_image,
        transversality_sampled,
    })
}

/// The polytope `{x in Delta : supp x in I, Phi(x) in R_+ varpi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySlice {
    pub support: Vec<usize>,
    /// Vertices in full simplex coordinates, sorted.
    pub vertices: Vec<Vec<BigRational>>,
    /// Coordinates not identically zero on the slice.
    pub generic_support: Vec<usize>,
}

impl RaySlice {
    pub fn vertices_f64(&self) -> Vec<Vec<f64>> {
        self.vertices
            .iter()
            .map(|v| v.iter().map(crate::scalar::rational_to::<f64>).collect())
            .collect()
    }

    /// Real dimension of the slice polytope.
    pub fn dim(&self) -> usize {
        if self.vertices.len() <= 1 {
            return 0;
        }
        let base = &self.vertices[0];
        let diffs: RatMatrix = self.vertices[1..]
            .iter()
            .map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        linalg::rank(&diffs)
    }
}

/// Integer basis of `varpi^perp`.
pub(crate) fn perp_basis(ray: &WeightRay) -> Vec<Vec<BigInt>> {
    let g = ray.dim();
    linalg::integer_kernel(&linalg::int_matrix(&[ray.varpi().to_vec()]), 1, g)
}

/// Vertex enumeration of the ray slice over the coordinate face `support`.
/// `None` when the face misses the open ray.
pub fn ray_slice(model: &WeightedModel, ray: &WeightRay, support: &[usize]) -> Option<RaySlice> {
    let m = support.len();
    if m == 0 {
        return None;
    }
    let basis = perp_basis(ray);
    let int = |x: i64| BigRational::from_integer(x.into());
    // columns: x_I then a slack for <varpi, W x> >= 0
    let mut rows: RatMatrix = Vec::new();
    let mut ones: Vec<BigRational> = (0..m).map(|_| BigRational::one()).collect();
    ones.push(BigRational::zero());
    rows.push(ones);
    for bv in &basis {
        let mut r: Vec<BigRational> = support
            .iter()
            .map(|&j| {
                let w = model.weight(j);
                BigRational::from_integer(bv.iter().zip(&w).map(|(b, &wj)| b * wj).sum())
            })
            .collect();
        r.push(BigRational::zero());
        rows.push(r);
    }
    let mut s_row: Vec<BigRational> = support
        .iter()
        .map(|&j| {
            let w = model.weight(j);
            int(w.iter().zip(ray.varpi()).map(|(a, b)| a * b).sum())
        })
        .collect();
    s_row.push(-BigRational::one());
    rows.push(s_row);
    let mut rhs = vec![BigRational::one()];
    rhs.extend((1..rows.len()).map(|_| BigRational::zero()));

    // keep an independent set of rows
    let mut kept: RatMatrix = Vec::new();
    let mut kept_rhs = Vec::new();
    for (r, b) in rows.iter().zip(&rhs) {
        let mut trial = kept.clone();
        trial.push(r.clone());
        if linalg::rank(&trial) > kept.len() {
            kept = trial;
            kept_rhs.push(b.clone());
        }
    }
    let rank = kept.len();
    let cols = m + 1;

    let mut vertices: Vec<Vec<BigRational>> = Vec::new();
    for subset in linalg::combinations(cols, rank) {
        let sub: RatMatrix = kept
            .iter()
            .map(|r| subset.iter().map(|&c| r[c].clone()).collect())
            .collect();
        let Some(sol) = solve_unique(&sub, &kept_rhs) else {
            continue;
        };
        if sol.iter().any(Signed::is_negative) {
            continue;
        }
        let mut x = vec![BigRational::zero(); model.n()];
        let mut slack = BigRational::zero();
        for (&c, v) in subset.iter().zip(sol) {
            if c < m {
                x[support[c]] = v;
            } else {
                slack = v;
            }
        }
        // points with s = 0 are not on the open ray
        if slack.is_zero() && (0..model.g()).all(|a| {
            support
                .iter()
                .map(|&j| &x[j] * int(model.rows()[a][j]))
                .sum::<BigRational>()
                .is_zero()
        }) {
            continue;
        }
        if !vertices.contains(&x) {
            vertices.push(x);
        }
    }
    if vertices.is_empty() {
        return None;
    }
    vertices.sort();
    let generic_support = (0..model.n())
        .filter(|&j| vertices.iter().any(|v| !v[j].is_zero()))
        .collect();
    Some(RaySlice {
        support: support.to_vec(),
        vertices,
        generic_support,
    })
}

/// Rank of `d Phi` projected to `varpi^perp` at a simplex point.
pub(crate) fn projected_rank(model: &WeightedModel, ray: &WeightRay, x: &[f64]) -> usize {
    let g = model.g();
    if g == 1 {
        return 0;
    }
    let perp = orthonormal_complement(ray);
    let supp: Vec<usize> = (0..model.n()).filter(|&j| x[j] > 1e-12).collect();
    let Some(&i0) = supp.first() else {
        return 0;
    };
    let w0 = model.weight(i0);
    let vecs: Vec<Vec<f64>> = supp[1..]
        .iter()
        .map(|&j| {
            let w = model.weight(j);
            perp.iter()
                .map(|xi| {
                    xi.iter()
                        .zip(w.iter().zip(&w0))
                        .map(|(x, (a, b))| x * (a - b) as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    numeric_rank(vecs, RANK_TOLERANCE)
}

/// Rank by Gaussian elimination with partial pivoting and a relative tolerance.
pub(crate) fn numeric_rank(mut m: Vec<Vec<f64>>, tol: f64) -> usize {
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some((p, _)) = m
            .iter()
            .enumerate()
            .skip(rank)
            .map(|(i, r)| (i, r[c].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if m[p][c].abs() <= tol * scale {
            continue;
        }
        m.swap(rank, p);
        for i in rank + 1..m.len() {
            let f = m[i][c] / m[rank][c];
            for j in c..cols {
                m[i][j] -= f * m[rank][j];
            }
        }
        rank += 1;
    }
    rank
}

fn sampled_transversality(model: &WeightedModel, ray: &WeightRay, slice: &RaySlice) -> bool {
    let target = model.g() - 1;
    let verts = slice.vertices_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7472_616e_7376);
    let mut checked = 0;
    for v in &verts {
        if checked == TRANSVERSALITY_SAMPLES {
            break;
        }
        if projected_rank(model, ray, v) != target {
            return false;
        }
        checked += 1;
    }
    while checked < TRANSVERSALITY_SAMPLES {
        let weights: Vec<f64> = verts.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = weights.iter().sum();
        let x: Vec<f64> = (0..model.n())
            .map(|j| {
                verts
                    .iter()
                    .zip(&weights)
                    .map(|(v, w)| v[j] * w / total)
                    .sum()
            })
            .collect();
        if projected_rank(model, ray, &x) != target {
            return false;
        }
        checked += 1;
    }
    true
}
