use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::validate::{perp_basis, ray_slice};
use super::{WeightRay, WeightedModel};
use crate::linalg::{self, frac, smith_normal_form, IntMatrix};
use crate::{Error, Result};

/// A finite subgroup of `T^g`, elements written as angle vectors in turns.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAbelianGroup {
    pub order: u64,
    /// Nontrivial invariant factors.
    pub invariants: Vec<u64>,
    pub generators: Vec<Vec<BigRational>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayStabilizer {
    pub h_dim: usize,
    pub h_generic_order: u64,
}

/// Solutions of `A theta = b (mod Z^m)` modulo `Z^g` and modulo the identity
/// component of the homogeneous solution group.
#[derive(Debug, Clone)]
pub(crate) struct Congruence {
    u: IntMatrix,
    v: IntMatrix,
    diag: Vec<BigInt>,
    rank: usize,
    rows: usize,
    cols: usize,
}

impl Congruence {
    pub(crate) fn new(a: &IntMatrix, rows: usize, cols: usize) -> Self {
        let s = smith_normal_form(a, rows, cols);
        Self {
            u: s.u,
            v: s.v,
            diag: s.diag,
            rank: s.rank,
            rows,
            cols,
        }
    }

    /// Order of `{theta : A theta = 0 mod Z}` modulo its identity component.
    pub(crate) fn component_count(&self) -> u64 {
        self.diag[..self.rank]
            .iter()
            .map(|d| d.to_u64().expect("invariant factor fits in u64"))
            .product()
    }

    fn apply_v(&self, phi: &[BigRational]) -> Vec<BigRational> {
        (0..self.cols)
            .map(|i| {
                frac(
                    &(0..self.cols)
                        .map(|j| &phi[j] * &self.v[i][j])
                        .sum::<BigRational>(),
                )
            })
            .collect()
    }

    /// Canonical representative modulo `Z^g` and the identity component.
    #[cfg(test)]
    pub(crate) fn canonical(&self, theta: &[BigRational]) -> Vec<BigRational> {
        let v_inv = linalg::unimodular_inverse(&self.v);
        let phi: Vec<BigRational> = (0..self.cols)
            .map(|i| {
                if i < self.rank {
                    frac(
                        &(0..self.cols)
                            .map(|j| &theta[j] * &v_inv[i][j])
                            .sum::<BigRational>(),
                    )
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        self.apply_v(&phi)
    }

    pub(crate) fn solve(&self, b: &[BigRational]) -> Option<Vec<Vec<BigRational>>> {
        let c: Vec<BigRational> = (0..self.rows)
            .map(|i| (0..self.rows).map(|j| &b[j] * &self.u[i][j]).sum())
            .collect();
        if c[self.rank..].iter().any(|x| !x.is_integer()) {
            return None;
        }
        let mut out = vec![vec![BigRational::zero(); self.cols]];
        for i in 0..self.rank {
            let d = self.diag[i].clone();
            let mut next = Vec::new();
            let mut t = BigInt::zero();
            while t < d {
                let val = frac(&((&c[i] + BigRational::from_integer(t.clone())) / &d));
                for phi in &out {
                    let mut p = phi.clone();
                    p[i] = val.clone();
                    next.push(p);
                }
                t += 1;
            }
            out = next;
        }
        let mut sols: Vec<Vec<BigRational>> = out.iter().map(|phi| self.apply_v(phi)).collect();
        sols.sort();
        sols.dedup();
        Some(sols)
    }
}

/// Rows `w_j - w_0`, `j = 1..d`, as an integer matrix.
fn difference_matrix(weights: &[Vec<i64>]) -> IntMatrix {
    let w0 = &weights[0];
    linalg::int_matrix(
        &weights[1..]
            .iter()
            .map(|w| w.iter().zip(w0).map(|(a, b)| a - b).collect())
            .collect::<Vec<_>>(),
    )
}

fn group_from(weights: &[Vec<i64>], dim: usize) -> Result<FiniteAbelianGroup> {
    if weights.len() < 2 {
        return Err(Error::InfiniteStabilizer { rank_deficit: dim });
    }
    let a = difference_matrix(weights);
    let cong = Congruence::new(&a, weights.len() - 1, dim);
    if cong.rank < dim {
        return Err(Error::InfiniteStabilizer {
            rank_deficit: dim - cong.rank,
        });
    }
    let mut invariants = Vec::new();
    let mut generators = Vec::new();
    for i in 0..cong.rank {
        if cong.diag[i] > BigInt::one() {
            invariants.push(cong.diag[i].to_u64().unwrap());
            generators.push(
                (0..dim)
                    .map(|r| frac(&BigRational::new(cong.v[r][i].clone(), cong.diag[i].clone())))
                    .collect(),
            );
        }
    }
    Ok(FiniteAbelianGroup {
        order: cong.component_count(),
        invariants,
        generators,
    })
}

impl FiniteAbelianGroup {
    /// All elements, sorted.
    pub fn elements(&self) -> Vec<Vec<BigRational>> {
        let dim = self
            .generators
            .first()
            .map_or(0, |g| g.len());
        let mut out: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); dim]];
        for (gen, &n) in self.generators.iter().zip(&self.invariants) {
            let mut next = Vec::new();
            for e in &out {
                for m in 0..n {
                    let mm = BigRational::from_integer(m.into());
                    next.push(e.iter().zip(gen).map(|(a, g)| frac(&(a + g * &mm))).collect());
                }
            }
            out = next;
        }
        out.sort();
        out.dedup();
        out
    }

    /// Elements padded to dimension `g` (the trivial group has no generators).
    pub fn elements_in(&self, g: usize) -> Vec<Vec<BigRational>> {
        if self.generators.is_empty() {
            return vec![vec![BigRational::zero(); g]];
        }
        self.elements()
    }
}

/// Generic stabilizer of the induced action on `P^d`.
pub fn generic_stabilizer(model: &WeightedModel) -> Result<FiniteAbelianGroup> {
    let weights: Vec<Vec<i64>> = (0..model.n()).map(|j| model.weight(j)).collect();
    group_from(&weights, model.g())
}

/// Generic stabilizer order of the subtorus `H = exp(varpi^perp)` on `M_varpi`.
pub fn stabilizer_orders_on_ray(model: &WeightedModel, ray: &WeightRay) -> Result<RayStabilizer> {
    ray.check_model(model)?;
    let g = model.g();
    if g == 1 {
        return Ok(RayStabilizer {
            h_dim: 0,
            h_generic_order: 1,
        });
    }
    let all: Vec<usize> = (0..model.n()).collect();
    let slice = ray_slice(model, ray, &all)
        .ok_or_else(|| Error::InvalidInput("ray misses the moment image".into()))?;
    let basis = perp_basis(ray);
    let h_weights: Vec<Vec<i64>> = slice
        .generic_support
        .iter()
        .map(|&j| {
            let w = model.weight(j);
            basis
                .iter()
                .map(|b| {
                    b.iter()
                        .zip(&w)
                        .map(|(x, &y)| x * y)
                        .sum::<BigInt>()
                        .to_i64()
                        .unwrap()
                })
                .collect()
        })
        .collect();
    let group = group_from(&h_weights, g - 1)?;
    Ok(RayStabilizer {
        h_dim: g - 1,
        h_generic_order: group.order,
    })
}

/// `|G_I / G_I^0|` for `G_I = {t : chi_{w_j}(t) = 1, j in I}`.
pub fn subgroup_component_count(model: &WeightedModel, support: &[usize]) -> u64 {
    Congruence::new(&support_matrix(model, support), support.len(), model.g()).component_count()
}

/// Elements of the finite group `G_I` in turns; error when it has positive dimension.
pub fn point_stabilizer(model: &WeightedModel, support: &[usize]) -> Result<Vec<Vec<BigRational>>> {
    let g = model.g();
    let cong = Congruence::new(&support_matrix(model, support), support.len(), g);
    if cong.rank < g {
        return Err(Error::InfiniteStabilizer {
            rank_deficit: g - cong.rank,
        });
    }
    Ok(cong
        .solve(&vec![BigRational::zero(); support.len()])
        .expect("homogeneous system is solvable"))
}

pub(crate) fn support_matrix(model: &WeightedModel, support: &[usize]) -> IntMatrix {
    linalg::int_matrix(&support.iter().map(|&j| model.weight(j)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_circle_order(w: &[i64], den: i64) -> usize {
        (0..den)
            .filter(|&a| w.iter().all(|&wj| ((wj - w[0]) * a).rem_euclid(den) == 0))
            .count()
    }

    #[test]
    fn circle_stabilizers() {
        let m = WeightedModel::circle(&[1, 2, 3]).unwrap();
        let s = generic_stabilizer(&m).unwrap();
        assert_eq!(s.order, 1);
        for den in 1..=60 {
            assert_eq!(brute_circle_order(&[1, 2, 3], den), 1);
        }
        let m = WeightedModel::circle(&[2, 4, 6]).unwrap();
        let s = generic_stabilizer(&m).unwrap();
        assert_eq!(s.order, 2);
        assert_eq!(s.elements(), vec![vec![linalg::rat(0, 1)], vec![linalg::rat(1, 2)]]);
        assert_eq!(brute_circle_order(&[2, 4, 6], 60), 2);
    }

    #[test]
    fn g2_stabilizer_trivial() {
        let m = WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 1, 2]]).unwrap();
        assert_eq!(generic_stabilizer(&m).unwrap().order, 1);
    }

    #[test]
    fn infinite_stabilizer_detected() {
        let m = WeightedModel::new(2, 2, vec![vec![1, 1, 1], vec![0, 1, 2]]).unwrap();
        assert_eq!(
            generic_stabilizer(&m),
            Err(Error::InfiniteStabilizer { rank_deficit: 1 })
        );
    }

    fn brute_h_order(model: &WeightedModel, h_dir: [i64; 2], den: i64) -> usize {
        let h: Vec<i64> = (0..model.n())
            .map(|j| {
                let w = model.weight(j);
                h_dir[0] * w[0] + h_dir[1] * w[1]
            })
            .collect();
        (0..den)
            .filter(|&a| h.iter().all(|&x| ((x - h[0]) * a).rem_euclid(den) == 0))
            .count()
    }

    #[test]
    fn ray_stabilizers() {
        let m = WeightedModel::circle(&[1, 2, 3]).unwrap();
        let r = stabilizer_orders_on_ray(&m, &WeightRay::new(vec![1]).unwrap()).unwrap();
        assert_eq!(r.h_generic_order, 1);

        let m = WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 1, 2]]).unwrap();
        let r = stabilizer_orders_on_ray(&m, &WeightRay::new(vec![1, 2]).unwrap()).unwrap();
        assert_eq!(r, RayStabilizer { h_dim: 1, h_generic_order: 1 });
        assert_eq!(brute_h_order(&m, [-2, 1], 24), 1);

        let m = WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 2, 4]]).unwrap();
        let r = stabilizer_orders_on_ray(&m, &WeightRay::new(vec![1, 4]).unwrap()).unwrap();
        assert_eq!(r.h_generic_order, 2);
        assert_eq!(brute_h_order(&m, [-4, 1], 24), 2);
    }

    #[test]
    fn point_stabilizers() {
        let m = WeightedModel::circle(&[2, 4, 6]).unwrap();
        assert_eq!(point_stabilizer(&m, &[0, 1, 2]).unwrap().len(), 2);
        assert_eq!(point_stabilizer(&m, &[2]).unwrap().len(), 6);
        let m = WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 1, 2]]).unwrap();
        assert!(point_stabilizer(&m, &[0]).is_err());
        assert_eq!(point_stabilizer(&m, &[0, 2]).unwrap().len(), 2);
    }

    #[test]
    fn congruence_two_solutions() {
        // 2 theta = 1/5 mod 1
        let c = Congruence::new(&linalg::int_matrix(&[vec![2]]), 1, 1);
        let sols = c.solve(&[linalg::rat(1, 5)]).unwrap();
        assert_eq!(sols, vec![vec![linalg::rat(1, 10)], vec![linalg::rat(3, 5)]]);
        assert_eq!(c.component_count(), 2);
    }
}
