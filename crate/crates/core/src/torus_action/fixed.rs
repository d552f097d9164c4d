use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::stabilizer::{generic_stabilizer, support_matrix, Congruence};
use super::validate::{ray_slice, RaySlice};
use super::{RationalPhaseAutomorphism, WeightRay, WeightedModel};
use crate::linalg::frac;
use crate::{Complex64, Error, Result};

/// Whether component character sums use `chi(kappa)^k / c` (forward) or its
/// complex conjugate (kappa realising `gamma^{-1}`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacterConvention {
    #[default]
    Conjugate,
    Forward,
}

/// Torus element composed with `d gamma^{-1}` on the normal space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalMap {
    /// The element `kappa` solving the fixed point congruence.
    #[default]
    Kappa,
    /// Elements of the generic stabilizer.
    GenericStabilizer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMultiplicity {
    /// Every solution modulo the identity component of the support stabilizer.
    #[default]
    AllSolutions,
    /// One solution translated by the generic stabilizer.
    GenericTranslates,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    pub character: CharacterConvention,
    pub normal_map: NormalMap,
    pub kappa_multiplicity: KappaMultiplicity,
}

/// One connected component of the fixed locus on the quotient.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedComponent {
    pub support: Vec<usize>,
    /// Angles in turns, `kappa = exp(2 pi i theta)`.
    pub kappa_set: Vec<Vec<BigRational>>,
    pub dim_l: usize,
    pub codim_l: usize,
    pub normal_directions: Vec<usize>,
    /// Per kappa, the normal eigenphases in turns.
    pub normal_eigenphases: Vec<Vec<BigRational>>,
    /// Per kappa, `prod_j (1 - conj(lambda_j))`.
    pub c_det: Vec<Complex64>,
    /// `|G_I / G_I^0|`.
    pub component_order: u64,
    /// The locus as a polytope in simplex coordinates.
    pub slice: RaySlice,
}

impl FixedComponent {
    pub fn eigenvalues(&self, i: usize) -> Vec<Complex64> {
        self.normal_eigenphases[i]
            .iter()
            .map(|t| Complex64::from_polar(1.0, TAU * t.to_f64().unwrap()))
            .collect()
    }

    pub fn is_point(&self) -> bool {
        self.dim_l == 0
    }
}

fn turns_to_unit(t: &BigRational) -> Complex64 {
    Complex64::from_polar(1.0, TAU * t.to_f64().unwrap())
}

/// `<w_j, theta> - p_j / q` in turns.
fn defect(model: &WeightedModel, gamma: &RationalPhaseAutomorphism, j: usize, theta: &[BigRational]) -> BigRational {
    model
        .weight(j)
        .iter()
        .zip(theta)
        .map(|(&w, t)| t * BigInt::from(w))
        .sum::<BigRational>()
        - gamma.phase(j)
}

pub fn fixed_components(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
) -> Result<Vec<FixedComponent>> {
    fixed_components_with(model, ray, gamma, Conventions::default())
}

pub fn fixed_components_with(
    model: &WeightedModel,
    ray: &WeightRay,
    gamma: &RationalPhaseAutomorphism,
    conv: Conventions,
) -> Result<Vec<FixedComponent>> {
    ray.check_model(model)?;
    let n = model.n();
    let g = model.g();
    if gamma.len() != n {
        return Err(Error::InvalidInput(format!(
            "automorphism has {} phases, model has {n} coordinates",
            gamma.len()
        )));
    }
    if n > 24 {
        return Err(Error::InvalidInput("too many coordinates for support enumeration".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    if ray_slice(model, ray, &all).is_none() {
        return Ok(Vec::new());
    }

    // supports with a solvable congruence and a nonempty slice
    let mut candidates: Vec<(u32, Congruence, Vec<Vec<BigRational>>, RaySlice)> = Vec::new();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let cong = Congruence::new(&support_matrix(model, &support), support.len(), g);
        let b: Vec<BigRational> = support.iter().map(|&j| gamma.phase(j)).collect();
        let Some(sols) = cong.solve(&b) else {
            continue;
        };
        let Some(slice) = ray_slice(model, ray, &support) else {
            continue;
        };
        candidates.push((mask, cong, sols, slice));
    }
    let masks: Vec<u32> = candidates.iter().map(|c| c.0).collect();

    let stabilizer = match (conv.normal_map, conv.kappa_multiplicity) {
        (NormalMap::Kappa, KappaMultiplicity::AllSolutions) => None,
        _ => Some(generic_stabilizer(model)?.elements_in(g)),
    };

    let mut out = Vec::new();
    for (mask, cong, sols, slice) in candidates {
        if masks.iter().any(|&m| m != mask && m & mask == mask) {
            continue;
        }
        let support = slice.support.clone();
        let expected = support.len().saturating_sub(g);
        let found = slice.dim();
        if support.len() < g || slice.generic_support != support || found != expected {
            return Err(Error::NonTransverseComponent {
                support,
                found,
                expected,
            });
        }
        let normal_directions: Vec<usize> = (0..n).filter(|j| !support.contains(j)).collect();
        let kappa_set = match (conv.kappa_multiplicity, &stabilizer) {
            (KappaMultiplicity::GenericTranslates, Some(elems)) => {
                let mut set: Vec<Vec<BigRational>> = elems
                    .iter()
                    .map(|t| t.iter().zip(&sols[0]).map(|(a, b)| frac(&(a + b))).collect())
                    .collect();
                set.sort();
                set.dedup();
                set
            }
            _ => sols,
        };
        let i0 = support[0];
        let mut normal_eigenphases = Vec::with_capacity(kappa_set.len());
        let mut c_det = Vec::with_capacity(kappa_set.len());
        for (idx, kappa) in kappa_set.iter().enumerate() {
            let theta = match (conv.normal_map, &stabilizer) {
                (NormalMap::GenericStabilizer, Some(elems)) => &elems[idx % elems.len()],
                _ => kappa,
            };
            let base = defect(model, gamma, i0, theta);
            let phases: Vec<BigRational> = normal_directions
                .iter()
                .map(|&j| frac(&(defect(model, gamma, j, theta) - &base)))
                .collect();
            if conv.normal_map == NormalMap::Kappa {
                if let Some(pos) = phases.iter().position(Zero::is_zero) {
                    return Err(Error::UnresolvedComponent {
                        support: support.clone(),
                        direction: normal_directions[pos],
                    });
                }
            }
            c_det.push(
                phases
                    .iter()
                    .map(|t| Complex64::new(1.0, 0.0) - turns_to_unit(t).conj())
                    .product(),
            );
            normal_eigenphases.push(phases);
        }
        out.push(FixedComponent {
            dim_l: expected,
            codim_l: n - support.len(),
            normal_directions,
            kappa_set,
            normal_eigenphases,
            c_det,
            component_order: cong.component_count(),
            support,
            slice,
        });
    }
    out.sort_by(|a, b| a.support.cmp(&b.support));
    Ok(out)
}

/// Canonical form of a torus element modulo the identity component of the
/// stabilizer of the coordinate face `support`.
#[cfg(test)]
pub(crate) fn canonical_kappa(
    model: &WeightedModel,
    support: &[usize],
    theta: &[BigRational],
) -> Vec<BigRational> {
    Congruence::new(&support_matrix(model, support), support.len(), model.g()).canonical(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;
    use crate::torus_action::subgroup_component_count;
    use proptest::prelude::*;

    fn ex1() -> (WeightedModel, WeightRay) {
        (
            WeightedModel::circle(&[1, 2, 3]).unwrap(),
            WeightRay::new(vec![1]).unwrap(),
        )
    }

    #[test]
    fn identity_gives_whole_space() {
        let (m, ray) = ex1();
        let comps = fixed_components(&m, &ray, &RationalPhaseAutomorphism::identity(3)).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert_eq!(c.support, vec![0, 1, 2]);
        assert_eq!((c.dim_l, c.codim_l), (2, 0));
        assert_eq!(c.kappa_set, vec![vec![rat(0, 1)]]);
        assert_eq!(c.c_det, vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn identity_on_doubled_weights_uses_generic_stabilizer() {
        let m = WeightedModel::circle(&[2, 4, 6]).unwrap();
        let ray = WeightRay::new(vec![2]).unwrap();
        let comps = fixed_components(&m, &ray, &RationalPhaseAutomorphism::identity(3)).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].kappa_set, generic_stabilizer(&m).unwrap().elements());
    }

    // exhaustive search over angles a/10 for 2 theta = 1/5 mod 1
    #[test]
    fn scalar_gamma_three_points() {
        let (m, ray) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 5).unwrap();
        let comps = fixed_components(&m, &ray, &gamma).unwrap();
        let supports: Vec<Vec<usize>> = comps.iter().map(|c| c.support.clone()).collect();
        assert_eq!(supports, vec![vec![0], vec![1], vec![2]]);
        let brute: Vec<Vec<BigRational>> = (0..10)
            .filter(|a| (2 * a) % 10 == 2)
            .map(|a| vec![rat(a, 10)])
            .collect();
        assert_eq!(comps[1].kappa_set, brute);
        assert_eq!(comps[1].kappa_set, vec![vec![rat(1, 10)], vec![rat(3, 5)]]);
        assert_eq!(comps[2].kappa_set.len(), 3);
        for c in &comps {
            assert_eq!((c.dim_l, c.codim_l), (0, 2));
            assert!(c.c_det.iter().all(|z| z.norm() > 1e-9));
        }
    }

    #[test]
    fn gamma_equal_to_torus_element() {
        let (m, ray) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 2, 3], 5).unwrap();
        let comps = fixed_components(&m, &ray, &gamma).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].support, vec![0, 1, 2]);
        assert_eq!(comps[0].kappa_set, vec![vec![rat(1, 5)]]);
    }

    #[test]
    fn empty_ray_has_no_components() {
        let m = WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 1, 2]]).unwrap();
        let ray = WeightRay::new(vec![-1, 2]).unwrap();
        let comps = fixed_components(&m, &ray, &RationalPhaseAutomorphism::identity(3)).unwrap();
        assert!(comps.is_empty());
    }

    #[test]
    fn stabilizer_normal_map_degenerates_for_scalar_gamma() {
        let (m, ray) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 5).unwrap();
        let conv = Conventions {
            normal_map: NormalMap::GenericStabilizer,
            ..Conventions::default()
        };
        let comps = fixed_components_with(&m, &ray, &gamma, conv).unwrap();
        assert!(comps.iter().flat_map(|c| &c.c_det).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn generic_translates_keep_one_solution() {
        let (m, ray) = ex1();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 5).unwrap();
        let conv = Conventions {
            kappa_multiplicity: KappaMultiplicity::GenericTranslates,
            ..Conventions::default()
        };
        let comps = fixed_components_with(&m, &ray, &gamma, conv).unwrap();
        assert!(comps.iter().all(|c| c.kappa_set.len() == 1));
    }

    #[test]
    fn repeated_columns() {
        let m = WeightedModel::circle(&[1, 1, 2]).unwrap();
        let ray = WeightRay::new(vec![1]).unwrap();
        let gamma = RationalPhaseAutomorphism::new(vec![1, 1, 1], 3).unwrap();
        let comps = fixed_components(&m, &ray, &gamma).unwrap();
        let supports: Vec<Vec<usize>> = comps.iter().map(|c| c.support.clone()).collect();
        assert_eq!(supports, vec![vec![0, 1], vec![2]]);
        assert_eq!((comps[0].dim_l, comps[0].codim_l), (1, 1));
        assert_eq!(comps[1].kappa_set.len(), 2);
    }

    fn spec_solvable(model: &WeightedModel, support: &[usize], gamma: &RationalPhaseAutomorphism) -> bool {
        let a = support_matrix(model, support);
        let ker = crate::linalg::integer_kernel(
            &crate::linalg::transpose(&a, model.g()),
            model.g(),
            support.len(),
        );
        ker.iter().all(|u| {
            u.iter()
                .zip(support)
                .map(|(x, &j)| gamma.phase(j) * x)
                .sum::<BigRational>()
                .is_integer()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kappa_counts_and_twists(
            w in prop::collection::vec(1i64..5, 3),
            p in prop::collection::vec(0i64..6, 3),
            q in 1u64..7,
            s_num in 0i64..7,
            s_den in 1i64..7,
        ) {
            let m = WeightedModel::circle(&w).unwrap();
            prop_assume!(generic_stabilizer(&m).is_ok());
            let ray = WeightRay::new(vec![1]).unwrap();
            let gamma = RationalPhaseAutomorphism::new(p, q).unwrap();
            let comps = fixed_components(&m, &ray, &gamma).unwrap();
            for c in &comps {
                prop_assert_eq!(c.kappa_set.len() as u64, subgroup_component_count(&m, &c.support));
                prop_assert!(spec_solvable(&m, &c.support, &gamma));
                prop_assert_eq!(c.dim_l + c.codim_l, m.e() as usize);
            }
            // gamma o mu_s shifts kappa by s and keeps determinants
            let s = vec![rat(s_num, s_den)];
            let twisted = gamma.twisted_by(&m, &s);
            let comps2 = fixed_components(&m, &ray, &twisted).unwrap();
            prop_assert_eq!(comps.len(), comps2.len());
            for (a, b) in comps.iter().zip(&comps2) {
                prop_assert_eq!(&a.support, &b.support);
                let mut shifted: Vec<Vec<BigRational>> = a
                    .kappa_set
                    .iter()
                    .map(|k| canonical_kappa(&m, &a.support, &[frac(&(&k[0] + &s[0]))]))
                    .collect();
                shifted.sort();
                prop_assert_eq!(&shifted, &b.kappa_set);
                prop_assert_eq!(&a.normal_eigenphases.iter().cloned().collect::<std::collections::BTreeSet<_>>(),
                    &b.normal_eigenphases.iter().cloned().collect::<std::collections::BTreeSet<_>>());
            }
        }

        #[test]
        fn solvability_invariant_under_unimodular_change(
            a in -3i64..4, b in -3i64..4,
            p in prop::collection::vec(0i64..6, 3),
        ) {
            // columns of W transformed by the unimodular matrix [[1, a], [0, 1]] then [[1, 0], [b, 1]]
            let w = vec![vec![1i64, 0, 2], vec![0, 1, 1]];
            let t = |r0: &Vec<i64>, r1: &Vec<i64>| -> Vec<Vec<i64>> {
                let n0: Vec<i64> = r0.iter().zip(r1).map(|(x, y)| x + a * y).collect();
                let n1: Vec<i64> = r1.iter().zip(&n0).map(|(y, x)| y + b * x).collect();
                vec![n0, n1]
            };
            let m1 = WeightedModel::new(2, 2, w.clone()).unwrap();
            let m2 = WeightedModel::new(2, 2, t(&w[0], &w[1])).unwrap();
            let gamma = RationalPhaseAutomorphism::new(p, 6).unwrap();
            for mask in 1u32..8 {
                let support: Vec<usize> = (0..3).filter(|j| mask >> j & 1 == 1).collect();
                prop_assert_eq!(spec_solvable(&m1, &support, &gamma), spec_solvable(&m2, &support, &gamma));
            }
        }
    }
}
