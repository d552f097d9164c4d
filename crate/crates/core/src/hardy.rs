//! Monomial bases of the isotypes `H_{k varpi}(X)`, their dimensions and
//! exact monomial norms.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, lp_maximize, LpOutcome, RatMatrix};
use crate::torus_action::{WeightRay, WeightedModel};
use crate::{Error, Result};

pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsotypeBasis {
    pub k: u64,
    /// Exponent vectors, sorted lexicographically.
    pub points: Vec<Vec<u64>>,
    pub dim: usize,
}

/// Per-coordinate LP bounds on `alpha` for `W alpha = k varpi` at `k = 1`.
/// `None` when the ray misses the cone; error when the fibre is unbounded.
fn unit_bounds(model: &WeightedModel, ray: &WeightRay) -> Result<Option<Vec<BigRational>>> {
    ray.check_model(model)?;
    let n = model.n();
    let a: RatMatrix = model
        .rows()
        .iter()
        .map(|r| r.iter().map(|&w| BigRational::from_integer(w.into())).collect())
        .collect();
    let b: Vec<BigRational> = ray
        .varpi()
        .iter()
        .map(|&v| BigRational::from_integer(v.into()))
        .collect();
    let mut bounds = Vec::with_capacity(n);
    for j in 0..n {
        let mut c = vec![BigRational::zero(); n];
        c[j] = BigRational::one();
        match lp_maximize(&a, &b, &c) {
            LpOutcome::Infeasible => return Ok(None),
            LpOutcome::Unbounded => {
                return Err(Error::DegenerateModel(
                    "isotypes are infinite dimensional (zero lies in the weight hull)".into(),
                ))
            }
            LpOutcome::Optimal { value, .. } => bounds.push(value),
        }
    }
    Ok(Some(bounds))
}

/// Integer bounds on each exponent at level `k`; `None` if no solutions.
fn bounds(model: &WeightedModel, ray: &WeightRay, k: u64) -> Result<Option<Vec<u64>>> {
    if k == 0 {
        // W alpha = 0 forces alpha = 0 once zero is outside the hull
        unit_bounds(model, ray)?;
        return Ok(Some(vec![0; model.n()]));
    }
    Ok(unit_bounds(model, ray)?.map(|u| {
        u.iter()
            .map(|b| {
                (b * BigRational::from_integer(k.into()))
                    .floor()
                    .to_integer()
                    .to_u64()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }))
}

struct PivotSolve {
    pivots: Vec<usize>,
    free: Vec<usize>,
    /// `adj(W_P)`, so `alpha_P = adj * rhs / det`.
    adj: Vec<Vec<i128>>,
    det: i128,
}

fn pivot_solve(model: &WeightedModel, bounds: &[u64]) -> PivotSolve {
    let n = model.n();
    let g = model.g();
    let rat = linalg::to_rational(&model.weight_matrix());
    let r = linalg::rank(&rat);
    let restrict = |rows: &[usize], cols: &[usize]| -> RatMatrix {
        rows.iter()
            .map(|&i| cols.iter().map(|&c| rat[i][c].clone()).collect())
            .collect()
    };
    let all_rows: Vec<usize> = (0..g).collect();
    // pivot set leaving the smallest free box
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in linalg::combinations(n, r) {
        if linalg::rank(&restrict(&all_rows, &subset)) < r {
            continue;
        }
        let cost: f64 = (0..n)
            .filter(|j| !subset.contains(j))
            .map(|j| (bounds[j] as f64 + 1.0).ln())
            .sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, subset));
        }
    }
    let pivots = best.map(|b| b.1).unwrap_or_default();
    let free: Vec<usize> = (0..n).filter(|j| !pivots.contains(j)).collect();
    let mut rows: Vec<usize> = Vec::new();
    for i in 0..g {
        let mut trial = rows.clone();
        trial.push(i);
        if linalg::rank(&restrict(&trial, &pivots)) > rows.len() {
            rows = trial;
        }
    }
    if r == 0 {
        return PivotSolve { pivots, free, adj: Vec::new(), det: 1 };
    }
    let inv = linalg::inverse(&restrict(&rows, &pivots)).expect("pivot block is invertible");
    let det = inv
        .iter()
        .flatten()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let scale = BigRational::from_integer(det.clone());
    // alpha_P[i] = sum_c inv[i][c] rhs[rows[c]]
    let adj = inv
        .iter()
        .map(|row| {
            let mut full = vec![0i128; g];
            for (c, x) in row.iter().enumerate() {
                full[rows[c]] = (x * &scale).to_integer().to_i128().unwrap();
            }
            full
        })
        .collect();
    PivotSolve { pivots, free, adj, det: det.to_i128().unwrap() }
}

pub fn enumerate_basis(model: &WeightedModel, ray: &WeightRay, k: u64) -> Result<IsotypeBasis> {
    enumerate_basis_with_cap(model, ray, k, DEFAULT_CAP)
}

pub fn enumerate_basis_with_cap(
    model: &WeightedModel,
    ray: &WeightRay,
    k: u64,
    cap: u64,
) -> Result<IsotypeBasis> {
    let Some(bnd) = bounds(model, ray, k)? else {
        return Ok(IsotypeBasis {
            k,
            points: Vec::new(),
            dim: 0,
        });
    };
    let ps = pivot_solve(model, &bnd);
    let box_size: f64 = ps.free.iter().map(|&j| bnd[j] as f64 + 1.0).product();
    if box_size > cap as f64 {
        return Err(Error::BudgetExceeded {
            bound: box_size,
            cap,
        });
    }
    let target: Vec<i128> = ray.varpi().iter().map(|&v| v as i128 * k as i128).collect();
    let rows: Vec<Vec<i128>> = model
        .rows()
        .iter()
        .map(|r| r.iter().map(|&w| w as i128).collect())
        .collect();
    let n = model.n();

    let complete = |free_vals: &[u64]| -> Option<Vec<u64>> {
        let mut rhs = target.clone();
        for (a, row) in rows.iter().enumerate() {
            for (&j, &v) in ps.free.iter().zip(free_vals) {
                rhs[a] -= row[j] * v as i128;
            }
        }
        let mut alpha = vec![0u64; n];
        for (&j, &v) in ps.free.iter().zip(free_vals) {
            alpha[j] = v;
        }
        for (i, &p) in ps.pivots.iter().enumerate() {
            let num: i128 = ps.adj[i].iter().zip(&rhs).map(|(a, b)| a * b).sum();
            if num % ps.det != 0 {
                return None;
            }
            let v = num / ps.det;
            if v < 0 || v as u64 > bnd[p] {
                return None;
            }
            alpha[p] = v as u64;
        }
        // redundant rows must also hold
        for (a, row) in rows.iter().enumerate() {
            let s: i128 = row.iter().zip(&alpha).map(|(w, &x)| w * x as i128).sum();
            if s != target[a] {
                return None;
            }
        }
        Some(alpha)
    };

    fn walk(
        depth: usize,
        free: &[usize],
        bnd: &[u64],
        vals: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
        complete: &dyn Fn(&[u64]) -> Option<Vec<u64>>,
    ) {
        if depth == free.len() {
            if let Some(a) = complete(vals) {
                out.push(a);
            }
            return;
        }
        for v in 0..=bnd[free[depth]] {
            vals.push(v);
            walk(depth + 1, free, bnd, vals, out, complete);
            vals.pop();
        }
    }

    let mut points: Vec<Vec<u64>> = if ps.free.is_empty() {
        complete(&[]).into_iter().collect()
    } else {
        let first = ps.free[0];
        (0..=bnd[first])
            .into_par_iter()
            .map(|v0| {
                let mut out = Vec::new();
                let mut vals = vec![v0];
                walk(1, &ps.free, &bnd, &mut vals, &mut out, &complete);
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    points.sort();
    let dim = points.len();
    Ok(IsotypeBasis { k, points, dim })
}

/// `dim H_{k varpi}` by dynamic programming over one coordinate at a time.
pub fn dimension(model: &WeightedModel, ray: &WeightRay, k: u64) -> Result<u128> {
    dimension_with_cap(model, ray, k, DEFAULT_CAP)
}

pub fn dimension_with_cap(model: &WeightedModel, ray: &WeightRay, k: u64, cap: u64) -> Result<u128> {
    let Some(bnd) = bounds(model, ray, k)? else {
        return Ok(0);
    };
    let g = model.g();
    let n = model.n();
    // box of reachable partial sums
    let mut lo = vec![0i64; g];
    let mut hi = vec![0i64; g];
    for a in 0..g {
        for j in 0..n {
            let t = model.rows()[a][j] * bnd[j] as i64;
            if t < 0 {
                lo[a] += t;
            } else {
                hi[a] += t;
            }
        }
    }
    let extent: Vec<usize> = (0..g).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let size: f64 = extent.iter().map(|&e| e as f64).product();
    if size > cap as f64 {
        return Err(Error::BudgetExceeded { bound: size, cap });
    }
    let size = size as usize;
    let mut stride = vec![1usize; g];
    for a in (0..g.saturating_sub(1)).rev() {
        stride[a] = stride[a + 1] * extent[a + 1];
    }
    let index = |r: &[i64]| -> usize {
        (0..g).map(|a| (r[a] - lo[a]) as usize * stride[a]).sum()
    };
    let coords = |mut idx: usize| -> Vec<i64> {
        (0..g)
            .map(|a| {
                let c = idx / stride[a];
                idx %= stride[a];
                c as i64 + lo[a]
            })
            .collect()
    };

    let mut count = vec![0u128; size];
    count[index(&vec![0; g])] = 1;
    for j in 0..n {
        let w = model.weight(j);
        let offset: i64 = (0..g).map(|a| w[a] * stride[a] as i64).sum();
        let order: Box<dyn Iterator<Item = usize>> = if offset > 0 {
            Box::new(0..size)
        } else {
            Box::new((0..size).rev())
        };
        for idx in order {
            let r = coords(idx);
            let prev: Vec<i64> = r.iter().zip(&w).map(|(x, y)| x - y).collect();
            if (0..g).any(|a| prev[a] < lo[a] || prev[a] > hi[a]) {
                continue;
            }
            let p = count[index(&prev)];
            if p != 0 {
                count[idx] = count[idx].checked_add(p).ok_or_else(|| {
                    Error::InvalidInput("dimension overflows u128".into())
                })?;
            }
        }
    }
    let target: Vec<i64> = ray.varpi().iter().map(|&v| v * k as i64).collect();
    if (0..g).any(|a| target[a] < lo[a] || target[a] > hi[a]) {
        return Ok(0);
    }
    Ok(count[index(&target)])
}

/// `r` with `int_{S^{2d+1}} |z^alpha|^2 = r pi^{d+1}`, i.e. `2 alpha! / (d + |alpha|)!`.
pub fn monomial_norm_sq(d: usize, alpha: &[u64]) -> BigRational {
    let total: u64 = alpha.iter().sum();
    let num: BigInt = alpha.iter().map(|&a| factorial(a)).product::<BigInt>() * 2;
    BigRational::new(num, factorial(d as u64 + total))
}

pub fn factorial(n: u64) -> BigInt {
    rising(1, n)
}

/// `a (a+1) ... (a+m-1)`.
pub fn rising(a: u64, m: u64) -> BigInt {
    // balanced product tree keeps the big multiplications cheap
    fn prod(lo: u64, hi: u64) -> BigInt {
        if hi <= lo {
            return BigInt::one();
        }
        if hi - lo <= 16 {
            return (lo..hi).fold(BigInt::one(), |acc, x| acc * x);
        }
        let mid = lo + (hi - lo) / 2;
        prod(lo, mid) * prod(mid, hi)
    }
    prod(a, a + m)
}

/// Table of `ln n!`.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for i in 1..=n {
            acc += (i as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    pub fn get(&self, n: u64) -> f64 {
        self.table[n as usize]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// `ln` of the monomial norm under the fibre normalised volume:
/// `|z^alpha|^2 = pi^d alpha! / (d + |alpha|)!`.
pub fn log_norm_v1(lf: &LogFactorials, d: usize, alpha: &[u64]) -> f64 {
    let total: u64 = alpha.iter().sum();
    d as f64 * std::f64::consts::PI.ln() + alpha.iter().map(|&a| lf.get(a)).sum::<f64>()
        - lf.get(d as u64 + total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ex1() -> (WeightedModel, WeightRay) {
        (
            WeightedModel::circle(&[1, 2, 3]).unwrap(),
            WeightRay::new(vec![1]).unwrap(),
        )
    }

    fn g2(v: Vec<i64>) -> (WeightedModel, WeightRay) {
        (
            WeightedModel::new(2, 2, vec![vec![1, 0, 0], vec![0, 1, 2]]).unwrap(),
            WeightRay::new(v).unwrap(),
        )
    }

    fn brute(model: &WeightedModel, ray: &WeightRay, k: u64, max: u64) -> Vec<Vec<u64>> {
        let n = model.n();
        let mut out = Vec::new();
        let mut alpha = vec![0u64; n];
        loop {
            let lhs = model.apply(&alpha);
            if lhs.iter().zip(ray.varpi()).all(|(a, &v)| *a == v * k as i64) {
                out.push(alpha.clone());
            }
            let mut i = n;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if alpha[i] < max {
                    alpha[i] += 1;
                    break;
                }
                alpha[i] = 0;
            }
        }
    }

    #[test]
    fn example_one_bases() {
        let (m, r) = ex1();
        let b = enumerate_basis(&m, &r, 3).unwrap();
        assert_eq!(b.points, vec![vec![0, 0, 1], vec![1, 1, 0], vec![3, 0, 0]]);
        assert_eq!(b.dim, 3);
        assert_eq!(enumerate_basis(&m, &r, 0).unwrap().points, vec![vec![0, 0, 0]]);
        assert_eq!(dimension(&m, &r, 6).unwrap(), 7);
        assert_eq!(brute(&m, &r, 6, 6).len(), 7);
    }

    #[test]
    fn g2_family() {
        let (m, r) = g2(vec![1, 2]);
        for k in 0..=60u64 {
            let b = enumerate_basis(&m, &r, k).unwrap();
            assert_eq!(b.dim as u64, k + 1, "k = {k}");
            assert_eq!(b.points, brute(&m, &r, k, 2 * k));
            assert_eq!(dimension(&m, &r, k).unwrap(), (k + 1) as u128);
        }
        // alpha = (7, 35 - 2c, c), c = 0..=17
        let (m, r) = g2(vec![1, 5]);
        assert_eq!(enumerate_basis(&m, &r, 7).unwrap().dim, 18);
        assert_eq!(brute(&m, &r, 7, 35).len(), 18);
        let (m, r) = g2(vec![-1, 2]);
        assert_eq!(enumerate_basis(&m, &r, 7).unwrap().dim, 0);
        assert_eq!(dimension(&m, &r, 7).unwrap(), 0);
    }

    #[test]
    fn dp_matches_enumeration() {
        let models = [
            (WeightedModel::circle(&[1, 2, 3]).unwrap(), WeightRay::new(vec![1]).unwrap()),
            (WeightedModel::circle(&[1, 1, 2]).unwrap(), WeightRay::new(vec![1]).unwrap()),
            (WeightedModel::circle(&[2, 3, 5, 7]).unwrap(), WeightRay::new(vec![2]).unwrap()),
            (WeightedModel::circle(&[-1, 2, 3]).unwrap(), WeightRay::new(vec![1]).unwrap()),
            g2(vec![1, 2]),
            g2(vec![1, 3]),
            g2(vec![1, 5]),
            g2(vec![-1, 2]),
            (
                WeightedModel::new(3, 2, vec![vec![1, 0, 1, 2], vec![0, 1, 1, 1]]).unwrap(),
                WeightRay::new(vec![2, 1]).unwrap(),
            ),
        ];
        for (m, r) in &models {
            let check_zero = crate::torus_action::validate_model(m, r).unwrap();
            if !check_zero.zero_excluded {
                continue;
            }
            for k in 0..=100 {
                assert_eq!(
                    dimension(m, r, k).unwrap(),
                    enumerate_basis(m, r, k).unwrap().dim as u128,
                    "{m:?} k={k}"
                );
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let (m, r) = ex1();
        assert!(matches!(
            enumerate_basis_with_cap(&m, &r, 2000, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(
            dimension_with_cap(&m, &r, 2000, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn quasi_polynomial_growth() {
        // W = (1,2,3): period 6, degree d + 1 - g = 2, so third differences of
        // the period-summed sequence vanish
        let (m, r) = ex1();
        let dims: Vec<f64> = (0..400u64).map(|k| dimension(&m, &r, k).unwrap() as f64).collect();
        let avg: Vec<f64> = (0..dims.len() - 6).map(|k| dims[k..k + 6].iter().sum::<f64>() / 6.0).collect();
        let diff = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
        let d3 = diff(&diff(&diff(&avg)));
        assert!(d3[300..].iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn permutation_symmetry() {
        let m = WeightedModel::circle(&[1, 1, 2]).unwrap();
        let r = WeightRay::new(vec![1]).unwrap();
        for k in 0..30 {
            let b = enumerate_basis(&m, &r, k).unwrap();
            let mut swapped: Vec<Vec<u64>> = b.points.iter().map(|a| vec![a[1], a[0], a[2]]).collect();
            swapped.sort();
            assert_eq!(swapped, b.points);
        }
    }

    #[test]
    fn norms() {
        assert_eq!(monomial_norm_sq(2, &[0, 0, 0]), rat(1, 1));
        assert_eq!(monomial_norm_sq(2, &[1, 0, 0]), rat(1, 3));
        assert_eq!(monomial_norm_sq(1, &[1, 1]), rat(1, 3));
        assert_eq!(factorial(20), BigInt::from(2432902008176640000u64));
    }

    // sphere volume pi^3 times the mean of |z_0|^2 over S^5
    #[test]
    fn monte_carlo_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let norm: f64 = v.iter().map(|x| x * x).sum();
            let f = (v[0] * v[0] + v[1] * v[1]) / norm;
            s += f;
            s2 += f * f;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        // exact value r = 1/3 is the mean times vol(S^5)/pi^3 = 1
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se);
    }

    // iterated Gamma integrals: int_{C^2} |z0 z1|^2 e^{-|z|^2} = pi^2 and
    // int r^{2m+3} e^{-r^2} dr = Gamma(m+2)/2 give r = 2 * 1 / 3!
    #[test]
    fn gamma_integral_norm() {
        let gaussian = std::f64::consts::PI.powi(2);
        let radial = 0.5 * (1..=3).product::<u64>() as f64;
        let sphere_coeff = gaussian / radial / std::f64::consts::PI.powi(2);
        assert!((sphere_coeff - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn dp_equals_enumeration_random(
            w in prop::collection::vec(1i64..6, 3..5),
            k in 0u64..40,
        ) {
            let m = WeightedModel::circle(&w).unwrap();
            let r = WeightRay::new(vec![1]).unwrap();
            prop_assert_eq!(dimension(&m, &r, k).unwrap(), enumerate_basis(&m, &r, k).unwrap().dim as u128);
        }
    }
}
