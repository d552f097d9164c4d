//! Exact integer and rational linear algebra.
//!
//! Small dense matrices only: weight matrices have a handful of rows and at
//! most a few dozen columns. Everything here is exact.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type IntMatrix = Vec<Vec<BigInt>>;
pub type RatMatrix = Vec<Vec<BigRational>>;

pub fn int_matrix(rows: &[Vec<i64>]) -> IntMatrix {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect()
}

pub fn identity(n: usize) -> IntMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect()
}

pub fn transpose<T: Clone>(a: &[Vec<T>], cols: usize) -> Vec<Vec<T>> {
    (0..cols)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

pub fn mat_mul(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| &row[k] * &b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Smith normal form `U A V = D` with `U`, `V` unimodular.
#[derive(Debug, Clone)]
pub struct Smith {
    pub u: IntMatrix,
    pub v: IntMatrix,
    /// Nonnegative invariant factors, `diag[i] | diag[i+1]`, length `min(m, n)`.
    pub diag: Vec<BigInt>,
    pub rank: usize,
}

pub fn smith_normal_form(a: &IntMatrix, rows: usize, cols: usize) -> Smith {
    let mut b = a.clone();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let steps = rows.min(cols);

    let swap_cols = |m: &mut IntMatrix, i: usize, j: usize| {
        for row in m.iter_mut() {
            row.swap(i, j);
        }
    };

    'outer: for t in 0..steps {
        loop {
            // pivot = smallest nonzero magnitude in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if !b[i][j].is_zero()
                        && best.is_none_or(|(bi, bj)| b[i][j].abs() < b[bi][bj].abs())
                    {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else {
                break 'outer;
            };
            b.swap(t, pi);
            u.swap(t, pi);
            swap_cols(&mut b, t, pj);
            swap_cols(&mut v, t, pj);

            let mut clean = true;
            for i in t + 1..rows {
                if b[i][t].is_zero() {
                    continue;
                }
                let q = &b[i][t] / &b[t][t];
                for j in 0..cols {
                    let d = &q * &b[t][j];
                    b[i][j] -= d;
                }
                for j in 0..rows {
                    let d = &q * &u[t][j];
                    u[i][j] -= d;
                }
                clean &= b[i][t].is_zero();
            }
            for j in t + 1..cols {
                if b[t][j].is_zero() {
                    continue;
                }
                let q = &b[t][j] / &b[t][t];
                for i in 0..rows {
                    let d = &q * &b[i][t];
                    b[i][j] -= d;
                }
                for i in 0..cols {
                    let d = &q * &v[i][t];
                    v[i][j] -= d;
                }
                clean &= b[t][j].is_zero();
            }
            if !clean {
                continue;
            }
            // divisibility of the trailing block by the pivot
            let mut offender = None;
            'search: for i in t + 1..rows {
                for j in t + 1..cols {
                    if !b[i][j].is_multiple_of(&b[t][t]) {
                        offender = Some(i);
                        break 'search;
                    }
                }
            }
            match offender {
                Some(i) => {
                    for j in 0..cols {
                        let x = b[i][j].clone();
                        b[t][j] += x;
                    }
                    for j in 0..rows {
                        let x = u[i][j].clone();
                        u[t][j] += x;
                    }
                }
                None => break,
            }
        }
        if b[t][t].is_negative() {
            for x in b[t].iter_mut() {
                *x = -x.clone();
            }
            for x in u[t].iter_mut() {
                *x = -x.clone();
            }
        }
    }

    let diag: Vec<BigInt> = (0..steps).map(|i| b[i][i].clone()).collect();
    let rank = diag.iter().filter(|x| !x.is_zero()).count();
    Smith { u, v, diag, rank }
}

/// Z-basis (as columns) of `{x in Z^n : A x = 0}`.
pub fn integer_kernel(a: &IntMatrix, rows: usize, cols: usize) -> Vec<Vec<BigInt>> {
    let s = smith_normal_form(a, rows, cols);
    (s.rank..cols)
        .map(|j| (0..cols).map(|i| s.v[i][j].clone()).collect())
        .collect()
}

pub fn to_rational(a: &IntMatrix) -> RatMatrix {
    a.iter()
        .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect()
}

/// Row echelon form in place; returns pivot columns.
fn echelon(m: &mut RatMatrix, cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row >= m.len() {
            break;
        }
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].recip();
        for x in m[row].iter_mut() {
            *x *= &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..m[r].len() {
                    let d = &f * &m[row][c];
                    m[r][c] -= d;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

pub fn rank(a: &RatMatrix) -> usize {
    let cols = a.first().map_or(0, |r| r.len());
    let mut m = a.clone();
    echelon(&mut m, cols).len()
}

/// Inverse of a square rational matrix, `None` if singular.
pub fn inverse(a: &RatMatrix) -> Option<RatMatrix> {
    let n = a.len();
    let mut m: RatMatrix = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            row
        })
        .collect();
    let pivots = echelon(&mut m, n);
    if pivots.len() < n {
        return None;
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Inverse of a unimodular integer matrix.
pub fn unimodular_inverse(a: &IntMatrix) -> IntMatrix {
    let inv = inverse(&to_rational(a)).expect("unimodular matrix is invertible");
    inv.into_iter()
        .map(|r| {
            r.into_iter()
                .map(|x| {
                    debug_assert!(x.is_integer());
                    x.to_integer()
                })
                .collect()
        })
        .collect()
}

/// Unique solution of `A x = b` when `A` has full column rank and the system
/// is consistent.
pub fn solve_unique(a: &RatMatrix, b: &[BigRational]) -> Option<Vec<BigRational>> {
    let cols = a.first().map_or(0, |r| r.len());
    let mut m: RatMatrix = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut row = r.clone();
            row.push(bi.clone());
            row
        })
        .collect();
    let pivots = echelon(&mut m, cols + 1);
    if pivots.len() != cols || pivots.contains(&cols) {
        return None;
    }
    Some((0..cols).map(|i| m[i][cols].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal {
        value: BigRational,
        x: Vec<BigRational>,
    },
}

/// Maximise `c.x` subject to `A x = b`, `x >= 0`, exactly (two-phase simplex
/// with Bland's rule, so it cannot cycle).
pub fn lp_maximize(a: &RatMatrix, b: &[BigRational], c: &[BigRational]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    // tableau rows: [A | I | b] with b >= 0
    let mut t: RatMatrix = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i].is_negative();
        let mut row: Vec<BigRational> = a[i]
            .iter()
            .map(|x| if flip { -x.clone() } else { x.clone() })
            .collect();
        row.extend((0..m).map(|j| {
            if i == j {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        }));
        row.push(if flip { -b[i].clone() } else { b[i].clone() });
        t.push(row);
    }
    let mut basis: Vec<usize> = (n..width).collect();

    let phase1: Vec<BigRational> = (0..width)
        .map(|j| {
            if j < n {
                BigRational::zero()
            } else {
                -BigRational::one()
            }
        })
        .collect();
    if !run_simplex(&mut t, &mut basis, &phase1, width) {
        unreachable!("phase one objective is bounded");
    }
    let infeasibility: BigRational = basis
        .iter()
        .zip(&t)
        .filter(|(&bv, _)| bv >= n)
        .map(|(_, row)| row[width].clone())
        .sum();
    if infeasibility.is_positive() {
        return LpOutcome::Infeasible;
    }
    // drive zero-level artificials out, dropping redundant rows
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            match (0..n).find(|&j| !t[i][j].is_zero()) {
                Some(j) => pivot(&mut t, &mut basis, i, j),
                None => {
                    t.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut phase2: Vec<BigRational> = c.to_vec();
    phase2.extend((0..m).map(|_| BigRational::zero()));
    if !run_simplex(&mut t, &mut basis, &phase2, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![BigRational::zero(); n];
    for (row, &bv) in t.iter().zip(&basis) {
        if bv < n {
            x[bv] = row[width].clone();
        }
    }
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    LpOutcome::Optimal { value, x }
}

fn pivot(t: &mut RatMatrix, basis: &mut [usize], row: usize, col: usize) {
    let inv = t[row][col].recip();
    for x in t[row].iter_mut() {
        *x *= &inv;
    }
    for r in 0..t.len() {
        if r != row && !t[r][col].is_zero() {
            let f = t[r][col].clone();
            for c in 0..t[r].len() {
                let d = &f * &t[row][c];
                t[r][c] -= d;
            }
        }
    }
    basis[row] = col;
}

/// Returns false when unbounded. Only columns `< enter_limit` may enter.
fn run_simplex(
    t: &mut RatMatrix,
    basis: &mut [usize],
    cost: &[BigRational],
    enter_limit: usize,
) -> bool {
    let rhs = cost.len();
    loop {
        let entering = (0..enter_limit).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced: BigRational = cost[j].clone()
                - basis
                    .iter()
                    .zip(t.iter())
                    .map(|(&bv, row)| &cost[bv] * &row[j])
                    .sum::<BigRational>();
            reduced.is_positive()
        });
        let Some(j) = entering else {
            return true;
        };
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[j].is_positive() {
                let ratio = &row[rhs] / &row[j];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((i, _)) = leave else {
            return false;
        };
        pivot(t, basis, i, j);
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// Reduce a rational modulo one into `[0, 1)`.
pub fn frac(x: &BigRational) -> BigRational {
    x - x.floor()
}

pub fn gcd_all(xs: &[BigInt]) -> BigInt {
    xs.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

/// Determinant by partial pivoting.
pub fn determinant_f64(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            .unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for j in c..n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    det
}
