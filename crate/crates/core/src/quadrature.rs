//! Adaptive Grundmann-Moller cubature on simplices and pulling
//! triangulations of ray slices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;

use crate::linalg::{self, RatMatrix};
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evaluations: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            max_evaluations: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

/// Grundmann-Moller rule of degree `2s + 1` on the `n`-simplex, as
/// barycentric points with weights summing to 1.
#[derive(Debug, Clone)]
pub struct GmRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

impl GmRule {
    pub fn new(n: usize, s: usize) -> Self {
        let big_d = 2 * s + 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..=s {
            let denom = (big_d + n - 2 * i) as f64;
            // 2^{-2s} (D+n-2i)^D / (i! (D+n-i)!) times n!
            let ln_w = big_d as f64 * denom.ln() - ln_factorial(i) - ln_factorial(big_d + n - i)
                + ln_factorial(n)
                - (2 * s) as f64 * 2f64.ln();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let w = sign * ln_w.exp();
            for beta in compositions(s - i, n + 1) {
                points.push(beta.iter().map(|&b| (2 * b + 1) as f64 / denom).collect());
                weights.push(w);
            }
        }
        Self { points, weights }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    vertices: Vec<Vec<f64>>,
    volume: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// `m`-volume of a simplex with `m + 1` vertices in `R^N`.
pub fn simplex_volume(vertices: &[Vec<f64>]) -> f64 {
    let m = vertices.len() - 1;
    if m == 0 {
        return 1.0;
    }
    let e: Vec<Vec<f64>> = vertices[1..]
        .iter()
        .map(|v| v.iter().zip(&vertices[0]).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            gram[i][j] = e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum();
        }
    }
    let det = linalg::determinant_f64(gram);
    det.max(0.0).sqrt() / (1..=m).map(|i| i as f64).product::<f64>()
}

struct Rules {
    high: GmRule,
    low: GmRule,
}

fn apply<F>(rule: &GmRule, vertices: &[Vec<f64>], f: &F) -> Complex64
where
    F: Fn(&[f64]) -> Complex64,
{
    let dim = vertices[0].len();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut x = vec![0.0; dim];
    for (bary, &w) in rule.points.iter().zip(&rule.weights) {
        x.iter_mut().for_each(|c| *c = 0.0);
        for (b, v) in bary.iter().zip(vertices) {
            for (c, vc) in x.iter_mut().zip(v) {
                *c += b * vc;
            }
        }
        acc += f(&x) * w;
    }
    acc
}

fn make_cell<F>(rules: &Rules, vertices: Vec<Vec<f64>>, f: &F) -> Cell
where
    F: Fn(&[f64]) -> Complex64,
{
    let volume = simplex_volume(&vertices);
    let hi = apply(&rules.high, &vertices, f) * volume;
    let lo = apply(&rules.low, &vertices, f) * volume;
    Cell {
        vertices,
        volume,
        value: hi,
        error: (hi - lo).norm(),
    }
}

fn split(cell: &Cell) -> [Vec<Vec<f64>>; 2] {
    let m = cell.vertices.len();
    let (mut bi, mut bj, mut best) = (0, 1, -1.0);
    for i in 0..m {
        for j in i + 1..m {
            let l: f64 = cell.vertices[i]
                .iter()
                .zip(&cell.vertices[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if l > best {
                (bi, bj, best) = (i, j, l);
            }
        }
    }
    let mid: Vec<f64> = cell.vertices[bi]
        .iter()
        .zip(&cell.vertices[bj])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut a = cell.vertices.clone();
    let mut b = cell.vertices.clone();
    a[bi] = mid.clone();
    b[bj] = mid;
    [a, b]
}

/// Adaptive integral of `f` over the union of simplices (each given by
/// `m + 1` vertices in a common ambient space) against `m`-dimensional
/// Hausdorff measure. Points are the zero-dimensional case.
pub fn integrate_simplices<F>(
    simplices: &[Vec<Vec<f64>>],
    f: F,
    opts: QuadratureOptions,
) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    if simplices.is_empty() {
        return Ok(QuadratureResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evaluations: 0,
        });
    }
    let m = simplices[0].len() - 1;
    if simplices.iter().any(|s| s.len() != m + 1) {
        return Err(Error::InvalidInput("simplices of mixed dimension".into()));
    }
    if m == 0 {
        let value = simplices.iter().map(|s| f(&s[0])).sum();
        return Ok(QuadratureResult {
            value,
            error: 0.0,
            evaluations: simplices.len(),
        });
    }
    let rules = Rules {
        high: GmRule::new(m, 3),
        low: GmRule::new(m, 2),
    };
    let per_cell = rules.high.points.len() + rules.low.points.len();
    let cells: Vec<Cell> = simplices
        .par_iter()
        .map(|s| make_cell(&rules, s.clone(), &f))
        .collect();
    let mut evaluations = cells.len() * per_cell;
    let mut heap: BinaryHeap<Cell> = cells.into_iter().collect();
    loop {
        let (value, error) = heap.iter().fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), c| {
            (v + c.value, e + c.error)
        });
        if error <= opts.abs_tol.max(opts.rel_tol * value.norm()) {
            return Ok(QuadratureResult {
                value,
                error,
                evaluations,
            });
        }
        if evaluations + 2 * per_cell > opts.max_evaluations {
            return Err(Error::QuadratureFailure { error, evaluations });
        }
        let worst = heap.pop().expect("nonempty heap");
        if worst.volume == 0.0 {
            return Err(Error::QuadratureFailure { error, evaluations });
        }
        for part in split(&worst) {
            heap.push(make_cell(&rules, part, &f));
        }
        evaluations += 2 * per_cell;
    }
}

fn affine_dim(points: &[&Vec<BigRational>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let diffs: RatMatrix = points[1..]
        .iter()
        .map(|v| v.iter().zip(points[0]).map(|(a, b)| a - b).collect())
        .collect();
    linalg::rank(&diffs)
}

/// Pulling triangulation of `{x >= 0} cut by an affine space`, given by its
/// vertices. Faces are the zero sets of coordinates, so facets come from
/// filtering vertices by `x_j = 0`.
pub fn triangulate_slice(vertices: &[Vec<BigRational>]) -> Vec<Vec<Vec<BigRational>>> {
    let refs: Vec<&Vec<BigRational>> = vertices.iter().collect();
    let dim = affine_dim(&refs);
    pull(&refs, dim)
}

fn pull(vertices: &[&Vec<BigRational>], dim: usize) -> Vec<Vec<Vec<BigRational>>> {
    if dim == 0 {
        return vec![vec![vertices[0].clone()]];
    }
    let apex = vertices[0];
    let n = apex.len();
    let mut facets: Vec<Vec<&Vec<BigRational>>> = Vec::new();
    for j in 0..n {
        if apex[j].is_zero() {
            continue;
        }
        let face: Vec<&Vec<BigRational>> =
            vertices.iter().copied().filter(|v| v[j].is_zero()).collect();
        if face.len() < dim || affine_dim(&face) != dim - 1 || facets.contains(&face) {
            continue;
        }
        facets.push(face);
    }
    let mut out = Vec::new();
    for face in facets {
        for mut s in pull(&face, dim - 1) {
            s.insert(0, apex.clone());
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]
    }

    #[test]
    fn rule_weights_sum_to_one() {
        for n in 1..5 {
            for s in 0..4 {
                let r = GmRule::new(n, s);
                let total: f64 = r.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "n={n} s={s}");
            }
        }
    }

    // exact monomial moments on the standard simplex: a! b! / (a + b + 2)!
    #[test]
    fn degree_seven_is_exact() {
        let r = GmRule::new(2, 3);
        let fact = |n: u32| (1..=n).map(|i| i as f64).product::<f64>();
        for a in 0..=7u32 {
            for b in 0..=(7 - a) {
                let approx: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum::<f64>()
                    * 0.5;
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((approx - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn example_locus_integral() {
        let r = integrate_simplices(
            &[triangle()],
            |x| Complex64::new((1.0 + x[0] + 2.0 * x[1]).powi(-3), 0.0),
            QuadratureOptions::default(),
        )
        .unwrap();
        assert!((r.value.re - 1.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn budget_failure_is_reported() {
        let opts = QuadratureOptions {
            rel_tol: 1e-15,
            abs_tol: 0.0,
            max_evaluations: 200,
        };
        let r = integrate_simplices(&[triangle()], |x| Complex64::new((x[0] + 1e-3).ln(), 0.0), opts);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn segment_in_space() {
        // length sqrt(2) segment, integral of 1
        let seg = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let r = integrate_simplices(&[seg], |_| Complex64::new(1.0, 0.0), QuadratureOptions::default()).unwrap();
        assert!((r.value.re - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn square_slice_triangulates() {
        // {x in Delta^3 : x0 + x1 = x2 + x3}: a square with 4 vertices
        let h = rat(1, 2);
        let z = rat(0, 1);
        let verts = vec![
            vec![h.clone(), z.clone(), h.clone(), z.clone()],
            vec![h.clone(), z.clone(), z.clone(), h.clone()],
            vec![z.clone(), h.clone(), h.clone(), z.clone()],
            vec![z.clone(), h.clone(), z.clone(), h.clone()],
        ];
        let tri = triangulate_slice(&verts);
        assert_eq!(tri.len(), 2);
        let area: f64 = tri
            .iter()
            .map(|s| {
                simplex_volume(
                    &s.iter()
                        .map(|v| v.iter().map(crate::scalar::rational_to::<f64>).collect())
                        .collect::<Vec<_>>(),
                )
            })
            .sum();
        assert!((area - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tetrahedron_triangulates_to_itself() {
        let one = rat(1, 1);
        let z = rat(0, 1);
        let mut verts = Vec::new();
        for i in 0..4 {
            let mut v = vec![z.clone(); 4];
            v[i] = one.clone();
            verts.push(v);
        }
        assert_eq!(triangulate_slice(&verts).len(), 1);
    }
}
