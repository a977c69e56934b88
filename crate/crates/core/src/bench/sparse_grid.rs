//! Gauss-Hermite sparse grids as unions of fully symmetric sets.
//!
//! Construction (non-nested Smolyak over probabilists' Gauss-Hermite rules):
//! a coordinate spending cost `c >= 1` takes one of the `c` positive nodes of
//! the `(2c + 1)`-point rule, with either sign; a coordinate spending nothing
//! is zero. A generator is a non-increasing tuple of positive nodes, padded
//! with zeros, whose costs add up to at most `level`. This is the point set of
//! the Smolyak combination of the odd-order rules `1, 3, 5, ...` with the
//! origin removed. Level 1 is the single generator `(sqrt 3, 0, ..., 0)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fss::{build_point_set, GeneratorVector, SymmetricPointSet};

/// Probabilists' Hermite polynomial `He_n(x)` and `He_{n-1}(x)`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Nodes of the `n`-point Gauss-Hermite rule for `N(0, 1)`, ascending.
pub fn gauss_hermite_nodes(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (h, h_prev) = hermite_pair(n, *x);
            let dh = n as f64 * h_prev;
            if dh != 0.0 {
                *x -= h / dh;
            }
        }
    }
    // The odd-order rules contain zero; make it exact.
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes
}

/// The positive nodes of the `(2 cost + 1)`-point rule, descending.
pub fn positive_nodes(cost: usize) -> Vec<f64> {
    let mut v: Vec<f64> = gauss_hermite_nodes(2 * cost + 1)
        .into_iter()
        .filter(|&x| x > 0.0)
        .collect();
    v.reverse();
    v
}

fn extend(
    pool: &[(f64, usize)],
    start: usize,
    budget: usize,
    dim: usize,
    prefix: &mut Vec<f64>,
    out: &mut Vec<Vec<f64>>,
) {
    if !prefix.is_empty() {
        let mut g = prefix.clone();
        g.resize(dim, 0.0);
        out.push(g);
    }
    if prefix.len() == dim {
        return;
    }
    for (i, &(node, cost)) in pool.iter().enumerate().skip(start) {
        if cost <= budget {
            prefix.push(node);
            extend(pool, i, budget - cost, dim, prefix, out);
            prefix.pop();
        }
    }
}

/// Generators of the level-`level` grid in `dim` dimensions, origin excluded.
pub fn make_gauss_hermite_generators(dim: usize, level: usize) -> Result<Vec<GeneratorVector>> {
    if dim == 0 || level == 0 {
        return Err(Error::InvalidInput("dimension and level must be at least 1".into()));
    }
    let mut pool: Vec<(f64, usize)> = (1..=level)
        .flat_map(|c| positive_nodes(c).into_iter().map(move |x| (x, c)))
        .collect();
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite"));
    let mut raw = Vec::new();
    extend(&pool, 0, level, dim, &mut Vec::with_capacity(dim), &mut raw);
    raw.into_iter().map(GeneratorVector::new).collect()
}

/// The grid as a validated union of fully symmetric sets; the origin is added
/// back when `with_origin` is set.
pub fn sparse_grid_design(dim: usize, level: usize, with_origin: bool) -> Result<SymmetricPointSet> {
    let mut gens = make_gauss_hermite_generators(dim, level)?;
    if with_origin {
        gens.insert(0, GeneratorVector::new(vec![0.0; dim])?);
    }
    build_point_set(&gens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_rule() {
        let n = gauss_hermite_nodes(3);
        assert!((n[2] - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(n[1], 0.0);
    }

    #[test]
    fn five_point_rule() {
        // Roots of x^5 - 10x^3 + 15x.
        let n = positive_nodes(2);
        let expected = [(5.0 + 10f64.sqrt()).sqrt(), (5.0 - 10f64.sqrt()).sqrt()];
        for (a, b) in n.iter().zip(expected) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn level_one_is_a_cross() {
        for m in 1..6 {
            let g = make_gauss_hermite_generators(m, 1).unwrap();
            assert_eq!(g.len(), 1);
            assert!((g[0].values()[0] - 3f64.sqrt()).abs() < 1e-14);
            assert_eq!(sparse_grid_design(m, 1, false).unwrap().len(), 2 * m);
        }
    }

    #[test]
    fn level_two_in_two_dimensions() {
        // (sqrt3, 0), (sqrt3, sqrt3) and the two cost-2 nodes on the axes.
        let d = sparse_grid_design(2, 2, false).unwrap();
        assert_eq!(d.num_blocks(), 4);
        assert_eq!(d.len(), 4 + 4 + 4 + 4);
    }
}
