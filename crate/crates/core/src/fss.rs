//! Fully symmetric sets: orbits of a generator vector under coordinate
//! permutations and sign changes (the hyperoctahedral group).
//!
//! Orbits are enumerated directly from the canonical generator, without
//! materializing signed permutation matrices. The within-block order is fixed:
//!
//! 1. distinct arrangements of the canonical (non-increasing) generator, in
//!    descending lexicographic order of the coordinate tuple, so the first
//!    arrangement is the canonical generator itself;
//! 2. for each arrangement, sign patterns in binary-counter order over its
//!    non-zero coordinates (bit `b` set negates the `b`-th non-zero coordinate,
//!    counting from the left).
//!
//! Consequently the first point of every block is its canonical generator.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// A flat row-major list of points of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Points {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Points {
            dim,
            coords: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut p = Points::with_capacity(dim, rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            p.push(r);
        }
        Ok(p)
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.coords.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    /// Rows `range` as a flat slice.
    pub fn rows(&self, range: Range<usize>) -> &[f64] {
        &self.coords[range.start * self.dim..range.end * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn extend(&mut self, other: &Points) {
        debug_assert_eq!(self.dim, other.dim);
        self.coords.extend_from_slice(&other.coords);
    }
}

/// A generator vector; `canonical` is set when the entries are non-negative and
/// sorted non-increasingly.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorVector {
    lambda: Vec<f64>,
    canonical: bool,
}

/// Zero count and multiplicities of the distinct non-zero absolute values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicityProfile {
    pub zeros: usize,
    pub multiplicities: Vec<usize>,
}

impl MultiplicityProfile {
    pub fn distinct_nonzero(&self) -> usize {
        self.multiplicities.len()
    }
}

fn check_finite(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::InvalidInput("generator vector is empty".into()));
    }
    if let Some(v) = lambda.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "generator entry {v} is not finite"
        )));
    }
    Ok(())
}

fn is_canonical_slice(lambda: &[f64]) -> bool {
    lambda.iter().all(|&v| v >= 0.0 && v.is_sign_positive())
        && lambda.windows(2).all(|w| w[0] >= w[1])
}

impl GeneratorVector {
    /// Wraps `lambda` as given. The orbit does not depend on the representative.
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        check_finite(&lambda)?;
        let canonical = is_canonical_slice(&lambda);
        Ok(GeneratorVector { lambda, canonical })
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn to_canonical(&self) -> GeneratorVector {
        if self.canonical {
            return self.clone();
        }
        let mut v: Vec<f64> = self.lambda.iter().map(|x| x.abs()).collect();
        v.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        GeneratorVector {
            lambda: v,
            canonical: true,
        }
    }

    pub fn profile(&self) -> MultiplicityProfile {
        let c = self.to_canonical();
        let zeros = c.lambda.iter().filter(|&&v| v == 0.0).count();
        let mut multiplicities = Vec::new();
        let mut prev: Option<f64> = None;
        for &v in c.lambda.iter().filter(|&&v| v != 0.0) {
            if prev == Some(v) {
                *multiplicities.last_mut().unwrap() += 1;
            } else {
                multiplicities.push(1);
                prev = Some(v);
            }
        }
        MultiplicityProfile {
            zeros,
            multiplicities,
        }
    }

    /// Whether the two generators span the same fully symmetric set.
    pub fn same_orbit(&self, other: &GeneratorVector) -> bool {
        self.to_canonical().lambda == other.to_canonical().lambda
    }
}

/// Absolute values sorted non-increasingly.
pub fn canonicalize(lambda: &[f64]) -> Result<GeneratorVector> {
    Ok(GeneratorVector::new(lambda.to_vec())?.to_canonical())
}

/// Number of distinct multiset arrangements, `m! / (c_1! c_2! ...)`.
fn multinomial(counts: &[usize]) -> u128 {
    let mut total = 0u64;
    let mut acc: u128 = 1;
    for &c in counts {
        for i in 1..=c as u64 {
            total += 1;
            // acc * total / i stays integral at every step.
            acc = acc
                .checked_mul(total as u128)
                .expect("fully symmetric set cardinality overflows u128")
                / i as u128;
        }
    }
    acc
}

/// `2^(m - r0) m! / (r0! r1! ... rl!)`.
pub fn cardinality(g: &GeneratorVector) -> u128 {
    let p = g.profile();
    let nonzero = g.dim() - p.zeros;
    let mut counts = vec![p.zeros];
    counts.extend_from_slice(&p.multiplicities);
    multinomial(&counts)
        .checked_mul(1u128 << nonzero)
        .expect("fully symmetric set cardinality overflows u128")
}

/// Steps `a` to the previous arrangement in lexicographic order. Returns false
/// once `a` is the smallest arrangement.
fn prev_permutation<T: PartialOrd>(a: &mut [T]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] <= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let pivot = i - 1;
    let mut j = a.len() - 1;
    while a[j] >= a[pivot] {
        j -= 1;
    }
    a.swap(pivot, j);
    a[i..].reverse();
    true
}

/// Calls `f` on every distinct arrangement of `sorted_desc`, which must be
/// sorted non-increasingly, in descending lexicographic order.
pub fn for_each_arrangement<T: PartialOrd + Clone, F: FnMut(&[T])>(sorted_desc: &[T], mut f: F) {
    let mut a = sorted_desc.to_vec();
    loop {
        f(&a);
        if !prev_permutation(&mut a) {
            break;
        }
    }
}

/// The orbit of a generator under all signed permutations.
#[derive(Debug, Clone)]
pub struct FullySymmetricSet {
    pub generator: GeneratorVector,
    pub points: Points,
    pub profile: MultiplicityProfile,
}

impl FullySymmetricSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn expand_into(canonical: &GeneratorVector, out: &mut Points) {
    let m = canonical.dim();
    let mut point = vec![0.0; m];
    for_each_arrangement(canonical.values(), |arr| {
        let nonzero: Vec<usize> = (0..m).filter(|&i| arr[i] != 0.0).collect();
        assert!(nonzero.len() < 64, "too many non-zero coordinates to enumerate signs");
        for mask in 0u64..(1u64 << nonzero.len()) {
            point.copy_from_slice(arr);
            for (bit, &i) in nonzero.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    point[i] = -point[i];
                }
            }
            out.push(&point);
        }
    });
}

/// All points `P lambda` for signed permutations `P`, without duplicates.
pub fn expand_full(g: &GeneratorVector) -> FullySymmetricSet {
    let canonical = g.to_canonical();
    let n = cardinality(&canonical) as usize;
    let mut points = Points::with_capacity(canonical.dim(), n);
    expand_into(&canonical, &mut points);
    debug_assert_eq!(points.len(), n);
    FullySymmetricSet {
        profile: canonical.profile(),
        generator: canonical,
        points,
    }
}

/// A multi-index with non-negative integer entries.
pub type MultiIndex = Vec<u32>;

/// Converts signed integers to a multi-index, rejecting negative entries.
pub fn multi_index_from_signed(alpha: &[i64]) -> Result<MultiIndex> {
    alpha
        .iter()
        .map(|&a| {
            u32::try_from(a)
                .map_err(|_| Error::InvalidInput(format!("multi-index entry {a} is negative")))
        })
        .collect()
}

/// The permutation orbit of a non-negative multi-index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonNegFullySymmetricIndexSet {
    /// Generator sorted non-increasingly.
    pub generator: MultiIndex,
    pub indices: Vec<MultiIndex>,
}

impl NonNegFullySymmetricIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_even(&self) -> bool {
        self.generator.iter().all(|a| a % 2 == 0)
    }
}

pub fn expand_nonneg(alpha: &[u32]) -> Result<NonNegFullySymmetricIndexSet> {
    if alpha.is_empty() {
        return Err(Error::InvalidInput("multi-index is empty".into()));
    }
    let mut generator = alpha.to_vec();
    generator.sort_by(|a, b| b.cmp(a));
    let mut indices = Vec::new();
    for_each_arrangement(&generator, |arr| indices.push(arr.to_vec()));
    Ok(NonNegFullySymmetricIndexSet { generator, indices })
}

/// `m! / (r0! r1! ... rl!)` for a multi-index.
pub fn nonneg_cardinality(alpha: &[u32]) -> u128 {
    let mut sorted = alpha.to_vec();
    sorted.sort_unstable();
    let mut counts = Vec::new();
    let mut prev = None;
    for v in sorted {
        if prev == Some(v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            counts.push(1);
            prev = Some(v);
        }
    }
    multinomial(&counts)
}

/// A union of `J` disjoint fully symmetric sets, stored block-major.
#[derive(Debug, Clone)]
pub struct SymmetricPointSet {
    generators: Vec<GeneratorVector>,
    points: Points,
    offsets: Vec<usize>,
}

fn bit_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Expands every generator and checks the blocks are pairwise distinct and disjoint.
pub fn build_point_set(generators: &[GeneratorVector]) -> Result<SymmetricPointSet> {
    let first = generators
        .first()
        .ok_or_else(|| Error::InvalidInput("generator list is empty".into()))?;
    let dim = first.dim();
    let mut canonical = Vec::with_capacity(generators.len());
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (j, g) in generators.iter().enumerate() {
        if g.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: g.dim(),
            });
        }
        let c = g.to_canonical();
        if let Some(&i) = seen.get(&bit_key(c.values())) {
            return Err(Error::DuplicateGenerator {
                first: i,
                second: j,
            });
        }
        seen.insert(bit_key(c.values()), j);
        canonical.push(c);
    }

    let total: usize = canonical.iter().map(|g| cardinality(g) as usize).sum();
    let mut points = Points::with_capacity(dim, total);
    let mut offsets = vec![0];
    for g in &canonical {
        expand_into(g, &mut points);
        offsets.push(points.len());
    }

    // Distinct canonical forms give disjoint orbits; checked anyway since the
    // blocks are consumed as if disjoint.
    let mut owner: HashMap<Vec<u64>, usize> = HashMap::with_capacity(total);
    for j in 0..canonical.len() {
        for i in offsets[j]..offsets[j + 1] {
            if let Some(&prev) = owner.get(&bit_key(points.get(i))) {
                if prev != j {
                    return Err(Error::OverlappingSets {
                        first: prev,
                        second: j,
                    });
                }
            }
            owner.insert(bit_key(points.get(i)), j);
        }
    }

    Ok(SymmetricPointSet {
        generators: canonical,
        points,
        offsets,
    })
}

impl SymmetricPointSet {
    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Number of blocks `J`.
    pub fn num_blocks(&self) -> usize {
        self.generators.len()
    }

    /// Total number of points `N`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Canonical generators, one per block.
    pub fn generators(&self) -> &[GeneratorVector] {
        &self.generators
    }

    pub fn generator(&self, j: usize) -> &[f64] {
        self.generators[j].values()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn block_size(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn block_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn block_points(&self, j: usize) -> std::slice::ChunksExact<'_, f64> {
        self.points
            .rows(self.block_range(j))
            .chunks_exact(self.dim())
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    /// Block index of flat point `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }

    /// Spreads one value per block onto every point of that block.
    pub fn expand_block_values(&self, per_block: &[f64]) -> Vec<f64> {
        assert_eq!(per_block.len(), self.num_blocks());
        let mut out = Vec::with_capacity(self.len());
        for (j, &w) in per_block.iter().enumerate() {
            out.extend(std::iter::repeat_n(w, self.block_size(j)));
        }
        out
    }

    /// Per-block sums of a block-ordered value vector, by pairwise summation.
    pub fn block_sums(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok((0..self.num_blocks())
            .map(|j| pairwise_sum(&values[self.block_range(j)]))
            .collect())
    }
}

/// A signed permutation acting as `(P x)_i = s_i x_{perm[i]}`.
#[derive(Debug, Clone)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let signs = (0..m)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        SignedPermutation { perm, signs }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.perm
            .iter()
            .zip(&self.signs)
            .map(|(&p, &s)| s * x[p])
            .collect()
    }

    /// The unsigned permutation applied to a multi-index.
    pub fn permute_index(&self, alpha: &[u32]) -> MultiIndex {
        self.perm.iter().map(|&p| alpha[p]).collect()
    }
}
