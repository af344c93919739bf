//! Cubical partitions of a cell lattice, nice subpartitions, subpolyhedron
//! families, cube transport along corridors, and the local and global
//! covering assemblies with an exact integer verifier.
//!
//! Cells of an `n1 × n2` lattice are indexed `i1 * n2 + i2`, the same
//! convention as [`crate::phase::TorusGrid`], so covering families act
//! directly on sampled fiber fields.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::averaging::CoveringOracle;
use crate::phase::CellPermutation;
use crate::{Error, Result};

/// Residue modulus of the nice-subpartition decomposition.
pub const NICE_MODULUS: i64 = 17;

/// Number of nice subpartitions in the plane, `17²`.
pub const PLANAR_CLASSES: usize = 289;

/// Above this many members a subpolyhedron family is kept implicit.
pub const ENUMERATION_CAP: u128 = 100_000;

/// Number of sampled members checked for an implicit family.
pub const SPOT_CHECKS: usize = 1_000;

/// A decomposition of `ℝⁿ` into equal closed cubes with lattice centers.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CubicalPartition {
    pub dim: usize,
    pub pitch: f64,
    pub origin: Vec<f64>,
}

impl CubicalPartition {
    pub fn new(dim: usize, pitch: f64, origin: Vec<f64>) -> Result<Self> {
        if dim == 0 || origin.len() != dim || !(pitch > 0.0) {
            return Err(Error::Precondition("invalid cubical partition".into()));
        }
        Ok(CubicalPartition { dim, pitch, origin })
    }

    pub fn unit(dim: usize) -> Self {
        CubicalPartition {
            dim,
            pitch: 1.0,
            origin: vec![0.0; dim],
        }
    }

    pub fn cube_volume(&self) -> f64 {
        self.pitch.powi(self.dim as i32)
    }

    pub fn cube_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.origin)
            .map(|(x, o)| ((x - o) / self.pitch).floor() as i64)
            .collect()
    }

    pub fn center(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .map(|(i, o)| o + (*i as f64 + 0.5) * self.pitch)
            .collect()
    }
}

/// A union of cells of an `n1 × n2` lattice.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct CubicalPolyhedron {
    pub res: [usize; 2],
    pub cells: Vec<usize>,
}

impl CubicalPolyhedron {
    pub fn new(res: [usize; 2], mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        if cells.last().is_some_and(|&c| c >= res[0] * res[1]) {
            return Err(Error::Precondition("cell outside the lattice".into()));
        }
        Ok(CubicalPolyhedron { res, cells })
    }

    /// Measure as a fraction of the whole lattice.
    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 / (self.res[0] * self.res[1]) as f64
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn coords(cell: usize, res: [usize; 2]) -> [i64; 2] {
    [(cell / res[1]) as i64, (cell % res[1]) as i64]
}

fn index(c: [i64; 2], res: [usize; 2]) -> Option<usize> {
    if c[0] < 0 || c[1] < 0 || c[0] >= res[0] as i64 || c[1] >= res[1] as i64 {
        None
    } else {
        Some(c[0] as usize * res[1] + c[1] as usize)
    }
}

fn sup_dist<const N: usize>(a: &[i64; N], b: &[i64; N]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// Closed dilates `cQ₁`, `cQ₂` of unit lattice cubes intersect iff the
/// centers are within `c` pitches in sup norm.
pub fn dilates_intersect<const N: usize>(q1: &[i64; N], q2: &[i64; N], factor: i64) -> bool {
    sup_dist(q1, q2) <= factor
}

/// `Q₁ ⊂ Interior(c Q₂)` for unit lattice cubes.
pub fn inside_dilate_interior<const N: usize>(q1: &[i64; N], q2: &[i64; N], factor: i64) -> bool {
    2 * sup_dist(q1, q2) + 1 < factor
}

/// Cubes of a partition with pairwise disjoint 16-dilates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceSubpartition<const N: usize> {
    pub residue: [i64; N],
    pub cubes: Vec<[i64; N]>,
}

impl<const N: usize> NiceSubpartition<N> {
    pub fn is_nice(&self) -> bool {
        for (i, a) in self.cubes.iter().enumerate() {
            for b in &self.cubes[i + 1..] {
                if a == b || dilates_intersect(a, b, 16) {
                    return false;
                }
            }
        }
        true
    }
}

/// Splits `region` into the `17ᴺ` residue classes mod 17; classes are
/// ordered lexicographically by residue.
pub fn decompose_nice_subpartitions<const N: usize>(region: &[[i64; N]]) -> Vec<NiceSubpartition<N>> {
    let count = (NICE_MODULUS as usize).pow(N as u32);
    let mut classes: Vec<NiceSubpartition<N>> = (0..count)
        .map(|k| {
            let mut residue = [0i64; N];
            let mut r = k;
            for d in (0..N).rev() {
                residue[d] = (r % NICE_MODULUS as usize) as i64;
                r /= NICE_MODULUS as usize;
            }
            NiceSubpartition {
                residue,
                cubes: Vec::new(),
            }
        })
        .collect();
    for q in region {
        classes[class_index(q)].cubes.push(*q);
    }
    classes
}

fn class_index<const N: usize>(q: &[i64; N]) -> usize {
    q.iter()
        .fold(0usize, |acc, x| acc * NICE_MODULUS as usize + x.rem_euclid(NICE_MODULUS) as usize)
}

/// Sizes of the connected components of the union of `factor`-dilates.
pub fn dilate_components(cubes: &[[i64; 2]], factor: i64) -> Vec<usize> {
    let n = cubes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if dilates_intersect(&cubes[i], &cubes[j], factor) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut sizes = std::collections::BTreeMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_insert(0usize) += 1;
    }
    sizes.into_values().collect()
}

/// How a family of equal-size cell subsets is stored.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyRepr {
    /// Every member listed.
    Full(Vec<Vec<usize>>),
    /// All `size`-subsets of the base, kept implicit.
    Implicit { size: usize },
    /// Windows `order[j·stride .. j·stride + size]` (cyclically) for
    /// `j < order.len() / stride`.
    Cyclic { size: usize, stride: usize },
}

/// Requested storage for [`family_4_2_b`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReprChoice {
    Auto,
    Full,
    Implicit,
}

/// A family of subpolyhedra of `X′` together with its certified minimum
/// counting ratio `ν(x)/N` on `X′`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubpolyhedronFamily {
    pub x_prime: Vec<usize>,
    pub repr: FamilyRepr,
    pub members: u128,
    /// `min_x ν(x) / N` as an exact fraction.
    pub ratio: (u128, u128),
    pub spot_checked: usize,
}

impl SubpolyhedronFamily {
    pub fn ratio_f64(&self) -> f64 {
        self.ratio.0 as f64 / self.ratio.1 as f64
    }

    /// Exact counting function on `x_prime` (in its order) for listed or
    /// cyclic families.
    pub fn counting(&self) -> Option<Vec<u64>> {
        let m = self.x_prime.len();
        match &self.repr {
            FamilyRepr::Full(members) => {
                let pos: std::collections::HashMap<usize, usize> =
                    self.x_prime.iter().enumerate().map(|(i, c)| (*c, i)).collect();
                let mut nu = vec![0u64; m];
                for mem in members {
                    for c in mem {
                        nu[pos[c]] += 1;
                    }
                }
                Some(nu)
            }
            FamilyRepr::Cyclic { size, stride } => {
                let mut nu = vec![0u64; m];
                for j in 0..m / stride {
                    for l in 0..*size {
                        nu[(j * stride + l) % m] += 1;
                    }
                }
                Some(nu)
            }
            FamilyRepr::Implicit { .. } => None,
        }
    }

    /// The `j`-th member (cells of `x_prime`), for listed or cyclic families.
    pub fn member(&self, j: usize) -> Option<Vec<usize>> {
        let m = self.x_prime.len();
        match &self.repr {
            FamilyRepr::Full(members) => members.get(j).cloned(),
            FamilyRepr::Cyclic { size, stride } => {
                if j >= m / stride {
                    return None;
                }
                let mut w: Vec<usize> = (0..*size).map(|l| self.x_prime[(j * stride + l) % m]).collect();
                w.sort_unstable();
                Some(w)
            }
            FamilyRepr::Implicit { .. } => None,
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc == u128::MAX {
            return u128::MAX;
        }
    }
    acc
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reduce(n: u128, d: u128) -> (u128, u128) {
    let g = gcd(n, d).max(1);
    (n / g, d / g)
}

/// All subpolyhedra of `X′` made of exactly `k − 1` cells, with counting
/// ratio `(k − 1)/M` on `X′` (`M = |X′|`), certified against `a / 2μ(X)`.
///
/// Measures are in cells: `mu_x = |X|`, `a ∈ (0, |X|]`.
pub fn family_4_2_b(
    x_prime: &[usize],
    mu_x: usize,
    a: f64,
    k: usize,
    repr: ReprChoice,
    seed: u64,
) -> Result<SubpolyhedronFamily> {
    let mut xp = x_prime.to_vec();
    xp.sort_unstable();
    xp.dedup();
    let m = xp.len();
    if mu_x == 0 || m < mu_x || 2 * m >= 3 * mu_x {
        return Err(Error::Precondition(format!(
            "need μ(X) ≤ μ(X′) < 1.5μ(X), got |X|={mu_x}, |X′|={m}"
        )));
    }
    if !(a > 0.0 && a <= mu_x as f64) {
        return Err(Error::Precondition(format!("a = {a} outside (0, μ(X)]")));
    }
    let k_min = if m == mu_x { 2 } else { 4 };
    if k < k_min || k - 1 > m {
        return Err(Error::KBelowThreshold(format!("k = {k}, need {k_min} ≤ k ≤ {}", m + 1)));
    }
    let size = k - 1;
    // (k−1)/M ≥ a/(2μ(X))  ⇔  2(k−1)μ(X) ≥ aM
    if 2.0 * size as f64 * (mu_x as f64) < a * m as f64 {
        return Err(Error::KBelowThreshold(format!(
            "(k−1)/M = {size}/{m} is below a/2μ(X) = {}",
            a / (2.0 * mu_x as f64)
        )));
    }
    let members = binomial(m, size);
    let ratio = reduce(size as u128, m as u128);
    let full = match repr {
        ReprChoice::Full => true,
        ReprChoice::Implicit => false,
        ReprChoice::Auto => members <= ENUMERATION_CAP,
    };
    if full {
        if members > 10 * ENUMERATION_CAP {
            return Err(Error::TooLarge(format!("{members} members")));
        }
        let list = combinations(&xp, size);
        let fam = SubpolyhedronFamily {
            x_prime: xp,
            repr: FamilyRepr::Full(list),
            members,
            ratio,
            spot_checked: 0,
        };
        let nu = fam.counting().expect("listed family");
        let expect = binomial(m - 1, size - 1) as u64;
        if nu.iter().any(|&v| v != expect) {
            return Err(Error::BoundViolated {
                source_tag: "Lemma 4.2.B",
                detail: "counting function is not constant on X′".into(),
            });
        }
        return Ok(fam);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0u64; m];
    for _ in 0..SPOT_CHECKS {
        let s = sample(&mut rng, m, size);
        let mut seen = 0usize;
        for i in s.iter() {
            hits[i] += 1;
            seen += 1;
        }
        if seen != size {
            return Err(Error::BoundViolated {
                source_tag: "Lemma 4.2.B",
                detail: "sampled member has the wrong size".into(),
            });
        }
    }
    Ok(SubpolyhedronFamily {
        x_prime: xp,
        repr: FamilyRepr::Implicit { size },
        members,
        ratio,
        spot_checked: SPOT_CHECKS,
    })
}

fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = size;
        while i > 0 && idx[i - 1] == i - 1 + n - size {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A family `{g_i(A)}` with multiplicities, acting on `universe` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CoveringFamily {
    pub universe: usize,
    pub base: Vec<usize>,
    pub maps: Vec<CellPermutation>,
    pub multiplicities: Vec<u64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RawFamily {
    universe: usize,
    base: Vec<usize>,
    maps: Vec<Vec<usize>>,
    multiplicities: Vec<u64>,
}

impl serde::Serialize for CoveringFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawFamily {
            universe: self.universe,
            base: self.base.clone(),
            maps: self.maps.iter().map(|p| p.forward().to_vec()).collect(),
            multiplicities: self.multiplicities.clone(),
        }
        .serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for CoveringFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFamily::deserialize(d)?;
        let maps = raw
            .maps
            .into_iter()
            .map(CellPermutation::new)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        CoveringFamily::new(raw.universe, raw.base, maps, raw.multiplicities).map_err(serde::de::Error::custom)
    }
}

impl CoveringFamily {
    pub fn new(universe: usize, mut base: Vec<usize>, maps: Vec<CellPermutation>, multiplicities: Vec<u64>) -> Result<Self> {
        base.sort_unstable();
        base.dedup();
        if maps.len() != multiplicities.len() {
            return Err(Error::DomainMismatch("one multiplicity per map".into()));
        }
        if maps.iter().any(|p| p.len() != universe) || base.iter().any(|&c| c >= universe) {
            return Err(Error::DomainMismatch(format!("family not on {universe} cells")));
        }
        Ok(CoveringFamily {
            universe,
            base,
            maps,
            multiplicities,
        })
    }

    /// `{Y}` once with `A = Y`.
    pub fn trivial(universe: usize) -> Self {
        CoveringFamily {
            universe,
            base: (0..universe).collect(),
            maps: vec![CellPermutation::identity(universe)],
            multiplicities: vec![1],
        }
    }

    /// Total number of members `N`, counted with multiplicity.
    pub fn total(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// `ν(y) = #{i : y ∈ g_i(set)}` with multiplicity.
    pub fn counting_of(&self, set: &[usize]) -> Vec<u64> {
        let mut nu = vec![0u64; self.universe];
        for (p, &w) in self.maps.iter().zip(&self.multiplicities) {
            for &c in set {
                nu[p.apply(c)] += w;
            }
        }
        nu
    }

    pub fn counting(&self) -> Vec<u64> {
        self.counting_of(&self.base)
    }

    /// Same members, each repeated `factor` times.
    pub fn repeated(&self, factor: u64) -> Self {
        let mut out = self.clone();
        for w in &mut out.multiplicities {
            *w *= factor;
        }
        out
    }
}

/// Outcome of [`verify_covering`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CoveringVerdict {
    pub pass: bool,
    pub worst_cell: usize,
    pub worst_count: u64,
    pub total: u64,
    /// `(c₁ + c₂ μ(Y)/μ(A))⁻¹`.
    pub bound: f64,
    pub worst_ratio: f64,
}

/// Exact check of `(1/N) Σ χ^{g_i(A)}(y) ≥ (c₁ + c₂ μ(Y)/μ(A))⁻¹` at every
/// cell, in integers: `ν(y)·(c₁|A| + c₂|Y|) ≥ N·|A|`.
pub fn verify_covering(family: &CoveringFamily, a: &[usize], c1: u64, c2: u64) -> CoveringVerdict {
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    let nu = family.counting_of(&a);
    let total = family.total();
    let size_a = a.len() as u128;
    let lhs_factor = c1 as u128 * size_a + c2 as u128 * family.universe as u128;
    let rhs = total as u128 * size_a;
    let (worst_cell, worst_count) = nu
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(i, &v)| (i, v))
        .unwrap_or((0, 0));
    let pass = !a.is_empty() && total > 0 && worst_count as u128 * lhs_factor >= rhs;
    let bound = if a.is_empty() {
        0.0
    } else {
        1.0 / (c1 as f64 + c2 as f64 * family.universe as f64 / a.len() as f64)
    };
    CoveringVerdict {
        pass,
        worst_cell,
        worst_count,
        total,
        bound,
        worst_ratio: if total == 0 { 0.0 } else { worst_count as f64 / total as f64 },
    }
}

/// A permutation of `universe` cells mapping `from` (sorted) onto `to`
/// (sorted) in order and `region ∖ from` onto `region ∖ to` in order; the
/// identity outside `region`.
fn region_permutation(universe: usize, region: &[usize], from: &[usize], to: &[usize]) -> Result<CellPermutation> {
    let mut forward: Vec<usize> = (0..universe).collect();
    let mut in_from = vec![false; universe];
    let mut in_to = vec![false; universe];
    for &c in from {
        in_from[c] = true;
    }
    for &c in to {
        in_to[c] = true;
    }
    for (&s, &d) in from.iter().zip(to) {
        forward[s] = d;
    }
    let rest_from = region.iter().filter(|&&c| !in_from[c]);
    let rest_to = region.iter().filter(|&&c| !in_to[c]);
    for (&s, &d) in rest_from.zip(rest_to) {
        forward[s] = d;
    }
    CellPermutation::new(forward)
}

/// Output of [`covering_4_2_a`].
#[derive(Clone, Debug)]
pub struct LocalCovering {
    pub family: CoveringFamily,
    pub c1: u64,
    pub c2: u64,
    /// The target family of cell windows.
    pub sigma: SubpolyhedronFamily,
    /// `N′ = min_X ν_σ`.
    pub n_prime: u64,
    /// Cells of `∪ f_i(A) Δ A_i`; empty at grid level.
    pub defect: Vec<usize>,
    pub transport: Vec<TransportPlan>,
}

/// Local covering of the region `X` by images of `A ⊂ X`, with constants
/// `(C₁, C₂) = (C, 2)`.
///
/// The target family is the cyclic family of `|A|`-cell windows of `X` (in
/// index order) with the largest stride `s | |X|` not exceeding `|A|/2`, so
/// `ν/N ≥ (|A| − s)/|X| ≥ μ(A)/2μ(X)`. The permutations `f_i` carry `A` onto
/// the windows exactly, so the exceptional set is empty and no transport is
/// needed.
pub fn covering_4_2_a(universe: usize, x: &[usize], a: &[usize]) -> Result<LocalCovering> {
    let mut x = x.to_vec();
    x.sort_unstable();
    x.dedup();
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    if a.is_empty() {
        return Err(Error::Precondition("A must be non-empty".into()));
    }
    if x.last().is_some_and(|&c| c >= universe) {
        return Err(Error::DomainMismatch("X outside the universe".into()));
    }
    if a.iter().any(|c| x.binary_search(c).is_err()) {
        return Err(Error::Precondition("A must lie inside X".into()));
    }
    let m = x.len();
    let size = a.len();
    let (c1, c2) = (PLANAR_CLASSES as u64, 2u64);
    if size == m {
        let sigma = SubpolyhedronFamily {
            x_prime: x.clone(),
            repr: FamilyRepr::Cyclic { size, stride: m },
            members: 1,
            ratio: (1, 1),
            spot_checked: 0,
        };
        let family = CoveringFamily::new(universe, a, vec![CellPermutation::identity(universe)], vec![1])?;
        return Ok(LocalCovering {
            family,
            c1,
            c2,
            sigma,
            n_prime: 1,
            defect: Vec::new(),
            transport: Vec::new(),
        });
    }
    let cap = (size / 2).max(1);
    let stride = (1..=cap).rev().find(|s| m % s == 0).unwrap_or(1);
    let count = m / stride;
    let sigma_counts = {
        let fam = SubpolyhedronFamily {
            x_prime: x.clone(),
            repr: FamilyRepr::Cyclic { size, stride },
            members: count as u128,
            ratio: (0, 1),
            spot_checked: 0,
        };
        fam.counting().expect("cyclic family")
    };
    let n_prime = *sigma_counts.iter().min().unwrap_or(&0);
    let sigma = SubpolyhedronFamily {
        x_prime: x.clone(),
        repr: FamilyRepr::Cyclic { size, stride },
        members: count as u128,
        ratio: reduce(n_prime as u128, count as u128),
        spot_checked: 0,
    };
    // N′/N ≥ μ(A)/2μ(X)
    if 2 * n_prime as u128 * (m as u128) < size as u128 * count as u128 {
        return Err(Error::BoundViolated {
            source_tag: "Lemma 4.2.B",
            detail: format!("window family ratio {n_prime}/{count} below |A|/2|X|"),
        });
    }
    let maps = (0..count)
        .into_par_iter()
        .map(|j| {
            let w = sigma.member(j).expect("window");
            region_permutation(universe, &x, &a, &w)
        })
        .collect::<Result<Vec<_>>>()?;
    let family = CoveringFamily::new(universe, a.clone(), maps, vec![1; count])?;
    let out = LocalCovering {
        family,
        c1,
        c2,
        sigma,
        n_prime,
        defect: Vec::new(),
        transport: Vec::new(),
    };
    // pointwise on X: ν·(C₁|A| + C₂|X|) ≥ M·|A|
    let nu = out.family.counting();
    let lhs = c1 as u128 * size as u128 + c2 as u128 * m as u128;
    let total = out.family.total() as u128;
    if let Some(&bad) = x.iter().find(|&&c| (nu[c] as u128) * lhs < total * size as u128) {
        return Err(Error::BoundViolated {
            source_tag: "Proposition 4.2.A",
            detail: format!("cell {bad} covered {} of {total} times", nu[bad]),
        });
    }
    Ok(out)
}

/// `r` equal vertical bands of an `n1 × n2` grid (requires `r | n1`).
pub fn band_charts(res: [usize; 2], r: usize) -> Result<Vec<Vec<usize>>> {
    if r == 0 || res[0] % r != 0 {
        return Err(Error::Precondition(format!("{r} bands do not divide {} columns", res[0])));
    }
    let w = res[0] / r;
    Ok((0..r)
        .map(|i| (i * w * res[1]..(i + 1) * w * res[1]).collect())
        .collect())
}

/// Output of [`covering_global`].
#[derive(Clone, Debug)]
pub struct GlobalCovering {
    pub family: CoveringFamily,
    pub c1: u64,
    pub c2: u64,
    pub spreading: CellPermutation,
    /// `A_i ⊂ f(A) ∩ X_i`.
    pub chart_sets: Vec<Vec<usize>>,
    pub locals: Vec<LocalCovering>,
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    let g = gcd(a as u128, b as u128) as u64;
    (a / g).checked_mul(b)
}

/// Global covering of all cells by images of `A`, from equal-measure
/// charts: spread `A` over the charts, cover each chart locally with
/// `⌈|A|/2r⌉` cells of the spread set, and pad to equal family sizes.
/// Constants are `(c₁, c₂) = (rC₁, 2rC₂)`.
pub fn covering_global(universe: usize, charts: &[Vec<usize>], a: &[usize]) -> Result<GlobalCovering> {
    let r = charts.len();
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    if a.is_empty() {
        return Err(Error::Precondition("A must be non-empty".into()));
    }
    if r == 0 {
        return Err(Error::Precondition("no charts".into()));
    }
    let mut owner = vec![usize::MAX; universe];
    for (i, ch) in charts.iter().enumerate() {
        if ch.len() != charts[0].len() {
            return Err(Error::Precondition("charts must have equal measure".into()));
        }
        for &c in ch {
            if c >= universe || owner[c] != usize::MAX {
                return Err(Error::Precondition("charts must partition the cells".into()));
            }
            owner[c] = i;
        }
    }
    if owner.iter().any(|&o| o == usize::MAX) {
        return Err(Error::Precondition("charts must cover every cell".into()));
    }
    if a.len() < r {
        return Err(Error::SpreadingInfeasible(format!(
            "|A| = {} cells cannot meet {r} charts",
            a.len()
        )));
    }
    let mut sorted_charts: Vec<Vec<usize>> = charts.to_vec();
    for ch in &mut sorted_charts {
        ch.sort_unstable();
    }
    // round-robin spreading: k-th cell of A goes to chart k mod r
    let mut fill = vec![0usize; r];
    let mut targets = Vec::with_capacity(a.len());
    for k in 0..a.len() {
        let i = k % r;
        targets.push(sorted_charts[i][fill[i]]);
        fill[i] += 1;
    }
    targets.sort_unstable();
    let all: Vec<usize> = (0..universe).collect();
    let spreading = region_permutation(universe, &all, &a, &targets)?;
    let spread = spreading.image(&a);
    let per_chart: Vec<Vec<usize>> = (0..r)
        .map(|i| spread.iter().copied().filter(|&c| owner[c] == i).collect())
        .collect();
    for (i, p) in per_chart.iter().enumerate() {
        if 2 * r * p.len() <= a.len() {
            return Err(Error::BoundViolated {
                source_tag: "Theorem 4.1.A",
                detail: format!("spreading leaves {} cells in chart {i}", p.len()),
            });
        }
    }
    let take = a.len().div_ceil(2 * r);
    let chart_sets: Vec<Vec<usize>> = per_chart.iter().map(|p| p[..take].to_vec()).collect();
    let locals = sorted_charts
        .iter()
        .zip(&chart_sets)
        .map(|(x, ai)| covering_4_2_a(universe, x, ai))
        .collect::<Result<Vec<_>>>()?;
    let mut n = 1u64;
    for l in &locals {
        n = lcm(n, l.family.total()).ok_or_else(|| Error::TooLarge("padded family size overflows".into()))?;
    }
    let mut maps = Vec::new();
    let mut mult = Vec::new();
    for l in &locals {
        let factor = n / l.family.total();
        for (g, &w) in l.family.maps.iter().zip(&l.family.multiplicities) {
            maps.push(g.compose(&spreading));
            mult.push(w * factor);
        }
    }
    let family = CoveringFamily::new(universe, a, maps, mult)?;
    Ok(GlobalCovering {
        family,
        c1: r as u64 * PLANAR_CLASSES as u64,
        c2: 2 * r as u64 * 2,
        spreading,
        chart_sets,
        locals,
    })
}

/// Covering oracle on an `n1 × n2` torus grid using `r` vertical bands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandCoveringOracle {
    pub res: [usize; 2],
    pub r: usize,
}

impl BandCoveringOracle {
    pub fn new(res: [usize; 2], r: usize) -> Result<Self> {
        band_charts(res, r)?;
        Ok(BandCoveringOracle { res, r })
    }
}

impl CoveringOracle for BandCoveringOracle {
    fn constants(&self) -> (u64, u64) {
        (self.r as u64 * PLANAR_CLASSES as u64, 4 * self.r as u64)
    }

    fn cover(&self, a: &[usize]) -> Result<CoveringFamily> {
        let charts = band_charts(self.res, self.r)?;
        Ok(covering_global(self.res[0] * self.res[1], &charts, a)?.family)
    }
}

/// Relocation of one cube along a corridor of adjacent cells.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct CubeMove {
    pub from: usize,
    pub to: usize,
    /// `4Q ∩ 4Q′ ≠ ∅`: routed inside `16Q ∩ 16Q′`.
    pub near: bool,
    pub corridor: Vec<usize>,
}

/// A transformation `g_i` with `B_i ⊂ g_i(A_1)`, built from cube moves.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub class: usize,
    pub moves: Vec<CubeMove>,
    /// Cells whose centers lie in some `4Q`, `Q` a cube of the plan.
    pub blocked: Vec<usize>,
    pub permutation: CellPermutation,
    pub support: Vec<usize>,
}

impl TransportPlan {
    /// Every cell outside `support` is fixed.
    pub fn fixes_outside_support(&self) -> bool {
        let mut inside = vec![false; self.permutation.len()];
        for &c in &self.support {
            inside[c] = true;
        }
        (0..self.permutation.len()).all(|c| inside[c] || self.permutation.apply(c) == c)
    }

    /// Every move lands exactly.
    pub fn moves_land(&self) -> bool {
        self.moves.iter().all(|m| self.permutation.apply(m.from) == m.to)
    }
}

/// Output of [`transport_4_2_c`].
#[derive(Clone, Debug)]
pub struct Transport {
    pub classes: usize,
    /// Residue class index of `A_1`.
    pub a1_class: usize,
    pub a1: Vec<usize>,
    pub plans: Vec<TransportPlan>,
}

/// `B ⊂ ∪ g_i(A)`.
pub fn transport_covers(plans: &[TransportPlan], a: &[usize], b: &[usize]) -> bool {
    let universe = plans.first().map(|p| p.permutation.len()).unwrap_or(0);
    let mut in_a = vec![false; universe];
    for &c in a {
        if c < universe {
            in_a[c] = true;
        }
    }
    b.iter().all(|&c| {
        c < universe
            && plans
                .iter()
                .any(|p| in_a[p.permutation.apply_inverse(c)])
    })
}

/// At most `C = 289` transformations `g_i` of an `n1 × n2` lattice box with
/// `B ⊂ ∪ g_i(A)`, assuming `|A| > 2C|B|`.
pub fn transport_4_2_c(a: &[usize], b: &[usize], lattice: [usize; 2]) -> Result<Transport> {
    let universe = lattice[0] * lattice[1];
    let mut a = a.to_vec();
    a.sort_unstable();
    a.dedup();
    let mut b = b.to_vec();
    b.sort_unstable();
    b.dedup();
    if a.iter().chain(&b).any(|&c| c >= universe) {
        return Err(Error::Precondition("cell outside the lattice".into()));
    }
    let c = PLANAR_CLASSES;
    if a.len() <= 2 * c * b.len() || a.is_empty() {
        return Err(Error::TransportHypothesis {
            mu_a: a.len() as f64 / universe as f64,
            mu_b: b.len() as f64 / universe as f64,
            c,
        });
    }
    let a_coords: Vec<[i64; 2]> = a.iter().map(|&x| coords(x, lattice)).collect();
    let classes_a = decompose_nice_subpartitions(&a_coords);
    let a1_class = (0..classes_a.len())
        .max_by_key(|&i| (classes_a[i].cubes.len(), std::cmp::Reverse(i)))
        .unwrap_or(0);
    let a1: Vec<usize> = classes_a[a1_class]
        .cubes
        .iter()
        .filter_map(|&q| index(q, lattice))
        .collect();
    if b.iter().all(|x| a.binary_search(x).is_ok()) {
        return Ok(Transport {
            classes: c,
            a1_class,
            a1,
            plans: vec![TransportPlan {
                class: a1_class,
                moves: Vec::new(),
                blocked: Vec::new(),
                permutation: CellPermutation::identity(universe),
                support: Vec::new(),
            }],
        });
    }
    let b_coords: Vec<[i64; 2]> = b.iter().map(|&x| coords(x, lattice)).collect();
    let classes_b = decompose_nice_subpartitions(&b_coords);
    let q: Vec<[i64; 2]> = classes_a[a1_class].cubes.clone();
    let mut plans = Vec::new();
    for (ci, class) in classes_b.iter().enumerate() {
        if class.cubes.is_empty() {
            continue;
        }
        plans.push(plan_for_class(ci, &q, &class.cubes, lattice)?);
    }
    Ok(Transport {
        classes: c,
        a1_class,
        a1,
        plans,
    })
}

fn plan_for_class(class: usize, q: &[[i64; 2]], qp: &[[i64; 2]], lattice: [usize; 2]) -> Result<TransportPlan> {
    let universe = lattice[0] * lattice[1];
    if qp.len() >= q.len() {
        return Err(Error::Precondition("B_i has at least as many cubes as A_1".into()));
    }
    // near pairs first, then each remaining target takes the nearest free source
    let mut used = vec![false; q.len()];
    let mut pairs: Vec<(usize, usize, bool)> = Vec::new();
    let mut pending = Vec::new();
    for (j, t) in qp.iter().enumerate() {
        match q.iter().position(|s| dilates_intersect(s, t, 4)) {
            Some(i) => {
                used[i] = true;
                pairs.push((i, j, true));
            }
            None => pending.push(j),
        }
    }
    for j in pending {
        let i = (0..q.len())
            .filter(|&i| !used[i])
            .min_by_key(|&i| (sup_dist(&q[i], &qp[j]), i))
            .ok_or_else(|| Error::TransportBlocked("no free source cube".into()))?;
        used[i] = true;
        pairs.push((i, j, false));
    }
    let plan_cubes: Vec<[i64; 2]> = q.iter().chain(qp).copied().collect();
    let mut blocked = Vec::new();
    for cell in 0..universe {
        let x = coords(cell, lattice);
        if plan_cubes.iter().any(|p| sup_dist(p, &x) <= 2) {
            blocked.push(cell);
        }
    }
    let mut permutation = CellPermutation::identity(universe);
    let mut moves = Vec::new();
    let mut support = Vec::new();
    for &(i, j, near) in &pairs {
        let (s, t) = (q[i], qp[j]);
        let others: Vec<[i64; 2]> = plan_cubes.iter().copied().filter(|p| *p != s && *p != t).collect();
        let allowed = |x: [i64; 2]| -> bool {
            if near {
                sup_dist(&x, &s) <= 7 && sup_dist(&x, &t) <= 7 && !others.contains(&x)
            } else {
                others.iter().all(|o| sup_dist(o, &x) > 2)
            }
        };
        let corridor = bfs_corridor(s, t, lattice, allowed).ok_or_else(|| {
            Error::TransportBlocked(format!("no corridor from {s:?} to {t:?}"))
        })?;
        let h = corridor_shift(universe, &corridor);
        permutation = permutation.compose(&h);
        support.extend_from_slice(&corridor);
        moves.push(CubeMove {
            from: index(s, lattice).expect("in lattice"),
            to: index(t, lattice).expect("in lattice"),
            near,
            corridor,
        });
    }
    support.sort_unstable();
    support.dedup();
    let plan = TransportPlan {
        class,
        moves,
        blocked,
        permutation,
        support,
    };
    if !plan.moves_land() || !plan.fixes_outside_support() {
        return Err(Error::BoundViolated {
            source_tag: "Lemma 4.2.C",
            detail: "composed moves do not land on B_i".into(),
        });
    }
    Ok(plan)
}

fn bfs_corridor<F: Fn([i64; 2]) -> bool>(s: [i64; 2], t: [i64; 2], lattice: [usize; 2], allowed: F) -> Option<Vec<usize>> {
    let universe = lattice[0] * lattice[1];
    let start = index(s, lattice)?;
    let goal = index(t, lattice)?;
    let mut prev = vec![usize::MAX; universe];
    prev[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            let mut path = vec![goal];
            let mut c = goal;
            while c != start {
                c = prev[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        let x = coords(cur, lattice);
        for d in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            let y = [x[0] + d[0], x[1] + d[1]];
            if let Some(n) = index(y, lattice) {
                if prev[n] == usize::MAX && (n == goal || allowed(y)) {
                    prev[n] = cur;
                    queue.push_back(n);
                }
            }
        }
    }
    None
}

/// Adjacent transpositions along `path` carrying `path[0]` to its end and
/// shifting the intermediate cells back by one.
fn corridor_shift(universe: usize, path: &[usize]) -> CellPermutation {
    let mut forward: Vec<usize> = (0..universe).collect();
    if path.len() >= 2 {
        forward[path[0]] = path[path.len() - 1];
        for k in 1..path.len() {
            forward[path[k]] = path[k - 1];
        }
    }
    CellPermutation::new(forward).expect("cyclic shift is a bijection")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn planar_class_count() {
        let region: Vec<[i64; 2]> = (0..3).flat_map(|i| (0..3).map(move |j| [i, j])).collect();
        assert_eq!(decompose_nice_subpartitions(&region).len(), 289);
        let one = decompose_nice_subpartitions(&[[5i64, 9]]);
        assert_eq!(one.iter().filter(|c| !c.cubes.is_empty()).count(), 1);
    }

    #[test]
    fn classes_are_nice_on_40_lattice() {
        let region: Vec<[i64; 2]> = (0..40).flat_map(|i| (0..40).map(move |j| [i, j])).collect();
        let classes = decompose_nice_subpartitions(&region);
        assert_eq!(classes.iter().map(|c| c.cubes.len()).sum::<usize>(), 1600);
        assert!(classes.iter().all(|c| c.is_nice()));
    }

    #[test]
    fn four_dilate_fact() {
        for dx in -1..=1 {
            for dy in -1..=1 {
                assert!(inside_dilate_interior(&[dx, dy], &[0, 0], 4));
            }
        }
    }

    #[test]
    fn dilate_components_of_two_nice_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let region: Vec<[i64; 2]> = (0..60).flat_map(|i| (0..60).map(move |j| [i, j])).collect();
        let classes = decompose_nice_subpartitions(&region);
        for _ in 0..50 {
            let (i, j) = (rng.gen_range(0..289), rng.gen_range(0..289));
            let mut cubes: Vec<[i64; 2]> = classes[i].cubes.iter().filter(|_| rng.gen_bool(0.5)).copied().collect();
            if i != j {
                cubes.extend(classes[j].cubes.iter().filter(|_| rng.gen_bool(0.5)));
            }
            assert!(dilate_components(&cubes, 4).iter().all(|&s| s <= 2));
        }
    }

    #[test]
    fn family_ratio_examples() {
        let x: Vec<usize> = (0..10).collect();
        let f = family_4_2_b(&x, 10, 4.0, 4, ReprChoice::Auto, 0).unwrap();
        assert_eq!(f.ratio, (3, 10));
        assert_eq!(f.members, 120);
        let whole = family_4_2_b(&x, 10, 10.0, 11, ReprChoice::Auto, 0).unwrap();
        assert_eq!(whole.members, 1);
        assert_eq!(whole.ratio, (1, 1));
        assert!(matches!(
            family_4_2_b(&x, 8, 4.0, 3, ReprChoice::Auto, 0),
            Err(Error::KBelowThreshold(_))
        ));
        let big: Vec<usize> = (0..200).collect();
        let imp = family_4_2_b(&big, 150, 40.0, 30, ReprChoice::Auto, 1).unwrap();
        assert!(matches!(imp.repr, FamilyRepr::Implicit { size: 29 }));
        assert_eq!(imp.spot_checked, SPOT_CHECKS);
    }

    #[test]
    fn verify_trivial_and_adversarial() {
        let fam = CoveringFamily::trivial(16);
        let all: Vec<usize> = (0..16).collect();
        assert!(verify_covering(&fam, &all, 0, 1).pass);
        // two translates of a 1-cell set on 4 cells miss cell 3
        let maps = vec![CellPermutation::identity(4), CellPermutation::transposition(4, 0, 1)];
        let bad = CoveringFamily::new(4, vec![0], maps, vec![1, 1]).unwrap();
        let v = verify_covering(&bad, &[0], 0, 1);
        assert!(!v.pass);
        assert_eq!(v.worst_count, 0);
        assert!(v.worst_cell == 2 || v.worst_cell == 3);
    }

    #[test]
    fn local_covering_examples() {
        let x: Vec<usize> = (0..6).collect();
        let toy = covering_4_2_a(6, &x, &[2]).unwrap();
        assert_eq!(toy.family.total(), 6);
        assert!(toy.family.counting().iter().all(|&v| v == 1));
        assert_eq!((toy.c1, toy.c2), (289, 2));
        let whole = covering_4_2_a(6, &x, &x).unwrap();
        assert_eq!(whole.family.total(), 1);
        let res = [16, 16];
        let xs: Vec<usize> = (0..256).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let size = rng.gen_range(1..200);
            let a: Vec<usize> = sample(&mut rng, 256, size).into_vec();
            let loc = covering_4_2_a(res[0] * res[1], &xs, &a).unwrap();
            assert!(verify_covering(&loc.family, &a, 289, 2).pass);
        }
    }

    #[test]
    fn global_covering_two_bands() {
        let res = [16, 16];
        let charts = band_charts(res, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<usize> = sample(&mut rng, 256, 26).into_vec();
        let g = covering_global(256, &charts, &a).unwrap();
        assert_eq!((g.c1, g.c2), (578, 8));
        assert!(verify_covering(&g.family, &a, g.c1, g.c2).pass);
        let spread = g.spreading.image(&a);
        for ch in &charts {
            let inside = spread.iter().filter(|c| ch.contains(c)).count();
            assert!(4 * inside > a.len());
        }
        let single = covering_global(256, &band_charts(res, 1).unwrap(), &a).unwrap();
        assert_eq!((single.c1, single.c2), (289, 4));
        assert!(matches!(
            covering_global(256, &band_charts(res, 4).unwrap(), &[1, 2]),
            Err(Error::SpreadingInfeasible(_))
        ));
    }

    #[test]
    fn transport_examples() {
        let lattice = [32, 32];
        let all: Vec<usize> = (0..1024).collect();
        let id = transport_4_2_c(&all, &[5], lattice).unwrap();
        assert_eq!(id.plans.len(), 1);
        assert!(id.plans[0].permutation.is_identity());
        // A: 600 cells in the left part, B: one distant cell on the right
        let a: Vec<usize> = (0..600).collect();
        let b = [31 * 32 + 31];
        let t = transport_4_2_c(&a, &b, lattice).unwrap();
        assert_eq!(t.plans.len(), 1);
        assert!(transport_covers(&t.plans, &a, &b));
        assert!(t.plans.iter().all(|p| p.fixes_outside_support()));
        assert!(matches!(
            transport_4_2_c(&a[..10], &b, lattice),
            Err(Error::TransportHypothesis { .. })
        ));
    }

    #[test]
    fn transport_near_case() {
        let lattice = [32, 32];
        let a: Vec<usize> = (0..600).collect();
        let probe = transport_4_2_c(&a, &[1023], lattice).unwrap();
        let target = probe
            .a1
            .iter()
            .map(|&c| coords(c, lattice))
            .map(|x| [x[0] + 4, x[1]])
            .find(|y| index(*y, lattice).is_some_and(|c| c >= 600))
            .expect("boundary cube");
        let b = [index(target, lattice).unwrap()];
        let t = transport_4_2_c(&a, &b, lattice).unwrap();
        assert!(transport_covers(&t.plans, &a, &b));
        let near: Vec<&CubeMove> = t.plans.iter().flat_map(|p| &p.moves).filter(|m| m.near).collect();
        assert_eq!(near.len(), 1);
        let (s, d) = (coords(near[0].from, lattice), coords(near[0].to, lattice));
        for &c in &near[0].corridor {
            let x = coords(c, lattice);
            assert!(sup_dist(&x, &s) <= 7 && sup_dist(&x, &d) <= 7);
        }
    }
}
