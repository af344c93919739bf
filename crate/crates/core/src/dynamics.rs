//! Skew products `T_{h,α}(t, y) = (t + α, h(t) y)` on `S¹ × T²`, sequential
//! systems, orbits, Birkhoff averages and the strict-ergodicity diagnostics.
//!
//! The diagnostics are one-sided witnesses: [`minimality_diagnostic`] checks
//! membership in a single `A(U)`, and [`unique_ergodicity_diagnostic`] in a
//! single `B(F, ε)`, at the grid resolution given.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::hofer::NormalizedHamiltonian;
use crate::phase::{fiber_sup, torus_distance, wrap, wrap2, CellMap, CircleCoord, Observable, SmoothMap, TorusGrid};
use crate::{Error, Result};

/// Default cap on orbit lengths.
pub const DEFAULT_ORBIT_CAP: usize = 1_000_000;

/// A point `(t, y)` of `S¹ × T²`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Point {
    pub t: f64,
    pub y: [f64; 2],
}

impl Point {
    pub fn new(t: f64, y: [f64; 2]) -> Self {
        Point {
            t: wrap(t),
            y: wrap2(y),
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        crate::phase::periodic_diff(self.t, other.t)
            .abs()
            .max(torus_distance(self.y, other.y))
    }
}

/// Pointwise description of a loop `t ↦ h(t)` of fiber maps.
pub trait LoopMap: Send + Sync {
    fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2];
    fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2];
    /// `Some((rate, offset))` when `h(t) y = y + t·rate + offset`.
    fn translation(&self) -> Option<([f64; 2], [f64; 2])> {
        None
    }
}

struct IdentityLoop;

impl LoopMap for IdentityLoop {
    fn apply(&self, _t: f64, y: [f64; 2]) -> [f64; 2] {
        y
    }
    fn apply_inverse(&self, _t: f64, y: [f64; 2]) -> [f64; 2] {
        y
    }
    fn translation(&self) -> Option<([f64; 2], [f64; 2])> {
        Some(([0.0, 0.0], [0.0, 0.0]))
    }
}

struct TranslationLoop {
    rate: [f64; 2],
    offset: [f64; 2],
}

impl LoopMap for TranslationLoop {
    fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let t = wrap(t);
        wrap2([
            y[0] + t * self.rate[0] + self.offset[0],
            y[1] + t * self.rate[1] + self.offset[1],
        ])
    }
    fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let t = wrap(t);
        wrap2([
            y[0] - t * self.rate[0] - self.offset[0],
            y[1] - t * self.rate[1] - self.offset[1],
        ])
    }
    fn translation(&self) -> Option<([f64; 2], [f64; 2])> {
        Some((self.rate, self.offset))
    }
}

struct FnLoop<F, G> {
    forward: F,
    inverse: G,
}

impl<F, G> LoopMap for FnLoop<F, G>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync,
    G: Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync,
{
    fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        wrap2((self.forward)(t, y))
    }
    fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        wrap2((self.inverse)(t, y))
    }
}

/// `h(t) = g(t + α)⁻¹ g(t)`.
struct CoboundaryLoop {
    g: Arc<dyn LoopMap>,
    alpha: f64,
}

impl LoopMap for CoboundaryLoop {
    fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.g.apply_inverse(t + self.alpha, self.g.apply(t, y))
    }
    fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.g.apply_inverse(t, self.g.apply(t + self.alpha, y))
    }
}

/// A loop `h: S¹ → G` of fiber maps, optionally carrying the normalized
/// Hamiltonian generating it. The homotopy class is a free-form tag.
#[derive(Clone)]
pub struct HamiltonianLoop {
    map: Arc<dyn LoopMap>,
    generator: Option<NormalizedHamiltonian>,
    homotopy_tag: String,
    period_divisor: Option<(u64, u64)>,
}

impl fmt::Debug for HamiltonianLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianLoop")
            .field("homotopy_tag", &self.homotopy_tag)
            .field("has_generator", &self.generator.is_some())
            .field("period_divisor", &self.period_divisor)
            .finish()
    }
}

impl HamiltonianLoop {
    pub fn identity() -> Self {
        HamiltonianLoop {
            map: Arc::new(IdentityLoop),
            generator: None,
            homotopy_tag: "trivial".into(),
            period_divisor: None,
        }
    }

    /// `h(t) y = y + t·rate + offset`, with `t` taken in `[0, 1)`.
    pub fn translation(rate: [f64; 2], offset: [f64; 2], tag: impl Into<String>) -> Self {
        HamiltonianLoop {
            map: Arc::new(TranslationLoop { rate, offset }),
            generator: None,
            homotopy_tag: tag.into(),
            period_divisor: None,
        }
    }

    pub fn from_fn<F, G>(forward: F, inverse: G, tag: impl Into<String>) -> Self
    where
        F: Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        G: Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    {
        HamiltonianLoop {
            map: Arc::new(FnLoop { forward, inverse }),
            generator: None,
            homotopy_tag: tag.into(),
            period_divisor: None,
        }
    }

    /// The loop generated by `hamiltonian`, using its exact flow where the
    /// catalog provides one and RK4 with `steps` per unit time otherwise.
    pub fn from_hamiltonian(hamiltonian: NormalizedHamiltonian, steps: usize) -> Self {
        let fwd = hamiltonian.clone();
        let inv = hamiltonian.clone();
        HamiltonianLoop {
            map: Arc::new(FnLoop {
                forward: move |t: f64, y| fwd.flow_point(wrap(t), y, steps),
                inverse: move |t: f64, y| inv.inverse_flow_point(wrap(t), y, steps),
            }),
            generator: Some(hamiltonian),
            homotopy_tag: "contractible".into(),
            period_divisor: None,
        }
    }

    /// `h(t) = g(t + α)⁻¹ g(t)`; the skew product `T_{h,α}` is then conjugate
    /// to the shift `S_α` through `(t, y) ↦ (t, g(t) y)`.
    pub fn coboundary(g: &HamiltonianLoop, alpha: f64) -> Self {
        HamiltonianLoop {
            map: Arc::new(CoboundaryLoop {
                g: g.map.clone(),
                alpha,
            }),
            generator: None,
            homotopy_tag: "contractible (coboundary)".into(),
            period_divisor: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.homotopy_tag = tag.into();
        self
    }

    pub fn with_period_divisor(mut self, p: u64, q: u64) -> Self {
        self.period_divisor = Some((p, q));
        self
    }

    pub fn homotopy_tag(&self) -> &str {
        &self.homotopy_tag
    }

    pub fn generator(&self) -> Option<&NormalizedHamiltonian> {
        self.generator.as_ref()
    }

    pub fn period_divisor(&self) -> Option<(u64, u64)> {
        self.period_divisor
    }

    pub fn translation_parameters(&self) -> Option<([f64; 2], [f64; 2])> {
        self.map.translation()
    }

    #[inline]
    pub fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.map.apply(t, y)
    }

    #[inline]
    pub fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.map.apply_inverse(t, y)
    }

    pub fn map_at(&self, t: CircleCoord) -> CellMap {
        let (a, b) = (self.map.clone(), self.map.clone());
        let t = t.value();
        CellMap::Smooth(SmoothMap::new(
            move |y| a.apply(t, y),
            move |y| b.apply_inverse(t, y),
        ))
    }

    /// `max_y d(h(0) y, y)` over the nodes of a `res` grid.
    pub fn identity_defect_at_zero(&self, res: [usize; 2]) -> f64 {
        self.defect_between(0.0, None, res)
    }

    /// `max_y d(h(t + r) y, h(t) y)` over the nodes of a `res` grid.
    pub fn period_defect(&self, t: f64, r: f64, res: [usize; 2]) -> f64 {
        self.defect_between(t + r, Some(t), res)
    }

    fn defect_between(&self, t1: f64, t2: Option<f64>, res: [usize; 2]) -> f64 {
        let mut worst = 0.0_f64;
        for i1 in 0..res[0] {
            for i2 in 0..res[1] {
                let y = [i1 as f64 / res[0] as f64, i2 as f64 / res[1] as f64];
                let a = self.apply(t1, y);
                let b = match t2 {
                    Some(t2) => self.apply(t2, y),
                    None => y,
                };
                worst = worst.max(torus_distance(a, b));
            }
        }
        worst
    }
}

/// The loop of torus translations `(y₁, y₂) ↦ (y₁ + t, y₂ + β)`.
pub fn furstenberg_loop(beta: f64) -> HamiltonianLoop {
    HamiltonianLoop::translation([1.0, 0.0], [0.0, beta], "torus-translation (non-contractible)")
}

/// `T_{h,α}(t, y) = (t + α, h(t) y)`.
#[derive(Clone, Debug)]
pub struct SkewProduct {
    alpha: CircleCoord,
    lp: HamiltonianLoop,
}

impl SkewProduct {
    pub fn new(alpha: impl Into<CircleCoord>, lp: HamiltonianLoop) -> Self {
        SkewProduct {
            alpha: alpha.into(),
            lp,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, HamiltonianLoop::identity())
    }

    /// The Furstenberg skew product on `T³`.
    pub fn furstenberg(alpha: f64, beta: f64) -> Self {
        Self::new(alpha, furstenberg_loop(beta))
    }

    /// The shift `S_α` conjugated by `(t, y) ↦ (t, g(t) y)`.
    pub fn conjugated_shift(g: &HamiltonianLoop, alpha: f64) -> Self {
        Self::new(alpha, HamiltonianLoop::coboundary(g, alpha))
    }

    pub fn alpha(&self) -> CircleCoord {
        self.alpha
    }

    pub fn loop_(&self) -> &HamiltonianLoop {
        &self.lp
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        Point {
            t: wrap(p.t + self.alpha.value()),
            y: self.lp.apply(p.t, p.y),
        }
    }

    pub fn apply_inverse(&self, p: Point) -> Point {
        let t = wrap(p.t - self.alpha.value());
        Point {
            t,
            y: self.lp.apply_inverse(t, p.y),
        }
    }

    /// `p, Tp, …, T^{N−1}p`.
    pub fn orbit(&self, p: Point, n: usize) -> Result<Vec<Point>> {
        self.orbit_with_cap(p, n, DEFAULT_ORBIT_CAP)
    }

    pub fn orbit_with_cap(&self, p: Point, n: usize, cap: usize) -> Result<Vec<Point>> {
        if n == 0 {
            return Err(Error::Precondition("orbit length must be at least 1".into()));
        }
        if n > cap {
            return Err(Error::OrbitTooLong { requested: n, cap });
        }
        let mut out = Vec::with_capacity(n);
        let mut q = p;
        out.push(q);
        for _ in 1..n {
            q = self.apply(q);
            out.push(q);
        }
        Ok(out)
    }

    /// `T^n p`.
    pub fn iterate(&self, p: Point, n: usize) -> Point {
        (0..n).fold(p, |q, _| self.apply(q))
    }

    /// `Σ_{k<N} F(T^k p)`.
    pub fn birkhoff_sum<O: Observable + ?Sized>(&self, obs: &O, p: Point, n: usize) -> f64 {
        let mut q = p;
        let mut s = 0.0;
        for k in 0..n {
            if k > 0 {
                q = self.apply(q);
            }
            s += obs.eval(q.t, q.y);
        }
        s
    }
}

/// `D_N = max_x |(1/N) Σ_{i<N} F(T^i x)|`, with `x` running over the time
/// nodes of `grid` and the fiber sup refined off the grid.
pub fn birkhoff_uniform_deviation<O: Observable + ?Sized>(
    skew: &SkewProduct,
    obs: &O,
    n: usize,
    grid: TorusGrid,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let inv_n = 1.0 / n as f64;
    let per_slot: Vec<f64> = (0..grid.res_t())
        .into_par_iter()
        .map(|j| {
            let t = grid.t_node(j);
            fiber_sup(
                |y| skew.birkhoff_sum(obs, Point::new(t, y), n) * inv_n,
                grid.res_y(),
            )
        })
        .collect();
    Ok(per_slot.into_iter().fold(0.0, f64::max))
}

/// Outcome of [`minimality_diagnostic`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum MinimalityVerdict {
    /// `∪_{i≤step} T^i U` meets every cell.
    Covered { step: usize },
    NotCovered { covered_cells: usize, total_cells: usize },
}

impl MinimalityVerdict {
    pub fn is_covered(&self) -> bool {
        matches!(self, MinimalityVerdict::Covered { .. })
    }
}

/// Index of the product cell `(slot, fiber cell)`.
pub fn product_cell(grid: &TorusGrid, slot: usize, cell: usize) -> usize {
    slot * grid.fiber_cells() + cell
}

pub fn cell_center(grid: &TorusGrid, product_cell: usize) -> Point {
    let slot = product_cell / grid.fiber_cells();
    let cell = product_cell % grid.fiber_cells();
    Point::new((slot as f64 + 0.5) / grid.res_t() as f64, grid.y_center(cell))
}

pub fn cell_of_point(grid: &TorusGrid, p: &Point) -> usize {
    product_cell(grid, grid.slot_of(p.t), grid.cell_of(p.y))
}

/// Tracks the centers of the cells of `u` under iteration of `skew` and
/// reports the first step at which the visited cells cover the grid.
pub fn minimality_diagnostic(
    skew: &SkewProduct,
    u: &[usize],
    grid: TorusGrid,
    max_iter: usize,
) -> Result<MinimalityVerdict> {
    if u.is_empty() {
        return Err(Error::Precondition("U must be non-empty".into()));
    }
    let total = grid.product_cells();
    if let Some(&bad) = u.iter().find(|&&c| c >= total) {
        return Err(Error::Precondition(format!("cell {bad} outside the grid")));
    }
    let mut seen = vec![false; total];
    let mut covered = 0usize;
    let mut points: Vec<Point> = u.iter().map(|&c| cell_center(&grid, c)).collect();
    let mark = |pts: &[Point], seen: &mut Vec<bool>, covered: &mut usize| {
        for p in pts {
            let c = cell_of_point(&grid, p);
            if !seen[c] {
                seen[c] = true;
                *covered += 1;
            }
        }
    };
    mark(&points, &mut seen, &mut covered);
    if covered == total {
        return Ok(MinimalityVerdict::Covered { step: 0 });
    }
    for step in 1..=max_iter {
        points.par_iter_mut().for_each(|p| *p = skew.apply(*p));
        mark(&points, &mut seen, &mut covered);
        if covered == total {
            return Ok(MinimalityVerdict::Covered { step });
        }
    }
    Ok(MinimalityVerdict::NotCovered {
        covered_cells: covered,
        total_cells: total,
    })
}

/// Outcome of [`unique_ergodicity_diagnostic`].
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum ErgodicityVerdict {
    /// `D_n < ε`.
    Member { n: usize, deviation: f64 },
    Inconclusive { best_grid_deviation: f64 },
}

impl ErgodicityVerdict {
    pub fn is_member(&self) -> bool {
        matches!(self, ErgodicityVerdict::Member { .. })
    }
}

const UE_BLOCK: usize = 256;

/// Smallest `N ≤ n_max` with `D_N < ε`.
///
/// Running sums over the grid nodes screen candidate `N` (the node maximum
/// never exceeds `D_N`); each candidate is then confirmed with the refined
/// [`birkhoff_uniform_deviation`].
pub fn unique_ergodicity_diagnostic<O: Observable + ?Sized>(
    skew: &SkewProduct,
    obs: &O,
    eps: f64,
    n_max: usize,
    grid: TorusGrid,
) -> Result<ErgodicityVerdict> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    let cells = grid.fiber_cells();
    let mut state: Vec<(Point, f64)> = (0..grid.product_cells())
        .map(|k| (Point::new(grid.t_node(k / cells), grid.y_node(k % cells)), 0.0))
        .collect();
    let mut best = f64::INFINITY;
    let mut n_done = 0usize;
    while n_done < n_max {
        let block = UE_BLOCK.min(n_max - n_done);
        let start = n_done;
        // per-point |average| after each step of the block
        let rows: Vec<Vec<f64>> = state
            .par_iter_mut()
            .map(|(p, s)| {
                let mut row = Vec::with_capacity(block);
                for b in 0..block {
                    let k = start + b;
                    if k > 0 {
                        *p = skew.apply(*p);
                    }
                    *s += obs.eval(p.t, p.y);
                    row.push((*s / (k + 1) as f64).abs());
                }
                row
            })
            .collect();
        for b in 0..block {
            let grid_max = rows.iter().fold(0.0_f64, |acc, r| acc.max(r[b]));
            best = best.min(grid_max);
            if grid_max < eps {
                let n = start + b + 1;
                let d = birkhoff_uniform_deviation(skew, obs, n, grid)?;
                if d < eps {
                    return Ok(ErgodicityVerdict::Member { n, deviation: d });
                }
            }
        }
        n_done += block;
    }
    Ok(ErgodicityVerdict::Inconclusive {
        best_grid_deviation: best,
    })
}

/// `T_i(t, y) = (t + α_i, g_i h(t) y)` for `i = 1, 2, …`.
#[derive(Clone, Debug)]
pub struct SequentialSystem {
    alphas: Vec<f64>,
    conjugators: Vec<CellMap>,
    base: HamiltonianLoop,
}

impl SequentialSystem {
    pub fn new(alphas: Vec<f64>, conjugators: Vec<CellMap>, base: HamiltonianLoop) -> Result<Self> {
        if alphas.len() != conjugators.len() {
            return Err(Error::UnderdeterminedSequence(format!(
                "{} rotation numbers but {} conjugators",
                alphas.len(),
                conjugators.len()
            )));
        }
        Ok(SequentialSystem {
            alphas,
            conjugators,
            base,
        })
    }

    /// `n` copies of a stationary skew product.
    pub fn stationary(skew: &SkewProduct, n: usize) -> Self {
        SequentialSystem {
            alphas: vec![skew.alpha().value(); n],
            conjugators: vec![CellMap::identity(); n],
            base: skew.loop_().clone(),
        }
    }

    /// Number of maps `T_1, …, T_len` defined.
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn base(&self) -> &HamiltonianLoop {
        &self.base
    }

    pub fn conjugators(&self) -> &[CellMap] {
        &self.conjugators
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `T_i p` for `1 ≤ i ≤ len`.
    pub fn step(&self, i: usize, p: Point) -> Point {
        let y = self.base.apply(p.t, p.y);
        Point {
            t: wrap(p.t + self.alphas[i - 1]),
            y: self.conjugators[i - 1].apply_point(y),
        }
    }

    /// `T^{(n)} p = T_n ∘ … ∘ T_1 p`; `T^{(0)}` is the identity.
    pub fn apply(&self, p: Point, n: usize) -> Result<Point> {
        if n > self.len() {
            return Err(Error::UnderdeterminedSequence(format!(
                "T^({n}) requested but only {} maps are defined",
                self.len()
            )));
        }
        Ok((1..=n).fold(p, |q, i| self.step(i, q)))
    }

    /// `φ_0 = id`, `φ_i = φ_{i−1} ∘ g_i⁻¹`, so that `φ_i⁻¹ φ_{i−1} = g_i`.
    pub fn conjugator_chain(&self) -> Vec<CellMap> {
        let mut chain = vec![CellMap::identity()];
        for g in &self.conjugators {
            let next = chain[chain.len() - 1].compose(&g.inverse());
            chain.push(next);
        }
        chain
    }
}

/// `T^{(n)} p` for a sequential system.
pub fn sequential_apply(system: &SequentialSystem, p: Point, n: usize) -> Result<Point> {
    system.apply(p, n)
}
