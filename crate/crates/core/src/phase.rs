//! Discretized phase spaces: the circle, the 2-torus fiber `Y = T²`, sampled
//! scalar fields on `Y` and `S¹ × Y`, cell maps, norms and quadrature.
//!
//! Fields are sampled at grid nodes `(j / res_t, i1 / n1, i2 / n2)`, which are
//! the lower-left corners of the cells `[i/n, (i+1)/n)`. Off-grid values come
//! from periodic multilinear interpolation.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::{Error, Result};

/// Relative tolerance for zero-mean checks.
pub const ZERO_MEAN_RTOL: f64 = 1e-12;
/// Absolute tolerance for zero-mean checks of identically small fields.
pub const ZERO_MEAN_ATOL: f64 = 1e-15;

/// A point of the circle `R / Z`, stored by its representative in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct CircleCoord(f64);

impl CircleCoord {
    pub fn new(value: f64) -> Self {
        CircleCoord(wrap(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::ops::Add for CircleCoord {
    type Output = CircleCoord;
    fn add(self, rhs: CircleCoord) -> CircleCoord {
        CircleCoord::new(self.0 + rhs.0)
    }
}

impl std::ops::Sub for CircleCoord {
    type Output = CircleCoord;
    fn sub(self, rhs: CircleCoord) -> CircleCoord {
        CircleCoord::new(self.0 - rhs.0)
    }
}

impl From<f64> for CircleCoord {
    fn from(v: f64) -> Self {
        CircleCoord::new(v)
    }
}

/// Reduces `x` modulo 1 into `[0, 1)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn wrap2(y: [f64; 2]) -> [f64; 2] {
    [wrap(y[0]), wrap(y[1])]
}

/// Sampling grid on `S¹ × T²`. The fiber carries the normalized measure
/// `μ(Y) = 1`, so every fiber cell has measure `1 / (n1 · n2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TorusGrid {
    res_t: usize,
    res_y: [usize; 2],
}

impl TorusGrid {
    pub fn new(res_t: usize, res_y: [usize; 2]) -> Result<Self> {
        if res_t < 2 || res_y[0] < 2 || res_y[1] < 2 {
            return Err(Error::InvalidGrid(format!(
                "all resolutions must be >= 2, got res_t = {res_t}, res_y = {res_y:?}"
            )));
        }
        Ok(TorusGrid { res_t, res_y })
    }

    /// Cubic grid `n × n × n`.
    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, [n, n])
    }

    pub fn res_t(&self) -> usize {
        self.res_t
    }

    pub fn res_y(&self) -> [usize; 2] {
        self.res_y
    }

    pub fn fiber_cells(&self) -> usize {
        self.res_y[0] * self.res_y[1]
    }

    pub fn product_cells(&self) -> usize {
        self.res_t * self.fiber_cells()
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / self.fiber_cells() as f64
    }

    pub fn with_res_t(&self, res_t: usize) -> Result<Self> {
        Self::new(res_t, self.res_y)
    }

    pub fn t_node(&self, j: usize) -> f64 {
        j as f64 / self.res_t as f64
    }

    pub fn y_node(&self, cell: usize) -> [f64; 2] {
        let (i1, i2) = self.split_cell(cell);
        [
            i1 as f64 / self.res_y[0] as f64,
            i2 as f64 / self.res_y[1] as f64,
        ]
    }

    /// Center of the fiber cell `[i1/n1, (i1+1)/n1) × [i2/n2, (i2+1)/n2)`.
    pub fn y_center(&self, cell: usize) -> [f64; 2] {
        let (i1, i2) = self.split_cell(cell);
        [
            (i1 as f64 + 0.5) / self.res_y[0] as f64,
            (i2 as f64 + 0.5) / self.res_y[1] as f64,
        ]
    }

    pub fn split_cell(&self, cell: usize) -> (usize, usize) {
        (cell / self.res_y[1], cell % self.res_y[1])
    }

    pub fn join_cell(&self, i1: usize, i2: usize) -> usize {
        i1 * self.res_y[1] + i2
    }

    /// Fiber cell containing `y`.
    pub fn cell_of(&self, y: [f64; 2]) -> usize {
        let y = wrap2(y);
        let i1 = ((y[0] * self.res_y[0] as f64) as usize).min(self.res_y[0] - 1);
        let i2 = ((y[1] * self.res_y[1] as f64) as usize).min(self.res_y[1] - 1);
        self.join_cell(i1, i2)
    }

    /// Time slot containing `t`.
    pub fn slot_of(&self, t: f64) -> usize {
        ((wrap(t) * self.res_t as f64) as usize).min(self.res_t - 1)
    }
}

/// Which space a field lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    /// `Y`
    Fiber,
    /// `S¹ × Y`
    Product,
}

/// Real samples of a function on `Y` or `S¹ × Y`.
///
/// Product samples are laid out time-major: `samples[j * n1 * n2 + cell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    domain: Domain,
    samples: Vec<f64>,
}

impl ScalarField {
    pub fn from_samples(grid: TorusGrid, domain: Domain, samples: Vec<f64>) -> Result<Self> {
        let expected = match domain {
            Domain::Fiber => grid.fiber_cells(),
            Domain::Product => grid.product_cells(),
        };
        if samples.len() != expected {
            return Err(Error::DomainMismatch(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        if samples.is_empty() {
            return Err(Error::DomainMismatch("empty field".into()));
        }
        Ok(ScalarField {
            grid,
            domain,
            samples,
        })
    }

    pub fn zeros(grid: TorusGrid, domain: Domain) -> Self {
        let n = match domain {
            Domain::Fiber => grid.fiber_cells(),
            Domain::Product => grid.product_cells(),
        };
        ScalarField {
            grid,
            domain,
            samples: vec![0.0; n],
        }
    }

    pub fn from_fn_fiber<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn([f64; 2]) -> f64 + Sync,
    {
        let samples = (0..grid.fiber_cells())
            .into_par_iter()
            .map(|c| f(grid.y_node(c)))
            .collect();
        ScalarField {
            grid,
            domain: Domain::Fiber,
            samples,
        }
    }

    pub fn from_fn_product<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(f64, [f64; 2]) -> f64 + Sync,
    {
        let cells = grid.fiber_cells();
        let samples = (0..grid.product_cells())
            .into_par_iter()
            .map(|k| f(grid.t_node(k / cells), grid.y_node(k % cells)))
            .collect();
        ScalarField {
            grid,
            domain: Domain::Product,
            samples,
        }
    }

    /// Samples any observable on the product grid.
    pub fn sample<O: Observable + ?Sized>(grid: TorusGrid, obs: &O) -> Self {
        Self::from_fn_product(grid, |t, y| obs.eval(t, y))
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Measure-weighted average over the whole domain.
    pub fn mean(&self) -> f64 {
        // uniform weights on both domains; time slots carry 1/res_t each
        let sum: f64 = self.samples.iter().sum();
        sum / self.samples.len() as f64
    }

    pub fn normalize_zero_mean(&self) -> ScalarField {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero_mean(&self) -> bool {
        let m = self.mean().abs();
        let s = self.sup_norm();
        if s == 0.0 {
            m <= ZERO_MEAN_ATOL
        } else {
            m <= ZERO_MEAN_RTOL * s
        }
    }

    /// Rectangle rule over the time grid of `max_y |F(t, ·)|`.
    pub fn time_sup_integral(&self) -> Result<f64> {
        if self.domain != Domain::Product {
            return Err(Error::DomainMismatch(
                "time_sup_integral needs a field on S¹ × Y".into(),
            ));
        }
        let res_t = self.grid.res_t();
        let total: f64 = (0..res_t)
            .map(|j| {
                self.fiber(j)
                    .iter()
                    .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            })
            .sum();
        Ok(total / res_t as f64)
    }

    /// Samples of the `j`-th time slice (the whole field for fiber fields).
    pub fn fiber(&self, j: usize) -> &[f64] {
        match self.domain {
            Domain::Fiber => &self.samples,
            Domain::Product => {
                let c = self.grid.fiber_cells();
                &self.samples[j * c..(j + 1) * c]
            }
        }
    }

    pub fn fiber_field(&self, j: usize) -> ScalarField {
        ScalarField {
            grid: self.grid,
            domain: Domain::Fiber,
            samples: self.fiber(j).to_vec(),
        }
    }

    /// `∫_Y F(t_j, ·) dμ` for every time slot.
    pub fn fiber_means(&self) -> Vec<f64> {
        let slots = match self.domain {
            Domain::Fiber => 1,
            Domain::Product => self.grid.res_t(),
        };
        (0..slots)
            .map(|j| {
                let f = self.fiber(j);
                f.iter().sum::<f64>() / f.len() as f64
            })
            .collect()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            domain: self.domain,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Result<ScalarField> {
        if self.grid != other.grid || self.domain != other.domain {
            return Err(Error::DomainMismatch("fields live on different grids".into()));
        }
        Ok(ScalarField {
            grid: self.grid,
            domain: self.domain,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Periodic multilinear interpolation. Fiber fields ignore `t`.
    pub fn value_at(&self, t: f64, y: [f64; 2]) -> f64 {
        match self.domain {
            Domain::Fiber => bilinear(&self.samples, self.grid.res_y(), y),
            Domain::Product => {
                let res_t = self.grid.res_t();
                let x = wrap(t) * res_t as f64;
                let j0 = (x.floor() as usize).min(res_t - 1);
                let w = x - j0 as f64;
                let j1 = (j0 + 1) % res_t;
                let a = bilinear(self.fiber(j0), self.grid.res_y(), y);
                if w == 0.0 {
                    return a;
                }
                let b = bilinear(self.fiber(j1), self.grid.res_y(), y);
                a + w * (b - a)
            }
        }
    }

    /// `H ∘ g⁻¹` on every time slice, for a cell permutation `g`.
    pub fn push_forward(&self, g: &CellPermutation) -> Result<ScalarField> {
        let cells = self.grid.fiber_cells();
        if g.len() != cells {
            return Err(Error::DomainMismatch(format!(
                "permutation of {} cells on a grid of {cells}",
                g.len()
            )));
        }
        let mut out = vec![0.0; self.samples.len()];
        for (dst, src) in out.chunks_mut(cells).zip(self.samples.chunks(cells)) {
            for (i, &v) in src.iter().enumerate() {
                dst[g.apply(i)] = v;
            }
        }
        Ok(ScalarField {
            grid: self.grid,
            domain: self.domain,
            samples: out,
        })
    }
}

fn bilinear(samples: &[f64], res: [usize; 2], y: [f64; 2]) -> f64 {
    let [n1, n2] = res;
    let x1 = wrap(y[0]) * n1 as f64;
    let x2 = wrap(y[1]) * n2 as f64;
    let i1 = (x1.floor() as usize).min(n1 - 1);
    let i2 = (x2.floor() as usize).min(n2 - 1);
    let w1 = x1 - i1 as f64;
    let w2 = x2 - i2 as f64;
    let k1 = (i1 + 1) % n1;
    let k2 = (i2 + 1) % n2;
    let v00 = samples[i1 * n2 + i2];
    if w1 == 0.0 && w2 == 0.0 {
        return v00;
    }
    let v01 = samples[i1 * n2 + k2];
    let v10 = samples[k1 * n2 + i2];
    let v11 = samples[k1 * n2 + k2];
    let a = v00 + w2 * (v01 - v00);
    let b = v10 + w2 * (v11 - v10);
    a + w1 * (b - a)
}

/// Anything that can be evaluated at a point of `S¹ × T²`.
pub trait Observable: Sync {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64;
}

impl Observable for ScalarField {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        self.value_at(t, y)
    }
}

/// Wraps a closure as an [`Observable`].
pub struct FnObservable<F>(pub F);

impl<F: Fn(f64, [f64; 2]) -> f64 + Sync> Observable for FnObservable<F> {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        (self.0)(t, y)
    }
}

impl<O: Observable + ?Sized> Observable for &O {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        (**self).eval(t, y)
    }
}

impl<O: Observable + ?Sized + Send> Observable for Arc<O> {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        (**self).eval(t, y)
    }
}

const GOLDEN_SECTION: f64 = 0.618_033_988_749_894_9;

/// Sup over `Y` of `|f|`: the maximum over the grid nodes, refined by
/// coordinate-wise golden-section search around the best few nodes.
///
/// The result is never below the grid maximum.
pub fn fiber_sup<F: Fn([f64; 2]) -> f64>(f: F, res: [usize; 2]) -> f64 {
    let [n1, n2] = res;
    let mut best: Vec<(f64, [f64; 2], f64)> = Vec::with_capacity(4);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let y = [i1 as f64 / n1 as f64, i2 as f64 / n2 as f64];
            let v = f(y);
            let a = v.abs();
            if best.len() < 3 || a > best[best.len() - 1].0 {
                best.push((a, y, v));
                best.sort_by(|p, q| q.0.total_cmp(&p.0));
                best.truncate(3);
            }
        }
    }
    let mut sup = best.first().map(|b| b.0).unwrap_or(0.0);
    if sup == 0.0 {
        return 0.0;
    }
    let h = [1.0 / n1 as f64, 1.0 / n2 as f64];
    for &(_, y0, v0) in &best {
        let sign = if v0 >= 0.0 { 1.0 } else { -1.0 };
        let g = |y: [f64; 2]| sign * f(y);
        let mut y = y0;
        let mut val = g(y);
        for _round in 0..3 {
            for axis in 0..2 {
                let (x, fx) = golden_max(
                    |s| {
                        let mut p = y;
                        p[axis] = s;
                        g(p)
                    },
                    y[axis] - h[axis],
                    y[axis] + h[axis],
                );
                if fx > val {
                    val = fx;
                    y[axis] = x;
                }
            }
        }
        sup = sup.max(val.abs());
    }
    sup
}

fn golden_max<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - GOLDEN_SECTION * (b - a);
    let mut d = a + GOLDEN_SECTION * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    while b - a > 1e-11 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN_SECTION * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN_SECTION * (b - a);
            fd = g(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `∫₀¹ sup_y |F(t, y)| dt` by the rectangle rule on the grid's time nodes,
/// with the refined fiber sup.
pub fn observable_time_sup_integral<O: Observable + ?Sized>(obs: &O, grid: TorusGrid) -> f64 {
    let res_t = grid.res_t();
    let total: f64 = (0..res_t)
        .into_par_iter()
        .map(|j| {
            let t = grid.t_node(j);
            fiber_sup(|y| obs.eval(t, y), grid.res_y())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / res_t as f64
}

/// A bijection of fiber cell indices.
#[derive(Clone, PartialEq, Eq)]
pub struct CellPermutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl fmt::Debug for CellPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CellPermutation")
            .field("len", &self.forward.len())
            .field("moved", &self.support().len())
            .finish()
    }
}

impl CellPermutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (i, &j) in forward.iter().enumerate() {
            if j >= n {
                return Err(Error::NotABijection(format!("image {j} out of range {n}")));
            }
            if inverse[j] != usize::MAX {
                return Err(Error::NotABijection(format!("index {j} hit twice")));
            }
            inverse[j] = i;
        }
        Ok(CellPermutation { forward, inverse })
    }

    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        CellPermutation {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Cyclic translation of the `n1 × n2` cell grid by `(d1, d2)` cells.
    pub fn translation(res: [usize; 2], d: [i64; 2]) -> Self {
        let [n1, n2] = res;
        let forward = (0..n1 * n2)
            .map(|c| {
                let (i1, i2) = (c / n2, c % n2);
                let j1 = (i1 as i64 + d[0]).rem_euclid(n1 as i64) as usize;
                let j2 = (i2 as i64 + d[1]).rem_euclid(n2 as i64) as usize;
                j1 * n2 + j2
            })
            .collect();
        Self::new(forward).expect("translations are bijections")
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut forward: Vec<usize> = (0..n).collect();
        forward.swap(a, b);
        Self::new(forward).expect("transpositions are bijections")
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.forward[i]
    }

    #[inline]
    pub fn apply_inverse(&self, i: usize) -> usize {
        self.inverse[i]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> CellPermutation {
        CellPermutation {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &CellPermutation) -> CellPermutation {
        assert_eq!(self.len(), other.len(), "composing permutations of different sizes");
        let forward: Vec<usize> = other.forward.iter().map(|&j| self.forward[j]).collect();
        let inverse: Vec<usize> = self.inverse.iter().map(|&j| other.inverse[j]).collect();
        CellPermutation { forward, inverse }
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Cells not fixed by the permutation.
    pub fn support(&self) -> Vec<usize> {
        self.forward
            .iter()
            .enumerate()
            .filter(|(i, j)| i != *j)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sorted image of a cell set.
    pub fn image(&self, set: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = set.iter().map(|&i| self.forward[i]).collect();
        out.sort_unstable();
        out
    }
}

type PointFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// A continuous map of the torus given pointwise together with its inverse.
#[derive(Clone)]
pub struct SmoothMap {
    forward: PointFn,
    inverse: PointFn,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothMap")
    }
}

impl SmoothMap {
    pub fn new<F, G>(forward: F, inverse: G) -> Self
    where
        F: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        G: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    {
        SmoothMap {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        }
    }

    pub fn identity() -> Self {
        Self::new(|y| y, |y| y)
    }

    pub fn translation(v: [f64; 2]) -> Self {
        Self::new(
            move |y| wrap2([y[0] + v[0], y[1] + v[1]]),
            move |y| wrap2([y[0] - v[0], y[1] - v[1]]),
        )
    }

    pub fn apply(&self, y: [f64; 2]) -> [f64; 2] {
        wrap2((self.forward)(y))
    }

    pub fn apply_inverse(&self, y: [f64; 2]) -> [f64; 2] {
        wrap2((self.inverse)(y))
    }

    pub fn inverse(&self) -> SmoothMap {
        SmoothMap {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &SmoothMap) -> SmoothMap {
        let (f1, f2) = (self.forward.clone(), other.forward.clone());
        let (i1, i2) = (self.inverse.clone(), other.inverse.clone());
        SmoothMap {
            forward: Arc::new(move |y| f1(wrap2(f2(y)))),
            inverse: Arc::new(move |y| i2(wrap2(i1(y)))),
        }
    }

    /// Largest `|det Dφ − 1|` over the nodes of a `res` grid, with the
    /// Jacobian taken by central differences.
    pub fn jacobian_defect(&self, res: [usize; 2]) -> f64 {
        let h = 1e-6;
        let mut worst = 0.0_f64;
        for i1 in 0..res[0] {
            for i2 in 0..res[1] {
                let y = [i1 as f64 / res[0] as f64, i2 as f64 / res[1] as f64];
                let d = |axis: usize| {
                    let mut p = y;
                    let mut m = y;
                    p[axis] += h;
                    m[axis] -= h;
                    let (fp, fm) = ((self.forward)(p), (self.forward)(m));
                    [
                        periodic_diff(fp[0], fm[0]) / (2.0 * h),
                        periodic_diff(fp[1], fm[1]) / (2.0 * h),
                    ]
                };
                let c1 = d(0);
                let c2 = d(1);
                let det = c1[0] * c2[1] - c1[1] * c2[0];
                worst = worst.max((det - 1.0).abs());
            }
        }
        worst
    }
}

/// Difference `a − b` of two circle coordinates, taken in `(-1/2, 1/2]`.
#[inline]
pub fn periodic_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Sup-norm distance between two torus points, coordinates taken mod 1.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    periodic_diff(a[0], b[0])
        .abs()
        .max(periodic_diff(a[1], b[1]).abs())
}

/// A measure-preserving map of the fiber: either a permutation of grid cells
/// or a continuous map.
#[derive(Clone, Debug)]
pub enum CellMap {
    Permutation { perm: CellPermutation, res: [usize; 2] },
    Smooth(SmoothMap),
}

impl CellMap {
    pub fn identity() -> Self {
        CellMap::Smooth(SmoothMap::identity())
    }

    pub fn translation(v: [f64; 2]) -> Self {
        CellMap::Smooth(SmoothMap::translation(v))
    }

    pub fn permutation(perm: CellPermutation, res: [usize; 2]) -> Result<Self> {
        if perm.len() != res[0] * res[1] {
            return Err(Error::DomainMismatch(format!(
                "permutation of {} cells on a {res:?} grid",
                perm.len()
            )));
        }
        Ok(CellMap::Permutation { perm, res })
    }

    /// A cell permutation moves each cell rigidly onto its image cell.
    pub fn apply_point(&self, y: [f64; 2]) -> [f64; 2] {
        match self {
            CellMap::Smooth(m) => m.apply(y),
            CellMap::Permutation { perm, res } => move_rigidly(y, *res, |c| perm.apply(c)),
        }
    }

    pub fn apply_inverse_point(&self, y: [f64; 2]) -> [f64; 2] {
        match self {
            CellMap::Smooth(m) => m.apply_inverse(y),
            CellMap::Permutation { perm, res } => {
                move_rigidly(y, *res, |c| perm.apply_inverse(c))
            }
        }
    }

    pub fn inverse(&self) -> CellMap {
        match self {
            CellMap::Smooth(m) => CellMap::Smooth(m.inverse()),
            CellMap::Permutation { perm, res } => CellMap::Permutation {
                perm: perm.inverse(),
                res: *res,
            },
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &CellMap) -> CellMap {
        match (self, other) {
            (
                CellMap::Permutation { perm: a, res: ra },
                CellMap::Permutation { perm: b, res: rb },
            ) if ra == rb => CellMap::Permutation {
                perm: a.compose(b),
                res: *ra,
            },
            _ => {
                let (a, b) = (self.clone(), other.clone());
                let (ai, bi) = (self.clone(), other.clone());
                CellMap::Smooth(SmoothMap::new(
                    move |y| a.apply_point(b.apply_point(y)),
                    move |y| bi.apply_inverse_point(ai.apply_inverse_point(y)),
                ))
            }
        }
    }

    /// `H ∘ g⁻¹` for a fiber field `H`. Permutations act on cells exactly;
    /// continuous maps pull back through interpolation.
    pub fn push_forward_field(&self, field: &ScalarField) -> Result<ScalarField> {
        match self {
            CellMap::Permutation { perm, res } => {
                if *res != field.grid().res_y() {
                    return Err(Error::DomainMismatch("permutation grid differs from field grid".into()));
                }
                field.push_forward(perm)
            }
            CellMap::Smooth(m) => {
                let grid = field.grid();
                match field.domain() {
                    Domain::Fiber => Ok(ScalarField::from_fn_fiber(grid, |y| {
                        field.value_at(0.0, m.apply_inverse(y))
                    })),
                    Domain::Product => Ok(ScalarField::from_fn_product(grid, |t, y| {
                        field.value_at(t, m.apply_inverse(y))
                    })),
                }
            }
        }
    }
}

fn move_rigidly<F: Fn(usize) -> usize>(y: [f64; 2], res: [usize; 2], f: F) -> [f64; 2] {
    let [n1, n2] = res;
    let y = wrap2(y);
    let x1 = y[0] * n1 as f64;
    let x2 = y[1] * n2 as f64;
    let i1 = (x1.floor() as usize).min(n1 - 1);
    let i2 = (x2.floor() as usize).min(n2 - 1);
    let target = f(i1 * n2 + i2);
    let (j1, j2) = (target / n2, target % n2);
    wrap2([
        (j1 as f64 + (x1 - i1 as f64)) / n1 as f64,
        (j2 as f64 + (x2 - i2 as f64)) / n2 as f64,
    ])
}

/// `A · cos(2π(k_t t + k₁ y₁ + k₂ y₂) + φ)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigMonomial {
    pub amplitude: f64,
    pub freq_t: i32,
    pub freq_y: [i32; 2],
    pub phase: f64,
}

impl TrigMonomial {
    pub fn cos_y(amplitude: f64, freq_y: [i32; 2]) -> Self {
        TrigMonomial {
            amplitude,
            freq_t: 0,
            freq_y,
            phase: 0.0,
        }
    }

    #[inline]
    pub fn argument(&self, t: f64, y: [f64; 2]) -> f64 {
        TAU * (self.freq_t as f64 * t
            + self.freq_y[0] as f64 * y[0]
            + self.freq_y[1] as f64 * y[1])
            + self.phase
    }

    #[inline]
    pub fn value(&self, t: f64, y: [f64; 2]) -> f64 {
        self.amplitude * self.argument(t, y).cos()
    }

    pub fn gradient_y(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let s = -self.amplitude * self.argument(t, y).sin() * TAU;
        [s * self.freq_y[0] as f64, s * self.freq_y[1] as f64]
    }

    /// Monomials with a nonzero fiber frequency integrate to zero over `Y`.
    pub fn has_zero_fiber_mean(&self) -> bool {
        self.freq_y != [0, 0] || self.amplitude == 0.0
    }
}

/// Closed-form sample generators.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Catalog {
    Constant(f64),
    Trig(TrigMonomial),
    Sum(Vec<Catalog>),
    Product(Box<Catalog>, Box<Catalog>),
}

impl Catalog {
    pub fn value(&self, t: f64, y: [f64; 2]) -> f64 {
        match self {
            Catalog::Constant(c) => *c,
            Catalog::Trig(m) => m.value(t, y),
            Catalog::Sum(parts) => parts.iter().map(|p| p.value(t, y)).sum(),
            Catalog::Product(a, b) => a.value(t, y) * b.value(t, y),
        }
    }

    pub fn gradient_y(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        match self {
            Catalog::Constant(_) => [0.0, 0.0],
            Catalog::Trig(m) => m.gradient_y(t, y),
            Catalog::Sum(parts) => parts.iter().fold([0.0, 0.0], |acc, p| {
                let g = p.gradient_y(t, y);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
            Catalog::Product(a, b) => {
                let (va, vb) = (a.value(t, y), b.value(t, y));
                let (ga, gb) = (a.gradient_y(t, y), b.gradient_y(t, y));
                [ga[0] * vb + va * gb[0], ga[1] * vb + va * gb[1]]
            }
        }
    }

    /// True when every term provably integrates to zero over each fiber.
    pub fn has_zero_fiber_mean(&self) -> bool {
        match self {
            Catalog::Constant(c) => *c == 0.0,
            Catalog::Trig(m) => m.has_zero_fiber_mean(),
            Catalog::Sum(parts) => parts.iter().all(Catalog::has_zero_fiber_mean),
            Catalog::Product(..) => false,
        }
    }
}

impl Observable for Catalog {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        self.value(t, y)
    }
}
