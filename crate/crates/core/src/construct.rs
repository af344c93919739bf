//! Conjugated shifts `φ⁻¹ S_α φ` with `φ(t, y) = (t, g(t) y)`: multi-target
//! averaging, fiberwise centering, the periodic loop `g(t) = h(Mt)` whose
//! fiber integrals are small, and the minimality / unique-ergodicity
//! conjugators with finite-stage certificates.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::averaging::{flatten_sup_samples, AveragingOperator, CoveringOracle, DEFAULT_MAX_ITER};
use crate::constants::GOLDEN;
use crate::covering::BandCoveringOracle;
use crate::dynamics::{minimality_diagnostic, product_cell, HamiltonianLoop, MinimalityVerdict, Point, SkewProduct};
use crate::phase::{wrap, wrap2, CellPermutation, Domain, ScalarField, TorusGrid};
use crate::{Error, Result};

/// Cap on the time subdivision `N` of the modulus-of-continuity step.
pub const MAX_SUBDIVISIONS: u64 = 1 << 16;

/// Default iteration cap for the certificates.
pub const CERTIFICATE_CAP: usize = 100_000;

const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Three-point Gauss–Legendre over consecutive breakpoints.
fn integrate_pieces<F: Fn(f64) -> f64>(breaks: &[f64], f: F) -> f64 {
    breaks
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            half * GL3.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>()
        })
        .sum()
}

fn sorted_breaks(mut b: Vec<f64>) -> Vec<f64> {
    b.push(0.0);
    b.push(1.0);
    b.retain(|x| (0.0..=1.0).contains(x));
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    b
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// A rational `num / den` in lowest terms, `den > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Rational {
    pub num: i64,
    pub den: u64,
}

impl Rational {
    pub fn new(num: i64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Precondition("zero denominator".into()));
        }
        let g = gcd(num.unsigned_abs(), den).max(1);
        Ok(Rational {
            num: num / g as i64,
            den: den / g,
        })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("not a rational: {s:?}"));
        match s.trim().split_once('/') {
            Some((p, q)) => Rational::new(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?),
            None => Rational::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

/// `S_k ∘ … ∘ S_1` with `‖S(H_i)‖ < ε` for every target.
pub fn multi_target_average<O: CoveringOracle + ?Sized>(
    hs: &[ScalarField],
    eps: f64,
    oracle: &O,
) -> Result<AveragingOperator> {
    let first = hs
        .first()
        .ok_or_else(|| Error::Precondition("no targets".into()))?;
    if hs.iter().any(|h| h.domain() != Domain::Fiber || h.grid().res_y() != first.grid().res_y()) {
        return Err(Error::DomainMismatch("targets must be fiber fields on one grid".into()));
    }
    let samples: Vec<&[f64]> = hs.iter().map(|h| h.samples()).collect();
    multi_target_average_samples(&samples, eps, oracle)
}

/// [`multi_target_average`] on raw samples.
pub fn multi_target_average_samples<O: CoveringOracle + ?Sized>(
    hs: &[&[f64]],
    eps: f64,
    oracle: &O,
) -> Result<AveragingOperator> {
    let universe = hs.first().map_or(0, |h| h.len());
    let mut s = AveragingOperator::identity(universe);
    for h in hs {
        let cur = s.apply_samples(h)?;
        if cur.iter().fold(0.0_f64, |a, v| a.max(v.abs())) < eps {
            continue;
        }
        let step = flatten_sup_samples(&cur, oracle, eps, DEFAULT_MAX_ITER)?;
        s = step.operator.compose(&s)?;
    }
    for (i, h) in hs.iter().enumerate() {
        let norm = s.apply_samples(h)?.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if norm >= eps {
            return Err(Error::BoundViolated {
                source_tag: "§5.1 step 1",
                detail: format!("target {i}: ‖S(H)‖ = {norm} ≥ {eps}"),
            });
        }
    }
    Ok(s)
}

/// `F′(t, y) = F(t, y) − ∫_Y F(t, z) dμ(z)`.
pub fn fiberwise_center(f: &ScalarField) -> ScalarField {
    match f.domain() {
        Domain::Fiber => f.normalize_zero_mean(),
        Domain::Product => {
            let means = f.fiber_means();
            let cells = f.grid().fiber_cells();
            let samples = f
                .samples()
                .iter()
                .enumerate()
                .map(|(k, v)| v - means[k / cells])
                .collect();
            ScalarField::from_samples(f.grid(), Domain::Product, samples).expect("same shape")
        }
    }
}

/// A loop `h: [0, 1] → G` with `h(0) = h(1) = id` up to the cell action.
#[derive(Clone, Debug)]
pub enum InnerLoop {
    Identity,
    /// `h(s)` = translation by `s·w`, `w` integral.
    Translation { w: [i64; 2] },
    /// `h(s) = g_j` on consecutive intervals of length `w_j / W`. The cell
    /// permutations stand in for smooth Hamiltonian realizations.
    Steps {
        grid: TorusGrid,
        maps: Vec<(CellPermutation, u64)>,
    },
}

impl InnerLoop {
    pub fn describe(&self) -> String {
        match self {
            InnerLoop::Identity => "identity".into(),
            InnerLoop::Translation { w } => format!("translation by s·({}, {})", w[0], w[1]),
            InnerLoop::Steps { maps, .. } => format!("{} cell permutations", maps.len()),
        }
    }

    fn step_index(maps: &[(CellPermutation, u64)], s: f64) -> usize {
        let total: u64 = maps.iter().map(|(_, w)| w).sum();
        let x = wrap(s) * total as f64;
        let mut acc = 0u64;
        for (j, (_, w)) in maps.iter().enumerate() {
            acc += w;
            if x < acc as f64 {
                return j;
            }
        }
        maps.len() - 1
    }

    fn cell_move(grid: &TorusGrid, y: [f64; 2], f: impl Fn(usize) -> usize) -> [f64; 2] {
        let y = wrap2(y);
        let c = grid.cell_of(y);
        let (a, b) = (grid.y_node(c), grid.y_node(f(c)));
        wrap2([b[0] + y[0] - a[0], b[1] + y[1] - a[1]])
    }

    pub fn apply(&self, s: f64, y: [f64; 2]) -> [f64; 2] {
        match self {
            InnerLoop::Identity => wrap2(y),
            InnerLoop::Translation { w } => wrap2([y[0] + s * w[0] as f64, y[1] + s * w[1] as f64]),
            InnerLoop::Steps { grid, maps } => {
                let g = &maps[Self::step_index(maps, s)].0;
                Self::cell_move(grid, y, |c| g.apply(c))
            }
        }
    }

    pub fn apply_inverse(&self, s: f64, y: [f64; 2]) -> [f64; 2] {
        match self {
            InnerLoop::Identity => wrap2(y),
            InnerLoop::Translation { w } => wrap2([y[0] - s * w[0] as f64, y[1] - s * w[1] as f64]),
            InnerLoop::Steps { grid, maps } => {
                let g = &maps[Self::step_index(maps, s)].0;
                Self::cell_move(grid, y, |c| g.apply_inverse(c))
            }
        }
    }

    /// Values of `s` where `s ↦ H(h(s)⁻¹ y)` may lose smoothness, for `y` on
    /// the nodes of a grid with fiber resolution `res`.
    pub fn breakpoints(&self, res: [usize; 2]) -> Vec<f64> {
        match self {
            InnerLoop::Identity => Vec::new(),
            InnerLoop::Translation { w } => {
                let mut out = Vec::new();
                for k in 0..2 {
                    let n = w[k].unsigned_abs() * res[k] as u64;
                    out.extend((1..n).map(|m| m as f64 / n as f64));
                }
                out
            }
            InnerLoop::Steps { maps, .. } => {
                let total: u64 = maps.iter().map(|(_, w)| w).sum();
                let mut acc = 0;
                maps.iter()
                    .map(|(_, w)| {
                        acc += w;
                        acc as f64 / total as f64
                    })
                    .collect()
            }
        }
    }

    /// `∫₀¹ H(h(s)⁻¹ y) ds` at every node, for the bilinear interpolant of a
    /// fiber field.
    pub fn average(&self, h: &ScalarField) -> Vec<f64> {
        let grid = h.grid();
        match self {
            InnerLoop::Identity => h.samples().to_vec(),
            InnerLoop::Steps { maps, .. } => {
                let total: f64 = maps.iter().map(|(_, w)| *w as f64).sum();
                (0..grid.fiber_cells())
                    .into_par_iter()
                    .map(|c| {
                        maps.iter()
                            .map(|(g, w)| *w as f64 * h.samples()[g.apply_inverse(c)])
                            .sum::<f64>()
                            / total
                    })
                    .collect()
            }
            InnerLoop::Translation { .. } => {
                let breaks = sorted_breaks(self.breakpoints(grid.res_y()));
                (0..grid.fiber_cells())
                    .into_par_iter()
                    .map(|c| {
                        let y = grid.y_node(c);
                        integrate_pieces(&breaks, |s| h.value_at(0.0, self.apply_inverse(s, y)))
                    })
                    .collect()
            }
        }
    }
}

/// Intermediate bounds of the time-discretized construction.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Property21AReport {
    pub eps: f64,
    /// Lipschitz constant in `t` of the interpolated field.
    pub lipschitz: f64,
    /// `N`, with `|F(t′, y) − F(t″, y)| < ε/9` for `|t′ − t″| < 1/N`.
    pub n: u64,
    pub m: u64,
    pub inner: String,
    /// `max_{i, y} |∫ F(p_i, h(s)⁻¹ y) ds|`, `p_i = i/N`.
    pub step3_max: f64,
    pub step3_bound: f64,
    /// `max_{i, y} |J_i(y)|`.
    pub j_max: f64,
    /// `ε / (3M)`.
    pub j_bound: f64,
    /// `max_y (|I(y)| − ε/3 − Σ_i |J_i(y)|)`, non-positive when the
    /// bookkeeping holds.
    pub bookkeeping_slack: f64,
    /// `max_y |I(y)|` at the grid nodes.
    pub i_max: f64,
}

/// `g(t) = h(Mt)`, with `M` a multiple of the denominator of `r`, so that
/// `g(t + r) = g(t)`.
#[derive(Clone, Debug)]
pub struct PeriodicLoop {
    pub inner: Arc<InnerLoop>,
    pub m: u64,
    pub r: Rational,
    /// `lcm(M, den r, base res_t)`: the time grid on which `(ii)` is exact.
    pub res_t: usize,
    pub report: Option<Property21AReport>,
}

impl PeriodicLoop {
    pub fn new(inner: InnerLoop, m: u64, r: Rational, base_res_t: usize) -> Result<Self> {
        if m == 0 || m % r.den != 0 {
            return Err(Error::Precondition(format!("M = {m} is not a multiple of {}", r.den)));
        }
        let res_t = lcm(lcm(m, r.den), base_res_t as u64) as usize;
        Ok(PeriodicLoop {
            inner: Arc::new(inner),
            m,
            r,
            res_t,
            report: None,
        })
    }

    pub fn phase(&self, t: f64) -> f64 {
        wrap(self.m as f64 * wrap(t))
    }

    pub fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.inner.apply(self.phase(t), y)
    }

    pub fn apply_inverse(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.inner.apply_inverse(self.phase(t), y)
    }

    /// Exact phase `frac(M j / res_t)` at the node `j / res_t`.
    pub fn node_phase(&self, j: usize) -> f64 {
        let n = self.res_t as u64;
        ((self.m % n) * (j as u64 % n) % n) as f64 / n as f64
    }

    pub fn apply_at_node(&self, j: usize, y: [f64; 2]) -> [f64; 2] {
        self.inner.apply(self.node_phase(j), y)
    }

    /// Node index of `j / res_t + r`.
    pub fn shifted_node(&self, j: usize) -> usize {
        let n = self.res_t as i64;
        let shift = self.r.num * (n / self.r.den as i64);
        (j as i64 + shift).rem_euclid(n) as usize
    }

    /// `g(t + r) = g(t)` at every node, by integer arithmetic.
    pub fn period_exact(&self) -> bool {
        (0..self.res_t).all(|j| self.node_phase(j).to_bits() == self.node_phase(self.shifted_node(j)).to_bits())
    }

    pub fn to_hamiltonian_loop(&self) -> HamiltonianLoop {
        let (a, b) = (self.clone(), self.clone());
        HamiltonianLoop::from_fn(
            move |t, y| a.apply(t, y),
            move |t, y| b.apply_inverse(t, y),
            format!("h(Mt), M = {}, {}", self.m, self.inner.describe()),
        )
        .with_period_divisor(self.r.num.unsigned_abs(), self.r.den)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("ε must be positive, got {eps}")))
    }
}

/// Node-wise inner averages `A_j(y) = ∫ F(t_j, h(s)⁻¹ y) ds`; `A(t, y)` is
/// their linear interpolation in `t`.
fn node_averages(f: &ScalarField, inner: &InnerLoop) -> Vec<Vec<f64>> {
    (0..f.grid().res_t()).map(|j| inner.average(&f.fiber_field(j))).collect()
}

fn interp_t(a: &[Vec<f64>], t: f64, c: usize) -> f64 {
    let n = a.len();
    let x = wrap(t) * n as f64;
    let j0 = (x.floor() as usize).min(n - 1);
    let w = x - j0 as f64;
    let lo = a[j0][c];
    if w == 0.0 {
        lo
    } else {
        lo + w * (a[(j0 + 1) % n][c] - lo)
    }
}

/// Loop `g` with `|∫₀¹ F(t, g(t)⁻¹ y) dt| < ε` at every grid node and
/// `g(t + r) = g(t)`. `F` must be fiberwise centered.
pub fn loop_for_property_21a(f: &ScalarField, eps: f64, r: Rational) -> Result<PeriodicLoop> {
    let oracle = BandCoveringOracle::new(f.grid().res_y(), 1)?;
    loop_for_property_21a_with(f, eps, r, &oracle, MAX_SUBDIVISIONS)
}

/// [`loop_for_property_21a`] with an explicit covering oracle for the
/// averaging fallback and a cap on `N`.
pub fn loop_for_property_21a_with<O: CoveringOracle + ?Sized>(
    f: &ScalarField,
    eps: f64,
    r: Rational,
    oracle: &O,
    max_subdivisions: u64,
) -> Result<PeriodicLoop> {
    check_eps(eps)?;
    if f.domain() != Domain::Product {
        return Err(Error::DomainMismatch("F must live on S¹ × Y".into()));
    }
    let grid = f.grid();
    let (res_t, cells) = (grid.res_t(), grid.fiber_cells());
    let scale = f.sup_norm().max(1e-300);
    if f.fiber_means().iter().any(|m| m.abs() > 1e-12 * scale.max(1.0)) {
        return Err(Error::NotNormalized("F is not fiberwise centered".into()));
    }

    // Modulus of continuity of the piecewise-linear interpolant in t.
    let omega = (0..res_t)
        .into_par_iter()
        .map(|j| {
            let (a, b) = (f.fiber(j), f.fiber((j + 1) % res_t));
            a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        })
        .reduce(|| 0.0, f64::max);
    let lipschitz = omega * res_t as f64;
    let n = (9.0 * lipschitz / eps).floor() as u64 + 1;
    if n > max_subdivisions {
        return Err(Error::GridTooCoarse(format!(
            "N = {n} exceeds {max_subdivisions} for ε = {eps}"
        )));
    }
    let m = (n / r.den + 1) * r.den;

    // Step 3: an inner loop h with small averages at p_i = i/N.
    let step3_bound = eps / 9.0;
    let step3_of = |a: &[Vec<f64>]| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let t = i as f64 / n as f64;
                (0..cells).fold(0.0_f64, |acc, c| acc.max(interp_t(a, t, c).abs()))
            })
            .reduce(|| 0.0, f64::max)
    };
    let mut candidates = vec![
        InnerLoop::Identity,
        InnerLoop::Translation { w: [1, 0] },
        InnerLoop::Translation { w: [0, 1] },
    ];
    let mut chosen = None;
    while let Some(inner) = candidates.first().cloned() {
        candidates.remove(0);
        let a = node_averages(f, &inner);
        let s3 = step3_of(&a);
        if s3 < step3_bound {
            chosen = Some((inner, a, s3));
            break;
        }
    }
    let (inner, a, step3_max) = match chosen {
        Some(found) => found,
        None => {
            let fibers: Vec<Vec<f64>> = (0..res_t).map(|j| f.fiber(j).iter().map(|v| v / scale).collect()).collect();
            let refs: Vec<&[f64]> = fibers.iter().map(|v| v.as_slice()).collect();
            let s = multi_target_average_samples(&refs, step3_bound / scale, oracle)?.expand()?;
            let inner = InnerLoop::Steps {
                grid,
                maps: s.stages().first().cloned().unwrap_or_else(|| vec![(CellPermutation::identity(cells), 1)]),
            };
            let a = node_averages(f, &inner);
            let s3 = step3_of(&a);
            if s3 >= step3_bound {
                return Err(Error::BoundViolated {
                    source_tag: "§5.1 step 3",
                    detail: format!("max |∫F(p_i, h⁻¹y)| = {s3} ≥ ε/9 = {step3_bound}"),
                });
            }
            (inner, a, s3)
        }
    };

    let mut g = PeriodicLoop::new(inner, m, r, res_t)?;

    // Step 4: J_i = (1/M) ∫ F(q_i, h(s)⁻¹ y) ds and the integral I(y).
    let j_bound = eps / (3.0 * m as f64);
    let mut breaks: Vec<f64> = (1..res_t).map(|k| k as f64 / res_t as f64).collect();
    let inner_breaks = sorted_breaks(g.inner.breakpoints(grid.res_y()));
    for i in 0..m {
        breaks.extend(inner_breaks.iter().map(|b| (i as f64 + b) / m as f64));
    }
    let breaks = sorted_breaks(breaks);
    let per_node: Vec<(f64, f64, f64)> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let mut j_max = 0.0_f64;
            let mut j_sum = 0.0;
            for i in 0..m {
                let j = interp_t(&a, i as f64 / m as f64, c).abs() / m as f64;
                j_max = j_max.max(j);
                j_sum += j;
            }
            let y = grid.y_node(c);
            let integral = integrate_pieces(&breaks, |t| f.value_at(t, g.apply_inverse(t, y)));
            (j_max, j_sum, integral.abs())
        })
        .collect();
    let j_max = per_node.iter().fold(0.0_f64, |acc, p| acc.max(p.0));
    let bookkeeping_slack = per_node
        .iter()
        .map(|&(_, s, i)| i - eps / 3.0 - s)
        .fold(f64::NEG_INFINITY, f64::max);
    let i_max = per_node.iter().fold(0.0_f64, |acc, p| acc.max(p.2));
    let report = Property21AReport {
        eps,
        lipschitz,
        n,
        m,
        inner: g.inner.describe(),
        step3_max,
        step3_bound,
        j_max,
        j_bound,
        bookkeeping_slack,
        i_max,
    };
    if j_max >= j_bound {
        return Err(Error::BoundViolated {
            source_tag: "§5.1 step 4",
            detail: format!("|J_i| = {j_max} ≥ ε/(3M) = {j_bound}"),
        });
    }
    if bookkeeping_slack > 1e-12 {
        return Err(Error::BoundViolated {
            source_tag: "§5.1 step 4",
            detail: format!("I exceeds ε/3 + Σ|J_i| by {bookkeeping_slack}"),
        });
    }
    if i_max >= eps {
        return Err(Error::BoundViolated {
            source_tag: "Property 2.1.A(i)",
            detail: format!("max |I(y)| = {i_max} ≥ ε = {eps}"),
        });
    }
    if !g.period_exact() {
        return Err(Error::BoundViolated {
            source_tag: "Property 2.1.A(ii)",
            detail: "g(t + r) ≠ g(t) at a node".into(),
        });
    }
    g.report = Some(report);
    Ok(g)
}

/// `φ⁻¹ ∘ S_α ∘ φ` with `φ(t, y) = (t, g(t) y)`.
#[derive(Clone, Debug)]
pub struct ConjugatedShift {
    pub g: PeriodicLoop,
    pub alpha: f64,
}

impl ConjugatedShift {
    pub fn new(g: PeriodicLoop, alpha: f64) -> Self {
        ConjugatedShift { g, alpha }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        ConjugatedShift {
            g: self.g.clone(),
            alpha,
        }
    }

    pub fn phi(&self, p: Point) -> Point {
        Point::new(p.t, self.g.apply(p.t, p.y))
    }

    pub fn phi_inverse(&self, p: Point) -> Point {
        Point::new(p.t, self.g.apply_inverse(p.t, p.y))
    }

    pub fn apply(&self, p: Point) -> Point {
        let q = self.phi(p);
        self.phi_inverse(Point::new(q.t + self.alpha, q.y))
    }

    pub fn skew(&self) -> SkewProduct {
        SkewProduct::conjugated_shift(&self.g.to_hamiltonian_loop(), self.alpha)
    }

    /// `φ ∘ S_r = S_r ∘ φ` at the nodes of the loop's time grid.
    pub fn commutes_with_shift(&self) -> bool {
        self.g.period_exact()
    }
}

/// Coverage of `Y` by `{g_t(V)}_{t ∈ Δ}`, counted on fiber cells.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SweepCertificate {
    pub covered_cells: usize,
    pub total_cells: usize,
    pub time_samples: usize,
}

impl SweepCertificate {
    pub fn covers(&self) -> bool {
        self.covered_cells == self.total_cells
    }
}

/// Splits a product cell set as `Δ × V` with `Δ` a cyclic run of slots.
pub fn split_product(grid: &TorusGrid, u: &[usize]) -> Result<((usize, usize), Vec<usize>)> {
    let cells = grid.fiber_cells();
    let res_t = grid.res_t();
    let mut slots = vec![false; res_t];
    let mut fiber = vec![false; cells];
    for &p in u {
        if p >= grid.product_cells() {
            return Err(Error::Precondition(format!("cell {p} outside the grid")));
        }
        slots[p / cells] = true;
        fiber[p % cells] = true;
    }
    let n_slots = slots.iter().filter(|&&s| s).count();
    let v: Vec<usize> = (0..cells).filter(|&c| fiber[c]).collect();
    let mut uniq = u.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if v.is_empty() || uniq.len() != n_slots * v.len() {
        return Err(Error::Precondition("U must split as Δ × V".into()));
    }
    let start = if n_slots == res_t {
        0
    } else {
        (0..res_t)
            .find(|&j| slots[j] && !slots[(j + res_t - 1) % res_t])
            .expect("a proper non-empty run has a start")
    };
    if (0..n_slots).any(|k| !slots[(start + k) % res_t]) {
        return Err(Error::Precondition("Δ must be an interval".into()));
    }
    Ok(((start, n_slots), v))
}

fn sweep(g: &PeriodicLoop, grid: &TorusGrid, delta: (usize, usize), v: &[usize]) -> SweepCertificate {
    let t0 = delta.0 as f64 / grid.res_t() as f64;
    let len = delta.1 as f64 / grid.res_t() as f64;
    let speed = match &*g.inner {
        InnerLoop::Translation { w } => (0..2)
            .map(|k| w[k].unsigned_abs() as f64 * grid.res_y()[k] as f64)
            .fold(1.0, f64::max),
        _ => grid.res_y().iter().copied().max().unwrap_or(1) as f64,
    };
    let samples = (2.0 * g.m as f64 * len * speed).ceil() as usize + 1;
    let covered: Vec<bool> = (0..samples)
        .into_par_iter()
        .fold(
            || vec![false; grid.fiber_cells()],
            |mut acc, k| {
                let t = t0 + len * k as f64 / samples as f64;
                for &c in v {
                    acc[grid.cell_of(g.apply(t, grid.y_center(c)))] = true;
                }
                acc
            },
        )
        .reduce(
            || vec![false; grid.fiber_cells()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                a
            },
        );
    SweepCertificate {
        covered_cells: covered.iter().filter(|&&c| c).count(),
        total_cells: grid.fiber_cells(),
        time_samples: samples,
    }
}

/// A translation loop `g(t) = frac(Mt)·w`, periodic with period `r`, whose
/// images `{g_t(V)}_{t ∈ Δ}` cover `Y`. `α` defaults to the golden mean.
pub fn conjugator_for_minimality(
    grid: &TorusGrid,
    u: &[usize],
    r: Rational,
) -> Result<(ConjugatedShift, SweepCertificate)> {
    let (delta, v) = split_product(grid, u)?;
    let base = grid.res_t();
    if v.len() == grid.fiber_cells() {
        let g = PeriodicLoop::new(InnerLoop::Identity, r.den, r, base)?;
        let cert = sweep(&g, grid, delta, &v);
        return Ok((ConjugatedShift::new(g, GOLDEN), cert));
    }
    // Smallest multiple of den r with M |Δ| ≥ 1.
    let m = (base as u64).div_ceil(delta.1 as u64).div_ceil(r.den) * r.den;
    let reach = grid.res_y().iter().copied().max().unwrap_or(1) as i64;
    let mut best = SweepCertificate {
        covered_cells: 0,
        total_cells: grid.fiber_cells(),
        time_samples: 0,
    };
    for k in 0..=reach {
        for w in [[1, k], [k, 1]] {
            let g = PeriodicLoop::new(InnerLoop::Translation { w }, m, r, base)?;
            let cert = sweep(&g, grid, delta, &v);
            if cert.covers() {
                return Ok((ConjugatedShift::new(g, GOLDEN), cert));
            }
            if cert.covered_cells > best.covered_cells {
                best = cert;
            }
        }
    }
    Err(Error::SweepFailed(format!(
        "best translation sweep covers {}/{} cells",
        best.covered_cells, best.total_cells
    )))
}

/// Iterates `φ⁻¹ S_α φ` from `U` until every product cell is visited.
pub fn certify_minimality(
    cs: &ConjugatedShift,
    grid: TorusGrid,
    u: &[usize],
    max_iter: usize,
) -> Result<MinimalityVerdict> {
    minimality_diagnostic(&cs.skew(), u, grid, max_iter)
}

/// The cells `Δ × V` for slot range `[s0, s0 + ns)` and fiber cells `v`.
pub fn product_set(grid: &TorusGrid, slots: std::ops::Range<usize>, v: &[usize]) -> Vec<usize> {
    slots
        .flat_map(|j| v.iter().map(move |&c| product_cell(grid, j % grid.res_t(), c)))
        .collect()
}

/// Conjugator built from the periodic loop with `|I(y)| < ε/2`. `F` must
/// have zero mean; it is centered fiberwise first.
pub fn conjugator_for_unique_ergodicity(f: &ScalarField, eps: f64, r: Rational) -> Result<ConjugatedShift> {
    check_eps(eps)?;
    if f.mean().abs() > 1e-12 * f.sup_norm().max(1.0) {
        return Err(Error::NotNormalized(format!("mean {:e}", f.mean())));
    }
    let g = loop_for_property_21a(&fiberwise_center(f), eps / 2.0, r)?;
    Ok(ConjugatedShift::new(g, GOLDEN))
}

/// First `N` with `‖G_N‖ < ε`, where
/// `G_N = (1/N) Σ_{j<N} (F ∘ φ⁻¹) ∘ S_α^j`, sampled at the grid nodes of `F`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ErgodicCertificate {
    pub n: Option<usize>,
    pub g_norm: f64,
    /// `sup_y |I(y)|` from the loop construction.
    pub i_sup: f64,
}

pub fn certify_unique_ergodicity(
    cs: &ConjugatedShift,
    f: &ScalarField,
    eps: f64,
    max_n: usize,
) -> Result<ErgodicCertificate> {
    check_eps(eps)?;
    let grid = f.grid();
    let cells = grid.fiber_cells();
    let points: Vec<(f64, [f64; 2])> = (0..grid.product_cells())
        .map(|p| (grid.t_node(p / cells), grid.y_node(p % cells)))
        .collect();
    let mut sums = vec![0.0; points.len()];
    let mut best = f64::INFINITY;
    for n in 1..=max_n {
        let shift = (n - 1) as f64 * cs.alpha;
        sums.par_iter_mut().zip(&points).for_each(|(s, &(t, y))| {
            let tt = t + shift;
            *s += f.value_at(tt, cs.g.apply_inverse(tt, y));
        });
        let norm = sums.par_iter().map(|s| s.abs()).reduce(|| 0.0, f64::max) / n as f64;
        best = best.min(norm);
        if norm < eps {
            return Ok(ErgodicCertificate {
                n: Some(n),
                g_norm: norm,
                i_sup: cs.g.report.as_ref().map_or(f64::NAN, |r| r.i_max),
            });
        }
    }
    Ok(ErgodicCertificate {
        n: None,
        g_norm: best,
        i_sup: cs.g.report.as_ref().map_or(f64::NAN, |r| r.i_max),
    })
}
