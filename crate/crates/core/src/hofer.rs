//! Normalized Hamiltonians on `S¹ × T²`, their flows, the loop calculus
//! (composition, inversion) and Hofer length.
//!
//! With the form `dy₁ ∧ dy₂` the Hamiltonian vector field is
//! `X_H = (∂H/∂y₂, −∂H/∂y₁)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::SkewProduct;
use crate::phase::{
    fiber_sup, observable_time_sup_integral, periodic_diff, torus_distance, wrap2, Catalog, CellMap, Domain, Observable,
    ScalarField, SmoothMap, TorusGrid, TrigMonomial,
};
use crate::{Error, Result};

/// Steps per unit time used for inner flows that have no closed form.
pub const DEFAULT_FLOW_STEPS: usize = 512;

/// Tolerance on fiber means of a normalized Hamiltonian.
pub const NORMALIZATION_TOL: f64 = 1e-12;

const FD_STEP: f64 = 1e-6;

/// A user-supplied time-dependent Hamiltonian.
pub trait HamiltonianFn: Send + Sync {
    fn value(&self, t: f64, y: [f64; 2]) -> f64;

    fn gradient(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let h = FD_STEP;
        [
            (self.value(t, [y[0] + h, y[1]]) - self.value(t, [y[0] - h, y[1]])) / (2.0 * h),
            (self.value(t, [y[0], y[1] + h]) - self.value(t, [y[0], y[1] - h])) / (2.0 * h),
        ]
    }

    fn describe(&self) -> String {
        "custom".into()
    }

    /// `y ↦ H(t, y)` at a fixed time, for implementations that can share work
    /// across the fiber.
    fn time_slice(&self, _t: f64) -> Option<Box<dyn Fn([f64; 2]) -> f64 + '_>> {
        None
    }
}

/// Which coordinate a shear Hamiltonian depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    Y1,
    Y2,
}

/// Time profile `p = s′` of a shear `H(t, y) = p(t) · A cos(2π y_axis)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Profile {
    /// `s(t) = t`.
    Constant,
    /// `s(t) = sin²(πt)`, so the flow closes at `t = 1`.
    SinSquared,
    /// `s(t) = sin(2πt)/2π`, so `p(0) = 1` and the flow closes at `t = 1`.
    Cosine,
}

impl Profile {
    pub fn s(self, t: f64) -> f64 {
        match self {
            Profile::Constant => t,
            Profile::SinSquared => (PI * t).sin().powi(2),
            Profile::Cosine => (TAU * t).sin() / TAU,
        }
    }

    pub fn ds(self, t: f64) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::SinSquared => PI * (TAU * t).sin(),
            Profile::Cosine => (TAU * t).cos(),
        }
    }
}

#[derive(Clone)]
enum Kind {
    Zero,
    Shear { axis: Axis, amplitude: f64, profile: Profile },
    Trig(Catalog),
    Sampled(ScalarField),
    Composed { outer: NormalizedHamiltonian, inner: NormalizedHamiltonian, steps: usize },
    Inverse { base: NormalizedHamiltonian, steps: usize },
    Scaled { factor: f64, base: NormalizedHamiltonian },
    Custom(Arc<dyn HamiltonianFn>),
}

/// A time-dependent Hamiltonian with zero mean on every fiber.
#[derive(Clone)]
pub struct NormalizedHamiltonian {
    kind: Arc<Kind>,
}

impl fmt::Debug for NormalizedHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormalizedHamiltonian({})", self.describe())
    }
}

impl NormalizedHamiltonian {
    fn from_kind(kind: Kind) -> Self {
        NormalizedHamiltonian { kind: Arc::new(kind) }
    }

    pub fn zero() -> Self {
        Self::from_kind(Kind::Zero)
    }

    /// `H(t, y) = p(t) · A cos(2π y_axis)` with `p = s′`.
    pub fn shear(axis: Axis, amplitude: f64, profile: Profile) -> Self {
        Self::from_kind(Kind::Shear {
            axis,
            amplitude,
            profile,
        })
    }

    /// A catalog expression; every term must have zero fiber mean.
    pub fn trig(expr: Catalog) -> Result<Self> {
        if !expr.has_zero_fiber_mean() {
            return Err(Error::NotNormalized(
                "catalog expression has a term with zero fiber frequency".into(),
            ));
        }
        Ok(Self::from_kind(Kind::Trig(expr)))
    }

    /// A sampled product (or fiber) field; fiber means must vanish.
    pub fn sampled(field: ScalarField) -> Result<Self> {
        if field.samples().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHamiltonian("non-finite sample".into()));
        }
        let worst = fiber_means_of(&field).into_iter().fold(0.0_f64, |a, m| a.max(m.abs()));
        let scale = field.sup_norm().max(1.0);
        if worst > NORMALIZATION_TOL * scale {
            return Err(Error::NotNormalized(format!("fiber mean {worst:e}")));
        }
        Ok(Self::from_kind(Kind::Sampled(field)))
    }

    /// Subtracts fiber means, then wraps.
    pub fn normalize(field: &ScalarField) -> Result<Self> {
        let means = fiber_means_of(field);
        let cells = field.grid().fiber_cells();
        let samples: Vec<f64> = field
            .samples()
            .iter()
            .enumerate()
            .map(|(k, v)| v - means[k / cells])
            .collect();
        Self::sampled(ScalarField::from_samples(field.grid(), field.domain(), samples)?)
    }

    /// A user-supplied Hamiltonian; normalization is the caller's contract
    /// and can be checked with [`NormalizedHamiltonian::fiber_mean_defect`].
    pub fn custom(f: Arc<dyn HamiltonianFn>) -> Self {
        Self::from_kind(Kind::Custom(f))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_kind(Kind::Scaled {
            factor,
            base: self.clone(),
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.kind, Kind::Zero)
    }

    /// The monomial, when `H` is a single catalog trig term.
    pub fn as_trig_monomial(&self) -> Option<TrigMonomial> {
        match &*self.kind {
            Kind::Trig(Catalog::Trig(m)) => Some(*m),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match &*self.kind {
            Kind::Zero => "0".into(),
            Kind::Shear {
                axis,
                amplitude,
                profile,
            } => format!("shear({axis:?}, {amplitude}, {profile:?})"),
            Kind::Trig(c) => format!("trig({c:?})"),
            Kind::Sampled(f) => format!("sampled({:?})", f.grid()),
            Kind::Composed { outer, inner, .. } => {
                format!("compose({}, {})", outer.describe(), inner.describe())
            }
            Kind::Inverse { base, .. } => format!("invert({})", base.describe()),
            Kind::Scaled { factor, base } => format!("{factor}·{}", base.describe()),
            Kind::Custom(f) => f.describe(),
        }
    }

    pub fn value(&self, t: f64, y: [f64; 2]) -> f64 {
        match &*self.kind {
            Kind::Zero => 0.0,
            Kind::Shear {
                axis,
                amplitude,
                profile,
            } => {
                let c = match axis {
                    Axis::Y1 => y[0],
                    Axis::Y2 => y[1],
                };
                profile.ds(t) * amplitude * (TAU * c).cos()
            }
            Kind::Trig(c) => c.value(t, y),
            Kind::Sampled(f) => f.value_at(t, y),
            Kind::Composed { outer, inner, steps } => {
                outer.value(t, y) + inner.value(t, outer.inverse_flow_point(t, y, *steps))
            }
            Kind::Inverse { base, steps } => -base.value(t, base.flow_point(t, y, *steps)),
            Kind::Scaled { factor, base } => factor * base.value(t, y),
            Kind::Custom(f) => f.value(t, y),
        }
    }

    /// `∇_y H(t, y)`.
    pub fn gradient(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        match &*self.kind {
            Kind::Zero => [0.0, 0.0],
            Kind::Shear {
                axis,
                amplitude,
                profile,
            } => {
                let k = -TAU * amplitude * profile.ds(t);
                match axis {
                    Axis::Y1 => [k * (TAU * y[0]).sin(), 0.0],
                    Axis::Y2 => [0.0, k * (TAU * y[1]).sin()],
                }
            }
            Kind::Trig(c) => c.gradient_y(t, y),
            Kind::Sampled(_) | Kind::Custom(_) => {
                let h = FD_STEP;
                [
                    (self.value(t, [y[0] + h, y[1]]) - self.value(t, [y[0] - h, y[1]])) / (2.0 * h),
                    (self.value(t, [y[0], y[1] + h]) - self.value(t, [y[0], y[1] - h])) / (2.0 * h),
                ]
            }
            Kind::Composed { outer, inner, steps } => {
                let psi = outer.inverse_flow_point(t, y, *steps);
                let g = inner.gradient(t, psi);
                let d = outer.inverse_flow_jacobian(t, y, *steps);
                let go = outer.gradient(t, y);
                [
                    go[0] + d[0][0] * g[0] + d[1][0] * g[1],
                    go[1] + d[0][1] * g[0] + d[1][1] * g[1],
                ]
            }
            Kind::Inverse { base, steps } => {
                let phi = base.flow_point(t, y, *steps);
                let g = base.gradient(t, phi);
                let d = base.flow_jacobian(t, y, *steps);
                [
                    -(d[0][0] * g[0] + d[1][0] * g[1]),
                    -(d[0][1] * g[0] + d[1][1] * g[1]),
                ]
            }
            Kind::Scaled { factor, base } => {
                let g = base.gradient(t, y);
                [factor * g[0], factor * g[1]]
            }
        }
    }

    /// `X_H(t, y) = (∂H/∂y₂, −∂H/∂y₁)`.
    pub fn vector_field(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        let g = self.gradient(t, y);
        [g[1], -g[0]]
    }

    /// Closed-form time-`t` flow, when the catalog provides one.
    pub fn exact_flow(&self, t: f64, y: [f64; 2]) -> Option<[f64; 2]> {
        match &*self.kind {
            Kind::Zero => Some(y),
            Kind::Shear {
                axis,
                amplitude,
                profile,
            } => {
                let c = TAU * amplitude * profile.s(t);
                Some(match axis {
                    Axis::Y1 => wrap2([y[0], y[1] + c * (TAU * y[0]).sin()]),
                    Axis::Y2 => wrap2([y[0] - c * (TAU * y[1]).sin(), y[1]]),
                })
            }
            Kind::Composed { outer, inner, .. } => {
                let a = inner.exact_flow(t, y)?;
                outer.exact_flow(t, a)
            }
            Kind::Inverse { base, .. } => base.exact_inverse_flow(t, y),
            _ => None,
        }
    }

    /// Closed-form inverse of the time-`t` flow, when available.
    pub fn exact_inverse_flow(&self, t: f64, y: [f64; 2]) -> Option<[f64; 2]> {
        match &*self.kind {
            Kind::Zero => Some(y),
            Kind::Shear {
                axis,
                amplitude,
                profile,
            } => {
                let c = TAU * amplitude * profile.s(t);
                Some(match axis {
                    Axis::Y1 => wrap2([y[0], y[1] - c * (TAU * y[0]).sin()]),
                    Axis::Y2 => wrap2([y[0] + c * (TAU * y[1]).sin(), y[1]]),
                })
            }
            Kind::Composed { outer, inner, .. } => {
                let a = outer.exact_inverse_flow(t, y)?;
                inner.exact_inverse_flow(t, a)
            }
            Kind::Inverse { base, .. } => base.exact_flow(t, y),
            _ => None,
        }
    }

    /// Time-`t` flow of a point: exact when available, RK4 otherwise.
    pub fn flow_point(&self, t: f64, y: [f64; 2], steps: usize) -> [f64; 2] {
        self.exact_flow(t, y).unwrap_or_else(|| self.rk4(0.0, t, y, steps))
    }

    /// Inverse of the time-`t` flow: exact when available, backward RK4 otherwise.
    pub fn inverse_flow_point(&self, t: f64, y: [f64; 2], steps: usize) -> [f64; 2] {
        self.exact_inverse_flow(t, y)
            .unwrap_or_else(|| self.rk4(t, 0.0, y, steps))
    }

    /// Integrates `ẏ = X_H` from `t0` to `t1` with classical RK4, using
    /// `⌈|t1 − t0|·steps⌉` equal steps.
    pub fn rk4(&self, t0: f64, t1: f64, y: [f64; 2], steps: usize) -> [f64; 2] {
        let span = t1 - t0;
        let n = ((span.abs() * steps as f64).ceil() as usize).max(1);
        if span == 0.0 {
            return y;
        }
        let dt = span / n as f64;
        let mut y = y;
        let mut t = t0;
        for _ in 0..n {
            let k1 = self.vector_field(t, y);
            let k2 = self.vector_field(t + dt / 2.0, [y[0] + dt / 2.0 * k1[0], y[1] + dt / 2.0 * k1[1]]);
            let k3 = self.vector_field(t + dt / 2.0, [y[0] + dt / 2.0 * k2[0], y[1] + dt / 2.0 * k2[1]]);
            let k4 = self.vector_field(t + dt, [y[0] + dt * k3[0], y[1] + dt * k3[1]]);
            y = [
                y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            t += dt;
        }
        wrap2(y)
    }

    /// `D(h(t)⁻¹)(y)`, row-major.
    fn inverse_flow_jacobian(&self, t: f64, y: [f64; 2], steps: usize) -> [[f64; 2]; 2] {
        if let Kind::Shear {
            axis,
            amplitude,
            profile,
        } = &*self.kind
        {
            let c = TAU * amplitude * profile.s(t);
            return match axis {
                Axis::Y1 => [[1.0, 0.0], [-TAU * c * (TAU * y[0]).cos(), 1.0]],
                Axis::Y2 => [[1.0, TAU * c * (TAU * y[1]).cos()], [0.0, 1.0]],
            };
        }
        if self.is_zero() {
            return [[1.0, 0.0], [0.0, 1.0]];
        }
        jacobian_fd(|p| self.inverse_flow_point(t, p, steps), y)
    }

    /// `D(h(t))(y)`, row-major.
    fn flow_jacobian(&self, t: f64, y: [f64; 2], steps: usize) -> [[f64; 2]; 2] {
        if let Kind::Shear {
            axis,
            amplitude,
            profile,
        } = &*self.kind
        {
            let c = TAU * amplitude * profile.s(t);
            return match axis {
                Axis::Y1 => [[1.0, 0.0], [TAU * c * (TAU * y[0]).cos(), 1.0]],
                Axis::Y2 => [[1.0, -TAU * c * (TAU * y[1]).cos()], [0.0, 1.0]],
            };
        }
        if self.is_zero() {
            return [[1.0, 0.0], [0.0, 1.0]];
        }
        jacobian_fd(|p| self.flow_point(t, p, steps), y)
    }

    /// `max_t |∫_Y H(t, ·) dμ|` over the nodes of `grid`.
    pub fn fiber_mean_defect(&self, grid: TorusGrid) -> f64 {
        let cells = grid.fiber_cells();
        (0..grid.res_t())
            .into_par_iter()
            .map(|j| {
                let t = grid.t_node(j);
                let s: f64 = (0..cells).map(|c| self.value(t, grid.y_node(c))).sum();
                (s / cells as f64).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Samples `H` on the product grid.
    pub fn sample(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn_product(grid, |t, y| self.value(t, y))
    }

    fn check_finite(&self, t: f64, res: [usize; 2]) -> Result<()> {
        for s in [0.0, 0.25, 0.5, 0.75, t] {
            for i1 in 0..res[0] {
                for i2 in 0..res[1] {
                    let y = [i1 as f64 / res[0] as f64, i2 as f64 / res[1] as f64];
                    let g = self.gradient(s, y);
                    if !g[0].is_finite() || !g[1].is_finite() {
                        return Err(Error::InvalidHamiltonian(format!(
                            "non-finite derivative at t={s}, y={y:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Observable for NormalizedHamiltonian {
    fn eval(&self, t: f64, y: [f64; 2]) -> f64 {
        self.value(t, y)
    }
}

fn fiber_means_of(field: &ScalarField) -> Vec<f64> {
    match field.domain() {
        Domain::Fiber => vec![field.mean()],
        Domain::Product => field.fiber_means(),
    }
}

fn jacobian_fd<F: Fn([f64; 2]) -> [f64; 2]>(f: F, y: [f64; 2]) -> [[f64; 2]; 2] {
    let h = FD_STEP;
    let mut d = [[0.0; 2]; 2];
    for col in 0..2 {
        let mut yp = y;
        let mut ym = y;
        yp[col] += h;
        ym[col] -= h;
        let (a, b) = (f(yp), f(ym));
        for row in 0..2 {
            d[row][col] = periodic_diff(a[row], b[row]) / (2.0 * h);
        }
    }
    d
}

/// RK4 flow of `H` from time 0 to `t`, with `steps` steps per unit time.
pub fn flow_of_hamiltonian(h: &NormalizedHamiltonian, t: f64, steps: usize) -> Result<CellMap> {
    if steps == 0 {
        return Err(Error::Precondition("step_count must be positive".into()));
    }
    h.check_finite(t, [8, 8])?;
    let (f, b) = (h.clone(), h.clone());
    Ok(CellMap::Smooth(SmoothMap::new(
        move |y| f.rk4(0.0, t, y, steps),
        move |y| b.rk4(t, 0.0, y, steps),
    )))
}

/// The loop `t ↦ h(t)` generated by a Hamiltonian, integrated with a fixed
/// step count.
#[derive(Clone, Debug)]
pub struct LoopFlow {
    hamiltonian: NormalizedHamiltonian,
    step_count: usize,
}

impl LoopFlow {
    pub fn new(hamiltonian: NormalizedHamiltonian, step_count: usize) -> Result<Self> {
        if step_count == 0 {
            return Err(Error::Precondition("step_count must be positive".into()));
        }
        hamiltonian.check_finite(1.0, [8, 8])?;
        Ok(LoopFlow {
            hamiltonian,
            step_count,
        })
    }

    pub fn hamiltonian(&self) -> &NormalizedHamiltonian {
        &self.hamiltonian
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn map_at(&self, t: f64) -> Result<CellMap> {
        flow_of_hamiltonian(&self.hamiltonian, t, self.step_count)
    }

    pub fn apply(&self, t: f64, y: [f64; 2]) -> [f64; 2] {
        self.hamiltonian.rk4(0.0, t, y, self.step_count)
    }

    /// `max_y d(h(1) y, y)` over the nodes of a `res` grid.
    pub fn closure_defect(&self, res: [usize; 2]) -> f64 {
        nodes(res)
            .into_par_iter()
            .map(|y| torus_distance(self.apply(1.0, y), y))
            .reduce(|| 0.0, f64::max)
    }
}

fn nodes(res: [usize; 2]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(res[0] * res[1]);
    for i1 in 0..res[0] {
        for i2 in 0..res[1] {
            out.push([i1 as f64 / res[0] as f64, i2 as f64 / res[1] as f64]);
        }
    }
    out
}

/// `∫₀¹ max_y |H(t, y)| dt` by the rectangle rule on the time nodes of `grid`.
pub fn loop_length(h: &NormalizedHamiltonian, grid: TorusGrid) -> f64 {
    match &*h.kind {
        Kind::Zero => 0.0,
        Kind::Sampled(f) if f.grid() == grid && f.domain() == Domain::Product => {
            f.time_sup_integral().unwrap_or(0.0)
        }
        Kind::Custom(f) => {
            let res_t = grid.res_t();
            let total: f64 = (0..res_t)
                .into_par_iter()
                .map(|j| {
                    let t = grid.t_node(j);
                    match f.time_slice(t) {
                        Some(slice) => fiber_sup(slice, grid.res_y()),
                        None => fiber_sup(|y| f.value(t, y), grid.res_y()),
                    }
                })
                .collect::<Vec<_>>()
                .into_iter()
                .sum();
            total / res_t as f64
        }
        _ => observable_time_sup_integral(h, grid),
    }
}

/// The generator `H₂(t, y) + H₁(t, h₂(t)⁻¹ y)` of `h₂(t) ∘ h₁(t)`.
pub fn compose_loops(h2: &NormalizedHamiltonian, h1: &NormalizedHamiltonian) -> NormalizedHamiltonian {
    compose_loops_with_steps(h2, h1, DEFAULT_FLOW_STEPS)
}

pub fn compose_loops_with_steps(
    h2: &NormalizedHamiltonian,
    h1: &NormalizedHamiltonian,
    steps: usize,
) -> NormalizedHamiltonian {
    if h1.is_zero() {
        return h2.clone();
    }
    if h2.is_zero() {
        return h1.clone();
    }
    NormalizedHamiltonian::from_kind(Kind::Composed {
        outer: h2.clone(),
        inner: h1.clone(),
        steps,
    })
}

/// The generator `−H(t, h(t) y)` of `h(t)⁻¹`.
pub fn invert_loop(h: &NormalizedHamiltonian) -> NormalizedHamiltonian {
    invert_loop_with_steps(h, DEFAULT_FLOW_STEPS)
}

pub fn invert_loop_with_steps(h: &NormalizedHamiltonian, steps: usize) -> NormalizedHamiltonian {
    match &*h.kind {
        Kind::Zero => h.clone(),
        Kind::Inverse { base, .. } => base.clone(),
        _ => NormalizedHamiltonian::from_kind(Kind::Inverse {
            base: h.clone(),
            steps,
        }),
    }
}

/// Upper bounds `(1/k)·length(F_k)` for `‖γ^k‖/k`, where `F_k` is the
/// Birkhoff-sum Hamiltonian of the shortened loop.
pub fn asymptotic_norm_estimate(
    h: &NormalizedHamiltonian,
    skew: &SkewProduct,
    ks: &[usize],
    grid: TorusGrid,
) -> Result<Vec<f64>> {
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks.first() == Some(&0) {
        return Err(Error::Precondition("ks must be positive and increasing".into()));
    }
    ks.iter()
        .map(|&k| crate::shortening::shortened_length(h, skew, k, grid))
        .collect()
}

/// The shipped pair `(H₂, H₁)` of closed shear loops on different axes,
/// `H₂ = π sin(2πt)·0.1 cos(2πy₁)` and `H₁ = cos(2πt)·0.1 cos(2πy₂)`.
pub fn catalog_pair() -> (NormalizedHamiltonian, NormalizedHamiltonian) {
    (
        NormalizedHamiltonian::shear(Axis::Y1, 0.1, Profile::SinSquared),
        NormalizedHamiltonian::shear(Axis::Y2, 0.1, Profile::Cosine),
    )
}
