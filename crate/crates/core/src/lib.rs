//! Numerical laboratory for skew-product dynamics over loops of
//! measure-preserving maps of the 2-torus.
//!
//! The crate is organised around the constructive procedures needed to study
//! strictly ergodic loops and their Hofer lengths:
//!
//! - [`phase`]: grids on `S¹ × T²`, sampled scalar fields, sup norms and
//!   quadrature, cell permutations and smooth cell maps.
//! - [`dynamics`]: skew products `T(t, y) = (t + α, h(t) y)`, sequential
//!   systems, orbits, Birkhoff averages and the minimality / unique
//!   ergodicity diagnostics.
//! - [`hofer`]: normalized Hamiltonians, their RK4 flows, loop composition and
//!   inversion, Hofer length and asymptotic-norm upper bounds.
//! - [`shortening`]: Birkhoff-sum shortening of loops and the breaking of
//!   iterated minimal geodesics.
//! - [`averaging`]: averaging operators `S^{g_1..g_N}` and the recursive
//!   max-flattening driven by a covering oracle.
//! - [`covering`]: nice subpartitions, subpolyhedron families, cube transport
//!   and the local/global covering assemblies.
//! - [`construct`]: multi-target averaging, fiberwise centering, periodic loops
//!   with small fiber integrals and the conjugated-shift certificates.
//! - [`cli`]: configuration, execution and reporting for the `ergoloop` binary.
//!
//! Runnable walkthroughs for each capability live in the `examples/`
//! directory of this crate.

pub mod averaging;
pub mod cli;
pub mod construct;
pub mod covering;
pub mod dynamics;
mod error;
pub mod hofer;
pub mod phase;
pub mod shortening;

pub use error::{Error, Result};

/// Named quadratic irrationals used as rotation numbers.
pub mod constants {
    /// `(√5 − 1) / 2`
    pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
    /// `√2 − 1`
    pub const SQRT2M1: f64 = 0.414_213_562_373_095_03;

    /// Resolves a named constant (`golden`, `sqrt2m1`), a rational `p/q`, or a
    /// decimal literal.
    pub fn parse_real(s: &str) -> Option<f64> {
        match s.trim() {
            "golden" => Some(GOLDEN),
            "sqrt2m1" => Some(SQRT2M1),
            other => {
                if let Some((p, q)) = other.split_once('/') {
                    let p: f64 = p.trim().parse().ok()?;
                    let q: f64 = q.trim().parse().ok()?;
                    if q == 0.0 {
                        return None;
                    }
                    Some(p / q)
                } else {
                    other.parse().ok()
                }
            }
        }
    }
}
