//! Birkhoff-sum shortening of loops: `F_N = Σ_{k<N} H ∘ T^k`, its sequential
//! version, and breaking the minimality of an iterated closed geodesic.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::{Point, SequentialSystem, SkewProduct};
use crate::hofer::{loop_length, HamiltonianFn, NormalizedHamiltonian, DEFAULT_FLOW_STEPS};
use crate::phase::{fiber_sup, wrap, wrap2, CellMap, TorusGrid, TrigMonomial};
use crate::{Error, Result};

struct BirkhoffSum {
    h: NormalizedHamiltonian,
    skew: SkewProduct,
    n: usize,
}

impl HamiltonianFn for BirkhoffSum {
    fn value(&self, t: f64, y: [f64; 2]) -> f64 {
        self.skew.birkhoff_sum(&self.h, Point::new(t, y), self.n)
    }

    fn describe(&self) -> String {
        format!("birkhoff_sum(N={}, {})", self.n, self.h.describe())
    }

    /// For a translation loop the fiber orbit of `y` is `y + s_k(t)`, so the
    /// base orbit and shifts are computed once per slice; a trig monomial
    /// then collapses to one complex coefficient.
    fn time_slice(&self, t: f64) -> Option<Box<dyn Fn([f64; 2]) -> f64 + '_>> {
        let (rate, offset) = self.skew.loop_().translation_parameters()?;
        let alpha = self.skew.alpha().value();
        let mut tk = wrap(t);
        let mut shift = [0.0, 0.0];
        let mut orbit = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            orbit.push((tk, shift));
            shift = wrap2([shift[0] + tk * rate[0] + offset[0], shift[1] + tk * rate[1] + offset[1]]);
            tk = wrap(tk + alpha);
        }
        if let Some(m) = self.h.as_trig_monomial() {
            let (re, im) = orbit.iter().fold((0.0, 0.0), |(re, im), &(tk, s)| {
                let theta = m.argument(tk, s);
                (re + theta.cos(), im + theta.sin())
            });
            let k = [m.freq_y[0] as f64, m.freq_y[1] as f64];
            return Some(Box::new(move |y| {
                let ph = TAU * (k[0] * y[0] + k[1] * y[1]);
                m.amplitude * (ph.cos() * re - ph.sin() * im)
            }));
        }
        Some(Box::new(move |y| {
            orbit
                .iter()
                .map(|&(tk, s)| self.h.value(tk, wrap2([y[0] + s[0], y[1] + s[1]])))
                .sum()
        }))
    }
}

struct SequentialSum {
    h: NormalizedHamiltonian,
    system: SequentialSystem,
    n: usize,
}

impl HamiltonianFn for SequentialSum {
    fn value(&self, t: f64, y: [f64; 2]) -> f64 {
        let mut p = Point::new(t, y);
        let mut s = self.h.value(p.t, p.y);
        for i in 1..self.n {
            p = self.system.step(i, p);
            s += self.h.value(p.t, p.y);
        }
        s
    }

    fn describe(&self) -> String {
        format!("sequential_birkhoff_sum(N={}, {})", self.n, self.h.describe())
    }
}

/// `F_N(t, y) = Σ_{k<N} H(T^k(t, y))`, evaluated along orbits.
pub fn birkhoff_hamiltonian(h: &NormalizedHamiltonian, skew: &SkewProduct, n: usize) -> Result<NormalizedHamiltonian> {
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    if n == 1 || h.is_zero() {
        return Ok(h.clone());
    }
    Ok(NormalizedHamiltonian::custom(Arc::new(BirkhoffSum {
        h: h.clone(),
        skew: skew.clone(),
        n,
    })))
}

/// `F_N = Σ_{i<N} H ∘ T^{(i)}` for a sequential system; needs `T_1, …, T_{N−1}`.
pub fn sequential_birkhoff_hamiltonian(
    h: &NormalizedHamiltonian,
    system: &SequentialSystem,
    n: usize,
) -> Result<NormalizedHamiltonian> {
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    if system.len() + 1 < n {
        return Err(Error::UnderdeterminedSequence(format!(
            "F_{n} needs {} maps, {} defined",
            n - 1,
            system.len()
        )));
    }
    if n == 1 {
        return Ok(h.clone());
    }
    Ok(NormalizedHamiltonian::custom(Arc::new(SequentialSum {
        h: h.clone(),
        system: system.clone(),
        n,
    })))
}

/// `(1/N)·length(F_N)`.
pub fn shortened_length(h: &NormalizedHamiltonian, skew: &SkewProduct, n: usize, grid: TorusGrid) -> Result<f64> {
    let f = birkhoff_hamiltonian(h, skew, n)?;
    Ok(loop_length(&f, grid) / n as f64)
}

/// Normalized lengths `ℓ_N` of the shortened loops.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ShorteningTrace {
    pub ns: Vec<usize>,
    pub lengths: Vec<f64>,
    pub oracle_bounds: Option<Vec<f64>>,
}

impl ShorteningTrace {
    /// `lengths ≥ 0` and, with oracle bounds, `lengths ≤ bounds + 1e-9`.
    pub fn is_consistent(&self) -> bool {
        let nonneg = self.lengths.iter().all(|&l| l >= 0.0);
        let bounded = match &self.oracle_bounds {
            Some(b) => self.lengths.iter().zip(b).all(|(l, b)| *l <= b + 1e-9),
            None => true,
        };
        nonneg && bounded
    }
}

/// `ℓ_N` for each `N` in `ns`; oracle values are attached when `H` is a
/// single trig monomial and `T` twists by a translation loop.
pub fn normalized_length_sequence(
    h: &NormalizedHamiltonian,
    skew: &SkewProduct,
    ns: &[usize],
    grid: TorusGrid,
) -> Result<ShorteningTrace> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("Ns must be positive and increasing".into()));
    }
    let lengths = ns
        .iter()
        .map(|&n| shortened_length(h, skew, n, grid))
        .collect::<Result<Vec<_>>>()?;
    let oracle_bounds = match (h.as_trig_monomial(), skew.loop_().translation_parameters()) {
        (Some(m), Some((rate, offset))) if m.freq_y != [0, 0] => Some(
            ns.iter()
                .map(|&n| translation_oracle(&m, skew.alpha().value(), rate, offset, n, grid))
                .collect(),
        ),
        _ if h.is_zero() => Some(vec![0.0; ns.len()]),
        _ => None,
    };
    Ok(ShorteningTrace {
        ns: ns.to_vec(),
        lengths,
        oracle_bounds,
    })
}

/// For `H = A cos(2π(k_t t + k·y) + φ)` and `h(t) y = y + t·rate + offset`,
/// `max_y |F_N(t, ·)| = |A| · |Σ_k e^{iθ_k(t)}|` whenever `k ≠ 0`.
fn translation_oracle(m: &TrigMonomial, alpha: f64, rate: [f64; 2], offset: [f64; 2], n: usize, grid: TorusGrid) -> f64 {
    let kf = [m.freq_y[0] as f64, m.freq_y[1] as f64];
    let total: f64 = (0..grid.res_t())
        .into_par_iter()
        .map(|j| {
            let mut t = grid.t_node(j);
            let mut shift = [0.0, 0.0];
            let (mut re, mut im) = (0.0, 0.0);
            for _ in 0..n {
                let theta = TAU * (m.freq_t as f64 * t + kf[0] * shift[0] + kf[1] * shift[1]);
                re += theta.cos();
                im += theta.sin();
                shift[0] += t * rate[0] + offset[0];
                shift[1] += t * rate[1] + offset[1];
                shift = [shift[0].rem_euclid(1.0), shift[1].rem_euclid(1.0)];
                t = wrap(t + alpha);
            }
            m.amplitude.abs() * re.hypot(im)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / grid.res_t() as f64 / n as f64
}

/// Result of [`break_minimal_geodesic`].
#[derive(Clone, Debug)]
pub struct GeodesicBreak {
    /// `g_1, …, g_N`; only `g_1, …, g_{N−1}` enter `F_N`, so `g_N = id`.
    pub conjugators: Vec<CellMap>,
    pub translations: Vec<[f64; 2]>,
    pub a0: f64,
    pub b0: f64,
    /// `a(t_j)` and `b(t_j)` at the time nodes of the grid.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_integral: f64,
    pub b_integral: f64,
}

/// Greedy choice of torus translations `g_i` (with all `α_i = 0`) making
/// `a(0) = max_y |F_N(0, ·)|` strictly smaller than `b(0) = N max_y |H(0, ·)|`.
///
/// `H` generates `h(t)⁻¹`. `search_budget` caps the number of candidate
/// evaluations.
pub fn break_minimal_geodesic(
    h: &NormalizedHamiltonian,
    n: usize,
    search_budget: usize,
    grid: TorusGrid,
) -> Result<GeodesicBreak> {
    if n < 2 {
        return Err(Error::Precondition("N must be at least 2".into()));
    }
    let res = grid.res_y();
    let h0 = |y: [f64; 2]| h.value(0.0, y);
    let (lo, hi) = (0..grid.fiber_cells())
        .map(|c| h0(grid.y_node(c)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Err(Error::Precondition("H(0, ·) is constant".into()));
    }
    let b0 = n as f64 * fiber_sup(h0, res);

    let side = ((search_budget / (n - 1)) as f64).sqrt().floor() as usize;
    if side < 2 {
        return Err(Error::NoShorteningFound { budget: search_budget });
    }
    let candidates: Vec<[f64; 2]> = (0..side * side)
        .map(|k| [(k / side) as f64 / side as f64, (k % side) as f64 / side as f64])
        .collect();

    // Cumulative translations P_i = g_i ⋯ g_1 at t = 0 (h(0) = id).
    let mut cumulative = vec![[0.0, 0.0]];
    let mut translations = Vec::with_capacity(n);
    for _ in 1..n {
        let last = *cumulative.last().unwrap();
        let scored: Vec<(f64, [f64; 2])> = candidates
            .par_iter()
            .map(|&d| {
                let p = [wrap(last[0] + d[0]), wrap(last[1] + d[1])];
                let s = fiber_sup(
                    |y| {
                        cumulative
                            .iter()
                            .chain(std::iter::once(&p))
                            .map(|c| h0([y[0] + c[0], y[1] + c[1]]))
                            .sum::<f64>()
                    },
                    res,
                );
                (s, d)
            })
            .collect();
        let (_, best) = scored
            .into_iter()
            .fold((f64::INFINITY, [0.0, 0.0]), |acc, x| if x.0 < acc.0 { x } else { acc });
        translations.push(best);
        cumulative.push([wrap(last[0] + best[0]), wrap(last[1] + best[1])]);
    }
    translations.push([0.0, 0.0]);

    let conjugators: Vec<CellMap> = translations.iter().map(|&d| CellMap::translation(d)).collect();
    let (a, b) = geodesic_profiles(h, &conjugators, n, grid, DEFAULT_FLOW_STEPS);
    let a0 = a[0];
    if a0 >= b0 - 1e-12 * b0.max(1.0) {
        return Err(Error::NoShorteningFound { budget: search_budget });
    }
    let a_integral = a.iter().sum::<f64>() / a.len() as f64;
    let b_integral = b.iter().sum::<f64>() / b.len() as f64;
    Ok(GeodesicBreak {
        conjugators,
        translations,
        a0,
        b0,
        a,
        b,
        a_integral,
        b_integral,
    })
}

/// `a(t_j) = max_y |Σ_{i<N} H(t_j, y_i)|` with `y_0 = y`, `y_i = g_i h(t_j) y_{i−1}`,
/// and `b(t_j) = N max_y |H(t_j, ·)|`.
pub fn geodesic_profiles(
    h: &NormalizedHamiltonian,
    conjugators: &[CellMap],
    n: usize,
    grid: TorusGrid,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let res = grid.res_y();
    (0..grid.res_t())
        .into_par_iter()
        .map(|j| {
            let t = grid.t_node(j);
            let a = fiber_sup(
                |y| {
                    let mut p = y;
                    let mut s = h.value(t, p);
                    for g in conjugators.iter().take(n - 1) {
                        p = g.apply_point(h.inverse_flow_point(t, p, steps));
                        s += h.value(t, p);
                    }
                    s
                },
                res,
            );
            let b = n as f64 * fiber_sup(|y| h.value(t, y), res);
            (a, b)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{GOLDEN, SQRT2M1};
    use crate::dynamics::HamiltonianLoop;
    use crate::hofer::{Axis, Profile};
    use crate::phase::{Catalog, CellPermutation};
    use std::f64::consts::PI;

    #[test]
    fn time_slice_matches_orbit_sum() {
        let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
        let hs = [
            NormalizedHamiltonian::trig(Catalog::Trig(TrigMonomial {
                amplitude: 0.7,
                freq_t: 2,
                freq_y: [1, -3],
                phase: 0.4,
            }))
            .unwrap(),
            NormalizedHamiltonian::shear(Axis::Y2, 0.5, Profile::SinSquared),
        ];
        for h in &hs {
            let sum = BirkhoffSum {
                h: h.clone(),
                skew: skew.clone(),
                n: 37,
            };
            for k in 0..10 {
                let t = 0.093 * k as f64;
                let slice = sum.time_slice(t).unwrap();
                for y in [[0.1, 0.2], [0.77, 0.5], [0.0, 0.99]] {
                    assert!((slice(y) - sum.value(t, y)).abs() < 1e-11);
                }
            }
        }
    }

    fn cos_y2() -> NormalizedHamiltonian {
        NormalizedHamiltonian::trig(Catalog::Trig(TrigMonomial::cos_y(1.0, [0, 1]))).unwrap()
    }

    fn oracle(n: usize) -> f64 {
        (PI * n as f64 * SQRT2M1).sin().abs() / (n as f64 * (PI * SQRT2M1).sin())
    }

    #[test]
    fn single_term_is_h() {
        let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
        let f = birkhoff_hamiltonian(&cos_y2(), &skew, 1).unwrap();
        assert_eq!(f.value(0.2, [0.1, 0.3]), cos_y2().value(0.2, [0.1, 0.3]));
    }

    #[test]
    fn identity_system_sums_copies() {
        let f = birkhoff_hamiltonian(&cos_y2(), &SkewProduct::identity(), 7).unwrap();
        let y = [0.1, 0.3];
        assert!((f.value(0.0, y) - 7.0 * cos_y2().value(0.0, y)).abs() < 1e-12);
    }

    #[test]
    fn birkhoff_sum_has_zero_mean() {
        let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
        let f = birkhoff_hamiltonian(&cos_y2(), &skew, 13).unwrap();
        assert!(f.fiber_mean_defect(TorusGrid::cubic(16).unwrap()) < 1e-10);
    }

    #[test]
    fn trace_matches_geometric_sum() {
        let grid = TorusGrid::cubic(16).unwrap();
        let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
        let trace = normalized_length_sequence(&cos_y2(), &skew, &[10, 100], grid).unwrap();
        for (n, l) in trace.ns.iter().zip(&trace.lengths) {
            assert!((l - oracle(*n)).abs() < 1e-9);
            assert!(*l <= 1.0 / (*n as f64 * 0.964));
        }
        assert!(trace.is_consistent());
        let bounds = trace.oracle_bounds.unwrap();
        assert!((bounds[0] - oracle(10)).abs() < 1e-12);
    }

    #[test]
    fn trace_of_zero_and_identity() {
        let grid = TorusGrid::cubic(8).unwrap();
        let skew = SkewProduct::identity();
        let z = normalized_length_sequence(&NormalizedHamiltonian::zero(), &skew, &[1, 4], grid).unwrap();
        assert_eq!(z.lengths, vec![0.0, 0.0]);
        let id = normalized_length_sequence(&cos_y2(), &skew, &[1, 10, 100], grid).unwrap();
        assert!(id.lengths.iter().all(|&l| l == 1.0));
        assert!(normalized_length_sequence(&cos_y2(), &skew, &[3, 2], grid).is_err());
    }

    #[test]
    fn sequential_reduces_to_stationary() {
        let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
        let seq = SequentialSystem::stationary(&skew, 4);
        let a = sequential_birkhoff_hamiltonian(&cos_y2(), &seq, 5).unwrap();
        let b = birkhoff_hamiltonian(&cos_y2(), &skew, 5).unwrap();
        for y in [[0.1, 0.2], [0.7, 0.9]] {
            assert!((a.value(0.3, y) - b.value(0.3, y)).abs() < 1e-12);
        }
        assert!(matches!(
            sequential_birkhoff_hamiltonian(&cos_y2(), &seq, 6),
            Err(Error::UnderdeterminedSequence(_))
        ));
        let one = sequential_birkhoff_hamiltonian(&cos_y2(), &seq, 1).unwrap();
        assert_eq!(one.value(0.1, [0.2, 0.3]), cos_y2().value(0.1, [0.2, 0.3]));
    }

    #[test]
    fn sequential_permutation_system_brute_force() {
        let res = [4, 4];
        let perms = [
            CellPermutation::translation(res, [1, 0]),
            CellPermutation::transposition(16, 2, 9),
            CellPermutation::translation(res, [3, 2]),
        ];
        let conj: Vec<CellMap> = perms.iter().map(|p| CellMap::permutation(p.clone(), res).unwrap()).collect();
        let alphas = vec![0.1, 0.25, 0.4];
        let seq = SequentialSystem::new(alphas.clone(), conj.clone(), HamiltonianLoop::identity()).unwrap();
        let h = NormalizedHamiltonian::trig(Catalog::Trig(TrigMonomial {
            amplitude: 1.0,
            freq_t: 1,
            freq_y: [1, 1],
            phase: 0.2,
        }))
        .unwrap();
        let f = sequential_birkhoff_hamiltonian(&h, &seq, 4).unwrap();
        let (t0, y0) = (0.05, [0.3, 0.55]);
        let mut expect = h.value(t0, y0);
        let (mut t, mut y) = (t0, y0);
        for i in 0..3 {
            t = wrap(t + alphas[i]);
            y = conj[i].apply_point(y);
            expect += h.value(t, y);
        }
        assert!((f.value(t0, y0) - expect).abs() < 1e-12);
    }

    #[test]
    fn break_for_cosine_profile() {
        let grid = TorusGrid::new(32, [16, 16]).unwrap();
        let h = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::Cosine);
        let br = break_minimal_geodesic(&h, 2, 4096, grid).unwrap();
        assert!(br.a0.abs() < 1e-12);
        assert!((br.b0 - 2.0).abs() < 1e-12);
        assert!(br.a_integral < br.b_integral);
        assert!(br.a.iter().zip(&br.b).all(|(a, b)| *a <= b + 1e-12));
        assert_eq!(br.translations[0], [0.5, 0.0]);
    }

    #[test]
    fn break_rejects_constant_slice() {
        let grid = TorusGrid::new(8, [8, 8]).unwrap();
        let h = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::SinSquared);
        assert!(matches!(
            break_minimal_geodesic(&h, 2, 1024, grid),
            Err(Error::Precondition(_))
        ));
        let h = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::Cosine);
        assert!(matches!(
            break_minimal_geodesic(&h, 2, 3, grid),
            Err(Error::NoShorteningFound { .. })
        ));
    }
}
