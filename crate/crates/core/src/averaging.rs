//! Averaging operators `S^{g_1..g_N}(H) = (1/N) Σ H ∘ g_i⁻¹` on fiber
//! fields, and the recursive flattening of maxima driven by a covering
//! oracle, with the per-step contraction and measure bounds checked.

use rayon::prelude::*;

use crate::covering::CoveringFamily;
use crate::phase::{CellPermutation, Domain, ScalarField};
use crate::{Error, Result};

/// Default flattening target.
pub const DEFAULT_TARGET: f64 = 1e-2;

/// Default iteration cap for [`flatten_max`].
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Slack on the per-step inequalities.
pub const BOUND_SLACK: f64 = 1e-10;

/// Largest expansion [`AveragingOperator::expand`] will produce.
pub const EXPAND_CAP: u128 = 1_000_000;

/// Supplies covering families `{g_i(A)}` satisfying
/// `(1/N) Σ χ^{g_i(A)} ≥ (c₁ + c₂ μ(Y)/μ(A))⁻¹`.
pub trait CoveringOracle: Sync {
    /// `(c₁, c₂)`.
    fn constants(&self) -> (u64, u64);
    fn cover(&self, a: &[usize]) -> Result<CoveringFamily>;
}

/// A composition of averaging stages; stage `k` averages over its weighted
/// permutations, and stages apply in order.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingOperator {
    universe: usize,
    stages: Vec<Vec<(CellPermutation, u64)>>,
}

impl AveragingOperator {
    pub fn identity(universe: usize) -> Self {
        AveragingOperator {
            universe,
            stages: Vec::new(),
        }
    }

    pub fn from_maps(maps: Vec<CellPermutation>) -> Result<Self> {
        let weighted = maps.into_iter().map(|g| (g, 1)).collect();
        Self::from_weighted(weighted)
    }

    pub fn from_weighted(maps: Vec<(CellPermutation, u64)>) -> Result<Self> {
        let universe = maps
            .first()
            .map(|(g, _)| g.len())
            .ok_or_else(|| Error::Precondition("an averaging operator needs N ≥ 1".into()))?;
        if maps.iter().any(|(g, w)| g.len() != universe || *w == 0) {
            return Err(Error::DomainMismatch("maps on different grids or zero weight".into()));
        }
        Ok(AveragingOperator {
            universe,
            stages: vec![maps],
        })
    }

    pub fn from_family(family: &CoveringFamily) -> Result<Self> {
        Self::from_weighted(
            family
                .maps
                .iter()
                .cloned()
                .zip(family.multiplicities.iter().copied())
                .collect(),
        )
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn stages(&self) -> &[Vec<(CellPermutation, u64)>] {
        &self.stages
    }

    /// `N`, the number of maps of the expanded operator (saturating).
    pub fn map_count(&self) -> u128 {
        self.stages.iter().fold(1u128, |acc, s| {
            acc.saturating_mul(s.iter().map(|(_, w)| *w as u128).sum())
        })
    }

    pub fn is_identity(&self) -> bool {
        self.stages.is_empty()
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &AveragingOperator) -> Result<AveragingOperator> {
        if self.universe != first.universe && !self.is_identity() && !first.is_identity() {
            return Err(Error::DomainMismatch("operators on different grids".into()));
        }
        let universe = if first.is_identity() { self.universe } else { first.universe };
        let mut stages = first.stages.clone();
        stages.extend(self.stages.iter().cloned());
        Ok(AveragingOperator { universe, stages })
    }

    /// The single-stage form `{g ∘ g′}` with multiplied weights.
    pub fn expand(&self) -> Result<AveragingOperator> {
        if self.map_count() > EXPAND_CAP {
            return Err(Error::TooLarge(format!("{} maps", self.map_count())));
        }
        let mut acc: Vec<(CellPermutation, u64)> = vec![(CellPermutation::identity(self.universe), 1)];
        for stage in &self.stages {
            let mut next = Vec::with_capacity(acc.len() * stage.len());
            for (g, w) in stage {
                for (h, v) in &acc {
                    next.push((g.compose(h), w * v));
                }
            }
            acc = next;
        }
        Ok(AveragingOperator {
            universe: self.universe,
            stages: vec![acc],
        })
    }

    /// `(1/N) Σ H ∘ g_i⁻¹` on raw cell samples.
    pub fn apply_samples(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.universe && !self.is_identity() {
            return Err(Error::DomainMismatch(format!(
                "field has {} cells, operator {}",
                h.len(),
                self.universe
            )));
        }
        let mut cur = h.to_vec();
        for stage in &self.stages {
            cur = apply_stage(stage, &cur);
        }
        Ok(cur)
    }
}

fn apply_stage(stage: &[(CellPermutation, u64)], h: &[f64]) -> Vec<f64> {
    let total: f64 = stage.iter().map(|(_, w)| *w as f64).sum();
    let mut out = vec![0.0; h.len()];
    out.par_iter_mut().enumerate().for_each(|(c, o)| {
        let mut s = 0.0;
        for (g, w) in stage {
            s += *w as f64 * h[g.apply_inverse(c)];
        }
        *o = s / total;
    });
    out
}

/// `S(H)` for a fiber field, or fiberwise for a product field.
pub fn apply_averaging(s: &AveragingOperator, h: &ScalarField) -> Result<ScalarField> {
    let cells = h.grid().fiber_cells();
    match h.domain() {
        Domain::Fiber => ScalarField::from_samples(h.grid(), Domain::Fiber, s.apply_samples(h.samples())?),
        Domain::Product => {
            let mut out = Vec::with_capacity(h.len());
            for chunk in h.samples().chunks(cells) {
                out.extend(s.apply_samples(chunk)?);
            }
            ScalarField::from_samples(h.grid(), Domain::Product, out)
        }
    }
}

/// `S₂ ∘ S₁`.
pub fn compose_averaging(s2: &AveragingOperator, s1: &AveragingOperator) -> Result<AveragingOperator> {
    s2.compose(s1)
}

/// Per-step record of the flattening recursion.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Section32Report {
    pub m: f64,
    /// `μ(A)` for `A = {H < m/2}`.
    pub mu_a: f64,
    /// `m / (m + 2)`.
    pub mu_bound: f64,
    /// `min_y N′(y) / N`.
    pub n_prime_ratio: f64,
    /// `m / (3c₂ + c₁)`.
    pub n_prime_bound: f64,
    pub family_size: u64,
}

/// Trace of [`flatten_max`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenTrace {
    /// `m_i = max H^{(i)}`.
    pub m: Vec<f64>,
    pub operators: Vec<AveragingOperator>,
    pub c1: u64,
    pub c2: u64,
    /// `c = 2(3c₂ + c₁)`.
    pub c: f64,
    pub steps: Vec<Section32Report>,
}

impl FlattenTrace {
    /// `m_i (1 − m_i/c)` for each step taken.
    pub fn contraction_bounds(&self) -> Vec<f64> {
        self.m
            .iter()
            .take(self.m.len().saturating_sub(1))
            .map(|&m| m * (1.0 - m / self.c))
            .collect()
    }

    pub fn satisfies_contraction(&self) -> bool {
        self.m
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 - w[0] / self.c) + BOUND_SLACK && w[1] <= w[0] + BOUND_SLACK)
    }

    pub fn iterations(&self) -> usize {
        self.m.len().saturating_sub(1)
    }
}

fn max_of(h: &[f64]) -> f64 {
    h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Checks `μ(A) ≥ m/(m+2)` and `N′/N ≥ m/(3c₂+c₁)` for one recursion step.
/// Returns `None` for `m ≤ 0`.
pub fn section32_bounds_check(
    h: &[f64],
    a: &[usize],
    family: &CoveringFamily,
    c1: u64,
    c2: u64,
) -> Result<Option<Section32Report>> {
    let m = max_of(h);
    if !(m > 0.0) {
        return Ok(None);
    }
    let mu_a = a.len() as f64 / h.len() as f64;
    let mu_bound = m / (m + 2.0);
    if mu_a < mu_bound - BOUND_SLACK {
        return Err(Error::BoundViolated {
            source_tag: "§3.2 μ(A) ≥ m/(m+2)",
            detail: format!("μ(A) = {mu_a}, bound {mu_bound}"),
        });
    }
    let nu = family.counting_of(a);
    let n = family.total();
    let min_nu = nu.iter().copied().min().unwrap_or(0);
    let n_prime_ratio = min_nu as f64 / n as f64;
    let c3 = (3 * c2 + c1) as f64;
    let n_prime_bound = m / c3;
    if n_prime_ratio < n_prime_bound - BOUND_SLACK {
        return Err(Error::BoundViolated {
            source_tag: "§3.2 N′/N ≥ m/c₃",
            detail: format!("N′/N = {n_prime_ratio}, bound {n_prime_bound}"),
        });
    }
    Ok(Some(Section32Report {
        m,
        mu_a,
        mu_bound,
        n_prime_ratio,
        n_prime_bound,
        family_size: n,
    }))
}

fn check_input(h: &[f64]) -> Result<()> {
    if h.is_empty() {
        return Err(Error::Precondition("empty field".into()));
    }
    let sup = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if !(sup <= 1.0 + 1e-12) {
        return Err(Error::Precondition(format!("‖H‖ = {sup} exceeds 1")));
    }
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    if mean.abs() > 1e-10 {
        return Err(Error::NotNormalized(format!("mean {mean:e}")));
    }
    Ok(())
}

/// Drives `max H` below `target`: at each step averages over a covering of
/// `A = {H < m/2}` (strict), checking the contraction and §3.2 bounds.
pub fn flatten_max_samples<O: CoveringOracle + ?Sized>(
    h: &[f64],
    oracle: &O,
    target: f64,
    max_iter: usize,
) -> Result<(AveragingOperator, FlattenTrace, Vec<f64>)> {
    check_input(h)?;
    if !(target > 0.0) {
        return Err(Error::Precondition("target must be positive".into()));
    }
    let (c1, c2) = oracle.constants();
    let c = 2.0 * (3 * c2 + c1) as f64;
    let mut cur = h.to_vec();
    let mut m = max_of(&cur);
    let mut trace = FlattenTrace {
        m: vec![m],
        operators: Vec::new(),
        c1,
        c2,
        c,
        steps: Vec::new(),
    };
    let mut total = AveragingOperator::identity(h.len());
    let mut iter = 0usize;
    while m >= target {
        if iter == max_iter {
            return Err(Error::BudgetExhausted {
                max_iter,
                last_max: m,
                trace: trace.m,
            });
        }
        let a: Vec<usize> = (0..cur.len()).filter(|&i| cur[i] < 0.5 * m).collect();
        let family = oracle.cover(&a)?;
        if let Some(report) = section32_bounds_check(&cur, &a, &family, c1, c2)? {
            trace.steps.push(report);
        }
        let s = AveragingOperator::from_family(&family)?;
        let next = s.apply_samples(&cur)?;
        let m_next = max_of(&next);
        if m_next > m * (1.0 - m / c) + BOUND_SLACK {
            return Err(Error::BoundViolated {
                source_tag: "Lemma 3.1.A",
                detail: format!("m_{} = {m_next} exceeds {m}(1 − {m}/{c})", iter + 1),
            });
        }
        total = s.compose(&total)?;
        trace.operators.push(s);
        trace.m.push(m_next);
        cur = next;
        m = m_next;
        iter += 1;
    }
    Ok((total, trace, cur))
}

/// [`flatten_max_samples`] on a fiber field.
pub fn flatten_max<O: CoveringOracle + ?Sized>(
    h: &ScalarField,
    oracle: &O,
    target: f64,
    max_iter: usize,
) -> Result<(AveragingOperator, FlattenTrace)> {
    if h.domain() != Domain::Fiber {
        return Err(Error::DomainMismatch("flattening acts on fiber fields".into()));
    }
    let (s, trace, _) = flatten_max_samples(h.samples(), oracle, target, max_iter)?;
    Ok((s, trace))
}

/// Result of [`flatten_sup`].
#[derive(Clone, Debug)]
pub struct FlattenSup {
    /// `S = S₋ ∘ S₊`.
    pub operator: AveragingOperator,
    pub plus: FlattenTrace,
    pub minus: FlattenTrace,
    pub result: Vec<f64>,
    pub sup_norm: f64,
}

impl FlattenSup {
    pub fn iterations(&self) -> usize {
        self.plus.iterations() + self.minus.iterations()
    }
}

/// `S = S₋ ∘ S₊` with `‖S(H)‖ < ε`: flatten the max of `H`, then the max of
/// `−S₊(H)`.
pub fn flatten_sup_samples<O: CoveringOracle + ?Sized>(
    h: &[f64],
    oracle: &O,
    eps: f64,
    max_iter: usize,
) -> Result<FlattenSup> {
    let (s_plus, plus, after_plus) = flatten_max_samples(h, oracle, eps, max_iter)?;
    let negated: Vec<f64> = after_plus.iter().map(|v| -v).collect();
    let (s_minus, minus, after_minus) = flatten_max_samples(&negated, oracle, eps, max_iter)?;
    let result: Vec<f64> = after_minus.iter().map(|v| -v).collect();
    let sup_norm = result.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok(FlattenSup {
        operator: s_minus.compose(&s_plus)?,
        plus,
        minus,
        result,
        sup_norm,
    })
}

/// [`flatten_sup_samples`] on a fiber field.
pub fn flatten_sup<O: CoveringOracle + ?Sized>(
    h: &ScalarField,
    oracle: &O,
    eps: f64,
    max_iter: usize,
) -> Result<FlattenSup> {
    if h.domain() != Domain::Fiber {
        return Err(Error::DomainMismatch("flattening acts on fiber fields".into()));
    }
    flatten_sup_samples(h.samples(), oracle, eps, max_iter)
}

/// All cyclic shifts `i ↦ i + k mod M` of the cell index: an exact covering
/// with constants `(0, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct ShiftOracle {
    pub universe: usize,
}

impl CoveringOracle for ShiftOracle {
    fn constants(&self) -> (u64, u64) {
        (0, 1)
    }

    fn cover(&self, a: &[usize]) -> Result<CoveringFamily> {
        let m = self.universe;
        let maps = (0..m)
            .map(|k| CellPermutation::new((0..m).map(|i| (i + k) % m).collect()))
            .collect::<Result<Vec<_>>>()?;
        CoveringFamily::new(m, a.to_vec(), maps, vec![1; m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::BandCoveringOracle;
    use crate::phase::TorusGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_zero_mean(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let v: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let sup = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        v.iter().map(|x| x / sup).collect()
    }

    #[test]
    fn identity_map_is_identity() {
        let s = AveragingOperator::from_maps(vec![CellPermutation::identity(3)]).unwrap();
        assert_eq!(s.apply_samples(&[0.5, -0.25, -0.25]).unwrap(), vec![0.5, -0.25, -0.25]);
    }

    #[test]
    fn swap_kills_two_cell_field() {
        let s = AveragingOperator::from_maps(vec![
            CellPermutation::identity(2),
            CellPermutation::transposition(2, 0, 1),
        ])
        .unwrap();
        assert_eq!(s.apply_samples(&[1.0, -1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn non_expansive_and_mean_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = 16;
            let h = random_zero_mean(&mut rng, n);
            let maps: Vec<CellPermutation> = (0..rng.gen_range(1..5))
                .map(|_| {
                    let mut f: Vec<usize> = (0..n).collect();
                    for i in (1..n).rev() {
                        f.swap(i, rng.gen_range(0..=i));
                    }
                    CellPermutation::new(f).unwrap()
                })
                .collect();
            let s = AveragingOperator::from_maps(maps).unwrap();
            let out = s.apply_samples(&h).unwrap();
            let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
            assert!(sup(&out) <= sup(&h) + 1e-15);
            assert!((out.iter().sum::<f64>() / n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn composition_sizes_and_action() {
        let n = 6;
        let s2 = AveragingOperator::from_maps(vec![CellPermutation::identity(n), CellPermutation::transposition(n, 0, 3)]).unwrap();
        let s1 = AveragingOperator::from_maps(vec![
            CellPermutation::transposition(n, 1, 2),
            CellPermutation::transposition(n, 4, 5),
            CellPermutation::new(vec![1, 2, 3, 4, 5, 0]).unwrap(),
        ])
        .unwrap();
        let c = compose_averaging(&s2, &s1).unwrap();
        assert_eq!(c.map_count(), 6);
        let h = [0.5, -0.1, 0.3, -0.4, 0.2, -0.5];
        let twice = s2.apply_samples(&s1.apply_samples(&h).unwrap()).unwrap();
        let flat = c.expand().unwrap();
        assert_eq!(flat.stages().len(), 1);
        for (a, b) in flat.apply_samples(&h).unwrap().iter().zip(&twice) {
            assert!((a - b).abs() < 1e-15);
        }
        let id = AveragingOperator::identity(n);
        assert_eq!(id.compose(&s1).unwrap().apply_samples(&h).unwrap(), s1.apply_samples(&h).unwrap());
    }

    #[test]
    fn zero_field_needs_no_steps() {
        let (s, trace, _) = flatten_max_samples(&[0.0; 8], &ShiftOracle { universe: 8 }, 0.01, 10).unwrap();
        assert!(s.is_identity());
        assert_eq!(trace.m, vec![0.0]);
    }

    #[test]
    fn first_step_bound_with_optimal_constants() {
        let mut h = vec![-1.0 / 7.0; 8];
        h[0] = 1.0;
        let (_, trace, _) = flatten_max_samples(&h, &ShiftOracle { universe: 8 }, 0.01, 100).unwrap();
        assert_eq!(trace.c, 6.0);
        assert!(trace.m[1] <= 5.0 / 6.0);
        assert!(trace.satisfies_contraction());
    }

    #[test]
    fn two_cell_swap_oracle() {
        let (_, trace, out) = flatten_max_samples(&[1.0, -1.0], &ShiftOracle { universe: 2 }, 0.01, 5).unwrap();
        assert_eq!(trace.m, vec![1.0, 0.0]);
        assert_eq!(out, vec![0.0, 0.0]);
        let rep = &trace.steps[0];
        assert_eq!(rep.mu_a, 0.5);
        assert!(rep.mu_a >= 1.0 / 3.0);
        assert_eq!(rep.n_prime_ratio, 0.5);
    }

    #[test]
    fn section32_zero_field_skipped() {
        let fam = CoveringFamily::trivial(4);
        assert_eq!(section32_bounds_check(&[0.0; 4], &[0, 1, 2, 3], &fam, 0, 1).unwrap(), None);
    }

    #[test]
    fn flatten_sup_on_torus_field() {
        let grid = TorusGrid::new(2, [32, 32]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = random_zero_mean(&mut rng, 1024);
        let h = ScalarField::from_samples(grid, Domain::Fiber, samples).unwrap();
        let oracle = BandCoveringOracle::new([32, 32], 1).unwrap();
        let out = flatten_sup(&h, &oracle, 0.05, DEFAULT_MAX_ITER).unwrap();
        assert!(out.sup_norm < 0.05);
        assert!(out.plus.satisfies_contraction() && out.minus.satisfies_contraction());
        let applied = apply_averaging(&out.operator, &h).unwrap();
        assert!((applied.sup_norm() - out.sup_norm).abs() < 1e-12);
        assert!(applied.mean().abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_carries_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_zero_mean(&mut rng, 64);
        let oracle = BandCoveringOracle::new([8, 8], 1).unwrap();
        match flatten_max_samples(&h, &oracle, 1e-9, 1) {
            Err(Error::BudgetExhausted { max_iter, trace, .. }) => {
                assert_eq!(max_iter, 1);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }
}
