//! Acceptance suite: one PASS/FAIL line per criterion. Every check uses an
//! oracle written here, independent of the library code path it checks.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use ergoloop::averaging::{flatten_sup_samples, CoveringOracle, FlattenTrace};
use ergoloop::constants::{GOLDEN, SQRT2M1};
use ergoloop::construct::{
    certify_minimality, certify_unique_ergodicity, conjugator_for_minimality, conjugator_for_unique_ergodicity,
    fiberwise_center, loop_for_property_21a, product_set, PeriodicLoop, Rational,
};
use ergoloop::covering::{band_charts, covering_global, transport_4_2_c, BandCoveringOracle, CoveringFamily, PLANAR_CLASSES};
use ergoloop::dynamics::SkewProduct;
use ergoloop::hofer::{catalog_pair, compose_loops, flow_of_hamiltonian, loop_length, Axis, LoopFlow, NormalizedHamiltonian, Profile};
use ergoloop::phase::{torus_distance, wrap, Catalog, ScalarField, TorusGrid, TrigMonomial};
use ergoloop::shortening::{break_minimal_geodesic, normalized_length_sequence};
use ergoloop::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as literally stated; see the README.
const INFEASIBLE: &[usize] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
    /// For infeasible criteria: the feasible part found no counterexample.
    partial_ok: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome {
            pass,
            detail,
            partial_ok: pass,
        }
    }
}

fn cos_y2() -> NormalizedHamiltonian {
    NormalizedHamiltonian::trig(Catalog::Trig(TrigMonomial::cos_y(1.0, [0, 1]))).unwrap()
}

fn closed_form(n: usize, beta: f64) -> f64 {
    (PI * n as f64 * beta).sin().abs() / (n as f64 * (PI * beta).sin())
}

fn criterion_1() -> Outcome {
    let grid = TorusGrid::cubic(64).unwrap();
    let h = cos_y2();
    let start = Instant::now();
    let trace = normalized_length_sequence(&h, &SkewProduct::furstenberg(GOLDEN, SQRT2M1), &[10, 100, 1000], grid).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let errs: Vec<f64> = trace
        .ns
        .iter()
        .zip(&trace.lengths)
        .map(|(&n, &l)| (l - closed_form(n, SQRT2M1)).abs())
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let l1000 = trace.lengths[2];
    Outcome::new(
        worst <= 1e-9 && l1000 <= 1.1e-3 && secs < 10.0,
        format!("max |ℓ_N − oracle| = {worst:.2e}, ℓ_1000 = {l1000:.4e}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let grid = TorusGrid::cubic(64).unwrap();
    let h = cos_y2();
    let ns = [1, 10, 100, 1000];
    let trace = normalized_length_sequence(&h, &SkewProduct::identity(), &ns, grid).unwrap();
    let length = loop_length(&h, grid);
    let exact = trace.lengths.iter().all(|&l| l == length);
    Outcome::new(exact, format!("length(H) = {length}, ℓ_N = {:?}", trace.lengths))
}

/// Replays one flattening trace with code written here: the set `A`, the
/// counting function of its family, the average and all three bounds.
fn replay(start: &[f64], trace: &FlattenTrace, c1: u64, c2: u64) -> Result<Vec<f64>, String> {
    let c = 2.0 * (3 * c2 + c1) as f64;
    if trace.c1 != c1 || trace.c2 != c2 || trace.c != c {
        return Err("trace constants differ from the oracle's".into());
    }
    let mut cur = start.to_vec();
    for (i, op) in trace.operators.iter().enumerate() {
        let m = cur.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a: Vec<bool> = cur.iter().map(|&v| v < m / 2.0).collect();
        let mu_a = a.iter().filter(|&&x| x).count() as f64 / cur.len() as f64;
        if mu_a < m / (m + 2.0) - 1e-10 {
            return Err(format!("step {i}: μ(A) = {mu_a} < m/(m+2)"));
        }
        let stage = &op.stages()[0];
        let total: u64 = stage.iter().map(|(_, w)| w).sum();
        let mut nu = vec![0u64; cur.len()];
        let mut next = vec![0.0; cur.len()];
        for (g, w) in stage {
            for (x, &gx) in g.forward().iter().enumerate() {
                if a[x] {
                    nu[gx] += w;
                }
                next[gx] += *w as f64 * cur[x];
            }
        }
        let ratio = *nu.iter().min().unwrap() as f64 / total as f64;
        if ratio < m / (3 * c2 + c1) as f64 - 1e-10 {
            return Err(format!("step {i}: N′/N = {ratio} < m/(3c₂+c₁)"));
        }
        next.iter_mut().for_each(|v| *v /= total as f64);
        let m_next = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m_next > m * (1.0 - m / c) + 1e-10 {
            return Err(format!("step {i}: m' = {m_next} > m(1 − m/c)"));
        }
        if (m_next - trace.m[i + 1]).abs() > 1e-12 {
            return Err(format!("step {i}: reported m = {}, replayed {m_next}", trace.m[i + 1]));
        }
        cur = next;
    }
    Ok(cur)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let sizes = [16usize, 32, 64];
    let fields = 54;
    let mut worst_iters = 0usize;
    let mut allowance = 0usize;
    let mut worst_sup: f64 = 0.0;
    for k in 0..fields {
        let n = sizes[k % sizes.len()];
        let oracle = BandCoveringOracle::new([n, n], 1 + k % 2).unwrap();
        let (c1, c2) = oracle.constants();
        let c = 2.0 * (3 * c2 + c1) as f64;
        let budget = (3.0 * c / 0.05).ceil() as usize;
        allowance = allowance.max(budget);
        let mut h: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        h.iter_mut().for_each(|v| *v -= mean);
        let sup = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        h.iter_mut().for_each(|v| *v /= sup);
        let out = match flatten_sup_samples(&h, &oracle, 0.05, budget) {
            Ok(out) => out,
            Err(e) => return Outcome::new(false, format!("field {k} ({n}×{n}): {e}")),
        };
        let after_plus = match replay(&h, &out.plus, c1, c2) {
            Ok(v) => v,
            Err(e) => return Outcome::new(false, format!("field {k}, max side: {e}")),
        };
        let negated: Vec<f64> = after_plus.iter().map(|v| -v).collect();
        let after_minus = match replay(&negated, &out.minus, c1, c2) {
            Ok(v) => v,
            Err(e) => return Outcome::new(false, format!("field {k}, min side: {e}")),
        };
        let sup_final = after_minus.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let iters = out.iterations();
        if sup_final >= 0.05 || iters > budget {
            return Outcome::new(false, format!("field {k}: ‖S(H)‖ = {sup_final} after {iters} of {budget}"));
        }
        worst_iters = worst_iters.max(iters);
        worst_sup = worst_sup.max(sup_final);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        secs < 60.0,
        format!("{fields} fields up to 64×64: worst ‖S(H)‖ = {worst_sup:.6}, ≤ {worst_iters} iterations (allowance {allowance}), {secs:.1} s"),
    )
}

/// Integer recount of the covering inequality, independent of `verify_covering`.
fn recount(family: &CoveringFamily, a: &[usize], c1: u64, c2: u64) -> (bool, u64, u64) {
    let mut nu = vec![0u64; family.universe];
    for (g, &w) in family.maps.iter().zip(&family.multiplicities) {
        for &x in a {
            nu[g.forward()[x]] += w;
        }
    }
    let total: u64 = family.multiplicities.iter().sum();
    let min = *nu.iter().min().unwrap();
    let k = a.len() as u128;
    let ok = min as u128 * (c1 as u128 * k + c2 as u128 * family.universe as u128) >= total as u128 * k;
    (ok, min, total)
}

fn translate(set: &[usize], d: [usize; 2], n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = set
        .iter()
        .map(|&c| ((c / n + d[0]) % n) * n + (c % n + d[1]) % n)
        .collect();
    out.sort_unstable();
    out
}

/// Smallest translate among those moving some cell to 0.
fn is_canonical(set: &[usize], n: usize) -> bool {
    set.iter().all(|&c| {
        let d = [(n - c / n) % n, (n - c % n) % n];
        translate(set, d, n).as_slice() >= set
    })
}

fn check_subset(a: &[usize], n: usize, charts: &[Vec<Vec<usize>>]) -> Result<(), String> {
    for (ri, ch) in charts.iter().enumerate() {
        let r = ri + 1;
        if a.len() < r {
            continue;
        }
        let g = covering_global(n * n, ch, a).map_err(|e| format!("{a:?}, r = {r}: {e}"))?;
        if (g.c1, g.c2) != (r as u64 * PLANAR_CLASSES as u64, 4 * r as u64) {
            return Err(format!("constants {:?} for r = {r}", (g.c1, g.c2)));
        }
        let v = ergoloop::covering::verify_covering(&g.family, a, g.c1, g.c2);
        let (ok, min, total) = recount(&g.family, a, g.c1, g.c2);
        if !v.pass || !ok || v.worst_count != min || v.total != total {
            return Err(format!("{a:?}, r = {r}: verdict {v:?}, recount ({ok}, {min}, {total})"));
        }
    }
    Ok(())
}

fn enumerate(n: usize, k: usize, cur: &mut Vec<usize>, charts: &[Vec<Vec<usize>>], count: &mut usize) -> Result<(), String> {
    if cur.len() == k {
        if is_canonical(cur, n) {
            check_subset(cur, n, charts)?;
            *count += 1;
        }
        return Ok(());
    }
    let from = cur.last().map_or(0, |&c| c + 1);
    for c in from..n * n {
        if cur.is_empty() && c > 0 {
            break;
        }
        cur.push(c);
        enumerate(n, k, cur, charts, count)?;
        cur.pop();
    }
    Ok(())
}

/// Number of translation classes of `k`-subsets of the 8×8 torus, by Burnside.
fn translation_classes(k: u32) -> f64 {
    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let mut sum = 0.0;
    for d1 in 0..8u64 {
        for d2 in 0..8u64 {
            let ord = 8 / gcd(gcd(d1, 8), gcd(d2, 8));
            if k as u64 % ord == 0 {
                sum += binom(64 / ord, k as u64 / ord);
            }
        }
    }
    sum / 64.0
}

fn criterion_4() -> Outcome {
    let n = 8;
    let exhaustive_max = 5;
    let start = Instant::now();
    let charts: Vec<Vec<Vec<usize>>> = [1, 2].iter().map(|&r| band_charts([n, n], r).unwrap()).collect();
    let mut classes = 0usize;
    for k in 1..=exhaustive_max {
        if let Err(e) = enumerate(n, k, &mut Vec::new(), &charts, &mut classes) {
            return Outcome::new(false, e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cells: Vec<usize> = (0..n * n).collect();
    let per_size = 2000;
    for k in exhaustive_max + 1..=16 {
        for _ in 0..per_size {
            cells.shuffle(&mut rng);
            let mut a = cells[..k].to_vec();
            a.sort_unstable();
            if let Err(e) = check_subset(&a, n, &charts) {
                return Outcome::new(false, e);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let required: f64 = (1..=16).map(translation_classes).sum();
    let sampled = per_size * (16 - exhaustive_max);
    Outcome {
        pass: false,
        partial_ok: true,
        detail: format!(
            "exhaustive scope needs {required:.2e} translation classes; checked all {classes} classes with |A| ≤ {exhaustive_max} \
             and {sampled} seeded subsets with 6 ≤ |A| ≤ 16, r ∈ {{1, 2}}: no violation, recount exact, {secs:.1} s"
        ),
    }
}

fn criterion_5() -> Outcome {
    let lattice = [32usize, 32];
    let universe = lattice[0] * lattice[1];
    let c = PLANAR_CLASSES;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cells: Vec<usize> = (0..universe).collect();
    let mut max_plans = 0;
    for k in 0..100 {
        cells.shuffle(&mut rng);
        let size_a = rng.gen_range(2 * c + 1..universe);
        let a = cells[..size_a].to_vec();
        // B mostly outside A, so plans must actually move cubes.
        let b = if k % 10 == 0 {
            vec![a[0]]
        } else {
            vec![cells[rng.gen_range(size_a..universe)]]
        };
        let t = match transport_4_2_c(&a, &b, lattice) {
            Ok(t) => t,
            Err(e) => return Outcome::new(false, format!("fixture {k}: {e}")),
        };
        if t.plans.len() > c {
            return Outcome::new(false, format!("fixture {k}: {} plans", t.plans.len()));
        }
        let mut in_a = vec![false; universe];
        a.iter().for_each(|&x| in_a[x] = true);
        for &y in &b {
            let hit = t.plans.iter().any(|p| {
                let f = p.permutation.forward();
                (0..universe).any(|x| in_a[x] && f[x] == y)
            });
            if !hit {
                return Outcome::new(false, format!("fixture {k}: cell {y} of B not covered"));
            }
        }
        for p in &t.plans {
            let mut inside = vec![false; universe];
            p.support.iter().for_each(|&x| inside[x] = true);
            if let Some(x) = (0..universe).find(|&x| !inside[x] && p.permutation.forward()[x] != x) {
                return Outcome::new(false, format!("fixture {k}: cell {x} outside the support moves"));
            }
        }
        max_plans = max_plans.max(t.plans.len());
    }
    let mut rejected = 0;
    for k in 0..100 {
        cells.shuffle(&mut rng);
        let size_b = rng.gen_range(1..4);
        let size_a = rng.gen_range(1..=(2 * c * size_b).min(universe - size_b));
        let a = &cells[..size_a];
        let b = &cells[universe - size_b..];
        match transport_4_2_c(a, b, lattice) {
            Err(Error::TransportHypothesis { .. }) => rejected += 1,
            other => return Outcome::new(false, format!("violating fixture {k} not rejected: {:?}", other.map(|t| t.plans.len()))),
        }
    }
    Outcome::new(
        true,
        format!("100 fixtures covered with ≤ {max_plans} plans, supports exact; {rejected}/100 violating fixtures rejected"),
    )
}

/// `max_y |∫₀¹ F(t, g(t)⁻¹ y)| dt` at every grid node, by a composite
/// midpoint rule with `per_period` samples per period of `g`.
fn fiber_integral_sup(f: &ScalarField, g: &PeriodicLoop, per_period: usize) -> f64 {
    let grid = f.grid();
    let samples = g.m as usize * per_period;
    (0..grid.fiber_cells())
        .map(|c| {
            let y = grid.y_node(c);
            let s: f64 = (0..samples)
                .map(|k| {
                    let t = (k as f64 + 0.5) / samples as f64;
                    f.value_at(t, g.apply_inverse(t, y))
                })
                .sum();
            (s / samples as f64).abs()
        })
        .fold(0.0, f64::max)
}

/// `g(t + r) = g(t)` bit for bit at every node of the loop's time grid,
/// with the shifted node computed here.
fn period_exact_independent(g: &PeriodicLoop, res: [usize; 2]) -> bool {
    let n = g.res_t;
    let shift = (g.r.num.rem_euclid(g.r.den as i64) as usize) * (n / g.r.den as usize);
    (0..n).all(|j| {
        (0..res[0] * res[1]).step_by(7).all(|c| {
            let y = [(c / res[1]) as f64 / res[0] as f64, (c % res[1]) as f64 / res[1] as f64];
            let a = g.apply_at_node(j, y);
            let b = g.apply_at_node((j + shift) % n, y);
            a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()
        })
    })
}

fn criterion_6() -> Outcome {
    let grid = TorusGrid::cubic(32).unwrap();
    let f = fiberwise_center(&ScalarField::from_fn_product(grid, |t, y| (TAU * (t + y[1])).cos()));
    let r = Rational::new(1, 3).unwrap();
    let g = match loop_for_property_21a(&f, 0.1, r) {
        Ok(g) => g,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let rep = g.report.clone().unwrap();
    let period = period_exact_independent(&g, grid.res_y());
    let i_sup = fiber_integral_sup(&f, &g, 32);
    let pass = period && i_sup < 0.1 && rep.j_max < rep.j_bound && g.m % r.den == 0;
    Outcome::new(
        pass,
        format!(
            "{}, M = {}; (ii) exact on {} nodes: {period}; (i) sup|I| = {i_sup:.2e}; max|J_i| = {:.2e} < ε/3M = {:.2e}",
            rep.inner, g.m, g.res_t, rep.j_max, rep.j_bound
        ),
    )
}

fn criterion_7() -> Outcome {
    let grid = TorusGrid::cubic(32).unwrap();
    let r = Rational::new(1, 3).unwrap();
    let v: Vec<usize> = (0..16).flat_map(|i| (0..16).map(move |j| grid.join_cell(i, j))).collect();
    let u = product_set(&grid, 0..32, &v);
    let quarter = u.len() * 4 == grid.product_cells();
    let (cs, _) = match conjugator_for_minimality(&grid, &u, r) {
        Ok(x) => x,
        Err(e) => return Outcome::new(false, format!("case 1: {e}")),
    };
    let verdict = certify_minimality(&cs, grid, &u, 100_000).unwrap();
    // independent sweep: iterate the conjugated shift from the cell centers of U
    let cells = grid.fiber_cells();
    let mut seen = vec![false; grid.product_cells()];
    let mut pts: Vec<(f64, [f64; 2])> = u
        .iter()
        .map(|&p| {
            let (j, c) = (p / cells, p % cells);
            ((j as f64 + 0.5) / grid.res_t() as f64, grid.y_center(c))
        })
        .collect();
    let mark = |seen: &mut Vec<bool>, pts: &[(f64, [f64; 2])]| {
        for &(t, y) in pts {
            let j = ((wrap(t) * grid.res_t() as f64) as usize).min(grid.res_t() - 1);
            seen[j * cells + grid.cell_of(y)] = true;
        }
    };
    mark(&mut seen, &pts);
    let mut steps = 0;
    while seen.iter().any(|&s| !s) && steps < 100_000 {
        for p in pts.iter_mut() {
            let q = cs.apply(ergoloop::dynamics::Point::new(p.0, p.1));
            *p = (q.t, q.y);
        }
        steps += 1;
        mark(&mut seen, &pts);
    }
    let case1 = quarter && verdict.is_covered() && seen.iter().all(|&s| s);

    let f = fiberwise_center(&ScalarField::from_fn_product(grid, |t, y| {
        (TAU * (t + y[1])).cos() * (1.0 + 0.5 * (TAU * y[0]).cos())
    }));
    let eps = 0.1;
    let cs2 = match conjugator_for_unique_ergodicity(&f, eps, r) {
        Ok(x) => x,
        Err(e) => return Outcome::new(false, format!("case 2: {e}")),
    };
    let cert = certify_unique_ergodicity(&cs2, &f, eps, 100_000).unwrap();
    let i_sup = fiber_integral_sup(&f, &cs2.g, 32);
    // independent G_N at the grid nodes
    let g_norm = cert.n.map(|n| {
        (0..grid.product_cells())
            .map(|p| {
                let (t, y) = (grid.t_node(p / cells), grid.y_node(p % cells));
                let s: f64 = (0..n)
                    .map(|k| {
                        let tt = t + k as f64 * cs2.alpha;
                        f.value_at(tt, cs2.g.apply_inverse(tt, y))
                    })
                    .sum();
                (s / n as f64).abs()
            })
            .fold(0.0, f64::max)
    });
    let case2 = matches!(g_norm, Some(g) if g < eps) && i_sup < eps / 2.0;
    Outcome::new(
        case1 && case2,
        format!(
            "case 1: {:?}, independent sweep covered after {steps} steps; case 2: N = {:?}, ‖G_N‖ = {:.3e}, sup|I| = {i_sup:.2e}",
            verdict,
            cert.n,
            g_norm.unwrap_or(f64::NAN)
        ),
    )
}

fn shear_flow(axis: Axis, amp: f64, profile: Profile, t: f64, y: [f64; 2]) -> [f64; 2] {
    let s = match profile {
        Profile::SinSquared => (PI * t).sin().powi(2),
        Profile::Cosine => (TAU * t).sin() / TAU,
        Profile::Constant => t,
    };
    let c = TAU * amp * s;
    match axis {
        Axis::Y1 => [y[0], wrap(y[1] + c * (TAU * y[0]).sin())],
        Axis::Y2 => [wrap(y[0] - c * (TAU * y[1]).sin()), y[1]],
    }
}

fn criterion_8() -> Outcome {
    let (h2, h1) = catalog_pair();
    let composed = compose_loops(&h2, &h1);
    let res = [32usize, 32];
    let mut dev: f64 = 0.0;
    for t in [0.25, 0.5, 0.75, 1.0] {
        let map = flow_of_hamiltonian(&composed, t, 2048).unwrap();
        for i in 0..res[0] {
            for j in 0..res[1] {
                let y = [(i as f64 + 0.5) / res[0] as f64, (j as f64 + 0.5) / res[1] as f64];
                let inner = shear_flow(Axis::Y2, 0.1, Profile::Cosine, t, y);
                let oracle = shear_flow(Axis::Y1, 0.1, Profile::SinSquared, t, inner);
                dev = dev.max(torus_distance(map.apply_point(y), oracle));
            }
        }
    }
    let grid = TorusGrid::new(64, [32, 32]).unwrap();
    let amp = 0.7;
    let shear = NormalizedHamiltonian::shear(Axis::Y1, amp, Profile::SinSquared);
    let len = loop_length(&shear, grid);
    let len_err = (len - 2.0 * amp).abs();
    let d1 = LoopFlow::new(composed.clone(), 32).unwrap().closure_defect([8, 8]);
    let d2 = LoopFlow::new(composed, 64).unwrap().closure_defect([8, 8]);
    let ratio = d1 / d2;
    Outcome::new(
        dev <= 1e-6 && len_err <= 2.0 / 64.0 && (12.0..=20.0).contains(&ratio),
        format!("compose deviation {dev:.2e}; |length − 2 max|G|| = {len_err:.2e}; step-halving ratio {ratio:.2}"),
    )
}

fn criterion_9() -> Outcome {
    let grid = TorusGrid::cubic(32).unwrap();
    let h = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::Cosine);
    let br = match break_minimal_geodesic(&h, 2, 10_000, grid) {
        Ok(b) => b,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    // F_2(t, y) = H(t, y) + H(t, g_1 h(t)⁻¹ y); H depends on y₁ only and the
    // flow moves y₂ only, so a(t) = max |cos 2πt (cos 2πy₁ + cos 2π(y₁ + d))|.
    let d = br.translations[0][0];
    let (nt, ny) = (2000, 2000);
    let mut a_int = 0.0;
    let mut b_int = 0.0;
    let mut a0: f64 = 0.0;
    for k in 0..nt {
        let t = (k as f64 + 0.5) / nt as f64;
        let p = (TAU * t).cos().abs();
        let (mut a, mut b): (f64, f64) = (0.0, 0.0);
        for i in 0..ny {
            let y1 = i as f64 / ny as f64;
            a = a.max(((TAU * y1).cos() + (TAU * (y1 + d)).cos()).abs());
            b = b.max((TAU * y1).cos().abs());
        }
        a_int += p * a / nt as f64;
        b_int += 2.0 * p * b / nt as f64;
    }
    for i in 0..ny {
        let y1 = i as f64 / ny as f64;
        a0 = a0.max(((TAU * y1).cos() + (TAU * (y1 + d)).cos()).abs());
    }
    let pass = br.a0 < 1e-9 && a0 < 1e-9 && (br.b0 - 2.0).abs() < 1e-12 && a_int < b_int;
    Outcome::new(
        pass,
        format!(
            "g_1 = {:?}; a(0) = {:.1e} (oracle {a0:.1e}), b(0) = {}; ∫a = {a_int:.4} < ∫b = {b_int:.4}",
            br.translations[0], br.a0, br.b0
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "shortening decay", criterion_1),
        (2, "identity control", criterion_2),
        (3, "averaging contraction", criterion_3),
        (4, "covering inequality", criterion_4),
        (5, "cube transport", criterion_5),
        (6, "periodic loop construction", criterion_6),
        (7, "conjugated shift certificates", criterion_7),
        (8, "Hofer calculus", criterion_8),
        (9, "geodesic break", criterion_9),
    ];
    let mut ok = true;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {id} {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        let expected = if INFEASIBLE.contains(&id) { out.partial_ok } else { out.pass };
        ok &= expected;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
