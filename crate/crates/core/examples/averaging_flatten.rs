//! Recursive averaging of a random zero-mean field with the band covering
//! oracle, printing the trace of maxima against the contraction bound.

use ergoloop::averaging::{apply_averaging, flatten_sup, CoveringOracle, DEFAULT_MAX_ITER};
use ergoloop::covering::BandCoveringOracle;
use ergoloop::phase::{Domain, ScalarField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::new(2, [32, 32])?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw: Vec<f64> = (0..grid.fiber_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = ScalarField::from_samples(grid, Domain::Fiber, raw)?.normalize_zero_mean();
    let h = h.scale(1.0 / h.sup_norm());

    let oracle = BandCoveringOracle::new([32, 32], 1)?;
    println!("oracle constants (c1, c2) = {:?}", oracle.constants());
    let out = flatten_sup(&h, &oracle, 0.05, DEFAULT_MAX_ITER)?;
    for (side, trace) in [("max", &out.plus), ("-min", &out.minus)] {
        for (i, (m, b)) in trace.m.iter().skip(1).zip(trace.contraction_bounds()).enumerate() {
            println!("{side} step {:>2}: m = {m:.4}  bound = {b:.4}", i + 1);
        }
    }
    let s_h = apply_averaging(&out.operator, &h)?;
    println!("‖S(H)‖ = {:.4} with {} averaging maps", s_h.sup_norm(), out.operator.map_count());
    Ok(())
}
