//! Global covering families from vertical band charts, the exact covering
//! check, and cube transport on a planar lattice.

use ergoloop::covering::{band_charts, covering_global, transport_4_2_c, transport_covers, verify_covering};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ergoloop::Result<()> {
    let res = [16, 16];
    let universe = res[0] * res[1];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cells: Vec<usize> = (0..universe).collect();
    for r in [1, 2, 4] {
        let charts = band_charts(res, r)?;
        for size in [4, 40, 200] {
            cells.shuffle(&mut rng);
            let a = &cells[..size];
            let g = covering_global(universe, &charts, a)?;
            let v = verify_covering(&g.family, a, g.c1, g.c2);
            println!(
                "r = {r}, |A| = {size:>3}: {} maps, worst ratio {:.4} ≥ bound {:.5}: {}",
                g.family.maps.len(),
                v.worst_ratio,
                v.bound,
                v.pass
            );
        }
    }

    let lattice = [32, 32];
    let a: Vec<usize> = (0..600).collect();
    let b = vec![1000];
    let t = transport_4_2_c(&a, &b, lattice)?;
    println!(
        "transport: {} plans, covers B: {}, supports respected: {}",
        t.plans.len(),
        transport_covers(&t.plans, &a, &b),
        t.plans.iter().all(|p| p.fixes_outside_support())
    );
    Ok(())
}
