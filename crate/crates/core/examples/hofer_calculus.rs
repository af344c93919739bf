//! Loop calculus for normalized Hamiltonians: composition, inversion, Hofer
//! length and RK4 closure defects.

use ergoloop::hofer::{catalog_pair, compose_loops, invert_loop, loop_length, LoopFlow};
use ergoloop::phase::TorusGrid;

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::cubic(64)?;
    let (h1, h2) = catalog_pair();
    let composed = compose_loops(&h2, &h1);
    let inverse = invert_loop(&h1);
    println!("length(H1) = {:.6}", loop_length(&h1, grid));
    println!("length(H2) = {:.6}", loop_length(&h2, grid));
    println!("length(H2 # H1) = {:.6}", loop_length(&composed, grid));
    println!("length(inverse H1) = {:.6}", loop_length(&inverse, grid));

    let y = [0.3, 0.6];
    for t in [0.25, 0.5, 0.75] {
        let direct = composed.flow_point(t, y, 2048);
        let stepwise = h2.flow_point(t, h1.flow_point(t, y, 2048), 2048);
        println!("t = {t}: |flow(compose) - flow∘flow| = {:.2e}", ergoloop::phase::torus_distance(direct, stepwise));
    }
    for steps in [16, 32, 64, 128] {
        let defect = LoopFlow::new(composed.clone(), steps)?.closure_defect([32, 32]);
        println!("closure defect with {steps:>3} RK4 steps: {defect:.3e}");
    }
    Ok(())
}
