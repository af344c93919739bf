//! Normalized Hofer lengths of Birkhoff-shortened loops in the Furstenberg
//! skew product, against the closed form |sin πNβ| / (N sin πβ).

use std::f64::consts::PI;

use ergoloop::constants::{GOLDEN, SQRT2M1};
use ergoloop::dynamics::SkewProduct;
use ergoloop::hofer::NormalizedHamiltonian;
use ergoloop::phase::{Catalog, TorusGrid, TrigMonomial};
use ergoloop::shortening::normalized_length_sequence;

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::cubic(64)?;
    let h = NormalizedHamiltonian::trig(Catalog::Trig(TrigMonomial::cos_y(1.0, [0, 1])))?;
    let skew = SkewProduct::furstenberg(GOLDEN, SQRT2M1);
    let ns = [1, 10, 100, 1000, 10_000];
    let trace = normalized_length_sequence(&h, &skew, &ns, grid)?;
    println!("{:>6} {:>14} {:>14}", "N", "ell_N", "closed form");
    for (n, ell) in trace.ns.iter().zip(&trace.lengths) {
        let exact = (PI * *n as f64 * SQRT2M1).sin().abs() / (*n as f64 * (PI * SQRT2M1).sin());
        println!("{n:>6} {ell:>14.6e} {exact:>14.6e}");
    }
    let control = normalized_length_sequence(&h, &SkewProduct::identity(), &ns[..3], grid)?;
    println!("identity skew product: {:?}", control.lengths);
    Ok(())
}
