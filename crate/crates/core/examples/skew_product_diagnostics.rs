//! Minimality and uniform Birkhoff convergence on a finite grid, for the
//! Furstenberg system and a rational negative control.

use ergoloop::constants::{GOLDEN, SQRT2M1};
use ergoloop::dynamics::{birkhoff_uniform_deviation, minimality_diagnostic, unique_ergodicity_diagnostic, SkewProduct};
use ergoloop::phase::{Catalog, TorusGrid, TrigMonomial};

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::cubic(16)?;
    let obs = Catalog::Trig(TrigMonomial::cos_y(1.0, [0, 1]));
    for (name, skew) in [
        ("furstenberg", SkewProduct::furstenberg(GOLDEN, SQRT2M1)),
        ("rational twist", SkewProduct::furstenberg(0.5, 0.25)),
    ] {
        let cover = minimality_diagnostic(&skew, &[0], grid, 200_000)?;
        let ue = unique_ergodicity_diagnostic(&skew, &obs, 0.02, 5_000, grid)?;
        println!("{name}: {cover:?}, {ue:?}");
        for n in [10, 100, 1000] {
            println!("  D_{n} = {:.3e}", birkhoff_uniform_deviation(&skew, &obs, n, grid)?);
        }
    }
    Ok(())
}
