//! Breaking minimality of the doubled closed geodesic with torus
//! translations: a(0) = max|F_2(0, ·)| against b(0) = 2 max|H(0, ·)|.

use ergoloop::hofer::{Axis, NormalizedHamiltonian, Profile};
use ergoloop::phase::TorusGrid;
use ergoloop::shortening::break_minimal_geodesic;

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::cubic(32)?;
    let h = NormalizedHamiltonian::shear(Axis::Y1, 1.0, Profile::Cosine);
    for n in [2, 4] {
        let br = break_minimal_geodesic(&h, n, 20_000, grid)?;
        println!(
            "N = {n}: a(0) = {:.3e}, b(0) = {:.3}, ∫a = {:.4}, ∫b = {:.4}, g_1 = {:?}",
            br.a0, br.b0, br.a_integral, br.b_integral, br.translations[0]
        );
    }
    Ok(())
}
