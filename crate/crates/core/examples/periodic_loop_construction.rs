//! Periodic loops with small fiber integrals and the conjugated shifts built
//! from them, with their minimality and ergodic-sum certificates.

use std::f64::consts::TAU;

use ergoloop::construct::{
    certify_minimality, certify_unique_ergodicity, conjugator_for_minimality, conjugator_for_unique_ergodicity,
    fiberwise_center, loop_for_property_21a, product_set, Rational,
};
use ergoloop::phase::{ScalarField, TorusGrid};

fn main() -> ergoloop::Result<()> {
    let grid = TorusGrid::cubic(32)?;
    let r = Rational::new(1, 3)?;

    let f = fiberwise_center(&ScalarField::from_fn_product(grid, |t, y| (TAU * (t + y[1])).cos()));
    let g = loop_for_property_21a(&f, 0.1, r)?;
    println!("loop: {}, M = {}, period exact: {}", g.inner.describe(), g.m, g.period_exact());
    println!("{:#?}", g.report.as_ref().expect("report"));

    let v: Vec<usize> = (0..16).flat_map(|i| (0..16).map(move |j| grid.join_cell(i, j))).collect();
    let u = product_set(&grid, 0..32, &v);
    let (cs, sweep) = conjugator_for_minimality(&grid, &u, r)?;
    println!("sweep {}: {:?}", cs.g.inner.describe(), sweep);
    println!("minimality: {:?}", certify_minimality(&cs, grid, &u, 100_000)?);

    let f2 = ScalarField::from_fn_product(grid, |_, y| (TAU * y[1]).cos());
    let cs2 = conjugator_for_unique_ergodicity(&f2, 0.1, r)?;
    println!("ergodic sums: {:?}", certify_unique_ergodicity(&cs2, &f2, 0.1, 100_000)?);
    Ok(())
}
