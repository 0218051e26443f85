//! Empirical spectral measure of a cycle, compared against the exact
//! eigenvalues (2 pi k / N)^2 and against the smoothed spectral density
//! obtained from the Green's function.

use qgs::ensembles::{generate, ChiFn, ConditionLaw, EnsembleSpec, Family, LengthLaw};
use qgs::greens::smoothed_spectral_density;
use qgs::spectral::{eigenvalues_up_to, empirical_measure, ScanOptions};

fn main() {
    let n = 12;
    let q = generate(
        &EnsembleSpec {
            family: Family::Cycle,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 0,
        },
        n,
    )
    .unwrap();

    let sd = eigenvalues_up_to(&q, 40.0, ScanOptions::default()).unwrap();
    println!("C_{n} eigenvalues up to 40 (exact: (2 pi k / {n})^2, multiplicity 2):");
    for ev in &sd.eigenvalues {
        println!("  lambda = {:>12.8}  multiplicity {}", ev.lambda, ev.multiplicity);
    }

    let mu = empirical_measure(&sd);
    let chi = ChiFn::Bump { a: 1.0, b: 16.0 };
    println!("\nmu(chi) for a bump on [1, 16]: {:.8}", mu.evaluate(|l| chi.eval(l)));
    println!("mu([0, 20]) = {:.8}", mu.mass_up_to(20.0));

    // the eps-smoothed density is a sum of Lorentzians around the atoms and
    // sharpens as eps decreases
    let grid: Vec<f64> = (0..=40).map(|i| i as f64).collect();
    for eps in [1.0, 0.25] {
        let dens = smoothed_spectral_density(&q, &grid, eps).unwrap();
        let peak = dens.iter().cloned().fold(f64::MIN, f64::max);
        println!("eps = {eps:<4}: density peak {peak:.5}");
    }
}
