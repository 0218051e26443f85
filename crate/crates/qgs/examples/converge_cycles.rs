//! Desk-scale spectral convergence: empirical spectral measures of growing
//! cycles approach the density of states of the free line,
//! (1/pi) (2 sqrt(lambda))^{-1} dlambda, tested against a smooth bump.

use qgs::ensembles::{convergence_experiment, ChiFn, ConditionLaw, EnsembleSpec, Family, LengthLaw, LimitMode};

fn main() {
    let spec = EnsembleSpec {
        family: Family::Cycle,
        lengths: LengthLaw::Fixed(1.0),
        conditions: ConditionLaw::Kirchhoff,
        seed: 0,
    };
    let chi = ChiFn::parse("bump:1:16").unwrap();
    let rows =
        convergence_experiment(&spec, &[8, 16, 32, 64, 128], &chi, LimitMode::Analytic).unwrap();
    println!("{:>5} {:>22} {:>22} {:>12}", "N", "esm", "limit", "gap");
    for r in &rows {
        println!("{:>5} {:>22.16} {:>22.16} {:>12.3e}", r.n, r.esm, r.limit, r.gap);
    }
    let shrinking = rows.windows(2).filter(|w| w[1].gap <= w[0].gap).count();
    println!("\ngap shrank in {shrinking}/{} steps", rows.len() - 1);
}
