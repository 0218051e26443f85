//! Green's function on a 3-star: kernel values, Herglotz behaviour of the
//! diagonal, symmetry in (x, y), and the resolvent trace against an
//! eigenvalue sum.

use num_complex::Complex64 as C64;
use qgs::ensembles::{generate, ConditionLaw, EnsembleSpec, Family, LengthLaw};
use qgs::greens::{resolvent_trace, GreenEvaluator, Point};
use qgs::spectral::{eigenvalues_up_to, ScanOptions};

fn main() {
    // three unit legs, Kirchhoff center, Neumann tips
    let star = generate(
        &EnsembleSpec {
            family: Family::Star,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 0,
        },
        3,
    )
    .unwrap();

    let z = C64::new(2.0, 1.0);
    let ev = GreenEvaluator::new(&star, z).unwrap();
    let x = Point::new(0, 0.3);
    let y = Point::new(2, 0.7);

    let gxy = ev.value(x, y).unwrap();
    let gyx = ev.value(y, x).unwrap();
    let diag = ev.value(x, x).unwrap();
    println!("z = {z}");
    println!("G(x,y) = {gxy}");
    println!("G(y,x) = {gyx}   (symmetry gap {:.2e})", (gxy - gyx).norm());
    println!("G(x,x) = {diag}   (Im > 0: {})", diag.im > 0.0);

    // conjugation across the real axis
    let ev_conj = GreenEvaluator::new(&star, z.conj()).unwrap();
    let g_conj = ev_conj.value(x, y).unwrap();
    println!("G_zbar(x,y) = {g_conj}   (conj gap {:.2e})", (g_conj - gxy.conj()).norm());

    // trace of the resolvent vs sum over eigenvalues 1/(lambda_k - z);
    // the tail above the cutoff decays like 1/lambda^2
    let tr = resolvent_trace(&star, z).unwrap();
    let sd = eigenvalues_up_to(&star, 4000.0, ScanOptions::default()).unwrap();
    let partial: C64 = sd
        .eigenvalues
        .iter()
        .map(|e| C64::new(e.multiplicity as f64, 0.0) / (C64::new(e.lambda, 0.0) - z))
        .sum();
    println!("\ntrace (quadrature)      = {tr}");
    println!("eigenvalue sum (partial) = {partial}");
    println!("difference               = {:.3e}  (tail of the sum)", (tr - partial).norm());
}
