//! Eigenvalues of the interval [0, pi] under Dirichlet and Neumann
//! conditions, where the spectrum is known in closed form: n^2 for n >= 1
//! (Dirichlet) and n^2 for n >= 0 (Neumann).

use qgs::conditions::{ConditionKind, VertexCondition};
use qgs::spectral::{eigenvalues_up_to, ScanOptions};
use qgs::{CombinatorialGraph, EdgeData, QuantumGraph};

fn interval(kind: ConditionKind) -> QuantumGraph {
    let g = CombinatorialGraph::new(2, vec![(0, 1)]).unwrap();
    QuantumGraph::new(
        g,
        vec![EdgeData::free(std::f64::consts::PI)],
        vec![
            VertexCondition::named(kind.clone(), 1),
            VertexCondition::named(kind, 1),
        ],
        None,
    )
    .unwrap()
}

fn main() {
    for (name, kind, offset) in [
        ("Dirichlet", ConditionKind::Dirichlet, 1usize),
        ("Neumann", ConditionKind::Neumann, 0),
    ] {
        let q = interval(kind);
        let sd = eigenvalues_up_to(&q, 100.5, ScanOptions::default()).unwrap();
        println!("{name} interval, lambda up to 100:");
        let mut worst: f64 = 0.0;
        for (i, ev) in sd.eigenvalues.iter().enumerate() {
            let exact = ((i + offset) as f64).powi(2);
            let rel = (ev.lambda - exact).abs() / exact.max(1.0);
            worst = worst.max(rel);
            println!("  lambda_{:<2} = {:>18.12}  exact {:>5}  rel err {:.2e}", i, ev.lambda, exact, rel);
        }
        println!("  worst relative error {worst:.2e}\n");
    }
}
