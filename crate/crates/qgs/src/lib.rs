//! Numerics for finite quantum graphs: metric graphs carrying Schrödinger
//! operators `-f'' + W f` with self-adjoint vertex conditions encoded by
//! unitary matrices.
//!
//! The crate computes
//!
//! * eigenvalues and eigenfunctions through a secular-matrix scan
//!   ([`spectral`]), cross-checked by an independent finite-element
//!   discretization ([`fem`]),
//! * Green's functions of `(H - z)^{-1}` through the bond evolution-operator
//!   system, with resolvent traces and smoothed spectral densities
//!   ([`greens`]),
//! * empirical spectral measures and functional-calculus kernels
//!   ([`spectral`]),
//! * Benjamini–Schramm distances between rooted quantum graphs ([`bs`]),
//! * ensemble generators (cycles, stars, complete graphs, random N-lifts)
//!   and desk-scale spectral convergence experiments ([`ensembles`]).
//!
//! The primary interface is the `examples/` directory; each example is a
//! runnable walkthrough of one capability:
//!
//! ```text
//! cargo run --release --example spectrum_interval    # exact interval spectra
//! cargo run --release --example green_star           # Green's function on a star
//! cargo run --release --example esm_cycle            # empirical spectral measure
//! cargo run --release --example bs_distance_cycles   # BS distance C4 vs C6
//! cargo run --release --example lift_k4              # random 8-lifts of K4
//! cargo run --release --example converge_cycles      # convergence experiment
//! ```
//!
//! A thin `qgs` binary exposes the same operations as CLI subcommands
//! (`spectrum`, `green`, `esm`, `bs-dist`, `lift`, `converge`, `selftest`)
//! over a JSON graph format; see [`io`].

pub mod bs;
pub mod conditions;
pub mod edge;
pub mod ensembles;
pub mod fem;
pub mod graph;
pub mod greens;
pub mod io;
pub mod linalg;
pub mod spectral;

pub use graph::{BondId, CombinatorialGraph, EdgeData, QuantumGraph, RootedQuantumGraph};

/// Errors shared across modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("validation bound violated: {0}")]
    BoundViolation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
