//! Thin CLI over the library. Subcommands map one-to-one onto modules;
//! artifacts are CSV/JSON with embedded config hash and seed. Exit codes:
//! 0 success, 2 validation error, 3 numerical failure, 64 unknown subcommand.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;

use qgs::ensembles::{
    convergence_experiment, generate, n_lift, ChiFn, ConditionLaw, EnsembleSpec, Family,
    LengthLaw, LimitMode,
};
use qgs::greens::{smoothed_spectral_density, GreenEvaluator, Point};
use qgs::io::{
    fmt_f64, json_envelope, parse_complex, parse_graph_file, parse_root, write_csv, write_csv_to,
    write_graph_file, RunConfig,
};
use qgs::spectral::{eigenvalues_up_to, empirical_measure, ScanOptions};
use qgs::{Error, QuantumGraph, RootedQuantumGraph};

#[derive(Parser)]
#[command(name = "qgs", version, about = "Spectra, Green's functions and BS distances for finite quantum graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalue table of a graph up to a spectral cutoff (CSV).
    Spectrum {
        graph: PathBuf,
        #[arg(long)]
        lmax: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Green's function values G_z(x, y) at one or more spectral parameters (JSON).
    Green {
        graph: PathBuf,
        /// Point "bond:offset", e.g. e0:0.5; default for x and y.
        #[arg(long)]
        root: String,
        /// Spectral parameter "re:im"; repeatable.
        #[arg(long, required = true)]
        z: Vec<String>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical spectral measure: histogram, or smoothed density for an epsilon ladder (CSV).
    Esm {
        graph: PathBuf,
        #[arg(long)]
        lmax: f64,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        /// Switch to (lambda, eps, density) triples; repeatable.
        #[arg(long)]
        eps: Vec<f64>,
        /// Also report the measure applied to a test function "bump:a:b" or "indicator:a:b".
        #[arg(long)]
        chi: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benjamini-Schramm distance between two rooted graphs (JSON DistanceReport).
    BsDist {
        graph_a: PathBuf,
        graph_b: PathBuf,
        #[arg(long)]
        root_a: String,
        #[arg(long)]
        root_b: String,
        #[arg(long, default_value_t = 6)]
        kmax: usize,
        /// Enforce the bond-order matching verbatim at every vertex.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random N-lift of a base graph; writes the lifted graph file.
    Lift {
        graph: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence experiment across a ladder of sizes (CSV: N, esm, limit, gap, seed).
    Converge {
        /// cycle | interval | star | complete
        #[arg(long)]
        family: String,
        /// Comma-separated increasing sizes, e.g. 16,32,64.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        chi: String,
        /// analytic | truncation:N
        #[arg(long)]
        limit: String,
        /// Fixed length "1.0" or iid range "0.5:1.5".
        #[arg(long, default_value = "1.0")]
        length: String,
        /// kirchhoff | delta:a | iid-delta:b
        #[arg(long, default_value = "kirchhoff")]
        conditions: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick cross-module smoke checks; nonzero exit on any failure.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand => 64,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(threads) = std::env::var("QGS_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("QGS_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Numerical(_) | Error::BoundViolation(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn emit_csv(
    out: &Option<PathBuf>,
    cfg: &RunConfig,
    header: &[&str],
    rows: &[Vec<String>],
) -> qgs::Result<()> {
    match out {
        Some(path) => write_csv(path, cfg, header, rows),
        None => write_csv_to(std::io::stdout().lock(), cfg, header, rows),
    }
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> qgs::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn root_point(q: &QuantumGraph, s: &str) -> qgs::Result<Point> {
    let (bond, offset) = parse_root(s, q)?;
    let x = if bond.rev { q.edge_data(bond.edge).length - offset } else { offset };
    Ok(Point::new(bond.edge, x))
}

fn run(cmd: Cmd) -> qgs::Result<()> {
    match cmd {
        Cmd::Spectrum { graph, lmax, out } => {
            let q = parse_graph_file(&graph)?;
            if !(lmax > 0.0) {
                return Err(Error::Format(format!("--lmax {lmax} must be positive")));
            }
            let cfg = RunConfig {
                command: "spectrum".into(),
                graph: Some(graph.display().to_string()),
                lmax: Some(lmax),
                out: out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            let sd = eigenvalues_up_to(&q, lmax, ScanOptions::default())?;
            let rows: Vec<Vec<String>> = sd
                .eigenvalues
                .iter()
                .map(|ev| vec![fmt_f64(ev.lambda), ev.multiplicity.to_string()])
                .collect();
            emit_csv(&out, &cfg, &["lambda", "multiplicity"], &rows)
        }
        Cmd::Green { graph, root, z, x, y, out } => {
            let q = parse_graph_file(&graph)?;
            let cfg = RunConfig {
                command: "green".into(),
                graph: Some(graph.display().to_string()),
                root: Some(root.clone()),
                z: Some(z.clone()),
                out: out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            let x0 = root_point(&q, &root)?;
            let px = match &x {
                Some(s) => root_point(&q, s)?,
                None => x0,
            };
            let py = match &y {
                Some(s) => root_point(&q, s)?,
                None => x0,
            };
            let mut samples = Vec::new();
            for zs in &z {
                let zc: C64 = parse_complex(zs)?;
                if zc.im == 0.0 {
                    return Err(Error::Format(format!("z = {zs} must have Im z != 0")));
                }
                let ev = GreenEvaluator::new(&q, zc)?;
                let g = ev.value(px, py)?;
                samples.push(serde_json::json!({
                    "z_re": zc.re, "z_im": zc.im, "g_re": g.re, "g_im": g.im,
                }));
            }
            let mut envelope = json_envelope(&cfg);
            envelope.insert("samples".into(), samples.into());
            emit_json(&out, &serde_json::Value::Object(envelope))
        }
        Cmd::Esm { graph, lmax, bins, eps, chi, out } => {
            let q = parse_graph_file(&graph)?;
            if !(lmax > 0.0) {
                return Err(Error::Format(format!("--lmax {lmax} must be positive")));
            }
            if bins == 0 {
                return Err(Error::Format("--bins must be positive".into()));
            }
            let cfg = RunConfig {
                command: "esm".into(),
                graph: Some(graph.display().to_string()),
                lmax: Some(lmax),
                bins: Some(bins),
                eps: (!eps.is_empty()).then(|| eps.clone()),
                chi: chi.clone(),
                out: out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            if !eps.is_empty() {
                // smoothed density mode: (lambda, eps, density) triples on a
                // uniform grid, one block per epsilon
                let grid: Vec<f64> =
                    (0..bins).map(|i| lmax * i as f64 / (bins - 1).max(1) as f64).collect();
                let mut rows = Vec::new();
                for &e in &eps {
                    if !(e > 0.0) {
                        return Err(Error::Format(format!("--eps {e} must be positive")));
                    }
                    let dens = smoothed_spectral_density(&q, &grid, e)?;
                    for (&l, &d) in grid.iter().zip(&dens) {
                        rows.push(vec![fmt_f64(l), fmt_f64(e), fmt_f64(d)]);
                    }
                }
                return emit_csv(&out, &cfg, &["lambda", "eps", "density"], &rows);
            }
            let sd = eigenvalues_up_to(&q, lmax, ScanOptions::default())?;
            let measure = empirical_measure(&sd);
            if let Some(desc) = &chi {
                let f = ChiFn::parse(desc)?;
                let mut envelope = json_envelope(&cfg);
                envelope.insert("chi".into(), desc.as_str().into());
                envelope.insert("value".into(), measure.evaluate(|l| f.eval(l)).into());
                println!("{}", serde_json::Value::Object(envelope));
            }
            let lo = measure.atoms.first().map_or(0.0, |&(l, _)| l.min(0.0));
            let width = (lmax - lo) / bins as f64;
            let mut rows = Vec::with_capacity(bins);
            for i in 0..bins {
                let (a, b) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
                // half-open bins, last one closed at lmax
                let mass = measure
                    .atoms
                    .iter()
                    .filter(|&&(l, _)| l >= a && (l < b || (i == bins - 1 && l <= b)))
                    .map(|&(_, m)| m as f64)
                    .sum::<f64>()
                    / measure.total_length;
                rows.push(vec![fmt_f64(a), fmt_f64(b), fmt_f64(mass)]);
            }
            emit_csv(&out, &cfg, &["bin_left", "bin_right", "mass"], &rows)
        }
        Cmd::BsDist { graph_a, graph_b, root_a, root_b, kmax, strict, out } => {
            let qa = parse_graph_file(&graph_a)?;
            let qb = parse_graph_file(&graph_b)?;
            if kmax == 0 {
                return Err(Error::Format("--kmax must be at least 1".into()));
            }
            let cfg = RunConfig {
                command: "bs-dist".into(),
                graph: Some(graph_a.display().to_string()),
                graph_b: Some(graph_b.display().to_string()),
                root_a: Some(root_a.clone()),
                root_b: Some(root_b.clone()),
                kmax: Some(kmax),
                strict,
                out: out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            let (ba, xa) = parse_root(&root_a, &qa)?;
            let (bb, xb) = parse_root(&root_b, &qb)?;
            let ra = RootedQuantumGraph::new(qa, ba, xa)?;
            let rb = RootedQuantumGraph::new(qb, bb, xb)?;
            let report = qgs::bs::bs_distance(&ra, &rb, kmax, strict)?;
            let mut envelope = json_envelope(&cfg);
            envelope.insert(
                "report".into(),
                serde_json::to_value(&report).expect("report serializes"),
            );
            emit_json(&out, &serde_json::Value::Object(envelope))
        }
        Cmd::Lift { graph, n, seed, out } => {
            let base = parse_graph_file(&graph)?;
            let cfg = RunConfig {
                command: "lift".into(),
                graph: Some(graph.display().to_string()),
                n: Some(n),
                seed,
                out: Some(out.display().to_string()),
                ..RunConfig::default()
            };
            let lifted = n_lift(&base, n, seed)?;
            write_graph_file(&lifted, &out)?;
            let mut envelope = json_envelope(&cfg);
            envelope.insert("vertices".into(), lifted.graph().vertex_count().into());
            envelope.insert("edges".into(), lifted.graph().edge_count().into());
            envelope.insert("total_length".into(), lifted.total_length().into());
            envelope.insert("base_total_length".into(), base.total_length().into());
            println!("{}", serde_json::Value::Object(envelope));
            Ok(())
        }
        Cmd::Converge { family, sizes, chi, limit, length, conditions, seed, out } => {
            let family = match family.as_str() {
                "cycle" => Family::Cycle,
                "interval" => Family::Interval,
                "star" => Family::Star,
                "complete" => Family::Complete,
                other => return Err(Error::Format(format!("unknown family '{other}'"))),
            };
            let lengths = match length.split_once(':') {
                None => LengthLaw::Fixed(
                    length
                        .parse()
                        .map_err(|_| Error::Format(format!("bad --length '{length}'")))?,
                ),
                Some((lo, hi)) => LengthLaw::Iid {
                    lo: lo.parse().map_err(|_| Error::Format(format!("bad --length '{length}'")))?,
                    hi: hi.parse().map_err(|_| Error::Format(format!("bad --length '{length}'")))?,
                },
            };
            let cond_law = match conditions.split_once(':') {
                None if conditions == "kirchhoff" => ConditionLaw::Kirchhoff,
                Some(("delta", a)) => ConditionLaw::Delta {
                    alpha: a
                        .parse()
                        .map_err(|_| Error::Format(format!("bad --conditions '{conditions}'")))?,
                },
                Some(("iid-delta", b)) => ConditionLaw::IidDelta {
                    bound: b
                        .parse()
                        .map_err(|_| Error::Format(format!("bad --conditions '{conditions}'")))?,
                },
                _ => return Err(Error::Format(format!("bad --conditions '{conditions}'"))),
            };
            let size_list: Vec<usize> = sizes
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("bad --sizes '{sizes}'")))?;
            let chi_fn = ChiFn::parse(&chi)?;
            let mode = match limit.split_once(':') {
                None if limit == "analytic" => LimitMode::Analytic,
                Some(("truncation", n)) => LimitMode::Truncation {
                    size: n.parse().map_err(|_| Error::Format(format!("bad --limit '{limit}'")))?,
                },
                _ => return Err(Error::Format(format!("bad --limit '{limit}'"))),
            };
            let cfg = RunConfig {
                command: "converge".into(),
                family: Some(format!("{family:?}").to_lowercase()),
                sizes: Some(size_list.clone()),
                chi: Some(chi.clone()),
                limit: Some(limit.clone()),
                length: Some(length.clone()),
                conditions: Some(conditions.clone()),
                seed,
                out: out.as_ref().map(|p| p.display().to_string()),
                ..RunConfig::default()
            };
            let spec = EnsembleSpec { family, lengths, conditions: cond_law, seed };
            let rows = convergence_experiment(&spec, &size_list, &chi_fn, mode)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        fmt_f64(r.esm),
                        fmt_f64(r.limit),
                        fmt_f64(r.gap),
                        r.seed.to_string(),
                    ]
                })
                .collect();
            emit_csv(&out, &cfg, &["N", "esm", "limit", "gap", "seed"], &table)
        }
        Cmd::Selftest => selftest(),
    }
}

fn selftest() -> qgs::Result<()> {
    use qgs::conditions::{ConditionKind, VertexCondition};
    use qgs::{CombinatorialGraph, EdgeData};

    let mut failures = 0;
    let mut check = |name: &str, result: qgs::Result<()>| match result {
        Ok(()) => println!("ok   {name}"),
        Err(e) => {
            failures += 1;
            println!("FAIL {name}: {e}");
        }
    };

    check("spectrum: Dirichlet interval eigenvalues n^2", {
        let g = CombinatorialGraph::new(2, vec![(0, 1)])?;
        let q = QuantumGraph::new(
            g,
            vec![EdgeData::free(std::f64::consts::PI)],
            vec![
                VertexCondition::named(ConditionKind::Dirichlet, 1),
                VertexCondition::named(ConditionKind::Dirichlet, 1),
            ],
            None,
        )?;
        eigenvalues_up_to(&q, 30.5, ScanOptions::default()).and_then(|sd| {
            let got: Vec<f64> = sd.eigenvalues.iter().map(|e| e.lambda).collect();
            let want = [1.0, 4.0, 9.0, 16.0, 25.0];
            if got.len() == want.len()
                && got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-7 * b)
            {
                Ok(())
            } else {
                Err(Error::Numerical(format!("got {got:?}")))
            }
        })
    });

    check("green: symmetry and Im G > 0 on the triangle", {
        let spec = EnsembleSpec {
            family: Family::Cycle,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 0,
        };
        let q = generate(&spec, 3)?;
        let ev = GreenEvaluator::new(&q, C64::new(1.0, 1.0))?;
        let (x, y) = (Point::new(0, 0.3), Point::new(1, 0.6));
        let gxy = ev.value(x, y)?;
        let gyx = ev.value(y, x)?;
        let diag = ev.value(x, x)?;
        if (gxy - gyx).norm() < 1e-8 && diag.im > 0.0 {
            Ok(())
        } else {
            Err(Error::Numerical(format!("gxy {gxy} gyx {gyx} diag {diag}")))
        }
    });

    check("bs-dist: d(C4, C6) = 1/3", {
        let spec = |_n| EnsembleSpec {
            family: Family::Cycle,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 0,
        };
        let c4 = generate(&spec(4), 4)?;
        let c6 = generate(&spec(6), 6)?;
        let r4 = RootedQuantumGraph::new(c4, qgs::BondId::forward(0), 0.5)?;
        let r6 = RootedQuantumGraph::new(c6, qgs::BondId::forward(0), 0.5)?;
        let report = qgs::bs::bs_distance(&r4, &r6, 6, false)?;
        if (report.d() - 1.0 / 3.0).abs() < 1e-12 {
            Ok(())
        } else {
            Err(Error::Numerical(format!("d = {}", report.d())))
        }
    });

    check("lift: total length multiplies exactly", {
        let spec = EnsembleSpec {
            family: Family::Complete,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 1,
        };
        let k4 = generate(&spec, 4)?;
        let lifted = n_lift(&k4, 4, 11)?;
        if lifted.total_length() == 4.0 * k4.total_length() {
            Ok(())
        } else {
            Err(Error::Numerical("length mismatch".into()))
        }
    });

    check("converge: cycle gap shrinks toward the free line", {
        let spec = EnsembleSpec {
            family: Family::Cycle,
            lengths: LengthLaw::Fixed(1.0),
            conditions: ConditionLaw::Kirchhoff,
            seed: 0,
        };
        let chi = ChiFn::Bump { a: 1.0, b: 16.0 };
        let rows = convergence_experiment(&spec, &[8, 32], &chi, LimitMode::Analytic)?;
        if rows[1].gap < rows[0].gap.max(0.05) {
            Ok(())
        } else {
            Err(Error::Numerical(format!("gaps {} -> {}", rows[0].gap, rows[1].gap)))
        }
    });

    if failures == 0 {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{failures} selftest check(s) failed")))
    }
}
