//! `kccjet`: invariants, trajectories, deviation fields, covariance checks
//! and flatness verdicts for second-order ODE systems on the 1-jet space,
//! driven by JSON model files with embedded expression strings.

mod files;
mod report;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kccjet_core::dynamics::{deviation_residual, integrate_deviation, integrate_trajectory};
use kccjet_core::geometry::{DTensor, IndexKind};
use kccjet_core::kcc;
use kccjet_core::{CoordinateChange, Expr, JetPoint, SodeModel};

use files::{parse_at, ChangeFile, DomainBox, ModelFile};
use report::{csv_num, num_array, Json};

/// Structured failure with the process exit code it maps to:
/// 1 check failed, 2 runtime/domain error, 3 usage or parse error.
pub(crate) struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub(crate) fn usage(msg: String) -> CliError {
        CliError { code: 3, msg }
    }

    pub(crate) fn runtime(msg: String) -> CliError {
        CliError { code: 2, msg }
    }
}

#[derive(Parser)]
#[command(name = "kccjet", version, about = "Jet-space KCC invariants of second-order ODE systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the five invariants at a jet point.
    Invariants {
        #[arg(long, env = "KCCJET_MODEL")]
        model: PathBuf,
        /// Evaluation point, e.g. "t=0, x=[1.5, 0.3], y=[0.2, 1]".
        #[arg(long, env = "KCCJET_AT")]
        at: String,
        #[arg(long, value_enum, default_value = "json", env = "KCCJET_FORMAT")]
        format: Format,
        /// Also emit the simplified symbolic components.
        #[arg(long)]
        symbolic: bool,
    },
    /// Integrate the SODE with fixed-step RK4 and write a CSV of samples.
    Trajectory {
        #[arg(long, env = "KCCJET_MODEL")]
        model: PathBuf,
        #[arg(long, env = "KCCJET_AT")]
        at: String,
        #[arg(long, env = "KCCJET_T1")]
        t1: f64,
        #[arg(long, env = "KCCJET_STEPS")]
        steps: usize,
        #[arg(long, env = "KCCJET_OUT")]
        out: PathBuf,
    },
    /// Integrate the variational equations along a trajectory and write a
    /// CSV; prints the covariant Jacobi residual summary.
    Deviation {
        #[arg(long, env = "KCCJET_MODEL")]
        model: PathBuf,
        #[arg(long, env = "KCCJET_AT")]
        at: String,
        /// Initial deviation, e.g. "[0, 0]".
        #[arg(long, env = "KCCJET_XI")]
        xi: String,
        /// Initial deviation velocity, e.g. "[1, 0]".
        #[arg(long, env = "KCCJET_XIDOT")]
        xidot: String,
        #[arg(long, env = "KCCJET_T1")]
        t1: f64,
        #[arg(long, env = "KCCJET_STEPS")]
        steps: usize,
        #[arg(long, env = "KCCJET_OUT")]
        out: PathBuf,
    },
    /// Compare transform-then-compute against compute-then-transport for
    /// ε, P and D5 over sampled points; exits 1 when over tolerance.
    Covariance {
        #[arg(long, env = "KCCJET_MODEL")]
        model: PathBuf,
        #[arg(long, env = "KCCJET_CHANGE")]
        change: PathBuf,
        #[arg(long, default_value = "32", env = "KCCJET_POINTS")]
        points: usize,
        #[arg(long, default_value = "0", env = "KCCJET_SEED")]
        seed: u64,
    },
    /// Verdict on whether the model reduces to a flat symmetric linear
    /// connection (all five invariants vanish).
    Flatness {
        #[arg(long, env = "KCCJET_MODEL")]
        model: PathBuf,
        #[arg(long, default_value = "64", env = "KCCJET_POINTS")]
        points: usize,
        #[arg(long, default_value = "0", env = "KCCJET_SEED")]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap distinguishes --help/--version (success) from usage errors.
            let is_error = e.use_stderr();
            let _ = e.print();
            return if is_error { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Invariants { model, at, format, symbolic } => {
            let (m, _) = ModelFile::load(&model)?.build()?;
            let p = parse_at(&at, m.n)?;
            cmd_invariants(&m, &p, format, symbolic)
        }
        Command::Trajectory { model, at, t1, steps, out } => {
            let (m, _) = ModelFile::load(&model)?.build()?;
            let p = parse_at(&at, m.n)?;
            cmd_trajectory(&m, &p, t1, steps, &out)
        }
        Command::Deviation { model, at, xi, xidot, t1, steps, out } => {
            let (m, _) = ModelFile::load(&model)?.build()?;
            let p = parse_at(&at, m.n)?;
            let xi = parse_numbers(&xi, m.n, "--xi")?;
            let xidot = parse_numbers(&xidot, m.n, "--xidot")?;
            cmd_deviation(&m, &p, &xi, &xidot, t1, steps, &out)
        }
        Command::Covariance { model, change, points, seed } => {
            let (m, domain) = ModelFile::load(&model)?.build()?;
            let c = ChangeFile::load(&change)?.build(m.n)?;
            cmd_covariance(&m, &c, &domain, points, seed)
        }
        Command::Flatness { model, points, seed } => {
            let (m, domain) = ModelFile::load(&model)?.build()?;
            cmd_flatness(&m, &domain, points, seed)
        }
    }
}

fn parse_numbers(src: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let inner = src
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| CliError::usage(format!("{what}: expected [v1, v2, ...]")))?;
    let values: Vec<f64> = inner
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("{what}: {e}")))?;
    if values.len() != n {
        return Err(CliError::usage(format!("{what}: expected {n} entries")));
    }
    Ok(values)
}

fn sample_points(domain: &DomainBox, n: usize, count: usize, seed: u64) -> Vec<JetPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = |r: [f64; 2], rng: &mut ChaCha8Rng| {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.gen_range(r[0]..r[1])
        }
    };
    (0..count)
        .map(|_| {
            let t = range(domain.t, &mut rng);
            let x = (0..n).map(|i| range(domain.x_range(i), &mut rng)).collect();
            let y = (0..n).map(|i| range(domain.y_range(i), &mut rng)).collect();
            JetPoint::new(t, x, y)
        })
        .collect()
}

/// Evaluates every component, reporting the failing flat index on error.
fn eval_components(
    what: &str,
    components: &[&Expr],
    p: &JetPoint,
) -> Result<Vec<f64>, CliError> {
    components
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.eval(p)
                .map_err(|err| CliError::runtime(format!("{what}[{i}]: {err}")))
        })
        .collect()
}

fn flatten4(t: &[Vec<Vec<Vec<Expr>>>]) -> Vec<&Expr> {
    t.iter().flatten().flatten().flatten().collect()
}

fn cmd_invariants(
    m: &SodeModel,
    p: &JetPoint,
    format: Format,
    symbolic: bool,
) -> Result<u8, CliError> {
    let inv = kcc::all_invariants(m);
    let eps = eval_components("epsilon", &inv.epsilon.iter().collect::<Vec<_>>(), p)?;
    let pm = eval_components("P", &inv.p.iter().flatten().collect::<Vec<_>>(), p)?;
    let r3 = eval_components(
        "R3",
        &inv.r3.iter().flatten().flatten().collect::<Vec<_>>(),
        p,
    )?;
    let b4 = eval_components("B4", &flatten4(&inv.b4), p)?;
    let d5 = eval_components("D5", &flatten4(&inv.d5), p)?;

    match format {
        Format::Json => {
            let n = m.n;
            let mut fields = vec![
                (
                    "at",
                    Json::Object(vec![
                        ("t", Json::Num(p.t)),
                        ("x", num_array(p.x.iter().copied())),
                        ("y", num_array(p.y.iter().copied())),
                    ]),
                ),
                ("epsilon", num_array(eps)),
                ("P", nested(&pm, &[n, n])),
                ("R3", nested(&r3, &[n, n, n])),
                ("B4", nested(&b4, &[n, n, n, n])),
                ("D5", nested(&d5, &[n, n, n, n])),
            ];
            if symbolic {
                fields.push((
                    "symbolic",
                    Json::Object(vec![
                        (
                            "epsilon",
                            Json::Array(
                                inv.epsilon.iter().map(|e| Json::Str(e.to_string())).collect(),
                            ),
                        ),
                        (
                            "P",
                            Json::Array(
                                inv.p
                                    .iter()
                                    .map(|row| {
                                        Json::Array(
                                            row.iter().map(|e| Json::Str(e.to_string())).collect(),
                                        )
                                    })
                                    .collect(),
                            ),
                        ),
                    ]),
                ));
            }
            print!("{}", Json::Object(fields).render());
        }
        Format::Csv => {
            let mut out = String::from("invariant,indices,value\n");
            let mut push = |name: &str, dims: &[usize], values: &[f64]| {
                for (flat, v) in values.iter().enumerate() {
                    let mut idx = Vec::new();
                    let mut rem = flat;
                    for d in dims.iter().rev() {
                        idx.push(rem % d + 1);
                        rem /= d;
                    }
                    idx.reverse();
                    let idx: Vec<String> = idx.iter().map(usize::to_string).collect();
                    out.push_str(&format!("{name},{},{}\n", idx.join(" "), csv_num(*v)));
                }
            };
            let n = m.n;
            push("epsilon", &[n], &eps);
            push("P", &[n, n], &pm);
            push("R3", &[n, n, n], &r3);
            push("B4", &[n, n, n, n], &b4);
            push("D5", &[n, n, n, n], &d5);
            print!("{out}");
        }
    }
    Ok(0)
}

/// Reshapes a flat row-major value list into nested JSON arrays.
fn nested(values: &[f64], dims: &[usize]) -> Json {
    if dims.len() == 1 {
        return num_array(values.iter().copied());
    }
    let chunk = values.len() / dims[0];
    Json::Array(
        values
            .chunks(chunk)
            .map(|c| nested(c, &dims[1..]))
            .collect(),
    )
}

fn write_csv(path: &std::path::Path, content: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    f.write_all(content.as_bytes())
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn csv_header(n: usize, with_deviation: bool) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n).map(|i| format!("y{i}")));
    if with_deviation {
        cols.extend((1..=n).map(|i| format!("xi{i}")));
        cols.extend((1..=n).map(|i| format!("xidot{i}")));
    }
    cols.join(",")
}

fn cmd_trajectory(
    m: &SodeModel,
    p0: &JetPoint,
    t1: f64,
    steps: usize,
    out: &std::path::Path,
) -> Result<u8, CliError> {
    let traj = integrate_trajectory(m, p0, t1, steps)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let mut csv = csv_header(m.n, false);
    csv.push('\n');
    for p in &traj.samples {
        let mut row = vec![csv_num(p.t)];
        row.extend(p.x.iter().map(|v| csv_num(*v)));
        row.extend(p.y.iter().map(|v| csv_num(*v)));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_csv(out, &csv)?;
    println!("wrote {} samples to {}", traj.samples.len(), out.display());
    Ok(0)
}

fn cmd_deviation(
    m: &SodeModel,
    p0: &JetPoint,
    xi: &[f64],
    xidot: &[f64],
    t1: f64,
    steps: usize,
    out: &std::path::Path,
) -> Result<u8, CliError> {
    let traj = integrate_trajectory(m, p0, t1, steps)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let track = integrate_deviation(m, &traj, xi, xidot)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let residual =
        deviation_residual(m, &traj, &track).map_err(|e| CliError::runtime(e.to_string()))?;

    let mut csv = csv_header(m.n, true);
    csv.push('\n');
    for (p, (_, xi, xidot)) in traj.samples.iter().zip(&track.samples) {
        let mut row = vec![csv_num(p.t)];
        row.extend(p.x.iter().map(|v| csv_num(*v)));
        row.extend(p.y.iter().map(|v| csv_num(*v)));
        row.extend(xi.iter().map(|v| csv_num(*v)));
        row.extend(xidot.iter().map(|v| csv_num(*v)));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write_csv(out, &csv)?;
    print!(
        "{}",
        Json::Object(vec![
            ("samples", Json::Int(track.samples.len())),
            ("deviation_residual", Json::Num(residual)),
            ("out", Json::Str(out.display().to_string())),
        ])
        .render()
    );
    Ok(0)
}

const COVARIANCE_TOL: f64 = 1e-6;

fn cmd_covariance(
    m: &SodeModel,
    c: &CoordinateChange,
    domain: &DomainBox,
    points: usize,
    seed: u64,
) -> Result<u8, CliError> {
    let n = m.n;
    let mt = c
        .transform_sode(m)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let eps_e = kcc::first_invariant(m);
    let p_e = kcc::deviation_curvature(m);
    let d5_e = kcc::fifth_invariant(m);
    let eps_t = kcc::first_invariant(&mt);
    let p_t = kcc::deviation_curvature(&mt);
    let d5_t = kcc::fifth_invariant(&mt);

    let eps_tensor = DTensor::new(
        vec![IndexKind::JetUp, IndexKind::TimeDown],
        n,
        eps_e.clone(),
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    let p_tensor = DTensor::new(
        vec![
            IndexKind::SpatialUp,
            IndexKind::SpatialDown,
            IndexKind::TimeDown,
            IndexKind::TimeDown,
        ],
        n,
        p_e.iter().flatten().cloned().collect(),
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    let d5_tensor = DTensor::new(
        vec![
            IndexKind::SpatialUp,
            IndexKind::TimeUp,
            IndexKind::SpatialDown,
            IndexKind::SpatialDown,
            IndexKind::SpatialDown,
        ],
        n,
        d5_e.iter().flatten().flatten().flatten().cloned().collect(),
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut worst = [0.0f64; 3]; // epsilon, P, D5
    let mut used = 0usize;
    let mut skipped: Vec<String> = Vec::new();

    for p in sample_points(domain, n, points, seed) {
        // A singular Jacobian or domain failure at a sample is reported
        // and skipped rather than aborting the whole run.
        let step = || -> Result<[f64; 3], String> {
            let pt = c.transform_point(&p).map_err(|e| e.to_string())?;
            let mut w = [0.0f64; 3];
            let want = eps_tensor.transform_at(c, &p).map_err(|e| e.to_string())?;
            for i in 0..n {
                let got = eps_t[i].eval(&pt).map_err(|e| e.to_string())?;
                w[0] = w[0].max(rel(got, want[i]));
            }
            let want = p_tensor.transform_at(c, &p).map_err(|e| e.to_string())?;
            for i in 0..n {
                for j in 0..n {
                    let got = p_t[i][j].eval(&pt).map_err(|e| e.to_string())?;
                    w[1] = w[1].max(rel(got, want[i * n + j]));
                }
            }
            let want = d5_tensor.transform_at(c, &p).map_err(|e| e.to_string())?;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let got = d5_t[i][j][k][l].eval(&pt).map_err(|e| e.to_string())?;
                            w[2] = w[2].max(rel(got, want[((i * n + j) * n + k) * n + l]));
                        }
                    }
                }
            }
            Ok(w)
        };
        match step() {
            Ok(w) => {
                for (acc, v) in worst.iter_mut().zip(w) {
                    *acc = acc.max(v);
                }
                used += 1;
            }
            Err(msg) => skipped.push(format!(
                "t={} x={:?} y={:?}: {msg}",
                p.t, p.x, p.y
            )),
        }
    }

    let pass = used > 0 && worst.iter().all(|w| *w < COVARIANCE_TOL);
    print!(
        "{}",
        Json::Object(vec![
            ("points", Json::Int(used)),
            (
                "skipped",
                Json::Array(skipped.iter().map(|s| Json::Str(s.clone())).collect()),
            ),
            ("tolerance", Json::Num(COVARIANCE_TOL)),
            (
                "max_discrepancy",
                Json::Object(vec![
                    ("epsilon", Json::Num(worst[0])),
                    ("P", Json::Num(worst[1])),
                    ("D5", Json::Num(worst[2])),
                ]),
            ),
            ("pass", Json::Bool(pass)),
        ])
        .render()
    );
    Ok(if pass { 0 } else { 1 })
}

fn cmd_flatness(
    m: &SodeModel,
    domain: &DomainBox,
    points: usize,
    seed: u64,
) -> Result<u8, CliError> {
    let samples = sample_points(domain, m.n, points, seed);
    let report = kcc::flatness_check(m, 1e-8, &samples)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let gamma = match &report.gamma {
        Some(g) => Json::Array(
            g.iter()
                .map(|layer| {
                    Json::Array(
                        layer
                            .iter()
                            .map(|row| {
                                Json::Array(
                                    row.iter().map(|e| Json::Str(e.to_string())).collect(),
                                )
                            })
                            .collect(),
                    )
                })
                .collect(),
        ),
        None => Json::Null,
    };
    print!(
        "{}",
        Json::Object(vec![
            (
                "verdict",
                Json::Str(if report.vanish { "FLAT" } else { "NOT FLAT" }.into()),
            ),
            ("max_invariant", Json::Num(report.max_invariant)),
            ("curvature_max", Json::Num(report.curvature_max)),
            ("residual_max", Json::Num(report.residual_max)),
            ("gamma", gamma),
            (
                "failed_points",
                Json::Array(
                    report
                        .failed_points
                        .iter()
                        .map(|(p, msg)| Json::Str(format!("t={} x={:?} y={:?}: {msg}", p.t, p.x, p.y)))
                        .collect(),
                ),
            ),
        ])
        .render()
    );
    Ok(0)
}
