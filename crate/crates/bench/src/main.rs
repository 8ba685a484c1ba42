use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use dpkmeans::io::{read_points_file, write_points};
use dpkmeans::pipeline::{default_clusterer, normalized_objective, run, Model, PipelineInput};
use dpkmeans::rng::fnv1a;
use dpkmeans::Error;
use dpkmeans_bench::baselines::{naive_centers, nonprivate_centers, trivial_objective, Arm};
use dpkmeans_bench::lsh::{lsh_private_kmeans, LshConfig, LshMode};
use dpkmeans_bench::mixture::{generate_mixture, MixtureConfig};
use dpkmeans_bench::sweep::{summary_csv, sweep, write_outputs, Plan, Variant};

#[derive(Parser)]
#[command(name = "dpkm", version, about = "Private k-means experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a Gaussian mixture dataset as CSV.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 100.0)]
        r: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One private clustering run.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "local")]
        model: String,
        #[arg(long, default_value = "net-tree")]
        variant: String,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Target dimension of the projection; defaults to the formula.
        #[arg(long)]
        proj_dim: Option<usize>,
        /// LSH variant: every user reports at every level.
        #[arg(long)]
        no_split: bool,
        /// Include wall-clock times, which makes the output nondeterministic.
        #[arg(long)]
        timings: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline arms: trivial, naive or nonprivate.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "trivial")]
        arm: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::BudgetExceeded { .. } => "budget",
            Error::InvalidParameter(_) | Error::InvalidK { .. } => "parameter",
            _ => "input",
        };
        Failure {
            kind,
            message: e.to_string(),
            code: 1,
        }
    }
}

fn emit(doc: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).expect("json") + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::from(Error::from(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn centers_json(c: &dpkmeans::CenterSet) -> Value {
    Value::Array(c.centers.iter().map(|p| to_value(&p.0)).collect())
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Gen { n, d, k, r, seed, out } => {
            let cfg = MixtureConfig {
                k_true: k,
                n,
                d,
                r,
                seed,
            };
            let m = generate_mixture(&cfg)?;
            let mut buf = Vec::new();
            write_points(&mut buf, &m.points)?;
            std::fs::write(&out, &buf).map_err(Error::from)?;
            emit(
                &json!({
                    "command": "gen",
                    "config": to_value(&cfg),
                    "points": m.points.len(),
                    "bytes": buf.len(),
                    "fnv1a": format!("{:016x}", fnv1a(&buf)),
                    "trivial_objective": trivial_objective(&m.points)?,
                }),
                None,
            )
        }
        Cmd::Run {
            input,
            model,
            variant,
            epsilon,
            delta,
            alpha,
            beta,
            k,
            seed,
            proj_dim,
            no_split,
            timings,
            out,
        } => {
            let data = read_points_file(&input)?;
            let model: Model = model.parse()?;
            let variant: Variant = variant.parse()?;
            let (n, d) = (data.len(), data[0].len());
            let params = json!({
                "model": model, "variant": variant, "epsilon": epsilon, "delta": delta,
                "alpha": alpha, "beta": beta, "k": k, "seed": seed, "n": n, "d": d,
                "proj_dim": proj_dim, "split": !no_split,
            });
            let doc = match variant {
                Variant::NetTree => {
                    let mut pi = PipelineInput::new(n, d, k, epsilon, delta, alpha, beta);
                    pi.proj_dim = proj_dim;
                    let (cfg, _) = dpkmeans::pipeline::derive_params(pi)?;
                    let mut res = run(&data, pi, model, seed, &default_clusterer(seed))?;
                    if !timings {
                        res.timings = None;
                    }
                    json!({
                        "command": "run",
                        "params": params,
                        "derived": to_value(&cfg),
                        "centers": centers_json(&res.centers),
                        "normalized_objective": res.normalized_objective,
                        "clip_rate": res.clip_rate,
                        "clusters": to_value(&res.clusters),
                        "tree": to_value(&res.tree),
                        "coreset_size": res.coreset_size,
                        "timings": to_value(&res.timings),
                    })
                }
                Variant::Lsh => {
                    let mode = match model {
                        Model::Local => LshMode::Local,
                        Model::Exact => LshMode::Exact,
                        Model::Shuffle => {
                            return Err(Error::InvalidParameter(
                                "the lsh variant runs in the local or exact model".into(),
                            )
                            .into())
                        }
                    };
                    let mut cfg = LshConfig::default_for(n, k);
                    cfg.split_users = !no_split;
                    let t0 = std::time::Instant::now();
                    let res = lsh_private_kmeans(&data, k, epsilon, &cfg, mode, seed)?;
                    let secs = t0.elapsed().as_secs_f64();
                    json!({
                        "command": "run",
                        "params": params,
                        "derived": to_value(&cfg),
                        "centers": centers_json(&res.centers),
                        "normalized_objective": res.normalized_objective,
                        "tree": { "nodes": res.nodes.len(), "leaves": res.leaves },
                        "timings": if timings { json!({ "total_s": secs }) } else { Value::Null },
                    })
                }
            };
            emit(&doc, out.as_deref())
        }
        Cmd::Sweep { plan, out_dir, out } => {
            let text = std::fs::read_to_string(&plan).map_err(Error::from)?;
            let p = Plan::parse(&text)?;
            let res = sweep(&p)?;
            let x = Plan::varying(&text).into_iter().next().unwrap_or_else(|| "n".into());
            write_outputs(&out_dir, &res, &x, p.naive)?;
            emit(
                &json!({
                    "command": "sweep",
                    "settings": p.settings.len(),
                    "repeats": p.repeats,
                    "seed": p.seed,
                    "aggregates": to_value(&res.aggregates),
                    "summary_fnv1a": format!("{:016x}", fnv1a(summary_csv(&res).as_bytes())),
                }),
                out.as_deref(),
            )
        }
        Cmd::Baseline {
            input,
            arm,
            k,
            epsilon,
            seed,
            out,
        } => {
            let data = read_points_file(&input)?;
            let arm: Arm = arm.parse()?;
            let (objective, centers) = match arm {
                Arm::Trivial => (trivial_objective(&data)?, Value::Array(vec![to_value(&vec![0.0; data[0].len()])])),
                Arm::Naive => {
                    let c = naive_centers(&data, k, epsilon, seed)?;
                    (normalized_objective(&data, &c)?, centers_json(&c))
                }
                Arm::Nonprivate => {
                    let c = nonprivate_centers(&data, k, seed)?;
                    (normalized_objective(&data, &c)?, centers_json(&c))
                }
            };
            emit(
                &json!({
                    "command": "baseline",
                    "params": { "arm": arm, "k": k, "epsilon": epsilon, "seed": seed, "n": data.len() },
                    "centers": centers,
                    "normalized_objective": objective,
                }),
                out.as_deref(),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let f = Failure {
                kind: "usage",
                message: e.render().to_string().trim().to_string(),
                code: 2,
            };
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            return ExitCode::from(f.code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(f.code)
        }
    }
}
