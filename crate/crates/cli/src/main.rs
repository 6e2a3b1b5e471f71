//! `netsys`: analyze, synthesize and generate networked linear systems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use netsys::construct::{construct_controllable, construct_observable, ConstructOptions, SubsystemSeed};
use netsys::criteria::{full_analysis, Mode};
use netsys::ensemble::{generate_member, EnsembleSpec, Span};
use netsys::io::{read_model, read_stms, write_model};
use netsys::linalg::Mat;
use netsys::model::{check_well_posedness, validate};
use netsys::report;
use netsys::selection::{check_budget, min_local_io};
use netsys::spectra::Side;
use netsys::{lifted, NetError, NetworkedSystem, Status, Tolerances};

/// Exit code for unreadable or malformed input.
const EXIT_MALFORMED: u8 = 3;

#[derive(Parser)]
#[command(name = "netsys", version, about = "Observability and controllability of networked linear systems")]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,
    /// Also write a machine-readable report here.
    #[arg(long, global = true, value_name = "FILE")]
    json: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Relative rank factor (default: max(rows, cols) * machine epsilon).
    #[arg(long, global = true, env = "NETSYS_RANK_TOL")]
    rank_tol: Option<f64>,
    /// Relative distance under which zeros are grouped.
    #[arg(long, global = true, env = "NETSYS_ZERO_TOL")]
    zero_tol: Option<f64>,
    /// Relative margin for strict definiteness.
    #[arg(long, global = true, env = "NETSYS_PD_MARGIN")]
    pd_margin: Option<f64>,
    /// Relative distance under which eigenvalues are merged.
    #[arg(long, global = true, env = "NETSYS_EIG_CLUSTER")]
    eig_cluster: Option<f64>,
    /// Relative singular-value threshold for null spaces.
    #[arg(long, global = true, env = "NETSYS_NULL_TOL")]
    null_tol: Option<f64>,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            rank_factor: self.rank_tol,
            zero_group: self.zero_tol.unwrap_or(d.zero_group),
            pd_margin: self.pd_margin.unwrap_or(d.pd_margin),
            eig_cluster: self.eig_cluster.unwrap_or(d.eig_cluster),
            null_rel: self.null_tol.unwrap_or(d.null_rel),
            ..d
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Observability,
    Controllability,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Observability,
    Controllability,
}

#[derive(Subcommand)]
enum Command {
    /// Check dimensions, the SCM and well-posedness.
    Validate { model: PathBuf },
    /// Print the lifted state-space realization.
    Lift { model: PathBuf },
    /// Decide observability and/or controllability.
    Analyze {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
    },
    /// List subsystem zeros and their groups.
    Zeros {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "observability")]
        side: SideArg,
    },
    /// Minimal local output/input counts for a list of STMs.
    MinIo {
        stms: PathBuf,
        /// Comma-separated per-subsystem budgets.
        #[arg(long, value_delimiter = ',')]
        budget: Option<Vec<usize>>,
    },
    /// Build an observable (or controllable) network around given STMs.
    Construct {
        stms: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        kappa: f64,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[arg(long)]
        use_kappa_bound: bool,
        #[arg(long)]
        controllable: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the resulting model here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate random well-posed networks.
    Ensemble {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of subsystems, as LO..HI.
        #[arg(long, default_value = "2..4", value_parser = parse_span)]
        subsystems: Span,
        #[arg(long, default_value = "1..4", value_parser = parse_span)]
        n_x: Span,
        #[arg(long, default_value = "0..2", value_parser = parse_span)]
        n_v: Span,
        #[arg(long, default_value = "0..2", value_parser = parse_span)]
        n_u: Span,
        #[arg(long, default_value = "0..2", value_parser = parse_span)]
        n_z: Span,
        #[arg(long, default_value = "0..2", value_parser = parse_span)]
        n_y: Span,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        #[arg(long, default_value_t = 0.95)]
        rho_cap: f64,
        /// Write member_NNNN.json files here.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

fn parse_span(s: &str) -> Result<Span, String> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let span = Span::new(p(lo)?, p(hi)?);
    if span.lo > span.hi {
        return Err(format!("empty range {s}"));
    }
    Ok(span)
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        let code = match &e {
            NetError::Document(_)
            | NetError::Json(_)
            | NetError::Io(_)
            | NetError::Dimension(_)
            | NetError::NonBinary { .. }
            | NetError::NonFinite(_)
            | NetError::InvalidArgument(_) => EXIT_MALFORMED,
            NetError::IllPosed { .. } | NetError::BudgetBelowPmax { .. } => Status::CertifiedNo.exit_code() as u8,
            _ => Status::Inconclusive.exit_code() as u8,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_MALFORMED,
        message: format!("{}: {e}", path.display()),
    })
}

fn with_path<T>(path: &Path, r: netsys::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn load_model(path: &Path) -> Result<NetworkedSystem, Failure> {
    with_path(path, read_model(&read_text(path)?))
}

fn mat_json(m: &Mat) -> Value {
    Value::Array(m.row_iter().map(|r| Value::Array(r.iter().map(|&x| json!(x)).collect())).collect())
}

/// Text for stdout, JSON for `--json`, and the status both agree on.
struct Outcome {
    text: String,
    json: Value,
    status: Status,
}

fn run(cmd: &Command, tol: &Tolerances) -> Result<Outcome, Failure> {
    match cmd {
        Command::Validate { model } => {
            let sys = load_model(model)?;
            let v = validate(&sys);
            let wp = v.is_admissible().then(|| check_well_posedness(&sys, tol));
            let ok = v.is_admissible() && wp.as_ref().is_some_and(|w| w.well_posed);
            let status = if ok { Status::CertifiedYes } else { Status::CertifiedNo };
            Ok(Outcome {
                text: report::render_validation(&v, wp.as_ref()),
                json: json!({
                    "admissible": v.is_admissible(),
                    "violations": v.violations.iter().map(|x| x.message.clone()).collect::<Vec<_>>(),
                    "well_posedness": wp,
                }),
                status,
            })
        }
        Command::Lift { model } => {
            let sys = load_model(model)?;
            sys.ensure_admissible()?;
            let l = lifted::lift(&sys, tol)?;
            Ok(Outcome {
                text: report::render_lifted(&l),
                json: json!({"A": mat_json(&l.a), "B": mat_json(&l.b), "C": mat_json(&l.c), "D": mat_json(&l.d)}),
                status: Status::CertifiedYes,
            })
        }
        Command::Analyze { model, mode } => {
            let sys = load_model(model)?;
            sys.ensure_admissible()?;
            let mode = match mode {
                ModeArg::Observability => Mode::Observability,
                ModeArg::Controllability => Mode::Controllability,
                ModeArg::Both => Mode::Both,
            };
            let rep = full_analysis(&sys, mode, tol)?;
            let mut text = report::render_analysis(&rep);
            let mut tables = serde_json::Map::new();
            if matches!(mode, Mode::Observability | Mode::Both) {
                let t = report::observability_table(&sys, tol)?;
                text.push_str(&report::render_sv_table("singular values of observability matrices", &t));
                tables.insert("observability".into(), serde_json::to_value(&t).map_err(NetError::from)?);
            }
            if matches!(mode, Mode::Controllability | Mode::Both) {
                let t = report::controllability_table(&sys, tol)?;
                text.push_str(&report::render_sv_table("singular values of controllability matrices", &t));
                tables.insert("controllability".into(), serde_json::to_value(&t).map_err(NetError::from)?);
            }
            let status = rep.status();
            let _ = std::fmt::Write::write_fmt(&mut text, format_args!("status: {status}\n"));
            Ok(Outcome {
                text,
                json: json!({"report": rep, "singular_values": tables}),
                status,
            })
        }
        Command::Zeros { model, side } => {
            let sys = load_model(model)?;
            sys.ensure_admissible()?;
            let side = match side {
                SideArg::Observability => Side::Observability,
                SideArg::Controllability => Side::Controllability,
            };
            let z = report::zeros_report(&sys, side, tol)?;
            let status = if z.subsystems.iter().all(|s| s.fcnr) {
                Status::CertifiedYes
            } else {
                Status::Inconclusive
            };
            Ok(Outcome {
                text: report::render_zeros(&z),
                json: serde_json::to_value(&z).map_err(NetError::from)?,
                status,
            })
        }
        Command::MinIo { stms, budget } => {
            let doc = with_path(stms, read_stms(&read_text(stms)?))?;
            let sel = min_local_io(&doc.stms, tol);
            let budgets = budget.clone().or(doc.budgets);
            let checks = match &budgets {
                Some(b) if b.len() != doc.stms.len() => {
                    return Err(Failure {
                        code: EXIT_MALFORMED,
                        message: format!("{} budgets for {} subsystems", b.len(), doc.stms.len()),
                    })
                }
                Some(b) => Some(check_budget(&doc.stms, b, tol)),
                None => None,
            };
            let status = match &checks {
                Some(c) if c.iter().any(|x| !x.feasible) => Status::CertifiedNo,
                _ => Status::CertifiedYes,
            };
            Ok(Outcome {
                text: report::render_selection(&sel, checks.as_deref()),
                json: json!({"selection": sel, "budget": checks}),
                status,
            })
        }
        Command::Construct {
            stms,
            kappa,
            max_iters,
            use_kappa_bound,
            controllable,
            seed,
            out,
        } => {
            let doc = with_path(stms, read_stms(&read_text(stms)?))?;
            let n = doc.stms.len();
            let seeds: Vec<SubsystemSeed> = if doc.budgets.is_some() || doc.internal.is_some() {
                (0..n)
                    .map(|i| SubsystemSeed {
                        budget: doc.budgets.as_ref().and_then(|b| b.get(i).copied()),
                        internal: doc.internal.as_ref().and_then(|b| b.get(i).copied()),
                        ..Default::default()
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let opts = ConstructOptions {
                kappa: *kappa,
                max_iters: *max_iters,
                use_kappa_bound: *use_kappa_bound,
                seed: *seed,
                ..Default::default()
            };
            let (sys, trace) = if *controllable {
                construct_controllable(&doc.stms, &seeds, &opts, tol)?
            } else {
                construct_observable(&doc.stms, &seeds, &opts, tol)?
            };
            let model_text = write_model(&sys)?;
            if let Some(p) = out {
                fs::write(p, &model_text).map_err(|e| Failure {
                    code: EXIT_MALFORMED,
                    message: format!("{}: {e}", p.display()),
                })?;
            }
            let status = trace.iterations.last().map_or(Status::Inconclusive, |e| e.status);
            let model: Value = serde_json::from_str(&model_text).map_err(NetError::from)?;
            Ok(Outcome {
                text: report::render_trace(&trace),
                json: json!({"trace": trace, "model": model}),
                status,
            })
        }
        Command::Ensemble {
            count,
            seed,
            subsystems,
            n_x,
            n_v,
            n_u,
            n_z,
            n_y,
            density,
            rho_cap,
            out_dir,
        } => {
            let spec = EnsembleSpec {
                subsystems: *subsystems,
                n_x: *n_x,
                n_v: *n_v,
                n_u: *n_u,
                n_z: *n_z,
                n_y: *n_y,
                density: *density,
                rho_cap: *rho_cap,
                seed: *seed,
                ..Default::default()
            };
            let members: Vec<(NetworkedSystem, bool)> = (0..*count)
                .into_par_iter()
                .map(|k| {
                    let sys = generate_member(&spec, k)?;
                    let ok = validate(&sys).is_admissible() && check_well_posedness(&sys, tol).well_posed;
                    Ok((sys, ok))
                })
                .collect::<netsys::Result<_>>()?;
            if let Some(dir) = out_dir {
                let io_err = |e: std::io::Error| Failure {
                    code: EXIT_MALFORMED,
                    message: format!("{}: {e}", dir.display()),
                };
                fs::create_dir_all(dir).map_err(io_err)?;
                for (k, (sys, _)) in members.iter().enumerate() {
                    fs::write(dir.join(format!("member_{k:04}.json")), write_model(sys)?).map_err(io_err)?;
                }
            }
            let mut text = String::from("member  subsystems  states  well-posed\n");
            for (k, (sys, ok)) in members.iter().enumerate() {
                let nx: usize = sys.subsystems().iter().map(|s| s.a_tt.nrows()).sum();
                text.push_str(&format!(
                    "{k:>6}  {:>10}  {nx:>6}  {}\n",
                    sys.len(),
                    if *ok { "yes" } else { "no" }
                ));
            }
            let all_ok = members.iter().all(|(_, ok)| *ok);
            Ok(Outcome {
                text,
                json: json!({
                    "spec": spec,
                    "members": members.iter().enumerate().map(|(k, (s, ok))| json!({
                        "index": k, "subsystems": s.len(), "well_posed": ok
                    })).collect::<Vec<_>>(),
                }),
                status: if all_ok { Status::CertifiedYes } else { Status::CertifiedNo },
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own exit code 2 would read as "inconclusive".
            return ExitCode::from(if e.use_stderr() { EXIT_MALFORMED } else { 0 });
        }
    };
    let tol = cli.tol.tolerances();
    match run(&cli.cmd, &tol) {
        Ok(out) => {
            print!("{}", out.text);
            let code = out.status.exit_code() as u8;
            if let Some(path) = &cli.json {
                let mut doc = out.json;
                if let Value::Object(m) = &mut doc {
                    m.insert("status".into(), json!(out.status));
                    m.insert("exit_code".into(), json!(code));
                }
                let text = serde_json::to_string_pretty(&doc).expect("report values are finite JSON");
                if let Err(e) = fs::write(path, text) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_MALFORMED);
                }
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
