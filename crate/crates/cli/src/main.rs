use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qsrd_core::bounds::{max_eps, theorem_contradiction_check, Mode, TheoremCheck, DEFAULT_LOG_D};
use qsrd_core::compiler::run_pipeline;
use qsrd_core::facts::{all_pass, to_csv, verify_facts};
use qsrd_core::protocol::{do_nothing, padded_teleport, synthetic, teleport, Layout, ProtocolSpec};
use qsrd_core::states::{BasisMode, InstanceDescriptor};
use qsrd_core::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "qsrd", version, about = "Expected vs worst-case communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded numerical checks of the distance and entropy inequalities (CSV).
    VerifyFacts {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..=4))]
        dim: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prune, rescale, truncate and compile a protocol; prints a JSON report.
    Pipeline {
        instance: PathBuf,
        protocol: PathBuf,
        /// Error parameter; defaults to the measured protocol error.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        mu: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter arithmetic of the contradiction argument over an ε grid.
    Theorem {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        p: f64,
        /// Comma-separated ε values; defaults to the admissible range endpoints
        /// plus `--grid` log-spaced interior points.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        grid: usize,
        #[arg(long, default_value_t = DEFAULT_LOG_D)]
        log_d: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes an instance descriptor.
    EmitInstance {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        d_a: usize,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Bases::PhasedShared)]
        bases: Bases,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes one of the built-in protocols.
    EmitProtocol {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        d: usize,
        /// Redistribution layout with this `A` dimension; transfer layout when absent.
        #[arg(long)]
        d_a: Option<usize>,
        /// Rotation applied to Bob's output (teleport only).
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest message index (padded teleport only).
        #[arg(long, default_value_t = 64)]
        max_index: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bases {
    PhasedShared,
    IndependentPerA,
    Computational,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Teleport,
    PaddedTeleport,
    Synthetic,
    DoNothing,
}

enum Failure {
    Usage(String),
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Schema(_)
            | Error::Json(_)
            | Error::OutOfRange(_)
            | Error::DimensionMismatch(_)
            | Error::UnknownRegister(_)
            | Error::LabelCollision(_)
            | Error::Protocol(_) => Failure::Usage(e.to_string()),
            other => Failure::Violation(other.to_string()),
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::VerifyFacts { seed, trials, dim, out } => {
            let rows = verify_facts(seed, trials as usize, dim as usize)?;
            write_output(out.as_deref(), &to_csv(&rows))?;
            if !all_pass(&rows) {
                let n = rows.iter().filter(|r| !r.pass).count();
                return Err(Failure::Violation(format!("{n} fact rows failed")));
            }
            Ok(())
        }
        Command::Pipeline {
            instance,
            protocol,
            eps,
            mu,
            out,
        } => {
            let inst = InstanceDescriptor::from_json(&read(&instance)?)?.build()?;
            let spec = ProtocolSpec::from_json(&read(&protocol)?)?;
            let input = if spec.bob.iter().any(|r| r.label == "B") {
                &inst.psi
            } else {
                &inst.psi_tilde
            };
            let outcome = run_pipeline(&spec, input, eps, mu)?;
            let report = outcome.report;
            write_output(out.as_deref(), &(report.to_json() + "\n"))?;
            if !report.pass {
                let failed: Vec<&str> = report
                    .checks()
                    .into_iter()
                    .filter(|(_, c)| !c.pass)
                    .map(|(n, _)| n)
                    .collect();
                return Err(Failure::Violation(format!("bound exceeded: {}", failed.join(", "))));
            }
            Ok(())
        }
        Command::Theorem {
            mode,
            p,
            eps,
            grid,
            log_d,
            format,
            out,
        } => {
            let grid_eps = if eps.is_empty() {
                default_grid(mode, p, grid)
            } else {
                eps
            };
            let rows = grid_eps
                .iter()
                .map(|&e| theorem_contradiction_check(mode, p, e, log_d))
                .collect::<qsrd_core::Result<Vec<_>>>()?;
            let text = match format {
                Format::Csv => theorem_csv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows).expect("plain data") + "\n",
            };
            write_output(out.as_deref(), &text)
        }
        Command::EmitInstance {
            d,
            d_a,
            beta,
            seed,
            bases,
            out,
        } => {
            let bases = match bases {
                Bases::PhasedShared => BasisMode::PhasedShared,
                Bases::IndependentPerA => BasisMode::IndependentPerA,
                Bases::Computational => BasisMode::Computational,
            };
            let desc = InstanceDescriptor {
                schema: 1,
                d,
                d_a,
                beta,
                seed,
                bases: Some(bases),
            };
            desc.build()?;
            write_output(out.as_deref(), &(desc.to_json() + "\n"))
        }
        Command::EmitProtocol {
            kind,
            d,
            d_a,
            theta,
            seed,
            max_index,
            out,
        } => {
            if d < 2 {
                return Err(Failure::Usage(format!("d = {d} must be at least 2")));
            }
            let layout = match d_a {
                Some(d_a) => Layout::Redistribution { d_a },
                None => Layout::Transfer,
            };
            let spec = match kind {
                Kind::Teleport => teleport(d, layout, theta),
                Kind::PaddedTeleport => padded_teleport(d, layout, seed, max_index)?,
                Kind::Synthetic => synthetic(d, layout, seed),
                Kind::DoNothing => do_nothing(d, layout),
            };
            write_output(out.as_deref(), &(spec.to_json() + "\n"))
        }
    }
}

/// `0`, `max_eps` and `n` log-spaced points strictly between them.
fn default_grid(mode: Mode, p: f64, n: usize) -> Vec<f64> {
    if p >= 1.0 {
        return vec![0.0];
    }
    let hi = max_eps(mode, p);
    let lo = hi * 1e-12;
    let mut grid = vec![0.0];
    grid.extend((0..n).map(|i| lo * (hi / lo).powf((i + 1) as f64 / (n + 1) as f64)));
    grid.push(hi);
    grid
}

fn theorem_csv(rows: &[TheoremCheck]) -> String {
    let mut s = String::from(
        "mode,p,eps,status,beta,mu,error_bound,cost_coefficient,cost_coefficient_verbatim,lower_bound,contradiction,contradiction_verbatim\n",
    );
    for row in rows {
        let line = match row {
            TheoremCheck::Feasible(t) => format!(
                "{},{},{:e},feasible,{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                t.mode,
                t.p,
                t.eps,
                t.beta,
                t.mu,
                t.compiled_error_bound,
                t.cost_coefficient,
                t.cost_coefficient_verbatim,
                t.lower_bound,
                t.contradiction,
                t.contradiction_verbatim
            ),
            TheoremCheck::Infeasible { mode, p, eps } => format!("{mode},{p},{eps:e},infeasible,,,,,,,,"),
            TheoremCheck::RangeViolation { mode, p, eps, .. } => format!("{mode},{p},{eps:e},range-violation,,,,,,,,"),
        };
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}
