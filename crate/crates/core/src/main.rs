use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sepkern::scenario::{self, Command, Overrides, Report, Scenario};
use sepkern::{list_families, Error};

#[derive(Parser)]
#[command(name = "sepkern", version, about = "Separable-kernel operators and covariance relations AB = B F(A)")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Residual tolerance (relative to the kernel scale).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the JSON report here ("-" for stdout, replacing the text output).
    #[arg(long, global = true, value_name = "OUT")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArg {
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pairing of two atoms over a domain.
    Pair(ScenarioArg),
    /// Composition A B.
    Compose(ScenarioArg),
    /// Power A^m.
    Power(ScenarioArg),
    /// Check AB = B F(A) on the three regions.
    Check(ScenarioArg),
    /// Solve for B given A (nullspace).
    #[command(name = "solve_b", alias = "solve-b")]
    SolveB(ScenarioArg),
    /// Solve for A given B (Newton from seeds).
    #[command(name = "solve_a", alias = "solve-a")]
    SolveA(ScenarioArg),
    /// Commutator AB - BA and the commutativity verdict.
    Commutator(ScenarioArg),
    /// Verify a registered family on seeded random draws.
    Reproduce {
        id: Option<String>,
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Run scenario files with the command they name, in order.
    Run { files: Vec<PathBuf> },
    /// Registered family ids with one-line descriptions.
    ListFamilies,
}

fn emit(report: &Report, json: &Option<PathBuf>) -> Result<(), Error> {
    match json.as_deref() {
        Some(p) if p.as_os_str() == "-" => print!("{}", report.to_json()),
        Some(p) => {
            print!("{}", report.text);
            std::fs::write(p, report.to_json()).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
        }
        None => print!("{}", report.text),
    }
    Ok(())
}

fn run_file(path: &Path, cmd: Option<Command>, ov: &Overrides) -> Result<Report, Error> {
    scenario::run(&Scenario::load(path)?, cmd, ov)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut ov = Overrides { tol: cli.tol, seed: cli.seed, ..Overrides::default() };
    let reports = match cli.command {
        Cmd::ListFamilies => {
            for (id, desc) in list_families() {
                println!("{id}\t{desc}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Pair(s) => vec![run_file(&s.scenario, Some(Command::Pair), &ov)],
        Cmd::Compose(s) => vec![run_file(&s.scenario, Some(Command::Compose), &ov)],
        Cmd::Power(s) => vec![run_file(&s.scenario, Some(Command::Power), &ov)],
        Cmd::Check(s) => vec![run_file(&s.scenario, Some(Command::Check), &ov)],
        Cmd::SolveB(s) => vec![run_file(&s.scenario, Some(Command::SolveB), &ov)],
        Cmd::SolveA(s) => vec![run_file(&s.scenario, Some(Command::SolveA), &ov)],
        Cmd::Commutator(s) => vec![run_file(&s.scenario, Some(Command::Commutator), &ov)],
        Cmd::Reproduce { id, scenario, draws } => {
            ov.family_id = id.clone();
            ov.draws = draws;
            match (id, scenario) {
                (_, Some(path)) => vec![run_file(&path, Some(Command::Reproduce), &ov)],
                (Some(id), None) => vec![scenario::reproduce(&id, &ov)],
                (None, None) => vec![Err(Error::Argument("reproduce needs a family id or --scenario".into()))],
            }
        }
        Cmd::Run { files } => {
            if files.len() > 1 && cli.json.as_ref().is_some_and(|p| p.as_os_str() != "-") {
                eprintln!("error: --json OUT takes a single scenario");
                return ExitCode::from(2);
            }
            files.iter().map(|f| run_file(f, None, &ov)).collect()
        }
    };
    let mut code = 0u8;
    for r in reports {
        match r.and_then(|rep| emit(&rep, &cli.json).map(|_| rep)) {
            Ok(rep) => code = code.max(rep.exit_code() as u8),
            Err(e) => {
                eprintln!("error: {e}");
                code = 2;
            }
        }
    }
    ExitCode::from(code)
}
