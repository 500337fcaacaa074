use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use hesse_core::manifest::Manifest;
use hesse_core::run::{run, Command, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Structure tensors at every sample point.
    Analyze,
    /// Identity suite, Bochner formula and scale invariance.
    Verify,
    /// Soliton residuals, Einstein fit, dual soliton and trace identities.
    Soliton,
    /// Integrate the flow and write CSV diagnostics.
    Flow,
    /// Fisher metric and alpha-connection certificates on the simplex.
    Infogeo,
}

/// Tensor calculus and identity checks on Hessian manifolds.
#[derive(Debug, Parser)]
#[command(name = "hesse", version)]
struct Cli {
    command: Cmd,
    manifest: PathBuf,
    /// Replace every per-check tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write flow diagnostics CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the manifest sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of random samples.
    #[arg(long)]
    points: Option<usize>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Analyze => Command::Analyze,
        Cmd::Verify => Command::Verify,
        Cmd::Soliton => Command::Soliton,
        Cmd::Flow => Command::Flow,
        Cmd::Infogeo => Command::Infogeo,
    };
    let opts = RunOptions {
        tolerance: cli.tolerance,
        seed: cli.seed,
        points: cli.points,
    };
    let result = Manifest::load(&cli.manifest)
        .map_err(Into::into)
        .and_then(|m| run(command, &m, &opts).map(|out| (m, out)));
    let (manifest, out) = match result {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let json_path = cli.json.or_else(|| manifest.output.json.as_ref().map(PathBuf::from));
    let csv_path = cli.csv.or_else(|| manifest.output.csv.as_ref().map(PathBuf::from));
    let mut written = Ok(());
    if let Some(p) = &json_path {
        written = written.and(write(p, &out.report.to_json()));
    }
    if let (Some(p), Some(csv)) = (&csv_path, &out.csv) {
        written = written.and(write(p, csv));
    }
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    if !cli.quiet || !out.report.pass {
        print!("{}", out.report.summary());
    }
    if out.report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
