//! `magnonics`: batch front end for hybrid-system modeling and fitting.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

mod commands;
mod config;
mod data;
mod error;
mod flags;
mod report;
mod units;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Context, FitKind, Output};
use config::ParameterFile;
use error::CliError;
use flags::Overrides;
use report::{digest, Report};

#[derive(Parser, Debug)]
#[command(name = "magnonics", version, about = "Dispersive qubit-magnon modeling and fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Parameter file (TOML).
    #[arg(long)]
    params: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Truncation overrides, e.g. `cavity=4,fock=40`.
    #[arg(long)]
    truncation: Option<String>,
    /// Fixed values, e.g. `nbar_m=1.06,chi_qm=1.5`, in parameter-file units.
    #[arg(long)]
    fix: Option<String>,
    /// Sweep axes, e.g. `kerr=0,-0.1,-0.2;omega2=0:1.2:0.06`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dressed parameters from diagonalizing the hybrid Hamiltonian.
    Params(Common),
    /// Qubit spectrum of the driven Kittel mode.
    Spectrum(Common),
    /// Coupler reflection map across the magnon avoided crossing.
    Crossing(Common),
    /// Kerr steady-state occupancy versus Ω² for several K.
    KerrSweep(Common),
    /// Probe occupancy, magnon occupancy slope and occupancy versus power.
    Occupancy(Common),
    /// Fit a data table.
    Fit {
        #[arg(long, value_enum)]
        kind: FitKind,
        /// Data file (CSV).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn read_file(path: &PathBuf, what: &str) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read {what} `{}`: {e}", path.display())))
}

fn context(name: &str, common: &Common) -> Result<Context, CliError> {
    let bytes = read_file(&common.params, "parameter file")?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::input("parameter file is not UTF-8"))?;
    let file = ParameterFile::parse(&text)?;
    let mut truncation = file.truncation;
    if let Some(spec) = &common.truncation {
        truncation.apply(spec)?;
    }
    let mut report = Report::new(name);
    report.inputs.push(digest("params", &common.params.display().to_string(), &bytes));
    for (flag, v) in [("truncation", &common.truncation), ("fix", &common.fix), ("grid", &common.grid)] {
        if let Some(v) = v {
            report.setting(flag, v);
        }
    }
    Ok(Context {
        file,
        truncation,
        fix: Overrides::fix(common.fix.as_deref())?,
        grid: Overrides::grid(common.grid.as_deref())?,
        report,
    })
}

fn run(cli: Cli) -> Result<(Output, Common), CliError> {
    let (output, common) = match cli.command {
        Command::Params(c) => (commands::params(context("params", &c)?)?, c),
        Command::Spectrum(c) => (commands::spectrum(context("spectrum", &c)?)?, c),
        Command::Crossing(c) => (commands::crossing(context("crossing", &c)?)?, c),
        Command::KerrSweep(c) => (commands::kerr_sweep(context("kerr-sweep", &c)?)?, c),
        Command::Occupancy(c) => (commands::occupancy(context("occupancy", &c)?)?, c),
        Command::Fit { kind, data, common } => {
            let name = format!("fit {}", kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
            let mut ctx = context(&name, &common)?;
            let bytes = read_file(&data, "data file")?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::input("data file is not UTF-8"))?;
            ctx.report.inputs.push(digest("data", &data.display().to_string(), &bytes));
            (commands::fit(kind, &text, ctx)?, common)
        }
    };
    Ok((output, common))
}

fn emit(output: &Output, common: &Common) -> Result<(), CliError> {
    let mut sink: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| CliError::input(format!("cannot create `{}`: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match common.format {
        Format::Json => output.report.write(&mut sink)?,
        Format::Csv => {
            let table = output
                .table
                .as_ref()
                .ok_or_else(|| CliError::input("this command has no CSV output; use --format json"))?;
            data::write_table(&mut sink, &table.headers, &table.rows)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = run(cli).and_then(|(output, common)| {
        for w in &output.report.warnings {
            eprintln!("warning: {w}");
        }
        emit(&output, &common)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magnonics: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
