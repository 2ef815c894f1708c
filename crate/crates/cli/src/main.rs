//! `bl`: command-line front end for Brascamp–Lieb analysis.

mod args;
mod heat;
mod report;
mod verbs;

use clap::{CommandFactory, Parser};
use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures.
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", args::Cli::command().render_usage());
            return ExitCode::from(1);
        }
    };
    let report = match verbs::run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match emit(&cli, &report) {
        Ok(()) => ExitCode::from(report.exit_code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn emit(cli: &args::Cli, report: &report::Report) -> std::io::Result<()> {
    let body = match cli.format {
        args::Format::Text => report.to_text(),
        args::Format::Json => report.to_json_string(),
    };
    match &cli.out {
        Some(path) => std::fs::write(path, &body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    if let Some(path) = &cli.csv {
        std::fs::write(path, report.csv.as_deref().unwrap_or(""))?;
        if let Some(plot) = &cli.plot {
            std::fs::write(plot, report::gnuplot_script(path, &report.status))?;
        }
    }
    Ok(())
}
