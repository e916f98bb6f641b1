//! `forge-insights`: offline reports over event exports and corpus checks.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use forge_cli::{read_input, write_output, DEFAULT_CATEGORIES};
use forge_core::insights::{report, validate_corpus, CategoryMap, EventExport, ReportKind};

#[derive(Parser)]
#[command(name = "forge-insights", version, about = "Engagement reports and corpus validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a report table and write its plot-ready series.
    Report {
        export: PathBuf,
        /// creation-heatmap, reading-by-hour, or behavior-categories.
        #[arg(long)]
        kind: String,
        /// Category mapping (`category<TAB>keyword`); a bundled one when omitted.
        #[arg(long)]
        categories: Option<PathBuf>,
        /// Series output; `<export>.<kind>.json` when omitted, `-` for stdout.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Validate every story document in a directory. Exits 1 on any violation.
    Validate {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the bundled synthetic export (16 accounts, 218 stories).
    SynthExport {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Report { export, kind, categories, series } => {
            let k = ReportKind::parse(&kind).ok_or_else(|| anyhow!("unknown report kind {kind:?}"))?;
            let parsed = EventExport::parse(&read_input(&export)?).map_err(|e| anyhow!("{}: {e}", e.code()))?;
            let map = match categories {
                Some(p) => CategoryMap::parse(&read_input(&p)?),
                None => CategoryMap::parse(DEFAULT_CATEGORIES),
            }
            .map_err(|e| anyhow!("category mapping: {e}"))?;
            let r = report(&parsed, k, Some(&map));
            print!("{}", r.render_table());
            let series_json = serde_json::to_string_pretty(&r.series)?;
            let target = series.unwrap_or_else(|| PathBuf::from(format!("{}.{kind}.json", export.display())));
            if target.as_os_str() == "-" {
                println!("{series_json}");
            } else {
                write_output(Some(&target), &series_json)?;
                eprintln!("series written to {}", target.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { dir, json } => {
            let summary = validate_corpus(&dir)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.render());
            }
            Ok(if summary.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::SynthExport { out } => {
            write_output(out.as_deref(), &forge_core::fixtures::engagement_export().to_json_string())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
