use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sublin_cli::{execute, parse_config, Check, Format, EXIT_INPUT};

#[derive(Parser)]
#[command(name = "sublin", version, about = "Verify LLN rate bounds for sublinear expectations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for report files
    #[arg(long, global = true, value_name = "DIR", default_value = "reports")]
    out: PathBuf,
    /// Report format, overriding the configuration
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Sampling seed, overriding the configuration
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Engine state cap, overriding the configuration
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    state_cap: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Upper and lower expectations of φ(S_n/n)
    Eval,
    /// Rate bounds across the n schedule
    Sweep,
    /// Distance-moment bound against the upper variance
    Variance,
    /// Chatterji's inequality for constructed measures
    Chatterji,
    /// Conditional-mean containment and martingale checks
    Prop2,
    /// Lower-half bound through the extremal product measure
    Pstar,
    /// Seeded Monte Carlo against the exact forward value
    Mc,
    /// Every check listed in the configuration
    VerifyAll,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(EXIT_INPUT as u8);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    if let Some(f) = cli.format {
        cfg.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(c) = cli.state_cap {
        cfg.state_cap = usize::try_from(c).unwrap_or(usize::MAX);
    }
    let checks = match cli.command {
        Command::Eval => vec![Check::Eval],
        Command::Sweep => vec![Check::Sweep],
        Command::Variance => vec![Check::Variance],
        Command::Chatterji => vec![Check::Chatterji],
        Command::Prop2 => vec![Check::Prop2],
        Command::Pstar => vec![Check::Pstar],
        Command::Mc => vec![Check::Mc],
        Command::VerifyAll => cfg.checks.clone(),
    };
    match execute(&cfg, &checks, &cli.out) {
        Ok(summary) => {
            for c in &summary.checks {
                let status = if c.failures == 0 { "pass" } else { "FAIL" };
                println!(
                    "{:<10} {status}  {} rows, {} failing  {}",
                    c.check.name(),
                    c.rows,
                    c.failures,
                    c.report.display()
                );
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
