use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use nkit_cli::doc::{parse, InstanceDoc};
use nkit_cli::emit::{render, Format};
use nkit_cli::run::{plan, run, Options, Status, BK_COMMANDS, THETA_COMMANDS, WEYL_COMMANDS};
use nkit_cli::VERSION;
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Json,
    Text,
}

/// Nygaard, Hodge and conjugate filtrations of Breuil-Kisin modules, plus
/// theta-module and Weyl-module checks.
#[derive(Parser, Debug)]
#[command(name = "nkit", version, after_help = commands_help())]
struct Cli {
    /// Commands followed by the instance file. `all` runs every command that
    /// applies; with no command the document's own list is used.
    #[arg(required = true, num_args = 1..)]
    args: Vec<String>,

    /// Override precision as `N` or `N,M`.
    #[arg(long, value_parser = parse_precision)]
    precision: Option<(u32, Option<usize>)>,

    /// Highest Nygaard index to compute.
    #[arg(long)]
    imax: Option<usize>,

    /// Seed for randomized checks.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,

    /// Rerun the graded report at this larger `N` and require agreement.
    #[arg(long, value_name = "N2")]
    escalate: Option<u32>,

    /// Compare the rendered report with this file.
    #[arg(long)]
    golden: Option<PathBuf>,

    /// With `--golden`, overwrite the file instead of comparing.
    #[arg(long, requires = "golden")]
    bless: bool,
}

fn commands_help() -> String {
    format!(
        "Commands:\n  Breuil-Kisin: {}\n  theta:        {}\n  Weyl:         {}\n  any:          selftest, all\n\nExit status: 0 ok, 1 failed verdict or error, 2 usage or schema error, 3 uncertified precision.",
        BK_COMMANDS.join(", "),
        THETA_COMMANDS.join(", "),
        WEYL_COMMANDS.join(", ")
    )
}

fn parse_precision(s: &str) -> Result<(u32, Option<usize>), String> {
    let mut it = s.split(',');
    let n = it.next().unwrap_or("").trim().parse::<u32>().map_err(|e| format!("N: {e}"))?;
    let m = it.next().map(|m| m.trim().parse::<usize>().map_err(|e| format!("M: {e}"))).transpose()?;
    if it.next().is_some() {
        return Err("expected N or N,M".into());
    }
    Ok((n, m))
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("nkit: {msg}");
    ExitCode::from(2)
}

fn selftest_only(cli: &Cli) -> ExitCode {
    let seed = cli.seed.unwrap_or(0);
    let v = nkit_cli::selftest::selftest(seed);
    let status = if v["pass"] == json!(true) { Status::Ok } else { Status::VerdictFailure };
    let report = json!({
        "tool": {"name": "nkit", "version": VERSION},
        "seed": seed,
        "commands": ["selftest"],
        "results": {"selftest": v},
        "status": if status == Status::Ok { "ok" } else { "verdict-failure" },
    });
    emit(cli, &render(&report, format(cli)), status)
}

fn format(cli: &Cli) -> Format {
    match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Text => Format::Text,
    }
}

fn emit(cli: &Cli, rendered: &str, status: Status) -> ExitCode {
    if let Some(path) = &cli.golden {
        if cli.bless {
            if let Err(e) = std::fs::write(path, rendered) {
                return usage(&format!("cannot write {}: {e}", path.display()));
            }
        } else {
            match std::fs::read_to_string(path) {
                Ok(expected) if expected == rendered => {}
                Ok(_) => {
                    print!("{rendered}");
                    eprintln!("nkit: output differs from golden file {}", path.display());
                    return ExitCode::from(1);
                }
                Err(e) => return usage(&format!("cannot read {}: {e}", path.display())),
            }
        }
    }
    print!("{rendered}");
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.args.iter().all(|a| a == "selftest") {
        return selftest_only(&cli);
    }
    let (file, requested) = cli.args.split_last().expect("at least one argument");
    let bytes = match std::fs::read(file) {
        Ok(b) => b,
        Err(e) => return usage(&format!("cannot read {file}: {e}")),
    };
    let doc: InstanceDoc = match parse(&bytes) {
        Ok(d) => d,
        Err(errs) => {
            for e in &errs.0 {
                eprintln!("{file}: {e}");
            }
            return ExitCode::from(2);
        }
    };
    let requested: Vec<String> = if requested.is_empty() {
        doc.commands.clone()
    } else if requested.iter().any(|c| c == "all") {
        let mut all: Vec<String> = match doc.payload.kind() {
            "bk" => BK_COMMANDS.iter(),
            "theta" => THETA_COMMANDS.iter(),
            _ => WEYL_COMMANDS.iter(),
        }
        .map(|c| c.to_string())
        .collect();
        all.extend(requested.iter().filter(|c| *c != "all").cloned());
        all
    } else {
        requested.to_vec()
    };
    if requested.is_empty() {
        return usage("no commands given and the document lists none");
    }
    let commands = match plan(&doc.payload, &requested) {
        Ok(c) => c,
        Err(bad) => return usage(&format!("not applicable to a {} document: {}", doc.payload.kind(), bad.join(", "))),
    };
    if cli.escalate.is_some() && doc.payload.kind() != "bk" {
        return usage("--escalate applies only to Breuil-Kisin documents");
    }
    let opts = Options {
        n: cli.precision.map(|p| p.0),
        m: cli.precision.and_then(|p| p.1),
        imax: cli.imax,
        seed: cli.seed,
        escalate: cli.escalate,
    };
    let sha = hex::encode(Sha256::digest(&bytes));
    let report = run(&doc, &commands, &sha, &opts);
    emit(&cli, &render(&report.value, format(&cli)), report.status)
}
