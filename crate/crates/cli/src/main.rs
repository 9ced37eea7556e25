//! `bitml`: check, verify and compile BitML contracts.

mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bitml::ast::{check_static, ContractSpec};
use bitml::compiler::{
    check_standardness, compile, suggest_flattening, CompileError, DEFAULT_FEE_PER_TX,
};
use bitml::parser::{
    parse_file_bytes, parse_ltl, parse_strategies, parse_strategy, ContractFile, Query,
};
use bitml::txwire::{finalize, TestSigner};
use bitml::verifier::{
    check_liquidity, check_ltl, Strategies, VerifyError, VerifyOptions, DEFAULT_STATE_LIMIT,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use report::{Command, CompileReport, QueryReport, QuerySpec, Report};

const EXIT_OK: u8 = 0;
const EXIT_PARSE: u8 = 1;
const EXIT_STATIC: u8 = 2;
const EXIT_FALSE: u8 = 3;
const EXIT_STATE_LIMIT: u8 = 4;
const EXIT_FEES: u8 = 5;
const EXIT_NONSTANDARD: u8 = 6;
/// Bad command line, as in sysexits.h.
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "bitml",
    version,
    about = "Check, verify and compile BitML contracts"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse the contract and run the static checks.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Model-check liquidity and LTL queries.
    Verify(VerifyArgs),
    /// Compile to a transaction DAG and signed raw transactions.
    Compile(CompileArgs),
}

#[derive(Args)]
struct VerifyArgs {
    file: PathBuf,
    /// Check liquidity. Without --liquidity or --ltl the queries in the file are used.
    #[arg(long)]
    liquidity: bool,
    /// Liquidity holds once at most this many satoshi remain in the contract.
    #[arg(long, default_value_t = 0, requires = "liquidity")]
    epsilon: u64,
    /// LTL query; may be repeated.
    #[arg(long = "ltl", value_name = "FORMULA")]
    ltl: Vec<String>,
    /// A `(strategy ...)` form; may be repeated. Replaces the file's strategies for that participant.
    #[arg(long = "strategy", value_name = "SEXPR")]
    strategy: Vec<String>,
    /// File of `(strategy ...)` forms.
    #[arg(long, conflicts_with = "strategy")]
    strategy_file: Option<PathBuf>,
    #[arg(long, env = "BITML_STATE_LIMIT", default_value_t = DEFAULT_STATE_LIMIT)]
    state_limit: usize,
    /// Guaranteed moves happen before time advances.
    #[arg(long)]
    urgent: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct CompileArgs {
    file: PathBuf,
    #[arg(short = 'o', long = "out", value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FEE_PER_TX)]
    fee_per_tx: u64,
    /// Report standardness violations without failing; txs.hex is not written.
    #[arg(long)]
    allow_nonstandard: bool,
    /// Preimage of a committed secret as NAME=HEX; may be repeated.
    #[arg(long = "secret", value_name = "NAME=HEX", value_parser = parse_secret)]
    secret: Vec<(String, Vec<u8>)>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    /// compile only: finalized transactions on stdout, one per line, and the text report on stderr.
    Hex,
}

fn parse_secret(s: &str) -> Result<(String, Vec<u8>), String> {
    let (name, hex) = s.split_once('=').ok_or("expected NAME=HEX")?;
    let bytes = hex::decode(hex).map_err(|e| format!("preimage of `{name}`: {e}"))?;
    Ok((name.to_string(), bytes))
}

/// Parses and statically checks the input. `None` means the report already
/// carries the failure.
fn load(path: &Path, report: &mut Report) -> Option<ContractFile> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            report.error = Some(format!("cannot read {}: {e}", path.display()));
            report.exit_code = EXIT_PARSE.into();
            return None;
        }
    };
    let file = match parse_file_bytes(&bytes) {
        Ok(f) => f,
        Err(e) => {
            report.parse_error = Some(e);
            report.exit_code = EXIT_PARSE.into();
            return None;
        }
    };
    report.static_errors = check_static(&file.spec);
    if !report.static_errors.is_empty() {
        report.exit_code = EXIT_STATIC.into();
        return None;
    }
    Some(file)
}

fn run_check(file: &Path) -> Report {
    let mut report = Report::new(Command::Check, &file.display().to_string());
    load(file, &mut report);
    report
}

fn strategies_for(args: &VerifyArgs, file: &ContractFile) -> Result<Strategies, String> {
    let cli = if let Some(path) = &args.strategy_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        parse_strategies(&text).map_err(|e| format!("{}:{e}", path.display()))?
    } else {
        args.strategy
            .iter()
            .map(|s| parse_strategy(s).map_err(|e| format!("--strategy {s}: {e}")))
            .collect::<Result<Vec<_>, _>>()?
    };
    let overridden: Vec<String> = cli.iter().map(|s| s.participant.clone()).collect();
    let from_file = file
        .strategies
        .iter()
        .filter(|s| !overridden.contains(&s.participant))
        .cloned();
    Ok(Strategies::from_list(from_file.chain(cli)))
}

fn queries_for(args: &VerifyArgs, file: &ContractFile) -> Result<Vec<QuerySpec>, String> {
    let mut out = Vec::new();
    if args.liquidity || !args.ltl.is_empty() {
        if args.liquidity {
            out.push(QuerySpec::Liquidity {
                epsilon: args.epsilon,
            });
        }
        for q in &args.ltl {
            let f = parse_ltl(q).map_err(|e| format!("--ltl {q}: {e}"))?;
            out.push(QuerySpec::Ltl {
                formula: f.to_string(),
            });
        }
    } else {
        for q in &file.queries {
            out.push(match q {
                Query::Liquidity => QuerySpec::Liquidity { epsilon: 0 },
                Query::Ltl { formula, .. } => QuerySpec::Ltl {
                    formula: formula.to_string(),
                },
            });
        }
    }
    Ok(out)
}

fn run_query(
    spec: &ContractSpec,
    strategies: &Strategies,
    q: QuerySpec,
    options: VerifyOptions,
) -> QueryReport {
    let result = match &q {
        QuerySpec::Liquidity { epsilon } => check_liquidity(
            spec,
            strategies,
            &VerifyOptions {
                epsilon: *epsilon,
                ..options
            },
        ),
        QuerySpec::Ltl { formula } => {
            let f = parse_ltl(formula).expect("formulas are validated before verification");
            check_ltl(spec, strategies, &f, &options)
        }
    };
    match result {
        Ok(r) => QueryReport {
            spec: q,
            verdict: Some(r.verdict),
            witness: r.witness,
            stats: Some(r.stats),
            error: None,
        },
        Err(e) => QueryReport {
            spec: q,
            verdict: None,
            witness: None,
            stats: None,
            error: Some(e.to_string()),
        },
    }
}

fn run_verify(args: &VerifyArgs) -> Result<Report, String> {
    let mut report = Report::new(Command::Verify, &args.file.display().to_string());
    let Some(file) = load(&args.file, &mut report) else {
        return Ok(report);
    };
    let queries = queries_for(args, &file)?;
    if queries.is_empty() {
        return Err(
            "nothing to verify: pass --liquidity or --ltl, or add queries to the file".into(),
        );
    }
    let strategies = match strategies_for(args, &file) {
        Ok(s) => s,
        Err(e) => {
            report.error = Some(e);
            report.exit_code = EXIT_PARSE.into();
            return Ok(report);
        }
    };
    if let Err(e) = strategies.validate(&file.spec) {
        report.error = Some(VerifyError::from(e).to_string());
        report.exit_code = EXIT_STATIC.into();
        return Ok(report);
    }
    let options = VerifyOptions {
        state_limit: args.state_limit,
        urgent: args.urgent,
        epsilon: 0,
    };
    let mut limit_hit = false;
    for q in queries {
        let r = run_query(&file.spec, &strategies, q, options);
        limit_hit |= r.verdict.is_none();
        report.queries.push(r);
    }
    report.exit_code = if limit_hit {
        EXIT_STATE_LIMIT
    } else if report.queries.iter().any(|q| q.verdict == Some(false)) {
        EXIT_FALSE
    } else {
        EXIT_OK
    }
    .into();
    Ok(report)
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<String>) -> std::io::Result<()> {
    std::fs::write(dir.join(name), contents)?;
    written.push(name.to_string());
    Ok(())
}

fn run_compile(args: &CompileArgs) -> (Report, Option<String>) {
    let mut report = Report::new(Command::Compile, &args.file.display().to_string());
    let Some(file) = load(&args.file, &mut report) else {
        return (report, None);
    };
    let dag = match compile(&file.spec, args.fee_per_tx) {
        Ok(d) => d,
        Err(e) => {
            report.error = Some(e.to_string());
            report.exit_code = match e {
                CompileError::InsufficientFees { .. } => EXIT_FEES,
                CompileError::Standardness(_) => EXIT_NONSTANDARD,
            }
            .into();
            return (report, None);
        }
    };
    let standardness = check_standardness(&dag);
    let hints = if standardness.is_empty() {
        Vec::new()
    } else {
        suggest_flattening(&file.spec)
    };
    let mut summary = CompileReport {
        fee_per_tx: args.fee_per_tx,
        templates: dag.templates.len(),
        total_fees: dag.templates.iter().map(|t| t.fee()).sum(),
        standardness,
        hints,
        missing_preimages: Vec::new(),
        artifacts: Vec::new(),
    };
    let mut hex = None;
    let written = (|| -> Result<(), String> {
        std::fs::create_dir_all(&args.out)
            .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
        let io = |e: std::io::Error| format!("cannot write to {}: {e}", args.out.display());
        write(
            &args.out,
            "dag.json",
            &dag.to_json(),
            &mut summary.artifacts,
        )
        .map_err(io)?;
        if summary.standardness.is_empty() {
            let preimages: BTreeMap<String, Vec<u8>> = args.secret.iter().cloned().collect();
            let fin = finalize(&dag, &TestSigner, &preimages).map_err(|e| e.to_string())?;
            summary.missing_preimages = fin.missing_preimages.iter().cloned().collect();
            let lines = fin.to_hex_lines();
            write(&args.out, "txs.hex", &lines, &mut summary.artifacts).map_err(io)?;
            hex = Some(lines);
        }
        Ok(())
    })();
    if !summary.standardness.is_empty() && !args.allow_nonstandard {
        report.exit_code = EXIT_NONSTANDARD.into();
    }
    if let Err(e) = written {
        report.error = Some(e);
        report.exit_code = EXIT_PARSE.into();
    }
    summary.artifacts.push("report.json".into());
    report.compile = Some(summary);
    if let Err(e) = std::fs::write(args.out.join("report.json"), report.to_json()) {
        report.error = Some(format!("cannot write report.json: {e}"));
        report.exit_code = EXIT_PARSE.into();
    }
    (report, hex)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => e.exit(),
    };
    let (report, format, hex) = match &cli.command {
        Cmd::Check {
            format: Format::Hex,
            ..
        }
        | Cmd::Verify(VerifyArgs {
            format: Format::Hex,
            ..
        }) => {
            eprintln!("error: --format hex is only available for compile");
            return ExitCode::from(EXIT_USAGE);
        }
        Cmd::Check { file, format } => (run_check(file), *format, None),
        Cmd::Verify(args) => match run_verify(args) {
            Ok(r) => (r, args.format, None),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
        Cmd::Compile(args) => {
            let (r, hex) = run_compile(args);
            (r, args.format, hex)
        }
    };
    match format {
        Format::Json => print!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text()),
        Format::Hex => {
            eprint!("{}", report.to_text());
            print!("{}", hex.unwrap_or_default());
        }
    }
    ExitCode::from(report.exit_code as u8)
}
