//! Command-line surface: inference, satisfiability, table conversion, and
//! symbolic display over JSON networks and valuations. Thin wrappers; all
//! results come from the library and pass through one formatter.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::atom::{Atom, Valuation};
use crate::cpt::{from_cpt, CptNetwork};
use crate::infer::{conditional_probability, marginal_views, InferError, Literal, Query};
use crate::network::Network;
use crate::oracle::{enumerate_probability, DEFAULT_ATOM_CAP};
use crate::pulse::{estimate_conditional, PulseConfig, PulseError};
use crate::rewrite::Budget;
use crate::sat::{count_models, decide_sat, parse_dimacs, SatOutcome};

// infer exit codes; sat uses solver conventions, convert and show plain 0/1
const EXIT_PARSE: i32 = 1;
const EXIT_VALIDATION: i32 = 2;
const EXIT_BUDGET: i32 = 3;
const EXIT_ZERO_EVIDENCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "qpbn",
    version,
    about = "Inference in noisy AND-OR-NOT networks via quasi-probability algebra"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a probability query against a network
    Infer(InferArgs),
    /// Decide satisfiability of a DIMACS CNF formula
    Sat(SatArgs),
    /// Compile a conditional-probability-table network to AND-OR-NOT form
    Convert(ConvertArgs),
    /// Print a node's marginal in raw and decomposed form
    Show(ShowArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Engine {
    /// Symbolic elimination, then numeric evaluation
    Exact,
    /// Brute-force enumeration over symbol outcomes
    Oracle,
    /// Pulse-train estimation
    Pulse,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Network file (JSON)
    #[arg(long)]
    net: PathBuf,
    /// Valuation file (flat JSON map, symbol to probability)
    #[arg(long)]
    val: PathBuf,
    /// Query like "B | F, !G"; without | an unconditional event
    #[arg(long)]
    query: String,
    #[arg(long, value_enum, default_value_t = Engine::Exact)]
    engine: Engine,
    /// Also print the decomposed numerator and denominator (exact engine)
    #[arg(long)]
    symbolic: bool,
    /// Emit one JSON record instead of text
    #[arg(long)]
    json: bool,
    /// Elimination step budget (exact engine)
    #[arg(long)]
    budget: Option<usize>,
    /// Periods per pulse train (pulse engine) [default: 20000]
    #[arg(long)]
    periods: Option<usize>,
    /// Slots per period (pulse engine) [default: 64]
    #[arg(long)]
    resolution: Option<usize>,
    /// RNG seed (pulse engine) [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Independent repeats for the spread report (pulse engine) [default: 1]
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args, Debug)]
struct SatArgs {
    /// DIMACS CNF file
    cnf: PathBuf,
    /// Count models instead of deciding
    #[arg(long)]
    count: bool,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Table network file (JSON)
    #[arg(long)]
    cpt: PathBuf,
    /// Where to write the compiled network
    #[arg(long)]
    out_net: PathBuf,
    /// Where to write the symbol valuation
    #[arg(long)]
    out_val: PathBuf,
}

#[derive(Args, Debug)]
struct ShowArgs {
    /// Network file (JSON)
    #[arg(long)]
    net: PathBuf,
    /// Node whose marginal to print
    node: String,
    /// Also print the expanded multilinear form
    #[arg(long)]
    expanded: bool,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn fmt_prob(p: f64) -> String {
    format!("{p:.6}")
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| fail(EXIT_PARSE, format!("cannot read {}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    let text = read(path)?;
    // syntax problems are parse failures, structural rules validation ones
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    serde_json::from_value(value)
        .map_err(|e| fail(EXIT_VALIDATION, format!("{}: {e}", path.display())))
}

fn load_valuation(path: &Path) -> Result<Valuation, Failure> {
    let text = read(path)?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    Valuation::new(map.into_iter().map(|(name, p)| (Atom::new(name), p)))
        .map_err(|e| fail(EXIT_VALIDATION, format!("{}: {e}", path.display())))
}

fn infer_failure(e: InferError) -> Failure {
    let code = match e {
        InferError::InvalidQuery { .. } => EXIT_PARSE,
        InferError::UnknownNode { .. }
        | InferError::MissingAtom { .. }
        | InferError::DegenerateDenominator => EXIT_VALIDATION,
        InferError::ZeroEvidence => EXIT_ZERO_EVIDENCE,
        InferError::Budget(_) => EXIT_BUDGET,
    };
    fail(code, e.to_string())
}

fn pulse_failure(e: PulseError) -> Failure {
    let code = match e {
        PulseError::ZeroEvidenceArea => EXIT_ZERO_EVIDENCE,
        _ => EXIT_VALIDATION,
    };
    fail(code, e.to_string())
}

fn oracle_conditional(net: &Network, q: &Query, v: &Valuation) -> Result<f64, Failure> {
    let to_validation = |e: crate::oracle::OracleError| fail(EXIT_VALIDATION, e.to_string());
    let joint: Vec<Literal> = q.targets().iter().chain(q.evidence()).cloned().collect();
    let num = enumerate_probability(net, &joint, v).map_err(to_validation)?;
    if q.evidence().is_empty() {
        return Ok(num);
    }
    let den = enumerate_probability(net, q.evidence(), v).map_err(to_validation)?;
    if den == 0.0 {
        return Err(fail(EXIT_ZERO_EVIDENCE, "evidence has probability zero"));
    }
    Ok(num / den)
}

fn cmd_infer(a: &InferArgs) -> Result<i32, Failure> {
    let pulse_knobs = [
        (a.periods.is_some(), "--periods"),
        (a.resolution.is_some(), "--resolution"),
        (a.seed.is_some(), "--seed"),
        (a.repeats.is_some(), "--repeats"),
    ];
    if a.engine != Engine::Pulse {
        if let Some((_, name)) = pulse_knobs.iter().find(|(set, _)| *set) {
            return Err(fail(
                EXIT_VALIDATION,
                format!("{name} only applies to --engine pulse"),
            ));
        }
    }
    if a.engine != Engine::Exact {
        if a.symbolic {
            return Err(fail(EXIT_VALIDATION, "--symbolic only applies to --engine exact"));
        }
        if a.budget.is_some() {
            return Err(fail(EXIT_VALIDATION, "--budget only applies to --engine exact"));
        }
    }

    let net = load_network(&a.net)?;
    let v = load_valuation(&a.val)?;
    let q = Query::parse(&a.query).map_err(infer_failure)?;

    match a.engine {
        Engine::Exact => {
            let budget = Budget {
                step_limit: a.budget.unwrap_or(Budget::default().step_limit),
                ..Budget::default()
            };
            let c = conditional_probability(&net, &q, &v, &budget).map_err(infer_failure)?;
            if a.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "query": q.to_string(),
                        "value": c.value,
                        "numerator": c.numerator.text(),
                        "denominator": c.denominator.text(),
                    })
                );
            } else {
                println!("{}", fmt_prob(c.value));
                if a.symbolic {
                    println!("numerator {}", c.numerator.text());
                    println!("denominator {}", c.denominator.text());
                }
            }
        }
        Engine::Oracle => {
            let value = oracle_conditional(&net, &q, &v)?;
            if a.json {
                println!(
                    "{}",
                    serde_json::json!({ "query": q.to_string(), "value": value })
                );
            } else {
                println!("{}", fmt_prob(value));
            }
        }
        Engine::Pulse => {
            let resolution = a.resolution.unwrap_or(64);
            let periods = a.periods.unwrap_or(20_000);
            if resolution < 2 || periods == 0 {
                return Err(fail(
                    EXIT_VALIDATION,
                    "pulse trains need --resolution >= 2 and --periods >= 1",
                ));
            }
            let repeats = a.repeats.unwrap_or(1).max(1);
            let seed = a.seed.unwrap_or(0);
            let mut estimates = Vec::with_capacity(repeats);
            for k in 0..repeats {
                let config = PulseConfig::new(resolution, periods, seed.wrapping_add(k as u64));
                estimates.push(estimate_conditional(&net, &q, &v, &config).map_err(pulse_failure)?);
            }
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let exact = (net.atoms().len() <= DEFAULT_ATOM_CAP)
                .then(|| oracle_conditional(&net, &q, &v).ok())
                .flatten();
            let stddev = (repeats > 1).then(|| {
                let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                    / (estimates.len() - 1) as f64;
                var.sqrt()
            });
            if a.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "query": q.to_string(),
                        "value": mean,
                        "exact": exact,
                        "stddev": stddev,
                    })
                );
            } else {
                println!("{}", fmt_prob(mean));
                if let Some(exact) = exact {
                    println!("exact {}", fmt_prob(exact));
                }
                if let Some(sd) = stddev {
                    println!("stddev {sd:.6}");
                }
            }
        }
    }
    Ok(0)
}

fn cmd_sat(a: &SatArgs) -> Result<i32, Failure> {
    let text = read(&a.cnf)?;
    let f = parse_dimacs(&text).map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
    if a.count {
        let n = count_models(&f).map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
        println!("c models {n}");
        return Ok(0);
    }
    match decide_sat(&f, &Budget::default()) {
        SatOutcome::Sat { model, free, .. } => {
            for v in &free {
                println!("c free {v}");
            }
            println!("s SATISFIABLE");
            let lits: Vec<String> = f
                .variables()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if model[v] {
                        (i + 1).to_string()
                    } else {
                        format!("-{}", i + 1)
                    }
                })
                .collect();
            if lits.is_empty() {
                println!("v 0");
            } else {
                println!("v {} 0", lits.join(" "));
            }
            Ok(10)
        }
        SatOutcome::Unsat => {
            println!("s UNSATISFIABLE");
            Ok(20)
        }
        SatOutcome::Unknown { reason } => {
            println!("c {reason}");
            println!("s UNKNOWN");
            Ok(30)
        }
    }
}

fn cmd_convert(a: &ConvertArgs) -> Result<i32, Failure> {
    let text = read(&a.cpt)?;
    let cpt: CptNetwork = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", a.cpt.display())))?;
    let (net, symbols) = from_cpt(&cpt).map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
    let net_json = serde_json::to_string_pretty(&net).expect("networks serialize");
    let reread: Network = serde_json::from_str(&net_json).expect("compiled networks re-validate");
    assert_eq!(reread, net, "network round trip");
    let values: BTreeMap<&str, f64> = symbols.iter().map(|(a, p)| (a.name(), *p)).collect();
    let val_json = serde_json::to_string_pretty(&values).expect("valuations serialize");
    let write = |path: &Path, body: String| {
        fs::write(path, body + "\n")
            .map_err(|e| fail(EXIT_PARSE, format!("cannot write {}: {e}", path.display())))
    };
    write(&a.out_net, net_json)?;
    write(&a.out_val, val_json)?;
    Ok(0)
}

fn cmd_show(a: &ShowArgs) -> Result<i32, Failure> {
    // plain 0/1 here, so every failure collapses to code 1
    let plain = |f: Failure| fail(1, f.message);
    let net = load_network(&a.net).map_err(plain)?;
    let views = marginal_views(&net, &a.node, &Budget::default())
        .map_err(|e| fail(1, e.to_string()))?;
    println!("raw {}", views.raw.text());
    println!("decomposed {}", views.decomposed.text());
    if a.expanded {
        match views.expanded {
            Some(form) => println!("expanded {form}"),
            None => println!("expanded (beyond term budget)"),
        }
    }
    Ok(0)
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Infer(a) => cmd_infer(a),
        Command::Sat(a) => cmd_sat(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Show(a) => cmd_show(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
