use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lipnorm::certify::{self, Problem};
use lipnorm::config::{parse_seed, Config};
use lipnorm::harness::{self, Suite};
use lipnorm::io::{self, Loader};
use lipnorm::spaces::Exponent;
use lipnorm::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(name = "lipnorm", version, about = "Certified norm brackets on finite pointed metric spaces")]
struct Cli {
    /// Seed for search-based bounds (decimal or 0x hex); LIPNORM_SEED overrides it.
    #[arg(long, global = true, value_parser = seed_arg)]
    seed: Option<u64>,
    /// Random restarts for search-based bounds.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Hill-climb steps per restart.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Largest number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the metric axioms.
    Validate { space: PathBuf },
    /// Free-space norm of a vector, with primal and dual certificates.
    Aenorm { space: PathBuf, vector: PathBuf },
    /// Lipschitz constant of a map.
    Lip { map: PathBuf },
    /// Matrix of the linearization F(X) → E.
    Linearize { map: PathBuf },
    /// Operator and summing norms.
    Norm {
        #[arg(long, value_enum)]
        kind: NormKind,
        #[arg(long, default_value = "2")]
        p: Exponent,
        operand: PathBuf,
    },
    /// Lipschitz tensor cross-norms.
    Crossnorm {
        #[arg(long)]
        kind: lipnorm::tensor::CrossKind,
        #[arg(long, default_value = "2")]
        p: Exponent,
        tensor: PathBuf,
    },
    /// Randomized checks; exit code 1 when a suite fails.
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Trials per suite (largest n for the line scan); defaults per suite.
        #[arg(long)]
        trials: Option<usize>,
        /// Print the human-readable report instead of JSON.
        #[arg(long)]
        text: bool,
        /// Also write one CSV row per bracket here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-verify the certificates in an estimate or check report.
    Certify { estimate: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum NormKind {
    Op,
    Pi,
    Dp,
    Pisl,
    Pil,
    Dpl,
}

impl NormKind {
    fn name(self) -> &'static str {
        match self {
            NormKind::Op => "op",
            NormKind::Pi => "pi",
            NormKind::Dp => "dp",
            NormKind::Pisl => "pisl",
            NormKind::Pil => "pil",
            NormKind::Dpl => "dpl",
        }
    }
}

fn seed_arg(s: &str) -> Result<u64, String> {
    parse_seed(s).ok_or_else(|| format!("'{s}' is not a seed"))
}

/// Failure of a command, mapped to an exit code.
enum Failure {
    Lib(Error),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Capacity { .. } => ExitCode::from(EXIT_CAPACITY),
                _ => ExitCode::from(EXIT_INPUT),
            }
        }
    }
}

fn config(cli: &Cli) -> Config {
    let mut cfg = Config::default();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.restarts {
        cfg.restarts = r.max(1);
    }
    if let Some(i) = cli.iterations {
        cfg.iterations = i;
    }
    cfg.from_env()
}

fn emit(command: &str, cfg: &Config, body: Value) {
    print!("{}", io::to_canonical_string(&io::envelope(command, cfg, body)));
}

fn load_json(path: &Path) -> Result<Value, Error> {
    io::parse(&io::read_file(path)?, &path.display().to_string())
}

fn estimate(command: &str, cfg: &Config, problem: &Problem) -> Result<(), Failure> {
    let est = problem.estimate(cfg)?;
    emit(
        command,
        cfg,
        json!({ "problem": io::problem_json(problem), "estimate": io::estimate_json(&est) }),
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = config(cli);
    match &cli.command {
        Command::Validate { space } => {
            let data: lipnorm::spaces::MetricData = io::parse(&io::read_file(space)?, &space.display().to_string())?;
            let violations = data.validate()?;
            let ok = violations.is_empty();
            emit("validate", &cfg, json!({ "valid": ok, "violations": violations }));
            if !ok {
                return Err(Failure::CheckFailed);
            }
        }
        Command::Aenorm { space, vector } => {
            let loader = Loader::for_file(vector);
            let s = loader.space_file(space)?;
            let v = loader.vector(&load_json(vector)?, Some(s))?;
            estimate("aenorm", &cfg, &Problem::AeNorm(v))?;
        }
        Command::Lip { map } => {
            let t = Loader::for_file(map).map(&load_json(map)?)?;
            estimate("lip", &cfg, &Problem::Lip(t))?;
        }
        Command::Linearize { map } => {
            let t = Loader::for_file(map).map(&load_json(map)?)?;
            emit("linearize", &cfg, json!({ "operator": io::operator_json(&t.linearize()) }));
        }
        Command::Norm { kind, p, operand } => {
            let loader = Loader::for_file(operand);
            let problem = loader.problem(kind.name(), Some(*p), &load_json(operand)?)?;
            estimate("norm", &cfg, &problem)?;
        }
        Command::Crossnorm { kind, p, tensor } => {
            let loader = Loader::for_file(tensor);
            let problem = loader.problem(&format!("cross-{}", kind.name()), Some(*p), &load_json(tensor)?)?;
            estimate("crossnorm", &cfg, &problem)?;
        }
        Command::Check { suite, trials, text, csv } => {
            let suites = Suite::parse_list(suite)?;
            let report = harness::run(&suites, *trials, &cfg)?;
            if let Some(path) = csv {
                std::fs::write(path, report.to_csv()).map_err(|e| Error::Input {
                    what: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
            if *text {
                print!("{}", report.to_text());
            } else {
                let names: Vec<&str> = suites.iter().map(|s| s.name()).collect();
                let mut body = report.to_json();
                body["request"] = json!({ "suites": names, "trials": trials });
                emit("check", &cfg, body);
            }
            if !report.passed() {
                return Err(Failure::CheckFailed);
            }
        }
        Command::Certify { estimate } => {
            let loader = Loader::for_file(estimate);
            let doc = load_json(estimate)?;
            let mut stored = Vec::new();
            collect_estimates(&doc, &mut stored);
            if stored.is_empty() {
                return Err(Error::Input {
                    what: estimate.display().to_string(),
                    message: "no stored estimate found".into(),
                }
                .into());
            }
            let mut results = Vec::new();
            let mut all = true;
            for v in stored {
                let s = io::read_estimate(v, &loader)?;
                let check = certify::verify(&s.problem, &s.estimate)?;
                all &= check.passed;
                results.push(json!({ "kind": s.problem.kind_name(), "verification": check }));
            }
            emit("certify", &cfg, json!({ "passed": all, "count": results.len(), "results": results }));
            if !all {
                return Err(Failure::CheckFailed);
            }
        }
    }
    Ok(())
}

/// Every object carrying both "problem" and "estimate", in document order.
fn collect_estimates<'a>(v: &'a Value, out: &mut Vec<&'a Value>) {
    match v {
        Value::Object(o) => {
            if o.contains_key("problem") && o.contains_key("estimate") {
                out.push(v);
                return;
            }
            for child in o.values() {
                collect_estimates(child, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|c| collect_estimates(c, out)),
        _ => {}
    }
}
