use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use longcode::boolfun::NoiseSpec;
use longcode::fixtures::{fixture, FixtureName};
use longcode::games::{bcs_game, format_rational, lcs_game, ratio, Bcs, ExplicitGame, Lcs};
use longcode::longcode::{exact_test_value, soundness_audit, RandomObservables, TestParams, UniformResponder, DEFAULT_DELTA};
use longcode::pipeline::{pipeline_compile, question_payload_bytes, PipelineParams};
use longcode::quantum::{GeneralStrategy, SyncStrategy};
use longcode::suite::{run_suite, version, SuiteConfig};
use longcode::transforms::{ensure_nonempty_answers, project, repeat, Repeated};
use longcode::value::{classical_value, monte_carlo_value, seesaw_sync, ValueEstimate};
use longcode::{longcode::as_implicit_game, Error};

#[derive(Parser)]
#[command(name = "longcode", version, about = "Long-code test compiler and nonlocal game toolkit")]
struct Cli {
    /// Run seed.
    #[arg(long, global = true, env = "LONGCODE_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the game of a constraint system.
    Build(BuildArgs),
    /// Apply a game transformation.
    Transform(TransformArgs),
    /// Compile a synchronous game into its long-code test.
    Compile(CompileArgs),
    /// Estimate a game value.
    Estimate(EstimateArgs),
    /// Run the soundness audit on a compiled toy instance.
    Audit(AuditArgs),
    /// Run the verification suites of a config file.
    Verify(VerifyArgs),
    /// Print a reference game with its known strategy.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Boolean constraint system JSON; the game is constraint-constraint.
    #[arg(long, conflicts_with = "lcs", required_unless_present = "lcs")]
    bcs: Option<PathBuf>,
    /// Linear system JSON; the game is constraint-variable.
    #[arg(long)]
    lcs: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pass {
    Nonempty,
    Project,
    Repeat,
}

#[derive(Args)]
struct TransformArgs {
    game: PathBuf,
    #[arg(long, value_enum)]
    pass: Pass,
    #[arg(long, default_value_t = 2)]
    u: usize,
}

#[derive(Args)]
struct CompileArgs {
    /// Game JSON, or a fixture name with `--fixture`.
    game: Option<PathBuf>,
    #[arg(long, conflicts_with = "game")]
    fixture: Option<String>,
    #[arg(long, default_value = "1/10")]
    epsilon: String,
    #[arg(long, default_value_t = 1)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    h: usize,
    /// Enforce the paper-mode bound on the noise rate.
    #[arg(long)]
    paper: bool,
    /// Evaluate the fixture's honest strategy exactly.
    #[arg(long, requires = "fixture")]
    exact: bool,
    /// Evaluate the fixture's honest strategy on this many sampled rounds.
    #[arg(long, requires = "fixture")]
    samples: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Classical,
    Montecarlo,
    Seesaw,
}

#[derive(Args)]
struct EstimateArgs {
    /// Game JSON; omit with `--test` or `--fixture`.
    game: Option<PathBuf>,
    #[arg(long)]
    fixture: Option<String>,
    /// Compiled test parameters; answered uniformly at random.
    #[arg(long, conflicts_with_all = ["game", "fixture"])]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "classical")]
    method: Method,
    /// Strategy JSON for Monte Carlo; defaults to the fixture's strategy.
    #[arg(long)]
    strategy: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value = "toy_parity")]
    fixture: String,
    #[arg(long, default_value = "1/100")]
    epsilon: String,
    #[arg(long, default_value_t = 1)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    h: usize,
    /// Audit random observables of this dimension instead of the honest strategy.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    config: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    name: String,
}

/// Exit statuses.
const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;
const CAPACITY: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Capacity(_) => CAPACITY,
        Error::Usage(_) | Error::Parse(_) | Error::Json(_) | Error::Configuration(_) => USAGE,
        _ => FAILED,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read(path: &Path) -> longcode::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> longcode::Result<T> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> longcode::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fixture_name(s: &str) -> longcode::Result<FixtureName> {
    s.parse()
}

fn epsilon(s: &str) -> longcode::Result<NoiseSpec> {
    s.parse().map_err(|e| Error::Usage(format!("--epsilon: {e}")))
}

/// A game from a file or a fixture, with the fixture's strategy if any.
fn load_game(path: Option<&Path>, name: Option<&str>) -> longcode::Result<(ExplicitGame, Option<SyncStrategy>)> {
    match (path, name) {
        (Some(p), None) => Ok((read_json(p)?, None)),
        (None, Some(n)) => {
            let f = fixture(fixture_name(n)?)?;
            Ok((f.game, Some(f.strategy)))
        }
        _ => Err(Error::Usage("give exactly one of a game file or --fixture".into())),
    }
}

fn run(cli: &Cli) -> longcode::Result<u8> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Build(a) => {
            let game = if let Some(p) = &a.bcs {
                let bcs: Bcs = read_json(p)?;
                let n = bcs.len();
                let share = ratio(1, (n * n).max(1) as i64);
                let dist = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|k| (k, share.clone())).collect();
                bcs_game(&bcs, &dist)?
            } else {
                let lcs: Lcs = read_json(a.lcs.as_deref().expect("clap enforces one input"))?;
                let n = lcs.bcs().len();
                let dist = (0..n).map(|i| (i, ratio(1, n.max(1) as i64))).collect();
                lcs_game(&lcs, &dist)?
            };
            emit(out, &game)?;
        }
        Command::Transform(a) => {
            let game: ExplicitGame = read_json(&a.game)?;
            let result = match a.pass {
                Pass::Nonempty => ensure_nonempty_answers(&game)?,
                Pass::Project => project(&game)?,
                Pass::Repeat => match repeat(&game, a.u)? {
                    Repeated::Explicit(g) => g,
                    Repeated::Implicit(_) => {
                        return Err(Error::Capacity(format!("the {}-fold repetition is too large to write out", a.u)))
                    }
                },
            };
            emit(out, &result)?;
        }
        Command::Compile(a) => {
            let (game, known) = load_game(a.game.as_deref(), a.fixture.as_deref())?;
            let eps = epsilon(&a.epsilon)?;
            let params = if a.paper {
                PipelineParams::paper(eps, a.u, a.h, cli.seed)?
            } else {
                PipelineParams::new(eps, a.u, a.h, cli.seed)?
            };
            let compiled = pipeline_compile(&game, &params)?;
            let payload = question_payload_bytes(&compiled.test, cli.seed)?;
            let mut completeness = BTreeMap::new();
            if let Some(s) = known.filter(|_| a.exact || a.samples.is_some()) {
                let honest = compiled.honest_strategy(&s)?;
                if a.exact {
                    let v = exact_test_value(compiled.params(), &honest)?.value;
                    completeness.insert("exact", ValueEstimate::exact(v));
                }
                if let Some(n) = a.samples {
                    completeness.insert("monte_carlo", monte_carlo_value(&compiled.test, &honest, n, cli.seed)?);
                }
            }
            #[derive(Serialize)]
            struct Compiled<'a> {
                version: String,
                pipeline: &'a PipelineParams,
                threshold: f64,
                threshold_label: Option<&'static str>,
                passes: Vec<String>,
                payload_bytes: usize,
                completeness: BTreeMap<&'static str, ValueEstimate>,
                test: &'a TestParams,
            }
            emit(
                out,
                &Compiled {
                    version: version(),
                    pipeline: &params,
                    threshold: params.threshold(),
                    threshold_label: params.threshold_label(),
                    passes: compiled.passes(),
                    payload_bytes: payload,
                    completeness,
                    test: compiled.params(),
                },
            )?;
        }
        Command::Estimate(a) => {
            if let Some(t) = &a.test {
                let raw: Value = serde_json::from_str(&read(t)?)?;
                // accept both bare parameters and the output of `compile`
                let params: TestParams = serde_json::from_value(raw.get("test").cloned().unwrap_or(raw))?;
                let test = as_implicit_game(params);
                let est = monte_carlo_value(&test, &UniformResponder, a.samples, cli.seed)?;
                emit(out, &est)?;
                return Ok(OK);
            }
            let (game, known) = load_game(a.game.as_deref(), a.fixture.as_deref())?;
            let est = match a.method {
                Method::Classical => classical_value(&game)?,
                Method::Montecarlo => {
                    let text = match &a.strategy {
                        Some(p) => Some(read(p)?),
                        None => None,
                    };
                    match (text, known) {
                        (Some(t), _) => match serde_json::from_str::<SyncStrategy>(&t) {
                            Ok(s) => monte_carlo_value(&game, &s, a.samples, cli.seed)?,
                            Err(_) => {
                                let s: GeneralStrategy = serde_json::from_str(&t)?;
                                monte_carlo_value(&game, &s, a.samples, cli.seed)?
                            }
                        },
                        (None, Some(s)) => monte_carlo_value(&game, &s, a.samples, cli.seed)?,
                        (None, None) => return Err(Error::Usage("Monte Carlo needs --strategy".into())),
                    }
                }
                Method::Seesaw => {
                    let (strategy, est) = seesaw_sync(&game, a.dim, a.iterations, cli.seed)?;
                    let mut record = BTreeMap::new();
                    record.insert("estimate", serde_json::to_value(&est)?);
                    record.insert("strategy", serde_json::to_value(&strategy)?);
                    emit(out, &record)?;
                    return Ok(OK);
                }
            };
            emit(out, &est)?;
        }
        Command::Audit(a) => {
            let f = fixture(fixture_name(&a.fixture)?)?;
            let params = PipelineParams::new(epsilon(&a.epsilon)?, a.u, a.h, cli.seed)?;
            let compiled = pipeline_compile(&f.game, &params)?;
            let report = match a.dim {
                Some(dim) => soundness_audit(compiled.params(), &RandomObservables { dim, seed: cli.seed }, DEFAULT_DELTA)?,
                None => soundness_audit(compiled.params(), &compiled.honest_strategy(&f.strategy)?, DEFAULT_DELTA)?,
            };
            emit(out, &report)?;
        }
        Command::Verify(a) => {
            let config = SuiteConfig::parse(&read(&a.config)?)?;
            let report = run_suite(&config)?;
            emit(out, &report)?;
            if !report.passed {
                eprintln!("one or more suites failed");
                return Ok(FAILED);
            }
        }
        Command::Fixture(a) => {
            let f = fixture(fixture_name(&a.name)?)?;
            #[derive(Serialize)]
            struct Record<'a> {
                name: String,
                game: &'a ExplicitGame,
                strategy: &'a SyncStrategy,
                classical_value: String,
                quantum_value: f64,
            }
            emit(
                out,
                &Record {
                    name: f.name.to_string(),
                    game: &f.game,
                    strategy: &f.strategy,
                    classical_value: format_rational(&f.classical_value),
                    quantum_value: f.quantum_value,
                },
            )?;
        }
    }
    Ok(OK)
}
