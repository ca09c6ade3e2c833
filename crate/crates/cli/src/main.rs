use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use ofi_core::circuit::{compress, emit_netlist, extract, load_netlist, simulate};
use ofi_core::engine::{evaluate, evaluate_prob, ContractionConfig, ProbValuation};
use ofi_core::formula::{parse, Formula};
use ofi_core::game::{
    build_game, check_rank_ofi, export_game_dot, fig1_game, fig2_truncation, load_game, solve_ranks, ParityGame,
    Player,
};
use ofi_core::metafold::{
    metafold_run, run_builtin, schedule, verify_convergence, Builtin, DomainGenerator, FiniteModel, Outcome,
};
use ofi_core::model::{fixture_from_spec, KripkeModel};
use ofi_core::suite::{curated_rank_cases, run_rank_suite, run_suite, GenConfig};
use ofi_probe::{batch_report, run_batch, Backend, HttpBackend, MockBackend, ProbeConfig, ProbeError, Verdict};

#[derive(Parser)]
#[command(name = "ofi", version, about = "Stage-by-stage fixed-point evaluation and its circuit, game and probe views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a formula on a model and report its fold-back stage.
    Eval {
        /// Model file, or a fixture such as `chain:3`.
        model: String,
        formula: String,
        /// Write the changed-cell CSV here (`-` for stdout).
        #[arg(long)]
        trace: Option<String>,
        #[arg(long, value_enum, default_value_t = Semantics::Bool)]
        semantics: Semantics,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Real-valued atom, `name=v` or `name=v0,v1,...` per state.
        #[arg(long = "atom")]
        atoms: Vec<String>,
    },
    /// Compile to a register netlist and clock it until it settles.
    Circuit {
        /// Model file or fixture (ignored with `--from-netlist`).
        model: Option<String>,
        formula: Option<String>,
        #[arg(long)]
        compress: bool,
        /// Write the netlist document here.
        #[arg(long)]
        netlist: Option<PathBuf>,
        /// Write the `cycle,bit,value` waveform here.
        #[arg(long)]
        vcd: Option<PathBuf>,
        /// Simulate a previously emitted netlist instead of compiling.
        #[arg(long)]
        from_netlist: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        max_cycles: usize,
    },
    /// Solve a parity game for ranks.
    Game {
        /// Game file, `fig1`, or `fig2:N`. Omit when using `--formula`.
        input: Option<String>,
        /// Build the game from this formula (needs `--model`).
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Write a DOT rendering here.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Compare the fold-back stage with 1 + the supremum rank.
        #[arg(long)]
        check_rank_ofi: bool,
        /// Run the curated comparison suite and write its JSON report here.
        #[arg(long)]
        rank_suite: Option<PathBuf>,
    },
    /// Evaluate over a lazily generated domain with growing envelopes.
    Metafold {
        /// `counter:GOAL[:LIMIT]`, `counter:none`, `grid:X,Y`,
        /// `collatz-like:START[:TARGET]`, or `model:<file|fixture>`.
        generator: String,
        formula: String,
        /// Stage budgets, comma separated.
        #[arg(long, default_value = "4,16")]
        tau: String,
        /// Maximum number of discovered states per envelope.
        #[arg(long, default_value_t = 32)]
        budget: usize,
        /// Overall stage cap across envelopes.
        #[arg(long, default_value_t = 10_000)]
        cap: usize,
    },
    /// Run the self-feedback loop for each prompt.
    Probe {
        config: PathBuf,
        /// One prompt per line, optionally `id<TAB>text`.
        prompts: PathBuf,
        /// `http` or `mock:<script path>`.
        #[arg(long, default_value = "http")]
        backend: String,
        /// Directory for transcripts and the batch CSV.
        #[arg(long, default_value = "probe-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Randomized cross-check of every backend against the others.
    Suite {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        max_states: usize,
        #[arg(long, default_value_t = 10)]
        max_size: usize,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
        /// Allow both binder kinds in one formula.
        #[arg(long)]
        mixed: bool,
        /// Write failing cases as JSON here.
        #[arg(long)]
        failures: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Semantics {
    Bool,
    Prob,
}

/// An error carrying the process exit code.
struct Exit {
    code: u8,
    error: anyhow::Error,
}

const PROPERTY: u8 = 1;
const USAGE: u8 = 2;
const IO: u8 = 3;

fn fail<E: Into<anyhow::Error>>(code: u8) -> impl FnOnce(E) -> Exit {
    move |e| Exit { code, error: e.into() }
}

type Run = Result<u8, Exit>;

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Eval {
            model,
            formula,
            trace,
            semantics,
            gamma,
            eps,
            atoms,
        } => cmd_eval(&model, &formula, trace.as_deref(), semantics, gamma, eps, &atoms),
        Command::Circuit {
            model,
            formula,
            compress,
            netlist,
            vcd,
            from_netlist,
            max_cycles,
        } => cmd_circuit(model, formula, compress, netlist, vcd, from_netlist, max_cycles),
        Command::Game {
            input,
            formula,
            model,
            dot,
            check_rank_ofi,
            rank_suite,
        } => cmd_game(input, formula, model, dot, check_rank_ofi, rank_suite),
        Command::Metafold {
            generator,
            formula,
            tau,
            budget,
            cap,
        } => cmd_metafold(&generator, &formula, &tau, budget, cap),
        Command::Probe {
            config,
            prompts,
            backend,
            out,
            threads,
        } => cmd_probe(&config, &prompts, &backend, &out, threads),
        Command::Suite {
            seed,
            count,
            max_states,
            max_size,
            max_depth,
            mixed,
            failures,
        } => {
            let cfg = GenConfig {
                max_states,
                max_size,
                max_depth,
                mixed,
            };
            cmd_suite(seed, count, &cfg, failures)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Exit { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(IO))
}

fn write(path: &Path, text: &str) -> Result<(), Exit> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(fail(IO))
}

fn load_model(spec: &str) -> Result<KripkeModel, Exit> {
    let path = Path::new(spec);
    if path.exists() {
        return KripkeModel::load(&read(path)?)
            .with_context(|| format!("model {spec}"))
            .map_err(fail(USAGE));
    }
    if spec.contains(':') {
        return fixture_from_spec(spec).map_err(fail(USAGE));
    }
    Err(Exit {
        code: IO,
        error: anyhow!("no such model file `{spec}`"),
    })
}

fn load_formula(text: &str) -> Result<Formula, Exit> {
    parse(text).map_err(fail(USAGE))
}

fn parse_atoms(specs: &[String], states: usize) -> Result<ProbValuation, Exit> {
    let mut out = ProbValuation::new();
    for spec in specs {
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("expected `name=value`, found `{spec}`"))
            .map_err(fail(USAGE))?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("atom `{name}`"))
            .map_err(fail(USAGE))?;
        let values = match values.len() {
            1 => vec![values[0]; states],
            n if n == states => values,
            n => {
                return Err(Exit {
                    code: USAGE,
                    error: anyhow!("atom `{name}` has {n} values for {states} states"),
                })
            }
        };
        out.insert(name.to_string(), values);
    }
    Ok(out)
}

fn emit(target: &str, text: &str) -> Result<(), Exit> {
    if target == "-" {
        print!("{text}");
        Ok(())
    } else {
        write(Path::new(target), text)
    }
}

fn cmd_eval(
    model: &str,
    formula: &str,
    trace: Option<&str>,
    semantics: Semantics,
    gamma: f64,
    eps: f64,
    atoms: &[String],
) -> Run {
    let m = load_model(model)?;
    let f = load_formula(formula)?;
    match semantics {
        Semantics::Bool => {
            let t = evaluate(&f, &m).map_err(fail(PROPERTY))?;
            match trace {
                // the CSV already ends with the summary line
                Some("-") => print!("{}", t.to_csv()),
                Some(path) => {
                    write(Path::new(path), &t.to_csv())?;
                    println!("{}", t.summary());
                }
                None => println!("{}", t.summary()),
            }
        }
        Semantics::Prob => {
            let cfg = ContractionConfig::new(gamma, eps).map_err(fail(USAGE))?;
            let atoms = parse_atoms(atoms, m.len())?;
            let t = evaluate_prob(&f, &m, &atoms, &cfg).map_err(fail(USAGE))?;
            if let Some(target) = trace {
                let mut csv = String::from("stage,error\n");
                for (i, e) in t.error_curve.iter().enumerate() {
                    csv.push_str(&format!("{i},{e}\n"));
                }
                emit(target, &csv)?;
            }
            let ofi = t.fold_back.map_or("none".to_string(), |k| k.to_string());
            println!("ofi={ofi} value={} budget={}", t.top_value, t.predicted_steps);
        }
    }
    Ok(0)
}

fn cmd_circuit(
    model: Option<String>,
    formula: Option<String>,
    compressed: bool,
    netlist: Option<PathBuf>,
    vcd: Option<PathBuf>,
    from_netlist: Option<PathBuf>,
    max_cycles: usize,
) -> Run {
    let mut c = match from_netlist {
        Some(path) => load_netlist(&read(&path)?).map_err(fail(USAGE))?,
        None => {
            let (Some(model), Some(formula)) = (model, formula) else {
                return Err(Exit {
                    code: USAGE,
                    error: anyhow!("expected MODEL and FORMULA, or --from-netlist"),
                });
            };
            let m = load_model(&model)?;
            let f = load_formula(&formula)?;
            extract(&f, &m).map_err(fail(USAGE))?
        }
    };
    if compressed {
        c = compress(&c);
    }
    if let Some(path) = netlist {
        write(&path, &emit_netlist(&c))?;
    }
    let report = simulate(&c, max_cycles).map_err(fail(PROPERTY))?;
    if let Some(path) = vcd {
        write(&path, &report.dump_vcd())?;
    }
    if compressed {
        println!("settle={} bound={}", report.settle_time, c.compression_bound());
    } else {
        println!("settle={}", report.settle_time);
    }
    Ok(0)
}

fn load_game_input(input: &str) -> Result<ParityGame, Exit> {
    if input == "fig1" {
        return Ok(fig1_game());
    }
    if let Some(n) = input.strip_prefix("fig2:") {
        let n: usize = n
            .parse()
            .with_context(|| format!("truncation depth in `{input}`"))
            .map_err(fail(USAGE))?;
        return Ok(fig2_truncation(n));
    }
    load_game(&read(Path::new(input))?).map_err(fail(USAGE))
}

fn player(p: Player) -> &'static str {
    match p {
        Player::Even => "even",
        Player::Odd => "odd",
    }
}

fn cmd_game(
    input: Option<String>,
    formula: Option<String>,
    model: Option<String>,
    dot: Option<PathBuf>,
    check: bool,
    rank_suite: Option<PathBuf>,
) -> Run {
    if let Some(path) = rank_suite {
        let rep = run_rank_suite(&curated_rank_cases());
        let json = serde_json::to_string_pretty(&rep).map_err(fail(IO))?;
        write(&path, &json)?;
        println!(
            "cases={} equal={} unequal={} errors={}",
            rep.cases,
            rep.equal,
            rep.unequal.len(),
            rep.errors.len()
        );
        return Ok(0);
    }
    let source = match (&input, &formula, &model) {
        (Some(i), None, None) => Ok(load_game_input(i)?),
        (None, Some(f), Some(m)) => Err((load_formula(f)?, load_model(m)?)),
        _ => {
            return Err(Exit {
                code: USAGE,
                error: anyhow!("give a game INPUT, or both --formula and --model"),
            })
        }
    };
    let g = match &source {
        Ok(g) => g.clone(),
        Err((f, m)) => build_game(f, m),
    };
    let r = solve_ranks(&g);
    let value = r.value.map_or("none".to_string(), |v| v.to_string());
    println!(
        "value={value} sup_rank={} winner={}",
        r.sup_rank,
        player(r.root_winner(&g))
    );
    if let Some(path) = dot {
        write(&path, &export_game_dot(&g))?;
    }
    if check {
        let Err((f, m)) = &source else {
            return Err(Exit {
                code: USAGE,
                error: anyhow!("--check-rank-ofi needs --formula and --model"),
            });
        };
        let rep = check_rank_ofi(f, m).map_err(fail(PROPERTY))?;
        println!("{}", rep.line());
    }
    Ok(0)
}

fn print_outcome<S: Debug>(out: &Outcome<S>, verified: bool) {
    let anchors = match out {
        Outcome::Converged { anchors, .. } => anchors,
        Outcome::ScheduleExhausted { anchors, .. } => anchors,
    };
    for a in anchors {
        println!(
            "anchor envelope={} beta_star={} overshoot={:?}@{} witness_size={} states={}",
            a.envelope,
            a.beta_star,
            a.overshoot,
            a.overshoot_stage,
            a.witness_size,
            a.snapshot.len()
        );
    }
    if matches!(out, Outcome::Converged { .. }) {
        println!("{} verified={verified}", out.summary());
    } else {
        println!("{}", out.summary());
    }
}

fn cmd_metafold(generator: &str, formula: &str, tau: &str, budget: usize, cap: usize) -> Run {
    let f = load_formula(formula)?;
    let taus: Vec<usize> = tau
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("schedule `{tau}`"))
        .map_err(fail(USAGE))?;
    let sched = schedule(&taus, budget);
    if let Some(spec) = generator.strip_prefix("model:") {
        let g = FiniteModel(load_model(spec)?);
        let out = metafold_run(&f, &g, &sched, cap).map_err(fail(USAGE))?;
        let verified = verify(&out, &f, &g);
        print_outcome(&out, verified);
        return Ok(0);
    }
    let b: Builtin = generator.parse().map_err(fail(USAGE))?;
    let (out, verified) = run_builtin(&f, &b, &sched, cap).map_err(fail(USAGE))?;
    print_outcome(&out, verified);
    if matches!(out, Outcome::Converged { .. }) && !verified {
        return Ok(PROPERTY);
    }
    Ok(0)
}

fn verify<G: DomainGenerator>(out: &Outcome<G::State>, f: &Formula, g: &G) -> bool {
    matches!(out, Outcome::Converged { .. }) && verify_convergence(out, f, g)
}

fn read_prompts(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| match line.split_once('\t') {
            Some((id, prompt)) => (id.trim().to_string(), prompt.to_string()),
            None => (format!("p{}", i + 1), line.to_string()),
        })
        .collect()
}

fn probe_code(e: &ProbeError) -> u8 {
    match e {
        ProbeError::Network(_) | ProbeError::Io(_) => IO,
        _ => USAGE,
    }
}

fn cmd_probe(config: &Path, prompts: &Path, backend: &str, out: &Path, threads: usize) -> Run {
    let cfg = ProbeConfig::from_json(&read(config)?).map_err(|e| Exit {
        code: USAGE,
        error: e.into(),
    })?;
    let prompts = read_prompts(&read(prompts)?);
    let transcripts = if let Some(script) = backend.strip_prefix("mock:") {
        let script = PathBuf::from(script);
        // parse once up front so a bad script is a usage error, not a per-prompt failure
        MockBackend::from_path(&script).map_err(|e| Exit {
            code: probe_code(&e),
            error: e.into(),
        })?;
        run_batch(&cfg, &prompts, threads, || {
            Ok(Box::new(MockBackend::from_path(&script)?) as Box<dyn Backend + Send>)
        })
    } else if backend == "http" {
        run_batch(&cfg, &prompts, threads, || {
            Ok(Box::new(HttpBackend::new(&cfg)?) as Box<dyn Backend + Send>)
        })
    } else {
        return Err(Exit {
            code: USAGE,
            error: anyhow!("unknown backend `{backend}`; expected `http` or `mock:<path>`"),
        });
    }
    .map_err(|e| Exit {
        code: probe_code(&e),
        error: e.into(),
    })?;

    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(fail(IO))?;
    for t in &transcripts {
        write(&out.join(format!("{}.json", t.prompt_id)), &t.to_json())?;
    }
    let csv = batch_report(&transcripts).map_err(|e| Exit {
        code: IO,
        error: e.into(),
    })?;
    write(&out.join("report.csv"), &csv)?;

    let mut code = 0;
    for t in &transcripts {
        println!("{} {}", t.prompt_id, t.verdict);
        if let Verdict::Aborted { reason } = &t.verdict {
            eprintln!("{}: {reason}", t.prompt_id);
            code = IO;
        }
    }
    Ok(code)
}

fn cmd_suite(seed: u64, count: usize, cfg: &GenConfig, failures: Option<PathBuf>) -> Run {
    let rep = run_suite(seed, count, cfg);
    print!("{rep}");
    if let Some(path) = failures {
        let json = serde_json::to_string_pretty(&rep.failures).map_err(fail(IO))?;
        write(&path, &json)?;
    }
    for f in rep.failures.iter().take(5) {
        eprintln!("case {} {}: {} on {}", f.case, f.property.name(), f.detail, f.formula);
    }
    Ok(if rep.all_passed() { 0 } else { PROPERTY })
}
