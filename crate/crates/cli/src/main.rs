use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use rewardloop::dsl::{parse_program, pretty_print, RewardProgram};
use rewardloop::env::training_schema;
use rewardloop::eval::{homomorphic_eval, render_row, term_label, Stage};
use rewardloop::llm::{assemble_prompt, generate_candidates, PromptInputs};
use rewardloop::orchestrator::{
    config_backend, write_report, BackendKind, FrameworkConfig, IterationStatus, Orchestrator, RunError, StopPoint,
};
use rewardloop::policy::{gradcheck_suite, PolicyParams};

#[derive(Parser)]
#[command(name = "rewardloop", version, about = "Closed-loop reward program search for a balancing walker")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Train,
    Gazebo,
    Real,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the search loop, or continue an interrupted run.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to continue.
        #[arg(long, conflicts_with = "out")]
        resume: Option<PathBuf>,
        /// Directory for a new run.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Replace the reference with each iteration's pick instead of the historical best.
        #[arg(long)]
        strict_alg1: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Abort after this iteration completes, as if the process died.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Summarize a run directory and write CSV files under <run_dir>/report.
    Report { run_dir: PathBuf },
    /// Assemble the first prompt and generate candidates without training.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// Finite-difference check of the PPO loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        batches: usize,
    },
    /// Evaluate a policy checkpoint in one stage.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Reward program file; defaults to program.reward next to the checkpoint.
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Error with an exit code attached.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.into())
    }
}

fn io(e: anyhow::Error) -> Failure {
    Failure(3, e)
}

fn load_config(path: Option<&Path>) -> Result<FrameworkConfig, Failure> {
    match path {
        Some(p) => Ok(FrameworkConfig::load(p)?),
        None => Ok(FrameworkConfig::default()),
    }
}

fn apply_backend(cfg: &mut FrameworkConfig, b: Option<BackendArg>) {
    if let Some(b) = b {
        cfg.backend.kind = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        };
    }
}

fn run_error(e: RunError) -> Failure {
    Failure(e.exit_code() as u8, e.into())
}

fn cmd_run(
    config: Option<PathBuf>,
    resume: Option<PathBuf>,
    out: PathBuf,
    strict_alg1: bool,
    backend: Option<BackendArg>,
    seed: Option<u64>,
    stop_after: Option<usize>,
) -> Result<u8, Failure> {
    let overrides = config.is_some() || strict_alg1 || backend.is_some() || seed.is_some();
    let mut cfg = load_config(config.as_deref())?;
    apply_backend(&mut cfg, backend);
    cfg.strict_alg1 |= strict_alg1;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (mut orch, dir);
    let factory;
    match &resume {
        Some(d) => {
            let text = std::fs::read_to_string(d.join("config.toml"))
                .with_context(|| format!("{} is not a run directory", d.display()))
                .map_err(io)?;
            let snap = FrameworkConfig::from_toml(&text)?;
            factory = config_backend(&snap).map_err(run_error)?;
            orch = Orchestrator::open(d, overrides.then_some(&cfg), factory.as_ref()).map_err(run_error)?;
            dir = d.clone();
        }
        None => {
            factory = config_backend(&cfg).map_err(run_error)?;
            orch = Orchestrator::create(cfg, &out, factory.as_ref()).map_err(run_error)?;
            dir = out;
        }
    }
    if let Some(i) = stop_after {
        orch = orch.stop_at(StopPoint { iteration: i, trained: None });
    }
    let strict = orch.config().strict_alg1;
    let rec = orch.run().map_err(run_error)?;
    let bundle = write_report(&dir).map_err(|e| io(e.into()))?;
    print!("{}", bundle.text);
    let failed = rec.iterations.iter().any(|s| s.status == IterationStatus::Failed);
    Ok(if strict && failed { 2 } else { 0 })
}

fn cmd_gen(config: Option<PathBuf>, backend: Option<BackendArg>) -> Result<u8, Failure> {
    let mut cfg = load_config(config.as_deref())?;
    apply_backend(&mut cfg, backend);
    let reference = match &cfg.prompt.reference {
        Some(p) => Some(parse_program(&std::fs::read_to_string(p).map_err(|e| io(e.into()))?)?),
        None => None,
    };
    let schema = training_schema();
    let rules: Vec<String> = cfg.safety.iter().map(|r| r.describe()).collect();
    let bundle = assemble_prompt(&PromptInputs {
        task: &cfg.prompt.task,
        env_desc: &cfg.prompt.env_description,
        schema: &schema,
        safety_rules: &rules,
        reference: reference.as_ref(),
        feedback: &[],
        token_budget: cfg.prompt.token_budget,
    })?;
    println!("prompt {} (~{} tokens)", bundle.hash(), bundle.token_estimate());
    let factory = config_backend(&cfg).map_err(run_error)?;
    let backend = factory(0).map_err(run_error)?;
    let (sources, stats) = generate_candidates(backend.as_ref(), &bundle, cfg.candidates, &schema, &cfg.backend.generation)
        .map_err(|e| Failure(2, e.into()))?;
    for s in &sources {
        match &s.program {
            Some(p) => println!("--- candidate {} (attempt {})\n{}", s.slot, s.attempt_index, pretty_print(p).trim_end()),
            None => println!("--- candidate {} failed: {}", s.slot, s.diagnostic.as_deref().unwrap_or("")),
        }
    }
    println!(
        "requested {} parsed {} valid {} retries {} first-try {:.2} with-retry {:.2}",
        stats.requested,
        stats.parsed_ok,
        stats.validated_ok,
        stats.retries_used,
        stats.first_try_rate(),
        stats.with_retry_rate()
    );
    Ok(0)
}

fn cmd_gradcheck(seed: u64, batches: usize) -> Result<u8, Failure> {
    let cases = gradcheck_suite(seed, batches, &[0.0, 5.0]);
    let mut worst: f64 = 0.0;
    for c in &cases {
        println!("seed {} beta {} params {} max rel err {:.3e}", c.seed, c.beta, c.result.params, c.result.max_rel_err);
        worst = worst.max(c.result.max_rel_err);
    }
    let ok = worst < 1e-4;
    println!("{} (worst {:.3e}, tolerance 1e-4)", if ok { "PASS" } else { "FAIL" }, worst);
    Ok(if ok { 0 } else { 2 })
}

fn cmd_eval(
    policy: PathBuf,
    stage: StageArg,
    program: Option<PathBuf>,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<u8, Failure> {
    let cfg = load_config(config.as_deref())?;
    let text = std::fs::read_to_string(&policy).with_context(|| policy.display().to_string()).map_err(io)?;
    let params = PolicyParams::from_json(&text)?;
    let program_path = program.or_else(|| {
        let p = policy.with_file_name("program.reward");
        p.exists().then_some(p)
    });
    let program: RewardProgram = match program_path {
        Some(p) => parse_program(&std::fs::read_to_string(&p).with_context(|| p.display().to_string()).map_err(io)?)?,
        None => parse_program("survival: survival_dt")?,
    };
    let (stage, env) = match stage {
        StageArg::Train => (Stage::Train, cfg.envs.training.nominal_only()),
        StageArg::Gazebo => (Stage::GazeboLike, cfg.envs.gazebo_like.clone()),
        StageArg::Real => (Stage::RealLike, cfg.envs.real_like.clone()),
    };
    let master = seed.unwrap_or_else(|| rewardloop::seed::derive(cfg.seed, &[rewardloop::seed::EVAL]));
    let r = homomorphic_eval(&params, &program, stage, &Arc::new(env), cfg.limits, &cfg.homomorphism, &cfg.eval, master);
    if let Some(f) = &r.failure {
        return Err(Failure(2, anyhow!("evaluation failed: {f}")));
    }
    println!(
        "{}: {} episodes, {} falls, survival {:.2} s, velocity error {:.3}, max |pitch| {:.3}, max |torque| {:.3}, reward {:.2}",
        stage.as_str(),
        r.episodes,
        r.falls,
        r.survival_time,
        r.velocity_error,
        r.max_abs_pitch,
        r.max_abs_torque,
        r.reward_total
    );
    for (name, sum) in r.term_names.iter().zip(&r.term_sums) {
        let v = Some(*sum);
        let (g, z, l) = match stage {
            Stage::Train => (v, None, None),
            Stage::GazeboLike => (None, v, None),
            Stage::RealLike => (None, None, v),
        };
        println!("{}", render_row(&term_label(name), g, z, l));
    }
    for t in &r.mismatch.dropped_terms {
        println!("dropped term: {t}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Cmd::Run { config, resume, out, strict_alg1, backend, seed, stop_after } => {
            cmd_run(config, resume, out, strict_alg1, backend, seed, stop_after)
        }
        Cmd::Report { run_dir } => {
            write_report(&run_dir).map(|b| {
                print!("{}", b.text);
                0
            }).map_err(|e| io(e.into()))
        }
        Cmd::Gen { config, dry_run: _, backend } => cmd_gen(config, backend),
        Cmd::Gradcheck { seed, batches } => cmd_gradcheck(seed, batches),
        Cmd::Eval { policy, stage, program, config, seed } => cmd_eval(policy, stage, program, config, seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
