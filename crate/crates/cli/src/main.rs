use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgAction, Parser, Subcommand};
use syllabus::gradcheck;
use syllabus::harness::{self, compare, plot, RunConfig};
use syllabus::nn::Model;
use syllabus::rng;
use syllabus::signals::{GainKind, TrainingMode};
use syllabus::tasks::ngram::NGramSuite;
use syllabus::tasks::{CurriculumSpec, DrawKey, Stream};

mod overrides;
mod sweep;

/// Bandit-driven curriculum learning for LSTM sequence models.
///
/// Exit codes: 0 success, 1 other failure, 2 configuration error,
/// 3 numerical abort.
#[derive(Debug, Parser)]
#[command(name = "syllabus", version)]
struct Cli {
    /// JSON run config; absent fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (run dir, sweep root, plot dir or n-gram cache).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Sets a config field by dotted path, e.g. `--set bandit.eta=0.01`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train one run.
    Run {
        #[arg(long)]
        gain: Option<GainKind>,
        /// Defaults to the mode the gain needs.
        #[arg(long)]
        mode: Option<TrainingMode>,
        #[arg(long)]
        total_steps: Option<u64>,
        #[arg(long)]
        max_input_steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        eval_every: Option<u64>,
        #[arg(long)]
        stop_below: Option<f64>,
        /// Continue from `<out>/checkpoint.bin`; only the budget flags
        /// (`--total-steps`, `--max-input-steps`, `--stop-below`) apply.
        #[arg(long)]
        resume: bool,
        /// Print the effective config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Launch a gain × seed grid as separate processes.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        gains: Vec<GainKind>,
        /// `a..b` or a comma-separated list.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        /// Concurrent processes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the planned runs without starting them.
        #[arg(long)]
        dry_run: bool,
    },
    /// Render SVG charts of one or more run directories.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Steps-to-threshold statistics across run directories.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "L_TT")]
        metric: String,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// JSON instead of CSV-style text.
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference check of network and variational gradients.
    Gradcheck {
        /// Coordinates per random network.
        #[arg(long, default_value_t = 200)]
        coords: usize,
        /// Random network shapes.
        #[arg(long, default_value_t = 10)]
        cases: usize,
    },
    /// Build (and cache) the n-gram curriculum of an n-gram config.
    GenNgram {
        /// Print this many characters of each order's stream.
        #[arg(long, default_value_t = 120)]
        preview: usize,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<syllabus::Error>() {
            if err.is_config() {
                return 2;
            }
            if err.is_numerical() {
                return 3;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn base_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = overrides::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Cmd::Run {
            gain,
            mode,
            total_steps,
            max_input_steps,
            batch_size,
            eval_every,
            stop_below,
            resume,
            print_config,
        } => {
            if *resume {
                let dir = match &cli.out {
                    Some(d) => d.clone(),
                    None => base_config(&cli)?.out_dir,
                };
                let summary = harness::resume_with(&dir, |c| {
                    if let Some(v) = total_steps {
                        c.total_steps = *v;
                    }
                    if max_input_steps.is_some() {
                        c.max_input_steps = *max_input_steps;
                    }
                    if stop_below.is_some() {
                        c.stop_below = *stop_below;
                    }
                })?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
                return Ok(0);
            }
            let mut cfg = base_config(&cli)?;
            if let Some(g) = gain {
                cfg.gain = *g;
                if mode.is_none() {
                    cfg.mode = g.required_mode().unwrap_or(cfg.mode);
                }
            }
            if let Some(m) = mode {
                cfg.mode = *m;
            }
            if let Some(v) = total_steps {
                cfg.total_steps = *v;
            }
            if max_input_steps.is_some() {
                cfg.max_input_steps = *max_input_steps;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = *v;
            }
            if let Some(v) = eval_every {
                cfg.eval_every = *v;
            }
            if stop_below.is_some() {
                cfg.stop_below = *stop_below;
            }
            if let Some(o) = &cli.out {
                cfg.out_dir = o.clone();
            }
            if *print_config {
                cfg.validate()?;
                println!("{}", cfg.to_json());
                return Ok(0);
            }
            let summary = harness::run(cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Cmd::Sweep {
            gains,
            seeds,
            jobs,
            dry_run,
        } => {
            let base = base_config(&cli)?;
            let seeds = sweep::parse_seeds(seeds)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs/sweep"));
            let plan = sweep::plan(&base, gains, &seeds, &out);
            for job in &plan {
                job.config.validate()?;
            }
            if *dry_run {
                for job in &plan {
                    println!("{} {} {}", job.gain, job.seed, job.dir.display());
                }
                return Ok(0);
            }
            let exe = std::env::current_exe().context("locating the syllabus executable")?;
            let codes = sweep::execute(&exe, &plan, *jobs)?;
            let failed: Vec<_> = plan.iter().zip(&codes).filter(|(_, c)| **c != 0).collect();
            for (job, code) in &failed {
                eprintln!("failed: {} (exit {code})", job.dir.display());
            }
            Ok(match failed.first() {
                None => 0,
                Some((_, c)) => u8::try_from(**c).unwrap_or(1),
            })
        }
        Cmd::Plot { dirs } => {
            let out = cli.out.clone().unwrap_or_else(|| dirs[0].join("plots"));
            let mut written = Vec::new();
            if dirs.len() == 1 {
                written.extend(plot::plot_run(&dirs[0], &out)?);
            } else {
                for d in dirs {
                    let name = d.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                    written.extend(plot::plot_run(d, &out.join(name))?);
                }
                written.extend(plot::plot_bands(dirs, &out)?);
            }
            for w in written {
                println!("{}", w.display());
            }
            Ok(0)
        }
        Cmd::Compare {
            dirs,
            metric,
            threshold,
            json,
        } => {
            let c = compare::compare_runs(dirs, metric, *threshold)?;
            let text = if *json {
                serde_json::to_string_pretty(&c)?
            } else {
                c.to_text()
            };
            print!("{text}");
            if let Some(o) = &cli.out {
                std::fs::write(o, &text).with_context(|| format!("writing {}", o.display()))?;
            }
            Ok(0)
        }
        Cmd::Gradcheck { coords, cases } => gradcheck_cmd(&cli, *coords, *cases),
        Cmd::GenNgram { preview } => gen_ngram(&cli, *preview),
    }
}

fn report(label: &str, rep: &gradcheck::Report) {
    let worst = rep.worst();
    println!(
        "{label}: {} coords, max rel err {:.3e}{}",
        rep.checks.len(),
        rep.max_rel_err(),
        worst
            .map(|w| format!(
                " at {} (analytic {:.6e}, numeric {:.6e})",
                w.index, w.analytic, w.numeric
            ))
            .unwrap_or_default()
    );
}

fn gradcheck_cmd(cli: &Cli, coords: usize, cases: usize) -> anyhow::Result<u8> {
    let seed = cli.seed.unwrap_or(0);
    let mut ok = true;
    for case in 0..cases as u64 {
        let s = rng::derive_seed(seed, &[case]);
        let (model, batch) = gradcheck::random_problem(s)?;
        let rep = gradcheck::check_network(
            &model,
            &batch,
            &gradcheck::pick(0..model.num_params(), coords, s),
        )?;
        report(&format!("case {case} network {:?}", model.spec().hidden_sizes), &rep);
        ok &= rep.passed();

        let state = gradcheck::random_posterior(&model, s);
        let noise = state.draw_noise(&mut rng::stream(s, &[1]));
        let mut picks = Vec::new();
        for (b, block) in gradcheck::variational_blocks(&state).into_iter().enumerate() {
            picks.extend(gradcheck::pick(block, coords.div_ceil(4), s + b as u64));
        }
        let rep = gradcheck::check_variational(&state, model.spec(), &batch, &noise, &picks)?;
        report(&format!("case {case} variational"), &rep);
        ok &= rep.passed();
    }
    if cli.config.is_some() {
        let cfg = base_config(cli)?;
        cfg.validate()?;
        let suite = cfg.curriculum.build(cfg.seed)?;
        let spec = suite.net_spec(cfg.hidden_sizes.clone());
        let model = Model::init(spec, &mut rng::stream(cfg.seed, &[1]))?;
        let key = DrawKey {
            stream: Stream::Eval,
            task: suite.num_tasks() - 1,
            index: 0,
        };
        let batch = suite.sample(key, cfg.batch_size.min(4), cfg.seed)?;
        let rep = gradcheck::check_network(
            &model,
            &batch,
            &gradcheck::pick(0..model.num_params(), coords, seed),
        )?;
        report("configured network on the target task", &rep);
        ok &= rep.passed();
    }
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { 0 } else { 1 })
}

fn gen_ngram(cli: &Cli, preview: usize) -> anyhow::Result<u8> {
    let cfg = base_config(cli)?;
    let CurriculumSpec::Ngram(mut spec) = cfg.curriculum else {
        return Err(syllabus::Error::Config("gen-ngram needs an n-gram curriculum config".into()).into());
    };
    if let Some(o) = &cli.out {
        spec.cache_dir = Some(o.clone());
    }
    if spec.cache_dir.is_none() {
        bail!(syllabus::Error::Config("set --out or curriculum.cache_dir".into()));
    }
    let suite = NGramSuite::build(spec.clone(), cfg.seed)?;
    println!(
        "alphabet: {} symbols; cache: {}",
        suite.alphabet().len(),
        spec.cache_dir.as_deref().unwrap_or(Path::new("")).display()
    );
    for order in 0..=spec.max_order {
        let stream = suite.stream(order);
        let n = preview.min(stream.len());
        println!(
            "order {order}: {} chars | {:?}",
            stream.len(),
            suite.alphabet().decode(&stream[..n])
        );
    }
    Ok(0)
}
