//! Command line front end: run scenario files, check win rates
//! against the exact oracle, and poke the built-in demos.
//!
//! Exit codes: 0 on success, 1 when a verification or expectation
//! fails, 2 for usage and configuration errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctm::fixtures;
use ctm::ltm::BehaviorRegistry;
use ctm::machine::{Ctm, EnvironmentScript, MachineConfig, RunStats, RunSummary};
use ctm::trace::{read_jsonl, JsonlSink, MemorySink, NullSink, TraceEvent, TraceSink};
use ctm::verify::{self, WinRateReport};
use ctm::{load_scenario, Scenario};

#[derive(Parser)]
#[command(name = "ctm", version, about = "Global-workspace machine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print its run summary.
    Run(RunArgs),
    /// Compare empirical win rates against the exact oracle.
    Verify(VerifyArgs),
    /// Recompute exact win probabilities under random leaf permutations.
    Permute(PermuteArgs),
    /// Rebuild the run summary from a previously written trace.
    Stats {
        /// Trace file in JSON-lines form.
        trace: PathBuf,
    },
    /// Run one of the built-in demonstration machines.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Write the full trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run this many ticks instead of the scenario lifetime.
    #[arg(long)]
    until: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    scenario: PathBuf,
    /// Monte Carlo competitions to run.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Proceed even when the competition function is not additive;
    /// the tree oracle then replaces the closed-form share.
    #[arg(long)]
    allow_nonadditive: bool,
    /// Write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the exact win probabilities as numerator/denominator CSV.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Args)]
struct PermuteArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 20)]
    permutations: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    /// Deterministic quartet: the arrangement picks the winner.
    Quartet,
    /// A rule armwrestles a one-word memory over "caffeine".
    Spelling,
    /// A pain spike interrupts every processor for one tick.
    Interrupt,
    /// Three acknowledgments form a direct processor-to-processor link.
    Links,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Permute(args) => cmd_permute(args),
        Command::Stats { trace } => cmd_stats(trace),
        Command::Demo { name } => cmd_demo(name),
    }
}

fn load(path: &PathBuf, registry: &BehaviorRegistry) -> Result<Scenario> {
    // Scenario errors already name the file where it matters; for parse
    // errors the offending path is the one on the command line.
    Ok(load_scenario(path, registry)?)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let registry = BehaviorRegistry::with_builtins();
    let scenario = load(&args.scenario, &registry)?;
    let until = args.until.unwrap_or(scenario.config.lifetime);

    let mut machine = Ctm::assemble(scenario.config.clone(), &registry)?;
    let summary = match &args.trace {
        Some(path) => {
            let mut sink = JsonlSink::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let summary = machine.run(&scenario.environment, until, &mut sink)?;
            sink.flush()?;
            summary
        }
        None => machine.run(&scenario.environment, until, &mut NullSink)?,
    };

    println!(
        "ran {} ticks, {} processors, tree height {}",
        summary.ticks,
        scenario.config.n(),
        machine.height()
    );
    print_stats(&summary.stats);
    if let Some(path) = &args.trace {
        println!("trace written to {}", path.display());
    }
    if summary.unmet_expectations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for (tick, label) in &summary.unmet_expectations {
            eprintln!("unmet expectation: {label:?} at tick {tick}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn print_stats(stats: &RunStats) {
    println!(
        "stm: {} warm broadcasts ({} empty)",
        stats.warm_broadcasts, stats.nil_broadcasts
    );
    if !stats.winner_counts.is_empty() {
        let winners: Vec<String> = stats
            .winner_counts
            .iter()
            .map(|(a, n)| format!("{a} x{n}"))
            .collect();
        println!("winners: {}", winners.join(", "));
    }
    println!(
        "interrupts: {} entered, {} resumed",
        stats.interrupts_entered, stats.interrupts_resumed
    );
    println!("links activated: {}", stats.links_activated);
    println!(
        "feedback: {} promotions, {} demotions",
        stats.promotions, stats.demotions
    );
    println!("actuations: {}", stats.actuations);
    if let (Some(mood), Some(intensity)) =
        (stats.mood_series.last(), stats.intensity_series.last())
    {
        println!("final mood {mood}, final intensity {intensity}");
    }
}

fn print_report(report: &WinRateReport) {
    println!("{:<6} {:>10} {:>10} {:>10} {:>10} {:>10}  ok", "leaf", "f", "share", "empirical", "deviation", "4sigma");
    for l in &report.leaves {
        println!(
            "{:<6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}  {}",
            l.address.to_string(),
            l.f_value,
            l.share,
            l.empirical,
            l.deviation,
            l.four_sigma,
            if l.within { "yes" } else { "NO" }
        );
    }
    println!(
        "trials {}, max deviation {:.6}, chi-square {:.3}",
        report.trials, report.max_deviation, report.chi_square
    );
    match report.theorem_exact {
        Some(true) => println!("tree oracle agrees with the closed-form shares exactly"),
        Some(false) => println!("tree oracle DISAGREES with the closed-form shares"),
        None => println!("non-additive function: the tree oracle is the prediction"),
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let registry = BehaviorRegistry::with_builtins();
    let scenario = load(&args.scenario, &registry)?;
    let report = verify::verify_theorem(
        &scenario.config,
        &registry,
        args.trials,
        args.allow_nonadditive,
    )?;
    print_report(&report);
    if let Some(path) = &args.csv {
        fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    if let Some(path) = &args.oracle {
        fs::write(path, verify::oracle_csv(&report.leaves))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("oracle written to {}", path.display());
    }
    let sound = report.all_within && report.theorem_exact != Some(false);
    Ok(if sound {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_permute(args: PermuteArgs) -> Result<ExitCode> {
    let registry = BehaviorRegistry::with_builtins();
    let scenario = load(&args.scenario, &registry)?;
    let additive = scenario.config.function.is_additive();
    let report =
        verify::permutation_invariance(&scenario.config, &registry, args.permutations)?;
    if report.all_equal {
        println!(
            "{} permutations: win probabilities identical",
            report.permutations
        );
    } else {
        println!(
            "{} permutations: max divergence {:.6}",
            report.permutations, report.max_divergence
        );
    }
    Ok(if additive && !report.all_equal {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_stats(trace: PathBuf) -> Result<ExitCode> {
    let text =
        fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
    let records = read_jsonl(&text)?;
    println!("{} records", records.len());
    print_stats(&RunStats::from_records(&records));
    Ok(ExitCode::SUCCESS)
}

fn run_quietly(config: MachineConfig) -> Result<(Ctm, MemorySink, RunSummary)> {
    let registry = BehaviorRegistry::with_builtins();
    let lifetime = config.lifetime;
    let mut machine = Ctm::assemble(config, &registry)?;
    let mut sink = MemorySink::new();
    let summary = machine.run(&EnvironmentScript::new(), lifetime, &mut sink)?;
    Ok((machine, sink, summary))
}

fn cmd_demo(name: DemoName) -> Result<ExitCode> {
    match name {
        DemoName::Quartet => {
            for (config, order) in [
                (fixtures::tied_pair_quartet(), "a,b,c,d"),
                (fixtures::transposed_quartet(), "a,c,b,d"),
            ] {
                let (machine, _, _) = run_quietly(config)?;
                let winner = machine
                    .stm()
                    .current()
                    .and_then(|c| c.gist().label())
                    .unwrap_or("nobody")
                    .to_string();
                println!("order {order}: winner {winner}");
            }
        }
        DemoName::Spelling => {
            let (config, env) = fixtures::spelling_bee(40);
            let registry = BehaviorRegistry::with_builtins();
            let mut machine = Ctm::assemble(config, &registry)?;
            let mut sink = MemorySink::new();
            machine.run(&env, 40, &mut sink)?;
            for r in sink.records() {
                if let TraceEvent::Stm { chunk } = &r.event {
                    if chunk.t >= 1 && (chunk.t - 1) % fixtures::SPELLING_PERIOD == 0 {
                        if let Some(label) = &chunk.gist_label {
                            let verdict = if label == fixtures::SPELLING_WORD {
                                "right"
                            } else {
                                "wrong"
                            };
                            println!("query at tick {}: \"{label}\" ({verdict})", chunk.t);
                        }
                    }
                }
            }
            println!(
                "memory power grew to {}",
                machine.ltm()[1].intensity_power()
            );
        }
        DemoName::Interrupt => {
            let (machine, sink, _) = run_quietly(fixtures::pain_interrupt())?;
            for r in sink.records() {
                if let TraceEvent::Interrupt { phase, intensity } = &r.event {
                    println!("tick {}: {:?} at intensity {}", r.tick, phase, intensity);
                }
            }
            println!(
                "interrupts entered {}, resumed {}",
                machine.stats().interrupts_entered,
                machine.stats().interrupts_resumed
            );
        }
        DemoName::Links => {
            let (machine, sink, _) = run_quietly(fixtures::ping_link())?;
            for r in sink.records() {
                if let TraceEvent::LinkAck {
                    from,
                    originator,
                    count,
                    active,
                } = &r.event
                {
                    println!(
                        "tick {}: {from} acknowledged {originator} ({count} total{})",
                        r.tick,
                        if *active { ", link active" } else { "" }
                    );
                }
            }
            let sends = sink
                .records()
                .iter()
                .filter(|r| matches!(r.event, TraceEvent::LinkSend { .. }))
                .count();
            println!(
                "{} chunks moved over links, {} links active",
                sends,
                machine.stats().links_activated
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
