use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixflow::config::{load_config, ExperimentConfig};
use mixflow::cost::CostKind;
use mixflow::domain::{DensityCapMode, InitialSplitMode};
use mixflow::experiment::{run_experiment_with, RunSummary};
use mixflow::optimizer::{BudgetPolicy, IterationRecord};
use mixflow::output::write_outputs;
use mixflow::presets::{run_preset, PresetOverrides};
use mixflow::Error;

#[derive(Parser)]
#[command(name = "mixflow", version, about = "Mixed-autonomy traffic control on a ring road")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled LWR run of the configured scenario.
    Simulate(Common),
    /// Full control pipeline: alternating optimization over receding windows.
    Optimize(OptimizeArgs),
    /// Runs a named experiment.
    Preset {
        #[arg(value_parser = mixflow::presets::PRESET_NAMES)]
        name: String,
        #[arg(long)]
        nx: Option<usize>,
        /// Root directory; runs go to `<out>/<preset>/<label>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_svg: bool,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Validates a config file without running anything.
    Check { config: PathBuf },
}

#[derive(Args)]
struct Common {
    /// JSON config file; missing keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_svg: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    cost: Option<CostArg>,
    /// Receding-horizon split count.
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    flow_cap: Option<f64>,
    #[arg(long, value_enum)]
    density_cap: Option<DensityCapArg>,
    #[arg(long, value_enum)]
    initial_split: Option<InitialSplitArg>,
    #[arg(long, value_enum)]
    budget_policy: Option<BudgetArg>,
    #[arg(long)]
    max_outer: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    L2,
    Hm1,
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityCapArg {
    MaxDensity,
    MeanDensity,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialSplitArg {
    Free,
    PaperLiteral,
}

#[derive(Clone, Copy, ValueEnum)]
enum BudgetArg {
    Renew,
    NoRenew,
}

fn base_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(nx) = common.nx {
        cfg.nx = nx;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if common.no_svg {
        cfg.emit_svg = false;
    }
    Ok(cfg)
}

fn progress(quiet: bool, label: &str) -> impl FnMut(&IterationRecord) + '_ {
    move |r| {
        if !quiet {
            eprintln!(
                "{label} window {} iter {}: cost {:.6e} change {:.3e} ({} solver iterations, {:?})",
                r.window, r.iteration, r.cost.weighted_total, r.rel_change, r.solve.iterations, r.solve.status
            );
        }
    }
}

fn report(summary: &RunSummary, dir: &Path) {
    println!(
        "{}: terminal normalized L2 {:.6}, terminal H^-1 deviation {:.6e}, mass {:.12} -> {:.12}{}, outputs in {}",
        summary.label,
        summary.terminal_normalized_l2,
        summary.terminal_hm1_deviation,
        summary.initial_mass,
        summary.terminal_mass,
        summary.max_m2.map(|m| format!(", max m2 {m:.6}")).unwrap_or_default(),
        dir.display()
    );
}

fn run_single(cfg: ExperimentConfig, label: &str, quiet: bool) -> Result<(), Error> {
    cfg.validate()?;
    let out = run_experiment_with(&cfg, label, &mut progress(quiet, label))?;
    write_outputs(&out, &cfg.output_dir, cfg.emit_svg)?;
    report(&out.summary, &cfg.output_dir);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = ExperimentConfig { controlled: false, ..base_config(&common)? };
            run_single(cfg, "uncontrolled", common.quiet)
        }
        Command::Optimize(args) => {
            let mut cfg = base_config(&args.common)?;
            cfg.controlled = true;
            if let Some(c) = args.cost {
                cfg.cost_kind = match c {
                    CostArg::L2 => CostKind::L2,
                    CostArg::Hm1 => CostKind::Hm1,
                };
            }
            if let Some(n) = args.splits {
                cfg.horizon_splits = n;
            }
            if args.flow_cap.is_some() {
                cfg.flow_cap = args.flow_cap;
            }
            if let Some(d) = args.density_cap {
                cfg.density_cap_mode = match d {
                    DensityCapArg::MaxDensity => DensityCapMode::MaxDensity,
                    DensityCapArg::MeanDensity => DensityCapMode::MeanDensity,
                };
            }
            if let Some(i) = args.initial_split {
                cfg.initial_split_mode = match i {
                    InitialSplitArg::Free => InitialSplitMode::Free,
                    InitialSplitArg::PaperLiteral => InitialSplitMode::PaperLiteral,
                };
            }
            if let Some(b) = args.budget_policy {
                cfg.outer.budget_policy = match b {
                    BudgetArg::Renew => BudgetPolicy::Renew,
                    BudgetArg::NoRenew => BudgetPolicy::NoRenew,
                };
            }
            if let Some(m) = args.max_outer {
                cfg.outer.max_outer_iters = m;
            }
            let label = format!("{}-n{}", cfg.cost_kind, cfg.horizon_splits);
            run_single(cfg, &label, args.common.quiet)
        }
        Command::Preset { name, nx, out, no_svg, max_outer, quiet } => {
            let overrides = PresetOverrides { nx, output_dir: out, emit_svg: no_svg.then_some(false), max_outer_iters: max_outer };
            let result = run_preset(&name, &overrides, &mut |label, r| progress(quiet, label)(r))?;
            for o in &result.outputs {
                report(&o.summary, &o.summary.config.output_dir);
            }
            match result.failure {
                Some((label, e)) => {
                    eprintln!("run '{label}' failed; {} earlier run(s) kept", result.outputs.len());
                    Err(e)
                }
                None => Ok(()),
            }
        }
        Command::Check { config } => {
            let cfg = load_config(&config)?;
            cfg.grid()?;
            println!("{}: ok", config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
