use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tessac_core::harness::{
    ablation, normalize, plot, read_rows, run, sweep, AblationAxis, AgentKind,
    ExperimentConfig, HyperParams, Manifest, ScheduleKind, ScheduleVariant, Series, SweepResult,
};

#[derive(Parser)]
#[command(name = "tessac", version, about = "Target-entropy scheduled SAC / SQL on small MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one configuration and write CSV logs plus a manifest.
    Train(ConfigArgs),
    /// Like `train`, and also report mean / std of the final evaluation return.
    Sweep(ConfigArgs),
    /// Sweep a configuration across one ablation axis.
    Ablate(AblateArgs),
    /// Render a logged quantity from run directories or CSV files as SVG.
    Plot(PlotArgs),
    /// Normalize scores against the worst and best fixed-target baselines.
    Normalize(NormalizeArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long, value_parser = parse_agent)]
    agent: Option<AgentKind>,
    #[arg(long, value_parser = parse_schedule)]
    scheduler: Option<ScheduleKind>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    /// EMA discount.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    avg_threshold: Option<f64>,
    #[arg(long)]
    std_threshold: Option<f64>,
    /// Target drop factor.
    #[arg(long)]
    k: Option<f64>,
    /// Satisfied checks needed per drop.
    #[arg(long = "T")]
    t: Option<u64>,
    /// Constant target as a fraction of ln |A|.
    #[arg(long = "C")]
    c: Option<f64>,
    /// Reset the drop counter whenever the window check fails.
    #[arg(long)]
    consecutive: bool,
    /// Use the published batch / buffer / width values.
    #[arg(long)]
    paper_hparams: bool,
    /// Output directory.
    #[arg(long, env = "TESSAC_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// `std_threshold` or `schedule_type`.
    #[arg(long)]
    axis: String,
    /// Override the axis values (comma separated).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directories (with manifest.json) or CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "episode_return_mean")]
    quantity: String,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    /// Scores of the fixed-target baselines (at least two).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    baselines: Vec<f64>,
    /// Scores to normalize.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    scores: Vec<f64>,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    match s {
        "sac" => Ok(AgentKind::Sac),
        "sql" => Ok(AgentKind::Sql),
        _ => Err(format!("`{s}`; valid options: sac, sql")),
    }
}

fn parse_schedule(s: &str) -> Result<ScheduleKind, String> {
    match s {
        "constant" => Ok(ScheduleKind::Constant),
        "fixed" => Ok(ScheduleKind::Fixed),
        "tes" => Ok(ScheduleKind::Tes),
        _ => Err(format!("`{s}`; valid options: constant, fixed, tes")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::new(
                self.env.as_deref().unwrap_or("gridworld5"),
                self.agent.unwrap_or(AgentKind::Sac),
                vec![0],
            ),
        };
        if self.paper_hparams {
            cfg.hyper = HyperParams::paper();
        }
        let e = &mut cfg.experiment;
        if let Some(env) = &self.env {
            e.env = env.clone();
        }
        if let Some(agent) = self.agent {
            e.agent = agent;
        }
        if let Some(seeds) = &self.seeds {
            e.seeds = seeds.clone();
        }
        if let Some(n) = self.total_steps {
            e.total_steps = n;
        }
        if let Some(n) = self.eval_interval {
            e.eval_interval = n;
        }
        if let Some(out) = &self.out {
            e.output_dir = Some(out.clone());
        }
        let s = &mut cfg.scheduler;
        if let Some(kind) = self.scheduler {
            s.scheduler = kind;
        }
        if let Some(v) = self.lambda {
            s.lambda = v;
        }
        if let Some(v) = self.avg_threshold {
            s.avg_threshold = v;
        }
        if let Some(v) = self.std_threshold {
            s.std_threshold = v;
        }
        if let Some(v) = self.k {
            s.k = v;
        }
        if let Some(v) = self.t {
            s.total_conditioned_num = v;
        }
        if let Some(v) = self.c {
            s.c = v;
        }
        if self.consecutive {
            s.consecutive = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.experiment
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(cfg.label())
}

fn print_result(result: &SweepResult) {
    let std = result
        .std_final
        .map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
    println!(
        "{}: final return mean {:.4} std {} over {} seed(s)",
        result.label,
        result.mean_final,
        std,
        result.seeds.len()
    );
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let dir = output_dir(&cfg);
    let artifacts = run(&cfg, &dir)?;
    for (path, (seed, log)) in artifacts.csvs.iter().zip(&artifacts.logs) {
        let last = log.final_row().expect("initial row always present");
        println!(
            "seed {seed}: final return {:.4}, log alpha {:.4}, target entropy {:.4} -> {}",
            last.episode_return_mean,
            last.log_alpha,
            last.target_entropy,
            path.display()
        );
    }
    println!("manifest: {}", artifacts.manifest.display());
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let dir = output_dir(&cfg);
    let result = sweep(&cfg, Some(&dir))?;
    print_result(&result);
    println!("written to {}", dir.display());
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let axis = match &args.values {
        None => AblationAxis::by_name(&args.axis)?,
        Some(values) => match args.axis.as_str() {
            "std_threshold" => AblationAxis::StdThreshold(
                values
                    .iter()
                    .map(|v| v.parse::<f64>().with_context(|| format!("std threshold `{v}`")))
                    .collect::<Result<_>>()?,
            ),
            "schedule_type" => AblationAxis::ScheduleType(
                values
                    .iter()
                    .map(|v| v.parse::<ScheduleVariant>())
                    .collect::<Result<_, _>>()?,
            ),
            other => {
                AblationAxis::by_name(other)?;
                unreachable!()
            }
        },
    };
    let dir = cfg
        .experiment
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(format!("{}-ablate-{}", cfg.label(), args.axis));
    let results = ablation(&cfg, &axis, Some(&dir))?;
    for r in &results {
        print_result(r);
    }
    println!("written to {}", dir.display());
    Ok(())
}

fn seed_suffix_stripped(stem: &str) -> &str {
    match stem.rfind("-seed") {
        Some(i) if stem[i + 5..].chars().all(|c| c.is_ascii_digit()) && i + 5 < stem.len() => {
            &stem[..i]
        }
        _ => stem,
    }
}

fn load_series(inputs: &[PathBuf]) -> Result<Vec<Series>> {
    let mut grouped: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut add = |label: String, path: PathBuf| {
        if !grouped.contains_key(&label) {
            order.push(label.clone());
        }
        grouped.entry(label).or_default().push(path);
    };
    for input in inputs {
        if input.is_dir() {
            let manifest = Manifest::read(&input.join("manifest.json"))
                .with_context(|| format!("reading manifest in {}", input.display()))?;
            for r in &manifest.runs {
                add(manifest.label.clone(), input.join(&r.csv));
            }
        } else {
            let stem = input
                .file_stem()
                .and_then(|s| s.to_str())
                .with_context(|| format!("bad file name {}", input.display()))?;
            add(seed_suffix_stripped(stem).to_string(), input.clone());
        }
    }
    order
        .into_iter()
        .map(|label| {
            let runs = grouped[&label]
                .iter()
                .map(|p| read_rows(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Series { label, runs })
        })
        .collect()
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let series = load_series(&args.inputs)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    plot(&series, &args.quantity, &args.output)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_normalize(args: &NormalizeArgs) -> Result<()> {
    if args.baselines.len() < 2 {
        bail!("need at least two baseline scores");
    }
    for (score, value) in args.scores.iter().zip(normalize(&args.baselines, &args.scores)?) {
        println!("{score} -> {value}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Normalize(a) => cmd_normalize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_suffix() {
        assert_eq!(seed_suffix_stripped("gridworld5-sac-tes-seed12"), "gridworld5-sac-tes");
        assert_eq!(seed_suffix_stripped("run-seedling"), "run-seedling");
        assert_eq!(seed_suffix_stripped("plain"), "plain");
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from([
            "tessac", "train", "--env", "chain10", "--T", "5", "--C", "0.5", "--k", "0.8",
            "--consecutive", "--seeds", "3,4", "--paper-hparams",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("wrong subcommand")
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.experiment.env, "chain10");
        assert_eq!(cfg.experiment.seeds, vec![3, 4]);
        assert_eq!(cfg.scheduler.total_conditioned_num, 5);
        assert_eq!(cfg.scheduler.c, 0.5);
        assert!(cfg.scheduler.consecutive);
        assert_eq!(cfg.hyper.batch_size, 256);
    }

    #[test]
    fn module_path_is_reachable() {
        assert_eq!(tessac_core::harness::quantities().len(), 8);
    }
}
