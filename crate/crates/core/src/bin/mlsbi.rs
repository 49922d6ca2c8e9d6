use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mlsbi::allocation::{plan_norms, plan_pilot, CorrectionCost, CostModel};
use mlsbi::config::{validate_json, ExperimentConfig};
use mlsbi::dataset;
use mlsbi::experiment::{
    build_reference, build_test_set, evaluate, simulate_variant, train_replicate, variants, ReplicateResult, RunResults,
};
use mlsbi::mdn::Mdn;
use mlsbi::report::{write_bundle, write_loss_components};
use mlsbi::rng::SeedKey;
use mlsbi::train::TrainingLog;
use mlsbi::{Error, Result};

#[derive(Parser)]
#[command(name = "mlsbi", version, about = "Multilevel training of neural likelihood and posterior estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Experiment config (JSON)
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Full epoch budgets instead of a tenth of them
    #[arg(long)]
    full: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Comma-separated per-level counts
    #[arg(long, value_delimiter = ',')]
    n_per_level: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print its diagnostics
    Validate { config: PathBuf },
    /// Generate and store training datasets
    Simulate(Overrides),
    /// Train estimators, from stored datasets when `--data` is given
    Train {
        #[command(flatten)]
        o: Overrides,
        /// Dataset directory written by `simulate`; trains replicate 0 of the first variant
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate estimators saved by `train`
    Evaluate {
        #[command(flatten)]
        o: Overrides,
        /// Directory holding `<variant>_r<k>.json/.bin` checkpoints
        #[arg(long)]
        models: PathBuf,
    },
    /// Simulate, train and evaluate, writing the results bundle
    Run(Overrides),
    /// Per-level sample sizes for a budget
    Plan(PlanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Previous,
    Next,
}

#[derive(Args)]
struct PlanArgs {
    /// Comma-separated unit costs per level
    #[arg(long, value_delimiter = ',', required = true)]
    costs: Vec<f64>,
    #[arg(long)]
    budget: f64,
    /// Comma-separated generator-difference norms per level
    #[arg(long, value_delimiter = ',', conflicts_with = "variances")]
    norms: Option<Vec<f64>>,
    /// Comma-separated pilot variances per level
    #[arg(long, value_delimiter = ',')]
    variances: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "previous")]
    form: Form,
}

fn load(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&o.config)?;
    if let Some(s) = o.seed {
        cfg.seed = s as i128;
    }
    if o.epochs.is_some() {
        cfg.epochs = o.epochs;
    }
    if o.full {
        cfg.full = true;
    }
    if let Some(r) = o.replicates {
        cfg.replicates = r;
    }
    if o.learning_rate.is_some() {
        cfg.learning_rate = o.learning_rate;
    }
    if let Some(n) = &o.n_per_level {
        cfg.n_per_level = n.clone();
    }
    if o.out.is_some() {
        cfg.output_dir = o.out.clone();
    }
    cfg.check()?;
    Ok(cfg.resolved())
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.output_dir.clone().ok_or_else(|| Error::Config("output_dir: set it in the config or pass --out".into()))
}

fn print_summary(results: &RunResults) {
    for (i, v) in results.variants.iter().enumerate() {
        for name in results.metric_names() {
            if let Some(s) = results.summary(i, &name) {
                println!(
                    "{:<10} {:<24} median {:.6} [q1 {:.6}, q3 {:.6}] n={}",
                    v.label, name, s.median, s.q1, s.q3, s.n_finite
                );
            }
        }
    }
}

fn cmd_simulate(o: &Overrides) -> Result<()> {
    let cfg = load(o)?;
    let dir = out_dir(&cfg)?;
    let sim = cfg.simulator()?;
    for v in variants(&cfg)? {
        for r in 0..cfg.replicates {
            let batches = simulate_variant(&cfg, sim.as_ref(), &v, r)?;
            let d = dir.join(&v.label).join(format!("r{r}"));
            dataset::write_dataset(&d, sim.as_ref(), cfg.seed_u64()?, &batches)?;
            println!("{}", d.display());
        }
    }
    Ok(())
}

fn cmd_train(o: &Overrides, data: Option<&Path>) -> Result<()> {
    let cfg = load(o)?;
    let dir = out_dir(&cfg)?;
    let sim = cfg.simulator()?;
    let models = dir.join("models");
    std::fs::create_dir_all(&models)?;
    let mut losses = csv::Writer::from_path(dir.join("loss_components.csv"))?;
    let mut first = true;
    let mut save = |label: &str, r: usize, model: &Mdn, log: &TrainingLog| -> Result<()> {
        model.save(&models.join(format!("{label}_r{r}")))?;
        write_loss_components(&mut losses, label, r, log, first)?;
        first = false;
        println!("{label} r{r}: final loss {:.6}", log.final_loss().unwrap_or(f64::NAN));
        Ok(())
    };
    match data {
        Some(d) => {
            let (_, batches) = dataset::read_dataset(d, sim.as_ref())?;
            let label = batches.iter().map(|b| b.n().to_string()).collect::<Vec<_>>().join("-");
            let (model, log) = train_replicate(&cfg, &batches, 0)?;
            save(&label, 0, &model, &log)?;
        }
        None => {
            for v in variants(&cfg)? {
                for r in 0..cfg.replicates {
                    let batches = simulate_variant(&cfg, sim.as_ref(), &v, r).map_err(|e| e.in_stage("simulate"))?;
                    let (model, log) = train_replicate(&cfg, &batches, r).map_err(|e| e.in_stage("train"))?;
                    save(&v.label, r, &model, &log)?;
                }
            }
        }
    }
    losses.flush()?;
    Ok(())
}

fn cmd_evaluate(o: &Overrides, models: &Path) -> Result<()> {
    let cfg = load(o)?;
    let dir = out_dir(&cfg)?;
    let sim = cfg.simulator()?;
    let test = build_test_set(&cfg, sim.as_ref()).map_err(|e| e.in_stage("simulate"))?;
    let reference = build_reference(&cfg, sim.as_ref()).map_err(|e| e.in_stage("reference"))?;
    let vs = variants(&cfg)?;
    let mut replicates = Vec::new();
    for (vi, v) in vs.iter().enumerate() {
        for r in 0..cfg.replicates {
            let model = Mdn::load(&models.join(format!("{}_r{r}", v.label)))?;
            let key = SeedKey::new(cfg.seed_u64()?).derive(r as u64).derive(2);
            let eval = evaluate(&cfg, &model, &test, reference.as_ref(), &key).map_err(|e| e.in_stage("evaluate"))?;
            replicates.push(ReplicateResult { variant: vi, replicate: r, model, log: TrainingLog::default(), eval });
        }
    }
    let results = RunResults { config: cfg, variants: vs, replicates };
    write_bundle(&dir, &results)?;
    print_summary(&results);
    Ok(())
}

fn cmd_run(o: &Overrides) -> Result<()> {
    let cfg = load(o)?;
    let dir = out_dir(&cfg)?;
    let results = mlsbi::experiment::run(&cfg, Some(&dir))?;
    print_summary(&results);
    Ok(())
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let costs = CostModel::new(a.costs.clone())?;
    let plan = match (&a.norms, &a.variances) {
        (Some(n), _) => {
            let form = match a.form {
                Form::Previous => CorrectionCost::Previous,
                Form::Next => CorrectionCost::Next,
            };
            plan_norms(&costs, n, a.budget, form)?
        }
        (None, Some(v)) => plan_pilot(&costs, v, a.budget)?,
        (None, None) => return Err(Error::Config("plan needs --norms or --variances".into())),
    };
    println!("{}", serde_json::to_string_pretty(&plan)?);
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MLSBI_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("MLSBI_THREADS: not a count: {v}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("MLSBI_THREADS: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let res = match &cli.command {
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let diags = validate_json(&text);
            for d in &diags {
                println!("{d}");
            }
            return if diags.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
        Command::Simulate(o) => cmd_simulate(o),
        Command::Train { o, data } => cmd_train(o, data.as_deref()),
        Command::Evaluate { o, models } => cmd_evaluate(o, models),
        Command::Run(o) => cmd_run(o),
        Command::Plan(a) => cmd_plan(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
