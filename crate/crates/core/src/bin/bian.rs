use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bian::checks::{gradient_suite, lemma_suite};
use bian::data::{generate_synthetic, save, SyntheticConfig};
use bian::experiment::{run_ablation, run_experiment, test_auroc, AblationPlan, DataSource, ExperimentOptions};
use bian::graph::{EdgeAttributedGraph, Label, Masks};
use bian::metrics::auroc;
use bian::model::{load_checkpoint, predict, ModelConfig};
use bian::{BianError, Result};

#[derive(Parser)]
#[command(name = "bian", version, about = "Fraud detection from edge behavior on attributed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic behavior-driven fraud graph.
    GenSynthetic(GenArgs),
    /// Train one or more seeded models and report test AUROC.
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run the ablation table.
    Ablate(AblateArgs),
    /// Randomized checks of the temporal encoding identity.
    VerifyLemma(LemmaArgs),
    /// Finite-difference gradient checks of every layer and the full loss.
    GradCheck,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    fraud_rate: f64,
    #[arg(long, default_value_t = 17)]
    d_v: usize,
    #[arg(long, default_value_t = 821.0)]
    horizon: f64,
    /// Behavior-signal strength in [0, 1].
    #[arg(long, default_value_t = 0.9)]
    s: f64,
    /// Node-signal strength in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    s_v: f64,
    #[arg(long, default_value_t = 0.1)]
    extra_edge_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic dataset spec, e.g. `n=5000,fraud_rate=0.05,s=0.9,s_v=0,seed=1`.
    #[arg(long)]
    synthetic: Option<String>,
}

impl DataArgs {
    fn source(&self) -> Result<DataSource> {
        match (&self.data, &self.synthetic) {
            (Some(p), _) => Ok(DataSource::Path(p.clone())),
            (None, Some(spec)) => Ok(DataSource::Synthetic(SyntheticConfig::parse_spec(spec)?)),
            (None, None) => Err(BianError::Config("pass --data or --synthetic".into())),
        }
    }
}

/// Model settings. Precedence: these flags, then `--config`, then defaults.
#[derive(Args)]
struct ModelArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    /// timestamp | edge_attr | time_conditioned
    #[arg(long)]
    edge_mode: Option<String>,
    /// concat | attn_edge_query | attn_node_query
    #[arg(long)]
    fusion: Option<String>,
    /// full | node_only | edge_only
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    edge_layers: Option<usize>,
    #[arg(long)]
    fanout: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// A number >= 1, or `auto`.
    #[arg(long)]
    pos_class_weight: Option<String>,
    #[arg(long)]
    freeze_frequencies: Option<bool>,
    #[arg(long)]
    time_freqs: Option<usize>,
    /// t2v | random
    #[arg(long)]
    freq_init: Option<String>,
    /// Any config key, as key=value; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelConfig> {
        let file = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p)?),
            None => None,
        };
        let mut flags: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| BianError::Config(format!("--set expects key=value, got {kv:?}")))?;
            flags.push((k.trim().into(), v.trim().into()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k.into(), v));
            }
        };
        push("hidden", self.hidden.map(|x| x.to_string()));
        push("edge_mode", self.edge_mode.clone());
        push("fusion", self.fusion.clone());
        push("variant", self.variant.clone());
        push("layers", self.layers.map(|x| x.to_string()));
        push("edge_layers", self.edge_layers.map(|x| x.to_string()));
        push("fanout", self.fanout.map(|x| x.to_string()));
        push("hops", self.hops.map(|x| x.to_string()));
        push("lr", self.lr.map(|x| x.to_string()));
        push("weight_decay", self.weight_decay.map(|x| x.to_string()));
        push("epochs", self.epochs.map(|x| x.to_string()));
        push("batch_size", self.batch_size.map(|x| x.to_string()));
        push("rng_seed", self.seed.map(|x| x.to_string()));
        push("pos_class_weight", self.pos_class_weight.clone());
        push("freeze_frequencies", self.freeze_frequencies.map(|x| x.to_string()));
        push("time_freqs", self.time_freqs.map(|x| x.to_string()));
        push("freq_init", self.freq_init.clone());
        ModelConfig::layered(file.as_deref(), &flags)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Directory for checkpoints and results.tsv.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, default_value = "train")]
    name: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train | valid | test
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Comma-separated subset of rows; all rows by default.
    #[arg(long)]
    rows: Option<String>,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` when a check ran but did not pass.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::VerifyLemma(a) => {
            let r = lemma_suite(a.trials, a.seed)?;
            println!("trials          {}", r.trials);
            println!("max residual    {:.3e}", r.max_residual);
            println!("max shift delta {:.3e}", r.max_shift_delta);
            println!("{}", if r.passed() { "PASS" } else { "FAIL" });
            Ok(r.passed())
        }
        Command::GradCheck => {
            let results = gradient_suite()?;
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed()))
        }
    }
}

fn gen_synthetic(a: GenArgs) -> Result<bool> {
    let cfg = SyntheticConfig {
        n: a.n,
        fraud_rate: a.fraud_rate,
        d_v: a.d_v,
        horizon: a.horizon,
        s: a.s,
        s_v: a.s_v,
        extra_edge_ratio: a.extra_edge_ratio,
        rng_seed: a.seed,
    };
    let g = generate_synthetic(&cfg)?;
    save(&g, &a.out)?;
    let frauds = g.labels().iter().filter(|&&l| l == Label::Fraud).count();
    println!(
        "wrote {}: {} nodes, {} edges, {} fraud ({})",
        a.out.display(),
        g.num_nodes(),
        g.num_edges(),
        frauds,
        cfg.to_spec()
    );
    Ok(true)
}

fn load_data(d: &DataArgs) -> Result<EdgeAttributedGraph> {
    d.source()?.load()
}

fn train(a: TrainArgs) -> Result<bool> {
    let cfg = a.model.resolve()?;
    let g = load_data(&a.data)?;
    let opts = ExperimentOptions { name: a.name, repeats: a.repeats, out_dir: Some(a.out_dir.clone()) };
    let report = run_experiment(&cfg, &g, &opts)?;
    for (seed, x) in report.seeds.iter().zip(&report.aurocs) {
        println!("seed {seed}: test AUROC {x:.4}");
    }
    println!("{report}");
    println!("checkpoints and results.tsv in {}", a.out_dir.display());
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let model = load_checkpoint(&a.checkpoint)?;
    let g = load_data(&a.data)?;
    let value = if a.split == "test" {
        test_auroc(&model, &g)?
    } else {
        let mask = match a.split.as_str() {
            "train" => &g.masks().train,
            "valid" => &g.masks().valid,
            other => return Err(BianError::Config(format!("unknown split {other:?}"))),
        };
        let nodes: Vec<usize> = Masks::nodes(mask).into_iter().filter(|&i| g.labels()[i].target().is_some()).collect();
        let truth: Vec<bool> = nodes.iter().map(|&i| g.labels()[i] == Label::Fraud).collect();
        auroc(&predict(&model, &g, &nodes)?, &truth)?
    };
    println!("{} AUROC {value:.4}", a.split);
    Ok(true)
}

fn ablate(a: AblateArgs) -> Result<bool> {
    let base = a.model.resolve()?;
    let g = load_data(&a.data)?;
    let mut plan = AblationPlan::standard();
    if let Some(rows) = &a.rows {
        let names: Vec<&str> = rows.split(',').map(str::trim).collect();
        plan = plan.select(&names)?;
    }
    let result = run_ablation(&plan, &base, &g, a.repeats, Some(Path::new(&a.out_dir)))?;
    print!("{}", result.table());
    Ok(true)
}
