//! Repeated training runs, ablation tables and the results log.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, load, SyntheticConfig};
use crate::error::{BianError, Result};
use crate::graph::{EdgeAttributedGraph, Label, Masks};
use crate::metrics::{auroc, MetricsReport};
use crate::model::{fit, predict, save_checkpoint, BianModel, ModelConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Path(PathBuf),
    Synthetic(SyntheticConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<EdgeAttributedGraph> {
        match self {
            DataSource::Path(p) => load(p),
            DataSource::Synthetic(cfg) => generate_synthetic(cfg),
        }
    }
}

pub const RESULTS_FILE: &str = "results.tsv";
pub const RESULTS_HEADER: &str = "name\tconfig_hash\tseed\tauroc\twall_clock_secs";

/// Short stable identifier of a configuration, ignoring its seed.
pub fn config_hash(cfg: &ModelConfig) -> String {
    let text: String = cfg.to_kv().lines().filter(|l| !l.starts_with("rng_seed=")).map(|l| format!("{l}\n")).collect();
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Supervised test nodes and their fraud flags.
pub fn test_split(g: &EdgeAttributedGraph) -> (Vec<usize>, Vec<bool>) {
    let nodes: Vec<usize> =
        Masks::nodes(&g.masks().test).into_iter().filter(|&i| g.labels()[i].target().is_some()).collect();
    let truth = nodes.iter().map(|&i| g.labels()[i] == Label::Fraud).collect();
    (nodes, truth)
}

pub fn test_auroc(model: &BianModel, g: &EdgeAttributedGraph) -> Result<f64> {
    let (nodes, truth) = test_split(g);
    let scores = predict(model, g, &nodes)?;
    auroc(&scores, &truth)
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOptions {
    pub name: String,
    pub repeats: usize,
    /// Where checkpoints and the results log go; nothing is written when
    /// unset.
    pub out_dir: Option<PathBuf>,
}

/// Trains `opts.repeats` models with seeds `cfg.rng_seed + k` and reports
/// their test AUROC.
pub fn run_experiment(cfg: &ModelConfig, g: &EdgeAttributedGraph, opts: &ExperimentOptions) -> Result<MetricsReport> {
    if opts.repeats == 0 {
        return Err(BianError::Config("repeats must be at least 1".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let hash = config_hash(cfg);
    let mut aurocs = Vec::with_capacity(opts.repeats);
    let mut seeds = Vec::with_capacity(opts.repeats);
    for k in 0..opts.repeats as u64 {
        let run_start = Instant::now();
        let seed = cfg.rng_seed.wrapping_add(k);
        let run_cfg = ModelConfig { rng_seed: seed, ..cfg.clone() };
        let trained = fit(BianModel::new(run_cfg, g.node_attr_dim())?, g)?;
        let a = test_auroc(&trained.model, g)?;
        if let Some(dir) = &opts.out_dir {
            std::fs::create_dir_all(dir)?;
            let ckpt = dir.join(format!("{}-{hash}-seed{seed}.ckpt", file_stem(&opts.name)));
            save_checkpoint(&trained.model, ckpt)?;
            append_result(dir, &opts.name, &hash, seed, a, run_start.elapsed().as_secs_f64())?;
        }
        aurocs.push(a);
        seeds.push(seed);
    }
    Ok(MetricsReport::new(opts.name.clone(), aurocs, seeds, cfg.to_kv(), hash, start.elapsed().as_secs_f64()))
}

fn file_stem(name: &str) -> String {
    let s: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

/// Appends one row to `dir/results.tsv`, writing the header first when the
/// file is new.
pub fn append_result(dir: &Path, name: &str, hash: &str, seed: u64, auroc: f64, secs: f64) -> Result<()> {
    let path = dir.join(RESULTS_FILE);
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{RESULTS_HEADER}")?;
    }
    writeln!(f, "{name}\t{hash}\t{seed}\t{auroc}\t{secs:.3}")?;
    Ok(())
}

/// One ablation row: a name and the config keys it overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub delta: Vec<(String, String)>,
}

impl AblationRow {
    pub fn new(name: &str, delta: &[(&str, &str)]) -> Self {
        AblationRow { name: name.into(), delta: delta.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn apply(&self, base: &ModelConfig) -> Result<ModelConfig> {
        let mut cfg = base.clone();
        for (k, v) in &self.delta {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn describe(&self) -> String {
        if self.delta.is_empty() {
            return "(base)".into();
        }
        self.delta.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationPlan {
    pub rows: Vec<AblationRow>,
}

impl AblationPlan {
    /// Desk-scale counterparts of the published ablation rows.
    pub fn standard() -> Self {
        AblationPlan {
            rows: vec![
                AblationRow::new("edge_attr_only", &[("variant", "edge_only")]),
                AblationRow::new("node_only", &[("variant", "node_only")]),
                AblationRow::new("fusion_concat", &[("fusion", "concat")]),
                AblationRow::new("single_edge_layer", &[("edge_layers", "1")]),
                AblationRow::new("random_freq", &[("freq_init", "random")]),
                AblationRow::new("t2v_freq", &[("freq_init", "t2v")]),
                AblationRow::new("full", &[]),
            ],
        }
    }

    /// Keeps the named rows, in plan order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        for n in names {
            if !self.rows.iter().any(|r| r.name == *n) {
                return Err(BianError::Config(format!("unknown ablation row {n:?}")));
            }
        }
        Ok(AblationPlan { rows: self.rows.iter().filter(|r| names.contains(&r.name.as_str())).cloned().collect() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub rows: Vec<(AblationRow, MetricsReport)>,
}

impl AblationResult {
    /// Aligned text table; the header lists each row's config delta.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for (row, _) in &self.rows {
            let _ = writeln!(s, "# {} = {}", row.name, row.describe());
        }
        let width = self.rows.iter().map(|(r, _)| r.name.len()).max().unwrap_or(4).max(4);
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>4}  {:>16}", "row", "mean", "std", "runs", "config_hash");
        for (row, rep) in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>4}  {:>16}",
                row.name,
                rep.mean,
                rep.std,
                rep.aurocs.len(),
                rep.config_hash
            );
        }
        s
    }

    /// Tab-separated rows with per-run scores.
    pub fn tsv(&self) -> String {
        let mut s = String::from("name\tdelta\tconfig_hash\tmean\tstd\tseeds\taurocs\n");
        for (row, rep) in &self.rows {
            let join = |v: Vec<String>| v.join(",");
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.name,
                row.describe(),
                rep.config_hash,
                rep.mean,
                rep.std,
                join(rep.seeds.iter().map(u64::to_string).collect()),
                join(rep.aurocs.iter().map(f64::to_string).collect())
            );
        }
        s
    }

    pub fn get(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|(r, _)| r.name == name).map(|(_, m)| m)
    }
}

/// Runs every row on the same graph with the same base seed, so row deltas
/// are paired. A row whose resolved config matches an earlier row reuses
/// that row's runs, which training would reproduce bit for bit anyway.
pub fn run_ablation(
    plan: &AblationPlan,
    base: &ModelConfig,
    g: &EdgeAttributedGraph,
    repeats: usize,
    out_dir: Option<&Path>,
) -> Result<AblationResult> {
    let mut rows: Vec<(AblationRow, MetricsReport)> = Vec::with_capacity(plan.rows.len());
    let mut done: Vec<(ModelConfig, MetricsReport)> = Vec::new();
    for row in &plan.rows {
        let cfg = row.apply(base)?;
        let report = match done.iter().find(|(c, _)| *c == cfg) {
            Some((_, rep)) => MetricsReport { name: row.name.clone(), ..rep.clone() },
            None => {
                let opts =
                    ExperimentOptions { name: row.name.clone(), repeats, out_dir: out_dir.map(Path::to_path_buf) };
                let rep = run_experiment(&cfg, g, &opts)?;
                done.push((cfg, rep.clone()));
                rep
            }
        };
        rows.push((row.clone(), report));
    }
    let result = AblationResult { rows };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation.txt"), result.table())?;
        std::fs::write(dir.join("ablation.tsv"), result.tsv())?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_seed_only() {
        let a = ModelConfig::default();
        let b = ModelConfig { rng_seed: 99, ..a.clone() };
        let c = ModelConfig { hidden: 64, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 16);
    }

    #[test]
    fn standard_plan_rows_are_valid() {
        let plan = AblationPlan::standard();
        let names: Vec<&str> = plan.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            ["edge_attr_only", "node_only", "fusion_concat", "single_edge_layer", "random_freq", "t2v_freq", "full"]
        );
        for r in &plan.rows {
            r.apply(&ModelConfig::default()).unwrap();
        }
        assert!(plan.select(&["full", "bogus"]).is_err());
        assert_eq!(plan.select(&["full", "node_only"]).unwrap().rows.len(), 2);
    }

    #[test]
    fn zero_repeats_is_an_error() {
        let g = generate_synthetic(&SyntheticConfig { n: 50, rng_seed: 1, ..SyntheticConfig::default() }).unwrap();
        let opts = ExperimentOptions { repeats: 0, ..ExperimentOptions::default() };
        assert!(run_experiment(&ModelConfig::default(), &g, &opts).is_err());
    }
}
