use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cdgnn::disentangle::disentanglement_score;
use cdgnn::gnn::Aggregation;
use cdgnn::harness::{
    ablate, evaluate, ingest, load_dir, report_csv, sweep, train_cdgnn_on, train_gcn_baseline_on, ModelKind, PlotData, RunConfig,
    RunRecord, Split, Trained,
};
use cdgnn::synth::{planted_shortcut, preset, relabel_to_heterophily, Annotation, PlantedConfig, Preset};
use cdgnn::theory::{check_rows_csv, theory_check, AuditConfig, Grid};
use cdgnn::Graph;

const PLANTED: &str = "planted_shortcut";

#[derive(Parser)]
#[command(name = "cdgnn", version, about = "Causal disentanglement GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark graph.
    Generate(GenerateArgs),
    /// Relabel a graph towards a target label heterophily.
    Relabel(RelabelArgs),
    /// Train CD-GNN.
    Train(TrainArgs),
    /// Train the plain GCN baseline.
    TrainBaseline(TrainArgs),
    /// Accuracy and confusion counts of a saved model.
    Evaluate(EvaluateArgs),
    /// Full model against each single-term ablation.
    Ablate(MultiArgs),
    /// The lambda1 x lambda2 grid.
    Sweep(MultiArgs),
    /// Monte-Carlo check of the one-layer gain formula.
    TheoryCheck(TheoryArgs),
    /// Disentanglement assumption audit of a saved CD-GNN.
    Audit(AuditArgs),
    /// Aggregate a directory of run records into CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// tree_cycles, tree_grid, ba_shapes, ba_community or planted_shortcut.
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relabel the generated graph until h_L reaches this value.
    #[arg(long)]
    relabel_to: Option<f64>,
    /// Planted fixture: number of units.
    #[arg(long)]
    units: Option<usize>,
    /// Planted fixture: share of unshifted units whose shortcut matches the label.
    #[arg(long)]
    agreement: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RelabelArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    /// sum, mean or symmetric.
    #[arg(long)]
    aggregation: Option<Aggregation>,
    /// Moving-average factor of the difficulty weights.
    #[arg(long)]
    difficulty_ema: Option<f64>,
    /// Let shortcut-branch losses train the masks too.
    #[arg(long)]
    shared_mask_grads: bool,
    /// Use raw features instead of L1-normalized rows.
    #[arg(long)]
    raw_features: bool,
    #[arg(long)]
    no_ls: bool,
    #[arg(long)]
    no_lc: bool,
    #[arg(long)]
    no_lcf: bool,
    #[arg(long)]
    no_hsic: bool,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self, dataset: &Path) -> Result<RunConfig> {
        let mut c = RunConfig {
            dataset: dataset.display().to_string(),
            ..RunConfig::default()
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(seed, lr, weight_decay, hidden, dropout, layers, q, lambda1, lambda2, epochs, patience, batch_size, aggregation, difficulty_ema);
        if self.hops.is_some() {
            c.hops = self.hops;
        }
        if self.patience.is_none() && c.patience > c.epochs {
            c.patience = c.epochs;
        }
        c.detach_shortcut_masks = !self.shared_mask_grads;
        c.normalize_features = !self.raw_features;
        c.ablation.no_ls = self.no_ls;
        c.ablation.no_lc = self.no_lc;
        c.ablation.no_lcf = self.no_lcf;
        c.ablation.no_hsic = self.no_hsic;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Split file; the seeded 60/20/20 split when absent.
    #[arg(long)]
    split: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MultiArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct NodeSelection {
    /// Split file to pick nodes from; every node when absent.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    on: Part,
}

impl NodeSelection {
    fn nodes(&self, g: &Graph) -> Result<Vec<usize>> {
        let Some(path) = &self.split else {
            return Ok((0..g.num_nodes()).collect());
        };
        let s = read_split(path)?;
        Ok(match self.on {
            Part::Train => s.train,
            Part::Val => s.val,
            Part::Test => s.test,
        })
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    nodes: NodeSelection,
    /// Causal/shortcut edge file of a planted fixture; adds the mask AUC.
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Grid file; the 27-point standard grid when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    nodes: NodeSelection,
    #[arg(long, default_value_t = 20)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of run records.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write loss-curve plot data of every record into this directory.
    #[arg(long)]
    curves: Option<PathBuf>,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.json"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn read_split(path: &Path) -> Result<Split> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing split file {}", path.display()))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let (mut graph, annotation) = if a.preset == PLANTED {
        let defaults = PlantedConfig::default();
        let cfg = PlantedConfig {
            units: a.units.unwrap_or(defaults.units),
            shortcut_agreement: a.agreement.unwrap_or(defaults.shortcut_agreement),
            seed: a.seed,
            ..defaults
        };
        let p = planted_shortcut(&cfg)?;
        let (pool, holdout) = p.node_pools();
        let split = cdgnn::harness::holdout_split(&pool, &holdout, a.seed)?;
        write(&sidecar(&a.out, "split"), &serde_json::to_string_pretty(&split)?)?;
        let edges = json!({ "causal_edges": p.causal_edges, "shortcut_edges": p.shortcut_edges });
        write(&sidecar(&a.out, "edges"), &serde_json::to_string_pretty(&edges)?)?;
        let blocks = p.unit_of.clone();
        (p.graph, Annotation { blocks })
    } else {
        let generated = preset(a.preset.parse::<Preset>()?, a.seed)?;
        (generated.graph, generated.annotation)
    };
    if let Some(target) = a.relabel_to {
        let outcome = relabel_to_heterophily(&graph, Some(target), a.seed)?;
        if !outcome.reached {
            eprintln!(
                "warning: relabeling stalled at h_L = {:.4} below the target {target}",
                outcome.final_heterophily()
            );
        }
        graph = outcome.graph;
    }
    write(&a.out, &graph.to_json()?)?;
    write(&sidecar(&a.out, "blocks"), &annotation.to_json()?)?;
    println!(
        "{}: {} nodes, {} edges, h_L = {:.4}",
        a.out.display(),
        graph.num_nodes(),
        graph.num_edges(),
        cdgnn::graph::label_heterophily(&graph)?
    );
    Ok(())
}

fn relabel(a: &RelabelArgs) -> Result<()> {
    let g = ingest(&a.graph)?;
    let outcome = relabel_to_heterophily(&g, a.target, a.seed)?;
    write(&a.out, &outcome.graph.to_json()?)?;
    println!(
        "h_L {:.4} -> {:.4} after {} rounds{}",
        outcome.history[0],
        outcome.final_heterophily(),
        outcome.history.len() - 1,
        if outcome.reached { "" } else { " (target not reached)" }
    );
    Ok(())
}

fn save_run(record: &RunRecord, trained: &Trained, out_dir: &Path) -> Result<PathBuf> {
    let path = record.save_in(out_dir)?;
    let model = path.with_extension("model.json");
    trained.save(&model)?;
    println!(
        "{} best epoch {}: train {:.4} val {:.4} test {:.4} -> {}",
        record.model,
        record.best_epoch,
        record.train_accuracy,
        record.val_accuracy,
        record.test_accuracy,
        path.display()
    );
    Ok(path)
}

fn train(a: &TrainArgs, kind: ModelKind) -> Result<()> {
    let g = ingest(&a.graph)?;
    let cfg = a.common.config(&a.graph)?;
    let split = a.split.as_deref().map(read_split).transpose()?;
    let (record, trained) = match kind {
        ModelKind::Cdgnn => train_cdgnn_on(&g, &cfg, split)?,
        ModelKind::Gcn => train_gcn_baseline_on(&g, &cfg, split)?,
    };
    save_run(&record, &trained, &a.common.out_dir)?;
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let trained = Trained::load(&a.model)?;
    let g = ingest(&a.graph)?;
    let nodes = a.nodes.nodes(&g)?;
    let ev = evaluate(&trained, &g, &nodes)?;
    let mut out = json!({ "accuracy": ev.accuracy, "confusion": ev.confusion, "nodes": nodes.len() });
    if let Some(path) = &a.edges {
        let cdgnn::harness::Network::Cdgnn(model) = &trained.network else {
            bail!("mask AUC needs a CD-GNN model");
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let set = |k: &str| -> Result<std::collections::BTreeSet<usize>> {
            Ok(serde_json::from_value(v.get(k).cloned().with_context(|| format!("{k} missing"))?)?)
        };
        let g_in = if trained.normalize_features { cdgnn::harness::l1_normalized(&g)? } else { g.clone() };
        let scores = model.masks.edge_scores(&trained.params, &g_in)?;
        out["mask_auc"] = json!(disentanglement_score(&scores, &set("causal_edges")?, &set("shortcut_edges")?)?);
    }
    emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn run_ablate(a: &MultiArgs) -> Result<()> {
    let g = ingest(&a.graph)?;
    let cfg = a.common.config(&a.graph)?;
    if a.split.is_some() {
        bail!("ablate runs on the seeded 60/20/20 split");
    }
    let rows = ablate(&g, &cfg, a.runs)?;
    println!("{:<10} {:>10} {:>10}", "variant", "test mean", "test std");
    for r in &rows {
        println!("{:<10} {:>10.4} {:>10.4}", r.name, r.result.test.mean, r.result.test.std);
    }
    write(&a.common.out_dir.join("ablation.json"), &serde_json::to_string_pretty(&rows)?)?;
    Ok(())
}

fn run_sweep(a: &MultiArgs) -> Result<()> {
    let g = ingest(&a.graph)?;
    let cfg = a.common.config(&a.graph)?;
    if a.split.is_some() {
        bail!("sweep runs on the seeded 60/20/20 split");
    }
    let cells = sweep(&g, &cfg, a.runs)?;
    let mut csv = String::from("lambda1,lambda2,test_mean,test_std\n");
    for c in &cells {
        csv.push_str(&format!("{},{},{},{}\n", c.lambda1, c.lambda2, c.result.test.mean, c.result.test.std));
    }
    write(&a.common.out_dir.join("sweep.csv"), &csv)?;
    write(&a.common.out_dir.join("sweep_plot.json"), &PlotData::from_sweep(&cells).to_json()?)?;
    print!("{csv}");
    Ok(())
}

fn run_theory(a: &TheoryArgs) -> Result<()> {
    let grid = match &a.grid {
        Some(p) => Grid::load(p)?,
        None => Grid::standard(),
    };
    let rows = theory_check(&grid, a.samples, a.seed)?;
    let passed = rows.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} grid points within 3 standard errors", rows.len());
    emit(a.out.as_deref(), &check_rows_csv(&rows)?)
}

fn run_audit(a: &AuditArgs) -> Result<()> {
    let trained = Trained::load(&a.model)?;
    let g = ingest(&a.graph)?;
    let nodes = a.nodes.nodes(&g)?;
    let cfg = AuditConfig {
        num_permutations: a.permutations,
        seed: a.seed,
        ..AuditConfig::default()
    };
    let report = trained.audit(&g, &nodes, &cfg)?;
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let records = load_dir(&a.dir)?;
    if let Some(dir) = &a.curves {
        for r in &records {
            let name = r.file_name().replace(".json", ".curves.json");
            write(&dir.join(name), &PlotData::loss_curves(r).to_json()?)?;
        }
    }
    emit(a.out.as_deref(), &report_csv(&records)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(&a),
        Command::Relabel(a) => relabel(&a),
        Command::Train(a) => train(&a, ModelKind::Cdgnn),
        Command::TrainBaseline(a) => train(&a, ModelKind::Gcn),
        Command::Evaluate(a) => run_evaluate(&a),
        Command::Ablate(a) => run_ablate(&a),
        Command::Sweep(a) => run_sweep(&a),
        Command::TheoryCheck(a) => run_theory(&a),
        Command::Audit(a) => run_audit(&a),
        Command::Report(a) => run_report(&a),
    }
}
