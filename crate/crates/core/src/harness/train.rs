use std::cell::RefCell;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::record::{dataset_hash, EpochRecord, ModelKind, RunRecord};
use super::split::{split as split_nodes, Split};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Bound, ParamStore, Tape, Var};
use crate::disentangle::{loss_terms_smoothed, Ablation, DifficultyEma, LossWeights, non_finite_term, permutation, total_loss, CdGnn, LossBreakdown, ModelConfig};
use crate::error::{Error, Result};
use crate::gnn::{argmax_rows, cross_entropy_rows, Gcn, GraphBatch, Head, Mode, Readout};
use crate::graph::{ego_subgraph, feature_heterophily, label_heterophily, EgoSubgraph, Graph};
use crate::matrix::Matrix;
use crate::theory::{assumption_audit, AuditConfig, AuditReport};

const EVAL_CHUNK: usize = 64;

/// Plain GCN encoder, readout and softmax head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnClassifier {
    pub gcn: Gcn,
    pub readout: Readout,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Network {
    Cdgnn(CdGnn),
    Gcn(GcnClassifier),
}

/// Parameters and architecture of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub network: Network,
    pub params: ParamStore,
    pub hops: usize,
    pub num_classes: usize,
    pub in_dim: usize,
    pub normalize_features: bool,
}

impl Trained {
    pub fn kind(&self) -> ModelKind {
        match self.network {
            Network::Cdgnn(_) => ModelKind::Cdgnn,
            Network::Gcn(_) => ModelKind::Gcn,
        }
    }

    /// Class probabilities of every segment, from the causal head for CD-GNN.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Matrix> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let probs = match &self.network {
            Network::Cdgnn(m) => {
                let b = m.embed(&tape, &p, batch, Mode::Eval)?;
                m.causal_probs(&p, b.h_c, b.h_s)?
            }
            Network::Gcn(m) => {
                let nodes = m.gcn.forward(&tape, &p, batch, None, None, Mode::Eval)?;
                m.head.probs(&p, m.readout.forward(&p, nodes, batch)?)?
            }
        };
        Ok(probs.value())
    }

    /// Disentanglement audit of a trained CD-GNN on the ego subgraphs of `nodes`.
    pub fn audit(&self, g: &Graph, nodes: &[usize], cfg: &AuditConfig) -> Result<AuditReport> {
        let Network::Cdgnn(m) = &self.network else {
            return Err(Error::InvalidConfig("only CD-GNN models can be audited".into()));
        };
        let g = if self.normalize_features { l1_normalized(g)? } else { g.clone() };
        assumption_audit(m, &self.params, &g, nodes, self.hops, cfg)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Ego subgraph of every node, computed once per run.
pub struct EgoCache {
    pub subgraphs: Vec<EgoSubgraph>,
}

impl EgoCache {
    pub fn new(g: &Graph, hops: usize) -> Self {
        EgoCache {
            subgraphs: (0..g.num_nodes()).into_par_iter().map(|i| ego_subgraph(g, i, hops)).collect(),
        }
    }

    pub fn batch(&self, nodes: &[usize]) -> GraphBatch {
        GraphBatch::from_egos(nodes.iter().map(|&i| &self.subgraphs[i]))
    }
}

/// Accuracy and confusion counts of argmax predictions (lowest class on ties).
pub fn evaluate(trained: &Trained, g: &Graph, nodes: &[usize]) -> Result<Evaluation> {
    let cache = if trained.normalize_features {
        EgoCache::new(&l1_normalized(g)?, trained.hops)
    } else {
        EgoCache::new(g, trained.hops)
    };
    evaluate_cached(trained, g, &cache, nodes)
}

/// Copy of `g` with every nonzero feature row scaled to unit L1 norm.
pub fn l1_normalized(g: &Graph) -> Result<Graph> {
    let mut f = g.features().clone();
    for i in 0..f.rows() {
        let row = f.row_mut(i);
        let norm: f64 = row.iter().map(|x| x.abs()).sum();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    g.with_features(f)
}

pub fn evaluate_cached(trained: &Trained, g: &Graph, cache: &EgoCache, nodes: &[usize]) -> Result<Evaluation> {
    if nodes.is_empty() {
        return Err(Error::InvalidConfig("evaluation node set is empty".into()));
    }
    if g.feature_dim() != trained.in_dim || g.num_classes() != trained.num_classes {
        return Err(Error::InvalidConfig(format!(
            "model expects {} features and {} classes, graph has {} and {}",
            trained.in_dim,
            trained.num_classes,
            g.feature_dim(),
            g.num_classes()
        )));
    }
    let preds: Vec<Vec<usize>> = nodes
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| Ok(argmax_rows(&trained.predict(&cache.batch(chunk))?)))
        .collect::<Result<_>>()?;
    let c = g.num_classes();
    let mut confusion = vec![vec![0; c]; c];
    let mut correct = 0;
    for (&i, p) in nodes.iter().zip(preds.into_iter().flatten()) {
        let y = g.labels()[i];
        confusion[y][p] += 1;
        correct += usize::from(y == p);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / nodes.len() as f64,
        confusion,
    })
}

/// Shuffled mini-batches; a trailing singleton joins the previous batch so
/// every batch admits a non-trivial permutation.
pub fn mini_batches(nodes: &[usize], size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order = nodes.to_vec();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("nonempty");
        batches.last_mut().expect("nonempty").extend(last);
    }
    batches
}

/// Loss of one training batch and its breakdown.
trait Objective {
    fn step<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        batch: &GraphBatch,
        labels: &[usize],
        dropout_seed: u64,
        perm_seed: u64,
    ) -> Result<(Var<'t>, LossBreakdown)>;
}

struct CdGnnObjective {
    model: CdGnn,
    weights: LossWeights,
    ablation: Ablation,
    ema: RefCell<DifficultyEma>,
}

impl Objective for CdGnnObjective {
    fn step<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        batch: &GraphBatch,
        labels: &[usize],
        dropout_seed: u64,
        perm_seed: u64,
    ) -> Result<(Var<'t>, LossBreakdown)> {
        let bundle = self.model.embed(tape, params, batch, Mode::Train { seed: dropout_seed })?;
        let perm = permutation(labels.len(), perm_seed);
        let nodes: Vec<usize> = batch.egos.iter().map(|&r| batch.original_nodes[r]).collect();
        let mut ema = self.ema.borrow_mut();
        let terms = loss_terms_smoothed(
            &self.model,
            params,
            &bundle,
            labels,
            self.weights.q,
            &perm,
            Some((&mut ema, &nodes)),
        )?;
        total_loss(&terms, &self.weights, &self.ablation)
    }
}

impl Objective for GcnClassifier {
    fn step<'t>(
        &self,
        tape: &'t Tape,
        params: &Bound<'t>,
        batch: &GraphBatch,
        labels: &[usize],
        dropout_seed: u64,
        _perm_seed: u64,
    ) -> Result<(Var<'t>, LossBreakdown)> {
        let nodes = self.gcn.forward(tape, params, batch, None, None, Mode::Train { seed: dropout_seed })?;
        let probs = self.head.probs(params, self.readout.forward(params, nodes, batch)?)?;
        let loss = cross_entropy_rows(probs, labels)?.mean();
        let ce = loss.item();
        let b = LossBreakdown {
            l_c: ce,
            total: ce,
            ce_c: ce,
            ..LossBreakdown::default()
        };
        Ok((loss, b))
    }
}

struct Loop<'a> {
    g: &'a Graph,
    config: &'a RunConfig,
    split: Split,
    cache: EgoCache,
}

impl<'a> Loop<'a> {
    fn new(g: &'a Graph, config: &'a RunConfig, split: Option<Split>) -> Result<Self> {
        config.validate()?;
        if g.num_classes() < 2 {
            return Err(Error::InvalidConfig("training needs at least 2 classes".into()));
        }
        Ok(Loop {
            g,
            config,
            split: match split {
                Some(s) => s,
                None => split_nodes(g.num_nodes(), config.seed)?,
            },
            cache: if config.normalize_features {
                EgoCache::new(&l1_normalized(g)?, config.hops())
            } else {
                EgoCache::new(g, config.hops())
            },
        })
    }

    fn run(self, mut trained: Trained, master: &mut ChaCha8Rng, objective: &impl Objective) -> Result<(RunRecord, Trained)> {
        let start = Instant::now();
        let cfg = self.config;
        let adam = AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(trained.params.values());
        let mut epochs = Vec::new();
        let mut best = (f64::NEG_INFINITY, 0, trained.params.clone());
        let mut since_best = 0;

        for epoch in 1..=cfg.epochs {
            let batches = mini_batches(&self.split.train, cfg.batch_size, master);
            let mut sum = LossBreakdown::default();
            for nodes in &batches {
                let dropout_seed: u64 = master.random();
                let perm_seed: u64 = master.random();
                let batch = self.cache.batch(nodes);
                let labels: Vec<usize> = nodes.iter().map(|&i| self.g.labels()[i]).collect();
                let tape = Tape::new();
                let bound = trained.params.bind(&tape);
                let (loss, b) = objective.step(&tape, &bound, &batch, &labels, dropout_seed, perm_seed)?;
                if let Some(term) = non_finite_term(&b) {
                    return Err(Error::NonFiniteLoss { term, epoch });
                }
                let grads = bound.gradients(&tape.backward(loss)?);
                adam_step(trained.params.values_mut(), &grads, &mut state, &adam);
                accumulate(&mut sum, &b);
            }
            let losses = scale(&sum, 1.0 / batches.len() as f64);
            let val = evaluate_cached(&trained, self.g, &self.cache, &self.split.val)?.accuracy;
            epochs.push(EpochRecord {
                epoch,
                losses,
                val_accuracy: val,
            });
            if val > best.0 {
                best = (val, epoch, trained.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }

        let (_, best_epoch, params) = best;
        trained.params = params;
        let acc = |nodes: &[usize]| evaluate_cached(&trained, self.g, &self.cache, nodes).map(|e| e.accuracy);
        let record = RunRecord {
            model: trained.kind(),
            config: cfg.clone(),
            dataset: cfg.dataset.clone(),
            dataset_hash: dataset_hash(self.g)?,
            h_l: label_heterophily(self.g).unwrap_or(0.0),
            h_f: feature_heterophily(self.g).unwrap_or(0.0),
            train_accuracy: acc(&self.split.train)?,
            val_accuracy: acc(&self.split.val)?,
            test_accuracy: acc(&self.split.test)?,
            epochs,
            best_epoch,
            wall_time_secs: start.elapsed().as_secs_f64(),
        };
        Ok((record, trained))
    }
}

fn accumulate(acc: &mut LossBreakdown, b: &LossBreakdown) {
    acc.l_s += b.l_s;
    acc.l_c += b.l_c;
    acc.l_cf += b.l_cf;
    acc.l_hsic += b.l_hsic;
    acc.total += b.total;
    acc.ce_s += b.ce_s;
    acc.ce_c += b.ce_c;
}

fn scale(b: &LossBreakdown, s: f64) -> LossBreakdown {
    LossBreakdown {
        l_s: b.l_s * s,
        l_c: b.l_c * s,
        l_cf: b.l_cf * s,
        l_hsic: b.l_hsic * s,
        total: b.total * s,
        ce_s: b.ce_s * s,
        ce_c: b.ce_c * s,
    }
}

/// Trains CD-GNN on the training split with the full objective, early
/// stopping on validation accuracy.
pub fn train_cdgnn(g: &Graph, config: &RunConfig) -> Result<(RunRecord, Trained)> {
    train_cdgnn_on(g, config, None)
}

/// [`train_cdgnn`] on a given split instead of the seeded 60/20/20 one.
pub fn train_cdgnn_on(g: &Graph, config: &RunConfig, split: Option<Split>) -> Result<(RunRecord, Trained)> {
    if config.ablation.all() {
        return Err(Error::AllTermsAblated);
    }
    let lp = Loop::new(g, config, split)?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamStore::new();
    let model = CdGnn::new(
        &mut params,
        &ModelConfig {
            in_dim: g.feature_dim(),
            hidden: config.hidden,
            layers: config.layers,
            dropout: config.dropout,
            num_classes: g.num_classes(),
            scorer_hidden: config.scorer_hidden,
            aggregation: config.aggregation,
            detach_shortcut_masks: config.detach_shortcut_masks,
        },
        &mut master,
    )?;
    let trained = Trained {
        network: Network::Cdgnn(model.clone()),
        params,
        hops: config.hops(),
        num_classes: g.num_classes(),
        in_dim: g.feature_dim(),
        normalize_features: config.normalize_features,
    };
    let objective = CdGnnObjective {
        model,
        weights: config.loss_weights(),
        ablation: config.ablation,
        ema: RefCell::new(DifficultyEma::new(g.num_nodes(), config.difficulty_ema)?),
    };
    lp.run(trained, &mut master, &objective)
}

/// Trains a plain GCN with cross-entropy on the same splits and batches.
pub fn train_gcn_baseline(g: &Graph, config: &RunConfig) -> Result<(RunRecord, Trained)> {
    train_gcn_baseline_on(g, config, None)
}

pub fn train_gcn_baseline_on(g: &Graph, config: &RunConfig, split: Option<Split>) -> Result<(RunRecord, Trained)> {
    let lp = Loop::new(g, config, split)?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamStore::new();
    let net = GcnClassifier {
        gcn: Gcn::new(&mut params, "gcn", g.feature_dim(), config.hidden, config.layers, config.dropout, &mut master)?
            .with_aggregation(config.aggregation),
        readout: Readout::new(&mut params, "readout", config.hidden, &mut master),
        head: Head::new(&mut params, "head", config.hidden, g.num_classes(), &mut master),
    };
    let trained = Trained {
        network: Network::Gcn(net.clone()),
        params,
        hops: config.hops(),
        num_classes: g.num_classes(),
        in_dim: g.feature_dim(),
        normalize_features: config.normalize_features,
    };
    lp.run(trained, &mut master, &net)
}
