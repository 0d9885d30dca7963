//! Transfer of the pretrained encoder to 4-way node classification: frozen
//! feature extraction with an MLP or GAT head, full fine-tuning with an MLP
//! head, and the matching no-pretrain baselines. Training uses adaptively
//! weighted cross-entropy (per-class weights grow with the class's current
//! misclassification rate).

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{BignetError, Result};
use crate::features::{to_homogeneous_feature, HOMOGENEOUS_DIM};
use crate::graph::{BimGraph, GraphMode, NUM_CLASSES};
use crate::metrics::{ConfusionMatrix, EvalReport};
use crate::nn::gat::{
    gat_forward, init_gat, init_mlp, mlp_forward, typed_gat_forward, Arcs, GatConfig, MlpConfig,
};
use crate::nn::optim::Adam;
use crate::nn::params::{Binder, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::pretrain::{embed_tensors, Checkpoint, GraphTensors, ModelState};

pub const CLASSIFIER_VERSION: u32 = 1;

/// Eq. 8 class weights: `w_i(t+1) = w_i(t) * (1 + alpha * Error_i)`, with a
/// renormalization to mean 1 and a clip at 10x the smallest weight so the
/// recurrence cannot grow without bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; NUM_CLASSES],
    pub alpha: f64,
}

impl ClassWeights {
    pub fn new(alpha: f64) -> Self {
        ClassWeights {
            w: [1.0; NUM_CLASSES],
            alpha,
        }
    }

    /// The raw Eq. 8 recurrence, without renormalization.
    pub fn raw_update(&mut self, error_rates: &[f64; NUM_CLASSES]) {
        for (w, &e) in self.w.iter_mut().zip(error_rates) {
            debug_assert!((0.0..=1.0).contains(&e));
            *w *= 1.0 + self.alpha * e;
        }
    }

    /// Renormalize to mean 1, then clip each weight to at most 10x the
    /// minimum (re-normalizing once more if clipping changed anything).
    pub fn normalize_and_clip(&mut self) {
        let mean = self.w.iter().sum::<f64>() / NUM_CLASSES as f64;
        for w in self.w.iter_mut() {
            *w /= mean;
        }
        let min = self.w.iter().cloned().fold(f64::INFINITY, f64::min);
        let cap = 10.0 * min;
        let mut clipped = false;
        for w in self.w.iter_mut() {
            if *w > cap {
                *w = cap;
                clipped = true;
            }
        }
        if clipped {
            let mean = self.w.iter().sum::<f64>() / NUM_CLASSES as f64;
            for w in self.w.iter_mut() {
                *w /= mean;
            }
        }
    }

    /// One per-epoch update: Eq. 8 followed by normalization.
    pub fn update(&mut self, error_rates: &[f64; NUM_CLASSES]) {
        self.raw_update(error_rates);
        self.normalize_and_clip();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferStrategy {
    /// Frozen encoder features into an MLP head.
    FeatExtractMlp,
    /// Frozen encoder features into a 2-layer GAT head over the same edges.
    FeatExtractGat,
    /// Encoder and MLP head trained jointly.
    FineTuneMlp,
    /// Baseline: raw normalized features into the MLP head (no encoder).
    NoneMlp,
    /// Baseline: raw normalized features into the GAT head (no encoder).
    NoneGat,
}

impl TransferStrategy {
    pub const ALL: [TransferStrategy; 5] = [
        TransferStrategy::FeatExtractMlp,
        TransferStrategy::FeatExtractGat,
        TransferStrategy::FineTuneMlp,
        TransferStrategy::NoneMlp,
        TransferStrategy::NoneGat,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "feat_extract_mlp" => TransferStrategy::FeatExtractMlp,
            "feat_extract_gat" => TransferStrategy::FeatExtractGat,
            "fine_tune_mlp" => TransferStrategy::FineTuneMlp,
            "none_mlp" => TransferStrategy::NoneMlp,
            "none_gat" => TransferStrategy::NoneGat,
            _ => {
                return Err(BignetError::Config(format!(
                    "unknown transfer strategy {s:?} (expected feat_extract_mlp, \
                     feat_extract_gat, fine_tune_mlp, none_mlp, or none_gat)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TransferStrategy::FeatExtractMlp => "feat_extract_mlp",
            TransferStrategy::FeatExtractGat => "feat_extract_gat",
            TransferStrategy::FineTuneMlp => "fine_tune_mlp",
            TransferStrategy::NoneMlp => "none_mlp",
            TransferStrategy::NoneGat => "none_gat",
        }
    }

    pub fn uses_pretrained_encoder(self) -> bool {
        matches!(
            self,
            TransferStrategy::FeatExtractMlp
                | TransferStrategy::FeatExtractGat
                | TransferStrategy::FineTuneMlp
        )
    }

    pub fn fine_tunes_encoder(self) -> bool {
        self == TransferStrategy::FineTuneMlp
    }

    pub fn head_is_gat(self) -> bool {
        matches!(
            self,
            TransferStrategy::FeatExtractGat | TransferStrategy::NoneGat
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub version: u32,
    pub strategy: TransferStrategy,
    pub mode: GraphMode,
    pub head_in_dim: usize,
    pub best_epoch: usize,
    pub val_average_f1: f64,
    pub config_echo: String,
}

/// A trained node classifier. Self-contained: when the strategy uses the
/// pretrained encoder, the encoder parameters are stored here too (under
/// `enc.*`), so evaluation does not need the pretraining checkpoint.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub meta: ClassifierMeta,
    pub params: ParamStore,
}

impl Classifier {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(&self.meta)?;
        bytes.push(b'\n');
        bytes.extend_from_slice(&self.params.to_bytes()?);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        let newline = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| BignetError::Format("classifier file missing metadata line".into()))?;
        let meta: ClassifierMeta = serde_json::from_slice(&raw[..newline])?;
        if meta.version != CLASSIFIER_VERSION {
            return Err(BignetError::Format(format!(
                "unsupported classifier version {}",
                meta.version
            )));
        }
        let params = ParamStore::from_bytes(&raw[newline + 1..])?;
        Ok(Classifier { meta, params })
    }

    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for line in self.meta.config_echo.lines() {
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v.trim())?;
            }
        }
        Ok(cfg)
    }

    /// Predicted class index per node (global node order).
    pub fn predict(&self, g: &BimGraph) -> Result<Vec<usize>> {
        let cfg = self.config()?;
        let tensors = GraphTensors::new(g)?;
        let prepared =
            PreparedGraph::from_graph(g, &tensors, self.meta.strategy, &self.params, &cfg)?;
        let mut tape = Tape::new();
        let mut binder = Binder::new();
        let logits = classifier_logits(
            &mut tape,
            &mut binder,
            &self.params,
            self.meta.strategy,
            &cfg,
            &prepared,
            &tensors,
        )?;
        let l = tape.value(logits);
        Ok((0..l.nrows())
            .map(|r| {
                let row = l.row(r);
                let mut best = 0;
                for c in 1..NUM_CLASSES {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

fn head_mlp_cfg(in_dim: usize, cfg: &RunConfig) -> MlpConfig {
    MlpConfig {
        dims: vec![in_dim, cfg.classifier_hidden_dim, NUM_CLASSES],
    }
}

fn head_gat_cfg(in_dim: usize, cfg: &RunConfig) -> GatConfig {
    GatConfig {
        heads_hidden: cfg.heads_hidden,
        heads_out: cfg.heads_out,
        ..GatConfig::new(in_dim, cfg.classifier_hidden_dim, NUM_CLASSES)
    }
}

/// Raw normalized node features lifted into the shared 158-wide layout
/// (identity in homogeneous mode), used by the no-pretrain baselines.
fn raw_feature_matrix(g: &BimGraph) -> Array2<f64> {
    let mut out = Array2::zeros((g.nodes.len(), HOMOGENEOUS_DIM));
    for (i, node) in g.nodes.iter().enumerate() {
        let values = match g.mode {
            GraphMode::Homogeneous => node.feature.values.clone(),
            GraphMode::Heterogeneous => to_homogeneous_feature(&node.feature).values,
        };
        for (j, v) in values.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Per-graph state precomputed before the training loop: classifier input
/// features (frozen encoder output or raw features) and the labeled rows.
struct PreparedGraph {
    /// None for fine-tuning, where the encoder runs on the tape instead.
    input: Option<Array2<f64>>,
    arcs: Arcs,
    labels: Vec<usize>,
    labeled_rows: Vec<usize>,
}

impl PreparedGraph {
    fn build(
        tensors: &GraphTensors,
        strategy: TransferStrategy,
        params: &ParamStore,
        cfg: &RunConfig,
    ) -> Result<Self> {
        // The head input: frozen embeddings, raw features, or deferred.
        let input = match strategy {
            TransferStrategy::FineTuneMlp => None,
            TransferStrategy::FeatExtractMlp | TransferStrategy::FeatExtractGat => {
                Some(embed_tensors(tensors, params, cfg)?)
            }
            TransferStrategy::NoneMlp | TransferStrategy::NoneGat => None, // filled by caller
        };
        Ok(PreparedGraph {
            input,
            arcs: Arcs {
                src: vec![],
                dst: vec![],
                n_nodes: tensors.n_nodes,
            },
            labels: vec![],
            labeled_rows: vec![],
        })
    }

    fn from_graph(
        g: &BimGraph,
        tensors: &GraphTensors,
        strategy: TransferStrategy,
        params: &ParamStore,
        cfg: &RunConfig,
    ) -> Result<Self> {
        let mut prepared = Self::build(tensors, strategy, params, cfg)?;
        if matches!(
            strategy,
            TransferStrategy::NoneMlp | TransferStrategy::NoneGat
        ) {
            prepared.input = Some(raw_feature_matrix(g));
        }
        prepared.arcs = Arcs::from_edges(g.nodes.len(), &g.edges)?;
        for (i, node) in g.nodes.iter().enumerate() {
            if let Some(label) = node.label {
                prepared.labeled_rows.push(i);
                prepared.labels.push(label.index());
            }
        }
        Ok(prepared)
    }
}

/// Head (and, when fine-tuning, encoder) forward producing per-node logits.
fn classifier_logits(
    tape: &mut Tape,
    binder: &mut Binder,
    params: &ParamStore,
    strategy: TransferStrategy,
    cfg: &RunConfig,
    prepared: &PreparedGraph,
    tensors: &GraphTensors,
) -> Result<Var> {
    let head_in = match strategy {
        TransferStrategy::FineTuneMlp => {
            // Encoder on the tape so gradients reach its parameters.
            match tensors.mode {
                GraphMode::Heterogeneous => {
                    let (arcs, feats, globals) = tensors.typed.as_ref().unwrap();
                    let enc_cfg = ModelState::enc_cfg_hetero(cfg);
                    let xs: [Var; 3] = std::array::from_fn(|t| tape.leaf(feats[t].clone()));
                    let hs = typed_gat_forward(tape, binder, params, "enc", &enc_cfg, xs, arcs);
                    // Re-assemble per-type rows into global node order.
                    let mut order: Vec<(usize, usize, usize)> = Vec::new(); // (global, type, local)
                    for t in 0..3 {
                        for (local, &global) in globals[t].iter().enumerate() {
                            order.push((global, t, local));
                        }
                    }
                    order.sort_unstable();
                    let parts: Vec<Var> = order
                        .iter()
                        .map(|&(_, t, local)| tape.slice_rows(hs[t], local, 1))
                        .collect();
                    tape.concat_rows(&parts)
                }
                GraphMode::Homogeneous => {
                    let (arcs, x) = tensors.homo.as_ref().unwrap();
                    let enc_cfg = ModelState::enc_cfg_homo(cfg);
                    let xv = tape.leaf(x.clone());
                    gat_forward(tape, binder, params, "enc", &enc_cfg, xv, arcs)
                }
            }
        }
        _ => {
            let input = prepared
                .input
                .as_ref()
                .ok_or_else(|| BignetError::Training("classifier input not prepared".into()))?;
            tape.leaf(input.clone())
        }
    };
    let in_dim = tape.value(head_in).ncols();
    let logits = if strategy.head_is_gat() {
        gat_forward(
            tape,
            binder,
            params,
            "head",
            &head_gat_cfg(in_dim, cfg),
            head_in,
            &prepared.arcs,
        )
    } else {
        mlp_forward(
            tape,
            binder,
            params,
            "head",
            &head_mlp_cfg(in_dim, cfg),
            head_in,
        )
    };
    Ok(logits)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_average_f1: f64,
    pub class_weights: [f64; NUM_CLASSES],
}

#[derive(Debug)]
pub struct TransferOutcome {
    pub classifier: Classifier,
    pub history: Vec<TransferEpochStats>,
}

/// Train a node classifier on labeled transfer-train graphs, early-stopping
/// on validation average F1. `checkpoint` is required for the strategies
/// that start from the pretrained encoder and must be None for baselines.
pub fn train_transfer(
    strategy: TransferStrategy,
    checkpoint: Option<&Checkpoint>,
    train_graphs: &[&BimGraph],
    val_graphs: &[&BimGraph],
    cfg: &RunConfig,
) -> Result<TransferOutcome> {
    if train_graphs.is_empty() || val_graphs.is_empty() {
        return Err(BignetError::Training(
            "transfer training needs non-empty train and validation graph sets".into(),
        ));
    }
    if strategy.uses_pretrained_encoder() != checkpoint.is_some() {
        return Err(BignetError::Training(format!(
            "strategy {} {} a pretraining checkpoint",
            strategy.name(),
            if strategy.uses_pretrained_encoder() {
                "requires"
            } else {
                "does not take"
            }
        )));
    }
    for g in train_graphs.iter().chain(val_graphs) {
        if g.mode != cfg.mode {
            return Err(BignetError::Training(format!(
                "graph mode {:?} does not match config mode {:?}",
                g.mode, cfg.mode
            )));
        }
    }

    // Assemble the trainable parameter store: encoder copy (when used) plus
    // a freshly initialized head. For frozen strategies the encoder copy is
    // carried for inference but receives no gradient (it never joins the
    // tape), so it stays bit-identical to the checkpoint.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(HEAD_INIT_SEED_MIX));
    let mut params = ParamStore::new();
    if let Some(ckpt) = checkpoint {
        for (name, value) in ckpt.params.iter() {
            if name.starts_with("enc.") {
                params.insert(name, value.clone());
            }
        }
    }
    let head_in_dim = if strategy.uses_pretrained_encoder() {
        cfg.hidden_dim
    } else {
        HOMOGENEOUS_DIM
    };
    if strategy.head_is_gat() {
        init_gat(&mut params, "head", &head_gat_cfg(head_in_dim, cfg), &mut rng);
    } else {
        init_mlp(&mut params, "head", &head_mlp_cfg(head_in_dim, cfg), &mut rng);
    }

    // Per-graph precomputation (frozen embeddings computed exactly once).
    let train_tensors: Vec<GraphTensors> = train_graphs
        .iter()
        .map(|g| GraphTensors::new(g))
        .collect::<Result<_>>()?;
    let val_tensors: Vec<GraphTensors> = val_graphs
        .iter()
        .map(|g| GraphTensors::new(g))
        .collect::<Result<_>>()?;
    let prepare = |graphs: &[&BimGraph], tensors: &[GraphTensors]| -> Result<Vec<PreparedGraph>> {
        graphs
            .iter()
            .zip(tensors)
            .map(|(g, t)| PreparedGraph::from_graph(g, t, strategy, &params, cfg))
            .collect()
    };
    let train_prepared = prepare(train_graphs, &train_tensors)?;
    let val_prepared = prepare(val_graphs, &val_tensors)?;
    if train_prepared.iter().all(|p| p.labeled_rows.is_empty()) {
        return Err(BignetError::Training("no labeled nodes in training graphs".into()));
    }

    let mut opt = Adam::new(cfg.transfer_lr);
    let mut weights = ClassWeights::new(cfg.class_weight_alpha);
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Option<ParamStore> = None;
    let mut since_improvement = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.transfer_max_epochs {
        let mut epoch_loss = 0.0;
        // Training-set confusion for the adaptive weight update.
        let mut train_confusion = ConfusionMatrix::new();
        let mut batch_grads: indexmap::IndexMap<String, Array2<f64>> = indexmap::IndexMap::new();
        let n_graphs = train_prepared.len();
        for (prepared, tensors) in train_prepared.iter().zip(&train_tensors) {
            if prepared.labeled_rows.is_empty() {
                continue;
            }
            let mut tape = Tape::new();
            let mut binder = Binder::new();
            let logits = classifier_logits(
                &mut tape, &mut binder, &params, strategy, cfg, prepared, tensors,
            )?;
            let loss = tape.weighted_cross_entropy(
                logits,
                &prepared.labeled_rows,
                &prepared.labels,
                &weights.w,
            );
            let loss_value = tape.value(loss)[(0, 0)];
            if !loss_value.is_finite() {
                return Err(BignetError::Training(format!(
                    "non-finite transfer loss {loss_value} at epoch {epoch}"
                )));
            }
            epoch_loss += loss_value;
            tally_predictions(tape.value(logits), prepared, &mut train_confusion);
            let grads = tape.backward(loss)?;
            for (name, g) in binder.collect(&grads) {
                let scaled = g / n_graphs as f64;
                batch_grads
                    .entry(name)
                    .and_modify(|acc| *acc += &scaled)
                    .or_insert(scaled);
            }
        }
        opt.step(&mut params, &batch_grads, 1.0);

        // Eq. 8 update from this cycle's training-set misclassification
        // rates (1 - recall per class; absent classes count as 0).
        let mut error_rates = [0.0; NUM_CLASSES];
        for (c, e) in error_rates.iter_mut().enumerate() {
            if train_confusion.support(c) > 0 {
                *e = 1.0 - train_confusion.recall(c);
            }
        }
        weights.update(&error_rates);

        // Validation average F1 for early stopping.
        let mut val_confusion = ConfusionMatrix::new();
        for (prepared, tensors) in val_prepared.iter().zip(&val_tensors) {
            let mut tape = Tape::new();
            let mut binder = Binder::new();
            let logits = classifier_logits(
                &mut tape, &mut binder, &params, strategy, cfg, prepared, tensors,
            )?;
            tally_predictions(tape.value(logits), prepared, &mut val_confusion);
        }
        let val_f1 = val_confusion.average_f1();

        history.push(TransferEpochStats {
            epoch,
            train_loss: epoch_loss / n_graphs as f64,
            val_average_f1: val_f1,
            class_weights: weights.w,
        });

        if val_f1 > best_f1 + 1e-12 {
            best_f1 = val_f1;
            best_loss = epoch_loss;
            best_epoch = epoch;
            best_params = Some(params.clone());
            since_improvement = 0;
        } else {
            // Ties in validation F1 (common when a class is absent) are
            // broken by training loss so the saved model still improves;
            // this does not count as F1 progress for the patience clock.
            if (val_f1 - best_f1).abs() <= 1e-12 && epoch_loss < best_loss {
                best_loss = epoch_loss;
                best_epoch = epoch;
                best_params = Some(params.clone());
            }
            since_improvement += 1;
            if since_improvement >= cfg.transfer_patience {
                break;
            }
        }
    }

    let params = best_params.unwrap_or(params);
    let meta = ClassifierMeta {
        version: CLASSIFIER_VERSION,
        strategy,
        mode: cfg.mode,
        head_in_dim,
        best_epoch,
        val_average_f1: best_f1,
        config_echo: cfg.to_key_values(),
    };
    Ok(TransferOutcome {
        classifier: Classifier { meta, params },
        history,
    })
}

// Seed-mixing constant so head initialization differs from the encoder's.
const HEAD_INIT_SEED_MIX: u64 = 0x85eb_ca6b_27d4_eb2f;

fn tally_predictions(logits: &Array2<f64>, prepared: &PreparedGraph, cm: &mut ConfusionMatrix) {
    for (&row, &actual) in prepared.labeled_rows.iter().zip(&prepared.labels) {
        let r = logits.row(row);
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if r[c] > r[best] {
                best = c;
            }
        }
        cm.add_indices(best, actual);
    }
}

/// Confusion matrix and metrics of a trained classifier over labeled graphs.
pub fn evaluate(classifier: &Classifier, graphs: &[&BimGraph]) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new();
    for g in graphs {
        let predictions = classifier.predict(g)?;
        for (node, &pred) in g.nodes.iter().zip(&predictions) {
            if let Some(actual) = node.label {
                cm.add_indices(pred, actual.index());
            }
        }
    }
    Ok(EvalReport::from_confusion(cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::HashEmbedder;
    use crate::graph::{build_graph, Label};
    use crate::pretrain::pretrain;
    use crate::synth::{apply_labels, generate_building, inject_errors, BuildingSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn eq8_trajectory_matches_hand_computation() {
        // Constant error 0.5 at alpha 0.1: 1 -> 1.05 -> 1.1025 -> 1.157625.
        let mut w = ClassWeights::new(0.1);
        let rates = [0.5; NUM_CLASSES];
        let expected = [1.05, 1.1025, 1.157625];
        for e in expected {
            w.raw_update(&rates);
            for v in w.w {
                assert_abs_diff_eq!(v, e, epsilon = 1e-15);
            }
        }
        // Zero error is a fixed point.
        let mut w = ClassWeights::new(0.1);
        w.raw_update(&[0.0; NUM_CLASSES]);
        assert_eq!(w.w, [1.0; NUM_CLASSES]);
    }

    #[test]
    fn normalization_restores_mean_one_and_clips() {
        let mut w = ClassWeights::new(0.1);
        w.w = [100.0, 1.0, 1.0, 1.0];
        w.normalize_and_clip();
        let mean: f64 = w.w.iter().sum::<f64>() / 4.0;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        let min = w.w.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(w.w.iter().all(|&v| v <= 10.0 * min + 1e-12));
    }

    #[test]
    fn weight_scaling_preserves_argmin_of_weighted_ce() {
        // On fixed logits, scaling all class weights by a positive constant
        // must not change which logit row assignment minimizes the loss.
        let logits = ndarray::array![[2.0, -1.0, 0.5, 0.0], [0.1, 0.2, 0.3, -0.5]];
        let weights = [1.0, 2.0, 0.5, 1.5];
        let scaled: Vec<f64> = weights.iter().map(|w| w * 7.3).collect();
        for label in 0..NUM_CLASSES {
            let argmin = |ws: &[f64]| {
                let mut best = (f64::INFINITY, 0);
                for candidate in 0..NUM_CLASSES {
                    let mut tape = Tape::new();
                    let l = tape.leaf(logits.clone());
                    let loss = tape.weighted_cross_entropy(l, &[0, 1], &[label, candidate], ws);
                    let v = tape.value(loss)[(0, 0)];
                    if v < best.0 {
                        best = (v, candidate);
                    }
                }
                best.1
            };
            assert_eq!(argmin(&weights.to_vec()), argmin(&scaled));
        }
    }

    fn labeled_graphs(mode: GraphMode, storeys: usize) -> Vec<BimGraph> {
        let spec = BuildingSpec {
            bays: 2,
            spans: 1,
            storeys,
            mep_runs: 2,
            seed: 7,
            ..BuildingSpec::default()
        };
        let floors = generate_building(&spec).unwrap();
        let (errored, labels, _) = inject_errors(&floors, 0.3, 5, 0.3).unwrap();
        errored
            .iter()
            .map(|f| {
                let mut g = build_graph(f, 0.3, mode, &HashEmbedder).unwrap();
                apply_labels(&mut g, &labels).unwrap();
                g
            })
            .collect()
    }

    fn tiny_cfg(mode: GraphMode) -> RunConfig {
        RunConfig {
            mode,
            hidden_dim: 8,
            heads_hidden: 2,
            heads_out: 1,
            classifier_hidden_dim: 16,
            lr_grid: vec![0.01],
            batch_grid: vec![2],
            max_epochs: 2,
            transfer_max_epochs: 40,
            transfer_patience: 300,
            transfer_lr: 0.01,
            ..RunConfig::default()
        }
    }

    #[test]
    fn baseline_classifier_learns_beyond_trivial() {
        let graphs = labeled_graphs(GraphMode::Heterogeneous, 3);
        assert!(graphs.len() >= 3);
        let cfg = tiny_cfg(GraphMode::Heterogeneous);
        let out = train_transfer(
            TransferStrategy::NoneMlp,
            None,
            &[&graphs[0], &graphs[1]],
            &[&graphs[2]],
            &cfg,
        )
        .unwrap();
        assert!(!out.history.is_empty());
        assert!(out.history.iter().all(|h| h.train_loss.is_finite()));
        // Loss must drop from the randomly initialized head.
        let first = out.history.first().unwrap().train_loss;
        let last = out.history.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");

        let report = evaluate(&out.classifier, &[&graphs[2]]).unwrap();
        assert_eq!(report.nodes_evaluated, graphs[2].nodes.len());
    }

    #[test]
    fn frozen_strategies_keep_encoder_bit_identical() {
        let graphs = labeled_graphs(GraphMode::Heterogeneous, 3);
        let cfg = tiny_cfg(GraphMode::Heterogeneous);
        let clean: Vec<BimGraph> = {
            let spec = BuildingSpec { bays: 1, spans: 1, storeys: 2, mep_runs: 1, seed: 3,
                ..BuildingSpec::default() };
            generate_building(&spec)
                .unwrap()
                .iter()
                .map(|f| build_graph(f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap())
                .collect()
        };
        let refs: Vec<&BimGraph> = clean.iter().collect();
        let ckpt = pretrain(&refs, &cfg).unwrap().checkpoint;

        let cfg_fast = RunConfig { transfer_max_epochs: 3, ..cfg.clone() };
        let out = train_transfer(
            TransferStrategy::FeatExtractMlp,
            Some(&ckpt),
            &[&graphs[0], &graphs[1]],
            &[&graphs[2]],
            &cfg_fast,
        )
        .unwrap();
        for (name, value) in ckpt.params.iter() {
            if name.starts_with("enc.") {
                assert_eq!(out.classifier.params.get(name), value, "{name} changed");
            }
        }
    }

    #[test]
    fn fine_tuning_updates_encoder_parameters() {
        let graphs = labeled_graphs(GraphMode::Heterogeneous, 3);
        let cfg = tiny_cfg(GraphMode::Heterogeneous);
        let clean: Vec<BimGraph> = {
            let spec = BuildingSpec { bays: 1, spans: 1, storeys: 2, mep_runs: 1, seed: 3,
                ..BuildingSpec::default() };
            generate_building(&spec)
                .unwrap()
                .iter()
                .map(|f| build_graph(f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap())
                .collect()
        };
        let refs: Vec<&BimGraph> = clean.iter().collect();
        let ckpt = pretrain(&refs, &cfg).unwrap().checkpoint;

        let cfg_fast = RunConfig { transfer_max_epochs: 3, ..cfg.clone() };
        let out = train_transfer(
            TransferStrategy::FineTuneMlp,
            Some(&ckpt),
            &[&graphs[0], &graphs[1]],
            &[&graphs[2]],
            &cfg_fast,
        )
        .unwrap();
        let moved = ckpt
            .params
            .iter()
            .filter(|(name, _)| name.starts_with("enc.") && !name.starts_with("enc.mask"))
            .any(|(name, value)| out.classifier.params.get(name) != value);
        assert!(moved, "fine-tuning left every encoder parameter untouched");
    }

    #[test]
    fn checkpoint_strategy_mismatch_is_an_error() {
        let graphs = labeled_graphs(GraphMode::Heterogeneous, 3);
        let cfg = tiny_cfg(GraphMode::Heterogeneous);
        let err = train_transfer(
            TransferStrategy::FeatExtractMlp,
            None,
            &[&graphs[0]],
            &[&graphs[1]],
            &cfg,
        );
        assert!(err.is_err());
    }

    #[test]
    fn classifier_round_trips_and_predicts_consistently() {
        let graphs = labeled_graphs(GraphMode::Heterogeneous, 3);
        let cfg = RunConfig { transfer_max_epochs: 3, ..tiny_cfg(GraphMode::Heterogeneous) };
        let out = train_transfer(
            TransferStrategy::NoneGat,
            None,
            &[&graphs[0], &graphs[1]],
            &[&graphs[2]],
            &cfg,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.bin");
        out.classifier.save(&path).unwrap();
        let back = Classifier::load(&path).unwrap();
        assert_eq!(back.params, out.classifier.params);
        assert_eq!(
            back.predict(&graphs[2]).unwrap(),
            out.classifier.predict(&graphs[2]).unwrap()
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in TransferStrategy::ALL {
            assert_eq!(TransferStrategy::parse(s.name()).unwrap(), s);
        }
        assert!(TransferStrategy::parse("bogus").is_err());
    }

    #[test]
    fn all_correct_labels_converge_to_correct_class() {
        // Degenerate labels: every node marked correct; the classifier must
        // learn the constant prediction and average_f1 reports 0.
        let spec = BuildingSpec { bays: 1, spans: 1, storeys: 3, mep_runs: 1, seed: 11,
            ..BuildingSpec::default() };
        let floors = generate_building(&spec).unwrap();
        let graphs: Vec<BimGraph> = floors
            .iter()
            .map(|f| {
                let mut g =
                    build_graph(f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
                for n in g.nodes.iter_mut() {
                    n.label = Some(Label::Correct);
                }
                g
            })
            .collect();
        let cfg = RunConfig { transfer_max_epochs: 150, ..tiny_cfg(GraphMode::Heterogeneous) };
        let out = train_transfer(
            TransferStrategy::NoneMlp,
            None,
            &[&graphs[0], &graphs[1]],
            &[&graphs[2]],
            &cfg,
        )
        .unwrap();
        let report = evaluate(&out.classifier, &[&graphs[2]]).unwrap();
        assert_eq!(report.average_f1, 0.0);
        assert!(report.accuracy > 0.9, "accuracy {}", report.accuracy);
    }
}
