//! Self-supervised pretraining: mask node features, encode, decode K
//! independently re-masked views against the original inputs, and predict
//! latent targets produced by an EMA copy of the encoder and projector.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{BignetError, Result};
use crate::features::{HOMOGENEOUS_DIM, SEMANTIC_DIM, SPATIAL_DIM, TOPOLOGICAL_DIM};
use crate::graph::{BimGraph, GraphMode, NodeType};
use crate::nn::gat::{
    init_mlp, init_typed_gat, mlp_forward, typed_gat_forward, Arcs, MlpConfig, TypedArcs,
    TypedGatConfig,
};
use crate::nn::optim::{cosine_lr_scale, ema_update, Adam};
use crate::nn::params::{Binder, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::{gat_forward, init_gat, GatConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const HETERO_IN_DIMS: [usize; 3] = [SEMANTIC_DIM, TOPOLOGICAL_DIM, SPATIAL_DIM];

/// Per-type masking rates plus the multi-view re-mask settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub mode: GraphMode,
    pub rate_homogeneous: f64,
    pub rate_semantic: f64,
    pub rate_topological: f64,
    pub rate_spatial: f64,
    pub remask_views: usize,
    pub remask_rate: f64,
}

impl MaskPlan {
    pub fn from_config(cfg: &RunConfig) -> Self {
        MaskPlan {
            mode: cfg.mode,
            rate_homogeneous: cfg.mask_rate_homogeneous,
            rate_semantic: cfg.mask_rate_semantic,
            rate_topological: cfg.mask_rate_topological,
            rate_spatial: cfg.mask_rate_spatial,
            remask_views: cfg.remask_views,
            remask_rate: cfg.remask_rate,
        }
    }

    pub fn rate_for(&self, t: NodeType) -> f64 {
        match self.mode {
            GraphMode::Homogeneous => self.rate_homogeneous,
            GraphMode::Heterogeneous => match t {
                NodeType::Semantic => self.rate_semantic,
                NodeType::Topological => self.rate_topological,
                NodeType::Spatial => self.rate_spatial,
            },
        }
    }
}

/// The sampled mask set, indexed both globally and per node type (local
/// indices follow ascending global order, matching `features_of_type`).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub global: Vec<bool>,
    pub per_type: [Vec<bool>; 3],
}

impl MaskSet {
    pub fn masked_count(&self) -> usize {
        self.global.iter().filter(|m| **m).count()
    }
}

/// Independent Bernoulli draws per node at the plan's per-type rate. For a
/// non-empty graph the mask set is forced non-empty: if nothing was drawn,
/// one random node is masked.
pub fn mask_graph(g: &BimGraph, plan: &MaskPlan, rng: &mut ChaCha8Rng) -> MaskSet {
    let n = g.nodes.len();
    let mut global = Vec::with_capacity(n);
    for node in &g.nodes {
        global.push(rng.gen_bool(plan.rate_for(node.node_type)));
    }
    if n > 0 && !global.iter().any(|m| *m) {
        global[rng.gen_range(0..n)] = true;
    }
    let mut per_type: [Vec<bool>; 3] = Default::default();
    for (node, &m) in g.nodes.iter().zip(&global) {
        per_type[node.node_type.index()].push(m);
    }
    MaskSet { global, per_type }
}

/// Eq. 2 termwise: sum over views and masked rows of `(1 - cos)^gamma`,
/// divided by the masked-row count (not by the view count). The cosine of a
/// zero-norm row is defined as 0.
pub fn input_reconstruction_loss(
    x: &Array2<f64>,
    views: &[Array2<f64>],
    masked_rows: &[usize],
    gamma: f64,
) -> f64 {
    if masked_rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for z in views {
        for &r in masked_rows {
            total += (1.0 - safe_cosine(x, z, r)).powf(gamma);
        }
    }
    total / masked_rows.len() as f64
}

/// Eq. 4 termwise: mean over rows of `1 - cos(z_row, target_row)`.
pub fn latent_prediction_loss(z: &Array2<f64>, target: &Array2<f64>, rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter()
        .map(|&r| 1.0 - safe_cosine(z, target, r))
        .sum::<f64>()
        / rows.len() as f64
}

fn safe_cosine(a: &Array2<f64>, b: &Array2<f64>, r: usize) -> f64 {
    let x = a.row(r);
    let y = b.row(r);
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if nx < 1e-12 || ny < 1e-12 {
        0.0
    } else {
        x.dot(&y) / (nx * ny)
    }
}

/// Online parameters (encoder, decoder, projector, mask tokens) plus the
/// EMA target copy of the encoder and projector.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub mode: GraphMode,
    pub hidden_dim: usize,
    pub heads_hidden: usize,
    pub heads_out: usize,
    pub online: ParamStore,
    pub target: ParamStore,
}

impl ModelState {
    pub fn init(cfg: &RunConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut online = ParamStore::new();
        match cfg.mode {
            GraphMode::Heterogeneous => {
                let enc = Self::enc_cfg_hetero(cfg);
                let dec = Self::dec_cfg_hetero(cfg);
                init_typed_gat(&mut online, "enc", &enc, &mut rng);
                for (t, w) in HETERO_IN_DIMS.iter().enumerate() {
                    online.init_xavier(&format!("enc.mask.t{t}"), 1, *w, &mut rng);
                }
                init_typed_gat(&mut online, "dec", &dec, &mut rng);
            }
            GraphMode::Homogeneous => {
                init_gat(&mut online, "enc", &Self::enc_cfg_homo(cfg), &mut rng);
                online.init_xavier("enc.mask", 1, HOMOGENEOUS_DIM, &mut rng);
                init_gat(&mut online, "dec", &Self::dec_cfg_homo(cfg), &mut rng);
            }
        }
        online.init_xavier("dec.mask", 1, cfg.hidden_dim, &mut rng);
        init_mlp(&mut online, "proj", &Self::proj_cfg(cfg), &mut rng);

        // The target generator starts as an exact copy of encoder+projector.
        let mut target = ParamStore::new();
        for (name, value) in online.iter() {
            if name.starts_with("enc.") || name.starts_with("proj.") {
                target.insert(name, value.clone());
            }
        }
        ModelState {
            mode: cfg.mode,
            hidden_dim: cfg.hidden_dim,
            heads_hidden: cfg.heads_hidden,
            heads_out: cfg.heads_out,
            online,
            target,
        }
    }

    pub fn enc_cfg_hetero(cfg: &RunConfig) -> TypedGatConfig {
        TypedGatConfig {
            heads_hidden: cfg.heads_hidden,
            heads_out: cfg.heads_out,
            ..TypedGatConfig::new(HETERO_IN_DIMS, cfg.hidden_dim, [cfg.hidden_dim; 3])
        }
    }

    pub fn dec_cfg_hetero(cfg: &RunConfig) -> TypedGatConfig {
        TypedGatConfig {
            heads_hidden: cfg.heads_hidden,
            heads_out: cfg.heads_out,
            ..TypedGatConfig::new([cfg.hidden_dim; 3], cfg.hidden_dim, HETERO_IN_DIMS)
        }
    }

    pub fn enc_cfg_homo(cfg: &RunConfig) -> GatConfig {
        GatConfig {
            heads_hidden: cfg.heads_hidden,
            heads_out: cfg.heads_out,
            ..GatConfig::new(HOMOGENEOUS_DIM, cfg.hidden_dim, cfg.hidden_dim)
        }
    }

    pub fn dec_cfg_homo(cfg: &RunConfig) -> GatConfig {
        GatConfig {
            heads_hidden: cfg.heads_hidden,
            heads_out: cfg.heads_out,
            ..GatConfig::new(cfg.hidden_dim, cfg.hidden_dim, HOMOGENEOUS_DIM)
        }
    }

    pub fn proj_cfg(cfg: &RunConfig) -> MlpConfig {
        MlpConfig {
            dims: vec![cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim],
        }
    }
}

/// Dense per-graph tensors shared across epochs.
pub struct GraphTensors {
    pub mode: GraphMode,
    pub n_nodes: usize,
    /// Heterogeneous: arc structure, per-type feature matrices, and the
    /// global node index of each per-type row.
    pub typed: Option<(TypedArcs, [Array2<f64>; 3], [Vec<usize>; 3])>,
    pub homo: Option<(Arcs, Array2<f64>)>,
}

impl GraphTensors {
    pub fn new(g: &BimGraph) -> Result<Self> {
        match g.mode {
            GraphMode::Heterogeneous => {
                let arcs = TypedArcs::from_graph(g)?;
                let mut feats: [Array2<f64>; 3] = std::array::from_fn(|t| {
                    Array2::zeros((0, NodeType::from_index(t as u8).unwrap().hetero_width()))
                });
                let mut globals: [Vec<usize>; 3] = Default::default();
                for (t, width) in HETERO_IN_DIMS.iter().enumerate() {
                    let (ids, rows) =
                        g.features_of_type(NodeType::from_index(t as u8).unwrap());
                    feats[t] = rows_to_array(&rows, *width);
                    globals[t] = ids;
                }
                Ok(GraphTensors {
                    mode: g.mode,
                    n_nodes: g.nodes.len(),
                    typed: Some((arcs, feats, globals)),
                    homo: None,
                })
            }
            GraphMode::Homogeneous => {
                let arcs = Arcs::from_edges(g.nodes.len(), &g.edges)?;
                let rows: Vec<Vec<f64>> =
                    g.nodes.iter().map(|n| n.feature.values.clone()).collect();
                Ok(GraphTensors {
                    mode: g.mode,
                    n_nodes: g.nodes.len(),
                    typed: None,
                    homo: Some((arcs, rows_to_array(&rows, HOMOGENEOUS_DIM))),
                })
            }
        }
    }
}

fn rows_to_array(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        debug_assert_eq!(r.len(), width);
        for (j, &v) in r.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

struct StepLoss {
    loss: Var,
    l_input: f64,
    l_latent: f64,
}

/// Forward pass of one pretraining step on one graph, recorded on `tape`.
fn pretrain_step_loss(
    state: &ModelState,
    cfg: &RunConfig,
    tensors: &GraphTensors,
    mask: &MaskSet,
    tape: &mut Tape,
    binder: &mut Binder,
    rng: &mut ChaCha8Rng,
) -> Result<StepLoss> {
    let masked_total = mask.masked_count();
    if masked_total == 0 {
        return Err(BignetError::Training("empty mask set".into()));
    }
    let inv_mask = 1.0 / masked_total as f64;

    match tensors.mode {
        GraphMode::Heterogeneous => {
            let (arcs, feats, _globals) = tensors.typed.as_ref().unwrap();
            let enc_cfg = ModelState::enc_cfg_hetero(cfg);
            let dec_cfg = ModelState::dec_cfg_hetero(cfg);

            // Constant latent targets from the EMA generator on the
            // unmasked graph (separate tape; no gradients flow into it).
            let targets: [Array2<f64>; 3] = {
                let mut t_tape = Tape::new();
                let mut t_binder = Binder::new();
                let xs: [Var; 3] = std::array::from_fn(|t| t_tape.leaf(feats[t].clone()));
                let hs = typed_gat_forward(
                    &mut t_tape, &mut t_binder, &state.target, "enc", &enc_cfg, xs, arcs,
                );
                std::array::from_fn(|t| {
                    let z = mlp_forward(
                        &mut t_tape,
                        &mut t_binder,
                        &state.target,
                        "proj",
                        &ModelState::proj_cfg(cfg),
                        hs[t],
                    );
                    t_tape.value(z).clone()
                })
            };

            // Online encoder on the masked graph.
            let xs_masked: [Var; 3] = std::array::from_fn(|t| {
                let x = tape.leaf(feats[t].clone());
                let token = binder.bind(tape, &state.online, &format!("enc.mask.t{t}"));
                tape.mask_rows(x, token, &mask.per_type[t])
            });
            let hs = typed_gat_forward(tape, binder, &state.online, "enc", &enc_cfg, xs_masked, arcs);

            // K re-masked decoding views against the original inputs.
            let mut loss_terms: Vec<Var> = Vec::new();
            let dec_token = binder.bind(tape, &state.online, "dec.mask");
            for _ in 0..cfg.remask_views {
                let remask: Vec<bool> = (0..tensors.n_nodes)
                    .map(|_| rng.gen_bool(cfg.remask_rate))
                    .collect();
                let mut per_type_remask: [Vec<bool>; 3] = Default::default();
                {
                    let arcs_ref = arcs;
                    for (g_idx, &m) in remask.iter().enumerate() {
                        let (t, _) = arcs_ref.type_local[g_idx];
                        per_type_remask[t].push(m);
                    }
                }
                let hs_remasked: [Var; 3] = std::array::from_fn(|t| {
                    tape.mask_rows(hs[t], dec_token, &per_type_remask[t])
                });
                let decoded =
                    typed_gat_forward(tape, binder, &state.online, "dec", &dec_cfg, hs_remasked, arcs);
                for t in 0..3 {
                    let masked_locals: Vec<usize> = mask.per_type[t]
                        .iter()
                        .enumerate()
                        .filter_map(|(i, m)| m.then_some(i))
                        .collect();
                    if masked_locals.is_empty() {
                        continue;
                    }
                    loss_terms.push(tape.cosine_loss_rows_gamma(
                        decoded[t],
                        &feats[t],
                        &masked_locals,
                        inv_mask,
                        cfg.gamma,
                    ));
                }
            }
            let l_input = sum_vars(tape, &loss_terms);

            // Latent prediction loss against the EMA targets.
            let mut latent_terms = Vec::new();
            for t in 0..3 {
                let rows: Vec<usize> = if cfg.latent_loss_masked_only {
                    mask.per_type[t]
                        .iter()
                        .enumerate()
                        .filter_map(|(i, m)| m.then_some(i))
                        .collect()
                } else {
                    (0..arcs.counts[t]).collect()
                };
                if rows.is_empty() {
                    continue;
                }
                let z = mlp_forward(
                    tape,
                    binder,
                    &state.online,
                    "proj",
                    &ModelState::proj_cfg(cfg),
                    hs[t],
                );
                let denom = if cfg.latent_loss_masked_only {
                    masked_total
                } else {
                    tensors.n_nodes
                };
                latent_terms.push(tape.cosine_loss_rows(z, &targets[t], &rows, 1.0 / denom as f64));
            }
            let l_latent = sum_vars(tape, &latent_terms);
            let loss = tape.add(l_input, l_latent);
            Ok(StepLoss {
                loss,
                l_input: tape.value(l_input)[(0, 0)],
                l_latent: tape.value(l_latent)[(0, 0)],
            })
        }
        GraphMode::Homogeneous => {
            let (arcs, x) = tensors.homo.as_ref().unwrap();
            let enc_cfg = ModelState::enc_cfg_homo(cfg);
            let dec_cfg = ModelState::dec_cfg_homo(cfg);

            let target = {
                let mut t_tape = Tape::new();
                let mut t_binder = Binder::new();
                let xv = t_tape.leaf(x.clone());
                let h = gat_forward(&mut t_tape, &mut t_binder, &state.target, "enc", &enc_cfg, xv, arcs);
                let z = mlp_forward(
                    &mut t_tape,
                    &mut t_binder,
                    &state.target,
                    "proj",
                    &ModelState::proj_cfg(cfg),
                    h,
                );
                t_tape.value(z).clone()
            };

            let xv = tape.leaf(x.clone());
            let token = binder.bind(tape, &state.online, "enc.mask");
            let x_masked = tape.mask_rows(xv, token, &mask.global);
            let h = gat_forward(tape, binder, &state.online, "enc", &enc_cfg, x_masked, arcs);

            let masked_rows: Vec<usize> = mask
                .global
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.then_some(i))
                .collect();
            let dec_token = binder.bind(tape, &state.online, "dec.mask");
            let mut loss_terms = Vec::new();
            for _ in 0..cfg.remask_views {
                let remask: Vec<bool> = (0..tensors.n_nodes)
                    .map(|_| rng.gen_bool(cfg.remask_rate))
                    .collect();
                let h_remasked = tape.mask_rows(h, dec_token, &remask);
                let decoded =
                    gat_forward(tape, binder, &state.online, "dec", &dec_cfg, h_remasked, arcs);
                loss_terms.push(tape.cosine_loss_rows_gamma(
                    decoded, x, &masked_rows, inv_mask, cfg.gamma,
                ));
            }
            let l_input = sum_vars(tape, &loss_terms);

            let rows: Vec<usize> = if cfg.latent_loss_masked_only {
                masked_rows.clone()
            } else {
                (0..tensors.n_nodes).collect()
            };
            let z = mlp_forward(
                tape,
                binder,
                &state.online,
                "proj",
                &ModelState::proj_cfg(cfg),
                h,
            );
            let l_latent = tape.cosine_loss_rows(z, &target, &rows, 1.0 / rows.len() as f64);
            let loss = tape.add(l_input, l_latent);
            Ok(StepLoss {
                loss,
                l_input: tape.value(l_input)[(0, 0)],
                l_latent: tape.value(l_latent)[(0, 0)],
            })
        }
    }
}

fn sum_vars(tape: &mut Tape, terms: &[Var]) -> Var {
    match terms {
        [] => tape.leaf(Array2::zeros((1, 1))),
        [first, rest @ ..] => {
            let mut acc = *first;
            for t in rest {
                acc = tape.add(acc, *t);
            }
            acc
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub l_input: f64,
    pub l_latent: f64,
    pub lr_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub lr: f64,
    pub batch_size: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub mode: GraphMode,
    pub hidden_dim: usize,
    pub heads_hidden: usize,
    pub heads_out: usize,
    pub best_epoch: usize,
    pub val_loss: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// The full run configuration in its own key=value format.
    pub config_echo: String,
}

/// A trained model: metadata line plus the parameter archive.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
}

impl Checkpoint {
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
            .ok_or_else(|| BignetError::Format("checkpoint missing metadata line".into()))?;
        let meta: CheckpointMeta = serde_json::from_slice(&raw[..newline])?;
        if meta.version != CHECKPOINT_VERSION {
            return Err(BignetError::Format(format!(
                "unsupported checkpoint version {}",
                meta.version
            )));
        }
        let params = ParamStore::from_bytes(&raw[newline + 1..])?;
        Ok(Checkpoint { meta, params })
    }

    /// Reconstruct the run configuration this checkpoint was trained with.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for line in self.meta.config_echo.lines() {
            if let Some((k, v)) = line.split_once('=') {
                cfg.set(k.trim(), v.trim())?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    /// History of the winning grid point.
    pub history: Vec<EpochStats>,
    pub grid: Vec<GridResult>,
}

/// Grid search over learning rate x batch size, each trained with early
/// stopping on a held-out validation subset of the pretraining graphs; the
/// grid point with the lowest validation loss wins.
pub fn pretrain(graphs: &[&BimGraph], cfg: &RunConfig) -> Result<PretrainOutcome> {
    if graphs.len() < 2 {
        return Err(BignetError::Training(
            "pretraining needs at least 2 graphs (1 held out for validation)".into(),
        ));
    }
    for g in graphs {
        if g.mode != cfg.mode {
            return Err(BignetError::Training(format!(
                "graph mode {:?} does not match config mode {:?}",
                g.mode, cfg.mode
            )));
        }
    }
    let tensors: Vec<GraphTensors> = graphs
        .iter()
        .map(|g| GraphTensors::new(g))
        .collect::<Result<_>>()?;
    let n_val = (graphs.len() / 5).max(1);
    let (train_t, val_t) = tensors.split_at(tensors.len() - n_val);

    let mut best: Option<(f64, Checkpoint, Vec<EpochStats>)> = None;
    let mut grid = Vec::new();
    for (gi, (&lr, &batch)) in cfg
        .lr_grid
        .iter()
        .flat_map(|lr| cfg.batch_grid.iter().map(move |b| (lr, b)))
        .enumerate()
    {
        let (result, ckpt, history) =
            pretrain_single(train_t, val_t, cfg, lr, batch, cfg.seed.wrapping_add(gi as u64))?;
        let better = best
            .as_ref()
            .map_or(true, |(b, _, _)| result.best_val_loss < *b);
        if better {
            best = Some((result.best_val_loss, ckpt, history));
        }
        grid.push(result);
    }
    let (_, checkpoint, history) = best.unwrap();
    Ok(PretrainOutcome {
        checkpoint,
        history,
        grid,
    })
}

fn pretrain_single(
    train: &[GraphTensors],
    val: &[GraphTensors],
    cfg: &RunConfig,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(GridResult, Checkpoint, Vec<EpochStats>)> {
    let plan = MaskPlan::from_config(cfg);
    let mut state = ModelState::init(cfg, seed);
    let mut opt = Adam::new(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Option<ParamStore> = None;
    let mut since_improvement = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let lr_scale = cosine_lr_scale(epoch, cfg.max_epochs);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_input = 0.0;
        let mut epoch_latent = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut batch_grads: indexmap::IndexMap<String, Array2<f64>> =
                indexmap::IndexMap::new();
            for &gi in chunk {
                let t = &train[gi];
                let mask = mask_bimgraph_tensors(t, &plan, &mut rng);
                let mut tape = Tape::new();
                let mut binder = Binder::new();
                let step =
                    pretrain_step_loss(&state, cfg, t, &mask, &mut tape, &mut binder, &mut rng)?;
                let loss_value = tape.value(step.loss)[(0, 0)];
                if !loss_value.is_finite() {
                    return Err(BignetError::Training(format!(
                        "non-finite pretraining loss {loss_value} at epoch {epoch}"
                    )));
                }
                epoch_loss += loss_value;
                epoch_input += step.l_input;
                epoch_latent += step.l_latent;
                let grads = tape.backward(step.loss)?;
                for (name, g) in binder.collect(&grads) {
                    let scaled = g / chunk.len() as f64;
                    batch_grads
                        .entry(name)
                        .and_modify(|acc| *acc += &scaled)
                        .or_insert(scaled);
                }
            }
            opt.step(&mut state.online, &batch_grads, lr_scale);
            ema_update(&mut state.target, &state.online, cfg.ema_tau);
        }
        let n_train = train.len() as f64;

        // Deterministic validation masking so plateau detection compares
        // like with like across epochs.
        let mut val_loss = 0.0;
        for (vi, t) in val.iter().enumerate() {
            let mut vrng = ChaCha8Rng::seed_from_u64(seed ^ val_seed_mix(vi));
            let mask = mask_bimgraph_tensors(t, &plan, &mut vrng);
            let mut tape = Tape::new();
            let mut binder = Binder::new();
            let step =
                pretrain_step_loss(&state, cfg, t, &mask, &mut tape, &mut binder, &mut vrng)?;
            val_loss += tape.value(step.loss)[(0, 0)];
        }
        val_loss /= val.len() as f64;
        if !val_loss.is_finite() {
            return Err(BignetError::Training(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }

        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n_train,
            val_loss,
            l_input: epoch_input / n_train,
            l_latent: epoch_latent / n_train,
            lr_scale,
        });

        if val_loss < best_val - 1e-12 {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = Some(state.online.clone());
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let params = best_params.unwrap_or_else(|| state.online.clone());
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        mode: cfg.mode,
        hidden_dim: cfg.hidden_dim,
        heads_hidden: cfg.heads_hidden,
        heads_out: cfg.heads_out,
        best_epoch,
        val_loss: best_val,
        lr,
        batch_size,
        config_echo: cfg.to_key_values(),
    };
    Ok((
        GridResult {
            lr,
            batch_size,
            best_val_loss: best_val,
            best_epoch,
            epochs_run,
            stopped_early,
        },
        Checkpoint {
            meta,
            params,
        },
        history,
    ))
}

// Seed-mixing helper for per-validation-graph rngs.
fn val_seed_mix(vi: usize) -> u64 {
    0x51_7c_c1_b7_27_22_0a_95u64.wrapping_mul(vi as u64 + 1)
}

fn mask_bimgraph_tensors(
    tensors: &GraphTensors,
    plan: &MaskPlan,
    rng: &mut ChaCha8Rng,
) -> MaskSet {
    // Rebuild the per-node type sequence from the tensors (global order).
    match tensors.mode {
        GraphMode::Heterogeneous => {
            let (arcs, _, _) = tensors.typed.as_ref().unwrap();
            let mut global = Vec::with_capacity(tensors.n_nodes);
            for g_idx in 0..tensors.n_nodes {
                let (t, _) = arcs.type_local[g_idx];
                let rate = plan.rate_for(NodeType::from_index(t as u8).unwrap());
                global.push(rng.gen_bool(rate));
            }
            if tensors.n_nodes > 0 && !global.iter().any(|m| *m) {
                global[rng.gen_range(0..tensors.n_nodes)] = true;
            }
            let mut per_type: [Vec<bool>; 3] = Default::default();
            for (g_idx, &m) in global.iter().enumerate() {
                let (t, _) = arcs.type_local[g_idx];
                per_type[t].push(m);
            }
            MaskSet { global, per_type }
        }
        GraphMode::Homogeneous => {
            let mut global: Vec<bool> = (0..tensors.n_nodes)
                .map(|_| rng.gen_bool(plan.rate_homogeneous))
                .collect();
            if tensors.n_nodes > 0 && !global.iter().any(|m| *m) {
                global[rng.gen_range(0..tensors.n_nodes)] = true;
            }
            MaskSet {
                per_type: [global.clone(), Vec::new(), Vec::new()],
                global,
            }
        }
    }
}

/// Per-node representations from a trained encoder on an unmasked graph,
/// in global node order. Only the encoder parameters are used; the decoder
/// and projector are ignored.
pub fn embed(g: &BimGraph, ckpt: &Checkpoint) -> Result<Array2<f64>> {
    if g.mode != ckpt.meta.mode {
        return Err(BignetError::Training(format!(
            "graph mode {:?} does not match checkpoint mode {:?}",
            g.mode, ckpt.meta.mode
        )));
    }
    let cfg = ckpt.config()?;
    let tensors = GraphTensors::new(g)?;
    embed_tensors(&tensors, &ckpt.params, &cfg)
}

pub fn embed_tensors(
    tensors: &GraphTensors,
    params: &ParamStore,
    cfg: &RunConfig,
) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let mut binder = Binder::new();
    match tensors.mode {
        GraphMode::Heterogeneous => {
            let (arcs, feats, globals) = tensors.typed.as_ref().unwrap();
            let enc_cfg = ModelState::enc_cfg_hetero(cfg);
            let xs: [Var; 3] = std::array::from_fn(|t| tape.leaf(feats[t].clone()));
            let hs = typed_gat_forward(&mut tape, &mut binder, params, "enc", &enc_cfg, xs, arcs);
            let mut out = Array2::zeros((tensors.n_nodes, cfg.hidden_dim));
            for t in 0..3 {
                let h = tape.value(hs[t]);
                for (local, &global) in globals[t].iter().enumerate() {
                    out.row_mut(global).assign(&h.row(local));
                }
            }
            Ok(out)
        }
        GraphMode::Homogeneous => {
            let (arcs, x) = tensors.homo.as_ref().unwrap();
            let enc_cfg = ModelState::enc_cfg_homo(cfg);
            let xv = tape.leaf(x.clone());
            let h = gat_forward(&mut tape, &mut binder, params, "enc", &enc_cfg, xv, arcs);
            Ok(tape.value(h).clone())
        }
    }
}

/// Loss-history CSV (one row per epoch).
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,l_input,l_latent,lr_scale\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_loss, h.l_input, h.l_latent, h.lr_scale
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::HashEmbedder;
    use crate::graph::build_graph;
    use crate::synth::{generate_building, BuildingSpec};
    use approx::assert_abs_diff_eq;

    fn tiny_graphs(mode: GraphMode, storeys: usize) -> Vec<BimGraph> {
        let spec = BuildingSpec {
            bays: 1,
            spans: 1,
            storeys,
            mep_runs: 1,
            seed: 3,
            ..BuildingSpec::default()
        };
        generate_building(&spec)
            .unwrap()
            .iter()
            .map(|f| build_graph(f, 0.3, mode, &HashEmbedder).unwrap())
            .collect()
    }

    fn tiny_config(mode: GraphMode) -> RunConfig {
        RunConfig {
            mode,
            hidden_dim: 8,
            heads_hidden: 2,
            heads_out: 1,
            lr_grid: vec![0.01],
            batch_grid: vec![2],
            max_epochs: 3,
            patience: 300,
            ..RunConfig::default()
        }
    }

    #[test]
    fn mask_sampling_is_deterministic_and_nonempty() {
        let g = &tiny_graphs(GraphMode::Heterogeneous, 1)[0];
        let plan = MaskPlan::from_config(&RunConfig::default());
        let a = mask_graph(g, &plan, &mut ChaCha8Rng::seed_from_u64(5));
        let b = mask_graph(g, &plan, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.masked_count() > 0);
        assert_eq!(a.global.len(), g.nodes.len());
        let per_type_total: usize = a.per_type.iter().map(|v| v.len()).sum();
        assert_eq!(per_type_total, g.nodes.len());
    }

    #[test]
    fn input_loss_matches_termwise_oracle_through_the_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
        let views: Vec<Array2<f64>> = (0..3)
            .map(|_| Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let masked = vec![1, 3, 4];
        let oracle = input_reconstruction_loss(&x, &views, &masked, 1.0);

        // Same quantity assembled from tape ops, as the training loop does.
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for v in &views {
            let pred = tape.leaf(v.clone());
            terms.push(tape.cosine_loss_rows(pred, &x, &masked, 1.0 / masked.len() as f64));
        }
        let total = sum_vars(&mut tape, &terms);
        assert_abs_diff_eq!(tape.value(total)[(0, 0)], oracle, epsilon = 1e-12);
        assert!(oracle >= 0.0);
    }

    #[test]
    fn input_loss_trivial_cases() {
        let x = ndarray::array![[1.0, 0.0], [0.0, 2.0]];
        // Views equal to x -> 0.
        let views = vec![x.clone(), x.clone(), x.clone()];
        assert_abs_diff_eq!(input_reconstruction_loss(&x, &views, &[0, 1], 1.0), 0.0);
        // Single masked node, 3 orthogonal views -> 3.
        let ortho = ndarray::array![[0.0, 5.0], [0.0, 2.0]];
        let views = vec![ortho.clone(), ortho.clone(), ortho.clone()];
        assert_abs_diff_eq!(
            input_reconstruction_loss(&x, &views, &[0], 1.0),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn latent_loss_trivial_cases() {
        let t = ndarray::array![[1.0, 2.0], [0.5, -0.5], [3.0, 0.0]];
        let rows = [0, 1, 2];
        assert_abs_diff_eq!(latent_prediction_loss(&t, &t, &rows), 0.0, epsilon = 1e-12);
        let neg = &t * -1.0;
        assert_abs_diff_eq!(latent_prediction_loss(&neg, &t, &rows), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pretrain_runs_and_embeds_heterogeneous() {
        let graphs = tiny_graphs(GraphMode::Heterogeneous, 2);
        assert!(graphs.len() >= 2);
        let refs: Vec<&BimGraph> = graphs.iter().collect();
        let cfg = tiny_config(GraphMode::Heterogeneous);
        let out = pretrain(&refs, &cfg).unwrap();
        assert_eq!(out.history.len(), 3);
        assert!(out.history.iter().all(|h| h.train_loss.is_finite()));
        assert_eq!(out.grid.len(), 1);

        let h = embed(&graphs[0], &out.checkpoint).unwrap();
        assert_eq!(h.dim(), (graphs[0].nodes.len(), cfg.hidden_dim));
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pretrain_runs_homogeneous() {
        let graphs = tiny_graphs(GraphMode::Homogeneous, 2);
        let refs: Vec<&BimGraph> = graphs.iter().collect();
        let cfg = tiny_config(GraphMode::Homogeneous);
        let out = pretrain(&refs, &cfg).unwrap();
        let h = embed(&graphs[0], &out.checkpoint).unwrap();
        assert_eq!(h.dim(), (graphs[0].nodes.len(), cfg.hidden_dim));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let graphs = tiny_graphs(GraphMode::Heterogeneous, 2);
        let refs: Vec<&BimGraph> = graphs.iter().collect();
        let cfg = RunConfig {
            lr_grid: vec![0.0],
            max_epochs: 2,
            ..tiny_config(GraphMode::Heterogeneous)
        };
        let out = pretrain(&refs, &cfg).unwrap();
        let initial = ModelState::init(&cfg, cfg.seed).online;
        assert_eq!(out.checkpoint.params, initial);
    }

    #[test]
    fn plateau_triggers_early_stopping() {
        let graphs = tiny_graphs(GraphMode::Heterogeneous, 2);
        let refs: Vec<&BimGraph> = graphs.iter().collect();
        let cfg = RunConfig {
            lr_grid: vec![0.0], // loss frozen -> validation never improves
            max_epochs: 100,
            patience: 4,
            ..tiny_config(GraphMode::Heterogeneous)
        };
        let out = pretrain(&refs, &cfg).unwrap();
        assert!(out.grid[0].stopped_early);
        assert_eq!(out.grid[0].epochs_run, 1 + 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let graphs = tiny_graphs(GraphMode::Heterogeneous, 2);
        let refs: Vec<&BimGraph> = graphs.iter().collect();
        let cfg = RunConfig { max_epochs: 1, ..tiny_config(GraphMode::Heterogeneous) };
        let out = pretrain(&refs, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        out.checkpoint.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params, out.checkpoint.params);
        assert_eq!(back.meta.hidden_dim, cfg.hidden_dim);
        assert_eq!(back.config().unwrap().hidden_dim, cfg.hidden_dim);
    }
}
