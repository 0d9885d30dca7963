//! Graph attention layers: a homogeneous 2-layer GAT, a typed variant with
//! per-arc-category parameters for the bipartite hetero graph, and a plain
//! MLP head. All forward passes are recorded on a [`Tape`] so gradients come
//! from the same reverse sweep the finite-difference tests validate.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{BignetError, Result};
use crate::graph::{BimGraph, NodeType};
use crate::nn::params::{Binder, ParamStore};
use crate::nn::tape::{Tape, Var};

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.2;

/// Directed arc list over a homogeneous graph, including self-loops.
#[derive(Debug, Clone)]
pub struct Arcs {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub n_nodes: usize,
}

impl Arcs {
    /// Expand undirected edges into both directions and add one self-loop
    /// per node, so every node attends over a non-empty neighbourhood.
    pub fn from_edges(n_nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut src = Vec::with_capacity(edges.len() * 2 + n_nodes);
        let mut dst = Vec::with_capacity(src.capacity());
        for &(a, b) in edges {
            let (a, b) = (a as usize, b as usize);
            if a >= n_nodes || b >= n_nodes {
                return Err(BignetError::Validation("edge endpoint out of range".into()));
            }
            src.push(a);
            dst.push(b);
            src.push(b);
            dst.push(a);
        }
        for i in 0..n_nodes {
            src.push(i);
            dst.push(i);
        }
        Ok(Arcs { src, dst, n_nodes })
    }
}

#[derive(Debug, Clone)]
pub struct GatConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub heads_hidden: usize,
    pub heads_out: usize,
    pub layers: usize,
    pub negative_slope: f64,
}

impl GatConfig {
    pub fn new(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        GatConfig {
            in_dim,
            hidden_dim,
            out_dim,
            heads_hidden: 4,
            heads_out: 1,
            layers: 2,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
        }
    }

    fn layer_shape(&self, layer: usize) -> (usize, usize, usize) {
        assert!(layer < self.layers);
        let in_dim = if layer == 0 {
            self.in_dim
        } else {
            self.hidden_dim * self.heads_hidden
        };
        if layer + 1 == self.layers {
            (in_dim, self.out_dim, self.heads_out)
        } else {
            (in_dim, self.hidden_dim, self.heads_hidden)
        }
    }
}

pub fn init_gat(store: &mut ParamStore, prefix: &str, cfg: &GatConfig, rng: &mut ChaCha8Rng) {
    for l in 0..cfg.layers {
        let (in_dim, out_dim, heads) = cfg.layer_shape(l);
        for h in 0..heads {
            store.init_xavier(&format!("{prefix}.l{l}.h{h}.w"), in_dim, out_dim, rng);
            store.init_xavier(&format!("{prefix}.l{l}.h{h}.a_src"), out_dim, 1, rng);
            store.init_xavier(&format!("{prefix}.l{l}.h{h}.a_dst"), out_dim, 1, rng);
        }
        if l + 1 < cfg.layers {
            store.init_const(&format!("{prefix}.l{l}.alpha"), 1, 1, 0.25);
        }
    }
}

/// One attention head over an arc list: project, score arcs with the usual
/// `leakyrelu(a_src . Wh_u + a_dst . Wh_v)`, softmax per destination, and
/// aggregate messages.
pub fn gat_head(
    tape: &mut Tape,
    x: Var,
    arcs: &Arcs,
    w: Var,
    a_src: Var,
    a_dst: Var,
    negative_slope: f64,
) -> Var {
    let projected = tape.matmul(x, w);
    let score_src = tape.matmul(projected, a_src);
    let score_dst = tape.matmul(projected, a_dst);
    let s = tape.gather_rows(score_src, &arcs.src);
    let d = tape.gather_rows(score_dst, &arcs.dst);
    let raw = tape.add(s, d);
    let logits = tape.leaky_relu(raw, negative_slope);
    let alpha = tape.edge_softmax(logits, &arcs.dst);
    let messages = tape.gather_rows(projected, &arcs.src);
    let weighted = tape.mul_col(messages, alpha);
    tape.scatter_add_rows(weighted, &arcs.dst, arcs.n_nodes)
}

/// Full homogeneous GAT stack: hidden layers concatenate their heads and pass
/// through PReLU; the final layer averages its heads with no nonlinearity.
pub fn gat_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    cfg: &GatConfig,
    x: Var,
    arcs: &Arcs,
) -> Var {
    let mut h = x;
    for l in 0..cfg.layers {
        let (_, _, heads) = cfg.layer_shape(l);
        let mut outputs = Vec::with_capacity(heads);
        for head in 0..heads {
            let w = binder.bind(tape, store, &format!("{prefix}.l{l}.h{head}.w"));
            let a_src = binder.bind(tape, store, &format!("{prefix}.l{l}.h{head}.a_src"));
            let a_dst = binder.bind(tape, store, &format!("{prefix}.l{l}.h{head}.a_dst"));
            outputs.push(gat_head(tape, h, arcs, w, a_src, a_dst, cfg.negative_slope));
        }
        let last = l + 1 == cfg.layers;
        h = if last {
            tape.mean_vars(&outputs)
        } else {
            let cat = tape.concat_cols(&outputs);
            let alpha = binder.bind(tape, store, &format!("{prefix}.l{l}.alpha"));
            tape.prelu(cat, alpha)
        };
    }
    h
}

/// The seven arc categories of the typed network: semantic <-> topological,
/// semantic <-> spatial, and one self-loop category per node type. Relation
/// nodes never connect to each other, so no relation-relation categories
/// exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    SemToTop,
    TopToSem,
    SemToSp,
    SpToSem,
    SelfSem,
    SelfTop,
    SelfSp,
}

impl ArcKind {
    pub const ALL: [ArcKind; 7] = [
        ArcKind::SemToTop,
        ArcKind::TopToSem,
        ArcKind::SemToSp,
        ArcKind::SpToSem,
        ArcKind::SelfSem,
        ArcKind::SelfTop,
        ArcKind::SelfSp,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ArcKind::SemToTop => "sem_to_top",
            ArcKind::TopToSem => "top_to_sem",
            ArcKind::SemToSp => "sem_to_sp",
            ArcKind::SpToSem => "sp_to_sem",
            ArcKind::SelfSem => "self_sem",
            ArcKind::SelfTop => "self_top",
            ArcKind::SelfSp => "self_sp",
        }
    }

    pub fn src_type(self) -> NodeType {
        match self {
            ArcKind::SemToTop | ArcKind::SemToSp | ArcKind::SelfSem => NodeType::Semantic,
            ArcKind::TopToSem | ArcKind::SelfTop => NodeType::Topological,
            ArcKind::SpToSem | ArcKind::SelfSp => NodeType::Spatial,
        }
    }

    pub fn dst_type(self) -> NodeType {
        match self {
            ArcKind::TopToSem | ArcKind::SpToSem | ArcKind::SelfSem => NodeType::Semantic,
            ArcKind::SemToTop | ArcKind::SelfTop => NodeType::Topological,
            ArcKind::SemToSp | ArcKind::SelfSp => NodeType::Spatial,
        }
    }

    pub fn self_kind(t: NodeType) -> ArcKind {
        match t {
            NodeType::Semantic => ArcKind::SelfSem,
            NodeType::Topological => ArcKind::SelfTop,
            NodeType::Spatial => ArcKind::SelfSp,
        }
    }
}

/// Arc structure of a heterogeneous graph, with nodes re-indexed per type
/// (locals follow ascending global node index, matching
/// `BimGraph::features_of_type`).
#[derive(Debug, Clone)]
pub struct TypedArcs {
    pub counts: [usize; 3],
    /// global node index -> (type index, local index)
    pub type_local: Vec<(usize, usize)>,
    /// per kind: (src local, dst local, dst global)
    pub arcs: [Vec<(usize, usize, usize)>; 7],
    pub n_nodes: usize,
}

impl TypedArcs {
    pub fn from_graph(graph: &BimGraph) -> Result<Self> {
        let n = graph.nodes.len();
        let mut counts = [0usize; 3];
        let mut type_local = Vec::with_capacity(n);
        for node in &graph.nodes {
            let t = node.node_type.index();
            type_local.push((t, counts[t]));
            counts[t] += 1;
        }
        let mut arcs: [Vec<(usize, usize, usize)>; 7] = Default::default();
        let mut push = |kind: ArcKind, src: usize, dst: usize, tl: &[(usize, usize)]| {
            arcs[kind.index()].push((tl[src].1, tl[dst].1, dst));
        };
        for &(a, b) in &graph.edges {
            let (a, b) = (a as usize, b as usize);
            let (sem, rel) = if graph.nodes[a].node_type == NodeType::Semantic {
                (a, b)
            } else {
                (b, a)
            };
            match graph.nodes[rel].node_type {
                NodeType::Topological => {
                    push(ArcKind::SemToTop, sem, rel, &type_local);
                    push(ArcKind::TopToSem, rel, sem, &type_local);
                }
                NodeType::Spatial => {
                    push(ArcKind::SemToSp, sem, rel, &type_local);
                    push(ArcKind::SpToSem, rel, sem, &type_local);
                }
                NodeType::Semantic => {
                    return Err(BignetError::Validation(
                        "edge joins two semantic nodes".into(),
                    ))
                }
            }
        }
        for (i, node) in graph.nodes.iter().enumerate() {
            push(ArcKind::self_kind(node.node_type), i, i, &type_local);
        }
        Ok(TypedArcs {
            counts,
            type_local,
            arcs,
            n_nodes: n,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TypedGatConfig {
    pub in_dims: [usize; 3],
    pub hidden_dim: usize,
    pub out_dims: [usize; 3],
    pub heads_hidden: usize,
    pub heads_out: usize,
    pub layers: usize,
    pub negative_slope: f64,
}

impl TypedGatConfig {
    pub fn new(in_dims: [usize; 3], hidden_dim: usize, out_dims: [usize; 3]) -> Self {
        TypedGatConfig {
            in_dims,
            hidden_dim,
            out_dims,
            heads_hidden: 4,
            heads_out: 1,
            layers: 2,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
        }
    }

    /// (per-type input widths, per-type output widths, heads) of one layer.
    fn layer_shape(&self, layer: usize) -> ([usize; 3], [usize; 3], usize) {
        assert!(layer < self.layers);
        let ins = if layer == 0 {
            self.in_dims
        } else {
            [self.hidden_dim * self.heads_hidden; 3]
        };
        if layer + 1 == self.layers {
            (ins, self.out_dims, self.heads_out)
        } else {
            (ins, [self.hidden_dim; 3], self.heads_hidden)
        }
    }
}

pub fn init_typed_gat(
    store: &mut ParamStore,
    prefix: &str,
    cfg: &TypedGatConfig,
    rng: &mut ChaCha8Rng,
) {
    for l in 0..cfg.layers {
        let (ins, outs, heads) = cfg.layer_shape(l);
        for h in 0..heads {
            for kind in ArcKind::ALL {
                let in_dim = ins[kind.src_type().index()];
                let out_dim = outs[kind.dst_type().index()];
                let base = format!("{prefix}.l{l}.h{h}.{}", kind.name());
                store.init_xavier(&format!("{base}.w"), in_dim, out_dim, rng);
                store.init_xavier(&format!("{base}.a_src"), out_dim, 1, rng);
                store.init_xavier(&format!("{base}.a_dst"), out_dim, 1, rng);
            }
        }
        if l + 1 < cfg.layers {
            for t in 0..3 {
                store.init_const(&format!("{prefix}.l{l}.t{t}.alpha"), 1, 1, 0.25);
            }
        }
    }
}

/// One typed attention head. Attention is computed jointly: logits from
/// every arc category feeding a node compete in a single softmax over that
/// node's incoming arcs. The destination half of each score uses the
/// destination's self-loop projection, so a node presents the same
/// "query" to every category.
#[allow(clippy::too_many_arguments)]
fn typed_gat_head(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    base: &str,
    xs: &[Var; 3],
    arcs: &TypedArcs,
    outs: [usize; 3],
    negative_slope: f64,
) -> [Var; 3] {
    // Self-loop projections double as destination queries for attention.
    let self_proj: [Var; 3] = std::array::from_fn(|t| {
        let kind = ArcKind::self_kind(NodeType::from_index(t as u8).unwrap());
        let w = binder.bind(tape, store, &format!("{base}.{}.w", kind.name()));
        tape.matmul(xs[t], w)
    });

    let mut logit_parts = Vec::new();
    let mut dst_globals = Vec::new();
    let mut message_parts: Vec<(ArcKind, Var)> = Vec::new();
    for kind in ArcKind::ALL {
        let kind_arcs = &arcs.arcs[kind.index()];
        if kind_arcs.is_empty() {
            continue;
        }
        let st = kind.src_type().index();
        let dt = kind.dst_type().index();
        let projected = if kind == ArcKind::self_kind(kind.src_type()) {
            self_proj[st]
        } else {
            let w = binder.bind(tape, store, &format!("{base}.{}.w", kind.name()));
            tape.matmul(xs[st], w)
        };
        let a_src = binder.bind(tape, store, &format!("{base}.{}.a_src", kind.name()));
        let a_dst = binder.bind(tape, store, &format!("{base}.{}.a_dst", kind.name()));
        let score_src = tape.matmul(projected, a_src);
        let score_dst = tape.matmul(self_proj[dt], a_dst);
        let src_locals: Vec<usize> = kind_arcs.iter().map(|a| a.0).collect();
        let dst_locals: Vec<usize> = kind_arcs.iter().map(|a| a.1).collect();
        let s = tape.gather_rows(score_src, &src_locals);
        let d = tape.gather_rows(score_dst, &dst_locals);
        let raw = tape.add(s, d);
        logit_parts.push(tape.leaky_relu(raw, negative_slope));
        dst_globals.extend(kind_arcs.iter().map(|a| a.2));
        let m = tape.gather_rows(projected, &src_locals);
        message_parts.push((kind, m));
    }

    let logits = tape.concat_rows(&logit_parts);
    let alpha = tape.edge_softmax(logits, &dst_globals);

    let mut per_type: [Option<Var>; 3] = [None, None, None];
    let mut offset = 0;
    for (kind, messages) in message_parts {
        let kind_arcs = &arcs.arcs[kind.index()];
        let alpha_k = tape.slice_rows(alpha, offset, kind_arcs.len());
        offset += kind_arcs.len();
        let weighted = tape.mul_col(messages, alpha_k);
        let dst_locals: Vec<usize> = kind_arcs.iter().map(|a| a.1).collect();
        let dt = kind.dst_type().index();
        let agg = tape.scatter_add_rows(weighted, &dst_locals, arcs.counts[dt]);
        per_type[dt] = Some(match per_type[dt] {
            Some(acc) => tape.add(acc, agg),
            None => agg,
        });
    }
    std::array::from_fn(|t| {
        per_type[t].unwrap_or_else(|| tape.leaf(Array2::zeros((arcs.counts[t], outs[t]))))
    })
}

/// Typed GAT stack mirroring [`gat_forward`], with per-type features in and
/// out.
pub fn typed_gat_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    cfg: &TypedGatConfig,
    xs: [Var; 3],
    arcs: &TypedArcs,
) -> [Var; 3] {
    let mut hs = xs;
    for l in 0..cfg.layers {
        let (_, outs, heads) = cfg.layer_shape(l);
        let mut head_outputs: Vec<[Var; 3]> = Vec::with_capacity(heads);
        for h in 0..heads {
            let base = format!("{prefix}.l{l}.h{h}");
            head_outputs.push(typed_gat_head(
                tape,
                binder,
                store,
                &base,
                &hs,
                arcs,
                outs,
                cfg.negative_slope,
            ));
        }
        let last = l + 1 == cfg.layers;
        hs = std::array::from_fn(|t| {
            let per_head: Vec<Var> = head_outputs.iter().map(|o| o[t]).collect();
            if last {
                tape.mean_vars(&per_head)
            } else {
                let cat = tape.concat_cols(&per_head);
                let alpha = binder.bind(tape, store, &format!("{prefix}.l{l}.t{t}.alpha"));
                tape.prelu(cat, alpha)
            }
        });
    }
    hs
}

#[derive(Debug, Clone)]
pub struct MlpConfig {
    /// Layer widths, input first: `[in, hidden..., out]`.
    pub dims: Vec<usize>,
}

pub fn init_mlp(store: &mut ParamStore, prefix: &str, cfg: &MlpConfig, rng: &mut ChaCha8Rng) {
    assert!(cfg.dims.len() >= 2, "MLP needs at least input and output dims");
    for l in 0..cfg.dims.len() - 1 {
        store.init_xavier(&format!("{prefix}.l{l}.w"), cfg.dims[l], cfg.dims[l + 1], rng);
        store.init_zeros(&format!("{prefix}.l{l}.b"), 1, cfg.dims[l + 1]);
        if l + 2 < cfg.dims.len() {
            store.init_const(&format!("{prefix}.l{l}.alpha"), 1, 1, 0.25);
        }
    }
}

pub fn mlp_forward(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    prefix: &str,
    cfg: &MlpConfig,
    x: Var,
) -> Var {
    let mut h = x;
    for l in 0..cfg.dims.len() - 1 {
        let w = binder.bind(tape, store, &format!("{prefix}.l{l}.w"));
        let b = binder.bind(tape, store, &format!("{prefix}.l{l}.b"));
        let z = tape.matmul(h, w);
        h = tape.add_bias(z, b);
        if l + 2 < cfg.dims.len() {
            let alpha = binder.bind(tape, store, &format!("{prefix}.l{l}.alpha"));
            h = tape.prelu(h, alpha);
        }
    }
    h
}
