//! Neural building blocks: a reverse-mode tape over dense matrices, named
//! parameter stores with checkpointing, attention layers, and optimizers.

pub mod gat;
pub mod optim;
pub mod params;
pub mod tape;

pub use gat::{
    Arcs, ArcKind, GatConfig, MlpConfig, TypedArcs, TypedGatConfig, gat_forward, init_gat,
    init_mlp, init_typed_gat, mlp_forward, typed_gat_forward,
};
pub use optim::{Adam, cosine_lr_scale, ema_update};
pub use params::{Binder, ParamStore};
pub use tape::{Gradients, Tape, Var};
