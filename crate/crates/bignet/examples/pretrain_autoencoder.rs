//! Masked-graph-autoencoder pretraining on a small synthetic corpus: the
//! encoder sees graphs with masked node features, the decoder reconstructs
//! them under re-masking, and an EMA target network supervises the latent
//! prediction head. Uses a deliberately tiny configuration so it runs in
//! seconds.
//!
//! Run with: cargo run --release --example pretrain_autoencoder

use bignet::config::RunConfig;
use bignet::embedder::HashEmbedder;
use bignet::graph::{build_graph, BimGraph, GraphMode};
use bignet::pretrain::{embed, pretrain};
use bignet::synth::{generate_building, BuildingSpec};

fn main() -> bignet::Result<()> {
    let mut graphs = Vec::new();
    for seed in 0..4u64 {
        let spec = BuildingSpec {
            bays: 2,
            spans: 2,
            storeys: 2,
            seed,
            ..BuildingSpec::default()
        };
        for floor in generate_building(&spec)? {
            graphs.push(build_graph(&floor, 0.3, GraphMode::Heterogeneous, &HashEmbedder)?);
        }
    }
    let refs: Vec<&BimGraph> = graphs.iter().collect();
    println!(
        "corpus: {} graphs, {} nodes total",
        refs.len(),
        refs.iter().map(|g| g.nodes.len()).sum::<usize>()
    );

    let cfg = RunConfig {
        hidden_dim: 32,
        heads_hidden: 2,
        lr_grid: vec![0.003, 0.005],
        batch_grid: vec![4],
        max_epochs: 30,
        patience: 30,
        ..RunConfig::default()
    };
    let outcome = pretrain(&refs, &cfg)?;

    println!("\ngrid search:");
    for g in &outcome.grid {
        println!(
            "  lr {:<6} batch {:<3} -> best val loss {:.5} at epoch {} ({} epochs run)",
            g.lr, g.batch_size, g.best_val_loss, g.best_epoch, g.epochs_run
        );
    }
    let h = &outcome.history;
    println!(
        "\nwinning run: train loss {:.5} (epoch 1) -> {:.5} (epoch {})",
        h.first().unwrap().train_loss,
        h.last().unwrap().train_loss,
        h.len()
    );

    // Frozen-encoder embeddings for downstream transfer.
    let z = embed(refs[0], &outcome.checkpoint)?;
    println!(
        "embedding of graph 0: {} nodes x {} dims",
        z.nrows(),
        z.ncols()
    );
    Ok(())
}
