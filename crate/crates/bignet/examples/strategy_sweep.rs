//! Compare the five transfer strategies on one small benchmark: feature
//! extraction (frozen pretrained encoder) with MLP and GAT heads, fine-tuning,
//! and the two no-pretrain baselines that consume raw node features.
//!
//! Run with: cargo run --release --example strategy_sweep

use bignet::config::RunConfig;
use bignet::embedder::HashEmbedder;
use bignet::graph::{build_graph, GraphDataset, GraphMode, Split};
use bignet::pretrain::pretrain;
use bignet::synth::{
    apply_labels, generate_building, inject_errors, make_splits, prefix_model_ids, BuildingSpec,
};
use bignet::transfer::{evaluate, train_transfer, TransferStrategy};

fn main() -> bignet::Result<()> {
    let mut floors = Vec::new();
    for seed in 0..6u64 {
        let spec = BuildingSpec {
            bays: 2,
            spans: 2,
            storeys: 2,
            seed,
            ..BuildingSpec::default()
        };
        let mut building = generate_building(&spec)?;
        prefix_model_ids(&mut building, &format!("B{seed}"));
        floors.extend(building);
    }
    let (clean, perturb) = floors.split_at(floors.len() / 2);
    let (errored, labels, _) = inject_errors(perturb, 0.3, 3, 0.3)?;

    let mut graphs = Vec::new();
    for floor in clean {
        graphs.push(build_graph(floor, 0.3, GraphMode::Heterogeneous, &HashEmbedder)?);
    }
    for floor in &errored {
        let mut g = build_graph(floor, 0.3, GraphMode::Heterogeneous, &HashEmbedder)?;
        apply_labels(&mut g, &labels)?;
        graphs.push(g);
    }
    let dataset = make_splits(GraphDataset::new(graphs), 0.3, 3)?;

    let cfg = RunConfig {
        hidden_dim: 32,
        heads_hidden: 2,
        lr_grid: vec![0.005],
        batch_grid: vec![4],
        max_epochs: 30,
        patience: 30,
        transfer_max_epochs: 200,
        transfer_patience: 80,
        classifier_hidden_dim: 32,
        ..RunConfig::default()
    };
    let checkpoint = pretrain(&dataset.of_split(Split::Pretrain), &cfg)?.checkpoint;

    println!("{:<18} {:>9} {:>11} {:>12}", "strategy", "accuracy", "average F1", "weighted F1");
    for strategy in TransferStrategy::ALL {
        let ckpt = strategy.uses_pretrained_encoder().then_some(&checkpoint);
        let outcome = train_transfer(
            strategy,
            ckpt,
            &dataset.of_split(Split::TransferTrain),
            &dataset.of_split(Split::TransferVal),
            &cfg,
        )?;
        let report = evaluate(&outcome.classifier, &dataset.of_split(Split::TransferTest))?;
        println!(
            "{:<18} {:>9.4} {:>11.4} {:>12.4}",
            strategy.name(),
            report.accuracy,
            report.average_f1,
            report.weighted_f1
        );
    }
    Ok(())
}
