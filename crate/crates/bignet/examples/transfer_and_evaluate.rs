//! End-to-end transfer learning: pretrain on clean graphs, inject labeled
//! errors into a second corpus, split it at the region level, train a
//! feature-extraction classifier on the frozen encoder's embeddings, and
//! evaluate with per-class precision / recall / F1.
//!
//! Run with: cargo run --release --example transfer_and_evaluate

use bignet::config::RunConfig;
use bignet::embedder::HashEmbedder;
use bignet::graph::{build_graph, GraphDataset, GraphMode, Split};
use bignet::pretrain::pretrain;
use bignet::synth::{
    apply_labels, generate_building, inject_errors, make_splits, prefix_model_ids, BuildingSpec,
};
use bignet::transfer::{evaluate, train_transfer, TransferStrategy};

fn main() -> bignet::Result<()> {
    // Corpus: front half stays clean for pretraining, back half gets errors.
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
        // Ids repeat across buildings; labels are keyed by id.
        prefix_model_ids(&mut building, &format!("B{seed}"));
        floors.extend(building);
    }
    let (clean, perturb) = floors.split_at(floors.len() / 2);
    let (errored, labels, _) = inject_errors(perturb, 0.3, 1, 0.3)?;

    let mut graphs = Vec::new();
    for floor in clean {
        graphs.push(build_graph(floor, 0.3, GraphMode::Heterogeneous, &HashEmbedder)?);
    }
    for floor in &errored {
        let mut g = build_graph(floor, 0.3, GraphMode::Heterogeneous, &HashEmbedder)?;
        apply_labels(&mut g, &labels)?;
        graphs.push(g);
    }
    let dataset = make_splits(GraphDataset::new(graphs), 0.3, 1)?;
    for split in [
        Split::Pretrain,
        Split::TransferTrain,
        Split::TransferVal,
        Split::TransferTest,
    ] {
        println!("{split:?}: {} graphs", dataset.of_split(split).len());
    }

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

    let outcome = train_transfer(
        TransferStrategy::FeatExtractGat,
        Some(&checkpoint),
        &dataset.of_split(Split::TransferTrain),
        &dataset.of_split(Split::TransferVal),
        &cfg,
    )?;
    println!(
        "\nfeat_extract_gat: best epoch {}, validation average F1 {:.4}",
        outcome.classifier.meta.best_epoch, outcome.classifier.meta.val_average_f1
    );

    let report = evaluate(&outcome.classifier, &dataset.of_split(Split::TransferTest))?;
    println!(
        "test: {} nodes, accuracy {:.4}, average F1 {:.4}, weighted F1 {:.4}",
        report.nodes_evaluated, report.accuracy, report.average_f1, report.weighted_f1
    );
    let names = ["correct", "semantic_conflict", "data_range_error", "topological_error"];
    for (name, m) in names.iter().zip(&report.per_class) {
        println!(
            "  {name:<18} precision {:.4}  recall {:.4}  f1 {:.4}  support {}",
            m.precision, m.recall, m.f1, m.support
        );
    }
    Ok(())
}
