//! Parse a BIM-lite document and assemble the attributed graph for one floor:
//! semantic nodes for components, topological nodes for declared relations,
//! spatial nodes for discovered proximity pairs.
//!
//! Run with: cargo run --example bimlite_to_graph

use bignet::embedder::HashEmbedder;
use bignet::graph::{build_graph, GraphMode, NodeSource};

const DOC: &str = r#"{
  "bimlite_version": "1",
  "floors": [
    {
      "level_id": "L1",
      "components": [
        {
          "id": "wall-1", "category": "wall",
          "family_name": "Basic Wall", "family_symbol_name": "Architectural Wall_200",
          "shape_class": "cuboid", "dims": [4000.0, 200.0, 3000.0],
          "structural_purpose": "non_structural",
          "positioning": { "kind": "line", "p0": [0.0, 0.0, 0.0], "p1": [4.0, 0.0, 0.0] },
          "offsets": [0.0, 0.0], "level_id": "L1"
        },
        {
          "id": "column-1", "category": "column",
          "family_name": "Rect Column", "family_symbol_name": "Column_400x400",
          "shape_class": "cuboid", "dims": [400.0, 400.0, 3000.0],
          "structural_purpose": "structural",
          "positioning": { "kind": "point", "p": [0.0, 0.0, 0.0] },
          "offsets": [0.0, 0.0], "level_id": "L1"
        },
        {
          "id": "duct-1", "category": "duct",
          "family_name": "Round Duct", "family_symbol_name": "Duct_250",
          "shape_class": "cylinder", "dims": [3000.0, 250.0, 250.0],
          "structural_purpose": "non_structural",
          "positioning": { "kind": "line", "p0": [0.1, 0.3, 2.6], "p1": [3.1, 0.3, 2.6] },
          "offsets": [0.0, 0.0], "level_id": "L1"
        }
      ],
      "relations": [
        { "kind": "connection", "a_id": "wall-1", "b_id": "column-1" }
      ]
    }
  ]
}"#;

fn main() -> bignet::Result<()> {
    let floors = bignet::bim::parse_model(DOC)?;
    let floor = &floors[0];
    println!(
        "parsed floor {}: {} components, {} declared relations",
        floor.level_id,
        floor.components.len(),
        floor.relations.len()
    );

    for mode in [GraphMode::Heterogeneous, GraphMode::Homogeneous] {
        let g = build_graph(floor, 0.5, mode, &HashEmbedder)?;
        println!("\n{mode:?} graph: {} nodes, {} edges", g.nodes.len(), g.edges.len());
        for (i, node) in g.nodes.iter().enumerate() {
            let source = match &node.source {
                NodeSource::Component(id) => id.clone(),
                NodeSource::Pair(a, b) => format!("({a}, {b})"),
            };
            println!(
                "  node {i}: {:?} width {:3}  <- {source}",
                node.node_type,
                node.feature.values.len()
            );
        }
        for (a, b) in &g.edges {
            println!("  edge {a} -> {b}");
        }
    }
    Ok(())
}
