//! Spatial relationship discovery: derive bounding boxes, find component
//! pairs within the radius, and print the five-part descriptor (category,
//! angle, spatial direction vector, signed distance, horizontal angle).
//!
//! Run with: cargo run --example spatial_relationships

use bignet::bim::{derive_aabb, BimComponent, FloorModel, Positioning, ShapeClass, StructuralPurpose};
use bignet::spatial::find_spatial_pairs;

fn component(id: &str, positioning: Positioning, dims: [f64; 3]) -> BimComponent {
    BimComponent {
        id: id.into(),
        category: "generic".into(),
        family_name: "Fam".into(),
        family_symbol_name: "Sym".into(),
        shape_class: ShapeClass::Cuboid,
        dims,
        structural_purpose: StructuralPurpose::NonStructural,
        positioning,
        offsets: [0.0, 0.0],
        level_id: "L1".into(),
        aabb: None,
    }
}

fn main() {
    let floor = FloorModel {
        level_id: "L1".into(),
        components: vec![
            // Two parallel ducts 0.2 m apart.
            component(
                "duct-a",
                Positioning::Line { p0: [0.0, 0.0, 2.6], p1: [3.0, 0.0, 2.6] },
                [3000.0, 250.0, 250.0],
            ),
            component(
                "duct-b",
                Positioning::Line { p0: [0.0, 0.45, 2.6], p1: [3.0, 0.45, 2.6] },
                [3000.0, 250.0, 250.0],
            ),
            // A fitting next to duct-a's end.
            component(
                "fitting-1",
                Positioning::Point { p: [3.2, 0.0, 2.6] },
                [200.0, 200.0, 200.0],
            ),
            // Far away: should not appear at radius 0.3.
            component(
                "column-far",
                Positioning::Point { p: [8.0, 8.0, 0.0] },
                [400.0, 400.0, 3000.0],
            ),
        ],
        relations: Vec::new(),
    };

    for c in &floor.components {
        let b = derive_aabb(c);
        println!(
            "{:<12} box ({:.2}, {:.2}, {:.2}) .. ({:.2}, {:.2}, {:.2})",
            c.id, b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
        );
    }

    println!("\npairs within 0.3 m:");
    for pair in find_spatial_pairs(&floor, 0.3) {
        let d = &pair.descriptor;
        println!(
            "  {} <-> {}: category {:?}, angle {:.3} rad, sdv ({:.3}, {:.3}, {:.3}), \
             signed distance {:.3} m, horizontal angle {:.3} rad",
            pair.a_id, pair.b_id, d.category, d.angle, d.sdv[0], d.sdv[1], d.sdv[2],
            d.signed_distance, d.horizontal_angle
        );
    }
}
