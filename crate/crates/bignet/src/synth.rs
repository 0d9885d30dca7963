//! Parametric building generator and error injector: produces BIM-lite floor
//! models at desk scale and perturbs them with the three labeled error types
//! (semantic conflict, data range error, topological error).

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bim::{
    BimComponent, DeclaredRelation, FloorModel, Positioning, RelationKind, ShapeClass,
    StructuralPurpose,
};
use crate::error::{BignetError, Result};
use crate::graph::{BimGraph, GraphDataset, Label, NodeSource, NodeType, Split};

pub const DOOR_HEIGHT_MIN_MM: f64 = 2000.0; // 200 cm
pub const DOOR_HEIGHT_MAX_MM: f64 = 2400.0; // 240 cm

const WALL_FAMILY: (&str, &str) = ("Basic Wall", "Architectural Wall_200");
const BEAM_FAMILY: (&str, &str) = ("Structural Framing", "Beam_300x500");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingSpec {
    pub bays: usize,
    pub spans: usize,
    pub storeys: usize,
    pub bay_len_m: f64,
    pub span_len_m: f64,
    pub storey_height_m: f64,
    pub wall_density: f64,
    pub door_density: f64,
    pub window_density: f64,
    pub mep_runs: usize,
    pub fitting_spacing_m: f64,
    pub seed: u64,
}

impl Default for BuildingSpec {
    fn default() -> Self {
        BuildingSpec {
            bays: 4,
            spans: 3,
            storeys: 2,
            bay_len_m: 6.0,
            span_len_m: 5.0,
            storey_height_m: 3.5,
            wall_density: 0.6,
            door_density: 0.4,
            window_density: 0.3,
            mep_runs: 3,
            fitting_spacing_m: 3.0,
            seed: 0,
        }
    }
}

impl BuildingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bays < 1 || self.spans < 1 || self.storeys < 1 {
            return Err(BignetError::Validation("grid counts must be >= 1".into()));
        }
        for (name, d) in [
            ("wall_density", self.wall_density),
            ("door_density", self.door_density),
            ("window_density", self.window_density),
        ] {
            if !(0.0..=1.0).contains(&d) {
                return Err(BignetError::Validation(format!("{name} must be in [0,1]")));
            }
        }
        if self.bay_len_m <= 0.0 || self.span_len_m <= 0.0 || self.storey_height_m <= 0.0 {
            return Err(BignetError::Validation("grid lengths must be positive".into()));
        }
        if self.fitting_spacing_m <= 0.0 {
            return Err(BignetError::Validation("fitting_spacing_m must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let spec: BuildingSpec = serde_json::from_str(&raw)?;
        spec.validate()?;
        Ok(spec)
    }
}

struct FloorBuilder {
    floor: FloorModel,
}

impl FloorBuilder {
    fn push(&mut self, c: BimComponent) -> String {
        let id = c.id.clone();
        self.floor.components.push(c);
        id
    }

    fn relate(&mut self, kind: RelationKind, a: &str, b: &str) {
        self.floor.relations.push(DeclaredRelation {
            kind,
            a_id: a.to_string(),
            b_id: b.to_string(),
        });
    }
}

#[allow(clippy::too_many_arguments)]
fn component(
    id: String,
    category: &str,
    family: (&str, &str),
    shape: ShapeClass,
    dims: [f64; 3],
    purpose: StructuralPurpose,
    positioning: Positioning,
    level_id: &str,
) -> BimComponent {
    BimComponent {
        id,
        category: category.to_string(),
        family_name: family.0.to_string(),
        family_symbol_name: family.1.to_string(),
        shape_class: shape,
        dims,
        structural_purpose: purpose,
        positioning,
        offsets: [0.0, 0.0],
        level_id: level_id.to_string(),
        aabb: None,
    }
}

/// Prefix every level, component, and relation-endpoint id with `tag` so
/// models generated from different specs can share one corpus without id
/// collisions (label maps are keyed by id).
pub fn prefix_model_ids(floors: &mut [FloorModel], tag: &str) {
    for floor in floors.iter_mut() {
        floor.level_id = format!("{tag}/{}", floor.level_id);
        for c in floor.components.iter_mut() {
            c.id = format!("{tag}/{}", c.id);
            c.level_id = format!("{tag}/{}", c.level_id);
        }
        for r in floor.relations.iter_mut() {
            r.a_id = format!("{tag}/{}", r.a_id);
            r.b_id = format!("{tag}/{}", r.b_id);
        }
    }
}

/// Deterministically generate one building: a column/beam/slab frame per
/// storey with density-controlled walls, hosted doors/windows, and MEP runs
/// whose duct or pipe segments connect through fittings.
///
/// Component ids are globally unique across the whole building so labels can
/// be tracked through region partitioning.
pub fn generate_building(spec: &BuildingSpec) -> Result<Vec<FloorModel>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut floors = Vec::with_capacity(spec.storeys);

    for s in 0..spec.storeys {
        let level_id = format!("S{s}");
        let z0 = s as f64 * spec.storey_height_m;
        let z_top = z0 + spec.storey_height_m;
        let h_mm = spec.storey_height_m * 1000.0;
        let mut b = FloorBuilder {
            floor: FloorModel { level_id: level_id.clone(), components: Vec::new(), relations: Vec::new() },
        };

        // Slab covering the floor plate.
        let width = spec.bays as f64 * spec.bay_len_m;
        let depth = spec.spans as f64 * spec.span_len_m;
        let slab_id = b.push(component(
            format!("s{s}_slab"),
            "slab",
            ("Floor", "Concrete Slab_200"),
            ShapeClass::Cuboid,
            [(width + 0.4) * 1000.0, (depth + 0.4) * 1000.0, 200.0],
            StructuralPurpose::Structural,
            Positioning::Point { p: [width / 2.0, depth / 2.0, z0 - 0.1] },
            &level_id,
        ));

        // Columns at grid intersections.
        let mut column_ids = HashMap::new();
        for i in 0..=spec.bays {
            for j in 0..=spec.spans {
                let x = i as f64 * spec.bay_len_m;
                let y = j as f64 * spec.span_len_m;
                let id = b.push(component(
                    format!("s{s}_col_{i}_{j}"),
                    "column",
                    ("Concrete Column", "Column_400x400"),
                    ShapeClass::Cuboid,
                    [400.0, 400.0, h_mm],
                    StructuralPurpose::Structural,
                    Positioning::Point { p: [x, y, z0 + spec.storey_height_m / 2.0] },
                    &level_id,
                ));
                b.relate(RelationKind::TouchFloor, &id, &slab_id);
                column_ids.insert((i, j), id);
            }
        }

        // Beams along grid edges at the storey top, connected to their columns;
        // walls with doors/windows on a density-sampled subset of edges.
        let mut edges: Vec<((usize, usize), (usize, usize))> = Vec::new();
        for j in 0..=spec.spans {
            for i in 0..spec.bays {
                edges.push(((i, j), (i + 1, j)));
            }
        }
        for i in 0..=spec.bays {
            for j in 0..spec.spans {
                edges.push(((i, j), (i, j + 1)));
            }
        }

        for (e_idx, (ga, gb)) in edges.iter().enumerate() {
            let pa = [ga.0 as f64 * spec.bay_len_m, ga.1 as f64 * spec.span_len_m];
            let pb = [gb.0 as f64 * spec.bay_len_m, gb.1 as f64 * spec.span_len_m];
            let len_mm =
                (((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()) * 1000.0;

            let beam_id = b.push(component(
                format!("s{s}_beam_{e_idx}"),
                "beam",
                BEAM_FAMILY,
                ShapeClass::Cuboid,
                [len_mm, 300.0, 500.0],
                StructuralPurpose::Structural,
                Positioning::Line {
                    p0: [pa[0], pa[1], z_top - 0.25],
                    p1: [pb[0], pb[1], z_top - 0.25],
                },
                &level_id,
            ));
            b.relate(RelationKind::Connection, &beam_id, &column_ids[ga]);
            b.relate(RelationKind::Connection, &beam_id, &column_ids[gb]);

            if rng.gen_bool(spec.wall_density) {
                let wall_id = b.push(component(
                    format!("s{s}_wall_{e_idx}"),
                    "wall",
                    WALL_FAMILY,
                    ShapeClass::Cuboid,
                    [len_mm, 200.0, h_mm],
                    StructuralPurpose::NonStructural,
                    Positioning::Line {
                        p0: [pa[0], pa[1], z0 + spec.storey_height_m / 2.0],
                        p1: [pb[0], pb[1], z0 + spec.storey_height_m / 2.0],
                    },
                    &level_id,
                ));
                b.relate(RelationKind::TouchFloor, &wall_id, &slab_id);

                let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                if rng.gen_bool(spec.door_density) {
                    let door_h = rng.gen_range(DOOR_HEIGHT_MIN_MM..=DOOR_HEIGHT_MAX_MM);
                    let door_id = b.push(component(
                        format!("s{s}_door_{e_idx}"),
                        "door",
                        ("Door", "Single Door_900"),
                        ShapeClass::Cuboid,
                        [900.0, 200.0, door_h],
                        StructuralPurpose::NonStructural,
                        Positioning::Point { p: [mid[0], mid[1], z0 + door_h / 2000.0] },
                        &level_id,
                    ));
                    b.relate(RelationKind::Host, &door_id, &wall_id);
                } else if rng.gen_bool(spec.window_density) {
                    let win_id = b.push(component(
                        format!("s{s}_win_{e_idx}"),
                        "window",
                        ("Fixed Window", "Window_1200x1500"),
                        ShapeClass::Cuboid,
                        [1200.0, 200.0, 1500.0],
                        StructuralPurpose::NonStructural,
                        Positioning::Point { p: [mid[0], mid[1], z0 + 1.5] },
                        &level_id,
                    ));
                    b.relate(RelationKind::Host, &win_id, &wall_id);
                }
            }
        }

        // MEP runs: alternating duct/pipe segment chains joined by fittings.
        for run in 0..spec.mep_runs {
            let is_duct = run % 2 == 0;
            let (category, family, radius_mm) = if is_duct {
                ("duct", ("Exhaust Duct", "Duct_Galvanized Steel_150"), 75.0)
            } else {
                ("pipe", ("Supply Pipe", "Pipe_Copper_50"), 25.0)
            };
            let y = rng.gen_range(0.3..depth.max(0.6) - 0.29);
            let z = z0 + 2.5_f64.min(spec.storey_height_m - 0.3);
            let mut stations = Vec::new();
            let mut x = 0.2;
            while x < width - 0.1 {
                stations.push(x);
                x += spec.fitting_spacing_m;
            }
            stations.push(width - 0.1);

            let mut fitting_ids = Vec::new();
            for (k, &sx) in stations.iter().enumerate() {
                fitting_ids.push(b.push(component(
                    format!("s{s}_run{run}_fit{k}"),
                    "fitting",
                    ("Duct Fitting", "Elbow_150"),
                    ShapeClass::Irregular,
                    [150.0, 150.0, 150.0],
                    StructuralPurpose::NonStructural,
                    Positioning::Point { p: [sx, y, z] },
                    &level_id,
                )));
            }
            for k in 0..stations.len() - 1 {
                let seg_id = b.push(component(
                    format!("s{s}_run{run}_seg{k}"),
                    category,
                    family,
                    ShapeClass::Cylinder,
                    [(stations[k + 1] - stations[k]) * 1000.0, radius_mm, radius_mm],
                    StructuralPurpose::NonStructural,
                    Positioning::Line {
                        p0: [stations[k], y, z],
                        p1: [stations[k + 1], y, z],
                    },
                    &level_id,
                ));
                b.relate(RelationKind::Connection, &seg_id, &fitting_ids[k]);
                b.relate(RelationKind::Connection, &seg_id, &fitting_ids[k + 1]);
            }
        }

        b.floor.validate()?;
        floors.push(b.floor);
    }
    Ok(floors)
}

// ---------------------------------------------------------------------------
// Error injection
// ---------------------------------------------------------------------------

/// Labels produced by injection, keyed by component id or unordered id pair.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelMap {
    pub components: HashMap<String, Label>,
    pub pairs: HashMap<String, Label>,
}

impl LabelMap {
    fn pair_key(a: &str, b: &str) -> String {
        if a <= b {
            format!("{a}|{b}")
        } else {
            format!("{b}|{a}")
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub ids: Vec<String>,
    pub original: String,
    pub injected: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ErrorInjectionReport {
    pub semantic_conflicts: Vec<InjectionRecord>,
    pub data_range_errors: Vec<InjectionRecord>,
    pub topological_errors: Vec<InjectionRecord>,
    pub semantic_rate_achieved: f64,
    pub data_range_rate_achieved: f64,
    pub topological_rate_achieved: f64,
}

fn sample_count(eligible: usize, rate: f64) -> usize {
    ((eligible as f64) * rate).round() as usize
}

/// Independently sample `rate` of walls, doors, and MEP-fitting connections
/// and perturb them: wall families swapped to beam families, door heights
/// pushed outside the compliant range, connections removed with the fitting
/// displaced within the spatial radius so a spatial node replaces them.
pub fn inject_errors(
    models: &[FloorModel],
    rate: f64,
    seed: u64,
    spatial_radius_m: f64,
) -> Result<(Vec<FloorModel>, LabelMap, ErrorInjectionReport)> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(BignetError::Validation(format!(
            "injection rate {rate} outside (0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut models: Vec<FloorModel> = models.to_vec();
    let mut labels = LabelMap::default();
    let mut report = ErrorInjectionReport::default();

    // (floor index, component index) of eligible targets.
    let mut walls = Vec::new();
    let mut doors = Vec::new();
    let mut mep_connections = Vec::new();
    for (fi, floor) in models.iter().enumerate() {
        for (ci, c) in floor.components.iter().enumerate() {
            match c.category.as_str() {
                "wall" => walls.push((fi, ci)),
                "door" => doors.push((fi, ci)),
                _ => {}
            }
        }
        for (ri, r) in floor.relations.iter().enumerate() {
            if r.kind != RelationKind::Connection {
                continue;
            }
            let ca = floor.component(&r.a_id).map(|c| c.category.as_str());
            let cb = floor.component(&r.b_id).map(|c| c.category.as_str());
            let is_fitting = |c: Option<&str>| c == Some("fitting");
            let is_mep = |c: Option<&str>| matches!(c, Some("duct") | Some("pipe"));
            if (is_fitting(ca) && is_mep(cb)) || (is_mep(ca) && is_fitting(cb)) {
                mep_connections.push((fi, ri));
            }
        }
    }

    if walls.is_empty() || doors.is_empty() || mep_connections.is_empty() {
        log::warn!(
            "injection targets missing (walls={}, doors={}, mep connections={})",
            walls.len(),
            doors.len(),
            mep_connections.len()
        );
    }

    // Semantic conflicts: walls rebuilt with beam families.
    let n_walls = sample_count(walls.len(), rate);
    walls.shuffle(&mut rng);
    for &(fi, ci) in walls.iter().take(n_walls) {
        let c = &mut models[fi].components[ci];
        let original = format!("{}/{}", c.family_name, c.family_symbol_name);
        c.family_name = BEAM_FAMILY.0.to_string();
        c.family_symbol_name = BEAM_FAMILY.1.to_string();
        labels.components.insert(c.id.clone(), Label::SemanticConflict);
        report.semantic_conflicts.push(InjectionRecord {
            ids: vec![c.id.clone()],
            original,
            injected: format!("{}/{}", BEAM_FAMILY.0, BEAM_FAMILY.1),
        });
    }
    report.semantic_rate_achieved = ratio(n_walls, walls.len());

    // Data range errors: door heights outside [200, 240] cm but plausible.
    let n_doors = sample_count(doors.len(), rate);
    doors.shuffle(&mut rng);
    for &(fi, ci) in doors.iter().take(n_doors) {
        let c = &mut models[fi].components[ci];
        let original = format!("{}", c.dims[2]);
        let new_h = if rng.gen_bool(0.5) {
            rng.gen_range(1200.0..=1950.0)
        } else {
            rng.gen_range(2450.0..=3200.0)
        };
        c.dims[2] = new_h;
        labels.components.insert(c.id.clone(), Label::DataRangeError);
        report.data_range_errors.push(InjectionRecord {
            ids: vec![c.id.clone()],
            original,
            injected: format!("{new_h}"),
        });
    }
    report.data_range_rate_achieved = ratio(n_doors, doors.len());

    // Topological errors: drop the connection and nudge the fitting so a
    // spatial node replaces it in the rebuilt graph.
    let n_mep = sample_count(mep_connections.len(), rate);
    mep_connections.shuffle(&mut rng);
    let chosen: Vec<(usize, usize)> = mep_connections.iter().take(n_mep).copied().collect();
    // Remove by descending relation index per floor so indices stay valid.
    // BTreeMap: the RNG is consumed inside the loop, so iteration order must
    // be stable for injection to be reproducible.
    let mut by_floor: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &(fi, ri) in &chosen {
        by_floor.entry(fi).or_default().push(ri);
    }
    for (fi, mut ris) in by_floor {
        ris.sort_unstable_by(|a, b| b.cmp(a));
        for ri in ris {
            let rel = models[fi].relations.remove(ri);
            let fitting_id = {
                let floor = &models[fi];
                let ca = floor.component(&rel.a_id).map(|c| c.category.clone());
                if ca.as_deref() == Some("fitting") { rel.a_id.clone() } else { rel.b_id.clone() }
            };
            // Horizontal displacement with magnitude within the spatial radius
            // keeps the broken pair discoverable as a spatial relationship.
            let mag = rng.gen_range(spatial_radius_m * 0.2..=spatial_radius_m);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (mag * theta.cos(), mag * theta.sin());
            let floor = &mut models[fi];
            if let Some(c) = floor.components.iter_mut().find(|c| c.id == fitting_id) {
                if let Positioning::Point { p } = &mut c.positioning {
                    p[0] += dx;
                    p[1] += dy;
                }
            }
            labels
                .pairs
                .insert(LabelMap::pair_key(&rel.a_id, &rel.b_id), Label::TopologicalError);
            report.topological_errors.push(InjectionRecord {
                ids: vec![rel.a_id.clone(), rel.b_id.clone()],
                original: "connection".to_string(),
                injected: format!("removed; fitting displaced by {mag:.3} m"),
            });
        }
    }
    report.topological_rate_achieved = ratio(n_mep, mep_connections.len());

    Ok((models, labels, report))
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Overwrite node labels of a built graph from an injection label map.
/// Untouched nodes keep their `Correct` label.
pub fn apply_labels(graph: &mut BimGraph, labels: &LabelMap) -> Result<()> {
    for node in graph.nodes.iter_mut() {
        match &node.source {
            NodeSource::Component(id) => {
                if let Some(&label) = labels.components.get(id) {
                    if node.node_type != NodeType::Semantic {
                        return Err(BignetError::Validation(format!(
                            "component label {label:?} on non-semantic node {id}"
                        )));
                    }
                    node.label = Some(label);
                }
            }
            NodeSource::Pair(a, b) => {
                if let Some(&label) = labels.pairs.get(&LabelMap::pair_key(a, b)) {
                    // A labeled pair must have become a spatial node: its
                    // declared relation was removed by the injector.
                    if node.node_type != NodeType::Spatial {
                        return Err(BignetError::Validation(format!(
                            "pair label {label:?} on non-spatial node ({a}, {b})"
                        )));
                    }
                    node.label = Some(label);
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Region-level split: graphs carrying injected errors are divided into
/// transfer train/val/test (train and val each `transfer_fraction` of the
/// pool, test the remainder), clean graphs go to pretraining.
pub fn make_splits(
    mut dataset: GraphDataset,
    transfer_fraction: f64,
    seed: u64,
) -> Result<GraphDataset> {
    if dataset.graphs.is_empty() {
        return Err(BignetError::Validation("empty dataset".into()));
    }
    if !(transfer_fraction > 0.0 && transfer_fraction < 0.5) {
        return Err(BignetError::Validation(format!(
            "transfer_fraction {transfer_fraction} outside (0, 0.5)"
        )));
    }

    let mut transfer_pool: Vec<usize> = Vec::new();
    for (i, g) in dataset.graphs.iter().enumerate() {
        let has_errors = g
            .nodes
            .iter()
            .any(|n| n.label.is_some() && n.label != Some(Label::Correct));
        if has_errors {
            transfer_pool.push(i);
        } else {
            dataset.splits[i] = Split::Pretrain;
        }
    }
    if transfer_pool.len() < 3 {
        return Err(BignetError::Validation(format!(
            "need at least 3 error-bearing regions for a split, found {}",
            transfer_pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transfer_pool.shuffle(&mut rng);
    let n = transfer_pool.len();
    let n_train = ((n as f64 * transfer_fraction).round() as usize).max(1);
    let n_val = n_train.min(n.saturating_sub(n_train + 1)).max(1);
    if n_train + n_val >= n {
        return Err(BignetError::Validation(format!(
            "transfer fraction {transfer_fraction} leaves no test regions out of {n}"
        )));
    }
    for (rank, &gi) in transfer_pool.iter().enumerate() {
        dataset.splits[gi] = if rank < n_train {
            Split::TransferTrain
        } else if rank < n_train + n_val {
            Split::TransferVal
        } else {
            Split::TransferTest
        };
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::HashEmbedder;
    use crate::geom::aabb_signed_distance;
    use crate::graph::{build_graph, GraphMode};

    #[test]
    fn minimal_cell_structure() {
        let spec = BuildingSpec {
            bays: 1,
            spans: 1,
            storeys: 1,
            wall_density: 0.0,
            door_density: 0.0,
            window_density: 0.0,
            mep_runs: 0,
            ..BuildingSpec::default()
        };
        let floors = generate_building(&spec).unwrap();
        assert_eq!(floors.len(), 1);
        let count = |cat: &str| floors[0].components.iter().filter(|c| c.category == cat).count();
        assert_eq!(count("column"), 4);
        assert_eq!(count("beam"), 4);
        assert_eq!(count("slab"), 1);
        assert_eq!(floors[0].components.len(), 9);
        floors[0].validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = BuildingSpec::default();
        let a = generate_building(&spec).unwrap();
        let b = generate_building(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn connections_are_geometrically_adjacent() {
        let floors = generate_building(&BuildingSpec::default()).unwrap();
        for floor in &floors {
            for r in floor.relations.iter().filter(|r| r.kind == RelationKind::Connection) {
                let a = floor.component(&r.a_id).unwrap();
                let b = floor.component(&r.b_id).unwrap();
                let d = aabb_signed_distance(
                    &crate::bim::derive_aabb(a),
                    &crate::bim::derive_aabb(b),
                );
                assert!(d <= 1e-9, "connection {}-{} has gap {d}", r.a_id, r.b_id);
            }
        }
    }

    #[test]
    fn door_heights_start_compliant() {
        let floors = generate_building(&BuildingSpec {
            door_density: 1.0,
            wall_density: 1.0,
            ..BuildingSpec::default()
        })
        .unwrap();
        let mut doors = 0;
        for f in &floors {
            for c in f.components.iter().filter(|c| c.category == "door") {
                assert!((DOOR_HEIGHT_MIN_MM..=DOOR_HEIGHT_MAX_MM).contains(&c.dims[2]));
                doors += 1;
            }
        }
        assert!(doors > 0);
    }

    #[test]
    fn rate_zero_rejected() {
        let floors = generate_building(&BuildingSpec::default()).unwrap();
        assert!(inject_errors(&floors, 0.0, 1, 0.3).is_err());
        assert!(inject_errors(&floors, 1.5, 1, 0.3).is_err());
    }

    #[test]
    fn door_injection_is_measure_exact() {
        let spec = BuildingSpec {
            wall_density: 1.0,
            door_density: 1.0,
            window_density: 0.0,
            seed: 3,
            ..BuildingSpec::default()
        };
        let floors = generate_building(&spec).unwrap();
        let doors: usize = floors
            .iter()
            .map(|f| f.components.iter().filter(|c| c.category == "door").count())
            .sum();
        let (models, labels, report) = inject_errors(&floors, 0.3, 7, 0.3).unwrap();
        let expected = ((doors as f64) * 0.3).round() as usize;
        assert_eq!(report.data_range_errors.len(), expected);
        let altered: usize = models
            .iter()
            .flat_map(|f| f.components.iter())
            .filter(|c| {
                c.category == "door"
                    && !(DOOR_HEIGHT_MIN_MM..=DOOR_HEIGHT_MAX_MM).contains(&c.dims[2])
            })
            .count();
        assert_eq!(altered, expected);
        assert_eq!(
            labels.components.values().filter(|l| **l == Label::DataRangeError).count(),
            expected
        );
    }

    #[test]
    fn injection_is_deterministic() {
        let floors = generate_building(&BuildingSpec::default()).unwrap();
        let (a, la, _) = inject_errors(&floors, 0.3, 11, 0.3).unwrap();
        let (b, lb, _) = inject_errors(&floors, 0.3, 11, 0.3).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.components, lb.components);
        assert_eq!(la.pairs, lb.pairs);
    }

    #[test]
    fn topological_error_becomes_spatial_node() {
        let spec = BuildingSpec { mep_runs: 4, seed: 5, ..BuildingSpec::default() };
        let floors = generate_building(&spec).unwrap();
        let (models, labels, report) = inject_errors(&floors, 0.3, 13, 0.3).unwrap();
        assert!(!report.topological_errors.is_empty());

        let mut found = 0;
        for floor in &models {
            let mut g = build_graph(&floor.clone(), 0.3, GraphMode::Heterogeneous, &HashEmbedder)
                .unwrap();
            apply_labels(&mut g, &labels).unwrap();
            for node in &g.nodes {
                if node.label == Some(Label::TopologicalError) {
                    assert_eq!(node.node_type, NodeType::Spatial);
                    found += 1;
                }
            }
        }
        assert!(
            found > 0,
            "at least one broken connection should resurface as a labeled spatial node"
        );
    }

    #[test]
    fn clean_models_build_all_correct_graphs() {
        let floors = generate_building(&BuildingSpec::default()).unwrap();
        for f in &floors {
            let g = build_graph(f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
            assert!(g.nodes.iter().all(|n| n.label == Some(Label::Correct)));
        }
    }

    fn toy_graph(has_error: bool, tag: &str) -> BimGraph {
        use crate::bim::{Positioning, ShapeClass, StructuralPurpose};
        let f = FloorModel {
            level_id: tag.to_string(),
            components: vec![
                BimComponent {
                    id: format!("{tag}_a"),
                    category: "fitting".into(),
                    family_name: "F".into(),
                    family_symbol_name: "S".into(),
                    shape_class: ShapeClass::Irregular,
                    dims: [100.0, 100.0, 100.0],
                    structural_purpose: StructuralPurpose::NonStructural,
                    positioning: Positioning::Point { p: [0.0, 0.0, 0.0] },
                    offsets: [0.0, 0.0],
                    level_id: tag.to_string(),
                    aabb: None,
                },
                BimComponent {
                    id: format!("{tag}_b"),
                    category: "duct".into(),
                    family_name: "F".into(),
                    family_symbol_name: "S".into(),
                    shape_class: ShapeClass::Cylinder,
                    dims: [1000.0, 50.0, 50.0],
                    structural_purpose: StructuralPurpose::NonStructural,
                    positioning: Positioning::Line { p0: [0.1, 0.0, 0.0], p1: [1.1, 0.0, 0.0] },
                    offsets: [0.0, 0.0],
                    level_id: tag.to_string(),
                    aabb: None,
                },
            ],
            relations: vec![],
        };
        let mut g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        if has_error {
            for n in g.nodes.iter_mut() {
                if n.node_type == NodeType::Spatial {
                    n.label = Some(Label::TopologicalError);
                }
            }
        }
        g
    }

    #[test]
    fn splits_16_regions_at_03_are_5_5_6() {
        let graphs: Vec<BimGraph> = (0..16).map(|i| toy_graph(true, &format!("g{i}"))).collect();
        let ds = make_splits(GraphDataset::new(graphs), 0.3, 42).unwrap();
        let count = |s: Split| ds.splits.iter().filter(|x| **x == s).count();
        assert_eq!(count(Split::TransferTrain), 5);
        assert_eq!(count(Split::TransferVal), 5);
        assert_eq!(count(Split::TransferTest), 6);
    }

    #[test]
    fn splits_deterministic_and_disjoint() {
        let graphs: Vec<BimGraph> = (0..10)
            .map(|i| toy_graph(i % 2 == 0, &format!("g{i}")))
            .collect();
        let a = make_splits(GraphDataset::new(graphs.clone()), 0.3, 1).unwrap();
        let b = make_splits(GraphDataset::new(graphs), 0.3, 1).unwrap();
        assert_eq!(a.splits, b.splits);
        // Clean graphs land in pretraining.
        for (g, s) in a.graphs.iter().zip(&a.splits) {
            let has_err = g.nodes.iter().any(|n| n.label != Some(Label::Correct));
            assert_eq!(*s == Split::Pretrain, !has_err);
        }
    }

    #[test]
    fn splits_error_on_tiny_pool() {
        let graphs: Vec<BimGraph> = (0..2).map(|i| toy_graph(true, &format!("g{i}"))).collect();
        assert!(make_splits(GraphDataset::new(graphs), 0.3, 1).is_err());
    }
}
