//! The neutral "BIM-lite" building-model format: domain types, JSON
//! parsing/serialization, validation, and bounding-box derivation.
//!
//! Units are explicit throughout: component dimensions and offsets are in
//! millimetres, positioning coordinates and bounding boxes in metres.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{BignetError, Result};
use crate::geom::{Aabb, Geometry, Vec3};

pub const BIMLITE_VERSION: &str = "1";

const MM_TO_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Cuboid,
    Cylinder,
    Irregular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralPurpose {
    Structural,
    NonStructural,
}

/// Placement geometry of a component: an insertion point (columns, fittings)
/// or a positioning line (walls, beams, ducts). Coordinates in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Positioning {
    Point { p: [f64; 3] },
    Line { p0: [f64; 3], p1: [f64; 3] },
}

impl Positioning {
    pub fn geometry(&self) -> Geometry {
        match self {
            Positioning::Point { p } => Geometry::Point(Vec3::from_array(*p)),
            Positioning::Line { p0, p1 } => {
                Geometry::Segment(Vec3::from_array(*p0), Vec3::from_array(*p1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimComponent {
    pub id: String,
    pub category: String,
    pub family_name: String,
    pub family_symbol_name: String,
    pub shape_class: ShapeClass,
    /// length, width, height in millimetres; for cylinders width == height ==
    /// cross-section radius; for irregular shapes three key dimensions.
    pub dims: [f64; 3],
    pub structural_purpose: StructuralPurpose,
    pub positioning: Positioning,
    /// Bottom and top offsets from elevation constraints, millimetres.
    pub offsets: [f64; 2],
    pub level_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aabb: Option<Aabb>,
}

impl BimComponent {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(BignetError::Validation("component with empty id".into()));
        }
        if self.dims.iter().any(|d| *d < 0.0 || !d.is_finite()) {
            return Err(BignetError::Validation(format!(
                "component {}: dims must be finite and non-negative",
                self.id
            )));
        }
        if self.shape_class == ShapeClass::Cylinder && self.dims[1] != self.dims[2] {
            return Err(BignetError::Validation(format!(
                "component {}: cylinder requires dims[1] == dims[2] (cross-section radius)",
                self.id
            )));
        }
        if let Positioning::Line { p0, p1 } = &self.positioning {
            if p0 == p1 {
                return Err(BignetError::Validation(format!(
                    "component {}: line positioning with p0 == p1",
                    self.id
                )));
            }
        }
        if let Some(b) = &self.aabb {
            if !b.is_valid() {
                return Err(BignetError::Validation(format!(
                    "component {}: aabb min corner exceeds max corner",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Connection,
    TouchFloor,
    Host,
}

impl RelationKind {
    pub const ALL: [RelationKind; 3] =
        [RelationKind::Connection, RelationKind::TouchFloor, RelationKind::Host];

    pub fn index(self) -> usize {
        match self {
            RelationKind::Connection => 0,
            RelationKind::TouchFloor => 1,
            RelationKind::Host => 2,
        }
    }
}

/// A topological relation declared in the source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredRelation {
    pub kind: RelationKind,
    pub a_id: String,
    pub b_id: String,
}

/// One floor of a building: the unit that becomes a single graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorModel {
    pub level_id: String,
    pub components: Vec<BimComponent>,
    pub relations: Vec<DeclaredRelation>,
}

impl FloorModel {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for c in &self.components {
            c.validate()?;
            if !ids.insert(c.id.as_str()) {
                return Err(BignetError::Validation(format!(
                    "floor {}: duplicate component id {}",
                    self.level_id, c.id
                )));
            }
        }
        for r in &self.relations {
            if r.a_id == r.b_id {
                return Err(BignetError::Validation(format!(
                    "floor {}: relation with identical endpoints {}",
                    self.level_id, r.a_id
                )));
            }
            for end in [&r.a_id, &r.b_id] {
                if !ids.contains(end.as_str()) {
                    return Err(BignetError::Validation(format!(
                        "floor {}: relation endpoint {} does not resolve to a component",
                        self.level_id, end
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn component(&self, id: &str) -> Option<&BimComponent> {
        self.components.iter().find(|c| c.id == id)
    }

    /// Unordered id pairs holding any declared relation.
    pub fn related_pairs(&self) -> HashSet<(String, String)> {
        self.relations
            .iter()
            .map(|r| ordered_pair(&r.a_id, &r.b_id))
            .collect()
    }
}

pub fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BimLiteDocument {
    pub bimlite_version: String,
    pub floors: Vec<FloorModel>,
}

/// Parse a BIM-lite JSON document into validated floor models.
pub fn parse_model(document: &str) -> Result<Vec<FloorModel>> {
    let value: serde_json::Value = serde_json::from_str(document)
        .map_err(|e| BignetError::Parse(format!("malformed JSON: {e}")))?;

    let known_top = ["bimlite_version", "floors"];
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !known_top.contains(&key.as_str()) {
                log::warn!("ignoring unknown top-level field {key:?}");
            }
        }
    }

    let doc: BimLiteDocument = serde_json::from_value(value)
        .map_err(|e| BignetError::Parse(format!("schema violation: {e}")))?;
    if doc.bimlite_version != BIMLITE_VERSION {
        return Err(BignetError::Parse(format!(
            "unsupported bimlite_version {:?} (expected {:?})",
            doc.bimlite_version, BIMLITE_VERSION
        )));
    }
    for floor in &doc.floors {
        floor.validate()?;
    }
    Ok(doc.floors)
}

/// Serialize floor models back to a BIM-lite JSON document.
pub fn serialize_model(floors: &[FloorModel]) -> Result<String> {
    let doc = BimLiteDocument {
        bimlite_version: BIMLITE_VERSION.to_string(),
        floors: floors.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Bounding box of a component: explicit when declared, otherwise derived
/// from positioning geometry and dimensions.
pub fn derive_aabb(c: &BimComponent) -> Aabb {
    if let Some(b) = &c.aabb {
        return *b;
    }
    match &c.positioning {
        Positioning::Point { p } => {
            let center = Vec3::from_array(*p);
            let half = Vec3::new(
                c.dims[0] * MM_TO_M * 0.5,
                c.dims[1] * MM_TO_M * 0.5,
                c.dims[2] * MM_TO_M * 0.5,
            );
            Aabb::new(center - half, center + half)
        }
        Positioning::Line { p0, p1 } => {
            let a = Vec3::from_array(*p0);
            let b = Vec3::from_array(*p1);
            let dir = (b - a).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            // Cross-section frame: u horizontal-perpendicular where possible.
            let up = Vec3::new(0.0, 0.0, 1.0);
            let u = up
                .cross(dir)
                .normalized()
                .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            let v = dir.cross(u).normalized().unwrap_or(Vec3::new(0.0, 1.0, 0.0));
            let hw = c.dims[1] * MM_TO_M * 0.5;
            let hh = c.dims[2] * MM_TO_M * 0.5;
            let mut corners = Vec::with_capacity(8);
            for end in [a, b] {
                for (su, sv) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    corners.push(end + u * (su * hw) + v * (sv * hh));
                }
            }
            Aabb::from_points(&corners)
        }
    }
}

/// Lookup table from component id to index and derived box, reused by the
/// spatial scan and the graph builder.
pub struct ComponentIndex<'a> {
    pub floor: &'a FloorModel,
    pub by_id: HashMap<&'a str, usize>,
    pub boxes: Vec<Aabb>,
}

impl<'a> ComponentIndex<'a> {
    pub fn new(floor: &'a FloorModel) -> Self {
        let by_id = floor
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let boxes = floor.components.iter().map(derive_aabb).collect();
        ComponentIndex { floor, by_id, boxes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wall(id: &str) -> BimComponent {
        BimComponent {
            id: id.into(),
            category: "wall".into(),
            family_name: "Basic Wall".into(),
            family_symbol_name: "Architectural Wall_200".into(),
            shape_class: ShapeClass::Cuboid,
            dims: [4000.0, 200.0, 3000.0],
            structural_purpose: StructuralPurpose::NonStructural,
            positioning: Positioning::Line { p0: [0.0, 0.0, 0.0], p1: [4.0, 0.0, 0.0] },
            offsets: [0.0, 0.0],
            level_id: "L1".into(),
            aabb: None,
        }
    }

    fn column(id: &str) -> BimComponent {
        BimComponent {
            id: id.into(),
            category: "column".into(),
            family_name: "Concrete Column".into(),
            family_symbol_name: "Column_400x400".into(),
            shape_class: ShapeClass::Cuboid,
            dims: [400.0, 400.0, 3000.0],
            structural_purpose: StructuralPurpose::Structural,
            positioning: Positioning::Point { p: [1.0, 2.0, 0.0] },
            offsets: [0.0, 0.0],
            level_id: "L1".into(),
            aabb: None,
        }
    }

    #[test]
    fn empty_floor_list_parses_to_empty() {
        let floors = parse_model(r#"{"bimlite_version":"1","floors":[]}"#).unwrap();
        assert!(floors.is_empty());
    }

    #[test]
    fn two_component_document_parses() {
        let doc = serialize_model(&[FloorModel {
            level_id: "L1".into(),
            components: vec![wall("w1"), column("c1")],
            relations: vec![],
        }])
        .unwrap();
        let floors = parse_model(&doc).unwrap();
        assert_eq!(floors.len(), 1);
        assert_eq!(floors[0].components.len(), 2);
    }

    #[test]
    fn dangling_relation_endpoint_names_the_id() {
        let mut floor = FloorModel {
            level_id: "L1".into(),
            components: vec![wall("w1")],
            relations: vec![DeclaredRelation {
                kind: RelationKind::Connection,
                a_id: "w1".into(),
                b_id: "X".into(),
            }],
        };
        let doc = serialize_model(&[floor.clone()]).unwrap();
        let err = parse_model(&doc).unwrap_err();
        assert!(err.to_string().contains("X"), "error should name the id: {err}");
        floor.relations.clear();
    }

    #[test]
    fn duplicate_id_rejected() {
        let doc = serialize_model(&[FloorModel {
            level_id: "L1".into(),
            components: vec![wall("w1"), wall("w1")],
            relations: vec![],
        }])
        .unwrap();
        assert!(parse_model(&doc).is_err());
    }

    #[test]
    fn cylinder_dims_invariant_enforced() {
        let mut c = column("c1");
        c.shape_class = ShapeClass::Cylinder;
        c.dims = [3000.0, 50.0, 60.0];
        assert!(c.validate().is_err());
        c.dims = [3000.0, 50.0, 50.0];
        assert!(c.validate().is_ok());
    }

    #[test]
    fn explicit_aabb_wins() {
        let mut c = column("c1");
        let b = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
        c.aabb = Some(b);
        assert_eq!(derive_aabb(&c), b);
    }

    #[test]
    fn point_box_is_centered() {
        let mut c = column("c1");
        c.positioning = Positioning::Point { p: [0.0, 0.0, 0.0] };
        c.dims = [1000.0, 1000.0, 1000.0];
        let b = derive_aabb(&c);
        assert_abs_diff_eq!(b.min.x, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max.z, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn line_box_matches_vertex_sweep() {
        let mut c = wall("w1");
        c.positioning = Positioning::Line { p0: [0.0, 0.0, 0.0], p1: [2.0, 0.0, 0.0] };
        c.dims = [2000.0, 200.0, 300.0];
        let b = derive_aabb(&c);
        assert_abs_diff_eq!(b.min.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.min.y, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max.y, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b.min.z, -0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(b.max.z, 0.15, epsilon = 1e-12);
    }

    /// Brute-force vertex sweep oracle: sample the cross-section rectangle at
    /// many stations along the segment and box the samples.
    #[test]
    fn line_box_contains_sweep_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut c = wall("w");
            let p0 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let mut p1 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            if p0 == p1 {
                p1[0] += 1.0;
            }
            c.positioning = Positioning::Line { p0, p1 };
            c.dims = [0.0, rng.gen_range(10.0..500.0), rng.gen_range(10.0..500.0)];
            let b = derive_aabb(&c);
            let (a, e) = (Vec3::from_array(p0), Vec3::from_array(p1));
            let dir = (e - a).normalized().unwrap();
            let up = Vec3::new(0.0, 0.0, 1.0);
            let u = up.cross(dir).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            let v = dir.cross(u).normalized().unwrap_or(Vec3::new(0.0, 1.0, 0.0));
            for i in 0..=20 {
                let s = i as f64 / 20.0;
                let center = a + (e - a) * s;
                for (su, sv) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let p = center
                        + u * (su * c.dims[1] * 5e-4)
                        + v * (sv * c.dims[2] * 5e-4);
                    assert!(b.contains(p, 1e-9), "sweep sample escapes derived box");
                }
            }
        }
    }

    #[test]
    fn derived_box_contains_positioning_points() {
        let c = wall("w1");
        let b = derive_aabb(&c);
        if let Positioning::Line { p0, p1 } = c.positioning {
            assert!(b.contains(Vec3::from_array(p0), 1e-9));
            assert!(b.contains(Vec3::from_array(p1), 1e-9));
        }
        let c2 = column("c1");
        let b2 = derive_aabb(&c2);
        if let Positioning::Point { p } = c2.positioning {
            assert!(b2.contains(Vec3::from_array(p), 1e-9));
        }
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let floors = vec![FloorModel {
            level_id: "L1".into(),
            components: vec![wall("w1"), column("c1")],
            relations: vec![DeclaredRelation {
                kind: RelationKind::Host,
                a_id: "w1".into(),
                b_id: "c1".into(),
            }],
        }];
        let doc = serialize_model(&floors).unwrap();
        let parsed = parse_model(&doc).unwrap();
        assert_eq!(parsed, floors);
        let doc2 = serialize_model(&parsed).unwrap();
        assert_eq!(parse_model(&doc2).unwrap(), floors);
    }

    #[test]
    fn version_mismatch_rejected() {
        let err = parse_model(r#"{"bimlite_version":"2","floors":[]}"#).unwrap_err();
        assert!(err.to_string().contains("bimlite_version"));
    }
}
