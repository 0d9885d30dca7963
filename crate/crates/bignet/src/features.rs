//! Fixed-width feature encoding of components and relations, the homogeneous
//! lift, and per-floor column normalization.

use serde::{Deserialize, Serialize};

use crate::bim::{BimComponent, Positioning, RelationKind, ShapeClass, StructuralPurpose};
use crate::embedder::{TextEmbedder, EMBED_DIM};
use crate::error::{BignetError, Result};
use crate::spatial::SpatialDescriptor;

pub const SEMANTIC_DIM: usize = 144;
pub const TOPOLOGICAL_DIM: usize = 3;
pub const SPATIAL_DIM: usize = 11;
pub const HOMOGENEOUS_DIM: usize = SEMANTIC_DIM + TOPOLOGICAL_DIM + SPATIAL_DIM; // 158

/// Offsets of the blocks inside the homogeneous layout.
pub const HOMO_SEMANTIC_OFFSET: usize = 0;
pub const HOMO_TOPOLOGICAL_OFFSET: usize = SEMANTIC_DIM;
pub const HOMO_SPATIAL_OFFSET: usize = SEMANTIC_DIM + TOPOLOGICAL_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutTag {
    Semantic144,
    Topological3,
    Spatial11,
    Homogeneous158,
}

impl LayoutTag {
    pub fn width(self) -> usize {
        match self {
            LayoutTag::Semantic144 => SEMANTIC_DIM,
            LayoutTag::Topological3 => TOPOLOGICAL_DIM,
            LayoutTag::Spatial11 => SPATIAL_DIM,
            LayoutTag::Homogeneous158 => HOMOGENEOUS_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub layout_tag: LayoutTag,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(layout_tag: LayoutTag, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout_tag.width() {
            return Err(BignetError::Shape(format!(
                "feature width {} does not match layout {:?} (expected {})",
                values.len(),
                layout_tag,
                layout_tag.width()
            )));
        }
        Ok(FeatureVector { layout_tag, values })
    }
}

/// Semantic feature layout, fixed order:
/// shape one-hot(3) | dims mm(3) | structural one-hot(2) | family(64) |
/// family symbol(64) | positioning coords m(6) | offsets mm(2).
pub fn encode_component(c: &BimComponent, embedder: &dyn TextEmbedder) -> FeatureVector {
    let mut v = vec![0.0; SEMANTIC_DIM];
    let shape_idx = match c.shape_class {
        ShapeClass::Cuboid => 0,
        ShapeClass::Cylinder => 1,
        ShapeClass::Irregular => 2,
    };
    v[shape_idx] = 1.0;
    v[3..6].copy_from_slice(&c.dims);
    let sp_idx = match c.structural_purpose {
        StructuralPurpose::Structural => 0,
        StructuralPurpose::NonStructural => 1,
    };
    v[6 + sp_idx] = 1.0;
    v[8..8 + EMBED_DIM].copy_from_slice(&embedder.embed(&c.family_name));
    v[72..72 + EMBED_DIM].copy_from_slice(&embedder.embed(&c.family_symbol_name));
    match &c.positioning {
        Positioning::Point { p } => {
            // Point positioning fills the first three slots; the remaining
            // three stay zero as alignment placeholders.
            v[136..139].copy_from_slice(p);
        }
        Positioning::Line { p0, p1 } => {
            v[136..139].copy_from_slice(p0);
            v[139..142].copy_from_slice(p1);
        }
    }
    v[142..144].copy_from_slice(&c.offsets);
    FeatureVector { layout_tag: LayoutTag::Semantic144, values: v }
}

/// One-hot over {connection, touch_floor, host}.
pub fn encode_relation(kind: RelationKind) -> FeatureVector {
    let mut v = vec![0.0; TOPOLOGICAL_DIM];
    v[kind.index()] = 1.0;
    FeatureVector { layout_tag: LayoutTag::Topological3, values: v }
}

/// category one-hot(5) | angle | sdv(3) | signed distance | horizontal angle.
pub fn encode_spatial(d: &SpatialDescriptor) -> FeatureVector {
    let mut v = vec![0.0; SPATIAL_DIM];
    v[d.category.index()] = 1.0;
    v[5] = d.angle;
    v[6..9].copy_from_slice(&d.sdv);
    v[9] = d.signed_distance;
    v[10] = d.horizontal_angle;
    FeatureVector { layout_tag: LayoutTag::Spatial11, values: v }
}

/// Lift a typed feature vector into the 158-wide homogeneous layout, with
/// the blocks of the other types zero-filled.
pub fn to_homogeneous_feature(v: &FeatureVector) -> FeatureVector {
    let mut out = vec![0.0; HOMOGENEOUS_DIM];
    let offset = match v.layout_tag {
        LayoutTag::Semantic144 => HOMO_SEMANTIC_OFFSET,
        LayoutTag::Topological3 => HOMO_TOPOLOGICAL_OFFSET,
        LayoutTag::Spatial11 => HOMO_SPATIAL_OFFSET,
        LayoutTag::Homogeneous158 => 0,
    };
    out[offset..offset + v.values.len()].copy_from_slice(&v.values);
    FeatureVector { layout_tag: LayoutTag::Homogeneous158, values: out }
}

/// Scale one per-property column by `max(|max|, |min|)`; all-zero columns
/// pass through unchanged (the denominator would be zero).
pub fn normalize_column(column: &mut [f64]) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &x in column.iter() {
        hi = hi.max(x);
        lo = lo.min(x);
    }
    let denom = hi.abs().max(lo.abs());
    if denom > 0.0 {
        for x in column.iter_mut() {
            *x /= denom;
        }
    }
}

/// Normalize every scalar column across the rows of one floor group in
/// place. Rows must share a width.
pub fn normalize_floor(rows: &mut [Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(BignetError::Shape(format!(
                "row {i} has width {}, expected {width}",
                row.len()
            )));
        }
        for (j, x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(BignetError::Encoding(format!(
                    "non-finite feature at node {i}, column {j}"
                )));
            }
        }
    }
    let mut column = vec![0.0; rows.len()];
    for j in 0..width {
        for (i, row) in rows.iter().enumerate() {
            column[i] = row[j];
        }
        normalize_column(&mut column);
        for (i, row) in rows.iter_mut().enumerate() {
            row[j] = column[i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bim::{BimComponent, Positioning, ShapeClass, StructuralPurpose};
    use crate::embedder::HashEmbedder;
    use crate::spatial::{SpatialCategory, SpatialDescriptor};
    use proptest::prelude::*;

    fn wall() -> BimComponent {
        BimComponent {
            id: "w1".into(),
            category: "wall".into(),
            family_name: "Basic Wall".into(),
            family_symbol_name: "Architectural Wall_200".into(),
            shape_class: ShapeClass::Cuboid,
            dims: [4000.0, 200.0, 3000.0],
            structural_purpose: StructuralPurpose::NonStructural,
            positioning: Positioning::Line { p0: [0.0, 0.0, 0.0], p1: [4.0, 0.0, 0.0] },
            offsets: [0.0, 50.0],
            level_id: "L1".into(),
            aabb: None,
        }
    }

    #[test]
    fn wall_encodes_to_144_with_full_positioning() {
        let v = encode_component(&wall(), &HashEmbedder);
        assert_eq!(v.layout_tag, LayoutTag::Semantic144);
        assert_eq!(v.values.len(), 144);
        assert_eq!(&v.values[136..142], &[0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        // Shape and structural one-hot blocks each sum to exactly 1.
        assert_eq!(v.values[0..3].iter().sum::<f64>(), 1.0);
        assert_eq!(v.values[6..8].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn point_positioning_pads_last_three_slots() {
        let mut c = wall();
        c.positioning = Positioning::Point { p: [1.0, 2.0, 3.0] };
        let v = encode_component(&c, &HashEmbedder);
        assert_eq!(&v.values[136..139], &[1.0, 2.0, 3.0]);
        assert_eq!(&v.values[139..142], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn connection_relation_one_hot() {
        let v = encode_relation(RelationKind::Connection);
        assert_eq!(v.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(encode_relation(RelationKind::Host).values, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn spatial_descriptor_encodes_to_11() {
        let d = SpatialDescriptor {
            category: SpatialCategory::PointToLine,
            angle: 0.0,
            sdv: [0.1, -0.2, 0.3],
            signed_distance: -0.05,
            horizontal_angle: 0.7,
        };
        let v = encode_spatial(&d);
        assert_eq!(v.values.len(), 11);
        assert_eq!(v.values[3], 1.0);
        assert_eq!(v.values[5], 0.0);
        assert_eq!(&v.values[6..9], &[0.1, -0.2, 0.3]);
        assert_eq!(v.values[9], -0.05);
        assert_eq!(v.values[10], 0.7);
    }

    #[test]
    fn homogeneous_lift_places_blocks() {
        let t = encode_relation(RelationKind::TouchFloor);
        let h = to_homogeneous_feature(&t);
        assert_eq!(h.values.len(), 158);
        let nonzero: Vec<usize> =
            h.values.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![145]);

        let s = encode_component(&wall(), &HashEmbedder);
        let hs = to_homogeneous_feature(&s);
        assert_eq!(&hs.values[0..144], s.values.as_slice());
        assert!(hs.values[144..].iter().all(|&x| x == 0.0));

        let zeros = FeatureVector::new(LayoutTag::Spatial11, vec![0.0; 11]).unwrap();
        assert!(to_homogeneous_feature(&zeros).values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_matches_hand_computation() {
        let mut col = vec![2.0, -4.0, 0.0];
        normalize_column(&mut col);
        assert_eq!(col, vec![0.5, -1.0, 0.0]);

        let mut zeros = vec![0.0, 0.0];
        normalize_column(&mut zeros);
        assert_eq!(zeros, vec![0.0, 0.0]);

        let mut one = vec![1.0];
        normalize_column(&mut one);
        assert_eq!(one, vec![1.0]);
    }

    #[test]
    fn normalize_floor_rejects_non_finite() {
        let mut rows = vec![vec![1.0, f64::NAN]];
        let err = normalize_floor(&mut rows).unwrap_err();
        assert!(err.to_string().contains("column 1"));
    }

    proptest! {
        #[test]
        fn normalization_idempotent_and_bounded(
            raw in proptest::collection::vec(
                proptest::collection::vec(-1e6f64..1e6, 4), 1..20)
        ) {
            let mut once = raw.clone();
            normalize_floor(&mut once).unwrap();
            for row in &once {
                for &x in row {
                    prop_assert!((-1.0..=1.0).contains(&x));
                }
            }
            // Signs and zeros preserved.
            for (r0, r1) in raw.iter().zip(&once) {
                for (&a, &b) in r0.iter().zip(r1) {
                    prop_assert_eq!(a == 0.0, b == 0.0);
                    prop_assert!(a.signum() == b.signum() || a == 0.0);
                }
            }
            let mut twice = once.clone();
            normalize_floor(&mut twice).unwrap();
            for (r0, r1) in once.iter().zip(&twice) {
                for (&a, &b) in r0.iter().zip(r1) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
