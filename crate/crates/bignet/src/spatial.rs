//! Discovery of local spatial relationships between components and the
//! five-part geometric descriptor attached to each discovered pair.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bim::{BimComponent, ComponentIndex, FloorModel, ordered_pair};
use crate::geom::{
    aabb_signed_distance, acute_angle, closest_points, line_horizontal_angle,
    plane_horizontal_angle, Aabb, Geometry, Vec3, COPLANAR_TOL, PARALLEL_ANGLE_TOL,
};

pub const DEFAULT_SPATIAL_RADIUS_M: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialCategory {
    DifferentSurface,
    InterfaceNonParallel,
    InterfaceParallel,
    PointToLine,
    PointToPoint,
}

impl SpatialCategory {
    pub fn index(self) -> usize {
        match self {
            SpatialCategory::DifferentSurface => 0,
            SpatialCategory::InterfaceNonParallel => 1,
            SpatialCategory::InterfaceParallel => 2,
            SpatialCategory::PointToLine => 3,
            SpatialCategory::PointToPoint => 4,
        }
    }
}

/// The five-part local spatial relationship between two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialDescriptor {
    pub category: SpatialCategory,
    /// Acute angle between positioning lines, radians; 0 when either side is
    /// point-positioned.
    pub angle: f64,
    /// Shortest-distance vector between positioning geometries, metres.
    pub sdv: [f64; 3],
    /// Signed bounding-box separation, metres; negative means overlap.
    pub signed_distance: f64,
    /// Angle with the horizontal plane, radians; 0 for `DifferentSurface`.
    pub horizontal_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialPair {
    pub a_id: String,
    pub b_id: String,
    pub descriptor: SpatialDescriptor,
}

/// Classify the pairwise spatial relationship and compute its descriptor.
pub fn classify_spatial(a: &BimComponent, b: &BimComponent) -> SpatialDescriptor {
    let box_a = crate::bim::derive_aabb(a);
    let box_b = crate::bim::derive_aabb(b);
    classify_spatial_boxed(a, b, &box_a, &box_b)
}

/// Same as [`classify_spatial`] with precomputed bounding boxes.
pub fn classify_spatial_boxed(
    a: &BimComponent,
    b: &BimComponent,
    box_a: &Aabb,
    box_b: &Aabb,
) -> SpatialDescriptor {
    let ga = a.positioning.geometry();
    let gb = b.positioning.geometry();
    let (pa, pb, _d) = closest_points(&ga, &gb);
    let sdv = pb - pa;
    let signed_distance = aabb_signed_distance(box_a, box_b);

    let (category, angle) = match (&ga, &gb) {
        (Geometry::Point(_), Geometry::Point(_)) => (SpatialCategory::PointToPoint, 0.0),
        (Geometry::Point(_), Geometry::Segment(..))
        | (Geometry::Segment(..), Geometry::Point(_)) => (SpatialCategory::PointToLine, 0.0),
        (Geometry::Segment(p0, p1), Geometry::Segment(q0, q1)) => {
            let d1 = *p1 - *p0;
            let d2 = *q1 - *q0;
            let angle = acute_angle(d1, d2);
            if angle < PARALLEL_ANGLE_TOL {
                (SpatialCategory::InterfaceParallel, angle)
            } else {
                let triple = d1.cross(d2).dot(*q0 - *p0).abs();
                if triple < COPLANAR_TOL {
                    (SpatialCategory::InterfaceNonParallel, angle)
                } else {
                    // Skew non-parallel lines span no common plane.
                    (SpatialCategory::DifferentSurface, angle)
                }
            }
        }
    };

    let horizontal_angle = match category {
        SpatialCategory::DifferentSurface => 0.0,
        SpatialCategory::InterfaceNonParallel => {
            let (d1, d2) = (ga.direction().unwrap(), gb.direction().unwrap());
            plane_horizontal_angle(d1.cross(d2))
        }
        SpatialCategory::InterfaceParallel => {
            // Plane containing both parallel lines; for collinear lines fall
            // back to the line's own inclination.
            let d = ga.direction().unwrap();
            let normal = d.cross(sdv);
            if normal.norm() > 1e-12 {
                plane_horizontal_angle(normal)
            } else {
                line_horizontal_angle(d)
            }
        }
        SpatialCategory::PointToLine => {
            let (point, seg_dir, seg_origin) = match (&ga, &gb) {
                (Geometry::Point(p), Geometry::Segment(q0, q1)) => (*p, *q1 - *q0, *q0),
                (Geometry::Segment(p0, p1), Geometry::Point(q)) => (*q, *p1 - *p0, *p0),
                _ => unreachable!(),
            };
            let normal = seg_dir.cross(point - seg_origin);
            if normal.norm() > 1e-12 {
                plane_horizontal_angle(normal)
            } else {
                line_horizontal_angle(seg_dir)
            }
        }
        SpatialCategory::PointToPoint => line_horizontal_angle(sdv),
    };

    SpatialDescriptor {
        category,
        angle,
        sdv: sdv.to_array(),
        signed_distance,
        horizontal_angle,
    }
}

/// Uniform grid over box min-corners; cell size equals the query radius so
/// all candidates for a pair within `radius` lie in adjacent cells.
struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn build(boxes: &[Aabb], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, b) in boxes.iter().enumerate() {
            let lo = Self::key(b.min, cell);
            let hi = Self::key(b.max, cell);
            for cx in lo.0..=hi.0 {
                for cy in lo.1..=hi.1 {
                    for cz in lo.2..=hi.2 {
                        cells.entry((cx, cy, cz)).or_default().push(i);
                    }
                }
            }
        }
        GridIndex { cell, cells }
    }

    fn key(p: Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Candidate partner indices for box `b`: everything registered in the
    /// cells overlapped by `b` expanded by one cell in every direction.
    fn candidates(&self, b: &Aabb, out: &mut HashSet<usize>) {
        out.clear();
        let lo = Self::key(b.min, self.cell);
        let hi = Self::key(b.max, self.cell);
        for cx in (lo.0 - 1)..=(hi.0 + 1) {
            for cy in (lo.1 - 1)..=(hi.1 + 1) {
                for cz in (lo.2 - 1)..=(hi.2 + 1) {
                    if let Some(v) = self.cells.get(&(cx, cy, cz)) {
                        out.extend(v.iter().copied());
                    }
                }
            }
        }
    }
}

/// All unordered component pairs whose bounding boxes lie within `radius`,
/// excluding pairs already linked by a declared relation. Results are sorted
/// by id pair so discovery is deterministic.
pub fn find_spatial_pairs(floor: &FloorModel, radius: f64) -> Vec<SpatialPair> {
    assert!(radius > 0.0, "spatial radius must be positive");
    let index = ComponentIndex::new(floor);
    find_spatial_pairs_indexed(&index, radius)
}

pub fn find_spatial_pairs_indexed(index: &ComponentIndex<'_>, radius: f64) -> Vec<SpatialPair> {
    let floor = index.floor;
    let declared = floor.related_pairs();
    let grid = GridIndex::build(&index.boxes, radius);

    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut pairs = Vec::new();
    let mut cand = HashSet::new();
    for (i, bi) in index.boxes.iter().enumerate() {
        grid.candidates(bi, &mut cand);
        for &j in cand.iter() {
            if j <= i {
                continue;
            }
            if !seen.insert((i, j)) {
                continue;
            }
            if aabb_signed_distance(bi, &index.boxes[j]) > radius {
                continue;
            }
            let (a, b) = (&floor.components[i], &floor.components[j]);
            let key = ordered_pair(&a.id, &b.id);
            if declared.contains(&key) {
                continue;
            }
            // Compute the descriptor in id order so it is independent of the
            // order components were listed in.
            let descriptor = if a.id <= b.id {
                classify_spatial_boxed(a, b, bi, &index.boxes[j])
            } else {
                classify_spatial_boxed(b, a, &index.boxes[j], bi)
            };
            pairs.push(SpatialPair { a_id: key.0, b_id: key.1, descriptor });
        }
    }
    pairs.sort_by(|p, q| (&p.a_id, &p.b_id).cmp(&(&q.a_id, &q.b_id)));
    pairs
}

/// O(n^2) reference scan; the grid-indexed discovery must match it exactly.
pub fn find_spatial_pairs_bruteforce(floor: &FloorModel, radius: f64) -> Vec<SpatialPair> {
    assert!(radius > 0.0, "spatial radius must be positive");
    let index = ComponentIndex::new(floor);
    let declared = floor.related_pairs();
    let mut pairs = Vec::new();
    for i in 0..floor.components.len() {
        for j in (i + 1)..floor.components.len() {
            if aabb_signed_distance(&index.boxes[i], &index.boxes[j]) > radius {
                continue;
            }
            let (a, b) = (&floor.components[i], &floor.components[j]);
            let key = ordered_pair(&a.id, &b.id);
            if declared.contains(&key) {
                continue;
            }
            let descriptor = if a.id <= b.id {
                classify_spatial_boxed(a, b, &index.boxes[i], &index.boxes[j])
            } else {
                classify_spatial_boxed(b, a, &index.boxes[j], &index.boxes[i])
            };
            pairs.push(SpatialPair { a_id: key.0, b_id: key.1, descriptor });
        }
    }
    pairs.sort_by(|p, q| (&p.a_id, &p.b_id).cmp(&(&q.a_id, &q.b_id)));
    pairs
}
