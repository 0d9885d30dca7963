//! Small 3D vector/box toolkit: closest points between positioning
//! geometries and signed distances between axis-aligned boxes.

use serde::{Deserialize, Serialize};

pub const PARALLEL_ANGLE_TOL: f64 = 1e-6; // radians
pub const COPLANAR_TOL: f64 = 1e-9; // m^3, scalar triple product

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Axis-aligned bounding box in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// Smallest box enclosing a set of points.
    pub fn from_points(points: &[Vec3]) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in &points[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Aabb { min, max }
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.y >= self.min.y - tol
            && p.z >= self.min.z - tol
            && p.x <= self.max.x + tol
            && p.y <= self.max.y + tol
            && p.z <= self.max.z + tol
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn is_valid(&self) -> bool {
        self.min.x <= self.max.x && self.min.y <= self.max.y && self.min.z <= self.max.z
    }
}

/// Signed separation between two boxes: Euclidean gap when disjoint, 0 when
/// touching, negative smallest per-axis overlap when interiors intersect.
pub fn aabb_signed_distance(a: &Aabb, b: &Aabb) -> f64 {
    let gaps = [
        (a.min.x - b.max.x).max(b.min.x - a.max.x),
        (a.min.y - b.max.y).max(b.min.y - a.max.y),
        (a.min.z - b.max.z).max(b.min.z - a.max.z),
    ];
    if gaps.iter().any(|&g| g > 0.0) {
        gaps.iter().map(|&g| g.max(0.0).powi(2)).sum::<f64>().sqrt()
    } else {
        // All gaps <= 0: overlap depth per axis is -gap; the signed distance is
        // minus the smallest overlap, which is the largest (least negative) gap.
        gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Positioning geometry: an insertion point or a placement segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Point(Vec3),
    Segment(Vec3, Vec3),
}

impl Geometry {
    pub fn direction(&self) -> Option<Vec3> {
        match self {
            Geometry::Point(_) => None,
            Geometry::Segment(p0, p1) => (*p1 - *p0).normalized(),
        }
    }
}

/// Closest pair of points between two point/segment geometries, with their
/// distance. For parallel overlapping segments the midpoint of the overlap
/// interval is returned.
pub fn closest_points(a: &Geometry, b: &Geometry) -> (Vec3, Vec3, f64) {
    match (a, b) {
        (Geometry::Point(p), Geometry::Point(q)) => (*p, *q, (*q - *p).norm()),
        (Geometry::Point(p), Geometry::Segment(q0, q1)) => {
            let q = closest_point_on_segment(*p, *q0, *q1);
            (*p, q, (q - *p).norm())
        }
        (Geometry::Segment(p0, p1), Geometry::Point(q)) => {
            let p = closest_point_on_segment(*q, *p0, *p1);
            (p, *q, (*q - p).norm())
        }
        (Geometry::Segment(p0, p1), Geometry::Segment(q0, q1)) => {
            segment_segment_closest(*p0, *p1, *q0, *q1)
        }
    }
}

fn closest_point_on_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3 {
    let ab = b - a;
    let denom = ab.dot(ab);
    if denom == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / denom).clamp(0.0, 1.0);
    a + ab * t
}

fn segment_segment_closest(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> (Vec3, Vec3, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(d1);
    let e = d2.dot(d2);
    let f = d2.dot(r);

    if a == 0.0 && e == 0.0 {
        return (p0, q0, (q0 - p0).norm());
    }
    if a == 0.0 {
        let q = closest_point_on_segment(p0, q0, q1);
        return (p0, q, (q - p0).norm());
    }
    if e == 0.0 {
        let p = closest_point_on_segment(q0, p0, p1);
        return (p, q0, (q0 - p).norm());
    }

    let b = d1.dot(d2);
    let c = d1.dot(r);
    let denom = a * e - b * b;

    // Parallel (or near-parallel) segments: pick the midpoint of the mutual
    // overlap interval along the first segment's parameter.
    if denom.abs() <= 1e-12 * a * e {
        // Project q0,q1 onto the p-segment parameter axis.
        let t_q0 = (q0 - p0).dot(d1) / a;
        let t_q1 = (q1 - p0).dot(d1) / a;
        let (lo, hi) = if t_q0 <= t_q1 { (t_q0, t_q1) } else { (t_q1, t_q0) };
        let olo = lo.max(0.0);
        let ohi = hi.min(1.0);
        let s = if olo <= ohi {
            0.5 * (olo + ohi)
        } else if hi < 0.0 {
            0.0
        } else {
            1.0
        };
        let pa = p0 + d1 * s;
        let qb = closest_point_on_segment(pa, q0, q1);
        return (pa, qb, (qb - pa).norm());
    }

    let mut s = (b * f - c * e) / denom;
    s = s.clamp(0.0, 1.0);
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    let pa = p0 + d1 * s;
    let qb = q0 + d2 * t;
    (pa, qb, (qb - pa).norm())
}

/// Acute angle between two directions, in [0, pi/2].
pub fn acute_angle(d1: Vec3, d2: Vec3) -> f64 {
    let n1 = d1.norm();
    let n2 = d2.norm();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (d1.dot(d2).abs() / (n1 * n2)).clamp(-1.0, 1.0).acos()
}

/// Acute angle between a plane (given by its normal) and the horizontal plane.
pub fn plane_horizontal_angle(normal: Vec3) -> f64 {
    let n = normal.norm();
    if n == 0.0 {
        return 0.0;
    }
    // Angle between planes = angle between normals; horizontal normal is +z.
    ((normal.z.abs() / n).clamp(-1.0, 1.0)).acos()
}

/// Acute angle between a line direction and the horizontal plane.
pub fn line_horizontal_angle(dir: Vec3) -> f64 {
    let n = dir.norm();
    if n == 0.0 {
        return 0.0;
    }
    ((dir.z.abs() / n).clamp(-1.0, 1.0)).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box(min: Vec3) -> Aabb {
        Aabb::new(min, min + Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn boxes_sharing_a_face_touch() {
        let a = unit_box(Vec3::ZERO);
        let b = unit_box(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(aabb_signed_distance(&a, &b), 0.0);
    }

    #[test]
    fn box_gap_is_euclidean() {
        // Gaps 0.3 and 0.4 on x/y, touching on z -> 3-4-5 triangle.
        let a = unit_box(Vec3::ZERO);
        let b = unit_box(Vec3::new(1.3, 1.4, 0.0));
        assert_abs_diff_eq!(aabb_signed_distance(&a, &b), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn box_overlap_is_minimal_penetration() {
        // Overlaps 0.1 / 0.7 / 0.9 -> -0.1.
        let a = unit_box(Vec3::ZERO);
        let b = unit_box(Vec3::new(0.9, 0.3, 0.1));
        assert_abs_diff_eq!(aabb_signed_distance(&a, &b), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn signed_distance_symmetric() {
        let a = Aabb::new(Vec3::new(-1.0, 0.0, 0.5), Vec3::new(0.0, 2.0, 1.0));
        let b = Aabb::new(Vec3::new(0.7, -1.0, 0.0), Vec3::new(1.5, 0.5, 3.0));
        assert_eq!(aabb_signed_distance(&a, &b), aabb_signed_distance(&b, &a));
    }

    #[test]
    fn point_point_distance() {
        let (pa, pb, d) = closest_points(
            &Geometry::Point(Vec3::ZERO),
            &Geometry::Point(Vec3::new(1.0, 0.0, 0.0)),
        );
        assert_eq!(d, 1.0);
        assert_eq!(pb - pa, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn crossing_segments_touch() {
        let a = Geometry::Segment(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        let b = Geometry::Segment(Vec3::new(0.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        let (_, _, d) = closest_points(&a, &b);
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }

    /// Dense parameter-grid sampling oracle over both segments.
    fn grid_oracle(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3, n: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let p = p0 + (p1 - p0) * s;
            for j in 0..=n {
                let t = j as f64 / n as f64;
                let q = q0 + (q1 - q0) * t;
                best = best.min((q - p).norm());
            }
        }
        best
    }

    #[test]
    fn skew_segments_match_grid_oracle() {
        let (p0, p1) = (Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0));
        let (q0, q1) = (Vec3::new(0.0, 1.0, 1.0), Vec3::new(1.0, 1.0, 1.0));
        let (_, _, d) = closest_points(&Geometry::Segment(p0, p1), &Geometry::Segment(q0, q1));
        assert_abs_diff_eq!(d, 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(d, grid_oracle(p0, p1, q0, q1, 400), epsilon = 1e-3);
    }

    #[test]
    fn random_segments_match_grid_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut v = || Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (p0, p1, q0, q1) = (v(), v(), v(), v());
            let (pa, pb, d) =
                closest_points(&Geometry::Segment(p0, p1), &Geometry::Segment(q0, q1));
            let oracle = grid_oracle(p0, p1, q0, q1, 300);
            assert!(d <= oracle + 1e-9, "closest {d} worse than sampled {oracle}");
            assert!((oracle - d) < 2e-2, "closest {d} far below sampled {oracle}");
            assert_abs_diff_eq!((pb - pa).norm(), d, epsilon = 1e-12);
        }
    }

    #[test]
    fn parallel_overlap_returns_midpoint() {
        let a = Geometry::Segment(Vec3::ZERO, Vec3::new(4.0, 0.0, 0.0));
        let b = Geometry::Segment(Vec3::new(1.0, 1.0, 0.0), Vec3::new(3.0, 1.0, 0.0));
        let (pa, pb, d) = closest_points(&a, &b);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pa.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pb.x, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_segment_acts_as_point() {
        let a = Geometry::Segment(Vec3::ZERO, Vec3::ZERO);
        let b = Geometry::Segment(Vec3::new(0.0, 2.0, 0.0), Vec3::new(4.0, 2.0, 0.0));
        let (_, _, d) = closest_points(&a, &b);
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_plane_angles() {
        // Vertical plane (normal along x) vs horizontal -> pi/2.
        assert_abs_diff_eq!(
            plane_horizontal_angle(Vec3::new(1.0, 0.0, 0.0)),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        // Horizontal plane (normal z) -> 0.
        assert_abs_diff_eq!(plane_horizontal_angle(Vec3::new(0.0, 0.0, 3.0)), 0.0, epsilon = 1e-12);
        // 45-degree line.
        assert_abs_diff_eq!(
            line_horizontal_angle(Vec3::new(1.0, 0.0, 1.0)),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
    }
}
