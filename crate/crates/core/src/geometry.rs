//! Planar primitives: points, half-planes, convex clipping and hulls.

/// A point (or vector) in the plane.
pub type Point2 = [f64; 2];

#[inline]
pub fn dot(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Closed half-plane `{x : normal·x ≥ offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
    /// Caller-defined tag of the constraint (atom index for cell constraints).
    pub label: i64,
}

impl HalfPlane {
    pub fn new(normal: Point2, offset: f64, label: i64) -> Self {
        Self { normal, offset, label }
    }

    /// Signed slack, `≥ 0` inside.
    #[inline]
    pub fn slack(&self, x: Point2) -> f64 {
        dot(self.normal, x) - self.offset
    }

    /// Intersection of the boundary lines of two half-planes, `None` if parallel.
    pub fn intersect(&self, other: &HalfPlane) -> Option<Point2> {
        let det = cross(self.normal, other.normal);
        if det == 0.0 {
            return None;
        }
        let [a1, b1] = self.normal;
        let [a2, b2] = other.normal;
        let (c1, c2) = (self.offset, other.offset);
        Some([(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det])
    }
}

/// Box labels used by [`box_halfplanes`].
pub const BOX_LABELS: [i64; 4] = [-1, -2, -3, -4];

/// The four half-planes of `[-r, r]²`.
pub fn box_halfplanes(r: f64) -> [HalfPlane; 4] {
    [
        HalfPlane::new([0.0, 1.0], -r, BOX_LABELS[0]),
        HalfPlane::new([-1.0, 0.0], -r, BOX_LABELS[1]),
        HalfPlane::new([0.0, -1.0], -r, BOX_LABELS[2]),
        HalfPlane::new([1.0, 0.0], -r, BOX_LABELS[3]),
    ]
}

/// Convex polygon in counter-clockwise order whose edges remember the constraint that
/// produced them: `edges[k]` supports the segment from `vertices[k]` to `vertices[k+1]`.
///
/// New vertices are computed as line-line intersections of the two adjacent constraints
/// rather than by interpolation along an edge, so accuracy does not depend on the size of
/// the starting box.
#[derive(Debug, Clone, Default)]
pub struct ClipPolygon {
    pub vertices: Vec<Point2>,
    pub edges: Vec<HalfPlane>,
}

impl ClipPolygon {
    /// The box `[-r, r]²`.
    pub fn square(r: f64) -> Self {
        let hp = box_halfplanes(r);
        // vertex k is the start of edge k: bottom, right, top, left
        let vertices = vec![[-r, -r], [r, -r], [r, r], [-r, r]];
        let edges = vec![hp[0], hp[1], hp[2], hp[3]];
        // bottom edge is y ≥ -r, right is -x ≥ -r, top is -y ≥ -r, left is x ≥ -r
        Self { vertices, edges }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Clips in place by `h`.
    pub fn clip(&mut self, h: &HalfPlane) {
        let n = self.vertices.len();
        if n == 0 {
            return;
        }
        let slack: Vec<f64> = self.vertices.iter().map(|&v| h.slack(v)).collect();
        let scale = self
            .vertices
            .iter()
            .map(|v| v[0].abs().max(v[1].abs()))
            .fold(0.0_f64, f64::max)
            * (h.normal[0].abs() + h.normal[1].abs())
            + h.offset.abs();
        let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);
        if slack.iter().all(|&s| s >= -eps) {
            return;
        }
        if slack.iter().all(|&s| s <= eps) {
            self.vertices.clear();
            self.edges.clear();
            return;
        }
        let mut vertices = Vec::with_capacity(n + 1);
        let mut edges = Vec::with_capacity(n + 1);
        for k in 0..n {
            let next = (k + 1) % n;
            let (sk, sn) = (slack[k], slack[next]);
            let inside_k = sk >= -eps;
            let inside_n = sn >= -eps;
            if inside_k {
                vertices.push(self.vertices[k]);
                edges.push(self.edges[k]);
            }
            if inside_k && !inside_n && sk > eps {
                // leaving: new vertex on edge k, followed by an edge along h
                let p = self.edges[k]
                    .intersect(h)
                    .unwrap_or_else(|| lerp(self.vertices[k], self.vertices[next], sk / (sk - sn)));
                vertices.push(p);
                edges.push(*h);
            } else if inside_k && !inside_n {
                // vertex k lies on h; the edge leaving it runs along h
                let last = edges.len() - 1;
                edges[last] = *h;
            } else if !inside_k && inside_n && sn > eps {
                // entering: new vertex on edge k, keeps edge k's label
                let p = self.edges[k]
                    .intersect(h)
                    .unwrap_or_else(|| lerp(self.vertices[k], self.vertices[next], sk / (sk - sn)));
                vertices.push(p);
                edges.push(self.edges[k]);
            }
        }
        self.vertices = vertices;
        self.edges = edges;
        self.dedup(eps);
    }

    fn dedup(&mut self, eps: f64) {
        let mut k = 0;
        while self.vertices.len() > 1 && k < self.vertices.len() {
            let next = (k + 1) % self.vertices.len();
            let d = sub(self.vertices[k], self.vertices[next]);
            if d[0].abs() <= eps && d[1].abs() <= eps {
                // drop the zero-length edge k
                self.vertices.remove(next);
                self.edges.remove(k);
                if next == 0 {
                    // vertex 0 was dropped; its outgoing edge now leaves the last vertex
                    self.edges.rotate_left(1);
                }
            } else {
                k += 1;
            }
        }
        if self.vertices.len() < 3 {
            self.vertices.clear();
            self.edges.clear();
        }
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }
}

fn lerp(a: Point2, b: Point2, t: f64) -> Point2 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Signed area, positive for counter-clockwise order.
pub fn polygon_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|k| cross(vertices[k], vertices[(k + 1) % n])).sum::<f64>()
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, collinear points dropped.
/// Returns indices into `points`.
pub fn convex_hull(points: &[Point2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let turn = |o: usize, a: usize, b: usize| cross(sub(points[a], points[o]), sub(points[b], points[o]));
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in &idx {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower_len = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Even-odd point-in-polygon test for a simple polygon.
pub fn point_in_polygon(p: Point2, polygon: &[Point2]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True when the closed polygon has two non-adjacent edges that intersect.
pub fn self_intersects(polygon: &[Point2]) -> bool {
    let n = polygon.len();
    let seg_cross = |p1: Point2, p2: Point2, q1: Point2, q2: Point2| {
        let d1 = cross(sub(p2, p1), sub(q1, p1));
        let d2 = cross(sub(p2, p1), sub(q2, p1));
        let d3 = cross(sub(q2, q1), sub(p1, q1));
        let d4 = cross(sub(q2, q1), sub(p2, q1));
        d1 * d2 < 0.0 && d3 * d4 < 0.0
    };
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if seg_cross(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}
