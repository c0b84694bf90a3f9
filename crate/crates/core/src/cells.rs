//! Exact cell decomposition of a planar polyhedral potential.
//!
//! Cell `i` is `{x : (y_i − y_j)·x ≥ v_i − v_j for all j}`, the region where atom `i`
//! attains the max; `∇ψ = y_i` on its interior. Each cell is computed by clipping a large
//! square against the `N − 1` half-planes. Unbounded cells are stored in Minkowski–Weyl
//! form: `conv(vertices) + cone(rays)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{self, ClipPolygon, HalfPlane, Point2};
use crate::potential::PolyhedralPotential;
use crate::{Error, Result};

/// Vertices closer than this (relative to their magnitude) are merged.
pub const VERTEX_MERGE_TOL: f64 = 1e-10;

const MAX_EXTENT_DOUBLINGS: usize = 24;

/// One cell of the decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub atom_index: usize,
    /// Finite vertices in counter-clockwise order.
    pub vertices: Vec<Point2>,
    /// Recession rays; for unbounded cells `rays[0]` leaves `vertices[0]` and `rays[1]`
    /// leaves the last vertex.
    pub rays: Vec<Point2>,
    pub bounded: bool,
    #[serde(skip)]
    constraints: Vec<HalfPlane>,
}

impl Cell {
    /// Constraints supporting the cell's edges (labels are neighbor atom indices).
    pub fn constraints(&self) -> &[HalfPlane] {
        &self.constraints
    }

    /// Neighbor atoms sharing an edge with this cell.
    pub fn neighbors(&self) -> Vec<usize> {
        self.constraints.iter().map(|h| h.label as usize).collect()
    }

    /// Whether `x` satisfies every edge constraint (up to `tol`).
    pub fn contains(&self, x: Point2, tol: f64) -> bool {
        self.constraints.iter().all(|h| h.slack(x) >= -tol)
    }
}

/// Cells of the atoms with nonempty interior, plus masses once integrated.
#[derive(Debug, Clone, Serialize)]
pub struct CellDecomposition {
    pub cells: Vec<Cell>,
    /// Per-atom masses (`N` entries, zero for atoms without a cell); filled by quadrature.
    pub masses: Vec<f64>,
    pub total: f64,
    /// Atoms on the lower envelope whose cell is a null set.
    pub degenerate_atoms: Vec<usize>,
    /// Half-width of the square the cells were clipped to while building.
    pub extent: f64,
}

impl CellDecomposition {
    pub fn cell_of(&self, atom: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.atom_index == atom)
    }

    /// Distinct finite vertices across all cells.
    pub fn vertices(&self) -> Vec<Point2> {
        merge_vertices(self.cells.iter().flat_map(|c| c.vertices.iter().copied()))
    }
}

/// Builds the planar cell decomposition.
pub fn build_cells(p: &PolyhedralPotential) -> Result<CellDecomposition> {
    build_cells_with_extent(p, 0.0)
}

/// As [`build_cells`], clipping to a square of half-width at least `min_extent`.
pub fn build_cells_with_extent(p: &PolyhedralPotential, min_extent: f64) -> Result<CellDecomposition> {
    if p.dim() != 2 {
        return Err(Error::UnsupportedDimension("cell decomposition", p.dim()));
    }
    let w = p.check_integrability();
    if !w.integrable {
        return Err(Error::NotIntegrable { rate: w.rate });
    }
    Ok(decompose(p, min_extent))
}

fn decompose(p: &PolyhedralPotential, min_extent: f64) -> CellDecomposition {
    let layout = Layout::new(p);
    let mut extent = layout.initial_extent(p).max(min_extent);
    for attempt in 0..MAX_EXTENT_DOUBLINGS {
        let last = attempt + 1 == MAX_EXTENT_DOUBLINGS;
        let built: Vec<Option<std::result::Result<Cell, ()>>> = (0..p.len())
            .into_par_iter()
            .map(|i| {
                let poly = clip_all(p, i, extent);
                if poly.is_empty() || poly.area() <= 0.0 {
                    return None;
                }
                Some(layout.finish_cell(p, i, &poly, extent).or_else(|()| {
                    if last {
                        Ok(unverified_cell(i, &poly))
                    } else {
                        Err(())
                    }
                }))
            })
            .collect();
        if built.iter().any(|c| matches!(c, Some(Err(())))) {
            extent *= 16.0;
            continue;
        }
        let cells: Vec<Cell> = built.into_iter().flatten().map(|c| c.unwrap()).collect();
        let with_cell: Vec<bool> = {
            let mut v = vec![false; p.len()];
            cells.iter().for_each(|c| v[c.atom_index] = true);
            v
        };
        let vertices = merge_vertices(cells.iter().flat_map(|c| c.vertices.iter().copied()));
        let tangents: Vec<(Point2, f64)> = vertices.iter().map(|&x| (x, p.eval(&x).0)).collect();
        let scale = 1.0 + p.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let degenerate_atoms = (0..p.len())
            .filter(|&j| !with_cell[j])
            .filter(|&j| {
                let conj = tangents
                    .iter()
                    .map(|(x, psi)| geometry::dot(*x, p.atom2(j)) - psi)
                    .fold(f64::NEG_INFINITY, f64::max);
                conj >= p.values()[j] - crate::potential::ACTIVE_TOL * scale
            })
            .collect();
        return CellDecomposition {
            cells,
            masses: vec![0.0; p.len()],
            total: 0.0,
            degenerate_atoms,
            extent,
        };
    }
    unreachable!("last attempt always yields cells");
}

/// Finite vertices of the decomposition without the integrability precondition.
pub(crate) fn planar_vertices(p: &PolyhedralPotential) -> Vec<Point2> {
    let layout = Layout::new(p);
    if layout.hull.len() < 3 {
        return Vec::new();
    }
    decompose(p, 0.0).vertices()
}

/// Atom hull data shared by all cells.
struct Layout {
    hull: Vec<usize>,
    on_boundary: Vec<bool>,
}

impl Layout {
    fn new(p: &PolyhedralPotential) -> Self {
        let pts: Vec<Point2> = (0..p.len()).map(|i| p.atom2(i)).collect();
        let hull = geometry::convex_hull(&pts);
        let scale = pts.iter().fold(0.0_f64, |m, q| m.max(q[0].abs()).max(q[1].abs()));
        let m = hull.len();
        let on_boundary = pts
            .iter()
            .map(|&q| {
                (0..m).any(|k| {
                    let a = pts[hull[k]];
                    let b = pts[hull[(k + 1) % m]];
                    let e = geometry::sub(b, a);
                    let s = geometry::cross(e, geometry::sub(q, a)) / e[0].hypot(e[1]);
                    s.abs() <= 1e-12 * (1.0 + scale)
                })
            })
            .collect();
        Self { hull, on_boundary }
    }

    fn initial_extent(&self, p: &PolyhedralPotential) -> f64 {
        let vmax = p.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut dmin = f64::INFINITY;
        for &i in &self.hull {
            for j in 0..p.len() {
                if i != j {
                    let d = geometry::sub(p.atom2(i), p.atom2(j));
                    dmin = dmin.min(d[0].hypot(d[1]));
                }
            }
        }
        1e3 * (1.0 + vmax) / dmin.min(1.0)
    }

    /// Splits the clipped polygon into finite vertices and rays; `Err` means the square
    /// was too small to expose the cell's true shape.
    fn finish_cell(
        &self,
        p: &PolyhedralPotential,
        i: usize,
        poly: &ClipPolygon,
        extent: f64,
    ) -> std::result::Result<Cell, ()> {
        let m = poly.vertices.len();
        let is_box = |k: usize| poly.edges[k % m].label < 0;
        let constraints: Vec<HalfPlane> = poly.edges.iter().filter(|e| e.label >= 0).copied().collect();
        let far = |v: Point2| v[0].abs().max(v[1].abs()) > 0.25 * extent;
        let box_edges = (0..m).filter(|&k| is_box(k)).count();
        let expect_unbounded = self.on_boundary[i];
        if box_edges == 0 {
            if expect_unbounded || poly.vertices.iter().any(|&v| far(v)) {
                return Err(());
            }
            return Ok(Cell {
                atom_index: i,
                vertices: poly.vertices.clone(),
                rays: Vec::new(),
                bounded: true,
                constraints,
            });
        }
        if !expect_unbounded {
            return Err(());
        }
        // the box edges must form one run, flanked by the two unbounded cell edges
        let runs = (0..m).filter(|&k| is_box(k) && !is_box(k + m - 1)).count();
        if runs != 1 || box_edges == m {
            return Err(());
        }
        let first_box = (0..m).find(|&k| is_box(k) && !is_box(k + m - 1)).unwrap();
        let last_box = (0..m).find(|&k| is_box(k) && !is_box(k + 1)).unwrap();
        let start = (last_box + 2) % m;
        let end = (first_box + m - 1) % m;
        let mut vertices = Vec::new();
        let mut k = start;
        loop {
            vertices.push(poly.vertices[k]);
            if k == end {
                break;
            }
            k = (k + 1) % m;
        }
        if vertices.iter().any(|&v| far(v)) {
            return Err(());
        }
        let unit = |d: Point2| {
            let n = d[0].hypot(d[1]);
            [d[0] / n, d[1] / n]
        };
        let ray_in = unit(geometry::sub(poly.vertices[(last_box + 1) % m], poly.vertices[start]));
        let ray_out = unit(geometry::sub(poly.vertices[first_box], poly.vertices[end]));
        // rays must be recession directions: y_i attains max_j y_j·d
        let yi = p.atom2(i);
        let scale = (0..p.len()).fold(0.0_f64, |s, j| s.max(p.atom2(j)[0].abs()).max(p.atom2(j)[1].abs()));
        for d in [ray_in, ray_out] {
            let own = geometry::dot(yi, d);
            if (0..p.len()).any(|j| geometry::dot(p.atom2(j), d) > own + 1e-9 * (1.0 + scale)) {
                return Err(());
            }
        }
        Ok(Cell {
            atom_index: i,
            vertices,
            rays: vec![ray_in, ray_out],
            bounded: false,
            constraints,
        })
    }
}

/// Fallback when the extent never stabilizes: keep the clipped polygon's constraint
/// vertices and report no rays.
fn unverified_cell(i: usize, poly: &ClipPolygon) -> Cell {
    let m = poly.vertices.len();
    let bounded = poly.edges.iter().all(|e| e.label >= 0);
    let vertices = (0..m)
        .filter(|&k| poly.edges[k].label >= 0 && poly.edges[(k + m - 1) % m].label >= 0)
        .map(|k| poly.vertices[k])
        .collect();
    Cell {
        atom_index: i,
        vertices,
        rays: Vec::new(),
        bounded,
        constraints: poly.edges.iter().filter(|e| e.label >= 0).copied().collect(),
    }
}

/// Cell `i` clipped to `[-extent, extent]²` using all `N − 1` constraints.
fn clip_all(p: &PolyhedralPotential, i: usize, extent: f64) -> ClipPolygon {
    let yi = p.atom2(i);
    let vi = p.values()[i];
    let mut order: Vec<(f64, usize)> = (0..p.len())
        .filter(|&j| j != i)
        .map(|j| {
            let d = geometry::sub(yi, p.atom2(j));
            (d[0] * d[0] + d[1] * d[1], j)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut poly = ClipPolygon::square(extent);
    for (_, j) in order {
        let h = HalfPlane::new(geometry::sub(yi, p.atom2(j)), vi - p.values()[j], j as i64);
        poly.clip(&h);
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Intersection of a cell with `[-r, r]²`; empty when they do not meet.
pub fn clip_cell(cell: &Cell, r: f64) -> Vec<Point2> {
    let mut poly = ClipPolygon::square(r);
    for h in &cell.constraints {
        poly.clip(h);
        if poly.is_empty() {
            return Vec::new();
        }
    }
    poly.vertices
}

fn merge_vertices(vertices: impl Iterator<Item = Point2>) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::new();
    for v in vertices {
        let tol = VERTEX_MERGE_TOL * (1.0 + v[0].abs().max(v[1].abs()));
        if !out
            .iter()
            .any(|w| (w[0] - v[0]).abs() <= tol && (w[1] - v[1]).abs() <= tol)
        {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup_norm(values: [f64; 4]) -> PolyhedralPotential {
        PolyhedralPotential::from_flat(2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0], values.to_vec()).unwrap()
    }

    #[test]
    fn sup_norm_cells_are_congruent_quadrants() {
        let d = build_cells(&sup_norm([0.0; 4])).unwrap();
        assert_eq!(d.cells.len(), 4);
        for c in &d.cells {
            assert!(!c.bounded);
            assert_eq!(c.vertices.len(), 1);
            assert!(c.vertices[0][0].abs() < 1e-12 && c.vertices[0][1].abs() < 1e-12);
            assert_eq!(c.rays.len(), 2);
            let area = geometry::polygon_area(&clip_cell(c, 1.0));
            assert!((area - 1.0).abs() < 1e-12);
        }
        // rays of the cell of (1,0) are the diagonals (1,±1)/√2, counter-clockwise
        let c = d.cell_of(0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.rays[0][0] - s).abs() < 1e-12 && (c.rays[0][1] - s).abs() < 1e-12);
        assert!((c.rays[1][0] - s).abs() < 1e-12 && (c.rays[1][1] + s).abs() < 1e-12);
    }

    #[test]
    fn quadrant_clip_example() {
        let d = build_cells(&sup_norm([0.0; 4])).unwrap();
        let mut poly = clip_cell(d.cell_of(0).unwrap(), 1.0);
        poly.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));
        let expected = [[1.0, -1.0], [0.0, 0.0], [1.0, 1.0]];
        for (a, b) in poly.iter().zip(expected) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12, "{poly:?}");
        }
    }

    #[test]
    fn lowering_own_value_swallows_origin() {
        let d = build_cells(&sup_norm([-10.0, 0.0, 0.0, 0.0])).unwrap();
        let c = d.cell_of(0).unwrap();
        assert!(c.contains([0.0, 0.0], 0.0));
        assert!(c.contains([-4.9, 0.0], 0.0));
        for j in 1..4 {
            assert!(!d.cell_of(j).unwrap().contains([0.0, 0.0], 0.0));
        }
    }

    #[test]
    fn bounded_cell_is_unchanged_by_a_large_box() {
        let p = PolyhedralPotential::from_flat(
            2,
            vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, -1.0],
        )
        .unwrap();
        let d = build_cells(&p).unwrap();
        let c = d.cell_of(4).unwrap();
        assert!(c.bounded);
        let area = geometry::polygon_area(&c.vertices);
        let clipped = geometry::polygon_area(&clip_cell(c, 100.0));
        assert!((area - clipped).abs() < 1e-12);
        // the centre atom's cell is the square max(|x₁|, |x₂|) ≤ 1
        assert!((area - 4.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_interior_atom_is_degenerate() {
        // centre atom lifted onto the plane of the others: active but null cell
        let p = PolyhedralPotential::from_flat(
            2,
            vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
            vec![0.0; 5],
        )
        .unwrap();
        let d = build_cells(&p).unwrap();
        assert_eq!(d.cells.len(), 4);
        assert_eq!(d.degenerate_atoms, vec![4]);
    }
}
