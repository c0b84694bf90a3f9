//! Polyhedral convex potentials `ψ_v(x) = max_i (y_i·x − v_i)`.
//!
//! The atoms `y_i` live in the dual space, where the moment measure lives; the values `v_i`
//! are the data of the dual function `φ` at the atoms, and `ψ_v = φ*` is the Legendre
//! transform of that data. The lower convex envelope of `{(y_i, v_i)}` is `ψ_v*`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cells;
use crate::geometry::{self, Point2};
use crate::{Error, Result};

/// Relative tolerance for a lifted atom to count as lying on the lower envelope.
pub const ACTIVE_TOL: f64 = 1e-12;

/// Upper limit on `C(N, n)` for exact facet enumeration of the atom hull.
const FACET_ENUMERATION_LIMIT: f64 = 2e5;

/// `ψ_v(x) = max_i (y_i·x − v_i)` over a fixed, pairwise distinct atom set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialRecord", into = "PotentialRecord")]
pub struct PolyhedralPotential {
    dim: usize,
    atoms: Vec<f64>,
    values: Vec<f64>,
}

/// On-disk form: `{"dim": n, "atoms": [[..], ..], "values": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialRecord {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl TryFrom<PotentialRecord> for PolyhedralPotential {
    type Error = Error;

    fn try_from(r: PotentialRecord) -> Result<Self> {
        PolyhedralPotential::new(r.dim, &r.atoms, r.values)
    }
}

impl From<PolyhedralPotential> for PotentialRecord {
    fn from(p: PolyhedralPotential) -> Self {
        PotentialRecord {
            dim: p.dim,
            atoms: p.atoms.chunks(p.dim).map(<[f64]>::to_vec).collect(),
            values: p.values,
        }
    }
}

/// Gauge `(b, c)`: `v_i ↦ v_i + y_i·b + c`, i.e. `ψ(x) ↦ ψ(x − b) − c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeTransform {
    pub translation: Vec<f64>,
    pub constant: f64,
}

impl GaugeTransform {
    pub fn identity(dim: usize) -> Self {
        Self {
            translation: vec![0.0; dim],
            constant: 0.0,
        }
    }

    /// Composition: apply `self`, then `next`.
    pub fn then(&self, next: &GaugeTransform) -> GaugeTransform {
        GaugeTransform {
            translation: self
                .translation
                .iter()
                .zip(&next.translation)
                .map(|(a, b)| a + b)
                .collect(),
            constant: self.constant + next.constant,
        }
    }
}

/// Integrability witness for `e^{-ψ}`.
///
/// `ψ(x) ≥ rate·|x| − beta` with `rate = min_{|θ|=1} max_i y_i·θ` and `beta = max_i v_i`;
/// `e^{-ψ}` is integrable iff `rate > 0`, i.e. the origin is interior to the atom hull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrability {
    pub integrable: bool,
    pub rate: f64,
    pub beta: f64,
    /// `false` when `rate` is only a lower bound (large hulls in dimension ≥ 3).
    pub rate_exact: bool,
}

impl PolyhedralPotential {
    /// Builds a potential from atom rows and values.
    pub fn new(dim: usize, atoms: &[Vec<f64>], values: Vec<f64>) -> Result<Self> {
        let mut flat = Vec::with_capacity(atoms.len() * dim);
        for a in atoms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
            flat.extend_from_slice(a);
        }
        Self::from_flat(dim, flat, values)
    }

    /// Builds a potential from row-major atom coordinates.
    pub fn from_flat(dim: usize, atoms: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if atoms.len() != values.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} atom coordinates for {} values in dimension {dim}",
                atoms.len(),
                values.len()
            )));
        }
        if values.len() < dim + 1 {
            return Err(Error::InvalidInput(format!(
                "need at least {} atoms in dimension {dim}, got {}",
                dim + 1,
                values.len()
            )));
        }
        if atoms.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite atom or value".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        let row = |i: usize| &atoms[i * dim..(i + 1) * dim];
        order.sort_by(|&a, &b| {
            row(a)
                .iter()
                .zip(row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if order.windows(2).any(|w| row(w[0]) == row(w[1])) {
            return Err(Error::InvalidInput("atoms must be pairwise distinct".into()));
        }
        Ok(Self { dim, atoms, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom2(&self, i: usize) -> Point2 {
        [self.atoms[2 * i], self.atoms[2 * i + 1]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same atoms, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value".into()));
        }
        Ok(Self {
            dim: self.dim,
            atoms: self.atoms.clone(),
            values,
        })
    }

    /// `(ψ(x), argmax)`; ties go to the lowest index.
    pub fn eval(&self, x: &[f64]) -> (f64, usize) {
        debug_assert_eq!(x.len(), self.dim);
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, (y, v)) in self.atoms.chunks_exact(self.dim).zip(&self.values).enumerate() {
            let s = y.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - v;
            if s > best {
                best = s;
                arg = i;
            }
        }
        (best, arg)
    }

    /// An element of `∂ψ(x)`: the atom attaining the max (equals `∇ψ(x)` where differentiable).
    pub fn subgradient(&self, x: &[f64]) -> &[f64] {
        self.atom(self.eval(x).1)
    }

    /// Lower convex envelope of the atom data at `y`; `+∞` outside the atom hull.
    pub fn conjugate_at(&self, y: &[f64]) -> f64 {
        Conjugate::new(self).at(y)
    }

    /// Atoms whose lifted point `(y_i, v_i)` lies on the lower convex envelope.
    ///
    /// Atoms that touch the envelope without being extreme are included; their cells are
    /// null sets.
    pub fn active_set(&self) -> Vec<usize> {
        let conj = Conjugate::new(self);
        let scale = 1.0 + self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (0..self.len())
            .filter(|&i| conj.at(self.atom(i)) >= self.values[i] - ACTIVE_TOL * scale)
            .collect()
    }

    /// `v_i ↦ v_i + y_i·b + c`.
    pub fn apply_gauge(&self, g: &GaugeTransform) -> Self {
        assert_eq!(g.translation.len(), self.dim, "gauge dimension");
        let values = self
            .atoms
            .chunks_exact(self.dim)
            .zip(&self.values)
            .map(|(y, v)| v + y.iter().zip(&g.translation).map(|(a, b)| a * b).sum::<f64>() + g.constant)
            .collect();
        Self {
            dim: self.dim,
            atoms: self.atoms.clone(),
            values,
        }
    }

    /// Integrability witness; see [`Integrability`].
    pub fn check_integrability(&self) -> Integrability {
        let beta = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (rate, rate_exact) = self.recession_rate();
        Integrability {
            integrable: rate > 0.0,
            rate,
            beta,
            rate_exact,
        }
    }

    fn recession_rate(&self) -> (f64, bool) {
        match self.dim {
            1 => {
                let (lo, hi) = self
                    .atoms
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                        (lo.min(y), hi.max(y))
                    });
                (hi.min(-lo), true)
            }
            2 => {
                let pts: Vec<Point2> = (0..self.len()).map(|i| self.atom2(i)).collect();
                (planar_inradius(&pts), true)
            }
            n => {
                let subsets = binomial(self.len(), n);
                if subsets <= FACET_ENUMERATION_LIMIT {
                    (self.facet_inradius(), true)
                } else {
                    (self.axis_rate_lower_bound(), false)
                }
            }
        }
    }

    /// `min` over hull facets of the distance from the origin (negative when outside).
    fn facet_inradius(&self) -> f64 {
        let n = self.dim;
        let count = self.len();
        let scale = self.atoms.iter().fold(0.0_f64, |m, a| m.max(a.abs())).max(1.0);
        let mut best = f64::INFINITY;
        let mut found = false;
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            if let Some((normal, offset)) = hyperplane_through(self, &subset) {
                // keep facets: all atoms on one side
                let mut pos = false;
                let mut neg = false;
                for i in 0..count {
                    let s = dot(self.atom(i), &normal) - offset;
                    if s > 1e-12 * scale {
                        pos = true;
                    } else if s < -1e-12 * scale {
                        neg = true;
                    }
                    if pos && neg {
                        break;
                    }
                }
                if !(pos && neg) {
                    found = true;
                    // orient outward: atoms on the non-positive side
                    let d = if pos { -offset } else { offset };
                    best = best.min(d);
                }
            }
            if !next_combination(&mut subset, count) {
                break;
            }
        }
        if found {
            best
        } else {
            0.0
        }
    }

    /// Lower bound `min_{k,±} t_k± / √n` where `t_k±` is the extent of the hull along `±e_k`.
    fn axis_rate_lower_bound(&self) -> f64 {
        let n = self.dim;
        let mut best = f64::INFINITY;
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let t = self.axis_extent(k, sign).unwrap_or(0.0);
                best = best.min(t);
            }
        }
        best / (n as f64).sqrt()
    }

    /// `max t` with `t·sign·e_k ∈ conv(atoms)`, by linear program.
    fn axis_extent(&self, k: usize, sign: f64) -> Option<f64> {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        let lambdas: Vec<_> = (0..self.len()).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
        for c in 0..self.dim {
            let mut row: Vec<_> = lambdas.iter().enumerate().map(|(i, &l)| (l, self.atom(i)[c])).collect();
            if c == k {
                row.push((t, -sign));
            }
            lp.add_constraint(row.as_slice(), ComparisonOp::Eq, 0.0);
        }
        let ones: Vec<_> = lambdas.iter().map(|&l| (l, 1.0)).collect();
        lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
        lp.solve().ok().map(|s| s.objective())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Unit normal and offset of the hyperplane through the given atoms, `None` if degenerate.
fn hyperplane_through(p: &PolyhedralPotential, subset: &[usize]) -> Option<(Vec<f64>, f64)> {
    let n = p.dim();
    let base = p.atom(subset[0]);
    let rows = DMatrix::from_fn(n - 1, n, |r, c| p.atom(subset[r + 1])[c] - base[c]);
    // generalized cross product by cofactor expansion
    let mut normal = vec![0.0; n];
    for (j, nj) in normal.iter_mut().enumerate() {
        let minor = rows.clone().remove_column(j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *nj = sign * minor.determinant();
    }
    let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = rows.iter().fold(0.0_f64, |m, x| m.max(x.abs())).powi(n as i32 - 1);
    if norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    normal.iter_mut().for_each(|x| *x /= norm);
    let offset = dot(base, &normal);
    Some((normal, offset))
}

/// Signed distance from the origin to the boundary of the convex hull of `pts`.
pub(crate) fn planar_inradius(pts: &[Point2]) -> f64 {
    let hull = geometry::convex_hull(pts);
    if hull.len() < 3 {
        return 0.0;
    }
    let m = hull.len();
    (0..m)
        .map(|k| {
            let a = pts[hull[k]];
            let b = pts[hull[(k + 1) % m]];
            let e = geometry::sub(b, a);
            geometry::cross(e, geometry::sub([0.0, 0.0], a)) / e[0].hypot(e[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Evaluator for `ψ_v*` (the lower convex envelope of the atom data).
///
/// Dimension 1 uses the lower hull of the lifted points. Dimension 2 uses the vertices
/// `x_k` of the cell decomposition: on the atom hull `ψ*(y) = max_k (x_k·y − ψ(x_k))`.
/// Other dimensions, and planar configurations without cell vertices, solve the linear
/// program `min Σλ_j v_j` subject to `Σλ_j y_j = y`, `λ` a convex combination.
pub struct Conjugate<'a> {
    potential: &'a PolyhedralPotential,
    route: Route,
}

enum Route {
    Line {
        hull: Vec<(f64, f64)>,
    },
    Planar {
        tangents: Vec<(Point2, f64)>,
        hull: Vec<Point2>,
        tol: f64,
    },
    Program,
}

impl<'a> Conjugate<'a> {
    pub fn new(potential: &'a PolyhedralPotential) -> Self {
        let route = match potential.dim() {
            1 => Route::Line {
                hull: lower_hull_1d(potential),
            },
            2 => planar_route(potential).unwrap_or(Route::Program),
            _ => Route::Program,
        };
        Self { potential, route }
    }

    /// Forces the linear-program route (used to cross-check the low-dimensional routes).
    pub fn linear_program(potential: &'a PolyhedralPotential) -> Self {
        Self {
            potential,
            route: Route::Program,
        }
    }

    pub fn at(&self, y: &[f64]) -> f64 {
        match &self.route {
            Route::Line { hull } => eval_lower_hull(hull, y[0]),
            Route::Planar { tangents, hull, tol } => {
                let p = [y[0], y[1]];
                let m = hull.len();
                for k in 0..m {
                    let e = geometry::sub(hull[(k + 1) % m], hull[k]);
                    let s = geometry::cross(e, geometry::sub(p, hull[k])) / e[0].hypot(e[1]);
                    if s < -tol {
                        return f64::INFINITY;
                    }
                }
                tangents
                    .iter()
                    .map(|(x, psi)| geometry::dot(*x, p) - psi)
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Route::Program => conjugate_by_program(self.potential, y),
        }
    }
}

/// Lower hull of `(y_i, v_i)` sorted by `y`, collinear points kept.
fn lower_hull_1d(p: &PolyhedralPotential) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = (0..p.len()).map(|i| (p.atom(i)[0], p.values()[i])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for q in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // b strictly above the chord a–q is not on the lower hull
            let turn = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
            if turn < 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(q);
    }
    hull
}

fn eval_lower_hull(hull: &[(f64, f64)], y: f64) -> f64 {
    let (lo, hi) = (hull[0].0, hull[hull.len() - 1].0);
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if y < lo - tol || y > hi + tol {
        return f64::INFINITY;
    }
    let y = y.clamp(lo, hi);
    let k = hull.partition_point(|q| q.0 < y);
    if k == 0 {
        return hull[0].1;
    }
    if hull[k].0 == y {
        return hull[k].1;
    }
    let (a, b) = (hull[k - 1], hull[k]);
    let t = (y - a.0) / (b.0 - a.0);
    a.1 + t * (b.1 - a.1)
}

fn planar_route(p: &PolyhedralPotential) -> Option<Route> {
    let vertices = cells::planar_vertices(p);
    if vertices.is_empty() {
        return None;
    }
    let pts: Vec<Point2> = (0..p.len()).map(|i| p.atom2(i)).collect();
    let hull: Vec<Point2> = geometry::convex_hull(&pts).into_iter().map(|i| pts[i]).collect();
    if hull.len() < 3 {
        return None;
    }
    let scale = pts.iter().fold(0.0_f64, |m, q| m.max(q[0].abs()).max(q[1].abs()));
    let tangents = vertices.into_iter().map(|x| (x, p.eval(&x).0)).collect();
    Some(Route::Planar {
        tangents,
        hull,
        tol: 1e-12 * (1.0 + scale),
    })
}

fn conjugate_by_program(p: &PolyhedralPotential, y: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lambdas: Vec<_> = p
        .values()
        .iter()
        .map(|&v| lp.add_var(v, (0.0, f64::INFINITY)))
        .collect();
    for (c, &yc) in y.iter().enumerate() {
        let row: Vec<_> = lambdas.iter().enumerate().map(|(i, &l)| (l, p.atom(i)[c])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, yc);
    }
    let ones: Vec<_> = lambdas.iter().map(|&l| (l, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let Ok(solution) = lp.solve() else {
        return f64::INFINITY;
    };
    let lambda: Vec<f64> = lambdas.iter().map(|&l| solution[l]).collect();
    polish(p, y, &lambda).unwrap_or_else(|| solution.objective())
}

/// Re-solves the affine system on the optimal support for full precision.
fn polish(p: &PolyhedralPotential, y: &[f64], lambda: &[f64]) -> Option<f64> {
    let n = p.dim();
    let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 1e-9).collect();
    if support.len() != n + 1 {
        return None;
    }
    let a = DMatrix::from_fn(n + 1, n + 1, |r, c| if r < n { p.atom(support[c])[r] } else { 1.0 });
    let b = DVector::from_fn(n + 1, |r, _| if r < n { y[r] } else { 1.0 });
    let exact = a.lu().solve(&b)?;
    if exact.iter().any(|&l| l < -1e-12) {
        return None;
    }
    Some(support.iter().zip(exact.iter()).map(|(&i, l)| l * p.values()[i]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(atoms: &[f64], values: &[f64]) -> PolyhedralPotential {
        PolyhedralPotential::from_flat(1, atoms.to_vec(), values.to_vec()).unwrap()
    }

    fn sup_norm(values: [f64; 4]) -> PolyhedralPotential {
        PolyhedralPotential::from_flat(2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0], values.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = line(&[-1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p.eval(&[2.0]), (2.0, 1));
        assert_eq!(p.eval(&[0.0]), (0.0, 0));
        let q = sup_norm([0.0; 4]);
        let (v, i) = q.eval(&[0.3, 0.7]);
        assert!((v - 0.7).abs() < 1e-15);
        assert_eq!(i, 2);
    }

    #[test]
    fn subgradient_examples() {
        let p = line(&[-1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p.subgradient(&[2.0]), &[1.0]);
        assert_eq!(p.subgradient(&[-3.0]), &[-1.0]);
        assert_eq!(sup_norm([0.0; 4]).subgradient(&[0.3, 0.7]), &[0.0, 1.0]);
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(line(&[-1.0, 1.0], &[0.0, 0.0]).conjugate_at(&[0.0]), 0.0);
        // λ = (½, ½)
        assert!((line(&[-1.0, 1.0], &[0.0, 2.0]).conjugate_at(&[0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(line(&[-1.0, 1.0], &[0.0, 0.0]).conjugate_at(&[2.0]), f64::INFINITY);
    }

    #[test]
    fn conjugate_routes_agree_in_the_plane() {
        let p = PolyhedralPotential::from_flat(
            2,
            vec![1.0, 0.1, -0.8, 0.5, 0.2, 1.1, -0.1, -0.9, 0.4, -0.3, -0.2, 0.2],
            vec![0.3, -0.2, 0.5, 0.1, -0.4, -0.6],
        )
        .unwrap();
        let planar = Conjugate::new(&p);
        assert!(matches!(planar.route, Route::Planar { .. }));
        let lp = Conjugate::linear_program(&p);
        for y in [[0.0, 0.0], [0.3, 0.2], [-0.5, 0.4], [0.1, -0.6], [3.0, 3.0]] {
            let a = planar.at(&y);
            let b = lp.at(&y);
            if a.is_infinite() {
                assert!(b.is_infinite());
            } else {
                assert!((a - b).abs() < 1e-9, "{y:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn active_set_examples() {
        assert_eq!(line(&[-1.0, 0.0, 1.0], &[0.0, 0.0, 0.0]).active_set(), vec![0, 1, 2]);
        assert_eq!(line(&[-1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]).active_set(), vec![0, 2]);
        assert_eq!(line(&[-1.0, 0.0, 1.0], &[0.0, -1.0, 0.0]).active_set(), vec![0, 1, 2]);
    }

    #[test]
    fn gauge_examples() {
        let p = line(&[-1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(p.apply_gauge(&GaugeTransform::identity(1)), p);
        let q = p.apply_gauge(&GaugeTransform {
            translation: vec![1.0],
            constant: 0.0,
        });
        assert_eq!(q.values(), &[-1.0, 1.0]);
        assert_eq!(q.eval(&[1.0]).0, 0.0);
    }

    #[test]
    fn integrability_examples() {
        let w = line(&[-1.0, 1.0], &[0.0, 0.0]).check_integrability();
        assert!(w.integrable);
        assert_eq!(w.rate, 1.0);
        assert!(!line(&[1.0, 2.0], &[0.0, 0.0]).check_integrability().integrable);
        let s = sup_norm([0.0; 4]).check_integrability();
        assert!(s.integrable);
        assert!((s.rate - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_rate_matches_angular_grid() {
        // oracle: minimize max_i y_i·θ over a fine grid of directions
        let p = sup_norm([0.0; 4]);
        let grid_min = (0..100_000)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 100_000.0;
                let th = [t.cos(), t.sin()];
                (0..4)
                    .map(|i| geometry::dot(p.atom2(i), th))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((p.check_integrability().rate - grid_min).abs() < 1e-8);
    }

    #[test]
    fn facet_enumeration_in_three_dimensions() {
        // octahedron ±e_k: inradius 1/√3
        let mut atoms = Vec::new();
        for k in 0..3 {
            for s in [1.0, -1.0] {
                let mut a = vec![0.0; 3];
                a[k] = s;
                atoms.extend(a);
            }
        }
        let p = PolyhedralPotential::from_flat(3, atoms, vec![0.0; 6]).unwrap();
        let w = p.check_integrability();
        assert!(w.rate_exact);
        assert!((w.rate - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        // axis lower bound: extents 1, divided by √3
        assert!((p.axis_rate_lower_bound() - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        let y = [0.2, -0.1, 0.3];
        assert!(p.conjugate_at(&y).abs() < 1e-12);
        assert_eq!(p.conjugate_at(&[1.0, 1.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn rejects_duplicate_atoms() {
        assert!(PolyhedralPotential::from_flat(1, vec![0.5, 0.5], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = PolyhedralPotential::from_flat(
            2,
            vec![0.1, 1.0 / 3.0, -0.7, 2.0f64.sqrt(), 1e-17, -5.5],
            vec![std::f64::consts::PI, -1e300, 0.1 + 0.2],
        )
        .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: PolyhedralPotential = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
