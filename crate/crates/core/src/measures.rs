//! Discrete target measures and their constructors.
//!
//! A measure is the moment measure of some convex function iff it has finite positive mass,
//! is not supported in a hyperplane through the origin, and has barycenter at the origin.
//! [`validate`] checks the three conditions numerically.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{self, Point2};
use crate::{Error, Result};

/// Default tolerance for [`validate`].
pub const DEFAULT_TOL: f64 = 1e-9;

/// Seed of the random directions used by [`sphere_atoms`] in dimension ≥ 3.
const SPHERE_SEED: u64 = 0x5EED;

/// Weighted atoms `Σ w_i δ_{y_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRecord", into = "MeasureRecord")]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// On-disk form: `{"dim": n, "atoms": [[..], ..], "weights": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureRecord {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TryFrom<MeasureRecord> for DiscreteMeasure {
    type Error = Error;

    fn try_from(r: MeasureRecord) -> Result<Self> {
        DiscreteMeasure::new(r.dim, &r.atoms, r.weights)
    }
}

impl From<DiscreteMeasure> for MeasureRecord {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureRecord {
            dim: m.dim,
            atoms: m.atoms.chunks(m.dim).map(<[f64]>::to_vec).collect(),
            weights: m.weights,
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mass_ok: bool,
    pub span_ok: bool,
    pub barycenter_ok: bool,
    pub barycenter_vector: Vec<f64>,
    pub smallest_singular_value: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.mass_ok && self.span_ok && self.barycenter_ok
    }

    /// Description of the first failed condition.
    pub fn failure(&self) -> Option<String> {
        if !self.mass_ok {
            Some("condition (i) total mass: weights must be positive and finite".into())
        } else if !self.span_ok {
            Some(format!(
                "condition (ii) span: atoms lie in a hyperplane (smallest singular value {:.3e})",
                self.smallest_singular_value
            ))
        } else if !self.barycenter_ok {
            Some(format!(
                "condition (iii) barycenter: barycenter is {:?}, not the origin",
                self.barycenter_vector
            ))
        } else {
            None
        }
    }
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
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
        Self::from_flat(dim, flat, weights)
    }

    pub fn from_flat(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty atom list".into()));
        }
        if atoms.len() != weights.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} atom coordinates for {} weights in dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite atom coordinate".into()));
        }
        Ok(Self { dim, atoms, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(dim: usize, atoms: &[Vec<f64>]) -> Result<Self> {
        let n = atoms.len().max(1) as f64;
        Self::new(dim, atoms, vec![1.0 / n; atoms.len()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom_rows(&self) -> Vec<Vec<f64>> {
        self.atoms.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_i y_i / W`.
    pub fn barycenter(&self) -> Vec<f64> {
        let w = self.total_mass();
        let mut b = vec![0.0; self.dim];
        for (y, wi) in self.atoms.chunks_exact(self.dim).zip(&self.weights) {
            b.iter_mut().zip(y).for_each(|(s, c)| *s += wi * c);
        }
        b.iter_mut().for_each(|s| *s /= w);
        b
    }

    /// Same atoms, weights scaled to total mass 1.
    pub fn normalized(&self) -> Self {
        let w = self.total_mass();
        Self {
            dim: self.dim,
            atoms: self.atoms.clone(),
            weights: self.weights.iter().map(|x| x / w).collect(),
        }
    }

    /// `Σ (w_i/W) y_i y_iᵀ`, row-major.
    pub fn second_moment(&self) -> Vec<f64> {
        let n = self.dim;
        let w = self.total_mass();
        let mut m = vec![0.0; n * n];
        for (y, wi) in self.atoms.chunks_exact(n).zip(&self.weights) {
            for a in 0..n {
                for b in 0..n {
                    m[a * n + b] += wi / w * y[a] * y[b];
                }
            }
        }
        m
    }
}

/// Checks the three conditions on `μ` at tolerance `tol`.
pub fn validate(mu: &DiscreteMeasure, tol: f64) -> Result<ValidationReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    if mu.is_empty() {
        return Err(Error::InvalidInput("empty atom list".into()));
    }
    let total = mu.total_mass();
    let mass_ok = mu.weights.iter().all(|w| w.is_finite() && *w > 0.0) && total.is_finite() && total > 0.0;
    if !mass_ok {
        return Ok(ValidationReport {
            mass_ok,
            span_ok: false,
            barycenter_ok: false,
            barycenter_vector: vec![f64::NAN; mu.dim],
            smallest_singular_value: 0.0,
        });
    }
    let n = mu.dim;
    let second = DMatrix::from_row_slice(n, n, &mu.second_moment());
    let smallest = second
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt();
    let barycenter = mu.barycenter();
    let norm = barycenter.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(ValidationReport {
        mass_ok,
        span_ok: smallest > tol,
        barycenter_ok: norm <= tol,
        barycenter_vector: barycenter,
        smallest_singular_value: smallest,
    })
}

/// Translates the atoms so that the barycenter is the origin.
pub fn center(mu: &DiscreteMeasure) -> DiscreteMeasure {
    let mut out = mu.clone();
    // a second pass removes the rounding left by the first
    for _ in 0..2 {
        let b = out.barycenter();
        for y in out.atoms.chunks_exact_mut(out.dim) {
            y.iter_mut().zip(&b).for_each(|(c, s)| *c -= s);
        }
    }
    out
}

/// `count` i.i.d. uniform points in a simple polygon, equal weights, then centered.
pub fn sample_uniform_polygon(polygon: &[Point2], count: usize, seed: u64) -> Result<DiscreteMeasure> {
    if polygon.len() < 3 || geometry::polygon_area(polygon).abs() <= 0.0 {
        return Err(Error::BadPolygon("polygon has zero area".into()));
    }
    if geometry::self_intersects(polygon) {
        return Err(Error::BadPolygon("self-intersecting polygon".into()));
    }
    if count < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 samples in the plane, got {count}"
        )));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in polygon {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut atoms = Vec::with_capacity(2 * count);
    while atoms.len() < 2 * count {
        let x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        if geometry::point_in_polygon(x, polygon) {
            atoms.extend_from_slice(&x);
        }
    }
    let mu = DiscreteMeasure::from_flat(2, atoms, vec![1.0 / count as f64; count])?;
    Ok(center(&mu))
}

/// `count` unit vectors in antipodal pairs with equal weights.
///
/// Dimension 1 gives `±1`; dimension 2 gives equally spaced angles; higher dimensions give
/// `±e_k` plus pseudo-random directions from a fixed seed.
pub fn sphere_atoms(dim: usize, count: usize) -> Result<DiscreteMeasure> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if count < 2 * dim || count % 2 == 1 {
        return Err(Error::InvalidInput(format!(
            "need an even number of at least {} atoms in dimension {dim}, got {count}",
            2 * dim
        )));
    }
    let half: Vec<Vec<f64>> = match dim {
        1 if count != 2 => {
            return Err(Error::InvalidInput(
                "the unit sphere in dimension 1 has only two points".into(),
            ))
        }
        1 => vec![vec![1.0]],
        2 => (0..count / 2)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        n => {
            let mut rng = ChaCha8Rng::seed_from_u64(SPHERE_SEED);
            let mut dirs: Vec<Vec<f64>> = (0..n)
                .map(|k| (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                .collect();
            while dirs.len() < count / 2 {
                let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    dirs.push(g.iter().map(|c| c / norm).collect());
                }
            }
            dirs
        }
    };
    let mut atoms = half.clone();
    atoms.extend(half.iter().map(|y| y.iter().map(|c| -c).collect::<Vec<f64>>()));
    DiscreteMeasure::uniform(dim, &atoms)
}

/// Vertices of a regular simplex inscribed in the unit sphere, equal weights.
pub fn simplex_vertices(dim: usize) -> Result<DiscreteMeasure> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    // coordinates of the centered basis vectors e_j of ℝ^{n+1} in the Helmert basis of
    // the sum-zero hyperplane, rescaled to unit length
    let scale = ((dim + 1) as f64 / dim as f64).sqrt();
    let atoms: Vec<Vec<f64>> = (0..=dim)
        .map(|j| {
            (1..=dim)
                .map(|k| {
                    let h = 1.0 / ((k * (k + 1)) as f64).sqrt();
                    let c = match j.cmp(&k) {
                        std::cmp::Ordering::Less => h,
                        std::cmp::Ordering::Equal => -(k as f64) * h,
                        std::cmp::Ordering::Greater => 0.0,
                    };
                    scale * c
                })
                .collect()
        })
        .collect();
    DiscreteMeasure::uniform(dim, &atoms)
}
