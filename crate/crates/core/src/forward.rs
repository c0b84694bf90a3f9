//! Forward moment measures.
//!
//! For a polyhedral potential `∇ψ_v` takes the values `y_i`, so the moment measure is the
//! atomic measure `Σ (m_i/Z) δ_{y_i}`. For analytic potentials the push-forward is
//! represented by a weighted cloud `(∇ψ(x_k), w_k)` from self-normalized importance
//! sampling.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::measures::{self, DiscreteMeasure, ValidationReport};
use crate::potential::PolyhedralPotential;
use crate::quadrature::{self, McOptions, Proposal, QuadratureMode, SAMPLE_BLOCK};
use crate::{Error, Result};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A convex potential given by evaluators.
#[derive(Clone)]
pub struct AnalyticPotential {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
    proposal_rate: f64,
}

impl std::fmt::Debug for AnalyticPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticPotential")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("proposal_rate", &self.proposal_rate)
            .finish()
    }
}

/// `log cosh t` without overflow.
fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `log Σ e^{s_i}` without overflow, and the softmax weights.
fn log_sum_exp(s: &[f64]) -> (f64, Vec<f64>) {
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - top).exp()).collect();
    let sum: f64 = e.iter().sum();
    (top + sum.ln(), e.iter().map(|x| x / sum).collect())
}

impl AnalyticPotential {
    /// `proposal_rate` is the per-coordinate rate of the two-sided exponential proposal; it
    /// must be below `2α/√n` when `ψ ≥ α|x| − β` for the importance weights to have finite
    /// variance.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        proposal_rate: f64,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: None,
            proposal_rate,
        }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn proposal_rate(&self) -> f64 {
        self.proposal_rate
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Analytic gradient if given, else central differences.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        match &self.gradient {
            Some(f) => f(x, &mut g),
            None => {
                let mut z = x.to_vec();
                for k in 0..self.dim {
                    let h = 1e-6 * (1.0 + x[k].abs());
                    z[k] = x[k] + h;
                    let up = self.value(&z);
                    z[k] = x[k] - h;
                    let down = self.value(&z);
                    z[k] = x[k];
                    g[k] = (up - down) / (2.0 * h);
                }
            }
        }
        g
    }

    /// Largest violation of midpoint convexity over random triples in `[-scale, scale]ⁿ`.
    pub fn convexity_defect(&self, trials: usize, scale: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-scale..scale)).collect();
            let b: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-scale..scale)).collect();
            let t: f64 = rng.random();
            let m: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (1.0 - t) * p + t * q).collect();
            let gap = self.value(&m) - ((1.0 - t) * self.value(&a) + t * self.value(&b));
            worst = worst.max(gap);
        }
        worst
    }

    /// `|x|²/2`; moment measure the standard Gaussian.
    pub fn gaussian(dim: usize) -> Self {
        Self::new("gaussian", dim, |x| 0.5 * x.iter().map(|c| c * c).sum::<f64>(), 1.0)
            .with_gradient(|x, g| g.copy_from_slice(x))
    }

    /// `Σ 2 log cosh(x_k/2)`; moment measure uniform on `[-1, 1]ⁿ`.
    pub fn cube(dim: usize) -> Self {
        Self::new("cube", dim, |x| x.iter().map(|c| 2.0 * log_cosh(0.5 * c)).sum(), 1.0)
            .with_gradient(|x, g| g.iter_mut().zip(x).for_each(|(gk, c)| *gk = (0.5 * c).tanh()))
    }

    /// `|x|`; moment measure on the unit sphere.
    pub fn sphere(dim: usize) -> Self {
        let rate = 1.0 / (dim as f64).sqrt();
        Self::new("sphere", dim, |x| x.iter().map(|c| c * c).sum::<f64>().sqrt(), rate).with_gradient(|x, g| {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            g.iter_mut()
                .zip(x)
                .for_each(|(gk, c)| *gk = if r > 0.0 { c / r } else { 0.0 });
        })
    }

    /// `(n+1) log Σ_i e^{x·v_i/(n+1)}` over the vertices of the regular simplex; moment
    /// measure uniform on that simplex.
    pub fn simplex(dim: usize) -> Result<Self> {
        let v = measures::simplex_vertices(dim)?.atom_rows();
        let k = (dim + 1) as f64;
        let scores = {
            let v = v.clone();
            move |x: &[f64]| -> Vec<f64> {
                v.iter()
                    .map(|y| y.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / k)
                    .collect()
            }
        };
        let s2 = scores.clone();
        // ψ ≥ max_i x·v_i ≥ |x|/n
        let rate = 1.0 / (dim as f64 * (dim as f64).sqrt());
        Ok(
            Self::new("simplex", dim, move |x| k * log_sum_exp(&scores(x)).0, rate).with_gradient(move |x, g| {
                let (_, soft) = log_sum_exp(&s2(x));
                g.iter_mut().for_each(|c| *c = 0.0);
                for (w, y) in soft.iter().zip(&v) {
                    g.iter_mut().zip(y).for_each(|(c, yc)| *c += w * yc);
                }
            }),
        )
    }

    /// `cube(Tx)`; moment measure uniform on `Tᵀ[-1, 1]ⁿ`. `t` is row-major `n × n`.
    pub fn parallelepiped(dim: usize, t: &[f64]) -> Result<Self> {
        if t.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: t.len(),
            });
        }
        let m = DMatrix::from_row_slice(dim, dim, t);
        let sigma_min = m.clone().svd(false, false).singular_values.min();
        if !(sigma_min > 0.0) {
            return Err(Error::InvalidInput("parallelepiped matrix is singular".into()));
        }
        let (ta, tb) = (t.to_vec(), t.to_vec());
        let apply = move |t: &[f64], x: &[f64]| -> Vec<f64> {
            (0..dim)
                .map(|i| (0..dim).map(|j| t[i * dim + j] * x[j]).sum())
                .collect()
        };
        Ok(Self::new(
            "parallelepiped",
            dim,
            move |x| apply(&ta, x).iter().map(|c| 2.0 * log_cosh(0.5 * c)).sum(),
            sigma_min / (dim as f64).sqrt(),
        )
        .with_gradient(move |x, g| {
            let u: Vec<f64> = (0..dim)
                .map(|i| (0..dim).map(|j| tb[i * dim + j] * x[j]).sum::<f64>())
                .collect();
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = (0..dim).map(|i| tb[i * dim + j] * (0.5 * u[i]).tanh()).sum();
            }
        }))
    }
}

/// A statistic of an estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Statistic {
    pub value: f64,
    pub se: f64,
}

/// A moment measure as weighted points with total weight 1.
#[derive(Debug, Clone, Serialize)]
pub struct MomentMeasureEstimate {
    pub dim: usize,
    /// Row-major points `y_k`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-weight errors for atomic estimates; `None` for sampled clouds.
    pub weight_errors: Option<Vec<f64>>,
    /// Source atom of each point for polyhedral estimates.
    pub atom_indices: Option<Vec<usize>>,
    pub exact: bool,
    /// Total mass before normalization.
    pub total_mass: f64,
    pub total_mass_error: f64,
    pub barycenter: Vec<f64>,
    pub barycenter_error: Vec<f64>,
    pub samples: usize,
}

impl MomentMeasureEstimate {
    fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>, weight_errors: Option<Vec<f64>>) -> Self {
        let mut out = Self {
            dim,
            points,
            weights,
            weight_errors,
            atom_indices: None,
            exact: false,
            total_mass: 1.0,
            total_mass_error: 0.0,
            barycenter: Vec::new(),
            barycenter_error: Vec::new(),
            samples: 0,
        };
        out.refresh_barycenter();
        out
    }

    fn refresh_barycenter(&mut self) {
        let stats: Vec<Statistic> = (0..self.dim).map(|k| self.statistic(|y| y[k])).collect();
        self.barycenter = stats.iter().map(|s| s.value).collect();
        self.barycenter_error = stats.iter().map(|s| s.se).collect();
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// `∫ f dμ` and its standard error.
    pub fn statistic(&self, f: impl Fn(&[f64]) -> f64) -> Statistic {
        let values: Vec<f64> = self.points.chunks_exact(self.dim).map(&f).collect();
        let value: f64 = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let se = match &self.weight_errors {
            // weights perturbed within their errors under Σw = 1
            Some(err) => values.iter().zip(err).map(|(v, e)| (v - value).abs() * e).sum(),
            None => values
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| (w * (v - value)).powi(2))
                .sum::<f64>()
                .sqrt(),
        };
        Statistic { value, se }
    }

    /// Effective sample size `1/Σw²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// The estimate conditioned on `keep`, renormalized.
    pub fn restrict(&self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| keep(self.point(k))).collect();
        let kept: f64 = idx.iter().map(|&k| self.weights[k]).sum();
        let points = idx.iter().flat_map(|&k| self.point(k).to_vec()).collect();
        let weights = idx.iter().map(|&k| self.weights[k] / kept).collect();
        let errors = self
            .weight_errors
            .as_ref()
            .map(|e| idx.iter().map(|&k| e[k] / kept).collect());
        let mut out = Self::new(self.dim, points, weights, errors);
        out.atom_indices = self.atom_indices.as_ref().map(|a| idx.iter().map(|&k| a[k]).collect());
        out.exact = self.exact;
        out.samples = self.samples;
        out.total_mass = self.total_mass * kept;
        out
    }

    /// The estimate as a discrete measure with the same points and weights.
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_flat(self.dim, self.points.clone(), self.weights.clone())
    }
}

/// Moment measure of a polyhedral potential: exact in dimensions 1 and 2, Monte Carlo with
/// `mc` otherwise.
pub fn moment_measure_polyhedral(p: &PolyhedralPotential, mc: &McOptions) -> Result<MomentMeasureEstimate> {
    let mode = if p.dim() <= 2 {
        QuadratureMode::Exact
    } else {
        QuadratureMode::MonteCarlo(mc.clone())
    };
    moment_measure_polyhedral_with(p, &mode)
}

/// Moment measure of a polyhedral potential with an explicit quadrature mode.
pub fn moment_measure_polyhedral_with(p: &PolyhedralPotential, mode: &QuadratureMode) -> Result<MomentMeasureEstimate> {
    let r = quadrature::integrate(p, mode)?;
    let atoms: Vec<usize> = (0..p.len()).filter(|&i| r.masses[i] > 0.0).collect();
    let points = atoms.iter().flat_map(|&i| p.atom(i).to_vec()).collect();
    let weights = atoms.iter().map(|&i| r.masses[i] / r.total).collect();
    let errors = atoms
        .iter()
        .map(|&i| (r.mass_errors[i] + r.masses[i] / r.total * r.total_error) / r.total)
        .collect();
    let mut out = MomentMeasureEstimate::new(p.dim(), points, weights, Some(errors));
    out.atom_indices = Some(atoms);
    out.exact = r.exact;
    out.samples = r.samples;
    out.total_mass = r.total;
    out.total_mass_error = r.total_error;
    if r.exact {
        // Σ m_i y_i carries its own certified bound
        out.barycenter_error = r.gradient_moment_error.iter().map(|e| e / r.total).collect();
    }
    Ok(out)
}

/// Weighted cloud `(∇ψ(x_k), w_k)` with `x_k` from the two-sided exponential proposal of
/// rate `a.proposal_rate()` (or `opts.proposal`).
pub fn moment_measure_sampled(a: &AnalyticPotential, opts: &McOptions) -> Result<MomentMeasureEstimate> {
    let n = a.dim();
    if opts.samples < 2 {
        return Err(Error::InvalidInput("sampling needs at least 2 samples".into()));
    }
    let q = match &opts.proposal {
        Some(q) => q.clone(),
        None => Proposal {
            rate: a.proposal_rate(),
            center: vec![0.0; n],
        },
    };
    if !(q.rate > 0.0) || q.center.len() != n {
        return Err(Error::InvalidInput(
            "proposal needs a positive rate and a center of the right dimension".into(),
        ));
    }
    let blocks = opts.samples.div_ceil(SAMPLE_BLOCK);
    let drawn: Vec<(Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let size = SAMPLE_BLOCK.min(opts.samples - b * SAMPLE_BLOCK);
            let mut sampler = q.sampler(opts.seed, b);
            let mut x = vec![0.0; n];
            let mut log_w = Vec::with_capacity(size);
            let mut grads = Vec::with_capacity(size * n);
            for _ in 0..size {
                sampler.draw(&mut x);
                log_w.push(-a.value(&x) - q.log_density(&x));
                grads.extend(a.gradient(&x));
            }
            (log_w, grads)
        })
        .collect();
    let mut log_w = Vec::with_capacity(opts.samples);
    let mut points = Vec::with_capacity(opts.samples * n);
    for (lw, g) in drawn {
        log_w.extend(lw);
        points.extend(g);
    }
    if log_w.iter().any(|w| w.is_nan()) || points.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "potential '{}' produced non-finite values",
            a.name()
        )));
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::WeightExplosion {
            relative_variance: f64::INFINITY,
        });
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let count = w.len() as f64;
    let relative_variance = count * sw2 / (sw * sw) - 1.0;
    if relative_variance > opts.explosion_threshold {
        return Err(Error::WeightExplosion { relative_variance });
    }
    let mean = sw / count;
    let sd = ((sw2 / count - mean * mean).max(0.0) / count).sqrt();
    let mut out = MomentMeasureEstimate::new(n, points, w.iter().map(|x| x / sw).collect(), None);
    out.samples = w.len();
    out.total_mass = top.exp() * mean;
    out.total_mass_error = top.exp() * sd;
    Ok(out)
}

/// Checks the necessary conditions on an estimate: barycenter within four standard errors
/// (and `1e-9` relative) of the origin, and spanning support.
pub fn necessary_conditions_report(m: &MomentMeasureEstimate) -> ValidationReport {
    let scale = (0..m.len())
        .map(|k| m.point(k).iter().map(|c| c.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let base = m
        .to_measure()
        .and_then(|mu| measures::validate(&mu, measures::DEFAULT_TOL * (1.0 + scale)));
    let (mass_ok, span_ok, smallest) = match base {
        Ok(r) => (r.mass_ok, r.span_ok, r.smallest_singular_value),
        Err(_) => (false, false, 0.0),
    };
    let barycenter_ok = m
        .barycenter
        .iter()
        .zip(&m.barycenter_error)
        .all(|(b, e)| b.abs() <= (4.0 * e).max(measures::DEFAULT_TOL * (1.0 + scale)));
    ValidationReport {
        mass_ok,
        span_ok,
        barycenter_ok,
        barycenter_vector: m.barycenter.clone(),
        smallest_singular_value: smallest,
    }
}

/// Reweights by `|y|`; `total_mass` becomes `∫|y| dμ` with its standard error.
pub fn surface_variant(m: &MomentMeasureEstimate) -> MomentMeasureEstimate {
    let norm = |y: &[f64]| y.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mass = m.statistic(norm);
    let weights = (0..m.len())
        .map(|k| m.weights[k] * norm(m.point(k)) / mass.value)
        .collect();
    let errors = m
        .weight_errors
        .as_ref()
        .map(|e| (0..m.len()).map(|k| e[k] * norm(m.point(k)) / mass.value).collect());
    let mut out = MomentMeasureEstimate::new(m.dim, m.points.clone(), weights, errors);
    out.atom_indices = m.atom_indices.clone();
    out.exact = m.exact;
    out.samples = m.samples;
    out.total_mass = mass.value;
    out.total_mass_error = mass.se;
    out
}

/// A probability measure on the line, given through `G(y) = ∫_y^∞ t dμ(t)`.
#[derive(Clone)]
pub enum LineMeasure {
    StandardGaussian,
    /// Uniform probability on `[lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl LineMeasure {
    pub fn tail_moment(&self, y: f64) -> f64 {
        match self {
            LineMeasure::StandardGaussian => (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            LineMeasure::Uniform { lo, hi } => {
                let y = y.clamp(*lo, *hi);
                (hi * hi - y * y) / (2.0 * (hi - lo))
            }
            LineMeasure::Custom(g) => g(y),
        }
    }
}

/// Largest `|(ψ⁻¹)′(−log G(y)) − 1/y|` over `grid`, with `ψ⁻¹` the inverse of `ψ` on the
/// branch right of its minimizer and the derivative taken by central differences.
///
/// Conventions: `μ` is a probability measure and `ψ` is normalized so that `∫e^{-ψ} = 1`.
pub fn one_dim_identity_residual(psi: &AnalyticPotential, mu: &LineMeasure, grid: &[f64]) -> Result<f64> {
    if psi.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: psi.dim(),
        });
    }
    let f = |x: f64| psi.value(&[x]);
    let x_min = minimize_1d(&f)?;
    let f_min = f(x_min);
    let mut worst: f64 = 0.0;
    for &y in grid {
        if !(y > 0.0) {
            return Err(Error::InvalidInput(format!("grid point {y} must be positive")));
        }
        let s = -mu.tail_moment(y).ln();
        if !(s > f_min) {
            return Err(Error::Precondition(format!("level {s} is not above min ψ = {f_min}")));
        }
        // the inverse has a square-root singularity at min ψ, so the step scales with the
        // distance to it; one Richardson step removes the O(h²) term
        let h = 1e-2 * (s - f_min);
        let central = |h: f64| -> Result<f64> {
            Ok((invert_increasing(&f, x_min, s + h)? - invert_increasing(&f, x_min, s - h)?) / (2.0 * h))
        };
        let derivative = (4.0 * central(0.5 * h)? - central(h)?) / 3.0;
        worst = worst.max((derivative - 1.0 / y).abs());
    }
    Ok(worst)
}

/// Golden-section minimizer of a convex function on the line.
fn minimize_1d(f: &impl Fn(f64) -> f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        if flo > fmid && fhi > fmid {
            break;
        }
        if flo <= fmid {
            lo -= hi - lo;
        }
        if fhi <= fmid {
            hi += hi - lo;
        }
        if hi - lo > 1e12 {
            return Err(Error::Precondition("potential has no minimizer".into()));
        }
    }
    let r = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// `x ≥ start` with `f(x) = level` by bisection; errors if `f` decreases on the bracket.
fn invert_increasing(f: &impl Fn(f64) -> f64, start: f64, level: f64) -> Result<f64> {
    let mut step = 1.0;
    let mut hi = start + step;
    while f(hi) < level {
        step *= 2.0;
        hi = start + step;
        if step > 1e12 {
            return Err(Error::Precondition(format!("ψ does not reach level {level}")));
        }
    }
    const CHECKS: usize = 64;
    let mut prev = f(start);
    for k in 1..=CHECKS {
        let x = start + (hi - start) * k as f64 / CHECKS as f64;
        let fx = f(x);
        if fx < prev - 1e-12 * (1.0 + prev.abs()) {
            return Err(Error::Precondition(format!("ψ is not monotone on [{start}, {hi}]")));
        }
        prev = fx;
    }
    let mut lo = start;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(dim: usize, atoms: &[f64], values: &[f64]) -> PolyhedralPotential {
        PolyhedralPotential::from_flat(dim, atoms.to_vec(), values.to_vec()).unwrap()
    }

    fn mc() -> McOptions {
        McOptions::new(100_000, 5)
    }

    #[test]
    fn polyhedral_examples() {
        let l2 = std::f64::consts::LN_2;
        let m = moment_measure_polyhedral(&poly(1, &[-1.0, 1.0], &[-l2, -l2]), &mc()).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-15 && (m.total_mass - 1.0).abs() < 1e-15);
        let m = moment_measure_polyhedral(&poly(1, &[-1.0, 2.0], &[0.0, 0.0]), &mc()).unwrap();
        assert!((m.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.total_mass - 1.5).abs() < 1e-15);
        assert!(m.barycenter[0].abs() < 1e-15);
        let sup = poly(2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0], &[0.0; 4]);
        let m = moment_measure_polyhedral(&sup, &mc()).unwrap();
        for w in &m.weights {
            assert!((w - 0.25).abs() < 1e-13);
        }
        assert!(necessary_conditions_report(&m).is_valid());
    }

    #[test]
    fn truncated_cloud_fails_barycenter() {
        let m = moment_measure_sampled(&AnalyticPotential::gaussian(1), &mc()).unwrap();
        assert!(necessary_conditions_report(&m).is_valid());
        let cut = m.restrict(|y| y[0] <= 0.0);
        assert!(!necessary_conditions_report(&cut).barycenter_ok);
    }

    #[test]
    fn surface_variant_reweights() {
        let m = moment_measure_polyhedral(&poly(1, &[-1.0, 2.0], &[0.0, 0.0]), &mc()).unwrap();
        let s = surface_variant(&m);
        assert!((s.weights[0] - 0.5).abs() < 1e-15 && (s.weights[1] - 0.5).abs() < 1e-15);
        assert!((s.total_mass - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let a = AnalyticPotential::cube(2);
        let fd = AnalyticPotential::new("cube-fd", 2, |x| AnalyticPotential::cube(2).value(x), 1.0);
        let x = [0.3, -1.7];
        for (g, h) in a.gradient(&x).iter().zip(fd.gradient(&x)) {
            assert!((g - h).abs() < 1e-8);
        }
    }

    #[test]
    fn gallery_potentials_are_convex() {
        let t = [2.0, 1.0, 0.0, 1.0];
        for a in [
            AnalyticPotential::gaussian(2),
            AnalyticPotential::cube(2),
            AnalyticPotential::sphere(2),
            AnalyticPotential::simplex(2).unwrap(),
            AnalyticPotential::parallelepiped(2, &t).unwrap(),
        ] {
            assert!(a.convexity_defect(2000, 5.0, 1) < 1e-12, "{}", a.name());
        }
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3_f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn identity_residual_detects_mismatch() {
        let ln2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let gauss = AnalyticPotential::new("g", 1, move |x| 0.5 * x[0] * x[0] + ln2pi, 1.0);
        let grid: Vec<f64> = (0..10).map(|k| 0.2 + 0.2 * k as f64).collect();
        let r = one_dim_identity_residual(&gauss, &LineMeasure::StandardGaussian, &grid).unwrap();
        assert!(r < 1e-6, "{r}");
        let grid: Vec<f64> = (1..10).map(|k| 0.1 * k as f64).collect();
        let r = one_dim_identity_residual(&gauss, &LineMeasure::Uniform { lo: -1.0, hi: 1.0 }, &grid).unwrap();
        assert!(r >= 0.1);
    }

    #[test]
    fn nonmonotone_branch_is_reported() {
        let wavy = AnalyticPotential::new("wavy", 1, |x| x[0] * x[0] + 3.0 * (4.0 * x[0]).sin(), 1.0);
        let r = one_dim_identity_residual(&wavy, &LineMeasure::StandardGaussian, &[0.5]);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
