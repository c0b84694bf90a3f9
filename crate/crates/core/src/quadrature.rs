//! Integration of `e^{-ψ}` over cells.
//!
//! On cell `i` the integrand is `e^{-(y_i·x − v_i)}`, so masses and first moments reduce to
//! integrals of exponential-affine functions over polygons (exact in 1D and 2D). In any
//! dimension a Monte Carlo estimator with a product two-sided exponential proposal is
//! available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::cells::{self, CellDecomposition};
use crate::expdd::exp_divided_difference;
use crate::geometry::{self, Point2};
use crate::potential::PolyhedralPotential;
use crate::{Error, Result};

/// Relative size of the truncation tail accepted by [`RPolicy::Auto`].
pub const TAIL_FRACTION: f64 = 1e-14;
/// Default for [`McOptions::explosion_threshold`].
pub const DEFAULT_EXPLOSION_THRESHOLD: f64 = 1e3;
const BLOCK: usize = 1 << 14;

/// Masses, total mass and first moments of `e^{-ψ}` with error bars.
///
/// Error fields hold certified truncation bounds on the exact paths and standard errors on
/// the Monte Carlo path.
#[derive(Debug, Clone, Serialize)]
pub struct MassResult {
    pub masses: Vec<f64>,
    pub mass_errors: Vec<f64>,
    pub total: f64,
    pub total_error: f64,
    /// `∫ x e^{-ψ}`.
    pub first_moment: Vec<f64>,
    pub first_moment_error: Vec<f64>,
    /// `∫_{cell i} x e^{-ψ}`, row-major `N × n`.
    pub cell_moments: Vec<f64>,
    /// `Σ m_i y_i = ∫ ∇ψ e^{-ψ}`.
    pub gradient_moment: Vec<f64>,
    pub gradient_moment_error: Vec<f64>,
    /// `∫ x·∇ψ e^{-ψ} = Σ_i y_i·(cell moment i)`.
    pub ibp: f64,
    pub ibp_error: f64,
    pub exact: bool,
    /// Samples used (0 on exact paths).
    pub samples: usize,
}

impl MassResult {
    /// Mass distribution `m_i / Z`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.masses.iter().map(|m| m / self.total).collect()
    }
}

/// Truncation radius for the exact 2D path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RPolicy {
    /// Smallest `R` with `tail_bound(R) ≤ TAIL_FRACTION · Z_low`, `Z_low` a cheap lower
    /// bound on `Z`.
    Auto,
    Fixed(f64),
}

/// Product two-sided exponential proposal `q(x) = Π (λ/2) e^{-λ|x_k − c_k|}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub rate: f64,
    pub center: Vec<f64>,
}

impl Proposal {
    /// Rate `α/2` around the origin, `α` the recession rate of `p`.
    pub fn default_for(p: &PolyhedralPotential) -> Result<Self> {
        let w = p.check_integrability();
        if !w.integrable {
            return Err(Error::NotIntegrable { rate: w.rate });
        }
        Ok(Self {
            rate: 0.5 * w.rate,
            center: vec![0.0; p.dim()],
        })
    }

    pub(crate) fn log_density(&self, x: &[f64]) -> f64 {
        let l1: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c).abs()).sum();
        x.len() as f64 * (0.5 * self.rate).ln() - self.rate * l1
    }

    /// Independent sampler for block `block` of a run seeded with `seed`.
    pub(crate) fn sampler(&self, seed: u64, block: usize) -> ProposalSampler<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        ProposalSampler {
            q: self,
            rng,
            exp: Exp::new(self.rate).expect("positive proposal rate"),
        }
    }
}

pub(crate) struct ProposalSampler<'a> {
    q: &'a Proposal,
    rng: ChaCha8Rng,
    exp: Exp<f64>,
}

impl ProposalSampler<'_> {
    pub(crate) fn draw(&mut self, x: &mut [f64]) {
        for (xk, c) in x.iter_mut().zip(&self.q.center) {
            let e: f64 = self.exp.sample(&mut self.rng);
            *xk = c + if self.rng.random::<bool>() { e } else { -e };
        }
    }
}

/// Samples per block; blocks are the unit of parallelism and of seeding.
pub(crate) const SAMPLE_BLOCK: usize = BLOCK;

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    /// Largest accepted `N Σw² / (Σw)² − 1`.
    pub explosion_threshold: f64,
    /// `None` selects [`Proposal::default_for`].
    pub proposal: Option<Proposal>,
}

impl McOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            explosion_threshold: DEFAULT_EXPLOSION_THRESHOLD,
            proposal: None,
        }
    }
}

/// How [`integrate`] evaluates the integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadratureMode {
    /// Exact in dimensions 1 and 2.
    Exact,
    MonteCarlo(McOptions),
}

/// Masses of `p` with the requested method.
pub fn integrate(p: &PolyhedralPotential, mode: &QuadratureMode) -> Result<MassResult> {
    match mode {
        QuadratureMode::Exact => match p.dim() {
            1 => exact_masses_1d(p),
            2 => exact_masses_2d(p, &cells::build_cells(p)?, RPolicy::Auto),
            n => Err(Error::UnsupportedDimension("exact quadrature", n)),
        },
        QuadratureMode::MonteCarlo(opts) => mc_masses(p, opts),
    }
}

/// `∫_polygon e^{-(a·x − b)} dx` over a bounded simple polygon.
pub fn exp_affine_polygon(polygon: &[Point2], a: Point2, b: f64) -> Result<f64> {
    let (value, _) = exp_affine_polygon_with_moment(polygon, a, b)?;
    Ok(value)
}

/// `∫_polygon e^{-(a·x − b)}` and `∫_polygon x e^{-(a·x − b)}`.
pub fn exp_affine_polygon_with_moment(polygon: &[Point2], a: Point2, b: f64) -> Result<(f64, Point2)> {
    if polygon.len() < 3 {
        return Ok((0.0, [0.0, 0.0]));
    }
    if geometry::self_intersects(polygon) {
        return Err(Error::BadPolygon("self-intersecting polygon".into()));
    }
    let sign = geometry::polygon_area(polygon).signum();
    let g = |x: Point2| b - geometry::dot(a, x);
    let p0 = polygon[0];
    let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
    for k in 1..polygon.len() - 1 {
        let (p1, p2) = (polygon[k], polygon[k + 1]);
        // signed triangle areas make the fan valid for any simple polygon
        let twice_area = geometry::cross(geometry::sub(p1, p0), geometry::sub(p2, p0));
        if twice_area == 0.0 {
            continue;
        }
        let nodes = [g(p0), g(p1), g(p2)];
        mass += twice_area * exp_divided_difference(&nodes);
        for (pt, gk) in [(p0, nodes[0]), (p1, nodes[1]), (p2, nodes[2])] {
            let w = twice_area * exp_divided_difference(&[nodes[0], nodes[1], nodes[2], gk]);
            mx += w * pt[0];
            my += w * pt[1];
        }
    }
    Ok((sign * mass, [sign * mx, sign * my]))
}

/// `∫ e^{-(a·x − b)}` over the unbounded convex region `conv(vertices) + cone(rays)`, with
/// `vertices` counter-clockwise, `rays[0]` leaving the first vertex and `rays[1]` the last.
///
/// The region is swept along `d = rays[0] + rays[1]`: each edge contributes a half-strip and
/// each end vertex a wedge, all with closed-form integrals.
pub fn exp_affine_unbounded(vertices: &[Point2], rays: [Point2; 2], a: Point2, b: f64) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::BadPolygon("unbounded region without vertices".into()));
    }
    for r in rays {
        if geometry::dot(a, r) <= 0.0 {
            return Err(Error::DivergentDirection(r[0], r[1]));
        }
    }
    let d = [rays[0][0] + rays[1][0], rays[0][1] + rays[1][1]];
    let ad = geometry::dot(a, d);
    let g = |x: Point2| b - geometry::dot(a, x);
    let wedge = |v: Point2, r: Point2| g(v).exp() * geometry::cross(r, d).abs() / (geometry::dot(a, r) * ad);
    let mut total = wedge(vertices[0], rays[0]) + wedge(vertices[vertices.len() - 1], rays[1]);
    for w in vertices.windows(2) {
        let e = geometry::sub(w[1], w[0]);
        total += geometry::cross(e, d).abs() / ad * exp_divided_difference(&[g(w[0]), g(w[1])]);
    }
    Ok(total)
}

/// `Γ(s, z)` for integer `s ≥ 1`.
fn upper_gamma_int(s: usize, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut factorial = 1.0;
    for k in 1..s {
        term *= z / k as f64;
        sum += term;
        factorial *= k as f64;
    }
    factorial * (-z).exp() * sum
}

/// Surface area of the unit sphere in `ℝⁿ`.
fn sphere_area(n: usize) -> f64 {
    // |S^{n−1}| = n κ_n with κ_0 = 1, κ_1 = 2, κ_n = κ_{n−2} 2π/n
    let mut kappa = [1.0, 2.0];
    for k in 2..=n {
        kappa[k % 2] *= 2.0 * std::f64::consts::PI / k as f64;
    }
    n as f64 * kappa[n % 2]
}

fn tail_with_power(p: &PolyhedralPotential, r: f64, extra: usize) -> Result<f64> {
    let w = p.check_integrability();
    if !(w.rate > 0.0) {
        return Err(Error::NotIntegrable { rate: w.rate });
    }
    let n = p.dim();
    let s = n + extra;
    // ψ ≥ α|x| − β and |x| ≥ ‖x‖_∞ > R on the region
    Ok(w.beta.exp() * sphere_area(n) * upper_gamma_int(s, w.rate * r.max(0.0)) / w.rate.powi(s as i32))
}

/// Upper bound on `∫_{‖x‖_∞ > R} e^{-ψ}`.
pub fn tail_bound(p: &PolyhedralPotential, r: f64) -> Result<f64> {
    tail_with_power(p, r, 0)
}

/// Upper bound on `∫_{‖x‖_∞ > R} |x| e^{-ψ}`.
pub fn moment_tail_bound(p: &PolyhedralPotential, r: f64) -> Result<f64> {
    tail_with_power(p, r, 1)
}

/// Lower bound on `Z` from a small cube around the origin.
fn mass_lower_bound(p: &PolyhedralPotential) -> f64 {
    let n = p.dim();
    let l1 = (0..p.len())
        .map(|i| p.atom(i).iter().map(|c| c.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let rho = 1.0 / l1;
    let psi_max = if n <= 12 {
        (0..1usize << n)
            .map(|mask| {
                let x: Vec<f64> = (0..n).map(|k| if mask >> k & 1 == 1 { rho } else { -rho }).collect();
                p.eval(&x).0
            })
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        p.eval(&vec![0.0; n]).0 + 1.0
    };
    (2.0 * rho).powi(n as i32) * (-psi_max).exp()
}

/// Truncation radius chosen by `policy`.
pub fn choose_radius(p: &PolyhedralPotential, policy: RPolicy) -> Result<f64> {
    match policy {
        RPolicy::Fixed(r) if r > 0.0 => Ok(r),
        RPolicy::Fixed(r) => Err(Error::InvalidInput(format!("truncation radius {r} must be positive"))),
        RPolicy::Auto => {
            let target = TAIL_FRACTION * mass_lower_bound(p);
            let mut hi = 1.0;
            while tail_bound(p, hi)? > target {
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::InvalidInput(
                        "no finite truncation radius reaches the tail target".into(),
                    ));
                }
            }
            let mut lo = 0.5 * hi;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if tail_bound(p, mid)? > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(hi)
        }
    }
}

fn max_atom_norm(p: &PolyhedralPotential) -> f64 {
    (0..p.len())
        .map(|i| p.atom(i).iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Fills the derived fields of a result from per-atom masses and cell moments.
fn assemble(p: &PolyhedralPotential, masses: Vec<f64>, cell_moments: Vec<f64>) -> MassResult {
    let n = p.dim();
    let total = masses.iter().sum();
    let mut first_moment = vec![0.0; n];
    let mut gradient_moment = vec![0.0; n];
    let mut ibp = 0.0;
    for (i, m) in masses.iter().enumerate() {
        let y = p.atom(i);
        for k in 0..n {
            let c = cell_moments[i * n + k];
            first_moment[k] += c;
            gradient_moment[k] += m * y[k];
            ibp += y[k] * c;
        }
    }
    MassResult {
        mass_errors: vec![0.0; masses.len()],
        masses,
        total,
        total_error: 0.0,
        first_moment,
        first_moment_error: vec![0.0; n],
        cell_moments,
        gradient_moment,
        gradient_moment_error: vec![0.0; n],
        ibp,
        ibp_error: 0.0,
        exact: true,
        samples: 0,
    }
}

/// Exact masses of a potential on the line.
pub fn exact_masses_1d(p: &PolyhedralPotential) -> Result<MassResult> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: p.dim(),
        });
    }
    let w = p.check_integrability();
    if !w.integrable {
        return Err(Error::NotIntegrable { rate: w.rate });
    }
    let y = p.atoms_flat();
    let v = p.values();
    let hull = lower_hull_strict(y, v);
    let mut masses = vec![0.0; p.len()];
    let mut moments = vec![0.0; p.len()];
    let breaks: Vec<f64> = hull
        .windows(2)
        .map(|w| (v[w[1]] - v[w[0]]) / (y[w[1]] - y[w[0]]))
        .collect();
    for (pos, &i) in hull.iter().enumerate() {
        let lo = if pos == 0 { f64::NEG_INFINITY } else { breaks[pos - 1] };
        let hi = if pos + 1 == hull.len() {
            f64::INFINITY
        } else {
            breaks[pos]
        };
        let (m, mx) = exp_affine_interval(y[i], v[i], lo, hi);
        masses[i] = m;
        moments[i] = mx;
    }
    Ok(assemble(p, masses, moments))
}

/// `∫_lo^hi e^{v − y x}` and `∫_lo^hi x e^{v − y x}`; infinite ends need the matching sign
/// of `y`, which the lower hull guarantees.
fn exp_affine_interval(y: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = |x: f64| v - y * x;
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let len = hi - lo;
            let (ga, gb) = (g(lo), g(hi));
            let m = len * exp_divided_difference(&[ga, gb]);
            let mx = len * (lo * exp_divided_difference(&[ga, gb, ga]) + hi * exp_divided_difference(&[ga, gb, gb]));
            (m, mx)
        }
        (false, true) => {
            let c = -y;
            let e = g(hi).exp();
            (e / c, e * (hi / c - 1.0 / (c * c)))
        }
        (true, false) => {
            let c = y;
            let e = g(lo).exp();
            (e / c, e * (lo / c + 1.0 / (c * c)))
        }
        (false, false) => (f64::INFINITY, f64::NAN),
    }
}

/// Indices of the strictly convex vertices of the lower hull of `{(y_i, v_i)}`, by
/// increasing `y`.
pub(crate) fn lower_hull_strict(y: &[f64], v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut hull: Vec<usize> = Vec::new();
    for &i in &order {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let turn = (y[b] - y[a]) * (v[i] - v[a]) - (v[b] - v[a]) * (y[i] - y[a]);
            if turn <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Exact masses of a planar potential: each cell is clipped to `[-R, R]²` and integrated in
/// closed form; the truncated tail is certified by [`tail_bound`].
pub fn exact_masses_2d(
    p: &PolyhedralPotential,
    decomposition: &CellDecomposition,
    policy: RPolicy,
) -> Result<MassResult> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: p.dim(),
        });
    }
    let r = choose_radius(p, policy)?;
    let rebuilt;
    let decomposition = if r > decomposition.extent {
        rebuilt = cells::build_cells_with_extent(p, 2.0 * r)?;
        &rebuilt
    } else {
        decomposition
    };
    let per_cell: Vec<(usize, f64, Point2)> = decomposition
        .cells
        .par_iter()
        .map(|cell| {
            let i = cell.atom_index;
            let poly = cells::clip_cell(cell, r);
            exp_affine_polygon_with_moment(&poly, p.atom2(i), p.values()[i]).map(|(m, mx)| (i, m, mx))
        })
        .collect::<Result<_>>()?;
    let mut masses = vec![0.0; p.len()];
    let mut moments = vec![0.0; 2 * p.len()];
    for (i, m, mx) in per_cell {
        masses[i] = m;
        moments[2 * i] = mx[0];
        moments[2 * i + 1] = mx[1];
    }
    let mut out = assemble(p, masses, moments);
    let tail = tail_bound(p, r)?;
    let moment_tail = moment_tail_bound(p, r)?;
    let ymax = max_atom_norm(p);
    out.total_error = tail;
    out.mass_errors = vec![tail; p.len()];
    out.first_moment_error = vec![moment_tail; 2];
    out.gradient_moment_error = vec![ymax * tail; 2];
    out.ibp_error = ymax * moment_tail;
    Ok(out)
}

/// Exact mass of one planar cell without truncation (unbounded cells integrated along their
/// rays). Independent of [`exact_masses_2d`]'s clipping and tail bound.
pub fn exact_cell_mass_2d(p: &PolyhedralPotential, cell: &cells::Cell) -> Result<f64> {
    let i = cell.atom_index;
    let (a, b) = (p.atom2(i), p.values()[i]);
    if cell.bounded {
        exp_affine_polygon(&cell.vertices, a, b)
    } else if cell.rays.len() == 2 {
        exp_affine_unbounded(&cell.vertices, [cell.rays[0], cell.rays[1]], a, b)
    } else {
        Err(Error::BadPolygon(format!("cell {i} has no certified recession rays")))
    }
}

/// Per-block running sums of the Monte Carlo estimator.
#[derive(Clone)]
struct Sums {
    count: usize,
    w: f64,
    w2: f64,
    mass: Vec<f64>,
    mass2: Vec<f64>,
    cell_x: Vec<f64>,
    x2: Vec<f64>,
    grad2: Vec<f64>,
    ibp: f64,
    ibp2: f64,
}

impl Sums {
    fn new(atoms: usize, n: usize) -> Self {
        Self {
            count: 0,
            w: 0.0,
            w2: 0.0,
            mass: vec![0.0; atoms],
            mass2: vec![0.0; atoms],
            cell_x: vec![0.0; atoms * n],
            x2: vec![0.0; n],
            grad2: vec![0.0; n],
            ibp: 0.0,
            ibp2: 0.0,
        }
    }

    fn add(&mut self, o: &Sums) {
        self.count += o.count;
        self.w += o.w;
        self.w2 += o.w2;
        self.ibp += o.ibp;
        self.ibp2 += o.ibp2;
        for (a, b) in [
            (&mut self.mass, &o.mass),
            (&mut self.mass2, &o.mass2),
            (&mut self.cell_x, &o.cell_x),
            (&mut self.x2, &o.x2),
            (&mut self.grad2, &o.grad2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn run_block(p: &PolyhedralPotential, q: &Proposal, seed: u64, block: usize, size: usize) -> Sums {
    let n = p.dim();
    let mut sampler = q.sampler(seed, block);
    let mut s = Sums::new(p.len(), n);
    let mut x = vec![0.0; n];
    for _ in 0..size {
        sampler.draw(&mut x);
        let (psi, i) = p.eval(&x);
        let w = (-psi - q.log_density(&x)).exp();
        let y = p.atom(i);
        s.count += 1;
        s.w += w;
        s.w2 += w * w;
        s.mass[i] += w;
        s.mass2[i] += w * w;
        let mut xy = 0.0;
        for k in 0..n {
            s.cell_x[i * n + k] += w * x[k];
            s.x2[k] += (w * x[k]).powi(2);
            s.grad2[k] += (w * y[k]).powi(2);
            xy += x[k] * y[k];
        }
        s.ibp += w * xy;
        s.ibp2 += (w * xy).powi(2);
    }
    s
}

/// Importance-sampling estimates of the masses in any dimension.
///
/// Samples are drawn in fixed blocks, each from its own ChaCha8 stream, and the block sums
/// are reduced in order, so results depend only on the seed.
pub fn mc_masses(p: &PolyhedralPotential, opts: &McOptions) -> Result<MassResult> {
    if opts.samples < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 samples".into()));
    }
    let w = p.check_integrability();
    if !w.integrable {
        return Err(Error::NotIntegrable { rate: w.rate });
    }
    let q = match &opts.proposal {
        Some(q) if q.rate > 0.0 && q.center.len() == p.dim() => q.clone(),
        Some(_) => {
            return Err(Error::InvalidInput(
                "proposal needs a positive rate and a center of the right dimension".into(),
            ))
        }
        None => Proposal::default_for(p)?,
    };
    let n = p.dim();
    let blocks = opts.samples.div_ceil(BLOCK);
    let partial: Vec<Sums> = (0..blocks)
        .into_par_iter()
        .map(|b| run_block(p, &q, opts.seed, b, BLOCK.min(opts.samples - b * BLOCK)))
        .collect();
    let mut s = Sums::new(p.len(), n);
    partial.iter().for_each(|b| s.add(b));

    let count = s.count as f64;
    if !(s.w > 0.0) {
        return Err(Error::WeightExplosion {
            relative_variance: f64::INFINITY,
        });
    }
    let relative_variance = count * s.w2 / (s.w * s.w) - 1.0;
    if relative_variance > opts.explosion_threshold {
        return Err(Error::WeightExplosion { relative_variance });
    }
    let se = |sum: f64, sum2: f64| ((sum2 / count - (sum / count).powi(2)).max(0.0) / count).sqrt();
    let masses: Vec<f64> = s.mass.iter().map(|m| m / count).collect();
    let cell_moments: Vec<f64> = s.cell_x.iter().map(|m| m / count).collect();
    let mut out = assemble(p, masses, cell_moments);
    out.exact = false;
    out.samples = s.count;
    out.mass_errors = s.mass.iter().zip(&s.mass2).map(|(&a, &b)| se(a, b)).collect();
    out.total_error = se(s.w, s.w2);
    out.first_moment_error = (0..n).map(|k| se(out.first_moment[k] * count, s.x2[k])).collect();
    out.gradient_moment_error = (0..n).map(|k| se(out.gradient_moment[k] * count, s.grad2[k])).collect();
    out.ibp_error = se(s.ibp, s.ibp2);
    Ok(out)
}
