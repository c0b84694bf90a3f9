//! Numerical checks of the inequalities around moment measures, the gallery of closed-form
//! moment measures, sweeps over random instances, and negative controls.
//!
//! Every check is phrased as `lhs ≤ rhs` with `margin = rhs − lhs`; it passes when
//! `margin ≥ −tolerance`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cells;
use crate::expdd::exp_divided_difference;
use crate::forward::{self, AnalyticPotential, LineMeasure, MomentMeasureEstimate, Statistic};
use crate::geometry::{self, Point2};
use crate::measures::{self, DiscreteMeasure};
use crate::potential::{Conjugate, GaugeTransform, PolyhedralPotential};
use crate::quadrature::{self, lower_hull_strict, McOptions, QuadratureMode};
use crate::solver::{self, SolverConfig};
use crate::{Error, Result};

/// Default tolerance on margins.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Direction grid used for `m_μ` in the plane, on top of the exact breakpoints.
pub const DIRECTION_GRID: usize = 4096;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub metadata: BTreeMap<String, String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            pass: margin >= -tolerance,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    /// `|estimate − target| ≤ k·se`.
    pub fn within_standard_errors(name: impl Into<String>, stat: Statistic, target: f64, k: f64) -> Self {
        Self::new(name, (stat.value - target).abs(), k * stat.se, 0.0)
            .with("estimate", stat.value)
            .with("target", target)
            .with("se", stat.se)
    }
}

/// Quadrature and tolerance used by the checks. Monte Carlo widens each tolerance by five
/// standard errors of the quantities involved.
#[derive(Debug, Clone, PartialEq)]
pub struct Checker {
    pub mode: QuadratureMode,
    pub tol: f64,
}

impl Default for Checker {
    fn default() -> Self {
        Self {
            mode: QuadratureMode::Exact,
            tol: DEFAULT_TOL,
        }
    }
}

/// `(log Z, standard error of log Z)`.
fn log_mass(p: &PolyhedralPotential, mode: &QuadratureMode) -> Result<(f64, f64)> {
    let r = quadrature::integrate(p, mode)?;
    Ok((r.total.ln(), if r.exact { 0.0 } else { r.total_error / r.total }))
}

impl Checker {
    fn widen(&self, se: f64) -> f64 {
        self.tol + 5.0 * se
    }

    /// `(1−λ) log Z(v_0) + λ log Z(v_1) ≤ log Z((1−λ)v_0 + λv_1)`.
    ///
    /// The inequality holds for `λ ∈ [0, 1]`; other values are accepted so that
    /// extrapolation can serve as a negative control.
    pub fn prekopa_midpoint(
        &self,
        p0: &PolyhedralPotential,
        p1: &PolyhedralPotential,
        lambda: f64,
    ) -> Result<CheckResult> {
        if p0.atoms_flat() != p1.atoms_flat() {
            return Err(Error::InvalidInput("midpoint check needs a shared atom set".into()));
        }
        let mixed: Vec<f64> = p0
            .values()
            .iter()
            .zip(p1.values())
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        let pl = p0.with_values(mixed)?;
        let (z0, e0) = log_mass(p0, &self.mode)?;
        let (z1, e1) = log_mass(p1, &self.mode)?;
        let (zl, el) = log_mass(&pl, &self.mode)?;
        let lhs = (1.0 - lambda) * z0 + lambda * z1;
        let se = ((1.0 - lambda) * e0).hypot(lambda * e1).hypot(el);
        Ok(CheckResult::new("prekopa-midpoint", lhs, zl, self.widen(se)).with("lambda", lambda))
    }

    /// `Σ μ̄_i (φ_0 − φ_1)(y_i) ≤ log Z_0 − log Z_1` with `μ̄` the normalized moment measure
    /// of `ψ_0` and `φ_k` the convex envelopes of the value arrays.
    ///
    /// A non-integrable `ψ_1` makes the right side `+∞` and the check passes vacuously.
    pub fn subgradient_prekopa(&self, p0: &PolyhedralPotential, v1: &[f64]) -> Result<CheckResult> {
        let r0 = quadrature::integrate(p0, &self.mode)?;
        self.subgradient_prekopa_against(p0, v1, &r0.probabilities())
    }

    /// As [`Checker::subgradient_prekopa`] with a caller-supplied `μ̄`.
    pub fn subgradient_prekopa_against(
        &self,
        p0: &PolyhedralPotential,
        v1: &[f64],
        mu_bar: &[f64],
    ) -> Result<CheckResult> {
        let p1 = p0.with_values(v1.to_vec())?;
        if !p1.check_integrability().integrable {
            return Ok(CheckResult::new("subgradient-prekopa", 0.0, f64::INFINITY, self.tol).with("vacuous", true));
        }
        let (c0, c1) = (Conjugate::new(p0), Conjugate::new(&p1));
        let lhs: f64 = (0..p0.len())
            .filter(|&i| mu_bar[i] != 0.0)
            .map(|i| mu_bar[i] * (c0.at(p0.atom(i)) - c1.at(p0.atom(i))))
            .sum();
        let (z0, e0) = log_mass(p0, &self.mode)?;
        let (z1, e1) = log_mass(&p1, &self.mode)?;
        Ok(CheckResult::new(
            "subgradient-prekopa",
            lhs,
            z0 - z1,
            self.widen(e0.hypot(e1)),
        ))
    }

    /// `∫e^{-ψ} · ∫e^{-ψ*} ≤ (2π)ⁿ`. Centering is not enforced: an off-center potential
    /// is reported as is, and may fail.
    pub fn santalo(&self, p: &PolyhedralPotential) -> Result<CheckResult> {
        let r = quadrature::integrate(p, &self.mode)?;
        let dual = conjugate_integral(p)?;
        let product = r.total * dual;
        let se = if r.exact { 0.0 } else { r.total_error * dual };
        let barycenter: Vec<f64> = r.first_moment.iter().map(|m| m / r.total).collect();
        Ok(
            CheckResult::new("santalo", product, (2.0 * PI).powi(p.dim() as i32), self.widen(se))
                .with("barycenter", format!("{barycenter:?}")),
        )
    }

    /// `ψ(0) ≤ inf ψ + n` for `e^{-ψ}` with barycenter at the origin; `inf ψ = −ψ*(0)`.
    /// Refuses potentials that are not centered.
    pub fn fradelizi(&self, p: &PolyhedralPotential) -> Result<CheckResult> {
        let r = quadrature::integrate(p, &self.mode)?;
        let scale = 1.0
            + (0..p.len())
                .map(|i| p.atom(i).iter().fold(0.0_f64, |m, c| m.max(c.abs())))
                .fold(0.0, f64::max);
        let allowed = if r.exact {
            1e-8
        } else {
            5.0 * r.first_moment_error.iter().fold(0.0_f64, |m, e| m.max(*e)) / r.total
        };
        let off = r.first_moment.iter().map(|m| (m / r.total).abs()).fold(0.0, f64::max);
        if off > allowed * scale {
            return Err(Error::Precondition(format!(
                "barycenter of e^(-psi) is {off:.3e} away from the origin; canonicalize first"
            )));
        }
        let origin = vec![0.0; p.dim()];
        let inf = -Conjugate::new(p).at(&origin);
        let at_zero = p.eval(&origin).0;
        Ok(CheckResult::new("fradelizi", at_zero, inf + p.dim() as f64, self.tol))
    }

    /// The two lower bounds driving the existence argument, for the probability measure `μ`
    /// and the convex envelope `φ` of `p`'s values (shifted so that `φ(0) = 0`):
    ///
    /// - `c_μ ≤ (∫e^{-φ})^{1/n} (∫(φ − inf φ) dμ + 1)`
    /// - `(c_μ/2π) (∫e^{-ψ})^{1/n} − (n+1) ≤ ∫φ dμ` with `ψ = φ*`
    ///
    /// where `c_μ = κ_n^{1/n} m_μ / (4 e^{1/n})` and `m_μ = min_θ ∫|y·θ| dμ`.
    pub fn lower_bound_lemma(&self, mu: &DiscreteMeasure, p: &PolyhedralPotential) -> Result<Vec<CheckResult>> {
        self.lower_bound_lemma_scaled(mu, p, 1.0)
    }

    /// As [`Checker::lower_bound_lemma`] with `c_μ` multiplied by `factor`.
    pub fn lower_bound_lemma_scaled(
        &self,
        mu: &DiscreteMeasure,
        p: &PolyhedralPotential,
        factor: f64,
    ) -> Result<Vec<CheckResult>> {
        if mu.atoms_flat() != p.atoms_flat() {
            return Err(Error::InvalidInput(
                "potential atoms must be the measure's atoms".into(),
            ));
        }
        let n = p.dim();
        let conj = Conjugate::new(p);
        let shift = conj.at(&vec![0.0; n]);
        let shifted = p.with_values(p.values().iter().map(|v| v - shift).collect())?;
        let phi: Vec<f64> = (0..p.len()).map(|i| conj.at(p.atom(i)) - shift).collect();
        let inf_phi = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let mu = mu.normalized();
        let int_phi: f64 = mu.weights().iter().zip(&phi).map(|(w, f)| w * f).sum();
        let m_mu = min_absolute_moment(&mu)?;
        let c_mu = factor * unit_ball_volume(n).powf(1.0 / n as f64) * m_mu / (4.0 * (1.0 / n as f64).exp());
        let dual = conjugate_integral(&shifted)?;
        let r = quadrature::integrate(&shifted, &self.mode)?;
        let inv_n = 1.0 / n as f64;
        let first = CheckResult::new(
            "lower-bound-lemma",
            c_mu,
            dual.powf(inv_n) * (int_phi - inf_phi + 1.0),
            self.tol,
        )
        .with("c_mu", c_mu)
        .with("m_mu", m_mu);
        let se = if r.exact {
            0.0
        } else {
            c_mu / (2.0 * PI) * inv_n * r.total.powf(inv_n) * r.total_error / r.total
        };
        let second = CheckResult::new(
            "integral-lower-bound",
            c_mu / (2.0 * PI) * r.total.powf(inv_n) - (n as f64 + 1.0),
            int_phi,
            self.widen(se),
        )
        .with("c_mu", c_mu);
        Ok(vec![first, second])
    }
}

/// `κ_n`, the volume of the unit ball.
pub fn unit_ball_volume(n: usize) -> f64 {
    let mut kappa = [1.0, 2.0];
    for k in 2..=n {
        kappa[k % 2] *= 2.0 * PI / k as f64;
    }
    kappa[n % 2]
}

/// `m_μ = min_{|θ|=1} ∫|y·θ| dμ` for a probability measure in dimension 1 or 2.
///
/// In the plane `θ ↦ ∫|y·θ| dμ` is concave between the directions orthogonal to atoms,
/// so its minimum is attained at one of them; a uniform direction grid is scanned as well.
pub fn min_absolute_moment(mu: &DiscreteMeasure) -> Result<f64> {
    let f = |t: [f64; 2]| -> f64 {
        (0..mu.len())
            .map(|i| mu.weights()[i] * (mu.atom(i)[0] * t[0] + mu.atom(i)[1] * t[1]).abs())
            .sum()
    };
    match mu.dim() {
        1 => Ok((0..mu.len()).map(|i| mu.weights()[i] * mu.atom(i)[0].abs()).sum()),
        2 => {
            let breakpoints = (0..mu.len()).filter_map(|i| {
                let y = mu.atom(i);
                let r = y[0].hypot(y[1]);
                (r > 0.0).then(|| [-y[1] / r, y[0] / r])
            });
            let grid = (0..DIRECTION_GRID).map(|k| {
                let t = PI * k as f64 / DIRECTION_GRID as f64;
                [t.cos(), t.sin()]
            });
            Ok(breakpoints.chain(grid).map(f).fold(f64::INFINITY, f64::min))
        }
        n => Err(Error::UnsupportedDimension("minimal absolute moment", n)),
    }
}

/// `∫ e^{-ψ*}` over the atom hull, exactly: `ψ*` is affine on each face of the lower convex
/// envelope of `{(y_i, v_i)}`.
///
/// In the plane the faces are dual to the vertices `x_k` of the cell decomposition: the face
/// of `x_k` is the hull of the atoms attaining `ψ(x_k)`, and `ψ*(y) = x_k·y − ψ(x_k)` there.
pub fn conjugate_integral(p: &PolyhedralPotential) -> Result<f64> {
    match p.dim() {
        1 => {
            let (y, v) = (p.atoms_flat(), p.values());
            let hull = lower_hull_strict(y, v);
            Ok(hull
                .windows(2)
                .map(|w| (y[w[1]] - y[w[0]]) * exp_divided_difference(&[-v[w[0]], -v[w[1]]]))
                .sum())
        }
        2 => {
            let dec = cells::build_cells(p)?;
            let ymax = (0..p.len())
                .map(|i| p.atom2(i)[0].hypot(p.atom2(i)[1]))
                .fold(0.0, f64::max);
            let mut total = 0.0;
            let mut area = 0.0;
            for x in dec.vertices() {
                let (psi, _) = p.eval(&x);
                let tol = 1e-9 * (1.0 + psi.abs() + x[0].hypot(x[1]) * ymax);
                let touching: Vec<Point2> = (0..p.len())
                    .filter(|&i| geometry::dot(p.atom2(i), x) - p.values()[i] >= psi - tol)
                    .map(|i| p.atom2(i))
                    .collect();
                let face: Vec<Point2> = geometry::convex_hull(&touching).iter().map(|&k| touching[k]).collect();
                if face.len() < 3 {
                    continue;
                }
                area += geometry::polygon_area(&face).abs();
                total += quadrature::exp_affine_polygon(&face, x, psi)?;
            }
            let pts: Vec<Point2> = (0..p.len()).map(|i| p.atom2(i)).collect();
            let hull: Vec<Point2> = geometry::convex_hull(&pts).iter().map(|&k| pts[k]).collect();
            let hull_area = geometry::polygon_area(&hull).abs();
            if (area - hull_area).abs() > 1e-8 * hull_area {
                return Err(Error::BadPolygon(format!(
                    "conjugate faces cover area {area}, atom hull has {hull_area}"
                )));
            }
            Ok(total)
        }
        n => Err(Error::UnsupportedDimension("conjugate integral", n)),
    }
}

/// Checks a sampled moment measure against its declared statistics.
pub fn gallery_run(case: &str, dim: usize, samples: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let opts = McOptions::new(samples, seed);
    let k = 4.0;
    let tag = |name: &str| format!("{case}:{name}");
    let mut out = Vec::new();
    match case {
        "gaussian" => {
            let m = forward::moment_measure_sampled(&AnalyticPotential::gaussian(dim), &opts)?;
            for c in 0..dim {
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("mean[{c}]")),
                    m.statistic(|y| y[c]),
                    0.0,
                    k,
                ));
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("variance[{c}]")),
                    m.statistic(|y| y[c] * y[c]),
                    1.0,
                    k,
                ));
            }
        }
        "cube" => {
            let m = forward::moment_measure_sampled(&AnalyticPotential::cube(dim), &opts)?;
            for c in 0..dim {
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("mean[{c}]")),
                    m.statistic(|y| y[c]),
                    0.0,
                    k,
                ));
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("mean-abs[{c}]")),
                    m.statistic(|y| y[c].abs()),
                    0.5,
                    k,
                ));
            }
            out.push(support_check(tag("support"), &m, |y| y.iter().all(|c| c.abs() <= 1.0)));
        }
        "sphere" => {
            let m = forward::moment_measure_sampled(&AnalyticPotential::sphere(dim), &opts)?;
            let worst = (0..m.len())
                .map(|i| (m.point(i).iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs())
                .fold(0.0, f64::max);
            out.push(CheckResult::new(tag("unit-radius"), worst, 1e-9, 0.0));
            for c in 0..dim {
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("mean[{c}]")),
                    m.statistic(|y| y[c]),
                    0.0,
                    k,
                ));
            }
        }
        "simplex" => {
            let m = forward::moment_measure_sampled(&AnalyticPotential::simplex(dim)?, &opts)?;
            for c in 0..dim {
                out.push(CheckResult::within_standard_errors(
                    tag(&format!("mean[{c}]")),
                    m.statistic(|y| y[c]),
                    0.0,
                    k,
                ));
            }
            // uniform on the regular simplex with unit vertices: E|y|² = 1/(n+2)
            out.push(CheckResult::within_standard_errors(
                tag("mean-square-norm"),
                m.statistic(|y| y.iter().map(|c| c * c).sum()),
                1.0 / (dim as f64 + 2.0),
                k,
            ));
            let vertices = measures::simplex_vertices(dim)?;
            // y is inside iff y·v_i ≥ −1/n for every vertex (facets opposite v_i)
            let inside = move |y: &[f64]| {
                (0..vertices.len()).all(|i| {
                    vertices.atom(i).iter().zip(y).map(|(a, b)| a * b).sum::<f64>() >= -1.0 / dim as f64 - 1e-12
                })
            };
            out.push(support_check(tag("support"), &m, inside));
        }
        "parallelepiped" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7A11);
            let t = loop {
                let t: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let m = nalgebra::DMatrix::from_row_slice(dim, dim, &t);
                if m.determinant().abs() > 0.2 {
                    break t;
                }
            };
            let m = forward::moment_measure_sampled(&AnalyticPotential::parallelepiped(dim, &t)?, &opts)?;
            // y = Tᵀu with u uniform on the cube: E[y yᵀ] = TᵀT/3
            for a in 0..dim {
                for b in a..dim {
                    let target: f64 = (0..dim).map(|i| t[i * dim + a] * t[i * dim + b]).sum::<f64>() / 3.0;
                    out.push(CheckResult::within_standard_errors(
                        tag(&format!("second-moment[{a}{b}]")),
                        m.statistic(|y| y[a] * y[b]),
                        target,
                        k,
                    ));
                }
            }
            let tt = nalgebra::DMatrix::from_row_slice(dim, dim, &t).transpose();
            let lu = tt.lu();
            let inside = move |y: &[f64]| {
                let u = lu
                    .solve(&nalgebra::DVector::from_column_slice(y))
                    .expect("invertible map");
                u.iter().all(|c| c.abs() <= 1.0 + 1e-9)
            };
            out.push(support_check(tag("support"), &m, inside));
        }
        other => return Err(Error::InvalidInput(format!("unknown gallery case '{other}'"))),
    }
    Ok(out
        .into_iter()
        .map(|r| r.with("samples", samples).with("seed", seed))
        .collect())
}

fn support_check(name: String, m: &MomentMeasureEstimate, inside: impl Fn(&[f64]) -> bool) -> CheckResult {
    let outside = (0..m.len()).filter(|&i| !inside(m.point(i))).count();
    CheckResult::new(name, outside as f64, 0.0, 0.0)
}

/// Named families of checks run over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Prekopa,
    Subgradient,
    Santalo,
    Fradelizi,
    LowerBound,
    NegativeControls,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Prekopa,
        Suite::Subgradient,
        Suite::Santalo,
        Suite::Fradelizi,
        Suite::LowerBound,
        Suite::NegativeControls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Prekopa => "prekopa",
            Suite::Subgradient => "subgradient",
            Suite::Santalo => "santalo",
            Suite::Fradelizi => "fradelizi",
            Suite::LowerBound => "lower-bound",
            Suite::NegativeControls => "negative-controls",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite '{s}'")))
    }
}

/// One line of a sweep ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub name: String,
    pub seed: u64,
    pub margin: f64,
    pub pass: bool,
}

/// Runs `suite` for each seed in parallel; rows come back in seed order.
pub fn sweep(suite: Suite, seeds: std::ops::Range<u64>) -> Result<Vec<LedgerRow>> {
    let per_seed: Vec<Vec<CheckResult>> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| run_suite(suite, seed))
        .collect::<Result<_>>()?;
    Ok(seeds
        .zip(per_seed)
        .flat_map(|(seed, rs)| {
            rs.into_iter().map(move |r| LedgerRow {
                name: r.name,
                seed,
                margin: r.margin,
                pass: r.pass,
            })
        })
        .collect())
}

/// Checks of `suite` on the instance generated from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    let checker = Checker::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Prekopa => {
            let p0 = random_potential(&mut rng, 8);
            let v1: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p1 = p0.with_values(v1)?;
            let lambda = if seed.is_multiple_of(2) {
                0.5
            } else {
                rng.random_range(0.0..1.0)
            };
            Ok(vec![checker.prekopa_midpoint(&p0, &p1, lambda)?.with("seed", seed)])
        }
        Suite::Subgradient => {
            let mu = random_measure(&mut rng, 6);
            let (p0, _) = solver::solve(&mu, &SolverConfig::default())?;
            let v1: Vec<f64> = p0.values().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            Ok(vec![checker.subgradient_prekopa(&p0, &v1)?.with("seed", seed)])
        }
        Suite::Santalo => {
            let (p, _) = solver::canonicalize(&random_potential(&mut rng, 10))?;
            Ok(vec![checker.santalo(&p)?.with("seed", seed)])
        }
        Suite::Fradelizi => {
            let (p, _) = solver::canonicalize(&random_potential(&mut rng, 10))?;
            Ok(vec![checker.fradelizi(&p)?.with("seed", seed)])
        }
        Suite::LowerBound => {
            let mu = random_measure(&mut rng, 8);
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), v)?;
            Ok(checker
                .lower_bound_lemma(&mu, &p)?
                .into_iter()
                .map(|r| r.with("seed", seed))
                .collect())
        }
        Suite::NegativeControls => negative_controls(seed),
    }
}

/// Random centered planar measure whose atoms surround the origin.
fn random_measure(rng: &mut ChaCha8Rng, count: usize) -> DiscreteMeasure {
    loop {
        let atoms: Vec<f64> = (0..2 * count).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
        let Ok(mu) = DiscreteMeasure::from_flat(2, atoms, weights) else {
            continue;
        };
        let mu = measures::center(&mu);
        let Ok(p) = PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), vec![0.0; count]) else {
            continue;
        };
        if p.check_integrability().rate > 0.05 {
            return mu;
        }
    }
}

/// Random planar potential with the origin well inside the atom hull.
fn random_potential(rng: &mut ChaCha8Rng, count: usize) -> PolyhedralPotential {
    let mu = random_measure(rng, count);
    let v = (0..count).map(|_| rng.random_range(-0.5..0.5)).collect();
    PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), v).expect("distinct atoms")
}

/// A control passes when the planted violation is caught.
fn control(name: &str, caught: bool, underlying: Option<&CheckResult>) -> CheckResult {
    let (lhs, rhs, margin) = underlying.map_or((f64::NAN, f64::NAN, f64::NAN), |r| (r.lhs, r.rhs, r.margin));
    CheckResult {
        name: format!("control:{name}"),
        lhs,
        rhs,
        margin,
        tolerance: underlying.map_or(0.0, |r| r.tolerance),
        pass: caught,
        metadata: BTreeMap::from([("expects".to_string(), "violation".to_string())]),
    }
}

/// Planted violations; every returned result passes iff its checker flagged the violation.
pub fn negative_controls(seed: u64) -> Result<Vec<CheckResult>> {
    let checker = Checker::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // extrapolating the midpoint check beyond [0, 1] reverses it
    let p0 = random_potential(&mut rng, 8);
    let p1 = p0.with_values((0..8).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let r = checker.prekopa_midpoint(&p0, &p1, 2.0)?;
    out.push(control("prekopa-extrapolated", !r.pass, Some(&r)));

    // a measure other than the moment measure of ψ_0 is not a supergradient
    let r0 = quadrature::integrate(&p0, &QuadratureMode::Exact)?;
    let mu_bar = r0.probabilities();
    let mut heaviest: Vec<usize> = (0..mu_bar.len()).collect();
    heaviest.sort_by(|&i, &j| mu_bar[j].total_cmp(&mu_bar[i]));
    let mut wrong = mu_bar.clone();
    let (a, b) = (heaviest[0], heaviest[1]);
    let shift = 0.5 * wrong[b];
    wrong[a] += shift;
    wrong[b] -= shift;
    // first order the violation is step·|wrong − μ̄|², second order it is O(step²)
    let step = 1e-4;
    let v1: Vec<f64> = p0
        .values()
        .iter()
        .zip(wrong.iter().zip(&mu_bar))
        .map(|(v, (w, m))| v - step * (w - m))
        .collect();
    let r = checker.subgradient_prekopa_against(&p0, &v1, &wrong)?;
    out.push(control("subgradient-wrong-measure", !r.pass, Some(&r)));

    // |x| + log 2 translated by 3: product 4 sinh(3)/3 > 2π
    let abs = PolyhedralPotential::from_flat(1, vec![-1.0, 1.0], vec![-std::f64::consts::LN_2; 2])?;
    let moved = abs.apply_gauge(&GaugeTransform {
        translation: vec![3.0],
        constant: 0.0,
    });
    let r = checker.santalo(&moved)?;
    out.push(control("santalo-off-center", !r.pass, Some(&r)));

    let refused = matches!(checker.fradelizi(&moved), Err(Error::Precondition(_)));
    out.push(control("fradelizi-uncentered", refused, None));

    let mu = random_measure(&mut rng, 8);
    let p = PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), vec![0.0; 8])?;
    let rs = checker.lower_bound_lemma_scaled(&mu, &p, 1e3)?;
    out.push(control("lower-bound-inflated", !rs[0].pass, Some(&rs[0])));

    let cloud = forward::moment_measure_sampled(&AnalyticPotential::gaussian(1), &McOptions::new(100_000, seed))?;
    let cut = cloud.restrict(|y| y[0] <= 0.0);
    let report = forward::necessary_conditions_report(&cut);
    out.push(control("truncated-barycenter", !report.barycenter_ok, None));

    let cube = forward::moment_measure_sampled(&AnalyticPotential::cube(2), &McOptions::new(100_000, seed))?;
    let r = CheckResult::within_standard_errors("cube:mean-abs", cube.statistic(|y| y[0].abs()), 0.6, 4.0);
    out.push(control("wrong-gallery-statistic", !r.pass, Some(&r)));

    let ln2pi = 0.5 * (2.0 * PI).ln();
    let gauss = AnalyticPotential::new("gaussian-1d", 1, move |x| 0.5 * x[0] * x[0] + ln2pi, 1.0);
    let grid: Vec<f64> = (1..10).map(|k| 0.1 * k as f64).collect();
    let residual = forward::one_dim_identity_residual(&gauss, &LineMeasure::Uniform { lo: -1.0, hi: 1.0 }, &grid)?;
    let r = CheckResult::new("identity-residual", residual, 1e-6, 0.0);
    out.push(control("identity-mismatch", !r.pass, Some(&r)));

    Ok(out.into_iter().map(|r| r.with("seed", seed)).collect())
}
