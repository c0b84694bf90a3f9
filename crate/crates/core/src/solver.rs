//! Variational inverse solver.
//!
//! For a target `μ = Σ w_i δ_{y_i}` (normalized to probability) the potential values `v`
//! maximize the concave functional `I(v) = log Z(v) − Σ w_i v_i`, `Z(v) = ∫e^{-ψ_v}`. Its
//! gradient is `m_i(v)/Z(v) − w_i`, so at the maximizer the moment measure of `ψ_v` is `μ`.
//! `I` is constant along the gauge directions `1` and `(y_i·e_k)_i`; iterates are kept
//! orthogonal to them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::measures::{self, DiscreteMeasure};
use crate::potential::{GaugeTransform, PolyhedralPotential};
use crate::quadrature::{self, MassResult, McOptions, QuadratureMode};
use crate::{Error, Result};

/// Inner iterations allowed in [`canonicalize`].
const CANONICALIZE_ITERS: usize = 100;
const MAX_BACKTRACKS: usize = 60;

/// Starting values for [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Init {
    Zero,
    /// `v_i` uniform in `[-scale, scale]`.
    Random {
        scale: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop when `max_i |m_i/Z − w_i|` is at most this.
    pub gradient_tol: f64,
    pub max_iters: usize,
    pub backtrack: f64,
    pub sufficient_increase: f64,
    /// Curvature pairs kept by the quasi-Newton update.
    pub memory: usize,
    pub mode: QuadratureMode,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iters: 1000,
            backtrack: 0.5,
            sufficient_increase: 1e-4,
            memory: 10,
            mode: QuadratureMode::Exact,
            init: Init::Zero,
        }
    }
}

impl SolverConfig {
    fn check(&self) -> Result<()> {
        let ok = self.gradient_tol > 0.0
            && self.max_iters > 0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.sufficient_increase > 0.0
            && self.sufficient_increase < 0.5
            && self.memory > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver configuration {self:?}")))
        }
    }
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    /// `max_i |m_i/Z − w_i|` at each accepted iterate.
    pub gradient_trace: Vec<f64>,
    pub step_trace: Vec<f64>,
    /// Normalized masses `m_i/Z` of the returned potential.
    pub final_masses: Vec<f64>,
    pub final_gradient_norm: f64,
    pub gauge: GaugeTransform,
    pub converged: bool,
    pub evaluations: usize,
    pub wall_time_secs: f64,
}

/// `I(v)`, its gradient and the underlying masses.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub masses: MassResult,
}

impl Evaluation {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// The measure as a potential with values `v`, plus normalized weights.
fn setup(mu: &DiscreteMeasure, v: &[f64]) -> Result<(PolyhedralPotential, Vec<f64>)> {
    let p = PolyhedralPotential::from_flat(mu.dim(), mu.atoms_flat().to_vec(), v.to_vec())?;
    let total = mu.total_mass();
    Ok((p, mu.weights().iter().map(|w| w / total).collect()))
}

fn evaluate_potential(p: &PolyhedralPotential, w: &[f64], mode: &QuadratureMode) -> Result<Evaluation> {
    let masses = quadrature::integrate(p, mode)?;
    if !(masses.total > 0.0 && masses.total.is_finite()) {
        return Err(Error::NotIntegrable {
            rate: p.check_integrability().rate,
        });
    }
    let objective = masses.total.ln() - w.iter().zip(p.values()).map(|(a, b)| a * b).sum::<f64>();
    let gradient = masses
        .masses
        .iter()
        .zip(w)
        .map(|(m, wi)| m / masses.total - wi)
        .collect();
    Ok(Evaluation {
        objective,
        gradient,
        masses,
    })
}

/// `I(v)`, gradient and masses for `μ` (normalized internally).
pub fn evaluate(mu: &DiscreteMeasure, v: &[f64], mode: &QuadratureMode) -> Result<Evaluation> {
    let (p, w) = setup(mu, v)?;
    evaluate_potential(&p, &w, mode)
}

/// `I(v) = log Z(v) − Σ w_i v_i`.
pub fn objective(mu: &DiscreteMeasure, v: &[f64], mode: &QuadratureMode) -> Result<f64> {
    Ok(evaluate(mu, v, mode)?.objective)
}

/// `g_i = m_i(v)/Z(v) − w_i`.
pub fn gradient(mu: &DiscreteMeasure, v: &[f64], mode: &QuadratureMode) -> Result<Vec<f64>> {
    Ok(evaluate(mu, v, mode)?.gradient)
}

/// Orthonormal basis of the gauge directions `1, (y_i·e_1)_i, …, (y_i·e_n)_i`.
fn gauge_basis(mu: &DiscreteMeasure) -> Vec<Vec<f64>> {
    let n = mu.dim();
    let mut raw = vec![vec![1.0; mu.len()]];
    for k in 0..n {
        raw.push((0..mu.len()).map(|i| mu.atom(i)[k]).collect());
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut u in raw {
        // twice is enough for Gram–Schmidt to be orthogonal to working precision
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&u, q);
                u.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&u, &u).sqrt();
        if norm > 1e-12 {
            basis.push(u.iter().map(|a| a / norm).collect());
        }
    }
    basis
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
}

/// Limited-memory inverse-Hessian model of `−I`.
struct Memory {
    depth: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            return;
        }
        if self.pairs.len() == self.depth {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, 1.0 / sy));
    }

    /// Ascent direction `H g` for the concave objective.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (k, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(a, b)| *a -= alpha[k] * b);
        }
        if let Some((s, y, _)) = self.pairs.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|a| *a *= gamma);
        }
        for (k, (s, y, rho)) in self.pairs.iter().enumerate() {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(a, b)| *a += (alpha[k] - beta) * b);
        }
        q
    }
}

/// Iteration-specific quadrature: Monte Carlo runs draw common random numbers within an
/// iteration and fresh ones across iterations.
fn mode_for_iteration(mode: &QuadratureMode, iter: usize) -> QuadratureMode {
    match mode {
        QuadratureMode::Exact => QuadratureMode::Exact,
        QuadratureMode::MonteCarlo(o) => QuadratureMode::MonteCarlo(McOptions {
            seed: o.seed.wrapping_add(iter as u64),
            ..o.clone()
        }),
    }
}

/// Solves for the potential whose moment measure is `μ`; the returned potential is
/// canonicalized (barycenter of `e^{-ψ}` at the origin, `Z = 1`).
///
/// Running out of iterations is not an error: the report has `converged = false`.
pub fn solve(mu: &DiscreteMeasure, config: &SolverConfig) -> Result<(PolyhedralPotential, SolveReport)> {
    let start = Instant::now();
    config.check()?;
    let report = measures::validate(mu, measures::DEFAULT_TOL * (1.0 + max_abs(mu.atoms_flat())))?;
    if let Some(f) = report.failure() {
        return Err(Error::Precondition(f));
    }
    if mu.dim() > 2 && config.mode == QuadratureMode::Exact {
        return Err(Error::UnsupportedDimension("exact quadrature", mu.dim()));
    }
    let basis = gauge_basis(mu);
    let mut v = match &config.init {
        Init::Zero => vec![0.0; mu.len()],
        Init::Random { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..mu.len()).map(|_| rng.random_range(-scale..=*scale)).collect()
        }
    };
    project(&mut v, &basis);
    let (mut p, w) = setup(mu, &v)?;

    let mut evaluations = 0;
    let mut eval_at = |p: &PolyhedralPotential, iter: usize| {
        evaluations += 1;
        evaluate_potential(p, &w, &mode_for_iteration(&config.mode, iter))
    };
    let mut current = eval_at(&p, 0)?;
    if let QuadratureMode::MonteCarlo(_) = config.mode {
        let floor = current.masses.mass_errors.iter().fold(0.0_f64, |m, e| m.max(*e)) / current.masses.total;
        if config.gradient_tol < floor {
            return Err(Error::Precondition(format!(
                "gradient tolerance {:.3e} is below the Monte Carlo noise floor {floor:.3e}",
                config.gradient_tol
            )));
        }
    }
    let mut memory = Memory {
        depth: config.memory,
        pairs: Vec::new(),
    };
    let mut objective_trace = vec![current.objective];
    let mut gradient_trace = vec![current.gradient_norm()];
    let mut step_trace = vec![0.0];
    let mut converged = current.gradient_norm() <= config.gradient_tol;
    let mut iterations = 0;

    while !converged && iterations < config.max_iters {
        iterations += 1;
        if let QuadratureMode::MonteCarlo(_) = config.mode {
            current = eval_at(&p, iterations)?;
        }
        let mut g = current.gradient.clone();
        project(&mut g, &basis);
        let mut d = memory.direction(&g);
        project(&mut d, &basis);
        let mut slope = dot(&g, &d);
        if memory.pairs.is_empty() || !(slope > 0.0) {
            memory.pairs.clear();
            let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            d = g.iter().map(|x| x / scale).collect();
            slope = dot(&g, &d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial_v: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let trial = p
                .with_values(trial_v.clone())
                .and_then(|q| eval_at(&q, iterations).map(|e| (q, e)));
            if let Ok((q, e)) = trial {
                let increase = e.objective - current.objective;
                // by concavity a nonnegative slope at the trial point means I did not
                // decrease on the segment, even when rounding hides the increase
                if increase >= config.sufficient_increase * t * slope
                    || (dot(&e.gradient, &d) >= 0.0 && increase >= -1e-14 * current.objective.abs())
                {
                    accepted = Some((trial_v, q, e));
                    break;
                }
            }
            t *= config.backtrack;
        }
        let Some((new_v, q, e)) = accepted else {
            break;
        };
        let s: Vec<f64> = new_v.iter().zip(&v).map(|(a, b)| a - b).collect();
        let mut g_new = e.gradient.clone();
        project(&mut g_new, &basis);
        // curvature of −I: y = −(g_new − g)
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        v = new_v;
        p = q;
        current = e;
        objective_trace.push(current.objective);
        gradient_trace.push(current.gradient_norm());
        step_trace.push(t);
        converged = current.gradient_norm() <= config.gradient_tol;
    }

    let (canonical, gauge) = canonicalize_with(&p, &config.mode)?;
    let final_eval = evaluate_potential(&canonical, &w, &config.mode)?;
    evaluations += 1;
    let report = SolveReport {
        iterations,
        objective_trace,
        gradient_trace,
        step_trace,
        final_masses: final_eval.masses.probabilities(),
        final_gradient_norm: final_eval.gradient_norm(),
        gauge,
        converged,
        evaluations,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((canonical, report))
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Gauge-normalizes `p`: barycenter of `e^{-ψ}` at the origin and `Z = 1`, using exact
/// quadrature in dimensions 1 and 2.
pub fn canonicalize(p: &PolyhedralPotential) -> Result<(PolyhedralPotential, GaugeTransform)> {
    canonicalize_with(p, &QuadratureMode::Exact)
}

/// As [`canonicalize`] with the given quadrature. Translating `ψ` by `b` moves the
/// barycenter by exactly `b`, so each inner step is `b = −∫x e^{-ψ}/Z`; under Monte Carlo a
/// single step is taken.
pub fn canonicalize_with(
    p: &PolyhedralPotential,
    mode: &QuadratureMode,
) -> Result<(PolyhedralPotential, GaugeTransform)> {
    let n = p.dim();
    let mut q = p.clone();
    let mut gauge = GaugeTransform::identity(n);
    let steps = if matches!(mode, QuadratureMode::Exact) {
        CANONICALIZE_ITERS
    } else {
        1
    };
    let scale = 1.0 + (0..p.len()).map(|i| max_abs(p.atom(i))).fold(0.0, f64::max);
    let mut masses = quadrature::integrate(&q, mode)?;
    let mut settled = false;
    for _ in 0..steps {
        let b: Vec<f64> = masses.first_moment.iter().map(|m| -m / masses.total).collect();
        if max_abs(&b) <= 1e-14 * scale {
            settled = true;
            break;
        }
        let step = GaugeTransform {
            translation: b,
            constant: 0.0,
        };
        q = q.apply_gauge(&step);
        gauge = gauge.then(&step);
        masses = quadrature::integrate(&q, mode)?;
    }
    if !settled && steps > 1 {
        let residual: Vec<f64> = masses.first_moment.iter().map(|m| m / masses.total).collect();
        if max_abs(&residual) > 1e-10 * scale {
            return Err(Error::NotConverged(steps));
        }
    }
    let step = GaugeTransform {
        translation: vec![0.0; n],
        constant: -masses.total.ln(),
    };
    q = q.apply_gauge(&step);
    gauge = gauge.then(&step);
    Ok((q, gauge))
}
