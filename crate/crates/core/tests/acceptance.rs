//! Acceptance criteria, one line of output per criterion. Runs without the test harness so
//! the lines are always printed; the process fails if any criterion fails.

use std::time::{Duration, Instant};

use moment_measures::diagnostics::{self, Suite};
use moment_measures::forward::{self, AnalyticPotential, LineMeasure};
use moment_measures::measures::{self, DiscreteMeasure};
use moment_measures::quadrature::{self, QuadratureMode};
use moment_measures::solver::{self, Init, SolverConfig};
use moment_measures::PolyhedralPotential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let out = f();
    println!(
        "criterion {id} {:<4} {title}: {} ({:.2} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        started.elapsed().as_secs_f64()
    );
    out.pass
}

fn random_centered_measure(rng: &mut ChaCha8Rng, count: usize) -> DiscreteMeasure {
    loop {
        let atoms: Vec<f64> = (0..2 * count).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..1.0)).collect();
        let mu = measures::center(&DiscreteMeasure::from_flat(2, atoms, weights).unwrap());
        let p = PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), vec![0.0; count]).unwrap();
        if p.check_integrability().rate > 0.05 {
            return mu;
        }
    }
}

fn random_potential(rng: &mut ChaCha8Rng, count: usize) -> PolyhedralPotential {
    let mu = random_centered_measure(rng, count);
    let v = (0..count).map(|_| rng.random_range(-0.5..0.5)).collect();
    PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), v).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn closed_form_solves() -> Outcome {
    let l2 = std::f64::consts::LN_2;
    let l4 = 4f64.ln();
    let cases = [
        (vec![-1.0, 1.0], vec![0.5, 0.5], vec![-l2, -l2]),
        (
            vec![-1.0, 0.0, 1.0],
            vec![0.25, 0.5, 0.25],
            vec![1.0 - l4, -l4, 1.0 - l4],
        ),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (atoms, weights, expected) in cases {
        let started = Instant::now();
        let mu = DiscreteMeasure::from_flat(1, atoms, weights).unwrap();
        let config = SolverConfig {
            gradient_tol: 1e-12,
            ..SolverConfig::default()
        };
        let (p, r) = solver::solve(&mu, &config).unwrap();
        let err = max_abs_diff(p.values(), &expected);
        let t = started.elapsed();
        pass &= r.converged && err <= 1e-8 && t < Duration::from_secs(1);
        detail.push(format!("{} atoms err {err:.1e} in {:.3} s", mu.len(), t.as_secs_f64()));
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let count = rng.random_range(4..=20);
        let mu = random_centered_measure(&mut rng, count);
        let v: Vec<f64> = (0..count).map(|_| rng.random_range(-0.5..0.5)).collect();
        let g = solver::gradient(&mu, &v, &QuadratureMode::Exact).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..count)
            .map(|i| {
                let mut up = v.clone();
                let mut down = v.clone();
                up[i] += h;
                down[i] -= h;
                let f = |x: &[f64]| solver::objective(&mu, x, &QuadratureMode::Exact).unwrap();
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect();
        let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        worst = worst.max(max_abs_diff(&g, &fd) / scale);
    }
    let t = started.elapsed();
    Outcome {
        pass: worst <= 1e-6 && t < Duration::from_secs(30),
        detail: format!("worst relative error {worst:.1e} over 50 instances"),
    }
}

fn zero_gradient_integral() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let p = random_potential(&mut rng, 8);
        let r = quadrature::integrate(&p, &QuadratureMode::Exact).unwrap();
        for k in 0..2 {
            let s: f64 = (0..p.len()).map(|i| r.masses[i] * p.atom(i)[k]).sum();
            worst = worst.max(s.abs() / r.total);
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max |sum m_i y_i| / Z = {worst:.1e} over 100 potentials"),
    }
}

fn gallery() -> Outcome {
    let started = Instant::now();
    let mut failed = Vec::new();
    let mut count = 0;
    for (case, dim) in [("cube", 2), ("gaussian", 3), ("sphere", 2), ("simplex", 2)] {
        for r in diagnostics::gallery_run(case, dim, 1_000_000, 11).unwrap() {
            count += 1;
            if !r.pass {
                failed.push(r.name);
            }
        }
    }
    let t = started.elapsed();
    Outcome {
        pass: failed.is_empty() && t < Duration::from_secs(60),
        detail: format!("{count} statistics at N=1e6, failed {failed:?}"),
    }
}

fn convergence_at_scale() -> Outcome {
    let square = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let hexagon: Vec<[f64; 2]> = (0..6)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / 3.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, poly, n) in [("square", square.to_vec(), 100), ("hexagon", hexagon, 200)] {
        let mu = measures::center(&measures::sample_uniform_polygon(&poly, n, 5).unwrap());
        let config = SolverConfig {
            gradient_tol: 1e-6,
            max_iters: 500,
            ..SolverConfig::default()
        };
        let started = Instant::now();
        let (_, r) = solver::solve(&mu, &config).unwrap();
        let t = started.elapsed();
        pass &= r.converged && r.final_gradient_norm <= 1e-6 && r.iterations <= 500 && t < Duration::from_secs(60);
        detail.push(format!(
            "{name} N={n}: {} iterations, residual {:.1e}, {:.2} s",
            r.iterations,
            r.final_gradient_norm,
            t.as_secs_f64()
        ));
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

fn uniqueness() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let count = rng.random_range(6..=15);
        let mu = random_centered_measure(&mut rng, count);
        let base = SolverConfig {
            gradient_tol: 1e-11,
            ..SolverConfig::default()
        };
        let (p0, _) = solver::solve(&mu, &base).unwrap();
        let random = SolverConfig {
            init: Init::Random { scale: 1.0, seed },
            ..base
        };
        let (p1, _) = solver::solve(&mu, &random).unwrap();
        worst = worst.max(max_abs_diff(p0.values(), p1.values()));
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max canonical value difference {worst:.1e} over 20 instances"),
    }
}

fn inequality_sweeps() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for suite in Suite::ALL {
        let rows = diagnostics::sweep(suite, 0..100).unwrap();
        let failed = rows.iter().filter(|r| !r.pass).count();
        if suite == Suite::NegativeControls {
            detail.push(format!(
                "{}: {} of {} caught",
                suite.name(),
                rows.len() - failed,
                rows.len()
            ));
        } else {
            let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
            pass &= worst >= -1e-9;
            detail.push(format!("{}: min margin {worst:.1e}", suite.name()));
        }
        pass &= failed == 0;
    }
    Outcome {
        pass,
        detail: detail.join("; "),
    }
}

fn one_dim_identity() -> Outcome {
    let ln2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let gauss = AnalyticPotential::new("gaussian-1d", 1, move |x| 0.5 * x[0] * x[0] + ln2pi, 1.0);
    let gauss_grid: Vec<f64> = (0..=36).map(|k| 0.2 + 0.05 * k as f64).collect();
    let l4 = 4f64.ln();
    // ∇ψ = tanh(x/2) pushes sech²(x/2)/4 forward to the uniform law on (−1, 1)
    let cube = AnalyticPotential::new("cube-1d", 1, move |x| 2.0 * (0.5 * x[0]).cosh().ln() + l4, 0.5);
    let cube_grid: Vec<f64> = (0..=16).map(|k| 0.1 + 0.05 * k as f64).collect();
    let rg = forward::one_dim_identity_residual(&gauss, &LineMeasure::StandardGaussian, &gauss_grid).unwrap();
    let rc =
        forward::one_dim_identity_residual(&cube, &LineMeasure::Uniform { lo: -1.0, hi: 1.0 }, &cube_grid).unwrap();
    Outcome {
        pass: rg <= 1e-6 && rc <= 1e-6,
        detail: format!("gaussian {rg:.1e}, cube-1d {rc:.1e}"),
    }
}

fn integration_by_parts_bound() -> Outcome {
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_residual = 0.0_f64;
    let mut count = 0;
    let mut check = |p: &PolyhedralPotential| {
        let r = quadrature::integrate(p, &QuadratureMode::Exact).unwrap();
        let n = p.dim();
        let lhs: f64 = (0..p.len())
            .map(|i| (0..n).map(|k| p.atom(i)[k] * r.cell_moments[i * n + k]).sum::<f64>())
            .sum();
        let nz = n as f64 * r.total;
        worst_violation = worst_violation.max((lhs - nz) / r.total);
        worst_residual = worst_residual.max((lhs - nz).abs() / r.total);
        count += 1;
    };
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        check(&random_potential(&mut rng, 8));
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        check(&PolyhedralPotential::from_flat(1, vec![-1.0, -0.3, 0.5, 2.0], v).unwrap());
    }
    Outcome {
        pass: worst_violation <= 1e-9,
        detail: format!("{count} instances, largest (lhs - nZ)/Z {worst_violation:.1e}, observed |residual| up to {worst_residual:.1e}"),
    }
}

fn main() {
    let results = [
        report("1", "closed-form solves", closed_form_solves),
        report("2", "gradient correctness", gradient_correctness),
        report("3", "zero gradient integral", zero_gradient_integral),
        report("4", "gallery statistics", gallery),
        report("5", "solver convergence at scale", convergence_at_scale),
        report("6", "uniqueness up to translation", uniqueness),
        report("7", "inequality sweeps and negative controls", inequality_sweeps),
        report("8", "one-dimensional identity", one_dim_identity),
        report("9", "integration by parts bound", integration_by_parts_bound),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(k, _)| k + 1)
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria {failed:?}");
        std::process::exit(1);
    }
}
