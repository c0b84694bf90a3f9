use moment_measures::diagnostics::{CheckResult, Checker};
use moment_measures::measures::{self, DiscreteMeasure};
use moment_measures::potential::Conjugate;
use moment_measures::quadrature::{self, QuadratureMode};
use moment_measures::solver;
use moment_measures::{GaugeTransform, PolyhedralPotential};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn measure_from(seed: u64, count: usize) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

fn values_from(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    (0..count).map(|_| rng.random_range(-0.5..0.5)).collect()
}

fn potential_from(seed: u64, count: usize) -> PolyhedralPotential {
    let mu = measure_from(seed, count);
    PolyhedralPotential::from_flat(2, mu.atoms_flat().to_vec(), values_from(seed, count)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn centering_is_idempotent(seed in any::<u64>(), count in 3usize..12) {
        let once = measures::center(&measure_from(seed, count));
        let twice = measures::center(&once);
        for (a, b) in once.atoms_flat().iter().zip(twice.atoms_flat()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn masses_are_gauge_invariant(seed in any::<u64>(), b0 in -1.0..1.0f64, b1 in -1.0..1.0f64, c in -2.0..2.0f64) {
        let p = potential_from(seed, 8);
        let q = p.apply_gauge(&GaugeTransform { translation: vec![b0, b1], constant: c });
        let rp = quadrature::integrate(&p, &QuadratureMode::Exact).unwrap();
        let rq = quadrature::integrate(&q, &QuadratureMode::Exact).unwrap();
        prop_assert!((rq.total / rp.total - c.exp()).abs() <= 1e-10 * c.exp());
        for (a, b) in rp.probabilities().iter().zip(rq.probabilities()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn cell_masses_sum_to_total(seed in any::<u64>(), count in 3usize..15) {
        let p = potential_from(seed, count);
        let r = quadrature::integrate(&p, &QuadratureMode::Exact).unwrap();
        let sum: f64 = r.masses.iter().sum();
        prop_assert!((sum - r.total).abs() <= 1e-12 * r.total);
        prop_assert!(r.masses.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn objective_is_concave_and_gradient_sums_to_zero(seed in any::<u64>()) {
        let mu = measure_from(seed, 8);
        let v0 = values_from(seed, 8);
        let v1 = values_from(seed.wrapping_add(1), 8);
        let mid: Vec<f64> = v0.iter().zip(&v1).map(|(a, b)| 0.5 * (a + b)).collect();
        let f = |v: &[f64]| solver::objective(&mu, v, &QuadratureMode::Exact).unwrap();
        prop_assert!(f(&mid) >= 0.5 * (f(&v0) + f(&v1)) - 1e-12);
        let g = solver::gradient(&mu, &v0, &QuadratureMode::Exact).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn convexified_values_give_the_same_potential(seed in any::<u64>(), x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
        let p = potential_from(seed, 10);
        let conj = Conjugate::new(&p);
        let envelope: Vec<f64> = (0..p.len()).map(|i| conj.at(p.atom(i))).collect();
        prop_assert!(envelope.iter().zip(p.values()).all(|(e, v)| *e <= v + 1e-12));
        let q = p.with_values(envelope).unwrap();
        prop_assert!((q.eval(&[x0, x1]).0 - p.eval(&[x0, x1]).0).abs() <= 1e-12);
    }

    #[test]
    fn midpoint_check_holds(seed in any::<u64>(), lambda in 0.0..1.0f64) {
        let p0 = potential_from(seed, 8);
        let p1 = p0.with_values(values_from(seed.wrapping_add(7), 8)).unwrap();
        let r = Checker::default().prekopa_midpoint(&p0, &p1, lambda).unwrap();
        prop_assert!(r.pass, "{r:?}");
    }

    #[test]
    fn check_pass_matches_margin(lhs in -10.0..10.0f64, rhs in -10.0..10.0f64, tol in 0.0..1.0f64) {
        let r = CheckResult::new("x", lhs, rhs, tol);
        prop_assert_eq!(r.pass, r.margin >= -tol);
        prop_assert_eq!(r.margin, rhs - lhs);
    }

    #[test]
    fn measure_json_round_trips(seed in any::<u64>(), count in 3usize..10) {
        let mu = measure_from(seed, count);
        let text = serde_json::to_string(&mu).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, mu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_matches_weights_and_is_canonical(seed in any::<u64>(), count in 4usize..12) {
        let mu = measure_from(seed, count);
        let (p, r) = solver::solve(&mu, &Default::default()).unwrap();
        prop_assert!(r.converged);
        let total = mu.total_mass();
        for (m, w) in r.final_masses.iter().zip(mu.weights()) {
            prop_assert!((m - w / total).abs() <= 1e-8);
        }
        let q = quadrature::integrate(&p, &QuadratureMode::Exact).unwrap();
        prop_assert!((q.total - 1.0).abs() <= 1e-10);
        prop_assert!(q.first_moment.iter().all(|b| b.abs() <= 1e-10));
        let (again, _) = solver::canonicalize(&p).unwrap();
        for (a, b) in again.values().iter().zip(p.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Slowly decaying potentials spread the exponent over thousands of units on the clip box.
    #[test]
    fn clipped_masses_match_ray_integration(seed in any::<u64>(), count in 3usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = loop {
            let atoms: Vec<f64> = (0..2 * count).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
            if let Ok(p) = PolyhedralPotential::from_flat(2, atoms, v) {
                if p.check_integrability().rate > 0.005 {
                    break p;
                }
            }
        };
        let dec = moment_measures::cells::build_cells(&p).unwrap();
        let r = quadrature::exact_masses_2d(&p, &dec, quadrature::RPolicy::Auto).unwrap();
        prop_assert!(r.total.is_finite() && r.total > 0.0);
        for cell in &dec.cells {
            let reference = quadrature::exact_cell_mass_2d(&p, cell).unwrap();
            let m = r.masses[cell.atom_index];
            prop_assert!((m - reference).abs() <= 1e-9 * r.total, "{m} vs {reference}");
        }
    }
}
