//! Divided differences of `exp`.
//!
//! By the Hermite–Genocchi formula `∫_Δ e^{Σ λ_k s_k} dλ = exp[s_0, …, s_m]` over the standard
//! simplex, so integrals of exponential-affine functions over simplices reduce to divided
//! differences. The naive recursion loses digits when nodes cluster, so clustered node sets
//! are expanded in a Taylor series instead.

/// Node spread below which the series is used.
const SERIES_SPREAD: f64 = 1e-2;
/// Terms of the series. With spread `< 1e-2` the truncation error is below `1e-20` relative.
const SERIES_TERMS: usize = 10;
const MAX_NODES: usize = 6;

/// `exp[s_0, …, s_m]`, repeated nodes allowed.
pub(crate) fn exp_divided_difference(nodes: &[f64]) -> f64 {
    assert!(
        !nodes.is_empty() && nodes.len() <= MAX_NODES,
        "unsupported node count {}",
        nodes.len()
    );
    let mut sorted = [0.0; MAX_NODES];
    let sorted = &mut sorted[..nodes.len()];
    sorted.copy_from_slice(nodes);
    sorted.sort_by(f64::total_cmp);
    let top = sorted[sorted.len() - 1];
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    for s in sorted.iter_mut() {
        *s -= top;
    }
    top.exp() * sorted_divided_difference(sorted)
}

fn sorted_divided_difference(d: &[f64]) -> f64 {
    let m = d.len() - 1;
    if m == 0 {
        return d[0].exp();
    }
    let spread = d[m] - d[0];
    if spread < SERIES_SPREAD {
        return series(d);
    }
    if m == 1 {
        // anchored at the larger node so that wide spreads cannot overflow
        return d[1].exp() * -(-spread).exp_m1() / spread;
    }
    (sorted_divided_difference(&d[1..]) - sorted_divided_difference(&d[..m])) / spread
}

/// `exp[d] = e^c Σ_k h_k(d − c) / (k + m)!` with `h_k` the complete homogeneous symmetric
/// polynomials and `c` the midpoint of the nodes.
fn series(d: &[f64]) -> f64 {
    let m = d.len() - 1;
    let center = 0.5 * (d[0] + d[m]);
    let mut h = [0.0; SERIES_TERMS];
    h[0] = 1.0;
    for &node in d {
        let delta = node - center;
        for k in 1..SERIES_TERMS {
            h[k] += delta * h[k - 1];
        }
    }
    let mut factorial: f64 = (1..=m).map(|k| k as f64).product();
    let mut sum = 0.0;
    for (k, hk) in h.iter().enumerate() {
        sum += hk / factorial;
        factorial *= (k + m + 1) as f64;
    }
    center.exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference by direct formula for well separated nodes.
    fn naive(nodes: &[f64]) -> f64 {
        nodes
            .iter()
            .enumerate()
            .map(|(k, &sk)| {
                let denom: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &sj)| sk - sj)
                    .product();
                sk.exp() / denom
            })
            .sum()
    }

    #[test]
    fn matches_naive_formula_when_separated() {
        for nodes in [
            vec![0.3, -1.2],
            vec![0.0, 1.0, 2.5],
            vec![-3.0, 0.7, 1.1, 4.0],
            vec![-20.0, -5.0, 3.0],
        ] {
            let a = exp_divided_difference(&nodes);
            let b = naive(&nodes);
            assert!((a - b).abs() <= 1e-13 * b.abs(), "{nodes:?}: {a} vs {b}");
        }
    }

    #[test]
    fn wide_spreads_stay_finite() {
        assert!((exp_divided_difference(&[0.0, -1289.0]) - 1.0 / 1289.0).abs() < 1e-18);
        let v = exp_divided_difference(&[-59.0, -529.0, 0.0, -59.0]);
        let b = naive(&[-59.0 + 1e-3, -529.0, 0.0, -59.0 - 1e-3]);
        assert!(v.is_finite() && (v - b).abs() <= 1e-6 * b.abs(), "{v} vs {b}");
    }

    #[test]
    fn coincident_nodes_give_scaled_exponential() {
        // exp[s, …, s] with m+1 copies = e^s / m!
        let s = 0.4_f64;
        assert!((exp_divided_difference(&[s]) - s.exp()).abs() < 1e-15);
        assert!((exp_divided_difference(&[s, s]) - s.exp()).abs() < 1e-15);
        assert!((exp_divided_difference(&[s, s, s]) - s.exp() / 2.0).abs() < 1e-15);
        assert!((exp_divided_difference(&[s, s, s, s]) - s.exp() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_across_series_threshold() {
        for m in 1..4 {
            let below: Vec<f64> = (0..=m).map(|k| k as f64 * 0.999e-2 / m as f64).collect();
            let above: Vec<f64> = (0..=m).map(|k| k as f64 * 1.001e-2 / m as f64).collect();
            let a = exp_divided_difference(&below);
            let b = exp_divided_difference(&above);
            // the two node sets differ by ~2e-5; the values must differ by about as much
            assert!((a - b).abs() < 1e-4 * a, "m={m}: {a} vs {b}");
        }
    }

    #[test]
    fn near_coincident_pair_in_three_nodes() {
        // exp[0, h, 1] = exp[0, 0, 1] + h exp[0, 0, 0, 1] + O(h²) = (e − 2) + h (e − 5/2)
        let e = std::f64::consts::E;
        let h = 1e-9;
        let expected = (e - 2.0) + h * (e - 2.5);
        let v = exp_divided_difference(&[0.0, h, 1.0]);
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
    }
}
