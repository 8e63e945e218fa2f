//! Composite Gauss-Legendre quadrature on an interval.
//!
//! Nodes and weights for the base rule are computed by Newton iteration on
//! the Legendre polynomial recurrence; the composite rule tiles the target
//! interval with equal panels. Callers request a total node budget and the
//! panel count is rounded up so that every panel carries a full base rule.

/// Order of the Gauss-Legendre rule applied on each panel.
pub const PANEL_ORDER: usize = 16;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Accurate to machine precision for n up to a few hundred.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // Interior symmetric point sits exactly at the origin.
        let (_, d) = legendre_with_derivative(n, 0.0);
        nodes[m - 1] = 0.0;
        weights[m - 1] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) via the Bonnet three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule over `[a, b]` with at least `min_points` nodes.
///
/// Returns `(x_q, w_q)` pairs; the actual node count is `min_points`
/// rounded up to a multiple of [`PANEL_ORDER`].
pub fn composite_nodes(a: f64, b: f64, min_points: usize) -> Vec<(f64, f64)> {
    assert!(b > a, "empty quadrature interval");
    let panels = min_points.div_ceil(PANEL_ORDER).max(1);
    let (base_x, base_w) = gauss_legendre(PANEL_ORDER);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * PANEL_ORDER);
    for p in 0..panels {
        let left = a + p as f64 * h;
        let mid = left + 0.5 * h;
        for (x, w) in base_x.iter().zip(&base_w) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn low_order_rules_match_tables() {
        let (x, w) = gauss_legendre(2);
        assert_abs_diff_eq!(x[0], -(1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-15);

        let (x, w) = gauss_legendre(3);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 8.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[2], (3.0f64 / 5.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn exact_on_polynomials_up_to_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(5);
        // x^8 on [-1,1] -> 2/9
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_abs_diff_eq!(s, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn composite_integrates_oscillatory_integrand() {
        // \int_0^pi sin(7x) dx = 2/7
        let nodes = composite_nodes(0.0, std::f64::consts::PI, 64);
        let s: f64 = nodes.iter().map(|(x, w)| w * (7.0 * x).sin()).sum();
        assert_abs_diff_eq!(s, 2.0 / 7.0, epsilon = 1e-13);
    }

    #[test]
    fn node_budget_rounds_up_to_full_panels() {
        let nodes = composite_nodes(0.0, 1.0, 17);
        assert_eq!(nodes.len(), 2 * PANEL_ORDER);
        let total_weight: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total_weight, 1.0, epsilon = 1e-14);
    }
}
