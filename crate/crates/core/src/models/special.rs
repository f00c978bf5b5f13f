//! Kernels shared by the form factors.

use std::sync::OnceLock;

/// Below this argument the sphere kernel switches to its Taylor series.
pub const SPHERE_SERIES_THRESHOLD: f64 = 1e-2;
/// Below this argument `sinc` switches to its Taylor series.
pub const SINC_SERIES_THRESHOLD: f64 = 1e-4;

/// Normalized sphere amplitude `3 (sin x - x cos x) / x³`, equal to 1 at 0.
pub fn sphere_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < SPHERE_SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 10.0 + x2 * x2 / 280.0
    } else {
        let (s, c) = x.sin_cos();
        3.0 * (s - x * c) / (x * x * x)
    }
}

/// `sin x / x`
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES_THRESHOLD {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `J₁(x) / x` from the Abramowitz & Stegun polynomial fits (9.4.4, 9.4.6).
/// Finite at zero, where it equals 1/2.
pub fn bessel_j1_over_x(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let y = (ax / 3.0).powi(2);
        0.5 + y
            * (-0.562_499_85
                + y * (0.210_935_73
                    + y * (-0.039_542_89
                        + y * (0.004_433_19 + y * (-0.000_317_61 + y * 0.000_011_09)))))
    } else {
        bessel_j1(ax) / ax
    }
}

/// Cylindrical Bessel function of the first kind, order one.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        return x * bessel_j1_over_x(ax);
    }
    let y = 3.0 / ax;
    let f1 = 0.797_884_56
        + y * (0.000_001_56
            + y * (0.016_596_67
                + y * (0.000_171_05
                    + y * (-0.002_495_11 + y * (0.001_136_53 + y * -0.000_200_33)))));
    let theta1 = ax - 2.356_194_49
        + y * (0.124_996_12
            + y * (0.000_056_50
                + y * (-0.006_378_79
                    + y * (0.000_743_48 + y * (0.000_798_24 + y * -0.000_291_66)))));
    let value = f1 * theta1.cos() / ax.sqrt();
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// Gauss-Legendre rule on [0, 1]: `(nodes, weights)`, weights summing to 1.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // Map [-1, 1] to [0, 1].
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    /// The 76-point rule used for orientational averages.
    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(76))
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(u))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// J₁ by its integral representation, composite Simpson with many panels.
    fn j1_oracle(x: f64) -> f64 {
        let n = 20_000;
        let h = PI / n as f64;
        let f = |t: f64| (t - x * t.sin()).cos();
        let mut s = f(0.0) + f(PI);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 / PI
    }

    #[test]
    fn j1_matches_integral_representation() {
        for &x in &[0.0, 0.1, 1.0, 2.5, 2.999, 3.0, 3.001, 5.0, 10.0, 25.0, 80.0] {
            let got = bessel_j1(x);
            let want = j1_oracle(x);
            assert!((got - want).abs() < 1e-7, "x={x}: {got} vs {want}");
        }
        assert!((bessel_j1(-2.0) + bessel_j1(2.0)).abs() < 1e-15);
        assert_eq!(bessel_j1_over_x(0.0), 0.5);
    }

    #[test]
    fn sphere_kernel_known_values() {
        assert_eq!(sphere_kernel(0.0), 1.0);
        let want = 3.0 / (PI * PI);
        assert!((sphere_kernel(PI) - want).abs() < 1e-14);
        // first zero of tan x = x
        assert!(sphere_kernel(4.493_409_457_909_064).abs() < 1e-12);
    }

    #[test]
    fn sphere_kernel_continuous_at_switch() {
        let lo = sphere_kernel(SPHERE_SERIES_THRESHOLD - 1e-9);
        let hi = sphere_kernel(SPHERE_SERIES_THRESHOLD + 1e-9);
        assert!(((lo - hi) / hi).abs() < 1e-9);
    }

    #[test]
    fn sinc_continuous_at_switch() {
        let lo = sinc(SINC_SERIES_THRESHOLD - 1e-12);
        let hi = sinc(SINC_SERIES_THRESHOLD + 1e-12);
        assert!(((lo - hi) / hi).abs() < 1e-12);
        assert_eq!(sinc(0.0), 1.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(76);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // ∫₀¹ u^k du = 1/(k+1), exact up to degree 151
        for k in [0, 1, 2, 7, 40, 100, 151] {
            let got = rule.integrate(|u| u.powi(k));
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-13, "k={k}: {got}");
        }
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes.iter().all(|&u| u > 0.0 && u < 1.0));
    }

    #[test]
    fn odd_order_rule_has_midpoint() {
        let rule = GaussLegendre::new(5);
        assert!((rule.nodes[2] - 0.5).abs() < 1e-15);
        assert!((rule.integrate(|u| u.powi(9)) - 0.1).abs() < 1e-14);
    }
}
