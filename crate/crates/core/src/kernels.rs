//! Smoothing kernels and the spectral taper weight.
//!
//! - [`triweight`]: the default second-order kernel, `(35/32)(1-x^2)^3` on
//!   `[-1, 1]`. It is twice continuously differentiable everywhere (the first
//!   two derivatives vanish at the support edges), which keeps lattice-sum
//!   discretization errors high-order.
//! - [`Kernel::eval_star`]: the jackknife-combined kernel
//!   `K*(x) = 2*sqrt(2)*K(sqrt(2)x) - K(x)` that the bias-corrected estimator
//!   effectively smooths with; it integrates to one whenever `K` does.
//! - [`qs_weight`]: the quadratic spectral lag window used when tapering
//!   autocovariances for the block-length selection rule.

use crate::error::{Error, Result};

/// Triweight kernel `(35/32)(1-x^2)^3` on `[-1, 1]`, zero outside.
pub fn triweight(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let u = 1.0 - x * x;
    35.0 / 32.0 * u * u * u
}

/// Quadratic spectral weight
/// `w(x) = 25/(12 pi^2 x^2) * (sin(6 pi x/5)/(6 pi x/5) - cos(6 pi x/5))`,
/// continuously extended by `w(0) = 1`.
///
/// For `|x| <= 1e-2` the closed form loses ~5 digits to cancellation, so a
/// Taylor expansion in `z = 6 pi x / 5` is used instead (error below 1e-15
/// on that range).
pub fn qs_weight(x: f64) -> f64 {
    let z = 1.2 * std::f64::consts::PI * x;
    if x.abs() <= 1e-2 {
        let z2 = z * z;
        return 1.0 + z2 * (-1.0 / 10.0 + z2 * (1.0 / 280.0 - z2 / 15120.0));
    }
    let z2 = z * z;
    // 25/(12 pi^2 x^2) = 3 / z^2
    3.0 / z2 * (z.sin() / z - z.cos())
}

/// Smoothing kernel: the built-in triweight or a user-supplied table.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// Default triweight kernel.
    Triweight,
    /// Tabulated kernel sampled on a uniform grid over `[-1, 1]`.
    Table(KernelTable),
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Triweight
    }
}

/// Kernel given by values on a uniform symmetric grid over `[-1, 1]`
/// (odd length, so the center value is `K(0)`), evaluated by linear
/// interpolation and zero outside the support.
///
/// Construction enforces the contract a second-order kernel needs: symmetry,
/// a positive center, and unit integral. Smoothness of the underlying kernel
/// is the caller's responsibility — a table cannot witness it.
#[derive(Debug, Clone)]
pub struct KernelTable {
    values: Vec<f64>,
}

impl KernelTable {
    /// Validates and wraps a table of kernel values on the uniform grid
    /// `x_i = -1 + 2i/(len-1)`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        if len < 3 || len % 2 == 0 {
            return Err(Error::InvalidKernel {
                reason: format!("table length must be odd and >= 3, got {len}"),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel {
                reason: "table contains non-finite values".into(),
            });
        }
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..len / 2 {
            let a = values[i];
            let b = values[len - 1 - i];
            if (a - b).abs() > 1e-12 * scale {
                return Err(Error::InvalidKernel {
                    reason: format!("table not symmetric at index {i}: {a} vs {b}"),
                });
            }
        }
        if values[len / 2] <= 0.0 {
            return Err(Error::InvalidKernel {
                reason: "center value K(0) must be positive".into(),
            });
        }
        // Trapezoidal integral over [-1, 1].
        let step = 2.0 / (len - 1) as f64;
        let integral = step
            * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[len - 1]));
        if (integral - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidKernel {
                reason: format!("integral over [-1,1] is {integral}, must be 1 within 1e-8"),
            });
        }
        Ok(KernelTable { values })
    }

    fn eval(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let m = (self.values.len() - 1) as f64;
        let pos = (x + 1.0) / 2.0 * m;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

impl Kernel {
    /// Kernel value `K(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kernel::Triweight => triweight(x),
            Kernel::Table(t) => t.eval(x),
        }
    }

    /// Jackknife-combined kernel `K*(x) = 2*sqrt(2)*K(sqrt(2)x) - K(x)`.
    ///
    /// This is the effective kernel of `2*muhat_{h/sqrt(2)} - muhat_h`; its
    /// support stays inside `[-1, 1]` and its integral equals that of `K`.
    pub fn eval_star(&self, x: f64) -> f64 {
        let s = std::f64::consts::SQRT_2;
        2.0 * s * self.eval(s * x) - self.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triweight_pinned_values() {
        assert_abs_diff_eq!(triweight(0.0), 1.09375, epsilon = 0.0);
        assert_abs_diff_eq!(triweight(0.5), 0.46142578125, epsilon = 0.0);
        assert_eq!(triweight(1.0), 0.0);
        assert_eq!(triweight(-1.2), 0.0);
    }

    #[test]
    fn star_kernel_pinned_values() {
        let k = Kernel::Triweight;
        // (2*sqrt(2) - 1) * 35/32 at zero.
        let expect = (2.0 * std::f64::consts::SQRT_2 - 1.0) * 35.0 / 32.0;
        assert_abs_diff_eq!(k.eval_star(0.0), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(k.eval_star(0.0), 1.9998421676911455, epsilon = 1e-12);
        // At 0.8 the inner term is outside its support, leaving -K(0.8).
        assert_abs_diff_eq!(k.eval_star(0.8), -35.0 / 32.0 * 0.36f64.powi(3), epsilon = 1e-15);
        assert_abs_diff_eq!(k.eval_star(0.8), -0.05103, epsilon = 1e-10);
    }

    #[test]
    fn kernels_integrate_to_one() {
        // Simpson's rule on [-1, 1]; both integrands are smooth piecewise.
        let k = Kernel::Triweight;
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let m = 20_000usize;
            let hstep = 2.0 / m as f64;
            let mut acc = f(-1.0) + f(1.0);
            for i in 1..m {
                let x = -1.0 + i as f64 * hstep;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            acc * hstep / 3.0
        };
        assert_abs_diff_eq!(simpson(&|x| k.eval(x)), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(simpson(&|x| k.eval_star(x)), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn triweight_is_c2_at_support_edge() {
        // K, K' and K'' all vanish at |x| = 1; finite differences straddling
        // the edge must agree with the inside values to discretization order.
        let eps = 1e-5;
        let d1 = (triweight(1.0 - eps) - triweight(1.0 + eps)) / (2.0 * eps);
        assert!(d1.abs() < 1e-9, "first derivative at edge: {d1}");
        let d2 = (triweight(1.0 - eps) - 2.0 * triweight(1.0) + triweight(1.0 + eps)) / (eps * eps);
        assert!(d2.abs() < 1e-4, "second derivative at edge: {d2}");
    }

    #[test]
    fn qs_weight_matches_series_near_zero() {
        // Independent oracle: higher-order Taylor series in z = 6 pi x / 5,
        // sin(z)/z - cos(z) = z^2/3 - z^4/30 + z^6/840 - z^8/45360 + ...
        let oracle = |x: f64| {
            let z = 1.2 * std::f64::consts::PI * x;
            let z2 = z * z;
            3.0 * (1.0 / 3.0 + z2 * (-1.0 / 30.0 + z2 * (1.0 / 840.0 - z2 / 45360.0)))
        };
        for &x in &[1e-6, 1e-5, 1e-4, 5e-4, 1e-3, -1e-3, -2.5e-4] {
            assert_abs_diff_eq!(qs_weight(x), oracle(x), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(qs_weight(0.0), 1.0, epsilon = 0.0);
    }

    #[test]
    fn qs_weight_branches_agree_at_switch() {
        // Continuity across the series/closed-form switch at |x| = 1e-2.
        let below = qs_weight(1e-2 - 1e-9);
        let above = qs_weight(1e-2 + 1e-9);
        assert_abs_diff_eq!(below, above, epsilon = 1e-10);
    }

    #[test]
    fn qs_weight_decays() {
        assert!(qs_weight(10.0).abs() < 0.01);
        // Symmetry.
        assert_abs_diff_eq!(qs_weight(1.7), qs_weight(-1.7), epsilon = 1e-15);
    }

    #[test]
    fn kernel_table_roundtrip_and_validation() {
        // Tabulate the triweight finely enough that its trapezoid integral
        // passes the 1e-8 gate, then check interpolation error.
        let m = 20_001usize;
        let vals: Vec<f64> = (0..m)
            .map(|i| triweight(-1.0 + 2.0 * i as f64 / (m - 1) as f64))
            .collect();
        let table = KernelTable::new(vals).expect("fine triweight table is a valid kernel");
        let k = Kernel::Table(table);
        for &x in &[0.0, 0.123, -0.777, 0.5, 0.99] {
            assert_abs_diff_eq!(k.eval(x), triweight(x), epsilon = 1e-7);
        }

        // Asymmetric table is rejected.
        let mut bad = vec![0.5, 1.0, 0.4];
        assert!(KernelTable::new(bad.clone()).is_err());
        // Even length is rejected.
        bad = vec![0.5, 1.0, 1.0, 0.5];
        assert!(KernelTable::new(bad).is_err());
        // Unnormalized table is rejected.
        let unscaled = vec![1.0, 2.0, 1.0];
        assert!(KernelTable::new(unscaled).is_err());
    }
}
