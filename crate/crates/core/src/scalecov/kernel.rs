/// Covariance function over per-pixel feature vectors. Implementations must
/// be symmetric and produce positive semi-definite Gram matrices; a learned
/// kernel can be dropped in behind this boundary.
pub trait Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;

    /// Prior variance k(x, x) of a single point.
    fn diag(&self, a: &[f64]) -> f64 {
        self.eval(a, a)
    }
}

/// Squared-exponential kernel `σ² exp(−‖a−b‖² / (2ℓ²))`.
#[derive(Debug, Clone, Copy)]
pub struct RbfKernel {
    pub length_scale: f64,
    pub signal_variance: f64,
}

impl Default for RbfKernel {
    fn default() -> Self {
        Self {
            length_scale: 0.15,
            signal_variance: 1.0,
        }
    }
}

impl Kernel for RbfKernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for (x, y) in a.iter().zip(b) {
            let d = x - y;
            d2 += d * d;
        }
        self.signal_variance * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn diag(&self, _a: &[f64]) -> f64 {
        self.signal_variance
    }
}
