use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Color decoder: two tanh hidden layers and a sigmoid output head mapping
/// the concatenated multi-level feature to RGB in \[0,1\].
#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    pub input: DVector<f64>,
    a1: DVector<f64>,
    a2: DVector<f64>,
    y: [f64; 3],
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
}

impl MlpGrads {
    pub fn zeros(mlp: &Mlp) -> Self {
        Self {
            w1: DMatrix::zeros(mlp.w1.nrows(), mlp.w1.ncols()),
            b1: DVector::zeros(mlp.b1.nrows()),
            w2: DMatrix::zeros(mlp.w2.nrows(), mlp.w2.ncols()),
            b2: DVector::zeros(mlp.b2.nrows()),
            w3: DMatrix::zeros(mlp.w3.nrows(), mlp.w3.ncols()),
            b3: DVector::zeros(mlp.b3.nrows()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        };
        Self {
            w1: init(hidden, input_dim),
            b1: DVector::zeros(hidden),
            w2: init(hidden, hidden),
            b2: DVector::zeros(hidden),
            w3: init(3, hidden),
            b3: DVector::zeros(3),
        }
    }

    pub fn zeroed(input_dim: usize, hidden: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, input_dim),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(hidden, hidden),
            b2: DVector::zeros(hidden),
            w3: DMatrix::zeros(3, hidden),
            b3: DVector::zeros(3),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn forward(&self, input: &[f64]) -> ([f64; 3], ForwardCache) {
        let x = DVector::from_column_slice(input);
        let a1 = (&self.w1 * &x + &self.b1).map(f64::tanh);
        let a2 = (&self.w2 * &a1 + &self.b2).map(f64::tanh);
        let z3 = &self.w3 * &a2 + &self.b3;
        let y = [sigmoid(z3[0]), sigmoid(z3[1]), sigmoid(z3[2])];
        (
            y,
            ForwardCache {
                input: x,
                a1,
                a2,
                y,
            },
        )
    }

    /// Backpropagates d(loss)/d(rgb), accumulating parameter gradients into
    /// `grads` and returning d(loss)/d(input).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_rgb: &[f64; 3],
        grads: &mut MlpGrads,
    ) -> DVector<f64> {
        let dz3 = DVector::from_iterator(
            3,
            (0..3).map(|i| grad_rgb[i] * cache.y[i] * (1.0 - cache.y[i])),
        );
        grads.w3 += &dz3 * cache.a2.transpose();
        grads.b3 += &dz3;
        let da2 = self.w3.transpose() * &dz3;
        let dz2 = da2.zip_map(&cache.a2, |g, a| g * (1.0 - a * a));
        grads.w2 += &dz2 * cache.a1.transpose();
        grads.b2 += &dz2;
        let da1 = self.w2.transpose() * &dz2;
        let dz1 = da1.zip_map(&cache.a1, |g, a| g * (1.0 - a * a));
        grads.w1 += &dz1 * cache.input.transpose();
        grads.b1 += &dz1;
        self.w1.transpose() * dz1
    }
}

/// Adam hyperparameters shared by the decoder and the point features.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    /// In-place Adam update of one parameter group with step count `t`
    /// (already incremented for this step).
    pub fn update(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for i in 0..params.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Adam moment buffers for the decoder parameters.
#[derive(Debug, Clone)]
pub struct DecoderAdam {
    m: MlpGrads,
    v: MlpGrads,
    t: u64,
    params: AdamParams,
}

impl DecoderAdam {
    pub fn new(mlp: &Mlp, params: AdamParams) -> Self {
        Self {
            m: MlpGrads::zeros(mlp),
            v: MlpGrads::zeros(mlp),
            t: 0,
            params,
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads, lr: f64) {
        self.t += 1;
        let t = self.t;
        let p = self.params;
        p.update(
            mlp.w1.as_mut_slice(),
            grads.w1.as_slice(),
            self.m.w1.as_mut_slice(),
            self.v.w1.as_mut_slice(),
            t,
            lr,
        );
        p.update(
            mlp.b1.as_mut_slice(),
            grads.b1.as_slice(),
            self.m.b1.as_mut_slice(),
            self.v.b1.as_mut_slice(),
            t,
            lr,
        );
        p.update(
            mlp.w2.as_mut_slice(),
            grads.w2.as_slice(),
            self.m.w2.as_mut_slice(),
            self.v.w2.as_mut_slice(),
            t,
            lr,
        );
        p.update(
            mlp.b2.as_mut_slice(),
            grads.b2.as_slice(),
            self.m.b2.as_mut_slice(),
            self.v.b2.as_mut_slice(),
            t,
            lr,
        );
        p.update(
            mlp.w3.as_mut_slice(),
            grads.w3.as_slice(),
            self.m.w3.as_mut_slice(),
            self.v.w3.as_mut_slice(),
            t,
            lr,
        );
        p.update(
            mlp.b3.as_mut_slice(),
            grads.b3.as_slice(),
            self.m.b3.as_mut_slice(),
            self.v.b3.as_mut_slice(),
            t,
            lr,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroed_network_outputs_half() {
        let mlp = Mlp::zeroed(24, 64);
        let (y, _) = mlp.forward(&[0.3; 24]);
        for c in y {
            assert_eq!(c, 0.5);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut mlp = Mlp::new(6, 8, 42);
        let input: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.25).collect();
        let target = [0.8, 0.2, 0.5];
        let loss = |mlp: &Mlp, input: &[f64]| {
            let (y, _) = mlp.forward(input);
            (0..3).map(|i| (y[i] - target[i]).powi(2)).sum::<f64>()
        };
        let (y, cache) = mlp.forward(&input);
        let grad_rgb = [
            2.0 * (y[0] - target[0]),
            2.0 * (y[1] - target[1]),
            2.0 * (y[2] - target[2]),
        ];
        let mut grads = MlpGrads::zeros(&mlp);
        let grad_input = mlp.backward(&cache, &grad_rgb, &mut grads);

        let h = 1e-6;
        // input gradient
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h;
            let mut minus = input.clone();
            minus[i] -= h;
            let fd = (loss(&mlp, &plus) - loss(&mlp, &minus)) / (2.0 * h);
            let rel = (grad_input[i] - fd).abs() / fd.abs().max(grad_input[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "input grad {i}: {} vs {}", grad_input[i], fd);
        }
        // a sampling of weight gradients from each layer
        let checks: Vec<(usize, usize, usize)> = vec![
            (1, 0, 0),
            (1, 3, 2),
            (2, 5, 5),
            (2, 0, 7),
            (3, 0, 4),
            (3, 2, 0),
        ];
        for (layer, r, c) in checks {
            let get = |m: &Mlp| match layer {
                1 => m.w1[(r, c)],
                2 => m.w2[(r, c)],
                _ => m.w3[(r, c)],
            };
            let set = |m: &mut Mlp, v: f64| match layer {
                1 => m.w1[(r, c)] = v,
                2 => m.w2[(r, c)] = v,
                _ => m.w3[(r, c)] = v,
            };
            let orig = get(&mlp);
            set(&mut mlp, orig + h);
            let lp = loss(&mlp, &input);
            set(&mut mlp, orig - h);
            let lm = loss(&mlp, &input);
            set(&mut mlp, orig);
            let fd = (lp - lm) / (2.0 * h);
            let analytic = match layer {
                1 => grads.w1[(r, c)],
                2 => grads.w2[(r, c)],
                _ => grads.w3[(r, c)],
            };
            let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-6);
            assert!(rel < 1e-4, "layer {layer} ({r},{c}): {analytic} vs {fd}");
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (p - 3)² with Adam
        let mut p = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        let adam = AdamParams::default();
        for t in 1..=2000u64 {
            let g = [2.0 * (p[0] - 3.0)];
            adam.update(&mut p, &g, &mut m, &mut v, t, 0.01);
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "p = {}", p[0]);
    }
}
