use nalgebra::{Cholesky, DMatrix, DVector};

use crate::geometry::{DepthImage, Grid};

use super::{Kernel, ScaleCovError};

/// Escalating diagonal jitter tried before giving up on the factorization.
const JITTERS: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Mean model of the scale field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMean {
    /// Fixed prior mean (1 preserves the depth prior far from observations).
    Constant(f64),
    /// Constant mean fitted to the observations by generalized least
    /// squares, so constant scale fields are reproduced exactly; a single
    /// observation falls back to the prior mean 1.
    FittedConstant,
}

#[derive(Debug, Clone)]
pub struct ScaleCovConfig {
    /// Observation noise standard deviation σ_n.
    pub sigma_n: f64,
    /// Upper bound on observations entering the cubic solve; excess valid
    /// pixels are subsampled in a spatially stratified pattern.
    pub n_obs_max: usize,
    pub mean: ScaleMean,
    /// Adds ln(prior depth) as a third feature channel next to (u/W, v/H).
    pub log_depth_feature: bool,
}

impl Default for ScaleCovConfig {
    fn default() -> Self {
        Self {
            sigma_n: 0.05,
            n_obs_max: 1024,
            mean: ScaleMean::FittedConstant,
            log_depth_feature: false,
        }
    }
}

/// Completed scale field, its variance and the resulting depth.
#[derive(Debug, Clone)]
pub struct ScalePosterior {
    pub scale: Grid<f64>,
    pub variance: Grid<f64>,
    pub completed: DepthImage,
}

struct Features {
    dim: usize,
    inv_w: f64,
    inv_h: f64,
    log_depth: bool,
}

impl Features {
    fn of(&self, x: usize, y: usize, prior: &DepthImage) -> [f64; 3] {
        let mut f = [x as f64 * self.inv_w, y as f64 * self.inv_h, 0.0];
        if self.log_depth {
            f[2] = prior.depth(x, y).map_or(0.0, f64::ln);
        }
        f
    }
}

/// Spatially stratified subsample: observations are binned into a coarse
/// tile grid and drawn round-robin across tiles, which spreads the kept set
/// over the image deterministically.
fn stratified_subsample(
    pixels: &[(usize, usize)],
    width: usize,
    height: usize,
    keep: usize,
) -> Vec<(usize, usize)> {
    if pixels.len() <= keep {
        return pixels.to_vec();
    }
    let tiles = (keep as f64).sqrt().ceil() as usize;
    let tiles = tiles.clamp(1, 64);
    let mut bins: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tiles * tiles];
    for &(x, y) in pixels {
        let tx = x * tiles / width.max(1);
        let ty = y * tiles / height.max(1);
        bins[ty.min(tiles - 1) * tiles + tx.min(tiles - 1)].push((x, y));
    }
    let mut out = Vec::with_capacity(keep);
    let mut round = 0;
    while out.len() < keep {
        let mut any = false;
        for bin in &bins {
            if let Some(p) = bin.get(round) {
                out.push(*p);
                any = true;
                if out.len() == keep {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        round += 1;
    }
    out
}

struct Posterior {
    chol: Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    beta: f64,
    obs_features: Vec<[f64; 3]>,
    feat: Features,
}

impl Posterior {
    fn query(&self, kernel: &dyn Kernel, x: usize, y: usize, prior: &DepthImage) -> (f64, f64) {
        let fq = self.feat.of(x, y, prior);
        let q = &fq[..self.feat.dim];
        let n = self.obs_features.len();
        let mut k_q = DVector::zeros(n);
        for (i, fo) in self.obs_features.iter().enumerate() {
            k_q[i] = kernel.eval(q, &fo[..self.feat.dim]);
        }
        let mean = self.beta + k_q.dot(&self.alpha);
        let solved = self.chol.solve(&k_q);
        let var = (kernel.diag(q) - k_q.dot(&solved)).max(0.0);
        (mean, var)
    }
}

fn build_posterior(
    observed: &DepthImage,
    prior: &DepthImage,
    kernel: &dyn Kernel,
    cfg: &ScaleCovConfig,
) -> Result<Posterior, ScaleCovError> {
    if observed.width() != prior.width() || observed.height() != prior.height() {
        return Err(ScaleCovError::ShapeMismatch(
            observed.width(),
            observed.height(),
            prior.width(),
            prior.height(),
        ));
    }
    let mut obs_pixels = Vec::new();
    for (x, y, v) in observed.validity.iter() {
        if *v && prior.is_valid(x, y) {
            obs_pixels.push((x, y));
        }
    }
    if obs_pixels.is_empty() {
        return Err(ScaleCovError::NoObservations);
    }
    let obs_pixels = stratified_subsample(
        &obs_pixels,
        observed.width(),
        observed.height(),
        cfg.n_obs_max.max(1),
    );
    let n = obs_pixels.len();

    let feat = Features {
        dim: if cfg.log_depth_feature { 3 } else { 2 },
        inv_w: 1.0 / observed.width() as f64,
        inv_h: 1.0 / observed.height() as f64,
        log_depth: cfg.log_depth_feature,
    };
    let obs_features: Vec<[f64; 3]> = obs_pixels
        .iter()
        .map(|&(x, y)| feat.of(x, y, prior))
        .collect();
    let s = DVector::from_iterator(
        n,
        obs_pixels.iter().map(|&(x, y)| {
            observed.depth(x, y).unwrap() / prior.depth(x, y).unwrap()
        }),
    );

    let base = DMatrix::from_fn(n, n, |i, j| {
        kernel.eval(&obs_features[i][..feat.dim], &obs_features[j][..feat.dim])
    });
    let mut chol = None;
    for jitter in JITTERS {
        let mut a = base.clone();
        let bump = cfg.sigma_n * cfg.sigma_n + jitter;
        for i in 0..n {
            a[(i, i)] += bump;
        }
        if let Some(c) = Cholesky::new(a) {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or(ScaleCovError::NumericalFailure)?;

    let beta = match cfg.mean {
        ScaleMean::Constant(c) => c,
        ScaleMean::FittedConstant => {
            if n < 2 {
                1.0
            } else {
                let ones = DVector::from_element(n, 1.0);
                let a_inv_s = chol.solve(&s);
                let a_inv_1 = chol.solve(&ones);
                let denom = ones.dot(&a_inv_1);
                if denom.abs() < 1e-30 {
                    1.0
                } else {
                    ones.dot(&a_inv_s) / denom
                }
            }
        }
    };
    let residual = s.map(|v| v - beta);
    let alpha = chol.solve(&residual);
    Ok(Posterior {
        chol,
        alpha,
        beta,
        obs_features,
        feat,
    })
}

/// Posterior scale mean and variance at each query pixel, from scale
/// observations s = z/ẑ at pixels valid in both images:
///
/// ```text
/// s*(q) = β + K_qn (K_nn + σ_n²I)⁻¹ (s_n − β·1)
/// Σ*(q) = k(q,q) − K_qn (K_nn + σ_n²I)⁻¹ K_nq
/// ```
pub fn gp_regress_scale(
    observed: &DepthImage,
    prior: &DepthImage,
    kernel: &dyn Kernel,
    cfg: &ScaleCovConfig,
    queries: &[(usize, usize)],
) -> Result<Vec<(f64, f64)>, ScaleCovError> {
    let posterior = build_posterior(observed, prior, kernel, cfg)?;
    Ok(queries
        .iter()
        .map(|&(x, y)| posterior.query(kernel, x, y, prior))
        .collect())
}

/// Completes a sparse or holey depth image against a dense prior. Where the
/// observation is valid the observed ratio is trusted exactly (scale z/ẑ,
/// variance 0); elsewhere the GP posterior fills in. The completed depth is
/// s̄·ẑ wherever the prior is valid.
pub fn complete_depth(
    observed: &DepthImage,
    prior: &DepthImage,
    kernel: &dyn Kernel,
    cfg: &ScaleCovConfig,
) -> Result<ScalePosterior, ScaleCovError> {
    let (w, h) = (observed.width(), observed.height());
    let mut queries = Vec::new();
    for (x, y, v) in prior.validity.iter() {
        if *v && !observed.is_valid(x, y) {
            queries.push((x, y));
        }
    }
    // trusted pixels need no solve at all when nothing is missing
    let posterior = if queries.is_empty() {
        None
    } else {
        Some(build_posterior(observed, prior, kernel, cfg)?)
    };
    // still reject the pathological case of no joint observations
    if posterior.is_none() {
        let any = observed
            .validity
            .iter()
            .any(|(x, y, v)| *v && prior.is_valid(x, y));
        if !any {
            return Err(ScaleCovError::NoObservations);
        }
    }

    let mut scale = Grid::filled(w, h, 1.0);
    let mut variance = Grid::filled(w, h, 0.0);
    let mut depth_values = Grid::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let Some(z_prior) = prior.depth(x, y) else {
                continue;
            };
            let (s, var) = if let Some(z_obs) = observed.depth(x, y) {
                (z_obs / z_prior, 0.0)
            } else if let Some(p) = &posterior {
                p.query(kernel, x, y, prior)
            } else {
                continue;
            };
            scale.set(x, y, s);
            variance.set(x, y, var);
            depth_values.set(x, y, (s * z_prior).max(0.0));
        }
    }
    Ok(ScalePosterior {
        scale,
        variance,
        completed: DepthImage::new(depth_values),
    })
}
