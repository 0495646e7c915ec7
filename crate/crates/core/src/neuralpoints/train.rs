use nalgebra::Vector3;
use rand::Rng;

use super::decoder::{AdamParams, DecoderAdam, MlpGrads};
use super::set::NeuralPointSet;
use super::NeuralPointError;

/// A published keyframe converted to a colored point set, with its training
/// counter.
#[derive(Debug, Clone)]
pub struct TrainFrame {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub trained_iterations: u32,
}

/// Insertion-ordered frame queue with least-trained-first scheduling.
#[derive(Debug, Clone, Default)]
pub struct TrainFrameQueue {
    frames: Vec<TrainFrame>,
}

impl TrainFrameQueue {
    pub fn push_frame(&mut self, points: Vec<Vector3<f64>>, colors: Vec<[f64; 3]>) {
        assert_eq!(points.len(), colors.len());
        self.frames.push(TrainFrame {
            points,
            colors,
            trained_iterations: 0,
        });
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[TrainFrame] {
        &self.frames
    }

    /// Frame with the minimum trained-iteration counter; ties go to the
    /// oldest (lowest index).
    pub fn least_trained(&self) -> Option<usize> {
        self.frames
            .iter()
            .enumerate()
            .min_by_key(|(idx, f)| (f.trained_iterations, *idx))
            .map(|(idx, _)| idx)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainerConfig {
    /// Point-color pairs sampled per step.
    pub n_train: usize,
    pub base_lr: f64,
    /// Global iterations trained at `jump_start_factor`× the base rate.
    pub jump_start_iters: u64,
    pub jump_start_factor: f64,
    /// Disables the jump start (for ablations).
    pub jump_start: bool,
    pub adam: AdamParams,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            n_train: 1024,
            base_lr: 1e-3,
            jump_start_iters: 5,
            jump_start_factor: 10.0,
            jump_start: true,
            adam: AdamParams::default(),
        }
    }
}

/// Online trainer state: the decoder optimizer and the global step counter.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainerConfig,
    pub global_iteration: u64,
    decoder_adam: Option<DecoderAdam>,
}

impl Trainer {
    pub fn new(config: TrainerConfig) -> Self {
        Self {
            config,
            global_iteration: 0,
            decoder_adam: None,
        }
    }

    pub fn effective_lr(&self) -> f64 {
        if self.config.jump_start && self.global_iteration < self.config.jump_start_iters {
            self.config.base_lr * self.config.jump_start_factor
        } else {
            self.config.base_lr
        }
    }

    /// One online training step: picks the least-trained frame, samples
    /// `n_train` point-color pairs, allocates neural points for them,
    /// predicts colors, and applies one Adam update of the decoder and the
    /// contributing point features against the MSE loss. Returns the loss,
    /// or `None` on an empty queue.
    pub fn train_step(
        &mut self,
        set: &mut NeuralPointSet,
        queue: &mut TrainFrameQueue,
    ) -> Option<f64> {
        let frame_idx = queue.least_trained()?;
        let n_points = queue.frames[frame_idx].points.len();
        if n_points == 0 {
            queue.frames[frame_idx].trained_iterations += 1;
            self.global_iteration += 1;
            return Some(0.0);
        }
        let n_train = self.config.n_train.min(n_points.max(1));
        let samples: Vec<(Vector3<f64>, [f64; 3])> = (0..n_train)
            .map(|_| {
                let i = set.rng.random_range(0..n_points);
                (
                    queue.frames[frame_idx].points[i],
                    queue.frames[frame_idx].colors[i],
                )
            })
            .collect();

        let positions: Vec<Vector3<f64>> = samples.iter().map(|(p, _)| *p).collect();
        set.allocate(&positions);

        let (loss, decoder_grads, feature_grads) =
            loss_and_grads(set, &samples).expect("levels populated by allocation");

        let lr = self.effective_lr();
        let adam = self
            .decoder_adam
            .get_or_insert_with(|| DecoderAdam::new(&set.decoder, self.config.adam));
        adam.step(&mut set.decoder, &decoder_grads, lr);

        let params = self.config.adam;
        for (level, grads) in set.levels.iter_mut().zip(feature_grads) {
            let m = grads.dim;
            for (idx, g) in grads.per_point {
                let idx = idx as usize;
                level.feat_t[idx] += 1;
                let t = level.feat_t[idx] as u64;
                // split borrows: moments live in separate arrays
                let start = idx * m;
                let (feat, fm, fv) = level.feature_with_moments(start, m);
                params.update(feat, &g, fm, fv, t, lr);
            }
        }

        queue.frames[frame_idx].trained_iterations += 1;
        self.global_iteration += 1;
        Some(loss)
    }
}

/// Per-level sparse feature gradients.
pub struct FeatureGrads {
    pub dim: usize,
    pub per_point: Vec<(u32, Vec<f64>)>,
}

/// Mean-squared-error loss over the samples with full analytic gradients for
/// the decoder and every contributing point feature.
pub fn loss_and_grads(
    set: &NeuralPointSet,
    samples: &[(Vector3<f64>, [f64; 3])],
) -> Result<(f64, MlpGrads, Vec<FeatureGrads>), NeuralPointError> {
    let m = set.feature_dim;
    let mut decoder_grads = MlpGrads::zeros(&set.decoder);
    let mut sparse: Vec<std::collections::BTreeMap<u32, Vec<f64>>> =
        (0..set.levels.len()).map(|_| Default::default()).collect();
    let mut loss = 0.0;
    let inv_n = 1.0 / samples.len().max(1) as f64;
    for (p, target) in samples {
        let weights = set.encode_weights(p)?;
        let encoded = set.encode_from_weights(&weights);
        let (y, cache) = set.decoder.forward(&encoded);
        let mut grad_rgb = [0.0; 3];
        for c in 0..3 {
            let r = y[c] - target[c];
            loss += r * r * inv_n;
            grad_rgb[c] = 2.0 * r * inv_n;
        }
        let grad_input = set.decoder.backward(&cache, &grad_rgb, &mut decoder_grads);
        for (li, lw) in weights.iter().enumerate() {
            let g_slice = grad_input.as_slice();
            let level_grad = &g_slice[li * m..(li + 1) * m];
            for (idx, w) in lw {
                let entry = sparse[li]
                    .entry(*idx)
                    .or_insert_with(|| vec![0.0; m]);
                for (e, g) in entry.iter_mut().zip(level_grad) {
                    *e += w * g;
                }
            }
        }
    }
    let feature_grads = sparse
        .into_iter()
        .map(|map| FeatureGrads {
            dim: m,
            per_point: map.into_iter().collect(),
        })
        .collect();
    Ok((loss, decoder_grads, feature_grads))
}
