use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::decoder::Mlp;
use super::kdtree::{KdTree, Neighbors};
use super::NeuralPointError;

/// One resolution level: positions with learnable features, a k-d tree for
/// neighbor queries and a hash grid for allocation distance checks.
#[derive(Debug, Clone)]
pub struct NeuralPointLevel {
    pub resolution: f64,
    /// Allocation distance threshold t_a (= resolution / 2).
    pub threshold: f64,
    /// Interpolation bandwidth σ (= threshold²), scale-aware per level.
    pub sigma: f64,
    positions: Vec<Vector3<f64>>,
    features: Vec<f64>,
    feature_dim: usize,
    tree: KdTree,
    tree_len: usize,
    grid: HashMap<(i64, i64, i64), Vec<u32>>,
    // Adam moments per feature entry plus a per-point step count
    pub(super) feat_m: Vec<f64>,
    pub(super) feat_v: Vec<f64>,
    pub(super) feat_t: Vec<u32>,
}

impl NeuralPointLevel {
    fn new(resolution: f64, feature_dim: usize) -> Self {
        let threshold = resolution / 2.0;
        Self {
            resolution,
            threshold,
            sigma: threshold * threshold,
            positions: Vec::new(),
            features: Vec::new(),
            feature_dim,
            tree: KdTree::default(),
            tree_len: 0,
            grid: HashMap::new(),
            feat_m: Vec::new(),
            feat_v: Vec::new(),
            feat_t: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, idx: usize) -> Vector3<f64> {
        self.positions[idx]
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn feature(&self, idx: usize) -> &[f64] {
        &self.features[idx * self.feature_dim..(idx + 1) * self.feature_dim]
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub(super) fn feature_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.features[idx * self.feature_dim..(idx + 1) * self.feature_dim]
    }

    /// Disjoint mutable views of one point's feature and its Adam moments.
    pub(super) fn feature_with_moments(
        &mut self,
        start: usize,
        m: usize,
    ) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (
            &mut self.features[start..start + m],
            &mut self.feat_m[start..start + m],
            &mut self.feat_v[start..start + m],
        )
    }

    /// Restores a level from checkpoint data, rebuilding the spatial index
    /// and the allocation grid.
    pub(super) fn from_checkpoint(
        resolution: f64,
        feature_dim: usize,
        positions: Vec<Vector3<f64>>,
        features: Vec<f64>,
    ) -> Self {
        assert_eq!(features.len(), positions.len() * feature_dim);
        let mut level = Self::new(resolution, feature_dim);
        for (i, p) in positions.iter().enumerate() {
            let cell = level.cell_of(p);
            level.grid.entry(cell).or_default().push(i as u32);
        }
        let n = positions.len();
        level.tree = KdTree::build(&positions);
        level.tree_len = n;
        level.positions = positions;
        level.features = features;
        level.feat_m = vec![0.0; n * feature_dim];
        level.feat_v = vec![0.0; n * feature_dim];
        level.feat_t = vec![0; n];
        level
    }

    pub fn features_raw(&self) -> &[f64] {
        &self.features
    }

    fn cell_of(&self, p: &Vector3<f64>) -> (i64, i64, i64) {
        let c = self.threshold;
        (
            (p.x / c).floor() as i64,
            (p.y / c).floor() as i64,
            (p.z / c).floor() as i64,
        )
    }

    /// Whether any existing point lies within `threshold` of `p`.
    fn occupied_within_threshold(&self, p: &Vector3<f64>) -> bool {
        let (cx, cy, cz) = self.cell_of(p);
        let t2 = self.threshold * self.threshold;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &idx in bucket {
                            if (self.positions[idx as usize] - p).norm_squared() <= t2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn push_point(&mut self, p: Vector3<f64>, feature: Vec<f64>) {
        debug_assert_eq!(feature.len(), self.feature_dim);
        let idx = self.positions.len() as u32;
        let cell = self.cell_of(&p);
        self.positions.push(p);
        self.features.extend_from_slice(&feature);
        self.feat_m.extend(std::iter::repeat_n(0.0, self.feature_dim));
        self.feat_v.extend(std::iter::repeat_n(0.0, self.feature_dim));
        self.feat_t.push(0);
        self.grid.entry(cell).or_default().push(idx);
    }

    fn maybe_rebuild_tree(&mut self) {
        let overflow = self.positions.len() - self.tree_len;
        if overflow > (self.tree_len / 4).max(64) {
            self.tree = KdTree::build(&self.positions);
            self.tree_len = self.positions.len();
        }
    }

    /// K nearest neighbors as (squared distance, index), merging the static
    /// tree with the linear overflow buffer of recently added points.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(f64, u32)> {
        let mut out = Neighbors::new(k);
        self.tree
            .knn_into(&self.positions[..self.tree_len], query, &mut out);
        for idx in self.tree_len..self.positions.len() {
            out.push((self.positions[idx] - query).norm_squared(), idx as u32);
        }
        out.items
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NeuralPointConfig {
    pub levels: usize,
    /// Finest resolution r_0 in meters.
    pub base_resolution: f64,
    /// Per-level resolution multiplier m_reso.
    pub resolution_multiplier: f64,
    /// Feature width m per level.
    pub feature_dim: usize,
    /// Neighbor count K for encoding.
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for NeuralPointConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_resolution: 0.005,
            resolution_multiplier: 4.0,
            feature_dim: 8,
            k_neighbors: 4,
            seed: 0,
        }
    }
}

/// Per-level counts of newly allocated points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationReport {
    pub added_per_level: Vec<usize>,
}

impl AllocationReport {
    pub fn total(&self) -> usize {
        self.added_per_level.iter().sum()
    }
}

/// Multi-resolution neural points with the shared MLP color decoder.
/// Training mutates features and decoder parameters; positions are only ever
/// appended, never moved or deleted.
#[derive(Debug, Clone)]
pub struct NeuralPointSet {
    pub levels: Vec<NeuralPointLevel>,
    pub decoder: Mlp,
    pub k_neighbors: usize,
    pub feature_dim: usize,
    pub(super) rng: ChaCha8Rng,
}

impl NeuralPointSet {
    pub fn new(config: &NeuralPointConfig) -> Self {
        let mut levels = Vec::with_capacity(config.levels);
        let mut resolution = config.base_resolution;
        for _ in 0..config.levels {
            levels.push(NeuralPointLevel::new(resolution, config.feature_dim));
            resolution *= config.resolution_multiplier;
        }
        let input_dim = config.levels * config.feature_dim;
        Self {
            levels,
            decoder: Mlp::new(input_dim, 64, config.seed ^ 0x00D3_C0DE),
            k_neighbors: config.k_neighbors,
            feature_dim: config.feature_dim,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    /// Immutable snapshot for concurrent readers (renderers): training
    /// publishes value snapshots, so readers never observe partial updates.
    pub fn snapshot(&self) -> std::sync::Arc<NeuralPointSet> {
        std::sync::Arc::new(self.clone())
    }

    /// Allocates new neural points for a batch of surface samples: per level
    /// the batch is voxel-downsampled to the level resolution (first sample
    /// per voxel wins) and a candidate is added only when every point present
    /// at its test time is farther than the level threshold. Features
    /// initialize from N(0, 0.01²).
    pub fn allocate(&mut self, points: &[Vector3<f64>]) -> AllocationReport {
        let normal = Normal::new(0.0, 0.01).expect("valid std");
        let mut added = Vec::with_capacity(self.levels.len());
        for level in &mut self.levels {
            let mut seen = HashSet::new();
            let mut count = 0usize;
            for p in points {
                if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                    continue;
                }
                let cell = (
                    (p.x / level.resolution).floor() as i64,
                    (p.y / level.resolution).floor() as i64,
                    (p.z / level.resolution).floor() as i64,
                );
                if !seen.insert(cell) {
                    continue;
                }
                if level.occupied_within_threshold(p) {
                    continue;
                }
                let feature: Vec<f64> = (0..level.feature_dim)
                    .map(|_| normal.sample(&mut self.rng))
                    .collect();
                level.push_point(*p, feature);
                count += 1;
            }
            level.maybe_rebuild_tree();
            added.push(count);
        }
        AllocationReport {
            added_per_level: added,
        }
    }

    /// Per-level softmax interpolation weights over the K nearest points.
    pub fn encode_weights(
        &self,
        p: &Vector3<f64>,
    ) -> Result<Vec<Vec<(u32, f64)>>, NeuralPointError> {
        let mut out = Vec::with_capacity(self.levels.len());
        for (li, level) in self.levels.iter().enumerate() {
            if level.is_empty() {
                return Err(NeuralPointError::EmptyLevel(li));
            }
            let neighbors = level.knn(p, self.k_neighbors);
            let d2_min = neighbors[0].0;
            let mut weights: Vec<(u32, f64)> = neighbors
                .iter()
                .map(|(d2, idx)| (*idx, (-(d2 - d2_min) / level.sigma).exp()))
                .collect();
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            for (_, w) in &mut weights {
                *w /= total;
            }
            out.push(weights);
        }
        Ok(out)
    }

    /// Concatenated multi-level interpolated feature of a query position.
    pub fn encode(&self, p: &Vector3<f64>) -> Result<Vec<f64>, NeuralPointError> {
        let weights = self.encode_weights(p)?;
        Ok(self.encode_from_weights(&weights))
    }

    pub(super) fn encode_from_weights(&self, weights: &[Vec<(u32, f64)>]) -> Vec<f64> {
        let m = self.feature_dim;
        let mut out = vec![0.0; self.levels.len() * m];
        for (li, (level, lw)) in self.levels.iter().zip(weights).enumerate() {
            let slot = &mut out[li * m..(li + 1) * m];
            for (idx, w) in lw {
                let f = level.feature(*idx as usize);
                for (o, fi) in slot.iter_mut().zip(f) {
                    *o += w * fi;
                }
            }
        }
        out
    }

    /// Color prediction at a surface position: interpolate features per
    /// level, concatenate, decode through the MLP (sigmoid head keeps the
    /// output in \[0,1\]).
    pub fn predict_color(&self, p: &Vector3<f64>) -> Result<[f64; 3], NeuralPointError> {
        let encoded = self.encode(p)?;
        Ok(self.decoder.forward(&encoded).0)
    }

    pub fn total_points(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config(seed: u64) -> NeuralPointConfig {
        NeuralPointConfig {
            base_resolution: 0.05,
            seed,
            ..Default::default()
        }
    }

    fn plane_points(n: usize, extent: f64) -> Vec<Vector3<f64>> {
        let side = (n as f64).sqrt() as usize;
        let mut pts = Vec::new();
        for i in 0..side {
            for j in 0..side {
                pts.push(Vector3::new(
                    extent * i as f64 / side as f64,
                    extent * j as f64 / side as f64,
                    1.0,
                ));
            }
        }
        pts
    }

    #[test]
    fn allocation_fills_all_levels_densest_first() {
        let mut set = NeuralPointSet::new(&small_config(1));
        let report = set.allocate(&plane_points(1000, 1.0));
        for (l, count) in report.added_per_level.iter().enumerate() {
            assert!(*count > 0, "level {l} empty");
        }
        assert!(
            report.added_per_level[0] >= *report.added_per_level.last().unwrap(),
            "finest level must hold at least as many points as the coarsest"
        );
    }

    #[test]
    fn refeeding_identical_points_adds_nothing() {
        let mut set = NeuralPointSet::new(&small_config(2));
        let pts = plane_points(400, 0.8);
        let first = set.allocate(&pts);
        assert!(first.total() > 0);
        let second = set.allocate(&pts);
        assert_eq!(second.total(), 0);
    }

    #[test]
    fn closer_than_threshold_is_rejected() {
        let mut set = NeuralPointSet::new(&NeuralPointConfig {
            levels: 1,
            base_resolution: 0.01,
            seed: 3,
            ..Default::default()
        });
        // two points 0.003 m apart with t_a = 0.005: only one is kept
        let pts = vec![
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.003, 0.0, 1.0),
        ];
        let report = set.allocate(&pts);
        assert_eq!(report.added_per_level[0], 1);
    }

    #[test]
    fn batch_respects_threshold_against_in_batch_points() {
        // points land in different voxels but within t_a of each other; the
        // second candidate must see the first one
        let mut set = NeuralPointSet::new(&NeuralPointConfig {
            levels: 1,
            base_resolution: 0.01,
            seed: 4,
            ..Default::default()
        });
        let pts = vec![
            Vector3::new(0.00999, 0.0, 1.0),
            Vector3::new(0.01001, 0.0, 1.0), // next voxel, 2e-5 away
        ];
        let report = set.allocate(&pts);
        assert_eq!(report.added_per_level[0], 1);
        // and across separate batches as well
        let report2 = set.allocate(&[Vector3::new(0.01002, 0.0, 1.0)]);
        assert_eq!(report2.total(), 0);
    }

    #[test]
    fn allocation_never_moves_existing_points() {
        let mut set = NeuralPointSet::new(&small_config(5));
        set.allocate(&plane_points(100, 0.5));
        let before: Vec<Vec<Vector3<f64>>> = set
            .levels
            .iter()
            .map(|l| l.positions().to_vec())
            .collect();
        set.allocate(&plane_points(900, 1.5));
        for (level, old) in set.levels.iter().zip(&before) {
            assert!(level.len() >= old.len());
            for (i, p) in old.iter().enumerate() {
                assert_eq!(level.position(i), *p);
            }
        }
    }

    #[test]
    fn encode_at_point_with_k1_returns_its_feature() {
        let mut set = NeuralPointSet::new(&NeuralPointConfig {
            levels: 1,
            base_resolution: 0.05,
            k_neighbors: 1,
            seed: 6,
            ..Default::default()
        });
        set.allocate(&plane_points(100, 1.0));
        let p = set.levels[0].position(7);
        let encoded = set.encode(&p).unwrap();
        assert_eq!(encoded.as_slice(), set.levels[0].feature(7));
    }

    #[test]
    fn equidistant_neighbors_share_weight() {
        let mut set = NeuralPointSet::new(&NeuralPointConfig {
            levels: 1,
            base_resolution: 0.05,
            k_neighbors: 2,
            seed: 7,
            ..Default::default()
        });
        set.allocate(&[
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.1, 0.0, 1.0),
        ]);
        let weights = set
            .encode_weights(&Vector3::new(0.05, 0.0, 1.0))
            .unwrap();
        assert_eq!(weights[0].len(), 2);
        assert!((weights[0][0].1 - 0.5).abs() < 1e-12);
        assert!((weights[0][1].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_weight_hand_value() {
        // d = (0.01, 0.02), σ = 1e-4: w₁ = e⁻¹/(e⁻¹+e⁻⁴) ≈ 0.952574
        let mut set = NeuralPointSet::new(&NeuralPointConfig {
            levels: 1,
            base_resolution: 0.02, // t_a = 0.01, σ = 1e-4
            k_neighbors: 2,
            seed: 8,
            ..Default::default()
        });
        set.allocate(&[
            Vector3::new(0.01, 0.0, 1.0),
            Vector3::new(-0.02, 0.0, 1.0),
        ]);
        let weights = set.encode_weights(&Vector3::zeros()).unwrap();
        let w1 = weights[0]
            .iter()
            .find(|(idx, _)| *idx == 0)
            .map(|(_, w)| *w)
            .unwrap();
        // stabilized softmax shifts both exponents by d²_min; the ratio is
        // unchanged from exp(-1)/(exp(-1)+exp(-4))
        let expect = (-1.0f64).exp() / ((-1.0f64).exp() + (-4.0f64).exp());
        assert!((w1 - expect).abs() < 1e-9, "w1 = {w1}, expect {expect}");
    }

    #[test]
    fn weights_sum_to_one_and_encoding_is_continuous() {
        let mut set = NeuralPointSet::new(&small_config(9));
        set.allocate(&plane_points(900, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = Vector3::new(
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                1.0,
            );
            let weights = set.encode_weights(&p).unwrap();
            for lw in &weights {
                let sum: f64 = lw.iter().map(|(_, w)| w).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
            let e0 = set.encode(&p).unwrap();
            let e1 = set.encode(&(p + Vector3::new(1e-6, 0.0, 0.0))).unwrap();
            let diff: f64 = e0
                .iter()
                .zip(&e1)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-3, "encoding jumped by {diff}");
        }
    }

    #[test]
    fn empty_level_is_an_error() {
        let set = NeuralPointSet::new(&small_config(10));
        assert!(matches!(
            set.encode(&Vector3::zeros()),
            Err(NeuralPointError::EmptyLevel(0))
        ));
    }

    #[test]
    fn zeroed_decoder_predicts_mid_gray() {
        let mut set = NeuralPointSet::new(&small_config(11));
        set.allocate(&plane_points(100, 1.0));
        set.decoder = Mlp::zeroed(set.levels.len() * set.feature_dim, 64);
        let rgb = set.predict_color(&Vector3::new(0.5, 0.5, 1.0)).unwrap();
        for c in rgb {
            assert!((c - 0.5).abs() < 1e-12);
        }
    }
}
