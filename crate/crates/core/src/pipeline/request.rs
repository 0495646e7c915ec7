use serde::Deserialize;

/// The supported applications, i.e. the product lines a request can ask for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Application {
    Mvd,
    Completion,
    Flexion,
    Tracking,
    RgbdSlam,
    MonoSlam,
    DepthOnlySlam,
    Reconstruction,
}

impl Application {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "MVD" | "mvd" => Some(Self::Mvd),
            "Completion" | "completion" => Some(Self::Completion),
            "Flexion" | "flexion" => Some(Self::Flexion),
            "Tracking" | "tracking" => Some(Self::Tracking),
            "RGB-D-SLAM" | "rgbd-slam" => Some(Self::RgbdSlam),
            "Mono-SLAM" | "mono-slam" => Some(Self::MonoSlam),
            "Depth-only-SLAM" | "depth-only-slam" => Some(Self::DepthOnlySlam),
            "Reconstruction" | "reconstruction" => Some(Self::Reconstruction),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mvd => "MVD",
            Self::Completion => "Completion",
            Self::Flexion => "Flexion",
            Self::Tracking => "Tracking",
            Self::RgbdSlam => "RGB-D-SLAM",
            Self::MonoSlam => "Mono-SLAM",
            Self::DepthOnlySlam => "Depth-only-SLAM",
            Self::Reconstruction => "Reconstruction",
        }
    }

    /// Whether this application consumes poses (and so inserts tracking when
    /// they are missing). MVD solves its own poses inside the depth block.
    pub fn needs_pose(&self) -> bool {
        matches!(
            self,
            Self::Tracking | Self::RgbdSlam | Self::MonoSlam | Self::DepthOnlySlam | Self::Reconstruction
        )
    }

    /// Whether the line ends in the reconstruction block.
    pub fn wants_reconstruction(&self) -> bool {
        matches!(
            self,
            Self::RgbdSlam | Self::MonoSlam | Self::DepthOnlySlam | Self::Reconstruction
        )
    }

    /// Whether the application needs a dense metric depth per keyframe.
    pub fn needs_dense_depth(&self) -> bool {
        matches!(
            self,
            Self::Mvd | Self::RgbdSlam | Self::MonoSlam | Self::DepthOnlySlam | Self::Reconstruction
        )
    }
}

/// Which inputs the request exposes to the pipeline. Flags may mask data
/// that exists in the dataset (e.g. running Mono-SLAM on an RGB-D capture),
/// but must never claim data the dataset does not contain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InputAvailability {
    pub rgb: bool,
    pub depth: bool,
    pub sparse_depth: bool,
    pub pose: bool,
    pub intrinsics: bool,
}

/// Every tunable of the pipeline with the project-wide defaults. The same
/// structure deserializes from the plain-text (TOML) config file; unknown
/// keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Every k-th frame is a keyframe candidate.
    pub keyframe_every: usize,
    /// Frames stay inside the tracking window this long; only out-of-window
    /// keyframes are published to reconstruction.
    pub window: usize,
    /// Reference-grid stride of the dense bundle adjustment.
    pub dba_stride: usize,
    /// Grid stride for tracking (patch sampling / two-frame DBA).
    pub tracking_stride: usize,
    pub max_patches: usize,
    pub flexion_step: usize,

    pub neighbor_tau_baseline: f64,
    pub neighbor_tau_facing_deg: f64,
    pub neighbor_tau_nb: usize,
    pub neighbor_facing_greater: bool,

    pub solver_max_iters: usize,
    pub solver_damping: f64,
    pub solver_tol: f64,

    pub scale_ransac_iters: usize,
    pub scale_inlier_tol: f64,

    pub scalecov_sigma_n: f64,
    pub scalecov_n_obs_max: usize,
    pub scalecov_length_scale: f64,
    pub scalecov_signal_variance: f64,

    pub points_levels: usize,
    pub points_base_resolution: f64,
    pub points_resolution_multiplier: f64,
    pub points_feature_dim: usize,
    pub points_k_neighbors: usize,

    pub train_n_per_step: usize,
    pub train_base_lr: f64,
    pub train_steps_per_frame: usize,
    pub train_final_steps: usize,

    pub raster_layer_threshold: f64,
    pub raster_k_ray: usize,
    pub raster_sigma: f64,

    pub epipole_radius: f64,
    /// Apply cross/static/epipole filters when both flow directions exist.
    pub use_correspondence_filters: bool,
    /// Point-cloud pixel stride when publishing keyframes to reconstruction.
    pub publish_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            keyframe_every: 8,
            window: 2,
            dba_stride: 4,
            tracking_stride: 8,
            max_patches: 200,
            flexion_step: 2,
            neighbor_tau_baseline: 0.05,
            neighbor_tau_facing_deg: 0.0,
            neighbor_tau_nb: 2,
            neighbor_facing_greater: true,
            solver_max_iters: 100,
            solver_damping: 1e-4,
            solver_tol: 1e-12,
            scale_ransac_iters: 256,
            scale_inlier_tol: 0.05,
            scalecov_sigma_n: 0.05,
            scalecov_n_obs_max: 1024,
            scalecov_length_scale: 0.15,
            scalecov_signal_variance: 1.0,
            points_levels: 3,
            points_base_resolution: 0.005,
            points_resolution_multiplier: 4.0,
            points_feature_dim: 8,
            points_k_neighbors: 4,
            train_n_per_step: 1024,
            train_base_lr: 1e-3,
            train_steps_per_frame: 30,
            train_final_steps: 100,
            raster_layer_threshold: 0.05,
            raster_k_ray: 8,
            raster_sigma: 1.0,
            epipole_radius: 40.0,
            use_correspondence_filters: true,
            publish_stride: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
