use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector2;

use crate::correspondence::{
    combine_masks, cross_check, epipole_check, estimate_essential, static_check, FlowField,
    CROSS_CHECK_THRESHOLD,
};
use crate::dba::{
    recover_scale, select_neighbors, solve_dba, solve_pose_only, DbaProblem, NeighborConfig,
    Patch, PatchEdge, PatchGraph, ScaleConfig, SolverConfig,
};
use crate::flexion::{depth_to_flexion, FlexionImage};
use crate::geometry::{
    load_dataset, unproject_pixel, write_depth_png, write_gray_png, write_poses, ColorImage,
    Dataset, DepthImage, Frame, Grid, Intrinsics, Pose,
};
use crate::neuralpoints::{
    save_checkpoint, NeuralPointConfig, NeuralPointSet, TrainFrameQueue, Trainer, TrainerConfig,
};
use crate::rasterizer::{render_view, RasterConfig};
use crate::scalecov::{complete_depth, RbfKernel, ScaleCovConfig};
use crate::synth::{depth_metrics, psnr, trajectory_ate};

use super::line::{establish_product_line, Part, ProductLine};
use super::request::{Application, InputAvailability, PipelineConfig};
use super::PipelineError;

/// A full application request: what to run, which inputs to expose, and all
/// tunables.
#[derive(Debug, Clone)]
pub struct AppRequest {
    pub application: Application,
    pub inputs: InputAvailability,
    pub config: PipelineConfig,
}

/// Source of dense flow fields between frame pairs (forward direction
/// i → j). Files on disk for real runs, memory for tests.
pub trait FlowProvider {
    fn flow(&self, i: usize, j: usize) -> Option<FlowField>;
}

/// Source of dense depth priors per frame (the stand-in for a monocular
/// depth model).
pub trait PriorProvider {
    fn prior(&self, id: usize) -> Option<DepthImage>;
}

/// Dataset-directory-backed providers.
pub struct DatasetProvider<'a> {
    pub dataset: &'a Dataset,
}

impl FlowProvider for DatasetProvider<'_> {
    fn flow(&self, i: usize, j: usize) -> Option<FlowField> {
        let path = self.dataset.flow_path(i, j);
        path.is_file()
            .then(|| crate::correspondence::read_flow(&path).ok())
            .flatten()
    }
}

impl PriorProvider for DatasetProvider<'_> {
    fn prior(&self, id: usize) -> Option<DepthImage> {
        let path = self.dataset.root.join("prior").join(format!("{id:06}.png"));
        path.is_file()
            .then(|| crate::geometry::read_depth_png(&path).ok())
            .flatten()
    }
}

/// In-memory providers for driving `step` directly in tests.
#[derive(Default)]
pub struct MemoryProvider {
    pub flows: std::collections::BTreeMap<(usize, usize), FlowField>,
    pub priors: std::collections::BTreeMap<usize, DepthImage>,
}

impl FlowProvider for MemoryProvider {
    fn flow(&self, i: usize, j: usize) -> Option<FlowField> {
        self.flows.get(&(i, j)).cloned()
    }
}

impl PriorProvider for MemoryProvider {
    fn prior(&self, id: usize) -> Option<DepthImage> {
        self.priors.get(&id).cloned()
    }
}

/// Per-frame record inside the world state. Once published to
/// reconstruction a record is immutable.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub id: usize,
    pub pose: Option<Pose>,
    /// The working image: input color or flexion replicated to RGB.
    pub image: Option<ColorImage>,
    /// Input dense depth (when the request exposes one).
    pub input_depth: Option<DepthImage>,
    /// Estimated or completed depth product.
    pub depth_product: Option<DepthImage>,
    pub is_keyframe: bool,
    pub published: bool,
}

/// Mutable state threaded through the steps of a sequence.
pub struct WorldState {
    pub frames: Vec<FrameRecord>,
    pub points: NeuralPointSet,
    pub queue: TrainFrameQueue,
    pub trainer: Trainer,
    /// Resolved intrinsics: from the request or estimated by the
    /// uncalibrated depth block.
    pub intrinsics: Option<Intrinsics>,
}

impl WorldState {
    pub fn new(request: &AppRequest, intrinsics: Option<Intrinsics>) -> Self {
        let cfg = &request.config;
        let points = NeuralPointSet::new(&NeuralPointConfig {
            levels: cfg.points_levels,
            base_resolution: cfg.points_base_resolution,
            resolution_multiplier: cfg.points_resolution_multiplier,
            feature_dim: cfg.points_feature_dim,
            k_neighbors: cfg.points_k_neighbors,
            seed: cfg.seed,
        });
        let trainer = Trainer::new(TrainerConfig {
            n_train: cfg.train_n_per_step,
            base_lr: cfg.train_base_lr,
            ..Default::default()
        });
        Self {
            frames: Vec::new(),
            points,
            queue: TrainFrameQueue::default(),
            trainer,
            intrinsics,
        }
    }

    fn record(&self, id: usize) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.id == id)
    }
}

/// Products a single step may emit.
#[derive(Debug, Default)]
pub struct StepProducts {
    pub pose: Option<Pose>,
    pub depth: Option<DepthImage>,
    pub flexion: Option<FlexionImage>,
}

fn fail(part: Part, frame: usize) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::PartFailure {
        part,
        frame,
        message,
    }
}

fn mask_frame(frame: &Frame, inputs: &InputAvailability) -> Frame {
    Frame {
        id: frame.id,
        color: if inputs.rgb { frame.color.clone() } else { None },
        depth: if inputs.depth || inputs.sparse_depth {
            frame.depth.clone()
        } else {
            None
        },
        pose: if inputs.pose { frame.pose } else { None },
        intrinsics: if inputs.intrinsics {
            frame.intrinsics
        } else {
            None
        },
    }
}

/// Scatters frame `a`'s depth into frame `b`'s image as an initialization
/// prior: unproject, transform by the relative pose, z-min per target pixel.
fn reproject_depth(
    depth: &DepthImage,
    pose_a: &Pose,
    pose_b: &Pose,
    k: &Intrinsics,
) -> DepthImage {
    let (w, h) = (depth.width(), depth.height());
    let mut values = Grid::filled(w, h, 0.0);
    let b_from_a = pose_a.relative_to(pose_b);
    for (x, y, _) in depth.validity.iter() {
        let Some(z) = depth.depth(x, y) else { continue };
        let p = unproject_pixel(&Vector2::new(x as f64, y as f64), 1.0 / z, k)
            .expect("valid depth");
        let q = b_from_a.apply(&p);
        if q.z <= 0.0 {
            continue;
        }
        let u = (k.fx * q.x / q.z + k.cx).round();
        let v = (k.fy * q.y / q.z + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        let (u, v) = (u as usize, v as usize);
        let cur = *values.get(u, v);
        if cur == 0.0 || q.z < cur {
            values.set(u, v, q.z);
        }
    }
    DepthImage::new(values)
}

fn default_intrinsics_guess(width: usize, height: usize) -> Intrinsics {
    let f = 0.85 * width.max(height) as f64;
    Intrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
        .expect("guess is valid")
}

struct Tracker<'a> {
    request: &'a AppRequest,
    flows: &'a dyn FlowProvider,
}

impl Tracker<'_> {
    /// Pose for the current frame: input pose when exposed, patch BA against
    /// the previous frame when it has depth, otherwise a two-frame dense BA
    /// whose inverse depth chains the monocular scale via reprojection of
    /// the previous depth product.
    fn track(
        &self,
        state: &mut WorldState,
        frame: &Frame,
    ) -> Result<Pose, PipelineError> {
        let cfg = &self.request.config;
        let err = fail(Part::Tracking, frame.id);
        if let Some(pose) = frame.pose {
            return Ok(pose);
        }
        let Some(prev) = state.frames.last() else {
            return Ok(Pose::identity());
        };
        let prev_pose = prev
            .pose
            .ok_or_else(|| err("previous frame has no pose".into()))?;
        let Some(flow) = self.flows.flow(prev.id, frame.id) else {
            return Err(err(format!("no flow {} -> {}", prev.id, frame.id)));
        };
        let k = state
            .intrinsics
            .ok_or_else(|| err("intrinsics unresolved before tracking".into()))?;

        let prev_depth = prev.input_depth.clone().or_else(|| prev.depth_product.clone());
        if let Some(depth) = &prev_depth {
            if prev.input_depth.is_some() {
                // metric depth: pose-only sparse patch adjustment
                let mut graph = PatchGraph::default();
                let stride = cfg.tracking_stride.max(1);
                'outer: for y in (stride / 2..depth.height()).step_by(stride) {
                    for x in (stride / 2..depth.width()).step_by(stride) {
                        let Some(z) = depth.depth(x, y) else { continue };
                        if !flow.is_valid(x, y) {
                            continue;
                        }
                        let target = flow.target(x, y).unwrap();
                        graph.patches.push(Patch {
                            host_frame: 0,
                            pixel: Vector2::new(x as f64, y as f64),
                            inv_depth: 1.0 / z,
                        });
                        graph.edges.push(PatchEdge {
                            patch: graph.patches.len() - 1,
                            target_frame: 1,
                            observed: Vector2::new(target[0], target[1]),
                            delta: Vector2::zeros(),
                            weight: 1.0,
                        });
                        if graph.patches.len() >= cfg.max_patches {
                            break 'outer;
                        }
                    }
                }
                let solver = SolverConfig {
                    max_iters: cfg.solver_max_iters,
                    damping: cfg.solver_damping,
                    tol: cfg.solver_tol,
                };
                let poses = solve_pose_only(&graph, &[prev_pose, prev_pose], &k, &solver)
                    .map_err(|e| err(e.to_string()))?;
                return Ok(poses[1]);
            }
        }

        // monocular: anchored two-frame dense BA (previous pose fixed)
        let prior = prev_depth.clone().or_else(|| {
            state
                .frames
                .iter()
                .rev()
                .skip(1)
                .find_map(|f| f.depth_product.as_ref().map(|d| (f, d)))
                .and_then(|(f, d)| f.pose.map(|p| reproject_depth(d, &p, &prev_pose, &k)))
        });
        let problem = DbaProblem::from_flows(
            k,
            cfg.tracking_stride,
            prev_pose,
            &[(prev_pose, &flow, None)],
            prior.as_ref(),
            true,
            false,
        )
        .map_err(|e| err(e.to_string()))?;
        let solver = SolverConfig {
            max_iters: cfg.solver_max_iters,
            damping: cfg.solver_damping,
            tol: cfg.solver_tol,
        };
        let solution = solve_dba(&problem, &solver).map_err(|e| err(e.to_string()))?;
        // keep the reference-frame depth as the previous frame's provisional
        // product so the monocular scale chains forward
        if let Some(rec) = state.frames.last_mut() {
            if rec.depth_product.is_none() && !rec.published {
                rec.depth_product = Some(solution.dense_depth_image(
                    k.width,
                    k.height,
                    cfg.tracking_stride,
                ));
            }
        }
        Ok(solution.poses[1])
    }
}

struct DepthEstimator<'a> {
    request: &'a AppRequest,
    flows: &'a dyn FlowProvider,
    priors: &'a dyn PriorProvider,
}

impl DepthEstimator<'_> {
    /// Full depth-estimation chain for a keyframe: good-neighbor selection,
    /// correspondence filtering, pose-anchored dense BA, prior-based
    /// completion and scale recovery against the provisional depth.
    fn estimate(
        &self,
        state: &mut WorldState,
        frame_id: usize,
        ref_pose: Pose,
    ) -> Result<Option<DepthImage>, PipelineError> {
        let cfg = &self.request.config;
        let err = fail(Part::DepthEstimation, frame_id);
        let k = state
            .intrinsics
            .unwrap_or_else(|| panic!("intrinsics resolved before depth estimation"));

        let candidates: Vec<(usize, Pose)> = state
            .frames
            .iter()
            .filter(|f| f.id != frame_id)
            .filter_map(|f| f.pose.map(|p| (f.id, p)))
            .filter(|(id, _)| self.flows.flow(frame_id, *id).is_some())
            .collect();
        let neighbors = select_neighbors(
            &candidates,
            &ref_pose,
            &NeighborConfig {
                tau_baseline: cfg.neighbor_tau_baseline,
                tau_facing: cfg.neighbor_tau_facing_deg.to_radians(),
                tau_nb: cfg.neighbor_tau_nb,
                facing_greater: cfg.neighbor_facing_greater,
            },
        );
        if neighbors.is_empty() {
            return Ok(None);
        }

        let mut flows = Vec::new();
        for id in &neighbors {
            let fwd = self
                .flows
                .flow(frame_id, *id)
                .ok_or_else(|| err(format!("flow {frame_id} -> {id} vanished")))?;
            let mask = if cfg.use_correspondence_filters {
                let mut masks = Vec::new();
                if let Some(bwd) = self.flows.flow(*id, frame_id) {
                    masks.push(
                        cross_check(&fwd, &bwd, CROSS_CHECK_THRESHOLD)
                            .map_err(|e| err(e.to_string()))?,
                    );
                }
                if let Ok(model) = estimate_essential(&fwd, &k, &k, 1000, cfg.seed) {
                    masks.push(static_check(&fwd, &model, &k, &k));
                    masks.push(epipole_check(&model, &k, cfg.epipole_radius));
                }
                if masks.is_empty() {
                    None
                } else {
                    Some(combine_masks(&masks.iter().collect::<Vec<_>>()))
                }
            } else {
                None
            };
            let pose = state.record(*id).and_then(|f| f.pose).unwrap();
            flows.push((pose, fwd, mask));
        }

        let prior_depth = self.priors.prior(frame_id);
        let provisional = state
            .record(frame_id)
            .and_then(|f| f.depth_product.clone());
        let init_prior = prior_depth.clone().or_else(|| provisional.clone());

        let sources: Vec<(Pose, &FlowField, Option<&Grid<bool>>)> = flows
            .iter()
            .map(|(pose, flow, mask)| (*pose, flow, mask.as_ref()))
            .collect();
        let mut problem = DbaProblem::from_flows(
            k,
            cfg.dba_stride,
            ref_pose,
            &sources,
            init_prior.as_ref(),
            false,
            !self.request.inputs.intrinsics,
        )
        .map_err(|e| err(e.to_string()))?;
        // all poses are known here: depth-only triangulation solve
        for fixed in problem.fixed_poses.iter_mut() {
            *fixed = true;
        }
        let solver = SolverConfig {
            max_iters: cfg.solver_max_iters,
            damping: cfg.solver_damping,
            tol: cfg.solver_tol,
        };
        let solution = solve_dba(&problem, &solver).map_err(|e| err(e.to_string()))?;
        if !self.request.inputs.intrinsics {
            state.intrinsics = Some(solution.intrinsics);
        }
        let mut depth = solution.dense_depth_image(k.width, k.height, cfg.dba_stride);

        // completion against the dense prior when one is supplied
        if let Some(prior) = &prior_depth {
            let kernel = RbfKernel {
                length_scale: cfg.scalecov_length_scale,
                signal_variance: cfg.scalecov_signal_variance,
            };
            let sc_cfg = ScaleCovConfig {
                sigma_n: cfg.scalecov_sigma_n,
                n_obs_max: cfg.scalecov_n_obs_max,
                ..Default::default()
            };
            match complete_depth(&depth, prior, &kernel, &sc_cfg) {
                Ok(post) => depth = post.completed,
                Err(e) => return Err(err(format!("completion failed: {e}"))),
            }
        }

        // scale recovery against provisional landmark depths
        if let Some(landmark_depth) = &provisional {
            let stride = (cfg.dba_stride * 4).max(8);
            let mut landmarks = Vec::new();
            for y in (0..landmark_depth.height()).step_by(stride) {
                for x in (0..landmark_depth.width()).step_by(stride) {
                    if let Some(z) = landmark_depth.depth(x, y) {
                        landmarks.push((Vector2::new(x as f64, y as f64), z));
                    }
                }
            }
            if landmarks.len() >= 3 {
                if let Ok(s) = recover_scale(
                    &landmarks,
                    &depth,
                    &ScaleConfig {
                        iterations: cfg.scale_ransac_iters,
                        inlier_tol: cfg.scale_inlier_tol,
                        seed: cfg.seed,
                    },
                ) {
                    let values = Grid::from_fn(depth.width(), depth.height(), |x, y| {
                        depth.depth(x, y).map_or(0.0, |z| z * s)
                    });
                    depth = DepthImage::new(values);
                }
            }
        }
        Ok(Some(depth))
    }
}

/// Publishes every fixed (out-of-window) unpublished keyframe to the
/// reconstruction queue as a colored point cloud.
fn publish_fixed_frames(state: &mut WorldState, current_id: usize, cfg: &PipelineConfig) {
    let Some(k) = state.intrinsics else { return };
    let window = cfg.window;
    let stride = cfg.publish_stride.max(1);
    let mut to_publish = Vec::new();
    for (idx, rec) in state.frames.iter().enumerate() {
        if rec.published || !rec.is_keyframe {
            continue;
        }
        if rec.id + window > current_id {
            continue;
        }
        let (Some(pose), Some(image)) = (rec.pose, rec.image.as_ref()) else {
            continue;
        };
        let Some(depth) = rec.input_depth.as_ref().or(rec.depth_product.as_ref()) else {
            continue;
        };
        let mut points = Vec::new();
        let mut colors = Vec::new();
        for y in (0..depth.height()).step_by(stride) {
            for x in (0..depth.width()).step_by(stride) {
                let Some(z) = depth.depth(x, y) else { continue };
                let p = unproject_pixel(&Vector2::new(x as f64, y as f64), 1.0 / z, &k)
                    .expect("valid depth");
                points.push(pose.apply(&p));
                colors.push(image.pixel(x, y));
            }
        }
        if !points.is_empty() {
            to_publish.push((idx, points, colors));
        }
    }
    for (idx, points, colors) in to_publish {
        state.queue.push_frame(points, colors);
        state.frames[idx].published = true;
    }
}

/// Applies the product line to one frame: packages the masked inputs,
/// executes each part in order, and unpackages the per-frame products.
pub fn step(
    line: &ProductLine,
    state: &mut WorldState,
    frame: &Frame,
    request: &AppRequest,
    flows: &dyn FlowProvider,
    priors: &dyn PriorProvider,
) -> Result<StepProducts, PipelineError> {
    if let Some(last) = state.frames.last() {
        if frame.id <= last.id {
            return Err(PipelineError::NonMonotoneFrames {
                got: frame.id,
                last: last.id,
            });
        }
    }
    let frame = mask_frame(frame, &request.inputs);
    let cfg = &request.config;
    let mut products = StepProducts::default();

    if state.intrinsics.is_none() {
        state.intrinsics = frame.intrinsics.or_else(|| {
            frame
                .color
                .as_ref()
                .map(|c| default_intrinsics_guess(c.width(), c.height()))
        });
    }

    // flexion part: build the trackable working image from depth
    let mut image = frame.color.clone();
    if line.contains(Part::Flexion) {
        let depth = frame
            .depth
            .as_ref()
            .ok_or_else(|| fail(Part::Flexion, frame.id)("no depth input".into()))?;
        let k = state
            .intrinsics
            .ok_or_else(|| fail(Part::Flexion, frame.id)("no intrinsics".into()))?;
        let flexion = depth_to_flexion(depth, &k, cfg.flexion_step);
        if image.is_none() {
            image = Some(flexion.to_color());
        }
        products.flexion = Some(flexion);
    }

    let is_keyframe = frame.id.is_multiple_of(cfg.keyframe_every.max(1));

    // tracking part
    let pose = if line.contains(Part::Tracking) {
        let tracker = Tracker { request, flows };
        Some(tracker.track(state, &frame)?)
    } else {
        frame.pose
    };
    products.pose = pose;

    state.frames.push(FrameRecord {
        id: frame.id,
        pose,
        image,
        input_depth: if request.inputs.depth {
            frame.depth.clone()
        } else {
            None
        },
        depth_product: None,
        is_keyframe,
        published: false,
    });

    // completion part (sparse metric depth + dense prior)
    if line.contains(Part::Completion) {
        let sparse = frame
            .depth
            .as_ref()
            .ok_or_else(|| fail(Part::Completion, frame.id)("no sparse depth".into()))?;
        let prior = priors
            .prior(frame.id)
            .ok_or_else(|| fail(Part::Completion, frame.id)("no dense depth prior".into()))?;
        let kernel = RbfKernel {
            length_scale: cfg.scalecov_length_scale,
            signal_variance: cfg.scalecov_signal_variance,
        };
        let sc_cfg = ScaleCovConfig {
            sigma_n: cfg.scalecov_sigma_n,
            n_obs_max: cfg.scalecov_n_obs_max,
            ..Default::default()
        };
        let post = complete_depth(sparse, &prior, &kernel, &sc_cfg)
            .map_err(|e| fail(Part::Completion, frame.id)(e.to_string()))?;
        state.frames.last_mut().unwrap().depth_product = Some(post.completed.clone());
        products.depth = Some(post.completed);
    }

    // depth estimation part: keyframes with good neighbors only
    if line.contains(Part::DepthEstimation) && is_keyframe {
        if let Some(ref_pose) = pose {
            let estimator = DepthEstimator {
                request,
                flows,
                priors,
            };
            if let Some(depth) = estimator.estimate(state, frame.id, ref_pose)? {
                let rec = state
                    .frames
                    .iter_mut()
                    .find(|f| f.id == frame.id)
                    .expect("record just pushed");
                rec.depth_product = Some(depth.clone());
                products.depth = Some(depth);
            }
        }
    }

    // reconstruction part: publish fixed keyframes, then train
    if line.contains(Part::Reconstruction) {
        publish_fixed_frames(state, frame.id, cfg);
        if !state.queue.is_empty() {
            for _ in 0..cfg.train_steps_per_frame {
                state.trainer.train_step(&mut state.points, &mut state.queue);
            }
        }
    }

    Ok(products)
}

/// Full sequence products and summary metrics.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub trajectory: Vec<(usize, Pose)>,
    pub depth_frames: Vec<usize>,
    pub metrics: Vec<(String, f64)>,
}

impl RunReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
    }
}

fn write_metrics(path: &Path, metrics: &[(String, f64)]) -> Result<(), PipelineError> {
    let mut file = std::fs::File::create(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (key, value) in metrics {
        writeln!(file, "{key} = {value:.9e}").map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

/// Runs a product line over a dataset directory, writing the trajectory
/// (poses.txt format), per-frame depth products, flexion images, the model
/// checkpoint and a plain-text metrics report into `out_dir`. Per-stage
/// timing goes to stderr so the on-disk products stay byte-reproducible.
pub fn run_sequence(
    request: &AppRequest,
    dataset_dir: &Path,
    out_dir: &Path,
) -> Result<RunReport, PipelineError> {
    let dataset = match load_dataset(dataset_dir) {
        Ok(d) => d,
        Err(crate::geometry::DatasetError::Empty(path)) => {
            return Err(PipelineError::UnsatisfiableRequest(format!(
                "dataset {} contains no frames",
                path.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    validate_availability(request, &dataset)?;
    if request.application == Application::Mvd && dataset.frames.len() < 2 {
        return Err(PipelineError::UnsatisfiableRequest(
            "multi-view depth estimation needs at least 2 frames".into(),
        ));
    }
    let line = establish_product_line(request.application, &request.inputs)?;
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let provider = DatasetProvider { dataset: &dataset };
    let mut state = WorldState::new(
        request,
        if request.inputs.intrinsics {
            dataset.intrinsics
        } else {
            None
        },
    );

    let t_start = Instant::now();
    let mut flexion_dir_made = false;
    let mut report = RunReport::default();
    for frame in &dataset.frames {
        let t_frame = Instant::now();
        let products = step(&line, &mut state, frame, request, &provider, &provider)?;
        if let Some(flexion) = &products.flexion {
            let dir = out_dir.join("flexion");
            if !flexion_dir_made {
                std::fs::create_dir_all(&dir).map_err(|source| PipelineError::Io {
                    path: dir.clone(),
                    source,
                })?;
                flexion_dir_made = true;
            }
            write_gray_png(
                &dir.join(format!("{:06}.png", frame.id)),
                &flexion.values,
                &flexion.validity,
            )?;
        }
        eprintln!(
            "[{}] frame {:>4}: {:.1} ms",
            request.application.name(),
            frame.id,
            t_frame.elapsed().as_secs_f64() * 1e3
        );
    }

    // flush: everything is fixed at the end of the sequence
    if line.contains(Part::Reconstruction) {
        publish_fixed_frames(&mut state, usize::MAX - 1, &request.config);
        for _ in 0..request.config.train_final_steps {
            state.trainer.train_step(&mut state.points, &mut state.queue);
        }
        let ckpt = out_dir.join("model.npc");
        save_checkpoint(&ckpt, &state.points).map_err(|e| PipelineError::PartFailure {
            part: Part::Reconstruction,
            frame: usize::MAX,
            message: e.to_string(),
        })?;
    }

    // trajectory product
    report.trajectory = state
        .frames
        .iter()
        .filter_map(|f| f.pose.map(|p| (f.id, p)))
        .collect();
    if !report.trajectory.is_empty() {
        write_poses(&out_dir.join("trajectory.txt"), &report.trajectory)?;
    }

    // depth products
    let depth_dir = out_dir.join("depth");
    for rec in &state.frames {
        if let Some(depth) = &rec.depth_product {
            if !depth_dir.is_dir() {
                std::fs::create_dir_all(&depth_dir).map_err(|source| PipelineError::Io {
                    path: depth_dir.clone(),
                    source,
                })?;
            }
            write_depth_png(&depth_dir.join(format!("{:06}.png", rec.id)), depth)?;
            report.depth_frames.push(rec.id);
        }
    }

    compute_metrics(&mut report, &state, &dataset, &line, request);
    write_metrics(&out_dir.join("metrics.txt"), &report.metrics)?;
    eprintln!(
        "[{}] sequence done in {:.2} s",
        request.application.name(),
        t_start.elapsed().as_secs_f64()
    );
    Ok(report)
}

fn validate_availability(request: &AppRequest, dataset: &Dataset) -> Result<(), PipelineError> {
    let unsat = |msg: String| Err(PipelineError::UnsatisfiableRequest(msg));
    let inputs = &request.inputs;
    let have_rgb = dataset.frames.iter().any(|f| f.color.is_some());
    let have_depth = dataset.frames.iter().any(|f| f.depth.is_some());
    let have_pose = dataset.frames.iter().any(|f| f.pose.is_some());
    if inputs.rgb && !have_rgb {
        return unsat("request claims rgb but the dataset has none".into());
    }
    if (inputs.depth || inputs.sparse_depth) && !have_depth {
        return unsat("request claims depth but the dataset has none".into());
    }
    if inputs.pose && !have_pose {
        return unsat("request claims poses but the dataset has none".into());
    }
    if inputs.intrinsics && dataset.intrinsics.is_none() {
        return unsat("request claims intrinsics but the dataset has none".into());
    }
    Ok(())
}

/// Evaluation against whatever ground truth the dataset carries (unmasked):
/// depth absrel/inlier ratio with median alignment, trajectory ATE, and the
/// PSNR of re-rendered keyframes when reconstruction ran.
#[allow(clippy::too_many_arguments)]
fn compute_metrics(
    report: &mut RunReport,
    state: &WorldState,
    dataset: &Dataset,
    line: &ProductLine,
    request: &AppRequest,
) {
    let mut absrel_acc = Vec::new();
    let mut tau_acc = Vec::new();
    for rec in &state.frames {
        let (Some(est), Some(gt_frame)) = (&rec.depth_product, dataset.frame(rec.id)) else {
            continue;
        };
        let Some(gt) = &gt_frame.depth else { continue };
        if let Ok(m) = depth_metrics(est, gt, true) {
            absrel_acc.push(m.absrel);
            tau_acc.push(m.inlier_ratio);
        }
    }
    if !absrel_acc.is_empty() {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        report
            .metrics
            .push(("depth_absrel_median_aligned".into(), mean(&absrel_acc)));
        report
            .metrics
            .push(("depth_inlier_ratio_1.03".into(), mean(&tau_acc)));
        report
            .metrics
            .push(("depth_frames_evaluated".into(), absrel_acc.len() as f64));
    }

    let mut est_poses = Vec::new();
    let mut gt_poses = Vec::new();
    for (id, pose) in &report.trajectory {
        if let Some(gt) = dataset.frame(*id).and_then(|f| f.pose) {
            est_poses.push(*pose);
            gt_poses.push(gt);
        }
    }
    if est_poses.len() >= 2 {
        if let Ok(ate) = trajectory_ate(&est_poses, &gt_poses) {
            report.metrics.push(("ate_rmse".into(), ate));
        }
    }

    if line.contains(Part::Reconstruction) && state.points.total_points() > 0 {
        if let Some(k) = state.intrinsics {
            let raster_cfg = RasterConfig {
                layer_threshold: request.config.raster_layer_threshold,
                k_ray: request.config.raster_k_ray,
                sigma: request.config.raster_sigma,
                ..RasterConfig::new(k, state.points.levels[0].resolution)
            };
            let mut psnrs = Vec::new();
            for rec in state.frames.iter().filter(|f| f.published) {
                let (Some(pose), Some(image)) = (rec.pose, rec.image.as_ref()) else {
                    continue;
                };
                let Ok(view) = render_view(&state.points, &pose, &k, Some(&raster_cfg)) else {
                    continue;
                };
                if let Ok(v) = psnr(&view.color, image, Some(&view.depth.validity)) {
                    psnrs.push(v);
                }
            }
            if !psnrs.is_empty() {
                let mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
                report.metrics.push(("render_psnr_train_views".into(), mean));
            }
        }
    }
}


#[cfg(test)]
mod more_tests {
    use super::*;
    use crate::synth::{demo_room_scene, generate_dataset};

    #[test]
    fn empty_dataset_is_unsatisfiable() {
        let dir = std::env::temp_dir().join(format!("scene_empty_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let request = AppRequest {
            application: Application::MonoSlam,
            inputs: InputAvailability {
                rgb: true,
                ..Default::default()
            },
            config: PipelineConfig::default(),
        };
        let err = run_sequence(&request, &dir, &dir.join("out"));
        assert!(matches!(
            err,
            Err(PipelineError::UnsatisfiableRequest(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reconstruction_only_consumes_out_of_window_keyframes() {
        let root = std::env::temp_dir().join(format!("scene_window_{}", std::process::id()));
        let data = root.join("data");
        let scene = demo_room_scene(6, 48, 36, 5);
        generate_dataset(&scene, &data, 2).unwrap();
        let dataset = load_dataset(&data).unwrap();
        let provider = DatasetProvider { dataset: &dataset };
        let request = AppRequest {
            application: Application::Reconstruction,
            inputs: InputAvailability {
                rgb: true,
                depth: true,
                pose: true,
                intrinsics: true,
                ..Default::default()
            },
            config: PipelineConfig {
                keyframe_every: 1,
                window: 2,
                train_steps_per_frame: 1,
                train_n_per_step: 32,
                points_base_resolution: 0.05,
                publish_stride: 4,
                ..Default::default()
            },
        };
        let line = establish_product_line(request.application, &request.inputs).unwrap();
        let mut state = WorldState::new(&request, dataset.intrinsics);
        for (idx, frame) in dataset.frames.iter().enumerate() {
            step(&line, &mut state, frame, &request, &provider, &provider).unwrap();
            // frames still inside the window must not be published
            for rec in &state.frames {
                if rec.id + request.config.window > idx {
                    assert!(
                        !rec.published,
                        "frame {} published while inside the window at step {idx}",
                        rec.id
                    );
                }
            }
        }
        // the early frames have left the window and are published
        assert!(state.frames[0].published && state.frames[1].published);
        std::fs::remove_dir_all(&root).ok();
    }
}
