//! SE(3) poses, pinhole camera model, image containers and the dataset
//! directory format shared by every other module.

mod camera;
mod dataset;
mod image;
mod pose;

pub use camera::{project_point, to_ndc, unproject_pixel, Intrinsics};
pub use dataset::{
    load_dataset, read_depth_png, read_rgb_png, save_dataset_frame, write_depth_png,
    write_gray_png, write_intrinsics, write_poses, write_rgb_png, Dataset, DatasetError,
};
pub use image::{ColorImage, DepthImage, Frame, Grid};
pub(crate) use image::bilinear_masked;
pub use pose::Pose;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point depth must be positive (got {0})")]
    NonPositiveDepth(f64),
    #[error("inverse depth must be positive (got {0})")]
    NonPositiveInverseDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("frame {0} has no data fields")]
    EmptyFrame(usize),
}
