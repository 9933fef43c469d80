//! Dataset parsing (COLMAP text and the native JSON manifest), image I/O,
//! binary PLY export/import, and training checkpoints.

pub mod checkpoint;
pub mod colmap;
pub mod image_io;
pub mod manifest;
pub mod ply;

use crate::geom::Camera;
use crate::img::ImageBuf;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unsupported camera model {model:?} (supported: SIMPLE_PINHOLE, PINHOLE)")]
    UnsupportedCameraModel { model: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("checkpoint version {got} unsupported (expected {expected})")]
    Version { got: u32, expected: u32 },
    #[error("camera {index}: {source}")]
    BadCamera {
        index: usize,
        #[source]
        source: crate::geom::CameraError,
    },
    #[error("image {path} is {got_w}x{got_h} but camera {index} expects {want_w}x{want_h}")]
    DimensionMismatch {
        path: PathBuf,
        index: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

pub(crate) fn file_err(path: &std::path::Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Which views belong to the train and eval splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

impl Split {
    /// The standard held-out protocol: every 8th view is an eval view.
    pub fn every_eighth(n_views: usize) -> Split {
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for i in 0..n_views {
            if i % 8 == 0 {
                eval.push(i);
            } else {
                train.push(i);
            }
        }
        Split { train, eval }
    }
}

/// A parsed dataset: posed cameras, loaded images, optional per-view
/// normal priors (world space), and the sparse point cloud.
pub struct SceneDataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuf>,
    pub image_names: Vec<String>,
    /// World-space unit normal maps, when `<image>_normal.png` exists.
    pub normal_maps: Vec<Option<ImageBuf>>,
    pub points: Vec<nalgebra::Vector3<f64>>,
    pub point_colors: Option<Vec<[f64; 3]>>,
    pub split: Split,
}

impl SceneDataset {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }
}
