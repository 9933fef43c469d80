//! Native JSON scene manifest, used by the synthetic fixtures and anywhere
//! COLMAP files are unnecessary. Cameras carry explicit K/R/t; image and
//! mask paths are relative to the manifest file.

use super::{file_err, IoError, SceneDataset, Split};
use crate::geom::Camera;
use crate::io::image_io;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_image: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub cameras: Vec<ManifestCamera>,
    pub points: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_colors: Option<Vec<[f64; 3]>>,
    /// Explicit split; absent means every 8th view is held out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<ManifestSplit>,
}

impl ManifestCamera {
    pub fn from_camera(cam: &Camera, image: String) -> Self {
        let r = &cam.rotation;
        ManifestCamera {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            image,
            normal_image: None,
        }
    }

    pub fn to_camera(&self, index: usize) -> Result<Camera, IoError> {
        let r = Matrix3::new(
            self.rotation[0][0],
            self.rotation[0][1],
            self.rotation[0][2],
            self.rotation[1][0],
            self.rotation[1][1],
            self.rotation[1][2],
            self.rotation[2][0],
            self.rotation[2][1],
            self.rotation[2][2],
        );
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            r,
            Vector3::new(self.translation[0], self.translation[1], self.translation[2]),
            self.width,
            self.height,
        )
        .map_err(|source| IoError::BadCamera { index, source })
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization");
    std::fs::write(path, json).map_err(|e| file_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Loads a manifest plus every image (and optional normal prior) it names.
pub fn load_manifest_dataset(path: &Path) -> Result<SceneDataset, IoError> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cameras = Vec::new();
    let mut images = Vec::new();
    let mut image_names = Vec::new();
    let mut normal_maps = Vec::new();
    for (index, mc) in manifest.cameras.iter().enumerate() {
        let camera = mc.to_camera(index)?;
        let img_path = base.join(&mc.image);
        let img = image_io::read_image(&img_path)?;
        if img.width != camera.width || img.height != camera.height {
            return Err(IoError::DimensionMismatch {
                path: img_path,
                index,
                got_w: img.width,
                got_h: img.height,
                want_w: camera.width,
                want_h: camera.height,
            });
        }
        let prior = match &mc.normal_image {
            Some(rel) => {
                // named explicitly: read and convert like the suffix path
                let p = base.join(rel);
                image_io::read_normal_prior(
                    &p.with_file_name(
                        p.file_stem()
                            .and_then(|s| s.to_str())
                            .map(|s| format!("{}.png", s.trim_end_matches("_normal")))
                            .unwrap_or_default(),
                    ),
                    &camera,
                )?
            }
            None => image_io::read_normal_prior(&img_path, &camera)?,
        };
        normal_maps.push(prior);
        cameras.push(camera);
        images.push(img);
        image_names.push(mc.image.clone());
    }
    let split = match &manifest.split {
        Some(s) => Split {
            train: s.train.clone(),
            eval: s.eval.clone(),
        },
        None => Split::every_eighth(cameras.len()),
    };
    Ok(SceneDataset {
        cameras,
        images,
        image_names,
        normal_maps,
        points: manifest
            .points
            .iter()
            .map(|p| Vector3::new(p[0], p[1], p[2]))
            .collect(),
        point_colors: manifest.point_colors,
        split,
    })
}
