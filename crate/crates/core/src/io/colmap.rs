//! COLMAP text-format parser: `cameras.txt`, `images.txt`, `points3D.txt`.
//!
//! Supports the SIMPLE_PINHOLE and PINHOLE camera models. The binary
//! variants are out of scope; convert upstream with `colmap model_converter`.

use super::{file_err, IoError, SceneDataset, Split};
use crate::geom::Camera;
use crate::io::image_io;
use nalgebra::{Matrix3, Vector3};
use std::collections::HashMap;
use std::path::Path;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct NumberedLines {
    lines: Vec<(usize, String)>,
    declared_count: Option<usize>,
}

/// Reads a COLMAP text file, dropping comments but remembering the
/// "Number of ..." header when present. `keep_empty` preserves blank
/// lines, which are significant in `images.txt` (an image with no
/// observations has an empty second line).
fn read_lines(path: &Path, keep_empty: bool) -> Result<NumberedLines, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut lines = Vec::new();
    let mut declared_count = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() && !keep_empty {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(pos) = comment.find("Number of") {
                let rest = &comment[pos..];
                if let Some(colon) = rest.find(':') {
                    let num = rest[colon + 1..]
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .find(|s| !s.is_empty());
                    if let Some(num) = num {
                        declared_count = num.parse::<usize>().ok();
                    }
                }
            }
            continue;
        }
        lines.push((i + 1, line.to_string()));
    }
    Ok(NumberedLines {
        lines,
        declared_count,
    })
}

#[derive(Debug)]
struct ColmapCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

fn parse_cameras(path: &Path) -> Result<HashMap<u64, ColmapCamera>, IoError> {
    let file = read_lines(path, false)?;
    let mut cameras = HashMap::new();
    for (lineno, line) in &file.lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 4 {
            return Err(parse_err(path, *lineno, "expected CAMERA_ID MODEL W H PARAMS"));
        }
        let id: u64 = tok[0]
            .parse()
            .map_err(|_| parse_err(path, *lineno, "bad camera id"))?;
        let model = tok[1];
        let width: usize = tok[2]
            .parse()
            .map_err(|_| parse_err(path, *lineno, "bad width"))?;
        let height: usize = tok[3]
            .parse()
            .map_err(|_| parse_err(path, *lineno, "bad height"))?;
        let params: Vec<f64> = tok[4..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(path, *lineno, "bad camera parameter"))?;
        let cam = match model {
            "SIMPLE_PINHOLE" => {
                if params.len() != 3 {
                    return Err(parse_err(path, *lineno, "SIMPLE_PINHOLE needs f cx cy"));
                }
                ColmapCamera {
                    fx: params[0],
                    fy: params[0],
                    cx: params[1],
                    cy: params[2],
                    width,
                    height,
                }
            }
            "PINHOLE" => {
                if params.len() != 4 {
                    return Err(parse_err(path, *lineno, "PINHOLE needs fx fy cx cy"));
                }
                ColmapCamera {
                    fx: params[0],
                    fy: params[1],
                    cx: params[2],
                    cy: params[3],
                    width,
                    height,
                }
            }
            other => {
                return Err(IoError::UnsupportedCameraModel {
                    model: other.to_string(),
                })
            }
        };
        cameras.insert(id, cam);
    }
    if let Some(n) = file.declared_count {
        if n != cameras.len() {
            return Err(parse_err(
                path,
                0,
                format!("header declares {n} cameras, parsed {}", cameras.len()),
            ));
        }
    }
    Ok(cameras)
}

/// World-to-camera rotation from a COLMAP (qw, qx, qy, qz) quaternion.
pub fn quaternion_to_rotation(qw: f64, qx: f64, qy: f64, qz: f64) -> Matrix3<f64> {
    let n = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
    let (w, x, y, z) = (qw / n, qx / n, qy / n, qz / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

struct ColmapImage {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    camera_id: u64,
    name: String,
}

fn parse_images(path: &Path) -> Result<Vec<ColmapImage>, IoError> {
    let file = read_lines(path, true)?;
    let mut images = Vec::new();
    // two lines per image: the pose line, then the 2D-point line (skipped;
    // may be empty). Stray blank lines between records are tolerated.
    let mut iter = file.lines.iter();
    while let Some((lineno, line)) = iter.next() {
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 10 {
            return Err(parse_err(
                path,
                *lineno,
                "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME",
            ));
        }
        let mut nums = [0.0f64; 7];
        for (i, slot) in nums.iter_mut().enumerate() {
            *slot = tok[i + 1]
                .parse()
                .map_err(|_| parse_err(path, *lineno, format!("bad number {:?}", tok[i + 1])))?;
        }
        let camera_id: u64 = tok[8]
            .parse()
            .map_err(|_| parse_err(path, *lineno, "bad camera id"))?;
        images.push(ColmapImage {
            rotation: quaternion_to_rotation(nums[0], nums[1], nums[2], nums[3]),
            translation: Vector3::new(nums[4], nums[5], nums[6]),
            camera_id,
            name: tok[9].to_string(),
        });
        iter.next(); // observations line
    }
    if let Some(n) = file.declared_count {
        if n != images.len() {
            return Err(parse_err(
                path,
                0,
                format!("header declares {n} images, parsed {}", images.len()),
            ));
        }
    }
    // deterministic view order
    images.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(images)
}

type Points = (Vec<Vector3<f64>>, Vec<[f64; 3]>);

fn parse_points(path: &Path) -> Result<Points, IoError> {
    let file = read_lines(path, false)?;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for (lineno, line) in &file.lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 7 {
            return Err(parse_err(
                path,
                *lineno,
                "expected POINT3D_ID X Y Z R G B ...",
            ));
        }
        let coord = |i: usize| -> Result<f64, IoError> {
            tok[i]
                .parse()
                .map_err(|_| parse_err(path, *lineno, format!("bad coordinate {:?}", tok[i])))
        };
        points.push(Vector3::new(coord(1)?, coord(2)?, coord(3)?));
        let channel = |i: usize| -> Result<f64, IoError> {
            let v: u8 = tok[i]
                .parse()
                .map_err(|_| parse_err(path, *lineno, format!("bad color byte {:?}", tok[i])))?;
            Ok(v as f64 / 255.0)
        };
        colors.push([channel(4)?, channel(5)?, channel(6)?]);
    }
    if let Some(n) = file.declared_count {
        if n != points.len() {
            return Err(parse_err(
                path,
                0,
                format!("header declares {n} points, parsed {}", points.len()),
            ));
        }
    }
    Ok((points, colors))
}

/// Parses a COLMAP text model directory plus its images directory into a
/// render-ready dataset. `images_dir` holds the files named in
/// `images.txt`; normal priors are picked up from `<stem>_normal.png`.
pub fn parse_colmap_text(
    sparse_dir: &Path,
    images_dir: &Path,
) -> Result<SceneDataset, IoError> {
    let cameras = parse_cameras(&sparse_dir.join("cameras.txt"))?;
    let images = parse_images(&sparse_dir.join("images.txt"))?;
    let (points, point_colors) = parse_points(&sparse_dir.join("points3D.txt"))?;

    let mut out_cameras = Vec::new();
    let mut out_images = Vec::new();
    let mut normal_maps = Vec::new();
    let mut image_names = Vec::new();
    for (index, im) in images.iter().enumerate() {
        let cam = cameras.get(&im.camera_id).ok_or_else(|| IoError::Format {
            path: sparse_dir.join("images.txt"),
            message: format!("image {} references unknown camera {}", im.name, im.camera_id),
        })?;
        let camera = Camera::new(
            cam.fx,
            cam.fy,
            cam.cx,
            cam.cy,
            im.rotation,
            im.translation,
            cam.width,
            cam.height,
        )
        .map_err(|source| IoError::BadCamera { index, source })?;
        let img_path = images_dir.join(&im.name);
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
        normal_maps.push(image_io::read_normal_prior(&img_path, &camera)?);
        out_cameras.push(camera);
        out_images.push(img);
        image_names.push(im.name.clone());
    }

    let split = Split::every_eighth(out_cameras.len());
    Ok(SceneDataset {
        cameras: out_cameras,
        images: out_images,
        image_names,
        normal_maps,
        points,
        point_colors: Some(point_colors),
        split,
    })
}
