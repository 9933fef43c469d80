//! Synthetic desk-scale fixtures: fully self-contained datasets rendered
//! by this crate's own renderer, so tests and CI need no downloads.
//!
//! Presets:
//! - `two-objects`: two opaque faceted blobs, 20 ring cameras, per-view
//!   masks of object A, ground-truth triangle labels, and a jittered
//!   point cloud for Delaunay initialization.
//! - `triangle-cloud`: random semi-transparent triangles in a ball.
//! - `textured-quad`: a two-triangle quad with distinct vertex colors.

use crate::geom::Camera;
use crate::img::MaskBuf;
use crate::io::checkpoint::{Checkpoint, MomentPair, OptimizerState};
use crate::io::manifest::{Manifest, ManifestCamera, ManifestSplit};
use crate::io::{image_io, manifest, IoError, SceneDataset, Split};
use crate::raster::{self, RenderOptions};
use crate::scene::Scene;
use crate::sh;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    TwoObjects,
    TriangleCloud,
    TexturedQuad,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TwoObjects => "two-objects",
            Preset::TriangleCloud => "triangle-cloud",
            Preset::TexturedQuad => "textured-quad",
        }
    }

    pub fn all() -> &'static [Preset] {
        &[
            Preset::TwoObjects,
            Preset::TriangleCloud,
            Preset::TexturedQuad,
        ]
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::all().iter().copied().find(|p| p.name() == name)
    }
}

/// Ground-truth triangle labels written next to the fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Labels {
    pub object_a: Vec<u32>,
    pub object_b: Vec<u32>,
    /// Views whose masks suffice to recover object A exactly.
    pub mask_views: Vec<usize>,
}

pub struct Fixture {
    pub gt_scene: Scene,
    pub dataset: SceneDataset,
    pub labels: Option<Labels>,
    pub masks: Vec<MaskBuf>,
}

/// World-to-camera pose looking from `eye` to `target`; `up_hint` must not
/// be parallel to the view direction.
pub fn look_at(
    eye: Vector3<f64>,
    target: Vector3<f64>,
    up_hint: Vector3<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let f = (target - eye).normalize();
    let r = up_hint.cross(&f).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let t = -(rot * eye);
    (rot, t)
}

fn hash_mix(seed: u64, k: u64) -> u64 {
    let mut x = seed ^ k.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x ^ (x >> 31)
}

/// Unit icosahedron vertices and faces.
fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ];
    for v in &mut verts {
        *v = v.normalize();
    }
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

fn rotation_from_axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// One faceted blob: a randomly rotated icosahedron with a few faces
/// midpoint-subdivided, colored around a base hue.
fn build_blob(
    center: Vector3<f64>,
    radius: f64,
    base_rgb: [f64; 3],
    rng: &mut ChaCha8Rng,
    scene: &mut Scene,
) -> Vec<u32> {
    let (mut verts, faces) = icosahedron();
    let rot = rotation_from_axis_angle(
        Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    for v in &mut verts {
        // mild per-vertex radius noise keeps facets irregular
        let r = radius * rng.gen_range(0.85..1.15);
        *v = center + rot * (*v * r);
    }
    let base = scene.vertices.len();
    for v in &verts {
        let mut rgb = [0.0; 3];
        for ch in 0..3 {
            rgb[ch] = (base_rgb[ch] + rng.gen_range(-0.08..0.08)).clamp(0.35, 0.65);
        }
        let mut coeffs = [[0.0; 3]; 16];
        coeffs[0] = sh::rgb_to_dc(rgb);
        scene.vertices.push(*v, coeffs, 1000.0);
    }
    let mut tri_ids = Vec::new();
    // subdivide three spread-out faces to push the count toward ~30
    let subdivide: BTreeSet<usize> = [0usize, 7, 13].into_iter().collect();
    let mut midpoints = std::collections::HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        let gi = [base + f[0], base + f[1], base + f[2]];
        if !subdivide.contains(&fi) {
            tri_ids.push(scene.triangles.push(gi) as u32);
            continue;
        }
        let mut mid = |a: usize, b: usize, scene: &mut Scene| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                let pos = (scene.vertices.positions[a] + scene.vertices.positions[b]) * 0.5;
                let mut coeffs = [[0.0; 3]; 16];
                for band in 0..16 {
                    for ch in 0..3 {
                        coeffs[band][ch] = 0.5
                            * (scene.vertices.sh_coeffs[a][band][ch]
                                + scene.vertices.sh_coeffs[b][band][ch]);
                    }
                }
                scene.vertices.push(pos, coeffs, 1000.0)
            })
        };
        let m01 = mid(gi[0], gi[1], scene);
        let m12 = mid(gi[1], gi[2], scene);
        let m20 = mid(gi[2], gi[0], scene);
        for tri in [
            [gi[0], m01, m20],
            [m01, gi[1], m12],
            [m20, m12, gi[2]],
            [m01, m12, m20],
        ] {
            tri_ids.push(scene.triangles.push(tri) as u32);
        }
    }
    tri_ids
}

/// Camera on a spiral around the x axis: the ring supplies full coverage
/// in the y-z plane while the x offset tilts views so faces pointing along
/// the axis are still seen head-on somewhere. The offset stays small
/// enough that the two objects never overlap in projection.
fn ring_camera(angle: f64, radius: f64, size: usize, focal: f64) -> Camera {
    let eye = Vector3::new(
        1.0 * (2.0 * angle + 0.5).sin(),
        radius * angle.sin(),
        radius * angle.cos(),
    );
    let (rot, t) = look_at(eye, Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
    Camera::new(
        focal,
        focal,
        size as f64 / 2.0,
        size as f64 / 2.0,
        rot,
        t,
        size,
        size,
    )
    .expect("look_at produces a proper rotation")
}

/// Builds the two-object fixture in memory. The seed search guarantees the
/// designated mask views recover object A's triangle set exactly.
pub fn two_objects(seed: u64) -> Fixture {
    let n_views = 20;
    let size = 128;
    let mask_views: Vec<usize> = vec![0, 4, 8, 12, 16];
    for attempt in 0..32 {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_mix(seed, attempt));
        let mut gt = Scene::default();
        let a_ids = build_blob(
            Vector3::new(-0.8, 0.0, 0.0),
            0.45,
            [0.60, 0.45, 0.40],
            &mut rng,
            &mut gt,
        );
        let b_ids = build_blob(
            Vector3::new(0.8, 0.0, 0.0),
            0.45,
            [0.40, 0.48, 0.62],
            &mut rng,
            &mut gt,
        );
        gt.validate().expect("fixture scene is well-formed");

        let cameras: Vec<Camera> = (0..n_views)
            .map(|k| {
                ring_camera(
                    std::f64::consts::TAU * k as f64 / n_views as f64,
                    3.0,
                    size,
                    110.0,
                )
            })
            .collect();
        let opts = RenderOptions::default();
        let mut images = Vec::new();
        let mut masks = Vec::new();
        let a_set: BTreeSet<u32> = a_ids.iter().copied().collect();
        for cam in &cameras {
            let out = raster::render(&gt, cam, 1e-4, 0.0, &opts);
            let mut mask = MaskBuf::new(size, size);
            for i in 0..size * size {
                if let Some(id) = out.winner_id[i] {
                    mask.values[i] = a_set.contains(&id);
                }
            }
            images.push(out.color);
            masks.push(mask);
        }

        // self-check: the designated mask views must recover A exactly
        let views: Vec<(Camera, MaskBuf)> = mask_views
            .iter()
            .map(|&v| (cameras[v].clone(), masks[v].clone()))
            .collect();
        let collected = crate::extract::collect_triangles(&gt, &views, 1)
            .expect("fixture masks align with cameras");
        if collected != a_set {
            let missing: Vec<u32> = a_set.difference(&collected).copied().collect();
            log::debug!("fixture attempt {attempt}: masks miss triangles {missing:?}");
            continue;
        }
        let b_set: BTreeSet<u32> = b_ids.iter().copied().collect();

        // SfM-like point cloud: jittered ground-truth vertices + colors
        let mut points = Vec::new();
        let mut point_colors = Vec::new();
        for v in 0..gt.vertices.len() {
            let p = gt.vertices.positions[v];
            points.push(Vector3::new(
                p.x + rng.gen_range(-0.02..0.02),
                p.y + rng.gen_range(-0.02..0.02),
                p.z + rng.gen_range(-0.02..0.02),
            ));
            let dc = gt.vertices.sh_coeffs[v][0];
            let mut rgb = [0.0; 3];
            for ch in 0..3 {
                rgb[ch] = (0.5 + sh::SH_C0 * dc[ch] + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
            }
            point_colors.push(rgb);
        }

        let split = Split {
            train: (0..n_views).filter(|v| v % 4 != 0).collect(),
            eval: mask_views.clone(),
        };
        let dataset = SceneDataset {
            image_names: (0..n_views)
                .map(|v| format!("images/view_{v:03}.png"))
                .collect(),
            normal_maps: vec![None; n_views],
            cameras,
            images,
            points,
            point_colors: Some(point_colors),
            split,
        };
        return Fixture {
            gt_scene: gt,
            dataset,
            labels: Some(Labels {
                object_a: a_ids,
                object_b: b_set.into_iter().collect(),
                mask_views,
            }),
            masks,
        };
    }
    unreachable!("no rotation seed yields full mask coverage");
}

/// Random semi-transparent triangle cloud.
pub fn triangle_cloud(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_mix(seed, 101));
    let n_tris = 40;
    let size = 64;
    let mut gt = Scene::default();
    for _ in 0..n_tris {
        let c = Vector3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        let logit = rng.gen_range(-0.8..2.5);
        let mut idx = [0usize; 3];
        for slot in &mut idx {
            let mut rgb = [0.0; 3];
            for ch in &mut rgb {
                *ch = rng.gen_range(0.35..0.65);
            }
            let mut coeffs = [[0.0; 3]; 16];
            coeffs[0] = sh::rgb_to_dc(rgb);
            let p = c + Vector3::new(
                rng.gen_range(-0.35..0.35),
                rng.gen_range(-0.35..0.35),
                rng.gen_range(-0.35..0.35),
            );
            *slot = gt.vertices.push(p, coeffs, logit);
        }
        gt.triangles.push(idx);
    }
    let cameras: Vec<Camera> = (0..8)
        .map(|k| {
            let ang = std::f64::consts::TAU * k as f64 / 8.0;
            let eye = Vector3::new(3.2 * ang.sin(), 0.4, 3.2 * ang.cos());
            let (rot, t) = look_at(eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0));
            Camera::new(64.0, 64.0, 32.0, 32.0, rot, t, size, size).unwrap()
        })
        .collect();
    let opts = RenderOptions::default();
    let images = cameras
        .iter()
        .map(|cam| raster::render(&gt, cam, 1e-4, 0.0, &opts).color)
        .collect();
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for v in 0..gt.vertices.len() {
        let p = gt.vertices.positions[v];
        points.push(Vector3::new(
            p.x + rng.gen_range(-0.02..0.02),
            p.y + rng.gen_range(-0.02..0.02),
            p.z + rng.gen_range(-0.02..0.02),
        ));
        let dc = gt.vertices.sh_coeffs[v][0];
        colors.push([
            (0.5 + sh::SH_C0 * dc[0]).clamp(0.0, 1.0),
            (0.5 + sh::SH_C0 * dc[1]).clamp(0.0, 1.0),
            (0.5 + sh::SH_C0 * dc[2]).clamp(0.0, 1.0),
        ]);
    }
    let n_views = cameras.len();
    Fixture {
        dataset: SceneDataset {
            image_names: (0..n_views)
                .map(|v| format!("images/view_{v:03}.png"))
                .collect(),
            normal_maps: vec![None; n_views],
            cameras,
            images,
            points,
            point_colors: Some(colors),
            split: Split::every_eighth(n_views),
        },
        gt_scene: gt,
        labels: None,
        masks: Vec::new(),
    }
}

/// Two-triangle quad with distinct vertex colors.
pub fn textured_quad(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_mix(seed, 202));
    let size = 64;
    let mut gt = Scene::default();
    let corners = [
        (Vector3::new(-0.9, -0.9, 0.0), [0.62, 0.38, 0.40]),
        (Vector3::new(0.9, -0.9, 0.0), [0.38, 0.62, 0.42]),
        (Vector3::new(0.9, 0.9, 0.0), [0.40, 0.44, 0.63]),
        (Vector3::new(-0.9, 0.9, 0.0), [0.58, 0.58, 0.38]),
    ];
    for (p, rgb) in corners {
        let mut coeffs = [[0.0; 3]; 16];
        coeffs[0] = sh::rgb_to_dc(rgb);
        gt.vertices.push(p, coeffs, 1000.0);
    }
    gt.triangles.push([0, 1, 2]);
    gt.triangles.push([0, 2, 3]);
    let cameras: Vec<Camera> = (0..6)
        .map(|k| {
            let ang = -0.5 + k as f64 * 0.2;
            let eye = Vector3::new(2.8 * ang.sin(), 0.15, -2.8 * ang.cos());
            let (rot, t) = look_at(eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0));
            Camera::new(70.0, 70.0, 32.0, 32.0, rot, t, size, size).unwrap()
        })
        .collect();
    let opts = RenderOptions::default();
    let images = cameras
        .iter()
        .map(|cam| raster::render(&gt, cam, 1e-4, 0.0, &opts).color)
        .collect();
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for v in 0..gt.vertices.len() {
        let p = gt.vertices.positions[v];
        points.push(Vector3::new(
            p.x + rng.gen_range(-0.02..0.02),
            p.y + rng.gen_range(-0.02..0.02),
            p.z + rng.gen_range(-0.05..0.05),
        ));
        let dc = gt.vertices.sh_coeffs[v][0];
        colors.push([
            (0.5 + sh::SH_C0 * dc[0]).clamp(0.0, 1.0),
            (0.5 + sh::SH_C0 * dc[1]).clamp(0.0, 1.0),
            (0.5 + sh::SH_C0 * dc[2]).clamp(0.0, 1.0),
        ]);
    }
    // the quad center, slightly off-plane, keeps the hull solid
    points.push(Vector3::new(0.0, 0.0, 0.08));
    colors.push([0.5, 0.5, 0.5]);
    let n_views = cameras.len();
    Fixture {
        dataset: SceneDataset {
            image_names: (0..n_views)
                .map(|v| format!("images/view_{v:03}.png"))
                .collect(),
            normal_maps: vec![None; n_views],
            cameras,
            images,
            points,
            point_colors: Some(colors),
            split: Split {
                train: (1..n_views).collect(),
                eval: vec![0],
            },
        },
        gt_scene: gt,
        labels: None,
        masks: Vec::new(),
    }
}

pub fn build(preset: Preset, seed: u64) -> Fixture {
    match preset {
        Preset::TwoObjects => two_objects(seed),
        Preset::TriangleCloud => triangle_cloud(seed),
        Preset::TexturedQuad => textured_quad(seed),
    }
}

/// Writes a fixture to disk: manifest, images, masks, ground-truth scene
/// checkpoint, and labels.
pub fn write_fixture(fixture: &Fixture, out_dir: &Path) -> Result<(), IoError> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| crate::io::file_err(p, e));
    mkdir(out_dir)?;
    mkdir(&out_dir.join("images"))?;
    let ds = &fixture.dataset;
    for (i, img) in ds.images.iter().enumerate() {
        image_io::write_image(img, &out_dir.join(&ds.image_names[i]))?;
    }
    if !fixture.masks.is_empty() {
        mkdir(&out_dir.join("masks"))?;
        for (i, mask) in fixture.masks.iter().enumerate() {
            image_io::write_mask(mask, &out_dir.join(format!("masks/view_{i:03}.png")))?;
        }
    }
    let manifest = Manifest {
        cameras: ds
            .cameras
            .iter()
            .zip(&ds.image_names)
            .map(|(c, name)| ManifestCamera::from_camera(c, name.clone()))
            .collect(),
        points: ds.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        point_colors: ds.point_colors.clone(),
        split: Some(ManifestSplit {
            train: ds.split.train.clone(),
            eval: ds.split.eval.clone(),
        }),
    };
    manifest::write_manifest(&manifest, &out_dir.join("manifest.json"))?;

    let n = fixture.gt_scene.vertices.len();
    let gt_ckpt = Checkpoint {
        iteration: 0,
        sigma: 1e-4,
        floor: 0.0,
        scene: fixture.gt_scene.clone(),
        optimizer: OptimizerState {
            positions: MomentPair {
                m: vec![0.0; n * 3],
                v: vec![0.0; n * 3],
            },
            sh: MomentPair {
                m: vec![0.0; n * 48],
                v: vec![0.0; n * 48],
            },
            opacity: MomentPair {
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        },
        weight_accum: vec![0.0; fixture.gt_scene.triangles.len()],
    };
    crate::io::checkpoint::save_checkpoint(&gt_ckpt, &out_dir.join("gt.tsp"))?;
    if let Some(labels) = &fixture.labels {
        let path = out_dir.join("labels.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(labels).expect("labels serialize"),
        )
        .map_err(|e| crate::io::file_err(&path, e))?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Labels, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io::file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_is_proper_and_points_forward() {
        let eye = Vector3::new(0.0, 2.0, 3.0);
        let (rot, t) = look_at(eye, Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        assert!((rot.determinant() - 1.0).abs() < 1e-12);
        assert!(
            ((rot.transpose() * rot) - Matrix3::identity()).abs().max() < 1e-12
        );
        // the target sits on the +z camera axis
        let target_cam = rot * Vector3::zeros() + t;
        assert!(target_cam.z > 0.0);
        assert!(target_cam.x.abs() < 1e-12 && target_cam.y.abs() < 1e-12);
    }

    #[test]
    fn two_objects_fixture_is_consistent() {
        let fx = two_objects(7);
        let labels = fx.labels.as_ref().unwrap();
        assert_eq!(fx.dataset.n_views(), 20);
        assert_eq!(fx.dataset.images[0].width, 128);
        let total = labels.object_a.len() + labels.object_b.len();
        assert_eq!(total, fx.gt_scene.triangles.len());
        assert!((50..=70).contains(&total), "got {total} triangles");
        fx.gt_scene.validate().unwrap();
        // objects never overlap: no mask pixel carries a B winner
        let b: BTreeSet<u32> = labels.object_b.iter().copied().collect();
        for (v, mask) in fx.masks.iter().enumerate() {
            let out = raster::render(
                &fx.gt_scene,
                &fx.dataset.cameras[v],
                1e-4,
                0.0,
                &RenderOptions::default(),
            );
            for i in 0..mask.values.len() {
                if mask.values[i] {
                    assert!(!b.contains(&out.winner_id[i].unwrap()));
                }
            }
        }
    }

    #[test]
    fn fixtures_are_deterministic() {
        let a = two_objects(3);
        let b = two_objects(3);
        assert_eq!(a.gt_scene, b.gt_scene);
        assert_eq!(a.dataset.images[5], b.dataset.images[5]);
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_fixture(&a, dir1.path()).unwrap();
        write_fixture(&b, dir2.path()).unwrap();
        for rel in [
            "manifest.json",
            "gt.tsp",
            "images/view_000.png",
            "masks/view_004.png",
        ] {
            assert_eq!(
                std::fs::read(dir1.path().join(rel)).unwrap(),
                std::fs::read(dir2.path().join(rel)).unwrap(),
                "{rel} differs"
            );
        }
    }

    #[test]
    fn quad_and_cloud_presets_render() {
        let q = textured_quad(1);
        assert_eq!(q.gt_scene.triangles.len(), 2);
        assert_eq!(q.dataset.n_views(), 6);
        // the quad is visible: not all pixels background
        let nonzero = q.dataset.images[0]
            .pixels
            .iter()
            .filter(|p| p[0] > 0.05)
            .count();
        assert!(nonzero > 200, "quad covers {nonzero} pixels");
        let c = triangle_cloud(1);
        assert_eq!(c.gt_scene.triangles.len(), 40);
        assert!(c.dataset.points.len() >= 120);
    }

    #[test]
    fn fixture_round_trips_through_manifest() {
        let fx = textured_quad(2);
        let dir = tempfile::tempdir().unwrap();
        write_fixture(&fx, dir.path()).unwrap();
        let ds = manifest::load_manifest_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(ds.n_views(), fx.dataset.n_views());
        assert_eq!(ds.split.eval, fx.dataset.split.eval);
        assert_eq!(ds.points.len(), fx.dataset.points.len());
        // images survive the 8-bit quantization
        assert!(ds.images[0].max_abs_diff(&fx.dataset.images[0]) <= 1.0 / 255.0);
    }
}
