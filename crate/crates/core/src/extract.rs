//! Mask-driven object extraction: in the opaque regime each pixel is
//! decided by exactly one triangle, so the winner-ID buffer maps 2D masks
//! straight to triangle sets.

use crate::geom::Camera;
use crate::img::MaskBuf;
use crate::raster::{render, RenderOptions};
use crate::scene::Scene;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Extraction renders in the converged regime: sharp windows.
pub const EXTRACT_SIGMA: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("view {view}: mask is {got_w}x{got_h} but the camera is {want_w}x{want_h}")]
    MaskMismatch {
        view: usize,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Keep only the listed triangles.
    Extract,
    /// Keep the complement.
    Remove,
}

/// Union over views of winner IDs at mask-true pixels. With
/// `min_views > 1` a triangle must be hit in at least that many views
/// (vote filter for noisy masks; the default 1 is a plain union).
pub fn collect_triangles(
    scene: &Scene,
    views: &[(Camera, MaskBuf)],
    min_views: usize,
) -> Result<BTreeSet<u32>, ExtractError> {
    let mut votes: HashMap<u32, usize> = HashMap::new();
    let opts = RenderOptions::default();
    for (view, (cam, mask)) in views.iter().enumerate() {
        if mask.width != cam.width || mask.height != cam.height {
            return Err(ExtractError::MaskMismatch {
                view,
                got_w: mask.width,
                got_h: mask.height,
                want_w: cam.width,
                want_h: cam.height,
            });
        }
        let out = render(scene, cam, EXTRACT_SIGMA, 0.0, &opts);
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for y in 0..cam.height {
            for x in 0..cam.width {
                if mask.get(x, y) {
                    if let Some(id) = out.winner_id[y * cam.width + x] {
                        seen.insert(id);
                    }
                }
            }
        }
        for id in seen {
            *votes.entry(id).or_default() += 1;
        }
    }
    Ok(votes
        .into_iter()
        .filter(|(_, v)| *v >= min_views.max(1))
        .map(|(id, _)| id)
        .collect())
}

/// Keeps (or removes) the listed triangles, drops unused vertices, and
/// compacts; the result is export-ready.
pub fn split_scene(scene: &Scene, ids: &BTreeSet<u32>, mode: SplitMode) -> Scene {
    let mut out = scene.clone();
    for t in 0..out.triangles.len() {
        if !out.triangles.active[t] {
            continue;
        }
        let listed = ids.contains(&(t as u32));
        let keep = match mode {
            SplitMode::Extract => listed,
            SplitMode::Remove => !listed,
        };
        if !keep {
            out.triangles.active[t] = false;
        }
    }
    crate::lifecycle::prune_orphan_vertices(&mut out);
    out.compact();
    debug_assert!(out.validate().is_ok());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh;
    use nalgebra::{Matrix3, Vector3};

    fn test_camera(size: usize) -> Camera {
        Camera::new(
            size as f64,
            size as f64,
            size as f64 / 2.0,
            size as f64 / 2.0,
            Matrix3::identity(),
            Vector3::zeros(),
            size,
            size,
        )
        .unwrap()
    }

    /// Two opaque triangles side by side (left: id 0, right: id 1).
    fn two_triangle_scene() -> Scene {
        let mut scene = Scene::default();
        let mut red = [[0.0; 3]; 16];
        red[0] = sh::rgb_to_dc([1.0, 0.0, 0.0]);
        let mut blue = [[0.0; 3]; 16];
        blue[0] = sh::rgb_to_dc([0.0, 0.0, 1.0]);
        scene.vertices.push(Vector3::new(-1.2, -0.8, 2.0), red, 1000.0);
        scene.vertices.push(Vector3::new(-0.2, -0.8, 2.0), red, 1000.0);
        scene.vertices.push(Vector3::new(-0.7, 0.8, 2.0), red, 1000.0);
        scene.vertices.push(Vector3::new(0.2, -0.8, 2.0), blue, 1000.0);
        scene.vertices.push(Vector3::new(1.2, -0.8, 2.0), blue, 1000.0);
        scene.vertices.push(Vector3::new(0.7, 0.8, 2.0), blue, 1000.0);
        scene.triangles.push([0, 1, 2]);
        scene.triangles.push([3, 4, 5]);
        scene
    }

    #[test]
    fn mask_over_one_triangle_collects_exactly_it() {
        let scene = two_triangle_scene();
        let cam = test_camera(64);
        // mask = the left half of the image
        let mut mask = MaskBuf::new(64, 64);
        for y in 0..64 {
            for x in 0..32 {
                mask.set(x, y, true);
            }
        }
        let ids = collect_triangles(&scene, &[(cam, mask)], 1).unwrap();
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn empty_mask_collects_nothing() {
        let scene = two_triangle_scene();
        let cam = test_camera(64);
        let mask = MaskBuf::new(64, 64);
        let ids = collect_triangles(&scene, &[(cam, mask)], 1).unwrap();
        assert!(ids.is_empty());
    }

    #[test]
    fn mask_dimension_mismatch_errors() {
        let scene = two_triangle_scene();
        let cam = test_camera(64);
        let mask = MaskBuf::new(32, 32);
        assert!(collect_triangles(&scene, &[(cam, mask)], 1).is_err());
    }

    #[test]
    fn monotone_in_the_mask() {
        let scene = two_triangle_scene();
        let cam = test_camera(64);
        let mut small = MaskBuf::new(64, 64);
        for y in 20..40 {
            for x in 5..20 {
                small.set(x, y, true);
            }
        }
        let mut big = small.clone();
        for y in 0..64 {
            for x in 0..64 {
                if x > 30 {
                    big.set(x, y, true);
                }
            }
        }
        let a = collect_triangles(&scene, &[(cam.clone(), small)], 1).unwrap();
        let b = collect_triangles(&scene, &[(cam, big)], 1).unwrap();
        assert!(a.is_subset(&b));
    }

    #[test]
    fn split_extract_plus_remove_partitions() {
        let scene = two_triangle_scene();
        let ids: BTreeSet<u32> = [0u32].into_iter().collect();
        let extracted = split_scene(&scene, &ids, SplitMode::Extract);
        let removed = split_scene(&scene, &ids, SplitMode::Remove);
        assert_eq!(extracted.triangles.len(), 1);
        assert_eq!(removed.triangles.len(), 1);
        assert_eq!(extracted.vertices.len(), 3);
        assert_eq!(removed.vertices.len(), 3);
        // extract(all) = compacted original
        let all: BTreeSet<u32> = [0u32, 1].into_iter().collect();
        let full = split_scene(&scene, &all, SplitMode::Extract);
        assert_eq!(full.triangles.len(), 2);
        assert_eq!(full.vertices.len(), 6);
    }

    #[test]
    fn extracted_scene_renders_identically_inside_mask() {
        let scene = two_triangle_scene();
        let cam = test_camera(64);
        let opts = RenderOptions::default();
        let full = render(&scene, &cam, EXTRACT_SIGMA, 0.0, &opts);
        let mut mask = MaskBuf::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                mask.set(x, y, full.winner_id[y * 64 + x] == Some(0));
            }
        }
        let ids = collect_triangles(&scene, &[(cam.clone(), mask.clone())], 1).unwrap();
        let sub = split_scene(&scene, &ids, SplitMode::Extract);
        let sub_render = render(&sub, &cam, EXTRACT_SIGMA, 0.0, &opts);
        for y in 0..64 {
            for x in 0..64 {
                if mask.get(x, y) {
                    let a = full.color.get(x, y);
                    let b = sub_render.color.get(x, y);
                    for ch in 0..3 {
                        assert!((a[ch] - b[ch]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
