//! Image-space triangle geometry: pinhole projection, the edge-distance
//! SDF, incenter, window function, and barycentric coordinates.
//!
//! The SDF is the max of the three signed edge half-plane distances:
//! negative inside, zero on the boundary, positive outside. The window is
//! `ReLU(phi(p)/phi(s))^sigma` with `s` the incenter, so it is 1 at the
//! incenter and 0 at the boundary for any smoothness.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Default near plane in world units; triangles with any vertex at or
/// behind it are culled for that view.
pub const NEAR_PLANE: f64 = 0.01;

/// Projected triangles with |signed area| below this (px^2) are culled.
pub const DEGENERATE_AREA: f64 = 1e-8;

/// Window ratios at or below this evaluate to exactly 0, so constructed
/// boundary points stay 0 under floating-point noise even at tiny sigma.
pub const WINDOW_RATIO_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("rotation is not orthonormal: |R^T R - I|_max = {deviation}")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation determinant {det} is not +1")]
    BadDeterminant { det: f64 },
}

/// Pinhole camera: intrinsics in pixels, world-to-camera extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        let gram = rotation.transpose() * rotation;
        let deviation = (gram - Matrix3::identity()).abs().max();
        if deviation > 1e-6 {
            return Err(CameraError::NotOrthonormal { deviation });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-6 {
            return Err(CameraError::BadDeterminant { det });
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera center in world coordinates, -R^T t.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// World point to camera space.
    pub fn to_camera(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    /// Same view at `s`-times the resolution (for supersampled rendering).
    pub fn scaled(&self, s: usize) -> Camera {
        let s = s as f64;
        Camera {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: (self.width as f64 * s) as usize,
            height: (self.height as f64 * s) as usize,
            ..self.clone()
        }
    }
}

/// Pinhole projection of a world point.
///
/// Returns `None` when the camera-space depth is at or behind the near
/// plane; callers cull the whole triangle for that view.
pub fn project_vertex(v: &Vector3<f64>, cam: &Camera) -> Option<(Vector2<f64>, f64)> {
    let p = cam.to_camera(v);
    if p.z <= NEAR_PLANE {
        return None;
    }
    let q = Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy);
    Some((q, p.z))
}

pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of (a, b, c).
pub fn signed_area2(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    cross2(&(b - a), &(c - a))
}

/// Signed distance from `p` to the edge line `a -> b`, negative on the
/// triangle's interior side. `orient` is the sign of the triangle's
/// signed area.
pub fn edge_distance(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>, orient: f64) -> f64 {
    let u = b - a;
    let len = u.norm();
    -orient * cross2(&u, &(p - a)) / len
}

/// A projected, render-ready triangle for one view.
#[derive(Debug, Clone)]
pub struct ProjectedTriangle {
    /// Image-space vertices (pixels).
    pub q: [Vector2<f64>; 3],
    /// Camera-space z of the 3D incenter (sorting key).
    pub depth: f64,
    /// Sign of the projected signed area (+1 CCW, -1 CW).
    pub orient: f64,
    /// 2D incenter.
    pub incenter: Vector2<f64>,
    /// SDF value at the incenter: -(2 area)/perimeter, always negative.
    pub phi_s: f64,
    /// Inclusive pixel-index bounds of covered pixel centers.
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl PixelBox {
    pub fn is_empty(&self) -> bool {
        self.x0 > self.x1 || self.y0 > self.y1
    }
}

/// Incenter of a 2D triangle and the SDF value there.
///
/// `s = (a A + b B + c C)/(a+b+c)` with `a, b, c` the side lengths
/// opposite each vertex; `phi(s) = -(2 area)/perimeter` (minus the
/// inradius). Returns `None` when the perimeter degenerates.
pub fn incenter(pts: &[Vector2<f64>; 3]) -> Option<(Vector2<f64>, f64)> {
    let a = (pts[1] - pts[2]).norm();
    let b = (pts[2] - pts[0]).norm();
    let c = (pts[0] - pts[1]).norm();
    let perimeter = a + b + c;
    if perimeter < 1e-9 {
        return None;
    }
    let s = (pts[0] * a + pts[1] * b + pts[2] * c) / perimeter;
    let area2 = signed_area2(&pts[0], &pts[1], &pts[2]).abs();
    Some((s, -area2 / perimeter))
}

/// Incenter of a 3D triangle (same side-length weighting).
pub fn incenter3d(pts: &[Vector3<f64>; 3]) -> Option<Vector3<f64>> {
    let a = (pts[1] - pts[2]).norm();
    let b = (pts[2] - pts[0]).norm();
    let c = (pts[0] - pts[1]).norm();
    let perimeter = a + b + c;
    if perimeter < 1e-12 {
        return None;
    }
    Some((pts[0] * a + pts[1] * b + pts[2] * c) / perimeter)
}

impl ProjectedTriangle {
    /// Builds the render-ready form from projected vertices, or `None`
    /// when the projection is degenerate or misses the image.
    pub fn new(q: [Vector2<f64>; 3], depth: f64, width: usize, height: usize) -> Option<Self> {
        let area2 = signed_area2(&q[0], &q[1], &q[2]);
        if area2.abs() < 2.0 * DEGENERATE_AREA {
            return None;
        }
        let orient = area2.signum();
        let (inc, phi_s) = incenter(&q)?;
        if phi_s >= 0.0 {
            return None;
        }
        let (mut min_x, mut max_x) = (q[0].x, q[0].x);
        let (mut min_y, mut max_y) = (q[0].y, q[0].y);
        for v in &q[1..] {
            min_x = min_x.min(v.x);
            max_x = max_x.max(v.x);
            min_y = min_y.min(v.y);
            max_y = max_y.max(v.y);
        }
        // pixel centers sit at (i + 0.5, j + 0.5)
        let bbox = PixelBox {
            x0: ((min_x - 0.5).ceil() as i32).max(0),
            y0: ((min_y - 0.5).ceil() as i32).max(0),
            x1: ((max_x - 0.5).floor() as i32).min(width as i32 - 1),
            y1: ((max_y - 0.5).floor() as i32).min(height as i32 - 1),
        };
        if bbox.is_empty() {
            return None;
        }
        Some(ProjectedTriangle {
            q,
            depth,
            orient,
            incenter: inc,
            phi_s,
            bbox,
        })
    }

    /// SDF at `p`: max of the three edge half-plane distances.
    pub fn sdf(&self, p: &Vector2<f64>) -> f64 {
        self.sdf_argmax(p).0
    }

    /// SDF plus the index of the maximizing edge (edge e runs from
    /// vertex e to vertex (e+1)%3).
    pub fn sdf_argmax(&self, p: &Vector2<f64>) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for e in 0..3 {
            let d = edge_distance(&self.q[e], &self.q[(e + 1) % 3], p, self.orient);
            if d > best {
                best = d;
                arg = e;
            }
        }
        (best, arg)
    }

    /// Window ratio phi(p)/phi(s), clamped to [0, 1]; 0 at and outside
    /// the boundary (with the snap tolerance), 1 at the incenter.
    pub fn window_ratio(&self, p: &Vector2<f64>) -> f64 {
        let r = self.sdf(p) / self.phi_s;
        if r <= WINDOW_RATIO_EPS {
            0.0
        } else {
            r.min(1.0)
        }
    }

    /// Eq-style window: `ReLU(phi(p)/phi(s))^sigma`.
    pub fn window(&self, p: &Vector2<f64>, sigma: f64) -> f64 {
        let r = self.window_ratio(p);
        if r == 0.0 {
            0.0
        } else {
            r.powf(sigma)
        }
    }

    /// Barycentric coordinates of `p` (signed-area ratios; sum to 1).
    pub fn barycentric(&self, p: &Vector2<f64>) -> [f64; 3] {
        barycentric(&self.q, p).expect("non-degenerate by construction")
    }
}

#[derive(Debug, Error)]
#[error("degenerate triangle (area {area2} px^2)")]
pub struct DegenerateTriangle {
    pub area2: f64,
}

/// Barycentric coordinates as signed-area ratios.
pub fn barycentric(
    pts: &[Vector2<f64>; 3],
    p: &Vector2<f64>,
) -> Result<[f64; 3], DegenerateTriangle> {
    let d = signed_area2(&pts[0], &pts[1], &pts[2]);
    if d.abs() < 2.0 * DEGENERATE_AREA {
        return Err(DegenerateTriangle { area2: d });
    }
    let n0 = signed_area2(p, &pts[1], &pts[2]);
    let n1 = signed_area2(&pts[0], p, &pts[2]);
    let n2 = signed_area2(&pts[0], &pts[1], p);
    Ok([n0 / d, n1 / d, n2 / d])
}
