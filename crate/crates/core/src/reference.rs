//! Naive reference renderer used as the compositing oracle.
//!
//! Deliberately independent of the tile renderer: per pixel it scans every
//! active triangle, evaluates the edge distances and window directly from
//! the projected vertices, sorts contributions globally by (depth, id),
//! and composites without tiles or early termination. Shares only the
//! scene data types, SH evaluation, and the opacity mapping, which carry
//! their own oracles.

use crate::geom::{Camera, WINDOW_RATIO_EPS};
use crate::img::ImageBuf;
use crate::scene::Scene;
use crate::sh;
use nalgebra::{Vector2, Vector3};

struct RefTriangle {
    id: u32,
    q: [Vector2<f64>; 3],
    depth: f64,
    phi_s: f64,
    orient: f64,
    color: [[f64; 3]; 3],
    opacity: f64,
}

fn project(cam: &Camera, v: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
    let p = cam.rotation * v + cam.translation;
    if p.z <= crate::geom::NEAR_PLANE {
        return None;
    }
    Some((
        Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy),
        p.z,
    ))
}

fn side_lengths3(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> (f64, f64, f64) {
    ((b - c).norm(), (c - a).norm(), (a - b).norm())
}

fn edge_dist(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>, orient: f64) -> f64 {
    let u = b - a;
    let d = p - a;
    -orient * (u.x * d.y - u.y * d.x) / u.norm()
}

/// Renders one view the slow, obviously-correct way.
pub fn render_reference(
    scene: &Scene,
    cam: &Camera,
    sigma: f64,
    floor: f64,
    background: [f64; 3],
) -> ImageBuf {
    let center = -(cam.rotation.transpose() * cam.translation);
    let mut tris = Vec::new();
    for t in 0..scene.triangles.len() {
        if !scene.triangles.active[t] {
            continue;
        }
        let [i, j, k] = scene.triangles.indices[t];
        let pw = [
            scene.vertices.positions[i],
            scene.vertices.positions[j],
            scene.vertices.positions[k],
        ];
        let (Some((q0, _)), Some((q1, _)), Some((q2, _))) = (
            project(cam, &pw[0]),
            project(cam, &pw[1]),
            project(cam, &pw[2]),
        ) else {
            continue;
        };
        let area2 = (q1.x - q0.x) * (q2.y - q0.y) - (q1.y - q0.y) * (q2.x - q0.x);
        if area2.abs() < 2e-8 {
            continue;
        }
        // 3D incenter for depth and the SH view direction
        let (a3, b3, c3) = side_lengths3(&pw[0], &pw[1], &pw[2]);
        let s3 = (pw[0] * a3 + pw[1] * b3 + pw[2] * c3) / (a3 + b3 + c3);
        let depth = (cam.rotation * s3 + cam.translation).z;
        let dir = (s3 - center).normalize();
        let basis = sh::eval_sh_basis_unchecked(&dir);
        let mut color = [[0.0; 3]; 3];
        for (v, &vi) in [i, j, k].iter().enumerate() {
            color[v] = sh::clamp_color(sh::color_from_basis(&scene.vertices.sh_coeffs[vi], &basis));
        }
        let q = [q0, q1, q2];
        let (a2, b2, c2) = (
            (q[1] - q[2]).norm(),
            (q[2] - q[0]).norm(),
            (q[0] - q[1]).norm(),
        );
        let per = a2 + b2 + c2;
        let phi_s = -area2.abs() / per;
        if !(phi_s < 0.0) {
            continue;
        }
        let ops: Vec<f64> = [i, j, k]
            .iter()
            .map(|&v| crate::scene::map_opacity(scene.vertices.opacity_logit[v], floor))
            .collect();
        let opacity = ops[0].min(ops[1]).min(ops[2]);
        tris.push(RefTriangle {
            id: t as u32,
            q,
            depth,
            phi_s,
            orient: area2.signum(),
            color,
            opacity,
        });
    }
    tris.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap()
            .then(a.id.cmp(&b.id))
    });

    let mut out = ImageBuf::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut acc = [0.0f64; 3];
            let mut transmittance = 1.0f64;
            for tri in &tris {
                let mut phi = f64::NEG_INFINITY;
                for e in 0..3 {
                    phi = phi.max(edge_dist(&tri.q[e], &tri.q[(e + 1) % 3], &p, tri.orient));
                }
                let r = phi / tri.phi_s;
                if r <= WINDOW_RATIO_EPS {
                    continue;
                }
                let window = r.min(1.0).powf(sigma);
                // affine barycentric interpolation of the vertex colors
                let d = 2.0
                    * 0.5
                    * ((tri.q[1].x - tri.q[0].x) * (tri.q[2].y - tri.q[0].y)
                        - (tri.q[1].y - tri.q[0].y) * (tri.q[2].x - tri.q[0].x));
                let n0 = (tri.q[1].x - p.x) * (tri.q[2].y - p.y)
                    - (tri.q[1].y - p.y) * (tri.q[2].x - p.x);
                let n1 = (tri.q[2].x - p.x) * (tri.q[0].y - p.y)
                    - (tri.q[2].y - p.y) * (tri.q[0].x - p.x);
                let n2 = (tri.q[0].x - p.x) * (tri.q[1].y - p.y)
                    - (tri.q[0].y - p.y) * (tri.q[1].x - p.x);
                let lambda = [n0 / d, n1 / d, n2 / d];
                let alpha = tri.opacity * window;
                for ch in 0..3 {
                    let c = lambda[0] * tri.color[0][ch]
                        + lambda[1] * tri.color[1][ch]
                        + lambda[2] * tri.color[2][ch];
                    acc[ch] += transmittance * alpha * c;
                }
                transmittance *= 1.0 - alpha;
            }
            for ch in 0..3 {
                acc[ch] += transmittance * background[ch];
            }
            out.set(x, y, acc);
        }
    }
    out
}
