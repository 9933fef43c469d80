//! Analytic backward pass: image-space loss gradients propagated to vertex
//! positions (through projection, the edge SDF, the incenter, barycentric
//! weights, and the SH view direction), SH coefficients, opacity logits,
//! and the shared smoothness exponent.
//!
//! Per-pixel contribution lists are recomputed from the tile structure
//! rather than stored by the forward pass, so memory scales with pixels.
//! Within a pixel the sweep keeps the exact behind-color `V_n` so the
//! alpha gradient `T_n (c_n - V_n)` needs no division by `1 - alpha`.
//!
//! Per-tile partials are merged in tile order and per-triangle results
//! scattered in triangle order, so gradients are bit-identical for any
//! worker count.

use crate::geom::Camera;
use crate::img::ImageBuf;
use crate::losses::{self, LossWeights};
use crate::raster::{composite_pixel, prepare, Prepared, PreparedTriangle, RenderOptions, TILE_SIZE};
use crate::scene::{map_opacity_grad, Scene};
use crate::sh;
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use smallvec::SmallVec;

/// Gradients for every scene parameter, in vertex-slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub d_positions: Vec<Vector3<f64>>,
    pub d_sh: Vec<[[f64; 3]; 16]>,
    pub d_opacity_logit: Vec<f64>,
    pub d_sigma: f64,
}

impl GradientBuffer {
    pub fn zeros(n_vertices: usize) -> Self {
        GradientBuffer {
            d_positions: vec![Vector3::zeros(); n_vertices],
            d_sh: vec![[[0.0; 3]; 16]; n_vertices],
            d_opacity_logit: vec![0.0; n_vertices],
            d_sigma: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &GradientBuffer) {
        assert_eq!(self.d_positions.len(), other.d_positions.len());
        for (a, b) in self.d_positions.iter_mut().zip(&other.d_positions) {
            *a += b;
        }
        for (a, b) in self.d_sh.iter_mut().zip(&other.d_sh) {
            for i in 0..16 {
                for ch in 0..3 {
                    a[i][ch] += b[i][ch];
                }
            }
        }
        for (a, b) in self.d_opacity_logit.iter_mut().zip(&other.d_opacity_logit) {
            *a += b;
        }
        self.d_sigma += other.d_sigma;
    }

    pub fn all_finite(&self) -> bool {
        self.d_positions
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
            && self
                .d_sh
                .iter()
                .all(|s| s.iter().all(|b| b.iter().all(|c| c.is_finite())))
            && self.d_opacity_logit.iter().all(|g| g.is_finite())
            && self.d_sigma.is_finite()
    }
}

/// Loss gradients accumulated at one triangle slot before the chain to
/// scene parameters.
#[derive(Clone)]
struct TriAccum {
    /// d/d(clamped per-vertex color).
    d_color: [[f64; 3]; 3],
    /// d/d(triangle min opacity).
    d_opacity: f64,
    /// d/d(projected vertex position), pixels.
    d_q: [Vector2<f64>; 3],
    /// d/d(camera-facing unit normal), normals pass only.
    d_normal: Vector3<f64>,
}

impl Default for TriAccum {
    fn default() -> Self {
        TriAccum {
            d_color: [[0.0; 3]; 3],
            d_opacity: 0.0,
            d_q: [Vector2::zeros(); 3],
            d_normal: Vector3::zeros(),
        }
    }
}

#[inline]
fn rot(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(v.y, -v.x)
}

#[inline]
fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Gradient of the signed edge distance `L(p)` for edge `a -> b` with
/// respect to the two endpoints, given the query point and orientation.
fn edge_distance_grads(
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    p: &Vector2<f64>,
    orient: f64,
) -> (Vector2<f64>, Vector2<f64>) {
    let u = b - a;
    let d = p - a;
    let len = u.norm();
    let c = u.x * d.y - u.y * d.x;
    let uhat = u / len;
    let grad_c_a = Vector2::new(u.y - d.y, d.x - u.x);
    let grad_c_b = Vector2::new(d.y, -d.x);
    let ga = -orient * (grad_c_a / len + uhat * (c / (len * len)));
    let gb = -orient * (grad_c_b / len - uhat * (c / (len * len)));
    (ga, gb)
}

/// Gradient of `phi(s) = -(2 area)/perimeter` with respect to the three
/// projected vertices.
fn phi_s_grads(q: &[Vector2<f64>; 3], orient: f64) -> [Vector2<f64>; 3] {
    let two_area_signed =
        (q[1].x - q[0].x) * (q[2].y - q[0].y) - (q[1].y - q[0].y) * (q[2].x - q[0].x);
    let area = orient * two_area_signed * 0.5;
    let d2s = [rot(&(q[1] - q[2])), rot(&(q[2] - q[0])), rot(&(q[0] - q[1]))];
    let perimeter =
        (q[1] - q[0]).norm() + (q[2] - q[1]).norm() + (q[0] - q[2]).norm();
    let unit = |a: &Vector2<f64>, b: &Vector2<f64>| (a - b) / (a - b).norm();
    let dp = [
        unit(&q[0], &q[1]) + unit(&q[0], &q[2]),
        unit(&q[1], &q[0]) + unit(&q[1], &q[2]),
        unit(&q[2], &q[0]) + unit(&q[2], &q[1]),
    ];
    let mut out = [Vector2::zeros(); 3];
    for v in 0..3 {
        let d_area = d2s[v] * (orient * 0.5);
        out[v] = d_area * (-2.0 / perimeter) + dp[v] * (2.0 * area / (perimeter * perimeter));
    }
    out
}

/// Scatters `d/d lambda` into `d/d q` for the signed-area barycentrics.
fn barycentric_grads_to_q(
    q: &[Vector2<f64>; 3],
    p: &Vector2<f64>,
    lambda: &[f64; 3],
    d_lambda: &[f64; 3],
    d_q: &mut [Vector2<f64>; 3],
) {
    let d = (q[1].x - q[0].x) * (q[2].y - q[0].y) - (q[1].y - q[0].y) * (q[2].x - q[0].x);
    let dd = [rot(&(q[1] - q[2])), rot(&(q[2] - q[0])), rot(&(q[0] - q[1]))];
    // dN_i/dq_j: N_0 depends on q1, q2; N_1 on q2, q0; N_2 on q0, q1
    let dn = [
        [Vector2::zeros(), rot(&(q[2] - p)), perp(&(q[1] - p))],
        [perp(&(q[2] - p)), Vector2::zeros(), rot(&(q[0] - p))],
        [rot(&(q[1] - p)), perp(&(q[0] - p)), Vector2::zeros()],
    ];
    for i in 0..3 {
        if d_lambda[i] == 0.0 {
            continue;
        }
        for j in 0..3 {
            d_q[j] += (dn[i][j] - dd[j] * lambda[i]) * (d_lambda[i] / d);
        }
    }
}

/// Per-triangle chain from accumulated partials to parameter gradients.
struct TriChainResult {
    vidx: [usize; 3],
    d_pos: [Vector3<f64>; 3],
    d_sh: [[[f64; 3]; 16]; 3],
    d_logit: [f64; 3],
}

fn chain_triangle(
    scene: &Scene,
    cam: &Camera,
    floor: f64,
    pt: &PreparedTriangle,
    acc: &TriAccum,
) -> TriChainResult {
    let mut res = TriChainResult {
        vidx: pt.vidx,
        d_pos: [Vector3::zeros(); 3],
        d_sh: [[[0.0; 3]; 16]; 3],
        d_logit: [0.0; 3],
    };

    // color -> SH coefficients, and the shared basis partial
    let mut d_basis = [0.0f64; 16];
    for v in 0..3 {
        let coeffs = &scene.vertices.sh_coeffs[pt.vidx[v]];
        for ch in 0..3 {
            let g = acc.d_color[v][ch];
            if g == 0.0 || !pt.color_in_range[v][ch] {
                continue;
            }
            for b in 0..16 {
                res.d_sh[v][b][ch] += g * pt.basis[b];
                d_basis[b] += g * coeffs[b][ch];
            }
        }
    }

    // basis -> view direction -> 3D incenter -> positions
    let needs_dir_chain = d_basis.iter().any(|&g| g != 0.0);
    if needs_dir_chain {
        let basis_grad = sh::eval_sh_basis_grad(&pt.dir);
        let mut d_dir = Vector3::zeros();
        for b in 0..16 {
            if d_basis[b] != 0.0 {
                d_dir += Vector3::new(basis_grad[b][0], basis_grad[b][1], basis_grad[b][2])
                    * d_basis[b];
            }
        }
        // dir = u / |u|: project out the radial component
        let d_u = (d_dir - pt.dir * pt.dir.dot(&d_dir)) / pt.dir_len;
        // u = s3 - camera_center, so d s3 = d u
        let h = d_u;
        let pos = [
            scene.vertices.positions[pt.vidx[0]],
            scene.vertices.positions[pt.vidx[1]],
            scene.vertices.positions[pt.vidx[2]],
        ];
        // incenter weights: a_w = |pos_u - pos_v| for {u, v} != w
        let side = |w: usize| -> f64 {
            let (u, v) = ((w + 1) % 3, (w + 2) % 3);
            (pos[u] - pos[v]).norm()
        };
        let a = [side(0), side(1), side(2)];
        let g_sum = a[0] + a[1] + a[2];
        let h_dot_s3 = h.dot(&pt.s3);
        for v in 0..3 {
            let mut d = h * (a[v] / g_sum);
            for w in 0..3 {
                if w == v {
                    continue;
                }
                // the side opposite w touches v and the third vertex
                let other = 3 - w - v;
                let da_w_dv = (pos[v] - pos[other]) / a[w];
                d += da_w_dv * ((h.dot(&pos[w]) - h_dot_s3) / g_sum);
            }
            res.d_pos[v] += d;
        }
    }

    // normal (normals pass): n = flip * m / |m|, m = (P2-P1) x (P3-P1)
    if acc.d_normal != Vector3::zeros() {
        let pos = [
            scene.vertices.positions[pt.vidx[0]],
            scene.vertices.positions[pt.vidx[1]],
            scene.vertices.positions[pt.vidx[2]],
        ];
        let u1 = pos[1] - pos[0];
        let u2 = pos[2] - pos[0];
        let m = u1.cross(&u2);
        let mlen = m.norm();
        if mlen > 1e-18 {
            let mhat = m / mlen;
            let flip = if mhat.dot(&pt.normal) >= 0.0 { 1.0 } else { -1.0 };
            let g_m = (acc.d_normal - mhat * mhat.dot(&acc.d_normal)) * (flip / mlen);
            let d_u1 = -g_m.cross(&u2);
            let d_u2 = g_m.cross(&u1);
            res.d_pos[0] += -(d_u1 + d_u2);
            res.d_pos[1] += d_u1;
            res.d_pos[2] += d_u2;
        }
    }

    // projected-vertex partials through the pinhole Jacobian
    for v in 0..3 {
        let dq = acc.d_q[v];
        if dq == Vector2::zeros() {
            continue;
        }
        let pc = cam.to_camera(&scene.vertices.positions[pt.vidx[v]]);
        let r0 = cam.rotation.row(0).transpose();
        let r1 = cam.rotation.row(1).transpose();
        let r2 = cam.rotation.row(2).transpose();
        let inv_z = 1.0 / pc.z;
        let dqx_dv = r0 * (cam.fx * inv_z) - r2 * (cam.fx * pc.x * inv_z * inv_z);
        let dqy_dv = r1 * (cam.fy * inv_z) - r2 * (cam.fy * pc.y * inv_z * inv_z);
        res.d_pos[v] += dqx_dv * dq.x + dqy_dv * dq.y;
    }

    // min-opacity routing: one-hot to the first argmin vertex
    if acc.d_opacity != 0.0 {
        let v = pt.opacity_argmin;
        let logit = scene.vertices.opacity_logit[pt.vidx[v]];
        res.d_logit[v] = acc.d_opacity * map_opacity_grad(logit, floor);
    }

    res
}

struct TileBackward {
    tile_idx: usize,
    /// (prepared index, accum) pairs for triangles touched in this tile.
    accums: Vec<(u32, TriAccum)>,
    d_sigma: f64,
}

/// Behind-color sweep shared by the color and normal passes: given the
/// per-contribution 3-vector values, computes `V_n` (everything behind
/// contribution n, including the background).
fn behind_values(
    contribs: &[(u32, f64, f64, [f64; 3], [f64; 3])],
    background: [f64; 3],
) -> Vec<[f64; 3]> {
    let n = contribs.len();
    let mut v = vec![[0.0; 3]; n];
    let mut acc = background;
    for i in (0..n).rev() {
        v[i] = acc;
        let alpha = contribs[i].1;
        let value = contribs[i].3;
        for ch in 0..3 {
            acc[ch] = alpha * value[ch] + (1.0 - alpha) * acc[ch];
        }
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn backward_tile(
    prep: &Prepared,
    opts: &RenderOptions,
    d_image: &ImageBuf,
    aa_scale: usize,
    tile_idx: usize,
    normals_mode: bool,
) -> TileBackward {
    let tx = tile_idx % prep.tiles_x;
    let ty = tile_idx / prep.tiles_x;
    let x0 = tx * TILE_SIZE;
    let y0 = ty * TILE_SIZE;
    let x1 = (x0 + TILE_SIZE).min(prep.width);
    let y1 = (y0 + TILE_SIZE).min(prep.height);
    let list = &prep.tile_lists[tile_idx];

    let mut accums: Vec<Option<TriAccum>> = vec![None; list.len()];
    let mut d_sigma = 0.0;
    let inv_s2 = 1.0 / (aa_scale * aa_scale) as f64;

    for y in y0..y1 {
        for x in x0..x1 {
            let g_px = d_image.get(x / aa_scale, y / aa_scale);
            let g = [g_px[0] * inv_s2, g_px[1] * inv_s2, g_px[2] * inv_s2];
            if g == [0.0; 3] {
                continue;
            }
            let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            // recompute the contribution list exactly as the forward pass
            let mut contribs: SmallVec<[(u32, f64, f64, [f64; 3], [f64; 3]); 16]> =
                SmallVec::new();
            composite_pixel(prep, list, &p, opts.early_stop_transmittance, |c| {
                let pt = &prep.tris[c.prepared_idx as usize];
                let value = if normals_mode {
                    [pt.normal.x, pt.normal.y, pt.normal.z]
                } else {
                    pt.shade(&c.lambda)
                };
                contribs.push((c.list_pos, c.alpha, c.transmittance_before, value, c.lambda));
            });
            if contribs.is_empty() {
                continue;
            }

            // normals pass: renormalization chain on the accumulated vector
            let mut g_out = g;
            if normals_mode {
                let mut acc = Vector3::zeros();
                for &(_, alpha, t_before, value, _) in &contribs {
                    acc += Vector3::new(value[0], value[1], value[2]) * (t_before * alpha);
                }
                let norm = acc.norm();
                if norm <= 1e-6 {
                    continue;
                }
                let yv = acc / norm;
                let gv = Vector3::new(g[0], g[1], g[2]);
                let d_acc = (gv - yv * yv.dot(&gv)) / norm;
                g_out = [d_acc.x, d_acc.y, d_acc.z];
            }

            let background = if normals_mode { [0.0; 3] } else { opts.background };
            let behind = behind_values(&contribs, background);

            for (ci, &(list_pos, alpha, t_before, value, lambda)) in contribs.iter().enumerate() {
                let pi = list[list_pos as usize] as usize;
                let pt = &prep.tris[pi];
                let slot = list_pos as usize;
                let acc = accums[slot].get_or_insert_with(TriAccum::default);
                let weight = t_before * alpha;

                // d/d value, then per-vertex color via barycentric weights
                let mut d_lambda = [0.0f64; 3];
                if normals_mode {
                    for ch in 0..3 {
                        acc.d_normal[ch] += weight * g_out[ch];
                    }
                } else {
                    for v in 0..3 {
                        for ch in 0..3 {
                            acc.d_color[v][ch] += weight * g_out[ch] * lambda[v];
                        }
                        d_lambda[v] = weight
                            * (g_out[0] * pt.color[v][0]
                                + g_out[1] * pt.color[v][1]
                                + g_out[2] * pt.color[v][2]);
                    }
                }

                // d/d alpha = T_n * g . (value_n - V_n)
                let vb = behind[ci];
                let d_alpha = t_before
                    * (g_out[0] * (value[0] - vb[0])
                        + g_out[1] * (value[1] - vb[1])
                        + g_out[2] * (value[2] - vb[2]));

                // alpha = opacity * window; recompute the window from the
                // ratio (identical fp path to the forward pass)
                let (phi, argmax_edge) = pt.proj.sdf_argmax(&p);
                let ratio_raw = phi / pt.proj.phi_s;
                let ratio = ratio_raw.min(1.0);
                let window = ratio.powf(prep.sigma);
                acc.d_opacity += d_alpha * window;
                let d_window = d_alpha * pt.opacity;

                // window = ratio^sigma
                d_sigma += d_window * window * ratio.ln();
                if ratio_raw < 1.0 {
                    let d_ratio = d_window * prep.sigma * window / ratio;
                    let d_phi = d_ratio / pt.proj.phi_s;
                    let d_phi_s = -d_ratio * ratio / pt.proj.phi_s;
                    let ea = argmax_edge;
                    let eb = (argmax_edge + 1) % 3;
                    let (ga, gb) =
                        edge_distance_grads(&pt.proj.q[ea], &pt.proj.q[eb], &p, pt.proj.orient);
                    acc.d_q[ea] += ga * d_phi;
                    acc.d_q[eb] += gb * d_phi;
                    let gs = phi_s_grads(&pt.proj.q, pt.proj.orient);
                    for v in 0..3 {
                        acc.d_q[v] += gs[v] * d_phi_s;
                    }
                }

                if !normals_mode {
                    barycentric_grads_to_q(&pt.proj.q, &p, &lambda, &d_lambda, &mut acc.d_q);
                }
            }
        }
    }

    TileBackward {
        tile_idx,
        accums: accums
            .into_iter()
            .enumerate()
            .filter_map(|(slot, a)| a.map(|a| (list[slot], a)))
            .collect(),
        d_sigma,
    }
}

fn backward_impl(
    scene: &Scene,
    cam: &Camera,
    sigma: f64,
    floor: f64,
    opts: &RenderOptions,
    d_image: &ImageBuf,
    aa_scale: usize,
    normals_mode: bool,
) -> GradientBuffer {
    assert!(aa_scale >= 1);
    let render_cam = if aa_scale == 1 {
        cam.clone()
    } else {
        cam.scaled(aa_scale)
    };
    assert_eq!(d_image.width * aa_scale, render_cam.width);
    assert_eq!(d_image.height * aa_scale, render_cam.height);
    let prep = prepare(scene, &render_cam, sigma, floor);
    let n_tiles = prep.tiles_x * prep.tiles_y;

    let tile_results: Vec<TileBackward> = if opts.sequential {
        (0..n_tiles)
            .map(|t| backward_tile(&prep, opts, d_image, aa_scale, t, normals_mode))
            .collect()
    } else {
        (0..n_tiles)
            .into_par_iter()
            .map(|t| backward_tile(&prep, opts, d_image, aa_scale, t, normals_mode))
            .collect()
    };

    // merge per-tile partials in tile order (deterministic for any pool)
    let mut tri_accums: Vec<TriAccum> = vec![TriAccum::default(); prep.tris.len()];
    let mut grads = GradientBuffer::zeros(scene.vertices.len());
    for tr in tile_results {
        debug_assert!(tr.tile_idx < n_tiles);
        grads.d_sigma += tr.d_sigma;
        for (pi, a) in tr.accums {
            let dst = &mut tri_accums[pi as usize];
            for v in 0..3 {
                for ch in 0..3 {
                    dst.d_color[v][ch] += a.d_color[v][ch];
                }
                dst.d_q[v] += a.d_q[v];
            }
            dst.d_opacity += a.d_opacity;
            dst.d_normal += a.d_normal;
        }
    }

    // chain per triangle in parallel, scatter sequentially in order
    let chained: Vec<TriChainResult> = prep
        .tris
        .par_iter()
        .zip(tri_accums.par_iter())
        .map(|(pt, acc)| chain_triangle(scene, &render_cam, floor, pt, acc))
        .collect();
    for c in chained {
        for v in 0..3 {
            let vi = c.vidx[v];
            grads.d_positions[vi] += c.d_pos[v];
            for b in 0..16 {
                for ch in 0..3 {
                    grads.d_sh[vi][b][ch] += c.d_sh[v][b][ch];
                }
            }
            grads.d_opacity_logit[vi] += c.d_logit[v];
        }
    }
    grads
}

/// Backward through [`crate::raster::render_aa`]: `d_image` is the
/// native-resolution loss gradient; the box downsample spreads it evenly
/// over subsamples.
pub fn backward(
    scene: &Scene,
    cam: &Camera,
    sigma: f64,
    floor: f64,
    opts: &RenderOptions,
    d_image: &ImageBuf,
    aa_scale: usize,
) -> GradientBuffer {
    backward_impl(scene, cam, sigma, floor, opts, d_image, aa_scale, false)
}

/// Backward through [`crate::raster::render_normals`].
pub fn backward_normals(
    scene: &Scene,
    cam: &Camera,
    sigma: f64,
    floor: f64,
    opts: &RenderOptions,
    d_normal_image: &ImageBuf,
) -> GradientBuffer {
    backward_impl(scene, cam, sigma, floor, opts, d_normal_image, 1, true)
}

/// Per-pixel gradient of the photometric loss
/// `(1 - lambda) L1 + lambda D-SSIM`.
pub fn loss_backward(pred: &ImageBuf, target: &ImageBuf, weights: &LossWeights) -> ImageBuf {
    assert!(pred.same_shape(target), "image shape mismatch");
    let l1 = losses::l1_backward(pred, target);
    let dssim = losses::dssim_backward(pred, target);
    let mut out = ImageBuf::new(pred.width, pred.height);
    for i in 0..out.pixels.len() {
        for ch in 0..3 {
            out.pixels[i][ch] =
                (1.0 - weights.lambda) * l1.pixels[i][ch] + weights.lambda * dssim.pixels[i][ch];
        }
    }
    out
}
