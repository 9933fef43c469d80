//! Photometric, regularization, and evaluation losses: L1, D-SSIM,
//! opacity mean, normal alignment, PSNR, SSIM.
//!
//! SSIM follows the splatting convention: 11x11 Gaussian window with
//! sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, zero-padded same-size filtering,
//! channel-averaged. D-SSIM is `(1 - SSIM)/2`.

use crate::img::{ImageBuf, MaskBuf};
use crate::scene::{map_opacity, map_opacity_grad, Scene};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Eq-style loss mix: `(1-lambda) L1 + lambda D-SSIM + beta1 Lo + beta2 Ln`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.2,
            beta1: 0.01,
            beta2: 0.05,
        }
    }
}

/// Mean absolute difference over all pixels and channels.
pub fn l1(pred: &ImageBuf, target: &ImageBuf) -> f64 {
    assert!(pred.same_shape(target), "image shape mismatch");
    let n = (pred.len() * 3) as f64;
    pred.pixels
        .iter()
        .zip(&target.pixels)
        .map(|(a, b)| (0..3).map(|ch| (a[ch] - b[ch]).abs()).sum::<f64>())
        .sum::<f64>()
        / n
}

/// d L1 / d pred: `sign(pred - target) / (H W 3)`.
pub fn l1_backward(pred: &ImageBuf, target: &ImageBuf) -> ImageBuf {
    assert!(pred.same_shape(target), "image shape mismatch");
    let n = (pred.len() * 3) as f64;
    let mut out = ImageBuf::new(pred.width, pred.height);
    for (o, (a, b)) in out
        .pixels
        .iter_mut()
        .zip(pred.pixels.iter().zip(&target.pixels))
    {
        for ch in 0..3 {
            let d = a[ch] - b[ch];
            o[ch] = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    out
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = (i as isize - half) as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable same-size Gaussian filter with zero padding, per channel.
fn gauss_filter(img: &ImageBuf) -> ImageBuf {
    let k = gaussian_kernel();
    let half = SSIM_WINDOW as isize / 2;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut tmp = ImageBuf::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, &kv) in k.iter().enumerate() {
                let sx = x + i as isize - half;
                if sx < 0 || sx >= w {
                    continue;
                }
                let p = img.get(sx as usize, y as usize);
                for ch in 0..3 {
                    acc[ch] += kv * p[ch];
                }
            }
            tmp.set(x as usize, y as usize, acc);
        }
    }
    let mut out = ImageBuf::new(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, &kv) in k.iter().enumerate() {
                let sy = y + i as isize - half;
                if sy < 0 || sy >= h {
                    continue;
                }
                let p = tmp.get(x as usize, sy as usize);
                for ch in 0..3 {
                    acc[ch] += kv * p[ch];
                }
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

fn hadamard(a: &ImageBuf, b: &ImageBuf) -> ImageBuf {
    let mut out = ImageBuf::new(a.width, a.height);
    for i in 0..out.pixels.len() {
        for ch in 0..3 {
            out.pixels[i][ch] = a.pixels[i][ch] * b.pixels[i][ch];
        }
    }
    out
}

struct SsimState {
    mu_x: ImageBuf,
    mu_y: ImageBuf,
    sigma_x: ImageBuf,
    sigma_y: ImageBuf,
    sigma_xy: ImageBuf,
}

fn ssim_state(pred: &ImageBuf, target: &ImageBuf) -> SsimState {
    let mu_x = gauss_filter(pred);
    let mu_y = gauss_filter(target);
    let xx = gauss_filter(&hadamard(pred, pred));
    let yy = gauss_filter(&hadamard(target, target));
    let xy = gauss_filter(&hadamard(pred, target));
    let mut sigma_x = ImageBuf::new(pred.width, pred.height);
    let mut sigma_y = ImageBuf::new(pred.width, pred.height);
    let mut sigma_xy = ImageBuf::new(pred.width, pred.height);
    for i in 0..xx.pixels.len() {
        for ch in 0..3 {
            sigma_x.pixels[i][ch] = xx.pixels[i][ch] - mu_x.pixels[i][ch] * mu_x.pixels[i][ch];
            sigma_y.pixels[i][ch] = yy.pixels[i][ch] - mu_y.pixels[i][ch] * mu_y.pixels[i][ch];
            sigma_xy.pixels[i][ch] = xy.pixels[i][ch] - mu_x.pixels[i][ch] * mu_y.pixels[i][ch];
        }
    }
    SsimState {
        mu_x,
        mu_y,
        sigma_x,
        sigma_y,
        sigma_xy,
    }
}

/// Mean SSIM over pixels and channels.
pub fn ssim(pred: &ImageBuf, target: &ImageBuf) -> f64 {
    assert!(pred.same_shape(target), "image shape mismatch");
    let st = ssim_state(pred, target);
    let mut sum = 0.0;
    for i in 0..pred.pixels.len() {
        for ch in 0..3 {
            let (mx, my) = (st.mu_x.pixels[i][ch], st.mu_y.pixels[i][ch]);
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * st.sigma_xy.pixels[i][ch] + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = st.sigma_x.pixels[i][ch] + st.sigma_y.pixels[i][ch] + SSIM_C2;
            sum += (a1 * a2) / (b1 * b2);
        }
    }
    sum / (pred.pixels.len() * 3) as f64
}

/// Structural dissimilarity `(1 - SSIM)/2`.
pub fn dssim(pred: &ImageBuf, target: &ImageBuf) -> f64 {
    (1.0 - ssim(pred, target)) / 2.0
}

/// Analytic `d D-SSIM / d pred`.
///
/// Each filtered statistic is re-filtered on the way back (the Gaussian is
/// symmetric, so the transpose of the filter is the filter).
pub fn dssim_backward(pred: &ImageBuf, target: &ImageBuf) -> ImageBuf {
    assert!(pred.same_shape(target), "image shape mismatch");
    let st = ssim_state(pred, target);
    let n = (pred.pixels.len() * 3) as f64;
    // dL/dS = -1/(2n) per pixel-channel for L = (1 - mean(S))/2
    let scale = -1.0 / (2.0 * n);
    let mut g_mu = ImageBuf::new(pred.width, pred.height);
    let mut g_sx = ImageBuf::new(pred.width, pred.height);
    let mut g_sxy = ImageBuf::new(pred.width, pred.height);
    for i in 0..pred.pixels.len() {
        for ch in 0..3 {
            let (mx, my) = (st.mu_x.pixels[i][ch], st.mu_y.pixels[i][ch]);
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * st.sigma_xy.pixels[i][ch] + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = st.sigma_x.pixels[i][ch] + st.sigma_y.pixels[i][ch] + SSIM_C2;
            let s = (a1 * a2) / (b1 * b2);
            // partials of S at this pixel
            let ds_dmx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
            let ds_dsx = -s / b2;
            let ds_dsxy = 2.0 * a1 / (b1 * b2);
            g_mu.pixels[i][ch] = scale * ds_dmx;
            g_sx.pixels[i][ch] = scale * ds_dsx;
            g_sxy.pixels[i][ch] = scale * ds_dsxy;
        }
    }
    // back through sigma_x = G*(x^2) - mu_x^2 and sigma_xy = G*(xy) - mu_x mu_y:
    // fold the -2 mu_x and -mu_y terms into the mu-channel before filtering
    let mut g_mu_total = ImageBuf::new(pred.width, pred.height);
    for i in 0..pred.pixels.len() {
        for ch in 0..3 {
            g_mu_total.pixels[i][ch] = g_mu.pixels[i][ch]
                - 2.0 * st.mu_x.pixels[i][ch] * g_sx.pixels[i][ch]
                - st.mu_y.pixels[i][ch] * g_sxy.pixels[i][ch];
        }
    }
    let f_mu = gauss_filter(&g_mu_total);
    let f_sx = gauss_filter(&g_sx);
    let f_sxy = gauss_filter(&g_sxy);
    let mut out = ImageBuf::new(pred.width, pred.height);
    for i in 0..pred.pixels.len() {
        for ch in 0..3 {
            out.pixels[i][ch] = f_mu.pixels[i][ch]
                + 2.0 * pred.pixels[i][ch] * f_sx.pixels[i][ch]
                + target.pixels[i][ch] * f_sxy.pixels[i][ch];
        }
    }
    out
}

/// Mean mapped opacity over active vertices.
pub fn opacity_loss(scene: &Scene, floor: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in 0..scene.vertices.len() {
        if scene.vertices.active[v] {
            sum += map_opacity(scene.vertices.opacity_logit[v], floor);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// d opacity_loss / d logit, per vertex slot (zero for inactive).
pub fn opacity_loss_backward(scene: &Scene, floor: f64) -> Vec<f64> {
    let count = scene.vertices.num_active();
    let mut out = vec![0.0; scene.vertices.len()];
    if count == 0 {
        return out;
    }
    let inv = 1.0 / count as f64;
    for v in 0..scene.vertices.len() {
        if scene.vertices.active[v] {
            out[v] = inv * map_opacity_grad(scene.vertices.opacity_logit[v], floor);
        }
    }
    out
}

/// Mean over valid pixels of `1 - n_render . n_prior`.
///
/// Valid means: mask true (when given), the prior is present, and the
/// rendered normal is nonzero. Returns 0 when no pixel qualifies.
pub fn normal_loss(rendered: &ImageBuf, prior: &ImageBuf, mask: Option<&MaskBuf>) -> f64 {
    assert!(rendered.same_shape(prior), "normal map shape mismatch");
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..rendered.height {
        for x in 0..rendered.width {
            if let Some(m) = mask {
                if !m.get(x, y) {
                    continue;
                }
            }
            let r = rendered.get(x, y);
            let norm2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            if norm2 < 1e-12 {
                continue;
            }
            let p = prior.get(x, y);
            sum += 1.0 - (r[0] * p[0] + r[1] * p[1] + r[2] * p[2]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// d normal_loss / d rendered map. The valid-pixel set is treated as
/// fixed (the mask is not differentiated).
pub fn normal_loss_backward(
    rendered: &ImageBuf,
    prior: &ImageBuf,
    mask: Option<&MaskBuf>,
) -> ImageBuf {
    assert!(rendered.same_shape(prior), "normal map shape mismatch");
    let mut valid = Vec::new();
    for y in 0..rendered.height {
        for x in 0..rendered.width {
            if let Some(m) = mask {
                if !m.get(x, y) {
                    continue;
                }
            }
            let r = rendered.get(x, y);
            if r[0] * r[0] + r[1] * r[1] + r[2] * r[2] < 1e-12 {
                continue;
            }
            valid.push((x, y));
        }
    }
    let mut out = ImageBuf::new(rendered.width, rendered.height);
    if valid.is_empty() {
        return out;
    }
    let inv = 1.0 / valid.len() as f64;
    for (x, y) in valid {
        let p = prior.get(x, y);
        out.set(x, y, [-p[0] * inv, -p[1] * inv, -p[2] * inv]);
    }
    out
}

/// Peak signal-to-noise ratio in dB for [0, 1] images, capped at 100.
pub fn psnr(pred: &ImageBuf, target: &ImageBuf) -> f64 {
    assert!(pred.same_shape(target), "image shape mismatch");
    let n = (pred.len() * 3) as f64;
    let mse: f64 = pred
        .pixels
        .iter()
        .zip(&target.pixels)
        .map(|(a, b)| {
            (0..3)
                .map(|ch| (a[ch] - b[ch]) * (a[ch] - b[ch]))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    if mse <= 1e-10 {
        100.0
    } else {
        (-10.0 * mse.log10()).min(100.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuf {
        let mut img = ImageBuf::new(w, h);
        for px in &mut img.pixels {
            *px = [rng.gen(), rng.gen(), rng.gen()];
        }
        img
    }

    #[test]
    fn l1_examples() {
        let zeros = ImageBuf::new(8, 8);
        let ones = ImageBuf::filled(8, 8, [1.0; 3]);
        assert_eq!(l1(&zeros, &zeros), 0.0);
        assert_eq!(l1(&zeros, &ones), 1.0);
        // +0.5 on half the pixels -> mean 0.25
        let mut half = ImageBuf::new(8, 8);
        for i in 0..32 {
            half.pixels[i] = [0.5; 3];
        }
        assert_relative_eq!(l1(&half, &zeros), 0.25);
    }

    #[test]
    fn l1_backward_is_scaled_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_image(&mut rng, 4, 4);
        let b = random_image(&mut rng, 4, 4);
        let g = l1_backward(&a, &b);
        let n = (4 * 4 * 3) as f64;
        for i in 0..a.pixels.len() {
            for ch in 0..3 {
                let expected = (a.pixels[i][ch] - b.pixels[i][ch]).signum() / n;
                assert_eq!(g.pixels[i][ch], expected);
            }
        }
    }

    #[test]
    fn ssim_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let img = random_image(&mut rng, 16, 12);
            assert_relative_eq!(ssim(&img, &img), 1.0, epsilon = 1e-12);
        }
        let img = random_image(&mut rng, 16, 16);
        assert_eq!(dssim(&img, &img), 0.0);
    }

    /// Second-implementation oracle: direct double-loop windowed sums with
    /// the same zero-padding convention.
    fn ssim_direct(pred: &ImageBuf, target: &ImageBuf) -> f64 {
        let k1 = gaussian_kernel();
        let (w, h) = (pred.width as isize, pred.height as isize);
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    let mut xx = 0.0;
                    let mut yy = 0.0;
                    let mut xy = 0.0;
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let sx = x + dx as isize - 5;
                            let sy = y + dy as isize - 5;
                            if sx < 0 || sx >= w || sy < 0 || sy >= h {
                                continue;
                            }
                            let kv = k1[dx] * k1[dy];
                            let a = pred.get(sx as usize, sy as usize)[ch];
                            let b = target.get(sx as usize, sy as usize)[ch];
                            mx += kv * a;
                            my += kv * b;
                            xx += kv * a * a;
                            yy += kv * b * b;
                            xy += kv * a * b;
                        }
                    }
                    let sx2 = xx - mx * mx;
                    let sy2 = yy - my * my;
                    let sxy = xy - mx * my;
                    sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (sx2 + sy2 + SSIM_C2));
                }
            }
        }
        sum / (pred.pixels.len() * 3) as f64
    }

    #[test]
    fn ssim_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 20, 14);
        let b = random_image(&mut rng, 20, 14);
        assert_relative_eq!(ssim(&a, &b), ssim_direct(&a, &b), epsilon = 1e-6);
    }

    #[test]
    fn dssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = random_image(&mut rng, 8, 8);
        let b = random_image(&mut rng, 8, 8);
        let g = dssim_backward(&a, &b);
        let eps = 1e-5;
        for i in (0..a.pixels.len()).step_by(7) {
            for ch in 0..3 {
                let orig = a.pixels[i][ch];
                a.pixels[i][ch] = orig + eps;
                let lp = dssim(&a, &b);
                a.pixels[i][ch] = orig - eps;
                let lm = dssim(&a, &b);
                a.pixels[i][ch] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!(
                    (fd - g.pixels[i][ch]).abs() < 1e-4,
                    "pixel {i} ch {ch}: fd {fd} vs {}",
                    g.pixels[i][ch]
                );
            }
        }
    }

    #[test]
    fn opacity_loss_examples() {
        use nalgebra::Vector3;
        let mut scene = Scene::default();
        for logit in [-1000.0, -1000.0, 1000.0, 1000.0] {
            scene
                .vertices
                .push(Vector3::zeros(), [[0.0; 3]; 16], logit);
        }
        // half fully transparent, half opaque
        assert_relative_eq!(opacity_loss(&scene, 0.0), 0.5);
        for l in &mut scene.vertices.opacity_logit {
            *l = -1000.0;
        }
        assert_relative_eq!(opacity_loss(&scene, 0.0), 0.0);
        for l in &mut scene.vertices.opacity_logit {
            *l = 1000.0;
        }
        assert_relative_eq!(opacity_loss(&scene, 0.0), 1.0);
    }

    #[test]
    fn normal_loss_examples() {
        let up = ImageBuf::filled(4, 4, [0.0, 0.0, 1.0]);
        let down = ImageBuf::filled(4, 4, [0.0, 0.0, -1.0]);
        let side = ImageBuf::filled(4, 4, [1.0, 0.0, 0.0]);
        assert_relative_eq!(normal_loss(&up, &up, None), 0.0);
        assert_relative_eq!(normal_loss(&up, &down, None), 2.0);
        assert_relative_eq!(normal_loss(&up, &side, None), 1.0);
        // zero rendered normals are excluded entirely
        let zeros = ImageBuf::new(4, 4);
        assert_eq!(normal_loss(&zeros, &up, None), 0.0);
    }

    #[test]
    fn psnr_examples() {
        let a = ImageBuf::filled(8, 8, [0.5; 3]);
        assert_eq!(psnr(&a, &a), 100.0);
        // mse 0.01 -> 20 dB
        let mut b = a.clone();
        for px in &mut b.pixels {
            *px = [0.6, 0.6, 0.6];
        }
        assert_relative_eq!(psnr(&a, &b), 20.0, epsilon = 1e-9);
        // direct-formula oracle on random pairs
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut x = ImageBuf::new(6, 6);
            let mut y = ImageBuf::new(6, 6);
            for i in 0..x.pixels.len() {
                for ch in 0..3 {
                    x.pixels[i][ch] = rng.gen();
                    y.pixels[i][ch] = rng.gen();
                }
            }
            let mse: f64 = x
                .pixels
                .iter()
                .zip(&y.pixels)
                .flat_map(|(a, b)| (0..3).map(move |ch| (a[ch] - b[ch]).powi(2)))
                .sum::<f64>()
                / 108.0;
            assert_relative_eq!(psnr(&x, &y), -10.0 * mse.log10(), epsilon = 1e-9);
        }
    }
}
