//! Real spherical harmonics to degree 3 for view-dependent vertex color.
//!
//! Uses the standard real-SH constants and sign convention common to
//! splatting renderers. Colors are `0.5 + basis . coeffs` per channel so
//! that all-zero coefficients render mid-gray; the DC inverse is
//! [`rgb_to_dc`].

use nalgebra::Vector3;
use thiserror::Error;

/// Y_0^0, the constant band.
pub const SH_C0: f64 = 0.28209479177387814;
const C1: f64 = 0.4886025119029199;
const C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
const C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

#[derive(Debug, Error)]
#[error("direction is not unit length (|d| = {norm})")]
pub struct NonUnitDirection {
    pub norm: f64,
}

/// Evaluates the 16 degree-3 basis values at a unit direction.
pub fn eval_sh_basis(dir: &Vector3<f64>) -> Result<[f64; 16], NonUnitDirection> {
    let norm = dir.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(NonUnitDirection { norm });
    }
    Ok(eval_sh_basis_unchecked(dir))
}

/// Basis evaluation without the unit-length check (hot path).
pub fn eval_sh_basis_unchecked(dir: &Vector3<f64>) -> [f64; 16] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        SH_C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * xy,
        C2[1] * yz,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * xz,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * xy * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Gradient of each basis value with respect to the direction components.
///
/// Valid on the unit sphere together with [`eval_sh_basis_unchecked`]; the
/// radial part is projected out by the normalization Jacobian upstream.
pub fn eval_sh_basis_grad(dir: &Vector3<f64>) -> [[f64; 3]; 16] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        [0.0, 0.0, 0.0],
        [0.0, -C1, 0.0],
        [0.0, 0.0, C1],
        [-C1, 0.0, 0.0],
        [C2[0] * y, C2[0] * x, 0.0],
        [0.0, C2[1] * z, C2[1] * y],
        [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z],
        [C2[3] * z, 0.0, C2[3] * x],
        [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0],
        [
            C3[0] * 6.0 * x * y,
            C3[0] * (3.0 * xx - 3.0 * yy),
            0.0,
        ],
        [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y],
        [
            C3[2] * -2.0 * x * y,
            C3[2] * (4.0 * zz - xx - 3.0 * yy),
            C3[2] * 8.0 * y * z,
        ],
        [
            C3[3] * -6.0 * x * z,
            C3[3] * -6.0 * y * z,
            C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        ],
        [
            C3[4] * (4.0 * zz - 3.0 * xx - yy),
            C3[4] * -2.0 * x * y,
            C3[4] * 8.0 * x * z,
        ],
        [C3[5] * 2.0 * x * z, C3[5] * -2.0 * y * z, C3[5] * (xx - yy)],
        [C3[6] * (3.0 * xx - 3.0 * yy), C3[6] * -6.0 * x * y, 0.0],
    ]
}

/// Pre-clamp RGB from per-vertex coefficients and a shared basis vector.
pub fn color_from_basis(coeffs: &[[f64; 3]; 16], basis: &[f64; 16]) -> [f64; 3] {
    let mut rgb = [0.5; 3];
    for (b, c) in basis.iter().zip(coeffs.iter()) {
        for ch in 0..3 {
            rgb[ch] += b * c[ch];
        }
    }
    rgb
}

/// Pre-clamp RGB at a unit view direction.
pub fn vertex_color(
    coeffs: &[[f64; 3]; 16],
    dir: &Vector3<f64>,
) -> Result<[f64; 3], NonUnitDirection> {
    Ok(color_from_basis(coeffs, &eval_sh_basis(dir)?))
}

pub fn clamp_color(rgb: [f64; 3]) -> [f64; 3] {
    [
        rgb[0].clamp(0.0, 1.0),
        rgb[1].clamp(0.0, 1.0),
        rgb[2].clamp(0.0, 1.0),
    ]
}

/// DC coefficient that renders a given RGB under zero higher bands.
pub fn rgb_to_dc(rgb: [f64; 3]) -> [f64; 3] {
    [
        (rgb[0] - 0.5) / SH_C0,
        (rgb[1] - 0.5) / SH_C0,
        (rgb[2] - 0.5) / SH_C0,
    ]
}
