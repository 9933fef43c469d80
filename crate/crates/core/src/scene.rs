//! Scene parameter model: the shared vertex set, index-triplet triangles,
//! and the global training scalars (window smoothness, opacity floor).
//!
//! Vertices and triangles are tombstoned (`active` flag) by lifecycle
//! operations and physically removed only by [`Scene::compact`], which
//! reindexes triangles. Rendering reads the scene immutably; all mutation
//! (pruning, densification, optimizer steps) happens in an exclusive-writer
//! phase.

use nalgebra::Vector3;
use thiserror::Error;

/// Number of spherical-harmonic basis values per vertex (degree 3).
pub const SH_COEFFS: usize = 16;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("triangle {tri} references vertex {vertex} out of bounds (N = {n_vertices})")]
    IndexOutOfBounds {
        tri: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("active triangle {tri} references inactive vertex {vertex}")]
    InactiveVertex { tri: usize, vertex: usize },
    #[error("triangle {tri} has repeated vertex indices {indices:?}")]
    RepeatedIndex { tri: usize, indices: [usize; 3] },
    #[error("non-finite vertex position at index {vertex}")]
    NonFinitePosition { vertex: usize },
    #[error("barycentric coordinates {lambda:?} outside the simplex")]
    BadBarycentric { lambda: [f64; 3] },
}

/// Shared vertex store: positions, SH color coefficients, opacity logits.
///
/// Opacity is kept as an unconstrained logit; [`map_opacity`] applies the
/// floor mapping at read time, so raising the floor never rewrites the
/// parameter array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexSet {
    pub positions: Vec<Vector3<f64>>,
    /// Per vertex: 16 SH basis coefficients, each an RGB triple.
    pub sh_coeffs: Vec<[[f64; 3]; SH_COEFFS]>,
    pub opacity_logit: Vec<f64>,
    pub active: Vec<bool>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn push(&mut self, position: Vector3<f64>, sh: [[f64; 3]; SH_COEFFS], logit: f64) -> usize {
        self.positions.push(position);
        self.sh_coeffs.push(sh);
        self.opacity_logit.push(logit);
        self.active.push(true);
        self.positions.len() - 1
    }
}

/// Triangles as index triplets into a [`VertexSet`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleSet {
    pub indices: Vec<[usize; 3]>,
    pub active: Vec<bool>,
}

impl TriangleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn push(&mut self, indices: [usize; 3]) -> usize {
        self.indices.push(indices);
        self.active.push(true);
        self.indices.len() - 1
    }
}

/// A full scene: vertex parameters plus triangle connectivity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub vertices: VertexSet,
    pub triangles: TriangleSet,
}

/// Global window smoothness exponent, shared by all triangles.
///
/// Clamped to the annealing range; the schedule drives it from 1.0 down to
/// 1e-4 over training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness(f64);

impl Smoothness {
    pub const MIN: f64 = 1e-4;
    pub const MAX: f64 = 1.0;

    pub fn new(value: f64) -> Self {
        Smoothness(value.clamp(Self::MIN, Self::MAX))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Rising lower bound of the opacity mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpacityFloor(f64);

impl OpacityFloor {
    pub fn new(value: f64) -> Self {
        assert!((0.0..1.0).contains(&value), "opacity floor must be in [0,1)");
        OpacityFloor(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for OpacityFloor {
    fn default() -> Self {
        OpacityFloor(0.0)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Floor-mapped opacity: `floor + (1 - floor) * sigmoid(logit)`.
///
/// Total and strictly increasing in the logit; the result never falls
/// below the floor.
pub fn map_opacity(logit: f64, floor: f64) -> f64 {
    floor + (1.0 - floor) * sigmoid(logit)
}

/// Derivative of [`map_opacity`] with respect to the logit.
pub fn map_opacity_grad(logit: f64, floor: f64) -> f64 {
    let s = sigmoid(logit);
    (1.0 - floor) * s * (1.0 - s)
}

/// Minimum of the three vertex opacities and the index (0|1|2) of the
/// first minimizer, which receives the full gradient.
pub fn triangle_opacity(o_i: f64, o_j: f64, o_k: f64) -> (f64, usize) {
    let ops = [o_i, o_j, o_k];
    let mut arg = 0;
    for (idx, &o) in ops.iter().enumerate().skip(1) {
        if o < ops[arg] {
            arg = idx;
        }
    }
    (ops[arg], arg)
}

/// Barycentric blend of three RGB colors. Rejects weights outside the
/// simplex beyond a 1e-6 tolerance.
pub fn interpolate_color(
    c_i: [f64; 3],
    c_j: [f64; 3],
    c_k: [f64; 3],
    lambda: [f64; 3],
) -> Result<[f64; 3], SceneError> {
    let sum: f64 = lambda.iter().sum();
    if lambda.iter().any(|&l| l < -1e-6) || (sum - 1.0).abs() > 1e-6 {
        return Err(SceneError::BadBarycentric { lambda });
    }
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = lambda[0] * c_i[ch] + lambda[1] * c_j[ch] + lambda[2] * c_k[ch];
    }
    Ok(out)
}

impl Scene {
    pub fn new(vertices: VertexSet, triangles: TriangleSet) -> Self {
        Scene {
            vertices,
            triangles,
        }
    }

    /// Mapped opacity of vertex `v` under the given floor.
    pub fn vertex_opacity(&self, v: usize, floor: f64) -> f64 {
        map_opacity(self.vertices.opacity_logit[v], floor)
    }

    /// Triangle opacity (min over its vertices) plus the argmin slot.
    pub fn triangle_opacity(&self, tri: usize, floor: f64) -> (f64, usize) {
        let [i, j, k] = self.triangles.indices[tri];
        triangle_opacity(
            self.vertex_opacity(i, floor),
            self.vertex_opacity(j, floor),
            self.vertex_opacity(k, floor),
        )
    }

    /// Referential-integrity check, run after every lifecycle operation.
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.vertices.len();
        for (v, p) in self.vertices.positions.iter().enumerate() {
            if self.vertices.active[v] && !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
            {
                return Err(SceneError::NonFinitePosition { vertex: v });
            }
        }
        for (t, idx) in self.triangles.indices.iter().enumerate() {
            if !self.triangles.active[t] {
                continue;
            }
            for &v in idx {
                if v >= n {
                    return Err(SceneError::IndexOutOfBounds {
                        tri: t,
                        vertex: v,
                        n_vertices: n,
                    });
                }
                if !self.vertices.active[v] {
                    return Err(SceneError::InactiveVertex { tri: t, vertex: v });
                }
            }
            if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
                return Err(SceneError::RepeatedIndex {
                    tri: t,
                    indices: *idx,
                });
            }
        }
        Ok(())
    }

    /// Drops tombstoned entries and reindexes triangles.
    ///
    /// Returns (vertex_map, triangle_map): `map[old] = Some(new)` for kept
    /// entries. Callers holding per-entry side state (optimizer moments,
    /// weight accumulators) remap through these.
    #[allow(clippy::type_complexity)]
    pub fn compact(&mut self) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut vertex_map = vec![None; self.vertices.len()];
        let mut new_vertices = VertexSet::default();
        for v in 0..self.vertices.len() {
            if self.vertices.active[v] {
                let nv = new_vertices.push(
                    self.vertices.positions[v],
                    self.vertices.sh_coeffs[v],
                    self.vertices.opacity_logit[v],
                );
                vertex_map[v] = Some(nv);
            }
        }
        let mut triangle_map = vec![None; self.triangles.len()];
        let mut new_triangles = TriangleSet::default();
        for t in 0..self.triangles.len() {
            if self.triangles.active[t] {
                let [i, j, k] = self.triangles.indices[t];
                let nt = new_triangles.push([
                    vertex_map[i].expect("active triangle references pruned vertex"),
                    vertex_map[j].expect("active triangle references pruned vertex"),
                    vertex_map[k].expect("active triangle references pruned vertex"),
                ]);
                triangle_map[t] = Some(nt);
            }
        }
        self.vertices = new_vertices;
        self.triangles = new_triangles;
        (vertex_map, triangle_map)
    }

    /// Pins every vertex opacity to exactly 1.0 (the end-of-training snap).
    ///
    /// Uses a saturating logit so the mapping yields 1.0 in f64 for any
    /// floor, while checkpoints stay finite.
    pub fn snap_opaque(&mut self) {
        for logit in &mut self.vertices.opacity_logit {
            *logit = 1000.0;
        }
    }
}
