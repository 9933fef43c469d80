//! CPU-based differentiable triangle splatting.
//!
//! A scene is a shared vertex set (positions, spherical-harmonic colors,
//! opacity logits) plus a set of index-triplet triangles. The renderer
//! composites soft triangle windows front-to-back; the backward pass
//! propagates image gradients to every parameter analytically. Training
//! anneals the window smoothness and the opacity floor until the scene is
//! a plain opaque mesh, exportable to PLY.

pub mod delaunay;
pub mod extract;
pub mod geom;
pub mod grad;
pub mod img;
pub mod io;
pub mod lifecycle;
pub mod losses;
pub mod raster;
pub mod reference;
pub mod scene;
pub mod sh;
pub mod synthetic;
pub mod trainer;

pub use geom::Camera;
pub use img::ImageBuf;
pub use scene::{Scene, TriangleSet, VertexSet};
