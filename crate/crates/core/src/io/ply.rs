//! Binary little-endian PLY export and import.
//!
//! Two vertex layouts:
//! - `VertexColor`: x y z (float32) + red green blue (uint8) from the
//!   clamped DC-band color -- the engine-facing format. Opacity and the
//!   smoothness parameter are training state and are not written.
//! - `ShDc`: x y z + f_dc_0..2 (float32), lossless in the DC band.
//!
//! Faces are `uchar 3` + three int32 vertex indices in both modes.

use super::{file_err, IoError};
use crate::scene::{Scene, TriangleSet, VertexSet};
use crate::sh;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyMode {
    VertexColor,
    ShDc,
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes a compacted scene. Call [`Scene::compact`] first; tombstoned
/// entries are rejected.
pub fn export_ply(scene: &Scene, path: &Path, mode: PlyMode) -> Result<(), IoError> {
    if scene.vertices.active.iter().any(|a| !a) || scene.triangles.active.iter().any(|a| !a) {
        return Err(format_err(path, "scene has tombstones; compact before export"));
    }
    let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    let n_verts = scene.vertices.len();
    let n_faces = scene.triangles.len();
    let vertex_props = match mode {
        PlyMode::VertexColor => {
            "property float x\nproperty float y\nproperty float z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\n"
        }
        PlyMode::ShDc => {
            "property float x\nproperty float y\nproperty float z\n\
             property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n"
        }
    };
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\n\
         element vertex {n_verts}\n{vertex_props}\
         element face {n_faces}\n\
         property list uchar int vertex_indices\n\
         end_header\n"
    )
    .map_err(|e| file_err(path, e))?;
    for v in 0..n_verts {
        let p = scene.vertices.positions[v];
        for c in [p.x, p.y, p.z] {
            w.write_f32::<LittleEndian>(c as f32)
                .map_err(|e| file_err(path, e))?;
        }
        let dc = scene.vertices.sh_coeffs[v][0];
        match mode {
            PlyMode::VertexColor => {
                for ch in 0..3 {
                    let byte = ((0.5 + sh::SH_C0 * dc[ch]).clamp(0.0, 1.0) * 255.0).round() as u8;
                    w.write_u8(byte).map_err(|e| file_err(path, e))?;
                }
            }
            PlyMode::ShDc => {
                for ch in 0..3 {
                    w.write_f32::<LittleEndian>(dc[ch] as f32)
                        .map_err(|e| file_err(path, e))?;
                }
            }
        }
    }
    for t in 0..n_faces {
        w.write_u8(3).map_err(|e| file_err(path, e))?;
        for &idx in &scene.triangles.indices[t] {
            w.write_i32::<LittleEndian>(idx as i32)
                .map_err(|e| file_err(path, e))?;
        }
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Imported mesh: positions, per-vertex RGB in [0, 1], triangles.
pub struct PlyMesh {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub indices: Vec<[usize; 3]>,
}

impl PlyMesh {
    /// Rebuilds a renderable opaque scene (DC band from the colors).
    pub fn into_scene(self) -> Scene {
        let mut vertices = VertexSet::default();
        for (p, rgb) in self.positions.iter().zip(&self.colors) {
            let mut coeffs = [[0.0; 3]; 16];
            coeffs[0] = sh::rgb_to_dc(*rgb);
            vertices.push(*p, coeffs, 1000.0);
        }
        let mut triangles = TriangleSet::default();
        for f in self.indices {
            triangles.push(f);
        }
        Scene::new(vertices, triangles)
    }
}

/// Reads the two layouts written by [`export_ply`].
pub fn import_ply(path: &Path) -> Result<PlyMesh, IoError> {
    let file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| file_err(path, e))? == 0 {
            return Err(format_err(path, "unexpected EOF in header"));
        }
        let line = line.trim().to_string();
        let done = line == "end_header";
        header.push(line);
        if done {
            break;
        }
    }
    if header.first().map(String::as_str) != Some("ply") {
        return Err(format_err(path, "not a PLY file"));
    }
    if !header
        .iter()
        .any(|l| l == "format binary_little_endian 1.0")
    {
        return Err(format_err(path, "expected binary_little_endian 1.0"));
    }
    let mut n_verts = None;
    let mut n_faces = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for line in &header {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["element", "vertex", n] => {
                in_vertex = true;
                n_verts = n.parse::<usize>().ok();
            }
            ["element", "face", n] => {
                in_vertex = false;
                n_faces = n.parse::<usize>().ok();
            }
            ["property", kind, name] if in_vertex => {
                vertex_props.push(format!("{kind} {name}"));
            }
            _ => {}
        }
    }
    let n_verts = n_verts.ok_or_else(|| format_err(path, "missing vertex element"))?;
    let n_faces = n_faces.ok_or_else(|| format_err(path, "missing face element"))?;
    let mode = match vertex_props
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"] => {
            PlyMode::VertexColor
        }
        ["float x", "float y", "float z", "float f_dc_0", "float f_dc_1", "float f_dc_2"] => {
            PlyMode::ShDc
        }
        other => {
            return Err(format_err(
                path,
                format!("unsupported vertex layout {other:?}"),
            ))
        }
    };

    let mut positions = Vec::with_capacity(n_verts);
    let mut colors = Vec::with_capacity(n_verts);
    for _ in 0..n_verts {
        let mut xyz = [0.0f32; 3];
        for c in &mut xyz {
            *c = r.read_f32::<LittleEndian>().map_err(|e| file_err(path, e))?;
        }
        positions.push(Vector3::new(xyz[0] as f64, xyz[1] as f64, xyz[2] as f64));
        match mode {
            PlyMode::VertexColor => {
                let mut rgb = [0.0f64; 3];
                for c in &mut rgb {
                    let mut byte = [0u8; 1];
                    r.read_exact(&mut byte).map_err(|e| file_err(path, e))?;
                    *c = byte[0] as f64 / 255.0;
                }
                colors.push(rgb);
            }
            PlyMode::ShDc => {
                let mut dc = [0.0f64; 3];
                for c in &mut dc {
                    *c = r.read_f32::<LittleEndian>().map_err(|e| file_err(path, e))? as f64;
                }
                colors.push([
                    (0.5 + sh::SH_C0 * dc[0]).clamp(0.0, 1.0),
                    (0.5 + sh::SH_C0 * dc[1]).clamp(0.0, 1.0),
                    (0.5 + sh::SH_C0 * dc[2]).clamp(0.0, 1.0),
                ]);
            }
        }
    }
    let mut indices = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let mut count = [0u8; 1];
        r.read_exact(&mut count).map_err(|e| file_err(path, e))?;
        if count[0] != 3 {
            return Err(format_err(path, format!("non-triangle face ({})", count[0])));
        }
        let mut f = [0usize; 3];
        for idx in &mut f {
            let v = r.read_i32::<LittleEndian>().map_err(|e| file_err(path, e))?;
            if v < 0 || v as usize >= n_verts {
                return Err(format_err(path, format!("face index {v} out of range")));
            }
            *idx = v as usize;
        }
        indices.push(f);
    }
    Ok(PlyMesh {
        positions,
        colors,
        indices,
    })
}
