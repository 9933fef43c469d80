//! Training checkpoints: magic "TSP2", version u32, then sectioned
//! little-endian arrays. Floats are stored as raw bits, so a round trip
//! is bit-exact.

use super::{file_err, IoError};
use crate::scene::{Scene, TriangleSet, VertexSet};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"TSP2";
pub const VERSION: u32 = 1;

/// Adam moments for one parameter group, flattened.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Optimizer state for all four parameter groups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub positions: MomentPair,
    pub sh: MomentPair,
    pub opacity: MomentPair,
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub sigma: f64,
    pub floor: f64,
    pub scene: Scene,
    pub optimizer: OptimizerState,
    /// Per-triangle max blend weights accumulated since the last prune.
    pub weight_accum: Vec<f64>,
}

fn write_f64s<W: Write>(w: &mut W, data: &[f64]) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(data.len() as u64)?;
    for &x in data {
        w.write_u64::<LittleEndian>(x.to_bits())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R) -> std::io::Result<Vec<f64>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f64::from_bits(r.read_u64::<LittleEndian>()?));
    }
    Ok(out)
}

fn write_bools<W: Write>(w: &mut W, data: &[bool]) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(data.len() as u64)?;
    for &b in data {
        w.write_u8(b as u8)?;
    }
    Ok(())
}

fn read_bools<R: Read>(r: &mut R) -> std::io::Result<Vec<bool>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_u8()? != 0);
    }
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(ckpt.iteration as u64)?;
        w.write_u64::<LittleEndian>(ckpt.sigma.to_bits())?;
        w.write_u64::<LittleEndian>(ckpt.floor.to_bits())?;

        let vs = &ckpt.scene.vertices;
        let flat_pos: Vec<f64> = vs.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        write_f64s(&mut w, &flat_pos)?;
        let flat_sh: Vec<f64> = vs
            .sh_coeffs
            .iter()
            .flat_map(|s| s.iter().flatten().copied().collect::<Vec<f64>>())
            .collect();
        write_f64s(&mut w, &flat_sh)?;
        write_f64s(&mut w, &vs.opacity_logit)?;
        write_bools(&mut w, &vs.active)?;

        let ts = &ckpt.scene.triangles;
        w.write_u64::<LittleEndian>(ts.indices.len() as u64)?;
        for idx in &ts.indices {
            for &v in idx {
                w.write_u64::<LittleEndian>(v as u64)?;
            }
        }
        write_bools(&mut w, &ts.active)?;

        for pair in [
            &ckpt.optimizer.positions,
            &ckpt.optimizer.sh,
            &ckpt.optimizer.opacity,
        ] {
            write_f64s(&mut w, &pair.m)?;
            write_f64s(&mut w, &pair.v)?;
        }
        write_f64s(&mut w, &ckpt.weight_accum)?;
        w.flush()
    })()
    .map_err(|e| file_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| file_err(path, e))?;
    if &magic != MAGIC {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!("bad magic {magic:?}"),
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| file_err(path, e))?;
    if version != VERSION {
        return Err(IoError::Version {
            got: version,
            expected: VERSION,
        });
    }
    (|| -> std::io::Result<Checkpoint> {
        let iteration = r.read_u64::<LittleEndian>()? as usize;
        let sigma = f64::from_bits(r.read_u64::<LittleEndian>()?);
        let floor = f64::from_bits(r.read_u64::<LittleEndian>()?);

        let flat_pos = read_f64s(&mut r)?;
        let positions: Vec<Vector3<f64>> = flat_pos
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        let flat_sh = read_f64s(&mut r)?;
        let sh_coeffs: Vec<[[f64; 3]; 16]> = flat_sh
            .chunks_exact(48)
            .map(|c| {
                let mut out = [[0.0; 3]; 16];
                for b in 0..16 {
                    for ch in 0..3 {
                        out[b][ch] = c[b * 3 + ch];
                    }
                }
                out
            })
            .collect();
        let opacity_logit = read_f64s(&mut r)?;
        let v_active = read_bools(&mut r)?;

        let n_tris = r.read_u64::<LittleEndian>()? as usize;
        let mut indices = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let mut idx = [0usize; 3];
            for slot in &mut idx {
                *slot = r.read_u64::<LittleEndian>()? as usize;
            }
            indices.push(idx);
        }
        let t_active = read_bools(&mut r)?;

        let mut optimizer = OptimizerState::default();
        for pair in [
            &mut optimizer.positions,
            &mut optimizer.sh,
            &mut optimizer.opacity,
        ] {
            pair.m = read_f64s(&mut r)?;
            pair.v = read_f64s(&mut r)?;
        }
        let weight_accum = read_f64s(&mut r)?;

        Ok(Checkpoint {
            iteration,
            sigma,
            floor,
            scene: Scene::new(
                VertexSet {
                    positions,
                    sh_coeffs,
                    opacity_logit,
                    active: v_active,
                },
                TriangleSet {
                    indices,
                    active: t_active,
                },
            ),
            optimizer,
            weight_accum,
        })
    })()
    .map_err(|e| file_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_checkpoint(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = Scene::default();
        let n = 17;
        for _ in 0..n {
            let mut coeffs = [[0.0; 3]; 16];
            for b in 0..16 {
                for ch in 0..3 {
                    coeffs[b][ch] = rng.gen_range(-1.0..1.0);
                }
            }
            scene.vertices.push(
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                coeffs,
                rng.gen_range(-5.0..5.0),
            );
        }
        for t in 0..9 {
            scene.triangles.push([t, t + 4, t + 8]);
        }
        scene.triangles.active[2] = false;
        scene.vertices.active[16] = false;
        let moments = |k: usize, rng: &mut ChaCha8Rng| MomentPair {
            m: (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            v: (0..k).map(|_| rng.gen_range(0.0..1.0)).collect(),
        };
        Checkpoint {
            iteration: 1234,
            sigma: 0.037,
            floor: 0.41,
            optimizer: OptimizerState {
                positions: moments(n * 3, &mut rng),
                sh: moments(n * 48, &mut rng),
                opacity: moments(n, &mut rng),
            },
            weight_accum: (0..9).map(|_| rng.gen()).collect(),
            scene,
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let ckpt = random_checkpoint(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsp");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let ckpt = random_checkpoint(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsp");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99; // bump the version field
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(IoError::Version { got: 99, .. })
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.tsp");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(IoError::Format { .. })));
    }
}
