//! Command-line front end: train, render, eval, export-ply, extract, and
//! make-synthetic over the library pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use trisplat_core::extract::{collect_triangles, split_scene, SplitMode};
use trisplat_core::io::checkpoint::{load_checkpoint, save_checkpoint};
use trisplat_core::io::manifest::load_manifest_dataset;
use trisplat_core::io::ply::{export_ply, PlyMode};
use trisplat_core::io::{colmap, image_io, SceneDataset};
use trisplat_core::raster::{self, RenderOptions};
use trisplat_core::scene::Scene;
use trisplat_core::synthetic;
use trisplat_core::trainer::{self, TrainConfig, TrainError};

#[derive(Parser)]
#[command(
    name = "trisplat",
    about = "Differentiable triangle splatting on the CPU",
    version
)]
struct Cli {
    /// Flat key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for training, densification, and fixtures.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Route renders through the sequential tile path.
    #[arg(long, global = true, default_value_t = false)]
    deterministic: bool,
    /// Cap the worker pool (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a scene against a dataset and export the mesh.
    Train {
        /// COLMAP dir (with sparse/ and images/) or a manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the run length (0 exports the initialization only).
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Render one view of a checkpoint to an image.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset supplying the camera (see --camera-index).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        camera_index: Option<usize>,
        /// JSON file with one manifest-style camera (fx, fy, ...).
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        aa_scale: Option<usize>,
    },
    /// PSNR/SSIM of a checkpoint against dataset views.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Which split to score.
        #[arg(long, default_value = "eval")]
        split: String,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a checkpoint as a binary PLY mesh.
    ExportPly {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// "vertex-color" (uint8 RGB) or "sh-dc" (float DC band).
        #[arg(long, default_value = "vertex-color")]
        mode: String,
    },
    /// Select triangles via per-view masks and keep or drop them.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory of masks named like the view images.
        #[arg(long)]
        masks: PathBuf,
        #[arg(long, default_value = "extract")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
        /// Keep triangles hit in at least this many views.
        #[arg(long, default_value_t = 1)]
        min_views: usize,
    },
    /// Generate a self-contained synthetic dataset.
    MakeSynthetic {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Data-shaped errors exit 2, numerical failures 3.
fn classify(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(te) = cause.downcast_ref::<TrainError>() {
            return match te {
                TrainError::NonFiniteLoss { .. } => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<trisplat_core::io::IoError>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
            || cause
                .downcast_ref::<trisplat_core::extract::ExtractError>()
                .is_some()
            || cause
                .downcast_ref::<trisplat_core::delaunay::DelaunayError>()
                .is_some()
        {
            return 2;
        }
    }
    1
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version go to stdout with success
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(classify(&e));
        }
    }
}

fn load_dataset(data: &Path) -> Result<SceneDataset> {
    if data.is_file() {
        return Ok(load_manifest_dataset(data)?);
    }
    if data.join("manifest.json").is_file() {
        return Ok(load_manifest_dataset(&data.join("manifest.json"))?);
    }
    // COLMAP layout: <data>/sparse[/0]/cameras.txt + <data>/images/
    let sparse = ["sparse/0", "sparse", "."]
        .iter()
        .map(|s| data.join(s))
        .find(|d| d.join("cameras.txt").is_file())
        .ok_or_else(|| {
            anyhow!(
                "{}: no manifest.json and no cameras.txt under sparse/",
                data.display()
            )
        })?;
    let images = ["images", "."]
        .iter()
        .map(|s| data.join(s))
        .find(|d| d.is_dir())
        .expect("dataset root exists");
    Ok(colmap::parse_colmap_text(&sparse, &images)?)
}

fn build_config(cli_config: &Option<PathBuf>, seed: Option<u64>, deterministic: bool) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = cli_config {
        config::load_config_file(&mut config, path)?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.sequential = deterministic;
    Ok(config)
}

fn compacted(scene: &Scene) -> Scene {
    let mut out = scene.clone();
    trisplat_core::lifecycle::prune_orphan_vertices(&mut out);
    out.compact();
    out
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { data, out, iters } => {
            let mut config = build_config(&cli.config, cli.seed, cli.deterministic)?;
            if let Some(iters) = iters {
                let keep = (config.loss_weights, config.seed, config.aa_scale, config.background);
                config = TrainConfig::for_total_iters(iters);
                (config.loss_weights, config.seed, config.aa_scale, config.background) = keep;
                config.sequential = cli.deterministic;
                if let Some(path) = &cli.config {
                    // file keys still win over the rescale for explicit fields
                    config::load_config_file(&mut config, path)?;
                    config.total_iters = iters;
                }
            }
            let dataset = load_dataset(&data)?;
            log::info!(
                "dataset: {} views ({} train / {} eval), {} points",
                dataset.n_views(),
                dataset.split.train.len(),
                dataset.split.eval.len(),
                dataset.points.len()
            );
            let result = trainer::train(&dataset, &config, Some(&out))?;
            let mesh = compacted(&result.scene);
            export_ply(&mesh, &out.join("final.ply"), PlyMode::VertexColor)?;
            if let Some(eval) = &result.final_eval {
                println!(
                    "final: psnr {:.2} dB, ssim {:.4}, {} vertices, {} triangles",
                    eval.mean_psnr, eval.mean_ssim, eval.n_verts, eval.n_tris
                );
            } else {
                println!(
                    "exported initialization: {} vertices, {} triangles",
                    mesh.vertices.len(),
                    mesh.triangles.len()
                );
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Render {
            checkpoint,
            data,
            camera_index,
            pose,
            out,
            aa_scale,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let camera = match (&data, camera_index, &pose) {
                (Some(data), Some(idx), None) => {
                    let dataset = load_dataset(data)?;
                    dataset
                        .cameras
                        .get(idx)
                        .cloned()
                        .ok_or_else(|| anyhow!("camera index {idx} out of range (dataset has {})", dataset.n_views()))?
                }
                (None, None, Some(pose)) => {
                    let text = std::fs::read_to_string(pose)
                        .with_context(|| format!("reading pose {}", pose.display()))?;
                    let mc: trisplat_core::io::manifest::ManifestCamera =
                        serde_json::from_str(&text)
                            .with_context(|| format!("parsing pose {}", pose.display()))?;
                    mc.to_camera(0)?
                }
                _ => bail!("render needs either --data with --camera-index, or --pose"),
            };
            let aa = aa_scale.unwrap_or(2).max(1);
            let opts = RenderOptions {
                sequential: cli.deterministic,
                ..Default::default()
            };
            let img = raster::render_aa(&ckpt.scene, &camera, 1e-4, ckpt.floor, aa, &opts).color;
            image_io::write_image(&img, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&data)?;
            let views: Vec<usize> = match split.as_str() {
                "train" => dataset.split.train.clone(),
                "eval" => dataset.split.eval.clone(),
                "all" => (0..dataset.n_views()).collect(),
                other => bail!("unknown split {other:?} (train|eval|all)"),
            };
            if views.is_empty() {
                bail!("split {split:?} selects no views");
            }
            let summary =
                trainer::evaluate(&ckpt.scene, &dataset, &views, ckpt.floor, 2, [0.0; 3]);
            println!("view,psnr,ssim");
            for v in &summary.per_view {
                println!("{},{:.4},{:.6}", v.view, v.psnr, v.ssim);
            }
            println!(
                "mean: psnr {:.2} dB, ssim {:.4} over {} views ({} verts, {} tris)",
                summary.mean_psnr,
                summary.mean_ssim,
                summary.per_view.len(),
                summary.n_verts,
                summary.n_tris
            );
            if let Some(out) = out {
                let mut text = String::from("view,psnr,ssim\n");
                for v in &summary.per_view {
                    text.push_str(&format!("{},{},{}\n", v.view, v.psnr, v.ssim));
                }
                std::fs::write(&out, text)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        Command::ExportPly {
            checkpoint,
            out,
            mode,
        } => {
            let mode = match mode.as_str() {
                "vertex-color" => PlyMode::VertexColor,
                "sh-dc" => PlyMode::ShDc,
                other => bail!("unknown PLY mode {other:?} (vertex-color|sh-dc)"),
            };
            let ckpt = load_checkpoint(&checkpoint)?;
            let mesh = compacted(&ckpt.scene);
            export_ply(&mesh, &out, mode)?;
            println!(
                "wrote {} ({} vertices, {} faces)",
                out.display(),
                mesh.vertices.len(),
                mesh.triangles.len()
            );
            Ok(())
        }
        Command::Extract {
            checkpoint,
            data,
            masks,
            mode,
            out,
            min_views,
        } => {
            let mode = match mode.as_str() {
                "extract" => SplitMode::Extract,
                "remove" => SplitMode::Remove,
                other => bail!("unknown mode {other:?} (extract|remove)"),
            };
            let ckpt = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&data)?;
            let mut views = Vec::new();
            for (i, name) in dataset.image_names.iter().enumerate() {
                let stem = Path::new(name)
                    .file_name()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(name));
                let mask_path = masks.join(&stem);
                if mask_path.is_file() {
                    views.push((dataset.cameras[i].clone(), image_io::read_mask(&mask_path)?));
                }
            }
            if views.is_empty() {
                bail!(
                    "no masks in {} match the dataset image names",
                    masks.display()
                );
            }
            let ids: BTreeSet<u32> = collect_triangles(&ckpt.scene, &views, min_views)?;
            log::info!("collected {} triangles from {} masked views", ids.len(), views.len());
            let scene = split_scene(&ckpt.scene, &ids, mode);
            if scene.triangles.is_empty() {
                bail!("selection leaves no triangles to export");
            }
            export_ply(&scene, &out, PlyMode::VertexColor)?;
            println!(
                "wrote {} ({} vertices, {} faces)",
                out.display(),
                scene.vertices.len(),
                scene.triangles.len()
            );
            Ok(())
        }
        Command::MakeSynthetic { preset, out } => {
            let Some(preset) = synthetic::Preset::from_name(&preset) else {
                let names: Vec<&str> =
                    synthetic::Preset::all().iter().map(|p| p.name()).collect();
                bail!("unknown preset {preset:?}; available: {}", names.join(", "));
            };
            let fixture = synthetic::build(preset, cli.seed.unwrap_or(0));
            synthetic::write_fixture(&fixture, &out)?;
            println!(
                "wrote {} fixture to {} ({} views, {} gt triangles)",
                preset.name(),
                out.display(),
                fixture.dataset.n_views(),
                fixture.gt_scene.triangles.len()
            );
            Ok(())
        }
    }
}
