// debug: the full two-objects training fit + error visualization
use trisplat_core::io::image_io;
use trisplat_core::raster::{self, RenderOptions};
use trisplat_core::synthetic;
use trisplat_core::trainer::{self, TrainConfig};
use trisplat_core::img::ImageBuf;

fn main() {
    env_logger::Builder::from_default_env()
        .filter_level(log::LevelFilter::Warn)
        .init();
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let densify: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let t0 = std::time::Instant::now();
    let fx = synthetic::two_objects(7);
    let mut config = TrainConfig::for_total_iters(iters);
    config.eval_interval = iters / 8;
    config.schedule.densify_rate = densify;
    let result = trainer::train(&fx.dataset, &config, None).unwrap();
    for row in &result.metrics {
        println!(
            "iter {:5}  loss {:.5}  psnr {:6.2}  ssim {:.4}  verts {:5}  tris {:5}  sigma {:.2e}  floor {:.3}",
            row.iter, row.loss, row.psnr, row.ssim, row.n_verts, row.n_tris, row.sigma, row.floor
        );
    }
    let e = result.final_eval.unwrap();
    println!("FINAL: psnr {:.2} ssim {:.4} ({} verts, {} tris) in {:?}",
        e.mean_psnr, e.mean_ssim, e.n_verts, e.n_tris, t0.elapsed());
    for v in &e.per_view {
        println!("  view {}: psnr {:.2} ssim {:.4}", v.view, v.psnr, v.ssim);
    }
    // dump error images for the worst eval view
    let worst = e.per_view.iter().min_by(|a, b| a.psnr.partial_cmp(&b.psnr).unwrap()).unwrap();
    let cam = &fx.dataset.cameras[worst.view];
    let opts = RenderOptions::default();
    let render = raster::render_aa(&result.scene, cam, 1e-4, 0.995, 2, &opts).color;
    let target = &fx.dataset.images[worst.view];
    let mut diff = ImageBuf::new(render.width, render.height);
    for i in 0..diff.pixels.len() {
        for ch in 0..3 {
            diff.pixels[i][ch] = ((render.pixels[i][ch] - target.pixels[i][ch]).abs() * 5.0).min(1.0);
        }
    }
    std::fs::create_dir_all("/tmp/dbg").unwrap();
    image_io::write_image(&render, std::path::Path::new("/tmp/dbg/render.png")).unwrap();
    image_io::write_image(target, std::path::Path::new("/tmp/dbg/target.png")).unwrap();
    image_io::write_image(&diff, std::path::Path::new("/tmp/dbg/diff5x.png")).unwrap();
    println!("dumped /tmp/dbg/{{render,target,diff5x}}.png for view {}", worst.view);
}
