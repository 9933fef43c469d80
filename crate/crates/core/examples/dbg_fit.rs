// debug: single-triangle fit trajectory
use nalgebra::{Matrix3, Vector3};
use trisplat_core::geom::Camera;
use trisplat_core::io::{SceneDataset, Split};
use trisplat_core::raster::{self, RenderOptions};
use trisplat_core::scene::Scene;
use trisplat_core::sh;
use trisplat_core::trainer::*;

fn main() {
    let size = 48;
    let cam = Camera::new(size as f64, size as f64, size as f64/2.0, size as f64/2.0,
        Matrix3::identity(), Vector3::zeros(), size, size).unwrap();
    let mut gt = Scene::default();
    let mut coeffs = [[0.0; 3]; 16];
    coeffs[0] = sh::rgb_to_dc([0.8, 0.3, 0.2]);
    gt.vertices.push(Vector3::new(-0.9, -0.7, 2.0), coeffs, 1000.0);
    let mut c2 = coeffs; c2[0] = sh::rgb_to_dc([0.2, 0.7, 0.9]);
    gt.vertices.push(Vector3::new(0.9, -0.5, 2.0), c2, 1000.0);
    let mut c3 = coeffs; c3[0] = sh::rgb_to_dc([0.3, 0.9, 0.3]);
    gt.vertices.push(Vector3::new(0.0, 0.9, 2.0), c3, 1000.0);
    gt.triangles.push([0, 1, 2]);
    let img = raster::render(&gt, &cam, 1e-4, 0.0, &RenderOptions::default()).color;
    let dataset = SceneDataset {
        cameras: vec![cam], images: vec![img], image_names: vec!["v0".into()],
        normal_maps: vec![None], points: vec![], point_colors: None,
        split: Split { train: vec![0], eval: vec![0] },
    };
    let mut scene = gt.clone();
    for (i, p) in scene.vertices.positions.iter_mut().enumerate() {
        p.x += 0.01 * (i as f64 + 1.0);
        p.y -= 0.008 * (i as f64 + 0.5);
    }
    for s in &mut scene.vertices.sh_coeffs { s[0] = [0.0; 3]; }
    for l in &mut scene.vertices.opacity_logit { *l = 1.0; }

    for milestone in [20usize, 60, 120, 200] {
        let mut config = TrainConfig::for_total_iters(milestone);
        config.aa_scale = 1;
        config.eval_interval = 0;
        config.freeze_opacity_last = 0;
        config.loss_weights.beta1 = 0.0;
        config.lr_sh_dc = 2.5e-2;
        config.lr_position = 2e-3;
        config.lr_position_final = 2e-5;
        config.schedule.sigma_start = 0.1;
        config.schedule.hard_prune_iter = usize::MAX;
        config.schedule.densify_rate = 0.0;
        config.schedule.tau_prune = 0.0;
        config.schedule.floor_start_iter = milestone / 20;
        config.schedule.floor_end_iter = milestone / 2;
        let r = run(TrainState::fresh(scene.clone()), &dataset, &config, None).unwrap();
        let e = r.final_eval.unwrap();
        println!("iters {milestone}: PSNR {:.2} SSIM {:.4}", e.mean_psnr, e.mean_ssim);
        if milestone == 200 {
            for v in 0..3 {
                let dc = r.scene.vertices.sh_coeffs[v][0];
                let gt_dc = gt.vertices.sh_coeffs[v][0];
                println!("v{v}: dc=({:.3},{:.3},{:.3}) gt=({:.3},{:.3},{:.3}) pos d=({:.4},{:.4})",
                    dc[0], dc[1], dc[2], gt_dc[0], gt_dc[1], gt_dc[2],
                    r.scene.vertices.positions[v].x - gt.vertices.positions[v].x,
                    r.scene.vertices.positions[v].y - gt.vertices.positions[v].y);
            }
        }
    }
}
