// debug: verify fixture generation across seeds
fn main() {
    for seed in 0..12u64 {
        let t0 = std::time::Instant::now();
        let fx = trisplat_core::synthetic::two_objects(seed);
        println!(
            "seed {seed}: {} tris, {} verts, {:?}",
            fx.gt_scene.triangles.len(),
            fx.gt_scene.vertices.len(),
            t0.elapsed()
        );
    }
}
