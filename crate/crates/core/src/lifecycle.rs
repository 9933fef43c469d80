//! Training-time scene surgery: smoothness and opacity-floor schedules,
//! the one-shot hard prune, blend-weight pruning, orphan-vertex removal,
//! and midpoint-subdivision densification.

use crate::scene::Scene;
use rand::Rng;
use std::collections::HashMap;

/// Schedule knobs. Iteration fields are absolute; the defaults assume a
/// 30k-iteration run and scale down for shorter fits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub total_iters: usize,
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Floor is 0 before this iteration, then anneals linearly.
    pub floor_start_iter: usize,
    pub floor_end_iter: usize,
    /// Near-1 floor endpoint; the export snap takes opacity to exactly 1.
    pub floor_max: f64,
    /// Disables the floor (and the final snap) for free-opacity ablations.
    pub opacity_floor_enabled: bool,
    pub hard_prune_iter: usize,
    pub hard_prune_threshold: f64,
    pub tau_prune: f64,
    pub prune_interval: usize,
    pub densify_interval: usize,
    pub densify_start_iter: usize,
    pub densify_end_iter: usize,
    pub densify_rate: f64,
    pub triangle_budget: usize,
}

impl TrainSchedule {
    /// Defaults for a given run length, keeping the stock 30k-run shape:
    /// hard prune and floor activation at 1/6 of training, floor done at
    /// 90%, densification from ~1.7% to 60%.
    pub fn for_total_iters(total: usize) -> Self {
        let scale = |frac: f64| ((total as f64) * frac).round() as usize;
        TrainSchedule {
            total_iters: total,
            sigma_start: 1.0,
            sigma_end: 1e-4,
            floor_start_iter: scale(1.0 / 6.0),
            floor_end_iter: scale(0.9),
            floor_max: 0.995,
            opacity_floor_enabled: true,
            hard_prune_iter: scale(1.0 / 6.0),
            hard_prune_threshold: 0.2,
            tau_prune: 0.01,
            prune_interval: scale(1.0 / 60.0).max(1),
            densify_interval: scale(1.0 / 60.0).max(1),
            densify_start_iter: scale(1.0 / 60.0).max(1),
            densify_end_iter: scale(0.6),
            densify_rate: 0.05,
            triangle_budget: 4_000_000,
        }
    }

    /// Log-linear smoothness annealing from `sigma_start` to `sigma_end`.
    pub fn sigma_at(&self, iter: usize) -> f64 {
        let t = (iter as f64 / self.total_iters as f64).clamp(0.0, 1.0);
        (self.sigma_start.ln() * (1.0 - t) + self.sigma_end.ln() * t).exp()
    }

    /// Opacity floor: 0 until `floor_start_iter`, then linear up to
    /// `floor_max` at `floor_end_iter`, constant after.
    pub fn floor_at(&self, iter: usize) -> f64 {
        if !self.opacity_floor_enabled || iter < self.floor_start_iter {
            return 0.0;
        }
        if self.floor_end_iter <= self.floor_start_iter {
            return self.floor_max;
        }
        let t = (iter - self.floor_start_iter) as f64
            / (self.floor_end_iter - self.floor_start_iter) as f64;
        self.floor_max * t.min(1.0)
    }

    pub fn in_densify_window(&self, iter: usize) -> bool {
        iter >= self.densify_start_iter
            && iter <= self.densify_end_iter
            && iter % self.densify_interval == 0
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule::for_total_iters(30_000)
    }
}

/// Counts from a prune or densify pass, for the structured log line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LifecycleReport {
    pub triangles_removed: usize,
    pub triangles_added: usize,
    pub vertices_removed: usize,
    pub vertices_added: usize,
    pub triangles_active: usize,
    pub vertices_active: usize,
}

fn finish_report(scene: &Scene, mut report: LifecycleReport) -> LifecycleReport {
    report.triangles_active = scene.triangles.num_active();
    report.vertices_active = scene.vertices.num_active();
    report
}

/// Deactivates every active triangle with mapped opacity strictly below
/// the threshold, then removes orphaned vertices.
pub fn hard_prune(scene: &mut Scene, floor: f64, threshold: f64) -> LifecycleReport {
    let mut report = LifecycleReport::default();
    for t in 0..scene.triangles.len() {
        if !scene.triangles.active[t] {
            continue;
        }
        let (opacity, _) = scene.triangle_opacity(t, floor);
        if opacity < threshold {
            scene.triangles.active[t] = false;
            report.triangles_removed += 1;
        }
    }
    report.vertices_removed = prune_orphan_vertices(scene);
    debug_assert!(scene.validate().is_ok());
    finish_report(scene, report)
}

#[derive(Debug, thiserror::Error)]
#[error("weight vector length {got} does not match triangle slot count {expected}")]
pub struct StaleWeights {
    pub got: usize,
    pub expected: usize,
}

/// Deactivates active triangles whose max blend weight `T * o` across all
/// training views fell strictly below `tau_prune`.
pub fn blend_weight_prune(
    scene: &mut Scene,
    max_weights: &[f64],
    tau_prune: f64,
) -> Result<LifecycleReport, StaleWeights> {
    if max_weights.len() != scene.triangles.len() {
        return Err(StaleWeights {
            got: max_weights.len(),
            expected: scene.triangles.len(),
        });
    }
    let mut report = LifecycleReport::default();
    for t in 0..scene.triangles.len() {
        if scene.triangles.active[t] && max_weights[t] < tau_prune {
            scene.triangles.active[t] = false;
            report.triangles_removed += 1;
        }
    }
    report.vertices_removed = prune_orphan_vertices(scene);
    debug_assert!(scene.validate().is_ok());
    Ok(finish_report(scene, report))
}

/// Deactivates vertices referenced by no active triangle; returns the count.
pub fn prune_orphan_vertices(scene: &mut Scene) -> usize {
    let mut referenced = vec![false; scene.vertices.len()];
    for t in 0..scene.triangles.len() {
        if scene.triangles.active[t] {
            for &v in &scene.triangles.indices[t] {
                referenced[v] = true;
            }
        }
    }
    let mut removed = 0;
    for v in 0..scene.vertices.len() {
        if scene.vertices.active[v] && !referenced[v] {
            scene.vertices.active[v] = false;
            removed += 1;
        }
    }
    removed
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Midpoint-subdivision densification.
///
/// Each active triangle is selected independently with probability
/// `densify_rate * opacity` (Bernoulli); a selected triangle is replaced
/// by its four midpoint children. Midpoints average the two endpoint
/// positions, SH coefficients, and opacity logits, and are deduplicated
/// per call by undirected edge so adjacent selected triangles share them.
/// When the triangle budget would be exceeded the selection is truncated
/// by descending opacity.
pub fn densify<R: Rng>(
    scene: &mut Scene,
    schedule: &TrainSchedule,
    floor: f64,
    rng: &mut R,
) -> LifecycleReport {
    let mut report = LifecycleReport::default();
    let mut selected: Vec<(usize, f64)> = Vec::new();
    for t in 0..scene.triangles.len() {
        if !scene.triangles.active[t] {
            continue;
        }
        let (opacity, _) = scene.triangle_opacity(t, floor);
        let p = (schedule.densify_rate * opacity).clamp(0.0, 1.0);
        if p > 0.0 && rng.gen_bool(p) {
            selected.push((t, opacity));
        }
    }
    // each split nets +3 triangles
    let active = scene.triangles.num_active();
    let allowed = schedule.triangle_budget.saturating_sub(active) / 3;
    if selected.len() > allowed {
        selected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        selected.truncate(allowed);
        selected.sort_by_key(|(t, _)| *t);
    }

    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, _) in selected {
        let [i, j, k] = scene.triangles.indices[t];
        let mut mid = |a: usize, b: usize,
                       scene: &mut Scene,
                       report: &mut LifecycleReport|
         -> usize {
            *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                let pos = (scene.vertices.positions[a] + scene.vertices.positions[b]) * 0.5;
                let mut sh = [[0.0; 3]; 16];
                for bnd in 0..16 {
                    for ch in 0..3 {
                        sh[bnd][ch] = 0.5
                            * (scene.vertices.sh_coeffs[a][bnd][ch]
                                + scene.vertices.sh_coeffs[b][bnd][ch]);
                    }
                }
                let logit =
                    0.5 * (scene.vertices.opacity_logit[a] + scene.vertices.opacity_logit[b]);
                report.vertices_added += 1;
                scene.vertices.push(pos, sh, logit)
            })
        };
        let m_ij = mid(i, j, scene, &mut report);
        let m_jk = mid(j, k, scene, &mut report);
        let m_ki = mid(k, i, scene, &mut report);
        scene.triangles.active[t] = false;
        scene.triangles.push([i, m_ij, m_ki]);
        scene.triangles.push([m_ij, j, m_jk]);
        scene.triangles.push([m_ki, m_jk, k]);
        scene.triangles.push([m_ij, m_jk, m_ki]);
        report.triangles_removed += 1;
        report.triangles_added += 4;
    }
    debug_assert!(scene.validate().is_ok());
    finish_report(scene, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logit_for(opacity: f64) -> f64 {
        (opacity / (1.0 - opacity)).ln()
    }

    fn tri_area(scene: &Scene, t: usize) -> f64 {
        let [i, j, k] = scene.triangles.indices[t];
        let a = scene.vertices.positions[i];
        let b = scene.vertices.positions[j];
        let c = scene.vertices.positions[k];
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    fn one_triangle(opacity: f64) -> Scene {
        let mut scene = Scene::default();
        let l = logit_for(opacity);
        scene.vertices.push(Vector3::new(0.0, 0.0, 0.0), [[0.0; 3]; 16], l);
        scene.vertices.push(Vector3::new(2.0, 0.0, 0.5), [[0.1; 3]; 16], l);
        scene.vertices.push(Vector3::new(0.0, 2.0, 1.0), [[0.2; 3]; 16], l);
        scene.triangles.push([0, 1, 2]);
        scene
    }

    #[test]
    fn sigma_schedule_endpoints_and_midpoint() {
        let s = TrainSchedule::for_total_iters(10_000);
        assert_relative_eq!(s.sigma_at(0), 1.0);
        assert_relative_eq!(s.sigma_at(10_000), 1e-4, epsilon = 1e-12);
        assert_relative_eq!(s.sigma_at(5_000), 1e-2, epsilon = 1e-12);
        for i in 0..100 {
            assert!(s.sigma_at(i * 100 + 100) <= s.sigma_at(i * 100));
        }
    }

    #[test]
    fn floor_schedule() {
        let s = TrainSchedule::default(); // 30k
        assert_eq!(s.floor_start_iter, 5000);
        assert_eq!(s.floor_at(4999), 0.0);
        assert_eq!(s.floor_at(0), 0.0);
        assert_relative_eq!(s.floor_at(s.floor_end_iter), 0.995);
        assert_relative_eq!(s.floor_at(s.total_iters), 0.995);
        for i in (0..s.total_iters).step_by(997) {
            assert!(s.floor_at(i + 1) >= s.floor_at(i));
        }
        let mut free = s.clone();
        free.opacity_floor_enabled = false;
        assert_eq!(free.floor_at(free.total_iters), 0.0);
    }

    #[test]
    fn hard_prune_threshold_semantics() {
        let mut scene = Scene::default();
        for (t, &op) in [0.1, 0.19, 0.21, 0.9].iter().enumerate() {
            let l = logit_for(op);
            let base = t * 3;
            scene.vertices.push(Vector3::new(base as f64, 0.0, 0.0), [[0.0; 3]; 16], l);
            scene.vertices.push(Vector3::new(base as f64 + 1.0, 0.0, 0.0), [[0.0; 3]; 16], l);
            scene.vertices.push(Vector3::new(base as f64, 1.0, 0.0), [[0.0; 3]; 16], l);
            scene.triangles.push([base, base + 1, base + 2]);
        }
        let report = hard_prune(&mut scene, 0.0, 0.2);
        assert_eq!(report.triangles_removed, 2);
        assert_eq!(report.vertices_removed, 6);
        // postcondition: nothing below the threshold survives
        for t in 0..scene.triangles.len() {
            if scene.triangles.active[t] {
                assert!(scene.triangle_opacity(t, 0.0).0 >= 0.2);
            }
        }
    }

    #[test]
    fn blend_weight_prune_behavior() {
        let mut scene = one_triangle(0.9);
        // tau 0: nothing pruned
        let r = blend_weight_prune(&mut scene, &[0.0], 0.0).unwrap();
        assert_eq!(r.triangles_removed, 0);
        // stale length
        assert!(blend_weight_prune(&mut scene, &[0.0, 0.0], 0.01).is_err());
        // weight below tau: pruned
        let r = blend_weight_prune(&mut scene, &[0.005], 0.01).unwrap();
        assert_eq!(r.triangles_removed, 1);
        assert_eq!(r.vertices_removed, 3);
        assert_eq!(scene.triangles.num_active(), 0);
    }

    #[test]
    fn orphan_prune_keeps_shared_vertices() {
        let mut scene = one_triangle(0.5);
        // second triangle sharing vertices 1, 2
        scene.vertices.push(Vector3::new(2.0, 2.0, 0.0), [[0.0; 3]; 16], 0.0);
        scene.triangles.push([1, 2, 3]);
        scene.triangles.active[1] = false;
        let removed = prune_orphan_vertices(&mut scene);
        // vertex 3 was only on the inactive triangle
        assert_eq!(removed, 1);
        assert!(!scene.vertices.active[3]);
        assert!(scene.vertices.active[1] && scene.vertices.active[2]);
        // after compaction every vertex has degree >= 1
        scene.compact();
        let mut degree = vec![0usize; scene.vertices.len()];
        for t in 0..scene.triangles.len() {
            for &v in &scene.triangles.indices[t] {
                degree[v] += 1;
            }
        }
        assert!(degree.iter().all(|&d| d >= 1));
    }

    #[test]
    fn densify_single_forced_selection() {
        let mut scene = one_triangle(0.9);
        let parent_area = tri_area(&scene, 0);
        let mut schedule = TrainSchedule::for_total_iters(1000);
        schedule.densify_rate = 20.0; // probability clamps to 1
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = densify(&mut scene, &schedule, 0.0, &mut rng);
        assert_eq!(report.triangles_added, 4);
        assert_eq!(report.vertices_added, 3);
        assert_eq!(scene.triangles.num_active(), 4);
        assert_eq!(scene.vertices.len(), 6);
        // children tile the parent exactly
        let child_sum: f64 = (1..5).map(|t| tri_area(&scene, t)).sum();
        assert!((child_sum - parent_area).abs() <= 1e-9 * parent_area);
        // children's union bbox equals the parent bbox
        let bbox = |idx: &[usize]| {
            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            for &v in idx {
                let p = scene.vertices.positions[v];
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
            (lo, hi)
        };
        let (plo, phi) = bbox(&[0, 1, 2]);
        let child_verts: Vec<usize> = (1..5).flat_map(|t| scene.triangles.indices[t]).collect();
        let (clo, chi) = bbox(&child_verts);
        assert_relative_eq!((plo - clo).norm(), 0.0);
        assert_relative_eq!((phi - chi).norm(), 0.0);
        // midpoint attributes are endpoint means
        let m01 = 3; // first created midpoint
        assert_relative_eq!(
            scene.vertices.positions[m01].x,
            0.5 * (scene.vertices.positions[0].x + scene.vertices.positions[1].x)
        );
    }

    #[test]
    fn densify_dedups_shared_edge_midpoints() {
        let mut scene = one_triangle(0.9);
        let l = logit_for(0.9);
        scene.vertices.push(Vector3::new(2.0, 2.0, 0.2), [[0.0; 3]; 16], l);
        scene.triangles.push([1, 3, 2]); // shares edge (1,2)
        let mut schedule = TrainSchedule::for_total_iters(1000);
        schedule.densify_rate = 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        densify(&mut scene, &schedule, 0.0, &mut rng);
        // 4 original + 5 midpoints (shared edge created once): 9, not 10
        assert_eq!(scene.vertices.len(), 9);
        assert_eq!(scene.triangles.num_active(), 8);
    }

    #[test]
    fn densify_rate_zero_is_identity() {
        let mut scene = one_triangle(0.9);
        let before = scene.clone();
        let mut schedule = TrainSchedule::for_total_iters(1000);
        schedule.densify_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = densify(&mut scene, &schedule, 0.0, &mut rng);
        assert_eq!(report.triangles_added, 0);
        assert_eq!(scene, before);
    }

    #[test]
    fn densify_respects_budget_by_descending_opacity() {
        let mut scene = Scene::default();
        for (t, &op) in [0.3, 0.9, 0.6].iter().enumerate() {
            let l = logit_for(op);
            let base = t * 3;
            let off = t as f64 * 3.0;
            scene.vertices.push(Vector3::new(off, 0.0, 0.0), [[0.0; 3]; 16], l);
            scene.vertices.push(Vector3::new(off + 1.0, 0.0, 0.0), [[0.0; 3]; 16], l);
            scene.vertices.push(Vector3::new(off, 1.0, 0.0), [[0.0; 3]; 16], l);
            scene.triangles.push([base, base + 1, base + 2]);
        }
        let mut schedule = TrainSchedule::for_total_iters(1000);
        schedule.densify_rate = 20.0; // select all
        schedule.triangle_budget = 6; // 3 active -> room for exactly 1 split
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = densify(&mut scene, &schedule, 0.0, &mut rng);
        assert_eq!(report.triangles_removed, 1);
        // the highest-opacity triangle (index 1) was the one split
        assert!(!scene.triangles.active[1]);
        assert!(scene.triangles.active[0] && scene.triangles.active[2]);
    }

    #[test]
    fn connectivity_preserved_for_untouched_vertices() {
        // vertex shared by k triangles, none subdivided: still shared by k
        let mut scene = Scene::default();
        let hub = scene.vertices.push(Vector3::zeros(), [[0.0; 3]; 16], logit_for(0.5));
        for t in 0..4 {
            let a = scene.vertices.push(
                Vector3::new((t + 1) as f64, 0.0, 0.0),
                [[0.0; 3]; 16],
                logit_for(0.5),
            );
            let b = scene.vertices.push(
                Vector3::new(0.0, (t + 1) as f64, 0.0),
                [[0.0; 3]; 16],
                logit_for(0.5),
            );
            scene.triangles.push([hub, a, b]);
        }
        let mut schedule = TrainSchedule::for_total_iters(1000);
        schedule.densify_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        densify(&mut scene, &schedule, 0.0, &mut rng);
        let degree = scene
            .triangles
            .indices
            .iter()
            .zip(&scene.triangles.active)
            .filter(|(_, a)| **a)
            .filter(|(idx, _)| idx.contains(&hub))
            .count();
        assert_eq!(degree, 4);
    }
}
