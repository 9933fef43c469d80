//! Flat key=value config files mapped onto the training configuration.
//! CLI flags override file values; unknown keys are rejected.

use anyhow::{bail, Context, Result};
use std::path::Path;
use trisplat_core::trainer::TrainConfig;

pub fn apply_kv(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let f = || -> Result<f64> {
        value
            .parse::<f64>()
            .with_context(|| format!("bad float for {key}: {value:?}"))
    };
    let u = || -> Result<usize> {
        value
            .parse::<usize>()
            .with_context(|| format!("bad integer for {key}: {value:?}"))
    };
    let b = || -> Result<bool> {
        value
            .parse::<bool>()
            .with_context(|| format!("bad bool for {key}: {value:?}"))
    };
    match key {
        "total_iters" => {
            // rescale the schedule with the new length, preserving any
            // keys set later in the file
            *config = TrainConfig {
                loss_weights: config.loss_weights,
                seed: config.seed,
                aa_scale: config.aa_scale,
                background: config.background,
                ..TrainConfig::for_total_iters(u()?)
            };
        }
        "lr_position" => config.lr_position = f()?,
        "lr_position_final" => config.lr_position_final = f()?,
        "lr_sh_dc" => config.lr_sh_dc = f()?,
        "lr_sh_rest" => config.lr_sh_rest = f()?,
        "lr_opacity" => config.lr_opacity = f()?,
        "adam_beta1" => config.adam_beta1 = f()?,
        "adam_beta2" => config.adam_beta2 = f()?,
        "adam_epsilon" => config.adam_epsilon = f()?,
        "aa_scale" => config.aa_scale = u()?,
        "lambda" => config.loss_weights.lambda = f()?,
        "beta1" => config.loss_weights.beta1 = f()?,
        "beta2" => config.loss_weights.beta2 = f()?,
        "seed" => config.seed = value.parse().context("bad seed")?,
        "eval_interval" => config.eval_interval = u()?,
        "checkpoint_interval" => config.checkpoint_interval = u()?,
        "background" => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() != 3 {
                bail!("background wants r,g,b in [0,1], got {value:?}");
            }
            for (i, p) in parts.iter().enumerate() {
                config.background[i] = p
                    .trim()
                    .parse()
                    .with_context(|| format!("bad background channel {p:?}"))?;
            }
        }
        "freeze_opacity_last" => config.freeze_opacity_last = u()?,
        "sigma_start" => config.schedule.sigma_start = f()?,
        "sigma_end" => config.schedule.sigma_end = f()?,
        "floor_start_iter" => config.schedule.floor_start_iter = u()?,
        "floor_end_iter" => config.schedule.floor_end_iter = u()?,
        "floor_max" => config.schedule.floor_max = f()?,
        "opacity_floor_enabled" => config.schedule.opacity_floor_enabled = b()?,
        "hard_prune_iter" => config.schedule.hard_prune_iter = u()?,
        "hard_prune_threshold" => config.schedule.hard_prune_threshold = f()?,
        "tau_prune" => config.schedule.tau_prune = f()?,
        "prune_interval" => config.schedule.prune_interval = u()?,
        "densify_interval" => config.schedule.densify_interval = u()?,
        "densify_start_iter" => config.schedule.densify_start_iter = u()?,
        "densify_end_iter" => config.schedule.densify_end_iter = u()?,
        "densify_rate" => config.schedule.densify_rate = f()?,
        "triangle_budget" => config.schedule.triangle_budget = u()?,
        other => bail!("unknown config key {other:?}"),
    }
    Ok(())
}

pub fn load_config_file(config: &mut TrainConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), lineno + 1);
        };
        apply_kv(config, key.trim(), value.trim())
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
    }
    Ok(())
}
