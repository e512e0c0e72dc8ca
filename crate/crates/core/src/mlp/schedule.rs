//! Cosine annealing with warm restarts.
//!
//! Cycle `i` lasts `first_cycle * cycle_multiplier^i` steps. Within a cycle
//! at position `t` of `T`, the rate is `peak * (1 + cos(pi * t / T)) / 2`,
//! where `peak` starts at `lr0` and is multiplied by
//! `amplitude_multiplier` at every restart.

use std::f64::consts::PI;

use super::TrainConfig;

struct CyclePosition {
    start: f64,
    length: f64,
    peak: f64,
}

fn locate(cfg: &TrainConfig, step: u64) -> CyclePosition {
    let step = step as f64;
    let mut pos = CyclePosition {
        start: 0.0,
        length: cfg.first_cycle as f64,
        peak: cfg.lr0,
    };
    while step >= pos.start + pos.length {
        pos.start += pos.length;
        pos.length *= cfg.cycle_multiplier;
        pos.peak *= cfg.amplitude_multiplier;
    }
    pos
}

pub fn lr_at(cfg: &TrainConfig, step: u64) -> f64 {
    let pos = locate(cfg, step);
    let t = step as f64 - pos.start;
    pos.peak * 0.5 * (1.0 + (PI * t / pos.length).cos())
}

/// Cumulative step counts at which the first `count` restarts happen.
pub fn cycle_boundaries(cfg: &TrainConfig, count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut end = 0.0;
    let mut length = cfg.first_cycle as f64;
    for _ in 0..count {
        end += length;
        out.push(end.round() as u64);
        length *= cfg.cycle_multiplier;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let cfg = TrainConfig::default();
        assert!((lr_at(&cfg, 0) - 0.001).abs() < 1e-12);
        assert!((lr_at(&cfg, 500) - 0.0005).abs() < 1e-12);
        assert!((lr_at(&cfg, 1000) - 0.001).abs() < 1e-12);
        assert!((lr_at(&cfg, 2000) - 0.0005).abs() < 1e-12);
        assert!((lr_at(&cfg, 3000) - 0.001).abs() < 1e-12);
        assert!((lr_at(&cfg, 7000) - 0.001).abs() < 1e-12);
        assert_eq!(cycle_boundaries(&cfg, 3), vec![1000, 3000, 7000]);
    }

    #[test]
    fn rate_decays_monotonically_within_a_cycle() {
        let cfg = TrainConfig::default();
        for (start, end) in [(0, 1000), (1000, 3000), (3000, 7000)] {
            let lrs: Vec<f64> = (start..end).map(|s| lr_at(&cfg, s)).collect();
            assert!(lrs.windows(2).all(|w| w[1] < w[0]));
            // continuity: per-step change bounded by the cosine slope
            let max_jump = lrs.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
            assert!(max_jump <= cfg.lr0 * std::f64::consts::PI / (2.0 * (end - start) as f64) + 1e-15);
        }
    }

    #[test]
    fn amplitude_multiplier_scales_restarts() {
        let cfg = TrainConfig {
            amplitude_multiplier: 0.5,
            ..TrainConfig::default()
        };
        assert!((lr_at(&cfg, 1000) - 0.0005).abs() < 1e-15);
        assert!((lr_at(&cfg, 3000) - 0.00025).abs() < 1e-15);
    }
}
