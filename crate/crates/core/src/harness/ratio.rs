//! `E_c(k)/E_dist(k)` over network sizes.

use super::aggregate::{median, std_dev, WINDOW};
use super::config::{ExperimentConfig, TopologySpec};
use super::experiment::run_experiment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub n: usize,
    pub k: u64,
    /// Median across batches of the per-batch ratio.
    pub ratio: f64,
    pub ratio_std: f64,
}

/// Window that ends at slot `k`: `[k − WINDOW, k)` for aligned `k`.
pub fn checkpoint_window(k: u64) -> usize {
    (k.saturating_sub(1) as usize) / WINDOW
}

/// Runs `template` on a bidirectional cycle of every size in `sizes`. Each
/// node keeps the template's noise, so the centralized baseline sees `n`
/// times the per-node variance.
pub fn ratio_study(template: &ExperimentConfig, sizes: &[usize], checkpoints: &[u64]) -> Result<Vec<RatioRow>> {
    let last = checkpoints.iter().copied().max().ok_or_else(|| Error::config("no checkpoints"))?;
    let mut rows = Vec::new();
    for &n in sizes {
        let cfg = ExperimentConfig {
            topology: TopologySpec::Cycle { n, bidirectional: true },
            horizon: template.horizon.max(last as usize),
            baseline: true,
            ..template.clone()
        };
        let out = run_experiment(&cfg)?;
        for &k in checkpoints {
            let w = checkpoint_window(k);
            let mut ratios: Vec<f64> = out
                .batches
                .iter()
                .map(|b| b.e_c.as_ref().expect("baseline forced on")[w] / b.e_dist[w])
                .collect();
            let ratio_std = std_dev(&ratios);
            rows.push(RatioRow { n, k, ratio: median(&mut ratios), ratio_std });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_windows() {
        assert_eq!(checkpoint_window(2000), 19);
        assert_eq!(checkpoint_window(20000), 199);
        assert_eq!(checkpoint_window(150), 1);
    }
}
