//! Batch means → window means → median across batches.
//!
//! Everything here is a pure function of the raw per-run series, so
//! re-aggregating persisted raw files reproduces the published numbers.

/// Window length for the along-`k` averaging.
pub const WINDOW: usize = 100;

/// Squared errors of one run at every slot `0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub run: usize,
    pub run_key: u64,
    /// `‖ẑ(k) − z*‖²`.
    pub e_dist: Vec<f64>,
    /// `‖x_c(k) − z*‖²`, when the baseline ran.
    pub e_c: Option<Vec<f64>>,
}

/// One batch, already window-averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub e_dist: Vec<f64>,
    pub k_e_dist: Vec<f64>,
    pub e_c: Option<Vec<f64>>,
    pub k_e_c: Option<Vec<f64>>,
}

/// Aggregated curves, one entry per window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// Window midpoints.
    pub k: Vec<f64>,
    pub e_dist: Vec<f64>,
    pub e_dist_std: Vec<f64>,
    pub k_e_dist: Vec<f64>,
    pub e_c: Option<Vec<f64>>,
    pub e_c_std: Option<Vec<f64>>,
    pub k_e_c: Option<Vec<f64>>,
    pub batches: usize,
    pub runs: usize,
}

/// Element-wise mean, summed in the given order.
pub fn mean_series(series: &[&[f64]]) -> Vec<f64> {
    let len = series.first().map_or(0, |s| s.len());
    let mut out = vec![0.0; len];
    for s in series {
        for (o, v) in out.iter_mut().zip(s.iter()) {
            *o += v;
        }
    }
    let count = series.len() as f64;
    out.iter_mut().for_each(|o| *o /= count);
    out
}

/// Non-overlapping means; a short last window averages what it has.
pub fn window_means(series: &[f64], window: usize) -> Vec<f64> {
    series.chunks(window).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

pub fn window_midpoints(len: usize, window: usize) -> Vec<f64> {
    (0..len)
        .step_by(window)
        .map(|start| {
            let end = (start + window).min(len);
            (start + end - 1) as f64 / 2.0
        })
        .collect()
}

/// `k·E(k)`.
pub fn k_weighted(series: &[f64]) -> Vec<f64> {
    series.iter().enumerate().map(|(k, e)| k as f64 * e).collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Sample standard deviation; 0 for a single value.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Mean across the runs of one batch, then window means.
pub fn summarize_batch(runs: &[RunSeries], window: usize) -> BatchSummary {
    let dist: Vec<&[f64]> = runs.iter().map(|r| r.e_dist.as_slice()).collect();
    let mean = mean_series(&dist);
    let central: Option<Vec<&[f64]>> = runs.iter().map(|r| r.e_c.as_deref()).collect();
    let central = central.map(|c| mean_series(&c));
    BatchSummary {
        runs: runs.len(),
        e_dist: window_means(&mean, window),
        k_e_dist: window_means(&k_weighted(&mean), window),
        k_e_c: central.as_ref().map(|c| window_means(&k_weighted(c), window)),
        e_c: central.map(|c| window_means(&c, window)),
    }
}

fn median_and_std(columns: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let len = columns.first().map_or(0, |c| c.len());
    let mut med = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    let mut buf = Vec::with_capacity(columns.len());
    for w in 0..len {
        buf.clear();
        buf.extend(columns.iter().map(|c| c[w]));
        std.push(std_dev(&buf));
        med.push(median(&mut buf));
    }
    (med, std)
}

/// Median and one-standard-deviation band across batches.
pub fn combine_batches(batches: &[BatchSummary], slots: usize, window: usize) -> MetricSeries {
    let pick = |f: fn(&BatchSummary) -> Option<&Vec<f64>>| -> Option<Vec<&[f64]>> {
        batches.iter().map(|b| f(b).map(Vec::as_slice)).collect()
    };
    let (e_dist, e_dist_std) = median_and_std(&pick(|b| Some(&b.e_dist)).unwrap_or_default());
    let (k_e_dist, _) = median_and_std(&pick(|b| Some(&b.k_e_dist)).unwrap_or_default());
    let central = pick(|b| b.e_c.as_ref()).map(|c| median_and_std(&c));
    let k_e_c = pick(|b| b.k_e_c.as_ref()).map(|c| median_and_std(&c).0);
    MetricSeries {
        k: window_midpoints(slots, window),
        e_dist,
        e_dist_std,
        k_e_dist,
        e_c_std: central.as_ref().map(|c| c.1.clone()),
        e_c: central.map(|c| c.0),
        k_e_c,
        batches: batches.len(),
        runs: batches.iter().map(|b| b.runs).sum(),
    }
}

/// The whole pipeline from raw runs (in run order).
pub fn aggregate_series(raw: &[RunSeries], batch_size: usize, window: usize) -> MetricSeries {
    let batches: Vec<BatchSummary> = raw.chunks(batch_size.max(1)).map(|b| summarize_batch(b, window)).collect();
    let slots = raw.first().map_or(0, |r| r.e_dist.len());
    combine_batches(&batches, slots, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(run: usize, e: Vec<f64>) -> RunSeries {
        RunSeries { run, run_key: 0, e_c: Some(e.iter().map(|v| 2.0 * v).collect()), e_dist: e }
    }

    #[test]
    fn single_run_is_its_window_means() {
        let e: Vec<f64> = (0..250).map(f64::from).collect();
        let m = aggregate_series(&[run(0, e.clone())], 10, 100);
        assert_eq!(m.e_dist, vec![49.5, 149.5, 224.5]);
        assert_eq!(m.k, vec![49.5, 149.5, 224.5]);
        assert_eq!(m.e_dist_std, vec![0.0; 3]);
        assert_eq!(m.e_c.unwrap(), vec![99.0, 299.0, 449.0]);
    }

    #[test]
    fn median_of_two_batches() {
        let s: Vec<f64> = (0..200).map(|k| (k as f64).sin().abs()).collect();
        let t: Vec<f64> = s.iter().map(|v| 3.0 * v).collect();
        let m = aggregate_series(&[run(0, s.clone()), run(1, t)], 1, 100);
        let w = window_means(&s, 100);
        for (a, b) in m.e_dist.iter().zip(&w) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_runs_aggregate_exactly() {
        let raw: Vec<RunSeries> = (0..7).map(|r| run(r, vec![0.375; 333])).collect();
        let m = aggregate_series(&raw, 3, 100);
        assert!(m.e_dist.iter().all(|&v| v == 0.375));
        assert!(m.e_dist_std.iter().all(|&v| v == 0.0));
        assert_eq!((m.batches, m.runs), (3, 7));
    }

    #[test]
    fn k_weighting() {
        assert_eq!(k_weighted(&[5.0, 2.0, 1.0]), vec![0.0, 2.0, 2.0]);
    }
}
