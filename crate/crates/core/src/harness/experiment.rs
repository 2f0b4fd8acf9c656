//! Monte Carlo orchestration: paired decentralized / centralized runs.

use rayon::prelude::*;

use super::aggregate::{combine_batches, summarize_batch, BatchSummary, MetricSeries, RunSeries, WINDOW};
use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::objectives::{centralized_baseline, solve_reference_optimum, ObjectiveSuite, ReferenceOptimum, SvmDataset};
use crate::oracle::{cross_validate, VerificationReport};
use crate::raps::{run_raps, RunOptions};
use crate::rasgp::{run_rasgp, RasgpOptions};
use crate::rng::{derive_key, Role, Stream};

/// Key of run `r` under the master seed.
pub fn run_key(seed: u64, run: usize) -> u64 {
    derive_key(seed, run as u64)
}

/// Everything shared by the runs of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: Topology,
    pub suite: ObjectiveSuite,
    pub dataset: Option<SvmDataset>,
    pub optimum: ReferenceOptimum,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    let topology = cfg.build_topology()?;
    let (suite, dataset) = cfg.build_objective()?.ok_or_else(|| Error::config("optimization needs an objective"))?;
    let optimum = solve_reference_optimum(&suite)?;
    Ok(Setup { topology, suite, dataset, optimum })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One paired run. The baseline draws from its own stream, so adding or
/// removing it never changes the decentralized run.
pub fn run_single(cfg: &ExperimentConfig, setup: &Setup, run: usize) -> Result<(RunSeries, Option<VerificationReport>)> {
    let key = run_key(cfg.seed, run);
    let inner = || -> Result<(RunSeries, Option<VerificationReport>)> {
        let d = setup.suite.dim();
        let n = setup.topology.n();
        let x0 = cfg.initial_values(d, key)?;
        let z_star = &setup.optimum.z;
        let mut e_dist = Vec::with_capacity(cfg.horizon + 1);
        let mut zhat = vec![0.0; d];
        let options = RasgpOptions { trace: cfg.verify, mask: cfg.mask, ..Default::default() };
        let result =
            run_rasgp(&setup.topology, cfg.faults, &setup.suite, cfg.noise(), &x0, cfg.horizon, cfg.k0, key, options, |_, nodes| {
                zhat.iter_mut().for_each(|v| *v = 0.0);
                for s in nodes {
                    zhat.iter_mut().zip(&s.z).for_each(|(a, b)| *a += b);
                }
                zhat.iter_mut().for_each(|v| *v /= n as f64);
                e_dist.push(squared_distance(&zhat, z_star));
            })?;
        let report = match &result.trace {
            Some(trace) => {
                let mut r = cross_validate(trace, false)?;
                r.label = format!("run {run}");
                Some(r)
            }
            None => None,
        };
        let e_c = if cfg.baseline {
            let start: Vec<f64> = (0..d).map(|c| x0.iter().map(|v| v[c]).sum::<f64>() / n as f64).collect();
            let mut rng = Stream::for_role(key, Role::CentralizedNoise, 0);
            let noise = cfg.noise().centralized(n);
            let traj = centralized_baseline(&setup.suite, &noise, cfg.faults.l_u, cfg.horizon, cfg.k0, &start, &mut rng)?;
            Some(traj.iter().map(|x| squared_distance(x, z_star)).collect())
        } else {
            None
        };
        Ok((RunSeries { run, run_key: key, e_dist, e_c }, report))
    };
    inner().map_err(|e| Error::RunFailed { run, seed: key, source: Box::new(e) })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub series: MetricSeries,
    pub batches: Vec<BatchSummary>,
    pub reports: Vec<VerificationReport>,
    pub setup: Setup,
}

/// Runs batch by batch (runs inside a batch in parallel), hands every raw
/// series to `on_run` in run order, and keeps only window-averaged batch
/// summaries in memory.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, mut on_run: F) -> Result<ExperimentOutput>
where
    F: FnMut(&RunSeries) -> Result<()>,
{
    cfg.validate()?;
    let setup = prepare(cfg)?;
    let mut batches = Vec::new();
    let mut reports = Vec::new();
    let mut start = 0;
    while start < cfg.runs {
        let end = (start + cfg.batch_size).min(cfg.runs);
        let results: Vec<(RunSeries, Option<VerificationReport>)> =
            (start..end).into_par_iter().map(|r| run_single(cfg, &setup, r)).collect::<Result<_>>()?;
        let mut raw = Vec::with_capacity(results.len());
        for (series, report) in results {
            on_run(&series)?;
            raw.push(series);
            reports.extend(report);
        }
        batches.push(summarize_batch(&raw, WINDOW));
        start = end;
    }
    let series = combine_batches(&batches, cfg.horizon + 1, WINDOW);
    Ok(ExperimentOutput { series, batches, reports, setup })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, |_| Ok(()))
}

/// Plain averaging runs: mean over runs of `max_i ‖z_i(k) − x̄(0)‖_∞`.
#[derive(Debug, Clone)]
pub struct AveragingOutput {
    pub max_error: Vec<f64>,
    pub reports: Vec<VerificationReport>,
}

pub fn run_averaging(cfg: &ExperimentConfig) -> Result<AveragingOutput> {
    cfg.validate()?;
    let topology = cfg.build_topology()?;
    let d = cfg.dim();
    let per_run: Vec<(Vec<f64>, Option<VerificationReport>)> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let key = run_key(cfg.seed, r);
            let inner = || -> Result<(Vec<f64>, Option<VerificationReport>)> {
                let x0 = cfg.initial_values(d, key)?;
                let mean: Vec<f64> = (0..d).map(|c| x0.iter().map(|v| v[c]).sum::<f64>() / x0.len() as f64).collect();
                let options = RunOptions { trace: cfg.verify, mask: cfg.mask, ..Default::default() };
                let run = run_raps(&topology, cfg.faults, &x0, cfg.horizon, key, options)?;
                let err = (0..run.trajectory.slots()).map(|k| run.trajectory.max_deviation(k, &mean)).collect();
                let report = match &run.trace {
                    Some(t) => {
                        let mut rep = cross_validate(t, false)?;
                        rep.label = format!("run {r}");
                        Some(rep)
                    }
                    None => None,
                };
                Ok((err, report))
            };
            inner().map_err(|e| Error::RunFailed { run: r, seed: key, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = per_run.iter().map(|(e, _)| e.as_slice()).collect();
    let max_error = super::aggregate::mean_series(&refs);
    let reports = per_run.into_iter().filter_map(|(_, r)| r).collect();
    Ok(AveragingOutput { max_error, reports })
}
