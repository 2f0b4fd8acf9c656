//! Verification campaign: trace many runs and cross-validate each one.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{prepare, run_key};
use crate::error::{Error, Result};
use crate::oracle::{cross_validate, IdentityCheck, VerificationReport};
use crate::raps::{run_raps, RunOptions};
use crate::rasgp::{run_rasgp, RasgpOptions};

/// Worst residual per identity across all runs, plus the failing reports.
#[derive(Debug, Clone)]
pub struct CampaignReport {
    pub runs: usize,
    pub summary: VerificationReport,
    pub failures: Vec<VerificationReport>,
}

impl CampaignReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn merge(reports: &[VerificationReport]) -> VerificationReport {
    let mut checks: Vec<IdentityCheck> = Vec::new();
    for r in reports {
        for c in &r.checks {
            match checks.iter_mut().find(|m| m.name == c.name) {
                Some(m) => {
                    m.max_residual = m.max_residual.max(c.max_residual);
                    m.first_failure = m.first_failure.or(c.first_failure);
                }
                None => checks.push(c.clone()),
            }
        }
    }
    VerificationReport { label: String::new(), checks }
}

/// Averaging runs always; optimizer runs too when the config has an
/// objective. Small graphs (n ≤ 5, no mask) also get the positive-rows check.
pub fn verification_campaign(cfg: &ExperimentConfig) -> Result<CampaignReport> {
    cfg.validate()?;
    let topology = cfg.build_topology()?;
    let positive_rows = topology.n() <= 5 && cfg.mask.is_none();
    let setup = if cfg.objective.is_some() { Some(prepare(cfg)?) } else { None };
    let d = cfg.dim();
    let reports: Vec<Vec<VerificationReport>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let key = run_key(cfg.seed, r);
            let inner = || -> Result<Vec<VerificationReport>> {
                let x0 = cfg.initial_values(d, key)?;
                let mut out = Vec::new();
                let options = RunOptions { trace: true, mask: cfg.mask, ..Default::default() };
                let run = run_raps(&topology, cfg.faults, &x0, cfg.horizon, key, options)?;
                let mut rep = cross_validate(run.trace.as_ref().expect("traced"), positive_rows)?;
                rep.label = format!("raps run {r}");
                out.push(rep);
                if let Some(s) = &setup {
                    let options = RasgpOptions { trace: true, mask: cfg.mask, ..Default::default() };
                    let run =
                        run_rasgp(&s.topology, cfg.faults, &s.suite, cfg.noise(), &x0, cfg.horizon, cfg.k0, key, options, |_, _| {})?;
                    let mut rep = cross_validate(run.trace.as_ref().expect("traced"), false)?;
                    rep.label = format!("rasgp run {r}");
                    out.push(rep);
                }
                Ok(out)
            };
            inner().map_err(|e| Error::RunFailed { run: r, seed: key, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let all: Vec<VerificationReport> = reports.into_iter().flatten().collect();
    let failures = all.iter().filter(|r| !r.is_ok()).cloned().collect();
    Ok(CampaignReport { runs: cfg.runs, summary: merge(&all), failures })
}
