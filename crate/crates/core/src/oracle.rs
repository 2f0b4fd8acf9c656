//! Independent verifier: replays a recorded run as `χ(k+1) = M(k)(χ(k) + Δ(k))`
//! over real nodes plus virtual nodes, and checks the replay against the
//! event simulator.
//!
//! Augmented index layout, for `n` nodes, `m` arcs and delay bound `l_d`:
//! real nodes `0..n`, then the in-transit blocks `b^l` for `l = 1..=l_d`
//! (`n + (l-1)m + a`), then the excess-mass block `c` (`n + l_d m + a`).

use std::fmt;

use crate::error::{Error, Result};
use crate::faultnet::{ScheduleRealization, SendOutcome};
use crate::graph::Topology;
use crate::objectives::ObjectiveSuite;
use crate::raps::StateTrace;
use crate::rasgp::StepSizeLedger;

/// Residual tolerance relative to `1 + ‖x(0)‖₁`.
pub const RELATIVE_TOLERANCE: f64 = 1e-9;
/// Column sums and entry floors are exact up to this.
pub const MATRIX_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub l_d: usize,
}

impl Layout {
    pub fn new(topology: &Topology, l_d: u32) -> Self {
        Layout { n: topology.n(), m: topology.arc_count(), l_d: l_d as usize }
    }

    /// `n + m'` with `m' = (l_d + 1) m`.
    pub fn size(&self) -> usize {
        self.n + (self.l_d + 1) * self.m
    }

    pub fn transit(&self, arc: usize, l: usize) -> usize {
        debug_assert!((1..=self.l_d).contains(&l));
        self.n + (l - 1) * self.m + arc
    }

    pub fn excess(&self, arc: usize) -> usize {
        self.n + self.l_d * self.m + arc
    }
}

/// Wake indicators and, per arc, the effective delays `l` with
/// `τ_ij^l(k) = 1`. A consistent schedule has at most one per arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotIndicators {
    pub wake: Vec<bool>,
    pub tau: Vec<Vec<u32>>,
}

/// Reconstructs the indicators for slots `0..horizon`.
///
/// A delivered message counts only if the receiver would accept it: among
/// messages on one arc processed at the same slot only the newest is
/// applied, and a timestamp not above the last accepted one (or the initial
/// timestamp) is discarded. Everything else is treated as lost.
pub fn indicators(
    schedule: &ScheduleRealization,
    l_d: u32,
    initial_timestamp: i64,
    horizon: usize,
) -> Result<Vec<SlotIndicators>> {
    let topo = schedule.topology();
    if schedule.len() < horizon {
        return Err(Error::InconsistentSchedule {
            slot: schedule.len() as u64,
            reason: format!("schedule shorter than horizon {horizon}"),
        });
    }
    let mut out: Vec<SlotIndicators> = schedule.slots[..horizon]
        .iter()
        .map(|s| SlotIndicators { wake: s.wake.clone(), tau: vec![Vec::new(); topo.arc_count()] })
        .collect();
    for a in 0..topo.arc_count() {
        let to = topo.arc(a).to;
        // (processing slot, send slot)
        let mut deliveries = Vec::new();
        for k in 0..horizon {
            if let SendOutcome::Delivered { arrival } = schedule.slots[k].sends[a] {
                let p = schedule.processing_slot(to, arrival).ok_or_else(|| Error::InconsistentSchedule {
                    slot: k as u64,
                    reason: format!("message on arc {} has no processing slot in the record", topo.arc(a)),
                })?;
                deliveries.push((p, k as u64));
            }
        }
        deliveries.sort_unstable();
        let mut last_accepted = initial_timestamp;
        let mut idx = 0;
        while idx < deliveries.len() {
            let p = deliveries[idx].0;
            let mut newest = deliveries[idx].1;
            while idx < deliveries.len() && deliveries[idx].0 == p {
                newest = newest.max(deliveries[idx].1);
                idx += 1;
            }
            if newest as i64 > last_accepted {
                last_accepted = newest as i64;
                let l = p - newest;
                if l == 0 || l > u64::from(l_d) {
                    return Err(Error::InconsistentSchedule {
                        slot: newest,
                        reason: format!("effective delay {l} outside 1..={l_d} on arc {}", topo.arc(a)),
                    });
                }
                out[newest as usize].tau[a].push(l as u32);
            }
        }
    }
    Ok(out)
}

/// First slot violating the delay exclusions: a positive indicator at
/// `(k, l)` forbids later sends from overtaking it and earlier sends from
/// landing at or after it.
pub fn check_delay_exclusions(ind: &[SlotIndicators], l_d: u32) -> Option<u64> {
    let l_d = l_d as usize;
    let arcs = ind.first().map_or(0, |s| s.tau.len());
    for k in 0..ind.len() {
        for a in 0..arcs {
            let ls = &ind[k].tau[a];
            if ls.len() > 1 {
                return Some(k as u64);
            }
            let Some(&l) = ls.first() else { continue };
            let l = l as usize;
            for t in 1..=l {
                for s in 1..=l.saturating_sub(t) {
                    if ind.get(k + t).is_some_and(|x| x.tau[a].contains(&(s as u32))) {
                        return Some(k as u64);
                    }
                }
            }
            for t in 1..=l_d.saturating_sub(l) {
                if t > k {
                    break;
                }
                for s in l + t..=l_d {
                    if ind.get(k - t).is_some_and(|x| x.tau[a].contains(&(s as u32))) {
                        return Some(k as u64);
                    }
                }
            }
        }
    }
    None
}

/// Sparse column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    dim: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl MassMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[c]..self.col_ptr[c + 1];
        self.rows[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.column(col).filter(|&(r, _)| r == row).map(|(_, v)| v).sum()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|c| self.column(c).all(|(r, v)| r == c && v == 1.0))
    }

    /// `out = M v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, &vc) in v.iter().enumerate() {
            if vc == 0.0 {
                continue;
            }
            for (r, w) in self.column(c) {
                out[r] += w * vc;
            }
        }
    }

    pub fn max_column_sum_error(&self) -> f64 {
        (0..self.dim).map(|c| (self.column(c).map(|(_, v)| v).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_positive_entry(&self) -> f64 {
        self.vals.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min)
    }
}

struct ColumnBuilder {
    dim: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl ColumnBuilder {
    fn new(dim: usize) -> Self {
        ColumnBuilder { dim, col_ptr: vec![0], rows: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, row: usize, val: f64) {
        self.rows.push(row);
        self.vals.push(val);
    }

    fn end_column(&mut self) {
        self.col_ptr.push(self.rows.len());
    }

    fn finish(self) -> MassMatrix {
        debug_assert_eq!(self.col_ptr.len(), self.dim + 1);
        MassMatrix { dim: self.dim, col_ptr: self.col_ptr, rows: self.rows, vals: self.vals }
    }
}

/// `M(k)` for one slot.
pub fn build_mass_matrix(topology: &Topology, layout: &Layout, ind: &SlotIndicators, slot: u64) -> Result<MassMatrix> {
    let (n, m) = (layout.n, layout.m);
    for a in 0..m {
        if ind.tau[a].len() > 1 {
            return Err(Error::InconsistentSchedule {
                slot,
                reason: format!("arc {} has {} positive delay indicators", topology.arc(a), ind.tau[a].len()),
            });
        }
        if let Some(&l) = ind.tau[a].first() {
            if !ind.wake[topology.arc(a).from] {
                return Err(Error::InconsistentSchedule { slot, reason: format!("send on arc {} from a sleeping node", topology.arc(a)) });
            }
            if l == 0 || l as usize > layout.l_d {
                return Err(Error::InconsistentSchedule { slot, reason: format!("delay {l} on arc {}", topology.arc(a)) });
            }
        }
    }
    let delay = |a: usize| ind.tau[a].first().map(|&l| l as usize);
    let mut b = ColumnBuilder::new(layout.size());
    for i in 0..n {
        if ind.wake[i] {
            let share = 1.0 / (topology.out_degree(i) as f64 + 1.0);
            b.push(i, share);
            for &a in topology.out_arcs(i) {
                match delay(a) {
                    Some(l) => b.push(layout.transit(a, l), share),
                    None => b.push(layout.excess(a), share),
                }
            }
        } else {
            b.push(i, 1.0);
        }
        b.end_column();
    }
    for l in 1..=layout.l_d {
        for a in 0..m {
            if l == 1 {
                b.push(topology.arc(a).to, 1.0);
            } else {
                b.push(layout.transit(a, l - 1), 1.0);
            }
            b.end_column();
        }
    }
    for a in 0..m {
        match delay(a) {
            Some(l) => b.push(layout.transit(a, l), 1.0),
            None => b.push(layout.excess(a), 1.0),
        }
        b.end_column();
    }
    Ok(b.finish())
}

/// `χ` (one vector per coordinate) and `ψ` over the augmented nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub layout: Layout,
    pub chi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
}

impl AugmentedSystem {
    pub fn new(layout: Layout, x0: &[Vec<f64>]) -> Self {
        let d = x0[0].len();
        let size = layout.size();
        let mut chi = vec![vec![0.0; size]; d];
        for (i, xi) in x0.iter().enumerate() {
            for c in 0..d {
                chi[c][i] = xi[c];
            }
        }
        let mut psi = vec![0.0; size];
        psi[..layout.n].iter_mut().for_each(|p| *p = 1.0);
        AugmentedSystem { layout, chi, psi }
    }

    pub fn inject(&mut self, node: usize, delta: &[f64]) {
        for (c, dv) in delta.iter().enumerate() {
            self.chi[c][node] += dv;
        }
    }

    pub fn step(&mut self, m: &MassMatrix) {
        let mut buf = vec![0.0; self.psi.len()];
        for col in self.chi.iter_mut() {
            m.apply(col, &mut buf);
            std::mem::swap(col, &mut buf);
        }
        m.apply(&self.psi, &mut buf);
        std::mem::swap(&mut self.psi, &mut buf);
    }

    /// `I_k = {h : ψ_h > 0}`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.psi.len()).filter(|&h| self.psi[h] > 0.0).collect()
    }

    pub fn chi_sum(&self) -> Vec<f64> {
        self.chi.iter().map(|c| c.iter().sum()).collect()
    }

    pub fn psi_sum(&self) -> f64 {
        self.psi.iter().sum()
    }
}

/// `step_augmented`: one multiplication by `M`.
pub fn step_augmented(mut system: AugmentedSystem, m: &MassMatrix) -> AugmentedSystem {
    system.step(m);
    system
}

/// Every augmented state of a replayed run.
#[derive(Debug, Clone)]
pub struct Replay {
    pub layout: Layout,
    pub indicators: Vec<SlotIndicators>,
    /// `horizon + 1` states.
    pub states: Vec<AugmentedSystem>,
    /// Empty unless requested.
    pub matrices: Vec<MassMatrix>,
}

impl Replay {
    pub fn chi_sums(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(AugmentedSystem::chi_sum).collect()
    }
}

pub fn replay(trace: &StateTrace, keep_matrices: bool) -> Result<Replay> {
    let topo = trace.topology();
    let layout = Layout::new(topo, trace.bounds.l_d());
    let horizon = trace.horizon();
    let ind = indicators(&trace.schedule, trace.bounds.l_d(), trace.initial_timestamp, horizon)?;
    let mut sys = AugmentedSystem::new(layout, &trace.initial_values());
    let mut states = Vec::with_capacity(horizon + 1);
    let mut matrices = Vec::new();
    states.push(sys.clone());
    for (k, slot) in ind.iter().enumerate() {
        let m = build_mass_matrix(topo, &layout, slot, k as u64)?;
        for (node, delta) in &trace.injections[k] {
            sys.inject(*node, delta);
        }
        sys.step(&m);
        states.push(sys.clone());
        if keep_matrices {
            matrices.push(m);
        }
    }
    Ok(Replay { layout, indicators: ind, states, matrices })
}

/// One verified identity: worst residual and first slot above tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub max_residual: f64,
    pub first_failure: Option<u64>,
}

impl IdentityCheck {
    fn new(name: &'static str) -> Self {
        IdentityCheck { name, max_residual: 0.0, first_failure: None }
    }

    fn observe(&mut self, slot: u64, residual: f64, tolerance: f64) {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        self.max_residual = self.max_residual.max(residual);
        if residual > tolerance && self.first_failure.is_none() {
            self.first_failure = Some(slot);
        }
    }

    fn flag(&mut self, slot: Option<u64>) {
        if self.first_failure.is_none() {
            self.first_failure = slot;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub label: String,
    pub checks: Vec<IdentityCheck>,
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.first_failure.is_none())
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The earliest failure as an error.
    pub fn into_result(self) -> Result<Self> {
        let worst = self
            .checks
            .iter()
            .filter_map(|c| c.first_failure.map(|s| (s, c)))
            .min_by_key(|(s, _)| *s);
        match worst {
            None => Ok(self),
            Some((slot, c)) => Err(Error::Verification { identity: c.name.to_string(), slot, residual: c.max_residual }),
        }
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let prefix = if self.label.is_empty() { String::new() } else { format!("{} ", self.label) };
            match c.first_failure {
                None => writeln!(f, "{prefix}{} {:.3e} ok", c.name, c.max_residual)?,
                Some(s) => writeln!(f, "{prefix}{} {:.3e} slot {s}", c.name, c.max_residual)?,
            }
        }
        Ok(())
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Replays `trace` and checks every identity relating the event simulator
/// to the linear system. `positive_rows` additionally checks that every
/// product of `n·L_s` consecutive matrices has strictly positive real-node
/// rows (costly; meant for n ≤ 5 and static graphs).
pub fn cross_validate(trace: &StateTrace, positive_rows: bool) -> Result<VerificationReport> {
    let topo = trace.topology();
    let rep = replay(trace, true)?;
    let lay = rep.layout;
    let (n, m, d) = (lay.n, lay.m, trace.dim);
    let horizon = trace.horizon();

    let injected_l1: f64 = trace.injections.iter().flatten().map(|(_, v)| l1(v)).sum();
    let tol_x = RELATIVE_TOLERANCE * (1.0 + l1(&trace.snapshots[0].x) + injected_l1);
    let tol_y = RELATIVE_TOLERANCE * (1.0 + n as f64);
    let bound = contraction_bound(n, trace.bounds.l_s());
    let psi_floor = if bound.vacuous { 0.0 } else { n as f64 * bound.alpha };

    let mut state_x = IdentityCheck::new("state_x");
    let mut state_y = IdentityCheck::new("state_y");
    let mut rho_inc = IdentityCheck::new("rho_increment");
    let mut ledger = IdentityCheck::new("mass_ledger");
    let mut sum_chi = IdentityCheck::new("sum_chi");
    let mut sum_psi = IdentityCheck::new("sum_psi");
    let mut col_sums = IdentityCheck::new("column_sums");
    let mut floor = IdentityCheck::new("entry_floor");
    let mut diag = IdentityCheck::new("diagonal");
    let mut psi_bounds = IdentityCheck::new("psi_bounds");
    let mut support = IdentityCheck::new("zero_mass_support");
    let mut exclusions = IdentityCheck::new("delay_exclusion");

    let mut expected_sum: Vec<f64> = (0..d).map(|c| (0..n).map(|i| trace.snapshots[0].x[i * d + c]).sum()).collect();
    let entry_min = 1.0 / (topo.max_out_degree() as f64 + 1.0);

    for k in 0..=horizon {
        let slot = k as u64;
        let snap = &trace.snapshots[k];
        let st = &rep.states[k];
        for i in 0..n {
            for c in 0..d {
                state_x.observe(slot, (st.chi[c][i] - snap.x[i * d + c]).abs(), tol_x);
            }
            state_y.observe(slot, (st.psi[i] - snap.y[i]).abs(), tol_y);
        }
        for a in 0..m {
            let from = topo.arc(a).from;
            for c in 0..d {
                let transit: f64 = (1..=lay.l_d).map(|l| st.chi[c][lay.transit(a, l)]).sum();
                let r = st.chi[c][lay.excess(a)] + snap.rho_x[a * d + c] + transit - snap.phi_x[from * d + c];
                ledger.observe(slot, r.abs(), tol_x);
            }
            let transit: f64 = (1..=lay.l_d).map(|l| st.psi[lay.transit(a, l)]).sum();
            let r = st.psi[lay.excess(a)] + snap.rho_y[a] + transit - snap.phi_y[from];
            ledger.observe(slot, r.abs(), tol_y);
        }
        for (c, s) in st.chi_sum().iter().enumerate() {
            sum_chi.observe(slot, (s - expected_sum[c]).abs(), tol_x);
        }
        sum_psi.observe(slot, (st.psi_sum() - n as f64).abs(), RELATIVE_TOLERANCE);
        for (h, &p) in st.psi.iter().enumerate() {
            let lo = if h < n { psi_floor } else { 0.0 };
            let bad_low = if h < n && bound.vacuous { p <= 0.0 } else { p < lo };
            let excess = if bad_low { (lo - p).max(f64::MIN_POSITIVE) } else { (p - n as f64).max(0.0) };
            psi_bounds.observe(slot, excess, tol_y);
            if p == 0.0 {
                for col in &st.chi {
                    support.observe(slot, col[h].abs(), 0.0);
                }
            }
        }
        if k < horizon {
            let next = &trace.snapshots[k + 1];
            for a in 0..m {
                for c in 0..d {
                    let inc = next.rho_x[a * d + c] - snap.rho_x[a * d + c];
                    rho_inc.observe(slot, (inc - st.chi[c][lay.transit(a, 1)]).abs(), tol_x);
                }
                let inc = next.rho_y[a] - snap.rho_y[a];
                rho_inc.observe(slot, (inc - st.psi[lay.transit(a, 1)]).abs(), tol_y);
            }
            let mm = &rep.matrices[k];
            col_sums.observe(slot, mm.max_column_sum_error(), MATRIX_TOLERANCE);
            floor.observe(slot, (entry_min - mm.min_positive_entry()).max(0.0), MATRIX_TOLERANCE);
            let worst_diag = (0..n).map(|i| mm.entry(i, i)).fold(f64::INFINITY, f64::min);
            diag.observe(slot, if worst_diag > 0.0 { 0.0 } else { 1.0 }, 0.0);
            for (_, delta) in &trace.injections[k] {
                for (c, v) in delta.iter().enumerate() {
                    expected_sum[c] += v;
                }
            }
        }
    }
    exclusions.flag(check_delay_exclusions(&rep.indicators, trace.bounds.l_d()));

    let mut checks =
        vec![state_x, state_y, rho_inc, ledger, sum_chi, sum_psi, col_sums, floor, diag, psi_bounds, support, exclusions];
    if positive_rows {
        let mut pos = IdentityCheck::new("positive_rows");
        let window = n * trace.bounds.l_s() as usize;
        // Sends at or before the initial timestamp are discarded by
        // construction, an extra loss the fault bounds do not cover.
        let from = (trace.initial_timestamp + 1).max(0) as usize;
        pos.flag(first_nonpositive_window(&rep.matrices, n, window, from).map(|s| s as u64));
        checks.push(pos);
    }
    Ok(VerificationReport { label: String::new(), checks })
}

/// First window start `s ≥ from` such that `M(s+w-1)…M(s)` has a zero
/// entry in one of its first `n` rows.
pub fn first_nonpositive_window(matrices: &[MassMatrix], n: usize, window: usize, from: usize) -> Option<usize> {
    if window == 0 || matrices.len() < window + from {
        return None;
    }
    let dim = matrices[0].dim();
    // Backwards: columns that can reach row `h` within the window.
    let mut reach = vec![false; dim];
    let mut next = vec![false; dim];
    for start in from..=matrices.len() - window {
        for h in 0..n {
            reach.iter_mut().for_each(|r| *r = false);
            reach[h] = true;
            for t in (start..start + window).rev() {
                let mm = &matrices[t];
                for (c, nx) in next.iter_mut().enumerate() {
                    *nx = mm.column(c).any(|(r, v)| v > 0.0 && reach[r]);
                }
                std::mem::swap(&mut reach, &mut next);
            }
            if !reach.iter().all(|&r| r) {
                return Some(start);
            }
        }
    }
    None
}

/// Constants of the geometric averaging bound, kept in log space because
/// `α = n^{-n L_s}` underflows almost immediately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionBound {
    pub n: usize,
    pub l_s: u32,
    pub log_alpha: f64,
    /// Zero once it underflows.
    pub alpha: f64,
    /// `n α⁶`.
    pub q: f64,
    pub delta: f64,
    pub log_lambda: f64,
    /// `λ` as a double; equals 1.0 whenever `1 - λ` is below machine epsilon.
    pub lambda: f64,
    /// `1 - λ`, accurate even when `λ` rounds to 1.
    pub lambda_gap: f64,
    /// `n α⁶` underflows: no usable contraction.
    pub vacuous: bool,
}

pub fn contraction_bound(n: usize, l_s: u32) -> ContractionBound {
    let nf = n as f64;
    let nls = nf * f64::from(l_s);
    let log_alpha = -nls * nf.ln();
    let log_q = nf.ln() + 6.0 * log_alpha;
    let vacuous = log_q < f64::MIN_POSITIVE.ln();
    let (q, delta, log_lambda) = if vacuous {
        (0.0, 1.0, 0.0)
    } else {
        let q = log_q.exp();
        (q, 1.0 / (1.0 - q), (-q).ln_1p() / (2.0 * nls))
    };
    ContractionBound {
        n,
        l_s,
        log_alpha,
        alpha: log_alpha.exp(),
        q,
        delta,
        log_lambda,
        lambda: log_lambda.exp(),
        lambda_gap: -log_lambda.exp_m1(),
        vacuous,
    }
}

impl ContractionBound {
    /// `δ λ^k ‖x(0)‖₁`.
    pub fn envelope(&self, k: usize, x0_l1: f64) -> f64 {
        self.delta * (k as f64 * self.log_lambda).exp() * x0_l1
    }

    /// Tracking bound for perturbed averaging:
    /// `δλ^k‖x(0)‖₁ + Σ_{t=1}^{k-1} δλ^{k-t}‖Δ(t)‖₁`, with `delta_l1[t]`
    /// the perturbation mass injected at slot `t`.
    pub fn tracking_bound(&self, k: usize, x0_l1: f64, delta_l1: &[f64]) -> f64 {
        let tail: f64 = (1..k)
            .map(|t| self.delta * ((k - t) as f64 * self.log_lambda).exp() * delta_l1.get(t).copied().unwrap_or(0.0))
            .sum();
        self.envelope(k, x0_l1) + tail
    }
}

/// `ln max_i ‖z_i(k) − mean‖_∞` for an unperturbed trace, slots `0..=K`.
///
/// Computed by evolving the deviation `e = χ − mean·ψ` (which satisfies
/// `e(k+1) = M(k)e(k)` and `z_i − mean = e_i/ψ_i`) with per-step
/// renormalization and projection back onto zero total mass, so the series
/// keeps decaying far below the rounding floor that the simulator's own `z`
/// hits.
pub fn log_consensus_error(trace: &StateTrace) -> Result<Vec<f64>> {
    if trace.injections.iter().any(|s| !s.is_empty()) {
        return Err(Error::config("log_consensus_error needs an unperturbed trace"));
    }
    let rep = replay(trace, true)?;
    let n = rep.layout.n;
    let d = trace.dim;
    let x0 = trace.initial_values();
    let mut e: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mean = x0.iter().map(|x| x[c]).sum::<f64>() / n as f64;
            let mut v = rep.states[0].chi[c].clone();
            for (h, val) in v.iter_mut().enumerate() {
                *val -= mean * rep.states[0].psi[h];
            }
            v
        })
        .collect();
    let mut log_scale = 0.0;
    let mut out = Vec::with_capacity(rep.states.len());
    let mut buf = vec![0.0; rep.layout.size()];
    for k in 0..rep.states.len() {
        let psi = &rep.states[k].psi;
        let worst = e.iter().flat_map(|col| (0..n).map(move |i| col[i].abs() / psi[i])).fold(0.0, f64::max);
        out.push(log_scale + worst.ln());
        if k == rep.matrices.len() {
            break;
        }
        let norm = e.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        for col in e.iter_mut() {
            if norm > 0.0 {
                col.iter_mut().for_each(|v| *v /= norm);
            }
            rep.matrices[k].apply(col, &mut buf);
            std::mem::swap(col, &mut buf);
            // The exact deviation sums to zero; drop the rounding drift
            // along ψ, which would otherwise never decay.
            let next_psi = &rep.states[k + 1].psi;
            let drift = col.iter().sum::<f64>() / next_psi.iter().sum::<f64>();
            col.iter_mut().zip(next_psi).for_each(|(v, p)| *v -= drift * p);
        }
        if norm > 0.0 {
            log_scale += norm.ln();
        }
    }
    Ok(out)
}

/// `w̄(k)` and `‖z_i(k) − w̄(k)‖₂` per slot for an optimizer trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WbarSeries {
    pub wbar: Vec<Vec<f64>>,
    pub tracking: Vec<Vec<f64>>,
}

/// `w_i(k) = x_i(k) − (Σ_{t=κ_i(k)+1}^{k-1} α(t)) ∇f_i(z_i(k))` for real
/// nodes and `w_h = χ_h` for virtual ones; `w̄ = Σ_h w_h / n`.
pub fn wbar_diagnostic(trace: &StateTrace, objective: &ObjectiveSuite, steps: &StepSizeLedger) -> Result<WbarSeries> {
    let rep = replay(trace, false)?;
    let n = rep.layout.n;
    let d = trace.dim;
    let mut kappa = vec![trace.initial_timestamp; n];
    let mut wbar = Vec::with_capacity(rep.states.len());
    let mut tracking = Vec::with_capacity(rep.states.len());
    let mut g = vec![0.0; d];
    for (k, st) in rep.states.iter().enumerate() {
        let snap = &trace.snapshots[k];
        let mut total = st.chi_sum();
        for i in 0..n {
            let skipped: f64 = ((kappa[i] + 1).max(0) as usize..k).map(|t| steps.alpha(t as u64)).sum();
            if skipped != 0.0 {
                objective.gradient_into(i, &snap.z[i * d..(i + 1) * d], &mut g);
                for c in 0..d {
                    total[c] -= skipped * g[c];
                }
            }
        }
        let w: Vec<f64> = total.iter().map(|v| v / n as f64).collect();
        tracking.push(
            (0..n)
                .map(|i| {
                    snap.z[i * d..(i + 1) * d].iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .collect(),
        );
        wbar.push(w);
        if let Some(s) = trace.schedule.slots.get(k) {
            for i in 0..n {
                if s.wake[i] {
                    kappa[i] = k as i64;
                }
            }
        }
    }
    Ok(WbarSeries { wbar, tracking })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faultnet::{FaultBounds, ScheduleSampler};
    use crate::raps::{run_raps, RhoMutation, RunOptions};

    fn ind(wake: Vec<bool>, tau: Vec<Vec<u32>>) -> SlotIndicators {
        SlotIndicators { wake, tau }
    }

    #[test]
    fn sleeping_nodes_keep_their_mass() {
        let t = Topology::cycle(3, true).unwrap();
        let lay = Layout::new(&t, 3);
        let m = build_mass_matrix(&t, &lay, &ind(vec![false; 3], vec![vec![]; 6]), 0).unwrap();
        for i in 0..3 {
            assert_eq!(m.column(i).collect::<Vec<_>>(), vec![(i, 1.0)]);
        }
        for a in 0..6 {
            assert_eq!(m.column(lay.excess(a)).collect::<Vec<_>>(), vec![(lay.excess(a), 1.0)]);
        }
        assert!(!m.is_identity());
    }

    #[test]
    fn pair_matrix_is_stochastic_with_half_entries() {
        let t = Topology::cycle(2, true).unwrap();
        let lay = Layout::new(&t, 1);
        let m = build_mass_matrix(&t, &lay, &ind(vec![true, true], vec![vec![1], vec![1]]), 0).unwrap();
        assert_eq!(m.max_column_sum_error(), 0.0);
        assert_eq!(m.min_positive_entry(), 0.5);
        assert_eq!(m.entry(0, 0), 0.5);
        assert_eq!(m.entry(lay.transit(0, 1), 0), 0.5);
        assert_eq!(m.entry(1, lay.transit(0, 1)), 1.0);
    }

    #[test]
    fn two_indicators_on_one_arc_rejected() {
        let t = Topology::cycle(2, true).unwrap();
        let lay = Layout::new(&t, 3);
        let err = build_mass_matrix(&t, &lay, &ind(vec![true, true], vec![vec![1, 2], vec![]]), 4);
        assert!(matches!(err, Err(Error::InconsistentSchedule { slot: 4, .. })));
    }

    #[test]
    fn identity_step_is_fixed() {
        let t = Topology::cycle(2, true).unwrap();
        let lay = Layout::new(&t, 1);
        let m = build_mass_matrix(&t, &lay, &ind(vec![false; 2], vec![vec![]; 2]), 0).unwrap();
        let sys = AugmentedSystem::new(lay, &[vec![1.0], vec![3.0]]);
        assert_eq!(step_augmented(sys.clone(), &m), sys);
    }

    #[test]
    fn lossless_step_preserves_sum() {
        let t = Topology::cycle(2, true).unwrap();
        let lay = Layout::new(&t, 1);
        let m = build_mass_matrix(&t, &lay, &ind(vec![true, true], vec![vec![1], vec![1]]), 0).unwrap();
        let sys = step_augmented(AugmentedSystem::new(lay, &[vec![0.3], vec![7.1]]), &m);
        assert!((sys.chi_sum()[0] - 7.4).abs() < 1e-15);
        assert_eq!(sys.support().len(), 4);
    }

    #[test]
    fn exclusions_flag_overtaking() {
        // Send at 0 with delay 3, send at 1 with delay 1: second lands first.
        let mut s: Vec<SlotIndicators> = (0..4).map(|_| ind(vec![true], vec![vec![]])).collect();
        s[0].tau[0] = vec![3];
        assert_eq!(check_delay_exclusions(&s, 3), None);
        s[1].tau[0] = vec![1];
        assert_eq!(check_delay_exclusions(&s, 3), Some(0));
    }

    #[test]
    fn contraction_constants() {
        let b = contraction_bound(2, 2);
        assert_eq!(b.alpha, 1.0 / 16.0);
        assert!((b.q - 2.0 * 16f64.powi(-6)).abs() < 1e-20);
        assert!((b.q - 1.1920929e-7).abs() < 1e-13);
        assert!((b.delta - 1.0 - 1.19209e-7).abs() < 1e-11);
        assert!((b.lambda_gap - 1.490116e-8).abs() < 1e-13);
        assert!(b.lambda < 1.0 && !b.vacuous);
        let big = contraction_bound(50, 17);
        assert!(big.vacuous);
        assert_eq!(big.lambda, 1.0);
        let tiny = contraction_bound(3, 4);
        assert!(!tiny.vacuous && tiny.lambda_gap > 0.0);
    }

    #[test]
    fn lossless_ring_cross_validates_tightly() {
        let t = Topology::cycle(3, false).unwrap();
        let opts = RunOptions { trace: true, ..RunOptions::default() };
        let run = run_raps(&t, FaultBounds::ideal(), &[vec![1.0], vec![-2.0], vec![6.0]], 100, 3, opts).unwrap();
        let report = cross_validate(&run.trace.unwrap(), true).unwrap();
        assert!(report.is_ok(), "{report}");
        for name in ["state_x", "state_y", "rho_increment", "mass_ledger"] {
            assert!(report.get(name).unwrap().max_residual <= 1e-12, "{report}");
        }
    }

    #[test]
    fn mutant_rho_update_detected_at_its_slot() {
        let t = Topology::cycle(3, true).unwrap();
        let b = FaultBounds { l_u: 2, l_f: 1, l_del: 2, p_w: 0.7, p_f: 0.2 };
        let x0 = [vec![1.0], vec![2.0], vec![4.0]];
        let clean = run_raps(&t, b, &x0, 60, 5, RunOptions { trace: true, ..RunOptions::default() }).unwrap();
        let trace = clean.trace.unwrap();
        // Find a slot where node 1 actually accepts something.
        let target = (1..60)
            .find(|&k| trace.snapshots[k + 1].rho_y != trace.snapshots[k].rho_y && {
                t.in_arcs(1).iter().any(|&a| trace.snapshots[k + 1].rho_y[a] != trace.snapshots[k].rho_y[a])
            })
            .unwrap() as u64;
        let opts = RunOptions { trace: true, mutation: Some(RhoMutation { node: 1, slot: target }), ..RunOptions::default() };
        let mutant = run_raps(&t, b, &x0, 60, 5, opts).unwrap();
        let report = cross_validate(&mutant.trace.unwrap(), false).unwrap();
        assert_eq!(report.get("rho_increment").unwrap().first_failure, Some(target));
        assert!(report.into_result().is_err());
    }

    #[test]
    fn indicators_reject_superseded_and_initial_timestamp_messages() {
        let t = Topology::cycle(2, true).unwrap();
        let b = FaultBounds::ideal();
        let rec = ScheduleSampler::new(&t, b, 1).unwrap().record(5);
        let with_zero = indicators(&rec, 1, 0, 4).unwrap();
        assert!(with_zero[0].tau.iter().all(Vec::is_empty));
        assert!(with_zero[1].tau.iter().all(|v| v == &[1]));
        let with_minus_one = indicators(&rec, 1, -1, 4).unwrap();
        assert!(with_minus_one[0].tau.iter().all(|v| v == &[1]));
    }
}
