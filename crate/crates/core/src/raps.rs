//! Robust asynchronous push-sum.
//!
//! Each node keeps running sums of the mass it has ever sent (`phi`) and,
//! per in-neighbour, of the mass it has ever taken in (`rho`). Differencing
//! the running sums recovers everything sent since the last message that got
//! through, which is what makes the scheme immune to losses.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::faultnet::{
    Channel, FaultBounds, InFlightMessage, MaskPlan, ScheduleRealization, ScheduleSampler, SendOutcome, SlotSchedule,
};
use crate::graph::Topology;

/// What a waking node broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub phi_x: Vec<f64>,
    pub phi_y: f64,
    pub kappa: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushSumNodeState {
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_y: f64,
    pub kappa: i64,
    pub out_degree: usize,
    /// Arc ids of incoming links; `rho_*` and `kappa_in` are indexed alike.
    in_arcs: Vec<usize>,
    pub rho_x: Vec<Vec<f64>>,
    pub rho_y: Vec<f64>,
    pub kappa_in: Vec<i64>,
}

impl PushSumNodeState {
    /// Fresh state: `y = 1`, running sums zero, `z = x0`.
    pub fn new(x0: Vec<f64>, out_degree: usize, in_arcs: Vec<usize>, initial_timestamp: i64) -> Self {
        let d = x0.len();
        let k = in_arcs.len();
        PushSumNodeState {
            z: x0.clone(),
            x: x0,
            y: 1.0,
            phi_x: vec![0.0; d],
            phi_y: 0.0,
            kappa: initial_timestamp,
            out_degree,
            in_arcs,
            rho_x: vec![vec![0.0; d]; k],
            rho_y: vec![0.0; k],
            kappa_in: vec![initial_timestamp; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn in_arcs(&self) -> &[usize] {
        &self.in_arcs
    }

    /// Keep one share, fold the rest into the running sums, and return the
    /// broadcast.
    pub fn wake_and_push(&mut self, slot: u64) -> Payload {
        self.kappa = slot as i64;
        let share = 1.0 / (self.out_degree as f64 + 1.0);
        for (p, x) in self.phi_x.iter_mut().zip(self.x.iter_mut()) {
            *p += *x * share;
            *x *= share;
        }
        self.phi_y += self.y * share;
        self.y *= share;
        Payload { phi_x: self.phi_x.clone(), phi_y: self.phi_y, kappa: self.kappa }
    }

    /// Applies the freshest message per in-neighbour and recomputes `z`.
    pub fn process_inbox(&mut self, node: usize, slot: u64, inbox: &[InFlightMessage<Payload>]) -> Result<()> {
        self.process(node, slot, inbox, false).map(|_| ())
    }

    /// Returns whether any message was applied.
    fn process(&mut self, node: usize, slot: u64, inbox: &[InFlightMessage<Payload>], skip_rho: bool) -> Result<bool> {
        let mut best: Vec<Option<&Payload>> = vec![None; self.in_arcs.len()];
        for msg in inbox {
            let Ok(j) = self.in_arcs.binary_search(&msg.arc) else {
                return Err(Error::ProtocolViolation {
                    node,
                    slot,
                    reason: format!("message on arc {} which does not enter this node", msg.arc),
                });
            };
            let p = &msg.payload;
            let floor = best[j].map_or(self.kappa_in[j], |b| b.kappa);
            if p.kappa > floor {
                best[j] = Some(p);
            }
        }
        let mut applied = false;
        for (j, p) in best.into_iter().enumerate() {
            let Some(p) = p else { continue };
            applied = true;
            for c in 0..self.x.len() {
                self.x[c] += p.phi_x[c] - self.rho_x[j][c];
            }
            self.y += p.phi_y - self.rho_y[j];
            if !skip_rho {
                self.rho_x[j].copy_from_slice(&p.phi_x);
                self.rho_y[j] = p.phi_y;
            }
            self.kappa_in[j] = p.kappa;
        }
        if !(self.y > 0.0 && self.y.is_finite()) {
            return Err(Error::ProtocolViolation { node, slot, reason: format!("weight y = {}", self.y) });
        }
        for (z, x) in self.z.iter_mut().zip(&self.x) {
            *z = x / self.y;
        }
        Ok(applied)
    }
}

/// Skip the `rho` bookkeeping of `node` the first time it applies a message
/// at or after `slot`. Exists only to check that the verifier notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhoMutation {
    pub node: usize,
    pub slot: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record the full state trace and schedule for the verifier.
    pub trace: bool,
    pub mask: Option<MaskPlan>,
    /// Initial `kappa` and `kappa_in`: 0 for plain averaging, -1 for the
    /// optimizer so that slot-0 messages are accepted.
    pub initial_timestamp: i64,
    pub mutation: Option<RhoMutation>,
}

/// All node and arc variables at the start of one slot; vectors are flat
/// `[node * d + coord]` / `[arc * d + coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_y: Vec<f64>,
    /// Receiver-side running sums, per arc.
    pub rho_x: Vec<f64>,
    pub rho_y: Vec<f64>,
}

/// Everything the verifier needs to replay a run.
#[derive(Debug, Clone)]
pub struct StateTrace {
    pub dim: usize,
    pub bounds: FaultBounds,
    pub initial_timestamp: i64,
    /// `horizon + 1` snapshots.
    pub snapshots: Vec<Snapshot>,
    /// At least `horizon + l_d` slots so every send has a processing slot.
    pub schedule: ScheduleRealization,
    /// Per slot: vectors added to `x_i` just before node `i` pushed.
    pub injections: Vec<Vec<(usize, Vec<f64>)>>,
}

impl StateTrace {
    pub fn horizon(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn topology(&self) -> &Topology {
        self.schedule.topology()
    }

    pub fn initial_values(&self) -> Vec<Vec<f64>> {
        self.snapshots[0].x.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// CSV with columns `slot,kind,id,coord,x,y`: `node` rows carry
    /// `(x, y)`, `phi` rows `(phi_x, phi_y)`, `rho` rows (id `i-j`)
    /// `(rho_x, rho_y)`.
    pub fn to_csv(&self) -> String {
        let d = self.dim;
        let topo = self.topology();
        let mut out = String::from("slot,kind,id,coord,x,y\n");
        for (k, s) in self.snapshots.iter().enumerate() {
            for i in 0..topo.n() {
                for c in 0..d {
                    let _ = writeln!(out, "{k},node,{i},{c},{:.16e},{:.16e}", s.x[i * d + c], s.y[i]);
                    let _ = writeln!(out, "{k},phi,{i},{c},{:.16e},{:.16e}", s.phi_x[i * d + c], s.phi_y[i]);
                }
            }
            for (a, arc) in topo.arcs().iter().enumerate() {
                for c in 0..d {
                    let _ = writeln!(out, "{k},rho,{arc},{c},{:.16e},{:.16e}", s.rho_x[a * d + c], s.rho_y[a]);
                }
            }
        }
        out
    }
}

/// `z` of every node at the start of every slot `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn new(n: usize, dim: usize) -> Self {
        Trajectory { n, dim, data: Vec::new() }
    }

    pub(crate) fn push(&mut self, nodes: &[PushSumNodeState]) {
        for s in nodes {
            self.data.extend_from_slice(&s.z);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slots(&self) -> usize {
        self.data.len() / (self.n * self.dim)
    }

    pub fn z(&self, slot: usize, node: usize) -> &[f64] {
        let start = (slot * self.n + node) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// `max_i ‖z_i(k) - target‖_∞`.
    pub fn max_deviation(&self, slot: usize, target: &[f64]) -> f64 {
        (0..self.n)
            .flat_map(|i| self.z(slot, i).iter().zip(target).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

pub struct RapsRun {
    pub trajectory: Trajectory,
    pub trace: Option<StateTrace>,
}

pub struct PerturbedRun {
    pub trajectory: Trajectory,
    /// `1ᵀχ(k)/n` per slot, from the verifier's replay.
    pub augmented_mean: Vec<Vec<f64>>,
    pub trace: StateTrace,
}

/// Slot-by-slot driver shared by averaging and optimization.
pub(crate) struct Engine {
    topology: Topology,
    sampler: ScheduleSampler,
    pub(crate) nodes: Vec<PushSumNodeState>,
    channel: Channel<Payload>,
    options: RunOptions,
    slot: u64,
    recorder: Option<Recorder>,
    mutation_pending: bool,
}

struct Recorder {
    snapshots: Vec<Snapshot>,
    schedule: Vec<SlotSchedule>,
    injections: Vec<Vec<(usize, Vec<f64>)>>,
}

impl Engine {
    pub(crate) fn new(
        topology: &Topology,
        bounds: FaultBounds,
        x0: &[Vec<f64>],
        run_key: u64,
        options: RunOptions,
    ) -> Result<Self> {
        let n = topology.n();
        if x0.len() != n {
            return Err(Error::config(format!("{} initial vectors for {n} nodes", x0.len())));
        }
        let d = x0[0].len();
        if d == 0 || x0.iter().any(|v| v.len() != d) {
            return Err(Error::config("initial vectors must share a positive dimension"));
        }
        if x0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("initial values must be finite"));
        }
        let mut sampler = ScheduleSampler::new(topology, bounds, run_key)?;
        if let Some(plan) = options.mask {
            sampler = sampler.with_mask(plan)?;
        }
        let nodes = (0..n)
            .map(|i| {
                PushSumNodeState::new(
                    x0[i].clone(),
                    topology.out_degree(i),
                    topology.in_arcs(i).to_vec(),
                    options.initial_timestamp,
                )
            })
            .collect();
        let mut engine = Engine {
            topology: topology.clone(),
            sampler,
            nodes,
            channel: Channel::new(topology.arc_count()),
            recorder: None,
            slot: 0,
            mutation_pending: options.mutation.is_some(),
            options,
        };
        if engine.options.trace {
            let first = engine.snapshot();
            engine.recorder = Some(Recorder { snapshots: vec![first], schedule: Vec::new(), injections: Vec::new() });
        }
        Ok(engine)
    }

    pub(crate) fn slot(&self) -> u64 {
        self.slot
    }

    fn snapshot(&self) -> Snapshot {
        let d = self.nodes[0].dim();
        let m = self.topology.arc_count();
        let mut rho_x = vec![0.0; m * d];
        let mut rho_y = vec![0.0; m];
        for s in &self.nodes {
            for (j, &a) in s.in_arcs.iter().enumerate() {
                rho_x[a * d..(a + 1) * d].copy_from_slice(&s.rho_x[j]);
                rho_y[a] = s.rho_y[j];
            }
        }
        Snapshot {
            x: self.nodes.iter().flat_map(|s| s.x.iter().copied()).collect(),
            y: self.nodes.iter().map(|s| s.y).collect(),
            z: self.nodes.iter().flat_map(|s| s.z.iter().copied()).collect(),
            phi_x: self.nodes.iter().flat_map(|s| s.phi_x.iter().copied()).collect(),
            phi_y: self.nodes.iter().map(|s| s.phi_y).collect(),
            rho_x,
            rho_y,
        }
    }

    /// Runs one slot. `inject` is called for every waking node before its
    /// push and may return a vector to add to `x`.
    pub(crate) fn step<F>(&mut self, mut inject: F) -> Result<()>
    where
        F: FnMut(usize, u64, &PushSumNodeState) -> Result<Option<Vec<f64>>>,
    {
        let slot = self.slot;
        let sched = self.sampler.next_slot();
        let mut injected = Vec::new();
        for i in 0..self.nodes.len() {
            if !sched.wake[i] {
                continue;
            }
            if let Some(delta) = inject(i, slot, &self.nodes[i])? {
                for (x, dx) in self.nodes[i].x.iter_mut().zip(&delta) {
                    *x += dx;
                }
                if self.recorder.is_some() {
                    injected.push((i, delta));
                }
            }
            let payload = self.nodes[i].wake_and_push(slot);
            for &a in self.topology.out_arcs(i) {
                if let SendOutcome::Delivered { arrival } = sched.sends[a] {
                    self.channel.send(InFlightMessage { arc: a, payload: payload.clone(), send_slot: slot, arrival_slot: arrival });
                }
            }
        }
        let inboxes = self.channel.deliver(&self.topology, slot, &sched.wake);
        for (i, inbox) in inboxes.iter().enumerate() {
            if sched.wake[i] {
                let skip = self.mutation_pending
                    && self.options.mutation.is_some_and(|m| m.node == i && slot >= m.slot);
                if self.nodes[i].process(i, slot, inbox, skip)? && skip {
                    self.mutation_pending = false;
                }
            }
        }
        self.slot += 1;
        let snap = self.recorder.is_some().then(|| self.snapshot());
        if let (Some(snap), Some(rec)) = (snap, self.recorder.as_mut()) {
            rec.snapshots.push(snap);
            rec.schedule.push(sched);
            rec.injections.push(injected);
        }
        Ok(())
    }

    /// Closes the trace, sampling `l_d` look-ahead slots so that every
    /// in-flight message has a known processing slot.
    pub(crate) fn into_trace(mut self) -> Option<StateTrace> {
        let mut rec = self.recorder.take()?;
        let bounds = self.sampler.bounds();
        for _ in 0..bounds.l_d() {
            rec.schedule.push(self.sampler.next_slot());
        }
        Some(StateTrace {
            dim: self.nodes[0].dim(),
            bounds,
            initial_timestamp: self.options.initial_timestamp,
            snapshots: rec.snapshots,
            schedule: ScheduleRealization::new(&self.topology, rec.schedule),
            injections: rec.injections,
        })
    }
}

/// Plain averaging: every node converges to the mean of `x0`.
pub fn run_raps(
    topology: &Topology,
    bounds: FaultBounds,
    x0: &[Vec<f64>],
    horizon: usize,
    run_key: u64,
    options: RunOptions,
) -> Result<RapsRun> {
    let mut engine = Engine::new(topology, bounds, x0, run_key, options)?;
    let mut trajectory = Trajectory::new(topology.n(), x0[0].len());
    trajectory.push(&engine.nodes);
    for _ in 0..horizon {
        engine.step(|_, _, _| Ok(None))?;
        trajectory.push(&engine.nodes);
    }
    Ok(RapsRun { trajectory, trace: engine.into_trace() })
}

/// Averaging with `perturbation(node, slot)` added to a node's `x` whenever
/// it wakes, before the push. Always traces, since the augmented mean comes
/// from replaying the run.
pub fn run_perturbed<F>(
    topology: &Topology,
    bounds: FaultBounds,
    x0: &[Vec<f64>],
    horizon: usize,
    run_key: u64,
    options: RunOptions,
    mut perturbation: F,
) -> Result<PerturbedRun>
where
    F: FnMut(usize, u64) -> Option<Vec<f64>>,
{
    let options = RunOptions { trace: true, ..options };
    let mut engine = Engine::new(topology, bounds, x0, run_key, options)?;
    let mut trajectory = Trajectory::new(topology.n(), x0[0].len());
    trajectory.push(&engine.nodes);
    for _ in 0..horizon {
        engine.step(|i, k, _| Ok(perturbation(i, k)))?;
        trajectory.push(&engine.nodes);
    }
    let trace = engine.into_trace().expect("tracing forced on");
    let replay = crate::oracle::replay(&trace, false)?;
    let n = topology.n() as f64;
    let augmented_mean = replay
        .chi_sums()
        .into_iter()
        .map(|s| s.into_iter().map(|v| v / n).collect())
        .collect();
    Ok(PerturbedRun { trajectory, augmented_mean, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(arc: usize, phi_x: f64, phi_y: f64, kappa: i64) -> InFlightMessage<Payload> {
        InFlightMessage {
            arc,
            payload: Payload { phi_x: vec![phi_x], phi_y, kappa },
            send_slot: kappa.max(0) as u64,
            arrival_slot: kappa.max(0) as u64 + 1,
        }
    }

    #[test]
    fn push_arithmetic() {
        let mut s = PushSumNodeState::new(vec![4.0], 1, vec![0], 0);
        let p = s.wake_and_push(3);
        assert_eq!((s.x[0], s.y, s.phi_x[0], s.phi_y), (2.0, 0.5, 2.0, 0.5));
        assert_eq!(p, Payload { phi_x: vec![2.0], phi_y: 0.5, kappa: 3 });
    }

    #[test]
    fn two_pushes_accumulate_three_quarters() {
        let mut s = PushSumNodeState::new(vec![8.0], 1, vec![0], 0);
        s.wake_and_push(1);
        s.wake_and_push(2);
        assert_eq!(s.phi_x[0], 6.0);
    }

    #[test]
    fn empty_inbox_only_refreshes_z() {
        let mut s = PushSumNodeState::new(vec![3.0], 1, vec![0], 0);
        s.wake_and_push(1);
        let before = s.clone();
        s.process_inbox(0, 1, &[]).unwrap();
        assert_eq!(s.x, before.x);
        assert_eq!(s.z, vec![3.0]);
    }

    #[test]
    fn stale_message_discarded() {
        let mut s = PushSumNodeState::new(vec![1.0], 1, vec![7], 0);
        s.process_inbox(0, 4, &[msg(7, 2.0, 1.0, 3)]).unwrap();
        let before = s.clone();
        s.process_inbox(0, 5, &[msg(7, 5.0, 2.0, 3), msg(7, 5.0, 2.0, 2)]).unwrap();
        assert_eq!(s, before);
        // Timestamp 0 is not newer than the initial 0.
        let mut fresh = PushSumNodeState::new(vec![1.0], 1, vec![7], 0);
        fresh.process_inbox(0, 1, &[msg(7, 2.0, 1.0, 0)]).unwrap();
        assert_eq!(fresh.x, vec![1.0]);
    }

    #[test]
    fn freshest_message_carries_both_sends() {
        let mut s = PushSumNodeState::new(vec![0.0], 1, vec![2], 0);
        s.process_inbox(0, 6, &[msg(2, 1.0, 0.5, 3), msg(2, 1.5, 0.75, 5)]).unwrap();
        assert_eq!(s.x, vec![1.5]);
        assert_eq!(s.rho_x[0], vec![1.5]);
        assert_eq!(s.kappa_in[0], 5);
    }

    #[test]
    fn foreign_arc_is_a_protocol_violation() {
        let mut s = PushSumNodeState::new(vec![0.0], 1, vec![2], 0);
        assert!(matches!(s.process_inbox(0, 1, &[msg(3, 1.0, 1.0, 1)]), Err(Error::ProtocolViolation { .. })));
    }

    #[test]
    fn pair_converges_to_mean() {
        let t = Topology::cycle(2, true).unwrap();
        let run = run_raps(&t, FaultBounds::ideal(), &[vec![0.0], vec![10.0]], 200, 1, RunOptions::default()).unwrap();
        assert!(run.trajectory.max_deviation(200, &[5.0]) < 1e-9);
        assert!(run.trace.is_none());
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let t = Topology::cycle(4, false).unwrap();
        let b = FaultBounds { l_u: 3, l_f: 2, l_del: 3, p_w: 0.5, p_f: 0.3 };
        let x0 = vec![vec![2.5, -1.0]; 4];
        let run = run_raps(&t, b, &x0, 300, 9, RunOptions::default()).unwrap();
        for k in 0..=300 {
            assert!(run.trajectory.max_deviation(k, &[2.5, -1.0]) < 1e-12, "slot {k}");
        }
    }

    #[test]
    fn trace_shape_and_csv() {
        let t = Topology::cycle(3, false).unwrap();
        let b = FaultBounds { l_u: 2, l_f: 1, l_del: 2, p_w: 0.6, p_f: 0.2 };
        let opts = RunOptions { trace: true, ..RunOptions::default() };
        let run = run_raps(&t, b, &[vec![1.0], vec![2.0], vec![3.0]], 20, 4, opts).unwrap();
        let trace = run.trace.unwrap();
        assert_eq!(trace.horizon(), 20);
        assert_eq!(trace.schedule.len(), 20 + b.l_d() as usize);
        let csv = trace.to_csv();
        assert!(csv.starts_with("slot,kind,id,coord,x,y\n0,node,0,0,1.0000000000000000e0,"));
        assert_eq!(csv.lines().count(), 1 + 21 * (3 * 2 + 3));
    }
}
