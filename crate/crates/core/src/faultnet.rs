//! Harsh-network model: asynchronous wake-ups, bounded consecutive link
//! failures, bounded delays and FIFO arrival, realized slot by slot.
//!
//! A [`ScheduleSampler`] draws the realization lazily; the same draws can be
//! recorded into a [`ScheduleRealization`] so that the protocol and the
//! matrix verifier consume an identical schedule.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Arc, Topology};
use crate::rng::{Role, Stream};

/// Bounds of the fault model plus the sampling probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultBounds {
    /// Max slots between consecutive wake-ups of a node.
    pub l_u: u32,
    /// Max consecutive failed sends on one arc.
    pub l_f: u32,
    /// Max transmission delay in slots.
    pub l_del: u32,
    /// Per-slot wake probability.
    pub p_w: f64,
    /// Per-send loss probability.
    pub p_f: f64,
}

impl FaultBounds {
    /// Synchronous, lossless, next-slot delivery.
    pub const fn ideal() -> Self {
        FaultBounds { l_u: 1, l_f: 0, l_del: 1, p_w: 1.0, p_f: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_u < 1 {
            return Err(Error::config("l_u must be at least 1"));
        }
        if self.l_del < 1 {
            return Err(Error::config("l_del must be at least 1 (a delay of 0 means next-slot delivery, i.e. 1)"));
        }
        if !(self.p_w > 0.0 && self.p_w <= 1.0) {
            return Err(Error::config(format!("p_w = {} outside (0, 1]", self.p_w)));
        }
        if !(0.0..1.0).contains(&self.p_f) {
            return Err(Error::config(format!("p_f = {} outside [0, 1)", self.p_f)));
        }
        Ok(())
    }

    /// Bound on effective delay: transmission plus receiver sleep.
    pub fn l_d(&self) -> u32 {
        self.l_del + self.l_u - 1
    }

    /// Bound on slots between successful deliveries on any arc.
    pub fn l_s(&self) -> u32 {
        self.l_u * (self.l_f + 1) + self.l_d()
    }

    pub fn derived_bounds(&self) -> (u32, u32) {
        (self.l_d(), self.l_s())
    }
}

/// Time-varying graph: which arcs exist at each slot.
///
/// Arc `a` is active at slot `k` when `a % window == k % window`, or with
/// probability `extra_probability` otherwise, so every `window` consecutive
/// slots cover the full base graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPlan {
    pub window: usize,
    pub extra_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    /// No send: the source slept or the arc was masked.
    Idle,
    Lost,
    Delivered { arrival: u64 },
}

/// Everything the network decides at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    pub slot: u64,
    pub wake: Vec<bool>,
    /// Indexed by arc id.
    pub sends: Vec<SendOutcome>,
    /// Active arcs, `None` when the graph is static.
    pub active: Option<Vec<bool>>,
}

impl SlotSchedule {
    pub fn is_active(&self, arc: usize) -> bool {
        self.active.as_ref().is_none_or(|m| m[arc])
    }
}

/// Draws wake-ups and link outcomes for one run.
///
/// Each node draws from its own wake stream and each arc from its own link
/// stream. Draws are consumed even when the outcome is forced, so forcing
/// never shifts later randomness.
#[derive(Debug, Clone)]
pub struct ScheduleSampler {
    topology: Topology,
    bounds: FaultBounds,
    mask: Option<MaskPlan>,
    wake_rng: Vec<Stream>,
    link_rng: Vec<Stream>,
    mask_rng: Vec<Stream>,
    slots_asleep: Vec<u32>,
    failure_streak: Vec<u32>,
    last_arrival: Vec<Option<u64>>,
    next_slot: u64,
}

impl ScheduleSampler {
    pub fn new(topology: &Topology, bounds: FaultBounds, run_key: u64) -> Result<Self> {
        bounds.validate()?;
        let n = topology.n();
        let m = topology.arc_count();
        Ok(ScheduleSampler {
            topology: topology.clone(),
            bounds,
            mask: None,
            wake_rng: (0..n).map(|i| Stream::for_role(run_key, Role::Wake, i as u64)).collect(),
            link_rng: (0..m).map(|a| Stream::for_role(run_key, Role::Link, a as u64)).collect(),
            mask_rng: (0..m).map(|a| Stream::for_role(run_key, Role::Mask, a as u64)).collect(),
            slots_asleep: vec![0; n],
            failure_streak: vec![0; m],
            last_arrival: vec![None; m],
            next_slot: 0,
        })
    }

    /// Switches to a time-varying graph. Only meaningful without losses.
    pub fn with_mask(mut self, plan: MaskPlan) -> Result<Self> {
        if self.bounds.p_f != 0.0 || self.bounds.l_f != 0 {
            return Err(Error::config("time-varying graphs require p_f = 0 and l_f = 0"));
        }
        if plan.window == 0 {
            return Err(Error::config("mask window must be positive"));
        }
        if !(0.0..=1.0).contains(&plan.extra_probability) {
            return Err(Error::config("mask extra_probability outside [0, 1]"));
        }
        self.mask = Some(plan);
        Ok(self)
    }

    pub fn bounds(&self) -> FaultBounds {
        self.bounds
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Wake indicator for `node` at the current slot. Forced once the node has
    /// slept `l_u - 1` slots in a row.
    pub fn sample_wake(&mut self, node: usize) -> bool {
        let draw = self.wake_rng[node].bernoulli(self.bounds.p_w);
        let awake = draw || self.slots_asleep[node] + 1 >= self.bounds.l_u;
        if awake {
            self.slots_asleep[node] = 0;
        } else {
            self.slots_asleep[node] += 1;
        }
        awake
    }

    /// Outcome of a send on `arc` at `slot`; the source must be awake.
    pub fn sample_send(&mut self, arc: usize, slot: u64) -> SendOutcome {
        let rng = &mut self.link_rng[arc];
        let loss_draw = rng.bernoulli(self.bounds.p_f);
        let delay = 1 + rng.below(u64::from(self.bounds.l_del));
        if loss_draw && self.failure_streak[arc] < self.bounds.l_f {
            self.failure_streak[arc] += 1;
            return SendOutcome::Lost;
        }
        self.failure_streak[arc] = 0;
        let mut arrival = slot + delay;
        if let Some(prev) = self.last_arrival[arc] {
            arrival = arrival.max(prev + 1);
        }
        self.last_arrival[arc] = Some(arrival);
        SendOutcome::Delivered { arrival }
    }

    fn sample_mask(&mut self, slot: u64) -> Option<Vec<bool>> {
        let plan = self.mask?;
        let w = plan.window as u64;
        Some(
            self.mask_rng
                .iter_mut()
                .enumerate()
                .map(|(a, rng)| {
                    let extra = rng.bernoulli(plan.extra_probability);
                    a as u64 % w == slot % w || extra
                })
                .collect(),
        )
    }

    pub fn next_slot(&mut self) -> SlotSchedule {
        let slot = self.next_slot;
        self.next_slot += 1;
        let n = self.topology.n();
        let active = self.sample_mask(slot);
        let wake: Vec<bool> = (0..n).map(|i| self.sample_wake(i)).collect();
        let mut sends = vec![SendOutcome::Idle; self.topology.arc_count()];
        for (a, outcome) in sends.iter_mut().enumerate() {
            let src = self.topology.arc(a).from;
            let on = active.as_ref().is_none_or(|m| m[a]);
            if wake[src] && on {
                *outcome = self.sample_send(a, slot);
            }
        }
        SlotSchedule { slot, wake, sends, active }
    }

    /// Records the next `slots` slots.
    pub fn record(mut self, slots: usize) -> ScheduleRealization {
        let slots = (0..slots).map(|_| self.next_slot()).collect();
        ScheduleRealization { topology: self.topology, slots }
    }
}

impl Iterator for ScheduleSampler {
    type Item = SlotSchedule;

    fn next(&mut self) -> Option<SlotSchedule> {
        Some(self.next_slot())
    }
}

/// A fully drawn schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRealization {
    topology: Topology,
    pub slots: Vec<SlotSchedule>,
}

impl ScheduleRealization {
    pub fn new(topology: &Topology, slots: Vec<SlotSchedule>) -> Self {
        ScheduleRealization { topology: topology.clone(), slots }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// First slot at or after `arrival` at which `node` is awake, if recorded.
    pub fn processing_slot(&self, node: usize, arrival: u64) -> Option<u64> {
        (arrival as usize..self.slots.len())
            .find(|&k| self.slots[k].wake[node])
            .map(|k| k as u64)
    }

    /// CSV dump: `slot,kind,node_or_arc,value`. One `wake` row per node and
    /// slot (value 0/1); one `send` row per actual send (value `lost` or the
    /// arrival slot); for time-varying graphs one `mask` row per inactive arc
    /// (value 0).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,kind,node_or_arc,value\n");
        for s in &self.slots {
            for (i, w) in s.wake.iter().enumerate() {
                let _ = writeln!(out, "{},wake,{},{}", s.slot, i, u8::from(*w));
            }
            if let Some(mask) = &s.active {
                for (a, on) in mask.iter().enumerate() {
                    if !on {
                        let _ = writeln!(out, "{},mask,{},0", s.slot, self.topology.arc(a));
                    }
                }
            }
            for (a, o) in s.sends.iter().enumerate() {
                let arc = self.topology.arc(a);
                match o {
                    SendOutcome::Idle => {}
                    SendOutcome::Lost => {
                        let _ = writeln!(out, "{},send,{},lost", s.slot, arc);
                    }
                    SendOutcome::Delivered { arrival } => {
                        let _ = writeln!(out, "{},send,{},{}", s.slot, arc, arrival);
                    }
                }
            }
        }
        out
    }

    pub fn from_csv(topology: &Topology, text: &str) -> Result<Self> {
        let n = topology.n();
        let m = topology.arc_count();
        let mut slots: Vec<SlotSchedule> = Vec::new();
        let mut any_mask = false;
        let mut lines = text.lines();
        match lines.next() {
            Some("slot,kind,node_or_arc,value") => {}
            other => return Err(Error::parse(format!("bad schedule header {other:?}"))),
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(format!("bad schedule row `{line}`")));
            }
            let slot: u64 = f[0].parse().map_err(|e| Error::parse(format!("slot in `{line}`: {e}")))?;
            while slots.len() as u64 <= slot {
                let k = slots.len() as u64;
                slots.push(SlotSchedule {
                    slot: k,
                    wake: vec![false; n],
                    sends: vec![SendOutcome::Idle; m],
                    active: None,
                });
            }
            let s = &mut slots[slot as usize];
            match f[1] {
                "wake" => {
                    let i: usize = f[2].parse().map_err(|e| Error::parse(format!("node in `{line}`: {e}")))?;
                    if i >= n {
                        return Err(Error::parse(format!("node out of range in `{line}`")));
                    }
                    s.wake[i] = f[3] == "1";
                }
                "send" | "mask" => {
                    let arc = parse_arc(f[2]).and_then(|a| {
                        topology.arc_id(a).ok_or_else(|| Error::parse(format!("unknown arc in `{line}`")))
                    })?;
                    if f[1] == "mask" {
                        any_mask = true;
                        s.active.get_or_insert_with(|| vec![true; m])[arc] = false;
                    } else if f[3] == "lost" {
                        s.sends[arc] = SendOutcome::Lost;
                    } else {
                        let arrival = f[3].parse().map_err(|e| Error::parse(format!("arrival in `{line}`: {e}")))?;
                        s.sends[arc] = SendOutcome::Delivered { arrival };
                    }
                }
                other => return Err(Error::parse(format!("unknown row kind `{other}`"))),
            }
        }
        if any_mask {
            for s in &mut slots {
                s.active.get_or_insert_with(|| vec![true; m]);
            }
        }
        Ok(ScheduleRealization { topology: topology.clone(), slots })
    }
}

fn parse_arc(s: &str) -> Result<Arc> {
    let (a, b) = s.split_once('-').ok_or_else(|| Error::parse(format!("bad arc `{s}`")))?;
    let from = a.parse().map_err(|e| Error::parse(format!("arc `{s}`: {e}")))?;
    let to = b.parse().map_err(|e| Error::parse(format!("arc `{s}`: {e}")))?;
    Ok(Arc::new(from, to))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlightMessage<P> {
    pub arc: usize,
    pub payload: P,
    pub send_slot: u64,
    pub arrival_slot: u64,
}

/// Per-arc FIFO queues of messages not yet picked up.
#[derive(Debug, Clone)]
pub struct Channel<P> {
    queues: Vec<VecDeque<InFlightMessage<P>>>,
}

impl<P> Channel<P> {
    pub fn new(arc_count: usize) -> Self {
        Channel { queues: (0..arc_count).map(|_| VecDeque::new()).collect() }
    }

    pub fn send(&mut self, msg: InFlightMessage<P>) {
        let q = &mut self.queues[msg.arc];
        debug_assert!(msg.arrival_slot > msg.send_slot);
        debug_assert!(q.back().is_none_or(|b| b.arrival_slot < msg.arrival_slot), "FIFO violated");
        q.push_back(msg);
    }

    /// Removes and returns the messages on `arc` that have arrived by `slot`.
    pub fn take_ready(&mut self, arc: usize, slot: u64) -> impl Iterator<Item = InFlightMessage<P>> + '_ {
        let q = &mut self.queues[arc];
        let ready = q.iter().take_while(|m| m.arrival_slot <= slot).count();
        q.drain(..ready)
    }

    /// Inbox of every awake node at `slot`; sleeping nodes keep their queue.
    pub fn deliver(&mut self, topology: &Topology, slot: u64, wake: &[bool]) -> Vec<Vec<InFlightMessage<P>>> {
        (0..topology.n())
            .map(|node| {
                if !wake[node] {
                    return Vec::new();
                }
                let mut inbox = Vec::new();
                for &a in topology.in_arcs(node) {
                    inbox.extend(self.take_ready(a, slot));
                }
                inbox
            })
            .collect()
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }
}
