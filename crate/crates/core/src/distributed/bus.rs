//! Deterministic in-order message bus.
//!
//! Messages are queued in send order and handed out per receiver in that same
//! order. Every send is counted on the ledger and, optionally, traced.

use std::collections::VecDeque;

use crate::distributed::ledger::{Link, MessageLedger, Node, Protocol, SlotTraffic, TraceEntry};

/// Aggregate state a station reports to the central aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct SaSummary {
    pub station: usize,
    pub demand_kwh: f64,
    /// Inclusive `(start, end)` slots; `None` for an empty station.
    pub window: Option<(usize, usize)>,
}

impl SaSummary {
    pub fn window_len(&self) -> usize {
        self.window.map_or(0, |(a, b)| b + 1 - a)
    }
}

/// The 4-scalar message passed around the SA ring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingMessage {
    pub u_min: f64,
    /// Power committed at the threshold so far.
    pub p_char: f64,
    /// Largest convenience not above the threshold.
    pub b_char: Option<f64>,
    /// EV holding `b_char`.
    pub i_char: Option<usize>,
}

impl RingMessage {
    pub fn probe(u_min: f64) -> Self {
        RingMessage {
            u_min,
            p_char: 0.0,
            b_char: None,
            i_char: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Deadline and target SOC of an EV.
    EvReport { deadline_slot: usize, soc_target: f64 },
    /// Per-EV state forwarded to the CA by the centralized scheduler.
    CentralReport([f64; 7]),
    Summary(SaSummary),
    Headroom(f64),
    Ring(RingMessage),
    Rate(f64),
}

impl Payload {
    pub fn scalars(&self) -> usize {
        match self {
            Payload::EvReport { .. } => 2,
            Payload::CentralReport(v) => v.len(),
            Payload::Summary(s) => s.window_len() + 1,
            Payload::Headroom(_) | Payload::Rate(_) => 1,
            Payload::Ring(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::EvReport { .. } => "ev-report",
            Payload::CentralReport(_) => "central-report",
            Payload::Summary(_) => "summary",
            Payload::Headroom(_) => "headroom",
            Payload::Ring(_) => "ring",
            Payload::Rate(_) => "rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: Node,
    pub to: Node,
    pub payload: Payload,
}

#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    queue: VecDeque<Envelope>,
    slot: usize,
    current: (u64, u64, u64),
    pub ledger: MessageLedger,
    pub trace: Vec<TraceEntry>,
    keep_trace: bool,
}

impl MessageBus {
    pub fn new(keep_trace: bool) -> Self {
        MessageBus {
            keep_trace,
            ..MessageBus::default()
        }
    }

    pub fn begin_slot(&mut self, slot: usize) {
        self.slot = slot;
        self.current = (0, 0, 0);
    }

    pub fn send(&mut self, from: Node, to: Node, payload: Payload) {
        let scalars = payload.scalars() as u64;
        match Link::of(from, to) {
            Some(Link::EvSa) => self.current.0 += scalars,
            Some(Link::SaCa) => self.current.1 += scalars,
            Some(Link::SaSa) => self.current.2 += 2 * scalars,
            None => panic!("no link between {from} and {to}"),
        }
        if self.keep_trace {
            self.trace.push(TraceEntry {
                slot: self.slot,
                sender: from.to_string(),
                receiver: to.to_string(),
                kind: payload.kind().to_string(),
                scalars: scalars as usize,
            });
        }
        self.queue.push_back(Envelope { from, to, payload });
    }

    /// Removes and returns every queued message for `to`, oldest first.
    pub fn take(&mut self, to: Node) -> Vec<Envelope> {
        let mut out = Vec::new();
        let mut rest = VecDeque::with_capacity(self.queue.len());
        for env in self.queue.drain(..) {
            if env.to == to {
                out.push(env);
            } else {
                rest.push_back(env);
            }
        }
        self.queue = rest;
        out
    }

    /// Removes the oldest message for `to`.
    pub fn take_one(&mut self, to: Node) -> Option<Envelope> {
        let pos = self.queue.iter().position(|e| e.to == to)?;
        self.queue.remove(pos)
    }

    /// Removes and returns every queued message, oldest first.
    pub fn drain_all(&mut self) -> Vec<Envelope> {
        self.queue.drain(..).collect()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Closes the slot, storing its counts with the closed-form inputs.
    pub fn end_slot(&mut self, protocol: Protocol, present: Vec<usize>, window_sizes: Vec<usize>, ring_rounds: usize) {
        let (ev_sa, sa_ca, sa_sa) = self.current;
        self.ledger.record_slot(SlotTraffic {
            slot: self.slot,
            protocol,
            present,
            window_sizes,
            ring_rounds,
            ev_sa,
            sa_ca,
            sa_sa,
        });
        self.current = (0, 0, 0);
    }

    /// Ring traffic sent so far in the current slot.
    pub fn ring_scalars_this_slot(&self) -> u64 {
        self.current.2
    }
}
