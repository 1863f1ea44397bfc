//! Message accounting.
//!
//! Counts are in scalars and are taken on the station-aggregator side of each
//! link: a scalar an SA sends or receives counts once, so a ring hop between
//! two SAs counts twice (sent by one, received by the other).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EvError, Result};

/// A protocol participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Ev(usize),
    Sa(usize),
    Ca,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Ev(i) => write!(f, "ev{i}"),
            Node::Sa(m) => write!(f, "sa{m}"),
            Node::Ca => f.write_str("ca"),
        }
    }
}

impl FromStr for Node {
    type Err = EvError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EvError::InvalidConfig(format!("unknown node '{s}'"));
        if s == "ca" {
            Ok(Node::Ca)
        } else if let Some(rest) = s.strip_prefix("ev") {
            rest.parse().map(Node::Ev).map_err(|_| bad())
        } else if let Some(rest) = s.strip_prefix("sa") {
            rest.parse().map(Node::Sa).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

/// The link class a message travels on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    EvSa,
    SaCa,
    SaSa,
}

impl Link {
    pub fn of(from: Node, to: Node) -> Option<Link> {
        match (from, to) {
            (Node::Ev(_), Node::Sa(_)) | (Node::Sa(_), Node::Ev(_)) => Some(Link::EvSa),
            (Node::Sa(_), Node::Ca) | (Node::Ca, Node::Sa(_)) => Some(Link::SaCa),
            (Node::Sa(_), Node::Sa(_)) => Some(Link::SaSa),
            _ => None,
        }
    }
}

/// One delivered message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub slot: usize,
    pub sender: String,
    pub receiver: String,
    pub kind: String,
    pub scalars: usize,
}

/// Which scheduler produced a slot's traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Centralized,
    Distributed,
}

/// Traffic of one slot together with the quantities its closed form needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTraffic {
    pub slot: usize,
    pub protocol: Protocol,
    /// `|H_{m,t}|` per station.
    pub present: Vec<usize>,
    /// `|W_{m,t}|` per station (zero for an empty station).
    pub window_sizes: Vec<usize>,
    pub ring_rounds: usize,
    pub ev_sa: u64,
    pub sa_ca: u64,
    pub sa_sa: u64,
}

impl SlotTraffic {
    /// Counts the closed forms predict for this slot.
    pub fn expected(&self) -> (u64, u64, u64) {
        let present: u64 = self.present.iter().map(|&h| h as u64).sum();
        match self.protocol {
            Protocol::Centralized => closed_form_centralized(&self.present),
            Protocol::Distributed => {
                let sa_ca = closed_form_distributed_ca(&self.window_sizes);
                let sa_sa = closed_form_ring(self.window_sizes.len(), self.ring_rounds);
                (3 * present, sa_ca, sa_sa)
            }
        }
    }
}

/// `(ev_sa, sa_ca, sa_sa)` for one centralized slot: 2 up and 1 down per EV on
/// the access link, 7 up and 1 down per EV between SA and CA.
pub fn closed_form_centralized(present: &[usize]) -> (u64, u64, u64) {
    let n: u64 = present.iter().map(|&h| h as u64).sum();
    (3 * n, 8 * n, 0)
}

/// SA to CA traffic of one distributed slot: `sum_m (|W_m| + 2)`.
pub fn closed_form_distributed_ca(window_sizes: &[usize]) -> u64 {
    window_sizes.iter().map(|&w| w as u64 + 2).sum()
}

/// Ring traffic: 4 scalars per hop, counted at both ends, `stations` hops per round.
pub fn closed_form_ring(stations: usize, rounds: usize) -> u64 {
    8 * stations as u64 * rounds as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MessageLedger {
    pub ev_sa: u64,
    pub sa_ca: u64,
    pub sa_sa: u64,
    pub slots: Vec<SlotTraffic>,
}

impl MessageLedger {
    pub fn total(&self) -> u64 {
        self.ev_sa + self.sa_ca + self.sa_sa
    }

    /// Traffic that involves the central aggregator or the SA ring.
    pub fn aggregator_traffic(&self) -> u64 {
        self.sa_ca + self.sa_sa
    }

    pub fn slot(&self, t: usize) -> Option<&SlotTraffic> {
        self.slots.iter().find(|s| s.slot == t)
    }

    pub(crate) fn add(&mut self, link: Link, scalars: usize) {
        let s = scalars as u64;
        match link {
            Link::EvSa => self.ev_sa += s,
            Link::SaCa => self.sa_ca += s,
            Link::SaSa => self.sa_sa += 2 * s,
        }
    }

    /// Appends a slot's traffic and adds it to the totals.
    pub fn record_slot(&mut self, traffic: SlotTraffic) {
        self.ev_sa += traffic.ev_sa;
        self.sa_ca += traffic.sa_ca;
        self.sa_sa += traffic.sa_sa;
        self.slots.push(traffic);
    }

    /// Records a distributed slot directly from its closed-form inputs.
    pub fn record_distributed_slot(&mut self, slot: usize, present: &[usize], window_sizes: &[usize], ring_rounds: usize) {
        let mut traffic = SlotTraffic {
            slot,
            protocol: Protocol::Distributed,
            present: present.to_vec(),
            window_sizes: window_sizes.to_vec(),
            ring_rounds,
            ev_sa: 0,
            sa_ca: 0,
            sa_sa: 0,
        };
        (traffic.ev_sa, traffic.sa_ca, traffic.sa_sa) = traffic.expected();
        self.record_slot(traffic);
    }

    /// Records a centralized slot directly from its closed-form inputs.
    pub fn record_centralized_slot(&mut self, slot: usize, present: &[usize]) {
        let mut traffic = SlotTraffic {
            slot,
            protocol: Protocol::Centralized,
            present: present.to_vec(),
            window_sizes: vec![0; present.len()],
            ring_rounds: 0,
            ev_sa: 0,
            sa_ca: 0,
            sa_sa: 0,
        };
        (traffic.ev_sa, traffic.sa_ca, traffic.sa_sa) = traffic.expected();
        self.record_slot(traffic);
    }

    /// Checks every slot against its closed form and the totals against the slots.
    pub fn reconcile(&self) -> std::result::Result<(), String> {
        let mut sums = (0u64, 0u64, 0u64);
        for s in &self.slots {
            let expected = s.expected();
            if (s.ev_sa, s.sa_ca, s.sa_sa) != expected {
                return Err(format!(
                    "slot {}: counted {:?}, closed form {:?}",
                    s.slot,
                    (s.ev_sa, s.sa_ca, s.sa_sa),
                    expected
                ));
            }
            sums.0 += s.ev_sa;
            sums.1 += s.sa_ca;
            sums.2 += s.sa_sa;
        }
        if sums != (self.ev_sa, self.sa_ca, self.sa_sa) {
            return Err(format!(
                "totals {:?} differ from slot sums {:?}",
                (self.ev_sa, self.sa_ca, self.sa_sa),
                sums
            ));
        }
        Ok(())
    }

    /// Rebuilds link totals from a message trace.
    pub fn totals_from_trace(trace: &[TraceEntry]) -> Result<(u64, u64, u64)> {
        let mut ledger = MessageLedger::default();
        for e in trace {
            let from: Node = e.sender.parse()?;
            let to: Node = e.receiver.parse()?;
            let link = Link::of(from, to).ok_or_else(|| {
                EvError::InvalidConfig(format!("no link between {from} and {to}"))
            })?;
            ledger.add(link, e.scalars);
        }
        Ok((ledger.ev_sa, ledger.sa_ca, ledger.sa_sa))
    }
}

/// Writes the trace as CSV with columns `slot,sender,receiver,kind,scalars`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in trace {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceEntry>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
