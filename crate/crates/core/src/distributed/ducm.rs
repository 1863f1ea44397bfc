//! Convenience-ordered allocation as a ring bisection among station aggregators.
//!
//! A threshold `u_min` travels around the ring. Each SA adds to the running
//! committed power the cap of its EVs above the threshold and the floor of the
//! rest, and reports its best convenience at or below the threshold. The last SA
//! compares the leftover headroom `R = L - P` with the fleet's largest rate and
//! moves the bisection bounds.
//!
//! Once a threshold with `0 <= R <= p_max` is found, settling rounds step the
//! threshold down past one EV at a time until admitting the next EV in line
//! would overshoot; that EV takes the leftover. A final round carries the
//! decision to every SA. With distinct convenience values the result equals
//! [`ucm`](crate::centralized::ucm) on the pooled candidates bit for bit,
//! because both sum committed power in the same station-then-id order.

use crate::centralized::{convenience_order, threshold_rates, Candidate, SlotDecision};
use crate::distributed::bus::{MessageBus, Payload, RingMessage};
use crate::distributed::ledger::Node;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionState {
    pub h: f64,
    pub l: f64,
    pub epsilon: f64,
    /// Bisection steps taken.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DucmOutcome {
    pub decision: SlotDecision,
    pub state: BisectionState,
    /// Every ring round, bisection steps included.
    pub rounds: usize,
    /// Final threshold: EVs strictly above it were charged to their cap.
    pub u_min: f64,
    /// Floors alone exceeded the headroom.
    pub overcommit: bool,
}

/// What one SA adds to the ring message.
fn sa_pass(cands: &[Candidate], mut msg: RingMessage) -> RingMessage {
    for c in cands {
        if c.u > msg.u_min {
            msg.p_char += c.cap_kw;
        } else {
            msg.p_char += c.floor_kw;
            let better = match (msg.b_char, msg.i_char) {
                (None, _) => true,
                (Some(b), Some(i)) => c.u > b || (c.u == b && c.id < i),
                (Some(_), None) => true,
            };
            if better {
                msg.b_char = Some(c.u);
                msg.i_char = Some(c.id);
            }
        }
    }
    msg
}

/// One trip around the ring starting at the first SA.
fn ring_round(stations: &[Vec<Candidate>], u_min: f64, bus: &mut MessageBus) -> RingMessage {
    let m = stations.len();
    let mut msg = RingMessage::probe(u_min);
    for (k, cands) in stations.iter().enumerate() {
        msg = sa_pass(cands, msg);
        let next = (k + 1) % m;
        bus.send(Node::Sa(k), Node::Sa(next), Payload::Ring(msg));
        match bus.take_one(Node::Sa(next)).map(|e| e.payload) {
            Some(Payload::Ring(got)) => msg = got,
            other => panic!("ring expected a ring message, got {other:?}"),
        }
    }
    msg
}

/// Allocates `headroom_kw` among the stations' candidates.
///
/// `stations[m]` lists station `m`'s candidates; each list is processed in
/// ascending id. `p_max_kw` is the largest rate in the fleet.
pub fn ducm(
    t: usize,
    headroom_kw: f64,
    stations: &[Vec<Candidate>],
    p_max_kw: f64,
    epsilon: f64,
    bus: &mut MessageBus,
) -> DucmOutcome {
    let stations: Vec<Vec<Candidate>> = stations
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_by_key(|c| c.id);
            s
        })
        .collect();
    let pooled: Vec<Candidate> = stations.iter().flatten().copied().collect();
    let order = convenience_order(&pooled);
    let mut state = BisectionState {
        h: 1.0,
        l: 0.0,
        epsilon,
        iterations: 0,
    };
    if pooled.is_empty() {
        return DucmOutcome {
            decision: threshold_rates(t, headroom_kw, &pooled, |_| false, None, &order),
            state,
            rounds: 0,
            u_min: f64::INFINITY,
            overcommit: false,
        };
    }

    let mut rounds = 0;
    let probe = |u: f64, bus: &mut MessageBus, rounds: &mut usize| {
        *rounds += 1;
        ring_round(&stations, u, bus)
    };

    // A state with R >= 0 whose threshold lies at or above the answer.
    let mut anchor: Option<RingMessage> = None;
    let mut above: Option<RingMessage> = None;
    let mut discovered = false;
    let mut overcommit = false;
    loop {
        while state.h - state.l >= epsilon {
            let u = 0.5 * (state.h + state.l);
            state.iterations += 1;
            let msg = probe(u, bus, &mut rounds);
            let r = headroom_kw - msg.p_char;
            if r < 0.0 {
                state.l = u;
            } else if msg.b_char.is_none() || r <= p_max_kw {
                anchor = Some(msg);
                break;
            } else {
                state.h = u;
                above = Some(msg);
            }
        }
        if anchor.is_some() || above.is_some() || discovered {
            break;
        }
        // Every probe overshot: look at the top of the ring once.
        discovered = true;
        let msg = probe(f64::INFINITY, bus, &mut rounds);
        if headroom_kw - msg.p_char < 0.0 {
            overcommit = true;
            anchor = Some(msg);
            break;
        }
        let top = msg.b_char.unwrap_or(state.h);
        above = Some(msg);
        state.h = state.h.max(top + epsilon);
    }

    let mut current = anchor.or(above).expect("search leaves a state");
    let mut leftover = headroom_kw - current.p_char;
    let partial = if overcommit {
        None
    } else {
        loop {
            let Some(b) = current.b_char else {
                break None;
            };
            let next = probe(b.next_down(), bus, &mut rounds);
            let next_leftover = headroom_kw - next.p_char;
            if next_leftover < 0.0 {
                break current.i_char.map(|i| (i, leftover));
            }
            current = next;
            leftover = next_leftover;
        }
    };

    // Carry the decision around the ring.
    let final_msg = RingMessage {
        u_min: current.u_min,
        p_char: leftover,
        b_char: current.b_char,
        i_char: partial.map(|p| p.0),
    };
    rounds += 1;
    let m = stations.len();
    for k in 0..m {
        bus.send(Node::Sa(k), Node::Sa((k + 1) % m), Payload::Ring(final_msg));
        bus.take_one(Node::Sa((k + 1) % m));
    }

    let u_min = current.u_min;
    let partial_idx = partial.map(|(id, r)| (pooled.iter().position(|c| c.id == id).expect("known EV"), r));
    let decision = if overcommit {
        threshold_rates(t, headroom_kw, &pooled, |_| false, None, &order)
    } else {
        threshold_rates(t, headroom_kw, &pooled, |k| pooled[k].u > u_min, partial_idx, &order)
    };
    DucmOutcome {
        decision,
        state,
        rounds,
        u_min,
        overcommit,
    }
}
