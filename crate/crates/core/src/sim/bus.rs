//! Broadcast message bus with range limits and random dropouts.
//!
//! Messages sent during one tick are delivered at the start of the next,
//! along the links that are live at delivery.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::CommGraph;
use crate::grid::Point;
use crate::pbacs::CandidatePath;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommConfig {
    /// Probability that any one link is down for a delivery or round.
    pub dropout: f64,
    /// Maximum link length in meters; `None` is unlimited.
    pub range_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Proposal(CandidatePath),
    Consensus {
        round: usize,
        mean: Vec<f64>,
        variance: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BusMessage {
    pub sender: usize,
    pub send_time_s: f64,
    pub payload: Payload,
}

/// Draw the live links among agents at `positions`: within range, and
/// surviving an independent dropout coin per link.
pub fn realize_graph(positions: &[Point], comm: &CommConfig, rng: &mut impl Rng) -> CommGraph {
    let n = positions.len();
    let mut g = CommGraph::empty(n);
    for a in 0..n {
        for b in (a + 1)..n {
            let in_range = comm
                .range_m
                .is_none_or(|r| positions[a].dist(positions[b]) <= r);
            if !in_range {
                continue;
            }
            let up = if comm.dropout <= 0.0 {
                true
            } else if comm.dropout >= 1.0 {
                false
            } else {
                rng.random::<f64>() >= comm.dropout
            };
            if up {
                g.set(a, b, true);
            }
        }
    }
    g
}

#[derive(Clone, Debug, Default)]
pub struct Bus {
    queued: Vec<BusMessage>,
    sent: usize,
    delivered: usize,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, msg: BusMessage) {
        self.sent += 1;
        self.queued.push(msg);
    }

    pub fn pending(&self) -> usize {
        self.queued.len()
    }

    pub fn sent(&self) -> usize {
        self.sent
    }

    /// Individual (message, recipient) deliveries so far.
    pub fn delivered(&self) -> usize {
        self.delivered
    }

    /// Deliver everything queued along `graph`; undelivered copies are lost.
    pub fn deliver(&mut self, graph: &CommGraph) -> Vec<Vec<BusMessage>> {
        let n = graph.len();
        let mut inboxes = vec![Vec::new(); n];
        for msg in self.queued.drain(..) {
            for (to, inbox) in inboxes.iter_mut().enumerate() {
                if to != msg.sender && graph.connected(msg.sender, to) {
                    inbox.push(msg.clone());
                    self.delivered += 1;
                }
            }
        }
        inboxes
    }
}

/// Realize this tick's links and deliver the queue along them.
pub fn deliver_messages(
    bus: &mut Bus,
    comm: &CommConfig,
    rng: &mut impl Rng,
    positions: &[Point],
) -> (Vec<Vec<BusMessage>>, CommGraph) {
    let g = realize_graph(positions, comm, rng);
    (bus.deliver(&g), g)
}
