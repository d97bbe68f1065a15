use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::fabric::{FlowId, LinkConfig, Packet, SeverityStamp, CONTROL_FRAME_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NpPolicy {
    /// Baseline: rate-limited CNPs without severity.
    Baseline { min_gap: SimTime },
    /// Enhanced: shorter gap, CNP relays the packet's severity stamp.
    Enhanced { min_gap: SimTime },
}

impl NpPolicy {
    pub fn min_gap(&self) -> SimTime {
        match *self {
            NpPolicy::Baseline { min_gap } | NpPolicy::Enhanced { min_gap } => min_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnpMessage {
    pub flow: FlowId,
    pub severity: Option<SeverityStamp>,
    pub emitted_at: SimTime,
    pub deliver_at: SimTime,
}

/// Notification-point state for one flow at its destination.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NpState {
    pub last_cnp_sent_at: Option<SimTime>,
    pub latest_severity: Option<SeverityStamp>,
    pub cnps_sent: u64,
}

impl NpState {
    /// Turn a delivered packet into a CNP if it is marked and the per-flow
    /// gap has elapsed. `reverse_latency` is the out-of-band trip back to the
    /// source.
    pub fn on_delivery(
        &mut self,
        policy: &NpPolicy,
        packet: &Packet,
        t: SimTime,
        reverse_latency: SimTime,
    ) -> Option<CnpMessage> {
        if !packet.ecn_marked {
            return None;
        }
        if packet.severity.is_some() {
            self.latest_severity = packet.severity;
        }
        if let Some(last) = self.last_cnp_sent_at {
            if t.saturating_sub(last) < policy.min_gap() {
                return None;
            }
        }
        self.last_cnp_sent_at = Some(t);
        self.cnps_sent += 1;
        let severity = match policy {
            NpPolicy::Baseline { .. } => None,
            NpPolicy::Enhanced { .. } => packet.severity,
        };
        Some(CnpMessage {
            flow: packet.flow,
            severity,
            emitted_at: t,
            deliver_at: t + reverse_latency,
        })
    }
}

/// Latency of a CNP crossing `links` back to the source: per link, one
/// propagation delay plus the serialization of a 64-byte frame.
pub fn cnp_latency<'a>(links: impl IntoIterator<Item = &'a LinkConfig>) -> SimTime {
    links.into_iter().fold(SimTime::ZERO, |acc, l| {
        acc + l.propagation + l.serialization(CONTROL_FRAME_BYTES)
    })
}
