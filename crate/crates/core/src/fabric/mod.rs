//! Links, packets and switches of the lossless fabric.

mod marking;
mod switch;

pub use marking::{MarkKind, MarkingPolicy};
pub use switch::{
    Dequeued, InputPort, OutputPort, PfcConfig, PfcFrame, ReceiveOutcome, SwitchState,
};

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::FabricError;
use crate::topology::HostId;

pub type FlowId = u32;

/// Size of PAUSE/RESUME frames and CNPs on the wire.
pub const CONTROL_FRAME_BYTES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Bytes per second.
    pub capacity: u64,
    pub propagation: SimTime,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            capacity: 12_500_000_000,
            propagation: SimTime::from_ns(25),
        }
    }
}

impl LinkConfig {
    pub fn serialization(&self, bytes: u64) -> SimTime {
        SimTime::serialization(bytes, self.capacity)
    }

    /// One-hop latency of a control frame.
    pub fn control_latency(&self) -> SimTime {
        self.propagation + self.serialization(CONTROL_FRAME_BYTES)
    }
}

/// Congestion-severity information attached by an enhanced congestion point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityStamp {
    /// Capacity of the congested output link, bytes/second.
    pub root_capacity: u64,
    pub contributing_flows: u32,
    /// Output occupancy over the marking threshold, in 1/256 steps.
    pub occupancy_ratio_q8: u16,
}

impl SeverityStamp {
    pub fn new(
        root_capacity: u64,
        contributing_flows: u32,
        occupancy: u64,
        threshold: u64,
    ) -> Self {
        let q = (occupancy as u128 * 256 / threshold.max(1) as u128).min(u16::MAX as u128);
        SeverityStamp {
            root_capacity,
            contributing_flows: contributing_flows.max(1),
            occupancy_ratio_q8: q as u16,
        }
    }

    pub fn occupancy_ratio(&self) -> f64 {
        self.occupancy_ratio_q8 as f64 / 256.0
    }

    pub fn fair_share(&self) -> f64 {
        self.root_capacity as f64 / self.contributing_flows as f64
    }

    /// `true` if `self` implies a strictly smaller fair share than `other`.
    pub fn tighter_than(&self, other: &SeverityStamp) -> bool {
        (self.root_capacity as u128) * (other.contributing_flows as u128)
            < (other.root_capacity as u128) * (self.contributing_flows as u128)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub size: u32,
    pub ecn_marked: bool,
    pub severity: Option<SeverityStamp>,
    pub injected_at: SimTime,
}

impl Packet {
    pub fn new(id: u64, flow: FlowId, src: HostId, dst: HostId, size: u32, at: SimTime) -> Self {
        Packet {
            id,
            flow,
            src,
            dst,
            size,
            ecn_marked: false,
            severity: None,
            injected_at: at,
        }
    }

    /// Keep whichever stamp implies the smaller fair share.
    pub fn merge_stamp(&mut self, stamp: SeverityStamp) {
        match self.severity {
            Some(old) if !stamp.tighter_than(&old) => {}
            _ => self.severity = Some(stamp),
        }
    }
}

/// Result of starting a transmission on one direction of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    /// The transmitter is free again.
    pub done_at: SimTime,
    /// Last bit reaches the far end.
    pub arrives_at: SimTime,
}

/// One direction of a full-duplex link, as seen by its transmitter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transmitter {
    pub busy_until: SimTime,
    /// Set by a PAUSE from the receiver, cleared by RESUME.
    pub paused: bool,
}

impl Transmitter {
    pub fn is_idle(&self, t: SimTime) -> bool {
        self.busy_until <= t
    }

    pub fn can_send(&self, t: SimTime) -> bool {
        self.is_idle(t) && !self.paused
    }

    pub fn transmit(
        &mut self,
        link: &LinkConfig,
        bytes: u64,
        start: SimTime,
    ) -> Result<Transmission, FabricError> {
        if start < self.busy_until {
            return Err(FabricError::LinkBusy {
                busy_until: self.busy_until,
                start,
            });
        }
        let done_at = start + link.serialization(bytes);
        self.busy_until = done_at;
        Ok(Transmission {
            done_at,
            arrives_at: done_at + link.propagation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_kib_at_100g_arrives_after_serialization_plus_propagation() {
        let link = LinkConfig::default();
        let mut tx = Transmitter::default();
        let t = tx.transmit(&link, 1024, SimTime::ZERO).unwrap();
        assert_eq!(t.done_at, SimTime(81_920));
        assert_eq!(t.arrives_at, SimTime(106_920));
    }

    #[test]
    fn zero_propagation() {
        let link = LinkConfig {
            propagation: SimTime::ZERO,
            ..LinkConfig::default()
        };
        let t = Transmitter::default()
            .transmit(&link, 1024, SimTime(10))
            .unwrap();
        assert_eq!(t.arrives_at, SimTime(10 + 81_920));
    }

    #[test]
    fn overlapping_same_direction_is_rejected() {
        let link = LinkConfig::default();
        let mut tx = Transmitter::default();
        tx.transmit(&link, 1024, SimTime::ZERO).unwrap();
        let err = tx.transmit(&link, 1024, SimTime(1_000)).unwrap_err();
        assert!(matches!(err, FabricError::LinkBusy { .. }));
        assert!(tx.transmit(&link, 1024, SimTime(81_920)).is_ok());
    }

    #[test]
    fn full_duplex_directions_are_independent() {
        let link = LinkConfig::default();
        let mut a_to_b = Transmitter::default();
        let mut b_to_a = Transmitter::default();
        assert!(a_to_b.transmit(&link, 1024, SimTime::ZERO).is_ok());
        assert!(b_to_a.transmit(&link, 1024, SimTime(100)).is_ok());
    }

    #[test]
    fn control_frame_latency() {
        assert_eq!(LinkConfig::default().control_latency(), SimTime(30_120));
    }

    #[test]
    fn stamp_merge_keeps_smaller_share() {
        let mut p = Packet::new(0, 0, 0, 16, 1024, SimTime::ZERO);
        p.merge_stamp(SeverityStamp::new(12_500_000_000, 3, 20_000, 15_360));
        p.merge_stamp(SeverityStamp::new(12_500_000_000, 4, 20_000, 15_360));
        assert_eq!(p.severity.unwrap().contributing_flows, 4);
        p.merge_stamp(SeverityStamp::new(12_500_000_000, 2, 20_000, 15_360));
        assert_eq!(p.severity.unwrap().contributing_flows, 4);
    }

    #[test]
    fn stamp_ratio_quantization() {
        let s = SeverityStamp::new(1, 1, 15_360, 15_360);
        assert_eq!(s.occupancy_ratio_q8, 256);
        let s = SeverityStamp::new(1, 1, 20 * 1024, 15_360);
        assert_eq!(s.occupancy_ratio_q8, 341);
        let s = SeverityStamp::new(1, 1, u64::MAX / 512, 1);
        assert_eq!(s.occupancy_ratio_q8, u16::MAX);
    }
}
