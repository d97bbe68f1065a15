//! End nodes: traffic sources, the NIC rate limiter, and the notification
//! and reaction points of both congestion-control stacks.

mod erp;
mod nic;
mod np;
mod rp;

pub use erp::{jitter_phase, ErpParams, ErpReaction, ErpState};
pub use nic::{FlowSource, Nic, NicPick};
pub use np::{cnp_latency, CnpMessage, NpPolicy, NpState};
pub use rp::{DcqcnParams, IncreaseKind, IncreaseTrigger, RpState};

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::fabric::FlowId;
use crate::topology::HostId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    /// MTU-sized packets pile up in the source queue at the demand rate,
    /// independent of what the NIC lets through.
    #[default]
    OpenLoopBacklogged,
    /// A packet exists only once the NIC limiter is ready to send it.
    ClosedLoopGated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    /// Bytes per second.
    pub demand_rate: u64,
    pub start: SimTime,
    pub stop: SimTime,
    pub mode: TrafficMode,
}

impl FlowSpec {
    /// Packets an open-loop source produces over `[start, stop)`: packet `k`
    /// (1-based) is ready once `k * mtu` bytes have been produced.
    pub fn open_loop_total(&self, mtu: u32) -> u64 {
        self.produced_packets(self.stop, mtu)
    }

    fn produced_packets(&self, t: SimTime, mtu: u32) -> u64 {
        if t <= self.start {
            return 0;
        }
        let elapsed = (t.min(self.stop) - self.start).as_ps() as u128;
        (elapsed * self.demand_rate as u128 / (mtu as u128 * 1_000_000_000_000)) as u64
    }

    /// Instant at which open-loop packet `k` (1-based) becomes ready.
    pub fn ready_time(&self, k: u64, mtu: u32) -> SimTime {
        let ps = (k as u128 * mtu as u128 * 1_000_000_000_000).div_ceil(self.demand_rate as u128);
        self.start + SimTime(ps as u64)
    }

    pub fn is_active(&self, t: SimTime) -> bool {
        self.start <= t && t < self.stop
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> FlowSpec {
        FlowSpec {
            id: 0,
            src: 0,
            dst: 16,
            demand_rate: 12_500_000_000,
            start: SimTime::from_ms(1),
            stop: SimTime::from_ms(3),
            mode: TrafficMode::OpenLoopBacklogged,
        }
    }

    #[test]
    fn two_ms_at_line_rate() {
        // floor(12.5e9 * 0.002 / 1024)
        assert_eq!(spec().open_loop_total(1024), 24_414);
    }

    #[test]
    fn ready_times_match_production() {
        let s = spec();
        assert_eq!(s.ready_time(1, 1024), SimTime::from_ms(1) + SimTime(81_920));
        for k in [1u64, 2, 1000, 24_414] {
            let t = s.ready_time(k, 1024);
            assert_eq!(s.produced_packets(t, 1024), k);
            assert_eq!(s.produced_packets(t - SimTime(1), 1024), k - 1);
        }
        assert!(s.ready_time(24_415, 1024) > s.stop);
    }
}
