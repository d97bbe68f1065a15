use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Packet, SeverityStamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkKind {
    /// Mark on the occupancy of the input FIFO the packet joins.
    Cp,
    /// Mark on the bytes resident in the switch bound for the packet's
    /// output port, and stamp severity.
    Ecp,
}

/// RED-style marking thresholds, applied at enqueue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkingPolicy {
    pub kind: MarkKind,
    pub k_min: u64,
    pub k_max: u64,
    pub p_max: f64,
}

impl MarkingPolicy {
    pub fn single_threshold(kind: MarkKind, v: u64) -> Self {
        MarkingPolicy {
            kind,
            k_min: v,
            k_max: v,
            p_max: 1.0,
        }
    }

    /// The threshold severity ratios are measured against.
    pub fn threshold(&self) -> u64 {
        self.k_min
    }

    pub fn mark_probability(&self, occupancy: u64) -> f64 {
        if occupancy < self.k_min {
            0.0
        } else if self.k_min == self.k_max || occupancy > self.k_max {
            1.0
        } else {
            self.p_max * (occupancy - self.k_min) as f64 / (self.k_max - self.k_min) as f64
        }
    }

    /// Draws from `rng` only when the probability is strictly between 0 and 1,
    /// so the deterministic single-threshold case never consumes randomness.
    fn decide(&self, occupancy: u64, rng: &mut impl Rng) -> bool {
        let p = self.mark_probability(occupancy);
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            rng.gen::<f64>() < p
        }
    }

    /// Baseline congestion point. `input_occupancy` is the FIFO occupancy
    /// after the packet was enqueued.
    pub fn cp_mark(&self, packet: &mut Packet, input_occupancy: u64, rng: &mut impl Rng) -> bool {
        let marked = self.decide(input_occupancy, rng);
        if marked {
            packet.ecn_marked = true;
        }
        marked
    }

    /// Enhanced congestion point. `output_occupancy` and `output_flows` are
    /// the resident bytes and distinct flows bound for the packet's output
    /// after it was enqueued.
    pub fn ecp_mark(
        &self,
        packet: &mut Packet,
        output_occupancy: u64,
        output_flows: u32,
        output_capacity: u64,
        rng: &mut impl Rng,
    ) -> bool {
        if !self.decide(output_occupancy, rng) {
            return false;
        }
        packet.ecn_marked = true;
        packet.merge_stamp(SeverityStamp::new(
            output_capacity,
            output_flows,
            output_occupancy,
            self.threshold(),
        ));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimTime;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const V: u64 = 15 * 1024;

    fn pkt() -> Packet {
        Packet::new(1, 0, 0, 16, 1024, SimTime::ZERO)
    }

    #[test]
    fn cp_threshold_is_inclusive() {
        let policy = MarkingPolicy::single_threshold(MarkKind::Cp, V);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = pkt();
        assert!(policy.cp_mark(&mut p, 15_360, &mut rng));
        assert!(p.ecn_marked);
        assert!(p.severity.is_none());
        let mut q = pkt();
        assert!(!policy.cp_mark(&mut q, 1_024, &mut rng));
        assert!(!q.ecn_marked);
    }

    #[test]
    fn red_midpoint_probability() {
        let policy = MarkingPolicy {
            kind: MarkKind::Cp,
            k_min: 10 * 1024,
            k_max: 20 * 1024,
            p_max: 1.0,
        };
        assert_eq!(policy.mark_probability(15 * 1024), 0.5);
        assert_eq!(policy.mark_probability(9 * 1024), 0.0);
        assert_eq!(policy.mark_probability(21 * 1024), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| policy.cp_mark(&mut pkt(), 15 * 1024, &mut rng))
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "observed {frac}");
    }

    #[test]
    fn ecp_marks_hot_output_only() {
        let policy = MarkingPolicy::single_threshold(MarkKind::Ecp, V);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hot = pkt();
        assert!(policy.ecp_mark(&mut hot, 20 * 1024, 4, 12_500_000_000, &mut rng));
        let stamp = hot.severity.unwrap();
        assert_eq!(stamp.contributing_flows, 4);
        assert_eq!(stamp.root_capacity, 12_500_000_000);
        assert_eq!(stamp.fair_share(), 3.125e9);

        let mut cold = pkt();
        assert!(!policy.ecp_mark(&mut cold, 4 * 1024, 1, 12_500_000_000, &mut rng));
        assert!(!cold.ecn_marked && cold.severity.is_none());
    }
}
