//! Enhanced reaction point.
//!
//! A CNP carrying a severity stamp pins the rate to the advertised fair share
//! of the congested link (never raising it). After a quiet period without
//! CNPs the rate grows multiplicatively on a per-flow grid whose phase is
//! derived from the flow id and the run seed, so flows throttled together do
//! not recover in lockstep.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::fabric::{FlowId, SeverityStamp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpParams<S> {
    pub line_rate: S,
    pub quiet: SimTime,
    pub step: SimTime,
    pub beta: S,
    pub max_jitter: SimTime,
    /// Gain for the fallback cut applied to a CNP without a stamp.
    pub g: S,
}

impl<S: Scalar> ErpParams<S> {
    pub fn with_line_rate(line_rate: S) -> Self {
        ErpParams {
            line_rate,
            quiet: SimTime::from_us(100),
            step: SimTime::from_us(50),
            beta: S::from_ratio(1, 4),
            max_jitter: SimTime::from_us(25),
            g: S::from_ratio(1, 256),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErpReaction {
    /// Rate set from the stamp (possibly unchanged by the min rule).
    Advertised,
    /// No stamp: baseline multiplicative cut applied instead.
    MissingSeverity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErpState<S> {
    pub rc: S,
    pub last_cnp_at: Option<SimTime>,
    pub jitter_phase: SimTime,
    pub fallback_alpha: S,
    pub anomalies: u64,
    pub cnps: u64,
}

/// SplitMix64 finalizer; stable across platforms and toolchains.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Recovery-grid offset in `[0, max_jitter]` for a flow.
pub fn jitter_phase(flow: FlowId, seed: u64, max_jitter: SimTime) -> SimTime {
    let h = mix64(seed ^ mix64(flow as u64));
    SimTime(h % (max_jitter.as_ps() + 1))
}

impl<S: Scalar> ErpState<S> {
    pub fn new(params: &ErpParams<S>, flow: FlowId, seed: u64) -> Self {
        ErpState {
            rc: params.line_rate.clone(),
            last_cnp_at: None,
            jitter_phase: jitter_phase(flow, seed, params.max_jitter),
            fallback_alpha: S::one(),
            anomalies: 0,
            cnps: 0,
        }
    }

    pub fn on_cnp(
        &mut self,
        params: &ErpParams<S>,
        severity: Option<&SeverityStamp>,
        now: SimTime,
    ) -> ErpReaction {
        self.last_cnp_at = Some(now);
        self.cnps += 1;
        match severity {
            Some(stamp) => {
                let share = S::from_ratio(
                    stamp.root_capacity as i64,
                    stamp.contributing_flows.max(1) as i64,
                );
                self.rc = self.rc.clone().min_of(share);
                ErpReaction::Advertised
            }
            None => {
                let one = S::one();
                let cut = one.clone() - self.fallback_alpha.clone() * S::half();
                self.rc = self.rc.clone() * cut;
                self.fallback_alpha =
                    (one - params.g.clone()) * self.fallback_alpha.clone() + params.g.clone();
                self.anomalies += 1;
                ErpReaction::MissingSeverity
            }
        }
    }

    pub fn is_quiet(&self, params: &ErpParams<S>, t: SimTime) -> bool {
        match self.last_cnp_at {
            None => true,
            Some(last) => t.saturating_sub(last) >= params.quiet,
        }
    }

    /// One recovery step at `t`; applied only after the quiet period.
    /// Returns whether the rate changed.
    pub fn recover(&mut self, params: &ErpParams<S>, t: SimTime) -> bool {
        if !self.is_quiet(params, t) || self.rc >= params.line_rate {
            return false;
        }
        let grown = self.rc.clone() * (S::one() + params.beta.clone());
        self.rc = grown.min_of(params.line_rate.clone());
        true
    }

    /// First grid instant `phase + m * step` strictly after `t`.
    pub fn next_step_after(&self, params: &ErpParams<S>, t: SimTime) -> SimTime {
        let phase = self.jitter_phase.as_ps();
        let step = params.step.as_ps().max(1);
        let t = t.as_ps();
        if t < phase {
            return SimTime(phase);
        }
        let m = (t - phase) / step + 1;
        SimTime(phase + m * step)
    }

    pub fn at_line_rate(&self, params: &ErpParams<S>) -> bool {
        self.rc >= params.line_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    const LINE: f64 = 12.5e9;

    fn params() -> ErpParams<f64> {
        ErpParams::with_line_rate(LINE)
    }

    fn stamp(flows: u32) -> SeverityStamp {
        SeverityStamp::new(12_500_000_000, flows, 16 * 1024, 15 * 1024)
    }

    #[test]
    fn four_contributors_give_fair_share() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        assert_eq!(
            s.on_cnp(&p, Some(&stamp(4)), SimTime::ZERO),
            ErpReaction::Advertised
        );
        assert_eq!(s.rc, 3.125e9);
    }

    #[test]
    fn single_contributor_keeps_line_rate() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        s.on_cnp(&p, Some(&stamp(1)), SimTime::ZERO);
        assert_eq!(s.rc, LINE);
    }

    #[test]
    fn min_rule_never_raises() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        s.on_cnp(&p, Some(&stamp(4)), SimTime::ZERO);
        s.on_cnp(&p, Some(&stamp(2)), SimTime::from_us(1));
        assert_eq!(s.rc, 3.125e9);
    }

    #[test]
    fn missing_severity_falls_back() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        assert_eq!(
            s.on_cnp(&p, None, SimTime::ZERO),
            ErpReaction::MissingSeverity
        );
        assert_eq!(s.rc, 6.25e9);
        assert_eq!(s.anomalies, 1);
    }

    #[test]
    fn recovery_step_and_saturation() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        s.on_cnp(&p, Some(&stamp(4)), SimTime::ZERO);
        assert!(!s.recover(&p, SimTime::from_us(99)));
        assert!(s.recover(&p, SimTime::from_us(100)));
        assert_eq!(s.rc, 3.90625e9);
        while s.recover(&p, SimTime::from_ms(1)) {}
        assert_eq!(s.rc, LINE);
        assert!(!s.recover(&p, SimTime::from_ms(2)));
    }

    #[test]
    fn recovery_exact_in_rationals() {
        let p = ErpParams::with_line_rate(BigRational::from_int(12_500_000_000));
        let mut s = ErpState::new(&p, 0, 1);
        s.on_cnp(&p, Some(&stamp(4)), SimTime::ZERO);
        s.recover(&p, SimTime::from_ms(1));
        assert_eq!(s.rc, BigRational::from_ratio(3_906_250_000, 1));
    }

    #[test]
    fn jitter_phases_differ_between_flows() {
        let max = SimTime::from_us(25);
        let phases: Vec<_> = [0u32, 1, 3, 4, 8]
            .iter()
            .map(|f| jitter_phase(*f, 42, max))
            .collect();
        for (i, a) in phases.iter().enumerate() {
            assert!(*a <= max);
            for b in &phases[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(jitter_phase(3, 42, max), jitter_phase(3, 42, max));
        assert_ne!(jitter_phase(3, 42, max), jitter_phase(3, 43, max));
    }

    #[test]
    fn grid_steps() {
        let p = params();
        let mut s = ErpState::new(&p, 0, 1);
        s.jitter_phase = SimTime::from_us(7);
        assert_eq!(s.next_step_after(&p, SimTime::ZERO), SimTime::from_us(7));
        assert_eq!(
            s.next_step_after(&p, SimTime::from_us(7)),
            SimTime::from_us(57)
        );
        assert_eq!(
            s.next_step_after(&p, SimTime::from_us(60)),
            SimTime::from_us(107)
        );
    }
}
