//! Baseline DCQCN reaction point.
//!
//! Rate cut on every CNP, then staged recovery driven by two independent
//! counters (bytes sent and timer periods): fast recovery while both are at
//! most `F`, additive increase once either exceeds `F`, hyper increase once
//! both do. A separate timer decays `alpha` while no CNP arrives.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcqcnParams<S> {
    pub line_rate: S,
    pub min_rate: S,
    pub g: S,
    pub r_ai: S,
    pub r_hai: S,
    pub f: u32,
    pub byte_threshold: u64,
    pub rate_timer: SimTime,
    pub alpha_timer: SimTime,
}

impl<S: Scalar> DcqcnParams<S> {
    /// Defaults at a 100 Gb/s line rate.
    pub fn with_line_rate(line_rate: S) -> Self {
        DcqcnParams {
            line_rate,
            // 10 Mb/s
            min_rate: S::from_int(1_250_000),
            g: S::from_ratio(1, 256),
            // 40 Mb/s and 200 Mb/s
            r_ai: S::from_int(5_000_000),
            r_hai: S::from_int(25_000_000),
            f: 5,
            byte_threshold: 10 * 1024 * 1024,
            rate_timer: SimTime::from_us(1_500),
            alpha_timer: SimTime::from_us(55),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncreaseTrigger {
    ByteCounter,
    Timer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncreaseKind {
    FastRecovery,
    Additive,
    Hyper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpState<S> {
    /// Current rate, bytes/second.
    pub rc: S,
    /// Target rate.
    pub rt: S,
    pub alpha: S,
    /// Bytes sent since the last byte-counter stage.
    pub byte_counter: u64,
    pub byte_stage: u32,
    pub timer_stage: u32,
    pub cnps: u64,
}

impl<S: Scalar> RpState<S> {
    pub fn new(params: &DcqcnParams<S>) -> Self {
        RpState {
            rc: params.line_rate.clone(),
            rt: params.line_rate.clone(),
            alpha: S::one(),
            byte_counter: 0,
            byte_stage: 0,
            timer_stage: 0,
            cnps: 0,
        }
    }

    pub fn on_cnp(&mut self, p: &DcqcnParams<S>) {
        let one = S::one();
        self.rt = self.rc.clone();
        let cut = one.clone() - self.alpha.clone() * S::half();
        self.rc = (self.rc.clone() * cut).max_of(p.min_rate.clone());
        self.alpha = (one - p.g.clone()) * self.alpha.clone() + p.g.clone();
        self.byte_counter = 0;
        self.byte_stage = 0;
        self.timer_stage = 0;
        self.cnps += 1;
    }

    /// One alpha-timer period without a CNP.
    pub fn on_alpha_timer(&mut self, p: &DcqcnParams<S>) {
        self.alpha = (S::one() - p.g.clone()) * self.alpha.clone();
    }

    pub fn on_increase(&mut self, p: &DcqcnParams<S>, trigger: IncreaseTrigger) -> IncreaseKind {
        match trigger {
            IncreaseTrigger::ByteCounter => self.byte_stage += 1,
            IncreaseTrigger::Timer => self.timer_stage += 1,
        }
        let hi = self.byte_stage.max(self.timer_stage);
        let lo = self.byte_stage.min(self.timer_stage);
        let kind = if hi <= p.f {
            IncreaseKind::FastRecovery
        } else if lo > p.f {
            IncreaseKind::Hyper
        } else {
            IncreaseKind::Additive
        };
        match kind {
            IncreaseKind::FastRecovery => {}
            IncreaseKind::Additive => {
                self.rt = (self.rt.clone() + p.r_ai.clone()).min_of(p.line_rate.clone());
            }
            IncreaseKind::Hyper => {
                self.rt = (self.rt.clone() + p.r_hai.clone()).min_of(p.line_rate.clone());
            }
        }
        self.rc = (self.rc.clone() + self.rt.clone()) * S::half();
        kind
    }

    /// Account sent bytes; fires one byte-counter increase per full
    /// threshold crossed. Returns how many fired.
    pub fn on_bytes_sent(&mut self, p: &DcqcnParams<S>, bytes: u64) -> u32 {
        self.byte_counter += bytes;
        let mut fired = 0;
        while self.byte_counter >= p.byte_threshold {
            self.byte_counter -= p.byte_threshold;
            self.on_increase(p, IncreaseTrigger::ByteCounter);
            fired += 1;
        }
        fired
    }

    pub fn at_line_rate(&self, p: &DcqcnParams<S>) -> bool {
        self.rc >= p.line_rate
    }
}
