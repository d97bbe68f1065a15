//! Input-queued switch with a shared buffer pool and PFC.
//!
//! Every input port owns one FIFO. Only FIFO heads are eligible for output
//! arbitration, so a head waiting on a busy or paused output blocks the
//! packets behind it (head-of-line blocking). Alongside the FIFOs the switch
//! keeps, per output port, the bytes and the set of flows currently resident
//! anywhere in the switch and bound for that output.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FlowId, LinkConfig, MarkKind, MarkingPolicy, Packet, Transmitter};
use crate::engine::SimTime;
use crate::error::FabricError;
use crate::topology::{PortId, SwitchId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfcConfig {
    pub xoff: u64,
    pub xon: u64,
    pub headroom: u64,
}

impl Default for PfcConfig {
    fn default() -> Self {
        PfcConfig {
            xoff: 384 * 1024,
            xon: 352 * 1024,
            headroom: 128 * 1024,
        }
    }
}

impl PfcConfig {
    /// Worst-case bytes that can still land after a PAUSE is emitted: the
    /// frame's trip upstream, the packet already on the wire and the one the
    /// transmitter may have just started.
    pub fn required_headroom(link: &LinkConfig, mtu: u64) -> u64 {
        let rtt_ps = 2 * link.propagation.as_ps() as u128;
        let in_flight = (rtt_ps * link.capacity as u128).div_ceil(1_000_000_000_000);
        in_flight as u64 + mtu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfcFrame {
    Pause,
    Resume,
}

#[derive(Debug, Clone)]
struct Queued {
    packet: Packet,
    out_port: PortId,
}

#[derive(Debug, Clone, Default)]
pub struct InputPort {
    fifo: VecDeque<Queued>,
    pub occupancy: u64,
    /// A PAUSE is outstanding towards the upstream transmitter.
    pub paused_upstream: bool,
    pub max_occupancy: u64,
}

impl InputPort {
    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn head_output(&self) -> Option<PortId> {
        self.fifo.front().map(|q| q.out_port)
    }
}

#[derive(Debug, Clone, Default)]
pub struct OutputPort {
    pub tx: Transmitter,
    pub link: LinkConfig,
    /// Bytes resident in the switch bound for this output.
    pub occupancy: u64,
    flows: BTreeMap<FlowId, u32>,
    rr_next: usize,
}

impl OutputPort {
    pub fn contributing_flows(&self) -> u32 {
        self.flows.len() as u32
    }

    pub fn has_flow(&self, flow: FlowId) -> bool {
        self.flows.contains_key(&flow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub marked: bool,
    pub pfc: Option<PfcFrame>,
    /// The packet is at the head of its FIFO and its output may be kicked.
    pub at_head: bool,
}

#[derive(Debug, Clone)]
pub struct Dequeued {
    pub packet: Packet,
    pub in_port: PortId,
    pub pfc: Option<PfcFrame>,
    /// Output the new head of `in_port` is waiting on, if any.
    pub next_head_output: Option<PortId>,
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    pub id: SwitchId,
    pub inputs: Vec<InputPort>,
    pub outputs: Vec<OutputPort>,
    pub pool_used: u64,
    pub pool_capacity: u64,
    pub input_limit: u64,
    pub pfc: PfcConfig,
    pub pauses_sent: u64,
    pub max_input_occupancy: u64,
}

impl SwitchState {
    pub fn new(
        id: SwitchId,
        links: Vec<LinkConfig>,
        input_limit: u64,
        pool_capacity: u64,
        pfc: PfcConfig,
    ) -> Self {
        let n = links.len();
        SwitchState {
            id,
            inputs: vec![InputPort::default(); n],
            outputs: links
                .into_iter()
                .map(|link| OutputPort {
                    link,
                    ..OutputPort::default()
                })
                .collect(),
            pool_used: 0,
            pool_capacity,
            input_limit,
            pfc,
            pauses_sent: 0,
            max_input_occupancy: 0,
        }
    }

    pub fn port_count(&self) -> usize {
        self.inputs.len()
    }

    /// Enqueue an arriving packet, update all counters, apply the marking
    /// policy (if any) and evaluate PFC on the input.
    pub fn receive(
        &mut self,
        mut packet: Packet,
        in_port: PortId,
        out_port: PortId,
        marking: Option<&MarkingPolicy>,
        rng: &mut impl Rng,
    ) -> Result<ReceiveOutcome, FabricError> {
        let size = packet.size as u64;
        let input = &self.inputs[in_port as usize];
        if input.occupancy + size > self.input_limit {
            return Err(FabricError::BufferOverflow {
                switch: self.id,
                port: in_port,
                occupancy: input.occupancy,
                size,
                limit: self.input_limit,
            });
        }

        self.pool_used += size;
        let input = &mut self.inputs[in_port as usize];
        input.occupancy += size;
        input.max_occupancy = input.max_occupancy.max(input.occupancy);
        self.max_input_occupancy = self.max_input_occupancy.max(input.occupancy);
        let input_occupancy = input.occupancy;

        let output = &mut self.outputs[out_port as usize];
        output.occupancy += size;
        *output.flows.entry(packet.flow).or_insert(0) += 1;

        let marked = match marking {
            None => false,
            Some(policy) => match policy.kind {
                MarkKind::Cp => policy.cp_mark(&mut packet, input_occupancy, rng),
                MarkKind::Ecp => policy.ecp_mark(
                    &mut packet,
                    output.occupancy,
                    output.contributing_flows(),
                    output.link.capacity,
                    rng,
                ),
            },
        };

        let input = &mut self.inputs[in_port as usize];
        input.fifo.push_back(Queued { packet, out_port });
        let at_head = input.fifo.len() == 1;
        let pfc = self.pfc_check(in_port);
        Ok(ReceiveOutcome {
            marked,
            pfc,
            at_head,
        })
    }

    /// Edge-triggered XOFF/XON evaluation for one input.
    pub fn pfc_check(&mut self, in_port: PortId) -> Option<PfcFrame> {
        let input = &mut self.inputs[in_port as usize];
        if !input.paused_upstream && input.occupancy >= self.pfc.xoff {
            input.paused_upstream = true;
            self.pauses_sent += 1;
            Some(PfcFrame::Pause)
        } else if input.paused_upstream && input.occupancy < self.pfc.xon {
            input.paused_upstream = false;
            Some(PfcFrame::Resume)
        } else {
            None
        }
    }

    /// Round-robin over inputs whose head is bound for `out_port`. Returns
    /// `None` when the output cannot send at `t` or no head is eligible.
    pub fn arbitrate(&mut self, out_port: PortId, t: SimTime) -> Option<Dequeued> {
        let n = self.inputs.len();
        let output = &self.outputs[out_port as usize];
        if !output.tx.can_send(t) {
            return None;
        }
        let start = output.rr_next;
        let chosen = (0..n)
            .map(|i| (start + i) % n)
            .find(|&i| self.inputs[i].head_output() == Some(out_port))?;

        let input = &mut self.inputs[chosen];
        let Queued { packet, .. } = input.fifo.pop_front().expect("head checked");
        let size = packet.size as u64;
        input.occupancy -= size;
        let next_head_output = input.head_output();
        self.pool_used -= size;

        let output = &mut self.outputs[out_port as usize];
        output.rr_next = (chosen + 1) % n;
        output.occupancy -= size;
        match output.flows.get_mut(&packet.flow) {
            Some(c) if *c > 1 => *c -= 1,
            _ => {
                output.flows.remove(&packet.flow);
            }
        }

        let pfc = self.pfc_check(chosen as PortId);
        Some(Dequeued {
            packet,
            in_port: chosen as PortId,
            pfc,
            next_head_output,
        })
    }

    /// Full consistency walk over the accounting state.
    pub fn audit(&self) -> Result<(), FabricError> {
        let fail = |detail: String| FabricError::AuditFailure {
            switch: self.id,
            detail,
        };
        let mut in_sum = 0u64;
        let mut per_output = vec![0u64; self.outputs.len()];
        let mut per_output_flows: Vec<BTreeMap<FlowId, u32>> =
            vec![BTreeMap::new(); self.outputs.len()];
        for (i, input) in self.inputs.iter().enumerate() {
            let bytes: u64 = input.fifo.iter().map(|q| q.packet.size as u64).sum();
            if bytes != input.occupancy {
                return Err(fail(format!(
                    "input {i}: counter {} but fifo holds {bytes}",
                    input.occupancy
                )));
            }
            if input.occupancy > self.input_limit {
                return Err(fail(format!("input {i} above hard limit")));
            }
            if input.occupancy > self.pfc.xoff + self.pfc.headroom {
                return Err(fail(format!("input {i} above xoff + headroom")));
            }
            in_sum += bytes;
            for q in &input.fifo {
                per_output[q.out_port as usize] += q.packet.size as u64;
                *per_output_flows[q.out_port as usize]
                    .entry(q.packet.flow)
                    .or_insert(0) += 1;
            }
        }
        if in_sum != self.pool_used {
            return Err(fail(format!(
                "pool counter {} but inputs hold {in_sum}",
                self.pool_used
            )));
        }
        if self.pool_used > self.pool_capacity {
            return Err(fail("shared pool exceeded".into()));
        }
        let out_sum: u64 = self.outputs.iter().map(|o| o.occupancy).sum();
        if out_sum != self.pool_used {
            return Err(fail(format!(
                "per-output counters sum to {out_sum}, pool holds {}",
                self.pool_used
            )));
        }
        for (p, o) in self.outputs.iter().enumerate() {
            if o.occupancy != per_output[p] {
                return Err(fail(format!("output {p} counter mismatch")));
            }
            if o.flows != per_output_flows[p] {
                return Err(fail(format!("output {p} flow set mismatch")));
            }
        }
        Ok(())
    }
}
