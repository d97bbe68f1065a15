//! Wires topology, switches, hosts and the recorder into one event-driven
//! run.
//!
//! PAUSE/RESUME frames and CNPs travel out of band: they take the control
//! latency of each link they cross but never occupy a data transmitter.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, EventHandle, RunBound, SimTime};
use crate::error::{FabricError, SimError};
use crate::fabric::{LinkConfig, MarkingPolicy, Packet, PfcFrame, SeverityStamp, SwitchState};
use crate::host::{
    cnp_latency, DcqcnParams, ErpParams, ErpState, FlowSource, IncreaseTrigger, Nic, NicPick,
    NpPolicy, NpState, RpState,
};
use crate::metrics::{Record, Recorder, RunMeta, RunReport};
use crate::scenario::{Mechanism, ScenarioConfig};
use crate::topology::{Endpoint, HostId, NodeId, PortId, SwitchId, Topology};

#[derive(Debug, Clone)]
pub enum Event {
    /// Last bit of a data packet reaches `to`.
    Arrival {
        to: Endpoint,
        packet: Packet,
    },
    /// A PFC frame reaches the transmitter at `to`.
    Pfc {
        to: Endpoint,
        frame: PfcFrame,
    },
    /// The transmitter at `at` finished serializing.
    TransmitDone {
        at: Endpoint,
    },
    NicWake {
        host: HostId,
    },
    FlowStart {
        flow: usize,
    },
    Cnp {
        flow: usize,
        severity: Option<SeverityStamp>,
    },
    RateTimer {
        flow: usize,
    },
    AlphaTimer {
        flow: usize,
    },
    ErpStep {
        flow: usize,
    },
}

/// Reaction-point state of one flow.
#[derive(Debug, Clone)]
enum Reaction {
    None,
    Dcqcn {
        rp: RpState<f64>,
        armed: bool,
        rate_timer: Option<EventHandle>,
        alpha_timer: Option<EventHandle>,
    },
    Rev {
        erp: ErpState<f64>,
        step: Option<EventHandle>,
    },
}

struct Network {
    topo: Topology,
    link: LinkConfig,
    switches: Vec<SwitchState>,
    nics: Vec<Nic>,
    wakes: Vec<Option<EventHandle>>,
    sources: Vec<FlowSource>,
    reactions: Vec<Reaction>,
    np: Vec<NpState>,
    reverse_latency: Vec<SimTime>,
    marking: Option<MarkingPolicy>,
    np_policy: Option<NpPolicy>,
    dcqcn: DcqcnParams<f64>,
    erp: ErpParams<f64>,
    rng: ChaCha8Rng,
    recorder: Recorder,
    audit: bool,
    next_packet_id: u64,
}

type Eng = Engine<Event>;

impl Network {
    fn build(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let topo = Topology::build_with_rule(
            cfg.topology.half_radix,
            cfg.topology.stages,
            cfg.topology.up_port_rule,
        )?;
        let link = cfg.link_config();
        let switches = topo
            .switches()
            .iter()
            .map(|sw| {
                SwitchState::new(
                    sw.id,
                    vec![link; sw.ports.len()],
                    cfg.buffer.input_limit_bytes,
                    cfg.buffer.pool_bytes,
                    cfg.pfc_config(),
                )
            })
            .collect();
        let specs = cfg.flow_specs();
        let mut per_host = vec![Vec::new(); topo.host_count() as usize];
        let mut reverse_latency = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            per_host[s.src as usize].push(i);
            let hops = topo.route(s.src, s.dst)?.links();
            reverse_latency.push(cnp_latency(std::iter::repeat_n(&link, hops)));
        }
        let dcqcn = cfg.dcqcn_params();
        let erp = cfg.erp_params();
        let reactions = specs
            .iter()
            .map(|s| match cfg.cc.mechanism {
                Mechanism::PfcOnly => Reaction::None,
                Mechanism::Dcqcn => Reaction::Dcqcn {
                    rp: RpState::new(&dcqcn),
                    armed: false,
                    rate_timer: None,
                    alpha_timer: None,
                },
                Mechanism::DcqcnRev => Reaction::Rev {
                    erp: ErpState::new(&erp, s.id, cfg.seed),
                    step: None,
                },
            })
            .collect();
        let recorder = Recorder::new(cfg.bin_width(), specs.iter().map(|s| s.id));
        Ok(Network {
            switches,
            nics: per_host.into_iter().map(Nic::new).collect(),
            wakes: vec![None; topo.host_count() as usize],
            np: vec![NpState::default(); specs.len()],
            sources: specs
                .into_iter()
                .map(|s| FlowSource::new(s, cfg.buffer.mtu_bytes))
                .collect(),
            reactions,
            reverse_latency,
            marking: cfg.marking_policy(),
            np_policy: cfg.np_policy(),
            dcqcn,
            erp,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            recorder,
            audit: cfg.audit,
            next_packet_id: 0,
            topo,
            link,
        })
    }

    fn rate_of(&self, flow: usize) -> f64 {
        match &self.reactions[flow] {
            Reaction::None => self.link.capacity as f64,
            Reaction::Dcqcn { rp, .. } => rp.rc,
            Reaction::Rev { erp, .. } => erp.rc,
        }
    }

    fn peer(&self, at: Endpoint) -> Result<Endpoint, SimError> {
        self.topo.peer(at).ok_or_else(|| {
            SimError::Fabric(FabricError::AuditFailure {
                switch: match at.node {
                    NodeId::Switch(s) => s,
                    NodeId::Host(_) => u32::MAX,
                },
                detail: format!("unwired endpoint {at:?}"),
            })
        })
    }

    fn send_pfc(
        &mut self,
        eng: &mut Eng,
        sw: SwitchId,
        in_port: PortId,
        frame: PfcFrame,
    ) -> Result<(), SimError> {
        if frame == PfcFrame::Pause {
            self.recorder
                .record(Record::PauseSent { switch: sw }, eng.now());
        }
        let upstream = self.peer(Endpoint::switch(sw, in_port))?;
        eng.schedule_in(
            self.link.control_latency(),
            Event::Pfc {
                to: upstream,
                frame,
            },
        );
        Ok(())
    }

    fn kick_output(&mut self, eng: &mut Eng, sw: SwitchId, port: PortId) -> Result<(), SimError> {
        let t = eng.now();
        let Some(dq) = self.switches[sw as usize].arbitrate(port, t) else {
            return Ok(());
        };
        let out = &mut self.switches[sw as usize].outputs[port as usize];
        let tx = out.tx.transmit(&self.link, dq.packet.size as u64, t)?;
        let to = self.peer(Endpoint::switch(sw, port))?;
        eng.schedule(
            tx.arrives_at,
            Event::Arrival {
                to,
                packet: dq.packet,
            },
        )?;
        eng.schedule(
            tx.done_at,
            Event::TransmitDone {
                at: Endpoint::switch(sw, port),
            },
        )?;
        if let Some(frame) = dq.pfc {
            self.send_pfc(eng, sw, dq.in_port, frame)?;
        }
        if let Some(next) = dq.next_head_output {
            if next != port {
                self.kick_output(eng, sw, next)?;
            }
        }
        Ok(())
    }

    fn kick_nic(&mut self, eng: &mut Eng, host: HostId) -> Result<(), SimError> {
        let t = eng.now();
        let h = host as usize;
        if let Some(w) = self.wakes[h].take() {
            eng.cancel(w);
        }
        if !self.nics[h].uplink.can_send(t) {
            return Ok(());
        }
        let rates: Vec<f64> = (0..self.sources.len()).map(|f| self.rate_of(f)).collect();
        match self.nics[h].dequeue(t, &mut self.sources, |f| rates[f]) {
            NicPick::Send(f) => self.inject(eng, host, f),
            NicPick::WaitUntil(at) => {
                self.wakes[h] = Some(eng.schedule(at, Event::NicWake { host })?);
                Ok(())
            }
            NicPick::Idle => Ok(()),
        }
    }

    fn inject(&mut self, eng: &mut Eng, host: HostId, f: usize) -> Result<(), SimError> {
        let t = eng.now();
        let src = &mut self.sources[f];
        let size = src.take(t);
        let spec = &src.spec;
        let packet = Packet::new(self.next_packet_id, spec.id, spec.src, spec.dst, size, t);
        self.next_packet_id += 1;
        self.recorder.record(
            Record::Injected {
                flow: spec.id,
                bytes: size as u64,
            },
            t,
        );
        let tx = self.nics[host as usize]
            .uplink
            .transmit(&self.link, size as u64, t)?;
        let to = self.peer(Endpoint::host(host))?;
        eng.schedule(tx.arrives_at, Event::Arrival { to, packet })?;
        eng.schedule(
            tx.done_at,
            Event::TransmitDone {
                at: Endpoint::host(host),
            },
        )?;
        if let Reaction::Dcqcn {
            rp, armed: true, ..
        } = &mut self.reactions[f]
        {
            rp.on_bytes_sent(&self.dcqcn, size as u64);
        }
        Ok(())
    }

    fn arrive_at_switch(
        &mut self,
        eng: &mut Eng,
        sw: SwitchId,
        in_port: PortId,
        packet: Packet,
    ) -> Result<(), SimError> {
        let out = self.topo.next_port(sw, packet.dst);
        let outcome = self.switches[sw as usize].receive(
            packet,
            in_port,
            out,
            self.marking.as_ref(),
            &mut self.rng,
        )?;
        if let Some(frame) = outcome.pfc {
            self.send_pfc(eng, sw, in_port, frame)?;
        }
        if outcome.at_head {
            self.kick_output(eng, sw, out)?;
        }
        Ok(())
    }

    fn deliver(&mut self, eng: &mut Eng, host: HostId, packet: Packet) -> Result<(), SimError> {
        let t = eng.now();
        if packet.dst != host {
            return Err(FabricError::MisroutedPacket {
                packet_id: packet.id,
                expected: packet.dst,
                actual: host,
            }
            .into());
        }
        self.recorder.record(
            Record::Delivered {
                flow: packet.flow,
                bytes: packet.size as u64,
                marked: packet.ecn_marked,
            },
            t,
        );
        let Some(policy) = self.np_policy else {
            return Ok(());
        };
        let f = self.flow_index(packet.flow);
        if let Some(cnp) = self.np[f].on_delivery(&policy, &packet, t, self.reverse_latency[f]) {
            eng.schedule(
                cnp.deliver_at,
                Event::Cnp {
                    flow: f,
                    severity: cnp.severity,
                },
            )?;
        }
        Ok(())
    }

    fn flow_index(&self, id: u32) -> usize {
        self.sources
            .iter()
            .position(|s| s.spec.id == id)
            .expect("packet of a configured flow")
    }

    fn on_cnp(
        &mut self,
        eng: &mut Eng,
        f: usize,
        severity: Option<SeverityStamp>,
    ) -> Result<(), SimError> {
        let t = eng.now();
        let spec_id = self.sources[f].spec.id;
        self.recorder
            .record(Record::CnpReceived { flow: spec_id }, t);
        match &mut self.reactions[f] {
            Reaction::None => {}
            Reaction::Dcqcn {
                rp,
                armed,
                rate_timer,
                alpha_timer,
            } => {
                rp.on_cnp(&self.dcqcn);
                *armed = true;
                for h in [rate_timer.take(), alpha_timer.take()]
                    .into_iter()
                    .flatten()
                {
                    eng.cancel(h);
                }
                *rate_timer =
                    Some(eng.schedule_in(self.dcqcn.rate_timer, Event::RateTimer { flow: f }));
                *alpha_timer =
                    Some(eng.schedule_in(self.dcqcn.alpha_timer, Event::AlphaTimer { flow: f }));
            }
            Reaction::Rev { erp, step } => {
                erp.on_cnp(&self.erp, severity.as_ref(), t);
                if let Some(h) = step.take() {
                    eng.cancel(h);
                }
                let first =
                    erp.next_step_after(&self.erp, (t + self.erp.quiet).saturating_sub(SimTime(1)));
                *step = Some(eng.schedule(first, Event::ErpStep { flow: f })?);
            }
        }
        let host = self.sources[f].spec.src;
        self.kick_nic(eng, host)
    }

    fn on_rate_timer(&mut self, eng: &mut Eng, f: usize) -> Result<(), SimError> {
        let done = self.sources[f].is_finished(eng.now());
        if let Reaction::Dcqcn { rp, rate_timer, .. } = &mut self.reactions[f] {
            *rate_timer = None;
            if done {
                return Ok(());
            }
            rp.on_increase(&self.dcqcn, IncreaseTrigger::Timer);
            *rate_timer =
                Some(eng.schedule_in(self.dcqcn.rate_timer, Event::RateTimer { flow: f }));
        }
        let host = self.sources[f].spec.src;
        self.kick_nic(eng, host)
    }

    fn on_alpha_timer(&mut self, eng: &mut Eng, f: usize) {
        let done = self.sources[f].is_finished(eng.now());
        if let Reaction::Dcqcn {
            rp, alpha_timer, ..
        } = &mut self.reactions[f]
        {
            *alpha_timer = None;
            if done {
                return;
            }
            rp.on_alpha_timer(&self.dcqcn);
            *alpha_timer =
                Some(eng.schedule_in(self.dcqcn.alpha_timer, Event::AlphaTimer { flow: f }));
        }
    }

    fn on_erp_step(&mut self, eng: &mut Eng, f: usize) -> Result<(), SimError> {
        let t = eng.now();
        let done = self.sources[f].is_finished(t);
        let mut changed = false;
        if let Reaction::Rev { erp, step } = &mut self.reactions[f] {
            *step = None;
            if done {
                return Ok(());
            }
            changed = erp.recover(&self.erp, t);
            if !erp.at_line_rate(&self.erp) {
                let next = if erp.is_quiet(&self.erp, t) {
                    erp.next_step_after(&self.erp, t)
                } else {
                    let quiet_at = erp.last_cnp_at.unwrap_or(t) + self.erp.quiet;
                    erp.next_step_after(&self.erp, quiet_at.saturating_sub(SimTime(1)))
                };
                *step = Some(eng.schedule(next, Event::ErpStep { flow: f })?);
            }
        }
        if changed {
            let host = self.sources[f].spec.src;
            self.kick_nic(eng, host)?;
        }
        Ok(())
    }

    fn handle(&mut self, eng: &mut Eng, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Arrival { to, packet } => match to.node {
                NodeId::Switch(sw) => self.arrive_at_switch(eng, sw, to.port, packet)?,
                NodeId::Host(h) => self.deliver(eng, h, packet)?,
            },
            Event::Pfc { to, frame } => {
                let paused = frame == PfcFrame::Pause;
                match to.node {
                    NodeId::Switch(sw) => {
                        self.switches[sw as usize].outputs[to.port as usize]
                            .tx
                            .paused = paused;
                        if !paused {
                            self.kick_output(eng, sw, to.port)?;
                        }
                    }
                    NodeId::Host(h) => {
                        self.nics[h as usize].uplink.paused = paused;
                        if !paused {
                            self.kick_nic(eng, h)?;
                        }
                    }
                }
            }
            Event::TransmitDone { at } => match at.node {
                NodeId::Switch(sw) => self.kick_output(eng, sw, at.port)?,
                NodeId::Host(h) => self.kick_nic(eng, h)?,
            },
            Event::NicWake { host } => {
                self.wakes[host as usize] = None;
                self.kick_nic(eng, host)?;
            }
            Event::FlowStart { flow } => {
                let host = self.sources[flow].spec.src;
                self.kick_nic(eng, host)?;
            }
            Event::Cnp { flow, severity } => self.on_cnp(eng, flow, severity)?,
            Event::RateTimer { flow } => self.on_rate_timer(eng, flow)?,
            Event::AlphaTimer { flow } => self.on_alpha_timer(eng, flow),
            Event::ErpStep { flow } => self.on_erp_step(eng, flow)?,
        }
        if self.audit {
            for sw in &self.switches {
                sw.audit()?;
            }
        }
        Ok(())
    }
}

/// Run one scenario in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunReport, SimError> {
    cfg.validate()?;
    let mut net = Network::build(cfg)?;
    let mut eng: Eng = Engine::new();
    for (i, s) in net.sources.iter().enumerate() {
        eng.schedule(s.spec.start, Event::FlowStart { flow: i })?;
    }
    let bound = match cfg.run_until_ns {
        Some(ns) => RunBound::Until(SimTime::from_ns(ns)),
        None => RunBound::Drain,
    };
    let stats = eng.run(&mut net, bound, |eng, net, ev| net.handle(eng, ev.payload))?;
    let drained = eng.is_drained();
    let t = eng.now();
    for s in &net.sources {
        net.recorder.record(
            Record::Generated {
                flow: s.spec.id,
                bytes: s.generated() * s.mtu() as u64,
            },
            t,
        );
    }
    for sw in &net.switches {
        net.recorder.note_switch_peak(sw.id, sw.max_input_occupancy);
    }
    let erp_anomalies = net
        .reactions
        .iter()
        .map(|r| match r {
            Reaction::Rev { erp, .. } => erp.anomalies,
            _ => 0,
        })
        .sum();
    Ok(net.recorder.finish(RunMeta {
        scenario: cfg.clone(),
        mechanism: cfg.cc.mechanism,
        seed: cfg.seed,
        stats,
        drained,
        drops: 0,
        erp_anomalies,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Drained = 0,
    ValidationError = 2,
    FatalError = 3,
    NotDrained = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of(result: &Result<RunReport, SimError>) -> Self {
        match result {
            Ok(r) if r.meta.drained => ExitStatus::Drained,
            Ok(_) => ExitStatus::NotDrained,
            Err(SimError::Scenario(_)) => ExitStatus::ValidationError,
            Err(_) => ExitStatus::FatalError,
        }
    }
}

/// Run and write the report files into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, SimError> {
    let report = simulate(cfg)?;
    report.emit(out_dir)?;
    Ok(report)
}

/// One sweep variant: a directory name and a JSON merge patch applied to
/// the base configuration.
#[derive(Debug, Clone)]
pub struct Override {
    pub name: String,
    pub patch: serde_json::Value,
}

impl Override {
    /// The canonical three-way comparison.
    pub fn mechanisms() -> Vec<Override> {
        Mechanism::ALL
            .iter()
            .map(|m| Override {
                name: m.cli_name().to_string(),
                patch: serde_json::json!({ "cc": { "mechanism": m } }),
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub name: String,
    pub status: ExitStatus,
    pub error: Option<String>,
}

/// Run every override into `out_root/<name>/`, in parallel. A failing
/// variant is recorded and does not stop the others.
pub fn sweep(base: &ScenarioConfig, overrides: &[Override], out_root: &Path) -> Vec<SweepOutcome> {
    let base_json = serde_json::to_value(base).expect("config serializes");
    std::thread::scope(|scope| {
        let handles: Vec<_> = overrides
            .iter()
            .map(|o| {
                let mut doc = base_json.clone();
                json_patch::merge(&mut doc, &o.patch);
                let dir = out_root.join(&o.name);
                scope.spawn(move || {
                    let result = ScenarioConfig::from_json_str(&doc.to_string(), &o.name)
                        .map_err(SimError::from)
                        .and_then(|cfg| run_scenario(&cfg, &dir));
                    SweepOutcome {
                        name: o.name.clone(),
                        status: ExitStatus::of(&result),
                        error: result.err().map(|e| e.to_string()),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Completion, Series};
    use crate::scenario::FlowConfig;

    fn small(mechanism: Mechanism) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::paper64().with_mechanism(mechanism);
        cfg.topology.half_radix = 2;
        cfg.topology.stages = 2;
        cfg.flows = vec![
            FlowConfig {
                id: 0,
                src: 0,
                dst: 3,
                demand_bps: None,
                start_ns: 0,
                stop_ns: 50_000,
                mode: None,
            },
            FlowConfig {
                id: 1,
                src: 1,
                dst: 3,
                demand_bps: None,
                start_ns: 0,
                stop_ns: 50_000,
                mode: None,
            },
        ];
        cfg.audit = true;
        cfg
    }

    #[test]
    fn single_packet_latency() {
        let mut cfg = small(Mechanism::PfcOnly);
        cfg.flows.truncate(1);
        // exactly one packet's worth of production time
        cfg.flows[0].stop_ns = 82;
        let rep = simulate(&cfg).unwrap();
        let f = &rep.flows[&0];
        assert_eq!(f.delivered_bytes, 1024);
        // ready at 81.92 ns, then leaf, spine, leaf: 4 store-and-forward links
        let expect = SimTime(81_920) + SimTime(4 * (81_920 + 25_000));
        assert_eq!(f.last_delivery, Some(expect));
    }

    #[test]
    fn small_runs_conserve_under_audit() {
        for m in Mechanism::ALL {
            let rep = simulate(&small(m)).unwrap();
            assert!(rep.meta.drained);
            for f in rep.flows.values() {
                assert!(f.generated_bytes >= f.injected_bytes);
                assert_eq!(f.injected_bytes, f.delivered_bytes);
                assert_eq!(f.bins.iter().sum::<u64>(), f.delivered_bytes);
            }
        }
    }

    #[test]
    fn two_into_one_shares_bottleneck() {
        let rep = simulate(&small(Mechanism::PfcOnly)).unwrap();
        let total: u64 = rep.flows.values().map(|f| f.delivered_bytes).sum();
        let t = rep.completion_time(Completion::Global).unwrap();
        // two line-rate sources over 50 us through one link: ~100 us
        assert!(t > SimTime::from_us(95) && t < SimTime::from_us(110), "{t}");
        assert_eq!(total, 2 * 610 * 1024);
        assert!(rep.throughput_series(Series::Aggregate).is_ok());
    }

    #[test]
    fn bound_reports_not_drained() {
        let mut cfg = small(Mechanism::PfcOnly);
        cfg.run_until_ns = Some(10_000);
        let res = simulate(&cfg);
        assert_eq!(ExitStatus::of(&res), ExitStatus::NotDrained);
        assert!(!res.unwrap().meta.drained);
    }

    #[test]
    fn invalid_config_is_validation_status() {
        let mut cfg = small(Mechanism::PfcOnly);
        cfg.pfc.xon_bytes = cfg.pfc.xoff_bytes + 1;
        assert_eq!(ExitStatus::of(&simulate(&cfg)), ExitStatus::ValidationError);
    }

    #[test]
    fn tiny_buffer_overflow_is_fatal() {
        let mut cfg = small(Mechanism::PfcOnly);
        cfg.buffer.input_limit_bytes = 2048;
        // PFC never triggers below the hard limit; bypasses validation
        cfg.pfc.xoff_bytes = 1 << 20;
        cfg.pfc.xon_bytes = 0;
        let mut net = Network::build(&cfg).unwrap();
        let mut eng: Eng = Engine::new();
        for i in 0..net.sources.len() {
            eng.schedule(SimTime::ZERO, Event::FlowStart { flow: i })
                .unwrap();
        }
        let err = eng
            .run(&mut net, RunBound::Drain, |eng, net, ev| {
                net.handle(eng, ev.payload)
            })
            .unwrap_err();
        assert!(matches!(
            err,
            SimError::Fabric(FabricError::BufferOverflow { .. })
        ));
        assert_eq!(ExitStatus::of(&Err(err)), ExitStatus::FatalError);
    }
}
