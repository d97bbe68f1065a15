//! Scenario configuration: JSON schema, defaults, validation and the
//! built-in `paper64` preset (64-host incast with one victim flow).
//!
//! Key names carry their units. Link and rate quantities are in bits per
//! second (`*_bps`), sizes in bytes, times in nanoseconds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::ScenarioError;
use crate::fabric::{FlowId, LinkConfig, MarkKind, MarkingPolicy, PfcConfig};
use crate::host::{DcqcnParams, ErpParams, FlowSpec, NpPolicy, TrafficMode};
use crate::topology::{HostId, UpPortRule};

pub const PAPER64: &str = "paper64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Lossless fabric with PFC only; no marking, no CNPs.
    PfcOnly,
    /// CP marking, NP notification, RP reaction.
    Dcqcn,
    /// ECP marking, ENP notification, ERP reaction.
    DcqcnRev,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::PfcOnly, Mechanism::Dcqcn, Mechanism::DcqcnRev];

    pub fn marking_kind(self) -> Option<MarkKind> {
        match self {
            Mechanism::PfcOnly => None,
            Mechanism::Dcqcn => Some(MarkKind::Cp),
            Mechanism::DcqcnRev => Some(MarkKind::Ecp),
        }
    }

    /// Name used on the command line and in output directory names.
    pub fn cli_name(self) -> &'static str {
        match self {
            Mechanism::PfcOnly => "pfc",
            Mechanism::Dcqcn => "dcqcn",
            Mechanism::DcqcnRev => "dcqcn-rev",
        }
    }

    pub fn from_cli_name(s: &str) -> Option<Self> {
        match s {
            "pfc" | "pfc_only" | "pfc-only" => Some(Mechanism::PfcOnly),
            "dcqcn" => Some(Mechanism::Dcqcn),
            "dcqcn-rev" | "dcqcn_rev" => Some(Mechanism::DcqcnRev),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub half_radix: u32,
    pub stages: u32,
    pub up_port_rule: UpPortRule,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            half_radix: 4,
            stages: 3,
            up_port_rule: UpPortRule::DstModK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub capacity_bps: u64,
    pub propagation_ns: u64,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            capacity_bps: 100_000_000_000,
            propagation_ns: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferSection {
    pub input_limit_bytes: u64,
    pub pool_bytes: u64,
    pub mtu_bytes: u32,
}

impl Default for BufferSection {
    fn default() -> Self {
        BufferSection {
            input_limit_bytes: 512 * 1024,
            pool_bytes: 64 * 1024 * 1024,
            mtu_bytes: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfcSection {
    pub xoff_bytes: u64,
    pub xon_bytes: u64,
    pub headroom_bytes: u64,
}

impl Default for PfcSection {
    fn default() -> Self {
        let d = PfcConfig::default();
        PfcSection {
            xoff_bytes: d.xoff,
            xon_bytes: d.xon,
            headroom_bytes: d.headroom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkingSection {
    /// Optional; when present it must agree with the mechanism.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<MarkKind>,
    pub k_min_bytes: u64,
    pub k_max_bytes: u64,
    pub p_max: f64,
}

impl Default for MarkingSection {
    fn default() -> Self {
        MarkingSection {
            kind: None,
            k_min_bytes: 15 * 1024,
            k_max_bytes: 15 * 1024,
            p_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DcqcnSection {
    pub g: f64,
    pub min_rate_bps: u64,
    pub r_ai_bps: u64,
    pub r_hai_bps: u64,
    pub fast_recovery_steps: u32,
    pub byte_counter_bytes: u64,
    pub rate_timer_ns: u64,
    pub alpha_timer_ns: u64,
    pub np_min_gap_ns: u64,
}

impl Default for DcqcnSection {
    fn default() -> Self {
        DcqcnSection {
            g: 1.0 / 256.0,
            min_rate_bps: 10_000_000,
            r_ai_bps: 40_000_000,
            r_hai_bps: 200_000_000,
            fast_recovery_steps: 5,
            byte_counter_bytes: 10 * 1024 * 1024,
            rate_timer_ns: 1_500_000,
            alpha_timer_ns: 55_000,
            np_min_gap_ns: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RevSection {
    pub enp_min_gap_ns: u64,
    pub quiet_ns: u64,
    pub step_ns: u64,
    pub beta: f64,
    pub max_jitter_ns: u64,
}

impl Default for RevSection {
    fn default() -> Self {
        RevSection {
            enp_min_gap_ns: 10_000,
            quiet_ns: 100_000,
            step_ns: 50_000,
            beta: 0.25,
            max_jitter_ns: 25_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcSection {
    pub mechanism: Mechanism,
    #[serde(default)]
    pub dcqcn: DcqcnSection,
    #[serde(default)]
    pub rev: RevSection,
}

impl Default for CcSection {
    fn default() -> Self {
        CcSection {
            mechanism: Mechanism::DcqcnRev,
            dcqcn: DcqcnSection::default(),
            rev: RevSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    /// Defaults to the link capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_bps: Option<u64>,
    pub start_ns: u64,
    pub stop_ns: u64,
    /// Defaults to the scenario-wide traffic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TrafficMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub buffer: BufferSection,
    #[serde(default)]
    pub pfc: PfcSection,
    #[serde(default)]
    pub marking: MarkingSection,
    #[serde(default)]
    pub cc: CcSection,
    pub flows: Vec<FlowConfig>,
    #[serde(default)]
    pub traffic_mode: TrafficMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bin_width_ns")]
    pub bin_width_ns: u64,
    /// Stop processing events after this instant; `None` runs to drain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_until_ns: Option<u64>,
    /// Walk every switch's accounting after each event.
    #[serde(default)]
    pub audit: bool,
}

fn default_bin_width_ns() -> u64 {
    50_000
}

impl ScenarioConfig {
    /// Incast of N0, N1, N4, N8 into N16 plus the victim N3 -> N12, all at
    /// line rate from 1 ms to 3 ms, on a 64-host three-stage tree.
    pub fn paper64() -> Self {
        let ms = 1_000_000;
        let flow = |id, src, dst| FlowConfig {
            id,
            src,
            dst,
            demand_bps: None,
            start_ns: ms,
            stop_ns: 3 * ms,
            mode: None,
        };
        ScenarioConfig {
            name: PAPER64.into(),
            topology: TopologyConfig::default(),
            link: LinkSection::default(),
            buffer: BufferSection::default(),
            pfc: PfcSection::default(),
            marking: MarkingSection::default(),
            cc: CcSection::default(),
            flows: vec![
                flow(0, 0, 16),
                flow(1, 1, 16),
                flow(3, 3, 12),
                flow(4, 4, 16),
                flow(8, 8, 16),
            ],
            traffic_mode: TrafficMode::OpenLoopBacklogged,
            seed: 1,
            bin_width_ns: default_bin_width_ns(),
            run_until_ns: None,
            audit: false,
        }
    }

    pub fn with_mechanism(mut self, mechanism: Mechanism) -> Self {
        self.cc.mechanism = mechanism;
        self.marking.kind = None;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|source| ScenarioError::Parse {
                origin: origin.to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `paper64` or a path to a JSON file.
    pub fn load(spec: &str) -> Result<Self, ScenarioError> {
        if spec == PAPER64 {
            return Ok(Self::paper64());
        }
        Self::parse_file(Path::new(spec))
    }

    pub fn parse_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn host_count(&self) -> u64 {
        (self.topology.half_radix as u64).saturating_pow(self.topology.stages)
    }

    /// Collects every violated constraint rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        let t = &self.topology;
        if t.half_radix < 2 {
            errs.push(format!(
                "topology.half_radix must be >= 2, got {}",
                t.half_radix
            ));
        }
        if t.stages < 1 {
            errs.push("topology.stages must be >= 1".into());
        }
        if self.link.capacity_bps < 8 {
            errs.push("link.capacity_bps must be positive".into());
        }
        let b = &self.buffer;
        if b.mtu_bytes == 0 {
            errs.push("buffer.mtu_bytes must be positive".into());
        }
        if b.input_limit_bytes == 0 || b.pool_bytes == 0 {
            errs.push("buffer sizes must be positive".into());
        }
        let p = &self.pfc;
        if p.xon_bytes >= p.xoff_bytes {
            errs.push(format!(
                "pfc.xon_bytes ({}) must be below pfc.xoff_bytes ({})",
                p.xon_bytes, p.xoff_bytes
            ));
        }
        if p.xoff_bytes + p.headroom_bytes > b.input_limit_bytes {
            errs.push(
                "pfc.xoff_bytes + pfc.headroom_bytes exceeds buffer.input_limit_bytes".into(),
            );
        }
        if self.link.capacity_bps >= 8 && b.mtu_bytes > 0 {
            let need = PfcConfig::required_headroom(&self.link_config(), b.mtu_bytes as u64);
            if p.headroom_bytes < need {
                errs.push(format!(
                    "pfc.headroom_bytes ({}) below in-flight bound ({need})",
                    p.headroom_bytes
                ));
            }
        }
        let m = &self.marking;
        if m.k_min_bytes == 0 || m.k_min_bytes > m.k_max_bytes {
            errs.push("marking requires 0 < k_min_bytes <= k_max_bytes".into());
        }
        if !(m.p_max > 0.0 && m.p_max <= 1.0) {
            errs.push("marking.p_max must be in (0, 1]".into());
        }
        if let Some(kind) = m.kind {
            if Some(kind) != self.cc.mechanism.marking_kind() {
                errs.push(format!(
                    "marking.kind {kind:?} is inconsistent with cc.mechanism {:?}",
                    self.cc.mechanism
                ));
            }
        }
        let d = &self.cc.dcqcn;
        if !(d.g > 0.0 && d.g < 1.0) {
            errs.push("cc.dcqcn.g must be in (0, 1)".into());
        }
        if d.byte_counter_bytes == 0
            || d.rate_timer_ns == 0
            || d.alpha_timer_ns == 0
            || d.min_rate_bps == 0
            || d.r_ai_bps == 0
            || d.r_hai_bps == 0
            || d.np_min_gap_ns == 0
        {
            errs.push("cc.dcqcn parameters must be positive".into());
        }
        let r = &self.cc.rev;
        if r.step_ns == 0
            || r.quiet_ns == 0
            || r.enp_min_gap_ns == 0
            || r.beta.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            errs.push("cc.rev parameters must be positive".into());
        }
        if self.bin_width_ns == 0 {
            errs.push("bin_width_ns must be positive".into());
        }
        if self.flows.is_empty() {
            errs.push("at least one flow is required".into());
        }
        let hosts = self.host_count();
        let mut ids = std::collections::BTreeSet::new();
        for f in &self.flows {
            if !ids.insert(f.id) {
                errs.push(format!("duplicate flow id {}", f.id));
            }
            if f.src as u64 >= hosts || f.dst as u64 >= hosts {
                errs.push(format!(
                    "flow {}: host ids must be < {hosts} (src {}, dst {})",
                    f.id, f.src, f.dst
                ));
            }
            if f.src == f.dst {
                errs.push(format!("flow {}: source equals destination", f.id));
            }
            if f.start_ns >= f.stop_ns {
                errs.push(format!("flow {}: start_ns must be < stop_ns", f.id));
            }
            match f.demand_bps {
                Some(0) => errs.push(format!("flow {}: demand must be positive", f.id)),
                Some(d) if d > self.link.capacity_bps => {
                    errs.push(format!("flow {}: demand exceeds line rate", f.id))
                }
                _ => {}
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errs))
        }
    }

    pub fn line_rate(&self) -> u64 {
        self.link.capacity_bps / 8
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            capacity: self.line_rate(),
            propagation: SimTime::from_ns(self.link.propagation_ns),
        }
    }

    pub fn pfc_config(&self) -> PfcConfig {
        PfcConfig {
            xoff: self.pfc.xoff_bytes,
            xon: self.pfc.xon_bytes,
            headroom: self.pfc.headroom_bytes,
        }
    }

    pub fn marking_policy(&self) -> Option<MarkingPolicy> {
        self.cc.mechanism.marking_kind().map(|kind| MarkingPolicy {
            kind,
            k_min: self.marking.k_min_bytes,
            k_max: self.marking.k_max_bytes,
            p_max: self.marking.p_max,
        })
    }

    pub fn np_policy(&self) -> Option<NpPolicy> {
        match self.cc.mechanism {
            Mechanism::PfcOnly => None,
            Mechanism::Dcqcn => Some(NpPolicy::Baseline {
                min_gap: SimTime::from_ns(self.cc.dcqcn.np_min_gap_ns),
            }),
            Mechanism::DcqcnRev => Some(NpPolicy::Enhanced {
                min_gap: SimTime::from_ns(self.cc.rev.enp_min_gap_ns),
            }),
        }
    }

    pub fn dcqcn_params(&self) -> DcqcnParams<f64> {
        let d = &self.cc.dcqcn;
        DcqcnParams {
            line_rate: self.line_rate() as f64,
            min_rate: d.min_rate_bps as f64 / 8.0,
            g: d.g,
            r_ai: d.r_ai_bps as f64 / 8.0,
            r_hai: d.r_hai_bps as f64 / 8.0,
            f: d.fast_recovery_steps,
            byte_threshold: d.byte_counter_bytes,
            rate_timer: SimTime::from_ns(d.rate_timer_ns),
            alpha_timer: SimTime::from_ns(d.alpha_timer_ns),
        }
    }

    pub fn erp_params(&self) -> ErpParams<f64> {
        let r = &self.cc.rev;
        ErpParams {
            line_rate: self.line_rate() as f64,
            quiet: SimTime::from_ns(r.quiet_ns),
            step: SimTime::from_ns(r.step_ns),
            beta: r.beta,
            max_jitter: SimTime::from_ns(r.max_jitter_ns),
            g: self.cc.dcqcn.g,
        }
    }

    pub fn flow_specs(&self) -> Vec<FlowSpec> {
        self.flows
            .iter()
            .map(|f| FlowSpec {
                id: f.id,
                src: f.src,
                dst: f.dst,
                demand_rate: f.demand_bps.map_or(self.line_rate(), |b| b / 8),
                start: SimTime::from_ns(f.start_ns),
                stop: SimTime::from_ns(f.stop_ns),
                mode: f.mode.unwrap_or(self.traffic_mode),
            })
            .collect()
    }

    pub fn bin_width(&self) -> SimTime {
        SimTime::from_ns(self.bin_width_ns)
    }
}
