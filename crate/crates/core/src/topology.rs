//! k-ary n-tree (folded CLOS) construction and destination-based routing.
//!
//! Switches are addressed by `(stage, index)` with stage 0 at the leaves.
//! The index of a switch is a word of `n - 1` base-`k` digits. Up-port `u` of
//! switch `w` at stage `l` leads to the stage `l + 1` switch obtained by
//! replacing digit `l` of `w` with `u`, arriving on that switch's down-port
//! numbered by the old digit. Hosts `k*j .. k*j + k - 1` hang off leaf `j`.
//!
//! Port numbering on every switch: down-ports `0..k`, up-ports `k..2k`.
//! Topmost-stage switches only have their `k` down-ports.

use serde::{Deserialize, Serialize};

use crate::error::TopologyError;

pub type HostId = u32;
pub type SwitchId = u32;
pub type PortId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Host(HostId),
    Switch(SwitchId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: PortId,
}

impl Endpoint {
    pub fn switch(id: SwitchId, port: PortId) -> Self {
        Endpoint {
            node: NodeId::Switch(id),
            port,
        }
    }

    pub fn host(id: HostId) -> Self {
        Endpoint {
            node: NodeId::Host(id),
            port: 0,
        }
    }
}

/// Which digit of the destination picks the up-port at each level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpPortRule {
    /// `floor(dst / k^l) mod k` at level `l`: sources under one leaf that
    /// target hosts with equal low digits share the leaf uplink.
    #[default]
    DstModK,
    /// `floor(dst / k^(l+1)) mod k`: spreads by the destination's leaf.
    DstDivKModK,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Switch {
    pub id: SwitchId,
    pub stage: u32,
    pub index: u32,
    /// Peer of each port; `None` when unwired.
    pub ports: Vec<Option<Endpoint>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    half_radix: u32,
    stages: u32,
    rule: UpPortRule,
    switches: Vec<Switch>,
    /// Peer of each host's single port.
    hosts: Vec<Option<Endpoint>>,
}

/// One switch traversal: the switch and the port the packet leaves on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hop {
    pub switch: SwitchId,
    pub out_port: PortId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub hops: Vec<Hop>,
    pub up_hops: u32,
    pub down_hops: u32,
}

impl Path {
    /// Number of links crossed, host links included.
    pub fn links(&self) -> usize {
        self.hops.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    PortInconsistent {
        at: Endpoint,
        peer: Endpoint,
        detail: String,
    },
    WrongCount {
        what: &'static str,
        expected: u64,
        actual: u64,
    },
    Unreachable {
        src: HostId,
        dst: HostId,
        detail: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn pow(base: u32, exp: u32) -> u32 {
    base.pow(exp)
}

impl Topology {
    pub fn build_kary_ntree(half_radix: u32, stages: u32) -> Result<Self, TopologyError> {
        Self::build_with_rule(half_radix, stages, UpPortRule::default())
    }

    pub fn build_with_rule(
        half_radix: u32,
        stages: u32,
        rule: UpPortRule,
    ) -> Result<Self, TopologyError> {
        let k = half_radix;
        if k < 2 {
            return Err(TopologyError::InvalidParameter(format!(
                "half radix must be >= 2, got {k}"
            )));
        }
        if stages < 1 {
            return Err(TopologyError::InvalidParameter(
                "stage count must be >= 1".into(),
            ));
        }
        let hosts_n = k
            .checked_pow(stages)
            .filter(|h| *h <= 1 << 24)
            .ok_or_else(|| TopologyError::InvalidParameter("topology too large".into()))?;
        let per_stage = pow(k, stages - 1);

        let mut switches = Vec::with_capacity((stages * per_stage) as usize);
        for stage in 0..stages {
            let nports = if stage + 1 == stages { k } else { 2 * k };
            for index in 0..per_stage {
                switches.push(Switch {
                    id: stage * per_stage + index,
                    stage,
                    index,
                    ports: vec![None; nports as usize],
                });
            }
        }
        let mut hosts = vec![None; hosts_n as usize];

        for h in 0..hosts_n {
            let leaf = h / k;
            let port = h % k;
            hosts[h as usize] = Some(Endpoint::switch(leaf, port));
            switches[leaf as usize].ports[port as usize] = Some(Endpoint::host(h));
        }

        for stage in 0..stages.saturating_sub(1) {
            let place = pow(k, stage);
            for index in 0..per_stage {
                let digit = (index / place) % k;
                let lower = stage * per_stage + index;
                for u in 0..k {
                    let upper_index = index - digit * place + u * place;
                    let upper = (stage + 1) * per_stage + upper_index;
                    switches[lower as usize].ports[(k + u) as usize] =
                        Some(Endpoint::switch(upper, digit));
                    switches[upper as usize].ports[digit as usize] =
                        Some(Endpoint::switch(lower, k + u));
                }
            }
        }

        Ok(Topology {
            half_radix: k,
            stages,
            rule,
            switches,
            hosts,
        })
    }

    pub fn half_radix(&self) -> u32 {
        self.half_radix
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    pub fn up_port_rule(&self) -> UpPortRule {
        self.rule
    }

    pub fn host_count(&self) -> u32 {
        self.hosts.len() as u32
    }

    pub fn switch_count(&self) -> u32 {
        self.switches.len() as u32
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    pub fn switch(&self, id: SwitchId) -> &Switch {
        &self.switches[id as usize]
    }

    pub fn host_peer(&self, host: HostId) -> Option<Endpoint> {
        self.hosts.get(host as usize).copied().flatten()
    }

    /// Peer of any endpoint, or `None` if unwired or out of range.
    pub fn peer(&self, at: Endpoint) -> Option<Endpoint> {
        match at.node {
            NodeId::Host(h) => self.host_peer(h),
            NodeId::Switch(s) => self
                .switches
                .get(s as usize)
                .and_then(|sw| sw.ports.get(at.port as usize).copied().flatten()),
        }
    }

    pub fn leaf_of(&self, host: HostId) -> SwitchId {
        host / self.half_radix
    }

    fn check_host(&self, host: HostId) -> Result<(), TopologyError> {
        if host >= self.host_count() {
            Err(TopologyError::InvalidHost {
                host,
                hosts: self.host_count(),
            })
        } else {
            Ok(())
        }
    }

    /// Up-port index (0-based among up-ports) chosen at `level` for `dst`.
    pub fn up_choice(&self, level: u32, dst: HostId) -> u32 {
        let k = self.half_radix;
        let shift = match self.rule {
            UpPortRule::DstModK => level,
            UpPortRule::DstDivKModK => level + 1,
        };
        (dst / pow(k, shift)) % k
    }

    /// Output port at `switch` for a packet headed to `dst`.
    pub fn next_port(&self, switch: SwitchId, dst: HostId) -> PortId {
        let k = self.half_radix;
        let sw = &self.switches[switch as usize];
        let l = sw.stage;
        if sw.index / pow(k, l) == dst / pow(k, l + 1) {
            (dst / pow(k, l)) % k
        } else {
            k + self.up_choice(l, dst)
        }
    }

    pub fn is_up_port(&self, port: PortId) -> bool {
        port >= self.half_radix
    }

    pub fn route(&self, src: HostId, dst: HostId) -> Result<Path, TopologyError> {
        self.check_host(src)?;
        self.check_host(dst)?;
        if src == dst {
            return Err(TopologyError::SelfRoute(src));
        }
        let mut hops = Vec::new();
        let mut up_hops = 0;
        let mut down_hops = 0;
        let mut at = self.leaf_of(src);
        loop {
            let out = self.next_port(at, dst);
            hops.push(Hop {
                switch: at,
                out_port: out,
            });
            match self.switches[at as usize].ports[out as usize] {
                Some(Endpoint {
                    node: NodeId::Host(h),
                    ..
                }) => {
                    debug_assert_eq!(h, dst);
                    break;
                }
                Some(Endpoint {
                    node: NodeId::Switch(next),
                    ..
                }) => {
                    if self.is_up_port(out) {
                        up_hops += 1;
                    } else {
                        down_hops += 1;
                    }
                    at = next;
                }
                None => unreachable!("freshly built topologies are fully wired"),
            }
        }
        Ok(Path {
            hops,
            up_hops,
            down_hops,
        })
    }

    /// Structural checks plus an all-pairs reachability walk over the actual
    /// wiring (not the arithmetic routing shortcut).
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let k = self.half_radix as u64;
        let n = self.stages;
        let expected_hosts = k.pow(n);
        let expected_switches = n as u64 * k.pow(n - 1);
        if self.hosts.len() as u64 != expected_hosts {
            violations.push(Violation::WrongCount {
                what: "hosts",
                expected: expected_hosts,
                actual: self.hosts.len() as u64,
            });
        }
        if self.switches.len() as u64 != expected_switches {
            violations.push(Violation::WrongCount {
                what: "switches",
                expected: expected_switches,
                actual: self.switches.len() as u64,
            });
        }

        let mut check = |at: Endpoint, peer: Option<Endpoint>| {
            let Some(peer) = peer else { return };
            match self.peer(peer) {
                Some(back) if back == at => {}
                Some(back) => violations.push(Violation::PortInconsistent {
                    at,
                    peer,
                    detail: format!("peer points back to {back:?}"),
                }),
                None => violations.push(Violation::PortInconsistent {
                    at,
                    peer,
                    detail: "peer port unwired or missing".into(),
                }),
            }
        };
        for h in 0..self.host_count() {
            check(Endpoint::host(h), self.host_peer(h));
        }
        for sw in &self.switches {
            for (p, peer) in sw.ports.iter().enumerate() {
                check(Endpoint::switch(sw.id, p as PortId), *peer);
            }
        }

        let limit = 2 * n as usize + 1;
        for src in 0..self.host_count() {
            for dst in 0..self.host_count() {
                if src == dst {
                    continue;
                }
                if let Err(detail) = self.walk(src, dst, limit) {
                    violations.push(Violation::Unreachable { src, dst, detail });
                }
            }
        }
        ValidationReport { violations }
    }

    fn walk(&self, src: HostId, dst: HostId, limit: usize) -> Result<(), String> {
        let mut at = match self.host_peer(src) {
            Some(Endpoint {
                node: NodeId::Switch(s),
                ..
            }) => s,
            other => return Err(format!("host {src} uplink is {other:?}")),
        };
        for _ in 0..limit {
            let out = self.next_port(at, dst);
            match self.peer(Endpoint::switch(at, out)) {
                Some(Endpoint {
                    node: NodeId::Host(h),
                    ..
                }) if h == dst => return Ok(()),
                Some(Endpoint {
                    node: NodeId::Host(h),
                    ..
                }) => return Err(format!("reached host {h} instead")),
                Some(Endpoint {
                    node: NodeId::Switch(s),
                    ..
                }) => at = s,
                None => return Err(format!("switch {at} port {out} is unwired")),
            }
        }
        Err("hop limit exceeded".into())
    }

    /// Unwire both ends of the link attached to `at`.
    pub fn disconnect(&mut self, at: Endpoint) {
        if let Some(peer) = self.peer(at) {
            self.set_peer(peer, None);
        }
        self.set_peer(at, None);
    }

    /// Point `at` to `peer` without touching `peer`'s side.
    pub fn wire_one_way(&mut self, at: Endpoint, peer: Endpoint) {
        self.set_peer(at, Some(peer));
    }

    fn set_peer(&mut self, at: Endpoint, peer: Option<Endpoint>) {
        match at.node {
            NodeId::Host(h) => self.hosts[h as usize] = peer,
            NodeId::Switch(s) => self.switches[s as usize].ports[at.port as usize] = peer,
        }
    }
}
