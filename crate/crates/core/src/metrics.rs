//! Per-run recording and the three report files.
//!
//! Delivered bytes are binned by delivery time into fixed-width bins. A bin
//! straddling the last delivery keeps its full width; rates are never
//! rescaled.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{SimStats, SimTime};
use crate::error::MetricsError;
use crate::fabric::FlowId;
use crate::scenario::{Mechanism, ScenarioConfig};
use crate::topology::SwitchId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Generated {
        flow: FlowId,
        bytes: u64,
    },
    Injected {
        flow: FlowId,
        bytes: u64,
    },
    Delivered {
        flow: FlowId,
        bytes: u64,
        marked: bool,
    },
    CnpReceived {
        flow: FlowId,
    },
    PauseSent {
        switch: SwitchId,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTotals {
    pub generated_bytes: u64,
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
    pub marked_packets: u64,
    pub cnps_received: u64,
    pub first_injection: Option<SimTime>,
    pub last_delivery: Option<SimTime>,
    /// Delivered bytes per bin, indexed from time zero.
    pub bins: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchTotals {
    pub switch: SwitchId,
    pub pauses_sent: u64,
    pub max_input_occupancy: u64,
}

#[derive(Debug, Clone)]
pub struct Recorder {
    bin_width: SimTime,
    flows: BTreeMap<FlowId, FlowTotals>,
    switches: BTreeMap<SwitchId, SwitchTotals>,
    closed: bool,
    late_records: u64,
}

impl Recorder {
    pub fn new(bin_width: SimTime, flows: impl IntoIterator<Item = FlowId>) -> Self {
        assert!(bin_width > SimTime::ZERO, "bin width must be positive");
        Recorder {
            bin_width,
            flows: flows
                .into_iter()
                .map(|f| (f, FlowTotals::default()))
                .collect(),
            switches: BTreeMap::new(),
            closed: false,
            late_records: 0,
        }
    }

    pub fn bin_width(&self) -> SimTime {
        self.bin_width
    }

    pub fn flow(&self, flow: FlowId) -> Option<&FlowTotals> {
        self.flows.get(&flow)
    }

    pub fn record(&mut self, rec: Record, t: SimTime) {
        if self.closed {
            self.late_records += 1;
            return;
        }
        match rec {
            Record::Generated { bytes: 0, .. }
            | Record::Injected { bytes: 0, .. }
            | Record::Delivered { bytes: 0, .. } => {}
            Record::Generated { flow, bytes } => self.totals(flow).generated_bytes += bytes,
            Record::Injected { flow, bytes } => {
                let f = self.totals(flow);
                f.injected_bytes += bytes;
                f.first_injection.get_or_insert(t);
            }
            Record::Delivered {
                flow,
                bytes,
                marked,
            } => {
                let bin = (t.as_ps() / self.bin_width.as_ps()) as usize;
                let f = self.totals(flow);
                f.delivered_bytes += bytes;
                if marked {
                    f.marked_packets += 1;
                }
                f.last_delivery = Some(t);
                if f.bins.len() <= bin {
                    f.bins.resize(bin + 1, 0);
                }
                f.bins[bin] += bytes;
            }
            Record::CnpReceived { flow } => self.totals(flow).cnps_received += 1,
            Record::PauseSent { switch } => {
                self.switches
                    .entry(switch)
                    .or_insert_with(|| SwitchTotals {
                        switch,
                        ..SwitchTotals::default()
                    })
                    .pauses_sent += 1
            }
        }
    }

    /// Input-occupancy high-water mark reported by a switch at the end.
    pub fn note_switch_peak(&mut self, switch: SwitchId, max_input_occupancy: u64) {
        let s = self.switches.entry(switch).or_insert_with(|| SwitchTotals {
            switch,
            ..SwitchTotals::default()
        });
        s.max_input_occupancy = s.max_input_occupancy.max(max_input_occupancy);
    }

    fn totals(&mut self, flow: FlowId) -> &mut FlowTotals {
        self.flows.entry(flow).or_default()
    }

    /// Records arriving after this point are counted, not applied.
    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn late_records(&self) -> u64 {
        self.late_records
    }

    pub fn finish(mut self, meta: RunMeta) -> RunReport {
        self.closed = true;
        RunReport {
            bin_width: self.bin_width,
            flows: self.flows,
            switches: self.switches.into_values().collect(),
            late_records: self.late_records,
            meta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: ScenarioConfig,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub stats: SimStats,
    pub drained: bool,
    pub drops: u64,
    /// CNPs that reached an enhanced reaction point without a stamp.
    pub erp_anomalies: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Flow(FlowId),
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Flow(FlowId),
    Global,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub bin_width: SimTime,
    pub flows: BTreeMap<FlowId, FlowTotals>,
    pub switches: Vec<SwitchTotals>,
    pub late_records: u64,
    pub meta: RunMeta,
}

impl RunReport {
    fn bin_count(&self) -> usize {
        self.flows.values().map(|f| f.bins.len()).max().unwrap_or(0)
    }

    /// `(bin_start, bytes/second)` for every bin up to the last delivery.
    pub fn throughput_series(&self, which: Series) -> Result<Vec<(SimTime, f64)>, MetricsError> {
        let n = self.bin_count();
        let mut bytes = vec![0u64; n];
        match which {
            Series::Flow(id) => {
                let f = self.flows.get(&id).ok_or(MetricsError::UnknownFlow(id))?;
                bytes[..f.bins.len()].copy_from_slice(&f.bins);
            }
            Series::Aggregate => {
                for f in self.flows.values() {
                    for (b, v) in f.bins.iter().enumerate() {
                        bytes[b] += v;
                    }
                }
            }
        }
        let w = self.bin_width.as_ps() as f64;
        Ok(bytes
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                (
                    SimTime(i as u64 * self.bin_width.as_ps()),
                    b as f64 * 1e12 / w,
                )
            })
            .collect())
    }

    /// Mean rate over the bins lying entirely inside `[from, to]`.
    pub fn mean_rate(
        &self,
        which: Series,
        from: SimTime,
        to: SimTime,
    ) -> Result<f64, MetricsError> {
        let series = self.throughput_series(which)?;
        let w = self.bin_width;
        let first = from.as_ps().div_ceil(w.as_ps());
        let last = to.as_ps() / w.as_ps();
        if last <= first {
            return Ok(0.0);
        }
        let sum: f64 = (first..last)
            .map(|i| series.get(i as usize).map_or(0.0, |(_, r)| *r))
            .sum();
        Ok(sum / (last - first) as f64)
    }

    pub fn completion_time(&self, which: Completion) -> Result<SimTime, MetricsError> {
        match which {
            Completion::Flow(id) => self
                .flows
                .get(&id)
                .ok_or(MetricsError::UnknownFlow(id))?
                .last_delivery
                .ok_or(MetricsError::NoDeliveries(id)),
            Completion::Global => self
                .flows
                .values()
                .filter_map(|f| f.last_delivery)
                .max()
                .ok_or(MetricsError::NothingDelivered),
        }
    }

    pub fn total_pauses(&self) -> u64 {
        self.switches.iter().map(|s| s.pauses_sent).sum()
    }

    pub fn deliveries_csv(&self) -> String {
        let mut out = String::from("bin_start_ps,flow_id,bytes\n");
        for b in 0..self.bin_count() {
            let start = b as u64 * self.bin_width.as_ps();
            for (id, f) in &self.flows {
                match f.bins.get(b) {
                    Some(&bytes) if bytes > 0 => {
                        let _ = writeln!(out, "{start},{id},{bytes}");
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "flow_id,generated_bytes,injected_bytes,delivered_bytes,marked_packets,cnps_received,first_injection_ps,last_delivery_ps\n",
        );
        let opt = |t: Option<SimTime>| t.map(|t| t.as_ps().to_string()).unwrap_or_default();
        for (id, f) in &self.flows {
            let _ = writeln!(
                out,
                "{id},{},{},{},{},{},{},{}",
                f.generated_bytes,
                f.injected_bytes,
                f.delivered_bytes,
                f.marked_packets,
                f.cnps_received,
                opt(f.first_injection),
                opt(f.last_delivery),
            );
        }
        out
    }

    pub fn run_json(&self) -> String {
        let m = &self.meta;
        let doc = serde_json::json!({
            "scenario": m.scenario,
            "seed": m.seed,
            "cc": m.mechanism,
            "engine": {
                "events_processed": m.stats.events_processed,
                "final_time_ps": m.stats.final_time.as_ps(),
            },
            "global_completion_ps": self.completion_time(Completion::Global).ok().map(|t| t.as_ps()),
            "drops": m.drops,
            "pauses": self.total_pauses(),
            "drained": m.drained,
            "truncated": !m.drained,
            "bin_width_ps": self.bin_width.as_ps(),
            "late_records": self.late_records,
            "erp_anomalies": m.erp_anomalies,
            "switches": self.switches,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }

    /// Write `deliveries.csv`, `summary.csv` and `run.json` into `dir`,
    /// creating it if needed.
    pub fn emit(&self, dir: &Path) -> Result<(), MetricsError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| MetricsError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, body) in [
            ("deliveries.csv", self.deliveries_csv()),
            ("summary.csv", self.summary_csv()),
            ("run.json", self.run_json()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
        }
        Ok(())
    }
}
