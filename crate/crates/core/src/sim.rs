//! Discrete-event simulation of sensors feeding a gateway and the cloud.
//!
//! Time is in milliseconds. Events are processed in non-decreasing time order;
//! events at the same instant run in the order they were scheduled. Links have
//! a fixed latency and unlimited capacity, and nothing is ever dropped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterConfig, FilterError, FilterState, Sample};
use crate::metrics::{evaluate, ErrorReport, MetricsError, TransmissionLog};
use crate::topology::{Device, DeviceKind, Hop, Link, Topology, Violations};

pub const DEFAULT_MESSAGE_SIZE: u64 = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    Topology(#[from] Violations),
    #[error("source given for unknown device '{0}'")]
    UnknownSource(String),
    #[error("source device '{0}' is not a sensor")]
    NotASensor(String),
    #[error("more than one source for device '{0}'")]
    DuplicateSource(String),
    #[error("sensor '{0}' has no source")]
    MissingSource(String),
    #[error("sensor '{0}' has no route to the cloud")]
    NoRoute(String),
    #[error("duration must be positive (got {0})")]
    InvalidDuration(f64),
    #[error("message size must be positive")]
    InvalidMessageSize,
    #[error("sample time {time} from '{device}' is negative")]
    NegativeTime { device: String, time: f64 },
    #[error("energy model for {kind}: {reason}")]
    InvalidEnergy { kind: DeviceKind, reason: &'static str },
    #[error("filter error on '{device}': {source}")]
    Filter {
        device: String,
        #[source]
        source: FilterError,
    },
    #[error("metrics error on '{device}': {source}")]
    Metrics {
        device: String,
        #[source]
        source: MetricsError,
    },
    #[error("runs are not comparable: {0}")]
    Incomparable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every raw sample travels to the cloud.
    CloudOnly,
    /// Samples pass the sensor-side filter first.
    MistFogCloud,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::CloudOnly => "cloud_only",
            Mode::MistFogCloud => "mist_fog_cloud",
        }
    }
}

/// Affine power model: `busy_power` while handling messages, `idle_power`
/// otherwise. `per_message_busy_time` is in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub busy_power: f64,
    pub idle_power: f64,
    pub per_message_busy_time: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), &'static str> {
        let finite =
            self.busy_power.is_finite() && self.idle_power.is_finite() && self.per_message_busy_time.is_finite();
        if !finite {
            return Err("values must be finite");
        }
        if !(self.busy_power >= self.idle_power && self.idle_power >= 0.0) {
            return Err("requires busy_power >= idle_power >= 0");
        }
        if self.per_message_busy_time < 0.0 {
            return Err("per_message_busy_time must be non-negative");
        }
        Ok(())
    }

    /// Busy time in ms for `handled` messages, capped at `duration`.
    pub fn busy_time(&self, handled: u64, duration: f64) -> f64 {
        (handled as f64 * self.per_message_busy_time).min(duration)
    }

    /// Joules consumed over `duration` ms.
    pub fn energy(&self, handled: u64, duration: f64) -> f64 {
        let busy = self.busy_time(handled, duration);
        (busy * self.busy_power + (duration - busy) * self.idle_power) / 1000.0
    }
}

/// Power models per device tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub sensor: EnergyModel,
    pub gateway: EnergyModel,
    pub cloud: EnergyModel,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            sensor: EnergyModel { busy_power: 0.107339, idle_power: 0.083433, per_message_busy_time: 5.0 },
            gateway: EnergyModel { busy_power: 10.7339, idle_power: 8.3433, per_message_busy_time: 2.0 },
            cloud: EnergyModel { busy_power: 107.339, idle_power: 83.433, per_message_busy_time: 1.0 },
        }
    }
}

impl EnergyConfig {
    pub fn model(&self, kind: DeviceKind) -> &EnergyModel {
        match kind {
            DeviceKind::Sensor => &self.sensor,
            DeviceKind::Gateway => &self.gateway,
            DeviceKind::Cloud => &self.cloud,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for kind in [DeviceKind::Sensor, DeviceKind::Gateway, DeviceKind::Cloud] {
            self.model(kind).validate().map_err(|reason| SimError::InvalidEnergy { kind, reason })?;
        }
        Ok(())
    }
}

/// Samples for one sensor, timestamps in simulation milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStream {
    pub device: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub filter: FilterConfig,
    pub energy: EnergyConfig,
    /// ms; samples at or after this instant are not emitted.
    pub duration: f64,
    pub message_size: u64,
    pub seed: u64,
}

/// A sample in flight towards the cloud.
#[derive(Debug, Clone)]
pub struct Message {
    pub source: String,
    pub sample: Sample,
    pub size: u64,
    pub emit_time: f64,
    route: Arc<[Hop]>,
    next: usize,
}

impl Message {
    /// Hops still ahead of the message, the next one first.
    pub fn remaining_hops(&self) -> &[Hop] {
        &self.route[self.next..]
    }
}

/// Processing applied by a gateway before forwarding. Messages returned are
/// sent on along their own routes.
pub trait FogStage {
    fn forward(&mut self, gateway: &Device, message: Message) -> Vec<Message>;
}

/// Relays everything unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassThrough;

impl FogStage for PassThrough {
    fn forward(&mut self, _gateway: &Device, message: Message) -> Vec<Message> {
        vec![message]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkUsage {
    pub latency: f64,
    pub messages_emitted: u64,
    pub messages_delivered: u64,
    pub bytes: u64,
    pub byte_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceUsage {
    pub kind: DeviceKind,
    pub messages_handled: u64,
    pub busy_time: f64,
    pub energy_j: f64,
}

/// End-to-end sensor-to-cloud latency summary (nearest-rank percentiles).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl LatencyStats {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let rank = |q: f64| values[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n as u64,
            min: values[0],
            mean: values.iter().sum::<f64>() / n as f64,
            max: values[n - 1],
            p50: rank(0.50),
            p95: rank(0.95),
            p99: rank(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorOutcome {
    pub samples: u64,
    pub transmitted: u64,
    pub error: Option<ErrorReport>,
    #[serde(skip)]
    pub raw: Vec<Sample>,
    #[serde(skip)]
    pub log: TransmissionLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: Mode,
    pub seed: u64,
    pub topology: String,
    pub duration: f64,
    pub message_size: u64,
    pub links: BTreeMap<String, LinkUsage>,
    pub devices: BTreeMap<String, DeviceUsage>,
    pub total_bytes: u64,
    pub total_byte_ms: f64,
    /// Messages that left a sensor.
    pub messages_emitted: u64,
    /// Messages that reached the cloud.
    pub messages_delivered: u64,
    pub latency: LatencyStats,
    pub sensors: BTreeMap<String, SensorOutcome>,
}

impl RunMetrics {
    fn empty(topology: &Topology, mode: Mode, params: &RunParams) -> Self {
        Self {
            mode,
            seed: params.seed,
            topology: topology.fingerprint(),
            duration: params.duration,
            message_size: params.message_size,
            links: topology
                .links
                .iter()
                .map(|l| (l.name(), LinkUsage { latency: l.latency, ..Default::default() }))
                .collect(),
            devices: topology
                .devices
                .iter()
                .map(|d| {
                    (d.id.clone(), DeviceUsage { kind: d.kind, messages_handled: 0, busy_time: 0.0, energy_j: 0.0 })
                })
                .collect(),
            total_bytes: 0,
            total_byte_ms: 0.0,
            messages_emitted: 0,
            messages_delivered: 0,
            latency: LatencyStats::default(),
            sensors: BTreeMap::new(),
        }
    }

    /// Tallies one delivery of `message` over `link`.
    pub fn account_network(&mut self, link: &Link, message: &Message) {
        let usage =
            self.links.entry(link.name()).or_insert_with(|| LinkUsage { latency: link.latency, ..Default::default() });
        usage.messages_delivered += 1;
        usage.bytes += message.size;
        usage.byte_ms += message.size as f64 * link.latency;
        self.total_bytes += message.size;
        self.total_byte_ms += message.size as f64 * link.latency;
    }

    /// Sets the energy of `device` from the number of messages it handled.
    pub fn account_energy(&mut self, device: &Device, model: &EnergyModel, handled: u64, duration: f64) {
        let usage = self.devices.entry(device.id.clone()).or_insert_with(|| DeviceUsage {
            kind: device.kind,
            messages_handled: 0,
            busy_time: 0.0,
            energy_j: 0.0,
        });
        usage.messages_handled = handled;
        usage.busy_time = model.busy_time(handled, duration);
        usage.energy_j = model.energy(handled, duration);
    }

    pub fn energy_of(&self, kind: DeviceKind) -> f64 {
        self.devices.values().filter(|d| d.kind == kind).map(|d| d.energy_j).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.devices.values().map(|d| d.energy_j).sum()
    }
}

enum EventKind {
    Sample { stream: usize, index: usize },
    Arrive(Message),
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

struct SensorRun {
    device: usize,
    route: Arc<[Hop]>,
    filter: Option<FilterState>,
    log: Vec<Sample>,
    processed: usize,
}

pub fn run(
    topology: &Topology,
    sources: &[SourceStream],
    mode: Mode,
    params: &RunParams,
) -> Result<RunMetrics, SimError> {
    run_with(topology, sources, mode, params, &mut PassThrough)
}

/// Like [`run`], with a custom gateway stage.
pub fn run_with(
    topology: &Topology,
    sources: &[SourceStream],
    mode: Mode,
    params: &RunParams,
    fog: &mut dyn FogStage,
) -> Result<RunMetrics, SimError> {
    topology.validate()?;
    if !(params.duration > 0.0 && params.duration.is_finite()) {
        return Err(SimError::InvalidDuration(params.duration));
    }
    if params.message_size == 0 {
        return Err(SimError::InvalidMessageSize);
    }
    params.energy.validate()?;
    params.filter.validate().map_err(|source| SimError::Filter { device: String::new(), source })?;

    let mut by_device: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        let device = topology.device(&s.device).ok_or_else(|| SimError::UnknownSource(s.device.clone()))?;
        if device.kind != DeviceKind::Sensor {
            return Err(SimError::NotASensor(s.device.clone()));
        }
        if by_device.insert(&s.device, i).is_some() {
            return Err(SimError::DuplicateSource(s.device.clone()));
        }
        if let Some(bad) = s.samples.iter().find(|x| x.timestamp < 0.0) {
            return Err(SimError::NegativeTime { device: s.device.clone(), time: bad.timestamp });
        }
    }

    // Streams ordered by sensor declaration order, which fixes tie-breaking
    // between sensors sampling at the same instant.
    let mut sensors: Vec<(SensorRun, &SourceStream)> = Vec::new();
    for d in topology.sensors() {
        let &i = by_device.get(d.id.as_str()).ok_or_else(|| SimError::MissingSource(d.id.clone()))?;
        let route = topology.route_to_cloud(&d.id).ok_or_else(|| SimError::NoRoute(d.id.clone()))?;
        let filter = match mode {
            Mode::CloudOnly => None,
            Mode::MistFogCloud => Some(
                FilterState::new(params.filter).map_err(|source| SimError::Filter { device: d.id.clone(), source })?,
            ),
        };
        let device = topology.device_index(&d.id).expect("sensor exists");
        sensors.push((SensorRun { device, route: route.into(), filter, log: Vec::new(), processed: 0 }, &sources[i]));
    }

    let mut metrics = RunMetrics::empty(topology, mode, params);
    let mut handled = vec![0u64; topology.devices.len()];
    let mut latencies = Vec::new();
    let mut queue = Queue::default();

    for (stream, (_, src)) in sensors.iter().enumerate() {
        if let Some(first) = src.samples.first() {
            if first.timestamp < params.duration {
                queue.push(first.timestamp, EventKind::Sample { stream, index: 0 });
            }
        }
    }

    while let Some(event) = queue.pop() {
        let now = event.time;
        match event.kind {
            EventKind::Sample { stream, index } => {
                let (run, src) = &mut sensors[stream];
                let sample = src.samples[index];
                run.processed += 1;
                let transmit = match &mut run.filter {
                    None => true,
                    Some(state) => {
                        state
                            .step(sample)
                            .map_err(|source| SimError::Filter { device: src.device.clone(), source })?
                            .transmit
                    }
                };
                if let Some(next) = src.samples.get(index + 1) {
                    if next.timestamp < params.duration {
                        queue.push(next.timestamp, EventKind::Sample { stream, index: index + 1 });
                    }
                }
                if transmit {
                    run.log.push(sample);
                    handled[run.device] += 1;
                    metrics.messages_emitted += 1;
                    let message = Message {
                        source: src.device.clone(),
                        sample,
                        size: params.message_size,
                        emit_time: now,
                        route: run.route.clone(),
                        next: 0,
                    };
                    send(topology, &mut metrics, &mut queue, now, message);
                }
            }
            EventKind::Arrive(message) => {
                let hop = message.route[message.next];
                metrics.account_network(&topology.links[hop.link], &message);
                handled[hop.device] += 1;
                let device = &topology.devices[hop.device];
                if device.kind == DeviceKind::Cloud {
                    metrics.messages_delivered += 1;
                    latencies.push(now - message.emit_time);
                    continue;
                }
                let mut message = message;
                message.next += 1;
                for out in fog.forward(device, message) {
                    send(topology, &mut metrics, &mut queue, now, out);
                }
            }
        }
    }

    for (d, &count) in topology.devices.iter().zip(&handled) {
        metrics.account_energy(d, params.energy.model(d.kind), count, params.duration);
    }
    metrics.latency = LatencyStats::from_values(latencies);

    for (run, src) in sensors {
        let raw = src.samples[..run.processed].to_vec();
        let log = TransmissionLog::new(run.log, raw.len());
        let error = if raw.is_empty() {
            None
        } else {
            let (_, report) =
                evaluate(&raw, &log).map_err(|source| SimError::Metrics { device: src.device.clone(), source })?;
            Some(report)
        };
        metrics.sensors.insert(
            src.device.clone(),
            SensorOutcome { samples: raw.len() as u64, transmitted: log.transmitted() as u64, error, raw, log },
        );
    }

    Ok(metrics)
}

fn send(topology: &Topology, metrics: &mut RunMetrics, queue: &mut Queue, now: f64, message: Message) {
    let Some(hop) = message.remaining_hops().first() else {
        return;
    };
    let link = &topology.links[hop.link];
    if let Some(usage) = metrics.links.get_mut(&link.name()) {
        usage.messages_emitted += 1;
    }
    queue.push(now + link.latency, EventKind::Arrive(message));
}

/// `100 * (baseline - candidate) / baseline`, or `None` when the baseline is zero.
pub fn reduction_percent(baseline: f64, candidate: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (baseline - candidate) / baseline)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub baseline: f64,
    pub candidate: f64,
    pub reduction_percent: Option<f64>,
}

impl ReductionRow {
    pub fn new(baseline: f64, candidate: f64) -> Self {
        Self { baseline, candidate, reduction_percent: reduction_percent(baseline, candidate) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: Mode,
    pub candidate: Mode,
    /// Headline network usage is `network_bytes`.
    pub rows: BTreeMap<String, ReductionRow>,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&ReductionRow> {
        self.rows.get(name)
    }
}

pub fn compare(baseline: &RunMetrics, candidate: &RunMetrics) -> Result<Comparison, SimError> {
    if baseline.topology != candidate.topology {
        return Err(SimError::Incomparable("topologies differ".into()));
    }
    if baseline.seed != candidate.seed {
        return Err(SimError::Incomparable(format!("seeds differ ({} vs {})", baseline.seed, candidate.seed)));
    }
    if baseline.duration != candidate.duration {
        return Err(SimError::Incomparable("durations differ".into()));
    }
    let mut rows = BTreeMap::new();
    let mut add = |name: &str, f: &dyn Fn(&RunMetrics) -> f64| {
        rows.insert(name.to_string(), ReductionRow::new(f(baseline), f(candidate)));
    };
    add("network_bytes", &|m| m.total_bytes as f64);
    add("network_byte_ms", &|m| m.total_byte_ms);
    add("cloud_messages", &|m| m.messages_delivered as f64);
    add("cloud_energy_j", &|m| m.energy_of(DeviceKind::Cloud));
    add("gateway_energy_j", &|m| m.energy_of(DeviceKind::Gateway));
    add("sensor_energy_j", &|m| m.energy_of(DeviceKind::Sensor));
    add("total_energy_j", &|m| m.total_energy());
    Ok(Comparison { baseline: baseline.mode, candidate: candidate.mode, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{gen_normal, table2_defaults};

    fn params() -> RunParams {
        RunParams {
            filter: FilterConfig::default(),
            energy: EnergyConfig::default(),
            duration: 1_000_000.0,
            message_size: DEFAULT_MESSAGE_SIZE,
            seed: 7,
        }
    }

    fn empty_sources(t: &Topology) -> Vec<SourceStream> {
        t.sensors().map(|d| SourceStream { device: d.id.clone(), samples: vec![] }).collect()
    }

    fn table2_sources(count: usize, seed: u64) -> Vec<SourceStream> {
        table2_defaults(seed, count)
            .iter()
            .map(|s| SourceStream { device: s.device.clone(), samples: gen_normal(s, count).unwrap() })
            .collect()
    }

    #[test]
    fn single_message_latency() {
        let t = Topology::table2();
        let mut sources = empty_sources(&t);
        sources[0].samples.push(Sample::new(10.0, 25.0));
        let m = run(&t, &sources, Mode::CloudOnly, &params()).unwrap();
        assert_eq!(m.messages_delivered, 1);
        assert_eq!(m.latency.min, 54.0);
        assert_eq!(m.latency.max, 54.0);
        assert_eq!(m.links["S1-gateway"].bytes, 100);
        assert_eq!(m.links["S1-gateway"].byte_ms, 400.0);
        assert_eq!(m.links["cloud-gateway"].byte_ms, 5000.0);
        assert_eq!(m.total_bytes, 200);
    }

    #[test]
    fn zero_samples_zero_traffic() {
        let t = Topology::table2();
        let m = run(&t, &empty_sources(&t), Mode::MistFogCloud, &params()).unwrap();
        assert_eq!(m.total_bytes, 0);
        assert_eq!(m.total_byte_ms, 0.0);
        assert_eq!(m.messages_emitted, 0);
        assert_eq!(m.latency, LatencyStats::default());
        assert!(m.links.values().all(|l| l.bytes == 0 && l.messages_delivered == 0));
        assert!(m.devices.values().all(|d| d.messages_handled == 0));
        assert!(m.sensors.values().all(|s| s.error.is_none()));
        // idle draw remains
        let idle = EnergyConfig::default().cloud.idle_power * 1000.0;
        assert!((m.energy_of(DeviceKind::Cloud) - idle).abs() < 1e-9);
    }

    #[test]
    fn account_network_examples() {
        let t = Topology::table2();
        let mut m = RunMetrics::empty(&t, Mode::CloudOnly, &params());
        let msg = Message {
            source: "S1".into(),
            sample: Sample::new(0.0, 1.0),
            size: 100,
            emit_time: 0.0,
            route: Arc::from(vec![]),
            next: 0,
        };
        m.account_network(&Link::new("S1", "gateway", 4.0), &msg);
        assert_eq!((m.total_bytes, m.total_byte_ms), (100, 400.0));
        let mut m = RunMetrics::empty(&t, Mode::CloudOnly, &params());
        let up = Link::new("cloud", "gateway", 50.0);
        m.account_network(&up, &msg);
        m.account_network(&up, &msg);
        assert_eq!((m.total_bytes, m.total_byte_ms), (200, 10_000.0));
    }

    #[test]
    fn energy_model_examples() {
        let model = EnergyModel { busy_power: 100.0, idle_power: 80.0, per_message_busy_time: 1.0 };
        assert_eq!(model.energy(0, 5000.0), 80.0 * 5.0);
        let flat = EnergyModel { busy_power: 50.0, idle_power: 50.0, per_message_busy_time: 3.0 };
        assert_eq!(flat.energy(0, 1000.0), flat.energy(200, 1000.0));
        assert!(model.energy(10, 5000.0) < model.energy(11, 5000.0));
        // clamped to the horizon
        assert_eq!(model.energy(1_000_000, 1000.0), 100.0);
        assert!(EnergyModel { busy_power: 1.0, idle_power: 2.0, per_message_busy_time: 1.0 }.validate().is_err());
    }

    #[test]
    fn run_errors() {
        let t = Topology::table2();
        let mut sources = empty_sources(&t);
        let mut p = params();
        p.duration = 0.0;
        assert!(matches!(run(&t, &sources, Mode::CloudOnly, &p), Err(SimError::InvalidDuration(_))));
        sources.push(SourceStream { device: "ghost".into(), samples: vec![] });
        assert!(matches!(run(&t, &sources, Mode::CloudOnly, &params()), Err(SimError::UnknownSource(_))));
        sources.pop();
        sources.pop();
        assert!(matches!(run(&t, &sources, Mode::CloudOnly, &params()), Err(SimError::MissingSource(_))));
        sources.push(SourceStream { device: "gateway".into(), samples: vec![] });
        assert!(matches!(run(&t, &sources, Mode::CloudOnly, &params()), Err(SimError::NotASensor(_))));
    }

    #[test]
    fn filtered_run_carries_less() {
        let t = Topology::table2();
        let sources = table2_sources(2000, 11);
        let p = params();
        let base = run(&t, &sources, Mode::CloudOnly, &p).unwrap();
        let cand = run(&t, &sources, Mode::MistFogCloud, &p).unwrap();
        assert!(cand.total_bytes < base.total_bytes);
        for (name, usage) in &cand.links {
            assert!(usage.bytes <= base.links[name].bytes);
        }
        let transmitted: u64 = cand.sensors.values().map(|s| s.transmitted).sum();
        assert_eq!(cand.messages_delivered, transmitted);
        assert_eq!(base.messages_delivered, 6 * 1000);
        assert!(cand.energy_of(DeviceKind::Cloud) < base.energy_of(DeviceKind::Cloud));

        let cmp = compare(&base, &cand).unwrap();
        assert!(cmp.row("network_bytes").unwrap().reduction_percent.unwrap() > 0.0);
        let same = compare(&base, &base).unwrap();
        assert!(same.rows.values().all(|r| r.reduction_percent.is_none_or(|x| x == 0.0)));
    }

    #[test]
    fn duration_truncates_emission() {
        let t = Topology::table2();
        let sources = table2_sources(2000, 11);
        let mut p = params();
        p.duration = 500_000.0;
        let m = run(&t, &sources, Mode::CloudOnly, &p).unwrap();
        assert_eq!(m.messages_emitted, 6 * 500);
        assert!(m.sensors.values().all(|s| s.samples == 500));
    }

    #[test]
    fn conservation_per_link() {
        let t = Topology::table2();
        let m = run(&t, &table2_sources(500, 3), Mode::MistFogCloud, &params()).unwrap();
        for usage in m.links.values() {
            assert_eq!(usage.messages_emitted, usage.messages_delivered);
        }
        assert_eq!(m.total_bytes, m.links.values().map(|l| l.bytes).sum::<u64>());
        assert_eq!(m.messages_emitted, m.messages_delivered);
    }

    #[test]
    fn compare_rejects_mismatch() {
        let t = Topology::table2();
        let sources = empty_sources(&t);
        let a = run(&t, &sources, Mode::CloudOnly, &params()).unwrap();
        let mut p = params();
        p.seed = 8;
        let b = run(&t, &sources, Mode::MistFogCloud, &p).unwrap();
        assert!(matches!(compare(&a, &b), Err(SimError::Incomparable(_))));
        let mut t2 = t.clone();
        t2.links[0].latency = 5.0;
        let c = run(&t2, &sources, Mode::MistFogCloud, &params()).unwrap();
        assert!(matches!(compare(&a, &c), Err(SimError::Incomparable(_))));
    }

    #[test]
    fn reduction_arithmetic() {
        assert!((reduction_percent(100.0, 54.7).unwrap() - 45.3).abs() < 1e-9);
        assert!((reduction_percent(100.0, 99.5).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(reduction_percent(0.0, 0.0), None);
    }

    #[test]
    fn simultaneous_events_are_fifo() {
        let mut q = Queue::default();
        for i in 0..5 {
            q.push(1.0, EventKind::Sample { stream: i, index: 0 });
        }
        q.push(0.5, EventKind::Sample { stream: 99, index: 0 });
        let order: Vec<usize> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::Sample { stream, .. } => stream,
                EventKind::Arrive(_) => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![99, 0, 1, 2, 3, 4]);
    }

    struct Drop2;
    impl FogStage for Drop2 {
        fn forward(&mut self, _: &Device, m: Message) -> Vec<Message> {
            if (m.sample.timestamp as u64).is_multiple_of(2000) {
                vec![m]
            } else {
                vec![]
            }
        }
    }

    #[test]
    fn custom_fog_stage() {
        let t = Topology::table2();
        let m = run_with(&t, &table2_sources(10, 1), Mode::CloudOnly, &params(), &mut Drop2).unwrap();
        assert_eq!(m.messages_emitted, 60);
        assert_eq!(m.messages_delivered, 30);
    }

    #[test]
    fn latency_percentiles() {
        let s = LatencyStats::from_values((1..=100).map(f64::from).collect());
        assert_eq!((s.min, s.p50, s.p95, s.p99, s.max), (1.0, 50.0, 95.0, 99.0, 100.0));
        assert_eq!(s.mean, 50.5);
    }
}
