//! Sensor / gateway / cloud device tree.
//!
//! Latencies are milliseconds; uplink and downlink capacities are kbit/s and
//! `ram` is carried as declared. Capacities are not enforced by the simulator.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Sensor,
    Gateway,
    Cloud,
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceKind::Sensor => "sensor",
            DeviceKind::Gateway => "gateway",
            DeviceKind::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    pub kind: DeviceKind,
    pub level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uplink: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downlink: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ram: Option<u64>,
}

impl Device {
    pub fn new(id: impl Into<String>, kind: DeviceKind, level: u32) -> Self {
        Self { id: id.into(), kind, level, uplink: None, downlink: None, ram: None }
    }

    pub fn with_capacity(mut self, uplink: u64, downlink: u64, ram: u64) -> Self {
        self.uplink = Some(uplink);
        self.downlink = Some(downlink);
        self.ram = Some(ram);
        self
    }
}

/// Undirected link between two devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub from: String,
    pub to: String,
    /// milliseconds
    pub latency: f64,
}

impl Link {
    pub fn new(from: impl Into<String>, to: impl Into<String>, latency: f64) -> Self {
        Self { from: from.into(), to: to.into(), latency }
    }

    /// Stable name used in reports, e.g. `S1-gateway`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }

    fn touches(&self, id: &str) -> bool {
        self.from == id || self.to == id
    }

    fn other(&self, id: &str) -> &str {
        if self.from == id {
            &self.to
        } else {
            &self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    DuplicateDevice(String),
    NoCloud,
    MultipleClouds(Vec<String>),
    LevelOrder { device: String, kind: DeviceKind, level: u32 },
    UnknownEndpoint { link: String, endpoint: String },
    SelfLink(String),
    NegativeLatency(String),
    DuplicateLink(String),
    BadAttachment { link: String, from: DeviceKind, to: DeviceKind },
    Unreachable(String),
    Cycle(String),
    MultipleUplinks(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateDevice(id) => write!(f, "duplicate device id '{id}'"),
            Violation::NoCloud => f.write_str("topology has no cloud device"),
            Violation::MultipleClouds(ids) => write!(f, "more than one cloud device: {}", ids.join(", ")),
            Violation::LevelOrder { device, kind, level } => {
                write!(f, "level order violated by {kind} '{device}' at level {level}")
            }
            Violation::UnknownEndpoint { link, endpoint } => {
                write!(f, "link '{link}' references unknown device '{endpoint}'")
            }
            Violation::SelfLink(link) => write!(f, "link '{link}' connects a device to itself"),
            Violation::NegativeLatency(link) => write!(f, "negative latency on link '{link}'"),
            Violation::DuplicateLink(link) => write!(f, "duplicate link '{link}'"),
            Violation::BadAttachment { link, from, to } => {
                write!(f, "link '{link}' joins {from} to {to}; sensors attach to gateways and gateways to the cloud")
            }
            Violation::Unreachable(id) => write!(f, "unreachable device '{id}'"),
            Violation::Cycle(link) => write!(f, "link '{link}' closes a cycle"),
            Violation::MultipleUplinks(id) => write!(f, "device '{id}' has more than one path towards the cloud"),
        }
    }
}

/// Violations are sorted, so the result does not depend on declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violations {}

/// One step of a sensor's route: the link crossed and the device reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub link: usize,
    pub device: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub devices: Vec<Device>,
    pub links: Vec<Link>,
}

fn allowed_attachment(a: DeviceKind, b: DeviceKind) -> bool {
    use DeviceKind::*;
    matches!((a, b), (Sensor, Gateway) | (Gateway, Sensor) | (Gateway, Cloud) | (Cloud, Gateway))
}

impl Topology {
    pub fn new(devices: Vec<Device>, links: Vec<Link>) -> Self {
        Self { devices, links }
    }

    /// The six-sensor, one-gateway, one-cloud reference topology.
    pub fn table2() -> Self {
        let mut devices = vec![
            Device::new("cloud", DeviceKind::Cloud, 0).with_capacity(10_000, 10_000, 10_000),
            Device::new("gateway", DeviceKind::Gateway, 1).with_capacity(1000, 1000, 1000),
        ];
        let mut links = Vec::new();
        for (i, latency) in [4.0, 6.0, 8.0, 2.0, 3.0, 7.0].into_iter().enumerate() {
            let id = format!("S{}", i + 1);
            devices.push(Device::new(&id, DeviceKind::Sensor, 2));
            links.push(Link::new(id, "gateway", latency));
        }
        links.push(Link::new("cloud", "gateway", 50.0));
        Self { devices, links }
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn cloud(&self) -> Option<&Device> {
        self.devices.iter().find(|d| d.kind == DeviceKind::Cloud)
    }

    pub fn sensors(&self) -> impl Iterator<Item = &Device> {
        self.devices.iter().filter(|d| d.kind == DeviceKind::Sensor)
    }

    pub fn validate(&self) -> Result<(), Violations> {
        let mut out = BTreeSet::new();

        let mut ids: BTreeMap<&str, &Device> = BTreeMap::new();
        for d in &self.devices {
            if ids.insert(&d.id, d).is_some() {
                out.insert(Violation::DuplicateDevice(d.id.clone()));
            }
        }

        let clouds: Vec<&Device> = self.devices.iter().filter(|d| d.kind == DeviceKind::Cloud).collect();
        match clouds.len() {
            0 => {
                out.insert(Violation::NoCloud);
            }
            1 => {}
            _ => {
                let mut names: Vec<String> = clouds.iter().map(|d| d.id.clone()).collect();
                names.sort();
                out.insert(Violation::MultipleClouds(names));
            }
        }

        // every cloud < every gateway < every sensor
        let max_level = |k| self.devices.iter().filter(|d| d.kind == k).map(|d| d.level).max();
        let min_level = |k| self.devices.iter().filter(|d| d.kind == k).map(|d| d.level).min();
        for d in &self.devices {
            let ok = match d.kind {
                DeviceKind::Cloud => {
                    min_level(DeviceKind::Gateway).is_none_or(|g| d.level < g)
                        && min_level(DeviceKind::Sensor).is_none_or(|s| d.level < s)
                }
                DeviceKind::Gateway => {
                    max_level(DeviceKind::Cloud).is_none_or(|c| d.level > c)
                        && min_level(DeviceKind::Sensor).is_none_or(|s| d.level < s)
                }
                DeviceKind::Sensor => {
                    max_level(DeviceKind::Cloud).is_none_or(|c| d.level > c)
                        && max_level(DeviceKind::Gateway).is_none_or(|g| d.level > g)
                }
            };
            if !ok {
                out.insert(Violation::LevelOrder { device: d.id.clone(), kind: d.kind, level: d.level });
            }
        }

        let mut pairs = BTreeSet::new();
        let mut usable: Vec<&Link> = Vec::new();
        for l in &self.links {
            let name = l.name();
            let mut ok = true;
            for end in [&l.from, &l.to] {
                if !ids.contains_key(end.as_str()) {
                    out.insert(Violation::UnknownEndpoint { link: name.clone(), endpoint: end.clone() });
                    ok = false;
                }
            }
            if l.from == l.to {
                out.insert(Violation::SelfLink(name.clone()));
                ok = false;
            }
            if !(l.latency >= 0.0 && l.latency.is_finite()) {
                out.insert(Violation::NegativeLatency(name.clone()));
            }
            let key = if l.from <= l.to { (l.from.as_str(), l.to.as_str()) } else { (l.to.as_str(), l.from.as_str()) };
            if !pairs.insert(key) {
                out.insert(Violation::DuplicateLink(name.clone()));
                ok = false;
            }
            if ok {
                let (a, b) = (ids[l.from.as_str()].kind, ids[l.to.as_str()].kind);
                if !allowed_attachment(a, b) {
                    out.insert(Violation::BadAttachment { link: name.clone(), from: a, to: b });
                }
                usable.push(l);
            }
        }

        // Walk outwards from the cloud; anything not reached is unreachable,
        // any edge to an already-visited node closes a cycle.
        if clouds.len() == 1 {
            let root = clouds[0].id.as_str();
            let mut visited = BTreeSet::from([root]);
            let mut used = vec![false; usable.len()];
            let mut queue = VecDeque::from([root]);
            while let Some(cur) = queue.pop_front() {
                for (i, l) in usable.iter().enumerate() {
                    if used[i] || !l.touches(cur) {
                        continue;
                    }
                    used[i] = true;
                    let next = l.other(cur);
                    if visited.insert(next) {
                        queue.push_back(next);
                    } else {
                        out.insert(Violation::Cycle(l.name()));
                    }
                }
            }
            for d in &self.devices {
                if !visited.contains(d.id.as_str()) {
                    out.insert(Violation::Unreachable(d.id.clone()));
                }
            }
            for d in &self.devices {
                let uplinks = usable
                    .iter()
                    .filter(|l| l.touches(&d.id) && ids.get(l.other(&d.id)).is_some_and(|o| o.level < d.level))
                    .count();
                if uplinks > 1 {
                    out.insert(Violation::MultipleUplinks(d.id.clone()));
                }
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(Violations(out.into_iter().collect()))
        }
    }

    /// Route from `device` to the cloud as a list of hops. `None` when the
    /// device is unknown or not connected. Expects a validated topology.
    pub fn route_to_cloud(&self, device: &str) -> Option<Vec<Hop>> {
        let mut cur = self.device_index(device)?;
        let mut hops = Vec::new();
        let mut guard = self.devices.len();
        while self.devices[cur].kind != DeviceKind::Cloud {
            let here = &self.devices[cur];
            let (link, next) = self.links.iter().enumerate().find_map(|(i, l)| {
                if !l.touches(&here.id) {
                    return None;
                }
                let j = self.device_index(l.other(&here.id))?;
                (self.devices[j].level < here.level).then_some((i, j))
            })?;
            hops.push(Hop { link, device: next });
            cur = next;
            guard = guard.checked_sub(1)?;
        }
        Some(hops)
    }

    /// Order-independent content hash, used to check two runs share a topology.
    pub fn fingerprint(&self) -> String {
        let mut devices: Vec<String> = self
            .devices
            .iter()
            .map(|d| format!("{}|{}|{}|{:?}|{:?}|{:?}", d.id, d.kind, d.level, d.uplink, d.downlink, d.ram))
            .collect();
        devices.sort();
        let mut links: Vec<String> = self
            .links
            .iter()
            .map(|l| {
                let (a, b) = if l.from <= l.to { (&l.from, &l.to) } else { (&l.to, &l.from) };
                format!("{a}|{b}|{:016x}", l.latency.to_bits())
            })
            .collect();
        links.sort();
        let mut h = Sha256::new();
        for line in devices.iter().chain(std::iter::once(&String::from("--"))).chain(links.iter()) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn violations(t: &Topology) -> Vec<Violation> {
        t.validate().err().map(|v| v.0).unwrap_or_default()
    }

    #[test]
    fn table2_is_valid() {
        let t = Topology::table2();
        assert_eq!(t.devices.len(), 8);
        assert_eq!(t.links.len(), 7);
        assert_eq!(t.sensors().count(), 6);
        t.validate().unwrap();
    }

    #[test]
    fn table2_routes() {
        let t = Topology::table2();
        let route = t.route_to_cloud("S1").unwrap();
        assert_eq!(route.len(), 2);
        assert_eq!(t.links[route[0].link].latency, 4.0);
        assert_eq!(t.devices[route[0].device].id, "gateway");
        assert_eq!(t.links[route[1].link].latency, 50.0);
        assert_eq!(t.devices[route[1].device].kind, DeviceKind::Cloud);
        assert_eq!(t.route_to_cloud("cloud").unwrap(), vec![]);
        assert!(t.route_to_cloud("nope").is_none());
    }

    #[test]
    fn unlinked_sensor_is_unreachable() {
        let mut t = Topology::table2();
        t.devices.push(Device::new("S7", DeviceKind::Sensor, 2));
        assert_eq!(violations(&t), vec![Violation::Unreachable("S7".into())]);
        assert!(violations(&t)[0].to_string().contains("unreachable device"));
    }

    #[test]
    fn negative_latency_reported() {
        let mut t = Topology::table2();
        t.links[0].latency = -1.0;
        assert_eq!(violations(&t), vec![Violation::NegativeLatency("S1-gateway".into())]);
        assert!(violations(&t)[0].to_string().contains("negative latency"));
    }

    #[test]
    fn duplicate_device_reported() {
        let mut t = Topology::table2();
        t.devices.push(Device::new("S1", DeviceKind::Sensor, 2));
        assert!(violations(&t).contains(&Violation::DuplicateDevice("S1".into())));
    }

    #[test]
    fn cloud_count_checked() {
        let mut t = Topology::table2();
        t.devices.retain(|d| d.kind != DeviceKind::Cloud);
        assert!(violations(&t).contains(&Violation::NoCloud));

        let mut t = Topology::table2();
        t.devices.push(Device::new("cloud2", DeviceKind::Cloud, 0));
        t.links.push(Link::new("cloud2", "gateway", 1.0));
        assert!(violations(&t).contains(&Violation::MultipleClouds(vec!["cloud".into(), "cloud2".into()])));
    }

    #[test]
    fn sensor_directly_on_cloud_rejected() {
        let mut t = Topology::table2();
        t.links[0] = Link::new("S1", "cloud", 4.0);
        assert!(violations(&t).iter().any(|v| matches!(v, Violation::BadAttachment { .. })));
    }

    #[test]
    fn sensor_with_two_gateways_rejected() {
        let mut t = Topology::table2();
        t.devices.push(Device::new("gw2", DeviceKind::Gateway, 1));
        t.links.push(Link::new("gw2", "cloud", 10.0));
        t.links.push(Link::new("S1", "gw2", 1.0));
        let v = violations(&t);
        assert!(v.contains(&Violation::MultipleUplinks("S1".into())), "{v:?}");
        assert!(v.iter().any(|x| matches!(x, Violation::Cycle(_))));
    }

    #[test]
    fn level_order_checked() {
        let mut t = Topology::table2();
        t.devices[1].level = 5;
        assert!(violations(&t).contains(&Violation::LevelOrder {
            device: "gateway".into(),
            kind: DeviceKind::Gateway,
            level: 5
        }));
    }

    #[test]
    fn bad_endpoints() {
        let mut t = Topology::table2();
        t.links.push(Link::new("S1", "ghost", 1.0));
        t.links.push(Link::new("gateway", "gateway", 1.0));
        let v = violations(&t);
        assert!(v.contains(&Violation::UnknownEndpoint { link: "S1-ghost".into(), endpoint: "ghost".into() }));
        assert!(v.contains(&Violation::SelfLink("gateway-gateway".into())));
    }

    #[test]
    fn validation_is_order_independent() {
        let mut a = Topology::table2();
        a.links[0].latency = -3.0;
        a.devices.push(Device::new("S9", DeviceKind::Sensor, 2));
        a.devices.push(Device::new("S9", DeviceKind::Sensor, 2));
        let mut b = a.clone();
        b.devices.reverse();
        b.links.reverse();
        assert_eq!(a.validate(), b.validate());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn fingerprint_tracks_latency() {
        let a = Topology::table2();
        let mut b = a.clone();
        b.links[2].latency = 8.5;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
