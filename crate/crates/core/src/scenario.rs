//! Scenario files.
//!
//! A scenario is a sequence of `[section]` headers each followed by
//! `key = value` lines. `#` starts a comment. Nodes live in `[node.N]`
//! sections. Every key is optional except where validation says otherwise;
//! unknown sections and keys are rejected. See `scenarios/` for examples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attack::{AttackConfig, AttackKind};
use crate::battery::{BatteryModel, BatteryType};
use crate::energy::CurrentProfile;
use crate::radio::{Position, RadioParams, Topology, MAX_FRAME_SIZE};
use crate::rpl::TrickleConfig;
use crate::time::{SimDuration, SimTime, TICKS_PER_SEC};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{field}: {msg}")]
    Validation { field: String, msg: String },
    #[error("no connected placement found after {attempts} attempts")]
    GenerationFailed { attempts: u32 },
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Server,
    Honest,
    Malicious,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Server => "server",
            Role::Honest => "honest",
            Role::Malicious => "malicious",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "server" => Some(Role::Server),
            "honest" => Some(Role::Honest),
            "malicious" => Some(Role::Malicious),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PowerSource {
    Infinite,
    Battery(BatteryType),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: Role,
    pub position: Position,
    pub power: PowerSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSizes {
    pub dis: u16,
    pub dio: u16,
    pub dao: u16,
}

impl Default for FrameSizes {
    fn default() -> Self {
        FrameSizes {
            dis: 39,
            dio: 97,
            dao: 85,
        }
    }
}

/// CPU time booked per handled event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CpuCosts {
    pub per_rx: SimDuration,
    pub per_timer: SimDuration,
}

impl Default for CpuCosts {
    fn default() -> Self {
        CpuCosts {
            per_rx: SimDuration::from_millis(2),
            per_timer: SimDuration::from_millis(1),
        }
    }
}

/// Honest application traffic: one DATA frame to the server every `interval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traffic {
    pub interval: SimDuration,
    pub payload: u16,
    /// First packet is sent at `start` plus a per-node random offset below `interval`.
    pub start: SimDuration,
}

impl Default for Traffic {
    fn default() -> Self {
        Traffic {
            interval: SimDuration::from_secs(60),
            payload: 110,
            start: SimDuration::from_secs(30),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryDefaults {
    pub default: BatteryType,
    pub model: BatteryModel,
    pub step: SimDuration,
    /// Multiplies the charge drawn from batteries; timers and power are unaffected.
    pub drain_scale: f64,
}

impl Default for BatteryDefaults {
    fn default() -> Self {
        BatteryDefaults {
            default: "2xAA".parse().expect("preset"),
            model: BatteryModel::Linear,
            step: SimDuration::from_secs(1),
            drain_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub duration: SimDuration,
    pub seed: u64,
    pub arena: (f64, f64),
    pub sample_interval: SimDuration,
    pub radio: RadioParams,
    pub frames: FrameSizes,
    pub profile: CurrentProfile,
    pub cpu: CpuCosts,
    pub trickle: TrickleConfig,
    pub traffic: Traffic,
    pub battery: BatteryDefaults,
    pub attack: AttackConfig,
    pub nodes: Vec<NodeSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "unnamed".into(),
            description: String::new(),
            duration: SimDuration::from_secs(3600),
            seed: 1,
            arena: (100.0, 100.0),
            sample_interval: SimDuration::from_secs(10),
            radio: RadioParams::default(),
            frames: FrameSizes::default(),
            profile: CurrentProfile::default(),
            cpu: CpuCosts::default(),
            trickle: TrickleConfig::default(),
            traffic: Traffic::default(),
            battery: BatteryDefaults::default(),
            attack: AttackConfig::default(),
            nodes: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn server(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.role == Role::Server)
            .map(|n| n.id)
            .expect("validated scenario has a server")
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn topology(&self) -> Topology {
        let placed: Vec<_> = self.nodes.iter().map(|n| (n.id, n.position)).collect();
        Topology::new(&placed, self.radio)
    }

    /// Gives every honest node `battery` and makes it the default.
    pub fn with_battery(mut self, battery: BatteryType) -> Self {
        for n in &mut self.nodes {
            if n.role == Role::Honest {
                n.power = PowerSource::Battery(battery.clone());
            }
        }
        self.battery.default = battery;
        self
    }

    /// Same scenario with the attacker dormant.
    pub fn without_attack(mut self) -> Self {
        self.attack.kind = AttackKind::None;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration.ticks() == 0 {
            return Err(invalid("scenario.duration_s", "must be greater than zero"));
        }
        if self.sample_interval.ticks() == 0 {
            return Err(invalid("scenario.sample_interval_s", "must be greater than zero"));
        }
        let (w, h) = self.arena;
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(invalid("scenario.arena", "width and height must be positive"));
        }
        if self.radio.bitrate == 0 {
            return Err(invalid("radio.bitrate", "must be greater than zero"));
        }
        if !(self.radio.range.is_finite() && self.radio.range > 0.0) {
            return Err(invalid("radio.range_m", "must be positive"));
        }
        for (field, size) in [
            ("frames.dis", self.frames.dis),
            ("frames.dio", self.frames.dio),
            ("frames.dao", self.frames.dao),
            ("traffic.payload", self.traffic.payload),
        ] {
            if size == 0 || size > MAX_FRAME_SIZE {
                return Err(invalid(field, format!("{size} B is outside 1..={MAX_FRAME_SIZE}")));
            }
        }
        let p = &self.profile;
        for (field, v) in [
            ("profile.i_lpm_ma", p.i_lpm_ma),
            ("profile.i_cpu_ma", p.i_cpu_ma),
            ("profile.i_tx_ma", p.i_tx_ma),
            ("profile.i_rx_ma", p.i_rx_ma),
            ("profile.voltage", p.voltage),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, "must be positive"));
            }
        }
        if self.trickle.i_min.ticks() == 0 {
            return Err(invalid("trickle.i_min_ms", "must be greater than zero"));
        }
        if self.trickle.doublings > 30 {
            return Err(invalid("trickle.doublings", "at most 30"));
        }
        if self.traffic.interval.ticks() == 0 {
            return Err(invalid("traffic.interval_s", "must be greater than zero"));
        }
        self.battery
            .model
            .validate()
            .map_err(|e| invalid("battery.model", e.to_string()))?;
        if self.battery.step.ticks() == 0 {
            return Err(invalid("battery.step_s", "must be greater than zero"));
        }
        if !(self.battery.drain_scale.is_finite() && self.battery.drain_scale > 0.0) {
            return Err(invalid("battery.drain_scale", "must be positive"));
        }

        if self.nodes.is_empty() {
            return Err(invalid("node", "scenario has no nodes"));
        }
        let mut seen = BTreeMap::new();
        for n in &self.nodes {
            let field = format!("node.{}", n.id);
            if n.id.0 == 0 {
                return Err(invalid(field, "node ids start at 1"));
            }
            if seen.insert(n.id, ()).is_some() {
                return Err(invalid(field, "duplicate node id"));
            }
            let Position { x, y } = n.position;
            if !(x.is_finite() && y.is_finite() && (0.0..=w).contains(&x) && (0.0..=h).contains(&y)) {
                return Err(invalid(format!("{field}.pos"), "outside the arena"));
            }
        }
        let servers = self.nodes.iter().filter(|n| n.role == Role::Server).count();
        if servers != 1 {
            return Err(invalid("node.role", format!("need exactly one server, found {servers}")));
        }
        let bad: Vec<_> = self.nodes.iter().filter(|n| n.role == Role::Malicious).collect();
        if bad.len() > 1 {
            return Err(invalid("node.role", "at most one malicious node"));
        }

        let a = &self.attack;
        a.kind
            .validate()
            .map_err(|e| invalid("attack", e.to_string()))?;
        if a.kind != AttackKind::None {
            let Some(attacker) = a.attacker else {
                return Err(invalid("attack.attacker", "required when an attack is configured"));
            };
            match self.node(attacker) {
                Some(n) if n.role == Role::Malicious => {}
                Some(_) => return Err(invalid("attack.attacker", "node is not malicious")),
                None => return Err(invalid("attack.attacker", format!("no node {attacker}"))),
            }
        }
        if let Some(attacker) = a.attacker {
            if self.node(attacker).is_none() {
                return Err(invalid("attack.attacker", format!("no node {attacker}")));
            }
        }
        if let AttackKind::PacketFlood { target, .. } = a.kind {
            if self.node(target).is_none() {
                return Err(invalid("attack.target", format!("no node {target}")));
            }
        }
        Ok(())
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ScenarioError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ScenarioError::Parse {
                line: e.line,
                msg: format!("bad value `{}` for {}.{}", e.value, self.name, key),
            }),
        }
    }

    fn duration(&mut self, key: &str, scale: f64) -> Result<Option<SimDuration>, ScenarioError> {
        let line = self.entries.get(key).map(|e| e.line).unwrap_or(self.line);
        match self.parsed::<f64>(key)? {
            None => Ok(None),
            Some(v) if v.is_finite() && v >= 0.0 => Ok(Some(SimDuration::from_secs_f64(v * scale))),
            Some(v) => Err(ScenarioError::Parse {
                line,
                msg: format!("{}.{key} must be a non-negative number, got {v}", self.name),
            }),
        }
    }

    fn finish(self) -> Result<(), ScenarioError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((k, e)) => Err(ScenarioError::Parse {
                line: e.line,
                msg: format!("unknown key `{k}` in [{}]", self.name),
            }),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Section>, ScenarioError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ScenarioError::Parse {
                line,
                msg: "unterminated section header".into(),
            })?;
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(ScenarioError::Parse {
                    line,
                    msg: "empty section name".into(),
                });
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("duplicate section [{name}]"),
                });
            }
            sections.push(Section {
                name,
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (k, v) = stripped.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line,
            msg: format!("expected `key = value`, got `{stripped}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ScenarioError::Parse {
                line,
                msg: "missing key".into(),
            });
        }
        let section = sections.last_mut().ok_or_else(|| ScenarioError::Parse {
            line,
            msg: "key outside of any section".into(),
        })?;
        if section.entries.contains_key(k) {
            return Err(ScenarioError::Parse {
                line,
                msg: format!("duplicate key `{k}`"),
            });
        }
        section.entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line,
            },
        );
    }
    Ok(sections)
}

fn parse_pair(s: &str, sep: char) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_power(e: &Entry, field: &str) -> Result<PowerSource, ScenarioError> {
    if e.value == "infinite" {
        return Ok(PowerSource::Infinite);
    }
    e.value
        .parse()
        .map(PowerSource::Battery)
        .map_err(|err| ScenarioError::Parse {
            line: e.line,
            msg: format!("{field}: {err}"),
        })
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::default();
    let mut nodes: Vec<(NodeId, Section)> = Vec::new();
    let mut topology: Option<Section> = None;

    for mut s in tokenize(text)? {
        match s.name.as_str() {
            "scenario" => {
                if let Some(e) = s.take("name") {
                    cfg.name = e.value;
                }
                if let Some(e) = s.take("description") {
                    cfg.description = e.value;
                }
                if let Some(d) = s.duration("duration_s", 1.0)? {
                    cfg.duration = d;
                }
                if let Some(v) = s.parsed("seed")? {
                    cfg.seed = v;
                }
                if let Some(d) = s.duration("sample_interval_s", 1.0)? {
                    cfg.sample_interval = d;
                }
                if let Some(e) = s.take("arena") {
                    cfg.arena = parse_pair(&e.value, 'x').ok_or_else(|| ScenarioError::Parse {
                        line: e.line,
                        msg: format!("arena must look like `100 x 100`, got `{}`", e.value),
                    })?;
                }
                s.finish()?;
            }
            "radio" => {
                if let Some(v) = s.parsed("bitrate")? {
                    cfg.radio.bitrate = v;
                }
                if let Some(v) = s.parsed("range_m")? {
                    cfg.radio.range = v;
                }
                if let Some(v) = s.parsed("phy_overhead")? {
                    cfg.radio.phy_overhead = v;
                }
                s.finish()?;
            }
            "frames" => {
                if let Some(v) = s.parsed("dis")? {
                    cfg.frames.dis = v;
                }
                if let Some(v) = s.parsed("dio")? {
                    cfg.frames.dio = v;
                }
                if let Some(v) = s.parsed("dao")? {
                    cfg.frames.dao = v;
                }
                s.finish()?;
            }
            "profile" => {
                let p = &mut cfg.profile;
                for (key, slot) in [
                    ("i_lpm_ma", &mut p.i_lpm_ma),
                    ("i_cpu_ma", &mut p.i_cpu_ma),
                    ("i_tx_ma", &mut p.i_tx_ma),
                    ("i_rx_ma", &mut p.i_rx_ma),
                    ("voltage", &mut p.voltage),
                ] {
                    if let Some(v) = s.parsed(key)? {
                        *slot = v;
                    }
                }
                s.finish()?;
            }
            "cpu" => {
                if let Some(d) = s.duration("per_rx_ms", 1e-3)? {
                    cfg.cpu.per_rx = d;
                }
                if let Some(d) = s.duration("per_timer_ms", 1e-3)? {
                    cfg.cpu.per_timer = d;
                }
                s.finish()?;
            }
            "trickle" => {
                if let Some(d) = s.duration("i_min_ms", 1e-3)? {
                    cfg.trickle.i_min = d;
                }
                if let Some(v) = s.parsed("doublings")? {
                    cfg.trickle.doublings = v;
                }
                if let Some(v) = s.parsed("k")? {
                    cfg.trickle.k = v;
                }
                s.finish()?;
            }
            "traffic" => {
                if let Some(d) = s.duration("interval_s", 1.0)? {
                    cfg.traffic.interval = d;
                }
                if let Some(v) = s.parsed("payload")? {
                    cfg.traffic.payload = v;
                }
                if let Some(d) = s.duration("start_s", 1.0)? {
                    cfg.traffic.start = d;
                }
                s.finish()?;
            }
            "battery" => {
                if let Some(e) = s.take("default") {
                    cfg.battery.default = e.value.parse().map_err(|err| ScenarioError::Parse {
                        line: e.line,
                        msg: format!("battery.default: {err}"),
                    })?;
                }
                let model_line = s.entries.get("model").map(|e| e.line);
                let c: Option<f64> = s.parsed("kibam_c")?;
                let k: Option<f64> = s.parsed("kibam_k")?;
                if let Some(e) = s.take("model") {
                    cfg.battery.model = match e.value.as_str() {
                        "linear" => BatteryModel::Linear,
                        "kinetic" => BatteryModel::DEFAULT_KINETIC,
                        other => {
                            return Err(ScenarioError::Parse {
                                line: e.line,
                                msg: format!("battery.model must be linear or kinetic, got `{other}`"),
                            })
                        }
                    };
                }
                match &mut cfg.battery.model {
                    BatteryModel::Kinetic { c: cc, k: kk } => {
                        *cc = c.unwrap_or(*cc);
                        *kk = k.unwrap_or(*kk);
                    }
                    BatteryModel::Linear if c.is_some() || k.is_some() => {
                        return Err(ScenarioError::Parse {
                            line: model_line.unwrap_or(s.line),
                            msg: "kibam_c/kibam_k need model = kinetic".into(),
                        });
                    }
                    BatteryModel::Linear => {}
                }
                if let Some(d) = s.duration("step_s", 1.0)? {
                    cfg.battery.step = d;
                }
                if let Some(v) = s.parsed("drain_scale")? {
                    cfg.battery.drain_scale = v;
                }
                s.finish()?;
            }
            "attack" => {
                cfg.attack = parse_attack(&mut s)?;
                s.finish()?;
            }
            "topology" => topology = Some(s),
            name => {
                let id = name
                    .strip_prefix("node.")
                    .and_then(|n| n.parse::<u16>().ok())
                    .ok_or_else(|| ScenarioError::Parse {
                        line: s.line,
                        msg: format!("unknown section [{name}]"),
                    })?;
                nodes.push((NodeId(id), s));
            }
        }
    }

    if let Some(mut t) = topology {
        if !nodes.is_empty() {
            return Err(ScenarioError::Parse {
                line: t.line,
                msg: "[topology] cannot be combined with [node.N] sections".into(),
            });
        }
        let n: usize = t.parsed("generate")?.ok_or_else(|| ScenarioError::Parse {
            line: t.line,
            msg: "[topology] needs `generate = <count>`".into(),
        })?;
        let seed: u64 = t.parsed("seed")?.unwrap_or(cfg.seed);
        let malicious: Option<u16> = t.parsed("malicious")?;
        t.finish()?;
        let mut generated = generate_topology(n, seed, cfg.arena, cfg.radio.range)?;
        for spec in &mut generated {
            if Some(spec.id.0) == malicious {
                spec.role = Role::Malicious;
                spec.power = PowerSource::Infinite;
            } else if spec.role == Role::Honest {
                spec.power = PowerSource::Battery(cfg.battery.default.clone());
            }
        }
        cfg.nodes = generated;
    } else {
        for (id, mut s) in nodes {
            let field = format!("node.{id}");
            let role_e = s.take("role").ok_or_else(|| ScenarioError::Parse {
                line: s.line,
                msg: format!("[{field}] needs a role"),
            })?;
            let role = Role::parse(&role_e.value).ok_or_else(|| ScenarioError::Parse {
                line: role_e.line,
                msg: format!("role must be server, honest or malicious, got `{}`", role_e.value),
            })?;
            let pos_e = s.take("pos").ok_or_else(|| ScenarioError::Parse {
                line: s.line,
                msg: format!("[{field}] needs a pos"),
            })?;
            let (x, y) = parse_pair(&pos_e.value, ',').ok_or_else(|| ScenarioError::Parse {
                line: pos_e.line,
                msg: format!("pos must look like `x, y`, got `{}`", pos_e.value),
            })?;
            let power = match s.take("battery") {
                Some(e) => parse_power(&e, &format!("{field}.battery"))?,
                None if role == Role::Honest => PowerSource::Battery(cfg.battery.default.clone()),
                None => PowerSource::Infinite,
            };
            s.finish()?;
            cfg.nodes.push(NodeSpec {
                id,
                role,
                position: Position::new(x, y),
                power,
            });
        }
    }
    cfg.nodes.sort_by_key(|n| n.id);
    cfg.validate()?;
    Ok(cfg)
}

fn parse_attack(s: &mut Section) -> Result<AttackConfig, ScenarioError> {
    let kind_e = s.take("kind");
    let kind_line = kind_e.as_ref().map(|e| e.line).unwrap_or(s.line);
    let kind_name = kind_e.map(|e| e.value).unwrap_or_else(|| "none".into());
    let attacker: Option<u16> = s.parsed("attacker")?;
    let start_at = match s.take("start_s") {
        None => SimTime::ZERO,
        Some(e) if e.value == "never" => SimTime::NEVER,
        Some(e) => {
            let v: f64 = e.value.parse().map_err(|_| ScenarioError::Parse {
                line: e.line,
                msg: format!("attack.start_s must be seconds or `never`, got `{}`", e.value),
            })?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(ScenarioError::Parse {
                    line: e.line,
                    msg: "attack.start_s must be non-negative".into(),
                });
            }
            SimTime::from_secs_f64(v)
        }
    };
    let missing = |key: &str| ScenarioError::Parse {
        line: kind_line,
        msg: format!("{kind_name} attack needs `{key}`"),
    };
    let kind = match kind_name.as_str() {
        "none" => AttackKind::None,
        "hello_flood" => AttackKind::HelloFlood {
            dis_interval: s.duration("dis_interval_s", 1.0)?.ok_or_else(|| missing("dis_interval_s"))?,
        },
        "packet_flood" => AttackKind::PacketFlood {
            data_interval: s.duration("data_interval_s", 1.0)?.ok_or_else(|| missing("data_interval_s"))?,
            target: NodeId(s.parsed("target")?.ok_or_else(|| missing("target"))?),
        },
        "selective_forwarding" => AttackKind::SelectiveForwarding {
            drop_ratio: s.parsed("drop_ratio")?.ok_or_else(|| missing("drop_ratio"))?,
        },
        "rank" => AttackKind::RankAttack,
        "versioning" => AttackKind::Versioning {
            inflate_interval: s
                .duration("inflate_interval_s", 1.0)?
                .ok_or_else(|| missing("inflate_interval_s"))?,
        },
        "stretch" => AttackKind::Stretch {
            capture: s.parsed("capture")?.unwrap_or(true),
        },
        other => {
            return Err(ScenarioError::Parse {
                line: kind_line,
                msg: format!("unknown attack kind `{other}`"),
            })
        }
    };
    Ok(AttackConfig {
        kind,
        attacker: attacker.map(NodeId),
        start_at,
    })
}

/// Reads and parses a scenario file.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

fn secs(d: SimDuration) -> String {
    let t = d.ticks();
    format!("{}.{:06}", t / TICKS_PER_SEC, t % TICKS_PER_SEC)
}

fn millis(d: SimDuration) -> String {
    let t = d.ticks();
    format!("{}.{:03}", t / 1000, t % 1000)
}

fn power_str(p: &PowerSource) -> String {
    match p {
        PowerSource::Infinite => "infinite".into(),
        PowerSource::Battery(b) => b.name.clone(),
    }
}

/// Writes `cfg` back in scenario syntax. Every field is explicit, so the
/// output loads to an equal config.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "[scenario]");
    let _ = writeln!(o, "name = {}", cfg.name);
    if !cfg.description.is_empty() {
        let _ = writeln!(o, "description = {}", cfg.description);
    }
    let _ = writeln!(o, "duration_s = {}", secs(cfg.duration));
    let _ = writeln!(o, "seed = {}", cfg.seed);
    let _ = writeln!(o, "sample_interval_s = {}", secs(cfg.sample_interval));
    let _ = writeln!(o, "arena = {} x {}", cfg.arena.0, cfg.arena.1);

    let _ = writeln!(o, "\n[radio]");
    let _ = writeln!(o, "bitrate = {}", cfg.radio.bitrate);
    let _ = writeln!(o, "range_m = {}", cfg.radio.range);
    let _ = writeln!(o, "phy_overhead = {}", cfg.radio.phy_overhead);

    let _ = writeln!(o, "\n[frames]");
    let _ = writeln!(o, "dis = {}", cfg.frames.dis);
    let _ = writeln!(o, "dio = {}", cfg.frames.dio);
    let _ = writeln!(o, "dao = {}", cfg.frames.dao);

    let p = &cfg.profile;
    let _ = writeln!(o, "\n[profile]");
    let _ = writeln!(o, "i_lpm_ma = {}", p.i_lpm_ma);
    let _ = writeln!(o, "i_cpu_ma = {}", p.i_cpu_ma);
    let _ = writeln!(o, "i_tx_ma = {}", p.i_tx_ma);
    let _ = writeln!(o, "i_rx_ma = {}", p.i_rx_ma);
    let _ = writeln!(o, "voltage = {}", p.voltage);

    let _ = writeln!(o, "\n[cpu]");
    let _ = writeln!(o, "per_rx_ms = {}", millis(cfg.cpu.per_rx));
    let _ = writeln!(o, "per_timer_ms = {}", millis(cfg.cpu.per_timer));

    let _ = writeln!(o, "\n[trickle]");
    let _ = writeln!(o, "i_min_ms = {}", millis(cfg.trickle.i_min));
    let _ = writeln!(o, "doublings = {}", cfg.trickle.doublings);
    let _ = writeln!(o, "k = {}", cfg.trickle.k);

    let _ = writeln!(o, "\n[traffic]");
    let _ = writeln!(o, "interval_s = {}", secs(cfg.traffic.interval));
    let _ = writeln!(o, "payload = {}", cfg.traffic.payload);
    let _ = writeln!(o, "start_s = {}", secs(cfg.traffic.start));

    let b = &cfg.battery;
    let _ = writeln!(o, "\n[battery]");
    let _ = writeln!(o, "default = {}", b.default.name);
    match b.model {
        BatteryModel::Linear => {
            let _ = writeln!(o, "model = linear");
        }
        BatteryModel::Kinetic { c, k } => {
            let _ = writeln!(o, "model = kinetic");
            let _ = writeln!(o, "kibam_c = {c}");
            let _ = writeln!(o, "kibam_k = {k}");
        }
    }
    let _ = writeln!(o, "step_s = {}", secs(b.step));
    let _ = writeln!(o, "drain_scale = {}", b.drain_scale);

    let a = &cfg.attack;
    let _ = writeln!(o, "\n[attack]");
    let _ = writeln!(o, "kind = {}", a.kind.label());
    if let Some(id) = a.attacker {
        let _ = writeln!(o, "attacker = {id}");
    }
    if a.start_at == SimTime::NEVER {
        let _ = writeln!(o, "start_s = never");
    } else {
        let _ = writeln!(o, "start_s = {}", secs(SimDuration(a.start_at.ticks())));
    }
    match &a.kind {
        AttackKind::None | AttackKind::RankAttack => {}
        AttackKind::HelloFlood { dis_interval } => {
            let _ = writeln!(o, "dis_interval_s = {}", secs(*dis_interval));
        }
        AttackKind::PacketFlood { data_interval, target } => {
            let _ = writeln!(o, "data_interval_s = {}", secs(*data_interval));
            let _ = writeln!(o, "target = {target}");
        }
        AttackKind::SelectiveForwarding { drop_ratio } => {
            let _ = writeln!(o, "drop_ratio = {drop_ratio}");
        }
        AttackKind::Versioning { inflate_interval } => {
            let _ = writeln!(o, "inflate_interval_s = {}", secs(*inflate_interval));
        }
        AttackKind::Stretch { capture } => {
            let _ = writeln!(o, "capture = {capture}");
        }
    }

    for n in &cfg.nodes {
        let _ = writeln!(o, "\n[node.{}]", n.id);
        let _ = writeln!(o, "role = {}", n.role.as_str());
        let _ = writeln!(o, "pos = {}, {}", n.position.x, n.position.y);
        let _ = writeln!(o, "battery = {}", power_str(&n.power));
    }
    o
}

/// Seeded uniform placement, retried until the unit-disk graph is connected.
/// Node 1 is the server, the rest are honest with infinite power (callers
/// assign batteries and adversaries).
pub fn generate_topology(
    n: usize,
    seed: u64,
    arena: (f64, f64),
    range: f64,
) -> Result<Vec<NodeSpec>, ScenarioError> {
    const ATTEMPTS: u32 = 1000;
    if n < 2 || n > u16::MAX as usize {
        return Err(invalid("topology.generate", "need at least two nodes"));
    }
    if !(arena.0 > 0.0 && arena.1 > 0.0 && range > 0.0) {
        return Err(invalid("topology", "arena and range must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RadioParams {
        range,
        ..RadioParams::default()
    };
    for _ in 0..ATTEMPTS {
        let placed: Vec<(NodeId, Position)> = (1..=n as u16)
            .map(|i| {
                let x = rng.gen_range(0.0..=arena.0);
                let y = rng.gen_range(0.0..=arena.1);
                (NodeId(i), Position::new(x, y))
            })
            .collect();
        if Topology::new(&placed, params).is_connected() {
            return Ok(placed
                .into_iter()
                .map(|(id, position)| NodeSpec {
                    id,
                    role: if id.0 == 1 { Role::Server } else { Role::Honest },
                    position,
                    power: PowerSource::Infinite,
                })
                .collect());
        }
    }
    Err(ScenarioError::GenerationFailed { attempts: ATTEMPTS })
}

/// A scenario shipped with the crate.
pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "canonical7",
        text: include_str!("../scenarios/canonical7.scn"),
    },
    Preset {
        name: "hello_flood",
        text: include_str!("../scenarios/hello_flood.scn"),
    },
    Preset {
        name: "packet_flood",
        text: include_str!("../scenarios/packet_flood.scn"),
    },
    Preset {
        name: "selective_forwarding",
        text: include_str!("../scenarios/selective_forwarding.scn"),
    },
    Preset {
        name: "rank",
        text: include_str!("../scenarios/rank.scn"),
    },
    Preset {
        name: "versioning",
        text: include_str!("../scenarios/versioning.scn"),
    },
    Preset {
        name: "stretch11",
        text: include_str!("../scenarios/stretch11.scn"),
    },
];

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let p = PRESETS.iter().find(|p| p.name == name)?;
    Some(load_scenario(p.text).expect("shipped presets are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "\
[scenario]
name = tiny
duration_s = 60

[node.1]
role = server
pos = 0, 0

[node.2]
role = honest
pos = 10, 0
";

    fn err_text(text: &str) -> String {
        load_scenario(text).unwrap_err().to_string()
    }

    #[test]
    fn minimal_fills_defaults() {
        let c = load_scenario(MINIMAL).unwrap();
        assert_eq!(c.nodes.len(), 2);
        assert_eq!(c.duration, SimDuration::from_secs(60));
        assert_eq!(c.nodes[0].power, PowerSource::Infinite);
        assert_eq!(
            c.nodes[1].power,
            PowerSource::Battery("2xAA".parse().unwrap())
        );
        assert_eq!(c.traffic.payload, 110);
        assert_eq!(c.server(), NodeId(1));
    }

    #[test]
    fn canonical7_shape() {
        let c = preset("canonical7").unwrap();
        assert_eq!(c.nodes.len(), 7);
        assert_eq!(c.duration, SimDuration::from_secs(5 * 3600));
        assert_eq!(c.battery.default.capacity_mah, 2000.0);
        let t = c.topology();
        for n in [2, 4, 5, 6] {
            let nb = t.neighbors(NodeId(n)).unwrap();
            assert!(nb.contains(&NodeId(3)), "node {n} must hear node 3");
            assert!(!nb.contains(&NodeId(1)), "node {n} must not hear the server");
        }
        assert!(t.neighbors(NodeId(7)).unwrap().contains(&NodeId(1)));
        assert!(t.is_connected());
    }

    #[test]
    fn every_preset_loads_and_round_trips() {
        for p in PRESETS {
            let a = load_scenario(p.text).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let b = load_scenario(&serialize(&a)).unwrap();
            assert_eq!(a, b, "{}", p.name);
        }
    }

    #[test]
    fn missing_server_is_a_validation_error() {
        let text = MINIMAL.replace("role = server", "role = honest");
        let e = load_scenario(&text).unwrap_err();
        assert!(matches!(e, ScenarioError::Validation { ref field, .. } if field == "node.role"), "{e}");
    }

    #[test]
    fn drop_ratio_out_of_range() {
        let text = format!(
            "{MINIMAL}\n[node.3]\nrole = malicious\npos = 5, 5\n[attack]\nkind = selective_forwarding\nattacker = 3\ndrop_ratio = 1.3\n"
        );
        let e = load_scenario(&text).unwrap_err();
        assert!(matches!(e, ScenarioError::Validation { .. }), "{e}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(err_text("[scenario]\nname = x\nbogus = 1\n").starts_with("line 3:"));
        assert!(err_text("name = x\n").starts_with("line 1:"));
        assert!(err_text("[scenario]\n\nno equals sign\n").starts_with("line 3:"));
        assert!(err_text("[weird]\n").contains("unknown section"));
        assert!(err_text("[scenario]\nseed = -1\n").starts_with("line 2:"));
        assert!(err_text("[scenario]\n[scenario]\n").contains("duplicate section"));
    }

    #[test]
    fn attacker_must_be_malicious() {
        let text = format!("{MINIMAL}\n[attack]\nkind = rank\nattacker = 2\n");
        assert!(err_text(&text).contains("not malicious"));
    }

    #[test]
    fn generated_topology_is_deterministic() {
        let a = generate_topology(7, 42, (100.0, 100.0), 50.0).unwrap();
        let b = generate_topology(7, 42, (100.0, 100.0), 50.0).unwrap();
        assert_eq!(a, b);
        let c = generate_topology(7, 43, (100.0, 100.0), 50.0).unwrap();
        assert_ne!(a, c);
        let small = generate_topology(2, 5, (10.0, 10.0), 50.0).unwrap();
        assert_eq!(small.len(), 2);
        assert!(matches!(
            generate_topology(11, 1, (1000.0, 1000.0), 1.0),
            Err(ScenarioError::GenerationFailed { .. })
        ));
    }

    #[test]
    fn generated_scenario_section() {
        let text = "[scenario]\nname = g\n[topology]\ngenerate = 11\nseed = 3\nmalicious = 2\n[attack]\nkind = stretch\nattacker = 2\n";
        let c = load_scenario(text).unwrap();
        assert_eq!(c.nodes.len(), 11);
        assert_eq!(c.nodes.iter().filter(|n| n.role == Role::Honest).count(), 9);
        assert_eq!(c.node(NodeId(2)).unwrap().role, Role::Malicious);
        assert!(c.topology().is_connected());
        assert_eq!(load_scenario(&serialize(&c)).unwrap(), c);
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            1u64..100_000_000,
            any::<u64>(),
            1.0f64..200.0,
            proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 0u8..3), 1..10),
            0u8..4,
            0.0f64..=1.0,
            prop_oneof![Just(None), (0.0f64..10_000.0).prop_map(Some)],
        )
            .prop_map(|(dur, seed, range, pts, kind, r, start)| {
                let mut c = ScenarioConfig {
                    duration: SimDuration(dur * 1000),
                    seed,
                    ..ScenarioConfig::default()
                };
                c.radio.range = range;
                c.nodes.push(NodeSpec {
                    id: NodeId(1),
                    role: Role::Server,
                    position: Position::new(50.0, 50.0),
                    power: PowerSource::Infinite,
                });
                for (i, (x, y, b)) in pts.into_iter().enumerate() {
                    let power = match b {
                        0 => PowerSource::Infinite,
                        1 => PowerSource::Battery("CR2032".parse().unwrap()),
                        _ => PowerSource::Battery("333.5".parse().unwrap()),
                    };
                    c.nodes.push(NodeSpec {
                        id: NodeId(i as u16 + 2),
                        role: Role::Honest,
                        position: Position::new(x, y),
                        power,
                    });
                }
                let last = c.nodes.last().unwrap().id;
                if kind > 0 && last != NodeId(1) {
                    c.nodes.last_mut().unwrap().role = Role::Malicious;
                    c.attack = AttackConfig {
                        kind: match kind {
                            1 => AttackKind::SelectiveForwarding { drop_ratio: r },
                            2 => AttackKind::Versioning {
                                inflate_interval: SimDuration::from_secs_f64(1.0 + r),
                            },
                            _ => AttackKind::Stretch { capture: r > 0.5 },
                        },
                        attacker: Some(last),
                        start_at: start.map_or(SimTime::NEVER, SimTime::from_secs_f64),
                    };
                }
                c
            })
    }

    proptest! {
        #[test]
        fn serialize_round_trips(c in arb_config()) {
            prop_assert!(c.validate().is_ok());
            let back = load_scenario(&serialize(&c)).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn loader_never_panics(s in "\\PC{0,200}") {
            let _ = load_scenario(&s);
        }
    }
}
