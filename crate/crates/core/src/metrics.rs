//! Run metrics: per-node sample series, honest-node means, comparisons and
//! the CSV format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

use crate::energy::{CurrentProfile, EnergyTimers};
use crate::scenario::Role;
use crate::time::{SimDuration, SimTime, TICKS_PER_SEC};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run has no honest nodes")]
    NoHonestNodes,
    #[error("percent change undefined for a zero baseline")]
    ZeroBaseline,
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("runs are not comparable: {0}")]
    ScenarioMismatch(String),
    #[error("csv schema: {0}")]
    Schema(String),
    #[error("csv row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const CSV_COLUMNS: [&str; 17] = [
    "run_id",
    "scenario",
    "attack",
    "seed",
    "t_s",
    "node_id",
    "role",
    "t_cpu_us",
    "t_lpm_us",
    "t_tx_us",
    "t_rx_us",
    "energy_mj",
    "avg_power_mw",
    "soc_pct",
    "pkts_sent",
    "pkts_app_rx",
    "pkts_dropped",
];

/// Cumulative per-node counters at a sample point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NodeCounters {
    /// DATA packets this node originated.
    pub sent: u64,
    /// DATA packets delivered to this node's application.
    pub app_rx: u64,
    /// DATA packets dropped at this node, for any reason.
    pub dropped: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: SimTime,
    pub timers: EnergyTimers,
    pub energy_mj: f64,
    /// Percent; `None` for infinite-power nodes.
    pub soc_pct: Option<f64>,
    pub counters: NodeCounters,
}

impl Sample {
    pub fn avg_power_mw(&self) -> f64 {
        let secs = self.t.as_secs_f64();
        if secs > 0.0 {
            self.energy_mj / secs
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSeries {
    pub id: NodeId,
    pub role: Role,
    pub samples: Vec<Sample>,
}

impl NodeSeries {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Network-wide DATA accounting at run end.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PacketCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_medium: u64,
    pub dropped_attacker: u64,
    /// No route, hop limit, or the node carrying it died.
    pub dropped_noroute: u64,
    pub in_flight: u64,
}

impl PacketCounters {
    pub fn conserved(&self) -> bool {
        self.sent
            == self.delivered
                + self.dropped_medium
                + self.dropped_attacker
                + self.dropped_noroute
                + self.in_flight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryOutcome {
    pub capacity_mah: f64,
    pub consumed_pct: f64,
    pub empty_at: Option<SimTime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub run_id: String,
    pub scenario: String,
    pub attack: String,
    pub seed: u64,
    pub duration: SimDuration,
    pub nodes: Vec<NodeSeries>,
    pub packets: PacketCounters,
    /// Honest application packets only.
    pub sent_by_origin: BTreeMap<NodeId, u64>,
    pub delivered_by_origin: BTreeMap<NodeId, u64>,
    pub batteries: BTreeMap<NodeId, BatteryOutcome>,
    /// DATA frame transmissions over the whole run, all nodes.
    pub data_transmissions: u64,
    /// Largest number of parent changes any honest node went through.
    pub max_parent_changes: u64,
}

impl RunMetrics {
    pub fn new(scenario: &str, attack: &str, seed: u64) -> Self {
        RunMetrics {
            run_id: format!("{scenario}_{attack}_{seed}"),
            scenario: scenario.to_string(),
            attack: attack.to_string(),
            seed,
            duration: SimDuration::ZERO,
            nodes: Vec::new(),
            packets: PacketCounters::default(),
            sent_by_origin: BTreeMap::new(),
            delivered_by_origin: BTreeMap::new(),
            batteries: BTreeMap::new(),
            data_transmissions: 0,
            max_parent_changes: 0,
        }
    }

    pub fn honest(&self) -> impl Iterator<Item = &NodeSeries> {
        self.nodes.iter().filter(|n| n.role == Role::Honest)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSeries> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Total energy drawn by every node over the run, mJ.
    pub fn network_energy_mj(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| n.last())
            .map(|s| s.energy_mj)
            .sum()
    }

    pub fn empty_honest_nodes(&self) -> usize {
        self.batteries
            .values()
            .filter(|b| b.empty_at.is_some())
            .count()
    }

    /// Fraction of honest application packets that never reached the server.
    pub fn drop_fraction(&self) -> f64 {
        let sent: u64 = self.sent_by_origin.values().sum();
        let got: u64 = self.delivered_by_origin.values().sum();
        if sent == 0 {
            0.0
        } else {
            (sent - got.min(sent)) as f64 / sent as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Cpu,
    Lpm,
    Tx,
    Rx,
    Energy,
    Power,
    /// Consumed battery charge in percent.
    Consumed,
}

impl Metric {
    fn of(&self, s: &Sample) -> Option<f64> {
        Some(match self {
            Metric::Cpu => s.timers.t_cpu.as_secs_f64(),
            Metric::Lpm => s.timers.t_lpm.as_secs_f64(),
            Metric::Tx => s.timers.t_tx.as_secs_f64(),
            Metric::Rx => s.timers.t_rx.as_secs_f64(),
            Metric::Energy => s.energy_mj,
            Metric::Power => s.avg_power_mw(),
            Metric::Consumed => 100.0 - s.soc_pct?,
        })
    }
}

/// Per-sample mean over honest nodes. Nodes without a value for `metric`
/// (infinite power for `Consumed`) are skipped.
pub fn honest_mean(m: &RunMetrics, metric: Metric) -> Result<Vec<(SimTime, f64)>, MetricsError> {
    let honest: Vec<_> = m.honest().collect();
    if honest.is_empty() {
        return Err(MetricsError::NoHonestNodes);
    }
    let len = honest.iter().map(|n| n.samples.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let vals: Vec<f64> = honest.iter().filter_map(|n| metric.of(&n.samples[i])).collect();
        if vals.is_empty() {
            continue;
        }
        out.push((honest[0].samples[i].t, vals.iter().sum::<f64>() / vals.len() as f64));
    }
    Ok(out)
}

/// Honest mean at the last sample.
pub fn final_honest_mean(m: &RunMetrics, metric: Metric) -> Result<Option<f64>, MetricsError> {
    Ok(honest_mean(m, metric)?.last().map(|(_, v)| *v))
}

pub fn percent_increase(baseline: f64, attacked: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((attacked - baseline) / baseline * 100.0)
}

/// Expected network drop fraction when `k` of `n` equal-rate senders route
/// through a node dropping with ratio `r`.
pub fn expected_drop_fraction(k: u32, n: u32, r: f64) -> Result<f64, MetricsError> {
    if n == 0 || k > n || !(0.0..=1.0).contains(&r) {
        return Err(MetricsError::InvalidArgs(format!("k={k} n={n} r={r}")));
    }
    Ok(k as f64 * r / n as f64)
}

fn fmt_secs(t: SimTime) -> String {
    let (s, us) = (t.ticks() / TICKS_PER_SEC, t.ticks() % TICKS_PER_SEC);
    if us == 0 {
        s.to_string()
    } else {
        format!("{s}.{us:06}").trim_end_matches('0').to_string()
    }
}

/// Writes one row per (sample time, node id).
pub fn write_csv<W: Write>(m: &RunMetrics, out: W) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    let mut nodes: Vec<&NodeSeries> = m.nodes.iter().collect();
    nodes.sort_by_key(|n| n.id);
    let len = nodes.iter().map(|n| n.samples.len()).max().unwrap_or(0);
    let seed = m.seed.to_string();
    for i in 0..len {
        for n in &nodes {
            let Some(s) = n.samples.get(i) else { continue };
            w.write_record([
                m.run_id.as_str(),
                &m.scenario,
                &m.attack,
                &seed,
                &fmt_secs(s.t),
                &n.id.to_string(),
                n.role.as_str(),
                &s.timers.t_cpu.ticks().to_string(),
                &s.timers.t_lpm.ticks().to_string(),
                &s.timers.t_tx.ticks().to_string(),
                &s.timers.t_rx.ticks().to_string(),
                &s.energy_mj.to_string(),
                &format!("{:.6}", s.avg_power_mw()),
                &s.soc_pct.map(|p| p.to_string()).unwrap_or_default(),
                &s.counters.sent.to_string(),
                &s.counters.app_rx.to_string(),
                &s.counters.dropped.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_string(m: &RunMetrics) -> String {
    let mut buf = Vec::new();
    write_csv(m, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T, MetricsError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| MetricsError::Row {
        row,
        msg: format!("bad {} `{raw}`", CSV_COLUMNS[i]),
    })
}

/// Reads a file produced by [`write_csv`]. Only the per-node series and run
/// metadata are recovered.
pub fn read_csv<R: Read>(input: R) -> Result<RunMetrics, MetricsError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(MetricsError::Schema(format!(
            "expected columns {}, found {}",
            CSV_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut meta: Option<(String, String, String, u64)> = None;
    let mut series: BTreeMap<NodeId, NodeSeries> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let this = (
            rec[0].to_string(),
            rec[1].to_string(),
            rec[2].to_string(),
            field::<u64>(&rec, 3, row)?,
        );
        match &meta {
            None => meta = Some(this),
            Some(m) if *m != this => {
                return Err(MetricsError::Row {
                    row,
                    msg: "run metadata changes mid-file".into(),
                })
            }
            Some(_) => {}
        }
        let t_s: f64 = field(&rec, 4, row)?;
        if !(t_s.is_finite() && t_s >= 0.0) {
            return Err(MetricsError::Row {
                row,
                msg: format!("bad t_s `{t_s}`"),
            });
        }
        let id = NodeId(field(&rec, 5, row)?);
        let role = Role::parse(&rec[6]).ok_or_else(|| MetricsError::Row {
            row,
            msg: format!("bad role `{}`", &rec[6]),
        })?;
        let soc_pct = match &rec[13] {
            "" => None,
            _ => Some(field::<f64>(&rec, 13, row)?),
        };
        let sample = Sample {
            t: SimTime::from_secs_f64(t_s),
            timers: EnergyTimers {
                t_cpu: SimDuration(field(&rec, 7, row)?),
                t_lpm: SimDuration(field(&rec, 8, row)?),
                t_tx: SimDuration(field(&rec, 9, row)?),
                t_rx: SimDuration(field(&rec, 10, row)?),
            },
            energy_mj: field(&rec, 11, row)?,
            soc_pct,
            counters: NodeCounters {
                sent: field(&rec, 14, row)?,
                app_rx: field(&rec, 15, row)?,
                dropped: field(&rec, 16, row)?,
            },
        };
        let s = series.entry(id).or_insert_with(|| NodeSeries {
            id,
            role,
            samples: Vec::new(),
        });
        if s.role != role {
            return Err(MetricsError::Row {
                row,
                msg: format!("node {id} changes role"),
            });
        }
        if s.samples.last().is_some_and(|p| p.t >= sample.t) {
            return Err(MetricsError::Row {
                row,
                msg: format!("node {id} samples out of order"),
            });
        }
        s.samples.push(sample);
    }
    let (run_id, scenario, attack, seed) =
        meta.ok_or_else(|| MetricsError::Schema("no data rows".into()))?;
    let mut m = RunMetrics::new(&scenario, &attack, seed);
    m.run_id = run_id;
    m.nodes = series.into_values().collect();
    m.duration = m
        .nodes
        .iter()
        .filter_map(|n| n.last())
        .map(|s| SimDuration(s.t.ticks()))
        .max()
        .unwrap_or_default();
    let sent: Vec<_> = m
        .honest()
        .filter_map(|n| Some((n.id, n.last()?.counters.sent)))
        .collect();
    m.sent_by_origin.extend(sent);
    Ok(m)
}

/// Below this absolute percent change a row is "negligible".
pub const NEGLIGIBLE_PCT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub metric: &'static str,
    pub baseline: f64,
    pub attacked: f64,
    /// Percent increase, or decrease for LPM. `None` when the baseline is zero.
    pub change_pct: Option<f64>,
}

impl CompareRow {
    pub fn negligible(&self) -> bool {
        self.change_pct.is_some_and(|c| c.abs() < NEGLIGIBLE_PCT)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub scenario: String,
    pub baseline_attack: String,
    pub attack: String,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, metric: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn change(&self, metric: &str) -> Option<f64> {
        self.row(metric)?.change_pct
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(
            o,
            "{}: {} vs {} (honest-node mean at run end)",
            self.scenario, self.attack, self.baseline_attack
        );
        let _ = writeln!(
            o,
            "{:<16} {:>14} {:>14} {:>11}  note",
            "metric", "baseline", "attacked", "change"
        );
        for r in &self.rows {
            let change = match r.change_pct {
                Some(c) => format!("{c:.1}%"),
                None => "n/a".into(),
            };
            let note = if r.negligible() { "negligible" } else { "" };
            let _ = writeln!(
                o,
                "{:<16} {:>14.6} {:>14.6} {:>11}  {}",
                r.metric, r.baseline, r.attacked, change, note
            );
        }
        o
    }

    pub fn to_csv(&self) -> String {
        let mut o = String::from("metric,baseline,attacked,change_pct,negligible\n");
        for r in &self.rows {
            let _ = writeln!(
                o,
                "{},{:.6},{:.6},{},{}",
                r.metric,
                r.baseline,
                r.attacked,
                r.change_pct.map(|c| format!("{c:.1}")).unwrap_or_default(),
                r.negligible()
            );
        }
        o
    }
}

fn same_layout(a: &RunMetrics, b: &RunMetrics) -> Result<(), MetricsError> {
    if a.scenario != b.scenario {
        return Err(MetricsError::ScenarioMismatch(format!(
            "scenario `{}` vs `{}`",
            a.scenario, b.scenario
        )));
    }
    let layout = |m: &RunMetrics| m.nodes.iter().map(|n| (n.id, n.role)).collect::<Vec<_>>();
    if layout(a) != layout(b) {
        return Err(MetricsError::ScenarioMismatch("node sets differ".into()));
    }
    Ok(())
}

/// Honest-mean percent changes at run end: CPU, LPM (as a decrease), TX,
/// RX, mean power and consumed battery charge.
pub fn compare_report(baseline: &RunMetrics, attacked: &RunMetrics) -> Result<CompareReport, MetricsError> {
    same_layout(baseline, attacked)?;
    let mut rows = Vec::new();
    let metrics: [(&'static str, Metric, bool); 6] = [
        ("cpu_time", Metric::Cpu, false),
        ("lpm_time", Metric::Lpm, true),
        ("tx_time", Metric::Tx, false),
        ("rx_time", Metric::Rx, false),
        ("power", Metric::Power, false),
        ("battery", Metric::Consumed, false),
    ];
    for (name, metric, decrease) in metrics {
        let (Some(b), Some(a)) = (
            final_honest_mean(baseline, metric)?,
            final_honest_mean(attacked, metric)?,
        ) else {
            continue;
        };
        let change = percent_increase(b, a).ok().map(|c| if decrease { 0.0 - c } else { c });
        rows.push(CompareRow {
            metric: name,
            baseline: b,
            attacked: a,
            change_pct: change,
        });
    }
    Ok(CompareReport {
        scenario: baseline.scenario.clone(),
        baseline_attack: baseline.attack.clone(),
        attack: attacked.attack.clone(),
        rows,
    })
}

/// Energy implied by `timers` under `profile`, for building samples.
pub fn sample_from(
    t: SimTime,
    timers: EnergyTimers,
    profile: &CurrentProfile,
    soc_pct: Option<f64>,
    counters: NodeCounters,
) -> Sample {
    Sample {
        t,
        timers,
        energy_mj: profile.energy_mj(&timers),
        soc_pct,
        counters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn synthetic(attack: &str, tx_scale: u64) -> RunMetrics {
        let p = CurrentProfile::default();
        let mut m = RunMetrics::new("demo", attack, 1);
        for (id, role) in [(1u16, Role::Server), (2, Role::Honest), (3, Role::Malicious), (4, Role::Honest)] {
            let samples = (1..=3u64)
                .map(|k| {
                    let t = SimTime::from_secs(10 * k);
                    let timers = EnergyTimers {
                        t_cpu: SimDuration(1_000 * k * id as u64),
                        t_lpm: SimDuration(10_000_000 * k - 1_000 * k * id as u64),
                        t_tx: SimDuration(500 * k * id as u64 * tx_scale),
                        t_rx: SimDuration(700 * k),
                    };
                    let soc = (role == Role::Honest).then_some(100.0 - k as f64 * tx_scale as f64);
                    sample_from(t, timers, &p, soc, NodeCounters { sent: k, app_rx: 0, dropped: 0 })
                })
                .collect();
            m.nodes.push(NodeSeries { id: NodeId(id), role, samples });
        }
        m
    }

    #[test]
    fn percent_examples() {
        assert!((percent_increase(9.202, 44.726).unwrap() - 386.05).abs() < 0.05);
        assert_eq!(format!("{:.1}", percent_increase(9.202, 105.834).unwrap()), "1050.1");
        assert_eq!(percent_increase(3.5, 3.5).unwrap(), 0.0);
        assert!(matches!(percent_increase(0.0, 1.0), Err(MetricsError::ZeroBaseline)));
    }

    #[test]
    fn drop_fraction_oracle() {
        assert!((expected_drop_fraction(4, 5, 1.0).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(expected_drop_fraction(0, 5, 0.7).unwrap(), 0.0);
        assert!((expected_drop_fraction(2, 5, 0.5).unwrap() - 0.2).abs() < 1e-12);
        assert!(expected_drop_fraction(6, 5, 0.5).is_err());
        assert!(expected_drop_fraction(1, 0, 0.5).is_err());
        assert!(expected_drop_fraction(1, 2, 1.5).is_err());
    }

    #[test]
    fn honest_mean_excludes_server_and_attacker() {
        let m = synthetic("none", 1);
        let tx = honest_mean(&m, Metric::Tx).unwrap();
        assert_eq!(tx.len(), 3);
        // nodes 2 and 4 at k=3: 3000 and 6000 us
        assert!((tx[2].1 - 0.0045).abs() < 1e-12);
        let mut lonely = m.clone();
        lonely.nodes.retain(|n| n.role != Role::Honest);
        assert!(matches!(honest_mean(&lonely, Metric::Tx), Err(MetricsError::NoHonestNodes)));
    }

    #[test]
    fn honest_mean_of_equal_nodes_is_any_node() {
        let mut m = synthetic("none", 1);
        let copy = m.nodes[1].samples.clone();
        m.nodes[3].samples = copy.clone();
        let mean = honest_mean(&m, Metric::Energy).unwrap();
        for (i, (_, v)) in mean.iter().enumerate() {
            assert!((v - copy[i].energy_mj).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_and_shape() {
        let m = synthetic("none", 1);
        let text = write_csv_string(&m);
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 1 + 4 * 3);
        let first = text.lines().nth(1).unwrap();
        assert!(first.starts_with("demo_none_1,demo,none,1,10,1,server,"));
        assert!(first.contains(",,"), "server soc must be empty: {first}");
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.nodes.len(), 4);
        assert_eq!(write_csv_string(&back), text);
    }

    #[test]
    fn csv_rejects_foreign_schema() {
        assert!(matches!(read_csv("a,b\n1,2\n".as_bytes()), Err(MetricsError::Schema(_))));
        let m = synthetic("none", 1);
        let broken = write_csv_string(&m).replacen(",server,", ",king,", 1);
        assert!(matches!(read_csv(broken.as_bytes()), Err(MetricsError::Row { row: 2, .. })));
    }

    #[test]
    fn compare_identity_is_all_zero() {
        let m = synthetic("none", 1);
        let r = compare_report(&m, &m).unwrap();
        assert_eq!(r.rows.len(), 6);
        for row in &r.rows {
            assert_eq!(row.change_pct, Some(0.0), "{}", row.metric);
            assert!(row.negligible());
        }
        assert!(r.to_text().contains("negligible"));
    }

    #[test]
    fn compare_reports_increases() {
        let b = synthetic("none", 1);
        let a = synthetic("flood", 3);
        let r = compare_report(&b, &a).unwrap();
        assert!((r.change("tx_time").unwrap() - 200.0).abs() < 1e-9);
        assert_eq!(r.change("cpu_time"), Some(0.0));
        assert!(!r.row("tx_time").unwrap().negligible());
        assert!(r.to_csv().starts_with("metric,baseline"));
    }

    #[test]
    fn compare_detects_mismatch() {
        let b = synthetic("none", 1);
        let mut other = synthetic("none", 1);
        other.scenario = "other".into();
        assert!(matches!(compare_report(&b, &other), Err(MetricsError::ScenarioMismatch(_))));
        let mut fewer = synthetic("none", 1);
        fewer.nodes.pop();
        assert!(matches!(compare_report(&b, &fewer), Err(MetricsError::ScenarioMismatch(_))));
    }

    proptest! {
        #[test]
        fn percent_increase_inverts(x in 1e-6f64..1e6, p in -100.0f64..5000.0) {
            let got = percent_increase(x, x * (1.0 + p / 100.0)).unwrap();
            prop_assert!((got - p).abs() < 1e-6 * (1.0 + p.abs()));
        }

        #[test]
        fn drop_fraction_is_linear(k in 0u32..20, extra in 0u32..20, r in 0.0f64..=1.0) {
            let n = k + extra + 1;
            let f = expected_drop_fraction(k, n, r).unwrap();
            let half = expected_drop_fraction(k, n, r / 2.0).unwrap();
            prop_assert!((f - 2.0 * half).abs() < 1e-12);
            if k > 0 {
                let one = expected_drop_fraction(1, n, r).unwrap();
                prop_assert!((f - k as f64 * one).abs() < 1e-12);
            }
        }

        #[test]
        fn honest_mean_commutes_with_truncation(cut in 1usize..3) {
            let m = synthetic("none", 2);
            let full = honest_mean(&m, Metric::Rx).unwrap();
            let mut short = m.clone();
            for n in &mut short.nodes { n.samples.truncate(cut); }
            let pre = honest_mean(&short, Metric::Rx).unwrap();
            prop_assert_eq!(&full[..cut], &pre[..]);
        }
    }
}
