//! Malicious-node behaviors. Exactly one attack is active per run.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::radio::{FrameKind, Topology};
use crate::rpl::{Rank, MIN_HOP_RANK_INCREASE};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("drop ratio must lie in [0, 1], got {0}")]
    DropRatio(f64),
    #[error("{0} must be longer than zero")]
    ZeroInterval(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttackKind {
    None,
    HelloFlood { dis_interval: SimDuration },
    PacketFlood { data_interval: SimDuration, target: NodeId },
    SelectiveForwarding { drop_ratio: f64 },
    RankAttack,
    Versioning { inflate_interval: SimDuration },
    Stretch { capture: bool },
}

impl AttackKind {
    /// Short lowercase label used in file names and CSV rows.
    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::HelloFlood { .. } => "hello_flood",
            AttackKind::PacketFlood { .. } => "packet_flood",
            AttackKind::SelectiveForwarding { .. } => "selective_forwarding",
            AttackKind::RankAttack => "rank",
            AttackKind::Versioning { .. } => "versioning",
            AttackKind::Stretch { .. } => "stretch",
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        match *self {
            AttackKind::HelloFlood { dis_interval } if dis_interval.ticks() == 0 => {
                Err(AttackError::ZeroInterval("dis_interval"))
            }
            AttackKind::PacketFlood { data_interval, .. } if data_interval.ticks() == 0 => {
                Err(AttackError::ZeroInterval("data_interval"))
            }
            AttackKind::Versioning { inflate_interval } if inflate_interval.ticks() == 0 => {
                Err(AttackError::ZeroInterval("inflate_interval"))
            }
            AttackKind::SelectiveForwarding { drop_ratio } if !(0.0..=1.0).contains(&drop_ratio) => {
                Err(AttackError::DropRatio(drop_ratio))
            }
            _ => Ok(()),
        }
    }

    /// Kinds that need a periodic attacker timer, with its period.
    pub fn tick_interval(&self) -> Option<SimDuration> {
        match *self {
            AttackKind::HelloFlood { dis_interval } => Some(dis_interval),
            AttackKind::PacketFlood { data_interval, .. } => Some(data_interval),
            AttackKind::Versioning { inflate_interval } => Some(inflate_interval),
            _ => None,
        }
    }

    /// Whether the attacker lies about its rank in DIOs.
    pub fn advertises_false_rank(&self) -> bool {
        matches!(
            self,
            AttackKind::RankAttack | AttackKind::Stretch { capture: true }
        )
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub attacker: Option<NodeId>,
    /// `SimTime::NEVER` keeps the attacker dormant for the whole run.
    pub start_at: SimTime,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            attacker: None,
            start_at: SimTime::ZERO,
        }
    }
}

impl AttackConfig {
    pub fn is_active(&self, now: SimTime) -> bool {
        self.kind != AttackKind::None && self.attacker.is_some() && now >= self.start_at
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Forward,
    Drop,
}

/// Control traffic always passes; DATA is dropped with probability `r`.
/// Draws from `rng` only for DATA with `0 < r < 1`.
pub fn greyhole_filter<R: Rng + ?Sized>(kind: FrameKind, r: f64, rng: &mut R) -> Verdict {
    if kind != FrameKind::Data || r <= 0.0 {
        return Verdict::Forward;
    }
    if r >= 1.0 || rng.gen::<f64>() < r {
        Verdict::Drop
    } else {
        Verdict::Forward
    }
}

/// Rank the attacker claims: one rank level below the root.
pub fn rank_advertise(root_rank: Rank) -> Rank {
    Rank(root_rank.0.saturating_add(MIN_HOP_RANK_INCREASE))
}

pub fn version_inflate(highest_heard: u32) -> u32 {
    highest_heard.wrapping_add(1)
}

/// Longest simple path from `from` to `to`, by exhaustive search. Among equally
/// long paths the first found in ascending neighbor order wins.
pub fn longest_path(topo: &Topology, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
    fn dfs(
        topo: &Topology,
        at: NodeId,
        to: NodeId,
        path: &mut Vec<NodeId>,
        best: &mut Option<Vec<NodeId>>,
    ) {
        if at == to {
            if best.as_ref().is_none_or(|b| path.len() > b.len()) {
                *best = Some(path.clone());
            }
            return;
        }
        let Ok(neighbors) = topo.neighbors(at) else {
            return;
        };
        for &n in neighbors {
            if path.contains(&n) {
                continue;
            }
            path.push(n);
            dfs(topo, n, to, path, best);
            path.pop();
        }
    }

    topo.neighbors(from).ok()?;
    topo.neighbors(to).ok()?;
    let mut best = None;
    let mut path = vec![from];
    dfs(topo, from, to, &mut path, &mut best);
    best
}

/// Explicit route for a captured packet, or `None` when no path is longer than
/// `direct_hops` link hops.
pub fn stretch_route(
    topo: &Topology,
    attacker: NodeId,
    dst: NodeId,
    direct_hops: usize,
) -> Option<Vec<NodeId>> {
    let route = longest_path(topo, attacker, dst)?;
    (route.len() - 1 > direct_hops).then_some(route)
}

/// Hop count of a shortest path, by breadth-first search.
pub fn shortest_hops(topo: &Topology, from: NodeId, to: NodeId) -> Option<usize> {
    let mut seen = vec![from];
    let mut frontier = vec![from];
    let mut depth = 0;
    while !frontier.is_empty() {
        if frontier.contains(&to) {
            return Some(depth);
        }
        let mut next = Vec::new();
        for n in frontier {
            for &m in topo.neighbors(n).ok()? {
                if !seen.contains(&m) {
                    seen.push(m);
                    next.push(m);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{Position, RadioParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn line(n: u16) -> Topology {
        let nodes: Vec<_> = (1..=n)
            .map(|i| (NodeId(i), Position::new(i as f64 * 10.0, 0.0)))
            .collect();
        Topology::new(
            &nodes,
            RadioParams {
                range: 10.0,
                ..RadioParams::default()
            },
        )
    }

    #[test]
    fn greyhole_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(greyhole_filter(FrameKind::Data, 1.0, &mut rng), Verdict::Drop);
        assert_eq!(greyhole_filter(FrameKind::Data, 0.0, &mut rng), Verdict::Forward);
        for kind in [FrameKind::Dis, FrameKind::Dio, FrameKind::Dao] {
            assert_eq!(greyhole_filter(kind, 1.0, &mut rng), Verdict::Forward);
        }
    }

    #[test]
    fn greyhole_rate_matches_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let drops = (0..10_000)
            .filter(|_| greyhole_filter(FrameKind::Data, 0.25, &mut rng) == Verdict::Drop)
            .count();
        assert!((drops as f64 / 10_000.0 - 0.25).abs() < 0.02, "{drops}");
    }

    #[test]
    fn rank_and_version_lies() {
        assert_eq!(rank_advertise(Rank(256)), Rank(512));
        assert_eq!(version_inflate(4), 5);
    }

    #[test]
    fn line_has_one_route() {
        let t = line(4);
        let p = longest_path(&t, NodeId(1), NodeId(4)).unwrap();
        assert_eq!(p, vec![NodeId(1), NodeId(2), NodeId(3), NodeId(4)]);
        assert_eq!(stretch_route(&t, NodeId(1), NodeId(4), 3), None);
        assert_eq!(shortest_hops(&t, NodeId(1), NodeId(4)), Some(3));
    }

    #[test]
    fn ring_detour_visits_every_node() {
        // 2x3 grid: 1 2 3 / 4 5 6, spacing 10 m.
        let nodes: Vec<_> = (0..6u16)
            .map(|i| {
                (
                    NodeId(i + 1),
                    Position::new((i % 3) as f64 * 10.0, (i / 3) as f64 * 10.0),
                )
            })
            .collect();
        let t = Topology::new(&nodes, RadioParams { range: 10.0, ..RadioParams::default() });
        let r = stretch_route(&t, NodeId(2), NodeId(1), 1).unwrap();
        assert_eq!(r.len(), 6);
        assert_eq!(r.first(), Some(&NodeId(2)));
        assert_eq!(r.last(), Some(&NodeId(1)));
    }

    #[test]
    fn disconnected_has_no_path() {
        let nodes = [
            (NodeId(1), Position::new(0.0, 0.0)),
            (NodeId(2), Position::new(90.0, 0.0)),
        ];
        let t = Topology::new(&nodes, RadioParams::default());
        assert_eq!(longest_path(&t, NodeId(1), NodeId(2)), None);
        assert_eq!(shortest_hops(&t, NodeId(1), NodeId(2)), None);
    }

    #[test]
    fn validation() {
        assert!(AttackKind::SelectiveForwarding { drop_ratio: 1.3 }.validate().is_err());
        assert!(AttackKind::SelectiveForwarding { drop_ratio: 1.0 }.validate().is_ok());
        assert!(AttackKind::HelloFlood { dis_interval: SimDuration::ZERO }.validate().is_err());
    }

    proptest! {
        #[test]
        fn longest_path_is_loop_free_and_valid(
            pts in proptest::collection::vec((0.0f64..60.0, 0.0f64..60.0), 2..8),
        ) {
            let nodes: Vec<_> = pts.iter().enumerate()
                .map(|(i, (x, y))| (NodeId(i as u16 + 1), Position::new(*x, *y)))
                .collect();
            let t = Topology::new(&nodes, RadioParams { range: 30.0, ..RadioParams::default() });
            let last = NodeId(nodes.len() as u16);
            if let Some(p) = longest_path(&t, NodeId(1), last) {
                let uniq: BTreeSet<_> = p.iter().collect();
                prop_assert_eq!(uniq.len(), p.len());
                for w in p.windows(2) {
                    prop_assert!(t.in_range(w[0], w[1]));
                }
                let sh = shortest_hops(&t, NodeId(1), last).unwrap();
                prop_assert!(p.len() > sh);
            }
        }
    }
}
