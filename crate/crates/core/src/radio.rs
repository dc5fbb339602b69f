//! Shared wireless medium: unit-disk connectivity, frame airtime and delivery.
//!
//! The medium is ideal. There are no collisions, no loss and no capture
//! effect, so every in-range alive receiver gets every frame addressed to it.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::time::{SimDuration, SimTime, TICKS_PER_SEC};
use crate::NodeId;

/// 802.15.4 PSDU limit.
pub const MAX_FRAME_SIZE: u16 = 127;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("frame size {0} B is outside 1..=127")]
    FrameTooLarge(u16),
    #[error("node {0} has an empty battery and cannot transmit")]
    DeadTransmitter(NodeId),
    #[error("{kind:?} frames cannot be sent to the broadcast address")]
    BroadcastNotAllowed { kind: FrameKind },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadioParams {
    /// bits per second
    pub bitrate: u64,
    /// unit-disk radius in meters
    pub range: f64,
    /// preamble + SFD + length byte
    pub phy_overhead: u16,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            bitrate: 250_000,
            range: 50.0,
            phy_overhead: 6,
        }
    }
}

/// Time on air for a frame of `size` bytes, rounded up to whole ticks.
pub fn airtime(size: u16, params: &RadioParams) -> Result<SimDuration, RadioError> {
    if size == 0 || size > MAX_FRAME_SIZE {
        return Err(RadioError::FrameTooLarge(size));
    }
    let bits = (size as u64 + params.phy_overhead as u64) * 8;
    let ticks = (bits * TICKS_PER_SEC).div_ceil(params.bitrate);
    Ok(SimDuration(ticks))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Dis,
    Dio,
    Dao,
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dest {
    Broadcast,
    Node(NodeId),
}

/// RPL control fields carried by DIS/DIO/DAO frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlInfo {
    pub rank: u16,
    pub version: u32,
    pub dodag_id: NodeId,
    /// DAO only: the destination whose downward route is being advertised.
    pub dao_target: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataInfo {
    /// Network-wide packet id, assigned at origination.
    pub packet: u64,
    pub origin: NodeId,
    pub final_dst: NodeId,
    pub hops: u8,
    /// Explicit route from the rewriting node to `final_dst`, inclusive of both ends.
    pub hop_route: Option<Vec<NodeId>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Control(ControlInfo),
    Data(DataInfo),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: Dest,
    pub size: u16,
    pub payload: Payload,
}

impl Frame {
    pub fn data(&self) -> Option<&DataInfo> {
        match &self.payload {
            Payload::Data(d) => Some(d),
            Payload::Control(_) => None,
        }
    }

    pub fn control(&self) -> Option<&ControlInfo> {
        match &self.payload {
            Payload::Control(c) => Some(c),
            Payload::Data(_) => None,
        }
    }
}

/// Fixed node placement plus precomputed unit-disk neighbor sets.
#[derive(Clone, Debug)]
pub struct Topology {
    ids: Vec<NodeId>,
    positions: Vec<Position>,
    params: RadioParams,
    neighbors: Vec<BTreeSet<NodeId>>,
}

impl Topology {
    pub fn new(nodes: &[(NodeId, Position)], params: RadioParams) -> Self {
        let mut sorted: Vec<(NodeId, Position)> = nodes.to_vec();
        sorted.sort_by_key(|(id, _)| *id);
        let ids: Vec<NodeId> = sorted.iter().map(|(id, _)| *id).collect();
        let positions: Vec<Position> = sorted.iter().map(|(_, p)| *p).collect();
        let neighbors = (0..ids.len())
            .map(|i| {
                (0..ids.len())
                    .filter(|&j| j != i && positions[i].distance(&positions[j]) <= params.range)
                    .map(|j| ids[j])
                    .collect()
            })
            .collect();
        Topology {
            ids,
            positions,
            params,
            neighbors,
        }
    }

    fn index(&self, n: NodeId) -> Result<usize, RadioError> {
        self.ids
            .binary_search(&n)
            .map_err(|_| RadioError::UnknownNode(n))
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn params(&self) -> &RadioParams {
        &self.params
    }

    pub fn position(&self, n: NodeId) -> Result<Position, RadioError> {
        Ok(self.positions[self.index(n)?])
    }

    pub fn neighbors(&self, n: NodeId) -> Result<&BTreeSet<NodeId>, RadioError> {
        Ok(&self.neighbors[self.index(n)?])
    }

    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors(a).map(|s| s.contains(&b)).unwrap_or(false)
    }

    /// True when every node can reach every other over neighbor links.
    pub fn is_connected(&self) -> bool {
        if self.ids.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.ids.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for n in &self.neighbors[i] {
                let j = self.index(*n).expect("neighbor is a node");
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// One scheduled reception.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub to: NodeId,
    pub at: SimTime,
}

/// Result of putting a frame on the air.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub airtime: SimDuration,
    pub deliveries: Vec<Delivery>,
    /// Unicast whose addressee is out of range or dead.
    pub dropped: bool,
}

/// Computes who hears a frame sent at `at`. `alive` reports battery state.
/// Energy accrual is the caller's job: the sender pays `airtime` of TX and
/// each delivery's receiver pays `airtime` of RX.
pub fn transmit(
    topo: &Topology,
    frame: &Frame,
    at: SimTime,
    alive: impl Fn(NodeId) -> bool,
) -> Result<Transmission, RadioError> {
    let neighbors = topo.neighbors(frame.src)?;
    if !alive(frame.src) {
        return Err(RadioError::DeadTransmitter(frame.src));
    }
    let air = airtime(frame.size, &topo.params)?;
    let arrive = at + air;
    match frame.dst {
        Dest::Broadcast => {
            if matches!(frame.kind, FrameKind::Dao | FrameKind::Data) {
                return Err(RadioError::BroadcastNotAllowed { kind: frame.kind });
            }
            let deliveries = neighbors
                .iter()
                .filter(|n| alive(**n))
                .map(|n| Delivery { to: *n, at: arrive })
                .collect();
            Ok(Transmission {
                airtime: air,
                deliveries,
                dropped: false,
            })
        }
        Dest::Node(to) => {
            if neighbors.contains(&to) && alive(to) {
                Ok(Transmission {
                    airtime: air,
                    deliveries: vec![Delivery { to, at: arrive }],
                    dropped: false,
                })
            } else {
                Ok(Transmission {
                    airtime: air,
                    deliveries: Vec::new(),
                    dropped: true,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(kind: FrameKind, src: u16, dst: Dest, size: u16) -> Frame {
        Frame {
            kind,
            src: NodeId(src),
            dst,
            size,
            payload: Payload::Control(ControlInfo {
                rank: 256,
                version: 1,
                dodag_id: NodeId(1),
                dao_target: None,
            }),
        }
    }

    fn pair(d: f64) -> Topology {
        Topology::new(
            &[
                (NodeId(1), Position::new(0.0, 0.0)),
                (NodeId(2), Position::new(d, 0.0)),
            ],
            RadioParams::default(),
        )
    }

    #[test]
    fn neighbors_within_range_are_mutual() {
        let t = pair(10.0);
        assert!(t.neighbors(NodeId(1)).unwrap().contains(&NodeId(2)));
        assert!(t.neighbors(NodeId(2)).unwrap().contains(&NodeId(1)));
    }

    #[test]
    fn just_beyond_range_is_not_a_neighbor() {
        let t = pair(50.001);
        assert!(t.neighbors(NodeId(1)).unwrap().is_empty());
        assert!(t.neighbors(NodeId(2)).unwrap().is_empty());
        assert!(!t.is_connected());
    }

    #[test]
    fn unknown_node_is_an_error() {
        let t = pair(10.0);
        assert_eq!(
            t.neighbors(NodeId(7)).unwrap_err(),
            RadioError::UnknownNode(NodeId(7))
        );
    }

    #[test]
    fn airtime_hand_values() {
        let p = RadioParams::default();
        // 133 B * 8 / 250 kbit/s = 4.256 ms
        assert_eq!(airtime(127, &p).unwrap().ticks(), 4_256);
        // 36 B and 66 B on air
        assert_eq!(airtime(30, &p).unwrap().ticks(), 1_152);
        assert_eq!(airtime(60, &p).unwrap().ticks(), 2_112);
        assert_eq!(airtime(0, &p), Err(RadioError::FrameTooLarge(0)));
        assert_eq!(airtime(128, &p), Err(RadioError::FrameTooLarge(128)));
    }

    #[test]
    fn airtime_rounds_up() {
        let p = RadioParams {
            bitrate: 3,
            range: 1.0,
            phy_overhead: 0,
        };
        // 8 bits at 3 bit/s = 2.666..s
        assert_eq!(airtime(1, &p).unwrap().ticks(), 2_666_667);
    }

    #[test]
    fn broadcast_fans_out_to_alive_neighbors() {
        let mut nodes = vec![(NodeId(3), Position::new(50.0, 50.0))];
        for (i, (x, y)) in [(60.0, 50.0), (40.0, 50.0), (50.0, 60.0), (50.0, 40.0)]
            .iter()
            .enumerate()
        {
            nodes.push((NodeId(10 + i as u16), Position::new(*x, *y)));
        }
        let t = Topology::new(&nodes, RadioParams::default());
        let f = frame(FrameKind::Dis, 3, Dest::Broadcast, 39);
        let tx = transmit(&t, &f, SimTime(100), |_| true).unwrap();
        assert_eq!(tx.deliveries.len(), 4);
        assert!(tx.deliveries.iter().all(|d| d.at == SimTime(100) + tx.airtime));
        let tx = transmit(&t, &f, SimTime(100), |n| n != NodeId(11)).unwrap();
        assert_eq!(tx.deliveries.len(), 3);
    }

    #[test]
    fn unicast_out_of_range_is_dropped() {
        let t = pair(80.0);
        let f = frame(FrameKind::Data, 1, Dest::Node(NodeId(2)), 110);
        let tx = transmit(&t, &f, SimTime(0), |_| true).unwrap();
        assert!(tx.deliveries.is_empty());
        assert!(tx.dropped);
    }

    #[test]
    fn dead_sender_cannot_transmit() {
        let t = pair(10.0);
        let f = frame(FrameKind::Dio, 1, Dest::Broadcast, 97);
        assert_eq!(
            transmit(&t, &f, SimTime(0), |n| n != NodeId(1)).unwrap_err(),
            RadioError::DeadTransmitter(NodeId(1))
        );
    }

    #[test]
    fn data_cannot_be_broadcast() {
        let t = pair(10.0);
        let f = frame(FrameKind::Data, 1, Dest::Broadcast, 97);
        assert!(matches!(
            transmit(&t, &f, SimTime(0), |_| true),
            Err(RadioError::BroadcastNotAllowed { .. })
        ));
    }
}
