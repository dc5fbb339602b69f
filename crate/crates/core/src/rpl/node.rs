//! Per-node RPL state machine (single DODAG, storing mode, fixed-metric OF).

use std::collections::BTreeMap;

use rand::Rng;

use super::rank::{compute_rank, Rank, INFINITE_RANK, ROOT_RANK};
use super::trickle::{Trickle, TrickleConfig};
use crate::radio::{ControlInfo, DataInfo};
use crate::time::SimTime;
use crate::NodeId;

/// Packets are dropped after this many link hops.
pub const HOP_LIMIT: u8 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    NoRoute,
    HopLimit,
}

/// Side effects requested by the state machine. The owner performs them in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RplAction {
    /// Re-arm the trickle wake-up at this instant (replacing any pending one).
    ScheduleTrickle(SimTime),
    /// Cancel the pending trickle wake-up.
    StopTrickle,
    /// Emit a DIO now.
    SendDio,
    /// Unicast a DAO advertising `target` to `to`.
    SendDao { to: NodeId, target: NodeId },
    ParentChanged {
        old: Option<NodeId>,
        new: Option<NodeId>,
    },
    /// This node dropped its DODAG state for a newer version.
    GlobalRepair { version: u32 },
}

/// Where a DATA packet goes next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Forwarding {
    Deliver,
    Forward(NodeId),
    Drop(DropReason),
}

#[derive(Clone, Debug)]
pub struct RplNode {
    pub id: NodeId,
    is_root: bool,
    rank: Rank,
    version: u32,
    dodag_id: NodeId,
    joined: bool,
    preferred_parent: Option<NodeId>,
    parent_set: BTreeMap<NodeId, Rank>,
    routing_table: BTreeMap<NodeId, NodeId>,
    trickle: Trickle,
    parent_changes: u64,
    repairs: u64,
    highest_version_heard: u32,
}

impl RplNode {
    pub fn new_root(id: NodeId, cfg: TrickleConfig) -> Self {
        RplNode {
            id,
            is_root: true,
            rank: ROOT_RANK,
            version: 1,
            dodag_id: id,
            joined: true,
            preferred_parent: None,
            parent_set: BTreeMap::new(),
            routing_table: BTreeMap::new(),
            trickle: Trickle::new(cfg),
            parent_changes: 0,
            repairs: 0,
            highest_version_heard: 1,
        }
    }

    pub fn new(id: NodeId, cfg: TrickleConfig) -> Self {
        RplNode {
            is_root: false,
            rank: INFINITE_RANK,
            version: 0,
            dodag_id: id,
            joined: false,
            highest_version_heard: 0,
            ..Self::new_root(id, cfg)
        }
    }

    pub fn is_root(&self) -> bool {
        self.is_root
    }
    pub fn rank(&self) -> Rank {
        self.rank
    }
    pub fn version(&self) -> u32 {
        self.version
    }
    pub fn dodag_id(&self) -> NodeId {
        self.dodag_id
    }
    pub fn joined(&self) -> bool {
        self.joined
    }
    pub fn preferred_parent(&self) -> Option<NodeId> {
        self.preferred_parent
    }
    pub fn parent_set(&self) -> &BTreeMap<NodeId, Rank> {
        &self.parent_set
    }
    pub fn routing_table(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.routing_table
    }
    pub fn trickle(&self) -> &Trickle {
        &self.trickle
    }
    pub fn parent_changes(&self) -> u64 {
        self.parent_changes
    }
    pub fn repairs(&self) -> u64 {
        self.repairs
    }
    pub fn highest_version_heard(&self) -> u32 {
        self.highest_version_heard
    }

    /// Fields this node puts in its own DIOs.
    pub fn dio_info(&self) -> ControlInfo {
        ControlInfo {
            rank: self.rank.0,
            version: self.version,
            dodag_id: self.dodag_id,
            dao_target: None,
        }
    }

    /// Boot: the root starts advertising, other nodes wait for a DIO.
    pub fn start<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Vec<RplAction> {
        if self.is_root {
            vec![RplAction::ScheduleTrickle(self.trickle.start(now, rng))]
        } else {
            Vec::new()
        }
    }

    fn reset_trickle<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R, out: &mut Vec<RplAction>) {
        if let Some(at) = self.trickle.reset(now, rng) {
            out.push(RplAction::ScheduleTrickle(at));
        }
    }

    pub fn on_dis<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Vec<RplAction> {
        let mut out = Vec::new();
        if self.joined {
            self.reset_trickle(now, rng, &mut out);
        }
        out
    }

    pub fn on_dio<R: Rng + ?Sized>(
        &mut self,
        from: NodeId,
        dio: &ControlInfo,
        now: SimTime,
        rng: &mut R,
    ) -> Vec<RplAction> {
        let mut out = Vec::new();
        self.highest_version_heard = self.highest_version_heard.max(dio.version);

        if self.is_root {
            if dio.version > self.version {
                // Only the root may advance the version; it re-asserts itself above
                // whatever it heard and starts a network-wide repair of its own.
                self.version = dio.version + 1;
                self.highest_version_heard = self.version;
                self.routing_table.clear();
                self.repairs += 1;
                out.push(RplAction::GlobalRepair {
                    version: self.version,
                });
                self.reset_trickle(now, rng, &mut out);
            } else if dio.version < self.version {
                self.reset_trickle(now, rng, &mut out);
            } else {
                self.trickle.hear_consistent();
            }
            return out;
        }

        if self.joined && dio.version < self.version {
            // Stale sender: advertise sooner so it can catch up.
            self.reset_trickle(now, rng, &mut out);
            return out;
        }
        if !self.joined && dio.version < self.version {
            return out;
        }

        let was_joined = self.joined;
        let mut version_changed = false;
        if dio.version > self.version {
            if was_joined {
                self.repairs += 1;
                out.push(RplAction::GlobalRepair {
                    version: dio.version,
                });
            }
            self.version = dio.version;
            self.dodag_id = dio.dodag_id;
            self.parent_set.clear();
            self.routing_table.clear();
            self.rank = INFINITE_RANK;
            version_changed = true;
        }

        let advertised = Rank(dio.rank);
        if advertised.is_infinite() {
            self.parent_set.remove(&from);
        } else {
            self.parent_set.insert(from, advertised);
        }

        let old_parent = self.preferred_parent;
        let old_rank = self.rank;
        self.select_parent();

        if self.preferred_parent != old_parent {
            self.parent_changes += 1;
            out.push(RplAction::ParentChanged {
                old: old_parent,
                new: self.preferred_parent,
            });
        }

        match self.preferred_parent {
            None => {
                if was_joined {
                    self.joined = false;
                    self.trickle.stop();
                    out.push(RplAction::StopTrickle);
                }
            }
            Some(parent) => {
                self.joined = true;
                if self.preferred_parent != old_parent || version_changed {
                    out.push(RplAction::SendDao {
                        to: parent,
                        target: self.id,
                    });
                    for target in self.routing_table.keys() {
                        out.push(RplAction::SendDao {
                            to: parent,
                            target: *target,
                        });
                    }
                }
                let inconsistent =
                    version_changed || self.preferred_parent != old_parent || self.rank != old_rank;
                if !self.trickle.is_running() {
                    out.push(RplAction::ScheduleTrickle(self.trickle.start(now, rng)));
                } else if inconsistent {
                    self.reset_trickle(now, rng, &mut out);
                } else {
                    self.trickle.hear_consistent();
                }
            }
        }
        out
    }

    /// Lowest resulting rank wins; ties go to the lowest node id.
    fn select_parent(&mut self) {
        let best = self
            .parent_set
            .iter()
            .filter_map(|(id, r)| compute_rank(*r).ok().map(|cr| (cr, *id)))
            .min();
        match best {
            Some((rank, id)) if !rank.is_infinite() => {
                self.preferred_parent = Some(id);
                self.rank = rank;
            }
            _ => {
                self.preferred_parent = None;
                self.rank = INFINITE_RANK;
            }
        }
    }

    pub fn on_dao(&mut self, from: NodeId, target: NodeId) -> Vec<RplAction> {
        if target == self.id {
            return Vec::new();
        }
        let changed = self.routing_table.insert(target, from) != Some(from);
        match (self.is_root, self.preferred_parent, changed) {
            (false, Some(parent), true) => vec![RplAction::SendDao { to: parent, target }],
            _ => Vec::new(),
        }
    }

    pub fn on_trickle_fire<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Vec<RplAction> {
        if !self.trickle.is_running() || self.trickle.next_fire() != now {
            return Vec::new();
        }
        let fired = self.trickle.fire(now, rng);
        let mut out = Vec::new();
        if fired.transmit && self.joined {
            out.push(RplAction::SendDio);
        }
        out.push(RplAction::ScheduleTrickle(fired.next));
        out
    }

    /// Silences the node for good.
    pub fn halt(&mut self) {
        self.trickle.stop();
    }

    /// Routes an upward or downward DATA packet.
    pub fn forward_data(&self, data: &DataInfo) -> Forwarding {
        if data.final_dst == self.id {
            return Forwarding::Deliver;
        }
        if data.hops >= HOP_LIMIT {
            return Forwarding::Drop(DropReason::HopLimit);
        }
        if let Some(route) = &data.hop_route {
            if let Some(i) = route.iter().position(|n| *n == self.id) {
                if let Some(next) = route.get(i + 1) {
                    return Forwarding::Forward(*next);
                }
            }
        }
        if let Some(next) = self.routing_table.get(&data.final_dst) {
            return Forwarding::Forward(*next);
        }
        match self.preferred_parent {
            Some(p) => Forwarding::Forward(p),
            None => Forwarding::Drop(DropReason::NoRoute),
        }
    }
}
