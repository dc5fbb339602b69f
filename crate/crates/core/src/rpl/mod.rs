//! RPL: rank arithmetic, trickle timer and the per-node DODAG state machine.

mod node;
mod rank;
mod trickle;

pub use node::{DropReason, Forwarding, RplAction, RplNode, HOP_LIMIT};
pub use rank::{compute_rank, InfiniteParent, Rank, INFINITE_RANK, MIN_HOP_RANK_INCREASE, ROOT_RANK};
pub use trickle::{Fired, Trickle, TrickleConfig};
