use std::fmt;

use thiserror::Error;

/// Rank units added per hop by the fixed-metric objective function.
pub const MIN_HOP_RANK_INCREASE: u16 = 256;
pub const ROOT_RANK: Rank = Rank(MIN_HOP_RANK_INCREASE);
pub const INFINITE_RANK: Rank = Rank(0xffff);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parent advertises infinite rank")]
pub struct InfiniteParent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank(pub u16);

impl Rank {
    pub fn is_infinite(self) -> bool {
        self >= INFINITE_RANK
    }

    /// Hop distance from the root implied by this rank (root = 0).
    pub fn depth(self) -> u16 {
        self.0 / MIN_HOP_RANK_INCREASE - 1
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Rank a node obtains through a parent advertising `parent_rank`.
pub fn compute_rank(parent_rank: Rank) -> Result<Rank, InfiniteParent> {
    if parent_rank.is_infinite() {
        return Err(InfiniteParent);
    }
    Ok(Rank(parent_rank.0.saturating_add(MIN_HOP_RANK_INCREASE)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hop_per_increase() {
        assert_eq!(compute_rank(Rank(256)), Ok(Rank(512)));
        assert_eq!(compute_rank(Rank(512)), Ok(Rank(768)));
        assert_eq!(compute_rank(INFINITE_RANK), Err(InfiniteParent));
    }

    #[test]
    fn saturates_instead_of_wrapping() {
        assert_eq!(compute_rank(Rank(65_400)), Ok(INFINITE_RANK));
    }

    #[test]
    fn depth_of_root_is_zero() {
        assert_eq!(ROOT_RANK.depth(), 0);
        assert_eq!(Rank(768).depth(), 2);
    }
}
