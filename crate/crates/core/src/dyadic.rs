//! Combinatorics of the rooted dyadic grid on `[0,1)`.
//!
//! An interval is identified by `(level, index)` and stands for
//! `[index * 2^-level, (index+1) * 2^-level)`. The root is `(0, 0)`. Indices
//! live in `u128`; positions that would not fit report an overflow error
//! instead of wrapping.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    level: u32,
    index: u128,
}

impl fmt::Debug for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, self.index)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl DyadicInterval {
    pub const ROOT: DyadicInterval = DyadicInterval { level: 0, index: 0 };

    pub fn new(level: u32, index: u128) -> Result<Self> {
        if level < 128 && index >= (1u128 << level) {
            return Err(Error::BadIntervalLiteral(format!("{level}:{index}")));
        }
        Ok(DyadicInterval { level, index })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> u128 {
        self.index
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    pub fn parent(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::RootBoundary("parent"));
        }
        Ok(DyadicInterval { level: self.level - 1, index: self.index >> 1 })
    }

    pub fn sibling(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::RootBoundary("sibling"));
        }
        Ok(DyadicInterval { level: self.level, index: self.index ^ 1 })
    }

    /// True for the left child of its parent.
    pub fn is_left_child(&self) -> bool {
        self.level > 0 && self.index & 1 == 0
    }

    pub fn children(&self) -> Result<(Self, Self)> {
        let idx = self.index.checked_mul(2).ok_or(Error::IndexOverflow)?;
        let level = self.level + 1;
        Ok((
            DyadicInterval { level, index: idx },
            DyadicInterval { level, index: idx + 1 },
        ))
    }

    pub fn left_child(&self) -> Result<Self> {
        Ok(self.children()?.0)
    }

    pub fn right_child(&self) -> Result<Self> {
        Ok(self.children()?.1)
    }

    /// `I^(j)`: the ancestor `j` generations up; `ancestor(0)` is `I` itself.
    pub fn ancestor(&self, j: u32) -> Result<Self> {
        if j > self.level {
            return Err(Error::AncestorOutOfRange { requested: j, level: self.level });
        }
        Ok(DyadicInterval { level: self.level - j, index: shr128(self.index, j) })
    }

    /// The `m`-th descendant at depth `s` below `self`, in left-to-right order.
    pub fn descendant(&self, s: u32, m: u128) -> Result<Self> {
        if s < 128 && m >= (1u128 << s) {
            return Err(Error::BadIntervalLiteral(format!("offset {m} at depth {s}")));
        }
        if s >= 128 && self.index != 0 {
            return Err(Error::IndexOverflow);
        }
        let base = if s >= 128 {
            0
        } else {
            self.index.checked_shl(s).ok_or(Error::IndexOverflow)?
        };
        if s < 128 && self.index != 0 && (base >> s) != self.index {
            return Err(Error::IndexOverflow);
        }
        let index = base.checked_add(m).ok_or(Error::IndexOverflow)?;
        Ok(DyadicInterval { level: self.level + s, index })
    }

    /// All of `D_j(self)`, ordered left to right.
    pub fn descendants_at(&self, j: u32) -> Result<Vec<Self>> {
        if j >= 40 {
            return Err(Error::BadParameter(format!(
                "descendant depth {j} too large to enumerate"
            )));
        }
        (0..(1u128 << j)).map(|m| self.descendant(j, m)).collect()
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.level >= self.level && shr128(other.index, other.level - self.level) == self.index
    }

    pub fn is_disjoint_from(&self, other: &DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    pub fn lca(&self, other: &DyadicInterval) -> DyadicInterval {
        let mut a = *self;
        let mut b = *other;
        if a.level > b.level {
            a = a.ancestor(a.level - b.level).expect("level aligned");
        } else if b.level > a.level {
            b = b.ancestor(b.level - a.level).expect("level aligned");
        }
        while a.index != b.index {
            a = DyadicInterval { level: a.level - 1, index: a.index >> 1 };
            b = DyadicInterval { level: b.level - 1, index: b.index >> 1 };
        }
        a
    }

    /// Order of the left endpoints. Equal endpoints mean one interval is a
    /// leftmost descendant of the other.
    pub fn cmp_position(&self, other: &DyadicInterval) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        if self.level >= other.level {
            let shift = self.level - other.level;
            let prefix = shr128(self.index, shift);
            match prefix.cmp(&other.index) {
                Ordering::Equal => {
                    let rem = if shift >= 128 { self.index } else { self.index - (prefix << shift) };
                    if rem == 0 {
                        Ordering::Equal
                    } else {
                        Ordering::Greater
                    }
                }
                ord => ord,
            }
        } else {
            other.cmp_position(self).reverse()
        }
    }
}

fn shr128(x: u128, by: u32) -> u128 {
    if by >= 128 {
        0
    } else {
        x >> by
    }
}

/// `dist(I, J) = s + t` minimized over common ancestors `I^(s) = J^(t)`;
/// in a rooted grid the minimum is attained at the least common ancestor.
pub fn dyadic_distance(a: &DyadicInterval, b: &DyadicInterval) -> u32 {
    let l = a.lca(b);
    (a.level - l.level) + (b.level - l.level)
}

#[derive(Clone, Debug)]
pub struct NeighborSet {
    /// `(interval, distance)` sorted by `(distance, level, index)`;
    /// includes the center itself at distance zero.
    pub items: Vec<(DyadicInterval, u32)>,
    /// True when the enumeration was cut off by the root or a depth bound.
    pub clipped: bool,
}

/// Every `J` with `dist(I, J) <= d`, optionally capped at `max_level`.
pub fn neighbors_within(center: &DyadicInterval, d: u32, max_level: Option<u32>) -> NeighborSet {
    let mut seen = BTreeSet::new();
    let mut clipped = center.level() < d;
    let climb = d.min(center.level());
    for a in 0..=climb {
        let anc = center.ancestor(a).expect("a <= level");
        for b in 0..=(d - a) {
            let lvl = anc.level() + b;
            if let Some(bound) = max_level {
                if lvl > bound {
                    clipped = true;
                    continue;
                }
            }
            match anc.descendants_at(b) {
                Ok(list) => seen.extend(list),
                Err(_) => clipped = true,
            }
        }
    }
    let mut items: Vec<(DyadicInterval, u32)> = seen
        .into_iter()
        .map(|j| (j, dyadic_distance(center, &j)))
        .filter(|&(_, dist)| dist <= d)
        .collect();
    items.sort_by_key(|&(j, dist)| (dist, j.level(), j.index()));
    NeighborSet { items, clipped }
}

/// Interval of the chain notation: `chain_interval(k)` is `[0, 2^-k)`.
pub fn chain_interval(k: u32) -> DyadicInterval {
    DyadicInterval { level: k, index: 0 }
}

/// Sibling of the chain interval: `[2^-k, 2^-k+1)`, defined for `k >= 1`.
pub fn chain_sibling(k: u32) -> Result<DyadicInterval> {
    if k == 0 {
        return Err(Error::RootBoundary("sibling"));
    }
    Ok(DyadicInterval { level: k, index: 1 })
}

impl FromStr for DyadicInterval {
    type Err = Error;

    /// Accepts `"L:IDX"` literals and the chain shorthands `"Ik"` / `"Ikb"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadIntervalLiteral(s.to_string());
        if let Some(rest) = s.strip_prefix('I') {
            let (digits, sib) = match rest.strip_suffix('b') {
                Some(d) => (d, true),
                None => (rest, false),
            };
            let k: u32 = digits.parse().map_err(|_| bad())?;
            return if sib { chain_sibling(k) } else { Ok(chain_interval(k)) };
        }
        let (l, i) = s.split_once(':').ok_or_else(bad)?;
        let level: u32 = l.trim().parse().map_err(|_| bad())?;
        let index: u128 = i.trim().parse().map_err(|_| bad())?;
        DyadicInterval::new(level, index)
    }
}
