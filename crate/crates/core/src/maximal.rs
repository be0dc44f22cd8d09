//! Dyadic maximal operators: the classical one, its weighted variant, and
//! the complexity-dependent family damped by `c_1^b(I, J)`.
//!
//! The complexity-`N` operator takes the supremum of
//! `c_1^b(I,J) <|f|>_I 1_J` over pairs at dyadic distance at most `N+2`. Its
//! output is computed exactly on a partition refined enough that, below any
//! output cell, the measure splits equally and `|f|` is constant; the
//! remaining deep pairs then contribute a closed-form factor.

use std::collections::{BTreeMap, HashMap};

use crate::dyadic::{neighbors_within, DyadicInterval};
use crate::error::{Error, Result};
use crate::measure::MeasureTree;
use crate::scalar::Scalar;
use crate::stepfn::{DyadicStepFunction, Weight};

/// Position-indexed prefix sums of `v * mu(cell)` for fast interval averages.
struct PrefixAverages<'a> {
    tree: &'a MeasureTree<f64>,
    cells: Vec<(DyadicInterval, f64)>,
    prefix: Vec<f64>,
    cache: HashMap<DyadicInterval, f64>,
}

impl<'a> PrefixAverages<'a> {
    fn new(tree: &'a MeasureTree<f64>, f: &DyadicStepFunction<f64>) -> Result<Self> {
        let cells: Vec<(DyadicInterval, f64)> = f.cells().to_vec();
        let mut prefix = Vec::with_capacity(cells.len() + 1);
        prefix.push(0.0);
        for (iv, v) in &cells {
            let last = *prefix.last().expect("nonempty");
            prefix.push(last + v * tree.mass_f64(*iv)?);
        }
        Ok(PrefixAverages { tree, cells, prefix, cache: HashMap::new() })
    }

    fn integral_over(&self, iv: &DyadicInterval) -> Result<f64> {
        use std::cmp::Ordering;
        let lo = self
            .cells
            .partition_point(|c| c.0.cmp_position(iv) == Ordering::Less);
        if lo > 0 && self.cells[lo - 1].0.contains(iv) {
            return Ok(self.cells[lo - 1].1 * self.tree.mass_f64(*iv)?);
        }
        if lo < self.cells.len() && self.cells[lo].0.contains(iv) && self.cells[lo].0 != *iv {
            return Ok(self.cells[lo].1 * self.tree.mass_f64(*iv)?);
        }
        let hi = self.cells.partition_point(|c| {
            c.0.cmp_position(iv) == Ordering::Less || iv.contains(&c.0)
        });
        Ok(self.prefix[hi] - self.prefix[lo])
    }

    fn average(&mut self, iv: &DyadicInterval) -> Result<f64> {
        if let Some(&hit) = self.cache.get(iv) {
            return Ok(hit);
        }
        let v = self.integral_over(iv)? / self.tree.mass_f64(*iv)?;
        self.cache.insert(*iv, v);
        Ok(v)
    }
}

/// `M f(x) = sup_{I contains x} <|f|>_I`. Constant on the cells of `f`.
pub fn maximal(
    tree: &MeasureTree<f64>,
    f: &DyadicStepFunction<f64>,
) -> Result<DyadicStepFunction<f64>> {
    let absf = f.abs();
    let mut avgs = PrefixAverages::new(tree, &absf)?;
    let mut out = Vec::with_capacity(absf.cells().len());
    for (cell, v) in absf.cells() {
        let mut best = *v;
        let mut walk = *cell;
        loop {
            best = best.max(avgs.average(&walk)?);
            if walk.is_root() {
                break;
            }
            walk = walk.parent()?;
        }
        out.push((*cell, best));
    }
    Ok(DyadicStepFunction::from_parts(out))
}

/// Maximal operator of the measure `w dmu`.
pub fn maximal_weighted(
    tree: &MeasureTree<f64>,
    w: &Weight<f64>,
    f: &DyadicStepFunction<f64>,
) -> Result<DyadicStepFunction<f64>> {
    let fw = f.abs().mul(w.as_fn());
    let num = PrefixAverages::new(tree, &fw)?;
    let den = PrefixAverages::new(tree, w.as_fn())?;
    let refined = f.abs().combine(w.as_fn(), &|a, _| *a);
    let mut out = Vec::with_capacity(refined.cells().len());
    for (cell, v) in refined.cells() {
        let mut best = *v;
        let mut walk = *cell;
        loop {
            best = best.max(num.integral_over(&walk)? / den.integral_over(&walk)?);
            if walk.is_root() {
                break;
            }
            walk = walk.parent()?;
        }
        out.push((*cell, best));
    }
    Ok(DyadicStepFunction::from_parts(out))
}

/// `c_1^b(I, J)`: 1 on the diagonal, `sqrt(m(I) m(J)) / mu(J)` otherwise.
pub fn c_1_b(tree: &MeasureTree<f64>, i: &DyadicInterval, j: &DyadicInterval) -> Result<f64> {
    if i == j {
        return Ok(1.0);
    }
    Ok((tree.m_value(*i)? * tree.m_value(*j)?).sqrt() / tree.mass_f64(*j)?)
}

#[derive(Clone, Debug)]
pub struct MaximalResult {
    pub value: DyadicStepFunction<f64>,
    /// Pair `(I, J)` attaining the supremum on each output cell.
    pub attaining: BTreeMap<DyadicInterval, (DyadicInterval, DyadicInterval)>,
    /// Set when candidate pairs were cut off by the depth bound.
    pub clipped: bool,
}

/// Frontier of the measure's structural tree: a partition such that below
/// any of its cells the measure splits equally.
fn structural_frontier(tree: &MeasureTree<f64>, cap: u32) -> Result<Vec<DyadicInterval>> {
    let nodes: std::collections::BTreeSet<DyadicInterval> =
        tree.structural_nodes(cap)?.into_iter().collect();
    let mut cells = Vec::new();
    for node in &nodes {
        if node.level() >= cap {
            cells.push(*node);
            continue;
        }
        let (l, r) = node.children()?;
        for child in [l, r] {
            if !nodes.contains(&child) {
                cells.push(child);
            }
        }
    }
    if cells.is_empty() {
        cells.push(DyadicInterval::ROOT);
    }
    cells.sort_by(|a, b| a.cmp_position(b));
    // drop cells that sit inside structural nodes deeper than their parents
    // (cannot happen for parent-closed node sets, kept as a guard)
    Ok(cells)
}

/// Largest `c_1^b(I,J)` over equal-split pairs living strictly deeper than
/// the chain scan reaches: `I, J` below a common ancestor at relative depth
/// `l >= 1` inside the cell, with `depth(J) = l + b > n + 2`, `a + b <= n+2`,
/// everything within `room` levels.
fn equal_split_deep_factor(n: u32, room: u32) -> f64 {
    // saturates once the common ancestor and both offsets fit
    let room = room.min(2 * n + 6);
    let mut best: f64 = 0.0;
    for l in 1..=room {
        let cap = room - l;
        for b in 0..=(n + 2).min(cap) {
            if l + b <= n + 2 {
                continue;
            }
            for a in 0..=(n + 2 - b).min(cap) {
                if a == 0 && b == 0 {
                    continue;
                }
                best = best.max(0.25 * 2f64.powf((b as f64 - a as f64) / 2.0));
            }
        }
    }
    best
}

/// The complexity-`N` maximal operator.
pub fn maximal_n(
    tree: &MeasureTree<f64>,
    f: &DyadicStepFunction<f64>,
    n: u32,
) -> Result<MaximalResult> {
    let bound = tree
        .depth_bound()
        .checked_sub(1)
        .ok_or(Error::BadParameter("depth bound too small for m-values".into()))?;
    let absf = f.abs();
    let mut avgs = PrefixAverages::new(tree, &absf)?;

    // partition on which the supremum is provably constant per cell:
    // refine |f| by the structural frontier, then N+2 extra levels
    let frontier = structural_frontier(tree, bound)?;
    let marker = DyadicStepFunction::from_cells(
        frontier.iter().enumerate().map(|(i, iv)| (*iv, i as f64)).collect(),
    )
    .map_err(|_| Error::BadParameter("structural frontier is not a partition".into()))?;
    let base: Vec<DyadicInterval> =
        absf.common_refinement(&marker).into_iter().map(|(iv, _, _)| iv).collect();
    let mut clipped = false;

    // V(J) = sup over admissible I of c_1^b(I, J) <|f|>_I; shared by every
    // piece whose chain passes through J
    let mut v_cache: HashMap<DyadicInterval, (f64, DyadicInterval)> = HashMap::new();
    let mut v_of = |j: DyadicInterval,
                    avgs: &mut PrefixAverages,
                    clipped: &mut bool|
     -> Result<(f64, DyadicInterval)> {
        if let Some(hit) = v_cache.get(&j) {
            return Ok(*hit);
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_i = j;
        let nbrs = neighbors_within(&j, n + 2, Some(bound));
        *clipped |= nbrs.clipped;
        for (i, _) in nbrs.items {
            let val = c_1_b(tree, &i, &j)? * avgs.average(&i)?;
            if val > best {
                best = val;
                best_i = i;
            }
        }
        v_cache.insert(j, (best, best_i));
        Ok((best, best_i))
    };

    let mut out = Vec::new();
    let mut attaining = BTreeMap::new();
    for cell in base {
        let extra = (n + 2).min((bound + 1).saturating_sub(cell.level()));
        if extra < n + 2 {
            clipped = true;
        }
        for piece in cell.descendants_at(extra)? {
            let mut best = f64::NEG_INFINITY;
            let mut best_pair = (piece, piece);
            let mut walk = piece;
            loop {
                if walk.level() <= bound {
                    let (v, i) = v_of(walk, &mut avgs, &mut clipped)?;
                    if v > best {
                        best = v;
                        best_pair = (i, walk);
                    }
                }
                if walk.is_root() {
                    break;
                }
                walk = walk.parent()?;
            }
            // pairs entirely below this cell: equal-split region with
            // constant |f|, handled in closed form
            let room = bound.saturating_sub(piece.level());
            if room > 0 {
                let tail = equal_split_deep_factor(n, room) * absf.value_on(&piece)?.to_f64();
                if tail > best {
                    best = tail;
                    best_pair = (piece, piece);
                }
            }
            attaining.insert(piece, best_pair);
            out.push((piece, best));
        }
    }
    out.sort_by(|a, b| a.0.cmp_position(&b.0));
    Ok(MaximalResult {
        value: DyadicStepFunction::from_parts(out),
        attaining,
        clipped,
    })
}

/// `sup_lambda lambda * mu(|g| > lambda)`, exact over the level sets of a
/// step function.
pub fn weak_sup(tree: &MeasureTree<f64>, g: &DyadicStepFunction<f64>) -> Result<f64> {
    let mut by_value: Vec<(f64, f64)> = Vec::with_capacity(g.cells().len());
    for (iv, v) in g.cells() {
        by_value.push((v.abs(), tree.mass_f64(*iv)?));
    }
    by_value.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite values"));
    let mut best = 0.0_f64;
    let mut mass_at_least = 0.0;
    for (v, m) in by_value {
        mass_at_least += m;
        best = best.max(v * mass_at_least);
    }
    Ok(best)
}

/// Weak-(1,1) diagnostic `sup_lambda lambda mu(|T f| > lambda) / ||f||_1`.
pub fn weak11_ratio(
    tree: &MeasureTree<f64>,
    transformed: &DyadicStepFunction<f64>,
    input: &DyadicStepFunction<f64>,
) -> Result<f64> {
    let l1 = input.lp_norm(tree, 1.0, None)?;
    if l1 == 0.0 {
        return Err(Error::BadParameter("weak-type ratio needs a nonzero input".into()));
    }
    Ok(weak_sup(tree, transformed)? / l1)
}
