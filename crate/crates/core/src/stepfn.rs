//! Dyadic step functions: finite linear combinations of indicators of dyadic
//! intervals, stored as a canonical partition of the root.
//!
//! Canonical form merges sibling cells with equal values, so two functions
//! are equal exactly when their cell lists coincide. All algebra walks the
//! union of the two partition trees and never refines below it, which keeps
//! chain-supported data (cells at level ~2^k) cheap.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::measure::MeasureTree;
use crate::rng::Prng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicStepFunction<S> {
    /// Pairwise-disjoint cells covering the root, sorted by position.
    cells: Vec<(DyadicInterval, S)>,
}

impl<S: Scalar> DyadicStepFunction<S> {
    pub fn constant(c: S) -> Self {
        DyadicStepFunction { cells: vec![(DyadicInterval::ROOT, c)] }
    }

    pub fn zero() -> Self {
        Self::constant(S::zero())
    }

    /// `1_I`, extended by zero to the rest of the root interval.
    pub fn indicator(iv: DyadicInterval) -> Self {
        let mut cells = vec![(iv, S::one())];
        let mut walk = iv;
        while !walk.is_root() {
            cells.push((walk.sibling().expect("non-root"), S::zero()));
            walk = walk.parent().expect("non-root");
        }
        cells.sort_by(|a, b| a.0.cmp_position(&b.0));
        DyadicStepFunction { cells }.canonicalized()
    }

    /// Builds from explicit cells; they must partition the root.
    pub fn from_cells(mut cells: Vec<(DyadicInterval, S)>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::BadPartition("no cells".into()));
        }
        cells.sort_by(|a, b| a.0.cmp_position(&b.0));
        // disjoint + total length 1  <=>  partition of the root
        let mut len_num = 0u128; // accumulated length scaled by 2^max_level
        let max_level = cells.iter().map(|c| c.0.level()).max().unwrap();
        if max_level >= 120 {
            return Err(Error::BadPartition("cells too deep to validate".into()));
        }
        for w in cells.windows(2) {
            if !w[0].0.is_disjoint_from(&w[1].0) {
                return Err(Error::BadPartition(format!("{} overlaps {}", w[0].0, w[1].0)));
            }
        }
        for (iv, _) in &cells {
            len_num += 1u128 << (max_level - iv.level());
        }
        if len_num != 1u128 << max_level {
            return Err(Error::BadPartition("cells do not cover the root".into()));
        }
        Ok(DyadicStepFunction { cells }.canonicalized())
    }

    /// Internal constructor for walks that produce a partition by
    /// construction; skips validation but restores canonical form.
    pub(crate) fn from_parts(cells: Vec<(DyadicInterval, S)>) -> Self {
        DyadicStepFunction { cells }.canonicalized()
    }

    pub fn cells(&self) -> &[(DyadicInterval, S)] {
        &self.cells
    }

    pub fn max_cell_level(&self) -> u32 {
        self.cells.iter().map(|c| c.0.level()).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.cells.len() == 1
    }

    fn canonicalized(mut self) -> Self {
        loop {
            let mut merged = false;
            let mut out: Vec<(DyadicInterval, S)> = Vec::with_capacity(self.cells.len());
            let mut i = 0;
            while i < self.cells.len() {
                if i + 1 < self.cells.len() {
                    let (a, av) = &self.cells[i];
                    let (b, bv) = &self.cells[i + 1];
                    if a.level() == b.level()
                        && a.level() > 0
                        && a.sibling().expect("non-root") == *b
                        && av == bv
                    {
                        out.push((a.parent().expect("non-root"), av.clone()));
                        merged = true;
                        i += 2;
                        continue;
                    }
                }
                out.push(self.cells[i].clone());
                i += 1;
            }
            self.cells = out;
            if !merged {
                return self;
            }
        }
    }

    /// Value at the (unique) cell containing `iv`; errors if `iv` straddles
    /// cell boundaries.
    pub fn value_on(&self, iv: &DyadicInterval) -> Result<S> {
        let idx = self
            .cells
            .partition_point(|c| c.0.cmp_position(iv) == std::cmp::Ordering::Less);
        for probe in [idx.wrapping_sub(1), idx] {
            if let Some((cell, v)) = self.cells.get(probe) {
                if cell.contains(iv) {
                    return Ok(v.clone());
                }
            }
        }
        Err(Error::BadPartition(format!("{iv} is not inside a single cell")))
    }

    pub fn combine(&self, other: &Self, op: &impl Fn(&S, &S) -> S) -> Self {
        let cells = self
            .common_refinement(other)
            .into_iter()
            .map(|(iv, a, b)| (iv, op(&a, &b)))
            .collect();
        DyadicStepFunction { cells }.canonicalized()
    }

    /// The coarsest partition refining both, with the pair of values on each
    /// cell. Never refines below the union of the two partition trees.
    pub fn common_refinement(&self, other: &Self) -> Vec<(DyadicInterval, S, S)> {
        let mut cells = Vec::new();
        refine_walk(DyadicInterval::ROOT, &self.cells, &other.cells, &mut cells);
        cells
    }

    pub fn map_values(&self, op: impl Fn(&S) -> S) -> Self {
        DyadicStepFunction {
            cells: self.cells.iter().map(|(i, v)| (*i, op(v))).collect(),
        }
        .canonicalized()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, &|a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, &|a, b| a.clone() - b.clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.combine(other, &|a, b| a.clone() * b.clone())
    }

    pub fn scale(&self, c: S) -> Self {
        self.map_values(|v| v.clone() * c.clone())
    }

    pub fn abs(&self) -> Self {
        self.map_values(|v| v.abs())
    }

    pub fn linear_combination(a: S, f: &Self, b: S, g: &Self) -> Self {
        f.combine(g, &|x, y| a.clone() * x.clone() + b.clone() * y.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|(_, v)| v.is_zero())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.cells.iter().all(|(_, v)| !(v.clone() < S::zero()))
    }

    /// Smallest dyadic interval containing the support, `None` when `f == 0`.
    pub fn support_interval(&self) -> Option<DyadicInterval> {
        let mut nonzero = self.cells.iter().filter(|(_, v)| !v.is_zero());
        let first = nonzero.next()?.0;
        Some(nonzero.fold(first, |acc, (iv, _)| acc.lca(iv)))
    }

    /// Proper ancestors of cells; exactly the intervals on which the function
    /// is non-constant (canonical form guarantees the converse).
    pub fn branching_nodes(&self) -> BTreeSet<DyadicInterval> {
        let mut nodes = BTreeSet::new();
        for (cell, _) in &self.cells {
            let mut walk = *cell;
            while !walk.is_root() {
                walk = walk.parent().expect("non-root");
                if !nodes.insert(walk) {
                    break;
                }
            }
        }
        nodes
    }

    /// `sum_{cells Q <= I} v_Q mu(Q)`, exact on the common refinement.
    pub fn integral_over(&self, tree: &MeasureTree<S>, iv: &DyadicInterval) -> Result<S> {
        let idx = self
            .cells
            .partition_point(|c| c.0.cmp_position(iv) == std::cmp::Ordering::Less);
        if idx > 0 {
            let (cell, v) = &self.cells[idx - 1];
            if cell.contains(iv) {
                return Ok(v.clone() * tree.mass(*iv)?);
            }
        }
        let mut acc = S::zero();
        for (cell, v) in &self.cells[idx..] {
            if iv.contains(cell) {
                acc = acc + v.clone() * tree.mass(*cell)?;
            } else if cell.contains(iv) {
                return Ok(v.clone() * tree.mass(*iv)?);
            } else if cell.cmp_position(iv) == std::cmp::Ordering::Greater
                && cell.is_disjoint_from(iv)
            {
                break;
            }
        }
        Ok(acc)
    }

    pub fn integral(&self, tree: &MeasureTree<S>) -> Result<S> {
        let mut acc = S::zero();
        for (cell, v) in &self.cells {
            acc = acc + v.clone() * tree.mass(*cell)?;
        }
        Ok(acc)
    }

    /// `<f>_I` with respect to the tree's measure.
    pub fn average(&self, tree: &MeasureTree<S>, iv: &DyadicInterval) -> Result<S> {
        Ok(self.integral_over(tree, iv)? / tree.mass(*iv)?)
    }

    /// `integral f g dmu`.
    pub fn inner(&self, other: &Self, tree: &MeasureTree<S>) -> Result<S> {
        let mut acc = S::zero();
        for (cell, a, b) in self.common_refinement(other) {
            if !a.is_zero() && !b.is_zero() {
                acc = acc + a * b * tree.mass(cell)?;
            }
        }
        Ok(acc)
    }

    /// `(integral |f|^p w dmu)^(1/p)`; `p = f64::INFINITY` gives the sup of
    /// `|f|` over cells. Evaluated in binary64.
    pub fn lp_norm(&self, tree: &MeasureTree<S>, p: f64, w: Option<&Weight<S>>) -> Result<f64> {
        if p.is_infinite() {
            return Ok(self
                .cells
                .iter()
                .map(|(_, v)| v.to_f64().abs())
                .fold(0.0, f64::max));
        }
        if p < 1.0 {
            return Err(Error::BadParameter(format!("p = {p} below 1")));
        }
        let one = DyadicStepFunction::constant(S::one());
        let wf = w.map(|x| x.as_fn()).unwrap_or(&one);
        let mut acc = 0.0;
        for (cell, fv, wv) in self.common_refinement(wf) {
            let fv = fv.to_f64().abs();
            if fv != 0.0 {
                acc += fv.powf(p) * wv.to_f64() * tree.mass_f64(cell)?;
            }
        }
        Ok(acc.powf(1.0 / p))
    }

    /// Martingale BMO norm: `sup_I <|f - <f>_parent(I)|>_I` over non-root `I`
    /// with `level <= depth`. The scan is exact: only children of branching
    /// nodes can contribute.
    pub fn bmo_norm(&self, tree: &MeasureTree<S>, depth: u32) -> Result<S> {
        let mut best = S::zero();
        for parent in self.branching_nodes() {
            if parent.level() + 1 > depth {
                continue;
            }
            let pavg = self.average(tree, &parent)?;
            let centered = self.map_values(|v| (v.clone() - pavg.clone()).abs());
            let (l, r) = parent.children()?;
            for child in [l, r] {
                let v = centered.average(tree, &child)?;
                if v > best {
                    best = v;
                }
            }
        }
        Ok(best)
    }

    /// Splits every cell `extra` levels (capped at `max_level`), preserving
    /// values. Used by operators whose output is finer than the input.
    pub fn refined(&self, extra: u32, max_level: u32) -> Result<Self> {
        let mut cells = Vec::new();
        for (cell, v) in &self.cells {
            let down = extra.min(max_level.saturating_sub(cell.level()));
            for piece in cell.descendants_at(down)? {
                cells.push((piece, v.clone()));
            }
        }
        cells.sort_by(|a, b| a.0.cmp_position(&b.0));
        Ok(DyadicStepFunction { cells })
    }

    pub fn to_f64(&self) -> DyadicStepFunction<f64> {
        DyadicStepFunction {
            cells: self.cells.iter().map(|(i, v)| (*i, v.to_f64())).collect(),
        }
    }

    /// Largest pointwise difference, on the common refinement.
    pub fn sup_diff(&self, other: &Self) -> f64 {
        self.combine(other, &|a, b| a.clone() - b.clone())
            .cells
            .iter()
            .map(|(_, v)| v.to_f64().abs())
            .fold(0.0, f64::max)
    }
}

fn refine_walk<S: Scalar>(
    node: DyadicInterval,
    f: &[(DyadicInterval, S)],
    g: &[(DyadicInterval, S)],
    out: &mut Vec<(DyadicInterval, S, S)>,
) {
    let f_const = f.len() == 1 && f[0].0.contains(&node);
    let g_const = g.len() == 1 && g[0].0.contains(&node);
    if f_const && g_const {
        out.push((node, f[0].1.clone(), g[0].1.clone()));
        return;
    }
    let (l, r) = node.children().expect("refinement depth within index space");
    let (fl, fr) = split_cells(f, &node, &r);
    let (gl, gr) = split_cells(g, &node, &r);
    refine_walk(l, fl, gl, out);
    refine_walk(r, fr, gr, out);
}

/// Splits the slice of cells under `node` into the parts under its left and
/// right child; a single covering cell feeds both sides.
fn split_cells<'a, S>(
    cells: &'a [(DyadicInterval, S)],
    node: &DyadicInterval,
    right: &DyadicInterval,
) -> (&'a [(DyadicInterval, S)], &'a [(DyadicInterval, S)]) {
    if cells.len() == 1 && cells[0].0.contains(node) {
        return (cells, cells);
    }
    let cut = cells.partition_point(|c| c.0.cmp_position(right) == std::cmp::Ordering::Less);
    (&cells[..cut], &cells[cut..])
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// A strictly positive step function.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight<S>(DyadicStepFunction<S>);

impl<S: Scalar> Weight<S> {
    pub fn new(f: DyadicStepFunction<S>) -> Result<Self> {
        for (_, v) in f.cells() {
            if !(v.clone() > S::zero()) {
                return Err(Error::NonPositiveWeight(v.to_f64()));
            }
        }
        Ok(Weight(f))
    }

    pub fn one() -> Self {
        Weight(DyadicStepFunction::constant(S::one()))
    }

    pub fn as_fn(&self) -> &DyadicStepFunction<S> {
        &self.0
    }

    pub fn w_mass(&self, tree: &MeasureTree<S>, iv: &DyadicInterval) -> Result<S> {
        self.0.integral_over(tree, iv)
    }

    /// `<f>_I` with respect to `w dmu`.
    pub fn weighted_average(
        &self,
        tree: &MeasureTree<S>,
        f: &DyadicStepFunction<S>,
        iv: &DyadicInterval,
    ) -> Result<S> {
        Ok(f.mul(&self.0).integral_over(tree, iv)? / self.w_mass(tree, iv)?)
    }

    pub fn min_on(&self, iv: &DyadicInterval) -> Result<S> {
        let mut best: Option<S> = None;
        for (cell, v) in self.0.cells() {
            if iv.contains(cell) || cell.contains(iv) {
                best = Some(match best {
                    None => v.clone(),
                    Some(b) => {
                        if v.clone() < b {
                            v.clone()
                        } else {
                            b
                        }
                    }
                });
            }
        }
        best.ok_or_else(|| Error::BadPartition(format!("no cell meets {iv}")))
    }
}

impl Weight<f64> {
    /// Pointwise power `w^e` (used for `w^(1-p')` duals).
    pub fn powf(&self, e: f64) -> Weight<f64> {
        Weight(self.0.map_values(|v| v.powf(e)))
    }

    pub fn reciprocal(&self) -> Weight<f64> {
        self.powf(-1.0)
    }
}

// ---------------------------------------------------------------------------
// Random generation for the experiment suites
// ---------------------------------------------------------------------------

/// Random step function: repeatedly splits cells, then assigns values in
/// `[lo, hi)`. Deterministic for a given generator state.
pub fn random_step_function<S: Scalar>(
    rng: &mut Prng,
    max_level: u32,
    splits: u32,
    lo: f64,
    hi: f64,
) -> DyadicStepFunction<S> {
    let mut leaves = vec![DyadicInterval::ROOT];
    for _ in 0..splits {
        let pick = rng.below(leaves.len() as u64) as usize;
        if leaves[pick].level() >= max_level {
            continue;
        }
        let (l, r) = leaves[pick].children().expect("depth bounded");
        leaves.swap_remove(pick);
        leaves.push(l);
        leaves.push(r);
    }
    let cells = leaves
        .into_iter()
        .map(|iv| (iv, S::from_f64(rng.range(lo, hi))))
        .collect();
    DyadicStepFunction::from_cells(cells).expect("leaves partition the root")
}

/// Random nonnegative function with rare spikes: each cell keeps a value
/// `u^power` with probability `keep`, and is zero otherwise. Spiky data
/// drives the stopping-time constructions into their nontrivial branches.
pub fn random_spiky_function<S: Scalar>(
    rng: &mut Prng,
    max_level: u32,
    splits: u32,
    power: i32,
    keep: f64,
) -> DyadicStepFunction<S> {
    let raw = random_step_function::<f64>(rng, max_level, splits, 0.0, 1.0);
    let cells = raw
        .cells()
        .iter()
        .map(|(iv, v)| {
            let value = if rng.chance(keep) { v.powi(power) } else { 0.0 };
            (*iv, S::from_f64(value))
        })
        .collect();
    DyadicStepFunction::from_cells(cells).expect("partition preserved")
}

/// Random strictly positive weight with values in `[lo, hi)`.
pub fn random_weight<S: Scalar>(
    rng: &mut Prng,
    max_level: u32,
    splits: u32,
    lo: f64,
    hi: f64,
) -> Weight<S> {
    assert!(lo > 0.0);
    Weight::new(random_step_function(rng, max_level, splits, lo, hi)).expect("positive values")
}

// ---------------------------------------------------------------------------
// JSON function literals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellLiteral {
    pub interval: String,
    pub value: f64,
}

pub fn from_literals<S: Scalar>(cells: &[CellLiteral]) -> Result<DyadicStepFunction<S>> {
    let parsed = cells
        .iter()
        .map(|c| Ok((c.interval.parse()?, S::from_f64(c.value))))
        .collect::<Result<Vec<_>>>()?;
    DyadicStepFunction::from_cells(parsed)
}

pub fn to_literals<S: Scalar>(f: &DyadicStepFunction<S>) -> Vec<CellLiteral> {
    f.cells()
        .iter()
        .map(|(i, v)| CellLiteral { interval: i.to_string(), value: v.to_f64() })
        .collect()
}
