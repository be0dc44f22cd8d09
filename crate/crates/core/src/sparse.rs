//! Sparse families, their certificates, the stopping-time sparse collection,
//! and the bilinear forms they carry.
//!
//! Sparsity is certified primarily by the Carleson packing constant, which is
//! exactly computable for finite families; the disjoint-witness assignment is
//! the secondary certificate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::czd::stopping_children;
use crate::dyadic::{neighbors_within, DyadicInterval};
use crate::error::{Error, Result};
use crate::maximal::maximal_n;
use crate::measure::MeasureTree;
use crate::scalar::Scalar;
use crate::stepfn::DyadicStepFunction;

#[derive(Clone, Debug)]
pub struct Witness {
    /// `E_I = I` minus the listed maximal proper members.
    pub parts: BTreeMap<DyadicInterval, Vec<DyadicInterval>>,
    pub eta: f64,
}

#[derive(Clone, Debug)]
pub struct SparseFamily {
    pub members: BTreeSet<DyadicInterval>,
    pub packing_constant: f64,
    pub witness: Option<Witness>,
}

impl SparseFamily {
    pub fn new(tree: &MeasureTree<f64>, members: BTreeSet<DyadicInterval>) -> Result<Self> {
        let packing_constant = packing_constant(tree, &members)?;
        let witness = witness_assignment(tree, &members).ok();
        Ok(SparseFamily { members, packing_constant, witness })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn union(&self, other: &SparseFamily, tree: &MeasureTree<f64>) -> Result<SparseFamily> {
        let members: BTreeSet<DyadicInterval> =
            self.members.union(&other.members).copied().collect();
        SparseFamily::new(tree, members)
    }

    pub fn to_export(&self) -> SparseExport {
        SparseExport {
            members: self.members.iter().map(|m| m.to_string()).collect(),
            packing: self.packing_constant,
            eta: self.witness.as_ref().map(|w| w.eta),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseExport {
    pub members: Vec<String>,
    pub packing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// Exact Carleson packing constant
/// `max_I sum_{J in S, J inside I} mu(J) / mu(I)`; the maximum over all of
/// `D` is attained on members or least common ancestors of member pairs.
pub fn packing_constant(
    tree: &MeasureTree<f64>,
    members: &BTreeSet<DyadicInterval>,
) -> Result<f64> {
    if members.is_empty() {
        return Ok(0.0);
    }
    let mut sorted: Vec<DyadicInterval> = members.iter().copied().collect();
    sorted.sort_by(|a, b| a.cmp_position(b).then(a.level().cmp(&b.level())));
    let mut candidates: BTreeSet<DyadicInterval> = members.clone();
    for pair in sorted.windows(2) {
        candidates.insert(pair[0].lca(&pair[1]));
    }
    let mut best = 0.0_f64;
    for cand in &candidates {
        let mut sum = 0.0;
        for m in members {
            if cand.contains(m) {
                sum += tree.mass_f64(*m)?;
            }
        }
        best = best.max(sum / tree.mass_f64(*cand)?);
    }
    Ok(best)
}

/// Greedy top-down witness: `E_I = I` minus the maximal members strictly
/// inside `I`. Returns the achieved `eta`; degenerate families yield an
/// error so callers fall back on the packing constant.
pub fn witness_assignment(
    tree: &MeasureTree<f64>,
    members: &BTreeSet<DyadicInterval>,
) -> Result<Witness> {
    let mut parts = BTreeMap::new();
    let mut eta = f64::INFINITY;
    for m in members {
        let inside: Vec<DyadicInterval> = members
            .iter()
            .filter(|j| *j != m && m.contains(j))
            .copied()
            .collect();
        let maximal: Vec<DyadicInterval> = inside
            .iter()
            .filter(|j| !inside.iter().any(|k| k != *j && k.contains(j)))
            .copied()
            .collect();
        let mut remaining = tree.mass_f64(*m)?;
        for j in &maximal {
            remaining -= tree.mass_f64(*j)?;
        }
        eta = eta.min(remaining / tree.mass_f64(*m)?);
        parts.insert(*m, maximal);
    }
    if members.is_empty() {
        eta = 1.0;
    }
    if eta <= 0.0 {
        return Err(Error::MissingWitness);
    }
    Ok(Witness { parts, eta })
}

/// The stopping-time sparse collection: the padded support ancestor together
/// with all iterated stopping families below it.
pub fn build_sparse_collection(
    tree: &MeasureTree<f64>,
    f1: &DyadicStepFunction<f64>,
    f2: &DyadicStepFunction<f64>,
    root_pad: u32,
    multiplier: i64,
) -> Result<SparseFamily> {
    for (idx, f) in [f1, f2].iter().enumerate() {
        if !f.is_nonnegative() {
            return Err(Error::BadDecomposition(format!(
                "f{} must be nonnegative for the sparse construction",
                idx + 1
            )));
        }
    }
    let support = f1
        .support_interval()
        .into_iter()
        .chain(f2.support_interval())
        .reduce(|a, b| a.lca(&b))
        .unwrap_or(DyadicInterval::ROOT);
    if support.level() < root_pad {
        return Err(Error::SupportTooShallow { level: support.level(), needed: root_pad });
    }
    let base = support.ancestor(root_pad)?;
    let mut members: BTreeSet<DyadicInterval> = BTreeSet::new();
    members.insert(base);
    let mut current = vec![base];
    while !current.is_empty() {
        let mut next = Vec::new();
        for iv in current {
            next.extend(stopping_children(tree, f1, f2, iv, multiplier)?);
        }
        members.extend(next.iter().copied());
        current = next;
    }
    SparseFamily::new(tree, members)
}

/// Adds the parent of every sibling pair contained in the family.
pub fn augment_parents(tree: &MeasureTree<f64>, family: &SparseFamily) -> Result<SparseFamily> {
    let mut members = family.members.clone();
    for m in &family.members {
        if m.is_root() {
            continue;
        }
        if family.members.contains(&m.sibling()?) {
            members.insert(m.parent()?);
        }
    }
    SparseFamily::new(tree, members)
}

/// `A_S(f1, f2) = sum_I <f1>_I <f2>_I mu(I)`.
pub fn form_a(
    tree: &MeasureTree<f64>,
    family: &SparseFamily,
    f1: &DyadicStepFunction<f64>,
    f2: &DyadicStepFunction<f64>,
) -> Result<f64> {
    let mut acc = 0.0;
    for m in &family.members {
        acc += f1.average(tree, m)? * f2.average(tree, m)? * tree.mass_f64(*m)?;
    }
    Ok(acc)
}

/// The complexity-`N` form: ordered pairs of disjoint members at dyadic
/// distance in `(2, N+2]`, weighted by `sqrt(m(J) m(K))`.
pub fn form_c_n(
    tree: &MeasureTree<f64>,
    family: &SparseFamily,
    f1: &DyadicStepFunction<f64>,
    f2: &DyadicStepFunction<f64>,
    n: u32,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let bound = tree.depth_bound().saturating_sub(1);
    for m in &family.members {
        if m.level() > bound {
            return Err(Error::DepthExceeded { interval: *m, bound });
        }
    }
    let mut acc = 0.0;
    for j in &family.members {
        let a1 = f1.average(tree, j)?;
        if a1 == 0.0 {
            continue;
        }
        let mj = tree.m_value(*j)?;
        for (k, d) in neighbors_within(j, n + 2, Some(bound)).items {
            if d <= 2 || !family.members.contains(&k) || !j.is_disjoint_from(&k) {
                continue;
            }
            let a2 = f2.average(tree, &k)?;
            if a2 == 0.0 {
                continue;
            }
            acc += a1 * a2 * (mj * tree.m_value(k)?).sqrt();
        }
    }
    Ok(acc)
}

/// The two-sided neighbor form indexed by `S cap D_{<=2}(parent(I))`; at the
/// root the parent is read as the root itself.
pub fn form_c_intro(
    tree: &MeasureTree<f64>,
    family: &SparseFamily,
    f1: &DyadicStepFunction<f64>,
    f2: &DyadicStepFunction<f64>,
) -> Result<f64> {
    let bound = tree.depth_bound().saturating_sub(1);
    let mut acc = 0.0;
    for i in &family.members {
        if i.level() > bound {
            return Err(Error::DepthExceeded { interval: *i, bound });
        }
        let hat = if i.is_root() { *i } else { i.parent()? };
        let mi = tree.m_value(*i)?;
        let a1_i = f1.average(tree, i)?;
        let a2_i = f2.average(tree, i)?;
        for depth in 0..=2u32 {
            for j in hat.descendants_at(depth)? {
                if j.level() > tree.depth_bound() || !family.members.contains(&j) {
                    continue;
                }
                let cross = a1_i * f2.average(tree, &j)? + a2_i * f1.average(tree, &j)?;
                acc += cross * mi;
            }
        }
    }
    Ok(acc)
}

/// One run of the weak-type functional: given `f1` and a target set `G`
/// (a union of cells), removes the superlevel set
/// `H = {M^N f1 > c0 / mu(G)}` and evaluates the complexity-`N` form against
/// `1_{G'}`, `G' = G minus H`.
pub struct WeakTypeCheck {
    pub value: f64,
    pub mu_g: f64,
    pub mu_g_prime: f64,
}

pub fn weak_type_functional(
    tree: &MeasureTree<f64>,
    family: &SparseFamily,
    f1: &DyadicStepFunction<f64>,
    g_set: &DyadicStepFunction<f64>,
    n: u32,
    c0: f64,
) -> Result<WeakTypeCheck> {
    let g_ind = g_set.map_values(|v| if v.is_zero() { 0.0 } else { 1.0 });
    let mu_g = g_ind.integral(tree)?;
    if mu_g <= 0.0 {
        return Err(Error::BadParameter("target set has zero mass".into()));
    }
    let threshold = c0 / mu_g;
    let mn = maximal_n(tree, f1, n)?.value;
    let h_complement = mn.map_values(|v| if *v > threshold { 0.0 } else { 1.0 });
    let g_prime = g_ind.mul(&h_complement);
    let mu_g_prime = g_prime.integral(tree)?;
    let value = form_c_n(tree, family, &f1.abs(), &g_prime, n)?;
    Ok(WeakTypeCheck { value, mu_g, mu_g_prime })
}
