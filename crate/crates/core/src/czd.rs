//! Two-function Calderon-Zygmund decomposition and the stopping families it
//! generates.
//!
//! Selection picks the maximal dyadic intervals inside the base interval on
//! which either function's average exceeds its height. Bad parts are
//! mean-zero on the selected parents; good parts obey L^p and BMO bounds with
//! constants measured by the experiment suites.

use std::collections::BTreeSet;

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::measure::MeasureTree;
use crate::scalar::Scalar;
use crate::stepfn::DyadicStepFunction;

/// Height multiplier of the stopping construction; selection inside `I` runs
/// at heights `multiplier * <f_j>_I`.
pub const DEFAULT_HEIGHT_MULTIPLIER: i64 = 16;

#[derive(Clone, Debug)]
pub struct CzDecomposition<S> {
    /// Selected maximal intervals, pairwise disjoint, in position order.
    pub selected: Vec<DyadicInterval>,
    pub good: (DyadicStepFunction<S>, DyadicStepFunction<S>),
    /// One `(I_k, b_{1,k}, b_{2,k})` triple per selected interval; each bad
    /// piece is supported on the parent of `I_k` and has mean zero.
    pub bad: Vec<(DyadicInterval, DyadicStepFunction<S>, DyadicStepFunction<S>)>,
    pub heights: (S, S),
}

impl<S: Scalar> CzDecomposition<S> {
    pub fn good_part(&self, j: usize) -> &DyadicStepFunction<S> {
        if j == 0 {
            &self.good.0
        } else {
            &self.good.1
        }
    }

    pub fn bad_sum(&self, j: usize) -> DyadicStepFunction<S> {
        let mut acc = DyadicStepFunction::zero();
        for (_, b1, b2) in &self.bad {
            acc = acc.add(if j == 0 { b1 } else { b2 });
        }
        acc
    }
}

/// Maximal `J` strictly inside `base` with `<f1>_J > h1` or `<f2>_J > h2`.
fn select_stopping<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    base: DyadicInterval,
    h1: &S,
    h2: &S,
) -> Result<Vec<DyadicInterval>> {
    // descend only where one of the functions still has structure; on an
    // interval where both are constant no deeper average can grow
    let mut out = Vec::new();
    let mut stack = vec![base];
    let interesting: BTreeSet<DyadicInterval> = f1
        .branching_nodes()
        .into_iter()
        .chain(f2.branching_nodes())
        .collect();
    while let Some(node) = stack.pop() {
        if node.level() >= tree.depth_bound() {
            continue;
        }
        if !interesting.contains(&node) {
            continue;
        }
        let (l, r) = node.children()?;
        for child in [l, r] {
            let over1 = f1.average(tree, &child)? > *h1;
            let over2 = f2.average(tree, &child)? > *h2;
            if over1 || over2 {
                out.push(child);
            } else {
                stack.push(child);
            }
        }
    }
    out.sort_by(|a, b| a.cmp_position(b));
    Ok(out)
}

/// The decomposition `f_j = g_j + sum_k b_{j,k}` at heights `(h1, h2)` on the
/// base interval `base`. Requires nonnegative data supported in `base` and
/// heights strictly above the base averages.
pub fn cz_decompose<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    h1: S,
    h2: S,
    base: DyadicInterval,
) -> Result<CzDecomposition<S>> {
    for (idx, f) in [f1, f2].iter().enumerate() {
        if !f.is_nonnegative() {
            return Err(Error::BadDecomposition(format!("f{} is not nonnegative", idx + 1)));
        }
        if let Some(supp) = f.support_interval() {
            if !base.contains(&supp) {
                return Err(Error::BadDecomposition(format!(
                    "support {supp} of f{} escapes the base {base}",
                    idx + 1
                )));
            }
        }
    }
    if !(h1 > f1.average(tree, &base)?) || !(h2 > f2.average(tree, &base)?) {
        return Err(Error::BadDecomposition(
            "heights must exceed the base averages".into(),
        ));
    }
    let selected = select_stopping(tree, f1, f2, base, &h1, &h2)?;
    let mut bad = Vec::new();
    let mut g1 = f1.clone();
    let mut g2 = f2.clone();
    for &ik in &selected {
        let parent = ik.parent()?; // selected intervals are proper, so the parent stays in base
        let ind_ik = DyadicStepFunction::indicator(ik);
        let ind_parent = DyadicStepFunction::indicator(parent);
        let mut pieces = Vec::with_capacity(2);
        for f in [f1, f2] {
            let localized = f.mul(&ind_ik);
            let avg = localized.average(tree, &parent)?;
            pieces.push(localized.sub(&ind_parent.scale(avg)));
        }
        let b2 = pieces.pop().expect("two pieces");
        let b1 = pieces.pop().expect("two pieces");
        g1 = g1.sub(&b1);
        g2 = g2.sub(&b2);
        bad.push((ik, b1, b2));
    }
    Ok(CzDecomposition { selected, good: (g1, g2), bad, heights: (h1, h2) })
}

/// `B(I)`: stopping intervals of the localized pair at heights
/// `multiplier * <f_j>_I`. Empty when both averages vanish.
pub fn stopping_children<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    base: DyadicInterval,
    multiplier: i64,
) -> Result<Vec<DyadicInterval>> {
    let ind = DyadicStepFunction::indicator(base);
    let l1 = f1.mul(&ind);
    let l2 = f2.mul(&ind);
    let a1 = l1.average(tree, &base)?;
    let a2 = l2.average(tree, &base)?;
    if a1.is_zero() && a2.is_zero() {
        return Ok(Vec::new());
    }
    let mult = S::from_int(multiplier);
    select_stopping(tree, &l1, &l2, base, &(mult.clone() * a1), &(mult * a2))
}

/// `B_k(I)`: the `k`-th iterated stopping family.
pub fn stopping_family<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    base: DyadicInterval,
    k: u32,
    multiplier: i64,
) -> Result<Vec<DyadicInterval>> {
    let mut current = vec![base];
    for _ in 0..=k {
        let mut next = Vec::new();
        for iv in current {
            next.extend(stopping_children(tree, f1, f2, iv, multiplier)?);
        }
        current = next;
        if current.is_empty() {
            break;
        }
    }
    Ok(current)
}

/// `B^N(I) = union of B_0(I) .. B_N(I)`.
pub fn stopping_union<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    base: DyadicInterval,
    n: u32,
    multiplier: i64,
) -> Result<Vec<DyadicInterval>> {
    let mut out = Vec::new();
    for k in 0..=n {
        let fam = stopping_family(tree, f1, f2, base, k, multiplier)?;
        if fam.is_empty() {
            break;
        }
        out.extend(fam);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Membership test for the good region `G(I)`: descendants of `I` that are
/// not inside any stopping interval (a stopping interval excludes itself).
pub struct GoodRegion {
    base: DyadicInterval,
    selected: Vec<DyadicInterval>,
}

pub fn good_region<S: Scalar>(
    tree: &MeasureTree<S>,
    f1: &DyadicStepFunction<S>,
    f2: &DyadicStepFunction<S>,
    base: DyadicInterval,
    multiplier: i64,
) -> Result<GoodRegion> {
    Ok(GoodRegion {
        base,
        selected: stopping_children(tree, f1, f2, base, multiplier)?,
    })
}

impl GoodRegion {
    pub fn contains(&self, iv: &DyadicInterval) -> bool {
        self.base.contains(iv) && !self.selected.iter().any(|k| k.contains(iv))
    }

    pub fn selected(&self) -> &[DyadicInterval] {
        &self.selected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{chain_interval, chain_sibling};
    use crate::rng::Prng;
    use crate::scalar::Rat;
    use crate::stepfn::random_step_function;

    fn nonneg(rng: &mut Prng) -> DyadicStepFunction<f64> {
        random_step_function::<f64>(rng, 8, 12, 0.0, 1.0)
    }

    #[test]
    fn small_averages_select_nothing() {
        let t = MeasureTree::<f64>::build_uniform(10).unwrap();
        let f = DyadicStepFunction::constant(1.0);
        let d = cz_decompose(&t, &f, &f, 2.0, 2.0, DyadicInterval::ROOT).unwrap();
        assert!(d.selected.is_empty());
        assert!(d.bad.is_empty());
        assert_eq!(d.good.0, f);
    }

    #[test]
    fn chain_indicator_stopping_trace() {
        // f = 1_{I5^b}, f2 = 0, heights 16<f>_root = 16/40: the only stopping
        // interval is I5^b and b1 = 1_{I5^b} - (1/5) 1_{I4}
        let t = MeasureTree::<Rat>::build_lmp(16).unwrap();
        let b5 = chain_sibling(5).unwrap();
        let f = DyadicStepFunction::<Rat>::indicator(b5);
        let z = DyadicStepFunction::<Rat>::zero();
        let d = cz_decompose(
            &t,
            &f,
            &z,
            Rat::new(16, 40),
            Rat::new(1, 1),
            DyadicInterval::ROOT,
        )
        .unwrap();
        assert_eq!(d.selected, vec![b5]);
        let expect_b1 = DyadicStepFunction::<Rat>::indicator(b5).sub(
            &DyadicStepFunction::<Rat>::indicator(chain_interval(4)).scale(Rat::new(1, 5)),
        );
        assert_eq!(d.bad[0].1, expect_b1);
        // good part reconstructs exactly
        assert_eq!(d.good.0.add(&d.bad_sum(0)), f);
    }

    #[test]
    fn chain_iterated_families() {
        let t = MeasureTree::<f64>::build_lmp(16).unwrap();
        let b5 = chain_sibling(5).unwrap();
        let f = DyadicStepFunction::<f64>::indicator(b5);
        let z = DyadicStepFunction::<f64>::zero();
        let b0 = stopping_family(&t, &f, &z, DyadicInterval::ROOT, 0, 16).unwrap();
        assert_eq!(b0, vec![b5]);
        let b1 = stopping_family(&t, &f, &z, DyadicInterval::ROOT, 1, 16).unwrap();
        assert!(b1.is_empty());
        let union = stopping_union(&t, &f, &z, DyadicInterval::ROOT, 3, 16).unwrap();
        assert_eq!(union, vec![b5]);
    }

    #[test]
    fn good_region_membership() {
        let t = MeasureTree::<f64>::build_lmp(16).unwrap();
        let b5 = chain_sibling(5).unwrap();
        let f = DyadicStepFunction::<f64>::indicator(b5);
        let z = DyadicStepFunction::<f64>::zero();
        let region = good_region(&t, &f, &z, DyadicInterval::ROOT, 16).unwrap();
        assert_eq!(region.selected(), &[b5]);
        assert!(region.contains(&chain_interval(4)));
        assert!(!region.contains(&b5));
        assert!(!region.contains(&b5.left_child().unwrap()));
        assert!(region.contains(&chain_interval(6)));
    }

    #[test]
    fn constant_functions_have_empty_stopping_families() {
        let t = MeasureTree::<f64>::build_random_balanced(8, 3, 0.25).unwrap();
        let c = DyadicStepFunction::constant(2.0);
        for base in [DyadicInterval::ROOT, chain_interval(2)] {
            assert!(stopping_children(&t, &c, &c, base, 16).unwrap().is_empty());
        }
    }

    #[test]
    fn reconstruction_mean_zero_and_l1_control_on_random_data() {
        let t = MeasureTree::<f64>::build_random_balanced(10, 12, 0.25).unwrap();
        for trial in 0..50u64 {
            let mut rng = Prng::substream(614, trial);
            let f1 = nonneg(&mut rng);
            let f2 = nonneg(&mut rng);
            let h1 = 16.0 * f1.average(&t, &DyadicInterval::ROOT).unwrap() + 1e-9;
            let h2 = 16.0 * f2.average(&t, &DyadicInterval::ROOT).unwrap() + 1e-9;
            let d = cz_decompose(&t, &f1, &f2, h1, h2, DyadicInterval::ROOT).unwrap();

            // f_j = g_j + b_j
            assert!(d.good.0.add(&d.bad_sum(0)).sup_diff(&f1) < 1e-12);
            assert!(d.good.1.add(&d.bad_sum(1)).sup_diff(&f2) < 1e-12);

            // selected intervals are maximal (pairwise disjoint)
            for a in &d.selected {
                for b in &d.selected {
                    assert!(a == b || a.is_disjoint_from(b));
                }
            }

            let norm1 = f1.lp_norm(&t, 1.0, None).unwrap();
            for (ik, b1, b2) in &d.bad {
                for (f, b) in [(&f1, b1), (&f2, b2)] {
                    // mean zero over the parent
                    let integral = b.integral(&t).unwrap();
                    assert!(integral.abs() <= 1e-14 * norm1.max(1.0));
                    // support inside the parent
                    if let Some(supp) = b.support_interval() {
                        assert!(ik.parent().unwrap().contains(&supp));
                    }
                    // ||b_k||_1 <= 2 integral_{I_k} f
                    let l1 = b.lp_norm(&t, 1.0, None).unwrap();
                    let local = f
                        .mul(&DyadicStepFunction::indicator(*ik))
                        .lp_norm(&t, 1.0, None)
                        .unwrap();
                    assert!(l1 <= 2.0 * local + 1e-12);
                }
            }

            // outside the selected intervals: g = f and f stays below its height
            for (cell, fv, gv) in f1.common_refinement(&d.good.0) {
                if d.selected.iter().any(|k| k.contains(&cell)) {
                    continue;
                }
                assert!((fv - gv).abs() < 1e-12);
                assert!(fv <= h1 + 1e-9);
            }
        }
    }

    #[test]
    fn exact_reconstruction_in_rational_mode() {
        let t = MeasureTree::<Rat>::build_random_balanced(8, 90, 0.3).unwrap();
        for trial in 0..10u64 {
            let mut rng = Prng::substream(33, trial);
            let f1 = random_step_function::<Rat>(&mut rng, 7, 10, 0.0, 1.0);
            let f2 = random_step_function::<Rat>(&mut rng, 7, 10, 0.0, 1.0);
            let h1 = Rat::from_int(16) * f1.average(&t, &DyadicInterval::ROOT).unwrap()
                + Rat::new(1, 1000);
            let h2 = Rat::from_int(16) * f2.average(&t, &DyadicInterval::ROOT).unwrap()
                + Rat::new(1, 1000);
            let d = cz_decompose(&t, &f1, &f2, h1, h2, DyadicInterval::ROOT).unwrap();
            assert_eq!(d.good.0.add(&d.bad_sum(0)), f1);
            assert_eq!(d.good.1.add(&d.bad_sum(1)), f2);
            for (_, b1, b2) in &d.bad {
                assert!(b1.integral(&t).unwrap().is_zero());
                assert!(b2.integral(&t).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn stopping_packing_is_an_eighth() {
        // sum_{J in B(I)} mu(J) <= mu(I)/8 at the default heights
        let t = MeasureTree::<f64>::build_random_balanced(10, 55, 0.25).unwrap();
        for trial in 0..100u64 {
            let mut rng = Prng::substream(4242, trial);
            let f1 = nonneg(&mut rng);
            let f2 = nonneg(&mut rng);
            let fam = stopping_children(&t, &f1, &f2, DyadicInterval::ROOT, 16).unwrap();
            let total: f64 = fam.iter().map(|j| t.mass_f64(*j).unwrap()).sum();
            assert!(total <= t.mass_f64(DyadicInterval::ROOT).unwrap() / 8.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_preconditions() {
        let t = MeasureTree::<f64>::build_uniform(8).unwrap();
        let f = DyadicStepFunction::constant(1.0);
        let neg = DyadicStepFunction::constant(-1.0);
        assert!(cz_decompose(&t, &neg, &f, 2.0, 2.0, DyadicInterval::ROOT).is_err());
        // height below the base average
        assert!(cz_decompose(&t, &f, &f, 0.5, 2.0, DyadicInterval::ROOT).is_err());
        // support escaping the base
        let wide = DyadicStepFunction::<f64>::indicator(DyadicInterval::new(1, 1).unwrap());
        assert!(cz_decompose(&t, &wide, &f, 2.0, 2.0, chain_interval(1)).is_err());
    }
}
