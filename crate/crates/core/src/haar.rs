//! The measure-adapted Haar system: analysis, synthesis, Parseval checks.
//!
//! Coefficients are stored in split form `(m(I), diff)` with
//! `<f, h_I> = sqrt(m(I)) * diff` and `diff = <f>_{I-} - <f>_{I+}`. Squares of
//! coefficients and the synthesis `coef * h_I = m(I) * diff * (...)` are then
//! rational expressions, which makes reconstruction and the Parseval identity
//! exact in rational mode.

use std::collections::{BTreeMap, BTreeSet};

use crate::dyadic::DyadicInterval;
use crate::error::Result;
use crate::measure::MeasureTree;
use crate::scalar::Scalar;
use crate::stepfn::DyadicStepFunction;

#[derive(Clone, Debug)]
pub struct HaarEntry<S> {
    /// `<f>_{I-} - <f>_{I+}`.
    pub diff: S,
    /// `m(I) = mu(I-) mu(I+) / mu(I)`.
    pub m: S,
}

impl<S: Scalar> HaarEntry<S> {
    /// The actual coefficient `<f, h_I>`.
    pub fn value(&self) -> f64 {
        self.m.to_f64().sqrt() * self.diff.to_f64()
    }

    /// `<f, h_I>^2`, exact in rational mode.
    pub fn value_squared(&self) -> S {
        self.m.clone() * self.diff.clone() * self.diff.clone()
    }
}

#[derive(Clone, Debug)]
pub struct HaarCoefficients<S> {
    pub root_mean: S,
    pub entries: BTreeMap<DyadicInterval, HaarEntry<S>>,
}

impl<S: Scalar> HaarCoefficients<S> {
    pub fn coefficient(&self, iv: &DyadicInterval) -> f64 {
        self.entries.get(iv).map(|e| e.value()).unwrap_or(0.0)
    }

    /// `||f||_2^2` reconstructed from coefficients.
    pub fn energy(&self, tree: &MeasureTree<S>) -> Result<S> {
        let mut acc = self.root_mean.clone() * self.root_mean.clone()
            * tree.mass(DyadicInterval::ROOT)?;
        for e in self.entries.values() {
            acc = acc + e.value_squared();
        }
        Ok(acc)
    }
}

/// Haar coefficients of `f`; only branching nodes of the partition can carry
/// nonzero entries, so the expansion is finite.
pub fn analyze<S: Scalar>(
    tree: &MeasureTree<S>,
    f: &DyadicStepFunction<S>,
) -> Result<HaarCoefficients<S>> {
    let root_mean = f.average(tree, &DyadicInterval::ROOT)?;
    let mut entries = BTreeMap::new();
    for node in f.branching_nodes() {
        let (l, r) = node.children()?;
        let diff = f.average(tree, &l)? - f.average(tree, &r)?;
        if diff.is_zero() {
            continue;
        }
        entries.insert(node, HaarEntry { diff, m: tree.m_value(node)? });
    }
    Ok(HaarCoefficients { root_mean, entries })
}

/// Rebuilds the step function `root_mean + sum <f,h_I> h_I`.
pub fn synthesize<S: Scalar>(
    tree: &MeasureTree<S>,
    coeffs: &HaarCoefficients<S>,
) -> Result<DyadicStepFunction<S>> {
    synthesize_with(tree, coeffs.root_mean.clone(), &coeffs.entries, |e| {
        (e.m.clone() * e.diff.clone(), e.m.clone() * e.diff.clone())
    })
}

/// Shared synthesis walk: `scaled(entry)` returns the numerators of the
/// contribution on the left and right child (before dividing by the child
/// masses); the plain expansion uses `m * diff` on both sides.
fn synthesize_with<S: Scalar, E>(
    tree: &MeasureTree<S>,
    root_mean: S,
    entries: &BTreeMap<DyadicInterval, E>,
    scaled: impl Fn(&E) -> (S, S),
) -> Result<DyadicStepFunction<S>> {
    let mut active = BTreeSet::new();
    for iv in entries.keys() {
        let mut walk = *iv;
        loop {
            if !active.insert(walk) {
                break;
            }
            if walk.is_root() {
                break;
            }
            walk = walk.parent()?;
        }
    }
    let mut cells = Vec::new();
    let mut stack = vec![(DyadicInterval::ROOT, root_mean)];
    while let Some((node, acc)) = stack.pop() {
        if !active.contains(&node) {
            cells.push((node, acc));
            continue;
        }
        let (l, r) = node.children()?;
        let (mut lv, mut rv) = (acc.clone(), acc);
        if let Some(e) = entries.get(&node) {
            let (ln, rn) = scaled(e);
            lv = lv + ln / tree.mass(l)?;
            rv = rv - rn / tree.mass(r)?;
        }
        stack.push((l, lv));
        stack.push((r, rv));
    }
    cells.sort_by(|a, b| a.0.cmp_position(&b.0));
    Ok(DyadicStepFunction::from_parts(cells))
}

/// Synthesis from plain `f64` coefficient values `c_I`, producing
/// `sum c_I h_I` (zero mean part only). Used by shift application.
pub fn synthesize_values(
    tree: &MeasureTree<f64>,
    values: &BTreeMap<DyadicInterval, f64>,
) -> Result<DyadicStepFunction<f64>> {
    let scaled = |&(c, m): &(f64, f64)| {
        let s = c * m.sqrt();
        (s, s)
    };
    let entries: BTreeMap<DyadicInterval, (f64, f64)> = values
        .iter()
        .map(|(iv, &c)| Ok((*iv, (c, tree.m_value(*iv)?))))
        .collect::<Result<_>>()?;
    synthesize_with(tree, 0.0, &entries, scaled)
}

/// The normalized Haar function `h_I` itself.
pub fn haar_function(tree: &MeasureTree<f64>, iv: DyadicInterval) -> Result<DyadicStepFunction<f64>> {
    let mut values = BTreeMap::new();
    values.insert(iv, 1.0);
    synthesize_values(tree, &values)
}

/// `<f, h_I>` by direct integration; an independent code path from
/// [`analyze`], kept for cross-checks.
pub fn coefficient_by_integration(
    tree: &MeasureTree<f64>,
    f: &DyadicStepFunction<f64>,
    iv: DyadicInterval,
) -> Result<f64> {
    let h = haar_function(tree, iv)?;
    f.inner(&h, tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{chain_interval, chain_sibling};
    use crate::rng::Prng;
    use crate::scalar::Rat;
    use crate::stepfn::random_step_function;

    fn iv(l: u32, i: u128) -> DyadicInterval {
        DyadicInterval::new(l, i).unwrap()
    }

    #[test]
    fn haar_functions_are_normalized_and_mean_zero() {
        let t = MeasureTree::<f64>::build_lmp(12).unwrap();
        for node in [
            DyadicInterval::ROOT,
            chain_interval(3),
            chain_sibling(2).unwrap(),
            iv(4, 3),
        ] {
            let h = haar_function(&t, node).unwrap();
            assert!(h.integral(&t).unwrap().abs() < 1e-14);
            let n2 = h.lp_norm(&t, 2.0, None).unwrap();
            assert!((n2 - 1.0).abs() < 1e-12, "{node}: {n2}");
            // sup bound |h_I| <= m(I)^(-1/2)
            let sup = h.lp_norm(&t, f64::INFINITY, None).unwrap();
            let bound = t.m_value(node).unwrap().powf(-0.5);
            assert!(sup <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn uniform_haar_values_are_plus_minus_sqrt_inverse_mass() {
        let t = MeasureTree::<f64>::build_uniform(8).unwrap();
        let node = iv(2, 1);
        let h = haar_function(&t, node).unwrap();
        let expect = (1.0 / t.mass(node).unwrap()).sqrt();
        let (l, r) = node.children().unwrap();
        assert!((h.value_on(&l).unwrap() - expect).abs() < 1e-12);
        assert!((h.value_on(&r).unwrap() + expect).abs() < 1e-12);
    }

    #[test]
    fn chain_haar_at_root_is_plus_minus_one() {
        // equal child masses 1/2 give h = 1 on the left, -1 on the right
        let t = MeasureTree::<f64>::build_lmp(8).unwrap();
        let h = haar_function(&t, DyadicInterval::ROOT).unwrap();
        assert!((h.value_on(&chain_interval(1)).unwrap() - 1.0).abs() < 1e-14);
        assert!((h.value_on(&chain_sibling(1).unwrap()).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn orthonormality_exhaustive_to_depth_five() {
        let t = MeasureTree::<f64>::build_random_balanced(6, 23, 0.25).unwrap();
        let mut nodes = Vec::new();
        for l in 0..5u32 {
            for i in 0..(1u128 << l) {
                nodes.push(iv(l, i));
            }
        }
        for a in &nodes {
            let ha = haar_function(&t, *a).unwrap();
            for b in &nodes {
                let hb = haar_function(&t, *b).unwrap();
                let ip = ha.inner(&hb, &t).unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn constant_functions_have_no_haar_content() {
        let t = MeasureTree::<f64>::build_uniform(6).unwrap();
        let c = DyadicStepFunction::constant(5.0);
        let coeffs = analyze(&t, &c).unwrap();
        assert_eq!(coeffs.root_mean, 5.0);
        assert!(coeffs.entries.is_empty());
    }

    #[test]
    fn chain_coefficients_match_hand_computation() {
        // f3 = 1_{I2^b}: <f3, h_{I1}> = -sqrt(1/8), <f3, h_{I0}> = 1/4
        let t = MeasureTree::<f64>::build_lmp(12).unwrap();
        let f3 = DyadicStepFunction::<f64>::indicator(chain_sibling(2).unwrap());
        let coeffs = analyze(&t, &f3).unwrap();
        assert!((coeffs.coefficient(&chain_interval(1)) + 0.125f64.sqrt()).abs() < 1e-14);
        assert!((coeffs.coefficient(&chain_interval(0)) - 0.25).abs() < 1e-14);
        // cross-check both code paths on every ancestor
        for k in 0..2u32 {
            let direct = coefficient_by_integration(&t, &f3, chain_interval(k)).unwrap();
            assert!((direct - coeffs.coefficient(&chain_interval(k))).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_and_parseval_exact_in_rational_mode() {
        let t = MeasureTree::<Rat>::build_random_balanced(6, 41, 0.3).unwrap();
        for trial in 0..25u64 {
            let mut rng = Prng::substream(5150, trial);
            let f = random_step_function::<Rat>(&mut rng, 6, 10, -1.0, 1.0);
            let coeffs = analyze(&t, &f).unwrap();
            let back = synthesize(&t, &coeffs).unwrap();
            assert_eq!(back, f);
            let norm_sq = f.mul(&f).integral(&t).unwrap();
            assert_eq!(coeffs.energy(&t).unwrap(), norm_sq);
        }
    }

    #[test]
    fn reconstruction_close_in_float_mode() {
        let t = MeasureTree::<f64>::build_random_balanced(10, 4, 0.2).unwrap();
        for trial in 0..50u64 {
            let mut rng = Prng::substream(99, trial);
            let f = random_step_function::<f64>(&mut rng, 10, 20, -2.0, 2.0);
            let coeffs = analyze(&t, &f).unwrap();
            let back = synthesize(&t, &coeffs).unwrap();
            assert!(back.sup_diff(&f) <= 1e-10);
            let norm_sq = f.mul(&f).integral(&t).unwrap();
            assert!((coeffs.energy(&t).unwrap() - norm_sq).abs() <= 1e-10);
        }
    }

    #[test]
    fn alternate_coefficient_formula_agrees() {
        let t = MeasureTree::<f64>::build_lmp(10).unwrap();
        let mut rng = Prng::new(3);
        let f = random_step_function::<f64>(&mut rng, 8, 14, -1.0, 1.0);
        let coeffs = analyze(&t, &f).unwrap();
        for (node, entry) in &coeffs.entries {
            let direct = coefficient_by_integration(&t, &f, *node).unwrap();
            assert!((entry.value() - direct).abs() < 1e-12);
        }
    }
}
