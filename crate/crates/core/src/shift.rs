//! Haar shift operators of complexity `(s, t)` and named instances.
//!
//! A shift moves Haar content from depth-`s` descendants to depth-`t`
//! descendants of each base interval, with coefficients bounded by one. The
//! infinite sum over base intervals truncates exactly on step functions: only
//! bases whose depth-`s` descendants carry a nonzero coefficient contribute.

use std::collections::BTreeMap;

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::haar::{analyze, synthesize_values};
use crate::measure::MeasureTree;
use crate::rng::Prng;
use crate::stepfn::{random_step_function, DyadicStepFunction, Weight};

const MAX_COMPLEXITY: u32 = 8;

#[derive(Clone, Debug)]
pub enum AlphaRule {
    /// Complexity (0,1): `h_I -> h_{I-} - h_{I+}`.
    Hilbert,
    /// Complexity (1,0): `h_{I-} -> h_I`, `h_{I+} -> -h_I`.
    HilbertAdjoint,
    /// Complexity (0,2): `h_I -> h_{I--}` (leftmost grandchild).
    LeftLeft,
    /// Complexity (2,0): transpose of [`AlphaRule::LeftLeft`].
    LeftLeftAdjoint,
    /// Complexity (0,0): sign pattern cycled by level.
    Multiplier(Vec<f64>),
    /// Dense seeded coefficients in `[-1, 1]`.
    Random { seed: u64 },
    /// Sparse explicit map keyed by `(I, m, n)` with `J = I_s^m`, `K = I_t^n`.
    Explicit(BTreeMap<(DyadicInterval, u128, u128), f64>),
    /// Swaps the roles of the two offsets.
    Transposed(Box<AlphaRule>),
}

impl AlphaRule {
    fn alpha(&self, base: DyadicInterval, m: u128, n: u128) -> f64 {
        match self {
            AlphaRule::Hilbert => {
                debug_assert_eq!(m, 0);
                if n == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            AlphaRule::HilbertAdjoint => {
                debug_assert_eq!(n, 0);
                if m == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            AlphaRule::LeftLeft => {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            AlphaRule::LeftLeftAdjoint => {
                if m == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            AlphaRule::Multiplier(pattern) => pattern[base.level() as usize % pattern.len()],
            AlphaRule::Random { seed } => {
                let mut h = Prng::substream(
                    *seed,
                    (base.level() as u64).wrapping_mul(0x51ed_2701)
                        ^ (base.index() as u64)
                        ^ ((base.index() >> 64) as u64).rotate_left(17)
                        ^ (m as u64).rotate_left(31)
                        ^ (n as u64).rotate_left(47),
                );
                h.range(-1.0, 1.0)
            }
            AlphaRule::Explicit(map) => map.get(&(base, m, n)).copied().unwrap_or(0.0),
            AlphaRule::Transposed(inner) => inner.alpha(base, n, m),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HaarShift {
    s: u32,
    t: u32,
    rule: AlphaRule,
    depth_cutoff: Option<u32>,
}

pub fn make_shift(s: u32, t: u32, rule: AlphaRule) -> Result<HaarShift> {
    if s > MAX_COMPLEXITY || t > MAX_COMPLEXITY {
        return Err(Error::BadParameter(format!("complexity ({s},{t}) too large")));
    }
    match &rule {
        AlphaRule::Multiplier(p) => {
            if p.is_empty() {
                return Err(Error::BadParameter("empty multiplier pattern".into()));
            }
            for &v in p {
                if v.abs() > 1.0 {
                    return Err(Error::AlphaOutOfRange(v));
                }
            }
        }
        AlphaRule::Explicit(map) => {
            for &v in map.values() {
                if v.abs() > 1.0 {
                    return Err(Error::AlphaOutOfRange(v));
                }
            }
        }
        _ => {}
    }
    Ok(HaarShift { s, t, rule, depth_cutoff: None })
}

pub fn dyadic_hilbert() -> HaarShift {
    make_shift(0, 1, AlphaRule::Hilbert).expect("valid")
}

pub fn dyadic_hilbert_adjoint() -> HaarShift {
    make_shift(1, 0, AlphaRule::HilbertAdjoint).expect("valid")
}

/// The complexity-(0,2) shift `h_I -> h_{I--}`.
pub fn shift_left_left() -> HaarShift {
    make_shift(0, 2, AlphaRule::LeftLeft).expect("valid")
}

pub fn haar_multiplier(pattern: Vec<f64>) -> Result<HaarShift> {
    make_shift(0, 0, AlphaRule::Multiplier(pattern))
}

pub fn random_shift(s: u32, t: u32, seed: u64) -> Result<HaarShift> {
    make_shift(s, t, AlphaRule::Random { seed })
}

/// Parses the CLI tokens: `hilbert`, `hilbert-adjoint`, `ll2`,
/// `multiplier:<+->...`, `random:S:T:SEED`.
pub fn parse_token(token: &str) -> Result<HaarShift> {
    match token {
        "hilbert" => return Ok(dyadic_hilbert()),
        "hilbert-adjoint" => return Ok(dyadic_hilbert_adjoint()),
        "ll2" => return Ok(shift_left_left()),
        _ => {}
    }
    if let Some(pattern) = token.strip_prefix("multiplier:") {
        let signs = pattern
            .chars()
            .map(|c| match c {
                '+' => Ok(1.0),
                '-' => Ok(-1.0),
                other => Err(Error::BadParameter(format!("bad multiplier sign {other:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        return haar_multiplier(signs);
    }
    if let Some(rest) = token.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() == 3 {
            let s = parts[0].parse().map_err(|_| Error::BadParameter(token.into()))?;
            let t = parts[1].parse().map_err(|_| Error::BadParameter(token.into()))?;
            let seed = parts[2].parse().map_err(|_| Error::BadParameter(token.into()))?;
            return random_shift(s, t, seed);
        }
    }
    Err(Error::BadParameter(format!("unknown shift token {token:?}")))
}

impl HaarShift {
    pub fn complexity(&self) -> (u32, u32) {
        (self.s, self.t)
    }

    pub fn total_complexity(&self) -> u32 {
        self.s + self.t
    }

    pub fn with_depth_cutoff(mut self, cutoff: u32) -> Self {
        self.depth_cutoff = Some(cutoff);
        self
    }

    pub fn adjoint(&self) -> HaarShift {
        let rule = match &self.rule {
            AlphaRule::Hilbert => AlphaRule::HilbertAdjoint,
            AlphaRule::HilbertAdjoint => AlphaRule::Hilbert,
            AlphaRule::LeftLeft => AlphaRule::LeftLeftAdjoint,
            AlphaRule::LeftLeftAdjoint => AlphaRule::LeftLeft,
            AlphaRule::Multiplier(p) => AlphaRule::Multiplier(p.clone()),
            AlphaRule::Explicit(map) => AlphaRule::Explicit(
                map.iter().map(|(&(i, m, n), &v)| ((i, n, m), v)).collect(),
            ),
            AlphaRule::Transposed(inner) => (**inner).clone(),
            other => AlphaRule::Transposed(Box::new(other.clone())),
        };
        HaarShift { s: self.t, t: self.s, rule, depth_cutoff: self.depth_cutoff }
    }

    /// All `(K, c_K)` of the output expansion `Tf = sum c_K h_K`.
    fn output_coefficients(
        &self,
        tree: &MeasureTree<f64>,
        f: &DyadicStepFunction<f64>,
    ) -> Result<BTreeMap<DyadicInterval, f64>> {
        let coeffs = analyze(tree, f)?;
        let mut out: BTreeMap<DyadicInterval, f64> = BTreeMap::new();
        for (j, entry) in &coeffs.entries {
            if j.level() < self.s {
                continue;
            }
            let base = j.ancestor(self.s)?;
            if let Some(cut) = self.depth_cutoff {
                if base.level() > cut {
                    continue;
                }
            }
            let m_off = offset_under(&base, j, self.s);
            let cf = entry.value();
            for n in 0..(1u128 << self.t) {
                let a = self.rule.alpha(base, m_off, n);
                if a == 0.0 {
                    continue;
                }
                let k = base.descendant(self.t, n)?;
                *out.entry(k).or_insert(0.0) += a * cf;
            }
        }
        out.retain(|_, v| *v != 0.0);
        Ok(out)
    }

    pub fn apply(
        &self,
        tree: &MeasureTree<f64>,
        f: &DyadicStepFunction<f64>,
    ) -> Result<DyadicStepFunction<f64>> {
        let out = self.output_coefficients(tree, f)?;
        synthesize_values(tree, &out)
    }

    /// `<Tf, g>` by direct coefficient pairing, an independent code path from
    /// `apply` + integration.
    pub fn bilinear(
        &self,
        tree: &MeasureTree<f64>,
        f: &DyadicStepFunction<f64>,
        g: &DyadicStepFunction<f64>,
    ) -> Result<f64> {
        let cf = analyze(tree, f)?;
        let cg = analyze(tree, g)?;
        let mut acc = 0.0;
        for (j, entry) in &cf.entries {
            if j.level() < self.s {
                continue;
            }
            let base = j.ancestor(self.s)?;
            if let Some(cut) = self.depth_cutoff {
                if base.level() > cut {
                    continue;
                }
            }
            let m_off = offset_under(&base, j, self.s);
            let fv = entry.value();
            for n in 0..(1u128 << self.t) {
                let a = self.rule.alpha(base, m_off, n);
                if a == 0.0 {
                    continue;
                }
                let k = base.descendant(self.t, n)?;
                if let Some(ge) = cg.entries.get(&k) {
                    acc += a * fv * ge.value();
                }
            }
        }
        Ok(acc)
    }

    /// `<Tf, w g>` for weighted probes.
    pub fn bilinear_weighted(
        &self,
        tree: &MeasureTree<f64>,
        f: &DyadicStepFunction<f64>,
        w: &Weight<f64>,
        g: &DyadicStepFunction<f64>,
    ) -> Result<f64> {
        self.bilinear(tree, f, &g.mul(w.as_fn()))
    }

    /// Largest observed ratio `||Tf||_p,w / ||f||_p,w` over seeded random
    /// probes. A lower bound for the operator norm, never the norm itself.
    pub fn empirical_opnorm(
        &self,
        tree: &MeasureTree<f64>,
        p: f64,
        w: Option<&Weight<f64>>,
        trials: u32,
        seed: u64,
    ) -> Result<f64> {
        if trials == 0 {
            return Err(Error::BadParameter("trials must be >= 1".into()));
        }
        let probe_depth = tree.depth_bound().saturating_sub(self.t + 1).min(9);
        let mut best = 0.0_f64;
        for trial in 0..trials {
            let mut rng = Prng::substream(seed, trial as u64);
            let f = random_step_function::<f64>(&mut rng, probe_depth, 14, -1.0, 1.0);
            let denom = f.lp_norm(tree, p, w)?;
            if denom < 1e-12 {
                continue;
            }
            let num = self.apply(tree, &f)?.lp_norm(tree, p, w)?;
            best = best.max(num / denom);
        }
        Ok(best)
    }
}

fn offset_under(base: &DyadicInterval, j: &DyadicInterval, s: u32) -> u128 {
    debug_assert!(base.contains(j) && j.level() == base.level() + s);
    if s >= 128 {
        j.index()
    } else {
        j.index() - (base.index() << s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{chain_interval, chain_sibling};
    use crate::haar::haar_function;

    fn iv(l: u32, i: u128) -> DyadicInterval {
        DyadicInterval::new(l, i).unwrap()
    }

    #[test]
    fn hilbert_maps_haar_to_child_difference() {
        let t = MeasureTree::<f64>::build_random_balanced(8, 5, 0.3).unwrap();
        let sh = dyadic_hilbert();
        for node in [DyadicInterval::ROOT, iv(2, 1), iv(3, 5)] {
            let h = haar_function(&t, node).unwrap();
            let out = sh.apply(&t, &h).unwrap();
            let (l, r) = node.children().unwrap();
            let expect = haar_function(&t, l)
                .unwrap()
                .sub(&haar_function(&t, r).unwrap());
            assert!(out.sup_diff(&expect) < 1e-10, "{node}");
        }
    }

    #[test]
    fn adjoint_maps_children_back() {
        let t = MeasureTree::<f64>::build_random_balanced(8, 5, 0.3).unwrap();
        let sh = dyadic_hilbert_adjoint();
        let node = iv(2, 3);
        let (l, r) = node.children().unwrap();
        let expect = haar_function(&t, node).unwrap();
        let out_l = sh.apply(&t, &haar_function(&t, l).unwrap()).unwrap();
        let out_r = sh.apply(&t, &haar_function(&t, r).unwrap()).unwrap();
        assert!(out_l.sup_diff(&expect) < 1e-10);
        assert!(out_r.sup_diff(&expect.scale(-1.0)) < 1e-10);
    }

    #[test]
    fn multiplier_with_unit_pattern_removes_the_mean() {
        let t = MeasureTree::<f64>::build_random_balanced(8, 19, 0.25).unwrap();
        let sh = haar_multiplier(vec![1.0]).unwrap();
        let mut rng = Prng::new(8);
        let f = random_step_function::<f64>(&mut rng, 7, 12, -1.0, 1.0);
        let out = sh.apply(&t, &f).unwrap();
        let mean = f.average(&t, &DyadicInterval::ROOT).unwrap();
        let expect = f.sub(&DyadicStepFunction::constant(mean));
        assert!(out.sup_diff(&expect) < 1e-12);
    }

    #[test]
    fn constant_functions_are_annihilated() {
        let t = MeasureTree::<f64>::build_lmp(10).unwrap();
        for sh in [dyadic_hilbert(), shift_left_left()] {
            let out = sh.apply(&t, &DyadicStepFunction::constant(4.0)).unwrap();
            assert!(out.is_zero());
        }
    }

    #[test]
    fn apply_is_linear() {
        let t = MeasureTree::<f64>::build_random_balanced(9, 2, 0.25).unwrap();
        let sh = random_shift(1, 1, 77).unwrap();
        let mut rng = Prng::new(21);
        let f = random_step_function::<f64>(&mut rng, 8, 10, -1.0, 1.0);
        let g = random_step_function::<f64>(&mut rng, 8, 10, -1.0, 1.0);
        let lhs = sh
            .apply(&t, &DyadicStepFunction::linear_combination(2.0, &f, -3.0, &g))
            .unwrap();
        let rhs = DyadicStepFunction::linear_combination(
            2.0,
            &sh.apply(&t, &f).unwrap(),
            -3.0,
            &sh.apply(&t, &g).unwrap(),
        );
        assert!(lhs.sup_diff(&rhs) < 1e-12);
    }

    #[test]
    fn bilinear_agrees_with_apply_then_inner() {
        let t = MeasureTree::<f64>::build_random_balanced(9, 13, 0.3).unwrap();
        for (s, tt, seed) in [(0u32, 1u32, 1u64), (1, 0, 2), (1, 1, 3), (0, 2, 4)] {
            let sh = random_shift(s, tt, seed).unwrap();
            for trial in 0..10u64 {
                let mut rng = Prng::substream(1000 + seed, trial);
                let f = random_step_function::<f64>(&mut rng, 7, 10, -1.0, 1.0);
                let g = random_step_function::<f64>(&mut rng, 7, 10, -1.0, 1.0);
                let direct = sh.bilinear(&t, &f, &g).unwrap();
                let via_apply = sh.apply(&t, &f).unwrap().inner(&g, &t).unwrap();
                assert!((direct - via_apply).abs() < 1e-12, "({s},{tt}) {direct} {via_apply}");
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let t = MeasureTree::<f64>::build_random_balanced(9, 29, 0.25).unwrap();
        for sh in [
            dyadic_hilbert(),
            shift_left_left(),
            random_shift(1, 1, 5).unwrap(),
            random_shift(2, 1, 6).unwrap(),
        ] {
            let adj = sh.adjoint();
            for trial in 0..10u64 {
                let mut rng = Prng::substream(500, trial);
                let f = random_step_function::<f64>(&mut rng, 7, 10, -1.0, 1.0);
                let g = random_step_function::<f64>(&mut rng, 7, 10, -1.0, 1.0);
                let a = sh.bilinear(&t, &f, &g).unwrap();
                let b = adj.bilinear(&t, &g, &f).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chain_bilinear_matches_hand_computed_value() {
        // f3 = 1_{I2^b}, g3 = 1_{I3^b}: <Sh f3, g3> = 1/12 + sqrt(1/8)/12
        let t = MeasureTree::<f64>::build_lmp(16).unwrap();
        let f3 = DyadicStepFunction::<f64>::indicator(chain_sibling(2).unwrap());
        let g3 = DyadicStepFunction::<f64>::indicator(chain_sibling(3).unwrap());
        let got = dyadic_hilbert().bilinear(&t, &f3, &g3).unwrap();
        let expect = 1.0 / 12.0 + 0.125f64.sqrt() / 12.0;
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.1127961).abs() < 1e-6);
    }

    #[test]
    fn disjoint_coefficient_supports_give_zero() {
        let t = MeasureTree::<f64>::build_uniform(8).unwrap();
        // branching entirely inside (2,0) vs inside (2,3): no shared base at
        // complexity (0,0)
        let f = DyadicStepFunction::<f64>::indicator(iv(3, 0))
            .sub(&DyadicStepFunction::indicator(iv(3, 1)));
        let g = DyadicStepFunction::<f64>::indicator(iv(3, 6))
            .sub(&DyadicStepFunction::indicator(iv(3, 7)));
        let sh = haar_multiplier(vec![1.0]).unwrap();
        assert_eq!(sh.bilinear(&t, &f, &g).unwrap(), 0.0);
    }

    #[test]
    fn l2_operator_ceiling_for_random_shifts() {
        let t = MeasureTree::<f64>::build_random_balanced(9, 37, 0.25).unwrap();
        for (s, tt) in [(0u32, 1u32), (1, 1), (0, 2), (2, 0)] {
            let ceiling =
                (((1u64 << (s + 1)) - 1) as f64 * ((1u64 << (tt + 1)) - 1) as f64).sqrt();
            for seed in 0..5u64 {
                let sh = random_shift(s, tt, seed).unwrap();
                let got = sh.empirical_opnorm(&t, 2.0, None, 20, 42).unwrap();
                assert!(got <= ceiling * (1.0 + 1e-9), "({s},{tt}) {got} > {ceiling}");
            }
        }
    }

    #[test]
    fn hilbert_l2_norm_at_most_sqrt_two() {
        let t = MeasureTree::<f64>::build_uniform(10).unwrap();
        let got = dyadic_hilbert().empirical_opnorm(&t, 2.0, None, 50, 7).unwrap();
        assert!(got <= 2.0f64.sqrt() + 1e-12);
        assert!(got > 0.5);
    }

    #[test]
    fn rejects_out_of_range_coefficients() {
        assert!(haar_multiplier(vec![1.5]).is_err());
        let mut map = BTreeMap::new();
        map.insert((chain_interval(1), 0u128, 0u128), -2.0);
        assert!(make_shift(0, 1, AlphaRule::Explicit(map)).is_err());
    }

    #[test]
    fn token_parsing() {
        assert_eq!(parse_token("hilbert").unwrap().complexity(), (0, 1));
        assert_eq!(parse_token("hilbert-adjoint").unwrap().complexity(), (1, 0));
        assert_eq!(parse_token("ll2").unwrap().complexity(), (0, 2));
        assert_eq!(parse_token("multiplier:+-").unwrap().complexity(), (0, 0));
        assert_eq!(parse_token("random:1:1:9").unwrap().complexity(), (1, 1));
        assert!(parse_token("nope").is_err());
        assert!(parse_token("multiplier:+x").is_err());
    }
}
