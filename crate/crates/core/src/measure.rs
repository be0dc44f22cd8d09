//! Lazily refinable atomless measures on the dyadic grid.
//!
//! A tree stores masses on a structural set of intervals (closed under
//! parent, sibling-complete) and extends them below the frontier by a
//! deterministic refinement rule, equal split by default. Masses are
//! therefore pure functions of the construction parameters; the memo is
//! only a cache and never influences results.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dyadic::{chain_interval, chain_sibling, DyadicInterval};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

enum Kind<S> {
    /// Lebesgue reference measure: `mu(I) = 2^-level`.
    Uniform,
    /// Explicit masses on a parent- and sibling-closed set, equal split below.
    Assigned(BTreeMap<DyadicInterval, S>),
    /// Seeded i.i.d. split fractions in `[theta, 1-theta]`.
    Random { seed: u64, theta: f64 },
}

pub struct MeasureTree<S> {
    kind: Kind<S>,
    depth_bound: u32,
    label: String,
    cache: RwLock<BTreeMap<DyadicInterval, S>>,
}

#[derive(Clone, Debug)]
pub struct BalanceReport {
    pub balanced_constant: f64,
    pub worst_interval: DyadicInterval,
    /// `(level, max over scanned I at that level of mu(parent)/mu(I))`.
    pub doubling_profile: Vec<(u32, f64)>,
    pub scan_depth: u32,
}

fn half_pow<S: Scalar>(l: u32) -> S {
    let half = S::ratio(1, 2);
    let mut out = S::one();
    for _ in 0..l {
        out = out * half.clone();
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform variate in `[0,1)` attached to a node, independent of
/// materialization order.
fn node_unit(seed: u64, iv: DyadicInterval) -> f64 {
    let lo = iv.index() as u64;
    let hi = (iv.index() >> 64) as u64;
    let mixed = splitmix64(
        seed ^ splitmix64(lo ^ splitmix64(hi ^ ((iv.level() as u64) << 32))),
    );
    (mixed >> 11) as f64 / (1u64 << 53) as f64
}

impl<S: Scalar> MeasureTree<S> {
    pub fn depth_bound(&self) -> u32 {
        self.depth_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn build_uniform(depth_bound: u32) -> Result<Self> {
        if depth_bound < 1 {
            return Err(Error::BadParameter("depth_bound must be >= 1".into()));
        }
        Ok(MeasureTree {
            kind: Kind::Uniform,
            depth_bound,
            label: "uniform".into(),
            cache: RwLock::new(BTreeMap::new()),
        })
    }

    /// The layered chain measure: `mu(I_k) = 1/(2k)`,
    /// `mu(I_k^b) = 1/(2k(k-1))`, uniform inside every `I_k^b`.
    pub fn build_lmp(depth_bound: u32) -> Result<Self> {
        if depth_bound < 2 {
            return Err(Error::BadParameter("depth_bound must be >= 2".into()));
        }
        let mut map = BTreeMap::new();
        map.insert(DyadicInterval::ROOT, S::one());
        map.insert(chain_interval(1), S::ratio(1, 2));
        map.insert(chain_sibling(1)?, S::ratio(1, 2));
        for k in 2..=(depth_bound as i64) {
            map.insert(chain_interval(k as u32), S::ratio(1, 2 * k));
            map.insert(chain_sibling(k as u32)?, S::ratio(1, 2 * k * (k - 1)));
        }
        Ok(MeasureTree {
            kind: Kind::Assigned(map),
            depth_bound,
            label: "lmp".into(),
            cache: RwLock::new(BTreeMap::new()),
        })
    }

    /// Dyadically doubling random measure; `theta = 1/2` reproduces the
    /// uniform masses exactly.
    pub fn build_random_balanced(depth_bound: u32, seed: u64, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 0.5) {
            return Err(Error::BadParameter(format!("theta {theta} outside (0, 1/2]")));
        }
        if depth_bound < 1 {
            return Err(Error::BadParameter("depth_bound must be >= 1".into()));
        }
        Ok(MeasureTree {
            kind: Kind::Random { seed, theta },
            depth_bound,
            label: format!("random(seed={seed},theta={theta})"),
            cache: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn from_assigned(map: BTreeMap<DyadicInterval, S>, depth_bound: u32, label: String) -> Result<Self> {
        validate_assigned(&map, depth_bound)?;
        Ok(MeasureTree { kind: Kind::Assigned(map), depth_bound, label, cache: RwLock::new(BTreeMap::new()) })
    }

    /// Left split fraction at `iv` for the random kind.
    fn split_fraction(&self, iv: DyadicInterval) -> S {
        match &self.kind {
            Kind::Random { seed, theta } => {
                let u = node_unit(*seed, iv);
                let th = S::from_f64(*theta);
                let spread = S::one() - th.clone() - th.clone();
                th + S::from_f64(u) * spread
            }
            _ => S::ratio(1, 2),
        }
    }

    pub fn mass(&self, iv: DyadicInterval) -> Result<S> {
        if iv.level() > self.depth_bound {
            return Err(Error::DepthExceeded { interval: iv, bound: self.depth_bound });
        }
        if let Some(hit) = self.cache.read().expect("mass cache").get(&iv) {
            return Ok(hit.clone());
        }
        let value = match &self.kind {
            Kind::Uniform => half_pow::<S>(iv.level()),
            Kind::Assigned(map) => {
                if let Some(v) = map.get(&iv) {
                    v.clone()
                } else {
                    // nearest assigned ancestor, equal split on the way down
                    let mut a = iv;
                    let mut steps = 0u32;
                    let base = loop {
                        a = a.parent().expect("root is always assigned");
                        steps += 1;
                        if let Some(v) = map.get(&a) {
                            break v.clone();
                        }
                    };
                    base * half_pow::<S>(steps)
                }
            }
            Kind::Random { .. } => {
                if iv.is_root() {
                    S::one()
                } else {
                    let p = iv.parent()?;
                    let parent_mass = self.mass(p)?;
                    let frac = self.split_fraction(p);
                    if iv.is_left_child() {
                        parent_mass * frac
                    } else {
                        parent_mass * (S::one() - frac)
                    }
                }
            }
        };
        self.cache
            .write()
            .expect("mass cache")
            .insert(iv, value.clone());
        Ok(value)
    }

    pub fn mass_f64(&self, iv: DyadicInterval) -> Result<f64> {
        Ok(self.mass(iv)?.to_f64())
    }

    /// `m(I) = mu(I_-) mu(I_+) / mu(I)`, defined for `level < depth_bound`.
    pub fn m_value(&self, iv: DyadicInterval) -> Result<S> {
        if iv.level() + 1 > self.depth_bound {
            return Err(Error::DepthExceeded { interval: iv, bound: self.depth_bound });
        }
        let (l, r) = iv.children()?;
        Ok(self.mass(l)? * self.mass(r)? / self.mass(iv)?)
    }

    pub fn m_value_f64(&self, iv: DyadicInterval) -> Result<f64> {
        Ok(self.m_value(iv)?.to_f64())
    }

    /// Intervals carrying non-generic structure up to `max_level`: scans only
    /// ever need these plus closed-form contributions of equal-split tails.
    pub fn structural_nodes(&self, max_level: u32) -> Result<Vec<DyadicInterval>> {
        let cap = max_level.min(self.depth_bound);
        match &self.kind {
            Kind::Uniform => Ok(vec![DyadicInterval::ROOT]),
            Kind::Assigned(map) => Ok(map.keys().filter(|i| i.level() <= cap).copied().collect()),
            Kind::Random { .. } => {
                if cap > 22 {
                    return Err(Error::BadParameter(format!(
                        "random-measure scan to level {cap} would enumerate 2^{cap} nodes"
                    )));
                }
                let mut out = Vec::new();
                for l in 0..=cap {
                    for i in 0..(1u128 << l) {
                        out.push(DyadicInterval::new(l, i)?);
                    }
                }
                Ok(out)
            }
        }
    }

    /// True if an equal-split, structurally generic subtree exists with its
    /// root at `level <= depth`.
    fn has_uniform_interior(&self, depth: u32) -> bool {
        match &self.kind {
            Kind::Uniform => true,
            Kind::Assigned(map) => map.iter().any(|(i, _)| {
                i.level() + 1 <= depth
                    && i.children()
                        .map(|(l, _)| !map.contains_key(&l))
                        .unwrap_or(false)
            }),
            // random splits run all the way to the depth bound
            Kind::Random { .. } => false,
        }
    }

    /// Scan of the balance ratios `m(I)/m(parent)` up to `depth`.
    pub fn balance_report(&self, depth: u32) -> Result<BalanceReport> {
        if depth + 1 > self.depth_bound {
            return Err(Error::DepthExceeded {
                interval: DyadicInterval::ROOT,
                bound: self.depth_bound,
            });
        }
        let mut best = 0.0_f64;
        let mut worst = DyadicInterval::ROOT;
        let mut profile: BTreeMap<u32, f64> = BTreeMap::new();
        if self.has_uniform_interior(depth) {
            best = 2.0;
            worst = DyadicInterval::new(1, 0)?;
        }
        for iv in self.structural_nodes(depth)? {
            if iv.level() >= 1 {
                let parent_ratio =
                    self.mass_f64(iv.parent()?)? / self.mass_f64(iv)?;
                let e = profile.entry(iv.level()).or_insert(0.0);
                *e = e.max(parent_ratio);
                let ratio = {
                    let mi = self.m_value_f64(iv)?;
                    let mp = self.m_value_f64(iv.parent()?)?;
                    (mi / mp).max(mp / mi)
                };
                if ratio > best {
                    best = ratio;
                    worst = iv;
                }
            }
        }
        let tails = self.has_uniform_interior(depth);
        let doubling_profile = (1..=depth)
            .map(|l| {
                let structural = profile.get(&l).copied().unwrap_or(0.0);
                (l, if tails { structural.max(2.0) } else { structural })
            })
            .collect();
        Ok(BalanceReport {
            balanced_constant: best,
            worst_interval: worst,
            doubling_profile,
            scan_depth: depth,
        })
    }
}

fn validate_assigned<S: Scalar>(map: &BTreeMap<DyadicInterval, S>, depth_bound: u32) -> Result<()> {
    if !map.contains_key(&DyadicInterval::ROOT) {
        return Err(Error::BadMeasureSpec("root mass missing".into()));
    }
    for (iv, mass) in map {
        if iv.level() > depth_bound {
            return Err(Error::BadMeasureSpec(format!("{iv} beyond depth bound {depth_bound}")));
        }
        if !(mass.clone() > S::zero()) {
            return Err(Error::BadMeasureSpec(format!("mass at {iv} not positive")));
        }
        if !iv.is_root() {
            if !map.contains_key(&iv.parent()?) {
                return Err(Error::BadMeasureSpec(format!("parent of {iv} missing")));
            }
            if !map.contains_key(&iv.sibling()?) {
                return Err(Error::BadMeasureSpec(format!("sibling of {iv} missing")));
            }
        }
        let (l, r) = iv.children()?;
        match (map.get(&l), map.get(&r)) {
            (Some(a), Some(b)) => {
                let sum = a.clone() + b.clone();
                let ok = if S::EXACT {
                    sum == mass.clone()
                } else {
                    (sum.to_f64() - mass.to_f64()).abs() <= 1e-12 * mass.to_f64().abs()
                };
                if !ok {
                    return Err(Error::BadMeasureSpec(format!("children of {iv} do not sum to its mass")));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::BadMeasureSpec(format!("only one child of {iv} assigned")));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON measure specification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureSpecFile {
    pub kind: String,
    pub depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<ExplicitMass>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitMass {
    pub interval: String,
    /// `"num/den"` or a plain integer string.
    pub mass: String,
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::BadMeasureSpec(format!("bad rational literal {s:?}"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let num = BigInt::from_str(n).map_err(|_| bad())?;
    let den = BigInt::from_str(d).map_err(|_| bad())?;
    if den.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(num, den))
}

impl MeasureSpecFile {
    pub fn build<S: Scalar>(&self) -> Result<MeasureTree<S>> {
        if let Some(explicit) = &self.explicit {
            let mut exact = BTreeMap::new();
            for e in explicit {
                let iv: DyadicInterval = e.interval.parse()?;
                let q = parse_rational(&e.mass)?;
                if exact.insert(iv, q).is_some() {
                    return Err(Error::BadMeasureSpec(format!("duplicate interval {iv}")));
                }
            }
            // validate additivity in exact arithmetic regardless of mode
            let as_rat: BTreeMap<_, _> = exact
                .iter()
                .map(|(k, v)| (*k, crate::scalar::Rat(v.clone())))
                .collect();
            validate_assigned(&as_rat, self.depth)?;
            let map = exact
                .into_iter()
                .map(|(k, v)| (k, scalar_from_rational::<S>(&v)))
                .collect();
            return MeasureTree::from_assigned(map, self.depth, "explicit".into());
        }
        match self.kind.as_str() {
            "uniform" => MeasureTree::build_uniform(self.depth),
            "lmp" => MeasureTree::build_lmp(self.depth),
            "random" => MeasureTree::build_random_balanced(
                self.depth,
                self.seed.unwrap_or(1),
                self.theta.unwrap_or(0.25),
            ),
            other => Err(Error::BadMeasureSpec(format!("unknown kind {other:?}"))),
        }
    }
}

fn scalar_from_rational<S: Scalar>(q: &BigRational) -> S {
    use num_traits::ToPrimitive;
    if let (Some(n), Some(d)) = (q.numer().to_i64(), q.denom().to_i64()) {
        S::ratio(n, d)
    } else {
        S::from_f64(q.to_f64().unwrap_or(f64::NAN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;

    fn iv(l: u32, i: u128) -> DyadicInterval {
        DyadicInterval::new(l, i).unwrap()
    }

    #[test]
    fn uniform_masses_and_m() {
        let t = MeasureTree::<f64>::build_uniform(8).unwrap();
        assert_eq!(t.mass(iv(3, 5)).unwrap(), 0.125);
        for l in 0..6 {
            for i in 0..(1u128 << l) {
                let q = iv(l, i);
                assert_eq!(t.m_value(q).unwrap(), t.mass(q).unwrap() / 4.0);
            }
        }
        assert!(t.mass(iv(9, 0)).is_err());
    }

    #[test]
    fn chain_masses_match_closed_forms() {
        let t = MeasureTree::<f64>::build_lmp(64).unwrap();
        for k in 1..=64u32 {
            let expect = 1.0 / (2.0 * k as f64);
            assert!((t.mass(chain_interval(k)).unwrap() - expect).abs() <= 1e-14);
            if k >= 2 {
                let expect_b = 1.0 / (2.0 * k as f64 * (k as f64 - 1.0));
                assert!((t.mass(chain_sibling(k).unwrap()).unwrap() - expect_b).abs() <= 1e-14);
            }
        }
        // doubling ratio along the chain: mu(parent)/mu(I_k^b) = k exactly
        for k in 2..=64u32 {
            let r = t.mass(chain_interval(k - 1)).unwrap() / t.mass(chain_sibling(k).unwrap()).unwrap();
            assert!((r - k as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn chain_masses_exact_in_rational_mode() {
        let t = MeasureTree::<Rat>::build_lmp(32).unwrap();
        assert_eq!(t.mass(chain_interval(5)).unwrap(), Rat::new(1, 10));
        assert_eq!(t.mass(chain_sibling(5).unwrap()).unwrap(), Rat::new(1, 40));
        // additivity is exact at every materialized node
        for k in 1..32u32 {
            let i = chain_interval(k);
            let (l, r) = i.children().unwrap();
            assert_eq!(t.mass(l).unwrap() + t.mass(r).unwrap(), t.mass(i).unwrap());
        }
        // m values from the worked examples
        assert_eq!(t.m_value(DyadicInterval::ROOT).unwrap(), Rat::new(1, 4));
        assert_eq!(t.m_value(chain_interval(1)).unwrap(), Rat::new(1, 8));
        assert_eq!(t.m_value(chain_interval(2)).unwrap(), Rat::new(1, 18));
        assert_eq!(t.m_value(chain_interval(3)).unwrap(), Rat::new(1, 32));
    }

    #[test]
    fn chain_refines_uniformly_inside_siblings() {
        let t = MeasureTree::<Rat>::build_lmp(16).unwrap();
        let b3 = chain_sibling(3).unwrap();
        let (l, r) = b3.children().unwrap();
        assert_eq!(t.mass(l).unwrap(), t.mass(r).unwrap());
        assert_eq!(t.m_value(b3).unwrap(), t.mass(b3).unwrap() * Rat::new(1, 4));
    }

    #[test]
    fn random_split_is_deterministic_and_additive() {
        let a = MeasureTree::<f64>::build_random_balanced(10, 7, 0.25).unwrap();
        let b = MeasureTree::<f64>::build_random_balanced(10, 7, 0.25).unwrap();
        for l in 0..=10u32 {
            for i in (0..(1u128 << l)).step_by(3) {
                let q = iv(l, i);
                assert_eq!(a.mass(q).unwrap(), b.mass(q).unwrap());
            }
        }
        let r = MeasureTree::<Rat>::build_random_balanced(8, 7, 0.25).unwrap();
        for l in 0..8u32 {
            for i in 0..(1u128 << l) {
                let q = iv(l, i);
                let (lc, rc) = q.children().unwrap();
                assert_eq!(r.mass(lc).unwrap() + r.mass(rc).unwrap(), r.mass(q).unwrap());
            }
        }
    }

    #[test]
    fn random_with_theta_half_is_uniform() {
        let t = MeasureTree::<f64>::build_random_balanced(8, 3, 0.5).unwrap();
        let u = MeasureTree::<f64>::build_uniform(8).unwrap();
        for l in 0..=8u32 {
            for i in 0..(1u128 << l) {
                assert_eq!(t.mass(iv(l, i)).unwrap(), u.mass(iv(l, i)).unwrap());
            }
        }
    }

    #[test]
    fn balance_reports() {
        let u = MeasureTree::<f64>::build_uniform(10).unwrap();
        let r = u.balance_report(8).unwrap();
        assert_eq!(r.balanced_constant, 2.0);

        let t = MeasureTree::<f64>::build_lmp(32).unwrap();
        let r = t.balance_report(24).unwrap();
        assert!(r.balanced_constant <= 4.0 + 1e-12, "{}", r.balanced_constant);
        for &(level, ratio) in &r.doubling_profile {
            if level >= 2 {
                assert!((ratio - level as f64).abs() < 1e-9, "level {level} ratio {ratio}");
            }
        }

        let rnd = MeasureTree::<f64>::build_random_balanced(9, 11, 0.25).unwrap();
        let r = rnd.balance_report(8).unwrap();
        assert!(r.balanced_constant <= 16.0);
    }

    #[test]
    fn explicit_spec_loader_checks_additivity() {
        let good = MeasureSpecFile {
            kind: "explicit".into(),
            depth: 4,
            seed: None,
            theta: None,
            explicit: Some(vec![
                ExplicitMass { interval: "0:0".into(), mass: "1".into() },
                ExplicitMass { interval: "1:0".into(), mass: "2/3".into() },
                ExplicitMass { interval: "1:1".into(), mass: "1/3".into() },
            ]),
        };
        let t = good.build::<Rat>().unwrap();
        assert_eq!(t.mass(iv(1, 0)).unwrap(), Rat::new(2, 3));
        assert_eq!(t.mass(iv(2, 1)).unwrap(), Rat::new(1, 3));

        let bad = MeasureSpecFile {
            explicit: Some(vec![
                ExplicitMass { interval: "0:0".into(), mass: "1".into() },
                ExplicitMass { interval: "1:0".into(), mass: "2/3".into() },
                ExplicitMass { interval: "1:1".into(), mass: "1/2".into() },
            ]),
            ..good.clone()
        };
        assert!(bad.build::<Rat>().is_err());
    }

    #[test]
    fn chain_mass_decays_to_zero() {
        let t = MeasureTree::<f64>::build_lmp(600).unwrap();
        let eps = 1e-3_f64;
        let k = (1.0 / (2.0 * eps)).ceil() as u32 + 1;
        assert!(t.mass(chain_interval(k)).unwrap() < eps);
    }
}
