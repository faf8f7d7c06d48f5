//! G-FIX: every item is pinned to a single display form up front, then the
//! `k` largest contributions win.
//!
//! For a fixed organic set `I`, the candidate list is
//! `L = {o_i : i ∈ I} ∪ {a_i : i ∉ I}` and an entry is shown iff it strictly
//! exceeds the `(k+1)`-th largest entry of `L`. The selector enumerates every
//! `I` with `|I| ≤ k` and keeps the one with the highest estimated objective.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{Estimator, ObjectiveEstimate, SampleSet};
use crate::model::{contribution, kth_largest, Allocation, BidProfile, ContributionProfile, Instance};
use crate::payments::Mechanism;

/// Largest number of candidate sets `gfix_select` will enumerate.
pub const FIX_ENUMERATION_LIMIT: u128 = 1_000_000;

/// The organic-only set `I`, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixConfig {
    organic: Vec<usize>,
}

impl FixConfig {
    pub fn new(organic: impl IntoIterator<Item = usize>, n: usize, k: usize) -> Result<Self> {
        let cfg = Self { organic: organic.into_iter().sorted().collect() };
        cfg.validate(n, k)?;
        Ok(cfg)
    }

    /// `I = ∅`: a plain top-k ad auction.
    pub fn pure_ad() -> Self {
        Self { organic: Vec::new() }
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.organic.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("organic set {:?} repeats an item", self.organic)));
        }
        if let Some(&i) = self.organic.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidConfig(format!("organic set names item {i}, but n = {n}")));
        }
        if self.organic.len() > k {
            return Err(Error::InvalidConfig(format!(
                "organic set has {} items, more than k = {k}",
                self.organic.len()
            )));
        }
        Ok(())
    }

    pub fn organic_set(&self) -> &[usize] {
        &self.organic
    }

    pub fn contains(&self, i: usize) -> bool {
        self.organic.binary_search(&i).is_ok()
    }

    fn candidate_list(&self, c: &ContributionProfile) -> Vec<f64> {
        (0..c.len()).map(|i| if self.contains(i) { c.organic[i] } else { c.ad[i] }).collect()
    }
}

/// G-FIX-I allocation on realized contributions.
pub fn gfix_i_allocate(cfg: &FixConfig, c: &ContributionProfile, k: usize) -> Allocation {
    let list = cfg.candidate_list(c);
    let threshold = kth_largest(&list, k + 1);
    let mut alloc = Allocation::empty(c.len());
    for (i, &v) in list.iter().enumerate() {
        if v > threshold {
            if cfg.contains(i) {
                alloc.organic[i] = true;
            } else {
                alloc.ad[i] = true;
            }
        }
    }
    alloc
}

/// Objective of the G-FIX-I allocation: the sum of the displayed entries of
/// `L`. Equals `max^(k) L` whenever `n > k`.
fn fix_value(cfg: &FixConfig, c: &ContributionProfile, k: usize) -> f64 {
    let list = cfg.candidate_list(c);
    let threshold = kth_largest(&list, k + 1);
    list.iter().filter(|&&v| v > threshold).sum()
}

fn fix_estimate(cfg: &FixConfig, samples: &SampleSet, k: usize) -> ObjectiveEstimate {
    ObjectiveEstimate::from_values(samples.profiles().map(|c| fix_value(cfg, &c, k)), samples.seed())
}

/// Monte Carlo estimate of `E[max^(k) L]` for a fixed organic set.
pub fn gfix_i_objective(cfg: &FixConfig, inst: &Instance, estimator: &Estimator) -> Result<ObjectiveEstimate> {
    cfg.validate(inst.len(), inst.slots())?;
    let samples = SampleSet::draw(inst, estimator);
    Ok(fix_estimate(cfg, &samples, inst.slots()))
}

fn candidate_count(n: usize, k: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for j in 0..=k.min(n) {
        total += binom;
        binom = binom * (n - j) as u128 / (j + 1) as u128;
    }
    total
}

/// Every admissible organic set, ordered by size and then lexicographically.
pub fn fix_candidates(n: usize, k: usize) -> impl Iterator<Item = FixConfig> {
    (0..=k.min(n)).flat_map(move |size| (0..n).combinations(size).map(|organic| FixConfig { organic }))
}

/// Organic set with the highest estimated objective, all candidates scored on
/// one shared sample set. Ties go to the smaller, then lexicographically
/// smaller, set.
pub fn gfix_select(inst: &Instance, estimator: &Estimator) -> Result<FixConfig> {
    Ok(gfix_rank(inst, estimator)?.0)
}

/// Selected configuration plus the estimate of every candidate, in enumeration order.
pub fn gfix_rank(inst: &Instance, estimator: &Estimator) -> Result<(FixConfig, Vec<(FixConfig, ObjectiveEstimate)>)> {
    let (n, k) = (inst.len(), inst.slots());
    let candidates = candidate_count(n, k);
    if candidates > FIX_ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard { candidates, limit: FIX_ENUMERATION_LIMIT });
    }
    let samples = SampleSet::draw(inst, estimator);
    let scored: Vec<_> = fix_candidates(n, k).map(|cfg| {
        let est = fix_estimate(&cfg, &samples, k);
        (cfg, est)
    }).collect();
    let mut best = 0;
    for (j, (_, est)) in scored.iter().enumerate() {
        if est.mean > scored[best].1.mean {
            best = j;
        }
    }
    Ok((scored[best].0.clone(), scored))
}

/// Contributions from bids, then G-FIX-I under `cfg`.
pub fn gfix_allocate(inst: &Instance, bids: &BidProfile, cfg: &FixConfig) -> Result<Allocation> {
    cfg.validate(inst.len(), inst.slots())?;
    Ok(gfix_i_allocate(cfg, &contribution(inst, bids)?, inst.slots()))
}

/// G-FIX-I as a [`Mechanism`] with a fixed organic set.
#[derive(Debug, Clone)]
pub struct GFixI {
    cfg: FixConfig,
    label: String,
}

impl GFixI {
    pub fn new(cfg: FixConfig) -> Self {
        let label = if cfg.organic.is_empty() {
            "pure_ad".to_string()
        } else {
            format!("gfix_i{:?}", cfg.organic)
        };
        Self { cfg, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn config(&self) -> &FixConfig {
        &self.cfg
    }
}

impl Mechanism for GFixI {
    fn label(&self) -> &str {
        &self.label
    }

    fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation> {
        gfix_allocate(inst, bids, &self.cfg)
    }
}

/// G-FIX: the organic set is chosen once from the priors, never from bids.
pub fn gfix(inst: &Instance, estimator: &Estimator) -> Result<GFixI> {
    Ok(GFixI::new(gfix_select(inst, estimator)?).with_label("gfix"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::model::ItemParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(ad: &[f64], organic: &[f64]) -> ContributionProfile {
        ContributionProfile { ad: ad.to_vec(), organic: organic.to_vec() }
    }

    fn item(ctr_ad: f64, ue_ad: f64, ue_org: f64, dist: ValueDistribution) -> ItemParams {
        ItemParams { ctr_ad, ctr_org: 1.0, ue_ad, ue_org, dist }
    }

    fn unit() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn allocate_examples() {
        let cfg = FixConfig::new([0], 3, 2).unwrap();
        let a = gfix_i_allocate(&cfg, &profile(&[0.0, 0.5, 0.2], &[0.9, 0.0, 0.0]), 2);
        assert_eq!(a.organic, vec![true, false, false]);
        assert_eq!(a.ad, vec![false, true, false]);

        let a = gfix_i_allocate(&FixConfig::pure_ad(), &profile(&[3.0, 2.0, 1.0], &[0.0; 3]), 2);
        assert_eq!(a.ad, vec![true, true, false]);
        assert_eq!(a.organic, vec![false; 3]);

        let cfg = FixConfig::new([0, 1], 3, 2).unwrap();
        let a = gfix_i_allocate(&cfg, &profile(&[0.0, 0.0, 10.0], &[5.0, 4.0, 0.0]), 2);
        assert_eq!(a.organic, vec![true, false, false]);
        assert_eq!(a.ad, vec![false, false, true]);
    }

    #[test]
    fn top_k_selection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(3..8);
            let k = rng.gen_range(1..n);
            let ad: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = gfix_i_allocate(&FixConfig::pure_ad(), &profile(&ad, &vec![0.0; n]), k);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| ad[j].total_cmp(&ad[i]));
            for (rank, &i) in order.iter().enumerate() {
                assert_eq!(a.ad[i], rank < k);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(FixConfig::new([0, 1, 2], 3, 2).is_err());
        assert!(FixConfig::new([5], 3, 2).is_err());
        assert!(FixConfig::new([1, 1], 3, 2).is_err());
        assert_eq!(FixConfig::new([2, 0], 3, 2).unwrap().organic_set(), &[0, 2]);
    }

    #[test]
    fn objective_without_randomness_is_exact() {
        let items = vec![item(0.5, 0.0, 0.4, unit()), item(0.5, 0.0, 0.7, unit())];
        let inst = Instance::new(items, 2).unwrap();
        let est = gfix_i_objective(&FixConfig::new([0, 1], 2, 2).unwrap(), &inst, &Estimator::new(500, 1)).unwrap();
        assert!((est.mean - 1.1).abs() < 1e-12);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn objective_matches_single_item_integral() {
        let inst = Instance::new(vec![item(0.999, 0.0, 0.0, unit())], 1).unwrap();
        let est = gfix_i_objective(&FixConfig::pure_ad(), &inst, &Estimator::new(200_000, 5)).unwrap();
        // ∫₀¹ max(α(2b − 1), 0) db = α/4
        let exact = 0.999 / 4.0;
        assert!((est.mean - exact).abs() <= 3.0 * est.se, "{est:?}");
    }

    #[test]
    fn standard_error_shrinks_with_samples() {
        let inst = Instance::new(vec![item(0.5, 0.0, 0.2, unit()); 4], 2).unwrap();
        let cfg = FixConfig::new([1], 4, 2).unwrap();
        let ratios: Vec<f64> = (0..5)
            .map(|s| {
                let small = gfix_i_objective(&cfg, &inst, &Estimator::new(20_000, s)).unwrap();
                let large = gfix_i_objective(&cfg, &inst, &Estimator::new(40_000, s)).unwrap();
                large.se / small.se
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 0.5f64.sqrt()).abs() < 0.03, "{ratios:?}");
    }

    #[test]
    fn select_prefers_no_organic_when_organic_worthless() {
        // contributions are never negative on uniform(0.5, 1)
        let d = ValueDistribution::uniform(0.5, 1.0).unwrap();
        let inst = Instance::new(vec![item(0.4, 0.0, 0.0, d); 4], 2).unwrap();
        assert_eq!(gfix_select(&inst, &Estimator::new(2_000, 9)).unwrap(), FixConfig::pure_ad());
    }

    #[test]
    fn select_keeps_dominant_organic_item() {
        let items = vec![
            item(0.5, 0.1, 2.0, unit()),
            item(0.5, 0.1, 0.1, unit()),
            item(0.5, 0.0, 0.0, unit()),
            item(0.5, 0.2, 0.3, unit()),
        ];
        // max ad contribution is 0.5 + 0.2 < 2.0
        let inst = Instance::new(items, 2).unwrap();
        let cfg = gfix_select(&inst, &Estimator::new(5_000, 2)).unwrap();
        assert!(cfg.contains(0), "{cfg:?}");
        let (best, scored) = gfix_rank(&inst, &Estimator::new(5_000, 2)).unwrap();
        let brute = scored.iter().map(|(_, e)| e.mean).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(scored.iter().find(|(c, _)| *c == best).unwrap().1.mean, brute);
    }

    #[test]
    fn select_agrees_with_independent_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..3 {
            let items: Vec<_> = (0..3)
                .map(|_| {
                    let ue_ad = rng.gen_range(0.0..0.3);
                    item(rng.gen_range(0.2..0.8), ue_ad, ue_ad + rng.gen_range(0.0..0.8), unit())
                })
                .collect();
            let inst = Instance::new(items, 2).unwrap();
            let est = Estimator::new(4_000, 100 + trial);
            let chosen = gfix_select(&inst, &est).unwrap();
            let mut best: Option<(FixConfig, f64)> = None;
            for cfg in fix_candidates(3, 2) {
                let v = gfix_i_objective(&cfg, &inst, &est).unwrap().mean;
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((cfg, v));
                }
            }
            assert_eq!(chosen, best.unwrap().0);
        }
    }

    #[test]
    fn candidate_enumeration() {
        assert_eq!(candidate_count(4, 2), 1 + 4 + 6);
        assert_eq!(fix_candidates(4, 2).count(), 11);
        assert_eq!(fix_candidates(2, 5).count(), 4);
        let first: Vec<_> = fix_candidates(3, 1).map(|c| c.organic).collect();
        assert_eq!(first, vec![vec![], vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn guard_rejects_huge_enumeration() {
        let inst = Instance::new(vec![item(0.5, 0.0, 0.1, unit()); 40], 20).unwrap();
        assert!(matches!(gfix_select(&inst, &Estimator::new(10, 1)), Err(Error::EnumerationGuard { .. })));
    }

    #[test]
    fn allocate_composes_contribution() {
        let items = vec![
            item(0.5, 0.0, 0.9, unit()),
            item(0.5, 0.0, 0.0, unit()),
            item(0.5, 0.0, 0.0, unit()),
        ];
        let inst = Instance::new(items, 2).unwrap();
        let bids = BidProfile::new(&inst, vec![0.1, 1.0, 0.7]).unwrap();
        let a = gfix_allocate(&inst, &bids, &FixConfig::new([0], 3, 2).unwrap()).unwrap();
        assert_eq!(a.organic, vec![true, false, false]);
        assert_eq!(a.ad, vec![false, true, false]);
        let a = gfix_allocate(&inst, &bids, &FixConfig::pure_ad()).unwrap();
        assert_eq!(a.ad, vec![false, true, true]);
    }
}
