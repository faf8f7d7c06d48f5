//! Items, instances, bid and contribution profiles, allocations, and the
//! `max^(k)` operator.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::ValueDistribution;
use crate::error::{Error, Result};

/// Per-item parameters: click-through rates and user-experience values for
/// both display forms, plus the owner's value prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub ctr_ad: f64,
    pub ctr_org: f64,
    pub ue_ad: f64,
    pub ue_org: f64,
    pub dist: ValueDistribution,
}

impl ItemParams {
    pub fn validate(&self, index: usize) -> Result<()> {
        let err = |constraint| Err(Error::InvalidItem { index, constraint });
        if !(self.ctr_ad > 0.0 && self.ctr_ad <= 1.0) {
            return err("0 < ctr_ad <= 1");
        }
        if !(self.ctr_org > 0.0 && self.ctr_org <= 1.0) {
            return err("0 < ctr_org <= 1");
        }
        if self.ctr_ad >= self.ctr_org {
            return err("ctr_ad < ctr_org");
        }
        if !(self.ue_ad.is_finite() && self.ue_ad >= 0.0) {
            return err("ue_ad >= 0");
        }
        if !(self.ue_org.is_finite() && self.ue_ad <= self.ue_org) {
            return err("ue_ad <= ue_org");
        }
        Ok(())
    }

    /// Ad contribution `φ(b)·ctr_ad + ue_ad` at bid `b`.
    pub fn ad_contribution(&self, b: f64) -> Result<f64> {
        Ok(self.dist.virtual_value(b)? * self.ctr_ad + self.ue_ad)
    }

    pub(crate) fn ad_contribution_unchecked(&self, b: f64) -> f64 {
        self.dist.virtual_value_unchecked(b) * self.ctr_ad + self.ue_ad
    }

    /// Quantile of the induced ad-contribution distribution. The map from bid
    /// to contribution is monotone, so this is `a(F⁻¹(u))`.
    pub fn ad_contribution_quantile(&self, u: f64) -> f64 {
        self.ad_contribution_unchecked(self.dist.quantile_unchecked(u))
    }
}

/// `n` candidate items competing for `slots` homogeneous positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    items: Vec<ItemParams>,
    slots: usize,
}

impl Instance {
    pub fn new(items: Vec<ItemParams>, slots: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidInstance("at least one item is required".into()));
        }
        if slots == 0 {
            return Err(Error::InvalidInstance("slots must be at least 1".into()));
        }
        for (i, item) in items.iter().enumerate() {
            item.validate(i)?;
        }
        Ok(Self { items, slots })
    }

    pub fn items(&self) -> &[ItemParams] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &ItemParams {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn organic_contributions(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.ue_org).collect()
    }

    /// True when every item induces the same ad-contribution distribution.
    pub fn has_identical_priors(&self) -> bool {
        let first = &self.items[0];
        self.items
            .iter()
            .all(|it| it.dist == first.dist && it.ctr_ad == first.ctr_ad && it.ue_ad == first.ue_ad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidProfile(Vec<f64>);

impl BidProfile {
    pub fn new(inst: &Instance, bids: Vec<f64>) -> Result<Self> {
        if bids.len() != inst.len() {
            return Err(Error::LengthMismatch { expected: inst.len(), got: bids.len() });
        }
        for (item, &b) in inst.items().iter().zip(&bids) {
            if !item.dist.contains(b) {
                return Err(Error::OutsideSupport { value: b, lo: item.dist.lo(), hi: item.dist.hi() });
            }
        }
        Ok(Self(bids))
    }

    /// One independent draw from each item's prior.
    pub fn sample<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Self {
        Self(inst.items().iter().map(|it| it.dist.sample(rng)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bid(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Copy with item `i`'s bid replaced; `bid` must lie in that item's support.
    pub fn with_bid(&self, i: usize, bid: f64) -> Self {
        let mut bids = self.0.clone();
        bids[i] = bid;
        Self(bids)
    }
}

/// Realized contributions: `ad[i] = φ_i(b_i)·α_i^A + γ_i^A`, `organic[i] = γ_i^O`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionProfile {
    pub ad: Vec<f64>,
    pub organic: Vec<f64>,
}

impl ContributionProfile {
    pub fn len(&self) -> usize {
        self.ad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ad.is_empty()
    }
}

pub fn contribution(inst: &Instance, bids: &BidProfile) -> Result<ContributionProfile> {
    if bids.len() != inst.len() {
        return Err(Error::LengthMismatch { expected: inst.len(), got: bids.len() });
    }
    let ad = inst
        .items()
        .iter()
        .zip(bids.as_slice())
        .map(|(item, &b)| item.ad_contribution(b))
        .collect::<Result<Vec<_>>>()?;
    Ok(ContributionProfile { ad, organic: inst.organic_contributions() })
}

/// `ad[i]` is `x_i` (shown as an ad), `organic[i]` is `y_i` (shown organically).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub ad: Vec<bool>,
    pub organic: Vec<bool>,
}

impl Allocation {
    pub fn empty(n: usize) -> Self {
        Self { ad: vec![false; n], organic: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.ad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ad.is_empty()
    }

    pub fn displayed(&self) -> usize {
        self.ad.iter().chain(&self.organic).filter(|&&s| s).count()
    }

    /// Expected clicks per unit of value, `X_i = x_i·α_i^A + y_i·α_i^O`.
    pub fn click_rate(&self, inst: &Instance, i: usize) -> f64 {
        let item = inst.item(i);
        let mut x = 0.0;
        if self.ad[i] {
            x += item.ctr_ad;
        }
        if self.organic[i] {
            x += item.ctr_org;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeasibilityViolation {
    #[error("x_i + y_i <= 1 violated at i = {index}")]
    BothForms { index: usize },
    #[error("sum <= k violated: {used} displays for {slots} slots")]
    TooManyDisplays { used: usize, slots: usize },
    #[error("allocation vectors have lengths {ad} and {organic}")]
    Ragged { ad: usize, organic: usize },
}

pub fn validate_allocation(alloc: &Allocation, slots: usize) -> Result<(), FeasibilityViolation> {
    if alloc.ad.len() != alloc.organic.len() {
        return Err(FeasibilityViolation::Ragged { ad: alloc.ad.len(), organic: alloc.organic.len() });
    }
    if let Some(index) = alloc.ad.iter().zip(&alloc.organic).position(|(&x, &y)| x && y) {
        return Err(FeasibilityViolation::BothForms { index });
    }
    let used = alloc.displayed();
    if used > slots {
        return Err(FeasibilityViolation::TooManyDisplays { used, slots });
    }
    Ok(())
}

/// `Σ_i a_i·x_i + o_i·y_i` for a feasible allocation.
pub fn objective_of(alloc: &Allocation, c: &ContributionProfile, slots: usize) -> Result<f64> {
    if alloc.len() != c.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: alloc.len() });
    }
    validate_allocation(alloc, slots)?;
    Ok(displayed_value(alloc, c))
}

pub(crate) fn displayed_value(alloc: &Allocation, c: &ContributionProfile) -> f64 {
    let mut total = 0.0;
    for i in 0..alloc.len() {
        if alloc.ad[i] {
            total += c.ad[i];
        }
        if alloc.organic[i] {
            total += c.organic[i];
        }
    }
    total
}

/// Allocation plus per-click payments.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

/// `max^(k)`: sum of the `k` largest values.
///
/// A multiset with fewer than `k` values is treated as sorted and then
/// followed by empty slots worth 0, so `max^(3){−1, −2} = −3`.
pub fn top_k_sum(values: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k >= values.len() {
        return values.iter().sum();
    }
    let mut v = values.to_vec();
    v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    v[..k].iter().sum()
}

/// The `k`-th largest value (1-based) under the same empty-slot convention as
/// [`top_k_sum`]; positions beyond the multiset read 0.
///
/// `top_k_sum(s, k + 1) − top_k_sum(s, k) == kth_largest(s, k + 1)`.
pub fn kth_largest(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "kth_largest is 1-based");
    if k > values.len() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Sorted snapshot of a pool supporting `max^(m)(pool ∪ {x})` in O(1).
#[derive(Debug, Clone)]
pub(crate) struct SortedPool {
    sorted: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedPool {
    pub(crate) fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let sorted = sorted_desc(&values.into_iter().collect::<Vec<_>>());
        let mut prefix = Vec::with_capacity(sorted.len() + 1);
        prefix.push(0.0);
        for v in &sorted {
            prefix.push(prefix.last().unwrap() + v);
        }
        Self { sorted, prefix }
    }

    pub(crate) fn top(&self, m: usize) -> f64 {
        self.prefix[m.min(self.sorted.len())]
    }

    /// `top_k_sum(pool ∪ {x}, m)`.
    pub(crate) fn top_with(&self, m: usize, x: f64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        if self.sorted.len() >= m {
            self.prefix[m - 1] + x.max(self.sorted[m - 1])
        } else {
            self.prefix[self.sorted.len()] + x
        }
    }
}
