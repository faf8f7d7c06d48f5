//! G-CHANGE: an ordered flexible set `I = (i₁, …, i_k)` whose display forms
//! are decided in reverse order.
//!
//! With `R_t = Σ_{j<t} o_{i_j} + max^(k−t){a_i : i ∉ {i₁..i_t}}` the marginal
//! ad values are
//!
//! ```text
//! w_{i₁} = E_{a_{i₁}}[max^(k){a₁..a_n}] − R₁
//! w_{i_t} = E_{a_{i_t}}[max{o_{i_{t−1}} + R_{t−1}, w_{i_{t−1}} + R_{t−1}}] − R_t
//! ```
//!
//! Scanning `t = k, k−1, …, 1`, the first `t` with `o_{i_t} ≥ w_{i_t}` is `s*`
//! (0 if there is none). Items `i₁..i_{s*}` are shown organically and the
//! remaining `k − s*` slots go to the largest ad contributions outside that
//! prefix.
//!
//! Internally the recursion works with `V_t = w_{i_t} + R_t`, which satisfies
//! `V₁ = E[max^(k) a]` and `V_t = E_{a_{i_t}}[max{o_{i_{t−1}} + R_{t−1}, V_{t−1}}]`.
//! Each expectation is a Gauss–Legendre sum over quantile nodes of `a_{i_t}`,
//! so `V_t` costs `O(Q^t)`.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{Estimator, ObjectiveEstimate, SampleSet};
use crate::model::{contribution, kth_largest, Allocation, BidProfile, ContributionProfile, Instance, SortedPool};
use crate::payments::Mechanism;
use crate::quadrature::{NodeTable, QuadratureSpec};

/// Largest `Q^t` the recursion will evaluate.
pub const RECURSION_BUDGET: u64 = 1 << 21;

/// Largest number of ordered sets `gchange_select` will enumerate.
pub const CHANGE_ENUMERATION_LIMIT: u128 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangeConfig {
    order: Vec<usize>,
}

impl ChangeConfig {
    pub fn new(order: Vec<usize>, n: usize, k: usize) -> Result<Self> {
        let cfg = Self { order };
        cfg.validate(n, k)?;
        Ok(cfg)
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if k > n {
            return Err(Error::InvalidConfig(format!("G-CHANGE needs k <= n (n = {n}, k = {k})")));
        }
        if self.order.len() != k {
            return Err(Error::InvalidConfig(format!(
                "ordered set {:?} must have exactly k = {k} items",
                self.order
            )));
        }
        if let Some(&i) = self.order.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidConfig(format!("ordered set names item {i}, but n = {n}")));
        }
        if !self.order.iter().all_unique() {
            return Err(Error::InvalidConfig(format!("ordered set {:?} repeats an item", self.order)));
        }
        Ok(())
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

fn check_budget(nodes: usize, depth: usize) -> Result<()> {
    let cost = (nodes as u64).checked_pow(depth as u32);
    match cost {
        Some(c) if c <= RECURSION_BUDGET => Ok(()),
        _ => Err(Error::RecursionBudget { nodes, depth, budget: RECURSION_BUDGET }),
    }
}

/// The recursion bound to one instance, ordered set, and node table.
#[derive(Debug, Clone)]
pub struct ChangeEvaluator<'a> {
    order: &'a [usize],
    /// `excluded[t]` marks `i₁..i_t`.
    excluded: Vec<Vec<bool>>,
    organic: Vec<f64>,
    table: &'a NodeTable,
    k: usize,
}

impl<'a> ChangeEvaluator<'a> {
    pub fn new(cfg: &'a ChangeConfig, inst: &Instance, table: &'a NodeTable) -> Result<Self> {
        let (n, k) = (inst.len(), inst.slots());
        cfg.validate(n, k)?;
        check_budget(table.nodes(), k)?;
        let excluded = (0..=k)
            .map(|t| {
                let mut mask = vec![false; n];
                for &i in &cfg.order[..t] {
                    mask[i] = true;
                }
                mask
            })
            .collect();
        Ok(Self { order: &cfg.order, excluded, organic: inst.organic_contributions(), table, k })
    }

    fn item(&self, t: usize) -> usize {
        self.order[t - 1]
    }

    /// `Σ_{j<t} o_{i_j}`.
    fn organic_prefix(&self, t: usize) -> f64 {
        self.order[..t.saturating_sub(1)].iter().map(|&i| self.organic[i]).sum()
    }

    fn pool(&self, t: usize, a: &[f64]) -> SortedPool {
        let mask = &self.excluded[t];
        SortedPool::new(a.iter().zip(mask).filter(|(_, &ex)| !ex).map(|(&v, _)| v))
    }

    /// `R_t`.
    pub fn residual(&self, t: usize, a: &[f64]) -> f64 {
        self.organic_prefix(t) + self.pool(t, a).top(self.k - t)
    }

    /// `V_t = w_{i_t} + R_t`; `a[i_t]` (and earlier items of `I`) are integrated out.
    fn value(&self, t: usize, a: &mut [f64]) -> f64 {
        let item = self.item(t);
        let saved = a[item];
        let nodes = &self.table.values[item];
        let weights = &self.table.weights;
        // items outside {i₁..i_t}; fixed while a[item] varies
        let rest = self.pool(t, a);
        let total = if t == 1 {
            nodes.iter().zip(weights).map(|(&x, &w)| w * rest.top_with(self.k, x)).sum()
        } else {
            let prev = self.item(t - 1);
            let base = self.organic_prefix(t - 1) + self.organic[prev];
            let mut acc = 0.0;
            for (&x, &w) in nodes.iter().zip(weights) {
                a[item] = x;
                // R_{t−1} ranges over items outside {i₁..i_{t−1}}, which includes i_t
                let stop = base + rest.top_with(self.k - t + 1, x);
                acc += w * stop.max(self.value(t - 1, a));
            }
            acc
        };
        a[item] = saved;
        total
    }

    /// `w_{i_t}` at the realized contributions `a`.
    pub fn marginal(&self, t: usize, a: &[f64]) -> f64 {
        let mut scratch = a.to_vec();
        self.value(t, &mut scratch) - self.residual(t, a)
    }

    /// Reverse scan for the first `t` with `o_{i_t} ≥ w_{i_t}`; 0 if none.
    pub fn s_star(&self, a: &[f64]) -> usize {
        let mut scratch = a.to_vec();
        for t in (1..=self.k).rev() {
            let w = self.value(t, &mut scratch) - self.residual(t, a);
            if self.organic[self.item(t)] >= w {
                return t;
            }
        }
        0
    }

    pub fn allocate(&self, a: &[f64]) -> Allocation {
        let s = self.s_star(a);
        let n = a.len();
        let mut alloc = Allocation::empty(n);
        let prefix = &self.excluded[s];
        for &i in &self.order[..s] {
            alloc.organic[i] = true;
        }
        let pool: Vec<f64> = (0..n).filter(|&i| !prefix[i]).map(|i| a[i]).collect();
        let threshold = kth_largest(&pool, self.k - s + 1);
        for i in (0..n).filter(|&i| !prefix[i]) {
            alloc.ad[i] = a[i] > threshold;
        }
        alloc
    }

    /// `max{Σ_j o_{i_j}, w_{i_k} + Σ_{j<k} o_{i_j}}` at `a`; only the
    /// contributions of items outside `I` matter.
    pub fn objective_at(&self, a: &[f64]) -> f64 {
        let all_organic: f64 = self.order.iter().map(|&i| self.organic[i]).sum();
        let mut scratch = a.to_vec();
        all_organic.max(self.value(self.k, &mut scratch))
    }
}

fn checked_table(inst: &Instance, quad: &QuadratureSpec) -> Result<NodeTable> {
    check_budget(quad.nodes, inst.slots())?;
    Ok(NodeTable::new(inst, &quad.rule()?))
}

/// `R_t = Σ_{j<t} o_{i_j} + max^(k−t){a_i : i ∉ {i₁..i_t}}`.
pub fn residual_r(cfg: &ChangeConfig, t: usize, c: &ContributionProfile, k: usize) -> Result<f64> {
    cfg.validate(c.len(), k)?;
    if !(1..=k).contains(&t) {
        return Err(Error::Precondition(format!("t = {t} must lie in 1..={k}")));
    }
    let prefix: f64 = cfg.order[..t - 1].iter().map(|&i| c.organic[i]).sum();
    let rest: Vec<f64> = (0..c.len()).filter(|i| !cfg.order[..t].contains(i)).map(|i| c.ad[i]).collect();
    Ok(prefix + crate::model::top_k_sum(&rest, k - t))
}

/// `w_{i_t}` by nested quadrature at the realized contributions `c`.
pub fn marginal_w(
    cfg: &ChangeConfig,
    t: usize,
    c: &ContributionProfile,
    inst: &Instance,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(1..=inst.slots()).contains(&t) {
        return Err(Error::Precondition(format!("t = {t} must lie in 1..={}", inst.slots())));
    }
    let table = checked_table(inst, quad)?;
    Ok(ChangeEvaluator::new(cfg, inst, &table)?.marginal(t, &c.ad))
}

pub fn threshold_s_star(
    cfg: &ChangeConfig,
    c: &ContributionProfile,
    inst: &Instance,
    quad: &QuadratureSpec,
) -> Result<usize> {
    let table = checked_table(inst, quad)?;
    Ok(ChangeEvaluator::new(cfg, inst, &table)?.s_star(&c.ad))
}

pub fn gchange_i_allocate(
    cfg: &ChangeConfig,
    c: &ContributionProfile,
    inst: &Instance,
    quad: &QuadratureSpec,
) -> Result<Allocation> {
    let table = checked_table(inst, quad)?;
    Ok(ChangeEvaluator::new(cfg, inst, &table)?.allocate(&c.ad))
}

fn change_estimate(eval: &ChangeEvaluator<'_>, samples: &SampleSet, inst: &Instance) -> ObjectiveEstimate {
    let outside_empty = inst.len() == eval.k;
    if outside_empty || samples.is_empty() {
        // nothing random enters the formula
        let v = eval.objective_at(samples.ad_row(0));
        return ObjectiveEstimate { mean: v, se: 0.0, samples: samples.len(), seed: samples.seed() };
    }
    ObjectiveEstimate::from_values((0..samples.len()).map(|s| eval.objective_at(samples.ad_row(s))), samples.seed())
}

/// Monte Carlo over the contributions outside `I` of
/// `max{Σ_j o_{i_j}, w_{i_k} + Σ_{j<k} o_{i_j}}`, with `w_{i_k}` by quadrature.
pub fn gchange_i_objective(
    cfg: &ChangeConfig,
    inst: &Instance,
    estimator: &Estimator,
    quad: &QuadratureSpec,
) -> Result<ObjectiveEstimate> {
    let table = checked_table(inst, quad)?;
    let eval = ChangeEvaluator::new(cfg, inst, &table)?;
    let samples = SampleSet::draw(inst, estimator);
    Ok(change_estimate(&eval, &samples, inst))
}

fn permutation_count(n: usize, k: usize) -> u128 {
    (0..k).map(|j| (n - j) as u128).product()
}

/// Ordered set with the highest estimated objective; lexicographically first on ties.
pub fn gchange_select(inst: &Instance, estimator: &Estimator, quad: &QuadratureSpec) -> Result<ChangeConfig> {
    Ok(gchange_rank(inst, estimator, quad)?.0)
}

pub fn gchange_rank(
    inst: &Instance,
    estimator: &Estimator,
    quad: &QuadratureSpec,
) -> Result<(ChangeConfig, Vec<(ChangeConfig, ObjectiveEstimate)>)> {
    let (n, k) = (inst.len(), inst.slots());
    if k > n {
        return Err(Error::InvalidConfig(format!("G-CHANGE needs k <= n (n = {n}, k = {k})")));
    }
    let candidates = permutation_count(n, k);
    if candidates > CHANGE_ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard { candidates, limit: CHANGE_ENUMERATION_LIMIT });
    }
    let table = checked_table(inst, quad)?;
    let samples = SampleSet::draw(inst, estimator);
    let mut scored = Vec::new();
    for order in (0..n).permutations(k) {
        let cfg = ChangeConfig { order };
        let est = change_estimate(&ChangeEvaluator::new(&cfg, inst, &table)?, &samples, inst);
        scored.push((cfg, est));
    }
    let mut best = 0;
    for (j, (_, est)) in scored.iter().enumerate() {
        if est.mean > scored[best].1.mean {
            best = j;
        }
    }
    Ok((scored[best].0.clone(), scored))
}

/// G-CHANGE-I as a [`Mechanism`]; holds the node table for its instance.
#[derive(Debug, Clone)]
pub struct GChangeI {
    cfg: ChangeConfig,
    table: NodeTable,
    n: usize,
    label: String,
}

impl GChangeI {
    pub fn new(inst: &Instance, cfg: ChangeConfig, quad: &QuadratureSpec) -> Result<Self> {
        cfg.validate(inst.len(), inst.slots())?;
        let table = checked_table(inst, quad)?;
        let label = format!("gchange_i{:?}", cfg.order);
        Ok(Self { cfg, table, n: inst.len(), label })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn config(&self) -> &ChangeConfig {
        &self.cfg
    }

    pub fn evaluator<'a>(&'a self, inst: &Instance) -> Result<ChangeEvaluator<'a>> {
        if inst.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: inst.len() });
        }
        ChangeEvaluator::new(&self.cfg, inst, &self.table)
    }
}

impl Mechanism for GChangeI {
    fn label(&self) -> &str {
        &self.label
    }

    fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation> {
        let c = contribution(inst, bids)?;
        Ok(self.evaluator(inst)?.allocate(&c.ad))
    }
}

/// Contributions from bids, then G-CHANGE-I under `cfg`.
pub fn gchange_allocate(
    inst: &Instance,
    bids: &BidProfile,
    cfg: &ChangeConfig,
    quad: &QuadratureSpec,
) -> Result<Allocation> {
    gchange_i_allocate(cfg, &contribution(inst, bids)?, inst, quad)
}

/// G-CHANGE: the ordered set is chosen once from the priors.
pub fn gchange(inst: &Instance, estimator: &Estimator, quad: &QuadratureSpec) -> Result<GChangeI> {
    let cfg = gchange_select(inst, estimator, quad)?;
    Ok(GChangeI::new(inst, cfg, quad)?.with_label("gchange"))
}
