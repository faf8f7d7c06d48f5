//! Monte Carlo estimators, quadrature oracles, and the bound checkers.
//!
//! Every estimator draws bid profiles from one ChaCha8 stream seeded by
//! [`Estimator::seed`], one uniform per item per profile in item order, so two
//! estimators with the same `(samples, seed)` see identical profiles. That is
//! what makes cross-mechanism comparisons use common random numbers.

use itertools::Itertools;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{contribution, displayed_value, top_k_sum, BidProfile, ContributionProfile, Instance};
use crate::payments::{outcome, Mechanism};
use crate::quadrature::{NodeTable, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimator {
    pub samples: usize,
    pub seed: u64,
}

impl Estimator {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples: samples.max(1), seed }
    }

    /// The estimator's bid profiles, in draw order.
    pub fn profiles<'a>(&self, inst: &'a Instance) -> impl Iterator<Item = BidProfile> + 'a {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.samples).map(move |_| BidProfile::sample(inst, &mut rng))
    }
}

/// Sample mean with its standard error `s/√N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ObjectiveEstimate {
    pub fn from_values(values: impl IntoIterator<Item = f64>, seed: u64) -> Self {
        // Welford
        let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for v in values {
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
        let se = if count > 1 { (m2 / (count - 1) as f64 / count as f64).sqrt() } else { 0.0 };
        Self { mean, se, samples: count, seed }
    }

    /// `√(se₁² + se₂²)`.
    pub fn combined_se(&self, other: &Self) -> f64 {
        self.se.hypot(other.se)
    }
}

/// A frozen batch of sampled profiles and their contributions.
#[derive(Debug, Clone)]
pub struct SampleSet {
    n: usize,
    seed: u64,
    bids: Vec<f64>,
    ad: Vec<f64>,
    organic: Vec<f64>,
}

impl SampleSet {
    pub fn draw(inst: &Instance, estimator: &Estimator) -> Self {
        let n = inst.len();
        let mut bids = Vec::with_capacity(n * estimator.samples);
        let mut ad = Vec::with_capacity(n * estimator.samples);
        for profile in estimator.profiles(inst) {
            for (item, &b) in inst.items().iter().zip(profile.as_slice()) {
                bids.push(b);
                ad.push(item.ad_contribution_unchecked(b));
            }
        }
        Self { n, seed: estimator.seed, bids, ad, organic: inst.organic_contributions() }
    }

    pub fn len(&self) -> usize {
        self.ad.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ad_row(&self, s: usize) -> &[f64] {
        &self.ad[s * self.n..(s + 1) * self.n]
    }

    pub fn bid_row(&self, s: usize) -> &[f64] {
        &self.bids[s * self.n..(s + 1) * self.n]
    }

    pub fn profiles(&self) -> impl Iterator<Item = ContributionProfile> + '_ {
        (0..self.len()).map(|s| ContributionProfile { ad: self.ad_row(s).to_vec(), organic: self.organic.clone() })
    }
}

/// `E[Σ a_i x_i + o_i y_i]` under mechanism `m`.
pub fn mc_objective<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    samples: usize,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    let est = Estimator::new(samples, seed);
    let mut values = Vec::with_capacity(est.samples);
    for bids in est.profiles(inst) {
        let alloc = m.allocate(inst, &bids)?;
        values.push(displayed_value(&alloc, &contribution(inst, &bids)?));
    }
    Ok(ObjectiveEstimate::from_values(values, seed))
}

/// Revenue measured two ways plus user experience.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueUe {
    /// `E[Σ p_i·x_i·α_i^A]` from critical-bid payments.
    pub revenue_payment: ObjectiveEstimate,
    /// `E[Σ φ_i(b_i)·x_i·α_i^A]`.
    pub revenue_virtual: ObjectiveEstimate,
    /// `E[Σ γ_i^A x_i + γ_i^O y_i]`.
    pub ue: ObjectiveEstimate,
    /// Per-profile difference of the two revenue paths.
    pub revenue_gap: ObjectiveEstimate,
}

impl RevenueUe {
    /// Whether the two revenue paths agree within `z` combined standard errors.
    pub fn paths_agree(&self, z: f64) -> bool {
        (self.revenue_payment.mean - self.revenue_virtual.mean).abs()
            <= z * self.revenue_payment.combined_se(&self.revenue_virtual)
    }
}

pub fn mc_revenue_ue<M: Mechanism + ?Sized>(m: &M, inst: &Instance, samples: usize, seed: u64) -> Result<RevenueUe> {
    let est = Estimator::new(samples, seed);
    let (mut pay, mut virt, mut ue) = (Vec::new(), Vec::new(), Vec::new());
    for bids in est.profiles(inst) {
        let out = outcome(m, inst, &bids)?;
        let (mut p, mut v, mut u) = (0.0, 0.0, 0.0);
        for (i, item) in inst.items().iter().enumerate() {
            if out.allocation.ad[i] {
                p += out.payments[i] * item.ctr_ad;
                v += item.dist.virtual_value_unchecked(bids.bid(i)) * item.ctr_ad;
                u += item.ue_ad;
            }
            if out.allocation.organic[i] {
                u += item.ue_org;
            }
        }
        pay.push(p);
        virt.push(v);
        ue.push(u);
    }
    let gap = pay.iter().zip(&virt).map(|(p, v)| p - v).collect_vec();
    Ok(RevenueUe {
        revenue_payment: ObjectiveEstimate::from_values(pay, seed),
        revenue_virtual: ObjectiveEstimate::from_values(virt, seed),
        ue: ObjectiveEstimate::from_values(ue, seed),
        revenue_gap: ObjectiveEstimate::from_values(gap, seed),
    })
}

/// `E[max^(k){k largest o's, a_1, …, a_n}]`, an upper bound on any feasible
/// mechanism's objective.
pub fn upper_bound_topk(inst: &Instance, samples: usize, seed: u64) -> ObjectiveEstimate {
    let k = inst.slots();
    let mut organic = inst.organic_contributions();
    organic.sort_by(|a, b| b.total_cmp(a));
    organic.truncate(k);
    let est = Estimator::new(samples, seed);
    let set = SampleSet::draw(inst, &est);
    let mut pool = organic.clone();
    let values = (0..set.len()).map(|s| {
        pool.truncate(organic.len());
        pool.extend_from_slice(set.ad_row(s));
        top_k_sum(&pool, k)
    });
    ObjectiveEstimate::from_values(values.collect_vec(), seed)
}

/// Optimal objective for three items and two slots.
///
/// For each ordering `(i₁, i₂, i₃)` evaluates
/// `E_{a₃}[max{o₁ + o₂, E_{a₂}[max{o₁ + max{a₂, a₃}, E_{a₁}[max^(2){a₁, a₂, a₃}]}]}]`
/// by three-level quadrature and returns the largest value.
pub fn oracle_2of3_optimal(inst: &Instance, quad: &QuadratureSpec) -> Result<f64> {
    if inst.len() != 3 || inst.slots() != 2 {
        return Err(Error::Precondition(format!(
            "the 2-of-3 oracle needs n = 3, k = 2 (got n = {}, k = {})",
            inst.len(),
            inst.slots()
        )));
    }
    let table = NodeTable::new(inst, &quad.rule()?);
    let o = inst.organic_contributions();
    let w = &table.weights;
    let best = (0..3)
        .permutations(3)
        .map(|p| {
            let (i1, i2, i3) = (p[0], p[1], p[2]);
            let mut outer = 0.0;
            for (q3, &a3) in table.values[i3].iter().enumerate() {
                let mut middle = 0.0;
                for (q2, &a2) in table.values[i2].iter().enumerate() {
                    let mut inner = 0.0;
                    for (q1, &a1) in table.values[i1].iter().enumerate() {
                        inner += w[q1] * top_k_sum(&[a1, a2, a3], 2);
                    }
                    middle += w[q2] * (o[i1] + a2.max(a3)).max(inner);
                }
                outer += w[q3] * (o[i1] + o[i2]).max(middle);
            }
            outer
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best)
}

fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

/// `C(n−k, k) / C(n, k)`, exactly.
pub fn combinatorial_ratio(n: u64, k: u64) -> Result<BigRational> {
    if 2 * k > n {
        return Err(Error::Precondition(format!("combinatorial ratio needs 2k <= n (n = {n}, k = {k})")));
    }
    Ok(BigRational::new(binomial(n - k, k), binomial(n, k)))
}

fn exact_eps(eps: f64) -> Result<BigRational> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} must lie in (0, 1]")));
    }
    BigRational::from_float(eps).ok_or_else(|| Error::Precondition(format!("eps = {eps} is not finite")))
}

/// Smallest `n` with `n ≥ k²/ε + k`.
pub fn near_optimality_threshold(k: u64, eps: f64) -> Result<u64> {
    let eps = exact_eps(eps)?;
    let k_r = BigRational::from_integer(BigInt::from(k));
    let bound = &k_r * &k_r / eps + k_r;
    bound
        .ceil()
        .to_integer()
        .to_u64()
        .ok_or_else(|| Error::Precondition("threshold does not fit in u64".into()))
}

/// `combinatorial_ratio(n, k) ≥ 1 − ε`, decided exactly.
pub fn meets_near_optimality(n: u64, k: u64, eps: f64) -> Result<bool> {
    let eps = exact_eps(eps)?;
    Ok(combinatorial_ratio(n, k)? >= BigRational::one() - eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStatisticReport {
    pub ok: bool,
    /// Smallest `lhs − rhs` over the grid.
    pub worst_margin: f64,
}

/// Left side of the order-statistic ratio inequality at `x`.
pub fn order_statistic_lhs(n: u64, k: u64, l: u64, x: f64) -> f64 {
    let tail = |m: u64| -> f64 {
        (1..=l)
            .map(|i| {
                let r = l - i;
                binomial(m, r).to_f64().unwrap() * x.powi((m - r) as i32) * (1.0 - x).powi(r as i32)
            })
            .sum()
    };
    (1.0 - tail(n - k)) / (1.0 - tail(n))
}

/// Checks `lhs(x) ≥ C(n−k, l)/C(n, l)` on `x = j/(x_grid + 1)`, `j = 1..=x_grid`.
pub fn order_statistic_check(n: u64, k: u64, l: u64, x_grid: usize) -> Result<OrderStatisticReport> {
    if !(1 <= l && l <= k && 2 * k <= n) {
        return Err(Error::Precondition(format!("need 1 <= l <= k and 2k <= n (n = {n}, k = {k}, l = {l})")));
    }
    let rhs = BigRational::new(binomial(n - k, l), binomial(n, l)).to_f64().unwrap();
    let worst = (1..=x_grid)
        .map(|j| order_statistic_lhs(n, k, l, j as f64 / (x_grid + 1) as f64) - rhs)
        .fold(f64::INFINITY, f64::min);
    Ok(OrderStatisticReport { ok: worst >= 0.0, worst_margin: worst })
}
