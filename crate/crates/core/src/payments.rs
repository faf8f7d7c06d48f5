//! Critical-bid payments, full outcomes, and the payment-identity check.
//!
//! A mechanism is anything that maps an instance and a bid profile to an
//! allocation. Payments are derived generically: an ad pays the infimum bid at
//! which it would still be displayed, found by bisection on its own bid with
//! everyone else's held fixed. This is only well defined when the display
//! indicator is monotone in the owner's bid, so the bracketing step scans for
//! a shown-then-hidden pair and reports it as [`Error::NonMonotone`].

use crate::error::{Error, Result};
use crate::model::{Allocation, BidProfile, Instance, Outcome};

/// Relative bisection tolerance, scaled by the width of the item's support.
pub const DEFAULT_PAYMENT_TOLERANCE: f64 = 1e-9;
/// Smallest own-bid grid accepted by [`payment_identity_residual`].
pub const MIN_IDENTITY_GRID: usize = 100;

/// Coarse scan points used to bracket the display threshold before bisection.
const BRACKET_SCAN: usize = 8;

/// An allocation rule over bid profiles, with per-click payments.
pub trait Mechanism {
    fn label(&self) -> &str;

    fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation>;

    /// Per-click payment of item `i`, which is displayed as an ad at `bids`.
    fn payment(&self, inst: &Instance, bids: &BidProfile, i: usize) -> Result<f64> {
        let tol = DEFAULT_PAYMENT_TOLERANCE * (inst.item(i).dist.hi() - inst.item(i).dist.lo());
        critical_bid(self, inst, i, bids, tol)
    }
}

impl<M: Mechanism + ?Sized> Mechanism for &M {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation> {
        (**self).allocate(inst, bids)
    }

    fn payment(&self, inst: &Instance, bids: &BidProfile, i: usize) -> Result<f64> {
        (**self).payment(inst, bids, i)
    }
}

impl<M: Mechanism + ?Sized> Mechanism for Box<M> {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation> {
        (**self).allocate(inst, bids)
    }

    fn payment(&self, inst: &Instance, bids: &BidProfile, i: usize) -> Result<f64> {
        (**self).payment(inst, bids, i)
    }
}

fn shows_ad<M: Mechanism + ?Sized>(m: &M, inst: &Instance, bids: &BidProfile, i: usize, b: f64) -> Result<bool> {
    Ok(m.allocate(inst, &bids.with_bid(i, b))?.ad[i])
}

/// Infimum bid of item `i` at which its ad is displayed, others fixed at `bids`.
///
/// The item must be displayed at its own bid `bids[i]`, which bounds the search
/// from above. Returns the support's `lo` when the ad is shown even there.
pub fn critical_bid<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    i: usize,
    bids: &BidProfile,
    tol: f64,
) -> Result<f64> {
    let lo = inst.item(i).dist.lo();
    let top = bids.bid(i);
    if !shows_ad(m, inst, bids, i, top)? {
        return Err(Error::NotDisplayed { item: i, bid: top });
    }
    if shows_ad(m, inst, bids, i, lo)? {
        return Ok(lo);
    }

    // Scan (lo, top] for the first shown point; every point above it must show.
    let mut hidden = lo;
    let mut shown: Option<f64> = None;
    for j in 1..=BRACKET_SCAN {
        let b = lo + (top - lo) * j as f64 / BRACKET_SCAN as f64;
        let s = shows_ad(m, inst, bids, i, b)?;
        match (s, shown) {
            (true, None) => shown = Some(b),
            (false, None) => hidden = b,
            (false, Some(at)) => return Err(Error::NonMonotone { item: i, shown: at, hidden: b }),
            (true, Some(_)) => {}
        }
    }
    let mut shown = shown.unwrap_or(top);

    let tol = tol.max(f64::EPSILON * top.abs().max(1.0));
    while shown - hidden > tol {
        let mid = 0.5 * (hidden + shown);
        if shows_ad(m, inst, bids, i, mid)? {
            shown = mid;
        } else {
            hidden = mid;
        }
    }
    Ok(shown)
}

/// Allocation plus payments: displayed ads pay via [`Mechanism::payment`],
/// everything else pays 0.
pub fn outcome<M: Mechanism + ?Sized>(m: &M, inst: &Instance, bids: &BidProfile) -> Result<Outcome> {
    let allocation = m.allocate(inst, bids)?;
    let payments = (0..inst.len())
        .map(|i| if allocation.ad[i] { m.payment(inst, bids, i) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome { allocation, payments })
}

/// `|P_i(b) − (b_i·X_i(b) − ∫_lo^{b_i} X_i(t, b₋ᵢ) dt − U_i(lo))|` where
/// `P_i = p_i·x_i·α_i^A` and `U_i(lo) = lo·X_i(lo) − P_i(lo)` is the utility of
/// the lowest type (zero when `lo = 0`).
///
/// `X_i` is a step function of the own bid. It is sampled on `grid` points;
/// every change between neighbours is localized by bisection and the integral
/// is then summed exactly over the constant pieces.
pub fn payment_identity_residual<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    i: usize,
    bids: &BidProfile,
    grid: usize,
) -> Result<f64> {
    if grid < MIN_IDENTITY_GRID {
        return Err(Error::Precondition(format!("identity grid must have at least {MIN_IDENTITY_GRID} points (got {grid})")));
    }
    let item = inst.item(i);
    let lo = item.dist.lo();
    let bid = bids.bid(i);
    let charged = |b: &BidProfile| -> Result<(f64, f64)> {
        let alloc = m.allocate(inst, b)?;
        let paid = if alloc.ad[i] { m.payment(inst, b, i)? * item.ctr_ad } else { 0.0 };
        Ok((alloc.click_rate(inst, i), paid))
    };
    let (rate, paid) = charged(bids)?;
    let (lo_rate, lo_paid) = charged(&bids.with_bid(i, lo))?;
    let lowest_utility = lo * lo_rate - lo_paid;

    let click_rate = |t: f64| -> Result<f64> { Ok(m.allocate(inst, &bids.with_bid(i, t))?.click_rate(inst, i)) };
    let jump_tol = 1e-13 * (item.dist.hi() - lo).max(1.0);
    let mut integral = 0.0;
    let mut left = lo;
    let mut left_rate = click_rate(lo)?;
    for j in 1..=grid {
        let t = lo + (bid - lo) * j as f64 / grid as f64;
        let rate = click_rate(t)?;
        if rate == left_rate {
            integral += left_rate * (t - left);
        } else {
            // single jump assumed inside (left, t]
            let (mut a, mut b) = (left, t);
            while b - a > jump_tol {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if click_rate(mid)? == left_rate {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            integral += left_rate * (b - left) + rate * (t - b);
        }
        left = t;
        left_rate = rate;
    }
    let identity = bid * rate - integral - lowest_utility;
    Ok((paid - identity).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ValueDistribution;
    use crate::fix::{FixConfig, GFixI};
    use crate::model::ItemParams;

    fn unit_item(ue_org: f64) -> ItemParams {
        ItemParams {
            ctr_ad: 0.999,
            ctr_org: 1.0,
            ue_ad: 0.0,
            ue_org,
            dist: ValueDistribution::uniform(0.0, 1.0).unwrap(),
        }
    }

    /// Item 0 organic-only with o = 0.9; items 1, 2 ads with a = φ(b)·α ≈ 2b − 1.
    fn gfix_example() -> (Instance, GFixI) {
        let mut items = vec![unit_item(0.9), unit_item(0.0), unit_item(0.0)];
        for it in &mut items[1..] {
            it.ctr_ad = 0.5;
        }
        // a_i = 0.5·(2b − 1); a_2 = 0.2 needs b_2 = 0.7
        let inst = Instance::new(items, 2).unwrap();
        let m = GFixI::new(FixConfig::new([0], 3, 2).unwrap());
        (inst, m)
    }

    #[test]
    fn critical_bid_matches_closed_form_threshold() {
        let (inst, m) = gfix_example();
        let bids = BidProfile::new(&inst, vec![0.3, 0.9, 0.7]).unwrap();
        // display needs 0.5·(2b − 1) > 0.5·(2·0.7 − 1) = 0.2, i.e. b > 0.7
        let p = critical_bid(&m, &inst, 1, &bids, 1e-12).unwrap();
        assert!((p - 0.7).abs() < 1e-9, "{p}");
    }

    #[test]
    fn critical_bid_respects_reserve_and_support_bottom() {
        let inst = Instance::new(vec![unit_item(0.0)], 2).unwrap();
        let m = GFixI::new(FixConfig::pure_ad());
        let bids = BidProfile::new(&inst, vec![0.8]).unwrap();
        // n ≤ k: reserve at contribution 0, so shown iff 2b − 1 > 0
        assert!((critical_bid(&m, &inst, 0, &bids, 1e-12).unwrap() - 0.5).abs() < 1e-9);

        let mut item = unit_item(0.0);
        item.dist = ValueDistribution::uniform(0.6, 1.0).unwrap();
        let inst = Instance::new(vec![item], 1).unwrap();
        let bids = BidProfile::new(&inst, vec![0.8]).unwrap();
        assert_eq!(critical_bid(&m, &inst, 0, &bids, 1e-12).unwrap(), 0.6);
    }

    #[test]
    fn second_price_recovery() {
        let mut item = unit_item(0.0);
        item.ctr_ad = 0.5;
        let inst = Instance::new(vec![item, item], 1).unwrap();
        let m = GFixI::new(FixConfig::pure_ad());
        let bids = BidProfile::new(&inst, vec![0.83, 0.61]).unwrap();
        let out = outcome(&m, &inst, &bids).unwrap();
        assert_eq!(out.allocation.ad, vec![true, false]);
        assert!((out.payments[0] - 0.61).abs() < 1e-9);
        assert_eq!(out.payments[1], 0.0);
    }

    #[test]
    fn not_displayed_is_an_error() {
        let (inst, m) = gfix_example();
        let bids = BidProfile::new(&inst, vec![0.3, 0.1, 0.7]).unwrap();
        assert!(matches!(critical_bid(&m, &inst, 1, &bids, 1e-12), Err(Error::NotDisplayed { item: 1, .. })));
    }

    #[test]
    fn outcome_examples() {
        let (inst, m) = gfix_example();
        let bids = BidProfile::new(&inst, vec![0.3, 0.9, 0.7]).unwrap();
        let out = outcome(&m, &inst, &bids).unwrap();
        assert_eq!(out.allocation.organic, vec![true, false, false]);
        assert_eq!(out.allocation.ad, vec![false, true, false]);
        assert_eq!(out.payments[0], 0.0);
        assert!((out.payments[1] - 0.7).abs() < 1e-8);
        assert_eq!(out.payments[2], 0.0);

        let inst_low = Instance::new(vec![unit_item(0.0), unit_item(0.0)], 2).unwrap();
        let low = BidProfile::new(&inst_low, vec![0.3, 0.45]).unwrap();
        let out = outcome(&GFixI::new(FixConfig::pure_ad()), &inst_low, &low).unwrap();
        assert_eq!(out.allocation.displayed(), 0);
        assert!(out.payments.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn payment_identity_examples() {
        let (inst, m) = gfix_example();
        let bids = BidProfile::new(&inst, vec![0.3, 0.9, 0.7]).unwrap();
        // P = 0.7·α; RHS = 0.9·α − (0.9 − 0.7)·α
        assert!(payment_identity_residual(&m, &inst, 1, &bids, 10_000).unwrap() <= 1e-6);
        // never displayed on [0, b]
        let low = BidProfile::new(&inst, vec![0.3, 0.6, 0.7]).unwrap();
        assert_eq!(payment_identity_residual(&m, &inst, 1, &low, 100).unwrap(), 0.0);
        // organic item: X constant in own bid, pays nothing
        assert!(payment_identity_residual(&m, &inst, 0, &bids, 100).unwrap() < 1e-12);
        assert!(matches!(payment_identity_residual(&m, &inst, 0, &bids, 99), Err(Error::Precondition(_))));
    }

    #[test]
    fn payment_identity_with_positive_lowest_bid() {
        let shifted = |ue_org| ItemParams { dist: ValueDistribution::uniform(0.4, 1.4).unwrap(), ..unit_item(ue_org) };
        let mut items = vec![shifted(0.9), shifted(0.0), shifted(0.0)];
        items[1].ctr_ad = 0.5;
        items[2].ctr_ad = 0.5;
        let inst = Instance::new(items, 2).unwrap();
        let m = GFixI::new(FixConfig::new([0], 3, 2).unwrap());
        let bids = BidProfile::new(&inst, vec![0.5, 1.3, 0.6]).unwrap();
        // organic owner keeps utility lo·α^O at the bottom of the support
        assert!(payment_identity_residual(&m, &inst, 0, &bids, 100).unwrap() < 1e-12);
        assert!(payment_identity_residual(&m, &inst, 1, &bids, 10_000).unwrap() <= 1e-6);
    }

    struct Flicker;

    impl Mechanism for Flicker {
        fn label(&self) -> &str {
            "flicker"
        }

        fn allocate(&self, inst: &Instance, bids: &BidProfile) -> Result<Allocation> {
            let mut a = Allocation::empty(inst.len());
            let b = bids.bid(0);
            a.ad[0] = (0.2..0.4).contains(&b) || b > 0.8;
            Ok(a)
        }
    }

    #[test]
    fn non_monotone_indicator_is_reported() {
        let inst = Instance::new(vec![unit_item(0.0)], 1).unwrap();
        let bids = BidProfile::new(&inst, vec![0.9]).unwrap();
        let err = critical_bid(&Flicker, &inst, 0, &bids, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { item: 0, .. }), "{err}");
    }
}
