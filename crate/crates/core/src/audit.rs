//! Empirical property audits over sampled bid profiles.
//!
//! Violations are data: each audit returns a report listing every witness it
//! found, sorted by magnitude, instead of failing on the first one. Audits are
//! deterministic per seed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::Estimator;
use crate::model::{validate_allocation, BidProfile, Instance};
use crate::payments::Mechanism;

/// A misreport gaining more than this is an IC violation. Absorbs payment bisection error.
pub const IC_TOLERANCE: f64 = 1e-7;
/// A payment exceeding the bid by more than this is an IR violation.
pub const IR_TOLERANCE: f64 = 1e-9;
/// A drop in `X_i` larger than this along the own-bid grid is a monotonicity violation.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Ic,
    Ir,
    FormStability,
    Monotonicity,
    Feasibility,
}

impl Property {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ic => "ic",
            Self::Ir => "ir",
            Self::FormStability => "form_stability",
            Self::Monotonicity => "monotonicity",
            Self::Feasibility => "feasibility",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub profile: Vec<f64>,
    pub item: Option<usize>,
    pub misreport: Option<f64>,
    /// Utility gain, excess payment, or size of the drop; infinite when the
    /// payment itself is undefined.
    pub magnitude: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub mechanism: String,
    pub property: Property,
    /// Number of (profile, item) checks, or profiles for feasibility.
    pub trials: usize,
    pub violations: Vec<Violation>,
    pub max_violation: f64,
}

impl AuditReport {
    fn new(mechanism: &str, property: Property, trials: usize, mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
        let max_violation = violations.first().map_or(0.0, |v| v.magnitude);
        Self { mechanism: mechanism.to_string(), property, trials, violations, max_violation }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest witness, if any.
    pub fn witness(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Own-bid grid at equispaced quantiles, both support endpoints included.
fn own_bid_grid(inst: &Instance, i: usize, points: usize) -> Vec<f64> {
    let dist = &inst.item(i).dist;
    let points = points.max(2);
    (0..points).map(|j| dist.quantile_unchecked(j as f64 / (points - 1) as f64)).collect()
}

fn all_items(inst: &Instance) -> Vec<usize> {
    (0..inst.len()).collect()
}

struct Misreport {
    bid: f64,
    ad: bool,
    click_rate: f64,
}

fn evaluate<M: Mechanism + ?Sized>(m: &M, inst: &Instance, bids: &BidProfile, i: usize, b: f64) -> Result<Misreport> {
    let alloc = m.allocate(inst, &bids.with_bid(i, b))?;
    Ok(Misreport { bid: b, ad: alloc.ad[i], click_rate: alloc.click_rate(inst, i) })
}

/// Points just either side of every change in the display state between
/// neighbouring grid bids.
fn breakpoints<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    bids: &BidProfile,
    i: usize,
    grid: &[Misreport],
) -> Result<Vec<f64>> {
    let dist = &inst.item(i).dist;
    let eps = 1e-9 * (dist.hi() - dist.lo());
    let mut extra = Vec::new();
    for pair in grid.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        if left.ad == right.ad && left.click_rate == right.click_rate {
            continue;
        }
        let (mut a, mut b) = (left.bid, right.bid);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            let r = evaluate(m, inst, bids, i, mid)?;
            if r.ad == left.ad && r.click_rate == left.click_rate {
                a = mid;
            } else {
                b = mid;
            }
        }
        extra.push((a - eps).max(dist.lo()));
        extra.push(a);
        extra.push(b);
        extra.push((b + eps).min(dist.hi()));
    }
    Ok(extra)
}

/// Ex-post IC: no misreport on the grid (refined at breakpoints) beats truth.
pub fn audit_ic<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    profile_samples: usize,
    misreport_grid: usize,
    seed: u64,
) -> Result<AuditReport> {
    audit_ic_for(m, inst, &all_items(inst), profile_samples, misreport_grid, seed)
}

pub fn audit_ic_for<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    items: &[usize],
    profile_samples: usize,
    misreport_grid: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut trials = 0;
    for bids in Estimator::new(profile_samples, seed).profiles(inst) {
        for &i in items {
            trials += 1;
            let item = inst.item(i);
            let value = bids.bid(i);
            let mut points = own_bid_grid(inst, i, misreport_grid)
                .into_iter()
                .map(|b| evaluate(m, inst, &bids, i, b))
                .collect::<Result<Vec<_>>>()?;
            for b in breakpoints(m, inst, &bids, i, &points)? {
                points.push(evaluate(m, inst, &bids, i, b)?);
            }
            points.push(evaluate(m, inst, &bids, i, value)?);

            let utility = |r: &Misreport| -> Result<f64, Error> {
                let paid = if r.ad { m.payment(inst, &bids.with_bid(i, r.bid), i)? * item.ctr_ad } else { 0.0 };
                Ok(value * r.click_rate - paid)
            };
            let truthful = match utility(points.last().unwrap()) {
                Ok(u) => u,
                Err(e) => {
                    violations.push(Violation {
                        profile: bids.as_slice().to_vec(),
                        item: Some(i),
                        misreport: None,
                        magnitude: f64::INFINITY,
                        detail: format!("payment undefined: {e}"),
                    });
                    continue;
                }
            };
            let mut best: Option<(f64, f64)> = None;
            let mut failure = None;
            for r in &points[..points.len() - 1] {
                match utility(r) {
                    Ok(u) => {
                        if best.is_none_or(|(g, _)| u - truthful > g) {
                            best = Some((u - truthful, r.bid));
                        }
                    }
                    Err(e) => {
                        failure = Some((r.bid, e));
                        break;
                    }
                }
            }
            if let Some((bid, e)) = failure {
                violations.push(Violation {
                    profile: bids.as_slice().to_vec(),
                    item: Some(i),
                    misreport: Some(bid),
                    magnitude: f64::INFINITY,
                    detail: format!("payment undefined: {e}"),
                });
            } else if let Some((gain, bid)) = best {
                if gain > IC_TOLERANCE {
                    violations.push(Violation {
                        profile: bids.as_slice().to_vec(),
                        item: Some(i),
                        misreport: Some(bid),
                        magnitude: gain,
                        detail: format!("misreporting {bid} instead of {value} gains {gain}"),
                    });
                }
            }
        }
    }
    Ok(AuditReport::new(m.label(), Property::Ic, trials, violations))
}

/// IR: every displayed ad pays at most its bid.
pub fn audit_ir<M: Mechanism + ?Sized>(m: &M, inst: &Instance, samples: usize, seed: u64) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut trials = 0;
    for bids in Estimator::new(samples, seed).profiles(inst) {
        let alloc = m.allocate(inst, &bids)?;
        for i in 0..inst.len() {
            trials += 1;
            if !alloc.ad[i] {
                continue;
            }
            let (magnitude, detail) = match m.payment(inst, &bids, i) {
                Ok(p) if p <= bids.bid(i) + IR_TOLERANCE => continue,
                Ok(p) => (p - bids.bid(i), format!("pays {p} on bid {}", bids.bid(i))),
                Err(e) => (f64::INFINITY, format!("payment undefined: {e}")),
            };
            violations.push(Violation {
                profile: bids.as_slice().to_vec(),
                item: Some(i),
                misreport: None,
                magnitude,
                detail,
            });
        }
    }
    Ok(AuditReport::new(m.label(), Property::Ir, trials, violations))
}

/// Form stability: `y_i` does not move with the owner's own bid.
pub fn audit_form_stability<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    profile_samples: usize,
    own_bid_grid_points: usize,
    seed: u64,
) -> Result<AuditReport> {
    audit_form_stability_for(m, inst, &all_items(inst), profile_samples, own_bid_grid_points, seed)
}

pub fn audit_form_stability_for<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    items: &[usize],
    profile_samples: usize,
    own_bid_grid_points: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut trials = 0;
    for bids in Estimator::new(profile_samples, seed).profiles(inst) {
        for &i in items {
            trials += 1;
            let mut first: Option<(f64, bool)> = None;
            for b in own_bid_grid(inst, i, own_bid_grid_points) {
                let y = m.allocate(inst, &bids.with_bid(i, b))?.organic[i];
                match first {
                    None => first = Some((b, y)),
                    Some((b0, y0)) if y != y0 => {
                        violations.push(Violation {
                            profile: bids.as_slice().to_vec(),
                            item: Some(i),
                            misreport: Some(b),
                            magnitude: 1.0,
                            detail: format!("organic display is {y0} at bid {b0} but {y} at bid {b}"),
                        });
                        break;
                    }
                    Some(_) => {}
                }
            }
        }
    }
    Ok(AuditReport::new(m.label(), Property::FormStability, trials, violations))
}

/// Allocation monotonicity: `X_i = x_i·α^A + y_i·α^O` never drops as the own bid rises.
pub fn audit_monotonicity<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    profile_samples: usize,
    own_bid_grid_points: usize,
    seed: u64,
) -> Result<AuditReport> {
    audit_monotonicity_for(m, inst, &all_items(inst), profile_samples, own_bid_grid_points, seed)
}

pub fn audit_monotonicity_for<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    items: &[usize],
    profile_samples: usize,
    own_bid_grid_points: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut trials = 0;
    for bids in Estimator::new(profile_samples, seed).profiles(inst) {
        for &i in items {
            trials += 1;
            let mut prev: Option<(f64, f64)> = None;
            let mut worst: Option<(f64, f64, f64)> = None;
            for b in own_bid_grid(inst, i, own_bid_grid_points) {
                let x = m.allocate(inst, &bids.with_bid(i, b))?.click_rate(inst, i);
                if let Some((pb, px)) = prev {
                    let drop = px - x;
                    if drop > MONOTONICITY_TOLERANCE && worst.is_none_or(|(d, _, _)| drop > d) {
                        worst = Some((drop, pb, b));
                    }
                }
                prev = Some((b, x));
            }
            if let Some((drop, lower, higher)) = worst {
                violations.push(Violation {
                    profile: bids.as_slice().to_vec(),
                    item: Some(i),
                    misreport: Some(higher),
                    magnitude: drop,
                    detail: format!("click rate falls by {drop} between bids {lower} and {higher}"),
                });
            }
        }
    }
    Ok(AuditReport::new(m.label(), Property::Monotonicity, trials, violations))
}

pub fn audit_feasibility<M: Mechanism + ?Sized>(
    m: &M,
    inst: &Instance,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let mut violations = Vec::new();
    let mut trials = 0;
    for bids in Estimator::new(samples, seed).profiles(inst) {
        trials += 1;
        let alloc = m.allocate(inst, &bids)?;
        if let Err(v) = validate_allocation(&alloc, inst.slots()) {
            let item = match v {
                crate::model::FeasibilityViolation::BothForms { index } => Some(index),
                _ => None,
            };
            violations.push(Violation {
                profile: bids.as_slice().to_vec(),
                item,
                misreport: None,
                magnitude: alloc.displayed().saturating_sub(inst.slots()).max(1) as f64,
                detail: v.to_string(),
            });
        }
    }
    Ok(AuditReport::new(m.label(), Property::Feasibility, trials, violations))
}
