//! Bounded regular value distributions.
//!
//! Every family here has support `[lo, hi]` with `hi` finite and a virtual
//! value `φ(b) = b − (1 − F(b)) / f(b)` that is non-decreasing on the support.
//! Construction fails for parameter choices that break either property.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when inverting monotone functions by bisection.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

/// A decrease of `φ` larger than this on the regularity grid is a violation.
pub const REGULARITY_TOLERANCE: f64 = 1e-9;

const CONSTRUCTION_GRID: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    TruncatedExponential,
}

/// Wire form of a distribution, `{"kind": ..., "lo": ..., "hi": ..., "rate": ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

/// A prior over an owner's per-click value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub enum ValueDistribution {
    Uniform { lo: f64, hi: f64 },
    /// Exponential with the given rate, conditioned on `[lo, hi]`.
    TruncatedExponential { lo: f64, hi: f64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub ok: bool,
    /// Largest observed decrease of `φ` between consecutive grid points (0 if none).
    pub worst_violation: f64,
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidDistribution(format!("support [{lo}, {hi}] must be finite")));
    }
    if lo < 0.0 {
        return Err(Error::InvalidDistribution(format!("lo = {lo} must be non-negative")));
    }
    if hi <= lo {
        return Err(Error::InvalidDistribution(format!("hi = {hi} must exceed lo = {lo}")));
    }
    Ok(())
}

impl ValueDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        Self::Uniform { lo, hi }.ensure_regular()
    }

    pub fn truncated_exponential(lo: f64, hi: f64, rate: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidDistribution(format!("rate = {rate} must be positive")));
        }
        Self::TruncatedExponential { lo, hi, rate }.ensure_regular()
    }

    fn ensure_regular(self) -> Result<Self> {
        let report = self.check_regularity(CONSTRUCTION_GRID);
        if report.ok {
            Ok(self)
        } else {
            Err(Error::InvalidDistribution(format!(
                "virtual value decreases by {} (not regular)",
                report.worst_violation
            )))
        }
    }

    pub fn kind(&self) -> DistributionKind {
        match self {
            Self::Uniform { .. } => DistributionKind::Uniform,
            Self::TruncatedExponential { .. } => DistributionKind::TruncatedExponential,
        }
    }

    pub fn lo(&self) -> f64 {
        match *self {
            Self::Uniform { lo, .. } | Self::TruncatedExponential { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Self::Uniform { hi, .. } | Self::TruncatedExponential { hi, .. } => hi,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo() && v <= self.hi()
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lo() {
            return 0.0;
        }
        if v >= self.hi() {
            return 1.0;
        }
        1.0 - self.survival(v)
    }

    /// `1 − F(v)`, computed directly to avoid cancellation near `hi`.
    pub fn survival(&self, v: f64) -> f64 {
        if v <= self.lo() {
            return 1.0;
        }
        if v >= self.hi() {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo: _, hi } => (hi - v) / (hi - self.lo()),
            Self::TruncatedExponential { lo, hi, rate } => {
                let mass = -(-rate * (hi - lo)).exp_m1();
                ((-rate * (v - lo)).exp() - (-rate * (hi - lo)).exp()) / mass
            }
        }
    }

    /// Density on the closed support; 0 outside.
    pub fn pdf(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo, hi } => 1.0 / (hi - lo),
            Self::TruncatedExponential { lo, hi, rate } => {
                let mass = -(-rate * (hi - lo)).exp_m1();
                rate * (-rate * (v - lo)).exp() / mass
            }
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::ProbabilityDomain(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let v = match *self {
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::TruncatedExponential { lo, hi, rate } => {
                let mass = -(-rate * (hi - lo)).exp_m1();
                lo - (-u * mass).ln_1p() / rate
            }
        };
        v.clamp(self.lo(), self.hi())
    }

    /// Inverse-CDF draw from a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_unchecked(rng.gen::<f64>())
    }

    /// Myerson virtual value `b − (1 − F(b)) / f(b)`.
    pub fn virtual_value(&self, b: f64) -> Result<f64> {
        if !self.contains(b) {
            return Err(Error::OutsideSupport { value: b, lo: self.lo(), hi: self.hi() });
        }
        Ok(self.virtual_value_unchecked(b))
    }

    pub(crate) fn virtual_value_unchecked(&self, b: f64) -> f64 {
        match *self {
            Self::Uniform { lo: _, hi } => 2.0 * b - hi,
            Self::TruncatedExponential { .. } => b - self.survival(b) / self.pdf(b),
        }
    }

    /// Smallest bid whose virtual value reaches `w`.
    ///
    /// Saturates at `lo` when `w ≤ φ(lo)`. Returns `None` when `w > φ(hi)`, i.e.
    /// no bid in the support reaches it.
    pub fn inverse_virtual_value(&self, w: f64) -> Option<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        if w <= self.virtual_value_unchecked(lo) {
            return Some(lo);
        }
        if w > self.virtual_value_unchecked(hi) {
            return None;
        }
        match *self {
            Self::Uniform { hi, .. } => Some(((w + hi) / 2.0).clamp(lo, hi)),
            Self::TruncatedExponential { .. } => {
                let (mut below, mut above) = (lo, hi);
                while above - below > INVERSION_TOLERANCE * (hi - lo).max(1.0) * 1e-2 {
                    let mid = 0.5 * (below + above);
                    if mid <= below || mid >= above {
                        break;
                    }
                    if self.virtual_value_unchecked(mid) >= w {
                        above = mid;
                    } else {
                        below = mid;
                    }
                }
                Some(above)
            }
        }
    }

    /// Evaluates `φ` at `grid_size` quantile-equispaced points and looks for decreases.
    pub fn check_regularity(&self, grid_size: usize) -> RegularityReport {
        let grid = grid_size.max(2);
        let mut worst = 0.0_f64;
        let mut prev = self.virtual_value_unchecked(self.quantile_unchecked(0.0));
        for j in 1..grid {
            let u = j as f64 / (grid - 1) as f64;
            let cur = self.virtual_value_unchecked(self.quantile_unchecked(u));
            worst = worst.max(prev - cur);
            prev = cur;
        }
        RegularityReport { ok: worst <= REGULARITY_TOLERANCE, worst_violation: worst }
    }
}

impl TryFrom<DistributionSpec> for ValueDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec.kind {
            DistributionKind::Uniform => Self::uniform(spec.lo, spec.hi),
            DistributionKind::TruncatedExponential => {
                let rate = spec.rate.ok_or_else(|| {
                    Error::InvalidDistribution("truncated_exponential requires `rate`".into())
                })?;
                Self::truncated_exponential(spec.lo, spec.hi, rate)
            }
        }
    }
}

impl From<ValueDistribution> for DistributionSpec {
    fn from(d: ValueDistribution) -> Self {
        let rate = match d {
            ValueDistribution::TruncatedExponential { rate, .. } => Some(rate),
            ValueDistribution::Uniform { .. } => None,
        };
        Self { kind: d.kind(), lo: d.lo(), hi: d.hi(), rate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> ValueDistribution {
        ValueDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn texp() -> ValueDistribution {
        ValueDistribution::truncated_exponential(0.0, 2.0, 1.0).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(unit().cdf(0.25), 0.25);
        assert_eq!(unit().cdf(-1.0), 0.0);
        assert_eq!(texp().cdf(2.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(unit().quantile(0.5).unwrap(), 0.5);
        assert_eq!(ValueDistribution::uniform(2.0, 4.0).unwrap().quantile(0.25).unwrap(), 2.5);
        let closed_cdf = |v: f64| (1.0 - (-v).exp()) / (1.0 - (-2.0f64).exp());
        let expected = bisect(closed_cdf, 0.5, 0.0, 2.0);
        assert!((texp().quantile(0.5).unwrap() - expected).abs() < 1e-10);
        assert_eq!(texp().quantile(0.0).unwrap(), 0.0);
        assert_eq!(texp().quantile(1.0).unwrap(), 2.0);
    }

    #[test]
    fn quantile_rejects_bad_probability() {
        assert_eq!(unit().quantile(1.5), Err(Error::ProbabilityDomain(1.5)));
        assert!(unit().quantile(-0.1).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_unbiased() {
        let d = unit();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| d.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert!(draw(7).iter().all(|v| (0.0..=1.0).contains(v)));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn virtual_value_examples() {
        assert_eq!(unit().virtual_value(0.75).unwrap(), 0.5);
        assert_eq!(unit().virtual_value(0.5).unwrap(), 0.0);
        let d = ValueDistribution::uniform(0.0, 3.0).unwrap();
        assert_eq!(d.virtual_value(3.0).unwrap(), 3.0);
        assert!(matches!(unit().virtual_value(1.2), Err(Error::OutsideSupport { .. })));
    }

    #[test]
    fn truncated_exponential_virtual_value_matches_closed_form() {
        // φ(b) = b − (1 − e^{−λ(hi − b)}) / λ
        let d = ValueDistribution::truncated_exponential(0.5, 3.0, 1.7).unwrap();
        for j in 0..=20 {
            let b = 0.5 + 2.5 * j as f64 / 20.0;
            let closed = b - (1.0 - (-1.7 * (3.0 - b)).exp()) / 1.7;
            assert!((d.virtual_value(b).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_virtual_value_examples() {
        assert_eq!(unit().inverse_virtual_value(0.0), Some(0.5));
        assert_eq!(unit().inverse_virtual_value(-5.0), Some(0.0));
        assert_eq!(unit().inverse_virtual_value(1.5), None);
        let expected = bisect(|b| unit().virtual_value_unchecked(b), 0.2, 0.0, 1.0);
        assert!((unit().inverse_virtual_value(0.2).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.6).abs() < 1e-12);
    }

    #[test]
    fn regularity_reports() {
        assert!(unit().check_regularity(1000).ok);
        assert!(texp().check_regularity(1000).ok);
        let r = unit().check_regularity(2);
        assert!(r.ok);
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(ValueDistribution::uniform(1.0, 1.0).is_err());
        assert!(ValueDistribution::uniform(-1.0, 1.0).is_err());
        assert!(ValueDistribution::uniform(0.0, f64::INFINITY).is_err());
        assert!(ValueDistribution::truncated_exponential(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn wire_format() {
        let d: ValueDistribution =
            serde_json::from_str(r#"{"kind":"truncated_exponential","lo":0,"hi":2,"rate":1}"#).unwrap();
        assert_eq!(d, texp());
        let s = serde_json::to_string(&unit()).unwrap();
        assert_eq!(s, r#"{"kind":"uniform","lo":0.0,"hi":1.0}"#);
        assert!(serde_json::from_str::<ValueDistribution>(r#"{"kind":"truncated_exponential","lo":0,"hi":2}"#).is_err());
    }

    fn any_dist() -> impl Strategy<Value = ValueDistribution> {
        prop_oneof![
            (0.0..2.0f64, 0.1..5.0f64).prop_map(|(lo, w)| ValueDistribution::uniform(lo, lo + w).unwrap()),
            (0.0..2.0f64, 0.1..5.0f64, 0.05..4.0f64)
                .prop_map(|(lo, w, r)| ValueDistribution::truncated_exponential(lo, lo + w, r).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn cdf_inverts_quantile(d in any_dist(), u in 0.0..=1.0f64) {
            let v = d.quantile(u).unwrap();
            prop_assert!((d.cdf(v) - u).abs() <= 1e-10);
        }

        #[test]
        fn virtual_value_is_monotone(d in any_dist(), u in 0.0..=1.0f64, v in 0.0..=1.0f64) {
            let (b0, b1) = (d.quantile(u.min(v)).unwrap(), d.quantile(u.max(v)).unwrap());
            prop_assert!(d.virtual_value(b0).unwrap() <= d.virtual_value(b1).unwrap() + 1e-9);
        }

        #[test]
        fn inverse_virtual_value_round_trips(d in any_dist(), u in 0.0..=1.0f64) {
            let b = d.quantile(u).unwrap();
            let back = d.inverse_virtual_value(d.virtual_value(b).unwrap()).unwrap();
            prop_assert!((back - b).abs() <= 1e-8, "b = {b}, back = {back}");
        }
    }
}
