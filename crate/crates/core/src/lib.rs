//! Merging mechanisms that decide, per item, whether to show it in ad form or
//! organic form across a fixed number of display slots.
//!
//! The two families are [`fix`] (a fixed organic set chosen ahead of bidding)
//! and [`change`] (an ordered list of organic candidates whose prefix is
//! chosen from realized bids). Payments come from [`payments::critical_bid`],
//! expectations from [`evaluation`], and empirical property checks from
//! [`audit`].

pub mod audit;
pub mod change;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod fix;
pub mod model;
pub mod payments;
pub mod quadrature;

pub use change::{gchange, ChangeConfig, GChangeI};
pub use distributions::ValueDistribution;
pub use error::{Error, Result};
pub use evaluation::{Estimator, ObjectiveEstimate};
pub use fix::{gfix, FixConfig, GFixI};
pub use model::{Allocation, BidProfile, ContributionProfile, Instance, ItemParams};
pub use payments::Mechanism;
pub use quadrature::QuadratureSpec;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/fixed-set.md")]
    mod fixed_set {}
    #[doc = include_str!("../../../book/src/ordered-set.md")]
    mod ordered_set {}
    #[doc = include_str!("../../../book/src/payments.md")]
    mod payments {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/audits.md")]
    mod audits {}
}
