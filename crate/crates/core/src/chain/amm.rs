//! Constant-product pool with a 0.3% input fee.

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::amount::decimal;

pub const FEE_NUMERATOR: u32 = 997;
pub const FEE_DENOMINATOR: u32 = 1000;

/// `floor(a·997·r_out / (r_in·1000 + a·997))`. Returns zero when any input
/// is zero.
pub fn get_amount_out(a_in: &BigUint, r_in: &BigUint, r_out: &BigUint) -> BigUint {
    if a_in.is_zero() || r_in.is_zero() || r_out.is_zero() {
        return BigUint::zero();
    }
    let a_fee = a_in * FEE_NUMERATOR;
    (&a_fee * r_out) / (r_in * FEE_DENOMINATOR + &a_fee)
}

/// A pool between two currencies, `currency_a < currency_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmmPool {
    pub currency_a: String,
    pub currency_b: String,
    #[serde(with = "decimal")]
    pub reserve_a: BigUint,
    #[serde(with = "decimal")]
    pub reserve_b: BigUint,
}

impl AmmPool {
    pub fn reserve(&self, currency: &str) -> Option<&BigUint> {
        if currency == self.currency_a {
            Some(&self.reserve_a)
        } else if currency == self.currency_b {
            Some(&self.reserve_b)
        } else {
            None
        }
    }

    pub fn reserve_mut(&mut self, currency: &str) -> Option<&mut BigUint> {
        if currency == self.currency_a {
            Some(&mut self.reserve_a)
        } else if currency == self.currency_b {
            Some(&mut self.reserve_b)
        } else {
            None
        }
    }

    pub fn product(&self) -> BigUint {
        &self.reserve_a * &self.reserve_b
    }
}
