//! Integer scalars used by schedules and ball counts.
//!
//! Exact schedules live in `BigUint`, runnable ones in `u64`. Every closed-form
//! count is written once against [`Count`] and checked for overflow, so the
//! `u64` instantiation reports `None` where the big one keeps going.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

pub trait Count:
    Clone
    + Ord
    + Debug
    + Display
    + Integer
    + FromPrimitive
    + ToPrimitive
    + CheckedAdd
    + CheckedMul
    + CheckedSub
    + Send
    + Sync
    + 'static
{
    fn lift(v: u64) -> Self {
        <Self as FromPrimitive>::from_u64(v).expect("u64 fits every Count")
    }

    /// Decimal string, the serialized form of every count.
    fn to_decimal(&self) -> String {
        self.to_string()
    }

    fn parse_decimal(s: &str) -> Option<Self>;

    /// Number of bits in the binary representation.
    fn bit_len(&self) -> u64;
}

impl Count for u64 {
    fn parse_decimal(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn bit_len(&self) -> u64 {
        64 - u64::from(self.leading_zeros())
    }
}

impl Count for BigUint {
    fn parse_decimal(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn bit_len(&self) -> u64 {
        self.bits()
    }
}

pub fn c<N: Count>(v: u64) -> N {
    <N as Count>::lift(v)
}

pub fn checked_pow<N: Count>(base: &N, mut exp: u64) -> Option<N> {
    let mut acc = N::one();
    let mut b = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc.checked_mul(&b)?;
        }
        exp >>= 1;
        if exp > 0 {
            b = b.checked_mul(&b)?;
        }
    }
    Some(acc)
}

/// Binomial coefficient C(n, k) for small k.
pub fn binomial<N: Count>(n: &N, k: u64) -> Option<N> {
    if <N as Count>::lift(k) > *n {
        return Some(N::zero());
    }
    let mut acc = N::one();
    for i in 0..k {
        let num = n.checked_sub(&c(i))?;
        acc = acc.checked_mul(&num)?;
        acc = acc / c::<N>(i + 1);
    }
    Some(acc)
}

/// Smallest `x` in `[lo, ..)` with `pred(x)`, for monotone `pred`.
pub fn least_satisfying<N: Count>(lo: N, mut pred: impl FnMut(&N) -> Option<bool>) -> Option<N> {
    if pred(&lo)? {
        return Some(lo);
    }
    let mut step = N::one();
    let mut bad = lo.clone();
    let good = loop {
        let probe = lo.checked_add(&step)?;
        if pred(&probe)? {
            break probe;
        }
        bad = probe;
        step = step.checked_add(&step)?;
    };
    // invariant: pred(bad) false, pred(good) true
    let mut bad = bad;
    let mut good = good;
    while good.clone() - bad.clone() > N::one() {
        let mid = bad.clone() + (good.clone() - bad.clone()) / c::<N>(2);
        if pred(&mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

pub fn is_zero<N: Count>(n: &N) -> bool {
    n.is_zero()
}

pub fn one<N: Count>() -> N {
    N::one()
}
