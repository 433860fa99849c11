//! Integer factorization for moduli up to 2^63.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const MAX_N: u64 = 1 << 63;

/// Prime factorization `n = prod p^e`, keyed by prime.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentVector {
    pub entries: BTreeMap<u64, u32>,
}

impl ExponentVector {
    /// Rebuild the integer; `None` on overflow.
    pub fn reconstruct(&self) -> Option<u64> {
        let mut acc: u64 = 1;
        for (&p, &e) in &self.entries {
            acc = acc.checked_mul(p.checked_pow(e)?)?;
        }
        Some(acc)
    }

    pub fn exponent(&self, p: u64) -> u32 {
        self.entries.get(&p).copied().unwrap_or(0)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Pollard-Brent; returns a nontrivial factor of the odd composite `n`.
fn pollard_brent(n: u64) -> u64 {
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut y, m) = (2u64, 128u64);
        let (mut g, mut r, mut q) = (1u64, 1u64, 1u64);
        let (mut x, mut ys) = (0u64, 0u64);
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..m.min(r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = gcd(q, n);
                k += m;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = gcd(x.abs_diff(ys), n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
        c += 1;
    }
}

fn split(n: u64, out: &mut BTreeMap<u64, u32>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        *out.entry(n).or_insert(0) += 1;
        return;
    }
    let f = pollard_brent(n);
    split(f, out);
    split(n / f, out);
}

/// Exact prime factorization of `2 <= n <= 2^63`.
pub fn factorize(n: u64) -> Result<ExponentVector> {
    if !(2..=MAX_N).contains(&n) {
        return Err(Error::OutOfRange(n));
    }
    let mut entries = BTreeMap::new();
    let mut m = n;
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
        while m % p == 0 {
            *entries.entry(p).or_insert(0) += 1;
            m /= p;
        }
    }
    split(m, &mut entries);
    Ok(ExponentVector { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(pairs: &[(u64, u32)]) -> ExponentVector {
        ExponentVector { entries: pairs.iter().copied().collect() }
    }

    #[test]
    fn small_cases() {
        assert_eq!(factorize(6).unwrap(), fv(&[(2, 1), (3, 1)]));
        assert_eq!(factorize(1296).unwrap(), fv(&[(2, 4), (3, 4)]));
        assert_eq!(factorize(97).unwrap(), fv(&[(97, 1)]));
    }

    #[test]
    fn range_limits() {
        assert_eq!(factorize(1), Err(Error::OutOfRange(1)));
        assert_eq!(factorize(0), Err(Error::OutOfRange(0)));
        assert!(factorize(MAX_N + 1).is_err());
        assert_eq!(factorize(MAX_N).unwrap(), fv(&[(2, 63)]));
    }

    #[test]
    fn semiprime_of_large_primes() {
        let (p, q) = (4_294_967_291u64, 2_147_483_647u64);
        assert_eq!(factorize(p * q).unwrap(), fv(&[(q, 1), (p, 1)]));
    }

    fn trial_division(mut n: u64) -> BTreeMap<u64, u32> {
        let mut out = BTreeMap::new();
        let mut p = 2;
        while p * p <= n {
            while n % p == 0 {
                *out.entry(p).or_insert(0) += 1;
                n /= p;
            }
            p += 1;
        }
        if n > 1 {
            *out.entry(n).or_insert(0) += 1;
        }
        out
    }

    proptest! {
        #[test]
        fn agrees_with_trial_division(n in 2u64..5_000_000) {
            prop_assert_eq!(factorize(n).unwrap().entries, trial_division(n));
        }

        #[test]
        fn reconstructs(n in 2u64..MAX_N) {
            let f = factorize(n).unwrap();
            prop_assert_eq!(f.reconstruct(), Some(n));
            prop_assert!(f.entries.keys().all(|&p| is_prime(p)));
        }
    }
}
