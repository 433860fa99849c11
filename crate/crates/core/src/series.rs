//! Multivariate power series truncated at a total-degree cap.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

/// Multi-index (one exponent per variable).
pub type Index = Vec<u32>;

fn total(idx: &[u32]) -> u32 {
    idx.iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries<T> {
    nvars: usize,
    cap: u32,
    coeffs: BTreeMap<Index, T>,
}

impl<T: Scalar> TruncatedSeries<T> {
    pub fn zero(nvars: usize, cap: u32) -> Self {
        Self { nvars, cap, coeffs: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, cap: u32, c: T) -> Self {
        let mut s = Self::zero(nvars, cap);
        s.add_term(vec![0; nvars], c);
        s
    }

    /// The series consisting of the single variable `x_i`.
    pub fn variable(nvars: usize, cap: u32, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut s = Self::zero(nvars, cap);
        if cap >= 1 {
            let mut idx = vec![0; nvars];
            idx[i] = 1;
            s.add_term(idx, T::one());
        }
        s
    }

    pub fn from_terms<I: IntoIterator<Item = (Index, T)>>(nvars: usize, cap: u32, terms: I) -> Self {
        let mut s = Self::zero(nvars, cap);
        for (idx, c) in terms {
            s.add_term(idx, c);
        }
        s
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Accumulate `c` into the coefficient of `idx`; indices above the cap are dropped.
    pub fn add_term(&mut self, idx: Index, c: T) {
        assert_eq!(idx.len(), self.nvars, "index arity");
        if total(&idx) > self.cap || c.is_zero() {
            return;
        }
        match self.coeffs.get_mut(&idx) {
            Some(v) => {
                let s = v.clone() + c;
                if s.is_zero() {
                    self.coeffs.remove(&idx);
                } else {
                    *v = s;
                }
            }
            None => {
                self.coeffs.insert(idx, c);
            }
        }
    }

    pub fn coeff(&self, idx: &[u32]) -> T {
        self.coeffs.get(idx).cloned().unwrap_or_else(T::zero)
    }

    pub fn constant_term(&self) -> T {
        self.coeff(&vec![0; self.nvars])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Index, &T)> {
        self.coeffs.iter()
    }

    pub fn max_degree(&self) -> u32 {
        self.coeffs.keys().map(|k| total(k)).max().unwrap_or(0)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        if self.cap != other.cap {
            return Err(Error::CapMismatch(self.cap, other.cap));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add_term(k.clone(), v.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add_term(k.clone(), -v.clone());
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(self.nvars, self.cap);
        for (ka, va) in &self.coeffs {
            let da = total(ka);
            for (kb, vb) in &other.coeffs {
                if da + total(kb) > self.cap {
                    continue;
                }
                let idx: Index = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                out.add_term(idx, va.clone() * vb.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Self::zero(self.nvars, self.cap);
        for (k, v) in &self.coeffs {
            out.add_term(k.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Part of total degree exactly `k`.
    pub fn homogeneous(&self, k: u32) -> Self {
        Self::from_terms(
            self.nvars,
            self.cap,
            self.coeffs.iter().filter(|(i, _)| total(i) == k).map(|(i, v)| (i.clone(), v.clone())),
        )
    }

    /// Same coefficients under a different cap (dropping what no longer fits).
    pub fn with_cap(&self, cap: u32) -> Self {
        Self::from_terms(self.nvars, cap, self.coeffs.iter().map(|(i, v)| (i.clone(), v.clone())))
    }

    /// Substitute `x_i = sum_j m[i][j] y_j` and return a series in the `y` variables.
    pub fn linear_substitute(&self, m: &[Vec<T>]) -> Result<Self> {
        if m.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: m.len() });
        }
        let new_nvars = m.first().map_or(0, |r| r.len());
        if m.iter().any(|r| r.len() != new_nvars) {
            return Err(Error::Precondition("ragged substitution matrix".into()));
        }
        let forms: Vec<Self> = m
            .iter()
            .map(|row| {
                Self::from_terms(
                    new_nvars,
                    self.cap,
                    row.iter().enumerate().map(|(j, c)| {
                        let mut idx = vec![0; new_nvars];
                        idx[j] = 1;
                        (idx, c.clone())
                    }),
                )
            })
            .collect();
        let mut powers: Vec<Vec<Self>> = forms
            .iter()
            .map(|_| vec![Self::constant(new_nvars, self.cap, T::one())])
            .collect();
        let mut out = Self::zero(new_nvars, self.cap);
        for (idx, c) in &self.coeffs {
            let mut term = Self::constant(new_nvars, self.cap, c.clone());
            for (i, &e) in idx.iter().enumerate() {
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().checked_mul(&forms[i])?;
                    powers[i].push(next);
                }
                if e > 0 {
                    term = term.checked_mul(&powers[i][e as usize])?;
                }
            }
            out = out.checked_add(&term)?;
        }
        Ok(out)
    }

    /// `sum_k coeffs[k] * self^k`, requiring a zero constant term.
    pub fn compose_univariate(&self, coeffs: &[T]) -> Result<Self> {
        if !self.constant_term().is_zero() {
            return Err(Error::Precondition("composition needs a zero constant term".into()));
        }
        let mut out = Self::zero(self.nvars, self.cap);
        let kmax = coeffs.len().min(self.cap as usize + 1);
        for k in (0..kmax).rev() {
            out = out.checked_mul(self)?;
            out.add_term(vec![0; self.nvars], coeffs[k].clone());
        }
        Ok(out)
    }

    /// Taylor coefficients `[1, 1/1!, 1/2!, ...]` up to the cap, built in `T`.
    fn exp_coeffs(cap: u32) -> Vec<T> {
        let mut c = vec![T::one()];
        for k in 1..=cap as i64 {
            let prev = c.last().unwrap().clone();
            c.push(prev * T::from_ratio(1, k));
        }
        c
    }

    pub fn cos(&self) -> Result<Self> {
        let c: Vec<T> = Self::exp_coeffs(self.cap)
            .into_iter()
            .enumerate()
            .map(|(k, v)| match k % 4 {
                0 => v,
                2 => -v,
                _ => T::zero(),
            })
            .collect();
        self.compose_univariate(&c)
    }

    pub fn sin(&self) -> Result<Self> {
        let c: Vec<T> = Self::exp_coeffs(self.cap)
            .into_iter()
            .enumerate()
            .map(|(k, v)| match k % 4 {
                1 => v,
                3 => -v,
                _ => T::zero(),
            })
            .collect();
        self.compose_univariate(&c)
    }

    /// `exp(self)` for a zero-constant series, via `n E_n = sum_k k S_k E_{n-k}` on homogeneous parts.
    pub fn exp(&self) -> Result<Self> {
        if !self.constant_term().is_zero() {
            return Err(Error::Precondition("exp needs a zero constant term".into()));
        }
        let parts: Vec<Self> = (0..=self.cap).map(|k| self.homogeneous(k)).collect();
        let mut e: Vec<Self> = vec![Self::constant(self.nvars, self.cap, T::one())];
        for n in 1..=self.cap {
            let mut acc = Self::zero(self.nvars, self.cap);
            for k in 1..=n {
                if parts[k as usize].is_empty() {
                    continue;
                }
                let prod = parts[k as usize].checked_mul(&e[(n - k) as usize])?;
                acc = acc.checked_add(&prod.scale(&T::from_int(k as i64)))?;
            }
            e.push(acc.scale(&T::from_ratio(1, n as i64)));
        }
        let mut out = Self::zero(self.nvars, self.cap);
        for part in e {
            out = out.checked_add(&part)?;
        }
        Ok(out)
    }

    /// Evaluate the truncated polynomial at a point.
    pub fn eval(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.nvars, "evaluation arity");
        let mut sum = T::zero();
        for (idx, c) in &self.coeffs {
            let mut t = c.clone();
            for (xi, &e) in x.iter().zip(idx) {
                for _ in 0..e {
                    t = t * xi.clone();
                }
            }
            sum = sum + t;
        }
        sum
    }

    pub fn map<U: Scalar, F: Fn(&T) -> U>(&self, f: F) -> TruncatedSeries<U> {
        TruncatedSeries::from_terms(self.nvars, self.cap, self.coeffs.iter().map(|(i, v)| (i.clone(), f(v))))
    }
}

impl<T: Scalar> Add for &TruncatedSeries<T> {
    type Output = TruncatedSeries<T>;
    fn add(self, rhs: Self) -> TruncatedSeries<T> {
        self.checked_add(rhs).expect("series add")
    }
}

impl<T: Scalar> Sub for &TruncatedSeries<T> {
    type Output = TruncatedSeries<T>;
    fn sub(self, rhs: Self) -> TruncatedSeries<T> {
        self.checked_sub(rhs).expect("series sub")
    }
}

impl<T: Scalar> Mul for &TruncatedSeries<T> {
    type Output = TruncatedSeries<T>;
    fn mul(self, rhs: Self) -> TruncatedSeries<T> {
        self.checked_mul(rhs).expect("series mul")
    }
}

impl<T: Scalar> Neg for &TruncatedSeries<T> {
    type Output = TruncatedSeries<T>;
    fn neg(self) -> TruncatedSeries<T> {
        self.scale(&(-T::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    #[test]
    fn product_of_binomials() {
        let one = TruncatedSeries::constant(2, 2, q(1, 1));
        let u = TruncatedSeries::variable(2, 2, 0);
        let v = TruncatedSeries::variable(2, 2, 1);
        let p = &(&one + &u) * &(&one + &v);
        assert_eq!(p.coeff(&[0, 0]), q(1, 1));
        assert_eq!(p.coeff(&[1, 0]), q(1, 1));
        assert_eq!(p.coeff(&[0, 1]), q(1, 1));
        assert_eq!(p.coeff(&[1, 1]), q(1, 1));
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn linear_substitution_of_angle_sum() {
        let (a1, a2) = (q(3, 5), q(1, 4));
        let t1 = TruncatedSeries::variable(2, 3, 0);
        let t2 = TruncatedSeries::variable(2, 3, 1);
        let s = &t1 + &t2;
        let m = vec![vec![a2.clone(), a2.clone()], vec![a1.clone(), -a1.clone()]];
        let r = s.linear_substitute(&m).unwrap();
        assert_eq!(r.coeff(&[1, 0]), a1.clone() + a2.clone());
        assert_eq!(r.coeff(&[0, 1]), a2 - a1);
    }

    #[test]
    fn zero_constant_product_has_zero_constant() {
        let u = TruncatedSeries::<Q>::variable(2, 4, 0);
        let v = TruncatedSeries::<Q>::variable(2, 4, 1);
        assert_eq!((&u * &v).constant_term(), q(0, 1));
    }

    #[test]
    fn truncation_drops_high_terms() {
        let u = TruncatedSeries::<Q>::variable(1, 3, 0);
        let mut p = u.clone();
        for _ in 0..5 {
            p = &p * &u;
        }
        assert!(p.is_empty());
    }

    #[test]
    fn cap_mismatch_is_an_error() {
        let a = TruncatedSeries::<Q>::variable(1, 3, 0);
        let b = TruncatedSeries::<Q>::variable(1, 4, 0);
        assert_eq!(a.checked_mul(&b), Err(Error::CapMismatch(3, 4)));
    }

    #[test]
    fn pythagorean_identity_is_exact() {
        let x = &TruncatedSeries::<Q>::variable(2, 8, 0) + &TruncatedSeries::variable(2, 8, 1).scale(&q(2, 3));
        let c = x.cos().unwrap();
        let s = x.sin().unwrap();
        let one = &(&c * &c) + &(&s * &s);
        assert_eq!(one, TruncatedSeries::constant(2, 8, q(1, 1)));
    }

    #[test]
    fn exp_matches_numeric_exponential() {
        let x = &TruncatedSeries::<f64>::variable(2, 18, 0).scale(&0.3)
            + &(&TruncatedSeries::variable(2, 18, 0) * &TruncatedSeries::variable(2, 18, 1)).scale(&-0.5);
        let e = x.exp().unwrap();
        let (a, b) = (0.2, -0.4);
        let want = (0.3 * a - 0.5 * a * b as f64).exp();
        assert!((e.eval(&[a, b]) - want).abs() < 1e-13);
    }

    #[test]
    fn exp_of_sum_is_product_of_exps_exactly() {
        let u = TruncatedSeries::<Q>::variable(2, 6, 0).scale(&q(1, 2));
        let v = TruncatedSeries::<Q>::variable(2, 6, 1).scale(&q(-3, 1));
        let lhs = (&u + &v).exp().unwrap();
        let rhs = &u.exp().unwrap() * &v.exp().unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn complex_exp_of_imaginary_variable() {
        let x = TruncatedSeries::<Complex64>::variable(1, 20, 0).scale(&Complex64::new(0.0, 1.0));
        let e = x.exp().unwrap();
        let t = Complex64::new(0.7, 0.0);
        let got = e.eval(&[t]);
        let want = Complex64::new(0.7f64.cos(), 0.7f64.sin());
        assert!((got - want).norm() < 1e-14);
    }

    fn arb_series(nvars: usize, cap: u32) -> impl Strategy<Value = TruncatedSeries<Q>> {
        let idx = proptest::collection::vec(0u32..=cap, nvars);
        proptest::collection::vec((idx, -5i64..=5, 1i64..=4), 0..6).prop_map(move |terms| {
            TruncatedSeries::from_terms(nvars, cap, terms.into_iter().map(|(i, n, d)| (i, q(n, d))))
        })
    }

    proptest! {
        #[test]
        fn multiplication_is_associative(a in arb_series(2, 4), b in arb_series(2, 4), c in arb_series(2, 4)) {
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        }

        #[test]
        fn multiplication_distributes(a in arb_series(3, 3), b in arb_series(3, 3), c in arb_series(3, 3)) {
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        }

        #[test]
        fn multiplication_commutes(a in arb_series(2, 5), b in arb_series(2, 5)) {
            prop_assert_eq!(&a * &b, &b * &a);
        }

        #[test]
        fn no_index_exceeds_cap(a in arb_series(2, 4), b in arb_series(2, 4)) {
            let p = &a * &b;
            prop_assert!(p.terms().all(|(i, _)| i.iter().sum::<u32>() <= 4));
        }
    }
}
