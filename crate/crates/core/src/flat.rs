//! One-variable polynomials with prescribed real part on the circle, and the
//! multi-variable examples assembled from them.
//!
//! With `t = 1 - cos x`, a polynomial `Phi(z) = sum_n (-1)^{n-1} 2^{-n} (a_n (1-z)^{2n-1} - b_n (1-z)^{2n})`
//! has `Re Phi(e^{ix}) = sum_n a_n P_n(t) + b_n Q_n(t)`, where
//! `P_n(t) = t^n ((1 - t/2) U_{n-1} - T_n / 2)` and `Q_n(t) = t^n T_n`, the Chebyshev
//! polynomials being written in the variable `t`. Matching a target `sum_m c_m t^m`
//! is a square linear system in `(a_n, b_n)`.

use crate::error::{Error, Result};
use crate::factor::is_prime;
use crate::lift::BohrLift;
use crate::scalar::format_rational;
use crate::series::TruncatedSeries;
use crate::symbol::{Coef, DirichletSymbol};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::PI;

type Q = BigRational;

fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn factorial(n: u32) -> BigInt {
    (1..=n as u64).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChebKind {
    T,
    U,
}

/// Chebyshev polynomial with coefficients in powers of `(1 - y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebyshevBasisPoly {
    pub kind: ChebKind,
    pub n: u32,
    pub coeffs_in_one_minus_y: Vec<Q>,
}

impl ChebyshevBasisPoly {
    /// Evaluated exactly at the dyadic value of `y`, then rounded; the `(1 - y)` basis
    /// cancels catastrophically in binary64 for moderate `n`.
    pub fn eval(&self, y: f64) -> f64 {
        let t = Q::one() - Q::from_float(y).expect("finite argument");
        let (m, e) = (t.numer().clone(), t.denom().clone());
        // sum_j c_j m^j e^{n-j} / e^n with integer c_j.
        let mut acc = BigInt::zero();
        let mut epow = BigInt::one();
        let mut coeffs = self.coeffs_in_one_minus_y.iter().rev();
        if let Some(top) = coeffs.next() {
            acc = top.to_integer();
        }
        for c in coeffs {
            epow *= &e;
            acc = acc * &m + c.to_integer() * &epow;
        }
        q_to_f64(&Q::new(acc, epow))
    }
}

/// Closed-form coefficients of `U_n` or `T_n` in the `(1 - y)` basis.
pub fn chebyshev_coeffs(kind: ChebKind, n: u32) -> Result<ChebyshevBasisPoly> {
    let mut c = Vec::with_capacity(n as usize + 1);
    match kind {
        ChebKind::U => {
            for j in 0..=n {
                let num = factorial(n + j + 1);
                let den = factorial(n - j) * factorial(2 * j + 1);
                c.push(Q::new(num, den) * qi(-2).pow(j as i32));
            }
        }
        ChebKind::T => {
            if n == 0 {
                return Err(Error::Precondition("T_n needs n >= 1 in this closed form".into()));
            }
            for j in 0..=n {
                let num = factorial(n + j - 1);
                let den = factorial(n - j) * factorial(2 * j);
                c.push(Q::new(num, den) * qi(-2).pow(j as i32) * qi(n as i64));
            }
        }
    }
    Ok(ChebyshevBasisPoly { kind, n, coeffs_in_one_minus_y: c })
}

fn poly_mul(p: &[Q], q: &[Q]) -> Vec<Q> {
    let mut r = vec![Q::zero(); p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            r[i + j] += a * b;
        }
    }
    r
}

fn poly_add(p: &[Q], q: &[Q]) -> Vec<Q> {
    (0..p.len().max(q.len()))
        .map(|k| p.get(k).cloned().unwrap_or_else(Q::zero) + q.get(k).cloned().unwrap_or_else(Q::zero))
        .collect()
}

fn shift(p: &[Q], n: usize) -> Vec<Q> {
    let mut r = vec![Q::zero(); n];
    r.extend_from_slice(p);
    r
}

/// `P_n(t)` in increasing powers of `t`.
pub fn p_poly(n: u32) -> Vec<Q> {
    let u = chebyshev_coeffs(ChebKind::U, n - 1).unwrap().coeffs_in_one_minus_y;
    let t = chebyshev_coeffs(ChebKind::T, n).unwrap().coeffs_in_one_minus_y;
    let half = Q::new(1.into(), 2.into());
    let inner = poly_add(&poly_mul(&[Q::one(), -half.clone()], &u), &t.iter().map(|x| -x * &half).collect::<Vec<_>>());
    shift(&inner, n as usize)
}

/// `Q_n(t)` in increasing powers of `t`.
pub fn q_poly(n: u32) -> Vec<Q> {
    shift(&chebyshev_coeffs(ChebKind::T, n).unwrap().coeffs_in_one_minus_y, n as usize)
}

/// System matrix with rows `c_{2N}, ..., c_1` and columns `a_N, b_N, ..., a_1, b_1`.
pub fn system_matrix(big_n: u32) -> Vec<Vec<Q>> {
    let dim = 2 * big_n as usize;
    let mut m = vec![vec![Q::zero(); dim]; dim];
    for n in 1..=big_n {
        let col = 2 * (big_n - n) as usize;
        for (k, v) in p_poly(n).into_iter().enumerate() {
            if k >= 1 {
                m[dim - k][col] = v;
            }
        }
        for (k, v) in q_poly(n).into_iter().enumerate() {
            if k >= 1 {
                m[dim - k][col + 1] = v;
            }
        }
    }
    m
}

/// Which side of the 2x2 block diagonal is structurally zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub zero_above_blocks: bool,
    pub zero_below_blocks: bool,
}

/// Row `c_m` can only see `(a_n, b_n)` with `n <= m <= 2n`; check the matrix against that.
pub fn block_structure(big_n: u32) -> BlockStructure {
    let m = system_matrix(big_n);
    let dim = m.len();
    let (mut above, mut below) = (true, true);
    for (r, row) in m.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let (rb, cb) = (r / 2, c / 2);
            let m_idx = (dim - r) as u32;
            let n_idx = big_n - cb as u32;
            let reachable = n_idx <= m_idx && m_idx <= 2 * n_idx;
            if !reachable && !v.is_zero() {
                return BlockStructure { zero_above_blocks: false, zero_below_blocks: false };
            }
            if !v.is_zero() {
                if cb > rb {
                    above = false;
                }
                if cb < rb {
                    below = false;
                }
            }
        }
    }
    BlockStructure { zero_above_blocks: above, zero_below_blocks: below }
}

/// `d_{n-1} e_n - d_n e_{n-1}` with `d_j`, `e_j` the coefficients of `t^{n+j}` in `P_n`, `Q_n`.
pub fn block_determinant(n: u32) -> Q {
    let (p, q) = (p_poly(n), q_poly(n));
    let i = n as usize;
    let (d0, d1) = (p[2 * i - 1].clone(), p[2 * i].clone());
    let (e0, e1) = (q[2 * i - 1].clone(), q[2 * i].clone());
    d0 * e1 - d1 * e0
}

/// The reduced block expression as printed, `n^2 - (2n-1)(n-2)/4`.
pub fn printed_block_expression(n: u32) -> Q {
    let n = qi(n as i64);
    n.clone() * n.clone() - (qi(2) * n.clone() - qi(1)) * (n - qi(2)) / qi(4)
}

fn solve_exact(mut m: Vec<Vec<Q>>, mut rhs: Vec<Q>) -> Result<Vec<Q>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .ok_or_else(|| Error::Inconsistent("singular flatness system".into()))?;
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..n {
                    let v = &f * &m[col][c];
                    m[r][c] -= v;
                }
                let v = &f * &rhs[col];
                rhs[r] -= v;
            }
        }
    }
    Ok((0..n).map(|i| &rhs[i] / &m[i][i]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    Exact,
    Binary64,
    /// Exact up to `N = 8`, binary64 beyond.
    Auto,
}

/// `Phi(z) = sum_n (-1)^{n-1} 2^{-n} (a_n (1-z)^{2n-1} - b_n (1-z)^{2n})` with its target.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPolynomial {
    /// `c_1, ..., c_{2N}`.
    pub target: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Rational solution when solved exactly: `(target, a, b)`.
    pub exact: Option<(Vec<Q>, Vec<Q>, Vec<Q>)>,
}

/// Coefficients of `(1 - z)^p`, `p = 0..=2N`, from `(a_n, b_n)`.
fn one_minus_z_from<T: Clone + std::ops::Neg<Output = T> + std::ops::Mul<Output = T>>(
    a: &[T],
    b: &[T],
    zero: T,
    weight: impl Fn(u32) -> T,
) -> Vec<T> {
    let mut c = vec![zero; 2 * a.len() + 1];
    for n in 1..=a.len() as u32 {
        let w = weight(n);
        c[2 * n as usize - 1] = w.clone() * a[n as usize - 1].clone();
        c[2 * n as usize] = -(w * b[n as usize - 1].clone());
    }
    c
}

fn weight_q(n: u32) -> Q {
    let s = if n % 2 == 1 { 1 } else { -1 };
    Q::new(BigInt::from(s), BigInt::from(2).pow(n))
}

impl FlatPolynomial {
    pub fn blocks(&self) -> usize {
        self.a.len()
    }

    /// Coefficients of `(1 - z)^p` for `p = 0..=2N` (the `p = 0` entry is zero).
    pub fn one_minus_z_coeffs(&self) -> Vec<f64> {
        match &self.exact {
            Some((_, a, b)) => one_minus_z_from(a, b, Q::zero(), weight_q).iter().map(q_to_f64).collect(),
            None => one_minus_z_from(&self.a, &self.b, 0.0, |n| q_to_f64(&weight_q(n))),
        }
    }

    pub fn one_minus_z_coeffs_exact(&self) -> Option<Vec<Q>> {
        self.exact.as_ref().map(|(_, a, b)| one_minus_z_from(a, b, Q::zero(), weight_q))
    }

    /// `Re Phi(e^{ix})`.
    pub fn re_on_circle(&self, x: f64) -> f64 {
        let w = Complex64::new(2.0 * (x / 2.0).sin().powi(2), -x.sin());
        let mut p = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for c in self.one_minus_z_coeffs().iter().skip(1) {
            p *= w;
            acc += c * p.re;
        }
        acc
    }

    /// `sum_m c_m (1 - cos x)^m`.
    pub fn target_on_circle(&self, x: f64) -> f64 {
        let t = 2.0 * (x / 2.0).sin().powi(2);
        self.target.iter().rev().fold(0.0, |acc, c| acc * t + c) * t
    }

    /// Max of `|Re Phi - target|` over `points` equispaced nodes of `[0, 2 pi)`.
    pub fn flatness_error(&self, points: usize) -> f64 {
        (0..points)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / points as f64;
                (self.re_on_circle(x) - self.target_on_circle(x)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The polynomial as a one-variable lift.
    pub fn lift(&self) -> BohrLift {
        let c = self.one_minus_z_coeffs();
        let cap = (c.len() - 1) as u32;
        let s = TruncatedSeries::from_terms(1, cap, c.iter().enumerate().map(|(p, v)| (vec![p as u32], Complex64::new(*v, 0.0))));
        BohrLift::from_one_minus_z(&s).expect("one-variable lift")
    }

    /// The one-variable symbol over `generator`; needs the exact solution.
    pub fn symbol(&self, generator: u64) -> Result<DirichletSymbol> {
        let c = self.one_minus_z_coeffs_exact().ok_or_else(|| Error::NotSupported("symbol printing needs an exact solve".into()))?;
        let cap = (c.len() - 1) as u32;
        let mut s = TruncatedSeries::<Q>::zero(1, cap);
        for (p, v) in c.into_iter().enumerate() {
            s.add_term(vec![p as u32], v);
        }
        symbol_from_polynomial(&expand_one_minus_z(&s), &[generator])
    }

    pub fn to_json(&self) -> Value {
        let exact = self.exact.as_ref().map(|(t, a, b)| {
            let f = |v: &Vec<Q>| v.iter().map(format_rational).collect::<Vec<_>>();
            json!({"target": f(t), "a": f(a), "b": f(b)})
        });
        json!({"N": self.blocks(), "target": self.target, "a": self.a, "b": self.b, "exact": exact})
    }
}

/// Target vector `e_k` (`c_k = 1`) of length `2N`, `N = max(n_blocks, ceil(k/2))`.
pub fn flat_power_target(k: u32, n_blocks: Option<u32>) -> Result<Vec<Q>> {
    if k == 0 {
        return Err(Error::Precondition("flatness order k must be at least 1".into()));
    }
    let n = n_blocks.unwrap_or(k.div_ceil(2));
    if 2 * n < k {
        return Err(Error::Precondition(format!("need k <= 2N, got k = {k}, N = {n}")));
    }
    let mut c = vec![Q::zero(); 2 * n as usize];
    c[k as usize - 1] = Q::one();
    Ok(c)
}

/// Solve for `(a_n, b_n)` matching `Re Phi(e^{ix}) = sum_m c_m (1 - cos x)^m`.
pub fn build_flat_polynomial(target: &[Q], mode: SolveMode) -> Result<FlatPolynomial> {
    if target.is_empty() {
        return Err(Error::Precondition("empty target".into()));
    }
    let mut target = target.to_vec();
    if target.len() % 2 == 1 {
        target.push(Q::zero());
    }
    let big_n = (target.len() / 2) as u32;
    for n in 1..=big_n {
        if block_determinant(n).is_zero() {
            return Err(Error::Inconsistent(format!("vanishing diagonal block at n = {n}")));
        }
    }
    let m = system_matrix(big_n);
    let dim = target.len();
    let rhs: Vec<Q> = (0..dim).map(|r| target[dim - 1 - r].clone()).collect();
    let exact = match mode {
        SolveMode::Exact => true,
        SolveMode::Binary64 => false,
        SolveMode::Auto => big_n <= 8,
    };
    let tf: Vec<f64> = target.iter().map(q_to_f64).collect();
    let split = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; big_n as usize];
        let mut b = vec![0.0; big_n as usize];
        for n in 1..=big_n as usize {
            let col = 2 * (big_n as usize - n);
            a[n - 1] = x[col];
            b[n - 1] = x[col + 1];
        }
        (a, b)
    };
    if exact {
        let x = solve_exact(m, rhs)?;
        let xf: Vec<f64> = x.iter().map(q_to_f64).collect();
        let (a, b) = split(&xf);
        let mut aq = vec![Q::zero(); big_n as usize];
        let mut bq = vec![Q::zero(); big_n as usize];
        for n in 1..=big_n as usize {
            let col = 2 * (big_n as usize - n);
            aq[n - 1] = x[col].clone();
            bq[n - 1] = x[col + 1].clone();
        }
        Ok(FlatPolynomial { target: tf, a, b, exact: Some((target, aq, bq)) })
    } else {
        let mf = DMatrix::from_fn(dim, dim, |r, c| q_to_f64(&m[r][c]));
        let rf = DVector::from_iterator(dim, rhs.iter().map(q_to_f64));
        let x = mf.lu().solve(&rf).ok_or_else(|| Error::Inconsistent("singular flatness system".into()))?;
        let (a, b) = split(x.as_slice());
        Ok(FlatPolynomial { target: tf, a, b, exact: None })
    }
}

/// The first `d` primes, used as default generators.
pub fn first_primes(d: usize) -> Vec<u64> {
    (2u64..).filter(|&n| is_prime(n)).take(d).collect()
}

fn frequency(generators: &[u64], alpha: &[u32]) -> Result<u64> {
    let mut n: u64 = 1;
    for (&q, &a) in generators.iter().zip(alpha) {
        let p = q.checked_pow(a).ok_or(Error::OutOfRange(u64::MAX))?;
        n = n.checked_mul(p).ok_or(Error::OutOfRange(u64::MAX))?;
    }
    Ok(n)
}

/// The symbol whose lift over `generators` is the exact polynomial `poly` (in `z`).
pub fn symbol_from_polynomial(poly: &TruncatedSeries<Q>, generators: &[u64]) -> Result<DirichletSymbol> {
    if generators.len() != poly.nvars() {
        return Err(Error::DimensionMismatch { expected: poly.nvars(), got: generators.len() });
    }
    let c1 = poly.constant_term() + Q::new(1.into(), 2.into());
    let mut terms = Vec::new();
    for (alpha, c) in poly.terms() {
        if alpha.iter().any(|&a| a > 0) {
            terms.push((frequency(generators, alpha)?, Coef::real(c.clone())));
        }
    }
    DirichletSymbol::new(0, Coef::real(c1), terms)
}

fn lift_from_exact(poly: &TruncatedSeries<Q>, generators: &[u64]) -> Result<BohrLift> {
    let c = |v: &Q| Complex64::new(q_to_f64(v), 0.0);
    let mut l = BohrLift::new(
        c(&poly.constant_term()),
        poly.terms().filter(|(a, _)| a.iter().any(|&x| x > 0)).map(|(a, v)| (a.clone(), c(v))),
        poly.nvars(),
    )?;
    l.generators = generators.to_vec();
    Ok(l)
}

/// Expand `sum_beta c_beta prod_j (1 - z_j)^{beta_j}` into powers of `z`.
fn expand_one_minus_z(s: &TruncatedSeries<Q>) -> TruncatedSeries<Q> {
    let d = s.nvars();
    let cap = s.cap();
    let one = TruncatedSeries::constant(d, cap, Q::one());
    let mut out = TruncatedSeries::zero(d, cap);
    for (beta, c) in s.terms() {
        let mut term = TruncatedSeries::constant(d, cap, c.clone());
        for (j, &b) in beta.iter().enumerate() {
            let x = &one - &TruncatedSeries::variable(d, cap, j);
            for _ in 0..b {
                term = &term * &x;
            }
        }
        out = &out + &term;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedExample {
    /// Flatness orders `k_j` (even): `Re Phi_j(e^{ix}) = (1 - cos x)^{k_j/2}`.
    pub orders: Vec<u32>,
    pub parts: Vec<FlatPolynomial>,
    pub lift: BohrLift,
    pub symbol: DirichletSymbol,
    /// Smallest `Re Phi_j` over grid nodes with `|x| >= pi/16`, over all `j`.
    pub min_away_from_zero: f64,
}

/// `Phi(z) = sum_j Phi_j(z_j)` with each `Phi_j` flat of order `k_j` at `z_j = 1`.
pub fn build_separated_example(orders: &[u32]) -> Result<SeparatedExample> {
    if orders.is_empty() || orders.iter().any(|&k| k < 2 || k % 2 == 1) {
        return Err(Error::Precondition("orders must be even integers >= 2".into()));
    }
    let d = orders.len();
    let mut parts = Vec::with_capacity(d);
    for &k in orders {
        parts.push(build_flat_polynomial(&flat_power_target(k / 2, None)?, SolveMode::Exact)?);
    }
    let cap = parts.iter().map(|p| 2 * p.blocks() as u32).max().unwrap();
    let mut s = TruncatedSeries::<Q>::zero(d, cap);
    for (j, p) in parts.iter().enumerate() {
        if p.exact.as_ref().map_or(true, |(_, a, _)| !a[0].is_positive()) {
            return Err(Error::Certification(format!("linear coefficient of part {j} is not positive")));
        }
        for (pw, c) in p.one_minus_z_coeffs_exact().unwrap().into_iter().enumerate() {
            let mut idx = vec![0u32; d];
            idx[j] = pw as u32;
            s.add_term(idx, c);
        }
    }
    let grid = 4096;
    let mut min_away = f64::INFINITY;
    for p in &parts {
        if p.flatness_error(grid) > 1e-9 {
            return Err(Error::Certification("flatness check failed".into()));
        }
        for i in 0..grid {
            let x = -PI + 2.0 * PI * i as f64 / grid as f64;
            if x.abs() >= PI / 16.0 {
                min_away = min_away.min(p.re_on_circle(x));
            }
        }
    }
    if min_away <= 0.0 {
        return Err(Error::Certification(format!("Re Phi has a second zero (min {min_away:e})")));
    }
    let poly = expand_one_minus_z(&s);
    let generators = first_primes(d);
    Ok(SeparatedExample {
        orders: orders.to_vec(),
        parts,
        lift: lift_from_exact(&poly, &generators)?,
        symbol: symbol_from_polynomial(&poly, &generators)?,
        min_away_from_zero: min_away,
    })
}

/// Parse a real polynomial in `z1, z2, ...` with rational coefficients.
pub fn parse_polynomial(text: &str, min_vars: usize) -> Result<TruncatedSeries<Q>> {
    let max_var = text
        .match_indices('z')
        .filter_map(|(i, _)| {
            let digits: String = text[i + 1..].chars().take_while(|c| c.is_ascii_digit()).collect();
            digits.parse::<usize>().ok()
        })
        .max()
        .unwrap_or(0);
    let nvars = max_var.max(min_vars).max(1);
    let mut p = PolyParser { s: text.as_bytes(), pos: 0, nvars, cap: 64 };
    let out = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(out)
}

struct PolyParser<'a> {
    s: &'a [u8],
    pos: usize,
    nvars: usize,
    cap: u32,
}

impl PolyParser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.into() }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<TruncatedSeries<Q>> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let t = self.term()?;
            acc = if c == b'+' { &acc + &t } else { &acc - &t };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<TruncatedSeries<Q>> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let f = self.power()?;
                    acc = &acc * &f;
                }
                Some(b'z' | b'(') => {
                    let f = self.power()?;
                    acc = &acc * &f;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<TruncatedSeries<Q>> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: u32 = std::str::from_utf8(&self.s[start..self.pos])
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| self.err("expected a nonnegative integer exponent"))?;
            let mut r = TruncatedSeries::constant(self.nvars, self.cap, Q::one());
            for _ in 0..e {
                r = &r * &base;
            }
            return Ok(r);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<TruncatedSeries<Q>> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-&self.power()?)
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'z') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let j: usize = std::str::from_utf8(&self.s[start..self.pos])
                    .ok()
                    .and_then(|t| t.parse().ok())
                    .filter(|&j| j >= 1)
                    .ok_or_else(|| self.err("expected a variable index z1, z2, ..."))?;
                Ok(TruncatedSeries::variable(self.nvars, self.cap, j - 1))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || b"./".contains(&self.s[self.pos])) {
                    self.pos += 1;
                }
                let t = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                let v = crate::scalar::parse_rational(t).ok_or_else(|| self.err("bad number"))?;
                Ok(TruncatedSeries::constant(self.nvars, self.cap, v))
            }
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CexKind {
    Cex3,
    Cex5a,
    Cex5b,
}

impl std::str::FromStr for CexKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cex3" => Ok(Self::Cex3),
            "cex5a" => Ok(Self::Cex5a),
            "cex5b" => Ok(Self::Cex5b),
            _ => Err(Error::Precondition(format!("unknown counterexample family '{s}'"))),
        }
    }
}

/// Grid evidence for `Re Phi >= 0` on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub grid_per_dim: usize,
    pub grid_min: f64,
    pub argmin: Vec<f64>,
    pub lipschitz: f64,
    /// `grid_min - L h sqrt(d) / 2`, a lower bound for `Re Phi` on the whole torus.
    pub guaranteed_lower: f64,
}

/// Minimum of `Re Phi` on a product grid (4096 per axis up to `d = 2`).
///
/// Grid phases `alpha . i h` are reduced mod `2 pi` as integers and read from a table.
pub fn certify_nonnegative(phi: &BohrLift) -> Certificate {
    let d = phi.dim.max(1);
    let n = if d <= 2 { 4096 } else { ((1u64 << 24) as f64).powf(1.0 / d as f64).floor() as usize };
    let h = 2.0 * PI / n as f64;
    let table: Vec<(f64, f64)> = (0..n).map(|k| ((k as f64 * h).cos(), (k as f64 * h).sin())).collect();
    let terms: Vec<(Vec<usize>, Complex64)> =
        phi.terms.iter().map(|(a, c)| (a.iter().map(|&x| x as usize % n).collect(), *c)).collect();
    let total = n.pow(phi.dim as u32);
    let (min, best) = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut v = phi.constant.re;
            for (a, c) in &terms {
                let mut k = 0usize;
                let mut rest = i;
                for &aj in a {
                    k += aj * (rest % n);
                    rest /= n;
                }
                let (co, si) = table[k % n];
                v += c.re * co - c.im * si;
            }
            (v, i)
        })
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut rest = best;
    let argmin = (0..phi.dim)
        .map(|_| {
            let t = h * (rest % n) as f64;
            rest /= n;
            t
        })
        .collect();
    let lip = phi.lipschitz_sup();
    Certificate { grid_per_dim: n, grid_min: min, argmin, lipschitz: lip, guaranteed_lower: min - lip * h * (d as f64).sqrt() / 2.0 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub kind: CexKind,
    pub delta: Q,
    pub polynomial: TruncatedSeries<Q>,
    pub lift: BohrLift,
    pub symbol: DirichletSymbol,
    pub certificate: Certificate,
}

/// Tolerance on the grid minimum of `Re Phi` for certification.
pub const CERT_TOL: f64 = 1e-12;

/// Members of the three counterexample families, with `Re Phi >= 0` certified on a grid.
///
/// `p` defaults to `z2` and is ignored by `Cex5a`.
pub fn counterexample_factory(kind: CexKind, delta: &Q, p: Option<&TruncatedSeries<Q>>) -> Result<Counterexample> {
    if !delta.is_positive() {
        return Err(Error::Precondition("delta must be positive".into()));
    }
    let nv = p.map_or(2, |p| p.nvars().max(2));
    let cap = 64;
    let pz = match p {
        Some(p) => {
            let mut r = TruncatedSeries::zero(nv, cap);
            for (a, c) in p.terms() {
                let mut a = a.clone();
                a.resize(nv, 0);
                r.add_term(a, c.clone());
            }
            r
        }
        None => TruncatedSeries::variable(nv, cap, 1),
    };
    let one = TruncatedSeries::constant(nv, cap, Q::one());
    let x1 = &one - &TruncatedSeries::variable(nv, cap, 0);
    let x2 = &one - &TruncatedSeries::variable(nv, cap, 1);
    let x1sq = &x1 * &x1;
    let half = Q::new(1.into(), 2.into());
    let poly = match kind {
        CexKind::Cex3 => &x1 + &(&x1sq * &pz).scale(delta),
        CexKind::Cex5a => {
            let inner = &(&one - &x2.scale(delta)) - &(&x1 * &x2).scale(delta);
            &x1.scale(&qi(2)) + &(&x1sq * &inner)
        }
        CexKind::Cex5b => {
            let x1_4 = &x1sq * &x1sq;
            &(&x1 + &x1sq.scale(&half)) + &(&x1_4 * &pz).scale(delta)
        }
    };
    let poly = TruncatedSeries::from_terms(nv, poly.max_degree().max(1), poly.terms().map(|(a, c)| (a.clone(), c.clone())));
    let generators = first_primes(nv);
    let lift = lift_from_exact(&poly, &generators)?;
    let certificate = certify_nonnegative(&lift);
    if certificate.grid_min < -CERT_TOL {
        return Err(Error::Certification(format!(
            "delta too large for this P: Re Phi = {:.6e} at theta = {:?}",
            certificate.grid_min, certificate.argmin
        )));
    }
    Ok(Counterexample { kind, delta: delta.clone(), symbol: symbol_from_polynomial(&poly, &generators)?, polynomial: poly, lift, certificate })
}
