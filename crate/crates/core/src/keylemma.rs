//! Order-by-order factorization test `Re phi = gamma^2`, `Im phi = gamma h` for the
//! two-variable quadratic family
//!
//! `Phi(z) = a1(1-z1) + a2(1-z2) + b1(1-z1)^2 + b2(1-z2)^2 + c(1-z1)(1-z2)`
//!
//! with `Re b_j = a_j/2 - a_j^2`, `Re c = -2 a1 a2`, pulled back along
//! `theta1 = a2(u+v)`, `theta2 = a1(u-v)`.
//!
//! The solver fixes `gamma_1 = -2 a1 a2 u` and `h_0 = 1`. At each order the coefficients
//! of `gamma^2` and `gamma h` carrying a factor `u` determine the next homogeneous part of
//! `gamma` (resp. `h`) uniquely; the pure `v^m` coefficient is left over as a constraint.
//! The first constraint that fails is reported as the obstruction.

use crate::error::{Error, Result};
use crate::lift::BohrLift;
use crate::scalar::RealScalar;
use crate::series::TruncatedSeries;
use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type S<T> = TruncatedSeries<T>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeylemmaParams<T> {
    pub a1: T,
    pub a2: T,
    pub im_b1: T,
    pub im_b2: T,
    pub im_c: T,
}

fn abs<T: RealScalar>(x: &T) -> T {
    if *x < T::zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

impl<T: RealScalar> KeylemmaParams<T> {
    pub fn new(a1: T, a2: T, im_b1: T, im_b2: T, im_c: T) -> Result<Self> {
        let p = Self { a1, a2, im_b1, im_b2, im_c };
        p.validate()?;
        Ok(p)
    }

    /// `0 < a2 <= a1 <= 1` and `a2 <= 1 - a1`.
    pub fn validate(&self) -> Result<()> {
        let (z, one) = (T::zero(), T::one());
        if !(self.a2 > z && self.a2 <= self.a1 && self.a1 <= one && self.a2 <= one - self.a1.clone()) {
            return Err(Error::Precondition("need 0 < a2 <= a1 <= 1 and a2 <= 1 - a1".into()));
        }
        Ok(())
    }

    pub fn re_b1(&self) -> T {
        self.a1.clone() * T::from_ratio(1, 2) - self.a1.clone() * self.a1.clone()
    }

    pub fn re_b2(&self) -> T {
        self.a2.clone() * T::from_ratio(1, 2) - self.a2.clone() * self.a2.clone()
    }

    pub fn re_c(&self) -> T {
        T::from_int(-2) * self.a1.clone() * self.a2.clone()
    }

    pub fn to_f64(&self) -> KeylemmaParams<f64> {
        KeylemmaParams {
            a1: self.a1.as_f64(),
            a2: self.a2.as_f64(),
            im_b1: self.im_b1.as_f64(),
            im_b2: self.im_b2.as_f64(),
            im_c: self.im_c.as_f64(),
        }
    }

    /// The polynomial as a lift on the bidisc.
    pub fn lift(&self) -> BohrLift {
        let p = self.to_f64();
        let b1 = Complex64::new(p.a1 / 2.0 - p.a1 * p.a1, p.im_b1);
        let b2 = Complex64::new(p.a2 / 2.0 - p.a2 * p.a2, p.im_b2);
        let c = Complex64::new(-2.0 * p.a1 * p.a2, p.im_c);
        let one = Complex64::new(1.0, 0.0);
        let mut s = S::<Complex64>::zero(2, 2);
        let x1 = S::variable(2, 2, 0);
        let x2 = S::variable(2, 2, 1);
        s = &s + &x1.scale(&(one * p.a1));
        s = &s + &x2.scale(&(one * p.a2));
        s = &s + &(&x1 * &x1).scale(&b1);
        s = &s + &(&x2 * &x2).scale(&b2);
        s = &s + &(&x1 * &x2).scale(&c);
        BohrLift::from_one_minus_z(&s).expect("two-variable lift")
    }
}

/// A complex-valued series stored as real and imaginary parts.
#[derive(Clone)]
struct Cs<T> {
    re: S<T>,
    im: S<T>,
}

impl<T: RealScalar> Cs<T> {
    /// `(a+ib)(c+id)`; with `majorant` every subtraction becomes an addition.
    fn mul(&self, o: &Self, majorant: bool) -> Self {
        let ac = &self.re * &o.re;
        let bd = &self.im * &o.im;
        let ad = &self.re * &o.im;
        let bc = &self.im * &o.re;
        Cs { re: if majorant { &ac + &bd } else { &ac - &bd }, im: &ad + &bc }
    }

    fn add(&self, o: &Self) -> Self {
        Cs { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    fn scale(&self, re: &T, im: &T, majorant: bool) -> Self {
        let m = Cs { re: self.re.scale(re), im: self.im.scale(re) };
        let j = Cs { re: self.im.scale(im), im: self.re.scale(im) };
        Cs { re: if majorant { &m.re + &j.re } else { &m.re - &j.re }, im: &m.im + &j.im }
    }
}

/// `1 - e^{i theta}` for `theta = l1 u + l2 v`.
fn one_minus_exp<T: RealScalar>(l1: T, l2: T, cap: u32, majorant: bool) -> Cs<T> {
    let theta = &S::variable(2, cap, 0).scale(&l1) + &S::variable(2, cap, 1).scale(&l2);
    let mut fact = vec![T::one()];
    for k in 1..=cap as i64 {
        let prev = fact.last().unwrap().clone();
        fact.push(prev * T::from_ratio(1, k));
    }
    let sgn = |k: usize| if majorant || k % 4 < 2 { T::one() } else { -T::one() };
    // 1 - cos = sum_{k even >= 2} -(-1)^{k/2} t^k/k!, -sin = sum_{k odd} -(-1)^{(k-1)/2} t^k/k!
    let re: Vec<T> = (0..=cap as usize)
        .map(|k| if k == 0 || k % 2 == 1 { T::zero() } else if majorant { fact[k].clone() } else { -sgn(k) * fact[k].clone() })
        .collect();
    let im: Vec<T> = (0..=cap as usize)
        .map(|k| if k % 2 == 0 { T::zero() } else if majorant { fact[k].clone() } else { -sgn(k - 1) * fact[k].clone() })
        .collect();
    Cs { re: theta.compose_univariate(&re).unwrap(), im: theta.compose_univariate(&im).unwrap() }
}

fn expand_core<T: RealScalar>(p: &KeylemmaParams<T>, cap: u32, majorant: bool) -> (S<T>, S<T>) {
    let f = |x: T| if majorant { abs(&x) } else { x };
    let x1 = one_minus_exp(f(p.a2.clone()), f(p.a2.clone()), cap, majorant);
    let x2 = one_minus_exp(f(p.a1.clone()), f(-p.a1.clone()), cap, majorant);
    let z = T::zero();
    let mut phi = x1.scale(&f(p.a1.clone()), &z, majorant);
    phi = phi.add(&x2.scale(&f(p.a2.clone()), &z, majorant));
    phi = phi.add(&x1.mul(&x1, majorant).scale(&f(p.re_b1()), &f(p.im_b1.clone()), majorant));
    phi = phi.add(&x2.mul(&x2, majorant).scale(&f(p.re_b2()), &f(p.im_b2.clone()), majorant));
    phi = phi.add(&x1.mul(&x2, majorant).scale(&f(p.re_c()), &f(p.im_c.clone()), majorant));
    (phi.re, phi.im)
}

/// Taylor coefficients of `(Re phi, Im phi)` in `(u, v)` through total degree `cap`.
pub fn expand_phi_uv<T: RealScalar>(p: &KeylemmaParams<T>, cap: u32) -> (S<T>, S<T>) {
    expand_core(p, cap, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

/// One leftover coefficient equation `phi_coeff - (gamma^2 or gamma h)_coeff = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub part: Part,
    pub index: [u32; 2],
    pub order: u32,
    pub residual: f64,
    /// Magnitude of the terms that produced the residual (zero-test scale in binary64).
    pub scale: f64,
    pub vanishes: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationAttempt<T> {
    pub gamma: S<T>,
    pub h: S<T>,
    pub constraints: Vec<Constraint>,
    pub obstruction: Option<Constraint>,
}

/// Relative tolerance for binary64 zero tests (ignored by exact scalars).
pub const REL_TOL: f64 = 1e-9;

fn idx2(i: u32, j: u32) -> Vec<u32> {
    vec![i, j]
}

/// Run the full solve (all orders) without stopping at the first failing constraint.
pub fn solve_orders<T: RealScalar>(p: &KeylemmaParams<T>) -> FactorizationAttempt<T> {
    const CAP: u32 = 5;
    let (re, im) = expand_core(p, CAP, false);
    let (re_m, im_m) = expand_core(p, CAP, true);
    let g = T::from_int(-2) * p.a1.clone() * p.a2.clone();
    let mut gamma = S::variable(2, CAP, 0).scale(&g);
    let mut h = S::constant(2, CAP, T::one());
    let mut cons = Vec::new();
    let absmap = |s: &S<T>| s.map(|x| abs(x));

    let mut push = |part, i: u32, j: u32, r: T, scale: f64| {
        let vanishes = r.is_negligible(REL_TOL * scale);
        cons.push(Constraint { part, index: [i, j], order: i + j, residual: r.as_f64(), scale, vanishes });
    };

    // Orders 2 (Re) and 1 (Im) are fixed by the normalization; check every coefficient.
    let g2 = &gamma * &gamma;
    for (i, j) in [(2, 0), (1, 1), (0, 2)] {
        let k = idx2(i, j);
        push(Part::Re, i, j, re.coeff(&k) - g2.coeff(&k), re_m.coeff(&k).as_f64() + abs(&g2.coeff(&k)).as_f64());
    }
    for (i, j) in [(1, 0), (0, 1)] {
        let k = idx2(i, j);
        push(Part::Im, i, j, im.coeff(&k) - gamma.coeff(&k), im_m.coeff(&k).as_f64() + abs(&gamma.coeff(&k)).as_f64());
    }

    let two_g = T::from_int(2) * g.clone();
    for k in 2..=4u32 {
        // gamma_k from Re order k+1.
        let known = (&gamma * &gamma).homogeneous(k + 1);
        let known_abs = (&absmap(&gamma) * &absmap(&gamma)).homogeneous(k + 1);
        for i in 1..=k + 1 {
            let j = k + 1 - i;
            let c = (re.coeff(&idx2(i, j)) - known.coeff(&idx2(i, j))) / two_g.clone();
            gamma.add_term(idx2(i - 1, j), c);
        }
        let v = idx2(0, k + 1);
        push(Part::Re, 0, k + 1, re.coeff(&v) - known.coeff(&v), re_m.coeff(&v).as_f64() + known_abs.coeff(&v).as_f64());

        // h_{k-1} from Im order k (h through degree 2; the v^4 check needs no h_3).
        let known = (&gamma * &h).homogeneous(k);
        let known_abs = (&absmap(&gamma) * &absmap(&h)).homogeneous(k);
        if k <= 3 {
            for i in 1..=k {
                let j = k - i;
                let c = (im.coeff(&idx2(i, j)) - known.coeff(&idx2(i, j))) / g.clone();
                h.add_term(idx2(i - 1, j), c);
            }
        }
        let v = idx2(0, k);
        push(Part::Im, 0, k, im.coeff(&v) - known.coeff(&v), im_m.coeff(&v).as_f64() + known_abs.coeff(&v).as_f64());
    }
    FactorizationAttempt { gamma: gamma.with_cap(4), h: h.with_cap(2), constraints: cons, obstruction: None }
}

/// Solve order by order and report the first coefficient that cannot be matched.
pub fn attempt_factorization<T: RealScalar>(p: &KeylemmaParams<T>) -> Result<FactorizationAttempt<T>> {
    p.validate()?;
    let mut a = solve_orders(p);
    a.obstruction = a.constraints.iter().find(|c| !c.vanishes).cloned();
    Ok(a)
}

fn constraint(a: &FactorizationAttempt<f64>, part: Part, i: u32, j: u32) -> f64 {
    a.constraints.iter().find(|c| c.part == part && c.index == [i, j]).map(|c| c.residual).expect("constraint")
}

/// Unconstrained parameters (admissibility not enforced), for probing linear structure.
fn raw(a1: f64, a2: f64, b1: f64, b2: f64, c: f64) -> KeylemmaParams<f64> {
    KeylemmaParams { a1, a2, im_b1: b1, im_b2: b2, im_c: c }
}

/// Printed closed forms, as functions of `(a1, a2)` and the imaginary parts.
pub mod printed {
    pub fn gamma02(a1: f64, a2: f64, b1: f64, b2: f64, c: f64) -> f64 {
        (-6.0 * a1.powi(3) * b2 - 6.0 * a2.powi(3) * b1 + a1 * a2 * (a1 + a2) * c) / (8.0 * a1 * a2)
    }
    /// Coefficients of `(Im b1, Im b2, Im c)` in the first linear relation, as printed.
    pub fn b_relation(a1: f64, a2: f64) -> [f64; 3] {
        [a2.powi(3), -a1.powi(3), a1 * a2 * (a2 - a1) / 2.0]
    }
    /// The same relation with the opposite sign on the `Im c` coefficient.
    pub fn b_relation_corrected(a1: f64, a2: f64) -> [f64; 3] {
        [a2.powi(3), -a1.powi(3), a1 * a2 * (a1 - a2) / 2.0]
    }
    pub fn b_relation_second(a1: f64, a2: f64) -> [f64; 3] {
        [
            (4.0 * a1 * a2 * a2 - 3.0 * a2 * a2) / (4.0 * a1),
            (4.0 * a1 * a1 * a2 - 3.0 * a1 * a1) / (4.0 * a2),
            (-8.0 * a1 * a2 + a1 + a2) / 8.0,
        ]
    }
    pub fn im_b1(a1: f64, a2: f64, c: f64) -> f64 {
        a1 * (2.0 * a2 * a2 + 2.0 * a1 * a2 + a1 - 2.0 * a2) / (2.0 * a2 * a2 * (2.0 * a1 + 2.0 * a2 - 3.0)) * c
    }
    pub fn im_b2(a1: f64, a2: f64, c: f64) -> f64 {
        a2 * (2.0 * a1 * a1 + 2.0 * a1 * a2 - 2.0 * a1 + a2) / (2.0 * a1 * a1 * (2.0 * a1 + 2.0 * a2 - 3.0)) * c
    }
    pub fn gamma02_substituted(a1: f64, a2: f64, c: f64) -> f64 {
        -(a1 + a2).powi(2) / (2.0 * (2.0 * a1 + 2.0 * a2 - 3.0)) * c
    }
    pub fn imc2(a1: f64, a2: f64) -> f64 {
        let s = 2.0 * a1 + 2.0 * a2 - 3.0;
        -a1 * a2 * s * s * (a1 * a2 * a2 + a1 * a1 * a2 - a1 * a1 - a2 * a2 + a1 * a2) / (a1 + a2).powi(3)
    }
    pub fn imc2_alt(a1: f64, a2: f64) -> f64 {
        let s = 2.0 * a1 + 2.0 * a2 - 3.0;
        -a1 * a2 * s * s * (3.0 * a1 * a2 * a2 + 3.0 * a1 * a1 * a2 - a1 * a1 - a2 * a2 - a1 * a2)
            / (3.0 * (a1 + a2).powi(2) * (a1 + a2 - 1.0))
    }
    pub fn gamma11(a1: f64, a2: f64, c: f64) -> f64 {
        (a1 - a2) / 2.0 * c
    }
    pub fn h01(a1: f64, a2: f64, c: f64) -> f64 {
        (a1 - a2) * (4.0 * a1 + 4.0 * a2 - 3.0) / (4.0 * a1 * a2 * (2.0 * a1 + 2.0 * a2 - 3.0)) * c
    }
    /// Left side of the final diagonal equation (coefficient of `v^4` in the imaginary part).
    pub fn step3_im4(a: f64, c: f64) -> f64 {
        a * (2.0 * a - 1.0) * (16.0 * a.powi(4) - 32.0 * a.powi(3) + 15.0 * a * a + 4.0 * c * c)
            / (4.0 * (4.0 * a - 3.0).powi(2))
            * c
    }
}

/// `Im b1, Im b2` solving the two first-order linear constraints for given `Im c`.
pub fn solve_im_b(a1: f64, a2: f64, c: f64) -> Result<(f64, f64)> {
    if (2.0 * a1 + 2.0 * a2 - 3.0).abs() < 1e-12 {
        return Err(Error::Precondition("2(a1 + a2) - 3 vanishes".into()));
    }
    let re3 = |b1, b2, c| constraint(&solve_orders(&raw(a1, a2, b1, b2, c)), Part::Re, 0, 3);
    let im2 = |b1, b2, c| constraint(&solve_orders(&raw(a1, a2, b1, b2, c)), Part::Im, 0, 2);
    let m = Matrix2::new(re3(1.0, 0.0, 0.0), re3(0.0, 1.0, 0.0), im2(1.0, 0.0, 0.0), im2(0.0, 1.0, 0.0));
    let rhs = -Vector2::new(re3(0.0, 0.0, c), im2(0.0, 0.0, c));
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Precondition("singular first-order system".into()))?;
    Ok((x[0], x[1]))
}

/// Quadratic `k2 C^2 + k1 C + k0` of a leftover constraint along the first-order solution curve.
fn quadratic_in_c(a1: f64, a2: f64, part: Part, i: u32, j: u32) -> Result<[f64; 3]> {
    let f = |c: f64| -> Result<f64> {
        let (b1, b2) = solve_im_b(a1, a2, c)?;
        Ok(constraint(&solve_orders(&raw(a1, a2, b1, b2, c)), part, i, j))
    };
    let (f0, fp, fm) = (f(0.0)?, f(1.0)?, f(-1.0)?);
    Ok([f0, (fp - fm) / 2.0, (fp + fm) / 2.0 - f0])
}

fn linear_form(a1: f64, a2: f64, part: Part, i: u32, j: u32) -> [f64; 3] {
    let e = |b1, b2, c| constraint(&solve_orders(&raw(a1, a2, b1, b2, c)), part, i, j);
    [e(1.0, 0.0, 0.0), e(0.0, 1.0, 0.0), e(0.0, 0.0, 1.0)]
}

/// Distance between two linear forms after normalizing each to unit length, up to sign.
pub fn projective_distance(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let n = |v: &[f64; 3]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nx, ny) = (n(x), n(y));
    if nx == 0.0 || ny == 0.0 {
        return if nx == ny { 0.0 } else { 1.0 };
    }
    let d = |s: f64| (0..3).map(|k| (x[k] / nx - s * y[k] / ny).powi(2)).sum::<f64>().sqrt();
    d(1.0).min(d(-1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(b.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualLine {
    pub name: String,
    pub solver: Option<f64>,
    pub printed: Option<f64>,
    pub residual: f64,
    /// Identities the printed text gets wrong are still reported, marked here.
    pub printed_as_is: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeylemmaReport {
    pub params: KeylemmaParams<f64>,
    /// Leading coefficients found by direct expansion: `[Re u^2, Im u, Im v]`.
    pub leading: [f64; 3],
    pub lines: Vec<ResidualLine>,
}

impl KeylemmaReport {
    pub fn line(&self, name: &str) -> Option<&ResidualLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

/// Compare every printed closed form with the coefficient equations extracted by the solver.
pub fn keylemma_equations(p: &KeylemmaParams<f64>) -> Result<KeylemmaReport> {
    p.validate()?;
    let (a1, a2, c) = (p.a1, p.a2, p.im_c);
    if (2.0 * (a1 + a2) - 3.0).abs() < 1e-12 {
        return Err(Error::Precondition("2(a1 + a2) - 3 vanishes".into()));
    }
    let (re, im) = expand_phi_uv(p, 2);
    let leading = [re.coeff(&[2, 0]), im.coeff(&[1, 0]), im.coeff(&[0, 1])];
    let mut lines = Vec::new();
    let mut add = |name: &str, solver: Option<f64>, printed: Option<f64>, residual: f64, as_is: bool| {
        lines.push(ResidualLine { name: name.into(), solver, printed, residual, printed_as_is: as_is })
    };

    let at_point = solve_orders(p);
    let g02 = at_point.gamma.coeff(&[0, 2]);
    let pg02 = printed::gamma02(a1, a2, p.im_b1, p.im_b2, c);
    add("gamma02", Some(g02), Some(pg02), rel(g02, pg02), true);

    let rel_first = linear_form(a1, a2, Part::Re, 0, 3);
    add("b-relation", None, None, projective_distance(&rel_first, &printed::b_relation(a1, a2)), true);
    add("b-relation-corrected", None, None, projective_distance(&rel_first, &printed::b_relation_corrected(a1, a2)), false);
    let rel_second = linear_form(a1, a2, Part::Im, 0, 2);
    add("b-relation-second", None, None, projective_distance(&rel_second, &printed::b_relation_second(a1, a2)), true);

    let (b1, b2) = solve_im_b(a1, a2, c)?;
    let (pb1, pb2) = (printed::im_b1(a1, a2, c), printed::im_b2(a1, a2, c));
    add("Im_b1", Some(b1), Some(pb1), rel(b1, pb1), true);
    add("Im_b2", Some(b2), Some(pb2), rel(b2, pb2), true);

    let on_curve = solve_orders(&raw(a1, a2, b1, b2, c));
    let g02s = on_curve.gamma.coeff(&[0, 2]);
    let pg02s = printed::gamma02_substituted(a1, a2, c);
    add("gamma02-substituted", Some(g02s), Some(pg02s), rel(g02s, pg02s), true);
    let g11 = on_curve.gamma.coeff(&[1, 1]);
    add("gamma11", Some(g11), Some(printed::gamma11(a1, a2, c)), rel(g11, printed::gamma11(a1, a2, c)), true);
    let h01 = on_curve.h.coeff(&[0, 1]);
    add("h01", Some(h01), Some(printed::h01(a1, a2, c)), rel(h01, printed::h01(a1, a2, c)), true);

    let q_main = quadratic_in_c(a1, a2, Part::Re, 0, 4)?;
    let imc2_solved = -q_main[0] / q_main[2];
    let p_main = printed::imc2(a1, a2);
    add("imc2", Some(imc2_solved), Some(p_main), rel(imc2_solved, p_main) + q_main[1].abs(), true);

    let dist_diag = (a1 - a2).abs().min((a1 + a2 - 1.0).abs());
    if dist_diag > 1e-3 {
        let q_alt = quadratic_in_c(a1, a2, Part::Im, 0, 3)?;
        let imc2_alt_solved = -q_alt[0] / q_alt[2];
        let p_alt = printed::imc2_alt(a1, a2);
        add("imc2-alt", Some(imc2_alt_solved), Some(p_alt), rel(imc2_alt_solved, p_alt) + q_alt[1].abs(), true);
    }
    if (a1 - a2).abs() < 1e-15 {
        let im4 = constraint(&on_curve, Part::Im, 0, 4);
        let s3 = printed::step3_im4(a1, c);
        add("step3-Im4", Some(im4), Some(s3), rel(im4, s3), true);
    }
    Ok(KeylemmaReport { params: p.clone(), leading, lines })
}

/// The polynomial `P(a1, a2)` whose sign pattern rules out `a1 != a2`.
pub fn step2_p(a1: f64, a2: f64) -> f64 {
    2.0 * a1.powi(3) + 2.0 * a2.powi(3) + a1 * a2 * a2 + a1 * a1 * a2 - 3.0 * a1 * a1 - 3.0 * a2 * a2 + 3.0 * a1 * a2
}

fn step2_grad(a1: f64, a2: f64) -> [f64; 2] {
    [
        6.0 * a1 * a1 + a2 * a2 + 2.0 * a1 * a2 - 6.0 * a1 + 3.0 * a2,
        a1 * a1 + 6.0 * a2 * a2 + 2.0 * a1 * a2 + 3.0 * a1 - 6.0 * a2,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Report {
    pub p_at_half: f64,
    /// Max of `P` over interior samples of the three boundary curves.
    pub boundary_max: [f64; 3],
    /// Max deviation of the sampled values from the printed one-variable restrictions.
    pub restriction_error: f64,
    pub boundary_negative: bool,
    pub critical_points: Vec<[f64; 2]>,
    pub critical_ok: bool,
}

/// Boundary sign check and critical points of `P` by multi-start Newton.
pub fn keylemma_step2_geometry() -> Step2Report {
    let n = 10_000;
    let mut bmax = [f64::NEG_INFINITY; 3];
    let mut rerr: f64 = 0.0;
    for k in 1..n {
        let t = k as f64 / n as f64;
        let (x0, x1, x2) = (t, t / 2.0, 0.5 + t / 2.0);
        let v = [step2_p(x0, 0.0), step2_p(x1, x1), step2_p(x2, 1.0 - x2)];
        // On the anti-diagonal the restriction is -(2a - 1)^2; the printed text drops the square.
        let w = [2.0 * x0.powi(3) - 3.0 * x0 * x0, 3.0 * x1 * x1 * (2.0 * x1 - 1.0), -(2.0 * x2 - 1.0).powi(2)];
        for i in 0..3 {
            bmax[i] = bmax[i].max(v[i]);
            rerr = rerr.max((v[i] - w[i]).abs());
        }
    }
    let mut crit: Vec<[f64; 2]> = Vec::new();
    for i in 0..=24 {
        for j in 0..=24 {
            let mut x = [-1.0 + 3.0 * i as f64 / 24.0, -1.0 + 3.0 * j as f64 / 24.0];
            for _ in 0..100 {
                let g = step2_grad(x[0], x[1]);
                let jac = Matrix2::new(
                    12.0 * x[0] + 2.0 * x[1] - 6.0,
                    2.0 * x[1] + 2.0 * x[0] + 3.0,
                    2.0 * x[0] + 2.0 * x[1] + 3.0,
                    12.0 * x[1] + 2.0 * x[0] - 6.0,
                );
                let Some(s) = jac.lu().solve(&Vector2::new(g[0], g[1])) else { break };
                x = [x[0] - s[0], x[1] - s[1]];
                if s.norm() < 1e-15 {
                    break;
                }
            }
            let g = step2_grad(x[0], x[1]);
            if g[0].abs().max(g[1].abs()) < 1e-12 && !crit.iter().any(|c| (c[0] - x[0]).abs().max((c[1] - x[1]).abs()) < 1e-7) {
                crit.push(x);
            }
        }
    }
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expected = [[0.0, 0.0], [1.0 / 3.0, 1.0 / 3.0]];
    let critical_ok = crit.len() == 2
        && crit.iter().zip(&expected).all(|(c, e)| (c[0] - e[0]).abs() < 1e-9 && (c[1] - e[1]).abs() < 1e-9);
    Step2Report {
        p_at_half: step2_p(0.5, 0.5),
        boundary_max: bmax,
        restriction_error: rerr,
        boundary_negative: bmax.iter().all(|&m| m < 0.0),
        critical_points: crit,
        critical_ok,
    }
}

/// Real roots of the final diagonal equation `-a(2a-1)(4a-3)^2/8 + a^2(4a-3)(4a-5)/4 = 0`.
pub fn step3_roots() -> Vec<f64> {
    fn mul(p: &[f64], q: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                r[i + j] += a * b;
            }
        }
        r
    }
    // Coefficients in increasing degree.
    let lhs = mul(&mul(&[0.0, -1.0 / 8.0], &[-1.0, 2.0]), &mul(&[-3.0, 4.0], &[-3.0, 4.0]));
    let rhs = mul(&mul(&[0.0, 0.0, -1.0 / 4.0], &[-3.0, 4.0]), &[-5.0, 4.0]);
    let mut poly: Vec<f64> = (0..lhs.len().max(rhs.len()))
        .map(|k| lhs.get(k).copied().unwrap_or(0.0) - rhs.get(k).copied().unwrap_or(0.0))
        .collect();
    while poly.last().is_some_and(|c| c.abs() < 1e-12) {
        poly.pop();
    }
    let mut roots = Vec::new();
    while poly.first().is_some_and(|c| c.abs() < 1e-15) && poly.len() > 1 {
        poly.remove(0);
        roots.push(0.0);
    }
    let deg = poly.len() - 1;
    if deg >= 1 {
        let lead = poly[deg];
        let comp = DMatrix::from_fn(deg, deg, |i, j| {
            if j == deg - 1 {
                -poly[i] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        for z in comp.complex_eigenvalues().iter() {
            if z.im.abs() < 1e-12 {
                roots.push(z.re);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Imaginary parts that satisfy as many low-order constraints as possible at `(a1, a2)`:
/// `Im b` from the first-order closed forms, `Im c` from the second-order relation when real.
pub fn adversarial_params(a1: f64, a2: f64) -> Result<KeylemmaParams<f64>> {
    let r = printed::imc2(a1, a2);
    let c = if r > 0.0 { r.sqrt() } else { 0.0 };
    KeylemmaParams::new(a1, a2, printed::im_b1(a1, a2, c), printed::im_b2(a1, a2, c), c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub a1: f64,
    pub a2: f64,
    pub im_c: f64,
    pub obstruction: Option<Constraint>,
}

/// Sweep `a1 = i/(n+1)`, `a2 = (j/m) min(a1, 1 - a1)` with adversarial imaginary parts.
pub fn grid_sweep(n: usize, m: usize) -> Result<Vec<GridPoint>> {
    let mut out = Vec::with_capacity(n * m);
    for i in 1..=n {
        let a1 = i as f64 / (n + 1) as f64;
        for j in 1..=m {
            let a2 = j as f64 / m as f64 * a1.min(1.0 - a1);
            let p = adversarial_params(a1, a2)?;
            let a = attempt_factorization(&p)?;
            out.push(GridPoint { a1, a2, im_c: p.im_c, obstruction: a.obstruction });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n.into(), d.into())
    }

    fn pf(a1: f64, a2: f64, b1: f64, b2: f64, c: f64) -> KeylemmaParams<f64> {
        KeylemmaParams::new(a1, a2, b1, b2, c).unwrap()
    }

    #[test]
    fn leading_terms() {
        let p = pf(0.6, 0.3, 0.1, -0.2, 0.05);
        let (re, im) = expand_phi_uv(&p, 6);
        let g = 0.6 * 0.3;
        assert!((re.coeff(&[2, 0]) - 4.0 * g * g).abs() < 1e-14);
        assert!(re.coeff(&[1, 1]).abs() < 1e-14 && re.coeff(&[0, 2]).abs() < 1e-14);
        assert!((im.coeff(&[1, 0]) + 2.0 * g).abs() < 1e-14);
        assert!(im.coeff(&[0, 1]).abs() < 1e-14);
        assert_eq!(re.constant_term(), 0.0);
    }

    #[test]
    fn exact_expansion_matches_binary64() {
        let pq = KeylemmaParams::new(q(3, 5), q(1, 4), q(1, 7), q(-2, 9), q(1, 3)).unwrap();
        let (re_q, im_q) = expand_phi_uv(&pq, 5);
        let (re_f, im_f) = expand_phi_uv(&pq.to_f64(), 5);
        for (k, v) in re_q.terms() {
            assert!((v.as_f64() - re_f.coeff(k)).abs() < 1e-14);
        }
        for (k, v) in im_q.terms() {
            assert!((v.as_f64() - im_f.coeff(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn exceptional_point_factorizes_exactly() {
        let p = KeylemmaParams::new(q(1, 2), q(1, 2), q(0, 1), q(0, 1), q(0, 1)).unwrap();
        let a = attempt_factorization(&p).unwrap();
        assert!(a.obstruction.is_none(), "{:?}", a.obstruction);
        assert!(a.constraints.iter().all(|c| c.residual == 0.0));
        // gamma = -sin(u/2), h = cos(u/2)
        assert_eq!(a.gamma.coeff(&[1, 0]), q(-1, 2));
        assert_eq!(a.gamma.coeff(&[3, 0]), q(1, 48));
        assert_eq!(a.gamma.coeff(&[0, 2]), q(0, 1));
        assert_eq!(a.h.coeff(&[2, 0]), q(-1, 8));
        assert_eq!(a.h.constant_term(), q(1, 1));
        let f = attempt_factorization(&p.to_f64()).unwrap();
        assert!(f.obstruction.is_none());
    }

    #[test]
    fn nearby_points_are_obstructed() {
        let p = KeylemmaParams::new(q(1, 2), q(1, 4), q(0, 1), q(0, 1), q(0, 1)).unwrap();
        let o = attempt_factorization(&p).unwrap().obstruction.unwrap();
        assert!(o.order <= 5);
        for a1 in [0.6, 0.7, 0.8] {
            let p = pf(a1, 1.0 - a1, 0.0, 0.0, 0.0);
            let o = attempt_factorization(&p).unwrap().obstruction.unwrap();
            assert!((o.part == Part::Re && o.order <= 5) || (o.part == Part::Im && o.order <= 4));
        }
    }

    #[test]
    fn rejects_inadmissible() {
        assert!(KeylemmaParams::new(0.3, 0.6, 0.0, 0.0, 0.0).is_err());
        assert!(KeylemmaParams::new(0.8, 0.3, 0.0, 0.0, 0.0).is_err());
        assert!(KeylemmaParams::new(0.5, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn equations_at_half_half() {
        assert_eq!(printed::imc2(0.5, 0.5), 0.0);
        let r = keylemma_equations(&pf(0.5, 0.5, 0.0, 0.0, 0.0)).unwrap();
        assert!(r.line("imc2").unwrap().residual < 1e-10);
    }

    #[test]
    fn step2_and_step3() {
        let s = keylemma_step2_geometry();
        assert_eq!(s.p_at_half, 0.0);
        assert!(step2_p(0.6, 0.2) < 0.0);
        assert!(s.boundary_negative && s.critical_ok, "{s:?}");
        assert!(s.restriction_error < 1e-12);
        let r = step3_roots();
        assert_eq!(r.len(), 2);
        assert!(r[0].abs() < 1e-12 && (r[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn minus_one_corner_value() {
        for (a1, a2) in [(0.6, 0.3), (0.5, 0.5), (0.2, 0.1)] {
            let v = pf(a1, a2, 0.3, -0.1, 0.2).lift().eval(&[Complex64::new(-1.0, 0.0); 2]).unwrap();
            assert!((v.re - 4.0 * (a1 + a2) * (1.0 - a1 - a2)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_obstructed_everywhere() {
        let g = grid_sweep(20, 20).unwrap();
        assert_eq!(g.len(), 400);
        for p in &g {
            let o = p.obstruction.as_ref().unwrap_or_else(|| panic!("no obstruction at {p:?}"));
            assert!(o.residual.abs() > REL_TOL * o.scale);
        }
    }

    #[test]
    fn printed_first_relation_has_sign_slip() {
        let r = keylemma_equations(&pf(0.6, 0.3, 0.0, 0.0, 0.1)).unwrap();
        assert!(r.line("b-relation").unwrap().residual > 1e-3);
        assert!(r.line("b-relation-corrected").unwrap().residual < 1e-10);
        assert!(r.line("imc2-alt").unwrap().residual < 1e-10);
        assert!(r.leading[0] > 0.0 && r.leading[1] < 0.0);
    }

    fn admissible() -> impl Strategy<Value = (f64, f64)> {
        (0.02f64..0.98, 0.02f64..1.0).prop_map(|(s, t)| (s, t * s.min(1.0 - s)))
    }

    proptest! {
        #[test]
        fn series_matches_direct_evaluation((a1, a2) in admissible(), b1 in -1.0f64..1.0, b2 in -1.0f64..1.0, c in -1.0f64..1.0,
                                           u in -1e-2f64..1e-2, v in -1e-2f64..1e-2) {
            let p = pf(a1, a2, b1, b2, c);
            let (re, im) = expand_phi_uv(&p, 6);
            let th = [a2 * (u + v), a1 * (u - v)];
            let z = p.lift().eval_theta(&th);
            prop_assert!((re.eval(&[u, v]) - z.re).abs() < 1e-10);
            prop_assert!((im.eval(&[u, v]) - z.im).abs() < 1e-10);
        }

        #[test]
        fn solver_equations_match_printed((a1, a2) in admissible(), c in -1.0f64..1.0) {
            let p = pf(a1, a2, 0.1, -0.1, c);
            let r = keylemma_equations(&p).unwrap();
            for name in ["gamma02", "b-relation-corrected", "b-relation-second", "Im_b1", "Im_b2", "gamma02-substituted", "gamma11", "h01", "imc2"] {
                let l = r.line(name).unwrap();
                prop_assert!(l.residual <= 1e-10, "{name}: {l:?}");
            }
        }
    }
}
