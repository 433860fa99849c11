//! Bohr lifts, torus minimization, Hessian signatures and local re-expansion.

use crate::error::{Error, Result};
use crate::genset::GeneratingSet;
use crate::series::TruncatedSeries;
use crate::symbol::DirichletSymbol;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Polynomial `constant + sum_alpha c_alpha z^alpha` on the polydisc.
#[derive(Clone, Debug, PartialEq)]
pub struct BohrLift {
    pub constant: Complex64,
    pub terms: BTreeMap<Vec<u32>, Complex64>,
    pub dim: usize,
    /// Generators `q_j` backing the coordinates, when known.
    pub generators: Vec<u64>,
}

/// The lift of `phi` (characteristic zero) over `gen`: constant `c1 - 1/2`.
pub fn lift(sym: &DirichletSymbol, gen: &GeneratingSet) -> Result<BohrLift> {
    if sym.c0 != 0 {
        return Err(Error::Precondition("the Bohr lift with the -1/2 shift needs c0 = 0".into()));
    }
    lift_with_shift(sym, gen, -0.5)
}

/// The lift of the `phi_0` part of a symbol with `c0 >= 1` (no shift).
pub fn lift_phi0(sym: &DirichletSymbol, gen: &GeneratingSet) -> Result<BohrLift> {
    lift_with_shift(sym, gen, 0.0)
}

fn lift_with_shift(sym: &DirichletSymbol, gen: &GeneratingSet, shift: f64) -> Result<BohrLift> {
    let mut terms = BTreeMap::new();
    for (n, c) in &sym.terms {
        let alpha = gen
            .exponent_map
            .get(n)
            .ok_or_else(|| Error::Inconsistent(format!("generating set does not cover frequency {n}")))?;
        terms.insert(alpha.clone(), c.to_c64());
    }
    Ok(BohrLift {
        constant: sym.c1.to_c64() + shift,
        terms,
        dim: gen.dim(),
        generators: gen.generators.clone(),
    })
}

impl BohrLift {
    pub fn new(constant: Complex64, terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>, dim: usize) -> Result<Self> {
        let mut map: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (a, c) in terms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.len() });
            }
            if a.iter().all(|&x| x == 0) {
                return Err(Error::Precondition("use the constant field for the zero multi-index".into()));
            }
            *map.entry(a).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| c.norm() != 0.0);
        Ok(Self { constant, terms: map, dim, generators: vec![] })
    }

    /// Build from a polynomial in the variables `x_j = 1 - z_j`.
    pub fn from_one_minus_z(series: &TruncatedSeries<Complex64>) -> Result<Self> {
        let d = series.nvars();
        let cap = series.cap();
        let one = TruncatedSeries::constant(d, cap, Complex64::new(1.0, 0.0));
        let mut out = TruncatedSeries::zero(d, cap);
        for (beta, c) in series.terms() {
            let mut term = TruncatedSeries::constant(d, cap, *c);
            for (j, &b) in beta.iter().enumerate() {
                let x = &one - &TruncatedSeries::variable(d, cap, j);
                for _ in 0..b {
                    term = &term * &x;
                }
            }
            out = &out + &term;
        }
        let constant = out.constant_term();
        Self::new(constant, out.terms().filter(|(i, _)| i.iter().any(|&x| x > 0)).map(|(i, c)| (i.clone(), *c)), d)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Every monomial involves at most one variable.
    pub fn is_separated(&self) -> bool {
        self.terms.keys().all(|a| a.iter().filter(|&&x| x > 0).count() <= 1)
    }

    /// `sum |c_alpha| + |Im constant|`, a bound for `|Im Phi|` on the closed polydisc.
    pub fn im_bound(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum::<f64>() + self.constant.im.abs()
    }

    pub fn coef_l1(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Result<Complex64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: z.len() });
        }
        let mut acc = self.constant;
        for (a, c) in &self.terms {
            let mut t = *c;
            for (zj, &e) in z.iter().zip(a) {
                if e > 0 {
                    t *= zj.powu(e);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// `Phi(e^{i theta})`.
    pub fn eval_theta(&self, theta: &[f64]) -> Complex64 {
        debug_assert_eq!(theta.len(), self.dim);
        let mut acc = self.constant;
        for (a, c) in &self.terms {
            let psi: f64 = a.iter().zip(theta).map(|(&e, t)| e as f64 * t).sum();
            acc += c * Complex64::new(psi.cos(), psi.sin());
        }
        acc
    }

    pub fn re_theta(&self, theta: &[f64]) -> f64 {
        self.eval_theta(theta).re
    }

    /// Analytic gradient and Hessian of `Re Phi(e^{i theta})`.
    pub fn re_gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (a, c) in &self.terms {
            let psi: f64 = a.iter().zip(theta).map(|(&e, t)| e as f64 * t).sum();
            let w = c * Complex64::new(psi.cos(), psi.sin());
            for j in 0..d {
                let aj = a[j] as f64;
                if aj == 0.0 {
                    continue;
                }
                g[j] -= aj * w.im;
                for k in 0..d {
                    h[(j, k)] -= aj * a[k] as f64 * w.re;
                }
            }
        }
        (g, h)
    }

    /// Analytic gradient of `Im Phi(e^{i theta})`.
    pub fn im_gradient(&self, theta: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (a, c) in &self.terms {
            let psi: f64 = a.iter().zip(theta).map(|(&e, t)| e as f64 * t).sum();
            let w = c * Complex64::new(psi.cos(), psi.sin());
            for j in 0..self.dim {
                g[j] += a[j] as f64 * w.re;
            }
        }
        g
    }

    /// Maximum of `|grad Re Phi|` bound: `sum |c| |alpha|`, used for Lipschitz certification.
    pub fn lipschitz_sup(&self) -> f64 {
        self.terms.values().zip(self.terms.keys()).map(|(c, a)| c.norm() * a.iter().sum::<u32>() as f64).sum()
    }

    /// Bound on the sup-norm operator norm of the Hessian: `sum |c| |alpha|^2`.
    pub fn hessian_sup(&self) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| {
                let s = a.iter().sum::<u32>() as f64;
                c.norm() * s * s
            })
            .sum()
    }
}

/// Boundary-search tuning knobs.
#[derive(Clone, Debug)]
pub struct BoundaryConfig {
    /// Seeds per dimension; `None` picks 64 for d <= 3, 16 for d <= 6 and 8 above.
    pub grid: Option<usize>,
    pub tol: f64,
    pub dedup: f64,
    pub rank_rel_tol: f64,
    pub max_points: usize,
    pub max_seeds: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { grid: None, tol: 1e-9, dedup: 1e-4, rank_rel_tol: 1e-6, max_points: 64, max_seeds: 4096 }
    }
}

impl BoundaryConfig {
    pub fn grid_for(&self, d: usize) -> usize {
        self.grid.unwrap_or(match d {
            0..=3 => 64,
            4..=6 => 16,
            _ => 8,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExpansion {
    /// Coefficients of `(1 - z_j/w_j)`.
    pub a: Vec<Complex64>,
    /// Coefficients of `(1 - z_j/w_j)^2`.
    pub b: Vec<Complex64>,
    /// `c[j][k]` for `j < k`: coefficient of `(1 - z_j/w_j)(1 - z_k/w_k)`; zero on and below the diagonal.
    pub c: Vec<Vec<Complex64>>,
    /// The complete re-expansion `Phi(w(1-x)) - i tau` as a polynomial in `x`.
    #[serde(skip)]
    pub full: Option<TruncatedSeries<Complex64>>,
}

impl LocalExpansion {
    /// Terms of total order between 3 and `order`.
    pub fn higher(&self, order: u32) -> Option<TruncatedSeries<Complex64>> {
        let f = self.full.as_ref()?;
        Some(TruncatedSeries::from_terms(
            f.nvars(),
            order,
            f.terms().filter(|(i, _)| i.iter().sum::<u32>() >= 3).map(|(i, c)| (i.clone(), *c)),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub theta: Vec<f64>,
    pub tau: f64,
    pub re_value: f64,
    pub gradient_norm: f64,
    pub hessian: Vec<Vec<f64>>,
    /// Ascending eigenvalues of the Hessian of `Re phi`.
    pub eigvals: Vec<f64>,
    /// Unit eigenvectors matching `eigvals`.
    pub eigvecs: Vec<Vec<f64>>,
    pub index_j: usize,
    pub local: LocalExpansion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeKind {
    Restricted,
    Unrestricted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScan {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub range_kind: RangeKind,
    pub points: Vec<BoundaryPoint>,
    /// Set when more boundary points were found than `max_points`.
    pub truncated: bool,
}

fn wrap(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

fn ang_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| wrap(x - y).abs()).fold(0.0, f64::max)
}

fn sorted_eigen(h: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = h.nrows();
    if d == 0 {
        return (vec![], vec![]);
    }
    let e = SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = idx.iter().map(|&i| e.eigenvectors.column(i).iter().copied().collect()).collect();
    (vals, vecs)
}

/// Damped Newton on `Re phi` with eigenvalue flooring and backtracking.
pub fn polish_minimum(phi: &BohrLift, start: &[f64]) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut f = phi.re_theta(&x);
    let noise = 1e-14 * (phi.constant.norm() + phi.coef_l1());
    for _ in 0..200 {
        let (g, h) = phi.re_gradient_hessian(&x);
        if g.norm() < 1e-15 {
            break;
        }
        let hn = h.norm();
        let floor = 1e-12 * (1.0 + hn);
        let e = SymmetricEigen::new(h);
        let mut step = DVector::zeros(phi.dim);
        for i in 0..phi.dim {
            let v = e.eigenvectors.column(i);
            let lam = e.eigenvalues[i].abs().max(floor);
            step -= v * (v.dot(&g) / lam);
        }
        let mut t = 1.0;
        let mut moved = false;
        let gn = g.norm();
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let fc = phi.re_theta(&cand);
            // Near a degenerate minimum the values drown in rounding; then accept on gradient decrease.
            let flat = fc <= f + noise && phi.re_gradient_hessian(&cand).0.norm() < gn;
            if fc < f || flat {
                x = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let x: Vec<f64> = x.into_iter().map(wrap).collect();
    let f = phi.re_theta(&x);
    (x, f)
}

fn grid_seeds(phi: &BohrLift, n: usize) -> (Vec<(f64, Vec<f64>)>, f64, Vec<f64>) {
    let d = phi.dim;
    let total = n.pow(d as u32);
    let h = 2.0 * PI / n as f64;
    let point = |mut k: usize| -> Vec<f64> {
        let mut t = vec![0.0; d];
        for tj in t.iter_mut() {
            *tj = -PI + h * (k % n) as f64;
            k /= n;
        }
        t
    };
    let vals: Vec<f64> = (0..total).into_par_iter().map(|k| phi.re_theta(&point(k))).collect();
    let stride: Vec<usize> = (0..d).map(|j| n.pow(j as u32)).collect();
    let mut seeds: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .filter(|&k| {
            let v = vals[k];
            (0..d).all(|j| {
                let c = (k / stride[j]) % n;
                let up = k - c * stride[j] + ((c + 1) % n) * stride[j];
                let dn = k - c * stride[j] + ((c + n - 1) % n) * stride[j];
                v <= vals[up] && v <= vals[dn]
            })
        })
        .map(|k| (vals[k], point(k)))
        .collect();
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.partial_cmp(&b.1).unwrap()));
    let (kmin, vmin) = vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    (seeds, vmin, point(kmin))
}

/// Locate all boundary points (zeros of `Re Phi` on the torus) by seeded multi-start Newton.
pub fn find_boundary_points(phi: &BohrLift, cfg: &BoundaryConfig) -> Result<BoundaryScan> {
    if phi.dim == 0 || phi.terms.is_empty() {
        let v = phi.constant.re;
        if v < -cfg.tol {
            return Err(Error::NotInClass(format!("constant lift has real part {v}")));
        }
        let range_kind = if v > cfg.tol { RangeKind::Restricted } else { RangeKind::Unrestricted };
        return Ok(BoundaryScan { min_value: v, argmin: vec![0.0; phi.dim], range_kind, points: vec![], truncated: false });
    }
    let (mut seeds, gmin, gargmin) = grid_seeds(phi, cfg.grid_for(phi.dim));
    seeds.truncate(cfg.max_seeds);
    let polished: Vec<(Vec<f64>, f64)> = seeds.par_iter().map(|(_, s)| polish_minimum(phi, s)).collect();

    let (mut min_value, mut argmin) = (gmin, gargmin);
    for (x, f) in &polished {
        if *f < min_value {
            min_value = *f;
            argmin = x.clone();
        }
    }
    if min_value < -cfg.tol {
        return Err(Error::NotInClass(format!("min Re Phi on the torus is {min_value:.3e} < 0")));
    }
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    let mut truncated = false;
    for (x, f) in &polished {
        if *f > cfg.tol {
            continue;
        }
        if accepted.iter().any(|y| ang_dist(x, y) < cfg.dedup) {
            continue;
        }
        if accepted.len() == cfg.max_points {
            truncated = true;
            break;
        }
        accepted.push(x.clone());
    }
    accepted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let points = accepted.iter().map(|x| boundary_point(phi, x, cfg)).collect::<Result<Vec<_>>>()?;
    let range_kind = if points.is_empty() { RangeKind::Restricted } else { RangeKind::Unrestricted };
    Ok(BoundaryScan { min_value, argmin, range_kind, points, truncated })
}

/// Assemble Hessian data and the local expansion at a boundary angle.
pub fn boundary_point(phi: &BohrLift, theta: &[f64], cfg: &BoundaryConfig) -> Result<BoundaryPoint> {
    let val = phi.eval_theta(theta);
    let (g, h) = phi.re_gradient_hessian(theta);
    let (eigvals, eigvecs) = sorted_eigen(&h);
    let thr = cfg.rank_rel_tol * (1.0 + h.norm());
    let index_j = eigvals.iter().filter(|&&l| l > thr).count();
    let w: Vec<Complex64> = theta.iter().map(|&t| Complex64::new(t.cos(), t.sin())).collect();
    let local = local_expansion(phi, &w, val.im)?;
    Ok(BoundaryPoint {
        theta: theta.to_vec(),
        tau: val.im,
        re_value: val.re,
        gradient_norm: g.norm(),
        hessian: (0..phi.dim).map(|i| h.row(i).iter().copied().collect()).collect(),
        eigvals,
        eigvecs,
        index_j,
        local,
    })
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Phi(w(1 - x)) - i tau` as a polynomial in `x`, without class checks.
pub fn expand_at(phi: &BohrLift, w: &[Complex64], tau: f64) -> Result<TruncatedSeries<Complex64>> {
    let d = phi.dim;
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.len() });
    }
    let cap = phi.degree().max(2);
    let mut full = TruncatedSeries::constant(d, cap, phi.constant - Complex64::new(0.0, tau));
    for (alpha, c) in &phi.terms {
        let mut coef = *c;
        for (wj, &e) in w.iter().zip(alpha) {
            coef *= wj.powu(e);
        }
        // prod_j (1 - x_j)^{alpha_j}: expand each factor binomially.
        let mut parts: Vec<(Vec<u32>, f64)> = vec![(vec![0; d], 1.0)];
        for (j, &e) in alpha.iter().enumerate() {
            let mut next = Vec::new();
            for (idx, v) in &parts {
                for k in 0..=e {
                    let mut i2 = idx.clone();
                    i2[j] = k;
                    let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                    next.push((i2, v * s * binom(e, k)));
                }
            }
            parts = next;
        }
        for (idx, v) in parts {
            full.add_term(idx, coef * v);
        }
    }
    Ok(full)
}

/// Exact re-expansion `Phi(w(1 - x)) - i tau`, with the first-order class constraints enforced.
pub fn local_expansion(phi: &BohrLift, w: &[Complex64], tau: f64) -> Result<LocalExpansion> {
    let d = phi.dim;
    let full = expand_at(phi, w, tau)?;
    let unit = |j: usize, p: u32| {
        let mut i = vec![0; d];
        i[j] = p;
        i
    };
    let a: Vec<Complex64> = (0..d).map(|j| full.coeff(&unit(j, 1))).collect();
    let b: Vec<Complex64> = (0..d).map(|j| full.coeff(&unit(j, 2))).collect();
    let mut c = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for j in 0..d {
        for k in j + 1..d {
            let mut i = vec![0; d];
            i[j] = 1;
            i[k] = 1;
            c[j][k] = full.coeff(&i);
        }
    }
    let scale = 1e-6 * (1.0 + phi.coef_l1());
    for (j, aj) in a.iter().enumerate() {
        if aj.im.abs() > scale || aj.re < -scale {
            return Err(Error::NotInClass(format!("linear coefficient a_{} = {aj} violates a_j >= 0", j + 1)));
        }
    }
    Ok(LocalExpansion { a, b, c, full: Some(full) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JcReport {
    pub pass: bool,
    pub reason: String,
}

/// Check that the first-order coefficients are real, nonnegative and not all zero.
pub fn julia_caratheodory_check(exp: &LocalExpansion) -> JcReport {
    let tol = 1e-9;
    let constant_phi = exp.full.as_ref().map(|f| f.terms().all(|(i, c)| i.iter().all(|&x| x == 0) || c.norm() <= tol));
    if constant_phi == Some(true) {
        return JcReport { pass: true, reason: "constant lift".into() };
    }
    if let Some((j, aj)) = exp.a.iter().enumerate().find(|(_, a)| a.im.abs() > tol || a.re < -tol) {
        return JcReport { pass: false, reason: format!("a_{} = {aj} is not real nonnegative", j + 1) };
    }
    if exp.a.iter().all(|a| a.re <= tol) {
        return JcReport { pass: false, reason: "all first-order coefficients vanish".into() };
    }
    JcReport { pass: true, reason: "first-order coefficients real, nonnegative, not all zero".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genset::{complex_dimension, optimal_set, SearchConfig};
    use crate::symbol::parse_symbol;
    use proptest::prelude::*;

    pub(crate) fn lift_of(text: &str) -> BohrLift {
        let s = parse_symbol(text).unwrap();
        let (_, sets) = complex_dimension(&s.support(), &SearchConfig::default()).unwrap();
        lift(&s, optimal_set(&sets).unwrap()).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn lifts_of_the_mixed_examples() {
        let p1 = lift_of("9/2 - 2^-s - 3^-s - 2*6^-s");
        assert_eq!(p1.constant, c(4.0));
        let want: BTreeMap<Vec<u32>, Complex64> =
            [(vec![1, 0], c(-1.0)), (vec![0, 1], c(-1.0)), (vec![1, 1], c(-2.0))].into_iter().collect();
        assert_eq!(p1.terms, want);
        let p2 = lift_of("13/2 - 4*2^-s - 4*3^-s + 2*6^-s");
        assert_eq!(p2.constant, c(6.0));
        assert_eq!(p2.terms[&vec![1, 1]], c(2.0));
        let k = lift_of("1");
        assert_eq!((k.constant, k.dim), (c(0.5), 0));
    }

    #[test]
    fn evaluation() {
        let p1 = lift_of("9/2 - 2^-s - 3^-s - 2*6^-s");
        assert_eq!(p1.eval(&[c(1.0), c(1.0)]).unwrap(), c(0.0));
        assert_eq!(p1.eval(&[c(-1.0), c(-1.0)]).unwrap(), c(4.0));
        assert!(matches!(p1.eval(&[c(1.0)]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hessians_at_origin() {
        let (g, h) = lift_of("9/2 - 2^-s - 3^-s - 2*6^-s").re_gradient_hessian(&[0.0, 0.0]);
        assert!(g.norm() < 1e-15);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 3.0]));
        let (_, h) = lift_of("13/2 - 4*2^-s - 4*3^-s + 2*6^-s").re_gradient_hessian(&[0.0, 0.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
    }

    #[test]
    fn boundary_points_of_mixed_examples() {
        let cfg = BoundaryConfig::default();
        let s1 = find_boundary_points(&lift_of("9/2 - 2^-s - 3^-s - 2*6^-s"), &cfg).unwrap();
        assert_eq!(s1.points.len(), 1);
        assert!(s1.points[0].theta.iter().all(|t| t.abs() < 1e-6));
        assert_eq!(s1.points[0].index_j, 2);
        let s2 = find_boundary_points(&lift_of("13/2 - 4*2^-s - 4*3^-s + 2*6^-s"), &cfg).unwrap();
        assert_eq!(s2.points.len(), 1);
        let p = &s2.points[0];
        assert_eq!(p.index_j, 1);
        let v = &p.eigvecs[0];
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-6 && (v[0] - v[1]).abs() < 1e-6);
        let s3 = find_boundary_points(&lift_of("2 - 2^-s"), &cfg).unwrap();
        assert_eq!(s3.range_kind, RangeKind::Restricted);
        assert!((s3.min_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_members() {
        let r = find_boundary_points(&lift_of("1/2 + 2^-s"), &BoundaryConfig::default());
        assert!(matches!(r, Err(Error::NotInClass(_))));
    }

    #[test]
    fn linear_coefficients() {
        let cfg = BoundaryConfig::default();
        let p = boundary_point(&lift_of("9/2 - 2^-s - 3^-s - 2*6^-s"), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(p.local.a, vec![c(3.0), c(3.0)]);
        let p = boundary_point(&lift_of("13/2 - 4*2^-s - 4*3^-s + 2*6^-s"), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(p.local.a, vec![c(2.0), c(2.0)]);
        let one = BohrLift::new(c(1.5), [(vec![1], c(-1.5))], 1).unwrap();
        let e = local_expansion(&one, &[c(1.0)], 0.0).unwrap();
        assert_eq!((e.a[0], e.b[0]), (c(1.5), c(0.0)));
        assert!(julia_caratheodory_check(&e).pass);
    }

    #[test]
    fn julia_caratheodory_failures() {
        // (1 - z)^2 has vanishing first-order part.
        let sq = BohrLift::new(c(1.0), [(vec![1], c(-2.0)), (vec![2], c(1.0))], 1).unwrap();
        let e = local_expansion(&sq, &[c(1.0)], 0.0).unwrap();
        assert!(!julia_caratheodory_check(&e).pass);
        let zero = BohrLift::new(c(0.0), [], 1).unwrap();
        assert!(julia_caratheodory_check(&local_expansion(&zero, &[c(1.0)], 0.0).unwrap()).pass);
    }

    fn arb_lift(d: usize) -> impl Strategy<Value = BohrLift> {
        proptest::collection::vec((proptest::collection::vec(0u32..3, d), -2.0f64..2.0, -2.0f64..2.0), 1..6)
            .prop_filter_map("nonconstant", move |t| {
                let terms: Vec<_> =
                    t.into_iter().filter(|(a, _, _)| a.iter().any(|&x| x > 0)).map(|(a, x, y)| (a, Complex64::new(x, y))).collect();
                if terms.is_empty() {
                    None
                } else {
                    BohrLift::new(Complex64::new(0.3, 0.1), terms, d).ok()
                }
            })
    }

    proptest! {
        #[test]
        fn analytic_derivatives_match_differences(
            (phi, th) in (1usize..=4).prop_flat_map(|d| (arb_lift(d), proptest::collection::vec(-3.0f64..3.0, d)))
        ) {
            let (g, h) = phi.re_gradient_hessian(&th);
            let step = 1e-5;
            let d = phi.dim;
            for j in 0..d {
                let mut p = th.clone();
                let mut m = th.clone();
                p[j] += step;
                m[j] -= step;
                let fd = (phi.re_theta(&p) - phi.re_theta(&m)) / (2.0 * step);
                prop_assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()));
                let (gp, _) = phi.re_gradient_hessian(&p);
                let (gm, _) = phi.re_gradient_hessian(&m);
                for k in 0..d {
                    let fd2 = (gp[k] - gm[k]) / (2.0 * step);
                    prop_assert!((fd2 - h[(j, k)]).abs() <= 1e-6 * (1.0 + h[(j, k)].abs()));
                }
            }
        }

        #[test]
        fn local_expansion_resums_exactly(
            (phi, pts) in (1usize..=3).prop_flat_map(|d| (arb_lift(d), proptest::collection::vec(proptest::collection::vec(-3.1f64..3.1, d), 20)))
        ) {
            let w: Vec<Complex64> = (0..phi.dim).map(|j| Complex64::from_polar(1.0, 0.3 * j as f64)).collect();
            let tau = 0.25;
            let full = expand_at(&phi, &w, tau).unwrap();
            for th in pts {
                let z: Vec<Complex64> = th.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
                let x: Vec<Complex64> = z.iter().zip(&w).map(|(zj, wj)| Complex64::new(1.0, 0.0) - zj / wj).collect();
                let lhs = full.eval(&x) + Complex64::new(0.0, tau);
                prop_assert!((lhs - phi.eval(&z).unwrap()).norm() < 1e-12 * (1.0 + phi.coef_l1()) * 10.0);
            }
        }
    }
}
