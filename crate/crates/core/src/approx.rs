//! Approximation-number machinery: boundary regularity, the compactness index,
//! contact exponents, bound curves, Schatten membership, hyperbolic lengths,
//! Blaschke products, interpolating lattices and a truncated-matrix probe.

use crate::classify::analysis_lift;
use crate::error::{Error, Result};
use crate::flat::{build_separated_example, SeparatedExample};
use crate::genset::{complex_dimension, optimal_set, SearchConfig};
use crate::lift::{boundary_point, find_boundary_points, BohrLift, BoundaryConfig, BoundaryPoint, RangeKind};
use crate::scalar::format_rational;
use crate::series::TruncatedSeries;
use crate::symbol::DirichletSymbol;
use crate::zeta::zeta;
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Boundary regularity
// ---------------------------------------------------------------------------

/// Local normal form `Re Phi ~ sum lead_j l_j^{k_j}`, `Im Phi - tau ~ sum b_j l_j` at a boundary point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityProfile {
    pub w: BoundaryPoint,
    /// Row `j` is the linear form `l_j`, acting on angle offsets from `w`.
    pub ell: Vec<Vec<f64>>,
    /// Even orders, sorted descending.
    pub k: Vec<u32>,
    pub b: Vec<f64>,
    pub tau: f64,
    /// Leading coefficient of `l_j^{k_j}`; exactly 1 for Hessian directions.
    pub lead: Vec<f64>,
}

const MAX_KERNEL_ORDER: usize = 24;
const LINE_TOL: f64 = 1e-7;

/// Taylor coefficients (and absolute-value scales) of `t -> Re Phi(e^{i(theta + t v)})`.
fn line_coeffs(phi: &BohrLift, theta: &[f64], v: &[f64], max: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; max + 1];
    let mut sc = vec![0.0; max + 1];
    c[0] = phi.constant.re;
    sc[0] = phi.constant.re.abs();
    for (a, coef) in &phi.terms {
        let psi: f64 = a.iter().zip(theta).map(|(&e, t)| e as f64 * t).sum();
        let s: f64 = a.iter().zip(v).map(|(&e, x)| e as f64 * x).sum();
        let w = coef * Complex64::new(psi.cos(), psi.sin());
        let mut pw = 1.0;
        for m in 0..=max {
            if m > 0 {
                pw *= s / m as f64;
            }
            let re = match m % 4 {
                0 => w.re,
                1 => -w.im,
                2 => -w.re,
                _ => w.im,
            };
            if m > 0 {
                c[m] += re * pw;
            } else {
                c[0] += w.re;
            }
            sc[m] += w.norm() * pw.abs();
        }
    }
    (c, sc)
}

fn leading_order(c: &[f64], sc: &[f64], from: usize) -> Option<usize> {
    (from..c.len()).find(|&m| c[m].abs() > LINE_TOL * sc[m].max(f64::MIN_POSITIVE))
}

struct Direction {
    v: Vec<f64>,
    kernel: bool,
    lambda: f64,
}

fn directions(phi: &BohrLift, theta: &[f64]) -> Result<Vec<Direction>> {
    let d = phi.dim;
    let (_, h) = phi.re_gradient_hessian(theta);
    let thr = 1e-6 * (1.0 + h.norm());
    if phi.is_separated() {
        return Ok((0..d)
            .map(|j| {
                let mut v = vec![0.0; d];
                v[j] = 1.0;
                let lambda = h[(j, j)];
                Direction { v, kernel: lambda <= thr, lambda }
            })
            .collect());
    }
    let e = nalgebra::SymmetricEigen::new(h);
    if let Some(neg) = e.eigenvalues.iter().find(|&&l| l < -thr) {
        return Err(Error::NotInClass(format!("Hessian of Re Phi has a negative eigenvalue {neg:.3e}")));
    }
    let dirs: Vec<Direction> = (0..d)
        .map(|i| Direction {
            v: e.eigenvectors.column(i).iter().copied().collect(),
            kernel: e.eigenvalues[i] <= thr,
            lambda: e.eigenvalues[i],
        })
        .collect();
    let kdim = dirs.iter().filter(|x| x.kernel).count();
    if kdim >= 2 {
        return Err(Error::NotSupported(format!("Hessian kernel of dimension {kdim} for a non-separated lift")));
    }
    Ok(dirs)
}

/// Move `theta` onto the exact minimum: Newton in the positive directions, odd-order
/// cancellation along kernel lines.
fn refine(phi: &BohrLift, theta: &[f64]) -> Result<Vec<f64>> {
    let mut x = theta.to_vec();
    for _ in 0..6 {
        let dirs = directions(phi, &x)?;
        let (g, _) = phi.re_gradient_hessian(&x);
        for dir in dirs.iter().filter(|d| !d.kernel) {
            let gv: f64 = dir.v.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
            for (xi, vi) in x.iter_mut().zip(&dir.v) {
                *xi -= vi * gv / dir.lambda;
            }
        }
        for dir in dirs.iter().filter(|d| d.kernel) {
            for _ in 0..8 {
                let (c, sc) = line_coeffs(phi, &x, &dir.v, 8);
                let Some(m) = leading_order(&c, &sc, 1) else { break };
                if m % 2 == 0 || m + 1 > 8 {
                    break;
                }
                let next = c[m + 1];
                if next.abs() <= LINE_TOL * sc[m + 1] {
                    break;
                }
                let t0 = (-c[m] / ((m + 1) as f64 * next)).clamp(-1e-2, 1e-2);
                for (xi, vi) in x.iter_mut().zip(&dir.v) {
                    *xi += t0 * vi;
                }
            }
        }
    }
    Ok(x)
}

/// Extract the linear forms, orders and imaginary coefficients at a boundary point.
pub fn boundary_regularity(phi: &BohrLift, w: &BoundaryPoint) -> Result<RegularityProfile> {
    let d = phi.dim;
    if w.theta.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.theta.len() });
    }
    let theta = refine(phi, &w.theta)?;
    let scale = phi.constant.norm() + phi.coef_l1();
    let re = phi.re_theta(&theta);
    if re.abs() > 1e-9 * (1.0 + scale) {
        return Err(Error::Precondition(format!("Re Phi = {re:.3e} at the supplied point; not a boundary point")));
    }
    let w = boundary_point(phi, &theta, &BoundaryConfig::default())?;
    let dirs = directions(phi, &theta)?;

    let mut forms: Vec<(Vec<f64>, u32, f64)> = Vec::with_capacity(d);
    for dir in &dirs {
        if !dir.kernel {
            let s = (dir.lambda / 2.0).sqrt();
            forms.push((dir.v.iter().map(|x| x * s).collect(), 2, 1.0));
            continue;
        }
        let (c, sc) = line_coeffs(phi, &theta, &dir.v, MAX_KERNEL_ORDER);
        let m = leading_order(&c, &sc, 1)
            .ok_or_else(|| Error::NotSupported(format!("Re Phi is flat beyond order {MAX_KERNEL_ORDER} along a kernel line")))?;
        if m % 2 == 1 || c[m] < 0.0 {
            return Err(Error::NotInClass(format!("leading kernel term of order {m} has coefficient {:.3e}", c[m])));
        }
        let sup = dir.v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        forms.push((dir.v.iter().map(|x| x / sup).collect(), m as u32, c[m] * sup.powi(m as i32)));
    }
    for (l, _, _) in forms.iter_mut() {
        if let Some(first) = l.iter().find(|x| x.abs() > 1e-9) {
            if *first < 0.0 {
                l.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    let lmat = DMatrix::from_fn(d, d, |i, j| forms[i].0[j]);
    let g = phi.im_gradient(&theta);
    let b = lmat
        .transpose()
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Inconsistent("linear forms are dependent".into()))?;
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| forms[j].1.cmp(&forms[i].1).then(b[j].abs().total_cmp(&b[i].abs())));
    let profile = RegularityProfile {
        ell: idx.iter().map(|&i| forms[i].0.clone()).collect(),
        k: idx.iter().map(|&i| forms[i].1).collect(),
        b: idx.iter().map(|&i| b[i]).collect(),
        lead: idx.iter().map(|&i| forms[i].2).collect(),
        tau: w.tau,
        w,
    };
    if profile.b[0].abs() <= 1e-9 * (1.0 + g.norm()) {
        return Err(Error::NotSupported("Im Phi has no linear part along the leading form".into()));
    }
    Ok(profile)
}

impl RegularityProfile {
    pub fn dim(&self) -> usize {
        self.k.len()
    }

    fn ell_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.ell[i][j])
    }

    /// Angles `w + L^{-1} u` for form coordinates `u`.
    pub fn angles(&self, u: &[f64]) -> Result<Vec<f64>> {
        let inv = self.ell_matrix().try_inverse().ok_or_else(|| Error::Inconsistent("singular forms".into()))?;
        let off = inv * DVector::from_column_slice(u);
        Ok(self.w.theta.iter().zip(off.iter()).map(|(t, o)| t + o).collect())
    }
}

// ---------------------------------------------------------------------------
// Compactness index
// ---------------------------------------------------------------------------

/// `(sum_{j>=2} 1/k_j) * k_1 / (2(k_1 - 1))`, exactly.
pub fn eta_from_orders(k: &[u32]) -> Result<BigRational> {
    if k.len() < 2 {
        return Err(Error::Precondition("the compactness index needs d >= 2 (d = 1 is never compact)".into()));
    }
    if k.iter().any(|&x| x < 2 || x % 2 == 1) {
        return Err(Error::Precondition(format!("orders must be even and >= 2, got {k:?}")));
    }
    let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
    let tail = k[1..].iter().fold(BigRational::zero(), |acc, &kj| acc + r(1, kj as i64));
    let k1 = k[0] as i64;
    Ok(tail * r(k1, 2 * (k1 - 1)))
}

pub fn eta(profile: &RegularityProfile) -> Result<BigRational> {
    eta_from_orders(&profile.k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointIndex {
    pub theta: Vec<f64>,
    pub k: Vec<u32>,
    pub eta: f64,
    pub eta_exact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessIndex {
    pub eta: f64,
    pub eta_exact: String,
    pub per_point: Vec<PointIndex>,
}

/// Index at every boundary point and its minimum.
pub fn compactness_index(phi: &BohrLift, cfg: &BoundaryConfig) -> Result<CompactnessIndex> {
    let scan = find_boundary_points(phi, cfg)?;
    if scan.points.is_empty() {
        return Err(Error::Precondition("restricted range: no boundary points, the index is not defined".into()));
    }
    let mut per_point = Vec::new();
    let mut best: Option<BigRational> = None;
    for p in &scan.points {
        let prof = boundary_regularity(phi, p)?;
        let e = eta(&prof)?;
        per_point.push(PointIndex {
            theta: prof.w.theta.clone(),
            k: prof.k.clone(),
            eta: e.to_f64().unwrap_or(f64::NAN),
            eta_exact: format_rational(&e),
        });
        if best.as_ref().is_none_or(|b| e < *b) {
            best = Some(e);
        }
    }
    let best = best.expect("nonempty");
    Ok(CompactnessIndex { eta: best.to_f64().unwrap_or(f64::NAN), eta_exact: format_rational(&best), per_point })
}

// ---------------------------------------------------------------------------
// Contact exponent
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaConfig {
    pub samples: usize,
    pub seed: u64,
    /// Window of `Re Phi` values entering the envelope regression.
    pub re_window: (f64, f64),
    pub bins: usize,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        Self { samples: 200_000, seed: 0, re_window: (1e-12, 1e-5), bins: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactExponents {
    pub omega_hat: f64,
    /// Smallest `C` with `|Im - tau|^omega <= C Re` over the samples in the window.
    pub c_hat: f64,
    pub kappa_hat: Option<f64>,
    pub slope: Option<f64>,
    pub bins_used: usize,
    pub restricted_range: bool,
}

impl ContactExponents {
    fn restricted() -> Self {
        Self { omega_hat: 1.0, c_hat: 0.0, kappa_hat: None, slope: None, bins_used: 0, restricted_range: true }
    }
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Upper-envelope regression of `log |Im - tau|` against `log Re` on `(re, |im - tau|)` pairs.
pub fn omega_from_pairs(pairs: &[(f64, f64)], cfg: &OmegaConfig) -> Result<ContactExponents> {
    let (lo, hi) = (cfg.re_window.0.ln(), cfg.re_window.1.ln());
    if !(lo < hi) || cfg.bins < 4 {
        return Err(Error::Precondition("bad envelope window".into()));
    }
    let width = (hi - lo) / cfg.bins as f64;
    let mut best: Vec<Option<(f64, f64)>> = vec![None; cfg.bins];
    let mut inside = Vec::new();
    for &(re, dev) in pairs {
        if !(re > 0.0 && dev > 0.0) {
            continue;
        }
        let x = re.ln();
        if x < lo || x >= hi {
            continue;
        }
        let y = dev.ln();
        inside.push((x, y));
        let b = (((x - lo) / width) as usize).min(cfg.bins - 1);
        if best[b].is_none_or(|(_, yb)| y > yb) {
            best[b] = Some((x, y));
        }
    }
    let pts: Vec<(f64, f64)> = best.into_iter().flatten().collect();
    if pts.len() < 6 {
        return Err(Error::Inconsistent(format!("only {} populated envelope bins", pts.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let (slope, _, _) = ols(&xs, &ys);
    if !(slope > 0.0) {
        return Err(Error::Inconsistent(format!("envelope slope {slope:.3} is not positive")));
    }
    let omega_hat = (1.0 / slope).max(1.0);
    let c_hat = inside.iter().map(|(x, y)| (omega_hat * y - x).exp()).fold(0.0, f64::max);
    Ok(ContactExponents { omega_hat, c_hat, kappa_hat: None, slope: Some(slope), bins_used: pts.len(), restricted_range: false })
}

/// Envelope fit at one boundary point, sampling the torus near `w` both isotropically and
/// along the anisotropic scaling suggested by the profile.
pub fn omega_at(phi: &BohrLift, profile: &RegularityProfile, cfg: &OmegaConfig) -> Result<ContactExponents> {
    let d = phi.dim;
    let inv = profile.ell_matrix().try_inverse().ok_or_else(|| Error::Inconsistent("singular forms".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut offsets: Vec<Vec<f64>> = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        if i % 2 == 0 {
            let t = 10f64.powf(rng.random_range(-7.0..-1.0));
            let u: Vec<f64> = (0..d)
                .map(|j| {
                    let xi: f64 = rng.random_range(-1.0..1.0);
                    xi * (t * t / profile.lead[j]).powf(1.0 / profile.k[j] as f64)
                })
                .collect();
            offsets.push((&inv * DVector::from_vec(u)).iter().copied().collect());
        } else {
            let r = 10f64.powf(rng.random_range(-4.0..-0.5));
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            offsets.push(dir.iter().map(|x| r * x / n).collect());
        }
    }
    let pairs: Vec<(f64, f64)> = offsets
        .par_iter()
        .map(|o| {
            let th: Vec<f64> = profile.w.theta.iter().zip(o).map(|(a, b)| a + b).collect();
            let v = phi.eval_theta(&th);
            (v.re, (v.im - profile.tau).abs())
        })
        .collect();
    omega_from_pairs(&pairs, cfg)
}

/// Contact exponent of a lift: the largest envelope exponent over its boundary points.
pub fn omega_estimate(phi: &BohrLift, cfg: &OmegaConfig) -> Result<ContactExponents> {
    let scan = find_boundary_points(phi, &BoundaryConfig::default())?;
    if scan.range_kind == RangeKind::Restricted {
        return Ok(ContactExponents::restricted());
    }
    let mut out: Option<ContactExponents> = None;
    for p in &scan.points {
        let prof = boundary_regularity(phi, p)?;
        let c = omega_at(phi, &prof, cfg)?;
        if out.as_ref().is_none_or(|o| c.omega_hat > o.omega_hat) {
            out = Some(c);
        }
    }
    Ok(out.expect("unrestricted range has boundary points"))
}

// ---------------------------------------------------------------------------
// Bound curves and Schatten classes
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundInput {
    Eta(f64),
    OmegaKappa { omega: f64, kappa: f64 },
}

/// Exponent sign for the `omega <= 1` branch: `Printed` is `exp(-n^{-1/2})`, `Corrected` is `exp(-n^{1/2})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpForm {
    Printed,
    Corrected,
}

/// Shape curves with every hidden constant set to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnBounds {
    pub n: u64,
    pub lower: Option<f64>,
    pub upper: f64,
    pub exponent: Option<f64>,
    pub form: Option<ExpForm>,
}

pub fn an_bounds(n: u64, input: &BoundInput, form: ExpForm) -> Result<AnBounds> {
    if n < 2 {
        return Err(Error::Precondition("n must be at least 2".into()));
    }
    let nf = n as f64;
    let ratio = nf.ln() / nf;
    match *input {
        BoundInput::Eta(e) => {
            if !(e > 0.0) {
                return Err(Error::Precondition("eta must be positive".into()));
            }
            Ok(AnBounds { n, lower: Some(nf.powf(-e)), upper: ratio.powf(e), exponent: Some(e), form: None })
        }
        BoundInput::OmegaKappa { omega, kappa } => {
            if !(omega > 0.0) || !(kappa >= 1.0) {
                return Err(Error::Precondition("need omega > 0 and kappa >= 1".into()));
            }
            if omega <= 1.0 {
                let p = match form {
                    ExpForm::Printed => -0.5,
                    ExpForm::Corrected => 0.5,
                };
                return Ok(AnBounds { n, lower: None, upper: (-nf.powf(p)).exp(), exponent: None, form: Some(form) });
            }
            let ex = upper_exponent(omega, kappa)?;
            Ok(AnBounds { n, lower: None, upper: ratio.powf(ex), exponent: Some(ex), form: None })
        }
    }
}

/// `(kappa - 1) omega / (2(omega - 1))` for `omega > 1`.
pub fn upper_exponent(omega: f64, kappa: f64) -> Result<f64> {
    if !(omega > 1.0) {
        return Err(Error::Precondition("the power-law branch needs omega > 1".into()));
    }
    Ok((kappa - 1.0) * omega / (2.0 * (omega - 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schatten {
    InSp,
    NotInSp,
}

pub fn schatten_predicate(eta: f64, p: f64) -> Result<Schatten> {
    if !(eta > 0.0 && p > 0.0) {
        return Err(Error::Precondition("eta and p must be positive".into()));
    }
    Ok(if p * eta > 1.0 { Schatten::InSp } else { Schatten::NotInSp })
}

fn schatten_exact(eta: &BigRational, p: f64) -> Schatten {
    let lhs = BigRational::from_float(p).expect("finite p") * eta;
    if lhs > BigRational::from_integer(BigInt::from(1)) {
        Schatten::InSp
    } else {
        Schatten::NotInSp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchattenRecipe {
    pub d: usize,
    pub k: u32,
    pub eta_exact: String,
    pub in_q: Schatten,
    pub in_p: Schatten,
    /// Whether some `p' >= 2p`, `q' <= q/(1/2+eps)`, `eps > 1/(2(k-1))` satisfy `p' < (d-1)/k < q'`.
    pub proof_inequalities_hold: bool,
    #[serde(skip)]
    pub example: Option<SeparatedExample>,
}

/// Smallest `(d, k)` (lexicographically, `d, k <= 64`, `k` even) whose separated symbol is in `S_q` but not in `S_p`.
pub fn schatten_separator(p: f64, q: f64, build: bool) -> Result<SchattenRecipe> {
    if !(p > 0.0 && q > p) {
        return Err(Error::Precondition(format!("need 0 < p < q (got p = {p}, q = {q})")));
    }
    for d in 2..=64usize {
        for k in (2..=64u32).step_by(2) {
            let e = eta_from_orders(&vec![k; d])?;
            let (in_q, in_p) = (schatten_exact(&e, q), schatten_exact(&e, p));
            if in_q == Schatten::InSp && in_p == Schatten::NotInSp {
                let ratio = (d as f64 - 1.0) / k as f64;
                let proof = 2.0 * p < ratio && ratio < 2.0 * q * (k as f64 - 1.0) / k as f64;
                let example = if build { Some(build_separated_example(&vec![k; d])?) } else { None };
                return Ok(SchattenRecipe { d, k, eta_exact: format_rational(&e), in_q, in_p, proof_inequalities_hold: proof, example });
            }
        }
    }
    Err(Error::SearchBoundExceeded { what: "(d, k) pairs", cap: 63 * 32 })
}

// ---------------------------------------------------------------------------
// Hyperbolic length and Blaschke products
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicLength {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub total: f64,
    pub nodes: usize,
}

fn simpson(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn check_region(omega: f64, sigma: f64, c: f64) -> Result<()> {
    if !(omega >= 1.0) || !(sigma > 0.0 && sigma < 0.5) || !(c > 1.0) {
        return Err(Error::Precondition(format!("need omega >= 1, sigma in (0, 1/2), C > 1 (got {omega}, {sigma}, {c})")));
    }
    Ok(())
}

pub const DEFAULT_LENGTH_NODES: usize = 4096;

/// `int |dz| / Re z` around the boundary of `{sigma <= Re s <= C, |Im s|^omega <= C Re s}`.
pub fn hyperbolic_length(omega: f64, sigma: f64, c: f64) -> Result<HyperbolicLength> {
    hyperbolic_length_with_nodes(omega, sigma, c, DEFAULT_LENGTH_NODES)
}

pub fn hyperbolic_length_with_nodes(omega: f64, sigma: f64, c: f64, nodes: usize) -> Result<HyperbolicLength> {
    check_region(omega, sigma, c)?;
    let half = |x: f64| (c * x).powf(1.0 / omega);
    // Vertical sides: |dz| = dy at constant real part.
    let gamma1 = simpson(nodes, -half(sigma), half(sigma), |_| 1.0 / sigma);
    let gamma2 = simpson(nodes, -half(c), half(c), |_| 1.0 / c);
    // Curved sides in u = ln x: |dz| / x = sqrt(1 + y'(x)^2) du.
    let slope = |x: f64| c.powf(1.0 / omega) / omega * x.powf(1.0 / omega - 1.0);
    let arc = simpson(nodes, sigma.ln(), c.ln(), |u| (1.0 + slope(u.exp()).powi(2)).sqrt());
    let gamma3 = 2.0 * arc;
    Ok(HyperbolicLength { gamma1, gamma2, gamma3, total: gamma1 + gamma2 + gamma3, nodes })
}

/// Least-squares slopes of `L` against `ln(1/sigma)` and of `ln L` against `ln(1/sigma)`.
pub fn hyperbolic_length_fit(omega: f64, c: f64, sigmas: &[f64]) -> Result<(f64, f64)> {
    let ls: Vec<f64> = sigmas.iter().map(|&s| hyperbolic_length(omega, s, c).map(|h| h.total)).collect::<Result<_>>()?;
    let x: Vec<f64> = sigmas.iter().map(|s| -s.ln()).collect();
    let ly: Vec<f64> = ls.iter().map(|v| v.ln()).collect();
    Ok((ols(&x, &ls).0, ols(&x, &ly).0))
}

/// `prod_{j=1}^n (1 - e^{-jL/n}) / (1 + e^{-jL/n})`.
pub fn blaschke_bound(n: usize, l: f64) -> Result<f64> {
    if !(l >= 1.0) || n == 0 {
        return Err(Error::Precondition(format!("need n >= 1 and L >= 1 (got n = {n}, L = {l})")));
    }
    let h = l / n as f64;
    Ok((1..=n).map(|j| (0.5 * j as f64 * h).tanh().ln()).sum::<f64>().exp())
}

/// `int_a^b (1/y) ln((1+y)/(1-y)) dy` with `0 < a < b <= 1`, via `y = 1 - t^2` near the endpoint.
fn log_ratio_integral(a: f64, b: f64) -> f64 {
    let g = |y: f64| ((1.0 + y) / (1.0 - y)).ln() / y;
    let mid = a.max(0.5).min(b);
    let left = if a < mid { simpson(4000, a.ln(), mid.ln(), |u| g(u.exp()) * u.exp()) } else { 0.0 };
    let (t0, t1) = ((1.0 - b).max(0.0).sqrt(), (1.0 - mid).sqrt());
    let right = if t0 < t1 {
        simpson(4000, t0, t1, |t| {
            if t == 0.0 {
                0.0
            } else {
                let y = 1.0 - t * t;
                2.0 * t * ((1.0 + y) / (t * t)).ln() / y
            }
        })
    } else {
        0.0
    };
    left + right
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeConstants {
    pub product: f64,
    /// Integral over `[e^{-L}, 1]`.
    pub c_printed: f64,
    /// Integral over `[e^{-L-h}, e^{-h}]` with `h = L/n`, which dominates the right-endpoint sum.
    pub c_riemann: f64,
    pub printed_bound: f64,
    pub riemann_bound: f64,
}

pub fn blaschke_constants(n: usize, l: f64) -> Result<BlaschkeConstants> {
    let product = blaschke_bound(n, l)?;
    let h = l / n as f64;
    let c_printed = log_ratio_integral((-l).exp(), 1.0);
    let c_riemann = log_ratio_integral((-l - h).exp(), (-h).exp());
    let r = n as f64 / l;
    Ok(BlaschkeConstants { product, c_printed, c_riemann, printed_bound: (-c_printed * r).exp(), riemann_bound: (-c_riemann * r).exp() })
}

/// `|B(s)|` for the half-plane Blaschke product with the given zeros.
pub fn blaschke_abs(zeros: &[Complex64], s: Complex64) -> f64 {
    zeros.iter().map(|a| ((s - a) / (s + a.conj())).norm()).product()
}

/// Closed polyline tracing the boundary of the region used by [`hyperbolic_length`], counter-clockwise.
pub fn region_boundary(omega: f64, sigma: f64, c: f64, per_side: usize) -> Result<Vec<Complex64>> {
    check_region(omega, sigma, c)?;
    let half = |x: f64| (c * x).powf(1.0 / omega);
    let n = per_side.max(2);
    let mut pts = Vec::with_capacity(4 * n);
    let (ls, lc) = (sigma.ln(), c.ln());
    for i in 0..n {
        let x = (ls + (lc - ls) * i as f64 / n as f64).exp();
        pts.push(Complex64::new(x, -half(x)));
    }
    for i in 0..n {
        let y = -half(c) + 2.0 * half(c) * i as f64 / n as f64;
        pts.push(Complex64::new(c, y));
    }
    for i in 0..n {
        let x = (lc + (ls - lc) * i as f64 / n as f64).exp();
        pts.push(Complex64::new(x, half(x)));
    }
    for i in 0..n {
        let y = half(sigma) - 2.0 * half(sigma) * i as f64 / n as f64;
        pts.push(Complex64::new(sigma, y));
    }
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeCheck {
    pub length: f64,
    pub zeros: Vec<Complex64>,
    pub max_on_curve: f64,
    pub max_inside: f64,
    pub product_bound: f64,
    pub within_bound: bool,
}

/// Place `n` zeros equally spaced in hyperbolic length along a closed polyline and
/// evaluate `|B|` on the polyline and on the supplied interior samples.
pub fn blaschke_empirical(curve: &[Complex64], n: usize, interior: &[Complex64]) -> Result<BlaschkeCheck> {
    if curve.len() < 3 || n == 0 {
        return Err(Error::Precondition("need a closed polyline with at least 3 vertices and n >= 1".into()));
    }
    if curve.iter().any(|z| !(z.re > 0.0)) {
        return Err(Error::Precondition("the curve must lie in the right half-plane".into()));
    }
    let m = curve.len();
    let seg: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = (curve[i], curve[(i + 1) % m]);
            let len = (b - a).norm();
            // Simpson on the straight segment.
            len / 6.0 * (1.0 / a.re + 4.0 / (0.5 * (a.re + b.re)) + 1.0 / b.re)
        })
        .collect();
    let length: f64 = seg.iter().sum();
    let mut zeros = Vec::with_capacity(n);
    let (mut acc, mut i) = (0.0, 0);
    for j in 0..n {
        let target = length * j as f64 / n as f64;
        while acc + seg[i] < target && i + 1 < m {
            acc += seg[i];
            i += 1;
        }
        let frac = if seg[i] > 0.0 { ((target - acc) / seg[i]).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (curve[i], curve[(i + 1) % m]);
        // Hyperbolic speed varies along a segment; a geometric blend in Re keeps spacing close.
        zeros.push(a + (b - a) * frac);
    }
    let max_on_curve = curve.par_iter().map(|&s| blaschke_abs(&zeros, s)).reduce(|| 0.0, f64::max);
    let max_inside = interior.par_iter().map(|&s| blaschke_abs(&zeros, s)).reduce(|| 0.0, f64::max);
    let product_bound = if length >= 1.0 { blaschke_bound(n, length)? } else { 1.0 };
    Ok(BlaschkeCheck {
        length,
        zeros,
        max_on_curve,
        max_inside,
        product_bound,
        within_bound: max_on_curve <= product_bound * (1.0 + 1e-9) && max_inside <= product_bound * (1.0 + 1e-9),
    })
}

// ---------------------------------------------------------------------------
// Interpolating lattice witness
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub nu0: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub residual_max: f64,
    pub c2_max: f64,
    pub check_separation: bool,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { nu0: 8.0, max_iter: 50, tol: 1e-12, residual_max: 1e-10, c2_max: 100.0, check_separation: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub m: usize,
    /// Lattice indices for forms 2..d.
    pub alpha: Vec<u64>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl WitnessPoint {
    pub fn z(&self) -> Vec<Complex64> {
        self.rho.iter().zip(&self.theta).map(|(r, t)| Complex64::from_polar(1.0 - r, *t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessChecks {
    pub count: bool,
    pub preimages: bool,
    pub rho_sandwich: bool,
    pub separation: Option<bool>,
    pub residuals: bool,
}

impl WitnessChecks {
    pub fn all(&self) -> bool {
        self.count && self.preimages && self.rho_sandwich && self.separation.unwrap_or(true) && self.residuals
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeWitness {
    pub delta: f64,
    pub nu: f64,
    /// Target points `s_m`.
    pub s: Vec<Complex64>,
    pub z: Vec<WitnessPoint>,
    pub residuals: f64,
    pub expected_s: usize,
    pub expected_preimages: usize,
    pub min_preimages: usize,
    /// Coordinate carrying the solved radius.
    pub rho_coordinate: usize,
    pub c1: Option<f64>,
    pub c2: f64,
    /// `inf_m N(s_m) zeta(2 Re s_m)`.
    pub lower_bound_quantity: f64,
    pub expected_exponent: f64,
    pub checks: WitnessChecks,
}

impl LatticeWitness {
    /// One row per preimage: `m, alpha..., rho..., theta..., residual`.
    pub fn z_table_csv(&self) -> String {
        let d = self.z.first().map_or(0, |p| p.rho.len());
        let a = self.z.first().map_or(0, |p| p.alpha.len());
        let mut head = vec!["m".to_string()];
        head.extend((0..a).map(|j| format!("alpha_{}", j + 2)));
        head.extend((0..d).map(|j| format!("rho_{}", j + 1)));
        head.extend((0..d).map(|j| format!("theta_{}", j + 1)));
        head.push("residual".into());
        let mut out = head.join(",");
        out.push('\n');
        for p in &self.z {
            let mut row = vec![p.m.to_string()];
            row.extend(p.alpha.iter().map(|x| x.to_string()));
            row.extend(p.rho.iter().map(|x| format!("{x:.17e}")));
            row.extend(p.theta.iter().map(|x| format!("{x:.17e}")));
            row.push(format!("{:.3e}", p.residual));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn lattice_size(delta: f64, k: u32) -> usize {
    // Guard against 1000^{1/2} landing a hair below an integer.
    ((1.0 / delta).powf(1.0 - 1.0 / k as f64) * (1.0 + 1e-12)).floor() as usize
}

/// `Phi(z)` and `d Phi / d z_j`.
fn eval_with_gradient(phi: &BohrLift, z: &[Complex64]) -> (Complex64, Vec<Complex64>) {
    let mut v = phi.constant;
    let mut g = vec![Complex64::new(0.0, 0.0); z.len()];
    for (a, c) in &phi.terms {
        let mono: Complex64 = a.iter().zip(z).fold(Complex64::new(1.0, 0.0), |acc, (&e, zj)| acc * zj.powu(e));
        v += c * mono;
        for j in 0..z.len() {
            if a[j] > 0 {
                let mut partial = *c * a[j] as f64;
                for (i, (&e, zi)) in a.iter().zip(z).enumerate() {
                    let e = if i == j { e - 1 } else { e };
                    partial *= zi.powu(e);
                }
                g[j] += partial;
            }
        }
    }
    (v, g)
}

struct WitnessSetup<'a> {
    phi: &'a BohrLift,
    profile: &'a RegularityProfile,
    inv: DMatrix<f64>,
    p: usize,
    a_p: f64,
    delta: f64,
}

impl WitnessSetup<'_> {
    fn point(&self, rho_p: f64, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let off = &self.inv * DVector::from_column_slice(u);
        let theta: Vec<f64> = self.profile.w.theta.iter().zip(off.iter()).map(|(t, o)| t + o).collect();
        let rho: Vec<f64> = (0..theta.len()).map(|j| if j == self.p { rho_p } else { self.delta }).collect();
        (rho, theta)
    }

    fn solve(&self, target: Complex64, tail: &[f64], cfg: &WitnessConfig) -> std::result::Result<(f64, f64, usize, f64), String> {
        let b1 = self.profile.b[0];
        let mut x = [target.re / self.a_p, (target.im) / b1];
        let eval = |x: &[f64; 2]| -> (Complex64, Complex64, Complex64) {
            let mut u = vec![x[1]];
            u.extend_from_slice(tail);
            let (rho, theta) = self.point(x[0], &u);
            let z: Vec<Complex64> = rho.iter().zip(&theta).map(|(r, t)| Complex64::from_polar(1.0 - r, *t)).collect();
            let (v, g) = eval_with_gradient(self.phi, &z);
            let f = v - Complex64::new(0.0, self.profile.tau) - target;
            let unit = Complex64::from_polar(1.0, theta[self.p]);
            let d_rho = -unit * g[self.p];
            let i = Complex64::new(0.0, 1.0);
            let d_u: Complex64 = (0..z.len()).map(|j| i * z[j] * g[j] * self.inv[(j, 0)]).sum();
            (f, d_rho, d_u)
        };
        let (mut f, mut jr, mut ju) = eval(&x);
        for it in 0..cfg.max_iter {
            if f.norm() <= cfg.tol {
                return Ok((x[0], x[1], it, f.norm()));
            }
            let det = jr.re * ju.im - ju.re * jr.im;
            if det.abs() < 1e-300 {
                return Err(format!("singular Jacobian at rho = {:.3e}, u = {:.3e}", x[0], x[1]));
            }
            let dx0 = (f.re * ju.im - ju.re * f.im) / det;
            let dx1 = (jr.re * f.im - f.re * jr.im) / det;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = [x[0] - t * dx0, x[1] - t * dx1];
                if cand[0] > 0.0 && cand[0] < 1.0 {
                    let (fc, jrc, juc) = eval(&cand);
                    if fc.norm() < f.norm() {
                        x = cand;
                        (f, jr, ju) = (fc, jrc, juc);
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if f.norm() <= cfg.residual_max {
            Ok((x[0], x[1], cfg.max_iter, f.norm()))
        } else {
            Err(format!("residual {:.3e} after damped Newton (rho = {:.3e}, u = {:.3e})", f.norm(), x[0], x[1]))
        }
    }
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Build the preimage lattice `Z` of `S - 1/2` near the boundary point of `profile` and check its invariants.
pub fn lower_bound_witness(
    phi: &BohrLift,
    profile: &RegularityProfile,
    delta: f64,
    nu: f64,
    cfg: &WitnessConfig,
) -> Result<LatticeWitness> {
    let d = phi.dim;
    if d < 2 || profile.dim() != d {
        return Err(Error::Precondition("the witness needs d >= 2 and a matching profile".into()));
    }
    if !(nu >= cfg.nu0) {
        return Err(Error::Precondition(format!("nu = {nu} is below nu0 = {}", cfg.nu0)));
    }
    if !(delta > 0.0 && delta * nu < 1.0) {
        return Err(Error::Precondition(format!("delta must lie in (0, 1/nu) (got {delta})")));
    }
    let a: Vec<f64> = profile.w.local.a.iter().map(|x| x.re).collect();
    let p = (0..d).fold(0, |best, j| if a[j] > a[best] { j } else { best });
    let setup = WitnessSetup {
        phi,
        profile,
        inv: profile.ell_matrix().try_inverse().ok_or_else(|| Error::Inconsistent("singular forms".into()))?,
        p,
        a_p: a[p],
        delta,
    };
    let expected_s = lattice_size(delta, profile.k[0]);
    let sizes: Vec<usize> = profile.k[1..].iter().map(|&k| lattice_size(delta, k)).collect();
    let expected_preimages: usize = sizes.iter().product();
    if expected_s == 0 || expected_preimages == 0 {
        return Err(Error::Precondition("delta too large: empty lattice".into()));
    }
    let mut alphas: Vec<Vec<u64>> = vec![vec![]];
    for &n in &sizes {
        alphas = alphas.into_iter().flat_map(|a| (1..=n as u64).map(move |x| [a.clone(), vec![x]].concat())).collect();
    }
    let jobs: Vec<(usize, Vec<u64>)> = (1..=expected_s).flat_map(|m| alphas.iter().map(move |a| (m, a.clone()))).collect();
    let solved: Vec<std::result::Result<WitnessPoint, String>> = jobs
        .par_iter()
        .map(|(m, alpha)| {
            let target = Complex64::new(nu * delta, *m as f64 * delta);
            let tail: Vec<f64> = alpha.iter().map(|&x| x as f64 * delta).collect();
            let (rho_p, u1, iterations, residual) = setup.solve(target, &tail, cfg).map_err(|e| format!("m = {m}, alpha = {alpha:?}: {e}"))?;
            let mut u = vec![u1];
            u.extend(tail);
            let (rho, theta) = setup.point(rho_p, &u);
            Ok(WitnessPoint { m: *m, alpha: alpha.clone(), rho, theta, residual, iterations })
        })
        .collect();
    let z: Vec<WitnessPoint> = solved.into_iter().collect::<std::result::Result<_, _>>().map_err(Error::NewtonFailed)?;

    let residuals = z.iter().map(|p| p.residual).fold(0.0, f64::max);
    let c2 = z
        .iter()
        .flat_map(|p| p.rho.iter())
        .map(|&r| if r > 0.0 { (r / delta).max(delta / r) } else { f64::INFINITY })
        .fold(1.0, f64::max);
    let c1 = if cfg.check_separation {
        let gap = (0..z.len())
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                for j in i + 1..z.len() {
                    let g = z[i].theta.iter().zip(&z[j].theta).map(|(x, y)| wrap(x - y).abs()).fold(0.0, f64::max);
                    best = best.min(g);
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min);
        Some(gap / delta)
    } else {
        None
    };
    let mut counts = vec![0usize; expected_s + 1];
    let mut mass = vec![0.0f64; expected_s + 1];
    for pnt in &z {
        counts[pnt.m] += 1;
        mass[pnt.m] += pnt.rho.iter().map(|r| r * (2.0 - r)).product::<f64>();
    }
    let min_preimages = counts[1..].iter().copied().min().unwrap_or(0);
    let zeta_val = zeta(1.0 + 2.0 * nu * delta)?;
    let lower_bound_quantity = mass[1..].iter().fold(f64::INFINITY, |acc, &x| acc.min(x)) * zeta_val;
    let s: Vec<Complex64> = (1..=expected_s).map(|m| Complex64::new(0.5 + nu * delta, profile.tau + m as f64 * delta)).collect();
    let expected_exponent: f64 = profile.k[1..].iter().map(|&k| 1.0 / k as f64).sum();
    let checks = WitnessChecks {
        count: s.len() == expected_s,
        preimages: min_preimages >= expected_preimages,
        rho_sandwich: c2 <= cfg.c2_max,
        separation: c1.map(|c| c > 0.0 && c.is_finite()),
        residuals: residuals <= cfg.residual_max,
    };
    Ok(LatticeWitness {
        delta,
        nu,
        s,
        z,
        residuals,
        expected_s,
        expected_preimages,
        min_preimages,
        rho_coordinate: p,
        c1,
        c2,
        lower_bound_quantity,
        expected_exponent,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessExponent {
    pub deltas: Vec<f64>,
    pub quantities: Vec<f64>,
    pub slope: f64,
    pub expected: f64,
}

/// Slope of `ln inf N zeta` against `ln delta` over several lattice witnesses.
pub fn witness_exponent(phi: &BohrLift, profile: &RegularityProfile, deltas: &[f64], nu: f64) -> Result<WitnessExponent> {
    if deltas.len() < 2 {
        return Err(Error::Precondition("need at least two deltas".into()));
    }
    let cfg = WitnessConfig { check_separation: false, ..Default::default() };
    let mut quantities = Vec::new();
    let mut expected = 0.0;
    for &dl in deltas {
        let w = lower_bound_witness(phi, profile, dl, nu, &cfg)?;
        if !w.checks.all() {
            return Err(Error::Inconsistent(format!("witness invariants fail at delta = {dl}: {:?}", w.checks)));
        }
        expected = w.expected_exponent;
        quantities.push(w.lower_bound_quantity);
    }
    let x: Vec<f64> = deltas.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = quantities.iter().map(|v| v.ln()).collect();
    Ok(WitnessExponent { deltas: deltas.to_vec(), quantities, slope: ols(&x, &y).0, expected })
}

// ---------------------------------------------------------------------------
// Truncated matrix probe
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub max_column: usize,
    pub degree: u32,
    pub window: (usize, usize),
    pub mass_threshold: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { max_column: 256, degree: 24, window: (10, 60), mass_threshold: 0.99 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub rows: usize,
    pub columns: usize,
    pub singular_values: Vec<f64>,
    /// `-slope` of `ln sigma_n` against `ln n` over the window.
    pub decay_exponent: Option<f64>,
    /// Slope of `ln sigma_n` against `n` over the window.
    pub loglinear_slope: Option<f64>,
    pub min_column_mass: f64,
    pub reliable: bool,
}

fn smallest_prime_factor(n: usize) -> usize {
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            return p;
        }
        p += 1;
    }
    n
}

/// Singular values of the compression of `C_phi` to columns `k^{-s}`, `k <= M`, and monomials of degree `<= D`.
pub fn truncated_matrix_probe(sym: &DirichletSymbol, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if sym.c0 != 0 {
        return Err(Error::Precondition("the probe needs characteristic c0 = 0".into()));
    }
    if cfg.max_column == 0 || cfg.max_column > 512 {
        return Err(Error::Precondition("column cap must lie in [1, 512]".into()));
    }
    let (_, sets) = complex_dimension(&sym.support(), &SearchConfig::default())?;
    let gen = optimal_set(&sets).ok_or_else(|| Error::InvalidSymbol("constant symbol".into()))?.clone();
    let lift = analysis_lift(sym, &gen)?;
    let d = lift.dim;
    if d == 0 || d > 3 {
        return Err(Error::Precondition(format!("the probe supports 1 <= d <= 3 (got {d})")));
    }
    let deg = cfg.degree;
    let c1 = lift.constant + 0.5;
    let q = TruncatedSeries::from_terms(d, deg, lift.terms.iter().map(|(a, c)| (a.clone(), *c)));

    // Dense layout: index sum alpha_j (D+1)^j; rows are the multi-indices with |alpha| <= D.
    let base = deg as usize + 1;
    let size = base.pow(d as u32);
    let decode = |mut i: usize| -> Vec<u32> {
        (0..d)
            .map(|_| {
                let e = (i % base) as u32;
                i /= base;
                e
            })
            .collect()
    };
    let rows: Vec<usize> = (0..size).filter(|&i| decode(i).iter().sum::<u32>() <= deg).collect();
    let to_dense = |s: &TruncatedSeries<Complex64>| -> Vec<(usize, usize, Complex64)> {
        s.terms()
            .map(|(a, c)| (a.iter().rev().fold(0usize, |acc, &e| acc * base + e as usize), a.iter().sum::<u32>() as usize, *c))
            .collect()
    };

    let mut factors: std::collections::BTreeMap<usize, Vec<(usize, usize, Complex64)>> = Default::default();
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(cfg.max_column);
    let mut one = vec![Complex64::new(0.0, 0.0); size];
    one[0] = Complex64::new(1.0, 0.0);
    cols.push(one);
    let degree_of = |i: usize| decode(i).iter().sum::<u32>() as usize;
    let degrees: Vec<usize> = (0..size).map(degree_of).collect();
    for k in 2..=cfg.max_column {
        let p = smallest_prime_factor(k);
        if !factors.contains_key(&p) {
            let lp = (p as f64).ln();
            let g = q.scale(&Complex64::new(-lp, 0.0)).exp()?.scale(&(-c1 * lp).exp());
            factors.insert(p, to_dense(&g));
        }
        let g = &factors[&p];
        let prev = &cols[k / p - 1];
        let mut out = vec![Complex64::new(0.0, 0.0); size];
        for (i, ci) in prev.iter().enumerate() {
            if ci.norm() == 0.0 {
                continue;
            }
            for &(j, dj, cj) in g {
                if degrees[i] + dj > deg as usize {
                    continue;
                }
                // Adding packed indices is exact because every exponent stays below D + 1.
                out[i + j] += ci * cj;
            }
        }
        cols.push(out);
    }

    // Column mass: ||k^{-phi}||^2 is the torus mean of k^{-2 Re(c1 + Q)}.
    let grid: usize = if d == 1 { 1024 } else if d == 2 { 128 } else { 32 };
    let npts = grid.pow(d as u32);
    let re_vals: Vec<f64> = (0..npts)
        .into_par_iter()
        .map(|mut i| {
            let theta: Vec<f64> = (0..d)
                .map(|_| {
                    let t = 2.0 * PI * (i % grid) as f64 / grid as f64;
                    i /= grid;
                    t
                })
                .collect();
            (lift.eval_theta(&theta) + 0.5).re
        })
        .collect();
    let masses: Vec<f64> = (1..=cfg.max_column)
        .into_par_iter()
        .map(|k| {
            let lk = (k as f64).ln();
            let full = re_vals.iter().map(|r| (-2.0 * lk * r).exp()).sum::<f64>() / npts as f64;
            let trunc: f64 = cols[k - 1].iter().map(|c| c.norm_sqr()).sum();
            trunc / full
        })
        .collect();
    let min_column_mass = masses.iter().copied().fold(f64::INFINITY, f64::min);

    let a = DMatrix::from_fn(rows.len(), cfg.max_column, |r, c| cols[c][rows[r]]);
    let mut sv: Vec<f64> = a.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let (w0, w1) = cfg.window;
    let idx: Vec<usize> = (w0.max(1)..=w1.min(sv.len())).filter(|&n| sv[n - 1] > 0.0).collect();
    let (decay_exponent, loglinear_slope) = if idx.len() >= 5 {
        let ln_n: Vec<f64> = idx.iter().map(|&n| (n as f64).ln()).collect();
        let n_f: Vec<f64> = idx.iter().map(|&n| n as f64).collect();
        let ls: Vec<f64> = idx.iter().map(|&n| sv[n - 1].ln()).collect();
        (Some(-ols(&ln_n, &ls).0), Some(ols(&n_f, &ls).0))
    } else {
        (None, None)
    };
    Ok(ProbeResult {
        rows: rows.len(),
        columns: cfg.max_column,
        singular_values: sv,
        decay_exponent,
        loglinear_slope,
        min_column_mass,
        reliable: min_column_mass >= cfg.mass_threshold,
    })
}
