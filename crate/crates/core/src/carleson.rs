//! Monte Carlo estimates of `mu(Q(tau, eps))`, the torus measure of the preimage of a
//! Carleson box `[0, eps] x [tau - eps/2, tau + eps/2]`, and the scaling exponent of
//! `sup_tau mu(Q(tau, eps))` as `eps -> 0`.

use crate::error::{Error, Result};
use crate::lift::BohrLift;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonBox {
    pub tau: f64,
    pub eps: f64,
}

impl CarlesonBox {
    pub fn new(tau: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !tau.is_finite() {
            return Err(Error::Precondition("box needs eps > 0 and finite tau".into()));
        }
        Ok(Self { tau, eps })
    }

    pub fn contains(&self, re: f64, im: f64) -> bool {
        re <= self.eps && (im - self.tau).abs() <= self.eps / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub hits: u64,
    pub samples: u64,
    pub value: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// Rank-1 lattice `frac(i g / n + shift)` with a seeded random shift.
    Lattice,
    /// Seeded pseudo-random points, one ChaCha stream per chunk.
    Random,
}

/// Extra samples in sup-norm balls of radius `radius_factor * sqrt(eps)` around `centers`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub share: f64,
    pub radius_factor: f64,
    pub centers: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub seed: u64,
    pub chunks: usize,
    pub stratify: Option<Stratification>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { kind: SamplerKind::Lattice, seed: 0, chunks: 8, stratify: None }
    }
}

pub const MIN_SAMPLES: usize = 1000;

/// Points of `Phi(T^d)` with the stratum (0 uniform, 1 ball) each came from.
#[derive(Clone, Debug)]
pub struct SampleSet {
    values: Vec<(f64, f64, u8)>,
    n_uniform: u64,
    n_ball: u64,
    ball_measure: f64,
}

fn lattice_generator(n: u64, d: usize) -> Vec<u64> {
    // Generalized golden ratio: the root of x^{d+1} = x + 1.
    let mut x: f64 = 2.0;
    for _ in 0..200 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d)
        .map(|j| {
            let a = (1.0 / x).powi(j as i32);
            let mut g = ((a * n as f64).round() as u64) % n.max(1);
            while num_integer::gcd(g, n) != 1 && n > 1 {
                g = (g + 1) % n;
            }
            g
        })
        .collect()
}

fn chunk_ranges(n: usize, chunks: usize) -> Vec<(usize, usize)> {
    let c = chunks.max(1).min(n.max(1));
    (0..c).map(|k| (k * n / c, (k + 1) * n / c)).collect()
}

/// `n` torus points in `[0, 2 pi)^d`, deterministic for fixed `(seed, chunks)`.
fn torus_points(kind: SamplerKind, d: usize, n: usize, seed: u64, chunks: usize, stream_base: u64) -> Vec<Vec<f64>> {
    match kind {
        SamplerKind::Lattice => {
            let g = lattice_generator(n as u64, d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base);
            let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    g.iter()
                        .zip(&shift)
                        .map(|(&gj, s)| {
                            let k = ((i as u128 * gj as u128) % n as u128) as f64 / n as f64;
                            2.0 * PI * (k + s).fract()
                        })
                        .collect()
                })
                .collect()
        }
        SamplerKind::Random => chunk_ranges(n, chunks)
            .into_par_iter()
            .enumerate()
            .flat_map_iter(|(c, (a, b))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_base + c as u64);
                (a..b).map(move |_| (0..d).map(|_| 2.0 * PI * rng.random::<f64>()).collect::<Vec<f64>>()).collect::<Vec<_>>()
            })
            .collect(),
    }
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Draw and evaluate a sample set; `eps` sets the stratification radius when enabled.
pub fn draw_samples(phi: &BohrLift, cfg: &SamplerConfig, n: usize, eps: f64) -> Result<SampleSet> {
    if n < MIN_SAMPLES {
        return Err(Error::Precondition(format!("need at least {MIN_SAMPLES} samples")));
    }
    let d = phi.dim;
    let Some(st) = cfg.stratify.as_ref().filter(|s| s.share > 0.0 && !s.centers.is_empty()) else {
        let pts = torus_points(cfg.kind, d, n, cfg.seed, cfg.chunks, 0);
        let values = pts.par_iter().map(|t| {
            let v = phi.eval_theta(t);
            (v.re, v.im, 0u8)
        });
        return Ok(SampleSet { values: values.collect(), n_uniform: n as u64, n_ball: 0, ball_measure: 0.0 });
    };
    if st.centers.iter().any(|c| c.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: st.centers.iter().map(Vec::len).find(|&l| l != d).unwrap() });
    }
    if !(0.0..1.0).contains(&st.share) {
        return Err(Error::Precondition("stratification share must lie in [0, 1)".into()));
    }
    let r = (st.radius_factor * eps.sqrt()).min(PI);
    let in_ball = |t: &[f64]| st.centers.iter().any(|c| c.iter().zip(t).all(|(ci, ti)| wrap(ti - ci).abs() <= r));
    // Balls are assumed disjoint; their union then has this normalized measure.
    let ball_measure = st.centers.len() as f64 * (r / PI).powi(d as i32);
    let n_ball = ((n as f64) * st.share).round() as usize;
    let n_uni = n - n_ball;
    let uni = torus_points(cfg.kind, d, n_uni, cfg.seed, cfg.chunks, 0);
    let unit = torus_points(cfg.kind, d, n_ball, cfg.seed, cfg.chunks, 1 << 32);
    let k = st.centers.len();
    let mut values: Vec<(f64, f64, u8)> = uni
        .par_iter()
        .map(|t| {
            if in_ball(t) {
                (f64::INFINITY, 0.0, 0u8)
            } else {
                let v = phi.eval_theta(t);
                (v.re, v.im, 0u8)
            }
        })
        .collect();
    values.par_extend(unit.par_iter().enumerate().map(|(i, u)| {
        let c = &st.centers[i % k];
        let t: Vec<f64> = c.iter().zip(u).map(|(ci, ui)| ci + r * (ui / PI - 1.0)).collect();
        let v = phi.eval_theta(&t);
        (v.re, v.im, 1u8)
    }));
    Ok(SampleSet { values, n_uniform: n_uni as u64, n_ball: n_ball as u64, ball_measure })
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn estimate(&self, hits_uni: u64, hits_ball: u64) -> MeasureEstimate {
        let nu = self.n_uniform as f64;
        let pu = hits_uni as f64 / nu;
        let mut value = pu;
        let mut var = pu * (1.0 - pu) / nu;
        if self.n_ball > 0 {
            let nb = self.n_ball as f64;
            let pb = hits_ball as f64 / nb;
            value += self.ball_measure * pb;
            var += self.ball_measure * self.ball_measure * pb * (1.0 - pb) / nb;
        }
        MeasureEstimate {
            hits: hits_uni + hits_ball,
            samples: self.n_uniform + self.n_ball,
            value: value.clamp(0.0, 1.0),
            ci95: 1.96 * var.sqrt(),
        }
    }

    pub fn box_measure(&self, b: &CarlesonBox) -> MeasureEstimate {
        let (mut hu, mut hb) = (0u64, 0u64);
        for &(re, im, s) in &self.values {
            if b.contains(re, im) {
                if s == 0 {
                    hu += 1
                } else {
                    hb += 1
                }
            }
        }
        self.estimate(hu, hb)
    }

    /// Best box over `tau_grid` at scale `eps` (first maximizer on ties).
    pub fn sup_tau(&self, eps: f64, tau_grid: &[f64]) -> Result<(f64, MeasureEstimate)> {
        check_grid(tau_grid, eps)?;
        let mut ims: Vec<(f64, u8)> = self.values.iter().filter(|v| v.0 <= eps).map(|v| (v.1, v.2)).collect();
        ims.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pre = vec![(0u64, 0u64)];
        for &(_, s) in &ims {
            let (a, b) = *pre.last().unwrap();
            pre.push(if s == 0 { (a + 1, b) } else { (a, b + 1) });
        }
        let lower = |x: f64| ims.partition_point(|v| v.0 < x);
        let upper = |x: f64| ims.partition_point(|v| v.0 <= x);
        let mut best = (tau_grid[0], self.estimate(0, 0));
        for &tau in tau_grid {
            let (lo, hi) = (lower(tau - eps / 2.0), upper(tau + eps / 2.0));
            let m = self.estimate(pre[hi].0 - pre[lo].0, pre[hi].1 - pre[lo].1);
            if m.value > best.1.value {
                best = (tau, m);
            }
        }
        Ok(best)
    }
}

fn check_grid(tau_grid: &[f64], eps: f64) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::Precondition("empty tau grid".into()));
    }
    if tau_grid.windows(2).any(|w| w[1] - w[0] > eps / 2.0 + 1e-12) {
        return Err(Error::Precondition(format!("tau grid spacing exceeds eps/2 = {}", eps / 2.0)));
    }
    Ok(())
}

/// Grid of spacing `eps/2` covering `[-M, M]`, `M = sum |c| + |Im constant| + eps`.
pub fn tau_grid(phi: &BohrLift, eps: f64) -> Vec<f64> {
    let m = phi.im_bound() + eps;
    let steps = (2.0 * m / (eps / 2.0)).ceil() as i64;
    (0..=steps).map(|k| -m + k as f64 * eps / 2.0).collect()
}

pub fn box_measure(phi: &BohrLift, b: &CarlesonBox, cfg: &SamplerConfig, n: usize) -> Result<MeasureEstimate> {
    Ok(draw_samples(phi, cfg, n, b.eps)?.box_measure(b))
}

pub fn sup_tau_measure(phi: &BohrLift, eps: f64, grid: &[f64], cfg: &SamplerConfig, n: usize) -> Result<(f64, MeasureEstimate)> {
    check_grid(grid, eps)?;
    draw_samples(phi, cfg, n, eps)?.sup_tau(eps, grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceVerdict {
    CompactEvidence,
    NonCompactEvidence,
    Inconclusive,
    RestrictedRangeEvidence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub eps_max: f64,
    pub eps_min: f64,
    /// Geometric ratio between consecutive scales.
    pub ratio: f64,
    pub samples: usize,
    pub sampler: SamplerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { eps_max: 0.2, eps_min: 0.0125, ratio: 0.5, samples: 1_000_000, sampler: SamplerConfig::default() }
    }
}

impl FitConfig {
    /// Strictly decreasing scales from `eps_max` down to `eps_min` (inclusive up to rounding).
    pub fn eps_grid(&self) -> Result<Vec<f64>> {
        if !(self.eps_max > self.eps_min && self.eps_min > 0.0 && self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Precondition("need eps_max > eps_min > 0 and ratio in (0, 1)".into()));
        }
        let mut g = vec![self.eps_max];
        while *g.last().unwrap() * self.ratio >= self.eps_min * (1.0 - 1e-9) {
            let e = g.last().unwrap() * self.ratio;
            g.push(e);
        }
        if g.len() < 5 {
            return Err(Error::Precondition(format!("need at least 5 scales, got {}", g.len())));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// `None` when every measure vanished.
    pub kappa_hat: Option<f64>,
    pub stderr: Option<f64>,
    pub r2: Option<f64>,
    pub eps_grid: Vec<f64>,
    pub sup_tau_values: Vec<f64>,
    pub tau_star: Vec<f64>,
    pub ci95: Vec<f64>,
    pub hits: Vec<u64>,
    /// Components of `stderr`: regression residual, sampling noise, slope drift across scales.
    pub stderr_parts: [f64; 3],
    pub verdict: EvidenceVerdict,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let tss: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    (slope, icpt, rss, r2)
}

/// Least-squares slope of `log sup_tau mu` against `log eps`.
///
/// `stderr` combines the regression residual, the propagated binomial noise of each
/// point, and the gap between the global slope and the local slope of the two finest
/// scales (pre-asymptotic drift, which the residual alone does not see).
pub fn kappa_fit(phi: &BohrLift, cfg: &FitConfig) -> Result<ExponentFit> {
    let grid = cfg.eps_grid()?;
    let shared = if cfg.sampler.stratify.is_none() { Some(draw_samples(phi, &cfg.sampler, cfg.samples, grid[0])?) } else { None };
    let mut vals = Vec::new();
    let mut taus = Vec::new();
    let mut cis = Vec::new();
    let mut hits = Vec::new();
    for &eps in &grid {
        let own;
        let s = match &shared {
            Some(s) => s,
            None => {
                own = draw_samples(phi, &cfg.sampler, cfg.samples, eps)?;
                &own
            }
        };
        let (t, m) = s.sup_tau(eps, &tau_grid(phi, eps))?;
        vals.push(m.value);
        taus.push(t);
        cis.push(m.ci95);
        hits.push(m.hits);
    }
    let pos: Vec<usize> = (0..grid.len()).filter(|&i| vals[i] > 0.0).collect();
    let mut fit = ExponentFit {
        kappa_hat: None,
        stderr: None,
        r2: None,
        eps_grid: grid.clone(),
        sup_tau_values: vals.clone(),
        tau_star: taus,
        ci95: cis.clone(),
        hits,
        stderr_parts: [0.0; 3],
        verdict: EvidenceVerdict::RestrictedRangeEvidence,
    };
    if pos.is_empty() {
        return Ok(fit);
    }
    if pos.len() < 3 {
        fit.verdict = EvidenceVerdict::Inconclusive;
        return Ok(fit);
    }
    let x: Vec<f64> = pos.iter().map(|&i| grid[i].ln()).collect();
    let y: Vec<f64> = pos.iter().map(|&i| vals[i].ln()).collect();
    let (slope, _, rss, r2) = ols(&x, &y);
    let k = x.len();
    let mx = x.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let se_ols = (rss / (k as f64 - 2.0) / sxx).sqrt();
    let se_mc = pos
        .iter()
        .zip(&x)
        .map(|(&i, xi)| {
            let sd = cis[i] / 1.96 / vals[i];
            ((xi - mx) / sxx * sd).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let se_drift = (slope - (y[k - 1] - y[k - 2]) / (x[k - 1] - x[k - 2])).abs();
    let se = (se_ols * se_ols + se_mc * se_mc + se_drift * se_drift).sqrt();
    fit.kappa_hat = Some(slope);
    fit.stderr = Some(se);
    fit.r2 = Some(r2);
    fit.stderr_parts = [se_ols, se_mc, se_drift];
    fit.verdict = if slope - 2.0 * se > 1.0 {
        EvidenceVerdict::CompactEvidence
    } else if (slope - 1.0).abs() <= 2.0 * se {
        EvidenceVerdict::NonCompactEvidence
    } else {
        EvidenceVerdict::Inconclusive
    };
    Ok(fit)
}
