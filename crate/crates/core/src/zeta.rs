//! Riemann zeta on the real half-line `s > 1` (and beyond, for `s > 0, s != 1`).
//!
//! Uses Borwein's accelerated alternating series for the Dirichlet eta function and
//! divides out `1 - 2^{1-s}` with `expm1` so the pole at `s = 1` is resolved accurately.

use crate::error::{Error, Result};

const TERMS: usize = 64;

fn borwein_weights() -> &'static [f64; TERMS + 1] {
    use std::sync::OnceLock;
    static W: OnceLock<[f64; TERMS + 1]> = OnceLock::new();
    W.get_or_init(|| {
        // d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!), built from term ratios.
        let n = TERMS as f64;
        let mut d = [0.0f64; TERMS + 1];
        let mut term = 1.0 / n;
        let mut acc = term;
        d[0] = n * acc;
        for i in 1..=TERMS {
            let fi = i as f64;
            term *= (n + fi - 1.0) * (n - fi + 1.0) * 4.0 / ((2.0 * fi - 1.0) * (2.0 * fi));
            acc += term;
            d[i] = n * acc;
        }
        let dn = d[TERMS];
        let mut w = [0.0f64; TERMS + 1];
        for k in 0..=TERMS {
            w[k] = (dn - d[k]) / dn;
        }
        w
    })
}

/// Dirichlet eta `sum (-1)^{k} (k+1)^{-s}` for real `s > 0`.
pub fn dirichlet_eta(s: f64) -> f64 {
    let w = borwein_weights();
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for k in 0..TERMS {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let t = sign * w[k] * ((k + 1) as f64).powf(-s) - comp;
        let next = sum + t;
        comp = (next - sum) - t;
        sum = next;
    }
    sum
}

/// `zeta(s)` for real `s > 0`, `s != 1`.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 0.0) || s == 1.0 || !s.is_finite() {
        return Err(Error::Precondition(format!("zeta needs finite real s > 0, s != 1 (got {s})")));
    }
    if s > 60.0 {
        return Ok(1.0 + 2f64.powf(-s));
    }
    let denom = -((1.0 - s) * std::f64::consts::LN_2).exp_m1();
    Ok(dirichlet_eta(s) / denom)
}

/// `zeta(2 sigma)`, the squared norm of the reproducing kernel at `sigma + it`.
pub fn zeta_two_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.5) {
        return Err(Error::Precondition(format!("zeta(2 sigma) needs sigma > 1/2 (got {sigma})")));
    }
    zeta(2.0 * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Laurent expansion about s = 1 with Stieltjes constants.
    fn laurent(s: f64) -> f64 {
        let g = [0.5772156649015329, -0.0728158454836767, -0.009690363192872318, 0.002053834420303346, 0.002325370065467300];
        let x = s - 1.0;
        let mut acc = 1.0 / x;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for (n, gn) in g.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
                pow *= -x;
            }
            acc += gn * pow / fact;
        }
        acc
    }

    /// Plain Euler-Maclaurin summation as an independent oracle away from the pole.
    fn euler_maclaurin(s: f64) -> f64 {
        let n = 20.0f64;
        let mut acc: f64 = (1..20).map(|k| (k as f64).powf(-s)).sum();
        acc += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
        let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
        let mut rising = s;
        let mut fact = 2.0;
        for (j, bj) in b.iter().enumerate() {
            let p = 2 * j + 1;
            acc += bj / fact * rising * n.powf(-s - p as f64);
            rising *= (s + p as f64) * (s + p as f64 + 1.0);
            fact *= ((p + 2) * (p + 3)) as f64;
        }
        acc
    }

    #[test]
    fn closed_forms() {
        assert!((zeta(2.0).unwrap() - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0).unwrap() - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(6.0).unwrap() - PI.powi(6) / 945.0).abs() < 1e-14);
        assert!((zeta(20.0).unwrap() - 1.0000009539620338).abs() < 1e-15);
        assert!((dirichlet_eta(1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn near_the_pole() {
        for x in [2e-3, 5e-3, 1e-2, 2e-2] {
            let s = 1.0 + x;
            let err = (zeta(s).unwrap() - laurent(s)).abs();
            assert!(err < 1e-12, "s = {s}: err {err:e}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(zeta(1.0).is_err());
        assert!(zeta(-1.0).is_err());
        assert!(zeta(f64::NAN).is_err());
        assert!(zeta_two_sigma(0.5).is_err());
    }

    proptest! {
        #[test]
        fn matches_euler_maclaurin(sigma in 0.501f64..10.0) {
            let s = 2.0 * sigma;
            let a = zeta_two_sigma(sigma).unwrap();
            let b = euler_maclaurin(s);
            prop_assert!((a - b).abs() < 1e-12, "sigma {sigma}: {a} vs {b}");
        }

        #[test]
        fn pole_order_is_one(sigma in 1e-4f64..5.0) {
            let z = zeta(1.0 + 2.0 * sigma).unwrap();
            // 1/x < zeta(1 + x) < 1/x + 1 for x > 0.
            prop_assert!(z * sigma >= 0.5 * (1.0 - 1e-12));
            prop_assert!(z * sigma <= 0.5 + sigma);
        }
    }
}
