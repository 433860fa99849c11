//! Minimal multiplicatively independent generating sets of a frequency set.
//!
//! Candidates are the divisors `g > 1` of elements of the frequency set whose prime-exponent
//! vector lies in the rational span of the set's exponent vectors. Every generator of a
//! generating set with nonnegative exponents divides some element it helps represent, so
//! this candidate pool is complete for such sets.

use crate::error::{Error, Result};
use crate::factor::factorize;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratingSet {
    /// Generators in increasing order.
    pub generators: Vec<u64>,
    /// For each frequency `n`, the multi-index `alpha(n)` with `n = prod q_j^{alpha_j}`.
    pub exponent_map: BTreeMap<u64, Vec<u32>>,
}

impl GeneratingSet {
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    /// `max_n |alpha(n)|`.
    pub fn degree(&self) -> u32 {
        self.exponent_map.values().map(|a| a.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// Exact reconstruction check of every frequency.
    pub fn verify(&self) -> bool {
        self.exponent_map.iter().all(|(&n, alpha)| {
            let mut acc: u128 = 1;
            for (&q, &a) in self.generators.iter().zip(alpha) {
                for _ in 0..a {
                    acc = match acc.checked_mul(q as u128) {
                        Some(v) => v,
                        None => return false,
                    };
                }
            }
            acc == n as u128
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub max_candidates: usize,
    pub max_subsets: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { max_candidates: 512, max_subsets: 2_000_000 }
    }
}

/// Rank over the rationals by fraction-free (Bareiss) elimination.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
    let nrows = m.len();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..ncols {
        if rank == nrows {
            break;
        }
        let Some(piv) = (rank..nrows).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(rank, piv);
        for r in rank + 1..nrows {
            for c in col + 1..ncols {
                let v = (&m[rank][col] * &m[r][c] - &m[r][col] * &m[rank][c]) / &prev;
                m[r][c] = v;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Solve `sum_j x_j cols[j] = target` exactly; `None` if inconsistent. Columns must be independent.
fn solve_exact(cols: &[Vec<i64>], target: &[i64]) -> Option<Vec<BigRational>> {
    let n = cols.len();
    let m = target.len();
    let mut a: Vec<Vec<BigRational>> = (0..m)
        .map(|i| {
            let mut row: Vec<BigRational> = cols.iter().map(|c| BigRational::from_integer(c[i].into())).collect();
            row.push(BigRational::from_integer(target[i].into()));
            row
        })
        .collect();
    let mut r = 0;
    let mut pivcols = Vec::new();
    for c in 0..n {
        let Some(p) = (r..m).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for k in c..=n {
            a[r][k] = &a[r][k] * &inv;
        }
        for i in 0..m {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for k in c..=n {
                    let v = &a[r][k] * &f;
                    a[i][k] -= v;
                }
            }
        }
        pivcols.push(c);
        r += 1;
    }
    if a[r..].iter().any(|row| !row[n].is_zero()) {
        return None;
    }
    let mut x = vec![BigRational::zero(); n];
    for (i, &c) in pivcols.iter().enumerate() {
        x[c] = a[i][n].clone();
    }
    Some(x)
}

fn as_nonneg_int(x: &[BigRational]) -> Option<Vec<u32>> {
    x.iter()
        .map(|v| if v.is_integer() && !v.is_negative() { v.to_integer().to_u32() } else { None })
        .collect()
}

/// Exponent rows of `lambda` in a common prime basis.
fn exponent_rows(lambda: &[u64]) -> Result<(Vec<u64>, Vec<Vec<i64>>)> {
    let facs = lambda.iter().map(|&n| factorize(n)).collect::<Result<Vec<_>>>()?;
    let mut primes: Vec<u64> = facs.iter().flat_map(|f| f.entries.keys().copied()).collect();
    primes.sort_unstable();
    primes.dedup();
    let rows = facs.iter().map(|f| primes.iter().map(|&p| f.exponent(p) as i64).collect()).collect();
    Ok((primes, rows))
}

fn divisors_of(exps: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for &e in exps {
        out = out.into_iter().flat_map(|pre| (0..=e).map(move |k| [pre.clone(), vec![k]].concat())).collect();
    }
    out
}

fn value_of(primes: &[u64], exps: &[i64]) -> Option<u64> {
    let mut acc: u64 = 1;
    for (&p, &e) in primes.iter().zip(exps) {
        acc = acc.checked_mul(p.checked_pow(e as u32)?)?;
    }
    Some(acc)
}

/// Complex dimension of `lambda` and all minimal generating sets, sorted lexicographically.
pub fn complex_dimension(lambda: &[u64], cfg: &SearchConfig) -> Result<(usize, Vec<GeneratingSet>)> {
    let mut lam: Vec<u64> = lambda.to_vec();
    lam.sort_unstable();
    lam.dedup();
    if lam.is_empty() {
        return Ok((0, vec![GeneratingSet { generators: vec![], exponent_map: BTreeMap::new() }]));
    }
    let (primes, rows) = exponent_rows(&lam)?;
    let d = integer_rank(&rows);

    let mut cand: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
    for row in &rows {
        for e in divisors_of(row) {
            if e.iter().all(|&x| x == 0) {
                continue;
            }
            let Some(g) = value_of(&primes, &e) else { continue };
            if cand.contains_key(&g) {
                continue;
            }
            let mut aug = rows.clone();
            aug.push(e.clone());
            if integer_rank(&aug) == d {
                cand.insert(g, e);
            }
            if cand.len() > cfg.max_candidates {
                return Err(Error::SearchBoundExceeded { what: "candidate generators", cap: cfg.max_candidates });
            }
        }
    }
    let cand: Vec<(u64, Vec<i64>)> = cand.into_iter().collect();

    let mut found = Vec::new();
    let mut visited = 0usize;
    let mut idx: Vec<usize> = (0..d).collect();
    let k = cand.len();
    if d > k {
        return Err(Error::Inconsistent("fewer candidates than the rank".into()));
    }
    loop {
        visited += 1;
        if visited > cfg.max_subsets {
            return Err(Error::SearchBoundExceeded { what: "candidate subsets", cap: cfg.max_subsets });
        }
        let cols: Vec<Vec<i64>> = idx.iter().map(|&i| cand[i].1.clone()).collect();
        if integer_rank(&cols) == d {
            let mut map = BTreeMap::new();
            let mut ok = true;
            for (n, row) in lam.iter().zip(&rows) {
                match solve_exact(&cols, row).as_deref().and_then(as_nonneg_int) {
                    Some(alpha) => {
                        map.insert(*n, alpha);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                found.push(GeneratingSet { generators: idx.iter().map(|&i| cand[i].0).collect(), exponent_map: map });
            }
        }
        // next combination in lexicographic order
        let mut i = d;
        loop {
            if i == 0 {
                return Ok((d, found));
            }
            i -= 1;
            if idx[i] < k - d + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..d {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Degree-minimizing set; ties go to the lexicographically smallest generator list.
pub fn optimal_set(sets: &[GeneratingSet]) -> Option<&GeneratingSet> {
    sets.iter().min_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| a.generators.cmp(&b.generators)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gens(sets: &[GeneratingSet]) -> Vec<Vec<u64>> {
        sets.iter().map(|s| s.generators.clone()).collect()
    }

    #[test]
    fn six_sets_for_square_lattice() {
        let (d, sets) = complex_dimension(&[36, 144, 324, 1296], &SearchConfig::default()).unwrap();
        assert_eq!(d, 2);
        assert_eq!(gens(&sets), vec![vec![2, 3], vec![2, 9], vec![2, 18], vec![3, 4], vec![3, 12], vec![4, 9]]);
        let degs: Vec<u32> = sets.iter().map(|s| s.degree()).collect();
        assert_eq!(degs, vec![8, 6, 4, 6, 4, 4]);
        assert_eq!(optimal_set(&sets).unwrap().generators, vec![2, 18]);
        assert!(sets.iter().all(GeneratingSet::verify));
    }

    #[test]
    fn forced_and_one_dimensional() {
        let (d, sets) = complex_dimension(&[2, 3, 6], &SearchConfig::default()).unwrap();
        assert_eq!((d, gens(&sets)), (2, vec![vec![2, 3]]));
        let (d, sets) = complex_dimension(&[4, 8], &SearchConfig::default()).unwrap();
        assert_eq!((d, gens(&sets)), (1, vec![vec![2]]));
        let (d, sets) = complex_dimension(&[6], &SearchConfig::default()).unwrap();
        assert_eq!((d, gens(&sets)), (1, vec![vec![6]]));
    }

    #[test]
    fn caps_are_reported() {
        let cfg = SearchConfig { max_candidates: 3, max_subsets: 10 };
        assert!(matches!(complex_dimension(&[1296], &cfg), Err(Error::SearchBoundExceeded { .. })));
    }

    #[test]
    fn bareiss_rank() {
        assert_eq!(integer_rank(&[vec![2, 2], vec![4, 2], vec![2, 4], vec![4, 4]]), 2);
        assert_eq!(integer_rank(&[vec![1, 2, 3], vec![2, 4, 6]]), 1);
        assert_eq!(integer_rank(&[vec![0, 0]]), 0);
    }

    /// Every size-d subset of divisors of elements, checked directly by integer search.
    fn brute_force(lam: &[u64], d: usize) -> Vec<Vec<u64>> {
        let maxn = *lam.iter().max().unwrap();
        let divs: Vec<u64> = (2..=maxn).filter(|g| lam.iter().any(|n| n % g == 0)).collect();
        let mut out = Vec::new();
        let mut choose = |set: Vec<u64>| {
            fn representable(n: u64, set: &[u64]) -> Option<Vec<Vec<u32>>> {
                if set.is_empty() {
                    return if n == 1 { Some(vec![vec![]]) } else { None };
                }
                let mut all = Vec::new();
                let mut m = n;
                let mut a = 0;
                loop {
                    if let Some(rest) = representable(m, &set[1..]) {
                        for r in rest {
                            all.push([vec![a], r].concat());
                        }
                    }
                    if m % set[0] != 0 {
                        break;
                    }
                    m /= set[0];
                    a += 1;
                }
                if all.is_empty() { None } else { Some(all) }
            }
            if lam.iter().all(|&n| representable(n, &set).is_some()) {
                let rows: Vec<Vec<i64>> = set
                    .iter()
                    .map(|&g| {
                        let f = factorize(g).unwrap();
                        [2u64, 3, 5, 7].iter().map(|&p| f.exponent(p) as i64).collect()
                    })
                    .collect();
                if integer_rank(&rows) == set.len() {
                    out.push(set);
                }
            }
        };
        match d {
            1 => divs.iter().for_each(|&a| choose(vec![a])),
            2 => {
                for i in 0..divs.len() {
                    for j in i + 1..divs.len() {
                        choose(vec![divs[i], divs[j]]);
                    }
                }
            }
            _ => unreachable!(),
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn matches_brute_force(exps in proptest::collection::vec((0u32..4, 0u32..3), 1..4)) {
            let lam: Vec<u64> = exps.iter().map(|&(a, b)| 2u64.pow(a) * 3u64.pow(b)).filter(|&n| n >= 2).collect();
            prop_assume!(!lam.is_empty());
            let (d, sets) = complex_dimension(&lam, &SearchConfig::default()).unwrap();
            prop_assert!(d >= 1 && d <= 2);
            prop_assert_eq!(gens(&sets), brute_force(&lam, d));
            for s in &sets {
                prop_assert!(s.verify());
                prop_assert!(optimal_set(&sets).unwrap().degree() <= s.degree());
            }
        }
    }
}
