//! Shared fixtures for the benchmarks.

use dslab_core::classify::{analyze, Analysis};
use dslab_core::genset::SearchConfig;
use dslab_core::lift::BoundaryConfig;
use dslab_core::symbol::{parse_symbol, DirichletSymbol};

pub const PHI1: &str = "9/2 - 2^-s - 3^-s - 2*6^-s";
pub const PHI2: &str = "13/2 - 4*2^-s - 4*3^-s + 2*6^-s";
pub const LAMBDA: &str = "3/4 - 1/4*6^-s";

pub fn symbol(text: &str) -> DirichletSymbol {
    parse_symbol(text).expect("fixture symbols parse")
}

pub fn analysis(text: &str) -> Analysis {
    analyze(&symbol(text), &SearchConfig::default(), &BoundaryConfig::default()).expect("fixture symbols are admissible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        for t in [PHI1, PHI2, LAMBDA] {
            assert_eq!(analysis(t).profile.dimension, if t == LAMBDA { 1 } else { 2 });
        }
    }
}
