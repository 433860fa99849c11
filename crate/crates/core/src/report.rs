//! Serializable analysis reports.

use crate::approx::{boundary_regularity, compactness_index, CompactnessIndex, RegularityProfile};
use crate::carleson::ExponentFit;
use crate::classify::{Analysis, CompactnessVerdict, SymbolProfile};
use crate::error::{Error, Result};
use crate::lift::{BohrLift, BoundaryConfig, BoundaryPoint};
use crate::symbol::DirichletSymbol;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TOOL: &str = "dslab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftTerm {
    pub alpha: Vec<u32>,
    pub c: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftRecord {
    pub dim: usize,
    pub generators: Vec<u64>,
    pub constant: Complex64,
    pub terms: Vec<LiftTerm>,
}

impl From<&BohrLift> for LiftRecord {
    fn from(l: &BohrLift) -> Self {
        Self {
            dim: l.dim,
            generators: l.generators.clone(),
            constant: l.constant,
            terms: l.terms.iter().map(|(a, c)| LiftTerm { alpha: a.clone(), c: *c }).collect(),
        }
    }
}

impl LiftRecord {
    pub fn to_lift(&self) -> Result<BohrLift> {
        let mut l = BohrLift::new(self.constant, self.terms.iter().map(|t| (t.alpha.clone(), t.c)), self.dim)?;
        l.generators = self.generators.clone();
        Ok(l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub symbol: String,
    pub symbol_json: Value,
    pub profile: SymbolProfile,
    pub lift: LiftRecord,
    pub boundary_points: Vec<BoundaryPoint>,
    pub verdict: CompactnessVerdict,
    pub carleson: Option<ExponentFit>,
    pub regularity: Option<Vec<RegularityProfile>>,
    pub compactness_index: Option<CompactnessIndex>,
}

fn strip(mut p: BoundaryPoint) -> BoundaryPoint {
    p.local.full = None;
    p
}

impl AnalysisReport {
    pub fn new(sym: &DirichletSymbol, analysis: &Analysis, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed,
            symbol: sym.to_string(),
            symbol_json: sym.to_json(),
            profile: analysis.profile.clone(),
            lift: LiftRecord::from(&analysis.lift),
            boundary_points: analysis.scan.as_ref().map_or_else(Vec::new, |s| s.points.iter().cloned().map(strip).collect()),
            verdict: analysis.verdict.clone(),
            carleson: None,
            regularity: None,
            compactness_index: None,
        }
    }

    pub fn with_carleson(mut self, fit: ExponentFit) -> Self {
        self.carleson = Some(fit);
        self
    }

    /// Attach boundary-regularity profiles and the compactness index (unrestricted range, `d >= 2`).
    pub fn with_regularity(mut self, analysis: &Analysis) -> Result<Self> {
        let Some(scan) = analysis.scan.as_ref().filter(|s| !s.points.is_empty()) else {
            return Ok(self);
        };
        let profiles = scan
            .points
            .iter()
            .map(|p| {
                boundary_regularity(&analysis.lift, p).map(|mut r| {
                    r.w = strip(r.w);
                    r
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.regularity = Some(profiles);
        if analysis.lift.dim >= 2 {
            self.compactness_index = Some(compactness_index(&analysis.lift, &BoundaryConfig::default())?);
        }
        Ok(self)
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Inconsistent(format!("report serialization: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { pos: 0, msg: format!("report JSON: {e}") })
    }

    /// Serialize, parse back and compare; fails on any non-finite number (which JSON cannot carry).
    pub fn validate(&self) -> Result<()> {
        let back = Self::from_json_str(&self.to_json_string()?)?;
        if &back == self {
            Ok(())
        } else {
            Err(Error::Inconsistent("report does not round-trip; a numeric field is not finite".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleson::{kappa_fit, FitConfig};
    use crate::classify::analyze;
    use crate::genset::SearchConfig;
    use crate::symbol::parse_symbol;

    fn report(text: &str) -> (AnalysisReport, Analysis) {
        let s = parse_symbol(text).unwrap();
        let a = analyze(&s, &SearchConfig::default(), &BoundaryConfig::default()).unwrap();
        (AnalysisReport::new(&s, &a, 7), a)
    }

    #[test]
    fn round_trips_with_all_sections() {
        let (r, a) = report("13/2 - 4*2^-s - 4*3^-s + 2*6^-s");
        let fit = kappa_fit(&a.lift, &FitConfig { samples: 20_000, ..Default::default() }).unwrap();
        let r = r.with_carleson(fit).with_regularity(&a).unwrap();
        assert_eq!(r.compactness_index.as_ref().unwrap().eta_exact, "1/3");
        r.validate().unwrap();
        let back = AnalysisReport::from_json_str(&r.to_json_string().unwrap()).unwrap();
        assert_eq!(back.lift.to_lift().unwrap(), a.lift);
    }

    #[test]
    fn restricted_and_constant_symbols() {
        for text in ["1", "1 + 1/8*2^-s", "s + 2 + 2^-s"] {
            let (r, a) = report(text);
            let r = r.with_regularity(&a).unwrap();
            assert!(r.regularity.is_none());
            r.validate().unwrap();
        }
    }

    #[test]
    fn non_finite_numbers_are_rejected() {
        let (mut r, _) = report("9/2 - 2^-s - 3^-s - 2*6^-s");
        r.profile.min_re = f64::NAN;
        assert!(r.validate().is_err());
    }
}
