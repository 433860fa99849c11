//! Degree profiles and the compactness decision tree.

use crate::error::{Error, Result};
use crate::genset::{complex_dimension, optimal_set, GeneratingSet, SearchConfig};
use crate::lift::{find_boundary_points, lift, lift_phi0, BohrLift, BoundaryConfig, BoundaryPoint, BoundaryScan, RangeKind};
use crate::symbol::DirichletSymbol;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolProfile {
    pub dimension: usize,
    pub all_minimal_sets: Vec<GeneratingSet>,
    pub optimal_set: GeneratingSet,
    pub degree: u32,
    pub range_kind: RangeKind,
    pub class_member: bool,
    /// Infimum of `Re Phi` over the torus (of the `phi_0` lift when `c0 >= 1`).
    pub min_re: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Compact,
    NonCompact,
    UndeterminedByTheory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "Thm1")]
    Thm1,
    #[serde(rename = "Thm2")]
    Thm2,
    #[serde(rename = "Thm4-deg≤2")]
    Thm4Deg2,
    #[serde(rename = "Thm4-J≥2")]
    Thm4J2,
    #[serde(rename = "dim1")]
    Dim1,
    #[serde(rename = "RestrictedRange")]
    RestrictedRange,
    #[serde(rename = "OutsideTheory")]
    OutsideTheory,
}

impl Rule {
    pub fn tag(&self) -> &'static str {
        match self {
            Rule::Thm1 => "Thm1",
            Rule::Thm2 => "Thm2",
            Rule::Thm4Deg2 => "Thm4-deg≤2",
            Rule::Thm4J2 => "Thm4-J≥2",
            Rule::Dim1 => "dim1",
            Rule::RestrictedRange => "RestrictedRange",
            Rule::OutsideTheory => "OutsideTheory",
        }
    }
}

/// Local Carleson exponent predicted at one boundary point, when a case of the table applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointKappa {
    pub theta: Vec<f64>,
    pub index_j: usize,
    /// Whether the imaginary linear form is independent of the positive Hessian directions.
    pub im_form_independent: bool,
    /// Case tag `PROPMAIN-case1` .. `PROPMAIN-case4`, if one applies.
    pub case: Option<String>,
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessVerdict {
    pub verdict: Verdict,
    pub rule: Rule,
    pub kappa_w: Vec<PointKappa>,
}

fn profile_from_scan(
    d: usize,
    sets: Vec<GeneratingSet>,
    min_re: f64,
    range_kind: RangeKind,
    class_member: bool,
) -> SymbolProfile {
    let opt = optimal_set(&sets).cloned().expect("at least one generating set");
    SymbolProfile { dimension: d, degree: opt.degree(), optimal_set: opt, all_minimal_sets: sets, range_kind, class_member, min_re }
}

/// The lift used for range analysis: shifted for `c0 = 0`, the `phi_0` part otherwise.
pub fn analysis_lift(sym: &DirichletSymbol, gen: &GeneratingSet) -> Result<BohrLift> {
    if sym.c0 == 0 {
        lift(sym, gen)
    } else {
        lift_phi0(sym, gen)
    }
}

/// Structural profile plus range analysis.
pub fn degree_profile(sym: &DirichletSymbol, search: &SearchConfig, bcfg: &BoundaryConfig) -> Result<SymbolProfile> {
    let (d, sets) = complex_dimension(&sym.support(), search)?;
    let opt = optimal_set(&sets).cloned().expect("nonempty");
    let phi = analysis_lift(sym, &opt)?;
    let (min_re, range_kind, member) = range_of(sym, &phi, bcfg)?;
    Ok(profile_from_scan(d, sets, min_re, range_kind, member))
}

fn range_of(sym: &DirichletSymbol, phi: &BohrLift, bcfg: &BoundaryConfig) -> Result<(f64, RangeKind, bool)> {
    let tol = bcfg.tol;
    if sym.c0 >= 1 && phi.terms.is_empty() {
        let c = phi.constant;
        let zero = c.norm() == 0.0;
        let member = zero || c.re > 0.0;
        let kind = if c.re > tol { RangeKind::Restricted } else { RangeKind::Unrestricted };
        return Ok((c.re, kind, member));
    }
    match find_boundary_points(phi, bcfg) {
        Ok(scan) => {
            let member = if sym.c0 == 0 && phi.terms.is_empty() { scan.min_value > tol } else { true };
            Ok((scan.min_value, scan.range_kind, member))
        }
        Err(Error::NotInClass(_)) => {
            let m = crate::lift::polish_minimum(phi, &vec![0.0; phi.dim]).1;
            Ok((m.min(-tol), RangeKind::Unrestricted, false))
        }
        Err(e) => Err(e),
    }
}

/// Characteristic `c0 >= 1`: compact exactly for restricted range.
pub fn theorem1_verdict(sym: &DirichletSymbol, range_kind: &RangeKind) -> Result<Verdict> {
    if sym.c0 == 0 {
        return Err(Error::Precondition("theorem1_verdict needs c0 >= 1".into()));
    }
    Ok(match range_kind {
        RangeKind::Restricted => Verdict::Compact,
        RangeKind::Unrestricted => Verdict::NonCompact,
    })
}

/// Whether the imaginary linear form has a component in the Hessian kernel.
pub fn im_form_independent(p: &BoundaryPoint, rel_tol: f64) -> bool {
    let d = p.theta.len();
    let h = DMatrix::from_fn(d, d, |i, j| p.hessian[i][j]);
    let thr = rel_tol * (1.0 + h.norm());
    let a = DVector::from_iterator(d, p.local.a.iter().map(|c| c.re));
    let mut kernel_part = DVector::zeros(d);
    for (l, v) in p.eigvals.iter().zip(&p.eigvecs) {
        if *l <= thr {
            let v = DVector::from_column_slice(v);
            kernel_part += &v * v.dot(&a);
        }
    }
    kernel_part.norm() > 1e-6 * (1.0 + a.norm())
}

/// Case table for the local exponent at a boundary point.
pub fn point_kappa(p: &BoundaryPoint, degree: u32, d: usize, rel_tol: f64) -> PointKappa {
    let j = p.index_j;
    let indep = im_form_independent(p, rel_tol);
    let (case, kappa) = if j >= 1 && indep {
        (Some(1), Some(1.0 + j as f64 / 2.0))
    } else if j >= 2 {
        (Some(2), Some((1.0 + j as f64) / 2.0))
    } else if j == 1 && degree == 2 {
        (Some(3), Some(9.0 / 8.0))
    } else if j == 0 && degree == 2 {
        (Some(4), Some((d as f64 + 3.0) / 4.0))
    } else {
        (None, None)
    };
    PointKappa {
        theta: p.theta.clone(),
        index_j: j,
        im_form_independent: indep,
        case: case.map(|c| format!("PROPMAIN-case{c}")),
        kappa,
    }
}

/// Decision tree over the profile, the lift and its boundary points.
pub fn classify_compactness(
    sym: &DirichletSymbol,
    profile: &SymbolProfile,
    phi: &BohrLift,
    scan: &BoundaryScan,
    bcfg: &BoundaryConfig,
) -> Result<CompactnessVerdict> {
    if !profile.class_member {
        return Err(Error::NotInClass(format!("inf Re Phi = {:.3e}", profile.min_re)));
    }
    for p in &scan.points {
        if p.theta.len() != phi.dim || phi.re_theta(&p.theta).abs() > 1e3 * bcfg.tol {
            return Err(Error::Inconsistent("boundary point does not lie on the zero set of this lift".into()));
        }
    }
    let kappa_w: Vec<PointKappa> =
        scan.points.iter().map(|p| point_kappa(p, profile.degree, profile.dimension, bcfg.rank_rel_tol)).collect();
    let out = |verdict, rule| Ok(CompactnessVerdict { verdict, rule, kappa_w: kappa_w.clone() });
    if sym.c0 >= 1 {
        return out(theorem1_verdict(sym, &profile.range_kind)?, Rule::Thm1);
    }
    if profile.range_kind == RangeKind::Restricted || profile.dimension == 0 {
        return out(Verdict::Compact, Rule::RestrictedRange);
    }
    if profile.dimension == 1 {
        return out(Verdict::NonCompact, Rule::Dim1);
    }
    if phi.is_separated() {
        return out(Verdict::Compact, Rule::Thm2);
    }
    if profile.degree <= 2 {
        return out(Verdict::Compact, Rule::Thm4Deg2);
    }
    if scan.points.iter().all(|p| p.index_j >= 2) {
        return out(Verdict::Compact, Rule::Thm4J2);
    }
    out(Verdict::UndeterminedByTheory, Rule::OutsideTheory)
}

/// Everything the structural pipeline produces for one symbol.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub profile: SymbolProfile,
    pub lift: BohrLift,
    pub scan: Option<BoundaryScan>,
    pub verdict: CompactnessVerdict,
}

/// Profile, lift, boundary scan and verdict; `NotInClass` for symbols outside the class.
pub fn analyze(sym: &DirichletSymbol, search: &SearchConfig, bcfg: &BoundaryConfig) -> Result<Analysis> {
    let profile = degree_profile(sym, search, bcfg)?;
    if !profile.class_member {
        return Err(Error::NotInClass(format!("inf Re Phi = {:.3e} < 0", profile.min_re)));
    }
    let phi = analysis_lift(sym, &profile.optimal_set)?;
    let scan = if phi.terms.is_empty() { None } else { Some(find_boundary_points(&phi, bcfg)?) };
    let empty = BoundaryScan {
        min_value: profile.min_re,
        argmin: vec![],
        range_kind: profile.range_kind.clone(),
        points: vec![],
        truncated: false,
    };
    let verdict = classify_compactness(sym, &profile, &phi, scan.as_ref().unwrap_or(&empty), bcfg)?;
    Ok(Analysis { profile, lift: phi, scan, verdict })
}
