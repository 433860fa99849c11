//! End-to-end runs across modules: parse, lift, classify, index, report.

use dslab_core::approx::{
    boundary_regularity, compactness_index, eta_from_orders, lower_bound_witness, schatten_separator, Schatten, WitnessConfig,
};
use dslab_core::carleson::{kappa_fit, FitConfig};
use dslab_core::classify::{analyze, Analysis, Verdict};
use dslab_core::flat::{build_separated_example, counterexample_factory, CexKind, CERT_TOL};
use dslab_core::genset::SearchConfig;
use dslab_core::lift::BoundaryConfig;
use dslab_core::report::AnalysisReport;
use dslab_core::scalar::{format_rational, parse_rational};
use dslab_core::symbol::{parse_symbol, DirichletSymbol};

fn run(sym: &DirichletSymbol) -> Analysis {
    analyze(sym, &SearchConfig::default(), &BoundaryConfig::default()).expect("analysis")
}

#[test]
fn separated_example_flows_through_the_whole_pipeline() {
    let ex = build_separated_example(&[4, 4]).unwrap();
    assert_eq!(ex.symbol.to_string(), "7/2 - 2*2^-s - 2*3^-s + 1/2*4^-s + 1/2*9^-s");

    let reparsed = parse_symbol(&ex.symbol.to_string()).unwrap();
    assert_eq!(reparsed, ex.symbol);

    let a = run(&reparsed);
    assert_eq!(a.profile.dimension, 2);
    let report = AnalysisReport::new(&reparsed, &a, 0).with_regularity(&a).unwrap();
    let idx = report.compactness_index.as_ref().expect("index for d = 2");
    assert_eq!(idx.eta_exact, format_rational(&eta_from_orders(&[4, 4]).unwrap()));
    assert_eq!(idx.eta_exact, "1/6");
    report.validate().unwrap();
}

#[test]
fn schatten_recipe_example_has_the_advertised_index() {
    let r = schatten_separator(1.0, 4.0, true).unwrap();
    assert_eq!((r.in_q, r.in_p), (Schatten::InSp, Schatten::NotInSp));
    let ex = r.example.as_ref().unwrap();
    assert_eq!(ex.orders, vec![r.k; r.d]);
    let idx = compactness_index(&ex.lift, &BoundaryConfig::default()).unwrap();
    assert_eq!(idx.eta_exact, r.eta_exact);
    let eta = parse_rational(&r.eta_exact).unwrap();
    assert_eq!(eta, eta_from_orders(&ex.orders).unwrap());
}

#[test]
fn counterexample_symbol_survives_json_and_reanalysis() {
    let delta = parse_rational("1/10").unwrap();
    let cex = counterexample_factory(CexKind::Cex3, &delta, None).unwrap();
    let back = DirichletSymbol::from_json(&cex.symbol.to_json()).unwrap();
    assert_eq!(back, cex.symbol);
    let a = run(&back);
    assert_eq!(a.verdict.verdict, Verdict::UndeterminedByTheory);
    assert!(cex.certificate.grid_min >= -CERT_TOL);
    assert!(cex.certificate.guaranteed_lower <= cex.certificate.grid_min);
}

#[test]
fn carleson_fit_is_reproducible_for_a_fixed_seed() {
    let a = run(&parse_symbol("9/2 - 2^-s - 3^-s - 2*6^-s").unwrap());
    let cfg = FitConfig { samples: 40_000, ..Default::default() };
    let f1 = kappa_fit(&a.lift, &cfg).unwrap();
    let f2 = kappa_fit(&a.lift, &cfg).unwrap();
    assert_eq!(f1, f2);
    let k = f1.kappa_hat.unwrap();
    assert!(k > 1.0 && k < 2.5, "kappa {k}");
}

#[test]
fn witness_table_matches_the_point_count() {
    let sym = parse_symbol("13/2 - 4*2^-s - 4*3^-s + 2*6^-s").unwrap();
    let a = run(&sym);
    let w = &a.scan.as_ref().unwrap().points[0];
    let prof = boundary_regularity(&a.lift, w).unwrap();
    let lw = lower_bound_witness(&a.lift, &prof, 1e-3, 8.0, &WitnessConfig::default()).unwrap();
    assert!(lw.checks.all());
    let csv = lw.z_table_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "m,rho_1,rho_2,theta_1,theta_2,residual".replace("m,", &format!("m,{}", alpha_head(&lw))));
    assert_eq!(lines.count(), lw.z.len());
    assert!(lw.z.len() >= lw.s.len() * lw.min_preimages);
}

fn alpha_head(lw: &dslab_core::approx::LatticeWitness) -> String {
    let a = lw.z.first().map_or(0, |p| p.alpha.len());
    (0..a).map(|j| format!("alpha_{},", j + 2)).collect()
}
