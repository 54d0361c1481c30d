//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! Criteria 3 through 9 share a single run of the default battery (120
//! instances); criteria 1 and 2 check the solver against closed-form and
//! brute-force oracles with their own runtime budgets.

use std::sync::OnceLock;
use std::time::Instant;

use pqlab::battery::{run_battery, BatteryConfig, BatteryReport};
use pqlab::instance::{gen_random, RandomParams};
use pqlab::measure::{inner, norm_s, DataPair, ExponentPair, Field, MeasureSpace};
use pqlab::rng::{derive_seed, SplitMix64};
use pqlab::solver::{lp_projection, pair_distance, solve_system, SolveOptions};
use pqlab::subspace::build_subspace;
use pqlab::PPowerMap;

fn battery() -> &'static BatteryReport {
    static BATTERY: OnceLock<BatteryReport> = OnceLock::new();
    BATTERY.get_or_init(|| {
        let report = run_battery(&BatteryConfig::default()).expect("battery must run");
        eprintln!("[acceptance] default battery: {:.2} s", report.elapsed_seconds);
        report
    })
}

fn assert_no_failures_named(report: &BatteryReport, names: &[&str]) {
    for f in &report.failures {
        for name in names {
            assert!(
                !f.contains(name),
                "battery reported a {name} failure: {f}"
            );
        }
    }
}

#[test]
fn criterion_1_linear_oracle() {
    battery();
    let start = Instant::now();
    let mut rng = SplitMix64::new(0x11CE);
    let opts = SolveOptions::default();
    for k in 0..50u64 {
        let points = 4 + (k % 29) as usize;
        let dim = 1 + (k % 2) as usize;
        let m = 1 + (k as usize % (points * dim - 1));
        let file = gen_random(
            RandomParams {
                points,
                dim,
                subspace_dim: m,
                unit_weights: false,
                unit_coefficient: true,
            },
            2.0,
            derive_seed(0xACCE97, k),
        )
        .unwrap();
        let inst = file.build(&format!("linear-{k}")).unwrap();
        let report = solve_system(&inst.subspace, inst.map(), &inst.f, &opts).unwrap();

        let want_alpha = inst
            .subspace
            .project_plus(&inst.f.b.try_sub(&inst.f.a).unwrap())
            .unwrap();
        let want_beta = inst
            .subspace
            .project_minus(&inst.f.a.try_sub(&inst.f.b).unwrap())
            .unwrap();
        let size = (norm_s(&want_alpha, 2.0).unwrap() + norm_s(&want_beta, 2.0).unwrap()).max(1e-300);
        let da = norm_s(&report.phi.a.try_sub(&want_alpha).unwrap(), 2.0).unwrap();
        let db = norm_s(&report.phi.b.try_sub(&want_beta).unwrap(), 2.0).unwrap();
        assert!(
            (da + db) <= 1e-10 * size,
            "instance {k}: deviation {:.3e} of size {size:.3e}",
            da + db
        );
        let _ = rng.next_u64();
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "linear oracle took {elapsed:.2} s");
    println!("ACCEPTANCE 1 linear-oracle: PASS ({elapsed:.2} s)");
}

/// Bisection root of the strictly increasing scalar Galerkin residual.
fn bisection_coefficient(
    inst: &pqlab::instance::Instance,
) -> f64 {
    let e = &inst.subspace.basis()[0];
    let residual = |c: f64| -> f64 {
        let u = inst.f.a.try_add(&e.scale(c)).unwrap();
        let au = pqlab::map::apply_field(inst.map(), &u);
        inner(&au.try_sub(&inst.f.b).unwrap(), e).unwrap()
    };
    let mut r = 1.0_f64;
    while residual(-r) > 0.0 || residual(r) < 0.0 {
        r *= 2.0;
        assert!(r < 1e12, "bisection bracket failed");
    }
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_2_scalar_brute_force_oracle() {
    battery();
    let start = Instant::now();
    let ps = [1.5, 3.0, 4.0];
    let opts = SolveOptions::default();
    for k in 0..20u64 {
        let p = ps[(k % 3) as usize];
        let points = 1 + (k % 3) as usize;
        let file = gen_random(
            RandomParams {
                points,
                dim: 1,
                subspace_dim: 1,
                unit_weights: false,
                unit_coefficient: false,
            },
            p,
            derive_seed(0x5CA1A2, k),
        )
        .unwrap();
        let inst = file.build(&format!("scalar-{k}")).unwrap();
        if inst.subspace.dim_plus() == 0 {
            continue;
        }
        let report = solve_system(&inst.subspace, inst.map(), &inst.f, &opts).unwrap();
        let c_solver = inner(&report.phi.a, &inst.subspace.basis()[0]).unwrap();
        let c_oracle = bisection_coefficient(&inst);
        assert!(
            (c_solver - c_oracle).abs() <= 1e-6,
            "instance {k} (p={p}): solver {c_solver} vs oracle {c_oracle}"
        );
    }

    // Worked value: p = 4, symmetric projection forces c = 1/2.
    let sp = MeasureSpace::new(vec![1.0, 1.0], 1).unwrap();
    let sub = build_subspace(sp.clone(), &[Field::new(sp.clone(), vec![1.0, 1.0]).unwrap()]).unwrap();
    let f = Field::new(sp.clone(), vec![1.0, 0.0]).unwrap();
    let alpha = lp_projection(&sub, &f, 4.0, 1e-11).unwrap();
    assert!((alpha.values()[0] - 0.5).abs() <= 1e-6 && (alpha.values()[1] - 0.5).abs() <= 1e-6);

    // Worked value: p = 3, weights (1, 2), f = (2, 0): c = 2 / (1 + sqrt 2).
    let spw = MeasureSpace::new(vec![1.0, 2.0], 1).unwrap();
    let subw =
        build_subspace(spw.clone(), &[Field::new(spw.clone(), vec![1.0, 1.0]).unwrap()]).unwrap();
    let fw = Field::new(spw.clone(), vec![2.0, 0.0]).unwrap();
    let alphaw = lp_projection(&subw, &fw, 3.0, 1e-11).unwrap();
    let want = 2.0 / (1.0 + 2.0_f64.sqrt());
    assert!((alphaw.values()[0] - want).abs() <= 1e-6, "{} vs {want}", alphaw.values()[0]);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "scalar oracle took {elapsed:.2} s");
    println!("ACCEPTANCE 2 scalar-brute-force-oracle: PASS ({elapsed:.2} s)");
}

#[test]
fn criterion_3_uniqueness_and_duality() {
    let report = battery();
    let battery_count = report.records.iter().filter(|r| r.family != "levelset").count();
    assert_eq!(battery_count, 120, "default battery must hold 120 instances");
    assert_no_failures_named(report, &["uniqueness", "duality", "dual-solve", "solve"]);
    println!("ACCEPTANCE 3 uniqueness-and-duality: PASS (120 instances)");
}

#[test]
fn criterion_4_structural_identities() {
    let report = battery();
    assert_no_failures_named(
        report,
        &[
            "orthonormality",
            "idempotence",
            "self-adjointness",
            "complementarity",
            "plus-minus-orthogonality",
            "split-exactness",
            "split-supports",
            "pq-orthogonality",
            "s-power-round-trip",
        ],
    );
    println!("ACCEPTANCE 4 structural-identities: PASS");
}

#[test]
fn criterion_5_inequality_audits() {
    let report = battery();
    assert_no_failures_named(
        report,
        &[
            "basic-estimate",
            "strong-ratio",
            "weak-ratio",
            "weak-le-strong",
            "energy-nonnegative",
            "energy-estimate",
            "pointwise",
            "comparability",
            "levelset",
        ],
    );
    for (tau, c, _) in &report.strong_constants {
        assert!(c.is_finite(), "C_tau at {tau} not finite");
    }
    for (lambda, c, _) in &report.weak_constants {
        assert!(c.is_finite(), "weak constant at {lambda} not finite");
    }
    assert!(report.c1_bitwise_equal, "C_1 must equal the max basic-estimate ratio bitwise");
    println!("ACCEPTANCE 5 inequality-audits: PASS");
}

#[test]
fn criterion_6_commutator_estimate() {
    let report = battery();
    assert_no_failures_named(report, &["commutator"]);
    // Every grid instance swept all three norms over the ten epsilons.
    let grid_records: Vec<_> = report.records.iter().filter(|r| r.family == "grid-hodge").collect();
    assert!(!grid_records.is_empty());
    for r in &grid_records {
        for s in [1.5, 2.0, 3.0] {
            let ratios: Vec<f64> = r
                .commutator_rows
                .iter()
                .filter(|(rs, _, _, ratio)| *rs == s && *ratio > 0.0)
                .map(|(_, _, _, ratio)| *ratio)
                .collect();
            assert_eq!(ratios.len(), 10, "{}: expected 10 epsilons at s = {s}", r.id);
            let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().cloned().fold(0.0, f64::max);
            assert!(hi < 4.0 * lo, "{}: sweep spread [{lo}, {hi}] at s = {s}", r.id);
        }
    }
    println!("ACCEPTANCE 6 commutator-estimate: PASS ({} grid instances)", grid_records.len());
}

#[test]
fn criterion_7_nonlinearity_witness() {
    let report = battery();
    assert!(
        report.p4_additivity_max > 1e-3,
        "no p = 4 instance broke additivity (max {:.3e})",
        report.p4_additivity_max
    );
    assert!(
        report.p2_additivity_max <= 1e-10,
        "p = 2 additivity defect too large: {:.3e}",
        report.p2_additivity_max
    );
    assert_no_failures_named(report, &["linear-additivity"]);
    println!(
        "ACCEPTANCE 7 nonlinearity-witness: PASS (p4 defect {:.3e}, p2 defect {:.3e})",
        report.p4_additivity_max, report.p2_additivity_max
    );
}

#[test]
fn criterion_8_scaling_covariance() {
    let report = battery();
    assert_no_failures_named(report, &["scaling-covariance", "scaling-solve"]);
    let checked = report.records.iter().filter(|r| r.scaling_checked).count();
    assert!(checked >= 20, "only {checked} instances were scaling-checked");
    println!("ACCEPTANCE 8 scaling-covariance: PASS ({checked} instances x 3 factors)");
}

#[test]
fn criterion_9_performance_envelope() {
    let report = battery();
    assert!(report.passed(), "battery failures: {:?}", report.failures);
    assert!(
        report.elapsed_seconds < 60.0,
        "battery took {:.2} s, budget is 60 s",
        report.elapsed_seconds
    );
    println!(
        "ACCEPTANCE 9 performance-envelope: PASS ({:.2} s for 120 instances)",
        report.elapsed_seconds
    );
}

#[test]
fn exercised_interfaces_stay_consistent() {
    // Spot-check that the shared battery reused here matches a direct solve:
    // the acceptance fixture must not drift from the library entry points.
    let report = battery();
    let rec = report
        .records
        .iter()
        .find(|r| r.family == "random-half" && r.p == 3.0 && r.seed == 0)
        .expect("battery contains the p = 3 seed 0 random instance");
    let cfg = BatteryConfig::default();
    let instances = pqlab::battery::battery_instances(&cfg).unwrap();
    let bi = instances.iter().find(|b| b.id == rec.id).unwrap();
    let inst = bi.file.build(&bi.id).unwrap();
    let solved = solve_system(&inst.subspace, inst.map(), &inst.f, &SolveOptions::default()).unwrap();
    assert_eq!(solved.basic_estimate_ratio.to_bits(), rec.basic_ratio.to_bits());

    // Dual route agrees, as criterion 3 demands, on this spot instance too.
    let dual = pqlab::solver::solve_dual(&inst.subspace, inst.map(), &inst.f, &SolveOptions::default()).unwrap();
    assert!(pair_distance(&solved.phi, &dual.phi) <= 100.0 * solved.tolerance);

    // And the identity map stays the p = 2 fixed point of the map family.
    let sp = MeasureSpace::uniform(3, 1).unwrap();
    let id = PPowerMap::new(2.0).unwrap();
    let f = DataPair::new(
        Field::new(sp.clone(), vec![1.0, -2.0, 0.5]).unwrap(),
        Field::zero(sp.clone()),
        ExponentPair::new(2.0).unwrap(),
    )
    .unwrap();
    let full = pqlab::subspace::random_subspace(sp, 3, 1).unwrap();
    let r = solve_system(&full, &id, &f, &SolveOptions::default()).unwrap();
    assert!(r.phi.b.is_zero());
}
