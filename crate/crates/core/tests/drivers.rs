use fraclab_core::absorption::{run_absorption, AbsorptionRun};
use fraclab_core::conditions::check_wolff_composition;
use fraclab_core::measure::MeasureDescriptor;
use fraclab_core::nonlinearity::Nonlinearity;
use fraclab_core::solver::{minimize_j, SolveOptions};
use fraclab_core::source::{
    admissible_rho, barrier_factor, fixed_point_iterate, measure_ball_constant, measure_wolff_constant, monotone_source_iterate,
    solve_ball_constants, weak_exponent, FixedPointConfig, MonotoneAbort,
};
use fraclab_core::wolff::WolffQuery;
use fraclab_core::{assemble_kernel, DiscreteDomain, DomainDescriptor, KernelSpec, MeasureData, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interval(n: usize) -> DiscreteDomain {
    DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 1.0 / (n as f64 + 1.0), None).unwrap()
}

#[test]
fn fixed_point_stays_in_measured_ball() {
    let d = interval(120);
    let spec = KernelSpec::power(0.3, 2.0);
    let table = assemble_kernel(&d, &spec).unwrap();
    let g = Nonlinearity::power(1.5);
    let a = weak_exponent(1, spec.sp());
    let c = measure_ball_constant(&d, &table, &g).unwrap().c;
    let bc = solve_ball_constants(c, a, 1.5).unwrap();
    let tau = MeasureData::dirac(&d, &[0.4, 0.0], 1.0);
    let config = FixedPointConfig {
        rho: 0.5 * bc.rho0,
        t0: bc.t0,
        c,
        a,
        kappa: 1.5,
        max_iter: 100,
        tol: 1e-9,
    };
    let out = fixed_point_iterate(&d, &table, &g, &tau, &config).unwrap();
    assert!(out.converged && !out.escaped && out.ball_invariant);
    assert!(out.residual <= config.tol);
    assert!(out.orbit.iter().all(|s| s.weak_norm <= bc.t0));
    // the reported u solves Lu = g(u) + ρτ up to the iteration tolerance
    let back = minimize_j(
        &d,
        &table,
        &Nonlinearity::Zero,
        &tau.scaled(config.rho)
            .with_added_density(&out.report.field.map(|u| g.eval(u)).into_values()),
        &SolveOptions::quiet(1e-11),
    )
    .unwrap();
    assert!(back.field.sub(&out.report.field).l1_norm(&d) < 1e-7);
}

#[test]
fn newton_leaves_two_cycle_for_p_below_two() {
    // signed data with a near tie between neighbours; full Newton steps
    // used to flip the sign of that difference forever
    let d = interval(200);
    let n = d.n_interior();
    let table = assemble_kernel(&d, &KernelSpec::power(0.3, 1.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mu = MeasureData::zero(n);
    for _ in 0..3 {
        let density = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let atoms = (0..2).map(|_| (rng.gen_range(0..n), rng.gen_range(-0.5..0.5))).collect();
        mu = MeasureData::from_parts(&d, atoms, density).unwrap();
    }
    let out = minimize_j(&d, &table, &Nonlinearity::Zero, &mu, &SolveOptions::quiet(1e-10)).unwrap();
    assert!(out.residual <= 1e-10 && out.iterations < 100, "{} iterations", out.iterations);
}

#[test]
fn monotone_iteration_and_barrier_abort() {
    let d = interval(120);
    let table = assemble_kernel(&d, &KernelSpec::power(0.3, 2.0)).unwrap();
    let tau = MeasureData::uniform_ball(&d, &[0.5, 0.0], 0.2, 1.0).unwrap();
    let q = WolffQuery::new(0.3, 2.0, 2.0 * d.diam());
    let c = measure_wolff_constant(&d, &table, &q, &[]).unwrap();
    let m = check_wolff_composition(&d, &tau, 1.5, &q).unwrap().sup_ratio;
    let rho_max = admissible_rho(barrier_factor(2.0), c, m, 1.5, 2.0);
    let ok = monotone_source_iterate(&d, &table, 1.5, &tau, 0.5 * rho_max, &q, c, m, 50).unwrap();
    assert!(ok.abort.is_none() && ok.stabilized);
    assert!(ok.steps.iter().all(|s| s.min_increment >= -1e-12 && s.barrier_ratio <= 1.0));
    assert!(ok.within_one_percent.unwrap() <= 50);
    assert!(ok.lower_constant.unwrap() > 0.0 && ok.upper_constant.unwrap() > 0.0);
    let blown = monotone_source_iterate(&d, &table, 1.5, &tau, 100.0 * rho_max, &q, c, m, 50).unwrap();
    assert!(matches!(blown.abort, Some(MonotoneAbort::Barrier { .. })));
}

fn disk_run(measure: MeasureDescriptor) -> AbsorptionRun {
    AbsorptionRun {
        domain: DomainDescriptor {
            shape: Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            spacing: 0.125,
            r_ext: None,
        },
        kernel: KernelSpec::power(0.5, 2.0),
        nonlinearity: Nonlinearity::power(1.5),
        measure,
        seminorm: None,
        tol: 1e-9,
        truncation_levels: vec![0.5, 2.0, 8.0, 32.0],
        refinements: 1,
    }
}

#[test]
fn signed_solution_between_one_signed_solutions() {
    let plus = MeasureDescriptor::Dirac { at: [0.3, 0.0], mass: 2.0 };
    let minus = MeasureDescriptor::UniformBall {
        center: [-0.4, 0.1],
        radius: 0.3,
        mass: 1.5,
    };
    let signed = MeasureDescriptor::Sum {
        parts: vec![(1.0, plus.clone()), (-1.0, minus.clone())],
    };
    let u = run_absorption(&disk_run(signed)).unwrap().report.field;
    let u1 = run_absorption(&disk_run(plus)).unwrap().report.field;
    let u2 = run_absorption(&disk_run(minus)).unwrap().report.field;
    for i in 0..u.len() {
        let (v, hi, lo) = (u.values()[i], u1.values()[i], -u2.values()[i]);
        assert!(lo - 1e-8 <= v && v <= hi + 1e-8, "node {i}: {lo} ≤ {v} ≤ {hi}");
    }
}

#[test]
fn truncated_scheme_decreases_to_untruncated() {
    let run = disk_run(MeasureDescriptor::UniformBall {
        center: [0.0, 0.0],
        radius: 0.4,
        mass: 30.0,
    });
    let out = run_absorption(&run).unwrap();
    let scheme = out.truncation.unwrap();
    assert_eq!(scheme.monotone, Some(true));
    assert!(scheme.steps.windows(2).all(|w| w[1].max_value <= w[0].max_value + 1e-9));
    // once the level exceeds max u the truncation is inactive
    let last = scheme.steps.last().unwrap();
    assert!(last.level > out.report.field.max_abs());
    assert!((last.max_value - out.report.field.max_abs()).abs() < 1e-7);
    assert!(out.absorption.holds);
}

#[test]
fn sandwich_constant_stable_under_refinement() {
    let mut run = disk_run(MeasureDescriptor::Dirac { at: [0.0, 0.0], mass: 1.0 });
    run.domain.spacing = 0.1;
    let coarse = run_absorption(&run).unwrap().sandwich.c_plus.unwrap();
    run.domain.spacing = 0.05;
    let fine = run_absorption(&run).unwrap().sandwich.c_plus.unwrap();
    assert!(fine / coarse < 2.0 && coarse / fine < 2.0, "{coarse} vs {fine}");
}

#[test]
fn absorption_run_round_trips_through_json() {
    let json = r#"{
        "domain": {"shape": "interval", "lo": 0.0, "hi": 1.0, "spacing": 0.05},
        "kernel": {"s": 0.3, "p": 2.0},
        "nonlinearity": {"kind": "power", "kappa": 1.5, "coefficient": 1.0},
        "measure": {"kind": "random_atoms", "count": 4, "signed": true, "seed": 7}
    }"#;
    let run: AbsorptionRun = serde_json::from_str(json).unwrap();
    assert_eq!(run.truncation_levels, vec![1.0, 4.0, 16.0, 64.0, 256.0]);
    let again: AbsorptionRun = serde_json::from_str(&serde_json::to_string(&run).unwrap()).unwrap();
    assert_eq!(run, again);
    let a = run_absorption(&run).unwrap();
    let b = run_absorption(&again).unwrap();
    assert_eq!(a.report.field, b.report.field);
}
