use fraclab_core::absorption::{critical_exponent, subcritical_check, Criticality};
use fraclab_core::capacity::{capacity, AmbientGrid, CapacityProblem};
use fraclab_core::conditions::check_wolff_composition;
use fraclab_core::kernel::{energy, signed_pow, truncation_energy};
use fraclab_core::nonlinearity::Nonlinearity;
use fraclab_core::norms::{gagliardo_seminorm, weak_norm_star, weak_norm_sup, SeminormSpec};
use fraclab_core::solver::{check_comparison, minimize_j, objective, SolveOptions};
use fraclab_core::source::solve_ball_constants;
use fraclab_core::wolff::{wolff_field, WolffQuery};
use fraclab_core::{assemble_kernel, DiscreteDomain, KernelSpec, MeasureData, Shape, SolutionField};
use proptest::prelude::*;

fn interval(n: usize) -> DiscreteDomain {
    DiscreteDomain::lattice(Shape::Interval { lo: 0.0, hi: 1.0 }, 1.0 / (n as f64 + 1.0), None).unwrap()
}

fn small_disk() -> DiscreteDomain {
    DiscreteDomain::lattice(
        Shape::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        },
        0.25,
        None,
    )
    .unwrap()
}

fn exponent() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![1.5, 2.0, 3.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equinorm_sandwich(values in prop::collection::vec(-10.0..10.0f64, 200), q in exponent()) {
        let d = interval(200);
        let f = SolutionField::from_values(values).unwrap();
        let star = weak_norm_star(&d, &f, q).unwrap();
        let sup = weak_norm_sup(&d, &f, q).unwrap();
        prop_assert!(star <= sup * (1.0 + 1e-12));
        prop_assert!(sup <= q / (q - 1.0) * star * (1.0 + 1e-12));
    }

    #[test]
    fn chebyshev(values in prop::collection::vec(-5.0..5.0f64, 100), q in exponent(), level in 0.01..5.0f64) {
        let d = interval(100);
        let f = SolutionField::from_values(values).unwrap();
        let mass: f64 = f.values().iter().zip(d.weights()).filter(|(v, _)| v.abs() >= level).map(|(_, w)| w).sum();
        let sup = weak_norm_sup(&d, &f, q).unwrap();
        prop_assert!(mass <= level.powf(-q) * sup.powf(q) * (1.0 + 1e-12));
    }

    #[test]
    fn jordan_decomposition_reconstructs(
        density in prop::collection::vec(-3.0..3.0f64, 60),
        atoms in prop::collection::vec((0usize..60, -2.0..2.0f64), 0..5),
    ) {
        let d = interval(60);
        let mu = MeasureData::from_parts(&d, atoms, density).unwrap();
        let back = mu.positive_part(&d).minus(&mu.negative_part(&d));
        prop_assert_eq!(back.node_masses(&d), mu.node_masses(&d));
        prop_assert!(mu.positive_part(&d).is_nonnegative(&d) && mu.negative_part(&d).is_nonnegative(&d));
    }

    #[test]
    fn seminorm_homogeneous_and_blind_to_constants(values in prop::collection::vec(-1.0..1.0f64, 40), t in -4.0..4.0f64, c in -3.0..3.0f64) {
        // no collar, so a constant field is constant on every node
        let pts = (0..40).map(|i| [i as f64 / 40.0, 0.0]).collect();
        let d = DiscreteDomain::from_points(1, pts, vec![1.0 / 40.0; 40], vec![], vec![]).unwrap();
        let spec = SeminormSpec::new(0.2, 1.5, 0.5, 2.0, 1).unwrap();
        let f = SolutionField::from_values(values).unwrap();
        let base = gagliardo_seminorm(&d, &f, &spec).unwrap();
        let scaled = gagliardo_seminorm(&d, &f.scaled(t), &spec).unwrap();
        prop_assert!((scaled - t.abs() * base).abs() <= 1e-12 * (1.0 + base));
        prop_assert_eq!(gagliardo_seminorm(&d, &SolutionField::constant(40, c), &spec).unwrap(), 0.0);
    }

    #[test]
    fn energy_scales_with_degree_p(values in prop::collection::vec(-1.0..1.0f64, 30), t in -3.0..3.0f64, p in exponent()) {
        let d = interval(30);
        let table = assemble_kernel(&d, &KernelSpec::power(0.3, p)).unwrap();
        let u = SolutionField::from_values(values).unwrap();
        let e = energy(&table, &u, p).unwrap();
        let et = energy(&table, &u.scaled(t), p).unwrap();
        prop_assert!((et - t.abs().powf(p) * e).abs() <= 1e-10 * (1.0 + et));
    }

    #[test]
    fn difference_form_is_monotone(a in -5.0..5.0f64, b in -5.0..5.0f64, p in 1.1..4.0f64) {
        prop_assert!((signed_pow(a, p - 1.0) - signed_pow(b, p - 1.0)) * (a - b) >= 0.0);
    }

    #[test]
    fn objective_strictly_convex(
        u in prop::collection::vec(-1.0..1.0f64, 30),
        v in prop::collection::vec(-1.0..1.0f64, 30),
        p in exponent(),
    ) {
        let diff: f64 = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        prop_assume!(diff > 1e-3);
        let d = interval(30);
        let table = assemble_kernel(&d, &KernelSpec::power(0.3, p)).unwrap();
        let g = Nonlinearity::power(1.5);
        let masses = MeasureData::lebesgue(&d, 1.0).node_masses(&d);
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let j = |x: Vec<f64>| objective(&table, &g, &masses, &SolutionField::from_values(x).unwrap()).unwrap();
        let (ju, jv, jm) = (j(u), j(v), j(mid));
        prop_assert!(jm < 0.5 * (ju + jv) - 1e-14);
    }

    #[test]
    fn subcritical_verdict_matches_threshold(dim in 1usize..=2, s in 0.05..0.95f64, p in 1.2..3.5f64, kappa in 0.5..8.0f64) {
        prop_assume!(s * p < dim as f64 - 0.05);
        let crit = critical_exponent(dim, s, p);
        prop_assume!((kappa - crit).abs() > 0.05);
        let report = subcritical_check(&Nonlinearity::power(kappa), dim, s, p).unwrap();
        let expected = if kappa < crit { Criticality::Subcritical } else { Criticality::Supercritical };
        prop_assert_eq!(report.verdict, expected);
    }

    #[test]
    fn ball_constants_certify(c in 1e-3..5.0f64, a in 1.1..4.0f64, kappa in 1.1..4.0f64) {
        if let Ok(bc) = solve_ball_constants(c, a, kappa) {
            prop_assert!(bc.rho0 > 0.0);
            prop_assert!(c * (bc.t0.powf(a) + bc.t0.powf(kappa) + bc.rho0) <= bc.t0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wolff_monotone_and_quasi_additive(
        first in prop::collection::vec(0.0..2.0f64, 1..=64),
        second in prop::collection::vec(0.0..2.0f64, 1..=64),
        p in exponent(),
    ) {
        let d = small_disk();
        let n = d.n_interior();
        let pad = |v: &[f64]| (0..n).map(|i| v[i % v.len()]).collect::<Vec<f64>>();
        let m1 = MeasureData::from_density(&d, pad(&first)).unwrap();
        let m2 = MeasureData::from_density(&d, pad(&second)).unwrap();
        let sum = m1.plus(&m2);
        let q = WolffQuery::new(0.5, p, 2.0 * d.diam());
        let w1 = wolff_field(&d, &m1, &q).unwrap();
        let w2 = wolff_field(&d, &m2, &q).unwrap();
        let ws = wolff_field(&d, &sum, &q).unwrap();
        let factor = 2f64.powf(1.0 / (p - 1.0));
        for i in 0..n {
            prop_assert!(w1.values()[i] <= ws.values()[i] * (1.0 + 1e-12));
            prop_assert!(ws.values()[i] <= factor * (w1.values()[i] + w2.values()[i]) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn solution_map_is_monotone(
        base in prop::collection::vec(-1.0..1.0f64, 40),
        bump in prop::collection::vec(0.0..1.0f64, 40),
        p in exponent(),
    ) {
        let d = interval(40);
        let table = assemble_kernel(&d, &KernelSpec::power(0.3, p)).unwrap();
        let g = Nonlinearity::power(1.5);
        let lo = MeasureData::from_density(&d, base.clone()).unwrap();
        let hi = MeasureData::from_density(&d, base.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let opts = SolveOptions::quiet(1e-10);
        let u_lo = minimize_j(&d, &table, &g, &lo, &opts).unwrap();
        let u_hi = minimize_j(&d, &table, &g, &hi, &opts).unwrap();
        prop_assert!(check_comparison(&u_hi, &u_lo).unwrap().holds);
        let spec = table.spec();
        for k in [1.0, 2.0, 4.0, 8.0] {
            let te = truncation_energy(&d, &u_hi.field, k, spec).unwrap();
            prop_assert!(te <= k * spec.lambda_k * hi.total_variation(&d) * (1.0 + 1e-8));
        }
    }

    #[test]
    fn composition_ratio_scaling(t in 0.25..4.0f64, kappa in 1.2..3.0f64) {
        let d = small_disk();
        let tau = MeasureData::uniform_ball(&d, &[0.0, 0.0], 0.5, 1.0).unwrap();
        let q = WolffQuery::new(0.5, 2.0, 2.0 * d.diam());
        let base = check_wolff_composition(&d, &tau, kappa, &q).unwrap().sup_ratio;
        let scaled = check_wolff_composition(&d, &tau.scaled(t), kappa, &q).unwrap().sup_ratio;
        let expected = t.powf(kappa - 1.0);
        prop_assert!((scaled / base / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_monotone_and_subadditive(
        e1 in prop::collection::btree_set(0usize..8, 1..=4),
        e2 in prop::collection::btree_set(0usize..8, 1..=4),
        beta in prop::sample::select(vec![1.5, 2.0, 3.0]),
    ) {
        let pts = (0..8).map(|k| [0.3 * (k % 4) as f64, 0.3 * (k / 4) as f64]).collect();
        let grid = AmbientGrid::new(2, pts, vec![0.04; 8]).unwrap();
        let cap = |e: Vec<usize>| capacity(&CapacityProblem::new(1.0, beta, e, grid.clone()), 1e-10).unwrap().value;
        let union: Vec<usize> = e1.union(&e2).copied().collect();
        let (c1, c2, cu) = (cap(e1.into_iter().collect()), cap(e2.into_iter().collect()), cap(union));
        prop_assert!(c1 <= cu * (1.0 + 1e-8));
        prop_assert!(cu <= (c1 + c2) * (1.0 + 1e-8));
    }
}
