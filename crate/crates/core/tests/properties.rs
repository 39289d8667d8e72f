use std::sync::OnceLock;

use approx::assert_relative_eq;
use fatigue_poisson::bayes::{dic, posterior_survival_band, Chain};
use fatigue_poisson::calibrate::aic;
use fatigue_poisson::fem::{unit_stress_field, MaterialParams, UnitStressField};
use fatigue_poisson::geometry::SpecimenGeometry;
use fatigue_poisson::io::{read_dataset_from, write_dataset_to};
use fatigue_poisson::mesh::{mesh_at_level, refine, refine_n, surface_measure, BoundaryTag, TriMesh};
use fatigue_poisson::poisson::{
    max_stress_log_likelihood, poisson_log_likelihood, CacheMap, Experiment, PoissonParams, SpecimenCache,
};
use fatigue_poisson::sn::{self, SNParams};
use fatigue_poisson::stress::{averaged_effective_stress, build_surface_quadrature, pointwise_profile, VolumeTable};
use proptest::prelude::*;

fn s2_cache() -> &'static SpecimenCache {
    static CACHE: OnceLock<SpecimenCache> = OnceLock::new();
    CACHE.get_or_init(|| {
        SpecimenCache::build(&SpecimenGeometry::specimen2(), &MaterialParams::default(), 1, &[0.0, 0.0125]).unwrap()
    })
}

fn strip_caches() -> &'static CacheMap {
    static CACHES: OnceLock<CacheMap> = OnceLock::new();
    CACHES.get_or_init(|| {
        let g = SpecimenGeometry::rectangle(1.0, 2.0, 0.09).unwrap();
        let cache = SpecimenCache::build(&g, &MaterialParams::default(), 1, &[0.0]).unwrap();
        [("strip".to_string(), cache)].into_iter().collect()
    })
}

fn s2_field() -> &'static (TriMesh, UnitStressField) {
    static FIELD: OnceLock<(TriMesh, UnitStressField)> = OnceLock::new();
    FIELD.get_or_init(|| {
        let mesh = mesh_at_level(&SpecimenGeometry::specimen2(), 1).unwrap();
        let field = unit_stress_field(&mesh, &MaterialParams::default()).unwrap();
        (mesh, field)
    })
}

fn sn_params() -> impl Strategy<Value = SNParams> {
    (4.0..9.0f64, -3.0..-0.5f64, 10.0..40.0f64, 0.1..1.0f64, 0.05..0.8f64)
        .prop_map(|(a1, a2, a3, q, tau)| SNParams { a1, a2, a3, q, tau })
}

fn poisson_params() -> impl Strategy<Value = PoissonParams> {
    (sn_params(), 1.0..2.2f64, prop_oneof![Just(0.0), Just(0.0125)])
        .prop_map(|(sn, beta, delta)| PoissonParams { sn, beta, delta })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sn_cdf_is_monotone_in_cycles_and_stress(
        p in sn_params(),
        lg in 3.0..8.0f64,
        dlg in 0.0..2.0f64,
        s in 0.0..80.0f64,
        ds in 0.0..20.0f64,
    ) {
        let n = 10f64.powf(lg);
        let s = p.a3 + 0.1 + s;
        let c = sn::cdf(n, s, &p).unwrap();
        prop_assert!(sn::cdf(n * 10f64.powf(dlg), s, &p).unwrap() >= c);
        prop_assert!(sn::cdf(n, s + ds, &p).unwrap() >= c);
    }

    #[test]
    fn sn_quantile_inverts_cdf(p in sn_params(), u in 0.01..0.99f64, s in 1.0..60.0f64) {
        let s = p.a3 + s;
        let n = sn::quantile(u, s, &p).unwrap();
        prop_assert!((sn::cdf(n, s, &p).unwrap() - u).abs() < 1e-9);
    }

    #[test]
    fn survival_is_non_increasing_in_cycles_and_traction(
        p in poisson_params(),
        s_max in 20.0..70.0f64,
        ratio in -1.0..0.5f64,
        lg in 3.0..7.0f64,
        dlg in 0.0..1.5f64,
        ds in 0.0..10.0f64,
    ) {
        let cache = s2_cache();
        let prep = cache.prepare(p.beta, p.delta).unwrap();
        let t = fatigue_poisson::fem::traction_for(s_max, ratio, p.sn.q, cache.geometry.width_ratio()).unwrap();
        let t2 = fatigue_poisson::fem::traction_for(s_max + ds, ratio, p.sn.q, cache.geometry.width_ratio()).unwrap();
        let n = 10f64.powf(lg);
        let s = prep.survival(n, t, &p.sn);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(prep.survival(n * 10f64.powf(dlg), t, &p.sn) <= s);
        prop_assert!(prep.survival(n, t2, &p.sn) <= s);
    }

    #[test]
    fn loglik_terms_decompose_into_density_and_survival(
        p in poisson_params(),
        s_max in 30.0..70.0f64,
        lg in 3.5..6.5f64,
    ) {
        let cache = s2_cache();
        let prep = cache.prepare(p.beta, p.delta).unwrap();
        let t = fatigue_poisson::fem::traction_for(s_max, 0.0, p.sn.q, cache.geometry.width_ratio()).unwrap();
        let n = 10f64.powf(lg);
        let rho = prep.first_crack_density(n, t, &p.sn);
        prop_assume!(rho > 1e-250);
        let fail = prep.log_likelihood_term(n, t, true, &p.sn);
        let run_out = prep.log_likelihood_term(n, t, false, &p.sn);
        prop_assert!((fail - rho.ln()).abs() <= 1e-10 * fail.abs().max(1.0));
        prop_assert!((run_out - prep.log_survival(n, t, &p.sn)).abs() <= 1e-12);
    }

    #[test]
    fn uniform_strip_poisson_matches_max_stress(
        p in sn_params(),
        beta in 0.05..0.95f64,
        obs in prop::collection::vec((30.0..90.0f64, -1.0..0.5f64, 3.0..7.0f64, any::<bool>()), 1..20),
    ) {
        let data: Vec<Experiment> = obs
            .into_iter()
            .map(|(s_max, ratio, lg, failed)| Experiment {
                specimen_id: "strip".into(),
                s_max,
                ratio,
                cycles: 10f64.powf(lg),
                failed,
            })
            .collect();
        let caches = strip_caches();
        let a = max_stress_log_likelihood(&data, caches, &p, 0.0).unwrap();
        let b = poisson_log_likelihood(&data, caches, &PoissonParams { sn: p, beta, delta: 0.0 }).unwrap();
        if a.is_finite() {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
        } else {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn averaging_commutes_with_scaling(c in 0.1..50.0f64, k in 0usize..1000, delta in 0.002..0.05f64) {
        let (mesh, field) = s2_field();
        let x = mesh.nodes[k % mesh.num_nodes()];
        let a = averaged_effective_stress(mesh, field, delta, x).unwrap();
        let b = averaged_effective_stress(mesh, &field.scaled(c), delta, x).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-10 * (c * a).abs().max(1e-12));
    }

    #[test]
    fn gamma_is_non_increasing_in_beta(b1 in 0.0..2.3f64, db in 0.0..1.0f64) {
        let cache = s2_cache();
        let g1 = cache.gamma(b1).unwrap();
        match cache.gamma(b1 + db) {
            Ok(g2) => prop_assert!(g2 <= g1),
            Err(_) => prop_assert!(b1 + db >= cache.max_pointwise()),
        }
    }

    #[test]
    fn aic_matches_its_definition(p in 0usize..20, ll in -1e5..1e3f64) {
        prop_assert_eq!(aic(p, ll), 2.0 * (p as f64 - ll));
    }

    #[test]
    fn dataset_round_trips_through_csv(
        rows in prop::collection::vec(
            ("[a-z][a-z0-9_]{0,6}", 1.0..100.0f64, -3.0..0.95f64, 1.0..1e8f64, any::<bool>()),
            1..30,
        )
    ) {
        let data: Vec<Experiment> = rows
            .into_iter()
            .map(|(id, s_max, ratio, cycles, failed)| Experiment { specimen_id: id, s_max, ratio, cycles, failed })
            .collect();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &data).unwrap();
        prop_assert_eq!(read_dataset_from(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn dic_ignores_sample_order(seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let ll = |x: &[f64]| -0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]);
        let chain = |s: Vec<Vec<f64>>| {
            let lls: Vec<f64> = s.iter().map(|x| ll(x)).collect();
            Chain {
                names: vec!["a".into(), "b".into()],
                log_post: lls.clone(),
                log_lik: lls,
                samples: s,
                acceptance_rate: 0.3,
                seed,
                burn_in: 0,
            }
        };
        let a = dic(&chain(samples.clone()), ll);
        let mut shuffled = samples;
        shuffled.shuffle(&mut rng);
        let b = dic(&chain(shuffled), ll);
        prop_assert!((a.dic - b.dic).abs() < 1e-9 * a.dic.abs().max(1.0));
        prop_assert!((a.p_d - b.p_d).abs() < 1e-9 * a.p_d.abs().max(1.0));
    }
}

#[test]
fn band_curves_are_non_increasing() {
    let cache = s2_cache();
    let samples: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            let f = i as f64 / 11.0;
            vec![5.5 + f, -1.5 + 0.6 * f, 25.0 + 10.0 * f, 0.4 + 0.4 * f, 0.15 + 0.3 * f, 1.3 + 0.8 * f]
        })
        .collect();
    let chain = Chain {
        names: ["A1", "A2", "A3", "q", "tau", "beta"].map(String::from).to_vec(),
        log_lik: vec![0.0; samples.len()],
        log_post: vec![0.0; samples.len()],
        samples,
        acceptance_rate: 0.25,
        seed: 0,
        burn_in: 2,
    };
    let n_grid: Vec<f64> = (0..40).map(|k| 10f64.powf(3.0 + 0.1 * k as f64)).collect();
    let band = posterior_survival_band(&chain, cache, 0.0, 45.0, 0.0, &n_grid, 1).unwrap();
    assert_eq!(band.curves.len(), 10);
    for c in &band.curves {
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn refinement_preserves_area_of_polygonal_domains() {
    let geom = SpecimenGeometry::rectangle(1.3, 2.1, 0.09).unwrap();
    let mut mesh = mesh_at_level(&geom, 0).unwrap();
    let area = mesh.total_area();
    assert_relative_eq!(area, 0.65 * 2.1, max_relative = 1e-13);
    for _ in 0..3 {
        mesh = refine(&mesh);
        mesh.check_invariants().unwrap();
        assert_relative_eq!(mesh.total_area(), area, max_relative = 1e-13);
        assert_relative_eq!(surface_measure(&mesh, 0.09), 0.09 * 2.0 * (0.65 + 2.1) + 2.0 * area, max_relative = 1e-13);
    }
}

#[test]
fn refined_notched_meshes_keep_their_invariants() {
    for geom in [SpecimenGeometry::specimen1(), SpecimenGeometry::specimen2()] {
        let base = mesh_at_level(&geom, 0).unwrap();
        let fine = refine_n(&base, 2);
        fine.check_invariants().unwrap();
        // Arc projection only adds material on the convex side of the notch chords.
        let rel = (fine.total_area() - base.total_area()).abs() / base.total_area();
        assert!(rel < 1e-2, "area change {rel}");
        for e in &fine.boundary_edges {
            let [a, b] = e.nodes.map(|n| fine.nodes[n]);
            match e.tag {
                BoundaryTag::B4 => assert!(a[1].abs() < 1e-12 && b[1].abs() < 1e-12),
                BoundaryTag::B5 => assert!(a[0].abs() < 1e-12 && b[0].abs() < 1e-12),
                _ => {}
            }
        }
    }
}

#[test]
fn surface_measure_converges_on_the_notched_specimen() {
    let geom = SpecimenGeometry::specimen2();
    let measures: Vec<f64> = (0..5)
        .map(|k| surface_measure(&mesh_at_level(&geom, k).unwrap(), geom.thickness))
        .collect();
    let diffs: Vec<f64> = measures.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[1] <= 0.5 * w[0], "differences {diffs:?}");
    }
}

#[test]
fn gamma_at_zero_is_the_whole_surface() {
    let (mesh, field) = s2_field();
    let quad = build_surface_quadrature(mesh, 0.09);
    let table = VolumeTable::new(&pointwise_profile(field, &quad), &quad);
    // Every node carries some tension under end loading, so beta = 0 keeps all sites.
    assert_relative_eq!(table.gamma(0.0).unwrap(), surface_measure(mesh, 0.09), max_relative = 1e-12);
}
