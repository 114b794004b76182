mod common;

use common::brute_semidistance;
use memoryflow::attractor::*;
use memoryflow::evolution::*;
use memoryflow::kernels::make_exponential_kernel;
use memoryflow::memory_spaces::norm_h;
use memoryflow::viscoelastic::*;
use memoryflow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(points: Vec<Vec<f64>>) -> PointCloud {
    PointCloud::new(points, "test", "euclid").unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn semidistance_equals_double_loop_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let dim = rng.gen_range(1..6);
        let (na, nb) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let a = random_points(&mut rng, na, dim);
        let b = random_points(&mut rng, nb, dim);
        let d = hausdorff_semidist(&cloud(a.clone()), &cloud(b.clone())).unwrap();
        assert_eq!(d, brute_semidistance(&a, &b));
    }
}

#[test]
fn incompatible_clouds_are_rejected() {
    let a = cloud(vec![vec![0.0, 1.0]]);
    let b = cloud(vec![vec![0.0]]);
    assert!(matches!(hausdorff_semidist(&a, &b), Err(Error::DimensionMismatch { .. })));
    let c = PointCloud::new(vec![vec![0.0, 1.0]], "c", "H1").unwrap();
    assert!(hausdorff_semidist(&a, &c).is_err());
    assert!(PointCloud::new(vec![], "e", "euclid").is_err());
    assert!(PointCloud::new(vec![vec![f64::NAN]], "e", "euclid").is_err());
}

#[test]
fn synthetic_rate_recovered() {
    let (omega, q) = (0.37, 2.5);
    let series: Vec<(f64, f64)> = (0..200).map(|i| i as f64 * 0.25).map(|t| (t, q * (-omega * t).exp())).collect();
    let r = attraction_rate(&series).unwrap();
    assert!(((r.omega - omega) / omega).abs() < 1e-6);
    assert!(((r.q - q) / q).abs() < 1e-6);
}

#[test]
fn rate_needs_signal() {
    let zeros: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 0.0)).collect();
    assert!(matches!(attraction_rate(&zeros), Err(Error::Degenerate(_))));
    let few: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, if i < 18 { 1e-12 } else { 1.0 })).collect();
    assert!(attraction_rate(&few).is_err());
}

#[test]
fn box_counting_of_segment_and_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seg: Vec<Vec<f64>> = (0..2000).map(|_| rng.gen::<f64>()).map(|t| vec![t, 0.5 * t, 0.0]).collect();
    let sq: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen(), rng.gen(), 0.0]).collect();
    let d1 = box_counting_dim(&cloud(seg), (0.05, 0.5), 10).unwrap().dimension;
    let d2 = box_counting_dim(&cloud(sq), (0.05, 0.5), 10).unwrap().dimension;
    assert!((d1 - 1.0).abs() < 0.2, "{d1}");
    assert!((d2 - 2.0).abs() < 0.2, "{d2}");
}

#[test]
fn box_counting_edge_cases() {
    let single = cloud(vec![vec![1.0, 2.0]; 150]);
    assert_eq!(box_counting_dim(&single, (0.01, 1.0), 5).unwrap().dimension, 0.0);
    let few = cloud(vec![vec![1.0]; 10]);
    assert!(box_counting_dim(&few, (0.01, 1.0), 5).is_err());
    assert!(box_counting_dim(&single, (0.1, 0.5), 5).is_err());
}

#[test]
fn invariance_of_a_fixed_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts = random_points(&mut rng, 30, 2);
    let c = cloud(pts);
    assert_eq!(invariance_residual(&c, |p| Ok(p.to_vec())).unwrap(), 0.0);
    // a rotation by a quarter turn of a symmetric set leaves it invariant
    let square = cloud(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]);
    let r = invariance_residual(&square, |p| Ok(vec![-p[1], p[0]])).unwrap();
    assert!(r < 1e-15);
    let shifted = invariance_residual(&square, |p| Ok(vec![p[0] + 3.0, p[1]])).unwrap();
    assert!(shifted > 1.0);
}

#[test]
fn embedding_is_an_isometry() {
    let k = make_exponential_kernel(1.0).unwrap();
    let m = GalerkinModel::interval_pi(3, Nonlinearity::Zero, None).unwrap();
    let ops = assemble(&m, &k).unwrap();
    let dt = 0.05;
    let z = at_rest_history(&k, &m, vec![0.3, 0.1, -0.2], vec![0.0, 0.4, 0.1], dt);
    let tr = simulate(&ops, &k, &z, dt, 3.0, Framework::History).unwrap();
    for n in [0, 20, 60] {
        let s = state_at(&tr, n, &k, 1).unwrap();
        let e = embed(&s, m.spectrum()).unwrap();
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - norm_h(&s, m.spectrum(), 0.0).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn bundle_approaches_its_own_tail() {
    let k = make_exponential_kernel(1.0).unwrap();
    let m = GalerkinModel::interval_pi(2, Nonlinearity::Zero, None).unwrap();
    let ops = assemble(&m, &k).unwrap();
    let dt = 0.02;
    let bundle: Vec<Trajectory> = [[0.5, 0.0], [0.0, 0.5], [-0.3, 0.3]]
        .iter()
        .map(|u| simulate(&ops, &k, &at_rest_history(&k, &m, u.to_vec(), vec![0.0; 2], dt), dt, 30.0, Framework::History).unwrap())
        .collect();
    let e = surrogate_attractor(&bundle, &k, m.spectrum(), 25.0, 50).unwrap();
    let series = bundle_distance_series(&bundle, &e, &k, m.spectrum(), 20.0, 50).unwrap();
    assert!(series.last().unwrap().1 < series[0].1);
    assert!(surrogate_attractor(&bundle, &k, m.spectrum(), 99.0, 50).is_err());
    assert!(tail_invariance_residual(&bundle[0], &k, m.spectrum(), 25.0, 100.0, 50).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semidistance_properties(seed in any::<u64>(), na in 1usize..20, nb in 1usize..20, nc in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud(random_points(&mut rng, na, 3));
        let b = cloud(random_points(&mut rng, nb, 3));
        let c = cloud(random_points(&mut rng, nc, 3));
        let ab = hausdorff_semidist(&a, &b).unwrap();
        let bc = hausdorff_semidist(&b, &c).unwrap();
        let ac = hausdorff_semidist(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(hausdorff_semidist(&a, &a).unwrap(), 0.0);
        // enlarging the target can only bring it closer, enlarging the source only further
        let bc_union = b.union(&c).unwrap();
        prop_assert!(hausdorff_semidist(&a, &bc_union).unwrap() <= ab);
        prop_assert!(hausdorff_semidist(&a.union(&c).unwrap(), &b).unwrap() >= ab);
    }
}
