mod oracles;

use leafsev_core::cluster::{kmeans, kmeans_exhaustive, kmeans_from, predict, FeatureMatrix, KMeansParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, usize) {
    let k = rng.gen_range(1..=3);
    let n = rng.gen_range(k.max(2)..=8);
    let dim = rng.gen_range(1..=3);
    let pts = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
        .collect();
    (pts, k)
}

fn recomputed_inertia(points: &FeatureMatrix, model: &leafsev_core::cluster::ClusterModel) -> f64 {
    points
        .rows()
        .zip(&model.assignments)
        .map(|(p, &a)| p.iter().zip(model.centroid(a)).map(|(x, c)| (x - c).powi(2)).sum::<f64>())
        .sum()
}

#[test]
fn exhaustive_restarts_reach_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..500 {
        let (pts, k) = random_instance(&mut rng);
        let fm = FeatureMatrix::from_rows(&pts).unwrap();
        let model = kmeans_exhaustive(&fm, k, 300).unwrap();
        let best = oracles::brute_kmeans_inertia(&pts, k);
        assert!(
            (model.inertia - best).abs() <= 1e-9 * best.max(1.0),
            "case {case}: kmeans {} vs optimum {best} for {pts:?}, k = {k}",
            model.inertia
        );
    }
}

#[test]
fn inertia_never_increases_within_a_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for run in 0..1000 {
        let n = rng.gen_range(10..60);
        let dim = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=6);
        let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fm = FeatureMatrix::new(dim, data).unwrap();
        let model = kmeans(&fm, &KMeansParams { k, seed: run, max_iter: 100, restarts: 1 }).unwrap();
        for w in model.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "run {run}: {:?}", model.inertia_trace);
        }
        assert_eq!(model.inertia_trace.last().copied(), Some(model.inertia));
    }
}

#[test]
fn four_point_example() {
    let fm = FeatureMatrix::from_rows(&[[0.0], [1.0], [10.0], [11.0]]).unwrap();
    let m = kmeans(&fm, &KMeansParams { k: 2, seed: 3, max_iter: 100, restarts: 4 }).unwrap();
    let mut c = m.centroids.clone();
    c.sort_by(f64::total_cmp);
    assert_eq!(c, vec![0.5, 10.5]);
    assert!((m.inertia - 1.0).abs() < 1e-12);

    let model = kmeans_from(&fm, &[0.5, 10.5], 10).unwrap();
    assert_eq!(predict(&model, &[5.4]).unwrap(), 0);
    assert_eq!(predict(&model, &[5.5]).unwrap(), 0);
    assert_eq!(predict(&model, &[10.5]).unwrap(), 1);
    assert!(predict(&model, &[1.0, 2.0]).is_err());
}

#[test]
fn one_cluster_is_the_mean_and_k_equal_n_is_exact() {
    let fm = FeatureMatrix::from_rows(&[[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]]).unwrap();
    let m = kmeans(&fm, &KMeansParams::new(1, 0)).unwrap();
    assert!((m.centroids[0] - 3.0).abs() < 1e-12);
    assert!((m.centroids[1] - 3.0).abs() < 1e-12);
    let m = kmeans(&fm, &KMeansParams::new(3, 0)).unwrap();
    assert_eq!(m.inertia, 0.0);
    assert!(kmeans(&fm, &KMeansParams::new(4, 0)).is_err());
    assert!(kmeans(&fm, &KMeansParams::new(0, 0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn model_invariants(
        data in prop::collection::vec(-50.0f64..50.0, 6..120),
        dim in 1usize..=3,
        k in 1usize..=5,
        seed in any::<u64>(),
    ) {
        let n = data.len() / dim;
        prop_assume!(n >= k);
        let fm = FeatureMatrix::new(dim, data[..n * dim].to_vec()).unwrap();
        let params = KMeansParams { k, seed, max_iter: 300, restarts: 3 };
        let m = kmeans(&fm, &params).unwrap();

        // every point sits with its nearest centroid, ties to the lowest index
        for (p, &a) in fm.rows().zip(&m.assignments) {
            prop_assert_eq!(predict(&m, p).unwrap(), a);
        }
        let recomputed = recomputed_inertia(&fm, &m);
        prop_assert!((recomputed - m.inertia).abs() <= 1e-9 * recomputed.max(1.0));

        // deterministic
        prop_assert_eq!(&kmeans(&fm, &params).unwrap(), &m);

        // converged runs are fixed points
        if m.iterations_run < params.max_iter {
            let again = kmeans_from(&fm, &m.centroids, 1).unwrap();
            prop_assert_eq!(&again.assignments, &m.assignments);
            prop_assert_eq!(&again.centroids, &m.centroids);
        }
    }
}

#[test]
fn subset_starts_alone_can_miss_the_optimum() {
    // every 3-subset start stalls at 323.24 here
    let pts = vec![
        vec![8.438317656833433, -1.2285335309671819, -6.236526477780342],
        vec![9.065197810991982, 6.971143734563114, 8.939523944912892],
        vec![6.937576848639665, -0.1700550674610426, 3.6595742401524234],
        vec![-8.27550537760449, -1.2739117736407088, -4.844434263154533],
        vec![-0.2532111616578714, -9.91099043858581, -5.189013705187202],
        vec![-4.263544220416122, -5.651925563140572, 9.288652961178869],
        vec![1.8365683369916006, 6.569170188848087, -2.638325688035752],
        vec![7.108132686291, 7.703465051598201, 8.759008633800718],
    ];
    let fm = FeatureMatrix::from_rows(&pts).unwrap();
    let best = oracles::brute_kmeans_inertia(&pts, 3);
    assert!((best - 318.08216530042336).abs() < 1e-9);
    let m = kmeans_exhaustive(&fm, 3, 300).unwrap();
    assert!((m.inertia - best).abs() < 1e-9);
}
