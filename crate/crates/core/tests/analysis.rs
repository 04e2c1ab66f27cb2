use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tprrnn::analysis::*;

fn random_rows<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Rows scattered tightly around `k` orthogonal directions.
fn blocks<R: Rng>(rng: &mut R, k: usize, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.05..0.05)).collect();
            v[c] += 1.0;
            rows.push(v);
            truth.push(c);
        }
    }
    (rows, truth)
}

/// Average linkage recomputed from scratch at every merge: the distance
/// between two clusters is the mean leaf-to-leaf distance.
fn naive_merge_heights(sim: &[Vec<f64>]) -> Vec<f64> {
    let mut clusters: Vec<Vec<usize>> = (0..sim.len()).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        total += 1.0 - sim[i][j];
                    }
                }
                let d = total / (clusters[a].len() * clusters[b].len()) as f64;
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (d, a, b) = best;
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        heights.push(d);
    }
    heights
}

#[test]
fn merge_heights_match_naive_average_linkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 3, 5, 9, 17] {
        let sim = cosine_matrix(&random_rows(&mut rng, n, 4));
        let dendro = hcluster(&sim);
        assert_eq!(dendro.merges.len(), n - 1);
        let got: Vec<f64> = dendro.merges.iter().map(|m| m.distance).collect();
        for (g, w) in got.iter().zip(naive_merge_heights(&sim)) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
        assert_eq!(dendro.merges.last().unwrap().size, n);
    }
}

#[test]
fn block_structure_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (rows, truth) = blocks(&mut rng, 4, 6);
    let sim = cosine_matrix(&rows);
    let labels = hcluster(&sim).cut(4);
    assert_eq!(cluster_sizes(&labels), vec![6; 4]);
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            assert_eq!(labels[i] == labels[j], truth[i] == truth[j]);
        }
    }
    let (intra, inter) = cluster_separation(&sim, &labels);
    assert!(intra > 0.99 && inter.abs() < 0.1);
}

#[test]
fn separation_matches_direct_average() {
    let sim = vec![
        vec![1.0, 0.8, 0.1, 0.0],
        vec![0.8, 1.0, 0.2, -0.1],
        vec![0.1, 0.2, 1.0, 0.6],
        vec![0.0, -0.1, 0.6, 1.0],
    ];
    let (intra, inter) = cluster_separation(&sim, &[0, 0, 1, 1]);
    assert!((intra - 0.7).abs() < 1e-15);
    assert!((inter - 0.05).abs() < 1e-15);
}

#[test]
fn csv_and_pgm_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sim = cosine_matrix(&random_rows(&mut rng, 7, 3));
    let order = hcluster(&sim).leaf_order;
    let csv = matrix_csv(&reorder(&sim, &order), &order);
    let (headers, back) = parse_matrix_csv(&csv).unwrap();
    assert_eq!(headers, order);
    assert_eq!(back, reorder(&sim, &order));

    let pgm = matrix_pgm(&sim);
    let header = b"P5\n7 7\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 49);
    // diagonal is +1 → white
    assert_eq!(pgm[header.len()], 255);
    assert_eq!(matrix_pgm(&[vec![-1.0]]).last(), Some(&0));
}

#[test]
fn unknown_role_is_an_error() {
    assert!(parse_role("e1").is_ok());
    assert!(parse_role("q_r3").is_ok());
    assert!(matches!(parse_role("e9"), Err(AnalysisError::UnknownRep(_))));
}

proptest! {
    #[test]
    fn leaf_order_is_a_bijection(seed in 0u64..1000, n in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = cosine_matrix(&random_rows(&mut rng, n, 3));
        let d = hcluster(&sim);
        let mut order = d.leaf_order.clone();
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
        for k in 1..=n.min(6) {
            let labels = d.cut(k);
            prop_assert_eq!(cluster_sizes(&labels).len(), k);
            prop_assert_eq!(cluster_sizes(&labels).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn reorder_preserves_entries(seed in 0u64..1000, n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = cosine_matrix(&random_rows(&mut rng, n, 3));
        let d = hcluster(&sim);
        let r = reorder(&sim, &d.leaf_order);
        let sorted = |m: &[Vec<f64>]| {
            let mut v: Vec<u64> = m.iter().flatten().map(|x| x.to_bits()).collect();
            v.sort_unstable();
            v
        };
        prop_assert_eq!(sorted(&r), sorted(&sim));
        for i in 0..n {
            prop_assert_eq!(r[i][i], 1.0);
            for j in 0..n {
                prop_assert_eq!(r[i][j], r[j][i]);
                prop_assert!((-1.0..=1.0).contains(&r[i][j]));
            }
        }
    }
}
