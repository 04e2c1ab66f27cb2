mod common;

use common::{orthonormal, rand_tensor, rand_vec, rel_diff, tpr_recovery_case};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tprrnn::autodiff::Eager;
use tprrnn::model::*;
use tprrnn::tensor::{outer3, unbind3, Tensor};

#[test]
fn recovery_on_ten_thousand_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let worst = (0..10_000).map(|_| tpr_recovery_case(&mut rng)).fold(0.0, f64::max);
    assert!(worst <= 1e-10, "worst deviation {worst:e}");
}

#[test]
fn orthonormal_helper_is_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = orthonormal(&mut rng, 7);
    for i in 0..7 {
        for j in 0..7 {
            let d = b[i].dot(&b[j]).unwrap();
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }
}

/// Brute-force expansion of `e ⊗ r ⊗ (t − Σ_{i,j} F[i][j][·] e_i r_j)`.
fn oracle_delta(f: &Tensor, e: &Tensor, r: &Tensor, t: &Tensor) -> Tensor {
    let d = f.dims().to_vec();
    let mut out = vec![0.0; f.len()];
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                let mut hat = 0.0;
                for a in 0..d[0] {
                    for b in 0..d[1] {
                        hat += f.get3(a, b, k) * e.data()[a] * r.data()[b];
                    }
                }
                out[(i * d[1] + j) * d[2] + k] = e.data()[i] * r.data()[j] * (t.data()[k] - hat);
            }
        }
    }
    Tensor::new(d, out).unwrap()
}

#[test]
fn deltas_match_oracle_on_random_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let f = rand_tensor(&mut rng, &[4, 3, 4]);
        let (e1, e2) = (rand_vec(&mut rng, 4), rand_vec(&mut rng, 4));
        let (r1, r2, r3) = (rand_vec(&mut rng, 3), rand_vec(&mut rng, 3), rand_vec(&mut rng, 3));
        let (w, w_hat) = write_delta(&f, &e1, &r1, &e2).unwrap();
        assert!(rel_diff(&w, &oracle_delta(&f, &e1, &r1, &e2)) < 1e-12);
        assert!(rel_diff(&w_hat, &unbind3(&f, &e1, &r1).unwrap()) < 1e-12);
        let m = move_delta(&f, &e1, &r2, &w_hat).unwrap();
        assert!(rel_diff(&m, &oracle_delta(&f, &e1, &r2, &w_hat)) < 1e-12);
        let b = backlink_delta(&f, &e1, &e2, &r3).unwrap();
        assert!(rel_diff(&b, &oracle_delta(&f, &e2, &r3, &e1)) < 1e-12);
    }
}

#[test]
fn zero_state_deltas() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = Tensor::zeros(&[3, 2, 3]).unwrap();
    let (e1, e2) = (rand_vec(&mut rng, 3), rand_vec(&mut rng, 3));
    let (r1, r2, r3) = (rand_vec(&mut rng, 2), rand_vec(&mut rng, 2), rand_vec(&mut rng, 2));
    let (w, w_hat) = write_delta(&f, &e1, &r1, &e2).unwrap();
    assert!(w_hat.is_zero());
    assert_eq!(w, outer3(&e1, &r1, &e2).unwrap());
    assert!(move_delta(&f, &e1, &r2, &w_hat).unwrap().is_zero());
    assert_eq!(backlink_delta(&f, &e1, &e2, &r3).unwrap(), outer3(&e2, &r3, &e1).unwrap());
}

#[test]
fn full_step_on_two_by_two_by_two_matches_hand_expansion() {
    // e1 = (1,0), e2 = (0,1), r1 = (1,0), r2 = (0,1), r3 = (1,1), F0 holds
    // (e1, r1) → (2,3).
    let v = |x: &[f64]| Tensor::vector(x.to_vec()).unwrap();
    let reps = UpdateReps {
        e1: v(&[1.0, 0.0]),
        e2: v(&[0.0, 1.0]),
        r1: v(&[1.0, 0.0]),
        r2: v(&[0.0, 1.0]),
        r3: v(&[1.0, 1.0]),
    };
    let f0 = outer3(&reps.e1, &reps.r1, &v(&[2.0, 3.0])).unwrap();
    let f1 = step_with(&Eager, &f0, &reps, AblationConfig::FULL).unwrap();
    // ŵ = (2,3), m̂ = 0, b̂ = F0[1][·][·]·r3 = 0
    // F1[0][0] = (0,1), F1[0][1] = (2,3), F1[1][0] = F1[1][1] = (1,0)
    let want = Tensor::new(vec![2, 2, 2], vec![0.0, 1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(f1, want);
}

#[test]
fn ablation_composes_from_shared_retrievals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let f = rand_tensor(&mut rng, &[4, 3, 4]);
        let reps = UpdateReps {
            e1: rand_vec(&mut rng, 4),
            e2: rand_vec(&mut rng, 4),
            r1: rand_vec(&mut rng, 3),
            r2: rand_vec(&mut rng, 3),
            r3: rand_vec(&mut rng, 3),
        };
        let (w, w_hat) = write_delta(&f, &reps.e1, &reps.r1, &reps.e2).unwrap();
        let m = move_delta(&f, &reps.e1, &reps.r2, &w_hat).unwrap();
        let b = backlink_delta(&f, &reps.e1, &reps.e2, &reps.r3).unwrap();
        let delta = |flags: &str| delta_with(&Eager, &f, &reps, flags.parse().unwrap()).unwrap();
        assert_eq!(delta("w"), w);
        assert_eq!(delta("wm"), w.add(&m).unwrap());
        assert_eq!(delta("wb"), w.add(&b).unwrap());
        assert_eq!(delta("wmb"), w.add(&m).unwrap().add(&b).unwrap());
    }
}

fn unit(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter_map("nonzero", |v| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (norm > 1e-3).then(|| v.into_iter().map(|x| x / norm).collect())
    })
}

proptest! {
    #[test]
    fn overwrite_leaves_no_residue(e in unit(5), r in unit(4), x in prop::collection::vec(-2.0f64..2.0, 5), y in prop::collection::vec(-2.0f64..2.0, 5)) {
        let (e, r) = (Tensor::vector(e).unwrap(), Tensor::vector(r).unwrap());
        let (x, y) = (Tensor::vector(x).unwrap(), Tensor::vector(y).unwrap());
        let f = outer3(&e, &r, &x).unwrap();
        let (w, _) = write_delta(&f, &e, &r, &y).unwrap();
        let got = unbind3(&f.add(&w).unwrap(), &e, &r).unwrap();
        prop_assert!(got.sub(&y).unwrap().max_abs() <= 1e-12);
    }
}
