mod common;

use common::{loop_inner, loop_outer3, loop_unbind3, rand_tensor, rand_vec, rel_diff};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tprrnn::tensor::*;

fn dim<R: Rng>(rng: &mut R) -> usize {
    rng.gen_range(1..=10)
}

#[test]
fn outer_and_unbind_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (x, y, z) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let (a, b, c) = (rand_vec(&mut rng, x), rand_vec(&mut rng, y), rand_vec(&mut rng, z));
        assert!(rel_diff(&outer3(&a, &b, &c).unwrap(), &loop_outer3(&a, &b, &c)) <= 1e-12);

        let o2 = outer2(&a, &b).unwrap();
        for i in 0..x {
            for j in 0..y {
                assert_eq!(o2.get2(i, j), a.data()[i] * b.data()[j]);
            }
        }

        let f = rand_tensor(&mut rng, &[x, y, z]);
        assert!(rel_diff(&unbind3(&f, &a, &b).unwrap(), &loop_unbind3(&f, &a, &b)) <= 1e-12);

        let t = rand_tensor(&mut rng, &[x, y]);
        let u2 = unbind2(&t, &b).unwrap();
        let oracle: Vec<f64> = (0..x).map(|i| (0..y).map(|j| t.get2(i, j) * b.data()[j]).sum()).collect();
        assert!(rel_diff(&u2, &Tensor::vector(oracle).unwrap()) <= 1e-12);
    }
}

#[test]
fn contraction_helpers_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (x, y, z) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let f = rand_tensor(&mut rng, &[x, y, z]);
        let (e, r, t) = (rand_vec(&mut rng, x), rand_vec(&mut rng, y), rand_vec(&mut rng, z));
        let src: Vec<f64> = (0..x)
            .map(|i| (0..y).flat_map(|j| (0..z).map(move |k| (j, k))).map(|(j, k)| f.get3(i, j, k) * r.data()[j] * t.data()[k]).sum())
            .collect();
        assert!(rel_diff(&contract_source(&f, &r, &t).unwrap(), &Tensor::vector(src).unwrap()) <= 1e-12);
        let rel: Vec<f64> = (0..y)
            .map(|j| (0..x).flat_map(|i| (0..z).map(move |k| (i, k))).map(|(i, k)| f.get3(i, j, k) * e.data()[i] * t.data()[k]).sum())
            .collect();
        assert!(rel_diff(&contract_relation(&f, &e, &t).unwrap(), &Tensor::vector(rel).unwrap()) <= 1e-12);

        let wt = rand_vec(&mut rng, x);
        let w = rand_tensor(&mut rng, &[x, y]);
        let mt: Vec<f64> = (0..y).map(|j| (0..x).map(|i| w.get2(i, j) * wt.data()[i]).sum()).collect();
        assert!(rel_diff(&matvec_t(&w, &wt).unwrap(), &Tensor::vector(mt).unwrap()) <= 1e-12);
    }
}

#[test]
fn tensor_inner_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        // order-3 with a vector: every valid pair of combined modes
        let (x, y, z) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let f = rand_tensor(&mut rng, &[x, y, z]);
        let (mode, n) = match rng.gen_range(0..3) {
            0 => (1, x),
            1 => (2, y),
            _ => (3, z),
        };
        let v = rand_vec(&mut rng, n);
        let got = tensor_inner(&f, &v, mode, 4).unwrap();
        assert!(rel_diff(&got, &loop_inner(&f, &v, mode, 4)) <= 1e-12);

        // matrix with matrix, arbitrary matching modes
        let (p, q) = (dim(&mut rng), dim(&mut rng));
        let a = rand_tensor(&mut rng, &[p, q]);
        let b = rand_tensor(&mut rng, &[q, p]);
        for (j, k) in [(1, 4), (2, 3), (1, 2)] {
            if p != q && (j, k) == (1, 2) {
                assert!(tensor_inner(&a, &b, j, k).is_err());
                continue;
            }
            let got = tensor_inner(&a, &b, j, k).unwrap();
            assert!(rel_diff(&got, &loop_inner(&a, &b, j, k)) <= 1e-12);
        }
    }
}

#[test]
fn specialised_ops_agree_with_tensor_inner() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let (x, y, z) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let f = rand_tensor(&mut rng, &[x, y, z]);
        let (e, r) = (rand_vec(&mut rng, x), rand_vec(&mut rng, y));
        // contract the entity mode, then the relation mode of what remains
        let step = tensor_inner(&f, &e, 1, 4).unwrap();
        let via_inner = tensor_inner(&step, &r, 1, 3).unwrap();
        assert!(rel_diff(&unbind3(&f, &e, &r).unwrap(), &via_inner) <= 1e-12);

        let t = rand_tensor(&mut rng, &[x, y]);
        assert_eq!(unbind2(&t, &r).unwrap(), tensor_inner(&t, &r, 2, 3).unwrap());
    }
}

#[test]
fn shape_errors() {
    let f = Tensor::zeros(&[2, 3, 4]).unwrap();
    let v2 = Tensor::zeros(&[2]).unwrap();
    let v3 = Tensor::zeros(&[3]).unwrap();
    assert!(unbind3(&f, &v3, &v3).is_err());
    assert!(unbind3(&f, &v2, &v2).is_err());
    assert!(tensor_inner(&f, &v2, 2, 4).is_err());
    assert!(tensor_inner(&f, &v2, 4, 4).is_err());
    assert!(tensor_inner(&f, &v2, 0, 4).is_err());
    assert!(outer2(&f, &v2).is_err());
    assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
}

fn small_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #[test]
    fn outer_distributes(a in small_vec(4), b in small_vec(4), c in small_vec(3), d in small_vec(5)) {
        let (a, b, c, d) = (Tensor::vector(a).unwrap(), Tensor::vector(b).unwrap(), Tensor::vector(c).unwrap(), Tensor::vector(d).unwrap());
        let lhs = outer3(&a.add(&b).unwrap(), &c, &d).unwrap();
        let rhs = outer3(&a, &c, &d).unwrap().add(&outer3(&b, &c, &d).unwrap()).unwrap();
        prop_assert!(rel_diff(&lhs, &rhs) <= 1e-12);
        let lhs2 = outer2(&a.add(&b).unwrap(), &d).unwrap();
        let rhs2 = outer2(&a, &d).unwrap().add(&outer2(&b, &d).unwrap()).unwrap();
        prop_assert!(rel_diff(&lhs2, &rhs2) <= 1e-12);
    }

    #[test]
    fn unbind_of_single_binding_scales_target(a in small_vec(4), b in small_vec(3), c in small_vec(5)) {
        let (a, b, c) = (Tensor::vector(a).unwrap(), Tensor::vector(b).unwrap(), Tensor::vector(c).unwrap());
        let got = unbind3(&outer3(&a, &b, &c).unwrap(), &a, &b).unwrap();
        let want = c.scale(a.dot(&a).unwrap() * b.dot(&b).unwrap()).unwrap();
        prop_assert!(rel_diff(&got, &want) <= 1e-12);
    }

    #[test]
    fn unbind_is_linear_in_state(f in small_vec(24), g in small_vec(24), e in small_vec(2), r in small_vec(3), s in -3.0f64..3.0) {
        let f = Tensor::new(vec![2, 3, 4], f).unwrap();
        let g = Tensor::new(vec![2, 3, 4], g).unwrap();
        let (e, r) = (Tensor::vector(e).unwrap(), Tensor::vector(r).unwrap());
        let lhs = unbind3(&f.add(&g.scale(s).unwrap()).unwrap(), &e, &r).unwrap();
        let rhs = unbind3(&f, &e, &r).unwrap().add(&unbind3(&g, &e, &r).unwrap().scale(s).unwrap()).unwrap();
        prop_assert!(rel_diff(&lhs, &rhs) <= 1e-12);
    }
}
