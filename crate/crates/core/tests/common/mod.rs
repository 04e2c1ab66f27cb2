#![allow(dead_code)]

use rand::Rng;
use tprrnn::tensor::Tensor;

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rand_tensor<R: Rng>(rng: &mut R, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Orthonormal basis of R^n via Gram-Schmidt on random vectors; rows of the
/// result.
pub fn orthonormal<R: Rng>(rng: &mut R, n: usize) -> Vec<Tensor> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // two passes keep the basis orthogonal to machine precision
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    basis.into_iter().map(|v| Tensor::vector(v).unwrap()).collect()
}

/// `max |a-b| / max(1, max|b|)`.
pub fn rel_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims());
    let scale = b.max_abs().max(1.0);
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

// Brute-force loop oracles, independent of the library's kernels.

pub fn loop_outer2(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out.push(a.data()[i] * b.data()[j]);
        }
    }
    Tensor::new(vec![a.len(), b.len()], out).unwrap()
}

pub fn loop_outer3(a: &Tensor, b: &Tensor, c: &Tensor) -> Tensor {
    let (x, y, z) = (a.len(), b.len(), c.len());
    let mut out = vec![0.0; x * y * z];
    for i in 0..x {
        for j in 0..y {
            for k in 0..z {
                out[(i * y + j) * z + k] = a.data()[i] * b.data()[j] * c.data()[k];
            }
        }
    }
    Tensor::new(vec![x, y, z], out).unwrap()
}

pub fn loop_unbind3(f: &Tensor, e: &Tensor, r: &Tensor) -> Tensor {
    let [x, y, z] = [f.dims()[0], f.dims()[1], f.dims()[2]];
    let mut out = vec![0.0; z];
    for (k, o) in out.iter_mut().enumerate() {
        for i in 0..x {
            for j in 0..y {
                *o += f.get3(i, j, k) * e.data()[i] * r.data()[j];
            }
        }
    }
    Tensor::vector(out).unwrap()
}

/// Direct definition of the inner product along combined modes `j`,`k`
/// (1-based), written independently of the library's stride walk.
pub fn loop_inner(a: &Tensor, b: &Tensor, j: usize, k: usize) -> Tensor {
    let dims: Vec<usize> = a.dims().iter().chain(b.dims()).copied().collect();
    let (j, k) = (j - 1, k - 1);
    let keep: Vec<usize> = (0..dims.len()).filter(|&m| m != j && m != k).collect();
    let out_dims: Vec<usize> = keep.iter().map(|&m| dims[m]).collect();
    let total: usize = dims.iter().product();
    let mut out = vec![0.0; out_dims.iter().product::<usize>().max(1)];
    let na = a.order();
    for flat in 0..total {
        let mut idx = vec![0; dims.len()];
        let mut rem = flat;
        for m in (0..dims.len()).rev() {
            idx[m] = rem % dims[m];
            rem /= dims[m];
        }
        if idx[j] != idx[k] {
            continue;
        }
        let ai = idx[..na].iter().zip(a.dims()).fold(0, |acc, (&i, &d)| acc * d + i);
        let bi = idx[na..].iter().zip(b.dims()).fold(0, |acc, (&i, &d)| acc * d + i);
        let oi = keep.iter().fold(0, |acc, &m| acc * dims[m] + idx[m]);
        out[oi] += a.data()[ai] * b.data()[bi];
    }
    if out_dims.is_empty() {
        Tensor::vector(out).unwrap()
    } else {
        Tensor::new(out_dims, out).unwrap()
    }
}

/// Worst deviation over one random orthonormal case of the four recovery
/// properties of the memory operations: bind/unbind, overwrite, backlink and
/// retrieval from the pre-update state.
pub fn tpr_recovery_case<R: Rng>(rng: &mut R) -> f64 {
    use tprrnn::model::*;
    use tprrnn::tensor::{outer3, unbind3};

    let n_e = rng.gen_range(2..=8);
    let n_r = rng.gen_range(3..=8);
    let ents = orthonormal(rng, n_e);
    let rels = orthonormal(rng, n_r);
    let (e1, e2) = (&ents[0], &ents[1]);
    let (r1, r2, r3) = (&rels[0], &rels[1], &rels[2]);
    let zero_f = Tensor::zeros(&[n_e, n_r, n_e]).unwrap();
    let mut worst = 0.0f64;
    let mut check = |got: &Tensor, want: &Tensor| worst = worst.max(got.sub(want).unwrap().max_abs());

    // bind → unbind
    let x = rand_vec(rng, n_e);
    let f = outer3(e1, r1, &x).unwrap();
    check(&unbind3(&f, e1, r1).unwrap(), &x);

    // overwrite: the old target cancels
    let y = rand_vec(rng, n_e);
    let (w, w_hat) = write_delta(&f, e1, r1, &y).unwrap();
    check(&w_hat, &x);
    let f2 = f.add(&w).unwrap();
    check(&unbind3(&f2, e1, r1).unwrap(), &y);
    // move re-files the displaced target under r2
    let m = move_delta(&f, e1, r2, &w_hat).unwrap();
    let f3 = f2.add(&m).unwrap();
    check(&unbind3(&f3, e1, r2).unwrap(), &x);
    check(&unbind3(&f3, e1, r1).unwrap(), &y);

    // backlink retrieves the source from the target
    let b = backlink_delta(&zero_f, e1, e2, r3).unwrap();
    check(&unbind3(&b, e2, r3).unwrap(), e1);

    // full step from F = 0, all retrievals read F0
    let reps = UpdateReps {
        e1: e1.clone(),
        e2: e2.clone(),
        r1: r1.clone(),
        r2: r2.clone(),
        r3: r3.clone(),
    };
    let f1 = step_with(&tprrnn::autodiff::Eager, &zero_f, &reps, AblationConfig::FULL).unwrap();
    check(&unbind3(&f1, e1, r1).unwrap(), e2);
    check(&unbind3(&f1, e1, r2).unwrap(), &Tensor::zeros(&[n_e]).unwrap());
    check(&unbind3(&f1, e2, r3).unwrap(), e1);
    worst
}

/// Reduces any tape value to a scalar through a fixed random projection so
/// that every output entry reaches the loss with a distinct weight.
fn project(tape: &tprrnn::autodiff::Tape, v: tprrnn::autodiff::Var, seed: u64) -> tprrnn::autodiff::Result<tprrnn::autodiff::Var> {
    use rand::SeedableRng;
    use tprrnn::autodiff::Backend;
    let dims = tape.dims(&v);
    let w = rand_tensor(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), &dims);
    let w = tape.constant(w)?;
    tape.sum(&tape.hadamard(&v, &w)?)
}

/// Worst central-difference error (eps 1e-5) of every differentiable
/// primitive on O(1) random inputs.
pub fn primitive_grad_checks() -> Vec<(&'static str, f64)> {
    use rand::SeedableRng;
    use tprrnn::autodiff::{grad_check, Backend, Result, Tape, Var};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let a = rand_vec(&mut rng, 4);
    let b = rand_vec(&mut rng, 4);
    let c = rand_vec(&mut rng, 3);
    let m = rand_tensor(&mut rng, &[3, 4]);
    let f = rand_tensor(&mut rng, &[4, 3, 5]);
    let r = rand_vec(&mut rng, 3);
    let x5 = rand_vec(&mut rng, 5);
    let gamma = Tensor::scalar(1.3).unwrap();
    let beta = Tensor::scalar(-0.4).unwrap();

    type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&Tape, &[Var]) -> Result<Var>>);
    let cases: Vec<Case> = vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|t, v| t.add(&v[0], &v[1]))),
        ("sub", vec![a.clone(), b.clone()], Box::new(|t, v| t.sub(&v[0], &v[1]))),
        ("scale", vec![a.clone()], Box::new(|t, v| t.scale(&v[0], -1.7))),
        ("hadamard", vec![a.clone(), b.clone()], Box::new(|t, v| t.hadamard(&v[0], &v[1]))),
        ("matvec", vec![m.clone(), a.clone()], Box::new(|t, v| t.matvec(&v[0], &v[1]))),
        ("affine", vec![m.clone(), a.clone(), c.clone()], Box::new(|t, v| t.affine(&v[0], &v[1], &v[2]))),
        ("tanh", vec![a.clone()], Box::new(|t, v| t.tanh(&v[0]))),
        ("outer2", vec![a.clone(), c.clone()], Box::new(|t, v| t.outer2(&v[0], &v[1]))),
        ("outer3", vec![a.clone(), c.clone(), b.clone()], Box::new(|t, v| t.outer3(&v[0], &v[1], &v[2]))),
        ("unbind2", vec![m.clone(), a.clone()], Box::new(|t, v| t.unbind2(&v[0], &v[1]))),
        ("unbind3", vec![f, a.clone(), r], Box::new(|t, v| t.unbind3(&v[0], &v[1], &v[2]))),
        ("sum", vec![m.clone()], Box::new(|t, v| t.sum(&v[0]))),
        ("dot", vec![a.clone(), b], Box::new(|t, v| t.dot(&v[0], &v[1]))),
        ("gather", vec![m], Box::new(|t, v| t.gather(&v[0], 1))),
        ("softmax_xent", vec![a], Box::new(|t, v| t.softmax_xent(&v[0], 2))),
        (
            "layer_norm",
            vec![x5, gamma, beta],
            Box::new(|t, v| t.layer_norm(&v[0], &v[1], &v[2], tprrnn::model::LN_EPSILON)),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, params, f)| {
            let err = grad_check(|t, v| project(t, f(t, v)?, 99), &params, 1e-5).unwrap();
            (name, err)
        })
        .collect()
}
