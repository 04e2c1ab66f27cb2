//! Dense tensors of order 1 to 3 and the binding/unbinding algebra.
//!
//! Storage is a flat row-major `Vec<f64>` (last index fastest). Every public
//! operation either returns a tensor whose entries are all finite or reports
//! [`TensorError::NonFinite`]. A scalar is an order-1 tensor of length 1.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects an order-{expected} tensor, got order {got}")]
    WrongOrder {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unsupported tensor shape {0:?} (orders 1 to 3 with positive dims)")]
    BadShape(Vec<usize>),
    #[error("data length {got} does not match shape {dims:?}")]
    LengthMismatch { dims: Vec<usize>, got: usize },
    #[error("invalid contraction modes ({j}, {k}) for combined order {order}")]
    InvalidMode { j: usize, k: usize, order: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("data", &self.data)
            .finish()
    }
}

fn check_shape(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > 3 || dims.iter().any(|&d| d == 0) {
        return Err(TensorError::BadShape(dims.to_vec()));
    }
    Ok(dims.iter().product())
}

fn finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite(op))
    }
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&dims)?;
        if data.len() != len {
            return Err(TensorError::LengthMismatch {
                dims,
                got: data.len(),
            });
        }
        finite("Tensor::new", &data)?;
        Ok(Self { dims, data })
    }

    /// Builds a tensor from an operation result, checking finiteness only.
    fn produced(op: &'static str, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        finite(op, &data)?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = check_shape(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(dims)?;
        Self::new(dims.to_vec(), vec![value; len])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![1], vec![value])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access for in-place parameter updates. Callers are responsible
    /// for keeping the entries finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single entry of a length-1 tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dims[1] + j]
    }

    pub fn get3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&self, i: usize) -> Result<Tensor> {
        self.expect_order("row", 2)?;
        let cols = self.dims[1];
        if i >= self.dims[0] {
            return Err(TensorError::DimMismatch {
                op: "row",
                left: self.dims.clone(),
                right: vec![i],
            });
        }
        Ok(Self {
            dims: vec![cols],
            data: self.data[i * cols..(i + 1) * cols].to_vec(),
        })
    }

    fn expect_order(&self, op: &'static str, expected: usize) -> Result<()> {
        if self.order() != expected {
            return Err(TensorError::WrongOrder {
                op,
                expected,
                got: self.order(),
            });
        }
        Ok(())
    }

    fn expect_same_dims(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(TensorError::DimMismatch {
                op,
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, op: &'static str, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_same_dims(op, other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::produced(op, self.dims.clone(), data)
    }

    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data = self.data.iter().map(|&a| f(a)).collect();
        Self::produced(op, self.dims.clone(), data)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.map("scale", |a| a * c)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", f64::tanh)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// In-place `self += other`, used when accumulating gradients.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_dims("add_assign", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        finite("add_assign", &self.data)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_order("dot", 1)?;
        self.expect_same_dims("dot", other)?;
        let d: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        if d.is_finite() {
            Ok(d)
        } else {
            Err(TensorError::NonFinite("dot"))
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `a ⊗ b` for two vectors.
pub fn outer2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_order("outer2", 1)?;
    b.expect_order("outer2", 1)?;
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &x in &a.data {
        data.extend(b.data.iter().map(|&y| x * y));
    }
    Tensor::produced("outer2", vec![a.len(), b.len()], data)
}

/// `a ⊗ b ⊗ c` for three vectors.
pub fn outer3(a: &Tensor, b: &Tensor, c: &Tensor) -> Result<Tensor> {
    a.expect_order("outer3", 1)?;
    b.expect_order("outer3", 1)?;
    c.expect_order("outer3", 1)?;
    let mut data = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in &a.data {
        for &y in &b.data {
            let xy = x * y;
            data.extend(c.data.iter().map(|&z| xy * z));
        }
    }
    Tensor::produced("outer3", vec![a.len(), b.len(), c.len()], data)
}

/// Matrix-vector product `T u`, the order-2 unbinding.
pub fn unbind2(t: &Tensor, u: &Tensor) -> Result<Tensor> {
    matvec(t, u).map_err(|e| match e {
        TensorError::DimMismatch { left, right, .. } => TensorError::DimMismatch {
            op: "unbind2",
            left,
            right,
        },
        other => other,
    })
}

pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    w.expect_order("matvec", 2)?;
    x.expect_order("matvec", 1)?;
    let (rows, cols) = (w.dims[0], w.dims[1]);
    if cols != x.len() {
        return Err(TensorError::DimMismatch {
            op: "matvec",
            left: w.dims.clone(),
            right: x.dims.clone(),
        });
    }
    let data = w
        .data
        .chunks_exact(cols)
        .map(|row| row.iter().zip(&x.data).map(|(a, b)| a * b).sum())
        .collect();
    Tensor::produced("matvec", vec![rows], data)
}

/// `Wᵀ y`.
pub fn matvec_t(w: &Tensor, y: &Tensor) -> Result<Tensor> {
    w.expect_order("matvec_t", 2)?;
    y.expect_order("matvec_t", 1)?;
    let (rows, cols) = (w.dims[0], w.dims[1]);
    if rows != y.len() {
        return Err(TensorError::DimMismatch {
            op: "matvec_t",
            left: w.dims.clone(),
            right: y.dims.clone(),
        });
    }
    let mut out = vec![0.0; cols];
    for (row, &g) in w.data.chunks_exact(cols).zip(&y.data) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
    Tensor::produced("matvec_t", vec![cols], out)
}

/// Retrieves the target-entity fiber of an order-3 state:
/// `out[k] = Σ_{i,j} F[i][j][k] · e[i] · r[j]`.
///
/// The entity vector contracts the first mode and the relation vector the
/// second, so `unbind3(e ⊗ r ⊗ t, e, r) = (e·e)(r·r) t`.
pub fn unbind3(f: &Tensor, e: &Tensor, r: &Tensor) -> Result<Tensor> {
    f.expect_order("unbind3", 3)?;
    e.expect_order("unbind3", 1)?;
    r.expect_order("unbind3", 1)?;
    let (n_e, n_r, n_t) = (f.dims[0], f.dims[1], f.dims[2]);
    if e.len() != n_e || r.len() != n_r {
        return Err(TensorError::DimMismatch {
            op: "unbind3",
            left: f.dims.clone(),
            right: vec![e.len(), r.len()],
        });
    }
    let mut out = vec![0.0; n_t];
    for (i, &ei) in e.data.iter().enumerate() {
        if ei == 0.0 {
            continue;
        }
        for (j, &rj) in r.data.iter().enumerate() {
            let w = ei * rj;
            let base = (i * n_r + j) * n_t;
            for (o, &v) in out.iter_mut().zip(&f.data[base..base + n_t]) {
                *o += v * w;
            }
        }
    }
    Tensor::produced("unbind3", vec![n_t], out)
}

/// Contracts an order-3 tensor against vectors on the target and relation
/// modes: `out[i] = Σ_{j,k} F[i][j][k] · r[j] · t[k]`. Gradient helper for
/// [`unbind3`] with respect to its entity argument.
pub fn contract_source(f: &Tensor, r: &Tensor, t: &Tensor) -> Result<Tensor> {
    f.expect_order("contract_source", 3)?;
    let (n_e, n_r, n_t) = (f.dims[0], f.dims[1], f.dims[2]);
    if r.len() != n_r || t.len() != n_t {
        return Err(TensorError::DimMismatch {
            op: "contract_source",
            left: f.dims.clone(),
            right: vec![r.len(), t.len()],
        });
    }
    let mut out = vec![0.0; n_e];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &rj) in r.data.iter().enumerate() {
            let base = (i * n_r + j) * n_t;
            let inner: f64 = f.data[base..base + n_t].iter().zip(&t.data).map(|(a, b)| a * b).sum();
            acc += rj * inner;
        }
        *o = acc;
    }
    Tensor::produced("contract_source", vec![n_e], out)
}

/// `out[j] = Σ_{i,k} F[i][j][k] · e[i] · t[k]`. Gradient helper for
/// [`unbind3`] with respect to its relation argument.
pub fn contract_relation(f: &Tensor, e: &Tensor, t: &Tensor) -> Result<Tensor> {
    f.expect_order("contract_relation", 3)?;
    let (n_e, n_r, n_t) = (f.dims[0], f.dims[1], f.dims[2]);
    if e.len() != n_e || t.len() != n_t {
        return Err(TensorError::DimMismatch {
            op: "contract_relation",
            left: f.dims.clone(),
            right: vec![e.len(), t.len()],
        });
    }
    let mut out = vec![0.0; n_r];
    for (i, &ei) in e.data.iter().enumerate() {
        if ei == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            let base = (i * n_r + j) * n_t;
            let inner: f64 = f.data[base..base + n_t].iter().zip(&t.data).map(|(a, b)| a * b).sum();
            *o += ei * inner;
        }
    }
    Tensor::produced("contract_relation", vec![n_r], out)
}

/// Generalised tensor inner product: forms `A ⊗ B` and sums the pairwise
/// products along modes `j` and `k` (1-based, indexing the combined order).
///
/// The result keeps the remaining modes in order; a fully contracted result
/// is returned as a length-1 tensor. This is the direct, unoptimised
/// definition and serves as a reference for the specialised routines.
pub fn tensor_inner(a: &Tensor, b: &Tensor, j: usize, k: usize) -> Result<Tensor> {
    let combined: Vec<usize> = a.dims.iter().chain(&b.dims).copied().collect();
    let order = combined.len();
    if j == k || j == 0 || k == 0 || j > order || k > order {
        return Err(TensorError::InvalidMode { j, k, order });
    }
    let (j, k) = (j.min(k) - 1, j.max(k) - 1);
    if combined[j] != combined[k] {
        return Err(TensorError::DimMismatch {
            op: "tensor_inner",
            left: vec![combined[j]],
            right: vec![combined[k]],
        });
    }
    let out_dims: Vec<usize> = combined
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != j && m != k)
        .map(|(_, &d)| d)
        .collect();
    if out_dims.len() > 3 {
        return Err(TensorError::BadShape(out_dims));
    }
    let out_len: usize = out_dims.iter().product();

    // strides of the combined index space
    let mut strides = vec![1usize; order];
    for m in (0..order.saturating_sub(1)).rev() {
        strides[m] = strides[m + 1] * combined[m + 1];
    }
    let b_len = b.len();

    let mut out = vec![0.0; out_len.max(1)];
    let mut idx = vec![0usize; order];
    for (flat_out, o) in out.iter_mut().enumerate() {
        // scatter the output multi-index over the free modes
        let mut rem = flat_out;
        for m in (0..order).rev() {
            if m == j || m == k {
                continue;
            }
            idx[m] = rem % combined[m];
            rem /= combined[m];
        }
        let mut acc = 0.0;
        for s in 0..combined[j] {
            idx[j] = s;
            idx[k] = s;
            let flat: usize = idx.iter().zip(&strides).map(|(i, st)| i * st).sum();
            let (ai, bi) = (flat / b_len, flat % b_len);
            acc += a.data[ai] * b.data[bi];
        }
        *o = acc;
    }
    let dims = if out_dims.is_empty() { vec![1] } else { out_dims };
    Tensor::produced("tensor_inner", dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn outer2_basis_and_arithmetic() {
        let t = outer2(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 0.0]);
        let t = outer2(&v(&[2.0, 3.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(t.data(), &[2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn outer3_basis_and_annihilation() {
        let e = v(&[1.0, 0.0]);
        let t = outer3(&e, &e, &e).unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let t = outer3(&v(&[0.3, -2.0]), &v(&[1.5, 4.0, 2.0]), &v(&[0.0, 0.0])).unwrap();
        assert!(t.is_zero());
    }

    #[test]
    fn unbind2_worked_example() {
        // Two fillers bound to orthonormal roles; unbinding with a role
        // returns its filler.
        let f_kitty = v(&[0.2, -1.0, 3.0]);
        let f_mary = v(&[1.0, 0.5, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r_cat = v(&[s, s]);
        let r_person = v(&[s, -s]);
        let t = outer2(&f_kitty, &r_cat)
            .unwrap()
            .add(&outer2(&f_mary, &r_person).unwrap())
            .unwrap();
        let got = unbind2(&t, &r_cat).unwrap();
        for (a, b) in got.data().iter().zip(f_kitty.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(unbind2(&eye, &v(&[4.0, -2.0])).unwrap(), v(&[4.0, -2.0]));
    }

    #[test]
    fn unbind3_recovers_target_and_zero_state() {
        let e1 = v(&[0.6, 0.8]);
        let r1 = v(&[0.0, 1.0, 0.0]);
        let e2 = v(&[-1.5, 2.0]);
        let f = outer3(&e1, &r1, &e2).unwrap();
        let got = unbind3(&f, &e1, &r1).unwrap();
        for (a, b) in got.data().iter().zip(e2.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = Tensor::zeros(&[2, 3, 2]).unwrap();
        assert!(unbind3(&zero, &e1, &r1).unwrap().is_zero());
    }

    #[test]
    fn tensor_inner_dot_product() {
        let f = v(&[1.0, 2.0, 3.0]);
        let r = v(&[4.0, -1.0, 0.5]);
        let got = tensor_inner(&f, &r, 1, 2).unwrap();
        assert_eq!(got.dims(), &[1]);
        assert_eq!(got.item().unwrap(), f.dot(&r).unwrap());
    }

    #[test]
    fn tensor_inner_rejects_bad_modes() {
        let f = v(&[1.0, 2.0]);
        assert!(matches!(tensor_inner(&f, &f, 1, 1), Err(TensorError::InvalidMode { .. })));
        assert!(matches!(tensor_inner(&f, &f, 0, 2), Err(TensorError::InvalidMode { .. })));
        assert!(matches!(tensor_inner(&f, &f, 1, 3), Err(TensorError::InvalidMode { .. })));
        let g = v(&[1.0, 2.0, 3.0]);
        assert!(matches!(tensor_inner(&f, &g, 1, 2), Err(TensorError::DimMismatch { .. })));
    }

    #[test]
    fn elementwise_ops() {
        let a = v(&[1.0, 2.0]);
        assert_eq!(a.hadamard(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 8.0]));
        assert!(a.sub(&a).unwrap().is_zero());
        let z = Tensor::zeros(&[2]).unwrap();
        assert_eq!(a.add(&z).unwrap(), a);
        assert_eq!(a.scale(-2.0).unwrap(), v(&[-2.0, -4.0]));
        assert_eq!(a.dot(&a).unwrap(), 5.0);
        assert!(matches!(a.add(&v(&[1.0])), Err(TensorError::DimMismatch { .. })));
    }

    #[test]
    fn construction_validates() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![0.0; 3]), Err(TensorError::LengthMismatch { .. })));
        assert!(matches!(Tensor::new(vec![1, 1, 1, 1], vec![0.0]), Err(TensorError::BadShape(_))));
        assert!(matches!(Tensor::new(vec![0], vec![]), Err(TensorError::BadShape(_))));
        assert!(matches!(Tensor::vector(vec![f64::NAN]), Err(TensorError::NonFinite(_))));
        let big = v(&[1e300]);
        assert!(matches!(big.hadamard(&big), Err(TensorError::NonFinite(_))));
    }

    #[test]
    fn unbind_dimension_errors() {
        let f = Tensor::zeros(&[2, 3, 4]).unwrap();
        assert!(unbind3(&f, &v(&[1.0, 0.0, 0.0]), &v(&[1.0, 0.0, 0.0])).is_err());
        let m = Tensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(unbind2(&m, &v(&[1.0, 0.0])), Err(TensorError::DimMismatch { op: "unbind2", .. })));
    }
}
