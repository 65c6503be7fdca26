//! Dense row-major f32 tensors.
//!
//! Deliberately small: explicit shapes, no views, no broadcasting beyond
//! scalar maps. Every arithmetic op fixes its iteration order so repeated
//! runs are bit-identical.

use crate::error::{Error, Result};

/// A dense tensor: a shape plus a flat row-major `f32` payload.
///
/// `data.len()` always equals the product of the shape extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Buffer {
    /// Builds a buffer from a shape and matching flat data.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Contract(format!("zero extent in shape {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(Error::Contract(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// All-zero buffer of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = numel(&shape);
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data under a new shape; element count must be preserved.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Contract(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    /// Elementwise quotient; any zero in `other` is rejected.
    pub fn div(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "div")?;
        if other.data.iter().any(|&b| b == 0.0) {
            return Err(Error::Domain("div: zero divisor element".into()));
        }
        self.zip_with(other, "div", |a, b| a / b)
    }

    fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn scale(&self, c: f32) -> Self {
        self.map(|a| c * a)
    }

    pub fn add_scalar(&self, c: f32) -> Self {
        self.map(|a| a + c)
    }

    /// Elementwise square root; negative elements are rejected.
    pub fn sqrt(&self) -> Result<Self> {
        if self.data.iter().any(|&a| a < 0.0) {
            return Err(Error::Domain("sqrt: negative element".into()));
        }
        Ok(self.map(f32::sqrt))
    }

    pub fn tanh(&self) -> Self {
        self.map(f32::tanh)
    }

    /// Sum of all elements, accumulated in ascending index order.
    pub fn sum(&self) -> Result<f32> {
        if self.data.is_empty() {
            return Err(Error::Contract("sum of empty buffer".into()));
        }
        Ok(self.data.iter().sum())
    }

    /// Largest element.
    pub fn max(&self) -> Result<f32> {
        self.data
            .iter()
            .copied()
            .fold(None, |acc: Option<f32>, x| {
                Some(match acc {
                    Some(m) if m >= x => m,
                    _ => x,
                })
            })
            .ok_or_else(|| Error::Contract("max of empty buffer".into()))
    }

    /// Index of the largest element along the last axis, one result per row.
    /// Ties resolve to the lowest index.
    pub fn argmax_last_axis(&self) -> Result<Vec<usize>> {
        let width = *self
            .shape
            .last()
            .ok_or_else(|| Error::Contract("argmax of empty buffer".into()))?;
        let mut out = Vec::with_capacity(self.data.len() / width);
        for row in self.data.chunks_exact(width) {
            let mut best = 0usize;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Matrix product of two 2-D buffers.
    ///
    /// Accumulation is f32 with k ascending for every output element, so the
    /// result is bit-reproducible across runs.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (self.shape.as_slice(), other.shape.as_slice()) else {
            return Err(Error::Contract(format!(
                "matmul wants 2-D inputs, got {:?} and {:?}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::Contract(format!(
                "matmul inner extents {k} vs {k2}"
            )));
        }
        let mut out = vec![0.0f32; m * n];
        matmul_slices(&self.data, &other.data, m, k, n, &mut out);
        Self::new(vec![m, n], out)
    }
}

/// out[i][j] = sum_k a[i][k] * b[k][j], f32 accumulation, k ascending.
///
/// The i-k-j loop updates each output row incrementally but still adds the
/// k terms to out[i][j] in ascending k order, identical to a per-cell loop.
pub(crate) fn matmul_slices(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// out[i][j] = sum_k a[k][i] * b[k][j] (a used transposed), k ascending.
pub(crate) fn matmul_tn_slices(
    a: &[f32],
    b: &[f32],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f32],
) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        let b_row = &b[kk * n..(kk + 1) * n];
        for i in 0..m {
            let aki = a_row[i];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aki * bv;
            }
        }
    }
}

/// out[i][j] = sum_k a[i][k] * b[j][k] (b used transposed), k ascending.
pub(crate) fn matmul_nt_slices(
    a: &[f32],
    b: &[f32],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(shape: &[usize], data: &[f32]) -> Buffer {
        Buffer::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(matches!(
            Buffer::new(vec![2, 2], vec![1.0; 3]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn new_rejects_zero_extent() {
        assert!(Buffer::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn add_componentwise() {
        let r = buf(&[2], &[1.0, 2.0]).add(&buf(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(r.data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let x = buf(&[4], &[0.5, -1.25, 3.0, 7.5]);
        let ones = buf(&[4], &[1.0; 4]);
        assert_eq!(x.mul(&ones).unwrap().data(), x.data());
    }

    #[test]
    fn div_scalar_case() {
        let r = buf(&[1], &[1.5]).div(&buf(&[1], &[0.5])).unwrap();
        assert_eq!(r.data(), &[3.0]);
    }

    #[test]
    fn div_by_zero_rejected() {
        let r = buf(&[2], &[1.0, 1.0]).div(&buf(&[2], &[1.0, 0.0]));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = buf(&[2], &[1.0, 2.0]).add(&buf(&[3], &[1.0, 2.0, 3.0]));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn map_examples() {
        assert_eq!(buf(&[1], &[0.0]).tanh().data(), &[0.0]);
        let s = buf(&[1], &[0.001]).sqrt().unwrap();
        assert!((s.data()[0] - 0.0316228).abs() < 1e-6);
        assert_eq!(buf(&[2], &[2.0, 4.0]).scale(0.5).data(), &[1.0, 2.0]);
        assert_eq!(buf(&[2], &[1.0, 2.0]).add_scalar(-1.0).data(), &[0.0, 1.0]);
    }

    #[test]
    fn sqrt_rejects_negative() {
        assert!(matches!(
            buf(&[1], &[-0.5]).sqrt(),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reductions() {
        assert_eq!(buf(&[3], &[1.0, 2.0, 3.0]).sum().unwrap(), 6.0);
        assert_eq!(buf(&[2], &[-3.0, -7.0]).max().unwrap(), -3.0);
        let am = buf(&[2, 2], &[0.1, 0.9, 0.5, 0.5]).argmax_last_axis().unwrap();
        assert_eq!(am, vec![1, 0]);
    }

    #[test]
    fn matmul_identity() {
        let a = buf(&[2, 2], &[3.0, -1.0, 2.5, 4.0]);
        let i2 = buf(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(i2.matmul(&a).unwrap().data(), a.data());
    }

    #[test]
    fn matmul_dot_product() {
        let a = buf(&[1, 2], &[1.0, 2.0]);
        let b = buf(&[2, 1], &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = buf(&[1, 2], &[1.0, 2.0]);
        let b = buf(&[3, 1], &[1.0, 2.0, 3.0]);
        assert!(matches!(a.matmul(&b), Err(Error::Contract(_))));
    }

    #[test]
    fn matmul_rectangular() {
        // 2x3 times 3x2.
        let a = buf(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = buf(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_helpers_agree_with_plain() {
        let a = buf(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]); // used as 2x3 via T
        let b = buf(&[3, 4], &(0..12).map(|i| i as f32 * 0.25 - 1.0).collect::<Vec<_>>());
        let mut tn = vec![0.0; 2 * 4];
        matmul_tn_slices(a.data(), b.data(), 2, 3, 4, &mut tn);
        // Reference: materialize a^T then multiply.
        let at = buf(&[2, 3], &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(tn, at.matmul(&b).unwrap().into_data());

        let c = buf(&[4, 3], &(0..12).map(|i| (i as f32).sin()).collect::<Vec<_>>()); // used as 3x4 via T
        let mut nt = vec![0.0; 2 * 4];
        matmul_nt_slices(at.data(), c.data(), 2, 3, 4, &mut nt);
        let mut ct = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                ct[i * 4 + j] = c.data()[j * 3 + i];
            }
        }
        let ctb = Buffer::new(vec![3, 4], ct).unwrap();
        assert_eq!(nt, at.matmul(&ctb).unwrap().into_data());
    }

    #[test]
    fn reshape_roundtrip_is_bit_exact() {
        let x = buf(&[2, 3], &[1.0, -2.5, 3.25, 4.0, 5.5, -6.0]);
        let r = x.reshape(vec![3, 2]).unwrap().reshape(vec![6]).unwrap();
        assert_eq!(r.data(), x.data());
    }
}
