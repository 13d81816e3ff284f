//! Row-major dense arrays over `f32`/`f64` with shape-checked operations.

use crate::error::{Error, Result};

/// Element type for all numeric code: `f32` for the model itself, `f64`
/// where tests want tighter finite-difference tolerances.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + std::fmt::Debug + std::fmt::Display + Default + 'static
{
    /// Central-difference step that keeps truncation and rounding error
    /// balanced for this precision.
    fn grad_check_eps() -> Self;
}

impl Scalar for f32 {
    fn grad_check_eps() -> Self {
        1e-3
    }
}

impl Scalar for f64 {
    fn grad_check_eps() -> Self {
        1e-6
    }
}

/// Converts an `f64` constant into the active scalar type.
pub(crate) fn cast<F: Scalar>(x: f64) -> F {
    F::from(x).expect("constant representable in scalar type")
}

/// Dense array with explicit shape; `data` is row-major and its length
/// always equals the product of `shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

/// The precision the model trains and serializes in.
pub type Array32 = Array<f32>;

impl<F: Scalar> Array<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("dimensions must be positive, got {shape:?}")));
        }
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} wants {want} values, got {}",
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    /// Single value wrapped as a 1x1 array.
    pub fn scalar(x: F) -> Self {
        Array {
            shape: vec![1, 1],
            data: vec![x],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of a 2-d array.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            other => Err(Error::Shape(format!("expected 2-d array, got {other:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[F] {
        let (_, n) = (self.shape[0], self.shape[1]);
        &self.data[i * n..(i + 1) * n]
    }

    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.shape[1] + j]
    }

    /// The sole value of a 1x1 array.
    pub fn item(&self) -> Result<F> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape(format!("expected scalar, got shape {:?}", self.shape)))
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared L2 norm accumulated in f64 so clipping decisions do not
    /// depend on summation order precision.
    pub fn sq_norm_f64(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum()
    }

    /// Same values in another scalar type, via f64.
    pub fn convert<G: Scalar>(&self) -> Array<G> {
        Array {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| cast::<G>(v.to_f64().expect("array entry convertible")))
                .collect(),
        }
    }
}

/// Matrix product of a `(m,k)` and a `(k,n)` array.
pub fn matmul<F: Scalar>(a: &Array<F>, b: &Array<F>) -> Result<Array<F>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::Shape(format!("matmul ({m},{k}) x ({k2},{n})")));
    }
    let mut out = vec![F::zero(); m * n];
    // i-k-j order keeps the inner loop streaming over contiguous rows.
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            let b_row = &b.data[kk * n..(kk + 1) * n];
            for j in 0..n {
                out_row[j] += a_ik * b_row[j];
            }
        }
    }
    Array::from_vec(vec![m, n], out)
}

pub fn transpose<F: Scalar>(a: &Array<F>) -> Result<Array<F>> {
    let (m, n) = a.dims2()?;
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Array::from_vec(vec![n, m], out)
}

/// Numerically stable softmax along `axis` (0 = down columns, 1 = along
/// rows) of a 2-d array. The maximum is subtracted before exponentiation,
/// so arbitrarily large finite inputs stay in range.
pub fn softmax<F: Scalar>(x: &Array<F>, axis: usize) -> Result<Array<F>> {
    let (m, n) = x.dims2()?;
    if axis > 1 {
        return Err(Error::Shape(format!("softmax axis {axis} out of range for 2-d array")));
    }
    let mut out = x.clone();
    let (outer, inner, stride_outer, stride_inner) = if axis == 1 {
        (m, n, n, 1)
    } else {
        (n, m, 1, n)
    };
    for o in 0..outer {
        let idx = |i: usize| o * stride_outer + i * stride_inner;
        let mut max = F::neg_infinity();
        for i in 0..inner {
            max = max.max(out.data[idx(i)]);
        }
        let mut sum = F::zero();
        for i in 0..inner {
            let e = (out.data[idx(i)] - max).exp();
            out.data[idx(i)] = e;
            sum += e;
        }
        for i in 0..inner {
            out.data[idx(i)] /= sum;
        }
    }
    Ok(out)
}

/// Per-row layer normalization with learned gain and bias: each row is
/// shifted to zero mean and scaled by `1/sqrt(var + eps)` (biased variance),
/// then multiplied by `gain` and offset by `bias` per column.
pub fn layer_norm<F: Scalar>(x: &Array<F>, gain: &[F], bias: &[F], eps: F) -> Result<Array<F>> {
    let (m, n) = x.dims2()?;
    if gain.len() != n || bias.len() != n {
        return Err(Error::Shape(format!(
            "layer_norm over {n} columns with gain len {} and bias len {}",
            gain.len(),
            bias.len()
        )));
    }
    let mut out = x.clone();
    let nf = cast::<F>(n as f64);
    for i in 0..m {
        let row = &mut out.data[i * n..(i + 1) * n];
        let mut mean = F::zero();
        for v in row.iter() {
            mean += *v;
        }
        mean /= nf;
        let mut var = F::zero();
        for v in row.iter() {
            let d = *v - mean;
            var += d * d;
        }
        var /= nf;
        let inv = (var + eps).sqrt().recip();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gain[j] + bias[j];
        }
    }
    Ok(out)
}
