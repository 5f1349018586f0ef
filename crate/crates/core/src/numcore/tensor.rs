//! Dense row-major tensors, generic over 32/64-bit float precision.

use std::fmt;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Element type for all tensor math. `f32` is the default everywhere except
/// gradient checking, which runs in `f64` so central differences stay sharp.
pub trait Real:
    Float + num_traits::NumAssignOps + Default + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Shorthand for lifting an `f64` literal into the active precision.
#[inline]
pub fn real<T: Real>(v: f64) -> T {
    T::from_f64(v)
}

/// Probabilities are clamped to at least this value before any `log`, so
/// support mismatch in a KL term stays finite.
pub const LOG_CLAMP: f64 = 1e-12;

/// Dense real-valued array with shape, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::structural(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// N(0, std) initialization from the caller's RNG stream. Values are drawn
    /// in f64 and cast, so f32 and f64 runs share one stream.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("std > 0");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| real(dist.sample(rng))).collect();
        Tensor { shape: shape.to_vec(), data }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> T {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows of a 2-D tensor (first axis).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor (product of trailing axes).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Copy of the rows `range` as a new 2-D tensor.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Tensor<T> {
        let c = self.cols();
        let data = self.data[range.start * c..range.end * c].to_vec();
        Tensor { shape: vec![range.len(), c], data }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, ctx: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::numeric(format!("non-finite values in {ctx}")))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        self.map(|v| v * c)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64())
            .fold(0.0, f64::max)
    }

    pub fn check_same_shape(&self, other: &Tensor<T>, ctx: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::structural(format!(
                "{ctx}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Cast every element through f64 into another precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(Real::to_f64(v))).collect(),
        }
    }
}

/// Numerically stable softmax over the last (vocab) axis.
///
/// Accepts 1-D `[V]` or 2-D `[N, V]` input. Rejects non-finite input.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.ensure_finite("softmax input")?;
    let cols = if logits.shape().len() == 1 { logits.len() } else { logits.cols() };
    if cols == 0 {
        return Err(Error::structural("softmax on empty axis"));
    }
    let mut out = logits.clone();
    for row in out.data.chunks_mut(cols) {
        softmax_in_place(row);
    }
    Ok(out)
}

/// In-place softmax kernel for one row. Shared by the checked entry point,
/// the tape op, and the attention kernel so all paths agree bitwise.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Cross-entropy of a single target id under `logits`: `-log softmax(logits)[target]`.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, target: usize) -> Result<T> {
    logits.ensure_finite("cross_entropy logits")?;
    if target >= logits.len() {
        return Err(Error::Index(format!(
            "target {} out of vocab range {}",
            target,
            logits.len()
        )));
    }
    // log-sum-exp form; no intermediate probability round-trip.
    let max = logits.data().iter().cloned().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for &v in logits.data() {
        sum += (v - max).exp();
    }
    Ok(max + sum.ln() - logits.data()[target])
}

/// `log(max(p, LOG_CLAMP))` — every log/KL path in the crate goes through this.
#[inline]
pub fn clamped_ln<T: Real>(p: T) -> T {
    p.max(real(LOG_CLAMP)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetry() {
        let t = Tensor::from_vec(vec![1.0f64, 1.0]);
        let p = softmax(&t).unwrap();
        assert!((p.data()[0] - 0.5).abs() < 1e-12);
        assert!((p.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_analytic_quarter() {
        // [0, ln 3] -> [1/4, 3/4]
        let t = Tensor::from_vec(vec![0.0f64, 3.0f64.ln()]);
        let p = softmax(&t).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_random_sums_to_one() {
        // Direct-summation oracle on a random 5-vector.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = Tensor::<f64>::randn(&[5], 1.0, &mut rng);
        let p = softmax(&t).unwrap();
        let total: f64 = p.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(p.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let t = Tensor::from_vec(vec![f64::NAN, 0.0]);
        assert!(softmax(&t).is_err());
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let t = Tensor::from_vec(vec![0.0f64; 4]);
        for target in 0..4 {
            let ce = cross_entropy(&t, target).unwrap();
            assert!((ce - 4.0f64.ln()).abs() < 1e-12, "ce={ce}");
        }
    }

    #[test]
    fn cross_entropy_dominant_class_approaches_zero() {
        let t = Tensor::from_vec(vec![60.0f64, 0.0]);
        let ce = cross_entropy(&t, 0).unwrap();
        assert!(ce < 1e-12);
    }

    #[test]
    fn cross_entropy_two_logit_example() {
        // logits [2, 0], target 0 -> ln(1 + e^-2)
        let t = Tensor::from_vec(vec![2.0f64, 0.0]);
        let ce = cross_entropy(&t, 0).unwrap();
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((ce - expect).abs() < 1e-12);
        assert!((ce - 0.126928).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        let t = Tensor::from_vec(vec![0.0f64; 4]);
        assert!(matches!(cross_entropy(&t, 4), Err(Error::Index(_))));
    }

    #[test]
    fn tensor_shape_mismatch_is_error() {
        assert!(Tensor::new(vec![2, 3], vec![0.0f32; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0f32; 6]).is_ok());
    }

    proptest! {
        // softmax(x + c) == softmax(x) within 1e-6
        #[test]
        fn softmax_shift_invariance(
            xs in proptest::collection::vec(-20.0f64..20.0, 1..12),
            c in -50.0f64..50.0,
        ) {
            let t = Tensor::from_vec(xs.clone());
            let shifted = Tensor::from_vec(xs.iter().map(|v| v + c).collect());
            let a = softmax(&t).unwrap();
            let b = softmax(&shifted).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-6);
        }

        #[test]
        fn softmax_rows_sum_to_one(
            xs in proptest::collection::vec(-30.0f64..30.0, 2..40),
        ) {
            let t = Tensor::from_vec(xs);
            let p = softmax(&t).unwrap();
            let total: f64 = p.data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }
    }
}
