//! Conv2D / BatchNorm / GRU / Dense network with reverse-mode gradients.
//!
//! Activations are row-major. Image tensors are `(batch, channels, time, freq)`,
//! sequences `(batch, time, features)`. Everything is generic over [`Real`] so
//! the same code trains in `f32` and is gradient-checked in `f64`.

mod gradcheck;
mod layers;
mod model;
mod optim;
mod store;
mod train;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign};
use thiserror::Error;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{Act, Layer};
pub use model::{build_model, LayerSpec, Model, ModelKind, ModelSpec};
pub use optim::{Adam, AdamConfig};
pub use store::{Estimator, NamedTensor, WeightStore, WEIGHT_STORE_VERSION};
pub use train::{
    evaluate_mse, mse_loss, predict_raw, stack_features, train, train_step, validation_split,
    EarlyStopping, EpochRecord, Samples, StopReason, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(alloc::string::String),
    #[error("loss became non-finite at update {0}")]
    NonFiniteLoss(usize),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("fingerprint mismatch: {0}")]
    FingerprintMismatch(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("weight store does not match the model: {0}")]
    BadWeights(alloc::string::String),
}

/// Whether a forward pass trains, infers, or trains without side effects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout on, BatchNorm uses and updates batch statistics.
    Train,
    /// Dropout off, BatchNorm uses running statistics, nothing cached.
    Eval,
    /// Dropout off, BatchNorm uses batch statistics without updating running ones.
    BatchStats,
}

/// Floating-point element type with a matching GEMM kernel.
pub trait Real:
    Float + NumAssign + FromPrimitive + Default + Debug + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` on strided matrices.
    ///
    /// # Safety
    /// Every strided access of the `m×k`, `k×n` and `m×n` operands must be in bounds.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided view for [`gemm`]: `rows × cols` with the given strides.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    data: &'a [T],
    rs: usize,
    cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major, contiguous rows of `cols` elements.
    pub(crate) fn rows(data: &'a [T], cols: usize) -> Self {
        Self {
            data,
            rs: cols,
            cs: 1,
        }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub(crate) fn trans(data: &'a [T], cols: usize) -> Self {
        Self {
            data,
            rs: 1,
            cs: cols,
        }
    }

    pub(crate) fn strided(data: &'a [T], rs: usize, cs: usize) -> Self {
        Self { data, rs, cs }
    }
}

fn span(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// `C[m×n] ← α·A[m×k]·B[k×n] + β·C`, with `C` row-major with row stride `ldc`.
/// Panics when an operand is too short for its view.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: &mut [T],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.data.len() >= span(m, k, a.rs, a.cs), "gemm: A too short");
    assert!(b.data.len() >= span(k, n, b.rs, b.cs), "gemm: B too short");
    assert!(c.len() >= span(m, n, ldc, 1), "gemm: C too short");
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the asserts above bound every strided access.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        )
    }
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::ShapeMismatch(alloc::format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data under a new shape of equal size.
    pub fn reshaped(self, shape: Vec<usize>) -> Result<Self, NnError> {
        Tensor::new(shape, self.data)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
