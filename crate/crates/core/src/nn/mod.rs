//! A small tensor stack with hand-written reverse passes: exactly the layers
//! the denoising U-Net needs, plus Adam.
//!
//! Everything is generic over [`Real`] so training can run in `f32` while
//! gradient checks run in `f64`.

pub mod adam;
pub mod layers;
pub mod tensor;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{
    dropout, dropout_backward, lrelu, lrelu_backward, maxpool2d, maxpool2d_backward, pool_mask,
    sigmoid, sigmoid_backward, upsample_concat, upsample_concat_backward, Conv2d, ConvCache,
    PConv2d, PConvCache, PoolCache,
};
pub use tensor::{Parameter, Shape, Tensor};

/// Scalar type of the tensor stack.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    /// `c = op(a) * op(b) + beta * c` for row-major operands, where `op`
    /// optionally transposes. `a` is logically `m x k`, `b` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        beta: Self,
        c: &mut [Self],
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // logical rows x cols; stored transposed when `trans`
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = strides(m, k, a_trans);
                let (rsb, csb) = strides(k, n, b_trans);
                // SAFETY: the bounds above cover every element addressed by
                // the given dimensions and strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
