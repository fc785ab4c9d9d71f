//! Scalar abstraction shared by every numeric module.
//!
//! All geometry and network code is written against [`Scalar`], which is
//! implemented for `f32` (training default) and `f64` (gradient checks and
//! golden-file regressions).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real number type the pipeline is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Human-readable precision name, used in diagnostics.
    const NAME: &'static str;

    /// `c = a · b` for row-major `a: m×k`, `b: k×n`, `c: m×n`. `c` is overwritten.
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    /// `c += aᵀ · b` for row-major `a: k×m`, `b: k×n`, `c: m×n`.
    fn gemm_tn_acc(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    /// `c += a · bᵀ` for row-major `a: m×k`, `b: n×k`, `c: m×n`.
    fn gemm_nt_acc(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn from_f32_exact(v: f32) -> Self {
        Self::from_f32(v).expect("f32 representable")
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self.to_f32().expect("scalar representable as f32")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:expr, $kernel:ident) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
                debug_assert_eq!(a.len(), m * k);
                debug_assert_eq!(b.len(), k * n);
                debug_assert_eq!(c.len(), m * n);
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    c.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                unsafe {
                    matrixmultiply::$kernel(
                        m, k, n, 1.0,
                        a.as_ptr(), k as isize, 1,
                        b.as_ptr(), n as isize, 1,
                        0.0,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }

            fn gemm_tn_acc(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
                debug_assert_eq!(a.len(), k * m);
                debug_assert_eq!(b.len(), k * n);
                debug_assert_eq!(c.len(), m * n);
                if m == 0 || n == 0 || k == 0 {
                    return;
                }
                // aᵀ is read through swapped strides.
                unsafe {
                    matrixmultiply::$kernel(
                        m, k, n, 1.0,
                        a.as_ptr(), 1, m as isize,
                        b.as_ptr(), n as isize, 1,
                        1.0,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }

            fn gemm_nt_acc(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
                debug_assert_eq!(a.len(), m * k);
                debug_assert_eq!(b.len(), n * k);
                debug_assert_eq!(c.len(), m * n);
                if m == 0 || n == 0 || k == 0 {
                    return;
                }
                unsafe {
                    matrixmultiply::$kernel(
                        m, k, n, 1.0,
                        a.as_ptr(), k as isize, 1,
                        b.as_ptr(), 1, k as isize,
                        1.0,
                        c.as_mut_ptr(), n as isize, 1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "single", sgemm);
impl_scalar!(f64, "double", dgemm);
