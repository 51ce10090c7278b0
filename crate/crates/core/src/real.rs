//! Scalar abstraction shared by the network, physics, optimizers and oracle.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the simulator can run on: `f32` or `f64`.
///
/// On top of `num_traits::Float` this adds the error function (needed by the
/// exact GELU) and a dense matrix product routed to the blocked kernels of
/// `matrixmultiply`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name written into checkpoints (`"f32"` or `"f64"`).
    const NAME: &'static str;

    fn erf(self) -> Self;

    fn erfc(self) -> Self;

    /// `C = alpha * A * B + beta * C` with arbitrary row/column strides.
    ///
    /// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn span(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs() + 1
}

#[allow(clippy::too_many_arguments)]
fn check_gemm<S>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    a_strides: (isize, isize),
    b: &[S],
    b_strides: (isize, isize),
    c: &[S],
    c_strides: (isize, isize),
) {
    assert!(a_strides.0 >= 0 && a_strides.1 >= 0, "negative strides unsupported");
    assert!(b_strides.0 >= 0 && b_strides.1 >= 0, "negative strides unsupported");
    assert!(c_strides.0 >= 0 && c_strides.1 >= 0, "negative strides unsupported");
    assert!(span(m, k, a_strides) <= a.len(), "gemm: A out of bounds");
    assert!(span(k, n, b_strides) <= b.len(), "gemm: B out of bounds");
    assert!(span(m, n, c_strides) <= c.len(), "gemm: C out of bounds");
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $erf:path, $erfc:path, $kernel:path) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            #[inline]
            fn erfc(self) -> Self {
                $erfc(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_gemm(m, k, n, a, a_strides, b, b_strides, c, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched by the kernel lies within the
                // spans validated above; strides are non-negative.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", libm::erff, libm::erfcf, matrixmultiply::sgemm);
impl_real!(f64, "f64", libm::erf, libm::erfc, matrixmultiply::dgemm);

/// Pairwise (tree) summation; the association order depends only on the
/// slice length, never on how the values were produced.
pub fn pairwise_sum<S: Real>(values: &[S]) -> S {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = S::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
