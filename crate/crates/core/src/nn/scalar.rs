use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type of the network engine.
///
/// `f32` is used for training and inference; `f64` for finite-difference
/// gradient checks.
pub trait Scalar: Float + Default + Debug + Sum + Send + Sync + 'static {
    /// `c = alpha * a . b + beta * c` for strided row/column-major operands.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from(v).expect("literal fits")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                // Bounds of the strided views, checked once so the unsafe call stays in range.
                let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    (rows.saturating_sub(1)) as isize * rs + (cols.saturating_sub(1)) as isize * cs
                };
                if k > 0 {
                    assert!((extent(m, k, rsa, csa) as usize) < a.len());
                    assert!((extent(k, n, rsb, csb) as usize) < b.len());
                }
                assert!((extent(m, n, rsc, csc) as usize) < c.len());
                // SAFETY: strides are non-negative and every addressed element was
                // bounds-checked above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
