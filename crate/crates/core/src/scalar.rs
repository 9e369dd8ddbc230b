use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type for tensors. The library is generic over this
/// so gradients can be checked in f64 while training runs in f32.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from f64 (f32 rounds, f64 is exact).
    fn of_f64(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// C = alpha * A * B + beta * C over strided row-major storage.
    /// A is m x k with strides (rsa, csa), B is k x n with (rsb, csb),
    /// C is m x n with (rsc, csc). Strides may describe transposed views.
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
}

impl Scalar for f32 {
    fn of_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

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
        debug_assert!(gemm_bounds_ok(m, k, a.len(), rsa, csa));
        debug_assert!(gemm_bounds_ok(k, n, b.len(), rsb, csb));
        debug_assert!(gemm_bounds_ok(m, n, c.len(), rsc, csc));
        unsafe {
            matrixmultiply::sgemm(
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

impl Scalar for f64 {
    fn of_f64(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }

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
        debug_assert!(gemm_bounds_ok(m, k, a.len(), rsa, csa));
        debug_assert!(gemm_bounds_ok(k, n, b.len(), rsb, csb));
        debug_assert!(gemm_bounds_ok(m, n, c.len(), rsc, csc));
        unsafe {
            matrixmultiply::dgemm(
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

/// The highest flat index touched by an (rows x cols) strided view must lie
/// inside the backing slice.
fn gemm_bounds_ok(rows: usize, cols: usize, len: usize, rs: isize, cs: isize) -> bool {
    if rows == 0 || cols == 0 {
        return true;
    }
    let max = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    max >= 0 && (max as usize) < len
}

/// Dot product with eight independent accumulators combined in a fixed order.
/// Deterministic (the order never depends on data or call context) and fast
/// enough for the grouped FC layers without pulling in a GEMM call.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let base = i * 8;
        for j in 0..8 {
            acc[j] = acc[j] + a[base + j] * b[base + j];
        }
    }
    let mut tail = S::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// y += alpha * x, elementwise.
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * *xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64) * 0.25 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn dot_is_deterministic() {
        let a: Vec<f32> = (0..1001).map(|i| ((i * 2654435761u64 as usize) % 97) as f32 - 48.0).collect();
        let b: Vec<f32> = (0..1001).map(|i| ((i * 40503) % 89) as f32 * 0.01).collect();
        let first = dot(&a, &b);
        for _ in 0..5 {
            assert_eq!(first.to_bits(), dot(&a, &b).to_bits());
        }
    }

    #[test]
    fn axpy_accumulates() {
        let x = [1.0f64, 2.0, 3.0];
        let mut y = [10.0f64, 20.0, 30.0];
        axpy(0.5, &x, &mut y);
        assert_eq!(y, [10.5, 21.0, 31.5]);
    }

    #[test]
    fn gemm_small_matches_naive() {
        // 2x3 * 3x2 in row-major storage.
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, 1.0, &a, 3, 1, &b, 2, 1, 0.0, &mut c, 2, 1);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_transposed_view() {
        // Same product, with A supplied as its transpose via strides.
        let a_t = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2 row-major = A^T
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, 1.0, &a_t, 1, 2, &b, 2, 1, 0.0, &mut c, 2, 1);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }
}
