//! Bounds-checked front end to `matrixmultiply::sgemm`.

/// Row/column strides of a matrix operand.
#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    /// Dense row-major with `cols` columns.
    pub fn row_major(cols: usize) -> Self {
        Layout { rs: cols, cs: 1 }
    }

    /// Transposed view of a dense row-major matrix that has `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols }
    }

    fn extent(self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.rs + (cols - 1) * self.cs + 1
        }
    }
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    la: Layout,
    b: &[f32],
    lb: Layout,
    beta: f32,
    c: &mut [f32],
    lc: Layout,
) {
    assert!(a.len() >= la.extent(m, k), "gemm: lhs too short");
    assert!(b.len() >= lb.extent(k, n), "gemm: rhs too short");
    assert!(c.len() >= lc.extent(m, n), "gemm: output too short");
    assert!(lc.rs > 0 && lc.cs > 0);
    // SAFETY: the asserts above keep every index the kernel touches inside the
    // three slices; `c` is uniquely borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            lc.rs as isize,
            lc.cs as isize,
        );
    }
}
