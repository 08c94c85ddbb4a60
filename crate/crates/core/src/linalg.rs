//! Dense helpers for the d x d local systems, d <= 3.

pub type LVec = [f64; 3];
pub type LMat = [[f64; 3]; 3];

pub fn mat_vec(m: &LMat, v: &LVec, dim: usize) -> LVec {
    let mut out = [0.0; 3];
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

pub fn mat_mul(a: &LMat, b: &LMat, dim: usize) -> LMat {
    let mut out = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn add(a: &LVec, b: &LVec) -> LVec {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: &LVec, b: &LVec) -> LVec {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: &LVec, s: f64) -> LVec {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: &LVec, b: &LVec) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &LVec) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean norm of the tangential part (components 1..).
pub fn tangential_norm(a: &LVec) -> f64 {
    (a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn identity(dim: usize) -> LMat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..dim {
        m[i][i] = 1.0;
    }
    m
}

/// Solve `m x = rhs` by Gaussian elimination with partial pivoting.
///
/// Returns the solution and a pivot-ratio condition proxy
/// `max |pivot| / min |pivot|`; `None` when a pivot vanishes.
pub fn solve(m: &LMat, rhs: &LVec, dim: usize) -> Option<(LVec, f64)> {
    let mut a = *m;
    let mut b = *rhs;
    let mut max_piv = 0.0f64;
    let mut min_piv = f64::INFINITY;
    for col in 0..dim {
        let mut pivot_row = col;
        for row in col + 1..dim {
            if a[row][col].abs() > a[pivot_row][col].abs() {
                pivot_row = row;
            }
        }
        if pivot_row != col {
            a.swap(col, pivot_row);
            b.swap(col, pivot_row);
        }
        let piv = a[col][col];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        max_piv = max_piv.max(piv.abs());
        min_piv = min_piv.min(piv.abs());
        for row in col + 1..dim {
            let factor = a[row][col] / piv;
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for k in col + 1..dim {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some((x, max_piv / min_piv))
}
