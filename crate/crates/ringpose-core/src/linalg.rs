//! Fixed-size dense routines for the fitting pipeline: a cyclic Jacobi
//! eigensolver for the symmetric 6x6 scatter matrix and a Cholesky solve
//! for the 5x5 normal equations. Everything stays on the stack.

/// Eigenvalues in ascending order and matching unit eigenvectors (row `k`
/// of the returned array pairs with eigenvalue `k`) of a symmetric matrix.
/// Off-diagonal asymmetry in the input is ignored (only the upper triangle
/// of each rotation pair is formed from symmetric updates).
pub fn eigen_sym6(m: &[[f64; 6]; 6]) -> ([f64; 6], [[f64; 6]; 6]) {
    let mut a = *m;
    let mut v = [[0.0; 6]; 6];
    for i in 0..6 {
        v[i][i] = 1.0;
    }
    let frob2: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..64 {
        let mut off2 = 0.0;
        for p in 0..6 {
            for q in (p + 1)..6 {
                off2 += a[p][q] * a[p][q];
            }
        }
        if off2 <= frob2 * 1e-30 {
            break;
        }
        for p in 0..6 {
            for q in (p + 1)..6 {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..6 {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = c * aip - s * aiq;
                        a[p][i] = a[i][p];
                        a[i][q] = s * aip + c * aiq;
                        a[q][i] = a[i][q];
                    }
                }
                for i in 0..6 {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order = [0usize, 1, 2, 3, 4, 5];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).expect("finite eigenvalues"));
    let mut vals = [0.0; 6];
    let mut vecs = [[0.0; 6]; 6];
    for (k, &idx) in order.iter().enumerate() {
        vals[k] = a[idx][idx];
        for i in 0..6 {
            vecs[k][i] = v[i][idx];
        }
    }
    (vals, vecs)
}

/// Shared uniqueness test for the smallest eigenvalue: the gap to the next
/// one must exceed 1e-9 of the spectrum scale.
pub fn eigen_gap_ok(vals_ascending: &[f64; 6]) -> bool {
    let scale = vals_ascending
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    vals_ascending[1] - vals_ascending[0] > 1e-9 * scale
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
/// Returns `None` when a pivot is not strictly positive (the damped normal
/// matrix is then treated as unusable and the caller raises damping).
pub fn solve_spd5(a: &[[f64; 5]; 5], b: &[f64; 5]) -> Option<[f64; 5]> {
    let mut l = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; 5];
    for i in 0..5 {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = [0.0; 5];
    for i in (0..5).rev() {
        let mut sum = y[i];
        for k in (i + 1)..5 {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}
