//! Dense least-squares helpers for the small fits in this crate.

/// Solves `min ‖A x − b‖₂` by Householder QR. `columns` holds the columns of
/// `A`, each of length `b.len()`. Returns `None` when `A` is rank deficient.
pub fn least_squares(columns: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let p = columns.len();
    let m = b.len();
    if p == 0 || m < p || columns.iter().any(|c| c.len() != m) {
        return None;
    }
    // Column equilibration keeps mixed-scale designs (1, ln k, k) well posed.
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if scales.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return None;
    }
    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .zip(&scales)
        .map(|(c, s)| c.iter().map(|v| v / s).collect())
        .collect();
    let mut rhs = b.to_vec();

    for j in 0..p {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-13 {
            return None;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(j) {
            let dot: f64 = v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (ci, vi) in col[j..].iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(x, y)| x * y).sum();
        let f = 2.0 * dot / vnorm2;
        for (ri, vi) in rhs[j..].iter_mut().zip(&v) {
            *ri -= f * vi;
        }
    }

    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for k in i + 1..p {
            s -= a[k][i] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x.iter().zip(&scales).map(|(xi, s)| xi / s).collect())
}

/// Solves the square system `M x = r` by Gaussian elimination with partial
/// pivoting. `m` is row-major `n × n`.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        r.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x).collect();
        let sol = least_squares(&[vec![1.0; 10], xs], &ys).unwrap();
        assert!((sol[0] - 2.0).abs() < 1e-13);
        assert!((sol[1] + 3.0).abs() < 1e-13);
    }

    #[test]
    fn rank_deficient() {
        let c = vec![1.0, 2.0, 3.0];
        assert!(least_squares(&[c.clone(), c], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn dense_solve() {
        let m = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let x = solve_dense(m, vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }
}
