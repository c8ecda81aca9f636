//! Dense LU factorization with partial pivoting, stored sparsely for solves.

/// `P B = L U` for a square basis matrix `B`.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    m: usize,
    /// `perm[k]` is the original row placed at position `k`.
    perm: Vec<usize>,
    /// Column `k` of `L` below the unit diagonal.
    lower: Vec<Vec<(usize, f64)>>,
    /// Column `j` of `U` above the diagonal.
    upper: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

/// Basis position whose column has no acceptable pivot.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Singular(pub usize);

const PIVOT_TOL: f64 = 1e-11;

impl Lu {
    pub fn identity(m: usize) -> Self {
        Self {
            m,
            perm: (0..m).collect(),
            lower: vec![Vec::new(); m],
            upper: vec![Vec::new(); m],
            diag: vec![1.0; m],
        }
    }

    /// Factors the matrix whose `j`-th column has the given sparse entries.
    pub fn factor(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        // Column-major dense working copy.
        let mut a = vec![0.0; m * m];
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                a[j * m + i] += v;
            }
        }
        let mut perm: Vec<usize> = (0..m).collect();
        let mut nz = Vec::with_capacity(m);
        for k in 0..m {
            let col_k = &a[k * m..(k + 1) * m];
            let (mut p, mut best) = (k, 0.0f64);
            for (i, &v) in col_k.iter().enumerate().skip(k) {
                if v.abs() > best {
                    best = v.abs();
                    p = i;
                }
            }
            if best <= PIVOT_TOL {
                return Err(Singular(k));
            }
            if p != k {
                perm.swap(k, p);
                for j in 0..m {
                    a.swap(j * m + k, j * m + p);
                }
            }
            let piv = a[k * m + k];
            nz.clear();
            for i in k + 1..m {
                let v = a[k * m + i];
                if v != 0.0 {
                    let l = v / piv;
                    a[k * m + i] = l;
                    nz.push((i, l));
                }
            }
            if !nz.is_empty() {
                for j in k + 1..m {
                    let ukj = a[j * m + k];
                    if ukj != 0.0 {
                        let col = &mut a[j * m..(j + 1) * m];
                        for &(i, l) in &nz {
                            col[i] -= l * ukj;
                        }
                    }
                }
            }
        }
        // Multipliers are read back only now: later row swaps permute them.
        let mut lower = vec![Vec::new(); m];
        let mut upper = vec![Vec::new(); m];
        let mut diag = vec![0.0; m];
        for j in 0..m {
            diag[j] = a[j * m + j];
            lower[j] = (j + 1..m).filter_map(|i| {
                let v = a[j * m + i];
                (v != 0.0).then_some((i, v))
            }).collect();
            upper[j] = (0..j).filter_map(|i| {
                let v = a[j * m + i];
                (v != 0.0).then_some((i, v))
            }).collect();
        }
        Ok(Self { m, perm, lower, upper, diag })
    }

    /// Solves `B x = rhs` in place (`rhs` indexed by row, result by basis position).
    pub fn solve(&self, rhs: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&r| rhs[r]).collect();
        for k in 0..self.m {
            let yk = y[k];
            if yk != 0.0 {
                for &(i, l) in &self.lower[k] {
                    y[i] -= l * yk;
                }
            }
        }
        for j in (0..self.m).rev() {
            let xj = y[j] / self.diag[j];
            y[j] = xj;
            if xj != 0.0 {
                for &(i, u) in &self.upper[j] {
                    y[i] -= u * xj;
                }
            }
        }
        rhs.copy_from_slice(&y);
    }

    /// Solves `Bᵀ y = rhs` in place (`rhs` indexed by basis position, result by row).
    pub fn solve_transpose(&self, rhs: &mut [f64]) {
        let mut w = rhs.to_vec();
        for j in 0..self.m {
            let mut s = w[j];
            for &(i, u) in &self.upper[j] {
                s -= u * w[i];
            }
            w[j] = s / self.diag[j];
        }
        for k in (0..self.m).rev() {
            let mut s = w[k];
            for &(i, l) in &self.lower[k] {
                s -= l * w[i];
            }
            w[k] = s;
        }
        for (k, &r) in self.perm.iter().enumerate() {
            rhs[r] = w[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(rows: &[&[f64]]) -> Vec<Vec<(usize, f64)>> {
        let m = rows.len();
        (0..m)
            .map(|j| (0..m).filter(|&i| rows[i][j] != 0.0).map(|i| (i, rows[i][j])).collect())
            .collect()
    }

    #[test]
    fn solves_and_transposed_solves() {
        let rows: [&[f64]; 3] = [&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, -1.0]];
        let lu = Lu::factor(3, &dense_cols(&rows)).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = rows.iter().map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        lu.solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
        let mut c: Vec<f64> = (0..3).map(|j| (0..3).map(|i| rows[i][j] * x[i]).sum()).collect();
        lu.solve_transpose(&mut c);
        for (u, v) in c.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn detects_singularity() {
        let rows: [&[f64]; 2] = [&[1.0, 2.0], &[2.0, 4.0]];
        assert!(Lu::factor(2, &dense_cols(&rows)).is_err());
    }
}
