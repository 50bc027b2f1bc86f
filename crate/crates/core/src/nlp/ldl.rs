//! Symmetric LDLᵀ factorization without pivoting, restricted to the matrix envelope.
//!
//! Each row `i` is only processed from its first structural nonzero `first[i]`, so a
//! matrix whose rows and columns have been ordered to keep nonzeros near the diagonal
//! factors in `O(n·b²)` for envelope width `b`. The inertia is read off `D`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot(pub usize);

pub struct Ldl {
    n: usize,
    /// Row-major; strict lower triangle holds `L`, the diagonal holds `D`.
    data: Vec<f64>,
    first: Vec<usize>,
}

impl Ldl {
    /// Factors the symmetric matrix whose lower triangle is stored row-major in `a`.
    /// A pivot smaller than `rel_tol` times the largest entry of its row aborts the
    /// factorization.
    pub fn factor(mut a: Vec<f64>, n: usize, rel_tol: f64) -> Result<(Ldl, Inertia), SingularPivot> {
        assert_eq!(a.len(), n * n);
        let mut row_max = vec![0.0_f64; n];
        for i in 0..n {
            for j in 0..=i {
                let v = a[i * n + j].abs();
                row_max[i] = row_max[i].max(v);
                row_max[j] = row_max[j].max(v);
            }
        }
        let first: Vec<usize> = (0..n)
            .map(|i| (0..i).find(|&j| a[i * n + j] != 0.0).unwrap_or(i))
            .collect();
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
        };
        // w[k] = L[i][k]·D[k] for the row being processed
        let mut w = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let k0 = fi.max(first[j]);
                let (row_i, row_j) = (i * n, j * n);
                let mut s = a[row_i + j];
                for k in k0..j {
                    s -= w[k] * a[row_j + k];
                }
                w[j] = s;
                a[row_i + j] = s / a[row_j + j];
            }
            let row_i = i * n;
            let mut d = a[row_i + i];
            for k in fi..i {
                d -= w[k] * a[row_i + k];
            }
            if !(d.abs() > rel_tol * row_max[i]) {
                return Err(SingularPivot(i));
            }
            a[row_i + i] = d;
            if d > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
        }
        Ok((Ldl { n, data: a, first }, inertia))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = i * n;
            let mut s = b[i];
            for k in self.first[i]..i {
                s -= self.data[row + k] * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.data[i * n + i];
        }
        for i in (0..n).rev() {
            let row = i * n;
            let bi = b[i];
            for k in self.first[i]..i {
                b[k] -= self.data[row + k] * bi;
            }
        }
    }
}
