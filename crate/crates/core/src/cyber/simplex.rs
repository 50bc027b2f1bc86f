//! Dense two-phase tableau simplex for small linear programs.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cᵀx` subject to `rows` and `lo <= x <= hi` with finite `lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes the objective row over columns `< allowed`; Bland's rule.
    fn run(&mut self, allowed: usize) -> bool {
        let m = self.basis.len();
        let obj = m;
        let rhs = self.cols;
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.t[obj][j] < -EPS) else {
                return true;
            };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..m {
                let a = self.t[i][enter];
                if a > EPS {
                    let ratio = self.t[i][rhs] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            match leave {
                Some(r) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

pub fn solve_lp(lp: &Lp) -> LpOutcome {
    let n = lp.c.len();
    // shift to x = lo + x', drop fixed columns
    let free: Vec<usize> = (0..n).filter(|&j| lp.hi[j] - lp.lo[j] > EPS).collect();
    if (0..n).any(|j| lp.hi[j] < lp.lo[j] - EPS) {
        return LpOutcome::Infeasible;
    }
    let mut col_of = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        col_of[j] = k;
    }
    let nf = free.len();

    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; nf];
        let mut b = row.rhs;
        for &(j, v) in &row.coeffs {
            b -= v * lp.lo[j];
            if col_of[j] != usize::MAX {
                a[col_of[j]] += v;
            }
        }
        if a.iter().all(|v| v.abs() <= EPS) {
            let ok = match row.sense {
                Sense::Le => b >= -EPS,
                Sense::Ge => b <= EPS,
                Sense::Eq => b.abs() <= EPS,
            };
            if !ok {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        rows.push((a, row.sense, b));
    }
    for (k, &j) in free.iter().enumerate() {
        if lp.hi[j].is_finite() {
            let mut a = vec![0.0; nf];
            a[k] = 1.0;
            rows.push((a, Sense::Le, lp.hi[j] - lp.lo[j]));
        }
    }
    for (a, sense, b) in rows.iter_mut() {
        if *b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let cols = nf + n_slack + n_art;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    let mut basis = vec![0; m];
    let (mut s, mut a_col) = (nf, nf + n_slack);
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        t[i][..nf].copy_from_slice(a);
        t[i][cols] = *b;
        match sense {
            Sense::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a_col] = 1.0;
                basis[i] = a_col;
                a_col += 1;
            }
            Sense::Eq => {
                t[i][a_col] = 1.0;
                basis[i] = a_col;
                a_col += 1;
            }
        }
    }
    let mut tab = Tableau { t, basis, cols };

    // phase 1: minimize the sum of artificials
    if n_art > 0 {
        for i in 0..m {
            if tab.basis[i] >= nf + n_slack {
                for j in 0..=cols {
                    let v = tab.t[i][j];
                    tab.t[m][j] -= v;
                }
            }
        }
        for j in nf + n_slack..cols {
            tab.t[m][j] = 0.0;
        }
        tab.run(cols);
        if -tab.t[m][cols] > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if tab.basis[i] >= nf + n_slack {
                if let Some(j) = (0..nf + n_slack).find(|&j| tab.t[i][j].abs() > EPS) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    // phase 2
    let structural = nf + n_slack;
    for j in 0..=cols {
        tab.t[m][j] = 0.0;
    }
    for (k, &j) in free.iter().enumerate() {
        tab.t[m][k] = lp.c[j];
    }
    for i in 0..m {
        let b = tab.basis[i];
        let cb = tab.t[m][b];
        if cb != 0.0 {
            for j in 0..=cols {
                let v = tab.t[i][j];
                tab.t[m][j] -= cb * v;
            }
        }
    }
    // redundant rows keep an artificial basic at zero; exclude artificials from entering
    if !tab.run(structural) {
        return LpOutcome::Unbounded;
    }

    let mut xs = vec![0.0; nf];
    for i in 0..m {
        if tab.basis[i] < nf {
            xs[tab.basis[i]] = tab.t[i][cols];
        }
    }
    let mut x = lp.lo.clone();
    for (k, &j) in free.iter().enumerate() {
        x[j] += xs[k];
    }
    let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    LpOutcome::Optimal { x, objective }
}
