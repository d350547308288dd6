//! Small dense linear-programming solver (two-phase primal simplex).
//!
//! Minimizes `c . x` subject to `A x {<=,=,>=} b`, `x >= 0`. Dimensions stay
//! small throughout the solver (schedule polytopes, selection relaxations,
//! assignment bounds), so a dense tableau with Dantzig pricing and a Bland
//! anti-cycling fallback is both fast enough and deterministic.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Lp {
    num_vars: usize,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.optimal().map(|(_, v)| v)
    }
}

impl Lp {
    pub fn new(num_vars: usize) -> Self {
        Lp { num_vars, rows: Vec::new(), objective: vec![0.0; num_vars] }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Dense constraint row.
    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push((coeffs, sense, rhs));
    }

    /// Constraint touching only a few variables.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, a) in entries {
            coeffs[j] += a;
        }
        self.rows.push((coeffs, sense, rhs));
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        debug_assert_eq!(c.len(), self.num_vars);
        self.objective = c;
    }

    pub fn set_cost(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).solve()
    }
}

struct Tableau {
    /// `(m + 1)` rows; the last row is the objective row, the last column
    /// the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    num_vars: usize,
    /// First artificial column; structural + slack columns come before it.
    artificial_start: usize,
    objective: Vec<f64>,
}

impl Tableau {
    fn build(lp: &Lp) -> Tableau {
        let m = lp.rows.len();
        let mut num_slacks = 0;
        for (_, sense, _) in &lp.rows {
            if *sense != Sense::Eq {
                num_slacks += 1;
            }
        }
        // Worst case one artificial per row.
        let width = lp.num_vars + num_slacks;
        let total = width + m;
        let mut t = vec![vec![0.0; total + 1]; m + 1];
        let mut basis = vec![usize::MAX; m];
        let mut slack_idx = lp.num_vars;
        let mut art_idx = width;

        for (i, (coeffs, sense, rhs)) in lp.rows.iter().enumerate() {
            let flip = *rhs < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            for (j, &a) in coeffs.iter().enumerate() {
                t[i][j] = sgn * a;
            }
            t[i][total] = sgn * rhs;
            let eff_sense = match (sense, flip) {
                (Sense::Le, false) | (Sense::Ge, true) => Sense::Le,
                (Sense::Ge, false) | (Sense::Le, true) => Sense::Ge,
                (Sense::Eq, _) => Sense::Eq,
            };
            match eff_sense {
                Sense::Le => {
                    t[i][slack_idx] = 1.0;
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                Sense::Ge => {
                    t[i][slack_idx] = -1.0;
                    slack_idx += 1;
                    t[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
                Sense::Eq => {
                    t[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
            }
        }

        // Phase-1 objective row: minimize the sum of artificials, priced out
        // against the artificial basis.
        for i in 0..m {
            if basis[i] >= width {
                let row = t[i].clone();
                for (j, v) in row.iter().enumerate() {
                    t[m][j] -= v;
                }
            }
        }
        // Artificial columns carry cost 1, cancel their reduced costs.
        for j in width..total {
            t[m][j] += 1.0;
        }

        Tableau { t, basis, m, num_vars: lp.num_vars, artificial_start: width, objective: lp.objective.clone() }
    }

    fn solve(mut self) -> LpOutcome {
        let total = self.t[0].len() - 1;
        if self.basis.iter().any(|&b| b >= self.artificial_start) {
            if !self.iterate(total) {
                // Phase 1 of a feasibility problem is always bounded.
                return LpOutcome::Infeasible;
            }
            if self.t[self.m][total] < -EPS {
                return LpOutcome::Infeasible;
            }
            self.purge_artificials();
        }

        // Phase 2: rebuild the objective row from the original costs.
        let m = self.m;
        for v in self.t[m].iter_mut() {
            *v = 0.0;
        }
        for j in 0..self.num_vars {
            self.t[m][j] = self.objective[j];
        }
        for i in 0..m {
            let b = self.basis[i];
            let cb = if b < self.num_vars { self.objective[b] } else { 0.0 };
            if cb != 0.0 {
                let row = self.t[i].clone();
                for (j, v) in row.iter().enumerate() {
                    self.t[m][j] -= cb * v;
                }
            }
        }
        if !self.iterate(self.artificial_start) {
            return LpOutcome::Unbounded;
        }

        let mut x = vec![0.0; self.num_vars];
        for i in 0..m {
            if self.basis[i] < self.num_vars {
                x[self.basis[i]] = self.t[i][total];
            }
        }
        let value = x.iter().zip(&self.objective).map(|(xi, ci)| xi * ci).sum();
        LpOutcome::Optimal { x, value }
    }

    /// Run simplex over columns `0..limit`. Returns false when unbounded.
    fn iterate(&mut self, limit: usize) -> bool {
        let total = self.t[0].len() - 1;
        let mut stall = 0usize;
        let max_stall = 64 + 4 * (self.m + limit);
        loop {
            // Dantzig pricing; Bland's rule once objective progress stalls.
            let bland = stall > max_stall;
            let mut enter = None;
            let mut best = -EPS;
            for j in 0..limit {
                let rc = self.t[self.m][j];
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(enter) = enter else { return true };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][enter];
                if a > EPS {
                    let ratio = self.t[i][total] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio < lr + EPS && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((leave, ratio)) = leave else { return false };
            if ratio.abs() <= EPS {
                stall += 1;
            } else {
                stall = 0;
            }
            self.pivot(leave, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let total = self.t[0].len();
        let piv = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= piv;
        }
        for i in 0..=self.m {
            if i == row {
                continue;
            }
            let factor = self.t[i][col];
            if factor != 0.0 {
                for j in 0..total {
                    let delta = factor * self.t[row][j];
                    self.t[i][j] -= delta;
                }
                self.t[i][col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Pivot leftover zero-valued artificials out of the basis, dropping
    /// redundant rows.
    fn purge_artificials(&mut self) {
        for i in 0..self.m {
            if self.basis[i] < self.artificial_start {
                continue;
            }
            let piv = (0..self.artificial_start).find(|&j| self.t[i][j].abs() > EPS);
            match piv {
                Some(j) => self.pivot(i, j),
                None => {
                    // Redundant constraint: zero the row so it never pivots.
                    let total = self.t[0].len();
                    for j in 0..total {
                        self.t[i][j] = 0.0;
                    }
                }
            }
        }
        // Disable artificial columns for phase 2.
        for i in 0..=self.m {
            for j in self.artificial_start..self.t[0].len() - 1 {
                self.t[i][j] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36.
        let mut lp = Lp::new(2);
        lp.add_row(vec![1.0, 0.0], Sense::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Sense::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Sense::Le, 18.0);
        lp.set_objective(vec![-3.0, -5.0]);
        let (x, v) = lp.solve().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
        assert!((v + 36.0).abs() < 1e-7);
        assert!((x[0] - 2.0).abs() < 1e-7 && (x[1] - 6.0).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        let mut lp = Lp::new(1);
        lp.add_row(vec![1.0], Sense::Ge, 3.0);
        lp.add_row(vec![1.0], Sense::Le, 2.0);
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = Lp::new(2);
        lp.add_row(vec![1.0, -1.0], Sense::Le, 1.0);
        lp.set_objective(vec![-1.0, 0.0]);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn equality_rows() {
        // min x + y s.t. x + y = 2, x - y = 0 -> (1,1), 2.
        let mut lp = Lp::new(2);
        lp.add_row(vec![1.0, 1.0], Sense::Eq, 2.0);
        lp.add_row(vec![1.0, -1.0], Sense::Eq, 0.0);
        lp.set_objective(vec![1.0, 1.0]);
        let (x, v) = lp.solve().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
        assert!((x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_equalities_with_redundancy() {
        let mut lp = Lp::new(2);
        lp.add_row(vec![1.0, 1.0], Sense::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0], Sense::Eq, 2.0);
        lp.set_objective(vec![0.0, 1.0]);
        let (_, v) = lp.solve().optimal().map(|(x, v)| (x.to_vec(), v)).unwrap();
        assert!(v.abs() < 1e-7);
    }

    /// Enumerate all candidate vertices of `{A x sense b, x >= 0}` by
    /// solving every n-subset of tight constraints, keep the feasible ones,
    /// and return the best objective value.
    fn vertex_oracle(n: usize, rows: &[(Vec<f64>, Sense, f64)], c: &[f64]) -> Option<f64> {
        let mut all: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            all.push((e, 0.0));
        }
        let feas = |x: &[f64]| -> bool {
            if x.iter().any(|&v| v < -1e-7) {
                return false;
            }
            rows.iter().all(|(a, s, b)| {
                let lhs: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                match s {
                    Sense::Le => lhs <= b + 1e-7,
                    Sense::Ge => lhs >= b - 1e-7,
                    Sense::Eq => (lhs - b).abs() <= 1e-7,
                }
            })
        };
        let mut best: Option<f64> = None;
        let k = all.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            // Solve the tight system for this subset.
            let mut mat: Vec<Vec<f64>> = idx.iter().map(|&i| {
                let mut r = all[i].0.clone();
                r.push(all[i].1);
                r
            }).collect();
            if let Some(x) = gauss(&mut mat, n) {
                if feas(&x) {
                    let v: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
            // Next n-combination of 0..k.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] != i + k - n {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(mat: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for col in 0..n {
            let piv = (col..n).max_by(|&a, &b| mat[a][col].abs().partial_cmp(&mat[b][col].abs()).unwrap())?;
            if mat[piv][col].abs() < 1e-9 {
                return None;
            }
            mat.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = mat[r][col] / mat[col][col];
                    for j in col..=n {
                        let delta = f * mat[col][j];
                        mat[r][j] -= delta;
                    }
                }
            }
        }
        Some((0..n).map(|i| mat[i][n] / mat[i][i]).collect())
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = StdRng::seed_from_u64(7);
        for case in 0..300 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=5);
            let mut lp = Lp::new(n);
            let mut rows = Vec::new();
            for _ in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
                let b = rng.gen_range(-4i32..=8) as f64;
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                lp.add_row(a.clone(), sense, b);
                rows.push((a, sense, b));
            }
            // Bounding box keeps every instance bounded.
            let ones = vec![1.0; n];
            lp.add_row(ones.clone(), Sense::Le, 50.0);
            rows.push((ones, Sense::Le, 50.0));
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
            lp.set_objective(c.clone());

            let oracle = vertex_oracle(n, &rows, &c);
            match (lp.solve(), oracle) {
                (LpOutcome::Optimal { value, .. }, Some(want)) => {
                    assert!((value - want).abs() < 1e-6, "case {case}: got {value}, oracle {want}");
                }
                (LpOutcome::Infeasible, None) => {}
                (got, want) => panic!("case {case}: solver {got:?} vs oracle {want:?}"),
            }
        }
    }
}
