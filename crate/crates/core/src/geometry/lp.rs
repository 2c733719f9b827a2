//! Dense two-phase simplex for the small linear programs behind the cone
//! routines. Variables are nonnegative; the objective is maximized.
//!
//! Problems here have at most a few dozen rows and ~10³ columns, so a dense
//! tableau with Bland's rule is adequate and never cycles.

const PIVOT_EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LinearProgram {
    n: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpStatus {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpStatus {
    pub(crate) fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpStatus::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

impl LinearProgram {
    /// A program over `n` nonnegative variables with a zero objective.
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            objective: vec![0.0; n],
            rows: Vec::new(),
        }
    }

    pub(crate) fn maximize(mut self, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), self.n);
        self.objective = objective;
        self
    }

    pub(crate) fn constraint(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.n);
        self.rows.push(Row { coeffs, rel, rhs });
    }

    /// Solves the program. `feas_tol` is the phase-one threshold on the sum
    /// of artificial variables, scaled by the largest right-hand side.
    pub(crate) fn solve(&self, feas_tol: f64) -> LpStatus {
        let n = self.n;
        // normalize to nonnegative right-hand sides
        let rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    Row {
                        coeffs: r.coeffs.iter().map(|c| -c).collect(),
                        rel: match r.rel {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -r.rhs,
                    }
                } else {
                    r.clone()
                }
            })
            .collect();
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.rel != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.rel != Relation::Le).count();
        let cols = n + n_slack + n_art;
        let width = cols + 1;
        let mut tab = vec![0.0; m * width];
        let mut basis = vec![0usize; m];
        let art_start = n + n_slack;
        let (mut si, mut ai) = (n, art_start);
        for (i, r) in rows.iter().enumerate() {
            let row = &mut tab[i * width..(i + 1) * width];
            row[..n].copy_from_slice(&r.coeffs);
            row[cols] = r.rhs;
            match r.rel {
                Relation::Le => {
                    row[si] = 1.0;
                    basis[i] = si;
                    si += 1;
                }
                Relation::Ge => {
                    row[si] = -1.0;
                    si += 1;
                    row[ai] = 1.0;
                    basis[i] = ai;
                    ai += 1;
                }
                Relation::Eq => {
                    row[ai] = 1.0;
                    basis[i] = ai;
                    ai += 1;
                }
            }
        }
        let scale = rows.iter().fold(1.0f64, |acc, r| acc.max(r.rhs.abs()));

        let mut tableau = Tableau {
            m,
            width,
            tab,
            basis,
            active_rows: vec![true; m],
        };

        if n_art > 0 {
            let mut phase1 = vec![0.0; cols];
            for c in phase1.iter_mut().skip(art_start) {
                *c = -1.0;
            }
            if tableau.optimize(&phase1, cols).is_err() {
                // cannot happen: phase one is bounded by construction
                return LpStatus::Infeasible;
            }
            let infeasibility: f64 = (0..m)
                .filter(|&i| tableau.active_rows[i] && tableau.basis[i] >= art_start)
                .map(|i| tableau.rhs(i))
                .sum();
            if infeasibility > feas_tol * scale {
                return LpStatus::Infeasible;
            }
            // drive zero-level artificials out of the basis
            for i in 0..m {
                if !tableau.active_rows[i] || tableau.basis[i] < art_start {
                    continue;
                }
                let pivot_col = (0..art_start).find(|&j| tableau.at(i, j).abs() > 1e-9);
                match pivot_col {
                    Some(j) => tableau.pivot(i, j),
                    None => tableau.active_rows[i] = false,
                }
            }
        }

        let mut phase2 = vec![0.0; cols];
        phase2[..n].copy_from_slice(&self.objective);
        match tableau.optimize(&phase2, art_start) {
            Ok(()) => {
                let mut x = vec![0.0; n];
                for i in 0..m {
                    if tableau.active_rows[i] && tableau.basis[i] < n {
                        x[tableau.basis[i]] = tableau.rhs(i);
                    }
                }
                let value = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
                LpStatus::Optimal { x, value }
            }
            Err(()) => LpStatus::Unbounded,
        }
    }
}

struct Tableau {
    m: usize,
    width: usize,
    tab: Vec<f64>,
    basis: Vec<usize>,
    active_rows: Vec<bool>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.tab[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.tab[pr * w + pc];
        for j in 0..w {
            self.tab[pr * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.tab[pr * w..(pr + 1) * w].to_vec();
        for i in 0..self.m {
            if i == pr || !self.active_rows[i] {
                continue;
            }
            let f = self.tab[i * w + pc];
            if f != 0.0 {
                for j in 0..w {
                    self.tab[i * w + j] -= f * pivot_row[j];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Maximizes `c·x` over the columns `0..usable`. Err on unboundedness.
    fn optimize(&mut self, c: &[f64], usable: usize) -> Result<(), ()> {
        let max_iter = 50 * (self.m + usable) + 1000;
        for _ in 0..max_iter {
            // reduced costs: c_j - c_B B^-1 A_j
            let mut entering = None;
            for j in 0..usable {
                if self.basis_contains(j) {
                    continue;
                }
                let mut rc = c[j];
                for i in 0..self.m {
                    if self.active_rows[i] {
                        let a = self.at(i, j);
                        if a != 0.0 {
                            rc -= c[self.basis[i]] * a;
                        }
                    }
                }
                if rc > PIVOT_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.active_rows[i] {
                    continue;
                }
                let a = self.at(i, j);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15
                                || ((ratio - lr).abs() <= 1e-15 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                Some((i, _)) => self.pivot(i, j),
                None => return Err(()),
            }
        }
        Ok(())
    }

    fn basis_contains(&self, j: usize) -> bool {
        (0..self.m).any(|i| self.active_rows[i] && self.basis[i] == j)
    }
}
