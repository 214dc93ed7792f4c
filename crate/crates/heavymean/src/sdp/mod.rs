//! Dense standard-form semidefinite programming.
//!
//! Problems have one PSD block `X` (side `psd_dim`) and one nonnegative
//! orthant block `s` (length `nonneg_dim`), with equality constraints
//! `<A_i, X> + <a_i, s> = b_i`. Inequalities are embedded through
//! [`SdpProblem::add_inequality`], which appends a slack coordinate.
//!
//! The solver is a primal-dual interior point method with Nesterov-Todd
//! scaling and a Mehrotra-style corrector; infeasibility is decided by a
//! phase-1 auxiliary problem. Everything is deterministic: the same problem
//! and options produce bit-identical output on one platform.

mod solver;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use solver::SolveOptions;

/// Objective sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Direction of an inequality handed to [`SdpProblem::add_inequality`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IneqDirection {
    /// `lhs <= rhs`
    Le,
    /// `lhs >= rhs`
    Ge,
}

/// One equality constraint `<A, X> + <a, s> = b`, stored sparsely.
/// PSD entries are upper-triangle triplets `(row, col, value)` with
/// `row <= col`; an off-diagonal triplet stands for the symmetric pair.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub psd: Vec<(usize, usize, f64)>,
    pub nonneg: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new() -> Self {
        Constraint {
            psd: Vec::new(),
            nonneg: Vec::new(),
            rhs: 0.0,
        }
    }

    pub fn psd_entry(mut self, row: usize, col: usize, v: f64) -> Self {
        self.push_psd(row, col, v);
        self
    }

    pub fn push_psd(&mut self, row: usize, col: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        self.psd.push((r, c, v));
    }

    pub fn push_nonneg(&mut self, idx: usize, v: f64) {
        if v != 0.0 {
            self.nonneg.push((idx, v));
        }
    }

    pub fn rhs(mut self, b: f64) -> Self {
        self.rhs = b;
        self
    }

    /// Merge duplicate triplets so each (row, col) appears once.
    fn normalize(&mut self) {
        self.psd.sort_unstable_by_key(|&(r, c, _)| (r, c));
        self.psd.dedup_by(|a, b| {
            if a.0 == b.0 && a.1 == b.1 {
                b.2 += a.2;
                true
            } else {
                false
            }
        });
        self.psd.retain(|&(_, _, v)| v != 0.0);
        self.nonneg.sort_unstable_by_key(|&(i, _)| i);
        self.nonneg.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        self.nonneg.retain(|&(_, v)| v != 0.0);
    }

    pub fn apply(&self, x_psd: &DMatrix<f64>, x_nonneg: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for &(r, c, v) in &self.psd {
            acc += if r == c {
                v * x_psd[(r, c)]
            } else {
                2.0 * v * x_psd[(r, c)]
            };
        }
        for &(i, v) in &self.nonneg {
            acc += v * x_nonneg[i];
        }
        acc
    }

    /// Dense symmetric matrix form of the PSD part.
    pub fn psd_matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.psd {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }
}

impl Default for Constraint {
    fn default() -> Self {
        Self::new()
    }
}

/// Standard-form conic problem over one PSD block plus a nonnegative orthant.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    psd_dim: usize,
    nonneg_dim: usize,
    cost_psd: DMatrix<f64>,
    cost_nonneg: DVector<f64>,
    constraints: Vec<Constraint>,
    sense: Sense,
}

impl SdpProblem {
    pub fn new(psd_dim: usize, sense: Sense) -> Result<Self> {
        if psd_dim == 0 {
            return Err(Error::InvalidParameter("psd_dim must be >= 1".into()));
        }
        Ok(SdpProblem {
            psd_dim,
            nonneg_dim: 0,
            cost_psd: DMatrix::zeros(psd_dim, psd_dim),
            cost_nonneg: DVector::zeros(0),
            constraints: Vec::new(),
            sense,
        })
    }

    pub fn psd_dim(&self) -> usize {
        self.psd_dim
    }

    pub fn nonneg_dim(&self) -> usize {
        self.nonneg_dim
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn cost_psd(&self) -> &DMatrix<f64> {
        &self.cost_psd
    }

    pub fn cost_nonneg(&self) -> &DVector<f64> {
        &self.cost_nonneg
    }

    /// Set the PSD cost block from a dense symmetric matrix.
    pub fn set_cost_psd(&mut self, c: &DMatrix<f64>) -> Result<()> {
        check_symmetric(c, usize::MAX)?;
        if c.nrows() != self.psd_dim {
            return Err(Error::DimensionMismatch(format!(
                "cost side {} vs psd_dim {}",
                c.nrows(),
                self.psd_dim
            )));
        }
        self.cost_psd = (c + c.transpose()).scale(0.5);
        Ok(())
    }

    pub fn add_cost_psd_entry(&mut self, row: usize, col: usize, v: f64) {
        self.cost_psd[(row, col)] += v / if row == col { 1.0 } else { 2.0 };
        if row != col {
            self.cost_psd[(col, row)] += v / 2.0;
        }
    }

    /// Append a fresh nonnegative coordinate, returning its index.
    pub fn push_nonneg_var(&mut self, cost: f64) -> usize {
        let idx = self.nonneg_dim;
        self.nonneg_dim += 1;
        self.cost_nonneg = self.cost_nonneg.clone().insert_row(idx, cost);
        idx
    }

    /// Add an equality constraint given as a dense symmetric matrix plus an
    /// orthant vector. Verifies symmetry to 1e-12 relative tolerance.
    pub fn add_equality_dense(
        &mut self,
        mat: &DMatrix<f64>,
        vec: &DVector<f64>,
        rhs: f64,
    ) -> Result<()> {
        if mat.nrows() != self.psd_dim || mat.ncols() != self.psd_dim {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix {}x{} vs psd_dim {}",
                mat.nrows(),
                mat.ncols(),
                self.psd_dim
            )));
        }
        if vec.len() != self.nonneg_dim {
            return Err(Error::DimensionMismatch(format!(
                "constraint vector length {} vs nonneg_dim {}",
                vec.len(),
                self.nonneg_dim
            )));
        }
        check_symmetric(mat, self.constraints.len())?;
        let mut c = Constraint::new();
        for r in 0..self.psd_dim {
            for col in r..self.psd_dim {
                let v = (mat[(r, col)] + mat[(col, r)]) / 2.0;
                c.push_psd(r, col, v);
            }
        }
        for i in 0..vec.len() {
            c.push_nonneg(i, vec[i]);
        }
        c.rhs = rhs;
        self.constraints.push(c);
        Ok(())
    }

    /// Add a sparse equality constraint.
    pub fn add_equality(&mut self, mut c: Constraint) -> Result<()> {
        for &(r, col, _) in &c.psd {
            if r >= self.psd_dim || col >= self.psd_dim {
                return Err(Error::DimensionMismatch(format!(
                    "psd entry ({r},{col}) out of range {}",
                    self.psd_dim
                )));
            }
        }
        for &(i, _) in &c.nonneg {
            if i >= self.nonneg_dim {
                return Err(Error::DimensionMismatch(format!(
                    "orthant entry {i} out of range {}",
                    self.nonneg_dim
                )));
            }
        }
        c.normalize();
        self.constraints.push(c);
        Ok(())
    }

    /// Embed `lhs <= rhs` or `lhs >= rhs` via a fresh slack:
    /// `<A, X> + <a, s> (+/-) slack = rhs`, `slack >= 0`.
    /// Feasible sets correspond bijectively with `slack = |rhs - lhs|`.
    pub fn add_inequality(
        &mut self,
        mut c: Constraint,
        rhs: f64,
        direction: IneqDirection,
    ) -> Result<usize> {
        let slack = self.push_nonneg_var(0.0);
        let coeff = match direction {
            IneqDirection::Le => 1.0,
            IneqDirection::Ge => -1.0,
        };
        c.push_nonneg(slack, coeff);
        c.rhs = rhs;
        self.add_equality(c)?;
        Ok(slack)
    }

    /// Objective value of a candidate point, in the problem's own sense.
    pub fn objective_of(&self, x_psd: &DMatrix<f64>, x_nonneg: &DVector<f64>) -> f64 {
        let mut obj = 0.0;
        for r in 0..self.psd_dim {
            for c in 0..self.psd_dim {
                obj += self.cost_psd[(r, c)] * x_psd[(r, c)];
            }
        }
        for i in 0..self.nonneg_dim {
            obj += self.cost_nonneg[i] * x_nonneg[i];
        }
        obj
    }

    /// Max absolute equality violation of a candidate point.
    pub fn feasibility_residual(&self, x_psd: &DMatrix<f64>, x_nonneg: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| (c.apply(x_psd, x_nonneg) - c.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Solve with default options at the given tolerance.
    pub fn solve(&self, tol: f64) -> Result<SdpSolution> {
        self.solve_with(&SolveOptions {
            tol,
            ..SolveOptions::default()
        })
    }

    pub fn solve_with(&self, opts: &SolveOptions) -> Result<SdpSolution> {
        solver::solve(self, opts)
    }

    /// Dump the problem in a plain-text sparse triplet format for
    /// cross-checking against external solvers. One record per line:
    /// header lines `psd_dim`, `nonneg_dim`, `sense`, then `cost` sections and
    /// per-constraint sections listing `row col value` triplets.
    pub fn dump_triplets<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "psd_dim {}", self.psd_dim)?;
        writeln!(w, "nonneg_dim {}", self.nonneg_dim)?;
        writeln!(
            w,
            "sense {}",
            match self.sense {
                Sense::Minimize => "min",
                Sense::Maximize => "max",
            }
        )?;
        let mut cost_entries = Vec::new();
        for r in 0..self.psd_dim {
            for c in r..self.psd_dim {
                let v = self.cost_psd[(r, c)];
                if v != 0.0 {
                    cost_entries.push((r, c, v));
                }
            }
        }
        writeln!(w, "cost_psd {}", cost_entries.len())?;
        for (r, c, v) in cost_entries {
            writeln!(w, "{r} {c} {v:.17e}")?;
        }
        let lin: Vec<(usize, f64)> = (0..self.nonneg_dim)
            .filter(|&i| self.cost_nonneg[i] != 0.0)
            .map(|i| (i, self.cost_nonneg[i]))
            .collect();
        writeln!(w, "cost_nonneg {}", lin.len())?;
        for (i, v) in lin {
            writeln!(w, "{i} {v:.17e}")?;
        }
        writeln!(w, "constraints {}", self.constraints.len())?;
        for (k, c) in self.constraints.iter().enumerate() {
            writeln!(w, "constraint {k} rhs {:.17e}", c.rhs)?;
            writeln!(w, "psd {}", c.psd.len())?;
            for &(r, col, v) in &c.psd {
                writeln!(w, "{r} {col} {v:.17e}")?;
            }
            writeln!(w, "nonneg {}", c.nonneg.len())?;
            for &(i, v) in &c.nonneg {
                writeln!(w, "{i} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

fn check_symmetric(m: &DMatrix<f64>, index: usize) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    if worst > 1e-12 * scale {
        return Err(Error::NotSymmetric {
            index,
            asymmetry: worst / scale,
        });
    }
    Ok(())
}

/// Solver status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Primal/dual certificate pair returned by the solver.
///
/// Dual objects refer to the internal *minimize* form (`maximize` problems
/// are negated on entry): `C_int - sum_i y_i A_i = S  (PSD)` and
/// `c_int - sum_i y_i a_i = z >= 0`, with `C_int = ±cost`. The reported
/// `objective` is always in the problem's own sense.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    pub primal_psd: DMatrix<f64>,
    pub primal_nonneg: DVector<f64>,
    pub dual_multipliers: DVector<f64>,
    pub dual_slack_psd: DMatrix<f64>,
    pub dual_slack_nonneg: DVector<f64>,
    pub objective: f64,
    /// Absolute difference between primal and dual objectives.
    pub duality_gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Positive when the problem was re-solved with a perturbed right-hand
    /// side (problems without interior); magnitude of the perturbation.
    pub perturbation: Option<f64>,
    /// For `Infeasible`: optimal value of the phase-1 problem.
    pub infeasibility: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_simple(problem: &SdpProblem) -> SdpSolution {
        problem.solve(1e-8).expect("solve")
    }

    #[test]
    fn trace_problem_reaches_known_optimum() {
        // minimize Tr X over 2x2 PSD X with X11 = 1, X22 = 1 -> 2.
        let mut p = SdpProblem::new(2, Sense::Minimize).unwrap();
        p.set_cost_psd(&DMatrix::identity(2, 2)).unwrap();
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(1.0))
            .unwrap();
        p.add_equality(Constraint::new().psd_entry(1, 1, 1.0).rhs(1.0))
            .unwrap();
        let sol = solve_simple(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-7);
        assert!((sol.primal_psd[(0, 0)] - 1.0).abs() < 1e-7);
        assert!((sol.primal_psd[(1, 1)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn correlation_bound_is_tight() {
        // maximize X12 + X21 over PSD with unit diagonal -> 2 at the all-ones matrix.
        let mut p = SdpProblem::new(2, Sense::Maximize).unwrap();
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = 1.0;
        c[(1, 0)] = 1.0;
        p.set_cost_psd(&c).unwrap();
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(1.0))
            .unwrap();
        p.add_equality(Constraint::new().psd_entry(1, 1, 1.0).rhs(1.0))
            .unwrap();
        let sol = solve_simple(&p);
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-7);
        assert!((sol.primal_psd[(0, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_diagonal_is_infeasible() {
        let mut p = SdpProblem::new(2, Sense::Minimize).unwrap();
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(-1.0))
            .unwrap();
        let sol = solve_simple(&p);
        assert_eq!(sol.status, Status::Infeasible);
        assert!(sol.infeasibility.unwrap() > 1e-8);
    }

    #[test]
    fn slack_embedding_round_trip() {
        // Tr U <= 1 on an empty problem becomes <I, U> + s = 1 with s >= 0.
        let mut p = SdpProblem::new(2, Sense::Minimize).unwrap();
        let mut c = Constraint::new();
        c.push_psd(0, 0, 1.0);
        c.push_psd(1, 1, 1.0);
        p.add_inequality(c, 1.0, IneqDirection::Le).unwrap();
        assert_eq!(p.nonneg_dim(), 1);
        assert_eq!(p.num_constraints(), 1);
        // A feasible point of the original extends with s = rhs - lhs.
        let x = DMatrix::identity(2, 2).scale(0.25);
        let s = DVector::from_element(1, 1.0 - 0.5);
        assert!(p.feasibility_residual(&x, &s) < 1e-15);

        // Two independent slacks for two inequalities.
        let mut q = SdpProblem::new(1, Sense::Minimize).unwrap();
        q.add_inequality(Constraint::new().psd_entry(0, 0, 1.0), 0.0, IneqDirection::Ge)
            .unwrap();
        q.add_inequality(Constraint::new().psd_entry(0, 0, 1.0), 0.0, IneqDirection::Ge)
            .unwrap();
        assert_eq!(q.nonneg_dim(), 2);
    }

    #[test]
    fn asymmetric_constraint_rejected() {
        let mut p = SdpProblem::new(2, Sense::Minimize).unwrap();
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 0.5;
        let err = p.add_equality_dense(&m, &DVector::zeros(0), 0.0);
        assert!(matches!(err, Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn dump_format_round_trips_header() {
        let mut p = SdpProblem::new(2, Sense::Maximize).unwrap();
        p.add_cost_psd_entry(0, 1, 2.0);
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(1.0))
            .unwrap();
        let mut buf = Vec::new();
        p.dump_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("psd_dim 2\nnonneg_dim 0\nsense max\n"));
        assert!(text.contains("constraint 0 rhs"));
    }
}
