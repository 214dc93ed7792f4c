//! Generic moment/sum-of-squares relaxation: build the SDP whose feasible
//! points are degree-D pseudoexpectations satisfying a polynomial system,
//! solve it, and evaluate polynomials under the result.
//!
//! Layout: one moment variable per monomial of degree <= D, realized as a
//! canonical entry of the moment matrix over the degree <= D/2 basis.
//! Repeated entries are tied by equalities. Localizing matrices for
//! inequalities sit in extra diagonal blocks of the same PSD variable; the
//! inter-block entries are left free, which changes neither feasibility nor
//! optimal values because only diagonal-block entries are constrained and
//! costed, and any PSD diagonal blocks extend to a block-diagonal PSD matrix.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::poly::{Monomial, Polynomial, VariableSet};
use crate::sdp::{Constraint, IneqDirection, SdpProblem, SdpSolution, Sense, SolveOptions, Status};

/// Default cap on the number of moment variables in one relaxation.
pub const DEFAULT_MONOMIAL_CAP: usize = 20_000;

/// Equalities `p = 0` and inequalities `p >= 0` over a shared variable set.
#[derive(Debug, Clone)]
pub struct PolynomialSystem {
    vars: Arc<VariableSet>,
    equalities: Vec<Polynomial>,
    inequalities: Vec<Polynomial>,
}

impl PolynomialSystem {
    pub fn new(vars: &Arc<VariableSet>) -> Self {
        PolynomialSystem {
            vars: Arc::clone(vars),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn equalities(&self) -> &[Polynomial] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn add_equality(&mut self, p: Polynomial) -> Result<()> {
        if !VariableSet::same_set(&self.vars, p.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        self.equalities.push(p);
        Ok(())
    }

    /// Add `p >= 0`.
    pub fn add_inequality(&mut self, p: Polynomial) -> Result<()> {
        if !VariableSet::same_set(&self.vars, p.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        self.inequalities.push(p);
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        self.equalities
            .iter()
            .chain(self.inequalities.iter())
            .map(Polynomial::degree)
            .max()
            .unwrap_or(0)
    }

    /// Max absolute violation of all constraints at a concrete point
    /// (equalities by |p|, inequalities by max(0, -p)).
    pub fn violation_at(&self, point: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for p in &self.equalities {
            worst = worst.max(p.eval(point).abs());
        }
        for p in &self.inequalities {
            worst = worst.max((-p.eval(point)).max(0.0));
        }
        worst
    }
}

/// Moment vector of bounded degree: one value per monomial of degree <= D.
#[derive(Debug, Clone)]
pub struct Pseudoexpectation {
    degree: usize,
    vars: Arc<VariableSet>,
    moments: BTreeMap<Monomial, f64>,
}

impl Pseudoexpectation {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn moments(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.moments.iter().map(|(m, &v)| (m, v))
    }

    pub fn moment(&self, m: &Monomial) -> Option<f64> {
        self.moments.get(m).copied()
    }

    /// The moment sequence of a point mass: every moment is the monomial
    /// evaluated at the point. Real distributions are pseudoexpectations.
    pub fn from_point(vars: &Arc<VariableSet>, degree: usize, point: &[f64]) -> Result<Self> {
        Self::from_mixture(vars, degree, &[(1.0, point.to_vec())])
    }

    /// Moment sequence of a finite mixture of point masses.
    pub fn from_mixture(
        vars: &Arc<VariableSet>,
        degree: usize,
        atoms: &[(f64, Vec<f64>)],
    ) -> Result<Self> {
        if degree == 0 || degree % 2 != 0 {
            return Err(Error::InvalidParameter("degree must be even".into()));
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if atoms.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "mixture weights must sum to 1".into(),
            ));
        }
        for (_, pt) in atoms {
            if pt.len() != vars.len() {
                return Err(Error::DimensionMismatch(format!(
                    "point has {} coordinates, variable set has {}",
                    pt.len(),
                    vars.len()
                )));
            }
        }
        let mut moments = BTreeMap::new();
        for m in enumerate_monomials(vars.len(), degree) {
            let v = atoms.iter().map(|(w, pt)| w * m.eval(pt)).sum();
            moments.insert(m, v);
        }
        Ok(Pseudoexpectation {
            degree,
            vars: Arc::clone(vars),
            moments,
        })
    }

    /// Linear evaluation of a polynomial under the moment vector.
    pub fn evaluate(&self, p: &Polynomial) -> Result<f64> {
        if !VariableSet::same_set(&self.vars, p.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        if p.degree() > self.degree {
            return Err(Error::DegreeTooSmall {
                required: p.degree(),
                available: self.degree,
            });
        }
        let mut acc = 0.0;
        for (m, c) in p.terms() {
            let v = self.moments.get(m).ok_or(Error::DegreeTooSmall {
                required: m.degree(),
                available: self.degree,
            })?;
            acc += c * v;
        }
        Ok(acc)
    }

    /// First moments of the named coordinates.
    pub fn mean_vector(&self, coords: &[&str]) -> Result<DVector<f64>> {
        if self.degree < 2 {
            return Err(Error::DegreeTooSmall {
                required: 2,
                available: self.degree,
            });
        }
        let mut out = DVector::zeros(coords.len());
        for (j, name) in coords.iter().enumerate() {
            let idx = self
                .vars
                .index_of(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            out[j] = self
                .moments
                .get(&Monomial::var(idx))
                .copied()
                .unwrap_or(0.0);
        }
        Ok(out)
    }

    /// `E~ ||x - mu||^2` over the named coordinates.
    pub fn second_moment_about(&self, coords: &[&str], mu: &DVector<f64>) -> Result<f64> {
        if mu.len() != coords.len() {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} coordinates, expected {}",
                mu.len(),
                coords.len()
            )));
        }
        let mut acc = 0.0;
        for (j, name) in coords.iter().enumerate() {
            let idx = self
                .vars
                .index_of(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            let m1 = self
                .moments
                .get(&Monomial::var(idx))
                .copied()
                .unwrap_or(0.0);
            let m2 = self
                .moments
                .get(&Monomial::from_pairs(vec![(idx as u16, 2)]))
                .copied()
                .unwrap_or(0.0);
            acc += m2 - 2.0 * mu[j] * m1 + mu[j] * mu[j];
        }
        Ok(acc)
    }

    /// Rebuild the moment matrix over the degree <= D/2 basis from the stored
    /// moments (independent of any solver output).
    pub fn moment_matrix(&self) -> DMatrix<f64> {
        let basis = enumerate_monomials(self.vars.len(), self.degree / 2);
        let n = basis.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.moments
                .get(&basis[i].mul(&basis[j]))
                .copied()
                .unwrap_or(0.0)
        })
    }

    /// Independent re-verification: normalization, moment-matrix PSDness,
    /// equality residuals against all admissible multipliers, and localizing
    /// matrix PSDness for every inequality. Separate code path from the
    /// relaxation builder.
    pub fn verify(&self, system: &PolynomialSystem, tol: f64) -> Result<VerifyReport> {
        if !VariableSet::same_set(&self.vars, system.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        let normalization_error =
            (self.moments.get(&Monomial::one()).copied().unwrap_or(0.0) - 1.0).abs();
        let mm = self.moment_matrix();
        let scale = mm.amax().max(1.0);
        let moment_psd_min_eig = SymmetricEigen::new(mm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);

        let mut max_equality_residual = 0.0f64;
        for p in system.equalities() {
            let dp = p.degree();
            for q in enumerate_monomials(self.vars.len(), self.degree.saturating_sub(dp)) {
                let mut acc = 0.0;
                for (m, c) in p.terms() {
                    acc += c * self.moments.get(&m.mul(&q)).copied().unwrap_or(0.0);
                }
                max_equality_residual = max_equality_residual.max(acc.abs());
            }
        }

        let mut min_localizing_eig = f64::INFINITY;
        for p in system.inequalities() {
            let dp = p.degree().min(self.degree);
            let loc_half = (self.degree - dp) / 2;
            let basis = enumerate_monomials(self.vars.len(), loc_half);
            let n = basis.len();
            let loc = DMatrix::from_fn(n, n, |a, b| {
                let qq = basis[a].mul(&basis[b]);
                p.terms()
                    .map(|(m, c)| c * self.moments.get(&m.mul(&qq)).copied().unwrap_or(0.0))
                    .sum::<f64>()
            });
            let loc_scale = loc.amax().max(1.0);
            let eig_min = SymmetricEigen::new(loc)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            min_localizing_eig = min_localizing_eig.min(eig_min / loc_scale * scale);
        }

        Ok(VerifyReport {
            normalization_error,
            moment_psd_min_eig,
            max_equality_residual,
            min_localizing_eig,
            scale,
            tol,
        })
    }
}

/// Result of the independent pseudoexpectation verifier.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub normalization_error: f64,
    pub moment_psd_min_eig: f64,
    pub max_equality_residual: f64,
    /// +infinity when the system has no inequalities.
    pub min_localizing_eig: f64,
    pub scale: f64,
    pub tol: f64,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.normalization_error <= self.tol * self.scale
            && self.moment_psd_min_eig >= -self.tol * self.scale
            && self.max_equality_residual <= self.tol * self.scale
            && (self.min_localizing_eig.is_infinite()
                || self.min_localizing_eig >= -self.tol * self.scale)
    }
}

/// All monomials over `nvars` variables with degree <= `max_deg`, sorted
/// graded-lexicographically (so the degree <= d' subset is a prefix).
pub fn enumerate_monomials(nvars: usize, max_deg: usize) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut exps = vec![0u8; nvars];
    fn gen(nvars: usize, var: usize, remaining: usize, exps: &mut Vec<u8>, out: &mut Vec<Monomial>) {
        if var == nvars {
            let pairs: Vec<(u16, u8)> = exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| (v as u16, e))
                .collect();
            out.push(Monomial::from_pairs(pairs));
            return;
        }
        for e in 0..=remaining {
            exps[var] = e as u8;
            gen(nvars, var + 1, remaining - e, exps, out);
        }
        exps[var] = 0;
    }
    gen(nvars, 0, max_deg, &mut exps, &mut out);
    out.sort();
    out
}

/// Number of monomials of degree <= `max_deg` over `nvars` variables.
pub fn count_monomials(nvars: usize, max_deg: usize) -> usize {
    let mut count: u128 = 1;
    for i in 1..=max_deg {
        count = count * (nvars + i) as u128 / i as u128;
        if count > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    count as usize
}

/// Options controlling relaxation size and the underlying solver.
#[derive(Debug, Clone)]
pub struct RelaxationOptions {
    pub monomial_cap: usize,
    pub solve: SolveOptions,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            monomial_cap: DEFAULT_MONOMIAL_CAP,
            solve: SolveOptions::default(),
        }
    }
}

/// A built moment relaxation: the SDP plus the decoding map.
#[derive(Debug)]
pub struct MomentRelaxation {
    pub problem: SdpProblem,
    vars: Arc<VariableSet>,
    degree: usize,
    basis: Vec<Monomial>,
    canonical: BTreeMap<Monomial, (usize, usize)>,
    moment_count: usize,
}

impl MomentRelaxation {
    pub fn moment_count(&self) -> usize {
        self.moment_count
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    fn entry_coeff(c: &mut Constraint, coords: (usize, usize), coeff: f64) {
        let (i, j) = coords;
        if i == j {
            c.push_psd(i, j, coeff);
        } else {
            // off-diagonal entries count twice in <A, X>
            c.push_psd(i, j, coeff / 2.0);
        }
    }

    fn moment_constraint(&self, terms: &[(Monomial, f64)]) -> Constraint {
        let mut c = Constraint::new();
        for (m, coeff) in terms {
            let coords = self.canonical[m];
            Self::entry_coeff(&mut c, coords, *coeff);
        }
        c
    }

    /// Install `objective` (degree <= D) as the SDP objective.
    pub fn set_objective(&mut self, objective: &Polynomial, sense: Sense) -> Result<()> {
        if !VariableSet::same_set(&self.vars, objective.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        if objective.degree() > self.degree {
            return Err(Error::DegreeTooSmall {
                required: objective.degree(),
                available: self.degree,
            });
        }
        let sign = match (self.problem.sense(), sense) {
            (Sense::Minimize, Sense::Minimize) | (Sense::Maximize, Sense::Maximize) => 1.0,
            _ => -1.0,
        };
        for (m, coeff) in objective.terms() {
            let (i, j) = self.canonical[m];
            self.problem.add_cost_psd_entry(i, j, sign * coeff);
        }
        Ok(())
    }

    /// Decode an SDP solution into the pseudoexpectation it represents.
    pub fn decode(&self, sol: &SdpSolution) -> Pseudoexpectation {
        let mut moments = BTreeMap::new();
        for (m, &(i, j)) in &self.canonical {
            moments.insert(m.clone(), sol.primal_psd[(i, j)]);
        }
        Pseudoexpectation {
            degree: self.degree,
            vars: Arc::clone(&self.vars),
            moments,
        }
    }
}

/// Build the degree-`degree` moment relaxation of `system`. Feasible SDP
/// points decode to pseudoexpectations satisfying the system at solver
/// tolerance.
pub fn build_relaxation(
    system: &PolynomialSystem,
    degree: usize,
    opts: &RelaxationOptions,
) -> Result<MomentRelaxation> {
    if degree == 0 || degree % 2 != 0 {
        return Err(Error::InvalidParameter(
            "relaxation degree must be a positive even integer".into(),
        ));
    }
    let needed = system.max_degree();
    if needed > degree {
        return Err(Error::DegreeTooSmall {
            required: needed,
            available: degree,
        });
    }
    let nvars = system.vars().len();
    let count = count_monomials(nvars, degree);
    if count > opts.monomial_cap {
        return Err(Error::MonomialCapExceeded {
            count,
            cap: opts.monomial_cap,
        });
    }

    let basis = enumerate_monomials(nvars, degree / 2);
    let n0 = basis.len();

    // Canonical moment entries: first occurrence in a fixed scan order.
    let mut canonical: BTreeMap<Monomial, (usize, usize)> = BTreeMap::new();
    let mut ties: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for j in 0..n0 {
        for i in 0..=j {
            let m = basis[i].mul(&basis[j]);
            match canonical.get(&m) {
                None => {
                    canonical.insert(m, (i, j));
                }
                Some(&first) => ties.push(((i, j), first)),
            }
        }
    }
    debug_assert_eq!(canonical.len(), count);

    // Localizing blocks for inequalities needing more than a scalar.
    let mut side = n0;
    let mut loc_blocks: Vec<(usize, usize, Vec<Monomial>)> = Vec::new();
    let mut scalar_ineqs: Vec<usize> = Vec::new();
    for (idx, p) in system.inequalities().iter().enumerate() {
        let half = (degree - p.degree()) / 2;
        let loc_basis = enumerate_monomials(nvars, half);
        if loc_basis.len() <= 1 {
            scalar_ineqs.push(idx);
        } else {
            loc_blocks.push((idx, side, loc_basis.clone()));
            side += loc_basis.len();
        }
    }

    let mut relax = MomentRelaxation {
        problem: SdpProblem::new(side, Sense::Minimize)?,
        vars: Arc::clone(system.vars()),
        degree,
        basis,
        canonical,
        moment_count: count,
    };

    // Normalization E~ 1 = 1 (entry (0,0) is the canonical slot of 1).
    let one = relax.moment_constraint(&[(Monomial::one(), 1.0)]);
    relax.problem.add_equality(one.rhs(1.0))?;

    // Symmetry ties within the moment matrix.
    for (entry, canon) in ties {
        let mut c = Constraint::new();
        MomentRelaxation::entry_coeff(&mut c, entry, 1.0);
        MomentRelaxation::entry_coeff(&mut c, canon, -1.0);
        relax.problem.add_equality(c)?;
    }

    // Equalities: E~[p * q] = 0 for every monomial q with deg(pq) <= D.
    for p in system.equalities() {
        let dp = p.degree();
        for q in enumerate_monomials(nvars, degree - dp) {
            let terms: Vec<(Monomial, f64)> = p.terms().map(|(m, c)| (m.mul(&q), c)).collect();
            let c = relax.moment_constraint(&terms);
            relax.problem.add_equality(c)?;
        }
    }

    // Scalar localizers: E~[p] >= 0 as orthant inequalities.
    for &idx in &scalar_ineqs {
        let p = &system.inequalities()[idx];
        let terms: Vec<(Monomial, f64)> = p.terms().map(|(m, c)| (m.clone(), c)).collect();
        let c = relax.moment_constraint(&terms);
        relax.problem.add_inequality(c, 0.0, IneqDirection::Ge)?;
    }

    // Localizing blocks: tie each entry to its moment expression.
    for (idx, offset, loc_basis) in &loc_blocks {
        let p = &system.inequalities()[*idx];
        for b in 0..loc_basis.len() {
            for a in 0..=b {
                let qq = loc_basis[a].mul(&loc_basis[b]);
                let mut c = Constraint::new();
                MomentRelaxation::entry_coeff(&mut c, (offset + a, offset + b), 1.0);
                for (m, coeff) in p.terms() {
                    let coords = relax.canonical[&m.mul(&qq)];
                    MomentRelaxation::entry_coeff(&mut c, coords, -coeff);
                }
                relax.problem.add_equality(c)?;
            }
        }
    }

    Ok(relax)
}

/// Outcome of a feasibility or optimization run over pseudoexpectations.
#[derive(Debug)]
pub enum SosOutcome {
    Feasible {
        pe: Pseudoexpectation,
        /// Objective value when one was supplied.
        objective: Option<f64>,
        verify: VerifyReport,
    },
    Infeasible {
        measure: f64,
    },
}

/// Build, solve and decode in one step. `objective: None` solves a pure
/// feasibility problem. Returned pseudoexpectations pass the independent
/// verifier; a verification failure is reported as a solver-accuracy error.
pub fn solve_system(
    system: &PolynomialSystem,
    degree: usize,
    objective: Option<&Polynomial>,
    sense: Sense,
    opts: &RelaxationOptions,
) -> Result<SosOutcome> {
    let mut relax = build_relaxation(system, degree, opts)?;
    if let Some(obj) = objective {
        relax.set_objective(obj, sense)?;
    }
    let sol = relax.problem.solve_with(&opts.solve)?;
    match sol.status {
        Status::Optimal => {
            let pe = relax.decode(&sol);
            let verify = pe.verify(system, (opts.solve.tol * 100.0).max(1e-7))?;
            if !verify.ok() {
                return Err(Error::SolverFailure(format!(
                    "decoded pseudoexpectation failed verification: {verify:?}"
                )));
            }
            let objective_value =
                objective.map(|obj| pe.evaluate(obj).expect("objective degree checked at build"));
            Ok(SosOutcome::Feasible {
                pe,
                objective: objective_value,
                verify,
            })
        }
        Status::Infeasible => Ok(SosOutcome::Infeasible {
            measure: sol.infeasibility.unwrap_or(f64::NAN),
        }),
        other => Err(Error::SolverFailure(format!(
            "moment SDP ended with status {other:?} (gap {:.2e}, rp {:.2e})",
            sol.duality_gap, sol.primal_residual
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::VarRole;

    fn one_var() -> Arc<VariableSet> {
        VariableSet::with_roles(vec!["x".into()], vec![VarRole::Center])
    }

    fn poly_x(vars: &Arc<VariableSet>) -> Polynomial {
        Polynomial::var(vars, 0)
    }

    #[test]
    fn monomial_enumeration_counts() {
        assert_eq!(enumerate_monomials(1, 2).len(), 3);
        assert_eq!(enumerate_monomials(2, 2).len(), 6);
        assert_eq!(enumerate_monomials(3, 4).len(), count_monomials(3, 4));
        // graded prefix property
        let all = enumerate_monomials(3, 4);
        let half = enumerate_monomials(3, 2);
        assert_eq!(&all[..half.len()], &half[..]);
    }

    #[test]
    fn basic_relaxation_shape() {
        // {x^2 - 1 = 0}, degree 2: basis {1, x}, moments {1, x, x^2}.
        let vars = one_var();
        let mut sys = PolynomialSystem::new(&vars);
        let x = poly_x(&vars);
        sys.add_equality(x.square().sub(&Polynomial::constant(&vars, 1.0)).unwrap())
            .unwrap();
        let relax = build_relaxation(&sys, 2, &RelaxationOptions::default()).unwrap();
        assert_eq!(relax.basis_len(), 2);
        assert_eq!(relax.moment_count(), 3);
    }

    #[test]
    fn contradictory_system_is_infeasible() {
        // {x^2 = 1, x - 2 >= 0} at degree 2: |E~ x| <= 1 but E~ x >= 2.
        let vars = one_var();
        let mut sys = PolynomialSystem::new(&vars);
        let x = poly_x(&vars);
        sys.add_equality(x.square().sub(&Polynomial::constant(&vars, 1.0)).unwrap())
            .unwrap();
        sys.add_inequality(x.sub(&Polynomial::constant(&vars, 2.0)).unwrap())
            .unwrap();
        let out =
            solve_system(&sys, 2, None, Sense::Minimize, &RelaxationOptions::default()).unwrap();
        match out {
            SosOutcome::Infeasible { measure } => assert!(measure > 1e-7),
            SosOutcome::Feasible { .. } => panic!("expected infeasible"),
        }
    }

    #[test]
    fn hypercube_maximum_is_one() {
        // maximize E~ x over {x^2 = 1} at degree 2 -> 1.
        let vars = one_var();
        let mut sys = PolynomialSystem::new(&vars);
        let x = poly_x(&vars);
        sys.add_equality(x.square().sub(&Polynomial::constant(&vars, 1.0)).unwrap())
            .unwrap();
        let out = solve_system(
            &sys,
            2,
            Some(&x),
            Sense::Maximize,
            &RelaxationOptions::default(),
        )
        .unwrap();
        match out {
            SosOutcome::Feasible { pe, objective, .. } => {
                assert!((objective.unwrap() - 1.0).abs() < 1e-6);
                assert!((pe.evaluate(&x).unwrap() - 1.0).abs() < 1e-6);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn point_mass_moments_verify() {
        let vars = one_var();
        let x = poly_x(&vars);
        let pe = Pseudoexpectation::from_point(&vars, 4, &[0.3]).unwrap();
        let mut sys = PolynomialSystem::new(&vars);
        sys.add_equality(x.square().sub(&Polynomial::constant(&vars, 0.09)).unwrap())
            .unwrap();
        sys.add_inequality(x.clone()).unwrap();
        let report = pe.verify(&sys, 1e-9).unwrap();
        assert!(report.ok(), "{report:?}");
        assert!((pe.evaluate(&x).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(pe.evaluate(&Polynomial::constant(&vars, 1.0)).unwrap(), 1.0);
        // linearity
        let p = x.scale(2.0).add(&Polynomial::constant(&vars, 1.0)).unwrap();
        let direct = pe.evaluate(&p).unwrap();
        let split = 2.0 * pe.evaluate(&x).unwrap() + 1.0;
        assert!((direct - split).abs() < 1e-15);
    }

    #[test]
    fn mixture_mean_vector_and_two_norm_fact() {
        let vars = VariableSet::new(vec!["x1", "x2"]);
        // uniform mixture of point masses at +-e1
        let pe = Pseudoexpectation::from_mixture(
            &vars,
            2,
            &[(0.5, vec![1.0, 0.0]), (0.5, vec![-1.0, 0.0])],
        )
        .unwrap();
        let mean = pe.mean_vector(&["x1", "x2"]).unwrap();
        assert!(mean.norm() < 1e-15);
        let sm = pe
            .second_moment_about(&["x1", "x2"], &DVector::zeros(2))
            .unwrap();
        assert!((sm - 1.0).abs() < 1e-15);

        // point mass at (1,2)
        let pm = Pseudoexpectation::from_point(&vars, 2, &[1.0, 2.0]).unwrap();
        let mv = pm.mean_vector(&["x1", "x2"]).unwrap();
        assert!((mv[0] - 1.0).abs() < 1e-15 && (mv[1] - 2.0).abs() < 1e-15);

        // ||E~x - mu||^2 <= E~||x - mu||^2 for random mu
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let mu = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let lhs = (pe.mean_vector(&["x1", "x2"]).unwrap() - &mu).norm_squared();
            let rhs = pe.second_moment_about(&["x1", "x2"], &mu).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn constraint_monotonicity_on_toy_system() {
        // max E~ x over {4 - x^2 >= 0}, with and without {1 - x >= 0}.
        let vars = one_var();
        let x = poly_x(&vars);
        let four_minus_x2 = Polynomial::constant(&vars, 4.0).sub(&x.square()).unwrap();
        let mut loose = PolynomialSystem::new(&vars);
        loose.add_inequality(four_minus_x2.clone()).unwrap();
        let mut tight = PolynomialSystem::new(&vars);
        tight.add_inequality(four_minus_x2).unwrap();
        tight
            .add_inequality(Polynomial::constant(&vars, 1.0).sub(&x).unwrap())
            .unwrap();
        let opts = RelaxationOptions::default();
        let v_loose = match solve_system(&loose, 2, Some(&x), Sense::Maximize, &opts).unwrap() {
            SosOutcome::Feasible { objective, .. } => objective.unwrap(),
            _ => panic!(),
        };
        let v_tight = match solve_system(&tight, 2, Some(&x), Sense::Maximize, &opts).unwrap() {
            SosOutcome::Feasible { objective, .. } => objective.unwrap(),
            _ => panic!(),
        };
        assert!(v_tight <= v_loose + 1e-6);
        assert!((v_loose - 2.0).abs() < 1e-6);
        assert!((v_tight - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degree_monotonicity_on_toy_system() {
        // max E~ x^2 over {1 - x^2 >= 0} at degrees 2 and 4.
        let vars = one_var();
        let x = poly_x(&vars);
        let mut sys = PolynomialSystem::new(&vars);
        sys.add_inequality(Polynomial::constant(&vars, 1.0).sub(&x.square()).unwrap())
            .unwrap();
        let obj = x.square();
        let opts = RelaxationOptions::default();
        let v2 = match solve_system(&sys, 2, Some(&obj), Sense::Maximize, &opts).unwrap() {
            SosOutcome::Feasible { objective, .. } => objective.unwrap(),
            _ => panic!(),
        };
        let v4 = match solve_system(&sys, 4, Some(&obj), Sense::Maximize, &opts).unwrap() {
            SosOutcome::Feasible { objective, .. } => objective.unwrap(),
            _ => panic!(),
        };
        assert!(v4 <= v2 + 1e-6);
    }

    #[test]
    fn degree_four_ties_and_localizers() {
        // max E~ x over {2 - x >= 0, x - 1 >= 0} at degree 4: exercises
        // non-scalar localizing blocks and symmetry ties; optimum 2.
        let vars = one_var();
        let x = poly_x(&vars);
        let mut sys = PolynomialSystem::new(&vars);
        sys.add_inequality(Polynomial::constant(&vars, 2.0).sub(&x).unwrap())
            .unwrap();
        sys.add_inequality(x.sub(&Polynomial::constant(&vars, 1.0)).unwrap())
            .unwrap();
        let out = solve_system(
            &sys,
            4,
            Some(&x),
            Sense::Maximize,
            &RelaxationOptions::default(),
        )
        .unwrap();
        match out {
            SosOutcome::Feasible { pe, objective, .. } => {
                assert!((objective.unwrap() - 2.0).abs() < 1e-5);
                let x3 = pe.moment(&Monomial::from_pairs(vec![(0, 3)])).unwrap();
                assert!((x3 - 8.0).abs() < 1e-3, "x3 = {x3}");
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn monomial_cap_is_enforced() {
        let vars = VariableSet::new(vec!["a", "b", "c"]);
        let mut sys = PolynomialSystem::new(&vars);
        sys.add_equality(Polynomial::var(&vars, 0)).unwrap();
        let opts = RelaxationOptions {
            monomial_cap: 5,
            ..Default::default()
        };
        match build_relaxation(&sys, 2, &opts) {
            Err(Error::MonomialCapExceeded { count, cap }) => {
                assert_eq!(cap, 5);
                assert_eq!(count, 10);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn degree_too_small_is_reported() {
        let vars = one_var();
        let x = poly_x(&vars);
        let mut sys = PolynomialSystem::new(&vars);
        sys.add_equality(x.square().mul(&x.square()).unwrap())
            .unwrap();
        match build_relaxation(&sys, 2, &RelaxationOptions::default()) {
            Err(Error::DegreeTooSmall {
                required,
                available,
            }) => {
                assert_eq!(required, 4);
                assert_eq!(available, 2);
            }
            other => panic!("expected degree error, got {other:?}"),
        }
    }
}
