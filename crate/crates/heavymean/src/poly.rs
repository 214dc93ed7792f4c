//! Sparse multivariate polynomial arithmetic over a fixed, named variable set,
//! plus Gram-factored sum-of-squares terms.
//!
//! Coefficients are `f64`; identity checks compare coefficients up to a
//! tolerance scaled by the largest input coefficient. Monomials are ordered
//! graded-lexicographically over the variable order fixed at construction.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Role of a variable inside a larger system. Mostly informational; a few
/// consumers (witness substitution, mean extraction) look variables up by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    /// Bucket indicator b_i.
    BucketIndicator,
    /// Direction coordinate v_j.
    Direction,
    /// Threshold multiplier alpha_i.
    AlphaMult,
    /// Diagonal multiplier beta_i.
    BetaMult,
    /// Gram entry sigma_ij.
    SigmaEntry,
    /// Estimated center coordinate x_j.
    Center,
    /// Level indicator a_{i,t}.
    LevelIndicator,
    /// Anything else.
    Generic,
}

/// Ordered list of named variables. The order is fixed after construction;
/// monomial comparisons and moment indices depend on it.
#[derive(Debug, Clone)]
pub struct VariableSet {
    names: Vec<String>,
    roles: Vec<VarRole>,
}

impl VariableSet {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Arc<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let roles = vec![VarRole::Generic; names.len()];
        Self::with_roles(names, roles)
    }

    pub fn with_roles(names: Vec<String>, roles: Vec<VarRole>) -> Arc<Self> {
        assert_eq!(names.len(), roles.len());
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            assert!(seen.insert(n.clone()), "duplicate variable name `{n}`");
        }
        Arc::new(VariableSet { names, roles })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn role(&self, idx: usize) -> VarRole {
        self.roles[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of all variables carrying `role`, in variable order.
    pub fn indices_with_role(&self, role: VarRole) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == role).collect()
    }

    pub fn same_set(a: &Arc<VariableSet>, b: &Arc<VariableSet>) -> bool {
        Arc::ptr_eq(a, b) || (a.names == b.names)
    }
}

/// Sparse monomial: sorted `(variable index, exponent)` pairs, exponents > 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(u16, u8)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(idx: usize) -> Self {
        Monomial(vec![(idx as u16, 1)])
    }

    pub fn from_pairs(mut pairs: Vec<(u16, u8)>) -> Self {
        pairs.retain(|&(_, e)| e > 0);
        pairs.sort_unstable_by_key(|&(v, _)| v);
        Monomial(pairs)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&(_, e)| e as usize).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(u16, u8)] {
        &self.0
    }

    pub fn exponent_of(&self, var: usize) -> u8 {
        self.0
            .iter()
            .find(|&&(v, _)| v as usize == var)
            .map(|&(_, e)| e)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(u16, u8)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Split the monomial into the part supported on `mask` and the rest.
    pub fn split(&self, mask: &[bool]) -> (Monomial, Monomial) {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for &(v, e) in &self.0 {
            if mask[v as usize] {
                inside.push((v, e));
            } else {
                outside.push((v, e));
            }
        }
        (Monomial(inside), Monomial(outside))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|&(v, e)| point[v as usize].powi(e as i32))
            .product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Graded lexicographic: lower total degree first, then lexicographic on the
// dense exponent vector (earlier variables weigh more).
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Within a degree: the monomial with the higher exponent on the
        // earliest differing variable sorts first.
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.0.get(i), other.0.get(j)) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Greater,
                (Some(_), None) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => match va.cmp(&vb) {
                    Ordering::Less => return Ordering::Less,
                    Ordering::Greater => return Ordering::Greater,
                    Ordering::Equal => match eb.cmp(&ea) {
                        Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                        ord => return ord,
                    },
                },
            }
        }
    }
}

/// Sparse polynomial with real coefficients over a shared [`VariableSet`].
/// Zero coefficients are never stored.
#[derive(Debug, Clone)]
pub struct Polynomial {
    vars: Arc<VariableSet>,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(vars: &Arc<VariableSet>) -> Self {
        Polynomial {
            vars: Arc::clone(vars),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &Arc<VariableSet>, c: f64) -> Self {
        let mut p = Self::zero(vars);
        if c != 0.0 {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn var(vars: &Arc<VariableSet>, idx: usize) -> Self {
        assert!(idx < vars.len());
        let mut p = Self::zero(vars);
        p.terms.insert(Monomial::var(idx), 1.0);
        p
    }

    pub fn var_named(vars: &Arc<VariableSet>, name: &str) -> Result<Self> {
        let idx = vars
            .index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        Ok(Self::var(vars, idx))
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, &c| a.max(c.abs()))
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Occupied(mut e) => {
                let v = e.get_mut();
                *v += c;
                if *v == 0.0 {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    fn check_same_vars(&self, other: &Polynomial) -> Result<()> {
        if VariableSet::same_set(&self.vars, &other.vars) {
            Ok(())
        } else {
            Err(Error::VariableSetMismatch)
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Self::zero(&self.vars);
        if s == 0.0 {
            return out;
        }
        for (m, c) in self.terms() {
            out.terms.insert(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_same_vars(other)?;
        let mut out = Self::zero(&self.vars);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn square(&self) -> Polynomial {
        self.mul(self).expect("same variable set")
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.vars.len());
        self.terms().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Substitute constants for a subset of variables, returning a polynomial
    /// over the same variable set (the substituted variables no longer occur).
    pub fn partial_eval(&self, assignment: &[(usize, f64)]) -> Polynomial {
        let mut values = vec![None; self.vars.len()];
        for &(idx, v) in assignment {
            values[idx] = Some(v);
        }
        let mut out = Self::zero(&self.vars);
        for (m, c) in self.terms() {
            let mut coeff = c;
            let mut rest = Vec::new();
            for &(v, e) in m.pairs() {
                match values[v as usize] {
                    Some(val) => coeff *= val.powi(e as i32),
                    None => rest.push((v, e)),
                }
            }
            out.add_term(Monomial(rest), coeff);
        }
        out
    }

    /// Group terms by their monomial part over `group_vars`, producing for
    /// each group the cofactor polynomial over the remaining variables
    /// (expressed in the same variable set).
    pub fn partition(&self, group_vars: &[usize]) -> Vec<(Monomial, Polynomial)> {
        let mut mask = vec![false; self.vars.len()];
        for &g in group_vars {
            mask[g] = true;
        }
        let mut groups: BTreeMap<Monomial, Polynomial> = BTreeMap::new();
        for (m, c) in self.terms() {
            let (inside, outside) = m.split(&mask);
            groups
                .entry(inside)
                .or_insert_with(|| Self::zero(&self.vars))
                .add_term(outside, c);
        }
        groups.into_iter().collect()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            if !first {
                write!(f, " {} ", if c < 0.0 { "-" } else { "+" })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            write!(f, "{}", c.abs())?;
            for &(v, e) in m.pairs() {
                write!(f, "*{}", self.vars.name(v as usize))?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
            first = false;
        }
        Ok(())
    }
}

/// Max absolute coefficient difference between `lhs` and `rhs` over the union
/// of their monomials; zero iff the polynomials are identical.
pub fn identity_residual(lhs: &Polynomial, rhs: &Polynomial) -> Result<f64> {
    let diff = lhs.sub(rhs)?;
    Ok(diff.max_abs_coeff())
}

/// Relative identity tolerance used by default: absolute 1e-9 scaled by the
/// largest coefficient magnitude among the inputs.
pub fn identity_tol(lhs: &Polynomial, rhs: &Polynomial) -> f64 {
    1e-9 * lhs.max_abs_coeff().max(rhs.max_abs_coeff()).max(1.0)
}

/// A sum of squares of affine forms over the basis `(1, listed variables)`:
/// `sum_i <sigma_i, (1, w)>^2` where `w` are the basis variables in order.
/// The Gram matrix `sum_i sigma_i sigma_i^T` is PSD by construction.
#[derive(Debug, Clone)]
pub struct SosGramTerm {
    vars: Arc<VariableSet>,
    /// Variable indices forming the basis after the leading constant slot.
    basis: Vec<usize>,
    /// Each vector has length `1 + basis.len()`.
    vectors: Vec<Vec<f64>>,
}

impl SosGramTerm {
    pub fn new(vars: &Arc<VariableSet>, basis: Vec<usize>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let want = 1 + basis.len();
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != want {
                return Err(Error::DimensionMismatch(format!(
                    "gram vector {i} has length {}, basis needs {want}",
                    v.len()
                )));
            }
        }
        for &b in &basis {
            if b >= vars.len() {
                return Err(Error::DimensionMismatch(format!(
                    "basis index {b} out of range for {} variables",
                    vars.len()
                )));
            }
        }
        Ok(SosGramTerm {
            vars: Arc::clone(vars),
            basis,
            vectors,
        })
    }

    pub fn empty(vars: &Arc<VariableSet>, basis: Vec<usize>) -> Self {
        SosGramTerm {
            vars: Arc::clone(vars),
            basis,
            vectors: Vec::new(),
        }
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn push_vector(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != 1 + self.basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "gram vector has length {}, basis needs {}",
                v.len(),
                1 + self.basis.len()
            )));
        }
        self.vectors.push(v);
        Ok(())
    }

    /// Add a square `(sqrt(c) * w_slot)^2`, i.e. `c * basis_slot^2`, where
    /// slot 0 is the constant. Requires `c >= 0`.
    pub fn push_scaled_square(&mut self, slot: usize, c: f64) {
        assert!(c >= 0.0, "push_scaled_square needs a nonnegative scale");
        if c == 0.0 {
            return;
        }
        let mut v = vec![0.0; 1 + self.basis.len()];
        v[slot] = c.sqrt();
        self.vectors.push(v);
    }

    /// The Gram matrix `sum_i sigma_i sigma_i^T` (PSD by construction).
    pub fn gram_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = 1 + self.basis.len();
        let mut g = nalgebra::DMatrix::zeros(n, n);
        for v in &self.vectors {
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += v[i] * v[j];
                }
            }
        }
        g
    }

    /// Expand to the degree-<=2 polynomial `sum_i <sigma_i, (1, w)>^2`.
    pub fn expand(&self) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        let monoms: Vec<Monomial> = std::iter::once(Monomial::one())
            .chain(self.basis.iter().map(|&b| Monomial::var(b)))
            .collect();
        let g = self.gram_matrix();
        let n = monoms.len();
        for i in 0..n {
            for j in 0..n {
                let c = g[(i, j)];
                if c != 0.0 {
                    out.add_term(monoms[i].mul(&monoms[j]), c);
                }
            }
        }
        out
    }

    /// Rebuild a Gram term from an explicit PSD Gram matrix by
    /// eigendecomposition, clipping eigenvalues in `(-clip_tol, 0)` to zero.
    /// Eigenvalues below `-clip_tol` are also clipped, and the largest clipped
    /// magnitude is returned alongside the term.
    pub fn from_gram(
        vars: &Arc<VariableSet>,
        basis: Vec<usize>,
        gram: &nalgebra::DMatrix<f64>,
    ) -> (Self, f64) {
        let n = gram.nrows();
        assert_eq!(n, 1 + basis.len());
        let sym = (gram + gram.transpose()).scale(0.5);
        let eig = nalgebra::SymmetricEigen::new(sym);
        let mut vectors = Vec::new();
        let mut clipped: f64 = 0.0;
        for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > 0.0 {
                let col = eig.eigenvectors.column(idx);
                vectors.push(col.iter().map(|&c| c * lambda.sqrt()).collect());
            } else {
                clipped = clipped.max(-lambda);
            }
        }
        (
            SosGramTerm {
                vars: Arc::clone(vars),
                basis,
                vectors,
            },
            clipped,
        )
    }
}

/// SoS Cauchy-Schwarz: given equal-length vectors of degree-<=1 polynomials,
/// return the majorant `||x||^2 + ||y||^2` of `2<x,y>` together with the Gram
/// term realizing `||x - y||^2 = ||x||^2 + ||y||^2 - 2<x,y>`.
pub fn cauchy_schwarz_majorize(
    x_part: &[Polynomial],
    y_part: &[Polynomial],
) -> Result<(Polynomial, SosGramTerm)> {
    if x_part.len() != y_part.len() {
        return Err(Error::DimensionMismatch(format!(
            "vector lengths differ: {} vs {}",
            x_part.len(),
            y_part.len()
        )));
    }
    if x_part.is_empty() {
        return Err(Error::DimensionMismatch("empty vectors".into()));
    }
    let vars = x_part[0].vars();
    let mut majorant = Polynomial::zero(vars);
    for p in x_part.iter().chain(y_part.iter()) {
        if !VariableSet::same_set(vars, p.vars()) {
            return Err(Error::VariableSetMismatch);
        }
        if p.degree() > 1 {
            return Err(Error::DegreeTooSmall {
                required: p.degree(),
                available: 1,
            });
        }
        majorant = majorant.add(&p.square())?;
    }
    // Gram vectors: one per coordinate, the affine form x_i - y_i over the
    // full variable basis.
    let basis: Vec<usize> = (0..vars.len()).collect();
    let mut term = SosGramTerm::empty(vars, basis);
    for (xi, yi) in x_part.iter().zip(y_part.iter()) {
        let diff = xi.sub(yi)?;
        let mut v = vec![0.0; 1 + vars.len()];
        for (m, c) in diff.terms() {
            if m.is_one() {
                v[0] = c;
            } else {
                let (var, e) = m.pairs()[0];
                debug_assert_eq!(e, 1);
                v[1 + var as usize] = c;
            }
        }
        term.push_vector(v)?;
    }
    Ok((majorant, term))
}
