//! Centrality certification: the exact low-dimensional oracle, the
//! centrality SDP over (d+k+1)-sided PSD matrices, the 2->1-norm SDP with its
//! exact enumeration oracle, and the bounded-differences property.
//!
//! A point `x` is (r,p)-central for `Z_1..Z_k` when every unit direction `u`
//! has at most `pk` indices with `<Z_i - x, u> >= r`. The SDP relaxes the
//! quadratic program computing the worst direction; its value upper-bounds
//! the true fraction, so a small SDP value certifies centrality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sdp::{Constraint, IneqDirection, SdpProblem, SdpSolution, Sense, SolveOptions, Status};

/// Maximum dimension for the exact direction-sweep oracle.
pub const ORACLE_MAX_DIM: usize = 2;
/// Maximum row count for exact 2->1 norm enumeration.
pub const NORM21_MAX_ROWS: usize = 20;

/// `sqrt(pi/2)`, the tightness factor of the 2->1 SDP.
pub fn nesterov_constant() -> f64 {
    std::f64::consts::FRAC_PI_2.sqrt()
}

/// Vectors `Z_1..Z_k`, a candidate center and a radius.
#[derive(Debug, Clone)]
pub struct CentralityInstance {
    pub z: Vec<DVector<f64>>,
    pub x: DVector<f64>,
    pub r: f64,
}

impl CentralityInstance {
    pub fn new(z: Vec<DVector<f64>>, x: DVector<f64>, r: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidParameter("need k >= 1 vectors".into()));
        }
        let d = x.len();
        if d == 0 {
            return Err(Error::InvalidParameter("need d >= 1".into()));
        }
        for (i, zi) in z.iter().enumerate() {
            if zi.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "Z_{i} has dimension {}, center has {}",
                    zi.len(),
                    d
                )));
            }
            if zi.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("Z_{i} not finite")));
            }
        }
        if !x.iter().all(|v| v.is_finite()) || !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter(
                "center and radius must be finite, r >= 0".into(),
            ));
        }
        Ok(CentralityInstance { z, x, r })
    }

    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Centered rows Z_i - x.
    pub fn centered(&self) -> Vec<DVector<f64>> {
        self.z.iter().map(|z| z - &self.x).collect()
    }
}

/// Optimal value and blocks of the centrality SDP, plus the raw solution for
/// witness extraction.
#[derive(Debug, Clone)]
pub struct CentralityValue {
    /// Optimal `(1/k) sum b_i`, in `[0 - tol, 1 + tol]`.
    pub value: f64,
    pub b_block: DMatrix<f64>,
    pub w_block: DMatrix<f64>,
    pub u_block: DMatrix<f64>,
    pub b_vec: DVector<f64>,
    pub u_vec: DVector<f64>,
    /// Full solver output (duals feed witness extraction).
    pub solution: SdpSolution,
    /// The instance this value was computed for.
    pub instance: CentralityInstance,
    pub tol: f64,
}

/// Outcome of the certification decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certification {
    Yes,
    DontKnow,
}

/// Exact minimum p such that `x` is (r,p)-central, by direction enumeration.
/// Only implemented for d <= 2 where the critical directions are finite.
pub fn centrality_oracle_exact(instance: &CentralityInstance) -> Result<f64> {
    let d = instance.dim();
    if d > ORACLE_MAX_DIM {
        return Err(Error::OracleDimension {
            max: ORACLE_MAX_DIM,
            got: d,
        });
    }
    let w = instance.centered();
    let k = instance.k() as f64;
    let r = instance.r;
    let scale = w
        .iter()
        .map(|v| v.norm())
        .fold(instance.r.abs(), f64::max)
        .max(1.0);
    let fuzz = 1e-12 * scale;
    let count_along = |u: &DVector<f64>| -> usize {
        w.iter().filter(|wi| wi.dot(u) - r >= -fuzz).count()
    };

    if d == 1 {
        let pos = count_along(&DVector::from_vec(vec![1.0]));
        let neg = count_along(&DVector::from_vec(vec![-1.0]));
        return Ok(pos.max(neg) as f64 / k);
    }

    // d == 2: the count is piecewise constant in the angle and changes only
    // where some <w_i, u(theta)> = r.
    let mut criticals: Vec<f64> = Vec::new();
    for wi in &w {
        let norm = wi.norm();
        if norm < r || norm == 0.0 {
            continue;
        }
        let phi = wi[1].atan2(wi[0]);
        let psi = (r / norm).clamp(-1.0, 1.0).acos();
        for theta in [phi - psi, phi + psi] {
            criticals.push(theta.rem_euclid(std::f64::consts::TAU));
        }
    }
    if criticals.is_empty() {
        criticals.push(0.0);
    }
    criticals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut probes = criticals.clone();
    for pair in criticals.windows(2) {
        probes.push((pair[0] + pair[1]) / 2.0);
    }
    let first = criticals.first().unwrap();
    let last = criticals.last().unwrap();
    probes.push(((last + first + std::f64::consts::TAU) / 2.0).rem_euclid(std::f64::consts::TAU));

    let mut best = 0usize;
    for theta in probes {
        let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        best = best.max(count_along(&u));
    }
    Ok(best as f64 / k)
}

/// Index layout of the centrality SDP's PSD block: slot 0 is the leading 1,
/// slots `1..=k` the b coordinates, slots `k+1..=k+d` the u coordinates.
#[derive(Debug, Clone, Copy)]
pub struct CentralityLayout {
    pub k: usize,
    pub d: usize,
}

impl CentralityLayout {
    pub fn side(&self) -> usize {
        1 + self.k + self.d
    }
    pub fn b(&self, i: usize) -> usize {
        1 + i
    }
    pub fn u(&self, j: usize) -> usize {
        1 + self.k + j
    }
}

/// Build the centrality SDP. Constraint order, relied on by witness
/// extraction:
/// `[Y_00 = 1, B_11 <= 1 .. B_kk <= 1, Tr U <= 1, threshold_1 .. threshold_k]`.
pub fn build_centrality_sdp(
    instance: &CentralityInstance,
) -> Result<(SdpProblem, CentralityLayout)> {
    let k = instance.k();
    let d = instance.dim();
    let layout = CentralityLayout { k, d };
    let mut p = SdpProblem::new(layout.side(), Sense::Maximize)?;
    for i in 0..k {
        p.add_cost_psd_entry(0, layout.b(i), 1.0 / k as f64);
    }
    p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(1.0))?;
    for i in 0..k {
        p.add_inequality(
            Constraint::new().psd_entry(layout.b(i), layout.b(i), 1.0),
            1.0,
            IneqDirection::Le,
        )?;
    }
    let mut tr_u = Constraint::new();
    for j in 0..d {
        tr_u.push_psd(layout.u(j), layout.u(j), 1.0);
    }
    p.add_inequality(tr_u, 1.0, IneqDirection::Le)?;
    let centered = instance.centered();
    for i in 0..k {
        let mut c = Constraint::new();
        for j in 0..d {
            // coefficient 1 on the single entry Y[b_i, u_j]
            c.push_psd(layout.b(i), layout.u(j), centered[i][j] / 2.0);
        }
        c.push_psd(0, layout.b(i), -instance.r / 2.0);
        p.add_inequality(c, 0.0, IneqDirection::Ge)?;
    }
    Ok((p, layout))
}

/// Solve the centrality SDP and unpack the blocks of the optimal Y.
pub fn solve_centrality_sdp(instance: &CentralityInstance, tol: f64) -> Result<CentralityValue> {
    let (problem, layout) = build_centrality_sdp(instance)?;
    let sol = problem.solve_with(&SolveOptions {
        tol,
        ..SolveOptions::default()
    })?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "centrality SDP ended with status {:?} on k={}, d={}, r={}",
            sol.status,
            instance.k(),
            instance.dim(),
            instance.r
        )));
    }
    let (k, d) = (layout.k, layout.d);
    let y = &sol.primal_psd;
    let mut b_block = DMatrix::zeros(k, k);
    let mut w_block = DMatrix::zeros(k, d);
    let mut u_block = DMatrix::zeros(d, d);
    let mut b_vec = DVector::zeros(k);
    let mut u_vec = DVector::zeros(d);
    for i in 0..k {
        b_vec[i] = y[(0, layout.b(i))];
        for j in 0..k {
            b_block[(i, j)] = y[(layout.b(i), layout.b(j))];
        }
        for j in 0..d {
            w_block[(i, j)] = y[(layout.b(i), layout.u(j))];
        }
    }
    for i in 0..d {
        u_vec[i] = y[(0, layout.u(i))];
        for j in 0..d {
            u_block[(i, j)] = y[(layout.u(i), layout.u(j))];
        }
    }
    Ok(CentralityValue {
        value: sol.objective,
        b_block,
        w_block,
        u_block,
        b_vec,
        u_vec,
        solution: sol,
        instance: instance.clone(),
        tol,
    })
}

/// Certification decision rule: YES iff the SDP value is at most `p`.
/// YES is sound because the SDP value dominates the exact centrality
/// fraction.
pub fn certify(
    instance: &CentralityInstance,
    p: f64,
    tol: f64,
) -> Result<(Certification, CentralityValue)> {
    if !(0.0 < p && p <= 1.0) {
        return Err(Error::InvalidParameter("p must lie in (0, 1]".into()));
    }
    let value = solve_centrality_sdp(instance, tol)?;
    let cert = if value.value <= p {
        Certification::Yes
    } else {
        Certification::DontKnow
    };
    Ok((cert, value))
}

/// Exact 2->1 norm by sign enumeration:
/// `||A||_{2->1} = max_{sigma in {+-1}^k} ||A^T sigma||`.
pub fn norm21_exact(a: &DMatrix<f64>) -> Result<f64> {
    let k = a.nrows();
    if k > NORM21_MAX_ROWS {
        return Err(Error::Norm21Rows {
            max: NORM21_MAX_ROWS,
            got: k,
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let d = a.ncols();
    // Gray-code walk over sign patterns; sigma and -sigma agree, so fixing
    // one sign halves the work.
    let mut v = DVector::zeros(d);
    for i in 0..k {
        v += a.row(i).transpose();
    }
    let mut best: f64 = v.norm();
    let mut signs = vec![1.0f64; k];
    let total: u64 = 1u64 << (k - 1);
    let mut prev_gray = 0u64;
    for t in 1..total {
        let gray = t ^ (t >> 1);
        let flip = (gray ^ prev_gray).trailing_zeros() as usize;
        prev_gray = gray;
        let delta = -2.0 * signs[flip];
        signs[flip] = -signs[flip];
        for j in 0..d {
            v[j] += delta * a[(flip, j)];
        }
        best = best.max(v.norm());
    }
    Ok(best)
}

/// 2->1-norm SDP relaxation value: `max <R, A>` over block matrices
/// `X(S, R, U) >= 0` with unit S-diagonal and `Tr U <= 1`. Sandwiched between
/// the exact norm and `sqrt(pi/2)` times it.
pub fn norm21_sdp(a: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let k = a.nrows();
    let d = a.ncols();
    if k == 0 || d == 0 || a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut p = SdpProblem::new(k + d, Sense::Maximize)?;
    for i in 0..k {
        for j in 0..d {
            p.add_cost_psd_entry(i, k + j, a[(i, j)]);
        }
    }
    for i in 0..k {
        p.add_equality(Constraint::new().psd_entry(i, i, 1.0).rhs(1.0))?;
    }
    let mut tr_u = Constraint::new();
    for j in 0..d {
        tr_u.push_psd(k + j, k + j, 1.0);
    }
    p.add_inequality(tr_u, 1.0, IneqDirection::Le)?;
    let sol = p.solve_with(&SolveOptions {
        tol,
        ..SolveOptions::default()
    })?;
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure(format!(
            "2->1 SDP ended with status {:?} on {}x{} matrix",
            sol.status, k, d
        )));
    }
    Ok(sol.objective)
}

/// `|SDP(Z) - SDP(Z with Z_i replaced)|`; at most 1/k by the row-deletion
/// argument, up to solver tolerance.
pub fn bounded_difference_gap(
    instance: &CentralityInstance,
    i: usize,
    z_replacement: &DVector<f64>,
    tol: f64,
) -> Result<f64> {
    if i >= instance.k() {
        return Err(Error::InvalidParameter(format!(
            "index {i} out of range for k={}",
            instance.k()
        )));
    }
    if z_replacement.len() != instance.dim() {
        return Err(Error::DimensionMismatch(format!(
            "replacement has dimension {}, instance has {}",
            z_replacement.len(),
            instance.dim()
        )));
    }
    let base = solve_centrality_sdp(instance, tol)?;
    let mut other = instance.clone();
    other.z[i] = z_replacement.clone();
    let perturbed = solve_centrality_sdp(&other, tol)?;
    Ok((base.value - perturbed.value).abs())
}

/// Monte Carlo comparison of the mean exact 2->1 norm against the bound
/// `2 sqrt(k Tr Sigma) + k sqrt(||Sigma||)` for centered rows.
#[derive(Debug, Clone)]
pub struct Norm21Report {
    pub empirical_mean: f64,
    pub bound: f64,
    /// empirical / bound; 0 for the degenerate zero-covariance case.
    pub ratio: f64,
    pub trials: usize,
}

/// The sampler must return `k` centered d-vectors per trial (the bound is
/// stated for mean-zero rows with covariance `Sigma`).
pub fn empirical_norm21_bound<F>(
    mut sampler: F,
    trace_sigma: f64,
    norm_sigma: f64,
    k: usize,
    trials: usize,
) -> Result<Norm21Report>
where
    F: FnMut(usize) -> Vec<DVector<f64>>,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let mut total = 0.0;
    for t in 0..trials {
        let rows = sampler(t);
        if rows.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "sampler returned {} rows, expected {k}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        let mut a = DMatrix::zeros(k, d);
        for (i, row) in rows.iter().enumerate() {
            a.row_mut(i).copy_from(&row.transpose());
        }
        total += norm21_exact(&a)?;
    }
    let empirical_mean = total / trials as f64;
    let bound = 2.0 * (k as f64 * trace_sigma).sqrt() + k as f64 * norm_sigma.sqrt();
    let ratio = if bound > 0.0 {
        empirical_mean / bound
    } else if empirical_mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Norm21Report {
        empirical_mean,
        bound,
        ratio,
        trials,
    })
}
