//! Infeasible-start primal-dual interior point method with Nesterov-Todd
//! scaling and a Mehrotra-style predictor-corrector, over the cone
//! PSD x nonnegative orthant. Infeasibility is decided by a phase-1 problem
//! that minimizes the multiple of the initial residual still needed.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{SdpProblem, SdpSolution, Sense, Status};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Feasibility and relative-gap tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Hard cap on the PSD side length (dense solver).
    pub psd_dim_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 150,
            psd_dim_cap: 400,
        }
    }
}

/// Constraint data expanded for fast inner products: every off-diagonal
/// upper-triangle triplet is mirrored.
struct ExpandedCon {
    entries: Vec<(usize, usize, f64)>,
    lin: Vec<(usize, f64)>,
    rhs: f64,
}

impl ExpandedCon {
    fn from_constraint(c: &super::Constraint) -> Self {
        let mut entries = Vec::with_capacity(c.psd.len() * 2);
        for &(r, col, v) in &c.psd {
            entries.push((r, col, v));
            if r != col {
                entries.push((col, r, v));
            }
        }
        ExpandedCon {
            entries,
            lin: c.nonneg.clone(),
            rhs: c.rhs,
        }
    }

    fn dot_mat(&self, m: &DMatrix<f64>) -> f64 {
        let ms = m.as_slice();
        let n = m.nrows();
        let mut acc = 0.0;
        for &(r, c, v) in &self.entries {
            acc += v * ms[c * n + r];
        }
        acc
    }

    fn dot_lin(&self, v: &DVector<f64>) -> f64 {
        self.lin.iter().map(|&(i, c)| c * v[i]).sum()
    }

    fn add_scaled_into(&self, scale: f64, m: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += scale * v;
        }
    }

    fn add_scaled_lin_into(&self, scale: f64, v: &mut DVector<f64>) {
        for &(i, c) in &self.lin {
            v[i] += scale * c;
        }
    }
}

struct Iterate {
    x: DMatrix<f64>,
    s_lin: DVector<f64>,
    y: DVector<f64>,
    s: DMatrix<f64>,
    z_lin: DVector<f64>,
}

struct Model {
    n: usize,
    l: usize,
    m: usize,
    cost: DMatrix<f64>,
    cost_lin: DVector<f64>,
    cons: Vec<ExpandedCon>,
    b: DVector<f64>,
    /// Row equilibration factors: internal constraint i is the original
    /// divided by `row_scale[i]`.
    row_scale: Vec<f64>,
    /// +1 for minimize, -1 for maximize (applied to reported objective).
    sense_sign: f64,
}

pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    if problem.psd_dim() > opts.psd_dim_cap {
        return Err(Error::PsdDimCapExceeded {
            side: problem.psd_dim(),
            cap: opts.psd_dim_cap,
        });
    }
    let model = build_model(problem);
    if model.m == 0 {
        return Ok(solve_unconstrained(&model, opts));
    }
    let outcome = match run_ipm(&model, opts, None, true) {
        IpmOutcome::Converged(sol) => Ok(sol),
        IpmOutcome::Stalled(best) => resolve_stall(&model, opts, best),
        IpmOutcome::Unbounded(sol) => Ok(sol),
    };
    outcome.map(|mut sol| {
        // Map duals back to the original, unequilibrated constraints.
        for i in 0..model.m {
            sol.dual_multipliers[i] /= model.row_scale[i];
        }
        sol.primal_residual = problem.feasibility_residual(&sol.primal_psd, &sol.primal_nonneg);
        sol
    })
}

fn build_model(problem: &SdpProblem) -> Model {
    let sign = match problem.sense() {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut row_scale = Vec::with_capacity(problem.num_constraints());
    let cons: Vec<ExpandedCon> = problem
        .constraints()
        .iter()
        .map(|c| {
            let mut e = ExpandedCon::from_constraint(c);
            let scale = e
                .entries
                .iter()
                .map(|&(_, _, v)| v.abs())
                .chain(e.lin.iter().map(|&(_, v)| v.abs()))
                .fold(0.0f64, f64::max);
            let scale = if scale > 0.0 { scale } else { 1.0 };
            for ent in &mut e.entries {
                ent.2 /= scale;
            }
            for ent in &mut e.lin {
                ent.1 /= scale;
            }
            e.rhs /= scale;
            row_scale.push(scale);
            e
        })
        .collect();
    let b = DVector::from_iterator(cons.len(), cons.iter().map(|c| c.rhs));
    Model {
        n: problem.psd_dim(),
        l: problem.nonneg_dim(),
        m: cons.len(),
        cost: problem.cost_psd().scale(sign),
        cost_lin: problem.cost_nonneg().scale(sign),
        cons,
        b,
        row_scale,
        sense_sign: sign,
    }
}

fn solve_unconstrained(model: &Model, opts: &SolveOptions) -> SdpSolution {
    // min <C,X> over the cone: 0 at the origin when the cost is conic-
    // nonnegative, otherwise unbounded below.
    let eig = SymmetricEigen::new(model.cost.clone());
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let min_lin = model
        .cost_lin
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let status = if min_eig >= -opts.tol && (model.l == 0 || min_lin >= -opts.tol) {
        Status::Optimal
    } else {
        Status::Unbounded
    };
    SdpSolution {
        status,
        primal_psd: DMatrix::zeros(model.n, model.n),
        primal_nonneg: DVector::zeros(model.l),
        dual_multipliers: DVector::zeros(0),
        dual_slack_psd: model.cost.clone(),
        dual_slack_nonneg: model.cost_lin.clone(),
        objective: 0.0,
        duality_gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        perturbation: None,
        infeasibility: None,
    }
}

enum IpmOutcome {
    Converged(SdpSolution),
    Stalled(SdpSolution),
    Unbounded(SdpSolution),
}

fn initial_iterate(model: &Model, start: Option<(DMatrix<f64>, DVector<f64>)>) -> Iterate {
    let (n, l, m) = (model.n, model.l, model.m);
    let b_inf = model.b.amax();
    let cost_inf = model
        .cost
        .amax()
        .max(if l > 0 { model.cost_lin.amax() } else { 0.0 });
    let tau_p = 1.0 + b_inf;
    let tau_d = 1.0 + cost_inf;
    let (x, s_lin) = match start {
        Some((x0, s0)) => (x0, s0),
        None => (
            DMatrix::identity(n, n).scale(tau_p),
            DVector::from_element(l, tau_p),
        ),
    };
    Iterate {
        x,
        s_lin,
        y: DVector::zeros(m),
        s: DMatrix::identity(n, n).scale(tau_d),
        z_lin: DVector::from_element(l, tau_d),
    }
}

fn run_ipm(
    model: &Model,
    opts: &SolveOptions,
    start: Option<(DMatrix<f64>, DVector<f64>)>,
    _primal_start_feasible: bool,
) -> IpmOutcome {
    let (n, l, m) = (model.n, model.l, model.m);
    let mut it = initial_iterate(model, start);
    let b_scale = 1.0 + model.b.amax();
    let cost_scale = 1.0
        + model
            .cost
            .amax()
            .max(if l > 0 { model.cost_lin.amax() } else { 0.0 })
            .max(
                model
                    .cons
                    .iter()
                    .flat_map(|c| c.entries.iter().map(|&(_, _, v)| v.abs()))
                    .fold(0.0, f64::max),
            );

    let mut best_res = f64::INFINITY;
    let mut stall_count = 0usize;
    let mut tiny_steps = 0usize;
    let mut best: Option<SdpSolution> = None;
    let mut best_measure = f64::INFINITY;

    for iter in 0..opts.max_iter {
        // Residuals.
        let mut rp = DVector::zeros(m);
        for (i, c) in model.cons.iter().enumerate() {
            rp[i] = c.rhs - c.dot_mat(&it.x) - c.dot_lin(&it.s_lin);
        }
        let mut rd = model.cost.clone();
        rd -= &it.s;
        for (i, c) in model.cons.iter().enumerate() {
            c.add_scaled_into(-it.y[i], &mut rd);
        }
        // keep rd symmetric despite one-sided accumulation
        rd = symmetrize(&rd);
        let mut rd_lin = model.cost_lin.clone();
        rd_lin -= &it.z_lin;
        for (i, c) in model.cons.iter().enumerate() {
            c.add_scaled_lin_into(-it.y[i], &mut rd_lin);
        }

        let pobj = frob_dot(&model.cost, &it.x) + model.cost_lin.dot(&it.s_lin);
        let dobj = model.b.dot(&it.y);
        let comp = frob_dot(&it.x, &it.s) + it.s_lin.dot(&it.z_lin);
        let mu = comp / (n + l) as f64;

        let rp_rel = rp.amax() / b_scale;
        let rd_rel = rd.amax().max(if l > 0 { rd_lin.amax() } else { 0.0 }) / cost_scale;
        let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));

        if trace_enabled() {
            eprintln!(
                "ipm iter {iter:3} mu {mu:9.2e} rp {rp_rel:9.2e} rd {rd_rel:9.2e} gap {gap_rel:9.2e} pobj {pobj:12.5e} |y| {:9.2e} |X| {:9.2e} |S| {:9.2e}",
                it.y.amax(), it.x.amax(), it.s.amax()
            );
        }

        let sol = SdpSolution {
            status: Status::MaxIter,
            primal_psd: it.x.clone(),
            primal_nonneg: it.s_lin.clone(),
            dual_multipliers: it.y.clone(),
            dual_slack_psd: it.s.clone(),
            dual_slack_nonneg: it.z_lin.clone(),
            objective: model.sense_sign * pobj,
            duality_gap: (pobj - dobj).abs(),
            primal_residual: rp.amax(),
            dual_residual: rd.amax().max(if l > 0 { rd_lin.amax() } else { 0.0 }),
            iterations: iter,
            perturbation: None,
            infeasibility: None,
        };

        if rp_rel <= opts.tol && rd_rel <= opts.tol && gap_rel <= opts.tol {
            let mut done = sol;
            done.status = Status::Optimal;
            return IpmOutcome::Converged(done);
        }

        // Divergence toward -infinity with a feasible primal: unbounded.
        if pobj < -1e12 * b_scale.max(cost_scale) && rp_rel <= 1e-6 {
            let mut done = sol;
            done.status = Status::Unbounded;
            return IpmOutcome::Unbounded(done);
        }

        // Stall bookkeeping; remember the best iterate seen.
        let measure = rp_rel.max(rd_rel).max(gap_rel);
        if measure < best_measure {
            best_measure = measure;
            best = Some(sol);
        }
        if measure < best_res * 0.95 {
            best_res = measure;
            stall_count = 0;
        } else {
            stall_count += 1;
        }
        if stall_count >= 12 || tiny_steps >= 4 {
            return IpmOutcome::Stalled(best.unwrap());
        }

        // Nesterov-Todd scaling point W with W S W = X.
        let chol_x = match Cholesky::new(symmetrize(&it.x)) {
            Some(c) => c,
            None => return IpmOutcome::Stalled(best.unwrap()),
        };
        let chol_s = match Cholesky::new(symmetrize(&it.s)) {
            Some(c) => c,
            None => return IpmOutcome::Stalled(best.unwrap()),
        };
        let lx = chol_x.l();
        let t = symmetrize(&(lx.transpose() * &it.s * &lx));
        let eig = SymmetricEigen::new(t);
        if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
            return IpmOutcome::Stalled(best.unwrap());
        }
        let mut r = &lx * &eig.eigenvectors;
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            let scale = lam.powf(-0.25);
            for i in 0..n {
                r[(i, j)] *= scale;
            }
        }
        let w = symmetrize(&(&r * r.transpose()));
        let s_inv = chol_s.inverse();
        let w_lin: DVector<f64> = DVector::from_iterator(
            l,
            (0..l).map(|t| it.s_lin[t] / it.z_lin[t]),
        );

        // Schur complement M_ij = <A_i, W A_j W> + sum_t a_i a_j w_t.
        let mut m_mat = DMatrix::zeros(m, m);
        {
            let ws = w.as_slice();
            for i in 0..m {
                for j in i..m {
                    let mut acc = 0.0;
                    for &(p, q, u) in &model.cons[i].entries {
                        let wrow = &ws[p * n..p * n + n];
                        let wcol = &ws[q * n..q * n + n];
                        // W is symmetric so column-major slices double as rows.
                        for &(rr, cc, v) in &model.cons[j].entries {
                            acc += u * v * wrow[rr] * wcol[cc];
                        }
                    }
                    for &(ti, u) in &model.cons[i].lin {
                        for &(tj, v) in &model.cons[j].lin {
                            if ti == tj {
                                acc += u * v * w_lin[ti];
                            }
                        }
                    }
                    m_mat[(i, j)] = acc;
                    m_mat[(j, i)] = acc;
                }
            }
        }
        let schur = match SchurSolver::new(m_mat) {
            Some(s) => s,
            None => return IpmOutcome::Stalled(best.unwrap()),
        };

        let w_rd_w = symmetrize(&(&w * &rd * &w));
        let mut w_rdlin = DVector::zeros(l);
        for t in 0..l {
            w_rdlin[t] = w_lin[t] * rd_lin[t];
        }

        let solve_dir = |rc: &DMatrix<f64>, rc_lin: &DVector<f64>| -> Direction {
            let mut rhs = DVector::zeros(m);
            for (i, c) in model.cons.iter().enumerate() {
                rhs[i] = rp[i] - c.dot_mat(rc) - c.dot_lin(rc_lin)
                    + c.dot_mat(&w_rd_w)
                    + c.dot_lin(&w_rdlin);
            }
            let dy = schur.solve(&rhs);
            let mut ds = rd.clone();
            for (i, c) in model.cons.iter().enumerate() {
                c.add_scaled_into(-dy[i], &mut ds);
            }
            let ds = symmetrize(&ds);
            let mut dz = rd_lin.clone();
            for (i, c) in model.cons.iter().enumerate() {
                c.add_scaled_lin_into(-dy[i], &mut dz);
            }
            let dx = symmetrize(&(rc - &(&w * &ds * &w)));
            let mut ds_lin = DVector::zeros(l);
            for t in 0..l {
                ds_lin[t] = rc_lin[t] - w_lin[t] * dz[t];
            }
            Direction {
                dx,
                ds_lin,
                dy,
                ds,
                dz_lin: dz,
            }
        };

        // Predictor (affine scaling).
        let rc_aff = it.x.scale(-1.0);
        let rc_lin_aff = it.s_lin.scale(-1.0);
        let aff = solve_dir(&rc_aff, &rc_lin_aff);
        let ap_aff = max_step(&it.x, &aff.dx, &chol_x)
            .min(max_step_lin(&it.s_lin, &aff.ds_lin))
            .min(1.0);
        let ad_aff = max_step(&it.s, &aff.ds, &chol_s)
            .min(max_step_lin(&it.z_lin, &aff.dz_lin))
            .min(1.0);
        let comp_aff = frob_dot(&(&it.x + aff.dx.scale(ap_aff)), &(&it.s + aff.ds.scale(ad_aff)))
            + (&it.s_lin + aff.ds_lin.scale(ap_aff)).dot(&(&it.z_lin + aff.dz_lin.scale(ad_aff)));
        let mu_aff = comp_aff.max(0.0) / (n + l) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-10, 1.0);

        // Corrector. The second-order cross term involves S^{-1}, which is
        // nearly singular close to convergence; damp it out once it stops
        // being small relative to the centering target.
        let cross = symmetrize(&(&aff.dx * &aff.ds * &s_inv));
        let cross_scale = cross.amax();
        let damp = if cross_scale <= 10.0 * (sigma * mu + mu) * (1.0 + it.x.amax()) {
            1.0
        } else {
            0.0
        };
        let rc = symmetrize(&(s_inv.scale(sigma * mu) - &it.x - cross.scale(damp)));
        let mut rc_lin = DVector::zeros(l);
        for t in 0..l {
            rc_lin[t] =
                (sigma * mu - damp * aff.ds_lin[t] * aff.dz_lin[t]) / it.z_lin[t] - it.s_lin[t];
        }
        let dir = solve_dir(&rc, &rc_lin);

        let gamma = 0.9 + 0.09 * ap_aff.min(ad_aff).min(1.0);
        let ap = (gamma * max_step(&it.x, &dir.dx, &chol_x))
            .min(gamma * max_step_lin(&it.s_lin, &dir.ds_lin))
            .min(1.0);
        let ad = (gamma * max_step(&it.s, &dir.ds, &chol_s))
            .min(gamma * max_step_lin(&it.z_lin, &dir.dz_lin))
            .min(1.0);

        if ap < 1e-9 && ad < 1e-9 {
            tiny_steps += 1;
        } else {
            tiny_steps = 0;
        }

        it.x += dir.dx.scale(ap);
        it.s_lin += dir.ds_lin.scale(ap);
        it.y += dir.dy.scale(ad);
        it.s += dir.ds.scale(ad);
        it.z_lin += dir.dz_lin.scale(ad);
        it.x = symmetrize(&it.x);
        it.s = symmetrize(&it.s);

        // Once C - A*(y) is positive definite, adopt it as the dual slack:
        // dual feasibility then holds exactly and the gap tracks
        // complementarity instead of accumulated residual error.
        let mut s_exact = model.cost.clone();
        for (i, c) in model.cons.iter().enumerate() {
            c.add_scaled_into(-it.y[i], &mut s_exact);
        }
        let s_exact = symmetrize(&s_exact);
        if Cholesky::new(s_exact.clone()).is_some() {
            let mut z_exact = model.cost_lin.clone();
            for (i, c) in model.cons.iter().enumerate() {
                c.add_scaled_lin_into(-it.y[i], &mut z_exact);
            }
            if (0..l).all(|t| z_exact[t] > 0.0) {
                it.s = s_exact;
                it.z_lin = z_exact;
            }
        }
    }

    IpmOutcome::Stalled(best.expect("at least one iteration"))
}

struct Direction {
    dx: DMatrix<f64>,
    ds_lin: DVector<f64>,
    dy: DVector<f64>,
    ds: DMatrix<f64>,
    dz_lin: DVector<f64>,
}

/// Cholesky with a ridge fallback for rank-deficient Schur complements
/// (dependent equality rows are common in moment relaxations), plus two
/// refinement passes against the unridged matrix.
struct SchurSolver {
    chol: Cholesky<f64, nalgebra::Dyn>,
    original: DMatrix<f64>,
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        let dim = m.nrows();
        let mean_diag = (0..dim).map(|i| m[(i, i)].abs()).sum::<f64>() / dim.max(1) as f64;
        let mut ridge = 0.0;
        for attempt in 0..8 {
            let mut trial = m.clone();
            if ridge > 0.0 {
                for i in 0..dim {
                    trial[(i, i)] += ridge;
                }
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Some(SchurSolver { chol, original: m });
            }
            ridge = if attempt == 0 {
                1e-13 * (1.0 + mean_diag)
            } else {
                ridge * 100.0
            };
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        for _ in 0..2 {
            let r = rhs - &self.original * &x;
            x += self.chol.solve(&r);
        }
        x
    }
}

fn trace_enabled() -> bool {
    static ENABLED: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
    *ENABLED.get_or_init(|| std::env::var("HEAVYMEAN_SDP_TRACE").ok().as_deref() == Some("1"))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()).scale(0.5)
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest alpha with `X + alpha D` staying in the PSD cone (up to the
/// boundary), given the Cholesky factor of `X`.
fn max_step(x: &DMatrix<f64>, d: &DMatrix<f64>, chol_x: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let _ = x;
    let l = chol_x.l();
    // B = L^{-1} D L^{-T}
    let mut b = d.clone();
    l.solve_lower_triangular_mut(&mut b);
    let mut bt = b.transpose();
    l.solve_lower_triangular_mut(&mut bt);
    let sym = symmetrize(&bt);
    let eig = SymmetricEigen::new(sym);
    let lam_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lam_min >= -1e-13 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

fn max_step_lin(v: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..v.len() {
        if d[i] < 0.0 {
            alpha = alpha.min(-v[i] / d[i]);
        }
    }
    alpha
}

/// Decide a stalled run: phase-1 separates infeasible problems from ones we
/// merely failed to solve; the latter get one retry with a perturbed rhs.
fn resolve_stall(model: &Model, opts: &SolveOptions, best: SdpSolution) -> Result<SdpSolution> {
    let t_star = phase1_value(model, opts)?;
    let b_scale = 1.0 + model.b.amax();
    if t_star > 10.0 * opts.tol * b_scale {
        let mut sol = best;
        sol.status = Status::Infeasible;
        sol.infeasibility = Some(t_star);
        return Ok(sol);
    }
    // Feasible but stalled: perturb b slightly to restore an interior.
    let eps = 1e-10;
    let perturbed = model_with_perturbed_b(model, eps);
    match run_ipm(&perturbed, opts, None, true) {
        IpmOutcome::Converged(mut sol) => {
            sol.perturbation = Some(eps);
            Ok(sol)
        }
        IpmOutcome::Unbounded(mut sol) => {
            sol.perturbation = Some(eps);
            Ok(sol)
        }
        IpmOutcome::Stalled(mut sol) => {
            // Report the better of the two stalled iterates.
            sol.status = Status::MaxIter;
            sol.perturbation = Some(eps);
            if sol.primal_residual.max(sol.duality_gap) < best.primal_residual.max(best.duality_gap)
            {
                Ok(sol)
            } else {
                let mut b = best;
                b.status = Status::MaxIter;
                Ok(b)
            }
        }
    }
}

fn model_with_perturbed_b(model: &Model, eps: f64) -> Model {
    let cons: Vec<ExpandedCon> = model
        .cons
        .iter()
        .map(|c| ExpandedCon {
            entries: c.entries.clone(),
            lin: c.lin.clone(),
            rhs: c.rhs + eps * (1.0 + c.rhs.abs()),
        })
        .collect();
    let b = DVector::from_iterator(cons.len(), cons.iter().map(|c| c.rhs));
    Model {
        n: model.n,
        l: model.l,
        m: model.m,
        cost: model.cost.clone(),
        cost_lin: model.cost_lin.clone(),
        cons,
        b,
        row_scale: model.row_scale.clone(),
        sense_sign: model.sense_sign,
    }
}

/// Optimal value of `min t` over the original constraints augmented with one
/// artificial nonnegative variable absorbing the residual of the canonical
/// strictly interior starting point. A value near zero certifies feasibility.
fn phase1_value(model: &Model, opts: &SolveOptions) -> Result<f64> {
    let (n, l) = (model.n, model.l);
    let tau = 1.0 + model.b.amax();
    let x0 = DMatrix::identity(n, n).scale(tau);
    let s0 = DVector::from_element(l, tau);
    let mut cons: Vec<ExpandedCon> = Vec::with_capacity(model.m);
    for c in &model.cons {
        let q = c.rhs - c.dot_mat(&x0) - c.dot_lin(&s0);
        let mut lin = c.lin.clone();
        if q != 0.0 {
            lin.push((l, q));
        }
        cons.push(ExpandedCon {
            entries: c.entries.clone(),
            lin,
            rhs: c.rhs,
        });
    }
    let mut cost_lin = DVector::zeros(l + 1);
    cost_lin[l] = 1.0;
    let aux = Model {
        n,
        l: l + 1,
        m: model.m,
        cost: DMatrix::zeros(n, n),
        cost_lin,
        cons,
        b: model.b.clone(),
        row_scale: vec![1.0; model.m],
        sense_sign: 1.0,
    };
    let mut s_start = DVector::from_element(l + 1, tau);
    s_start[l] = 1.0;
    let phase_opts = SolveOptions {
        tol: (opts.tol * 10.0).min(1e-6),
        max_iter: opts.max_iter,
        psd_dim_cap: opts.psd_dim_cap,
    };
    match run_ipm(&aux, &phase_opts, Some((x0, s_start)), true) {
        IpmOutcome::Converged(sol) => Ok(sol.objective.max(0.0)),
        IpmOutcome::Unbounded(_) => Ok(0.0),
        IpmOutcome::Stalled(sol) => {
            // Use the stalled objective as a best-effort measure; it upper
            // bounds the true optimum whenever the iterate is near-feasible.
            if sol.primal_residual <= 1e-6 * (1.0 + model.b.amax()) {
                Ok(sol.objective.max(0.0))
            } else {
                Err(Error::SolverFailure(
                    "phase-1 did not converge; cannot classify feasibility".into(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Constraint, IneqDirection, SdpProblem, Sense, Status};
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn weak_duality_and_reproducibility() {
        let mut p = SdpProblem::new(3, Sense::Minimize).unwrap();
        p.set_cost_psd(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 2.0, 3.0,
        ])))
        .unwrap();
        for i in 0..3 {
            p.add_equality(Constraint::new().psd_entry(i, i, 1.0).rhs(1.0))
                .unwrap();
        }
        let a = p.solve(1e-8).unwrap();
        let b = p.solve(1e-8).unwrap();
        assert_eq!(a.status, Status::Optimal);
        assert!(a.duality_gap <= 1e-6);
        // bit-for-bit reproducibility
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.iterations, b.iterations);
        assert!((a.objective - 6.0).abs() < 1e-7);
    }

    #[test]
    fn scaling_cost_scales_objective() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..5 {
            let mut p = SdpProblem::new(3, Sense::Minimize).unwrap();
            let raw = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let cost = (&raw + raw.transpose()).scale(0.5) + DMatrix::identity(3, 3).scale(2.0);
            p.set_cost_psd(&cost).unwrap();
            for i in 0..3 {
                p.add_equality(Constraint::new().psd_entry(i, i, 1.0).rhs(1.0))
                    .unwrap();
            }
            let base = p.solve(1e-9).unwrap();
            let lambda = 3.5;
            let mut q = p.clone();
            q.set_cost_psd(&cost.scale(lambda)).unwrap();
            let scaled = q.solve(1e-9).unwrap();
            assert_eq!(base.status, Status::Optimal);
            assert_eq!(scaled.status, Status::Optimal);
            assert!((scaled.objective - lambda * base.objective).abs() < lambda * 1e-6);
            // returned primal of the scaled problem is feasible and optimal for it
            assert!(q.feasibility_residual(&scaled.primal_psd, &scaled.primal_nonneg) < 1e-7);
        }
    }

    #[test]
    fn inequality_slack_problem() {
        // maximize X01 + X10 s.t. Tr X <= 2, X PSD: optimum 2 at ones(2).
        let mut p = SdpProblem::new(2, Sense::Maximize).unwrap();
        p.add_cost_psd_entry(0, 1, 2.0);
        let mut c = Constraint::new();
        c.push_psd(0, 0, 1.0);
        c.push_psd(1, 1, 1.0);
        p.add_inequality(c, 2.0, IneqDirection::Le).unwrap();
        let sol = p.solve(1e-8).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_combination_detected() {
        // X00 = 1 and X00 = 2 simultaneously.
        let mut p = SdpProblem::new(2, Sense::Minimize).unwrap();
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(1.0))
            .unwrap();
        p.add_equality(Constraint::new().psd_entry(0, 0, 1.0).rhs(2.0))
            .unwrap();
        let sol = p.solve(1e-8).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
    }

    #[test]
    fn random_diag_problems_match_analytic_optimum() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..10 {
            let n = rng.gen_range(2..6);
            let mut p = SdpProblem::new(n, Sense::Minimize).unwrap();
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            p.set_cost_psd(&DMatrix::from_diagonal(&DVector::from_vec(diag.clone())))
                .unwrap();
            for i in 0..n {
                p.add_equality(Constraint::new().psd_entry(i, i, 1.0).rhs(targets[i]))
                    .unwrap();
            }
            let sol = p.solve(1e-9).unwrap();
            let expect: f64 = diag.iter().zip(&targets).map(|(d, t)| d * t).sum();
            assert_eq!(sol.status, Status::Optimal);
            assert!((sol.objective - expect).abs() < 1e-7);
            assert!(sol.primal_residual < 1e-8 * (1.0 + expect));
        }
    }
}
