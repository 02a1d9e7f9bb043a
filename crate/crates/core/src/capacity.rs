//! B-capacity, lower capacity, classical capacity and the entropy program.
//!
//! For an n-homogeneous `g` the capacity is the infimum of `log g(e^y)` over
//! the cone `{y : Σ_{i∈S} y_i ≥ 0 ∀S ∈ B}`. Shifting any `y` along the all-ones
//! direction by `−φ(y)/n`, where `φ(y)` is the minimum base weight, lands on the
//! boundary of the cone, so the constrained problem equals the unconstrained
//! minimization of `F(y) = log g(e^y) − φ(y)`. `F` is invariant along the
//! all-ones direction and is minimized over its orthogonal complement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::matroid::MatroidSpec;
use crate::numeric::dot;
use crate::poly::PolynomialOracle;
use crate::solver::{
    minimize, minimize_smooth, saddle, ConvexProgram, InnerSolution, Minimum, SaddleProgram, SolveStatus,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityOptions {
    /// Additive tolerance on log-values.
    pub eps: f64,
    /// Iteration cap for each inner convex solve.
    pub budget: usize,
    /// Iteration cap for conditional-gradient loops.
    pub outer_budget: usize,
    /// Overrides the default box radius in log coordinates.
    pub box_radius: Option<f64>,
    pub seed: u64,
    /// Largest base family enumerated by routines that need the bases.
    pub enumeration_limit: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            budget: 10_000,
            outer_budget: 200,
            box_radius: None,
            seed: 0,
            enumeration_limit: 10_000,
        }
    }
}

impl CapacityOptions {
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub log_value: f64,
    /// Certified lower bound on `log_value` from the solver.
    pub log_lower: f64,
    /// Minimizer in log coordinates, shifted onto the feasible cone.
    pub minimizer: Vec<f64>,
    pub status: SolveStatus,
    /// Bases `S` with `Σ_{i∈S} y_i ≈ 0` at the minimizer.
    pub active_bases: Vec<Vec<usize>>,
    pub iterations: usize,
}

impl CapacityResult {
    fn zero(m: usize, status: SolveStatus, iterations: usize) -> Self {
        Self {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            log_lower: f64::NEG_INFINITY,
            minimizer: vec![0.0; m],
            status,
            active_bases: Vec::new(),
            iterations,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_value == f64::NEG_INFINITY
    }
}

/// Default box radius `4(|L| + n log(m+1))`, at least 10, with `L = log g(1)`.
pub fn default_box_radius(log_g1: f64, n: usize, m: usize) -> f64 {
    (4.0 * (log_g1.abs() + n as f64 * ((m + 1) as f64).ln())).max(10.0)
}

/// Orthonormal (Helmert) basis of the complement of the all-ones vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SumZeroBasis {
    m: usize,
}

impl SumZeroBasis {
    pub(crate) fn new(m: usize) -> Self {
        Self { m }
    }

    pub(crate) fn dim(&self) -> usize {
        self.m.saturating_sub(1)
    }

    fn coef(k: usize) -> f64 {
        1.0 / (((k + 1) * (k + 2)) as f64).sqrt()
    }

    /// `y = Q u`.
    pub(crate) fn expand(&self, u: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        let mut suffix = 0.0;
        for i in (0..m).rev() {
            if i < m - 1 {
                suffix += Self::coef(i) * u[i];
            }
            y[i] = suffix;
            if i >= 1 {
                y[i] -= i as f64 * Self::coef(i - 1) * u[i - 1];
            }
        }
        y
    }

    /// `u = Qᵀ g`.
    pub(crate) fn reduce(&self, g: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let mut prefix = 0.0;
        for k in 0..self.dim() {
            prefix += g[k];
            out.push(Self::coef(k) * (prefix - (k + 1) as f64 * g[k + 1]));
        }
        out
    }
}

fn check_inputs(g: &PolynomialOracle, mat: &MatroidSpec, seed: u64) -> Result<()> {
    if g.m() != mat.m() {
        return Err(CapError::DimensionMismatch { expected: mat.m(), got: g.m() });
    }
    g.probe_homogeneity(20, seed)?;
    if g.degree() != mat.rank() {
        return Err(CapError::DegreeRankMismatch { degree: g.degree(), rank: mat.rank() });
    }
    Ok(())
}

/// `F(y) = log g(e^y) − min_S Σ_{i∈S} y_i` and a subgradient, on the reduced coordinates.
fn cone_objective<'a>(
    g: &'a PolynomialOracle,
    mat: &'a MatroidSpec,
    basis: SumZeroBasis,
) -> impl Fn(&[f64]) -> (f64, Vec<f64>) + 'a {
    move |u: &[f64]| {
        let y = basis.expand(u);
        let (lf, mut grad) = g.log_eval_grad_y(&y);
        let (s, w) = mat.min_weight_base(&y).expect("dimension checked");
        for i in s {
            grad[i] -= 1.0;
        }
        (lf - w, basis.reduce(&grad))
    }
}

fn solve_reduced(
    objective: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    dim: usize,
    radius: f64,
    opts: &CapacityOptions,
    start: Option<Vec<f64>>,
) -> Result<Minimum> {
    let mut prog = ConvexProgram::new(dim, objective)
        .with_box_radius(radius)
        .with_eps(opts.eps)
        .with_max_iter(opts.budget);
    if let Some(s) = start {
        prog = prog.with_start(s);
    }
    minimize(&prog)
}

/// Minimizes a reduced objective; on a box-active result the box is doubled and
/// a decline of at least `0.05 R` in the optimum is taken as divergence to `−∞`.
fn solve_with_zero_detection(
    objective: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    dim: usize,
    radius: f64,
    opts: &CapacityOptions,
) -> Result<(Option<Minimum>, usize)> {
    let first = solve_reduced(objective, dim, radius, opts, None)?;
    let mut iterations = first.iterations;
    if first.status != SolveStatus::BoxActive {
        return Ok((Some(first), iterations));
    }
    let second = solve_reduced(objective, dim, 2.0 * radius, opts, Some(first.point.clone()))?;
    iterations += second.iterations;
    if second.value <= first.value - 0.05 * radius {
        return Ok((None, iterations));
    }
    let best = if second.value < first.value { second } else { first };
    Ok((Some(best), iterations))
}

/// `Cap_B(g)` for an n-homogeneous `g` and a family of rank `n`.
pub fn cap(g: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<CapacityResult> {
    check_inputs(g, mat, opts.seed)?;
    let m = g.m();
    let n = mat.rank();
    let log_g1 = g.log_at_ones();
    if log_g1 == f64::NEG_INFINITY {
        return Ok(CapacityResult::zero(m, SolveStatus::Converged, 0));
    }
    let radius = opts.box_radius.unwrap_or_else(|| default_box_radius(log_g1, n, m));
    let basis = SumZeroBasis::new(m);
    let objective = cone_objective(g, mat, basis);
    let (found, iterations) = solve_with_zero_detection(&objective, basis.dim(), radius, opts)?;
    let Some(min) = found else {
        return Ok(CapacityResult::zero(m, SolveStatus::BoxActive, iterations));
    };
    let mut y = basis.expand(&min.point);
    let (_, phi) = mat.min_weight_base(&y)?;
    if n > 0 {
        let shift = phi / n as f64;
        for v in &mut y {
            *v -= shift;
        }
    }
    let active_bases = active_bases(mat, &y, opts.enumeration_limit)?;
    Ok(CapacityResult {
        value: min.value.exp(),
        log_value: min.value,
        log_lower: min.lower_bound,
        minimizer: y,
        status: min.status,
        active_bases,
        iterations,
    })
}

fn active_bases(mat: &MatroidSpec, y: &[f64], limit: usize) -> Result<Vec<Vec<usize>>> {
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-6 * scale;
    match mat.enumerate_bases(limit) {
        Ok(bases) => Ok(bases
            .into_iter()
            .filter(|s| s.iter().map(|&i| y[i]).sum::<f64>() <= tol)
            .collect()),
        Err(CapError::EnumerationLimit { .. }) => Ok(vec![mat.min_weight_base(y)?.0]),
        Err(e) => Err(e),
    }
}

/// `min_{S ∈ B} Cap_{{S}}(h)`, the lower capacity, attained at a vertex of `P(B)`.
pub fn lower_cap(h: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<CapacityResult> {
    check_inputs(h, mat, opts.seed)?;
    let bases = mat.enumerate_bases(opts.enumeration_limit).map_err(|e| match e {
        CapError::EnumerationLimit { limit, found } => CapError::SizeLimit(format!(
            "lower capacity needs all bases but more than {limit} exist (found {found}); \
             use the certified constant of the selection instead"
        )),
        other => other,
    })?;
    let mut best: Option<(CapacityResult, Vec<usize>)> = None;
    let mut iterations = 0;
    for s in bases {
        let single = MatroidSpec::explicit(h.m(), vec![s.clone()], true)?;
        let r = cap(h, &single, opts)?;
        iterations += r.iterations;
        if best.as_ref().is_none_or(|(b, _)| r.log_value < b.log_value) {
            best = Some((r, s));
        }
    }
    let (mut r, s) = best.ok_or(CapError::EmptyFamily)?;
    r.active_bases = vec![s];
    r.iterations = iterations;
    Ok(r)
}

/// Classical capacity `inf{g(z) : z > 0, Π z_i = 1}` for any nonnegative `g`.
pub fn gurvits_cap(g: &PolynomialOracle, opts: &CapacityOptions) -> Result<CapacityResult> {
    let m = g.m();
    if g.is_homogeneous() && g.degree() == m {
        let full = MatroidSpec::uniform(m, m)?;
        return cap(g, &full, opts);
    }
    let log_g1 = g.log_at_ones();
    if log_g1 == f64::NEG_INFINITY {
        return Ok(CapacityResult::zero(m, SolveStatus::Converged, 0));
    }
    let radius = opts.box_radius.unwrap_or_else(|| default_box_radius(log_g1, g.degree(), m));
    let basis = SumZeroBasis::new(m);
    let objective = move |u: &[f64]| {
        let y = basis.expand(u);
        let (lf, grad) = g.log_eval_grad_y(&y);
        (lf, basis.reduce(&grad))
    };
    let (found, iterations) = solve_with_zero_detection(&objective, basis.dim(), radius, opts)?;
    let Some(min) = found else {
        return Ok(CapacityResult::zero(m, SolveStatus::BoxActive, iterations));
    };
    Ok(CapacityResult {
        value: min.value.exp(),
        log_value: min.value,
        log_lower: min.lower_bound,
        minimizer: basis.expand(&min.point),
        status: min.status,
        active_bases: vec![(0..m).collect()],
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalResult {
    pub value: f64,
    pub log_value: f64,
    /// Certified upper bound on the log-capacity collected along the way.
    pub log_upper: f64,
    /// Final marginal vector `θ ∈ P(B)`.
    pub theta: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub inner_iterations: usize,
}

/// `sup_{θ ∈ P(B)} inf_y log g(e^y) − ⟨θ, y⟩` by the saddle engine.
pub fn cap_primal(g: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<PrimalResult> {
    check_inputs(g, mat, opts.seed)?;
    let m = g.m();
    let log_g1 = g.log_at_ones();
    if log_g1 == f64::NEG_INFINITY {
        return Ok(PrimalResult {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            log_upper: f64::NEG_INFINITY,
            theta: vec![0.0; m],
            status: SolveStatus::Converged,
            iterations: 0,
            inner_iterations: 0,
        });
    }
    let radius = opts.box_radius.unwrap_or_else(|| default_box_radius(log_g1, mat.rank(), m));
    let basis = SumZeroBasis::new(m);
    let inner_eps = opts.eps * 1e-2;
    let inner = move |theta: &[f64], warm: Option<&[f64]>| -> Result<InnerSolution> {
        let objective = |u: &[f64]| {
            let y = basis.expand(u);
            let (lf, mut grad) = g.log_eval_grad_y(&y);
            for (gi, t) in grad.iter_mut().zip(theta) {
                *gi -= t;
            }
            (lf - dot(theta, &y), basis.reduce(&grad))
        };
        let start = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; basis.dim()]);
        let min = match minimize_smooth(basis.dim(), &objective, &start, radius, inner_eps, 100) {
            Some(min) if min.status == SolveStatus::Converged => min,
            _ => {
                let prog = ConvexProgram::new(basis.dim(), objective)
                    .with_box_radius(radius)
                    .with_eps(inner_eps)
                    .with_max_iter(opts.budget)
                    .with_start(start);
                minimize(&prog)?
            }
        };
        let y = basis.expand(&min.point);
        let lf = g.log_eval_y(&y);
        let (_, phi) = mat.min_weight_base(&y)?;
        Ok(InnerSolution {
            value: min.value,
            supergradient: y.iter().map(|v| -v).collect(),
            warm: min.point,
            dual_bound: Some(lf - phi),
            status: min.status,
            iterations: min.iterations,
        })
    };
    let prog = SaddleProgram {
        dim: m,
        lmo: Box::new(|w: &[f64]| Ok(mat.min_weight_base(w)?.0)),
        inner: Box::new(inner),
        eps: opts.eps,
        max_outer: opts.outer_budget,
        seed: opts.seed,
        starts: 2 * m,
    };
    let res = saddle(&prog)?;
    Ok(PrimalResult {
        value: res.value.exp(),
        log_value: res.value,
        log_upper: res.upper_bound,
        theta: res.point,
        status: res.status,
        iterations: res.iterations,
        inner_iterations: res.inner_iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyResult {
    pub value: f64,
    pub log_value: f64,
    /// Optimal distribution over the support, in term order.
    pub q: Vec<f64>,
    /// Weights on the bases realizing the marginal of `q`.
    pub mu: Vec<f64>,
    pub bases: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
    pub iterations: usize,
}

/// Largest support and base count accepted by [`entropy_cap`].
pub const ENTROPY_SIZE_LIMIT: usize = 20_000;

/// `exp(sup −KL(q ‖ p))` over distributions `q` on the support of `p` whose
/// marginal `Σ_α q_α α` lies in `P(B)`.
pub fn entropy_cap(p: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<EntropyResult> {
    check_inputs(p, mat, opts.seed)?;
    let terms = p.sparse_terms().ok_or_else(|| {
        CapError::InvalidPolynomial("entropy program needs an explicit sparse expansion".into())
    })?;
    if terms.len() > ENTROPY_SIZE_LIMIT {
        return Err(CapError::SizeLimit(format!("{} support terms exceed {ENTROPY_SIZE_LIMIT}", terms.len())));
    }
    let bases = mat.enumerate_bases(ENTROPY_SIZE_LIMIT.min(opts.enumeration_limit.max(1))).map_err(|e| {
        CapError::SizeLimit(format!("entropy program needs the bases explicitly: {e}"))
    })?;
    let m = p.m();
    let t = terms.len();
    let k = bases.len();
    if t == 0 {
        return Ok(EntropyResult {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            q: vec![],
            mu: vec![0.0; k],
            bases,
            warnings: vec!["polynomial is identically zero".into()],
            iterations: 0,
        });
    }
    let log_p: Vec<f64> = terms.terms().iter().map(|(_, c)| c.ln()).collect();
    // constraint rows: Σ q_α α_i − Σ μ_S [i ∈ S] = 0 for each i, and Σ q = 1
    let mut c = DMatrix::zeros(m + 1, t + k);
    for (j, (alpha, _)) in terms.terms().iter().enumerate() {
        for i in 0..m {
            c[(i, j)] = alpha[i] as f64;
        }
        c[(m, j)] = 1.0;
    }
    for (j, s) in bases.iter().enumerate() {
        for &i in s {
            c[(i, t + j)] = -1.0;
        }
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let (c, rhs) = independent_rows(&c, &rhs);

    let mut z = DVector::from_fn(t + k, |j, _| if j < t { 1.0 / t as f64 } else { 1.0 / k as f64 });
    let mut w = DVector::zeros(c.nrows());
    let mut iterations = 0;
    let mut nu = 1.0;
    let mut warnings = Vec::new();
    while nu >= 1e-13 {
        for _ in 0..200 {
            iterations += 1;
            let grad = DVector::from_fn(t + k, |j, _| {
                if j < t {
                    (z[j].ln() - log_p[j]) + 1.0
                } else {
                    -nu / z[j]
                }
            });
            let primal_res = &c * &z - &rhs;
            let dual_res = &grad + c.transpose() * &w;
            // full KKT system; pivoted LU copes with the spread between the q and μ blocks
            let rows = c.nrows();
            let mut kkt = DMatrix::zeros(t + k + rows, t + k + rows);
            for j in 0..t + k {
                kkt[(j, j)] = if j < t { 1.0 / z[j] } else { nu / (z[j] * z[j]) };
            }
            kkt.view_mut((0, t + k), (t + k, rows)).copy_from(&c.transpose());
            kkt.view_mut((t + k, 0), (rows, t + k)).copy_from(&c);
            let mut kkt_rhs = DVector::zeros(t + k + rows);
            kkt_rhs.rows_mut(0, t + k).copy_from(&(-&dual_res));
            kkt_rhs.rows_mut(t + k, rows).copy_from(&(-&primal_res));
            let Some(sol) = kkt.lu().solve(&kkt_rhs) else {
                return Err(CapError::Solver("entropy KKT system is singular".into()));
            };
            let dz = sol.rows(0, t + k).into_owned();
            let dw = sol.rows(t + k, rows).into_owned();
            let res_norm = (dual_res.norm_squared() + primal_res.norm_squared()).sqrt();
            if res_norm <= 1e-14 {
                break;
            }
            // largest step keeping z positive, then backtrack on the residual norm
            let mut step = 1.0f64;
            for j in 0..t + k {
                if dz[j] < 0.0 {
                    step = step.min(-0.99 * z[j] / dz[j]);
                }
            }
            let mut accepted = false;
            while step > 1e-14 {
                let zt = &z + &dz * step;
                let wt = &w + &dw * step;
                let gt = DVector::from_fn(t + k, |j, _| {
                    if j < t {
                        (zt[j].ln() - log_p[j]) + 1.0
                    } else {
                        -nu / zt[j]
                    }
                });
                let rt = ((&gt + c.transpose() * &wt).norm_squared() + (&c * &zt - &rhs).norm_squared()).sqrt();
                if rt <= (1.0 - 0.01 * step) * res_norm {
                    z = zt;
                    w = wt;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        nu *= 0.1;
    }
    let primal_res = (&c * &z - &rhs).norm();
    let q: Vec<f64> = z.iter().take(t).copied().collect();
    let mu: Vec<f64> = z.iter().skip(t).copied().collect();
    if primal_res > 1e-7 {
        warnings.push(format!(
            "marginal constraints are infeasible (residual {primal_res:.2e}); the support misses the base polytope"
        ));
        return Ok(EntropyResult {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            q,
            mu,
            bases,
            warnings,
            iterations,
        });
    }
    if q.iter().any(|v| *v < 1e-9) {
        warnings.push("optimal distribution touches the boundary of the support simplex".into());
    }
    let neg_kl: f64 = -q
        .iter()
        .zip(&log_p)
        .map(|(qi, lp)| if *qi > 0.0 { qi * (qi.ln() - lp) } else { 0.0 })
        .sum::<f64>();
    Ok(EntropyResult { value: neg_kl.exp(), log_value: neg_kl, q, mu, bases, warnings, iterations })
}

/// Replaces `C x = r` by an equivalent system with linearly independent rows.
fn independent_rows(c: &DMatrix<f64>, r: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let svd = c.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * smax).collect();
    let ut = DMatrix::from_fn(keep.len(), c.nrows(), |a, b| u[(b, keep[a])]);
    (&ut * c, &ut * r)
}
