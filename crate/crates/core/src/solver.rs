//! Convex minimization and concave-convex saddle engines.
//!
//! [`minimize`] is a deep-cut ellipsoid method on a box, with optional
//! separation cuts. The ellipsoid is stored as `E = {c + J u : |u| ≤ 1}`, which
//! keeps the shape matrix `J Jᵀ` positive semidefinite under rounding. Each
//! objective cut also yields the lower bound `f(c) − |Jᵀ g|` on the minimum over
//! `E`, so the reported gap is certified up to the accuracy of the oracles.
//!
//! [`saddle`] maximizes a concave function over a polytope given only by a
//! linear optimization oracle, using pairwise conditional gradient steps with
//! a line search on the directional derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::numeric::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    BoxActive,
    BudgetExhausted,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::BoxActive => "box_active",
            SolveStatus::BudgetExhausted => "budget_exhausted",
        }
    }

    /// The less favorable of two statuses.
    pub fn worst(self, other: SolveStatus) -> SolveStatus {
        let rank = |s: SolveStatus| match s {
            SolveStatus::Converged => 0,
            SolveStatus::BoxActive => 1,
            SolveStatus::BudgetExhausted => 2,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

/// A valid inequality `⟨a, x⟩ ≥ b` violated at the queried point.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

pub type Objective<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a>;
pub type Feasibility<'a> = Box<dyn Fn(&[f64]) -> Option<Halfspace> + 'a>;

pub struct ConvexProgram<'a> {
    pub dim: usize,
    /// Value and a subgradient at a point.
    pub objective: Objective<'a>,
    /// `None` when the point is feasible, otherwise a separating halfspace.
    pub feasibility: Option<Feasibility<'a>>,
    /// Coordinates are restricted to `[-box_radius, box_radius]`.
    pub box_radius: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub start: Option<Vec<f64>>,
}

impl<'a> ConvexProgram<'a> {
    pub fn new(dim: usize, objective: impl Fn(&[f64]) -> (f64, Vec<f64>) + 'a) -> Self {
        Self {
            dim,
            objective: Box::new(objective),
            feasibility: None,
            box_radius: 10.0,
            eps: 1e-6,
            max_iter: 10_000,
            start: None,
        }
    }

    pub fn with_feasibility(mut self, oracle: impl Fn(&[f64]) -> Option<Halfspace> + 'a) -> Self {
        self.feasibility = Some(Box::new(oracle));
        self
    }

    pub fn with_box_radius(mut self, r: f64) -> Self {
        self.box_radius = r;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_start(mut self, x: Vec<f64>) -> Self {
        self.start = Some(x);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Certified lower bound on the boxed infimum.
    pub lower_bound: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Fraction of the box radius beyond which a minimizer is reported as box-active.
const BOX_ACTIVE_FRACTION: f64 = 0.99;

pub fn minimize(prog: &ConvexProgram) -> Result<Minimum> {
    let d = prog.dim;
    let r = prog.box_radius;
    if !(r > 0.0) || !(prog.eps > 0.0) {
        return Err(CapError::Solver("box radius and tolerance must be positive".into()));
    }
    if d == 0 {
        if let Some(cut) = prog.feasibility.as_ref().and_then(|f| f(&[])) {
            return Err(CapError::Infeasible(format!("empty point violates a cut with b = {}", cut.b)));
        }
        let (v, _) = (prog.objective)(&[]);
        return Ok(Minimum { point: vec![], value: v, lower_bound: v, status: SolveStatus::Converged, iterations: 0 });
    }
    let mut c: Vec<f64> = match &prog.start {
        Some(s) if s.len() == d => s.iter().map(|v| v.clamp(-r, r)).collect(),
        Some(s) => return Err(CapError::DimensionMismatch { expected: d, got: s.len() }),
        None => vec![0.0; d],
    };
    let radius = r * (d as f64).sqrt() + norm(&c);
    let mut ell = Ellipsoid::new(d, radius);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut status = SolveStatus::BudgetExhausted;
    let mut iterations = 0;

    while iterations < prog.max_iter {
        iterations += 1;
        let cut = box_cut(&c, r).or_else(|| prog.feasibility.as_ref().and_then(|f| f(&c)));
        let (g, h) = if let Some(Halfspace { a, b }) = cut {
            let depth = (b - dot(&a, &c)).max(0.0);
            (a.iter().map(|v| -v).collect::<Vec<f64>>(), depth)
        } else {
            let (f, g) = (prog.objective)(&c);
            if f == f64::NEG_INFINITY {
                return Ok(Minimum {
                    point: c,
                    value: f,
                    lower_bound: f,
                    status: SolveStatus::Converged,
                    iterations,
                });
            }
            if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(CapError::Solver(format!("objective returned a non-finite value {f}")));
            }
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((c.clone(), f));
            }
            let best_f = best.as_ref().map(|b| b.1).unwrap_or(f);
            lower = lower.max(f - ell.width(&g));
            if best_f - lower <= prog.eps {
                status = SolveStatus::Converged;
                break;
            }
            (g, f - best_f)
        };
        match ell.cut(&mut c, &g, h) {
            CutOutcome::Updated => {}
            CutOutcome::Empty => {
                // nothing left in the ellipsoid that beats the incumbent
                if let Some((_, bf)) = &best {
                    lower = lower.max(*bf);
                }
                status = SolveStatus::Converged;
                break;
            }
        }
    }
    let (point, value) = best.ok_or_else(|| {
        CapError::Infeasible(format!("no feasible point found in {iterations} ellipsoid iterations"))
    })?;
    if status == SolveStatus::Converged && point.iter().any(|v| v.abs() >= BOX_ACTIVE_FRACTION * r) {
        status = SolveStatus::BoxActive;
    }
    Ok(Minimum { point, value, lower_bound: lower.min(value), status, iterations })
}

fn box_cut(c: &[f64], r: f64) -> Option<Halfspace> {
    let (i, excess) = c
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs() - r))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))?;
    if excess <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; c.len()];
    a[i] = -c[i].signum();
    Some(Halfspace { a, b: -r })
}

enum CutOutcome {
    Updated,
    Empty,
}

struct Ellipsoid {
    d: usize,
    /// Row-major `d × d` factor.
    j: Vec<f64>,
}

impl Ellipsoid {
    fn new(d: usize, radius: f64) -> Self {
        let mut j = vec![0.0; d * d];
        for i in 0..d {
            j[i * d + i] = radius;
        }
        Self { d, j }
    }

    fn jt_times(&self, g: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d];
        for r in 0..d {
            let gr = g[r];
            if gr != 0.0 {
                for (o, jv) in out.iter_mut().zip(&self.j[r * d..(r + 1) * d]) {
                    *o += jv * gr;
                }
            }
        }
        out
    }

    /// `max_{z ∈ E} ⟨g, z − c⟩`.
    fn width(&self, g: &[f64]) -> f64 {
        norm(&self.jt_times(g))
    }

    /// Keeps `{z ∈ E : ⟨g, z − c⟩ ≤ −h}` inside the new ellipsoid.
    fn cut(&mut self, c: &mut [f64], g: &[f64], h: f64) -> CutOutcome {
        let d = self.d;
        let jg = self.jt_times(g);
        let nrm = norm(&jg);
        if nrm == 0.0 || !nrm.is_finite() {
            return CutOutcome::Empty;
        }
        let alpha = h / nrm;
        if alpha >= 1.0 {
            return CutOutcome::Empty;
        }
        let p: Vec<f64> = jg.iter().map(|v| v / nrm).collect();
        let jp: Vec<f64> = (0..d).map(|r| dot(&self.j[r * d..(r + 1) * d], &p)).collect();
        let df = d as f64;
        let step = (1.0 + df * alpha) / (df + 1.0);
        for (ci, v) in c.iter_mut().zip(&jp) {
            *ci -= step * v;
        }
        if d == 1 {
            self.j[0] *= (1.0 - alpha) / 2.0;
            return CutOutcome::Updated;
        }
        let tau = 2.0 * (1.0 + df * alpha) / ((df + 1.0) * (1.0 + alpha));
        let s = df * df / (df * df - 1.0) * (1.0 - alpha * alpha);
        let kappa = 1.0 - (1.0 - tau).max(0.0).sqrt();
        let scale = s.sqrt();
        for r in 0..d {
            let row = &mut self.j[r * d..(r + 1) * d];
            for (jv, pv) in row.iter_mut().zip(&p) {
                *jv = scale * (*jv - kappa * jp[r] * pv);
            }
        }
        CutOutcome::Updated
    }
}

/// Damped Newton for smooth unconstrained objectives given value and gradient.
/// The Hessian is formed by central differences of the gradient. Returns `None`
/// when the iterates leave the box or fail to settle, so callers can fall back
/// to [`minimize`].
pub(crate) fn minimize_smooth(
    dim: usize,
    objective: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    start: &[f64],
    box_radius: f64,
    eps: f64,
    max_iter: usize,
) -> Option<Minimum> {
    let mut x = start.to_vec();
    let (mut f, mut g) = objective(&x);
    if !f.is_finite() {
        return None;
    }
    for it in 1..=max_iter {
        let mut hess = nalgebra::DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let step = 1e-5 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += step;
            let mut xm = x.clone();
            xm[j] -= step;
            let (_, gp) = objective(&xp);
            let (_, gm) = objective(&xm);
            for i in 0..dim {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let trace = hess.trace().abs().max(1e-300);
        let mut shift = 0.0;
        let dir = loop {
            let shifted = &hess + nalgebra::DMatrix::identity(dim, dim) * shift;
            if let Some(ch) = shifted.cholesky() {
                break -ch.solve(&nalgebra::DVector::from_column_slice(&g));
            }
            shift = if shift == 0.0 { 1e-12 * trace } else { shift * 10.0 };
            if shift > 1e6 * trace {
                return None;
            }
        };
        let decrement = -dot(&g, dir.as_slice());
        if decrement < 0.0 {
            return None;
        }
        if decrement / 2.0 <= eps {
            let status = if x.iter().any(|v| v.abs() >= BOX_ACTIVE_FRACTION * box_radius) {
                SolveStatus::BoxActive
            } else {
                SolveStatus::Converged
            };
            return Some(Minimum { point: x, value: f, lower_bound: f - decrement / 2.0, status, iterations: it });
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && ft <= f - 0.25 * t * decrement {
                x = trial;
                f = ft;
                g = gt;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
        if x.iter().any(|v| v.abs() > box_radius) {
            return None;
        }
    }
    None
}

/// Result of one inner solve of a saddle program at an outer point.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    /// `ψ(x)`, the inner infimum.
    pub value: f64,
    /// A supergradient of `ψ` at `x`.
    pub supergradient: Vec<f64>,
    /// Inner optimum, offered back as a warm start for nearby outer points.
    pub warm: Vec<f64>,
    /// A certified upper bound on `sup ψ`, when the inner problem provides one.
    pub dual_bound: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
}

pub type LinearOracle<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<usize>> + 'a>;
pub type InnerOracle<'a> = Box<dyn Fn(&[f64], Option<&[f64]>) -> Result<InnerSolution> + 'a>;

/// `sup_{x ∈ conv(vertices)} ψ(x)` for concave `ψ` given by inner solves.
///
/// Vertices are 0/1 indicator vectors of index sets returned by the linear
/// oracle, which minimizes `⟨w, v⟩`.
pub struct SaddleProgram<'a> {
    pub dim: usize,
    pub lmo: LinearOracle<'a>,
    pub inner: InnerOracle<'a>,
    pub eps: f64,
    pub max_outer: usize,
    pub seed: u64,
    /// Random vertices averaged to form the starting point.
    pub starts: usize,
}

#[derive(Debug, Clone)]
pub struct SaddleResult {
    pub point: Vec<f64>,
    pub value: f64,
    /// Smallest certified upper bound seen (conditional-gradient gap or inner dual bound).
    pub upper_bound: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub inner_iterations: usize,
    /// Active vertices and their weights in the final point.
    pub combination: Vec<(Vec<usize>, f64)>,
}

pub fn saddle(prog: &SaddleProgram) -> Result<SaddleResult> {
    let m = prog.dim;
    let indicator = |s: &[usize]| {
        let mut v = vec![0.0; m];
        for &i in s {
            v[i] = 1.0;
        }
        v
    };
    let mut rng = ChaCha8Rng::seed_from_u64(prog.seed);
    let mut active: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..prog.starts.max(1) {
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = (prog.lmo)(&w)?;
        if !active.iter().any(|(t, _)| *t == s) {
            active.push((s, 0.0));
        }
    }
    let k = active.len() as f64;
    for entry in &mut active {
        entry.1 = 1.0 / k;
    }
    let point_of = |active: &[(Vec<usize>, f64)]| {
        let mut x = vec![0.0; m];
        for (s, l) in active {
            for &i in s {
                x[i] += l;
            }
        }
        x
    };

    let mut inner_iterations = 0;
    let mut x = point_of(&active);
    let mut sol = (prog.inner)(&x, None)?;
    inner_iterations += sol.iterations;
    let mut upper = sol.dual_bound.unwrap_or(f64::INFINITY);
    let mut status = SolveStatus::BudgetExhausted;
    let mut inner_status = sol.status;
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < prog.max_outer {
        iterations += 1;
        let g = &sol.supergradient;
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let s = (prog.lmo)(&neg)?;
        let vs = indicator(&s);
        let gap = dot(g, &vs) - dot(g, &x);
        upper = upper.min(sol.value + gap.max(0.0));
        if upper - sol.value <= prog.eps {
            status = SolveStatus::Converged;
            break;
        }
        // pairwise direction: move weight from the worst active vertex to s
        let (away_idx, _) = active
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (i, dot(g, &indicator(t))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("active set is nonempty");
        if active[away_idx].0 == s {
            status = SolveStatus::Converged;
            break;
        }
        let va = indicator(&active[away_idx].0);
        let dir: Vec<f64> = vs.iter().zip(&va).map(|(a, b)| a - b).collect();
        let gamma_max = active[away_idx].1;
        let slope0 = dot(g, &dir);
        if !(slope0 > 0.0) {
            status = SolveStatus::Converged;
            break;
        }
        let (mut gamma, mut next) = line_search(prog, &x, &dir, gamma_max, &sol, slope0, &mut inner_iterations)?;
        let mut step = Step::Pairwise;
        if gamma == 0.0 {
            if gamma_max * slope0 <= 1e-2 * (upper - sol.value) {
                // the away vertex carries too little weight for the line search
                // to resolve a gain; drop it so the same step cannot repeat
                let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| (a + gamma_max * b).clamp(0.0, 1.0)).collect();
                next = (prog.inner)(&y, Some(&sol.warm))?;
                inner_iterations += next.iterations;
                gamma = gamma_max;
                step = Step::Drop;
            } else {
                let toward: Vec<f64> = vs.iter().zip(&x).map(|(a, b)| a - b).collect();
                let slope = dot(g, &toward);
                (gamma, next) = line_search(prog, &x, &toward, 1.0, &sol, slope, &mut inner_iterations)?;
                step = Step::Toward;
            }
        }
        let improved = next.value > sol.value + 1e-3 * prog.eps;
        if gamma > 0.0 && (next.value >= sol.value || step == Step::Drop) {
            let weight = if let Some(pos) = active.iter().position(|(t, _)| *t == s) {
                pos
            } else {
                active.push((s, 0.0));
                active.len() - 1
            };
            if step == Step::Toward {
                for entry in &mut active {
                    entry.1 *= 1.0 - gamma;
                }
                active[weight].1 += gamma;
            } else {
                active[weight].1 += gamma;
                active[away_idx].1 -= gamma;
            }
            active.retain(|(_, l)| *l > 1e-14);
            let total: f64 = active.iter().map(|(_, l)| l).sum();
            for entry in &mut active {
                entry.1 /= total;
            }
            x = point_of(&active);
            inner_status = inner_status.worst(next.status);
            sol = next;
            if let Some(b) = sol.dual_bound {
                upper = upper.min(b);
            }
        }
        if step == Step::Drop {
            continue;
        }
        stalled = if improved { 0 } else { stalled + 1 };
        if stalled >= 8 {
            // the oracle precision is exhausted; report what the gap certifies
            break;
        }
    }
    if status == SolveStatus::Converged {
        status = inner_status.worst(SolveStatus::Converged);
    }
    Ok(SaddleResult {
        point: x,
        value: sol.value,
        upper_bound: upper.max(sol.value),
        status,
        iterations,
        inner_iterations,
        combination: active,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Pairwise,
    Drop,
    Toward,
}

/// Maximizes `γ ↦ ψ(x + γ d)` on `[0, γ_max]` by safeguarded regula falsi on
/// the directional derivative. Returns the best step found and its inner solution.
fn line_search(
    prog: &SaddleProgram,
    x: &[f64],
    dir: &[f64],
    gamma_max: f64,
    at_zero: &InnerSolution,
    slope0: f64,
    inner_iterations: &mut usize,
) -> Result<(f64, InnerSolution)> {
    let eval = |gamma: f64, warm: &[f64], count: &mut usize| -> Result<(InnerSolution, f64)> {
        let y: Vec<f64> = x.iter().zip(dir).map(|(a, b)| (a + gamma * b).clamp(0.0, 1.0)).collect();
        let s = (prog.inner)(&y, Some(warm))?;
        *count += s.iterations;
        let slope = dot(&s.supergradient, dir);
        Ok((s, slope))
    };
    let mut best: (f64, InnerSolution) = (0.0, at_zero.clone());
    let (end, slope_end) = eval(gamma_max, &at_zero.warm, inner_iterations)?;
    if end.value >= best.1.value {
        best = (gamma_max, end.clone());
    }
    if slope_end >= 0.0 {
        return Ok(best);
    }
    let (mut lo, mut f_lo) = (0.0, slope0);
    let (mut hi, mut f_hi) = (gamma_max, slope_end);
    let mut side = 0i32;
    for _ in 0..40 {
        let mut gamma = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(gamma > lo && gamma < hi) {
            gamma = 0.5 * (lo + hi);
        }
        let (sol, slope) = eval(gamma, &best.1.warm, inner_iterations)?;
        if sol.value >= best.1.value {
            best = (gamma, sol);
        }
        if slope.abs() <= 1e-3 * slope0 || hi - lo <= 1e-12 * gamma_max.max(1e-300) {
            break;
        }
        if slope > 0.0 {
            lo = gamma;
            f_lo = slope;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = gamma;
            f_hi = slope;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(best)
}
