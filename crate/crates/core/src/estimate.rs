//! Counting and maximization estimates with certified approximation intervals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{cap, default_box_radius, CapacityOptions, SumZeroBasis};
use crate::error::{CapError, Result};
use crate::matroid::{MatroidKind, MatroidSpec};
use crate::numeric::{binomial, dot, ln_pow_over_factorial};
use crate::poly::{DeterminantalSpec, PolynomialOracle};
use crate::solver::{minimize, saddle, ConvexProgram, InnerSolution, SaddleProgram, SolveStatus};

/// A named certified constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBound {
    pub name: String,
    pub value: f64,
}

impl NamedBound {
    fn new(name: &str, value: f64) -> Self {
        Self { name: name.to_string(), value }
    }
}

/// Selection data behind a dual-selection bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionInfo {
    pub c: f64,
    pub kappa: f64,
    pub construction: String,
}

/// Upper bound on the capacity-to-target ratio for a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBound {
    /// The smallest certified candidate.
    pub best: NamedBound,
    pub candidates: Vec<NamedBound>,
    pub selection: Option<SelectionInfo>,
}

/// Certified candidates for `M(B)`, the worst-case ratio `Cap_B(g) / g_B` over
/// real stable `g`. With `multilinear` set, bounds valid only for multilinear
/// `g` are included.
pub fn bound_m(mat: &MatroidSpec, multilinear: bool) -> Result<RatioBound> {
    if !mat.is_matroid() {
        return Err(CapError::UnsupportedSelection(
            "approximation bounds need a matroid base family".into(),
        ));
    }
    let m = mat.m();
    let n = mat.rank();
    let ln_mm = ln_pow_over_factorial(m);
    let mut candidates = Vec::new();
    let mut selection = None;
    match mat.kind() {
        MatroidKind::Uniform => {
            candidates.push(NamedBound::new("uniform-exponential", (n as f64).exp()));
            let k = m - n;
            candidates.push(NamedBound::new("uniform-closed-form", (ln_mm - ln_pow_over_factorial(k)).exp()));
            if multilinear {
                candidates.push(NamedBound::new("uniform-multilinear", 1.0));
            }
        }
        MatroidKind::Partition { parts, quotas } => {
            let free: f64 = parts.iter().zip(quotas).map(|(p, b)| ln_pow_over_factorial(p.len() - b)).sum();
            candidates.push(NamedBound::new("partition-closed-form", (ln_mm - free).exp()));
            if multilinear {
                let lin: f64 = quotas.iter().map(|&b| ln_pow_over_factorial(b)).sum();
                candidates.push(NamedBound::new(
                    "partition-multilinear-closed-form",
                    (ln_pow_over_factorial(n) - lin).exp(),
                ));
            }
        }
        _ => {}
    }
    match mat.dual().build_selection() {
        Ok(sel) => {
            candidates.push(NamedBound::new("dual-selection", sel.c * ln_mm.exp() / sel.kappa));
            if multilinear && sel.h.is_multilinear() {
                candidates.push(NamedBound::new(
                    "dual-selection-multilinear",
                    sel.c * 2f64.powi(m as i32) / sel.kappa,
                ));
            }
            selection =
                Some(SelectionInfo { c: sel.c, kappa: sel.kappa, construction: sel.construction.to_string() });
        }
        Err(e) if candidates.is_empty() => return Err(e),
        Err(_) => {}
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .expect("at least one candidate");
    Ok(RatioBound { best, candidates, selection })
}

/// `bound_m`, or an infinite ratio named `"none"` when the family has no
/// certified bound (non-matroids, families without a stable selection).
fn bound_or_unbounded(mat: &MatroidSpec, multilinear: bool) -> Result<RatioBound> {
    match bound_m(mat, multilinear) {
        Err(CapError::UnsupportedSelection(_)) => Ok(RatioBound {
            best: NamedBound::new("none", f64::INFINITY),
            candidates: Vec::new(),
            selection: None,
        }),
        other => other,
    }
}

/// `A(B) = max_{x∈P(B)} Σ_{S∈B} x^S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ABound {
    /// Value used in maximization intervals.
    pub value: f64,
    pub certified: NamedBound,
    /// Best value found by multistart ascent, when the bases are enumerable.
    /// It is a lower estimate of `A(B)` and carries no certificate.
    pub numeric: Option<f64>,
}

const A_BOUND_BASE_LIMIT: usize = 2000;

pub fn a_bound(mat: &MatroidSpec, opts: &CapacityOptions) -> Result<ABound> {
    let n = mat.rank();
    let certified = match mat.kind() {
        MatroidKind::Uniform => NamedBound::new("uniform-exact", symmetric_max(mat.m(), n)),
        MatroidKind::Partition { parts, quotas } => NamedBound::new(
            "partition-exact",
            parts.iter().zip(quotas).map(|(p, &b)| symmetric_max(p.len(), b)).product(),
        ),
        _ => NamedBound::new("exponential", (n as f64).exp()),
    };
    if matches!(mat.kind(), MatroidKind::Uniform | MatroidKind::Partition { .. }) {
        return Ok(ABound { value: certified.value, certified, numeric: None });
    }
    let numeric = match mat.enumerate_bases(A_BOUND_BASE_LIMIT) {
        Ok(bases) => Some(multistart_base_sum(mat, &bases, opts.seed)?),
        Err(CapError::EnumerationLimit { .. }) => None,
        Err(e) => return Err(e),
    };
    let value = numeric.map_or(certified.value, |v| v.min(certified.value));
    Ok(ABound { value, certified, numeric })
}

/// `max e_b(x)` over `x ∈ [0,1]^p` with `Σx = b`: `C(p,b) (b/p)^b`.
fn symmetric_max(p: usize, b: usize) -> f64 {
    if b == 0 {
        return 1.0;
    }
    binomial(p, b) * (b as f64 / p as f64).powi(b as i32)
}

fn base_sum(bases: &[Vec<usize>], x: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for s in bases {
        value += s.iter().map(|&i| x[i]).product::<f64>();
        for (k, &i) in s.iter().enumerate() {
            grad[i] += s.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, &j)| x[j]).product::<f64>();
        }
    }
    (value, grad)
}

/// Frank–Wolfe ascent on `Σ_S x^S` from random points of `P(B)`.
fn multistart_base_sum(mat: &MatroidSpec, bases: &[Vec<usize>], seed: u64) -> Result<f64> {
    let m = mat.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a0b0);
    let mut best = 1.0f64;
    let starts = if bases.len() <= 1 { 1 } else { 200 };
    for _ in 0..starts {
        let mut x = vec![0.0; m];
        let k = rng.random_range(1..=m + 1);
        for _ in 0..k {
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in mat.min_weight_base(&w)?.0 {
                x[i] += 1.0 / k as f64;
            }
        }
        for _ in 0..30 {
            let (v, grad) = base_sum(bases, &x);
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let s = mat.min_weight_base(&neg)?.0;
            let mut d: Vec<f64> = x.iter().map(|v| -v).collect();
            for i in s {
                d[i] += 1.0;
            }
            if dot(&grad, &d) <= 1e-12 {
                break;
            }
            // golden-section search along the segment
            let at = |t: f64| {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                base_sum(bases, &y).0
            };
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..12 {
                let c = b - phi * (b - a);
                let e = a + phi * (b - a);
                if at(c) < at(e) {
                    a = c;
                } else {
                    b = e;
                }
            }
            let mut t = 0.5 * (a + b);
            if at(1.0) > at(t) {
                t = 1.0;
            }
            if at(t) <= v {
                break;
            }
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += t * di;
            }
        }
        best = best.max(base_sum(bases, &x).0);
    }
    Ok(best)
}

/// A point estimate with the interval `[lower, upper]` that provably contains the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateInterval {
    pub point: f64,
    pub log_point: f64,
    pub lower: f64,
    pub upper: f64,
    pub bound: NamedBound,
    pub candidates: Vec<NamedBound>,
    pub selection: Option<SelectionInfo>,
    pub a_bound: Option<ABound>,
    /// Maximizer of the relaxation, when the estimate is a maximization.
    pub point_x: Option<Vec<f64>>,
    pub status: SolveStatus,
    pub iterations: usize,
}

fn require_stable(g: &PolynomialOracle) -> Result<()> {
    if g.is_real_stable_asserted() {
        Ok(())
    } else {
        Err(CapError::NotRealStable)
    }
}

/// Estimates `g_B = Σ_{S∈B} g_S` by `Cap_B(g)`, which lies in `[g_B, M̂ g_B]`.
pub fn count_estimate(g: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<EstimateInterval> {
    require_stable(g)?;
    let ratio = bound_or_unbounded(mat, g.is_multilinear())?;
    let c = cap(g, mat, opts)?;
    Ok(EstimateInterval {
        point: c.value,
        log_point: c.log_value,
        lower: c.value / ratio.best.value,
        upper: c.value,
        bound: ratio.best,
        candidates: ratio.candidates,
        selection: ratio.selection,
        a_bound: None,
        point_x: None,
        status: c.status,
        iterations: c.iterations,
    })
}

/// Estimates `max_{S∈B} g_S` by `sup_{x∈P(B)} Cap_B(g(x_1 z_1, …, x_m z_m))`,
/// which lies in `[max g_S, M̂ Â max g_S]`.
pub fn max_estimate(g: &PolynomialOracle, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<EstimateInterval> {
    require_stable(g)?;
    if g.m() != mat.m() {
        return Err(CapError::DimensionMismatch { expected: mat.m(), got: g.m() });
    }
    g.probe_homogeneity(20, opts.seed)?;
    if g.degree() != mat.rank() {
        return Err(CapError::DegreeRankMismatch { degree: g.degree(), rank: mat.rank() });
    }
    let ratio = bound_or_unbounded(mat, g.is_multilinear())?;
    let a = a_bound(mat, opts)?;
    let m = g.m();
    let n = mat.rank();
    let log_g1 = g.log_at_ones();
    let scale = ratio.best.value * a.value;
    let interval = |log_point: f64, x: Option<Vec<f64>>, status, iterations| {
        let point = log_point.exp();
        EstimateInterval {
            point,
            log_point,
            lower: point / scale,
            upper: point,
            bound: ratio.best.clone(),
            candidates: ratio.candidates.clone(),
            selection: ratio.selection.clone(),
            a_bound: Some(a.clone()),
            point_x: x,
            status,
            iterations,
        }
    };
    if log_g1 == f64::NEG_INFINITY {
        return Ok(interval(f64::NEG_INFINITY, None, SolveStatus::Converged, 0));
    }
    let radius = opts.box_radius.unwrap_or_else(|| default_box_radius(log_g1, n, m));
    let basis = SumZeroBasis::new(m);
    let inner_eps = opts.eps * 0.1;
    let inner = |x: &[f64], warm: Option<&[f64]>| -> Result<InnerSolution> {
        let log_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let objective = |u: &[f64]| {
            let y = basis.expand(u);
            let shifted: Vec<f64> = y.iter().zip(&log_x).map(|(a, b)| a + b).collect();
            let (lf, mut grad) = g.log_eval_grad_y(&shifted);
            let (s, w) = mat.min_weight_base(&y).expect("dimension checked");
            for i in s {
                grad[i] -= 1.0;
            }
            (lf - w, basis.reduce(&grad))
        };
        let mut prog = ConvexProgram::new(basis.dim(), objective)
            .with_box_radius(radius)
            .with_eps(inner_eps)
            .with_max_iter(opts.budget);
        if let Some(w) = warm {
            prog = prog.with_start(w.to_vec());
        }
        let min = minimize(&prog)?;
        let mut y = basis.expand(&min.point);
        let (_, phi) = mat.min_weight_base(&y)?;
        if n > 0 {
            for v in &mut y {
                *v -= phi / n as f64;
            }
        }
        tighten(mat, &mut y)?;
        let shifted: Vec<f64> = y.iter().zip(&log_x).map(|(a, b)| a + b).collect();
        let (lf, ldz) = g.log_eval_dz(&shifted);
        let supergradient = y.iter().zip(&ldz).map(|(yi, li)| (yi + li).exp()).collect();
        Ok(InnerSolution {
            value: min.value.min(lf - mat.min_weight_base(&y)?.1),
            supergradient,
            warm: min.point,
            dual_bound: None,
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
    Ok(interval(res.value, Some(res.point), res.status, res.iterations + res.inner_iterations))
}

/// Lowers each `y_i` until some minimum-weight base contains `i`.
///
/// The minimum base weight is unchanged and `log g` can only decrease, so a
/// minimizer stays a minimizer; coordinates that were free (for instance where
/// `x_i = 0`) now give the smallest supergradient entry instead of an
/// arbitrary one.
fn tighten(mat: &MatroidSpec, y: &mut [f64]) -> Result<()> {
    const LIFT: f64 = 1e6;
    let (_, phi) = mat.min_weight_base(y)?;
    for i in 0..y.len() {
        let saved = y[i];
        y[i] = saved - LIFT;
        let (s, w) = mat.min_weight_base(y)?;
        y[i] = saved;
        if s.contains(&i) {
            let slack = w + LIFT - phi;
            if slack > 0.0 {
                y[i] -= slack;
            }
        }
    }
    Ok(())
}

/// Estimates `max_{S∈B} det(L_{S,S})` for a symmetric positive semidefinite `L`.
pub fn subdet_max(l: &DMatrix<f64>, mat: &MatroidSpec, opts: &CapacityOptions) -> Result<EstimateInterval> {
    let m = l.nrows();
    if l.ncols() != m {
        return Err(CapError::DimensionMismatch { expected: m, got: l.ncols() });
    }
    if m != mat.m() {
        return Err(CapError::DimensionMismatch { expected: mat.m(), got: m });
    }
    let amax = l.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if (l - l.transpose()).iter().any(|v| v.abs() > 1e-9 * amax.max(1.0)) {
        return Err(CapError::NotPsd("matrix is not symmetric".into()));
    }
    let factor = psd_factor(l)?;
    let n = mat.rank();
    let eig = l.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
    let rank = eig.eigenvalues.iter().filter(|v| **v > 1e-9 * lmax.max(f64::MIN_POSITIVE) * m as f64).count();
    let g = PolynomialOracle::determinantal_with_degree(DeterminantalSpec::new(factor)?, n);
    if rank < n {
        let ratio = bound_or_unbounded(mat, true)?;
        let a = a_bound(mat, opts)?;
        return Ok(EstimateInterval {
            point: 0.0,
            log_point: f64::NEG_INFINITY,
            lower: 0.0,
            upper: 0.0,
            bound: ratio.best,
            candidates: ratio.candidates,
            selection: ratio.selection,
            a_bound: Some(a),
            point_x: None,
            status: SolveStatus::BoxActive,
            iterations: 0,
        });
    }
    max_estimate(&g, mat, opts)
}

/// `V` with `V Vᵀ = L + δI`, trying shifts `δ` up to `1e-10 · tr L`.
fn psd_factor(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = l.nrows();
    let trace = l.trace().max(0.0);
    for delta in [0.0, 1e-16, 1e-14, 1e-12, 1e-10] {
        let shifted = l + DMatrix::identity(m, m) * (delta * trace);
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.l());
        }
    }
    Err(CapError::NotPsd(format!(
        "Cholesky failed with diagonal shifts up to 1e-10 · trace ({trace:.3e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{ProductSpec, SparseTerms};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ratio_bounds() {
        let u = MatroidSpec::uniform(4, 4).unwrap();
        let b = bound_m(&u, false).unwrap();
        assert!(close(b.best.value, 4f64.exp().min(256.0 / 24.0), 1e-12));
        let g = MatroidSpec::graphic(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let b = bound_m(&g, false).unwrap();
        assert!(close(b.best.value, 27.0 / 6.0, 1e-9), "{b:?}");
        let p = MatroidSpec::partition(4, vec![vec![0, 1], vec![2, 3]], vec![1, 1]).unwrap();
        let b = bound_m(&p, true).unwrap();
        assert!(close(b.best.value, 2.0, 1e-12), "{b:?}");
        let not = MatroidSpec::explicit(4, vec![vec![0, 1], vec![2, 3]], false).unwrap();
        assert!(bound_m(&not, false).is_err());
    }

    #[test]
    fn a_bound_examples() {
        let opts = CapacityOptions::default();
        let x = MatroidSpec::explicit(4, vec![vec![0, 1], vec![2, 3]], true).unwrap();
        let a = a_bound(&x, &opts).unwrap();
        assert!(close(a.value, 1.0, 1e-6));
        let u = a_bound(&MatroidSpec::uniform(4, 2).unwrap(), &opts).unwrap();
        assert!(close(u.value, 1.5, 1e-12));
    }

    #[test]
    fn count_example() {
        let g = PolynomialOracle::sparse(
            SparseTerms::new(3, vec![(vec![1, 1, 0], 1.0), (vec![1, 0, 1], 1.0), (vec![0, 1, 1], 1.0)]).unwrap(),
        )
        .assert_real_stable();
        let e = count_estimate(&g, &MatroidSpec::uniform(3, 2).unwrap(), &CapacityOptions::default()).unwrap();
        assert!(close(e.point, 3.0, 1e-5));
        assert!(e.lower <= 3.0 + 1e-6 && e.upper >= 3.0 - 1e-5);
    }

    #[test]
    fn non_matroid_gets_trivial_lower_bound() {
        let g = PolynomialOracle::sparse(SparseTerms::new(4, vec![(vec![1, 1, 0, 0], 5.0)]).unwrap())
            .assert_real_stable();
        let b = MatroidSpec::explicit(4, vec![vec![0, 1], vec![2, 3]], false).unwrap();
        let e = max_estimate(&g, &b, &CapacityOptions::default()).unwrap();
        assert!(close(e.point, 5.0, 1e-5), "{e:?}");
        assert_eq!(e.lower, 0.0);
        assert_eq!(e.bound.name, "none");
    }

    #[test]
    fn unstable_input_rejected() {
        let g = PolynomialOracle::sparse(SparseTerms::new(2, vec![(vec![1, 1], 1.0)]).unwrap());
        assert!(matches!(
            count_estimate(&g, &MatroidSpec::uniform(2, 2).unwrap(), &CapacityOptions::default()),
            Err(CapError::NotRealStable)
        ));
    }

    #[test]
    fn max_estimate_sandwich() {
        let g = PolynomialOracle::linear_product(
            ProductSpec::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.3, 1.0, 2.0]]).unwrap(),
        );
        let mat = MatroidSpec::uniform(3, 2).unwrap();
        let e = max_estimate(&g, &mat, &CapacityOptions::default()).unwrap();
        // coefficients: z0z1: 1+0.6, z0z2: 2+0.15, z1z2: 4+0.5
        let opt = 4.5;
        assert!(e.upper >= opt * (1.0 - 1e-4), "{e:?}");
        assert!(e.lower <= opt * (1.0 + 1e-4), "{e:?}");
    }

    #[test]
    fn subdet_diagonal() {
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let mat = MatroidSpec::partition(4, vec![vec![0, 1], vec![2, 3]], vec![1, 1]).unwrap();
        let e = subdet_max(&l, &mat, &CapacityOptions::default()).unwrap();
        assert!(e.upper >= 8.0 * (1.0 - 1e-4) && e.lower <= 8.0 * (1.0 + 1e-4), "{e:?}");
        let rank1 = DMatrix::from_element(4, 4, 1.0);
        let z = subdet_max(&rank1, &mat, &CapacityOptions::default()).unwrap();
        assert_eq!(z.point, 0.0);
    }
}
