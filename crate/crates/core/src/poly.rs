//! Nonnegative polynomials as evaluation oracles.
//!
//! Every oracle evaluates `log g(e^y)` in log coordinates. Coordinates equal to
//! `-inf` stand for exact zeros (used by [`PolynomialOracle::restrict_scale`] at
//! polytope vertices) and are handled by dropping the vanishing contributions
//! rather than forming `0 * inf`.
//!
//! Besides the value, every kind supplies `log(∂_i g / g)` analytically. The
//! generic interpolation route ([`PolynomialOracle::partial_derivative`]) only
//! uses evaluations and is kept as an independent check of those gradients.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CapError, Result};
use crate::numeric::{binomial, elementary_symmetric, log_add, log_sum_exp, Combinations};

/// Which construction backs an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyKind {
    Sparse,
    Product,
    Determinantal,
    PartitionPower,
    Restricted,
    ProductOfTwo,
}

/// Explicit monomial expansion `Σ_α g_α z^α` with strictly positive coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTerms {
    m: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl SparseTerms {
    /// Merges repeated exponents and drops zero coefficients.
    pub fn new(m: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (alpha, c) in terms {
            if alpha.len() != m {
                return Err(CapError::DimensionMismatch { expected: m, got: alpha.len() });
            }
            if !c.is_finite() || c < 0.0 {
                return Err(CapError::InvalidPolynomial(format!(
                    "coefficient {c} must be finite and nonnegative"
                )));
            }
            *merged.entry(alpha).or_insert(0.0) += c;
        }
        let terms = merged.into_iter().filter(|(_, c)| *c > 0.0).collect();
        Ok(Self { m, terms })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Rows `v_1..v_m` of a real `m × d` matrix; induces `Σ_{|S|=n} det(V_S V_Sᵀ) z^S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterminantalSpec {
    pub v: DMatrix<f64>,
}

impl DeterminantalSpec {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.ncols() == 0 || v.nrows() == 0 {
            return Err(CapError::InvalidPolynomial("V must have at least one row and column".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CapError::InvalidPolynomial("V has non-finite entries".into()));
        }
        Ok(Self { v })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }
}

/// Nonnegative `n × m` matrix `A`; induces `Π_i Σ_j A_ij z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpec {
    pub a: DMatrix<f64>,
}

impl ProductSpec {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.ncols() == 0 {
            return Err(CapError::InvalidPolynomial("A must have at least one column".into()));
        }
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CapError::InvalidPolynomial("A must be finite and nonnegative".into()));
        }
        Ok(Self { a })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CapError::InvalidPolynomial("ragged matrix rows".into()));
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(r, c, &data))
}

#[derive(Debug)]
struct Term {
    vars: Vec<(usize, u32)>,
    log_coef: f64,
}

#[derive(Debug)]
enum DetForm {
    /// Degree exceeds the rank: every minor vanishes.
    Zero,
    /// `det(Bᵀ Z B)` with `B` of full column rank `n`.
    Full(DMatrix<f64>),
    /// `e_n` of the eigenvalues of `Bᵀ Z B` for `B` of rank larger than `n`.
    Elementary(DMatrix<f64>, usize),
    /// Explicit minors `det(B_S B_Sᵀ)`. Factorizations of `Bᵀ Z B` lose the
    /// small eigenvalues when `log z` is widely spread, so desk-scale instances
    /// are expanded once and evaluated term by term.
    Expanded { terms: Vec<Term>, by_var: Vec<Vec<usize>> },
}

/// Largest number of `n`-subsets for which determinantal polynomials are expanded.
const DET_EXPANSION_LIMIT: f64 = 20_000.0;

fn expand_minors(b: &DMatrix<f64>, n: usize) -> DetForm {
    let m = b.nrows();
    let mut terms = Vec::new();
    let mut by_var = vec![Vec::new(); m];
    for s in Combinations::new(m, n) {
        let rows = DMatrix::from_fn(n, b.ncols(), |a, c| b[(s[a], c)]);
        let hadamard: f64 = s.iter().map(|&i| b.row(i).norm_squared()).product();
        let d = (&rows * rows.transpose()).determinant();
        if d > 1e-12 * hadamard {
            for &i in &s {
                by_var[i].push(terms.len());
            }
            terms.push(Term { vars: s.iter().map(|&i| (i, 1)).collect(), log_coef: d.ln() });
        }
    }
    DetForm::Expanded { terms, by_var }
}

#[derive(Debug)]
enum Node {
    Sparse {
        spec: SparseTerms,
        terms: Vec<Term>,
        by_var: Vec<Vec<usize>>,
    },
    Product {
        spec: ProductSpec,
        log_a: DMatrix<f64>,
    },
    Determinantal {
        spec: DeterminantalSpec,
        form: DetForm,
    },
    PartitionPower {
        parts: Vec<Vec<usize>>,
        powers: Vec<usize>,
        part_of: Vec<Option<usize>>,
    },
    Restricted {
        base: PolynomialOracle,
        log_x: Vec<f64>,
    },
    ProductOfTwo(PolynomialOracle, PolynomialOracle),
}

/// Evaluable nonnegative polynomial in `m` variables with structural metadata.
///
/// Oracles are immutable and cheap to clone; they can be shared across threads.
#[derive(Debug, Clone)]
pub struct PolynomialOracle {
    node: Arc<Node>,
    m: usize,
    degree: usize,
    homogeneous: bool,
    var_degree: Vec<u32>,
    real_stable: bool,
    log_scale: f64,
}

impl PolynomialOracle {
    pub fn sparse(terms: SparseTerms) -> Self {
        let m = terms.m;
        let mut var_degree = vec![0u32; m];
        let mut degrees = Vec::with_capacity(terms.len());
        let mut compiled = Vec::with_capacity(terms.len());
        let mut by_var = vec![Vec::new(); m];
        for (t, (alpha, c)) in terms.terms.iter().enumerate() {
            let vars: Vec<(usize, u32)> =
                alpha.iter().enumerate().filter(|(_, a)| **a > 0).map(|(i, a)| (i, *a)).collect();
            for &(i, a) in &vars {
                var_degree[i] = var_degree[i].max(a);
                by_var[i].push(t);
            }
            degrees.push(alpha.iter().map(|a| *a as usize).sum::<usize>());
            compiled.push(Term { vars, log_coef: c.ln() });
        }
        let degree = degrees.iter().copied().max().unwrap_or(0);
        let homogeneous = degrees.iter().all(|d| *d == degree);
        Self {
            node: Arc::new(Node::Sparse { spec: terms, terms: compiled, by_var }),
            m,
            degree,
            homogeneous,
            var_degree,
            real_stable: false,
            log_scale: 0.0,
        }
    }

    /// The constant polynomial `c` in `m` variables.
    pub fn constant(m: usize, c: f64) -> Result<Self> {
        Ok(Self::sparse(SparseTerms::new(m, vec![(vec![0; m], c)])?).assert_real_stable())
    }

    /// `Π_i (Σ_j A_ij z_j)`; real stable for nonnegative `A`.
    pub fn linear_product(spec: ProductSpec) -> Self {
        let (rows, m) = spec.a.shape();
        let log_a = spec.a.map(|x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY });
        let var_degree =
            (0..m).map(|j| (0..rows).filter(|&r| spec.a[(r, j)] > 0.0).count() as u32).collect();
        Self {
            node: Arc::new(Node::Product { spec, log_a }),
            m,
            degree: rows,
            homogeneous: true,
            var_degree,
            real_stable: true,
            log_scale: 0.0,
        }
    }

    /// Determinantal polynomial of degree `rank(V)`.
    pub fn determinantal(spec: DeterminantalSpec) -> Self {
        let (_, rank, _) = column_factor(&spec.v);
        Self::determinantal_with_degree(spec, rank)
    }

    /// `Σ_{|S|=n} det(V_S V_Sᵀ) z^S` for an explicit degree `n`.
    pub fn determinantal_with_degree(spec: DeterminantalSpec, n: usize) -> Self {
        let m = spec.v.nrows();
        let (b, rank, _) = column_factor(&spec.v);
        let form = if n > rank {
            DetForm::Zero
        } else if n > 0 && binomial(m, n) <= DET_EXPANSION_LIMIT {
            expand_minors(&b, n)
        } else if n == rank {
            DetForm::Full(b)
        } else {
            DetForm::Elementary(b, n)
        };
        let var_degree = (0..m)
            .map(|i| u32::from(n > 0 && spec.v.row(i).iter().any(|x| *x != 0.0)))
            .collect();
        Self {
            node: Arc::new(Node::Determinantal { spec, form }),
            m,
            degree: n,
            homogeneous: true,
            var_degree,
            real_stable: true,
            log_scale: 0.0,
        }
    }

    /// `Π_j (Σ_{i ∈ P_j} z_i)^{b_j}` over disjoint parts of `0..m`.
    pub fn partition_power(m: usize, parts: Vec<Vec<usize>>, powers: Vec<usize>) -> Result<Self> {
        if parts.len() != powers.len() {
            return Err(CapError::InvalidPolynomial("parts and powers differ in length".into()));
        }
        let mut part_of = vec![None; m];
        for (j, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(CapError::InvalidPolynomial(format!("part {j} is empty")));
            }
            for &i in part {
                if i >= m {
                    return Err(CapError::IndexOutOfRange { index: i, m });
                }
                if part_of[i].is_some() {
                    return Err(CapError::InvalidPolynomial(format!("element {i} is in two parts")));
                }
                part_of[i] = Some(j);
            }
        }
        let var_degree = part_of.iter().map(|p| p.map_or(0, |j| powers[j] as u32)).collect();
        Ok(Self {
            node: Arc::new(Node::PartitionPower { parts, powers: powers.clone(), part_of }),
            m,
            degree: powers.iter().sum(),
            homogeneous: true,
            var_degree,
            real_stable: true,
            log_scale: 0.0,
        })
    }

    /// Caller's assertion that a sparse polynomial is real stable.
    pub fn assert_real_stable(mut self) -> Self {
        self.real_stable = true;
        self
    }

    pub fn with_real_stable_assertion(mut self, asserted: bool) -> Self {
        if self.kind() == PolyKind::Sparse {
            self.real_stable = asserted;
        }
        self
    }

    /// `c · g` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(CapError::InvalidPolynomial(format!("scale {c} must be positive")));
        }
        let mut out = self.clone();
        out.log_scale += c.ln();
        Ok(out)
    }

    /// Oracle for `y ↦ g(x_1 y_1, …, x_m y_m)`; zero entries of `x` are allowed.
    pub fn restrict_scale(&self, x: &[f64]) -> Result<Self> {
        self.check_len(x)?;
        for (i, &xi) in x.iter().enumerate() {
            if !(xi >= 0.0) || !xi.is_finite() {
                return Err(CapError::NegativeCoordinate { index: i, value: xi });
            }
        }
        let log_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let var_degree =
            self.var_degree.iter().zip(x).map(|(d, xi)| if *xi > 0.0 { *d } else { 0 }).collect();
        Ok(Self {
            node: Arc::new(Node::Restricted { base: self.clone(), log_x }),
            m: self.m,
            degree: self.degree,
            homogeneous: self.homogeneous,
            var_degree,
            real_stable: self.real_stable,
            log_scale: 0.0,
        })
    }

    /// Pointwise product; degrees add and stability is the AND of the inputs.
    pub fn product(&self, other: &PolynomialOracle) -> Result<Self> {
        if self.m != other.m {
            return Err(CapError::DimensionMismatch { expected: self.m, got: other.m });
        }
        let var_degree = self.var_degree.iter().zip(&other.var_degree).map(|(a, b)| a + b).collect();
        Ok(Self {
            node: Arc::new(Node::ProductOfTwo(self.clone(), other.clone())),
            m: self.m,
            degree: self.degree + other.degree,
            homogeneous: self.homogeneous && other.homogeneous,
            var_degree,
            real_stable: self.real_stable && other.real_stable,
            log_scale: 0.0,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn is_multilinear(&self) -> bool {
        self.var_degree.iter().all(|d| *d <= 1)
    }

    pub fn is_real_stable_asserted(&self) -> bool {
        self.real_stable
    }

    /// Upper bound on the degree of each variable.
    pub fn var_degree(&self) -> &[u32] {
        &self.var_degree
    }

    pub fn kind(&self) -> PolyKind {
        match &*self.node {
            Node::Sparse { .. } => PolyKind::Sparse,
            Node::Product { .. } => PolyKind::Product,
            Node::Determinantal { .. } => PolyKind::Determinantal,
            Node::PartitionPower { .. } => PolyKind::PartitionPower,
            Node::Restricted { .. } => PolyKind::Restricted,
            Node::ProductOfTwo(..) => PolyKind::ProductOfTwo,
        }
    }

    /// Explicit terms (scale applied) when the oracle is sparse-backed.
    pub fn sparse_terms(&self) -> Option<SparseTerms> {
        match &*self.node {
            Node::Sparse { spec, .. } => {
                let s = self.log_scale.exp();
                Some(SparseTerms {
                    m: spec.m,
                    terms: spec.terms.iter().map(|(a, c)| (a.clone(), c * s)).collect(),
                })
            }
            _ => None,
        }
    }

    pub fn product_spec(&self) -> Option<&ProductSpec> {
        match &*self.node {
            Node::Product { spec, .. } => Some(spec),
            _ => None,
        }
    }

    pub fn determinantal_spec(&self) -> Option<&DeterminantalSpec> {
        match &*self.node {
            Node::Determinantal { spec, .. } => Some(spec),
            _ => None,
        }
    }

    /// Exact value `g(z)` for strictly positive `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<f64> {
        Ok(self.log_evaluate(z)?.exp())
    }

    /// `log g(z)`; stays finite where `g(z)` itself would overflow.
    pub fn log_evaluate(&self, z: &[f64]) -> Result<f64> {
        self.check_positive(z)?;
        let y: Vec<f64> = z.iter().map(|v| v.ln()).collect();
        Ok(self.log_eval_y(&y))
    }

    /// `log g(1, …, 1)`, the coefficient-size parameter used for solver boxes.
    pub fn log_at_ones(&self) -> f64 {
        self.log_eval_y(&vec![0.0; self.m])
    }

    /// `log g(e^y)`; entries of `y` may be `-inf`.
    pub fn log_eval_y(&self, y: &[f64]) -> f64 {
        self.eval_node(y, false).0 + self.log_scale
    }

    /// `log g(e^y)` together with `log(∂_i g / g)` at `z = e^y`.
    pub fn log_eval_dz(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.eval_node(y, true);
        (v + self.log_scale, g.expect("gradient requested"))
    }

    /// `log g(e^y)` and its gradient with respect to `y`.
    pub fn log_eval_grad_y(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let (v, ldz) = self.log_eval_dz(y);
        if v == f64::NEG_INFINITY {
            return (v, vec![0.0; self.m]);
        }
        let grad = y.iter().zip(&ldz).map(|(yi, li)| (yi + li).exp()).collect();
        (v, grad)
    }

    /// `∂g/∂z_i` at `w` from evaluations only, by univariate interpolation in `z_i`.
    pub fn partial_derivative(&self, i: usize, w: &[f64]) -> Result<f64> {
        self.partial_derivative_with_condition(i, w).map(|(d, _)| d)
    }

    /// Same as [`Self::partial_derivative`], also returning the condition estimate
    /// of the interpolation system that was solved.
    pub fn partial_derivative_with_condition(&self, i: usize, w: &[f64]) -> Result<(f64, f64)> {
        self.check_positive(w)?;
        if i >= self.m {
            return Err(CapError::IndexOutOfRange { index: i, m: self.m });
        }
        if !self.homogeneous {
            return Err(CapError::NotHomogeneous("interpolation derivative needs a degree bound".into()));
        }
        let n = self.degree;
        if n == 0 {
            return Ok((0.0, 1.0));
        }
        let (nodes, condition) = [1.25, 1.5, 1.75, 2.0]
            .iter()
            .map(|&rho| {
                let nodes: Vec<f64> = (0..=n).map(|k| rho_pow(rho, k)).collect();
                let c = vandermonde_condition(&nodes);
                (nodes, c)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("candidate ratios");
        if !(condition <= INTERPOLATION_CONDITION_LIMIT) {
            return Err(CapError::IllConditioned { condition });
        }
        let mut y: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let base = self.log_eval_y(&y);
        if base == f64::NEG_INFINITY {
            return Ok((0.0, condition));
        }
        let yi = y[i];
        let values: Vec<f64> = nodes
            .iter()
            .map(|s| {
                y[i] = yi + s.ln();
                (self.log_eval_y(&y) - base).exp()
            })
            .collect();
        let coeffs = bjorck_pereyra(&nodes, &values);
        let slope: f64 = coeffs.iter().enumerate().map(|(k, c)| k as f64 * c).sum();
        Ok((base.exp() * slope / w[i], condition))
    }

    /// Randomized check of `g(λz) = λ^n g(z)`.
    pub fn probe_homogeneity(&self, trials: usize, seed: u64) -> Result<()> {
        if !self.homogeneous {
            return Err(CapError::NotHomogeneous("metadata reports mixed degrees".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.degree as f64;
        for _ in 0..trials {
            let y: Vec<f64> = (0..self.m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let log_lambda: f64 = rng.random_range(-1.5..1.5);
            let shifted: Vec<f64> = y.iter().map(|v| v + log_lambda).collect();
            let a = self.log_eval_y(&shifted);
            let b = self.log_eval_y(&y) + n * log_lambda;
            if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
                continue;
            }
            if !((a - b).abs() <= 1e-9 * (1.0 + b.abs())) {
                return Err(CapError::NotHomogeneous(format!(
                    "scaling probe mismatch: log g(λz) = {a}, n log λ + log g(z) = {b}"
                )));
            }
        }
        Ok(())
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.m {
            return Err(CapError::DimensionMismatch { expected: self.m, got: z.len() });
        }
        Ok(())
    }

    fn check_positive(&self, z: &[f64]) -> Result<()> {
        self.check_len(z)?;
        for (i, &v) in z.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CapError::NonPositiveCoordinate { index: i, value: v });
            }
        }
        Ok(())
    }

    fn eval_node(&self, y: &[f64], grad: bool) -> (f64, Option<Vec<f64>>) {
        debug_assert_eq!(y.len(), self.m);
        match &*self.node {
            Node::Sparse { terms, by_var, .. } => eval_sparse(terms, by_var, y, grad),
            Node::Product { log_a, .. } => eval_product(log_a, y, grad),
            Node::Determinantal { form, .. } => eval_determinantal(form, y, grad),
            Node::PartitionPower { parts, powers, part_of } => {
                let sums: Vec<f64> =
                    parts.iter().map(|p| log_sum_exp(p.iter().map(|&i| y[i]))).collect();
                let value: f64 = sums
                    .iter()
                    .zip(powers)
                    .filter(|(_, b)| **b > 0)
                    .map(|(s, b)| *b as f64 * s)
                    .sum();
                let g = grad.then(|| {
                    part_of
                        .iter()
                        .map(|p| match p {
                            Some(j) if powers[*j] > 0 => (powers[*j] as f64).ln() - sums[*j],
                            _ => f64::NEG_INFINITY,
                        })
                        .collect()
                });
                (value, g)
            }
            Node::Restricted { base, log_x } => {
                let yy: Vec<f64> = y.iter().zip(log_x).map(|(a, b)| a + b).collect();
                if grad {
                    let (v, ldz) = base.log_eval_dz(&yy);
                    let g = ldz.iter().zip(log_x).map(|(a, b)| a + b).collect();
                    (v, Some(g))
                } else {
                    (base.log_eval_y(&yy), None)
                }
            }
            Node::ProductOfTwo(a, b) => {
                if grad {
                    let (va, ga) = a.log_eval_dz(y);
                    let (vb, gb) = b.log_eval_dz(y);
                    let g = ga.iter().zip(&gb).map(|(p, q)| log_add(*p, *q)).collect();
                    (va + vb, Some(g))
                } else {
                    (a.log_eval_y(y) + b.log_eval_y(y), None)
                }
            }
        }
    }
}

const INTERPOLATION_CONDITION_LIMIT: f64 = 1e12;

fn rho_pow(rho: f64, k: usize) -> f64 {
    rho.powi(k as i32)
}

fn eval_sparse(terms: &[Term], by_var: &[Vec<usize>], y: &[f64], grad: bool) -> (f64, Option<Vec<f64>>) {
    let exps: Vec<f64> = terms
        .iter()
        .map(|t| t.log_coef + t.vars.iter().map(|&(i, a)| weighted(a, y[i])).sum::<f64>())
        .collect();
    let value = log_sum_exp(exps.iter().copied());
    if !grad {
        return (value, None);
    }
    if value == f64::NEG_INFINITY {
        return (value, Some(vec![f64::NEG_INFINITY; y.len()]));
    }
    let g = (0..y.len())
        .map(|i| {
            let parts = by_var[i].iter().map(|&t| {
                let term = &terms[t];
                let a = term.vars.iter().find(|(k, _)| *k == i).map_or(0, |(_, a)| *a);
                if y[i].is_finite() && exps[t].is_finite() {
                    exps[t] + (a as f64).ln() - y[i]
                } else {
                    term.log_coef
                        + (a as f64).ln()
                        + term
                            .vars
                            .iter()
                            .map(|&(k, b)| if k == i { weighted(b - 1, y[k]) } else { weighted(b, y[k]) })
                            .sum::<f64>()
                }
            });
            log_sum_exp(parts) - value
        })
        .collect();
    (value, Some(g))
}

/// `a · y` with `0 · (-inf) = 0`.
fn weighted(a: u32, y: f64) -> f64 {
    if a == 0 {
        0.0
    } else {
        a as f64 * y
    }
}

fn eval_product(log_a: &DMatrix<f64>, y: &[f64], grad: bool) -> (f64, Option<Vec<f64>>) {
    let (rows, m) = log_a.shape();
    let row_logs: Vec<f64> =
        (0..rows).map(|r| log_sum_exp((0..m).map(|j| log_a[(r, j)] + y[j]))).collect();
    let value: f64 = row_logs.iter().sum();
    if !grad {
        return (value, None);
    }
    if value == f64::NEG_INFINITY {
        return (value, Some(vec![f64::NEG_INFINITY; m]));
    }
    let g = (0..m)
        .map(|j| log_sum_exp((0..rows).map(|r| log_a[(r, j)] - row_logs[r])))
        .collect();
    (value, Some(g))
}

/// Returns `(B, rank, singular values)` with `B Bᵀ = V Vᵀ` and `B` of full column rank.
/// When `V` already has full column rank it is used as is, which keeps integer
/// representations exact.
fn column_factor(v: &DMatrix<f64>) -> (DMatrix<f64>, usize, Vec<f64>) {
    let svd = v.clone().svd(true, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = smax * 1e-10 * (v.nrows().max(v.ncols()) as f64);
    let rank = sv.iter().filter(|s| **s > tol).count();
    if rank == v.ncols() {
        return (v.clone(), rank, sv);
    }
    let u = svd.u.expect("requested U");
    let mut b = DMatrix::zeros(v.nrows(), rank);
    let mut col = 0;
    for (k, s) in sv.iter().enumerate() {
        if *s > tol {
            for i in 0..v.nrows() {
                b[(i, col)] = u[(i, k)] * s;
            }
            col += 1;
        }
    }
    (b, rank, sv)
}

fn eval_determinantal(form: &DetForm, y: &[f64], grad: bool) -> (f64, Option<Vec<f64>>) {
    let m = y.len();
    let neg = || (f64::NEG_INFINITY, grad.then(|| vec![f64::NEG_INFINITY; m]));
    let (b, n) = match form {
        DetForm::Zero => return neg(),
        DetForm::Expanded { terms, by_var } => return eval_sparse(terms, by_var, y, grad),
        DetForm::Full(b) => (b, b.ncols()),
        DetForm::Elementary(b, n) => (b, *n),
    };
    if n == 0 {
        return (0.0, grad.then(|| vec![f64::NEG_INFINITY; m]));
    }
    let r = b.ncols();
    let nonzero_row = |i: usize| b.row(i).iter().any(|x| *x != 0.0);
    let retained: Vec<usize> = (0..m).filter(|&i| y[i] > f64::NEG_INFINITY && nonzero_row(i)).collect();
    if retained.len() < n {
        return neg();
    }
    let ymax = retained.iter().map(|&i| y[i]).fold(f64::NEG_INFINITY, f64::max);
    if retained.len() < m && matches!(form, DetForm::Full(_)) {
        // exact zeros may leave a rank-deficient set of rows; decide on unscaled rows
        let sub = DMatrix::from_fn(retained.len(), r, |a, c| b[(retained[a], c)]);
        let scale = sub.norm().max(f64::MIN_POSITIVE);
        if sub.rank(1e-10 * scale) < n {
            return neg();
        }
    }
    let mut order = retained.clone();
    let weights: Vec<f64> = (0..m).map(|i| ((y[i] - ymax) / 2.0).exp()).collect();
    let row_norm = |i: usize| weights[i] * b.row(i).norm();
    order.sort_by(|&p, &q| row_norm(q).total_cmp(&row_norm(p)).then(p.cmp(&q)));
    let w = DMatrix::from_fn(order.len(), r, |a, c| weights[order[a]] * b[(order[a], c)]);

    match form {
        DetForm::Full(_) => {
            let rmat = w.qr().r();
            let mut logdet = 0.0;
            for k in 0..n {
                let d = rmat[(k, k)].abs();
                if d == 0.0 {
                    return neg();
                }
                logdet += 2.0 * d.ln();
            }
            let value = n as f64 * ymax + logdet;
            if !grad {
                return (value, None);
            }
            let g = (0..m)
                .map(|i| {
                    if !nonzero_row(i) {
                        return f64::NEG_INFINITY;
                    }
                    let bi = DVector::from_iterator(r, b.row(i).iter().copied());
                    match rmat.tr_solve_upper_triangular(&bi) {
                        Some(x) => -ymax + x.norm_squared().ln(),
                        None => f64::NEG_INFINITY,
                    }
                })
                .collect();
            (value, Some(g))
        }
        DetForm::Elementary(..) => {
            let gram = w.transpose() * &w;
            let eig = gram.symmetric_eigen();
            let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            let lmax = lam.iter().copied().fold(0.0, f64::max);
            if lmax <= 0.0 {
                return neg();
            }
            let scaled: Vec<f64> = lam.iter().map(|l| l / lmax).collect();
            let en = elementary_symmetric(&scaled, n)[n];
            if en <= 0.0 {
                return neg();
            }
            let value = n as f64 * (ymax + lmax.ln()) + en.ln();
            if !grad {
                return (value, None);
            }
            let weights_k: Vec<f64> = (0..r)
                .map(|k| {
                    let others: Vec<f64> =
                        scaled.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, l)| *l).collect();
                    elementary_symmetric(&others, n - 1)[n - 1]
                })
                .collect();
            let g = (0..m)
                .map(|i| {
                    let q: f64 = (0..r)
                        .map(|k| {
                            let proj: f64 = (0..r).map(|c| eig.eigenvectors[(c, k)] * b[(i, c)]).sum();
                            weights_k[k] * proj * proj
                        })
                        .sum();
                    if q > 0.0 {
                        -ymax - lmax.ln() + q.ln() - en.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            (value, Some(g))
        }
        DetForm::Zero | DetForm::Expanded { .. } => unreachable!(),
    }
}

/// Solves the Vandermonde system `Σ_j c_j x_k^j = f_k` in `O(n²)`.
pub(crate) fn bjorck_pereyra(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len() - 1;
    let mut c = f.to_vec();
    for k in 0..n {
        for i in (k + 1..=n).rev() {
            c[i] = (c[i] - c[i - 1]) / (x[i] - x[i - k - 1]);
        }
    }
    for k in (0..n).rev() {
        for i in k..n {
            c[i] -= x[k] * c[i + 1];
        }
    }
    c
}

/// Infinity-norm condition number of the Vandermonde matrix on `nodes`.
pub(crate) fn vandermonde_condition(nodes: &[f64]) -> f64 {
    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |k, j| nodes[k].powi(j as i32));
    let inf_norm = |m: &DMatrix<f64>| {
        (0..m.nrows()).map(|r| m.row(r).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    match v.clone().try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => {
            let c = inf_norm(&v) * inf_norm(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(m: usize, terms: &[(&[u32], f64)]) -> PolynomialOracle {
        PolynomialOracle::sparse(
            SparseTerms::new(m, terms.iter().map(|(a, c)| (a.to_vec(), *c)).collect()).unwrap(),
        )
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn evaluate_examples() {
        let p = PolynomialOracle::linear_product(ProductSpec::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
        assert!(rel(p.evaluate(&[1.0, 1.0]).unwrap(), 4.0) < 1e-14);

        let d = PolynomialOracle::determinantal(DeterminantalSpec::new(DMatrix::identity(2, 2)).unwrap());
        assert!(rel(d.evaluate(&[2.0, 3.0]).unwrap(), 6.0) < 1e-14);

        let s = sparse(4, &[(&[1, 0, 1, 0], 1.0), (&[1, 0, 0, 1], 1.0), (&[0, 1, 1, 0], 1.0), (&[0, 1, 0, 1], 1.0)]);
        assert!(rel(s.evaluate(&[1.0; 4]).unwrap(), 4.0) < 1e-14);
    }

    #[test]
    fn evaluate_errors() {
        let s = sparse(2, &[(&[1, 1], 1.0)]);
        assert!(matches!(s.evaluate(&[1.0]), Err(CapError::DimensionMismatch { .. })));
        assert!(matches!(s.evaluate(&[1.0, 0.0]), Err(CapError::NonPositiveCoordinate { index: 1, .. })));
        assert!(matches!(s.evaluate(&[1.0, -2.0]), Err(CapError::NonPositiveCoordinate { .. })));
    }

    #[test]
    fn sparse_terms_merge_and_drop() {
        let t = SparseTerms::new(2, vec![(vec![1, 0], 1.0), (vec![1, 0], 2.0), (vec![0, 1], 0.0)]).unwrap();
        assert_eq!(t.terms(), &[(vec![1, 0], 3.0)]);
        assert!(SparseTerms::new(2, vec![(vec![1, 0], -1.0)]).is_err());
    }

    #[test]
    fn partial_derivative_examples() {
        let s = sparse(2, &[(&[2, 1], 1.0)]);
        let d = s.partial_derivative(0, &[2.0, 3.0]).unwrap();
        assert!(rel(d, 12.0) < 1e-9, "{d}");

        let p = PolynomialOracle::linear_product(ProductSpec::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
        let d = p.partial_derivative(0, &[1.0, 1.0]).unwrap();
        assert!(rel(d, 4.0) < 1e-9, "{d}");
    }

    #[test]
    fn partial_derivative_requires_homogeneous() {
        let s = sparse(2, &[(&[2, 1], 1.0), (&[1, 0], 1.0)]);
        assert!(matches!(s.partial_derivative(0, &[1.0, 1.0]), Err(CapError::NotHomogeneous(_))));
        assert!(matches!(s.partial_derivative(5, &[1.0, 1.0]), Err(CapError::IndexOutOfRange { .. })));
    }

    #[test]
    fn interpolation_condition_limit_reported() {
        // degree 40 along one variable: the geometric Vandermonde system is hopeless
        let s = sparse(1, &[(&[40], 1.0)]);
        match s.partial_derivative(0, &[1.0]) {
            Err(CapError::IllConditioned { condition }) => assert!(condition > 1e12),
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
    }

    #[test]
    fn restrict_scale_examples() {
        let g = sparse(2, &[(&[1, 1], 1.0)]);
        let r = g.restrict_scale(&[2.0, 3.0]).unwrap();
        assert!(rel(r.evaluate(&[1.0, 1.0]).unwrap(), 6.0) < 1e-14);
        assert!(rel(r.evaluate(&[2.0, 0.5]).unwrap(), 6.0) < 1e-14);

        let ones = g.restrict_scale(&[1.0, 1.0]).unwrap();
        assert!(rel(ones.evaluate(&[1.7, 0.3]).unwrap(), g.evaluate(&[1.7, 0.3]).unwrap()) < 1e-14);

        let sq = PolynomialOracle::linear_product(ProductSpec::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
        let r = sq.restrict_scale(&[1.0, 0.0]).unwrap();
        assert!(rel(r.evaluate(&[5.0, 7.0]).unwrap(), 25.0) < 1e-14);
        assert!(r.is_real_stable_asserted());
        assert_eq!(r.degree(), 2);
        assert!(g.restrict_scale(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn product_examples() {
        let a = sparse(4, &[(&[1, 1, 0, 0], 1.0)]);
        let b = sparse(4, &[(&[0, 0, 1, 1], 1.0)]);
        let ab = a.product(&b).unwrap();
        assert!(rel(ab.evaluate(&[1.0; 4]).unwrap(), 1.0) < 1e-14);
        assert_eq!(ab.degree(), 4);

        let one = PolynomialOracle::constant(4, 1.0).unwrap();
        let a1 = a.product(&one).unwrap();
        let z = [0.3, 1.9, 2.2, 0.7];
        assert!(rel(a1.evaluate(&z).unwrap(), a.evaluate(&z).unwrap()) < 1e-14);
        assert!(!a1.is_real_stable_asserted());

        let other = sparse(3, &[(&[1, 1, 0], 1.0)]);
        assert!(a.product(&other).is_err());
    }

    #[test]
    fn zero_coordinates_in_log_domain() {
        let det = PolynomialOracle::determinantal(
            DeterminantalSpec::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
        );
        // z = (1, 1, 0): only the minor on rows {0, 1} survives
        let r = det.restrict_scale(&[1.0, 1.0, 0.0]).unwrap();
        assert!(rel(r.evaluate(&[1.0, 1.0, 1.0]).unwrap(), 1.0) < 1e-12);
        // z = (1, 0, 0): no minor survives
        let r = det.restrict_scale(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.log_at_ones(), f64::NEG_INFINITY);
    }

    #[test]
    fn elementary_determinantal_matches_minor_sum() {
        // L = diag(1,2,3,4), degree 2: e_2 of the diagonal
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2f64.sqrt(), 3f64.sqrt(), 2.0]));
        let g = PolynomialOracle::determinantal_with_degree(DeterminantalSpec::new(v).unwrap(), 2);
        let z = [0.5, 1.5, 2.0, 0.25];
        let l = [1.0, 2.0, 3.0, 4.0];
        let mut expected = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                expected += l[i] * l[j] * z[i] * z[j];
            }
        }
        assert!(rel(g.evaluate(&z).unwrap(), expected) < 1e-12);
        assert!(g.is_multilinear());
    }

    #[test]
    fn determinantal_stable_at_spread_coordinates() {
        let l = DMatrix::from_row_slice(3, 3, &[2.0, 0.9, 0.3, 0.9, 1.0, 0.2, 0.3, 0.2, 3.0]);
        let v = l.clone().cholesky().unwrap().l();
        let g = PolynomialOracle::determinantal_with_degree(DeterminantalSpec::new(v).unwrap(), 2);
        let y = [60.0, -35.0, -30.0];
        let minor = |a: usize, b: usize| l[(a, a)] * l[(b, b)] - l[(a, b)] * l[(a, b)];
        let expected = log_sum_exp([
            minor(0, 1).ln() + y[0] + y[1],
            minor(0, 2).ln() + y[0] + y[2],
            minor(1, 2).ln() + y[1] + y[2],
        ]);
        assert!((g.log_eval_y(&y) - expected).abs() < 1e-12);
    }

    #[test]
    fn large_determinantal_uses_factorization() {
        let (m, n) = (18, 9);
        let v = DMatrix::from_fn(m, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let g = PolynomialOracle::determinantal(DeterminantalSpec::new(v.clone()).unwrap());
        assert_eq!(g.degree(), n);
        let z: Vec<f64> = (0..m).map(|i| 0.5 + 0.1 * i as f64).collect();
        let direct = (v.transpose() * DMatrix::from_diagonal(&DVector::from_vec(z.clone())) * &v).determinant();
        assert!(rel(g.evaluate(&z).unwrap(), direct) < 1e-9);
    }

    #[test]
    fn bjorck_pereyra_recovers_coefficients() {
        let x = [1.0f64, 1.5, 2.25, 3.375];
        let coeffs = [2.0f64, -1.0, 0.5, 3.0];
        let f: Vec<f64> = x.iter().map(|t| coeffs.iter().enumerate().map(|(k, c)| c * t.powi(k as i32)).sum()).collect();
        let c = bjorck_pereyra(&x, &f);
        for (a, b) in c.iter().zip(coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn metadata() {
        let p = PolynomialOracle::linear_product(ProductSpec::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert!(p.is_multilinear());
        assert!(p.is_real_stable_asserted());
        let q = PolynomialOracle::partition_power(3, vec![vec![0, 1, 2]], vec![2]).unwrap();
        assert!(!q.is_multilinear());
        assert_eq!(q.degree(), 2);
        let s = sparse(2, &[(&[1, 1], 1.0), (&[2, 0], 1.0)]);
        assert!(s.is_homogeneous());
        assert!(!s.is_real_stable_asserted());
        assert!(s.clone().assert_real_stable().is_real_stable_asserted());
        assert_eq!(s.kind(), PolyKind::Sparse);
    }
}
