//! Base families `B ⊆ C([m], n)` and the oracles the convex programs need.
//!
//! Elements are indexed `0..m`. Ties in every combinatorial routine are broken
//! by index so results are reproducible.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{CapError, Result};
use crate::numeric::{dot, ln_factorial, ln_pow_over_factorial, Combinations};
use crate::poly::{DeterminantalSpec, PolynomialOracle, SparseTerms};

/// Families up to this size are checked against the base-exchange axiom.
pub const EXCHANGE_CHECK_LIMIT: usize = 5000;

/// Default cap used when a routine needs the bases explicitly.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 100_000;

const LINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum MatroidKind {
    Uniform,
    Partition { parts: Vec<Vec<usize>>, quotas: Vec<usize> },
    Graphic { vertices: usize, edges: Vec<(usize, usize)> },
    /// Rows of `v` represent the elements. `balanced` asserts that every base has
    /// the same Gram determinant, as for totally unimodular representations.
    Linear { v: DMatrix<f64>, balanced: bool },
    Explicit { bases: Vec<Vec<usize>>, assert_strongly_rayleigh: bool, is_matroid: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatroidSpec {
    kind: MatroidKind,
    m: usize,
    n: usize,
}

/// Result of a base-polytope membership query.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    Inside,
    /// `⟨a, v⟩ ≥ b` holds for every point of the polytope while `⟨a, x⟩ < b − tol`.
    Violated { a: Vec<f64>, b: f64 },
}

/// A c-approximate selection `h` with certified lower capacity `κ`.
#[derive(Debug, Clone)]
pub struct SelectionPoly {
    pub h: PolynomialOracle,
    pub c: f64,
    pub kappa: f64,
    pub construction: &'static str,
}

impl MatroidSpec {
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if n > m {
            return Err(CapError::InvalidMatroid(format!("rank {n} exceeds ground set size {m}")));
        }
        Ok(Self { kind: MatroidKind::Uniform, m, n })
    }

    pub fn partition(m: usize, parts: Vec<Vec<usize>>, quotas: Vec<usize>) -> Result<Self> {
        if parts.len() != quotas.len() {
            return Err(CapError::InvalidMatroid("parts and quotas differ in length".into()));
        }
        let mut seen = vec![false; m];
        for (j, part) in parts.iter().enumerate() {
            for &i in part {
                if i >= m {
                    return Err(CapError::IndexOutOfRange { index: i, m });
                }
                if seen[i] {
                    return Err(CapError::InvalidMatroid(format!("element {i} appears in two parts")));
                }
                seen[i] = true;
            }
            if quotas[j] > part.len() {
                return Err(CapError::InvalidMatroid(format!(
                    "quota {} exceeds size {} of part {j}",
                    quotas[j],
                    part.len()
                )));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CapError::InvalidMatroid(format!("element {i} is in no part")));
        }
        let parts: Vec<Vec<usize>> = parts
            .into_iter()
            .map(|mut p| {
                p.sort_unstable();
                p
            })
            .collect();
        let n = quotas.iter().sum();
        Ok(Self { kind: MatroidKind::Partition { parts, quotas }, m, n })
    }

    pub fn graphic(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(u, v) in &edges {
            if u >= vertices || v >= vertices {
                return Err(CapError::InvalidMatroid(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{vertices}"
                )));
            }
        }
        let mut uf = UnionFind::new(vertices);
        let n = edges.iter().filter(|(u, v)| uf.union(*u, *v)).count();
        let m = edges.len();
        Ok(Self { kind: MatroidKind::Graphic { vertices, edges }, m, n })
    }

    pub fn linear(v: DMatrix<f64>) -> Result<Self> {
        Self::linear_with_balance(v, false)
    }

    /// Linear matroid whose representation is asserted to have unbalance 1.
    pub fn linear_balanced(v: DMatrix<f64>) -> Result<Self> {
        Self::linear_with_balance(v, true)
    }

    fn linear_with_balance(v: DMatrix<f64>, balanced: bool) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CapError::InvalidMatroid("representation has non-finite entries".into()));
        }
        let m = v.nrows();
        let n = numerical_rank(&v);
        Ok(Self { kind: MatroidKind::Linear { v, balanced }, m, n })
    }

    /// Explicit family; accepted even when it is not a matroid (reported by
    /// [`Self::is_matroid`]), since capacities are defined for any family.
    pub fn explicit(m: usize, bases: Vec<Vec<usize>>, assert_strongly_rayleigh: bool) -> Result<Self> {
        let mut family: Vec<Vec<usize>> = Vec::with_capacity(bases.len());
        for mut s in bases {
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(CapError::InvalidMatroid(format!("set {s:?} repeats an element")));
            }
            if let Some(&i) = s.iter().find(|&&i| i >= m) {
                return Err(CapError::IndexOutOfRange { index: i, m });
            }
            family.push(s);
        }
        family.sort();
        family.dedup();
        let n = match family.first() {
            Some(s) => s.len(),
            None => return Err(CapError::EmptyFamily),
        };
        if family.iter().any(|s| s.len() != n) {
            return Err(CapError::InvalidMatroid("sets of different sizes".into()));
        }
        let is_matroid = family.len() > EXCHANGE_CHECK_LIMIT || satisfies_exchange(&family);
        Ok(Self {
            kind: MatroidKind::Explicit { bases: family, assert_strongly_rayleigh, is_matroid },
            m,
            n,
        })
    }

    pub fn kind(&self) -> &MatroidKind {
        &self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    /// False only for explicit families that fail the exchange axiom.
    pub fn is_matroid(&self) -> bool {
        match &self.kind {
            MatroidKind::Explicit { is_matroid, .. } => *is_matroid,
            _ => true,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MatroidKind::Uniform => "uniform",
            MatroidKind::Partition { .. } => "partition",
            MatroidKind::Graphic { .. } => "graphic",
            MatroidKind::Linear { .. } => "linear",
            MatroidKind::Explicit { .. } => "explicit",
        }
    }

    /// Matroid rank of a subset (maximum overlap with a base for explicit families).
    pub fn rank_of(&self, set: &[usize]) -> usize {
        match &self.kind {
            MatroidKind::Uniform => set.len().min(self.n),
            MatroidKind::Partition { parts, quotas } => parts
                .iter()
                .zip(quotas)
                .map(|(p, b)| set.iter().filter(|i| p.binary_search(i).is_ok()).count().min(*b))
                .sum(),
            MatroidKind::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                set.iter().filter(|&&e| uf.union(edges[e].0, edges[e].1)).count()
            }
            MatroidKind::Linear { v, .. } => {
                let sub = DMatrix::from_fn(set.len(), v.ncols(), |r, c| v[(set[r], c)]);
                numerical_rank(&sub)
            }
            MatroidKind::Explicit { bases, .. } => bases
                .iter()
                .map(|s| s.iter().filter(|i| set.contains(i)).count())
                .max()
                .unwrap_or(0),
        }
    }

    pub fn is_base(&self, set: &[usize]) -> bool {
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.n || s.len() != set.len() || s.iter().any(|&i| i >= self.m) {
            return false;
        }
        match &self.kind {
            MatroidKind::Explicit { bases, .. } => bases.binary_search(&s).is_ok(),
            _ => self.rank_of(&s) == self.n,
        }
    }

    /// Minimum-weight base and its weight; the linear optimization oracle over `P(B)`.
    pub fn min_weight_base(&self, w: &[f64]) -> Result<(Vec<usize>, f64)> {
        if w.len() != self.m {
            return Err(CapError::DimensionMismatch { expected: self.m, got: w.len() });
        }
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
        let mut base = match &self.kind {
            MatroidKind::Uniform => order[..self.n].to_vec(),
            MatroidKind::Partition { parts, quotas } => {
                let mut taken = vec![0usize; parts.len()];
                let part_of = part_index(self.m, parts);
                order
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let j = part_of[i];
                        if taken[j] < quotas[j] {
                            taken[j] += 1;
                            true
                        } else {
                            false
                        }
                    })
                    .collect()
            }
            MatroidKind::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                order.iter().copied().filter(|&e| uf.union(edges[e].0, edges[e].1)).collect()
            }
            MatroidKind::Linear { v, .. } => {
                let mut basis = IncrementalBasis::new(v.ncols());
                order.iter().copied().filter(|&i| basis.try_add(v.row(i).iter().copied())).collect()
            }
            MatroidKind::Explicit { bases, .. } => {
                let mut best: Option<(&Vec<usize>, f64)> = None;
                for s in bases {
                    let weight: f64 = s.iter().map(|&i| w[i]).sum();
                    if best.is_none_or(|(_, bw)| weight < bw) {
                        best = Some((s, weight));
                    }
                }
                best.ok_or(CapError::EmptyFamily)?.0.clone()
            }
        };
        if base.len() != self.n {
            return Err(CapError::EmptyFamily);
        }
        base.sort_unstable();
        let weight = base.iter().map(|&i| w[i]).sum();
        Ok((base, weight))
    }

    /// All bases in lexicographic order, failing once more than `limit` are found.
    pub fn enumerate_bases(&self, limit: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::new();
        let push = |s: Vec<usize>, out: &mut Vec<Vec<usize>>| -> Result<()> {
            out.push(s);
            if out.len() > limit {
                return Err(CapError::EnumerationLimit { limit, found: out.len() });
            }
            Ok(())
        };
        match &self.kind {
            MatroidKind::Explicit { bases, .. } => {
                if bases.len() > limit {
                    return Err(CapError::EnumerationLimit { limit, found: bases.len() });
                }
                return Ok(bases.clone());
            }
            MatroidKind::Uniform => {
                for s in Combinations::new(self.m, self.n) {
                    push(s, &mut out)?;
                }
            }
            _ => {
                let mut current = Vec::with_capacity(self.n);
                self.extend_independent(0, &mut current, &mut |s| push(s.to_vec(), &mut out))?;
            }
        }
        Ok(out)
    }

    /// Depth-first lexicographic search over independent sets that can still reach size n.
    fn extend_independent(
        &self,
        start: usize,
        current: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if current.len() == self.n {
            return emit(current);
        }
        let needed = self.n - current.len();
        for i in start..self.m {
            if self.m - i < needed {
                break;
            }
            current.push(i);
            if self.rank_of(current) == current.len() {
                self.extend_independent(i + 1, current, emit)?;
            }
            current.pop();
        }
        Ok(())
    }

    /// Decides `x ∈ P(B)` up to `tol`, returning a violated valid inequality otherwise.
    pub fn membership_p(&self, x: &[f64], tol: f64) -> Result<Membership> {
        if x.len() != self.m {
            return Err(CapError::DimensionMismatch { expected: self.m, got: x.len() });
        }
        let unit = |i: usize, s: f64| {
            let mut a = vec![0.0; self.m];
            a[i] = s;
            a
        };
        for (i, &xi) in x.iter().enumerate() {
            if xi < -tol {
                return Ok(Membership::Violated { a: unit(i, 1.0), b: 0.0 });
            }
            if xi > 1.0 + tol {
                return Ok(Membership::Violated { a: unit(i, -1.0), b: -1.0 });
            }
        }
        let total: f64 = x.iter().sum();
        let n = self.n as f64;
        if total < n - tol {
            return Ok(Membership::Violated { a: vec![1.0; self.m], b: n });
        }
        if total > n + tol {
            return Ok(Membership::Violated { a: vec![-1.0; self.m], b: -n });
        }
        match &self.kind {
            MatroidKind::Uniform => Ok(Membership::Inside),
            MatroidKind::Partition { parts, quotas } => {
                let worst = parts
                    .iter()
                    .zip(quotas)
                    .enumerate()
                    .map(|(j, (p, b))| (j, p.iter().map(|&i| x[i]).sum::<f64>() - *b as f64))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                match worst {
                    Some((j, excess)) if excess > tol => {
                        let mut a = vec![0.0; self.m];
                        for &i in &parts[j] {
                            a[i] = -1.0;
                        }
                        Ok(Membership::Violated { a, b: -(quotas[j] as f64) })
                    }
                    _ => Ok(Membership::Inside),
                }
            }
            _ => {
                let proj = self.project(x, tol)?;
                let a: Vec<f64> = proj.point.iter().zip(x).map(|(p, q)| p - q).collect();
                let dist = dot(&a, &a).sqrt();
                if dist <= tol {
                    return Ok(Membership::Inside);
                }
                let a: Vec<f64> = a.iter().map(|v| v / dist).collect();
                let (_, b) = self.min_weight_base(&a)?;
                if dot(&a, x) < b - tol {
                    Ok(Membership::Violated { a, b })
                } else {
                    Ok(Membership::Inside)
                }
            }
        }
    }

    /// Euclidean projection of `x` onto `P(B)` (Wolfe's minimum-norm-point
    /// method), returned as a convex combination of at most `m + 1` bases.
    pub fn project(&self, x: &[f64], tol: f64) -> Result<Projection> {
        if x.len() != self.m {
            return Err(CapError::DimensionMismatch { expected: self.m, got: x.len() });
        }
        wolfe_projection(self, x, tol)
    }

    /// Dual matroid with bases `{[m] \ S}`.
    pub fn dual(&self) -> MatroidSpec {
        let m = self.m;
        match &self.kind {
            MatroidKind::Uniform => MatroidSpec { kind: MatroidKind::Uniform, m, n: m - self.n },
            MatroidKind::Partition { parts, quotas } => MatroidSpec {
                kind: MatroidKind::Partition {
                    parts: parts.clone(),
                    quotas: parts.iter().zip(quotas).map(|(p, b)| p.len() - b).collect(),
                },
                m,
                n: m - self.n,
            },
            MatroidKind::Graphic { vertices, edges } => {
                let w = cographic_representation(*vertices, edges);
                MatroidSpec { kind: MatroidKind::Linear { v: w, balanced: true }, m, n: m - self.n }
            }
            MatroidKind::Linear { v, balanced } => {
                let w = orthogonal_complement(v, self.n);
                MatroidSpec { kind: MatroidKind::Linear { v: w, balanced: *balanced }, m, n: m - self.n }
            }
            MatroidKind::Explicit { bases, assert_strongly_rayleigh, is_matroid } => {
                let mut comp: Vec<Vec<usize>> = bases
                    .iter()
                    .map(|s| (0..m).filter(|i| s.binary_search(i).is_err()).collect())
                    .collect();
                comp.sort();
                MatroidSpec {
                    kind: MatroidKind::Explicit {
                        bases: comp,
                        assert_strongly_rayleigh: *assert_strongly_rayleigh,
                        is_matroid: *is_matroid,
                    },
                    m,
                    n: m - self.n,
                }
            }
        }
    }

    /// Real stable c-approximate selection with its certified lower-capacity constant.
    pub fn build_selection(&self) -> Result<SelectionPoly> {
        let m = self.m;
        if self.n == 0 {
            return Ok(SelectionPoly {
                h: PolynomialOracle::constant(m, 1.0)?,
                c: 1.0,
                kappa: 1.0,
                construction: "trivial",
            });
        }
        match &self.kind {
            MatroidKind::Uniform => partition_selection(m, &[(0..m).collect()], &[self.n]),
            MatroidKind::Partition { parts, quotas } => partition_selection(m, parts, quotas),
            MatroidKind::Graphic { vertices, edges } => {
                let v = reduced_incidence(*vertices, edges);
                let h = PolynomialOracle::determinantal(DeterminantalSpec::new(v)?);
                Ok(SelectionPoly { h, c: 1.0, kappa: 1.0, construction: "graphic-incidence-determinantal" })
            }
            MatroidKind::Linear { v, balanced } => {
                let h = PolynomialOracle::determinantal_with_degree(DeterminantalSpec::new(v.clone())?, self.n);
                let (lo, hi) = if *balanced {
                    let (base, _) = self.min_weight_base(&vec![0.0; m])?;
                    let d = gram_det(v, &base);
                    check_det(v, &base, d)?;
                    (d, d)
                } else {
                    let bases = self.enumerate_bases(DEFAULT_ENUMERATION_LIMIT).map_err(|e| {
                        CapError::UnsupportedSelection(format!(
                            "unbalance of an unbalanced linear representation needs enumerable bases ({e})"
                        ))
                    })?;
                    base_det_range(v, &bases)?
                };
                Ok(SelectionPoly {
                    h: h.scaled(1.0 / lo)?,
                    c: hi / lo,
                    kappa: 1.0,
                    construction: "linear-determinantal",
                })
            }
            MatroidKind::Explicit { bases, assert_strongly_rayleigh, is_matroid } => {
                if !is_matroid {
                    return Err(CapError::UnsupportedSelection(
                        "explicit family is not a matroid; the counting bounds need a strongly Rayleigh matroid"
                            .into(),
                    ));
                }
                if !assert_strongly_rayleigh {
                    return Err(CapError::UnsupportedSelection(
                        "explicit family is not asserted strongly Rayleigh; its generating polynomial must be real stable"
                            .into(),
                    ));
                }
                let terms = bases
                    .iter()
                    .map(|s| {
                        let mut alpha = vec![0u32; m];
                        for &i in s {
                            alpha[i] = 1;
                        }
                        (alpha, 1.0)
                    })
                    .collect();
                let h = PolynomialOracle::sparse(SparseTerms::new(m, terms)?).assert_real_stable();
                Ok(SelectionPoly { h, c: 1.0, kappa: 1.0, construction: "bases-generating-polynomial" })
            }
        }
    }
}

fn partition_selection(m: usize, parts: &[Vec<usize>], quotas: &[usize]) -> Result<SelectionPoly> {
    let h = PolynomialOracle::partition_power(m, parts.to_vec(), quotas.to_vec())?;
    let log_norm: f64 = -quotas.iter().map(|&b| ln_factorial(b)).sum::<f64>();
    let kappa = quotas.iter().map(|&b| ln_pow_over_factorial(b)).sum::<f64>().exp();
    Ok(SelectionPoly { h: h.scaled(log_norm.exp())?, c: 1.0, kappa, construction: "partition-power" })
}

/// `max / min` of `det(V_S V_Sᵀ)` over the given bases.
pub fn unbalance(v: &DMatrix<f64>, bases: &[Vec<usize>]) -> Result<f64> {
    if bases.is_empty() {
        return Err(CapError::EmptyFamily);
    }
    let (lo, hi) = base_det_range(v, bases)?;
    Ok(hi / lo)
}

fn base_det_range(v: &DMatrix<f64>, bases: &[Vec<usize>]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for s in bases {
        if let Some(&i) = s.iter().find(|&&i| i >= v.nrows()) {
            return Err(CapError::IndexOutOfRange { index: i, m: v.nrows() });
        }
        let d = gram_det(v, s);
        check_det(v, s, d)?;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok((lo, hi))
}

/// `det(V_S V_Sᵀ)` for the rows in `s`.
pub(crate) fn gram_det(v: &DMatrix<f64>, s: &[usize]) -> f64 {
    let sub = DMatrix::from_fn(s.len(), v.ncols(), |r, c| v[(s[r], c)]);
    (&sub * sub.transpose()).determinant()
}

fn check_det(v: &DMatrix<f64>, s: &[usize], det: f64) -> Result<()> {
    let scale: f64 = s.iter().map(|&i| v.row(i).norm_squared()).product();
    if !(det > 1e-12 * scale) {
        return Err(CapError::DegenerateRepresentation { det });
    }
    Ok(())
}

fn numerical_rank(v: &DMatrix<f64>) -> usize {
    if v.nrows() == 0 || v.ncols() == 0 {
        return 0;
    }
    let sv = v.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let tol = smax * LINEAR_TOL * (v.nrows().max(v.ncols()) as f64);
    sv.iter().filter(|s| **s > tol).count()
}

fn part_index(m: usize, parts: &[Vec<usize>]) -> Vec<usize> {
    let mut out = vec![0; m];
    for (j, p) in parts.iter().enumerate() {
        for &i in p {
            out[i] = j;
        }
    }
    out
}

fn satisfies_exchange(family: &[Vec<usize>]) -> bool {
    let set: HashSet<&[usize]> = family.iter().map(Vec::as_slice).collect();
    for a in family {
        for b in family {
            for &x in a.iter().filter(|x| b.binary_search(x).is_err()) {
                let ok = b.iter().filter(|y| a.binary_search(y).is_err()).any(|&y| {
                    let mut c: Vec<usize> = a.iter().copied().filter(|&e| e != x).collect();
                    c.push(y);
                    c.sort_unstable();
                    set.contains(c.as_slice())
                });
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the classes of `a` and `b`; false when they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Gram–Schmidt with a relative residual test, used by the linear greedy.
struct IncrementalBasis {
    dim: usize,
    q: Vec<Vec<f64>>,
}

impl IncrementalBasis {
    fn new(dim: usize) -> Self {
        Self { dim, q: Vec::new() }
    }

    fn try_add(&mut self, row: impl Iterator<Item = f64>) -> bool {
        let mut r: Vec<f64> = row.collect();
        debug_assert_eq!(r.len(), self.dim);
        let original = dot(&r, &r).sqrt();
        if original == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for q in &self.q {
                let c = dot(q, &r);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= c * qi;
                }
            }
        }
        let res = dot(&r, &r).sqrt();
        if res <= 1e-8 * original {
            return false;
        }
        self.q.push(r.iter().map(|v| v / res).collect());
        true
    }
}

/// Signed incidence rows `e_u − e_v` with one root column removed per component.
pub(crate) fn reduced_incidence(vertices: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut uf = UnionFind::new(vertices);
    for &(u, v) in edges {
        uf.union(u, v);
    }
    let mut column = vec![None; vertices];
    let mut next = 0;
    for x in 0..vertices {
        if uf.find(x) != x {
            column[x] = Some(next);
            next += 1;
        }
    }
    let mut v = DMatrix::zeros(edges.len(), next.max(1));
    for (e, &(a, b)) in edges.iter().enumerate() {
        if a == b {
            continue;
        }
        if let Some(c) = column[a] {
            v[(e, c)] += 1.0;
        }
        if let Some(c) = column[b] {
            v[(e, c)] -= 1.0;
        }
    }
    v
}

/// Rows `[−Aᵀ; I]` for the fundamental-cycle matrix `A` of a spanning forest.
/// Totally unimodular, with column space orthogonal to the forest representation.
fn cographic_representation(vertices: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let m = edges.len();
    let mut uf = UnionFind::new(vertices);
    let tree: Vec<bool> = edges.iter().map(|&(u, v)| uf.union(u, v)).collect();
    let tree_edges: Vec<usize> = (0..m).filter(|&e| tree[e]).collect();
    let cotree: Vec<usize> = (0..m).filter(|&e| !tree[e]).collect();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertices];
    for &e in &tree_edges {
        let (u, v) = edges[e];
        adjacency[u].push((v, e));
        adjacency[v].push((u, e));
    }
    let k = cotree.len();
    let mut w = DMatrix::zeros(m, k.max(1));
    for (col, &e) in cotree.iter().enumerate() {
        let (u, v) = edges[e];
        w[(e, col)] = 1.0;
        // tree path from u to v; each step a→b on tree edge (p, q) has sign +1 when (p, q) = (a, b)
        for (t, from, _) in tree_path(&adjacency, u, v) {
            let sign = if edges[t].0 == from { 1.0 } else { -1.0 };
            w[(t, col)] = -sign;
        }
    }
    if k == 0 {
        return DMatrix::zeros(m, 0);
    }
    w
}

fn tree_path(adjacency: &[Vec<(usize, usize)>], u: usize, v: usize) -> Vec<(usize, usize, usize)> {
    let n = adjacency.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut stack = vec![u];
    visited[u] = true;
    while let Some(x) = stack.pop() {
        if x == v {
            break;
        }
        for &(y, e) in &adjacency[x] {
            if !visited[y] {
                visited[y] = true;
                prev[y] = Some((x, e));
                stack.push(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = v;
    while x != u {
        let (p, e) = prev[x].expect("endpoints of a cotree edge are connected in the forest");
        path.push((e, p, x));
        x = p;
    }
    path.reverse();
    path
}

/// Orthonormal basis of the orthogonal complement of the column space of `v`.
fn orthogonal_complement(v: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let m = v.nrows();
    let k = m - rank;
    if k == 0 {
        return DMatrix::zeros(m, 0);
    }
    let gram = v * v.transpose();
    let eig = gram.symmetric_eigen();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut w = DMatrix::zeros(m, k);
    for (c, &j) in idx[..k].iter().enumerate() {
        w.set_column(c, &eig.eigenvectors.column(j));
    }
    w
}

/// Minimum-norm point of `P(B) − x` as a convex combination of bases.
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: Vec<f64>,
    pub combination: Vec<(Vec<usize>, f64)>,
}

fn wolfe_projection(mat: &MatroidSpec, x: &[f64], tol: f64) -> Result<Projection> {
    let m = mat.m;
    let indicator = |s: &[usize]| {
        let mut v = vec![0.0; m];
        for &i in s {
            v[i] = 1.0;
        }
        v
    };
    let shift = |v: &[f64]| -> Vec<f64> { v.iter().zip(x).map(|(a, b)| a - b).collect() };
    let (b0, _) = mat.min_weight_base(&vec![0.0; m])?;
    let mut bases = vec![b0.clone()];
    let mut pts = vec![shift(&indicator(&b0))];
    let mut lambda = vec![1.0];
    let eps = (tol * tol).max(1e-24);
    let combine = |pts: &[Vec<f64>], lambda: &[f64]| {
        let mut p = vec![0.0; m];
        for (q, l) in pts.iter().zip(lambda) {
            for (pi, qi) in p.iter_mut().zip(q) {
                *pi += l * qi;
            }
        }
        p
    };
    for _major in 0..10 * m + 100 {
        let p = combine(&pts, &lambda);
        let (s, _) = mat.min_weight_base(&p)?;
        let q = shift(&indicator(&s));
        if dot(&p, &p) - dot(&p, &q) <= eps || bases.contains(&s) {
            break;
        }
        bases.push(s);
        pts.push(q);
        lambda.push(0.0);
        for _minor in 0..pts.len() + 1 {
            let alpha = match affine_min_norm(&pts) {
                Some(a) => a,
                None => break,
            };
            if alpha.iter().all(|a| *a > 1e-15) {
                lambda = alpha;
                break;
            }
            let theta = lambda
                .iter()
                .zip(&alpha)
                .filter(|(_, a)| **a <= 1e-15)
                .map(|(l, a)| l / (l - a))
                .fold(1.0f64, f64::min);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let keep: Vec<bool> = lambda.iter().map(|l| *l > 1e-15).collect();
            let mut k = 0;
            bases.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            k = 0;
            pts.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            lambda.retain(|l| *l > 1e-15);
            let total: f64 = lambda.iter().sum();
            for l in &mut lambda {
                *l /= total;
            }
        }
    }
    let p = combine(&pts, &lambda);
    let point = p.iter().zip(x).map(|(a, b)| a + b).collect();
    Ok(Projection { point, combination: bases.into_iter().zip(lambda).collect() })
}

/// Affine minimizer of `|Σ α_k q_k|` subject to `Σ α_k = 1`.
fn affine_min_norm(pts: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = pts.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = dot(&pts[i], &pts[j]);
        }
        a[(i, k)] = 1.0;
        a[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    let alpha: Vec<f64> = sol.iter().take(k).copied().collect();
    alpha.iter().all(|v| v.is_finite()).then_some(alpha)
}
