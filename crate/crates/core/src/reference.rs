//! Brute-force oracles for validating the solvers at desk scale.
//!
//! Nothing here shares code paths with the capacity solvers: coefficients come
//! from evaluations only, minimum base weights are taken over enumerated bases,
//! and the capacity oracle is a grid search.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CapError, Result};
use crate::matroid::{MatroidSpec, DEFAULT_ENUMERATION_LIMIT};
use crate::numeric::compensated_sum;
use crate::poly::{bjorck_pereyra, PolynomialOracle};

/// Largest set handled by inclusion–exclusion.
pub const INCLUSION_EXCLUSION_LIMIT: usize = 16;
/// Largest tensor interpolation grid.
pub const GRID_LIMIT: usize = 2_000_000;

/// Explicit coefficients of a polynomial, keyed by exponent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub m: usize,
    pub entries: BTreeMap<Vec<u32>, f64>,
}

impl CoefficientTable {
    /// Expands `g` by tensor interpolation on `D_i + 1` Chebyshev nodes in `(0, 1)`.
    pub fn expand(g: &PolynomialOracle) -> Result<Self> {
        if let Some(terms) = g.sparse_terms() {
            return Ok(Self { m: g.m(), entries: terms.terms().iter().cloned().collect() });
        }
        let dims: Vec<usize> = g.var_degree().iter().map(|d| *d as usize + 1).collect();
        let total = grid_size(&dims)?;
        let mut values: Vec<f64> = (0..total)
            .map(|flat| g.evaluate(&grid_point(flat, &dims)))
            .collect::<Result<_>>()?;
        let mut stride = 1;
        for (axis, &len) in dims.iter().enumerate().rev() {
            let _ = axis;
            if len > 1 {
                let nodes: Vec<f64> = (0..len).map(|k| node(k, len)).collect();
                for block in 0..total / (len * stride) {
                    for offset in 0..stride {
                        let base = block * len * stride + offset;
                        let line: Vec<f64> = (0..len).map(|k| values[base + k * stride]).collect();
                        let coeffs = bjorck_pereyra(&nodes, &line);
                        for (k, c) in coeffs.into_iter().enumerate() {
                            values[base + k * stride] = c;
                        }
                    }
                }
            }
            stride *= len;
        }
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut entries = BTreeMap::new();
        for (flat, c) in values.into_iter().enumerate() {
            if c.abs() > 1e-9 * scale {
                let alpha: Vec<u32> = grid_index(flat, &dims).into_iter().map(|k| k as u32).collect();
                let deg: usize = alpha.iter().map(|a| *a as usize).sum();
                if !g.is_homogeneous() || deg == g.degree() {
                    entries.insert(alpha, c);
                }
            }
        }
        Ok(Self { m: g.m(), entries })
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        compensated_sum(
            self.entries
                .iter()
                .map(|(alpha, c)| c * alpha.iter().zip(z).map(|(a, x)| x.powi(*a as i32)).product::<f64>()),
        )
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        self.entries.get(alpha).copied().unwrap_or(0.0)
    }
}

fn grid_size(dims: &[usize]) -> Result<usize> {
    let mut total: usize = 1;
    for &d in dims {
        total = total
            .checked_mul(d)
            .filter(|t| *t <= GRID_LIMIT)
            .ok_or_else(|| CapError::SizeLimit(format!("interpolation grid exceeds {GRID_LIMIT} points")))?;
    }
    Ok(total)
}

/// Row-major decoding with the last axis fastest.
fn grid_index(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for (i, &d) in dims.iter().enumerate().rev() {
        idx[i] = flat % d;
        flat /= d;
    }
    idx
}

/// Chebyshev nodes mapped into `(0, 1)`.
fn node(k: usize, len: usize) -> f64 {
    0.5 * (1.0 - ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * len) as f64).cos())
}

fn grid_point(flat: usize, dims: &[usize]) -> Vec<f64> {
    grid_index(flat, dims).iter().zip(dims).map(|(&k, &len)| node(k, len)).collect()
}

/// Coefficient of the square-free monomial `z^S`.
///
/// For an n-homogeneous `g` with `|S| = n` this is the exact alternating sum
/// `Σ_{T⊆S} (−1)^{|S∖T|} g(1_T)`: a monomial of degree `n` supported exactly on
/// `S` must be `z^S`. Other cases fall back to interpolation.
pub fn coeff_extract(g: &PolynomialOracle, s: &[usize]) -> Result<f64> {
    let m = g.m();
    if let Some(&i) = s.iter().find(|&&i| i >= m) {
        return Err(CapError::IndexOutOfRange { index: i, m });
    }
    if g.is_homogeneous() && g.degree() == s.len() && s.len() <= INCLUSION_EXCLUSION_LIMIT {
        let k = s.len();
        let terms = (0u64..1 << k).map(|mask| {
            let mut y = vec![f64::NEG_INFINITY; m];
            let mut size = 0;
            for (b, &i) in s.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    y[i] = 0.0;
                    size += 1;
                }
            }
            let v = g.log_eval_y(&y).exp();
            if (k - size) % 2 == 0 {
                v
            } else {
                -v
            }
        });
        return Ok(compensated_sum(terms));
    }
    let mut alpha = vec![0u32; m];
    for &i in s {
        alpha[i] = 1;
    }
    coeff_extract_multi(g, &alpha)
}

/// Coefficient of `z^α` by tensor interpolation on `D_i + 1` Chebyshev nodes per axis.
pub fn coeff_extract_multi(g: &PolynomialOracle, alpha: &[u32]) -> Result<f64> {
    let m = g.m();
    if alpha.len() != m {
        return Err(CapError::DimensionMismatch { expected: m, got: alpha.len() });
    }
    let bounds = g.var_degree();
    if alpha.iter().zip(bounds).any(|(a, d)| a > d) {
        return Ok(0.0);
    }
    let dims: Vec<usize> = bounds.iter().map(|d| *d as usize + 1).collect();
    let total = grid_size(&dims)?;
    // row alpha_i of the inverse Vandermonde matrix on each axis
    let weights: Vec<Vec<f64>> = dims
        .iter()
        .zip(alpha)
        .map(|(&len, &a)| {
            let nodes: Vec<f64> = (0..len).map(|k| node(k, len)).collect();
            (0..len)
                .map(|k| {
                    let mut e = vec![0.0; len];
                    e[k] = 1.0;
                    bjorck_pereyra(&nodes, &e)[a as usize]
                })
                .collect()
        })
        .collect();
    let mut terms = Vec::with_capacity(total);
    for flat in 0..total {
        let idx = grid_index(flat, &dims);
        let w: f64 = idx.iter().enumerate().map(|(i, &k)| weights[i][k]).product();
        if w != 0.0 {
            let z: Vec<f64> = idx.iter().zip(&dims).map(|(&k, &len)| node(k, len)).collect();
            terms.push(w * g.evaluate(&z)?);
        }
    }
    Ok(compensated_sum(terms))
}

/// `g_B = Σ_{S∈B} g_S`.
pub fn coeff_sum_brute(g: &PolynomialOracle, mat: &MatroidSpec) -> Result<f64> {
    let bases = mat.enumerate_bases(DEFAULT_ENUMERATION_LIMIT)?;
    let values = bases.iter().map(|s| coeff_extract(g, s)).collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(values))
}

/// `max_{S∈B} g_S` and a maximizing base.
pub fn max_coeff_brute(g: &PolynomialOracle, mat: &MatroidSpec) -> Result<(f64, Vec<usize>)> {
    let bases = mat.enumerate_bases(DEFAULT_ENUMERATION_LIMIT)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in bases {
        let v = coeff_extract(g, &s)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, s));
        }
    }
    best.ok_or(CapError::EmptyFamily)
}

/// Permanent by summing over all permutations.
pub fn permanent_brute(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CapError::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if n > 10 {
        return Err(CapError::SizeLimit("brute-force permanent is limited to n ≤ 10".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut terms = Vec::new();
    permute(&mut perm, 0, &mut |p| terms.push(p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product()));
    Ok(compensated_sum(terms))
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// `max_{S∈B} det(L_{S,S})` by enumeration.
pub fn max_minor_brute(l: &DMatrix<f64>, mat: &MatroidSpec) -> Result<(f64, Vec<usize>)> {
    let bases = mat.enumerate_bases(DEFAULT_ENUMERATION_LIMIT)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in bases {
        let sub = DMatrix::from_fn(s.len(), s.len(), |a, b| l[(s[a], s[b])]);
        let d = sub.determinant();
        if best.as_ref().is_none_or(|(b, _)| d > *b) {
            best = Some((d, s));
        }
    }
    best.ok_or(CapError::EmptyFamily)
}

/// Grid search for `Cap_B(g)`: an upper bound that tightens with `resolution`.
///
/// Coordinates `y_1..y_{m−1}` range over a uniform grid containing 0 with
/// `y_m = 0`; each point is shifted onto the feasible cone using the minimum
/// base weight over the enumerated family, and the best point is refined by a
/// pattern search.
pub fn grid_cap_oracle(g: &PolynomialOracle, mat: &MatroidSpec, resolution: usize) -> Result<f64> {
    let m = g.m();
    if m != mat.m() {
        return Err(CapError::DimensionMismatch { expected: mat.m(), got: m });
    }
    if m > 6 {
        return Err(CapError::SizeLimit("grid oracle is limited to m ≤ 6".into()));
    }
    let n = mat.rank();
    if g.degree() != n || !g.is_homogeneous() {
        return Err(CapError::DegreeRankMismatch { degree: g.degree(), rank: n });
    }
    let bases = mat.enumerate_bases(DEFAULT_ENUMERATION_LIMIT)?;
    let objective = |y: &[f64]| -> f64 {
        let phi = bases.iter().map(|s| s.iter().map(|&i| y[i]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        g.log_eval_y(y) - phi
    };
    let free = m.saturating_sub(1);
    let per_axis = if free == 0 {
        1
    } else {
        let cap = (200_000f64).powf(1.0 / free as f64).floor() as usize;
        (resolution.max(2) | 1).min(cap.max(3) | 1)
    };
    let half = (per_axis / 2) as f64;
    let span = 6.0;
    let coord = |k: usize| (k as f64 - half) * span / half.max(1.0);
    let dims = vec![per_axis; free];
    let total = if free == 0 { 1 } else { per_axis.pow(free as u32) };
    let mut best_y = vec![0.0; m];
    let mut best = objective(&best_y);
    for flat in 0..total {
        let idx = grid_index(flat, &dims);
        let mut y = vec![0.0; m];
        for (i, &k) in idx.iter().enumerate() {
            y[i] = coord(k);
        }
        let v = objective(&y);
        if v < best {
            best = v;
            best_y = y;
        }
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; m];
            d[i] = s;
            dirs.push(d);
        }
        for j in 0..m {
            if i != j {
                let mut d = vec![0.0; m];
                d[i] = 1.0;
                d[j] = -1.0;
                dirs.push(d);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    for _ in 0..4 * m {
        let d: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        dirs.push(d);
    }
    let mut step = span / half.max(1.0);
    while step > 1e-9 {
        let mut improved = false;
        for d in &dirs {
            let y: Vec<f64> = best_y.iter().zip(d).map(|(a, b)| a + step * b).collect();
            let v = objective(&y);
            if v < best - 1e-15 {
                best = v;
                best_y = y;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best.exp())
}
