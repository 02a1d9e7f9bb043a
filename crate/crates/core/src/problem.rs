//! Problem files and result documents.
//!
//! Indices in files are 0-based. Matrices are arrays of rows.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::capacity::{cap, cap_primal, entropy_cap, gurvits_cap, lower_cap, CapacityOptions};
use crate::error::{CapError, Result};
use crate::estimate::{count_estimate, max_estimate, subdet_max, EstimateInterval};
use crate::matroid::MatroidSpec;
use crate::poly::{matrix_from_rows, DeterminantalSpec, PolynomialOracle, ProductSpec, SparseTerms};
use crate::reference::{coeff_sum_brute, grid_cap_oracle, max_coeff_brute, max_minor_brute};
use crate::solver::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolyFile {
    Sparse {
        m: usize,
        /// `[exponents, coefficient]` pairs.
        terms: Vec<(Vec<u32>, f64)>,
        #[serde(default)]
        assert_real_stable: bool,
    },
    Product {
        m: usize,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
    Determinantal {
        m: usize,
        #[serde(rename = "V")]
        v: Vec<Vec<f64>>,
        /// Homogeneous degree; defaults to the number of columns of `V`.
        #[serde(default)]
        n: Option<usize>,
    },
    PartitionPower {
        m: usize,
        parts: Vec<Vec<usize>>,
        powers: Vec<usize>,
    },
}

impl PolyFile {
    pub fn build(&self) -> Result<PolynomialOracle> {
        let (m, g) = match self {
            PolyFile::Sparse { m, terms, assert_real_stable } => (
                *m,
                PolynomialOracle::sparse(SparseTerms::new(*m, terms.clone())?)
                    .with_real_stable_assertion(*assert_real_stable),
            ),
            PolyFile::Product { m, a } => (*m, PolynomialOracle::linear_product(ProductSpec::from_rows(a)?)),
            PolyFile::Determinantal { m, v, n } => {
                let spec = DeterminantalSpec::from_rows(v)?;
                let g = match n {
                    Some(n) => PolynomialOracle::determinantal_with_degree(spec, *n),
                    None => PolynomialOracle::determinantal(spec),
                };
                (*m, g)
            }
            PolyFile::PartitionPower { m, parts, powers } => {
                (*m, PolynomialOracle::partition_power(*m, parts.clone(), powers.clone())?)
            }
        };
        if g.m() != m {
            return Err(CapError::DimensionMismatch { expected: m, got: g.m() });
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatroidFile {
    Uniform {
        m: usize,
        n: usize,
    },
    Partition {
        m: usize,
        parts: Vec<Vec<usize>>,
        quotas: Vec<usize>,
    },
    Graphic {
        vertices: usize,
        edges: Vec<(usize, usize)>,
        #[serde(default)]
        m: Option<usize>,
    },
    Linear {
        #[serde(rename = "V")]
        v: Vec<Vec<f64>>,
        /// Asserts that all bases have the same Gram determinant.
        #[serde(default)]
        balanced: bool,
        #[serde(default)]
        m: Option<usize>,
    },
    Explicit {
        m: usize,
        bases: Vec<Vec<usize>>,
        #[serde(default)]
        assert_strongly_rayleigh: bool,
    },
}

impl MatroidFile {
    pub fn build(&self) -> Result<MatroidSpec> {
        let (declared, mat) = match self {
            MatroidFile::Uniform { m, n } => (Some(*m), MatroidSpec::uniform(*m, *n)?),
            MatroidFile::Partition { m, parts, quotas } => {
                (Some(*m), MatroidSpec::partition(*m, parts.clone(), quotas.clone())?)
            }
            MatroidFile::Graphic { vertices, edges, m } => (*m, MatroidSpec::graphic(*vertices, edges.clone())?),
            MatroidFile::Linear { v, balanced, m } => {
                let v = matrix_from_rows(v)?;
                let mat = if *balanced { MatroidSpec::linear_balanced(v)? } else { MatroidSpec::linear(v)? };
                (*m, mat)
            }
            MatroidFile::Explicit { m, bases, assert_strongly_rayleigh } => {
                (Some(*m), MatroidSpec::explicit(*m, bases.clone(), *assert_strongly_rayleigh)?)
            }
        };
        if let Some(m) = declared {
            if m != mat.m() {
                return Err(CapError::DimensionMismatch { expected: m, got: mat.m() });
            }
        }
        Ok(mat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Capacity,
    LowerCapacity,
    Gurvits,
    Primal,
    Count,
    Maximize,
    Subdet,
    Entropy,
    #[serde(rename = "oracle-sum")]
    OracleSum,
    #[serde(rename = "oracle-max")]
    OracleMax,
    #[serde(rename = "oracle-capacity")]
    OracleCapacity,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Capacity => "capacity",
            Task::LowerCapacity => "lower_capacity",
            Task::Gurvits => "gurvits",
            Task::Primal => "primal",
            Task::Count => "count",
            Task::Maximize => "maximize",
            Task::Subdet => "subdet",
            Task::Entropy => "entropy",
            Task::OracleSum => "oracle-sum",
            Task::OracleMax => "oracle-max",
            Task::OracleCapacity => "oracle-capacity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A serialized problem: polynomial (or kernel), family, task and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub polynomial: Option<PolyFile>,
    pub matroid: Option<MatroidFile>,
    /// Symmetric PSD kernel for `subdet`.
    #[serde(default)]
    pub kernel: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Grid resolution for `oracle-capacity`.
    #[serde(default)]
    pub resolution: Option<usize>,
}

impl ProblemFile {
    /// Parses JSON, reporting schema violations with the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CapError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn options(&self) -> CapacityOptions {
        let mut opts = CapacityOptions::default();
        if let Some(eps) = self.eps {
            opts.eps = eps;
        }
        if let Some(b) = self.budget {
            opts.budget = b;
        }
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        opts
    }

    pub fn polynomial(&self) -> Result<PolynomialOracle> {
        self.polynomial
            .as_ref()
            .ok_or_else(|| CapError::Schema { path: "polynomial".into(), message: "missing field".into() })?
            .build()
    }

    pub fn matroid(&self) -> Result<MatroidSpec> {
        self.matroid
            .as_ref()
            .ok_or_else(|| CapError::Schema { path: "matroid".into(), message: "missing field".into() })?
            .build()
    }

    pub fn kernel(&self) -> Result<DMatrix<f64>> {
        let rows = self
            .kernel
            .as_ref()
            .ok_or_else(|| CapError::Schema { path: "kernel".into(), message: "missing field".into() })?;
        matrix_from_rows(rows)
    }
}

fn finite_or_string<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Machine-readable outcome of one task. Non-finite numbers are written as
/// the strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDocument {
    pub task: String,
    #[serde(serialize_with = "finite_or_string")]
    pub value: f64,
    #[serde(serialize_with = "finite_or_string")]
    pub log_value: f64,
    #[serde(serialize_with = "finite_or_string")]
    pub lower: f64,
    #[serde(serialize_with = "finite_or_string")]
    pub upper: f64,
    pub bound_name: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ResultDocument {
    fn exact(task: Task, value: f64, seed: u64, name: &str) -> Self {
        Self {
            task: task.to_string(),
            value,
            log_value: value.ln(),
            lower: value,
            upper: value,
            bound_name: name.to_string(),
            status: SolveStatus::Converged,
            iterations: 0,
            seed,
            point: None,
            warnings: Vec::new(),
        }
    }

    fn from_estimate(task: Task, e: EstimateInterval, seed: u64) -> Self {
        Self {
            task: task.to_string(),
            value: e.point,
            log_value: e.log_point,
            lower: e.lower,
            upper: e.upper,
            bound_name: e.bound.name,
            status: e.status,
            iterations: e.iterations,
            seed,
            point: e.point_x,
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result documents always serialize")
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.task,
            self.value,
            self.log_value,
            self.lower,
            self.upper,
            self.bound_name,
            self.status.as_str(),
            self.iterations,
            self.seed
        )
    }

    pub const TSV_HEADER: &'static str = "task\tvalue\tlog_value\tlower\tupper\tbound_name\tstatus\titerations\tseed";
}

/// Runs `task` on the problem.
pub fn run(problem: &ProblemFile, task: Task) -> Result<ResultDocument> {
    let opts = problem.options();
    let seed = opts.seed;
    let doc = match task {
        Task::Capacity | Task::LowerCapacity | Task::Gurvits => {
            let g = problem.polynomial()?;
            let r = match task {
                Task::Capacity => cap(&g, &problem.matroid()?, &opts)?,
                Task::LowerCapacity => lower_cap(&g, &problem.matroid()?, &opts)?,
                _ => gurvits_cap(&g, &opts)?,
            };
            ResultDocument {
                task: task.to_string(),
                value: r.value,
                log_value: r.log_value,
                lower: r.log_lower.exp().min(r.value),
                upper: r.value,
                bound_name: "solver-gap".into(),
                status: r.status,
                iterations: r.iterations,
                seed,
                point: Some(r.minimizer),
                warnings: Vec::new(),
            }
        }
        Task::Primal => {
            let r = cap_primal(&problem.polynomial()?, &problem.matroid()?, &opts)?;
            ResultDocument {
                task: task.to_string(),
                value: r.value,
                log_value: r.log_value,
                lower: r.value,
                upper: r.log_upper.exp(),
                bound_name: "conditional-gradient-gap".into(),
                status: r.status,
                iterations: r.iterations + r.inner_iterations,
                seed,
                point: Some(r.theta),
                warnings: Vec::new(),
            }
        }
        Task::Count => {
            ResultDocument::from_estimate(task, count_estimate(&problem.polynomial()?, &problem.matroid()?, &opts)?, seed)
        }
        Task::Maximize => {
            ResultDocument::from_estimate(task, max_estimate(&problem.polynomial()?, &problem.matroid()?, &opts)?, seed)
        }
        Task::Subdet => {
            ResultDocument::from_estimate(task, subdet_max(&problem.kernel()?, &problem.matroid()?, &opts)?, seed)
        }
        Task::Entropy => {
            let r = entropy_cap(&problem.polynomial()?, &problem.matroid()?, &opts)?;
            ResultDocument {
                task: task.to_string(),
                value: r.value,
                log_value: r.log_value,
                lower: r.value,
                upper: r.value,
                bound_name: "interior-point".into(),
                status: SolveStatus::Converged,
                iterations: r.iterations,
                seed,
                point: None,
                warnings: r.warnings,
            }
        }
        Task::OracleSum => {
            let v = coeff_sum_brute(&problem.polynomial()?, &problem.matroid()?)?;
            ResultDocument::exact(task, v, seed, "exact")
        }
        Task::OracleMax => {
            let v = if problem.kernel.is_some() {
                max_minor_brute(&problem.kernel()?, &problem.matroid()?)?.0
            } else {
                max_coeff_brute(&problem.polynomial()?, &problem.matroid()?)?.0
            };
            ResultDocument::exact(task, v, seed, "exact")
        }
        Task::OracleCapacity => {
            let v = grid_cap_oracle(&problem.polynomial()?, &problem.matroid()?, problem.resolution.unwrap_or(64))?;
            let mut doc = ResultDocument::exact(task, v, seed, "grid-search");
            doc.lower = 0.0;
            doc
        }
    };
    Ok(doc)
}

/// Largest ground set cross-checked by [`verify`].
pub const VERIFY_LIMIT: usize = 8;

/// Cross-checks a result against the brute-force oracles. Returns the list of
/// violated sandwich invariants; empty when all hold or the instance is too
/// large to check.
pub fn verify(problem: &ProblemFile, doc: &ResultDocument) -> Result<Vec<String>> {
    let task: Task = serde_json::from_value(serde_json::Value::String(doc.task.clone()))
        .map_err(|e| CapError::Solver(format!("unknown task {}: {e}", doc.task)))?;
    let mat = match problem.matroid() {
        Ok(m) if m.m() <= VERIFY_LIMIT => m,
        _ => return Ok(Vec::new()),
    };
    let tol = 1e-4;
    let mut violations = Vec::new();
    match task {
        Task::Capacity | Task::Count | Task::Entropy | Task::Primal => {
            let truth = coeff_sum_brute(&problem.polynomial()?, &mat)?;
            if truth > doc.upper * (1.0 + tol) + 1e-12 {
                violations.push(format!("coefficient sum {truth} exceeds upper end {}", doc.upper));
            }
            if task == Task::Count && truth < doc.lower * (1.0 - tol) {
                violations.push(format!("coefficient sum {truth} is below lower end {}", doc.lower));
            }
        }
        Task::Maximize | Task::Subdet => {
            let truth = if task == Task::Subdet {
                max_minor_brute(&problem.kernel()?, &mat)?.0
            } else {
                max_coeff_brute(&problem.polynomial()?, &mat)?.0
            };
            if truth > doc.upper * (1.0 + tol) + 1e-12 {
                violations.push(format!("maximum {truth} exceeds upper end {}", doc.upper));
            }
            if truth < doc.lower * (1.0 - tol) {
                violations.push(format!("maximum {truth} is below lower end {}", doc.lower));
            }
        }
        Task::LowerCapacity | Task::Gurvits | Task::OracleSum | Task::OracleMax | Task::OracleCapacity => {}
    }
    Ok(violations)
}
