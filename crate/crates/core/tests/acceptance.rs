//! Acceptance suite: one PASS/FAIL line per criterion on stderr.

mod common;

use std::io::Write;
use std::time::Instant;

use capcount::estimate::{a_bound, bound_m};
use capcount::problem::{run, ProblemFile, Task};
use capcount::reference::{coeff_extract, coeff_sum_brute, grid_cap_oracle, max_coeff_brute, max_minor_brute, permanent_brute};
use capcount::{
    cap, cap_primal, count_estimate, entropy_cap, gurvits_cap, lower_cap, max_estimate, subdet_max, CapacityOptions,
    MatroidSpec, PolynomialOracle, ProductSpec, SparseTerms,
};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

fn report(id: u32, title: &str, failures: &[String], detail: &str) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    // written through the handle so the line shows even when output is captured
    let _ = writeln!(std::io::stderr(), "{verdict} criterion {id:>2}: {title} ({detail})");
    for f in failures.iter().take(10) {
        let _ = writeln!(std::io::stderr(), "    {f}");
    }
    assert!(failures.is_empty(), "criterion {id} failed: {failures:?}");
}

fn opts() -> CapacityOptions {
    CapacityOptions::default()
}

fn disjoint_blocks() -> (PolynomialOracle, MatroidSpec) {
    let g = PolynomialOracle::linear_product(
        ProductSpec::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap(),
    );
    (g, MatroidSpec::explicit(4, vec![vec![0, 1], vec![2, 3]], false).unwrap())
}

#[test]
fn criterion_01_disjoint_blocks() {
    let start = Instant::now();
    let (g, b) = disjoint_blocks();
    let c = cap(&g, &b, &opts()).unwrap();
    let sum = coeff_sum_brute(&g, &b).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut failures = Vec::new();
    if rel(c.value, 4.0) > 1e-5 {
        failures.push(format!("cap = {} (want 4)", c.value));
    }
    if sum != 0.0 {
        failures.push(format!("g_B = {sum} (want exactly 0)"));
    }
    if elapsed >= 1.0 {
        failures.push(format!("runtime {elapsed:.3}s"));
    }
    report(1, "non-matroid example: cap = 4, g_B = 0", &failures, &format!("cap {:.8}, {elapsed:.3}s", c.value));
}

#[test]
fn criterion_02_block_monomials() {
    let g = PolynomialOracle::sparse(SparseTerms::new(4, vec![(vec![1, 1, 0, 0], 1.0), (vec![0, 0, 1, 1], 1.0)]).unwrap());
    let b = MatroidSpec::partition(4, vec![vec![0, 1], vec![2, 3]], vec![1, 1]).unwrap();
    let c = cap(&g, &b, &opts()).unwrap();
    let grid = grid_cap_oracle(&g, &b, 64).unwrap();
    let sum = coeff_sum_brute(&g, &b).unwrap();
    let mut failures = Vec::new();
    if c.value < 2.0 - 1e-5 {
        failures.push(format!("cap = {} below 2", c.value));
    }
    if rel(c.value, grid) > 1e-4 || rel(c.value, 2.0) > 1e-4 {
        failures.push(format!("cap = {}, grid = {grid}", c.value));
    }
    if sum != 0.0 {
        failures.push(format!("g_B = {sum}"));
    }
    report(2, "partition example: cap = 2 vs grid oracle, g_B = 0", &failures, &format!("cap {:.8}, grid {grid:.8}", c.value));
}

#[test]
fn criterion_03_partition_growth() {
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for n in [2usize, 3] {
        let m = n * n;
        let g = PolynomialOracle::partition_power(m, vec![(0..m).collect()], vec![n]).unwrap();
        let parts: Vec<Vec<usize>> = (0..n).map(|r| (r * n..(r + 1) * n).collect()).collect();
        let b = MatroidSpec::partition(m, parts, vec![1; n]).unwrap();
        let c = cap(&g, &b, &opts()).unwrap();
        let sum = coeff_sum_brute(&g, &b).unwrap();
        let want_cap = (n as f64).powi(2 * n as i32);
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        let want_sum = (n as f64).powi(n as i32) * fact;
        if rel(c.value, want_cap) > 1e-4 {
            failures.push(format!("n={n}: cap {} vs {want_cap}", c.value));
        }
        if rel(sum, want_sum) > 1e-12 {
            failures.push(format!("n={n}: g_B {sum} vs {want_sum}"));
        }
        let ratio = c.value / sum;
        if rel(ratio, want_cap / want_sum) > 1e-4 {
            failures.push(format!("n={n}: ratio {ratio}"));
        }
        detail.push(format!("n={n} ratio {ratio:.6}"));
    }
    report(3, "grid-partition closed forms", &failures, &detail.join(", "));
}

#[test]
fn criterion_04_permanent_sandwich() {
    let start = Instant::now();
    let mut rng = rng(4);
    let mut failures = Vec::new();
    for trial in 0..50 {
        let m = 2 + trial % 5;
        let a = DMatrix::from_fn(m, m, |_, _| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..1.0) });
        let per = permanent_brute(&a).unwrap();
        let g = PolynomialOracle::linear_product(ProductSpec::new(a).unwrap());
        let c = gurvits_cap(&g, &opts()).unwrap().value;
        let factor: f64 = (1..=m).map(|k| m as f64 / k as f64).product();
        if per > c * (1.0 + 1e-6) || c > factor * per * (1.0 + 1e-6) {
            failures.push(format!("trial {trial}, m={m}: per {per}, cap {c}, factor {factor}"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        failures.push(format!("runtime {elapsed:.1}s"));
    }
    report(4, "permanent ≤ capacity ≤ (mᵐ/m!)·permanent", &failures, &format!("50 matrices, {elapsed:.2}s"));
}

/// Random real stable instance with degree matching the family's rank.
fn random_stable(rng: &mut rand_chacha::ChaCha8Rng, mat: &MatroidSpec, determinantal: bool) -> PolynomialOracle {
    if determinantal {
        random_determinantal(rng, mat.rank(), mat.m())
    } else {
        random_product(rng, mat.rank(), mat.m())
    }
}

#[test]
fn criterion_05_duality() {
    let mut rng = rng(5);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let start = Instant::now();
    for trial in 0..100 {
        let mat = match trial % 3 {
            0 => random_uniform(&mut rng, 3, 8),
            1 => random_partition(&mut rng, 3, 8),
            _ => any_graphic(&mut rng, 8),
        };
        let g = random_stable(&mut rng, &mat, trial % 2 == 1);
        let d = cap(&g, &mat, &opts()).unwrap();
        let p = cap_primal(&g, &mat, &opts()).unwrap();
        let r = rel(p.value, d.value);
        worst = worst.max(r);
        if r > 1e-4 {
            failures.push(format!("trial {trial} ({}, m={}): cap {} primal {}", mat.kind_name(), mat.m(), d.value, p.value));
        }
    }
    report(
        5,
        "|cap − cap_primal| ≤ 1e-4 relative",
        &failures,
        &format!("100 instances, worst {worst:.2e}, {:.1}s", start.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_06_counting_sandwich() {
    let mut rng = rng(6);
    let mut failures = Vec::new();
    let mut multilinear_checked = 0;
    let mut worst_ratio = 1.0f64;
    for trial in 0..100 {
        let mat = if trial % 2 == 0 { random_partition(&mut rng, 3, 8) } else { any_graphic(&mut rng, 8) };
        let det = trial % 4 >= 2;
        let g = random_stable(&mut rng, &mat, det);
        let e = count_estimate(&g, &mat, &opts()).unwrap();
        let truth = coeff_sum_brute(&g, &mat).unwrap();
        if truth > e.upper * (1.0 + 1e-5) || e.lower > truth * (1.0 + 1e-5) {
            failures.push(format!(
                "trial {trial} ({}, m={}): [{}, {}] vs g_B {truth} with {} = {}",
                mat.kind_name(),
                mat.m(),
                e.lower,
                e.upper,
                e.bound.name,
                e.bound.value
            ));
        }
        worst_ratio = worst_ratio.max(e.upper / truth);
        if det {
            let ml = bound_m(&mat, true).unwrap();
            if let Some(b) = ml.candidates.iter().find(|b| b.name == "dual-selection-multilinear") {
                multilinear_checked += 1;
                if e.upper / b.value > truth * (1.0 + 1e-5) {
                    failures.push(format!("trial {trial}: multilinear bound {} violated", b.value));
                }
            }
        }
    }
    if multilinear_checked == 0 {
        failures.push("no instance exercised the 2ᵐ multilinear bound".into());
    }
    report(
        6,
        "cap/M̂ ≤ g_B ≤ cap",
        &failures,
        &format!("100 instances, {multilinear_checked} with the 2ᵐ bound, worst cap/g_B {worst_ratio:.3}"),
    );
}

#[test]
fn criterion_07_optimization_sandwich() {
    let mut rng = rng(7);
    let mut failures = Vec::new();
    let start = Instant::now();
    for trial in 0..50 {
        let mat = match trial % 3 {
            0 => random_uniform(&mut rng, 3, 6),
            1 => random_partition(&mut rng, 3, 6),
            _ => any_graphic(&mut rng, 6),
        };
        let g = random_stable(&mut rng, &mat, trial % 2 == 1);
        let e = max_estimate(&g, &mat, &opts()).unwrap();
        let (truth, _) = max_coeff_brute(&g, &mat).unwrap();
        if e.lower > truth * (1.0 + 1e-5) || truth > e.upper * (1.0 + 1e-4) {
            failures.push(format!(
                "trial {trial} ({}, m={}): [{}, {}] vs max {truth}",
                mat.kind_name(),
                mat.m(),
                e.lower,
                e.upper
            ));
        }
    }
    report(
        7,
        "OPT/(M̂·Â) ≤ max g_S ≤ OPT·(1+1e-4)",
        &failures,
        &format!("50 instances, {:.1}s", start.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_08_subdeterminant() {
    let mut rng = rng(8);
    let mut failures = Vec::new();
    let triangle = MatroidSpec::graphic(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
    let k4 = MatroidSpec::graphic(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    for trial in 0..25 {
        let mat = match trial % 3 {
            0 => triangle.clone(),
            1 => k4.clone(),
            _ => random_partition(&mut rng, 3, 6),
        };
        let l = random_psd(&mut rng, mat.m());
        let e = subdet_max(&l, &mat, &opts()).unwrap();
        let (truth, _) = max_minor_brute(&l, &mat).unwrap();
        if e.lower > truth * (1.0 + 1e-5) || truth > e.upper * (1.0 + 1e-4) {
            failures.push(format!("trial {trial} ({}): [{}, {}] vs {truth}", mat.kind_name(), e.lower, e.upper));
        }
        let a = a_bound(&mat, &opts()).unwrap();
        if a.value > (mat.rank() as f64).exp() * (1.0 + 1e-12) {
            failures.push(format!("trial {trial}: Â = {} exceeds eⁿ", a.value));
        }
    }
    report(8, "subdeterminant interval contains max minor; Â ≤ eⁿ", &failures, "25 kernels");
}

#[test]
fn criterion_09_entropy() {
    let mut rng = rng(9);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    // normalized inputs whose marginal lies in the base polytope
    let e2 = PolynomialOracle::sparse(
        SparseTerms::new(3, vec![(vec![1, 1, 0], 1.0 / 3.0), (vec![1, 0, 1], 1.0 / 3.0), (vec![0, 1, 1], 1.0 / 3.0)])
            .unwrap(),
    );
    let mut normalized = vec![(e2, MatroidSpec::uniform(3, 2).unwrap())];
    let quarter_blocks = PolynomialOracle::sparse(
        SparseTerms::new(
            4,
            vec![(vec![1, 0, 1, 0], 0.25), (vec![1, 0, 0, 1], 0.25), (vec![0, 1, 1, 0], 0.25), (vec![0, 1, 0, 1], 0.25)],
        )
        .unwrap(),
    );
    normalized.push((quarter_blocks, disjoint_blocks().1));
    for _ in 0..3 {
        let mat = random_partition(&mut rng, 3, 6);
        let bases = mat.enumerate_bases(1000).unwrap();
        let w: Vec<f64> = bases.iter().map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let terms = bases
            .iter()
            .zip(&w)
            .map(|(s, wi)| {
                let mut alpha = vec![0u32; mat.m()];
                for &i in s {
                    alpha[i] = 1;
                }
                (alpha, wi / total)
            })
            .collect();
        normalized.push((PolynomialOracle::sparse(SparseTerms::new(mat.m(), terms).unwrap()), mat));
    }
    for (k, (p, mat)) in normalized.iter().enumerate() {
        let e = entropy_cap(p, mat, &opts()).unwrap();
        if (e.value - 1.0).abs() > 1e-6 {
            failures.push(format!("normalized case {k}: {}", e.value));
        }
        let c = cap(p, mat, &opts()).unwrap();
        worst = worst.max(rel(e.value, c.value));
        if rel(e.value, c.value) > 1e-4 {
            failures.push(format!("normalized case {k}: entropy {} vs cap {}", e.value, c.value));
        }
    }
    for trial in 0..20 {
        let mat = if trial % 2 == 0 { random_uniform(&mut rng, 3, 6) } else { random_partition(&mut rng, 3, 6) };
        let (m, n) = (mat.m(), mat.rank());
        let mut terms = Vec::new();
        for _ in 0..rng.random_range(2..=8) {
            let mut alpha = vec![0u32; m];
            for _ in 0..n {
                alpha[rng.random_range(0..m)] += 1;
            }
            terms.push((alpha, rng.random_range(0.2..3.0)));
        }
        if trial % 4 != 3 {
            // make the marginal constraint reachable from a base monomial
            let mut alpha = vec![0u32; m];
            for i in mat.min_weight_base(&vec![0.0; m]).unwrap().0 {
                alpha[i] = 1;
            }
            terms.push((alpha, rng.random_range(0.2..3.0)));
        }
        let p = PolynomialOracle::sparse(SparseTerms::new(m, terms).unwrap());
        let e = entropy_cap(&p, &mat, &opts()).unwrap();
        let c = cap(&p, &mat, &opts()).unwrap();
        let r = if e.value == 0.0 && c.value == 0.0 { 0.0 } else { rel(e.value, c.value) };
        worst = worst.max(r);
        if r > 1e-4 {
            failures.push(format!("trial {trial} ({}, m={m}): entropy {} vs cap {}", mat.kind_name(), e.value, c.value));
        }
    }
    report(9, "entropy program equals capacity", &failures, &format!("25 instances, worst {worst:.2e}"));
}

#[test]
fn criterion_10_selection_certificates() {
    let mut rng = rng(10);
    let mut cases: Vec<MatroidSpec> = vec![
        MatroidSpec::uniform(6, 3).unwrap(),
        MatroidSpec::uniform(10, 3).unwrap(),
        MatroidSpec::partition(10, vec![vec![0, 1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]], vec![2, 1, 2]).unwrap(),
        MatroidSpec::partition(5, vec![vec![0, 1, 2], vec![3, 4]], vec![2, 1]).unwrap(),
        MatroidSpec::graphic(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap(),
        MatroidSpec::graphic(5, (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect()).unwrap(),
        MatroidSpec::linear(DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0))).unwrap(),
        MatroidSpec::linear_balanced(DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        ))
        .unwrap(),
        MatroidSpec::explicit(5, (0..5).flat_map(|a| (a + 1..5).map(move |b| vec![a, b])).collect(), true).unwrap(),
    ];
    cases.push(any_graphic(&mut rng, 8));
    let mut failures = Vec::new();
    for mat in &cases {
        let sel = mat.build_selection().unwrap();
        let (m, n) = (mat.m(), mat.rank());
        let bases = mat.enumerate_bases(10_000).unwrap();
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            let coef = coeff_extract(&sel.h, &subset).unwrap();
            let in_b = bases.binary_search(&subset).is_ok();
            if in_b && (coef < 1.0 - 1e-9 || coef > sel.c * (1.0 + 1e-9)) {
                failures.push(format!("{}: coefficient {coef} of {subset:?} outside [1, {}]", mat.kind_name(), sel.c));
            }
            if !in_b && coef.abs() > 1e-9 * sel.c {
                failures.push(format!("{}: coefficient {coef} of non-base {subset:?}", mat.kind_name()));
            }
            // next n-subset in lexicographic order
            let Some(pos) = (0..n).rev().find(|&i| subset[i] < m - n + i) else { break };
            subset[pos] += 1;
            for j in pos + 1..n {
                subset[j] = subset[j - 1] + 1;
            }
        }
        let lc = lower_cap(&sel.h, mat, &opts()).unwrap();
        if lc.value < sel.kappa - 1e-6 {
            failures.push(format!("{}: lower capacity {} below κ = {}", mat.kind_name(), lc.value, sel.kappa));
        }
    }
    report(10, "selection coefficients in [1, c] on B, 0 off B; lowerCap ≥ κ", &failures, &format!("{} families", cases.len()));
}

#[test]
fn criterion_11_determinism() {
    let problems = [
        (Task::Capacity, r#"{"polynomial": {"kind": "product", "m": 4, "A": [[1,1,0,0],[0,0,1,1]]},
            "matroid": {"kind": "explicit", "m": 4, "bases": [[0,1],[2,3]]}}"#),
        (Task::Count, r#"{"polynomial": {"kind": "product", "m": 3, "A": [[1,1,1],[1,1,1],[1,1,1]]},
            "matroid": {"kind": "uniform", "m": 3, "n": 3}}"#),
        (Task::Maximize, r#"{"polynomial": {"kind": "determinantal", "m": 4, "V": [[1,0.2],[0.3,1],[0.5,0.5],[1,-1]]},
            "matroid": {"kind": "partition", "m": 4, "parts": [[0,1],[2,3]], "quotas": [1,1]}, "seed": 3}"#),
        (Task::Primal, r#"{"polynomial": {"kind": "product", "m": 4, "A": [[1,2,0.5,1],[0.3,1,1,2]]},
            "matroid": {"kind": "uniform", "m": 4, "n": 2}, "seed": 11}"#),
        (Task::Subdet, r#"{"kernel": [[2,0.5,0.1],[0.5,1,0.2],[0.1,0.2,3]],
            "matroid": {"kind": "graphic", "vertices": 3, "edges": [[0,1],[1,2],[0,2]]}}"#),
        (Task::Entropy, r#"{"polynomial": {"kind": "sparse", "m": 3, "terms": [[[1,1,0],1],[[0,1,1],2],[[2,0,0],0.5]]},
            "matroid": {"kind": "uniform", "m": 3, "n": 2}}"#),
    ];
    let mut failures = Vec::new();
    for (task, text) in problems {
        let p = ProblemFile::from_json(text).unwrap();
        let a = run(&p, task).unwrap().to_json();
        let b = run(&p, task).unwrap().to_json();
        if a != b {
            failures.push(format!("{task}: {a} != {b}"));
        }
    }
    report(11, "bitwise-identical result documents", &failures, "6 tasks run twice");
}
