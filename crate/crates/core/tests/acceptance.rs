//! Acceptance criteria, one PASS/FAIL line each. Reference values are
//! recomputed here from the edge lists with plain dense linear algebra and
//! brute-force enumeration, independently of the library code paths.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ohm::generators;
use ohm::graph::WeightedGraph;
use ohm::jacobi::{run_jacobi, JacobiConfig};
use ohm::oracle::{neumann_potentials, solve_grounded};
use ohm::spectral::{check_min_lambda, conductance, edge_expansion, grounded_spectral_radius};
use ohm::suite::builtin_suite;
use ohm::tokens::{accuracy_threshold, min_rate_for_floor, run_diffusion, token_count_bound, DiffusionConfig, TokenDiffusion};
use ohm::Graph;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn suite() -> Vec<(String, Graph)> {
    builtin_suite().unwrap().into_iter().map(|g| (g.name, g.graph)).collect()
}

fn p3() -> Graph {
    WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap()
}

fn k4() -> Graph {
    WeightedGraph::new(4, (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v, 1.0))), 0, 3).unwrap()
}

/// Adjacency matrix and volumes rebuilt from the edge list.
fn dense(g: &Graph) -> (DMatrix<f64>, DVector<f64>) {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for e in g.edges() {
        a[(e.u, e.v)] += e.w;
        a[(e.v, e.u)] += e.w;
    }
    let vol = DVector::from_fn(n, |i, _| a.row(i).sum());
    (a, vol)
}

fn demand(g: &Graph) -> DVector<f64> {
    let mut b = DVector::zeros(g.n());
    b[g.source()] = 1.0;
    b[g.sink()] = -1.0;
    b
}

fn laplacian(g: &Graph) -> DMatrix<f64> {
    let (a, vol) = dense(g);
    DMatrix::from_diagonal(&vol) - a
}

fn drop_index(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.clone().remove_row(k).remove_column(k)
}

/// Grounded potentials by LU on the sink-deleted Laplacian.
fn reference_potentials(g: &Graph) -> DVector<f64> {
    let s = g.sink();
    let reduced = drop_index(&laplacian(g), s);
    let rhs = demand(g).remove_row(s);
    let x = reduced.lu().solve(&rhs).expect("reduced Laplacian is nonsingular");
    x.insert_row(s, 0.0)
}

fn eigenvalues_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Eigenvalues of `P = D⁻¹A` via `D^{-1/2} A D^{-1/2}`, descending.
fn transition_spectrum(g: &Graph) -> Vec<f64> {
    let (a, vol) = dense(g);
    let n = g.n();
    eigenvalues_desc(DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (vol[i] * vol[j]).sqrt()))
}

/// `ρ̲` and its ℓ1-normalized left Perron vector of the sink-deleted
/// transition matrix, via its symmetric conjugate.
fn grounded_perron(g: &Graph) -> (f64, DVector<f64>) {
    let (a, vol) = dense(g);
    let s = g.sink();
    let n = g.n();
    let sym = drop_index(&DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (vol[i] * vol[j]).sqrt()), s);
    let vol_r = vol.remove_row(s);
    let eig = SymmetricEigen::new(sym);
    let (k, rho) = eig.eigenvalues.iter().copied().enumerate().fold((0, f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
    let x = eig.eigenvectors.column(k);
    let v = DVector::from_fn(vol_r.len(), |i, _| (x[i] * vol_r[i].sqrt()).abs());
    let total = v.sum();
    (rho, v / total)
}

fn perp_norm(e: &DVector<f64>) -> f64 {
    e.add_scalar(-e.mean()).norm()
}

/// `φ^{(0..=rounds)}` by the dense recurrence `φ ← P̲φ + D⁻¹b̲`.
fn reference_iterates(g: &Graph, rounds: usize) -> Vec<DVector<f64>> {
    let (a, vol) = dense(g);
    let n = g.n();
    let s = g.sink();
    let mut p_under = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / vol[i]);
    p_under.row_mut(s).fill(0.0);
    p_under.column_mut(s).fill(0.0);
    let mut c = DVector::zeros(n);
    c[g.source()] = 1.0 / vol[g.source()];
    let mut out = vec![DVector::zeros(n)];
    for _ in 0..rounds {
        let next = &p_under * out.last().unwrap() + &c;
        out.push(next);
    }
    out
}

fn cut_weight(g: &Graph, mask: u32) -> f64 {
    g.edges().iter().filter(|e| (mask >> e.u & 1) != (mask >> e.v & 1)).map(|e| e.w).sum()
}

/// Brute-force conductance and edge expansion over all bitmask subsets.
fn brute_force_cuts(g: &Graph) -> (f64, f64) {
    let n = g.n();
    let (_, vol) = dense(g);
    let total: f64 = vol.sum();
    let (mut phi, mut theta) = (f64::INFINITY, f64::INFINITY);
    for mask in 1u32..(1 << n) - 1 {
        let members: Vec<usize> = (0..n).filter(|&u| mask >> u & 1 == 1).collect();
        let vol_s: f64 = members.iter().map(|&u| vol[u]).sum();
        let w = cut_weight(g, mask);
        if 2.0 * vol_s <= total {
            phi = phi.min(w / vol_s);
        }
        if 2 * members.len() <= n {
            theta = theta.min(w / members.len() as f64);
        }
    }
    (phi, theta)
}

fn criterion_1() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for (name, g) in suite() {
        let p = solve_grounded(&g).map_err(|e| format!("{name}: {e}"))?.0;
        let residual = (laplacian(&g) * &p - demand(&g)).amax();
        ensure(residual <= 1e-9, || format!("{name}: residual {residual:e}"))?;
        ensure(p[g.sink()] == 0.0, || format!("{name}: p_sink = {}", p[g.sink()]))?;
        let series = neumann_potentials(&g).map_err(|e| format!("{name}: {e}"))?;
        let gap = (&series - &p).amax();
        ensure(gap <= 1e-8, || format!("{name}: Neumann gap {gap:e}"))?;
        let lu_gap = (&reference_potentials(&g) - &p).amax();
        ensure(lu_gap <= 1e-9, || format!("{name}: LU reference gap {lu_gap:e}"))?;
        worst = (worst.0.max(residual), worst.1.max(gap));
    }
    Ok(format!("max residual {:.2e}, max Neumann gap {:.2e}", worst.0, worst.1))
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for (name, g) in suite() {
        let p = reference_potentials(&g);
        let spectrum = transition_spectrum(&g);
        let rho_star = spectrum[1..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (_, vol) = dense(&g);
        let ratio_vol = (vol.max() / vol.min()).sqrt();
        let traj = run_jacobi(&g, &JacobiConfig { rounds: 200, beta: 1.0, stop_tol: None, initial: None });
        let e0 = perp_norm(&(&p - &traj[0].potentials));
        if e0 == 0.0 {
            continue;
        }
        for s in &traj {
            let ratio = perp_norm(&(&p - &s.potentials)) / e0;
            let bound = ratio_vol * rho_star.powi(s.round as i32) + 1e-9;
            ensure(ratio <= bound, || format!("{name} t={}: ratio {ratio:e} > {bound:e}", s.round))?;
            checked += 1;
        }
    }
    let g = k4();
    let p = reference_potentials(&g);
    let traj = run_jacobi(&g, &JacobiConfig { rounds: 10, beta: 1.0, stop_tol: None, initial: None });
    let ratio = perp_norm(&(&p - &traj[10].potentials)) / perp_norm(&(&p - &traj[0].potentials));
    let tight = (1.0f64 / 3.0).powi(10);
    // round-off allowance only: the K4 contraction is exactly 1/3 per round
    ensure(ratio <= tight * (1.0 + 1e-9), || format!("K4 t=10 ratio {ratio:e} > (1/3)^10 = {tight:e}"))?;
    Ok(format!("{checked} (graph, t) pairs; K4 t=10 ratio {ratio:.6e} vs (1/3)^10 = {tight:.6e}"))
}

fn criterion_3() -> Outcome {
    for (name, g) in suite() {
        for t in [0usize, 1, 7, 50] {
            let traj = run_jacobi(&g, &JacobiConfig { rounds: t, beta: 0.5, stop_tol: None, initial: None });
            let sent = traj.last().unwrap().messages_sent;
            let expected = 2 * g.m() as u64 * t as u64;
            ensure(sent == expected, || format!("{name} t={t}: {sent} != 2mt = {expected}"))?;
        }
    }
    Ok("messages_sent = 2mt on every suite graph".into())
}

fn criterion_4() -> Outcome {
    let reps = 2000;
    let mut worst_z = 0.0f64;
    let mut cases = 0;
    for (name, g) in [("P3", p3()), ("K4", k4())] {
        let phi = reference_iterates(&g, 30);
        for k in [1u64, 16, 256] {
            let run = run_diffusion(
                &g,
                &DiffusionConfig { rate: k, rounds: 30, seed: 20 + k, replications: reps, record_trace: false },
            )
            .map_err(|e| e.to_string())?;
            for t in [1usize, 5, 30] {
                let summary = &run.rounds[t];
                for u in 0..g.n() {
                    let se = (summary.var_estimate[u] / reps as f64).sqrt();
                    let dev = (summary.mean_estimate[u] - phi[t][u]).abs();
                    ensure(dev <= 4.0 * se + 1e-12, || {
                        format!("{name} K={k} t={t} node {u}: |mean - φ| = {dev:e} > 4 SE = {:e}", 4.0 * se)
                    })?;
                    if se > 0.0 {
                        worst_z = worst_z.max(dev / se);
                    }
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} (graph, K, t, node) cases, worst deviation {worst_z:.2} SE"))
}

fn criterion_5() -> Outcome {
    for (name, g) in suite() {
        let p = reference_potentials(&g);
        let (rho_under, _) = grounded_perron(&g);
        let (_, vol) = dense(&g);
        let scale = (vol.max() / vol.min()).sqrt() / ((1.0 - rho_under) * vol[g.source()]);
        for (t, phi) in reference_iterates(&g, 300).iter().enumerate() {
            let gap = (phi - &p).norm();
            let bound = scale * rho_under.powi(t as i32);
            ensure(gap <= bound + 1e-10, || format!("{name} t={t}: ‖φ - p‖ = {gap:e} > {bound:e}"))?;
        }
        let lib_phi = ohm::tokens::expected_iterates(&g, 300);
        let lib_gap = (&lib_phi[300].0 - &reference_iterates(&g, 300)[300]).amax();
        ensure(lib_gap <= 1e-12, || format!("{name}: library recurrence differs by {lib_gap:e}"))?;
    }
    let phi = ohm::tokens::expected_iterates(&p3(), 300);
    let gap = (&phi[300].0 - DVector::from_column_slice(&[2.0, 1.0, 0.0])).amax();
    ensure(gap <= 1e-8, || format!("P3: ‖φ(300) - (2,1,0)‖∞ = {gap:e}"))?;
    Ok(format!("bound holds for t ≤ 300; P3 ‖φ(300) - (2,1,0)‖∞ = {gap:.1e}"))
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let n = 3 + (i % 10) as usize;
        let g: Graph = generators::random(n, 0.5, 0.1, 10.0, 1000 + i).map_err(|e| e.to_string())?;
        let (rho, v) = grounded_perron(&g);
        let (a, vol) = dense(&g);
        let s = g.sink();
        let non_sink: Vec<usize> = (0..n).filter(|&u| u != s).collect();
        let leak: f64 = non_sink.iter().enumerate().map(|(k, &u)| v[k] * a[(u, s)] / vol[u]).sum();
        let gap = (rho - (1.0 - leak)).abs();
        ensure(gap <= 1e-9, || format!("graph {i} (n={n}): |ρ̲ - (1 - Σ v_i P_i,sink)| = {gap:e}"))?;
        let lib = grounded_spectral_radius(&g).map_err(|e| e.to_string())?;
        let lib_gap = (lib.rho_under - rho).abs().max((lib.perron_identity(&g) - rho).abs());
        ensure(lib_gap <= 1e-9, || format!("graph {i}: library radius/identity off by {lib_gap:e}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("50 random graphs, max identity gap {worst:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut checked = 0;
    for (name, g) in suite() {
        let n = g.n();
        let s = g.sink();
        if n < 3 {
            continue;
        }
        let (a, vol) = dense(&g);
        let a_bar = drop_index(&a, s);
        let l_bar = DMatrix::from_diagonal(&DVector::from_fn(n - 1, |i, _| a_bar.row(i).sum())) - &a_bar;
        let values = eigenvalues_desc(l_bar);
        let lambda_bar_2 = values[values.len() - 2];
        if lambda_bar_2 <= 1e-12 {
            continue;
        }
        let (rho_under, _) = grounded_perron(&g);
        let lhs = 1.0 - rho_under;
        let sum: f64 = (0..n).filter(|&i| i != s).map(|i| a[(i, s)] / (a[(i, s)] + lambda_bar_2)).sum();
        let rhs = lambda_bar_2 / (2.0 * vol.max() * (n - 1) as f64) * sum;
        ensure(lhs >= rhs - 1e-10, || format!("{name}: λ̲ = {lhs} < {rhs}"))?;
        let lib = check_min_lambda(&g).map_err(|e| e.to_string())?;
        ensure((lib.check.lhs - lhs).abs() <= 1e-9 && (lib.check.rhs - rhs).abs() <= 1e-9 && lib.check.holds, || {
            format!("{name}: library check {:?} disagrees with ({lhs}, {rhs})", lib.check)
        })?;
        if name == "path3" {
            ensure((lhs - (1.0 - 0.5f64.sqrt())).abs() <= 1e-12 && (rhs - 1.0 / 12.0).abs() <= 1e-12, || {
                format!("P3 sides {lhs}, {rhs}; expected 0.29289, 0.08333")
            })?;
        }
        checked += 1;
    }
    Ok(format!("{checked} suite graphs with connected sink-deleted graph; P3 sides 0.29289 ≥ 0.08333"))
}

fn criterion_8() -> Outcome {
    let mut checked = 0;
    for (name, g) in suite() {
        if g.n() > 24 {
            continue;
        }
        let (phi, theta) = brute_force_cuts(&g);
        let lib_phi = conductance(&g).map_err(|e| e.to_string())?.value;
        let lib_theta = edge_expansion(&g).map_err(|e| e.to_string())?.value;
        ensure((lib_phi - phi).abs() <= 1e-12 && (lib_theta - theta).abs() <= 1e-12, || {
            format!("{name}: enumeration ({lib_phi}, {lib_theta}) vs brute force ({phi}, {theta})")
        })?;
        let rho_2 = transition_spectrum(&g)[1];
        let cheeger = 1.0 - phi * phi / 2.0;
        ensure(rho_2 <= cheeger + 1e-10, || format!("{name}: ρ₂ = {rho_2} > 1 - φ²/2 = {cheeger}"))?;
        let values = eigenvalues_desc(laplacian(&g));
        let lambda_2 = values[values.len() - 2];
        let (_, vol) = dense(&g);
        let vmax = vol.max();
        let expansion = vmax - (vmax * vmax - theta * theta).max(0.0).sqrt();
        ensure(lambda_2 >= expansion - 1e-10, || format!("{name}: λ₂ = {lambda_2} < {expansion}"))?;
        checked += 1;
    }
    Ok(format!("{checked} suite graphs"))
}

fn criterion_9() -> Outcome {
    let g = p3();
    let (eps, delta) = (0.2, 0.1);
    let burn_in = 80u64;
    let reps = 2000u64;
    let phi = &reference_iterates(&g, burn_in as usize)[burn_in as usize];
    let candidates: Vec<usize> = (0..g.n()).filter(|&u| u != g.sink()).collect();
    let rate = candidates
        .iter()
        .map(|&u| min_rate_for_floor(eps, delta, phi[u], &g, u).unwrap())
        .fold(0.0f64, f64::max)
        .ceil() as u64;
    let qualifying: Vec<usize> = candidates
        .into_iter()
        .filter(|&u| phi[u] >= accuracy_threshold(eps, delta, rate, &g, u).unwrap())
        .collect();
    ensure(!qualifying.is_empty(), || format!("no node qualifies at K = {rate}"))?;
    let process = TokenDiffusion::new(&g);
    let finals: Vec<Vec<u64>> = (0..reps)
        .into_par_iter()
        .map(|r| process.trajectory(rate, 9, r, burn_in).map(|s| s.last().unwrap().counts.clone()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (_, vol) = dense(&g);
    let mut report = Vec::new();
    for &u in &qualifying {
        let violations = finals
            .iter()
            .filter(|c| (c[u] as f64 / (rate as f64 * vol[u]) - phi[u]).abs() > eps * phi[u])
            .count();
        let freq = violations as f64 / reps as f64;
        ensure(freq <= delta + 0.02, || format!("node {u}: violation frequency {freq} > {}", delta + 0.02))?;
        report.push(format!("node {u}: {freq:.4}"));
    }
    Ok(format!("K = {rate}, {reps} rounds at stationarity; {}", report.join(", ")))
}

fn criterion_10() -> Outcome {
    let g = p3();
    let rate = 256u64;
    let (burn_in, window, reps) = (60u64, 200u64, 200u64);
    let p = solve_grounded(&g).map_err(|e| e.to_string())?;
    let bound = token_count_bound(&g, &p, rate);
    let (four_k, twelve_k) = (4.0 * rate as f64, 12.0 * rate as f64);
    ensure((bound.expected_total - four_k).abs() <= 1e-9 && (bound.bound - twelve_k).abs() <= 1e-9, || {
        format!("library gives expected {}, bound {}", bound.expected_total, bound.bound)
    })?;
    let process = TokenDiffusion::new(&g);
    let per_rep: Vec<(f64, u64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            process.trajectory(rate, 10, r, burn_in + window).map(|states| {
                let totals: Vec<u64> = states.iter().map(|s| s.total_tokens()).collect();
                let avg = totals[burn_in as usize + 1..].iter().sum::<u64>() as f64 / window as f64;
                (avg, *totals.iter().max().unwrap())
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let max_seen = per_rep.iter().map(|x| x.1).max().unwrap();
    ensure(max_seen as f64 <= twelve_k, || format!("observed {max_seen} tokens > 12K = {twelve_k}"))?;
    let r = reps as f64;
    let mean = per_rep.iter().map(|x| x.0).sum::<f64>() / r;
    let var = per_rep.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let se = (var / r).sqrt();
    ensure((mean - four_k).abs() <= 3.0 * se, || format!("long-run mean {mean} vs 4K = {four_k}, SE {se}"))?;
    Ok(format!("K = {rate}: long-run mean {mean:.2} vs 4K = {four_k} (SE {se:.2}); max {max_seen} ≤ 12K"))
}

fn run_compare(dir: &Path, family: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_ohm"))
        .arg("compare")
        .args(family)
        .args(["--rounds", "300", "--K", "500", "--seed", "1", "--reps", "50", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("compare exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
    })
}

fn criterion_11() -> Outcome {
    let mut compared = 0;
    for family in [&["--family", "path", "--n", "3"][..], &["--family", "random", "--n", "8"][..]] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_compare(a.path(), family)?;
        run_compare(b.path(), family)?;
        for name in ["compare.json", "jacobi.csv", "tokens.csv"] {
            let x = std::fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("{} {name} differs between runs", family.join(" ")))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} artifacts byte-identical across repeated runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("1 oracle residual", criterion_1, Duration::from_secs(1)),
        ("2 Jacobi contraction bound", criterion_2, Duration::from_secs(5)),
        ("3 Jacobi message accounting", criterion_3, Duration::from_secs(5)),
        ("4 estimator unbiasedness", criterion_4, Duration::from_secs(60)),
        ("5 expected-iterate convergence", criterion_5, Duration::from_secs(5)),
        ("6 Perron identity", criterion_6, Duration::from_secs(10)),
        ("7 smallest grounded eigenvalue bound", criterion_7, Duration::from_secs(5)),
        ("8 Cheeger and expansion bounds", criterion_8, Duration::from_secs(30)),
        ("9 Chernoff accuracy", criterion_9, Duration::from_secs(60)),
        ("10 token-count bound", criterion_10, Duration::from_secs(30)),
        ("11 determinism", criterion_11, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?} > {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
