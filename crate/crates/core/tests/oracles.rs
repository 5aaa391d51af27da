mod common;

use std::sync::Arc;

use common::*;
use dynbc_afem::adapt::doerfler_mark;
use dynbc_afem::assembly::{assemble, ProblemData};
use dynbc_afem::estimator::estimate;
use dynbc_afem::solver::{solve, solve_sparse, SolutionTriple};
use rand::Rng;

const INSTANCES: u64 = 24;

#[test]
fn gauss_rules_integrate_monomials() {
    for n in [3, 6] {
        let g = gauss_legendre(n);
        for k in 0..2 * n {
            let q: f64 = g.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
        }
    }
    // ∫_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let rule = collapsed_rule(6);
    for a in 0..6u32 {
        for b in 0..6 - a {
            let q: f64 = rule.iter().map(|(l, w)| 0.5 * w * l[1].powi(a as i32) * l[2].powi(b as i32)).sum();
            assert!((q - fact(a) * fact(b) / fact(a + b + 2)).abs() < 1e-14);
        }
    }
}

#[test]
fn assembly_matches_dense_oracle() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let disc = random_discretization(&mut r);
        let (f, g) = random_data(&mut r);
        let oracle = oracle_assemble(&disc, &*f, &*g);
        let system = assemble(&disc, &problem(&f, &g)).unwrap();
        let dense = densify(&system);
        let flat_o: Vec<f64> = oracle.a.iter().flatten().copied().collect();
        let flat_p: Vec<f64> = dense.iter().flatten().copied().collect();
        let d = rel_diff(&flat_o, &flat_p);
        assert!(d < 1e-12, "seed {seed} ({}): matrix differs by {d:e}", disc.scheme.name());
        let d = rel_diff(&oracle.b, &system.rhs());
        assert!(d < 1e-12, "seed {seed}: load differs by {d:e}");
    }
}

#[test]
fn solve_matches_dense_oracle() {
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let disc = Arc::new(random_discretization(&mut r));
        let (f, g) = random_data(&mut r);
        let oracle = oracle_assemble(&disc, &*f, &*g);
        let x_o = dense_solve(&oracle.a, &oracle.b).expect("oracle system is singular");
        let system = assemble(&disc, &problem(&f, &g)).unwrap();
        let x_p = solve(disc.clone(), &system).unwrap().stacked();
        let d = rel_diff(&x_o, &x_p);
        assert!(d < 1e-9, "seed {seed} ({}): solutions differ by {d:e}", disc.scheme.name());
    }
}

#[test]
fn zero_loads_give_zero_solution() {
    let mut r = rng(7);
    let disc = Arc::new(random_discretization(&mut r));
    let system = assemble(&disc, &ProblemData::constant(0.0, 0.0)).unwrap();
    assert!(solve(disc.clone(), &system).unwrap().stacked().iter().all(|&v| v == 0.0));
    let oracle = oracle_assemble(&disc, &|_| 0.0, &|_| 0.0);
    assert!(dense_solve(&oracle.a, &oracle.b).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn manufactured_vector_is_recovered() {
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let disc = random_discretization(&mut r);
        let system = assemble(&disc, &ProblemData::constant(0.0, 0.0)).unwrap();
        let x: Vec<f64> = (0..system.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = densify(&system);
        let b = matvec(&a, &x);
        let y = dense_solve(&a, &b).unwrap();
        assert!(rel_diff(&x, &y) < 1e-10, "seed {seed}: oracle round trip");
        let z = solve_sparse(&system.global_matrix(), &b).unwrap();
        assert!(rel_diff(&x, &z) < 1e-10, "seed {seed}: library round trip");
    }
}

#[test]
fn estimator_matches_oracle() {
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let disc = Arc::new(random_discretization(&mut r));
        let (f, g) = random_data(&mut r);
        let d = &disc.dofs;
        let mut sol = SolutionTriple::zero(disc.clone());
        sol.u.iter_mut().chain(sol.p.iter_mut()).chain(sol.lambda.iter_mut()).for_each(|v| *v = r.random_range(-1.0..1.0));
        if seed % 4 == 0 {
            sol = solve(disc.clone(), &assemble(&disc, &problem(&f, &g)).unwrap()).unwrap();
        }
        let o = oracle_estimate(&disc, &sol.u, &sol.p, &sol.lambda, &*f, &*g);
        let p = estimate(&sol, &problem(&f, &g));
        let name = disc.scheme.name();
        for (what, a, b) in [
            ("T", &o.t, &p.eta_t2),
            ("Ein", &o.e_in, &p.eta_ein2),
            ("Ebd", &o.e_bd, &p.eta_ebd2),
            ("I", &o.i, &p.eta_i2),
            ("tilde T", &o.tilde_t, &p.eta_tilde_t2),
            ("tilde I", &o.tilde_i, &p.eta_tilde_i2),
        ] {
            let diff = rel_diff(a, b);
            assert!(diff < 1e-9, "seed {seed} ({name}, {} dofs): {what} differs by {diff:e}", d.total());
        }
        assert!((o.total - p.total).abs() <= 1e-9 * o.total);
    }
}

#[test]
fn estimator_of_constants_vanishes_in_oracle() {
    let mut r = rng(11);
    let disc = Arc::new(random_discretization(&mut r));
    let s = disc.scheme.sigma;
    let u = vec![0.7; disc.dofs.n_u];
    let p = vec![0.7; disc.dofs.n_p];
    let l = vec![0.0; disc.dofs.n_lambda];
    let o = oracle_estimate(&disc, &u, &p, &l, &|_| s * 0.7, &|_| s * 0.7);
    assert!(o.total < 1e-12, "{}", o.total);
    let z = vec![0.0; disc.dofs.n_u];
    let o = oracle_estimate(&disc, &z, &vec![0.0; disc.dofs.n_p], &l, &|_| 0.0, &|_| 0.0);
    assert_eq!(o.total, 0.0);
}

#[test]
fn marking_has_minimal_cardinality() {
    let examples: [(&[f64], &[f64], f64); 3] =
        [(&[9.0, 4.0], &[1.0, 1.0, 1.0], 0.75), (&[0.3, 0.5], &[0.2, 0.1], 0.5), (&[1.0, 1.0, 1.0], &[1.0], 0.5)];
    let mut cases: Vec<(Vec<f64>, Vec<f64>, f64)> =
        examples.iter().map(|(a, b, t)| (a.to_vec(), b.to_vec(), *t)).collect();
    let mut r = rng(400);
    for _ in 0..60 {
        let nt = r.random_range(0..9);
        let ns = r.random_range(0..15 - nt).max(usize::from(nt == 0));
        let gen = |r: &mut rand::rngs::StdRng, n: usize| -> Vec<f64> {
            (0..n).map(|_| f64::from(r.random_range(0..40u32))).collect()
        };
        let (tri, seg) = (gen(&mut r, nt), gen(&mut r, ns));
        cases.push((tri, seg, f64::from(r.random_range(1..20u32)) / 20.0));
    }
    for (tri, seg, theta) in cases {
        let m = doerfler_mark(&tri, &seg, theta).unwrap();
        let all: Vec<f64> = tri.iter().chain(&seg).copied().collect();
        let total: f64 = all.iter().sum();
        if total == 0.0 {
            assert!(m.converged);
            continue;
        }
        let marked: f64 = m.triangles.iter().map(|&i| tri[i]).chain(m.segments.iter().map(|&i| seg[i])).sum();
        assert!(marked >= (1.0 - theta) * total);
        assert_eq!(m.triangles.len() + m.segments.len(), oracle_doerfler(&all, theta), "{tri:?} {seg:?} {theta}");
    }
}
