mod common;

use common::*;
use proptest::prelude::*;
use qcompat::feasibility::{
    estimate_margin, solve, Constraint, FeasVerdict, FeasibilityProblem, LinearMap, Term,
};
use qcompat::matkit::min_eigenvalue;
use qcompat::ComplexMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `⟨v|X|v⟩ = a` as a 1×1 sandwich constraint.
fn functional(p: &mut FeasibilityProblem, v: &ComplexMatrix, a: f64) {
    let row = v.adjoint();
    let term = Term::new(qcompat::feasibility::BlockId(0), 1.0, LinearMap::Sandwich(row));
    p.add_constraint(Constraint::new(vec![term], ComplexMatrix::diag_real(&[a])))
        .unwrap();
}

fn unit_trace_problem(d: usize) -> FeasibilityProblem {
    let mut p = FeasibilityProblem::new();
    let x = p.add_block("x", d);
    p.add_constraint(Constraint::new(
        vec![Term::new(x, 1.0, LinearMap::Trace)],
        ComplexMatrix::diag_real(&[1.0]),
    ))
    .unwrap();
    p
}

/// Positive definite point with smallest eigenvalue at least `floor`, normalized to unit trace.
fn interior_point(r: &mut ChaCha8Rng, d: usize, floor: f64) -> ComplexMatrix {
    let v = pure_vector(r, d);
    let s = &ComplexMatrix::outer(&v, &v).scale_real(0.7) + &state(r, d).scale_real(0.3);
    let mixed = &s.scale_real(1.0 - floor * d as f64) + &ComplexMatrix::identity(d).scale_real(floor);
    mixed.hermitian_part()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn margin_is_monotone_under_added_constraints(seed in any::<u64>(), d in 2usize..4, extra in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let mut p = unit_trace_problem(d);
        let before = estimate_margin(&p, &t, 20_000).unwrap();
        for _ in 0..extra {
            let v = pure_vector(&mut r, d);
            functional(&mut p, &v, r.gen_range(-0.2..0.8));
            match estimate_margin(&p, &t, 20_000) {
                Ok(after) => prop_assert!(after.lower <= before.upper + 1e-6,
                    "margin rose from [{}, {}] to [{}, {}]", before.lower, before.upper, after.lower, after.upper),
                // Adding constraints may empty the affine set, the extreme case of a drop.
                Err(qcompat::Error::InconsistentAffine { .. }) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn strictly_interior_problems_are_found(seed in any::<u64>(), d in 3usize..6, m in 1usize..5) {
        let mut r = rng(seed);
        let t = tol();
        // Close to the boundary, so the least-squares start is usually not PSD.
        let x0 = interior_point(&mut r, d, 20.0 * t.feas_tol);
        prop_assert!(min_eigenvalue(&x0) >= 10.0 * t.feas_tol);
        let mut p = unit_trace_problem(d);
        for _ in 0..m {
            let k = matrix(&mut r, 2, d);
            let term = Term::new(qcompat::feasibility::BlockId(0), 1.0, LinearMap::Sandwich(k.clone()));
            p.add_constraint(Constraint::new(vec![term], k.sandwich(&x0).hermitian_part())).unwrap();
        }
        let out = solve(&p, &t, 50_000).unwrap();
        prop_assert_eq!(out.verdict, FeasVerdict::Feasible);
        let w = out.witness.unwrap();
        prop_assert!(p.constraint_residual(&w).unwrap() <= t.feas_tol);
        prop_assert!(min_eigenvalue(&w[0]) >= -t.psd_tol);
    }

    #[test]
    fn solver_is_bit_deterministic(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let mut p = unit_trace_problem(d);
        for _ in 0..2 {
            let v = pure_vector(&mut r, d);
            functional(&mut p, &v, r.gen_range(-0.2..0.8));
        }
        match (solve(&p, &t, 5_000), solve(&p, &t, 5_000)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "runs disagree on success"),
        }
    }
}
