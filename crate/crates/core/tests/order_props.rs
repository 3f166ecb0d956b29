mod common;

use common::*;
use proptest::prelude::*;
use qcompat::compat::{op_ef_compatible, DecideOptions, Outcome};
use qcompat::matkit::{mat_sqrt, min_eigenvalue};
use qcompat::order::{commutes_with_range, cp_leq, has_rank1_deficiency, rank1_channel_family};
use qcompat::{ComplexMatrix, Effect};
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cp_order_is_a_partial_order(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        // A chain built by adding Kraus operators of one channel.
        let ops = channel_kraus(&mut r, din, dout, 3);
        let n = ops.len();
        let a = from_kraus(ops[..n - 2].to_vec());
        let b = from_kraus(ops[..n - 1].to_vec());
        let c = from_kraus(ops.clone());
        prop_assert!(cp_leq(&a, &a, &t).unwrap());
        prop_assert!(cp_leq(&a, &b, &t).unwrap());
        prop_assert!(cp_leq(&b, &c, &t).unwrap());
        prop_assert!(cp_leq(&a, &c, &t).unwrap());
        prop_assert!(!cp_leq(&c, &a, &t).unwrap());
        // Antisymmetry: mutual order only for equal maps.
        let a2 = from_kraus(ops[..n - 2].iter().rev().cloned().collect());
        prop_assert!(cp_leq(&a2, &a, &t).unwrap() && cp_leq(&a, &a2, &t).unwrap());
        prop_assert!(a.approx_eq(&a2, 1e-9));
    }

    #[test]
    fn rank1_family_members_sit_above(seed in any::<u64>(), d in 2usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let c: f64 = r.gen_range(0.1..1.0);
        let p = projection(&mut r, d);
        let squeeze = mat_sqrt(&(ComplexMatrix::identity(d) - p.scale_real(c)), t.psd_tol).unwrap();
        let ops: Vec<_> = channel_kraus(&mut r, d, k, 2).iter().map(|m| m.matmul(&squeeze)).collect();
        let phi = from_kraus(ops);
        prop_assert!(has_rank1_deficiency(&phi, &t));
        for _ in 0..4 {
            let lam = rank1_channel_family(&phi, &state(&mut r, k), &t).unwrap();
            prop_assert!(lam.is_channel());
            prop_assert!(cp_leq(&phi, &lam, &t).unwrap());
            // The completion branch has input effect proportional to the deficiency direction.
            let gap = lam.minus(&phi, &t).unwrap().unit_effect_matrix();
            prop_assert!((&gap - &p.scale_real(c)).max_abs() <= 1e-9);
        }
    }

    #[test]
    fn commuting_with_range_gives_compatibility(seed in any::<u64>(), d in 2usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let u = unitary(&mut r, d);
        let basis: Vec<ComplexMatrix> = (0..d).map(|j| u.col(j)).collect();
        let p = ComplexMatrix::outer(&basis[0], &basis[0]);
        // Kraus operators |φ⟩⟨e_j| read one eigenvector of P each, so Φᴴ(T) is diagonal with P.
        let ops: Vec<ComplexMatrix> = basis
            .iter()
            .map(|e| {
                let s: f64 = r.gen_range(0.2..1.0);
                ComplexMatrix::outer(&pure_vector(&mut r, k), e).scale_real(s)
            })
            .collect();
        let phi = from_kraus(ops);
        let proj = Effect::new(p, &t).unwrap();
        prop_assert!(commutes_with_range(&phi, &proj, &t).unwrap());
        let d1 = op_ef_compatible(&phi, &proj, &DecideOptions::default()).unwrap();
        prop_assert_eq!(d1.outcome, Outcome::Holds);
        let slow = DecideOptions { fast_paths: false, ..DecideOptions::default() };
        let d2 = op_ef_compatible(&phi, &proj, &slow).unwrap();
        prop_assert_ne!(d2.outcome, Outcome::Fails);
    }
}

#[test]
fn order_rejects_incomparable_increments() {
    let mut r = rng(11);
    let t = tol();
    for _ in 0..20 {
        let a = operation(&mut r, 2, 2, 1);
        let b = operation(&mut r, 2, 2, 1);
        let diff = b.choi() - a.choi();
        assert_eq!(cp_leq(&a, &b, &t).unwrap(), min_eigenvalue(&diff) >= -t.psd_tol);
    }
}
