mod common;

use common::*;
use proptest::prelude::*;
use qcompat::compat::{
    classify, coexistent_effects, compatible, op_ef_compatible, op_op_compatible, weakly_compatible,
    DecideOptions, Outcome, Relation,
};
use qcompat::{ComplexMatrix, Device, Effect};
use rand::Rng;

fn solver_only() -> DecideOptions {
    DecideOptions {
        fast_paths: false,
        ..DecideOptions::default()
    }
}

fn random_device(r: &mut rand_chacha::ChaCha8Rng, kind: usize, d: usize) -> Device {
    match kind {
        0 => Device::Effect(effect(r, d)),
        _ => Device::Operation(operation(r, d, d, 1 + kind % 2)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn classification_respects_the_hierarchy(seed in any::<u64>(), k1 in 0usize..3, k2 in 0usize..3) {
        let mut r = rng(seed);
        let opts = DecideOptions::default();
        let a = random_device(&mut r, k1, 2);
        let b = random_device(&mut r, k2, 2);
        let v = classify(&a, &b, &opts).unwrap();
        let c = compatible(&a, &b, &opts).unwrap();
        let w = weakly_compatible(&a, &b, &opts).unwrap();
        if c.outcome == Outcome::Holds {
            prop_assert_eq!(v.relation, Relation::Compatible);
            prop_assert_ne!(w.outcome, Outcome::Fails);
        }
        if w.outcome == Outcome::Holds {
            prop_assert_ne!(v.relation, Relation::StronglyIncompatible);
        }
        if let Some(wit) = &v.witness {
            prop_assert!(wit.validate(&a, &b, &opts.tol).is_ok());
        }
    }

    #[test]
    fn parts_of_one_instrument_are_compatible(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let opts = DecideOptions::default();
        let ins = instrument(&mut r, d, d, 3);
        let phi = ins.branch("x0").unwrap().clone();
        let e = ins.part_effect(&["x0", "x1"], &t).unwrap();
        let d1 = op_ef_compatible(&phi, &e, &opts).unwrap();
        prop_assert_ne!(d1.outcome, Outcome::Fails);
        let psi = ins.branch("x1").unwrap().clone();
        let d2 = op_op_compatible(&phi, &psi, &opts).unwrap();
        prop_assert_ne!(d2.outcome, Outcome::Fails);
        // Monotonicity: compatibility passes to the Heisenberg unit of the operation.
        if d1.outcome == Outcome::Holds {
            let unit = phi.unit_effect();
            prop_assert_ne!(coexistent_effects(&unit, &e, &opts).unwrap().outcome, Outcome::Fails);
        }
        if d2.outcome == Outcome::Holds {
            let unit = phi.unit_effect();
            prop_assert_ne!(op_ef_compatible(&psi, &unit, &opts).unwrap().outcome, Outcome::Fails);
        }
    }

    #[test]
    fn commuting_effects_are_compatible(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let u = unitary(&mut r, d);
        let diag = |r: &mut rand_chacha::ChaCha8Rng| {
            let vals: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0)).collect();
            Effect::new(u.matmul(&ComplexMatrix::diag_real(&vals)).matmul(&u.adjoint()), &t).unwrap()
        };
        let (a, b) = (diag(&mut r), diag(&mut r));
        let v = classify(&Device::Effect(a.clone()), &Device::Effect(b.clone()), &DecideOptions::default()).unwrap();
        prop_assert_eq!(v.relation, Relation::Compatible);
        prop_assert_ne!(coexistent_effects(&a, &b, &solver_only()).unwrap().outcome, Outcome::Fails);
    }

    #[test]
    fn noncommuting_projections_are_incompatible(seed in any::<u64>(), d in 2usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let p = Effect::new(projection(&mut r, d), &t).unwrap();
        let q = Effect::new(projection(&mut r, d), &t).unwrap();
        let v = classify(&Device::Effect(p.clone()), &Device::Effect(q.clone()), &DecideOptions::default()).unwrap();
        prop_assert_ne!(v.relation, Relation::Compatible);
        prop_assert_ne!(coexistent_effects(&p, &q, &solver_only()).unwrap().outcome, Outcome::Holds);
    }
}
