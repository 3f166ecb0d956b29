mod common;

use common::*;
use proptest::prelude::*;
use qcompat::matkit::min_eigenvalue;
use qcompat::memo::{
    model_channel, model_identity_instrument, model_poststate, model_probability, shared_model_pair,
    synthesize_model,
};
use qcompat::{Observable, PointerMap};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_statistics_are_consistent(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let ins = instrument(&mut r, din, dout, k);
        let m = synthesize_model(&ins, &t).unwrap();
        let rho = state(&mut r, din);
        let mut total = 0.0;
        for x in m.pointer().outcomes() {
            let p = model_probability(&m, &rho, &[x], &t).unwrap();
            let post = model_poststate(&m, &rho, &[x], &t).unwrap();
            prop_assert!(min_eigenvalue(&post.hermitian_part()) >= -1e-10);
            prop_assert!((post.trace().re - p).abs() <= 1e-12);
            total += p;
        }
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn synthesized_models_realize_their_instrument(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let ins = instrument(&mut r, din, dout, k);
        let m = synthesize_model(&ins, &t).unwrap();
        let back = model_identity_instrument(&m, &t).unwrap();
        for (x, branch) in ins.iter() {
            prop_assert!(back.branch(x).unwrap().approx_eq(branch, 1e-8));
        }
    }

    #[test]
    fn total_channel_ignores_the_pointer(seed in any::<u64>(), d in 1usize..4, k in 1usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let m = synthesize_model(&instrument(&mut r, d, d, k), &t).unwrap();
        let e = effect_matrix(&mut r, m.ancilla_dims().1);
        let other = Observable::new(
            vec![("u".into(), e.clone()), ("v".into(), qcompat::ComplexMatrix::identity(e.rows()) - e)],
            &t,
        ).unwrap();
        let swapped = m.with_pointer(other).unwrap();
        prop_assert_eq!(model_channel(&m, &t).unwrap(), model_channel(&swapped, &t).unwrap());
    }

    #[test]
    fn coarse_grainings_share_one_coupling(seed in any::<u64>(), d in 1usize..4, k in 2usize..4) {
        let mut r = rng(seed);
        let t = tol();
        let fine = instrument(&mut r, d, d, k);
        let coarse = fine.relabel(&PointerMap::constant(fine.outcomes(), "all"), &t).unwrap();
        let (m1, m2) = shared_model_pair(&fine, &coarse, &t).unwrap();
        prop_assert_eq!(m1.eta(), m2.eta());
        prop_assert_eq!(m1.unitary(), m2.unitary());
    }
}
