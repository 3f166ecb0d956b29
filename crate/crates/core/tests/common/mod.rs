//! Seeded random devices shared by the property suites.
#![allow(dead_code)]

use qcompat::devices::{choi_from_kraus, KrausSet};
use qcompat::matkit::{herm_eig, op_norm};
use qcompat::{CPMap, ComplexMatrix, Effect, Instrument, Tolerances, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tol() -> Tolerances {
    Tolerances::default()
}

pub fn matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    })
}

pub fn hermitian(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    matrix(r, d, d).hermitian_part()
}

pub fn state(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let g = matrix(r, d, d);
    let p = g.matmul(&g.adjoint());
    let t = p.trace().re;
    p.scale_real(1.0 / t)
}

pub fn pure_vector(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let v = matrix(r, d, 1);
    let n = v.frob_norm();
    v.scale_real(1.0 / n)
}

pub fn projection(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let v = pure_vector(r, d);
    ComplexMatrix::outer(&v, &v)
}

/// Haar-ish unitary from the eigenvectors of a random Hermitian matrix.
pub fn unitary(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    herm_eig(&hermitian(r, d)).expect("hermitian").vectors
}

/// Effect with spectrum strictly inside `[0, 1]`.
pub fn effect_matrix(r: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let g = matrix(r, d, d);
    let p = g.matmul(&g.adjoint());
    let scale = op_norm(&p) * r.gen_range(1.05..1.5);
    p.scale_real(1.0 / scale)
}

pub fn effect(r: &mut ChaCha8Rng, d: usize) -> Effect {
    Effect::new(effect_matrix(r, d), &tol()).expect("effect")
}

/// Kraus operators of a random channel; the count is raised until trace preservation is possible.
pub fn channel_kraus(r: &mut ChaCha8Rng, din: usize, dout: usize, n: usize) -> Vec<ComplexMatrix> {
    let n = n.max(din.div_ceil(dout));
    let gs: Vec<_> = (0..n).map(|_| matrix(r, dout, din)).collect();
    let mut s = ComplexMatrix::zeros(din, din);
    for g in &gs {
        s += &g.adjoint().matmul(g);
    }
    let w = herm_eig(&s).expect("gram").rebuild_with(|v| 1.0 / v.sqrt());
    gs.iter().map(|g| g.matmul(&w)).collect()
}

pub fn from_kraus(ops: Vec<ComplexMatrix>) -> CPMap {
    choi_from_kraus(&KrausSet::new(ops, &tol()).expect("kraus"), &tol()).expect("map")
}

pub fn channel(r: &mut ChaCha8Rng, din: usize, dout: usize, n: usize) -> CPMap {
    from_kraus(channel_kraus(r, din, dout, n))
}

/// A strictly trace-decreasing operation: a channel scaled by `s ∈ [0.3, 0.95]`.
pub fn operation(r: &mut ChaCha8Rng, din: usize, dout: usize, n: usize) -> CPMap {
    let s: f64 = r.gen_range(0.3..0.95);
    let ops = channel_kraus(r, din, dout, n)
        .into_iter()
        .map(|k| k.scale_real(s.sqrt()))
        .collect();
    from_kraus(ops)
}

pub fn instrument(r: &mut ChaCha8Rng, din: usize, dout: usize, outcomes: usize) -> Instrument {
    let mut per: Vec<usize> = (0..outcomes).map(|_| r.gen_range(1..=2)).collect();
    per[0] += din.div_ceil(dout).saturating_sub(per.iter().sum());
    let ops = channel_kraus(r, din, dout, per.iter().sum());
    let mut it = ops.into_iter();
    let entries = per
        .iter()
        .enumerate()
        .map(|(x, &k)| (format!("x{x}"), from_kraus(it.by_ref().take(k).collect())))
        .collect();
    Instrument::new(entries, &tol()).expect("instrument")
}
