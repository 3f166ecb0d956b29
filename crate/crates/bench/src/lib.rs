//! Fixed qubit and qutrit devices for the benchmarks in `benches/`.

use qcompat::devices::choi_from_kraus;
use qcompat::matkit::pauli;
use qcompat::{CPMap, ComplexMatrix, Effect, KrausSet, Tolerances};

/// `s·½(I + n·σ)` for a unit Bloch vector `n`.
pub fn unsharp_qubit_effect(n: [f64; 3], s: f64) -> Effect {
    let mut m = ComplexMatrix::identity(2);
    for (s, c) in [pauli::x(), pauli::y(), pauli::z()].iter().zip(n) {
        m += &s.scale_real(c);
    }
    Effect::new(m.scale_real(0.5 * s), &Tolerances::default()).expect("effect")
}

/// The Lüders operation `ρ ↦ √E ρ √E`.
pub fn luders(e: &Effect) -> CPMap {
    let tol = Tolerances::default();
    let root = qcompat::matkit::mat_sqrt(e.matrix(), tol.psd_tol).expect("psd");
    choi_from_kraus(&KrausSet::new(vec![root], &tol).expect("kraus"), &tol).expect("map")
}

/// A qutrit channel with three fixed, linearly independent Kraus operators.
pub fn qutrit_channel() -> CPMap {
    let tol = Tolerances::default();
    let d = 3;
    let g: Vec<ComplexMatrix> = (0..3)
        .map(|a| {
            ComplexMatrix::from_fn(d, d, |i, j| {
                let x = (1 + a * 7 + i * 3 + j * 5) as f64;
                qcompat::C64::new((x * 0.37).sin(), (x * 0.61).cos() * 0.5)
            })
        })
        .collect();
    let mut s = ComplexMatrix::zeros(d, d);
    for k in &g {
        s += &k.adjoint().matmul(k);
    }
    let w = qcompat::matkit::herm_eig(&s).expect("gram").rebuild_with(|v| 1.0 / v.sqrt());
    let ops = g.iter().map(|k| k.matmul(&w)).collect();
    choi_from_kraus(&KrausSet::new(ops, &tol).expect("kraus"), &tol).expect("map")
}
