//! Minimal Stinespring dilations and Radon–Nikodym effects on the ancilla.
//!
//! `V: H → K ⊗ A` is stored as a `dK·dA × dH` matrix with row index `k·dA + a`,
//! so that `Φᴴ(T) = V†(T ⊗ I_A)V`.


use crate::compat::{coexistent_effects, DecideOptions, Outcome, Verdict, Witness};
use crate::devices::{CPMap, Effect, Instrument, KrausSet, Observable, PartLocation};
use crate::error::{Error, Result};
use crate::matkit::{self, herm_eig_unchecked, kron, ComplexMatrix, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct StinespringDilation {
    pub v: ComplexMatrix,
    pub dim_in: usize,
    pub dim_out: usize,
    pub ancilla_dim: usize,
    pub minimal: bool,
}

impl StinespringDilation {
    /// Builds `V = Σ_a K_a ⊗ |a⟩` from Kraus operators (`dK × dH` each).
    pub fn from_kraus(ops: &[ComplexMatrix]) -> Result<Self> {
        let (dk, dh) = ops.first().ok_or(Error::EmptyOutcomes)?.shape();
        for k in ops {
            if k.shape() != (dk, dh) {
                return Err(Error::DimensionMismatch {
                    context: "Kraus operator shape",
                    expected: dk * dh,
                    found: k.rows() * k.cols(),
                });
            }
        }
        let da = ops.len();
        let v = ComplexMatrix::from_fn(dk * da, dh, |r, i| ops[r % da][(r / da, i)]);
        let minimal = spans_output_ancilla(&v, dk, da);
        Ok(Self {
            v,
            dim_in: dh,
            dim_out: dk,
            ancilla_dim: da,
            minimal,
        })
    }

    /// Kraus operator `K_a = (I ⊗ ⟨a|)V`.
    pub fn kraus(&self, a: usize) -> ComplexMatrix {
        let da = self.ancilla_dim;
        ComplexMatrix::from_fn(self.dim_out, self.dim_in, |k, i| self.v[(k * da + a, i)])
    }

    pub fn kraus_ops(&self) -> Vec<ComplexMatrix> {
        (0..self.ancilla_dim).map(|a| self.kraus(a)).collect()
    }

    /// `V†(T ⊗ E)V`.
    pub fn heisenberg_with(&self, t: &ComplexMatrix, e: &ComplexMatrix) -> ComplexMatrix {
        self.v.adjoint().matmul(&kron(t, e)).matmul(&self.v)
    }

    /// `V†(T ⊗ I)V`.
    pub fn heisenberg(&self, t: &ComplexMatrix) -> ComplexMatrix {
        self.heisenberg_with(t, &ComplexMatrix::identity(self.ancilla_dim))
    }

    /// The operation `T ↦ V†(T ⊗ E)V` for an ancilla effect `E`.
    pub fn operation_for(&self, e: &ComplexMatrix, tol: &Tolerances) -> Result<CPMap> {
        let root = matkit::mat_sqrt(e, tol.psd_tol)?;
        let ops = self.kraus_ops();
        // K'_c = Σ_a √E[c, a] K_a
        let mixed: Vec<ComplexMatrix> = (0..self.ancilla_dim)
            .map(|c| {
                ops.iter()
                    .enumerate()
                    .fold(ComplexMatrix::zeros(self.dim_out, self.dim_in), |acc, (a, k)| {
                        &acc + &k.scale(root[(c, a)])
                    })
            })
            .collect();
        crate::devices::choi_from_kraus(&KrausSet::new(mixed, tol)?, tol)
    }
}

/// Whether `{(T ⊗ I)Vψ}` spans `K ⊗ A`, i.e. the Kraus operators are linearly independent.
fn spans_output_ancilla(v: &ComplexMatrix, dk: usize, da: usize) -> bool {
    let dh = v.cols();
    // Rows of X are the Kraus operators flattened; independence ⇔ X X† has full rank.
    let x = ComplexMatrix::from_fn(da, dk * dh, |a, ki| v[((ki / dh) * da + a, ki % dh)]);
    let gram = x.matmul(&x.adjoint());
    let scale = 1.0 + matkit::herm_op_norm(&gram);
    matkit::rank_above(&gram, 1e-10 * scale) == da
}

/// Minimal dilation from the Choi eigenpairs: ancilla column `a` is `√λ_a` times the reshaped eigenvector.
pub fn minimal_stinespring(m: &CPMap, tol: &Tolerances) -> StinespringDilation {
    let (dh, dk) = m.dims();
    let e = herm_eig_unchecked(m.choi());
    let thr = tol.psd_tol * (1.0 + matkit::herm_op_norm(m.choi()));
    let mut ops = Vec::new();
    for (idx, &lambda) in e.values.iter().enumerate().rev() {
        if lambda <= thr {
            continue;
        }
        let s = lambda.sqrt();
        ops.push(ComplexMatrix::from_fn(dk, dh, |k, i| e.vectors[(i * dk + k, idx)] * s));
    }
    if ops.is_empty() {
        // The null map: a single zero column block, not minimal in any useful sense.
        let mut d = StinespringDilation::from_kraus(&[ComplexMatrix::zeros(dk, dh)]).expect("one operator");
        d.minimal = false;
        return d;
    }
    StinespringDilation::from_kraus(&ops).expect("operators share a shape")
}


/// The unique ancilla effect `E` with `Φᴴ(T) = V†(T ⊗ E)V`.
///
/// Solves the linear system on the matrix units `T = |k⟩⟨l|` by least squares.
/// A residual above `feas_tol` or an `E` outside `[0, I]` means `f ≰ Λ`.
pub fn radon_nikodym_effect(dil: &StinespringDilation, f: &CPMap, tol: &Tolerances) -> Result<Effect> {
    let (dh, dk, da) = (dil.dim_in, dil.dim_out, dil.ancilla_dim);
    if f.dims() != (dh, dk) {
        return Err(Error::DimensionMismatch {
            context: "Radon-Nikodym operand",
            expected: dh * dk,
            found: f.dim_in() * f.dim_out(),
        });
    }
    let ops = dil.kraus_ops();
    let rows = dk * dk * dh * dh;
    let mut a = ComplexMatrix::zeros(rows, da * da);
    let mut b = ComplexMatrix::zeros(rows, 1);
    let mut r = 0;
    for k in 0..dk {
        for l in 0..dk {
            let target = f.apply_h(&ComplexMatrix::unit(dk, k, l))?;
            for i in 0..dh {
                for j in 0..dh {
                    for p in 0..da {
                        for q in 0..da {
                            // (K_p† |k⟩⟨l| K_q)[i, j]
                            a[(r, p * da + q)] = ops[p][(k, i)].conj() * ops[q][(l, j)];
                        }
                    }
                    b[(r, 0)] = target[(i, j)];
                    r += 1;
                }
            }
        }
    }
    let (x, rank) = matkit::lstsq(&a, &b);
    if rank < da * da {
        return Err(Error::DilationNotMinimal {
            rank,
            needed: da * da,
        });
    }
    let residual = (&a.matmul(&x) - &b).frob_norm();
    if residual > tol.feas_tol * (1.0 + b.frob_norm()) {
        return Err(Error::NotDominated { residual });
    }
    let e = ComplexMatrix::from_fn(da, da, |p, q| x[(p * da + q, 0)]).hermitian_part();
    let lo = matkit::min_eigenvalue(&e);
    let hi = matkit::max_eigenvalue(&e);
    let slack = tol.feas_tol.max(tol.psd_tol);
    if lo < -slack || hi > 1.0 + slack {
        return Err(Error::NotDominated {
            residual: (-lo).max(hi - 1.0),
        });
    }
    // Clip the solver-level slack so the result validates as an effect.
    let clipped = matkit::herm_eig_unchecked(&e).rebuild_with(|v| v.clamp(0.0, 1.0));
    Effect::new(clipped, tol)
}

/// Ancilla observable `x ↦ E(x)` of an instrument whose total channel is the dilated map.
pub fn rn_observable(dil: &StinespringDilation, ins: &Instrument, tol: &Tolerances) -> Result<Observable> {
    let total = ins.total_channel(tol);
    let source = CPMap::from_choi(
        dil.dim_in,
        dil.dim_out,
        choi_of_dilation(dil),
        tol,
    )?;
    if !total.approx_eq(&source, tol.feas_tol) {
        return Err(Error::TotalsDiffer {
            deviation: matkit::rel_distance(source.choi(), total.choi()),
        });
    }
    let mut entries = Vec::with_capacity(ins.len());
    for (label, branch) in ins.iter() {
        let e = radon_nikodym_effect(dil, branch, tol)?;
        entries.push((label.to_string(), e.matrix().clone()));
    }
    // Spread the normalization residual so the family sums exactly to I.
    let da = dil.ancilla_dim;
    let sum = entries
        .iter()
        .fold(ComplexMatrix::zeros(da, da), |acc, (_, m)| &acc + m);
    let gap = (&ComplexMatrix::identity(da) - &sum).scale_real(1.0 / entries.len() as f64);
    if gap.frob_norm() <= tol.feas_tol * 10.0 {
        for (_, m) in entries.iter_mut() {
            *m = &*m + &gap;
        }
    }
    Observable::new(entries, tol)
}

fn choi_of_dilation(dil: &StinespringDilation) -> ComplexMatrix {
    let (dh, dk) = (dil.dim_in, dil.dim_out);
    let n = dh * dk;
    let mut j = ComplexMatrix::zeros(n, n);
    for k in dil.kraus_ops() {
        let w = ComplexMatrix::from_fn(n, 1, |r, _| k[(r % dk, r / dk)]);
        j += &w.matmul(&w.adjoint());
    }
    j
}

/// Ancilla unitary `W` with `(I ⊗ W) V_a = V_b`, for two dilations of the same map.
pub fn ancilla_intertwiner(
    a: &StinespringDilation,
    b: &StinespringDilation,
    tol: &Tolerances,
) -> Result<ComplexMatrix> {
    if a.ancilla_dim != b.ancilla_dim || a.v.shape() != b.v.shape() {
        return Err(Error::DimensionMismatch {
            context: "dilation ancilla",
            expected: a.ancilla_dim,
            found: b.ancilla_dim,
        });
    }
    let da = a.ancilla_dim;
    let cols = a.dim_out * a.dim_in;
    let flat = |d: &StinespringDilation| {
        ComplexMatrix::from_fn(da, cols, |s, ki| d.v[((ki / d.dim_in) * da + s, ki % d.dim_in)])
    };
    let (xa, xb) = (flat(a), flat(b));
    // W X_a = X_b  ⇔  X_a† W† = X_b†
    let (sol, rank) = matkit::lstsq(&xa.adjoint(), &xb.adjoint());
    let w = sol.adjoint();
    let residual = w.matmul(&xa).approx_eq(&xb, tol.feas_tol);
    let unitary = w.adjoint().matmul(&w).approx_eq(&ComplexMatrix::identity(da), tol.feas_tol);
    if !residual || !unitary {
        return Err(Error::DilationNotMinimal {
            rank,
            needed: da,
        });
    }
    Ok(w)
}

/// Ancilla effects of two operations extracted from a witness.
#[derive(Debug, Clone, PartialEq)]
pub struct AncillaReport {
    pub ancilla_dim: usize,
    pub first: Effect,
    pub second: Effect,
    pub commute: bool,
    /// Coexistence of the two ancilla effects; checked for compatible witnesses only.
    pub coexistent: Option<Outcome>,
}

fn subset_labels(loc: &PartLocation) -> Result<Vec<&str>> {
    match loc {
        PartLocation::Subset(s) => Ok(s.iter().map(String::as_str).collect()),
        PartLocation::Pointer(_) => Err(Error::MissingWitness),
    }
}

/// Reads a compatibility or weak-compatibility witness for two operations on the ancilla.
///
/// Compatible witness: effects for both operations from one dilation of the witness
/// instrument's total channel, which must themselves be coexistent. Weak witness:
/// effects from the common upper channel, reported without a coexistence demand.
pub fn verify_ancilla_characterization(
    f1: &CPMap,
    f2: &CPMap,
    verdict: &Verdict,
    opts: &DecideOptions,
) -> Result<AncillaReport> {
    let tol = &opts.tol;
    let (lam, op1, op2, check) = match verdict.witness.as_ref().ok_or(Error::MissingWitness)? {
        Witness::Common {
            instrument,
            first,
            second,
            ..
        } => (
            instrument.total_channel(tol),
            instrument.part_op(&subset_labels(first)?, tol)?,
            instrument.part_op(&subset_labels(second)?, tol)?,
            true,
        ),
        Witness::Weak { channel, .. } => (channel.clone(), f1.clone(), f2.clone(), false),
    };
    let dil = minimal_stinespring(&lam, tol);
    let e = radon_nikodym_effect(&dil, &op1, tol)?;
    let f = radon_nikodym_effect(&dil, &op2, tol)?;
    let commute = order_commute(e.matrix(), f.matrix(), tol);
    let coexistent = if check {
        Some(coexistent_effects(&e, &f, opts)?.outcome)
    } else {
        None
    };
    Ok(AncillaReport {
        ancilla_dim: dil.ancilla_dim,
        first: e,
        second: f,
        commute,
        coexistent,
    })
}

fn order_commute(a: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> bool {
    a.commutator(b).frob_norm() <= tol.eq_tol.max(1e-9) * (1.0 + a.frob_norm() * b.frob_norm())
}
