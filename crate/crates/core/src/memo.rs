//! Measurement models `(V₁, V₂, η, U, F)`: a probe state `η` on `V₁`, a coupling
//! unitary `U: H ⊗ V₁ → K ⊗ V₂` and a pointer observable `F` read on `V₂`.
//!
//! Index conventions: `H ⊗ V₁` is `i·dV₁ + v`, `K ⊗ V₂` is `k·dV₂ + w`.

use crate::devices::{
    is_part_of, validate_state, CPMap, Device, Instrument, Observable, PointerMap,
};
use crate::dilation::{minimal_stinespring, rn_observable, StinespringDilation};
use crate::error::{Error, Result};
use crate::matkit::{self, kron, partial_trace, ComplexMatrix, Slot, Tolerances, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    dim_in: usize,
    dim_out: usize,
    dim_v1: usize,
    dim_v2: usize,
    eta: ComplexMatrix,
    u: ComplexMatrix,
    pointer: Observable,
}

impl MeasurementModel {
    /// Validates dimensions, unitarity of `u`, the probe state and the pointer.
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        eta: ComplexMatrix,
        u: ComplexMatrix,
        pointer: Observable,
        tol: &Tolerances,
    ) -> Result<Self> {
        let dim_v1 = eta.side()?;
        validate_state(&eta, Some(dim_v1), tol)?;
        let dim_v2 = pointer.dim();
        let n = u.side()?;
        if n != dim_in * dim_v1 {
            return Err(Error::DimensionMismatch {
                context: "coupling unitary input side",
                expected: dim_in * dim_v1,
                found: n,
            });
        }
        if n != dim_out * dim_v2 {
            return Err(Error::DimensionMismatch {
                context: "coupling unitary output side",
                expected: dim_out * dim_v2,
                found: n,
            });
        }
        let id = ComplexMatrix::identity(n);
        if !u.adjoint().matmul(&u).approx_eq(&id, tol.eq_tol)
            || !u.matmul(&u.adjoint()).approx_eq(&id, tol.eq_tol)
        {
            return Err(Error::InvalidState("coupling matrix is not unitary".into()));
        }
        Ok(Self {
            dim_in,
            dim_out,
            dim_v1,
            dim_v2,
            eta,
            u,
            pointer,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_in, self.dim_out)
    }

    pub fn ancilla_dims(&self) -> (usize, usize) {
        (self.dim_v1, self.dim_v2)
    }

    pub fn eta(&self) -> &ComplexMatrix {
        &self.eta
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn pointer(&self) -> &Observable {
        &self.pointer
    }

    /// Same `(η, U)` with another pointer observable on `V₂`.
    pub fn with_pointer(&self, pointer: Observable) -> Result<Self> {
        if pointer.dim() != self.dim_v2 {
            return Err(Error::DimensionMismatch {
                context: "pointer observable",
                expected: self.dim_v2,
                found: pointer.dim(),
            });
        }
        Ok(Self {
            pointer,
            ..self.clone()
        })
    }

    fn pointer_effect(&self, labels: &[&str]) -> Result<ComplexMatrix> {
        let mut f = ComplexMatrix::zeros(self.dim_v2, self.dim_v2);
        for l in labels {
            f += self.pointer.effect(l)?.matrix();
        }
        Ok(f)
    }

    /// `tr_{V₂}[U(X ⊗ η)U† (I_K ⊗ F)]` for any operator `X` on `H`.
    fn evolve(&self, x: &ComplexMatrix, f: &ComplexMatrix) -> ComplexMatrix {
        let joint = self.u.sandwich(&kron(x, &self.eta));
        let weighted = joint.matmul(&kron(&ComplexMatrix::identity(self.dim_out), f));
        partial_trace(&weighted, (self.dim_out, self.dim_v2), Slot::First).expect("square by construction")
    }
}

/// `ρ′_X = tr_{V₂}[U(ρ ⊗ η)U† (I ⊗ F(X))]`.
pub fn model_poststate(
    m: &MeasurementModel,
    rho: &ComplexMatrix,
    outcomes: &[&str],
    tol: &Tolerances,
) -> Result<ComplexMatrix> {
    validate_state(rho, Some(m.dim_in), tol)?;
    let f = m.pointer_effect(outcomes)?;
    Ok(m.evolve(rho, &f))
}

/// `p(X | ρ) = tr ρ′_X`.
pub fn model_probability(
    m: &MeasurementModel,
    rho: &ComplexMatrix,
    outcomes: &[&str],
    tol: &Tolerances,
) -> Result<f64> {
    Ok(model_poststate(m, rho, outcomes, tol)?.trace().re)
}

/// The instrument `y ↦ Iˢ(f⁻¹(y), ·)` realized by the model.
pub fn model_instrument(m: &MeasurementModel, f: &PointerMap, tol: &Tolerances) -> Result<Instrument> {
    let (dh, dk) = (m.dim_in, m.dim_out);
    let mut entries = Vec::with_capacity(f.codomain().len());
    for y in f.codomain() {
        let pre: Vec<&str> = f.preimage(y).collect();
        let fx = m.pointer_effect(&pre)?;
        let mut choi = ComplexMatrix::zeros(dh * dk, dh * dk);
        for i in 0..dh {
            for j in 0..dh {
                let img = m.evolve(&ComplexMatrix::unit(dh, i, j), &fx);
                for k in 0..dk {
                    for l in 0..dk {
                        choi[(i * dk + k, j * dk + l)] = img[(k, l)];
                    }
                }
            }
        }
        entries.push((y.clone(), CPMap::from_choi(dh, dk, choi.hermitian_part(), tol)?));
    }
    Instrument::new(entries, tol)
}

/// The total channel `ρ ↦ tr_{V₂}[U(ρ ⊗ η)U†]`; the pointer does not enter.
pub fn model_channel(m: &MeasurementModel, tol: &Tolerances) -> Result<CPMap> {
    let (dh, dk) = (m.dim_in, m.dim_out);
    let id = ComplexMatrix::identity(m.dim_v2);
    let mut choi = ComplexMatrix::zeros(dh * dk, dh * dk);
    for i in 0..dh {
        for j in 0..dh {
            let img = m.evolve(&ComplexMatrix::unit(dh, i, j), &id);
            for k in 0..dk {
                for l in 0..dk {
                    choi[(i * dk + k, j * dk + l)] = img[(k, l)];
                }
            }
        }
    }
    CPMap::channel_from_choi(dh, dk, choi.hermitian_part(), tol)
}

/// Instrument with the pointer outcomes as its own outcomes.
pub fn model_identity_instrument(m: &MeasurementModel, tol: &Tolerances) -> Result<Instrument> {
    model_instrument(m, &PointerMap::identity(m.pointer.outcomes()), tol)
}

/// Whether `device` is a part of the instrument the model realizes.
pub fn model_is_part_of(m: &MeasurementModel, device: &Device, tol: &Tolerances) -> Result<bool> {
    is_part_of(device, &model_identity_instrument(m, tol)?, tol)
}

/// Shared `(η, U)` built from a minimal dilation of a channel.
struct Frame {
    dil: StinespringDilation,
    eta: ComplexMatrix,
    u: ComplexMatrix,
}

impl Frame {
    /// `dV₁ = dK·dA`, `dV₂ = dH·dA`, `η = |e₀⟩⟨e₀|`, and `U(ψ ⊗ e₀) = (Vψ) ⊗ e₀`.
    fn new(total: &CPMap, tol: &Tolerances) -> Self {
        let dil = minimal_stinespring(total, tol);
        let (dh, dk, da) = (dil.dim_in, dil.dim_out, dil.ancilla_dim);
        let (dv1, dv2) = (dk * da, dh * da);
        let n = dh * dv1;
        let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
        let mut slots: Vec<Option<usize>> = vec![None; n];
        for i in 0..dh {
            let mut c = vec![C64::new(0.0, 0.0); n];
            for k in 0..dk {
                for a in 0..da {
                    // V2 = A ⊗ C^dH, row a·dH + 0
                    c[k * dv2 + a * dh] = dil.v[(k * da + a, i)];
                }
            }
            slots[i * dv1] = Some(cols.len());
            cols.push(c);
        }
        gram_schmidt(&mut cols);
        let prescribed = cols.len();
        for r in 0..n {
            if cols.len() == n {
                break;
            }
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[r] = C64::new(1.0, 0.0);
            if let Some(v) = orthogonalize(&cols, e) {
                cols.push(v);
            }
        }
        debug_assert_eq!(cols.len(), n);
        let mut next = prescribed;
        for s in slots.iter_mut() {
            if s.is_none() {
                *s = Some(next);
                next += 1;
            }
        }
        let u = ComplexMatrix::from_fn(n, n, |r, c| cols[slots[c].expect("filled")][r]);
        let eta = ComplexMatrix::unit(dv1, 0, 0);
        Self { dil, eta, u }
    }

    fn model(&self, ins: &Instrument, tol: &Tolerances) -> Result<MeasurementModel> {
        let dh = self.dil.dim_in;
        let e = rn_observable(&self.dil, ins, tol)?;
        let id = ComplexMatrix::identity(dh);
        let pointer = Observable::new(
            e.iter()
                .map(|(l, ex)| (l.to_string(), kron(ex.matrix(), &id)))
                .collect(),
            tol,
        )?;
        MeasurementModel::new(
            self.dil.dim_in,
            self.dil.dim_out,
            self.eta.clone(),
            self.u.clone(),
            pointer,
            tol,
        )
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn orthogonalize(basis: &[Vec<C64>], mut v: Vec<C64>) -> Option<Vec<C64>> {
    // Two passes keep the completion orthonormal to machine precision.
    for _ in 0..2 {
        for b in basis {
            let dot: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for (y, x) in v.iter_mut().zip(b) {
                *y -= dot * x;
            }
        }
    }
    let n = norm(&v);
    if n < 1e-6 {
        return None;
    }
    v.iter_mut().for_each(|z| *z /= n);
    Some(v)
}

fn gram_schmidt(cols: &mut Vec<Vec<C64>>) {
    let mut done: Vec<Vec<C64>> = Vec::with_capacity(cols.len());
    for c in cols.drain(..) {
        let v = orthogonalize(&done, c).expect("prescribed columns of an isometry are independent");
        done.push(v);
    }
    *cols = done;
}

fn check_reproduces(m: &MeasurementModel, ins: &Instrument, tol: &Tolerances) -> Result<()> {
    let realized = model_identity_instrument(m, tol)?;
    for (label, branch) in ins.iter() {
        let got = realized.branch(label)?;
        if !got.approx_eq(branch, tol.feas_tol) {
            return Err(Error::WitnessRejected(format!(
                "synthesized model misses branch `{label}` (deviation {:.3e})",
                matkit::rel_distance(branch.choi(), got.choi())
            )));
        }
    }
    Ok(())
}

/// A finite measurement model realizing `ins`.
pub fn synthesize_model(ins: &Instrument, tol: &Tolerances) -> Result<MeasurementModel> {
    let frame = Frame::new(&ins.total_channel(tol), tol);
    let m = frame.model(ins, tol)?;
    check_reproduces(&m, ins, tol)?;
    Ok(m)
}

/// Models for two instruments with a common total channel, sharing `(η, U)`.
pub fn shared_model_pair(
    i1: &Instrument,
    i2: &Instrument,
    tol: &Tolerances,
) -> Result<(MeasurementModel, MeasurementModel)> {
    let t1 = i1.total_channel(tol);
    let t2 = i2.total_channel(tol);
    t1.same_dims(&t2)?;
    if !t1.approx_eq(&t2, tol.eq_tol) {
        return Err(Error::TotalsDiffer {
            deviation: matkit::rel_distance(t1.choi(), t2.choi()),
        });
    }
    let frame = Frame::new(&t1, tol);
    let m1 = frame.model(i1, tol)?;
    let m2 = frame.model(i2, tol)?;
    check_reproduces(&m1, i1, tol)?;
    check_reproduces(&m2, i2, tol)?;
    Ok((m1, m2))
}

/// `U ψ ⊗ φ = φ ⊗ ψ` on `C^d ⊗ C^d`; the model measures the pointer on the input and outputs `η`.
pub fn swap_model(eta: &ComplexMatrix, pointer: &Observable, tol: &Tolerances) -> Result<MeasurementModel> {
    let d = eta.side()?;
    if pointer.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "swap model pointer",
            expected: d,
            found: pointer.dim(),
        });
    }
    let u = ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, v) = (c / d, c % d);
        if r == v * d + i {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    MeasurementModel::new(d, d, eta.clone(), u, pointer.clone(), tol)
}
