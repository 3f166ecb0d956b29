//! CP order, purity, the rank-1 channel family, trivial-device detectors and
//! commutation tests.

use crate::devices::{validate_state, CPMap, Effect};
use crate::error::{Error, Result};
use crate::matkit::{
    self, herm_eig_unchecked, hermitian_basis, kron, ComplexMatrix, Tolerances, ONE, ZERO,
};

/// `a ≤ b`: `b − a` is completely positive (and trace non-increasing).
pub fn cp_leq(a: &CPMap, b: &CPMap, tol: &Tolerances) -> Result<bool> {
    a.same_dims(b)?;
    let diff = b.choi() - a.choi();
    if matkit::min_eigenvalue(&diff) < -tol.psd_tol {
        return Ok(false);
    }
    let unit = b.unit_effect_matrix() - a.unit_effect_matrix();
    Ok(matkit::max_eigenvalue(&unit) <= 1.0 + tol.psd_tol)
}

/// `a ≤ b` or `b ≤ a`.
pub fn comparable(a: &CPMap, b: &CPMap, tol: &Tolerances) -> Result<bool> {
    Ok(cp_leq(a, b, tol)? || cp_leq(b, a, tol)?)
}

/// Number of Choi eigenvalues above `psd_tol · tr J`.
pub fn choi_rank(m: &CPMap, tol: &Tolerances) -> usize {
    let tr = m.choi().trace().re;
    if tr <= 0.0 {
        return 0;
    }
    matkit::rank_above(m.choi(), tol.psd_tol * tr)
}

/// Exactly one Kraus operator.
pub fn is_pure(m: &CPMap, tol: &Tolerances) -> bool {
    choi_rank(m, tol) == 1
}

/// Whether `a + b` is still trace non-increasing.
pub fn sum_is_operation(a: &CPMap, b: &CPMap, tol: &Tolerances) -> Result<bool> {
    a.same_dims(b)?;
    let unit = a.unit_effect_matrix() + b.unit_effect_matrix();
    Ok(matkit::max_eigenvalue(&unit) <= 1.0 + tol.psd_tol)
}

/// Two pure operations are compatible iff comparable or their sum is an operation.
pub fn pure_pair_compatible(a: &CPMap, b: &CPMap, tol: &Tolerances) -> Result<bool> {
    for m in [a, b] {
        let rank = choi_rank(m, tol);
        if rank != 1 {
            return Err(Error::NotPure { rank });
        }
    }
    Ok(comparable(a, b, tol)? || sum_is_operation(a, b, tol)?)
}

/// `(f, u)` with `I − Φᴴ(I) = f·u u†`; `f = 0` for channels.
fn rank1_deficiency(m: &CPMap, tol: &Tolerances) -> Result<(f64, ComplexMatrix)> {
    let def = m.deficiency();
    let e = herm_eig_unchecked(&def);
    let rank = e.values.iter().filter(|&&v| v > tol.psd_tol).count();
    if rank > 1 {
        return Err(Error::RankCondition { rank });
    }
    let top = e.values.len() - 1;
    if rank == 0 {
        return Ok((0.0, ComplexMatrix::zeros(def.rows(), 1)));
    }
    Ok((e.values[top], e.vector(top)))
}

/// Whether `I − Φᴴ(I)` has rank at most one.
pub fn has_rank1_deficiency(m: &CPMap, tol: &Tolerances) -> bool {
    rank1_deficiency(m, tol).is_ok()
}

/// `Λˢ(ρ) = Φˢ(ρ) + tr[ρ(I − Φᴴ(I))] ξ`, the channel above `Φ` with completion state `ξ`.
pub fn rank1_channel_family(phi: &CPMap, xi: &ComplexMatrix, tol: &Tolerances) -> Result<CPMap> {
    rank1_deficiency(phi, tol)?;
    validate_state(xi, Some(phi.dim_out()), tol)?;
    let choi = phi.choi() + &kron(&phi.deficiency().transpose(), xi);
    CPMap::channel_from_choi(phi.dim_in(), phi.dim_out(), choi, tol)
}

/// Answer of [`rank1_upper_channels_equal`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rank1Upper {
    /// The families meet in this channel (completion states `xi1`, `xi2`).
    Common {
        channel: CPMap,
        xi1: ComplexMatrix,
        xi2: ComplexMatrix,
    },
    /// For this pure input no member of family 1 agrees with any member of family 2.
    SeparatingInput { state: ComplexMatrix },
    /// No common channel, but no single separating input among the candidates tried.
    Inconsistent { residual: f64 },
}

impl Rank1Upper {
    pub fn is_common(&self) -> bool {
        matches!(self, Rank1Upper::Common { .. })
    }
}

fn contract_input(j: &ComplexMatrix, v: &ComplexMatrix, di: usize, dk: usize) -> ComplexMatrix {
    // Output of ρ = |v⟩⟨v| under the map with Choi matrix J.
    let mut out = ComplexMatrix::zeros(dk, dk);
    for i in 0..di {
        for jj in 0..di {
            let w = v[(i, 0)] * v[(jj, 0)].conj();
            if w == ZERO {
                continue;
            }
            for k in 0..dk {
                for l in 0..dk {
                    out[(k, l)] += w * j[(i * dk + k, jj * dk + l)];
                }
            }
        }
    }
    out
}

/// Decides whether the channel families above two rank-1-deficient operations intersect.
///
/// Works directly with the two completion states: for inputs orthogonal to one
/// deficiency direction the other state is pinned down, and the full Choi
/// equation is then checked. When the families miss each other a pure input
/// state separating them is searched for.
pub fn rank1_upper_channels_equal(phi1: &CPMap, phi2: &CPMap, tol: &Tolerances) -> Result<Rank1Upper> {
    phi1.same_dims(phi2)?;
    let (di, dk) = phi1.dims();
    let (f1, u1) = rank1_deficiency(phi1, tol)?;
    let (f2, u2) = rank1_deficiency(phi2, tol)?;
    let mixed = crate::devices::maximally_mixed(dk);

    let candidate = solve_completion_states(phi1, phi2, (f1, &u1), (f2, &u2), tol);
    if let Some((xi1, xi2)) = candidate {
        let l1 = phi1.choi() + &kron(&phi1.deficiency().transpose(), &xi1);
        let l2 = phi2.choi() + &kron(&phi2.deficiency().transpose(), &xi2);
        if l1.approx_eq(&l2, tol.eq_tol.max(tol.psd_tol) * 10.0) {
            let channel = CPMap::channel_from_choi(di, dk, l1.hermitian_part(), tol)?;
            return Ok(Rank1Upper::Common { channel, xi1, xi2 });
        }
    }

    let residual = {
        let l1 = phi1.choi() + &kron(&phi1.deficiency().transpose(), &mixed);
        let l2 = phi2.choi() + &kron(&phi2.deficiency().transpose(), &mixed);
        (&l1 - &l2).frob_norm()
    };
    for v in candidate_inputs(di, &u1, &u2) {
        if separates(phi1, phi2, (f1, &u1), (f2, &u2), &v, tol) {
            return Ok(Rank1Upper::SeparatingInput {
                state: ComplexMatrix::outer(&v, &v),
            });
        }
    }
    Ok(Rank1Upper::Inconsistent { residual })
}

fn state_or_none(m: ComplexMatrix, tol: &Tolerances) -> Option<ComplexMatrix> {
    let m = m.hermitian_part();
    let tr = m.trace().re;
    if (tr - 1.0).abs() > 1e3 * tol.eq_tol.max(tol.psd_tol) {
        return None;
    }
    (matkit::min_eigenvalue(&m) >= -tol.psd_tol).then_some(m)
}

fn orth_unit(v: &ComplexMatrix, against: &ComplexMatrix) -> Option<ComplexMatrix> {
    let proj = against.dot(v);
    let w = v - &against.scale(proj);
    let n = w.frob_norm();
    (n > 1e-6).then(|| w.scale_real(1.0 / n))
}

fn solve_completion_states(
    phi1: &CPMap,
    phi2: &CPMap,
    (f1, u1): (f64, &ComplexMatrix),
    (f2, u2): (f64, &ComplexMatrix),
    tol: &Tolerances,
) -> Option<(ComplexMatrix, ComplexMatrix)> {
    let (di, dk) = phi1.dims();
    let mixed = crate::devices::maximally_mixed(dk);
    // Output difference Φ₂(ρ) − Φ₁(ρ) for ρ = |v⟩⟨v|.
    let delta = |v: &ComplexMatrix| {
        contract_input(phi2.choi(), v, di, dk) - contract_input(phi1.choi(), v, di, dk)
    };
    match (f1 > 0.0, f2 > 0.0) {
        (false, false) => Some((mixed.clone(), mixed)),
        (true, false) => state_or_none(delta(u1).scale_real(1.0 / f1), tol).map(|x| (x, mixed)),
        (false, true) => state_or_none(delta(u2).scale_real(-1.0 / f2), tol).map(|x| (mixed, x)),
        (true, true) => {
            let overlap = u1.dot(u2).norm();
            if overlap < 1.0 - 1e-9 {
                let v1 = orth_unit(u1, u2)?;
                let v2 = orth_unit(u2, u1)?;
                let a1 = f1 * u1.dot(&v1).norm_sqr();
                let a2 = f2 * u2.dot(&v2).norm_sqr();
                let xi1 = state_or_none(delta(&v1).scale_real(1.0 / a1), tol)?;
                let xi2 = state_or_none(delta(&v2).scale_real(-1.0 / a2), tol)?;
                Some((xi1, xi2))
            } else {
                // Same direction: f1 ξ1 − f2 ξ2 = Δ(u) with Δ = Δ₊ − Δ₋.
                let d = delta(u1).hermitian_part();
                let e = herm_eig_unchecked(&d);
                let neg = e.rebuild_with(|v| (-v).max(0.0));
                let pos = e.rebuild_with(|v| v.max(0.0));
                let slack = f2 - neg.trace().re;
                if slack < -tol.psd_tol {
                    return None;
                }
                let slack = slack.max(0.0);
                let xi2 = (&neg + &mixed.scale_real(slack)).scale_real(1.0 / f2);
                let xi1 = (&pos + &mixed.scale_real(slack)).scale_real(1.0 / f1);
                Some((state_or_none(xi1, tol)?, state_or_none(xi2, tol)?))
            }
        }
    }
}

fn candidate_inputs(di: usize, u1: &ComplexMatrix, u2: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let mut out = Vec::new();
    let mut push = |v: ComplexMatrix| {
        let n = v.frob_norm();
        if n > 1e-9 {
            out.push(v.scale_real(1.0 / n));
        }
    };
    for u in [u1, u2] {
        if u.frob_norm() > 0.5 {
            push(u.clone());
        }
    }
    for (a, b) in [(u1, u2), (u2, u1)] {
        if b.frob_norm() > 0.5 {
            if let Some(v) = orth_unit(a, b) {
                push(v);
            }
            for k in 0..di {
                if let Some(v) = orth_unit(&ComplexMatrix::basis_vector(di, k), b) {
                    push(v);
                }
            }
        }
    }
    for k in 0..di {
        push(ComplexMatrix::basis_vector(di, k));
        for l in k + 1..di {
            for phase in [ONE, -ONE, matkit::I, -matkit::I] {
                let mut v = ComplexMatrix::basis_vector(di, k);
                v[(l, 0)] = phase;
                push(v);
            }
        }
    }
    out
}

/// Whether `{Φ₁(ρ) + a₁ξ}` and `{Φ₂(ρ) + a₂ξ}` are disjoint over states ξ, for ρ = |v⟩⟨v|.
fn separates(
    phi1: &CPMap,
    phi2: &CPMap,
    (f1, u1): (f64, &ComplexMatrix),
    (f2, u2): (f64, &ComplexMatrix),
    v: &ComplexMatrix,
    tol: &Tolerances,
) -> bool {
    let (di, dk) = phi1.dims();
    let gate = 1e3 * tol.psd_tol.max(tol.eq_tol);
    let a1 = if f1 > 0.0 { f1 * u1.dot(v).norm_sqr() } else { 0.0 };
    let a2 = if f2 > 0.0 { f2 * u2.dot(v).norm_sqr() } else { 0.0 };
    let d = (contract_input(phi2.choi(), v, di, dk) - contract_input(phi1.choi(), v, di, dk)).hermitian_part();
    // Need a₁ξ₁ − a₂ξ₂ = Δ with states ξᵢ; possible iff tr Δ₋ ≤ a₂ and tr Δ₊ ≤ a₁.
    let e = herm_eig_unchecked(&d);
    let neg: f64 = e.values.iter().map(|&x| (-x).max(0.0)).sum();
    let pos: f64 = e.values.iter().map(|&x| x.max(0.0)).sum();
    neg > a2 + gate || pos > a1 + gate
}

/// `E = e·I` for some `0 ≤ e ≤ 1`.
pub fn is_trivial_effect(e: &Effect, tol: &Tolerances) -> bool {
    let d = e.dim();
    let s = e.matrix().trace().re / d as f64;
    e.matrix()
        .approx_eq(&ComplexMatrix::identity(d).scale_real(s), tol.eq_tol)
}

/// Choi matrix is zero.
pub fn is_null_operation(m: &CPMap, tol: &Tolerances) -> bool {
    m.choi().frob_norm() <= tol.eq_tol
}

/// Recovers `η` when `Λ(ρ) = tr(ρ)·η`.
pub fn is_contraction_channel(m: &CPMap, tol: &Tolerances) -> Option<ComplexMatrix> {
    if !m.is_channel() {
        return None;
    }
    let eta = m
        .apply_s(&crate::devices::maximally_mixed(m.dim_in()))
        .ok()?
        .hermitian_part();
    let expect = kron(&ComplexMatrix::identity(m.dim_in()), &eta);
    m.choi().approx_eq(&expect, tol.eq_tol).then_some(eta)
}

fn commute_tol(a: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> bool {
    a.commutator(b).frob_norm() <= tol.eq_tol * (1.0 + a.frob_norm() * b.frob_norm())
}

/// `[A, B] = 0` within tolerance.
pub fn effects_commute(a: &Effect, b: &Effect, tol: &Tolerances) -> bool {
    commute_tol(a.matrix(), b.matrix(), tol)
}

/// `[Φᴴ(T), E] = 0` for all `T`, checked on a Hermitian basis of the output space.
pub fn commutes_with_range(m: &CPMap, e: &Effect, tol: &Tolerances) -> Result<bool> {
    if e.dim() != m.dim_in() {
        return Err(Error::DimensionMismatch {
            context: "commutation test",
            expected: m.dim_in(),
            found: e.dim(),
        });
    }
    for t in hermitian_basis(m.dim_out()) {
        if !commute_tol(&m.apply_h(&t)?, e.matrix(), tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sum of two effects stays below the identity.
pub fn effects_sum_below_identity(a: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> bool {
    matkit::max_eigenvalue(&(a + b)) <= 1.0 + tol.psd_tol
}
