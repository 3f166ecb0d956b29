//! The five device types and the ways they relate to instruments.
//!
//! Operations are stored in canonical Choi form with the input slot first:
//!
//! ```text
//! J = Σ_ij |i⟩⟨j| ⊗ Φˢ(|i⟩⟨j|)        side dim_in · dim_out
//! ```
//!
//! so `Φˢ(ρ) = Tr_in[J (ρᵀ ⊗ I)]` and `Φᴴ(I) = (Tr_out J)ᵀ`. A Kraus operator
//! `K` (`dim_out × dim_in`) contributes `w w†` with `w[i·dim_out + k] = K[k, i]`.

use crate::error::{Error, Result};
use crate::matkit::{
    self, herm_eig_unchecked, kron, partial_trace, ComplexMatrix, Slot, Tolerances, C64, ONE,
    ZERO,
};

/// Largest outcome set searched exhaustively by the part-of tests.
pub const MAX_SEARCH_OUTCOMES: usize = 12;

fn check_square(m: &ComplexMatrix) -> Result<usize> {
    // Eigensolvers may not terminate on NaN, so reject it before any spectral work.
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    m.side()
}

/// Checks that `rho` is a density matrix of side `d` (when given).
pub fn validate_state(rho: &ComplexMatrix, d: Option<usize>, tol: &Tolerances) -> Result<()> {
    let side = rho.side()?;
    if let Some(d) = d {
        if side != d {
            return Err(Error::DimensionMismatch {
                context: "state",
                expected: d,
                found: side,
            });
        }
    }
    if !matkit::is_hermitian(rho, tol.eq_tol) {
        return Err(Error::InvalidState("not Hermitian".into()));
    }
    let min = matkit::min_eigenvalue(rho);
    if min < -tol.psd_tol {
        return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > tol.eq_tol * (1.0 + rho.frob_norm()) {
        return Err(Error::InvalidState(format!("trace {:.6} != 1", tr.re)));
    }
    Ok(())
}

fn validate_distribution(p: &[f64], tol: &Tolerances) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if p.iter().any(|&v| !v.is_finite() || v < -tol.psd_tol) {
        return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol.eq_tol * p.len() as f64 {
        return Err(Error::InvalidDistribution(format!("weights sum to {s}")));
    }
    Ok(())
}

fn check_labels(labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// `0 ≤ E ≤ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    matrix: ComplexMatrix,
}

impl Effect {
    pub fn new(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        check_square(&matrix)?;
        let dev = matkit::hermitian_deviation(&matrix);
        if dev > tol.eq_tol * (1.0 + matrix.max_abs()) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let e = herm_eig_unchecked(&matrix);
        if e.min() < -tol.psd_tol || e.max() > 1.0 + tol.psd_tol {
            return Err(Error::EffectOutOfRange {
                min: e.min(),
                max: e.max(),
            });
        }
        Ok(Self {
            matrix: matrix.hermitian_part(),
        })
    }

    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn zero(d: usize) -> Self {
        Self::new_unchecked(ComplexMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        Self::new_unchecked(ComplexMatrix::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// `I − E`.
    pub fn complement(&self) -> Self {
        Self::new_unchecked(&ComplexMatrix::identity(self.dim()) - &self.matrix)
    }

    /// The binary observable `{E, I − E}` on outcomes `"1"`, `"0"`.
    pub fn as_binary_observable(&self) -> Observable {
        Observable {
            outcomes: vec!["1".into(), "0".into()],
            effects: vec![self.clone(), self.complement()],
        }
    }

    /// Whether `E` is a projection within `tol`.
    pub fn is_projection(&self, tol: &Tolerances) -> bool {
        self.matrix
            .matmul(&self.matrix)
            .approx_eq(&self.matrix, tol.eq_tol.max(tol.psd_tol) * 10.0)
    }
}

/// A finite outcome-indexed family of effects summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    outcomes: Vec<String>,
    effects: Vec<Effect>,
}

impl Observable {
    pub fn new(entries: Vec<(String, ComplexMatrix)>, tol: &Tolerances) -> Result<Self> {
        let outcomes: Vec<String> = entries.iter().map(|(l, _)| l.clone()).collect();
        check_labels(&outcomes)?;
        let mut effects = Vec::with_capacity(entries.len());
        let d = entries[0].1.rows();
        for (_, m) in entries {
            if m.rows() != d || m.cols() != d {
                return Err(Error::DimensionMismatch {
                    context: "observable effect",
                    expected: d,
                    found: m.rows(),
                });
            }
            effects.push(Effect::new(m, tol)?);
        }
        let obs = Self { outcomes, effects };
        let total = obs.sum_all();
        let id = ComplexMatrix::identity(d);
        if !id.approx_eq(&total, tol.eq_tol) {
            return Err(Error::ObservableNotNormalized {
                deviation: (&total - &id).frob_norm(),
            });
        }
        Ok(obs)
    }

    pub(crate) fn new_unchecked(outcomes: Vec<String>, effects: Vec<Effect>) -> Self {
        Self { outcomes, effects }
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Effect)> {
        self.outcomes.iter().map(String::as_str).zip(&self.effects)
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn effect(&self, label: &str) -> Result<&Effect> {
        Ok(&self.effects[self.index_of(label)?])
    }

    /// `A(X) = Σ_{x∈X} A(x)`.
    pub fn effect_of_set(&self, labels: &[&str]) -> Result<Effect> {
        let mut acc = ComplexMatrix::zeros(self.dim(), self.dim());
        for l in labels {
            acc += self.effect(l)?.matrix();
        }
        Ok(Effect::new_unchecked(acc))
    }

    fn sum_all(&self) -> ComplexMatrix {
        let d = self.dim();
        self.effects
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, e| &acc + e.matrix())
    }
}

/// Operation or channel flag carried by a [`CPMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Operation,
    Channel,
}

/// Completely positive, trace non-increasing map in canonical Choi form.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    dim_in: usize,
    dim_out: usize,
    choi: ComplexMatrix,
    kind: MapKind,
}

impl CPMap {
    /// Validates a Choi matrix; the kind is `Channel` iff it is trace preserving within `eq_tol`.
    pub fn from_choi(
        dim_in: usize,
        dim_out: usize,
        choi: ComplexMatrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        let side = check_square(&choi)?;
        if side != dim_in * dim_out {
            return Err(Error::DimensionMismatch {
                context: "Choi matrix",
                expected: dim_in * dim_out,
                found: side,
            });
        }
        let dev = matkit::hermitian_deviation(&choi);
        if dev > tol.eq_tol * (1.0 + choi.max_abs()) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let choi = choi.hermitian_part();
        let min = matkit::min_eigenvalue(&choi);
        if min < -tol.psd_tol {
            return Err(Error::NotCompletelyPositive {
                min_eigenvalue: min,
            });
        }
        let mut m = Self {
            dim_in,
            dim_out,
            choi,
            kind: MapKind::Operation,
        };
        let unit = m.unit_effect_matrix();
        let max = matkit::max_eigenvalue(&unit);
        if max > 1.0 + tol.psd_tol {
            return Err(Error::TraceIncreasing { max_eigenvalue: max });
        }
        if unit.approx_eq(&ComplexMatrix::identity(dim_in), tol.eq_tol) {
            m.kind = MapKind::Channel;
        }
        Ok(m)
    }

    /// Like [`CPMap::from_choi`] but insists on trace preservation.
    pub fn channel_from_choi(
        dim_in: usize,
        dim_out: usize,
        choi: ComplexMatrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        let m = Self::from_choi(dim_in, dim_out, choi, tol)?;
        m.require_channel(tol)?;
        Ok(m)
    }

    pub(crate) fn require_channel(&self, tol: &Tolerances) -> Result<()> {
        if self.kind != MapKind::Channel {
            let dev = (&self.unit_effect_matrix() - &ComplexMatrix::identity(self.dim_in))
                .frob_norm();
            let _ = tol;
            return Err(Error::NotTracePreserving { deviation: dev });
        }
        Ok(())
    }

    /// Wraps a Choi matrix without validation; the kind is recomputed.
    pub(crate) fn from_choi_unchecked(
        dim_in: usize,
        dim_out: usize,
        choi: ComplexMatrix,
        tol: &Tolerances,
    ) -> Self {
        let mut m = Self {
            dim_in,
            dim_out,
            choi,
            kind: MapKind::Operation,
        };
        if m
            .unit_effect_matrix()
            .approx_eq(&ComplexMatrix::identity(dim_in), tol.eq_tol)
        {
            m.kind = MapKind::Channel;
        }
        m
    }

    /// The null operation `ρ ↦ 0`.
    pub fn null(dim_in: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_out,
            choi: ComplexMatrix::zeros(dim_in * dim_out, dim_in * dim_out),
            kind: MapKind::Operation,
        }
    }

    pub fn identity(d: usize) -> Self {
        let k = KrausSet {
            ops: vec![ComplexMatrix::identity(d)],
        };
        choi_from_kraus_unchecked(&k, d, d, &Tolerances::default())
    }

    /// `ρ ↦ tr(ρ F) σ`; Choi matrix `Fᵀ ⊗ σ`.
    pub fn measure_prepare(f: &ComplexMatrix, sigma: &ComplexMatrix, tol: &Tolerances) -> Self {
        let choi = kron(&f.transpose(), sigma);
        Self::from_choi_unchecked(f.rows(), sigma.rows(), choi, tol)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_in, self.dim_out)
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn is_channel(&self) -> bool {
        self.kind == MapKind::Channel
    }

    /// Schrödinger picture `Φˢ(ρ)`.
    pub fn apply_s(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_input(rho)?;
        let (di, dk) = (self.dim_in, self.dim_out);
        let mut out = ComplexMatrix::zeros(dk, dk);
        for i in 0..di {
            for j in 0..di {
                let r = rho[(i, j)];
                if r == ZERO {
                    continue;
                }
                for k in 0..dk {
                    for l in 0..dk {
                        out[(k, l)] += r * self.choi[(i * dk + k, j * dk + l)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Heisenberg picture `Φᴴ(T)`, the dual of [`CPMap::apply_s`] under `tr[Φˢ(ρ) T] = tr[ρ Φᴴ(T)]`.
    pub fn apply_h(&self, t: &ComplexMatrix) -> Result<ComplexMatrix> {
        let side = t.side()?;
        if side != self.dim_out {
            return Err(Error::DimensionMismatch {
                context: "Heisenberg argument",
                expected: self.dim_out,
                found: side,
            });
        }
        Ok(self.apply_h_unchecked(t))
    }

    fn apply_h_unchecked(&self, t: &ComplexMatrix) -> ComplexMatrix {
        let (di, dk) = (self.dim_in, self.dim_out);
        let mut out = ComplexMatrix::zeros(di, di);
        for i in 0..di {
            for j in 0..di {
                let mut acc = ZERO;
                for k in 0..dk {
                    for l in 0..dk {
                        acc += self.choi[(i * dk + k, j * dk + l)] * t[(l, k)];
                    }
                }
                out[(j, i)] = acc;
            }
        }
        out
    }

    fn check_input(&self, rho: &ComplexMatrix) -> Result<()> {
        let side = rho.side()?;
        if side != self.dim_in {
            return Err(Error::DimensionMismatch {
                context: "Schrödinger argument",
                expected: self.dim_in,
                found: side,
            });
        }
        Ok(())
    }

    /// `Φᴴ(I)` as a raw matrix.
    pub fn unit_effect_matrix(&self) -> ComplexMatrix {
        partial_trace(&self.choi, (self.dim_in, self.dim_out), Slot::First)
            .expect("Choi side is dim_in * dim_out")
            .transpose()
    }

    /// The effect `Φᴴ(I)`.
    pub fn unit_effect(&self) -> Effect {
        Effect::new_unchecked(self.unit_effect_matrix().hermitian_part())
    }

    /// `I − Φᴴ(I)`.
    pub fn deficiency(&self) -> ComplexMatrix {
        &ComplexMatrix::identity(self.dim_in) - &self.unit_effect_matrix()
    }

    pub fn same_dims(&self, other: &CPMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                context: "map pair",
                expected: self.dim_in * self.dim_out,
                found: other.dim_in * other.dim_out,
            });
        }
        Ok(())
    }

    /// Choi-level sum, not validated.
    pub fn plus(&self, other: &CPMap, tol: &Tolerances) -> Result<CPMap> {
        self.same_dims(other)?;
        Ok(Self::from_choi_unchecked(
            self.dim_in,
            self.dim_out,
            &self.choi + &other.choi,
            tol,
        ))
    }

    /// Choi-level difference, not validated.
    pub fn minus(&self, other: &CPMap, tol: &Tolerances) -> Result<CPMap> {
        self.same_dims(other)?;
        Ok(Self::from_choi_unchecked(
            self.dim_in,
            self.dim_out,
            &self.choi - &other.choi,
            tol,
        ))
    }

    pub fn scaled(&self, s: f64, tol: &Tolerances) -> CPMap {
        Self::from_choi_unchecked(self.dim_in, self.dim_out, self.choi.scale_real(s), tol)
    }

    /// Whether two maps agree within `tol` (Frobenius-relative on Choi matrices).
    pub fn approx_eq(&self, other: &CPMap, tol: f64) -> bool {
        self.dims() == other.dims() && self.choi.approx_eq(&other.choi, tol)
    }

    /// Composition `other ∘ self` (first `self`, then `other`).
    pub fn then(&self, other: &CPMap, tol: &Tolerances) -> Result<CPMap> {
        if self.dim_out != other.dim_in {
            return Err(Error::DimensionMismatch {
                context: "composition",
                expected: self.dim_out,
                found: other.dim_in,
            });
        }
        let (di, dk) = (self.dim_in, other.dim_out);
        let mut choi = ComplexMatrix::zeros(di * dk, di * dk);
        for i in 0..di {
            for j in 0..di {
                let eij = ComplexMatrix::unit(di, i, j);
                let img = other.apply_s(&self.apply_s(&eij)?)?;
                img.write_block(&mut choi, i * dk, j * dk);
            }
        }
        Ok(Self::from_choi_unchecked(di, dk, choi, tol))
    }
}

/// Kraus operators `K_j` (`dim_out × dim_in`) with `Σ K_j† K_j ≤ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    ops: Vec<ComplexMatrix>,
}

impl KrausSet {
    pub fn new(ops: Vec<ComplexMatrix>, tol: &Tolerances) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyOutcomes)?;
        let shape = first.shape();
        for k in &ops {
            if !k.is_finite() {
                return Err(Error::NonFinite);
            }
            if k.shape() != shape {
                return Err(Error::DimensionMismatch {
                    context: "Kraus operator",
                    expected: shape.0 * shape.1,
                    found: k.rows() * k.cols(),
                });
            }
        }
        let set = Self { ops };
        let max = matkit::max_eigenvalue(&set.normalization());
        if max > 1.0 + tol.psd_tol {
            return Err(Error::KrausNormalization { max_eigenvalue: max });
        }
        Ok(set)
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `Σ K_j† K_j`.
    pub fn normalization(&self) -> ComplexMatrix {
        let d = self.ops.first().map_or(0, |k| k.cols());
        self.ops
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| &acc + &k.adjoint().matmul(k))
    }

    /// Pads with zero operators up to `n` elements.
    pub fn padded(&self, n: usize) -> Self {
        let mut ops = self.ops.clone();
        if let Some(k) = self.ops.first() {
            while ops.len() < n {
                ops.push(ComplexMatrix::zeros(k.rows(), k.cols()));
            }
        }
        Self { ops }
    }
}

fn choi_from_kraus_unchecked(k: &KrausSet, dim_in: usize, dim_out: usize, tol: &Tolerances) -> CPMap {
    let n = dim_in * dim_out;
    let mut choi = ComplexMatrix::zeros(n, n);
    for op in &k.ops {
        let w: Vec<C64> = (0..n).map(|idx| op[(idx % dim_out, idx / dim_out)]).collect();
        for r in 0..n {
            if w[r] == ZERO {
                continue;
            }
            for c in 0..n {
                choi[(r, c)] += w[r] * w[c].conj();
            }
        }
    }
    CPMap::from_choi_unchecked(dim_in, dim_out, choi, tol)
}

/// Canonical Choi matrix of `ρ ↦ Σ K_j ρ K_j†`.
pub fn choi_from_kraus(k: &KrausSet, tol: &Tolerances) -> Result<CPMap> {
    let (dim_out, dim_in) = k.ops.first().ok_or(Error::EmptyOutcomes)?.shape();
    let m = choi_from_kraus_unchecked(k, dim_in, dim_out, tol);
    CPMap::from_choi(dim_in, dim_out, m.choi, tol)
}

/// Kraus operators from the eigendecomposition of the Choi matrix.
///
/// Eigenvalues at or below `psd_tol` are dropped; the null operation yields a
/// single zero operator.
pub fn kraus_from_choi(m: &CPMap, tol: &Tolerances) -> KrausSet {
    let (di, dk) = m.dims();
    let e = herm_eig_unchecked(m.choi());
    let mut ops = Vec::new();
    for (idx, &lambda) in e.values.iter().enumerate().rev() {
        if lambda <= tol.psd_tol {
            continue;
        }
        let s = lambda.sqrt();
        ops.push(ComplexMatrix::from_fn(dk, di, |k, i| {
            e.vectors[(i * dk + k, idx)] * s
        }));
    }
    if ops.is_empty() {
        ops.push(ComplexMatrix::zeros(dk, di));
    }
    KrausSet { ops }
}

/// Decomposition `T = Σ cᵢ Eᵢ` of any square matrix into four effects.
///
/// `T = T_R + i T_I` with Hermitian parts; each Hermitian `S` splits as
/// `S₊ − S₋` with `S± = (‖S‖I ± S)/2`; each positive part is `‖P‖ (P/‖P‖)`.
/// Zero parts get a zero effect and a zero coefficient.
pub fn four_effect_decomposition(t: &ComplexMatrix) -> Result<([C64; 4], [Effect; 4])> {
    let d = t.side()?;
    let id = ComplexMatrix::identity(d);
    let real = t.hermitian_part();
    let imag = ComplexMatrix::from_fn(d, d, |r, c| (t[(r, c)] - t[(c, r)].conj()) * C64::new(0.0, -0.5));

    let split = |s: &ComplexMatrix| -> (ComplexMatrix, ComplexMatrix) {
        let n = matkit::herm_op_norm(s);
        let sn = id.scale_real(n);
        ((&sn + s).scale_real(0.5), (&sn - s).scale_real(0.5))
    };
    let normalize = |p: ComplexMatrix| -> (f64, Effect) {
        let n = matkit::herm_op_norm(&p);
        if n == 0.0 {
            (0.0, Effect::zero(d))
        } else {
            (n, Effect::new_unchecked(p.scale_real(1.0 / n).hermitian_part()))
        }
    };
    let (rp, rm) = split(&real);
    let (ip, im) = split(&imag);
    let (c0, e0) = normalize(rp);
    let (c1, e1) = normalize(rm);
    let (c2, e2) = normalize(ip);
    let (c3, e3) = normalize(im);
    Ok((
        [
            C64::new(c0, 0.0),
            C64::new(-c1, 0.0),
            C64::new(0.0, c2),
            C64::new(0.0, -c3),
        ],
        [e0, e1, e2, e3],
    ))
}

/// Outcome-labelled family of operations summing to a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    outcomes: Vec<String>,
    branches: Vec<CPMap>,
}

impl Instrument {
    pub fn new(entries: Vec<(String, CPMap)>, tol: &Tolerances) -> Result<Self> {
        let outcomes: Vec<String> = entries.iter().map(|(l, _)| l.clone()).collect();
        check_labels(&outcomes)?;
        let dims = entries[0].1.dims();
        for (_, b) in &entries {
            if b.dims() != dims {
                return Err(Error::DimensionMismatch {
                    context: "instrument branch",
                    expected: dims.0 * dims.1,
                    found: b.dim_in() * b.dim_out(),
                });
            }
        }
        let ins = Self {
            outcomes,
            branches: entries.into_iter().map(|(_, b)| b).collect(),
        };
        let total = ins.total_choi();
        let unit = CPMap::from_choi_unchecked(dims.0, dims.1, total, tol).unit_effect_matrix();
        let id = ComplexMatrix::identity(dims.0);
        if !id.approx_eq(&unit, tol.eq_tol) {
            return Err(Error::InstrumentNotChannel {
                deviation: (&unit - &id).frob_norm(),
            });
        }
        Ok(ins)
    }

    pub(crate) fn new_unchecked(outcomes: Vec<String>, branches: Vec<CPMap>) -> Self {
        Self { outcomes, branches }
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn branches(&self) -> &[CPMap] {
        &self.branches
    }

    pub fn dims(&self) -> (usize, usize) {
        self.branches[0].dims()
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CPMap)> {
        self.outcomes.iter().map(String::as_str).zip(&self.branches)
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn branch(&self, label: &str) -> Result<&CPMap> {
        Ok(&self.branches[self.index_of(label)?])
    }

    fn total_choi(&self) -> ComplexMatrix {
        let n = self.branches[0].choi().rows();
        self.branches
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, b| &acc + b.choi())
    }

    fn choi_of_indices(&self, idx: impl IntoIterator<Item = usize>) -> ComplexMatrix {
        let n = self.branches[0].choi().rows();
        idx.into_iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, i| &acc + self.branches[i].choi())
    }

    /// `I(X, ·)`.
    pub fn part_op(&self, labels: &[&str], tol: &Tolerances) -> Result<CPMap> {
        let idx = labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        let (di, dk) = self.dims();
        Ok(CPMap::from_choi_unchecked(di, dk, self.choi_of_indices(idx), tol))
    }

    /// `Iᴴ(X, I)`.
    pub fn part_effect(&self, labels: &[&str], tol: &Tolerances) -> Result<Effect> {
        Ok(self.part_op(labels, tol)?.unit_effect())
    }

    /// `x ↦ Iᴴ(x, I)`.
    pub fn induced_observable(&self) -> Observable {
        Observable::new_unchecked(
            self.outcomes.clone(),
            self.branches.iter().map(CPMap::unit_effect).collect(),
        )
    }

    /// `I(Ω, ·)`, always a channel.
    pub fn total_channel(&self, tol: &Tolerances) -> CPMap {
        let (di, dk) = self.dims();
        let mut m = CPMap::from_choi_unchecked(di, dk, self.total_choi(), tol);
        m.kind = MapKind::Channel;
        m
    }

    /// `I′(y, ·) = I(f⁻¹(y), ·)` over the codomain of `f`.
    pub fn relabel(&self, f: &PointerMap, tol: &Tolerances) -> Result<Instrument> {
        f.check_domain(&self.outcomes)?;
        let (di, dk) = self.dims();
        let branches = f
            .codomain
            .iter()
            .map(|y| {
                let idx = self
                    .outcomes
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| f.image(x) == Some(y.as_str()))
                    .map(|(i, _)| i);
                CPMap::from_choi_unchecked(di, dk, self.choi_of_indices(idx), tol)
            })
            .collect();
        Ok(Instrument::new_unchecked(f.codomain.clone(), branches))
    }
}

/// A total function `Ω → Ω′` with an ordered codomain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointerMap {
    codomain: Vec<String>,
    pairs: Vec<(String, String)>,
}

impl PointerMap {
    pub fn new(pairs: Vec<(String, String)>, codomain: Vec<String>) -> Result<Self> {
        check_labels(&codomain)?;
        for (i, (x, y)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(p, _)| p == x) {
                return Err(Error::DuplicateLabel(x.clone()));
            }
            if !codomain.contains(y) {
                return Err(Error::UnknownLabel(y.clone()));
            }
        }
        Ok(Self { codomain, pairs })
    }

    pub fn identity(labels: &[String]) -> Self {
        Self {
            codomain: labels.to_vec(),
            pairs: labels.iter().map(|l| (l.clone(), l.clone())).collect(),
        }
    }

    /// Everything goes to the single label `target`.
    pub fn constant(domain: &[String], target: &str) -> Self {
        Self {
            codomain: vec![target.to_string()],
            pairs: domain
                .iter()
                .map(|l| (l.clone(), target.to_string()))
                .collect(),
        }
    }

    pub fn codomain(&self) -> &[String] {
        &self.codomain
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn image(&self, x: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(p, _)| p == x)
            .map(|(_, y)| y.as_str())
    }

    /// Labels of `f⁻¹(y)` in domain order.
    pub fn preimage<'a>(&'a self, y: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.pairs
            .iter()
            .filter(move |(_, t)| t == y)
            .map(|(x, _)| x.as_str())
    }

    fn check_domain(&self, domain: &[String]) -> Result<()> {
        for x in domain {
            if self.image(x).is_none() {
                return Err(Error::UnknownLabel(x.clone()));
            }
        }
        Ok(())
    }
}

/// Any of the five device types.
#[derive(Debug, Clone, PartialEq)]
pub enum Device {
    Effect(Effect),
    Observable(Observable),
    Operation(CPMap),
    Channel(CPMap),
    Instrument(Instrument),
}

impl Device {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Device::Effect(_) => "effect",
            Device::Observable(_) => "observable",
            Device::Operation(_) => "operation",
            Device::Channel(_) => "channel",
            Device::Instrument(_) => "instrument",
        }
    }

    /// Input dimension.
    pub fn dim_in(&self) -> usize {
        match self {
            Device::Effect(e) => e.dim(),
            Device::Observable(o) => o.dim(),
            Device::Operation(m) | Device::Channel(m) => m.dim_in(),
            Device::Instrument(i) => i.dims().0,
        }
    }

    /// Output dimension for quantum-output devices.
    pub fn dim_out(&self) -> Option<usize> {
        match self {
            Device::Operation(m) | Device::Channel(m) => Some(m.dim_out()),
            Device::Instrument(i) => Some(i.dims().1),
            _ => None,
        }
    }
}

/// Where a device sits inside an instrument.
#[derive(Debug, Clone, PartialEq)]
pub enum PartLocation {
    /// Outcome subset `X` with `D = I(X, ·)` (or `Iᴴ(X, I)` for effects).
    Subset(Vec<String>),
    /// Pointer function `f` with `D(y) = I(f⁻¹(y), ·)`.
    Pointer(PointerMap),
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1u32 << n)).map(move |mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

fn check_bound(n: usize) -> Result<()> {
    if n > MAX_SEARCH_OUTCOMES {
        return Err(Error::OutcomeBoundExceeded {
            outcomes: n,
            bound: MAX_SEARCH_OUTCOMES,
        });
    }
    Ok(())
}

fn check_dims(device: &Device, ins: &Instrument) -> Result<()> {
    let (di, dk) = ins.dims();
    if device.dim_in() != di {
        return Err(Error::DimensionMismatch {
            context: "part-of input",
            expected: di,
            found: device.dim_in(),
        });
    }
    if let Some(out) = device.dim_out() {
        if out != dk {
            return Err(Error::DimensionMismatch {
                context: "part-of output",
                expected: dk,
                found: out,
            });
        }
    }
    Ok(())
}

/// Searches for the outcome subset or pointer map exhibiting `device` as a part of `ins`.
///
/// Effects and operations: all `2^|Ω|` subsets. Channels: only `Ω` itself.
/// Observables and instruments: every pointer map `Ω → Ω′`, by backtracking with
/// the partial sums kept below their targets. Searches refuse `|Ω| > 12`.
pub fn find_part(device: &Device, ins: &Instrument, tol: &Tolerances) -> Result<Option<PartLocation>> {
    check_dims(device, ins)?;
    let labels = ins.outcomes();
    match device {
        Device::Channel(ch) => {
            let total = ins.total_channel(tol);
            Ok(ch
                .approx_eq(&total, tol.eq_tol)
                .then(|| PartLocation::Subset(labels.to_vec())))
        }
        Device::Effect(e) => {
            check_bound(labels.len())?;
            let effects: Vec<ComplexMatrix> =
                ins.branches().iter().map(CPMap::unit_effect_matrix).collect();
            let d = e.dim();
            for set in subsets(labels.len()) {
                let sum = set
                    .iter()
                    .fold(ComplexMatrix::zeros(d, d), |acc, &i| &acc + &effects[i]);
                if e.matrix().approx_eq(&sum, tol.eq_tol) {
                    return Ok(Some(PartLocation::Subset(
                        set.iter().map(|&i| labels[i].clone()).collect(),
                    )));
                }
            }
            Ok(None)
        }
        Device::Operation(op) => {
            check_bound(labels.len())?;
            for set in subsets(labels.len()) {
                let sum = ins.choi_of_indices(set.iter().copied());
                if op.choi().approx_eq(&sum, tol.eq_tol) {
                    return Ok(Some(PartLocation::Subset(
                        set.iter().map(|&i| labels[i].clone()).collect(),
                    )));
                }
            }
            Ok(None)
        }
        Device::Observable(obs) => {
            check_bound(labels.len())?;
            let pieces: Vec<ComplexMatrix> =
                ins.branches().iter().map(CPMap::unit_effect_matrix).collect();
            let targets: Vec<ComplexMatrix> =
                obs.effects().iter().map(|e| e.matrix().clone()).collect();
            Ok(assign_pointer(&pieces, &targets, tol).map(|assign| {
                PartLocation::Pointer(pointer_from_assignment(labels, obs.outcomes(), &assign))
            }))
        }
        Device::Instrument(other) => {
            check_bound(labels.len())?;
            let pieces: Vec<ComplexMatrix> =
                ins.branches().iter().map(|b| b.choi().clone()).collect();
            let targets: Vec<ComplexMatrix> =
                other.branches().iter().map(|b| b.choi().clone()).collect();
            Ok(assign_pointer(&pieces, &targets, tol).map(|assign| {
                PartLocation::Pointer(pointer_from_assignment(labels, other.outcomes(), &assign))
            }))
        }
    }
}

pub fn is_part_of(device: &Device, ins: &Instrument, tol: &Tolerances) -> Result<bool> {
    Ok(find_part(device, ins, tol)?.is_some())
}

/// Checks one given location instead of searching.
pub fn is_part_at(device: &Device, ins: &Instrument, loc: &PartLocation, tol: &Tolerances) -> Result<bool> {
    check_dims(device, ins)?;
    match (device, loc) {
        (Device::Effect(e), PartLocation::Subset(x)) => {
            let labels: Vec<&str> = x.iter().map(String::as_str).collect();
            Ok(e.matrix().approx_eq(ins.part_effect(&labels, tol)?.matrix(), tol.eq_tol))
        }
        (Device::Operation(op), PartLocation::Subset(x)) => {
            let labels: Vec<&str> = x.iter().map(String::as_str).collect();
            Ok(op.approx_eq(&ins.part_op(&labels, tol)?, tol.eq_tol))
        }
        (Device::Channel(ch), PartLocation::Subset(x)) => {
            let mut sorted = x.clone();
            sorted.sort();
            let mut all = ins.outcomes().to_vec();
            all.sort();
            Ok(sorted == all && ch.approx_eq(&ins.total_channel(tol), tol.eq_tol))
        }
        (Device::Observable(obs), PartLocation::Pointer(f)) => {
            let coarse = ins.relabel(f, tol)?;
            for (label, eff) in obs.iter() {
                let Ok(b) = coarse.branch(label) else {
                    return Ok(false);
                };
                if !eff.matrix().approx_eq(&b.unit_effect_matrix(), tol.eq_tol) {
                    return Ok(false);
                }
            }
            Ok(coarse.len() == obs.len())
        }
        (Device::Instrument(other), PartLocation::Pointer(f)) => {
            let coarse = ins.relabel(f, tol)?;
            for (label, m) in other.iter() {
                let Ok(b) = coarse.branch(label) else {
                    return Ok(false);
                };
                if !m.approx_eq(b, tol.eq_tol) {
                    return Ok(false);
                }
            }
            Ok(coarse.len() == other.len())
        }
        _ => Ok(false),
    }
}

fn pointer_from_assignment(domain: &[String], codomain: &[String], assign: &[usize]) -> PointerMap {
    PointerMap {
        codomain: codomain.to_vec(),
        pairs: domain
            .iter()
            .zip(assign)
            .map(|(x, &y)| (x.clone(), codomain[y].clone()))
            .collect(),
    }
}

/// Assigns every PSD piece to a target so each target equals the sum of its pieces.
fn assign_pointer(pieces: &[ComplexMatrix], targets: &[ComplexMatrix], tol: &Tolerances) -> Option<Vec<usize>> {
    let n = targets[0].rows();
    let mut sums = vec![ComplexMatrix::zeros(n, n); targets.len()];
    let mut assign = vec![0usize; pieces.len()];
    fn rec(
        k: usize,
        pieces: &[ComplexMatrix],
        targets: &[ComplexMatrix],
        sums: &mut [ComplexMatrix],
        assign: &mut [usize],
        tol: &Tolerances,
    ) -> bool {
        if k == pieces.len() {
            return targets
                .iter()
                .zip(sums.iter())
                .all(|(t, s)| t.approx_eq(s, tol.eq_tol));
        }
        for y in 0..targets.len() {
            let cand = &sums[y] + &pieces[k];
            // Remaining pieces are PSD, so a feasible partial sum stays below its target.
            let slack = &targets[y] - &cand;
            let scale = 1.0 + targets[y].frob_norm();
            if matkit::min_eigenvalue(&slack) < -(tol.psd_tol + tol.eq_tol) * scale {
                continue;
            }
            let saved = std::mem::replace(&mut sums[y], cand);
            assign[k] = y;
            if rec(k + 1, pieces, targets, sums, assign, tol) {
                return true;
            }
            sums[y] = saved;
        }
        false
    }
    rec(0, pieces, targets, &mut sums, &mut assign, tol).then_some(assign)
}

/// Anchor data for the canonical instrument constructions.
#[derive(Debug, Clone, PartialEq)]
pub enum Anchor {
    /// Fixed state `ρ₀` on the output space.
    State(ComplexMatrix),
    /// Probability vector `p` for the channel construction.
    Distribution(Vec<f64>),
}

/// The standard instrument having `device` as a part.
///
/// * effect `E`: `Iᴴ(0,T) = tr[ρ₀T] E`, `Iᴴ(1,T) = tr[ρ₀T](I − E)`;
/// * observable `A`: `Iᴴ(x,T) = tr[ρ₀T] A(x)`;
/// * operation `Φ`: `I(0) = Φ`, `Iᴴ(1,T) = tr[ρ₀T](I − Φᴴ(I))`;
/// * channel `Λ`: `I(x) = p(x) Λ`;
/// * instrument: itself.
///
/// The result is checked to contain `device`.
pub fn canonical_instrument(device: &Device, anchor: &Anchor, tol: &Tolerances) -> Result<Instrument> {
    let state = |d_out: Option<usize>| -> Result<&ComplexMatrix> {
        match anchor {
            Anchor::State(rho) => {
                validate_state(rho, d_out, tol)?;
                Ok(rho)
            }
            Anchor::Distribution(_) => Err(Error::InvalidState(
                "construction needs an anchor state".into(),
            )),
        }
    };
    let ins = match device {
        Device::Effect(e) => {
            let rho = state(None)?;
            Instrument::new_unchecked(
                vec!["0".into(), "1".into()],
                vec![
                    CPMap::measure_prepare(e.matrix(), rho, tol),
                    CPMap::measure_prepare(e.complement().matrix(), rho, tol),
                ],
            )
        }
        Device::Observable(obs) => {
            let rho = state(None)?;
            Instrument::new_unchecked(
                obs.outcomes().to_vec(),
                obs.effects()
                    .iter()
                    .map(|e| CPMap::measure_prepare(e.matrix(), rho, tol))
                    .collect(),
            )
        }
        Device::Operation(op) => {
            let rho = state(Some(op.dim_out()))?;
            Instrument::new_unchecked(
                vec!["0".into(), "1".into()],
                vec![op.clone(), CPMap::measure_prepare(&op.deficiency(), rho, tol)],
            )
        }
        Device::Channel(ch) => {
            let p = match anchor {
                Anchor::Distribution(p) => p,
                Anchor::State(_) => {
                    return Err(Error::InvalidDistribution(
                        "channel construction needs a distribution".into(),
                    ))
                }
            };
            validate_distribution(p, tol)?;
            Instrument::new_unchecked(
                (0..p.len()).map(|i| i.to_string()).collect(),
                p.iter().map(|&w| ch.scaled(w, tol)).collect(),
            )
        }
        Device::Instrument(ins) => ins.clone(),
    };
    let ins = Instrument::new(ins.outcomes.iter().cloned().zip(ins.branches).collect(), tol)?;
    if !is_part_of(device, &ins, tol)? {
        return Err(Error::WitnessRejected(
            "canonical instrument does not contain its source device".into(),
        ));
    }
    Ok(ins)
}

/// Lüders operation `ρ ↦ √A ρ √A`.
pub fn luders(a: &Effect, tol: &Tolerances) -> Result<CPMap> {
    let root = matkit::mat_sqrt(a.matrix(), tol.psd_tol)?;
    let d = a.dim();
    let m = choi_from_kraus_unchecked(&KrausSet { ops: vec![root] }, d, d, tol);
    Ok(m)
}

/// Contraction channel `ρ ↦ tr(ρ) η` from `dim_in`-dimensional inputs.
pub fn contraction_channel(eta: &ComplexMatrix, dim_in: usize, tol: &Tolerances) -> Result<CPMap> {
    validate_state(eta, None, tol)?;
    let choi = kron(&ComplexMatrix::identity(dim_in), eta);
    CPMap::channel_from_choi(dim_in, eta.rows(), choi, tol)
}

/// Trivial observable `x ↦ p(x) I` on outcomes `"0", "1", …`.
pub fn trivial_observable(p: &[f64], d: usize, tol: &Tolerances) -> Result<Observable> {
    validate_distribution(p, tol)?;
    Observable::new(
        p.iter()
            .enumerate()
            .map(|(i, &w)| (i.to_string(), ComplexMatrix::identity(d).scale_real(w)))
            .collect(),
        tol,
    )
}

/// Maximally mixed state `I/d`.
pub fn maximally_mixed(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d).scale_real(1.0 / d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{hermitian_basis, pauli};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn eff(m: ComplexMatrix) -> Effect {
        Effect::new(m, &tol()).unwrap()
    }

    #[test]
    fn identity_channel_choi_is_maximally_entangled() {
        let k = KrausSet::new(vec![ComplexMatrix::identity(2)], &tol()).unwrap();
        let m = choi_from_kraus(&k, &tol()).unwrap();
        let mut want = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                want[(i * 2 + i, j * 2 + j)] = ONE;
            }
        }
        assert_eq!(m.choi(), &want);
        assert!((m.choi().trace().re - 2.0).abs() < 1e-15);
        assert!(m.is_channel());
    }

    #[test]
    fn choi_convention_matches_kraus_action() {
        // ρ ↦ Px ρ Px: apply_s must agree with the Kraus form on every basis input.
        let px = pauli::px();
        let k = KrausSet::new(vec![px.clone()], &tol()).unwrap();
        let m = choi_from_kraus(&k, &tol()).unwrap();
        assert!(!m.is_channel());
        for b in hermitian_basis(2) {
            let got = m.apply_s(&b).unwrap();
            assert!(got.approx_eq(&px.sandwich(&b), 1e-14));
        }
        // Non-square Kraus operator: dims 2 -> 3.
        let a = ComplexMatrix::from_fn(3, 2, |r, c| C64::new(0.1 * (r + 1) as f64, 0.05 * c as f64));
        let m = choi_from_kraus(&KrausSet::new(vec![a.clone()], &tol()).unwrap(), &tol()).unwrap();
        assert_eq!(m.dims(), (2, 3));
        for b in hermitian_basis(2) {
            assert!(m.apply_s(&b).unwrap().approx_eq(&a.sandwich(&b), 1e-14));
        }
    }

    #[test]
    fn luders_projection_action() {
        let m = luders(&eff(pauli::px()), &tol()).unwrap();
        let out = m.apply_s(&pauli::pz()).unwrap();
        assert!(out.approx_eq(&pauli::px().scale_real(0.5), 1e-14));
    }

    #[test]
    fn luders_identity_is_identity_channel() {
        let m = luders(&Effect::identity(3), &tol()).unwrap();
        assert!(m.approx_eq(&CPMap::identity(3), 1e-14));
    }

    #[test]
    fn channel_is_unital_in_heisenberg_picture() {
        let lam = Instrument::new(
            vec![
                ("+".into(), luders(&eff(pauli::px()), &tol()).unwrap()),
                ("-".into(), luders(&eff(pauli::pmx()), &tol()).unwrap()),
            ],
            &tol(),
        )
        .unwrap()
        .total_channel(&tol());
        let h = lam.apply_h(&ComplexMatrix::identity(2)).unwrap();
        assert!(h.approx_eq(&ComplexMatrix::identity(2), 1e-14));
    }

    #[test]
    fn kraus_from_identity_channel_is_unitary_multiple() {
        let k = kraus_from_choi(&CPMap::identity(2), &tol());
        assert_eq!(k.len(), 1);
        let op = &k.ops()[0];
        let phase = op[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(op.approx_eq(&ComplexMatrix::identity(2).scale(phase), 1e-12));
    }

    #[test]
    fn kraus_of_reset_channel() {
        let reset = contraction_channel(&pauli::pz(), 2, &tol()).unwrap();
        let k = kraus_from_choi(&reset, &tol());
        assert_eq!(k.len(), 2);
        for op in k.ops() {
            assert_eq!(matkit::rank_above(&op.adjoint().matmul(op), 1e-9), 1);
            // Rank-one operators of the form |0⟩⟨v|.
            assert!(op[(1, 0)].norm() < 1e-12 && op[(1, 1)].norm() < 1e-12);
        }
        let back = choi_from_kraus(&k, &tol()).unwrap();
        for b in hermitian_basis(2) {
            assert!(back.apply_s(&b).unwrap().approx_eq(&reset.apply_s(&b).unwrap(), 1e-12));
        }
    }

    #[test]
    fn kraus_of_luders_pz_is_pz() {
        let m = luders(&eff(pauli::pz()), &tol()).unwrap();
        let k = kraus_from_choi(&m, &tol());
        assert_eq!(k.len(), 1);
        let op = &k.ops()[0];
        let phase = op[(0, 0)];
        assert!(op.approx_eq(&pauli::pz().scale(phase), 1e-12));
    }

    #[test]
    fn four_effects_examples() {
        let id = ComplexMatrix::identity(2);
        let (c, e) = four_effect_decomposition(&id).unwrap();
        assert_eq!(e[0].matrix(), &id);
        assert_eq!(c[0], ONE);
        let t = &pauli::x() + &pauli::y().scale(matkit::I);
        let (c, e) = four_effect_decomposition(&t).unwrap();
        let resum = (0..4).fold(ComplexMatrix::zeros(2, 2), |acc, i| &acc + &e[i].matrix().scale(c[i]));
        assert!((&resum - &t).frob_norm() <= 1e-12);
        for x in &e {
            Effect::new(x.matrix().clone(), &tol()).unwrap();
        }
        let (c, e) = four_effect_decomposition(&pauli::px()).unwrap();
        let resum = (0..4).fold(ComplexMatrix::zeros(2, 2), |acc, i| &acc + &e[i].matrix().scale(c[i]));
        assert!(resum.approx_eq(&pauli::px(), 1e-14));
    }

    #[test]
    fn validation_errors_are_distinct() {
        let t = tol();
        let non_herm = ComplexMatrix::from_real_rows(&[&[0.5, 0.2], &[0.0, 0.5]]);
        assert!(matches!(Effect::new(non_herm, &t), Err(Error::NotHermitian { .. })));
        let big = ComplexMatrix::diag_real(&[1.5, 0.0]);
        assert!(matches!(Effect::new(big, &t), Err(Error::EffectOutOfRange { .. })));
        let bad_obs = Observable::new(
            vec![("a".into(), pauli::px()), ("b".into(), pauli::pz())],
            &t,
        );
        assert!(matches!(bad_obs, Err(Error::ObservableNotNormalized { .. })));
        let not_cp = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2));
        let mut swap = ComplexMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = ONE;
            }
        }
        // Choi matrix of the transpose map is the swap: not PSD.
        assert!(matches!(
            CPMap::from_choi(2, 2, swap, &t),
            Err(Error::NotCompletelyPositive { .. })
        ));
        assert!(matches!(
            CPMap::from_choi(2, 2, not_cp.scale_real(2.0), &t),
            Err(Error::TraceIncreasing { .. })
        ));
        let half = luders(&eff(pauli::px()), &t).unwrap();
        assert!(matches!(
            Instrument::new(vec![("a".into(), half)], &t),
            Err(Error::InstrumentNotChannel { .. })
        ));
    }

    #[test]
    fn instrument_parts_and_relabel() {
        let t = tol();
        let ins = Instrument::new(
            vec![
                ("+".into(), luders(&eff(pauli::px()), &t).unwrap()),
                ("-".into(), luders(&eff(pauli::pmx()), &t).unwrap()),
            ],
            &t,
        )
        .unwrap();
        assert!(ins.part_effect(&["+"], &t).unwrap().matrix().approx_eq(&pauli::px(), 1e-14));
        let lam = ins.total_channel(&t);
        // Λ(ρ) = ½ρ + ½σxρσx.
        for b in hermitian_basis(2) {
            let want = (&b + &pauli::x().sandwich(&b)).scale_real(0.5);
            assert!(lam.apply_s(&b).unwrap().approx_eq(&want, 1e-14));
        }
        let f = PointerMap::constant(ins.outcomes(), "all");
        let coarse = ins.relabel(&f, &t).unwrap();
        assert_eq!(coarse.len(), 1);
        assert!(coarse.branches()[0].approx_eq(&lam, 1e-14));
        assert!(matches!(ins.part_op(&["?"], &t), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn null_operation_is_part_of_everything() {
        let t = tol();
        let ins = canonical_instrument(
            &Device::Effect(eff(pauli::px())),
            &Anchor::State(maximally_mixed(2)),
            &t,
        )
        .unwrap();
        assert_eq!(
            find_part(&Device::Operation(CPMap::null(2, 2)), &ins, &t).unwrap(),
            Some(PartLocation::Subset(vec![]))
        );
    }

    #[test]
    fn channel_part_needs_full_outcome_set() {
        let t = tol();
        let sw = Instrument::new(
            vec![
                ("0".into(), CPMap::measure_prepare(&pauli::pz(), &pauli::pz(), &t)),
                ("1".into(), CPMap::measure_prepare(&pauli::pmz(), &pauli::px(), &t)),
            ],
            &t,
        )
        .unwrap();
        let reset = contraction_channel(&pauli::pz(), 2, &t).unwrap();
        assert!(!is_part_of(&Device::Channel(reset), &sw, &t).unwrap());
        let total = sw.total_channel(&t);
        assert!(is_part_of(&Device::Channel(total), &sw, &t).unwrap());
    }

    #[test]
    fn canonical_instruments_contain_their_source() {
        let t = tol();
        let ins = canonical_instrument(
            &Device::Effect(eff(pauli::px())),
            &Anchor::State(maximally_mixed(2)),
            &t,
        )
        .unwrap();
        let unit = ins.branch("0").unwrap().apply_h(&ComplexMatrix::identity(2)).unwrap();
        assert!(unit.approx_eq(&pauli::px(), 1e-14));

        let lam = contraction_channel(&pauli::py(), 2, &t).unwrap();
        let ins = canonical_instrument(&Device::Channel(lam.clone()), &Anchor::Distribution(vec![1.0]), &t).unwrap();
        assert_eq!(ins.len(), 1);
        assert!(ins.branches()[0].approx_eq(&lam, 1e-14));

        let op = luders(&eff(pauli::px()), &t).unwrap();
        let ins = canonical_instrument(&Device::Operation(op), &Anchor::State(pauli::pz()), &t).unwrap();
        let unit = ins.branch("1").unwrap().apply_h(&ComplexMatrix::identity(2)).unwrap();
        assert!(unit.approx_eq(&pauli::pmx(), 1e-14));
    }

    #[test]
    fn induced_observable_of_measure_prepare_instrument() {
        let t = tol();
        let obs = Observable::new(
            vec![
                ("a".into(), pauli::pz().scale_real(0.7)),
                ("b".into(), &pauli::pmz() + &pauli::pz().scale_real(0.3)),
            ],
            &t,
        )
        .unwrap();
        let ins = canonical_instrument(&Device::Observable(obs.clone()), &Anchor::State(pauli::px()), &t).unwrap();
        let induced = ins.induced_observable();
        for ((_, a), (_, b)) in induced.iter().zip(obs.iter()) {
            assert!(a.matrix().approx_eq(b.matrix(), 1e-14));
        }
        assert_eq!(
            find_part(&Device::Observable(obs), &ins, &t).unwrap(),
            Some(PartLocation::Pointer(PointerMap::identity(ins.outcomes())))
        );
    }

    #[test]
    fn contraction_and_trivial_observable() {
        let t = tol();
        let c = contraction_channel(&pauli::pz(), 2, &t).unwrap();
        assert!(c.apply_s(&pauli::px()).unwrap().approx_eq(&pauli::pz(), 1e-14));
        let h = c.apply_h(&pauli::pz()).unwrap();
        assert!(h.approx_eq(&ComplexMatrix::identity(2), 1e-14));
        let obs = trivial_observable(&[0.25, 0.75], 2, &t).unwrap();
        assert!(obs.effect("1").unwrap().matrix().approx_eq(&ComplexMatrix::identity(2).scale_real(0.75), 1e-15));
        assert!(trivial_observable(&[0.5, 0.6], 2, &t).is_err());
    }

    #[test]
    fn search_bound_is_enforced() {
        let t = tol();
        let p = vec![1.0 / 13.0; 13];
        let ins = canonical_instrument(
            &Device::Channel(CPMap::identity(2)),
            &Anchor::Distribution(p),
            &t,
        );
        // Building the instrument itself checks membership of a channel, which needs no search.
        let ins = ins.unwrap();
        let e = Device::Effect(Effect::identity(2));
        assert!(matches!(find_part(&e, &ins, &t), Err(Error::OutcomeBoundExceeded { .. })));
    }
}
