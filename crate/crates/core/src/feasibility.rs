//! PSD feasibility over stacked Hermitian blocks with affine constraints.
//!
//! Each block `X` is optionally confined to a face `X = B M B†` given by an
//! isometry `B` (columns spanning the allowed support); the unknowns are the
//! entries of the Hermitian `M`, vectorized isometrically into reals
//! (diagonal, then `√2·Re`, `√2·Im` of the upper triangle). The solver runs
//! Dykstra's projections between the affine set and the (shifted) PSD cone,
//! polishes near-feasible points onto their face, and certifies infeasibility
//! with a dual bound `λ* ≤ ⟨Z, x₀⟩ / tr Z` for PSD `Z` in the constraint rowspace.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matkit::{self, herm_eig_unchecked, partial_trace, ComplexMatrix, RowSpace, Slot, Tolerances, C64};

/// Handle to a declared block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

/// Real-linear maps that can appear in a constraint term.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Identity,
    /// `X ↦ Tr_other X` keeping the given slot of a `dims.0 · dims.1` block.
    PartialTrace { dims: (usize, usize), keep: Slot },
    /// `J ↦ (Tr_out J)ᵀ`, the Heisenberg unit `Φᴴ(I)` of a Choi block.
    HeisenbergUnit { dim_in: usize, dim_out: usize },
    /// `X ↦ tr X` as a `1 × 1` matrix.
    Trace,
    /// `X ↦ K X K†`.
    Sandwich(ComplexMatrix),
}

impl LinearMap {
    fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        match self {
            LinearMap::Identity => Ok(x.clone()),
            LinearMap::PartialTrace { dims, keep } => partial_trace(x, *dims, *keep),
            LinearMap::HeisenbergUnit { dim_in, dim_out } => {
                Ok(partial_trace(x, (*dim_in, *dim_out), Slot::First)?.transpose())
            }
            LinearMap::Trace => Ok(ComplexMatrix::from_fn(1, 1, |_, _| x.trace())),
            LinearMap::Sandwich(k) => {
                if k.cols() != x.rows() {
                    return Err(Error::DimensionMismatch {
                        context: "sandwich map",
                        expected: k.cols(),
                        found: x.rows(),
                    });
                }
                Ok(k.sandwich(x))
            }
        }
    }
}

/// `coeff · map(block)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub block: BlockId,
    pub coeff: f64,
    pub map: LinearMap,
}

impl Term {
    pub fn new(block: BlockId, coeff: f64, map: LinearMap) -> Self {
        Self { block, coeff, map }
    }
}

/// `Σ terms = rhs` with a Hermitian right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: ComplexMatrix,
}

impl Constraint {
    pub fn new(terms: Vec<Term>, rhs: ComplexMatrix) -> Self {
        Self { terms, rhs }
    }
}

/// `Σ blocks = target`.
pub fn encode_sum_constraint(blocks: &[BlockId], target: &ComplexMatrix) -> Constraint {
    Constraint::new(
        blocks
            .iter()
            .map(|&b| Term::new(b, 1.0, LinearMap::Identity))
            .collect(),
        target.clone(),
    )
}

/// `Tr_other(Σ blocks) = target`, keeping `keep`.
pub fn encode_partial_trace_constraint(
    blocks: &[BlockId],
    dims: (usize, usize),
    keep: Slot,
    target: &ComplexMatrix,
) -> Constraint {
    Constraint::new(
        blocks
            .iter()
            .map(|&b| Term::new(b, 1.0, LinearMap::PartialTrace { dims, keep }))
            .collect(),
        target.clone(),
    )
}

/// `(Σ blocks)ᴴ(I) = effect` for Choi blocks of maps `dim_in → dim_out`.
pub fn encode_heisenberg_unit_constraint(
    blocks: &[BlockId],
    dim_in: usize,
    dim_out: usize,
    effect: &ComplexMatrix,
) -> Constraint {
    Constraint::new(
        blocks
            .iter()
            .map(|&b| Term::new(b, 1.0, LinearMap::HeisenbergUnit { dim_in, dim_out }))
            .collect(),
        effect.clone(),
    )
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    name: String,
    side: usize,
    support: Option<ComplexMatrix>,
}

impl Block {
    fn reduced_side(&self) -> usize {
        self.support.as_ref().map_or(self.side, |b| b.cols())
    }

    fn lift(&self, m: &ComplexMatrix) -> ComplexMatrix {
        match &self.support {
            None => m.clone(),
            Some(b) => b.matmul(m).matmul(&b.adjoint()),
        }
    }
}

/// Stacked PSD blocks under affine equality constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeasibilityProblem {
    blocks: Vec<Block>,
    constraints: Vec<Constraint>,
}

impl FeasibilityProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: &str, side: usize) -> BlockId {
        self.blocks.push(Block {
            name: name.to_string(),
            side,
            support: None,
        });
        BlockId(self.blocks.len() - 1)
    }

    /// A block confined to `X = B M B†`; the columns of `support` must be orthonormal.
    pub fn add_block_on(&mut self, name: &str, support: ComplexMatrix) -> Result<BlockId> {
        let gram = support.adjoint().matmul(&support);
        if !gram.approx_eq(&ComplexMatrix::identity(support.cols()), 1e-10) {
            return Err(Error::MalformedProblem(format!(
                "support of block `{name}` is not an isometry"
            )));
        }
        self.blocks.push(Block {
            name: name.to_string(),
            side: support.rows(),
            support: Some(support),
        });
        Ok(BlockId(self.blocks.len() - 1))
    }

    pub fn add_constraint(&mut self, c: Constraint) -> Result<()> {
        let side = c.rhs.side()?;
        if !matkit::is_hermitian(&c.rhs, 1e-12) {
            return Err(Error::MalformedProblem("constraint right-hand side is not Hermitian".into()));
        }
        for t in &c.terms {
            let block = self
                .blocks
                .get(t.block.0)
                .ok_or_else(|| Error::MalformedProblem(format!("unknown block {}", t.block.0)))?;
            let probe = t.map.apply(&ComplexMatrix::zeros(block.side, block.side))?;
            if probe.rows() != side || probe.cols() != side {
                return Err(Error::DimensionMismatch {
                    context: "constraint term",
                    expected: side,
                    found: probe.rows(),
                });
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    /// The same problem with every block on its full space.
    pub fn without_supports(&self) -> Self {
        let mut p = self.clone();
        for b in &mut p.blocks {
            b.support = None;
        }
        p
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.name.as_str())
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Largest affine violation `max_c ‖Σ terms − rhs‖_F` at a full-size block assignment.
    pub fn constraint_residual(&self, blocks: &[ComplexMatrix]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let mut acc = c.rhs.scale_real(-1.0);
            for t in &c.terms {
                acc += &t.map.apply(&blocks[t.block.0])?.scale_real(t.coeff);
            }
            worst = worst.max(acc.frob_norm());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasVerdict {
    Feasible,
    Infeasible,
    Undecided,
}

/// What the solver found.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome {
    pub verdict: FeasVerdict,
    /// Full-size block matrices, present iff feasible.
    pub witness: Option<Vec<ComplexMatrix>>,
    /// Estimate of `λ* = sup_{affine} min eigenvalue`; for infeasible outcomes a
    /// certified upper bound.
    pub margin: Option<f64>,
    /// Affine residual of the witness, or the last projection gap.
    pub residual: f64,
    pub iterations: usize,
    /// Solver log lines, filled only when tracing is on.
    pub trace: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            trace: false,
        }
    }
}

/// Certified bracket `lower ≤ λ* ≤ upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginBracket {
    pub lower: f64,
    pub upper: f64,
}

pub fn solve(p: &FeasibilityProblem, tol: &Tolerances, max_iter: usize) -> Result<FeasibilityOutcome> {
    solve_with(
        p,
        tol,
        &SolverOptions {
            max_iter,
            trace: false,
        },
    )
}

pub fn solve_with(p: &FeasibilityProblem, tol: &Tolerances, opts: &SolverOptions) -> Result<FeasibilityOutcome> {
    let compiled = Compiled::new(p, tol)?;
    let mut s = Search::new(&compiled, opts.trace);
    if compiled.n == 0 {
        return Ok(s.finish_feasible(&compiled, DVector::zeros(0)));
    }

    // Stage A: plain feasibility at t = 0.
    let stage_a = (opts.max_iter / 2).max(1);
    compiled.run(0.0, stage_a, &mut s, tol, true);
    if let Some(out) = s.resolved(&compiled, tol) {
        return Ok(out);
    }

    // Stage B: bisection on the shift t, tightening the certified bracket.
    let window_lo = -1.0 - compiled.rhs_norm;
    let (mut low, mut high) = (window_lo.max(s.lo), 1.0f64.min(s.hi));
    let steps = 40;
    for step in 0..steps {
        if s.iterations >= opts.max_iter || high - low < tol.feas_tol * 0.1 {
            break;
        }
        let remaining = opts.max_iter - s.iterations;
        let budget = (remaining / (steps - step)).max(50);
        let t = 0.5 * (low + high);
        let gap = compiled.run(t, budget, &mut s, tol, t.abs() < tol.feas_tol);
        if let Some(out) = s.resolved(&compiled, tol) {
            return Ok(out);
        }
        if s.lo >= t || (s.hi >= t && gap <= tol.feas_tol) {
            low = t.max(s.lo);
        } else {
            high = t.min(s.hi);
        }
        s.log(format!("bisect {step} t {t:.6e} bracket [{low:.6e}, {high:.6e}]"));
    }
    let estimate = (0.5 * (low + high)).clamp(s.lo, s.hi);
    Ok(FeasibilityOutcome {
        verdict: FeasVerdict::Undecided,
        witness: None,
        margin: Some(estimate),
        residual: s.last_gap,
        iterations: s.iterations,
        trace: s.trace,
    })
}

/// Bisection estimate of `λ*` with certified bounds, without stopping at a verdict.
pub fn estimate_margin(p: &FeasibilityProblem, tol: &Tolerances, max_iter: usize) -> Result<MarginBracket> {
    let compiled = Compiled::new(p, tol)?;
    if compiled.n == 0 {
        return Ok(MarginBracket {
            lower: f64::INFINITY,
            upper: f64::INFINITY,
        });
    }
    let mut s = Search::new(&compiled, false);
    let (mut low, mut high) = (-1.0 - compiled.rhs_norm, 1.0f64);
    compiled.run(0.0, max_iter / 4, &mut s, tol, false);
    low = low.max(s.lo);
    high = high.min(s.hi);
    for step in 0..40 {
        if s.iterations >= max_iter || high - low < 1e-9 {
            break;
        }
        let budget = ((max_iter - s.iterations) / (40 - step)).max(50);
        let t = 0.5 * (low + high);
        let gap = compiled.run(t, budget, &mut s, tol, false);
        if s.lo >= t || (s.hi >= t && gap <= tol.feas_tol) {
            low = t.max(s.lo);
        } else {
            high = t.min(s.hi);
        }
    }
    Ok(MarginBracket {
        lower: s.lo,
        upper: s.hi,
    })
}

struct BlockLayout {
    side: usize,
    r: usize,
    offset: usize,
}

struct Compiled<'p> {
    problem: &'p FeasibilityProblem,
    layout: Vec<BlockLayout>,
    n: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Orthonormal rowspace basis, `n × rank`.
    q: DMatrix<f64>,
    x0: DVector<f64>,
    /// PSD element of the rowspace used to repair dual candidates.
    repair: Option<DVector<f64>>,
    rhs_norm: f64,
    b_norm: f64,
}

fn hvec_len(r: usize) -> usize {
    r * r
}

fn unvec(v: &[f64], r: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = ComplexMatrix::zeros(r, r);
    for i in 0..r {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = r;
    for i in 0..r {
        for j in i + 1..r {
            let z = C64::new(v[k] * s, v[k + 1] * s);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

fn vec_into(m: &ComplexMatrix, out: &mut [f64]) {
    let r = m.rows();
    let s = std::f64::consts::SQRT_2;
    for i in 0..r {
        out[i] = m[(i, i)].re;
    }
    let mut k = r;
    for i in 0..r {
        for j in i + 1..r {
            // Average the two triangles so slightly non-Hermitian inputs land on their Hermitian part.
            let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            out[k] = z.re * s;
            out[k + 1] = z.im * s;
            k += 2;
        }
    }
}

impl<'p> Compiled<'p> {
    fn new(problem: &'p FeasibilityProblem, tol: &Tolerances) -> Result<Self> {
        let mut layout = Vec::with_capacity(problem.blocks.len());
        let mut n = 0;
        for blk in &problem.blocks {
            let r = blk.reduced_side();
            layout.push(BlockLayout {
                side: blk.side,
                r,
                offset: n,
            });
            n += hvec_len(r);
        }
        let mut row_off = Vec::with_capacity(problem.constraints.len());
        let mut m = 0;
        for c in &problem.constraints {
            row_off.push(m);
            m += hvec_len(c.rhs.rows());
        }
        let mut a = DMatrix::<f64>::zeros(m, n);
        let mut b = DVector::<f64>::zeros(m);
        let widest = problem
            .constraints
            .iter()
            .map(|c| hvec_len(c.rhs.rows()))
            .max()
            .unwrap_or(0);
        let mut scratch = vec![0.0; widest.max(1)];
        let mut rhs_norm: f64 = 0.0;
        for (ci, c) in problem.constraints.iter().enumerate() {
            let rs = c.rhs.rows();
            vec_into(&c.rhs, &mut scratch[..hvec_len(rs)]);
            for k in 0..hvec_len(rs) {
                b[row_off[ci] + k] = scratch[k];
            }
            rhs_norm = rhs_norm.max(matkit::herm_op_norm(&c.rhs));
        }
        for (bi, blk) in problem.blocks.iter().enumerate() {
            let lay = &layout[bi];
            let len = hvec_len(lay.r);
            let mut e = vec![0.0; len];
            for k in 0..len {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[k] = 1.0;
                let x = blk.lift(&unvec(&e, lay.r));
                for (ci, c) in problem.constraints.iter().enumerate() {
                    let rs = c.rhs.rows();
                    let mut acc: Option<ComplexMatrix> = None;
                    for t in c.terms.iter().filter(|t| t.block.0 == bi) {
                        let img = t.map.apply(&x)?.scale_real(t.coeff);
                        acc = Some(match acc {
                            None => img,
                            Some(prev) => &prev + &img,
                        });
                    }
                    if let Some(img) = acc {
                        vec_into(&img, &mut scratch[..hvec_len(rs)]);
                        for kk in 0..hvec_len(rs) {
                            a[(row_off[ci] + kk, lay.offset + k)] = scratch[kk];
                        }
                    }
                }
            }
        }

        let b_norm = b.norm();
        let (q, x0) = if m == 0 || n == 0 {
            (DMatrix::zeros(n, 0), DVector::zeros(n))
        } else {
            let rs = RowSpace::new(&a);
            let x0 = rs.solve(&a, &DMatrix::from_column_slice(m, 1, b.as_slice()));
            (rs.basis, DVector::from_column_slice(x0.as_slice()))
        };
        let affine_residual = if n == 0 { b_norm } else { (&a * &x0 - &b).norm() };
        if affine_residual > tol.feas_tol * (1.0 + b_norm) {
            return Err(Error::InconsistentAffine {
                residual: affine_residual,
            });
        }

        let mut c = Self {
            problem,
            layout,
            n,
            a,
            b,
            q,
            x0,
            repair: None,
            rhs_norm,
            b_norm,
        };
        c.repair = c.find_repair();
        Ok(c)
    }

    fn block_matrix(&self, v: &DVector<f64>, bi: usize) -> ComplexMatrix {
        let lay = &self.layout[bi];
        unvec(&v.as_slice()[lay.offset..lay.offset + hvec_len(lay.r)], lay.r)
    }

    fn write_block(&self, v: &mut DVector<f64>, bi: usize, m: &ComplexMatrix) {
        let lay = &self.layout[bi];
        vec_into(m, &mut v.as_mut_slice()[lay.offset..lay.offset + hvec_len(lay.r)]);
    }

    fn project_affine(&self, z: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return z.clone();
        }
        let coeff = self.q.tr_mul(z);
        z - &self.q * coeff + &self.x0
    }

    fn project_rowspace(&self, z: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return DVector::zeros(self.n);
        }
        &self.q * self.q.tr_mul(z)
    }

    /// Blockwise projection onto `{M ⪰ tI}`.
    fn project_cone(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = z.clone();
        for bi in 0..self.layout.len() {
            if self.layout[bi].r == 0 {
                continue;
            }
            let m = self.block_matrix(z, bi);
            let e = herm_eig_unchecked(&m);
            if e.min() >= t {
                continue;
            }
            let proj = e.rebuild_with(|v| v.max(t));
            self.write_block(&mut out, bi, &proj);
        }
        out
    }

    fn min_eig(&self, z: &DVector<f64>) -> f64 {
        (0..self.layout.len())
            .filter(|&bi| self.layout[bi].r > 0)
            .map(|bi| matkit::min_eigenvalue(&self.block_matrix(z, bi)))
            .fold(f64::INFINITY, f64::min)
    }

    fn identity_vec(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n);
        for lay in &self.layout {
            for i in 0..lay.r {
                e[lay.offset + i] = 1.0;
            }
        }
        e
    }

    fn trace_of(&self, z: &DVector<f64>) -> f64 {
        self.layout
            .iter()
            .map(|lay| (0..lay.r).map(|i| z[lay.offset + i]).sum::<f64>())
            .sum()
    }

    fn find_repair(&self) -> Option<DVector<f64>> {
        let w = self.project_rowspace(&self.identity_vec());
        let min = self.min_eig(&w);
        (min > 1e-8).then_some(w)
    }

    /// Upper bound on `λ*` from a dual candidate, if one can be certified.
    fn certificate_bound(&self, z: &DVector<f64>) -> Option<f64> {
        let zr = self.project_rowspace(z);
        let min = self.min_eig(&zr);
        let zc = if min >= 0.0 {
            zr
        } else {
            let w = self.repair.as_ref()?;
            let wmin = self.min_eig(w);
            // Slight overshoot keeps the repaired candidate PSD through rounding.
            let delta = -min / wmin * (1.0 + 1e-9) + 1e-15;
            zr + w * delta
        };
        let tr = self.trace_of(&zc);
        if tr <= 1e-300 || !tr.is_finite() {
            return None;
        }
        Some(zc.dot(&self.x0) / tr)
    }

    fn affine_residual(&self, v: &DVector<f64>) -> f64 {
        (&self.a * v - &self.b).norm()
    }

    /// Projects `y` onto the affine set within the face spanned by its dominant eigenvectors.
    fn polish(&self, y: &DVector<f64>, tol: &Tolerances) -> Option<DVector<f64>> {
        const THETAS: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
        let eigs: Vec<_> = (0..self.layout.len())
            .map(|bi| herm_eig_unchecked(&self.block_matrix(y, bi)))
            .collect();
        let scale = eigs.iter().map(|e| e.max().abs()).fold(1.0f64, f64::max);
        let mut last_dims: Option<Vec<usize>> = None;
        for theta in THETAS {
            let thr = theta * scale;
            let faces: Vec<ComplexMatrix> = eigs
                .iter()
                .map(|e| {
                    let keep: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > thr).collect();
                    ComplexMatrix::from_fn(e.values.len(), keep.len(), |r, c| e.vectors[(r, keep[c])])
                })
                .collect();
            let dims: Vec<usize> = faces.iter().map(ComplexMatrix::cols).collect();
            if last_dims.as_ref() == Some(&dims) {
                continue;
            }
            last_dims = Some(dims);
            if let Some(x) = self.polish_on(y, &faces, tol) {
                return Some(x);
            }
        }
        None
    }

    fn polish_on(&self, y: &DVector<f64>, faces: &[ComplexMatrix], tol: &Tolerances) -> Option<DVector<f64>> {
        let nf: usize = faces.iter().map(|w| hvec_len(w.cols())).sum();
        let mut lift = DMatrix::<f64>::zeros(self.n, nf);
        let mut col = 0;
        for (bi, w) in faces.iter().enumerate() {
            let s = w.cols();
            let mut e = vec![0.0; hvec_len(s)];
            for k in 0..hvec_len(s) {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[k] = 1.0;
                let m = w.matmul(&unvec(&e, s)).matmul(&w.adjoint());
                let mut v = DVector::zeros(self.n);
                self.write_block(&mut v, bi, &m);
                lift.set_column(col, &v);
                col += 1;
            }
        }
        let x = if nf == 0 {
            DVector::zeros(self.n)
        } else {
            let al = &self.a * &lift;
            let sy = lift.tr_mul(y);
            let r0 = &al * &sy - &self.b;
            let rs = RowSpace::new(&al);
            let corr = rs.solve(&al, &DMatrix::from_column_slice(r0.len(), 1, r0.as_slice()));
            &lift * (sy - DVector::from_column_slice(corr.as_slice()))
        };
        let res = self.affine_residual(&x);
        if res > 1e-2 * tol.eq_tol * (1.0 + self.b_norm) {
            return None;
        }
        (self.min_eig(&x) >= -0.5 * tol.psd_tol).then_some(x)
    }

    /// Dykstra between the affine set and `{M ⪰ tI}` for at most `budget` iterations.
    ///
    /// Updates the certified bracket in `s`; returns the final projection gap.
    fn run(&self, t: f64, budget: usize, s: &mut Search, tol: &Tolerances, polish: bool) -> f64 {
        let mut x = self.x0.clone();
        let mut p = DVector::<f64>::zeros(self.n);
        let mut gap = f64::INFINITY;
        let mut stall_ref = f64::INFINITY;
        s.observe_affine(self, &x);
        if s.done(tol) {
            return 0.0;
        }
        for k in 1..=budget {
            s.iterations += 1;
            let z = &x + &p;
            let y = self.project_cone(&z, t);
            p = z - &y;
            let x_next = self.project_affine(&y);

            if k % 10 == 0 || k == budget {
                gap = (&x_next - &y).norm();
                s.last_gap = gap;
                s.observe_affine(self, &x_next);
                if polish && self.affine_residual(&y) <= tol.feas_tol * (1.0 + self.b_norm) && t == 0.0 {
                    s.observe_near_feasible(self, &y, tol);
                }
            }
            if k % 50 == 0 || k == budget {
                if let Some(ub) = self.certificate_bound(&(-&p)) {
                    s.hi = s.hi.min(ub);
                }
                if let Some(ub) = self.certificate_bound(&(&y - &x_next)) {
                    s.hi = s.hi.min(ub);
                }
                if s.trace_on {
                    s.log(format!(
                        "iter {} t {t:.6e} gap {gap:.6e} lo {:.6e} hi {:.6e}",
                        s.iterations, s.lo, s.hi
                    ));
                }
            }
            if polish && (k % 200 == 0 || k == budget) && s.witness.is_none() {
                if let Some(w) = self.polish(&y, tol) {
                    s.log(format!("iter {} face polish accepted", s.iterations));
                    s.observe_affine(self, &w);
                    s.witness = Some(w);
                }
            }
            x = x_next;
            if s.done(tol) || s.lo >= t.max(-tol.psd_tol) || s.hi < t {
                break;
            }
            if k % 500 == 0 {
                if gap < 1e-15 || (stall_ref.is_finite() && gap > stall_ref * (1.0 - 1e-4)) {
                    s.log(format!("iter {} stalled at gap {gap:.6e}", s.iterations));
                    if polish && s.witness.is_none() {
                        if let Some(w) = self.polish(&y, tol) {
                            s.observe_affine(self, &w);
                            s.witness = Some(w);
                        }
                    }
                    break;
                }
                stall_ref = gap;
            }
        }
        gap
    }
}

struct Search {
    lo: f64,
    hi: f64,
    best: Option<DVector<f64>>,
    witness: Option<DVector<f64>>,
    iterations: usize,
    last_gap: f64,
    trace_on: bool,
    trace: Vec<String>,
}

impl Search {
    fn new(c: &Compiled, trace_on: bool) -> Self {
        let mut s = Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            best: None,
            witness: None,
            iterations: 0,
            last_gap: f64::INFINITY,
            trace_on,
            trace: Vec::new(),
        };
        if trace_on {
            let mut line = String::new();
            let _ = write!(
                line,
                "problem vars {} rows {} rank {} blocks",
                c.n,
                c.a.nrows(),
                c.q.ncols()
            );
            for (blk, lay) in c.problem.blocks.iter().zip(&c.layout) {
                let _ = write!(line, " {}:{}/{}", blk.name, lay.r, lay.side);
            }
            s.trace.push(line);
        }
        s
    }

    fn log(&mut self, line: String) {
        if self.trace_on {
            self.trace.push(line);
        }
    }

    fn observe_affine(&mut self, c: &Compiled, x: &DVector<f64>) {
        let m = c.min_eig(x);
        if m > self.lo {
            self.lo = m;
            self.best = Some(x.clone());
        }
    }

    fn observe_near_feasible(&mut self, c: &Compiled, y: &DVector<f64>, tol: &Tolerances) {
        if self.witness.is_none() && self.lo < -tol.psd_tol {
            if let Some(w) = c.polish(y, tol) {
                self.log(format!("iter {} face polish accepted", self.iterations));
                self.observe_affine(c, &w);
                self.witness = Some(w);
            }
        }
    }

    fn done(&self, tol: &Tolerances) -> bool {
        self.witness.is_some() || self.lo >= -tol.psd_tol || self.hi < -tol.feas_tol
    }

    fn resolved(&mut self, c: &Compiled, tol: &Tolerances) -> Option<FeasibilityOutcome> {
        if self.lo >= -tol.psd_tol {
            let x = self.best.clone().expect("lower bound comes with its point");
            return Some(self.finish_feasible(c, x));
        }
        if let Some(w) = self.witness.clone() {
            return Some(self.finish_feasible(c, w));
        }
        if self.hi < -tol.feas_tol {
            return Some(FeasibilityOutcome {
                verdict: FeasVerdict::Infeasible,
                witness: None,
                margin: Some(self.hi),
                residual: self.last_gap,
                iterations: self.iterations,
                trace: std::mem::take(&mut self.trace),
            });
        }
        None
    }

    fn finish_feasible(&mut self, c: &Compiled, x: DVector<f64>) -> FeasibilityOutcome {
        let witness: Vec<ComplexMatrix> = c
            .problem
            .blocks
            .iter()
            .enumerate()
            .map(|(bi, blk)| {
                if c.layout[bi].r == 0 {
                    ComplexMatrix::zeros(blk.side, blk.side)
                } else {
                    blk.lift(&c.block_matrix(&x, bi)).hermitian_part()
                }
            })
            .collect();
        let residual = if c.n == 0 { c.b_norm } else { c.affine_residual(&x) };
        self.log(format!(
            "feasible after {} iterations, residual {residual:.3e}",
            self.iterations
        ));
        FeasibilityOutcome {
            verdict: FeasVerdict::Feasible,
            witness: Some(witness),
            margin: None,
            residual,
            iterations: self.iterations,
            trace: std::mem::take(&mut self.trace),
        }
    }
}
