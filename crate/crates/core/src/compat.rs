//! Compatibility, weak compatibility and strong incompatibility of device pairs.
//!
//! Every positive answer carries a witness that is re-validated against the
//! devices before it is returned. Pairwise compatibility uses a four-outcome
//! normal form (both / first only / second only / neither); weak compatibility
//! looks for a common total channel. Solver blocks are confined to the faces
//! forced by the devices (ranges of Choi matrices and of the deficiencies
//! `I − Φᴴ(I)`), which keeps the feasibility problems well conditioned.

use crate::devices::{
    is_part_at, kraus_from_choi, luders, maximally_mixed, CPMap, Device, Effect, Instrument,
    Observable, PartLocation, PointerMap,
};
use crate::error::{Error, Result};
use crate::feasibility::{
    encode_heisenberg_unit_constraint, encode_partial_trace_constraint, encode_sum_constraint,
    estimate_margin, solve_with, Constraint, FeasVerdict, FeasibilityProblem, LinearMap, SolverOptions, Term,
};
use crate::matkit::{self, kron, ComplexMatrix, Slot, Tolerances};
use crate::order::{
    self, commutes_with_range, cp_leq, has_rank1_deficiency,
    is_contraction_channel, is_pure, pure_pair_compatible, rank1_upper_channels_equal,
    sum_is_operation, Rank1Upper,
};

/// The three relations of the taxonomy, plus an honest "could not tell".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Compatible,
    WeaklyCompatibleOnly,
    StronglyIncompatible,
    Undecided,
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Compatible => "compatible",
            Relation::WeaklyCompatibleOnly => "weakly-compatible-only",
            Relation::StronglyIncompatible => "strongly-incompatible",
            Relation::Undecided => "undecided",
        }
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Answer of a single-relation decider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Holds,
    Fails,
    Undecided,
}

/// Constructive evidence for a positive answer.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// One instrument containing both devices.
    Common {
        instrument: Instrument,
        first: PartLocation,
        second: PartLocation,
        /// Joint observable, for pairs of effects/observables.
        joint: Option<Observable>,
    },
    /// Two instruments sharing the total channel `channel`.
    Weak {
        first: Instrument,
        second: Instrument,
        first_part: PartLocation,
        second_part: PartLocation,
        channel: CPMap,
    },
}

impl Witness {
    fn swapped(self) -> Self {
        match self {
            Witness::Common {
                instrument,
                first,
                second,
                joint,
            } => Witness::Common {
                instrument,
                first: second,
                second: first,
                joint,
            },
            Witness::Weak {
                first,
                second,
                first_part,
                second_part,
                channel,
            } => Witness::Weak {
                first: second,
                second: first,
                first_part: second_part,
                second_part: first_part,
                channel,
            },
        }
    }

    /// Independent check that the witness exhibits the relation for `(d1, d2)`.
    /// Checks the witness at [`Tolerances::for_witness`], since solver output is only
    /// accurate to `feas_tol`.
    pub fn validate(&self, d1: &Device, d2: &Device, tol: &Tolerances) -> Result<()> {
        let tol = &tol.for_witness();
        let reject = |what: &str| Err(Error::WitnessRejected(what.to_string()));
        match self {
            Witness::Common {
                instrument,
                first,
                second,
                ..
            } => {
                if !is_part_at(d1, instrument, first, tol)? {
                    return reject("first device is not a part of the witness instrument");
                }
                if !is_part_at(d2, instrument, second, tol)? {
                    return reject("second device is not a part of the witness instrument");
                }
            }
            Witness::Weak {
                first,
                second,
                first_part,
                second_part,
                channel,
            } => {
                if !is_part_at(d1, first, first_part, tol)? {
                    return reject("first device is not a part of its witness instrument");
                }
                if !is_part_at(d2, second, second_part, tol)? {
                    return reject("second device is not a part of its witness instrument");
                }
                let t1 = first.total_channel(tol);
                let t2 = second.total_channel(tol);
                if !t1.approx_eq(&t2, tol.eq_tol) || !t1.approx_eq(channel, tol.eq_tol) {
                    return reject("witness instruments have different total channels");
                }
            }
        }
        Ok(())
    }
}

/// Result of one decider.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub outcome: Outcome,
    pub witness: Option<Witness>,
    /// Name of the closed-form shortcut that settled the question, if any.
    pub fast_path: Option<&'static str>,
    /// Solver margin estimate (certified upper bound when the answer is `Fails`).
    pub margin: Option<f64>,
    pub iterations: usize,
    pub trace: Vec<String>,
}

impl Decision {
    fn fast(outcome: Outcome, witness: Option<Witness>, tag: &'static str) -> Self {
        Self {
            outcome,
            witness,
            fast_path: Some(tag),
            margin: None,
            iterations: 0,
            trace: Vec::new(),
        }
    }

    fn swapped(mut self) -> Self {
        self.witness = self.witness.map(Witness::swapped);
        self
    }
}

/// Final answer of [`classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub relation: Relation,
    pub witness: Option<Witness>,
    pub fast_path: Option<&'static str>,
    pub margin: Option<f64>,
    pub iterations: usize,
    pub trace: Vec<String>,
}

/// Knobs shared by all deciders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideOptions {
    pub tol: Tolerances,
    pub max_iter: usize,
    pub fast_paths: bool,
    pub trace: bool,
}

impl Default for DecideOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            max_iter: 50_000,
            fast_paths: true,
            trace: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Faces and solver plumbing

fn range(m: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let thr = tol.psd_tol.max(1e-13) * (1.0 + matkit::herm_op_norm(m));
    matkit::support_basis(m, thr)
}

fn intersect(bases: &[ComplexMatrix], n: usize) -> ComplexMatrix {
    if bases.iter().any(|b| b.cols() == 0) {
        return ComplexMatrix::zeros(n, 0);
    }
    if bases.len() == 1 {
        return bases[0].clone();
    }
    let mut sum = ComplexMatrix::zeros(n, n);
    for b in bases {
        sum += &b.matmul(&b.adjoint());
    }
    matkit::support_basis(&sum, bases.len() as f64 - 1e-7)
}

/// Input-space subspace `S` as the Choi-space subspace `S ⊗ C^k`.
fn lift(b: &ComplexMatrix, k: usize) -> ComplexMatrix {
    kron(b, &ComplexMatrix::identity(k))
}

/// Choi-space face allowed by an upper bound `F` on the Heisenberg unit.
fn unit_face(f: &ComplexMatrix, k: usize, tol: &Tolerances) -> ComplexMatrix {
    lift(&range(&f.transpose(), tol), k)
}

struct Solved {
    outcome: Outcome,
    blocks: Option<Vec<ComplexMatrix>>,
    margin: Option<f64>,
    iterations: usize,
    trace: Vec<String>,
}

fn run(p: &FeasibilityProblem, opts: &DecideOptions) -> Result<Solved> {
    let sopts = SolverOptions {
        max_iter: opts.max_iter,
        trace: opts.trace,
    };
    match solve_with(p, &opts.tol, &sopts) {
        Ok(o) => Ok(Solved {
            outcome: match o.verdict {
                FeasVerdict::Feasible => Outcome::Holds,
                FeasVerdict::Infeasible => Outcome::Fails,
                FeasVerdict::Undecided => Outcome::Undecided,
            },
            blocks: o.witness,
            margin: o.margin,
            iterations: o.iterations,
            trace: o.trace,
        }),
        Err(Error::InconsistentAffine { residual }) => {
            // Facial reduction already rules out a solution; bound the margin of the
            // unreduced problem so the verdict still carries a number.
            let margin = estimate_margin(&p.without_supports(), &opts.tol, opts.max_iter)
                .ok()
                .map(|b| b.upper);
            Ok(Solved {
                outcome: Outcome::Fails,
                blocks: None,
                margin,
                iterations: 0,
                trace: vec![format!("affine constraints inconsistent on the reduced faces (residual {residual:.3e})")],
            })
        }
        Err(e) => Err(e),
    }
}

fn conclude(
    solved: Solved,
    d1: &Device,
    d2: &Device,
    tol: &Tolerances,
    build: impl FnOnce(Vec<ComplexMatrix>, &Tolerances) -> Result<Witness>,
) -> Result<Decision> {
    let witness = match (solved.outcome, solved.blocks) {
        (Outcome::Holds, Some(blocks)) => {
            let w = build(blocks, &tol.for_witness()).map_err(|e| Error::WitnessRejected(e.to_string()))?;
            w.validate(d1, d2, tol)?;
            Some(w)
        }
        _ => None,
    };
    Ok(Decision {
        outcome: solved.outcome,
        witness,
        fast_path: None,
        margin: solved.margin,
        iterations: solved.iterations,
        trace: solved.trace,
    })
}

fn labelled(labels: &[&str], maps: Vec<CPMap>, tol: &Tolerances) -> Result<Instrument> {
    Instrument::new(
        labels.iter().map(|s| s.to_string()).zip(maps).collect(),
        tol,
    )
}

fn subset(labels: &[&str]) -> PartLocation {
    PartLocation::Subset(labels.iter().map(|s| s.to_string()).collect())
}

fn choi_map(d: usize, k: usize, j: ComplexMatrix, tol: &Tolerances) -> Result<CPMap> {
    CPMap::from_choi(d, k, j, tol)
}

fn check_same_input(d1: usize, d2: usize) -> Result<()> {
    if d1 != d2 {
        return Err(Error::DimensionMismatch {
            context: "device pair input",
            expected: d1,
            found: d2,
        });
    }
    Ok(())
}

/// Effect list of an effect as the binary observable `{"1": E, "0": I − E}`.
fn binary(e: &Effect) -> Vec<(String, ComplexMatrix)> {
    vec![
        ("1".into(), e.matrix().clone()),
        ("0".into(), e.complement().matrix().clone()),
    ]
}

fn effects_of(a: &Observable) -> Vec<(String, ComplexMatrix)> {
    a.iter()
        .map(|(l, e)| (l.to_string(), e.matrix().clone()))
        .collect()
}

/// `ρ ↦ tr(ρ A(x)) η` for each outcome, with `η` maximally mixed on `d`.
fn measure_prepare_instrument(effects: &[(String, ComplexMatrix)], tol: &Tolerances) -> Result<Instrument> {
    let d = effects[0].1.rows();
    let eta = maximally_mixed(d);
    Instrument::new(
        effects
            .iter()
            .map(|(l, e)| (l.clone(), CPMap::measure_prepare(e, &eta, tol)))
            .collect(),
        tol,
    )
}

fn is_projection(m: &ComplexMatrix, tol: &Tolerances) -> bool {
    m.matmul(m).approx_eq(m, tol.eq_tol.max(tol.psd_tol) * 10.0)
}

// ---------------------------------------------------------------------------
// Effects and observables

/// Part locations inside a joint observable over `(x, y)` outcome pairs.
enum Side<'a> {
    Effect,
    Observable(&'a [(String, ComplexMatrix)]),
}

fn joint_label(a: &str, b: &str, effects_only: bool) -> String {
    if effects_only {
        format!("{a}{b}")
    } else {
        format!("{a},{b}")
    }
}

fn joint_parts(
    a: &[(String, ComplexMatrix)],
    b: &[(String, ComplexMatrix)],
    side_a: &Side,
    side_b: &Side,
    effects_only: bool,
) -> (PartLocation, PartLocation) {
    let mut labels = Vec::new();
    for (x, _) in a {
        for (y, _) in b {
            labels.push((joint_label(x, y, effects_only), x.clone(), y.clone()));
        }
    }
    let loc = |side: &Side, first: bool| match side {
        Side::Effect => PartLocation::Subset(
            labels
                .iter()
                .filter(|(_, x, y)| if first { x == "1" } else { y == "1" })
                .map(|(l, _, _)| l.clone())
                .collect(),
        ),
        Side::Observable(effects) => PartLocation::Pointer(
            PointerMap::new(
                labels
                    .iter()
                    .map(|(l, x, y)| (l.clone(), if first { x.clone() } else { y.clone() }))
                    .collect(),
                effects.iter().map(|(l, _)| l.clone()).collect(),
            )
            .expect("labels built from the observables"),
        ),
    };
    (loc(side_a, true), loc(side_b, false))
}

fn joint_witness(
    a: &[(String, ComplexMatrix)],
    b: &[(String, ComplexMatrix)],
    g: Vec<ComplexMatrix>,
    side_a: &Side,
    side_b: &Side,
    effects_only: bool,
    tol: &Tolerances,
) -> Result<Witness> {
    let mut entries = Vec::with_capacity(g.len());
    let mut it = g.into_iter();
    for (x, _) in a {
        for (y, _) in b {
            entries.push((joint_label(x, y, effects_only), it.next().expect("one block per pair")));
        }
    }
    let joint = Observable::new(entries.clone(), tol)?;
    let instrument = measure_prepare_instrument(&entries, tol)?;
    let (first, second) = joint_parts(a, b, side_a, side_b, effects_only);
    Ok(Witness::Common {
        instrument,
        first,
        second,
        joint: Some(joint),
    })
}

fn joint_decision(
    a: &[(String, ComplexMatrix)],
    b: &[(String, ComplexMatrix)],
    side_a: Side,
    side_b: Side,
    d1: &Device,
    d2: &Device,
    opts: &DecideOptions,
) -> Result<Decision> {
    let tol = &opts.tol;
    let effects_only = matches!(side_a, Side::Effect) && matches!(side_b, Side::Effect);
    let d = a[0].1.rows();
    check_same_input(d, b[0].1.rows())?;

    if opts.fast_paths {
        let commute = a.iter().all(|(_, x)| {
            b.iter().all(|(_, y)| {
                x.commutator(y).frob_norm() <= tol.eq_tol * (1.0 + x.frob_norm() * y.frob_norm())
            })
        });
        if commute {
            let g = a
                .iter()
                .flat_map(|(_, x)| b.iter().map(move |(_, y)| x.matmul(y).hermitian_part()))
                .collect();
            let w = joint_witness(a, b, g, &side_a, &side_b, effects_only, tol)?;
            w.validate(d1, d2, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "commuting-effects"));
        }
        if effects_only {
            let (e1, e2) = (&a[0].1, &b[0].1);
            if order::effects_sum_below_identity(e1, e2, tol) {
                let id = ComplexMatrix::identity(d);
                let g = vec![
                    ComplexMatrix::zeros(d, d),
                    e1.clone(),
                    e2.clone(),
                    &(&id - e1) - e2,
                ];
                let w = joint_witness(a, b, g, &side_a, &side_b, effects_only, tol)?;
                w.validate(d1, d2, tol)?;
                return Ok(Decision::fast(Outcome::Holds, Some(w), "sum-below-identity"));
            }
        }
        // A projection among either family must commute with every effect of the other.
        let blocked = a.iter().any(|(_, x)| {
            b.iter().any(|(_, y)| {
                (is_projection(x, tol) || is_projection(y, tol))
                    && x.commutator(y).frob_norm() > tol.eq_tol * (1.0 + x.frob_norm() * y.frob_norm())
            })
        });
        if blocked {
            return Ok(Decision::fast(Outcome::Fails, None, "projection-commutation"));
        }
    }

    let mut p = FeasibilityProblem::new();
    let ra: Vec<ComplexMatrix> = a.iter().map(|(_, m)| range(m, tol)).collect();
    let rb: Vec<ComplexMatrix> = b.iter().map(|(_, m)| range(m, tol)).collect();
    let mut ids = Vec::new();
    for (i, (x, _)) in a.iter().enumerate() {
        for (j, (y, _)) in b.iter().enumerate() {
            let face = intersect(&[ra[i].clone(), rb[j].clone()], d);
            ids.push(p.add_block_on(&joint_label(x, y, effects_only), face)?);
        }
    }
    for (i, (_, m)) in a.iter().enumerate() {
        let row: Vec<_> = (0..b.len()).map(|j| ids[i * b.len() + j]).collect();
        p.add_constraint(encode_sum_constraint(&row, m))?;
    }
    for (j, (_, m)) in b.iter().enumerate() {
        let col: Vec<_> = (0..a.len()).map(|i| ids[i * b.len() + j]).collect();
        p.add_constraint(encode_sum_constraint(&col, m))?;
    }
    let solved = run(&p, opts)?;
    conclude(solved, d1, d2, tol, |g, tol| {
        joint_witness(a, b, g, &side_a, &side_b, effects_only, tol)
    })
}

/// Coexistence of two effects; the witness carries `G = {G₁₁, G₁₀, G₀₁, G₀₀}`.
pub fn coexistent_effects(e1: &Effect, e2: &Effect, opts: &DecideOptions) -> Result<Decision> {
    let (a, b) = (binary(e1), binary(e2));
    joint_decision(
        &a,
        &b,
        Side::Effect,
        Side::Effect,
        &Device::Effect(e1.clone()),
        &Device::Effect(e2.clone()),
        opts,
    )
}

/// Joint measurability; the witness carries `G(x, y)` with outcome labels `"x,y"`.
pub fn jointly_measurable(a1: &Observable, a2: &Observable, opts: &DecideOptions) -> Result<Decision> {
    let (a, b) = (effects_of(a1), effects_of(a2));
    joint_decision(
        &a,
        &b,
        Side::Observable(&a),
        Side::Observable(&b),
        &Device::Observable(a1.clone()),
        &Device::Observable(a2.clone()),
        opts,
    )
}

/// Coexistence of an effect with an observable.
pub fn effect_observable_compatible(e: &Effect, a: &Observable, opts: &DecideOptions) -> Result<Decision> {
    let (x, y) = (binary(e), effects_of(a));
    joint_decision(
        &x,
        &y,
        Side::Effect,
        Side::Observable(&y),
        &Device::Effect(e.clone()),
        &Device::Observable(a.clone()),
        opts,
    )
}

// ---------------------------------------------------------------------------
// Operations

/// Operation–operation compatibility in the four-outcome normal form.
pub fn op_op_compatible(f1: &CPMap, f2: &CPMap, opts: &DecideOptions) -> Result<Decision> {
    f1.same_dims(f2)?;
    let tol = &opts.tol;
    let (d, k) = f1.dims();
    let dev1 = Device::Operation(f1.clone());
    let dev2 = Device::Operation(f2.clone());

    if opts.fast_paths {
        if let Some(w) = comparable_witness(f1, f2, tol)? {
            w.validate(&dev1, &dev2, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "comparable"));
        }
        if sum_is_operation(f1, f2, tol)? {
            let w = four_outcome_witness(
                CPMap::null(d, k),
                f1.clone(),
                f2.clone(),
                &(&f1.deficiency() - &f2.unit_effect_matrix()),
                tol,
            )?;
            w.validate(&dev1, &dev2, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "sum-below-identity"));
        }
        if is_pure(f1, tol) && is_pure(f2, tol) && !pure_pair_compatible(f1, f2, tol)? {
            return Ok(Decision::fast(Outcome::Fails, None, "pure-pair"));
        }
    }

    let n = d * k;
    let (j1, j2) = (f1.choi(), f2.choi());
    let (r1, r2) = (range(j1, tol), range(j2, tol));
    let (c1, c2) = (unit_face(&f1.deficiency(), k, tol), unit_face(&f2.deficiency(), k, tol));
    let mut p = FeasibilityProblem::new();
    let b11 = p.add_block_on("11", intersect(&[r1.clone(), r2.clone()], n))?;
    let b10 = p.add_block_on("10", intersect(&[r1, c2.clone()], n))?;
    let b01 = p.add_block_on("01", intersect(&[r2, c1.clone()], n))?;
    let b00 = p.add_block_on("00", intersect(&[c1, c2], n))?;
    p.add_constraint(encode_sum_constraint(&[b11, b10], j1))?;
    p.add_constraint(encode_sum_constraint(&[b11, b01], j2))?;
    p.add_constraint(encode_partial_trace_constraint(
        &[b11, b10, b01, b00],
        (d, k),
        Slot::First,
        &ComplexMatrix::identity(d),
    ))?;
    let solved = run(&p, opts)?;
    conclude(solved, &dev1, &dev2, tol, |b, tol| {
        let maps = b
            .into_iter()
            .map(|j| choi_map(d, k, j, tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(Witness::Common {
            instrument: labelled(&["11", "10", "01", "00"], maps, tol)?,
            first: subset(&["11", "10"]),
            second: subset(&["11", "01"]),
            joint: None,
        })
    })
}

/// Instrument `{11: Ψ₁₁, 10: Ψ₁₀, 01: Ψ₀₁, 00: ρ ↦ tr(ρ R) η}` with `η` maximally mixed.
fn four_outcome_witness(
    p11: CPMap,
    p10: CPMap,
    p01: CPMap,
    rest: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<Witness> {
    let eta = maximally_mixed(p11.dim_out());
    let p00 = CPMap::measure_prepare(&rest.hermitian_part(), &eta, tol);
    Ok(Witness::Common {
        instrument: labelled(&["11", "10", "01", "00"], vec![p11, p10, p01, p00], tol)?,
        first: subset(&["11", "10"]),
        second: subset(&["11", "01"]),
        joint: None,
    })
}

fn comparable_witness(f1: &CPMap, f2: &CPMap, tol: &Tolerances) -> Result<Option<Witness>> {
    let (d, k) = f1.dims();
    if cp_leq(f2, f1, tol)? {
        let w = four_outcome_witness(
            f2.clone(),
            f1.minus(f2, tol)?,
            CPMap::null(d, k),
            &f1.deficiency(),
            tol,
        )?;
        return Ok(Some(w));
    }
    if cp_leq(f1, f2, tol)? {
        let w = four_outcome_witness(
            f1.clone(),
            CPMap::null(d, k),
            f2.minus(f1, tol)?,
            &f2.deficiency(),
            tol,
        )?;
        return Ok(Some(w));
    }
    Ok(None)
}

fn op_ob_labels(x: &str, inside: bool, binary_form: bool) -> String {
    match (binary_form, inside) {
        (true, true) => format!("1{x}"),
        (true, false) => format!("0{x}"),
        (false, true) => format!("{x}/in"),
        (false, false) => format!("{x}/out"),
    }
}

/// Operation against an observable given as labelled effects.
///
/// Blocks `Ψ_{x,in}` sum to the operation; `Ψ_{x,in} + Ψ_{x,out}` has unit `A(x)`.
/// For a binary effect observable the labels become `11, 10, 01, 00`.
fn op_ob_decision(
    phi: &CPMap,
    effects: &[(String, ComplexMatrix)],
    dev_obs: &Device,
    binary_form: bool,
    opts: &DecideOptions,
) -> Result<Decision> {
    let tol = &opts.tol;
    let (d, k) = phi.dims();
    check_same_input(d, effects[0].1.rows())?;
    let dev_op = Device::Operation(phi.clone());
    // In binary form the effect's own outcome "1" pairs with the operation's "1".
    let label = |x: &str, inside: bool| {
        if binary_form {
            let first = if inside { "1" } else { "0" };
            format!("{first}{x}")
        } else {
            op_ob_labels(x, inside, false)
        }
    };
    let locations = |labels_in: Vec<String>| -> (PartLocation, PartLocation) {
        let op_part = PartLocation::Subset(labels_in);
        let obs_part = if binary_form {
            PartLocation::Subset(vec![label("1", true), label("1", false)])
        } else {
            PartLocation::Pointer(
                PointerMap::new(
                    effects
                        .iter()
                        .flat_map(|(x, _)| {
                            [(label(x, true), x.clone()), (label(x, false), x.clone())]
                        })
                        .collect(),
                    effects.iter().map(|(x, _)| x.clone()).collect(),
                )
                .expect("labels built from the observable"),
            )
        };
        (op_part, obs_part)
    };
    let build = |ins_maps: Vec<CPMap>, out_maps: Vec<CPMap>| -> Result<Witness> {
        let mut entries = Vec::new();
        let mut labels_in = Vec::new();
        for ((x, _), (mi, mo)) in effects.iter().zip(ins_maps.into_iter().zip(out_maps)) {
            labels_in.push(label(x, true));
            entries.push((label(x, true), mi));
            entries.push((label(x, false), mo));
        }
        let instrument = Instrument::new(entries, tol)?;
        let (first, second) = locations(labels_in);
        Ok(Witness::Common {
            instrument,
            first,
            second,
            joint: None,
        })
    };

    if opts.fast_paths {
        let commute = effects.iter().all(|(_, a)| {
            Effect::new(a.clone(), tol)
                .and_then(|e| commutes_with_range(phi, &e, tol))
                .unwrap_or(false)
        });
        if commute {
            let eta = maximally_mixed(k);
            let f = phi.deficiency();
            let mut ins = Vec::new();
            let mut outs = Vec::new();
            for (_, a) in effects {
                let e = Effect::new(a.clone(), tol)?;
                ins.push(luders(&e, tol)?.then(phi, tol)?);
                let root = matkit::mat_sqrt(a, tol.psd_tol)?;
                outs.push(CPMap::measure_prepare(&root.sandwich(&f).hermitian_part(), &eta, tol));
            }
            let w = build(ins, outs)?;
            w.validate(&dev_op, dev_obs, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "commutes-with-range"));
        }
        let blocked = effects.iter().any(|(_, a)| {
            is_projection(a, tol)
                && !Effect::new(a.clone(), tol)
                    .and_then(|e| commutes_with_range(phi, &e, tol))
                    .unwrap_or(true)
        });
        if blocked {
            return Ok(Decision::fast(Outcome::Fails, None, "projection-range"));
        }
        if binary_form && order::effects_sum_below_identity(&phi.unit_effect_matrix(), &effects[0].1, tol) {
            let eta = maximally_mixed(k);
            let e = &effects[0].1;
            let rest = &phi.deficiency() - e;
            let ins = vec![CPMap::null(d, k), phi.clone()];
            let outs = vec![
                CPMap::measure_prepare(e, &eta, tol),
                CPMap::measure_prepare(&rest.hermitian_part(), &eta, tol),
            ];
            let w = build(ins, outs)?;
            w.validate(&dev_op, dev_obs, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "sum-below-identity"));
        }
    }

    let n = d * k;
    let j = phi.choi();
    let rj = range(j, tol);
    let cf = unit_face(&phi.deficiency(), k, tol);
    let mut p = FeasibilityProblem::new();
    let mut ins = Vec::new();
    let mut outs = Vec::new();
    for (x, a) in effects {
        let ca = unit_face(a, k, tol);
        ins.push(p.add_block_on(&label(x, true), intersect(&[rj.clone(), ca.clone()], n))?);
        outs.push(p.add_block_on(&label(x, false), intersect(&[cf.clone(), ca], n))?);
    }
    p.add_constraint(encode_sum_constraint(&ins, j))?;
    for (i, (_, a)) in effects.iter().enumerate() {
        p.add_constraint(encode_heisenberg_unit_constraint(&[ins[i], outs[i]], d, k, a))?;
    }
    let solved = run(&p, opts)?;
    conclude(solved, &dev_op, dev_obs, tol, |blocks, tol| {
        let mut maps = blocks.into_iter().map(|b| choi_map(d, k, b, tol));
        let mut mi = Vec::new();
        let mut mo = Vec::new();
        for _ in effects {
            mi.push(maps.next().expect("in block")?);
            mo.push(maps.next().expect("out block")?);
        }
        build(mi, mo)
    })
}

/// Operation–effect compatibility; outcomes `11, 10, 01, 00` as (operation, effect) membership.
pub fn op_ef_compatible(f: &CPMap, e: &Effect, opts: &DecideOptions) -> Result<Decision> {
    op_ob_decision(f, &binary(e), &Device::Effect(e.clone()), true, opts)
}

/// Operation–observable compatibility.
pub fn op_ob_compatible(f: &CPMap, a: &Observable, opts: &DecideOptions) -> Result<Decision> {
    op_ob_decision(f, &effects_of(a), &Device::Observable(a.clone()), false, opts)
}

// ---------------------------------------------------------------------------
// Channels

/// Channel–operation: compatible (equivalently weakly compatible) iff `Φ ≤ Λ`.
pub fn ch_op_compatible(lam: &CPMap, f: &CPMap, opts: &DecideOptions) -> Result<Decision> {
    let tol = &opts.tol;
    lam.require_channel(tol)?;
    lam.same_dims(f)?;
    if !cp_leq(f, lam, tol)? {
        return Ok(Decision::fast(Outcome::Fails, None, "cp-order"));
    }
    let w = Witness::Common {
        instrument: labelled(&["1", "0"], vec![f.clone(), lam.minus(f, tol)?], tol)?,
        first: subset(&["1", "0"]),
        second: subset(&["1"]),
        joint: None,
    };
    w.validate(&Device::Channel(lam.clone()), &Device::Operation(f.clone()), tol)?;
    Ok(Decision::fast(Outcome::Holds, Some(w), "cp-order"))
}

/// Channel–channel: compatible iff equal.
pub fn ch_ch_compatible(l1: &CPMap, l2: &CPMap, opts: &DecideOptions) -> Result<Decision> {
    let tol = &opts.tol;
    l1.require_channel(tol)?;
    l2.require_channel(tol)?;
    l1.same_dims(l2)?;
    if !l1.approx_eq(l2, tol.eq_tol) {
        return Ok(Decision::fast(Outcome::Fails, None, "channel-equality"));
    }
    let w = Witness::Common {
        instrument: labelled(&["0"], vec![l1.clone()], tol)?,
        first: subset(&["0"]),
        second: subset(&["0"]),
        joint: None,
    };
    w.validate(&Device::Channel(l1.clone()), &Device::Channel(l2.clone()), tol)?;
    Ok(Decision::fast(Outcome::Holds, Some(w), "channel-equality"))
}

/// Channel–instrument: compatible iff the channel is the instrument's total.
pub fn ch_instrument_compatible(lam: &CPMap, ins: &Instrument, opts: &DecideOptions) -> Result<Decision> {
    let tol = &opts.tol;
    lam.require_channel(tol)?;
    lam.same_dims(&ins.total_channel(tol))?;
    if !lam.approx_eq(&ins.total_channel(tol), tol.eq_tol) {
        return Ok(Decision::fast(Outcome::Fails, None, "total-channel"));
    }
    let w = Witness::Common {
        instrument: ins.clone(),
        first: PartLocation::Subset(ins.outcomes().to_vec()),
        second: PartLocation::Pointer(PointerMap::identity(ins.outcomes())),
        joint: None,
    };
    w.validate(&Device::Channel(lam.clone()), &Device::Instrument(ins.clone()), tol)?;
    Ok(Decision::fast(Outcome::Holds, Some(w), "total-channel"))
}

fn ch_ob_decision(
    lam: &CPMap,
    effects: &[(String, ComplexMatrix)],
    dev_obs: &Device,
    effect_form: bool,
    opts: &DecideOptions,
) -> Result<Decision> {
    let tol = &opts.tol;
    lam.require_channel(tol)?;
    let (d, k) = lam.dims();
    check_same_input(d, effects[0].1.rows())?;
    let dev_ch = Device::Channel(lam.clone());
    let labels: Vec<String> = effects.iter().map(|(x, _)| x.clone()).collect();
    let obs_part = if effect_form {
        subset(&["1"])
    } else {
        PartLocation::Pointer(PointerMap::identity(&labels))
    };
    let build = |maps: Vec<CPMap>| -> Result<Witness> {
        Ok(Witness::Common {
            instrument: Instrument::new(labels.iter().cloned().zip(maps).collect(), tol)?,
            first: PartLocation::Subset(labels.clone()),
            second: obs_part.clone(),
            joint: None,
        })
    };

    if opts.fast_paths {
        if let Some(eta) = is_contraction_channel(lam, tol) {
            let maps = effects
                .iter()
                .map(|(_, a)| CPMap::measure_prepare(a, &eta, tol))
                .collect();
            let w = build(maps)?;
            w.validate(&dev_ch, dev_obs, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "contraction-channel"));
        }
        let trivial: Option<Vec<f64>> = effects
            .iter()
            .map(|(_, a)| {
                let s = a.trace().re / d as f64;
                a.approx_eq(&ComplexMatrix::identity(d).scale_real(s), tol.eq_tol)
                    .then_some(s)
            })
            .collect();
        if let Some(p) = trivial {
            let maps = p.iter().map(|&w| lam.scaled(w, tol)).collect();
            let w = build(maps)?;
            w.validate(&dev_ch, dev_obs, tol)?;
            return Ok(Decision::fast(Outcome::Holds, Some(w), "trivial-observable"));
        }
    }

    let n = d * k;
    let j = lam.choi();
    let rj = range(j, tol);
    let mut p = FeasibilityProblem::new();
    let mut ids = Vec::new();
    for (x, a) in effects {
        ids.push(p.add_block_on(x, intersect(&[rj.clone(), unit_face(a, k, tol)], n))?);
    }
    p.add_constraint(encode_sum_constraint(&ids, j))?;
    for (i, (_, a)) in effects.iter().enumerate() {
        p.add_constraint(encode_heisenberg_unit_constraint(&[ids[i]], d, k, a))?;
    }
    let solved = run(&p, opts)?;
    conclude(solved, &dev_ch, dev_obs, tol, |blocks, tol| {
        let maps = blocks
            .into_iter()
            .map(|b| choi_map(d, k, b, tol))
            .collect::<Result<Vec<_>>>()?;
        build(maps)
    })
}

/// Channel–observable: some instrument with total `Λ` induces `A`.
pub fn ch_ob_compatible(lam: &CPMap, a: &Observable, opts: &DecideOptions) -> Result<Decision> {
    ch_ob_decision(lam, &effects_of(a), &Device::Observable(a.clone()), false, opts)
}

/// Channel–effect, via the binary observable of the effect.
pub fn ch_ef_compatible(lam: &CPMap, e: &Effect, opts: &DecideOptions) -> Result<Decision> {
    ch_ob_decision(lam, &binary(e), &Device::Effect(e.clone()), true, opts)
}

// ---------------------------------------------------------------------------
// Weak compatibility

/// Two instruments `{1: Φᵢ, 0: Λ − Φᵢ}` sharing `Λ`.
fn upper_bound_witness(f1: &CPMap, f2: &CPMap, lam: &CPMap, tol: &Tolerances) -> Result<Witness> {
    Ok(Witness::Weak {
        first: labelled(&["1", "0"], vec![f1.clone(), lam.minus(f1, tol)?], tol)?,
        second: labelled(&["1", "0"], vec![f2.clone(), lam.minus(f2, tol)?], tol)?,
        first_part: subset(&["1"]),
        second_part: subset(&["1"]),
        channel: lam.clone(),
    })
}

/// Common upper channel `Λ ≥ Φ₁, Φ₂`.
pub fn weakly_compatible_ops(f1: &CPMap, f2: &CPMap, opts: &DecideOptions) -> Result<Decision> {
    f1.same_dims(f2)?;
    let tol = &opts.tol;
    let (d, k) = f1.dims();
    let dev1 = Device::Operation(f1.clone());
    let dev2 = Device::Operation(f2.clone());

    if opts.fast_paths {
        for (chan, other) in [(f1, f2), (f2, f1)] {
            if chan.is_channel() {
                if !cp_leq(other, chan, tol)? {
                    return Ok(Decision::fast(Outcome::Fails, None, "channel-member"));
                }
                let w = upper_bound_witness(f1, f2, chan, tol)?;
                w.validate(&dev1, &dev2, tol)?;
                return Ok(Decision::fast(Outcome::Holds, Some(w), "channel-member"));
            }
        }
        if has_rank1_deficiency(f1, tol) && has_rank1_deficiency(f2, tol) {
            return match rank1_upper_channels_equal(f1, f2, tol)? {
                Rank1Upper::Common { channel, .. } => {
                    let w = upper_bound_witness(f1, f2, &channel, tol)?;
                    w.validate(&dev1, &dev2, tol)?;
                    Ok(Decision::fast(Outcome::Holds, Some(w), "rank1-family"))
                }
                _ => Ok(Decision::fast(Outcome::Fails, None, "rank1-family")),
            };
        }
    }

    let mut p = FeasibilityProblem::new();
    let lam = p.add_block("lambda", d * k);
    let g1 = p.add_block_on("lambda-phi1", unit_face(&f1.deficiency(), k, tol))?;
    let g2 = p.add_block_on("lambda-phi2", unit_face(&f2.deficiency(), k, tol))?;
    p.add_constraint(Constraint::new(
        vec![
            Term::new(lam, 1.0, LinearMap::Identity),
            Term::new(g1, -1.0, LinearMap::Identity),
        ],
        f1.choi().clone(),
    ))?;
    p.add_constraint(Constraint::new(
        vec![
            Term::new(lam, 1.0, LinearMap::Identity),
            Term::new(g2, -1.0, LinearMap::Identity),
        ],
        f2.choi().clone(),
    ))?;
    p.add_constraint(encode_partial_trace_constraint(
        &[lam],
        (d, k),
        Slot::First,
        &ComplexMatrix::identity(d),
    ))?;
    let solved = run(&p, opts)?;
    conclude(solved, &dev1, &dev2, tol, |b, tol| {
        let channel = CPMap::channel_from_choi(d, k, b[0].clone(), tol)?;
        Ok(Witness::Weak {
            first: labelled(&["1", "0"], vec![f1.clone(), choi_map(d, k, b[1].clone(), tol)?], tol)?,
            second: labelled(&["1", "0"], vec![f2.clone(), choi_map(d, k, b[2].clone(), tol)?], tol)?,
            first_part: subset(&["1"]),
            second_part: subset(&["1"]),
            channel,
        })
    })
}

fn weak_op_ob_decision(
    phi: &CPMap,
    effects: &[(String, ComplexMatrix)],
    dev_obs: &Device,
    effect_form: bool,
    opts: &DecideOptions,
) -> Result<Decision> {
    let tol = &opts.tol;
    let (d, k) = phi.dims();
    check_same_input(d, effects[0].1.rows())?;
    let dev_op = Device::Operation(phi.clone());
    let labels: Vec<String> = effects.iter().map(|(x, _)| x.clone()).collect();
    let obs_part = if effect_form {
        subset(&["1"])
    } else {
        PartLocation::Pointer(PointerMap::identity(&labels))
    };

    if opts.fast_paths && phi.is_channel() {
        let inner = ch_ob_decision(phi, effects, dev_obs, effect_form, opts)?;
        let witness = match inner.witness {
            Some(Witness::Common { instrument, .. }) => {
                let w = Witness::Weak {
                    first: labelled(&["1"], vec![phi.clone()], tol)?,
                    second: instrument,
                    first_part: subset(&["1"]),
                    second_part: obs_part,
                    channel: phi.clone(),
                };
                w.validate(&dev_op, dev_obs, tol)?;
                Some(w)
            }
            _ => None,
        };
        return Ok(Decision {
            witness,
            fast_path: Some("channel-member"),
            ..inner
        });
    }

    let n = d * k;
    let mut p = FeasibilityProblem::new();
    let lam = p.add_block("lambda", n);
    let gap = p.add_block_on("lambda-phi", unit_face(&phi.deficiency(), k, tol))?;
    let mut ids = Vec::new();
    for (x, a) in effects {
        ids.push(p.add_block_on(x, unit_face(a, k, tol))?);
    }
    p.add_constraint(Constraint::new(
        vec![
            Term::new(lam, 1.0, LinearMap::Identity),
            Term::new(gap, -1.0, LinearMap::Identity),
        ],
        phi.choi().clone(),
    ))?;
    let mut terms: Vec<Term> = ids.iter().map(|&b| Term::new(b, 1.0, LinearMap::Identity)).collect();
    terms.push(Term::new(lam, -1.0, LinearMap::Identity));
    p.add_constraint(Constraint::new(terms, ComplexMatrix::zeros(n, n)))?;
    for (i, (_, a)) in effects.iter().enumerate() {
        p.add_constraint(encode_heisenberg_unit_constraint(&[ids[i]], d, k, a))?;
    }
    let solved = run(&p, opts)?;
    conclude(solved, &dev_op, dev_obs, tol, |b, tol| {
        let channel = CPMap::channel_from_choi(d, k, b[0].clone(), tol)?;
        let first = labelled(&["1", "0"], vec![phi.clone(), choi_map(d, k, b[1].clone(), tol)?], tol)?;
        let maps = b[2..]
            .iter()
            .map(|m| choi_map(d, k, m.clone(), tol))
            .collect::<Result<Vec<_>>>()?;
        let second = Instrument::new(labels.iter().cloned().zip(maps).collect(), tol)?;
        Ok(Witness::Weak {
            first,
            second,
            first_part: subset(&["1"]),
            second_part: obs_part.clone(),
            channel,
        })
    })
}

/// Operation–effect: a channel above `Φ` that also splits as an instrument inducing `E`.
pub fn weakly_compatible_op_ef(f: &CPMap, e: &Effect, opts: &DecideOptions) -> Result<Decision> {
    weak_op_ob_decision(f, &binary(e), &Device::Effect(e.clone()), true, opts)
}

pub fn weakly_compatible_op_ob(f: &CPMap, a: &Observable, opts: &DecideOptions) -> Result<Decision> {
    weak_op_ob_decision(f, &effects_of(a), &Device::Observable(a.clone()), false, opts)
}

fn contraction_pair(
    a: &[(String, ComplexMatrix)],
    b: &[(String, ComplexMatrix)],
    a_part: PartLocation,
    b_part: PartLocation,
    d1: &Device,
    d2: &Device,
    tol: &Tolerances,
) -> Result<Decision> {
    let d = a[0].1.rows();
    check_same_input(d, b[0].1.rows())?;
    let first = measure_prepare_instrument(a, tol)?;
    let second = measure_prepare_instrument(b, tol)?;
    let channel = first.total_channel(tol);
    let w = Witness::Weak {
        first,
        second,
        first_part: a_part,
        second_part: b_part,
        channel,
    };
    w.validate(d1, d2, tol)?;
    Ok(Decision::fast(Outcome::Holds, Some(w), "contraction-witness"))
}

/// Always holds: both effects are parts of measure-and-prepare instruments with the same contraction channel.
pub fn weakly_compatible_ef_ef(e1: &Effect, e2: &Effect, opts: &DecideOptions) -> Result<Decision> {
    contraction_pair(
        &binary(e1),
        &binary(e2),
        subset(&["1"]),
        subset(&["1"]),
        &Device::Effect(e1.clone()),
        &Device::Effect(e2.clone()),
        &opts.tol,
    )
}

/// Always holds, as for effects.
pub fn weakly_compatible_obs_obs(a1: &Observable, a2: &Observable, opts: &DecideOptions) -> Result<Decision> {
    contraction_pair(
        &effects_of(a1),
        &effects_of(a2),
        PartLocation::Pointer(PointerMap::identity(a1.outcomes())),
        PartLocation::Pointer(PointerMap::identity(a2.outcomes())),
        &Device::Observable(a1.clone()),
        &Device::Observable(a2.clone()),
        &opts.tol,
    )
}

fn weakly_compatible_ef_ob(e: &Effect, a: &Observable, opts: &DecideOptions) -> Result<Decision> {
    contraction_pair(
        &binary(e),
        &effects_of(a),
        subset(&["1"]),
        PartLocation::Pointer(PointerMap::identity(a.outcomes())),
        &Device::Effect(e.clone()),
        &Device::Observable(a.clone()),
        &opts.tol,
    )
}

// ---------------------------------------------------------------------------
// Dispatch

fn check_pair(d1: &Device, d2: &Device) -> Result<()> {
    check_same_input(d1.dim_in(), d2.dim_in())?;
    if let (Some(a), Some(b)) = (d1.dim_out(), d2.dim_out()) {
        if a != b {
            return Err(Error::DimensionMismatch {
                context: "device pair output",
                expected: a,
                found: b,
            });
        }
    }
    Ok(())
}

/// Plain compatibility of any supported pair.
pub fn compatible(d1: &Device, d2: &Device, opts: &DecideOptions) -> Result<Decision> {
    use Device::*;
    check_pair(d1, d2)?;
    match (d1, d2) {
        (Effect(a), Effect(b)) => coexistent_effects(a, b, opts),
        (Effect(a), Observable(b)) => effect_observable_compatible(a, b, opts),
        (Observable(_), Effect(_)) => Ok(compatible(d2, d1, opts)?.swapped()),
        (Observable(a), Observable(b)) => jointly_measurable(a, b, opts),
        (Operation(f), Operation(g)) => op_op_compatible(f, g, opts),
        (Operation(f), Effect(e)) => op_ef_compatible(f, e, opts),
        (Operation(f), Observable(a)) => op_ob_compatible(f, a, opts),
        (Effect(_) | Observable(_), Operation(_)) => Ok(compatible(d2, d1, opts)?.swapped()),
        (Channel(l), Operation(f)) => ch_op_compatible(l, f, opts),
        (Channel(l), Effect(e)) => ch_ef_compatible(l, e, opts),
        (Channel(l), Observable(a)) => ch_ob_compatible(l, a, opts),
        (Channel(l), Channel(m)) => ch_ch_compatible(l, m, opts),
        (Channel(l), Instrument(i)) => ch_instrument_compatible(l, i, opts),
        (Operation(_) | Effect(_) | Observable(_) | Instrument(_), Channel(_)) => {
            Ok(compatible(d2, d1, opts)?.swapped())
        }
        _ => Err(Error::UnsupportedPair(d1.kind_name(), d2.kind_name())),
    }
}

fn involves_channel(d1: &Device, d2: &Device) -> bool {
    matches!(d1, Device::Channel(_)) || matches!(d2, Device::Channel(_))
}

/// Weak compatibility of any supported pair. For channels it coincides with compatibility.
pub fn weakly_compatible(d1: &Device, d2: &Device, opts: &DecideOptions) -> Result<Decision> {
    use Device::*;
    check_pair(d1, d2)?;
    if involves_channel(d1, d2) {
        return compatible(d1, d2, opts);
    }
    match (d1, d2) {
        (Effect(a), Effect(b)) => weakly_compatible_ef_ef(a, b, opts),
        (Effect(a), Observable(b)) => weakly_compatible_ef_ob(a, b, opts),
        (Observable(a), Observable(b)) => weakly_compatible_obs_obs(a, b, opts),
        (Observable(_), Effect(_)) => Ok(weakly_compatible(d2, d1, opts)?.swapped()),
        (Operation(f), Operation(g)) => weakly_compatible_ops(f, g, opts),
        (Operation(f), Effect(e)) => weakly_compatible_op_ef(f, e, opts),
        (Operation(f), Observable(a)) => weakly_compatible_op_ob(f, a, opts),
        (Effect(_) | Observable(_), Operation(_)) => Ok(weakly_compatible(d2, d1, opts)?.swapped()),
        _ => Err(Error::UnsupportedPair(d1.kind_name(), d2.kind_name())),
    }
}

fn verdict(relation: Relation, d: Decision, iterations: usize, mut trace: Vec<String>) -> Verdict {
    trace.extend(d.trace);
    Verdict {
        relation,
        witness: d.witness,
        fast_path: d.fast_path,
        margin: d.margin,
        iterations,
        trace,
    }
}

/// Places the pair in the taxonomy: compatible, weakly compatible only, or strongly incompatible.
pub fn classify(d1: &Device, d2: &Device, opts: &DecideOptions) -> Result<Verdict> {
    let c = compatible(d1, d2, opts)?;
    let iters = c.iterations;
    if c.outcome == Outcome::Holds {
        return Ok(verdict(Relation::Compatible, c, iters, Vec::new()));
    }
    if involves_channel(d1, d2) {
        let rel = match c.outcome {
            Outcome::Fails => Relation::StronglyIncompatible,
            _ => Relation::Undecided,
        };
        return Ok(verdict(rel, c, iters, Vec::new()));
    }
    let w = weakly_compatible(d1, d2, opts)?;
    let iters = iters + w.iterations;
    let rel = match (c.outcome, w.outcome) {
        (_, Outcome::Fails) => Relation::StronglyIncompatible,
        (Outcome::Fails, Outcome::Holds) => Relation::WeaklyCompatibleOnly,
        _ => Relation::Undecided,
    };
    let mut trace = c.trace;
    if rel == Relation::Undecided && c.outcome == Outcome::Undecided {
        // Keep the undecided stage's margin visible.
        let mut v = verdict(rel, w, iters, trace);
        v.margin = v.margin.or(c.margin);
        return Ok(v);
    }
    trace.push(format!(
        "compatibility: {:?} ({}), weak: {:?}",
        c.outcome,
        c.fast_path.unwrap_or("solver"),
        w.outcome
    ));
    Ok(verdict(rel, w, iters, trace))
}

// ---------------------------------------------------------------------------
// Kraus certificates

/// Kraus-operator form of a witness.
#[derive(Debug, Clone, PartialEq)]
pub enum KrausWitness {
    /// One Kraus list; `labels[j]` is the outcome of operator `j`. `first`/`second`
    /// index the operators realizing each device (all operators for observable parts,
    /// whose outcomes are read through `labels`).
    Compatible {
        ops: Vec<ComplexMatrix>,
        labels: Vec<String>,
        first: Vec<usize>,
        second: Vec<usize>,
    },
    /// Two Kraus lists of equal length (zero-padded) with equal total channel.
    Weak {
        k: Vec<ComplexMatrix>,
        l: Vec<ComplexMatrix>,
        k_labels: Vec<String>,
        l_labels: Vec<String>,
        first: Vec<usize>,
        second: Vec<usize>,
    },
}

fn instrument_kraus(ins: &Instrument, tol: &Tolerances) -> (Vec<ComplexMatrix>, Vec<String>) {
    let mut ops = Vec::new();
    let mut labels = Vec::new();
    for (label, branch) in ins.iter() {
        for op in kraus_from_choi(branch, tol).ops() {
            if op.frob_norm() > 0.0 {
                ops.push(op.clone());
                labels.push(label.to_string());
            }
        }
    }
    (ops, labels)
}

fn indices_for(labels: &[String], loc: &PartLocation) -> Vec<usize> {
    match loc {
        PartLocation::Subset(x) => (0..labels.len()).filter(|&j| x.contains(&labels[j])).collect(),
        PartLocation::Pointer(_) => (0..labels.len()).collect(),
    }
}

/// Exports the witness of a verdict as Kraus operators with index sets for each device.
pub fn kraus_witness(v: &Verdict, tol: &Tolerances) -> Result<KrausWitness> {
    match v.witness.as_ref().ok_or(Error::MissingWitness)? {
        Witness::Common {
            instrument,
            first,
            second,
            ..
        } => {
            let (ops, labels) = instrument_kraus(instrument, tol);
            Ok(KrausWitness::Compatible {
                first: indices_for(&labels, first),
                second: indices_for(&labels, second),
                ops,
                labels,
            })
        }
        Witness::Weak {
            first,
            second,
            first_part,
            second_part,
            ..
        } => {
            let (mut k, mut k_labels) = instrument_kraus(first, tol);
            let (mut l, mut l_labels) = instrument_kraus(second, tol);
            let fi = indices_for(&k_labels, first_part);
            let si = indices_for(&l_labels, second_part);
            let (d, kd) = first.dims();
            let len = k.len().max(l.len());
            while k.len() < len {
                k.push(ComplexMatrix::zeros(kd, d));
                k_labels.push(String::new());
            }
            while l.len() < len {
                l.push(ComplexMatrix::zeros(kd, d));
                l_labels.push(String::new());
            }
            Ok(KrausWitness::Weak {
                k,
                l,
                k_labels,
                l_labels,
                first: fi,
                second: si,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{choi_from_kraus, contraction_channel, trivial_observable, KrausSet};
    use crate::matkit::{pauli, C64};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn eff(m: ComplexMatrix) -> Effect {
        Effect::new(m, &tol()).unwrap()
    }

    fn kraus_map(ops: Vec<ComplexMatrix>) -> CPMap {
        choi_from_kraus(&KrausSet::new(ops, &tol()).unwrap(), &tol()).unwrap()
    }

    fn noisy(t: f64, s: ComplexMatrix) -> Effect {
        eff((&ComplexMatrix::identity(2) + &s.scale_real(t)).scale_real(0.5))
    }

    fn slow() -> DecideOptions {
        DecideOptions {
            fast_paths: false,
            ..Default::default()
        }
    }

    /// Grid search over G₁₁ = ½(g₀I + g·σ) for the four operator inequalities.
    /// For a qubit, `aI + b·σ ⪰ 0` iff `a ≥ |b|`.
    fn grid_coexistent(t: f64) -> bool {
        let ok = |a: f64, b: [f64; 3]| a >= (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt() - 1e-12;
        let steps = 60;
        for i in 0..=steps {
            let g0 = i as f64 / steps as f64;
            for jx in -steps..=steps {
                for jz in -steps..=steps {
                    let (gx, gz) = (jx as f64 / steps as f64, jz as f64 / steps as f64);
                    let g = [gx, 0.0, gz];
                    // E1 = ½(I + tσx), E2 = ½(I + tσz), all divided by the common ½.
                    let c1 = ok(g0, g);
                    let c2 = ok(1.0 - g0, [t - gx, 0.0, -gz]);
                    let c3 = ok(1.0 - g0, [-gx, 0.0, t - gz]);
                    let c4 = ok(g0, [gx - t, 0.0, gz - t]);
                    if c1 && c2 && c3 && c4 {
                        return true;
                    }
                }
            }
        }
        false
    }

    #[test]
    fn noisy_pair_matches_grid_oracle() {
        for t in [0.5, 0.9] {
            let d = coexistent_effects(&noisy(t, pauli::x()), &noisy(t, pauli::z()), &slow()).unwrap();
            let expect = grid_coexistent(t);
            assert_eq!(d.outcome == Outcome::Holds, expect, "t = {t}");
            assert_ne!(d.outcome, Outcome::Undecided);
        }
    }

    #[test]
    fn noncommuting_projections_are_incompatible() {
        let o = DecideOptions::default();
        let d = coexistent_effects(&eff(pauli::px()), &eff(pauli::pz()), &o).unwrap();
        assert_eq!(d.outcome, Outcome::Fails);
        let d = coexistent_effects(&eff(pauli::px()), &eff(pauli::pz()), &slow()).unwrap();
        assert_eq!(d.outcome, Outcome::Fails);
    }

    #[test]
    fn trivial_effect_is_compatible() {
        let half = eff(ComplexMatrix::identity(2).scale_real(0.5));
        let d = coexistent_effects(&half, &eff(pauli::px()), &DecideOptions::default()).unwrap();
        assert_eq!(d.outcome, Outcome::Holds);
        assert!(d.witness.is_some());
    }

    #[test]
    fn observables_joint_measurability() {
        let t = tol();
        let sx = Observable::new(vec![("+".into(), pauli::px()), ("-".into(), pauli::pmx())], &t).unwrap();
        let sz = Observable::new(vec![("+".into(), pauli::pz()), ("-".into(), pauli::pmz())], &t).unwrap();
        assert_eq!(jointly_measurable(&sx, &sz, &slow()).unwrap().outcome, Outcome::Fails);
        let d = jointly_measurable(&sx, &sx, &slow()).unwrap();
        assert_eq!(d.outcome, Outcome::Holds);
        let triv = trivial_observable(&[0.3, 0.7], 2, &t).unwrap();
        let d = jointly_measurable(&sx, &triv, &DecideOptions::default()).unwrap();
        assert_eq!(d.outcome, Outcome::Holds);
    }

    #[test]
    fn operation_pairs() {
        let t = tol();
        let lpx = luders(&eff(pauli::px()), &t).unwrap();
        let lpz = luders(&eff(pauli::pz()), &t).unwrap();
        let half_sx = kraus_map(vec![pauli::x().scale_real(std::f64::consts::FRAC_1_SQRT_2)]);
        for o in [DecideOptions::default(), slow()] {
            assert_eq!(op_op_compatible(&lpx, &half_sx, &o).unwrap().outcome, Outcome::Fails);
            assert_eq!(op_op_compatible(&lpx, &lpz, &o).unwrap().outcome, Outcome::Fails);
            let d = op_op_compatible(&lpx, &lpx.scaled(0.5, &t), &o).unwrap();
            assert_eq!(d.outcome, Outcome::Holds);
        }
    }

    #[test]
    fn operation_effect_pairs() {
        let t = tol();
        let lpz = luders(&eff(pauli::pz()), &t).unwrap();
        for o in [DecideOptions::default(), slow()] {
            assert_eq!(op_ef_compatible(&lpz, &eff(pauli::px()), &o).unwrap().outcome, Outcome::Fails);
            assert_eq!(op_ef_compatible(&lpz, &eff(pauli::pz()), &o).unwrap().outcome, Outcome::Holds);
        }
        let small = lpz.scaled(0.5, &t);
        let d = op_ef_compatible(&small, &eff(ComplexMatrix::identity(2).scale_real(0.5)), &DecideOptions::default()).unwrap();
        assert_eq!(d.outcome, Outcome::Holds);
    }

    #[test]
    fn weak_operation_pairs() {
        let t = tol();
        let lpx = luders(&eff(pauli::px()), &t).unwrap();
        let lpz = luders(&eff(pauli::pz()), &t).unwrap();
        let half_sx = kraus_map(vec![pauli::x().scale_real(std::f64::consts::FRAC_1_SQRT_2)]);
        for o in [DecideOptions::default(), slow()] {
            let d = weakly_compatible_ops(&lpx, &half_sx, &o).unwrap();
            assert_eq!(d.outcome, Outcome::Holds, "{:?}", d.trace);
            assert_eq!(weakly_compatible_ops(&lpx, &lpz, &o).unwrap().outcome, Outcome::Fails);
            assert_eq!(weakly_compatible_ops(&lpx, &lpx, &o).unwrap().outcome, Outcome::Holds);
        }
    }

    #[test]
    fn weak_operation_effect_pairs() {
        let t = tol();
        let lpz = luders(&eff(pauli::pz()), &t).unwrap();
        let a = eff(&pauli::pz() + &pauli::pmz().scale_real(0.5));
        let la = luders(&a, &t).unwrap();
        for o in [DecideOptions::default(), slow()] {
            let d = weakly_compatible_op_ef(&lpz, &eff(pauli::px()), &o).unwrap();
            assert_eq!(d.outcome, Outcome::Holds);
            let d = weakly_compatible_op_ef(&la, &eff(pauli::px()), &o).unwrap();
            assert_eq!(d.outcome, Outcome::Fails);
        }
    }

    #[test]
    fn channel_pairs() {
        let t = tol();
        let o = DecideOptions::default();
        let lam = Instrument::new(
            vec![
                ("+".into(), luders(&eff(pauli::px()), &t).unwrap()),
                ("-".into(), luders(&eff(pauli::pmx()), &t).unwrap()),
            ],
            &t,
        )
        .unwrap()
        .total_channel(&t);
        let half_sx = kraus_map(vec![pauli::x().scale_real(std::f64::consts::FRAC_1_SQRT_2)]);
        assert_eq!(ch_op_compatible(&lam, &half_sx, &o).unwrap().outcome, Outcome::Holds);
        let lpx = luders(&eff(pauli::px()), &t).unwrap();
        assert_eq!(
            ch_op_compatible(&CPMap::identity(2), &lpx, &o).unwrap().outcome,
            Outcome::Fails
        );
        assert_eq!(ch_op_compatible(&lam, &lam.scaled(0.5, &t), &o).unwrap().outcome, Outcome::Holds);
        let reset = contraction_channel(&pauli::pz(), 2, &t).unwrap();
        let d = ch_ef_compatible(&reset, &eff(pauli::py()), &o).unwrap();
        assert_eq!(d.outcome, Outcome::Holds);
        // Λ only keeps x-information available, so σz cannot be read out alongside it.
        let sz = Observable::new(vec![("+".into(), pauli::pz()), ("-".into(), pauli::pmz())], &t).unwrap();
        assert_eq!(ch_ob_compatible(&CPMap::identity(2), &sz, &slow()).unwrap().outcome, Outcome::Fails);
        assert_eq!(ch_ef_compatible(&lam, &eff(pauli::px()), &slow()).unwrap().outcome, Outcome::Holds);
    }

    #[test]
    fn classify_examples() {
        let t = tol();
        let o = DecideOptions::default();
        let lpx = Device::Operation(luders(&eff(pauli::px()), &t).unwrap());
        let lpz = Device::Operation(luders(&eff(pauli::pz()), &t).unwrap());
        let half_sx = Device::Operation(kraus_map(vec![pauli::x().scale_real(std::f64::consts::FRAC_1_SQRT_2)]));
        assert_eq!(classify(&lpx, &half_sx, &o).unwrap().relation, Relation::WeaklyCompatibleOnly);
        assert_eq!(classify(&lpx, &lpz, &o).unwrap().relation, Relation::StronglyIncompatible);
        let px = Device::Effect(eff(pauli::px()));
        let pz = Device::Effect(eff(pauli::pz()));
        assert_eq!(classify(&px, &pz, &o).unwrap().relation, Relation::WeaklyCompatibleOnly);
        let v = classify(&px, &lpz, &o).unwrap();
        assert_eq!(v.relation, Relation::WeaklyCompatibleOnly);
        v.witness.unwrap().validate(&px, &lpz, &t).unwrap();
    }

    #[test]
    fn unsupported_pairs_are_reported() {
        let t = tol();
        let ins = crate::devices::canonical_instrument(
            &Device::Effect(eff(pauli::px())),
            &crate::devices::Anchor::State(maximally_mixed(2)),
            &t,
        )
        .unwrap();
        let d = Device::Instrument(ins);
        assert!(matches!(
            classify(&d, &d, &DecideOptions::default()),
            Err(Error::UnsupportedPair("instrument", "instrument"))
        ));
    }

    #[test]
    fn kraus_certificates() {
        let t = tol();
        let o = DecideOptions::default();
        let phi = luders(&eff(pauli::px()), &t).unwrap();
        let v = classify(
            &Device::Operation(CPMap::null(2, 2)),
            &Device::Operation(phi.clone()),
            &o,
        )
        .unwrap();
        let KrausWitness::Compatible { ops, first, second, .. } = kraus_witness(&v, &t).unwrap() else {
            panic!("expected compatible certificate");
        };
        assert!(first.is_empty());
        let rebuilt = second
            .iter()
            .fold(ComplexMatrix::zeros(2, 2), |acc, &j| &acc + &ops[j].sandwich(&pauli::pz()));
        assert!(rebuilt.approx_eq(&phi.apply_s(&pauli::pz()).unwrap(), 1e-10));

        let half_sx = kraus_map(vec![pauli::x().scale_real(std::f64::consts::FRAC_1_SQRT_2)]);
        let v = classify(&Device::Operation(phi), &Device::Operation(half_sx), &o).unwrap();
        let KrausWitness::Weak { k, l, .. } = kraus_witness(&v, &t).unwrap() else {
            panic!("expected weak certificate");
        };
        assert_eq!(k.len(), l.len());
        for b in matkit::hermitian_basis(2) {
            let tk = k.iter().fold(ComplexMatrix::zeros(2, 2), |acc, op| &acc + &op.sandwich(&b));
            let tl = l.iter().fold(ComplexMatrix::zeros(2, 2), |acc, op| &acc + &op.sandwich(&b));
            assert!(tk.approx_eq(&tl, 1e-9));
        }
        let _ = C64::new(0.0, 0.0);
    }
}
