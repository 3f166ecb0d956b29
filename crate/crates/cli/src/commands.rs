//! Subcommand bodies. Each returns the text for stdout and an exit code.

use qcompat::compat::{classify, kraus_witness, DecideOptions, KrausWitness, Relation, Verdict, Witness};
use qcompat::devices::{validate_state, PartLocation};
use qcompat::dilation::minimal_stinespring;
use qcompat::matkit::pauli;
use qcompat::memo::{model_identity_instrument, model_poststate, model_probability, synthesize_model};
use qcompat::{ComplexMatrix, Device, MeasurementModel, C64};
use serde_json::{json, Value};
use thiserror::Error;

use crate::devfile::{DeviceFile, Entry, LoadError};
use crate::format::{
    float_text, instrument_json, instrument_text, map_json, matrix_json, matrix_text, observable_json,
};
use crate::table::table1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;
pub const EXIT_UNSUPPORTED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Load(_) | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Unsupported(_) => EXIT_UNSUPPORTED,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<qcompat::Error> for CliError {
    fn from(e: qcompat::Error) -> Self {
        use qcompat::Error as E;
        match e {
            E::UnsupportedPair(..) => CliError::Unsupported(e.to_string()),
            E::WitnessRejected(_) | E::MalformedProblem(_) => CliError::Internal(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub opts: DecideOptions,
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub code: i32,
}

impl Output {
    fn new(stdout: String, code: i32) -> Self {
        Self { stdout, code }
    }

    fn json(v: Value, code: i32) -> Self {
        let mut s = serde_json::to_string_pretty(&v).expect("plain JSON value");
        s.push('\n');
        Self { stdout: s, code }
    }
}

fn relation_code(r: Relation) -> i32 {
    if r == Relation::Undecided {
        EXIT_UNDECIDED
    } else {
        EXIT_OK
    }
}

fn dims_text(d: &Device) -> String {
    match d.dim_out() {
        Some(k) => format!("{} -> {}", d.dim_in(), k),
        None => d.dim_in().to_string(),
    }
}

pub fn validate(file: &DeviceFile, s: &Settings) -> Output {
    let rows: Vec<(String, &'static str, String)> = file
        .iter()
        .map(|(n, e)| {
            let dims = match e {
                Entry::Device(d) => dims_text(d),
                Entry::Model(m) => format!("{} -> {}", m.dims().0, m.dims().1),
            };
            (n.to_string(), e.kind_name(), dims)
        })
        .collect();
    if s.json {
        return Output::json(
            json!({
                "valid": true,
                "devices": rows.iter().map(|(n, k, d)| json!({"name": n, "type": k, "dims": d})).collect::<Vec<_>>(),
            }),
            EXIT_OK,
        );
    }
    let mut out = String::new();
    for (n, k, d) in &rows {
        out.push_str(&format!("ok  {n:<20} {k:<11} {d}\n"));
    }
    out.push_str(&format!("{} devices valid\n", rows.len()));
    Output::new(out, EXIT_OK)
}

fn verdict_header(a: &str, b: &str, v: &Verdict, s: &Settings) -> String {
    let mut out = format!("pair: {a} / {b}\nrelation: {}\n", v.relation);
    out.push_str(&format!("decided-by: {}\n", v.fast_path.unwrap_or("solver")));
    if let Some(m) = v.margin {
        out.push_str(&format!("margin: {}\n", float_text(m)));
    }
    out.push_str(&format!("iterations: {}\n", v.iterations));
    if s.opts.trace {
        for line in &v.trace {
            out.push_str(&format!("trace: {line}\n"));
        }
    }
    out
}

fn verdict_json(a: &str, b: &str, v: &Verdict, s: &Settings) -> Value {
    let mut j = json!({
        "pair": [a, b],
        "relation": v.relation.as_str(),
        "fast_path": v.fast_path,
        "margin": v.margin.map(crate::format::clean),
        "iterations": v.iterations,
    });
    if s.opts.trace {
        j["trace"] = json!(v.trace);
    }
    j
}

fn pair<'f>(file: &'f DeviceFile, a: &str, b: &str) -> Result<(&'f Device, &'f Device), CliError> {
    Ok((file.device(a)?, file.device(b)?))
}

pub fn classify_cmd(file: &DeviceFile, a: &str, b: &str, s: &Settings) -> Result<Output, CliError> {
    let (d1, d2) = pair(file, a, b)?;
    let v = classify(d1, d2, &s.opts)?;
    let code = relation_code(v.relation);
    if s.json {
        return Ok(Output::json(verdict_json(a, b, &v, s), code));
    }
    Ok(Output::new(verdict_header(a, b, &v, s), code))
}

fn location_text(loc: &PartLocation) -> String {
    match loc {
        PartLocation::Subset(x) => format!("subset {{{}}}", x.join(", ")),
        PartLocation::Pointer(f) => format!(
            "pointer {}",
            f.pairs()
                .iter()
                .map(|(x, y)| format!("{x}->{y}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

fn location_json(loc: &PartLocation) -> Value {
    match loc {
        PartLocation::Subset(x) => json!({ "subset": x }),
        PartLocation::Pointer(f) => json!({ "pointer": f.pairs().iter().map(|(x, y)| json!([x, y])).collect::<Vec<_>>() }),
    }
}

fn kraus_text(k: &KrausWitness) -> String {
    let mut out = String::from("kraus certificate:\n");
    let list = |out: &mut String, name: &str, ops: &[ComplexMatrix], labels: &[String]| {
        for (j, (op, l)) in ops.iter().zip(labels).enumerate() {
            let l = if l.is_empty() { "padding" } else { l.as_str() };
            out.push_str(&format!("  {name}[{j}] (outcome {l}):\n"));
            out.push_str(&matrix_text(op, 4));
        }
    };
    match k {
        KrausWitness::Compatible {
            ops,
            labels,
            first,
            second,
        } => {
            list(&mut out, "K", ops, labels);
            out.push_str(&format!("  first uses K{first:?}\n  second uses K{second:?}\n"));
        }
        KrausWitness::Weak {
            k,
            l,
            k_labels,
            l_labels,
            first,
            second,
        } => {
            list(&mut out, "K", k, k_labels);
            list(&mut out, "L", l, l_labels);
            out.push_str(&format!("  first uses K{first:?}\n  second uses L{second:?}\n"));
        }
    }
    out
}

fn kraus_json(k: &KrausWitness) -> Value {
    let ops = |v: &[ComplexMatrix]| v.iter().map(matrix_json).collect::<Vec<_>>();
    match k {
        KrausWitness::Compatible {
            ops: o,
            labels,
            first,
            second,
        } => json!({ "ops": ops(o), "labels": labels, "first": first, "second": second }),
        KrausWitness::Weak {
            k,
            l,
            k_labels,
            l_labels,
            first,
            second,
        } => json!({
            "k": ops(k), "l": ops(l), "k_labels": k_labels, "l_labels": l_labels,
            "first": first, "second": second,
        }),
    }
}

pub fn witness_cmd(file: &DeviceFile, a: &str, b: &str, s: &Settings) -> Result<Output, CliError> {
    let (d1, d2) = pair(file, a, b)?;
    let v = classify(d1, d2, &s.opts)?;
    let code = relation_code(v.relation);
    let tol = &s.opts.tol;
    let Some(w) = v.witness.as_ref().filter(|_| v.relation != Relation::StronglyIncompatible) else {
        if s.json {
            return Ok(Output::json(verdict_json(a, b, &v, s), code));
        }
        let mut out = verdict_header(a, b, &v, s);
        out.push_str("witness: none\n");
        return Ok(Output::new(out, code));
    };
    // Independent re-check before anything is printed.
    w.validate(d1, d2, tol)
        .map_err(|e| CliError::Internal(format!("witness failed re-validation: {e}")))?;
    let kraus = kraus_witness(&v, tol)?;
    if s.json {
        let mut j = verdict_json(a, b, &v, s);
        j["witness"] = match w {
            Witness::Common {
                instrument,
                first,
                second,
                joint,
            } => json!({
                "kind": "common-instrument",
                "instrument": instrument_json(instrument),
                "first": location_json(first),
                "second": location_json(second),
                "joint_observable": joint.as_ref().map(observable_json),
            }),
            Witness::Weak {
                first,
                second,
                first_part,
                second_part,
                channel,
            } => json!({
                "kind": "shared-total-channel",
                "channel": map_json(channel),
                "first": instrument_json(first),
                "first_part": location_json(first_part),
                "second": instrument_json(second),
                "second_part": location_json(second_part),
            }),
        };
        j["kraus"] = kraus_json(&kraus);
        return Ok(Output::json(j, code));
    }
    let mut out = verdict_header(a, b, &v, s);
    match w {
        Witness::Common {
            instrument,
            first,
            second,
            ..
        } => {
            out.push_str("witness: common instrument\n");
            out.push_str(&format!("  first: {}\n  second: {}\n", location_text(first), location_text(second)));
            out.push_str(&instrument_text(instrument, 2));
        }
        Witness::Weak {
            first,
            second,
            first_part,
            second_part,
            channel,
        } => {
            out.push_str("witness: two instruments with a common total channel\n");
            out.push_str("  channel: Choi matrix\n");
            out.push_str(&matrix_text(channel.choi(), 4));
            out.push_str(&format!("  first instrument ({}):\n", location_text(first_part)));
            out.push_str(&instrument_text(first, 4));
            out.push_str(&format!("  second instrument ({}):\n", location_text(second_part)));
            out.push_str(&instrument_text(second, 4));
        }
    }
    out.push_str(&kraus_text(&kraus));
    Ok(Output::new(out, code))
}

pub fn dilate_cmd(file: &DeviceFile, name: &str, s: &Settings) -> Result<Output, CliError> {
    let tol = &s.opts.tol;
    let map = match file.device(name)? {
        Device::Operation(m) | Device::Channel(m) => m.clone(),
        Device::Instrument(i) => i.total_channel(tol),
        other => {
            return Err(CliError::Invalid(format!(
                "`{name}` is a {}, expected an operation, channel or instrument",
                other.kind_name()
            )))
        }
    };
    let d = minimal_stinespring(&map, tol);
    let vv = d.v.adjoint().matmul(&d.v);
    let isometry = vv.approx_eq(&ComplexMatrix::identity(d.dim_in), tol.eq_tol);
    if s.json {
        return Ok(Output::json(
            json!({
                "name": name,
                "dims": [d.dim_in, d.dim_out],
                "ancilla_dim": d.ancilla_dim,
                "minimal": d.minimal,
                "isometry": isometry,
                "v": matrix_json(&d.v),
            }),
            EXIT_OK,
        ));
    }
    let mut out = format!(
        "dilation of {name}: {} -> {} (x) {}\nancilla dim: {}\nminimal: {}\nisometry: {}\nV (rows k*dA + a):\n",
        d.dim_in, d.dim_out, d.ancilla_dim, d.ancilla_dim, d.minimal, isometry
    );
    out.push_str(&matrix_text(&d.v, 2));
    Ok(Output::new(out, EXIT_OK))
}

fn model_for(file: &DeviceFile, name: &str, s: &Settings) -> Result<MeasurementModel, CliError> {
    match file.get(name)? {
        Entry::Model(m) => Ok(m.clone()),
        Entry::Device(Device::Instrument(i)) => Ok(synthesize_model(i, &s.opts.tol)?),
        Entry::Device(d) => Err(CliError::Invalid(format!(
            "`{name}` is a {}, expected an instrument or model",
            d.kind_name()
        ))),
    }
}

pub fn model_cmd(file: &DeviceFile, name: &str, s: &Settings) -> Result<Output, CliError> {
    let m = model_for(file, name, s)?;
    // Reproduction check on what is about to be printed.
    let realized = model_identity_instrument(&m, &s.opts.tol)?;
    let (dh, dk) = m.dims();
    let (v1, v2) = m.ancilla_dims();
    if s.json {
        return Ok(Output::json(
            json!({
                "name": name,
                "dims": [dh, dk],
                "ancilla_dims": [v1, v2],
                "eta": matrix_json(m.eta()),
                "unitary": matrix_json(m.unitary()),
                "pointer": observable_json(m.pointer()),
                "instrument": instrument_json(&realized),
            }),
            EXIT_OK,
        ));
    }
    let mut out = format!("model for {name}: H={dh} K={dk} V1={v1} V2={v2}\neta:\n");
    out.push_str(&matrix_text(m.eta(), 2));
    out.push_str("U:\n");
    out.push_str(&matrix_text(m.unitary(), 2));
    for (l, e) in m.pointer().iter() {
        out.push_str(&format!("pointer {l}:\n"));
        out.push_str(&matrix_text(e.matrix(), 2));
    }
    Ok(Output::new(out, EXIT_OK))
}

/// A named qubit state (`px`, `pmx`, `py`, `pmy`, `pz`, `pmz`, `mixed`) or a JSON matrix.
pub fn parse_state(input: &str, d: usize) -> Result<ComplexMatrix, CliError> {
    let named = match input {
        "px" => Some(pauli::px()),
        "pmx" => Some(pauli::pmx()),
        "py" => Some(pauli::py()),
        "pmy" => Some(pauli::pmy()),
        "pz" => Some(pauli::pz()),
        "pmz" => Some(pauli::pmz()),
        "mixed" => Some(ComplexMatrix::identity(d).scale_real(1.0 / d as f64)),
        _ => None,
    };
    if let Some(m) = named {
        return Ok(m);
    }
    let rows: Vec<Vec<Value>> =
        serde_json::from_str(input).map_err(|e| CliError::Invalid(format!("state: {e}")))?;
    let rows = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|v| match v {
                    Value::Number(n) => Ok(C64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
                    Value::Array(a) if a.len() == 2 => Ok(C64::new(
                        a[0].as_f64().unwrap_or(f64::NAN),
                        a[1].as_f64().unwrap_or(f64::NAN),
                    )),
                    _ => Err(CliError::Invalid("state entries must be numbers or [re, im]".into())),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexMatrix::from_rows(&rows)?)
}

pub fn simulate_cmd(
    file: &DeviceFile,
    name: &str,
    state: &str,
    outcomes: &[String],
    s: &Settings,
) -> Result<Output, CliError> {
    let tol = &s.opts.tol;
    let m = model_for(file, name, s)?;
    let rho = parse_state(state, m.dims().0)?;
    validate_state(&rho, Some(m.dims().0), tol)?;
    let labels: Vec<&str> = if outcomes.is_empty() {
        m.pointer().outcomes().iter().map(String::as_str).collect()
    } else {
        outcomes.iter().map(String::as_str).collect()
    };
    let p = model_probability(&m, &rho, &labels, tol)?;
    let post = model_poststate(&m, &rho, &labels, tol)?;
    if s.json {
        return Ok(Output::json(
            json!({
                "model": name,
                "outcomes": labels,
                "probability": crate::format::clean(p),
                "poststate": matrix_json(&post),
            }),
            EXIT_OK,
        ));
    }
    let mut out = format!(
        "model: {name}\noutcomes: {{{}}}\nprobability: {:.9}\npost-state (unnormalized):\n",
        labels.join(", "),
        crate::format::clean(p)
    );
    out.push_str(&matrix_text(&post, 2));
    if p > tol.psd_tol {
        out.push_str("post-state (normalized):\n");
        out.push_str(&matrix_text(&post.scale_real(1.0 / p), 2));
    }
    Ok(Output::new(out, EXIT_OK))
}

pub fn table1_cmd(file: &DeviceFile, s: &Settings) -> Result<Output, CliError> {
    let t = table1(file, &s.opts)?;
    if s.json {
        return Ok(Output::json(t.to_json(), EXIT_OK));
    }
    Ok(Output::new(t.render_text(), EXIT_OK))
}
