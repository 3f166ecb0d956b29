//! Deterministic text and JSON rendering of matrices and devices.

use qcompat::{CPMap, ComplexMatrix, Instrument, Observable, C64};
use serde_json::{json, Value};

/// Rounds to 12 decimals and flushes negative zero, so output is stable across runs.
pub fn clean(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn complex_text(z: C64) -> String {
    let (re, im) = (clean(z.re), clean(z.im));
    let re = format!("{re:.6}");
    let im_s = format!("{:.6}", im.abs());
    let re = if re == "-0.000000" { "0.000000".to_string() } else { re };
    let sign = if im < 0.0 && im_s != "0.000000" { '-' } else { '+' };
    format!("{re}{sign}{im_s}i")
}

pub fn matrix_text(m: &ComplexMatrix, indent: usize) -> String {
    let pad = " ".repeat(indent);
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|c| format!("{:>20}", complex_text(m[(r, c)]))).collect();
        out.push_str(&pad);
        out.push('[');
        out.push_str(&row.join(" "));
        out.push_str(" ]\n");
    }
    out
}

pub fn matrix_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|r| {
                Value::Array(
                    (0..m.cols())
                        .map(|c| json!([clean(m[(r, c)].re), clean(m[(r, c)].im)]))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn map_json(m: &CPMap) -> Value {
    json!({ "dims": [m.dim_in(), m.dim_out()], "choi": matrix_json(m.choi()) })
}

pub fn instrument_json(ins: &Instrument) -> Value {
    let (din, dout) = ins.dims();
    json!({
        "dims": [din, dout],
        "outcomes": ins.outcomes(),
        "branches": ins.iter().map(|(l, b)| json!({ "outcome": l, "choi": matrix_json(b.choi()) })).collect::<Vec<_>>(),
    })
}

pub fn observable_json(o: &Observable) -> Value {
    Value::Array(
        o.iter()
            .map(|(l, e)| json!({ "outcome": l, "matrix": matrix_json(e.matrix()) }))
            .collect(),
    )
}

pub fn instrument_text(ins: &Instrument, indent: usize) -> String {
    let pad = " ".repeat(indent);
    let mut out = String::new();
    for (l, b) in ins.iter() {
        out.push_str(&format!("{pad}outcome {l}: Choi matrix\n"));
        out.push_str(&matrix_text(b.choi(), indent + 2));
    }
    out
}

pub fn float_text(x: f64) -> String {
    let x = clean(x);
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.6e}")
    }
}
