//! JSON device files.
//!
//! ```json
//! { "devices": [ { "name": "px", "type": "effect", "dims": [2],
//!                  "payload": { "matrix": [[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]] } } ] }
//! ```
//!
//! Complex entries are `[re, im]` (a bare number is read as real). Matrices are
//! row-major nested arrays. Operations and channels take `{"kraus": [...]}` or
//! `{"choi": M}`; instruments take `{"outcomes": [...], "branches": {label: map}}`;
//! observables and model pointers take a list of `{"outcome", "matrix"}`.

use std::collections::BTreeMap;
use std::path::Path;

use qcompat::devices::choi_from_kraus;
use qcompat::{
    CPMap, ComplexMatrix, Device, Effect, Instrument, KrausSet, MeasurementModel, Observable,
    Tolerances, C64,
};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

/// The built-in qubit fixture, identical to `data/qubit_devices.json`.
pub const FIXTURE: &str = include_str!("../data/qubit_devices.json");

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed device file: {0}")]
    Syntax(String),
    #[error("device `{name}`: {reason}")]
    Device { name: String, reason: String },
    #[error("duplicate device name `{0}`")]
    Duplicate(String),
    #[error("no device named `{0}`")]
    Unknown(String),
    #[error("`{name}` is a {found}, expected {expected}")]
    WrongKind {
        name: String,
        found: &'static str,
        expected: &'static str,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    devices: Vec<RawDevice>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    name: String,
    #[serde(rename = "type")]
    kind: Kind,
    dims: Vec<usize>,
    payload: Value,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Effect,
    Observable,
    Operation,
    Channel,
    Instrument,
    Model,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Complex([f64; 2]),
    Real(f64),
}

type RawMatrix = Vec<Vec<Num>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectPayload {
    matrix: RawMatrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Labelled {
    outcome: String,
    matrix: RawMatrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservablePayload {
    effects: Vec<Labelled>,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum MapPayload {
    Kraus(Vec<RawMatrix>),
    Choi(RawMatrix),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstrumentPayload {
    outcomes: Vec<String>,
    branches: BTreeMap<String, MapPayload>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelPayload {
    eta: RawMatrix,
    unitary: RawMatrix,
    pointer: Vec<Labelled>,
}

/// A loaded entry: a device or a measurement model.
#[derive(Debug, Clone)]
pub enum Entry {
    Device(Device),
    Model(MeasurementModel),
}

impl Entry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Entry::Device(d) => d.kind_name(),
            Entry::Model(_) => "model",
        }
    }
}

/// Devices in file order.
#[derive(Debug, Clone)]
pub struct DeviceFile {
    entries: Vec<(String, Entry)>,
}

impl DeviceFile {
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Entry)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), e))
    }

    pub fn get(&self, name: &str) -> Result<&Entry, LoadError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| LoadError::Unknown(name.to_string()))
    }

    pub fn device(&self, name: &str) -> Result<&Device, LoadError> {
        match self.get(name)? {
            Entry::Device(d) => Ok(d),
            Entry::Model(_) => Err(LoadError::WrongKind {
                name: name.to_string(),
                found: "model",
                expected: "a device",
            }),
        }
    }
}

fn matrix(raw: &RawMatrix) -> Result<ComplexMatrix, String> {
    let rows: Vec<Vec<C64>> = raw
        .iter()
        .map(|r| {
            r.iter()
                .map(|n| match n {
                    Num::Complex([re, im]) => C64::new(*re, *im),
                    Num::Real(re) => C64::new(*re, 0.0),
                })
                .collect()
        })
        .collect();
    ComplexMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

fn expect_dims(dims: &[usize], n: usize) -> Result<(), String> {
    if dims.len() != n || dims.contains(&0) {
        return Err(format!("dims must list {n} positive integer(s)"));
    }
    Ok(())
}

fn check_side(m: &ComplexMatrix, d: usize, what: &str) -> Result<(), String> {
    if m.shape() != (d, d) {
        return Err(format!("{what} must be {d}x{d}, found {}x{}", m.rows(), m.cols()));
    }
    Ok(())
}

fn labelled(items: &[Labelled], d: usize) -> Result<Vec<(String, ComplexMatrix)>, String> {
    items
        .iter()
        .map(|l| {
            let m = matrix(&l.matrix)?;
            check_side(&m, d, &format!("effect `{}`", l.outcome))?;
            Ok((l.outcome.clone(), m))
        })
        .collect()
}

fn map(raw: &MapPayload, din: usize, dout: usize, tol: &Tolerances) -> Result<CPMap, String> {
    match raw {
        MapPayload::Kraus(ops) => {
            let ops = ops.iter().map(matrix).collect::<Result<Vec<_>, _>>()?;
            for k in &ops {
                if k.shape() != (dout, din) {
                    return Err(format!(
                        "Kraus operators must be {dout}x{din}, found {}x{}",
                        k.rows(),
                        k.cols()
                    ));
                }
            }
            let set = KrausSet::new(ops, tol).map_err(|e| e.to_string())?;
            choi_from_kraus(&set, tol).map_err(|e| e.to_string())
        }
        MapPayload::Choi(m) => {
            CPMap::from_choi(din, dout, matrix(m)?, tol).map_err(|e| e.to_string())
        }
    }
}

fn payload<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, String> {
    T::deserialize(v).map_err(|e| format!("bad payload: {e}"))
}

fn build(raw: &RawDevice, tol: &Tolerances) -> Result<Entry, String> {
    let dims = &raw.dims;
    Ok(match raw.kind {
        Kind::Effect => {
            expect_dims(dims, 1)?;
            let p: EffectPayload = payload(&raw.payload)?;
            let m = matrix(&p.matrix)?;
            check_side(&m, dims[0], "effect")?;
            Entry::Device(Device::Effect(Effect::new(m, tol).map_err(|e| e.to_string())?))
        }
        Kind::Observable => {
            expect_dims(dims, 1)?;
            let p: ObservablePayload = payload(&raw.payload)?;
            let effects = labelled(&p.effects, dims[0])?;
            Entry::Device(Device::Observable(
                Observable::new(effects, tol).map_err(|e| e.to_string())?,
            ))
        }
        Kind::Operation | Kind::Channel => {
            expect_dims(dims, 2)?;
            let p: MapPayload = payload(&raw.payload)?;
            let m = map(&p, dims[0], dims[1], tol)?;
            if raw.kind == Kind::Channel {
                if !m.is_channel() {
                    return Err("channel is not trace preserving".into());
                }
                Entry::Device(Device::Channel(m))
            } else {
                Entry::Device(Device::Operation(m))
            }
        }
        Kind::Instrument => {
            expect_dims(dims, 2)?;
            let p: InstrumentPayload = payload(&raw.payload)?;
            if p.branches.len() != p.outcomes.len() {
                return Err("branches must list exactly the declared outcomes".into());
            }
            let mut entries = Vec::with_capacity(p.outcomes.len());
            for o in &p.outcomes {
                let b = p
                    .branches
                    .get(o)
                    .ok_or_else(|| format!("missing branch for outcome `{o}`"))?;
                entries.push((o.clone(), map(b, dims[0], dims[1], tol)?));
            }
            Entry::Device(Device::Instrument(
                Instrument::new(entries, tol).map_err(|e| e.to_string())?,
            ))
        }
        Kind::Model => {
            expect_dims(dims, 2)?;
            let p: ModelPayload = payload(&raw.payload)?;
            let eta = matrix(&p.eta)?;
            let u = matrix(&p.unitary)?;
            let d2 = p
                .pointer
                .first()
                .map(|l| l.matrix.len())
                .ok_or("pointer observable has no outcomes")?;
            let pointer = Observable::new(labelled(&p.pointer, d2)?, tol).map_err(|e| e.to_string())?;
            Entry::Model(
                MeasurementModel::new(dims[0], dims[1], eta, u, pointer, tol).map_err(|e| e.to_string())?,
            )
        }
    })
}

/// Parses and validates every device.
pub fn parse_str(text: &str, tol: &Tolerances) -> Result<DeviceFile, LoadError> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| LoadError::Syntax(e.to_string()))?;
    let mut entries: Vec<(String, Entry)> = Vec::with_capacity(raw.devices.len());
    for d in &raw.devices {
        if entries.iter().any(|(n, _)| n == &d.name) {
            return Err(LoadError::Duplicate(d.name.clone()));
        }
        let e = build(d, tol).map_err(|reason| LoadError::Device {
            name: d.name.clone(),
            reason,
        })?;
        entries.push((d.name.clone(), e));
    }
    Ok(DeviceFile { entries })
}

pub fn load_file(path: &Path, tol: &Tolerances) -> Result<DeviceFile, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_str(&text, tol)
}

/// The built-in fixture.
pub fn fixture(tol: &Tolerances) -> DeviceFile {
    parse_str(FIXTURE, tol).expect("built-in fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_loads() {
        let f = fixture(&Tolerances::default());
        assert_eq!(f.device("luders_px").unwrap().kind_name(), "operation");
        assert_eq!(f.device("dephase_x").unwrap().kind_name(), "channel");
        assert_eq!(f.get("swap_z").unwrap().kind_name(), "model");
        assert!(matches!(f.device("swap_z"), Err(LoadError::WrongKind { .. })));
        assert!(matches!(f.get("nope"), Err(LoadError::Unknown(_))));
    }

    #[test]
    fn rejects_bad_effect() {
        let text = r#"{"devices": [{"name": "big", "type": "effect", "dims": [2],
            "payload": {"matrix": [[1.5, 0], [0, 0]]}}]}"#;
        let err = parse_str(text, &Tolerances::default()).unwrap_err();
        assert!(err.to_string().contains("big"));
        assert!(err.to_string().contains("outside [0, 1]"));
    }

    #[test]
    fn rejects_duplicates_and_syntax() {
        let one = r#"{"name": "a", "type": "effect", "dims": [1], "payload": {"matrix": [[1]]}}"#;
        let text = format!(r#"{{"devices": [{one}, {one}]}}"#);
        assert!(matches!(parse_str(&text, &Tolerances::default()), Err(LoadError::Duplicate(_))));
        assert!(matches!(parse_str("{", &Tolerances::default()), Err(LoadError::Syntax(_))));
    }
}
