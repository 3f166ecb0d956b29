//! Compatibility of quantum devices: effects, observables, operations,
//! channels and instruments, with witnessed verdicts.

pub mod compat;
pub mod devices;
pub mod dilation;
pub mod error;
pub mod feasibility;
pub mod matkit;
pub mod memo;
pub mod order;

pub use compat::{classify, DecideOptions, Decision, KrausWitness, Outcome, Relation, Verdict, Witness};
pub use devices::{
    Anchor, CPMap, Device, Effect, Instrument, KrausSet, MapKind, Observable, PartLocation,
    PointerMap,
};
pub use dilation::StinespringDilation;
pub use error::{Error, Result};
pub use matkit::{ComplexMatrix, Tolerances, C64};
pub use memo::MeasurementModel;
