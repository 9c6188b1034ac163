//! Software project control: goal-driven composition of measurement
//! pipelines, control techniques that turn measurements into indicators,
//! deviation detection, and scene layouts for a control cockpit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catena;
pub mod fault;
pub mod gqm;
pub mod layout;
pub mod model;
pub mod store;
pub mod techniques;
pub mod views;

pub use catena::{
    execute, postmortem, role_view, DataSource, DeviationEvent, ExecutionResult, IndicatorValue, ParamValue,
    VisualizationCatena,
};
pub use model::StatusColor;
pub use store::{ProjectHandle, Store, StoreError};
