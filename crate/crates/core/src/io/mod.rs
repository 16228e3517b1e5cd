//! Family definitions, builtin fixtures and reports.

mod expr;
mod family;
mod report;

pub use expr::Expr;
pub use family::{
    load_family, load_family_file, torus_label, FamilyDefinition, LoadedFamily, RateDef, TorusParams, TORUS_MAX_STATES,
};
pub use report::{Diagnostic, Report, ReportMeta, Table, Timing};
