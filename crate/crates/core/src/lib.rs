//! Geographical detector: stratified variance decomposition (q-statistic),
//! interaction detection and significance testing, with a pipeline from daily
//! weather-station records and monthly case counts to report tables.

pub mod detector;
pub mod error;
pub mod geo;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod significance;
pub mod stratify;
pub mod svg;
pub mod synthetic;
pub mod workspace;

pub use detector::{classify_interaction, interaction, overlay, q_statistic};
pub use error::{Error, Result};
pub use model::{
    Factor, GroupKey, InteractionCategory, InteractionResult, QResult, Region, SignificanceMethod,
    StratumAssignment, Virus, YearMonth,
};
pub use significance::{factor_detector, noncentral_f_p, permutation_p};
pub use stratify::StrataStrategy;
