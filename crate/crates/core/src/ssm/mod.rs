//! Selective state-space core: discretisation, recurrence evaluation and
//! the gated block built around them.

mod layer;
mod params;
pub mod scan;
mod zoh;

pub use layer::{DepthwiseConv, LayerCache, LayerConfig, SelectiveSsmLayer};
pub use params::{Projection, ScanMode, SsmCache, SsmParams};
pub use scan::{inclusive_scan, recurrence_parallel, recurrence_recurrent, Affine, DiscreteParams};
pub use zoh::{discretize_zoh, LIMIT_THRESHOLD};
