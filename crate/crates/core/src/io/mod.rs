//! File formats, run configuration and dataset layout.

pub mod config;
pub mod dataset;
pub mod gridfile;
pub mod hu;
pub mod report;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use gridfile::{load_grid, read_grid, save_grid, write_grid, Dtype};
pub use hu::{denormalize_hu, normalize_hu};
