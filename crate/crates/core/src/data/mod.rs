//! Dataset persistence and synthetic data.

mod format;
mod synthetic;

pub use format::{decode, encode, load, save, with_path, FormatError, HEADER_LEN, MAGIC, VERSION};
pub use synthetic::{generate_synthetic, SyntheticConfig, FRAUD_IN_TYPES, FRAUD_OUT_TYPES, NORMAL_TYPES};
