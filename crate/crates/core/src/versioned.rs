use serde::{Deserialize, Serialize};

use crate::SCHEMA_VERSION;

/// Wraps a record with the `"schema"` tag used by every JSON Lines file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Versioned<T> {
    pub schema: u32,
    #[serde(flatten)]
    pub inner: T,
}

impl<T> Versioned<T> {
    pub fn new(inner: T) -> Self {
        Self { schema: SCHEMA_VERSION, inner }
    }
}
