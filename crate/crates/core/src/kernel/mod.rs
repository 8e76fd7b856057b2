//! Values, states, fingerprints and the canonical text form.

mod state;
mod text;
mod value;

pub use state::{collision_probability, fingerprint_state, Fingerprint, State};
pub(crate) use text::write_quoted;
pub use text::{parse_value, render_value, ValueSyntaxError};
pub use value::Value;
