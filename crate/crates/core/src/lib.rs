//! Online transfer learning over concept-drifting regression streams, with
//! base-model selection by conceptual similarity.
//!
//! Each stream runs a drift detector that learns ridge base models. Stable
//! models travel between streams together with the principal components of
//! their training windows, and a per-stream OLS meta-learner combines a
//! selected subset of them.

pub mod botl;
pub mod cdd;
pub mod clustering;
pub mod model;
pub mod regress;
pub mod selection;
pub mod streams;
pub mod subspace;
pub mod window;

pub use model::{BaseModel, ModelId};
pub use window::WindowBuffer;
