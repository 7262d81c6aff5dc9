//! Stage-by-stage construction of free minimal subshift labelings on finite
//! windows of Cayley graphs, with the certificates that witness freeness and
//! minimality.

pub mod ball;
pub mod certificate;
pub mod count;
pub mod embedding;
pub mod error;
pub mod group;
pub mod labeling;
pub mod patch;
pub mod pipeline;
pub mod schedule;
pub mod snapshot;
pub mod sparse;
pub mod verify;
pub mod window;

pub use certificate::{Certificate, Witness};
pub use error::{ForgeError, Result};
pub use group::{parse_group, Backend, Element, GeneratorSystem, Order};
pub use labeling::{initial_clean_labeling, verify_clean, CInit, Labeling, LabelingConfig, Layer};
pub use schedule::{ExactSchedule, ScaledConfig, ScaledSchedule, Schedule};
pub use window::{far_point_index, validate_generator_chain, Bfs, CayleyWindow, INF, NONE};
