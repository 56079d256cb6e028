//! Gradual tuning for feed-forward networks.
//!
//! A network trained on one task (Task-A) gets a new output head for a second
//! task (Task-B). Fine tuning then trains everything at once; gradual tuning
//! starts with the new head alone and unfreezes one hidden layer, top-down,
//! every time the validation error plateaus. The crate contains everything
//! needed to compare the two on catastrophic forgetting:
//!
//! - [`numerics`]: row-major matrices and a portable seeded random stream;
//! - [`net`]: ReLU networks with several softmax heads, L1 and dropout,
//!   analytic gradients and the `GTCK` checkpoint format;
//! - [`train`]: SGD, early stopping, the unfreezing schedule and the
//!   round-robin multi-task trainer;
//! - [`datasynth`]: the eight synthetic line/angle/triangle tasks, their
//!   constraint checker and 32×32 renderer;
//! - [`mnist`]: IDX parsing and the MNIST-04 / MNIST-59 splits;
//! - [`exper`]: Task-A → Task-B experiments, repetitions and reports.

pub mod dataset;
pub mod datasynth;
pub mod error;
pub mod exper;
pub mod mnist;
pub mod net;
pub mod numerics;
pub mod train;

pub use dataset::{LabeledDataset, Split, SplitKind};
pub use error::{Error, Result};
pub use net::{Architecture, FreezeMask, HeadId, Mode, Network, RegConfig, RegKind};
pub use numerics::{Matrix, SeededRng};
pub use train::{TrainConfig, TuningMode, TuningState};
