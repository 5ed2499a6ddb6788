//! Meta-sampler driven under-sampling ensembles for imbalanced binary
//! classification.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod learners;
pub mod metasampling;
pub mod metrics;
pub mod neural;
pub mod sac;
pub mod seeding;

pub use dataset::{LabelColumn, LabeledDataset, Split, SplitSpec, ToySpec};
pub use ensemble::{train_ensemble, train_random_ensemble, EnsembleConfig, EnsembleModel};
pub use error::{Error, ErrorKind, Result};
pub use learners::{LearnerKind, ProbabilisticClassifier};
pub use metasampling::{MetaState, SamplerParams};
pub use metrics::aucprc;
pub use sac::{meta_train, MetaSampler, SacConfig, Task};
