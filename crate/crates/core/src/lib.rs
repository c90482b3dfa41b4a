//! Near-infrared glucose-sensing simulator and model benchmark.
//!
//! The crate is layered bottom-up:
//!
//! * [`foundation`] – seeded random streams, physical constants, scenario configuration.
//! * [`optics`] – Beer–Lambert absorbance, Henyey–Greenstein phase function, diffusion
//!   coefficient and the steady-state slab radiative-transfer residual.
//! * [`hardware`], [`environment`], [`physiology`], [`glucose`] – the simulator layers.
//! * [`datagen`] – composes the layers into a reproducible dataset.
//! * [`features`], [`ridge`] – the Enhanced Beer–Lambert regression model.
//! * [`neural`] – a small reverse-mode engine, the five network architectures and their
//!   physics losses.
//! * [`metrics`] – RMSE, MARD, Clarke error grid, Bland–Altman, linearity.
//! * [`pipeline`] – train/evaluate the six benchmark models and serialize artifacts.

pub mod datagen;
pub mod environment;
pub mod error;
pub mod features;
pub mod foundation;
pub mod glucose;
pub mod hardware;
pub mod metrics;
pub mod neural;
pub mod optics;
pub mod physiology;
pub mod pipeline;
pub mod ridge;

pub use datagen::{Dataset, SpectralSample, Split};
pub use error::{Error, Result};
pub use features::{FeatureScaler, FeatureVector, FEATURE_COUNT};
pub use foundation::{PhysicalConstants, RandomStream, ScenarioConfig};
pub use metrics::ModelReport;
pub use neural::{Architecture, NetworkSpec};
pub use ridge::RidgeModel;
