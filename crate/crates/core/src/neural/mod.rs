//! A small reverse-mode engine, the five network architectures, their physics losses and
//! the training loop.

mod losses;
mod network;
mod tape;
mod train;

pub use losses::{loss_conservation, loss_data, BeerLambertTerm, ConservationTerm, RteTerm, SlabSetup};
pub use network::{count_params, Architecture, Network, NetworkSpec, PhysicsLoss, NIR_INPUTS};
pub use tape::{Mat, Tape, Var};
pub use train::{
    objective_and_gradient, read_history_csv, time_inference, train, write_history_csv, HistoryRow, InputScaler, NeuralBatch,
    PhysicsSet, TrainState, TrainedNetwork, TIMING_REPS,
};
