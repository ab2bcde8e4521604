//! River stage surrogate: a Saint-Venant reference solver, a Fourier-feature
//! residual network trained on its output with a PDE residual penalty, and
//! the tooling to compare the two.

pub mod autodiff;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod parallel;
pub mod solver;
pub mod surrogate;
pub mod training;

pub use evaluation::{evaluate, mrae, EvalReport};
pub use geometry::{ChannelGeometry, RiverScenario, TimeSeries};
pub use solver::{solve, FlowField, SolverConfig, StageDatum};
pub use surrogate::{Architecture, NormalizationBox, StageModel, SurrogateModel};
pub use training::{train, TrainConfig, TrainingSet};
