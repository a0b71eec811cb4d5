//! Recurrent forecasting engine: peephole LSTM and GRU cells trained with
//! backpropagation through time, L2 regularization and k-fold
//! cross-validation on daily OHLCV price series.

pub mod cells;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod training;

pub use cells::{CellKind, Gradients, Params};
pub use error::{Error, Result};
pub use linalg::{Matrix, Rng};
