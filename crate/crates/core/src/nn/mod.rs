//! Hand-written forward and backward passes for the layer families the
//! regime networks use, the sequence objectives and AdaMax.

pub mod conv;
pub mod dense;
pub mod gmm;
pub mod gradcheck;
pub mod head;
pub mod loss;
pub mod lstm;
pub mod store;

pub use conv::{CausalConv, TcnStack};
pub use dense::{Activation, Dense};
pub use gmm::GmmHead;
pub use head::{softmax, RegimeHead};
pub use loss::{balance_regularizer, objective, regularized_loss, sequence_loss, LossGrad, Objective};
pub use lstm::{LstmCell, LstmTrace};
pub use store::{ParamId, ParamSnapshot, ParamStore};
