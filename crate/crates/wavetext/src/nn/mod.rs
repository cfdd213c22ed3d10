//! Minimal differentiable-computation toolkit: parameter storage, layer
//! primitives with hand-written backward passes, the Adam optimizer,
//! learning-rate schedules, gradient checking, and checkpoint I/O.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod layers;
mod lstm;
mod schedule;
mod store;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{checkpoint_bytes, load_checkpoint, load_checkpoint_bytes, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport, GradCheckTolerance};
pub use layers::{
    init_uniform, init_zeros, log_softmax, log_softmax_backward, relu, relu_backward, Affine,
    Conv1d, LayerNorm, LayerNormCache, TransposedConv1d,
};
pub use lstm::{Lstm, LstmCache};
pub use schedule::{LrSchedule, ScheduleKind};
pub use store::ParameterStore;
