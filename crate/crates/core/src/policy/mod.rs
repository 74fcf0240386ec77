//! Gaussian MLP policy and teacher-regularized PPO.

pub mod adam;
pub mod gae;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod teacher;
pub mod train;

pub use adam::{clip_grad_norm, Adam};
pub use gae::compute_gae;
pub use gradcheck::{gradcheck, gradcheck_suite, random_case, GradcheckResult, SuiteCase};
pub use loss::{ppo_loss, ppo_loss_on, teacher_distance, LossConfig, LossOutput, RolloutBatch, TeacherMode};
pub use network::{log_prob, policy_forward, Activations, Mlp, PolicyError, PolicyParams, CHECKPOINT_VERSION};
pub use teacher::{teacher_act, TeacherPolicy};
pub use train::{
    initial_params, train_candidate, IterationMetrics, PpoConfig, TrainError, TrainMetrics, TrainOutcome,
    WALKER_OBS_SCALE,
};
