//! Synthetic linear-model lab for the contrastive selection theory.

pub mod descent;
pub mod experiments;
pub mod head;
pub mod svd;
pub mod teacher;
pub mod world;

pub use head::{
    classification_accuracy, closed_form_train, compute_gamma, empirical_cross_cov, evaluate_train_loss, test_loss_gap, test_loss_self,
    vas_gap, LinearHeadProduct,
};
pub use svd::{nuclear_norm, truncated_svd, Svd};
pub use teacher::{brute_force_best_subset, decompose_gamma_noise, measure_teacher_error, TeacherError};
pub use world::{generate_world, Pairs, Sample, SyntheticWorld, WorldConfig};
