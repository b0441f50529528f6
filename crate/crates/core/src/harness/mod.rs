//! Experiment protocols: temporal splits, synthetic-data gesture recognition, leave-one-user-out
//! authentication and the enrolment-burden sweep.

pub mod auth;
pub mod recognition;
pub mod split;

pub use auth::{
    enrolment_burden_sweep, enrolment_set, leave_one_user_out, max_per_terminal, per_user, reconstructions,
    train_fold_model, tstr_authentication, write_sweep_csv, write_user_reports_csv, ExperimentConfig, LouoResult,
    NegativeMode, SweepRow, UserReport, ARM_BASELINE, ARM_SYNTHETIC,
};
pub use recognition::{recognition_report, tstr_gesture_recognition, ClassifierKind, RecognitionConfig};
pub use split::{apply_record, temporal_split, Split, SplitRecord, SplitSpec};
