//! Deterministic 2D navigation safety testbed.
//!
//! A mobile robot driven by a pluggable controller hunts a target in a
//! seeded arena while an attacker injects malicious instructions into the
//! human-input channel. The library provides the world simulation (LiDAR,
//! symbolic camera, kinematics, obstacle dynamics), secured prompt assembly,
//! per-step state records, a rule-based safety validator with a bounded
//! retry loop, deterministic scripted controllers plus an optional remote
//! backend, and a suite runner that scores mission-oriented exploration
//! (MOER), attack detection (ADR), target loss (TLR), and cost metrics over
//! the scenario x secured x attacked matrix.
//!
//! Everything is deterministic: identical configuration and seeds produce
//! byte-identical trial logs, CSV, and reports, including under parallel
//! trial execution.

pub mod attack;
pub mod brain;
pub mod config;
pub mod eval;
pub mod geom;
pub mod prompt;
pub mod replay;
pub mod state;
pub mod validator;
pub mod world;

pub use attack::{maybe_inject, AttackConfig, InjectionEvent};
pub use brain::{build_brain, Brain, BrainError, BrainKind, BrainRequest, RemoteConfig};
pub use config::{ConfigError, RunConfig};
pub use eval::{
    adr, cost_summary, moer, run_suite, run_trial, run_trial_with_brain, tlr, BrainChoice,
    MetricsConfig, MetricsReport, SuiteConfig, SuiteResult, SuiteSpec, TrialRecord,
};
pub use prompt::{
    build_system_prompt, build_user_prompt, parse_response, BrainResponse, ControlSignal,
    SystemPrompt, TaskConfig, TokenUsage, UserPrompt,
};
pub use replay::{audit_log, audit_logs, replay_file, replay_log, ReplayError};
pub use state::{
    export_log, import_log, record_step, reference_state, StepRecord, TrialLog, TrialOutcome,
};
pub use validator::{validate, validate_and_execute, SafetyParams, ValidationVerdict};
pub use world::{
    apply_signal, camera_observe, lidar_scan, spawn_scenario, step_dynamics, CameraObservation,
    Pose, Scan, ScenarioKind, World, WorldConfig,
};
