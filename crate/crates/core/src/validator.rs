//! Rule-based safety validation of control signals against the current LiDAR
//! scan, plus the retry-with-threshold execution loop.
//!
//! A Straight of length `d` is valid when every beam within the angular
//! window around the travel direction keeps `reading - |d| >= dist`. Forward
//! moves check the window around the heading; backward moves check the rear
//! window. Turns are valid unconditionally.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brain::{Brain, BrainError, BrainRequest, RetryAttempt};
use crate::geom::{angular_separation_deg, normalize_bearing_deg};
use crate::prompt::{BrainResponse, ControlSignal, MoveDirection, TokenUsage, TurnDirection};
use crate::world::{apply_signal, lidar_scan, BodyId, ExecutionResult, Scan, World};

/// Validation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Maximum angular deviation from the travel direction that is checked,
    /// in degrees (half-width of the window).
    pub angular_spread_deg: f64,
    /// Clearance that must remain after the move, in millimetres.
    pub safety_distance_mm: f64,
    /// Maximum validator rejections per step before the mission is declared
    /// failed.
    pub failure_threshold: u32,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            angular_spread_deg: 15.0,
            safety_distance_mm: 200.0,
            failure_threshold: 3,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=180.0).contains(&self.angular_spread_deg) {
            return Err("angular_spread_deg must lie in [0, 180]".into());
        }
        if !self.safety_distance_mm.is_finite() || self.safety_distance_mm <= 0.0 {
            return Err("safety_distance_mm must be positive".into());
        }
        if self.failure_threshold < 1 {
            return Err("failure_threshold must be at least 1".into());
        }
        Ok(())
    }
}

/// One beam that fails the clearance rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolatingBeam {
    /// Beam bearing relative to the heading, normalized to `(-180, 180]`.
    pub angle_deg: f64,
    pub reading_mm: f64,
    /// Minimum reading required: `|d| + dist`.
    pub required_mm: f64,
}

/// Validation result for one signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub valid: bool,
    pub violating_beams: Vec<ViolatingBeam>,
    pub checked_signal: ControlSignal,
}

fn window_center(signal: &ControlSignal) -> Option<f64> {
    match signal {
        ControlSignal::Turn { .. } => None,
        ControlSignal::Straight { direction, .. } => Some(match direction {
            MoveDirection::Forward => 0.0,
            MoveDirection::Backward => 180.0,
        }),
    }
}

/// Validate one signal against the current scan.
pub fn validate(signal: &ControlSignal, scan: &Scan, params: &SafetyParams) -> ValidationVerdict {
    let Some(center) = window_center(signal) else {
        return ValidationVerdict {
            valid: true,
            violating_beams: Vec::new(),
            checked_signal: signal.clone(),
        };
    };
    let distance = match signal {
        ControlSignal::Straight { distance_mm, .. } => *distance_mm,
        ControlSignal::Turn { .. } => unreachable!(),
    };
    let required = distance + params.safety_distance_mm;
    let mut violating = Vec::new();
    for (_, angle, reading) in scan.window_beams(center, params.angular_spread_deg) {
        if reading - distance < params.safety_distance_mm {
            violating.push(ViolatingBeam {
                angle_deg: normalize_bearing_deg(angle),
                reading_mm: reading,
                required_mm: required,
            });
        }
    }
    ValidationVerdict {
        valid: violating.is_empty(),
        violating_beams: violating,
        checked_signal: signal.clone(),
    }
}

/// Brute-force reference validator: enumerates every beam and applies the
/// clearance inequality directly against the angular-separation test. Kept
/// deliberately independent of [`validate`]'s windowing arithmetic.
pub fn validate_oracle(
    signal: &ControlSignal,
    scan: &Scan,
    params: &SafetyParams,
) -> ValidationVerdict {
    let Some(center) = window_center(signal) else {
        return ValidationVerdict {
            valid: true,
            violating_beams: Vec::new(),
            checked_signal: signal.clone(),
        };
    };
    let distance = match signal {
        ControlSignal::Straight { distance_mm, .. } => *distance_mm,
        ControlSignal::Turn { .. } => unreachable!(),
    };
    let required = distance + params.safety_distance_mm;
    let mut violating = Vec::new();
    for k in 0..scan.beam_count as usize {
        let angle = scan.beam_angle_deg(k);
        if angular_separation_deg(angle, center) > params.angular_spread_deg {
            continue;
        }
        let reading = scan.distances[k];
        if reading - distance < params.safety_distance_mm {
            violating.push(ViolatingBeam {
                angle_deg: normalize_bearing_deg(angle),
                reading_mm: reading,
                required_mm: required,
            });
        }
    }
    violating.sort_by(|a, b| a.angle_deg.total_cmp(&b.angle_deg));
    ValidationVerdict {
        valid: violating.is_empty(),
        violating_beams: violating,
        checked_signal: signal.clone(),
    }
}

/// Disagreement found by the randomized validator check.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub case_index: u32,
    pub signal: ControlSignal,
    pub params: SafetyParams,
    pub beam_count: u32,
    pub candidate_valid: bool,
    pub oracle_valid: bool,
    pub detail: String,
}

impl std::fmt::Display for Counterexample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "case {}: signal {:?} with spread {} deg, dist {} mm over {} beams: \
             candidate says valid={}, oracle says valid={} ({})",
            self.case_index,
            self.signal,
            self.params.angular_spread_deg,
            self.params.safety_distance_mm,
            self.beam_count,
            self.candidate_valid,
            self.oracle_valid,
            self.detail
        )
    }
}

fn verdicts_agree(a: &ValidationVerdict, b: &ValidationVerdict) -> Result<(), String> {
    if a.valid != b.valid {
        return Err("valid bits differ".into());
    }
    let mut left = a.violating_beams.clone();
    left.sort_by(|x, y| x.angle_deg.total_cmp(&y.angle_deg));
    let right = &b.violating_beams;
    if left.len() != right.len() {
        return Err(format!(
            "violating beam counts differ: {} vs {}",
            left.len(),
            right.len()
        ));
    }
    for (l, r) in left.iter().zip(right.iter()) {
        if l != r {
            return Err(format!("violating beams differ: {l:?} vs {r:?}"));
        }
    }
    Ok(())
}

/// Run the randomized candidate-vs-oracle comparison. Returns the first
/// counterexample, or `None` when all cases agree.
pub fn run_validator_check(
    samples: u32,
    seed: u64,
    candidate: impl Fn(&ControlSignal, &Scan, &SafetyParams) -> ValidationVerdict,
) -> Option<Counterexample> {
    const BEAM_COUNTS: [u32; 7] = [36, 72, 90, 120, 180, 360, 720];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case_index in 0..samples {
        let beam_count = BEAM_COUNTS[rng.gen_range(0..BEAM_COUNTS.len())];
        let max_range = 9999.0;
        let distances: Vec<f64> = (0..beam_count)
            .map(|_| f64::from(rng.gen_range(1..=9999)))
            .collect();
        let scan = Scan {
            distances,
            beam_count,
            angular_resolution_deg: 360.0 / f64::from(beam_count),
            max_range_mm: max_range,
        };
        let params = SafetyParams {
            angular_spread_deg: f64::from(rng.gen_range(0..=180)),
            safety_distance_mm: f64::from(rng.gen_range(1..=500)),
            failure_threshold: 3,
        };
        let signal = match rng.gen_range(0..10) {
            0..=4 => ControlSignal::Straight {
                direction: MoveDirection::Forward,
                distance_mm: f64::from(rng.gen_range(0..=1500)),
            },
            5..=7 => ControlSignal::Straight {
                direction: MoveDirection::Backward,
                distance_mm: f64::from(rng.gen_range(0..=1500)),
            },
            _ => ControlSignal::Turn {
                direction: if rng.gen_bool(0.5) {
                    TurnDirection::Left
                } else {
                    TurnDirection::Right
                },
                angle_deg: f64::from(rng.gen_range(1..=359)),
            },
        };
        let got = candidate(&signal, &scan, &params);
        let expected = validate_oracle(&signal, &scan, &params);
        if let Err(detail) = verdicts_agree(&got, &expected) {
            return Some(Counterexample {
                case_index,
                signal,
                params,
                beam_count,
                candidate_valid: got.valid,
                oracle_valid: expected.valid,
                detail,
            });
        }
    }
    None
}

/// Whether validation verdicts gate execution or are recorded only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidationMode {
    /// Full retry loop; invalid command lists never execute.
    Enforced,
    /// Verdicts are computed for the log but every command list executes.
    Disabled,
}

/// One executed signal with its verdict and execution result.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutedSignal {
    pub signal: ControlSignal,
    pub verdict: ValidationVerdict,
    pub result: ExecutionResult,
}

/// Outcome of running one pipeline step through the controller, validator,
/// and actuator.
#[derive(Clone, Debug, PartialEq)]
pub struct StepExecution {
    /// The accepted response (or the final rejected one on mission failure).
    pub response: BrainResponse,
    pub executed: Vec<ExecutedSignal>,
    /// Command lists the validator rejected this step.
    pub rejected_attempts: u32,
    /// Controller invocations this step (1 + retries).
    pub brain_calls: u32,
    pub token_usage: TokenUsage,
    /// The failure threshold was exhausted; nothing executed.
    pub mission_failed: bool,
    /// Verdicts of the final rejected list when the mission failed.
    pub final_rejection: Option<Vec<ValidationVerdict>>,
    /// Wire exchanges made this step (remote backends only).
    pub wire_transcript: Vec<crate::brain::WireExchange>,
}

impl StepExecution {
    /// First collision among executed signals, if any.
    pub fn collision(&self) -> Option<BodyId> {
        self.executed
            .iter()
            .find(|e| e.result.contact())
            .and_then(|e| e.result.collided_with)
    }
}

/// Obtain a command list from the controller, validate it, and execute.
///
/// Every signal is validated against the scan taken at step start (no
/// post-turn window prediction). When all signals pass, they execute
/// sequentially; any contact stops execution. When a signal fails under
/// [`ValidationMode::Enforced`], the whole list is rejected and the
/// controller is re-invoked with the rejection context, at most
/// `failure_threshold` times; exhausting the threshold yields a mission
/// failure with nothing executed. The controller therefore runs at most
/// `failure_threshold + 1` times per step.
///
/// A malformed controller response counts as a rejected attempt. Transport
/// errors from remote backends propagate as errors so the harness can handle
/// them apart from validation failures.
pub fn validate_and_execute(
    brain: &mut dyn Brain,
    request: &BrainRequest,
    world: &mut World,
    params: &SafetyParams,
    mode: ValidationMode,
) -> Result<StepExecution, BrainError> {
    let scan = lidar_scan(world);
    let mut rejected: u32 = 0;
    let mut calls: u32 = 0;
    let mut tokens = TokenUsage::default();
    let mut retry_context: Vec<RetryAttempt> = Vec::new();
    let mut wire_transcript = Vec::new();

    loop {
        let attempt_request = BrainRequest {
            retry_context: retry_context.clone(),
            ..request.clone()
        };
        calls += 1;
        let generated = brain.generate(&attempt_request);
        wire_transcript.extend(brain.drain_transcript());
        let response = match generated {
            Ok(r) => r,
            Err(BrainError::Malformed(message)) => {
                // Malformed output feeds the retry path like a failed verdict.
                if mode == ValidationMode::Enforced && rejected < params.failure_threshold {
                    rejected += 1;
                    retry_context.push(RetryAttempt {
                        action: Vec::new(),
                        verdicts: Vec::new(),
                        note: Some(format!("malformed response: {message}")),
                    });
                    continue;
                }
                return Ok(StepExecution {
                    response: BrainResponse {
                        perception: Default::default(),
                        brain: Vec::new(),
                        action: Vec::new(),
                        token_usage: TokenUsage::default(),
                    },
                    executed: Vec::new(),
                    rejected_attempts: rejected,
                    brain_calls: calls,
                    token_usage: tokens,
                    mission_failed: true,
                    final_rejection: None,
                    wire_transcript,
                });
            }
            Err(other) => return Err(other),
        };
        tokens += response.token_usage;

        let verdicts: Vec<ValidationVerdict> = response
            .action
            .iter()
            .map(|signal| validate(signal, &scan, params))
            .collect();
        let all_valid = verdicts.iter().all(|v| v.valid);

        if all_valid || mode == ValidationMode::Disabled {
            let mut executed = Vec::with_capacity(response.action.len());
            for (signal, verdict) in response.action.iter().zip(verdicts) {
                let result = apply_signal(world, signal);
                let contact = result.contact();
                executed.push(ExecutedSignal {
                    signal: signal.clone(),
                    verdict,
                    result,
                });
                if contact {
                    break;
                }
            }
            return Ok(StepExecution {
                response,
                executed,
                rejected_attempts: rejected,
                brain_calls: calls,
                token_usage: tokens,
                mission_failed: false,
                final_rejection: None,
                wire_transcript,
            });
        }

        if rejected >= params.failure_threshold {
            return Ok(StepExecution {
                response,
                executed: Vec::new(),
                rejected_attempts: rejected,
                brain_calls: calls,
                token_usage: tokens,
                mission_failed: true,
                final_rejection: Some(verdicts),
                wire_transcript,
            });
        }
        rejected += 1;
        retry_context.push(RetryAttempt {
            action: response.action.clone(),
            verdicts: verdicts.iter().filter(|v| !v.valid).cloned().collect(),
            note: None,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_scan(reading: f64) -> Scan {
        Scan {
            distances: vec![reading; 360],
            beam_count: 360,
            angular_resolution_deg: 1.0,
            max_range_mm: 9999.0,
        }
    }

    fn forward(distance_mm: f64) -> ControlSignal {
        ControlSignal::Straight {
            direction: MoveDirection::Forward,
            distance_mm,
        }
    }

    #[test]
    fn turn_is_always_valid() {
        let scan = flat_scan(10.0);
        let verdict = validate(
            &ControlSignal::Turn {
                direction: TurnDirection::Right,
                angle_deg: 170.0,
            },
            &scan,
            &SafetyParams::default(),
        );
        assert!(verdict.valid);
        assert!(verdict.violating_beams.is_empty());
    }

    #[test]
    fn clear_window_passes() {
        // 900 - 500 = 400 >= 200.
        let verdict = validate(&forward(500.0), &flat_scan(900.0), &SafetyParams::default());
        assert!(verdict.valid);
    }

    #[test]
    fn single_short_beam_fails_with_detail() {
        let mut scan = flat_scan(9000.0);
        scan.distances[5] = 650.0; // theta = +5 deg
        let verdict = validate(&forward(500.0), &scan, &SafetyParams::default());
        assert!(!verdict.valid);
        assert_eq!(verdict.violating_beams.len(), 1);
        let v = verdict.violating_beams[0];
        assert_eq!(v.angle_deg, 5.0);
        assert_eq!(v.reading_mm, 650.0);
        assert_eq!(v.required_mm, 700.0);
    }

    #[test]
    fn zero_distance_still_requires_clearance() {
        let mut scan = flat_scan(9000.0);
        scan.distances[0] = 150.0;
        let verdict = validate(&forward(0.0), &scan, &SafetyParams::default());
        assert!(!verdict.valid);
    }

    #[test]
    fn backward_checks_the_rear_window() {
        let mut scan = flat_scan(9000.0);
        scan.distances[180] = 300.0; // directly behind
        let backward = ControlSignal::Straight {
            direction: MoveDirection::Backward,
            distance_mm: 250.0,
        };
        let verdict = validate(&backward, &scan, &SafetyParams::default());
        assert!(!verdict.valid);
        // Forward move of the same length is unaffected.
        assert!(validate(&forward(250.0), &scan, &SafetyParams::default()).valid);
    }

    #[test]
    fn window_respects_spread_bounds() {
        let mut scan = flat_scan(9000.0);
        scan.distances[16] = 100.0; // outside a 15-degree window
        assert!(validate(&forward(500.0), &scan, &SafetyParams::default()).valid);
        scan.distances[15] = 100.0; // boundary beam is included
        assert!(!validate(&forward(500.0), &scan, &SafetyParams::default()).valid);
    }

    #[test]
    fn matches_oracle_on_randomized_cases() {
        assert!(run_validator_check(1000, 1, validate).is_none());
    }

    #[test]
    fn checker_catches_off_by_one_window_bug() {
        // Buggy variant: drops the window's boundary beams.
        let buggy = |signal: &ControlSignal, scan: &Scan, params: &SafetyParams| {
            let narrowed = SafetyParams {
                angular_spread_deg: (params.angular_spread_deg - scan.angular_resolution_deg)
                    .max(0.0),
                ..params.clone()
            };
            validate(signal, scan, &narrowed)
        };
        let counterexample = run_validator_check(1000, 1, buggy);
        assert!(counterexample.is_some());
        let text = counterexample.unwrap().to_string();
        assert!(text.contains("candidate says valid="));
    }
}
