//! Fixed-topology Elman recurrent controller.
//!
//! Maps sensor readings to actuator commands through 6 tanh hidden units
//! whose activations feed back as context on the next step. All weights and
//! biases live in one flat vector so the learner can treat the controller as
//! a plain real-valued search point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hidden (and context) layer width.
pub const HIDDEN: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControllerError {
    #[error("controller needs at least one input and one output, got {n_in}x{n_out}")]
    EmptySpec { n_in: usize, n_out: usize },
    #[error("expected {expected} weights, got {got}")]
    WrongWeightCount { expected: usize, got: usize },
    #[error("expected {expected} inputs, got {got}")]
    WrongInputCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElmanSpec {
    pub n_in: usize,
    pub n_out: usize,
}

impl ElmanSpec {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self, ControllerError> {
        if n_in == 0 || n_out == 0 {
            return Err(ControllerError::EmptySpec { n_in, n_out });
        }
        Ok(ElmanSpec { n_in, n_out })
    }

    /// Flat weight-vector length: input->hidden, context->hidden, hidden
    /// bias, hidden->output, output bias.
    pub fn weights_dim(&self) -> usize {
        self.n_in * HIDDEN + HIDDEN * HIDDEN + HIDDEN + HIDDEN * self.n_out + self.n_out
    }
}

/// Weight-vector layout offsets for one spec. Row-major per target unit:
/// `W_ih[h][i]`, then `W_ch[h][c]`, then `b_h[h]`, then `W_ho[o][h]`, then
/// `b_o[o]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w_ch: usize,
    b_h: usize,
    w_ho: usize,
    b_o: usize,
}

impl Layout {
    fn of(spec: ElmanSpec) -> Self {
        let w_ch = spec.n_in * HIDDEN;
        let b_h = w_ch + HIDDEN * HIDDEN;
        let w_ho = b_h + HIDDEN;
        let b_o = w_ho + HIDDEN * spec.n_out;
        Layout { w_ch, b_h, w_ho, b_o }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    spec: ElmanSpec,
    weights: Vec<f64>,
    context: [f64; HIDDEN],
}

impl Controller {
    pub fn new(spec: ElmanSpec, weights: Vec<f64>) -> Result<Self, ControllerError> {
        let expected = spec.weights_dim();
        if weights.len() != expected {
            return Err(ControllerError::WrongWeightCount { expected, got: weights.len() });
        }
        Ok(Controller { spec, weights, context: [0.0; HIDDEN] })
    }

    pub fn spec(&self) -> ElmanSpec {
        self.spec
    }

    pub fn reset(&mut self) {
        self.context = [0.0; HIDDEN];
    }

    /// One control step: `hidden = tanh(W_ih x + W_ch context + b_h)`,
    /// `outputs = tanh(W_ho hidden + b_o)`, and the new context is the hidden
    /// activation. Deterministic; outputs lie in (-1, 1).
    pub fn step(&mut self, inputs: &[f64]) -> Result<Vec<f64>, ControllerError> {
        if inputs.len() != self.spec.n_in {
            return Err(ControllerError::WrongInputCount {
                expected: self.spec.n_in,
                got: inputs.len(),
            });
        }
        let l = Layout::of(self.spec);
        let w = &self.weights;
        let mut hidden = [0.0f64; HIDDEN];
        for (h, unit) in hidden.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (i, x) in inputs.iter().enumerate() {
                sum += w[h * self.spec.n_in + i] * x;
            }
            for (c, ctx) in self.context.iter().enumerate() {
                sum += w[l.w_ch + h * HIDDEN + c] * ctx;
            }
            sum += w[l.b_h + h];
            *unit = sum.tanh();
        }
        let mut outputs = vec![0.0f64; self.spec.n_out];
        for (o, out) in outputs.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (h, unit) in hidden.iter().enumerate() {
                sum += w[l.w_ho + o * HIDDEN + h] * unit;
            }
            sum += w[l.b_o + o];
            *out = sum.tanh();
        }
        self.context = hidden;
        Ok(outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_dim_matches_layout_formula() {
        assert_eq!(ElmanSpec::new(2, 2).unwrap().weights_dim(), 68);
        assert_eq!(ElmanSpec::new(1, 1).unwrap().weights_dim(), 55);
        assert_eq!(ElmanSpec::new(4, 6).unwrap().weights_dim(), 108);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(ElmanSpec::new(0, 1).is_err());
        assert!(ElmanSpec::new(1, 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero_outputs_and_context() {
        let spec = ElmanSpec::new(3, 2).unwrap();
        let mut c = Controller::new(spec, vec![0.0; spec.weights_dim()]).unwrap();
        let out = c.step(&[0.7, 0.1, 1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        assert_eq!(c.context, [0.0; HIDDEN]);
    }

    #[test]
    fn wrong_lengths_are_interface_errors() {
        let spec = ElmanSpec::new(2, 2).unwrap();
        assert_eq!(
            Controller::new(spec, vec![0.0; 10]).unwrap_err(),
            ControllerError::WrongWeightCount { expected: 68, got: 10 }
        );
        let mut c = Controller::new(spec, vec![0.0; 68]).unwrap();
        assert_eq!(
            c.step(&[0.5]).unwrap_err(),
            ControllerError::WrongInputCount { expected: 2, got: 1 }
        );
    }

    #[test]
    fn outputs_stay_inside_unit_interval() {
        let spec = ElmanSpec::new(2, 3).unwrap();
        // Moderate weights keep tanh strictly inside (-1, 1) ...
        let mut c = Controller::new(spec, vec![2.0; spec.weights_dim()]).unwrap();
        for _ in 0..20 {
            for y in c.step(&[1.0, 1.0]).unwrap() {
                assert!(y > -1.0 && y < 1.0);
            }
        }
        // ... while extreme weights saturate to exactly +/-1 but never beyond.
        let mut c = Controller::new(spec, vec![50.0; spec.weights_dim()]).unwrap();
        for _ in 0..20 {
            for y in c.step(&[1.0, 1.0]).unwrap() {
                assert!((-1.0..=1.0).contains(&y));
            }
        }
    }

    /// Hand-rolled trace of a single-path recurrence: one input, one output,
    /// all weights zero except the first hidden unit's input weight (0.5),
    /// its self-context weight (0.25), its bias (0.1), and a unit
    /// hidden->output weight.
    #[test]
    fn recurrence_matches_hand_trace() {
        let spec = ElmanSpec::new(1, 1).unwrap();
        let mut w = vec![0.0; spec.weights_dim()];
        w[0] = 0.5; // W_ih[0][0]
        w[6] = 0.25; // W_ch[0][0]
        w[42] = 0.1; // b_h[0]
        w[48] = 1.0; // W_ho[0][0]
        let mut c = Controller::new(spec, w).unwrap();

        let h1 = (0.5 * 1.0 + 0.25 * 0.0 + 0.1_f64).tanh();
        let y1 = c.step(&[1.0]).unwrap()[0];
        assert_eq!(y1, h1.tanh());

        let h2 = (0.5 * 1.0 + 0.25 * h1 + 0.1_f64).tanh();
        let y2 = c.step(&[1.0]).unwrap()[0];
        assert_eq!(y2, h2.tanh());
        assert!(y2 != y1, "context must influence the second step");

        // Resetting the state reproduces the first step exactly.
        c.reset();
        assert_eq!(c.step(&[1.0]).unwrap()[0], y1);
    }

    #[test]
    fn step_is_bit_stable() {
        let spec = ElmanSpec::new(4, 6).unwrap();
        let weights: Vec<f64> = (0..spec.weights_dim())
            .map(|i| ((i as f64) * 0.371).sin())
            .collect();
        let inputs = [0.2, 0.9, 0.0, 0.55];
        let run = |weights: Vec<f64>| {
            let mut c = Controller::new(spec, weights).unwrap();
            let mut log = Vec::new();
            for _ in 0..50 {
                log.extend(c.step(&inputs).unwrap());
            }
            log
        };
        assert_eq!(run(weights.clone()), run(weights));
    }
}
