//! Robbins-Monro step-size adaptation for random-walk proposals.

/// Adapts a proposal step on the log scale toward a target acceptance
/// probability, with a decaying gain so the step settles. Frozen once the
/// adaptation window closes.
#[derive(Debug, Clone)]
pub(crate) struct StepAdaptor {
    ln_step: f64,
    target: f64,
    observations: u64,
    frozen: bool,
}

impl StepAdaptor {
    pub fn new(initial_step: f64, target: f64) -> Self {
        Self {
            ln_step: initial_step.ln(),
            target,
            observations: 0,
            frozen: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.ln_step.exp()
    }

    /// Feeds back one observed acceptance probability.
    pub fn observe(&mut self, accept_prob: f64) {
        if self.frozen {
            return;
        }
        self.observations += 1;
        let gain = (self.observations as f64).powf(-0.6);
        self.ln_step += gain * (accept_prob - self.target);
        self.ln_step = self.ln_step.clamp(-12.0, 6.0);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}
