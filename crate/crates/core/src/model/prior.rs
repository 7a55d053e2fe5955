//! Prior configuration for the BKMR model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the BKMR priors.
///
/// `lambda = tau / sigma^2` carries a Gamma prior specified by mean and
/// variance; `shape = mean^2/var` and `rate = mean/var` convert to the
/// shape/rate parameterization used internally. The slab density for the
/// component weights `r_l` is Gamma(shape, rate) on the positive reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Shape of the Gamma prior on the error precision `sigma^-2`.
    pub a_sigma: f64,
    /// Rate of the Gamma prior on the error precision `sigma^-2`.
    pub b_sigma: f64,
    /// Prior mean of `lambda`.
    pub mu_lambda: f64,
    /// Prior variance of `lambda`.
    pub var_lambda: f64,
    /// Support of the uniform prior on the smoothness parameter `rho`.
    pub rho_bounds: (f64, f64),
    /// Prior inclusion probability for each kernel component under variable selection.
    pub pi_inclusion: f64,
    /// Slab shape for the included component weights.
    pub r_slab_shape: f64,
    /// Slab rate for the included component weights.
    pub r_slab_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a_sigma: 0.001,
            b_sigma: 0.001,
            mu_lambda: 10.0,
            var_lambda: 100.0,
            rho_bounds: (0.0, 100.0),
            pi_inclusion: 0.5,
            r_slab_shape: 1.0,
            r_slab_rate: 0.1,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("mu_lambda", self.mu_lambda),
            ("var_lambda", self.var_lambda),
            ("r_slab_shape", self.r_slab_shape),
            ("r_slab_rate", self.r_slab_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.pi_inclusion > 0.0 && self.pi_inclusion < 1.0) {
            return Err(Error::InvalidInput(format!(
                "pi_inclusion must lie in (0,1), got {}",
                self.pi_inclusion
            )));
        }
        let (a, b) = self.rho_bounds;
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) {
            return Err(Error::InvalidInput(format!("bad rho bounds ({a}, {b})")));
        }
        Ok(())
    }

    /// Gamma shape for `lambda` (mean^2 / variance).
    pub fn lambda_shape(&self) -> f64 {
        self.mu_lambda * self.mu_lambda / self.var_lambda
    }

    /// Gamma rate for `lambda` (mean / variance).
    pub fn lambda_rate(&self) -> f64 {
        self.mu_lambda / self.var_lambda
    }
}
