//! Metropolis-within-Gibbs sampler for BKMR models on the marginalized
//! likelihood `y ~ N(C beta, sigma^2 (I + lambda K))`.
//!
//! The surface values themselves are never sampled; they are integrated out
//! and recovered later from the Gaussian-process conditional (see
//! [`crate::surface`]). Per iteration the sampler updates:
//! `lambda` by random walk on the log scale, the kernel state (either the
//! shared smoothness `rho`, or one randomly chosen component's spike-and-slab
//! weight), `beta` by its exact Gibbs conditional, and `sigma^2` by its exact
//! Gibbs conditional.

mod adapt;
mod loglik;
mod updates;

pub use loglik::{marginal_loglik, VFactor};
pub use updates::{beta_conditional, update_beta, update_sigma2};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    kernel_matrix, Dataset, Draw, KernelInputSpec, KernelState, PosteriorDraws, PriorConfig,
    TrainingData,
};
use crate::model::{AcceptanceReport, BlockRate};
use adapt::StepAdaptor;
use loglik::loglik_from_parts;

/// MCMC run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    /// Iterations discarded from the front of the chain.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    pub seed: u64,
    /// Random-walk sd for log(lambda).
    pub lambda_step: f64,
    /// Random-walk sd for log(r_l) refinement moves.
    pub r_step: f64,
    /// Random-walk sd for rho.
    pub rho_step: f64,
    /// Component-wise spike-and-slab selection; when off, a single shared
    /// smoothness parameter is sampled instead.
    pub variable_selection: bool,
    /// Length of the adaptation window in iterations; defaults to half the burn-in.
    pub adapt_window: Option<usize>,
    /// Acceptance probability targeted by step-size adaptation.
    pub target_accept: f64,
    /// Test hook: pin lambda to a fixed value (0 disables the kernel entirely).
    pub fix_lambda: Option<f64>,
    /// Test hook: drop the likelihood so MH blocks sample their priors.
    /// The beta and sigma^2 blocks are skipped (their priors are improper).
    pub prior_only: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            lambda_step: 0.3,
            r_step: 0.2,
            rho_step: 2.0,
            variable_selection: false,
            adapt_window: None,
            target_accept: 0.35,
            fix_lambda: None,
            prior_only: false,
        }
    }
}

impl McmcConfig {
    /// Config with `iterations` total draws, burn-in at half, and a seed.
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in: iterations / 2,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be >= 1".into()));
        }
        for (name, v) in [
            ("lambda_step", self.lambda_step),
            ("r_step", self.r_step),
            ("rho_step", self.rho_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidInput("target_accept must lie in (0,1)".into()));
        }
        if let Some(w) = self.adapt_window {
            if w > self.burn_in {
                return Err(Error::InvalidInput(format!(
                    "adapt_window ({w}) cannot exceed burn_in ({})",
                    self.burn_in
                )));
            }
        }
        if let Some(l) = self.fix_lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidInput(format!("fix_lambda must be >= 0, got {l}")));
            }
        }
        Ok(())
    }

    fn adapt_len(&self) -> usize {
        self.adapt_window.unwrap_or(self.burn_in / 2)
    }
}

/// Fits a BKMR model with the dataset's outcome as the response.
pub fn fit_bkmr(
    dataset: &Dataset,
    kernel_inputs: &KernelInputSpec,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    let train = TrainingData::for_outcome(dataset, kernel_inputs)?;
    fit_bkmr_train(train, priors, mcmc)
}

/// Fits a BKMR model with the dataset's mediator as the response.
pub fn fit_bkmr_mediator(
    dataset: &Dataset,
    kernel_inputs: &KernelInputSpec,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    let train = TrainingData::for_mediator(dataset, kernel_inputs)?;
    fit_bkmr_train(train, priors, mcmc)
}

/// Fits a BKMR model on pre-assembled training data.
pub fn fit_bkmr_train(
    train: TrainingData,
    priors: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    priors.validate()?;
    mcmc.validate()?;
    let mut sampler = Sampler::init(train, priors, mcmc)?;
    sampler.run()
}

struct Counter {
    proposals: u64,
    accepts: u64,
}

impl Counter {
    fn new() -> Self {
        Self { proposals: 0, accepts: 0 }
    }

    fn record(&mut self, accepted: bool, counting: bool) {
        if counting {
            self.proposals += 1;
            if accepted {
                self.accepts += 1;
            }
        }
    }

    fn rate(&self) -> Option<BlockRate> {
        (self.proposals > 0).then_some(BlockRate {
            proposals: self.proposals,
            accepts: self.accepts,
        })
    }
}

struct Sampler<'a> {
    train: TrainingData,
    priors: &'a PriorConfig,
    cfg: &'a McmcConfig,
    rng: ChaCha8Rng,
    beta: DVector<f64>,
    sigma2: f64,
    lambda: f64,
    kstate: KernelState,
    resid: DVector<f64>,
    /// Factorization of `I + lambda K` for the current state; absent in
    /// prior-only mode.
    factor: Option<VFactor>,
    log_det: f64,
    qform: f64,
    lambda_adapt: StepAdaptor,
    rho_adapt: StepAdaptor,
    refine_adapt: StepAdaptor,
    n_lambda: Counter,
    n_rho: Counter,
    n_toggle: Counter,
    n_refine: Counter,
}

impl<'a> Sampler<'a> {
    fn init(train: TrainingData, priors: &'a PriorConfig, cfg: &'a McmcConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = train.n();
        let p = train.p();
        let dim = train.schema.dim();

        // beta from OLS, sigma2 from the residual variance
        let (beta, rss) = if p > 0 {
            linalg::ols(&train.c, &train.y, &train.c_names)?
        } else {
            (DVector::zeros(0), train.y.norm_squared())
        };
        let dof = (n.saturating_sub(p)).max(1) as f64;
        let sigma2 = (rss / dof).max(1e-8);
        let resid = if p > 0 { &train.y - &train.c * &beta } else { train.y.clone() };

        let lambda = cfg.fix_lambda.unwrap_or(10.0);

        let kstate = if cfg.variable_selection {
            let slab = Gamma::new(priors.r_slab_shape, 1.0 / priors.r_slab_rate)
                .map_err(|e| Error::Initialization(format!("slab prior: {e}")))?;
            let r: Vec<f64> = (0..dim).map(|_| slab.sample(&mut rng).max(1e-12)) .collect();
            KernelState::weights_all_included(r)?
        } else {
            let (a, b) = priors.rho_bounds;
            let rho = rng.gen_range(a..b).max(f64::MIN_POSITIVE);
            KernelState::single_smoothness(rho, dim)?
        };

        let mut sampler = Sampler {
            train,
            priors,
            cfg,
            rng,
            beta,
            sigma2,
            lambda,
            kstate,
            resid,
            factor: None,
            log_det: 0.0,
            qform: 0.0,
            lambda_adapt: StepAdaptor::new(cfg.lambda_step, cfg.target_accept),
            rho_adapt: StepAdaptor::new(cfg.rho_step, cfg.target_accept),
            refine_adapt: StepAdaptor::new(cfg.r_step, cfg.target_accept),
            n_lambda: Counter::new(),
            n_rho: Counter::new(),
            n_toggle: Counter::new(),
            n_refine: Counter::new(),
        };

        if !cfg.prior_only {
            let (factor, log_det, qform) = sampler.factorize(sampler.lambda, &sampler.kstate)?;
            sampler.factor = factor;
            sampler.log_det = log_det;
            sampler.qform = qform;
            let ll = sampler.current_loglik();
            if !ll.is_finite() {
                return Err(Error::Initialization(format!(
                    "non-finite log likelihood at the start point ({ll})"
                )));
            }
        }
        Ok(sampler)
    }

    /// Builds the factor of `I + lambda K(state)` and the derived likelihood
    /// parts for the current residual.
    fn factorize(
        &self,
        lambda: f64,
        state: &KernelState,
    ) -> Result<(Option<VFactor>, f64, f64)> {
        if self.cfg.prior_only {
            return Ok((None, 0.0, 0.0));
        }
        if lambda == 0.0 {
            return Ok((None, 0.0, self.resid.norm_squared()));
        }
        let k = kernel_matrix(&self.train.x, state)?;
        let factor = VFactor::new(&k, lambda)?;
        let qform = factor.quad_form(&self.resid);
        let log_det = factor.log_det();
        Ok((Some(factor), log_det, qform))
    }

    fn current_loglik(&self) -> f64 {
        if self.cfg.prior_only {
            0.0
        } else {
            loglik_from_parts(self.train.n(), self.sigma2, self.log_det, self.qform)
        }
    }

    fn loglik_of(&self, log_det: f64, qform: f64) -> f64 {
        if self.cfg.prior_only {
            0.0
        } else {
            loglik_from_parts(self.train.n(), self.sigma2, log_det, qform)
        }
    }

    /// log density of the Gamma(shape, rate) prior on lambda, up to a constant.
    fn lambda_log_prior(&self, lambda: f64) -> f64 {
        (self.priors.lambda_shape() - 1.0) * lambda.ln() - self.priors.lambda_rate() * lambda
    }

    /// log slab density for an included weight, up to a constant.
    fn slab_log_density(&self, r: f64) -> f64 {
        (self.priors.r_slab_shape - 1.0) * r.ln() - self.priors.r_slab_rate * r
    }

    fn update_lambda(&mut self, adapting: bool, counting: bool) -> Result<()> {
        let step = self.lambda_adapt.step();
        let eta: f64 = self.rng.sample(StandardNormal);
        let proposal = (self.lambda.ln() + step * eta).exp();
        let mut accept_prob = 0.0;
        let mut accepted = false;
        if proposal.is_finite() && proposal > 0.0 {
            let (factor, log_det, qform) = self.factorize(proposal, &self.kstate)?;
            let log_ratio = self.loglik_of(log_det, qform) + self.lambda_log_prior(proposal)
                + proposal.ln()
                - self.current_loglik()
                - self.lambda_log_prior(self.lambda)
                - self.lambda.ln();
            accept_prob = log_ratio.exp().min(1.0);
            if accept_prob.is_nan() {
                accept_prob = 0.0;
            }
            if self.rng.gen::<f64>() < accept_prob {
                self.lambda = proposal;
                self.factor = factor;
                self.log_det = log_det;
                self.qform = qform;
                accepted = true;
            }
        }
        if adapting {
            self.lambda_adapt.observe(accept_prob);
        }
        self.n_lambda.record(accepted, counting);
        Ok(())
    }

    fn update_rho(&mut self, adapting: bool, counting: bool) -> Result<()> {
        let KernelState::SingleSmoothness { rho, dim } = self.kstate else {
            return Ok(());
        };
        let (a, b) = self.priors.rho_bounds;
        let step = self.rho_adapt.step();
        let eta: f64 = self.rng.sample(StandardNormal);
        let proposal = rho + step * eta;
        let mut accept_prob = 0.0;
        let mut accepted = false;
        if proposal > a && proposal < b {
            let state = KernelState::SingleSmoothness { rho: proposal, dim };
            let (factor, log_det, qform) = self.factorize(self.lambda, &state)?;
            let log_ratio = self.loglik_of(log_det, qform) - self.current_loglik();
            accept_prob = log_ratio.exp().min(1.0);
            if accept_prob.is_nan() {
                accept_prob = 0.0;
            }
            if self.rng.gen::<f64>() < accept_prob {
                self.kstate = state;
                self.factor = factor;
                self.log_det = log_det;
                self.qform = qform;
                accepted = true;
            }
        }
        if adapting {
            self.rho_adapt.observe(accept_prob);
        }
        self.n_rho.record(accepted, counting);
        Ok(())
    }

    /// Spike-and-slab move on one randomly selected component: first a toggle
    /// of its inclusion indicator, then (if included) a log-scale random-walk
    /// refinement of its weight.
    fn update_component(&mut self, adapting: bool, counting: bool) -> Result<()> {
        let dim = self.kstate.dim();
        let l = self.rng.gen_range(0..dim);
        self.toggle_component(l, counting)?;
        self.refine_component(l, adapting, counting)?;
        Ok(())
    }

    fn toggle_component(&mut self, l: usize, counting: bool) -> Result<()> {
        let KernelState::ComponentWeights { r, delta } = &self.kstate else {
            return Ok(());
        };
        let pi = self.priors.pi_inclusion;
        let mut r_new = r.clone();
        let mut delta_new = delta.clone();
        // propose from the slab when switching on: the slab density cancels
        // from the Hastings ratio, leaving likelihood and inclusion odds
        let log_prior_odds = if delta[l] {
            r_new[l] = 0.0;
            delta_new[l] = false;
            (1.0 - pi).ln() - pi.ln()
        } else {
            let slab = Gamma::new(self.priors.r_slab_shape, 1.0 / self.priors.r_slab_rate)
                .map_err(|e| Error::Numerical(format!("slab prior: {e}")))?;
            r_new[l] = slab.sample(&mut self.rng).max(1e-300);
            delta_new[l] = true;
            pi.ln() - (1.0 - pi).ln()
        };
        let state = KernelState::component_weights(r_new, delta_new)?;
        let (factor, log_det, qform) = self.factorize(self.lambda, &state)?;
        let log_ratio = self.loglik_of(log_det, qform) - self.current_loglik() + log_prior_odds;
        let mut accept_prob = log_ratio.exp().min(1.0);
        if accept_prob.is_nan() {
            accept_prob = 0.0;
        }
        let accepted = self.rng.gen::<f64>() < accept_prob;
        if accepted {
            self.kstate = state;
            self.factor = factor;
            self.log_det = log_det;
            self.qform = qform;
        }
        self.n_toggle.record(accepted, counting);
        Ok(())
    }

    fn refine_component(&mut self, l: usize, adapting: bool, counting: bool) -> Result<()> {
        let KernelState::ComponentWeights { r, delta } = &self.kstate else {
            return Ok(());
        };
        if !delta[l] {
            return Ok(());
        }
        let current = r[l];
        let step = self.refine_adapt.step();
        let eta: f64 = self.rng.sample(StandardNormal);
        let proposal = (current.ln() + step * eta).exp();
        let mut accept_prob = 0.0;
        let mut accepted = false;
        if proposal.is_finite() && proposal > 0.0 {
            let mut r_new = r.clone();
            r_new[l] = proposal;
            let state = KernelState::component_weights(r_new, delta.clone())?;
            let (factor, log_det, qform) = self.factorize(self.lambda, &state)?;
            // log-scale walk carries a Jacobian term r'/r
            let log_ratio = self.loglik_of(log_det, qform) + self.slab_log_density(proposal)
                + proposal.ln()
                - self.current_loglik()
                - self.slab_log_density(current)
                - current.ln();
            accept_prob = log_ratio.exp().min(1.0);
            if accept_prob.is_nan() {
                accept_prob = 0.0;
            }
            if self.rng.gen::<f64>() < accept_prob {
                self.kstate = state;
                self.factor = factor;
                self.log_det = log_det;
                self.qform = qform;
                accepted = true;
            }
        }
        if adapting {
            self.refine_adapt.observe(accept_prob);
        }
        self.n_refine.record(accepted, counting);
        Ok(())
    }

    fn update_beta_block(&mut self) -> Result<()> {
        if self.train.p() == 0 || self.cfg.prior_only {
            return Ok(());
        }
        match &self.factor {
            Some(factor) => {
                self.beta = update_beta(&self.train, factor, self.sigma2, &mut self.rng)?;
                self.resid = &self.train.y - &self.train.c * &self.beta;
                self.qform = factor.quad_form(&self.resid);
            }
            None => {
                // lambda = 0: V = I, ordinary conjugate normal regression
                let a = self.train.c.transpose() * &self.train.c;
                let b = self.train.c.transpose() * &self.train.y;
                let chol = linalg::cholesky_spd(&a)?;
                let mean = chol.solve(&b);
                let p = mean.len();
                let eta =
                    DVector::from_iterator(p, (0..p).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
                let x = chol
                    .l()
                    .transpose()
                    .solve_upper_triangular(&eta)
                    .ok_or_else(|| Error::Numerical("triangular solve in beta update".into()))?;
                self.beta = mean + x * self.sigma2.sqrt();
                self.resid = &self.train.y - &self.train.c * &self.beta;
                self.qform = self.resid.norm_squared();
            }
        }
        Ok(())
    }

    fn update_sigma2_block(&mut self) -> Result<()> {
        if self.cfg.prior_only {
            return Ok(());
        }
        self.sigma2 = update_sigma2(
            self.qform,
            self.train.n(),
            self.priors.a_sigma,
            self.priors.b_sigma,
            &mut self.rng,
        )?;
        Ok(())
    }

    fn run(mut self) -> Result<PosteriorDraws> {
        let cfg = self.cfg;
        let adapt_len = cfg.adapt_len();
        let kernel_frozen = cfg.fix_lambda == Some(0.0);
        let retained = (cfg.iterations - cfg.burn_in).div_ceil(cfg.thin);
        let mut draws = Vec::with_capacity(retained);

        for t in 0..cfg.iterations {
            let adapting = t < adapt_len;
            let counting = t >= adapt_len;
            if cfg.fix_lambda.is_none() {
                self.update_lambda(adapting, counting)?;
            }
            if !kernel_frozen {
                if cfg.variable_selection {
                    self.update_component(adapting, counting)?;
                } else {
                    self.update_rho(adapting, counting)?;
                }
            }
            self.update_beta_block()?;
            self.update_sigma2_block()?;
            if t + 1 == adapt_len {
                self.lambda_adapt.freeze();
                self.rho_adapt.freeze();
                self.refine_adapt.freeze();
            }
            if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
                draws.push(Draw {
                    beta: self.beta.iter().cloned().collect(),
                    sigma2: self.sigma2,
                    lambda: self.lambda,
                    kernel_state: self.kstate.clone(),
                });
            }
        }

        let acceptance = AcceptanceReport {
            lambda: self.n_lambda.rate(),
            rho: self.n_rho.rate(),
            toggle: self.n_toggle.rate(),
            refine: self.n_refine.rate(),
        };
        let mut warnings = Vec::new();
        for (name, c) in [
            ("lambda", &self.n_lambda),
            ("rho", &self.n_rho),
            ("toggle", &self.n_toggle),
            ("refine", &self.n_refine),
        ] {
            if c.proposals >= 50 && c.accepts == 0 {
                warnings.push(format!(
                    "{name} block accepted none of {} post-adaptation proposals",
                    c.proposals
                ));
            }
        }
        PosteriorDraws::new(self.train, draws, acceptance, warnings)
    }
}
