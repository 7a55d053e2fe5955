//! Closed-form mediation effects under linear mediator and outcome models.
//!
//! The mediator model is `E[M] = beta0 + beta1'Z + beta2'C`. The outcome model
//! is `E[Y] = theta0 + theta1'Z + theta2 M + theta3'(Z M) + theta4'C`, with
//! `theta3` forced to zero in traditional (product-method) mode. Effects for a
//! change from `z*` to `z` at covariate row `c`:
//!
//! - `NDE = theta1'(z - z*) + theta3'(z - z*) [beta0 + beta1'z* + beta2'c]`
//! - `NIE = (theta2 + theta3'z) [beta1'(z - z*)]`
//! - `CDE(m) = (theta1' + theta3' m)(z - z*)`
//!
//! and the traditional product method reads `NDE = gamma1'(z - z*)`,
//! `NIE = gamma2 beta1'(z - z*)` off its own no-interaction outcome fit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mediation::EffectSamples;
use crate::model::Dataset;

/// Whether the outcome model carries exposure-mediator interaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearMode {
    Interaction,
    Traditional,
}

/// One declared extra outcome-model column: `covariate^power`, optionally
/// multiplied by an exposure column (a modifier-by-exposure interaction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTerm {
    pub covariate: String,
    pub power: u32,
    pub times_exposure: Option<String>,
}

impl ExtraTerm {
    pub fn name(&self) -> String {
        let base = if self.power == 1 {
            self.covariate.clone()
        } else {
            format!("{}^{}", self.covariate, self.power)
        };
        match &self.times_exposure {
            Some(e) => format!("{base}:{e}"),
            None => base,
        }
    }
}

/// OLS estimates of the linear mediator/outcome pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearMediationFit {
    pub mode: LinearMode,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub theta0: f64,
    pub theta1: Vec<f64>,
    pub theta2: f64,
    /// Zero vector in traditional mode.
    pub theta3: Vec<f64>,
    pub theta4: Vec<f64>,
    /// Fitted coefficients of the declared extra outcome columns.
    pub extra: Vec<(ExtraTerm, f64)>,
    pub sigma2_m: f64,
    pub sigma2_y: f64,
    pub exposure_names: Vec<String>,
    pub covariate_names: Vec<String>,
}

fn column_index(names: &[String], name: &str, what: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Schema(format!("unknown {what} column '{name}'")))
}

fn extra_column(dataset: &Dataset, term: &ExtraTerm) -> Result<DVector<f64>> {
    if term.power == 0 {
        return Err(Error::InvalidInput(format!(
            "extra term '{}' has power 0",
            term.name()
        )));
    }
    let ci = column_index(dataset.c_names(), &term.covariate, "covariate")?;
    let mut col = dataset.c().column(ci).map(|v| v.powi(term.power as i32));
    if let Some(exp_name) = &term.times_exposure {
        let zi = column_index(dataset.z_names(), exp_name, "exposure")?;
        col.component_mul_assign(&dataset.z().column(zi));
    }
    Ok(col)
}

/// Fits the mediator and outcome regressions by OLS. The dataset must carry a
/// mediator; residual variances use `RSS / (n - p)`.
pub fn fit_linear_mediation(
    dataset: &Dataset,
    mode: LinearMode,
    extra_terms: &[ExtraTerm],
) -> Result<LinearMediationFit> {
    let m = dataset
        .m()
        .ok_or_else(|| Error::Schema("linear mediation needs a mediator column".into()))?;
    let n = dataset.n();
    let l = dataset.l();
    let p = dataset.p();

    // mediator design: intercept | Z | C
    let mut med_cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    let mut med_names: Vec<String> = vec!["(intercept)".into()];
    for j in 0..l {
        med_cols.push(dataset.z().column(j).into_owned());
        med_names.push(dataset.z_names()[j].clone());
    }
    for j in 0..p {
        med_cols.push(dataset.c().column(j).into_owned());
        med_names.push(dataset.c_names()[j].clone());
    }
    let med_x = DMatrix::from_columns(&med_cols.iter().map(|c| c.column(0)).collect::<Vec<_>>());
    if n <= med_x.ncols() {
        return Err(Error::InvalidInput(format!(
            "mediator model has {} regressors but only {n} rows",
            med_x.ncols()
        )));
    }
    let (med_beta, med_rss) = linalg::ols(&med_x, m, &med_names)?;
    let sigma2_m = med_rss / (n - med_x.ncols()) as f64;

    // outcome design: intercept | Z | M | [Z*M] | C | extras
    let mut out_cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    let mut out_names: Vec<String> = vec!["(intercept)".into()];
    for j in 0..l {
        out_cols.push(dataset.z().column(j).into_owned());
        out_names.push(dataset.z_names()[j].clone());
    }
    out_cols.push(m.clone());
    out_names.push("mediator".into());
    if mode == LinearMode::Interaction {
        for j in 0..l {
            out_cols.push(dataset.z().column(j).component_mul(m));
            out_names.push(format!("{}:mediator", dataset.z_names()[j]));
        }
    }
    for j in 0..p {
        out_cols.push(dataset.c().column(j).into_owned());
        out_names.push(dataset.c_names()[j].clone());
    }
    for term in extra_terms {
        out_cols.push(extra_column(dataset, term)?);
        out_names.push(term.name());
    }
    let out_x = DMatrix::from_columns(&out_cols.iter().map(|c| c.column(0)).collect::<Vec<_>>());
    if n <= out_x.ncols() {
        return Err(Error::InvalidInput(format!(
            "outcome model has {} regressors but only {n} rows",
            out_x.ncols()
        )));
    }
    let (out_beta, out_rss) = linalg::ols(&out_x, dataset.y(), &out_names)?;
    let sigma2_y = out_rss / (n - out_x.ncols()) as f64;

    // unpack coefficient blocks by position
    let beta1 = (0..l).map(|j| med_beta[1 + j]).collect();
    let beta2 = (0..p).map(|j| med_beta[1 + l + j]).collect();
    let theta1: Vec<f64> = (0..l).map(|j| out_beta[1 + j]).collect();
    let theta2 = out_beta[1 + l];
    let (theta3, after_int): (Vec<f64>, usize) = if mode == LinearMode::Interaction {
        ((0..l).map(|j| out_beta[2 + l + j]).collect(), 2 + 2 * l)
    } else {
        (vec![0.0; l], 2 + l)
    };
    let theta4 = (0..p).map(|j| out_beta[after_int + j]).collect();
    let extra = extra_terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), out_beta[after_int + p + i]))
        .collect();

    Ok(LinearMediationFit {
        mode,
        beta0: med_beta[0],
        beta1,
        beta2,
        theta0: out_beta[0],
        theta1,
        theta2,
        theta3,
        theta4,
        extra,
        sigma2_m,
        sigma2_y,
        exposure_names: dataset.z_names().to_vec(),
        covariate_names: dataset.c_names().to_vec(),
    })
}

impl LinearMediationFit {
    fn check_profiles(&self, z: &[f64], z_star: &[f64]) -> Result<()> {
        let l = self.theta1.len();
        if z.len() != l || z_star.len() != l {
            return Err(Error::InvalidInput(format!(
                "profiles have lengths {}/{}, model has {l} exposures",
                z.len(),
                z_star.len()
            )));
        }
        if self.extra.iter().any(|(t, _)| t.times_exposure.is_some()) {
            return Err(Error::InvalidState(
                "fold modifier-by-exposure terms with at_fixed_modifiers before computing effects"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Folds extra outcome terms into the main coefficients at fixed modifier
    /// values: a `w^p * z_l` term adds `coef * w^p` to `theta1[l]`, a plain
    /// `w^p` term shifts the intercept. The returned fit has no extra terms.
    pub fn at_fixed_modifiers(&self, values: &[(String, f64)]) -> Result<Self> {
        let mut folded = self.clone();
        folded.extra = Vec::new();
        for (term, coef) in &self.extra {
            let w = values
                .iter()
                .find(|(n, _)| n == &term.covariate)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "no fixing value for modifier '{}'",
                        term.covariate
                    ))
                })?;
            let wp = w.powi(term.power as i32);
            match &term.times_exposure {
                Some(e) => {
                    let idx = column_index(&self.exposure_names, e, "exposure")?;
                    folded.theta1[idx] += coef * wp;
                }
                None => folded.theta0 += coef * wp,
            }
        }
        Ok(folded)
    }

    /// Expected outcome under the fitted linear model at `(z, m, c)`.
    pub fn outcome_mean(&self, z: &[f64], m: f64, c: &[f64]) -> f64 {
        let zt: f64 = self.theta1.iter().zip(z).map(|(t, v)| t * v).sum();
        let zmt: f64 = self.theta3.iter().zip(z).map(|(t, v)| t * v * m).sum();
        let ct: f64 = self.theta4.iter().zip(c).map(|(t, v)| t * v).sum();
        self.theta0 + zt + self.theta2 * m + zmt + ct
    }

    /// Expected mediator under the fitted linear model at `(z, c)`.
    pub fn mediator_mean(&self, z: &[f64], c: &[f64]) -> f64 {
        let zb: f64 = self.beta1.iter().zip(z).map(|(b, v)| b * v).sum();
        let cb: f64 = self.beta2.iter().zip(c).map(|(b, v)| b * v).sum();
        self.beta0 + zb + cb
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(z: &[f64], z_star: &[f64]) -> Vec<f64> {
    z.iter().zip(z_star).map(|(a, b)| a - b).collect()
}

/// Natural direct effect under the interaction-mode closed form.
pub fn linear_nde(fit: &LinearMediationFit, z: &[f64], z_star: &[f64], c_bar: &[f64]) -> Result<f64> {
    fit.check_profiles(z, z_star)?;
    if c_bar.len() != fit.beta2.len() {
        return Err(Error::InvalidInput(format!(
            "covariate row has length {}, model has {}",
            c_bar.len(),
            fit.beta2.len()
        )));
    }
    let d = diff(z, z_star);
    let m_at_star = fit.beta0 + dot(&fit.beta1, z_star) + dot(&fit.beta2, c_bar);
    Ok(dot(&fit.theta1, &d) + dot(&fit.theta3, &d) * m_at_star)
}

/// Natural indirect effect under the interaction-mode closed form.
pub fn linear_nie(fit: &LinearMediationFit, z: &[f64], z_star: &[f64]) -> Result<f64> {
    fit.check_profiles(z, z_star)?;
    let d = diff(z, z_star);
    Ok((fit.theta2 + dot(&fit.theta3, z)) * dot(&fit.beta1, &d))
}

/// Controlled direct effect at mediator level `m`.
pub fn linear_cde(fit: &LinearMediationFit, z: &[f64], z_star: &[f64], m: f64) -> Result<f64> {
    fit.check_profiles(z, z_star)?;
    let d = diff(z, z_star);
    Ok(dot(&fit.theta1, &d) + dot(&fit.theta3, &d) * m)
}

/// Product-method effects `(NDE, NIE)` from a traditional-mode fit, using the
/// traditional outcome model's own mediator coefficient for the product.
pub fn traditional_effects(
    fit: &LinearMediationFit,
    z: &[f64],
    z_star: &[f64],
) -> Result<(f64, f64)> {
    if fit.mode != LinearMode::Traditional {
        return Err(Error::InvalidState(
            "traditional effects require a traditional-mode fit".into(),
        ));
    }
    fit.check_profiles(z, z_star)?;
    let d = diff(z, z_star);
    Ok((dot(&fit.theta1, &d), fit.theta2 * dot(&fit.beta1, &d)))
}

/// All effects of one fit for a contrast, in the same shape the
/// counterfactual engine produces (one "draw" holding the point estimate).
pub fn point_effects(
    fit: &LinearMediationFit,
    z: &[f64],
    z_star: &[f64],
    c_bar: &[f64],
    m_values: &[f64],
) -> Result<EffectSamples> {
    let (nde, nie) = match fit.mode {
        LinearMode::Interaction => (linear_nde(fit, z, z_star, c_bar)?, linear_nie(fit, z, z_star)?),
        LinearMode::Traditional => traditional_effects(fit, z, z_star)?,
    };
    let te = nde + nie;
    let cde = m_values
        .iter()
        .map(|&m| Ok((m, vec![linear_cde(fit, z, z_star, m)?])))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectSamples {
        nde: vec![nde],
        nie: vec![nie],
        te: vec![te],
        cde,
        warnings: vec![],
    })
}

/// Nonparametric bootstrap of the closed-form effects: refits on row
/// resamples and returns the per-resample effects as draws. Resamples that
/// fail (rank-deficient redraws) are skipped and counted in the warnings.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_effects(
    dataset: &Dataset,
    mode: LinearMode,
    extra_terms: &[ExtraTerm],
    z: &[f64],
    z_star: &[f64],
    c_bar: &[f64],
    m_values: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<EffectSamples> {
    if n_boot == 0 {
        return Err(Error::InvalidInput("need at least one bootstrap resample".into()));
    }
    if extra_terms.iter().any(|t| t.times_exposure.is_some()) {
        return Err(Error::InvalidInput(
            "bootstrap with modifier-by-exposure terms must fold them per refit; \
             fix the modifier values and pass the folded terms instead"
                .into(),
        ));
    }
    let n = dataset.n();
    let results: Vec<Option<(f64, f64, f64, Vec<f64>)>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resampled = resample(dataset, &rows).ok()?;
            let fit = fit_linear_mediation(&resampled, mode, extra_terms).ok()?;
            let (nde, nie) = match mode {
                LinearMode::Interaction => (
                    linear_nde(&fit, z, z_star, c_bar).ok()?,
                    linear_nie(&fit, z, z_star).ok()?,
                ),
                LinearMode::Traditional => traditional_effects(&fit, z, z_star).ok()?,
            };
            let cde: Option<Vec<f64>> = m_values
                .iter()
                .map(|&m| linear_cde(&fit, z, z_star, m).ok())
                .collect();
            Some((nde, nie, nde + nie, cde?))
        })
        .collect();

    let mut out = EffectSamples::default();
    let mut cde_cols: Vec<Vec<f64>> = vec![Vec::new(); m_values.len()];
    let mut failures = 0usize;
    for r in results {
        match r {
            Some((nde, nie, te, cde)) => {
                out.nde.push(nde);
                out.nie.push(nie);
                out.te.push(te);
                for (col, v) in cde_cols.iter_mut().zip(cde) {
                    col.push(v);
                }
            }
            None => failures += 1,
        }
    }
    if out.te.is_empty() {
        return Err(Error::Numerical("every bootstrap resample failed to fit".into()));
    }
    if failures > 0 {
        out.warnings.push(format!("{failures} of {n_boot} bootstrap resamples failed and were skipped"));
    }
    out.cde = m_values.iter().cloned().zip(cde_cols).collect();
    Ok(out)
}

fn resample(dataset: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let k = rows.len();
    let y = DVector::from_fn(k, |i, _| dataset.y()[rows[i]]);
    let z = DMatrix::from_fn(k, dataset.l(), |i, j| dataset.z()[(rows[i], j)]);
    let m = dataset
        .m()
        .map(|mv| DVector::from_fn(k, |i, _| mv[rows[i]]));
    let c = DMatrix::from_fn(k, dataset.p(), |i, j| dataset.c()[(rows[i], j)]);
    Dataset::new(
        y,
        z,
        dataset.z_names().to_vec(),
        m,
        c,
        dataset.c_names().to_vec(),
    )
}
