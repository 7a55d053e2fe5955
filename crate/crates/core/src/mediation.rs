//! Counterfactual-simulation estimation of mediation effects.
//!
//! Three independently fitted BKMR models feed the algorithm: a mediator
//! model (exposures in the kernel), an outcome model (exposures plus the
//! mediator in the kernel), and a total-effect model (exposures only). Per
//! retained draw `j`:
//!
//! 1. draw `K` mediator values at the baseline profile
//!    `M^(jk) = h_M^(j)(z*) + c^T beta^(j) + sigma_M^(j) N(0,1)`;
//! 2. push them through the outcome model at the target profile and average
//!    to get `Ybar_{z,M_{z*}}^(j)`;
//! 3. read `Y_z^(j)` and `Y_{z*}^(j)` off the total-effect model;
//! 4. set `NDE = Ybar - Y_{z*}`, `NIE = Y_z - Ybar`, `TE = Y_z - Y_{z*}`.
//!
//! The per-draw loop runs in parallel; each draw owns an RNG substream
//! derived from the seed and the draw index, so results do not depend on
//! thread count or execution order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelSchema, PosteriorDraws};
use crate::stats;
use crate::surface::{PosteriorSurface, SurfaceMode, SurfaceQuery};

/// The counterfactual question: which exposure change, at which covariate and
/// modifier fixing point, with how many inner mediator samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastSpec {
    /// Baseline exposure profile `z*`.
    pub z_star: Vec<f64>,
    /// Target exposure profile `z`.
    pub z: Vec<f64>,
    /// Covariate fixing row; defaults to the column means of the training
    /// covariates when absent.
    pub c_bar: Option<Vec<f64>>,
    /// Fixing values for non-exposure kernel inputs, by name.
    pub modifier_values: Vec<(String, f64)>,
    /// Inner Monte Carlo sample count for the mediator draw.
    pub k_inner: usize,
    /// Mediator fixing levels for controlled direct effects.
    pub m_values: Vec<f64>,
}

impl ContrastSpec {
    pub fn new(z_star: Vec<f64>, z: Vec<f64>) -> Self {
        Self {
            z_star,
            z,
            c_bar: None,
            modifier_values: Vec::new(),
            k_inner: 100,
            m_values: Vec::new(),
        }
    }

    fn validate(&self, l: usize) -> Result<()> {
        if self.z.len() != l || self.z_star.len() != l {
            return Err(Error::InvalidInput(format!(
                "contrast profiles have lengths {}/{} but the model has {l} exposures",
                self.z.len(),
                self.z_star.len()
            )));
        }
        let all = self
            .z
            .iter()
            .chain(self.z_star.iter())
            .chain(self.m_values.iter())
            .chain(self.modifier_values.iter().map(|(_, v)| v));
        for v in all {
            if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite contrast value".into()));
            }
        }
        if let Some(cb) = &self.c_bar {
            if cb.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite covariate fixing value".into()));
            }
        }
        if self.k_inner == 0 {
            return Err(Error::InvalidInput("k_inner must be >= 1".into()));
        }
        Ok(())
    }

    fn is_null_contrast(&self) -> bool {
        self.z == self.z_star
    }
}

/// Where the per-draw `Y_z` and `Y_{z*}` samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeSource {
    /// The separate total-effect model (the default path).
    TeModel,
    /// Composed from the mediator and outcome models
    /// (`Y_z = Y_{z M_z}`, `Y_{z*} = Y_{z* M_{z*}}`), for sensitivity analysis.
    Composed,
}

/// Knobs of the estimation algorithm beyond the contrast itself.
#[derive(Debug, Clone)]
pub struct MediationOptions {
    pub te_source: TeSource,
    /// Evaluate `h` terms at the conditional mean (default) or as a
    /// conditional draw.
    pub surface_mode: SurfaceMode,
    /// Test hook: force `sigma_M = 0` in step 1.
    pub zero_mediator_noise: bool,
}

impl Default for MediationOptions {
    fn default() -> Self {
        Self {
            te_source: TeSource::TeModel,
            surface_mode: SurfaceMode::ConditionalMean,
            zero_mediator_noise: false,
        }
    }
}

/// Which effect a row of output refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    Te,
    Nde,
    Nie,
    Cde,
}

impl EffectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffectKind::Te => "te",
            EffectKind::Nde => "nde",
            EffectKind::Nie => "nie",
            EffectKind::Cde => "cde",
        }
    }
}

/// Point and interval summary of one effect's posterior samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectSummary {
    pub effect: EffectKind,
    pub m_value: Option<f64>,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

/// Per-draw posterior samples of the mediation effects plus summaries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EffectSamples {
    pub nde: Vec<f64>,
    pub nie: Vec<f64>,
    pub te: Vec<f64>,
    /// One sample vector per requested mediator fixing level.
    pub cde: Vec<(f64, Vec<f64>)>,
    pub warnings: Vec<String>,
}

impl EffectSamples {
    /// Summaries (mean, median, central 95% interval) for every populated effect.
    pub fn summaries(&self) -> Result<Vec<EffectSummary>> {
        let mut out = Vec::new();
        for (kind, samples) in [
            (EffectKind::Te, &self.te),
            (EffectKind::Nde, &self.nde),
            (EffectKind::Nie, &self.nie),
        ] {
            if !samples.is_empty() {
                out.push(EffectSummary {
                    effect: kind,
                    m_value: None,
                    stats: summarize_effects(samples)?,
                });
            }
        }
        for (m, samples) in &self.cde {
            out.push(EffectSummary {
                effect: EffectKind::Cde,
                m_value: Some(*m),
                stats: summarize_effects(samples)?,
            });
        }
        Ok(out)
    }

    /// Tidy rows `(method, effect, m_value, draw, value)`.
    pub fn write_tidy_csv<W: std::io::Write>(&self, out: W, method: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "effect", "m_value", "draw", "value"])?;
        for (kind, samples) in [
            (EffectKind::Te, &self.te),
            (EffectKind::Nde, &self.nde),
            (EffectKind::Nie, &self.nie),
        ] {
            for (j, v) in samples.iter().enumerate() {
                w.write_record([method, kind.as_str(), "", &j.to_string(), &format!("{v}")])?;
            }
        }
        for (m, samples) in &self.cde {
            for (j, v) in samples.iter().enumerate() {
                w.write_record([
                    method,
                    EffectKind::Cde.as_str(),
                    &format!("{m}"),
                    &j.to_string(),
                    &format!("{v}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean, median and central 95% interval of a sample vector.
pub fn summarize_effects(samples: &[f64]) -> Result<SummaryStats> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to summarize".into()));
    }
    let q = stats::quantiles(samples, &[0.025, 0.5, 0.975])?;
    Ok(SummaryStats {
        mean: stats::mean(samples),
        median: q[1],
        lower: q[0],
        upper: q[2],
    })
}

/// Assembles kernel-input rows for a schema from exposure values, an optional
/// mediator value, and named modifier fixing values.
struct QueryBuilder<'a> {
    schema: &'a KernelSchema,
    modifier_slots: Vec<f64>,
}

impl<'a> QueryBuilder<'a> {
    fn new(schema: &'a KernelSchema, modifier_values: &[(String, f64)]) -> Result<Self> {
        let mut slots = Vec::with_capacity(schema.modifiers.len());
        for name in &schema.modifiers {
            let v = modifier_values
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    Error::Schema(format!("no fixing value for kernel modifier '{name}'"))
                })?;
            slots.push(v);
        }
        for (name, _) in modifier_values {
            if !schema.modifiers.iter().any(|m| m == name) {
                return Err(Error::Schema(format!(
                    "modifier '{name}' is not a kernel input of this model"
                )));
            }
        }
        Ok(Self { schema, modifier_slots: slots })
    }

    fn row(&self, exposures: &[f64], mediator: Option<f64>) -> Result<Vec<f64>> {
        if exposures.len() != self.schema.exposures.len() {
            return Err(Error::Schema(format!(
                "profile has {} exposures, schema expects {}",
                exposures.len(),
                self.schema.exposures.len()
            )));
        }
        let mut row = exposures.to_vec();
        match (self.schema.includes_mediator, mediator) {
            (true, Some(m)) => row.push(m),
            (false, None) => {}
            (true, None) => {
                return Err(Error::Schema("schema expects a mediator value".into()));
            }
            (false, Some(_)) => {
                return Err(Error::Schema("schema takes no mediator value".into()));
            }
        }
        row.extend_from_slice(&self.modifier_slots);
        Ok(row)
    }

    fn matrix(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.schema.dim(), |i, j| rows[i][j])
    }
}

fn resolve_c_bar(spec: &ContrastSpec, draws: &PosteriorDraws) -> Result<DVector<f64>> {
    let p = draws.train().p();
    match &spec.c_bar {
        Some(cb) => {
            if cb.len() != p {
                return Err(Error::Schema(format!(
                    "covariate fixing row has length {}, model has P = {p}",
                    cb.len()
                )));
            }
            Ok(DVector::from_vec(cb.clone()))
        }
        None => {
            let c = &draws.train().c;
            Ok(DVector::from_iterator(p, c.column_iter().map(|col| col.mean())))
        }
    }
}

fn check_same_covariates(models: &[&PosteriorDraws]) -> Result<()> {
    let first = models[0].train();
    for m in &models[1..] {
        if m.train().c_names != first.c_names {
            return Err(Error::Schema(format!(
                "models disagree on covariates: {:?} vs {:?}",
                m.train().c_names,
                first.c_names
            )));
        }
        if m.train().n() != first.n() {
            return Err(Error::Schema(format!(
                "models were fit to different sample sizes: {} vs {}",
                m.train().n(),
                first.n()
            )));
        }
    }
    Ok(())
}

/// Estimates NDE, NIE and TE for a change of the exposure profile from
/// `z*` to `z`. Deterministic given the seed, independent of thread count.
pub fn estimate_mediation(
    med_draws: &PosteriorDraws,
    out_draws: &PosteriorDraws,
    te_draws: &PosteriorDraws,
    spec: &ContrastSpec,
    options: &MediationOptions,
    seed: u64,
) -> Result<EffectSamples> {
    let med_schema = med_draws.schema();
    let out_schema = out_draws.schema();
    let te_schema = te_draws.schema();
    if med_schema.includes_mediator || te_schema.includes_mediator {
        return Err(Error::Schema(
            "mediator and total-effect models must not carry the mediator in their kernels".into(),
        ));
    }
    if !out_schema.includes_mediator {
        return Err(Error::Schema("outcome model must carry the mediator in its kernel".into()));
    }
    if !med_schema.compatible_exposures(out_schema) || !med_schema.compatible_exposures(te_schema) {
        return Err(Error::Schema(
            "models disagree on exposure or modifier kernel inputs".into(),
        ));
    }
    check_same_covariates(&[med_draws, out_draws, te_draws])?;
    spec.validate(med_schema.exposures.len())?;

    let mut warnings = Vec::new();
    let j_draws = med_draws.len().min(out_draws.len()).min(te_draws.len());
    if med_draws.len() != out_draws.len() || out_draws.len() != te_draws.len() {
        warnings.push(format!(
            "retained draw counts differ (mediator {}, outcome {}, total-effect {}); truncating to {j_draws}",
            med_draws.len(),
            out_draws.len(),
            te_draws.len()
        ));
    }

    // a null contrast is identically zero: both counterfactual arms coincide
    if spec.is_null_contrast() {
        return Ok(EffectSamples {
            nde: vec![0.0; j_draws],
            nie: vec![0.0; j_draws],
            te: vec![0.0; j_draws],
            cde: Vec::new(),
            warnings,
        });
    }

    let c_bar = resolve_c_bar(spec, out_draws)?;
    let med_builder = QueryBuilder::new(med_schema, &spec.modifier_values)?;
    let out_builder = QueryBuilder::new(out_schema, &spec.modifier_values)?;
    let te_builder = QueryBuilder::new(te_schema, &spec.modifier_values)?;

    let med_surf = PosteriorSurface::new(med_draws);
    let out_surf = PosteriorSurface::new(out_draws);
    let te_surf = PosteriorSurface::new(te_draws);

    let med_star_pts = med_builder.matrix(&[med_builder.row(&spec.z_star, None)?]);
    let med_z_pts = med_builder.matrix(&[med_builder.row(&spec.z, None)?]);
    let te_pts = te_builder.matrix(&[
        te_builder.row(&spec.z, None)?,
        te_builder.row(&spec.z_star, None)?,
    ]);

    let per_draw: Vec<Result<(f64, f64, f64)>> = (0..j_draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let normal = StandardNormal;
            // inner-noise draws come first so the stream layout is stable
            let eps: Vec<f64> = (0..spec.k_inner).map(|_| normal.sample(&mut rng)).collect();

            let sigma_m = if options.zero_mediator_noise {
                0.0
            } else {
                med_draws.draw(j).sigma2.sqrt()
            };

            let mediator_mean_at = |pts: &DMatrix<f64>, rng: &mut ChaCha8Rng| -> Result<f64> {
                let q = SurfaceQuery {
                    points: pts.clone(),
                    covariates: c_bar.clone(),
                    mode: options.surface_mode,
                };
                Ok(med_surf.predict_mean_response(&q, j, rng)?[0])
            };

            let outcome_avg = |profile: &[f64], m_samples: &[f64], rng: &mut ChaCha8Rng| -> Result<f64> {
                let rows: Result<Vec<Vec<f64>>> = m_samples
                    .iter()
                    .map(|&m| out_builder.row(profile, Some(m)))
                    .collect();
                let q = SurfaceQuery {
                    points: out_builder.matrix(&rows?),
                    covariates: c_bar.clone(),
                    mode: options.surface_mode,
                };
                let vals = out_surf.predict_mean_response(&q, j, rng)?;
                Ok(vals.mean())
            };

            // step 1: mediator samples under the baseline profile
            let mu_star = mediator_mean_at(&med_star_pts, &mut rng)?;
            let m_star: Vec<f64> = eps.iter().map(|e| mu_star + sigma_m * e).collect();
            // steps 2-3: counterfactual outcome under (z, M_{z*})
            let ybar_cross = outcome_avg(&spec.z, &m_star, &mut rng)?;

            let (y_z, y_zstar) = match options.te_source {
                TeSource::TeModel => {
                    let q = SurfaceQuery {
                        points: te_pts.clone(),
                        covariates: c_bar.clone(),
                        mode: options.surface_mode,
                    };
                    let vals = te_surf.predict_mean_response(&q, j, &mut rng)?;
                    (vals[0], vals[1])
                }
                TeSource::Composed => {
                    // common noise across arms: exact zeros for equal profiles
                    let mu_z = mediator_mean_at(&med_z_pts, &mut rng)?;
                    let m_z: Vec<f64> = eps.iter().map(|e| mu_z + sigma_m * e).collect();
                    let y_z = outcome_avg(&spec.z, &m_z, &mut rng)?;
                    let y_zstar = outcome_avg(&spec.z_star, &m_star, &mut rng)?;
                    (y_z, y_zstar)
                }
            };

            Ok((ybar_cross - y_zstar, y_z - ybar_cross, y_z - y_zstar))
        })
        .collect();

    let mut nde = Vec::with_capacity(j_draws);
    let mut nie = Vec::with_capacity(j_draws);
    let mut te = Vec::with_capacity(j_draws);
    for r in per_draw {
        let (a, b, t) = r?;
        nde.push(a);
        nie.push(b);
        te.push(t);
    }
    Ok(EffectSamples { nde, nie, te, cde: Vec::new(), warnings })
}

/// Estimates controlled direct effects `CDE(m)` for each mediator fixing
/// level in the contrast, from the outcome model alone.
pub fn estimate_cde(
    out_draws: &PosteriorDraws,
    spec: &ContrastSpec,
    options: &MediationOptions,
    seed: u64,
) -> Result<EffectSamples> {
    let schema = out_draws.schema();
    if !schema.includes_mediator {
        return Err(Error::Schema("outcome model must carry the mediator in its kernel".into()));
    }
    spec.validate(schema.exposures.len())?;
    if spec.m_values.is_empty() {
        return Err(Error::InvalidInput("no mediator fixing levels requested".into()));
    }
    let c_bar = resolve_c_bar(spec, out_draws)?;
    let builder = QueryBuilder::new(schema, &spec.modifier_values)?;
    let surf = PosteriorSurface::new(out_draws);
    let j_draws = out_draws.len();

    let per_draw: Vec<Result<Vec<f64>>> = (0..j_draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let mut out = Vec::with_capacity(spec.m_values.len());
            for &m in &spec.m_values {
                let pts = builder.matrix(&[
                    builder.row(&spec.z, Some(m))?,
                    builder.row(&spec.z_star, Some(m))?,
                ]);
                let q = SurfaceQuery {
                    points: pts,
                    covariates: c_bar.clone(),
                    mode: options.surface_mode,
                };
                let vals = surf.predict_mean_response(&q, j, &mut rng)?;
                out.push(vals[0] - vals[1]);
            }
            Ok(out)
        })
        .collect();

    let mut cde: Vec<(f64, Vec<f64>)> =
        spec.m_values.iter().map(|&m| (m, Vec::with_capacity(j_draws))).collect();
    for r in per_draw {
        let row = r?;
        for (slot, v) in cde.iter_mut().zip(row) {
            slot.1.push(v);
        }
    }
    Ok(EffectSamples { nde: vec![], nie: vec![], te: vec![], cde, warnings: vec![] })
}

#[cfg(test)]
mod tests;
