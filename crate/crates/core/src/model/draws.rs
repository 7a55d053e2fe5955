//! The retained MCMC trace of a fitted BKMR model, together with the training
//! data needed to evaluate its posterior predictive surface later.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, KernelSchema};

/// Which columns enter the kernel when fitting a model, by exposure/modifier
/// column name of the dataset's `z` matrix, plus whether the mediator joins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelInputSpec {
    pub exposures: Vec<String>,
    pub include_mediator: bool,
    pub modifiers: Vec<String>,
}

impl KernelInputSpec {
    /// All `z` columns as exposures, mediator excluded.
    pub fn all_exposures(dataset: &Dataset) -> Self {
        Self {
            exposures: dataset.z_names().to_vec(),
            include_mediator: false,
            modifiers: Vec::new(),
        }
    }

    /// All `z` columns as exposures plus the mediator in the kernel.
    pub fn exposures_and_mediator(dataset: &Dataset) -> Self {
        Self {
            exposures: dataset.z_names().to_vec(),
            include_mediator: true,
            modifiers: Vec::new(),
        }
    }

    pub fn schema(&self) -> KernelSchema {
        KernelSchema {
            exposures: self.exposures.clone(),
            includes_mediator: self.include_mediator,
            modifiers: self.modifiers.clone(),
        }
    }
}

/// The response, covariates and assembled kernel inputs a model was fit to.
/// Kernel inputs are assembled in declared order: exposures, then the
/// mediator when included, then modifiers.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub y: DVector<f64>,
    pub c: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub schema: KernelSchema,
    pub c_names: Vec<String>,
}

impl TrainingData {
    /// Assembles training data for the model whose response is the dataset's
    /// outcome `y`.
    pub fn for_outcome(dataset: &Dataset, spec: &KernelInputSpec) -> Result<Self> {
        Self::assemble(dataset, spec, dataset.y().clone())
    }

    /// Assembles training data for the model whose response is the mediator.
    pub fn for_mediator(dataset: &Dataset, spec: &KernelInputSpec) -> Result<Self> {
        if spec.include_mediator {
            return Err(Error::Schema(
                "mediator cannot be both the response and a kernel input".into(),
            ));
        }
        let m = dataset
            .m()
            .ok_or_else(|| Error::Schema("dataset has no mediator column".into()))?;
        Self::assemble(dataset, spec, m.clone())
    }

    fn assemble(dataset: &Dataset, spec: &KernelInputSpec, response: DVector<f64>) -> Result<Self> {
        if spec.exposures.is_empty() {
            return Err(Error::InvalidInput("kernel input spec has no exposures".into()));
        }
        let schema = spec.schema();
        let n = dataset.n();
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(schema.dim());
        for name in &spec.exposures {
            let idx = dataset
                .z_column_index(name)
                .ok_or_else(|| Error::Schema(format!("unknown exposure column '{name}'")))?;
            cols.push(dataset.z().column(idx).into_owned());
        }
        if spec.include_mediator {
            let m = dataset
                .m()
                .ok_or_else(|| Error::Schema("kernel spec includes mediator but dataset has none".into()))?;
            cols.push(m.clone());
        }
        for name in &spec.modifiers {
            let idx = dataset
                .z_column_index(name)
                .ok_or_else(|| Error::Schema(format!("unknown modifier column '{name}'")))?;
            cols.push(dataset.z().column(idx).into_owned());
        }
        let x = DMatrix::from_columns(&cols.iter().map(|c| c.column(0)).collect::<Vec<_>>());
        Ok(Self {
            y: response,
            c: dataset.c().clone(),
            x,
            schema,
            c_names: dataset.c_names().to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.c.ncols()
    }
}

use crate::model::KernelState;

/// One retained draw of the sampler state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Draw {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub lambda: f64,
    pub kernel_state: KernelState,
}

/// Observed acceptance counts for one Metropolis-Hastings block.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BlockRate {
    pub proposals: u64,
    pub accepts: u64,
}

impl BlockRate {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }
}

/// Acceptance rates per MH block, counted after the adaptation window closes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub lambda: Option<BlockRate>,
    pub rho: Option<BlockRate>,
    pub toggle: Option<BlockRate>,
    pub refine: Option<BlockRate>,
}

/// Retained posterior draws of one fitted BKMR model. Immutable; safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    train: TrainingData,
    draws: Vec<Draw>,
    acceptance: AcceptanceReport,
    warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn new(
        train: TrainingData,
        draws: Vec<Draw>,
        acceptance: AcceptanceReport,
        warnings: Vec<String>,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidState("no retained draws".into()));
        }
        let p = train.p();
        let dim = train.schema.dim();
        for (j, d) in draws.iter().enumerate() {
            if d.beta.len() != p {
                return Err(Error::InvalidState(format!(
                    "draw {j}: beta has length {} but P = {p}",
                    d.beta.len()
                )));
            }
            if !(d.sigma2.is_finite() && d.sigma2 > 0.0) {
                return Err(Error::InvalidState(format!("draw {j}: sigma2 = {}", d.sigma2)));
            }
            if !(d.lambda.is_finite() && d.lambda >= 0.0) {
                return Err(Error::InvalidState(format!("draw {j}: lambda = {}", d.lambda)));
            }
            if d.kernel_state.dim() != dim {
                return Err(Error::InvalidState(format!(
                    "draw {j}: kernel state dimension {} but schema dimension {dim}",
                    d.kernel_state.dim()
                )));
            }
        }
        Ok(Self { train, draws, acceptance, warnings })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draw(&self, j: usize) -> &Draw {
        &self.draws[j]
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn train(&self) -> &TrainingData {
        &self.train
    }

    pub fn schema(&self) -> &KernelSchema {
        &self.train.schema
    }

    pub fn acceptance(&self) -> &AcceptanceReport {
        &self.acceptance
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Posterior inclusion probability per kernel input (share of retained
    /// draws with `delta_l = 1`). All ones when variable selection was off.
    pub fn inclusion_probabilities(&self) -> Vec<f64> {
        let dim = self.train.schema.dim();
        let mut counts = vec![0.0; dim];
        for d in &self.draws {
            match d.kernel_state.delta() {
                Some(delta) => {
                    for (l, &inc) in delta.iter().enumerate() {
                        if inc {
                            counts[l] += 1.0;
                        }
                    }
                }
                None => counts.iter_mut().for_each(|c| *c += 1.0),
            }
        }
        counts.iter().map(|c| c / self.draws.len() as f64).collect()
    }

    /// Writes the retained trace as CSV, one row per draw, columns named.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        for name in &self.train.c_names {
            header.push(format!("beta_{name}"));
        }
        header.push("sigma2".to_string());
        header.push("lambda".to_string());
        let input_names = self.train.schema.input_names();
        match self.draws[0].kernel_state {
            KernelState::SingleSmoothness { .. } => header.push("rho".to_string()),
            KernelState::ComponentWeights { .. } => {
                for name in &input_names {
                    header.push(format!("r_{name}"));
                }
                for name in &input_names {
                    header.push(format!("delta_{name}"));
                }
            }
        }
        w.write_record(&header)?;
        for (j, d) in self.draws.iter().enumerate() {
            let mut row = vec![j.to_string()];
            for b in &d.beta {
                row.push(format!("{b}"));
            }
            row.push(format!("{}", d.sigma2));
            row.push(format!("{}", d.lambda));
            match &d.kernel_state {
                KernelState::SingleSmoothness { rho, .. } => row.push(format!("{rho}")),
                KernelState::ComponentWeights { r, delta } => {
                    for v in r {
                        row.push(format!("{v}"));
                    }
                    for inc in delta {
                        row.push(if *inc { "1".into() } else { "0".into() });
                    }
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dataset() -> Dataset {
        let y = DVector::from_vec(vec![0.1, 0.4, -0.3, 0.8]);
        let z = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.5, -0.5, 1.0, 0.0, -1.0, 0.25]);
        let m = DVector::from_vec(vec![0.2, -0.1, 0.3, 0.0]);
        let c = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        Dataset::new(
            y,
            z,
            vec!["z1".into(), "z2".into()],
            Some(m),
            c,
            vec!["intercept".into()],
        )
        .unwrap()
    }

    #[test]
    fn assembles_kernel_inputs_in_declared_order() {
        let d = small_dataset();
        let spec = KernelInputSpec::exposures_and_mediator(&d);
        let t = TrainingData::for_outcome(&d, &spec).unwrap();
        assert_eq!(t.x.ncols(), 3);
        // third column is the mediator
        assert_eq!(t.x[(0, 2)], 0.2);
        assert_eq!(t.schema.mediator_index(), Some(2));
    }

    #[test]
    fn mediator_model_cannot_put_mediator_in_kernel() {
        let d = small_dataset();
        let spec = KernelInputSpec {
            exposures: vec!["z1".into(), "z2".into()],
            include_mediator: true,
            modifiers: vec![],
        };
        assert!(TrainingData::for_mediator(&d, &spec).is_err());
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let d = small_dataset();
        let spec = KernelInputSpec {
            exposures: vec!["zX".into()],
            include_mediator: false,
            modifiers: vec![],
        };
        assert!(matches!(
            TrainingData::for_outcome(&d, &spec),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn trace_csv_has_named_columns() {
        let d = small_dataset();
        let spec = KernelInputSpec::all_exposures(&d);
        let t = TrainingData::for_outcome(&d, &spec).unwrap();
        let state = KernelState::weights_all_included(vec![0.5, 0.7]).unwrap();
        let draws = vec![Draw {
            beta: vec![0.3],
            sigma2: 1.0,
            lambda: 2.0,
            kernel_state: state,
        }];
        let pd = PosteriorDraws::new(t, draws, AcceptanceReport::default(), vec![]).unwrap();
        let mut buf = Vec::new();
        pd.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,beta_intercept,sigma2,lambda,r_z1,r_z2,delta_z1,delta_z2"));
        assert_eq!(pd.inclusion_probabilities(), vec![1.0, 1.0]);
    }
}
