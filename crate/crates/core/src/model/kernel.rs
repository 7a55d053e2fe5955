//! Gaussian kernel in its plain and variable-selection-augmented forms, and
//! the kernel matrices built from it.
//!
//! The plain form uses one smoothness parameter:
//! `K(z, z') = exp{ -(1/rho) * sum_l (z_l - z'_l)^2 }`.
//! The augmented form carries one nonnegative weight per component:
//! `K(z, z'; r) = exp{ -sum_l r_l (z_l - z'_l)^2 }`,
//! with `r_l = 0` exactly when the inclusion indicator `delta_l` is 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel hyperparameters for one posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelState {
    /// One smoothness parameter shared by all components.
    SingleSmoothness { rho: f64, dim: usize },
    /// Component-wise weights with inclusion indicators.
    ComponentWeights { r: Vec<f64>, delta: Vec<bool> },
}

impl KernelState {
    pub fn single_smoothness(rho: f64, dim: usize) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidState(format!("rho must be finite and > 0, got {rho}")));
        }
        if dim == 0 {
            return Err(Error::InvalidState("kernel dimension must be >= 1".into()));
        }
        Ok(KernelState::SingleSmoothness { rho, dim })
    }

    /// Builds a component-weights state; enforces `r_l = 0 <=> delta_l = 0`.
    pub fn component_weights(r: Vec<f64>, delta: Vec<bool>) -> Result<Self> {
        if r.is_empty() || r.len() != delta.len() {
            return Err(Error::InvalidState(format!(
                "weight/indicator lengths differ or are empty: {} vs {}",
                r.len(),
                delta.len()
            )));
        }
        for (i, (&ri, &di)) in r.iter().zip(delta.iter()).enumerate() {
            if !ri.is_finite() || ri < 0.0 {
                return Err(Error::InvalidState(format!(
                    "r[{i}] must be finite and >= 0, got {ri}"
                )));
            }
            if (ri == 0.0) != !di {
                return Err(Error::InvalidState(format!(
                    "r[{i}] = {ri} inconsistent with delta[{i}] = {di}"
                )));
            }
        }
        Ok(KernelState::ComponentWeights { r, delta })
    }

    /// All components included, every weight positive.
    pub fn weights_all_included(r: Vec<f64>) -> Result<Self> {
        let delta = vec![true; r.len()];
        Self::component_weights(r, delta)
    }

    /// Number of kernel inputs this state describes.
    pub fn dim(&self) -> usize {
        match self {
            KernelState::SingleSmoothness { dim, .. } => *dim,
            KernelState::ComponentWeights { r, .. } => r.len(),
        }
    }

    /// Per-component distance weights: `1/rho` everywhere, or `r`.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            KernelState::SingleSmoothness { rho, dim } => vec![1.0 / rho; *dim],
            KernelState::ComponentWeights { r, .. } => r.clone(),
        }
    }

    pub fn delta(&self) -> Option<&[bool]> {
        match self {
            KernelState::ComponentWeights { delta, .. } => Some(delta),
            KernelState::SingleSmoothness { .. } => None,
        }
    }
}

fn check_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value in {label}")));
    }
    Ok(())
}

/// Kernel value for a single pair of input rows.
pub fn gaussian_kernel(zi: &[f64], zj: &[f64], state: &KernelState) -> Result<f64> {
    if zi.len() != zj.len() || zi.len() != state.dim() {
        return Err(Error::InvalidInput(format!(
            "kernel input dimensions disagree: {} vs {} vs state {}",
            zi.len(),
            zj.len(),
            state.dim()
        )));
    }
    check_finite("kernel input", zi)?;
    check_finite("kernel input", zj)?;
    let w = state.weights();
    let mut dist = 0.0;
    for l in 0..zi.len() {
        let d = zi[l] - zj[l];
        dist += w[l] * d * d;
    }
    Ok((-dist).exp())
}

/// Weighted squared-distance accumulation over all row pairs of `x`.
fn pairwise_weighted_sqdist(x: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for (l, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = x.column(l);
        for j in 0..n {
            let cj = col[j];
            for i in (j + 1)..n {
                let d = col[i] - cj;
                acc[(i, j)] += w * d * d;
            }
        }
    }
    acc
}

/// Symmetric `n x n` kernel matrix with unit diagonal.
pub fn kernel_matrix(x: &DMatrix<f64>, state: &KernelState) -> Result<DMatrix<f64>> {
    if x.ncols() != state.dim() {
        return Err(Error::InvalidInput(format!(
            "kernel matrix input has {} columns, state expects {}",
            x.ncols(),
            state.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in kernel input matrix".into()));
    }
    let n = x.nrows();
    let acc = pairwise_weighted_sqdist(x, &state.weights());
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let v = (-acc[(i, j)]).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-kernel block: entry `(i, j)` is the kernel value between row `i` of
/// `x_new` and row `j` of `x_obs`.
pub fn cross_kernel(
    x_new: &DMatrix<f64>,
    x_obs: &DMatrix<f64>,
    state: &KernelState,
) -> Result<DMatrix<f64>> {
    if x_new.ncols() != x_obs.ncols() || x_new.ncols() != state.dim() {
        return Err(Error::InvalidInput(format!(
            "cross-kernel column counts disagree: {} vs {} vs state {}",
            x_new.ncols(),
            x_obs.ncols(),
            state.dim()
        )));
    }
    if x_new.iter().any(|v| !v.is_finite()) || x_obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in cross-kernel input".into()));
    }
    let q = x_new.nrows();
    let n = x_obs.nrows();
    let w = state.weights();
    let mut k = DMatrix::zeros(q, n);
    for (l, &wl) in w.iter().enumerate() {
        if wl == 0.0 {
            continue;
        }
        let cn = x_new.column(l);
        let co = x_obs.column(l);
        for j in 0..n {
            let oj = co[j];
            for i in 0..q {
                let d = cn[i] - oj;
                k[(i, j)] += wl * d * d;
            }
        }
    }
    k.apply(|v| *v = (-*v).exp());
    Ok(k)
}

/// Identifies which columns feed the kernel and in which order:
/// exposures first, then the mediator if present, then continuous modifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSchema {
    pub exposures: Vec<String>,
    pub includes_mediator: bool,
    pub modifiers: Vec<String>,
}

impl KernelSchema {
    pub fn dim(&self) -> usize {
        self.exposures.len() + usize::from(self.includes_mediator) + self.modifiers.len()
    }

    /// Column index of the mediator inside the assembled kernel input.
    pub fn mediator_index(&self) -> Option<usize> {
        self.includes_mediator.then_some(self.exposures.len())
    }

    /// Column index of a named modifier inside the assembled kernel input.
    pub fn modifier_index(&self, name: &str) -> Option<usize> {
        self.modifiers
            .iter()
            .position(|m| m == name)
            .map(|i| self.exposures.len() + usize::from(self.includes_mediator) + i)
    }

    /// Ordered names of all kernel inputs.
    pub fn input_names(&self) -> Vec<String> {
        let mut names = self.exposures.clone();
        if self.includes_mediator {
            names.push("mediator".to_string());
        }
        names.extend(self.modifiers.iter().cloned());
        names
    }

    /// Checks that two fitted models share exposures and modifiers.
    pub fn compatible_exposures(&self, other: &KernelSchema) -> bool {
        self.exposures == other.exposures && self.modifiers == other.modifiers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_distance_gives_one() {
        let s = KernelState::weights_all_included(vec![2.3, 0.7]).unwrap();
        let v = gaussian_kernel(&[0.3, -1.2], &[0.3, -1.2], &s).unwrap();
        assert_eq!(v, 1.0);
        let s = KernelState::single_smoothness(7.0, 2).unwrap();
        assert_eq!(gaussian_kernel(&[0.3, -1.2], &[0.3, -1.2], &s).unwrap(), 1.0);
    }

    #[test]
    fn unit_weight_unit_distance() {
        // exp(-1) from |1-0|^2 with r = 1
        let s = KernelState::weights_all_included(vec![1.0]).unwrap();
        let v = gaussian_kernel(&[1.0], &[0.0], &s).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.367879441171, epsilon = 1e-9);
    }

    #[test]
    fn excluded_component_drops_out() {
        // r = (0.5, 0): second coordinate ignored -> exp(-0.5 * 1)
        let s = KernelState::component_weights(vec![0.5, 0.0], vec![true, false]).unwrap();
        let v = gaussian_kernel(&[1.0, 2.0], &[0.0, 0.0], &s).unwrap();
        assert_relative_eq!(v, (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.606530659713, epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let s = KernelState::weights_all_included(vec![1.0]).unwrap();
        assert!(gaussian_kernel(&[1.0, 2.0], &[0.0, 0.0], &s).is_err());
        assert!(gaussian_kernel(&[1.0], &[0.0, 0.0], &s).is_err());
    }

    #[test]
    fn negative_weight_is_state_error() {
        assert!(KernelState::weights_all_included(vec![-0.1]).is_err());
        assert!(KernelState::component_weights(vec![0.0], vec![true]).is_err());
        assert!(KernelState::component_weights(vec![0.4], vec![false]).is_err());
    }

    #[test]
    fn kernel_matrix_n1_is_one() {
        let x = DMatrix::from_row_slice(1, 2, &[3.0, -4.0]);
        let s = KernelState::weights_all_included(vec![1.0, 1.0]).unwrap();
        let k = kernel_matrix(&x, &s).unwrap();
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn zero_weights_give_all_ones() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, -1.0, 4.0, 0.5]);
        let s = KernelState::component_weights(vec![0.0, 0.0], vec![false, false]).unwrap();
        let k = kernel_matrix(&x, &s).unwrap();
        assert!(k.iter().all(|&v| v == 1.0));
        let kx = cross_kernel(&x, &x, &s).unwrap();
        assert!(kx.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn kernel_matrix_matches_elementwise_oracle() {
        let x = DMatrix::from_row_slice(3, 2, &[0.11, 1.7, -0.52, 0.33, 1.9, -2.4]);
        let s = KernelState::weights_all_included(vec![1.0, 1.0]).unwrap();
        let k = kernel_matrix(&x, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let zi: Vec<f64> = x.row(i).iter().cloned().collect();
                let zj: Vec<f64> = x.row(j).iter().cloned().collect();
                let expect = gaussian_kernel(&zi, &zj, &s).unwrap();
                assert_relative_eq!(k[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cross_kernel_on_same_matrix_equals_kernel_matrix() {
        let x = DMatrix::from_row_slice(4, 3, &[
            0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, -0.8, 0.9, 1.0, 1.1, -1.2,
        ]);
        let s = KernelState::weights_all_included(vec![0.5, 1.5, 2.0]).unwrap();
        let k = kernel_matrix(&x, &s).unwrap();
        let kx = cross_kernel(&x, &x, &s).unwrap();
        assert_relative_eq!((k - kx).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn cross_kernel_scalar_case() {
        let a = DMatrix::from_row_slice(1, 1, &[1.7]);
        let b = DMatrix::from_row_slice(1, 1, &[0.4]);
        let s = KernelState::weights_all_included(vec![1.0]).unwrap();
        let k = cross_kernel(&a, &b, &s).unwrap();
        let d2 = (1.7f64 - 0.4).powi(2);
        assert_relative_eq!(k[(0, 0)], (-d2).exp(), epsilon = 1e-14);
    }

    #[test]
    fn single_smoothness_equals_uniform_weights() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.5, -0.3, 2.0, 0.7, -1.0, 0.1]);
        let rho = 3.7;
        let ss = KernelState::single_smoothness(rho, 2).unwrap();
        let cw = KernelState::weights_all_included(vec![1.0 / rho; 2]).unwrap();
        let k1 = kernel_matrix(&x, &ss).unwrap();
        let k2 = kernel_matrix(&x, &cw).unwrap();
        assert!((k1 - k2).amax() < 1e-12);
    }

    #[test]
    fn schema_indices() {
        let s = KernelSchema {
            exposures: vec!["Mn".into(), "As".into(), "Pb".into()],
            includes_mediator: true,
            modifiers: vec!["age".into()],
        };
        assert_eq!(s.dim(), 5);
        assert_eq!(s.mediator_index(), Some(3));
        assert_eq!(s.modifier_index("age"), Some(4));
        assert_eq!(s.input_names()[3], "mediator");
    }

    proptest! {
        #[test]
        fn kernel_values_in_unit_interval(
            xi in proptest::collection::vec(-5.0f64..5.0, 1..6),
            shift in proptest::collection::vec(-5.0f64..5.0, 1..6),
            w in proptest::collection::vec(0.01f64..4.0, 1..6),
        ) {
            let d = xi.len().min(shift.len()).min(w.len());
            let zi = &xi[..d];
            let zj: Vec<f64> = (0..d).map(|i| xi[i] + shift[i]).collect();
            let s = KernelState::weights_all_included(w[..d].to_vec()).unwrap();
            let v = gaussian_kernel(zi, &zj, &s).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0);
            let back = gaussian_kernel(&zj, zi, &s).unwrap();
            prop_assert!((v - back).abs() < 1e-15);
        }

        #[test]
        fn permutation_permutes_kernel_matrix(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-2.0..2.0));
            let s = KernelState::weights_all_included(vec![0.8, 1.3]).unwrap();
            let k = kernel_matrix(&x, &s).unwrap();
            // reverse the rows
            let perm: Vec<usize> = (0..n).rev().collect();
            let xp = DMatrix::from_fn(n, 2, |i, j| x[(perm[i], j)]);
            let kp = kernel_matrix(&xp, &s).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((kp[(i, j)] - k[(perm[i], perm[j])]).abs() < 1e-14);
                }
            }
        }

        #[test]
        fn increasing_weight_weakly_decreases_offdiagonals(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let x = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-2.0..2.0));
            let base = vec![0.5, 0.5, 0.5];
            let mut bumped = base.clone();
            let l = rng.gen_range(0..3usize);
            bumped[l] += 1.0;
            let k0 = kernel_matrix(&x, &KernelState::weights_all_included(base).unwrap()).unwrap();
            let k1 = kernel_matrix(&x, &KernelState::weights_all_included(bumped).unwrap()).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    prop_assert!(k1[(i, j)] <= k0[(i, j)] + 1e-15);
                    if (x[(i, l)] - x[(j, l)]).abs() > 1e-9 {
                        prop_assert!(k1[(i, j)] < k0[(i, j)]);
                    }
                }
            }
        }
    }
}
