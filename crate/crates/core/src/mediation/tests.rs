use super::*;
use crate::model::{AcceptanceReport, Dataset, Draw, KernelInputSpec, KernelState, TrainingData};
use approx::assert_relative_eq;

fn base_dataset() -> Dataset {
    let y = DVector::from_vec(vec![0.4, -0.7, 1.2, 0.1, -0.2, 0.9]);
    let z = DMatrix::from_row_slice(6, 2, &[
        0.1, -0.3, 0.8, 0.2, -0.5, 1.1, 0.3, -0.9, 1.4, 0.6, -1.1, 0.4,
    ]);
    let m = DVector::from_vec(vec![0.2, 0.5, -0.4, 0.8, 0.0, -0.6]);
    let c = DMatrix::from_element(6, 1, 1.0);
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

fn draws_for(train: TrainingData, weights: &[Vec<f64>]) -> PosteriorDraws {
    let draws: Vec<Draw> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| Draw {
            beta: vec![0.1 * (i as f64 + 1.0)],
            sigma2: 0.5 + 0.1 * i as f64,
            lambda: 1.5 + 0.5 * i as f64,
            kernel_state: KernelState::weights_all_included(w.clone()).unwrap(),
        })
        .collect();
    PosteriorDraws::new(train, draws, AcceptanceReport::default(), vec![]).unwrap()
}

fn three_models() -> (PosteriorDraws, PosteriorDraws, PosteriorDraws) {
    let data = base_dataset();
    let med = draws_for(
        TrainingData::for_mediator(&data, &KernelInputSpec::all_exposures(&data)).unwrap(),
        &[vec![0.7, 0.4], vec![0.9, 0.2], vec![0.5, 0.5]],
    );
    let out = draws_for(
        TrainingData::for_outcome(&data, &KernelInputSpec::exposures_and_mediator(&data)).unwrap(),
        &[vec![0.7, 0.4, 0.6], vec![0.9, 0.2, 0.3], vec![0.5, 0.5, 0.8]],
    );
    let te = draws_for(
        TrainingData::for_outcome(&data, &KernelInputSpec::all_exposures(&data)).unwrap(),
        &[vec![0.6, 0.3], vec![0.8, 0.4], vec![0.4, 0.6]],
    );
    (med, out, te)
}

#[test]
fn null_contrast_is_identically_zero() {
    let (med, out, te) = three_models();
    let spec = ContrastSpec::new(vec![0.3, -0.2], vec![0.3, -0.2]);
    let eff = estimate_mediation(&med, &out, &te, &spec, &MediationOptions::default(), 7).unwrap();
    assert_eq!(eff.te.len(), 3);
    assert!(eff.te.iter().all(|&v| v == 0.0));
    assert!(eff.nde.iter().all(|&v| v == 0.0));
    assert!(eff.nie.iter().all(|&v| v == 0.0));
}

#[test]
fn per_draw_additivity_holds_for_both_te_paths() {
    let (med, out, te) = three_models();
    let spec = ContrastSpec::new(vec![-0.674, -0.674], vec![0.674, 0.674]);
    for te_source in [TeSource::TeModel, TeSource::Composed] {
        let opts = MediationOptions { te_source, ..Default::default() };
        let eff = estimate_mediation(&med, &out, &te, &spec, &opts, 11).unwrap();
        for j in 0..eff.te.len() {
            assert!(
                (eff.nde[j] + eff.nie[j] - eff.te[j]).abs() < 1e-12,
                "additivity violated at draw {j}"
            );
        }
    }
}

#[test]
fn swapping_profiles_negates_te_exactly() {
    let (med, out, te) = three_models();
    let fwd = ContrastSpec::new(vec![-0.5, 0.1], vec![0.5, 0.9]);
    let mut rev = fwd.clone();
    std::mem::swap(&mut rev.z, &mut rev.z_star);
    let opts = MediationOptions::default();
    let a = estimate_mediation(&med, &out, &te, &fwd, &opts, 3).unwrap();
    let b = estimate_mediation(&med, &out, &te, &rev, &opts, 3).unwrap();
    for j in 0..a.te.len() {
        assert_eq!(a.te[j], -b.te[j]);
    }
}

#[test]
fn noiseless_mediator_makes_k_inner_irrelevant() {
    let (med, out, te) = three_models();
    let mut spec = ContrastSpec::new(vec![-0.4, -0.4], vec![0.6, 0.6]);
    let opts = MediationOptions { zero_mediator_noise: true, ..Default::default() };
    spec.k_inner = 1;
    let small = estimate_mediation(&med, &out, &te, &spec, &opts, 5).unwrap();
    spec.k_inner = 1000;
    let large = estimate_mediation(&med, &out, &te, &spec, &opts, 5).unwrap();
    for j in 0..small.te.len() {
        assert_eq!(small.nde[j], large.nde[j]);
        assert_eq!(small.nie[j], large.nie[j]);
        assert_eq!(small.te[j], large.te[j]);
    }
}

#[test]
fn draw_count_mismatch_truncates_with_warning() {
    let (med, out, te) = three_models();
    let data = base_dataset();
    let te_short = draws_for(
        TrainingData::for_outcome(&data, &KernelInputSpec::all_exposures(&data)).unwrap(),
        &[vec![0.6, 0.3], vec![0.8, 0.4]],
    );
    let spec = ContrastSpec::new(vec![-0.4, -0.4], vec![0.6, 0.6]);
    let eff =
        estimate_mediation(&med, &out, &te_short, &spec, &MediationOptions::default(), 5).unwrap();
    assert_eq!(eff.te.len(), 2);
    assert!(!eff.warnings.is_empty());
    let _ = te;
}

#[test]
fn schema_violations_are_rejected() {
    let (med, out, te) = three_models();
    let spec = ContrastSpec::new(vec![-0.4, -0.4], vec![0.6, 0.6]);
    let opts = MediationOptions::default();
    // total-effect model in place of the outcome model: no mediator in kernel
    assert!(matches!(
        estimate_mediation(&med, &te, &te, &spec, &opts, 1),
        Err(Error::Schema(_))
    ));
    // outcome model in place of the mediator model: mediator in kernel
    assert!(matches!(
        estimate_mediation(&out, &out, &te, &spec, &opts, 1),
        Err(Error::Schema(_))
    ));
    // unknown modifier name
    let mut bad = spec.clone();
    bad.modifier_values.push(("age".into(), 1.0));
    assert!(matches!(
        estimate_mediation(&med, &out, &te, &bad, &opts, 1),
        Err(Error::Schema(_))
    ));
    // wrong covariate fixing length
    let mut bad = spec;
    bad.c_bar = Some(vec![1.0, 2.0]);
    assert!(matches!(
        estimate_mediation(&med, &out, &te, &bad, &opts, 1),
        Err(Error::Schema(_))
    ));
}

#[test]
fn cde_null_contrast_is_zero_for_all_levels() {
    let (_, out, _) = three_models();
    let mut spec = ContrastSpec::new(vec![0.2, 0.2], vec![0.2, 0.2]);
    spec.m_values = vec![-0.5, 0.0, 0.5];
    let eff = estimate_cde(&out, &spec, &MediationOptions::default(), 9).unwrap();
    assert_eq!(eff.cde.len(), 3);
    for (_, samples) in &eff.cde {
        assert_eq!(samples.len(), 3);
        assert!(samples.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn mediator_excluded_outcome_model_gives_m_invariant_cde() {
    let data = base_dataset();
    let train =
        TrainingData::for_outcome(&data, &KernelInputSpec::exposures_and_mediator(&data)).unwrap();
    let state = KernelState::component_weights(vec![0.7, 0.4, 0.0], vec![true, true, false]).unwrap();
    let draws = vec![
        Draw { beta: vec![0.2], sigma2: 0.6, lambda: 2.0, kernel_state: state.clone() },
        Draw { beta: vec![0.1], sigma2: 0.9, lambda: 1.0, kernel_state: state },
    ];
    let out = PosteriorDraws::new(train, draws, AcceptanceReport::default(), vec![]).unwrap();
    let mut spec = ContrastSpec::new(vec![-0.6, -0.6], vec![0.6, 0.6]);
    spec.m_values = vec![-1.0, 0.0, 1.0];
    let eff = estimate_cde(&out, &spec, &MediationOptions::default(), 2).unwrap();
    for j in 0..2 {
        let v0 = eff.cde[0].1[j];
        assert_ne!(v0, 0.0);
        for (_, samples) in &eff.cde {
            assert_eq!(samples[j], v0);
        }
    }
}

#[test]
fn cde_requires_levels_and_mediator_in_kernel() {
    let (med, out, _) = three_models();
    let spec = ContrastSpec::new(vec![-0.6, -0.6], vec![0.6, 0.6]);
    assert!(matches!(
        estimate_cde(&out, &spec, &MediationOptions::default(), 2),
        Err(Error::InvalidInput(_))
    ));
    let mut with_m = spec;
    with_m.m_values = vec![0.0];
    assert!(matches!(
        estimate_cde(&med, &with_m, &MediationOptions::default(), 2),
        Err(Error::Schema(_))
    ));
}

#[test]
fn summaries_on_constant_samples_collapse() {
    let s = summarize_effects(&[2.5; 40]).unwrap();
    assert_eq!(s.mean, 2.5);
    assert_eq!(s.median, 2.5);
    assert_eq!(s.lower, 2.5);
    assert_eq!(s.upper, 2.5);
}

#[test]
fn summaries_match_interpolated_quantile_oracle() {
    let samples: Vec<f64> = (1..=100).map(|i| i as f64).collect();
    let s = summarize_effects(&samples).unwrap();
    assert_relative_eq!(s.lower, 3.475, epsilon = 1e-12);
    assert_relative_eq!(s.upper, 97.525, epsilon = 1e-12);
    assert_relative_eq!(s.mean, 50.5, epsilon = 1e-12);
}

#[test]
fn sign_flip_swaps_interval_bounds() {
    let samples: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
    let s = summarize_effects(&samples).unwrap();
    let flipped: Vec<f64> = samples.iter().map(|v| -v).collect();
    let f = summarize_effects(&flipped).unwrap();
    assert_relative_eq!(f.mean, -s.mean, epsilon = 1e-12);
    assert_relative_eq!(f.median, -s.median, epsilon = 1e-12);
    assert_relative_eq!(f.lower, -s.upper, epsilon = 1e-12);
    assert_relative_eq!(f.upper, -s.lower, epsilon = 1e-12);
}

#[test]
fn summaries_reject_empty_input() {
    assert!(summarize_effects(&[]).is_err());
}

#[test]
fn tidy_csv_shape_is_stable() {
    let (med, out, te) = three_models();
    let spec = ContrastSpec::new(vec![-0.4, -0.4], vec![0.6, 0.6]);
    let eff = estimate_mediation(&med, &out, &te, &spec, &MediationOptions::default(), 5).unwrap();
    let mut buf = Vec::new();
    eff.write_tidy_csv(&mut buf, "bkmr-cma").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,effect,m_value,draw,value");
    // 3 effects x 3 draws
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines[1].starts_with("bkmr-cma,te,,0,"));
}

#[test]
fn same_seed_reproduces_bitwise() {
    let (med, out, te) = three_models();
    let mut spec = ContrastSpec::new(vec![-0.4, 0.1], vec![0.6, 0.9]);
    spec.k_inner = 17;
    let opts = MediationOptions::default();
    let a = estimate_mediation(&med, &out, &te, &spec, &opts, 99).unwrap();
    let b = estimate_mediation(&med, &out, &te, &spec, &opts, 99).unwrap();
    assert_eq!(a.nde, b.nde);
    assert_eq!(a.nie, b.nie);
    assert_eq!(a.te, b.te);
}
