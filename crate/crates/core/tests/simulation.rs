use dpms_core::selection::Algorithm;
use dpms_core::simharness::default_phi_grid;
use dpms_core::{
    all_subsets, generate, pcls_select, run_sweep, PhiGrid, PrivacyBudget, RngStream,
    SelectionConfig, SweepGrid, SyntheticSpec,
};

fn best(rows: &[&dpms_core::simharness::SweepRow]) -> f64 {
    rows.iter().map(|r| r.prop_correct).fold(0.0, f64::max)
}

#[test]
fn generated_models_have_unit_l1_norm_three() {
    for id in [1, 2] {
        let spec = SyntheticSpec::preset(id, 50, RngStream::from_seed(1)).unwrap();
        assert_eq!(spec.true_mask().one_based(), vec![1, 2, 3]);
        assert_eq!(spec.beta0.iter().map(|b| b.abs()).sum::<f64>(), 3.0);
        let (data, truth) = generate(&spec).unwrap();
        assert_eq!(truth, spec.true_mask());
        assert!(data.r_is_data_dependent());
    }
}

#[test]
fn pcls_scores_all_63_models() {
    let (data, _) = generate(&SyntheticSpec::model1(200, RngStream::from_seed(4))).unwrap();
    let models = all_subsets(6, false, None).unwrap();
    let cfg = SelectionConfig::new(3.5, 20.0, PrivacyBudget::pure(1.0).unwrap(), data.r()).unwrap();
    let report = pcls_select(&data, models.masks(), &cfg, &RngStream::from_seed(4)).unwrap();
    assert_eq!(report.models.len(), 63);
}

#[test]
fn noiseless_single_replication_is_correct_on_plateau() {
    let mut grid = SweepGrid::new(Algorithm::Pcls);
    grid.n_values = vec![1000];
    grid.eps_values = vec![f64::INFINITY];
    grid.replications = 1;
    let template = SyntheticSpec::model1(1000, RngStream::from_seed(8));
    let res = run_sweep(&grid, &template).unwrap();
    assert_eq!(res.rows.len(), 41);
    assert!(res.rows.iter().all(|r| r.prop_agree == 1.0));
    let plateau: Vec<_> = res.rows.iter().filter(|r| r.phi >= 30.0 && r.phi <= 150.0).collect();
    assert!(!plateau.is_empty());
    assert!(plateau.iter().all(|r| r.prop_correct == 1.0), "{plateau:?}");
}

#[test]
fn small_epsilon_degrades_selection() {
    let mut grid = SweepGrid::new(Algorithm::Pcls);
    grid.n_values = vec![100];
    grid.eps_values = vec![0.1, 10.0];
    grid.replications = 500;
    let res = run_sweep(&grid, &SyntheticSpec::model1(100, RngStream::from_seed(21))).unwrap();
    let low = best(&res.slice(100, 3.5, 0.1));
    let high = best(&res.slice(100, 3.5, 10.0));
    // 63 candidates: chance level is about 1/63.
    assert!(low < 0.1, "eps=0.1 best {low}");
    assert!(high > low + 0.1, "eps=10 best {high} vs {low}");
}

#[test]
fn pcpl_selects_truth_on_a_penalty_plateau() {
    let mut grid = SweepGrid::new(Algorithm::Pcpl);
    grid.n_values = vec![1000];
    grid.eps_values = vec![5.0];
    grid.replications = 500;
    let res = run_sweep(&grid, &SyntheticSpec::model1(1000, RngStream::from_seed(2024))).unwrap();
    let good: Vec<f64> = res
        .rows
        .iter()
        .filter(|r| r.prop_correct >= 0.80)
        .map(|r| r.phi)
        .collect();
    assert!(good.len() >= 3, "phi values with >= 0.80: {good:?}");
    assert!(res.rows.iter().all(|r| r.delta == 1e-4));
}

#[test]
fn sweeps_are_reproducible() {
    let mut grid = SweepGrid::new(Algorithm::Pcls);
    grid.phi = PhiGrid::Explicit(vec![0.0, 10.0, 40.0]);
    grid.eps_values = vec![1.0, f64::INFINITY];
    grid.radius_values = vec![1.0, 3.5];
    grid.replications = 40;
    let template = SyntheticSpec::model2(100, RngStream::from_seed(3));
    let a = run_sweep(&grid, &template).unwrap();
    let b = run_sweep(&grid, &template).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("n,d,model_id,R,phi,epsilon,delta,algorithm,replications,prop_correct,prop_agree,fallback_rate,mean_runtime_ms\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn default_grid_covers_the_penalty_range() {
    let g = default_phi_grid(1000);
    assert_eq!(g.len(), 41);
    assert_eq!(g[0], 0.0);
    assert!((g[1] - 10.0).abs() < 1e-9 && (g[40] - 500.0).abs() < 1e-9);
    assert!(g.windows(2).all(|w| w[0] < w[1]));
}
