use ofi_core::data::{generate_synthetic, SyntheticSpec};
use ofi_core::hybrid::{evaluate_holdout, ModelKind, PipelineConfig};
use ofi_core::seed;
use ofi_core::var::observations;

fn holdout(kind: ModelKind, master: u64, nonlinear: f64) -> (f64, f64) {
    let spec = SyntheticSpec {
        seed: seed::derive(master, &[0]),
        nonlinear_strength: nonlinear,
        ..SyntheticSpec::default()
    };
    let obs = observations(&generate_synthetic(&spec).unwrap());
    let mut config = PipelineConfig::default();
    config.train.seed = seed::derive(master, &[1]);
    let out = evaluate_holdout(kind, &obs, &config, 0.8, "synthetic").unwrap();
    (out.report.mse, out.report.accuracy)
}

#[test]
fn hybrid_beats_var_on_nonlinear_data() {
    let mut wins = 0;
    for master in 0..5 {
        let (var_mse, var_acc) = holdout(ModelKind::Var, master, 0.2);
        let (hyb_mse, hyb_acc) = holdout(ModelKind::Hybrid, master, 0.2);
        eprintln!("seed {master}: var {var_mse:.4}/{var_acc:.3} hybrid {hyb_mse:.4}/{hyb_acc:.3}");
        if hyb_mse < var_mse && hyb_acc > var_acc {
            wins += 1;
        }
    }
    assert!(wins >= 4, "hybrid won {wins} of 5");
}

#[test]
fn hybrid_matches_var_on_linear_data() {
    for master in 0..5 {
        let (var_mse, _) = holdout(ModelKind::Var, master, 0.0);
        let (hyb_mse, _) = holdout(ModelKind::Hybrid, master, 0.0);
        eprintln!("seed {master}: var {var_mse:.5} hybrid {hyb_mse:.5}");
        assert!((hyb_mse - var_mse).abs() <= 0.1 * var_mse, "seed {master}: {hyb_mse} vs {var_mse}");
    }
}
