use portfolio_lab::correlation::dcca_pair;
use portfolio_lab::trace_gen::{gen_arfima, gen_gaussian, ArfimaConfig, GaussianConfig};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn coupled_arfima_pairs_are_detrended_correlated() {
    let cfg = ArfimaConfig {
        num_pairs: 1,
        num_dependent: 0,
        coupling_weight: 0.5,
        rho1: 0.4,
        rho2: 0.4,
        ..ArfimaConfig::default()
    };
    let coefs: Vec<f64> = (0..20)
        .map(|seed| {
            let r = gen_arfima(&cfg, 5000, seed).unwrap().returns;
            dcca_pair(r.series(0), r.series(1), 60).unwrap()
        })
        .collect();
    let (m, se) = mean_and_se(&coefs);
    assert!(m > 0.3, "mean DCCA {m}");
    assert!(m - 3.0 * se > 0.0, "mean {m} se {se}");
}

#[test]
fn uncoupled_arfima_pairs_are_not() {
    let cfg = ArfimaConfig {
        num_pairs: 1,
        num_dependent: 0,
        coupling_weight: 1.0,
        rho1: 0.4,
        rho2: 0.4,
        ..ArfimaConfig::default()
    };
    let coefs: Vec<f64> = (0..20)
        .map(|seed| {
            let r = gen_arfima(&cfg, 5000, 100 + seed).unwrap().returns;
            dcca_pair(r.series(0), r.series(1), 60).unwrap()
        })
        .collect();
    let (m, se) = mean_and_se(&coefs);
    assert!(m.abs() < 4.0 * se + 0.05, "mean {m} se {se}");
}

#[test]
fn gaussian_dependents_follow_their_parent_under_dcca() {
    let cfg = GaussianConfig {
        num_independent: 2,
        num_dependent: 2,
        ..GaussianConfig::default()
    };
    let t = gen_gaussian(&cfg, 5000, 11).unwrap();
    for (k, parent) in t.parents.iter().enumerate() {
        let Some(p) = parent else { continue };
        let c = dcca_pair(t.returns.series(k), t.returns.series(*p), 60).unwrap();
        // Noise ratio 0.25 gives correlation 1/sqrt(1 + 0.0625).
        assert!((c - 0.970).abs() < 0.03, "{c}");
    }
}
