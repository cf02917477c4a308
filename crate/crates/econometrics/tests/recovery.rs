//! Re-estimating the model that generated simulated sessions.

use vcm_core::agents::{AgentSpec, CoefficientRecord};
use vcm_core::game::{SessionConfig, Treatment};
use vcm_core::simulator::{run_batch, RunSpec};
use vcm_econometrics::{pool_design, tobit_fit, Bounds, TobitData};

/// Repetitions out of 20 where at least 6 of the 8 coefficients land within two
/// clustered standard errors of the truth.
fn recovered(truth: CoefficientRecord) -> usize {
    let t = truth.to_vec();
    let mut good = 0;
    for rep in 0..20 {
        let mut spec = RunSpec::new(
            SessionConfig::with_treatment(Treatment::SessionFeedback),
            vec![AgentSpec::tobit_latent(truth, 20.0); 12],
        );
        spec.replications = 10;
        spec.seed = 500 + rep;
        let rows = pool_design(&run_batch(&spec).unwrap().logs).unwrap();
        let fit = tobit_fit(&TobitData::from_rows(&rows).unwrap(), &Bounds::tokens(100)).unwrap();
        assert_eq!(fit.clusters, 120);
        assert!((fit.sigma - 20.0).abs() < 1.5, "sigma {}", fit.sigma);
        let within = (0..8).filter(|&j| (fit.coefficients[j] - t[j]).abs() <= 2.0 * fit.std_errors[j]).count();
        if within >= 6 {
            good += 1;
        }
    }
    good
}

#[test]
fn iceland_session_agents_are_recovered() {
    let good = recovered(CoefficientRecord::ICELAND_SESSION);
    assert!(good >= 18, "{good}/20");
}

#[test]
fn us_session_agents_are_recovered() {
    let good = recovered(CoefficientRecord::US_SESSION);
    assert!(good >= 18, "{good}/20");
}
