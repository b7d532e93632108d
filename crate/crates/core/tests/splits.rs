use certlim::{matched_split, PolicySpec, TrialDataset, TrialDesign, TrialSample};
use rand::Rng;

fn balanced_trial(m: usize, seed: u64) -> TrialDataset<f64> {
    let design = TrialDesign::<f64>::uniform(2).unwrap();
    let mut rng = certlim::rng::seeded(seed);
    let samples = (0..m)
        .map(|i| TrialSample::new(vec![i as f64], design.draw(rng.random()), rng.random()))
        .collect();
    TrialDataset::new(samples, 2).unwrap()
}

fn assert_half_matched(policy: PolicySpec<f64>) {
    let m = 1000;
    let design = TrialDesign::uniform(2).unwrap();
    let sd = (0.25 * m as f64).sqrt();
    for seed in 0..20 {
        let trial = balanced_trial(m, 100 + seed);
        let split = matched_split(&trial, &policy, &design, seed).unwrap();
        let matched = split.double_prime_indices.len() as f64;
        assert!(
            (matched - 0.5 * m as f64).abs() <= 3.0 * sd,
            "seed {seed}: {matched} matched of {m}"
        );
        assert_eq!(
            split.prime_indices.len() + split.double_prime_indices.len(),
            m
        );
    }
}

#[test]
fn treat_all_matches_half_of_a_balanced_trial() {
    assert_half_matched(PolicySpec::Constant(1));
}

#[test]
fn policy_equal_to_design_matches_half() {
    assert_half_matched(PolicySpec::Uniform);
}

#[test]
fn matched_rows_carry_the_policy_action() {
    let trial = balanced_trial(200, 1);
    let design = TrialDesign::uniform(2).unwrap();
    let split = matched_split(&trial, &PolicySpec::Uniform, &design, 9).unwrap();
    for &i in &split.double_prime_indices {
        assert_eq!(split.policy_draws[i], trial.samples()[i].a);
    }
    for &i in &split.prime_indices {
        assert_ne!(split.policy_draws[i], trial.samples()[i].a);
    }
}
