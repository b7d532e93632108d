use certlim::propensity::{fit_logistic, reliability_diagram, FitHyper, LabeledPool, OddsTable};
use rand::Rng;

#[test]
fn oracle_odds_are_calibrated_per_bin() {
    let mut rng = certlim::rng::seeded(31);
    let n = 20_000;
    let mut odds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let o = x.exp();
        labels.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + o)));
        odds.push(o);
    }
    let bins = reliability_diagram(&odds, &labels, 10).unwrap();
    assert_eq!(bins.len(), 10);
    for bin in &bins {
        let size = (bin.n0 + bin.n1) as f64;
        let p1 = bin.n1 as f64 / size;
        let se = ((1.0 - p1) / (p1.powi(3) * size)).sqrt();
        let observed = bin.observed.unwrap();
        assert!(
            (observed - bin.mean_nominal).abs() <= 3.0 * se,
            "bin [{}, {}]: observed {observed}, nominal {}, se {se}",
            bin.lo,
            bin.hi,
            bin.mean_nominal
        );
    }
}

#[test]
fn fitted_odds_table_matches_model_predictions() {
    let mut rng = certlim::rng::seeded(2);
    let rows: Vec<_> = (0..400)
        .map(|_| vec![rng.random_range(-2.0..2.0)].into())
        .collect();
    let labels: Vec<u8> = rows
        .iter()
        .map(|r: &certlim::CovariateVector<f64>| {
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-r.values()[0]).exp()))
        })
        .collect();
    let pool = LabeledPool::new(rows.clone(), labels).unwrap();
    let fit = fit_logistic(&pool, &FitHyper::default()).unwrap();
    assert!(fit.report.converged);
    let table = OddsTable::from_model(&fit.model, &rows).unwrap();
    for (row, &o) in rows.iter().zip(table.odds()) {
        assert_eq!(o, fit.model.predict_odds(row).unwrap());
        let p = fit.model.predict_prob(row).unwrap();
        assert!((o - (1.0 - p) / p).abs() <= 1e-9 * o.max(1.0));
    }
}
