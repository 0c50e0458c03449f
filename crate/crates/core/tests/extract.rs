use chrono::NaiveDate;
use proptest::prelude::*;
use rand::Rng;
use ramping::extract::{delta_sweep, extract_dataset, EventSequence, ExtractMode, ExtractionConfig};
use ramping::ingest::{Dataset, RadiationSeries, SensorMeta};
use ramping::model::{ModelParams, SingleStateParams};
use ramping::predict::frequency_comparison;
use ramping::rng::stream_rng;
use ramping::synthetic::{planted_dataset, SyntheticConfig};
use ramping::{FitOptions, Objective};

fn noisy_dataset(k: usize, days: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    Dataset::new(
        (0..k)
            .map(|i| {
                let values = (0..days * n).map(|_| rng.random_range(0.0..100.0f64).round()).collect();
                RadiationSeries::new(SensorMeta::new(format!("x{i}"), 0.0, 0.0).unwrap(), start, n, values, None).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Order statistics by counting, with the rank `ceil(num * m / 1000)` done in
/// integers; states by integer counts against `frac = 1/2`.
fn brute_force(series: &RadiationSeries, w1: usize, delta_milli: usize, two_state: bool) -> Vec<u8> {
    let n = series.n;
    let mut out = Vec::new();
    for t in w1..series.days() {
        let window = &series.values[(t - w1) * n..t * n];
        let m = window.len();
        let order_stat = |rank: usize| {
            *window
                .iter()
                .filter(|&&v| window.iter().filter(|&&w| w <= v).count() >= rank)
                .min_by(|a, b| a.total_cmp(b))
                .unwrap()
        };
        let low = order_stat((delta_milli * m).div_ceil(1000).max(1));
        let high = order_stat(((1000 - delta_milli) * m).div_ceil(1000).max(1));
        let day = series.day(t);
        let above = day.iter().filter(|&&v| v > high).count();
        let below = day.iter().filter(|&&v| v < low).count();
        let state = if 2 * above >= n {
            1
        } else if 2 * below >= n {
            if two_state { 2 } else { 1 }
        } else {
            0
        };
        out.push(state);
    }
    out
}

#[test]
fn extraction_matches_counting_oracle() {
    let data = noisy_dataset(2, 60, 6, 11);
    for delta_milli in [5, 50, 150, 333] {
        for states in [1, 2] {
            let cfg = ExtractionConfig {
                w1: 7,
                delta: delta_milli as f64 / 1000.0,
                frac: 0.5,
                states,
                mode: ExtractMode::IntraDay,
            };
            let ev = extract_dataset(&data, &cfg).unwrap();
            for (k, s) in data.series.iter().enumerate() {
                let oracle = brute_force(s, 7, delta_milli, states == 2);
                let got: Vec<u8> = (7..60).map(|t| ev.state(t, k).unwrap()).collect();
                assert_eq!(got, oracle, "delta {delta_milli}/1000 states {states} loc {k}");
            }
            assert_eq!(ev.state(6, 0), None);
        }
    }
}

#[test]
fn constant_series_has_no_events() {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    let s = RadiationSeries::new(SensorMeta::new("c", 0.0, 0.0).unwrap(), start, 4, vec![250.0; 4 * 50], None).unwrap();
    let data = Dataset::new(vec![s]).unwrap();
    for states in [1, 2] {
        let ev = extract_dataset(&data, &ExtractionConfig { states, ..Default::default() }).unwrap();
        assert!(ev.available().iter().all(|&x| x == 0));
    }
}

fn count_events(ev: &EventSequence) -> usize {
    ev.available().iter().filter(|&&s| s > 0).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn wider_delta_never_removes_events(seed in 0u64..10_000, a in 0.001f64..0.45, b in 0.001f64..0.45) {
        let data = noisy_dataset(1, 30, 5, seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let base = ExtractionConfig { w1: 5, ..Default::default() };
        let narrow = extract_dataset(&data, &ExtractionConfig { delta: lo, ..base }).unwrap();
        let wide = extract_dataset(&data, &ExtractionConfig { delta: hi, ..base }).unwrap();
        for (x, y) in narrow.available().iter().zip(wide.available()) {
            prop_assert!(x <= y);
        }
        prop_assert!(count_events(&narrow) <= count_events(&wide));
    }

    #[test]
    fn two_state_refines_single_state(seed in 0u64..10_000, delta in 0.001f64..0.45) {
        let data = noisy_dataset(2, 25, 4, seed);
        let base = ExtractionConfig { w1: 4, delta, ..Default::default() };
        let one = extract_dataset(&data, &base).unwrap();
        let two = extract_dataset(&data, &ExtractionConfig { states: 2, ..base }).unwrap();
        for (x, y) in one.available().iter().zip(two.available()) {
            prop_assert_eq!(*x == 1, *y > 0);
        }
        prop_assert_eq!(&two, &extract_dataset(&data, &ExtractionConfig { states: 2, ..base }).unwrap());
    }
}

#[test]
fn delta_sweep_against_frequency_counter() {
    let mut p = SingleStateParams::zeros(2, 1);
    p.birthrate = vec![0.04, 0.04];
    p.set(1, 1, 0, 0.5);
    let params = ModelParams::Single(p);
    let cfg = SyntheticConfig { days: 400, ..Default::default() };
    let syn = planted_dataset(&params, &cfg, 3).unwrap();
    let base = ExtractionConfig { w1: 30, frac: 0.5, ..Default::default() };
    let opts = FitOptions::with_objective(Objective::Ls);
    let grid = [0.02, 0.1, 0.3];
    let report = delta_sweep(&syn.dataset, &base, &grid, |ev| frequency_comparison(ev, 1, &opts, 0.5)).unwrap();
    assert_eq!(report.points.len(), 3);
    for point in &report.points {
        let ev = extract_dataset(&syn.dataset, &ExtractionConfig { delta: point.delta, ..base }).unwrap();
        assert_eq!(point.events, count_events(&ev));
        // held-out days start halfway through the available range
        let split = 30 + (370.0f64 * 0.5).round() as usize;
        let mut sq = 0.0;
        for c in &point.comparisons {
            let k = ev.ids.iter().position(|id| *id == c.location).unwrap();
            let hits = (split..400).filter(|&t| ev.state(t, k) == Some(1)).count();
            let freq = hits as f64 / (400 - split) as f64;
            assert!((c.empirical - freq).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&c.model));
            sq += (c.model - c.empirical).powi(2);
        }
        assert!((point.mse - sq / point.comparisons.len() as f64).abs() < 1e-15);
    }
    let best = report.best_delta.unwrap();
    let min = report.points.iter().map(|p| p.mse).fold(f64::INFINITY, f64::min);
    assert_eq!(report.points.iter().find(|p| p.delta == best).unwrap().mse, min);
}
