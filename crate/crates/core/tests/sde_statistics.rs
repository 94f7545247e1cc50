use bsde_lab::model::{SdeCoefficients, TimeGrid};
use bsde_lab::sde::{euler_maruyama, hitting_time, simulate_brownian};
use proptest::prelude::*;

#[test]
fn increments_have_variance_dt() {
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let b = simulate_brownian(&grid, 20_000, 2, 3).unwrap();
    let mut inc = [0.0; 2];
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0.0);
    for p in 0..b.n_paths() {
        for k in 0..16 {
            b.increment_into(p, k, &mut inc);
            for v in inc {
                s += v;
                s2 += v * v;
                n += 1.0;
            }
        }
    }
    let mean = s / n;
    let var = s2 / n - mean * mean;
    let dt = 1.0 / 16.0;
    // var of the sample variance is 2 dt^2 / n
    assert!((var - dt).abs() < 5.0 * dt * (2.0 / n).sqrt(), "var={var}");
    assert!(mean.abs() < 5.0 * (dt / n).sqrt());
}

#[test]
fn euler_strong_order_on_geometric_dynamics() {
    let (theta, eta, x0) = (0.5, 0.8, 1.0);
    let fine = 256;
    let grid = TimeGrid::new(0.0, 1.0, fine).unwrap();
    let n = 4000;
    let bm = simulate_brownian(&grid, n, 1, 17).unwrap();
    let coeffs = SdeCoefficients::geometric(theta, eta).unwrap();
    let exact: Vec<f64> = (0..n)
        .map(|p| x0 * ((theta - 0.5 * eta * eta) + eta * bm.brownian_at(p, fine)[0]).exp())
        .collect();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for stride in [16, 8, 4, 2, 1] {
        let coarse = bm.subsample(stride).unwrap();
        let steps = fine / stride;
        let x = euler_maruyama(&coeffs, 0.0, &[x0], coarse).unwrap();
        let err = (0..n)
            .map(|p| (x.state_at(p, steps)[0] - exact[p]).abs())
            .sum::<f64>()
            / n as f64;
        hs.push((1.0 / steps as f64).ln());
        errs.push(err.ln());
    }
    let mh = hs.iter().sum::<f64>() / hs.len() as f64;
    let me = errs.iter().sum::<f64>() / errs.len() as f64;
    let slope = hs
        .iter()
        .zip(&errs)
        .map(|(h, e)| (h - mh) * (e - me))
        .sum::<f64>()
        / hs.iter().map(|h| (h - mh).powi(2)).sum::<f64>();
    assert!((0.35..=0.75).contains(&slope), "slope={slope}");
}

#[test]
fn two_sided_exit_probability() {
    // P(sup_{s<=1} |B_s| > 1) = 0.6284 in continuous time; grid monitoring
    // misses some crossings.
    let grid = TimeGrid::new(0.0, 1.0, 512).unwrap();
    let n = 20_000;
    let paths = euler_maruyama(
        &SdeCoefficients::brownian(1),
        0.0,
        &[0.0],
        simulate_brownian(&grid, n, 1, 23).unwrap(),
    )
    .unwrap();
    let stop = hitting_time(&paths, &[0.0], 1.0, 1.0).unwrap();
    let p = stop.fraction_stopped_early();
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(p < 0.6284 + 3.0 * se, "p={p}");
    assert!(p > 0.58, "p={p}");
}

#[test]
fn simulation_ignores_thread_count() {
    let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let b = simulate_brownian(&grid, 3000, 2, 99).unwrap();
            euler_maruyama(
                &SdeCoefficients::sine_drift(),
                0.0,
                &[0.2],
                simulate_brownian(&grid, 3000, 1, 98).unwrap(),
            )
            .map(|x| (b, x))
            .unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stopping_index_is_first_exit(seed in 0u64..1000, c0 in 0.2f64..2.0, horizon in 0.1f64..1.0) {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let paths = euler_maruyama(
            &SdeCoefficients::brownian(1),
            0.0,
            &[0.0],
            simulate_brownian(&grid, 64, 1, seed).unwrap(),
        )
        .unwrap();
        let stop = hitting_time(&paths, &[0.0], c0, horizon).unwrap();
        prop_assert!(stop.cap_index <= 32);
        prop_assert!((grid.point(stop.cap_index) - horizon).abs() <= grid.dt() + 1e-12);
        for p in 0..64 {
            let k = stop.tau_index[p];
            prop_assert!(k <= stop.cap_index);
            for j in 1..k {
                prop_assert!(paths.state_at(p, j)[0].abs() <= c0);
            }
            if k < stop.cap_index {
                prop_assert!(paths.state_at(p, k)[0].abs() > c0);
            }
            prop_assert!((stop.tau_value[p] - grid.point(k)).abs() < 1e-15);
        }
    }
}
