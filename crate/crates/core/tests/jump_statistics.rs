use satl_core::trajectory::{run_ensemble, run_trajectory, RngStream, TrajectoryOptions};
use satl_core::{Exec, ModelSpec, RateParams, Scheme};

fn cavity_only(kappa: f64) -> ModelSpec {
    ModelSpec::new(Scheme::ThreeIncoherent, RateParams { kappa, ..Default::default() }, 1).unwrap()
}

#[test]
fn single_photon_emission_times_are_exponential() {
    let kappa = 0.5;
    let m = cavity_only(kappa);
    let psi = m.space().basis_vector(1, 1).unwrap();
    let opts = TrajectoryOptions { dt: None, t_final: 12.0 / (2.0 * kappa), record_stride: 1000 };
    let n = 4000;
    let runs = run_ensemble(&m, &psi, &opts, n, 31, Exec::Parallel).unwrap();
    let mut times: Vec<f64> = Vec::new();
    for r in &runs {
        assert!(r.events.len() <= 1);
        times.extend(r.events.iter().map(|e| e.time));
    }
    // censoring beyond t_final is below one expected event
    assert!(times.len() >= n - 2);
    times.sort_by(f64::total_cmp);
    let cdf = |t: f64| 1.0 - (-2.0 * kappa * t).exp();
    let d = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = cdf(t);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov critical value at the 1% level
    assert!(d * (n as f64).sqrt() < 1.628, "KS statistic {d}");
}

#[test]
fn empty_cavity_never_jumps() {
    let m = cavity_only(1.0);
    let psi = m.space().basis_vector(1, 0).unwrap();
    let rec = run_trajectory(&m, &psi, &TrajectoryOptions::default(), RngStream::new(3, 0)).unwrap();
    assert!(rec.events.is_empty());
}

#[test]
fn pumped_atom_alternates_between_levels() {
    let p = RateParams { gamma: 1.0, pump: 2.0, ..Default::default() };
    let m = ModelSpec::new(Scheme::ThreeIncoherent, p, 1).unwrap();
    let psi = m.space().basis_vector(1, 0).unwrap();
    let rec = run_trajectory(&m, &psi, &TrajectoryOptions { t_final: 200.0, ..Default::default() }, RngStream::new(4, 1)).unwrap();
    let names: Vec<&str> = rec.events.iter().map(|e| rec.channel_names[e.channel].as_str()).collect();
    assert!(names.len() > 50);
    assert!(names.windows(2).all(|w| w[0] != w[1]));
    let up_time = rec.pop_upper.iter().sum::<f64>() / rec.pop_upper.len() as f64;
    assert!((up_time - 2.0 / 3.0).abs() < 0.1, "{up_time}");
}
