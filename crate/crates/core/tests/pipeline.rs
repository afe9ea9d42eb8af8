use slab_core::dynamics::{simulate, Initialization, IntegratorConfig};
use slab_core::experiments::{
    self as exp, EquatorParams, InitKind, MixingParams, Regime, TransitParams,
};
use slab_core::io::{read_csv, read_spectrum, write_csv, write_spectrum, Table};
use slab_core::thresholds::{compute_thresholds, EigenTriple};
use slab_core::{PhasePoint, SlabError};

fn pool(k: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap()
}

#[test]
fn csv_floats_round_trip_bit_exactly() {
    let d = tempfile::tempdir().unwrap();
    let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.30000000000000004];
    let mut t = Table::new(&["x"]);
    for v in vals {
        t.push(vec![v.into()]).unwrap();
    }
    let path = d.path().join("nested/values.csv");
    write_csv(&path, &t).unwrap();
    let (header, rows) = read_csv(&path).unwrap();
    assert_eq!(header, vec!["x"]);
    for (row, v) in rows.iter().zip(vals) {
        assert_eq!(row[0].parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
    let raw = std::fs::read_to_string(&path).unwrap();
    assert!(!raw.contains('\r'));
}

#[test]
fn empty_table_is_header_only() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("empty.csv");
    write_csv(&path, &Table::new(&["n", "tau"])).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "n,tau\n");
}

#[test]
fn spectrum_cache_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let p = PhasePoint::new(2.0, 3.0, 30).unwrap();
    let s = exp::instance_spectrum(&p, 17).unwrap();
    let path = d.path().join("s.bin");
    write_spectrum(&path, &s).unwrap();
    assert_eq!(read_spectrum(&path).unwrap(), s);
    std::fs::write(&path, b"not a spectrum").unwrap();
    assert!(read_spectrum(&path).is_err());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = EquatorParams { alpha: 8.0, theta: 4.0, n: 12, epsilon: 0.05, replicas: 60, seed: 5, dt: None };
    let one = pool(1).install(|| exp::equator_hit(&p)).unwrap();
    let three = pool(3).install(|| exp::equator_hit(&p)).unwrap();
    assert_eq!(one, three);
}

#[test]
fn equator_hits_become_certain_as_epsilon_shrinks() {
    let mut last = 0.0;
    for eps in [0.3, 0.1, 0.02, 0.002, 0.0002] {
        let p = EquatorParams { alpha: 8.0, theta: 4.0, n: 16, epsilon: eps, replicas: 200, seed: 9, dt: None };
        let r = exp::equator_hit(&p).unwrap();
        assert!(r.consistent_with_bound(), "eps {eps}: p {} bound {}", r.probability, r.bound);
        assert!(r.probability >= last - 0.05, "eps {eps}: {} after {last}", r.probability);
        last = r.probability;
    }
    assert!(last > 0.9, "{last}");
}

#[test]
fn equator_bound_decreases_in_n_and_epsilon() {
    let run = |n, eps| {
        exp::equator_hit(&EquatorParams { alpha: 8.0, theta: 4.0, n, epsilon: eps, replicas: 30, seed: 1, dt: None })
            .unwrap()
            .bound
    };
    assert!(run(16, 0.05) > run(32, 0.05));
    assert!(run(16, 0.02) > run(16, 0.05));
}

#[test]
fn no_spike_means_no_hit() {
    let p = PhasePoint::new(8.0, 4.0, 1000).unwrap();
    let m3 = compute_thresholds(&p, &EigenTriple::limiting(4.0).unwrap()).unwrap().m3;
    let frac = exp::null_hitting_fraction(2.0, 1000, m3, 30, 10.0, 3).unwrap();
    assert_eq!(frac, 0.0);
}

#[test]
fn phase_diagram_examples() {
    let cells = exp::phase_diagram(&[0.5, 8.0], &[2.0, 4.0]).unwrap();
    let get = |a: f64, t: f64| cells.iter().find(|c| c.alpha == a && c.theta == t).unwrap().regime;
    assert_eq!(get(0.5, 4.0), Regime::HighTFast);
    assert_eq!(get(8.0, 4.0), Regime::LowTSymmetricFast);
    assert_eq!(get(8.0, 2.0), Regime::Unresolved);
    let t = exp::phase_table(&cells).unwrap();
    assert_eq!(t.rows.len(), 4);
}

#[test]
fn mixing_estimates_are_labelled_lower_bounds() {
    let mut p = MixingParams::new(8.0, 4.0, 60, 60, 4.0, 21);
    p.inits = vec![InitKind::Uniform, InitKind::Equator, InitKind::Top, InitKind::MinusTop];
    p.grid = 2000;
    let est = exp::projected_tv_mixing(&p).unwrap();
    assert_eq!(est.len(), 4);
    for e in &est {
        assert!(e.lower_bound);
        assert!(e.d_full.iter().all(|d| (0.0..=1.0).contains(d)), "{}: {:?}", e.init, e.d_full);
        assert_eq!(e.d_half.is_some(), e.init == "top" || e.init == "minus_top");
        assert_eq!(e.times.len(), e.d_full.len());
    }
    // A point start at ±u1 is one-sided, so it is at least 1/2 away from the
    // symmetric law at t = 0.
    assert!(est[2].d_full[0] >= 0.5 && est[3].d_full[0] >= 0.5);
}

#[test]
fn projection_does_not_exceed_joint_distance() {
    let p = PhasePoint::new(8.0, 4.0, 40).unwrap();
    let s = exp::instance_spectrum(&p, 2).unwrap();
    let sample = |init: Initialization, seed: u64| -> Vec<(f64, f64)> {
        (0..200)
            .map(|k| {
                let c = IntegratorConfig::new(s.lambda1(), 0.5, seed + k);
                let r = simulate(&s, &p, &c, &init).unwrap();
                (*r.m1.last().unwrap(), *r.h.last().unwrap())
            })
            .collect()
    };
    let a = sample(Initialization::Uniform, 0);
    let b = sample(Initialization::Equator, 1000);
    let (dm, dj) = exp::projection_check(&a, &b, 6);
    assert!(dm <= dj + 1e-12, "{dm} > {dj}");
}

#[test]
fn transit_rejects_high_temperature_and_runs_small() {
    let mut p = TransitParams {
        alpha: 0.9,
        theta: 10.0,
        ns: vec![8, 10],
        transits: 30,
        instances: 2,
        seed: 4,
        dt: None,
        max_time: 200.0,
        burn_factor: 2.0,
        mixing_replicas: 30,
        mixing_horizon: 5.0,
    };
    match exp::transit_rate(&p) {
        Err(SlabError::Domain(m)) => assert_eq!(m, "transit requires alpha > 1"),
        other => panic!("{other:?}"),
    }
    p.alpha = 2.0;
    let r = exp::transit_rate(&p).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.rows.iter().all(|row| row.completed + row.censored == 30));
    assert!((r.delta - 0.1509).abs() < 1e-3);
}

#[test]
fn hitting_requires_the_low_temperature_window() {
    let p = exp::HittingParams {
        alpha: 8.0,
        theta: 2.0,
        ns: vec![100],
        replicas: 30,
        seed: 1,
        dt: None,
        hold: 0.0,
        hit_horizon: None,
    };
    assert!(matches!(exp::hitting_and_retention(&p), Err(SlabError::Domain(_))));
}

#[test]
fn retention_small_run_reports_every_replica() {
    let p = exp::HittingParams {
        alpha: 8.0,
        theta: 4.0,
        ns: vec![100, 200],
        replicas: 30,
        seed: 12,
        dt: None,
        hold: 5.0,
        hit_horizon: None,
    };
    let r = exp::hitting_and_retention(&p).unwrap();
    for row in &r.rows {
        assert_eq!(row.replicas.len(), 30);
        assert_eq!(row.hits + row.censored, 30);
        assert!(row.escapes <= row.hits);
        assert!(row.median_tau.unwrap() <= row.thresholds.t_hit);
    }
    assert_eq!(r.table().unwrap().rows.len(), 2);
}
