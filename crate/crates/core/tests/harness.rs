use nalgebra::DVector;
use pathsig::design::{make_design, simulate_response, Family, ResponseSpec};
use pathsig::harness::{run_study, summarize, StatisticKind, StudyConfig, StudyKind};
use pathsig::penalty::PenaltySpec;
use pathsig::rng::rep_seed;

fn small(study: StudyKind) -> StudyConfig {
    let mut cfg = StudyConfig::defaults(study);
    cfg.n_reps = 90;
    match study {
        StudyKind::NullQq => {
            cfg.p = 12;
            cfg.statistics = vec![
                StatisticKind::Cov(PenaltySpec::Lasso),
                StatisticKind::Cov(PenaltySpec::Scad { a: 3.7 }),
                StatisticKind::Cov(PenaltySpec::Mcp { gamma: 3.0 }),
            ];
        }
        StudyKind::Screening => {
            cfg.n = 120;
            cfg.p = 300;
            cfg.n_reps = 12;
        }
        StudyKind::Table1 => {
            cfg.n = 120;
        }
        StudyKind::Power => {
            cfg.theta_grid = vec![0.0, 2.5, 5.0];
        }
        StudyKind::Independence => {}
    }
    cfg
}

const ALL: [StudyKind; 5] = [
    StudyKind::NullQq,
    StudyKind::Independence,
    StudyKind::Screening,
    StudyKind::Table1,
    StudyKind::Power,
];

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn per_rep_tables_are_reproducible_and_thread_independent() {
    for study in ALL {
        let cfg = small(study);
        let a = in_pool(1, || run_study(&cfg).unwrap());
        let b = in_pool(4, || run_study(&cfg).unwrap());
        assert_eq!(a.per_rep, b.per_rep, "{study}");
        assert_eq!(a.per_rep.rows.len(), cfg.n_reps, "{study}");
        for (i, row) in a.per_rep.rows.iter().enumerate() {
            assert_eq!(row[0], i as f64);
        }
        assert_eq!(a.summary_csv(), b.summary_csv(), "{study}");
    }
}

#[test]
fn summaries_recompute_from_per_rep() {
    for study in ALL {
        let cfg = small(study);
        let r = run_study(&cfg).unwrap();
        let again = summarize(&cfg, &r.per_rep).unwrap();
        assert_eq!(again.len(), r.summary.len());
        for (x, y) in again.iter().zip(&r.summary) {
            assert_eq!(x.name, y.name);
            assert!(x.value.to_bits() == y.value.to_bits(), "{}: {} vs {}", x.name, x.value, y.value);
            assert_eq!(x.stderr.map(f64::to_bits), y.stderr.map(f64::to_bits));
        }
    }
}

#[test]
fn different_seeds_give_different_tables() {
    let cfg = small(StudyKind::NullQq);
    let other = StudyConfig { seed: cfg.seed + 1, ..cfg.clone() };
    assert_ne!(run_study(&cfg).unwrap().per_rep, run_study(&other).unwrap().per_rep);
}

#[test]
fn null_size_with_theoretical_critical_value() {
    let cfg = StudyConfig {
        family: Family::Orthogonal,
        n: 100,
        p: 10,
        theta_grid: vec![0.0],
        ..StudyConfig::defaults(StudyKind::Power)
    };
    let r = run_study(&cfg).unwrap();
    let size = r.metric("power_cov_lasso_theory@0").unwrap();
    assert!((0.03..=0.07).contains(&size), "size = {size}");
    // Empirical critical values hold the level up to Monte Carlo noise.
    let tol = 2.0 * (0.05f64 * 0.95 / cfg.n_reps as f64).sqrt();
    for s in ["cov_lasso_sim", "max_cov12_sim", "max_rss_drop_sim"] {
        let p = r.metric(&format!("power_{s}@0")).unwrap();
        assert!((p - 0.05).abs() <= tol, "{s}: {p}");
    }
}

#[test]
fn max_rss_drop_matches_single_variable_regressions() {
    let cfg = StudyConfig {
        family: Family::Orthogonal,
        n: 60,
        p: 8,
        n_reps: 20,
        theta_grid: vec![3.0],
        ..StudyConfig::defaults(StudyKind::Power)
    };
    let r = run_study(&cfg).unwrap();
    let recorded = r.per_rep.column("max_rss_drop@3").unwrap();
    for (rep, &drop) in recorded.iter().enumerate() {
        let seed = rep_seed(cfg.seed, rep as u64);
        let x = make_design(cfg.family, cfg.n, cfg.p, cfg.design, seed).unwrap();
        let spec = ResponseSpec {
            beta: cfg.full_beta(3.0),
            sigma: cfg.sigma,
            seed,
        };
        let y = simulate_response(&x, &spec).unwrap();
        let rss_null = y.norm_squared();
        let best = (0..cfg.p)
            .map(|j| {
                let col = x.values.column(j);
                let coef = col.dot(&y) / col.norm_squared();
                let resid: DVector<f64> = &y - col * coef;
                resid.norm_squared()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((drop - (rss_null - best)).abs() < 1e-8, "rep {rep}");
    }
}

#[test]
fn selector_rarely_undershoots_in_the_table_setting() {
    let r = run_study(&StudyConfig::defaults(StudyKind::Table1)).unwrap();
    let under = r.metric("freq_k0hat_0").unwrap() + r.metric("freq_k0hat_1").unwrap();
    assert!(under <= 0.01, "P(k̂0 < 2) = {under}");
    assert_eq!(r.metric("excluded_count"), Some(0.0));
}

#[test]
fn fixed_design_differs_from_redraw_only_in_the_design() {
    let cfg = StudyConfig {
        fixed_design: true,
        ..small(StudyKind::NullQq)
    };
    let fixed = run_study(&cfg).unwrap();
    let redraw = run_study(&StudyConfig { fixed_design: false, ..cfg.clone() }).unwrap();
    // Replication 0 draws the same design either way.
    assert_eq!(fixed.per_rep.rows[0], redraw.per_rep.rows[0]);
    assert_ne!(fixed.per_rep.rows[1], redraw.per_rep.rows[1]);
}
