use std::path::Path;

use particle_enkf::harness::{compute_rrmse, run_1d, run_2d, write_outputs, ExperimentConfig, Preset, Testbed};
use particle_enkf::lagrangian_filters::FilterKind;
use proptest::prelude::*;

fn small_1d(filter: FilterKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::adv1d(Preset::Desk);
    cfg.filter = filter;
    cfg.members = 6;
    cfg.n_assim = 5;
    cfg
}

fn small_2d(filter: FilterKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::vortex2d(Preset::Desk);
    cfg.filter = filter;
    cfg.members = 3;
    cfg.n_assim = 1;
    if let Testbed::Vortex2d(c) = &mut cfg.testbed {
        c.cells = 32;
        c.truth_refinement = 1;
        c.window = 0.1;
        c.obs_per_axis = 4;
        c.quadrature_cells = 32;
    }
    cfg
}

fn data_rows(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().count() - 1
}

#[test]
fn every_csv_has_one_row_per_record() {
    let dir = tempfile::tempdir().unwrap();
    for (name, cfg) in [("1d", small_1d(FilterKind::Part)), ("2d", small_2d(FilterKind::Remesh))] {
        let out = if name == "1d" { run_1d(&cfg) } else { run_2d(&cfg) }.unwrap();
        let d = dir.path().join(name);
        write_outputs(&out, &d).unwrap();
        for f in ["metrics.csv", "params_trace.csv", "member_errors.csv", "particle_counts.csv"] {
            assert_eq!(data_rows(&d.join(f)), cfg.n_assim + 1, "{name}/{f}");
        }
        assert!(d.join("config.json").exists());
        assert!(d.join("snapshots/truth.csv").exists());
        assert!(d.join("snapshots/member_000.csv").exists());
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_1d(FilterKind::Remesh);
    for run in ["a", "b"] {
        write_outputs(&run_1d(&cfg).unwrap(), &dir.path().join(run)).unwrap();
    }
    for f in ["metrics.csv", "params_trace.csv", "member_errors.csv", "snapshots/member_003.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn different_seeds_differ() {
    let a = run_1d(&small_1d(FilterKind::Grid)).unwrap();
    let mut cfg = small_1d(FilterKind::Grid);
    cfg.seed += 1;
    let b = run_1d(&cfg).unwrap();
    assert_ne!(a.last().state_analysis, b.last().state_analysis);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small_1d(FilterKind::Part);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| run_1d(&cfg)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&out, dir.path()).unwrap();
        std::fs::read(dir.path().join("metrics.csv")).unwrap()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn filters_share_the_initial_ensemble() {
    let firsts: Vec<f64> = [FilterKind::Remesh, FilterKind::Part]
        .iter()
        .map(|&k| run_1d(&small_1d(k)).unwrap().first().state_analysis)
        .collect();
    assert_eq!(firsts[0], firsts[1]);
}

#[test]
fn huge_observation_noise_leaves_the_filter_inert() {
    for kind in [FilterKind::Remesh, FilterKind::Part, FilterKind::Grid] {
        let mut cfg = small_1d(kind);
        cfg.free_run = true;
        let free = run_1d(&cfg).unwrap().last().state_analysis;
        cfg.free_run = false;
        if let Testbed::Adv1d(c) = &mut cfg.testbed {
            // sigma = 1e12
            c.noise_variance = 1e24;
        }
        let filtered = run_1d(&cfg).unwrap().last().state_analysis;
        assert!((filtered - free).abs() <= 0.05 * free, "{kind:?}: {filtered} vs free run {free}");
    }
}

fn nominal_runs() -> Vec<(FilterKind, particle_enkf::harness::RunOutput)> {
    let cfg = ExperimentConfig::adv1d(Preset::Paper);
    [FilterKind::Remesh, FilterKind::Part, FilterKind::Grid]
        .into_iter()
        .map(|kind| (kind, run_1d(&ExperimentConfig { filter: kind, ..cfg.clone() }).unwrap()))
        .collect()
}

#[test]
fn nominal_1d_error_is_lower_at_the_last_step() {
    for (kind, out) in nominal_runs() {
        assert_eq!(out.records.len(), 31);
        assert!(out.last().state_analysis < out.first().state_analysis, "{kind:?}");
    }
}

#[test]
fn nominal_1d_analyses_lower_the_error_in_27_of_30_steps() {
    let counts: Vec<(FilterKind, usize)> = nominal_runs()
        .into_iter()
        .map(|(kind, out)| {
            let helped = out.records[1..]
                .iter()
                .filter(|r| r.state_analysis <= r.state_forecast)
                .count();
            (kind, helped)
        })
        .collect();
    assert!(counts.iter().all(|&(_, n)| n >= 27), "steps out of 30 where the analysis lowered the error: {counts:?}");
}

proptest! {
    #[test]
    fn rrmse_is_nonnegative_and_scale_free(
        truth in prop::collection::vec(0.1f64..2.0, 16),
        noise in prop::collection::vec(-1.0f64..1.0, 48),
        scale in 0.1f64..10.0,
    ) {
        let members: Vec<Vec<f64>> = noise.chunks(16).map(|c| c.iter().zip(&truth).map(|(n, t)| t + n).collect()).collect();
        let r = compute_rrmse(&members, &truth, 0.1).unwrap();
        prop_assert!(r >= 0.0);
        let scaled: Vec<Vec<f64>> = members.iter().map(|m| m.iter().map(|v| v * scale).collect()).collect();
        let truth_scaled: Vec<f64> = truth.iter().map(|v| v * scale).collect();
        let rs = compute_rrmse(&scaled, &truth_scaled, 0.1).unwrap();
        prop_assert!((r - rs).abs() <= 1e-12 * r.max(1.0));
        prop_assert_eq!(compute_rrmse(&[truth.clone(), truth.clone()], &truth, 0.1).unwrap(), 0.0);
    }
}
