use std::fs;

use sfpo_harness::ablation::{stage3_ablation, Preset};
use sfpo_harness::experiment::CONFIG_ECHO;
use sfpo_harness::metrics::read_objects;
use sfpo_harness::plot::{render, PlotError, PlotKind, Series};
use sfpo_harness::report::efficiency_report;
use sfpo_harness::{read_metrics, run_experiment, ConfigError, ExperimentError, MetricsRecord, RunConfig};

fn small(dir: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.sfpo.total_steps = 40;
    c.sfpo.batch_size = 8;
    c.sfpo.window = 5;
    c.seeds = vec![0, 1, 2];
    c.output_dir = dir.to_path_buf();
    c
}

#[test]
fn writes_one_stream_per_seed_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small(tmp.path());
    let files = run_experiment(&c).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["seed0.jsonl", "seed1.jsonl", "seed2.jsonl"]);
    let echo = fs::read_to_string(tmp.path().join(CONFIG_ECHO)).unwrap();
    assert_eq!(RunConfig::parse(&echo).unwrap(), c);

    for f in &files {
        let records = read_metrics(f).unwrap();
        assert_eq!(records.len(), 40);
        for (s, r) in records.iter().enumerate() {
            assert_eq!(r.step, s);
            assert_eq!(r.cumulative_rollouts, ((s + 1) * 8 * 8) as u64);
            assert!(r.wall_clock_ms.is_none());
            assert_eq!(r.zscore.is_none(), s < 5);
        }
        assert!(records.iter().filter(|r| r.stop_step.is_some()).count() <= 1);
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = run_experiment(&small(a.path())).unwrap();
    let fb = run_experiment(&small(b.path())).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    assert_ne!(fs::read(&fa[0]).unwrap(), fs::read(&fa[1]).unwrap());
}

#[test]
fn baseline_mode_matches_zero_alpha() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut base = small(a.path());
    base.baseline_mode = true;
    let mut zero = small(b.path());
    zero.sfpo.alpha0 = 0.0;
    zero.sfpo.inner_steps = 5;
    for (x, y) in run_experiment(&base).unwrap().iter().zip(&run_experiment(&zero).unwrap()) {
        let (rx, ry) = (read_metrics(x).unwrap(), read_metrics(y).unwrap());
        assert_eq!(rx, ry);
        assert!(rx.iter().all(|r| r.alpha == 0.0));
    }
}

#[test]
fn wall_clock_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.wall_clock = true;
    c.seeds = vec![4];
    let records = read_metrics(&run_experiment(&c).unwrap()[0]).unwrap();
    let times: Vec<f64> = records.iter().map(|r| r.wall_clock_ms.unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn startup_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut c = small(&blocker.join("sub"));
    assert!(matches!(run_experiment(&c), Err(ExperimentError::Output { .. })));
    c.output_dir = tmp.path().join("ok");
    c.sfpo.group_size = 1;
    match run_experiment(&c) {
        Err(ExperimentError::Config(ConfigError::Field { field, .. })) => assert_eq!(field, "group_size"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn stage3_ablation_pairs_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.seeds = vec![0, 1];
    let paired = stage3_ablation(&c).unwrap();
    assert_eq!(paired.with_correction.len(), 2);
    assert_eq!(paired.without_correction.len(), 2);
    let on = RunConfig::parse(&fs::read_to_string(tmp.path().join("stage3_on").join(CONFIG_ECHO)).unwrap()).unwrap();
    let off = RunConfig::parse(&fs::read_to_string(tmp.path().join("stage3_off").join(CONFIG_ECHO)).unwrap()).unwrap();
    assert!(on.sfpo.slow_correction && !off.sfpo.slow_correction);
}

#[test]
fn zero_alpha_without_correction_never_moves() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.sfpo.alpha0 = 0.0;
    c.seeds = vec![0];
    let paired = stage3_ablation(&c).unwrap();
    let frozen = read_metrics(&paired.without_correction[0]).unwrap();
    // parameters stay at zero: the policy is uniform over 16 arms at every step
    assert!(frozen.iter().all(|r| r.entropy == frozen[0].entropy));
    assert!((frozen[0].entropy - 16f64.ln()).abs() < 1e-12);

    let with = read_metrics(&paired.with_correction[0]).unwrap();
    let mut b = small(&tmp.path().join("baseline"));
    b.baseline_mode = true;
    b.seeds = vec![0];
    assert_eq!(with, read_metrics(&run_experiment(&b).unwrap()[0]).unwrap());
}

#[test]
fn presets_cover_the_sweeps() {
    let base = RunConfig::default();
    let labels = |p: Preset| p.variants(&base).into_iter().map(|v| v.label).collect::<Vec<_>>();
    assert_eq!(labels(Preset::AlphaGrid).len(), 8);
    assert_eq!(labels(Preset::Stage3), ["stage3_on", "stage3_off"]);
    assert_eq!(labels(Preset::EntropyControl), ["ec_on", "ec_off"]);
    assert_eq!(labels(Preset::BaselineVsSfpo), ["baseline", "sfpo"]);
    assert_eq!(labels(Preset::AlphaDecay).len(), 3);
    assert_eq!(labels(Preset::KSweep).len(), 5);
}

fn synthetic(rewards: &[f64]) -> Vec<MetricsRecord> {
    rewards
        .iter()
        .enumerate()
        .map(|(s, &r)| MetricsRecord {
            step: s,
            alpha: 0.8,
            entropy: 1.0,
            zscore: None,
            mean_reward: r,
            mean_response_length: 1.0,
            loss: 0.0,
            cumulative_rollouts: 100 * (s as u64 + 1),
            wall_clock_ms: Some(2.0 * (s as f64 + 1.0)),
            stop_step: None,
        })
        .collect()
}

fn step_curve(hit: usize, len: usize) -> Vec<f64> {
    (0..len).map(|s| if s >= hit { 1.0 } else { 0.0 }).collect()
}

#[test]
fn efficiency_report_examples() {
    let a = synthetic(&step_curve(30, 200));
    let same = efficiency_report(&a, &a, 0.9, 1);
    assert_eq!(same.rollout_ratio, Some(1.0));
    assert_eq!(same.time_ratio, Some(1.0));

    let baseline = synthetic(&step_curve(150, 200));
    let sfpo = synthetic(&step_curve(50, 200));
    let r = efficiency_report(&baseline, &sfpo, 0.9, 1);
    assert_eq!(r.rollout_ratio, Some(3.0));
    assert_eq!(r.time_ratio, Some(3.0));

    let never = synthetic(&vec![0.2; 200]);
    let r = efficiency_report(&never, &sfpo, 0.9, 5);
    assert!(r.baseline.hit.is_none());
    assert_eq!(r.rollout_ratio, None);
    assert_eq!(r.sfpo.hit.as_ref().unwrap().step, 54);
    assert!(r.to_string().contains("baseline: not reached in 200 steps"));
}

fn series_from(files: &[std::path::PathBuf]) -> Vec<Series> {
    files
        .iter()
        .map(|f| Series {
            name: f.file_stem().unwrap().to_string_lossy().into_owned(),
            rows: read_objects(f).unwrap(),
        })
        .collect()
}

#[test]
fn plot_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let files = run_experiment(&small(tmp.path())).unwrap();
    let series = series_from(&files);

    let reward = render(&series, PlotKind::Reward).unwrap();
    let mut lines = reward.lines();
    assert_eq!(lines.next().unwrap(), "step\tseed0\tseed1\tseed2");
    assert_eq!(reward.lines().count(), 41);
    assert!(reward.lines().skip(1).all(|l| l.split('\t').count() == 4));

    let entropy = render(&series, PlotKind::Entropy).unwrap();
    assert!(entropy.starts_with("step\tseed0\tseed0_stop\tseed1\tseed1_stop\tseed2\tseed2_stop\n"));

    assert_eq!(render(&[], PlotKind::Reward).unwrap(), "step\n");
    let empty = Series { name: "seed9".into(), rows: Vec::new() };
    assert_eq!(render(&[empty], PlotKind::Length).unwrap(), "step\tseed9\n");

    match render(&series, PlotKind::WallClock) {
        Err(PlotError::MissingColumn { series, column, .. }) => {
            assert_eq!(series, "seed0");
            assert_eq!(column, "wall_clock_ms");
        }
        other => panic!("unexpected {other:?}"),
    }

    let eff = render(&series, PlotKind::Efficiency { target: 2.0, window: 5 }).unwrap();
    assert!(eff.lines().skip(1).all(|l| l.contains("not_reached")));
}
