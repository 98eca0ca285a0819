use std::collections::HashSet;
use std::fs;

use seisbench::sweep::{read_records, run_sweep, Axes, SweepOptions, SweepSettings, SweepSpace};
use seisbench::synth::{ChannelMode, PatchSpec};
use seisbench::Error;

fn toy_space(depths: Vec<usize>, lrs: Vec<f64>) -> SweepSpace {
    SweepSpace {
        seed: 99,
        axes: Axes {
            backend_label: vec!["cpu".into()],
            workers: vec![1],
            channel_mode: vec![ChannelMode::Grayscale],
            batch: vec![64],
            dataset_size: vec![64],
            depth: depths,
            bottleneck: vec![2],
            lr: lrs,
            epochs: vec![1],
        },
        points: None,
        settings: SweepSettings {
            base_filters: 2,
            patch: PatchSpec::new(16, 16).unwrap(),
            ..SweepSettings::default()
        },
    }
}

#[test]
fn two_by_two_space_gives_four_distinct_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.jsonl");
    let s = run_sweep(&toy_space(vec![2, 3], vec![0.001, 0.5]), &out, &SweepOptions::default()).unwrap();
    assert_eq!((s.total, s.trained(), s.skipped), (4, 4, 0));
    let recs = read_records(&out).unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
    let ids: HashSet<&str> = recs.iter().map(|r| r.run_id.as_str()).collect();
    assert_eq!(ids.len(), 4);
    let order: Vec<(usize, f64)> = recs.iter().map(|r| (r.hp.depth, r.hp.lr)).collect();
    assert_eq!(order, vec![(2, 0.001), (2, 0.5), (3, 0.001), (3, 0.5)]);
}

#[test]
fn interrupt_and_resume_is_append_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.jsonl");
    let space = toy_space(vec![2, 3], vec![0.001, 0.01, 0.1]);
    let first = run_sweep(
        &space,
        &out,
        &SweepOptions {
            resume: false,
            limit: Some(2),
        },
    )
    .unwrap();
    assert_eq!((first.trained(), first.remaining), (2, 4));
    let before = fs::read(&out).unwrap();

    let second = run_sweep(
        &space,
        &out,
        &SweepOptions {
            resume: true,
            limit: None,
        },
    )
    .unwrap();
    assert_eq!((second.trained(), second.skipped), (4, 2));
    let after = fs::read(&out).unwrap();
    assert!(after.starts_with(&before));
    assert_eq!(read_records(&out).unwrap().len(), 6);

    let third = run_sweep(
        &space,
        &out,
        &SweepOptions {
            resume: true,
            limit: None,
        },
    )
    .unwrap();
    assert_eq!((third.trained(), third.skipped), (0, 6));
    assert_eq!(fs::read(&out).unwrap(), after);
}

#[test]
fn existing_output_needs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.jsonl");
    fs::write(&out, "\n").unwrap();
    assert!(matches!(
        run_sweep(&toy_space(vec![2], vec![0.01]), &out, &SweepOptions::default()),
        Err(Error::Spec(_))
    ));
}

#[test]
fn unwritable_output_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("runs.jsonl");
    assert!(matches!(
        run_sweep(&toy_space(vec![2], vec![0.01]), &out, &SweepOptions::default()),
        Err(Error::Io { .. })
    ));
}

#[test]
fn ids_are_collision_free_on_toy_grids() {
    let mut space = toy_space(vec![2, 3, 4, 5], vec![0.001, 0.002, 0.005, 0.01, 0.5]);
    space.axes.workers = vec![1, 2, 4];
    space.axes.bottleneck = vec![1, 2];
    space.axes.channel_mode = vec![ChannelMode::Grayscale, ChannelMode::Rgb];
    let points = space.points();
    let ids: HashSet<String> = points
        .iter()
        .enumerate()
        .map(|(i, hp)| seisbench::sweep::run_id(hp, seisbench::rng::mix64(space.seed, i as u64)))
        .collect();
    assert_eq!(ids.len(), points.len());
    // Distinct points stay distinct under a shared seed.
    let same_seed: HashSet<String> = points.iter().map(|hp| seisbench::sweep::run_id(hp, 0)).collect();
    assert_eq!(same_seed.len(), points.len());
}
