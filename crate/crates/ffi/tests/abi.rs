use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ntt_ffi::*;

#[test]
fn null_handles_are_rejected() {
    unsafe {
        let mut n = 0usize;
        assert_eq!(ntt_map_goal_count(ptr::null(), &mut n), NttStatus::NullPointer);
        let msg = CStr::from_ptr(ntt_last_error()).to_str().unwrap();
        assert!(msg.contains("map"));
        assert_eq!(ntt_map_default(ptr::null_mut()), NttStatus::NullPointer);
        ntt_map_free(ptr::null_mut());
        ntt_episode_free(ptr::null_mut());
    }
}

#[test]
fn episode_moves_and_reports() {
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(ntt_map_default(&mut map), NttStatus::Ok);
        assert!(ntt_last_error().is_null());
        let mut goals = 0;
        ntt_map_goal_count(map, &mut goals);
        assert_eq!(goals, 16);
        let mut ep = ptr::null_mut();
        assert_eq!(ntt_episode_start(map, 0, 3, 0.0, &mut ep), NttStatus::Ok);
        let mut before = NttPose::default();
        ntt_episode_pose(ep, &mut before);
        let mut reward = 0.0;
        let mut term = NttTermination::Goal;
        assert_eq!(ntt_episode_step(ep, 0, &mut reward, &mut term), NttStatus::Ok);
        assert_eq!(term, NttTermination::Running);
        assert!(reward.is_finite());
        let mut after = NttPose::default();
        ntt_episode_pose(ep, &mut after);
        assert!((after.x - before.x).hypot(after.y - before.y) > 0.0);
        assert_eq!(ntt_episode_step(ep, 9, ptr::null_mut(), ptr::null_mut()), NttStatus::InvalidArgument);
        let mut bad = ptr::null_mut();
        assert_eq!(ntt_episode_start(map, 0, 99, 0.0, &mut bad), NttStatus::InvalidArgument);
        ntt_episode_free(ep);
        ntt_map_free(map);
    }
}

#[test]
fn statistics_match_core() {
    unsafe {
        let (a, b) = ([1.0, 2.0], [3.0, 4.0]);
        let (mut u, mut p) = (0.0, 0.0);
        assert_eq!(ntt_mann_whitney(a.as_ptr(), 2, b.as_ptr(), 2, &mut u, &mut p), NttStatus::Ok);
        assert_eq!(u, 0.0);
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(ntt_mann_whitney(a.as_ptr(), 0, b.as_ptr(), 2, &mut u, &mut p), NttStatus::Statistics);
        let mut r = 0.0;
        let (x, y) = ([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]);
        assert_eq!(ntt_spearman(x.as_ptr(), y.as_ptr(), 3, &mut r), NttStatus::Ok);
        assert_eq!(r, -1.0);
    }
}

#[test]
fn trajectory_and_topdown_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map = std::sync::Arc::new(ntt_core::navsim::MapSpec::default_map());
    let t = ntt_core::policies::shortest_path_follower(map, 0, 2, 0.0).unwrap();
    let path = dir.path().join("t.jsonl");
    t.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut tr = ptr::null_mut();
        assert_eq!(ntt_trajectory_load(cpath.as_ptr(), &mut tr), NttStatus::Ok);
        let mut n = 0;
        ntt_trajectory_len(tr, &mut n);
        assert_eq!(n, t.len());
        let mut pose = NttPose::default();
        assert_eq!(ntt_trajectory_pose(tr, n - 1, &mut pose), NttStatus::Ok);
        assert_eq!(pose.x, t.steps[n - 1].x);
        assert_eq!(ntt_trajectory_pose(tr, n, &mut pose), NttStatus::InvalidArgument);

        let mut map = ptr::null_mut();
        ntt_map_default(&mut map);
        let (mut w, mut h) = (0, 0);
        assert_eq!(ntt_encode_topdown(tr, map, ptr::null_mut(), 0, &mut w, &mut h), NttStatus::Ok);
        let mut small = vec![0u8; 4];
        assert_eq!(ntt_encode_topdown(tr, map, small.as_mut_ptr(), 4, &mut w, &mut h), NttStatus::BufferTooSmall);
        let mut buf = vec![0u8; w * h];
        assert_eq!(ntt_encode_topdown(tr, map, buf.as_mut_ptr(), buf.len(), &mut w, &mut h), NttStatus::Ok);
        let expected = ntt_core::encoders::encode_topdown(&t, &ntt_core::navsim::MapSpec::default_map().bounds()).unwrap();
        assert_eq!(buf, expected.pixels);
        ntt_trajectory_free(tr);
        ntt_map_free(map);

        let missing = CString::new("/nonexistent/model.ntt").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(ntt_classifier_load(missing.as_ptr(), &mut m), NttStatus::Model);
        assert!(m.is_null());
    }
}

#[test]
fn classifier_predicts_through_abi() {
    use ntt_core::classifiers::{encode_for, predict_trajectory, train_unchecked, Hyperparams, ModelKind, Preprocess};
    let map = std::sync::Arc::new(ntt_core::navsim::MapSpec::default_map());
    let pre = Preprocess::for_map(&map);
    let mut data = Vec::new();
    for (i, goal) in [1usize, 2, 3, 4].iter().enumerate() {
        let mut t = ntt_core::policies::shortest_path_follower(map.clone(), 0, *goal, 0.0).unwrap();
        if i % 2 == 0 {
            t.source = ntt_core::policies::Source::Human;
        }
        t.generator_id = format!("g{i}");
        data.push((encode_for(ModelKind::SymFf, &t, &map, &pre, None).unwrap(), t));
    }
    let enc: Vec<_> = data.iter().map(|(e, _)| e.clone()).collect();
    let hp = Hyperparams {
        epochs: 1,
        batches_per_epoch: 2,
        ..Hyperparams::default()
    };
    let run = train_unchecked(ModelKind::SymFf, &enc, &enc, &pre, &hp, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.ntt");
    run.model.save(&model_path).unwrap();
    let traj_path = dir.path().join("t.jsonl");
    data[0].1.save(&traj_path).unwrap();
    let expected = predict_trajectory(&run.model, &data[0].0).unwrap();

    let (mp, tp) = (CString::new(model_path.to_str().unwrap()).unwrap(), CString::new(traj_path.to_str().unwrap()).unwrap());
    unsafe {
        let (mut m, mut t, mut map_h) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(ntt_classifier_load(mp.as_ptr(), &mut m), NttStatus::Ok);
        assert_eq!(ntt_trajectory_load(tp.as_ptr(), &mut t), NttStatus::Ok);
        ntt_map_default(&mut map_h);
        let (mut logit, mut human) = (0.0, -1);
        assert_eq!(ntt_classifier_predict(m, t, map_h, &mut logit, &mut human), NttStatus::Ok);
        assert_eq!(logit, expected.logit);
        assert_eq!(human, expected.majority_human as i32);
        ntt_classifier_free(m);
        ntt_trajectory_free(t);
        ntt_map_free(map_h);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libntt_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout} {}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("goals=16 moved=1"));
}
