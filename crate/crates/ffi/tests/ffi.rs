use std::ffi::{CStr, CString};
use std::ptr;

use srp_core::pipeline::srp_checkpoint;
use srp_core::sim::FEATURE_DIM;
use srp_core::srp::{predict, SrpConfig, SrpParams};
use srp_core::topology::{AffordedAction, SemanticRegion, TopologyKind};
use srp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        srp_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn episode(kind: SrpTopologyKind, action: SrpAction, lanes: u32, seed: u64) -> (SrpStatus, *mut SrpEpisode) {
    let mut ep = ptr::null_mut();
    let s = unsafe { srp_episode_new(kind, action, lanes, seed, true, &mut ep) };
    (s, ep)
}

#[test]
fn enum_values_follow_core_order() {
    let kinds = [
        SrpTopologyKind::FourWay,
        SrpTopologyKind::ThreeWayLeftStraight,
        SrpTopologyKind::ThreeWayLeftRight,
        SrpTopologyKind::StraightMultiLane,
    ];
    for (k, core) in kinds.iter().zip(TopologyKind::ALL) {
        assert_eq!(format!("{k:?}"), core.name());
    }
    let actions = [
        SrpAction::LeftTurn,
        SrpAction::Straight,
        SrpAction::RightTurn,
        SrpAction::LeftLaneChange,
        SrpAction::RightLaneChange,
    ];
    for (a, core) in actions.iter().zip(AffordedAction::ALL) {
        assert_eq!(format!("{a:?}"), core.name());
    }
}

#[test]
fn region_names() {
    for code in 0..18u8 {
        let p = srp_region_name(code);
        assert!(!p.is_null());
        let name = unsafe { CStr::from_ptr(p) }.to_str().unwrap();
        assert_eq!(name, SemanticRegion::from_code(code).unwrap().name());
    }
    assert!(srp_region_name(18).is_null());
}

#[test]
fn clean_episode_labels_match_truth() {
    let (s, ep) = episode(SrpTopologyKind::FourWay, SrpAction::LeftTurn, 2, 11);
    assert_eq!(s, SrpStatus::Ok, "{}", last_error());
    unsafe {
        let n = srp_episode_len(ep);
        assert!(n > 10);
        assert!(srp_episode_accepted(ep));
        let mut labels = vec![0i16; n];
        let mut truth = vec![0i16; n];
        assert_eq!(
            srp_episode_regions(ep, labels.as_mut_ptr(), truth.as_mut_ptr(), n),
            SrpStatus::Ok
        );
        let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / n as f64 > 0.9, "{agree}/{n}");

        assert_eq!(
            srp_episode_regions(ep, labels.as_mut_ptr(), ptr::null_mut(), n - 1),
            SrpStatus::BufferTooSmall
        );

        let mut feats = vec![0.0; 2 * FEATURE_DIM];
        assert_eq!(
            srp_episode_features(ep, 0, 2, feats.as_mut_ptr(), feats.len()),
            SrpStatus::Ok
        );
        assert!(feats.iter().all(|v| v.is_finite()));
        assert_eq!(
            srp_episode_features(ep, n - 1, 2, feats.as_mut_ptr(), feats.len()),
            SrpStatus::InvalidArgument
        );
        srp_episode_free(ep);
    }
}

#[test]
fn same_seed_same_episode() {
    let read = |seed| {
        let (s, ep) = episode(SrpTopologyKind::ThreeWayLeftRight, SrpAction::RightTurn, 2, seed);
        assert_eq!(s, SrpStatus::Ok);
        unsafe {
            let n = srp_episode_len(ep);
            let mut f = vec![0.0; n * FEATURE_DIM];
            srp_episode_features(ep, 0, n, f.as_mut_ptr(), f.len());
            srp_episode_free(ep);
            f
        }
    };
    assert_eq!(read(5), read(5));
}

#[test]
fn unaffordable_action_is_an_argument_error() {
    let (s, ep) = episode(SrpTopologyKind::StraightMultiLane, SrpAction::LeftLaneChange, 1, 0);
    assert_eq!(s, SrpStatus::InvalidArgument);
    assert!(ep.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(
            srp_episode_new(
                SrpTopologyKind::FourWay,
                SrpAction::Straight,
                2,
                0,
                true,
                ptr::null_mut()
            ),
            SrpStatus::NullPointer
        );
        assert_eq!(srp_episode_len(ptr::null()), 0);
        assert!(!srp_episode_accepted(ptr::null()));
        srp_episode_free(ptr::null_mut());
        srp_model_free(ptr::null_mut());
        let mut m = ptr::null_mut();
        assert_eq!(srp_model_load(ptr::null(), &mut m), SrpStatus::NullPointer);
        let mut info = SrpModelInfo::default();
        assert_eq!(srp_model_info(ptr::null(), &mut info), SrpStatus::NullPointer);
    }
    assert!(last_error().contains("null"));
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let (_, _) = episode(SrpTopologyKind::StraightMultiLane, SrpAction::LeftTurn, 2, 0);
    let full = last_error();
    let mut small = [0 as std::ffi::c_char; 4];
    let n = unsafe { srp_last_error(small.as_mut_ptr(), small.len()) };
    assert_eq!(n, full.len());
    let got = unsafe { CStr::from_ptr(small.as_ptr()) }.to_str().unwrap();
    assert_eq!(got, &full[..3]);
    assert_eq!(unsafe { srp_last_error(ptr::null_mut(), 0) }, full.len());
}

#[test]
fn missing_and_corrupt_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ptr::null_mut();
    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { srp_model_load(missing.as_ptr(), &mut m) }, SrpStatus::Io);
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { srp_model_load(junk.as_ptr(), &mut m) }, SrpStatus::Format);
    assert!(m.is_null());
}

#[test]
fn model_prediction_matches_core() {
    let cfg = SrpConfig {
        hidden_dim: 12,
        ..SrpConfig::default()
    };
    let params = SrpParams::init(&cfg, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("srp.ckpt");
    srp_checkpoint(&params, &cfg, "test").save(&path).unwrap();

    let (s, ep) = episode(SrpTopologyKind::FourWay, SrpAction::Straight, 2, 3);
    assert_eq!(s, SrpStatus::Ok);
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            srp_model_load(c_path.as_ptr(), &mut m),
            SrpStatus::Ok,
            "{}",
            last_error()
        );
        let mut info = SrpModelInfo::default();
        assert_eq!(srp_model_info(m, &mut info), SrpStatus::Ok);
        assert_eq!(
            info,
            SrpModelInfo {
                t_e: cfg.t_e,
                t_d: cfg.t_d,
                feature_dim: FEATURE_DIM,
                hidden_dim: 12
            }
        );

        let mut window = vec![0.0; info.t_e * info.feature_dim];
        assert_eq!(
            srp_episode_features(ep, 4, info.t_e, window.as_mut_ptr(), window.len()),
            SrpStatus::Ok
        );
        let (mut topo, mut cur) = (0u8, 0u8);
        let mut fut = vec![0u8; info.t_d];
        let mut hidden = vec![0.0; info.hidden_dim];
        let s = srp_model_predict(
            m,
            window.as_ptr(),
            window.len(),
            &mut topo,
            &mut cur,
            fut.as_mut_ptr(),
            fut.len(),
            hidden.as_mut_ptr(),
        );
        assert_eq!(s, SrpStatus::Ok, "{}", last_error());

        let frames: Vec<Vec<f64>> = window.chunks(FEATURE_DIM).map(<[f64]>::to_vec).collect();
        let p = predict(&params, &cfg, &frames).unwrap();
        let code = |i| SemanticRegion::from_local(p.topology_class as usize, i).unwrap().code();
        assert_eq!(topo, p.topology_class);
        assert_eq!(cur, code(p.current_region));
        let want: Vec<u8> = p.future_regions.iter().map(|&i| code(i)).collect();
        assert_eq!(fut, want);
        assert!(hidden.iter().any(|v| *v != 0.0));

        let s = srp_model_predict(
            m,
            window.as_ptr(),
            window.len() - 1,
            &mut topo,
            &mut cur,
            fut.as_mut_ptr(),
            fut.len(),
            ptr::null_mut(),
        );
        assert_eq!(s, SrpStatus::InvalidArgument);
        let s = srp_model_predict(
            m,
            window.as_ptr(),
            window.len(),
            &mut topo,
            &mut cur,
            fut.as_mut_ptr(),
            1,
            ptr::null_mut(),
        );
        assert_eq!(s, SrpStatus::BufferTooSmall);

        srp_model_free(m);
        srp_episode_free(ep);
    }
}

#[test]
fn header_is_valid_c() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/srp_ffi.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "srp_model_load",
        "srp_model_predict",
        "srp_episode_new",
        "srp_last_error",
        "SRP_STATUS_OK",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
