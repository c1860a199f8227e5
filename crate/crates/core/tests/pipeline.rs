use std::path::Path;

use geoflow::config::Config;
use geoflow::pipeline::{artifact_listing, files, write_desk_config, Pipeline, PipelineError, Stage};
use geoflow::synth::{generate_events, write_synth_dir, EventConfig, SynthWorld, UserAllocation, WorldConfig};

fn synth_dir(dir: &Path) {
    let world = SynthWorld::generate(&WorldConfig { countries: 8, blocks: 2, seed: 3, ..Default::default() }).unwrap();
    let cfg = EventConfig { users: UserAllocation::Total(600), events_per_user: 20, ..Default::default() };
    let out = generate_events(&world, &cfg).unwrap();
    write_synth_dir(dir, &world, &out).unwrap();
    write_desk_config(dir, cfg.year).unwrap();
}

fn load(dir: &Path, workers: usize, out: &str) -> Config {
    let mut c = Config::load(&dir.join("geoflow.json"), Vec::new()).unwrap();
    c.workers = workers;
    c.output_dir = dir.join(out);
    c
}

#[test]
fn full_run_recovers_planted_residences() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    let report = Pipeline::new(load(tmp.path(), 2, "out")).run_all().unwrap();
    assert_eq!(report["truth"]["residence_recovery"]["value"].as_f64(), Some(1.0));
    assert_eq!(report["ingest_errors"]["value"].as_u64(), Some(0));
    let bal = report["network"]["balance_sum"]["value"].as_f64().unwrap();
    let total = report["network"]["total_flow"]["value"].as_f64().unwrap();
    assert!(bal.abs() <= 1e-12 * total.max(1.0), "{bal}");
    for f in [files::FITS, files::COMMUNITIES, files::MODULARITY, files::REPORT, files::DAILY_INBOUND] {
        assert!(tmp.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn output_is_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    Pipeline::new(load(tmp.path(), 1, "a")).run_all().unwrap();
    Pipeline::new(load(tmp.path(), 4, "b")).run_all().unwrap();
    let a = artifact_listing(&tmp.path().join("a")).unwrap();
    let b = artifact_listing(&tmp.path().join("b")).unwrap();
    assert_eq!(a.len(), b.len());
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between worker counts");
    }
}

#[test]
fn stage_out_of_order_names_the_missing_predecessor() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    let p = Pipeline::new(load(tmp.path(), 1, "out"));
    match p.run_stage(Stage::Network) {
        Err(e @ PipelineError::StageOrder { needs: Stage::Profile, .. }) => assert_eq!(e.exit_code(), 5),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_user_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = Config::default();
    c.ingest.events = tmp.path().join("nope.csv");
    c.output_dir = tmp.path().join("out");
    let e = Pipeline::new(c).run_stage(Stage::Ingest).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn stages_rerun_alone_reproduce_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    let p = Pipeline::new(load(tmp.path(), 1, "out"));
    p.run_all().unwrap();
    let before = artifact_listing(&tmp.path().join("out")).unwrap();
    p.run_stage(Stage::Communities).unwrap();
    p.run_stage(Stage::Metrics).unwrap();
    assert_eq!(before, artifact_listing(&tmp.path().join("out")).unwrap());
}

#[test]
fn no_trips_means_zero_mobility_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let world = SynthWorld::generate(&WorldConfig { countries: 6, seed: 9, ..Default::default() }).unwrap();
    let cfg = EventConfig { users: UserAllocation::Total(300), events_per_user: 10, trip_rate: 0.0, ..Default::default() };
    write_synth_dir(tmp.path(), &world, &generate_events(&world, &cfg).unwrap()).unwrap();
    write_desk_config(tmp.path(), cfg.year).unwrap();
    let p = Pipeline::new(load(tmp.path(), 1, "out"));
    let report = p.run_all().unwrap();
    assert_eq!(report["truth"]["residence_recovery"]["value"].as_f64(), Some(1.0));
    let rows: Vec<geoflow::pipeline::MobilityRow> = geoflow::pipeline::read_rows(&p.out(files::MOBILITY)).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.mobility_rate == 0.0 && r.n_mobile == 0));
    assert!(report["fits"]["gravity_error"]["value"].is_string());
}
