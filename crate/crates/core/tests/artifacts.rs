use std::fs;

use lstep_core::config::{ConfigFile, RunConfig};
use lstep_core::graph::{load_events, load_with_manifest, write_normalized, DatasetFormat, LoadOptions};
use lstep_core::model::ModelParams;
use lstep_core::numerics::Checkpoint;
use lstep_core::pe_init::{InitialPe, PeInitMethod};
use lstep_core::synthetic::random_stream;
use lstep_core::training::{EvalReport, MetricCell, Setting, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config() -> RunConfig {
    RunConfig {
        d_t: 6,
        d_n: 4,
        d_e: 4,
        d_p: 4,
        ..RunConfig::from_preset("uci").unwrap()
    }
}

#[test]
fn checkpoint_survives_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = config();
    let params = ModelParams::init(config.dims(), false, &mut ChaCha8Rng::seed_from_u64(1));
    let init = InitialPe::build(PeInitMethod::Laplacian, &[(0, 1), (1, 2), (2, 3)], 6, config.d_p).unwrap();
    let mut ckpt = params.to_checkpoint();
    init.to_checkpoint(&mut ckpt);
    let path = dir.path().join("checkpoint.bin");
    fs::write(&path, ckpt.to_bytes()).unwrap();

    let back = Checkpoint::from_bytes(&fs::read(&path).unwrap()).unwrap();
    let mut loaded = ModelParams::pass_through(config.dims(), false);
    assert_eq!(ModelParams::checkpoint_shape_hash(&back), loaded.shape_hash());
    loaded.load_checkpoint(&back).unwrap();
    assert_eq!(loaded.to_checkpoint().to_bytes(), params.to_checkpoint().to_bytes());
    let init_back = InitialPe::from_checkpoint(&back).unwrap();
    assert_eq!(init_back.num_nodes(), 6);
    for u in 0..6 {
        assert_eq!(init_back.row(u), init.row(u));
    }

    let shared = ModelParams::pass_through(config.dims(), true);
    assert_ne!(ModelParams::checkpoint_shape_hash(&back), shared.shape_hash());
    assert!(Checkpoint::from_bytes(&ckpt.to_bytes()[..20]).is_err());
}

#[test]
fn config_roundtrips_and_hashes() {
    let config = config();
    let again = RunConfig::parse(&config.to_toml()).unwrap();
    assert_eq!(again, config);
    assert_eq!(again.hash(), config.hash());
    let other = RunConfig { seed: 9, ..config.clone() };
    assert_ne!(other.hash(), config.hash());

    let err = ConfigFile::parse("dataset = \"x.csv\"\nd_t = 8\n").unwrap().resolve(None).unwrap_err();
    let text = err.to_string();
    for field in ["l", "t_gap", "k", "batch_size"] {
        assert!(text.contains(field), "{text}");
    }
    assert!(ConfigFile::parse("no_such_field = 1\n").is_err());
}

#[test]
fn report_json_roundtrip() {
    let config = config();
    let params = ModelParams::pass_through(config.dims(), true);
    let mut report = EvalReport::new("toy", &config, &params);
    report.metrics.push(MetricCell {
        setting: Setting::Inductive,
        strategy: Strategy::Historical,
        ap: 0.75,
        roc_auc: 0.8,
        positives: 12,
        negative_fallbacks: 3,
    });
    let back = EvalReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back.to_json(), report.to_json());
    let cell = back.cell(Setting::Inductive, Strategy::Historical).unwrap();
    assert_eq!(cell.negative_fallbacks, 3);
    assert_eq!(back.config_hash, config.hash());
    assert!(report.loss_trace_csv().starts_with("epoch,loss,loss_lp,loss_pe,val_ap,val_roc_auc"));
}

#[test]
fn normalized_file_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let stream = random_stream(7, 40, 3, 5, 2).unwrap().with_name("rand");
    let path = dir.path().join("events.csv");
    let manifest = write_normalized(&stream, &path).unwrap();
    assert_eq!((manifest.num_nodes, manifest.num_events, manifest.d_e), (7, 40, 5));

    let fallback = LoadOptions {
        format: DatasetFormat::Generic,
        node_dim: 1,
        edge_dim: 1,
    };
    let back = load_with_manifest(&path, &fallback).unwrap();
    assert_eq!(back.events(), stream.events());
    assert_eq!(back.node_dim(), 3);
    assert_eq!(back.metadata.name, "rand");
}

#[test]
fn bad_rows_name_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "src,dst,ts\n0,1,1\n1,2,oops\n").unwrap();
    let err = load_events(&path, &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let err = load_events(&dir.path().join("missing.csv"), &LoadOptions::default()).unwrap_err();
    assert!(err.to_string().contains("missing.csv"), "{err}");
}
