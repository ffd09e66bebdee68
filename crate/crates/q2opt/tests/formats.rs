use proptest::prelude::*;
use q2opt::checkpoint;
use q2opt::config::{AgentKind, ExperimentConfig, Recipe};
use q2opt::dataset::{
    parse_line, read_dataset, record_to_line, write_dataset, DatasetReader, TransitionCycle,
};
use q2opt::generate::{generate_dataset, PolicySpec};
use q2opt::metrics::{plot_export, read_csv, write_csv, MetricsRow, METRICS_FILE};
use q2opt::Error;
use q2opt_core::approximator::{Network, ParamSnapshot};
use q2opt_core::sim::SimConfig;

#[test]
fn reference_config_is_a_fixed_point() {
    let text = ExperimentConfig::reference_toml();
    let parsed = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, ExperimentConfig::default());
    assert_eq!(parsed.to_toml(), text);
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let text = ExperimentConfig::reference_toml().replace("[cem]", "[cem]\nsamplez = 3");
    let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
    assert!(err.contains("samplez"), "{err}");
    let err = ExperimentConfig::from_toml("[run]\nbatch_size = 0")
        .unwrap_err()
        .to_string();
    assert!(err.contains("run.batch_size"), "{err}");
}

#[test]
fn missing_config_names_the_path() {
    let err = ExperimentConfig::load(std::path::Path::new("/nonexistent/cfg.toml")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/cfg.toml"));
}

#[test]
fn risk_needs_the_implicit_agent() {
    let mut cfg = ExperimentConfig::default();
    cfg.run.agent = AgentKind::Q2rOpt;
    cfg.run.risk = "cvar(0.25)".parse().unwrap();
    assert!(cfg.validate().is_err());
    cfg.run.agent = AgentKind::Q2fOpt;
    cfg.validate().unwrap();
}

#[test]
fn recipes_expand_to_named_variants() {
    let base = ExperimentConfig::default();
    let names: Vec<String> = Recipe::OnlineComparison
        .variants(&base)
        .into_iter()
        .map(|v| v.name)
        .collect();
    assert_eq!(names, ["qt-opt", "q2r-opt", "q2f-opt"]);
    let sweep = Recipe::RiskSweep.variants(&base);
    let names: Vec<&str> = sweep.iter().map(|v| v.name.as_str()).collect();
    for want in [
        "cpw(0.71)",
        "wang(-0.75)",
        "wang(0.75)",
        "cvar(0.25)",
        "cvar(0.4)",
        "norm(3)",
        "pow(-2)",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert!(sweep.iter().all(|v| v.config.validate().is_ok()));
}

fn small_spec() -> Network {
    let mut cfg = ExperimentConfig::default();
    cfg.network.hidden_layers = vec![8, 8];
    cfg.run.n_basis = 4;
    Network::new(cfg.network_spec()).unwrap()
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let net = small_spec();
    let p = net.init_params(9).with_version(41);
    let bytes = checkpoint::encode(&p);
    assert_eq!(bytes.len(), 24 + 8 * p.len());
    let back = checkpoint::decode(&bytes).unwrap();
    assert_eq!(back.version(), 41);
    assert_eq!(back.spec_hash(), p.spec_hash());
    assert!(back
        .values()
        .iter()
        .zip(p.values())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn checkpoint_spec_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let net = small_spec();
    let other = ParamSnapshot::new(0, net.spec_hash() ^ 1, vec![0.0; net.param_len()]);
    checkpoint::save(&path, &other).unwrap();
    assert!(matches!(
        checkpoint::load_for(&path, &net),
        Err(Error::Checkpoint { .. })
    ));
    checkpoint::save(&path, &net.init_params(0)).unwrap();
    checkpoint::load_for(&path, &net).unwrap();
}

fn scripted(episodes: u64, seed: u64, path: &std::path::Path) -> q2opt::dataset::DatasetSummary {
    generate_dataset(
        &PolicySpec::Scripted,
        episodes,
        &SimConfig::default(),
        seed,
        path,
    )
    .unwrap()
}

#[test]
fn datasets_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    let b = dir.path().join("b.ndjson");
    let summary = scripted(200, 4, &a);
    let records = read_dataset(&a).unwrap();
    assert_eq!(records.len(), 200);
    let transitions: usize = records.iter().map(|r| r.transitions.len()).sum();
    assert_eq!(transitions as u64, summary.transitions);
    write_dataset(&b, &records).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_dataset_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("empty.ndjson");
    let s = scripted(0, 1, &a);
    assert_eq!(s.episodes, 0);
    assert!(read_dataset(&a).unwrap().is_empty());
    assert!(TransitionCycle::open(&a)
        .unwrap()
        .next_transition()
        .is_err());
}

#[test]
fn malformed_lines_report_their_number() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    scripted(3, 2, &a);
    let mut text = std::fs::read_to_string(&a).unwrap();
    text.push_str("{\"episode_id\": 3}\n");
    std::fs::write(&a, text).unwrap();
    let err = DatasetReader::open(&a)
        .unwrap()
        .collect::<Result<Vec<_>, _>>()
        .unwrap_err();
    match err {
        Error::Dataset { line, .. } => assert_eq!(line, 4),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn transition_cycle_wraps_around() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    let s = scripted(5, 3, &a);
    let mut c = TransitionCycle::open(&a).unwrap();
    let first = c.next_transition().unwrap();
    for _ in 1..s.transitions {
        c.next_transition().unwrap();
    }
    assert_eq!(c.passes(), 0);
    assert_eq!(c.next_transition().unwrap(), first);
    assert_eq!(c.passes(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lines_round_trip(seed in 0u64..10_000) {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ndjson");
        scripted(1, seed, &a);
        let line = std::fs::read_to_string(&a).unwrap();
        let rec = parse_line(line.trim_end()).unwrap();
        prop_assert_eq!(record_to_line(&rec), line.trim_end());
    }
}

fn row(step: u64, success: f64) -> MetricsRow {
    MetricsRow {
        wall_time: 0.0,
        global_step: step,
        env_episodes: step / 2,
        success_rate_eval: success,
        loss: 0.125,
        mean_q: f64::NAN,
        buffer_sizes: "sim:1;train:2".into(),
    }
}

#[test]
fn metrics_and_plot_export() {
    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    std::fs::create_dir_all(&r1).unwrap();
    std::fs::create_dir_all(&r2).unwrap();
    write_csv(&r1.join(METRICS_FILE), &[row(10, 0.5), row(20, 0.6)]).unwrap();
    write_csv(&r2.join(METRICS_FILE), &[row(15, 0.1)]).unwrap();
    let back = read_csv(&r1.join(METRICS_FILE)).unwrap();
    assert_eq!(back[1].global_step, 20);
    assert!(back[0].mean_q.is_nan());
    let header = std::fs::read_to_string(r1.join(METRICS_FILE)).unwrap();
    assert!(header.starts_with(
        "wall_time,global_step,env_episodes,success_rate_eval,loss,mean_q,buffer_sizes\n"
    ));

    let one = plot_export(std::slice::from_ref(&r1)).unwrap();
    assert_eq!(one.len(), 2);
    assert!(one.iter().all(|r| r.run == r1.display().to_string()));
    let both = plot_export(&[r1.clone(), r2.clone()]).unwrap();
    let steps: Vec<u64> = both.iter().map(|r| r.step).collect();
    assert_eq!(steps, [10, 20, 15]);
    assert!(plot_export(&[]).is_err());
    assert!(plot_export(&[dir.path().join("missing")]).is_err());
}
