use std::path::{Path, PathBuf};
use std::process::Command;

use ernm::{ChainConfig, FitConfig, Network};
use ernm_cli::config::McarSettings;
use ernm_cli::{
    run_fit_single, run_mcar_study, run_simulate, ExperimentKind, ModelConfig, NetworkSource,
    RunConfig,
};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ernm-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn quick_fit(samples: usize, max_iter: usize) -> FitConfig {
    let chain = ChainConfig {
        samples,
        ..Default::default()
    };
    FitConfig {
        max_iter,
        full_chain: chain.clone(),
        cond_chain: chain,
        ..Default::default()
    }
}

fn small_mcar(rates: Vec<f64>, replicates: usize) -> RunConfig {
    let mut cfg = RunConfig::new(ExperimentKind::McarStudy);
    cfg.seed = 17;
    cfg.replicates = Some(replicates);
    cfg.mcar = McarSettings { rates };
    cfg.fit = Some(quick_fit(200, 4));
    cfg
}

const KINDS: [ExperimentKind; 5] = [
    ExperimentKind::McarStudy,
    ExperimentKind::LatentClass,
    ExperimentKind::ContactTraceStudy,
    ExperimentKind::FitSingle,
    ExperimentKind::Simulate,
];

#[test]
fn default_configs_round_trip_through_toml() {
    for kind in KINDS {
        let mut cfg = RunConfig::new(kind);
        cfg.network = Some(NetworkSource::monks());
        cfg.fit = Some(FitConfig::default());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg, "{}", kind.name());
        cfg.validate().unwrap();
    }
}

#[test]
fn bad_configs_are_rejected() {
    let base = RunConfig::new(ExperimentKind::McarStudy);
    let mut zero = base.clone();
    zero.replicates = Some(0);
    let mut rates = base.clone();
    rates.mcar.rates = vec![0.1, 1.5];
    let mut levels = base.clone();
    levels.latent.levels = 1;
    let mut files = base.clone();
    files.network = Some(NetworkSource::Files {
        edges: "/nonexistent/edges.txt".into(),
        attributes: None,
        n: 3,
        directed: false,
        variables: Vec::new(),
    });
    for cfg in [zero, rates, levels, files] {
        assert_eq!(cfg.validate().unwrap_err().kind(), "config");
    }
    assert!(RunConfig::from_toml("kind = \"mcar-study\"\nbogus = 1\n").is_err());
    assert!(RunConfig::from_toml("kind = \"no-such-study\"\n").is_err());
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

#[test]
fn identical_runs_write_identical_files() {
    let cfg = small_mcar(vec![0.0, 0.2], 2);
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    run_mcar_study(&cfg).unwrap().write(&a, &cfg).unwrap();
    run_mcar_study(&cfg).unwrap().write(&b, &cfg).unwrap();
    for f in [
        "mcar-study.csv",
        "mcar-study_summary.csv",
        "mcar-study_manifest.toml",
    ] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let mut other = cfg.clone();
    other.seed = 18;
    let c = run_mcar_study(&other).unwrap();
    assert_ne!(c.rows_csv().into_bytes(), read(&a, "mcar-study.csv"));
}

#[test]
fn rows_depend_only_on_condition_and_replicate() {
    let both = run_mcar_study(&small_mcar(vec![0.0, 0.2], 2)).unwrap();
    let subset = run_mcar_study(&small_mcar(vec![0.2], 1)).unwrap();
    let row = &subset.rows[0];
    let same = both
        .rows
        .iter()
        .find(|r| r.condition == row.condition && r.replicate == 0)
        .unwrap();
    assert_eq!(same.seed, row.seed);
    assert_eq!(
        same.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        row.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn manifest_echoes_the_config() {
    let cfg = small_mcar(vec![0.1], 1);
    let dir = scratch("manifest");
    run_mcar_study(&cfg).unwrap().write(&dir, &cfg).unwrap();
    let text = String::from_utf8(read(&dir, "mcar-study_manifest.toml")).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    let echoed = value.get("config").expect("config section").clone();
    let back: RunConfig = echoed.try_into().unwrap();
    assert_eq!(back, cfg);
    assert!(text.contains("version"));
}

fn edges_only(n: usize, directed: bool) -> NetworkSource {
    NetworkSource::Generate {
        n,
        directed,
        variables: Vec::new(),
        terms: vec!["edges".into()],
        eta: vec![-20.0],
        counts: None,
        burn_in_sweeps: Some(1),
    }
}

#[test]
fn simulation_at_zero_has_half_density() {
    let mut cfg = RunConfig::new(ExperimentKind::Simulate);
    cfg.network = Some(edges_only(20, false));
    cfg.model = Some(ModelConfig {
        terms: vec!["edges".into()],
        eta: Some(vec![0.0]),
    });
    cfg.simulate.count = 200;
    let sim = run_simulate(&cfg).unwrap();
    let density: f64 = sim.networks.iter().map(Network::density).sum::<f64>() / 200.0;
    assert!((density - 0.5).abs() < 0.02, "{density}");
    let dir = scratch("simulate");
    sim.write(&dir, &cfg).unwrap();
    let stats = String::from_utf8(read(&dir, "simulate_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 201);
    assert!(dir.join("network_199_edges.txt").exists());
}

#[test]
fn fit_single_on_small_files_matches_logit() {
    let dir = scratch("fit-single");
    std::fs::write(dir.join("edges.txt"), "1 2\n2 3\n3 4\n4 1\n1 3\n").unwrap();
    std::fs::write(
        dir.join("run.toml"),
        "kind = \"fit-single\"\nseed = 4\n\n[network]\nsource = \"files\"\nedges = \"edges.txt\"\nn = 4\ndirected = true\n\n[model]\nterms = [\"edges\"]\n\n[fit.full_chain]\nsamples = 40000\n\n[fit.cond_chain]\nsamples = 10\n",
    )
    .unwrap();
    let cfg = RunConfig::load(dir.join("run.toml")).unwrap();
    let (res, observed) = run_fit_single(&cfg).unwrap();
    assert_eq!(observed, vec![5.0]);
    let want = (5.0f64 / 7.0).ln();
    assert!(
        (res.eta_hat[0] - want).abs() < 0.05,
        "{} vs {want}",
        res.eta_hat[0]
    );
}

#[test]
fn simulated_network_is_recovered_by_fitting() {
    let eta = vec![-3.5, 1.0, 0.3];
    let mut cfg = RunConfig::new(ExperimentKind::FitSingle);
    cfg.seed = 21;
    cfg.network = Some(NetworkSource::Generate {
        n: 200,
        directed: false,
        variables: vec![ernm::Variable::new("x", 2)],
        terms: vec![
            "edges".into(),
            "homophily(x)".into(),
            "group-count(x, 0)".into(),
        ],
        eta: eta.clone(),
        counts: None,
        burn_in_sweeps: Some(30),
    });
    cfg.model = Some(ModelConfig {
        terms: vec![
            "edges".into(),
            "homophily(x)".into(),
            "group-count(x, 0)".into(),
        ],
        eta: None,
    });
    let (res, _) = run_fit_single(&cfg).unwrap();
    let se = res.se_eta.clone().expect("standard errors");
    for k in 0..3 {
        assert!(
            (res.eta_hat[k] - eta[k]).abs() < 3.0 * se[k],
            "term {k}: {} vs {} (se {})",
            res.eta_hat[k],
            eta[k],
            se[k]
        );
    }
}

fn ernm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ernm"))
}

#[test]
fn cli_reports_errors_as_json() {
    let out = ernm()
        .args(["fit", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"]["kind"], "io");

    let dir = scratch("cli-kind");
    std::fs::write(dir.join("run.toml"), "kind = \"simulate\"\n").unwrap();
    let out = ernm()
        .args(["fit", "--config"])
        .arg(dir.join("run.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"]["kind"], "config");
}

#[test]
fn cli_simulate_writes_outputs() {
    let dir = scratch("cli-sim");
    std::fs::write(
        dir.join("run.toml"),
        "kind = \"simulate\"\n\n[network]\nsource = \"fixture\"\nname = \"monks\"\n\n[model]\nterms = [\"edges\"]\neta = [-1.0]\n\n[simulate]\ncount = 3\n",
    )
    .unwrap();
    let out = ernm()
        .args(["simulate", "--seed", "3", "--config"])
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["networks"], 3);
    assert!(dir.join("out/simulate_stats.csv").exists());
    let manifest = std::fs::read_to_string(dir.join("out/simulate_manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
}
