use std::fs;
use std::path::Path;
use std::process::Command;

use real_cli::experiment::{run_cells, Policy};
use real_cli::{parse_config_str, run_experiment, sweep_n, sweep_noise, RunConfig};
use real_core::StrategyKind;

const FAST: &str = "blobs_n = 240\nclassifier_hidden = 16\nclassifier_initial_epochs = 40\n\
                    hidden = 16,16\nwarm_start_episodes = 2\nmax_episodes = 4\nminibatch = 8\n";

fn config(dir: &Path, extra: &str) -> RunConfig {
    parse_config_str(&format!("{FAST}{extra}"), dir).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn std_sample(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn curves_row_count_and_label_growth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "agent = false\nstrategies = random,margin\nseeds = 1,2,3,4,5\nbudget = 50\nn_per_step = 5\n");
    run_experiment(&cfg).unwrap();
    let rows = csv_rows(&dir.path().join("out/curves.csv"));
    assert_eq!(rows.len(), 2 * 5 * 10);
    for run in rows.chunks(10) {
        let counts: Vec<usize> = run.iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(counts, (1..=10).map(|i| 8 + 5 * i).collect::<Vec<_>>());
    }
    let header = fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    assert!(header.starts_with("strategy,seed,step,labeled_count,test_accuracy,reward\n"));
}

#[test]
fn final_partial_batch_is_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "agent = false\nseeds = 3\nbudget = 7\nn_per_step = 3\n",
    );
    run_experiment(&cfg).unwrap();
    let counts: Vec<usize> = csv_rows(&dir.path().join("out/curves.csv"))
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(counts, vec![11, 14, 15]);
}

#[test]
fn summary_matches_recomputed_finals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "strategies = random,entropy\nseeds = 1,2,3\nbudget = 6\nn_per_step = 2\n",
    );
    run_experiment(&cfg).unwrap();
    let curves = csv_rows(&dir.path().join("out/curves.csv"));
    for row in csv_rows(&dir.path().join("out/summary.csv")) {
        let finals: Vec<f64> = curves
            .iter()
            .filter(|r| r[0] == row[0] && r[2] == "3")
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(finals.len(), 3);
        let mean = finals.iter().sum::<f64>() / 3.0;
        let mean_out: f64 = row[2].parse().unwrap();
        let sd_out: f64 = row[3].parse().unwrap();
        assert!((mean - mean_out).abs() <= 1e-5, "{mean} vs {mean_out}");
        assert!((std_sample(&finals) - sd_out).abs() <= 1e-5);
    }
}

#[test]
fn policies_share_splits_and_initial_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "strategies = random,margin,average_confidence\nseeds = 4,9\nbudget = 4\nn_per_step = 2\n",
    );
    let pols = [
        Policy::Strategy(StrategyKind::Random),
        Policy::Strategy(StrategyKind::Margin),
        Policy::Strategy(StrategyKind::AverageConfidence),
        Policy::Agent,
    ];
    let results = run_cells(&cfg, &cfg.env, &pols, None).unwrap();
    for seed in [4, 9] {
        let init: Vec<f64> = results
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.initial_test_accuracy)
            .collect();
        assert_eq!(init.len(), 4);
        assert!(init.windows(2).all(|w| w[0] == w[1]), "{init:?}");
    }
}

#[test]
fn single_n_sweep_equals_plain_run_and_timings_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "strategies =\nseeds = 1,2\nbudget = 6\nn_per_step = 1\n",
    );
    let rows = sweep_n(&cfg, &[1]).unwrap();
    let runs = run_experiment(&cfg).unwrap();
    let plain: Vec<f64> = runs.iter().map(|r| r.final_accuracy()).collect();
    assert_eq!(rows[0].accuracies, plain);

    let sweep = csv_rows(&dir.path().join("out/n_sweep.csv"));
    assert_eq!(sweep.len(), 1);
    let reported: f64 = sweep[0][3].parse().unwrap();
    assert!(reported > 0.0);
    let train_ms: Vec<f64> = csv_rows(&dir.path().join("out/n_sweep_timings.csv"))
        .iter()
        .filter(|r| r[2] == "0")
        .map(|r| r[3].parse().unwrap())
        .collect();
    let recomputed = train_ms.iter().sum::<f64>() / train_ms.len() as f64 / 1e3;
    assert!(
        (recomputed - reported).abs() <= 0.05 * reported,
        "{recomputed} vs {reported}"
    );
}

#[test]
fn sweep_n_rejects_n_above_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "budget = 4\nn_per_step = 2\n");
    let err = sweep_n(&cfg, &[1, 5]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn noise_sweep_shape_clean_column_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "agent = false\nstrategies = random,least_confident\nseeds = 1,2,3\nbudget = 6\nn_per_step = 2\n";
    let cfg = config(dir.path(), extra);
    let table = sweep_noise(&cfg, &[0.0, 0.1, 1.0]).unwrap();
    let text = fs::read_to_string(dir.path().join("out/noise_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("strategy,noise_0,noise_0.1,noise_1"));
    assert_eq!(lines.clone().count(), 2);
    for line in lines {
        assert_eq!(line.split(',').count(), 4);
    }

    let clean = run_cells(&cfg, &cfg.env, &real_cli::experiment::policies(&cfg), None).unwrap();
    for (name, cols) in &table.rows {
        let expect: Vec<f64> = clean
            .iter()
            .filter(|r| r.policy.name() == *name)
            .map(|r| r.final_accuracy())
            .collect();
        assert_eq!(&cols[0], &expect);
    }

    let runs = csv_rows(&dir.path().join("out/noise_sweep_runs.csv"));
    let wide = csv_rows(&dir.path().join("out/noise_sweep.csv"));
    for row in &wide {
        for (j, frac) in ["0", "0.1", "1"].iter().enumerate() {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r[0] == *frac && r[1] == row[0])
                .map(|r| r[3].parse().unwrap())
                .collect();
            let (_, sd) = row[1 + j].split_once(" ± ").unwrap();
            let sd: f64 = sd.parse().unwrap();
            assert!((std_sample(&accs) - sd).abs() <= 1e-5);
        }
    }
}

#[test]
fn failure_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("curves.csv"), "stale").unwrap();
    // 240 rows leave 120 in the pool; a budget of 200 cannot be met.
    let cfg = config(dir.path(), "agent = false\nseeds = 1\nbudget = 200\n");
    assert!(run_experiment(&cfg).is_err());
    assert!(!out.join("curves.csv").exists());
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn weights_are_saved_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "strategies =\nseeds = 2,7\nbudget = 4\nn_per_step = 2\nsave_weights = true\n",
    );
    run_experiment(&cfg).unwrap();
    for s in [2, 7] {
        let bytes = fs::read(dir.path().join(format!("out/agent_seed{s}.real"))).unwrap();
        assert_eq!(&bytes[..5], b"REAL1");
    }
}

#[test]
fn csv_dataset_with_image_shape_and_rotation_noise() {
    let dir = tempfile::tempdir().unwrap();
    let ds = real_core::datasets::make_blobs(200, 4, 2, 3.0, &mut real_core::Rng::new(1)).unwrap();
    real_core::datasets::write_csv(&ds, dir.path().join("data.csv")).unwrap();
    let cfg = config(
        dir.path(),
        "dataset = csv\ncsv_path = data.csv\nimage_height = 2\nimage_width = 2\nagent = false\n\
         seeds = 1,2\nbudget = 4\nn_per_step = 2\nnoise_fraction = 0.5\nnoise_max_rotation = 0.26\n",
    );
    run_experiment(&cfg).unwrap();
    assert_eq!(csv_rows(&dir.path().join("out/curves.csv")).len(), 4);

    let flat = config(
        dir.path(),
        "dataset = csv\ncsv_path = data.csv\nagent = false\nseeds = 1\nnoise_max_rotation = 0.26\n",
    );
    assert!(matches!(
        run_experiment(&flat).unwrap_err(),
        real_cli::HarnessError::Core(real_core::Error::NotImage)
    ));
}

fn real(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_real"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("REAL_THREADS", t),
        None => cmd.env_remove("REAL_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(
        &good,
        format!("{FAST}agent = false\nseeds = 1\nbudget = 4\nn_per_step = 2\n"),
    )
    .unwrap();
    assert_eq!(
        real(&["run", good.to_str().unwrap()], None).status.code(),
        Some(0)
    );

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "gamma = banana\n").unwrap();
    let out = real(&["run", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
    assert_eq!(real(&["run", "/missing.cfg"], None).status.code(), Some(1));
    assert_eq!(real(&["launch"], None).status.code(), Some(1));
    assert_eq!(
        real(
            &["baseline", good.to_str().unwrap(), "--strategy", "coin"],
            None
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        real(&["run", good.to_str().unwrap()], Some("zero"))
            .status
            .code(),
        Some(1)
    );

    // Output directory blocked by a regular file: runtime failure.
    fs::write(dir.path().join("blocker"), "").unwrap();
    let blocked = dir.path().join("blocked.cfg");
    fs::write(&blocked, format!("{FAST}agent = false\nseeds = 1\nbudget = 4\nn_per_step = 2\noutput_dir = blocker/out\n")).unwrap();
    assert_eq!(
        real(&["run", blocked.to_str().unwrap()], None)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn cli_baseline_and_thread_count_independence() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for t in ["1", "3"] {
        let cfg = dir.path().join(format!("t{t}.cfg"));
        fs::write(
            &cfg,
            format!("{FAST}strategies = random,margin\nseeds = 1,2,3\nbudget = 4\nn_per_step = 2\noutput_dir = out{t}\n"),
        )
        .unwrap();
        assert!(real(
            &["baseline", cfg.to_str().unwrap(), "--strategy", "margin"],
            Some(t)
        )
        .status
        .success());
        outputs.push(fs::read(dir.path().join(format!("out{t}/curves.csv"))).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.swap_remove(0)).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("margin,")));
}

#[test]
fn cli_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(
        &cfg,
        format!("{FAST}strategies = random\nseeds = 1,2\nbudget = 4\nn_per_step = 2\n"),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert!(real(&["sweep-n", c, "--n", "1..3"], None).status.success());
    assert_eq!(csv_rows(&dir.path().join("out/n_sweep.csv")).len(), 3);
    assert!(real(&["sweep-noise", c, "--fractions", "0,0.5"], None)
        .status
        .success());
    assert_eq!(csv_rows(&dir.path().join("out/noise_sweep.csv")).len(), 2);
    assert_eq!(
        real(&["sweep-noise", c, "--fractions", "0,2"], None)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        real(&["sweep-n", c, "--n", "1..9"], None).status.code(),
        Some(1)
    );
}
