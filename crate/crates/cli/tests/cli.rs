use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use taylorpi_cli::config::{ExperimentConfig, WorldKind};
use taylorpi_cli::error::CliError;
use taylorpi_cli::experiment::{Experiment, Overrides};
use taylorpi_cli::main_with;
use tempfile::TempDir;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("taylorpi").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_PLANE: &str = r#"
seed = 3

[world]
kind = "plane"
obstacles = [[2.0, 6.0, 5.0, 7.0], [6.0, 2.0, 7.0, 6.0], [1.0, 1.5, 3.0, 2.5]]
goal = [8.0, 8.0, 9.0, 9.0]

[solver]
lengthscale = 1.0
lambda = 3.0
grid_resolution = 6
grid_samples = 256

[support]
n_per_axis = 6

[eval]
n_start_states = 150
rollouts_per_state = 2
trajectories = 3

[sweep]
lengthscales = [1.0, 2.0]
lambdas = [1.0, 3.0]
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn problems(text: &str) -> Vec<String> {
    match ExperimentConfig::parse(text) {
        Err(CliError::Config(p)) => p,
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn shipped_plane_config_has_benchmark_parameters() {
    let cfg = ExperimentConfig::load(&configs_dir().join("plane.toml")).unwrap();
    assert_eq!(cfg.world.kind, WorldKind::Plane);
    assert_eq!(cfg.world.gamma, 0.9);
    assert_eq!(cfg.world.actions, 12);
    assert_eq!(cfg.world.action_radius, 0.5);
    assert_eq!(cfg.world.motion_stddev, 0.2);
    assert_eq!(
        (cfg.world.goal_reward, cfg.world.obstacle_reward),
        (1.0, -1.0)
    );
    let exp = Experiment::load(&configs_dir().join("plane.toml"), &Overrides::default()).unwrap();
    assert_eq!(exp.world().workspace().goal_value(), 10.0);
    assert_eq!(exp.support().unwrap().len(), 100);
}

#[test]
fn shipped_terrain_config_builds() {
    let exp = Experiment::load(&configs_dir().join("terrain.toml"), &Overrides::default()).unwrap();
    assert_eq!(exp.config.world.kind, WorldKind::Terrain);
    assert!(exp.terrain().unwrap().max_slope() > 0.5);
    assert_eq!(exp.support().unwrap().len(), 151);
}

#[test]
fn unknown_keys_are_reported_with_their_path() {
    let text = SMALL_PLANE
        .replace("[solver]", "[solver]\nlengthscal = 2.0")
        .replace("seed = 3", "seed = 3\nverbose = true")
        + "\n[world.extra]\nx = 1\n";
    let p = problems(&text);
    for key in ["solver.lengthscal", "verbose", "world.extra"] {
        assert!(
            p.iter().any(|m| m.contains(&format!("`{key}`"))),
            "{key} missing from {p:?}"
        );
    }
    let p = problems(&SMALL_PLANE.replace("kind = \"plane\"", "kind = \"plane\"\ngama = 0.9"));
    assert_eq!(p, vec!["unknown key `world.gama`".to_string()]);
}

#[test]
fn gamma_of_one_is_rejected() {
    let p = problems(&SMALL_PLANE.replace("kind = \"plane\"", "kind = \"plane\"\ngamma = 1.0"));
    assert_eq!(p.len(), 1);
    assert!(p[0].contains("gamma must be < 1"), "{p:?}");
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "g.toml",
        &SMALL_PLANE.replace("kind = \"plane\"", "kind = \"plane\"\ngamma = 1.0"),
    );
    assert_eq!(run(&["solve", "--config", p_str(&cfg)]), 2);
}

fn p_str(path: &Path) -> &str {
    p(path)
}

#[test]
fn every_violation_is_listed_at_once() {
    let text = SMALL_PLANE
        .replace("lambda = 3.0", "lambda = -1.0")
        .replace("n_per_axis = 6", "n_per_axis = 1")
        .replace(
            "goal = [8.0, 8.0, 9.0, 9.0]",
            "goal = [9.0, 8.0, 8.0, 9.0]\nheightmap = \"x.txt\"",
        )
        .replace("lambdas = [1.0, 3.0]", "lambdas = [1.0, 1.0]");
    let p = problems(&text);
    for needle in [
        "solver.lambda",
        "support.n_per_axis",
        "world.goal",
        "world.heightmap is only valid for terrain",
        "sweep.lambdas repeats 1",
    ] {
        assert!(
            p.iter().any(|m| m.contains(needle)),
            "{needle} missing from {p:?}"
        );
    }
    assert!(matches!(
        ExperimentConfig::parse("[world]\nkind = \"plane\""),
        Err(CliError::Config(_))
    ));
    assert!(matches!(
        ExperimentConfig::parse("not toml ["),
        Err(CliError::Config(_))
    ));
}

#[test]
fn solve_is_byte_identical_across_runs_threads_and_manifest_reruns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(run(&["solve", "--config", p(&cfg), "--out", p(&a)]), 0);
    assert_eq!(
        run(&[
            "solve",
            "--config",
            p(&cfg),
            "--out",
            p(&b),
            "--threads",
            "1"
        ]),
        0
    );
    // The manifest alone reproduces the run.
    let manifest = dir.path().join("only-manifest.toml");
    fs::copy(a.join("manifest.toml"), &manifest).unwrap();
    fs::remove_file(&cfg).unwrap();
    assert_eq!(run(&["solve", "--config", p(&manifest), "--out", p(&c)]), 0);
    let first = csv_files(&a);
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "evaluation.csv",
            "support.csv",
            "trace.csv",
            "trajectories.csv",
            "values.csv"
        ]
    );
    assert_eq!(first, csv_files(&b));
    assert_eq!(first, csv_files(&c));
}

#[test]
fn seed_override_changes_the_rollouts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["solve", "--config", p(&cfg), "--out", p(&a)]), 0);
    assert_eq!(
        run(&["solve", "--config", p(&cfg), "--out", p(&b), "--seed", "4"]),
        0
    );
    assert_eq!(
        fs::read(a.join("values.csv")).unwrap(),
        fs::read(b.join("values.csv")).unwrap()
    );
    assert_ne!(
        fs::read(a.join("evaluation.csv")).unwrap(),
        fs::read(b.join("evaluation.csv")).unwrap()
    );
    let m = ExperimentConfig::load(&b.join("manifest.toml")).unwrap();
    assert_eq!(m.seed, 4);
}

fn field_value(dir: &Path, x: &str, y: &str) -> String {
    let text = fs::read_to_string(dir.join("value_field.csv")).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{x},{y},")))
        .unwrap();
    line.rsplit(',').next().unwrap().to_string()
}

#[test]
fn exported_field_pins_the_goal_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    for method in ["taylor", "direct", "grid"] {
        let run_dir = dir.path().join(method);
        let field = dir.path().join(format!("{method}-field"));
        assert_eq!(
            run(&[
                "solve",
                "--config",
                p(&cfg),
                "--out",
                p(&run_dir),
                "--method",
                method
            ]),
            0
        );
        assert_eq!(
            run(&[
                "export-field",
                "--solution",
                p(&run_dir),
                "--resolution",
                "21",
                "--out",
                p(&field)
            ]),
            0
        );
        assert_eq!(field_value(&field, "8.5", "8.5"), "10", "{method}");
        let rows = fs::read_to_string(field.join("policy_field.csv"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(rows, 1 + 21 * 21);
    }
    // The pinned supporting state itself holds exactly the goal value.
    let values = fs::read_to_string(dir.path().join("taylor/values.csv")).unwrap();
    let support = fs::read_to_string(dir.path().join("taylor/support.csv")).unwrap();
    let goal_row = support
        .lines()
        .skip(1)
        .position(|l| l.ends_with("pinned-goal"))
        .unwrap();
    let line = values.lines().nth(goal_row + 1).unwrap();
    assert_eq!(line, format!("{goal_row},10,"));
}

#[test]
fn default_field_resolution_is_100_by_100() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    let run_dir = dir.path().join("run");
    assert_eq!(
        run(&["solve", "--config", p(&cfg), "--out", p(&run_dir)]),
        0
    );
    assert_eq!(run(&["export-field", "--solution", p(&run_dir)]), 0);
    let text = fs::read_to_string(run_dir.join("value_field.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 100 * 100);
    assert!(text.starts_with("x,y,region,value\n0,0,free,"));
    assert!(text.trim_end().ends_with(&format!(
        "10,10,free,{}",
        text.trim_end().rsplit(',').next().unwrap()
    )));
}

#[test]
fn zero_solution_exports_an_all_zero_field() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_PLANE.replace(
        "kind = \"plane\"",
        "kind = \"plane\"\ngoal_reward = 0.0\nobstacle_reward = 0.0",
    );
    let cfg = write(dir.path(), "zero.toml", &text);
    let run_dir = dir.path().join("run");
    assert_eq!(
        run(&["solve", "--config", p(&cfg), "--out", p(&run_dir)]),
        0
    );
    let values = fs::read_to_string(run_dir.join("values.csv")).unwrap();
    assert!(values
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("0")));
    assert_eq!(
        run(&[
            "export-field",
            "--solution",
            p(&run_dir),
            "--resolution",
            "30"
        ]),
        0
    );
    let field = fs::read_to_string(run_dir.join("value_field.csv")).unwrap();
    assert_eq!(field.lines().count(), 901);
    assert!(field.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn evaluate_reproduces_the_solve_report_from_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    for method in ["taylor", "direct", "grid"] {
        let run_dir = dir.path().join(method);
        assert_eq!(
            run(&[
                "solve",
                "--config",
                p(&cfg),
                "--out",
                p(&run_dir),
                "--method",
                method
            ]),
            0
        );
        assert_eq!(run(&["evaluate", "--solution", p(&run_dir)]), 0);
        let solved = fs::read(run_dir.join("evaluation.csv")).unwrap();
        assert_eq!(
            solved,
            fs::read(run_dir.join("evaluate.csv")).unwrap(),
            "{method}"
        );
    }
    // Same problem under a different evaluation budget is accepted.
    let bigger = write(
        dir.path(),
        "bigger.toml",
        &SMALL_PLANE.replace("n_start_states = 150", "n_start_states = 300"),
    );
    let out = dir.path().join("bigger");
    assert_eq!(
        run(&[
            "evaluate",
            "--solution",
            p(&dir.path().join("taylor")),
            "--config",
            p(&bigger),
            "--out",
            p(&out)
        ]),
        0
    );
    let text = fs::read_to_string(out.join("evaluate.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("taylor,600,"));
}

#[test]
fn mismatched_or_tampered_solutions_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    let run_dir = dir.path().join("run");
    assert_eq!(
        run(&["solve", "--config", p(&cfg), "--out", p(&run_dir)]),
        0
    );
    let other = write(
        dir.path(),
        "other.toml",
        &SMALL_PLANE.replace("lengthscale = 1.0", "lengthscale = 2.5"),
    );
    assert_eq!(
        run(&["evaluate", "--solution", p(&run_dir), "--config", p(&other)]),
        2
    );
    assert_eq!(
        run(&["evaluate", "--solution", p(&run_dir), "--method", "grid"]),
        2
    );

    let values = run_dir.join("values.csv");
    let original = fs::read_to_string(&values).unwrap();
    fs::write(&values, original.replacen(",10,", ",11,", 1)).unwrap();
    assert_eq!(run(&["evaluate", "--solution", p(&run_dir)]), 2);
    assert_eq!(run(&["export-field", "--solution", p(&run_dir)]), 2);
    fs::write(&values, &original).unwrap();

    let manifest = run_dir.join("manifest.toml");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replace("lambda = 3.0", "lambda = 2.0")).unwrap();
    assert_eq!(run(&["evaluate", "--solution", p(&run_dir)]), 2);
    assert_eq!(run(&["solve", "--config", p(&manifest)]), 2);
}

#[test]
fn exit_codes_for_numerical_failure_and_non_convergence() {
    let dir = TempDir::new().unwrap();
    let singular = write(
        dir.path(),
        "singular.toml",
        &SMALL_PLANE
            .replace("lengthscale = 1.0", "lengthscale = 100.0")
            .replace("lambda = 3.0", "lambda = 0.0"),
    );
    let out = dir.path().join("singular");
    assert_eq!(
        run(&["solve", "--config", p(&singular), "--out", p(&out)]),
        3
    );
    assert!(!out.exists());

    let capped = write(
        dir.path(),
        "capped.toml",
        &SMALL_PLANE.replace("grid_samples = 256", "grid_samples = 256\nmax_iters = 1"),
    );
    let out = dir.path().join("capped");
    assert_eq!(run(&["solve", "--config", p(&capped), "--out", p(&out)]), 4);
    for f in ["manifest.toml", "values.csv", "evaluation.csv", "trace.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        run(&["solve", "--config", p(&dir.path().join("missing.toml"))]),
        2
    );
    assert_eq!(run(&["solve", "--config", p(&capped), "--threads", "0"]), 2);
}

fn write_ridge_heightmap(path: &Path) {
    let hm = taylorpi_core::terrain::ridge_heightmap(
        61,
        41,
        0.25,
        taylorpi_core::State::new(7.0, -1.0),
        taylorpi_core::State::new(7.0, 7.0),
        1.5,
        0.6,
    )
    .unwrap();
    fs::write(path, hm.to_text()).unwrap();
}

const HEIGHTMAP_TERRAIN: &str = r#"
[world]
kind = "terrain"
heightmap = "maps/ridge.txt"
trap_gain = 0.8
goal = [12.5, 4.5, 13.5, 5.5]

[solver]
lengthscale = 1.5

[support]
strategy = "importance"
n = 60

[eval]
n_start_states = 100
rollouts_per_state = 1
trajectories = 2
"#;

#[test]
fn heightmap_runs_carry_their_terrain() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("maps")).unwrap();
    let map = dir.path().join("maps/ridge.txt");
    write_ridge_heightmap(&map);
    let cfg = write(dir.path(), "terrain.toml", HEIGHTMAP_TERRAIN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["solve", "--config", p(&cfg), "--out", p(&a)]), 0);
    assert_eq!(
        fs::read(a.join("heightmap.txt")).unwrap(),
        fs::read(&map).unwrap()
    );
    let manifest = ExperimentConfig::load(&a.join("manifest.toml")).unwrap();
    assert_eq!(manifest.world.heightmap.as_deref(), Some("heightmap.txt"));
    assert_eq!(manifest.support.candidates, Some(3000));

    // Without the original map and config, the run directory is self-contained.
    fs::remove_dir_all(dir.path().join("maps")).unwrap();
    fs::remove_file(&cfg).unwrap();
    assert_eq!(
        run(&[
            "solve",
            "--config",
            p(&a.join("manifest.toml")),
            "--out",
            p(&b)
        ]),
        0
    );
    assert_eq!(csv_files(&a), csv_files(&b));
    assert_eq!(run(&["evaluate", "--solution", p(&a)]), 0);
    assert_eq!(
        fs::read(a.join("evaluate.csv")).unwrap(),
        fs::read(a.join("evaluation.csv")).unwrap()
    );

    // An edited heightmap no longer matches the recorded hash.
    let copy = a.join("heightmap.txt");
    let text = fs::read_to_string(&copy).unwrap();
    fs::write(&copy, text.replacen("0.25", "0.3", 1)).unwrap();
    assert_eq!(
        run(&[
            "solve",
            "--config",
            p(&a.join("manifest.toml")),
            "--out",
            p(&b)
        ]),
        2
    );
}

#[test]
fn sample_states_matches_the_solver_support() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "terrain.toml",
        &fs::read_to_string(configs_dir().join("terrain.toml")).unwrap(),
    );
    let (s, t) = (dir.path().join("s"), dir.path().join("t"));
    assert_eq!(
        run(&["sample-states", "--config", p(&cfg), "--out", p(&s)]),
        0
    );
    assert_eq!(
        run(&["sample-states", "--config", p(&cfg), "--out", p(&t)]),
        0
    );
    assert_eq!(csv_files(&s), csv_files(&t));
    let exp = Experiment::load(&cfg, &Overrides::default()).unwrap();
    let mut buf = Vec::new();
    exp.support().unwrap().write_csv(&mut buf).unwrap();
    assert_eq!(fs::read(s.join("support.csv")).unwrap(), buf);
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.ends_with(",importance")).count(),
        150
    );
}

#[test]
fn sweep_writes_a_reproducible_matrix() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "plane.toml", SMALL_PLANE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["sweep", "--config", p(&cfg), "--out", p(&a)]), 0);
    assert_eq!(
        run(&[
            "sweep",
            "--config",
            p(&cfg),
            "--out",
            p(&b),
            "--threads",
            "2"
        ]),
        0
    );
    assert_eq!(csv_files(&a), csv_files(&b));
    let text = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "lengthscale,lambda,return,se,iters,seconds,converged,error"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,1,") && lines[4].starts_with("2,3,"));
    assert_eq!(
        run(&[
            "sweep",
            "--config",
            p(&cfg),
            "--out",
            p(&a),
            "--method",
            "grid"
        ]),
        2
    );
}

#[test]
fn binary_reports_usage_and_config_errors() {
    let bin = env!("CARGO_BIN_EXE_taylorpi");
    let help = std::process::Command::new(bin)
        .arg("--help")
        .output()
        .unwrap();
    assert!(help.status.success());
    let usage = String::from_utf8_lossy(&help.stdout);
    for cmd in [
        "solve",
        "sweep",
        "evaluate",
        "export-field",
        "sample-states",
    ] {
        assert!(usage.contains(cmd), "{cmd}");
    }
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[world]\nkind = \"plane\"\ngoal = [8.0, 8.0, 9.0, 9.0]\ngama = 0.5\n",
    );
    let out = std::process::Command::new(bin)
        .args(["solve", "--config", p(&cfg)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `world.gama`"));
    let out = std::process::Command::new(bin)
        .args(["solve", "--method", "neural"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resolved_configs_round_trip(
        gamma in 0.0f64..0.999,
        sd in 0.0f64..1.0,
        q in 2usize..40,
        l in 0.01f64..10.0,
        lam in 0.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let text = format!(
            "seed = {seed}\n[world]\nkind = \"plane\"\ngoal = [8.0, 8.0, 9.0, 9.0]\ngamma = {gamma}\nmotion_stddev = {sd}\nactions = {q}\n[solver]\nlengthscale = {l}\nlambda = {lam}\n"
        );
        let mut cfg = ExperimentConfig::parse(&text).unwrap();
        cfg.resolve();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.sha256(), cfg.sha256());
        prop_assert_eq!(back.world.gamma.to_bits(), gamma.to_bits());
    }
}
