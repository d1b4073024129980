use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 3
planners = ["hhp", "rhc", "direct"]
alphas = [0.5]
betas = [0.75]
episodes = 3
jobs = 1

[scenario]
initial_cars = [30, 30]

[policy]
cf_position_knots = 9
uf_position_knots = 9
velocity_knots = 5
horizons = 12
"#;

fn dreamr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dreamr")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dreamr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("config.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn common(&self, out: &str) -> Vec<String> {
        vec![
            "--config".into(),
            self.path("config.toml"),
            "--policy-dir".into(),
            self.path("policies"),
            "--out".into(),
            self.path(out),
        ]
    }

    fn run(&self, command: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![command.to_string()];
        args.extend(self.common(out));
        args.extend(extra.iter().map(|s| s.to_string()));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn policy_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p)))
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_write_identical_tables() {
    let ws = Workspace::new(CONFIG);
    ws.run("run", "a", &[]);
    ws.run("run", "b", &["--jobs", "3"]);
    for table in ["episodes.csv", "aggregate.csv", "tradeoff.csv", "hops.csv"] {
        let a = read(&ws.dir.path().join("a").join(table));
        assert_eq!(a, read(&ws.dir.path().join("b").join(table)), "{table}");
    }
    let episodes = String::from_utf8(read(&ws.dir.path().join("a/episodes.csv"))).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 3 * 3);
    assert!(episodes.lines().next().unwrap().starts_with("planner,alpha,beta,episode,seed,success,energy"));
}

#[test]
fn report_reproduces_the_summaries() {
    let ws = Workspace::new(CONFIG);
    ws.run("run", "out", &[]);
    let out = ws.dir.path().join("out");
    let tables = ["aggregate.csv", "tradeoff.csv", "hops.csv"];
    let before: Vec<_> = tables.iter().map(|t| read(&out.join(t))).collect();
    for t in tables {
        fs::remove_file(out.join(t)).unwrap();
    }
    let printed = ok(&["report", "--out", out.to_str().unwrap()]);
    for (t, b) in tables.iter().zip(&before) {
        assert_eq!(&read(&out.join(t)), b, "{t}");
    }
    let stdout = String::from_utf8(printed.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1 + 3);
    assert!(stdout.contains("HHP") && stdout.contains("RHC") && stdout.contains("DIRECT"));
}

#[test]
fn policy_build_is_idempotent() {
    let ws = Workspace::new(CONFIG);
    ws.run("build-policies", "out", &[]);
    let first = policy_files(&ws.dir.path().join("policies"));
    assert_eq!(first.len(), 1);
    assert!(first[0].0.starts_with("policies-alpha0.5000-"));
    ws.run("build-policies", "out", &[]);
    assert_eq!(policy_files(&ws.dir.path().join("policies")), first);

    fs::remove_dir_all(ws.dir.path().join("policies")).unwrap();
    ws.run("build-policies", "out", &[]);
    assert_eq!(policy_files(&ws.dir.path().join("policies")), first);
}

#[test]
fn missing_policies_are_reported_when_building_is_off() {
    let ws = Workspace::new(&format!("build_policies = false\n{CONFIG}"));
    let mut args = vec!["run".to_string()];
    args.extend(ws.common("out"));
    let out = dreamr(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("is missing and offline build is disabled"), "{err}");
    assert!(!ws.dir.path().join("out/episodes.csv").exists());
}

#[test]
fn rhc_alone_needs_no_policies() {
    let ws = Workspace::new(&format!("build_policies = false\n{CONFIG}"));
    ws.run("run", "out", &["--planner", "rhc", "--episodes", "1"]);
    assert!(!ws.dir.path().join("policies").exists());
    let episodes = String::from_utf8(read(&ws.dir.path().join("out/episodes.csv"))).unwrap();
    assert_eq!(episodes.lines().count(), 2);
    assert!(episodes.lines().nth(1).unwrap().starts_with("rhc,0.5,,0,3,"));
}

#[test]
fn traces_are_written_per_cell() {
    let ws = Workspace::new(CONFIG);
    ws.run("run", "out", &["--episodes", "1", "--trace", "0"]);
    let out = ws.dir.path().join("out");
    for name in ["trace-hhp-alpha0.5-beta0.75-ep0.txt", "trace-rhc-alpha0.5-ep0.txt", "trace-direct-alpha0.5-ep0.txt"] {
        let text = String::from_utf8(read(&out.join(name))).unwrap();
        assert!(text.lines().next().unwrap().starts_with("epoch:0 "), "{name}");
    }
}

#[test]
fn bench_expansions_repeat() {
    let ws = Workspace::new(CONFIG);
    let columns = |out: &str| -> Vec<(String, String)> {
        ws.run("bench", out, &["--vertices", "200,400", "--runs", "2"]);
        let text = String::from_utf8(read(&ws.dir.path().join(out).join("timing.csv"))).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let v = header.iter().position(|h| *h == "vertices").unwrap();
        let e = header.iter().position(|h| *h == "first_expansions").unwrap();
        text.lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[v].to_string(), f[e].to_string())
            })
            .collect()
    };
    let a = columns("a");
    assert_eq!(a.len(), 2);
    assert_eq!(a, columns("b"));
}

#[test]
fn invalid_settings_are_rejected() {
    let ws = Workspace::new(CONFIG);
    for extra in [&["--alpha", "1.5"][..], &["--beta", "-0.1"], &["--episodes", "0"]] {
        let mut args = vec!["run".to_string()];
        args.extend(ws.common("out"));
        args.extend(extra.iter().map(|s| s.to_string()));
        let out = dreamr(&args.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(!out.status.success(), "{extra:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{extra:?}");
    }
    let bad = Workspace::new("seed = 1\nunknown_key = 2\n");
    let out = dreamr(&["run", "--config", &bad.path("config.toml")]);
    assert!(!out.status.success());
}
