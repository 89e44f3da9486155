use std::fs;
use std::path::Path;
use std::process::Command;

use xformnet::cli::run_cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("xformnet").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?} failed: {err}");
    out
}

#[test]
fn enumerate_counts() {
    assert_eq!(ok(&["enumerate", "4", "--directed", "--count-only"]), "4095\n");
    assert_eq!(ok(&["enumerate", "2", "--directed", "--count-only"]), "3\n");
    assert_eq!(ok(&["enumerate", "5", "--directed", "--count-only"]), "1048575\n");
    assert_eq!(ok(&["enumerate", "--n", "4", "--undirected"]), "63\n");
}

#[test]
fn enumerate_list_mode() {
    let out = ok(&["enumerate", "3", "--list"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "# configurations: 63");
    assert_eq!(lines[1], "config_id,edges,density");
    assert_eq!(lines[2], "1,1,0.166667");
    assert_eq!(lines.last().unwrap(), &"63,6,1.00000");
    assert_eq!(lines.len(), 63 + 2);
}

#[test]
fn enumerate_refuses_oversized_lists() {
    let (code, out, err) = run(&["enumerate", "6", "--list"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert_eq!(err.lines().filter(|l| l.starts_with("xformnet: error[usage]")).count(), 1);
}

#[test]
fn enumerate_echoes_invocation_on_stderr() {
    let (_, _, err) = run(&["enumerate", "4"]);
    assert_eq!(err, "# xformnet enumerate --n 4 --directed --count-only\n");
}

#[test]
fn analyze_complete_network() {
    let out = ok(&["analyze", "--n", "4", "--config-id", "4095"]);
    assert!(out.contains("density: 1.00000\n"));
    assert!(out.contains("simple_cycles: 20\n"));
    assert!(out.contains("dag: false\n"));
}

#[test]
fn analyze_chain_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.txt");
    fs::write(&path, "n=4 directed=true\n0 1\n1 2\n2 3\n").unwrap();
    let out = ok(&["analyze", "--network", path.to_str().unwrap()]);
    assert!(out.contains("density: 0.250000\n"));
    assert!(out.contains("simple_cycles: 0\n"));
    assert!(out.contains("dag: true\n"));
    assert!(out.contains("0->1,00->01,"));
}

#[test]
fn analyze_expected_agents_per_rule() {
    // Four edges: 0->1, 0->2, 0->3, 1->0.
    let out = ok(&["analyze", "--n", "4", "--config-id", "15", "--population", "50"]);
    let shares: Vec<&str> = out
        .lines()
        .skip_while(|l| !l.starts_with("rule,"))
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(shares, ["12.5000"; 4]);
}

#[test]
fn analyze_parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "n=4 directed=true\n0 1\n2 2\n").unwrap();
    let (code, _, err) = run(&["analyze", "--network", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn simulate_echoes_defaults_and_is_reproducible() {
    let args = ["simulate", "--n", "4", "--config-id", "4095", "--seed", "7"];
    let (code, first, err) = run(&args);
    assert_eq!(code, 0);
    assert!(err.contains("--steps 1000 --burn-in 10"), "{err}");
    assert!(err.contains("--population 50"));
    let (_, second, _) = run(&args);
    assert_eq!(first, second);
    let row = first.lines().nth(2).unwrap();
    assert!(row.starts_with("4095,4,12,1.00000,50,0,7,"), "{row}");
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let result = dir.path().join("result.csv");
    ok(&[
        "simulate", "--n", "4", "--config-id", "4095", "--steps", "50", "--burn-in", "5",
        "--trace", trace.to_str().unwrap(), "--out", result.to_str().unwrap(),
    ]);
    let trace = fs::read_to_string(trace).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "step,gdp");
    assert_eq!(lines.len(), 51);
    let windowed: u64 = lines[6..].iter().map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    let row = fs::read_to_string(result).unwrap();
    let total: u64 = row.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(total, windowed);
}

fn mean_gdp(csv: &str) -> f64 {
    csv.lines().nth(2).unwrap().split(',').nth(7).unwrap().parse().unwrap()
}

#[test]
fn simulate_dag_mean_falls_toward_zero() {
    // Chain 0->1->2->3 is mask 273.
    let mean = |steps: &str| {
        mean_gdp(&ok(&["simulate", "--n", "4", "--config-id", "273", "--steps", steps, "--seed", "3"]))
    };
    let (short, long) = (mean("40"), mean("20000"));
    assert!(short > 0.0);
    assert!(long < short / 50.0, "short {short} long {long}");
}

#[test]
fn simulate_rejects_bad_params() {
    let (code, _, err) = run(&["simulate", "--n", "4", "--config-id", "1", "--burn-in", "2000"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("xformnet: error[usage]: invalid economy parameters"), "{err}");
    let (code, _, _) = run(&["simulate", "--n", "4", "--config-id", "1", "--endowment", "gift"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["simulate", "--config-id", "1"]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_empty_network_is_a_runtime_error() {
    let (code, _, err) = run(&["simulate", "--n", "4", "--config-id", "0"]);
    assert_eq!(code, 3);
    assert!(err.contains("no edges"), "{err}");
}

fn sweep(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "sweep", "--n", "3", "--populations", "6,10", "--replications", "2", "--steps", "60",
        "--seed", "11", "--out", dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn sweep_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let summary = sweep(dir.path(), &[]);
    assert_eq!(summary.trim(), format!("runs=252 groups=12 out={}", dir.path().display()));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert!(lines[0].starts_with("# xformnet 0.1.0 plan_hash="));
    assert!(lines[0].ends_with(" master_seed=11"));
    assert_eq!(lines[1], "config_id,n,edges,density,population,replication,seed,mean_step_gdp,total_gdp");
    assert_eq!(lines.len(), 2 + 63 * 2 * 2);
    let groups = fs::read_to_string(dir.path().join("groups.csv")).unwrap();
    assert_eq!(
        groups.lines().nth(1).unwrap(),
        "edge_count,density,population,mean_of_means,min_gdp,max_gdp,ci95_half_width,config_count"
    );
    assert_eq!(groups.lines().count(), 2 + 6 * 2);
    let pooled = fs::read_to_string(dir.path().join("groups_pooled.csv")).unwrap();
    assert_eq!(pooled.lines().count(), 2 + 6);
}

#[test]
fn sweep_workers_do_not_change_bytes() {
    let one = tempfile::tempdir().unwrap();
    let eight = tempfile::tempdir().unwrap();
    sweep(one.path(), &["--workers", "1"]);
    sweep(eight.path(), &["--workers", "8"]);
    for name in ["results.csv", "groups.csv", "groups_pooled.csv"] {
        assert_eq!(
            fs::read(one.path().join(name)).unwrap(),
            fs::read(eight.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn sharded_sweep_matches_one_shot() {
    let whole = tempfile::tempdir().unwrap();
    let lo = tempfile::tempdir().unwrap();
    let hi = tempfile::tempdir().unwrap();
    sweep(whole.path(), &[]);
    sweep(lo.path(), &["--config-range", "0..32"]);
    sweep(hi.path(), &["--config-range", "32..64"]);
    let rows = |dir: &Path| -> Vec<String> {
        fs::read_to_string(dir.join("results.csv"))
            .unwrap()
            .lines()
            .skip(2)
            .map(String::from)
            .collect()
    };
    let mut joined = rows(lo.path());
    joined.extend(rows(hi.path()));
    assert_eq!(joined, rows(whole.path()));

    // Shards merge back into the one-shot group statistics.
    let merged = tempfile::tempdir().unwrap();
    ok(&[
        "aggregate",
        "--in", lo.path().join("results.csv").to_str().unwrap(),
        "--in", hi.path().join("results.csv").to_str().unwrap(),
        "--out", merged.path().to_str().unwrap(),
    ]);
    let again = tempfile::tempdir().unwrap();
    ok(&[
        "aggregate",
        "--in", whole.path().join("results.csv").to_str().unwrap(),
        "--out", again.path().to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(merged.path().join("groups.csv")).unwrap(),
        fs::read(again.path().join("groups.csv")).unwrap()
    );
}

#[test]
fn aggregate_rejects_mixed_plans() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    sweep(a.path(), &[]);
    sweep(b.path(), &["--exhaustive"]);
    let (code, _, err) = run(&[
        "aggregate",
        "--in", a.path().join("results.csv").to_str().unwrap(),
        "--in", b.path().join("results.csv").to_str().unwrap(),
        "--out", a.path().join("merged").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn sweep_reads_plan_file_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    fs::write(
        &plan,
        "# small plan\nn = 3\ndirected = false\npopulations = 5\nreplications = 1\nsteps = 30\nburn_in = 3\nmaster_seed = 4\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, summary, err) = run(&[
        "sweep", "--plan", plan.to_str().unwrap(), "--replications", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("--n 3 --undirected --populations 5 --replications 3 --steps 30 --burn-in 3"), "{err}");
    // 7 undirected configurations on 3 nodes.
    assert!(summary.starts_with("runs=21 groups=3 "), "{summary}");
}

#[test]
fn sweep_plan_errors() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.txt");
    fs::write(&plan, "n = 4\nwhat = 1\n").unwrap();
    let (code, _, err) = run(&["sweep", "--plan", plan.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
    // Five nodes need sampling or an explicit exhaustive request.
    let (code, _, err) = run(&["sweep", "--n", "5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("1048575 configurations"), "{err}");
}

#[test]
fn sampled_five_node_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ok(&[
        "sweep", "--n", "5", "--sample", "10", "--populations", "20", "--replications", "1",
        "--steps", "30", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(summary.starts_with("runs=10 "), "{summary}");
}

#[test]
fn binary_exit_codes_and_env_overrides() {
    let bin = env!("CARGO_BIN_EXE_xformnet");
    let out = Command::new(bin).args(["enumerate", "4", "--count-only"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"4095\n");

    let out = Command::new(bin).args(["enumerate", "--nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    let out = Command::new(bin)
        .args(["simulate", "--network", "/definitely/missing"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = Command::new(bin)
        .args(["simulate", "--config-id", "4095"])
        .env("XFORMNET_N", "4")
        .env("XFORMNET_STEPS", "25")
        .env("XFORMNET_BURN_IN", "5")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("--steps 25 --burn-in 5"), "{stderr}");
}
