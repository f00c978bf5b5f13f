use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn saskit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saskit"))
        .args(args)
        .env_remove("OPENROUTER_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sld_d2o() {
    let o = saskit(&["sld", "D2O", "--density", "1.1044"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let real = field(&stdout(&o), "sld real");
    assert!((real - 6.36).abs() < 0.06, "{real}");
    assert!(stdout(&o).contains("sld imaginary"));
}

#[test]
fn sld_input_errors_exit_2() {
    let o = saskit(&["sld", "", "--density", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("EmptyFormula"), "{}", stderr(&o));
    assert_eq!(
        saskit(&["sld", "H2O", "--density", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(saskit(&["sld", "H2O"]).status.code(), Some(2));
}

#[test]
fn generate_lamellar_file_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lam.txt");
    let svg = dir.path().join("lam.svg");
    let o = saskit(&[
        "generate",
        "--model",
        "lamellar",
        "--set",
        "thickness=50",
        "--qmin",
        "0.01",
        "--qmax",
        "1",
        "--n",
        "200",
        "--out",
        path_str(&data),
        "--plot",
        path_str(&svg),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&data).unwrap();
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .count();
    assert_eq!(rows, 200);
    assert!(stdout(&o).contains("thickness = 50"));
    let svg = std::fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn generate_is_deterministic_and_rejects_unknown_models() {
    let a = saskit(&["generate", "--model", "sphere", "--n", "20"]);
    let b = saskit(&["generate", "--model", "sphere", "--n", "20"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let noisy = |seed: &str| {
        saskit(&[
            "generate", "--model", "sphere", "--n", "20", "--noise", "0.05", "--seed", seed,
        ])
        .stdout
    };
    assert_eq!(noisy("3"), noisy("3"));
    assert_ne!(noisy("3"), noisy("4"));

    let o = saskit(&["generate", "--model", "torus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("UnknownModel"));
    assert_eq!(
        saskit(&["generate", "--model", "sphere", "--set", "radius"])
            .status
            .code(),
        Some(2)
    );
}

fn sphere_file(dir: &Path) -> String {
    let path = dir.join("sphere.txt");
    let o = saskit(&[
        "generate",
        "--model",
        "sphere",
        "--set",
        "radius=80",
        "--set",
        "sld_solvent=6.36",
        "--qmin",
        "0.005",
        "--qmax",
        "0.3",
        "--n",
        "100",
        "--noise",
        "0.01",
        "--seed",
        "7",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    path_str(&path).to_string()
}

#[test]
fn fit_recovers_radius_and_echoes_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let data = sphere_file(dir.path());
    let svg = dir.path().join("fit.svg");
    let o = saskit(&[
        "fit",
        &data,
        "--model",
        "sphere",
        "--fix",
        "sld=1",
        "--fix",
        "sld_solvent=6.36",
        "--init",
        "radius=60",
        "--bound",
        "radius=10,200",
        "--plot",
        path_str(&svg),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let radius_line = out
        .lines()
        .find(|l| l.trim_start().starts_with("radius"))
        .unwrap();
    let radius: f64 = radius_line
        .split(|c: char| c == '=' || c.is_whitespace())
        .filter_map(|t| t.parse().ok())
        .next()
        .unwrap();
    assert!((radius - 80.0).abs() / 80.0 < 0.02, "{out}");
    let fixed = &out[out.find("fixed").unwrap()..];
    assert!(
        fixed.contains("sld_solvent") && fixed.contains("6.36"),
        "{out}"
    );
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<circle"));
}

#[test]
fn fit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = sphere_file(dir.path());
    let o = saskit(&["fit", "missing.txt", "--model", "sphere"]);
    assert_eq!(o.status.code(), Some(2));
    let o = saskit(&[
        "fit",
        &data,
        "--model",
        "sphere",
        "--fix",
        "sld=1",
        "--fix",
        "sld_solvent=6.36",
        "--init",
        "radius=20",
        "--max-iter",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("NOT CONVERGED"), "{}", stdout(&o));
    let o = saskit(&["fit", &data, "--model", "sphere", "--bound", "radius=5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = saskit(&["fit", &data, "--model", "sphere", "--fix", "colour=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn models_and_search() {
    let o = saskit(&["models", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(names.len(), 4);
    for n in ["sphere", "cylinder", "ellipsoid", "lamellar"] {
        assert!(names.iter().any(|x| x == n));
    }
    let doc = saskit(&["models", "doc", "cylinder"]);
    assert!(stdout(&doc).contains("length"));
    assert_eq!(saskit(&["models", "doc", "torus"]).status.code(), Some(2));

    let s = saskit(&["search-docs", "lamellar"]);
    assert_eq!(s.status.code(), Some(0));
    assert!(stdout(&s).starts_with("1. lamellar"), "{}", stdout(&s));
    assert_eq!(saskit(&["search-docs", "?!"]).status.code(), Some(2));
}

#[test]
fn scripted_chat_transcript_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("sld.toml");
    std::fs::write(
        &scn,
        r#"
[[rule]]
agent = "sld"

[[rule.reply]]
tool_calls = [{ name = "tool_sld", arguments = { formula = "D2O", density = 1.1044 } }]

[[rule.reply]]
content = "D2O: {tool_sld:sld_real|.3} (real), {tool_sld:sld_imag|.3e} (imaginary)"
"#,
    )
    .unwrap();
    let run = || {
        let mut child = Command::new(env!("CARGO_BIN_EXE_saskit"))
            .args([
                "chat",
                "--backend",
                "scripted",
                "--scenario",
                path_str(&scn),
            ])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child
            .stdin
            .take()
            .unwrap()
            .write_all(b"What is the SLD of heavy water?\n/quit\n")
            .unwrap();
        child.wait_with_output().unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("> What is the SLD of heavy water?"));
    assert!(text.contains("[sld] D2O: 6.358 (real)"), "{text}");
}

#[test]
fn chat_with_canonical_scenario_and_upload() {
    let dir = tempfile::tempdir().unwrap();
    let data = sphere_file(dir.path());
    let o = saskit(&[
        "chat",
        "--backend",
        "scripted",
        "--upload",
        &data,
        "-m",
        "Fit my uploaded data with the sphere model, the solvent is heavy water",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("χ²"));
}

#[test]
fn chat_backend_errors_exit_4() {
    let o = saskit(&["chat", "--backend", "openrouter", "-m", "hi"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_saskit"))
        .args([
            "chat",
            "--backend",
            "openrouter",
            "--endpoint",
            "http://127.0.0.1:9/v1/chat/completions",
            "-m",
            "Calculate the SLD of D2O",
        ])
        .env("OPENROUTER_API_KEY", "sk-secret-value-123")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(!stdout(&o).contains("sk-secret-value-123"));
    assert!(!stderr(&o).contains("sk-secret-value-123"));
}

#[test]
fn bad_scenario_and_usage() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.toml");
    std::fs::write(&scn, "rules = 3").unwrap();
    assert_eq!(
        saskit(&[
            "chat",
            "--backend",
            "scripted",
            "--scenario",
            path_str(&scn)
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(saskit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(saskit(&["--help"]).status.code(), Some(0));
}

#[test]
fn serve_reports_bind_failure() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = saskit(&["serve", "--port", &port, "--backend", "scripted"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
