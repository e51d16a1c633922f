use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tokengate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokengate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/scenarios")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn passing_scenario_exits_zero() {
    let o = tokengate(&["run", fixture("two_gateways.scn").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("lamp-a"), "{out}");
    assert!(out.contains("invokeOperation"), "{out}");
}

#[test]
fn every_fixture_passes_from_the_command_line() {
    for entry in fs::read_dir(fixture("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "scn") {
            let o = tokengate(&["run", path.to_str().unwrap(), "--seed", "3"]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{}: {}",
                path.display(),
                stdout(&o)
            );
        }
    }
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scn");
    fs::write(
        &path,
        "create_wallet name=owner\n\
         init_contract owner=owner supply=10 op.TurnOnLights=0x01:1\n\
         assert balance account=owner eq=11\n",
    )
    .unwrap();
    let o = tokengate(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"), "{}", stdout(&o));
}

#[test]
fn undeclared_name_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ghost.scn");
    fs::write(
        &path,
        "create_wallet name=owner\n\
         init_contract owner=owner supply=10 op.TurnOnLights=0x01:1\n\
         grant to=ghost amount=1\n",
    )
    .unwrap();
    let o = tokengate(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("ghost"), "{err}");
    assert!(stdout(&o).is_empty());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(tokengate(&["run"]).status.code(), Some(2));
    assert_eq!(tokengate(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        tokengate(&["run", "/no/such/file.scn"]).status.code(),
        Some(2)
    );
}

#[test]
fn export_then_audit() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.blocks");
    let o = tokengate(&[
        "run",
        fixture("panic_restore.scn").to_str().unwrap(),
        "--export-blocks",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(log.exists());
    let jsonl = fs::read_to_string(dir.path().join("run.blocks.jsonl")).unwrap();
    assert!(jsonl.lines().count() > 1);
    for line in jsonl.lines() {
        assert!(line.starts_with('{') && line.ends_with('}'), "{line}");
    }

    let genesis = tokengate(&["audit", log.to_str().unwrap(), "--height", "0"]);
    assert_eq!(genesis.status.code(), Some(0), "{}", stderr(&genesis));
    let text = stdout(&genesis);
    assert!(text.contains("height 0"), "{text}");
    // only the owner holds tokens at genesis
    assert_eq!(
        text.lines().filter(|l| l.starts_with("0x")).count(),
        1,
        "{text}"
    );

    let far = tokengate(&["audit", log.to_str().unwrap(), "--height", "9999"]);
    assert_eq!(far.status.code(), Some(2));

    fs::write(&log, b"not a block log").unwrap();
    assert_eq!(
        tokengate(&["audit", log.to_str().unwrap(), "--height", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gas_schedule_override_changes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("gas.toml");
    fs::write(&sched, "tx_base = 1\n").unwrap();
    let scn = fixture("two_gateways.scn");
    let base = stdout(&tokengate(&["run", scn.to_str().unwrap()]));
    let cheap = tokengate(&[
        "run",
        scn.to_str().unwrap(),
        "--gas-schedule",
        sched.to_str().unwrap(),
    ]);
    assert_eq!(cheap.status.code(), Some(0), "{}", stderr(&cheap));
    assert_ne!(base, stdout(&cheap));

    fs::write(&sched, "tx_bass = 1\n").unwrap();
    let bad = tokengate(&[
        "run",
        scn.to_str().unwrap(),
        "--gas-schedule",
        sched.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn wallet_new_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("alice.key");
    let made = tokengate(&[
        "wallet",
        "new",
        "--out",
        key.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(made.status.code(), Some(0), "{}", stderr(&made));
    let shown = tokengate(&["wallet", "show", key.to_str().unwrap()]);
    assert_eq!(shown.status.code(), Some(0));
    assert_eq!(stdout(&made), stdout(&shown));

    // without --out the key file goes to stdout: secret, then public key
    let printed = stdout(&tokengate(&["wallet", "new", "--seed", "42"]));
    let public = stdout(&shown)
        .lines()
        .find_map(|l| l.strip_prefix("public 0x"))
        .unwrap()
        .to_owned();
    assert_eq!(printed.lines().nth(1), Some(public.as_str()), "{printed}");
    assert_eq!(fs::read_to_string(&key).unwrap(), printed);

    fs::write(&key, "garbage").unwrap();
    assert_eq!(
        tokengate(&["wallet", "show", key.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
