mod common;

use tokengate::contract::Function;
use tokengate::harness::scenario::ErrorKind;
use tokengate::harness::{
    gas_report, reconstruct_all, reconstruct_balances, restore_grants, run, RunConfig, Runner,
    Scenario,
};
use tokengate::network::NodeId;

use common::{fixtures, random_scenario, Workload};

fn run_text(text: &str, seed: u64) -> tokengate::harness::RunReport {
    let s = Scenario::parse(text).expect("fixture parses");
    run(
        &s,
        &RunConfig {
            seed,
            ..RunConfig::default()
        },
    )
    .expect("fixture runs")
}

#[test]
fn every_fixture_passes() {
    let all = fixtures();
    assert!(all.len() >= 10);
    for (name, text) in all {
        let report = run_text(&text, 0);
        assert!(report.passed(), "{name}\n{}", report.render());
        assert!(!report.assertions.is_empty(), "{name} asserts nothing");
    }
}

#[test]
fn fixtures_pass_under_other_seeds() {
    for (name, text) in fixtures() {
        for seed in [1, 77, u64::MAX] {
            assert!(run_text(&text, seed).passed(), "{name} seed {seed}");
        }
    }
}

#[test]
fn reports_are_reproducible() {
    for (name, text) in fixtures() {
        let a = run_text(&text, 5).render();
        let b = run_text(&text, 5).render();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn audit_matches_live_state_for_every_fixture() {
    for (name, text) in fixtures() {
        let report = run_text(&text, 0);
        let log = report.block_log.as_ref().expect("fixture initializes");
        let replayed = reconstruct_all(log).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(replayed, report.live_balances, "{name}");
    }
}

#[test]
fn audit_matches_live_state_for_random_scenarios() {
    for seed in 0..20 {
        let text = random_scenario(seed, &Workload::default());
        let report = run_text(&text, seed);
        let log = report.block_log.as_ref().unwrap();
        assert_eq!(
            reconstruct_all(log).unwrap(),
            report.live_balances,
            "seed {seed}"
        );
    }
}

#[test]
fn panic_restore_recreates_snapshot() {
    let (_, text) = fixtures()
        .into_iter()
        .find(|(n, _)| n == "panic_restore.scn")
        .unwrap();
    let report = run_text(&text, 0);
    let log = report.block_log.as_ref().unwrap();
    let owner = log.genesis.owner;

    // find the panic block: the one after which only the owner holds tokens
    let snaps = reconstruct_all(log).unwrap();
    let panic_h = snaps
        .iter()
        .position(|s| s.height > 0 && s.balances.len() == 1 && s.balances.contains_key(&owner))
        .expect("a panic height") as u64;
    let before = reconstruct_balances(log, panic_h - 1).unwrap();
    let after = reconstruct_balances(log, panic_h).unwrap();
    assert_eq!(before.balances.len(), 4);

    let grants = restore_grants(&before, &after, owner);
    let mut made: Vec<_> = log.blocks[panic_h as usize + 1]
        .txs
        .iter()
        .map(|tx| match tx.call {
            tokengate::Call::Transfer { to, amount } => (to, amount),
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    made.sort();
    assert_eq!(grants, made);

    let last = reconstruct_balances(log, log.height()).unwrap();
    assert_eq!(last.balances, before.balances);
    assert_eq!(
        report.live_balances.last().unwrap().balances,
        before.balances
    );
}

#[test]
fn undeclared_wallet_fails_at_load() {
    let err = Scenario::parse(
        "create_wallet name=owner\n\
         init_contract owner=owner supply=10 op.TurnOnLights=0x01:1\n\
         client_invoke client=ghost op=TurnOnLights uri=x\n",
    )
    .unwrap_err();
    assert_eq!(err.line, 3);
    assert!(matches!(
        err.kind,
        ErrorKind::UndefinedName { what: "wallet", .. }
    ));
}

#[test]
fn gas_table_rows() {
    let report = run_text(
        "create_wallet name=o\ncreate_wallet name=a\n\
         init_contract owner=o supply=5 op.TurnOnLights=0x01:1\n\
         client_invoke client=o op=TurnOnLights uri=x\nadvance_block\n",
        0,
    );
    let table = gas_report(&report, report.usd_per_gas);
    let row = table.row(Function::InvokeOperation).unwrap();
    assert_eq!((row.calls, row.gas), (1, 24_593));
    assert!((row.currency - 24_593.0 * 0.004e-4).abs() < 1e-12);
    assert!(table.render().contains("2019-03-20"));
}

#[test]
fn replicas_agree_in_fixtures() {
    for (name, text) in fixtures() {
        let s = Scenario::parse(&text).unwrap();
        let mut runner = Runner::new(RunConfig::default());
        for step in &s.steps {
            runner.step(step).unwrap();
        }
        let net = runner.network().unwrap();
        let producer = net.replica(NodeId::PRODUCER).unwrap();
        for node in 1..net.node_count() {
            let peer = net.replica(NodeId(node)).unwrap();
            assert_eq!(peer.height(), producer.height(), "{name}");
            for h in 0..=producer.height() {
                assert_eq!(
                    peer.state_at(h).unwrap().commitment(),
                    producer.state_at(h).unwrap().commitment(),
                    "{name} node {node} height {h}"
                );
            }
        }
    }
}
