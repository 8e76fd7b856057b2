use std::time::Duration;

use tlawb_cloud::scenario::{bundled, parse_duration, parse_scenario, run_scenario, Step, BUNDLED};
use tlawb_cloud::*;
use tlawb_core::engine::Outcome;
use tlawb_core::wire::{RebuildError, MSG_FINAL, MSG_PROGRESS};

fn model(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/../../models/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn creds() -> Credentials {
    Credentials::new("ak", "sk")
}

fn request(spec: &str, cfg: &str) -> CheckRequest {
    CheckRequest { spec: model(spec), config: model(cfg), seed: 0, workers: 1 }
}

fn simple() -> CheckRequest {
    request("Simple.spec", "Simple.cfg")
}

fn config(count: usize) -> RunConfig {
    RunConfig { tag: "t".into(), count, mail: "me@example.org".into() }
}

fn launches(calls: &[Call]) -> usize {
    calls.iter().filter(|c| matches!(c, Call::Launch { launched, .. } if !launched.is_empty())).count()
}

fn provisions(calls: &[Call]) -> usize {
    calls.iter().filter(|c| matches!(c, Call::Exec { script, .. } if script == "sh provision.sh")).count()
}

/// Terminate is never called on an instance whose mail failed.
fn assert_safe(calls: &[Call]) {
    let mut failed = std::collections::HashSet::new();
    for c in calls {
        match c {
            Call::SendMail { instance, delivered: false, .. } => {
                failed.insert(*instance);
            }
            Call::SendMail { instance, delivered: true, .. } => {
                failed.remove(instance);
            }
            Call::Terminate { instance } => assert!(!failed.contains(instance), "terminated {instance} after failed mail"),
            _ => {}
        }
    }
}

#[test]
fn deploy_launches_or_reuses() {
    let sim = SimulatedProvider::new(creds());
    let d = deploy(&sim, 1, "t").unwrap();
    assert_eq!((d.instances.len(), d.provisioned_already), (1, false));
    let again = deploy(&sim, 1, "t").unwrap();
    assert_eq!(again, Deployment { instances: d.instances.clone(), provisioned_already: true });
    let three = deploy(&sim, 3, "other").unwrap();
    assert_eq!(three.instances.len(), 3);
    assert_eq!(launches(&sim.calls()), 2);
    assert_eq!(deploy(&sim, 0, "x"), Err(CloudError::ZeroCount));
}

#[test]
fn provisioning_uploads_script_and_credentials() {
    let sim = SimulatedProvider::new(creds());
    let d = deploy(&sim, 1, "t").unwrap();
    provision(&sim, &d.instances, &creds()).unwrap();
    let id = d.instances[0];
    assert_eq!(sim.file(id, "provision.sh").unwrap(), PROVISION_SCRIPT.as_bytes());
    assert_eq!(sim.file(id, "credentials").unwrap(), creds().to_env_file().into_bytes());
    assert!(String::from_utf8(sim.file(id, "credentials").unwrap()).unwrap().contains(ACCESS_KEY_VAR));
}

#[test]
fn ssh_fault_aborts_and_terminates_everything() {
    let sim = SimulatedProvider::new(creds());
    sim.update_faults(|f| {
        f.ssh.insert(2);
    });
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let r = orch.run(&config(3), &simple());
    assert!(matches!(r.result, Err(CloudError::Provision { instance: 2, .. })));
    let terminated: Vec<_> = sim.calls().iter().filter_map(|c| if let Call::Terminate { instance } = c { Some(*instance) } else { None }).collect();
    assert_eq!(terminated, vec![1, 2, 3]);
    assert!((1..=3).all(|i| !sim.describe(i).unwrap().running));
    assert!(phases_in_order(&r.handle.phases));
}

#[test]
fn simple_run_streams_progress_and_mails_the_report() {
    let sim = SimulatedProvider::new(creds()).with_chunk_size(97);
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let r = orch.run(&config(1), &simple());
    let res = r.result.unwrap();
    assert_eq!(res.status, 0);
    let live = res.live_report().unwrap();
    assert_eq!(live.outcome, Outcome::Ok);
    let (msgs, _) = tlawb_core::wire::parse_stream(&res.live_stream());
    assert!(msgs.iter().any(|m| m.code == MSG_PROGRESS));
    assert_eq!(msgs.last().unwrap().code, MSG_FINAL);
    assert!(res.chunks.len() > 1);
    let mailed = import_mail(&sim.mailbox()[0]).unwrap();
    assert_eq!(mailed, live);
    assert!(!live.distributed);
    assert_eq!(r.handle.phases, [Phase::Deploying, Phase::Provisioning, Phase::Launching, Phase::Checking, Phase::Terminating, Phase::Done]);
}

#[test]
fn multi_instance_runs_are_marked_distributed() {
    let sim = SimulatedProvider::new(creds());
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let res = orch.run(&config(2), &simple()).result.unwrap();
    assert!(res.live_report().unwrap().distributed);
}

#[test]
fn violation_travels_with_its_trace() {
    let sim = SimulatedProvider::new(creds());
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let res = orch.run(&config(1), &request("SimpleBad.spec", "SimpleBad.cfg")).result.unwrap();
    assert_eq!(res.status, 1);
    let rep = res.live_report().unwrap();
    assert_eq!(rep.trace.as_ref().unwrap().len(), 5);
    assert_eq!(import_mail(&res.mail).unwrap(), rep);
}

#[test]
fn disconnect_detaches_but_mail_arrives() {
    let sim = SimulatedProvider::new(creds()).with_chunk_size(64);
    sim.update_faults(|f| f.disconnect_after = Some(2));
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let r = orch.run(&config(1), &simple());
    assert_eq!(r.handle.phase(), Some(Phase::Detached));
    assert!(phases_in_order(&r.handle.phases));
    let res = r.result.unwrap();
    assert!(res.interrupted);
    assert!(res.live_report().is_err());
    assert_eq!(import_mail(&res.mail).unwrap().outcome, Outcome::Ok);
}

#[test]
fn policy_decisions() {
    let info = InstanceInfo {
        id: 1,
        tag: "t".into(),
        running: true,
        last_connection: Duration::from_secs(0),
        finished_at: Some(Duration::from_secs(10)),
        mail_delivered: Some(true),
    };
    let g = DEFAULT_GRACE;
    assert_eq!(terminate_policy(&info, Duration::from_secs(100), true, g), PolicyAction::Wait);
    assert_eq!(terminate_policy(&info, Duration::from_secs(610), true, g), PolicyAction::SelfTerminate);
    assert_eq!(terminate_policy(&info, Duration::from_secs(10_000), false, g), PolicyAction::StayAlive);
    let reconnected = InstanceInfo { last_connection: Duration::from_secs(500), ..info.clone() };
    assert_eq!(terminate_policy(&reconnected, Duration::from_secs(700), true, g), PolicyAction::Wait);
    let running = InstanceInfo { finished_at: None, ..info };
    assert_eq!(terminate_policy(&running, Duration::from_secs(10_000), true, g), PolicyAction::Wait);
}

#[test]
fn import_errors() {
    let empty = MailResult { address: "a".into(), subject: "s".into(), body: vec![], delivered: true };
    assert!(matches!(import_mail(&empty), Err(CloudError::Import(RebuildError::Empty))));
    let progress_only = b"@!@!@STARTMSG 2200 @!@!@\ndiameter: 2\ntotal: 5\ndistinct: 4\nunexplored: 1\n@!@!@ENDMSG 2200 @!@!@\n";
    let partial = MailResult { body: progress_only.to_vec(), ..empty.clone() };
    match import_mail(&partial) {
        Err(CloudError::Import(RebuildError::Partial { statistics, .. })) => assert_eq!(statistics.distinct_states, 4),
        other => panic!("{other:?}"),
    }
    let undelivered = MailResult { delivered: false, ..empty };
    assert_eq!(import_mail(&undelivered).unwrap_err(), CloudError::Undelivered);
}

#[test]
fn mail_archive_round_trip() {
    let m = MailResult { address: "a@b".into(), subject: "results".into(), body: b"x\n\ny".to_vec(), delivered: true };
    assert_eq!(MailResult::from_archive("a@b", &m.to_archive()), Some(m));
}

#[test]
fn scenario_parsing() {
    assert_eq!(parse_duration("700s"), Some(Duration::from_secs(700)));
    assert_eq!(parse_duration("10m"), Some(Duration::from_secs(600)));
    assert_eq!(parse_duration("3"), Some(Duration::from_secs(3)));
    assert_eq!(parse_duration("3d"), None);
    let steps = parse_scenario("fail ssh instance 2\nfail mail # comment\nadvance clock 700s\n").unwrap();
    assert_eq!(steps, [Step::FailSsh(2), Step::FailMail, Step::Run, Step::Advance(Duration::from_secs(700))]);
    let e = parse_scenario("run\nexplode\n").unwrap_err();
    assert_eq!(e.line, 2);
}

fn play(name: &str) -> (SimulatedProvider, tlawb_cloud::scenario::ScenarioRun) {
    let sim = SimulatedProvider::new(creds()).with_chunk_size(128);
    let run = {
        let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
        run_scenario(&sim, &orch, &config(1), &simple(), &parse_scenario(bundled(name).unwrap()).unwrap())
    };
    (sim, run)
}

#[test]
fn bundled_scenarios_keep_order_and_safety() {
    assert_eq!(BUNDLED.len(), 6);
    for (name, _) in BUNDLED {
        let (sim, run) = play(name);
        assert!(!run.runs.is_empty());
        for r in &run.runs {
            assert!(phases_in_order(&r.handle.phases), "{name}: {:?}", r.handle.phases);
        }
        assert_safe(&sim.calls());
    }
}

#[test]
fn reuse_launches_and_provisions_once() {
    let (sim, run) = play("reuse");
    let calls = sim.calls();
    assert_eq!((launches(&calls), provisions(&calls)), (1, 1));
    assert!(run.runs[0].provisioned && !run.runs[1].provisioned);
    assert!(!run.runs[1].handle.phases.contains(&Phase::Provisioning));
    // the second run reset the grace timer, then the instance went away
    assert_eq!(run.settlements[0], vec![(1, PolicyAction::Wait)]);
    assert_eq!(run.settlements[1], vec![(1, PolicyAction::SelfTerminate)]);
}

#[test]
fn mail_failure_keeps_the_instance_alive() {
    let (sim, run) = play("mail-failure");
    assert!(sim.calls().iter().all(|c| !matches!(c, Call::Terminate { .. })));
    assert!(sim.describe(1).unwrap().running);
    assert!(run.settlements.iter().all(|s| s == &vec![(1, PolicyAction::StayAlive)]));
    assert!(sim.mailbox().is_empty());
}

#[test]
fn happy_and_disconnect_terminate_after_grace() {
    for name in ["happy", "disconnect"] {
        let (sim, run) = play(name);
        assert_eq!(run.settlements[0], vec![(1, PolicyAction::SelfTerminate)], "{name}");
        assert!(!sim.describe(1).unwrap().running);
        assert_eq!(sim.mailbox().len(), 1);
    }
}

#[test]
fn launch_failure_has_nothing_to_terminate() {
    let (sim, run) = play("launch-failure");
    assert!(matches!(run.runs[0].result, Err(CloudError::Provider(ProviderError::Launch(_)))));
    assert_eq!(run.runs[0].handle.phases, [Phase::Deploying, Phase::Done]);
    assert!(sim.calls().iter().all(|c| !matches!(c, Call::Terminate { .. })));
}

#[test]
fn concurrent_runs_with_distinct_tags() {
    let sim = SimulatedProvider::new(creds());
    let orch = Orchestrator::new(&sim, creds(), DEFAULT_GRACE);
    let reports: Vec<_> = std::thread::scope(|s| {
        let hs: Vec<_> = ["a", "b", "c"]
            .into_iter()
            .map(|tag| {
                let orch = &orch;
                s.spawn(move || {
                    let cfg = RunConfig { tag: tag.into(), count: 1, mail: "m".into() };
                    orch.run(&cfg, &simple()).result.unwrap().live_report().unwrap()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(reports.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(launches(&sim.calls()), 3);
}

#[test]
fn headless_exit_codes() {
    let dir = format!("{}/../../models", env!("CARGO_MANIFEST_DIR"));
    let opts = |spec: &str, cfg: &str| HeadlessOptions::new(format!("{dir}/{spec}"), format!("{dir}/{cfg}"));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(headless_run(&opts("Simple.spec", "Simple.cfg"), &mut out, &mut err), EXIT_OK);

    let mut out = Vec::new();
    assert_eq!(headless_run(&opts("SimpleBad.spec", "SimpleBad.cfg"), &mut out, &mut err), EXIT_VIOLATION);
    assert!(String::from_utf8(out).unwrap().contains("@!@!@STARTMSG 2217:4 @!@!@"));

    let unknown = HeadlessOptions { provider: "nimbus".into(), ..opts("Simple.spec", "Simple.cfg") };
    assert_eq!(headless_run(&unknown, &mut Vec::new(), &mut err), EXIT_USAGE);
    assert_eq!(headless_run(&opts("Simple.spec", "Nope.cfg"), &mut Vec::new(), &mut err), EXIT_USAGE);
    assert_eq!(headless_run(&opts("Simple.spec", "DieHard.cfg"), &mut Vec::new(), &mut err), EXIT_SPEC);

    let detached = HeadlessOptions { scenario: Some("disconnect after chunk 1\n".into()), ..opts("Simple.spec", "Simple.cfg") };
    assert_eq!(headless_run(&detached, &mut Vec::new(), &mut err), EXIT_OK);
    let failing = HeadlessOptions { scenario: Some("fail launch\n".into()), ..opts("Simple.spec", "Simple.cfg") };
    assert_eq!(headless_run(&failing, &mut Vec::new(), &mut err), EXIT_INTERNAL);
}
