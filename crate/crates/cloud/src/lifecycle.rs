use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use tlawb_core::engine::CheckReport;
use tlawb_core::wire::{rebuild_report, report_from_stream, RebuildError, WireParser};

use crate::provider::{Credentials, InstanceId, InstanceInfo, Provider, ProviderError};
use crate::sim::{MailResult, PROVISION_SCRIPT};

pub const DEFAULT_GRACE: Duration = Duration::from_secs(600);

/// Run phases in lifecycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Deploying,
    Provisioning,
    Launching,
    Checking,
    Terminating,
    Done,
    /// The client lost the connection while checking; the instance carries on.
    Detached,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Deploying => "deploying",
            Phase::Provisioning => "provisioning",
            Phase::Launching => "launching",
            Phase::Checking => "checking",
            Phase::Terminating => "terminating",
            Phase::Done => "done",
            Phase::Detached => "detached",
        }
    }
}

/// Whether `phases` is a legal history: strictly increasing, and
/// `Detached` only as the last phase, right after `Checking`.
pub fn phases_in_order(phases: &[Phase]) -> bool {
    if phases.first() != Some(&Phase::Deploying) {
        return false;
    }
    phases.windows(2).all(|w| w[0] < w[1] && (w[1] != Phase::Detached || w[0] == Phase::Checking))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunHandle {
    pub tag: String,
    pub instances: Vec<InstanceId>,
    pub phases: Vec<Phase>,
    pub mail_address: String,
    pub grace: Duration,
}

impl RunHandle {
    pub fn new(tag: &str, mail_address: &str, grace: Duration) -> Self {
        RunHandle { tag: tag.into(), instances: Vec::new(), phases: Vec::new(), mail_address: mail_address.into(), grace }
    }

    pub fn phase(&self) -> Option<Phase> {
        self.phases.last().copied()
    }

    fn enter(&mut self, p: Phase) {
        self.phases.push(p);
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CloudError {
    #[error("instance count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provisioning failed on instance {instance}: {reason}")]
    Provision { instance: InstanceId, reason: String },
    #[error("the checker could not be started: {0}")]
    Launch(String),
    #[error("mail was not delivered")]
    Undelivered,
    #[error("importing mail: {0}")]
    Import(#[from] RebuildError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deployment {
    pub instances: Vec<InstanceId>,
    pub provisioned_already: bool,
}

/// Reuses running instances carrying `tag`, or launches `count` new ones.
pub fn deploy<P: Provider + ?Sized>(p: &P, count: usize, tag: &str) -> Result<Deployment, CloudError> {
    if count == 0 {
        return Err(CloudError::ZeroCount);
    }
    let existing = p.find_instances(tag);
    if !existing.is_empty() {
        return Ok(Deployment { instances: existing, provisioned_already: true });
    }
    Ok(Deployment { instances: p.launch(count, tag)?, provisioned_already: false })
}

/// Installs the checker on every instance. On failure all `instances` are
/// terminated.
pub fn provision<P: Provider + ?Sized>(p: &P, instances: &[InstanceId], credentials: &Credentials) -> Result<(), CloudError> {
    let attempt = |id: InstanceId| -> Result<(), CloudError> {
        let fail = |reason: String| CloudError::Provision { instance: id, reason };
        p.upload(id, "provision.sh", PROVISION_SCRIPT.as_bytes()).map_err(|e| fail(e.to_string()))?;
        p.upload(id, "credentials", credentials.to_env_file().as_bytes()).map_err(|e| fail(e.to_string()))?;
        let out = p.exec(id, "sh provision.sh").map_err(|e| fail(e.to_string()))?;
        if out.status != 0 {
            return Err(fail(String::from_utf8_lossy(&out.output).trim().to_string()));
        }
        Ok(())
    };
    for &id in instances {
        if let Err(e) = attempt(id) {
            for &other in instances {
                // best effort; the error that matters is the provisioning one
                let _ = p.terminate(other, credentials);
            }
            return Err(e);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRequest {
    pub spec: Vec<u8>,
    pub config: Vec<u8>,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchResult {
    /// Exit status of the remote checker.
    pub status: i32,
    /// Chunks streamed back before completion or disconnection.
    pub chunks: Vec<Vec<u8>>,
    pub interrupted: bool,
    /// The result mail the instance sent.
    pub mail: MailResult,
}

impl LaunchResult {
    pub fn live_stream(&self) -> Vec<u8> {
        self.chunks.concat()
    }

    /// Feeds the streamed chunks through the wire parser as they arrived.
    pub fn live_report(&self) -> Result<CheckReport, RebuildError> {
        let mut parser = WireParser::new();
        let mut msgs = Vec::new();
        for c in &self.chunks {
            msgs.extend(parser.feed(c));
        }
        let (tail, err) = parser.finish();
        msgs.extend(tail);
        let report = rebuild_report(&msgs)?;
        match err {
            Some(e) => Err(e.into()),
            None => Ok(report),
        }
    }
}

/// Uploads the model, runs the checker on the first instance and has that
/// instance mail the result. More than one instance marks the run
/// distributed.
pub fn launch_check<P: Provider + ?Sized>(
    p: &P,
    instances: &[InstanceId],
    req: &CheckRequest,
    handle: &mut RunHandle,
) -> Result<LaunchResult, CloudError> {
    let &master = instances.first().ok_or(CloudError::ZeroCount)?;
    handle.enter(Phase::Launching);
    for &id in instances {
        p.upload(id, "spec.tla", &req.spec)?;
        p.upload(id, "model.cfg", &req.config)?;
    }
    let mut script = format!("tlawb-check spec.tla model.cfg --seed {} --workers {}", req.seed, req.workers.max(1));
    if instances.len() > 1 {
        script.push_str(" --distributed");
    }
    handle.enter(Phase::Checking);
    let out = p.exec(master, &script)?;
    if out.status == 127 || out.status == 2 {
        return Err(CloudError::Launch(String::from_utf8_lossy(&out.output).trim().to_string()));
    }
    if out.interrupted {
        handle.enter(Phase::Detached);
    }
    let subject = format!("tlawb results from instance {master} (exit {})", out.status);
    let delivered = p.send_mail(master, &handle.mail_address, &subject, &out.output)?;
    let mail = MailResult { address: handle.mail_address.clone(), subject, body: out.output, delivered };
    Ok(LaunchResult { status: out.status, chunks: out.received, interrupted: out.interrupted, mail })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Wait,
    SelfTerminate,
    StayAlive,
}

/// What a finished instance does at `now`. The grace period runs from the
/// later of the check's end and the last client connection.
pub fn terminate_policy(instance: &InstanceInfo, now: Duration, mail_delivered: bool, grace: Duration) -> PolicyAction {
    let Some(finished) = instance.finished_at else {
        return PolicyAction::Wait;
    };
    let since = finished.max(instance.last_connection);
    if now < since + grace {
        PolicyAction::Wait
    } else if mail_delivered {
        PolicyAction::SelfTerminate
    } else {
        PolicyAction::StayAlive
    }
}

/// Rebuilds the report carried by a result mail.
pub fn import_mail(m: &MailResult) -> Result<CheckReport, CloudError> {
    if !m.delivered {
        return Err(CloudError::Undelivered);
    }
    Ok(report_from_stream(&m.body)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub tag: String,
    pub count: usize,
    pub mail: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub handle: RunHandle,
    pub provisioned: bool,
    pub result: Result<LaunchResult, CloudError>,
}

/// Supervises runs against one provider and applies the termination
/// policy to instances whose checks have finished.
pub struct Orchestrator<'p, P: Provider + ?Sized> {
    provider: &'p P,
    credentials: Credentials,
    grace: Duration,
    /// Finished instances awaiting the policy, mapped to the instance that
    /// ran the check and sent the mail.
    idle: Mutex<BTreeMap<InstanceId, InstanceId>>,
}

impl<'p, P: Provider + ?Sized> Orchestrator<'p, P> {
    pub fn new(provider: &'p P, credentials: Credentials, grace: Duration) -> Self {
        Orchestrator { provider, credentials, grace, idle: Mutex::new(BTreeMap::new()) }
    }

    pub fn provider(&self) -> &P {
        self.provider
    }

    fn idle(&self) -> std::sync::MutexGuard<'_, BTreeMap<InstanceId, InstanceId>> {
        self.idle.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// One full lifecycle.
    pub fn run(&self, cfg: &RunConfig, req: &CheckRequest) -> RunOutcome {
        let p = self.provider;
        let mut handle = RunHandle::new(&cfg.tag, &cfg.mail, self.grace);
        handle.enter(Phase::Deploying);
        let dep = match deploy(p, cfg.count, &cfg.tag) {
            Ok(d) => d,
            Err(e) => {
                handle.enter(Phase::Done);
                return RunOutcome { handle, provisioned: false, result: Err(e) };
            }
        };
        handle.instances = dep.instances.clone();
        {
            let mut idle = self.idle();
            for id in &dep.instances {
                idle.remove(id);
            }
        }
        let mut provisioned = false;
        if !dep.provisioned_already {
            handle.enter(Phase::Provisioning);
            if let Err(e) = provision(p, &dep.instances, &self.credentials) {
                handle.enter(Phase::Terminating);
                handle.enter(Phase::Done);
                return RunOutcome { handle, provisioned: false, result: Err(e) };
            }
            provisioned = true;
        }
        let result = launch_check(p, &dep.instances, req, &mut handle);
        {
            let mut idle = self.idle();
            for &id in &dep.instances {
                idle.insert(id, dep.instances[0]);
            }
        }
        if handle.phase() != Some(Phase::Detached) {
            handle.enter(Phase::Terminating);
            handle.enter(Phase::Done);
        }
        RunOutcome { handle, provisioned, result }
    }

    /// Applies the termination policy at the provider's current time.
    pub fn settle(&self) -> Vec<(InstanceId, PolicyAction)> {
        let p = self.provider;
        let now = p.now();
        let mut idle = self.idle();
        let mut out = Vec::new();
        let mut gone = Vec::new();
        for (&id, &master) in idle.iter() {
            let Some(info) = p.describe(id).filter(|i| i.running) else {
                gone.push(id);
                continue;
            };
            let master_info = p.describe(master);
            let delivered = master_info.as_ref().and_then(|m| m.mail_delivered) == Some(true);
            let timer = InstanceInfo { finished_at: master_info.and_then(|m| m.finished_at), ..info };
            let action = terminate_policy(&timer, now, delivered, self.grace);
            if action == PolicyAction::SelfTerminate && p.terminate(id, &self.credentials).is_ok() {
                gone.push(id);
            }
            out.push((id, action));
        }
        for id in gone {
            idle.remove(&id);
        }
        out
    }
}
