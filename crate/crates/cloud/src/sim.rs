//! An in-memory provider: instances with a file store, a shell that knows
//! the provisioning script and the checker, a mailbox, a virtual clock and
//! injectable faults. Every call is appended to a log.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::Duration;

use tlawb_core::engine::{check, CheckOptions};
use tlawb_core::lang::{parse_config, parse_module, resolve};
use tlawb_core::wire::emit_report;

use crate::provider::{Credentials, ExecOutput, InstanceId, InstanceInfo, Provider, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    FindInstances { tag: String, found: Vec<InstanceId> },
    Launch { count: usize, tag: String, launched: Vec<InstanceId> },
    Upload { instance: InstanceId, path: String },
    Exec { instance: InstanceId, script: String, status: Option<i32> },
    SendMail { instance: InstanceId, address: String, delivered: bool },
    Terminate { instance: InstanceId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Faults {
    /// Instances whose shell connections fail.
    pub ssh: BTreeSet<InstanceId>,
    pub mail: bool,
    pub launch: bool,
    /// The client connection of a check drops after this many chunks.
    pub disconnect_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MailResult {
    pub address: String,
    pub subject: String,
    /// A wire-protocol stream.
    pub body: Vec<u8>,
    pub delivered: bool,
}

impl MailResult {
    /// Archive form: subject line, blank line, body.
    pub fn to_archive(&self) -> Vec<u8> {
        let mut out = format!("{}\n\n", self.subject).into_bytes();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_archive(address: &str, bytes: &[u8]) -> Option<MailResult> {
        let split = bytes.windows(2).position(|w| w == b"\n\n")?;
        Some(MailResult {
            address: address.to_string(),
            subject: String::from_utf8_lossy(&bytes[..split]).into_owned(),
            body: bytes[split + 2..].to_vec(),
            delivered: true,
        })
    }
}

struct Instance {
    tag: String,
    running: bool,
    files: BTreeMap<String, Vec<u8>>,
    last_connection: Duration,
    finished_at: Option<Duration>,
    mail_delivered: Option<bool>,
}

#[derive(Default)]
struct World {
    instances: BTreeMap<InstanceId, Instance>,
    next_id: InstanceId,
    clock: Duration,
    calls: Vec<Call>,
    mailbox: Vec<MailResult>,
    faults: Faults,
}

pub struct SimulatedProvider {
    world: Mutex<World>,
    chunk_size: usize,
    credentials: Credentials,
}

pub const PROVISION_SCRIPT: &str = "\
#!/bin/sh
set -e
. ./credentials
install-runtime tlawb
install-mail-relay
";

impl SimulatedProvider {
    /// A provider accepting `credentials` for termination.
    pub fn new(credentials: Credentials) -> Self {
        SimulatedProvider {
            world: Mutex::new(World { next_id: 1, ..Default::default() }),
            chunk_size: 256,
            credentials,
        }
    }

    pub fn with_chunk_size(mut self, size: usize) -> Self {
        self.chunk_size = size.max(1);
        self
    }

    fn world(&self) -> std::sync::MutexGuard<'_, World> {
        self.world.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_faults(&self, faults: Faults) {
        self.world().faults = faults;
    }

    pub fn faults(&self) -> Faults {
        self.world().faults.clone()
    }

    pub fn update_faults(&self, f: impl FnOnce(&mut Faults)) {
        f(&mut self.world().faults);
    }

    pub fn advance(&self, by: Duration) {
        self.world().clock += by;
    }

    pub fn calls(&self) -> Vec<Call> {
        self.world().calls.clone()
    }

    pub fn mailbox(&self) -> Vec<MailResult> {
        self.world().mailbox.clone()
    }

    pub fn file(&self, instance: InstanceId, path: &str) -> Option<Vec<u8>> {
        self.world().instances.get(&instance)?.files.get(path).cloned()
    }

    fn connect(w: &mut World, instance: InstanceId) -> Result<&mut Instance, ProviderError> {
        let clock = w.clock;
        let ssh_fault = w.faults.ssh.contains(&instance);
        let inst = w.instances.get_mut(&instance).ok_or(ProviderError::UnknownInstance(instance))?;
        if !inst.running {
            return Err(ProviderError::Terminated(instance));
        }
        if ssh_fault {
            return Err(ProviderError::Ssh(instance));
        }
        inst.last_connection = clock;
        Ok(inst)
    }

    fn run_check(args: &[&str], files: &BTreeMap<String, Vec<u8>>) -> (i32, Vec<u8>) {
        let mut opts = CheckOptions::default();
        let mut positional = Vec::new();
        let mut it = args.iter();
        while let Some(&a) = it.next() {
            match a {
                "--distributed" => opts.distributed = true,
                "--seed" => match it.next().and_then(|s| s.parse().ok()) {
                    Some(s) => opts.seed = s,
                    None => return (2, b"--seed needs a number\n".to_vec()),
                },
                "--workers" => match it.next().and_then(|s| s.parse().ok()) {
                    Some(w) => opts.workers = w,
                    None => return (2, b"--workers needs a number\n".to_vec()),
                },
                _ => positional.push(a),
            }
        }
        let [spec, cfg] = positional[..] else {
            return (2, b"usage: tlawb-check SPEC CFG [--seed N] [--workers N] [--distributed]\n".to_vec());
        };
        let read = |p: &str| files.get(p).map(|b| String::from_utf8_lossy(b).into_owned());
        let (Some(spec_text), Some(cfg_text)) = (read(spec), read(cfg)) else {
            return (3, b"spec or configuration not uploaded\n".to_vec());
        };
        let unit = match parse_module(&spec_text)
            .map_err(|e| format!("{spec}: {e}"))
            .and_then(|m| parse_config(&cfg_text).map(|c| (m, c)).map_err(|e| format!("{cfg}: {e}")))
            .and_then(|(m, c)| resolve(&m, &c).map_err(|e| e.to_string()))
        {
            Ok(u) => u,
            Err(e) => return (3, format!("{e}\n").into_bytes()),
        };
        let run = check(&unit, &opts);
        (run.report.outcome.exit_code(), emit_report(&run.report).into_bytes())
    }
}

impl Provider for SimulatedProvider {
    fn find_instances(&self, tag: &str) -> Vec<InstanceId> {
        let mut w = self.world();
        let found: Vec<InstanceId> = w.instances.iter().filter(|(_, i)| i.running && i.tag == tag).map(|(&id, _)| id).collect();
        w.calls.push(Call::FindInstances { tag: tag.to_string(), found: found.clone() });
        found
    }

    fn launch(&self, count: usize, tag: &str) -> Result<Vec<InstanceId>, ProviderError> {
        let mut w = self.world();
        if w.faults.launch {
            w.calls.push(Call::Launch { count, tag: tag.to_string(), launched: vec![] });
            return Err(ProviderError::Launch("capacity unavailable".into()));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let id = w.next_id;
            w.next_id += 1;
            let clock = w.clock;
            w.instances.insert(
                id,
                Instance {
                    tag: tag.to_string(),
                    running: true,
                    files: BTreeMap::new(),
                    last_connection: clock,
                    finished_at: None,
                    mail_delivered: None,
                },
            );
            ids.push(id);
        }
        w.calls.push(Call::Launch { count, tag: tag.to_string(), launched: ids.clone() });
        Ok(ids)
    }

    fn upload(&self, instance: InstanceId, path: &str, bytes: &[u8]) -> Result<(), ProviderError> {
        let mut w = self.world();
        w.calls.push(Call::Upload { instance, path: path.to_string() });
        let inst = Self::connect(&mut w, instance)?;
        inst.files.insert(path.to_string(), bytes.to_vec());
        Ok(())
    }

    fn exec(&self, instance: InstanceId, script: &str) -> Result<ExecOutput, ProviderError> {
        let mut w = self.world();
        let idx = w.calls.len();
        w.calls.push(Call::Exec { instance, script: script.to_string(), status: None });
        let disconnect_after = w.faults.disconnect_after;
        let clock = w.clock;
        let inst = Self::connect(&mut w, instance)?;
        let words: Vec<&str> = script.split_whitespace().collect();
        let (status, output, is_check) = match words.as_slice() {
            ["sh", "provision.sh"] => {
                if inst.files.contains_key("provision.sh") && inst.files.contains_key("credentials") {
                    (0, b"provisioned\n".to_vec(), false)
                } else {
                    (1, b"provisioning files missing\n".to_vec(), false)
                }
            }
            ["tlawb-check", args @ ..] => {
                let (s, o) = Self::run_check(args, &inst.files);
                inst.files.insert("results.wire".into(), o.clone());
                inst.finished_at = Some(clock);
                (s, o, true)
            }
            _ => (127, format!("{}: command not found\n", words.first().unwrap_or(&"")).into_bytes(), false),
        };
        let mut received: Vec<Vec<u8>> = output.chunks(self.chunk_size).map(<[u8]>::to_vec).collect();
        let mut interrupted = false;
        if let (true, Some(k)) = (is_check, disconnect_after) {
            if k < received.len() {
                received.truncate(k);
                interrupted = true;
            }
        }
        w.calls[idx] = Call::Exec { instance, script: script.to_string(), status: Some(status) };
        Ok(ExecOutput { status, output, received, interrupted })
    }

    fn send_mail(&self, instance: InstanceId, address: &str, subject: &str, body: &[u8]) -> Result<bool, ProviderError> {
        let mut w = self.world();
        let delivered = !w.faults.mail && !address.is_empty();
        let inst = w.instances.get_mut(&instance).ok_or(ProviderError::UnknownInstance(instance))?;
        if !inst.running {
            return Err(ProviderError::Terminated(instance));
        }
        inst.mail_delivered = Some(delivered);
        w.calls.push(Call::SendMail { instance, address: address.to_string(), delivered });
        if delivered {
            w.mailbox.push(MailResult { address: address.to_string(), subject: subject.to_string(), body: body.to_vec(), delivered });
        }
        Ok(delivered)
    }

    fn terminate(&self, instance: InstanceId, credentials: &Credentials) -> Result<(), ProviderError> {
        let mut w = self.world();
        w.calls.push(Call::Terminate { instance });
        if *credentials != self.credentials {
            return Err(ProviderError::BadCredentials);
        }
        let inst = w.instances.get_mut(&instance).ok_or(ProviderError::UnknownInstance(instance))?;
        inst.running = false;
        Ok(())
    }

    fn describe(&self, instance: InstanceId) -> Option<InstanceInfo> {
        let w = self.world();
        w.instances.get(&instance).map(|i| InstanceInfo {
            id: instance,
            tag: i.tag.clone(),
            running: i.running,
            last_connection: i.last_connection,
            finished_at: i.finished_at,
            mail_delivered: i.mail_delivered,
        })
    }

    fn now(&self) -> Duration {
        self.world().clock
    }
}
