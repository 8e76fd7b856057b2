use std::time::Duration;

pub type InstanceId = u32;

pub const ACCESS_KEY_VAR: &str = "TLAWB_CLOUD_ACCESS_KEY";
pub const SECRET_KEY_VAR: &str = "TLAWB_CLOUD_SECRET_KEY";

#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    pub access_key: String,
    pub secret_key: String,
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials").field("access_key", &self.access_key).field("secret_key", &"***").finish()
    }
}

impl Credentials {
    pub fn new(access_key: impl Into<String>, secret_key: impl Into<String>) -> Self {
        Credentials { access_key: access_key.into(), secret_key: secret_key.into() }
    }

    /// Reads [`ACCESS_KEY_VAR`] and [`SECRET_KEY_VAR`].
    pub fn from_env() -> Result<Self, ProviderError> {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty()).ok_or_else(|| ProviderError::MissingCredential(k.to_string()));
        Ok(Credentials { access_key: get(ACCESS_KEY_VAR)?, secret_key: get(SECRET_KEY_VAR)? })
    }

    /// The credentials file copied to instances during provisioning.
    pub fn to_env_file(&self) -> String {
        format!("{ACCESS_KEY_VAR}={}\n{SECRET_KEY_VAR}={}\n", self.access_key, self.secret_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("credentials rejected")]
    BadCredentials,
    #[error("launching instances failed: {0}")]
    Launch(String),
    #[error("no such instance {0}")]
    UnknownInstance(InstanceId),
    #[error("instance {0} is terminated")]
    Terminated(InstanceId),
    #[error("shell connection to instance {0} failed")]
    Ssh(InstanceId),
}

/// What a finished `exec` produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutput {
    pub status: i32,
    /// Everything the command wrote, as kept on the instance.
    pub output: Vec<u8>,
    /// The chunks that reached the caller before the connection closed.
    pub received: Vec<Vec<u8>>,
    /// The connection dropped before the command finished.
    pub interrupted: bool,
}

/// Provider-side view of one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceInfo {
    pub id: InstanceId,
    pub tag: String,
    pub running: bool,
    /// Virtual time of the last connection from a client.
    pub last_connection: Duration,
    /// When the last check on the instance finished.
    pub finished_at: Option<Duration>,
    /// Set by the provider when the instance attempts to mail results.
    pub mail_delivered: Option<bool>,
}

/// The capability surface a cloud back end offers.
pub trait Provider: Send + Sync {
    fn find_instances(&self, tag: &str) -> Vec<InstanceId>;
    fn launch(&self, count: usize, tag: &str) -> Result<Vec<InstanceId>, ProviderError>;
    fn upload(&self, instance: InstanceId, path: &str, bytes: &[u8]) -> Result<(), ProviderError>;
    fn exec(&self, instance: InstanceId, script: &str) -> Result<ExecOutput, ProviderError>;
    /// Sent from `instance`; returns whether delivery succeeded.
    fn send_mail(&self, instance: InstanceId, address: &str, subject: &str, body: &[u8]) -> Result<bool, ProviderError>;
    fn terminate(&self, instance: InstanceId, credentials: &Credentials) -> Result<(), ProviderError>;
    fn describe(&self, instance: InstanceId) -> Option<InstanceInfo>;
    fn now(&self) -> Duration;
}
