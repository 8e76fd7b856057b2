//! Cloud runs: deploy tagged instances, provision them, launch the checker,
//! stream results back, mail them and terminate once it is safe.
//!
//! Back ends implement [`Provider`]. [`SimulatedProvider`] is an in-memory
//! back end with a virtual clock and fault injection.

mod headless;
mod lifecycle;
mod provider;
pub mod scenario;
mod sim;

pub use headless::{headless_run, HeadlessOptions, EXIT_INTERNAL, EXIT_OK, EXIT_SPEC, EXIT_USAGE, EXIT_VIOLATION, PROVIDERS};
pub use lifecycle::{
    deploy, import_mail, launch_check, phases_in_order, provision, terminate_policy, CheckRequest, CloudError, Deployment,
    LaunchResult, Orchestrator, Phase, PolicyAction, RunConfig, RunHandle, RunOutcome, DEFAULT_GRACE,
};
pub use provider::{Credentials, ExecOutput, InstanceId, InstanceInfo, Provider, ProviderError, ACCESS_KEY_VAR, SECRET_KEY_VAR};
pub use sim::{Call, Faults, MailResult, SimulatedProvider, PROVISION_SCRIPT};
