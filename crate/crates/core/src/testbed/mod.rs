//! Mock 2FA services with configurable risk controls, trust-cookie
//! schemes, planted flaws and notification behavior.

mod config;
mod server;
mod tls;
mod service;
mod truth;

pub use config::{
    hash_password, AccountSpec, Matrix, RememberPlacement, TargetConfig, TrustCookieSpec,
    ValueScheme, DECOY_PREFIX, MAX_DECOYS, MIN_SEED_BYTES, SESSION_COOKIE,
};
pub use tls::TlsIdentity;
pub use server::{serve_matrix, serve_target, ServeOptions, ServerHandle};
pub use service::{InProcessTransport, TestbedService, TrustDecision};
pub use truth::{ground_truth, GroundTruth};

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("TLS setup failed: {0}")]
    Tls(String),
    #[error("server failure: {0}")]
    Io(#[from] std::io::Error),
}

/// A driver-side handle that reaches `service` without sockets, under a
/// synthetic host name derived from the config id.
pub fn in_process_target(service: std::sync::Arc<TestbedService>) -> crate::flow::Target {
    let host = service
        .config()
        .id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>();
    let base = url::Url::parse(&format!("http://{host}.testbed.internal/"))
        .expect("sanitized host forms a valid url");
    crate::flow::Target::new(base, std::sync::Arc::new(InProcessTransport::new(service)))
}
