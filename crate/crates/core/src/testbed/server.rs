use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;
use tokio::sync::watch;
use url::Url;

use super::config::{Matrix, TargetConfig};
use super::service::TestbedService;
use super::tls::{TlsIdentity, TlsListener};
use super::TestbedError;
use crate::http::{HttpRequest, Method};
use crate::time::{Clock, SystemClock};

const MAX_BODY: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: IpAddr,
    pub expose_truth: bool,
    pub clock: Arc<dyn Clock>,
    /// Serve HTTPS with this identity instead of plain HTTP.
    pub tls: Option<TlsIdentity>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            expose_truth: false,
            clock: Arc::new(SystemClock),
            tls: None,
        }
    }
}

/// Running services. Dropping the handle stops them.
#[derive(Debug)]
pub struct ServerHandle {
    endpoints: Vec<(Arc<TestbedService>, SocketAddr)>,
    scheme: &'static str,
    shutdown: watch::Sender<bool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn endpoints(&self) -> impl Iterator<Item = (&str, SocketAddr)> {
        self.endpoints
            .iter()
            .map(|(svc, addr)| (svc.config().id.as_str(), *addr))
    }

    pub fn service(&self, id: &str) -> Option<&Arc<TestbedService>> {
        self.endpoints
            .iter()
            .find(|(svc, _)| svc.config().id == id)
            .map(|(svc, _)| svc)
    }

    /// `http` or `https`.
    pub fn scheme(&self) -> &'static str {
        self.scheme
    }

    pub fn base_url(&self, id: &str) -> Option<Url> {
        self.endpoints
            .iter()
            .find(|(svc, _)| svc.config().id == id)
            .map(|(_, addr)| Url::parse(&format!("{}://{addr}/", self.scheme)).expect("socket address url"))
    }

    /// Blocks until the servers exit.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        let _ = self.shutdown.send(true);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

async fn dispatch(State(svc): State<Arc<TestbedService>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let method = match parts.method {
        axum::http::Method::GET => Method::Get,
        axum::http::Method::POST => Method::Post,
        _ => return status_only(StatusCode::METHOD_NOT_ALLOWED),
    };
    let Ok(bytes) = axum::body::to_bytes(body, MAX_BODY).await else {
        return status_only(StatusCode::PAYLOAD_TOO_LARGE);
    };
    let host = parts
        .headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .unwrap_or("localhost");
    let target = parts
        .uri
        .path_and_query()
        .map(|p| p.as_str())
        .unwrap_or("/");
    let Ok(url) = Url::parse(&format!("http://{host}{target}")) else {
        return status_only(StatusCode::BAD_REQUEST);
    };
    let headers = parts
        .headers
        .iter()
        .filter_map(|(k, v)| Some((k.as_str().to_string(), v.to_str().ok()?.to_string())))
        .collect();
    let resp = svc.handle(&HttpRequest {
        method,
        url,
        headers,
        body: bytes.to_vec(),
    });

    let mut out = Response::new(Body::from(resp.body));
    *out.status_mut() = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    for (k, v) in resp.headers {
        if let (Ok(name), Ok(value)) = (
            header::HeaderName::from_bytes(k.as_bytes()),
            HeaderValue::from_str(&v),
        ) {
            out.headers_mut().append(name, value);
        }
    }
    out
}

fn status_only(status: StatusCode) -> Response {
    let mut r = Response::new(Body::empty());
    *r.status_mut() = status;
    r
}

fn bind(host: IpAddr, port: u16) -> Result<TcpListener, TestbedError> {
    let listener = TcpListener::bind(SocketAddr::new(host, port)).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            TestbedError::PortInUse(port)
        } else {
            TestbedError::Io(e)
        }
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

fn serve_all(
    configs: Vec<(TargetConfig, u16)>,
    opts: &ServeOptions,
) -> Result<ServerHandle, TestbedError> {
    let mut bound = Vec::new();
    for (config, port) in configs {
        let svc = Arc::new(TestbedService::new(
            config,
            opts.clock.clone(),
            opts.expose_truth,
        )?);
        let listener = bind(opts.host, port)?;
        bound.push((svc, listener));
    }
    let endpoints = bound
        .iter()
        .map(|(svc, l)| Ok((svc.clone(), l.local_addr()?)))
        .collect::<Result<Vec<_>, std::io::Error>>()?;

    let acceptor = opts.tls.as_ref().map(TlsIdentity::acceptor).transpose()?;
    let scheme = if acceptor.is_some() { "https" } else { "http" };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (tx, rx) = watch::channel(false);
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let mut tasks = Vec::new();
            for (svc, std_listener) in bound {
                let listener = match tokio::net::TcpListener::from_std(std_listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!(error = %e, "listener conversion failed");
                        continue;
                    }
                };
                let app = Router::new().fallback(dispatch).with_state(svc);
                let mut rx = rx.clone();
                let acceptor = acceptor.clone();
                tasks.push(tokio::spawn(async move {
                    let stop = async move {
                        while !*rx.borrow() {
                            if rx.changed().await.is_err() {
                                break;
                            }
                        }
                    };
                    let result = match acceptor {
                        Some(acceptor) => {
                            let listener = TlsListener { inner: listener, acceptor };
                            axum::serve(listener, app).with_graceful_shutdown(stop).await
                        }
                        None => axum::serve(listener, app).with_graceful_shutdown(stop).await,
                    };
                    if let Err(e) = result {
                        tracing::error!(error = %e, "server exited");
                    }
                }));
            }
            for t in tasks {
                let _ = t.await;
            }
        });
    });
    Ok(ServerHandle {
        endpoints,
        scheme,
        shutdown: tx,
        thread: Some(thread),
    })
}

/// Serves one target. Port 0 picks a free port.
pub fn serve_target(
    config: TargetConfig,
    port: u16,
    opts: &ServeOptions,
) -> Result<ServerHandle, TestbedError> {
    serve_all(vec![(config, port)], opts)
}

/// Serves every target of `matrix` on consecutive ports from `base_port`.
/// A base port of 0 gives each target its own ephemeral port.
pub fn serve_matrix(
    matrix: &Matrix,
    base_port: u16,
    opts: &ServeOptions,
) -> Result<ServerHandle, TestbedError> {
    matrix.validate()?;
    let mut configs = Vec::new();
    for (i, t) in matrix.targets.iter().enumerate() {
        let port = if base_port == 0 {
            0
        } else {
            u16::try_from(base_port as usize + i)
                .map_err(|_| TestbedError::InvalidConfig("port range overflows".into()))?
        };
        configs.push((t.clone(), port));
    }
    serve_all(configs, opts)
}
