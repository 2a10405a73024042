//! External-data clients: census attributes, flood layers, county AQI.
//!
//! Offline-first: every fetcher runs against a [`Transport`] so tests use
//! recorded transcripts, and a fixture directory can bypass the network
//! entirely. Live fetch is a convenience, never a test dependency.

mod census;
mod flood;
mod http;

pub use census::fetch_acs;
pub use flood::{fetch_flood_layer, is_sfha_zone};
pub use http::UreqTransport;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("HTTP {status} from {url}: {body}")]
    HttpError { status: u16, url: String, body: String },
    #[error("quota exceeded (HTTP 429) from {url}")]
    QuotaExceeded { url: String },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("schema drift: expected columns {expected:?}, response carried {got:?}")]
    SchemaDrift { expected: Vec<String>, got: Vec<String> },
    #[error("pagination incomplete: saw {got} features, server advertised more")]
    PaginationIncomplete { got: usize },
    #[error("missing fixture {name:?} in {dir}")]
    MissingFixture { name: String, dir: String },
    #[error("malformed response from {url}: {message}")]
    MalformedResponse { url: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> AcquireError {
    AcquireError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    CensusAcs,
    FloodLayerRest,
    CountyAqi,
}

/// Retry only transport errors and 5xx responses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    #[serde(with = "duration_millis")]
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

mod duration_millis {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// One fetch task: source, query parameters, output path, retry policy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FetchJob {
    pub source: SourceKind,
    pub query: QueryParams,
    pub output: PathBuf,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct QueryParams {
    /// Endpoint base URL.
    #[serde(default)]
    pub base_url: String,
    /// ACS variable codes (non-empty for the census source).
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub state: String,
    #[serde(default)]
    pub county: String,
    #[serde(default)]
    pub year: u16,
    /// Geographic bbox `(xmin, ymin, xmax, ymax)` for the flood layer.
    #[serde(default)]
    pub bbox: Option<(f64, f64, f64, f64)>,
    /// Flood-layer page size.
    #[serde(default = "default_page_size")]
    pub page_size: usize,
}

fn default_page_size() -> usize {
    1000
}

/// Response as seen by the fetchers.
#[derive(Clone, Debug)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal GET transport; implemented by the live client and by scripted
/// test doubles.
pub trait Transport {
    fn get(&self, url: &str) -> Result<HttpResponse, String>;
}

/// GET with the job's retry policy: transport errors and 5xx retry with
/// exponential backoff (x2 per attempt), everything else returns at once.
pub fn get_with_retry(
    transport: &dyn Transport,
    url: &str,
    policy: &RetryPolicy,
) -> Result<HttpResponse, AcquireError> {
    let mut backoff = policy.initial_backoff;
    let mut last_message = String::new();
    for attempt in 1..=policy.max_attempts.max(1) {
        match transport.get(url) {
            Ok(resp) if resp.status >= 500 => {
                last_message = format!("HTTP {}", resp.status);
            }
            Ok(resp) => return Ok(resp),
            Err(message) => last_message = message,
        }
        if attempt < policy.max_attempts {
            std::thread::sleep(backoff);
            backoff *= 2;
        }
    }
    Err(AcquireError::Transport { attempts: policy.max_attempts, message: last_message })
}

pub(crate) fn classify_status(resp: HttpResponse, url: &str) -> Result<String, AcquireError> {
    match resp.status {
        200..=299 => Ok(resp.body),
        429 => Err(AcquireError::QuotaExceeded { url: url.to_string() }),
        status => Err(AcquireError::HttpError {
            status,
            url: url.to_string(),
            body: resp.body.chars().take(300).collect(),
        }),
    }
}

/// Expected fixture filenames, one per source.
pub fn fixture_name(source: SourceKind) -> &'static str {
    match source {
        SourceKind::CensusAcs => "acs.csv",
        SourceKind::FloodLayerRest => "flood.geojson",
        SourceKind::CountyAqi => "aqi.csv",
    }
}

/// Byte-identical pass-through from a fixture directory to the job output.
pub fn load_fixture(dir: &Path, job: &FetchJob) -> Result<(), AcquireError> {
    let name = fixture_name(job.source);
    let src = dir.join(name);
    if !src.exists() {
        return Err(AcquireError::MissingFixture {
            name: name.to_string(),
            dir: dir.display().to_string(),
        });
    }
    let bytes = std::fs::read(&src).map_err(|e| io_err(&src, e))?;
    if let Some(parent) = job.output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(&job.output, bytes).map_err(|e| io_err(&job.output, e))?;
    Ok(())
}

/// Fetch county AQI: the endpoint returns a small CSV which is validated
/// (header plus at least one data row) and written through unchanged.
pub fn fetch_aqi(transport: &dyn Transport, job: &FetchJob) -> Result<(), AcquireError> {
    let url = &job.query.base_url;
    let resp = get_with_retry(transport, url, &job.retry)?;
    let body = classify_status(resp, url)?;
    if body.lines().filter(|l| !l.trim().is_empty()).count() < 2 {
        return Err(AcquireError::MalformedResponse {
            url: url.clone(),
            message: "AQI endpoint returned no data rows".to_string(),
        });
    }
    if let Some(parent) = job.output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(&job.output, body).map_err(|e| io_err(&job.output, e))?;
    Ok(())
}

/// Run one job against the network transport, or from fixtures when a
/// fixture directory is given.
pub fn run_job(
    transport: &dyn Transport,
    job: &FetchJob,
    offline_fixtures: Option<&Path>,
) -> Result<(), AcquireError> {
    if let Some(dir) = offline_fixtures {
        return load_fixture(dir, job);
    }
    match job.source {
        SourceKind::CensusAcs => fetch_acs(transport, job),
        SourceKind::FloodLayerRest => fetch_flood_layer(transport, job),
        SourceKind::CountyAqi => fetch_aqi(transport, job),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::{HttpResponse, Transport};
    use std::cell::RefCell;

    /// Scripted transport: pops canned responses in order, recording URLs.
    pub struct Scripted {
        pub responses: RefCell<Vec<Result<HttpResponse, String>>>,
        pub urls: RefCell<Vec<String>>,
    }

    impl Scripted {
        pub fn new(responses: Vec<Result<HttpResponse, String>>) -> Self {
            Scripted { responses: RefCell::new(responses), urls: RefCell::new(Vec::new()) }
        }

        pub fn ok(body: &str) -> Result<HttpResponse, String> {
            Ok(HttpResponse { status: 200, body: body.to_string() })
        }

        pub fn status(code: u16, body: &str) -> Result<HttpResponse, String> {
            Ok(HttpResponse { status: code, body: body.to_string() })
        }
    }

    impl Transport for Scripted {
        fn get(&self, url: &str) -> Result<HttpResponse, String> {
            self.urls.borrow_mut().push(url.to_string());
            let mut r = self.responses.borrow_mut();
            if r.is_empty() {
                return Err("scripted transport exhausted".to_string());
            }
            r.remove(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::Scripted;
    use super::*;

    fn fast_retry() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, initial_backoff: Duration::from_millis(1) }
    }

    #[test]
    fn retries_transport_errors_then_succeeds() {
        let t = Scripted::new(vec![
            Err("connection reset".to_string()),
            Scripted::status(503, "busy"),
            Scripted::ok("fine"),
        ]);
        let resp = get_with_retry(&t, "http://x", &fast_retry()).unwrap();
        assert_eq!(resp.body, "fine");
        assert_eq!(t.urls.borrow().len(), 3);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let t = Scripted::new(vec![
            Err("down".to_string()),
            Err("down".to_string()),
            Err("down".to_string()),
        ]);
        let err = get_with_retry(&t, "http://x", &fast_retry()).unwrap_err();
        assert!(matches!(err, AcquireError::Transport { attempts: 3, .. }));
    }

    #[test]
    fn client_errors_do_not_retry() {
        let t = Scripted::new(vec![Scripted::status(404, "nope"), Scripted::ok("never")]);
        let resp = get_with_retry(&t, "http://x", &fast_retry()).unwrap();
        assert_eq!(resp.status, 404);
        assert_eq!(t.urls.borrow().len(), 1);
        assert!(matches!(
            classify_status(resp, "http://x"),
            Err(AcquireError::HttpError { status: 404, .. })
        ));
    }

    #[test]
    fn quota_exceeded_is_classified() {
        let resp = HttpResponse { status: 429, body: String::new() };
        assert!(matches!(
            classify_status(resp, "http://x"),
            Err(AcquireError::QuotaExceeded { .. })
        ));
    }

    #[test]
    fn fixture_roundtrip_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("acs.csv"), "GEOID,x\n37081010600,1\n").unwrap();
        let job = FetchJob {
            source: SourceKind::CensusAcs,
            query: QueryParams::default(),
            output: out.path().join("acs.csv"),
            retry: RetryPolicy::default(),
        };
        load_fixture(dir.path(), &job).unwrap();
        assert_eq!(
            std::fs::read(out.path().join("acs.csv")).unwrap(),
            b"GEOID,x\n37081010600,1\n"
        );
        let aqi_job = FetchJob { source: SourceKind::CountyAqi, output: out.path().join("aqi.csv"), ..job };
        match load_fixture(dir.path(), &aqi_job) {
            Err(AcquireError::MissingFixture { name, .. }) => assert_eq!(name, "aqi.csv"),
            other => panic!("expected MissingFixture, got {other:?}"),
        }
    }

    #[test]
    fn aqi_passthrough_validates_rows() {
        let dir = tempfile::tempdir().unwrap();
        let job = FetchJob {
            source: SourceKind::CountyAqi,
            query: QueryParams { base_url: "http://aqi".to_string(), ..Default::default() },
            output: dir.path().join("aqi.csv"),
            retry: fast_retry(),
        };
        let t = Scripted::new(vec![Scripted::ok("county,aqi\n37081,78\n")]);
        fetch_aqi(&t, &job).unwrap();
        assert_eq!(std::fs::read_to_string(&job.output).unwrap(), "county,aqi\n37081,78\n");

        let t2 = Scripted::new(vec![Scripted::ok("county,aqi\n")]);
        assert!(matches!(
            fetch_aqi(&t2, &job),
            Err(AcquireError::MalformedResponse { .. })
        ));
    }
}
