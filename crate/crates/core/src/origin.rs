//! Origin normalization: scheme + host + port, lowercase host, default
//! ports elided.

use url::Url;

/// Serialized origin of an http(s) URL, or `None` for other schemes.
pub fn origin_of(url: &Url) -> Option<String> {
    match url.scheme() {
        "http" | "https" => {}
        _ => return None,
    }
    let host = url.host_str()?;
    // `Url` already lowercases hosts and drops the scheme's default port.
    Some(match url.port() {
        Some(port) => format!("{}://{}:{}", url.scheme(), host, port),
        None => format!("{}://{}", url.scheme(), host),
    })
}

/// Normalizes an origin or URL string.
pub fn normalize_origin(input: &str) -> Option<String> {
    Url::parse(input.trim()).ok().as_ref().and_then(origin_of)
}

pub fn is_https_origin(origin: &str) -> bool {
    origin.starts_with("https://")
}
