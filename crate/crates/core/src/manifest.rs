//! Web app manifest fields used for scoping and installability.

use serde::Serialize;
use url::Url;

/// A parsed manifest. Only string-valued fields are read; anything else
/// counts as absent. The source document is kept in `raw`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppManifest {
    pub id: Option<String>,
    pub start_url: Option<String>,
    pub name: Option<String>,
    pub display: Option<String>,
    /// URL the manifest was served from; relative fields resolve against it.
    pub manifest_url: Option<Url>,
    #[serde(skip)]
    pub raw: serde_json::Value,
}

impl AppManifest {
    pub fn from_value(raw: serde_json::Value, manifest_url: Option<Url>) -> Option<AppManifest> {
        let obj = raw.as_object()?;
        let field = |k: &str| obj.get(k).and_then(|v| v.as_str()).map(str::to_string);
        Some(AppManifest {
            id: field("id"),
            start_url: field("start_url"),
            name: field("name"),
            display: field("display"),
            manifest_url,
            raw,
        })
    }

    /// Parses manifest JSON. Returns an error string when the text is not a
    /// JSON object.
    pub fn parse(text: &str, manifest_url: Option<Url>) -> Result<AppManifest, String> {
        let value: serde_json::Value =
            serde_json::from_str(text.trim_start_matches('\u{feff}')).map_err(|e| e.to_string())?;
        AppManifest::from_value(value, manifest_url)
            .ok_or_else(|| "manifest is not a JSON object".to_string())
    }

    /// `start_url` resolved against the manifest URL, or `base` when the
    /// manifest URL is unknown. The fragment is dropped; the query is kept.
    pub fn resolved_start_url(&self, base: &Url) -> Option<Url> {
        let raw = self.start_url.as_deref()?;
        let base = self.manifest_url.as_ref().unwrap_or(base);
        let mut url = base.join(raw).ok()?;
        url.set_fragment(None);
        Some(url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_string_fields_are_absent() {
        let m = AppManifest::parse(r#"{"name": 5, "display": "standalone"}"#, None).unwrap();
        assert_eq!(m.name, None);
        assert_eq!(m.display.as_deref(), Some("standalone"));
        assert!(AppManifest::parse("[1,2]", None).is_err());
        assert!(AppManifest::parse("{", None).is_err());
    }

    #[test]
    fn start_url_resolution_keeps_query_drops_fragment() {
        let url = Url::parse("https://o.example/m/manifest.json").unwrap();
        let m = AppManifest::parse(r#"{"start_url": "../a?x=1#top"}"#, Some(url.clone())).unwrap();
        assert_eq!(
            m.resolved_start_url(&url).unwrap().as_str(),
            "https://o.example/a?x=1"
        );
    }
}
