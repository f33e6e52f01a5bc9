//! Regex-based extraction of the manifest link and script tags. No DOM is
//! built; markup inside HTML comments is skipped.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use url::Url;

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static SCRIPT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<script\b([^>]*)>(.*?)</script\s*>").unwrap());
static LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<link\b([^>]*)>").unwrap());
static ATTR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"([^\s"'<>/=]+)(?:\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'=<>`]+)))?"#).unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptRef {
    Inline { position: usize, body: String },
    External(Url),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HtmlRefs {
    pub manifest: Option<Url>,
    /// Document order.
    pub scripts: Vec<ScriptRef>,
}

pub fn extract(html: &str, base: &Url) -> HtmlRefs {
    let comments: Vec<Range<usize>> = COMMENT.find_iter(html).map(|m| m.range()).collect();
    let in_comment = |pos: usize| comments.iter().any(|r| r.contains(&pos));

    let manifest = LINK
        .captures_iter(html)
        .filter(|c| !in_comment(c.get(0).unwrap().start()))
        .find_map(|c| {
            let attrs = parse_attrs(&c[1]);
            let is_manifest = attr(&attrs, "rel").is_some_and(|rel| {
                rel.split_ascii_whitespace()
                    .any(|t| t.eq_ignore_ascii_case("manifest"))
            });
            if !is_manifest {
                return None;
            }
            attr(&attrs, "href").and_then(|href| base.join(href.trim()).ok())
        });

    let mut scripts = Vec::new();
    for c in SCRIPT.captures_iter(html) {
        let whole = c.get(0).unwrap();
        if in_comment(whole.start()) {
            continue;
        }
        let attrs = parse_attrs(&c[1]);
        if !is_javascript(attr(&attrs, "type")) {
            continue;
        }
        if let Some(src) = attr(&attrs, "src") {
            if let Ok(url) = base.join(src.trim()) {
                if matches!(url.scheme(), "http" | "https") {
                    scripts.push(ScriptRef::External(url));
                }
            }
            continue;
        }
        let body = c.get(2).unwrap();
        if !body.as_str().trim().is_empty() {
            scripts.push(ScriptRef::Inline {
                position: body.start(),
                body: body.as_str().to_string(),
            });
        }
    }

    HtmlRefs { manifest, scripts }
}

fn is_javascript(type_attr: Option<&str>) -> bool {
    match type_attr.map(|t| t.trim().to_ascii_lowercase()) {
        None => true,
        Some(t) => matches!(
            t.as_str(),
            "" | "module"
                | "text/javascript"
                | "application/javascript"
                | "text/ecmascript"
                | "application/ecmascript"
        ),
    }
}

fn parse_attrs(text: &str) -> Vec<(String, String)> {
    ATTR.captures_iter(text)
        .map(|c| {
            let value = c
                .get(2)
                .or_else(|| c.get(3))
                .or_else(|| c.get(4))
                .map_or("", |m| m.as_str());
            (c[1].to_ascii_lowercase(), decode_entities(value))
        })
        .collect()
}

fn attr<'a>(attrs: &'a [(String, String)], name: &str) -> Option<&'a str> {
    attrs
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.as_str())
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    s.replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}
