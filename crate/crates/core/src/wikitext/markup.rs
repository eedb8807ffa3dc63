//! Markup stripping rules.
//!
//! Block level: HTML comments, `<ref>` footnotes and `{{templates}}` are
//! removed before any line is inspected, so listings inside unexpanded
//! templates never surface. Inline: bold/italic quotes and HTML tags are
//! dropped, internal links keep their surface text (and are remembered as
//! candidate mentions), external links keep only their display text, and a
//! handful of named character entities are decoded.

use std::sync::LazyLock;

use regex::Regex;

use crate::model::EntityMention;

static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?(?:-->|\z)").unwrap());
static REF_SELF_CLOSING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<ref\b[^>]*/>").unwrap());
static REF_BLOCK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<ref\b[^>]*>.*?</ref\s*>").unwrap());
static REFERENCES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<references\b[^>]*/>|<references\b[^>]*>.*?</references\s*>").unwrap());

const URL_SCHEMES: [&str; 5] = ["http://", "https://", "ftp://", "//", "mailto:"];
const DROPPED_NAMESPACES: [&str; 5] = ["file:", "image:", "category:", "media:", "wikt:"];

pub fn strip_block_noise(text: &str) -> String {
    let text = COMMENT.replace_all(text, "");
    let text = REF_SELF_CLOSING.replace_all(&text, "");
    let text = REF_BLOCK.replace_all(&text, "");
    let text = REFERENCES.replace_all(&text, "");
    remove_templates(&text)
}

fn remove_templates(s: &str) -> String {
    let b = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    let mut i = 0;
    while i + 1 < b.len() {
        if b[i] == b'{' && b[i + 1] == b'{' {
            if let Some(end) = template_end(b, i) {
                out.push_str(&s[last..i]);
                i = end;
                last = end;
                continue;
            }
            i += 2;
            continue;
        }
        i += 1;
    }
    out.push_str(&s[last..]);
    out
}

fn template_end(b: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = start;
    while i < b.len() {
        if b[i..].starts_with(b"{{") {
            depth += 1;
            i += 2;
        } else if b[i..].starts_with(b"}}") {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return Some(i);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// An internal link found while rendering, as a byte range of the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub start: usize,
    pub end: usize,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub links: Vec<Link>,
}

pub fn render_inline(src: &str) -> Rendered {
    let mut r = Rendered::default();
    render_into(&mut r, src, true);
    r
}

fn render_into(r: &mut Rendered, s: &str, allow_links: bool) {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'[' if b[i..].starts_with(b"[[") => {
                if let Some(close) = link_close(b, i) {
                    let inner = &s[i + 2..close];
                    let after = close + 2;
                    let trail_len: usize = s[after..]
                        .chars()
                        .take_while(|c| c.is_alphabetic())
                        .map(char::len_utf8)
                        .sum();
                    internal_link(r, inner, &s[after..after + trail_len], allow_links);
                    i = after + trail_len;
                } else {
                    r.text.push_str("[[");
                    i += 2;
                }
            }
            b'[' => {
                let rest = &s[i + 1..];
                let is_url = URL_SCHEMES
                    .iter()
                    .any(|scheme| rest.len() >= scheme.len() && rest[..scheme.len()].eq_ignore_ascii_case(scheme));
                match rest.find([']', '\n']) {
                    Some(j) if is_url && rest.as_bytes()[j] == b']' => {
                        let inner = &rest[..j];
                        if let Some(sp) = inner.find(char::is_whitespace) {
                            render_into(r, inner[sp..].trim(), false);
                        }
                        i += 1 + j + 1;
                    }
                    _ => {
                        r.text.push('[');
                        i += 1;
                    }
                }
            }
            b'\'' => {
                let n = b[i..].iter().take_while(|&&c| c == b'\'').count();
                match n {
                    1 => r.text.push('\''),
                    2 | 3 | 5 => {}
                    4 => r.text.push('\''),
                    _ => r.text.push_str(&"'".repeat(n - 5)),
                }
                i += n;
            }
            b'<' => match tag_end(s, i) {
                Some((end, name)) => {
                    if name.eq_ignore_ascii_case("br") {
                        r.text.push(' ');
                    }
                    i = end;
                }
                None => {
                    r.text.push('<');
                    i += 1;
                }
            },
            b'&' => match decode_entity(&s[i..]) {
                Some((c, len)) => {
                    r.text.push(c);
                    i += len;
                }
                None => {
                    r.text.push('&');
                    i += 1;
                }
            },
            b'\n' | b'\r' | b'\t' => {
                r.text.push(' ');
                i += 1;
            }
            _ => {
                let c = s[i..].chars().next().expect("in bounds");
                r.text.push(c);
                i += c.len_utf8();
            }
        }
    }
}

/// Index of the `]]` closing the link opened at `start`, honoring nesting.
fn link_close(b: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = start;
    while i < b.len() {
        if b[i] == b'\n' {
            return None;
        }
        if b[i..].starts_with(b"[[") {
            depth += 1;
            i += 2;
        } else if b[i..].starts_with(b"]]") {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    None
}

fn internal_link(r: &mut Rendered, inner: &str, trail: &str, allow_links: bool) {
    let (target_raw, surface_raw) = match split_link_pipe(inner) {
        Some(p) => (&inner[..p], Some(&inner[p + 1..])),
        None => (inner, None),
    };
    let t = target_raw.trim();
    let visible_ns = t.starts_with(':');
    let lower = t.trim_start_matches(':').to_lowercase();
    if !visible_ns && DROPPED_NAMESPACES.iter().any(|ns| lower.starts_with(ns)) {
        return;
    }

    let target = normalize_target(t);
    let surface = match surface_raw {
        Some(s) if s.trim().is_empty() => pipe_trick(t),
        Some(s) => s.to_owned(),
        None => t.trim_start_matches(':').to_owned(),
    };

    let start = r.text.len();
    let mut nested = Rendered::default();
    render_into(&mut nested, &surface, false);
    r.text.push_str(&nested.text);
    r.text.push_str(trail);
    let end = r.text.len();
    if allow_links && !target.is_empty() && r.text[start..end].chars().any(|c| !c.is_whitespace()) {
        r.links.push(Link { start, end, target });
    }
}

fn split_link_pipe(inner: &str) -> Option<usize> {
    let b = inner.as_bytes();
    let mut depth = 0usize;
    let mut i = 0;
    while i < b.len() {
        if b[i..].starts_with(b"[[") {
            depth += 1;
            i += 2;
        } else if b[i..].starts_with(b"]]") {
            depth = depth.saturating_sub(1);
            i += 2;
        } else if b[i] == b'|' && depth == 0 {
            return Some(i);
        } else {
            i += 1;
        }
    }
    None
}

/// `[[Foo (bar)|]]` renders as `Foo`.
fn pipe_trick(target: &str) -> String {
    let t = target.trim_start_matches(':');
    let t = t.split_once(':').map_or(t, |(_, rest)| rest);
    let t = match (t.rfind(" ("), t.ends_with(')')) {
        (Some(p), true) => &t[..p],
        _ => t,
    };
    t.trim().to_owned()
}

pub fn normalize_target(t: &str) -> String {
    let t = t.trim().trim_start_matches(':');
    let t = t.split('#').next().unwrap_or_default();
    let t: String = t.replace('_', " ").split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = t.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn tag_end(s: &str, start: usize) -> Option<(usize, &str)> {
    let rest = &s[start + 1..];
    let body = rest.strip_prefix('/').unwrap_or(rest);
    let name_len = body.bytes().take_while(|c| c.is_ascii_alphanumeric()).count();
    if name_len == 0 || !body.as_bytes()[0].is_ascii_alphabetic() {
        return None;
    }
    let close = rest.find(['>', '<', '\n'])?;
    if rest.as_bytes()[close] != b'>' {
        return None;
    }
    Some((start + 1 + close + 1, &body[..name_len]))
}

fn decode_entity(s: &str) -> Option<(char, usize)> {
    let semi = s[..s.len().min(12)].find(';')?;
    let name = &s[1..semi];
    let c = match name {
        "nbsp" | "ensp" | "emsp" | "thinsp" => ' ',
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "ndash" => '–',
        "mdash" => '—',
        _ => {
            let code = if let Some(hex) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok()?
            } else {
                name.strip_prefix('#')?.parse().ok()?
            };
            char::from_u32(code)?
        }
    };
    Some((c, semi + 1))
}

/// Splits rendered text into words and converts link byte ranges into word
/// spans. Returns the normalized cell text and its mentions.
pub fn segment(r: &Rendered, cell_index: usize) -> (String, Vec<EntityMention>) {
    let mut words: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, c) in r.text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                words.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push((s, r.text.len()));
    }

    let text_of = |a: usize, b: usize| -> String {
        words[a..b]
            .iter()
            .map(|&(s, e)| &r.text[s..e])
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mentions = r
        .links
        .iter()
        .filter_map(|link| {
            let first = words.iter().position(|&(s, e)| s < link.end && link.start < e)?;
            let last = words.iter().rposition(|&(s, e)| s < link.end && link.start < e)?;
            Some(EntityMention {
                cell_index,
                start_word: first,
                end_word: last + 1,
                surface: text_of(first, last + 1),
                entity_id: Some(link.target.clone()),
                label: None,
                is_subject: false,
            })
        })
        .collect();

    (text_of(0, words.len()), mentions)
}
