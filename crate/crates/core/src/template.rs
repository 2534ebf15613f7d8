//! R2RML string templates: `http://e/{A}/{B}` with `\{`, `\}` and `\\` escapes.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template '{0}' has an unterminated placeholder")]
    Unterminated(String),
    #[error("template '{0}' has an empty placeholder")]
    EmptyPlaceholder(String),
    #[error("template '{0}' has an unmatched '}}'")]
    UnmatchedBrace(String),
    #[error("template '{0}' has a dangling escape")]
    DanglingEscape(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Text(String),
    Column(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut text = String::new();
        let mut chars = src.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some(e) => text.push(e),
                    None => return Err(TemplateError::DanglingEscape(src.into())),
                },
                '{' => {
                    let mut col = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some('\\') => match chars.next() {
                                Some(e) => col.push(e),
                                None => return Err(TemplateError::DanglingEscape(src.into())),
                            },
                            Some(c) => col.push(c),
                            None => return Err(TemplateError::Unterminated(src.into())),
                        }
                    }
                    if col.is_empty() {
                        return Err(TemplateError::EmptyPlaceholder(src.into()));
                    }
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Column(col));
                }
                '}' => return Err(TemplateError::UnmatchedBrace(src.into())),
                c => text.push(c),
            }
        }
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Ok(Template { segments })
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        Template { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Column(c) => Some(c.as_str()),
            Segment::Text(_) => None,
        })
    }

    pub fn arity(&self) -> usize {
        self.columns().count()
    }

    /// The template with placeholder names erased; two templates with the same
    /// skeleton build the same IRIs from the same argument values.
    pub fn skeleton(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => escape_into(t, &mut out),
                Segment::Column(_) => out.push_str("{}"),
            }
        }
        out
    }

    /// Replaces the placeholder names, in order.
    pub fn with_columns<S: AsRef<str>>(&self, names: &[S]) -> Template {
        let mut k = 0;
        let segments = self
            .segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => Segment::Text(t.clone()),
                Segment::Column(_) => {
                    k += 1;
                    Segment::Column(names[k - 1].as_ref().to_string())
                }
            })
            .collect();
        Template { segments }
    }

    /// Builds an IRI from argument values given in placeholder order,
    /// percent-encoding each value.
    pub fn expand_iri<S: AsRef<str>>(&self, args: &[S]) -> String {
        self.expand_with(args, true)
    }

    /// Builds a plain string (template-valued literals are not encoded).
    pub fn expand_plain<S: AsRef<str>>(&self, args: &[S]) -> String {
        self.expand_with(args, false)
    }

    fn expand_with<S: AsRef<str>>(&self, args: &[S], encode: bool) -> String {
        let mut out = String::new();
        let mut k = 0;
        for s in &self.segments {
            match s {
                Segment::Text(t) => out.push_str(t),
                Segment::Column(_) => {
                    let v = args[k].as_ref();
                    if encode {
                        out.push_str(&iri_safe(v));
                    } else {
                        out.push_str(v);
                    }
                    k += 1;
                }
            }
        }
        out
    }

    /// All argument tuples whose IRI expansion equals `iri`.
    pub fn inverse_match(&self, iri: &str) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        let mut acc = Vec::new();
        self.match_from(0, iri, &mut acc, &mut out);
        out
    }

    fn match_from(&self, seg: usize, rest: &str, acc: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        let Some(s) = self.segments.get(seg) else {
            if rest.is_empty() {
                out.push(acc.clone());
            }
            return;
        };
        match s {
            Segment::Text(t) => {
                if let Some(r) = rest.strip_prefix(t.as_str()) {
                    self.match_from(seg + 1, r, acc, out);
                }
            }
            Segment::Column(_) => {
                // a value can only span characters the encoder emits
                let max = rest
                    .char_indices()
                    .find(|&(_, c)| !(is_unreserved(c) || c == '%'))
                    .map_or(rest.len(), |(i, _)| i);
                for end in (0..=max).rev() {
                    if !rest.is_char_boundary(end) {
                        continue;
                    }
                    let piece = &rest[..end];
                    let Some(decoded) = percent_decode(piece) else {
                        continue;
                    };
                    if iri_safe(&decoded) != piece {
                        continue;
                    }
                    acc.push(decoded);
                    self.match_from(seg + 1, &rest[end..], acc, out);
                    acc.pop();
                }
            }
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for s in &self.segments {
            match s {
                Segment::Text(t) => escape_into(t, &mut out),
                Segment::Column(c) => {
                    out.push('{');
                    escape_into(c, &mut out);
                    out.push('}');
                }
            }
        }
        f.write_str(&out)
    }
}

fn escape_into(s: &str, out: &mut String) {
    for c in s.chars() {
        if matches!(c, '{' | '}' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn is_unreserved(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_' | '~')
}

/// Percent-encodes everything outside the unreserved set, byte by byte.
pub fn iri_safe(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        if is_unreserved(c) {
            out.push(c);
        } else {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let t = Template::parse("http://data.example.com/customer/{C_ID}").unwrap();
        assert_eq!(t.arity(), 1);
        assert_eq!(t.columns().collect::<Vec<_>>(), ["C_ID"]);
        assert_eq!(t.to_string(), "http://data.example.com/customer/{C_ID}");
        assert_eq!(t.expand_iri(&["3211"]), "http://data.example.com/customer/3211");

        let esc = Template::parse(r"http://e/\{x\}/{A}").unwrap();
        assert_eq!(esc.to_string(), r"http://e/\{x\}/{A}");
        assert_eq!(esc.expand_iri(&["1"]), "http://e/{x}/1");
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(Template::parse("http://e/{}"), Err(TemplateError::EmptyPlaceholder(_))));
        assert!(matches!(Template::parse("http://e/{A"), Err(TemplateError::Unterminated(_))));
        assert!(matches!(Template::parse("http://e/A}"), Err(TemplateError::UnmatchedBrace(_))));
    }

    #[test]
    fn encodes_values() {
        let t = Template::parse("http://e/{A}").unwrap();
        assert_eq!(t.expand_iri(&["a b/ü"]), "http://e/a%20b%2F%C3%BC");
        assert_eq!(t.expand_plain(&["a b"]), "http://e/a b");
    }

    #[test]
    fn skeleton_ignores_names() {
        let a = Template::parse("http://e/{A}/{B}").unwrap();
        let b = Template::parse("http://e/{X}/{Y}").unwrap();
        assert_eq!(a.skeleton(), b.skeleton());
        assert_ne!(a, b);
    }

    #[test]
    fn inverse_match_is_exhaustive() {
        let t = Template::parse("http://e/{A}-{B}").unwrap();
        let mut m = t.inverse_match("http://e/x-y-z");
        m.sort();
        assert_eq!(m, vec![vec!["x".to_string(), "y-z".to_string()], vec!["x-y".into(), "z".into()]]);
        assert!(t.inverse_match("http://f/x-y").is_empty());
        let one = Template::parse("http://e/{A}").unwrap();
        assert_eq!(one.inverse_match("http://e/a%20b"), vec![vec!["a b".to_string()]]);
        assert!(one.inverse_match("http://e/a/b").is_empty());
        assert_eq!(one.inverse_match("http://e/"), vec![vec![String::new()]]);
    }
}
