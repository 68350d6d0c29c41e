//! XmlForm: the canonical envelope as a small XML 1.0 subset.
//!
//! Layout: `<msg id corr cap ts>` root with `<headers>` and `<body>`
//! children. XML text is untyped, so every value element carries a `t`
//! attribute naming its kind; lists hold repeated `<item>` children and maps
//! hold one child per key. Keys become element names via the `_xHH` byte
//! escape, which keeps plain snake_case keys readable while representing
//! arbitrary strings. The subset has no namespaces, DTDs, processing
//! instructions, comments, or CDATA; the full grammar is documented in
//! `docs/wire-formats.md`.

use std::collections::BTreeMap;

use crate::capability::Capability;
use crate::error::{FrameworkError, Result};
use crate::message::CanonicalMessage;
use crate::value::{CanonicalValue, ValueKind};

pub fn encode(msg: &CanonicalMessage) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<msg id=\"");
    escape_attr(&msg.message_id, &mut out);
    out.push('"');
    if let Some(corr) = &msg.correlation_id {
        out.push_str(" corr=\"");
        escape_attr(corr, &mut out);
        out.push('"');
    }
    out.push_str(" cap=\"");
    escape_attr(msg.capability.as_str(), &mut out);
    out.push_str("\" ts=\"");
    out.push_str(&msg.issued_at_ms.to_string());
    out.push_str("\">");

    if msg.headers.is_empty() {
        out.push_str("<headers/>");
    } else {
        out.push_str("<headers>");
        for (key, value) in &msg.headers {
            let name = escape_name(key);
            out.push('<');
            out.push_str(&name);
            if value.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                escape_text(value, &mut out);
                out.push_str("</");
                out.push_str(&name);
                out.push('>');
            }
        }
        out.push_str("</headers>");
    }

    write_value("body", &msg.body, &mut out);
    out.push_str("</msg>");
    out.into_bytes()
}

fn write_value(name: &str, value: &CanonicalValue, out: &mut String) {
    let t = value.kind().as_str();
    let open = |out: &mut String| {
        out.push('<');
        out.push_str(name);
        out.push_str(" t=\"");
        out.push_str(t);
        out.push('"');
    };
    let close = |out: &mut String| {
        out.push_str("</");
        out.push_str(name);
        out.push('>');
    };
    match value {
        CanonicalValue::Null => {
            open(out);
            out.push_str("/>");
        }
        CanonicalValue::Bool(b) => {
            open(out);
            out.push('>');
            out.push_str(if *b { "true" } else { "false" });
            close(out);
        }
        CanonicalValue::Int(i) => {
            open(out);
            out.push('>');
            out.push_str(&i.to_string());
            close(out);
        }
        CanonicalValue::Float(f) => {
            open(out);
            out.push('>');
            out.push_str(&f.to_string());
            close(out);
        }
        CanonicalValue::Str(s) => {
            open(out);
            if s.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                escape_text(s, out);
                close(out);
            }
        }
        CanonicalValue::List(items) => {
            open(out);
            if items.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                for item in items {
                    write_value("item", item, out);
                }
                close(out);
            }
        }
        CanonicalValue::Map(entries) => {
            open(out);
            if entries.is_empty() {
                out.push_str("/>");
            } else {
                out.push('>');
                for (key, child) in entries {
                    write_value(&escape_name(key), child, out);
                }
                close(out);
            }
        }
    }
}

/// Escapes an arbitrary key to an XML-name-safe element name. Alphanumerics,
/// `-`, `.`, and `_` pass through; everything else becomes `_xHH` per UTF-8
/// byte. A literal `_` directly before an `x` is escaped too, so escape
/// sequences never collide with key content, and a leading character that
/// cannot start an XML name is escaped.
fn escape_name(key: &str) -> String {
    let bytes = key.as_bytes();
    let mut out = String::with_capacity(bytes.len());
    for (i, &b) in bytes.iter().enumerate() {
        let plain = match b {
            b'a'..=b'z' | b'A'..=b'Z' => true,
            b'0'..=b'9' | b'-' | b'.' => i > 0,
            b'_' => bytes.get(i + 1) != Some(&b'x'),
            _ => false,
        };
        if plain {
            out.push(b as char);
        } else {
            out.push_str(&format!("_x{b:02x}"));
        }
    }
    out
}

fn unescape_name(name: &str) -> Result<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' && bytes.get(i + 1) == Some(&b'x') {
            let hex = bytes
                .get(i + 2..i + 4)
                .and_then(|h| std::str::from_utf8(h).ok())
                .filter(|h| h.bytes().all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(&c)));
            let hex = hex.ok_or_else(|| {
                FrameworkError::contract(format!("bad escape in element name `{name}`"))
            })?;
            out.push(u8::from_str_radix(hex, 16).expect("two hex digits"));
            i += 4;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out)
        .map_err(|_| FrameworkError::contract(format!("element name `{name}` is not valid UTF-8")))
}

fn escape_text(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c if (c as u32) < 0x20 => out.push_str(&format!("&#x{:x};", c as u32)),
            c => out.push(c),
        }
    }
}

fn escape_attr(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c if (c as u32) < 0x20 => out.push_str(&format!("&#x{:x};", c as u32)),
            c => out.push(c),
        }
    }
}

pub fn decode(bytes: &[u8]) -> Result<CanonicalMessage> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| FrameworkError::contract("XmlForm bytes are not valid UTF-8"))?;
    let mut parser = Parser { rest: text };
    parser.skip_ws();
    let root = parser.element()?;
    parser.skip_ws();
    if !parser.rest.is_empty() {
        return Err(FrameworkError::contract("trailing content after root element"));
    }
    envelope_from(root)
}

fn envelope_from(root: Element) -> Result<CanonicalMessage> {
    if root.name != "msg" {
        return Err(FrameworkError::contract(format!(
            "root element is `{}`, expected `msg`",
            root.name
        )));
    }
    let mut message_id = None;
    let mut correlation_id = None;
    let mut capability = None;
    let mut issued_at_ms = None;
    for (key, value) in &root.attrs {
        match key.as_str() {
            "id" => message_id = Some(value.clone()),
            "corr" => correlation_id = Some(value.clone()),
            "cap" => capability = Some(Capability::parse(value)?),
            "ts" => {
                if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(FrameworkError::contract("`ts` must be decimal digits"));
                }
                let ts = value.parse::<u64>().map_err(|_| {
                    FrameworkError::contract("`ts` out of unsigned 64-bit range")
                })?;
                issued_at_ms = Some(ts);
            }
            other => {
                return Err(FrameworkError::contract(format!(
                    "unknown attribute `{other}` on msg"
                )))
            }
        }
    }
    let message_id =
        message_id.ok_or_else(|| FrameworkError::contract("msg needs an `id` attribute"))?;
    let capability =
        capability.ok_or_else(|| FrameworkError::contract("msg needs a `cap` attribute"))?;
    let issued_at_ms =
        issued_at_ms.ok_or_else(|| FrameworkError::contract("msg needs a `ts` attribute"))?;

    if !root.text.trim().is_empty() {
        return Err(FrameworkError::contract("msg element must not contain loose text"));
    }
    let mut headers = None;
    let mut body = None;
    for child in root.children {
        match child.name.as_str() {
            "headers" if headers.is_none() => headers = Some(headers_from(child)?),
            "body" if body.is_none() => body = Some(value_from(&child)?),
            other => {
                return Err(FrameworkError::contract(format!(
                    "unexpected or repeated element `{other}` in msg"
                )))
            }
        }
    }
    let headers = headers.unwrap_or_default();
    let body = body.ok_or_else(|| FrameworkError::contract("msg needs a body element"))?;

    Ok(CanonicalMessage { message_id, correlation_id, capability, issued_at_ms, headers, body })
}

fn headers_from(node: Element) -> Result<BTreeMap<String, String>> {
    if !node.attrs.is_empty() {
        return Err(FrameworkError::contract("headers element takes no attributes"));
    }
    if !node.text.trim().is_empty() {
        return Err(FrameworkError::contract("headers element must not contain loose text"));
    }
    let mut headers = BTreeMap::new();
    for entry in node.children {
        if !entry.attrs.is_empty() || !entry.children.is_empty() {
            return Err(FrameworkError::contract("header entries are plain text elements"));
        }
        let key = unescape_name(&entry.name)?;
        if headers.insert(key.clone(), entry.text).is_some() {
            return Err(FrameworkError::contract(format!("duplicate header `{key}`")));
        }
    }
    Ok(headers)
}

fn value_from(node: &Element) -> Result<CanonicalValue> {
    let mut tag = None;
    for (key, value) in &node.attrs {
        if key == "t" && tag.is_none() {
            tag = Some(value.as_str());
        } else {
            return Err(FrameworkError::contract(format!(
                "unexpected attribute `{key}` on value element `{}`",
                node.name
            )));
        }
    }
    let tag = tag.ok_or_else(|| {
        FrameworkError::contract(format!("value element `{}` needs a `t` attribute", node.name))
    })?;
    let kind = ValueKind::parse(tag).ok_or_else(|| {
        FrameworkError::contract(format!("unknown type tag `{tag}` on `{}`", node.name))
    })?;

    let leaf_text = |node: &Element| -> Result<String> {
        if node.children.is_empty() {
            Ok(node.text.clone())
        } else {
            Err(FrameworkError::contract(format!(
                "scalar element `{}` must not have children",
                node.name
            )))
        }
    };

    match kind {
        ValueKind::Null => {
            if leaf_text(node)?.is_empty() {
                Ok(CanonicalValue::Null)
            } else {
                Err(FrameworkError::contract("null element must be empty"))
            }
        }
        ValueKind::Bool => match leaf_text(node)?.as_str() {
            "true" => Ok(CanonicalValue::Bool(true)),
            "false" => Ok(CanonicalValue::Bool(false)),
            other => Err(FrameworkError::contract(format!("bad bool literal `{other}`"))),
        },
        ValueKind::Int => {
            let text = leaf_text(node)?;
            text.parse::<i64>()
                .map(CanonicalValue::Int)
                .map_err(|_| FrameworkError::contract(format!("bad int literal `{text}`")))
        }
        ValueKind::Float => {
            let text = leaf_text(node)?;
            let f = text
                .parse::<f64>()
                .map_err(|_| FrameworkError::contract(format!("bad float literal `{text}`")))?;
            if f.is_finite() {
                Ok(CanonicalValue::Float(f))
            } else {
                Err(FrameworkError::contract("float values must be finite"))
            }
        }
        ValueKind::Str => Ok(CanonicalValue::Str(leaf_text(node)?)),
        ValueKind::List => {
            if !node.text.trim().is_empty() {
                return Err(FrameworkError::contract("list element must not contain loose text"));
            }
            let mut items = Vec::with_capacity(node.children.len());
            for child in &node.children {
                if child.name != "item" {
                    return Err(FrameworkError::contract(format!(
                        "list children are named `item`, found `{}`",
                        child.name
                    )));
                }
                items.push(value_from(child)?);
            }
            Ok(CanonicalValue::List(items))
        }
        ValueKind::Map => {
            if !node.text.trim().is_empty() {
                return Err(FrameworkError::contract("map element must not contain loose text"));
            }
            let mut entries = BTreeMap::new();
            for child in &node.children {
                let key = unescape_name(&child.name)?;
                let value = value_from(child)?;
                if entries.insert(key.clone(), value).is_some() {
                    return Err(FrameworkError::contract(format!("duplicate map key `{key}`")));
                }
            }
            Ok(CanonicalValue::Map(entries))
        }
    }
}

struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
    /// All direct text content, entity-decoded, whitespace included.
    text: String,
}

struct Parser<'a> {
    rest: &'a str,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t', '\r', '\n']);
    }

    fn eat(&mut self, prefix: &str) -> bool {
        if let Some(rest) = self.rest.strip_prefix(prefix) {
            self.rest = rest;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, prefix: &str) -> Result<()> {
        if self.eat(prefix) {
            Ok(())
        } else {
            Err(FrameworkError::contract(format!(
                "expected `{prefix}` near `{}`",
                self.rest.chars().take(24).collect::<String>()
            )))
        }
    }

    fn name(&mut self) -> Result<String> {
        let bytes = self.rest.as_bytes();
        let mut len = 0;
        while len < bytes.len() {
            let b = bytes[len];
            let ok = b.is_ascii_alphabetic()
                || b == b'_'
                || (len > 0 && (b.is_ascii_digit() || b == b'-' || b == b'.'));
            if !ok {
                break;
            }
            len += 1;
        }
        if len == 0 {
            return Err(FrameworkError::contract(format!(
                "expected a name near `{}`",
                self.rest.chars().take(24).collect::<String>()
            )));
        }
        let name = self.rest[..len].to_string();
        self.rest = &self.rest[len..];
        Ok(name)
    }

    fn element(&mut self) -> Result<Element> {
        self.expect("<")?;
        let name = self.name()?;
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            if self.rest.starts_with('>') || self.rest.starts_with("/>") {
                break;
            }
            let key = self.name()?;
            self.expect("=")?;
            self.expect("\"")?;
            let end = self
                .rest
                .find('"')
                .ok_or_else(|| FrameworkError::contract("unterminated attribute value"))?;
            let raw = &self.rest[..end];
            if raw.contains('<') {
                return Err(FrameworkError::contract("`<` is not allowed in attribute values"));
            }
            attrs.push((key, decode_entities(raw)?));
            self.rest = &self.rest[end + 1..];
        }
        if self.eat("/>") {
            return Ok(Element { name, attrs, children: Vec::new(), text: String::new() });
        }
        self.expect(">")?;

        let mut children = Vec::new();
        let mut text = String::new();
        loop {
            if self.eat("</") {
                let closer = self.name()?;
                if closer != name {
                    return Err(FrameworkError::contract(format!(
                        "mismatched close tag `{closer}` for `{name}`"
                    )));
                }
                self.skip_ws();
                self.expect(">")?;
                return Ok(Element { name, attrs, children, text });
            }
            if self.rest.starts_with('<') {
                children.push(self.element()?);
                continue;
            }
            if self.rest.is_empty() {
                return Err(FrameworkError::contract(format!("unclosed element `{name}`")));
            }
            let end = self.rest.find('<').unwrap_or(self.rest.len());
            text.push_str(&decode_entities(&self.rest[..end])?);
            self.rest = &self.rest[end..];
        }
    }
}

fn decode_entities(raw: &str) -> Result<String> {
    if !raw.contains('&') {
        return Ok(raw.to_string());
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos + 1..];
        let end = rest
            .find(';')
            .ok_or_else(|| FrameworkError::contract("unterminated entity reference"))?;
        let entity = &rest[..end];
        match entity {
            "amp" => out.push('&'),
            "lt" => out.push('<'),
            "gt" => out.push('>'),
            "quot" => out.push('"'),
            "apos" => out.push('\''),
            _ => {
                let code = entity
                    .strip_prefix("#x")
                    .map(|h| u32::from_str_radix(h, 16))
                    .or_else(|| entity.strip_prefix('#').map(|d| d.parse::<u32>()))
                    .ok_or_else(|| {
                        FrameworkError::contract(format!("unknown entity `&{entity};`"))
                    })?
                    .map_err(|_| FrameworkError::contract(format!("bad entity `&{entity};`")))?;
                let c = char::from_u32(code).ok_or_else(|| {
                    FrameworkError::contract(format!("entity `&{entity};` is not a character"))
                })?;
                out.push(c);
            }
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(s: &str) -> Capability {
        Capability::parse(s).unwrap()
    }

    #[test]
    fn scalar_body_matches_documented_shape() {
        let msg = CanonicalMessage::request("m-1", cap("a.b"), 7, CanonicalValue::Int(21));
        let text = String::from_utf8(encode(&msg)).unwrap();
        assert_eq!(
            text,
            r#"<msg id="m-1" cap="a.b" ts="7"><headers/><body t="int">21</body></msg>"#
        );
    }

    #[test]
    fn round_trips_nested_values_and_headers() {
        let body = CanonicalValue::map([
            ("temp_c".to_string(), CanonicalValue::Float(21.5)),
            ("tags".to_string(), CanonicalValue::List(vec![
                CanonicalValue::str("a<b&c"),
                CanonicalValue::Null,
            ])),
        ]);
        let mut msg = CanonicalMessage::request("m-2", cap("sensor.read"), 99, body)
            .with_header("consumer", "app \"one\"");
        msg.correlation_id = Some("m-1".to_string());
        let decoded = decode(&encode(&msg)).unwrap();
        assert_eq!(decoded, msg);
    }

    #[test]
    fn snake_case_keys_stay_readable() {
        assert_eq!(escape_name("temp_c"), "temp_c");
        assert_eq!(escape_name("a_xb"), "a_x5fxb");
        assert_eq!(unescape_name("a_x5fxb").unwrap(), "a_xb");
        assert_eq!(escape_name("1st"), "_x31st");
        assert_eq!(unescape_name(&escape_name("söndag")).unwrap(), "söndag");
    }

    #[test]
    fn bad_int_text_is_a_contract_violation() {
        let doc = br#"<msg id="m" cap="a" ts="0"><headers/><body t="int">twenty</body></msg>"#;
        let err = decode(doc).unwrap_err();
        assert_eq!(err.kind, crate::error::ErrorKind::ContractViolation);
    }

    #[test]
    fn non_finite_floats_rejected() {
        let doc = br#"<msg id="m" cap="a" ts="0"><headers/><body t="float">NaN</body></msg>"#;
        assert!(decode(doc).is_err());
    }

    #[test]
    fn junk_inputs_error_cleanly() {
        for junk in [
            &b"\xff"[..],
            b"",
            b"<msg",
            b"<msg></wrong>",
            b"<msg id=\"m\" cap=\"a\" ts=\"0\"><headers/><body t=\"blob\">x</body></msg>",
            b"<msg id=\"m\" cap=\"a\" ts=\"0\"><headers/><body t=\"int\">1</body></msg> trailing",
        ] {
            assert!(decode(junk).is_err());
        }
    }

    #[test]
    fn whitespace_between_container_children_is_tolerated() {
        let doc = b"<msg id=\"m\" cap=\"a\" ts=\"0\">\n  <headers/>\n  <body t=\"list\">\n    <item t=\"int\">1</item>\n  </body>\n</msg>";
        let msg = decode(doc).unwrap();
        assert_eq!(msg.body, CanonicalValue::List(vec![CanonicalValue::Int(1)]));
    }
}
