use super::{line_col, ConfigDocument, ConfigError, ConfigNode, NewlineStyle, NodeKind, Span};

/// Parses OAI-style configuration text into a span-preserving document.
///
/// Grammar covers what OAI gNB/DU/CU files use: `name = value;` and
/// `name : value;` settings, `{}` groups, `()` lists and `[]` arrays (both
/// modelled as lists), quoted and bare scalars, `#`, `//` and `/* */`
/// comments, and `@directive` lines. Anything else that does not break
/// delimiter balance is kept as an opaque scalar spanning its line.
pub fn parse_config(text: &str) -> Result<ConfigDocument, ConfigError> {
    let mut p = Parser { text, bytes: text.as_bytes(), pos: 0 };
    let root = p.parse_settings(None)?;
    Ok(ConfigDocument {
        raw_text: text.to_string(),
        root,
        newline_style: NewlineStyle::detect(text),
    })
}

/// Byte-level entry point; rejects invalid UTF-8 with a located error.
pub fn parse_config_bytes(bytes: &[u8]) -> Result<ConfigDocument, ConfigError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_config(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
            let (line, column) = line_col(valid, valid.len());
            Err(ConfigError::Parse { line, column, message: "invalid UTF-8".into() })
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

struct Value {
    kind: NodeKind,
    span: Span,
    scalar: String,
    children: Vec<ConfigNode>,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'*'
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'-' | b'*')
}

fn closer_of(open: u8) -> u8 {
    match open {
        b'{' => b'}',
        b'(' => b')',
        _ => b']',
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.pos + offset).copied()
    }

    fn err(&self, at: usize, message: impl Into<String>) -> ConfigError {
        let (line, column) = line_col(self.text, at);
        ConfigError::Parse { line, column, message: message.into() }
    }

    fn at_comment(&self) -> bool {
        match self.peek() {
            Some(b'#') => true,
            Some(b'/') => matches!(self.peek_at(1), Some(b'/') | Some(b'*')),
            _ => false,
        }
    }

    fn line_end(&self, from: usize) -> usize {
        self.text[from..].find('\n').map(|i| from + i).unwrap_or(self.text.len())
    }

    /// Consumes one comment starting at `pos` and returns its verbatim text.
    fn read_comment(&mut self) -> Result<&'a str, ConfigError> {
        let start = self.pos;
        if self.peek() == Some(b'/') && self.peek_at(1) == Some(b'*') {
            match self.text[start + 2..].find("*/") {
                Some(i) => self.pos = start + 2 + i + 2,
                None => return Err(self.err(start, "unterminated block comment")),
            }
        } else {
            self.pos = self.line_end(start);
        }
        Ok(self.text[start..self.pos].trim_end_matches('\r'))
    }

    /// Skips whitespace and comments, returning the comment block that sits
    /// directly above the next token (trailing same-line comments and blocks
    /// separated by a blank line are not attached).
    fn skip_trivia(&mut self) -> Result<Vec<String>, ConfigError> {
        let line_start = self.text[..self.pos].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let mut fresh_line = self.text[line_start..self.pos].trim().is_empty();
        let mut newline_run = 0usize;
        let mut comments = Vec::new();
        loop {
            match self.peek() {
                Some(b'\n') => {
                    self.pos += 1;
                    newline_run += 1;
                    fresh_line = true;
                    if newline_run >= 2 {
                        comments.clear();
                    }
                }
                Some(b' ' | b'\t' | b'\r') => self.pos += 1,
                Some(0xEF) if self.pos == 0 && self.text.starts_with('\u{feff}') => self.pos += 3,
                Some(_) if self.at_comment() => {
                    let text = self.read_comment()?;
                    if fresh_line {
                        comments.push(text.to_string());
                    }
                    newline_run = 0;
                }
                _ => return Ok(comments),
            }
        }
    }

    fn skip_inline_trivia(&mut self) -> Result<(), ConfigError> {
        self.skip_trivia().map(|_| ())
    }

    fn parse_settings(&mut self, close: Option<(u8, usize)>) -> Result<Vec<ConfigNode>, ConfigError> {
        let mut nodes = Vec::new();
        loop {
            let comments = self.skip_trivia()?;
            match self.peek() {
                None => {
                    return match close {
                        Some((c, open_at)) => Err(self.err(open_at, format!("unclosed delimiter, expected '{}'", c as char))),
                        None => Ok(nodes),
                    };
                }
                Some(c) if Some(c) == close.map(|(c, _)| c) => return Ok(nodes),
                Some(c @ (b'}' | b')' | b']')) => {
                    return Err(self.err(self.pos, format!("unexpected '{}'", c as char)));
                }
                Some(b'@') => nodes.push(self.parse_directive(comments)),
                Some(c) if is_ident_start(c) => nodes.push(self.parse_setting(comments, close.is_none())?),
                Some(_) => nodes.push(self.parse_opaque(self.pos, comments)?),
            }
        }
    }

    fn parse_directive(&mut self, comments: Vec<String>) -> ConfigNode {
        let start = self.pos;
        let end = self.line_end(start);
        let line = self.text[start..end].trim_end();
        let word_len = line.find(char::is_whitespace).unwrap_or(line.len());
        let rest = &line[word_len..];
        let value_start = start + word_len + (rest.len() - rest.trim_start().len());
        let value_end = start + line.len();
        self.pos = value_end;
        ConfigNode {
            name: line[..word_len].to_string(),
            kind: NodeKind::Scalar,
            scalar_value: self.text[value_start..value_end].to_string(),
            children: Vec::new(),
            value_span: Span::new(value_start, value_end),
            full_span: Span::new(start, value_end),
            comments,
        }
    }

    /// A line the grammar does not recognise, kept verbatim as long as it
    /// does not carry structural delimiters.
    fn parse_opaque(&mut self, start: usize, comments: Vec<String>) -> Result<ConfigNode, ConfigError> {
        let end = self.line_end(start);
        let line = self.text[start..end].trim_end();
        if let Some(i) = line.find(['{', '}', '(', ')', '[', ']']) {
            return Err(self.err(start + i, "unrecognised construct containing a delimiter"));
        }
        let value_end = start + line.len();
        self.pos = value_end;
        Ok(ConfigNode {
            name: String::new(),
            kind: NodeKind::Scalar,
            scalar_value: line.to_string(),
            children: Vec::new(),
            value_span: Span::new(start, value_end),
            full_span: Span::new(start, value_end),
            comments,
        })
    }

    fn parse_setting(&mut self, comments: Vec<String>, top_level: bool) -> Result<ConfigNode, ConfigError> {
        let start = self.pos;
        while self.peek().is_some_and(is_ident) {
            self.pos += 1;
        }
        let name = self.text[start..self.pos].to_string();
        self.skip_inline_trivia()?;
        if !matches!(self.peek(), Some(b'=' | b':')) {
            self.pos = start;
            return self.parse_opaque(start, comments);
        }
        self.pos += 1;
        self.skip_inline_trivia()?;
        let value = self.parse_value()?;
        let mut end = value.span.end;

        let after_value = self.pos;
        self.skip_inline_trivia()?;
        match self.peek() {
            Some(b';' | b',') => {
                self.pos += 1;
                end = self.pos;
            }
            Some(b'}') if !top_level => self.pos = after_value,
            None => self.pos = after_value,
            _ if self.text[after_value..self.pos].contains('\n') => self.pos = after_value,
            _ => return Err(self.err(after_value, format!("missing ';' after value of '{name}'"))),
        }
        Ok(ConfigNode {
            name,
            kind: value.kind,
            scalar_value: value.scalar,
            children: value.children,
            value_span: value.span,
            full_span: Span::new(start, end),
            comments,
        })
    }

    fn parse_value(&mut self) -> Result<Value, ConfigError> {
        match self.peek() {
            Some(b'{') => {
                let open = self.pos;
                self.pos += 1;
                let children = self.parse_settings(Some((b'}', open)))?;
                self.pos += 1;
                Ok(Value { kind: NodeKind::Group, span: Span::new(open, self.pos), scalar: String::new(), children })
            }
            Some(c @ (b'(' | b'[')) => self.parse_list(c),
            None => Err(self.err(self.pos, "expected a value, found end of input")),
            Some(c @ (b';' | b',' | b')' | b'}' | b']')) => {
                Err(self.err(self.pos, format!("expected a value, found '{}'", c as char)))
            }
            Some(_) => self.parse_scalar(),
        }
    }

    fn parse_list(&mut self, open_char: u8) -> Result<Value, ConfigError> {
        let open = self.pos;
        let close = closer_of(open_char);
        self.pos += 1;
        let mut children = Vec::new();
        loop {
            self.skip_inline_trivia()?;
            match self.peek() {
                None => return Err(self.err(open, format!("unclosed delimiter, expected '{}'", close as char))),
                Some(c) if c == close => {
                    self.pos += 1;
                    break;
                }
                Some(c @ (b'}' | b')' | b']')) => {
                    return Err(self.err(self.pos, format!("unexpected '{}'", c as char)));
                }
                Some(_) => {
                    let start = self.pos;
                    let value = self.parse_value()?;
                    let mut end = value.span.end;
                    let after_value = self.pos;
                    self.skip_inline_trivia()?;
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                            end = self.pos;
                        }
                        Some(c) if c == close => self.pos = after_value,
                        _ => {
                            return Err(self.err(after_value, format!("expected ',' or '{}' in list", close as char)));
                        }
                    }
                    children.push(ConfigNode {
                        name: children.len().to_string(),
                        kind: value.kind,
                        scalar_value: value.scalar,
                        children: value.children,
                        value_span: value.span,
                        full_span: Span::new(start, end),
                        comments: Vec::new(),
                    });
                }
            }
        }
        Ok(Value { kind: NodeKind::List, span: Span::new(open, self.pos), scalar: String::new(), children })
    }

    fn is_bare(&self) -> bool {
        match self.peek() {
            None => false,
            Some(c) if c.is_ascii_whitespace() => false,
            Some(b';' | b',' | b'(' | b')' | b'{' | b'}' | b'[' | b']' | b'"' | b'#') => false,
            Some(b'/') => !matches!(self.peek_at(1), Some(b'/') | Some(b'*')),
            Some(_) => true,
        }
    }

    /// Quoted strings, numbers, identifiers and adjacent-token runs on one
    /// line (`"a" "b"`, `10 ms`) all become one verbatim scalar.
    fn parse_scalar(&mut self) -> Result<Value, ConfigError> {
        let start = self.pos;
        let mut end = start;
        loop {
            if self.peek() == Some(b'"') {
                let open = self.pos;
                self.pos += 1;
                loop {
                    match self.peek() {
                        None | Some(b'\n') => return Err(self.err(open, "unterminated string")),
                        Some(b'\\') => self.pos += 2,
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => self.pos += 1,
                    }
                }
            } else if self.is_bare() {
                while self.is_bare() {
                    self.pos += 1;
                }
            } else {
                break;
            }
            end = self.pos;
            while matches!(self.peek(), Some(b' ' | b'\t')) {
                self.pos += 1;
            }
            if !(self.peek() == Some(b'"') || self.is_bare()) {
                self.pos = end;
                break;
            }
        }
        if end == start {
            return Err(self.err(start, "expected a value"));
        }
        // Bare runs advance byte-wise; only ASCII delimiters stop them, so `end` is a char boundary.
        Ok(Value {
            kind: NodeKind::Scalar,
            span: Span::new(start, end),
            scalar: self.text[start..end].to_string(),
            children: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(doc: &ConfigDocument) -> Vec<&str> {
        doc.top_level_names()
    }

    #[test]
    fn empty_text_is_empty_document() {
        let doc = parse_config("").unwrap();
        assert!(doc.root.is_empty());
        assert_eq!(doc.serialize(), "");
    }

    #[test]
    fn scalars_lists_groups() {
        let text = "a = 1;\nb : \"x y\";\nc = ( \"nia2\", \"nia0\" );\nd = { e = 0xe00; f = 12345678L; };\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(names(&doc), ["a", "b", "c", "d"]);
        assert_eq!(doc.resolve("b").unwrap().scalar_value, "\"x y\"");
        let c = doc.resolve("c").unwrap();
        assert_eq!(c.kind, NodeKind::List);
        assert_eq!(c.children.len(), 2);
        assert_eq!(doc.resolve("c.1").unwrap().scalar_value, "\"nia0\"");
        assert_eq!(doc.resolve("d.f").unwrap().scalar_value, "12345678L");
        assert_eq!(doc.text_at(c.value_span), "( \"nia2\", \"nia0\" )");
        assert_eq!(doc.serialize(), text);
    }

    #[test]
    fn list_of_groups_without_inner_terminator() {
        let text = "plmn_list = ({ mcc = 208; mnc = 99; snssaiList = ({ sst = 1 }) });\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.resolve("plmn_list.0.snssaiList.0.sst").unwrap().scalar_value, "1");
        assert_eq!(doc.serialize(), text);
    }

    #[test]
    fn comments_attach_to_following_node() {
        let text = "# about a\n// more\na = 1; # trailing\n\n# detached\n\nb = 2;\n# for c\nc = 3;\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.resolve("a").unwrap().comments, ["# about a", "// more"]);
        assert!(doc.resolve("b").unwrap().comments.is_empty());
        assert_eq!(doc.resolve("c").unwrap().comments, ["# for c"]);
    }

    #[test]
    fn block_comments_and_directives() {
        let text = "@include \"common.conf\"\n/* multi\n line */\nx = [1, 2, 3];\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.root[0].name, "@include");
        assert_eq!(doc.root[0].scalar_value, "\"common.conf\"");
        assert_eq!(doc.resolve("x").unwrap().children.len(), 3);
        assert_eq!(doc.serialize(), text);
    }

    #[test]
    fn crlf_round_trip() {
        let text = "a = 1;\r\ng :\r\n{\r\n  b = \"x\";\r\n};\r\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.newline_style, NewlineStyle::CrLf);
        assert_eq!(doc.serialize(), text);
    }

    #[test]
    fn unbalanced_brace_reports_location() {
        let err = parse_config("a = 1;\ng = {\n  b = 2;\n").unwrap_err();
        assert_eq!(err, ConfigError::Parse { line: 2, column: 5, message: "unclosed delimiter, expected '}'".into() });
        let err = parse_config("a = 1;\n};\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, column: 1, .. }));
    }

    #[test]
    fn terminator_is_optional_at_line_end() {
        let text = "a = 1\nb = 2; # two\ng = {\n  c = \"x\" // end\n  d = 3\n}\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.serialize(), text);
        assert_eq!(doc.resolve("g.c").unwrap().scalar_value, "\"x\"");
        let err = parse_config("g = { a = 1; } b = 2;\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, column: 15, .. }), "{err:?}");
    }

    #[test]
    fn unterminated_string() {
        assert!(parse_config("a = \"abc;\n").is_err());
    }

    #[test]
    fn opaque_lines_are_preserved() {
        let text = "a = 1;\n%%weird line here\nb = 2;\n";
        let doc = parse_config(text).unwrap();
        assert_eq!(doc.root.len(), 3);
        assert_eq!(doc.root[1].name, "");
        assert_eq!(doc.root[1].scalar_value, "%%weird line here");
        assert_eq!(doc.serialize(), text);
    }

    #[test]
    fn invalid_utf8_rejected() {
        let err = parse_config_bytes(b"a = 1;\nb = \xff;\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn spans_are_ordered_and_contained() {
        let text = "g = { a = 1; b = (1,2); c = { d = \"e\"; }; };\nh = 2;\n";
        let doc = parse_config(text).unwrap();
        fn check(doc: &ConfigDocument, nodes: &[ConfigNode], within: Span) {
            let mut prev_end = within.start;
            for n in nodes {
                assert!(n.full_span.start >= prev_end);
                assert!(within.contains_span(&n.full_span));
                assert!(n.full_span.contains_span(&n.value_span));
                if n.kind == NodeKind::Scalar {
                    assert_eq!(doc.text_at(n.value_span), n.scalar_value);
                }
                prev_end = n.full_span.end;
                check(doc, &n.children, n.value_span);
            }
        }
        check(&doc, &doc.root, Span::new(0, text.len()));
    }
}
