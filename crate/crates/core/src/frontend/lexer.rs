use std::sync::Arc;

use super::{LexError, SourceLocation, Token, TokenKind};

const KEYWORDS: &[&str] = &[
    "struct", "if", "else", "while", "return", "char", "short", "int", "unsigned", "long",
    "size_t", "void", "const",
];

const PUNCT2: &[&str] = &["->", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>"];
const PUNCT1: &str = "(){}[];,.+-*/%&|^!~<>=#";

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
    file: &'a Arc<str>,
}

impl Cursor<'_> {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn loc(&self) -> SourceLocation {
        SourceLocation {
            file: self.file.clone(),
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, loc: SourceLocation, message: impl Into<String>) -> LexError {
        LexError {
            loc,
            message: message.into(),
        }
    }
}

/// Split MiniC source into tokens. Comments and whitespace are dropped;
/// `#` is returned as a punctuator and directives are interpreted by
/// [`super::expand_macros`].
pub fn tokenize(source_text: &str, file: &str) -> Result<Vec<Token>, LexError> {
    let file: Arc<str> = Arc::from(file);
    let mut cur = Cursor {
        chars: source_text.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        file: &file,
    };
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek(0) {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek(1) == Some('/') {
            while let Some(c) = cur.peek(0) {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if c == '/' && cur.peek(1) == Some('*') {
            let start = cur.loc();
            cur.bump();
            cur.bump();
            loop {
                match cur.peek(0) {
                    None => return Err(cur.error(start, "unterminated comment")),
                    Some('*') if cur.peek(1) == Some('/') => {
                        cur.bump();
                        cur.bump();
                        break;
                    }
                    Some(_) => {
                        cur.bump();
                    }
                }
            }
            continue;
        }

        let start = cur.loc();
        let mut text = String::new();
        let mut end = start.clone();
        let mut take = |cur: &mut Cursor, text: &mut String| {
            end = cur.loc();
            text.push(cur.bump().expect("peeked"));
        };

        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while matches!(cur.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                take(&mut cur, &mut text);
            }
            if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() {
            while matches!(cur.peek(0), Some(c) if c.is_ascii_alphanumeric()) {
                take(&mut cur, &mut text);
            }
            if parse_int_literal(&text).is_none() {
                return Err(cur.error(start, format!("invalid integer literal `{text}`")));
            }
            TokenKind::IntegerLiteral
        } else if c == '"' || c == '\'' {
            let quote = c;
            take(&mut cur, &mut text);
            loop {
                match cur.peek(0) {
                    None | Some('\n') => {
                        let what = if quote == '"' { "string" } else { "character" };
                        return Err(cur.error(start, format!("unterminated {what} literal")));
                    }
                    Some('\\') => {
                        take(&mut cur, &mut text);
                        if cur.peek(0).is_none() {
                            return Err(cur.error(start, "unterminated escape sequence"));
                        }
                        take(&mut cur, &mut text);
                    }
                    Some(q) if q == quote => {
                        take(&mut cur, &mut text);
                        break;
                    }
                    Some(_) => take(&mut cur, &mut text),
                }
            }
            let decoded = decode_string_literal(&text)
                .ok_or_else(|| cur.error(start.clone(), format!("invalid escape in {text}")))?;
            if quote == '\'' {
                if decoded.len() != 1 {
                    return Err(cur.error(start, "character literal must hold one byte"));
                }
                TokenKind::CharLiteral
            } else {
                TokenKind::StringLiteral
            }
        } else {
            let rest: String = cur.chars[cur.pos..(cur.pos + 2).min(cur.chars.len())]
                .iter()
                .collect();
            let len = if PUNCT2.iter().any(|p| rest.starts_with(p)) {
                2
            } else if PUNCT1.contains(c) {
                1
            } else {
                return Err(cur.error(start, format!("illegal character `{c}`")));
            };
            for _ in 0..len {
                take(&mut cur, &mut text);
            }
            TokenKind::Punctuator
        };

        tokens.push(Token {
            kind,
            text,
            loc: start,
            end,
        });
    }

    let eof = cur.loc();
    tokens.push(Token {
        kind: TokenKind::Eof,
        text: String::new(),
        loc: eof.clone(),
        end: eof,
    });
    Ok(tokens)
}

pub(crate) fn parse_int_literal(text: &str) -> Option<i64> {
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok().map(|v| v as i64)
    } else {
        text.parse::<i64>().ok()
    }
}

/// Decode a quoted string or character literal (quotes included) into bytes.
pub fn decode_string_literal(quoted: &str) -> Option<Vec<u8>> {
    let inner = quoted.get(1..quoted.len().checked_sub(1)?)?;
    let mut out = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        let b = match chars.next()? {
            'n' => b'\n',
            't' => b'\t',
            'r' => b'\r',
            '0' => 0,
            '\\' => b'\\',
            '\'' => b'\'',
            '"' => b'"',
            'x' => {
                let hi = chars.next()?.to_digit(16)?;
                let lo = chars.next()?.to_digit(16)?;
                (hi * 16 + lo) as u8
            }
            _ => return None,
        };
        out.push(b);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds_and_text(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src, "t.mc")
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn empty_input_is_just_eof() {
        let toks = tokenize("", "t.mc").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::Eof);
        assert_eq!((toks[0].loc.line, toks[0].loc.column), (1, 1));
    }

    #[test]
    fn abort_call() {
        use TokenKind::*;
        assert_eq!(
            kinds_and_text("abort();"),
            vec![
                (Identifier, "abort".into()),
                (Punctuator, "(".into()),
                (Punctuator, ")".into()),
                (Punctuator, ";".into()),
                (Eof, "".into()),
            ]
        );
    }

    #[test]
    fn define_directive_tokens() {
        let toks = tokenize("#define CUSTOM abort\nCUSTOM();", "t.mc").unwrap();
        assert!(toks[0].is_punct("#"));
        assert_eq!(toks[1].text, "define");
        assert_eq!(toks[2].text, "CUSTOM");
        assert_eq!(toks[3].text, "abort");
        assert_eq!(toks[4].text, "CUSTOM");
        assert_eq!(toks[4].loc.line, 2);
    }

    #[test]
    fn locations_and_ends() {
        let toks = tokenize("int x;\n  udp->udp_len", "t.mc").unwrap();
        let arrow = toks.iter().find(|t| t.text == "->").unwrap();
        assert_eq!((arrow.loc.line, arrow.loc.column), (2, 6));
        assert_eq!((arrow.end.line, arrow.end.column), (2, 7));
        let member = toks.iter().find(|t| t.text == "udp_len").unwrap();
        assert_eq!(member.end.column, 14);
    }

    #[test]
    fn comments_are_skipped() {
        let toks = kinds_and_text("a // b\n/* c\n d */ e");
        let texts: Vec<_> = toks.iter().map(|t| t.1.as_str()).collect();
        assert_eq!(texts, vec!["a", "e", ""]);
    }

    #[test]
    fn longest_punctuator_wins() {
        let texts: Vec<_> = kinds_and_text("a->b<=c==d")
            .into_iter()
            .map(|t| t.1)
            .collect();
        assert_eq!(texts, vec!["a", "->", "b", "<=", "c", "==", "d", ""]);
    }

    #[test]
    fn unterminated_string_is_an_error() {
        let err = tokenize("x = \"abc\n", "t.mc").unwrap_err();
        assert_eq!((err.loc.line, err.loc.column), (1, 5));
    }

    #[test]
    fn unterminated_char_is_an_error() {
        assert!(tokenize("'a", "t.mc").is_err());
    }

    #[test]
    fn illegal_character() {
        let err = tokenize("int $x;", "t.mc").unwrap_err();
        assert_eq!(err.loc.column, 5);
        assert!(err.message.contains('$'));
    }

    #[test]
    fn literal_decoding() {
        assert_eq!(decode_string_literal("\"a\\n\\x41\"").unwrap(), b"a\nA");
        assert_eq!(decode_string_literal("'\\0'").unwrap(), vec![0]);
        assert_eq!(parse_int_literal("0x1F"), Some(31));
    }
}
