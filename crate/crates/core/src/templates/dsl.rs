use std::fmt;

use thiserror::Error;

use super::Matcher;
use crate::frontend::NodeKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("matcher offset {offset}: {message}")]
pub struct DslError {
    pub offset: usize,
    pub message: String,
}

const KINDS: [(&str, NodeKind); 9] = [
    ("declStmt", NodeKind::DeclStmt),
    ("exprStmt", NodeKind::ExprStmt),
    ("returnStmt", NodeKind::ReturnStmt),
    ("ifStmt", NodeKind::IfStmt),
    ("callExpr", NodeKind::CallExpr),
    ("memberExpr", NodeKind::MemberExpr),
    ("binaryOperator", NodeKind::BinaryOperator),
    ("varDecl", NodeKind::VarDecl),
    ("declRefExpr", NodeKind::DeclRefExpr),
];

/// Node kinds that have a matcher name.
pub fn matchable_kinds() -> impl Iterator<Item = NodeKind> {
    KINDS.iter().map(|(_, k)| *k)
}

pub fn kind_name(kind: NodeKind) -> Option<&'static str> {
    KINDS.iter().find(|(_, k)| *k == kind).map(|(n, _)| *n)
}

fn kind_from_name(name: &str) -> Option<NodeKind> {
    KINDS.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
}

fn quote(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn render_into(m: &Matcher, out: &mut String) {
    let (name, args): (&str, Vec<&Matcher>) = match m {
        Matcher::Node { kind, inner } => (kind_name(*kind).unwrap_or("?"), inner.iter().collect()),
        Matcher::Member(s) | Matcher::ObjectType(s) | Matcher::Callee(s) => {
            let name = match m {
                Matcher::Member(_) => "member",
                Matcher::ObjectType(_) => "objectType",
                _ => "callee",
            };
            out.push_str(name);
            out.push('(');
            quote(s, out);
            out.push(')');
            return;
        }
        Matcher::Name(s) => {
            quote(s, out);
            return;
        }
        Matcher::HasDescendant(m) => ("hasDescendant", vec![&**m]),
        Matcher::AllOf(ms) => ("allOf", ms.iter().collect()),
        Matcher::AnyOf(ms) => ("anyOf", ms.iter().collect()),
        Matcher::Unless(m) => ("unless", vec![&**m]),
    };
    out.push_str(name);
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        render_into(a, out);
    }
    out.push(')');
}

/// Canonical single-line rendering.
pub fn render_matcher(m: &Matcher) -> String {
    let mut out = String::new();
    render_into(m, &mut out);
    out
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_matcher(self))
    }
}

/// Where a matcher sits: outside any node matcher, or inside one of `kind`.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    Free,
    In(NodeKind),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), DslError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => self.err(self.pos, format!("expected `{c}`, found `{x}`")),
            None => self.err(self.pos, format!("expected `{c}`, found end of input")),
        }
    }

    fn string(&mut self) -> Result<String, DslError> {
        let start = self.pos;
        self.expect('"')?;
        let mut out = String::new();
        let mut chars = self.text[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, 'n')) => out.push('\n'),
                    _ => return self.err(self.pos + i, "bad escape in string"),
                },
                c => out.push(c),
            }
        }
        self.err(start, "unterminated string")
    }

    fn ident(&mut self) -> Result<(usize, &'a str), DslError> {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
            .unwrap_or(self.text.len() - start);
        if len == 0 {
            return self.err(start, "expected a matcher name");
        }
        self.pos += len;
        Ok((start, &self.text[start..start + len]))
    }

    fn args(&mut self, ctx: Ctx) -> Result<Vec<Matcher>, DslError> {
        self.expect('(')?;
        let mut out = Vec::new();
        if self.peek() == Some(')') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.arg(ctx)?);
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return self.err(self.pos, "expected `,` or `)`"),
            }
        }
    }

    fn arg(&mut self, ctx: Ctx) -> Result<Matcher, DslError> {
        if self.peek() == Some('"') {
            let at = self.pos;
            let s = self.string()?;
            if ctx == Ctx::Free {
                return self.err(at, "a name string must sit inside a node matcher");
            }
            return Ok(Matcher::Name(s));
        }
        self.matcher(ctx)
    }

    fn one(&mut self, ctx: Ctx, at: usize, name: &str) -> Result<Matcher, DslError> {
        let mut args = self.args(ctx)?;
        if args.len() != 1 {
            return self.err(at, format!("`{name}` takes exactly one matcher"));
        }
        let m = args.pop().expect("one arg");
        if matches!(m, Matcher::Name(_)) {
            return self.err(at, format!("`{name}` takes a matcher, not a string"));
        }
        Ok(m)
    }

    fn matcher(&mut self, ctx: Ctx) -> Result<Matcher, DslError> {
        let (at, name) = self.ident()?;
        if let Some(kind) = kind_from_name(name) {
            return Ok(Matcher::Node {
                kind,
                inner: self.args(Ctx::In(kind))?,
            });
        }
        match name {
            "member" | "objectType" | "callee" => {
                let (want, build): (NodeKind, fn(String) -> Matcher) = match name {
                    "member" => (NodeKind::MemberExpr, Matcher::Member),
                    "objectType" => (NodeKind::MemberExpr, Matcher::ObjectType),
                    _ => (NodeKind::CallExpr, Matcher::Callee),
                };
                if ctx != Ctx::In(want) {
                    return self.err(
                        at,
                        format!("`{name}` is only valid inside {}", kind_name(want).unwrap_or("?")),
                    );
                }
                self.expect('(')?;
                self.skip_ws();
                let s = self.string()?;
                self.expect(')')?;
                Ok(build(s))
            }
            "hasDescendant" => Ok(Matcher::HasDescendant(Box::new(self.one(Ctx::Free, at, name)?))),
            "unless" => Ok(Matcher::Unless(Box::new(self.one(ctx, at, name)?))),
            "allOf" | "anyOf" => {
                let args = self.args(ctx)?;
                Ok(if name == "allOf" {
                    Matcher::AllOf(args)
                } else {
                    Matcher::AnyOf(args)
                })
            }
            _ => self.err(at, format!("unknown matcher `{name}`")),
        }
    }
}

pub fn parse_matcher(text: &str) -> Result<Matcher, DslError> {
    let mut p = Parser { text, pos: 0 };
    let m = p.matcher(Ctx::Free)?;
    if let Some(c) = p.peek() {
        return p.err(p.pos, format!("trailing input starting at `{c}`"));
    }
    Ok(m)
}

/// Whether `m` obeys the placement rules the parser enforces.
pub fn is_well_formed(m: &Matcher) -> bool {
    fn ok(m: &Matcher, ctx: Ctx) -> bool {
        match m {
            Matcher::Node { kind, inner } => {
                kind_name(*kind).is_some() && inner.iter().all(|i| ok(i, Ctx::In(*kind)))
            }
            Matcher::Member(_) | Matcher::ObjectType(_) => ctx == Ctx::In(NodeKind::MemberExpr),
            Matcher::Callee(_) => ctx == Ctx::In(NodeKind::CallExpr),
            Matcher::Name(_) => ctx != Ctx::Free,
            Matcher::HasDescendant(m) => !matches!(**m, Matcher::Name(_)) && ok(m, Ctx::Free),
            Matcher::Unless(m) => !matches!(**m, Matcher::Name(_)) && ok(m, ctx),
            Matcher::AllOf(ms) | Matcher::AnyOf(ms) => ms.iter().all(|m| ok(m, ctx)),
        }
    }
    ok(m, Ctx::Free)
}
