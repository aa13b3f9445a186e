use std::collections::BTreeMap;

use super::{MacroError, Token, TokenKind};

/// Object-like macro definitions, name to replacement tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MacroTable {
    pub entries: BTreeMap<String, Vec<Token>>,
}

impl MacroTable {
    fn define(&mut self, name: &Token, body: Vec<Token>) -> Result<(), MacroError> {
        if body
            .iter()
            .any(|t| t.kind == TokenKind::Identifier && t.text == name.text)
        {
            return Err(MacroError::Recursive {
                name: name.text.clone(),
                loc: name.loc.clone(),
            });
        }
        if let Some(prev) = self.entries.get(&name.text) {
            let same = prev.len() == body.len()
                && prev
                    .iter()
                    .zip(&body)
                    .all(|(a, b)| a.kind == b.kind && a.text == b.text);
            if !same {
                return Err(MacroError::Redefinition {
                    name: name.text.clone(),
                    loc: name.loc.clone(),
                });
            }
            return Ok(());
        }
        self.entries.insert(name.text.clone(), body);
        Ok(())
    }

    fn expand_into(
        &self,
        use_site: &Token,
        name: &str,
        active: &mut Vec<String>,
        out: &mut Vec<Token>,
    ) -> Result<(), MacroError> {
        if active.iter().any(|a| a == name) {
            return Err(MacroError::Recursive {
                name: name.to_string(),
                loc: use_site.loc.clone(),
            });
        }
        active.push(name.to_string());
        for tok in &self.entries[name] {
            if tok.kind == TokenKind::Identifier && self.entries.contains_key(&tok.text) {
                self.expand_into(use_site, &tok.text, active, out)?;
            } else {
                out.push(Token {
                    kind: tok.kind,
                    text: tok.text.clone(),
                    loc: use_site.loc.clone(),
                    end: use_site.end.clone(),
                });
            }
        }
        active.pop();
        Ok(())
    }
}

/// Remove `#define NAME body...` directives and replace every later use of
/// `NAME` by its body. Expanded tokens take the location of the use site.
pub fn expand_macros(tokens: Vec<Token>) -> Result<Vec<Token>, MacroError> {
    let mut table = MacroTable::default();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        if tok.is_punct("#") {
            let line = tok.loc.line;
            let on_line = |j: usize| {
                tokens
                    .get(j)
                    .filter(|t| t.kind != TokenKind::Eof && t.loc.line == line)
            };
            match on_line(i + 1) {
                Some(d) if d.kind == TokenKind::Identifier && d.text == "define" => {}
                _ => {
                    return Err(MacroError::BadDirective {
                        loc: tok.loc.clone(),
                        message: "only `#define` is supported".into(),
                    })
                }
            }
            let name = match on_line(i + 2) {
                Some(n) if n.kind == TokenKind::Identifier => n,
                _ => {
                    return Err(MacroError::BadDirective {
                        loc: tok.loc.clone(),
                        message: "expected a macro name".into(),
                    })
                }
            };
            let mut j = i + 3;
            let mut body = Vec::new();
            while let Some(t) = on_line(j) {
                body.push(t.clone());
                j += 1;
            }
            table.define(name, body)?;
            i = j;
            continue;
        }
        if tok.kind == TokenKind::Identifier && table.entries.contains_key(&tok.text) {
            table.expand_into(tok, &tok.text, &mut Vec::new(), &mut out)?;
        } else {
            out.push(tok.clone());
        }
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::tokenize;

    fn expand(src: &str) -> Result<Vec<Token>, MacroError> {
        expand_macros(tokenize(src, "m.mc").unwrap())
    }

    fn texts(toks: &[Token]) -> Vec<&str> {
        toks.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn alias_takes_use_site_location() {
        let toks = expand("#define CUSTOM abort\n  CUSTOM();").unwrap();
        assert_eq!(texts(&toks), vec!["abort", "(", ")", ";", ""]);
        assert_eq!((toks[0].loc.line, toks[0].loc.column), (2, 3));
        assert_eq!(toks[0].end.column, 8);
    }

    #[test]
    fn no_directives_is_identity() {
        let raw = tokenize("int f(char *b) { return b[0]; }", "m.mc").unwrap();
        assert_eq!(expand_macros(raw.clone()).unwrap(), raw);
    }

    #[test]
    fn array_length_macro() {
        let toks = expand("#define N 4\nint a[N];").unwrap();
        assert_eq!(texts(&toks), vec!["int", "a", "[", "4", "]", ";", ""]);
    }

    #[test]
    fn nested_macros_expand() {
        let toks = expand("#define A B\n#define B abort\nA();").unwrap();
        assert_eq!(texts(&toks)[0], "abort");
    }

    #[test]
    fn self_reference_rejected() {
        assert!(matches!(
            expand("#define X X + 1\n"),
            Err(MacroError::Recursive { .. })
        ));
    }

    #[test]
    fn mutual_recursion_rejected_on_use() {
        assert!(matches!(
            expand("#define A B\n#define B A\nA;"),
            Err(MacroError::Recursive { .. })
        ));
    }

    #[test]
    fn redefinition() {
        assert!(expand("#define N 4\n#define N 4\nN;").is_ok());
        assert!(matches!(
            expand("#define N 4\n#define N 5\n"),
            Err(MacroError::Redefinition { .. })
        ));
    }

    #[test]
    fn expansion_is_idempotent() {
        let once = expand("#define CUSTOM abort\nCUSTOM(); abort();").unwrap();
        assert_eq!(expand_macros(once.clone()).unwrap(), once);
    }
}
