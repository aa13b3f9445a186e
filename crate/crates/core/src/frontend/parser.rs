use std::collections::BTreeMap;
use std::sync::Arc;

use super::ast::{AstNode, BaseType, NodeId, NodeKind, TranslationUnit, TypeRef};
use super::lexer::{decode_string_literal, parse_int_literal};
use super::{ParseError, SourceLocation, Token, TokenKind};

type PResult<T> = Result<T, ParseError>;

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

/// Binary operators by precedence level, lowest first (assignment handled separately).
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", "<=", ">", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, ahead: usize) -> &'a Token {
        &self.toks[(self.pos + ahead).min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> &'a Token {
        let t = self.peek();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError {
            loc: t.loc.clone(),
            expected: expected.into(),
            found: if t.kind == TokenKind::Eof {
                "end of file".into()
            } else {
                format!("`{}`", t.text)
            },
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<&'a Token> {
        if self.peek().is_punct(p) {
            Ok(self.next())
        } else {
            Err(self.error(format!("`{p}`")))
        }
    }

    fn eat_punct(&mut self, p: &str) -> Option<&'a Token> {
        if self.peek().is_punct(p) {
            Some(self.next())
        } else {
            None
        }
    }

    fn expect_ident(&mut self) -> PResult<&'a Token> {
        if self.peek().kind == TokenKind::Identifier {
            Ok(self.next())
        } else {
            Err(self.error("identifier"))
        }
    }

    fn at_type_start(&self) -> bool {
        let t = self.peek();
        t.kind == TokenKind::Keyword
            && matches!(
                t.text.as_str(),
                "char" | "short" | "int" | "unsigned" | "long" | "size_t" | "void" | "struct"
                    | "const"
            )
    }

    /// Base type plus pointer stars. Returns the type and the location of its first token.
    fn parse_type(&mut self) -> PResult<(TypeRef, SourceLocation, SourceLocation)> {
        let start = self.peek().loc.clone();
        while self.peek().is_keyword("const") {
            self.next();
        }
        let t = self.next();
        let mut end = t.end.clone();
        let mut ty = match (t.kind, t.text.as_str()) {
            (TokenKind::Keyword, "char") => TypeRef::scalar(BaseType::Char),
            (TokenKind::Keyword, "short") => TypeRef::scalar(BaseType::Short),
            (TokenKind::Keyword, "int") => TypeRef::scalar(BaseType::Int),
            (TokenKind::Keyword, "long") => TypeRef::scalar(BaseType::Long),
            (TokenKind::Keyword, "size_t") => TypeRef::scalar(BaseType::SizeT),
            (TokenKind::Keyword, "void") => TypeRef::scalar(BaseType::Void),
            (TokenKind::Keyword, "unsigned") => {
                let next = self.peek();
                let base = match next.text.as_str() {
                    "char" if next.kind == TokenKind::Keyword => Some(BaseType::Char),
                    "short" if next.kind == TokenKind::Keyword => Some(BaseType::Short),
                    "int" if next.kind == TokenKind::Keyword => Some(BaseType::Unsigned),
                    "long" if next.kind == TokenKind::Keyword => Some(BaseType::Long),
                    _ => None,
                };
                match base {
                    Some(b) => {
                        end = self.next().end.clone();
                        TypeRef::scalar(b)
                    }
                    None => TypeRef::scalar(BaseType::Unsigned),
                }
            }
            (TokenKind::Keyword, "struct") => {
                let name = self.expect_ident()?;
                end = name.end.clone();
                TypeRef::record(format!("struct {}", name.text))
            }
            _ => {
                self.pos -= 1;
                return Err(self.error("type name"));
            }
        };
        loop {
            if self.peek().is_keyword("const") {
                end = self.next().end.clone();
            } else if let Some(star) = self.eat_punct("*") {
                end = star.end.clone();
                ty.pointer_depth += 1;
            } else {
                break;
            }
        }
        Ok((ty, start, end))
    }

    /// Optional `[N]` suffix after a declarator name.
    fn parse_array_suffix(&mut self, ty: &mut TypeRef, end: &mut SourceLocation) -> PResult<()> {
        if self.eat_punct("[").is_some() {
            let n = self.peek();
            let len = match n.kind {
                TokenKind::IntegerLiteral => parse_int_literal(&n.text).filter(|v| *v >= 1),
                _ => None,
            };
            let Some(len) = len else {
                return Err(self.error("positive array length"));
            };
            self.next();
            ty.array_len = Some(len as u64);
            *end = self.expect_punct("]")?.end.clone();
        }
        Ok(())
    }

    fn parse_tu(&mut self, file: &Arc<str>) -> PResult<TranslationUnit> {
        let mut children = Vec::new();
        let mut functions = BTreeMap::new();
        while self.peek().kind != TokenKind::Eof {
            if self.peek().is_keyword("struct")
                && self.peek_at(1).kind == TokenKind::Identifier
                && self.peek_at(2).is_punct("{")
            {
                children.push(self.parse_record()?);
                continue;
            }
            let (ty, start, _) = self.parse_type()?;
            let name = self.expect_ident()?;
            if self.peek().is_punct("(") {
                if functions.contains_key(&name.text) {
                    return Err(ParseError {
                        loc: name.loc.clone(),
                        expected: "a function name not already defined in this file".into(),
                        found: format!("`{}`", name.text),
                    });
                }
                functions.insert(name.text.clone(), children.len());
                children.push(self.parse_function(ty, start, name)?);
            } else {
                let decl = self.parse_declarators(ty, start, name)?;
                children.push(decl);
            }
        }
        let root_loc = SourceLocation::new(file.clone(), 1, 1);
        let end = children
            .last()
            .map(|c: &AstNode| c.end_loc.clone())
            .unwrap_or_else(|| root_loc.clone());
        let root = AstNode::new(NodeKind::TranslationUnit, root_loc, end).with_children(children);
        Ok(TranslationUnit {
            file: file.clone(),
            source: Arc::from(""),
            root,
            records: BTreeMap::new(),
            functions,
        })
    }

    fn parse_record(&mut self) -> PResult<AstNode> {
        let kw = self.next();
        let name = self.expect_ident()?;
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        while !self.peek().is_punct("}") {
            let (mut ty, start, _) = self.parse_type()?;
            let fname = self.expect_ident()?;
            let mut end = fname.end.clone();
            self.parse_array_suffix(&mut ty, &mut end)?;
            self.expect_punct(";")?;
            fields.push(
                AstNode::new(NodeKind::FieldDecl, start, end)
                    .with_name(fname.text.clone())
                    .with_type(ty),
            );
        }
        self.expect_punct("}")?;
        let semi = self.expect_punct(";")?;
        Ok(
            AstNode::new(NodeKind::RecordDecl, kw.loc.clone(), semi.end.clone())
                .with_name(format!("struct {}", name.text))
                .with_children(fields),
        )
    }

    fn parse_function(
        &mut self,
        ret: TypeRef,
        start: SourceLocation,
        name: &Token,
    ) -> PResult<AstNode> {
        self.expect_punct("(")?;
        let mut children = Vec::new();
        if self.peek().is_keyword("void") && self.peek_at(1).is_punct(")") {
            self.next();
        } else if !self.peek().is_punct(")") {
            loop {
                let (mut ty, pstart, _) = self.parse_type()?;
                let pname = self.expect_ident()?;
                let mut end = pname.end.clone();
                self.parse_array_suffix(&mut ty, &mut end)?;
                children.push(
                    AstNode::new(NodeKind::ParamDecl, pstart, end)
                        .with_name(pname.text.clone())
                        .with_type(ty.decayed()),
                );
                if self.eat_punct(",").is_none() {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        if !self.peek().is_punct("{") {
            return Err(self.error("`{` (function body)"));
        }
        let body = self.parse_compound()?;
        Ok(AstNode::new(NodeKind::FunctionDecl, start, body.end_loc.clone())
            .with_name(name.text.clone())
            .with_type(ret)
            .with_children({
                children.push(body);
                children
            }))
    }

    /// `type name [= init] (, name [= init])* ;` after the type and first name were read.
    fn parse_declarators(
        &mut self,
        ty: TypeRef,
        start: SourceLocation,
        first: &Token,
    ) -> PResult<AstNode> {
        let mut vars = Vec::new();
        let mut name = first;
        let mut var_start = start.clone();
        loop {
            let mut vty = ty.clone();
            let mut end = name.end.clone();
            self.parse_array_suffix(&mut vty, &mut end)?;
            let mut var = AstNode::new(NodeKind::VarDecl, var_start, end)
                .with_name(name.text.clone())
                .with_type(vty);
            if self.eat_punct("=").is_some() {
                let init = self.parse_assign()?;
                var.end_loc = init.end_loc.clone();
                var.children.push(init);
            }
            vars.push(var);
            if self.eat_punct(",").is_none() {
                break;
            }
            if self.peek().is_punct("*") {
                return Err(self.error("declarator without extra pointer stars"));
            }
            name = self.expect_ident()?;
            var_start = name.loc.clone();
        }
        let semi = self.expect_punct(";")?;
        Ok(AstNode::new(NodeKind::DeclStmt, start, semi.end.clone()).with_children(vars))
    }

    fn parse_compound(&mut self) -> PResult<AstNode> {
        let open = self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.peek().is_punct("}") {
            if self.peek().kind == TokenKind::Eof {
                return Err(self.error("`}`"));
            }
            stmts.push(self.parse_stmt()?);
        }
        let close = self.next();
        Ok(
            AstNode::new(NodeKind::CompoundStmt, open.loc.clone(), close.end.clone())
                .with_children(stmts),
        )
    }

    fn parse_stmt(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        if t.is_punct("{") {
            return self.parse_compound();
        }
        if t.is_keyword("if") {
            self.next();
            self.expect_punct("(")?;
            let cond = self.parse_expr()?;
            self.expect_punct(")")?;
            let then = self.parse_stmt()?;
            let mut children = vec![cond, then];
            if self.peek().is_keyword("else") {
                self.next();
                children.push(self.parse_stmt()?);
            }
            let end = children.last().unwrap().end_loc.clone();
            return Ok(AstNode::new(NodeKind::IfStmt, t.loc.clone(), end).with_children(children));
        }
        if t.is_keyword("while") {
            self.next();
            self.expect_punct("(")?;
            let cond = self.parse_expr()?;
            self.expect_punct(")")?;
            let body = self.parse_stmt()?;
            let end = body.end_loc.clone();
            return Ok(AstNode::new(NodeKind::WhileStmt, t.loc.clone(), end)
                .with_children(vec![cond, body]));
        }
        if t.is_keyword("return") {
            self.next();
            let mut children = Vec::new();
            if !self.peek().is_punct(";") {
                children.push(self.parse_expr()?);
            }
            let semi = self.expect_punct(";")?;
            return Ok(
                AstNode::new(NodeKind::ReturnStmt, t.loc.clone(), semi.end.clone())
                    .with_children(children),
            );
        }
        if self.at_type_start() {
            let (ty, start, _) = self.parse_type()?;
            let name = self.expect_ident()?;
            return self.parse_declarators(ty, start, name);
        }
        let expr = self.parse_expr()?;
        let semi = self.expect_punct(";")?;
        Ok(
            AstNode::new(NodeKind::ExprStmt, expr.loc.clone(), semi.end.clone())
                .with_children(vec![expr]),
        )
    }

    fn parse_expr(&mut self) -> PResult<AstNode> {
        self.parse_assign()
    }

    fn parse_assign(&mut self) -> PResult<AstNode> {
        let lhs = self.parse_binary(0)?;
        if self.eat_punct("=").is_some() {
            let rhs = self.parse_assign()?;
            return Ok(binary("=", lhs, rhs));
        }
        Ok(lhs)
    }

    fn parse_binary(&mut self, level: usize) -> PResult<AstNode> {
        if level == BINARY_LEVELS.len() {
            return self.parse_unary();
        }
        let mut lhs = self.parse_binary(level + 1)?;
        loop {
            let t = self.peek();
            let op = BINARY_LEVELS[level]
                .iter()
                .find(|op| t.is_punct(op))
                .copied();
            let Some(op) = op else { break };
            self.next();
            let rhs = self.parse_binary(level + 1)?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        if t.kind == TokenKind::Punctuator && matches!(t.text.as_str(), "!" | "-" | "~" | "&" | "*")
        {
            self.next();
            let operand = self.parse_unary()?;
            let end = operand.end_loc.clone();
            return Ok(AstNode::new(NodeKind::UnaryOperator, t.loc.clone(), end)
                .with_op(t.text.clone())
                .with_children(vec![operand]));
        }
        if t.is_punct("(") && {
            let n = self.peek_at(1);
            n.kind == TokenKind::Keyword
                && matches!(
                    n.text.as_str(),
                    "char" | "short" | "int" | "unsigned" | "long" | "size_t" | "void" | "struct"
                        | "const"
                )
        } {
            self.next();
            let (ty, _, _) = self.parse_type()?;
            self.expect_punct(")")?;
            let operand = self.parse_unary()?;
            let end = operand.end_loc.clone();
            return Ok(AstNode::new(NodeKind::CastExpr, t.loc.clone(), end)
                .with_type(ty)
                .with_children(vec![operand]));
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> PResult<AstNode> {
        let mut expr = self.parse_primary()?;
        loop {
            if self.eat_punct("[").is_some() {
                let index = self.parse_expr()?;
                let close = self.expect_punct("]")?;
                expr = AstNode::new(
                    NodeKind::ArraySubscriptExpr,
                    expr.loc.clone(),
                    close.end.clone(),
                )
                .with_children(vec![expr, index]);
            } else if self.peek().is_punct(".") || self.peek().is_punct("->") {
                let op = self.next();
                let member = self.expect_ident()?;
                expr = AstNode::new(NodeKind::MemberExpr, expr.loc.clone(), member.end.clone())
                    .with_name(member.text.clone())
                    .with_op(op.text.clone())
                    .with_children(vec![expr]);
            } else if self.peek().is_punct("(") {
                let open = self.peek();
                return Err(ParseError {
                    loc: open.loc.clone(),
                    expected: "a direct call through a function name".into(),
                    found: "`(`".into(),
                });
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> PResult<AstNode> {
        let t = self.peek();
        match t.kind {
            TokenKind::Identifier => {
                self.next();
                if self.eat_punct("(").is_some() {
                    let mut args = Vec::new();
                    if !self.peek().is_punct(")") {
                        loop {
                            args.push(self.parse_assign()?);
                            if self.eat_punct(",").is_none() {
                                break;
                            }
                        }
                    }
                    let close = self.expect_punct(")")?;
                    return Ok(
                        AstNode::new(NodeKind::CallExpr, t.loc.clone(), close.end.clone())
                            .with_name(t.text.clone())
                            .with_children(args),
                    );
                }
                Ok(AstNode::new(NodeKind::DeclRefExpr, t.loc.clone(), t.end.clone())
                    .with_name(t.text.clone()))
            }
            TokenKind::IntegerLiteral => {
                self.next();
                let v = parse_int_literal(&t.text).unwrap_or_default();
                Ok(
                    AstNode::new(NodeKind::IntegerLiteral, t.loc.clone(), t.end.clone())
                        .with_name(v.to_string()),
                )
            }
            TokenKind::CharLiteral => {
                self.next();
                let v = decode_string_literal(&t.text)
                    .and_then(|b| b.first().copied())
                    .unwrap_or_default();
                Ok(
                    AstNode::new(NodeKind::IntegerLiteral, t.loc.clone(), t.end.clone())
                        .with_name(v.to_string()),
                )
            }
            TokenKind::StringLiteral => {
                self.next();
                Ok(
                    AstNode::new(NodeKind::StringLiteral, t.loc.clone(), t.end.clone())
                        .with_name(t.text.clone()),
                )
            }
            TokenKind::Punctuator if t.text == "(" => {
                self.next();
                let inner = self.parse_expr()?;
                self.expect_punct(")")?;
                Ok(inner)
            }
            _ => Err(self.error("expression")),
        }
    }
}

fn binary(op: &str, lhs: AstNode, rhs: AstNode) -> AstNode {
    AstNode::new(NodeKind::BinaryOperator, lhs.loc.clone(), rhs.end_loc.clone())
        .with_op(op)
        .with_children(vec![lhs, rhs])
}

fn number(node: &mut AstNode, next: &mut u32) {
    node.id = NodeId(*next);
    *next += 1;
    for c in &mut node.children {
        number(c, next);
    }
}

/// Parse macro-expanded tokens into an (untyped) translation unit.
pub fn parse(tokens: &[Token], file: &str) -> Result<TranslationUnit, ParseError> {
    let file: Arc<str> = Arc::from(file);
    let eof;
    let toks = if tokens.last().map(|t| t.kind) == Some(TokenKind::Eof) {
        tokens
    } else {
        let loc = tokens
            .last()
            .map(|t| t.end.clone())
            .unwrap_or_else(|| SourceLocation::new(file.clone(), 1, 1));
        eof = [tokens, &[Token {
            kind: TokenKind::Eof,
            text: String::new(),
            loc: loc.clone(),
            end: loc,
        }]]
        .concat();
        &eof[..]
    };
    let mut p = Parser { toks, pos: 0 };
    let mut tu = p.parse_tu(&file)?;
    let mut next = 0;
    number(&mut tu.root, &mut next);
    Ok(tu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{expand_macros, tokenize};

    fn parse_src(src: &str) -> PResult<TranslationUnit> {
        let toks = expand_macros(tokenize(src, "p.mc").unwrap()).unwrap();
        parse(&toks, "p.mc")
    }

    fn shape(n: &AstNode) -> String {
        let mut s = n.kind.as_str().to_string();
        if !n.children.is_empty() {
            s.push('[');
            let parts: Vec<_> = n.children.iter().map(shape).collect();
            s.push_str(&parts.join(","));
            s.push(']');
        }
        s
    }

    #[test]
    fn smallest_program() {
        let tu = parse_src("void f(){}").unwrap();
        assert_eq!(shape(&tu.root), "TranslationUnit[FunctionDecl[CompoundStmt]]");
        assert_eq!(tu.function("f").unwrap().name(), Some("f"));
    }

    #[test]
    fn member_decl_shape() {
        let tu = parse_src(
            "struct udp_header { short udp_len; };\n\
             void f(struct udp_header *udp) { size_t udp_len = udp->udp_len; }",
        )
        .unwrap();
        let body = tu.function("f").unwrap().body().unwrap();
        assert_eq!(
            shape(&body.children[0]),
            "DeclStmt[VarDecl[MemberExpr[DeclRefExpr]]]"
        );
        let member = &body.children[0].children[0].children[0];
        assert_eq!(member.op.as_deref(), Some("->"));
        assert_eq!(member.name(), Some("udp_len"));
    }

    #[test]
    fn precedence_and_assoc() {
        let tu = parse_src("int f(){ int x; x = 1 + 2 * 3 == 7 && 1; return x; }").unwrap();
        let stmt = &tu.function("f").unwrap().body().unwrap().children[1];
        let assign = &stmt.children[0];
        assert_eq!(assign.op.as_deref(), Some("="));
        let and = &assign.children[1];
        assert_eq!(and.op.as_deref(), Some("&&"));
        assert_eq!(and.children[0].op.as_deref(), Some("=="));
        assert_eq!(and.children[0].children[0].op.as_deref(), Some("+"));
    }

    #[test]
    fn casts_and_address_of() {
        let tu = parse_src(
            "struct h { int a; };\nvoid f(char *b){ struct h *p = (struct h *)&b[2]; }",
        )
        .unwrap();
        let var = &tu.function("f").unwrap().body().unwrap().children[0].children[0];
        assert_eq!(shape(var), "VarDecl[CastExpr[UnaryOperator[ArraySubscriptExpr[DeclRefExpr,IntegerLiteral]]]]");
        assert_eq!(var.children[0].type_annot.as_ref().unwrap().to_string(), "struct h*");
    }

    #[test]
    fn ids_are_preorder_and_unique() {
        let tu = parse_src("int f(int a){ if (a) return 1; else return 2; }").unwrap();
        let ids: Vec<u32> = tu.root.preorder().iter().map(|n| n.id.0).collect();
        let expected: Vec<u32> = (0..ids.len() as u32).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn statement_ranges() {
        let tu = parse_src("int f(char *b)\n{\n  if (b[0] == 'x')\n    abort();\n  return 0;\n}\n").unwrap();
        let body = tu.function("f").unwrap().body().unwrap();
        let if_stmt = &body.children[0];
        assert_eq!((if_stmt.loc.line, if_stmt.end_loc.line), (3, 4));
        let call_stmt = &if_stmt.children[1];
        assert_eq!((call_stmt.loc.line, call_stmt.loc.column), (4, 5));
        assert_eq!(call_stmt.end_loc.column, 12);
    }

    #[test]
    fn error_points_at_offending_token() {
        let err = parse_src("int f() { return 1 }").unwrap_err();
        assert_eq!(err.loc.column, 20);
        assert_eq!(err.expected, "`;`");
        assert_eq!(err.found, "`}`");
    }

    #[test]
    fn duplicate_function_rejected() {
        let err = parse_src("void f(){}\nvoid f(){}").unwrap_err();
        assert_eq!(err.loc.line, 2);
    }

    #[test]
    fn globals_and_arrays() {
        let tu = parse_src("int counter = 3;\nchar table[16];\nvoid f(){}").unwrap();
        assert_eq!(shape(&tu.root.children[0]), "DeclStmt[VarDecl[IntegerLiteral]]");
        let arr = &tu.root.children[1].children[0];
        assert_eq!(arr.type_annot.as_ref().unwrap().array_len, Some(16));
    }
}
