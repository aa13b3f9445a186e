use std::collections::{BTreeMap, HashMap};

use super::ast::{
    type_size, AstNode, BaseType, FieldLayout, NodeKind, RecordLayout, TranslationUnit, TypeRef,
};
use super::{SourceLocation, TypeError};

/// Return types of the interpreter builtins.
pub(crate) fn builtin_return_type(name: &str) -> Option<TypeRef> {
    match name {
        "abort" | "assert" => Some(TypeRef::scalar(BaseType::Void)),
        "input_eq" | "hash_eq" => Some(TypeRef::int()),
        _ => None,
    }
}

/// Program-wide declarations shared between translation units.
struct Globals {
    records: BTreeMap<String, RecordLayout>,
    functions: HashMap<String, TypeRef>,
    variables: HashMap<String, TypeRef>,
}

fn type_err(loc: &SourceLocation, message: impl Into<String>) -> TypeError {
    TypeError {
        loc: loc.clone(),
        message: message.into(),
    }
}

fn layout_records(decls: &[&AstNode]) -> Result<BTreeMap<String, RecordLayout>, TypeError> {
    let by_name: BTreeMap<&str, &AstNode> = decls
        .iter()
        .map(|d| (d.name().unwrap_or_default(), *d))
        .collect();
    let mut done: BTreeMap<String, RecordLayout> = BTreeMap::new();

    fn visit(
        name: &str,
        by_name: &BTreeMap<&str, &AstNode>,
        done: &mut BTreeMap<String, RecordLayout>,
        in_progress: &mut Vec<String>,
    ) -> Result<(), TypeError> {
        if done.contains_key(name) {
            return Ok(());
        }
        let decl = by_name[name];
        if in_progress.iter().any(|n| n == name) {
            return Err(type_err(
                &decl.loc,
                format!("record `{name}` contains itself by value"),
            ));
        }
        in_progress.push(name.to_string());
        let mut fields = Vec::new();
        let mut offset = 0;
        for field in &decl.children {
            let ty = field.type_annot.clone().expect("fields carry types");
            if ty.pointer_depth == 0 && ty.base == BaseType::Record {
                let inner = ty.record_name.as_deref().unwrap_or_default();
                if !by_name.contains_key(inner) {
                    return Err(type_err(&field.loc, format!("unknown record `{inner}`")));
                }
                visit(inner, by_name, done, in_progress)?;
            } else if ty.base == BaseType::Record {
                let inner = ty.record_name.as_deref().unwrap_or_default();
                if !by_name.contains_key(inner) {
                    return Err(type_err(&field.loc, format!("unknown record `{inner}`")));
                }
            }
            let size = type_size(&ty, done).expect("nested records laid out first");
            fields.push(FieldLayout {
                name: field.name.clone().unwrap_or_default(),
                ty,
                offset,
            });
            offset += size;
        }
        in_progress.pop();
        done.insert(
            name.to_string(),
            RecordLayout {
                name: name.to_string(),
                fields,
                size: offset,
            },
        );
        Ok(())
    }

    for name in by_name.keys() {
        visit(name, &by_name, &mut done, &mut Vec::new())?;
    }
    Ok(done)
}

struct Resolver<'g> {
    globals: &'g Globals,
    scopes: Vec<HashMap<String, TypeRef>>,
}

impl Resolver<'_> {
    fn check_type(&self, ty: &TypeRef, loc: &SourceLocation) -> Result<(), TypeError> {
        if let Some(rec) = &ty.record_name {
            if !self.globals.records.contains_key(rec) {
                return Err(type_err(loc, format!("unknown record `{rec}`")));
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&TypeRef> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name))
            .or_else(|| self.globals.variables.get(name))
    }

    fn declare(&mut self, name: &str, ty: TypeRef) {
        self.scopes
            .last_mut()
            .expect("scope")
            .insert(name.to_string(), ty);
    }

    fn function(&mut self, f: &mut AstNode) -> Result<(), TypeError> {
        if let Some(ret) = &f.type_annot {
            self.check_type(ret, &f.loc)?;
        }
        self.scopes.push(HashMap::new());
        for child in &mut f.children {
            match child.kind {
                NodeKind::ParamDecl => {
                    let ty = child.type_annot.clone().expect("params carry types");
                    self.check_type(&ty, &child.loc)?;
                    self.declare(child.name().unwrap_or_default(), ty);
                }
                _ => self.stmt(child)?,
            }
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &mut AstNode) -> Result<(), TypeError> {
        match s.kind {
            NodeKind::CompoundStmt => {
                self.scopes.push(HashMap::new());
                for c in &mut s.children {
                    self.stmt(c)?;
                }
                self.scopes.pop();
            }
            NodeKind::DeclStmt => {
                for var in &mut s.children {
                    let ty = var.type_annot.clone().expect("vars carry types");
                    self.check_type(&ty, &var.loc)?;
                    if let Some(init) = var.children.first_mut() {
                        self.expr(init)?;
                    }
                    self.declare(var.name().unwrap_or_default(), ty);
                }
            }
            NodeKind::IfStmt | NodeKind::WhileStmt => {
                let (cond, rest) = s.children.split_first_mut().expect("condition");
                self.expr(cond)?;
                for c in rest {
                    self.stmt(c)?;
                }
            }
            NodeKind::ReturnStmt | NodeKind::ExprStmt => {
                for c in &mut s.children {
                    self.expr(c)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn expr(&mut self, e: &mut AstNode) -> Result<TypeRef, TypeError> {
        let ty = match e.kind {
            NodeKind::IntegerLiteral => {
                let v: i64 = e.name().and_then(|n| n.parse().ok()).unwrap_or_default();
                if i32::try_from(v).is_ok() {
                    TypeRef::int()
                } else {
                    TypeRef::scalar(BaseType::Long)
                }
            }
            NodeKind::StringLiteral => TypeRef::scalar(BaseType::Char).pointer_to(),
            NodeKind::DeclRefExpr => {
                let name = e.name().unwrap_or_default();
                self.lookup(name)
                    .cloned()
                    .ok_or_else(|| type_err(&e.loc, format!("undeclared identifier `{name}`")))?
            }
            NodeKind::MemberExpr => {
                let object = self.expr(&mut e.children[0])?;
                let arrow = e.op.as_deref() == Some("->");
                let record_ok = object.base == BaseType::Record
                    && object.array_len.is_none()
                    && object.pointer_depth == u32::from(arrow);
                if !record_ok {
                    return Err(type_err(
                        &e.loc,
                        format!(
                            "member access `{}{}` on non-record type `{object}`",
                            e.op.as_deref().unwrap_or("."),
                            e.name().unwrap_or_default()
                        ),
                    ));
                }
                let rec_name = object.record_name.clone().unwrap_or_default();
                let layout = self
                    .globals
                    .records
                    .get(&rec_name)
                    .ok_or_else(|| type_err(&e.loc, format!("unknown record `{rec_name}`")))?;
                let member = e.name().unwrap_or_default();
                let field = layout.field(member).ok_or_else(|| {
                    type_err(&e.loc, format!("`{rec_name}` has no member `{member}`"))
                })?;
                let ty = field.ty.clone();
                e.object_record = Some(rec_name);
                ty
            }
            NodeKind::ArraySubscriptExpr => {
                let base = self.expr(&mut e.children[0])?;
                let index = self.expr(&mut e.children[1])?;
                if !index.is_integer() {
                    return Err(type_err(&e.children[1].loc, "array index is not an integer"));
                }
                base.element()
                    .ok_or_else(|| type_err(&e.loc, format!("subscript of non-pointer `{base}`")))?
            }
            NodeKind::UnaryOperator => {
                let operand = self.expr(&mut e.children[0])?;
                match e.op.as_deref() {
                    Some("&") => operand.pointer_to(),
                    Some("*") => operand.element().ok_or_else(|| {
                        type_err(&e.loc, format!("dereference of non-pointer `{operand}`"))
                    })?,
                    Some("!") => TypeRef::int(),
                    _ => {
                        if operand.is_integer() {
                            operand
                        } else {
                            TypeRef::int()
                        }
                    }
                }
            }
            NodeKind::CastExpr => {
                self.expr(&mut e.children[0])?;
                let ty = e.type_annot.clone().expect("casts carry types");
                self.check_type(&ty, &e.loc)?;
                ty
            }
            NodeKind::BinaryOperator => {
                let lhs = self.expr(&mut e.children[0])?;
                let rhs = self.expr(&mut e.children[1])?;
                match e.op.as_deref().unwrap_or_default() {
                    "=" => lhs,
                    "==" | "!=" | "<" | "<=" | ">" | ">=" | "&&" | "||" => TypeRef::int(),
                    "+" | "-" if lhs.is_pointer() || lhs.is_array() => {
                        if rhs.is_pointer() || rhs.is_array() {
                            TypeRef::scalar(BaseType::Long)
                        } else {
                            lhs.decayed()
                        }
                    }
                    "+" if rhs.is_pointer() || rhs.is_array() => rhs.decayed(),
                    _ => {
                        let wide = |t: &TypeRef| {
                            t.is_integer() && t.base.scalar_size().unwrap_or(4) == 8
                        };
                        if wide(&lhs) || wide(&rhs) {
                            TypeRef::scalar(BaseType::Long)
                        } else {
                            TypeRef::int()
                        }
                    }
                }
            }
            NodeKind::CallExpr => {
                for arg in &mut e.children {
                    self.expr(arg)?;
                }
                let name = e.name().unwrap_or_default();
                self.globals
                    .functions
                    .get(name)
                    .cloned()
                    .or_else(|| builtin_return_type(name))
                    .unwrap_or_else(TypeRef::int)
            }
            _ => return Err(type_err(&e.loc, format!("unexpected {} in expression", e.kind))),
        };
        e.type_annot = Some(ty.clone());
        Ok(ty)
    }
}

fn collect_globals(tus: &[&TranslationUnit]) -> Result<Globals, TypeError> {
    let mut record_decls: Vec<&AstNode> = Vec::new();
    let mut functions = HashMap::new();
    let mut variables = HashMap::new();
    for tu in tus {
        for item in &tu.root.children {
            match item.kind {
                NodeKind::RecordDecl => {
                    if let Some(prev) = record_decls.iter().find(|d| d.name == item.name) {
                        let same = prev.children.len() == item.children.len()
                            && prev.children.iter().zip(&item.children).all(|(a, b)| {
                                a.name == b.name && a.type_annot == b.type_annot
                            });
                        if !same {
                            return Err(type_err(
                                &item.loc,
                                format!(
                                    "conflicting definitions of `{}`",
                                    item.name().unwrap_or_default()
                                ),
                            ));
                        }
                    } else {
                        record_decls.push(item);
                    }
                }
                NodeKind::FunctionDecl => {
                    functions
                        .entry(item.name.clone().unwrap_or_default())
                        .or_insert_with(|| item.type_annot.clone().unwrap_or_else(TypeRef::int));
                }
                NodeKind::DeclStmt => {
                    for var in &item.children {
                        variables
                            .entry(var.name.clone().unwrap_or_default())
                            .or_insert_with(|| var.type_annot.clone().unwrap_or_else(TypeRef::int));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(Globals {
        records: layout_records(&record_decls)?,
        functions,
        variables,
    })
}

fn resolve_with(mut tu: TranslationUnit, globals: &Globals) -> Result<TranslationUnit, TypeError> {
    let mut resolver = Resolver {
        globals,
        scopes: Vec::new(),
    };
    for item in &mut tu.root.children {
        match item.kind {
            NodeKind::FunctionDecl => resolver.function(item)?,
            NodeKind::DeclStmt => {
                resolver.scopes.push(HashMap::new());
                resolver.stmt(item)?;
                resolver.scopes.pop();
            }
            _ => {}
        }
    }
    let own: Vec<String> = tu
        .root
        .children
        .iter()
        .filter(|c| c.kind == NodeKind::RecordDecl)
        .filter_map(|c| c.name.clone())
        .collect();
    tu.records = globals
        .records
        .iter()
        .filter(|(name, _)| own.contains(name))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(tu)
}

/// Annotate `tu` with types, resolving records and functions declared in
/// `tu` itself or in any of `includes`.
pub fn resolve_types(
    tu: TranslationUnit,
    includes: &[TranslationUnit],
) -> Result<TranslationUnit, TypeError> {
    let mut all: Vec<&TranslationUnit> = vec![&tu];
    all.extend(includes);
    let globals = collect_globals(&all)?;
    resolve_with(tu, &globals)
}

/// Resolve a whole program: every unit sees the declarations of every other.
pub fn resolve_program(tus: Vec<TranslationUnit>) -> Result<Vec<TranslationUnit>, TypeError> {
    let globals = collect_globals(&tus.iter().collect::<Vec<_>>())?;
    tus.into_iter().map(|tu| resolve_with(tu, &globals)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    const UDP: &str = "struct udp_header { short udp_src; short udp_dst; short udp_len; short udp_csum; };\n";

    fn resolve(src: &str) -> Result<TranslationUnit, TypeError> {
        resolve_types(parse_source(src, "t.mc").unwrap(), &[])
    }

    #[test]
    fn udp_len_member_annotation() {
        let src = format!(
            "{UDP}void f(struct udp_header *udp) {{ size_t udp_len = udp->udp_len; }}"
        );
        let tu = resolve(&src).unwrap();
        let layout = &tu.records["struct udp_header"];
        assert_eq!(layout.field("udp_len").unwrap().offset, 4);
        assert_eq!(layout.size, 8);
        let member = tu
            .root
            .find(&|n| n.kind == NodeKind::MemberExpr)
            .unwrap();
        assert_eq!(member.object_record.as_deref(), Some("struct udp_header"));
        assert_eq!(member.type_annot.as_ref().unwrap().to_string(), "short");
        let dref = tu.root.find(&|n| n.kind == NodeKind::DeclRefExpr).unwrap();
        assert_eq!(dref.type_annot.as_ref().unwrap().to_string(), "struct udp_header*");
    }

    #[test]
    fn no_members_only_declrefs_change() {
        let before = parse_source("int f(int a) { return a + 1; }", "t.mc").unwrap();
        let after = resolve_types(before.clone(), &[]).unwrap();
        let changed: Vec<NodeKind> = before
            .root
            .preorder()
            .iter()
            .zip(after.root.preorder())
            .filter(|(a, b)| a.type_annot != b.type_annot)
            .map(|(a, _)| a.kind)
            .collect();
        assert!(changed.contains(&NodeKind::DeclRefExpr));
        assert!(changed
            .iter()
            .all(|k| matches!(k, NodeKind::DeclRefExpr | NodeKind::BinaryOperator | NodeKind::IntegerLiteral)));
    }

    #[test]
    fn undeclared_record_is_an_error() {
        let err = resolve("void f(struct nope *x) { int y = x->f; }").unwrap_err();
        assert!(err.message.contains("unknown record"));
    }

    #[test]
    fn unknown_member_and_non_record_access() {
        let src = format!("{UDP}void f(struct udp_header *u, int n) {{ int a = u->len; }}");
        assert!(resolve(&src).unwrap_err().message.contains("no member"));
        let src = "void f(int n) { int a = n.x; }";
        assert!(resolve(src).unwrap_err().message.contains("non-record"));
    }

    #[test]
    fn records_from_included_unit() {
        let hdr = parse_source(UDP, "hdr.mc").unwrap();
        let main = parse_source(
            "int f(struct udp_header *u) { return u->udp_csum; }",
            "main.mc",
        )
        .unwrap();
        let tu = resolve_types(main, &[hdr]).unwrap();
        let m = tu.root.find(&|n| n.kind == NodeKind::MemberExpr).unwrap();
        assert_eq!(m.object_record.as_deref(), Some("struct udp_header"));
    }

    #[test]
    fn nested_record_offsets() {
        let src = "struct a { char x; long y; };\nstruct b { int k; struct a inner; char *p; };\nvoid f(){}";
        let tu = resolve(src).unwrap();
        let b = &tu.records["struct b"];
        let offsets: Vec<u64> = b.fields.iter().map(|f| f.offset).collect();
        assert_eq!(offsets, vec![0, 4, 13]);
        assert_eq!(b.size, 21);
    }
}
