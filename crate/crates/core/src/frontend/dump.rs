use std::fmt::Write;

use super::ast::{AstNode, TranslationUnit};

/// Indented one-node-per-line dump:
/// `<Kind> <file>:<line>:<col>[ name=<n>][ type=<t>][ op=<o>]`.
pub fn dump_ast(tu: &TranslationUnit) -> String {
    let mut out = String::new();
    dump_node(&tu.root, 0, &mut out);
    out
}

fn dump_node(node: &AstNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    let _ = write!(out, "{} {}", node.kind, node.loc);
    if let Some(name) = &node.name {
        let _ = write!(out, " name={name}");
    }
    if let Some(ty) = &node.type_annot {
        let _ = write!(out, " type={ty}");
    }
    if let Some(op) = &node.op {
        let _ = write!(out, " op={op}");
    }
    out.push('\n');
    for c in &node.children {
        dump_node(c, depth + 1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_sources;

    #[test]
    fn empty_unit() {
        let tus = load_sources(&[("e.mc", "")]).unwrap();
        assert_eq!(dump_ast(&tus[0]), "TranslationUnit e.mc:1:1\n");
    }

    #[test]
    fn member_decl_dump() {
        let src = "struct udp_header { short udp_src; short udp_dst; short udp_len; short udp_csum; };\n\
                   void f(struct udp_header *udp) {\n  size_t udp_len = udp->udp_len;\n}\n";
        let tus = load_sources(&[("u.mc", src)]).unwrap();
        let dump = dump_ast(&tus[0]);
        let lines: Vec<&str> = dump
            .lines()
            .skip_while(|l| !l.trim_start().starts_with("DeclStmt"))
            .take(4)
            .collect();
        assert_eq!(
            lines,
            vec![
                "      DeclStmt u.mc:3:3",
                "        VarDecl u.mc:3:3 name=udp_len type=size_t",
                "          MemberExpr u.mc:3:20 name=udp_len type=short op=->",
                "            DeclRefExpr u.mc:3:20 name=udp type=struct udp_header*",
            ]
        );
    }
}
