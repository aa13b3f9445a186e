use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SourceLocation;

/// Identifier of a node, unique within one translation unit (pre-order numbering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    TranslationUnit,
    FunctionDecl,
    ParamDecl,
    RecordDecl,
    FieldDecl,
    VarDecl,
    DeclStmt,
    CompoundStmt,
    IfStmt,
    WhileStmt,
    ReturnStmt,
    ExprStmt,
    CallExpr,
    MemberExpr,
    ArraySubscriptExpr,
    DeclRefExpr,
    BinaryOperator,
    UnaryOperator,
    CastExpr,
    IntegerLiteral,
    StringLiteral,
}

impl NodeKind {
    pub const ALL: [NodeKind; 21] = [
        NodeKind::TranslationUnit,
        NodeKind::FunctionDecl,
        NodeKind::ParamDecl,
        NodeKind::RecordDecl,
        NodeKind::FieldDecl,
        NodeKind::VarDecl,
        NodeKind::DeclStmt,
        NodeKind::CompoundStmt,
        NodeKind::IfStmt,
        NodeKind::WhileStmt,
        NodeKind::ReturnStmt,
        NodeKind::ExprStmt,
        NodeKind::CallExpr,
        NodeKind::MemberExpr,
        NodeKind::ArraySubscriptExpr,
        NodeKind::DeclRefExpr,
        NodeKind::BinaryOperator,
        NodeKind::UnaryOperator,
        NodeKind::CastExpr,
        NodeKind::IntegerLiteral,
        NodeKind::StringLiteral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::TranslationUnit => "TranslationUnit",
            NodeKind::FunctionDecl => "FunctionDecl",
            NodeKind::ParamDecl => "ParamDecl",
            NodeKind::RecordDecl => "RecordDecl",
            NodeKind::FieldDecl => "FieldDecl",
            NodeKind::VarDecl => "VarDecl",
            NodeKind::DeclStmt => "DeclStmt",
            NodeKind::CompoundStmt => "CompoundStmt",
            NodeKind::IfStmt => "IfStmt",
            NodeKind::WhileStmt => "WhileStmt",
            NodeKind::ReturnStmt => "ReturnStmt",
            NodeKind::ExprStmt => "ExprStmt",
            NodeKind::CallExpr => "CallExpr",
            NodeKind::MemberExpr => "MemberExpr",
            NodeKind::ArraySubscriptExpr => "ArraySubscriptExpr",
            NodeKind::DeclRefExpr => "DeclRefExpr",
            NodeKind::BinaryOperator => "BinaryOperator",
            NodeKind::UnaryOperator => "UnaryOperator",
            NodeKind::CastExpr => "CastExpr",
            NodeKind::IntegerLiteral => "IntegerLiteral",
            NodeKind::StringLiteral => "StringLiteral",
        }
    }

    /// Statement kinds that execute as a unit (and thus land in an execution slice).
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::DeclStmt
                | NodeKind::CompoundStmt
                | NodeKind::IfStmt
                | NodeKind::WhileStmt
                | NodeKind::ReturnStmt
                | NodeKind::ExprStmt
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseType {
    Char,
    Short,
    Int,
    Unsigned,
    Long,
    SizeT,
    Record,
    Void,
}

impl BaseType {
    pub fn as_str(self) -> &'static str {
        match self {
            BaseType::Char => "char",
            BaseType::Short => "short",
            BaseType::Int => "int",
            BaseType::Unsigned => "unsigned",
            BaseType::Long => "long",
            BaseType::SizeT => "size_t",
            BaseType::Record => "struct",
            BaseType::Void => "void",
        }
    }

    /// Byte size of a scalar base type. Records are sized by their layout.
    pub fn scalar_size(self) -> Option<u64> {
        match self {
            BaseType::Char => Some(1),
            BaseType::Short => Some(2),
            BaseType::Int | BaseType::Unsigned => Some(4),
            BaseType::Long | BaseType::SizeT => Some(8),
            BaseType::Void => Some(1),
            BaseType::Record => None,
        }
    }
}

/// A MiniC type: a base, an optional record name, a pointer depth and an
/// optional outermost array length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeRef {
    pub base: BaseType,
    pub record_name: Option<String>,
    pub pointer_depth: u32,
    pub array_len: Option<u64>,
}

impl TypeRef {
    pub fn scalar(base: BaseType) -> Self {
        debug_assert!(base != BaseType::Record);
        TypeRef {
            base,
            record_name: None,
            pointer_depth: 0,
            array_len: None,
        }
    }

    pub fn int() -> Self {
        Self::scalar(BaseType::Int)
    }

    pub fn record(name: impl Into<String>) -> Self {
        TypeRef {
            base: BaseType::Record,
            record_name: Some(name.into()),
            pointer_depth: 0,
            array_len: None,
        }
    }

    /// `&x`; taking the address of an array yields a pointer to its first element.
    pub fn pointer_to(mut self) -> Self {
        self.array_len = None;
        self.pointer_depth += 1;
        self
    }

    pub fn is_pointer(&self) -> bool {
        self.array_len.is_none() && self.pointer_depth > 0
    }

    pub fn is_array(&self) -> bool {
        self.array_len.is_some()
    }

    pub fn is_record_value(&self) -> bool {
        self.base == BaseType::Record && self.pointer_depth == 0 && self.array_len.is_none()
    }

    /// Arrays and pointers both have an element type.
    pub fn element(&self) -> Option<TypeRef> {
        if self.array_len.is_some() {
            let mut t = self.clone();
            t.array_len = None;
            Some(t)
        } else if self.pointer_depth > 0 {
            let mut t = self.clone();
            t.pointer_depth -= 1;
            Some(t)
        } else {
            None
        }
    }

    /// Array-to-pointer decay; other types are returned unchanged.
    pub fn decayed(&self) -> TypeRef {
        if self.array_len.is_some() {
            let mut t = self.clone();
            t.array_len = None;
            t.pointer_depth += 1;
            t
        } else {
            self.clone()
        }
    }

    /// Pointer to (at any depth) the named record.
    pub fn points_to_record(&self, record: &str) -> bool {
        self.base == BaseType::Record
            && self.record_name.as_deref() == Some(record)
            && (self.pointer_depth > 0 || self.array_len.is_some())
    }

    pub fn is_integer(&self) -> bool {
        self.pointer_depth == 0
            && self.array_len.is_none()
            && !matches!(self.base, BaseType::Record | BaseType::Void)
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record_name {
            Some(name) => f.write_str(name)?,
            None => f.write_str(self.base.as_str())?,
        }
        for _ in 0..self.pointer_depth {
            f.write_str("*")?;
        }
        if let Some(n) = self.array_len {
            write!(f, "[{n}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub children: Vec<AstNode>,
    pub loc: SourceLocation,
    pub end_loc: SourceLocation,
    /// Declared, referenced or member name; literal spelling for literals.
    pub name: Option<String>,
    pub op: Option<String>,
    pub type_annot: Option<TypeRef>,
    /// Record of the object a MemberExpr accesses, e.g. `struct udp_header`.
    pub object_record: Option<String>,
}

impl AstNode {
    pub(crate) fn new(kind: NodeKind, loc: SourceLocation, end_loc: SourceLocation) -> Self {
        AstNode {
            id: NodeId(0),
            kind,
            children: Vec::new(),
            loc,
            end_loc,
            name: None,
            op: None,
            type_annot: None,
            object_record: None,
        }
    }

    pub(crate) fn with_children(mut self, children: Vec<AstNode>) -> Self {
        self.children = children;
        self
    }

    pub(crate) fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub(crate) fn with_op(mut self, op: impl Into<String>) -> Self {
        self.op = Some(op.into());
        self
    }

    pub(crate) fn with_type(mut self, ty: TypeRef) -> Self {
        self.type_annot = Some(ty);
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Pre-order traversal including `self`.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a AstNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// All nodes of the subtree in pre-order, including `self`.
    pub fn preorder(&self) -> Vec<&AstNode> {
        let mut out = Vec::new();
        self.walk(&mut |n| out.push(n));
        out
    }

    /// First node in pre-order (including `self`) satisfying `pred`.
    pub fn find(&self, pred: &impl Fn(&AstNode) -> bool) -> Option<&AstNode> {
        if pred(self) {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(pred))
    }

    pub fn spans_line(&self, line: u32) -> bool {
        self.loc.line <= line && line <= self.end_loc.line
    }

    pub fn line_span(&self) -> u32 {
        self.end_loc.line - self.loc.line
    }

    /// Function body for a FunctionDecl (its trailing CompoundStmt).
    pub fn body(&self) -> Option<&AstNode> {
        match self.kind {
            NodeKind::FunctionDecl => self
                .children
                .last()
                .filter(|c| c.kind == NodeKind::CompoundStmt),
            _ => None,
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &AstNode> {
        self.children
            .iter()
            .filter(|c| c.kind == NodeKind::ParamDecl)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub name: String,
    pub ty: TypeRef,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLayout {
    pub name: String,
    pub fields: Vec<FieldLayout>,
    pub size: u64,
}

impl RecordLayout {
    pub fn field(&self, name: &str) -> Option<&FieldLayout> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Byte size under the fixed no-padding layout.
pub fn type_size(ty: &TypeRef, records: &BTreeMap<String, RecordLayout>) -> Option<u64> {
    let elem = if ty.pointer_depth > 0 {
        8
    } else {
        match ty.base {
            BaseType::Record => records.get(ty.record_name.as_deref()?)?.size,
            b => b.scalar_size()?,
        }
    };
    Some(elem * ty.array_len.unwrap_or(1))
}

/// A parsed MiniC source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationUnit {
    pub file: Arc<str>,
    pub source: Arc<str>,
    pub root: AstNode,
    pub records: BTreeMap<String, RecordLayout>,
    /// Function name to its index in `root.children`.
    pub functions: BTreeMap<String, usize>,
}

impl TranslationUnit {
    pub fn function(&self, name: &str) -> Option<&AstNode> {
        self.functions.get(name).map(|&i| &self.root.children[i])
    }

    pub fn function_decls(&self) -> impl Iterator<Item = &AstNode> {
        self.root
            .children
            .iter()
            .filter(|c| c.kind == NodeKind::FunctionDecl)
    }

    /// Innermost function whose source range includes `line`.
    pub fn enclosing_function(&self, line: u32) -> Option<&AstNode> {
        self.function_decls().find(|f| f.spans_line(line))
    }

    /// Text of a 1-based source line, without its terminator.
    pub fn line_text(&self, line: u32) -> &str {
        self.source
            .split('\n')
            .nth(line.saturating_sub(1) as usize)
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .unwrap_or("")
    }

    /// Source text from `start` through `end` (inclusive of the character at `end`).
    pub fn text_range(&self, start: &SourceLocation, end: &SourceLocation) -> String {
        let mut out = String::new();
        for line in start.line..=end.line {
            let text: Vec<char> = self.line_text(line).chars().collect();
            let from = if line == start.line {
                start.column as usize - 1
            } else {
                0
            };
            let to = if line == end.line {
                (end.column as usize).min(text.len())
            } else {
                text.len()
            };
            if from < to {
                out.extend(&text[from..to]);
            }
            if line != end.line {
                out.push('\n');
            }
        }
        out
    }
}
