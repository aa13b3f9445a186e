use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::{CrashKind, CrashReport, Frame, FunctionKey, InterpError, Outcome, RunResult};
use crate::corpus::ExecutionSlice;
use crate::frontend::{
    decode_string_literal, type_size, AstNode, BaseType, NodeId, NodeKind, RecordLayout,
    SourceLocation, TranslationUnit, TypeRef,
};

/// Executed statements allowed per run before the run is declared non-terminating.
pub const STATEMENT_BUDGET: u64 = 1_000_000;
const MAX_CALL_DEPTH: usize = 256;
const INPUT_BUFFER: usize = 0;

/// 64-bit FNV-1a, the digest behind the `hash_eq` builtin.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Int(i64),
    /// Pointer with provenance: buffer id and byte offset.
    Ptr { buf: usize, off: i64 },
}

impl Value {
    fn truthy(self) -> bool {
        match self {
            Value::Int(v) => v != 0,
            Value::Ptr { .. } => true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Scalar(Value),
    /// Arrays and by-value records live in their own buffer.
    Object(usize),
}

enum Place {
    Var(String),
    Mem { buf: usize, off: i64 },
}

enum Trap {
    Crash(CrashKind, SourceLocation),
    Fail(InterpError),
}

impl From<InterpError> for Trap {
    fn from(e: InterpError) -> Self {
        Trap::Fail(e)
    }
}

enum Flow {
    Next,
    Return(Value),
}

type Exec<T> = Result<T, Trap>;

struct Activation {
    key: FunctionKey,
    scopes: Vec<HashMap<String, Slot>>,
    /// Location of the call this activation is currently making.
    at: Option<SourceLocation>,
}

struct Machine<'a> {
    units: &'a [&'a TranslationUnit],
    records: BTreeMap<String, RecordLayout>,
    buffers: Vec<Vec<u8>>,
    globals: HashMap<String, Slot>,
    stack: Vec<Activation>,
    literals: HashMap<(usize, NodeId), usize>,
    steps: u64,
    slice: BTreeSet<(String, u32)>,
    entered: BTreeSet<FunctionKey>,
}

fn unsupported(loc: &SourceLocation, message: impl Into<String>) -> Trap {
    Trap::Fail(InterpError::Unsupported {
        loc: loc.clone(),
        message: message.into(),
    })
}

/// Truncate/extend `v` to the representation of `ty`. char, short and
/// unsigned are zero-extended; int is sign-extended; 8-byte types are kept.
fn convert(v: Value, ty: &TypeRef) -> Value {
    let Value::Int(x) = v else { return v };
    if !ty.is_integer() {
        return v;
    }
    Value::Int(match ty.base {
        BaseType::Char => x & 0xff,
        BaseType::Short => x & 0xffff,
        BaseType::Unsigned => x & 0xffff_ffff,
        BaseType::Int => i64::from(x as i32),
        _ => x,
    })
}

pub(super) fn run(
    units: &[&TranslationUnit],
    input: &[u8],
    entry: &str,
) -> Result<RunResult, InterpError> {
    let mut records = BTreeMap::new();
    for u in units {
        for (k, v) in &u.records {
            records.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    let mut m = Machine {
        units,
        records,
        buffers: vec![input.to_vec()],
        globals: HashMap::new(),
        stack: Vec::new(),
        literals: HashMap::new(),
        steps: 0,
        slice: BTreeSet::new(),
        entered: BTreeSet::new(),
    };

    let (unit_idx, func) = m
        .lookup_function(entry, None)
        .ok_or_else(|| InterpError::EntryNotFound {
            name: entry.to_string(),
        })?;
    let params: Vec<&AstNode> = func.params().collect();
    let entry_ok = params.len() == 2
        && params[0]
            .type_annot
            .as_ref()
            .is_some_and(|t| t.is_pointer() && t.pointer_depth == 1 && t.base == BaseType::Char)
        && params[1].type_annot.as_ref().is_some_and(|t| t.is_integer());
    if !entry_ok {
        return Err(InterpError::BadEntry {
            name: entry.to_string(),
        });
    }

    let result = m.init_globals().and_then(|()| {
        m.call(
            unit_idx,
            func,
            vec![
                Value::Ptr {
                    buf: INPUT_BUFFER,
                    off: 0,
                },
                Value::Int(input.len() as i64),
            ],
        )
    });
    let outcome = match result {
        Ok(v) => Outcome::Ok(match v {
            Value::Int(x) => x,
            Value::Ptr { .. } => 0,
        }),
        Err(Trap::Fail(e)) => return Err(e),
        Err(Trap::Crash(kind, site)) => {
            m.slice.insert((site.file.to_string(), site.line));
            let mut stack = Vec::new();
            for (i, act) in m.stack.iter().rev().enumerate() {
                let loc = if i == 0 {
                    site.clone()
                } else {
                    act.at.clone().unwrap_or_else(|| site.clone())
                };
                stack.push(Frame {
                    function: act.key.function.clone(),
                    file: act.key.file.clone(),
                    line: loc.line,
                    column: loc.column,
                });
            }
            Outcome::Crash(CrashReport { kind, site, stack })
        }
    };
    Ok(RunResult {
        outcome,
        slice: ExecutionSlice { lines: m.slice },
        functions: m.entered,
    })
}

impl<'a> Machine<'a> {
    fn lookup_function(&self, name: &str, from: Option<&Arc<str>>) -> Option<(usize, &'a AstNode)> {
        if let Some(file) = from {
            if let Some((i, u)) = self
                .units
                .iter()
                .enumerate()
                .find(|(_, u)| &u.file == file)
            {
                if let Some(f) = u.function(name) {
                    return Some((i, f));
                }
            }
        }
        self.units
            .iter()
            .enumerate()
            .find_map(|(i, u)| u.function(name).map(|f| (i, f)))
    }

    fn size_of(&self, ty: &TypeRef, loc: &SourceLocation) -> Exec<u64> {
        type_size(ty, &self.records)
            .ok_or_else(|| unsupported(loc, format!("type `{ty}` has no size")))
    }

    fn tick(&mut self) -> Exec<()> {
        self.steps += 1;
        if self.steps > STATEMENT_BUDGET {
            return Err(Trap::Fail(InterpError::RuntimeLimit {
                limit: STATEMENT_BUDGET,
            }));
        }
        Ok(())
    }

    fn record_line(&mut self, loc: &SourceLocation) {
        self.slice.insert((loc.file.to_string(), loc.line));
    }

    fn init_globals(&mut self) -> Exec<()> {
        for i in 0..self.units.len() {
            let unit = self.units[i];
            for item in unit.root.children.iter().filter(|c| c.kind == NodeKind::DeclStmt) {
                for var in &item.children {
                    let slot = self.make_slot(i, var)?;
                    self.globals
                        .entry(var.name.clone().unwrap_or_default())
                        .or_insert(slot);
                }
            }
        }
        Ok(())
    }

    fn make_slot(&mut self, unit: usize, var: &'a AstNode) -> Exec<Slot> {
        let ty = var.type_annot.clone().expect("typed var");
        if ty.is_array() || ty.is_record_value() {
            if !var.children.is_empty() {
                return Err(unsupported(&var.loc, "initializers for arrays and records"));
            }
            let size = self.size_of(&ty, &var.loc)?;
            self.buffers.push(vec![0; size as usize]);
            return Ok(Slot::Object(self.buffers.len() - 1));
        }
        let v = match var.children.first() {
            Some(init) => convert(self.eval(unit, init)?, &ty),
            None => Value::Int(0),
        };
        Ok(Slot::Scalar(v))
    }

    fn call(&mut self, unit: usize, func: &'a AstNode, args: Vec<Value>) -> Exec<Value> {
        if self.stack.len() >= MAX_CALL_DEPTH {
            return Err(Trap::Fail(InterpError::CallDepth {
                limit: MAX_CALL_DEPTH,
            }));
        }
        let u = self.units[unit];
        let key = FunctionKey::new(u.file.to_string(), func.name().unwrap_or_default());
        self.entered.insert(key.clone());
        self.record_line(&func.loc);
        let mut scope = HashMap::new();
        for (p, v) in func.params().zip(args) {
            let ty = p.type_annot.as_ref().expect("typed param");
            scope.insert(p.name.clone().unwrap_or_default(), Slot::Scalar(convert(v, ty)));
        }
        self.stack.push(Activation {
            key,
            scopes: vec![scope],
            at: None,
        });
        let flow = match func.body() {
            Some(body) => self.exec(unit, body)?,
            None => Flow::Next,
        };
        self.stack.pop();
        let ret = func.type_annot.clone().unwrap_or_else(TypeRef::int);
        Ok(match flow {
            Flow::Return(v) if ret.base != BaseType::Void || ret.pointer_depth > 0 => convert(v, &ret),
            _ => Value::Int(0),
        })
    }

    fn exec(&mut self, unit: usize, s: &'a AstNode) -> Exec<Flow> {
        self.tick()?;
        if s.kind != NodeKind::CompoundStmt {
            self.record_line(&s.loc);
        }
        match s.kind {
            NodeKind::CompoundStmt => {
                self.frame().scopes.push(HashMap::new());
                let mut flow = Flow::Next;
                for c in &s.children {
                    match self.exec(unit, c) {
                        Ok(Flow::Next) => {}
                        Ok(ret) => {
                            flow = ret;
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
                self.frame().scopes.pop();
                Ok(flow)
            }
            NodeKind::DeclStmt => {
                for var in &s.children {
                    let slot = self.make_slot(unit, var)?;
                    self.frame()
                        .scopes
                        .last_mut()
                        .expect("scope")
                        .insert(var.name.clone().unwrap_or_default(), slot);
                }
                Ok(Flow::Next)
            }
            NodeKind::ExprStmt => {
                self.eval(unit, &s.children[0])?;
                Ok(Flow::Next)
            }
            NodeKind::ReturnStmt => {
                let v = match s.children.first() {
                    Some(e) => self.eval(unit, e)?,
                    None => Value::Int(0),
                };
                Ok(Flow::Return(v))
            }
            NodeKind::IfStmt => {
                if self.eval(unit, &s.children[0])?.truthy() {
                    self.exec(unit, &s.children[1])
                } else if let Some(other) = s.children.get(2) {
                    self.exec(unit, other)
                } else {
                    Ok(Flow::Next)
                }
            }
            NodeKind::WhileStmt => {
                while self.eval(unit, &s.children[0])?.truthy() {
                    if let Flow::Return(v) = self.exec(unit, &s.children[1])? {
                        return Ok(Flow::Return(v));
                    }
                    self.tick()?;
                }
                Ok(Flow::Next)
            }
            _ => Err(unsupported(&s.loc, format!("{} is not a statement", s.kind))),
        }
    }

    fn frame(&mut self) -> &mut Activation {
        self.stack.last_mut().expect("active frame")
    }

    fn lookup_slot(&self, name: &str) -> Option<Slot> {
        if let Some(act) = self.stack.last() {
            if let Some(s) = act.scopes.iter().rev().find_map(|s| s.get(name)) {
                return Some(*s);
            }
        }
        self.globals.get(name).copied()
    }

    fn set_var(&mut self, name: &str, v: Value, loc: &SourceLocation) -> Exec<()> {
        if let Some(act) = self.stack.last_mut() {
            if let Some(slot) = act.scopes.iter_mut().rev().find_map(|s| s.get_mut(name)) {
                *slot = Slot::Scalar(v);
                return Ok(());
            }
        }
        match self.globals.get_mut(name) {
            Some(slot) => {
                *slot = Slot::Scalar(v);
                Ok(())
            }
            None => Err(unsupported(loc, format!("assignment to unknown `{name}`"))),
        }
    }

    fn pointer(&self, v: Value, loc: &SourceLocation) -> Exec<(usize, i64)> {
        match v {
            Value::Ptr { buf, off } => Ok((buf, off)),
            Value::Int(_) => Err(Trap::Fail(InterpError::InvalidPointer { loc: loc.clone() })),
        }
    }

    fn elem_size(&self, pointer_ty: Option<&TypeRef>, loc: &SourceLocation) -> Exec<i64> {
        let elem = pointer_ty
            .and_then(|t| t.element())
            .ok_or_else(|| unsupported(loc, "pointer arithmetic on a non-pointer"))?;
        Ok(self.size_of(&elem, loc)?.max(1) as i64)
    }

    fn place(&mut self, unit: usize, e: &'a AstNode) -> Exec<Place> {
        match e.kind {
            NodeKind::DeclRefExpr => {
                let name = e.name().unwrap_or_default();
                match self.lookup_slot(name) {
                    Some(Slot::Object(buf)) => Ok(Place::Mem { buf, off: 0 }),
                    Some(Slot::Scalar(_)) => Ok(Place::Var(name.to_string())),
                    None => Err(unsupported(&e.loc, format!("unknown variable `{name}`"))),
                }
            }
            NodeKind::MemberExpr => {
                let obj = &e.children[0];
                let (buf, off) = if e.op.as_deref() == Some("->") {
                    let v = self.eval(unit, obj)?;
                    self.pointer(v, &e.loc)?
                } else {
                    match self.place(unit, obj)? {
                        Place::Mem { buf, off } => (buf, off),
                        Place::Var(_) => return Err(unsupported(&e.loc, "member of a scalar")),
                    }
                };
                let record = e.object_record.as_deref().unwrap_or_default();
                let field = self
                    .records
                    .get(record)
                    .and_then(|r| r.field(e.name().unwrap_or_default()))
                    .ok_or_else(|| unsupported(&e.loc, "unresolved member"))?;
                Ok(Place::Mem {
                    buf,
                    off: off + field.offset as i64,
                })
            }
            NodeKind::ArraySubscriptExpr => {
                let base = self.eval(unit, &e.children[0])?;
                let index = match self.eval(unit, &e.children[1])? {
                    Value::Int(i) => i,
                    Value::Ptr { .. } => return Err(unsupported(&e.loc, "pointer used as index")),
                };
                let (buf, off) = self.pointer(base, &e.loc)?;
                let size = self.elem_size(e.children[0].type_annot.as_ref(), &e.loc)?;
                Ok(Place::Mem {
                    buf,
                    off: off.wrapping_add(index.wrapping_mul(size)),
                })
            }
            NodeKind::UnaryOperator if e.op.as_deref() == Some("*") => {
                let v = self.eval(unit, &e.children[0])?;
                let (buf, off) = self.pointer(v, &e.loc)?;
                Ok(Place::Mem { buf, off })
            }
            _ => Err(unsupported(&e.loc, format!("{} is not assignable", e.kind))),
        }
    }

    fn check_bounds(
        &self,
        buf: usize,
        off: i64,
        size: u64,
        write: bool,
        loc: &SourceLocation,
    ) -> Exec<()> {
        let len = self.buffers[buf].len() as i64;
        if off < 0 || off.saturating_add(size as i64) > len {
            let kind = if write {
                CrashKind::BufferOverflowWrite
            } else {
                CrashKind::BufferOverflowRead
            };
            return Err(Trap::Crash(kind, loc.clone()));
        }
        Ok(())
    }

    fn load(&mut self, place: Place, ty: &TypeRef, loc: &SourceLocation) -> Exec<Value> {
        match place {
            Place::Var(name) => match self.lookup_slot(&name) {
                Some(Slot::Scalar(v)) => Ok(v),
                Some(Slot::Object(buf)) => Ok(Value::Ptr { buf, off: 0 }),
                None => Err(unsupported(loc, format!("unknown variable `{name}`"))),
            },
            Place::Mem { buf, off } => {
                if ty.is_array() || ty.is_record_value() {
                    return Ok(Value::Ptr { buf, off });
                }
                let size = self.size_of(ty, loc)?;
                self.check_bounds(buf, off, size, false, loc)?;
                let bytes = &self.buffers[buf][off as usize..off as usize + size as usize];
                let mut raw = [0u8; 8];
                raw[..bytes.len()].copy_from_slice(bytes);
                Ok(convert(Value::Int(i64::from_le_bytes(raw)), ty))
            }
        }
    }

    fn store(&mut self, place: Place, v: Value, ty: &TypeRef, loc: &SourceLocation) -> Exec<Value> {
        let v = convert(v, ty);
        match place {
            Place::Var(name) => {
                self.set_var(&name, v, loc)?;
                Ok(v)
            }
            Place::Mem { buf, off } => {
                let Value::Int(x) = v else {
                    return Err(unsupported(loc, "storing pointers in memory"));
                };
                let size = self.size_of(ty, loc)?;
                self.check_bounds(buf, off, size, true, loc)?;
                let bytes = x.to_le_bytes();
                self.buffers[buf][off as usize..off as usize + size as usize]
                    .copy_from_slice(&bytes[..size as usize]);
                Ok(v)
            }
        }
    }

    fn node_type(e: &AstNode) -> TypeRef {
        e.type_annot.clone().unwrap_or_else(TypeRef::int)
    }

    fn eval(&mut self, unit: usize, e: &'a AstNode) -> Exec<Value> {
        match e.kind {
            NodeKind::IntegerLiteral => Ok(Value::Int(
                e.name().and_then(|n| n.parse().ok()).unwrap_or_default(),
            )),
            NodeKind::StringLiteral => {
                let key = (unit, e.id);
                if let Some(&buf) = self.literals.get(&key) {
                    return Ok(Value::Ptr { buf, off: 0 });
                }
                let mut bytes = decode_string_literal(e.name().unwrap_or("\"\"")).unwrap_or_default();
                bytes.push(0);
                self.buffers.push(bytes);
                let buf = self.buffers.len() - 1;
                self.literals.insert(key, buf);
                Ok(Value::Ptr { buf, off: 0 })
            }
            NodeKind::DeclRefExpr
            | NodeKind::MemberExpr
            | NodeKind::ArraySubscriptExpr => {
                let place = self.place(unit, e)?;
                self.load(place, &Self::node_type(e), &e.loc)
            }
            NodeKind::UnaryOperator => {
                let op = e.op.as_deref().unwrap_or_default();
                let operand = &e.children[0];
                match op {
                    "*" => {
                        let place = self.place(unit, e)?;
                        self.load(place, &Self::node_type(e), &e.loc)
                    }
                    "&" => match self.place(unit, operand)? {
                        Place::Mem { buf, off } => Ok(Value::Ptr { buf, off }),
                        Place::Var(_) => Err(unsupported(&e.loc, "address of a scalar variable")),
                    },
                    _ => {
                        let v = self.eval(unit, operand)?;
                        Ok(match (op, v) {
                            ("!", v) => Value::Int(i64::from(!v.truthy())),
                            ("-", Value::Int(x)) => Value::Int(x.wrapping_neg()),
                            ("~", Value::Int(x)) => Value::Int(!x),
                            _ => return Err(unsupported(&e.loc, format!("`{op}` on a pointer"))),
                        })
                    }
                }
            }
            NodeKind::CastExpr => {
                let v = self.eval(unit, &e.children[0])?;
                Ok(convert(v, &Self::node_type(e)))
            }
            NodeKind::BinaryOperator => self.eval_binary(unit, e),
            NodeKind::CallExpr => self.eval_call(unit, e),
            _ => Err(unsupported(&e.loc, format!("{} is not an expression", e.kind))),
        }
    }

    fn eval_binary(&mut self, unit: usize, e: &'a AstNode) -> Exec<Value> {
        let op = e.op.as_deref().unwrap_or_default();
        let (lhs, rhs) = (&e.children[0], &e.children[1]);
        match op {
            "=" => {
                let v = self.eval(unit, rhs)?;
                let place = self.place(unit, lhs)?;
                return self.store(place, v, &Self::node_type(lhs), &lhs.loc);
            }
            "&&" => {
                let v = self.eval(unit, lhs)?.truthy() && self.eval(unit, rhs)?.truthy();
                return Ok(Value::Int(i64::from(v)));
            }
            "||" => {
                let v = self.eval(unit, lhs)?.truthy() || self.eval(unit, rhs)?.truthy();
                return Ok(Value::Int(i64::from(v)));
            }
            _ => {}
        }
        let a = self.eval(unit, lhs)?;
        let b = self.eval(unit, rhs)?;
        let cmp = |x: (usize, i64), y: (usize, i64)| -> Option<bool> {
            Some(match op {
                "==" => x == y,
                "!=" => x != y,
                "<" => x < y,
                "<=" => x <= y,
                ">" => x > y,
                ">=" => x >= y,
                _ => return None,
            })
        };
        match (a, b) {
            (Value::Int(x), Value::Int(y)) => {
                let r = match op {
                    "+" => x.wrapping_add(y),
                    "-" => x.wrapping_sub(y),
                    "*" => x.wrapping_mul(y),
                    "/" | "%" => {
                        if y == 0 {
                            return Err(Trap::Fail(InterpError::DivisionByZero {
                                loc: e.loc.clone(),
                            }));
                        }
                        if op == "/" {
                            x.wrapping_div(y)
                        } else {
                            x.wrapping_rem(y)
                        }
                    }
                    "&" => x & y,
                    "|" => x | y,
                    "^" => x ^ y,
                    "<<" => x.wrapping_shl(y as u32),
                    ">>" => x.wrapping_shr(y as u32),
                    _ => i64::from(cmp((0, x), (0, y)).unwrap_or(false)),
                };
                Ok(Value::Int(r))
            }
            (Value::Ptr { buf, off }, Value::Int(n)) if op == "+" || op == "-" => {
                let size = self.elem_size(lhs.type_annot.as_ref().map(|t| t.decayed()).as_ref(), &e.loc)?;
                let delta = n.wrapping_mul(size);
                let off = if op == "+" {
                    off.wrapping_add(delta)
                } else {
                    off.wrapping_sub(delta)
                };
                Ok(Value::Ptr { buf, off })
            }
            (Value::Int(n), Value::Ptr { buf, off }) if op == "+" => {
                let size = self.elem_size(rhs.type_annot.as_ref().map(|t| t.decayed()).as_ref(), &e.loc)?;
                Ok(Value::Ptr {
                    buf,
                    off: off.wrapping_add(n.wrapping_mul(size)),
                })
            }
            (Value::Ptr { buf: b1, off: o1 }, Value::Ptr { buf: b2, off: o2 }) => {
                if op == "-" && b1 == b2 {
                    let size = self.elem_size(lhs.type_annot.as_ref().map(|t| t.decayed()).as_ref(), &e.loc)?;
                    return Ok(Value::Int((o1 - o2) / size));
                }
                match cmp((b1, o1), (b2, o2)) {
                    Some(r) => Ok(Value::Int(i64::from(r))),
                    None => Err(unsupported(&e.loc, format!("`{op}` on two pointers"))),
                }
            }
            (Value::Ptr { .. }, Value::Int(_)) | (Value::Int(_), Value::Ptr { .. }) => {
                // only comparisons against null make sense here
                let r = match op {
                    "==" => false,
                    "!=" => true,
                    _ => return Err(unsupported(&e.loc, format!("`{op}` mixing pointer and integer"))),
                };
                Ok(Value::Int(i64::from(r)))
            }
        }
    }

    fn read_bytes(&self, v: Value, len: i64, loc: &SourceLocation) -> Exec<Vec<u8>> {
        let (buf, off) = self.pointer(v, loc)?;
        let len = len.max(0) as u64;
        self.check_bounds(buf, off, len, false, loc)?;
        Ok(self.buffers[buf][off as usize..(off as u64 + len) as usize].to_vec())
    }

    fn eval_call(&mut self, unit: usize, e: &'a AstNode) -> Exec<Value> {
        self.record_line(&e.loc);
        let name = e.name().unwrap_or_default();
        let mut args = Vec::with_capacity(e.children.len());
        for a in &e.children {
            args.push(self.eval(unit, a)?);
        }
        let arity = |n: usize| -> Exec<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(unsupported(&e.loc, format!("`{name}` expects {n} argument(s)")))
            }
        };
        match name {
            "abort" => {
                arity(0)?;
                return Err(Trap::Crash(CrashKind::Abort, e.loc.clone()));
            }
            "assert" => {
                arity(1)?;
                if !args[0].truthy() {
                    return Err(Trap::Crash(CrashKind::AssertionFailure, e.loc.clone()));
                }
                return Ok(Value::Int(0));
            }
            "input_eq" | "hash_eq" => {
                arity(3)?;
                let lit = &e.children[2];
                if lit.kind != NodeKind::StringLiteral {
                    return Err(unsupported(&lit.loc, "expected a string literal"));
                }
                let expected = decode_string_literal(lit.name().unwrap_or("\"\"")).unwrap_or_default();
                let len = match args[1] {
                    Value::Int(n) => n,
                    Value::Ptr { .. } => return Err(unsupported(&e.loc, "length is a pointer")),
                };
                let bytes = self.read_bytes(args[0], len, &e.loc)?;
                let equal = if name == "input_eq" {
                    bytes == expected
                } else {
                    let hex = String::from_utf8_lossy(&expected).to_string();
                    let hex = hex.trim_start_matches("0x");
                    let want = u64::from_str_radix(hex, 16)
                        .map_err(|_| unsupported(&lit.loc, "hash literal is not hex"))?;
                    fnv1a64(&bytes) == want
                };
                return Ok(Value::Int(i64::from(equal)));
            }
            _ => {}
        }
        let from = self.units[unit].file.clone();
        let Some((callee_unit, func)) = self.lookup_function(name, Some(&from)) else {
            return Err(Trap::Fail(InterpError::UndefinedName {
                name: name.to_string(),
                loc: e.loc.clone(),
            }));
        };
        if func.params().count() != args.len() {
            return Err(unsupported(&e.loc, format!("`{name}` called with wrong arity")));
        }
        self.frame().at = Some(e.loc.clone());
        let v = self.call(callee_unit, func, args)?;
        self.frame().at = None;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::load_sources;
    use crate::interp::{execute, render_report, Outcome};

    fn run_src(src: &str, input: &[u8]) -> Result<RunResult, InterpError> {
        let tus = load_sources(&[("i.mc", src)]).unwrap();
        execute(&tus[0], &[], input, "entry")
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn arithmetic_and_loops() {
        let src = "int entry(char *b, size_t n) {\n  int i = 0;\n  int s = 0;\n  while (i < n) { s = s + b[i]; i = i + 1; }\n  return s;\n}\n";
        let r = run_src(src, &[1, 2, 3, 250]).unwrap();
        assert_eq!(r.outcome, Outcome::Ok(256));
        let lines: Vec<u32> = r.slice.lines.iter().map(|(_, l)| *l).collect();
        assert_eq!(lines, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn abort_report_and_stack() {
        let src = "void boom() {\n  abort();\n}\nint entry(char *b, size_t n) {\n  if (n > 1)\n    boom();\n  return 0;\n}\n";
        let r = run_src(src, b"xy").unwrap();
        let Outcome::Crash(rep) = &r.outcome else { panic!("expected crash") };
        assert_eq!(
            render_report(rep),
            "ERROR: MiniSan: abort at i.mc:2:3\n#0 in boom i.mc:2:3\n#1 in entry i.mc:6:5\n"
        );
        for f in &rep.stack {
            assert!(r.slice.contains(&f.file, f.line));
        }
        assert!(!r.slice.contains("i.mc", 7));
    }

    #[test]
    fn assertion_failure() {
        let src = "int entry(char *b, size_t n) {\n  assert(n == 2);\n  return 1;\n}\n";
        assert_eq!(run_src(src, b"ab").unwrap().outcome, Outcome::Ok(1));
        let r = run_src(src, b"a").unwrap();
        assert_eq!(r.crash().unwrap().kind, CrashKind::AssertionFailure);
    }

    #[test]
    fn member_overread_past_short_buffer() {
        let src = "struct h { short a; short b; short len; short c; };\n\
                   int entry(char *b, size_t n) {\n  struct h *p = (struct h *)&b[0];\n  size_t l = p->len;\n  return l;\n}\n";
        assert_eq!(run_src(src, &[0, 0, 0, 0, 7, 1]).unwrap().outcome, Outcome::Ok(263));
        let r = run_src(src, &[1, 2, 3]).unwrap();
        let rep = r.crash().unwrap();
        assert_eq!(rep.kind, CrashKind::BufferOverflowRead);
        assert_eq!((rep.site.line, rep.site.column), (4, 14));
        assert_eq!(rep.stack[0].function, "entry");
        // offset 4, size 2: a 5-byte buffer still faults, 6 bytes do not
        assert!(run_src(src, &[0; 5]).unwrap().crash().is_some());
    }

    #[test]
    fn overflow_write() {
        let src = "int entry(char *b, size_t n) {\n  b[n] = 1;\n  return 0;\n}\n";
        let r = run_src(src, b"abc").unwrap();
        assert_eq!(r.crash().unwrap().kind, CrashKind::BufferOverflowWrite);
    }

    #[test]
    fn local_arrays_and_structs() {
        let src = "struct p { int x; int y; };\n\
                   int entry(char *b, size_t n) {\n  char tmp[4];\n  struct p q;\n  tmp[3] = 9;\n  q.y = tmp[3] + 1;\n  return q.y + q.x;\n}\n";
        assert_eq!(run_src(src, b"").unwrap().outcome, Outcome::Ok(10));
    }

    #[test]
    fn input_and_hash_builtins() {
        let h = format!("{:x}", fnv1a64(b"key"));
        let src = format!(
            "int entry(char *b, size_t n) {{\n  if (hash_eq(b, n, \"{h}\")) return 2;\n  return input_eq(b, n, \"doom\");\n}}\n"
        );
        assert_eq!(run_src(&src, b"doom").unwrap().outcome, Outcome::Ok(1));
        assert_eq!(run_src(&src, b"doo").unwrap().outcome, Outcome::Ok(0));
        assert_eq!(run_src(&src, b"key").unwrap().outcome, Outcome::Ok(2));
    }

    #[test]
    fn uninitialized_locals_are_zero() {
        let src = "int entry(char *b, size_t n) {\n  long x;\n  return x;\n}\n";
        assert_eq!(run_src(src, b"").unwrap().outcome, Outcome::Ok(0));
    }

    #[test]
    fn budget_and_undefined_calls() {
        let spin = "int entry(char *b, size_t n) {\n  while (1) { }\n  return 0;\n}\n";
        assert_eq!(
            run_src(spin, b"").unwrap_err(),
            InterpError::RuntimeLimit { limit: STATEMENT_BUDGET }
        );
        let undefined = "int entry(char *b, size_t n) {\n  memcpy(b, b, n);\n  return 0;\n}\n";
        assert!(matches!(
            run_src(undefined, b"").unwrap_err(),
            InterpError::UndefinedName { .. }
        ));
    }

    #[test]
    fn bad_entry_signature() {
        let src = "int entry(int a) { return a; }";
        assert!(matches!(run_src(src, b"").unwrap_err(), InterpError::BadEntry { .. }));
        assert!(matches!(
            run_src("void f(){}", b"").unwrap_err(),
            InterpError::EntryNotFound { .. }
        ));
    }

    #[test]
    fn integer_conversions() {
        let src = "int entry(char *b, size_t n) {\n  char c = 300;\n  int i = 4294967295;\n  short s = -1;\n  return c + i + s;\n}\n";
        // 300 & 0xff = 44, (int)0xffffffff = -1, (short)-1 zero-extended = 65535
        assert_eq!(run_src(src, b"").unwrap().outcome, Outcome::Ok(44 - 1 + 65535));
    }
}
