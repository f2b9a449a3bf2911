use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex, Spanned, Tok};
use super::DslError;
use crate::quantities::{ExtractionSpec, Unit};
use crate::workflow::{
    build_graph, Activity, Binding, CmpOp, Decision, Guard, Node, NodeKind, ObjectFlow, WorkflowGraph,
};

/// Parses workflow source into a validated graph.
pub fn parse(src: &str) -> Result<WorkflowGraph, DslError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, decls: BTreeMap::new(), edges: Vec::new(), flows: Vec::new(), refs: Vec::new(), uses: Vec::new() };
    let name = p.workflow()?;
    p.finish(&name)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    decls: BTreeMap<String, (NodeKind, usize)>,
    edges: Vec<(String, String)>,
    flows: Vec<ObjectFlow>,
    refs: Vec<String>,
    /// Node references with the line they appear on.
    uses: Vec<(String, usize)>,
}

const STATEMENT_KEYWORDS: [&str; 8] = ["cite", "initial", "final", "activity", "fork", "join", "merge", "decision"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, DslError> {
        let t = &self.toks[self.pos];
        Err(DslError::Syntax { line: t.line, col: t.col, expected: expected.into(), found: t.tok.describe() })
    }

    fn semantic<T>(&self, line: usize, message: String) -> Result<T, DslError> {
        Err(DslError::Semantic { line, message })
    }

    fn punct(&mut self, c: char) -> Result<(), DslError> {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_separators(&mut self) {
        while matches!(self.peek(), Tok::Punct(';') | Tok::Punct(',')) {
            self.bump();
        }
    }

    fn arrow(&mut self) -> Result<(), DslError> {
        if *self.peek() == Tok::Arrow {
            self.bump();
            Ok(())
        } else {
            self.fail("`->`")
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, DslError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn node_ref(&mut self) -> Result<String, DslError> {
        let line = self.line();
        let id = self.ident("node identifier")?;
        self.uses.push((id.clone(), line));
        Ok(id)
    }

    fn string(&mut self, what: &str) -> Result<String, DslError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    /// An identifier or a quoted string.
    fn name(&mut self, what: &str) -> Result<String, DslError> {
        match self.peek().clone() {
            Tok::Str(s) | Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn id_list(&mut self) -> Result<Vec<String>, DslError> {
        self.punct('(')?;
        let mut out = vec![self.node_ref()?];
        while self.eat_punct(',') {
            out.push(self.node_ref()?);
        }
        self.punct(')')?;
        Ok(out)
    }

    fn name_list(&mut self) -> Result<Vec<String>, DslError> {
        self.punct('[')?;
        let mut out = Vec::new();
        if !self.eat_punct(']') {
            out.push(self.name("list item")?);
            while self.eat_punct(',') {
                out.push(self.name("list item")?);
            }
            self.punct(']')?;
        }
        Ok(out)
    }

    fn declare(&mut self, id: String, kind: NodeKind, line: usize) -> Result<(), DslError> {
        if let Some((_, first)) = self.decls.get(&id) {
            return self.semantic(line, format!("node {id:?} already declared on line {first}"));
        }
        self.decls.insert(id, (kind, line));
        Ok(())
    }

    fn workflow(&mut self) -> Result<String, DslError> {
        self.keyword("workflow")?;
        let name = self.string("workflow name string")?;
        self.punct('{')?;
        loop {
            self.eat_separators();
            if self.eat_punct('}') {
                break;
            }
            self.statement()?;
        }
        if *self.peek() != Tok::Eof {
            return self.fail("end of input");
        }
        Ok(name)
    }

    fn statement(&mut self) -> Result<(), DslError> {
        let line = self.line();
        let kw = match self.peek() {
            Tok::Ident(s) if STATEMENT_KEYWORDS.contains(&s.as_str()) && *self.peek2() != Tok::Arrow => s.clone(),
            Tok::Ident(_) => return self.edge_statement(),
            _ => return self.fail("statement"),
        };
        self.bump();
        match kw.as_str() {
            "cite" => {
                let r = self.string("citation string")?;
                self.refs.push(r);
            }
            "initial" => {
                let id = self.ident("start node identifier")?;
                self.declare(id, NodeKind::Start, line)?;
            }
            "final" => {
                let id = self.ident("final node identifier")?;
                self.declare(id, NodeKind::Final, line)?;
                while self.eat_punct(',') {
                    let id = self.ident("final node identifier")?;
                    self.declare(id, NodeKind::Final, line)?;
                }
            }
            "activity" => self.activity(line)?,
            "fork" => {
                let id = self.ident("fork identifier")?;
                self.declare(id.clone(), NodeKind::Fork, line)?;
                if self.eat_keyword("after") {
                    let p = self.node_ref()?;
                    self.edges.push((p, id.clone()));
                }
                if self.eat_keyword("into") {
                    for t in self.id_list()? {
                        self.edges.push((id.clone(), t));
                    }
                }
            }
            "join" | "merge" => {
                let id = self.ident(&format!("{kw} identifier"))?;
                let kind = if kw == "join" { NodeKind::Join } else { NodeKind::Merge };
                self.declare(id.clone(), kind, line)?;
                if self.eat_keyword("waits") {
                    for s in self.id_list()? {
                        self.edges.push((s, id.clone()));
                    }
                }
                if *self.peek() == Tok::Arrow {
                    self.bump();
                    let t = self.node_ref()?;
                    self.edges.push((id, t));
                }
            }
            "decision" => self.decision(line)?,
            _ => unreachable!(),
        }
        Ok(())
    }

    fn edge_statement(&mut self) -> Result<(), DslError> {
        let mut from = self.node_ref()?;
        self.arrow()?;
        loop {
            let to = self.node_ref()?;
            self.edges.push((from, to.clone()));
            if *self.peek() != Tok::Arrow {
                break;
            }
            self.bump();
            from = to;
        }
        Ok(())
    }

    fn activity(&mut self, line: usize) -> Result<(), DslError> {
        let id = self.ident("activity identifier")?;
        self.punct('{')?;
        let mut a = Activity::new(Binding::default());
        let mut seen = BTreeSet::new();
        loop {
            self.eat_separators();
            if self.eat_punct('}') {
                break;
            }
            let field_line = self.line();
            const FIELDS: [&str; 7] = ["program", "actuator", "capabilities", "params", "inputs", "outputs", "cite"];
            if !matches!(self.peek(), Tok::Ident(f) if FIELDS.contains(&f.as_str())) {
                return self.fail("activity field or `}`");
            }
            let field = self.ident("activity field")?;
            if !seen.insert(field.clone()) {
                return self.semantic(field_line, format!("field `{field}` repeated in activity {id:?}"));
            }
            match field.as_str() {
                "program" => {
                    self.punct(':')?;
                    a.binding.program = Some(self.string("program name string")?);
                }
                "actuator" => {
                    self.punct(':')?;
                    a.binding.actuator = Some(self.string("resource id string")?);
                }
                "capabilities" => {
                    self.punct(':')?;
                    a.binding.capabilities = self.name_list()?.into_iter().collect();
                }
                "outputs" => {
                    self.punct(':')?;
                    a.outputs = self.name_list()?;
                }
                "cite" => {
                    self.punct(':')?;
                    a.cite = Some(self.string("citation string")?);
                }
                "params" => {
                    self.eat_punct(':');
                    self.punct('{')?;
                    loop {
                        self.eat_separators();
                        if self.eat_punct('}') {
                            break;
                        }
                        let kline = self.line();
                        let k = self.name("parameter name")?;
                        self.punct(':')?;
                        let v = self.string("parameter value string")?;
                        if a.params.insert(k.clone(), v).is_some() {
                            return self.semantic(kline, format!("parameter {k:?} repeated in activity {id:?}"));
                        }
                    }
                }
                "inputs" => {
                    self.eat_punct(':');
                    self.punct('{')?;
                    loop {
                        self.eat_separators();
                        if self.eat_punct('}') {
                            break;
                        }
                        let sline = self.line();
                        let slot = self.ident("input slot name")?;
                        if *self.peek() != Tok::LArrow {
                            return self.fail("`<-`");
                        }
                        self.bump();
                        let producer = self.node_ref()?;
                        self.punct('{')?;
                        let mut wanted = Vec::new();
                        loop {
                            self.eat_separators();
                            if self.eat_punct('}') {
                                break;
                            }
                            let oline = self.line();
                            let obs = self.name("observable name")?;
                            self.punct(':')?;
                            let unit = self.string("unit string")?;
                            let unit = Unit::parse(&unit)
                                .or_else(|e| self.semantic(oline, e.to_string()))?;
                            wanted.push((obs, unit));
                        }
                        let spec = ExtractionSpec::new(wanted).or_else(|e| self.semantic(sline, e.to_string()))?;
                        self.flows.push(ObjectFlow { producer, consumer: id.clone(), slot, spec });
                    }
                }
                _ => unreachable!(),
            }
        }
        self.declare(id, NodeKind::Activity(a), line)
    }

    fn decision(&mut self, line: usize) -> Result<(), DslError> {
        let id = self.ident("decision identifier")?;
        if self.eat_keyword("after") {
            let p = self.node_ref()?;
            self.edges.push((p, id.clone()));
        }
        self.punct('{')?;
        let mut branches = Vec::new();
        let otherwise;
        loop {
            self.eat_separators();
            if self.eat_keyword("when") {
                let gline = self.line();
                let obs = self.name("guard observable")?;
                let (op, negate) = match self.peek().clone() {
                    Tok::Op(o) => {
                        self.bump();
                        (CmpOp::parse(o).unwrap(), false)
                    }
                    // `x <-1` lexes as `<-`, `1`.
                    Tok::LArrow => {
                        self.bump();
                        (CmpOp::Lt, true)
                    }
                    _ => return self.fail("comparison operator"),
                };
                let literal = match self.bump() {
                    Tok::Num(n) if negate => -n,
                    Tok::Num(n) => n,
                    _ => {
                        self.pos -= 1;
                        return self.fail("number");
                    }
                };
                let unit = match self.peek().clone() {
                    Tok::Str(u) => {
                        self.bump();
                        u
                    }
                    _ => "1".to_string(),
                };
                let guard = Guard::new(&obs, op, literal, &unit).or_else(|e| self.semantic(gline, e.to_string()))?;
                self.arrow()?;
                let t = self.node_ref()?;
                branches.push((guard, t));
            } else if self.eat_keyword("else") {
                self.arrow()?;
                otherwise = self.node_ref()?;
                self.eat_separators();
                self.punct('}')?;
                break;
            } else {
                return self.fail("`when` or `else`");
            }
        }
        if branches.is_empty() {
            return self.semantic(line, format!("decision {id:?} needs at least one `when` branch"));
        }
        self.declare(id, NodeKind::Decision(Decision { branches, otherwise }), line)
    }

    fn finish(mut self, name: &str) -> Result<WorkflowGraph, DslError> {
        let uses = std::mem::take(&mut self.uses);
        for (id, line) in uses {
            if self.decls.contains_key(&id) {
                continue;
            }
            let kind = match id.as_str() {
                "start" => NodeKind::Start,
                "end" => NodeKind::Final,
                _ => return self.semantic(line, format!("undeclared node {id:?}")),
            };
            self.decls.insert(id, (kind, line));
        }
        for (a, b) in &self.edges {
            if matches!(self.decls.get(a), Some((NodeKind::Decision(d), line)) if !d.targets().any(|t| t == b)) {
                let line = self.decls[a].1;
                return self.semantic(line, format!("edge {a} -> {b} leaves decision {a:?} without a guard"));
            }
        }
        let nodes = self.decls.into_iter().map(|(id, (kind, _))| Node { id, kind }).collect();
        build_graph(name, nodes, self.edges, self.flows, self.refs).map_err(DslError::Graph)
    }
}
