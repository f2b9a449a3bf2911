use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::DslError;
use crate::workflow::{Guard, NodeKind, WorkflowGraph};

/// Functional execution plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanExpr {
    Run(String),
    Seq(Vec<PlanExpr>),
    /// Branches mapped in parallel, reduced at `join`.
    Par { fork: String, branches: Vec<PlanExpr>, join: String },
    /// First arm whose guard holds, else `otherwise`.
    Choice { decision: String, arms: Vec<(Guard, PlanExpr)>, otherwise: Box<PlanExpr> },
    /// `body`, then while the decision picks `continue_arm`: `tail`, `body`.
    Loop {
        decision: String,
        guard: Guard,
        continue_arm: usize,
        body: Box<PlanExpr>,
        tail: Box<PlanExpr>,
        max_iterations: u32,
    },
}

impl PlanExpr {
    fn tidy(items: Vec<PlanExpr>) -> PlanExpr {
        if items.len() == 1 {
            items.into_iter().next().unwrap()
        } else {
            PlanExpr::Seq(items)
        }
    }

    /// Activity ids in the order they appear in the plan text.
    pub fn activities(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let PlanExpr::Run(a) = e {
                out.push(a.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanExpr)) {
        f(self);
        match self {
            PlanExpr::Run(_) => {}
            PlanExpr::Seq(xs) => xs.iter().for_each(|x| x.walk(f)),
            PlanExpr::Par { branches, .. } => branches.iter().for_each(|x| x.walk(f)),
            PlanExpr::Choice { arms, otherwise, .. } => {
                arms.iter().for_each(|(_, x)| x.walk(f));
                otherwise.walk(f);
            }
            PlanExpr::Loop { body, tail, .. } => {
                body.walk(f);
                tail.walk(f);
            }
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self {
            PlanExpr::Run(a) => writeln!(f, "{pad}run {a}"),
            PlanExpr::Seq(xs) => {
                writeln!(f, "{pad}seq")?;
                xs.iter().try_for_each(|x| x.write(f, depth + 1))
            }
            PlanExpr::Par { fork, branches, join } => {
                writeln!(f, "{pad}reduce-join {join} (par-map {fork})")?;
                for (i, b) in branches.iter().enumerate() {
                    writeln!(f, "{pad}  branch {i}")?;
                    b.write(f, depth + 2)?;
                }
                Ok(())
            }
            PlanExpr::Choice { decision, arms, otherwise } => {
                writeln!(f, "{pad}choice {decision}")?;
                for (g, x) in arms {
                    writeln!(f, "{pad}  when {g}")?;
                    x.write(f, depth + 2)?;
                }
                writeln!(f, "{pad}  else")?;
                otherwise.write(f, depth + 2)
            }
            PlanExpr::Loop { decision, guard, continue_arm, body, tail, max_iterations } => {
                let cond = if *continue_arm == 0 { format!("{guard}") } else { format!("not ({guard})") };
                writeln!(f, "{pad}loop {decision} while {cond} max {max_iterations}")?;
                writeln!(f, "{pad}  body")?;
                body.write(f, depth + 2)?;
                writeln!(f, "{pad}  tail")?;
                tail.write(f, depth + 2)
            }
        }
    }
}

impl fmt::Display for PlanExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

const EXIT: &str = "\u{0}exit";

struct Translator<'g> {
    g: &'g WorkflowGraph,
    back: BTreeSet<(String, String)>,
    pdom: BTreeMap<&'g str, BTreeSet<&'g str>>,
    max_iterations: u32,
}

fn nsp<T>(why: String) -> Result<T, DslError> {
    Err(DslError::NotSeriesParallel(why))
}

/// Translates a graph into nested sequence, parallel, choice and loop
/// combinators.
pub fn to_functional_plan(g: &WorkflowGraph, max_iterations: u32) -> Result<PlanExpr, DslError> {
    let back = g.back_edges();
    let order = g.topo_order();
    let mut pdom: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for &n in order.iter().rev() {
        let succ: Vec<&str> =
            g.successors(n).into_iter().filter(|s| !back.contains(&(n.to_string(), s.to_string()))).collect();
        let mut set: Option<BTreeSet<&str>> = None;
        if g.node(n).unwrap().kind == NodeKind::Final {
            set = Some([EXIT].into_iter().collect());
        }
        for s in succ {
            let ps = pdom[s].clone();
            set = Some(match set {
                None => ps,
                Some(cur) => cur.intersection(&ps).copied().collect(),
            });
        }
        let mut set = set.unwrap_or_default();
        set.insert(n);
        pdom.insert(n, set);
    }
    let t = Translator { g, back, pdom, max_iterations };
    let start = g.start();
    let first = g.successors(start);
    let items = t.seq_from(first[0], None)?;
    Ok(PlanExpr::Seq(items))
}

impl<'g> Translator<'g> {
    fn ipdom(&self, n: &str) -> Option<&'g str> {
        let set = &self.pdom[n];
        set.iter().copied().filter(|&m| m != n).max_by_key(|&m| if m == EXIT { 0 } else { self.pdom[m].len() })
    }

    fn is_back(&self, a: &str, b: &str) -> bool {
        self.back.contains(&(a.to_string(), b.to_string()))
    }

    fn only_succ(&self, n: &str) -> &'g str {
        self.g.successors(n)[0]
    }

    /// Items from `n` until `stop` (exclusive) or a final node.
    fn seq_from(&self, mut n: &'g str, stop: Option<&str>) -> Result<Vec<PlanExpr>, DslError> {
        let mut items = Vec::new();
        loop {
            if Some(n) == stop {
                return Ok(items);
            }
            let node = self.g.node(n).unwrap();
            match &node.kind {
                NodeKind::Start => return nsp(format!("control returns to start node {n:?}")),
                NodeKind::Final => {
                    if let Some(s) = stop {
                        return nsp(format!("path reaches final {n:?} before {s:?}"));
                    }
                    return Ok(items);
                }
                NodeKind::Activity(_) => {
                    items.push(PlanExpr::Run(n.to_string()));
                    let s = self.only_succ(n);
                    if self.is_back(n, s) {
                        if Some(s) == stop {
                            return Ok(items);
                        }
                        return nsp(format!("unexpected back edge {n} -> {s}"));
                    }
                    n = s;
                }
                NodeKind::Fork => {
                    let join = match self.ipdom(n) {
                        Some(j) if j != EXIT && self.g.node(j).unwrap().kind == NodeKind::Join => j,
                        _ => return nsp(format!("fork {n:?} has no matching join")),
                    };
                    let succ = self.g.successors(n);
                    if self.g.predecessors(join).len() != succ.len() {
                        return nsp(format!("join {join:?} does not close exactly the branches of fork {n:?}"));
                    }
                    let mut branches = Vec::new();
                    for s in succ {
                        branches.push(PlanExpr::tidy(self.seq_from(s, Some(join))?));
                    }
                    items.push(PlanExpr::Par { fork: n.to_string(), branches, join: join.to_string() });
                    n = self.only_succ(join);
                }
                NodeKind::Decision(d) => {
                    let merge = self.ipdom(n);
                    let closes = |m: &str| -> bool {
                        self.g.node(m).unwrap().kind == NodeKind::Merge
                            && self.g.predecessors(m).len() == d.arity()
                            && !self.g.predecessors(m).iter().any(|p| self.is_back(p, m))
                    };
                    let stop_arm = match merge {
                        Some(EXIT) => None,
                        Some(m) if closes(m) => Some(m),
                        _ => return nsp(format!("branches of decision {n:?} do not meet at one merge")),
                    };
                    if stop_arm.is_none() && stop.is_some() {
                        return nsp(format!("decision {n:?} leaves its enclosing block"));
                    }
                    let mut arms = Vec::new();
                    for (guard, t) in &d.branches {
                        arms.push((guard.clone(), PlanExpr::tidy(self.seq_from(t, stop_arm)?)));
                    }
                    let otherwise = Box::new(PlanExpr::tidy(self.seq_from(&d.otherwise, stop_arm)?));
                    items.push(PlanExpr::Choice { decision: n.to_string(), arms, otherwise });
                    match stop_arm {
                        None => return Ok(items),
                        Some(m) => n = self.only_succ(m),
                    }
                }
                NodeKind::Merge => {
                    let preds = self.g.predecessors(n);
                    let backs: Vec<&str> = preds.iter().copied().filter(|p| self.is_back(p, n)).collect();
                    if backs.is_empty() {
                        return nsp(format!("merge {n:?} is not the end of a choice"));
                    }
                    if backs.len() != 1 || preds.len() != 2 {
                        return nsp(format!("loop head {n:?} must have one entry and one back edge"));
                    }
                    let (lp, exit) = self.build_loop(n)?;
                    items.push(lp);
                    n = exit;
                }
                NodeKind::Join => return nsp(format!("join {n:?} closes no enclosing fork")),
            }
        }
    }

    fn build_loop(&self, head: &'g str) -> Result<(PlanExpr, &'g str), DslError> {
        let inside: BTreeSet<&str> = {
            let fwd = self.g.reachable_from(head);
            fwd.into_iter().filter(|m| self.g.reachable_from(m).contains(head)).collect()
        };
        let exits: Vec<&str> = inside
            .iter()
            .copied()
            .filter(|m| self.g.successors(m).iter().any(|s| !inside.contains(s)))
            .collect();
        let decision = match exits[..] {
            [d] => d,
            _ => return nsp(format!("loop at {head:?} needs exactly one exit decision")),
        };
        let dec = match self.g.node(decision).and_then(|x| x.as_decision()) {
            Some(dec) if dec.arity() == 2 => dec,
            _ => return nsp(format!("loop at {head:?} must exit through a two-way decision")),
        };
        let targets: Vec<&str> = dec.targets().collect();
        let continue_arm = match (inside.contains(targets[0]), inside.contains(targets[1])) {
            (true, false) => 0,
            (false, true) => 1,
            _ => return nsp(format!("decision {decision:?} must have one arm inside and one outside the loop")),
        };
        let body = self.seq_from(self.only_succ(head), Some(decision))?;
        let cont = targets[continue_arm];
        let tail = if cont == head { Vec::new() } else { self.seq_from(cont, Some(head))? };
        let lp = PlanExpr::Loop {
            decision: decision.to_string(),
            guard: dec.branches[0].0.clone(),
            continue_arm,
            body: Box::new(PlanExpr::tidy(body)),
            tail: Box::new(PlanExpr::tidy(tail)),
            max_iterations: self.max_iterations,
        };
        Ok((lp, targets[1 - continue_arm]))
    }
}

/// Runs a plan without executing anything: `decide(decision, visit)`
/// returns the chosen arm (branch index, or the branch count for else)
/// for the `visit`-th evaluation of that decision, counting from 0.
/// Returns activity ids in execution order, parallel branches left to right.
pub fn interpret(plan: &PlanExpr, decide: &mut dyn FnMut(&str, u32) -> usize) -> Result<Vec<String>, DslError> {
    let mut visits = BTreeMap::new();
    let mut out = Vec::new();
    run(plan, decide, &mut visits, &mut out)?;
    Ok(out)
}

fn run(
    plan: &PlanExpr,
    decide: &mut dyn FnMut(&str, u32) -> usize,
    visits: &mut BTreeMap<String, u32>,
    out: &mut Vec<String>,
) -> Result<(), DslError> {
    match plan {
        PlanExpr::Run(a) => out.push(a.clone()),
        PlanExpr::Seq(xs) => {
            for x in xs {
                run(x, decide, visits, out)?;
            }
        }
        PlanExpr::Par { branches, .. } => {
            for b in branches {
                run(b, decide, visits, out)?;
            }
        }
        PlanExpr::Choice { decision, arms, otherwise } => {
            let k = choose(decision, decide, visits);
            match arms.get(k) {
                Some((_, x)) => run(x, decide, visits, out)?,
                None => run(otherwise, decide, visits, out)?,
            }
        }
        PlanExpr::Loop { decision, continue_arm, body, tail, max_iterations, .. } => {
            let mut laps = 0;
            run(body, decide, visits, out)?;
            while choose(decision, decide, visits) == *continue_arm {
                laps += 1;
                if laps > *max_iterations {
                    return Err(DslError::IterationLimit(decision.clone()));
                }
                run(tail, decide, visits, out)?;
                run(body, decide, visits, out)?;
            }
        }
    }
    Ok(())
}

fn choose(d: &str, decide: &mut dyn FnMut(&str, u32) -> usize, visits: &mut BTreeMap<String, u32>) -> usize {
    let v = visits.entry(d.to_string()).or_insert(0);
    let k = *v;
    *v += 1;
    decide(d, k)
}
