//! Typed service dependency graph: construction from a unit set, cycle and
//! contradiction diagnostics, boot-critical group isolation, and critical
//! path analysis. Graphs are immutable once built and every analysis is a
//! pure function, so everything here is safe to run concurrently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::unit::{DependencyKind, Diagnostic, Severity, UnitName, UnitSet};

/// Normalized edge kinds. `Before=` and `After=` collapse into a single
/// directional `Ordering` edge pointing from the earlier unit to the later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Strong,
    Weak,
    Ordering,
    WantedBy,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Strong => "strong",
            EdgeKind::Weak => "weak",
            EdgeKind::Ordering => "order",
            EdgeKind::WantedBy => "wantedby",
        }
    }

    /// Hard edges constrain when a unit may run (readiness or start order);
    /// weak edges are best-effort start ordering.
    pub fn is_hard(self) -> bool {
        !matches!(self, EdgeKind::Weak)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized edge. `from` is the prerequisite (must be ready or started
/// first), `to` the dependent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: UnitName,
    pub to: UnitName,
    pub kind: EdgeKind,
}

/// The typed dependency graph over a unit set. Dependency targets that do not
/// resolve become phantom nodes: zero duration, instantly ready.
#[derive(Debug, Clone)]
pub struct ServiceGraph {
    names: Vec<UnitName>,
    index: BTreeMap<UnitName, usize>,
    phantom: Vec<bool>,
    deferred: Vec<bool>,
    edges: Vec<Edge>,
    out: Vec<Vec<(usize, EdgeKind)>>,
    inn: Vec<Vec<(usize, EdgeKind)>>,
}

impl ServiceGraph {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    /// Node names in lexicographic order.
    pub fn nodes(&self) -> &[UnitName] {
        &self.names
    }

    /// Normalized edges, deduplicated, in (from, to, kind) order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, name: &UnitName) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_phantom(&self, name: &UnitName) -> bool {
        self.index.get(name).map_or(false, |&i| self.phantom[i])
    }

    pub fn is_deferred(&self, name: &UnitName) -> bool {
        self.index.get(name).map_or(false, |&i| self.deferred[i])
    }

    pub fn phantoms(&self) -> impl Iterator<Item = &UnitName> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| self.phantom[*i])
            .map(|(_, n)| n)
    }

    /// Incoming edges of a node: the constraints on when it may run.
    pub fn incoming(&self, name: &UnitName) -> impl Iterator<Item = (&UnitName, EdgeKind)> {
        let idx = self.index[name];
        self.inn[idx].iter().map(|&(p, k)| (&self.names[p], k))
    }

    pub fn outgoing(&self, name: &UnitName) -> impl Iterator<Item = (&UnitName, EdgeKind)> {
        let idx = self.index[name];
        self.out[idx].iter().map(|&(s, k)| (&self.names[s], k))
    }
}

/// Build the normalized graph. Deterministic: nodes and edges come out in
/// lexicographic order regardless of input order. Self-edges are dropped
/// here; `validate_unit` already reports them.
pub fn build_graph(set: &UnitSet) -> ServiceGraph {
    let mut node_set: BTreeSet<UnitName> = set.names().cloned().collect();
    for unit in set.units().values() {
        for (_, target) in &unit.deps {
            node_set.insert(target.clone());
        }
    }
    let names: Vec<UnitName> = node_set.into_iter().collect();
    let index: BTreeMap<UnitName, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let phantom: Vec<bool> = names.iter().map(|n| !set.contains(n)).collect();
    let deferred: Vec<bool> = names
        .iter()
        .map(|n| set.get(n).map_or(false, |u| u.deferred))
        .collect();

    let mut edge_set: BTreeSet<Edge> = BTreeSet::new();
    for unit in set.units().values() {
        for (kind, target) in &unit.deps {
            if *target == unit.name {
                continue;
            }
            let (from, to, kind) = match kind {
                DependencyKind::Strong => (target.clone(), unit.name.clone(), EdgeKind::Strong),
                DependencyKind::Weak => (target.clone(), unit.name.clone(), EdgeKind::Weak),
                DependencyKind::OrderBefore => {
                    (unit.name.clone(), target.clone(), EdgeKind::Ordering)
                }
                DependencyKind::OrderAfter => {
                    (target.clone(), unit.name.clone(), EdgeKind::Ordering)
                }
                DependencyKind::WantedBy => {
                    (unit.name.clone(), target.clone(), EdgeKind::WantedBy)
                }
            };
            edge_set.insert(Edge { from, to, kind });
        }
    }
    let edges: Vec<Edge> = edge_set.into_iter().collect();

    let mut out = vec![Vec::new(); names.len()];
    let mut inn = vec![Vec::new(); names.len()];
    for e in &edges {
        let f = index[&e.from];
        let t = index[&e.to];
        out[f].push((t, e.kind));
        inn[t].push((f, e.kind));
    }

    ServiceGraph {
        names,
        index,
        phantom,
        deferred,
        edges,
        out,
        inn,
    }
}

/// One elementary cycle: distinct nodes in walk order, rotated so the
/// lexicographically smallest node comes first. A cycle is an error when it
/// can be composed entirely of hard edges; if it needs a weak edge it is a
/// warning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub nodes: Vec<UnitName>,
    pub severity: Severity,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles: Vec<Cycle>,
    /// True when enumeration stopped at the cap.
    pub truncated: bool,
}

impl CycleReport {
    pub fn has_errors(&self) -> bool {
        self.cycles.iter().any(|c| c.severity == Severity::Error)
    }
}

pub const DEFAULT_CYCLE_CAP: usize = 100;

/// Collapsed arc view: for each (from, to) pair, whether any edge exists and
/// whether a hard edge exists.
struct Arcs {
    adj: Vec<Vec<usize>>,
    hard: BTreeSet<(usize, usize)>,
}

fn collapse_arcs(g: &ServiceGraph) -> Arcs {
    let n = g.node_count();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut hard = BTreeSet::new();
    for e in &g.edges {
        let f = g.index[&e.from];
        let t = g.index[&e.to];
        adj[f].insert(t);
        if e.kind.is_hard() {
            hard.insert((f, t));
        }
    }
    Arcs {
        adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        hard,
    }
}

/// Tarjan strongly-connected components, iterative to keep adversarial
/// graphs off the call stack. Returns the component id per node.
fn sccs(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut ci)) = call.last_mut() {
            if *ci == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ci < adj[v].len() {
                let w = adj[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
                call.pop();
                if let Some(&mut (parent, _)) = call.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    comp
}

/// Johnson-style elementary circuit enumeration inside one SCC, rooted at
/// `start`; only nodes ≥ start are visited so each cycle is found once.
fn circuits_from(
    start: usize,
    adj: &[Vec<usize>],
    comp: &[usize],
    cap: usize,
    cycles: &mut Vec<Vec<usize>>,
) {
    let n = adj.len();
    let mut blocked = vec![false; n];
    let mut block_map: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut path: Vec<usize> = Vec::new();

    fn unblock(v: usize, blocked: &mut [bool], block_map: &mut [BTreeSet<usize>]) {
        blocked[v] = false;
        let waiters: Vec<usize> = block_map[v].iter().copied().collect();
        block_map[v].clear();
        for w in waiters {
            if blocked[w] {
                unblock(w, blocked, block_map);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn circuit(
        v: usize,
        start: usize,
        adj: &[Vec<usize>],
        comp: &[usize],
        blocked: &mut [bool],
        block_map: &mut [BTreeSet<usize>],
        path: &mut Vec<usize>,
        cycles: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        let mut found = false;
        path.push(v);
        blocked[v] = true;
        for &w in &adj[v] {
            if w < start || comp[w] != comp[start] || cycles.len() >= cap {
                continue;
            }
            if w == start {
                cycles.push(path.clone());
                found = true;
            } else if !blocked[w]
                && circuit(w, start, adj, comp, blocked, block_map, path, cycles, cap)
            {
                found = true;
            }
        }
        if found {
            unblock(v, blocked, block_map);
        } else {
            for &w in &adj[v] {
                if w >= start && comp[w] == comp[start] {
                    block_map[w].insert(v);
                }
            }
        }
        path.pop();
        found
    }

    circuit(
        start, start, adj, comp, &mut blocked, &mut block_map, &mut path, cycles, cap,
    );
}

/// Enumerate all elementary cycles up to `cap`, classifying each by whether
/// it survives on hard edges alone.
pub fn detect_cycles_capped(g: &ServiceGraph, cap: usize) -> CycleReport {
    let arcs = collapse_arcs(g);
    let comp = sccs(&arcs.adj);
    let mut raw: Vec<Vec<usize>> = Vec::new();
    for start in 0..g.node_count() {
        if raw.len() >= cap {
            break;
        }
        circuits_from(start, &arcs.adj, &comp, cap, &mut raw);
    }
    let truncated = raw.len() >= cap;

    let mut cycles: Vec<Cycle> = raw
        .into_iter()
        .map(|idx_cycle| {
            let all_hard = idx_cycle
                .iter()
                .zip(idx_cycle.iter().cycle().skip(1))
                .all(|(&a, &b)| arcs.hard.contains(&(a, b)));
            Cycle {
                nodes: idx_cycle.iter().map(|&i| g.names[i].clone()).collect(),
                severity: if all_hard {
                    Severity::Error
                } else {
                    Severity::Warning
                },
            }
        })
        .collect();
    cycles.sort_by(|a, b| (a.nodes.len(), &a.nodes).cmp(&(b.nodes.len(), &b.nodes)));
    CycleReport { cycles, truncated }
}

pub fn detect_cycles(g: &ServiceGraph) -> CycleReport {
    detect_cycles_capped(g, DEFAULT_CYCLE_CAP)
}

/// Report direct order contradictions (both A→B and B→A ordering edges) and
/// strong requirements on deferred units: a unit that something non-deferred
/// requires for booting cannot itself be deferred.
pub fn detect_contradictions(g: &ServiceGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let ordering: BTreeSet<(usize, usize)> = g
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Ordering)
        .map(|e| (g.index[&e.from], g.index[&e.to]))
        .collect();
    for &(a, b) in &ordering {
        if a < b && ordering.contains(&(b, a)) {
            out.push(Diagnostic::error(
                Some(g.names[a].clone()),
                format!(
                    "contradicting order: {} and {} are each declared before the other",
                    g.names[a], g.names[b]
                ),
            ));
        }
    }
    for e in &g.edges {
        if e.kind == EdgeKind::Strong && g.is_deferred(&e.from) && !g.is_deferred(&e.to) {
            out.push(Diagnostic::error(
                Some(e.from.clone()),
                format!(
                    "unit {} is deferred but {} strongly requires it for booting",
                    e.from, e.to
                ),
            ));
        }
    }
    out
}

/// The isolated set of booting-critical units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBGroup {
    pub completion_targets: BTreeSet<UnitName>,
    pub members: BTreeSet<UnitName>,
    /// Edges with both endpoints inside the group.
    pub induced_edges: Vec<Edge>,
    /// Ordering, weak, and wanted-by constraints declared by outsiders
    /// toward members; isolation drops these.
    pub ignored_constraints: Vec<Edge>,
}

impl BBGroup {
    pub fn is_member(&self, name: &UnitName) -> bool {
        self.members.contains(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IsolateError {
    #[error("completion target {0} is not in the graph")]
    UnknownTarget(UnitName),
    #[error("cycle in the isolated closure: {}", .0.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" -> "))]
    CycleInClosure(Vec<UnitName>),
}

/// Compute the boot-critical group: the backward transitive closure of the
/// completion set over strong edges. Ordering and weak constraints never
/// recruit units; constraints from outsiders toward members are recorded as
/// ignored. `include_weak` additionally follows weak edges backward, for
/// experimentation only.
pub fn isolate_bb_group_with(
    g: &ServiceGraph,
    completion: &BTreeSet<UnitName>,
    include_weak: bool,
) -> Result<BBGroup, IsolateError> {
    for t in completion {
        if !g.contains(t) {
            return Err(IsolateError::UnknownTarget(t.clone()));
        }
    }
    let mut members: BTreeSet<usize> = BTreeSet::new();
    let mut work: Vec<usize> = completion.iter().map(|t| g.index[t]).collect();
    while let Some(v) = work.pop() {
        if !members.insert(v) {
            continue;
        }
        for &(p, kind) in &g.inn[v] {
            let recruits = kind == EdgeKind::Strong || (include_weak && kind == EdgeKind::Weak);
            if recruits && !members.contains(&p) {
                work.push(p);
            }
        }
    }

    let member_names: BTreeSet<UnitName> =
        members.iter().map(|&i| g.names[i].clone()).collect();
    let mut induced = Vec::new();
    let mut ignored = Vec::new();
    for e in &g.edges {
        let from_in = member_names.contains(&e.from);
        let to_in = member_names.contains(&e.to);
        if from_in && to_in {
            induced.push(e.clone());
        } else if to_in && !from_in {
            // Strong edges cannot land here: the closure would have
            // recruited the source.
            ignored.push(e.clone());
        }
    }

    // The group must be runnable on its own: hard edges inside it form a DAG.
    if let Some(cycle) = hard_cycle_within(g, &members) {
        return Err(IsolateError::CycleInClosure(
            cycle.into_iter().map(|i| g.names[i].clone()).collect(),
        ));
    }

    Ok(BBGroup {
        completion_targets: completion.clone(),
        members: member_names,
        induced_edges: induced,
        ignored_constraints: ignored,
    })
}

pub fn isolate_bb_group(
    g: &ServiceGraph,
    completion: &BTreeSet<UnitName>,
) -> Result<BBGroup, IsolateError> {
    isolate_bb_group_with(g, completion, false)
}

/// Find one cycle over hard edges restricted to `within` (or the whole graph
/// when `within` is None). Three-color DFS; returns the cycle node indices.
fn hard_cycle(g: &ServiceGraph, within: Option<&BTreeSet<usize>>) -> Option<Vec<usize>> {
    let n = g.node_count();
    let in_scope = |v: usize| within.map_or(true, |s| s.contains(&v));
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let mut color = vec![Color::White; n];
    for root in 0..n {
        if color[root] != Color::White || !in_scope(root) {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        color[root] = Color::Grey;
        while let Some(&mut (v, ref mut ci)) = stack.last_mut() {
            let next = g.out[v]
                .iter()
                .skip(*ci)
                .position(|&(w, k)| k.is_hard() && in_scope(w))
                .map(|off| (*ci + off, g.out[v][*ci + off].0));
            match next {
                Some((pos, w)) => {
                    *ci = pos + 1;
                    match color[w] {
                        Color::Grey => {
                            let mut cycle: Vec<usize> =
                                vec![w];
                            for &(node, _) in stack.iter().rev() {
                                if node == w {
                                    break;
                                }
                                cycle.push(node);
                            }
                            cycle.reverse();
                            return Some(cycle);
                        }
                        Color::White => {
                            color[w] = Color::Grey;
                            stack.push((w, 0));
                        }
                        Color::Black => {}
                    }
                }
                None => {
                    color[v] = Color::Black;
                    stack.pop();
                }
            }
        }
    }
    None
}

fn hard_cycle_within(g: &ServiceGraph, within: &BTreeSet<usize>) -> Option<Vec<usize>> {
    hard_cycle(g, Some(within))
}

/// Whether the hard-edge subgraph is acyclic; returns the offending cycle
/// names otherwise.
pub fn hard_subgraph_cycle(g: &ServiceGraph) -> Option<Vec<UnitName>> {
    hard_cycle(g, None).map(|c| c.into_iter().map(|i| g.names[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalPath {
    pub path: Vec<UnitName>,
    pub length_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("graph has a hard-edge cycle: {}", .0.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(" -> "))]
pub struct CyclicGraph(pub Vec<UnitName>);

/// Longest path over hard edges, weighted by per-unit readiness durations
/// (missing entries count as zero, which covers phantoms). Ties break
/// lexicographically, so the result is deterministic.
pub fn critical_path(
    g: &ServiceGraph,
    durations: &BTreeMap<UnitName, u64>,
) -> Result<CriticalPath, CyclicGraph> {
    if let Some(cycle) = hard_subgraph_cycle(g) {
        return Err(CyclicGraph(cycle));
    }
    let n = g.node_count();
    let dur =
        |v: usize| -> u64 { durations.get(&g.names[v]).copied().unwrap_or(0) };

    // Kahn order with a sorted frontier; node indices are already
    // lexicographic so a BTreeSet frontier pops smallest-name-first. Arcs
    // collapse to one per (from, to) pair so parallel edges count once.
    let mut hard_out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for v in 0..n {
        for &(w, k) in &g.out[v] {
            if k.is_hard() {
                hard_out[v].insert(w);
            }
        }
    }
    let mut indeg = vec![0usize; n];
    for v in 0..n {
        for &w in &hard_out[v] {
            indeg[w] += 1;
        }
    }

    let mut frontier: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut best: Vec<u64> = (0..n).map(dur).collect();
    let mut pred: Vec<Option<usize>> = vec![None; n];
    while let Some(&v) = frontier.iter().next() {
        frontier.remove(&v);
        for &w in &hard_out[v] {
            let cand = best[v] + dur(w);
            let better = cand > best[w]
                || (cand == best[w]
                    && pred[w].map_or(true, |p| g.names[v] < g.names[p]));
            if better {
                best[w] = cand;
                pred[w] = Some(v);
            }
            indeg[w] -= 1;
            if indeg[w] == 0 {
                frontier.insert(w);
            }
        }
    }

    let end = (0..n)
        .max_by(|&a, &b| best[a].cmp(&best[b]).then(g.names[b].cmp(&g.names[a])))
        .ok_or_else(|| CyclicGraph(Vec::new()))?;
    let mut path = Vec::new();
    let mut cur = Some(end);
    while let Some(v) = cur {
        path.push(g.names[v].clone());
        cur = pred[v];
    }
    path.reverse();
    Ok(CriticalPath {
        path,
        length_ms: best[end],
    })
}

/// Edge-list export: one `from<TAB>kind<TAB>to` line per edge, sorted.
pub fn edge_list(g: &ServiceGraph) -> String {
    let mut out = String::new();
    for e in &g.edges {
        out.push_str(&format!("{}\t{}\t{}\n", e.from, e.kind, e.to));
    }
    out
}

/// Graphviz export. Strong edges red, weak green, matching the usual
/// dependency-map color convention; ordering gray, wanted-by blue.
pub fn to_dot(g: &ServiceGraph) -> String {
    let mut out = String::from("digraph units {\n  rankdir=LR;\n");
    for (i, name) in g.names.iter().enumerate() {
        let style = if g.phantom[i] { " style=dashed" } else { "" };
        out.push_str(&format!("  \"{name}\"[{}];\n", style.trim_start()));
    }
    for e in &g.edges {
        let color = match e.kind {
            EdgeKind::Strong => "red",
            EdgeKind::Weak => "green",
            EdgeKind::Ordering => "gray",
            EdgeKind::WantedBy => "blue",
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [color={color}];\n",
            e.from, e.to
        ));
    }
    out.push_str("}\n");
    out
}
