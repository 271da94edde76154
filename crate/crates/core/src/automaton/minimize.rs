//! Reduction of a partial deterministic Moore machine: compatible-pair
//! marking with implication closure, enumeration of compatibles, minimal
//! closed-cover selection (exact branch-and-bound within a configured budget,
//! greedy first-fit with closure repair beyond it), machine rebuild, and
//! grouping of observation symbols with identical transition columns.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{MachineState, MooreMachine, SymbolGroup};

/// Index form of a partial Moore machine, the input to the cover search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialMachine {
    pub num_states: usize,
    pub num_symbols: usize,
    /// Output label id per state.
    pub outputs: Vec<u32>,
    /// (state, symbol) -> state, partial.
    pub transitions: BTreeMap<(usize, usize), usize>,
}

impl PartialMachine {
    pub fn next(&self, state: usize, symbol: usize) -> Option<usize> {
        self.transitions.get(&(state, symbol)).copied()
    }

    /// Per-state transition lists sorted by symbol.
    fn rows(&self) -> Vec<Vec<(usize, usize)>> {
        let mut rows = vec![Vec::new(); self.num_states];
        for (&(s, sym), &n) in &self.transitions {
            rows[s].push((sym, n));
        }
        rows
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    /// Exact search is used when the total number of compatibles does not
    /// exceed this.
    pub compatible_limit: usize,
    /// Branch-and-bound node budget; exceeding it keeps the best cover found.
    pub bb_node_limit: usize,
    /// Closure-repair append budget; exceeding it falls back to the unmerged
    /// machine with a warning.
    pub repair_append_limit: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            compatible_limit: 5000,
            bb_node_limit: 500_000,
            repair_append_limit: 50_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeStats {
    pub mode: String,
    pub original_states: usize,
    pub reduced_states: usize,
    pub original_symbols: usize,
    pub reduced_symbols: usize,
    pub compatible_count: Option<usize>,
    pub bb_nodes: Option<usize>,
    pub warnings: Vec<String>,
}

/// Pairwise compatibility of states, closed under transition implication.
pub struct Compatibility {
    outputs: Vec<u32>,
    incompatible: HashSet<(u32, u32)>,
}

impl Compatibility {
    fn norm(p: usize, q: usize) -> (u32, u32) {
        if p < q {
            (p as u32, q as u32)
        } else {
            (q as u32, p as u32)
        }
    }

    pub fn compatible(&self, p: usize, q: usize) -> bool {
        p == q
            || (self.outputs[p] == self.outputs[q]
                && !self.incompatible.contains(&Self::norm(p, q)))
    }

    pub fn all_compatible(&self, members: &[u32], s: usize) -> bool {
        members.iter().all(|&m| self.compatible(m as usize, s))
    }
}

/// Marks incompatible pairs. States with different outputs are incompatible
/// outright; a pair becomes incompatible when any shared input implies an
/// incompatible pair, propagated to a fixpoint.
pub fn mark_pairs(pm: &PartialMachine) -> Compatibility {
    // Witness lists per symbol.
    let mut per_symbol: Vec<Vec<(usize, usize)>> = vec![Vec::new(); pm.num_symbols];
    for (&(s, sym), &n) in &pm.transitions {
        per_symbol[sym].push((s, n));
    }
    let mut incompatible: HashSet<(u32, u32)> = HashSet::new();
    let mut dependents: HashMap<(u32, u32), Vec<(u32, u32)>> = HashMap::new();
    let mut queue: VecDeque<(u32, u32)> = VecDeque::new();

    for list in &per_symbol {
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                let (p, np) = list[i];
                let (q, nq) = list[j];
                if p == q || pm.outputs[p] != pm.outputs[q] {
                    continue;
                }
                let src = Compatibility::norm(p, q);
                if np == nq {
                    continue;
                }
                if pm.outputs[np] != pm.outputs[nq] {
                    if incompatible.insert(src) {
                        queue.push_back(src);
                    }
                } else {
                    dependents
                        .entry(Compatibility::norm(np, nq))
                        .or_default()
                        .push(src);
                }
            }
        }
    }
    while let Some(pair) = queue.pop_front() {
        if let Some(deps) = dependents.get(&pair) {
            for &d in deps.clone().iter() {
                if incompatible.insert(d) {
                    queue.push_back(d);
                }
            }
        }
    }
    Compatibility {
        outputs: pm.outputs.clone(),
        incompatible,
    }
}

/// Enumerates every compatible (pairwise-compatible state set) up to `cap`.
/// Returns `None` when the cap is exceeded.
fn enumerate_compatibles(pm: &PartialMachine, compat: &Compatibility, cap: usize) -> Option<Vec<Vec<u32>>> {
    if pm.num_states > cap {
        return None;
    }
    let mut result: Vec<Vec<u32>> = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    fn extend(
        start: usize,
        m: usize,
        compat: &Compatibility,
        stack: &mut Vec<u32>,
        result: &mut Vec<Vec<u32>>,
        cap: usize,
    ) -> bool {
        for v in start..m {
            if compat.all_compatible(stack, v) {
                stack.push(v as u32);
                if result.len() >= cap {
                    stack.pop();
                    return false;
                }
                result.push(stack.clone());
                if !extend(v + 1, m, compat, stack, result, cap) {
                    stack.pop();
                    return false;
                }
                stack.pop();
            }
        }
        true
    }
    if extend(0, pm.num_states, compat, &mut stack, &mut result, cap) {
        Some(result)
    } else {
        None
    }
}

/// Image of a class under one symbol: sorted unique successor set.
fn class_image(pm: &PartialMachine, members: &[u32], symbol: usize) -> Vec<u32> {
    let mut image: Vec<u32> = members
        .iter()
        .filter_map(|&s| pm.next(s as usize, symbol).map(|n| n as u32))
        .collect();
    image.sort_unstable();
    image.dedup();
    image
}

fn is_subset(sub: &[u32], sup: &[u32]) -> bool {
    // Both sorted.
    let mut i = 0;
    for &x in sub {
        while i < sup.len() && sup[i] < x {
            i += 1;
        }
        if i >= sup.len() || sup[i] != x {
            return false;
        }
    }
    true
}

/// First-fit grouping by compatibility followed by closure repair. Returns
/// `None` when repair exceeds its budget.
fn greedy_cover(
    pm: &PartialMachine,
    compat: &Compatibility,
    opts: &MinimizeOptions,
) -> Option<Vec<Vec<u32>>> {
    let mut classes: Vec<Vec<u32>> = Vec::new();
    // Classes indexed by output for the first-fit scan.
    let mut by_output: HashMap<u32, Vec<usize>> = HashMap::new();
    for s in 0..pm.num_states {
        let out = pm.outputs[s];
        let mut placed = false;
        if let Some(list) = by_output.get(&out) {
            for &ci in list {
                if compat.all_compatible(&classes[ci], s) {
                    classes[ci].push(s as u32);
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            by_output.entry(out).or_default().push(classes.len());
            classes.push(vec![s as u32]);
        }
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    // Closure repair: every image must be contained in some class; missing
    // images are appended as classes of their own (images of compatibles are
    // compatibles).
    let mut appended = 0usize;
    let mut idx = 0;
    while idx < classes.len() {
        for symbol in 0..pm.num_symbols {
            let image = class_image(pm, &classes[idx], symbol);
            if image.is_empty() {
                continue;
            }
            if classes.iter().any(|c| is_subset(&image, c)) {
                continue;
            }
            appended += 1;
            if appended > opts.repair_append_limit {
                return None;
            }
            classes.push(image);
        }
        idx += 1;
    }
    Some(classes)
}

/// Exact minimal closed cover by branch and bound over all compatibles.
/// `initial_best` must be a valid closed cover (indices into `candidates`).
struct CoverSearch<'a> {
    pm: &'a PartialMachine,
    candidates: &'a [Vec<u32>],
    /// Candidate indices containing each state.
    containing: Vec<Vec<usize>>,
    node_limit: usize,
    nodes: usize,
    truncated: bool,
    best: Vec<usize>,
}

impl<'a> CoverSearch<'a> {
    fn new(pm: &'a PartialMachine, candidates: &'a [Vec<u32>], node_limit: usize, initial_best: Vec<usize>) -> Self {
        let mut containing = vec![Vec::new(); pm.num_states];
        for (i, c) in candidates.iter().enumerate() {
            for &s in c {
                containing[s as usize].push(i);
            }
        }
        Self {
            pm,
            candidates,
            containing,
            node_limit,
            nodes: 0,
            truncated: false,
            best: initial_best,
        }
    }

    fn covering_candidates(&self, obligation: &[u32]) -> Vec<usize> {
        if obligation.len() == 1 {
            return self.containing[obligation[0] as usize].clone();
        }
        // Scan the candidates containing the first member.
        self.containing[obligation[0] as usize]
            .iter()
            .copied()
            .filter(|&i| is_subset(obligation, &self.candidates[i]))
            .collect()
    }

    fn search(&mut self, chosen: &mut Vec<usize>, pending: &[Vec<u32>]) {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.truncated = true;
            return;
        }
        if pending.is_empty() {
            if chosen.len() < self.best.len() {
                self.best = chosen.clone();
            }
            return;
        }
        if chosen.len() + 1 >= self.best.len() {
            return;
        }
        // Fail-first: branch on the obligation with the fewest covering
        // candidates.
        let mut branch_idx = 0;
        let mut branch_opts: Option<Vec<usize>> = None;
        for (i, ob) in pending.iter().enumerate() {
            let opts = self.covering_candidates(ob);
            if branch_opts.as_ref().map(|b| opts.len() < b.len()).unwrap_or(true) {
                branch_idx = i;
                branch_opts = Some(opts);
                if branch_opts.as_ref().unwrap().is_empty() {
                    break;
                }
            }
        }
        let options = branch_opts.unwrap_or_default();
        for cand in options {
            if self.truncated {
                return;
            }
            chosen.push(cand);
            let members = &self.candidates[cand];
            let mut next_pending: Vec<Vec<u32>> = pending
                .iter()
                .enumerate()
                .filter(|(i, ob)| *i != branch_idx && !is_subset(ob, members))
                .map(|(_, ob)| ob.clone())
                .collect();
            // Closure obligations of the newly chosen class.
            for symbol in 0..self.pm.num_symbols {
                let image = class_image(self.pm, members, symbol);
                if image.is_empty() {
                    continue;
                }
                let satisfied = chosen
                    .iter()
                    .any(|&ci| is_subset(&image, &self.candidates[ci]));
                if !satisfied && !next_pending.iter().any(|ob| *ob == image) {
                    next_pending.push(image);
                }
            }
            self.search(chosen, &next_pending);
            chosen.pop();
        }
    }
}

/// Cover selection: exact when the compatible count fits the limit, greedy
/// otherwise. The returned classes are sorted internally; `mode` records the
/// path taken.
fn solve_cover(
    pm: &PartialMachine,
    opts: &MinimizeOptions,
) -> Result<(Vec<Vec<u32>>, String, Option<usize>, Option<usize>, Vec<String>)> {
    let mut warnings = Vec::new();
    let compat = mark_pairs(pm);
    let compatibles = enumerate_compatibles(pm, &compat, opts.compatible_limit);
    match compatibles {
        Some(candidates) => {
            let greedy = greedy_cover(pm, &compat, opts);
            // Map the greedy classes onto candidate indices for the initial bound;
            // singletons always exist among the candidates.
            let index_of: HashMap<&[u32], usize> = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_slice(), i))
                .collect();
            let fallback: Vec<usize> = (0..pm.num_states)
                .map(|s| *index_of.get(&[s as u32][..]).expect("singletons are compatibles"))
                .collect();
            let seed: Vec<usize> = match &greedy {
                Some(classes) => classes
                    .iter()
                    .map(|c| index_of.get(c.as_slice()).copied())
                    .collect::<Option<Vec<_>>>()
                    .unwrap_or(fallback.clone()),
                None => fallback.clone(),
            };
            let mut search = CoverSearch::new(pm, &candidates, opts.bb_node_limit, seed);
            let pending: Vec<Vec<u32>> = (0..pm.num_states as u32).map(|s| vec![s]).collect();
            let mut chosen = Vec::new();
            search.search(&mut chosen, &pending);
            let mode = if search.truncated {
                warnings.push(format!(
                    "branch-and-bound budget of {} nodes exhausted; best cover found so far kept",
                    opts.bb_node_limit
                ));
                "exact-truncated".to_string()
            } else {
                "exact".to_string()
            };
            let classes: Vec<Vec<u32>> = search.best.iter().map(|&i| candidates[i].clone()).collect();
            let nodes = search.nodes;
            Ok((classes, mode, Some(candidates.len()), Some(nodes), warnings))
        }
        None => match greedy_cover(pm, &compat, opts) {
            Some(classes) => Ok((classes, "greedy".to_string(), None, None, warnings)),
            None => {
                warnings.push(format!(
                    "closure repair exceeded {} appended classes; machine left unmerged",
                    opts.repair_append_limit
                ));
                let classes = (0..pm.num_states as u32).map(|s| vec![s]).collect();
                Ok((classes, "unmerged-fallback".to_string(), None, None, warnings))
            }
        },
    }
}

/// Full reduction pipeline on the code-level machine.
pub(super) fn minimize(
    machine: &MooreMachine,
    opts: &MinimizeOptions,
) -> Result<(MooreMachine, MinimizeStats)> {
    // Index form.
    let mut output_ids: HashMap<&crate::nn::TernaryCode, u32> = HashMap::new();
    let mut outputs = Vec::with_capacity(machine.states.len());
    for s in &machine.states {
        let next = output_ids.len() as u32;
        let id = *output_ids.entry(&s.output).or_insert(next);
        outputs.push(id);
    }
    let pm = PartialMachine {
        num_states: machine.states.len(),
        num_symbols: machine.symbols.len(),
        outputs,
        transitions: machine.transitions.clone(),
    };

    let (mut classes, mode, compatible_count, bb_nodes, mut warnings) = solve_cover(&pm, opts)?;
    if classes.len() >= pm.num_states {
        // A cover no smaller than the machine itself: keep the original
        // partition so the state count never grows.
        classes = (0..pm.num_states as u32).map(|s| vec![s]).collect();
        if classes.len() > 1 {
            warnings.push("cover did not reduce the state count; keeping original states".into());
        }
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    // Deterministic class order: by earliest member (states are first-visit
    // ordered), larger classes first on ties.
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = (classes[a][0], usize::MAX - classes[a].len(), &classes[a]);
        let kb = (classes[b][0], usize::MAX - classes[b].len(), &classes[b]);
        ka.cmp(&kb)
    });
    let classes: Vec<Vec<u32>> = order.into_iter().map(|i| classes[i].clone()).collect();

    // Home class of each original state: first class containing it.
    let mut home = vec![usize::MAX; pm.num_states];
    for (ci, c) in classes.iter().enumerate() {
        for &s in c {
            if home[s as usize] == usize::MAX {
                home[s as usize] = ci;
            }
        }
    }
    if home.iter().any(|&h| h == usize::MAX) {
        return Err(Error::DataIntegrity("cover misses a state".into()));
    }

    // Merged states.
    let mut states = Vec::with_capacity(classes.len());
    for c in &classes {
        let mut members = Vec::new();
        for &s in c {
            members.extend(machine.states[s as usize].members.iter().cloned());
        }
        let first = &machine.states[c[0] as usize];
        debug_assert!(c
            .iter()
            .all(|&s| machine.states[s as usize].output == first.output));
        states.push(MachineState {
            members,
            output: first.output.clone(),
            decoded_action: first.decoded_action,
        });
    }

    // Merged transitions: target is the first class containing the image.
    let mut transitions: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ci, c) in classes.iter().enumerate() {
        for symbol in 0..pm.num_symbols {
            let image = class_image(&pm, c, symbol);
            if image.is_empty() {
                continue;
            }
            let target = classes
                .iter()
                .position(|cand| is_subset(&image, cand))
                .ok_or_else(|| Error::DataIntegrity("closure violated in final cover".into()))?;
            transitions.insert((ci, symbol), target);
        }
    }
    let initial = home[machine.initial];

    // Observation merging: group symbols whose transition columns over the
    // merged states are identical.
    let mut column_groups: HashMap<Vec<Option<usize>>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for symbol in 0..pm.num_symbols {
        let column: Vec<Option<usize>> = (0..classes.len())
            .map(|ci| transitions.get(&(ci, symbol)).copied())
            .collect();
        match column_groups.get(&column) {
            Some(&g) => groups[g].push(symbol),
            None => {
                column_groups.insert(column, groups.len());
                groups.push(vec![symbol]);
            }
        }
    }
    let mut symbol_remap = vec![usize::MAX; pm.num_symbols];
    let symbols: Vec<SymbolGroup> = groups
        .iter()
        .enumerate()
        .map(|(gi, members)| {
            let mut all = Vec::new();
            for &old in members {
                symbol_remap[old] = gi;
                all.extend(machine.symbols[old].members.iter().cloned());
            }
            SymbolGroup { members: all }
        })
        .collect();
    let mut merged_transitions: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&(ci, old_sym), &target) in &transitions {
        merged_transitions.insert((ci, symbol_remap[old_sym]), target);
    }

    let reduced = MooreMachine {
        states,
        symbols,
        transitions: merged_transitions,
        initial,
    };
    let stats = MinimizeStats {
        mode,
        original_states: machine.states.len(),
        reduced_states: reduced.states.len(),
        original_symbols: machine.symbols.len(),
        reduced_symbols: reduced.symbols.len(),
        compatible_count,
        bb_nodes,
        warnings,
    };
    Ok((reduced, stats))
}

#[cfg(test)]
mod tests {
    use super::super::reference;
    use super::*;

    fn machine(
        outputs: Vec<u32>,
        num_symbols: usize,
        edges: &[(usize, usize, usize)],
    ) -> PartialMachine {
        let transitions = edges.iter().map(|&(s, o, n)| ((s, o), n)).collect();
        PartialMachine {
            num_states: outputs.len(),
            num_symbols,
            outputs,
            transitions,
        }
    }

    fn cover_size(pm: &PartialMachine) -> usize {
        let (classes, ..) = solve_cover(pm, &MinimizeOptions::default()).unwrap();
        classes.len().min(pm.num_states)
    }

    #[test]
    fn identical_rows_merge() {
        // Two states, same output, same specified transitions.
        let pm = machine(vec![0, 0, 1], 2, &[(0, 0, 2), (1, 0, 2), (2, 1, 0)]);
        assert_eq!(cover_size(&pm), 2);
    }

    #[test]
    fn four_state_machine_with_two_state_cover() {
        // Classes {0,1} and {2,3}: images chain into each other.
        let pm = machine(
            vec![0, 0, 1, 1],
            2,
            &[(0, 0, 2), (1, 0, 3), (2, 1, 0), (3, 1, 1)],
        );
        assert_eq!(cover_size(&pm), 2);
        assert_eq!(reference::brute_force_minimal_cover_size(&pm), 2);
    }

    #[test]
    fn incompatible_outputs_never_merge() {
        let pm = machine(vec![0, 1, 2], 1, &[]);
        assert_eq!(cover_size(&pm), 3);
    }

    #[test]
    fn implication_chain_marks_pairs() {
        // 0 and 1 share an output, but their successors under symbol 0
        // disagree in output, so they are incompatible.
        let pm = machine(vec![0, 0, 1, 2], 1, &[(0, 0, 2), (1, 0, 3)]);
        let compat = mark_pairs(&pm);
        assert!(!compat.compatible(0, 1));
        assert_eq!(cover_size(&pm), 4);
    }

    #[test]
    fn exact_search_matches_brute_force_on_random_machines() {
        for seed in 0..60 {
            let pm = reference::random_machine(seed, 6, 4, 3, 0.6);
            let ours = cover_size(&pm);
            let brute = reference::brute_force_minimal_cover_size(&pm);
            assert_eq!(ours, brute, "seed {seed}: ours {ours}, brute {brute}");
        }
    }

    #[test]
    fn greedy_path_produces_a_valid_closed_cover() {
        // Force the greedy path with a tiny compatible limit.
        let opts = MinimizeOptions {
            compatible_limit: 1,
            ..Default::default()
        };
        for seed in 0..20 {
            let pm = reference::random_machine(seed, 12, 4, 3, 0.5);
            let (classes, mode, ..) = solve_cover(&pm, &opts).unwrap();
            assert_eq!(mode, "greedy");
            assert!(reference::is_closed_cover(&pm, &classes), "seed {seed}");
            assert!(classes.len() <= pm.num_states + pm.num_symbols * classes.len());
        }
    }
}
