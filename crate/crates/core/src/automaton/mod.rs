//! Moore machine extraction from quantized rollouts and its reduction as an
//! incompletely specified sequential machine.
//!
//! States are the unique hidden codes, observation symbols are the unique
//! (observation code, previous action code) pairs, and each state is labeled
//! with the action code the policy emits there. Only witnessed transitions
//! exist, so the machine is partial; `minimize` groups states and symbols
//! under the compatibility relation while preserving the output sequence of
//! every recorded episode.

mod minimize;
pub mod reference;

pub use minimize::{MinimizeOptions, MinimizeStats, PartialMachine};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TernaryCode;
use crate::sim::Trajectory;

/// Observation symbol keying transitions: the quantized observation paired
/// with the code of the previously applied action. The first step of an
/// episode has no previous action, which is its own distinguished symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObsSymbol {
    pub obs: TernaryCode,
    pub prev_action: Option<TernaryCode>,
}

/// One witnessed transition: from `hidden` the machine read
/// `(obs, prev_action)`, moved to `next_hidden`, and emitted `action` there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub hidden: TernaryCode,
    pub obs: TernaryCode,
    pub prev_action: Option<TernaryCode>,
    pub action: TernaryCode,
    pub next_hidden: TernaryCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTransitions {
    pub episode_id: usize,
    pub records: Vec<TransitionRecord>,
}

/// Everything extracted from a batch of fully quantized rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub episodes: Vec<EpisodeTransitions>,
    /// Code of the start state (the encoded zero memory); identical in every
    /// episode.
    pub initial_hidden: TernaryCode,
    /// Output label of the start state: the action code the policy associates
    /// with the start memory.
    pub initial_output: TernaryCode,
    /// Decoded (continuous, clamped) action per witnessed action code.
    pub action_decode: BTreeMap<TernaryCode, [f64; 3]>,
}

impl TransitionDataset {
    /// Builds the dataset from trajectories that carry codes on every step.
    pub fn from_trajectories(
        trajectories: &[Trajectory],
        initial_hidden: TernaryCode,
        initial_output: TernaryCode,
        initial_decoded_action: [f64; 3],
    ) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::DataIntegrity("empty trajectory set".into()));
        }
        let mut episodes = Vec::with_capacity(trajectories.len());
        let mut action_decode: BTreeMap<TernaryCode, [f64; 3]> = BTreeMap::new();
        action_decode.insert(initial_output.clone(), initial_decoded_action);
        for (episode_id, traj) in trajectories.iter().enumerate() {
            let mut records = Vec::with_capacity(traj.steps.len());
            let mut prev_hidden = initial_hidden.clone();
            let mut prev_action_code: Option<TernaryCode> = None;
            for (t, step) in traj.steps.iter().enumerate() {
                let (obs, action, hidden) = match (&step.obs_code, &step.action_code, &step.hidden_code) {
                    (Some(o), Some(a), Some(h)) => (o.clone(), a.clone(), h.clone()),
                    _ => {
                        return Err(Error::DataIntegrity(format!(
                            "episode {episode_id} step {t} is missing quantized codes"
                        )))
                    }
                };
                if let Some(existing) = action_decode.get(&action) {
                    if *existing != step.action {
                        return Err(Error::DataIntegrity(format!(
                            "action code {action} decodes to both {existing:?} and {:?}",
                            step.action
                        )));
                    }
                } else {
                    action_decode.insert(action.clone(), step.action);
                }
                records.push(TransitionRecord {
                    hidden: prev_hidden.clone(),
                    obs,
                    prev_action: prev_action_code.clone(),
                    action: action.clone(),
                    next_hidden: hidden.clone(),
                });
                prev_hidden = hidden;
                prev_action_code = Some(action);
            }
            episodes.push(EpisodeTransitions {
                episode_id,
                records,
            });
        }
        let dataset = Self {
            episodes,
            initial_hidden,
            initial_output,
            action_decode,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Checks the chaining invariants: records chain next-to-hidden, and all
    /// episodes start at the same initial hidden code.
    pub fn validate(&self) -> Result<()> {
        for ep in &self.episodes {
            if let Some(first) = ep.records.first() {
                if first.hidden != self.initial_hidden {
                    return Err(Error::DataIntegrity(format!(
                        "episode {} starts at {} instead of the initial code {}",
                        ep.episode_id, first.hidden, self.initial_hidden
                    )));
                }
                if first.prev_action.is_some() {
                    return Err(Error::DataIntegrity(format!(
                        "episode {} has a previous action before its first step",
                        ep.episode_id
                    )));
                }
            }
            for (t, pair) in ep.records.windows(2).enumerate() {
                if pair[0].next_hidden != pair[1].hidden {
                    return Err(Error::DataIntegrity(format!(
                        "episode {} breaks the hidden chain between steps {t} and {}",
                        ep.episode_id,
                        t + 1
                    )));
                }
                if pair[1].prev_action.as_ref() != Some(&pair[0].action) {
                    return Err(Error::DataIntegrity(format!(
                        "episode {} breaks the action chain between steps {t} and {}",
                        ep.episode_id,
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.records.len()).sum()
    }
}

/// One machine state: a group of hidden codes sharing an output label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    /// Member hidden codes in first-visit order.
    pub members: Vec<TernaryCode>,
    /// Action code emitted at this state.
    pub output: TernaryCode,
    /// Clamped continuous action the output code decodes to.
    pub decoded_action: Option<[f64; 3]>,
}

/// One observation symbol group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolGroup {
    pub members: Vec<ObsSymbol>,
}

/// Deterministic, partially specified Moore machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooreMachine {
    pub states: Vec<MachineState>,
    pub symbols: Vec<SymbolGroup>,
    /// (state, symbol) -> state, only where witnessed.
    pub transitions: BTreeMap<(usize, usize), usize>,
    pub initial: usize,
}

impl MooreMachine {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols.len()
    }

    /// Member-symbol to group-index lookup.
    pub fn symbol_lookup(&self) -> HashMap<&ObsSymbol, usize> {
        let mut map = HashMap::new();
        for (i, g) in self.symbols.iter().enumerate() {
            for s in &g.members {
                map.insert(s, i);
            }
        }
        map
    }

    /// Member-code to state-index lookup.
    pub fn state_lookup(&self) -> HashMap<&TernaryCode, usize> {
        let mut map = HashMap::new();
        for (i, st) in self.states.iter().enumerate() {
            for c in &st.members {
                map.entry(c).or_insert(i);
            }
        }
        map
    }

    pub fn step(&self, state: usize, symbol: usize) -> Option<usize> {
        self.transitions.get(&(state, symbol)).copied()
    }

    /// Relabeling-independent canonical form: states keyed by their sorted
    /// member codes, symbols by their sorted members, transitions re-indexed.
    /// Two machines built from permuted episode sets serialize identically
    /// here when they are isomorphic.
    pub fn canonical_signature(&self) -> String {
        let mut state_keys: Vec<(String, usize)> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut members: Vec<String> = s.members.iter().map(|c| c.compact()).collect();
                members.sort();
                (members.join(","), i)
            })
            .collect();
        state_keys.sort();
        let state_rank: BTreeMap<usize, usize> = state_keys
            .iter()
            .enumerate()
            .map(|(rank, (_, i))| (*i, rank))
            .collect();
        let mut symbol_keys: Vec<(String, usize)> = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut members: Vec<String> = g
                    .members
                    .iter()
                    .map(|s| {
                        format!(
                            "{}/{}",
                            s.obs.compact(),
                            s.prev_action.as_ref().map(|c| c.compact()).unwrap_or_else(|| "start".into())
                        )
                    })
                    .collect();
                members.sort();
                (members.join(","), i)
            })
            .collect();
        symbol_keys.sort();
        let symbol_rank: BTreeMap<usize, usize> = symbol_keys
            .iter()
            .enumerate()
            .map(|(rank, (_, i))| (*i, rank))
            .collect();

        #[derive(Serialize)]
        struct Canon {
            states: Vec<(String, String)>,
            symbols: Vec<String>,
            transitions: Vec<(usize, usize, usize)>,
            initial: usize,
        }
        let states = state_keys
            .iter()
            .map(|(key, i)| (key.clone(), self.states[*i].output.compact()))
            .collect();
        let symbols = symbol_keys.iter().map(|(k, _)| k.clone()).collect();
        let mut transitions: Vec<(usize, usize, usize)> = self
            .transitions
            .iter()
            .map(|(&(s, o), &n)| (state_rank[&s], symbol_rank[&o], state_rank[&n]))
            .collect();
        transitions.sort();
        let canon = Canon {
            states,
            symbols,
            transitions,
            initial: state_rank[&self.initial],
        };
        serde_json::to_string(&canon).expect("canonical form serializes")
    }

    /// Graphviz export. States are labeled with their decoded action;
    /// states whose action sits at the saturation rail on every axis are
    /// filled.
    pub fn to_dot(&self, control_upper: [f64; 3], saturation_cutoff: f64) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "digraph moore {{").unwrap();
        writeln!(out, "  rankdir=LR;").unwrap();
        writeln!(out, "  node [shape=circle fontsize=10];").unwrap();
        for (i, s) in self.states.iter().enumerate() {
            let action = s
                .decoded_action
                .map(|a| format!("[{:.2}, {:.2}, {:.2}]", a[0], a[1], a[2]))
                .unwrap_or_else(|| s.output.compact());
            let saturated = s.decoded_action.map_or(false, |a| {
                (0..3).all(|k| a[k].abs() >= saturation_cutoff * control_upper[k])
            });
            let style = if saturated {
                " style=filled fillcolor=lightsalmon"
            } else {
                ""
            };
            let shape = if i == self.initial { " shape=doublecircle" } else { "" };
            writeln!(out, "  s{i} [label=\"s{i}\\n{action}\"{style}{shape}];").unwrap();
        }
        for (&(from, sym), &to) in &self.transitions {
            writeln!(out, "  s{from} -> s{to} [label=\"o{sym}\" fontsize=8];").unwrap();
        }
        writeln!(out, "}}").unwrap();
        out
    }
}

/// Builds the unreduced machine: one state per unique hidden code, one symbol
/// per unique (observation, previous action) pair, outputs and transitions
/// exactly as witnessed. Output conflicts and transition nondeterminism are
/// data-integrity errors.
pub fn build_mmn(data: &TransitionDataset) -> Result<MooreMachine> {
    data.validate()?;
    if data.episodes.iter().all(|e| e.records.is_empty()) {
        return Err(Error::DataIntegrity("dataset contains no transitions".into()));
    }

    let mut state_ids: HashMap<TernaryCode, usize> = HashMap::new();
    let mut state_codes: Vec<TernaryCode> = Vec::new();
    let intern_state = |code: &TernaryCode, codes: &mut Vec<TernaryCode>, ids: &mut HashMap<TernaryCode, usize>| -> usize {
        if let Some(&i) = ids.get(code) {
            i
        } else {
            let i = codes.len();
            codes.push(code.clone());
            ids.insert(code.clone(), i);
            i
        }
    };
    let initial = intern_state(&data.initial_hidden, &mut state_codes, &mut state_ids);

    let mut symbol_ids: HashMap<ObsSymbol, usize> = HashMap::new();
    let mut symbol_list: Vec<ObsSymbol> = Vec::new();
    let mut outputs: Vec<Option<TernaryCode>> = vec![None];
    outputs[initial] = Some(data.initial_output.clone());

    let mut transitions: BTreeMap<(usize, usize), usize> = BTreeMap::new();

    for ep in &data.episodes {
        for (t, rec) in ep.records.iter().enumerate() {
            let from = intern_state(&rec.hidden, &mut state_codes, &mut state_ids);
            let to = intern_state(&rec.next_hidden, &mut state_codes, &mut state_ids);
            while outputs.len() < state_codes.len() {
                outputs.push(None);
            }
            match &outputs[to] {
                Some(existing) if *existing != rec.action => {
                    return Err(Error::DataIntegrity(format!(
                        "output conflict at hidden code {}: episode {} step {t} emits {} but {} was already recorded",
                        rec.next_hidden, ep.episode_id, rec.action, existing
                    )));
                }
                Some(_) => {}
                None => outputs[to] = Some(rec.action.clone()),
            }
            let sym = ObsSymbol {
                obs: rec.obs.clone(),
                prev_action: rec.prev_action.clone(),
            };
            let sym_id = if let Some(&i) = symbol_ids.get(&sym) {
                i
            } else {
                let i = symbol_list.len();
                symbol_list.push(sym.clone());
                symbol_ids.insert(sym, i);
                i
            };
            match transitions.get(&(from, sym_id)) {
                Some(&existing) if existing != to => {
                    return Err(Error::DataIntegrity(format!(
                        "nondeterministic transition from state {} on symbol {}: episode {} step {t} goes to {} but {} was already recorded",
                        state_codes[from], sym_id, ep.episode_id, state_codes[to], state_codes[existing]
                    )));
                }
                Some(_) => {}
                None => {
                    transitions.insert((from, sym_id), to);
                }
            }
        }
    }

    let states = state_codes
        .iter()
        .zip(&outputs)
        .map(|(code, output)| {
            let output = output.clone().expect("every interned state has an output");
            let decoded_action = data.action_decode.get(&output).copied();
            MachineState {
                members: vec![code.clone()],
                output,
                decoded_action,
            }
        })
        .collect();
    let symbols = symbol_list
        .into_iter()
        .map(|s| SymbolGroup { members: vec![s] })
        .collect();
    Ok(MooreMachine {
        states,
        symbols,
        transitions,
        initial,
    })
}

/// Replays an episode's observation symbols through a machine, returning the
/// visited state sequence (starting state included).
pub fn replay_episode(machine: &MooreMachine, episode: &EpisodeTransitions) -> Result<Vec<usize>> {
    let symbols = machine.symbol_lookup();
    let mut seq = Vec::with_capacity(episode.records.len() + 1);
    let mut cur = machine.initial;
    seq.push(cur);
    for (t, rec) in episode.records.iter().enumerate() {
        let sym = ObsSymbol {
            obs: rec.obs.clone(),
            prev_action: rec.prev_action.clone(),
        };
        let sym_id = *symbols.get(&sym).ok_or_else(|| {
            Error::DataIntegrity(format!(
                "episode {} step {t}: observation symbol not present in the machine",
                episode.episode_id
            ))
        })?;
        cur = machine.step(cur, sym_id).ok_or_else(|| {
            Error::DataIntegrity(format!(
                "episode {} step {t}: no transition from state {cur} on symbol {sym_id}",
                episode.episode_id
            ))
        })?;
        seq.push(cur);
    }
    Ok(seq)
}

/// One replay divergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Divergence {
    pub episode_id: usize,
    pub step: usize,
    pub expected: String,
    pub got: String,
}

/// Result of replaying every episode through the original and reduced
/// machines and comparing emitted action codes step by step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub episodes_checked: usize,
    pub steps_checked: usize,
    pub divergences: Vec<Divergence>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Replay oracle for minimization: both machines must emit identical action
/// code sequences on every recorded episode. Reports the first divergence per
/// episode.
pub fn check_equivalence(
    original: &MooreMachine,
    reduced: &MooreMachine,
    data: &TransitionDataset,
) -> Result<EquivalenceReport> {
    let orig_symbols = original.symbol_lookup();
    let red_symbols = reduced.symbol_lookup();
    let mut report = EquivalenceReport {
        episodes_checked: 0,
        steps_checked: 0,
        divergences: Vec::new(),
    };
    for ep in &data.episodes {
        report.episodes_checked += 1;
        let mut cur_o = original.initial;
        let mut cur_r = reduced.initial;
        for (t, rec) in ep.records.iter().enumerate() {
            report.steps_checked += 1;
            let sym = ObsSymbol {
                obs: rec.obs.clone(),
                prev_action: rec.prev_action.clone(),
            };
            let step_o = orig_symbols
                .get(&sym)
                .and_then(|&s| original.step(cur_o, s));
            let step_r = red_symbols.get(&sym).and_then(|&s| reduced.step(cur_r, s));
            match (step_o, step_r) {
                (Some(no), Some(nr)) => {
                    let out_o = &original.states[no].output;
                    let out_r = &reduced.states[nr].output;
                    if out_o != out_r {
                        report.divergences.push(Divergence {
                            episode_id: ep.episode_id,
                            step: t,
                            expected: out_o.compact(),
                            got: out_r.compact(),
                        });
                        break;
                    }
                    if *out_o != rec.action {
                        report.divergences.push(Divergence {
                            episode_id: ep.episode_id,
                            step: t,
                            expected: rec.action.compact(),
                            got: out_o.compact(),
                        });
                        break;
                    }
                    cur_o = no;
                    cur_r = nr;
                }
                _ => {
                    report.divergences.push(Divergence {
                        episode_id: ep.episode_id,
                        step: t,
                        expected: "defined transition".into(),
                        got: format!("original {:?}, reduced {:?}", step_o.is_some(), step_r.is_some()),
                    });
                    break;
                }
            }
        }
    }
    Ok(report)
}

/// Reduces the machine: states are grouped by a minimal closed cover of the
/// compatibility relation (exact branch-and-bound when the number of
/// compatibles is within the configured limit, greedy with closure repair
/// otherwise), then observation symbols with identical transition columns on
/// the merged states are grouped.
pub fn minimize_pes(machine: &MooreMachine, opts: &MinimizeOptions) -> Result<(MooreMachine, MinimizeStats)> {
    minimize::minimize(machine, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(s: &str) -> TernaryCode {
        TernaryCode::new(
            s.chars()
                .map(|c| match c {
                    '+' => 1,
                    '-' => -1,
                    _ => 0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn rec(h: &str, o: &str, pa: Option<&str>, a: &str, nh: &str) -> TransitionRecord {
        TransitionRecord {
            hidden: code(h),
            obs: code(o),
            prev_action: pa.map(code),
            action: code(a),
            next_hidden: code(nh),
        }
    }

    fn dataset(episodes: Vec<Vec<TransitionRecord>>) -> TransitionDataset {
        TransitionDataset {
            episodes: episodes
                .into_iter()
                .enumerate()
                .map(|(episode_id, records)| EpisodeTransitions {
                    episode_id,
                    records,
                })
                .collect(),
            initial_hidden: code("00"),
            initial_output: code("0"),
            action_decode: BTreeMap::new(),
        }
    }

    #[test]
    fn builds_states_and_transitions_as_witnessed() {
        // One episode visiting hidden codes 00 -> ++ -> ++ -> 00.
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "+", "++"),
            rec("++", "-0", Some("+"), "0", "00"),
        ]]);
        let m = build_mmn(&data).unwrap();
        assert_eq!(m.num_states(), 2);
        assert_eq!(m.num_symbols(), 3);
        assert_eq!(m.transitions.len(), 3);
        assert_eq!(m.initial, 0);
        assert_eq!(m.states[0].output, code("0"));
        assert_eq!(m.states[1].output, code("+"));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = dataset(vec![]);
        assert!(matches!(build_mmn(&data), Err(Error::DataIntegrity(_))));
        let data = dataset(vec![vec![]]);
        assert!(matches!(build_mmn(&data), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn output_conflict_is_reported_with_offenders() {
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "+", "00"),
        ]]);
        // Initial output is "0" but the revisit emits "+".
        let err = build_mmn(&data).unwrap_err();
        match err {
            Error::DataIntegrity(msg) => assert!(msg.contains("output conflict"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nondeterministic_transition_is_reported() {
        let data = dataset(vec![
            vec![rec("00", "+0", None, "+", "++")],
            vec![rec("00", "+0", None, "+", "--")],
        ]);
        let err = build_mmn(&data).unwrap_err();
        match err {
            Error::DataIntegrity(msg) => assert!(msg.contains("nondeterministic"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn broken_chain_is_rejected() {
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("--", "0+", Some("+"), "+", "00"),
        ]]);
        assert!(matches!(data.validate(), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn episode_order_does_not_change_the_canonical_machine() {
        let ep_a = vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "-", "--"),
        ];
        let ep_b = vec![
            rec("00", "-0", None, "+", "++"),
            rec("++", "00", Some("+"), "0", "00"),
        ];
        let m1 = build_mmn(&dataset(vec![ep_a.clone(), ep_b.clone()])).unwrap();
        let m2 = build_mmn(&dataset(vec![ep_b, ep_a])).unwrap();
        assert_eq!(m1.canonical_signature(), m2.canonical_signature());
    }

    #[test]
    fn replay_follows_recorded_paths() {
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "+", "++"),
            rec("++", "-0", Some("+"), "0", "00"),
        ]]);
        let m = build_mmn(&data).unwrap();
        let seq = replay_episode(&m, &data.episodes[0]).unwrap();
        assert_eq!(seq, vec![0, 1, 1, 0]);
    }

    #[test]
    fn equivalence_detects_a_corrupted_transition() {
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "-", "--"),
            rec("--", "-0", Some("-"), "+", "++"),
        ]]);
        let m = build_mmn(&data).unwrap();
        let ok = check_equivalence(&m, &m, &data).unwrap();
        assert!(ok.passed());
        assert_eq!(ok.steps_checked, 3);

        let mut corrupted = m.clone();
        // Redirect the second transition to a state with a different output.
        let key = (1usize, 1usize);
        assert!(corrupted.transitions.contains_key(&key));
        corrupted.transitions.insert(key, 1);
        let bad = check_equivalence(&m, &corrupted, &data).unwrap();
        assert!(!bad.passed());
        assert_eq!(bad.divergences[0].step, 1);
        assert_eq!(bad.divergences[0].episode_id, 0);
    }

    #[test]
    fn dot_export_mentions_every_state() {
        let data = dataset(vec![vec![
            rec("00", "+0", None, "+", "++"),
            rec("++", "0+", Some("+"), "0", "00"),
        ]]);
        let m = build_mmn(&data).unwrap();
        let dot = m.to_dot([2.0; 3], 0.9);
        assert!(dot.contains("digraph"));
        assert!(dot.contains("s0"));
        assert!(dot.contains("s1"));
        assert!(dot.contains("->"));
    }
}
