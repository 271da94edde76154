//! Attention-based abstraction of the reduced machine: key states are the
//! reduced states visited by at least a threshold fraction of episodes, key
//! transitions are witnessed relay paths between them, and per-episode key
//! visit sequences are scanned for trailing cyclic patterns and checked for
//! synchronization with the driving disturbances.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::automaton::{replay_episode, MooreMachine, TransitionDataset};
use crate::error::{Error, Result};
use crate::sim::{disturbance_force, PlatformModel, Trajectory};

/// Distinct-episode visit counts per reduced state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionTable {
    pub counts: BTreeMap<usize, usize>,
    pub total_episodes: usize,
}

/// Counts, for every reduced state, the number of distinct episodes whose
/// replay visits it. Repeated visits within one episode count once.
pub fn attention_counts(machine: &MooreMachine, data: &TransitionDataset) -> Result<AttentionTable> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for ep in &data.episodes {
        let seq = replay_episode(machine, ep)?;
        let visited: BTreeSet<usize> = seq.into_iter().collect();
        for s in visited {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    Ok(AttentionTable {
        counts,
        total_episodes: data.episodes.len(),
    })
}

/// States with attention of at least `ceil(threshold * total_episodes)`. The
/// machine's initial state is always included: every episode starts there.
pub fn extract_key_states(
    table: &AttentionTable,
    threshold: f64,
    initial: usize,
) -> Result<BTreeSet<usize>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "attention threshold must be in (0, 1], got {threshold}"
        )));
    }
    let cutoff = (threshold * table.total_episodes as f64).ceil() as usize;
    let mut keys: BTreeSet<usize> = table
        .counts
        .iter()
        .filter(|(_, &c)| c >= cutoff)
        .map(|(&s, _)| s)
        .collect();
    keys.insert(initial);
    Ok(keys)
}

/// One visit to a key state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyVisit {
    pub state: usize,
    /// Step index whose transition entered the state; -1 for the start state.
    pub entry_step: i64,
    /// Number of relay (non-key) states crossed since the previous key visit.
    pub relay_len: usize,
}

/// Key-visit projection of one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeProjection {
    pub episode_id: usize,
    pub visits: Vec<KeyVisit>,
    /// False when the episode never touches a key state.
    pub covered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmmnState {
    pub state: usize,
    pub output: String,
    pub decoded_action: Option<[f64; 3]>,
    pub attention: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeWitness {
    pub episode_id: usize,
    pub entry_step: i64,
    pub relay_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KmmnEdge {
    pub from: usize,
    pub to: usize,
    pub witnesses: Vec<EdgeWitness>,
}

/// The key Moore machine network: key states plus deduplicated concatenated
/// transitions, with the per-episode projections they were built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kmmn {
    pub key_states: Vec<KmmnState>,
    pub edges: Vec<KmmnEdge>,
    pub initial: usize,
    pub episodes: Vec<EpisodeProjection>,
    pub uncovered_episodes: Vec<usize>,
}

/// Projects each episode's reduced-state sequence onto the key set and builds
/// edges from consecutive key visits. Consecutive repeats of the same reduced
/// state are collapsed first, so a visit means an entry.
pub fn build_kmmn(
    machine: &MooreMachine,
    keys: &BTreeSet<usize>,
    table: &AttentionTable,
    data: &TransitionDataset,
) -> Result<Kmmn> {
    if keys.is_empty() {
        return Err(Error::Config("key state set is empty".into()));
    }
    let mut edges: BTreeMap<(usize, usize), Vec<EdgeWitness>> = BTreeMap::new();
    let mut episodes = Vec::with_capacity(data.episodes.len());
    let mut uncovered = Vec::new();
    for ep in &data.episodes {
        let seq = replay_episode(machine, ep)?;
        // Entries: collapse consecutive duplicates, keeping the step index of
        // each entry (position i in seq is the state after record i-1).
        let mut entries: Vec<(usize, i64)> = Vec::new();
        for (i, &s) in seq.iter().enumerate() {
            if entries.last().map(|&(last, _)| last != s).unwrap_or(true) {
                entries.push((s, i as i64 - 1));
            }
        }
        let mut visits: Vec<KeyVisit> = Vec::new();
        let mut relay_since = 0usize;
        for (s, entry_step) in entries {
            if keys.contains(&s) {
                visits.push(KeyVisit {
                    state: s,
                    entry_step,
                    relay_len: relay_since,
                });
                relay_since = 0;
            } else {
                relay_since += 1;
            }
        }
        for w in visits.windows(2) {
            edges
                .entry((w[0].state, w[1].state))
                .or_default()
                .push(EdgeWitness {
                    episode_id: ep.episode_id,
                    entry_step: w[1].entry_step,
                    relay_len: w[1].relay_len,
                });
        }
        let covered = !visits.is_empty();
        if !covered {
            uncovered.push(ep.episode_id);
        }
        episodes.push(EpisodeProjection {
            episode_id: ep.episode_id,
            visits,
            covered,
        });
    }
    let key_states = keys
        .iter()
        .map(|&s| KmmnState {
            state: s,
            output: machine.states[s].output.compact(),
            decoded_action: machine.states[s].decoded_action,
            attention: table.counts.get(&s).copied().unwrap_or(0),
        })
        .collect();
    Ok(Kmmn {
        key_states,
        edges: edges
            .into_iter()
            .map(|((from, to), witnesses)| KmmnEdge {
                from,
                to,
                witnesses,
            })
            .collect(),
        initial: machine.initial,
        episodes,
        uncovered_episodes: uncovered,
    })
}

/// A trailing cyclic pattern in a key-visit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedCycle {
    pub states: Vec<usize>,
    pub entry_index: usize,
    pub repetitions: usize,
}

/// Cycle scan result for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleReport {
    pub episode_id: usize,
    pub visit_states: Vec<usize>,
    pub cycle: Option<DetectedCycle>,
    /// Step at which the detected cycle was entered.
    pub entry_step: Option<i64>,
    /// Cycles that ran earlier in the episode before the final one.
    pub earlier_candidates: Vec<DetectedCycle>,
}

fn find_suffix_cycle(seq: &[usize]) -> Option<DetectedCycle> {
    let len = seq.len();
    for period in 2..=len / 2 {
        for start in 0..=len.saturating_sub(2 * period) {
            if (len - start) % period != 0 {
                continue;
            }
            if (start + period..len).all(|k| seq[k] == seq[k - period]) {
                return Some(DetectedCycle {
                    states: seq[start..start + period].to_vec(),
                    entry_index: start,
                    repetitions: (len - start) / period,
                });
            }
        }
    }
    None
}

/// Finds the smallest period p >= 2 and earliest entry index such that the
/// suffix from there is a whole number (>= 2) of repetitions of its first p
/// elements. Earlier cyclic segments in the remaining prefix are reported as
/// candidates.
pub fn detect_cycles(visit_seq: &[usize]) -> (Option<DetectedCycle>, Vec<DetectedCycle>) {
    let cycle = find_suffix_cycle(visit_seq);
    let mut earlier = Vec::new();
    let mut prefix_end = cycle.as_ref().map(|c| c.entry_index).unwrap_or(0);
    while prefix_end >= 4 {
        match find_suffix_cycle(&visit_seq[..prefix_end]) {
            Some(c) => {
                prefix_end = c.entry_index;
                earlier.push(c);
            }
            None => break,
        }
    }
    (cycle, earlier)
}

/// Runs the cycle scan over every projected episode.
pub fn cycle_reports(kmmn: &Kmmn) -> Vec<CycleReport> {
    kmmn.episodes
        .iter()
        .map(|ep| {
            let states: Vec<usize> = ep.visits.iter().map(|v| v.state).collect();
            let (cycle, earlier_candidates) = detect_cycles(&states);
            let entry_step = cycle
                .as_ref()
                .map(|c| ep.visits[c.entry_index].entry_step);
            CycleReport {
                episode_id: ep.episode_id,
                visit_states: states,
                cycle,
                entry_step,
                earlier_candidates,
            }
        })
        .collect()
}

/// One key-state entry event scored against the disturbance at that step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncEvent {
    pub episode_id: usize,
    pub step: usize,
    pub state: usize,
    pub decoded_action: [f64; 3],
    pub disturbance: [f64; 3],
    /// |d_i| / u_upper_i per axis.
    pub ratios: [f64; 3],
    /// Axes with |d_i| >= cutoff * u_upper_i.
    pub qualifying_axes: Vec<usize>,
    /// Qualifying axes where the action sign opposes the disturbance sign.
    pub opposing_axes: Vec<usize>,
    /// Every qualifying axis is opposed by a near-saturated action component.
    pub all_qualifying_opposed_saturated: bool,
}

/// Aggregate synchronization statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncReport {
    pub events: Vec<SyncEvent>,
    pub total_events: usize,
    /// Fraction of events with at least one qualifying axis.
    pub frac_near_saturation: f64,
    /// Among qualifying events: some qualifying axis is sign-opposed.
    pub frac_opposed_some: f64,
    /// Among qualifying events: every qualifying axis is sign-opposed with a
    /// near-saturated action component.
    pub frac_opposed_all_saturated: f64,
}

/// Scores key-state entry events of the given projections against the
/// disturbances of their episodes. The start-state visit precedes the first
/// step and carries no applied action, so it is not an event; an event with
/// zero disturbance has no qualifying axes and scores vacuously.
pub fn synchronization_report(
    kmmn: &Kmmn,
    machine: &MooreMachine,
    trajectories: &[Trajectory],
    model: &PlatformModel,
    episode_filter: Option<&BTreeSet<usize>>,
    saturation_cutoff: f64,
) -> Result<SyncReport> {
    let mut events = Vec::new();
    for ep in &kmmn.episodes {
        if let Some(filter) = episode_filter {
            if !filter.contains(&ep.episode_id) {
                continue;
            }
        }
        let traj = trajectories.get(ep.episode_id).ok_or_else(|| {
            Error::Config(format!("no trajectory for episode {}", ep.episode_id))
        })?;
        for visit in &ep.visits {
            if visit.entry_step < 0 {
                continue;
            }
            let step = visit.entry_step as usize;
            let action = machine.states[visit.state]
                .decoded_action
                .ok_or_else(|| {
                    Error::DataIntegrity(format!(
                        "key state {} has no decoded action",
                        visit.state
                    ))
                })?;
            let d = disturbance_force(&traj.pattern, step, model.dt);
            let mut ratios = [0.0; 3];
            let mut qualifying = Vec::new();
            let mut opposing = Vec::new();
            let mut all_opposed_saturated = true;
            for i in 0..3 {
                ratios[i] = d[i].abs() / model.control_upper[i];
                if ratios[i] >= saturation_cutoff {
                    qualifying.push(i);
                    let opposed = action[i] * d[i] < 0.0;
                    if opposed {
                        opposing.push(i);
                    }
                    let saturated = action[i].abs() >= saturation_cutoff * model.control_upper[i];
                    if !(opposed && saturated) {
                        all_opposed_saturated = false;
                    }
                }
            }
            events.push(SyncEvent {
                episode_id: ep.episode_id,
                step,
                state: visit.state,
                decoded_action: action,
                disturbance: d,
                ratios,
                qualifying_axes: qualifying,
                opposing_axes: opposing,
                all_qualifying_opposed_saturated: all_opposed_saturated,
            });
        }
    }
    let total = events.len();
    let near: Vec<&SyncEvent> = events.iter().filter(|e| !e.qualifying_axes.is_empty()).collect();
    let frac_near_saturation = if total == 0 {
        0.0
    } else {
        near.len() as f64 / total as f64
    };
    let frac_opposed_some = if near.is_empty() {
        0.0
    } else {
        near.iter().filter(|e| !e.opposing_axes.is_empty()).count() as f64 / near.len() as f64
    };
    let frac_opposed_all_saturated = if near.is_empty() {
        0.0
    } else {
        near.iter()
            .filter(|e| e.all_qualifying_opposed_saturated)
            .count() as f64
            / near.len() as f64
    };
    Ok(SyncReport {
        events,
        total_events: total,
        frac_near_saturation,
        frac_opposed_some,
        frac_opposed_all_saturated,
    })
}

/// Graphviz export of the key machine. Edges on the detected cycles of any
/// episode are drawn bold green.
pub fn kmmn_to_dot(kmmn: &Kmmn, cycles: &[CycleReport], control_upper: [f64; 3]) -> String {
    use std::fmt::Write;
    let mut cycle_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for report in cycles {
        if let Some(c) = &report.cycle {
            for i in 0..c.states.len() {
                let from = c.states[i];
                let to = c.states[(i + 1) % c.states.len()];
                cycle_edges.insert((from, to));
            }
        }
    }
    let mut out = String::new();
    writeln!(out, "digraph kmmn {{").unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  node [shape=circle fontsize=10];").unwrap();
    for ks in &kmmn.key_states {
        let action = ks
            .decoded_action
            .map(|a| format!("[{:.2}, {:.2}, {:.2}]", a[0], a[1], a[2]))
            .unwrap_or_else(|| ks.output.clone());
        let saturated = ks.decoded_action.map_or(false, |a| {
            (0..3).all(|k| a[k].abs() >= 0.9 * control_upper[k])
        });
        let style = if saturated {
            " style=filled fillcolor=lightsalmon"
        } else {
            ""
        };
        let shape = if ks.state == kmmn.initial {
            " shape=doublecircle"
        } else {
            ""
        };
        writeln!(
            out,
            "  k{} [label=\"k{}\\nattn {}\\n{action}\"{style}{shape}];",
            ks.state, ks.state, ks.attention
        )
        .unwrap();
    }
    for e in &kmmn.edges {
        let style = if cycle_edges.contains(&(e.from, e.to)) {
            " color=green penwidth=2.5"
        } else {
            ""
        };
        writeln!(
            out,
            "  k{} -> k{} [label=\"{}\" fontsize=8{style}];",
            e.from,
            e.to,
            e.witnesses.len()
        )
        .unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{build_mmn, EpisodeTransitions, TransitionRecord};
    use crate::nn::TernaryCode;

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

    fn two_episode_data() -> TransitionDataset {
        // Episode 0: 00 -> aa -> bb ; episode 1: 00 -> aa -> cc.
        // The shared states are 00 (initial) and aa.
        TransitionDataset {
            episodes: vec![
                EpisodeTransitions {
                    episode_id: 0,
                    records: vec![
                        rec("00", "+0", None, "+", "++"),
                        rec("++", "0+", Some("+"), "-", "--"),
                    ],
                },
                EpisodeTransitions {
                    episode_id: 1,
                    records: vec![
                        rec("00", "+0", None, "+", "++"),
                        rec("++", "00", Some("+"), "0", "0+"),
                    ],
                },
            ],
            initial_hidden: code("00"),
            initial_output: code("0"),
            action_decode: std::collections::BTreeMap::new(),
        }
    }

    #[test]
    fn attention_counts_distinct_episodes() {
        let data = two_episode_data();
        let m = build_mmn(&data).unwrap();
        let table = attention_counts(&m, &data).unwrap();
        assert_eq!(table.total_episodes, 2);
        // Initial and the shared state have attention 2, the leaves 1.
        assert_eq!(table.counts[&0], 2);
        assert_eq!(table.counts[&1], 2);
        let ones: Vec<usize> = table
            .counts
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&s, _)| s)
            .collect();
        assert_eq!(ones.len(), 2);
    }

    #[test]
    fn repeated_visits_in_one_episode_count_once() {
        let data = TransitionDataset {
            episodes: vec![EpisodeTransitions {
                episode_id: 0,
                records: vec![
                    rec("00", "+0", None, "+", "++"),
                    rec("++", "0+", Some("+"), "0", "00"),
                    rec("00", "-0", Some("0"), "+", "++"),
                ],
            }],
            initial_hidden: code("00"),
            initial_output: code("0"),
            action_decode: std::collections::BTreeMap::new(),
        };
        let m = build_mmn(&data).unwrap();
        let table = attention_counts(&m, &data).unwrap();
        assert_eq!(table.counts[&0], 1);
        assert_eq!(table.counts[&1], 1);
    }

    #[test]
    fn key_state_threshold_arithmetic() {
        let table = AttentionTable {
            counts: [(0usize, 20usize), (1, 20), (2, 18), (3, 5)].into_iter().collect(),
            total_episodes: 20,
        };
        // ceil(0.85 * 20) = 17.
        let keys = extract_key_states(&table, 0.85, 0).unwrap();
        assert_eq!(keys, [0, 1, 2].into_iter().collect());
        let unanimity = extract_key_states(&table, 1.0, 0).unwrap();
        assert_eq!(unanimity, [0, 1].into_iter().collect());
        assert!(extract_key_states(&table, 1.01, 0).is_err());
        assert!(extract_key_states(&table, 0.0, 0).is_err());
        // Initial joins even below the cutoff.
        let keys = extract_key_states(&table, 0.85, 3).unwrap();
        assert!(keys.contains(&3));
    }

    #[test]
    fn projection_edges_match_hand_counts() {
        // Key visit sequence 0, 2, 4, 2, 4 gives edges 0->2 once, 2->4 twice,
        // 4->2 once.
        let visits = [0usize, 2, 4, 2, 4];
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for w in visits.windows(2) {
            *edges.entry((w[0], w[1])).or_insert(0) += 1;
        }
        assert_eq!(edges[&(0, 2)], 1);
        assert_eq!(edges[&(2, 4)], 2);
        assert_eq!(edges[&(4, 2)], 1);

        // The same structure through the real projection: all states are key.
        let data = two_episode_data();
        let m = build_mmn(&data).unwrap();
        let table = attention_counts(&m, &data).unwrap();
        let keys: BTreeSet<usize> = (0..m.num_states()).collect();
        let kmmn = build_kmmn(&m, &keys, &table, &data).unwrap();
        // Degenerate projection: edges equal single-step transitions witnessed.
        let single_step: usize = kmmn.edges.iter().map(|e| e.witnesses.len()).sum();
        assert_eq!(single_step, data.total_steps());
    }

    #[test]
    fn keys_only_initial_gives_no_edges_and_full_coverage() {
        let data = two_episode_data();
        let m = build_mmn(&data).unwrap();
        let table = attention_counts(&m, &data).unwrap();
        let keys: BTreeSet<usize> = [m.initial].into_iter().collect();
        let kmmn = build_kmmn(&m, &keys, &table, &data).unwrap();
        assert!(kmmn.edges.is_empty());
        assert!(kmmn.uncovered_episodes.is_empty());
        for ep in &kmmn.episodes {
            assert!(ep.covered);
            assert_eq!(ep.visits[0].entry_step, -1);
        }
    }

    #[test]
    fn cycle_detection_reference_sequences() {
        let (c, _) = detect_cycles(&[0, 3, 2, 4, 2, 4, 2, 4]);
        let c = c.unwrap();
        assert_eq!(c.states, vec![2, 4]);
        assert_eq!(c.entry_index, 2);
        assert_eq!(c.repetitions, 3);

        let (none, _) = detect_cycles(&[0, 1]);
        assert!(none.is_none());

        let (c, _) = detect_cycles(&[0, 5, 3, 4, 5, 3, 4, 5, 3, 4]);
        let c = c.unwrap();
        assert_eq!(c.states, vec![5, 3, 4]);
        assert_eq!(c.entry_index, 1);
        assert_eq!(c.repetitions, 3);
    }

    #[test]
    fn cycle_detection_is_invariant_under_relabeling() {
        let seq = [0, 3, 2, 4, 2, 4, 2, 4];
        let relabel = |s: usize| s * 7 + 13;
        let mapped: Vec<usize> = seq.iter().map(|&s| relabel(s)).collect();
        let (a, _) = detect_cycles(&seq);
        let (b, _) = detect_cycles(&mapped);
        let a = a.unwrap();
        let b = b.unwrap();
        assert_eq!(a.entry_index, b.entry_index);
        assert_eq!(a.repetitions, b.repetitions);
        assert_eq!(
            a.states.iter().map(|&s| relabel(s)).collect::<Vec<_>>(),
            b.states
        );
    }

    #[test]
    fn trailing_block_repetitions_are_always_found() {
        // Any sequence ending with >= 2 exact repetitions of a block yields a
        // cycle of period at most the block length.
        let prefix = [9usize, 8, 7];
        let block = [1usize, 2, 5];
        for reps in 2..5 {
            let mut seq = prefix.to_vec();
            for _ in 0..reps {
                seq.extend_from_slice(&block);
            }
            let (c, _) = detect_cycles(&seq);
            let c = c.unwrap();
            assert!(c.states.len() <= block.len());
            assert!(c.repetitions >= 2);
        }
    }

    #[test]
    fn two_successive_cycles_report_the_final_one_and_the_earlier_candidate() {
        // Entered cycle (1,2) twice, then settled in (3,4) three times.
        let seq = [0, 1, 2, 1, 2, 3, 4, 3, 4, 3, 4];
        let (c, earlier) = detect_cycles(&seq);
        let c = c.unwrap();
        assert_eq!(c.states, vec![3, 4]);
        assert_eq!(earlier.len(), 1);
        assert_eq!(earlier[0].states, vec![1, 2]);
    }
}
