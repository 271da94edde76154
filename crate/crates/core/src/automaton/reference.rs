//! Exhaustive reference implementations used to cross-check the minimizer,
//! plus a random-machine generator for those checks. Deliberately dumb and
//! independent of the production code path: compatibility is computed by
//! whole-matrix refinement, and the minimal closed cover is found by
//! enumerating covers by size.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::minimize::PartialMachine;

/// Random incompletely specified machine. Transition density is the
/// probability that each (state, symbol) pair is defined.
pub fn random_machine(
    seed: u64,
    max_states: usize,
    max_symbols: usize,
    max_outputs: usize,
    density: f64,
) -> PartialMachine {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let num_states = rng.gen_range(2..=max_states.max(2));
    let num_symbols = rng.gen_range(1..=max_symbols.max(1));
    let num_outputs = rng.gen_range(1..=max_outputs.max(1));
    let outputs = (0..num_states)
        .map(|_| rng.gen_range(0..num_outputs) as u32)
        .collect();
    let mut transitions = std::collections::BTreeMap::new();
    for s in 0..num_states {
        for sym in 0..num_symbols {
            if rng.gen_bool(density) {
                transitions.insert((s, sym), rng.gen_range(0..num_states));
            }
        }
    }
    PartialMachine {
        num_states,
        num_symbols,
        outputs,
        transitions,
    }
}

/// Pairwise compatibility by fixpoint refinement of the full matrix.
pub fn compatibility_matrix(pm: &PartialMachine) -> Vec<Vec<bool>> {
    let m = pm.num_states;
    let mut compat = vec![vec![false; m]; m];
    for p in 0..m {
        for q in 0..m {
            compat[p][q] = pm.outputs[p] == pm.outputs[q];
        }
    }
    loop {
        let mut changed = false;
        for p in 0..m {
            for q in 0..m {
                if !compat[p][q] {
                    continue;
                }
                for sym in 0..pm.num_symbols {
                    if let (Some(np), Some(nq)) = (pm.next(p, sym), pm.next(q, sym)) {
                        if !compat[np][nq] {
                            compat[p][q] = false;
                            changed = true;
                            break;
                        }
                    }
                }
            }
        }
        if !changed {
            return compat;
        }
    }
}

fn all_compatible_subsets(pm: &PartialMachine) -> Vec<u32> {
    let compat = compatibility_matrix(pm);
    let m = pm.num_states;
    let mut subsets = Vec::new();
    for mask in 1u32..(1 << m) {
        let members: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let ok = members
            .iter()
            .enumerate()
            .all(|(i, &p)| members[i + 1..].iter().all(|&q| compat[p][q]));
        if ok {
            subsets.push(mask);
        }
    }
    subsets
}

fn image_mask(pm: &PartialMachine, class_mask: u32, symbol: usize) -> u32 {
    let mut image = 0u32;
    for s in 0..pm.num_states {
        if class_mask & (1 << s) != 0 {
            if let Some(n) = pm.next(s, symbol) {
                image |= 1 << n;
            }
        }
    }
    image
}

fn cover_is_valid(pm: &PartialMachine, chosen: &[u32]) -> bool {
    let full = (1u32 << pm.num_states) - 1;
    let union = chosen.iter().fold(0u32, |acc, &c| acc | c);
    if union != full {
        return false;
    }
    for &c in chosen {
        for sym in 0..pm.num_symbols {
            let image = image_mask(pm, c, sym);
            if image == 0 {
                continue;
            }
            if !chosen.iter().any(|&d| image & !d == 0) {
                return false;
            }
        }
    }
    true
}

/// Smallest closed cover by straight enumeration of compatible-set
/// combinations of increasing size. Only for machines of at most ~6 states.
pub fn brute_force_minimal_cover_size(pm: &PartialMachine) -> usize {
    assert!(pm.num_states <= 8, "brute force is exponential in states");
    let compatibles = all_compatible_subsets(pm);
    for k in 1..=pm.num_states {
        let mut picked = Vec::with_capacity(k);
        if choose(&compatibles, 0, k, &mut picked, &mut |chosen| {
            cover_is_valid(pm, chosen)
        }) {
            return k;
        }
    }
    pm.num_states
}

fn choose(
    items: &[u32],
    start: usize,
    k: usize,
    picked: &mut Vec<u32>,
    check: &mut impl FnMut(&[u32]) -> bool,
) -> bool {
    if k == 0 {
        return check(picked);
    }
    for i in start..items.len() {
        if items.len() - i < k {
            break;
        }
        picked.push(items[i]);
        if choose(items, i + 1, k - 1, picked, check) {
            return true;
        }
        picked.pop();
    }
    false
}

/// Validity check for a class list produced by the production minimizer.
pub fn is_closed_cover(pm: &PartialMachine, classes: &[Vec<u32>]) -> bool {
    assert!(pm.num_states <= 32);
    let masks: Vec<u32> = classes
        .iter()
        .map(|c| c.iter().fold(0u32, |acc, &s| acc | 1 << s))
        .collect();
    cover_is_valid(pm, &masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_output_machine_collapses_to_one_class() {
        let pm = random_machine(3, 5, 3, 1, 0.8);
        // All outputs equal: the full state set is compatible and closed.
        assert_eq!(brute_force_minimal_cover_size(&pm), 1);
    }

    #[test]
    fn singleton_cover_is_always_valid() {
        let pm = random_machine(11, 6, 4, 3, 0.5);
        let singles: Vec<Vec<u32>> = (0..pm.num_states as u32).map(|s| vec![s]).collect();
        assert!(is_closed_cover(&pm, &singles));
    }
}
